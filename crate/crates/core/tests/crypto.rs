use std::collections::HashSet;

use fedtrust::crypto::{
    address_of, decrypt, derive_child_key, encrypt_for, generate_keypair, hash, sign, verify, CryptoError, Digest,
    KeyPair, PublicKey, Signature,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};

fn flip(bytes: &mut [u8], bit: usize) {
    bytes[bit / 8] ^= 1 << (bit % 8);
}

#[test]
fn sign_verify_round_trips_and_rejects_single_bit_mutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let other = KeyPair::random(&mut rng);
    for _ in 0..10_000 {
        let k = KeyPair::random(&mut rng);
        let mut m = [0u8; 32];
        rng.fill_bytes(&mut m);
        let msg = Digest(m);
        let sig = sign(&k, &msg);
        let pk = k.public_key();
        assert!(verify(&pk, &msg, &sig));

        let mut bad_msg = msg;
        flip(&mut bad_msg.0, rng.gen_range(0..256));
        assert!(!verify(&pk, &bad_msg, &sig));

        let mut bad_sig = sig;
        flip(&mut bad_sig.0, rng.gen_range(0..512));
        assert!(!verify(&pk, &msg, &bad_sig));

        let mut bad_pk = pk;
        flip(&mut bad_pk.0, rng.gen_range(0..264));
        assert!(!verify(&bad_pk, &msg, &sig));

        assert!(!verify(&other.public_key(), &msg, &sig));
    }
}

#[test]
fn signatures_are_deterministic() {
    let k = generate_keypair(&[9u8; 32]);
    let msg = hash(b"block header");
    assert_eq!(sign(&k, &msg), sign(&k, &msg));
}

#[test]
fn malformed_encodings_do_not_verify() {
    let k = generate_keypair(&[3u8; 32]);
    let msg = hash(b"m");
    let sig = sign(&k, &msg);
    assert!(!verify(&PublicKey([0u8; 33]), &msg, &sig));
    assert!(!verify(&PublicKey([5u8; 33]), &msg, &sig));
    assert!(!verify(&k.public_key(), &msg, &Signature([0u8; 64])));
    assert!(!verify(&k.public_key(), &msg, &Signature([0xff; 64])));
}

#[test]
fn child_derivation_is_injective_over_sixteen_bit_indices() {
    let parent = generate_keypair(&[42u8; 32]);
    let mut seen = HashSet::new();
    for i in 0..(1u32 << 16) {
        assert!(
            seen.insert(derive_child_key(&parent, i).public_key()),
            "collision at index {i}"
        );
    }
    assert_eq!(derive_child_key(&parent, 77), derive_child_key(&parent, 77));
}

#[test]
fn encryption_round_trips_and_cross_keys_fail() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for len in [0usize, 1, 31, 32, 33, 500] {
        let a = KeyPair::random(&mut rng);
        let b = KeyPair::random(&mut rng);
        let mut m = vec![0u8; len];
        rng.fill_bytes(&mut m);
        let c1 = encrypt_for(&a.public_key(), &m, &mut rng).unwrap();
        let c2 = encrypt_for(&a.public_key(), &m, &mut rng).unwrap();
        assert_ne!(c1, c2);
        assert_eq!(decrypt(&a, &c1).unwrap(), m);
        assert_eq!(decrypt(&a, &c2).unwrap(), m);
        assert!(matches!(decrypt(&b, &c1), Err(CryptoError::Authentication)));
        let mut tampered = c1.clone();
        tampered.tag[0] ^= 1;
        assert!(decrypt(&a, &tampered).is_err());
    }
}

#[test]
fn address_is_truncated_sha256_of_compressed_key() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let k = KeyPair::random(&mut rng);
        let pk = k.public_key();
        let full = Sha256::digest(pk.0);
        assert_eq!(address_of(&pk).0[..], full[..20]);
        assert_eq!(k.address(), address_of(&PublicKey(pk.0)));
    }
}

#[test]
fn hash_is_sha256() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for len in 0..200 {
        let mut x = vec![0u8; len];
        rng.fill_bytes(&mut x);
        let h = hash(&x);
        assert_eq!(h.0[..], Sha256::digest(&x)[..]);
        let mut y = x.clone();
        y.push(0);
        assert_ne!(h, hash(&y));
    }
}
