//! Hashing, secp256k1 keys, deterministic ECDSA and hybrid encryption of
//! user information.

use std::fmt;

use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use k256::ecdsa::signature::hazmat::{PrehashSigner, PrehashVerifier};
use k256::elliptic_curve::ops::Reduce;
use k256::elliptic_curve::sec1::ToEncodedPoint;
use k256::{FieldBytes, NonZeroScalar, ProjectivePoint, Scalar, U256};
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("invalid public key encoding")]
    InvalidPublicKey,
    #[error("ciphertext failed authentication")]
    Authentication,
}

/// SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; 32]
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let bytes = hex::decode(s).ok()?;
        Some(Digest(bytes.try_into().ok()?))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

/// 20-byte identifier of a public key or a resource label.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Address> {
        let bytes = hex::decode(s).ok()?;
        Some(Address(bytes.try_into().ok()?))
    }

    /// Address of an abstract resource (VM, cluster, network) named by `label`.
    pub fn of_resource(label: &str) -> Address {
        truncate(&hash(label.as_bytes()))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

macro_rules! hex_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                <$ty>::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad hex length"))
            }
        }
    };
}

hex_serde!(Digest);
hex_serde!(Address);
hex_serde!(PublicKey);

/// Compressed SEC1 public key. May hold an invalid encoding when decoded
/// from untrusted bytes; validity is checked at use.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 33]);

impl PublicKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<PublicKey> {
        let bytes = hex::decode(s).ok()?;
        Some(PublicKey(bytes.try_into().ok()?))
    }

    fn from_point(p: &ProjectivePoint) -> PublicKey {
        let enc = p.to_affine().to_encoded_point(true);
        let mut out = [0u8; 33];
        out.copy_from_slice(enc.as_bytes());
        PublicKey(out)
    }

    pub fn to_point(&self) -> Option<ProjectivePoint> {
        k256::PublicKey::from_sec1_bytes(&self.0)
            .ok()
            .map(|pk| pk.to_projective())
    }

    pub fn address(&self) -> Address {
        truncate(&hash(&self.0))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &self.to_hex()[..18])
    }
}

/// 64-byte `r || s`, big-endian.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

#[derive(Clone)]
pub struct KeyPair {
    secret: NonZeroScalar,
    public: PublicKey,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl PartialEq for KeyPair {
    fn eq(&self, other: &Self) -> bool {
        self.private_key_bytes() == other.private_key_bytes()
    }
}

impl Eq for KeyPair {}

impl KeyPair {
    pub fn from_scalar(secret: NonZeroScalar) -> Self {
        let public = PublicKey::from_point(&(ProjectivePoint::GENERATOR * *secret));
        KeyPair { secret, public }
    }

    pub fn public_key(&self) -> PublicKey {
        self.public
    }

    pub fn address(&self) -> Address {
        self.public.address()
    }

    pub fn private_key_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes().into()
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        generate_keypair(&seed)
    }
}

pub fn hash(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

/// Hash of the concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

fn truncate(d: &Digest) -> Address {
    let mut out = [0u8; 20];
    out.copy_from_slice(&d.0[..20]);
    Address(out)
}

pub fn address_of(pk: &PublicKey) -> Address {
    pk.address()
}

fn scalar_from_bytes(bytes: &[u8; 32]) -> Option<NonZeroScalar> {
    Option::from(NonZeroScalar::from_repr(FieldBytes::from(*bytes)))
}

/// Deterministic key generation. The seed itself is tried as the private
/// scalar first; if it is zero or not below the curve order, `hash(seed ||
/// counter_be32)` is tried for counter = 1, 2, ...
pub fn generate_keypair(seed: &[u8; 32]) -> KeyPair {
    if let Some(s) = scalar_from_bytes(seed) {
        return KeyPair::from_scalar(s);
    }
    let mut counter: u32 = 1;
    loop {
        let candidate = hash_parts(&[seed, &counter.to_be_bytes()]);
        if let Some(s) = scalar_from_bytes(&candidate.0) {
            return KeyPair::from_scalar(s);
        }
        counter += 1;
    }
}

/// Tweak added to the parent scalar for child `index`:
/// `int(hash(parent_pub || index_be32 [|| counter_be32])) mod n`.
pub fn child_tweak(parent_pub: &PublicKey, index: u32, counter: u32) -> Scalar {
    let d = if counter == 0 {
        hash_parts(&[&parent_pub.0, &index.to_be_bytes()])
    } else {
        hash_parts(&[&parent_pub.0, &index.to_be_bytes(), &counter.to_be_bytes()])
    };
    <Scalar as Reduce<U256>>::reduce_bytes(&FieldBytes::from(d.0))
}

/// Non-hardened additive child key: `child = parent + tweak (mod n)`.
pub fn derive_child_key(parent: &KeyPair, index: u32) -> KeyPair {
    let mut counter = 0;
    loop {
        let tweak = child_tweak(&parent.public, index, counter);
        let sum = *parent.secret + tweak;
        if let Some(s) = Option::<NonZeroScalar>::from(NonZeroScalar::new(sum)) {
            return KeyPair::from_scalar(s);
        }
        counter += 1;
    }
}

/// Public-side derivation: `parent_pub + G * tweak`. Matches the public
/// key of `derive_child_key` whenever the first tweak is accepted.
pub fn derive_child_public(parent_pub: &PublicKey, index: u32) -> Option<PublicKey> {
    let p = parent_pub.to_point()?;
    let q = p + ProjectivePoint::GENERATOR * child_tweak(parent_pub, index, 0);
    Some(PublicKey::from_point(&q))
}

/// Deterministic-nonce (RFC 6979) ECDSA over a 32-byte digest.
pub fn sign(key: &KeyPair, msg: &Digest) -> Signature {
    let sk = k256::ecdsa::SigningKey::from(key.secret);
    let sig: k256::ecdsa::Signature = sk.sign_prehash(&msg.0).expect("signing a 32-byte prehash cannot fail");
    let sig = sig.normalize_s().unwrap_or(sig);
    let mut out = [0u8; 64];
    out.copy_from_slice(&sig.to_bytes());
    Signature(out)
}

pub fn verify(pk: &PublicKey, msg: &Digest, sig: &Signature) -> bool {
    let Ok(vk) = k256::ecdsa::VerifyingKey::from_sec1_bytes(&pk.0) else {
        return false;
    };
    let Ok(sig) = k256::ecdsa::Signature::from_slice(&sig.0) else {
        return false;
    };
    // reject the high-s twin so that signatures are not malleable
    if sig.normalize_s().is_some() {
        return false;
    }
    vk.verify_prehash(&msg.0, &sig).is_ok()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    pub ephemeral_pub: PublicKey,
    pub nonce: [u8; 12],
    pub body: Vec<u8>,
    pub tag: [u8; 16],
}

fn shared_key(shared_point: &ProjectivePoint, ephemeral_pub: &PublicKey) -> Key {
    let shared = PublicKey::from_point(shared_point);
    let d = hash_parts(&[b"fedtrust-ecies-v1", &shared.0, &ephemeral_pub.0]);
    Key::from(d.0)
}

/// Ephemeral ECDH on secp256k1, SHA-256 key derivation, ChaCha20-Poly1305.
pub fn encrypt_for<R: RngCore + ?Sized>(
    recipient: &PublicKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<Ciphertext, CryptoError> {
    let point = recipient.to_point().ok_or(CryptoError::InvalidPublicKey)?;
    let eph = KeyPair::random(rng);
    let key = shared_key(&(point * *eph.secret), &eph.public);
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let mut body = plaintext.to_vec();
    let tag = ChaCha20Poly1305::new(&key)
        .encrypt_in_place_detached(Nonce::from_slice(&nonce), &eph.public.0, &mut body)
        .expect("plaintext within AEAD length limits");
    Ok(Ciphertext {
        ephemeral_pub: eph.public,
        nonce,
        body,
        tag: tag.into(),
    })
}

pub fn decrypt(key: &KeyPair, ct: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
    let eph = ct.ephemeral_pub.to_point().ok_or(CryptoError::Authentication)?;
    let sym = shared_key(&(eph * *key.secret), &ct.ephemeral_pub);
    let mut body = ct.body.clone();
    ChaCha20Poly1305::new(&sym)
        .decrypt_in_place_detached(
            Nonce::from_slice(&ct.nonce),
            &ct.ephemeral_pub.0,
            &mut body,
            Tag::from_slice(&ct.tag),
        )
        .map_err(|_| CryptoError::Authentication)?;
    Ok(body)
}
