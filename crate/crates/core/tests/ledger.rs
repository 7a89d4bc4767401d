mod common;

use std::sync::Arc;

use common::{key, mine, net, token, token_tx};
use fedtrust::crypto::{Address, Digest};
use fedtrust::fixed::Fixed;
use fedtrust::ledger::store::LedgerFile;
use fedtrust::ledger::{
    build_feedback_tx, build_register_tx, build_token_tx, canonical_serialize, Block, Chain, FeedbackPayload,
    FeedbackRole, LedgerError, Reason, Transaction, TxRefs,
};
use fedtrust::sim::BlockTree;
use fedtrust::state::replay_chain;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn user(i: u8) -> Address {
    Address([i; 20])
}

fn ledger_chain() -> (Chain, common::Net) {
    let n = net(3, &[]);
    (Chain::from_genesis(n.genesis.clone()).unwrap(), n)
}

/// Unsigned block on the ledger level; consensus checks are not involved.
fn child(chain: &Chain, txs: Vec<Transaction>) -> Block {
    Block::candidate(
        &chain.tip().header,
        chain.tip().header.timestamp + 100,
        Fixed::from_f64(0.5),
        txs,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn token_tx_round_trips_through_bytes(
        seed in any::<u64>(),
        nonce in any::<u64>(),
        issued in 0u64..1 << 40,
        life in 1u64..1 << 20,
        privs in prop::collection::vec("[a-z]{1,12}", 0..4),
        profile in prop::collection::vec(any::<u8>(), 0..64),
        res in "[a-z0-9/]{1,16}",
    ) {
        let a = key("rt", 0);
        let b = key("rt", 1);
        let mut r = rng(seed);
        let tkn = fedtrust::ledger::AccessToken::new(
            user(7), a.address(), b.address(), Address::of_resource(&res), privs, issued, issued + life, nonce,
        );
        let tx = build_token_tx(&a, &profile, tkn.resource, &b.public_key(), tkn, TxRefs::default(), &mut r).unwrap();
        let bytes = tx.to_bytes();
        prop_assert_eq!(&bytes, &tx.to_bytes());
        prop_assert_eq!(canonical_serialize(&tx), canonical_serialize(&tx));
        let back = Transaction::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &tx);
        prop_assert!(back.check_intrinsic().is_ok());
        prop_assert_eq!(back.outputs[0].token.compute_id(), back.outputs[0].token.token_id);
    }

    #[test]
    fn feedback_and_register_round_trip(label in 0u8..5, foreign in any::<bool>(), w in 0u64..=1_000_000_000_000) {
        let a = key("rt", 2);
        let role = if foreign { FeedbackRole::Foreign } else { FeedbackRole::Home };
        let f = FeedbackPayload {
            rater: a.address(),
            subject: user(1),
            user: user(2),
            label,
            role,
            token_id: Digest([3; 32]),
        };
        let tx = build_feedback_tx(&a, f, Digest([9; 32]));
        prop_assert_eq!(Transaction::from_bytes(&tx.to_bytes()).unwrap(), tx);
        let reg = build_register_tx(&a, Fixed::from_raw(w), Fixed::ONE, Fixed::from_raw(w), Digest::ZERO);
        prop_assert_eq!(Transaction::from_bytes(&reg.to_bytes()).unwrap(), reg);
    }
}

#[test]
fn nonce_alone_changes_bytes_and_txid() {
    let (_, n) = ledger_chain();
    let (a, b) = (&n.keys[0], &n.keys[1]);
    let t1 = token_tx(a, b, token(a, b, user(1), "vm", 1, 0), &mut rng(1));
    let t2 = token_tx(a, b, token(a, b, user(1), "vm", 2, 0), &mut rng(1));
    assert_ne!(canonical_serialize(&t1), canonical_serialize(&t2));
    assert_ne!(t1.txid, t2.txid);
}

#[test]
fn built_token_tx_validates_and_mismatches_are_errors() {
    let (chain, n) = ledger_chain();
    let (a, b, c) = (&n.keys[0], &n.keys[1], &n.keys[2]);
    let tkn = token(a, b, user(1), "vm", 1, 0);
    let tx = token_tx(a, b, tkn.clone(), &mut rng(2));
    assert!(tx.prev_tx.is_zero());
    assert_eq!(chain.validate_transaction(&tx), Ok(()));
    assert_eq!(tx.inputs.len(), 1);
    assert_eq!(tx.outputs[0].recipient, b.address());
    assert_eq!(tx.outputs[0].token.audience, b.address());

    let wrong_recipient = build_token_tx(
        a,
        b"p",
        tkn.resource,
        &c.public_key(),
        tkn.clone(),
        TxRefs::default(),
        &mut rng(3),
    );
    assert!(matches!(
        wrong_recipient,
        Err(LedgerError::Build(Reason::AudienceMismatch))
    ));
    let wrong_issuer = build_token_tx(
        c,
        b"p",
        tkn.resource,
        &b.public_key(),
        tkn,
        TxRefs::default(),
        &mut rng(3),
    );
    assert!(matches!(wrong_issuer, Err(LedgerError::Build(Reason::IssuerMismatch))));
}

#[test]
fn replayed_token_is_a_duplicate() {
    let (mut chain, n) = ledger_chain();
    let (a, b) = (&n.keys[0], &n.keys[1]);
    let tkn = token(a, b, user(1), "vm", 1, 0);
    let tx = token_tx(a, b, tkn.clone(), &mut rng(4));
    chain.apply_block(child(&chain, vec![tx.clone()])).unwrap();
    assert_eq!(chain.validate_transaction(&tx), Err(Reason::DuplicateTx));
    let again = token_tx(a, b, tkn, &mut rng(5));
    assert_ne!(again.txid, tx.txid);
    assert_eq!(chain.validate_transaction(&again), Err(Reason::DuplicateToken));
    let same_nonce = token_tx(a, b, token(a, b, user(2), "disk", 1, 0), &mut rng(6));
    assert_eq!(chain.validate_transaction(&same_nonce), Err(Reason::DuplicateNonce));
}

#[test]
fn feedback_checks_token_and_participants() {
    let (mut chain, n) = ledger_chain();
    let (a, b, c) = (&n.keys[0], &n.keys[1], &n.keys[2]);
    let tkn = token(a, b, user(1), "vm", 1, 0);
    let fb = |rater: &fedtrust::crypto::KeyPair, subject: Address, role, token_id| {
        build_feedback_tx(
            rater,
            FeedbackPayload {
                rater: rater.address(),
                subject,
                user: user(1),
                label: 3,
                role,
                token_id,
            },
            Digest::ZERO,
        )
    };
    let early = fb(b, a.address(), FeedbackRole::Foreign, tkn.token_id);
    assert_eq!(chain.validate_transaction(&early), Err(Reason::UnknownToken));

    chain
        .apply_block(child(&chain, vec![token_tx(a, b, tkn.clone(), &mut rng(7))]))
        .unwrap();
    assert_eq!(chain.validate_transaction(&early), Ok(()));
    let home = fb(a, b.address(), FeedbackRole::Home, tkn.token_id);
    assert_eq!(chain.validate_transaction(&home), Ok(()));
    let outsider = fb(c, a.address(), FeedbackRole::Foreign, tkn.token_id);
    assert_eq!(chain.validate_transaction(&outsider), Err(Reason::NotParticipant));
    let wrong_role = fb(a, b.address(), FeedbackRole::Foreign, tkn.token_id);
    assert_eq!(chain.validate_transaction(&wrong_role), Err(Reason::NotParticipant));

    chain.apply_block(child(&chain, vec![early])).unwrap();
    let second = build_feedback_tx(
        b,
        FeedbackPayload {
            rater: b.address(),
            subject: a.address(),
            user: user(1),
            label: 0,
            role: FeedbackRole::Foreign,
            token_id: tkn.token_id,
        },
        Digest([1; 32]),
    );
    assert_eq!(chain.validate_transaction(&second), Err(Reason::DuplicateFeedback));
}

#[test]
fn flipped_signature_is_rejected() {
    let (chain, n) = ledger_chain();
    let (a, b) = (&n.keys[0], &n.keys[1]);
    let mut tx = token_tx(a, b, token(a, b, user(1), "vm", 1, 0), &mut rng(8));
    tx.sig.0[40] ^= 0x04;
    assert_eq!(chain.validate_transaction(&tx), Err(Reason::BadSignature));
}

#[test]
fn registration_rules() {
    let (chain, n) = ledger_chain();
    let dup = build_register_tx(&n.keys[1], Fixed::ONE, Fixed::ZERO, Fixed::ONE, Digest::ZERO);
    assert_eq!(chain.validate_transaction(&dup), Err(Reason::DuplicateCsp));
    let newcomer = key("newcomer", 0);
    let over = build_register_tx(
        &newcomer,
        Fixed::from_f64(1.2),
        Fixed::from_f64(0.3),
        Fixed::ONE,
        Digest::ZERO,
    );
    assert_eq!(chain.validate_transaction(&over), Err(Reason::WeightRange));
    let zero = build_register_tx(&newcomer, Fixed::ZERO, Fixed::ZERO, Fixed::ONE, Digest::ZERO);
    assert_eq!(chain.validate_transaction(&zero), Err(Reason::WeightRange));
    let ok = build_register_tx(&newcomer, Fixed::ONE, Fixed::ZERO, Fixed::ONE, Digest::ZERO);
    assert_eq!(chain.validate_transaction(&ok), Ok(()));
}

#[test]
fn unregistered_issuer_and_audience() {
    let (chain, n) = ledger_chain();
    let stranger = key("stranger", 0);
    let b = &n.keys[1];
    let tx = token_tx(&stranger, b, token(&stranger, b, user(1), "vm", 1, 0), &mut rng(9));
    assert_eq!(chain.validate_transaction(&tx), Err(Reason::UnknownIssuer));
    let a = &n.keys[0];
    let tx = token_tx(a, &stranger, token(a, &stranger, user(1), "vm", 1, 0), &mut rng(9));
    assert_eq!(chain.validate_transaction(&tx), Err(Reason::UnknownAudience));
}

#[test]
fn blocks_apply_atomically() {
    let (mut chain, n) = ledger_chain();
    let (a, b, c) = (&n.keys[0], &n.keys[1], &n.keys[2]);
    let txs: Vec<_> = (0..3)
        .map(|i| token_tx(a, b, token(a, b, user(i), "vm", i as u64, 0), &mut rng(10 + i as u64)))
        .collect();
    chain.apply_block(child(&chain, txs.clone())).unwrap();
    assert_eq!(chain.height(), 1);
    assert_eq!(chain.state().token_count(), 3);
    for tx in &txs {
        let id = tx.outputs[0].token.token_id;
        assert_eq!(chain.lookup_token(&id), Some(&tx.outputs[0].token));
        assert_eq!(chain.state().token(&id).unwrap().height, 1);
    }
    assert_eq!(chain.lookup_token(&Digest([0xab; 32])), None);

    let before = chain.state().clone();
    let good = token_tx(c, a, token(c, a, user(9), "vm", 1, 0), &mut rng(20));
    let replay = txs[1].clone();
    let mixed = child(&chain, vec![good.clone(), replay.clone()]);
    let err = chain.apply_block(mixed).unwrap_err();
    assert_eq!(err.reason, Reason::DuplicateTx);
    assert_eq!(err.txid, Some(replay.txid));
    assert_eq!(chain.state(), &before);
    assert_eq!(chain.height(), 1);
    assert!(!chain.state().contains_tx(&good.txid));
}

#[test]
fn wrong_parent_is_a_bad_link() {
    let (mut chain, _) = ledger_chain();
    let mut blk = child(&chain, vec![]);
    blk.header.prev_block = Digest([1; 32]);
    assert_eq!(chain.apply_block(blk).unwrap_err().reason, Reason::BadLink);
    let mut blk = child(&chain, vec![]);
    blk.header.height = 2;
    assert_eq!(chain.apply_block(blk).unwrap_err().reason, Reason::BadLink);
    let mut blk = child(&chain, vec![]);
    blk.header.tx_root = Digest([2; 32]);
    assert_eq!(chain.apply_block(blk).unwrap_err().reason, Reason::BadTxRoot);
}

#[test]
fn token_on_abandoned_fork_is_not_visible() {
    let n = net(3, &[]);
    let (a, b) = (&n.keys[0], &n.keys[1]);
    let tkn = token(a, b, user(1), "vm", 1, 0);
    let tx = token_tx(a, b, tkn.clone(), &mut rng(11));

    let (fork_a, _) = mine(&n.params, &n.snap, &n.keys, vec![tx]);
    let snap_a = n.snap.extend(&n.params, &fork_a).unwrap();
    assert!(snap_a.ledger.token(&tkn.token_id).is_some());

    // a two-block branch without the token, built by some other key
    let others: Vec<_> = n
        .keys
        .iter()
        .filter(|k| k.public_key() != fork_a.header.generator_pub)
        .cloned()
        .collect();
    let (b1, _) = mine(&n.params, &n.snap, &others, vec![]);
    let s1 = n.snap.extend(&n.params, &b1).unwrap();
    let (b2, _) = mine(&n.params, &s1, &n.keys, vec![]);

    let mut tree = BlockTree::new(n.genesis.clone(), n.snap.clone());
    let now = u64::MAX;
    tree.receive(&n.params, Arc::new(fork_a.clone()), now);
    assert!(tree.tip_snapshot().ledger.token(&tkn.token_id).is_some());
    tree.receive(&n.params, Arc::new(b1), now);
    let out = tree.receive(&n.params, Arc::new(b2.clone()), now);
    let change = out.tip_change.expect("longer branch wins");
    assert_eq!(change.reorg_depth, 1);
    assert_eq!(tree.tip(), b2.hash());
    assert!(tree.tip_snapshot().ledger.token(&tkn.token_id).is_none());
    assert!(tree.contains(&fork_a.hash()));
}

fn small_chain(blocks: usize) -> (common::Net, Vec<Block>) {
    let n = net(3, &[]);
    let mut snap = n.snap.clone();
    let mut out = vec![n.genesis.clone()];
    let mut r = rng(12);
    for i in 0..blocks {
        let (a, b) = (&n.keys[i % 3], &n.keys[(i + 1) % 3]);
        let txs = vec![token_tx(
            a,
            b,
            token(a, b, user(i as u8), "vm", i as u64, snap.header.timestamp),
            &mut r,
        )];
        let (blk, _) = mine(&n.params, &snap, &n.keys, txs);
        snap = snap.extend(&n.params, &blk).unwrap();
        out.push(blk);
    }
    (n, out)
}

#[test]
fn persisted_chain_replays_to_the_same_state() {
    let (n, blocks) = small_chain(6);
    let direct = blocks[1..]
        .iter()
        .fold(n.snap.clone(), |s, b| s.extend(&n.params, b).unwrap());
    let file = LedgerFile {
        params: n.params.to_bytes(),
        blocks: blocks.clone(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.ctsim");
    file.write(&path).unwrap();
    let back = LedgerFile::read(&path).unwrap();
    assert_eq!(back, file);
    for b in &back.blocks {
        assert_eq!(b.header.tx_root, fedtrust::ledger::tx_root(&b.txs));
        assert!(b.header.signature_valid());
        for tx in &b.txs {
            assert_eq!(tx.compute_txid(), tx.txid);
        }
    }
    let replayed = replay_chain(&n.params, &back.blocks).unwrap();
    assert_eq!(replayed, direct);
}

#[test]
fn every_single_byte_flip_in_a_block_is_caught() {
    let (n, blocks) = small_chain(2);
    let parent = n.snap.extend(&n.params, &blocks[1]).unwrap();
    let blk = &blocks[2];
    let bytes = blk.to_bytes();
    let mut r = rng(13);
    for pos in 0..bytes.len() {
        let mut m = bytes.clone();
        m[pos] ^= r.gen_range(1..=255u8);
        let caught = match Block::from_bytes(&m) {
            Err(_) => true,
            Ok(b) => parent.extend(&n.params, &b).is_err(),
        };
        assert!(caught, "mutation at byte {pos} of {} went unnoticed", bytes.len());
    }
}
