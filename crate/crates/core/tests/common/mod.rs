#![allow(dead_code)]

use fedtrust::consensus::{generate_block, ConsensusParams};
use fedtrust::crypto::{generate_keypair, hash_parts, Address, Digest, KeyPair};
use fedtrust::fixed::Fixed;
use fedtrust::ledger::{build_register_tx, build_token_tx, AccessToken, Block, Transaction, TxRefs};
use fedtrust::state::{genesis_block, ChainParams, ChainSnapshot};
use rand::RngCore;

pub const SLOT_MS: u64 = 100;

pub struct Net {
    pub params: ChainParams,
    pub keys: Vec<KeyPair>,
    pub genesis: Block,
    pub snap: ChainSnapshot,
}

pub fn key(tag: &str, i: usize) -> KeyPair {
    generate_keypair(&hash_parts(&[tag.as_bytes(), &(i as u64).to_be_bytes()]).0)
}

/// `n` equal-stake CSPs in genesis; `pins` fixes consensus trust by index.
pub fn net(n: usize, pins: &[(usize, f64)]) -> Net {
    net_with(n, pins, ConsensusParams::default())
}

pub fn net_with(n: usize, pins: &[(usize, f64)], consensus: ConsensusParams) -> Net {
    let keys: Vec<KeyPair> = (0..n).map(|i| key("test-net", i)).collect();
    let mut params = ChainParams::new(consensus);
    for (i, t) in pins {
        params.trust_pins.insert(keys[*i].address(), Fixed::from_f64(*t));
    }
    let share = Fixed::from_ratio(1, n as u64);
    let half = Fixed::from_f64(0.5);
    let regs = keys
        .iter()
        .map(|k| build_register_tx(k, half, half, share, Digest::ZERO))
        .collect();
    let genesis = genesis_block(&params, &keys[0], regs, 0);
    let snap = ChainSnapshot::genesis(&params, &genesis).unwrap();
    Net {
        params,
        keys,
        genesis,
        snap,
    }
}

/// Earliest slot at which `key` may extend `snap`, with the signed block.
pub fn mine_by(params: &ChainParams, snap: &ChainSnapshot, key: &KeyPair, txs: Vec<Transaction>) -> Option<Block> {
    let limit = params.consensus.block_interval_ms * (params.consensus.time_cap + 1);
    let mut now = snap.header.timestamp + SLOT_MS;
    while now <= snap.header.timestamp + limit {
        let e = snap.eligibility(params, &key.public_key(), now)?;
        if e.eligible {
            let mut b = Block::candidate(&snap.header, now, params.consensus.base_target, txs);
            let st = snap.consensus.get(&key.address()).unwrap();
            let t = snap.consensus_trust(params, &key.address());
            generate_block(&mut b, &params.consensus, key, st, t).expect("eligible");
            return Some(b);
        }
        now += SLOT_MS;
    }
    None
}

/// Earliest block any of `keys` can produce on `snap`; ties go to the
/// lower index.
pub fn mine(params: &ChainParams, snap: &ChainSnapshot, keys: &[KeyPair], txs: Vec<Transaction>) -> (Block, usize) {
    keys.iter()
        .enumerate()
        .filter_map(|(i, k)| mine_by(params, snap, k, txs.clone()).map(|b| (b, i)))
        .min_by_key(|(b, i)| (b.header.timestamp, *i))
        .expect("some key is eligible")
}

pub fn token(issuer: &KeyPair, audience: &KeyPair, user: Address, resource: &str, nonce: u64, at: u64) -> AccessToken {
    AccessToken::new(
        user,
        issuer.address(),
        audience.address(),
        Address::of_resource(resource),
        vec!["read".into()],
        at,
        at + 3000,
        nonce,
    )
}

pub fn token_tx(issuer: &KeyPair, audience: &KeyPair, tkn: AccessToken, rng: &mut dyn RngCore) -> Transaction {
    let res = tkn.resource;
    build_token_tx(
        issuer,
        b"profile",
        res,
        &audience.public_key(),
        tkn,
        TxRefs::default(),
        rng,
    )
    .unwrap()
}
