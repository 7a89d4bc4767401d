mod common;

use std::cmp::Ordering;
use std::sync::Arc;

use common::{mine, mine_by, net, net_with, SLOT_MS};
use fedtrust::consensus::{
    calibrate_base_target, check_eligibility, compare_tips, csp_difficulty, elapsed_intervals, evaluate_eligibility,
    generate_block, next_prf, prefix_value, resolve, ConsensusParams, CspConsensusState, NoForks, TipInfo,
};
use fedtrust::crypto::{Address, Digest, KeyPair};
use fedtrust::fixed::Fixed;
use fedtrust::ledger::{Block, Reason};
use fedtrust::sim::BlockTree;
use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn f(x: f64) -> Fixed {
    Fixed::from_f64(x)
}

fn state(stake: f64, prf_old: Digest, last_at: u64) -> CspConsensusState {
    CspConsensusState {
        account_key: Address([1; 20]),
        stake: f(stake),
        last_generated_height: 0,
        last_generated_at: last_at,
        prf_old,
    }
}

fn random_digest(rng: &mut impl RngCore) -> Digest {
    let mut d = [0u8; 32];
    rng.fill_bytes(&mut d);
    Digest(d)
}

#[test]
fn prefix_edges() {
    assert_eq!(prefix_value(&Digest::ZERO, 64).to_f64(), 0.0);
    let mut ones = [0u8; 32];
    ones[..8].fill(0xff);
    let p = prefix_value(&Digest(ones), 64);
    assert_eq!(p.numerator, u64::MAX as u128);
    assert_eq!(p.to_f64(), 1.0 - 2f64.powi(-64));
    assert!(!p.below(Fixed::BELOW_ONE));
    let mut half = [0u8; 32];
    half[0] = 0x80;
    assert_eq!(prefix_value(&Digest(half), 64).to_f64(), 0.5);
    assert_eq!(prefix_value(&Digest(half), 128).to_f64(), 0.5);
    assert!(!prefix_value(&Digest(half), 64).below(f(0.5)));
    assert!(prefix_value(&Digest(half), 64).below(Fixed::from_raw(500_000_000_001)));
    assert!(prefix_value(&Digest::ZERO, 64).below(Fixed::from_raw(1)));
}

#[test]
fn difficulty_is_the_clamped_product() {
    let p = ConsensusParams {
        base_target: f(0.1),
        ..ConsensusParams::default()
    };
    assert_eq!(csp_difficulty(&p, f(2.0), f(0.5), f(0.8)), f(0.08));
    assert_eq!(csp_difficulty(&p, f(64.0), Fixed::ONE, Fixed::ZERO), Fixed::ZERO);
    let hi = ConsensusParams {
        base_target: f(0.999),
        ..ConsensusParams::default()
    };
    assert_eq!(csp_difficulty(&hi, Fixed::ONE, Fixed::ONE, Fixed::ONE), f(0.999));
    assert_eq!(csp_difficulty(&hi, f(64.0), Fixed::ONE, Fixed::ONE), Fixed::BELOW_ONE);
    assert_eq!(elapsed_intervals(&p, 450, 0), f(1.5));
    assert_eq!(elapsed_intervals(&p, 10_000_000, 0), f(64.0));
    assert_eq!(elapsed_intervals(&p, 0, 100), Fixed::ZERO);
}

#[test]
fn zero_trust_is_never_eligible() {
    let p = ConsensusParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let k = KeyPair::random(&mut rng);
        let st = state(rng.gen(), random_digest(&mut rng), 0);
        let now = rng.gen_range(0..1_000_000);
        assert!(!check_eligibility(
            &Digest::ZERO,
            &p,
            &st,
            Fixed::ZERO,
            &k.public_key(),
            now
        ));
    }
}

#[test]
fn eligibility_rate_matches_difficulty() {
    let p = ConsensusParams {
        base_target: f(0.25),
        ..ConsensusParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let k = KeyPair::random(&mut rng);
    for (time, stake, trust) in [(1.0, 0.5, 0.8), (2.0, 0.25, 0.5), (4.0, 1.0, 0.9)] {
        let now = (time * 300.0) as u64;
        let mut hits = 0;
        let trials = 10_000;
        let mut d_csp = Fixed::ZERO;
        for _ in 0..trials {
            let st = state(stake, random_digest(&mut rng), 0);
            let e = evaluate_eligibility(&p, &st, f(trust), &k.public_key(), now);
            d_csp = e.d_csp;
            hits += e.eligible as u32;
        }
        let rate = hits as f64 / trials as f64;
        let expect = d_csp.to_f64();
        assert!((rate - expect).abs() <= 0.2 * expect, "rate {rate} vs d_csp {expect}");
    }
}

#[test]
fn eligibility_is_monotone_in_stake_trust_and_time() {
    let p = ConsensusParams {
        base_target: f(0.2),
        ..ConsensusParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = KeyPair::random(&mut rng);
    let prfs: Vec<Digest> = (0..10_000).map(|_| random_digest(&mut rng)).collect();
    let rate = |stake: f64, trust: f64, now: u64| {
        prfs.iter()
            .filter(|d| evaluate_eligibility(&p, &state(stake, **d, 0), f(trust), &k.public_key(), now).eligible)
            .count()
    };
    let by_stake: Vec<_> = [0.1, 0.2, 0.4, 0.8].iter().map(|s| rate(*s, 0.5, 600)).collect();
    let by_trust: Vec<_> = [0.2, 0.5, 0.9, 1.0].iter().map(|t| rate(0.5, *t, 600)).collect();
    let by_time: Vec<_> = [300, 600, 1200, 2400].iter().map(|n| rate(0.5, 0.5, *n)).collect();
    for v in [&by_stake, &by_trust, &by_time] {
        assert!(v.windows(2).all(|w| w[0] < w[1]), "{v:?}");
    }
}

#[test]
fn generation_validation_round_trip() {
    let n = net(4, &[]);
    let mut snap = n.snap.clone();
    for _ in 0..1000 {
        let (blk, g) = mine(&n.params, &snap, &n.keys, vec![]);
        let key = &n.keys[g];
        let prev = snap.consensus.get(&key.address()).unwrap().prf_old;
        assert_eq!(blk.header.prf, next_prf(&key.public_key(), &prev));
        snap = snap.extend(&n.params, &blk).expect("generated block validates");
        assert_eq!(snap.consensus.get(&key.address()).unwrap().prf_old, blk.header.prf);
    }
    assert_eq!(snap.height(), 1000);
}

#[test]
fn ineligible_generation_returns_nothing() {
    let n = net(4, &[(2, 0.0)]);
    let k = &n.keys[2];
    let st = n.snap.consensus.get(&k.address()).unwrap();
    for ts in (SLOT_MS..=30_000).step_by(SLOT_MS as usize) {
        let mut b = Block::candidate(&n.snap.header, ts, n.params.consensus.base_target, vec![]);
        let before = b.clone();
        assert_eq!(generate_block(&mut b, &n.params.consensus, k, st, Fixed::ZERO), None);
        assert_eq!(b, before);
    }
}

#[test]
fn foreign_signature_is_a_prf_mismatch() {
    let n = net(4, &[]);
    let (blk, g) = mine(&n.params, &n.snap, &n.keys, vec![]);
    let mut forged = blk.clone();
    forged.header.sign(&n.keys[(g + 1) % 4]);
    let err = n.snap.extend(&n.params, &forged).unwrap_err();
    assert_eq!(err.reason, Reason::PrfMismatch);
}

#[test]
fn zero_trust_generator_is_not_eligible() {
    let n = net(4, &[(1, 0.0)]);
    let k = &n.keys[1];
    let st = n.snap.consensus.get(&k.address()).unwrap();
    let mut b = Block::candidate(&n.snap.header, 6000, n.params.consensus.base_target, vec![]);
    b.header.prf = next_prf(&k.public_key(), &st.prf_old);
    b.header.sign(k);
    assert_eq!(n.snap.extend(&n.params, &b).unwrap_err().reason, Reason::NotEligible);
}

#[test]
fn early_timestamp_is_not_eligible() {
    let n = net(4, &[]);
    let (blk, g) = mine(&n.params, &n.snap, &n.keys, vec![]);
    let k = &n.keys[g];
    let mut early = blk.clone();
    early.header.timestamp = 1;
    early.header.sign(k);
    let e = n.snap.eligibility(&n.params, &k.public_key(), 1).unwrap();
    assert!(!e.eligible);
    assert_eq!(
        n.snap.extend(&n.params, &early).unwrap_err().reason,
        Reason::NotEligible
    );
    let mut stale = blk.clone();
    stale.header.timestamp = 0;
    stale.header.sign(k);
    assert_eq!(n.snap.extend(&n.params, &stale).unwrap_err().reason, Reason::Timestamp);
}

#[test]
fn other_header_tampering_is_rejected() {
    let n = net(4, &[]);
    let (blk, g) = mine(&n.params, &n.snap, &n.keys, vec![]);
    let mut b = blk.clone();
    b.header.base_target = f(0.9);
    b.header.sign(&n.keys[g]);
    assert_eq!(n.snap.extend(&n.params, &b).unwrap_err().reason, Reason::BadBaseTarget);
    let mut b = blk.clone();
    b.header.sig.0[10] ^= 1;
    assert_eq!(n.snap.extend(&n.params, &b).unwrap_err().reason, Reason::BadSignature);
    let outsider = common::key("outsider", 0);
    let mut b = blk.clone();
    b.header.sign(&outsider);
    assert_eq!(
        n.snap.extend(&n.params, &b).unwrap_err().reason,
        Reason::UnknownGenerator
    );
}

fn tip(height: u64, trust: u128, h: u8) -> TipInfo {
    TipInfo {
        height,
        cumulative_trust: trust,
        hash: Digest([h; 32]),
    }
}

#[test]
fn resolve_examples() {
    assert_eq!(resolve(&[tip(5, 9, 1), tip(7, 1, 2)]).unwrap().height, 7);
    assert_eq!(resolve(&[tip(4, 29, 1), tip(4, 32, 2)]).unwrap().cumulative_trust, 32);
    let a = tip(4, 30, 1);
    let b = tip(4, 30, 2);
    assert_eq!(resolve(&[a, b]).unwrap(), a);
    assert_eq!(resolve(&[b, a]).unwrap(), a);
    assert_eq!(resolve(&[]), Err(NoForks));
}

#[test]
fn higher_trust_branch_wins_at_equal_height() {
    // node 0 pinned at 0.8, node 1 at 0.725: four blocks each give 3.2 vs 2.9
    let n = net_with(
        3,
        &[(0, 0.8), (1, 0.725), (2, 0.5)],
        ConsensusParams {
            base_target: f(0.9),
            ..ConsensusParams::default()
        },
    );
    let branch = |g: usize| {
        let mut snap = n.snap.clone();
        let mut out = Vec::new();
        for _ in 0..4 {
            let b = mine_by(&n.params, &snap, &n.keys[g], vec![]).expect("eligible within the cap");
            snap = snap.extend(&n.params, &b).unwrap();
            out.push(Arc::new(b));
        }
        (out, snap)
    };
    let (hi, hi_snap) = branch(0);
    let (lo, lo_snap) = branch(1);
    assert_eq!(hi_snap.cumulative_trust, f(3.2).raw() as u128);
    assert_eq!(lo_snap.cumulative_trust, f(2.9).raw() as u128);
    for order in [[&hi, &lo], [&lo, &hi]] {
        let mut tree = BlockTree::new(n.genesis.clone(), n.snap.clone());
        for branch in order {
            for b in branch.iter() {
                tree.receive(&n.params, b.clone(), u64::MAX);
            }
        }
        assert_eq!(tree.tip(), hi_snap.hash());
    }
}

#[test]
fn calibration_examples() {
    let half = f(0.5);
    let quarter = f(0.25);
    assert_eq!(calibrate_base_target(&[(quarter, half); 4]), Fixed::BELOW_ONE);
    assert_eq!(calibrate_base_target(&[(Fixed::ONE, f(0.1))]), Fixed::BELOW_ONE);
    assert_eq!(calibrate_base_target(&[(half, Fixed::ONE), (half, Fixed::ONE)]), half);
    assert_eq!(calibrate_base_target(&[(Fixed::ONE, Fixed::ZERO)]), Fixed::BELOW_ONE);
}

fn arb_tip() -> impl Strategy<Value = TipInfo> {
    (0u64..4, 0u128..4, 0u8..4).prop_map(|(h, t, d)| tip(h, t, d))
}

proptest! {
    #[test]
    fn fork_choice_is_a_total_order(a in arb_tip(), b in arb_tip(), c in arb_tip()) {
        prop_assert_eq!(compare_tips(&a, &b), compare_tips(&b, &a).reverse());
        prop_assert_eq!(compare_tips(&a, &b) == Ordering::Equal, a == b);
        if compare_tips(&a, &b).is_ge() && compare_tips(&b, &c).is_ge() {
            prop_assert!(compare_tips(&a, &c).is_ge());
        }
    }

    #[test]
    fn resolve_ignores_input_order(mut tips in prop::collection::vec(arb_tip(), 1..8), seed in any::<u64>()) {
        let first = resolve(&tips).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..tips.len()).rev() {
            tips.swap(i, rng.gen_range(0..=i));
        }
        prop_assert_eq!(resolve(&tips).unwrap(), first);
        prop_assert!(tips.iter().all(|t| compare_tips(&first, t).is_ge()));
    }
}
