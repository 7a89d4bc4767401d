//! Trust-weighted proof of stake.
//!
//! A CSP may extend the chain once the prefix of its next proof of
//! eligibility, `prf = hash(pub || prf_old)`, falls below its personal
//! difficulty `d_csp = d * time_csp * stake_csp * t_csp`. The proof only
//! changes when the CSP generates a block, so `time_csp` (block intervals
//! since its last block) is what eventually lets every CSP with positive
//! stake and trust through.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::crypto::{self, Address, Digest, KeyPair, PublicKey, Signature};
use crate::fixed::{Fixed, SCALE};
use crate::ledger::{Block, BlockHeader, BlockReject, Reason, Registration};

/// Upper bound on `time_csp`, in block intervals.
pub const DEFAULT_TIME_CAP: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusParams {
    /// `d`, strictly between 0 and 1.
    pub base_target: Fixed,
    /// 64 or 128.
    pub prefix_bits: u32,
    pub block_interval_ms: u64,
    pub time_cap: u64,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        ConsensusParams {
            base_target: Fixed::from_ratio(1, 2),
            prefix_bits: 64,
            block_interval_ms: 300,
            time_cap: DEFAULT_TIME_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParamsError {
    #[error("base_target must lie strictly between 0 and 1")]
    BaseTarget,
    #[error("prefix_bits must be 64 or 128")]
    PrefixBits,
    #[error("block_interval_ms must be positive")]
    Interval,
    #[error("time_cap must be positive")]
    TimeCap,
}

impl ConsensusParams {
    pub fn check(&self) -> Result<(), ParamsError> {
        if self.base_target == Fixed::ZERO || self.base_target >= Fixed::ONE {
            return Err(ParamsError::BaseTarget);
        }
        if self.prefix_bits != 64 && self.prefix_bits != 128 {
            return Err(ParamsError::PrefixBits);
        }
        if self.block_interval_ms == 0 {
            return Err(ParamsError::Interval);
        }
        if self.time_cap == 0 {
            return Err(ParamsError::TimeCap);
        }
        Ok(())
    }
}

/// `d` such that the expected network-wide block rate is one per interval.
///
/// Between two of its own blocks a CSP waits `prefix / (d * s * t)`
/// intervals with `prefix` uniform on `[0, 1)`, so it produces
/// `2 * d * s * t` blocks per interval. Summing over CSPs gives
/// `d = 1 / (2 * sum(s * t))`, clamped into `(0, 1)`.
pub fn calibrate_base_target(shares_and_trust: &[(Fixed, Fixed)]) -> Fixed {
    let weight = shares_and_trust
        .iter()
        .fold(Fixed::ZERO, |acc, (s, t)| acc + s.mul_floor(*t));
    let twice = weight + weight;
    match Fixed::ONE.checked_div(twice) {
        Some(d) if d < Fixed::BELOW_ONE => d.max(Fixed::from_raw(1)),
        _ => Fixed::BELOW_ONE,
    }
}

/// Exact value of the first `bits` bits of a proof, as `numerator / 2^bits`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Prefix {
    pub numerator: u128,
    pub bits: u32,
}

impl Prefix {
    pub fn to_f64(self) -> f64 {
        self.numerator as f64 / 2f64.powi(self.bits as i32)
    }

    /// `self < d`, compared exactly.
    pub fn below(self, d: Fixed) -> bool {
        let lhs = BigUint::from(self.numerator) * BigUint::from(SCALE);
        let rhs = BigUint::from(d.raw()) << self.bits as usize;
        lhs < rhs
    }
}

pub fn prefix_value(prf: &Digest, k_bits: u32) -> Prefix {
    assert!(k_bits == 64 || k_bits == 128, "prefix width must be 64 or 128 bits");
    let bytes = &prf.0[..(k_bits / 8) as usize];
    let numerator = bytes.iter().fold(0u128, |acc, b| (acc << 8) | *b as u128);
    Prefix {
        numerator,
        bits: k_bits,
    }
}

/// `time_csp` in block intervals, capped.
pub fn elapsed_intervals(params: &ConsensusParams, now: u64, last_generated_at: u64) -> Fixed {
    let ms = now.saturating_sub(last_generated_at);
    let cap = Fixed::from_int(params.time_cap);
    if ms / params.block_interval_ms >= params.time_cap {
        return cap;
    }
    Fixed::from_ratio(ms, params.block_interval_ms).min(cap)
}

/// `d * time_csp * stake_csp * t_csp`, clamped below one.
pub fn csp_difficulty(params: &ConsensusParams, time_csp: Fixed, stake_csp: Fixed, t_csp: Fixed) -> Fixed {
    let wide = params.base_target.raw() as u128 * time_csp.raw() as u128 / SCALE as u128;
    let wide = wide.min(u64::MAX as u128) as u64;
    let d = Fixed::from_raw(wide).mul_floor(stake_csp).mul_floor(t_csp);
    d.min(Fixed::BELOW_ONE)
}

/// Per-CSP consensus bookkeeping at some chain head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CspConsensusState {
    /// Staking account. Identifies the CSP; no further checks use it.
    pub account_key: Address,
    /// Normalized share of the registered stake.
    pub stake: Fixed,
    pub last_generated_height: u64,
    pub last_generated_at: u64,
    pub prf_old: Digest,
}

/// Seed for a CSP that has not generated a block yet.
pub fn genesis_prf_seed(genesis_hash: &Digest, csp: &Address) -> Digest {
    crypto::hash_parts(&[&genesis_hash.0, &csp.0])
}

pub fn next_prf(pub_key: &PublicKey, prf_old: &Digest) -> Digest {
    crypto::hash_parts(&[&pub_key.0, &prf_old.0])
}

/// Outcome of one eligibility evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Eligibility {
    pub prf: Digest,
    pub prefix: Prefix,
    pub d_csp: Fixed,
    pub eligible: bool,
}

pub fn evaluate_eligibility(
    params: &ConsensusParams,
    state: &CspConsensusState,
    trust: Fixed,
    pub_key: &PublicKey,
    now: u64,
) -> Eligibility {
    let prf = next_prf(pub_key, &state.prf_old);
    let prefix = prefix_value(&prf, params.prefix_bits);
    let time = elapsed_intervals(params, now, state.last_generated_at);
    let d_csp = csp_difficulty(params, time, state.stake, trust);
    Eligibility {
        prf,
        prefix,
        d_csp,
        eligible: prefix.below(d_csp),
    }
}

/// Whether the CSP may generate on top of the head with hash `_h_blk` at
/// time `now`. The head only enters through `state`, which must describe
/// the CSP as of that head.
pub fn check_eligibility(
    _h_blk: &Digest,
    params: &ConsensusParams,
    state: &CspConsensusState,
    trust: Fixed,
    pub_key: &PublicKey,
    now: u64,
) -> bool {
    evaluate_eligibility(params, state, trust, pub_key, now).eligible
}

/// Fills in the proof and signature of a candidate block when the CSP is
/// eligible at the block's timestamp; returns `None` otherwise.
pub fn generate_block(
    blk: &mut Block,
    params: &ConsensusParams,
    keys: &KeyPair,
    state: &CspConsensusState,
    trust: Fixed,
) -> Option<(Digest, Signature)> {
    let pub_key = keys.public_key();
    let e = evaluate_eligibility(params, state, trust, &pub_key, blk.header.timestamp);
    if !e.eligible {
        return None;
    }
    blk.header.prf = e.prf;
    blk.header.sign(keys);
    Some((blk.header.prf, blk.header.sig))
}

/// Consensus view at one chain head.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConsensusState {
    csps: BTreeMap<Address, CspConsensusState>,
}

impl ConsensusState {
    pub fn get(&self, csp: &Address) -> Option<&CspConsensusState> {
        self.csps.get(csp)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CspConsensusState> {
        self.csps.values()
    }

    pub fn len(&self) -> usize {
        self.csps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.csps.is_empty()
    }

    /// Adds new registrations and renormalizes stake shares.
    pub fn sync_registrations<'a>(
        &mut self,
        regs: impl Iterator<Item = &'a Registration>,
        genesis_hash: &Digest,
        genesis_time: u64,
    ) {
        let regs: Vec<_> = regs.collect();
        let total = regs.iter().fold(Fixed::ZERO, |acc, r| acc + r.stake);
        for r in regs {
            let share = r.stake.checked_div(total).unwrap_or(Fixed::ZERO);
            let e = self.csps.entry(r.address).or_insert_with(|| CspConsensusState {
                account_key: r.address,
                stake: share,
                last_generated_height: 0,
                last_generated_at: genesis_time,
                prf_old: genesis_prf_seed(genesis_hash, &r.address),
            });
            e.stake = share;
        }
    }

    /// Records that the generator of `header` produced it.
    pub fn record_generation(&mut self, header: &BlockHeader) {
        if let Some(s) = self.csps.get_mut(&header.generator_pub.address()) {
            s.prf_old = header.prf;
            s.last_generated_height = header.height;
            s.last_generated_at = header.timestamp;
        }
    }
}

/// Header-level consensus checks of `blk` against the head it extends.
/// `trust_of` returns the consensus trust of a CSP at that head.
pub fn validate_header(
    blk: &Block,
    params: &ConsensusParams,
    parent: &BlockHeader,
    state: &ConsensusState,
    is_registered: impl Fn(&PublicKey) -> bool,
    trust_of: impl Fn(&Address) -> Fixed,
) -> Result<(), BlockReject> {
    let h = &blk.header;
    let fail = |r| Err(BlockReject::block(r, h.height));
    if h.height != parent.height + 1 || h.prev_block != parent.hash() {
        return fail(Reason::BadLink);
    }
    if h.timestamp <= parent.timestamp {
        return fail(Reason::Timestamp);
    }
    if !blk.tx_root_valid() {
        return fail(Reason::BadTxRoot);
    }
    if h.base_target != params.base_target {
        return fail(Reason::BadBaseTarget);
    }
    let generator = h.generator_pub.address();
    let Some(csp) = state.get(&generator).filter(|_| is_registered(&h.generator_pub)) else {
        return fail(Reason::UnknownGenerator);
    };
    let e = evaluate_eligibility(params, csp, trust_of(&generator), &h.generator_pub, h.timestamp);
    if h.prf != e.prf {
        return fail(Reason::PrfMismatch);
    }
    if !e.eligible {
        return fail(Reason::NotEligible);
    }
    if !h.signature_valid() {
        return fail(Reason::BadSignature);
    }
    Ok(())
}

/// Fork-choice summary of a chain tip.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TipInfo {
    pub height: u64,
    /// Sum of the generators' consensus trust (raw fixed-point units)
    /// along the fork.
    pub cumulative_trust: u128,
    pub hash: Digest,
}

/// Total order used by fork choice: higher is preferred.
pub fn compare_tips(a: &TipInfo, b: &TipInfo) -> Ordering {
    a.height
        .cmp(&b.height)
        .then(a.cumulative_trust.cmp(&b.cumulative_trust))
        .then(b.hash.0.cmp(&a.hash.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("no fork to choose from")]
pub struct NoForks;

/// Picks the preferred tip: greatest height, then greatest cumulative
/// trust, then smallest hash.
pub fn resolve(forks: &[TipInfo]) -> Result<TipInfo, NoForks> {
    forks.iter().copied().max_by(compare_tips).ok_or(NoForks)
}
