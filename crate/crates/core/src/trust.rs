//! Recursive trust model: per-user credibility, per-CSP authentication and
//! satisfaction scores, and their weighted combination into one trust value
//! per CSP.
//!
//! Pairwise scores start at credibility 1, authentication 0 and
//! satisfaction 0. Every score is a [`Fixed`] in `[0, 1]`. Aggregates
//! average over the CSPs that have actually recorded an observation; with
//! no observation the initial value is returned.

use std::fmt;
use std::str::FromStr;

use im::OrdMap;
use serde::{Deserialize, Serialize};

use crate::crypto::Address;
use crate::fixed::{Fixed, SCALE};
use crate::ledger::{Block, FeedbackPayload, FeedbackRole, Payload};

/// Consensus trust of a CSP that has not been observed yet.
pub const BOOTSTRAP_TRUST: Fixed = Fixed::from_raw(SCALE / 2);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrustError {
    #[error("satisfaction and authentication weights are both zero")]
    ZeroWeights,
    #[error("no CSP is registered")]
    NoRegistrations,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CredLabel {
    VeryBad,
    Bad,
    Medium,
    Good,
    Excellent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SatLabel {
    FullyDissatisfied,
    Dissatisfied,
    PartiallySatisfied,
    Satisfied,
    FullySatisfied,
}

/// A rating on one of the two five-level scales.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeedbackLabel {
    Cred(CredLabel),
    Sat(SatLabel),
}

const CRED_LABELS: [CredLabel; 5] = [
    CredLabel::VeryBad,
    CredLabel::Bad,
    CredLabel::Medium,
    CredLabel::Good,
    CredLabel::Excellent,
];

const SAT_LABELS: [SatLabel; 5] = [
    SatLabel::FullyDissatisfied,
    SatLabel::Dissatisfied,
    SatLabel::PartiallySatisfied,
    SatLabel::Satisfied,
    SatLabel::FullySatisfied,
];

// bucket upper bounds in thousandths
const CRED_UPPER: [u64; 5] = [200, 400, 600, 800, 1000];
const SAT_UPPER: [u64; 5] = [200, 450, 600, 800, 1000];

impl FeedbackLabel {
    pub const ALL_CRED: [CredLabel; 5] = CRED_LABELS;
    pub const ALL_SAT: [SatLabel; 5] = SAT_LABELS;

    /// Foreign CSPs rate users on the credibility scale; home CSPs rate
    /// foreign CSPs on the satisfaction scale.
    pub fn from_code(role: FeedbackRole, code: u8) -> Option<FeedbackLabel> {
        let i = code as usize;
        match role {
            FeedbackRole::Foreign => CRED_LABELS.get(i).map(|l| FeedbackLabel::Cred(*l)),
            FeedbackRole::Home => SAT_LABELS.get(i).map(|l| FeedbackLabel::Sat(*l)),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            FeedbackLabel::Cred(l) => CRED_LABELS.iter().position(|x| *x == l).unwrap() as u8,
            FeedbackLabel::Sat(l) => SAT_LABELS.iter().position(|x| *x == l).unwrap() as u8,
        }
    }

    pub fn role(self) -> FeedbackRole {
        match self {
            FeedbackLabel::Cred(_) => FeedbackRole::Foreign,
            FeedbackLabel::Sat(_) => FeedbackRole::Home,
        }
    }

    /// `(lower, upper)` of the label's range; the lowest bucket includes 0,
    /// every other bucket excludes its lower bound.
    pub fn bucket(self) -> (Fixed, Fixed) {
        let (uppers, i) = match self {
            FeedbackLabel::Cred(_) => (&CRED_UPPER, self.code() as usize),
            FeedbackLabel::Sat(_) => (&SAT_UPPER, self.code() as usize),
        };
        let lo = if i == 0 { 0 } else { uppers[i - 1] };
        (Fixed::from_ratio(lo, 1000), Fixed::from_ratio(uppers[i], 1000))
    }
}

impl fmt::Display for FeedbackLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(s.trim_matches('"'))
    }
}

impl FromStr for FeedbackLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_str(&format!("\"{}\"", s.to_ascii_uppercase()))
            .map_err(|_| format!("unknown feedback label `{s}`"))
    }
}

/// Midpoint of the label's bucket.
pub fn bucketize(label: FeedbackLabel) -> Fixed {
    let (lo, hi) = label.bucket();
    lo.midpoint(hi)
}

/// Credibility a foreign CSP gives a user after one more rating:
/// `(trust_f * cred_curr + prev) / 2`.
pub fn cred_update(prev: Fixed, trust_f: Fixed, cred_curr: Fixed) -> Fixed {
    trust_f.mul_floor(cred_curr).midpoint(prev)
}

/// `(auth_curr + prev) / 2`.
pub fn auth_update(prev: Fixed, auth_curr: Fixed) -> Fixed {
    auth_curr.midpoint(prev)
}

/// The foreign CSP's rating of a visiting user is the home CSP's
/// authentication observation for that transaction.
pub fn auth_curr_from_feedback(cred_curr_of_user: Fixed) -> Fixed {
    cred_curr_of_user
}

/// Credibility-weighted blend: `cred_u * sat_curr + (1 - cred_u) * prev`.
pub fn sat_update(prev: Fixed, cred_u: Fixed, sat_curr: Fixed) -> Fixed {
    let c = cred_u.raw().min(SCALE) as u128;
    let num = c * sat_curr.raw() as u128 + (SCALE as u128 - c) * prev.raw() as u128;
    Fixed::from_raw((num / SCALE as u128) as u64)
}

/// Global feature weights: omega_1 for satisfaction, omega_2 for
/// authentication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Weights {
    pub sat: Fixed,
    pub auth: Fixed,
}

/// Component-wise means of the registered CSPs' declared weights.
pub fn global_weights(registrations: &[(Fixed, Fixed)]) -> Result<Weights, TrustError> {
    let sat = Fixed::mean(registrations.iter().map(|r| r.0)).ok_or(TrustError::NoRegistrations)?;
    let auth = Fixed::mean(registrations.iter().map(|r| r.1)).ok_or(TrustError::NoRegistrations)?;
    Ok(Weights { sat, auth })
}

/// `(w_sat * sat + w_auth * auth) / (w_sat + w_auth)`.
pub fn overall_trust(sat: Fixed, auth: Fixed, w: &Weights) -> Result<Fixed, TrustError> {
    let den = w.sat.raw() as u128 + w.auth.raw() as u128;
    if den == 0 {
        return Err(TrustError::ZeroWeights);
    }
    let num = w.sat.raw() as u128 * sat.raw() as u128 + w.auth.raw() as u128 * auth.raw() as u128;
    Ok(Fixed::from_raw((num / den) as u64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PairScore {
    pub value: Fixed,
    /// Number of updates folded into `value` this epoch.
    pub n: u64,
}

/// Pairwise scores. Keys are ordered so that the aggregate queries are
/// range scans: credibility by user, authentication by home CSP,
/// satisfaction by foreign CSP.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PairwiseScores {
    /// (user, foreign CSP) -> Cred(F, u)
    cred: OrdMap<(Address, Address), PairScore>,
    /// (home CSP, foreign CSP) -> Auth(F, H)
    auth: OrdMap<(Address, Address), PairScore>,
    /// (foreign CSP, home CSP) -> SAT(H, F)
    sat: OrdMap<(Address, Address), PairScore>,
}

const ADDR_MIN: Address = Address([0u8; 20]);
const ADDR_MAX: Address = Address([0xffu8; 20]);

fn scan(map: &OrdMap<(Address, Address), PairScore>, first: Address) -> impl Iterator<Item = (&Address, &PairScore)> {
    map.range((first, ADDR_MIN)..=(first, ADDR_MAX))
        .map(|((_, other), s)| (other, s))
}

impl PairwiseScores {
    pub fn cred(&self, foreign: Address, user: Address) -> Fixed {
        self.cred.get(&(user, foreign)).map_or(Fixed::ONE, |s| s.value)
    }

    pub fn auth(&self, foreign: Address, home: Address) -> Fixed {
        self.auth.get(&(home, foreign)).map_or(Fixed::ZERO, |s| s.value)
    }

    pub fn sat(&self, home: Address, foreign: Address) -> Fixed {
        self.sat.get(&(foreign, home)).map_or(Fixed::ZERO, |s| s.value)
    }

    fn bump(
        map: &mut OrdMap<(Address, Address), PairScore>,
        key: (Address, Address),
        initial: Fixed,
        f: impl FnOnce(Fixed) -> Fixed,
    ) {
        let e = map.entry(key).or_insert(PairScore { value: initial, n: 0 });
        e.value = f(e.value);
        e.n += 1;
    }

    pub fn users(&self) -> impl Iterator<Item = Address> + '_ {
        let mut last = None;
        self.cred.keys().filter_map(move |(u, _)| {
            if last == Some(*u) {
                None
            } else {
                last = Some(*u);
                Some(*u)
            }
        })
    }

    pub fn all_values(&self) -> impl Iterator<Item = Fixed> + '_ {
        self.cred
            .values()
            .chain(self.auth.values())
            .chain(self.sat.values())
            .map(|s| s.value)
    }
}

/// Mean credibility of `user` over the foreign CSPs that rated it; 1.0 when
/// none did.
pub fn cred_user(scores: &PairwiseScores, user: Address) -> Fixed {
    Fixed::mean(scan(&scores.cred, user).map(|(_, s)| s.value)).unwrap_or(Fixed::ONE)
}

/// Mean authentication level of `home` over the foreign CSPs that observed
/// it; 0.0 when none did.
pub fn auth_score(scores: &PairwiseScores, home: Address) -> Fixed {
    Fixed::mean(scan(&scores.auth, home).map(|(_, s)| s.value)).unwrap_or(Fixed::ZERO)
}

/// Mean satisfaction with `foreign` over the home CSPs that rated it; 0.0
/// when none did.
pub fn sat_score(scores: &PairwiseScores, foreign: Address) -> Fixed {
    Fixed::mean(scan(&scores.sat, foreign).map(|(_, s)| s.value)).unwrap_or(Fixed::ZERO)
}

/// Trust model state for one chain view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrustState {
    scores: PairwiseScores,
    declared: OrdMap<Address, (Fixed, Fixed)>,
    weights: Option<Weights>,
    cache: OrdMap<Address, Fixed>,
    epoch: u64,
    /// Blocks per epoch; 0 keeps a single epoch forever.
    epoch_blocks: u64,
}

impl TrustState {
    pub fn new(epoch_blocks: u64) -> Self {
        TrustState {
            scores: PairwiseScores::default(),
            declared: OrdMap::new(),
            weights: None,
            cache: OrdMap::new(),
            epoch: 0,
            epoch_blocks,
        }
    }

    pub fn scores(&self) -> &PairwiseScores {
        &self.scores
    }

    pub fn weights(&self) -> Option<Weights> {
        self.weights
    }

    pub fn csp_count(&self) -> usize {
        self.declared.len()
    }

    pub fn csps(&self) -> impl Iterator<Item = Address> + '_ {
        self.declared.keys().copied()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Cached overall trust; zero for unknown CSPs.
    pub fn trust(&self, csp: Address) -> Fixed {
        self.cache.get(&csp).copied().unwrap_or(Fixed::ZERO)
    }

    pub fn compute_trust(&self, csp: Address) -> Fixed {
        match self.weights {
            Some(w) => {
                overall_trust(sat_score(&self.scores, csp), auth_score(&self.scores, csp), &w).unwrap_or(Fixed::ZERO)
            }
            None => Fixed::ZERO,
        }
    }

    pub fn cache_consistent(&self) -> bool {
        self.declared
            .keys()
            .all(|c| self.cache.get(c) == Some(&self.compute_trust(*c)))
    }

    /// Whether any CSP has recorded an observation of `csp` in either role.
    pub fn has_observations(&self, csp: Address) -> bool {
        scan(&self.scores.auth, csp).next().is_some() || scan(&self.scores.sat, csp).next().is_some()
    }

    /// Trust used by consensus: the model's value once `csp` has been
    /// observed, [`BOOTSTRAP_TRUST`] before.
    pub fn consensus_trust(&self, csp: Address) -> Fixed {
        if self.has_observations(csp) {
            self.trust(csp)
        } else {
            BOOTSTRAP_TRUST
        }
    }

    fn refresh(&mut self) {
        let fresh: OrdMap<_, _> = self.declared.keys().map(|c| (*c, self.compute_trust(*c))).collect();
        self.cache = fresh;
    }

    pub fn register(&mut self, csp: Address, weight_sat: Fixed, weight_auth: Fixed) {
        self.declared.insert(csp, (weight_sat, weight_auth));
        let regs: Vec<_> = self.declared.values().copied().collect();
        self.weights = global_weights(&regs).ok();
        self.refresh();
    }

    /// Folds one rating. A foreign-role rating updates the user's
    /// credibility at the rater and then the authentication level of the
    /// user's home CSP; a home-role rating updates the home CSP's
    /// satisfaction with the foreign CSP, weighted by the user's current
    /// mean credibility.
    pub fn apply_feedback(&mut self, f: &FeedbackPayload) {
        let Some(label) = f.label() else { return };
        let x = bucketize(label);
        match f.role {
            FeedbackRole::Foreign => {
                let trust_f = self.trust(f.rater);
                PairwiseScores::bump(&mut self.scores.cred, (f.user, f.rater), Fixed::ONE, |prev| {
                    cred_update(prev, trust_f, x)
                });
                let auth_curr = auth_curr_from_feedback(x);
                PairwiseScores::bump(&mut self.scores.auth, (f.subject, f.rater), Fixed::ZERO, |prev| {
                    auth_update(prev, auth_curr)
                });
            }
            FeedbackRole::Home => {
                let cred_u = cred_user(&self.scores, f.user);
                PairwiseScores::bump(&mut self.scores.sat, (f.subject, f.rater), Fixed::ZERO, |prev| {
                    sat_update(prev, cred_u, x)
                });
            }
        }
        self.refresh();
    }

    fn enter_epoch(&mut self, height: u64) {
        if self.epoch_blocks == 0 {
            return;
        }
        let epoch = height / self.epoch_blocks;
        if epoch != self.epoch {
            self.epoch = epoch;
            self.scores = PairwiseScores::default();
            self.refresh();
        }
    }

    /// Folds the registrations and ratings of one block, in transaction order.
    pub fn apply_block(&mut self, blk: &Block) {
        self.enter_epoch(blk.height());
        for tx in &blk.txs {
            match &tx.payload {
                Payload::Register(r) => self.register(r.public_key.address(), r.weight_sat, r.weight_auth),
                Payload::Feedback(f) => self.apply_feedback(f),
                Payload::Token => {}
            }
        }
    }
}

/// Rebuilds the trust state from a canonical chain, genesis first.
pub fn replay_from_chain(blocks: &[Block], epoch_blocks: u64) -> TrustState {
    let mut st = TrustState::new(epoch_blocks);
    for b in blocks {
        st.apply_block(b);
    }
    st
}
