//! Trust tables and run reports. Both are computed only from what a run
//! persists (ledger blocks, chain parameters, event log), so they can be
//! regenerated from the files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::crypto::Address;
use crate::ledger::Block;
use crate::state::ChainParams;
use crate::trust::{auth_score, cred_user, replay_from_chain, sat_score, TrustState, BOOTSTRAP_TRUST};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustRow {
    pub csp: Address,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub sat: f64,
    pub auth: f64,
    pub trust: f64,
    /// Trust as used by consensus (pin, bootstrap or model value).
    pub consensus_trust: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub pseudonym: Address,
    pub cred: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustReport {
    pub height: u64,
    pub weight_sat: f64,
    pub weight_auth: f64,
    pub csps: Vec<TrustRow>,
    pub users: Vec<UserRow>,
}

/// Per-CSP rows without pins (consensus trust is the model's own view).
pub fn trust_rows(trust: &TrustState) -> Vec<TrustRow> {
    rows_with(trust, &BTreeMap::new())
}

fn rows_with(trust: &TrustState, pins: &BTreeMap<Address, crate::fixed::Fixed>) -> Vec<TrustRow> {
    trust
        .csps()
        .map(|c| TrustRow {
            csp: c,
            name: None,
            sat: sat_score(trust.scores(), c).to_f64(),
            auth: auth_score(trust.scores(), c).to_f64(),
            trust: trust.trust(c).to_f64(),
            consensus_trust: pins
                .get(&c)
                .copied()
                .unwrap_or_else(|| trust.consensus_trust(c))
                .to_f64(),
        })
        .collect()
}

impl TrustReport {
    pub fn from_state(trust: &TrustState, params: &ChainParams, height: u64) -> TrustReport {
        let w = trust.weights();
        TrustReport {
            height,
            weight_sat: w.map_or(0.0, |w| w.sat.to_f64()),
            weight_auth: w.map_or(0.0, |w| w.auth.to_f64()),
            csps: rows_with(trust, &params.trust_pins),
            users: trust
                .scores()
                .users()
                .map(|u| UserRow {
                    pseudonym: u,
                    cred: cred_user(trust.scores(), u).to_f64(),
                })
                .collect(),
        }
    }

    pub fn from_chain(params: &ChainParams, blocks: &[Block]) -> TrustReport {
        let trust = replay_from_chain(blocks, params.epoch_blocks);
        let height = blocks.last().map_or(0, |b| b.height());
        TrustReport::from_state(&trust, params, height)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "height {}  weights: sat {:.4} auth {:.4}  (bootstrap consensus trust {})",
            self.height,
            self.weight_sat,
            self.weight_auth,
            BOOTSTRAP_TRUST.to_f64()
        );
        let _ = writeln!(
            s,
            "{:<42} {:>8} {:>8} {:>8} {:>10}",
            "csp", "sat", "auth", "trust", "consensus"
        );
        for r in &self.csps {
            let _ = writeln!(
                s,
                "{:<42} {:>8.4} {:>8.4} {:>8.4} {:>10.4}",
                r.name.clone().unwrap_or_else(|| r.csp.to_hex()),
                r.sat,
                r.auth,
                r.trust,
                r.consensus_trust
            );
        }
        if !self.users.is_empty() {
            let _ = writeln!(s, "\n{:<42} {:>8}", "user", "cred");
            for u in &self.users {
                let _ = writeln!(s, "{:<42} {:>8.4}", u.pseudonym.to_hex(), u.cred);
            }
        }
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalStats {
    pub count: usize,
    pub mean_ms: f64,
    pub stddev_ms: f64,
}

/// Mean and population standard deviation of the gaps between
/// consecutive block timestamps.
pub fn interval_stats(blocks: &[Block]) -> IntervalStats {
    let gaps: Vec<f64> = blocks
        .windows(2)
        .map(|w| (w[1].header.timestamp - w[0].header.timestamp) as f64)
        .collect();
    if gaps.is_empty() {
        return IntervalStats::default();
    }
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
    IntervalStats {
        count: gaps.len(),
        mean_ms: mean,
        stddev_ms: var.sqrt(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestCounts {
    pub granted: u64,
    pub local_grants: u64,
    pub denied: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub height: u64,
    pub tip: String,
    pub block_intervals: IntervalStats,
    /// Canonical blocks per generator, by name where known.
    pub blocks_by_generator: BTreeMap<String, u64>,
    pub fork_switches: u64,
    pub requests: RequestCounts,
    /// Block and transaction rejection reasons seen anywhere in the network.
    pub rejections: BTreeMap<String, u64>,
    pub trust: TrustReport,
}

fn names_from_events(events: &[Value]) -> BTreeMap<String, String> {
    let mut names = BTreeMap::new();
    for e in events.iter().filter(|e| e["kind"] == "genesis") {
        if let Some(members) = e["members"].as_array() {
            for m in members {
                if let (Some(a), Some(n)) = (m["address"].as_str(), m["name"].as_str()) {
                    names.insert(a.to_string(), n.to_string());
                }
            }
        }
    }
    names
}

impl RunReport {
    pub fn build(params: &ChainParams, blocks: &[Block], events: &[Value]) -> RunReport {
        let names = names_from_events(events);
        let mut blocks_by_generator = BTreeMap::new();
        for b in blocks.iter().skip(1) {
            let a = b.header.generator_pub.address().to_hex();
            let key = names.get(&a).cloned().unwrap_or(a);
            *blocks_by_generator.entry(key).or_insert(0) += 1;
        }
        let mut requests = RequestCounts::default();
        let mut rejections = BTreeMap::new();
        let mut fork_switches = 0;
        for e in events {
            match e["kind"].as_str() {
                Some("fork_switch") => fork_switches += 1,
                Some("block_rejected") | Some("tx_rejected") | Some("tx_dropped") => {
                    let r = e["reason"].as_str().unwrap_or("UNKNOWN").to_string();
                    *rejections.entry(r).or_insert(0) += 1;
                }
                Some("request") => match e["state"].as_str() {
                    Some("GRANTED") if e["local"] == true => requests.local_grants += 1,
                    Some("GRANTED") => requests.granted += 1,
                    Some("DENIED") => {
                        let r = e["reason"].as_str().unwrap_or("UNKNOWN").to_string();
                        *requests.denied.entry(r).or_insert(0) += 1;
                    }
                    _ => {}
                },
                _ => {}
            }
        }
        let mut trust = TrustReport::from_chain(params, blocks);
        for r in &mut trust.csps {
            r.name = names.get(&r.csp.to_hex()).cloned();
        }
        RunReport {
            height: blocks.last().map_or(0, |b| b.height()),
            tip: blocks.last().map(|b| b.hash().to_hex()).unwrap_or_default(),
            block_intervals: interval_stats(blocks),
            blocks_by_generator,
            fork_switches,
            requests,
            rejections,
            trust,
        }
    }
}
