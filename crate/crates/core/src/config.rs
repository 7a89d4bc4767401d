//! Scenario configuration (TOML).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::consensus::{calibrate_base_target, ConsensusParams, DEFAULT_TIME_CAP};
use crate::fixed::Fixed;
use crate::ledger::FeedbackRole;
use crate::state::ChainParams;
use crate::trust::{CredLabel, SatLabel, BOOTSTRAP_TRUST};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid<T>(field: impl Into<String>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    #[default]
    Honest,
    /// Every block it sends is mutated or forged.
    Tamperer,
    /// Records each token it issues twice and presents it twice.
    DoubleIssuer,
    /// Rates everyone as badly as the scale allows.
    Smearer,
    /// Rates everyone as well as the scale allows.
    Flatterer,
}

impl Behavior {
    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::Honest => "honest",
            Behavior::Tamperer => "tamperer",
            Behavior::DoubleIssuer => "double_issuer",
            Behavior::Smearer => "smearer",
            Behavior::Flatterer => "flatterer",
        }
    }
}

/// Either a literal `d` or `"auto"` for calibration from the genesis
/// stakes and trust.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseTarget {
    Value(f64),
    Named(String),
}

impl Default for BaseTarget {
    fn default() -> Self {
        BaseTarget::Named("auto".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsensusConfig {
    pub block_interval_ms: u64,
    pub slot_ms: u64,
    pub prefix_bits: u32,
    pub base_target: BaseTarget,
    pub time_cap: u64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            block_interval_ms: 300,
            slot_ms: 100,
            prefix_bits: 64,
            base_target: BaseTarget::default(),
            time_cap: DEFAULT_TIME_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkOverride {
    pub from: usize,
    pub to: usize,
    pub latency_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub base_latency_ms: u64,
    pub jitter_ms: u64,
    /// One-way latency of user-side hops (redirects, token presentation).
    pub user_latency_ms: u64,
    pub links: Vec<LinkOverride>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            base_latency_ms: 20,
            jitter_ms: 10,
            user_latency_ms: 10,
            links: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Token lifetime, in block intervals.
    pub token_ttl_intervals: u64,
    /// How long a foreign CSP waits for a token to reach its chain.
    pub confirm_timeout_intervals: u64,
    /// Mempool lifetime of transactions other than tokens.
    pub mempool_ttl_intervals: u64,
    pub max_block_txs: usize,
    /// Submit both ratings automatically after every grant.
    pub auto_feedback: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            token_ttl_intervals: 10,
            confirm_timeout_intervals: 10,
            mempool_ttl_intervals: 20,
            max_block_txs: 100,
            auto_feedback: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrustConfig {
    /// Blocks per trust epoch; 0 keeps a single epoch.
    pub epoch_blocks: u64,
    /// Log a trust table every this many canonical blocks; 0 disables.
    pub report_every_blocks: u64,
}

fn default_weight() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

fn default_privileges() -> Vec<String> {
    vec!["read".into(), "write".into()]
}

fn default_request_privileges() -> Vec<String> {
    vec!["read".into()]
}

fn default_service() -> SatLabel {
    SatLabel::Satisfied
}

fn default_conduct() -> CredLabel {
    CredLabel::Good
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub stake: f64,
    #[serde(default = "default_weight")]
    pub weight_sat: f64,
    #[serde(default = "default_weight")]
    pub weight_auth: f64,
    #[serde(default)]
    pub behavior: Behavior,
    /// Fixed consensus trust, overriding the trust model.
    #[serde(default)]
    pub trust_pin: Option<f64>,
    /// Registered in the genesis block; otherwise joins via a
    /// `register_csp` action.
    #[serde(default = "default_true")]
    pub genesis: bool,
    /// How satisfied visiting users are with this CSP's service.
    #[serde(default = "default_service")]
    pub service: SatLabel,
    /// Privileges this CSP is willing to put into tokens it issues.
    #[serde(default = "default_privileges")]
    pub privileges: Vec<String>,
    /// Resources this CSP serves; any resource when absent.
    #[serde(default)]
    pub resources: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub start_ms: u64,
    pub end_ms: u64,
    pub groups: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    RegisterUser {
        at_ms: u64,
        user: String,
        home: usize,
        #[serde(default = "default_conduct")]
        conduct: CredLabel,
        #[serde(default)]
        profile: Option<String>,
    },
    RegisterCsp {
        at_ms: u64,
        node: usize,
        #[serde(default)]
        weight_sat: Option<f64>,
        #[serde(default)]
        weight_auth: Option<f64>,
    },
    RequestAccess {
        at_ms: u64,
        #[serde(default)]
        id: Option<String>,
        user: String,
        target: usize,
        resource: String,
        #[serde(default = "default_request_privileges")]
        privileges: Vec<String>,
        /// Home CSP to authenticate at; the user's first home by default.
        #[serde(default)]
        via: Option<usize>,
        #[serde(default)]
        bad_credential: bool,
        /// Resource the user asks the foreign CSP for when presenting the
        /// token, if different from the one in the token.
        #[serde(default)]
        present_resource: Option<String>,
    },
    IaasShare {
        at_ms: u64,
        #[serde(default)]
        id: Option<String>,
        borrower: usize,
        lender: usize,
        resource: String,
        #[serde(default = "default_request_privileges")]
        privileges: Vec<String>,
    },
    Feedback {
        at_ms: u64,
        request: String,
        role: FeedbackRole,
        label: String,
    },
    /// Random requests between registered users and CSPs.
    Traffic {
        at_ms: u64,
        end_ms: u64,
        every_ms: u64,
        #[serde(default)]
        iaas_fraction: f64,
    },
}

impl Action {
    pub fn at_ms(&self) -> u64 {
        match self {
            Action::RegisterUser { at_ms, .. }
            | Action::RegisterCsp { at_ms, .. }
            | Action::RequestAccess { at_ms, .. }
            | Action::IaasShare { at_ms, .. }
            | Action::Feedback { at_ms, .. }
            | Action::Traffic { at_ms, .. } => *at_ms,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub ledger: String,
    pub events: String,
    pub report: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".into(),
            ledger: "ledger.ctsim".into(),
            events: "events.jsonl".into(),
            report: "report.json".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_ms: u64,
    /// Stop early once node 0's chain reaches this height.
    #[serde(default)]
    pub stop_at_height: Option<u64>,
    /// Rescale stakes to sum to one instead of rejecting the config.
    #[serde(default)]
    pub normalize_stakes: bool,
    #[serde(default)]
    pub consensus: ConsensusConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub trust: TrustConfig,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub partitions: Vec<PartitionConfig>,
    #[serde(default)]
    pub actions: Vec<Action>,
    #[serde(default)]
    pub output: OutputConfig,
}

const STAKE_TOLERANCE: f64 = 1e-9;

fn unit(field: String, x: f64) -> Result<(), ConfigError> {
    if !(0.0..=1.0).contains(&x) {
        return invalid(field, format!("{x} is outside [0, 1]"));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
        ScenarioConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn node_name(&self, i: usize) -> String {
        self.nodes[i].name.clone().unwrap_or_else(|| format!("csp{i}"))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.nodes.len();
        if !(2..=64).contains(&n) {
            return invalid("nodes", format!("{n} nodes configured, expected 2 to 64"));
        }
        if !self.nodes[0].genesis {
            return invalid(
                "nodes[0].genesis",
                "the first node founds the chain and must be in genesis",
            );
        }
        let c = &self.consensus;
        if c.block_interval_ms == 0 {
            return invalid("consensus.block_interval_ms", "must be positive");
        }
        if c.slot_ms == 0 {
            return invalid("consensus.slot_ms", "must be positive");
        }
        if c.prefix_bits != 64 && c.prefix_bits != 128 {
            return invalid("consensus.prefix_bits", "must be 64 or 128");
        }
        if c.time_cap == 0 {
            return invalid("consensus.time_cap", "must be positive");
        }
        match &c.base_target {
            BaseTarget::Value(d) if !(*d > 0.0 && *d < 1.0) => {
                return invalid("consensus.base_target", format!("{d} is not strictly between 0 and 1"))
            }
            BaseTarget::Named(s) if s != "auto" => {
                return invalid(
                    "consensus.base_target",
                    format!("expected a number or \"auto\", got \"{s}\""),
                )
            }
            _ => {}
        }
        let mut names = BTreeSet::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if !(node.stake >= 0.0 && node.stake.is_finite()) {
                return invalid(format!("nodes[{i}].stake"), "must be a non-negative number");
            }
            unit(format!("nodes[{i}].weight_sat"), node.weight_sat)?;
            unit(format!("nodes[{i}].weight_auth"), node.weight_auth)?;
            if node.weight_sat == 0.0 && node.weight_auth == 0.0 {
                return invalid(format!("nodes[{i}]"), "weight_sat and weight_auth are both zero");
            }
            if let Some(t) = node.trust_pin {
                unit(format!("nodes[{i}].trust_pin"), t)?;
            }
            if !names.insert(self.node_name(i)) {
                return invalid(format!("nodes[{i}].name"), "duplicate node name");
            }
        }
        let sum: f64 = self.nodes.iter().map(|n| n.stake).sum();
        if sum <= 0.0 {
            return invalid("nodes.stake", "stakes sum to zero");
        }
        if !self.normalize_stakes && (sum - 1.0).abs() > STAKE_TOLERANCE {
            return invalid(
                "nodes.stake",
                format!("stakes sum to {sum}, not 1 (set normalize_stakes = true to rescale)"),
            );
        }
        for (p, part) in self.partitions.iter().enumerate() {
            if part.start_ms >= part.end_ms {
                return invalid(format!("partitions[{p}]"), "start_ms must precede end_ms");
            }
            check_groups(&part.groups, n).map_err(|m| ConfigError::Invalid {
                field: format!("partitions[{p}].groups"),
                message: m,
            })?;
        }
        for (l, link) in self.network.links.iter().enumerate() {
            if link.from >= n || link.to >= n {
                return invalid(format!("network.links[{l}]"), "node index out of range");
            }
        }
        for (a, action) in self.actions.iter().enumerate() {
            let field = format!("actions[{a}]");
            let bad_node = |i: usize| i >= n;
            match action {
                Action::RegisterUser { home, .. } if bad_node(*home) => return invalid(field, "home out of range"),
                Action::RegisterCsp { node, .. } if bad_node(*node) => return invalid(field, "node out of range"),
                Action::RequestAccess { target, via, .. } if bad_node(*target) || via.is_some_and(bad_node) => {
                    return invalid(field, "node index out of range")
                }
                Action::IaasShare { borrower, lender, .. } if bad_node(*borrower) || bad_node(*lender) => {
                    return invalid(field, "node index out of range")
                }
                Action::IaasShare { borrower, lender, .. } if borrower == lender => {
                    return invalid(field, "borrower and lender must differ")
                }
                Action::Feedback { label, role, .. } => {
                    let parsed: Result<crate::trust::FeedbackLabel, _> = label.parse();
                    match parsed {
                        Ok(l) if l.role() == *role => {}
                        Ok(_) => return invalid(field, format!("label {label} does not belong to the {role:?} scale")),
                        Err(e) => return invalid(field, e),
                    }
                }
                Action::Traffic {
                    at_ms,
                    end_ms,
                    every_ms,
                    iaas_fraction,
                } => {
                    if *every_ms == 0 || at_ms >= end_ms {
                        return invalid(field, "traffic needs every_ms > 0 and at_ms < end_ms");
                    }
                    unit(format!("{field}.iaas_fraction"), *iaas_fraction)?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Stake shares, rescaled to sum to one.
    pub fn stake_shares(&self) -> Vec<Fixed> {
        let sum: f64 = self.nodes.iter().map(|n| n.stake).sum();
        self.nodes.iter().map(|n| Fixed::from_f64(n.stake / sum)).collect()
    }

    /// `d` as configured, or calibrated from the genesis members' stake
    /// shares and starting consensus trust.
    pub fn base_target(&self) -> Fixed {
        match &self.consensus.base_target {
            BaseTarget::Value(d) => Fixed::from_f64(*d),
            BaseTarget::Named(_) => {
                let shares = self.stake_shares();
                let genesis_total = self
                    .nodes
                    .iter()
                    .zip(&shares)
                    .filter(|(n, _)| n.genesis)
                    .fold(Fixed::ZERO, |acc, (_, s)| acc + *s);
                let pairs: Vec<_> = self
                    .nodes
                    .iter()
                    .zip(&shares)
                    .filter(|(n, _)| n.genesis)
                    .map(|(n, s)| {
                        let share = s.checked_div(genesis_total).unwrap_or(Fixed::ZERO);
                        let t = n.trust_pin.map(Fixed::from_f64).unwrap_or(BOOTSTRAP_TRUST);
                        (share, t)
                    })
                    .collect();
                calibrate_base_target(&pairs)
            }
        }
    }

    pub fn consensus_params(&self) -> ConsensusParams {
        ConsensusParams {
            base_target: self.base_target(),
            prefix_bits: self.consensus.prefix_bits,
            block_interval_ms: self.consensus.block_interval_ms,
            time_cap: self.consensus.time_cap,
        }
    }
}

/// Checks that `groups` partition `0..n`.
pub fn check_groups(groups: &[Vec<usize>], n: usize) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for g in groups {
        if g.is_empty() {
            return Err("empty group".into());
        }
        for &i in g {
            if i >= n {
                return Err(format!("node {i} out of range"));
            }
            if !seen.insert(i) {
                return Err(format!("node {i} appears in more than one group"));
            }
        }
    }
    if seen.len() != n {
        return Err("groups do not cover every node".into());
    }
    Ok(())
}

/// Chain parameters implied by a config; node addresses are needed for the
/// trust pins.
pub fn chain_params(cfg: &ScenarioConfig, addresses: &[crate::crypto::Address]) -> ChainParams {
    let mut p = ChainParams::new(cfg.consensus_params());
    p.epoch_blocks = cfg.trust.epoch_blocks;
    for (node, addr) in cfg.nodes.iter().zip(addresses) {
        if let Some(t) = node.trust_pin {
            p.trust_pins.insert(*addr, Fixed::from_f64(t));
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 1
duration_ms = 1000
[[nodes]]
stake = 0.5
[[nodes]]
stake = 0.5
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.consensus.block_interval_ms, 300);
        assert_eq!(c.nodes[1].behavior, Behavior::Honest);
        assert_eq!(c.node_name(1), "csp1");
        // two CSPs at half stake and bootstrap trust: d = 1 / (2 * 0.5)
        assert_eq!(c.base_target(), Fixed::BELOW_ONE);
    }

    fn field_of(err: ConfigError) -> String {
        match err {
            ConfigError::Invalid { field, .. } => field,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn stake_sum_must_be_one() {
        let text = MINIMAL.replace("stake = 0.5\n[[nodes]]", "stake = 0.7\n[[nodes]]");
        let err = ScenarioConfig::from_toml(&text).unwrap_err();
        assert_eq!(field_of(err), "nodes.stake");
        let ok = format!("normalize_stakes = true\n{text}");
        let c = ScenarioConfig::from_toml(&ok).unwrap();
        let shares = c.stake_shares();
        assert!((shares[0].to_f64() - 0.7 / 1.2).abs() < 1e-12);
    }

    #[test]
    fn missing_seed_is_a_parse_error() {
        let text = MINIMAL.replace("seed = 1\n", "");
        let err = ScenarioConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn weight_and_partition_checks() {
        let text = MINIMAL.replacen("stake = 0.5", "stake = 0.5\nweight_sat = 1.2", 1);
        assert_eq!(
            field_of(ScenarioConfig::from_toml(&text).unwrap_err()),
            "nodes[0].weight_sat"
        );
        let text = format!("{MINIMAL}\n[[partitions]]\nstart_ms = 1\nend_ms = 2\ngroups = [[0, 1], [1]]\n");
        assert_eq!(
            field_of(ScenarioConfig::from_toml(&text).unwrap_err()),
            "partitions[0].groups"
        );
        assert!(check_groups(&[vec![0], vec![1]], 2).is_ok());
        assert!(check_groups(&[vec![0]], 2).is_err());
    }
}
