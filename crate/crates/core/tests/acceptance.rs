//! Acceptance run: each criterion prints one PASS or FAIL line; the process
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use fedtrust::cli::{run_args, EXIT_INVALID};
use fedtrust::config::{Behavior, ScenarioConfig};
use fedtrust::crypto::Digest;
use fedtrust::federation::RequestState;
use fedtrust::fixed::{Fixed, SCALE};
use fedtrust::ledger::store::LedgerFile;
use fedtrust::ledger::{FeedbackPayload, FeedbackRole};
use fedtrust::report::interval_stats;
use fedtrust::sim::World;
use fedtrust::trust::{auth_update, cred_update, overall_trust, replay_from_chain, FeedbackLabel, TrustState, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn nodes(stakes: &[f64], pins: &[Option<f64>]) -> String {
    let mut s = String::new();
    for (i, st) in stakes.iter().enumerate() {
        s += &format!("[[nodes]]\nstake = {st}\n");
        if let Some(Some(t)) = pins.get(i) {
            s += &format!("trust_pin = {t}\n");
        }
    }
    s
}

fn config(head: &str, body: &str) -> ScenarioConfig {
    ScenarioConfig::from_toml(&format!("{head}\n{body}")).expect("acceptance config")
}

fn run(c: ScenarioConfig) -> World {
    let mut w = World::new(c).expect("valid world");
    w.run();
    w
}

fn bundled(seed: u64) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/federation.toml");
    let mut c = ScenarioConfig::load(&path).expect("bundled scenario");
    c.seed = seed;
    c
}

fn block_interval() -> Outcome {
    let t = Instant::now();
    let c = config("seed = 1\nduration_ms = 200000", &nodes(&[0.25; 4], &[]));
    let w = run(c);
    let blocks: Vec<_> = w.canonical_chain().iter().map(|b| (**b).clone()).collect();
    let s = interval_stats(&blocks);
    let target = w.params.consensus.block_interval_ms as f64;
    let dev = (s.mean_ms - target).abs() / target;
    let el = t.elapsed();
    outcome(
        s.count >= 500 && dev <= 0.30 && within(el, 10.0),
        format!(
            "{} blocks, mean interval {:.1} ms vs target {target} ms ({:+.1}%), {:.2} s",
            s.count,
            s.mean_ms,
            (s.mean_ms - target) / target * 100.0,
            el.as_secs_f64()
        ),
    )
}

fn trust_closure() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let addr = |n: u8| fedtrust::crypto::Address([n; 20]);
    let mut violations = 0u64;
    let mut folds = 0u64;
    for _ in 0..100_000 {
        let mut st = TrustState::new(0);
        let csps = rng.gen_range(2..=4u8);
        for c in 1..=csps {
            let ws = Fixed::from_raw(rng.gen_range(0..=SCALE));
            let wa = Fixed::from_raw(rng.gen_range(1..=SCALE));
            st.register(addr(c), ws, wa);
        }
        for _ in 0..rng.gen_range(1..=8) {
            let rater = rng.gen_range(1..=csps);
            let subject = (rater % csps) + 1;
            let role = if rng.gen_bool(0.5) {
                FeedbackRole::Home
            } else {
                FeedbackRole::Foreign
            };
            let label = FeedbackLabel::from_code(role, rng.gen_range(0..5)).expect("label");
            st.apply_feedback(&FeedbackPayload {
                rater: addr(rater),
                subject: addr(subject),
                user: addr(100 + rng.gen_range(0..3)),
                label: label.code(),
                role,
                token_id: Digest::ZERO,
            });
            folds += 1;
            let bad = st.scores().all_values().filter(|v| !v.is_unit()).count()
                + st.csps().filter(|c| !st.trust(*c).is_unit()).count();
            violations += bad as u64;
        }
    }
    let el = t.elapsed();
    outcome(
        violations == 0 && within(el, 5.0),
        format!(
            "100000 sequences, {folds} folds, {violations} violations, {:.2} s",
            el.as_secs_f64()
        ),
    )
}

fn replay_oracle() -> Outcome {
    let t = Instant::now();
    let mut mismatches = Vec::new();
    let mut blocks = 0;
    for seed in 1..=10 {
        let w = run(bundled(seed));
        let bytes = w.ledger_file().to_bytes();
        let file = LedgerFile::from_bytes(&bytes).expect("own ledger decodes");
        blocks += file.blocks.len();
        let replayed = replay_from_chain(&file.blocks, w.params.epoch_blocks);
        if w.nodes[w.reference_node()].tip().trust != replayed {
            mismatches.push(seed);
        }
    }
    let el = t.elapsed();
    outcome(
        mismatches.is_empty() && within(el, 30.0),
        format!(
            "10 runs, {blocks} blocks, mismatching seeds {mismatches:?}, {:.2} s",
            el.as_secs_f64()
        ),
    )
}

fn fixed_point_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: u128 = 0;
    for _ in 0..1000 {
        let t = Fixed::from_raw(rng.gen_range(0..=SCALE));
        let x = Fixed::from_raw(rng.gen_range(0..=SCALE));
        let (mut c, mut a) = (Fixed::ONE, Fixed::ZERO);
        for _ in 0..50 {
            c = cred_update(c, t, x);
            a = auth_update(a, x);
        }
        // distances in units of 1e-24, exact
        let s = SCALE as u128;
        let dc = (c.raw() as u128 * s).abs_diff(t.raw() as u128 * x.raw() as u128);
        let da = (a.raw() as u128 * s).abs_diff(x.raw() as u128 * s);
        worst = worst.max(dc).max(da);
    }
    let worst_f = worst as f64 / 1e24;
    outcome(
        worst_f <= 1e-12,
        format!("1000 (T, x) pairs, 50 steps, worst distance {worst_f:.3e}"),
    )
}

fn weight_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = 0;
    for _ in 0..1000 {
        let sat = Fixed::from_raw(rng.gen_range(0..=SCALE));
        let auth = Fixed::from_raw(rng.gen_range(0..=SCALE));
        let w = Fixed::from_raw(rng.gen_range(1..=SCALE));
        let equal = Weights { sat: w, auth: w };
        let sat_only = Weights {
            sat: w,
            auth: Fixed::ZERO,
        };
        if overall_trust(sat, auth, &equal) != Ok(sat.midpoint(auth)) {
            failures += 1;
        }
        if overall_trust(sat, auth, &sat_only) != Ok(sat) {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("1000 pairs, {failures} inexact results"))
}

fn tamper_detection() -> Outcome {
    let c = config(
        "seed = 6\nduration_ms = 8000",
        &(nodes(&[0.4, 0.3, 0.3], &[])
            + r#"
[[actions]]
kind = "register_user"
at_ms = 100
user = "u"
home = 0
[[actions]]
kind = "traffic"
at_ms = 300
end_ms = 7500
every_ms = 250
iaas_fraction = 0.3
"#),
    );
    let w = run(c);
    let bytes = w.ledger_file().to_bytes();
    let dir = tempfile::TempDir::new().expect("tempdir");
    let path = dir.path().join("mutated.ctsim");
    let path_s = path.to_str().expect("utf-8 path").to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut detected = 0;
    for _ in 0..1000 {
        let mut b = bytes.clone();
        let i = rng.gen_range(0..b.len());
        b[i] ^= rng.gen_range(1..=255u8);
        std::fs::write(&path, &b).expect("write mutated ledger");
        let (mut out, mut err) = (Vec::new(), Vec::new());
        if run_args(["fedtrust", "verify", path_s.as_str()], &mut out, &mut err) == EXIT_INVALID {
            detected += 1;
        }
    }
    outcome(
        detected == 1000,
        format!(
            "{detected}/1000 mutations of a {}-byte, {}-block ledger detected",
            bytes.len(),
            w.canonical_chain().len()
        ),
    )
}

fn double_issuance() -> Outcome {
    let mut worst_inclusions = 0;
    let mut worst_grants = 0;
    let mut attempts = 0;
    for seed in 1..=10 {
        let mut c = bundled(seed);
        c.nodes[0].behavior = Behavior::DoubleIssuer;
        let w = run(c);
        let mut on_chain: BTreeMap<Digest, usize> = BTreeMap::new();
        for b in w.canonical_chain() {
            for tx in &b.txs {
                if let Some(t) = tx.token() {
                    *on_chain.entry(t.token_id).or_default() += 1;
                }
            }
        }
        let mut granted: BTreeMap<Digest, usize> = BTreeMap::new();
        for r in &w.fed.requests {
            if r.state == RequestState::Granted && !r.local {
                *granted
                    .entry(r.token.as_ref().expect("granted token").token_id)
                    .or_default() += 1;
            }
        }
        attempts += w.fed.requests.iter().filter(|r| r.id.ends_with("-dup")).count();
        worst_inclusions = worst_inclusions.max(on_chain.values().copied().max().unwrap_or(0));
        worst_grants = worst_grants.max(granted.values().copied().max().unwrap_or(0));
    }
    outcome(
        worst_inclusions <= 1 && worst_grants <= 1 && attempts > 0,
        format!(
            "10 seeds, {attempts} duplicate issuances, max inclusions per token {worst_inclusions}, max grants per token {worst_grants}"
        ),
    )
}

fn fork_convergence() -> Outcome {
    let interval = 300;
    let start = 3000;
    let heal = start + 20 * interval;
    let mut worst = 0;
    let mut failed = Vec::new();
    let mut forked = 0;
    for seed in 1..=10 {
        let head = format!(
            "seed = {seed}\nduration_ms = {}\n[[partitions]]\nstart_ms = {start}\nend_ms = {heal}\ngroups = [[0, 1], [2, 3]]\n",
            heal + 20 * interval
        );
        let mut w = World::new(config(&head, &nodes(&[0.25; 4], &[]))).expect("world");
        w.run_until(heal - 1);
        let tips = w.tips();
        if tips[0] != tips[2] {
            forked += 1;
        }
        let mut converged_at = None;
        let mut t = heal;
        while t <= heal + 10 * interval {
            w.run_until(t);
            let tips = w.tips();
            if tips.iter().all(|x| *x == tips[0]) {
                converged_at = Some(t - heal);
                break;
            }
            t += 10;
        }
        match converged_at {
            Some(d) => worst = worst.max(d),
            None => failed.push(seed),
        }
    }
    outcome(
        failed.is_empty(),
        format!(
            "10 seeds ({forked} forked during the partition), slowest convergence {worst} ms after heal, failing seeds {failed:?}"
        ),
    )
}

fn zero_trust_exclusion() -> Outcome {
    let c = config(
        "seed = 9\nduration_ms = 150000",
        &nodes(&[0.25; 4], &[None, None, None, Some(0.0)]),
    );
    let w = run(c);
    let excluded = w.nodes[3].keys.public_key();
    let mut accepted = 0;
    for n in &w.nodes {
        accepted += n
            .tree
            .blocks()
            .filter(|b| b.height() > 0 && b.header.generator_pub == excluded)
            .count();
    }
    let height = w.canonical_chain().len() - 1;
    outcome(
        accepted == 0,
        format!("500 intervals, chain height {height}, blocks by the zero-trust node held anywhere: {accepted}"),
    )
}

/// Share of canonical blocks produced by node 0, and the number of blocks.
fn share(stake: f64, trust: f64, seed: u64) -> (f64, usize) {
    let head = format!("seed = {seed}\nduration_ms = 100000000\nstop_at_height = 2000\nnormalize_stakes = true");
    let body = nodes(&[stake, 0.3, 0.3, 0.3], &[Some(trust), Some(0.5), Some(0.5), Some(0.5)]);
    let w = run(config(&head, &body));
    let chain = w.canonical_chain();
    let me = w.nodes[0].keys.public_key();
    let mine = chain.iter().skip(1).filter(|b| b.header.generator_pub == me).count();
    (mine as f64 / (chain.len() - 1) as f64, chain.len() - 1)
}

fn eligibility_monotonicity() -> Outcome {
    let by_stake: Vec<_> = [0.1, 0.2, 0.4].iter().map(|s| share(*s, 0.5, 10)).collect();
    let by_trust: Vec<_> = [0.2, 0.5, 0.9].iter().map(|t| share(0.3, *t, 11)).collect();
    let strict = |v: &[(f64, usize)]| v.windows(2).all(|p| p[0].0 < p[1].0);
    let enough = by_stake.iter().chain(&by_trust).all(|(_, n)| *n >= 2000);
    let fmt = |v: &[(f64, usize)]| v.iter().map(|(s, _)| format!("{s:.3}")).collect::<Vec<_>>().join(" < ");
    outcome(
        strict(&by_stake) && strict(&by_trust) && enough,
        format!(
            "share by stake 0.1/0.2/0.4: {}; by trust 0.2/0.5/0.9: {}; {} blocks per point",
            fmt(&by_stake),
            fmt(&by_trust),
            by_stake[0].1
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("block-interval calibration", block_interval),
        ("trust-closure fuzz", trust_closure),
        ("replay oracle", replay_oracle),
        ("fixed-point convergence", fixed_point_convergence),
        ("weight identities", weight_identities),
        ("tamper detection", tamper_detection),
        ("double issuance", double_issuance),
        ("fork convergence", fork_convergence),
        ("zero-trust exclusion", zero_trust_exclusion),
        ("eligibility monotonicity", eligibility_monotonicity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!(
            "{} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
