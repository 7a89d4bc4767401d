//! Deterministic discrete-event simulation of the CSP network.
//!
//! All randomness derives from the scenario seed. Events fire in
//! `(fire_at, seq)` order, so a given config always produces the same
//! chains, trust states and event log.

pub mod log;
pub mod node;
pub mod queue;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{chain_params, Action, Behavior, ConfigError, ScenarioConfig};
use crate::crypto::{self, Digest, KeyPair};
use crate::federation::{Federation, ProtocolEvent};
use crate::fixed::Fixed;
use crate::ledger::store::LedgerFile;
use crate::ledger::{build_register_tx, Block, Reason, Transaction};
use crate::state::{genesis_block, ChainParams, ChainSnapshot};

pub use log::EventLog;
pub use node::{BlockTree, Mempool, Node};
pub use queue::{EventQueue, PastDated};

#[derive(Clone, Debug)]
pub enum Event {
    SlotTick,
    DeliverTx {
        from: usize,
        to: usize,
        tx: Arc<Transaction>,
    },
    DeliverBlocks {
        from: usize,
        to: usize,
        blocks: Vec<Arc<Block>>,
    },
    Action(usize),
    PartitionStart(usize),
    PartitionEnd(usize),
    Protocol(ProtocolEvent),
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Schedule(#[from] PastDated),
    #[error("partition groups are invalid: {0}")]
    Groups(String),
}

/// Key of node `i` under `seed`.
pub fn node_keys(seed: u64, i: usize) -> KeyPair {
    let d = crypto::hash_parts(&[b"fedtrust-node", &seed.to_be_bytes(), &(i as u64).to_be_bytes()]);
    crypto::generate_keypair(&d.0)
}

fn stream(seed: u64, label: &[u8]) -> ChaCha8Rng {
    let d = crypto::hash_parts(&[b"fedtrust-rng", label, &seed.to_be_bytes()]);
    ChaCha8Rng::from_seed(d.0)
}

pub struct World {
    pub cfg: ScenarioConfig,
    pub params: ChainParams,
    pub genesis: Arc<Block>,
    pub nodes: Vec<Node>,
    pub log: EventLog,
    pub fed: Federation,
    pub(crate) queue: EventQueue<Event>,
    net_rng: ChaCha8Rng,
    pub(crate) crypto_rng: ChaCha8Rng,
    pub(crate) traffic_rng: ChaCha8Rng,
    /// Group index of every node while a partition is active.
    partition: Option<Vec<usize>>,
    slot: u64,
    stopped: bool,
    /// Last canonical height of the reporting node for which a trust table
    /// was logged.
    last_trust_report: u64,
}

impl World {
    pub fn new(cfg: ScenarioConfig) -> Result<World, SimError> {
        cfg.validate()?;
        let n = cfg.nodes.len();
        let keys: Vec<KeyPair> = (0..n).map(|i| node_keys(cfg.seed, i)).collect();
        let addresses: Vec<_> = keys.iter().map(|k| k.address()).collect();
        let params = chain_params(&cfg, &addresses);
        let shares = cfg.stake_shares();
        let regs: Vec<Transaction> = cfg
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, nc)| nc.genesis)
            .map(|(i, nc)| {
                build_register_tx(
                    &keys[i],
                    Fixed::from_f64(nc.weight_sat),
                    Fixed::from_f64(nc.weight_auth),
                    shares[i],
                    Digest::ZERO,
                )
            })
            .collect();
        let genesis = genesis_block(&params, &keys[0], regs, 0);
        let snap = ChainSnapshot::genesis(&params, &genesis).expect("generated genesis is valid");
        let nodes = keys
            .into_iter()
            .enumerate()
            .map(|(i, k)| Node {
                index: i,
                name: cfg.node_name(i),
                address: k.address(),
                keys: k,
                behavior: cfg.nodes[i].behavior,
                tree: BlockTree::new(genesis.clone(), snap.clone()),
                mempool: Mempool::default(),
                users: Default::default(),
                next_user_index: 0,
                next_nonce: 0,
                last_tx: Digest::ZERO,
                consumed_tokens: Default::default(),
                pending: Vec::new(),
                forged: 0,
            })
            .collect();
        let mut w = World {
            net_rng: stream(cfg.seed, b"net"),
            crypto_rng: stream(cfg.seed, b"crypto"),
            traffic_rng: stream(cfg.seed, b"traffic"),
            params,
            genesis: Arc::new(genesis),
            nodes,
            log: EventLog::default(),
            fed: Federation::default(),
            queue: EventQueue::default(),
            partition: None,
            slot: 0,
            stopped: false,
            last_trust_report: 0,
            cfg,
        };
        w.log_genesis();
        w.queue.schedule(w.cfg.consensus.slot_ms, Event::SlotTick)?;
        for (i, a) in w.cfg.actions.iter().enumerate() {
            w.queue.schedule(a.at_ms(), Event::Action(i))?;
        }
        for (i, p) in w.cfg.partitions.iter().enumerate() {
            w.queue.schedule(p.start_ms, Event::PartitionStart(i))?;
            w.queue.schedule(p.end_ms, Event::PartitionEnd(i))?;
        }
        Ok(w)
    }

    fn log_genesis(&mut self) {
        let members: Vec<_> = self
            .nodes
            .iter()
            .filter(|n| self.cfg.nodes[n.index].genesis)
            .map(|n| json!({"node": n.index, "name": n.name, "address": n.address}))
            .collect();
        self.log.record(
            0,
            None,
            "genesis",
            json!({
                "hash": self.genesis.hash(),
                "members": members,
                "base_target": self.params.consensus.base_target.to_f64(),
                "block_interval_ms": self.params.consensus.block_interval_ms,
            }),
        );
    }

    pub fn now(&self) -> u64 {
        self.queue.now()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn schedule(&mut self, fire_at: u64, event: Event) -> Result<u64, PastDated> {
        self.queue.schedule(fire_at, event)
    }

    /// Index of the node whose canonical chain is persisted: the first
    /// honest one.
    pub fn reference_node(&self) -> usize {
        self.nodes
            .iter()
            .position(|n| n.behavior == Behavior::Honest)
            .unwrap_or(0)
    }

    pub fn tips(&self) -> Vec<Digest> {
        self.nodes.iter().map(|n| n.tree.tip()).collect()
    }

    /// Processes every event due at or before `end_ms`.
    pub fn run_until(&mut self, end_ms: u64) {
        while let Some(t) = self.queue.peek_time() {
            if t > end_ms || self.stopped {
                break;
            }
            let (_, _, ev) = self.queue.pop().expect("peeked");
            self.handle(ev);
        }
        if !self.stopped {
            self.queue.advance_to(end_ms);
        }
    }

    /// Runs the configured scenario to its end.
    pub fn run(&mut self) {
        self.run_until(self.cfg.duration_ms);
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::SlotTick => self.on_slot(),
            Event::DeliverTx { from, to, tx } => {
                if self.reachable(from, to) {
                    self.on_tx(to, tx);
                }
            }
            Event::DeliverBlocks { from, to, blocks } => {
                if self.reachable(from, to) {
                    self.on_blocks(to, blocks);
                }
            }
            Event::Action(i) => self.on_action(i),
            Event::PartitionStart(i) => {
                let groups = self.cfg.partitions[i].groups.clone();
                self.set_partition(&groups).expect("validated groups");
            }
            Event::PartitionEnd(_) => self.heal(),
            Event::Protocol(p) => self.on_protocol(p),
        }
    }

    fn on_action(&mut self, i: usize) {
        let action = self.cfg.actions[i].clone();
        match action {
            Action::RegisterUser {
                user,
                home,
                conduct,
                profile,
                ..
            } => {
                self.register_user(
                    home,
                    &user,
                    conduct,
                    profile.unwrap_or_else(|| format!("profile:{user}")).into_bytes(),
                );
            }
            Action::RegisterCsp {
                node,
                weight_sat,
                weight_auth,
                ..
            } => self.register_csp(node, weight_sat, weight_auth),
            Action::RequestAccess {
                id,
                user,
                target,
                resource,
                privileges,
                via,
                bad_credential,
                present_resource,
                ..
            } => {
                self.request_access(
                    id,
                    &user,
                    target,
                    &resource,
                    privileges,
                    via,
                    bad_credential,
                    present_resource,
                );
            }
            Action::IaasShare {
                id,
                borrower,
                lender,
                resource,
                privileges,
                ..
            } => {
                self.iaas_share_resource(id, borrower, lender, &resource, privileges);
            }
            Action::Feedback {
                request, role, label, ..
            } => {
                let label = label.parse().expect("validated label");
                self.submit_feedback_for(&request, role, label);
            }
            Action::Traffic {
                end_ms,
                every_ms,
                iaas_fraction,
                ..
            } => {
                self.traffic_step(iaas_fraction);
                let next = self.now() + every_ms;
                if next < end_ms {
                    self.queue.schedule(next, Event::Action(i)).expect("future");
                }
            }
        }
    }

    // ---- network -------------------------------------------------------

    pub fn reachable(&self, a: usize, b: usize) -> bool {
        match &self.partition {
            Some(g) => g[a] == g[b],
            None => true,
        }
    }

    fn latency(&mut self, from: usize, to: usize) -> u64 {
        let net = &self.cfg.network;
        let base = net
            .links
            .iter()
            .rev()
            .find(|l| l.from == from && l.to == to)
            .map_or(net.base_latency_ms, |l| l.latency_ms);
        base + self.net_rng.gen_range(0..=net.jitter_ms)
    }

    /// Sends `tx` to every peer reachable from `origin`; returns the
    /// number of deliveries scheduled.
    pub fn broadcast_tx(&mut self, origin: usize, tx: Arc<Transaction>) -> usize {
        let now = self.now();
        let mut sent = 0;
        for to in 0..self.nodes.len() {
            if to == origin || !self.reachable(origin, to) {
                continue;
            }
            let at = now + self.latency(origin, to);
            self.queue
                .schedule(
                    at,
                    Event::DeliverTx {
                        from: origin,
                        to,
                        tx: tx.clone(),
                    },
                )
                .expect("future");
            sent += 1;
        }
        sent
    }

    pub fn broadcast_blocks(&mut self, origin: usize, blocks: Vec<Arc<Block>>) -> usize {
        let now = self.now();
        let mut sent = 0;
        for to in 0..self.nodes.len() {
            if to == origin || !self.reachable(origin, to) {
                continue;
            }
            let at = now + self.latency(origin, to);
            self.queue
                .schedule(
                    at,
                    Event::DeliverBlocks {
                        from: origin,
                        to,
                        blocks: blocks.clone(),
                    },
                )
                .expect("future");
            sent += 1;
        }
        sent
    }

    pub fn set_partition(&mut self, groups: &[Vec<usize>]) -> Result<(), SimError> {
        crate::config::check_groups(groups, self.nodes.len()).map_err(SimError::Groups)?;
        let mut of = vec![0; self.nodes.len()];
        for (g, members) in groups.iter().enumerate() {
            for &m in members {
                of[m] = g;
            }
        }
        self.partition = Some(of);
        self.log
            .record(self.now(), None, "partition", json!({ "groups": groups }));
        Ok(())
    }

    /// Restores full connectivity; every node then sends its canonical
    /// chain and mempool to every peer so fork choice runs everywhere.
    pub fn heal(&mut self) {
        if self.partition.take().is_none() {
            return;
        }
        self.log.record(self.now(), None, "heal", json!({}));
        for i in 0..self.nodes.len() {
            let mut chain = self.nodes[i].tree.canonical();
            chain.remove(0);
            if !chain.is_empty() {
                self.broadcast_blocks(i, chain);
            }
            let txs: Vec<_> = self.nodes[i].mempool.transactions().cloned().collect();
            for tx in txs {
                self.broadcast_tx(i, tx);
            }
        }
    }

    // ---- transactions --------------------------------------------------

    pub(crate) fn mempool_ttl_ms(&self) -> u64 {
        self.cfg.protocol.mempool_ttl_intervals * self.params.consensus.block_interval_ms
    }

    /// Admits `tx` to node `i`'s mempool if it passes validation against
    /// that node's tip (transient failures are admitted and retried).
    pub(crate) fn admit_tx(&mut self, i: usize, tx: &Arc<Transaction>) -> Result<bool, Reason> {
        let now = self.now();
        let ttl = self.mempool_ttl_ms();
        let node = &mut self.nodes[i];
        if node.mempool.contains(&tx.txid) || node.tip().ledger.contains_tx(&tx.txid) {
            return Ok(false);
        }
        match node.tip().ledger.validate_transaction(tx) {
            Ok(()) => {}
            Err(r) if r.is_transient() => {}
            Err(Reason::DuplicateTx) => return Ok(false),
            Err(r) => return Err(r),
        }
        Ok(node.mempool.insert(tx.clone(), now, ttl))
    }

    fn on_tx(&mut self, to: usize, tx: Arc<Transaction>) {
        if let Err(r) = self.admit_tx(to, &tx) {
            self.log.record(
                self.now(),
                Some(to),
                "tx_rejected",
                json!({"txid": tx.txid, "tx_kind": tx.kind.as_str(), "reason": r}),
            );
        }
    }

    /// Admits a transaction created by node `origin` and broadcasts it;
    /// honest nodes never send what they would reject themselves.
    pub(crate) fn submit_tx(&mut self, origin: usize, tx: Transaction) -> Result<Digest, Reason> {
        let tx = Arc::new(tx);
        let now = self.now();
        match self.admit_tx(origin, &tx) {
            Ok(_) => {}
            Err(r) => {
                self.log.record(
                    now,
                    Some(origin),
                    "tx_rejected",
                    json!({"txid": tx.txid, "tx_kind": tx.kind.as_str(), "reason": r, "local": true}),
                );
                return Err(r);
            }
        }
        self.nodes[origin].last_tx = tx.txid;
        self.log.record(
            now,
            Some(origin),
            "tx_broadcast",
            json!({"txid": tx.txid, "tx_kind": tx.kind.as_str()}),
        );
        self.broadcast_tx(origin, tx.clone());
        Ok(tx.txid)
    }

    /// Broadcasts without local validation (adversarial nodes).
    pub(crate) fn force_tx(&mut self, origin: usize, tx: Transaction) -> Digest {
        let tx = Arc::new(tx);
        let now = self.now();
        let ttl = self.mempool_ttl_ms();
        self.nodes[origin].mempool.insert(tx.clone(), now, ttl);
        self.log.record(
            now,
            Some(origin),
            "tx_broadcast",
            json!({"txid": tx.txid, "tx_kind": tx.kind.as_str(), "forced": true}),
        );
        self.broadcast_tx(origin, tx.clone());
        tx.txid
    }

    // ---- blocks --------------------------------------------------------

    fn on_blocks(&mut self, to: usize, blocks: Vec<Arc<Block>>) {
        let mut changed = false;
        for b in blocks {
            changed |= self.deliver_block(to, b);
        }
        if changed {
            self.check_pending(to);
        }
    }

    /// Hands `blk` to node `i`; returns whether its tip moved.
    fn deliver_block(&mut self, i: usize, blk: Arc<Block>) -> bool {
        let now = self.now();
        let outcome = self.nodes[i].tree.receive(&self.params, blk, now);
        for a in &outcome.accepted {
            self.log.record(
                now,
                Some(i),
                "block_accepted",
                json!({"height": a.height, "hash": a.hash, "generator": a.generator, "txs": a.txs}),
            );
        }
        for r in &outcome.rejected {
            self.log.record(
                now,
                Some(i),
                "block_rejected",
                json!({
                    "height": r.reject.height,
                    "hash": r.hash,
                    "reason": r.reject.reason,
                    "txid": r.reject.txid,
                }),
            );
        }
        let Some(change) = outcome.tip_change else {
            return false;
        };
        if change.reorg_depth > 0 {
            self.log.record(
                now,
                Some(i),
                "fork_switch",
                json!({
                    "old_tip": change.old,
                    "new_tip": change.new,
                    "height": change.height,
                    "depth": change.reorg_depth,
                }),
            );
        }
        let ttl = self.mempool_ttl_ms();
        let node = &mut self.nodes[i];
        for b in &change.abandoned {
            for tx in &b.txs {
                node.mempool.insert(Arc::new(tx.clone()), now, ttl);
            }
        }
        for b in &change.adopted {
            for tx in &b.txs {
                node.mempool.remove(&tx.txid);
            }
        }
        node.mempool.expire(now);
        if i == self.reference_node() {
            self.maybe_log_trust(change.height);
            if self.cfg.stop_at_height.is_some_and(|h| change.height >= h) {
                self.stopped = true;
            }
        }
        true
    }

    fn maybe_log_trust(&mut self, height: u64) {
        let every = self.cfg.trust.report_every_blocks;
        if every == 0 || height / every <= self.last_trust_report / every {
            return;
        }
        self.last_trust_report = height;
        let i = self.reference_node();
        let snap = self.nodes[i].tip().clone();
        let rows: Vec<_> = crate::report::trust_rows(&snap.trust)
            .into_iter()
            .map(|r| json!({"csp": r.csp, "sat": r.sat, "auth": r.auth, "trust": r.trust}))
            .collect();
        self.log.record(
            self.now(),
            Some(i),
            "trust_report",
            json!({"height": height, "rows": rows}),
        );
    }

    fn on_slot(&mut self) {
        let now = self.now();
        self.slot += 1;
        self.log.record(now, None, "tick", json!({ "slot": self.slot }));
        for i in 0..self.nodes.len() {
            self.nodes[i].mempool.expire(now);
            self.try_generate(i);
            if self.stopped {
                return;
            }
            self.check_pending(i);
        }
        let next = now + self.cfg.consensus.slot_ms;
        self.queue.schedule(next, Event::SlotTick).expect("future");
    }

    /// Transactions for a block on top of `snap`, oldest first, each valid
    /// after the ones before it.
    fn pack(&mut self, i: usize, snap: &ChainSnapshot) -> Vec<Transaction> {
        let max = self.cfg.protocol.max_block_txs;
        let height = snap.height() + 1;
        let mut working = snap.ledger.clone();
        let mut txs = Vec::new();
        let mut dropped = Vec::new();
        let forced = self.nodes[i].behavior == Behavior::DoubleIssuer;
        let node = &self.nodes[i];
        for e in node.mempool.ordered() {
            if txs.len() >= max {
                break;
            }
            if working.contains_tx(&e.tx.txid) {
                continue;
            }
            match working.try_push(&e.tx, height) {
                Ok(()) => txs.push((*e.tx).clone()),
                Err(r) if r.is_transient() => {}
                Err(r @ (Reason::DuplicateToken | Reason::DuplicateNonce))
                    if forced && e.tx.issuer() == node.address =>
                {
                    // its own second copy of a token goes in regardless
                    let _ = r;
                    txs.push((*e.tx).clone());
                }
                Err(r) => dropped.push((e.tx.txid, e.tx.kind, r)),
            }
        }
        let now = self.now();
        for (txid, kind, r) in dropped {
            self.nodes[i].mempool.remove(&txid);
            self.log.record(
                now,
                Some(i),
                "tx_dropped",
                json!({"txid": txid, "tx_kind": kind.as_str(), "reason": r}),
            );
        }
        txs
    }

    fn try_generate(&mut self, i: usize) {
        let now = self.now();
        let snap = self.nodes[i].tip().clone();
        if now <= snap.header.timestamp {
            return;
        }
        let pub_key = self.nodes[i].keys.public_key();
        let Some(e) = snap.eligibility(&self.params, &pub_key, now) else {
            return;
        };
        if !e.eligible {
            return;
        }
        let txs = if self.nodes[i].behavior == Behavior::Tamperer {
            Vec::new()
        } else {
            self.pack(i, &snap)
        };
        let mut blk = Block::candidate(&snap.header, now, self.params.consensus.base_target, txs);
        let addr = self.nodes[i].address;
        let csp = snap.consensus.get(&addr).expect("registered").clone();
        let trust = snap.consensus_trust(&self.params, &addr);
        crate::consensus::generate_block(&mut blk, &self.params.consensus, &self.nodes[i].keys, &csp, trust)
            .expect("eligibility was just checked");
        if self.nodes[i].behavior == Behavior::Tamperer {
            let mutation = self.tamper(i, &mut blk);
            self.log.record(
                now,
                Some(i),
                "block_forged",
                json!({"height": blk.height(), "hash": blk.hash(), "mutation": mutation}),
            );
            self.broadcast_blocks(i, vec![Arc::new(blk)]);
            return;
        }
        let blk = Arc::new(blk);
        self.log.record(
            now,
            Some(i),
            "block_generated",
            json!({
                "height": blk.height(),
                "hash": blk.hash(),
                "txs": blk.txs.len(),
                "d_csp": e.d_csp.to_f64(),
                "prefix": e.prefix.to_f64(),
            }),
        );
        self.deliver_block(i, blk.clone());
        self.broadcast_blocks(i, vec![blk]);
        self.check_pending(i);
    }

    /// Corrupts a freshly generated block in one of several ways.
    fn tamper(&mut self, i: usize, blk: &mut Block) -> &'static str {
        let k = self.nodes[i].forged % 4;
        self.nodes[i].forged += 1;
        let keys = &self.nodes[i].keys;
        match k {
            0 => {
                blk.header.sig.0[7] ^= 0x01;
                "signature"
            }
            1 => {
                blk.header.prf = crypto::hash(&blk.header.prf.0);
                blk.header.sign(keys);
                "prf"
            }
            2 => {
                blk.header.tx_root = crypto::hash(&blk.header.tx_root.0);
                blk.header.sign(keys);
                "tx_root"
            }
            _ => {
                blk.header.base_target = Fixed::from_raw(blk.header.base_target.raw() / 2 + 1);
                blk.header.sign(keys);
                "base_target"
            }
        }
    }

    // ---- results -------------------------------------------------------

    /// Canonical chain of the reference node, genesis first.
    pub fn canonical_chain(&self) -> Vec<Arc<Block>> {
        self.nodes[self.reference_node()].tree.canonical()
    }

    pub fn ledger_file(&self) -> LedgerFile {
        LedgerFile {
            params: self.params.to_bytes(),
            blocks: self.canonical_chain().iter().map(|b| (**b).clone()).collect(),
        }
    }
}
