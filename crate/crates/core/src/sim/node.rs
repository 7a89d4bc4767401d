//! One CSP's replica: block tree with a view per block, mempool, and the
//! local federation state that never goes on chain.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use crate::config::Behavior;
use crate::consensus::compare_tips;
use crate::crypto::{Address, Digest, KeyPair};
use crate::ledger::{Block, BlockReject, Payload, Reason, Transaction};
use crate::state::{ChainParams, ChainSnapshot};

const MAX_ORPHANS: usize = 4096;

struct TreeEntry {
    block: Arc<Block>,
    snap: Arc<ChainSnapshot>,
}

/// Every valid block a node has seen, keyed by hash, plus the chosen tip.
pub struct BlockTree {
    entries: HashMap<Digest, TreeEntry>,
    genesis: Digest,
    tip: Digest,
    orphans: BTreeMap<Digest, Vec<Arc<Block>>>,
    orphan_count: usize,
    rejected: HashSet<Digest>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Accepted {
    pub height: u64,
    pub hash: Digest,
    pub generator: Address,
    pub txs: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejected {
    pub hash: Digest,
    pub reject: BlockReject,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TipChange {
    pub old: Digest,
    pub new: Digest,
    pub height: u64,
    /// Blocks abandoned from the old canonical chain.
    pub reorg_depth: u64,
    pub abandoned: Vec<Arc<Block>>,
    pub adopted: Vec<Arc<Block>>,
}

#[derive(Debug, Default)]
pub struct ReceiveOutcome {
    pub accepted: Vec<Accepted>,
    pub rejected: Vec<Rejected>,
    pub orphaned: usize,
    pub tip_change: Option<TipChange>,
}

impl BlockTree {
    pub fn new(genesis: Block, snap: ChainSnapshot) -> Self {
        let hash = genesis.hash();
        let mut entries = HashMap::new();
        entries.insert(
            hash,
            TreeEntry {
                block: Arc::new(genesis),
                snap: Arc::new(snap),
            },
        );
        BlockTree {
            entries,
            genesis: hash,
            tip: hash,
            orphans: BTreeMap::new(),
            orphan_count: 0,
            rejected: HashSet::new(),
        }
    }

    pub fn tip(&self) -> Digest {
        self.tip
    }

    pub fn tip_snapshot(&self) -> &Arc<ChainSnapshot> {
        &self.entries[&self.tip].snap
    }

    pub fn snapshot(&self, hash: &Digest) -> Option<&Arc<ChainSnapshot>> {
        self.entries.get(hash).map(|e| &e.snap)
    }

    pub fn block(&self, hash: &Digest) -> Option<&Arc<Block>> {
        self.entries.get(hash).map(|e| &e.block)
    }

    pub fn contains(&self, hash: &Digest) -> bool {
        self.entries.contains_key(hash)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Arc<Block>> {
        self.entries.values().map(|e| &e.block)
    }

    /// Canonical chain, genesis first.
    pub fn canonical(&self) -> Vec<Arc<Block>> {
        self.branch_from(self.tip, None)
    }

    /// Blocks from `stop` (exclusive; genesis inclusive when `None`) up to
    /// `from`, oldest first.
    fn branch_from(&self, from: Digest, stop: Option<Digest>) -> Vec<Arc<Block>> {
        let mut out = Vec::new();
        let mut cur = from;
        loop {
            if Some(cur) == stop {
                break;
            }
            let e = &self.entries[&cur];
            out.push(e.block.clone());
            if cur == self.genesis {
                break;
            }
            cur = e.block.header.prev_block;
        }
        out.reverse();
        out
    }

    fn common_ancestor(&self, a: Digest, b: Digest) -> Digest {
        let (mut a, mut b) = (a, b);
        let h = |d: &Digest| self.entries[d].block.height();
        while a != b {
            if h(&a) >= h(&b) {
                a = self.entries[&a].block.header.prev_block;
            } else {
                b = self.entries[&b].block.header.prev_block;
            }
        }
        a
    }

    /// Validates and inserts `blk` (and any buffered descendants), then
    /// re-runs fork choice.
    pub fn receive(&mut self, params: &ChainParams, blk: Arc<Block>, now: u64) -> ReceiveOutcome {
        let mut out = ReceiveOutcome::default();
        let mut work = vec![blk];
        while let Some(b) = work.pop() {
            let hash = b.hash();
            if self.entries.contains_key(&hash) || self.rejected.contains(&hash) {
                continue;
            }
            if b.header.timestamp > now {
                // from the future; not remembered, it may become valid
                out.rejected.push(Rejected {
                    hash,
                    reject: BlockReject::block(Reason::Timestamp, b.height()),
                });
                continue;
            }
            let Some(parent) = self.entries.get(&b.header.prev_block) else {
                if self.orphan_count < MAX_ORPHANS {
                    let list = self.orphans.entry(b.header.prev_block).or_default();
                    if !list.iter().any(|o| o.hash() == hash) {
                        list.push(b);
                        self.orphan_count += 1;
                        out.orphaned += 1;
                    }
                }
                continue;
            };
            match parent.snap.extend(params, &b) {
                Ok(snap) => {
                    out.accepted.push(Accepted {
                        height: b.height(),
                        hash,
                        generator: b.header.generator_pub.address(),
                        txs: b.txs.len(),
                    });
                    self.entries.insert(
                        hash,
                        TreeEntry {
                            block: b,
                            snap: Arc::new(snap),
                        },
                    );
                    if let Some(children) = self.orphans.remove(&hash) {
                        self.orphan_count -= children.len();
                        work.extend(children.into_iter().rev());
                    }
                }
                Err(reject) => {
                    self.rejected.insert(hash);
                    out.rejected.push(Rejected { hash, reject });
                }
            }
        }
        out.tip_change = self.choose_tip(out.accepted.iter().map(|a| a.hash));
        out
    }

    fn choose_tip(&mut self, candidates: impl Iterator<Item = Digest>) -> Option<TipChange> {
        let mut best = self.tip;
        for c in candidates {
            let a = self.entries[&c].snap.tip_info();
            let b = self.entries[&best].snap.tip_info();
            if compare_tips(&a, &b).is_gt() {
                best = c;
            }
        }
        if best == self.tip {
            return None;
        }
        let old = self.tip;
        let fork = self.common_ancestor(old, best);
        let abandoned = self.branch_from(old, Some(fork));
        let adopted = self.branch_from(best, Some(fork));
        self.tip = best;
        Some(TipChange {
            old,
            new: best,
            height: self.entries[&best].block.height(),
            reorg_depth: abandoned.len() as u64,
            abandoned,
            adopted,
        })
    }
}

#[derive(Clone, Debug)]
pub struct MempoolEntry {
    pub tx: Arc<Transaction>,
    pub received_at: u64,
    pub expires_at: u64,
    seq: u64,
}

/// Pending transactions keyed by txid.
#[derive(Clone, Debug, Default)]
pub struct Mempool {
    entries: BTreeMap<Digest, MempoolEntry>,
    next_seq: u64,
}

impl Mempool {
    pub fn contains(&self, txid: &Digest) -> bool {
        self.entries.contains_key(txid)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts `tx`; a second insertion of the same txid is a no-op.
    pub fn insert(&mut self, tx: Arc<Transaction>, now: u64, ttl_ms: u64) -> bool {
        if self.entries.contains_key(&tx.txid) {
            return false;
        }
        let expires_at = match &tx.payload {
            Payload::Token => tx.outputs[0].token.expires_at,
            _ => now.saturating_add(ttl_ms),
        };
        let seq = self.next_seq;
        self.next_seq += 1;
        self.entries.insert(
            tx.txid,
            MempoolEntry {
                tx,
                received_at: now,
                expires_at,
                seq,
            },
        );
        true
    }

    pub fn remove(&mut self, txid: &Digest) -> Option<MempoolEntry> {
        self.entries.remove(txid)
    }

    pub fn expire(&mut self, now: u64) -> usize {
        let before = self.entries.len();
        self.entries.retain(|_, e| e.expires_at > now);
        before - self.entries.len()
    }

    /// Oldest first.
    pub fn ordered(&self) -> Vec<&MempoolEntry> {
        let mut v: Vec<_> = self.entries.values().collect();
        v.sort_by_key(|e| (e.received_at, e.seq));
        v
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Arc<Transaction>> {
        self.entries.values().map(|e| &e.tx)
    }
}

/// Credential a home CSP keeps for one of its users.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalUser {
    pub name: String,
    pub credential: Digest,
    pub index: u32,
}

pub struct Node {
    pub index: usize,
    pub name: String,
    pub keys: KeyPair,
    pub address: Address,
    pub behavior: Behavior,
    pub tree: BlockTree,
    pub mempool: Mempool,
    /// Users registered here, by pseudonym.
    pub users: BTreeMap<Address, LocalUser>,
    pub next_user_index: u32,
    pub next_nonce: u64,
    /// Last transaction this node issued.
    pub last_tx: Digest,
    /// Tokens already honoured by this node as foreign CSP.
    pub consumed_tokens: BTreeSet<Digest>,
    /// Requests waiting for their token to reach this node's chain.
    pub pending: Vec<usize>,
    pub forged: u64,
}

impl Node {
    pub fn tip(&self) -> &Arc<ChainSnapshot> {
        self.tree.tip_snapshot()
    }

    pub fn is_registered(&self) -> bool {
        self.tip().ledger.is_registered(&self.keys.public_key())
    }
}
