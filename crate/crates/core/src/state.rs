//! Chain parameters and the combined view (ledger indices, consensus
//! bookkeeping, trust model) at one chain head.

use std::collections::BTreeMap;

use crate::consensus::{self, ConsensusParams, ConsensusState, Eligibility, TipInfo};
use crate::crypto::{self, Address, Digest, KeyPair, PublicKey, Signature};
use crate::fixed::Fixed;
use crate::ledger::codec::{DecodeError, Reader, Writer};
use crate::ledger::{tx_root, Block, BlockHeader, BlockReject, LedgerState, Reason, Transaction};
use crate::trust::TrustState;

const PARAMS_VERSION: u8 = 1;

/// Parameters every node must agree on. Their hash is stored in the
/// genesis header, so a ledger file carries them tamper-evidently.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainParams {
    pub consensus: ConsensusParams,
    /// CSPs whose consensus trust is fixed regardless of the trust model.
    pub trust_pins: BTreeMap<Address, Fixed>,
    /// Blocks per trust epoch; 0 for a single epoch.
    pub epoch_blocks: u64,
}

impl ChainParams {
    pub fn new(consensus: ConsensusParams) -> Self {
        ChainParams {
            consensus,
            trust_pins: BTreeMap::new(),
            epoch_blocks: 0,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.consensus;
        let mut w = Writer::new();
        w.u8(PARAMS_VERSION)
            .u64(c.base_target.raw())
            .u32(c.prefix_bits)
            .u64(c.block_interval_ms)
            .u64(c.time_cap)
            .u64(self.epoch_blocks)
            .u16(self.trust_pins.len() as u16);
        for (addr, t) in &self.trust_pins {
            w.address(addr).u64(t.raw());
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let version = r.u8()?;
        if version != PARAMS_VERSION {
            return Err(DecodeError::BadTag {
                what: "parameter version",
                tag: version,
            });
        }
        let consensus = ConsensusParams {
            base_target: Fixed::from_raw(r.u64()?),
            prefix_bits: r.u32()?,
            block_interval_ms: r.u64()?,
            time_cap: r.u64()?,
        };
        let epoch_blocks = r.u64()?;
        let n = r.u16()?;
        let mut trust_pins = BTreeMap::new();
        for _ in 0..n {
            trust_pins.insert(r.address()?, Fixed::from_raw(r.u64()?));
        }
        r.finish()?;
        let p = ChainParams {
            consensus,
            trust_pins,
            epoch_blocks,
        };
        // a non-canonical encoding (unsorted or repeated pins) is refused
        if p.to_bytes() != bytes {
            return Err(DecodeError::BadTag {
                what: "trust pin order",
                tag: 0,
            });
        }
        Ok(p)
    }

    /// Value committed to by the genesis header.
    pub fn commitment(&self) -> Digest {
        crypto::hash(&self.to_bytes())
    }
}

/// Genesis block: registrations of the founding CSPs, signed by `founder`
/// (which must be among them), with the parameter commitment in the proof
/// slot.
pub fn genesis_block(
    params: &ChainParams,
    founder: &KeyPair,
    registrations: Vec<Transaction>,
    timestamp: u64,
) -> Block {
    let mut header = BlockHeader {
        height: 0,
        prev_block: Digest::ZERO,
        tx_root: tx_root(&registrations),
        timestamp,
        generator_pub: founder.public_key(),
        prf: params.commitment(),
        base_target: params.consensus.base_target,
        sig: Signature([0u8; 64]),
    };
    header.sign(founder);
    Block {
        header,
        txs: registrations,
    }
}

/// Everything a node knows at one chain head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainSnapshot {
    pub header: BlockHeader,
    pub ledger: LedgerState,
    pub consensus: ConsensusState,
    pub trust: TrustState,
    /// Sum of the generators' consensus trust along the chain, raw units.
    pub cumulative_trust: u128,
    pub genesis_hash: Digest,
    pub genesis_time: u64,
}

impl ChainSnapshot {
    pub fn genesis(params: &ChainParams, blk: &Block) -> Result<ChainSnapshot, BlockReject> {
        let h = &blk.header;
        if h.prf != params.commitment() || h.base_target != params.consensus.base_target {
            return Err(BlockReject::block(Reason::BadGenesis, 0));
        }
        let ledger = LedgerState::genesis(blk)?;
        if !ledger.is_registered(&h.generator_pub) {
            return Err(BlockReject::block(Reason::UnknownGenerator, 0));
        }
        if !h.signature_valid() {
            return Err(BlockReject::block(Reason::BadSignature, 0));
        }
        let mut trust = TrustState::new(params.epoch_blocks);
        trust.apply_block(blk);
        let genesis_hash = blk.hash();
        let mut consensus = ConsensusState::default();
        consensus.sync_registrations(ledger.registrations(), &genesis_hash, h.timestamp);
        Ok(ChainSnapshot {
            header: h.clone(),
            ledger,
            consensus,
            trust,
            cumulative_trust: 0,
            genesis_hash,
            genesis_time: h.timestamp,
        })
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    pub fn hash(&self) -> Digest {
        self.ledger.tip
    }

    pub fn tip_info(&self) -> TipInfo {
        TipInfo {
            height: self.header.height,
            cumulative_trust: self.cumulative_trust,
            hash: self.ledger.tip,
        }
    }

    /// `t_csp` as consensus sees it at this head.
    pub fn consensus_trust(&self, params: &ChainParams, csp: &Address) -> Fixed {
        match params.trust_pins.get(csp) {
            Some(t) => *t,
            None => self.trust.consensus_trust(*csp),
        }
    }

    /// Eligibility of a registered CSP to extend this head at `now`.
    pub fn eligibility(&self, params: &ChainParams, pub_key: &PublicKey, now: u64) -> Option<Eligibility> {
        let addr = pub_key.address();
        let csp = self.consensus.get(&addr)?;
        if !self.ledger.is_registered(pub_key) {
            return None;
        }
        let t = self.consensus_trust(params, &addr);
        Some(consensus::evaluate_eligibility(&params.consensus, csp, t, pub_key, now))
    }

    /// Header checks only; cheap enough to run before the transactions.
    pub fn validate_header(&self, params: &ChainParams, blk: &Block) -> Result<(), BlockReject> {
        consensus::validate_header(
            blk,
            &params.consensus,
            &self.header,
            &self.consensus,
            |pk| self.ledger.is_registered(pk),
            |a| self.consensus_trust(params, a),
        )
    }

    /// Validates `blk` as the child of this head and returns the view after
    /// it. Nothing is modified on failure.
    pub fn extend(&self, params: &ChainParams, blk: &Block) -> Result<ChainSnapshot, BlockReject> {
        self.validate_header(params, blk)?;
        let ledger = self.ledger.apply_block(blk)?;
        let generator = blk.header.generator_pub.address();
        let gen_trust = self.consensus_trust(params, &generator);
        let mut trust = self.trust.clone();
        trust.apply_block(blk);
        let mut consensus = self.consensus.clone();
        consensus.record_generation(&blk.header);
        consensus.sync_registrations(ledger.registrations(), &self.genesis_hash, self.genesis_time);
        Ok(ChainSnapshot {
            header: blk.header.clone(),
            ledger,
            consensus,
            trust,
            cumulative_trust: self.cumulative_trust + gen_trust.raw() as u128,
            genesis_hash: self.genesis_hash,
            genesis_time: self.genesis_time,
        })
    }
}

/// Validates a whole chain from genesis. Returns the view at its tip, or
/// the first rejection.
pub fn replay_chain(params: &ChainParams, blocks: &[Block]) -> Result<ChainSnapshot, BlockReject> {
    let (first, rest) = blocks.split_first().ok_or(BlockReject::block(Reason::BadGenesis, 0))?;
    let mut snap = ChainSnapshot::genesis(params, first)?;
    for b in rest {
        snap = snap.extend(params, b)?;
    }
    Ok(snap)
}
