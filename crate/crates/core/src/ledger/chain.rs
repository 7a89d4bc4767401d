use im::{OrdMap, OrdSet};
use serde::Serialize;

use super::block::Block;
use super::tx::{AccessToken, FeedbackRole, Payload, Transaction};
use super::{BlockReject, Reason};
use crate::crypto::{Address, Digest, PublicKey};
use crate::fixed::Fixed;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Registration {
    pub public_key: PublicKey,
    pub address: Address,
    pub weight_sat: Fixed,
    pub weight_auth: Fixed,
    pub stake: Fixed,
    pub height: u64,
    /// Position in registration order.
    pub order: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenRecord {
    pub height: u64,
    pub txid: Digest,
    pub token: AccessToken,
}

/// Indices derived from a linear sequence of blocks. The maps share
/// structure, so a clone per block is cheap; forks keep independent views
/// that way.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LedgerState {
    pub height: u64,
    pub tip: Digest,
    pub tip_timestamp: u64,
    registry: OrdMap<Address, Registration>,
    tokens: OrdMap<Digest, TokenRecord>,
    nonces: OrdSet<(Address, u64)>,
    feedback: OrdSet<(Digest, FeedbackRole)>,
    txids: OrdSet<Digest>,
}

impl LedgerState {
    pub fn registration(&self, addr: &Address) -> Option<&Registration> {
        self.registry.get(addr)
    }

    pub fn registrations(&self) -> impl Iterator<Item = &Registration> {
        self.registry.values()
    }

    pub fn is_registered(&self, pk: &PublicKey) -> bool {
        self.registry.get(&pk.address()).is_some_and(|r| r.public_key == *pk)
    }

    pub fn token(&self, token_id: &Digest) -> Option<&TokenRecord> {
        self.tokens.get(token_id)
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn contains_tx(&self, txid: &Digest) -> bool {
        self.txids.contains(txid)
    }

    pub fn total_stake(&self) -> Fixed {
        self.registry.values().fold(Fixed::ZERO, |acc, r| acc + r.stake)
    }

    /// Full contextual validation of one transaction against this state.
    pub fn validate_transaction(&self, tx: &Transaction) -> Result<(), Reason> {
        tx.check_intrinsic()?;
        if self.txids.contains(&tx.txid) {
            return Err(Reason::DuplicateTx);
        }
        let issuer = tx.issuer();
        match &tx.payload {
            Payload::Token => {
                let token = &tx.outputs[0].token;
                if !self.is_registered(&tx.issuer_pub) {
                    return Err(Reason::UnknownIssuer);
                }
                if token.issuer != issuer {
                    return Err(Reason::IssuerMismatch);
                }
                if !self.registry.contains_key(&token.audience) {
                    return Err(Reason::UnknownAudience);
                }
                if self.tokens.contains_key(&token.token_id) {
                    return Err(Reason::DuplicateToken);
                }
                if self.nonces.contains(&(issuer, token.nonce)) {
                    return Err(Reason::DuplicateNonce);
                }
            }
            Payload::Feedback(f) => {
                if !self.is_registered(&tx.issuer_pub) || f.rater != issuer {
                    return Err(Reason::UnknownIssuer);
                }
                let Some(rec) = self.tokens.get(&f.token_id) else {
                    return Err(Reason::UnknownToken);
                };
                let t = &rec.token;
                let (rater, subject) = match f.role {
                    FeedbackRole::Foreign => (t.audience, t.issuer),
                    FeedbackRole::Home => (t.issuer, t.audience),
                };
                if f.rater != rater || f.subject != subject || f.user != t.user_pseudonym {
                    return Err(Reason::NotParticipant);
                }
                if self.feedback.contains(&(f.token_id, f.role)) {
                    return Err(Reason::DuplicateFeedback);
                }
            }
            Payload::Register(r) => {
                if r.public_key != tx.issuer_pub {
                    return Err(Reason::KeyMismatch);
                }
                if self.registry.contains_key(&r.public_key.address()) {
                    return Err(Reason::DuplicateCsp);
                }
                if !r.weight_sat.is_unit()
                    || !r.weight_auth.is_unit()
                    || (r.weight_sat == Fixed::ZERO && r.weight_auth == Fixed::ZERO)
                {
                    return Err(Reason::WeightRange);
                }
            }
        }
        Ok(())
    }

    /// Records an already validated transaction.
    fn record(&mut self, tx: &Transaction, height: u64) {
        self.txids.insert(tx.txid);
        match &tx.payload {
            Payload::Token => {
                let token = tx.outputs[0].token.clone();
                self.nonces.insert((token.issuer, token.nonce));
                self.tokens.insert(
                    token.token_id,
                    TokenRecord {
                        height,
                        txid: tx.txid,
                        token,
                    },
                );
            }
            Payload::Feedback(f) => {
                self.feedback.insert((f.token_id, f.role));
            }
            Payload::Register(r) => {
                let order = self.registry.len() as u32;
                let address = r.public_key.address();
                self.registry.insert(
                    address,
                    Registration {
                        public_key: r.public_key,
                        address,
                        weight_sat: r.weight_sat,
                        weight_auth: r.weight_auth,
                        stake: r.stake,
                        height,
                        order,
                    },
                );
            }
        }
    }

    /// Validates and records `tx`, for incremental block assembly.
    pub fn try_push(&mut self, tx: &Transaction, height: u64) -> Result<(), Reason> {
        self.validate_transaction(tx)?;
        self.record(tx, height);
        Ok(())
    }

    /// State after the genesis block, which may only carry registrations.
    pub fn genesis(blk: &Block) -> Result<LedgerState, BlockReject> {
        let h = &blk.header;
        if h.height != 0 || !h.prev_block.is_zero() {
            return Err(BlockReject::block(Reason::BadGenesis, 0));
        }
        if !blk.tx_root_valid() {
            return Err(BlockReject::block(Reason::BadTxRoot, 0));
        }
        let mut st = LedgerState {
            height: 0,
            tip: blk.hash(),
            tip_timestamp: h.timestamp,
            ..LedgerState::default()
        };
        if blk.txs.is_empty() {
            return Err(BlockReject::block(Reason::BadGenesis, 0));
        }
        for tx in &blk.txs {
            if !matches!(tx.payload, Payload::Register(_)) {
                return Err(BlockReject::tx(Reason::BadGenesis, 0, tx.txid));
            }
            st.try_push(tx, 0).map_err(|r| BlockReject::tx(r, 0, tx.txid))?;
        }
        Ok(st)
    }

    /// Applies every transaction of `blk` or none of them.
    pub fn apply_block(&self, blk: &Block) -> Result<LedgerState, BlockReject> {
        let h = &blk.header;
        if h.height != self.height + 1 || h.prev_block != self.tip {
            return Err(BlockReject::block(Reason::BadLink, h.height));
        }
        if !blk.tx_root_valid() {
            return Err(BlockReject::block(Reason::BadTxRoot, h.height));
        }
        let mut next = self.clone();
        for tx in &blk.txs {
            next.try_push(tx, h.height)
                .map_err(|r| BlockReject::tx(r, h.height, tx.txid))?;
        }
        next.height = h.height;
        next.tip = blk.hash();
        next.tip_timestamp = h.timestamp;
        Ok(next)
    }
}

/// A linear chain from genesis with its indices.
#[derive(Clone, Debug)]
pub struct Chain {
    blocks: Vec<Block>,
    state: LedgerState,
}

impl Chain {
    pub fn from_genesis(genesis: Block) -> Result<Chain, BlockReject> {
        let state = LedgerState::genesis(&genesis)?;
        Ok(Chain {
            blocks: vec![genesis],
            state,
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn height(&self) -> u64 {
        self.state.height
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain holds genesis")
    }

    pub fn validate_transaction(&self, tx: &Transaction) -> Result<(), Reason> {
        self.state.validate_transaction(tx)
    }

    /// Extends the chain; on error the chain is left untouched.
    pub fn apply_block(&mut self, blk: Block) -> Result<(), BlockReject> {
        self.state = self.state.apply_block(&blk)?;
        self.blocks.push(blk);
        Ok(())
    }

    pub fn lookup_token(&self, token_id: &Digest) -> Option<&AccessToken> {
        self.state.token(token_id).map(|r| &r.token)
    }
}
