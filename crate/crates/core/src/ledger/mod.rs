//! Transactions, access tokens, blocks and the chain indices built from
//! them.

mod block;
mod chain;
pub mod codec;
pub mod store;
mod tx;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use block::{tx_root, Block, BlockHeader};
pub use chain::{Chain, LedgerState, Registration, TokenRecord};
pub use tx::{
    build_feedback_tx, build_register_tx, build_token_tx, canonical_serialize, AccessToken, FeedbackPayload,
    FeedbackRole, Payload, RegisterPayload, Transaction, TxInput, TxKind, TxOutput, TxRefs,
};

use crate::crypto::{CryptoError, Digest};

/// Machine-readable rejection reasons for transactions and blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    Structure,
    BadTxid,
    BadSignature,
    BadToken,
    BadLabel,
    AudienceMismatch,
    DuplicateTx,
    UnknownIssuer,
    IssuerMismatch,
    UnknownAudience,
    DuplicateToken,
    DuplicateNonce,
    UnknownToken,
    NotParticipant,
    DuplicateFeedback,
    KeyMismatch,
    DuplicateCsp,
    WeightRange,
    BadGenesis,
    BadLink,
    BadTxRoot,
    Timestamp,
    BadBaseTarget,
    UnknownGenerator,
    PrfMismatch,
    NotEligible,
}

impl Reason {
    pub fn code(self) -> &'static str {
        match self {
            Reason::Structure => "STRUCTURE",
            Reason::BadTxid => "BAD_TXID",
            Reason::BadSignature => "BAD_SIGNATURE",
            Reason::BadToken => "BAD_TOKEN",
            Reason::BadLabel => "BAD_LABEL",
            Reason::AudienceMismatch => "AUDIENCE_MISMATCH",
            Reason::DuplicateTx => "DUPLICATE_TX",
            Reason::UnknownIssuer => "UNKNOWN_ISSUER",
            Reason::IssuerMismatch => "ISSUER_MISMATCH",
            Reason::UnknownAudience => "UNKNOWN_AUDIENCE",
            Reason::DuplicateToken => "DUPLICATE_TOKEN",
            Reason::DuplicateNonce => "DUPLICATE_NONCE",
            Reason::UnknownToken => "UNKNOWN_TOKEN",
            Reason::NotParticipant => "NOT_PARTICIPANT",
            Reason::DuplicateFeedback => "DUPLICATE_FEEDBACK",
            Reason::KeyMismatch => "KEY_MISMATCH",
            Reason::DuplicateCsp => "DUPLICATE_CSP",
            Reason::WeightRange => "WEIGHT_RANGE",
            Reason::BadGenesis => "BAD_GENESIS",
            Reason::BadLink => "BAD_LINK",
            Reason::BadTxRoot => "BAD_TX_ROOT",
            Reason::Timestamp => "TIMESTAMP",
            Reason::BadBaseTarget => "BAD_BASE_TARGET",
            Reason::UnknownGenerator => "UNKNOWN_GENERATOR",
            Reason::PrfMismatch => "PRF_MISMATCH",
            Reason::NotEligible => "NOT_ELIGIBLE",
        }
    }

    /// Reasons that may clear up once more blocks arrive (a referenced
    /// token or registration not yet on this node's chain).
    pub fn is_transient(self) -> bool {
        matches!(
            self,
            Reason::UnknownToken | Reason::UnknownIssuer | Reason::UnknownAudience
        )
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Why a block was refused, with the offending transaction when there is one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockReject {
    pub reason: Reason,
    pub height: u64,
    pub txid: Option<Digest>,
}

impl BlockReject {
    pub fn block(reason: Reason, height: u64) -> Self {
        BlockReject {
            reason,
            height,
            txid: None,
        }
    }

    pub fn tx(reason: Reason, height: u64, txid: Digest) -> Self {
        BlockReject {
            reason,
            height,
            txid: Some(txid),
        }
    }
}

impl fmt::Display for BlockReject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "block {} rejected: {}", self.height, self.reason)?;
        if let Some(txid) = self.txid {
            write!(f, " (tx {txid})")?;
        }
        Ok(())
    }
}

impl std::error::Error for BlockReject {}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("cannot build transaction: {0}")]
    Build(Reason),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}
