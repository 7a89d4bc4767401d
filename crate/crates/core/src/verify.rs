//! Offline ledger verification: decode, re-validate every block from
//! genesis and rebuild all derived state.

use std::fmt;
use std::path::Path;

use crate::crypto::Digest;
use crate::ledger::codec::DecodeError;
use crate::ledger::store::{LedgerFile, StoreError};
use crate::ledger::{Block, BlockReject};
use crate::state::{replay_chain, ChainParams, ChainSnapshot};

#[derive(Debug)]
pub struct Verified {
    pub params: ChainParams,
    pub blocks: Vec<Block>,
    pub tip: ChainSnapshot,
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("cannot read ledger: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Decode(StoreError),
    #[error("corrupt chain parameters: {0}")]
    Params(DecodeError),
    #[error("{0}")]
    Block(BlockReject),
}

/// First failure found in a ledger, in the form the CLI prints it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub reason: String,
    pub height: Option<u64>,
    pub txid: Option<Digest>,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.reason)?;
        if let Some(h) = self.height {
            write!(f, " at height {h}")?;
        }
        if let Some(t) = &self.txid {
            write!(f, " in tx {}", t.to_hex())?;
        }
        Ok(())
    }
}

impl VerifyError {
    /// `None` for I/O errors, which say nothing about the ledger itself.
    pub fn failure(&self) -> Option<Failure> {
        match self {
            VerifyError::Io(_) => None,
            VerifyError::Decode(StoreError::BadMagic) => Some(Failure {
                reason: "BAD_MAGIC".into(),
                height: None,
                txid: None,
            }),
            VerifyError::Decode(StoreError::Block { height, .. }) => Some(Failure {
                reason: "DECODE".into(),
                height: Some(*height),
                txid: None,
            }),
            VerifyError::Decode(_) | VerifyError::Params(_) => Some(Failure {
                reason: "BAD_PARAMS".into(),
                height: None,
                txid: None,
            }),
            VerifyError::Block(r) => Some(Failure {
                reason: r.reason.code().into(),
                height: Some(r.height),
                txid: r.txid,
            }),
        }
    }
}

pub fn verify_bytes(bytes: &[u8]) -> Result<Verified, VerifyError> {
    let file = LedgerFile::from_bytes(bytes).map_err(VerifyError::Decode)?;
    verify_file(file)
}

pub fn verify_file(file: LedgerFile) -> Result<Verified, VerifyError> {
    let params = ChainParams::from_bytes(&file.params).map_err(VerifyError::Params)?;
    let tip = replay_chain(&params, &file.blocks).map_err(VerifyError::Block)?;
    Ok(Verified {
        params,
        blocks: file.blocks,
        tip,
    })
}

pub fn verify_path(path: &Path) -> Result<Verified, VerifyError> {
    verify_bytes(&std::fs::read(path)?)
}
