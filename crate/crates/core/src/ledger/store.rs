//! Ledger file: a `CTSIM1` header line, the length-prefixed chain
//! parameter record, then one length-prefixed serialized block per entry
//! starting at genesis.

use std::path::Path;

use super::block::Block;
use super::codec::{DecodeError, Reader, Writer};

pub const MAGIC: &[u8] = b"CTSIM1\n";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing or wrong format header (expected CTSIM1)")]
    BadMagic,
    #[error("corrupt parameter record: {0}")]
    Params(DecodeError),
    #[error("corrupt block entry at height {height}: {source}")]
    Block { height: u64, source: DecodeError },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerFile {
    pub params: Vec<u8>,
    pub blocks: Vec<Block>,
}

impl LedgerFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(MAGIC).var(&self.params);
        for b in &self.blocks {
            w.var(&b.to_bytes());
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<LedgerFile, StoreError> {
        if !bytes.starts_with(MAGIC) {
            return Err(StoreError::BadMagic);
        }
        let mut r = Reader::new(&bytes[MAGIC.len()..]);
        let params = r.var().map_err(StoreError::Params)?.to_vec();
        let mut blocks = Vec::new();
        while r.remaining() > 0 {
            let height = blocks.len() as u64;
            let raw = r.var().map_err(|source| StoreError::Block { height, source })?;
            let blk = Block::from_bytes(raw).map_err(|source| StoreError::Block { height, source })?;
            blocks.push(blk);
        }
        Ok(LedgerFile { params, blocks })
    }

    pub fn write(&self, path: &Path) -> Result<(), StoreError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<LedgerFile, StoreError> {
        LedgerFile::from_bytes(&std::fs::read(path)?)
    }
}
