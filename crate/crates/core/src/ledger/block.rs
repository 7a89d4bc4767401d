use super::codec::{DecodeError, Reader, Writer};
use super::tx::Transaction;
use crate::crypto::{self, Digest, KeyPair, PublicKey, Signature};
use crate::fixed::Fixed;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_block: Digest,
    pub tx_root: Digest,
    /// Simulated milliseconds.
    pub timestamp: u64,
    pub generator_pub: PublicKey,
    /// Proof of eligibility. For the genesis block this slot commits to the
    /// chain parameters instead.
    pub prf: Digest,
    pub base_target: Fixed,
    pub sig: Signature,
}

impl BlockHeader {
    fn encode_unsigned(&self, w: &mut Writer) {
        w.u64(self.height)
            .digest(&self.prev_block)
            .digest(&self.tx_root)
            .u64(self.timestamp)
            .public_key(&self.generator_pub)
            .digest(&self.prf)
            .u64(self.base_target.raw());
    }

    /// `h_blk`: hash of the header without its signature.
    pub fn hash(&self) -> Digest {
        let mut w = Writer::new();
        self.encode_unsigned(&mut w);
        crypto::hash(&w.into_bytes())
    }

    pub fn sign(&mut self, key: &KeyPair) {
        self.generator_pub = key.public_key();
        self.sig = crypto::sign(key, &self.hash());
    }

    pub fn signature_valid(&self) -> bool {
        crypto::verify(&self.generator_pub, &self.hash(), &self.sig)
    }

    fn encode(&self, w: &mut Writer) {
        self.encode_unsigned(w);
        w.signature(&self.sig);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(BlockHeader {
            height: r.u64()?,
            prev_block: r.digest()?,
            tx_root: r.digest()?,
            timestamp: r.u64()?,
            generator_pub: r.public_key()?,
            prf: r.digest()?,
            base_target: Fixed::from_raw(r.u64()?),
            sig: r.signature()?,
        })
    }
}

/// Flat root: hash of the concatenated txids, in block order.
pub fn tx_root(txs: &[Transaction]) -> Digest {
    let mut buf = Vec::with_capacity(txs.len() * 32);
    for tx in txs {
        buf.extend_from_slice(&tx.txid.0);
    }
    crypto::hash(&buf)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<Transaction>,
}

impl Block {
    /// Header with link, root and timestamp filled in; prf, generator and
    /// signature left for the consensus layer.
    pub fn candidate(parent: &BlockHeader, timestamp: u64, base_target: Fixed, txs: Vec<Transaction>) -> Self {
        Block {
            header: BlockHeader {
                height: parent.height + 1,
                prev_block: parent.hash(),
                tx_root: tx_root(&txs),
                timestamp,
                generator_pub: PublicKey([0u8; 33]),
                prf: Digest::ZERO,
                base_target,
                sig: Signature([0u8; 64]),
            },
            txs,
        }
    }

    pub fn hash(&self) -> Digest {
        self.header.hash()
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    pub fn tx_root_valid(&self) -> bool {
        self.header.tx_root == tx_root(&self.txs)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.header.encode(&mut w);
        w.u32(self.txs.len() as u32);
        for tx in &self.txs {
            w.var(&tx.to_bytes());
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let header = BlockHeader::decode(&mut r)?;
        let n = r.u32()?;
        let mut txs = Vec::new();
        for _ in 0..n {
            txs.push(Transaction::from_bytes(r.var()?)?);
        }
        r.finish()?;
        Ok(Block { header, txs })
    }
}
