use serde::{Deserialize, Serialize};

use super::tx::Tx;
use crate::codec::{self, Hash32};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalBlock {
    pub height: u64,
    pub prev_hash: Hash32,
    pub txs: Vec<Tx>,
    pub nonce: u64,
    /// Stored header hash; also the block's identity.
    pub pow_hash: Hash32,
}

pub fn tx_root(txs: &[Tx]) -> Hash32 {
    let hashes: Vec<Hash32> = txs.iter().map(Tx::hash).collect();
    Hash32::of("txs", &hashes)
}

pub fn header_hash(height: u64, prev_hash: &Hash32, root: &Hash32, nonce: u64) -> Hash32 {
    Hash32::of("block", &(height, prev_hash, root, nonce))
}

impl GlobalBlock {
    pub fn hash(&self) -> Hash32 {
        self.pow_hash
    }

    pub fn compute_pow_hash(&self) -> Hash32 {
        header_hash(self.height, &self.prev_hash, &tx_root(&self.txs), self.nonce)
    }

    pub fn meets(&self, difficulty_bits: u32) -> bool {
        self.pow_hash.leading_zero_bits() >= difficulty_bits
    }

    pub fn encoded(&self) -> Vec<u8> {
        codec::encode(self)
    }
}

/// Orders `txs` canonically and searches nonces upward from zero until the
/// header hash has `difficulty_bits` leading zero bits.
pub fn mine_block(mut txs: Vec<Tx>, height: u64, prev_hash: Hash32, difficulty_bits: u32) -> GlobalBlock {
    txs.sort_by_key(Tx::hash);
    let root = tx_root(&txs);
    let mut nonce = 0u64;
    loop {
        let pow_hash = header_hash(height, &prev_hash, &root, nonce);
        if pow_hash.leading_zero_bits() >= difficulty_bits {
            return GlobalBlock {
                height,
                prev_hash,
                txs,
                nonce,
                pow_hash,
            };
        }
        nonce += 1;
    }
}
