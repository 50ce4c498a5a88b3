//! Blocks: hash-chained batches of transactions proposed by the current
//! ledger leader. The block hash covers the header only; transactions are
//! bound through the Merkle root.

use crate::crypto::{h2, Digest32, PublicKey};
use crate::ledger::merkle::{merkle_root, MerkleError};
use crate::ledger::tx::Transaction;
use crate::ledger::wire;
use serde::{Deserialize, Serialize};

pub const GENESIS_PREV_HASH: Digest32 = [0u8; 32];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest32,
    pub merkle_root: Digest32,
    pub proposer: PublicKey,
    pub timestamp_ms: u64,
    pub transactions: Vec<Transaction>,
}

impl Block {
    /// Assemble a block over `transactions`, computing the Merkle root from
    /// their canonical encodings.
    pub fn assemble(
        height: u64,
        prev_hash: Digest32,
        proposer: PublicKey,
        timestamp_ms: u64,
        transactions: Vec<Transaction>,
    ) -> Result<Block, MerkleError> {
        let leaves: Vec<Vec<u8>> = transactions.iter().map(wire::encode_tx).collect();
        let root = merkle_root(&leaves)?;
        Ok(Block {
            height,
            prev_hash,
            merkle_root: root,
            proposer,
            timestamp_ms,
            transactions,
        })
    }

    pub fn header_bytes(&self) -> Vec<u8> {
        wire::encode_block_header(self)
    }

    pub fn hash(&self) -> Digest32 {
        h2(&self.header_bytes())
    }

    /// Recompute the Merkle root from raw transaction bytes.
    pub fn recompute_merkle_root(&self) -> Result<Digest32, MerkleError> {
        let leaves: Vec<Vec<u8>> = self.transactions.iter().map(wire::encode_tx).collect();
        merkle_root(&leaves)
    }
}
