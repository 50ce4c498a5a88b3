//! Handle through which cluster procedures reach the identity ledger.
//!
//! Procedures produce signed *intents*; the consensus layer materializes
//! input addresses from the committed chain at submission time. Signatures
//! cover only the payload, so a deferred intent (submitted after other
//! blocks landed) stays valid without re-signing.

use crate::crypto::{KeyPair, PublicKey, Signature};
use crate::ledger::{
    signing_digest, BlockRejected, InputAddress, Ledger, LookupError, Transaction, TxHeader,
    TxPayload, TxType,
};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdbcError {
    #[error("no quorum of live ledger maintainers")]
    NoQuorum,
    #[error("ledger rejected the block: {0}")]
    Rejected(BlockRejected),
    #[error("no committed transaction for generator")]
    UnknownGenerator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxIntent {
    pub tx_type: TxType,
    pub cluster_index: u32,
    pub generator: PublicKey,
    pub payload: TxPayload,
    pub signature: Signature,
}

impl TxIntent {
    pub fn signed(
        suite: &crate::crypto::CryptoSuite,
        tx_type: TxType,
        cluster_index: u32,
        payload: TxPayload,
        signer: &KeyPair,
    ) -> Self {
        let signature = suite.sign(&signer.secret, &signing_digest(&payload));
        TxIntent {
            tx_type,
            cluster_index,
            generator: payload.public_key.clone(),
            payload,
            signature,
        }
    }

    /// Build the concrete transaction against a committed ledger view.
    pub fn materialize(&self, ledger: &Ledger) -> Result<Transaction, LookupError> {
        let input_address = if self.tx_type == TxType::Initialization {
            InputAddress::Null
        } else {
            ledger.input_address_for(&self.generator)?
        };
        Ok(Transaction {
            header: TxHeader {
                input_address,
                cluster_index: self.cluster_index,
                generator: self.generator.clone(),
            },
            tx_type: self.tx_type,
            payload: self.payload.clone(),
            signature: self.signature.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommitReceipt {
    pub height: u64,
    pub block_hash: crate::crypto::Digest32,
    pub leader: PublicKey,
    pub delay_ms: f64,
}

/// The ledger service as seen by cluster procedures.
pub trait IdbcHandle {
    /// Commit the intents as one block. All intents must have distinct
    /// generators.
    fn submit(&mut self, intents: &[TxIntent], now_ms: u64) -> Result<CommitReceipt, IdbcError>;

    /// Committed view used to decide protocol actions (candidate lookups,
    /// status checks). In a healthy system this is the leader's replica.
    fn ledger(&self) -> &Ledger;

    /// Keypair of the current leader, electing one if necessary.
    fn leader_keypair(&mut self, now_ms: u64) -> Result<KeyPair, IdbcError>;

    /// Swap a disconnected head out of the maintainer set for its
    /// replacement, handing the replacement a full chain copy.
    fn replace_maintainer(&mut self, old: &PublicKey, replacement: KeyPair);
}
