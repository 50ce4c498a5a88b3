//! The identity-management blockchain (IDBC): generator-chained
//! transactions, Merkle-rooted blocks, inclusion proofs, and smart-contract
//! style validation of head-candidate legality and UAV state changes.

pub mod block;
pub mod chain;
pub mod merkle;
pub mod state;
pub mod tx;
pub mod wire;

pub use block::{Block, GENESIS_PREV_HASH};
pub use chain::{verify_chain, Ledger, LookupError, Registration};
pub use merkle::{merkle_proof, merkle_root, verify_proof, MerkleError, MerkleProof, SiblingSide};
pub use state::{BlockRejected, ClusterView, LedgerState, RejectReason, TxLocator, UavRecord};
pub use tx::{
    signing_digest, CandidateInfo, InputAddress, KeyUpdateInfo, StatusTransition, TaskRecordEntry,
    TaskRecordInfo, Transaction, TxExtra, TxHeader, TxPayload, TxType,
};
