//! Replayed on-chain state: UAV registry, per-cluster membership view, head
//! assignments, candidate bookkeeping, and key epochs. This is the state the
//! validation contracts run against; it is derived purely from committed
//! blocks, so every replica that holds the same chain prefix holds the same
//! state.

use crate::crypto::{Digest32, PublicKey};
use crate::protocol::{lml_digest, Fingerprint, UavStatus};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Rejection reasons for transactions and blocks.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    #[error("signature does not verify under the signer implied by the type")]
    BadSigner,
    #[error("input address missing, stale, or proof fails")]
    BadInputAddress,
    #[error("illegal UAV status transition")]
    IllegalStateTransition,
    #[error("generator is not the computed candidate head")]
    NotTheCandidate,
    #[error("candidate head is not Native")]
    CandidateNotNative,
    #[error("duplicate event for this UAV")]
    DuplicateEvent,
    #[error("generator is not a registered UAV")]
    UnknownGenerator,
    #[error("cluster index is not registered")]
    UnknownCluster,
    #[error("generator belongs to a different cluster")]
    WrongCluster,
    #[error("generator is the cluster head; head procedure required")]
    IsClusterHead,
    #[error("generator is not the cluster head")]
    NotTheHead,
    #[error("cluster head is still active")]
    HeadStillActive,
    #[error("key epoch does not increase / stale epoch")]
    StaleEpoch,
    #[error("LML digest does not match the replayed view")]
    BadLmlDigest,
    #[error("timestamp decreases along the generator chain")]
    BadTimestamp,
    #[error("fingerprint does not match the registered one")]
    FingerprintMismatch,
    #[error("payload fingerprint missing")]
    MissingFingerprint,
    #[error("payload public key or candidate disagrees with the generator")]
    GeneratorMismatch,
    #[error("initialization transaction outside the genesis block")]
    InitOutsideGenesis,
    #[error("block has no transactions")]
    EmptyBlock,
    #[error("block height does not extend the chain")]
    BadHeight,
    #[error("prev_hash does not match the previous block")]
    BadPrevHash,
    #[error("merkle root does not recompute from the transactions")]
    BadMerkleRoot,
    #[error("proposer is not an active head (or BS for genesis)")]
    BadProposer,
    #[error("two transactions in one block share a generator")]
    DuplicateGenerator,
    #[error("block timestamp decreases")]
    NonMonotonicTimestamp,
    #[error("genesis block must contain only initialization transactions")]
    GenesisMustBeInit,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("block {height} rejected{}: {reason}", tx_index.map(|i| format!(" (tx {i})")).unwrap_or_default())]
pub struct BlockRejected {
    pub height: u64,
    pub tx_index: Option<usize>,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UavRecord {
    pub cluster: u32,
    pub fingerprint: Fingerprint,
    pub status: UavStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterView {
    pub head: PublicKey,
    pub latest_candidate: Option<PublicKey>,
    pub key_epoch: u64,
}

/// Committed location of a generator's most recent transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxLocator {
    pub height: u64,
    pub tx_index: u32,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerState {
    pub bs_public_key: PublicKey,
    pub uavs: BTreeMap<PublicKey, UavRecord>,
    pub clusters: BTreeMap<u32, ClusterView>,
    pub latest_by_generator: BTreeMap<PublicKey, TxLocator>,
}

impl LedgerState {
    pub fn new(bs_public_key: PublicKey) -> Self {
        LedgerState {
            bs_public_key,
            uavs: BTreeMap::new(),
            clusters: BTreeMap::new(),
            latest_by_generator: BTreeMap::new(),
        }
    }

    /// Membership view of one cluster as (public key, status) entries.
    pub fn entries_of(&self, cluster: u32) -> BTreeMap<PublicKey, UavStatus> {
        self.uavs
            .iter()
            .filter(|(_, rec)| rec.cluster == cluster)
            .map(|(pk, rec)| (pk.clone(), rec.status))
            .collect()
    }

    pub fn view_digest(&self, cluster: u32) -> Digest32 {
        lml_digest(cluster, &self.entries_of(cluster))
    }

    pub fn status_of(&self, pk: &PublicKey) -> Option<UavStatus> {
        self.uavs.get(pk).map(|r| r.status)
    }

    pub fn head_of(&self, cluster: u32) -> Option<&PublicKey> {
        self.clusters.get(&cluster).map(|c| &c.head)
    }

    /// True when `pk` currently heads some cluster and is not Disconnected.
    pub fn is_active_head(&self, pk: &PublicKey) -> bool {
        self.clusters.values().any(|c| &c.head == pk)
            && self.status_of(pk) != Some(UavStatus::Disconnected)
    }
}
