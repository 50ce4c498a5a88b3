//! Deterministic candidate-head and backup-member selection.
//!
//! Both selections hash the XOR-fold of *all* cluster public keys (the full
//! LML key set, regardless of status) and reduce the digest onto a sorted
//! eligible list. Candidate selection uses `h1` over Native non-head members;
//! backup selection uses `h2` over connected task-holding members minus an
//! exclusion set. Every node holding the same LML computes the same result.

use crate::crypto::{derive_index, h1, h2, xor_fold, PublicKey};
use crate::protocol::UavStatus;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SelectError {
    #[error("no Native member available as candidate head")]
    NoCandidate,
    #[error("no eligible member to receive the backup copy")]
    NoBackupTarget,
}

/// Candidate head over a raw membership view (used by both the cluster
/// protocol and on-chain validation).
pub fn candidate_from_entries(
    entries: &BTreeMap<PublicKey, UavStatus>,
    head: &PublicKey,
) -> Result<PublicKey, SelectError> {
    let eligible: Vec<&PublicKey> = entries
        .iter()
        .filter(|(pk, status)| **status == UavStatus::Native && *pk != head)
        .map(|(pk, _)| pk)
        .collect();
    if eligible.is_empty() {
        return Err(SelectError::NoCandidate);
    }
    let keys: Vec<PublicKey> = entries.keys().cloned().collect();
    let folded = xor_fold(&keys).expect("LML is never empty");
    let idx = derive_index(&h1(&folded), eligible.len()).expect("eligible is non-empty");
    Ok(eligible[idx].clone())
}

/// Backup-copy target over a raw membership view: connected, task-eligible
/// members outside `exclude` (typically the head and the disconnected UAV).
pub fn backup_from_entries(
    entries: &BTreeMap<PublicKey, UavStatus>,
    exclude: &BTreeSet<PublicKey>,
) -> Result<PublicKey, SelectError> {
    let eligible: Vec<&PublicKey> = entries
        .iter()
        .filter(|(pk, status)| status.is_task_eligible() && !exclude.contains(*pk))
        .map(|(pk, _)| pk)
        .collect();
    if eligible.is_empty() {
        return Err(SelectError::NoBackupTarget);
    }
    let keys: Vec<PublicKey> = entries.keys().cloned().collect();
    let folded = xor_fold(&keys).expect("LML is never empty");
    let idx = derive_index(&h2(&folded), eligible.len()).expect("eligible is non-empty");
    Ok(eligible[idx].clone())
}
