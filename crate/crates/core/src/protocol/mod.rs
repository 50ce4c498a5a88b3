//! Cluster-level identity management: the latest member list (LML), the
//! white-gray fingerprint list, cluster state with double-backed-up task
//! results, and the disconnection / reconnection / key-update procedures.

mod cluster;
mod hello;
mod idbc;
mod procedures;
pub mod select;
mod tasks;

pub use cluster::{Cluster, ClusterConfig, Task, TaskResultRecord, UavState};
pub use hello::{HelloConfig, HelloTracker};
pub use idbc::{CommitReceipt, IdbcError, IdbcHandle, TxIntent};
pub use procedures::{
    flush_pending, head_disconnection_procedure, member_disconnection_procedure,
    reconnection_procedure, record_task_batch, run_key_update, HeadChangeReport, KeyUpdateReport,
    MemberDisconnectReport, ProcEnv, ProcedureError, ReconnectClaim, ReconnectOutcome,
    ReconnectReject,
};
pub use tasks::{assign_tasks, collect_results, decrypt_result, encrypt_result, CollectReport};

use crate::crypto::{h2, Digest32, PublicKey};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Lifecycle status of a UAV inside its cluster's LML.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UavStatus {
    Native,
    Disconnected,
    Marked,
    Reconnected,
}

impl UavStatus {
    pub fn as_u8(self) -> u8 {
        match self {
            UavStatus::Native => 0,
            UavStatus::Disconnected => 1,
            UavStatus::Marked => 2,
            UavStatus::Reconnected => 3,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => UavStatus::Native,
            1 => UavStatus::Disconnected,
            2 => UavStatus::Marked,
            3 => UavStatus::Reconnected,
            _ => return None,
        })
    }

    /// The complete set of legal LML transitions.
    pub fn can_transition(from: UavStatus, to: UavStatus) -> bool {
        use UavStatus::*;
        matches!(
            (from, to),
            (Native, Disconnected)
                | (Disconnected, Marked)
                | (Marked, Reconnected)
                | (Marked, Disconnected)
                | (Reconnected, Disconnected)
        )
    }

    /// Statuses that count as present in the cluster (send hellos, hold
    /// stores). Everything except `Disconnected`.
    pub fn is_connected(self) -> bool {
        self != UavStatus::Disconnected
    }

    /// Statuses eligible to execute tasks. `Marked` UAVs are quarantined.
    pub fn is_task_eligible(self) -> bool {
        matches!(self, UavStatus::Native | UavStatus::Reconnected)
    }
}

impl std::fmt::Display for UavStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            UavStatus::Native => "Native",
            UavStatus::Disconnected => "Disconnected",
            UavStatus::Marked => "Marked",
            UavStatus::Reconnected => "Reconnected",
        };
        f.write_str(s)
    }
}

/// Physical-layer feature fingerprint: an opaque 32-byte identifier that is
/// registered once per UAV and compared only for equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fingerprint(pub [u8; 32]);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LmlError {
    #[error("public key not in LML")]
    UnknownKey,
    #[error("illegal status transition {from} -> {to}")]
    IllegalTransition { from: UavStatus, to: UavStatus },
}

/// Latest member list: the authoritative per-cluster membership view, an
/// ordered map from public key to status. The version counter increments on
/// every mutation so replicas can be compared for convergence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lml {
    pub cluster_index: u32,
    entries: BTreeMap<PublicKey, UavStatus>,
    pub version: u64,
}

impl Lml {
    pub fn new(cluster_index: u32, keys: impl IntoIterator<Item = PublicKey>) -> Self {
        Lml {
            cluster_index,
            entries: keys.into_iter().map(|k| (k, UavStatus::Native)).collect(),
            version: 0,
        }
    }

    pub fn entries(&self) -> &BTreeMap<PublicKey, UavStatus> {
        &self.entries
    }

    pub fn status(&self, key: &PublicKey) -> Option<UavStatus> {
        self.entries.get(key).copied()
    }

    pub fn contains(&self, key: &PublicKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Apply a status change, enforcing the transition table.
    pub fn set_status(&mut self, key: &PublicKey, to: UavStatus) -> Result<UavStatus, LmlError> {
        let current = self.entries.get_mut(key).ok_or(LmlError::UnknownKey)?;
        let from = *current;
        if !UavStatus::can_transition(from, to) {
            return Err(LmlError::IllegalTransition { from, to });
        }
        *current = to;
        self.version += 1;
        Ok(from)
    }

    /// Canonical digest over (cluster index, sorted entries). The version
    /// counter is deliberately excluded so that independently maintained
    /// replicas that agree on membership agree on the digest.
    pub fn digest(&self) -> Digest32 {
        lml_digest(self.cluster_index, &self.entries)
    }
}

/// Digest of a membership view; shared by the LML and the on-chain replayed
/// view so both sides can check each other.
pub fn lml_digest(cluster_index: u32, entries: &BTreeMap<PublicKey, UavStatus>) -> Digest32 {
    let mut buf = Vec::with_capacity(8 + entries.len() * 40);
    buf.extend_from_slice(&cluster_index.to_be_bytes());
    for (pk, status) in entries {
        buf.extend_from_slice(&(pk.len() as u16).to_be_bytes());
        buf.extend_from_slice(pk.as_bytes());
        buf.push(status.as_u8());
    }
    h2(&buf)
}

/// White/gray partition of registered fingerprints. White-listed results are
/// accepted without re-verification; gray-listed results are recomputed by
/// the head before acceptance. Within a mission the move is one-way
/// (white to gray).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct WhiteGrayList {
    white: BTreeSet<Fingerprint>,
    gray: BTreeSet<Fingerprint>,
}

impl WhiteGrayList {
    pub fn new(all_white: impl IntoIterator<Item = Fingerprint>) -> Self {
        WhiteGrayList {
            white: all_white.into_iter().collect(),
            gray: BTreeSet::new(),
        }
    }

    pub fn is_white(&self, fp: &Fingerprint) -> bool {
        self.white.contains(fp)
    }

    pub fn is_gray(&self, fp: &Fingerprint) -> bool {
        self.gray.contains(fp)
    }

    pub fn move_to_gray(&mut self, fp: &Fingerprint) {
        if self.white.remove(fp) {
            self.gray.insert(*fp);
        }
    }

    pub fn white_len(&self) -> usize {
        self.white.len()
    }

    pub fn gray_len(&self) -> usize {
        self.gray.len()
    }
}

/// Cluster head list: cluster index to the public key of its current head.
/// Updated atomically with committed head-update transactions.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClusterHeadList {
    pub entries: BTreeMap<u32, PublicKey>,
}

impl ClusterHeadList {
    pub fn head_of(&self, cluster: u32) -> Option<&PublicKey> {
        self.entries.get(&cluster)
    }

    pub fn set_head(&mut self, cluster: u32, head: PublicKey) {
        self.entries.insert(cluster, head);
    }

    pub fn is_head(&self, key: &PublicKey) -> bool {
        self.entries.values().any(|h| h == key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pk(b: u8) -> PublicKey {
        PublicKey(vec![b; 33])
    }

    #[test]
    fn transition_table_is_exactly_the_allowed_set() {
        use UavStatus::*;
        let all = [Native, Disconnected, Marked, Reconnected];
        let allowed = [
            (Native, Disconnected),
            (Disconnected, Marked),
            (Marked, Reconnected),
            (Marked, Disconnected),
            (Reconnected, Disconnected),
        ];
        for from in all {
            for to in all {
                assert_eq!(
                    UavStatus::can_transition(from, to),
                    allowed.contains(&(from, to)),
                    "{from} -> {to}"
                );
            }
        }
    }

    #[test]
    fn lml_version_increments_and_rejects_illegal() {
        let mut lml = Lml::new(0, [pk(1), pk(2)]);
        assert_eq!(lml.version, 0);
        lml.set_status(&pk(1), UavStatus::Disconnected).unwrap();
        assert_eq!(lml.version, 1);
        let err = lml.set_status(&pk(1), UavStatus::Native).unwrap_err();
        assert!(matches!(err, LmlError::IllegalTransition { .. }));
        assert_eq!(lml.version, 1, "failed mutation must not bump version");
        assert_eq!(
            lml.set_status(&pk(9), UavStatus::Disconnected),
            Err(LmlError::UnknownKey)
        );
    }

    #[test]
    fn lml_digest_ignores_version_but_not_content() {
        let mut a = Lml::new(3, [pk(1), pk(2), pk(3)]);
        let d0 = a.digest();
        a.version = 99;
        assert_eq!(a.digest(), d0);
        a.set_status(&pk(2), UavStatus::Disconnected).unwrap();
        assert_ne!(a.digest(), d0);
    }

    #[test]
    fn white_gray_partition_stays_disjoint() {
        let fps: Vec<Fingerprint> = (0..4u8).map(|i| Fingerprint([i; 32])).collect();
        let mut wgl = WhiteGrayList::new(fps.clone());
        assert_eq!(wgl.white_len(), 4);
        wgl.move_to_gray(&fps[1]);
        wgl.move_to_gray(&fps[1]);
        assert!(wgl.is_gray(&fps[1]) && !wgl.is_white(&fps[1]));
        assert_eq!(wgl.white_len() + wgl.gray_len(), 4);
    }
}
