//! In-cluster state: per-UAV actors, the head's double-backup store, task
//! queue, and bookkeeping shared by the procedures.

use crate::crypto::{h2_concat, ClusterKey, Digest32, KeyPair, PublicKey};
use crate::ledger::StatusTransition;
use crate::protocol::idbc::TxIntent;
use crate::protocol::{Fingerprint, Lml, UavStatus, WhiteGrayList};
use std::collections::{BTreeMap, VecDeque};

/// A unit of work dispatched to one member. The expected result is a pure
/// function of the task, so the head can recompute it to re-verify
/// gray-listed producers and to grade test tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Task {
    pub id: u64,
    pub cluster: u32,
    pub period: u32,
    pub seed: u64,
}

impl Task {
    pub fn expected_plaintext(&self) -> Vec<u8> {
        let d = h2_concat(&[b"task-result", &self.id.to_be_bytes(), &self.seed.to_be_bytes()]);
        d[..16].to_vec()
    }
}

/// An accepted task result: ciphertext under the cluster key of `key_epoch`.
/// Copies made by the backup mechanism preserve the record verbatim, so
/// multiset comparisons across stores are exact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TaskResultRecord {
    pub task_id: u64,
    pub producer: PublicKey,
    pub ciphertext: Vec<u8>,
    pub key_epoch: u64,
    pub period: u32,
}

impl TaskResultRecord {
    pub fn byte_len(&self) -> usize {
        8 + self.producer.len() + self.ciphertext.len() + 8 + 4
    }

    pub fn ciphertext_hash(&self) -> Digest32 {
        crate::crypto::h2(&self.ciphertext)
    }
}

/// One UAV actor as the simulation sees it.
#[derive(Debug, Clone)]
pub struct UavState {
    pub keypair: KeyPair,
    pub fingerprint: Fingerprint,
    /// Registration index within the cluster (stable label for reports).
    pub index: u32,
    pub alive: bool,
    pub hijacked: bool,
    /// Scripted fault: never acknowledge key updates.
    pub drop_key_ack: bool,
    pub key: Option<ClusterKey>,
    /// Ciphertext results this UAV currently stores.
    pub primary: Vec<TaskResultRecord>,
    /// Tasks assigned but not yet collected.
    pub assigned: VecDeque<Task>,
    /// This member's copy of the LML, refreshed on head broadcasts.
    pub lml_replica: Lml,
}

impl UavState {
    pub fn public(&self) -> &PublicKey {
        &self.keypair.public
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterConfig {
    pub index: u32,
    pub task_rate: u32,
}

/// Full cluster state. The head's backup is kept as per-holder stores
/// (`holdings`), mirroring what each member currently holds; the flat
/// backup multiset is the union of all holdings.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub config: ClusterConfig,
    pub head: PublicKey,
    pub lml: Lml,
    pub wgl: WhiteGrayList,
    pub cluster_key: ClusterKey,
    pub uavs: BTreeMap<PublicKey, UavState>,
    /// Head's mirror of every holder's store; the double backup.
    pub holdings: BTreeMap<PublicKey, Vec<TaskResultRecord>>,
    pub task_queue: VecDeque<Task>,
    /// Persistent round-robin cursor for task dispatch.
    pub rr_cursor: usize,
    /// Ledger intents whose submission was deferred (no quorum).
    pub pending_intents: VecDeque<TxIntent>,
    /// Status transitions not yet carried by any committed transaction
    /// (reconnection hops and quarantined-UAV losses). Drained into the
    /// next key-update transaction.
    pub unchained_transitions: Vec<StatusTransition>,
    /// A key update that must be retried (previous attempt lacked quorum).
    pub needs_key_update_retry: bool,
    /// Log of every local status change: (time ms, uav, from, to).
    pub transition_log: Vec<(u64, PublicKey, UavStatus, UavStatus)>,
    /// Out-of-model situations the cluster survived (for reports).
    pub violations: Vec<String>,
}

impl Cluster {
    pub fn new(
        config: ClusterConfig,
        head: PublicKey,
        members: Vec<(KeyPair, Fingerprint, u32)>,
        initial_key: ClusterKey,
    ) -> Self {
        let lml = Lml::new(config.index, members.iter().map(|(kp, _, _)| kp.public.clone()));
        let uavs: BTreeMap<PublicKey, UavState> = members
            .into_iter()
            .map(|(keypair, fingerprint, index)| {
                let pk = keypair.public.clone();
                (
                    pk,
                    UavState {
                        keypair,
                        fingerprint,
                        index,
                        alive: true,
                        hijacked: false,
                        drop_key_ack: false,
                        key: Some(initial_key),
                        primary: Vec::new(),
                        assigned: VecDeque::new(),
                        lml_replica: lml.clone(),
                    },
                )
            })
            .collect();
        let wgl = WhiteGrayList::new(uavs.values().map(|u| u.fingerprint));
        Cluster {
            config,
            head,
            lml,
            wgl,
            cluster_key: initial_key,
            uavs,
            holdings: BTreeMap::new(),
            task_queue: VecDeque::new(),
            rr_cursor: 0,
            pending_intents: VecDeque::new(),
            unchained_transitions: Vec::new(),
            needs_key_update_retry: false,
            transition_log: Vec::new(),
            violations: Vec::new(),
        }
    }

    pub fn index(&self) -> u32 {
        self.config.index
    }

    /// Apply and log a status change.
    pub fn set_status_logged(
        &mut self,
        uav: &PublicKey,
        to: UavStatus,
        now_ms: u64,
    ) -> Result<UavStatus, crate::protocol::LmlError> {
        let from = self.lml.set_status(uav, to)?;
        self.transition_log.push((now_ms, uav.clone(), from, to));
        Ok(from)
    }

    /// Connected members (status not Disconnected), excluding the head.
    pub fn connected_members(&self) -> Vec<PublicKey> {
        self.lml
            .entries()
            .iter()
            .filter(|(pk, st)| st.is_connected() && **pk != self.head)
            .map(|(pk, _)| pk.clone())
            .collect()
    }

    /// Members that receive the cluster key: connected, task-eligible, and
    /// actually reachable.
    pub fn key_recipients(&self) -> Vec<PublicKey> {
        self.lml
            .entries()
            .iter()
            .filter(|(pk, st)| st.is_task_eligible() && **pk != self.head)
            .filter(|(pk, _)| self.uavs.get(*pk).map(|u| u.alive).unwrap_or(false))
            .map(|(pk, _)| pk.clone())
            .collect()
    }

    /// Members eligible for task assignment right now.
    pub fn task_eligible(&self) -> Vec<PublicKey> {
        self.lml
            .entries()
            .iter()
            .filter(|(pk, st)| st.is_task_eligible() && **pk != self.head)
            .filter(|(pk, _)| self.uavs.get(*pk).map(|u| u.alive).unwrap_or(false))
            .map(|(pk, _)| pk.clone())
            .collect()
    }

    /// Flat view of the head's backup store.
    pub fn backup_multiset(&self) -> Vec<TaskResultRecord> {
        let mut all: Vec<TaskResultRecord> =
            self.holdings.values().flatten().cloned().collect();
        all.sort();
        all
    }

    pub fn backup_len(&self) -> usize {
        self.holdings.values().map(|v| v.len()).sum()
    }

    /// Multiset of results stored across connected holders: connected
    /// members' primary stores plus any records the head itself retains in
    /// custody (degenerate clusters with no backup target).
    pub fn connected_store_multiset(&self) -> Vec<TaskResultRecord> {
        let mut all: Vec<TaskResultRecord> = Vec::new();
        for (pk, st) in self.lml.entries() {
            if *pk == self.head || !st.is_connected() {
                continue;
            }
            if let Some(uav) = self.uavs.get(pk) {
                all.extend(uav.primary.iter().cloned());
            }
        }
        if let Some(head_custody) = self.uavs.get(&self.head) {
            all.extend(head_custody.primary.iter().cloned());
        }
        all.sort();
        all
    }

    /// Broadcast the head's LML to a member (replica sync).
    pub fn sync_replica(&mut self, member: &PublicKey) {
        let lml = self.lml.clone();
        if let Some(u) = self.uavs.get_mut(member) {
            u.lml_replica = lml;
        }
    }

    pub fn serialized_lml_len(&self) -> usize {
        self.lml
            .entries()
            .keys()
            .map(|k| k.len() + 3)
            .sum::<usize>()
            + 12
    }
}
