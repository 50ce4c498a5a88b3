//! The identity-management procedures: event-driven key updates, member and
//! head disconnection handling, and verified reconnection with a test task.
//!
//! All mutations run atomically inside one event handler; ledger writes are
//! produced as signed intents and either commit as one block or queue for a
//! later period when the ledger has no quorum (local protocol effects still
//! apply so the cluster keeps working).

use crate::crypto::{h2, h2_concat, ClusterKey, CryptoSuite, KeyPair, PublicKey, Signature};
use crate::ledger::{StatusTransition, TxExtra, TxPayload, TxType};
use crate::protocol::cluster::{Cluster, TaskResultRecord};
use crate::protocol::idbc::{CommitReceipt, IdbcError, IdbcHandle, TxIntent};
use crate::protocol::select::{backup_from_entries, candidate_from_entries, SelectError};
use crate::protocol::{Fingerprint, UavStatus};
use crate::sim::energy::EnergyMeter;
use rand::RngCore;
use rand_chacha::ChaCha12Rng;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProcedureError {
    #[error("target is the cluster head; use the head procedure")]
    UseHeadProcedure,
    #[error("UAV already disconnected")]
    DuplicateEvent,
    #[error("UAV not registered in this cluster")]
    UnknownUav,
    #[error("ledger has no quorum; writes deferred")]
    NoQuorum,
    #[error("no Native candidate available")]
    NoCandidate,
    #[error("ledger error: {0}")]
    Ledger(IdbcError),
}

/// Shared handle bundle for procedure execution.
pub struct ProcEnv<'a> {
    pub now_ms: u64,
    pub rng: &'a mut ChaCha12Rng,
    pub meter: &'a mut EnergyMeter,
    pub positions: &'a BTreeMap<PublicKey, [f64; 3]>,
    pub suite: CryptoSuite,
}

impl ProcEnv<'_> {
    pub fn distance(&self, a: &PublicKey, b: &PublicKey) -> f64 {
        match (self.positions.get(a), self.positions.get(b)) {
            (Some(pa), Some(pb)) => {
                let d: f64 = pa
                    .iter()
                    .zip(pb.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                d.sqrt()
            }
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyUpdateReport {
    pub epoch: u64,
    pub recipients: Vec<PublicKey>,
    pub candidate: Option<PublicKey>,
    pub receipt: Option<CommitReceipt>,
    /// Members declared disconnected because they never acknowledged.
    pub dropped: Vec<PublicKey>,
    /// Ledger writes skipped because no Native candidate exists.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberDisconnectReport {
    pub uav: PublicKey,
    pub backup_target: Option<PublicKey>,
    pub moved_records: usize,
    pub key_update: Option<KeyUpdateReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadChangeReport {
    pub old_head: PublicKey,
    pub new_head: PublicKey,
    pub copy_target: Option<PublicKey>,
    pub moved_records: usize,
    pub key_update_deferred: bool,
}

/// Queue a persistent intent, replacing any queued intent with the same
/// type and generator (retries must not duplicate events).
fn queue_pending(cluster: &mut Cluster, intent: TxIntent) {
    cluster
        .pending_intents
        .retain(|i| !(i.tx_type == intent.tx_type && i.generator == intent.generator));
    cluster.pending_intents.push_back(intent);
}

/// Submit queued persistent intents plus freshly built volatile ones as a
/// single block. On `NoQuorum` the persistent intents stay queued; volatile
/// intents (key/candidate updates, whose digests go stale) are rebuilt by
/// the retry.
fn submit_with_pending(
    cluster: &mut Cluster,
    idbc: &mut dyn IdbcHandle,
    volatile: Vec<TxIntent>,
    now_ms: u64,
) -> Result<CommitReceipt, IdbcError> {
    let mut intents: Vec<TxIntent> = cluster.pending_intents.iter().cloned().collect();
    intents.extend(volatile);
    if intents.is_empty() {
        // Nothing to write; treat as an empty success with no receipt.
        return Err(IdbcError::Rejected(crate::ledger::BlockRejected {
            height: 0,
            tx_index: None,
            reason: crate::ledger::RejectReason::EmptyBlock,
        }));
    }
    match idbc.submit(&intents, now_ms) {
        Ok(receipt) => {
            cluster.pending_intents.clear();
            Ok(receipt)
        }
        Err(e) => Err(e),
    }
}

/// Broadcast the head's LML to all reachable connected members.
fn broadcast_lml(cluster: &mut Cluster, env: &mut ProcEnv) {
    let head = cluster.head.clone();
    let lml_len = cluster.serialized_lml_len();
    let members: Vec<PublicKey> = cluster
        .connected_members()
        .into_iter()
        .filter(|pk| cluster.uavs.get(pk).map(|u| u.alive).unwrap_or(false))
        .collect();
    for member in members {
        let dist = env.distance(&head, &member);
        env.meter.charge_tx(&head, lml_len, dist);
        env.meter.charge_rx(&member, lml_len);
        cluster.sync_replica(&member);
    }
}

/// Move the records a vanished holder was storing to the computed backup
/// member; the head retains custody when no member is eligible.
fn backup_copy(
    cluster: &mut Cluster,
    gone: &PublicKey,
    env: &mut ProcEnv,
) -> (Option<PublicKey>, usize) {
    let moved = cluster.holdings.remove(gone).unwrap_or_default();
    if moved.is_empty() {
        return (None, 0);
    }
    transfer_records(cluster, gone, moved, env)
}

fn transfer_records(
    cluster: &mut Cluster,
    gone: &PublicKey,
    moved: Vec<TaskResultRecord>,
    env: &mut ProcEnv,
) -> (Option<PublicKey>, usize) {
    let head = cluster.head.clone();
    let count = moved.len();
    let bytes: usize = moved.iter().map(|r| r.byte_len()).sum();
    let exclude: BTreeSet<PublicKey> = [head.clone(), gone.clone()].into();
    match backup_from_entries(cluster.lml.entries(), &exclude) {
        Ok(target) => {
            let dist = env.distance(&head, &target);
            env.meter.charge_tx(&head, bytes, dist);
            env.meter.charge_rx(&target, bytes);
            cluster
                .uavs
                .get_mut(&target)
                .expect("backup target exists")
                .primary
                .extend(moved.clone());
            cluster.holdings.entry(target.clone()).or_default().extend(moved);
            (Some(target), count)
        }
        Err(SelectError::NoBackupTarget) | Err(SelectError::NoCandidate) => {
            // Degenerate cluster: the head keeps the records itself.
            cluster
                .uavs
                .get_mut(&head)
                .expect("head exists")
                .primary
                .extend(moved.clone());
            cluster.holdings.entry(head).or_default().extend(moved);
            (None, count)
        }
    }
}

/// Local bookkeeping for a member that vanished: status, gray-listing, the
/// disconnection record (or queued transition for quarantined members that
/// were never re-keyed), and the backup copy.
fn disconnect_member_local(
    cluster: &mut Cluster,
    uav: &PublicKey,
    signer: &KeyPair,
    env: &mut ProcEnv,
) -> Result<(Option<PublicKey>, usize), ProcedureError> {
    let was = cluster.lml.status(uav).ok_or(ProcedureError::UnknownUav)?;
    if was == UavStatus::Disconnected {
        return Err(ProcedureError::DuplicateEvent);
    }
    cluster
        .set_status_logged(uav, UavStatus::Disconnected, env.now_ms)
        .expect("transition to Disconnected is legal from any connected status");
    let fp = cluster.uavs[uav].fingerprint;
    cluster.wgl.move_to_gray(&fp);
    if was == UavStatus::Marked {
        // Already Disconnected on-chain; the Marked hop rides the next key
        // update instead of a duplicate disconnection record.
        cluster.unchained_transitions.push(StatusTransition {
            uav: uav.clone(),
            from: UavStatus::Marked,
            to: UavStatus::Disconnected,
        });
    } else {
        let payload = TxPayload {
            public_key: uav.clone(),
            fingerprint: Some(fp),
            timestamp_ms: env.now_ms,
            extra: TxExtra::None,
        };
        let intent = TxIntent::signed(
            &env.suite,
            TxType::MemberUavDisconnected,
            cluster.index(),
            payload,
            signer,
        );
        queue_pending(cluster, intent);
    }
    Ok(backup_copy(cluster, uav, env))
}

fn ack_digest(epoch: u64, member: &PublicKey) -> [u8; 32] {
    h2_concat(&[b"key-ack", &epoch.to_be_bytes(), member.as_bytes()])
}

/// Push queued ledger records through once quorum is back. No-op on an
/// empty queue.
pub fn flush_pending(
    cluster: &mut Cluster,
    idbc: &mut dyn IdbcHandle,
    now_ms: u64,
) -> Result<Option<CommitReceipt>, ProcedureError> {
    if cluster.pending_intents.is_empty() {
        return Ok(None);
    }
    match submit_with_pending(cluster, idbc, vec![], now_ms) {
        Ok(r) => Ok(Some(r)),
        Err(IdbcError::NoQuorum) => Err(ProcedureError::NoQuorum),
        Err(e) => Err(ProcedureError::Ledger(e)),
    }
}

/// Record one period's accepted results on the ledger. Deferred (queued)
/// when there is no quorum.
pub fn record_task_batch(
    cluster: &mut Cluster,
    idbc: &mut dyn IdbcHandle,
    period: u32,
    records: &[TaskResultRecord],
    env: &mut ProcEnv,
) -> Result<Option<CommitReceipt>, ProcedureError> {
    if records.is_empty() {
        return Ok(None);
    }
    let head = cluster.head.clone();
    let head_kp = cluster.uavs[&head].keypair.clone();
    let entries = records
        .iter()
        .map(|r| crate::ledger::TaskRecordEntry {
            task_id: r.task_id,
            producer: r.producer.clone(),
            ciphertext_hash: r.ciphertext_hash(),
            key_epoch: r.key_epoch,
        })
        .collect();
    let intent = TxIntent::signed(
        &env.suite,
        TxType::TaskRecord,
        cluster.index(),
        TxPayload {
            public_key: head.clone(),
            fingerprint: None,
            timestamp_ms: env.now_ms,
            extra: TxExtra::TaskRecord(crate::ledger::TaskRecordInfo { period, entries }),
        },
        &head_kp,
    );
    env.meter.charge_sign(&head);
    match submit_with_pending(cluster, idbc, vec![intent.clone()], env.now_ms) {
        Ok(r) => Ok(Some(r)),
        Err(IdbcError::NoQuorum) => {
            queue_pending(cluster, intent);
            Ok(None)
        }
        Err(e) => Err(ProcedureError::Ledger(e)),
    }
}

/// Event-driven cluster rekey. Wraps a fresh key to every eligible member,
/// collects signed receipts, and commits `key_update` + `candidate_update`
/// records (together with any queued disconnection records) as one block.
/// Members that never acknowledge are declared disconnected and the
/// procedure restarts without them.
pub fn run_key_update(
    cluster: &mut Cluster,
    idbc: &mut dyn IdbcHandle,
    env: &mut ProcEnv,
) -> Result<KeyUpdateReport, ProcedureError> {
    let head = cluster.head.clone();
    let head_kp = cluster.uavs[&head].keypair.clone();
    let new_epoch = cluster.cluster_key.epoch + 1;
    let mut dropped = Vec::new();

    'restart: loop {
        let recipients = cluster.key_recipients();
        let mut key_bytes = [0u8; 16];
        env.rng.fill_bytes(&mut key_bytes);
        let new_key = ClusterKey {
            key_bytes,
            epoch: new_epoch,
        };

        let mut receipts: Vec<(PublicKey, Signature)> = Vec::new();
        for member in &recipients {
            let blob = env
                .suite
                .wrap_cluster_key(&new_key, member, env.rng)
                .expect("member key was generated by the suite");
            let dist = env.distance(&head, member);
            env.meter.charge_sign(&head);
            env.meter.charge_tx(&head, blob.len(), dist);

            let state = &cluster.uavs[member];
            if !state.alive || state.drop_key_ack {
                // Ack timeout: member treated as newly disconnected, then
                // the whole procedure restarts.
                disconnect_member_local(cluster, member, &head_kp, env)?;
                dropped.push(member.clone());
                continue 'restart;
            }
            env.meter.charge_rx(member, blob.len());
            env.meter.charge_verify(member);
            let unwrapped = env
                .suite
                .unwrap_cluster_key(&blob, &cluster.uavs[member].keypair.secret)
                .expect("wrapped to this member");
            debug_assert_eq!(unwrapped, new_key);
            let receipt_sig = env
                .suite
                .sign(&cluster.uavs[member].keypair.secret, &ack_digest(new_epoch, member));
            env.meter.charge_sign(member);
            env.meter.charge_tx(member, 64 + 32, dist);
            env.meter.charge_rx(&head, 64 + 32);
            env.meter.charge_verify(&head);
            receipts.push((member.clone(), receipt_sig));
        }

        let mut receipt_bytes = Vec::new();
        for (_, sig) in &receipts {
            receipt_bytes.extend_from_slice(sig.as_bytes());
        }
        let receipts_digest = h2(&receipt_bytes);

        let candidate = match candidate_from_entries(cluster.lml.entries(), &head) {
            Ok(c) => Some(c),
            Err(SelectError::NoCandidate) | Err(SelectError::NoBackupTarget) => None,
        };

        if candidate.is_none() {
            // Out-of-model state: no Native member left. Ledger writes pause
            // but the cluster keeps its new key and local task flow.
            cluster
                .violations
                .push(format!("cluster {}: no Native candidate; ledger writes paused", cluster.index()));
            cluster.cluster_key = new_key;
            for member in &recipients {
                cluster.uavs.get_mut(member).unwrap().key = Some(new_key);
            }
            broadcast_lml(cluster, env);
            return Ok(KeyUpdateReport {
                epoch: new_epoch,
                recipients,
                candidate: None,
                receipt: None,
                dropped,
                degraded: true,
            });
        }
        let candidate_pk = candidate.unwrap();

        let lml_digest = cluster.lml.digest();
        let key_update = TxIntent::signed(
            &env.suite,
            TxType::KeyUpdate,
            cluster.index(),
            TxPayload {
                public_key: head.clone(),
                fingerprint: None,
                timestamp_ms: env.now_ms,
                extra: TxExtra::KeyUpdate(crate::ledger::KeyUpdateInfo {
                    epoch: new_epoch,
                    lml_digest,
                    transitions: cluster.unchained_transitions.clone(),
                    receipts_digest,
                }),
            },
            &head_kp,
        );
        env.meter.charge_sign(&head);
        let candidate_update = TxIntent::signed(
            &env.suite,
            TxType::CandidateUpdate,
            cluster.index(),
            TxPayload {
                public_key: candidate_pk.clone(),
                fingerprint: None,
                timestamp_ms: env.now_ms,
                extra: TxExtra::Candidate(crate::ledger::CandidateInfo {
                    candidate: candidate_pk.clone(),
                    lml_digest,
                }),
            },
            &head_kp,
        );
        env.meter.charge_sign(&head);

        let receipt = match submit_with_pending(
            cluster,
            idbc,
            vec![key_update, candidate_update],
            env.now_ms,
        ) {
            Ok(r) => r,
            Err(IdbcError::NoQuorum) => {
                cluster.needs_key_update_retry = true;
                return Err(ProcedureError::NoQuorum);
            }
            Err(e) => {
                cluster
                    .violations
                    .push(format!("cluster {}: ledger rejected key update: {e}", cluster.index()));
                return Err(ProcedureError::Ledger(e));
            }
        };

        // Commit succeeded: apply the new key, clear carried transitions,
        // and broadcast the updated LML.
        cluster.unchained_transitions.clear();
        cluster.needs_key_update_retry = false;
        cluster.cluster_key = new_key;
        for member in &recipients {
            cluster.uavs.get_mut(member).unwrap().key = Some(new_key);
        }
        broadcast_lml(cluster, env);

        return Ok(KeyUpdateReport {
            epoch: new_epoch,
            recipients,
            candidate: Some(candidate_pk),
            receipt: Some(receipt),
            dropped,
            degraded: false,
        });
    }
}

/// Disconnection handling for a member UAV: status, gray-listing, the
/// on-chain record, a rekey, and the backup copy of whatever the member was
/// storing.
pub fn member_disconnection_procedure(
    cluster: &mut Cluster,
    uav: &PublicKey,
    idbc: &mut dyn IdbcHandle,
    env: &mut ProcEnv,
) -> Result<MemberDisconnectReport, ProcedureError> {
    if *uav == cluster.head {
        return Err(ProcedureError::UseHeadProcedure);
    }
    let was = cluster.lml.status(uav).ok_or(ProcedureError::UnknownUav)?;
    if was == UavStatus::Disconnected {
        return Err(ProcedureError::DuplicateEvent);
    }
    let head_kp = cluster.uavs[&cluster.head].keypair.clone();
    let (backup_target, moved_records) = disconnect_member_local(cluster, uav, &head_kp, env)?;

    if was == UavStatus::Marked {
        // The quarantined member never held the current key; no rekey, and
        // the chain already records it as Disconnected. Keep replicas fresh.
        broadcast_lml(cluster, env);
        return Ok(MemberDisconnectReport {
            uav: uav.clone(),
            backup_target,
            moved_records,
            key_update: None,
        });
    }

    let key_update = match run_key_update(cluster, idbc, env) {
        Ok(r) => Some(r),
        Err(ProcedureError::NoQuorum) => {
            // Local effects stand; ledger writes and the rekey retry next
            // period.
            return Err(ProcedureError::NoQuorum);
        }
        Err(e) => return Err(e),
    };

    Ok(MemberDisconnectReport {
        uav: uav.clone(),
        backup_target,
        moved_records,
        key_update,
    })
}

/// Seven-step head replacement, driven by the ledger leader after it
/// detected the head failure. Re-entrant: when an earlier attempt stalled on
/// a missing quorum the queued records are committed first and the
/// procedure continues where it left off.
pub fn head_disconnection_procedure(
    cluster: &mut Cluster,
    old_head: &PublicKey,
    idbc: &mut dyn IdbcHandle,
    env: &mut ProcEnv,
) -> Result<HeadChangeReport, ProcedureError> {
    if cluster.head != *old_head {
        return Err(ProcedureError::DuplicateEvent);
    }
    let leader_kp = idbc.leader_keypair(env.now_ms).map_err(|e| match e {
        IdbcError::NoQuorum => ProcedureError::NoQuorum,
        other => ProcedureError::Ledger(other),
    })?;

    // Step 1: record the head disconnection (idempotent across retries).
    if cluster.lml.status(old_head) != Some(UavStatus::Disconnected) {
        cluster
            .set_status_logged(old_head, UavStatus::Disconnected, env.now_ms)
            .expect("head was connected");
        // The head's backup store is gone with it; members still hold their
        // primaries, which step 7 re-collects.
        cluster.holdings.clear();
        let fp = cluster.uavs[old_head].fingerprint;
        let payload = TxPayload {
            public_key: old_head.clone(),
            fingerprint: Some(fp),
            timestamp_ms: env.now_ms,
            extra: TxExtra::None,
        };
        let intent = TxIntent::signed(
            &env.suite,
            TxType::HeadUavDisconnected,
            cluster.index(),
            payload,
            &leader_kp,
        );
        env.meter.charge_sign(&leader_kp.public);
        queue_pending(cluster, intent);
    }
    match submit_with_pending(cluster, idbc, vec![], env.now_ms) {
        Ok(_) => {}
        Err(IdbcError::NoQuorum) => return Err(ProcedureError::NoQuorum),
        Err(e) => return Err(ProcedureError::Ledger(e)),
    }

    // Steps 2-3: find a reachable Native candidate, recording any dead
    // candidates as disconnected (leader-signed: the cluster is headless).
    let candidate = loop {
        let candidate = candidate_from_entries(cluster.lml.entries(), &cluster.head.clone())
            .map_err(|_| {
                cluster
                    .violations
                    .push(format!("cluster {}: headless, no Native candidate", cluster.index()));
                ProcedureError::NoCandidate
            })?;
        let reachable = {
            let st = &cluster.uavs[&candidate];
            st.alive && !st.drop_key_ack
        };
        if reachable {
            break candidate;
        }
        cluster.violations.push(format!(
            "cluster {}: candidate unreachable during head replacement",
            cluster.index()
        ));
        disconnect_member_local(cluster, &candidate, &leader_kp, env)?;
    };

    // Step 3-4: the candidate issues its head-update record; commit it.
    let cand_fp = cluster.uavs[&candidate].fingerprint;
    let cand_kp = cluster.uavs[&candidate].keypair.clone();
    let payload = TxPayload {
        public_key: candidate.clone(),
        fingerprint: Some(cand_fp),
        timestamp_ms: env.now_ms,
        extra: TxExtra::None,
    };
    let update_intent = TxIntent::signed(
        &env.suite,
        TxType::HeadUavUpdate,
        cluster.index(),
        payload,
        &cand_kp,
    );
    env.meter.charge_sign(&candidate);
    queue_pending(cluster, update_intent);
    match submit_with_pending(cluster, idbc, vec![], env.now_ms) {
        Ok(_) => {}
        Err(IdbcError::NoQuorum) => return Err(ProcedureError::NoQuorum),
        Err(e) => return Err(ProcedureError::Ledger(e)),
    }

    // Step 5: the new head becomes a ledger maintainer with a full copy.
    cluster.head = candidate.clone();
    idbc.replace_maintainer(old_head, cand_kp.clone());

    // Tasks the promoted member had not finished go back to the queue.
    let leftover: Vec<_> = {
        let u = cluster.uavs.get_mut(&candidate).unwrap();
        u.assigned.drain(..).collect()
    };
    for t in leftover {
        cluster.task_queue.push_back(t);
    }

    // Step 6: gray-list the old head and rekey under the new head.
    let fp = cluster.uavs[old_head].fingerprint;
    cluster.wgl.move_to_gray(&fp);
    let key_update_deferred = match run_key_update(cluster, idbc, env) {
        Ok(_) => false,
        Err(ProcedureError::NoQuorum) => true,
        Err(e) => return Err(e),
    };

    // Step 7: rebuild the double backup from the members, then hand the new
    // head's former primary results to the computed backup member.
    let head = cluster.head.clone();
    let members = cluster.connected_members();
    for member in &members {
        let Some(state) = cluster.uavs.get(member) else { continue };
        if !state.alive {
            continue;
        }
        let records = state.primary.clone();
        let bytes: usize = records.iter().map(|r| r.byte_len()).sum();
        let dist = env.distance(&head, member);
        env.meter.charge_tx(member, bytes.max(1), dist);
        env.meter.charge_rx(&head, bytes.max(1));
        cluster.holdings.insert(member.clone(), records);
    }
    let own = {
        let u = cluster.uavs.get_mut(&head).unwrap();
        let own: Vec<TaskResultRecord> = u.primary.drain(..).collect();
        own
    };
    let moved_records = own.len();
    cluster.holdings.remove(&head);
    let copy_target = if own.is_empty() {
        None
    } else {
        transfer_records(cluster, &head, own, env).0
    };

    Ok(HeadChangeReport {
        old_head: old_head.clone(),
        new_head: head,
        copy_target,
        moved_records,
        key_update_deferred,
    })
}

/// Reconnection rejection reasons. `TestTaskFailed` leaves the claimant
/// `Marked` and quarantined.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum ReconnectReject {
    #[error("public key is not in the LML")]
    UnknownKey,
    #[error("challenge signature does not verify")]
    BadSignature,
    #[error("fingerprint is not on the gray list")]
    FingerprintNotGray,
    #[error("LML status is not Disconnected")]
    StatusNotDisconnected,
    #[error("test task result mismatch")]
    TestTaskFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconnectClaim {
    pub public_key: PublicKey,
    pub fingerprint: Fingerprint,
    pub challenge: [u8; 32],
    pub signature: Signature,
}

impl ReconnectClaim {
    pub fn challenge_digest(challenge: &[u8; 32], pk: &PublicKey) -> [u8; 32] {
        h2_concat(&[b"reconnect-challenge", challenge, pk.as_bytes()])
    }

    pub fn signed(
        suite: &CryptoSuite,
        keypair: &KeyPair,
        fingerprint: Fingerprint,
        challenge: [u8; 32],
    ) -> Self {
        let digest = Self::challenge_digest(&challenge, &keypair.public);
        ReconnectClaim {
            public_key: keypair.public.clone(),
            fingerprint,
            challenge,
            signature: suite.sign(&keypair.secret, &digest),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconnectOutcome {
    pub uav: PublicKey,
    pub key_update: Option<KeyUpdateReport>,
    pub key_update_deferred: bool,
}

/// Verified reconnection: signature over a fresh challenge, gray-list and
/// LML checks, then a test task computed by both sides. Success promotes the
/// claimant to `Reconnected` (its fingerprint stays gray) and triggers a
/// rekey; a wrong test answer leaves it `Marked` and quarantined.
pub fn reconnection_procedure(
    cluster: &mut Cluster,
    claim: &ReconnectClaim,
    idbc: &mut dyn IdbcHandle,
    env: &mut ProcEnv,
) -> Result<ReconnectOutcome, ReconnectReject> {
    let head = cluster.head.clone();
    env.meter.charge_rx(&head, claim.public_key.len() + 32 + 32 + 64);

    if !cluster.lml.contains(&claim.public_key) {
        return Err(ReconnectReject::UnknownKey);
    }
    env.meter.charge_verify(&head);
    let digest = ReconnectClaim::challenge_digest(&claim.challenge, &claim.public_key);
    if !env.suite.verify(&claim.public_key, &digest, &claim.signature) {
        return Err(ReconnectReject::BadSignature);
    }
    let registered = cluster.uavs[&claim.public_key].fingerprint;
    if claim.fingerprint != registered || !cluster.wgl.is_gray(&registered) {
        return Err(ReconnectReject::FingerprintNotGray);
    }
    // O(1) membership check against the head's LML.
    if cluster.lml.status(&claim.public_key) != Some(UavStatus::Disconnected) {
        return Err(ReconnectReject::StatusNotDisconnected);
    }

    let uav = claim.public_key.clone();
    cluster
        .set_status_logged(&uav, UavStatus::Marked, env.now_ms)
        .expect("Disconnected -> Marked is legal");
    cluster.unchained_transitions.push(StatusTransition {
        uav: uav.clone(),
        from: UavStatus::Disconnected,
        to: UavStatus::Marked,
    });

    // Test task: both sides compute a puzzle over a head-chosen nonce.
    let mut nonce = [0u8; 32];
    env.rng.fill_bytes(&mut nonce);
    let expected = h2_concat(&[b"test-task", &nonce, uav.as_bytes()]);
    env.meter.charge_hash(&head, 64);
    env.meter.charge_hash(&uav, 64);
    let answer = {
        let mut a = expected;
        if cluster.uavs[&uav].hijacked {
            a[0] ^= 0xFF;
        }
        a
    };
    if answer != expected {
        // Stays Marked: quarantined from tasks, chain learns the hop with
        // the next key update.
        broadcast_lml(cluster, env);
        return Err(ReconnectReject::TestTaskFailed);
    }

    cluster
        .set_status_logged(&uav, UavStatus::Reconnected, env.now_ms)
        .expect("Marked -> Reconnected is legal");
    cluster.unchained_transitions.push(StatusTransition {
        uav: uav.clone(),
        from: UavStatus::Marked,
        to: UavStatus::Reconnected,
    });

    let (key_update, deferred) = match run_key_update(cluster, idbc, env) {
        Ok(r) => (Some(r), false),
        Err(ProcedureError::NoQuorum) => (None, true),
        Err(e) => {
            cluster
                .violations
                .push(format!("cluster {}: rekey after reconnection failed: {e}", cluster.index()));
            (None, true)
        }
    };

    Ok(ReconnectOutcome {
        uav,
        key_update,
        key_update_deferred: deferred,
    })
}
