//! Task dispatch and result collection. Tasks go out in plaintext,
//! round-robin over eligible members; results come back as ciphertext under
//! the current cluster key and are double-stored (member primary + head
//! backup) only once the head accepts them.

use crate::crypto::{aes_ctr_apply, h2_concat, ClusterKey, PublicKey};
use crate::protocol::cluster::{Cluster, Task, TaskResultRecord};
use crate::protocol::procedures::ProcEnv;
use crate::protocol::UavStatus;

/// Deterministic encryption of a task result: AES-128-CTR with a
/// task/producer-derived nonce, plus a 16-byte integrity tag.
pub fn encrypt_result(
    key: &ClusterKey,
    task_id: u64,
    producer: &PublicKey,
    plaintext: &[u8],
) -> Vec<u8> {
    let nonce_d = h2_concat(&[b"result-nonce", &task_id.to_be_bytes(), producer.as_bytes()]);
    let nonce: [u8; 16] = nonce_d[..16].try_into().unwrap();
    let mut ct = plaintext.to_vec();
    aes_ctr_apply(&key.key_bytes, &nonce, &mut ct);
    let tag = h2_concat(&[b"result-tag", &key.key_bytes, &nonce, plaintext]);
    ct.extend_from_slice(&tag[..16]);
    ct
}

/// Returns the plaintext if the ciphertext decrypts and authenticates under
/// `key`; `None` marks a wrong key, wrong epoch, or tampering.
pub fn decrypt_result(
    key: &ClusterKey,
    task_id: u64,
    producer: &PublicKey,
    ciphertext: &[u8],
) -> Option<Vec<u8>> {
    if ciphertext.len() < 16 {
        return None;
    }
    let (ct, tag) = ciphertext.split_at(ciphertext.len() - 16);
    let nonce_d = h2_concat(&[b"result-nonce", &task_id.to_be_bytes(), producer.as_bytes()]);
    let nonce: [u8; 16] = nonce_d[..16].try_into().unwrap();
    let mut plain = ct.to_vec();
    aes_ctr_apply(&key.key_bytes, &nonce, &mut plain);
    let expect = h2_concat(&[b"result-tag", &key.key_bytes, &nonce, &plain]);
    if expect[..16] != *tag {
        return None;
    }
    Some(plain)
}

/// Round-robin assignment of queued tasks to task-eligible members. Returns
/// how many tasks each member received.
pub fn assign_tasks(
    cluster: &mut Cluster,
    env: &mut ProcEnv,
) -> std::collections::BTreeMap<PublicKey, u32> {
    let mut out = std::collections::BTreeMap::new();
    let eligible = cluster.task_eligible();
    if eligible.is_empty() {
        return out;
    }
    while let Some(task) = cluster.task_queue.pop_front() {
        let member = eligible[cluster.rr_cursor % eligible.len()].clone();
        cluster.rr_cursor = cluster.rr_cursor.wrapping_add(1);
        // Plaintext dispatch.
        let dist = env.distance(&cluster.head, &member);
        env.meter.charge_tx(&cluster.head, 24, dist);
        env.meter.charge_rx(&member, 24);
        cluster
            .uavs
            .get_mut(&member)
            .expect("eligible member exists")
            .assigned
            .push_back(task);
        *out.entry(member).or_default() += 1;
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct CollectReport {
    pub accepted: Vec<TaskResultRecord>,
    pub rejected_stale_epoch: u32,
    pub rejected_bad_decrypt: u32,
    pub rejected_verification: u32,
    pub requeued: u32,
}

/// Collection pass: every reachable member submits results for its assigned
/// tasks; the head decrypts, re-verifies gray-listed producers, and commits
/// accepted records to both stores. Failed or unreachable tasks go back to
/// the queue.
pub fn collect_results(cluster: &mut Cluster, period: u32, env: &mut ProcEnv) -> CollectReport {
    let mut report = CollectReport::default();
    let head = cluster.head.clone();
    let members: Vec<PublicKey> = cluster.uavs.keys().cloned().collect();
    for member in members {
        if member == head {
            continue;
        }
        let status = cluster.lml.status(&member).unwrap_or(UavStatus::Disconnected);
        let (alive, hijacked, member_key, fingerprint) = {
            let u = &cluster.uavs[&member];
            (u.alive, u.hijacked, u.key, u.fingerprint)
        };
        // Unreachable or quarantined members: pull their tasks back.
        if !alive || !status.is_task_eligible() {
            let mut back: Vec<Task> = Vec::new();
            if let Some(u) = cluster.uavs.get_mut(&member) {
                while let Some(t) = u.assigned.pop_front() {
                    back.push(t);
                }
            }
            for t in back {
                cluster.task_queue.push_back(t);
                report.requeued += 1;
            }
            continue;
        }
        let tasks: Vec<Task> = {
            let u = cluster.uavs.get_mut(&member).unwrap();
            u.assigned.drain(..).collect()
        };
        for task in tasks {
            let mut plaintext = task.expected_plaintext();
            if hijacked {
                plaintext[0] ^= 0xFF;
            }
            let Some(key) = member_key else {
                cluster.task_queue.push_back(task);
                report.requeued += 1;
                continue;
            };
            let ciphertext = encrypt_result(&key, task.id, &member, &plaintext);
            env.meter.charge_hash(&member, plaintext.len());
            let dist = env.distance(&head, &member);
            env.meter.charge_tx(&member, ciphertext.len(), dist);
            env.meter.charge_rx(&head, ciphertext.len());

            // Stale epochs are refused outright.
            if key.epoch != cluster.cluster_key.epoch {
                report.rejected_stale_epoch += 1;
                cluster.task_queue.push_back(task);
                continue;
            }
            let Some(recovered) =
                decrypt_result(&cluster.cluster_key, task.id, &member, &ciphertext)
            else {
                report.rejected_bad_decrypt += 1;
                cluster.task_queue.push_back(task);
                continue;
            };
            env.meter.charge_hash(&head, ciphertext.len());
            // Gray-listed producers get their work recomputed.
            if cluster.wgl.is_gray(&fingerprint) {
                env.meter.charge_hash(&head, recovered.len());
                if recovered != task.expected_plaintext() {
                    report.rejected_verification += 1;
                    cluster.task_queue.push_back(task);
                    continue;
                }
            }
            let record = TaskResultRecord {
                task_id: task.id,
                producer: member.clone(),
                ciphertext,
                key_epoch: key.epoch,
                period,
            };
            cluster
                .uavs
                .get_mut(&member)
                .unwrap()
                .primary
                .push(record.clone());
            cluster
                .holdings
                .entry(member.clone())
                .or_default()
                .push(record.clone());
            report.accepted.push(record);
        }
    }
    report
}
