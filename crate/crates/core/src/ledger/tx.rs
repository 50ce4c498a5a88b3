//! Transactions: generator-chained records about UAV identities and tasks.
//!
//! The `generator` names the UAV the transaction is *about*, not the role
//! that submits it (a member-disconnection record is generated "by" the
//! vanished member but signed by its head). `input_address` links every
//! non-genesis transaction to the generator's previous record via a block
//! hash plus Merkle path, forming a per-UAV chain back to its registration.

use crate::crypto::{h2, Digest32, PublicKey, Signature};
use crate::ledger::merkle::MerkleProof;
use crate::protocol::{Fingerprint, UavStatus};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxType {
    Initialization,
    MemberUavDisconnected,
    HeadUavDisconnected,
    HeadUavUpdate,
    KeyUpdate,
    CandidateUpdate,
    TaskRecord,
}

impl TxType {
    pub fn as_u8(self) -> u8 {
        match self {
            TxType::Initialization => 0,
            TxType::MemberUavDisconnected => 1,
            TxType::HeadUavDisconnected => 2,
            TxType::HeadUavUpdate => 3,
            TxType::KeyUpdate => 4,
            TxType::CandidateUpdate => 5,
            TxType::TaskRecord => 6,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => TxType::Initialization,
            1 => TxType::MemberUavDisconnected,
            2 => TxType::HeadUavDisconnected,
            3 => TxType::HeadUavUpdate,
            4 => TxType::KeyUpdate,
            5 => TxType::CandidateUpdate,
            6 => TxType::TaskRecord,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            TxType::Initialization => "initialization",
            TxType::MemberUavDisconnected => "member_uav_disconnected",
            TxType::HeadUavDisconnected => "head_uav_disconnected",
            TxType::HeadUavUpdate => "head_uav_update",
            TxType::KeyUpdate => "key_update",
            TxType::CandidateUpdate => "candidate_update",
            TxType::TaskRecord => "task_record",
        }
    }
}

/// NULL for registration records; otherwise the committed location of the
/// generator's previous transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputAddress {
    Null,
    Previous {
        block_hash: Digest32,
        proof: MerkleProof,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxHeader {
    pub input_address: InputAddress,
    pub cluster_index: u32,
    pub generator: PublicKey,
}

/// One recorded status change, carried inside key-update payloads so the
/// chain observes every LML hop (including the Marked step of a
/// reconnection).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusTransition {
    pub uav: PublicKey,
    pub from: UavStatus,
    pub to: UavStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyUpdateInfo {
    pub epoch: u64,
    pub lml_digest: Digest32,
    pub transitions: Vec<StatusTransition>,
    pub receipts_digest: Digest32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateInfo {
    pub candidate: PublicKey,
    pub lml_digest: Digest32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecordEntry {
    pub task_id: u64,
    pub producer: PublicKey,
    pub ciphertext_hash: Digest32,
    pub key_epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecordInfo {
    pub period: u32,
    pub entries: Vec<TaskRecordEntry>,
}

/// Type-specific payload tail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxExtra {
    /// Registration role: initial cluster head or plain member.
    Init { is_head: bool },
    None,
    KeyUpdate(KeyUpdateInfo),
    Candidate(CandidateInfo),
    TaskRecord(TaskRecordInfo),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxPayload {
    pub public_key: PublicKey,
    pub fingerprint: Option<Fingerprint>,
    pub timestamp_ms: u64,
    pub extra: TxExtra,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub header: TxHeader,
    pub tx_type: TxType,
    pub payload: TxPayload,
    pub signature: Signature,
}

impl Transaction {
    /// Digest the signature covers: `h2` of the canonical payload bytes.
    pub fn signing_digest(&self) -> Digest32 {
        signing_digest(&self.payload)
    }
}

pub fn signing_digest(payload: &TxPayload) -> Digest32 {
    h2(&crate::ledger::wire::encode_payload(payload))
}
