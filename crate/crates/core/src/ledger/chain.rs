//! The committed identity chain: append-only blocks plus the replayed state,
//! with full contract validation on every append. A `Ledger` is one
//! replica's view; consensus keeps replicas in lockstep.

use crate::crypto::{CryptoSuite, Digest32, KeyPair, PublicKey};
use crate::ledger::block::{Block, GENESIS_PREV_HASH};
use crate::ledger::merkle::{merkle_proof, verify_proof, MerkleProof};
use crate::ledger::state::{
    BlockRejected, ClusterView, LedgerState, RejectReason, TxLocator, UavRecord,
};
use crate::ledger::tx::{
    signing_digest, InputAddress, Transaction, TxExtra, TxHeader, TxPayload, TxType,
};
use crate::ledger::wire;
use crate::protocol::select::candidate_from_entries;
use crate::protocol::{Fingerprint, UavStatus};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LookupError {
    #[error("no transaction found for this generator")]
    NotFound,
}

/// Registration input for genesis construction.
#[derive(Debug, Clone)]
pub struct Registration {
    pub cluster: u32,
    pub public: PublicKey,
    pub fingerprint: Fingerprint,
    pub is_head: bool,
}

#[derive(Debug, Clone)]
pub struct Ledger {
    pub suite: CryptoSuite,
    pub state: LedgerState,
    blocks: Vec<Block>,
    hash_index: std::collections::BTreeMap<Digest32, u64>,
}

impl Ledger {
    pub fn new(suite: CryptoSuite, bs_public_key: PublicKey) -> Self {
        Ledger {
            suite,
            state: LedgerState::new(bs_public_key),
            blocks: Vec::new(),
            hash_index: std::collections::BTreeMap::new(),
        }
    }

    /// Build and append the genesis block: one initialization transaction per
    /// registered UAV, all signed by the base station.
    pub fn genesis(
        suite: CryptoSuite,
        bs: &KeyPair,
        registrations: &[Registration],
        timestamp_ms: u64,
    ) -> Result<Ledger, BlockRejected> {
        let mut ledger = Ledger::new(suite, bs.public.clone());
        let txs: Vec<Transaction> = registrations
            .iter()
            .map(|reg| {
                let payload = TxPayload {
                    public_key: reg.public.clone(),
                    fingerprint: Some(reg.fingerprint),
                    timestamp_ms,
                    extra: TxExtra::Init {
                        is_head: reg.is_head,
                    },
                };
                let signature = suite.sign(&bs.secret, &signing_digest(&payload));
                Transaction {
                    header: TxHeader {
                        input_address: InputAddress::Null,
                        cluster_index: reg.cluster,
                        generator: reg.public.clone(),
                    },
                    tx_type: TxType::Initialization,
                    payload,
                    signature,
                }
            })
            .collect();
        let block = Block::assemble(0, GENESIS_PREV_HASH, bs.public.clone(), timestamp_ms, txs)
            .map_err(|_| BlockRejected {
                height: 0,
                tx_index: None,
                reason: RejectReason::EmptyBlock,
            })?;
        ledger.append_block(block)?;
        Ok(ledger)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn tip_hash(&self) -> Digest32 {
        self.blocks
            .last()
            .map(|b| b.hash())
            .unwrap_or(GENESIS_PREV_HASH)
    }

    pub fn block_by_hash(&self, hash: &Digest32) -> Option<&Block> {
        self.hash_index
            .get(hash)
            .map(|&h| &self.blocks[h as usize])
    }

    /// Validate a proposed block against the committed prefix without
    /// mutating anything.
    pub fn validate_block(&self, block: &Block) -> Result<(), BlockRejected> {
        self.check_block(block).map(|_| ())
    }

    /// Validate one transaction against the committed state; pure function
    /// of the chain prefix and the inputs.
    pub fn validate_transaction(
        &self,
        tx: &Transaction,
        proposer: &PublicKey,
    ) -> Result<(), RejectReason> {
        let mut scratch = self.state.clone();
        self.check_tx(&mut scratch, tx, proposer, self.next_timestamp_floor())
    }

    pub fn append_block(&mut self, block: Block) -> Result<(), BlockRejected> {
        let new_state = self.check_block(&block)?;
        self.state = new_state;
        for (i, tx) in block.transactions.iter().enumerate() {
            self.state.latest_by_generator.insert(
                tx.header.generator.clone(),
                TxLocator {
                    height: block.height,
                    tx_index: i as u32,
                    timestamp_ms: tx.payload.timestamp_ms,
                },
            );
        }
        self.hash_index.insert(block.hash(), block.height);
        self.blocks.push(block);
        Ok(())
    }

    fn next_timestamp_floor(&self) -> u64 {
        self.blocks.last().map(|b| b.timestamp_ms).unwrap_or(0)
    }

    fn check_block(&self, block: &Block) -> Result<LedgerState, BlockRejected> {
        let fail = |reason: RejectReason| BlockRejected {
            height: block.height,
            tx_index: None,
            reason,
        };
        if block.prev_hash != self.tip_hash() {
            return Err(fail(RejectReason::BadPrevHash));
        }
        if block.height != self.height() {
            return Err(fail(RejectReason::BadHeight));
        }
        if block.timestamp_ms < self.next_timestamp_floor() {
            return Err(fail(RejectReason::NonMonotonicTimestamp));
        }
        if block.transactions.is_empty() {
            return Err(fail(RejectReason::EmptyBlock));
        }
        match block.recompute_merkle_root() {
            Ok(root) if root == block.merkle_root => {}
            _ => return Err(fail(RejectReason::BadMerkleRoot)),
        }
        // Proposer: BS for genesis, an active head afterwards.
        if block.height == 0 {
            if block.proposer != self.state.bs_public_key {
                return Err(fail(RejectReason::BadProposer));
            }
            if block
                .transactions
                .iter()
                .any(|tx| tx.tx_type != TxType::Initialization)
            {
                return Err(fail(RejectReason::GenesisMustBeInit));
            }
        } else if !self.state.is_active_head(&block.proposer) {
            return Err(fail(RejectReason::BadProposer));
        }
        let mut generators = BTreeSet::new();
        for tx in &block.transactions {
            if !generators.insert(tx.header.generator.clone()) {
                return Err(fail(RejectReason::DuplicateGenerator));
            }
        }
        let mut scratch = self.state.clone();
        for (i, tx) in block.transactions.iter().enumerate() {
            self.check_tx(&mut scratch, tx, &block.proposer, self.next_timestamp_floor())
                .map_err(|reason| BlockRejected {
                    height: block.height,
                    tx_index: Some(i),
                    reason,
                })?;
            // Later transactions in the same block may chain on this one.
            scratch.latest_by_generator.insert(
                tx.header.generator.clone(),
                TxLocator {
                    height: block.height,
                    tx_index: i as u32,
                    timestamp_ms: tx.payload.timestamp_ms,
                },
            );
        }
        Ok(scratch)
    }

    /// Contract validation for one transaction, applied to `state` on
    /// success. `state` may be a scratch copy partially advanced through the
    /// containing block.
    fn check_tx(
        &self,
        state: &mut LedgerState,
        tx: &Transaction,
        proposer: &PublicKey,
        _block_time_floor: u64,
    ) -> Result<(), RejectReason> {
        let generator = &tx.header.generator;
        let cluster = tx.header.cluster_index;

        if tx.payload.public_key != *generator {
            return Err(RejectReason::GeneratorMismatch);
        }

        // Input address: NULL exactly for initialization, otherwise a
        // verifying pointer to the generator's latest committed transaction.
        match (&tx.header.input_address, tx.tx_type) {
            (InputAddress::Null, TxType::Initialization) => {}
            (InputAddress::Null, _) => return Err(RejectReason::BadInputAddress),
            (InputAddress::Previous { .. }, TxType::Initialization) => {
                return Err(RejectReason::BadInputAddress)
            }
            (InputAddress::Previous { block_hash, proof }, _) => {
                self.check_input_address(state, generator, block_hash, proof, tx)?;
            }
        }

        // Signer rule per type.
        let signer: PublicKey = match tx.tx_type {
            TxType::Initialization => state.bs_public_key.clone(),
            TxType::HeadUavDisconnected => proposer.clone(),
            TxType::HeadUavUpdate => generator.clone(),
            TxType::MemberUavDisconnected => {
                let view = state
                    .clusters
                    .get(&cluster)
                    .ok_or(RejectReason::UnknownCluster)?;
                let head_down = state.status_of(&view.head) == Some(UavStatus::Disconnected);
                // A headless cluster's member events are recorded by the
                // ledger leader until a new head is installed.
                if head_down {
                    proposer.clone()
                } else {
                    view.head.clone()
                }
            }
            TxType::KeyUpdate | TxType::CandidateUpdate | TxType::TaskRecord => state
                .clusters
                .get(&cluster)
                .ok_or(RejectReason::UnknownCluster)?
                .head
                .clone(),
        };
        if !self
            .suite
            .verify(&signer, &tx.signing_digest(), &tx.signature)
        {
            return Err(RejectReason::BadSigner);
        }

        match tx.tx_type {
            TxType::Initialization => self.apply_initialization(state, tx),
            TxType::MemberUavDisconnected => self.apply_member_disconnected(state, tx),
            TxType::HeadUavDisconnected => self.apply_head_disconnected(state, tx),
            TxType::HeadUavUpdate => self.apply_head_update(state, tx),
            TxType::KeyUpdate => self.apply_key_update(state, tx),
            TxType::CandidateUpdate => self.apply_candidate_update(state, tx),
            TxType::TaskRecord => self.apply_task_record(state, tx),
        }
    }

    fn check_input_address(
        &self,
        state: &LedgerState,
        generator: &PublicKey,
        block_hash: &Digest32,
        proof: &MerkleProof,
        tx: &Transaction,
    ) -> Result<(), RejectReason> {
        let locator = state
            .latest_by_generator
            .get(generator)
            .ok_or(RejectReason::UnknownGenerator)?;
        let block = self
            .block_by_hash(block_hash)
            .ok_or(RejectReason::BadInputAddress)?;
        if block.height != locator.height || proof.leaf_index != locator.tx_index {
            return Err(RejectReason::BadInputAddress);
        }
        let prev_tx = block
            .transactions
            .get(proof.leaf_index as usize)
            .ok_or(RejectReason::BadInputAddress)?;
        if prev_tx.header.generator != *generator {
            return Err(RejectReason::BadInputAddress);
        }
        if !verify_proof(&wire::encode_tx(prev_tx), proof, &block.merkle_root) {
            return Err(RejectReason::BadInputAddress);
        }
        if tx.payload.timestamp_ms < prev_tx.payload.timestamp_ms {
            return Err(RejectReason::BadTimestamp);
        }
        Ok(())
    }

    fn registered_fingerprint_check(
        state: &LedgerState,
        tx: &Transaction,
    ) -> Result<(), RejectReason> {
        let rec = state
            .uavs
            .get(&tx.header.generator)
            .ok_or(RejectReason::UnknownGenerator)?;
        match tx.payload.fingerprint {
            None => Err(RejectReason::MissingFingerprint),
            Some(fp) if fp != rec.fingerprint => Err(RejectReason::FingerprintMismatch),
            Some(_) => Ok(()),
        }
    }

    fn apply_initialization(
        &self,
        state: &mut LedgerState,
        tx: &Transaction,
    ) -> Result<(), RejectReason> {
        if self.height() != 0 {
            return Err(RejectReason::InitOutsideGenesis);
        }
        let fp = tx
            .payload
            .fingerprint
            .ok_or(RejectReason::MissingFingerprint)?;
        let is_head = match tx.payload.extra {
            TxExtra::Init { is_head } => is_head,
            _ => return Err(RejectReason::GeneratorMismatch),
        };
        if state.uavs.contains_key(&tx.header.generator) {
            return Err(RejectReason::DuplicateEvent);
        }
        state.uavs.insert(
            tx.header.generator.clone(),
            UavRecord {
                cluster: tx.header.cluster_index,
                fingerprint: fp,
                status: UavStatus::Native,
            },
        );
        if is_head {
            state.clusters.insert(
                tx.header.cluster_index,
                ClusterView {
                    head: tx.header.generator.clone(),
                    latest_candidate: None,
                    key_epoch: 0,
                },
            );
        }
        Ok(())
    }

    fn in_cluster<'s>(
        state: &'s LedgerState,
        tx: &Transaction,
    ) -> Result<&'s UavRecord, RejectReason> {
        let rec = state
            .uavs
            .get(&tx.header.generator)
            .ok_or(RejectReason::UnknownGenerator)?;
        if rec.cluster != tx.header.cluster_index {
            return Err(RejectReason::WrongCluster);
        }
        if !state.clusters.contains_key(&tx.header.cluster_index) {
            return Err(RejectReason::UnknownCluster);
        }
        Ok(rec)
    }

    fn apply_member_disconnected(
        &self,
        state: &mut LedgerState,
        tx: &Transaction,
    ) -> Result<(), RejectReason> {
        let rec = Self::in_cluster(state, tx)?;
        let current = rec.status;
        let view = &state.clusters[&tx.header.cluster_index];
        if tx.header.generator == view.head {
            return Err(RejectReason::IsClusterHead);
        }
        Self::registered_fingerprint_check(state, tx)?;
        if current == UavStatus::Disconnected {
            return Err(RejectReason::DuplicateEvent);
        }
        if !UavStatus::can_transition(current, UavStatus::Disconnected) {
            return Err(RejectReason::IllegalStateTransition);
        }
        state.uavs.get_mut(&tx.header.generator).unwrap().status = UavStatus::Disconnected;
        Ok(())
    }

    fn apply_head_disconnected(
        &self,
        state: &mut LedgerState,
        tx: &Transaction,
    ) -> Result<(), RejectReason> {
        let rec = Self::in_cluster(state, tx)?;
        let current = rec.status;
        let view = &state.clusters[&tx.header.cluster_index];
        if tx.header.generator != view.head {
            return Err(RejectReason::NotTheHead);
        }
        Self::registered_fingerprint_check(state, tx)?;
        if current == UavStatus::Disconnected {
            return Err(RejectReason::DuplicateEvent);
        }
        if !UavStatus::can_transition(current, UavStatus::Disconnected) {
            return Err(RejectReason::IllegalStateTransition);
        }
        state.uavs.get_mut(&tx.header.generator).unwrap().status = UavStatus::Disconnected;
        Ok(())
    }

    fn apply_head_update(
        &self,
        state: &mut LedgerState,
        tx: &Transaction,
    ) -> Result<(), RejectReason> {
        let rec = Self::in_cluster(state, tx)?;
        let generator_status = rec.status;
        Self::registered_fingerprint_check(state, tx)?;
        let cluster = tx.header.cluster_index;
        let view = state.clusters.get(&cluster).unwrap();
        if state.status_of(&view.head) != Some(UavStatus::Disconnected) {
            return Err(RejectReason::HeadStillActive);
        }
        // A reconnected UAV may only ever act as a member again.
        if generator_status != UavStatus::Native {
            return Err(RejectReason::CandidateNotNative);
        }
        // The expected candidate: the latest on-chain candidate record if it
        // is still Native, otherwise recomputed from the replayed view (also
        // the rule before any candidate record exists for the cluster).
        let entries = state.entries_of(cluster);
        let stored = view.latest_candidate.clone().filter(|c| {
            state.status_of(c) == Some(UavStatus::Native)
        });
        let expected = match stored {
            Some(c) => c,
            None => candidate_from_entries(&entries, &view.head)
                .map_err(|_| RejectReason::NotTheCandidate)?,
        };
        if tx.header.generator != expected {
            return Err(RejectReason::NotTheCandidate);
        }
        let view = state.clusters.get_mut(&cluster).unwrap();
        view.head = tx.header.generator.clone();
        view.latest_candidate = None;
        Ok(())
    }

    fn apply_key_update(
        &self,
        state: &mut LedgerState,
        tx: &Transaction,
    ) -> Result<(), RejectReason> {
        let rec = Self::in_cluster(state, tx)?;
        let _ = rec;
        let cluster = tx.header.cluster_index;
        if tx.header.generator != state.clusters[&cluster].head {
            return Err(RejectReason::NotTheHead);
        }
        let info = match &tx.payload.extra {
            TxExtra::KeyUpdate(info) => info.clone(),
            _ => return Err(RejectReason::GeneratorMismatch),
        };
        if info.epoch <= state.clusters[&cluster].key_epoch {
            return Err(RejectReason::StaleEpoch);
        }
        for t in &info.transitions {
            let rec = state
                .uavs
                .get_mut(&t.uav)
                .ok_or(RejectReason::UnknownGenerator)?;
            if rec.cluster != cluster {
                return Err(RejectReason::WrongCluster);
            }
            if rec.status != t.from || !UavStatus::can_transition(t.from, t.to) {
                return Err(RejectReason::IllegalStateTransition);
            }
            rec.status = t.to;
        }
        if info.lml_digest != state.view_digest(cluster) {
            return Err(RejectReason::BadLmlDigest);
        }
        state.clusters.get_mut(&cluster).unwrap().key_epoch = info.epoch;
        Ok(())
    }

    fn apply_candidate_update(
        &self,
        state: &mut LedgerState,
        tx: &Transaction,
    ) -> Result<(), RejectReason> {
        Self::in_cluster(state, tx)?;
        let cluster = tx.header.cluster_index;
        let info = match &tx.payload.extra {
            TxExtra::Candidate(info) => info.clone(),
            _ => return Err(RejectReason::GeneratorMismatch),
        };
        if info.candidate != tx.header.generator {
            return Err(RejectReason::GeneratorMismatch);
        }
        if info.lml_digest != state.view_digest(cluster) {
            return Err(RejectReason::BadLmlDigest);
        }
        let head = state.clusters[&cluster].head.clone();
        let entries = state.entries_of(cluster);
        let expected =
            candidate_from_entries(&entries, &head).map_err(|_| RejectReason::NotTheCandidate)?;
        if expected != info.candidate {
            return Err(RejectReason::NotTheCandidate);
        }
        if state.status_of(&info.candidate) != Some(UavStatus::Native) {
            return Err(RejectReason::CandidateNotNative);
        }
        state.clusters.get_mut(&cluster).unwrap().latest_candidate = Some(info.candidate);
        Ok(())
    }

    fn apply_task_record(
        &self,
        state: &mut LedgerState,
        tx: &Transaction,
    ) -> Result<(), RejectReason> {
        Self::in_cluster(state, tx)?;
        let cluster = tx.header.cluster_index;
        if tx.header.generator != state.clusters[&cluster].head {
            return Err(RejectReason::NotTheHead);
        }
        let info = match &tx.payload.extra {
            TxExtra::TaskRecord(info) => info,
            _ => return Err(RejectReason::GeneratorMismatch),
        };
        let epoch = state.clusters[&cluster].key_epoch;
        if info.entries.iter().any(|e| e.key_epoch > epoch) {
            return Err(RejectReason::StaleEpoch);
        }
        Ok(())
    }

    /// Most recent transaction whose generator is `pk`, with a verifying
    /// inclusion proof. The building block for input addresses.
    pub fn latest_tx_for_generator(
        &self,
        pk: &PublicKey,
    ) -> Result<(Digest32, MerkleProof, Transaction), LookupError> {
        let locator = self
            .state
            .latest_by_generator
            .get(pk)
            .ok_or(LookupError::NotFound)?;
        let block = &self.blocks[locator.height as usize];
        let leaves: Vec<Vec<u8>> = block.transactions.iter().map(wire::encode_tx).collect();
        let proof =
            merkle_proof(&leaves, locator.tx_index as usize).expect("locator index in range");
        Ok((
            block.hash(),
            proof,
            block.transactions[locator.tx_index as usize].clone(),
        ))
    }

    /// Input address pointing at the generator's latest committed record.
    pub fn input_address_for(&self, pk: &PublicKey) -> Result<InputAddress, LookupError> {
        let (block_hash, proof, _) = self.latest_tx_for_generator(pk)?;
        Ok(InputAddress::Previous { block_hash, proof })
    }

    /// Baseline authentication: scan from the newest block towards genesis
    /// until a transaction generated by `pk` appears. Returns whether it was
    /// found and how many blocks were inspected (the delay proxy).
    pub fn traversal_authenticate(&self, pk: &PublicKey) -> (bool, usize) {
        let mut visited = 0;
        for block in self.blocks.iter().rev() {
            visited += 1;
            if block.transactions.iter().any(|tx| tx.header.generator == *pk) {
                return (true, visited);
            }
        }
        (false, visited)
    }
}

/// Full recomputation of an imported chain: hashes, Merkle roots, signatures,
/// and every state-transition contract, reported as the first failing
/// block/transaction.
pub fn verify_chain(
    header: &wire::ChainFileHeader,
    blocks: &[Block],
) -> Result<(), BlockRejected> {
    let mode = header.crypto_mode;
    let suite = CryptoSuite {
        mode,
        pk_len: header.pk_len as usize,
    };
    let mut ledger = Ledger::new(suite, header.bs_public_key.clone());
    for block in blocks {
        ledger.append_block(block.clone())?;
    }
    Ok(())
}
