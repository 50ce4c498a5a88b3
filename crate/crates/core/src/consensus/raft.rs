//! RAFT-style single-leader commit among head UAVs, simulated in virtual
//! time. Elections use randomized timeouts; commits need a majority of the
//! maintainer set; a forced rotation re-elects the leader every N commits.
//! Each maintainer holds a full ledger replica, and replicas only ever
//! advance through committed blocks, so prefixes never diverge.

use crate::consensus::baselines::{ElectionProtocol, ElectionSample};
use crate::crypto::{KeyPair, PublicKey};
use crate::ledger::{Block, Ledger};
use crate::protocol::{CommitReceipt, IdbcError, IdbcHandle, TxIntent};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("no quorum: fewer than a majority of maintainers alive")]
    NoQuorum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusParams {
    /// Randomized election timeout range, ms.
    pub election_timeout_ms: (f64, f64),
    pub heartbeat_interval_ms: u64,
    /// One-way message latency between heads, ms.
    pub link_latency_ms: f64,
    pub link_jitter_ms: f64,
    /// Force a new election every this many commits.
    pub rotation_commits: u32,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        ConsensusParams {
            election_timeout_ms: (150.0, 300.0),
            heartbeat_interval_ms: 50,
            link_latency_ms: 10.0,
            link_jitter_ms: 2.0,
            rotation_commits: 10,
        }
    }
}

/// Pure election-delay model, shared with the delay experiments: the first
/// node whose randomized timeout fires becomes candidate and wins once a
/// majority of vote round-trips complete.
///
/// Returns the winner index (into the live set, sorted order) and the delay.
pub fn raft_election_delay(
    live_count: usize,
    total_count: usize,
    params: &ConsensusParams,
    rng: &mut ChaCha12Rng,
) -> Result<(usize, f64), ConsensusError> {
    let quorum = total_count / 2 + 1;
    if live_count < quorum {
        return Err(ConsensusError::NoQuorum);
    }
    let (lo, hi) = params.election_timeout_ms;
    let timeouts: Vec<f64> = (0..live_count).map(|_| rng.gen_range(lo..hi)).collect();
    let winner = timeouts
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let needed = quorum - 1; // the candidate votes for itself
    let mut rtts: Vec<f64> = (0..live_count - 1)
        .map(|_| {
            let jitter = rng.gen_range(-params.link_jitter_ms..params.link_jitter_ms);
            2.0 * (params.link_latency_ms + jitter).max(0.0)
        })
        .collect();
    rtts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let vote_wait = if needed == 0 { 0.0 } else { rtts[needed - 1] };
    Ok((winner, timeouts[winner] + vote_wait))
}

#[derive(Debug, Clone)]
struct MaintainerNode {
    keypair: KeyPair,
    alive: bool,
    ledger: Ledger,
}

/// Commit outcome details used by the simulation reports.
#[derive(Debug, Clone, PartialEq)]
pub struct CommitStats {
    pub elections_held: u32,
    pub delay_ms: f64,
}

#[derive(Debug)]
pub struct RaftCluster {
    pub params: ConsensusParams,
    rng: ChaCha12Rng,
    nodes: BTreeMap<PublicKey, MaintainerNode>,
    leader: Option<PublicKey>,
    pub term: u64,
    commits_since_election: u32,
    pub election_log: Vec<ElectionSample>,
    /// Test hook: the current leader dies after observing this many acks of
    /// the next proposal. Consumed on use.
    pub scripted_leader_death_after_acks: Option<usize>,
}

impl RaftCluster {
    /// Every maintainer starts from the same genesis replica.
    pub fn new(
        params: ConsensusParams,
        genesis: &Ledger,
        maintainers: Vec<KeyPair>,
        seed_rng: ChaCha12Rng,
    ) -> Self {
        let nodes = maintainers
            .into_iter()
            .map(|kp| {
                (
                    kp.public.clone(),
                    MaintainerNode {
                        keypair: kp,
                        alive: true,
                        ledger: genesis.clone(),
                    },
                )
            })
            .collect();
        RaftCluster {
            params,
            rng: seed_rng,
            nodes,
            leader: None,
            term: 0,
            commits_since_election: 0,
            election_log: Vec::new(),
            scripted_leader_death_after_acks: None,
        }
    }

    pub fn maintainers(&self) -> impl Iterator<Item = &PublicKey> {
        self.nodes.keys()
    }

    pub fn quorum(&self) -> usize {
        self.nodes.len() / 2 + 1
    }

    pub fn live_count(&self) -> usize {
        self.nodes.values().filter(|n| n.alive).count()
    }

    pub fn current_leader(&self) -> Option<&PublicKey> {
        self.leader.as_ref()
    }

    pub fn is_maintainer(&self, pk: &PublicKey) -> bool {
        self.nodes.contains_key(pk)
    }

    /// Mark a maintainer dead (its replica freezes where it is).
    pub fn kill(&mut self, pk: &PublicKey) {
        if let Some(n) = self.nodes.get_mut(pk) {
            n.alive = false;
        }
        if self.leader.as_ref() == Some(pk) {
            self.leader = None;
        }
    }

    /// Elect a leader among live maintainers and log the sample.
    pub fn elect(&mut self) -> Result<(PublicKey, f64), ConsensusError> {
        let live: Vec<PublicKey> = self
            .nodes
            .iter()
            .filter(|(_, n)| n.alive)
            .map(|(pk, _)| pk.clone())
            .collect();
        let (winner_idx, delay) =
            raft_election_delay(live.len(), self.nodes.len(), &self.params, &mut self.rng)?;
        let winner = live[winner_idx].clone();
        self.term += 1;
        self.commits_since_election = 0;
        self.leader = Some(winner.clone());
        self.election_log.push(ElectionSample {
            protocol: ElectionProtocol::Raft,
            cluster_count: self.nodes.len(),
            sample_idx: self.election_log.len(),
            delay_ms: delay,
        });
        Ok((winner, delay))
    }

    /// Make sure a live leader exists and rotation policy is honored.
    fn ensure_leader(&mut self) -> Result<(PublicKey, f64), ConsensusError> {
        let rotation_due = self.commits_since_election >= self.params.rotation_commits;
        let leader_live = self
            .leader
            .as_ref()
            .map(|pk| self.nodes.get(pk).map(|n| n.alive).unwrap_or(false))
            .unwrap_or(false);
        if leader_live && !rotation_due {
            return Ok((self.leader.clone().unwrap(), 0.0));
        }
        self.elect()
    }

    pub fn leader_ledger(&self) -> &Ledger {
        let pk = self
            .leader
            .as_ref()
            .filter(|pk| self.nodes.get(*pk).map(|n| n.alive).unwrap_or(false))
            .cloned()
            .or_else(|| {
                self.nodes
                    .iter()
                    .find(|(_, n)| n.alive)
                    .map(|(pk, _)| pk.clone())
            })
            .or_else(|| self.nodes.keys().next().cloned())
            .expect("maintainer set is never empty");
        &self.nodes[&pk].ledger
    }

    pub fn replica(&self, pk: &PublicKey) -> Option<&Ledger> {
        self.nodes.get(pk).map(|n| &n.ledger)
    }

    /// Commit one block of transactions. Handles election on demand, forced
    /// rotation, and (scripted) leader death mid-commit by re-electing and
    /// re-proposing the same content, which therefore commits exactly once.
    pub fn commit(
        &mut self,
        intents: &[TxIntent],
        now_ms: u64,
    ) -> Result<(CommitReceipt, CommitStats), IdbcError> {
        let mut elections_held = 0u32;
        let mut total_delay = 0.0f64;
        loop {
            let (leader_pk, election_delay) = self.ensure_leader().map_err(|_| IdbcError::NoQuorum)?;
            if election_delay > 0.0 {
                elections_held += 1;
            }
            total_delay += election_delay;

            let leader = &self.nodes[&leader_pk];
            let txs: Result<Vec<_>, _> = intents
                .iter()
                .map(|i| i.materialize(&leader.ledger))
                .collect();
            let txs = txs.map_err(|_| IdbcError::UnknownGenerator)?;
            let block = Block::assemble(
                leader.ledger.height(),
                leader.ledger.tip_hash(),
                leader_pk.clone(),
                now_ms,
                txs,
            )
            .map_err(|_| {
                IdbcError::Rejected(crate::ledger::BlockRejected {
                    height: leader.ledger.height(),
                    tx_index: None,
                    reason: crate::ledger::RejectReason::EmptyBlock,
                })
            })?;

            // Leader validates against its committed prefix.
            leader.ledger.validate_block(&block).map_err(IdbcError::Rejected)?;

            // Followers validate independently; with identical prefixes the
            // verdicts agree, and a bad proposal dies here.
            let followers: Vec<PublicKey> = self
                .nodes
                .iter()
                .filter(|(pk, n)| n.alive && **pk != leader_pk)
                .map(|(pk, _)| pk.clone())
                .collect();
            for f in &followers {
                self.nodes[f]
                    .ledger
                    .validate_block(&block)
                    .map_err(IdbcError::Rejected)?;
            }

            // Ack wave: one-way out, one-way back per follower.
            let mut ack_delays: Vec<f64> = followers
                .iter()
                .map(|_| {
                    let j = self
                        .rng
                        .gen_range(-self.params.link_jitter_ms..self.params.link_jitter_ms);
                    2.0 * (self.params.link_latency_ms + j).max(0.0)
                })
                .collect();
            ack_delays.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let needed = self.quorum().saturating_sub(1);
            if followers.len() < needed {
                return Err(IdbcError::NoQuorum);
            }

            if let Some(after) = self.scripted_leader_death_after_acks.take() {
                if after < needed {
                    // Leader dies before the majority acknowledged: nothing
                    // committed; a new leader re-proposes the same content.
                    self.kill(&leader_pk.clone());
                    continue;
                }
            }

            let commit_wait = if needed == 0 { 0.0 } else { ack_delays[needed - 1] };
            total_delay += self.params.link_latency_ms + commit_wait;

            // Apply to every live replica; replicas share the prefix, so
            // the appends all succeed identically.
            let hash = block.hash();
            let height = block.height;
            for (_, node) in self.nodes.iter_mut().filter(|(_, n)| n.alive) {
                node.ledger
                    .append_block(block.clone())
                    .expect("replicas share the committed prefix");
            }
            self.commits_since_election += 1;
            return Ok((
                CommitReceipt {
                    height,
                    block_hash: hash,
                    leader: leader_pk,
                    delay_ms: total_delay,
                },
                CommitStats {
                    elections_held,
                    delay_ms: total_delay,
                },
            ));
        }
    }

    /// Pairwise prefix-consistency over all replicas (dead ones included:
    /// their frozen prefixes must still agree).
    pub fn check_prefix_consistency(&self) -> Result<(), String> {
        let replicas: Vec<(&PublicKey, &Ledger)> =
            self.nodes.iter().map(|(pk, n)| (pk, &n.ledger)).collect();
        for i in 0..replicas.len() {
            for j in (i + 1)..replicas.len() {
                let (pa, a) = replicas[i];
                let (pb, b) = replicas[j];
                let common = a.height().min(b.height());
                for h in 0..common {
                    let ba = &a.blocks()[h as usize];
                    let bb = &b.blocks()[h as usize];
                    if ba.hash() != bb.hash() {
                        return Err(format!(
                            "replicas {} and {} disagree at height {h}",
                            pa.short_hex(),
                            pb.short_hex()
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

impl IdbcHandle for RaftCluster {
    fn submit(&mut self, intents: &[TxIntent], now_ms: u64) -> Result<CommitReceipt, IdbcError> {
        self.commit(intents, now_ms).map(|(r, _)| r)
    }

    fn ledger(&self) -> &Ledger {
        self.leader_ledger()
    }

    fn leader_keypair(&mut self, _now_ms: u64) -> Result<KeyPair, IdbcError> {
        let (leader, _) = self.ensure_leader().map_err(|_| IdbcError::NoQuorum)?;
        Ok(self.nodes[&leader].keypair.clone())
    }

    fn replace_maintainer(&mut self, old: &PublicKey, replacement: KeyPair) {
        let source = self.leader_ledger().clone();
        if self.leader.as_ref() == Some(old) {
            self.leader = None;
        }
        self.nodes.remove(old);
        self.nodes.insert(
            replacement.public.clone(),
            MaintainerNode {
                keypair: replacement,
                alive: true,
                ledger: source,
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::CryptoSuite;
    use crate::ledger::{Registration, TxExtra, TxPayload, TxType};
    use crate::protocol::Fingerprint;
    use rand::SeedableRng;

    struct Setup {
        raft: RaftCluster,
        heads: Vec<KeyPair>,
    }

    fn setup(head_count: usize, seed: u64) -> Setup {
        let suite = CryptoSuite::real();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let bs = suite.generate_keypair(&mut rng);
        let mut heads = Vec::new();
        let mut regs = Vec::new();
        for c in 0..head_count {
            let kp = suite.generate_keypair(&mut rng);
            regs.push(Registration {
                cluster: c as u32,
                public: kp.public.clone(),
                fingerprint: Fingerprint([c as u8; 32]),
                is_head: true,
            });
            // One member per cluster so task records have somewhere to go.
            let member = suite.generate_keypair(&mut rng);
            regs.push(Registration {
                cluster: c as u32,
                public: member.public.clone(),
                fingerprint: Fingerprint([(100 + c) as u8; 32]),
                is_head: false,
            });
            heads.push(kp);
        }
        let genesis = Ledger::genesis(suite, &bs, &regs, 0).unwrap();
        let raft = RaftCluster::new(
            ConsensusParams::default(),
            &genesis,
            heads.clone(),
            ChaCha12Rng::seed_from_u64(seed ^ 0xABCD),
        );
        Setup { raft, heads }
    }

    fn task_record_intent(s: &Setup, cluster: u32, period: u32, ts: u64) -> TxIntent {
        let head = &s.heads[cluster as usize];
        TxIntent::signed(
            &CryptoSuite::real(),
            TxType::TaskRecord,
            cluster,
            TxPayload {
                public_key: head.public.clone(),
                fingerprint: None,
                timestamp_ms: ts,
                extra: TxExtra::TaskRecord(crate::ledger::TaskRecordInfo {
                    period,
                    entries: vec![],
                }),
            },
            head,
        )
    }

    #[test]
    fn single_live_node_elects_itself() {
        let mut s = setup(1, 1);
        let (leader, delay) = s.raft.elect().unwrap();
        assert_eq!(leader, s.heads[0].public);
        assert!(
            (150.0..300.0).contains(&delay),
            "single node waits only its own timeout, got {delay}"
        );
    }

    #[test]
    fn election_deterministic_under_seed() {
        let mut a = setup(5, 9);
        let mut b = setup(5, 9);
        assert_eq!(a.raft.elect().unwrap(), b.raft.elect().unwrap());
    }

    #[test]
    fn four_of_nine_alive_is_no_quorum() {
        let mut s = setup(9, 2);
        for kp in s.heads.iter().skip(4) {
            s.raft.kill(&kp.public);
        }
        assert_eq!(s.raft.live_count(), 4);
        assert!(matches!(s.raft.elect(), Err(ConsensusError::NoQuorum)));
    }

    #[test]
    fn commit_replicates_to_all_live_nodes() {
        let mut s = setup(3, 3);
        let intent = task_record_intent(&s, 0, 1, 100);
        let (receipt, _) = s.raft.commit(&[intent], 100).unwrap();
        assert_eq!(receipt.height, 1);
        for kp in &s.heads {
            assert_eq!(s.raft.replica(&kp.public).unwrap().height(), 2);
        }
        s.raft.check_prefix_consistency().unwrap();
    }

    #[test]
    fn leader_death_mid_commit_commits_exactly_once() {
        let mut s = setup(5, 4);
        s.raft.elect().unwrap();
        s.raft.scripted_leader_death_after_acks = Some(0);
        let intent = task_record_intent(&s, 1, 1, 200);
        let (receipt, stats) = s.raft.commit(&[intent], 200).unwrap();
        assert_eq!(receipt.height, 1);
        assert!(stats.elections_held >= 1, "a new leader had to take over");
        // Exactly one task_record block across every live replica.
        for kp in &s.heads {
            let ledger = s.raft.replica(&kp.public).unwrap();
            if ledger.height() < 2 {
                continue; // the dead ex-leader's frozen replica
            }
            let count = ledger
                .blocks()
                .iter()
                .flat_map(|b| &b.transactions)
                .filter(|t| t.tx_type == TxType::TaskRecord)
                .count();
            assert_eq!(count, 1);
        }
        s.raft.check_prefix_consistency().unwrap();
    }

    #[test]
    fn invalid_block_is_rejected_not_committed() {
        let mut s = setup(3, 5);
        // A task record "signed" by the wrong key fails the signer rule.
        let bad = TxIntent::signed(
            &CryptoSuite::real(),
            TxType::TaskRecord,
            0,
            TxPayload {
                public_key: s.heads[0].public.clone(),
                fingerprint: None,
                timestamp_ms: 100,
                extra: TxExtra::TaskRecord(crate::ledger::TaskRecordInfo {
                    period: 1,
                    entries: vec![],
                }),
            },
            &s.heads[1],
        );
        assert!(matches!(
            s.raft.commit(&[bad], 100),
            Err(IdbcError::Rejected(_))
        ));
        for kp in &s.heads {
            assert_eq!(s.raft.replica(&kp.public).unwrap().height(), 1);
        }
    }

    #[test]
    fn rotation_re_elects_every_ten_commits() {
        let mut s = setup(3, 6);
        let mut ts = 100;
        for period in 1..=25u32 {
            let intent = task_record_intent(&s, 0, period, ts);
            s.raft.commit(&[intent], ts).unwrap();
            ts += 100;
        }
        // Initial election + rotations after commits 10 and 20.
        assert_eq!(s.raft.election_log.len(), 3);
        assert_eq!(s.raft.term, 3);
    }

    #[test]
    fn replace_maintainer_hands_over_full_chain() {
        let mut s = setup(3, 7);
        let intent = task_record_intent(&s, 0, 1, 50);
        s.raft.commit(&[intent], 50).unwrap();
        let suite = CryptoSuite::real();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let replacement = suite.generate_keypair(&mut rng);
        let old = s.heads[2].public.clone();
        s.raft.kill(&old);
        s.raft.replace_maintainer(&old, replacement.clone());
        assert!(s.raft.is_maintainer(&replacement.public));
        assert!(!s.raft.is_maintainer(&old));
        assert_eq!(s.raft.replica(&replacement.public).unwrap().height(), 2);
        s.raft.check_prefix_consistency().unwrap();
    }
}
