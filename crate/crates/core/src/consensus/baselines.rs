//! Analytical election-delay baselines. These model the *shape* of PoW and
//! PoS leader election (ordering and trend versus cluster count), not real
//! mining: absolute numbers are configuration-bound.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElectionProtocol {
    Raft,
    Pow,
    Pos,
}

impl ElectionProtocol {
    pub fn as_str(self) -> &'static str {
        match self {
            ElectionProtocol::Raft => "raft",
            ElectionProtocol::Pow => "pow",
            ElectionProtocol::Pos => "pos",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionSample {
    pub protocol: ElectionProtocol,
    pub cluster_count: usize,
    pub sample_idx: usize,
    pub delay_ms: f64,
}

/// First solver wins: the election delay is the minimum over per-node
/// exponential solve times with mean `difficulty_mean_ms`.
pub fn pow_election_delay(node_count: usize, difficulty_mean_ms: f64, rng: &mut ChaCha12Rng) -> f64 {
    assert!(node_count > 0, "PoW election needs at least one node");
    (0..node_count)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..1.0);
            -difficulty_mean_ms * (1.0 - u).ln()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Stake-weighted winner draw plus a constant committee round.
pub fn pos_election_delay(
    stakes: &[f64],
    round_ms: f64,
    rng: &mut ChaCha12Rng,
) -> (usize, f64) {
    assert!(!stakes.is_empty(), "PoS election needs at least one staker");
    let total: f64 = stakes.iter().sum();
    assert!(total > 0.0, "stakes must be positive");
    let mut draw: f64 = rng.gen_range(0.0..1.0) * total;
    let mut winner = stakes.len() - 1;
    for (i, s) in stakes.iter().enumerate() {
        if draw < *s {
            winner = i;
            break;
        }
        draw -= s;
    }
    (winner, round_ms)
}
