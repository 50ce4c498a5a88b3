//! Leader election and block commit for the ledger maintainers, plus the
//! PoW/PoS election-delay baselines used in the comparison experiments.

pub mod baselines;
pub mod raft;

pub use baselines::{
    pos_election_delay, pow_election_delay, ElectionProtocol, ElectionSample,
};
pub use raft::{raft_election_delay, CommitStats, ConsensusError, ConsensusParams, RaftCluster};
