//! Deterministic simulator and protocol library for blockchain-backed
//! identity management in multi-cluster UAV networks.
//!
//! The library is organized around five subsystems:
//!
//! - [`crypto`]: keypairs, signatures, protocol hashes, cluster-key wrapping.
//! - [`ledger`]: the identity-management blockchain (IDBC) with
//!   generator-chained transactions, Merkle proofs, and contract validation.
//! - [`consensus`]: RAFT-style leader election and block commit among head
//!   UAVs, plus analytical PoW/PoS election baselines.
//! - [`protocol`]: LML / white-gray list maintenance, key updates,
//!   disconnection and reconnection procedures, and the redundant
//!   task-result backup mechanism.
//! - [`sim`]: the discrete-event engine with Gauss-Markov mobility, energy
//!   accounting, fault/attack injection, and CSV reporting.
//!
//! Every run is a pure function of its scenario and seed: repeated runs
//! produce byte-identical reports.

pub mod consensus;
pub mod crypto;
pub mod ledger;
pub mod protocol;
pub mod sim;
