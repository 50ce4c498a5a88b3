//! Shared fixture for protocol-flow tests: one observed cluster plus two
//! minimal clusters so the ledger has a quorum of maintainers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;
use uavnet_core::consensus::{ConsensusParams, RaftCluster};
use uavnet_core::crypto::{ClusterKey, CryptoSuite, KeyPair, PublicKey};
use uavnet_core::ledger::{Ledger, Registration};
use uavnet_core::protocol::{
    Cluster, ClusterConfig, CommitReceipt, Fingerprint, IdbcError, IdbcHandle, TxIntent,
};
use uavnet_core::sim::{EnergyMeter, EnergyParams};

pub struct World {
    pub suite: CryptoSuite,
    pub cluster: Cluster,
    pub raft: RaftCluster,
    pub positions: BTreeMap<PublicKey, [f64; 3]>,
    pub rng: ChaCha12Rng,
    pub meter: EnergyMeter,
    pub members: Vec<PublicKey>,
}

impl World {
    pub fn head(&self) -> PublicKey {
        self.cluster.head.clone()
    }

    pub fn member(&self, i: usize) -> PublicKey {
        self.members[i].clone()
    }
}

/// Observed cluster has 1 head + `member_count` members; two helper clusters
/// of 2 UAVs each complete the maintainer set.
pub fn world(member_count: usize, seed: u64) -> World {
    let suite = CryptoSuite::real();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let bs = suite.generate_keypair(&mut rng);
    let mut regs = Vec::new();
    let mut positions = BTreeMap::new();
    let mut head_kps = Vec::new();
    let mut observed: Vec<(KeyPair, Fingerprint, u32)> = Vec::new();

    for c in 0..3u32 {
        let size = if c == 0 { member_count + 1 } else { 2 };
        let cx = 6_000.0 * c as f64;
        for i in 0..size {
            let kp = suite.generate_keypair(&mut rng);
            let mut fp = [0u8; 32];
            rng.fill_bytes(&mut fp);
            let fp = Fingerprint(fp);
            regs.push(Registration {
                cluster: c,
                public: kp.public.clone(),
                fingerprint: fp,
                is_head: i == 0,
            });
            let pos = if i == 0 {
                [cx, 0.0, 600.0]
            } else {
                let th = std::f64::consts::TAU * i as f64 / size as f64;
                [cx + 400.0 * th.cos(), 400.0 * th.sin(), 600.0]
            };
            positions.insert(kp.public.clone(), pos);
            if i == 0 {
                head_kps.push(kp.clone());
            }
            if c == 0 {
                observed.push((kp, fp, i as u32));
            }
        }
    }

    let genesis = Ledger::genesis(suite, &bs, &regs, 0).unwrap();
    let raft = RaftCluster::new(
        ConsensusParams::default(),
        &genesis,
        head_kps,
        ChaCha12Rng::seed_from_u64(seed ^ 0x5555),
    );

    let head_pk = observed[0].0.public.clone();
    let members: Vec<PublicKey> = observed[1..].iter().map(|(kp, _, _)| kp.public.clone()).collect();
    let mut key_bytes = [0u8; 16];
    rng.fill_bytes(&mut key_bytes);
    let cluster = Cluster::new(
        ClusterConfig {
            index: 0,
            task_rate: 0,
        },
        head_pk,
        observed,
        ClusterKey {
            key_bytes,
            epoch: 0,
        },
    );

    World {
        suite,
        cluster,
        raft,
        positions,
        rng,
        meter: EnergyMeter::new(EnergyParams::default()),
        members,
    }
}

/// Builds a `ProcEnv` over disjoint `World` fields so cluster and ledger can
/// be borrowed mutably at the same time.
#[macro_export]
macro_rules! env_of {
    ($w:expr, $now:expr) => {
        uavnet_core::protocol::ProcEnv {
            now_ms: $now,
            rng: &mut $w.rng,
            meter: &mut $w.meter,
            positions: &$w.positions,
            suite: $w.suite,
        }
    };
}

/// Ledger handle that refuses the next N submissions with `NoQuorum`.
pub struct FlakyIdbc<'a> {
    pub inner: &'a mut RaftCluster,
    pub fail_next: u32,
}

impl IdbcHandle for FlakyIdbc<'_> {
    fn submit(&mut self, intents: &[TxIntent], now_ms: u64) -> Result<CommitReceipt, IdbcError> {
        if self.fail_next > 0 {
            self.fail_next -= 1;
            return Err(IdbcError::NoQuorum);
        }
        self.inner.submit(intents, now_ms)
    }

    fn ledger(&self) -> &Ledger {
        self.inner.ledger()
    }

    fn leader_keypair(&mut self, now_ms: u64) -> Result<KeyPair, IdbcError> {
        if self.fail_next > 0 {
            return Err(IdbcError::NoQuorum);
        }
        self.inner.leader_keypair(now_ms)
    }

    fn replace_maintainer(&mut self, old: &PublicKey, replacement: KeyPair) {
        self.inner.replace_maintainer(old, replacement)
    }
}
