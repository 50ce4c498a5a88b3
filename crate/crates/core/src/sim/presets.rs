//! Bound experiment presets: the robustness/integrity run, the
//! election-delay sweep, the authentication-delay sweep, and the two energy
//! sweeps. Each preset is fully determined by its name and seed.

use crate::consensus::{
    pos_election_delay, pow_election_delay, raft_election_delay, ConsensusParams,
    ElectionProtocol, ElectionSample, RaftCluster,
};
use crate::crypto::{ClusterKey, CryptoSuite, PublicKey};
use crate::ledger::{Block, Ledger, Registration, TaskRecordInfo, TxExtra, TxPayload, TxType};
use crate::protocol::{
    member_disconnection_procedure, Cluster, ClusterConfig, Fingerprint, ProcEnv, TxIntent,
};
use crate::sim::energy::{EnergyMeter, EnergyParams};
use crate::sim::engine::sub_rng;
use crate::sim::scenario::{FaultKind, Scenario, Target};
use rand::RngCore;
use std::collections::BTreeMap;
use std::time::Instant;

pub const PRESET_NAMES: [&str; 5] = [
    "robustness_table2",
    "delay_election_fig6a",
    "delay_auth_fig6b",
    "energy_cluster_fig7a",
    "energy_keylen_fig7b",
];

/// The robustness & integrity run: three clusters of 11 UAVs over 50
/// periods; the observed cluster loses its head in period 14 (the former
/// head later reconnects as a member) and a member in period 49.
pub fn table2_scenario(seed: u64) -> Scenario {
    Scenario::new(seed, 3, 11, 50, 3)
        .with_fault(14, 0, Target::Head, FaultKind::Disconnect)
        .with_fault(20, 0, Target::Uav(0), FaultKind::Reconnect)
        .with_fault(49, 0, Target::Uav(6), FaultKind::Disconnect)
}

/// Default per-miner mean solve time for the PoW baseline, ms.
pub const POW_DIFFICULTY_MEAN_MS: f64 = 60_000.0;
/// Default PoS committee round, ms.
pub const POS_ROUND_MS: f64 = 2_000.0;
pub const ELECTION_CLUSTER_COUNTS: [usize; 8] = [4, 8, 12, 16, 20, 24, 28, 32];
pub const ELECTION_SAMPLES: usize = 30;

/// Election samples for one cluster count; independently seeded so sweep
/// points can run on worker threads without changing the output.
pub fn election_delay_for_count(seed: u64, count: usize) -> Vec<ElectionSample> {
    let params = ConsensusParams::default();
    let mut out = Vec::new();
    let mut rng = sub_rng(seed, &format!("raft-elect-{count}"));
    for sample_idx in 0..ELECTION_SAMPLES {
        let (_, delay_ms) =
            raft_election_delay(count, count, &params, &mut rng).expect("all alive");
        out.push(ElectionSample {
            protocol: ElectionProtocol::Raft,
            cluster_count: count,
            sample_idx,
            delay_ms,
        });
    }
    let mut rng = sub_rng(seed, &format!("pow-elect-{count}"));
    for sample_idx in 0..ELECTION_SAMPLES {
        let delay_ms = pow_election_delay(count, POW_DIFFICULTY_MEAN_MS, &mut rng);
        out.push(ElectionSample {
            protocol: ElectionProtocol::Pow,
            cluster_count: count,
            sample_idx,
            delay_ms,
        });
    }
    let mut rng = sub_rng(seed, &format!("pos-elect-{count}"));
    let stakes = vec![1.0; count];
    for sample_idx in 0..ELECTION_SAMPLES {
        let (_, delay_ms) = pos_election_delay(&stakes, POS_ROUND_MS, &mut rng);
        out.push(ElectionSample {
            protocol: ElectionProtocol::Pos,
            cluster_count: count,
            sample_idx,
            delay_ms,
        });
    }
    out
}

/// Leader-election delay sweep across cluster counts for RAFT, PoW and PoS.
pub fn election_delay_sweep(seed: u64) -> Vec<ElectionSample> {
    ELECTION_CLUSTER_COUNTS
        .iter()
        .flat_map(|&count| election_delay_for_count(seed, count))
        .collect()
}

pub const AUTH_CHAIN_SIZES: [usize; 4] = [100, 1_000, 5_000, 10_000];
pub const AUTH_SAMPLES: usize = 8;

/// Deterministic work-unit sample for the authentication comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthSample {
    pub scheme: &'static str,
    pub chain_blocks: usize,
    pub sample_idx: usize,
    pub work_units: usize,
}

/// Wall-clock sidecar (not deterministic; excluded from reproducibility
/// comparisons).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthTiming {
    pub scheme: &'static str,
    pub chain_blocks: usize,
    pub sample_idx: usize,
    pub wall_ns: u128,
}

/// Authentication-delay sweep: LML lookup (constant work) against
/// newest-to-oldest chain traversal (work grows with chain size) on
/// synthetic chains of 100 / 1k / 5k / 10k blocks.
pub fn auth_delay_sweep(seed: u64) -> (Vec<AuthSample>, Vec<AuthTiming>) {
    let suite = CryptoSuite::null();
    let mut rng = sub_rng(seed, "auth-chain");
    let bs = suite.generate_keypair(&mut rng);
    let cluster_count = 4u32;

    let mut regs = Vec::new();
    let mut heads = Vec::new();
    let mut members = Vec::new();
    for c in 0..cluster_count {
        let head = suite.generate_keypair(&mut rng);
        let member = suite.generate_keypair(&mut rng);
        let mut fp = [0u8; 32];
        rng.fill_bytes(&mut fp);
        regs.push(Registration {
            cluster: c,
            public: head.public.clone(),
            fingerprint: Fingerprint(fp),
            is_head: true,
        });
        let mut fp2 = [0u8; 32];
        rng.fill_bytes(&mut fp2);
        regs.push(Registration {
            cluster: c,
            public: member.public.clone(),
            fingerprint: Fingerprint(fp2),
            is_head: false,
        });
        heads.push(head);
        members.push(member.public.clone());
    }
    let mut ledger = Ledger::genesis(suite, &bs, &regs, 0).expect("genesis");

    // The members' LML view: what the head consults for O(1) authentication.
    let lml = crate::protocol::Lml::new(0, members.iter().cloned());

    let mut samples = Vec::new();
    let mut timings = Vec::new();
    let max_blocks = *AUTH_CHAIN_SIZES.iter().max().unwrap();
    for height in 1..=max_blocks {
        let c = (height % cluster_count as usize) as u32;
        let head = &heads[c as usize];
        let payload = TxPayload {
            public_key: head.public.clone(),
            fingerprint: None,
            timestamp_ms: height as u64,
            extra: TxExtra::TaskRecord(TaskRecordInfo {
                period: height as u32,
                entries: vec![],
            }),
        };
        let intent = TxIntent::signed(&suite, TxType::TaskRecord, c, payload, head);
        let tx = intent.materialize(&ledger).expect("head registered");
        let block = Block::assemble(
            ledger.height(),
            ledger.tip_hash(),
            head.public.clone(),
            height as u64,
            vec![tx],
        )
        .expect("non-empty");
        ledger.append_block(block).expect("valid synthetic block");

        if AUTH_CHAIN_SIZES.contains(&(height + 1)) {
            // +1: genesis counts toward the chain size.
            let size = height + 1;
            for sample_idx in 0..AUTH_SAMPLES {
                let target = &members[sample_idx % members.len()];

                let t = Instant::now();
                let status = lml.status(target);
                let lml_work = 1usize; // one membership entry touched
                let lml_ns = t.elapsed().as_nanos();
                assert!(status.is_some());

                let t = Instant::now();
                let (found, visited) = ledger.traversal_authenticate(target);
                let trav_ns = t.elapsed().as_nanos();
                assert!(found, "registered UAV must be found in the chain");

                samples.push(AuthSample {
                    scheme: "lml_lookup",
                    chain_blocks: size,
                    sample_idx,
                    work_units: lml_work,
                });
                samples.push(AuthSample {
                    scheme: "traversal",
                    chain_blocks: size,
                    sample_idx,
                    work_units: visited,
                });
                timings.push(AuthTiming {
                    scheme: "lml_lookup",
                    chain_blocks: size,
                    sample_idx,
                    wall_ns: lml_ns,
                });
                timings.push(AuthTiming {
                    scheme: "traversal",
                    chain_blocks: size,
                    sample_idx,
                    wall_ns: trav_ns,
                });
            }
        }
    }
    (samples, timings)
}

pub const ENERGY_CLUSTER_SIZES: [usize; 10] = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50];
pub const ENERGY_KEY_LENGTHS: [usize; 3] = [33, 65, 97];
/// Fixed cluster size for the key-length sweep.
pub const ENERGY_KEYLEN_CLUSTER_SIZE: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySweepRow {
    pub sweep: &'static str,
    pub value: usize,
    pub head_joules: f64,
    pub member_mean_joules: f64,
    pub member_min_joules: f64,
    pub member_max_joules: f64,
    pub head_tx_events: u64,
}

/// One controlled member-disconnection procedure with the cluster laid out
/// on a fixed ring (members at 500 m from the hovering head), so energy
/// differences come from the protocol, not from random geometry.
pub fn measure_member_disconnection(
    cluster_size: usize,
    pk_len: usize,
    seed: u64,
) -> EnergySweepRow {
    assert!(cluster_size >= 3, "need a head, a victim, and a survivor");
    let suite = CryptoSuite::real().with_pk_len(pk_len);
    let mut rng = sub_rng(seed, &format!("energy-{cluster_size}-{pk_len}"));
    let bs = suite.generate_keypair(&mut rng);

    let mut regs = Vec::new();
    let mut positions: BTreeMap<PublicKey, [f64; 3]> = BTreeMap::new();
    let mut head_kps = Vec::new();
    let mut observed_members = Vec::new();
    let mut observed_head = None;

    // Cluster 0 is observed; clusters 1 and 2 exist to give the ledger a
    // quorum of maintainers.
    for c in 0..3u32 {
        let size = if c == 0 { cluster_size } else { 2 };
        let center_x = 6_000.0 * c as f64;
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
                [center_x, 0.0, 600.0]
            } else {
                let theta = std::f64::consts::TAU * (i as f64) / (size as f64);
                [center_x + 500.0 * theta.cos(), 500.0 * theta.sin(), 600.0]
            };
            positions.insert(kp.public.clone(), pos);
            if c == 0 {
                if i == 0 {
                    observed_head = Some(kp.clone());
                } else {
                    observed_members.push((kp.clone(), fp, i as u32));
                }
            }
            if i == 0 {
                head_kps.push(kp);
            }
        }
    }

    let genesis = Ledger::genesis(suite, &bs, &regs, 0).expect("genesis");
    let mut raft = RaftCluster::new(
        ConsensusParams::default(),
        &genesis,
        head_kps,
        sub_rng(seed, "energy-consensus"),
    );

    let head = observed_head.expect("cluster 0 has a head");
    let mut key_bytes = [0u8; 16];
    rng.fill_bytes(&mut key_bytes);
    let mut all = vec![(head.clone(), Fingerprint([0; 32]), 0u32)];
    // Reuse registered fingerprints for the cluster construction.
    let fp_of: BTreeMap<PublicKey, Fingerprint> = regs
        .iter()
        .map(|r| (r.public.clone(), r.fingerprint))
        .collect();
    all[0].1 = fp_of[&head.public];
    all.extend(observed_members.iter().cloned());
    let mut cluster = Cluster::new(
        ClusterConfig {
            index: 0,
            task_rate: 0,
        },
        head.public.clone(),
        all,
        ClusterKey {
            key_bytes,
            epoch: 0,
        },
    );

    // Measure only the disconnection procedure itself.
    let mut meter = EnergyMeter::new(EnergyParams::default());
    let victim = observed_members[0].0.public.clone();
    let mut rng_proc = sub_rng(seed, "energy-proc");
    let mut env = ProcEnv {
        now_ms: 1_000,
        rng: &mut rng_proc,
        meter: &mut meter,
        positions: &positions,
        suite,
    };
    let rep = member_disconnection_procedure(&mut cluster, &victim, &mut raft, &mut env)
        .expect("controlled procedure succeeds");
    let backup_target = rep.backup_target;

    let head_e = meter.of(&head.public);
    let mut member_js: Vec<f64> = Vec::new();
    for (kp, _, _) in observed_members.iter().skip(1) {
        // Skip the victim (index 0) and the backup target (it pays extra rx
        // for the copied records).
        if Some(&kp.public) == backup_target.as_ref() {
            continue;
        }
        member_js.push(meter.of(&kp.public).joules);
    }
    let n = member_js.len().max(1) as f64;
    let mean = member_js.iter().sum::<f64>() / n;
    let min = member_js.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = member_js.iter().cloned().fold(0.0f64, f64::max);
    EnergySweepRow {
        sweep: "",
        value: 0,
        head_joules: head_e.joules,
        member_mean_joules: mean,
        member_min_joules: min,
        member_max_joules: max,
        head_tx_events: head_e.tx_events,
    }
}

pub fn energy_cluster_sweep(seed: u64) -> Vec<EnergySweepRow> {
    ENERGY_CLUSTER_SIZES
        .iter()
        .map(|&size| {
            let mut row = measure_member_disconnection(size, 33, seed);
            row.sweep = "cluster_size";
            row.value = size;
            row
        })
        .collect()
}

pub fn energy_keylen_sweep(seed: u64) -> Vec<EnergySweepRow> {
    ENERGY_KEY_LENGTHS
        .iter()
        .map(|&len| {
            let mut row = measure_member_disconnection(ENERGY_KEYLEN_CLUSTER_SIZE, len, seed);
            row.sweep = "pk_len";
            row.value = len;
            row
        })
        .collect()
}

/// CSV rendering helpers shared by the CLI.
pub fn election_csv(samples: &[ElectionSample]) -> String {
    let mut s = String::from("protocol,cluster_count,sample_idx,delay_ms\n");
    for r in samples {
        s.push_str(&format!(
            "{},{},{},{:.6}\n",
            r.protocol.as_str(),
            r.cluster_count,
            r.sample_idx,
            r.delay_ms
        ));
    }
    s
}

pub fn auth_csv(samples: &[AuthSample]) -> String {
    let mut s = String::from("scheme,chain_blocks,sample_idx,work_units\n");
    for r in samples {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.scheme, r.chain_blocks, r.sample_idx, r.work_units
        ));
    }
    s
}

pub fn auth_timing_csv(timings: &[AuthTiming]) -> String {
    let mut s = String::from("scheme,chain_blocks,sample_idx,wall_ns\n");
    for r in timings {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.scheme, r.chain_blocks, r.sample_idx, r.wall_ns
        ));
    }
    s
}

pub fn energy_csv(rows: &[EnergySweepRow]) -> String {
    let mut s = String::from(
        "sweep,value,head_joules,member_mean_joules,member_min_joules,member_max_joules,head_tx_events\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.sweep,
            r.value,
            r.head_joules,
            r.member_mean_joules,
            r.member_min_joules,
            r.member_max_joules,
            r.head_tx_events
        ));
    }
    s
}
