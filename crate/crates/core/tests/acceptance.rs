//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Thresholds and tolerances are pinned here, in code.

mod common;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;
use std::time::Instant;
use uavnet_core::crypto::{derive_index, h1, xor_fold, PublicKey};
use uavnet_core::ledger::{verify_chain, wire, TxExtra, TxType};
use uavnet_core::protocol::select::candidate_from_entries;
use uavnet_core::protocol::UavStatus;
use uavnet_core::sim::presets::{
    auth_delay_sweep, election_delay_sweep, energy_cluster_sweep, energy_keylen_sweep,
    table2_scenario, AUTH_CHAIN_SIZES, ELECTION_CLUSTER_COUNTS,
};
use uavnet_core::sim::{self, FaultKind, RunReport, Scenario, Target};

const TABLE2_SEED: u64 = 7;

fn pass(n: u32, name: &str) {
    println!("ACCEPTANCE {n} ({name}): PASS");
}

fn table2_report() -> RunReport {
    sim::run(&table2_scenario(TABLE2_SEED)).expect("preset scenario is valid")
}

#[test]
fn criterion_1_integrity_every_period() {
    let started = Instant::now();
    let report = table2_report();
    let elapsed = started.elapsed();

    assert_eq!(report.integrity_rows.len(), 50 * 3, "a row per period per cluster");
    for row in &report.integrity_rows {
        assert!(
            row.ok,
            "period {} cluster {}: members {} backup {} accepted {}",
            row.period, row.cluster, row.member_total, row.backup_total, row.accepted_total
        );
        assert_eq!(row.member_total, row.backup_total);
        assert_eq!(row.backup_total, row.accepted_total);
    }
    assert!(report.violations.is_empty(), "{:?}", report.violations);
    assert!(report.consistency_ok, "ledger replicas diverged");
    assert!(report.containment_ok, "a UAV left its operating cylinder");
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "run took {elapsed:?}, budget is 10 s"
    );
    pass(1, "integrity invariant holds at every period");
}

#[test]
fn criterion_2_robustness_and_reconnected_head() {
    let report = table2_report();

    // Throughput never drops to zero in the observed cluster.
    for row in report.throughput_rows.iter().filter(|r| r.cluster == 0) {
        assert!(row.accepted > 0, "period {} accepted 0 tasks", row.period);
    }
    // The cluster never disbands: exactly one head every period.
    for period in 1..=50u32 {
        let heads: Vec<_> = report
            .period_rows
            .iter()
            .filter(|r| r.cluster == 0 && r.period == period && r.head_flag)
            .collect();
        assert_eq!(heads.len(), 1, "period {period}");
    }
    // The former head (uav 0) reconnects, produces results as Reconnected...
    let final_uav0 = report
        .period_rows
        .iter()
        .find(|r| r.cluster == 0 && r.period == 50 && r.uav == 0)
        .unwrap();
    assert_eq!(final_uav0.status, "Reconnected");
    assert!(final_uav0.primary_count > 0, "reconnected head resumed producing");
    // ... and never reappears in the cluster head list.
    let change = report
        .chl_rows
        .iter()
        .find(|r| r.cluster == 0 && r.time_ms > 0)
        .expect("head change recorded");
    for row in report.chl_rows.iter().filter(|r| r.cluster == 0) {
        if row.time_ms >= change.time_ms {
            assert_ne!(row.head_uav, 0, "former head must never lead again");
        }
    }
    pass(2, "robustness: no disband, nonzero throughput, reconnected head stays member");
}

#[test]
fn criterion_3_authentication_delay() {
    let started = Instant::now();
    let (samples, _timings) = auth_delay_sweep(11);

    // LML lookup work is O(1): identical at every chain size.
    let lml: Vec<usize> = samples
        .iter()
        .filter(|s| s.scheme == "lml_lookup")
        .map(|s| s.work_units)
        .collect();
    assert!(!lml.is_empty());
    assert!(lml.iter().all(|&w| w == lml[0]), "variance must be zero");

    // Traversal work grows linearly in chain size: R^2 > 0.99.
    let mut mean_by_size: Vec<(f64, f64)> = Vec::new();
    for &size in &AUTH_CHAIN_SIZES {
        let works: Vec<f64> = samples
            .iter()
            .filter(|s| s.scheme == "traversal" && s.chain_blocks == size)
            .map(|s| s.work_units as f64)
            .collect();
        assert!(!works.is_empty());
        mean_by_size.push((size as f64, works.iter().sum::<f64>() / works.len() as f64));
    }
    let r2 = linear_r2(&mean_by_size);
    assert!(r2 > 0.99, "R^2 = {r2}");

    // Work ratio at 1k blocks under 50%.
    let trav_1k = mean_by_size
        .iter()
        .find(|(s, _)| *s == 1_000.0)
        .unwrap()
        .1;
    let ratio = lml[0] as f64 / trav_1k;
    assert!(ratio < 0.5, "ratio {ratio}");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "sweep took {elapsed:?}");
    pass(3, "authentication work: O(1) lookup vs linear traversal, ratio < 0.5 at 1k");
}

fn linear_r2(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let e = p.1 - (slope * p.0 + intercept);
            e * e
        })
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    1.0 - ss_res / ss_tot
}

#[test]
fn criterion_4_election_delay_shape() {
    let samples = election_delay_sweep(13);
    let mean_of = |proto: &str, count: usize| -> f64 {
        let v: Vec<f64> = samples
            .iter()
            .filter(|s| s.protocol.as_str() == proto && s.cluster_count == count)
            .map(|s| s.delay_ms)
            .collect();
        assert_eq!(v.len(), 30, "30 seeded samples per point");
        v.iter().sum::<f64>() / v.len() as f64
    };

    let raft_means: Vec<f64> = ELECTION_CLUSTER_COUNTS
        .iter()
        .map(|&c| mean_of("raft", c))
        .collect();
    let overall = raft_means.iter().sum::<f64>() / raft_means.len() as f64;
    let spread = (raft_means.iter().cloned().fold(f64::MIN, f64::max)
        - raft_means.iter().cloned().fold(f64::MAX, f64::min))
        / overall;
    assert!(
        spread < 0.20,
        "raft means {raft_means:?} vary by {spread:.3} (>20%)"
    );

    for &count in &ELECTION_CLUSTER_COUNTS {
        let pow = mean_of("pow", count);
        let raft = mean_of("raft", count);
        assert!(
            pow >= 5.0 * raft,
            "count {count}: pow {pow:.1} ms vs raft {raft:.1} ms"
        );
    }
    pass(4, "raft election delay nearly stable (4..32); pow >= 5x raft");
}

#[test]
fn criterion_5_energy_trends() {
    let cluster_rows = energy_cluster_sweep(17);
    for pair in cluster_rows.windows(2) {
        assert!(
            pair[1].head_joules > pair[0].head_joules,
            "head energy must increase with cluster size: {} -> {}",
            pair[0].value,
            pair[1].value
        );
    }
    let keylen_rows = energy_keylen_sweep(17);
    for pair in keylen_rows.windows(2) {
        assert!(
            pair[1].head_joules > pair[0].head_joules,
            "head energy must increase with key length: {} -> {}",
            pair[0].value,
            pair[1].value
        );
    }
    for (name, rows) in [("cluster-size", &cluster_rows), ("key-length", &keylen_rows)] {
        let means: Vec<f64> = rows.iter().map(|r| r.member_mean_joules).collect();
        let overall = means.iter().sum::<f64>() / means.len() as f64;
        let spread = (means.iter().cloned().fold(f64::MIN, f64::max)
            - means.iter().cloned().fold(f64::MAX, f64::min))
            / overall;
        assert!(
            spread < 0.05,
            "{name} sweep: member energy varies by {:.3}% (>5%)",
            spread * 100.0
        );
    }
    pass(5, "head energy strictly increasing in cluster size and key length; member flat");
}

/// Random fault schedules inside the threat model.
fn random_valid_scenario(i: u64) -> Scenario {
    let mut rng = ChaCha12Rng::seed_from_u64(9_000 + i);
    let mut s = Scenario::new(9_000 + i, 3, 5, 8, 2);
    // A member of cluster 0 drops early and reconnects two periods later.
    let victim = 1 + (rng.gen::<u32>() % 4);
    let p1 = 2 + (rng.gen::<u32>() % 3);
    s = s
        .with_fault(p1, 0, Target::Uav(victim), FaultKind::Disconnect)
        .with_fault(p1 + 2, 0, Target::Uav(victim), FaultKind::Reconnect);
    // Sometimes a hijack in cluster 1, sometimes a foreign attack on 2.
    if rng.gen::<bool>() {
        s = s.with_fault(2, 1, Target::Uav(1), FaultKind::Hijack);
    }
    if rng.gen::<bool>() {
        s = s.with_fault(3, 2, Target::Head, FaultKind::ForeignAttack);
    }
    // One head failure late in the run, in a rotating cluster; never cluster
    // 0 in the victim's disconnect period range.
    let head_cluster = (rng.gen::<u32>() % 2) + 1;
    s = s.with_fault(6, head_cluster, Target::Head, FaultKind::Disconnect);
    s
}

#[test]
fn criterion_6_consensus_safety_over_100_schedules() {
    for i in 0..100u64 {
        let scenario = random_valid_scenario(i);
        scenario.validate().unwrap_or_else(|e| panic!("schedule {i}: {e}"));
        let report = sim::run(&scenario).unwrap();
        assert!(
            report.consistency_ok,
            "schedule {i}: replicas disagree at some height"
        );
        assert!(report.integrity_all_ok(), "schedule {i}: integrity broke");
        // Every committed chain passes full re-verification from bytes.
        let (header, blocks) = wire::decode_chain_file(&report.chain_bytes)
            .unwrap_or_else(|e| panic!("schedule {i}: chain decode: {e}"));
        verify_chain(&header, &blocks).unwrap_or_else(|e| panic!("schedule {i}: {e}"));
    }
    pass(6, "no replica divergence across 100 schedules; all chains re-verify");
}

#[test]
fn criterion_7_protocol_soundness() {
    // (a) Only legal LML transitions ever occur, across a faulty run and
    //     the 20 first random schedules.
    let allowed = |from: &str, to: &str| {
        matches!(
            (from, to),
            ("Native", "Disconnected")
                | ("Disconnected", "Marked")
                | ("Marked", "Reconnected")
                | ("Marked", "Disconnected")
                | ("Reconnected", "Disconnected")
        )
    };
    let mut reports = vec![table2_report()];
    for i in 0..20 {
        reports.push(sim::run(&random_valid_scenario(i)).unwrap());
    }
    let mut transitions_seen = 0;
    for report in &reports {
        for t in &report.transition_rows {
            assert!(allowed(&t.from, &t.to), "illegal transition {} -> {}", t.from, t.to);
            transitions_seen += 1;
        }
    }
    assert!(transitions_seen > 0);

    // (b) Candidate selection is node-identical and matches the independent
    //     xor/h1/mod oracle on 1000 random LMLs.
    let mut rng = ChaCha12Rng::seed_from_u64(555);
    let mut checked = 0;
    while checked < 1000 {
        let n = 3 + (rng.gen::<usize>() % 9);
        let mut entries: BTreeMap<PublicKey, UavStatus> = BTreeMap::new();
        for _ in 0..n {
            let mut b = vec![0u8; 33];
            rng.fill_bytes(&mut b);
            let status = match rng.gen::<u32>() % 4 {
                0 => UavStatus::Native,
                1 => UavStatus::Disconnected,
                2 => UavStatus::Marked,
                _ => UavStatus::Reconnected,
            };
            entries.insert(PublicKey(b), status);
        }
        let head = entries.keys().next().unwrap().clone();
        let eligible: Vec<PublicKey> = entries
            .iter()
            .filter(|(pk, st)| **st == UavStatus::Native && **pk != head)
            .map(|(pk, _)| pk.clone())
            .collect();
        if eligible.is_empty() {
            continue;
        }
        checked += 1;

        // Independent oracle: explicit fold, h1, big-endian mod, sorted list.
        let mut fold = vec![0u8; 33];
        for k in entries.keys() {
            for (a, b) in fold.iter_mut().zip(k.as_bytes()) {
                *a ^= b;
            }
        }
        let idx = derive_index(&h1(&fold), eligible.len()).unwrap();
        let expected = eligible[idx].clone();
        let got = candidate_from_entries(&entries, &head).unwrap();
        assert_eq!(got, expected);
        // Node-identical across replicas.
        for _ in 0..3 {
            assert_eq!(candidate_from_entries(&entries.clone(), &head).unwrap(), got);
        }
        // Cross-check the fold helper against the oracle fold.
        let keys: Vec<PublicKey> = entries.keys().cloned().collect();
        assert_eq!(xor_fold(&keys).unwrap(), fold);
    }

    // (c) Foreign reconnections always rejected; hijacked UAVs that failed
    //     the test task never get tasks afterwards.
    let foreign = Scenario::new(31, 1, 4, 4, 1)
        .with_fault(2, 0, Target::Head, FaultKind::ForeignAttack)
        .with_fault(3, 0, Target::Head, FaultKind::ForeignAttack);
    let report = sim::run(&foreign).unwrap();
    let attacks: Vec<_> = report
        .event_rows
        .iter()
        .filter(|e| e.kind == "foreign_attack")
        .collect();
    assert_eq!(attacks.len(), 2);
    for a in &attacks {
        assert!(a.detail.contains("rejected:UnknownKey"), "{}", a.detail);
    }
    let hijack = Scenario::new(32, 1, 5, 12, 2)
        .with_fault(2, 0, Target::Uav(2), FaultKind::Hijack)
        .with_fault(4, 0, Target::Uav(2), FaultKind::Disconnect)
        .with_fault(7, 0, Target::Uav(2), FaultKind::Reconnect);
    let report = sim::run(&hijack).unwrap();
    let reject = report
        .event_rows
        .iter()
        .find(|e| e.kind == "reconnect_reject" && e.detail.contains("TestTaskFailed"))
        .expect("hijacked reconnection must fail the test task");
    assert!(report
        .assignment_rows
        .iter()
        .all(|a| !(a.uav == 2 && a.time_ms > reject.time_ms)));

    // (d) Cluster-key epochs strictly increase on-chain...
    let report = table2_report();
    let (_, blocks) = wire::decode_chain_file(&report.chain_bytes).unwrap();
    let mut epochs: BTreeMap<u32, u64> = BTreeMap::new();
    let mut key_updates = 0;
    for block in &blocks {
        for tx in &block.transactions {
            if tx.tx_type == TxType::KeyUpdate {
                if let TxExtra::KeyUpdate(info) = &tx.payload.extra {
                    let prev = epochs.insert(tx.header.cluster_index, info.epoch);
                    assert!(
                        prev.map(|p| info.epoch > p).unwrap_or(true),
                        "epoch must strictly increase"
                    );
                    key_updates += 1;
                }
            }
        }
    }
    assert!(key_updates >= 3, "head change, reconnection, member loss each rekeyed");

    // ... and a member still encrypting under a stale epoch is refused and
    // its task requeued.
    {
        use uavnet_core::protocol::{assign_tasks, collect_results, run_key_update, Task};
        let mut w = common::world(3, 99);
        let old_key = w.cluster.cluster_key;
        {
            let mut env = env_of!(w, 1_000);
            run_key_update(&mut w.cluster, &mut w.raft, &mut env).unwrap();
        }
        let laggard = w.member(0);
        w.cluster.uavs.get_mut(&laggard).unwrap().key = Some(old_key);
        for i in 0..3u64 {
            w.cluster.task_queue.push_back(Task {
                id: i,
                cluster: 0,
                period: 1,
                seed: i,
            });
        }
        let rep = {
            let mut env = env_of!(w, 2_000);
            assign_tasks(&mut w.cluster, &mut env);
            collect_results(&mut w.cluster, 1, &mut env)
        };
        assert_eq!(rep.rejected_stale_epoch, 1, "stale-epoch ciphertext refused");
        assert_eq!(w.cluster.task_queue.len(), 1, "refused task requeued");
    }

    pass(7, "transition soundness, candidate oracle x1000, attack handling, epoch freshness");
}

#[test]
fn criterion_8_determinism_including_parallel() {
    let scenario = table2_scenario(TABLE2_SEED);
    let a = sim::run(&scenario).unwrap();
    let b = sim::run(&scenario).unwrap();
    assert_eq!(a.csv_files(), b.csv_files(), "sequential reruns differ");
    assert_eq!(a.chain_bytes, b.chain_bytes);
    assert_eq!(a.manifest_json(), b.manifest_json());

    // Parallel execution: the same scenario and the election sweep on
    // worker threads must reproduce the serial bytes.
    let serial_elections = uavnet_core::sim::presets::election_csv(&election_delay_sweep(13));
    let scenario2 = scenario.clone();
    let handles = vec![
        std::thread::spawn(move || {
            let r = sim::run(&scenario2).unwrap();
            (r.csv_files(), String::new())
        }),
        std::thread::spawn(move || {
            let csv = uavnet_core::sim::presets::election_csv(&election_delay_sweep(13));
            (Vec::new(), csv)
        }),
    ];
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(results[0].0, a.csv_files(), "parallel scenario run differs");
    assert_eq!(results[1].1, serial_elections, "parallel preset differs");
    pass(8, "byte-identical outputs across reruns and parallel execution");
}
