//! Preset execution and CSV emission. Sweeps fan out across worker threads
//! (each sweep point is independently seeded); a single collector writes
//! files in a fixed order so outputs stay byte-stable.

use std::path::Path;
use std::process::ExitCode;
use uavnet_core::sim::presets::{
    self, auth_csv, auth_timing_csv, election_csv, energy_csv, EnergySweepRow,
    ELECTION_CLUSTER_COUNTS, ENERGY_CLUSTER_SIZES, ENERGY_KEYLEN_CLUSTER_SIZE, ENERGY_KEY_LENGTHS,
    PRESET_NAMES,
};
use uavnet_core::sim::{self, RunReport};

pub fn cmd_preset(name: &str, seed: u64, out: &Path) -> ExitCode {
    let result = match name {
        "robustness_table2" => robustness_table2(seed, out),
        "delay_election_fig6a" => delay_election(seed, out),
        "delay_auth_fig6b" => delay_auth(seed, out),
        "energy_cluster_fig7a" => energy_sweep(seed, out, SweepKind::ClusterSize),
        "energy_keylen_fig7b" => energy_sweep(seed, out, SweepKind::KeyLength),
        other => {
            eprintln!(
                "error: unknown preset {other:?}; known presets: {}",
                PRESET_NAMES.join(", ")
            );
            return ExitCode::from(2);
        }
    };
    match result {
        Ok(files) => {
            println!("ok: preset {name} wrote {files} files to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: preset {name}: {e}");
            ExitCode::from(1)
        }
    }
}

fn write_manifest(out: &Path, preset: &str, seed: u64, files: &[&str]) -> std::io::Result<()> {
    let manifest = serde_json::json!({
        "preset": preset,
        "seed": seed,
        "files": files,
    });
    std::fs::write(
        out.join("preset_manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
}

/// Per-period result-count matrix for the observed cluster: the head cell
/// shows its backup-store size, member cells their primary stores.
fn table2_matrix(report: &RunReport, cluster: u32, periods: u32, uavs: u32) -> String {
    let mut s = String::from("uav");
    for p in 1..=periods {
        s.push_str(&format!(",p{p}"));
    }
    s.push('\n');
    for uav in 0..uavs {
        s.push_str(&format!("{uav}"));
        for p in 1..=periods {
            let row = report
                .period_rows
                .iter()
                .find(|r| r.cluster == cluster && r.period == p && r.uav == uav)
                .expect("full state dump");
            let cell = if row.head_flag { row.backup_count } else { row.primary_count };
            s.push_str(&format!(",{cell}"));
        }
        s.push('\n');
    }
    s
}

fn robustness_table2(seed: u64, out: &Path) -> Result<usize, String> {
    let scenario = presets::table2_scenario(seed);
    let report = sim::run(&scenario).map_err(|e| e.to_string())?;
    let files = report.write_to_dir(out).map_err(|e| e.to_string())?;
    let matrix = table2_matrix(&report, 0, scenario.periods, scenario.uavs_per_cluster);
    std::fs::write(out.join("table2.csv"), matrix).map_err(|e| e.to_string())?;
    write_manifest(
        out,
        "robustness_table2",
        seed,
        &["table2.csv", "periods.csv", "integrity.csv", "throughput.csv", "chain.bin"],
    )
    .map_err(|e| e.to_string())?;
    log::info!(
        "table2: integrity {} over {} periods",
        report.integrity_all_ok(),
        scenario.periods
    );
    Ok(files.len() + 2)
}

fn delay_election(seed: u64, out: &Path) -> Result<usize, String> {
    let mut per_count = Vec::with_capacity(ELECTION_CLUSTER_COUNTS.len());
    std::thread::scope(|scope| {
        let handles: Vec<_> = ELECTION_CLUSTER_COUNTS
            .iter()
            .map(|&count| scope.spawn(move || presets::election_delay_for_count(seed, count)))
            .collect();
        for h in handles {
            per_count.push(h.join().expect("worker"));
        }
    });
    let all: Vec<_> = per_count.into_iter().flatten().collect();
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    std::fs::write(out.join("elections.csv"), election_csv(&all)).map_err(|e| e.to_string())?;
    write_manifest(out, "delay_election_fig6a", seed, &["elections.csv"])
        .map_err(|e| e.to_string())?;
    Ok(2)
}

fn delay_auth(seed: u64, out: &Path) -> Result<usize, String> {
    let (samples, timings) = presets::auth_delay_sweep(seed);
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    std::fs::write(out.join("auth_delay.csv"), auth_csv(&samples)).map_err(|e| e.to_string())?;
    // Wall-clock sidecar: informational, not reproducible byte-for-byte.
    std::fs::write(out.join("auth_delay_timing.csv"), auth_timing_csv(&timings))
        .map_err(|e| e.to_string())?;
    write_manifest(
        out,
        "delay_auth_fig6b",
        seed,
        &["auth_delay.csv", "auth_delay_timing.csv"],
    )
    .map_err(|e| e.to_string())?;
    Ok(3)
}

#[derive(Clone, Copy, PartialEq)]
enum SweepKind {
    ClusterSize,
    KeyLength,
}

fn energy_sweep(seed: u64, out: &Path, kind: SweepKind) -> Result<usize, String> {
    let points: Vec<(usize, usize)> = match kind {
        SweepKind::ClusterSize => ENERGY_CLUSTER_SIZES.iter().map(|&s| (s, 33)).collect(),
        SweepKind::KeyLength => ENERGY_KEY_LENGTHS
            .iter()
            .map(|&l| (ENERGY_KEYLEN_CLUSTER_SIZE, l))
            .collect(),
    };
    let mut rows: Vec<EnergySweepRow> = Vec::with_capacity(points.len());
    std::thread::scope(|scope| {
        let handles: Vec<_> = points
            .iter()
            .map(|&(size, len)| {
                scope.spawn(move || presets::measure_member_disconnection(size, len, seed))
            })
            .collect();
        for h in handles {
            rows.push(h.join().expect("worker"));
        }
    });
    for (row, &(size, len)) in rows.iter_mut().zip(points.iter()) {
        match kind {
            SweepKind::ClusterSize => {
                row.sweep = "cluster_size";
                row.value = size;
            }
            SweepKind::KeyLength => {
                row.sweep = "pk_len";
                row.value = len;
            }
        }
    }
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    std::fs::write(out.join("energy_sweep.csv"), energy_csv(&rows)).map_err(|e| e.to_string())?;
    let preset = match kind {
        SweepKind::ClusterSize => "energy_cluster_fig7a",
        SweepKind::KeyLength => "energy_keylen_fig7b",
    };
    write_manifest(out, preset, seed, &["energy_sweep.csv"]).map_err(|e| e.to_string())?;
    Ok(2)
}
