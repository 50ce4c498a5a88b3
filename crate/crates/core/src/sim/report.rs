//! Run outputs: per-period state dumps, integrity/throughput series,
//! election samples, energy totals, event log, and the exported chain.
//! CSV rendering is pure and ordering is fixed, so identical runs produce
//! byte-identical files.

use crate::consensus::ElectionSample;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodRow {
    pub period: u32,
    pub cluster: u32,
    pub uav: u32,
    pub status: String,
    pub primary_count: usize,
    pub backup_count: usize,
    pub head_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrityRow {
    pub period: u32,
    pub cluster: u32,
    pub accepted_total: usize,
    pub member_total: usize,
    pub backup_total: usize,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputRow {
    pub period: u32,
    pub cluster: u32,
    pub generated: u32,
    pub accepted: u32,
    pub rejected: u32,
    pub requeued: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRow {
    pub time_ms: u64,
    pub cluster: u32,
    pub uav: u32,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChlRow {
    pub time_ms: u64,
    pub cluster: u32,
    pub head_uav: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRow {
    pub cluster: u32,
    pub uav: u32,
    pub joules: f64,
    pub tx_events: u64,
    pub rx_events: u64,
    pub sign_events: u64,
    pub verify_events: u64,
    pub hash_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignmentRow {
    pub time_ms: u64,
    pub cluster: u32,
    pub uav: u32,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRow {
    pub time_ms: u64,
    pub cluster: u32,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub config_hash: String,
    pub period_rows: Vec<PeriodRow>,
    pub integrity_rows: Vec<IntegrityRow>,
    pub throughput_rows: Vec<ThroughputRow>,
    pub transition_rows: Vec<TransitionRow>,
    pub chl_rows: Vec<ChlRow>,
    pub election_rows: Vec<ElectionSample>,
    pub energy_rows: Vec<EnergyRow>,
    pub assignment_rows: Vec<AssignmentRow>,
    pub event_rows: Vec<EventRow>,
    pub violations: Vec<String>,
    pub consistency_ok: bool,
    pub containment_ok: bool,
    #[serde(skip)]
    pub chain_bytes: Vec<u8>,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.6}")
}

impl RunReport {
    pub fn integrity_all_ok(&self) -> bool {
        self.integrity_rows.iter().all(|r| r.ok)
    }

    /// All CSV artifacts as (file name, content) pairs, in a fixed order.
    pub fn csv_files(&self) -> Vec<(String, String)> {
        let mut files = Vec::new();

        let mut s = String::from("period,cluster,uav,status,primary_count,backup_count,head_flag\n");
        for r in &self.period_rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.period, r.cluster, r.uav, r.status, r.primary_count, r.backup_count,
                u8::from(r.head_flag)
            ));
        }
        files.push(("periods.csv".to_string(), s));

        let mut s = String::from("period,cluster,accepted_total,member_total,backup_total,ok\n");
        for r in &self.integrity_rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.period, r.cluster, r.accepted_total, r.member_total, r.backup_total,
                u8::from(r.ok)
            ));
        }
        files.push(("integrity.csv".to_string(), s));

        let mut s = String::from("period,cluster,generated,accepted,rejected,requeued\n");
        for r in &self.throughput_rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.period, r.cluster, r.generated, r.accepted, r.rejected, r.requeued
            ));
        }
        files.push(("throughput.csv".to_string(), s));

        let mut s = String::from("time_ms,cluster,uav,from,to\n");
        for r in &self.transition_rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.time_ms, r.cluster, r.uav, r.from, r.to
            ));
        }
        files.push(("transitions.csv".to_string(), s));

        let mut s = String::from("time_ms,cluster,head_uav\n");
        for r in &self.chl_rows {
            s.push_str(&format!("{},{},{}\n", r.time_ms, r.cluster, r.head_uav));
        }
        files.push(("chl.csv".to_string(), s));

        let mut s = String::from("protocol,cluster_count,sample_idx,delay_ms\n");
        for r in &self.election_rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.protocol.as_str(),
                r.cluster_count,
                r.sample_idx,
                fmt_f64(r.delay_ms)
            ));
        }
        files.push(("elections.csv".to_string(), s));

        let mut s = String::from(
            "cluster,uav,joules,tx_events,rx_events,sign_events,verify_events,hash_events\n",
        );
        for r in &self.energy_rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.cluster,
                r.uav,
                fmt_f64(r.joules),
                r.tx_events,
                r.rx_events,
                r.sign_events,
                r.verify_events,
                r.hash_events
            ));
        }
        files.push(("energy.csv".to_string(), s));

        let mut s = String::from("time_ms,cluster,uav,count\n");
        for r in &self.assignment_rows {
            s.push_str(&format!("{},{},{},{}\n", r.time_ms, r.cluster, r.uav, r.count));
        }
        files.push(("assignments.csv".to_string(), s));

        let mut s = String::from("time_ms,cluster,kind,detail\n");
        for r in &self.event_rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.time_ms,
                r.cluster,
                r.kind,
                r.detail.replace(',', ";")
            ));
        }
        files.push(("events.csv".to_string(), s));

        files
    }

    /// Run manifest: seed, config hash, flags, and produced files.
    pub fn manifest_json(&self) -> String {
        #[derive(Serialize)]
        struct Manifest<'a> {
            seed: u64,
            config_hash: &'a str,
            consistency_ok: bool,
            containment_ok: bool,
            integrity_ok: bool,
            violations: &'a [String],
            files: Vec<&'a str>,
        }
        let names: Vec<&str> = vec![
            "periods.csv",
            "integrity.csv",
            "throughput.csv",
            "transitions.csv",
            "chl.csv",
            "elections.csv",
            "energy.csv",
            "assignments.csv",
            "events.csv",
            "chain.bin",
        ];
        let m = Manifest {
            seed: self.seed,
            config_hash: &self.config_hash,
            consistency_ok: self.consistency_ok,
            containment_ok: self.containment_ok,
            integrity_ok: self.integrity_all_ok(),
            violations: &self.violations,
            files: names,
        };
        serde_json::to_string_pretty(&m).expect("manifest serializes")
    }

    /// Write all artifacts (CSVs, chain.bin, manifest.json) into `dir`.
    pub fn write_to_dir(&self, dir: &std::path::Path) -> std::io::Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, content) in self.csv_files() {
            let path = dir.join(&name);
            std::fs::write(&path, content)?;
            written.push(path);
        }
        let chain = dir.join("chain.bin");
        std::fs::write(&chain, &self.chain_bytes)?;
        written.push(chain);
        let manifest = dir.join("manifest.json");
        std::fs::write(&manifest, self.manifest_json())?;
        written.push(manifest);
        Ok(written)
    }
}
