//! Scenario description (JSON-compatible) and threat-model validation.

use crate::consensus::ConsensusParams;
use crate::crypto::CryptoSuite;
use crate::protocol::HelloConfig;
use crate::sim::energy::EnergyParams;
use crate::sim::link::LinkParams;
use crate::sim::mobility::MobilityParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid scenario: {0}")]
pub struct InvalidScenario(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Disconnect,
    Reconnect,
    ForeignAttack,
    Hijack,
}

/// Which UAV a fault targets: the cluster's current head at that moment, or
/// a concrete registration index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Head,
    Uav(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub period: u32,
    pub cluster: u32,
    pub target: Target,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub cluster_count: u32,
    /// UAVs per cluster including the head.
    pub uavs_per_cluster: u32,
    pub periods: u32,
    /// Fresh tasks injected per cluster per period.
    pub task_rate: u32,
    #[serde(default = "default_period_ms")]
    pub period_ms: u64,
    #[serde(default = "default_area_radius")]
    pub area_radius_m: f64,
    #[serde(default = "default_altitude")]
    pub altitude_range_m: (f64, f64),
    #[serde(default = "default_speed")]
    pub speed_range_mps: (f64, f64),
    #[serde(default)]
    pub fault_schedule: Vec<FaultEvent>,
    #[serde(default)]
    pub mobility: MobilityParams,
    #[serde(default)]
    pub hello: HelloConfig,
    #[serde(default)]
    pub energy: EnergyParams,
    #[serde(default)]
    pub link: LinkParams,
    #[serde(default)]
    pub consensus: ConsensusParams,
    #[serde(default = "default_suite")]
    pub crypto: CryptoSuite,
}

fn default_period_ms() -> u64 {
    10_000
}
fn default_area_radius() -> f64 {
    1_000.0
}
fn default_altitude() -> (f64, f64) {
    (200.0, 1_000.0)
}
fn default_speed() -> (f64, f64) {
    (0.0, 30.0)
}
fn default_suite() -> CryptoSuite {
    CryptoSuite::real()
}

impl Scenario {
    pub fn new(seed: u64, cluster_count: u32, uavs_per_cluster: u32, periods: u32, task_rate: u32) -> Self {
        Scenario {
            seed,
            cluster_count,
            uavs_per_cluster,
            periods,
            task_rate,
            period_ms: default_period_ms(),
            area_radius_m: default_area_radius(),
            altitude_range_m: default_altitude(),
            speed_range_mps: default_speed(),
            fault_schedule: Vec::new(),
            mobility: MobilityParams::default(),
            hello: HelloConfig::default(),
            energy: EnergyParams::default(),
            link: LinkParams::default(),
            consensus: ConsensusParams::default(),
            crypto: default_suite(),
        }
    }

    pub fn with_fault(mut self, period: u32, cluster: u32, target: Target, kind: FaultKind) -> Self {
        self.fault_schedule.push(FaultEvent {
            period,
            cluster,
            target,
            kind,
        });
        self
    }

    /// Stable hash of the full configuration, recorded in run manifests.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        let d = Sha256::digest(&json);
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Threat-model and shape validation.
    ///
    /// Rejected schedules: a head and a member of the same cluster
    /// disconnecting in the same period, more than floor(m/2) head
    /// disconnections in flight at once (replacements complete within their
    /// period), double disconnects, and reconnects of UAVs that never went
    /// down.
    pub fn validate(&self) -> Result<(), InvalidScenario> {
        let fail = |msg: String| Err(InvalidScenario(msg));
        if self.cluster_count == 0 {
            return fail("cluster_count must be at least 1".into());
        }
        if self.uavs_per_cluster < 2 {
            return fail("uavs_per_cluster must be at least 2 (head + member)".into());
        }
        if self.periods == 0 {
            return fail("periods must be at least 1".into());
        }
        if self.period_ms < 10 * self.hello.interval_ms {
            return fail("period_ms too short for the hello/detection cycle".into());
        }
        if self.hello.timeout_ms <= self.hello.interval_ms {
            return fail("hello timeout must exceed the hello interval".into());
        }
        let (alo, ahi) = self.altitude_range_m;
        if alo >= ahi || alo < 0.0 {
            return fail("altitude range must be 0 <= low < high".into());
        }
        let (slo, shi) = self.speed_range_mps;
        if slo > shi || slo < 0.0 {
            return fail("speed range must be 0 <= low <= high".into());
        }
        if self.area_radius_m <= 0.0 {
            return fail("area radius must be positive".into());
        }

        let head_disc_cap = (self.cluster_count / 2) as usize;
        // Per-(cluster, uav) down flags, and unclaimed head disconnections
        // (the runtime identity of "the head" is unknown statically; a later
        // reconnect may claim one).
        let mut member_down: BTreeMap<(u32, u32), bool> = BTreeMap::new();
        let mut unclaimed_head_disc: BTreeMap<u32, u32> = BTreeMap::new();
        let mut events = self.fault_schedule.clone();
        events.sort_by_key(|e| e.period);
        let mut by_period: BTreeMap<u32, Vec<FaultEvent>> = BTreeMap::new();
        for ev in &events {
            if ev.period == 0 || ev.period > self.periods {
                return fail(format!("fault period {} out of range", ev.period));
            }
            if ev.cluster >= self.cluster_count {
                return fail(format!("fault cluster {} out of range", ev.cluster));
            }
            if let Target::Uav(i) = ev.target {
                if i >= self.uavs_per_cluster {
                    return fail(format!("fault target uav {i} out of range"));
                }
            }
            by_period.entry(ev.period).or_default().push(*ev);
        }

        for (period, evs) in &by_period {
            // Simultaneity rule: a head and a member of one cluster must not
            // disconnect in the same period.
            let mut head_disc_clusters: Vec<u32> = Vec::new();
            let mut member_disc_clusters: Vec<u32> = Vec::new();
            for ev in evs {
                if ev.kind == FaultKind::Disconnect {
                    match ev.target {
                        Target::Head => head_disc_clusters.push(ev.cluster),
                        Target::Uav(_) => member_disc_clusters.push(ev.cluster),
                    }
                }
            }
            for c in &head_disc_clusters {
                if member_disc_clusters.contains(c) {
                    return fail(format!(
                        "threat-model violation: head and member of cluster {c} disconnect in period {period}"
                    ));
                }
            }
            if head_disc_clusters.len() > head_disc_cap {
                return fail(format!(
                    "threat-model violation: {} head disconnections in period {period} exceeds floor(m/2) = {head_disc_cap}",
                    head_disc_clusters.len()
                ));
            }

            for ev in evs {
                match (ev.kind, ev.target) {
                    (FaultKind::Disconnect, Target::Uav(i)) => {
                        let down = member_down.entry((ev.cluster, i)).or_default();
                        if *down {
                            return fail(format!(
                                "uav {i} of cluster {} disconnects twice without reconnecting",
                                ev.cluster
                            ));
                        }
                        *down = true;
                    }
                    (FaultKind::Disconnect, Target::Head) => {
                        *unclaimed_head_disc.entry(ev.cluster).or_default() += 1;
                    }
                    (FaultKind::Reconnect, Target::Uav(i)) => {
                        let down = member_down.entry((ev.cluster, i)).or_default();
                        if *down {
                            *down = false;
                        } else {
                            let unclaimed = unclaimed_head_disc.entry(ev.cluster).or_default();
                            if *unclaimed == 0 {
                                return fail(format!(
                                    "uav {i} of cluster {} reconnects but never disconnected",
                                    ev.cluster
                                ));
                            }
                            *unclaimed -= 1;
                        }
                    }
                    (FaultKind::Reconnect, Target::Head) => {
                        return fail("reconnect target must name a concrete uav index".into());
                    }
                    (FaultKind::ForeignAttack, _) | (FaultKind::Hijack, _) => {}
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Scenario {
        Scenario::new(1, 3, 11, 50, 3)
    }

    #[test]
    fn default_scenario_validates() {
        base().validate().unwrap();
    }

    #[test]
    fn head_and_member_same_period_rejected() {
        let s = base()
            .with_fault(14, 0, Target::Head, FaultKind::Disconnect)
            .with_fault(14, 0, Target::Uav(3), FaultKind::Disconnect);
        let err = s.validate().unwrap_err();
        assert!(err.0.contains("threat-model violation"), "{err}");
    }

    #[test]
    fn too_many_simultaneous_head_disconnects_rejected() {
        let s = base()
            .with_fault(5, 0, Target::Head, FaultKind::Disconnect)
            .with_fault(5, 1, Target::Head, FaultKind::Disconnect);
        let err = s.validate().unwrap_err();
        assert!(err.0.contains("floor(m/2)"), "{err}");
        // Sequential head failures in different periods stay legal.
        let s2 = base()
            .with_fault(5, 0, Target::Head, FaultKind::Disconnect)
            .with_fault(25, 1, Target::Head, FaultKind::Disconnect);
        s2.validate().unwrap();
    }

    #[test]
    fn double_disconnect_and_bogus_reconnect_rejected() {
        let s = base()
            .with_fault(5, 0, Target::Uav(4), FaultKind::Disconnect)
            .with_fault(9, 0, Target::Uav(4), FaultKind::Disconnect);
        assert!(s.validate().is_err());
        let s2 = base().with_fault(5, 0, Target::Uav(4), FaultKind::Reconnect);
        assert!(s2.validate().is_err());
        let ok = base()
            .with_fault(5, 0, Target::Uav(4), FaultKind::Disconnect)
            .with_fault(9, 0, Target::Uav(4), FaultKind::Reconnect);
        ok.validate().unwrap();
    }

    #[test]
    fn former_head_reconnect_claims_the_open_head_disconnect() {
        let s = base()
            .with_fault(14, 0, Target::Head, FaultKind::Disconnect)
            .with_fault(20, 0, Target::Uav(0), FaultKind::Reconnect);
        s.validate().unwrap();
    }

    #[test]
    fn json_round_trip_preserves_config_hash() {
        let s = base().with_fault(14, 0, Target::Head, FaultKind::Disconnect);
        let json = serde_json::to_string_pretty(&s).unwrap();
        let back: Scenario = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.config_hash(), s.config_hash());
    }

    #[test]
    fn sparse_json_gets_defaults() {
        let json = r#"{
            "seed": 5,
            "cluster_count": 3,
            "uavs_per_cluster": 4,
            "periods": 10,
            "task_rate": 2
        }"#;
        let s: Scenario = serde_json::from_str(json).unwrap();
        assert_eq!(s.period_ms, 10_000);
        assert_eq!(s.area_radius_m, 1_000.0);
        s.validate().unwrap();
    }
}
