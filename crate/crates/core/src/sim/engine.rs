//! The deterministic discrete-event engine: registration and genesis,
//! mobility and hello traffic, task periods, scheduled faults and attacks,
//! the detection machinery that triggers the identity procedures, and
//! report assembly. `run` is a pure function of the scenario (seed
//! included): repeated runs yield byte-identical reports.

use crate::consensus::RaftCluster;
use crate::crypto::{ClusterKey, CryptoSuite, KeyPair, PublicKey, SystemParams};
use crate::ledger::{wire, Ledger, Registration};
use crate::protocol::{
    assign_tasks, collect_results, flush_pending, head_disconnection_procedure,
    member_disconnection_procedure, reconnection_procedure, record_task_batch, run_key_update,
    Cluster, ClusterConfig, ClusterHeadList, Fingerprint, HelloTracker, ProcEnv, ProcedureError,
    ReconnectClaim, Task, UavStatus,
};
use crate::sim::energy::EnergyMeter;
use crate::sim::events::EventQueue;
use crate::sim::mobility::{CylinderBounds, MobilityState};
use crate::sim::report::{
    AssignmentRow, ChlRow, EnergyRow, EventRow, IntegrityRow, PeriodRow, RunReport, ThroughputRow,
    TransitionRow,
};
use crate::sim::scenario::{FaultKind, InvalidScenario, Scenario, Target};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Independent, labelled RNG stream derived from the scenario seed.
pub fn sub_rng(seed: u64, label: &str) -> ChaCha12Rng {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(label.as_bytes());
    ChaCha12Rng::from_seed(h.finalize().into())
}

#[derive(Debug, Clone)]
enum Event {
    MobilityTick,
    HelloTick { cluster: usize },
    Sweep { cluster: usize },
    LeaderSweep,
    PeriodStart { period: u32 },
    Collect { period: u32 },
    PeriodEnd { period: u32 },
    Fault { index: usize },
}

struct Engine {
    scenario: Scenario,
    suite: CryptoSuite,
    #[allow(dead_code)]
    params: SystemParams,
    bs: KeyPair,
    clusters: Vec<Cluster>,
    raft: RaftCluster,
    trackers: Vec<HelloTracker>,
    head_tracker: HelloTracker,
    chl: ClusterHeadList,
    mobility: BTreeMap<PublicKey, MobilityState>,
    positions: BTreeMap<PublicKey, [f64; 3]>,
    bounds: Vec<CylinderBounds>,
    meter: EnergyMeter,
    queue: EventQueue<Event>,
    now: u64,
    rng_mobility: ChaCha12Rng,
    rng_protocol: ChaCha12Rng,
    rng_attack: ChaCha12Rng,
    rng_tasks: ChaCha12Rng,
    labels: BTreeMap<PublicKey, (u32, u32)>,
    next_task_id: u64,
    accepted: Vec<Vec<crate::protocol::TaskResultRecord>>,
    throughput_current: Vec<ThroughputRow>,
    /// Pending head-replacement retries: (cluster, failed head).
    head_retry: Vec<Option<PublicKey>>,
    containment_ok: bool,
    report: ReportAcc,
}

#[derive(Default)]
struct ReportAcc {
    period_rows: Vec<PeriodRow>,
    integrity_rows: Vec<IntegrityRow>,
    throughput_rows: Vec<ThroughputRow>,
    chl_rows: Vec<ChlRow>,
    assignment_rows: Vec<AssignmentRow>,
    event_rows: Vec<EventRow>,
    violations: Vec<String>,
}

/// Execute a scenario end to end.
pub fn run(scenario: &Scenario) -> Result<RunReport, InvalidScenario> {
    scenario.validate()?;
    let mut engine = Engine::new(scenario.clone());
    engine.schedule_all();
    while let Some((at, ev)) = engine.queue.pop() {
        debug_assert!(at >= engine.now, "event time regressed");
        engine.now = at;
        engine.handle(ev);
    }
    Ok(engine.finish())
}

impl Engine {
    fn new(scenario: Scenario) -> Engine {
        let suite = scenario.crypto;
        let mut rng_keys = sub_rng(scenario.seed, "keys");
        let mut rng_fp = sub_rng(scenario.seed, "fingerprints");
        let mut rng_spawn = sub_rng(scenario.seed, "spawn");
        let mut rng_protocol = sub_rng(scenario.seed, "protocol");

        let bs = suite.generate_keypair(&mut rng_keys);
        let params = SystemParams::new(&suite, bs.public.clone());

        let m = scenario.cluster_count as usize;
        let per = scenario.uavs_per_cluster as usize;
        let mut regs = Vec::new();
        let mut clusters = Vec::with_capacity(m);
        let mut labels = BTreeMap::new();
        let mut mobility = BTreeMap::new();
        let mut positions = BTreeMap::new();
        let mut bounds = Vec::with_capacity(m);
        let mut head_kps = Vec::with_capacity(m);

        for c in 0..m {
            // Clusters operate in disjoint areas on a row.
            let center = [3.0 * scenario.area_radius_m * c as f64, 0.0];
            let b = CylinderBounds {
                center_xy: center,
                radius_m: scenario.area_radius_m,
                altitude_range_m: scenario.altitude_range_m,
                speed_max_mps: scenario.speed_range_mps.1,
            };
            let mid_alt = (scenario.altitude_range_m.0 + scenario.altitude_range_m.1) / 2.0;
            let mut members = Vec::with_capacity(per);
            let mut head_pk = None;
            for i in 0..per {
                let kp = suite.generate_keypair(&mut rng_keys);
                let mut fp = [0u8; 32];
                rng_fp.fill_bytes(&mut fp);
                let fp = Fingerprint(fp);
                regs.push(Registration {
                    cluster: c as u32,
                    public: kp.public.clone(),
                    fingerprint: fp,
                    is_head: i == 0,
                });
                labels.insert(kp.public.clone(), (c as u32, i as u32));
                if i == 0 {
                    // The head hovers at the cluster center.
                    positions.insert(kp.public.clone(), [center[0], center[1], mid_alt]);
                    head_pk = Some(kp.public.clone());
                    head_kps.push(kp.clone());
                } else {
                    let (pos, mob) = spawn_member(&b, &scenario, &mut rng_spawn);
                    positions.insert(kp.public.clone(), pos);
                    mobility.insert(kp.public.clone(), mob);
                }
                members.push((kp, fp, i as u32));
            }
            let mut key_bytes = [0u8; 16];
            rng_protocol.fill_bytes(&mut key_bytes);
            let initial_key = ClusterKey { key_bytes, epoch: 0 };
            clusters.push(Cluster::new(
                ClusterConfig {
                    index: c as u32,
                    task_rate: scenario.task_rate,
                },
                head_pk.expect("index 0 is the head"),
                members,
                initial_key,
            ));
            bounds.push(b);
        }

        let genesis = Ledger::genesis(suite, &bs, &regs, 0).expect("genesis construction");
        let raft = RaftCluster::new(
            scenario.consensus,
            &genesis,
            head_kps,
            sub_rng(scenario.seed, "consensus"),
        );

        let trackers: Vec<HelloTracker> = clusters
            .iter()
            .map(|cl| HelloTracker::new(cl.connected_members(), 0))
            .collect();
        let head_tracker = HelloTracker::new(clusters.iter().map(|cl| cl.head.clone()), 0);

        let mut report = ReportAcc::default();
        let mut chl = ClusterHeadList::default();
        for cl in &clusters {
            chl.set_head(cl.index(), cl.head.clone());
            report.chl_rows.push(ChlRow {
                time_ms: 0,
                cluster: cl.index(),
                head_uav: labels[&cl.head].1,
            });
        }

        let meter = EnergyMeter::new(scenario.energy);
        let accepted = vec![Vec::new(); m];
        let throughput_current = (0..m)
            .map(|c| ThroughputRow {
                period: 1,
                cluster: c as u32,
                generated: 0,
                accepted: 0,
                rejected: 0,
                requeued: 0,
            })
            .collect();

        Engine {
            rng_mobility: sub_rng(scenario.seed, "mobility"),
            rng_attack: sub_rng(scenario.seed, "attack"),
            rng_tasks: sub_rng(scenario.seed, "tasks"),
            rng_protocol,
            suite,
            params,
            bs,
            clusters,
            raft,
            trackers,
            head_tracker,
            chl,
            mobility,
            positions,
            bounds,
            meter,
            queue: EventQueue::default(),
            now: 0,
            labels,
            next_task_id: 0,
            accepted,
            throughput_current,
            head_retry: vec![None; m],
            containment_ok: true,
            report,
            scenario,
        }
    }

    fn schedule_all(&mut self) {
        let s = &self.scenario;
        let end = s.periods as u64 * s.period_ms;
        self.queue.push(s.mobility.step_ms, Event::MobilityTick);
        for c in 0..self.clusters.len() {
            self.queue.push(s.hello.interval_ms, Event::HelloTick { cluster: c });
        }
        for c in 0..self.clusters.len() {
            self.queue.push(s.hello.interval_ms, Event::Sweep { cluster: c });
        }
        self.queue.push(s.hello.interval_ms, Event::LeaderSweep);
        for period in 1..=s.periods {
            let t0 = (period - 1) as u64 * s.period_ms;
            self.queue.push(t0 + s.period_ms / 10, Event::PeriodStart { period });
            self.queue.push(t0 + s.period_ms * 8 / 10, Event::Collect { period });
            self.queue.push(t0 + s.period_ms * 95 / 100, Event::PeriodEnd { period });
        }
        for (index, f) in s.fault_schedule.iter().enumerate() {
            let t0 = (f.period - 1) as u64 * s.period_ms;
            self.queue.push(t0 + s.period_ms / 20, Event::Fault { index });
        }
        let _ = end;
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::MobilityTick => self.on_mobility(),
            Event::HelloTick { cluster } => self.on_hello(cluster),
            Event::Sweep { cluster } => self.on_sweep(cluster),
            Event::LeaderSweep => self.on_leader_sweep(),
            Event::PeriodStart { period } => self.on_period_start(period),
            Event::Collect { period } => self.on_collect(period),
            Event::PeriodEnd { period } => self.on_period_end(period),
            Event::Fault { index } => self.on_fault(index),
        }
    }

    fn end_time(&self) -> u64 {
        self.scenario.periods as u64 * self.scenario.period_ms
    }

    fn on_mobility(&mut self) {
        let dt = self.scenario.mobility.step_ms as f64 / 1000.0;
        for (c, cluster) in self.clusters.iter().enumerate() {
            for (pk, uav) in &cluster.uavs {
                if *pk == cluster.head || !uav.alive {
                    continue;
                }
                if let Some(mob) = self.mobility.get_mut(pk) {
                    mob.step(dt, &self.scenario.mobility, &self.bounds[c], &mut self.rng_mobility);
                    if !self.bounds[c].contains(&mob.position) {
                        self.containment_ok = false;
                    }
                    self.positions.insert(pk.clone(), mob.position);
                }
            }
        }
        let next = self.now + self.scenario.mobility.step_ms;
        if next <= self.end_time() {
            self.queue.push(next, Event::MobilityTick);
        }
    }

    fn on_hello(&mut self, c: usize) {
        let cluster = &self.clusters[c];
        let head_alive = cluster.uavs[&cluster.head].alive;
        if head_alive {
            let members: Vec<PublicKey> = cluster
                .connected_members()
                .into_iter()
                .filter(|pk| cluster.uavs[pk].alive)
                .collect();
            for mpk in members {
                self.trackers[c].record_hello(&mpk, self.now);
            }
        }
        let next = self.now + self.scenario.hello.interval_ms;
        if next <= self.end_time() {
            self.queue.push(next, Event::HelloTick { cluster: c });
        }
    }

    fn on_sweep(&mut self, c: usize) {
        let head_alive = {
            let cluster = &self.clusters[c];
            cluster.uavs[&cluster.head].alive
        };
        if head_alive {
            let cfg = self.scenario.hello;
            let due = self.trackers[c].due_for_probe(self.now, &cfg);
            for peer in due {
                self.trackers[c].record_probe_sent(&peer, self.now);
                let head = self.clusters[c].head.clone();
                let dist = distance(&self.positions, &head, &peer);
                self.meter.charge_tx(&head, 16, dist);
                if self.clusters[c].uavs.get(&peer).map(|u| u.alive).unwrap_or(false) {
                    self.meter.charge_rx(&peer, 16);
                    self.meter.charge_tx(&peer, 16, dist);
                    self.meter.charge_rx(&head, 16);
                    self.trackers[c].record_probe_reply(&peer, self.now);
                }
            }
            let verdicts = self.trackers[c].detect(self.now, &cfg);
            for uav in verdicts {
                self.trackers[c].forget(&uav);
                if self.clusters[c].lml.status(&uav) == Some(UavStatus::Disconnected) {
                    continue;
                }
                self.run_member_disconnection(c, &uav);
            }
        }
        let next = self.now + self.scenario.hello.interval_ms;
        if next <= self.end_time() {
            self.queue.push(next, Event::Sweep { cluster: c });
        }
    }

    fn run_member_disconnection(&mut self, c: usize, uav: &PublicKey) {
        let mut env = ProcEnv {
            now_ms: self.now,
            rng: &mut self.rng_protocol,
            meter: &mut self.meter,
            positions: &self.positions,
            suite: self.suite,
        };
        let outcome =
            member_disconnection_procedure(&mut self.clusters[c], uav, &mut self.raft, &mut env);
        let label = self.labels[uav].1;
        match outcome {
            Ok(rep) => {
                let detail = match &rep.backup_target {
                    Some(t) => format!(
                        "uav {label} disconnected; {} records copied to uav {}",
                        rep.moved_records, self.labels[t].1
                    ),
                    None => format!("uav {label} disconnected; no records to copy"),
                };
                self.push_event(c as u32, "member_disconnect", detail);
            }
            Err(ProcedureError::NoQuorum) => {
                self.push_event(
                    c as u32,
                    "member_disconnect",
                    format!("uav {label} disconnected; ledger writes deferred"),
                );
            }
            Err(e) => {
                self.report
                    .violations
                    .push(format!("cluster {c}: member disconnection failed: {e}"));
            }
        }
    }

    fn on_leader_sweep(&mut self) {
        // Live heads check in with the ledger leader.
        let heads: Vec<(usize, PublicKey, bool)> = self
            .clusters
            .iter()
            .enumerate()
            .map(|(c, cl)| (c, cl.head.clone(), cl.uavs[&cl.head].alive))
            .collect();
        for (_, pk, alive) in &heads {
            if *alive {
                self.head_tracker.record_hello(pk, self.now);
            }
        }
        let cfg = self.scenario.hello;
        for peer in self.head_tracker.due_for_probe(self.now, &cfg) {
            self.head_tracker.record_probe_sent(&peer, self.now);
            if let Some((_, _, true)) = heads.iter().find(|(_, pk, _)| *pk == peer) {
                self.head_tracker.record_probe_reply(&peer, self.now);
            }
        }
        for dead in self.head_tracker.detect(self.now, &cfg) {
            self.head_tracker.forget(&dead);
            if let Some((c, _, _)) = heads.iter().find(|(_, pk, _)| *pk == dead) {
                self.run_head_replacement(*c, &dead);
            }
        }
        // Deferred replacements retry once a period via PeriodStart; nothing
        // to do here.
        let next = self.now + cfg.interval_ms;
        if next <= self.end_time() {
            self.queue.push(next, Event::LeaderSweep);
        }
    }

    fn run_head_replacement(&mut self, c: usize, old_head: &PublicKey) {
        let mut env = ProcEnv {
            now_ms: self.now,
            rng: &mut self.rng_protocol,
            meter: &mut self.meter,
            positions: &self.positions,
            suite: self.suite,
        };
        match head_disconnection_procedure(&mut self.clusters[c], old_head, &mut self.raft, &mut env)
        {
            Ok(rep) => {
                self.head_retry[c] = None;
                let new_head = rep.new_head.clone();
                // The new head moves to the cluster center and stops roaming.
                let center = self.bounds[c].center_xy;
                let mid_alt =
                    (self.scenario.altitude_range_m.0 + self.scenario.altitude_range_m.1) / 2.0;
                self.positions
                    .insert(new_head.clone(), [center[0], center[1], mid_alt]);
                self.mobility.remove(&new_head);
                self.trackers[c].forget(&new_head);
                self.head_tracker.track(&new_head, self.now);
                self.chl.set_head(c as u32, new_head.clone());
                self.report.chl_rows.push(ChlRow {
                    time_ms: self.now,
                    cluster: c as u32,
                    head_uav: self.labels[&new_head].1,
                });
                let detail = format!(
                    "uav {} replaces uav {} as head; {} former results copied to {}",
                    self.labels[&new_head].1,
                    self.labels[old_head].1,
                    rep.moved_records,
                    rep.copy_target
                        .as_ref()
                        .map(|t| format!("uav {}", self.labels[t].1))
                        .unwrap_or_else(|| "head custody".to_string()),
                );
                self.push_event(c as u32, "head_change", detail);
            }
            Err(ProcedureError::NoQuorum) => {
                self.head_retry[c] = Some(old_head.clone());
                self.push_event(
                    c as u32,
                    "head_change",
                    "deferred: no ledger quorum".to_string(),
                );
            }
            Err(ProcedureError::DuplicateEvent) => {}
            Err(e) => {
                self.report
                    .violations
                    .push(format!("cluster {c}: head replacement failed: {e}"));
                self.head_retry[c] = None;
            }
        }
    }

    fn on_period_start(&mut self, period: u32) {
        // Retry deferred work from previous periods first.
        for c in 0..self.clusters.len() {
            if let Some(old) = self.head_retry[c].clone() {
                self.run_head_replacement(c, &old);
            }
        }
        for c in 0..self.clusters.len() {
            let head_alive = self.clusters[c].uavs[&self.clusters[c].head].alive;
            if !head_alive {
                continue;
            }
            if self.clusters[c].needs_key_update_retry {
                let mut env = ProcEnv {
                    now_ms: self.now,
                    rng: &mut self.rng_protocol,
                    meter: &mut self.meter,
                    positions: &self.positions,
                    suite: self.suite,
                };
                match run_key_update(&mut self.clusters[c], &mut self.raft, &mut env) {
                    Ok(rep) => {
                        self.push_event(
                            c as u32,
                            "key_update",
                            format!("retried; epoch {}", rep.epoch),
                        );
                    }
                    Err(ProcedureError::NoQuorum) => {}
                    Err(e) => self
                        .report
                        .violations
                        .push(format!("cluster {c}: key update retry failed: {e}")),
                }
            } else if !self.clusters[c].pending_intents.is_empty() {
                match flush_pending(&mut self.clusters[c], &mut self.raft, self.now) {
                    Ok(_) | Err(ProcedureError::NoQuorum) => {}
                    Err(e) => self
                        .report
                        .violations
                        .push(format!("cluster {c}: pending flush failed: {e}")),
                }
            }
        }

        // Fresh tasks for the period, then assignment.
        for c in 0..self.clusters.len() {
            for _ in 0..self.scenario.task_rate {
                let task = Task {
                    id: self.next_task_id,
                    cluster: c as u32,
                    period,
                    seed: self.rng_tasks.gen(),
                };
                self.next_task_id += 1;
                self.clusters[c].task_queue.push_back(task);
            }
            self.throughput_current[c] = ThroughputRow {
                period,
                cluster: c as u32,
                generated: self.scenario.task_rate,
                accepted: 0,
                rejected: 0,
                requeued: 0,
            };
            self.assign_if_headed(c);
        }
    }

    fn assign_if_headed(&mut self, c: usize) {
        let head_alive = self.clusters[c].uavs[&self.clusters[c].head].alive;
        if !head_alive {
            return;
        }
        let mut env = ProcEnv {
            now_ms: self.now,
            rng: &mut self.rng_protocol,
            meter: &mut self.meter,
            positions: &self.positions,
            suite: self.suite,
        };
        let per_member = assign_tasks(&mut self.clusters[c], &mut env);
        for (pk, count) in per_member {
            let (cl, idx) = self.labels[&pk];
            self.report.assignment_rows.push(AssignmentRow {
                time_ms: self.now,
                cluster: cl,
                uav: idx,
                count,
            });
        }
    }

    fn on_collect(&mut self, period: u32) {
        for c in 0..self.clusters.len() {
            let head_alive = self.clusters[c].uavs[&self.clusters[c].head].alive;
            if !head_alive {
                continue;
            }
            // A head installed mid-period picks up the queue first.
            self.assign_if_headed(c);
            let mut env = ProcEnv {
                now_ms: self.now,
                rng: &mut self.rng_protocol,
                meter: &mut self.meter,
                positions: &self.positions,
                suite: self.suite,
            };
            let rep = collect_results(&mut self.clusters[c], period, &mut env);
            self.throughput_current[c].accepted += rep.accepted.len() as u32;
            self.throughput_current[c].rejected +=
                rep.rejected_stale_epoch + rep.rejected_bad_decrypt + rep.rejected_verification;
            self.throughput_current[c].requeued += rep.requeued;
            self.accepted[c].extend(rep.accepted.iter().cloned());
            let mut env = ProcEnv {
                now_ms: self.now,
                rng: &mut self.rng_protocol,
                meter: &mut self.meter,
                positions: &self.positions,
                suite: self.suite,
            };
            match record_task_batch(&mut self.clusters[c], &mut self.raft, period, &rep.accepted, &mut env)
            {
                Ok(_) => {}
                Err(e) => self
                    .report
                    .violations
                    .push(format!("cluster {c}: task record failed: {e}")),
            }
        }
    }

    fn on_period_end(&mut self, period: u32) {
        for c in 0..self.clusters.len() {
            let cluster = &self.clusters[c];
            let mut accepted = self.accepted[c].clone();
            accepted.sort();
            let members = cluster.connected_store_multiset();
            let backup = cluster.backup_multiset();
            let ok = accepted == members && members == backup;
            self.report.integrity_rows.push(IntegrityRow {
                period,
                cluster: c as u32,
                accepted_total: accepted.len(),
                member_total: members.len(),
                backup_total: backup.len(),
                ok,
            });
            for (pk, status) in cluster.lml.entries() {
                let (cl, idx) = self.labels[pk];
                let is_head = *pk == cluster.head;
                let uav = &cluster.uavs[pk];
                self.report.period_rows.push(PeriodRow {
                    period,
                    cluster: cl,
                    uav: idx,
                    status: status.to_string(),
                    primary_count: uav.primary.len(),
                    backup_count: if is_head { cluster.backup_len() } else { 0 },
                    head_flag: is_head,
                });
            }
            self.report.throughput_rows.push(self.throughput_current[c].clone());
        }
    }

    fn on_fault(&mut self, index: usize) {
        let fault = self.scenario.fault_schedule[index];
        let c = fault.cluster as usize;
        match fault.kind {
            FaultKind::Disconnect => {
                let target = self.resolve_target(c, fault.target);
                let Some(pk) = target else { return };
                let is_head = pk == self.clusters[c].head;
                if let Some(u) = self.clusters[c].uavs.get_mut(&pk) {
                    u.alive = false;
                    // Whatever it stored is lost with it; the cluster relies
                    // on the double backup from here on.
                    u.primary.clear();
                }
                if is_head {
                    self.raft.kill(&pk);
                    self.push_event(
                        c as u32,
                        "fault",
                        format!("head uav {} lost", self.labels[&pk].1),
                    );
                } else {
                    self.push_event(
                        c as u32,
                        "fault",
                        format!("member uav {} lost", self.labels[&pk].1),
                    );
                }
            }
            FaultKind::Reconnect => {
                let Target::Uav(i) = fault.target else { return };
                let pk = self.pk_of(c, i);
                self.do_reconnect(c, &pk);
            }
            FaultKind::ForeignAttack => self.do_foreign_attack(c),
            FaultKind::Hijack => {
                let target = self.resolve_target(c, fault.target);
                let Some(pk) = target else { return };
                if let Some(u) = self.clusters[c].uavs.get_mut(&pk) {
                    u.hijacked = true;
                }
                self.push_event(
                    c as u32,
                    "hijack",
                    format!("uav {} compromised", self.labels[&pk].1),
                );
            }
        }
    }

    fn resolve_target(&self, c: usize, target: Target) -> Option<PublicKey> {
        match target {
            Target::Head => Some(self.clusters[c].head.clone()),
            Target::Uav(i) => {
                let pk = self.pk_of(c, i);
                if pk == self.clusters[c].head {
                    // A member fault aimed at the current head is out of
                    // model; skip rather than crash.
                    None
                } else {
                    Some(pk)
                }
            }
        }
    }

    fn pk_of(&self, c: usize, index: u32) -> PublicKey {
        self.labels
            .iter()
            .find(|(_, (cl, i))| *cl == c as u32 && *i == index)
            .map(|(pk, _)| pk.clone())
            .expect("validated index")
    }

    fn do_reconnect(&mut self, c: usize, pk: &PublicKey) {
        let head_alive = self.clusters[c].uavs[&self.clusters[c].head].alive;
        if !head_alive {
            self.push_event(
                c as u32,
                "reconnect_reject",
                format!("uav {}: no live head", self.labels[pk].1),
            );
            return;
        }
        // The UAV powers back up somewhere in the operating area.
        {
            let (pos, mob) = spawn_member(&self.bounds[c], &self.scenario, &mut self.rng_mobility);
            self.positions.insert(pk.clone(), pos);
            self.mobility.insert(pk.clone(), mob);
            let u = self.clusters[c].uavs.get_mut(pk).unwrap();
            u.alive = true;
            u.key = None;
        }
        let keypair = self.clusters[c].uavs[pk].keypair.clone();
        let fingerprint = self.clusters[c].uavs[pk].fingerprint;
        let mut challenge = [0u8; 32];
        self.rng_protocol.fill_bytes(&mut challenge);
        let claim = ReconnectClaim::signed(&self.suite, &keypair, fingerprint, challenge);
        let mut env = ProcEnv {
            now_ms: self.now,
            rng: &mut self.rng_protocol,
            meter: &mut self.meter,
            positions: &self.positions,
            suite: self.suite,
        };
        match reconnection_procedure(&mut self.clusters[c], &claim, &mut self.raft, &mut env) {
            Ok(out) => {
                self.trackers[c].track(pk, self.now);
                self.push_event(
                    c as u32,
                    "reconnect_accept",
                    format!(
                        "uav {} reconnected{}",
                        self.labels[pk].1,
                        if out.key_update_deferred { "; rekey deferred" } else { "" }
                    ),
            );
            }
            Err(reject) => {
                self.push_event(
                    c as u32,
                    "reconnect_reject",
                    format!("uav {}: {reject:?}", self.labels[pk].1),
                );
            }
        }
    }

    fn do_foreign_attack(&mut self, c: usize) {
        let head_alive = self.clusters[c].uavs[&self.clusters[c].head].alive;
        if !head_alive {
            return;
        }
        let intruder = self.suite.generate_keypair(&mut self.rng_attack);
        let mut fp = [0u8; 32];
        self.rng_attack.fill_bytes(&mut fp);
        let mut challenge = [0u8; 32];
        self.rng_attack.fill_bytes(&mut challenge);
        let claim = ReconnectClaim::signed(&self.suite, &intruder, Fingerprint(fp), challenge);
        let version_before = self.clusters[c].lml.version;
        let mut env = ProcEnv {
            now_ms: self.now,
            rng: &mut self.rng_protocol,
            meter: &mut self.meter,
            positions: &self.positions,
            suite: self.suite,
        };
        let outcome = reconnection_procedure(&mut self.clusters[c], &claim, &mut self.raft, &mut env);
        let version_after = self.clusters[c].lml.version;
        let detail = match outcome {
            Ok(_) => "ACCEPTED (should never happen)".to_string(),
            Err(reject) => format!(
                "rejected:{reject:?};lml_version:{version_before}->{version_after}"
            ),
        };
        self.push_event(c as u32, "foreign_attack", detail);
    }

    fn push_event(&mut self, cluster: u32, kind: &str, detail: String) {
        self.report.event_rows.push(EventRow {
            time_ms: self.now,
            cluster,
            kind: kind.to_string(),
            detail,
        });
    }

    fn finish(mut self) -> RunReport {
        let mut consistency_ok = self.raft.check_prefix_consistency().is_ok();
        // The cluster head list must mirror the committed head-update
        // records exactly.
        for (cluster, head) in &self.chl.entries {
            if self.raft.leader_ledger().state.head_of(*cluster) != Some(head) {
                self.report
                    .violations
                    .push(format!("cluster {cluster}: head list diverged from the ledger"));
                consistency_ok = false;
            }
        }

        let mut transition_rows: Vec<TransitionRow> = Vec::new();
        for cluster in &self.clusters {
            for (t, pk, from, to) in &cluster.transition_log {
                let (cl, idx) = self.labels[pk];
                transition_rows.push(TransitionRow {
                    time_ms: *t,
                    cluster: cl,
                    uav: idx,
                    from: from.to_string(),
                    to: to.to_string(),
                });
            }
            self.report
                .violations
                .extend(cluster.violations.iter().cloned());
        }
        transition_rows.sort_by_key(|r| (r.time_ms, r.cluster, r.uav));

        let mut energy_rows: Vec<EnergyRow> = self
            .labels
            .iter()
            .map(|(pk, (cl, idx))| {
                let e = self.meter.of(pk);
                EnergyRow {
                    cluster: *cl,
                    uav: *idx,
                    joules: e.joules,
                    tx_events: e.tx_events,
                    rx_events: e.rx_events,
                    sign_events: e.sign_events,
                    verify_events: e.verify_events,
                    hash_events: e.hash_events,
                }
            })
            .collect();
        energy_rows.sort_by_key(|r| (r.cluster, r.uav));

        let ledger = self.raft.leader_ledger();
        let chain_bytes = wire::encode_chain_file(
            &wire::ChainFileHeader {
                crypto_mode: self.suite.mode,
                pk_len: self.suite.pk_len as u16,
                bs_public_key: self.bs.public.clone(),
            },
            ledger.blocks(),
        );

        RunReport {
            seed: self.scenario.seed,
            config_hash: self.scenario.config_hash(),
            period_rows: self.report.period_rows,
            integrity_rows: self.report.integrity_rows,
            throughput_rows: self.report.throughput_rows,
            transition_rows,
            chl_rows: self.report.chl_rows,
            election_rows: self.raft.election_log.clone(),
            energy_rows,
            assignment_rows: self.report.assignment_rows,
            event_rows: self.report.event_rows,
            violations: self.report.violations,
            consistency_ok,
            containment_ok: self.containment_ok,
            chain_bytes,
        }
    }
}

fn spawn_member(
    bounds: &CylinderBounds,
    scenario: &Scenario,
    rng: &mut ChaCha12Rng,
) -> ([f64; 3], MobilityState) {
    let r = bounds.radius_m * rng.gen_range(0.0f64..1.0).sqrt();
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    let (z0, z1) = bounds.altitude_range_m;
    let pos = [
        bounds.center_xy[0] + r * theta.cos(),
        bounds.center_xy[1] + r * theta.sin(),
        rng.gen_range(z0..z1),
    ];
    let speed = rng.gen_range(scenario.speed_range_mps.0..=scenario.speed_range_mps.1);
    let dir = rng.gen_range(0.0..std::f64::consts::TAU);
    let pitch = rng.gen_range(-0.3..0.3f64);
    let velocity = [
        speed * dir.cos() * pitch.cos(),
        speed * dir.sin() * pitch.cos(),
        speed * pitch.sin(),
    ];
    let mean_speed = (scenario.speed_range_mps.0 + scenario.speed_range_mps.1) / 2.0;
    let mean_dir = rng.gen_range(0.0..std::f64::consts::TAU);
    let mean_velocity = [mean_speed * mean_dir.cos(), mean_speed * mean_dir.sin(), 0.0];
    (
        pos,
        MobilityState {
            position: pos,
            velocity,
            mean_velocity,
        },
    )
}

fn distance(positions: &BTreeMap<PublicKey, [f64; 3]>, a: &PublicKey, b: &PublicKey) -> f64 {
    match (positions.get(a), positions.get(b)) {
        (Some(pa), Some(pb)) => pa
            .iter()
            .zip(pb.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        _ => 1.0,
    }
}
