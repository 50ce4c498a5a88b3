//! Hello-based liveness tracking with one active probe and a reply window.
//! A UAV is declared disconnected only when its hellos are stale *and* a
//! probe went unanswered for the whole window.

use crate::crypto::PublicKey;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloConfig {
    pub interval_ms: u64,
    pub timeout_ms: u64,
    pub probe_window_ms: u64,
}

impl Default for HelloConfig {
    fn default() -> Self {
        HelloConfig {
            interval_ms: 1_000,
            timeout_ms: 3_000,
            probe_window_ms: 1_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Probe {
    sent_at: u64,
    replied: bool,
}

#[derive(Debug, Clone, Default)]
pub struct HelloTracker {
    last_hello: BTreeMap<PublicKey, u64>,
    probes: BTreeMap<PublicKey, Probe>,
}

impl HelloTracker {
    pub fn new(peers: impl IntoIterator<Item = PublicKey>, now_ms: u64) -> Self {
        HelloTracker {
            last_hello: peers.into_iter().map(|p| (p, now_ms)).collect(),
            probes: BTreeMap::new(),
        }
    }

    pub fn record_hello(&mut self, peer: &PublicKey, now_ms: u64) {
        self.last_hello.insert(peer.clone(), now_ms);
        self.probes.remove(peer);
    }

    /// Peers whose hellos are stale and have no probe outstanding; the
    /// caller should probe these.
    pub fn due_for_probe(&self, now_ms: u64, cfg: &HelloConfig) -> Vec<PublicKey> {
        self.last_hello
            .iter()
            .filter(|(peer, &last)| {
                now_ms.saturating_sub(last) > cfg.timeout_ms && !self.probes.contains_key(peer)
            })
            .map(|(peer, _)| peer.clone())
            .collect()
    }

    pub fn record_probe_sent(&mut self, peer: &PublicKey, now_ms: u64) {
        self.probes.insert(
            peer.clone(),
            Probe {
                sent_at: now_ms,
                replied: false,
            },
        );
    }

    /// A probe reply also counts as a fresh hello.
    pub fn record_probe_reply(&mut self, peer: &PublicKey, now_ms: u64) {
        if let Some(p) = self.probes.get_mut(peer) {
            p.replied = true;
        }
        self.record_hello(peer, now_ms);
    }

    /// Disconnection verdicts: stale hello AND an expired, unanswered probe.
    pub fn detect(&self, now_ms: u64, cfg: &HelloConfig) -> Vec<PublicKey> {
        self.last_hello
            .iter()
            .filter(|(peer, &last)| {
                if now_ms.saturating_sub(last) <= cfg.timeout_ms {
                    return false;
                }
                match self.probes.get(*peer) {
                    Some(p) => !p.replied && now_ms >= p.sent_at + cfg.probe_window_ms,
                    None => false,
                }
            })
            .map(|(peer, _)| peer.clone())
            .collect()
    }

    /// Stop tracking a peer (after its disconnection is handled).
    pub fn forget(&mut self, peer: &PublicKey) {
        self.last_hello.remove(peer);
        self.probes.remove(peer);
    }

    pub fn track(&mut self, peer: &PublicKey, now_ms: u64) {
        self.last_hello.entry(peer.clone()).or_insert(now_ms);
    }
}
