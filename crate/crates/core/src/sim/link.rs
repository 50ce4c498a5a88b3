//! Intra-cluster radio link model: base latency plus propagation plus
//! seeded jitter, with a hard reachability radius.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub base_ms: f64,
    /// Signal propagation speed, meters per millisecond.
    pub prop_speed_m_per_ms: f64,
    pub jitter_ms: f64,
    pub radio_range_m: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            base_ms: 1.0,
            prop_speed_m_per_ms: 300_000.0,
            jitter_ms: 0.5,
            radio_range_m: 2_000.0,
        }
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn link_delay_ms(a: &[f64; 3], b: &[f64; 3], p: &LinkParams, rng: &mut ChaCha12Rng) -> f64 {
    let jitter = if p.jitter_ms > 0.0 {
        rng.gen_range(0.0..p.jitter_ms)
    } else {
        0.0
    };
    p.base_ms + dist(a, b) / p.prop_speed_m_per_ms + jitter
}

pub fn in_range(a: &[f64; 3], b: &[f64; 3], p: &LinkParams) -> bool {
    dist(a, b) <= p.radio_range_m
}
