//! Per-UAV energy accounting. Coefficients are configurable placeholders;
//! only monotone trends are meaningful, not absolute joules.
//!
//! Action mapping: transmissions cost `e_tx_per_byte * bytes * dist^gamma`,
//! receptions `e_rx_per_byte * bytes`, and public-key operations are charged
//! through `e_sign` (scalar multiplication: signing, ECDH wrap) and
//! `e_verify` (verification, unwrap). Hashing costs `e_hash_per_byte`.

use crate::crypto::PublicKey;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub e_tx_per_byte: f64,
    pub e_rx_per_byte: f64,
    pub e_sign: f64,
    pub e_verify: f64,
    pub e_hash_per_byte: f64,
    /// Distance exponent for transmissions.
    pub gamma: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            e_tx_per_byte: 50e-9,
            e_rx_per_byte: 50e-9,
            e_sign: 5e-3,
            e_verify: 10e-3,
            e_hash_per_byte: 5e-9,
            gamma: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UavEnergy {
    pub joules: f64,
    pub tx_events: u64,
    pub rx_events: u64,
    pub sign_events: u64,
    pub verify_events: u64,
    pub hash_events: u64,
}

#[derive(Debug, Clone)]
pub struct EnergyMeter {
    pub params: EnergyParams,
    counters: BTreeMap<PublicKey, UavEnergy>,
}

impl EnergyMeter {
    pub fn new(params: EnergyParams) -> Self {
        EnergyMeter {
            params,
            counters: BTreeMap::new(),
        }
    }

    fn entry(&mut self, uav: &PublicKey) -> &mut UavEnergy {
        self.counters.entry(uav.clone()).or_default()
    }

    pub fn charge_tx(&mut self, uav: &PublicKey, bytes: usize, dist_m: f64) {
        let j = self.params.e_tx_per_byte * bytes as f64 * dist_m.max(1.0).powf(self.params.gamma);
        let e = self.entry(uav);
        e.joules += j;
        e.tx_events += 1;
    }

    pub fn charge_rx(&mut self, uav: &PublicKey, bytes: usize) {
        let j = self.params.e_rx_per_byte * bytes as f64;
        let e = self.entry(uav);
        e.joules += j;
        e.rx_events += 1;
    }

    pub fn charge_sign(&mut self, uav: &PublicKey) {
        let j = self.params.e_sign;
        let e = self.entry(uav);
        e.joules += j;
        e.sign_events += 1;
    }

    pub fn charge_verify(&mut self, uav: &PublicKey) {
        let j = self.params.e_verify;
        let e = self.entry(uav);
        e.joules += j;
        e.verify_events += 1;
    }

    pub fn charge_hash(&mut self, uav: &PublicKey, bytes: usize) {
        let j = self.params.e_hash_per_byte * bytes as f64;
        let e = self.entry(uav);
        e.joules += j;
        e.hash_events += 1;
    }

    pub fn of(&self, uav: &PublicKey) -> UavEnergy {
        self.counters.get(uav).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PublicKey, &UavEnergy)> {
        self.counters.iter()
    }

    pub fn reset(&mut self) {
        self.counters.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pk(b: u8) -> PublicKey {
        PublicKey(vec![b; 33])
    }

    #[test]
    fn zero_byte_tx_costs_nothing() {
        let mut m = EnergyMeter::new(EnergyParams::default());
        m.charge_tx(&pk(1), 0, 500.0);
        assert_eq!(m.of(&pk(1)).joules, 0.0);
        assert_eq!(m.of(&pk(1)).tx_events, 1);
    }

    #[test]
    fn counters_are_monotone() {
        let mut m = EnergyMeter::new(EnergyParams::default());
        let mut last = 0.0;
        for i in 0..20 {
            match i % 5 {
                0 => m.charge_tx(&pk(1), 100, 300.0),
                1 => m.charge_rx(&pk(1), 100),
                2 => m.charge_sign(&pk(1)),
                3 => m.charge_verify(&pk(1)),
                _ => m.charge_hash(&pk(1), 64),
            }
            let now = m.of(&pk(1)).joules;
            assert!(now >= last);
            last = now;
        }
    }

    #[test]
    fn tx_scales_with_distance_power() {
        let mut m = EnergyMeter::new(EnergyParams::default());
        m.charge_tx(&pk(1), 10, 100.0);
        m.charge_tx(&pk(2), 10, 200.0);
        let a = m.of(&pk(1)).joules;
        let b = m.of(&pk(2)).joules;
        assert!((b / a - 4.0).abs() < 1e-9, "gamma=2 doubling distance quadruples cost");
    }
}
