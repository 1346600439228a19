//! Per-unit conversions on a single system base.

use serde::{Deserialize, Serialize};

/// System base for per-unit quantities (three-phase, line-to-line voltage).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBase {
    pub power_kva: f64,
    pub voltage_kv: f64,
}

impl Default for PerUnitBase {
    fn default() -> Self {
        Self {
            power_kva: 1000.0,
            voltage_kv: 13.8,
        }
    }
}

impl PerUnitBase {
    pub fn new(power_kva: f64, voltage_kv: f64) -> Self {
        Self { power_kva, voltage_kv }
    }

    /// Base power in MW (also the $/MWh <-> $/pu-h conversion factor).
    pub fn power_mva(&self) -> f64 {
        self.power_kva / 1000.0
    }

    pub fn kva_to_pu(&self, kva: f64) -> f64 {
        kva / self.power_kva
    }

    pub fn pu_to_kva(&self, pu: f64) -> f64 {
        pu * self.power_kva
    }

    /// Base impedance in ohms.
    pub fn impedance_ohm(&self) -> f64 {
        self.voltage_kv * self.voltage_kv * 1000.0 / self.power_kva
    }

    pub fn ohm_to_pu(&self, ohm: f64) -> f64 {
        ohm / self.impedance_ohm()
    }

    pub fn pu_to_ohm(&self, pu: f64) -> f64 {
        pu * self.impedance_ohm()
    }

    /// Base current in amperes.
    pub fn current_a(&self) -> f64 {
        self.power_kva / (3f64.sqrt() * self.voltage_kv)
    }

    /// Squared per-unit current for a current magnitude in amperes.
    pub fn amps_to_sq_pu(&self, amps: f64) -> f64 {
        let i = amps / self.current_a();
        i * i
    }

    pub fn sq_pu_to_amps(&self, sq_pu: f64) -> f64 {
        sq_pu.sqrt() * self.current_a()
    }

    /// Converts a dual of a per-unit power row ($ per pu-h) into $/MWh.
    pub fn price_per_mwh(&self, per_pu: f64) -> f64 {
        per_pu / self.power_mva()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn base_quantities() {
        let b = PerUnitBase::default();
        assert!((b.impedance_ohm() - 190.44).abs() < 1e-9);
        assert!((b.current_a() - 41.837).abs() < 1e-3);
        assert_eq!(b.kva_to_pu(30.0), 0.03);
    }

    proptest! {
        #[test]
        fn kva_roundtrip(kva in 1e-6f64..1e6, base in 1.0f64..1e5) {
            let b = PerUnitBase::new(base, 13.8);
            let back = b.pu_to_kva(b.kva_to_pu(kva));
            prop_assert!(((back - kva) / kva).abs() <= 1e-12);
        }

        #[test]
        fn ohm_and_amp_roundtrip(ohm in 1e-4f64..1e3, amps in 1e-3f64..1e4, kv in 0.4f64..69.0) {
            let b = PerUnitBase::new(1000.0, kv);
            prop_assert!(((b.pu_to_ohm(b.ohm_to_pu(ohm)) - ohm) / ohm).abs() <= 1e-12);
            prop_assert!(((b.sq_pu_to_amps(b.amps_to_sq_pu(amps)) - amps) / amps).abs() <= 1e-12);
        }
    }
}
