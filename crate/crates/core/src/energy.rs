//! Battery dynamics, energy-credit generation and the consumption ledger.
//!
//! The energy source is virtual: each slot a device's battery level decides
//! how many packets the energy filter may pass (the credit allowance).
//! Below the threshold no credits are generated and the `Q → Z` transfer
//! stalls. Battery drain and the joule ledger are linear in the packets
//! processed and transmitted; workload complexity enters as a multiplicative
//! work factor applied by the engine before calling in here.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("battery {what} is {value}, must be within [0,1]")]
    BadLevel { what: &'static str, value: f64 },
    #[error("{what} is {value}, must be finite and non-negative")]
    BadCoefficient { what: &'static str, value: f64 },
}

/// Per-device battery and energy accounting parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryModel {
    /// Battery level at slot 0, in `[0,1]`.
    pub initial_level: f64,
    /// Credits stop below this level (level == threshold still generates).
    pub threshold: f64,
    /// Credit allowance per slot while at or above the threshold.
    pub credit_rate_above: f64,
    /// Battery fraction drained per unit of processing work.
    pub drain_per_processed: f64,
    /// Battery fraction drained per transmitted packet.
    pub drain_per_transmitted: f64,
    /// Ledger joules per unit of processing work.
    pub joules_per_processed: f64,
    /// Ledger joules per transmitted packet.
    pub joules_per_transmitted: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        Self {
            initial_level: 1.0,
            threshold: 0.4,
            credit_rate_above: 100.0,
            drain_per_processed: 0.0,
            drain_per_transmitted: 0.0,
            joules_per_processed: 1.0,
            joules_per_transmitted: 1.0,
        }
    }
}

impl BatteryModel {
    pub fn validate(&self) -> Result<(), EnergyError> {
        for (what, value) in [
            ("initial_level", self.initial_level),
            ("threshold", self.threshold),
        ] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(EnergyError::BadLevel { what, value });
            }
        }
        for (what, value) in [
            ("credit_rate_above", self.credit_rate_above),
            ("drain_per_processed", self.drain_per_processed),
            ("drain_per_transmitted", self.drain_per_transmitted),
            ("joules_per_processed", self.joules_per_processed),
            ("joules_per_transmitted", self.joules_per_transmitted),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(EnergyError::BadCoefficient { what, value });
            }
        }
        Ok(())
    }
}

/// Credit allowance for one slot: the full rate at or above the threshold,
/// nothing below it.
pub fn generate_credits(battery_level: f64, model: &BatteryModel) -> f64 {
    if battery_level >= model.threshold {
        model.credit_rate_above
    } else {
        0.0
    }
}

/// Drains the battery for one slot's work and returns `(new_level, joules)`.
/// The level clamps at zero; no recharging is modeled.
pub fn drain_battery(
    level: f64,
    processed: f64,
    transmitted: f64,
    model: &BatteryModel,
) -> (f64, f64) {
    let drained = processed * model.drain_per_processed + transmitted * model.drain_per_transmitted;
    let joules =
        processed * model.joules_per_processed + transmitted * model.joules_per_transmitted;
    ((level - drained).max(0.0), joules)
}

/// Cumulative per-device energy consumption with a flat per-slot trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    n: usize,
    cumulative: Vec<f64>,
    per_slot: Vec<f64>,
}

impl EnergyLedger {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            cumulative: vec![0.0; n],
            per_slot: Vec::new(),
        }
    }

    pub fn record(&mut self, slot_joules: &[f64]) {
        debug_assert_eq!(slot_joules.len(), self.n);
        for (acc, &j) in self.cumulative.iter_mut().zip(slot_joules) {
            debug_assert!(j >= 0.0);
            *acc += j;
        }
        self.per_slot.extend_from_slice(slot_joules);
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn slots(&self) -> usize {
        self.per_slot.len() / self.n.max(1)
    }

    pub fn slot(&self, t: usize) -> &[f64] {
        &self.per_slot[t * self.n..(t + 1) * self.n]
    }

    /// Cumulative joules of one device after each recorded slot.
    pub fn cumulative_series(&self, dev: usize) -> Vec<f64> {
        let mut acc = 0.0;
        (0..self.slots())
            .map(|t| {
                acc += self.slot(t)[dev];
                acc
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn credits_gate_on_threshold() {
        let model = BatteryModel {
            credit_rate_above: 100.0,
            ..BatteryModel::default()
        };
        assert_eq!(generate_credits(0.35, &model), 0.0);
        assert_eq!(generate_credits(0.8, &model), 100.0);
        // The boundary counts as above.
        assert_eq!(generate_credits(0.4, &model), 100.0);
    }

    #[test]
    fn drain_examples() {
        let model = BatteryModel {
            drain_per_processed: 1e-3,
            joules_per_processed: 2.0,
            joules_per_transmitted: 0.5,
            ..BatteryModel::default()
        };
        assert_eq!(drain_battery(1.0, 0.0, 0.0, &model), (1.0, 0.0));

        let (level, joules) = drain_battery(0.5, 100.0, 0.0, &model);
        assert!((level - 0.4).abs() < 1e-12);
        assert_eq!(joules, 200.0);

        // Overdraw clamps at zero.
        let (level, _) = drain_battery(0.1, 1e6, 0.0, &model);
        assert_eq!(level, 0.0);
    }

    #[test]
    fn drain_accounts_transmissions() {
        let model = BatteryModel {
            drain_per_transmitted: 1e-4,
            joules_per_processed: 1.0,
            joules_per_transmitted: 3.0,
            ..BatteryModel::default()
        };
        let (level, joules) = drain_battery(1.0, 2.0, 10.0, &model);
        assert!((level - (1.0 - 10.0 * 1e-4)).abs() < 1e-12);
        assert_eq!(joules, 2.0 + 30.0);
    }

    #[test]
    fn validate_rejects_bad_models() {
        let bad_threshold = BatteryModel {
            threshold: 1.4,
            ..BatteryModel::default()
        };
        assert!(bad_threshold.validate().is_err());
        let bad_drain = BatteryModel {
            drain_per_processed: -1.0,
            ..BatteryModel::default()
        };
        assert!(bad_drain.validate().is_err());
    }

    #[test]
    fn ledger_is_monotone() {
        let mut ledger = EnergyLedger::new(2);
        ledger.record(&[1.0, 0.0]);
        ledger.record(&[0.5, 2.0]);
        ledger.record(&[0.0, 0.0]);
        assert_eq!(ledger.cumulative(), &[1.5, 2.0]);
        assert_eq!(ledger.cumulative_series(0), vec![1.0, 1.5, 1.5]);
        let series = ledger.cumulative_series(1);
        assert!(series.windows(2).all(|w| w[0] <= w[1]));
    }
}
