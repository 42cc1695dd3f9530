//! Scenario description: network geometry, radio parameters, feedback and
//! energy models, and analysis controls.
//!
//! All fields are stored in base SI units (meters, seconds, hertz, watts,
//! bits). The file loader in [`file`] accepts human-friendly unit suffixes
//! and converts on ingestion.

mod file;

pub use file::{apply_override, from_toml_str, load};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One class of interfering transmitter: how common it is, how often it
/// transmits, and at what power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfererType {
    /// Fraction of the population belonging to this type; fractions sum to 1.
    pub fraction: f64,
    /// Probability the device transmits in any given slot.
    pub activity: f64,
    /// Transmit power in watts.
    pub power: f64,
}

/// Spatial layout of the network: interferer field plus the observed link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialConfig {
    /// Interferer density in devices per square meter.
    pub density: f64,
    /// Path-loss exponent; must exceed 2 for the interference field to have
    /// finite moments.
    pub path_loss_exp: f64,
    /// Distance from the observed transmitter to its receiver, in meters.
    pub link_distance: f64,
    /// Population mix of interferer types.
    pub types: Vec<InterfererType>,
    /// Transmit power of the observed link, in watts.
    pub signal_power: f64,
}

/// Radio layer: payload size, bandwidth, slot timing, and fragmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    /// Payload size in bits.
    pub packet_bits: f64,
    /// Channel bandwidth in hertz.
    pub bandwidth_hz: f64,
    /// Slot duration in seconds.
    pub slot_duration: f64,
    /// Delivery deadline in slots.
    pub deadline_slots: u32,
    /// Number of fragments the payload is split into.
    pub fragments: u32,
}

impl RadioConfig {
    /// SIR threshold for decoding one of `fragments` equal fragments within a
    /// slot: splitting the payload across more slots lowers the per-slot rate
    /// and with it the threshold.
    pub fn threshold_for(&self, fragments: u32) -> Result<f64> {
        if fragments == 0 {
            return Err(Error::config("fragment count must be at least 1"));
        }
        let rate = self.packet_bits / (fragments as f64 * self.bandwidth_hz * self.slot_duration);
        let threshold = rate.exp2() - 1.0;
        if !threshold.is_finite() {
            return Err(Error::numerical(format!(
                "detection threshold overflows for {} bits over {} fragments",
                self.packet_bits, fragments
            )));
        }
        Ok(threshold)
    }

    /// Threshold for the configured fragment count.
    pub fn detection_threshold(&self) -> Result<f64> {
        self.threshold_for(self.fragments)
    }
}

/// Acknowledgment channel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    /// Acknowledgment frame size in bits.
    pub ack_bits: f64,
    /// Acknowledgment slot duration in seconds.
    pub ack_duration: f64,
    /// When set, bypasses the interference model and fixes the per-slot
    /// acknowledgment success probability to this value.
    pub fixed_ack_success: Option<f64>,
}

impl FeedbackConfig {
    /// SIR threshold for decoding an acknowledgment at the given bandwidth.
    pub fn ack_threshold(&self, bandwidth_hz: f64) -> Result<f64> {
        let rate = self.ack_bits / (bandwidth_hz * self.ack_duration);
        let threshold = rate.exp2() - 1.0;
        if !threshold.is_finite() {
            return Err(Error::numerical(format!(
                "acknowledgment threshold overflows for {} bits",
                self.ack_bits
            )));
        }
        Ok(threshold)
    }
}

/// Receiver-side energy model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    /// Circuit power drawn while listening, in watts.
    pub rx_circuit_power: f64,
    /// Circuit power drawn while transmitting an acknowledgment, in watts.
    pub tx_circuit_power: f64,
    /// Radiated acknowledgment power, in watts.
    pub ack_tx_power: f64,
    /// Amplifier drain factor applied to radiated power.
    pub amplifier_factor: f64,
}

impl EnergyConfig {
    /// Energy spent listening for one data slot.
    pub fn listen_energy(&self, slot_duration: f64) -> f64 {
        self.rx_circuit_power * slot_duration
    }

    /// Energy spent transmitting one acknowledgment.
    pub fn ack_energy(&self, ack_duration: f64) -> f64 {
        (self.amplifier_factor * self.ack_tx_power + self.tx_circuit_power) * ack_duration
    }
}

/// Which latency statistic sweep outputs report as the headline number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatencyMetric {
    /// Mean time to absorption, counting both delivered and expired packets.
    Unconditional,
    /// Mean delivery time of packets that made the deadline.
    ConditionalOnSuccess,
}

/// Controls for the analytical discretization and the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Number of equiprobable reliability classes the fragment-success
    /// distribution is collapsed into.
    pub class_count: u32,
    /// Absolute tolerance for beta-quantile inversion.
    pub beta_tolerance: f64,
    /// Number of independent spatial realizations to simulate.
    pub realizations: u32,
    /// Packets simulated per spatial realization.
    pub packets_per_realization: u32,
    /// Master seed; all random streams derive from it deterministically.
    pub seed: u64,
    /// Radius of the simulated disk, in meters.
    pub window_radius: f64,
    /// Headline latency statistic.
    pub latency_metric: LatencyMetric,
    /// For open-loop schemes with a slot surplus: average KPIs over every
    /// placement of the surplus copies instead of front-loading them.
    pub average_assignments: bool,
}

/// Complete scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub spatial: SpatialConfig,
    pub radio: RadioConfig,
    pub feedback: FeedbackConfig,
    pub energy: EnergyConfig,
    pub analysis: AnalysisConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            spatial: SpatialConfig {
                density: 200e-6,
                path_loss_exp: 4.0,
                link_distance: 20.0,
                types: vec![
                    InterfererType { fraction: 1.0 / 3.0, activity: 0.1, power: 10e-3 },
                    InterfererType { fraction: 1.0 / 3.0, activity: 0.3, power: 7e-3 },
                    InterfererType { fraction: 1.0 / 3.0, activity: 0.5, power: 5e-3 },
                ],
                signal_power: 10e-3,
            },
            radio: RadioConfig {
                packet_bits: 2400.0,
                bandwidth_hz: 250e3,
                slot_duration: 1e-3,
                deadline_slots: 15,
                fragments: 1,
            },
            feedback: FeedbackConfig {
                ack_bits: 40.0,
                ack_duration: 0.15e-3,
                fixed_ack_success: None,
            },
            energy: EnergyConfig {
                rx_circuit_power: 45e-3,
                tx_circuit_power: 38e-3,
                ack_tx_power: 10e-3,
                amplifier_factor: 4.0,
            },
            analysis: AnalysisConfig {
                class_count: 20,
                beta_tolerance: 1e-10,
                realizations: 5000,
                packets_per_realization: 100,
                seed: 1,
                window_radius: 2000.0,
                latency_metric: LatencyMetric::Unconditional,
                average_assignments: false,
            },
        }
    }
}

impl NetworkConfig {
    /// Checks every cross-field constraint; call after constructing or
    /// mutating a configuration by hand.
    pub fn validate(&self) -> Result<()> {
        let s = &self.spatial;
        if !(s.density > 0.0) {
            return Err(Error::config("interferer density must be positive"));
        }
        if !(s.path_loss_exp > 2.0) {
            return Err(Error::config(
                "path-loss exponent must exceed 2 for finite interference moments",
            ));
        }
        if !(s.link_distance > 0.0) {
            return Err(Error::config("link distance must be positive"));
        }
        if !(s.signal_power > 0.0) {
            return Err(Error::config("signal power must be positive"));
        }
        if s.types.is_empty() {
            return Err(Error::config("at least one interferer type is required"));
        }
        let mut fraction_sum = 0.0;
        for (i, t) in s.types.iter().enumerate() {
            if !(0.0..=1.0).contains(&t.fraction) {
                return Err(Error::config(format!(
                    "type {i}: fraction {} outside [0, 1]",
                    t.fraction
                )));
            }
            if !(0.0..=1.0).contains(&t.activity) {
                return Err(Error::config(format!(
                    "type {i}: activity {} outside [0, 1]",
                    t.activity
                )));
            }
            if !(t.power > 0.0) {
                return Err(Error::config(format!(
                    "type {i}: power must be positive, got {}",
                    t.power
                )));
            }
            fraction_sum += t.fraction;
        }
        if (fraction_sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "type fractions must sum to 1, got {fraction_sum}"
            )));
        }

        let r = &self.radio;
        if !(r.packet_bits > 0.0) {
            return Err(Error::config("packet size must be positive"));
        }
        if !(r.bandwidth_hz > 0.0) {
            return Err(Error::config("bandwidth must be positive"));
        }
        if !(r.slot_duration > 0.0) {
            return Err(Error::config("slot duration must be positive"));
        }
        if r.deadline_slots == 0 {
            return Err(Error::config("deadline must be at least one slot"));
        }
        if r.fragments == 0 {
            return Err(Error::config("fragment count must be at least 1"));
        }
        if r.fragments > r.deadline_slots {
            return Err(Error::config(format!(
                "{} fragments cannot fit in a {}-slot deadline",
                r.fragments, r.deadline_slots
            )));
        }

        let f = &self.feedback;
        if !(f.ack_bits > 0.0) {
            return Err(Error::config("acknowledgment size must be positive"));
        }
        if !(f.ack_duration > 0.0) {
            return Err(Error::config("acknowledgment duration must be positive"));
        }
        if let Some(p) = f.fixed_ack_success {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!(
                    "fixed acknowledgment success probability {p} outside [0, 1]"
                )));
            }
        }

        let e = &self.energy;
        for (name, v) in [
            ("receive circuit power", e.rx_circuit_power),
            ("transmit circuit power", e.tx_circuit_power),
            ("acknowledgment power", e.ack_tx_power),
            ("amplifier factor", e.amplifier_factor),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(format!("{name} must be non-negative, got {v}")));
            }
        }

        let a = &self.analysis;
        if a.class_count == 0 {
            return Err(Error::config("class count must be at least 1"));
        }
        if !(a.beta_tolerance > 0.0) {
            return Err(Error::config("beta tolerance must be positive"));
        }
        if a.realizations == 0 {
            return Err(Error::config("realization count must be at least 1"));
        }
        if a.packets_per_realization == 0 {
            return Err(Error::config("packets per realization must be at least 1"));
        }
        if !(a.window_radius >= s.link_distance) {
            return Err(Error::config(format!(
                "window radius {} must cover the link distance {}",
                a.window_radius, s.link_distance
            )));
        }
        Ok(())
    }
}

/// How many copies of each fragment an open-loop transmitter sends.
///
/// Fragment `i` is repeated `copies[i]` times, in order; the schedule
/// occupies `total_slots()` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionPlan {
    copies: Vec<u32>,
}

impl RepetitionPlan {
    /// A custom schedule; every fragment needs at least one copy.
    pub fn new(copies: Vec<u32>) -> Result<Self> {
        if copies.is_empty() {
            return Err(Error::config("repetition plan must cover at least one fragment"));
        }
        if copies.contains(&0) {
            return Err(Error::config("every fragment needs at least one scheduled copy"));
        }
        Ok(RepetitionPlan { copies })
    }

    /// The deadline-filling schedule: with `deadline = q * fragments + r`,
    /// the first `r` fragments get `q + 1` copies and the rest get `q`.
    pub fn standard(fragments: u32, deadline: u32) -> Result<Self> {
        if fragments == 0 {
            return Err(Error::config("fragment count must be at least 1"));
        }
        if fragments > deadline {
            return Err(Error::config(format!(
                "{fragments} fragments cannot fit in a {deadline}-slot deadline"
            )));
        }
        let q = deadline / fragments;
        let r = deadline % fragments;
        let copies = (0..fragments).map(|i| if i < r { q + 1 } else { q }).collect();
        Ok(RepetitionPlan { copies })
    }

    /// The uniform schedule: every fragment gets `deadline / fragments`
    /// copies and any remainder slots stay idle.
    pub fn energy_saving(fragments: u32, deadline: u32) -> Result<Self> {
        if fragments == 0 {
            return Err(Error::config("fragment count must be at least 1"));
        }
        let q = deadline / fragments;
        if q == 0 {
            return Err(Error::config(format!(
                "{fragments} fragments cannot fit in a {deadline}-slot deadline"
            )));
        }
        Ok(RepetitionPlan { copies: vec![q; fragments as usize] })
    }

    /// Every way of placing the `deadline mod fragments` surplus copies on
    /// distinct fragments; used for placement-averaged KPIs.
    pub fn all_assignments(fragments: u32, deadline: u32) -> Result<Vec<Self>> {
        use itertools::Itertools;

        if fragments == 0 {
            return Err(Error::config("fragment count must be at least 1"));
        }
        if fragments > deadline {
            return Err(Error::config(format!(
                "{fragments} fragments cannot fit in a {deadline}-slot deadline"
            )));
        }
        let q = deadline / fragments;
        let r = deadline % fragments;
        if r == 0 {
            return Ok(vec![RepetitionPlan { copies: vec![q; fragments as usize] }]);
        }
        let plans = (0..fragments as usize)
            .combinations(r as usize)
            .map(|extra| {
                let mut copies = vec![q; fragments as usize];
                for i in extra {
                    copies[i] += 1;
                }
                RepetitionPlan { copies }
            })
            .collect();
        Ok(plans)
    }

    pub fn copies(&self) -> &[u32] {
        &self.copies
    }

    pub fn fragments(&self) -> u32 {
        self.copies.len() as u32
    }

    pub fn total_slots(&self) -> u32 {
        self.copies.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        NetworkConfig::default().validate().unwrap();
    }

    #[test]
    fn detection_threshold_drops_with_fragment_count() {
        let radio = NetworkConfig::default().radio;
        // 2400 bits over 250 kHz and 1 ms slots: full packet needs rate 9.6
        let t1 = radio.threshold_for(1).unwrap();
        assert!((t1 - (2f64.powf(9.6) - 1.0)).abs() < 1e-9);
        let mut prev = t1;
        for n in 2..=15 {
            let t = radio.threshold_for(n).unwrap();
            assert!(t < prev && t > 0.0);
            prev = t;
        }
    }

    #[test]
    fn threshold_overflow_is_reported() {
        let mut radio = NetworkConfig::default().radio;
        radio.packet_bits = 1e9;
        assert!(radio.threshold_for(1).is_err());
    }

    #[test]
    fn standard_plan_front_loads_surplus() {
        let plan = RepetitionPlan::standard(4, 15).unwrap();
        assert_eq!(plan.copies(), &[4, 4, 4, 3]);
        assert_eq!(plan.total_slots(), 15);

        let plan = RepetitionPlan::standard(3, 11).unwrap();
        assert_eq!(plan.copies(), &[4, 4, 3]);

        let plan = RepetitionPlan::standard(5, 15).unwrap();
        assert_eq!(plan.copies(), &[3, 3, 3, 3, 3]);
    }

    #[test]
    fn energy_saving_plan_leaves_surplus_idle() {
        let plan = RepetitionPlan::energy_saving(4, 15).unwrap();
        assert_eq!(plan.copies(), &[3, 3, 3, 3]);
        assert_eq!(plan.total_slots(), 12);

        // divides evenly: identical to the standard plan
        assert_eq!(
            RepetitionPlan::energy_saving(5, 15).unwrap(),
            RepetitionPlan::standard(5, 15).unwrap()
        );
    }

    #[test]
    fn assignment_enumeration_counts_combinations() {
        // 15 = 3*4 + 3: choose which 3 of 4 fragments get the extra copy
        let plans = RepetitionPlan::all_assignments(4, 15).unwrap();
        assert_eq!(plans.len(), 4);
        for plan in &plans {
            assert_eq!(plan.total_slots(), 15);
        }
        // no surplus: single plan
        assert_eq!(RepetitionPlan::all_assignments(5, 15).unwrap().len(), 1);
    }

    #[test]
    fn plan_rejects_empty_and_zero_copies() {
        assert!(RepetitionPlan::new(vec![]).is_err());
        assert!(RepetitionPlan::new(vec![2, 0, 1]).is_err());
        assert!(RepetitionPlan::standard(4, 3).is_err());
        assert!(RepetitionPlan::energy_saving(4, 3).is_err());
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut c = NetworkConfig::default();
        c.spatial.density = 0.0;
        assert!(c.validate().is_err());

        let mut c = NetworkConfig::default();
        c.spatial.path_loss_exp = 2.0;
        assert!(c.validate().is_err());

        let mut c = NetworkConfig::default();
        c.spatial.types[0].fraction = 0.5;
        assert!(c.validate().is_err());

        let mut c = NetworkConfig::default();
        c.radio.fragments = 16;
        assert!(c.validate().is_err());

        let mut c = NetworkConfig::default();
        c.feedback.fixed_ack_success = Some(1.5);
        assert!(c.validate().is_err());

        let mut c = NetworkConfig::default();
        c.analysis.window_radius = 5.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn ack_energy_combines_amplifier_and_circuit_power() {
        let e = NetworkConfig::default().energy;
        // (4 * 10 mW + 38 mW) * 0.15 ms = 11.7 uJ
        assert!((e.ack_energy(0.15e-3) - 11.7e-6).abs() < 1e-12);
        assert!((e.listen_energy(1e-3) - 45e-6).abs() < 1e-12);
    }
}
