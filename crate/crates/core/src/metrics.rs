//! Absorption analysis of delivery chains and the KPIs built on it:
//! packet success probability, delivery latency, and receiver energy,
//! per reliability class and averaged across classes.

use serde::Serialize;

use crate::config::{EnergyConfig, NetworkConfig, RepetitionPlan};
use crate::error::{Error, Result};
use crate::spatial::{
    discretize_classes, feedback_success_prob, moment_m1, moment_m2, MetaDistribution,
};
use crate::temporal::{build_clra, build_olra, build_olra_es, AbsorbingChain, Scheme};

/// Mass left in transient states after the final slot beyond this is a bug.
const RESIDUAL_TOL: f64 = 1e-9;

/// Outcome statistics of one absorbing chain: where the probability mass
/// ends up and when. Delays are unnormalized first moments, in slots:
/// `success_delay` is the sum over slots of `slot * P(success at slot)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbsorptionResult {
    /// Probability the packet is fully delivered by the deadline.
    pub success: f64,
    /// Probability the packet is dropped.
    pub timeout: f64,
    /// First moment of the absorption slot restricted to success paths.
    pub success_delay: f64,
    /// First moment of the absorption slot restricted to drop paths.
    pub timeout_delay: f64,
}

impl AbsorptionResult {
    pub const ZERO: AbsorptionResult = AbsorptionResult {
        success: 0.0,
        timeout: 0.0,
        success_delay: 0.0,
        timeout_delay: 0.0,
    };

    /// Adds `weight` times another result; used to mix outcomes over
    /// equally likely repetition schedules.
    pub fn accumulate(&mut self, other: &AbsorptionResult, weight: f64) {
        self.success += weight * other.success;
        self.timeout += weight * other.timeout;
        self.success_delay += weight * other.success_delay;
        self.timeout_delay += weight * other.timeout_delay;
    }

    /// Mean absorption slot over both outcomes.
    pub fn mean_delay_slots(&self) -> f64 {
        self.success_delay + self.timeout_delay
    }

    /// Mean absorption slot of delivered packets, if any ever succeed.
    pub fn success_latency_slots(&self) -> Option<f64> {
        (self.success > 0.0).then(|| self.success_delay / self.success)
    }

    /// Mean absorption slot of dropped packets, if any are ever dropped.
    pub fn timeout_latency_slots(&self) -> Option<f64> {
        (self.timeout > 0.0).then(|| self.timeout_delay / self.timeout)
    }

    /// Sanity: probabilities in range and exhaustive, delays non-negative.
    pub fn check(&self) -> Result<()> {
        for (name, v) in [("success", self.success), ("timeout", self.timeout)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::chain(format!("{name} probability {v} out of range")));
            }
        }
        if (self.success + self.timeout - 1.0).abs() > RESIDUAL_TOL {
            return Err(Error::chain(format!(
                "outcome probabilities sum to {}, expected 1",
                self.success + self.timeout
            )));
        }
        if self.success_delay < 0.0 || self.timeout_delay < 0.0 {
            return Err(Error::chain("negative delay moment"));
        }
        Ok(())
    }
}

/// Runs the chain to absorption by propagating the occupancy vector through
/// the per-slot blocks, collecting absorbed mass and its first moment.
pub fn absorb(chain: &AbsorbingChain) -> Result<AbsorptionResult> {
    let levels = chain.levels();
    if levels.is_empty() || levels[0].labels.len() != 1 {
        return Err(Error::chain("chain must start from a single state"));
    }
    let mut occupancy = vec![1.0];
    let mut result = AbsorptionResult::ZERO;
    for (idx, level) in levels.iter().enumerate() {
        if occupancy.len() != level.labels.len() {
            return Err(Error::chain(format!(
                "slot {}: occupancy has {} entries for {} states",
                level.slot,
                occupancy.len(),
                level.labels.len()
            )));
        }
        let slot = f64::from(level.slot);
        for (row, h) in level.h.iter().enumerate() {
            let succeeded = occupancy[row] * h[0];
            let dropped = occupancy[row] * h[1];
            result.success += succeeded;
            result.timeout += dropped;
            result.success_delay += slot * succeeded;
            result.timeout_delay += slot * dropped;
        }
        if let Some(next) = levels.get(idx + 1) {
            let mut forwarded = vec![0.0; next.labels.len()];
            for (row, q_row) in level.q.iter().enumerate() {
                let mass = occupancy[row];
                if mass == 0.0 {
                    continue;
                }
                for (col, &prob) in q_row.iter().enumerate() {
                    forwarded[col] += mass * prob;
                }
            }
            occupancy = forwarded;
        }
    }
    let absorbed = result.success + result.timeout;
    if (absorbed - 1.0).abs() > RESIDUAL_TOL {
        return Err(Error::chain(format!(
            "probability mass leaked: absorbed {absorbed}, expected 1"
        )));
    }
    // the audit has bounded the residual; shave accumulated rounding so the
    // outcomes stay valid probabilities
    result.success = result.success.clamp(0.0, 1.0);
    result.timeout = result.timeout.clamp(0.0, 1.0);
    result.check()?;
    Ok(result)
}

/// Wall-clock duration of one chain slot: closed-loop slots append an
/// acknowledgment window to the data slot.
pub fn slot_seconds(scheme: Scheme, slot_duration: f64, ack_duration: f64) -> f64 {
    if scheme.uses_feedback() {
        slot_duration + ack_duration
    } else {
        slot_duration
    }
}

/// Latency statistics of one chain, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Latency {
    /// Mean time to absorption over all outcomes.
    pub unconditional_seconds: f64,
    /// Mean delivery time of packets that made the deadline.
    pub success_seconds: Option<f64>,
    /// Mean time until a dropped packet is abandoned.
    pub timeout_seconds: Option<f64>,
}

/// Converts absorption slots into seconds under the scheme's slot timing.
pub fn latency_seconds(
    result: &AbsorptionResult,
    scheme: Scheme,
    slot_duration: f64,
    ack_duration: f64,
) -> Latency {
    let unit = slot_seconds(scheme, slot_duration, ack_duration);
    Latency {
        unconditional_seconds: result.mean_delay_slots() * unit,
        success_seconds: result.success_latency_slots().map(|s| s * unit),
        timeout_seconds: result.timeout_latency_slots().map(|s| s * unit),
    }
}

/// Mean receiver-side energy until absorption, in joules. The receiver
/// listens for every slot the packet is in flight; under closed loop it
/// additionally returns one acknowledgment per slot.
pub fn receiver_energy(
    result: &AbsorptionResult,
    energy: &EnergyConfig,
    scheme: Scheme,
    slot_duration: f64,
    ack_duration: f64,
) -> f64 {
    let per_slot = if scheme.uses_feedback() {
        energy.listen_energy(slot_duration) + energy.ack_energy(ack_duration)
    } else {
        energy.listen_energy(slot_duration)
    };
    per_slot * result.mean_delay_slots()
}

/// KPIs of one reliability class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassKpi {
    /// Class index, 1-based, in increasing reliability order.
    pub class: usize,
    /// The class median per-slot fragment success probability.
    pub fragment_success: f64,
    /// Packet success probability by the deadline.
    pub psd: f64,
    /// Mean absorption slot over both outcomes.
    pub latency_slots: f64,
    /// Mean time to absorption in seconds.
    pub latency_seconds: f64,
    /// Mean delivery time of successful packets.
    pub success_latency_seconds: Option<f64>,
    /// Mean time until a packet is abandoned.
    pub timeout_latency_seconds: Option<f64>,
    /// Mean receiver energy per packet.
    pub energy_joules: f64,
}

/// Class-averaged KPIs. Classes are equiprobable, so unconditional KPIs are
/// plain means; conditional latencies are success-mass weighted so that the
/// average still equals (mean success delay) / (mean success probability).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KpiSummary {
    pub psd: f64,
    pub latency_slots: f64,
    pub latency_seconds: f64,
    pub success_latency_seconds: Option<f64>,
    pub timeout_latency_seconds: Option<f64>,
    pub energy_joules: f64,
}

impl KpiSummary {
    pub fn from_classes(classes: &[ClassKpi]) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::chain("no classes to summarize"));
        }
        let count = classes.len() as f64;
        let psd = classes.iter().map(|c| c.psd).sum::<f64>() / count;
        let latency_slots = classes.iter().map(|c| c.latency_slots).sum::<f64>() / count;
        let latency_seconds = classes.iter().map(|c| c.latency_seconds).sum::<f64>() / count;
        let energy_joules = classes.iter().map(|c| c.energy_joules).sum::<f64>() / count;

        let success_mass: f64 = classes.iter().map(|c| c.psd).sum();
        let success_latency_seconds = if success_mass > 0.0 {
            let weighted: f64 = classes
                .iter()
                .filter_map(|c| c.success_latency_seconds.map(|l| c.psd * l))
                .sum();
            Some(weighted / success_mass)
        } else {
            None
        };
        let timeout_mass: f64 = classes.iter().map(|c| 1.0 - c.psd).sum();
        let timeout_latency_seconds = if timeout_mass > 0.0 {
            let weighted: f64 = classes
                .iter()
                .filter_map(|c| c.timeout_latency_seconds.map(|l| (1.0 - c.psd) * l))
                .sum();
            Some(weighted / timeout_mass)
        } else {
            None
        };
        Ok(KpiSummary {
            psd,
            latency_slots,
            latency_seconds,
            success_latency_seconds,
            timeout_latency_seconds,
            energy_joules,
        })
    }
}

/// Full analytical evaluation of one scheme at one fragment count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiReport {
    pub scheme: Scheme,
    pub fragments: u32,
    pub deadline_slots: u32,
    /// Per-fragment SIR detection threshold.
    pub detection_threshold: f64,
    /// First moment of the conditional fragment success probability.
    pub moment_m1: f64,
    /// Second moment of the conditional fragment success probability.
    pub moment_m2: f64,
    /// Whether the class split degenerated to a single reliability level.
    pub degenerate_meta: bool,
    /// Per-slot acknowledgment success probability (closed loop only).
    pub ack_success: Option<f64>,
    pub classes: Vec<ClassKpi>,
    pub average: KpiSummary,
}

impl KpiReport {
    /// Internal-consistency audit, used as the CLI's output gate.
    pub fn check(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::chain("report has no classes"));
        }
        for c in &self.classes {
            if !(0.0..=1.0).contains(&c.psd) {
                return Err(Error::chain(format!(
                    "class {}: success probability {} out of range",
                    c.class, c.psd
                )));
            }
            if !(0.0..=1.0).contains(&c.fragment_success) {
                return Err(Error::chain(format!(
                    "class {}: fragment success {} out of range",
                    c.class, c.fragment_success
                )));
            }
            if c.latency_slots < 0.0 || c.energy_joules < 0.0 {
                return Err(Error::chain(format!("class {}: negative KPI", c.class)));
            }
        }
        let recomputed = KpiSummary::from_classes(&self.classes)?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        let opt_close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (None, None) => true,
            (Some(a), Some(b)) => close(a, b),
            _ => false,
        };
        if !close(recomputed.psd, self.average.psd)
            || !close(recomputed.latency_slots, self.average.latency_slots)
            || !close(recomputed.latency_seconds, self.average.latency_seconds)
            || !close(recomputed.energy_joules, self.average.energy_joules)
            || !opt_close(recomputed.success_latency_seconds, self.average.success_latency_seconds)
            || !opt_close(recomputed.timeout_latency_seconds, self.average.timeout_latency_seconds)
        {
            return Err(Error::chain("class average disagrees with per-class KPIs"));
        }
        Ok(())
    }
}

/// Absorption statistics for one class under the given scheme, mixing over
/// surplus-placement schedules for the open-loop deadline-filling variant
/// when requested.
pub fn class_absorption(
    scheme: Scheme,
    fragments: u32,
    deadline: u32,
    fragment_success: f64,
    ack_success: Option<f64>,
    plans: &[RepetitionPlan],
) -> Result<AbsorptionResult> {
    match scheme {
        Scheme::Clra => {
            let ack = ack_success
                .ok_or_else(|| Error::chain("closed loop requires an acknowledgment probability"))?;
            let delivery = fragment_success * ack;
            absorb(&build_clra(fragments, deadline, delivery)?)
        }
        Scheme::Olra => {
            if plans.is_empty() {
                return Err(Error::chain("open loop requires at least one schedule"));
            }
            let weight = 1.0 / plans.len() as f64;
            let mut mixed = AbsorptionResult::ZERO;
            for plan in plans {
                let result = absorb(&build_olra(fragments, deadline, fragment_success, plan)?);
                mixed.accumulate(&result?, weight);
            }
            mixed.check()?;
            Ok(mixed)
        }
        Scheme::OlraEs => absorb(&build_olra_es(fragments, deadline, fragment_success)?),
    }
}

/// Evaluates one scheme at one fragment count under the given scenario:
/// moments, beta fit, class split, and per-class chain absorption.
pub fn evaluate_scheme(
    config: &NetworkConfig,
    scheme: Scheme,
    fragments: u32,
) -> Result<KpiReport> {
    config.validate()?;
    let deadline = config.radio.deadline_slots;
    let threshold = config.radio.threshold_for(fragments)?;
    if fragments > deadline {
        return Err(Error::config(format!(
            "{fragments} fragments cannot fit in a {deadline}-slot deadline"
        )));
    }
    let m1 = moment_m1(&config.spatial, threshold)?;
    let m2 = moment_m2(&config.spatial, threshold)?;
    let meta = MetaDistribution::from_moments_or_point_mass(threshold, m1, m2)?;
    let classes = discretize_classes(&meta, config.analysis.class_count, config.analysis.beta_tolerance)?;

    let ack_success = if scheme.uses_feedback() {
        Some(feedback_success_prob(
            &config.spatial,
            &config.feedback,
            config.radio.bandwidth_hz,
        )?)
    } else {
        None
    };
    let plans = match scheme {
        Scheme::Olra => {
            if config.analysis.average_assignments {
                RepetitionPlan::all_assignments(fragments, deadline)?
            } else {
                vec![RepetitionPlan::standard(fragments, deadline)?]
            }
        }
        _ => Vec::new(),
    };

    let slot_duration = config.radio.slot_duration;
    let ack_duration = config.feedback.ack_duration;
    let mut class_kpis = Vec::with_capacity(classes.len());
    for (index, &fragment_success) in classes.medians().iter().enumerate() {
        let class = index + 1;
        let result = class_absorption(
            scheme,
            fragments,
            deadline,
            fragment_success,
            ack_success,
            &plans,
        )
        .map_err(|e| e.for_class(class))?;
        let latency = latency_seconds(&result, scheme, slot_duration, ack_duration);
        let energy = receiver_energy(&result, &config.energy, scheme, slot_duration, ack_duration);
        class_kpis.push(ClassKpi {
            class,
            fragment_success,
            psd: result.success,
            latency_slots: result.mean_delay_slots(),
            latency_seconds: latency.unconditional_seconds,
            success_latency_seconds: latency.success_seconds,
            timeout_latency_seconds: latency.timeout_seconds,
            energy_joules: energy,
        });
    }
    let average = KpiSummary::from_classes(&class_kpis)?;
    let report = KpiReport {
        scheme,
        fragments,
        deadline_slots: deadline,
        detection_threshold: threshold,
        moment_m1: m1,
        moment_m2: m2,
        degenerate_meta: classes.is_degenerate(),
        ack_success,
        classes: class_kpis,
        average,
    };
    report.check()?;
    Ok(report)
}

/// What to optimize the fragment count for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "goal")]
pub enum Objective {
    /// Maximize packet success probability.
    MaxPsd,
    /// Minimize the configured latency metric subject to a success floor.
    MinLatency { psd_floor: f64 },
    /// Minimize receiver energy subject to a success floor.
    MinEnergy { psd_floor: f64 },
}

/// Outcome of a fragment-count scan.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum Optimization {
    /// Best feasible fragment count and its full report.
    Optimal {
        fragments: u32,
        objective_value: f64,
        report: KpiReport,
    },
    /// No fragment count meets the success floor; reports the closest.
    Infeasible {
        psd_floor: f64,
        best_psd: f64,
        best_fragments: u32,
    },
}

/// Scans every fragment count from 1 to the deadline and picks the best
/// under the objective. Ties keep the smaller fragment count.
pub fn optimize_fragments(
    config: &NetworkConfig,
    scheme: Scheme,
    objective: Objective,
) -> Result<Optimization> {
    let floor = match objective {
        Objective::MaxPsd => 0.0,
        Objective::MinLatency { psd_floor } | Objective::MinEnergy { psd_floor } => {
            if !(0.0..=1.0).contains(&psd_floor) {
                return Err(Error::config(format!(
                    "success floor must lie in [0, 1], got {psd_floor}"
                )));
            }
            psd_floor
        }
    };
    let metric = config.analysis.latency_metric;
    let mut best: Option<(u32, f64, KpiReport)> = None;
    let mut best_psd: Option<(u32, f64)> = None;
    for fragments in 1..=config.radio.deadline_slots {
        let report = evaluate_scheme(config, scheme, fragments)?;
        let psd = report.average.psd;
        if best_psd.is_none_or(|(_, p)| psd > p) {
            best_psd = Some((fragments, psd));
        }
        if psd < floor {
            continue;
        }
        let value = match objective {
            Objective::MaxPsd => -psd, // smaller is better below
            Objective::MinLatency { .. } => match metric {
                crate::config::LatencyMetric::Unconditional => report.average.latency_seconds,
                crate::config::LatencyMetric::ConditionalOnSuccess => report
                    .average
                    .success_latency_seconds
                    .unwrap_or(f64::INFINITY),
            },
            Objective::MinEnergy { .. } => report.average.energy_joules,
        };
        if best.as_ref().is_none_or(|(_, v, _)| value < *v) {
            best = Some((fragments, value, report));
        }
    }
    match best {
        Some((fragments, value, report)) => {
            let objective_value = match objective {
                Objective::MaxPsd => -value,
                _ => value,
            };
            Ok(Optimization::Optimal { fragments, objective_value, report })
        }
        None => {
            let (best_fragments, best_psd) =
                best_psd.ok_or_else(|| Error::config("deadline admits no fragment count"))?;
            Ok(Optimization::Infeasible { psd_floor: floor, best_psd, best_fragments })
        }
    }
}
