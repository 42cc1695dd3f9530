//! Monte Carlo validation: samples interferer fields, measures the
//! empirical distribution of fragment success probabilities, and replays
//! the delivery protocols packet by packet.
//!
//! Randomness is counter-based: every sampling task derives its own stream
//! cipher seed from the master seed and a small integer path (for example
//! `[1, realization]` or `[2, realization, packet]`). Streams are therefore
//! independent of thread scheduling, and results are bit-identical across
//! thread counts and runs.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Exp1, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{NetworkConfig, RepetitionPlan, SpatialConfig};
use crate::error::{Error, Result};
use crate::metrics::{
    evaluate_scheme, latency_seconds, receiver_energy, AbsorptionResult, KpiReport,
};
use crate::spatial::{
    conditional_success_prob, feedback_success_prob, Interferer, MetaDistribution, Realization,
};
use crate::temporal::Scheme;

/// Stream namespace for spatial sampling: path `[1, realization]`.
const STREAM_SPATIAL: u64 = 1;
/// Stream namespace for protocol replay: path `[2, realization, packet]`.
const STREAM_PROTOCOL: u64 = 2;

/// 64-bit mix with full avalanche; the building block for seed derivation.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Dedicated random stream for one task, identified by the master seed and
/// an integer path. Equal inputs give equal streams; any difference in the
/// path decorrelates them.
pub fn stream_rng(master_seed: u64, path: &[u64]) -> ChaCha12Rng {
    let mut acc = splitmix(master_seed);
    for &id in path {
        acc = splitmix(acc ^ splitmix(id));
    }
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix(acc.wrapping_add(i as u64 + 1)).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}

/// Size and seeding of a Monte Carlo campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationRun {
    pub master_seed: u64,
    pub realizations: u32,
    pub packets_per_realization: u32,
    pub window_radius: f64,
}

impl SimulationRun {
    pub fn from_config(config: &NetworkConfig) -> Self {
        SimulationRun {
            master_seed: config.analysis.seed,
            realizations: config.analysis.realizations,
            packets_per_realization: config.analysis.packets_per_realization,
            window_radius: config.analysis.window_radius,
        }
    }
}

/// Samples one interferer field: a Poisson number of devices placed
/// uniformly on the disk, each independently marked with a type.
pub fn sample_realization(
    spatial: &SpatialConfig,
    window_radius: f64,
    rng: &mut impl Rng,
) -> Result<Realization> {
    let mean = spatial.density * PI * window_radius * window_radius;
    let count = if mean > 0.0 {
        let poisson = Poisson::new(mean)
            .map_err(|e| Error::config(format!("invalid interferer count mean {mean}: {e}")))?;
        let draw: f64 = poisson.sample(rng);
        draw as usize
    } else {
        0
    };
    let marks = WeightedIndex::new(spatial.types.iter().map(|t| t.fraction))
        .map_err(|e| Error::config(format!("invalid type fractions: {e}")))?;
    let mut interferers = Vec::with_capacity(count);
    for _ in 0..count {
        // uniform on the disk: radius is the square root of a uniform draw
        let u: f64 = rng.random();
        let distance = window_radius * u.sqrt();
        let type_index = marks.sample(rng);
        interferers.push(Interferer { distance, type_index });
    }
    Ok(Realization { interferers, window_radius })
}

/// Empirical distribution of the conditional fragment success probability,
/// one sample per independent interferer field.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeta {
    samples: Vec<f64>, // sorted ascending
}

impl EmpiricalMeta {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fraction of realizations whose success probability exceeds `x`.
    pub fn ccdf(&self, x: f64) -> f64 {
        let at_most = self.samples.partition_point(|&s| s <= x);
        1.0 - at_most as f64 / self.samples.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn second_moment(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    /// Largest pointwise gap between the empirical distribution and a
    /// fitted shape, evaluated at every sample (both one-sided gaps).
    pub fn kolmogorov_distance(&self, meta: &MetaDistribution) -> Result<f64> {
        let n = self.samples.len() as f64;
        let mut gap = 0.0_f64;
        for (i, &x) in self.samples.iter().enumerate() {
            let fitted = meta.cdf(x)?;
            gap = gap.max(fitted - i as f64 / n).max((i as f64 + 1.0) / n - fitted);
        }
        Ok(gap)
    }
}

/// Samples `run.realizations` interferer fields in parallel and returns the
/// empirical success-probability distribution at the given threshold.
pub fn empirical_meta(
    spatial: &SpatialConfig,
    threshold: f64,
    run: &SimulationRun,
) -> Result<EmpiricalMeta> {
    if run.realizations == 0 {
        return Err(Error::config("at least one realization is required"));
    }
    let samples: Result<Vec<f64>> = (0..run.realizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(run.master_seed, &[STREAM_SPATIAL, u64::from(r)]);
            let realization = sample_realization(spatial, run.window_radius, &mut rng)?;
            let p = conditional_success_prob(&realization, threshold, spatial);
            if !p.is_finite() {
                return Err(Error::numerical(format!(
                    "non-finite success probability in realization {r}"
                )));
            }
            Ok(p)
        })
        .collect();
    let mut samples = samples?;
    samples.sort_by(f64::total_cmp);
    Ok(EmpiricalMeta { samples })
}

/// How per-slot fragment decoding is drawn during protocol replay.
#[derive(Debug, Clone, Copy)]
pub enum FragmentSuccess<'a> {
    /// Fixed per-slot probability: the conditional success probability of a
    /// sampled field, with fading already averaged out.
    Marginal(f64),
    /// Fully physical: fresh fading and interferer activity every slot.
    Physical {
        realization: &'a Realization,
        spatial: &'a SpatialConfig,
        threshold: f64,
    },
}

impl FragmentSuccess<'_> {
    /// Draws one slot's decode outcome.
    pub fn draw(&self, rng: &mut impl Rng) -> bool {
        match self {
            FragmentSuccess::Marginal(p) => rng.random::<f64>() < *p,
            FragmentSuccess::Physical { realization, spatial, threshold } => {
                if *threshold == 0.0 {
                    return true; // zero rate always decodes
                }
                let eta = spatial.path_loss_exp;
                let fading: f64 = rng.sample(Exp1);
                let signal = spatial.signal_power * fading * spatial.link_distance.powf(-eta);
                let mut interference = 0.0;
                for interferer in &realization.interferers {
                    let t = &spatial.types[interferer.type_index];
                    if rng.random::<f64>() < t.activity {
                        let g: f64 = rng.sample(Exp1);
                        interference += t.power * g * interferer.distance.powf(-eta);
                    }
                }
                signal >= *threshold * interference
            }
        }
    }
}

/// Protocol parameters for packet replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSetup {
    pub scheme: Scheme,
    pub fragments: u32,
    pub deadline: u32,
    /// Per-slot acknowledgment success probability; closed loop only.
    pub ack_success: f64,
    /// Open-loop schedules; packets pick uniformly when several are given.
    pub plans: Vec<RepetitionPlan>,
}

impl ProtocolSetup {
    /// Mirrors the analytical pipeline's configuration for one scheme.
    pub fn from_config(config: &NetworkConfig, scheme: Scheme, fragments: u32) -> Result<Self> {
        let deadline = config.radio.deadline_slots;
        let ack_success = if scheme.uses_feedback() {
            feedback_success_prob(&config.spatial, &config.feedback, config.radio.bandwidth_hz)?
        } else {
            1.0
        };
        let plans = match scheme {
            Scheme::Clra => Vec::new(),
            Scheme::Olra => {
                if config.analysis.average_assignments {
                    RepetitionPlan::all_assignments(fragments, deadline)?
                } else {
                    vec![RepetitionPlan::standard(fragments, deadline)?]
                }
            }
            Scheme::OlraEs => vec![RepetitionPlan::energy_saving(fragments, deadline)?],
        };
        Ok(ProtocolSetup { scheme, fragments, deadline, ack_success, plans })
    }
}

/// Tallies from replayed packets. Delay sums are in slots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ProtocolStats {
    pub packets: u64,
    pub successes: u64,
    pub success_delay_sum: f64,
    pub timeout_delay_sum: f64,
}

impl ProtocolStats {
    fn record(&mut self, delivered: bool, slot: u32) {
        self.packets += 1;
        if delivered {
            self.successes += 1;
            self.success_delay_sum += f64::from(slot);
        } else {
            self.timeout_delay_sum += f64::from(slot);
        }
    }

    pub fn merge(&mut self, other: &ProtocolStats) {
        self.packets += other.packets;
        self.successes += other.successes;
        self.success_delay_sum += other.success_delay_sum;
        self.timeout_delay_sum += other.timeout_delay_sum;
    }

    pub fn psd(&self) -> f64 {
        self.successes as f64 / self.packets as f64
    }

    /// Empirical counterpart of a chain absorption result.
    pub fn to_absorption(&self) -> Result<AbsorptionResult> {
        if self.packets == 0 {
            return Err(Error::config("no packets recorded"));
        }
        let n = self.packets as f64;
        let result = AbsorptionResult {
            success: self.successes as f64 / n,
            timeout: (self.packets - self.successes) as f64 / n,
            success_delay: self.success_delay_sum / n,
            timeout_delay: self.timeout_delay_sum / n,
        };
        result.check()?;
        Ok(result)
    }
}

/// Closed-loop packet walk: one fragment at a time, delivered when decoded
/// and acknowledged in the same slot; dropped the moment the pending
/// fragments exceed the remaining slots.
fn walk_closed_loop(
    fragments: u32,
    deadline: u32,
    ack_success: f64,
    success: &FragmentSuccess<'_>,
    rng: &mut impl Rng,
) -> (bool, u32) {
    let mut delivered = 0;
    for t in 1..=deadline {
        let ok = success.draw(rng) && rng.random::<f64>() < ack_success;
        if ok {
            delivered += 1;
            if delivered == fragments {
                return (true, t);
            }
        } else if fragments - delivered > deadline - t {
            return (false, t);
        }
    }
    unreachable!("closed-loop walk must absorb by the deadline")
}

/// Open-loop packet walk over a fixed schedule: each fragment window either
/// decodes (then idles until the window ends) or exhausts its copies and
/// drops the packet; decoding the last fragment succeeds immediately.
fn walk_open_loop(
    plan: &RepetitionPlan,
    success: &FragmentSuccess<'_>,
    rng: &mut impl Rng,
) -> (bool, u32) {
    let copies = plan.copies();
    let last = copies.len() - 1;
    let mut slot = 0;
    for (i, &window) in copies.iter().enumerate() {
        let mut got = false;
        for k in 1..=window {
            slot += 1;
            if !got && success.draw(rng) {
                if i == last {
                    return (true, slot);
                }
                got = true;
            }
            if k == window && !got {
                return (false, slot);
            }
        }
    }
    unreachable!("open-loop walk must absorb within the schedule")
}

/// Replays `packets` packets, one independent stream per packet at path
/// `prefix ++ [packet]`.
pub fn simulate_protocol(
    setup: &ProtocolSetup,
    success: &FragmentSuccess<'_>,
    packets: u32,
    master_seed: u64,
    stream_prefix: &[u64],
) -> Result<ProtocolStats> {
    if setup.fragments == 0 || setup.fragments > setup.deadline {
        return Err(Error::config(format!(
            "{} fragments cannot fit in a {}-slot deadline",
            setup.fragments, setup.deadline
        )));
    }
    let mut stats = ProtocolStats::default();
    let mut path = Vec::with_capacity(stream_prefix.len() + 1);
    for packet in 0..packets {
        path.clear();
        path.extend_from_slice(stream_prefix);
        path.push(u64::from(packet));
        let mut rng = stream_rng(master_seed, &path);
        let (delivered, slot) = match setup.scheme {
            Scheme::Clra => walk_closed_loop(
                setup.fragments,
                setup.deadline,
                setup.ack_success,
                success,
                &mut rng,
            ),
            Scheme::Olra | Scheme::OlraEs => {
                let plan = match setup.plans.len() {
                    0 => return Err(Error::config("open loop requires a schedule")),
                    1 => &setup.plans[0],
                    n => &setup.plans[rng.random_range(0..n)],
                };
                walk_open_loop(plan, success, &mut rng)
            }
        };
        stats.record(delivered, slot);
    }
    Ok(stats)
}

/// Monte Carlo estimate of one scheme's KPIs with the matching analytical
/// report attached.
#[derive(Debug, Clone, Serialize)]
pub struct SchemeSimulation {
    pub scheme: Scheme,
    pub fragments: u32,
    pub realizations: u32,
    pub packets_per_realization: u32,
    /// Empirical first moment of the conditional success probability.
    pub empirical_m1: f64,
    /// Empirical second moment of the conditional success probability.
    pub empirical_m2: f64,
    pub psd: f64,
    /// Standard error of the success estimate across realizations.
    pub psd_stderr: f64,
    pub latency_slots: f64,
    pub latency_seconds: f64,
    pub success_latency_seconds: Option<f64>,
    pub energy_joules: f64,
    pub analytic: KpiReport,
}

/// Runs the full campaign for one scheme: per realization, sample a field,
/// compute its conditional success probability, and replay packets against
/// it. Parallel across realizations, deterministic for a fixed seed.
pub fn simulate_scheme(
    config: &NetworkConfig,
    scheme: Scheme,
    fragments: u32,
) -> Result<SchemeSimulation> {
    config.validate()?;
    let analytic = evaluate_scheme(config, scheme, fragments)?;
    let setup = ProtocolSetup::from_config(config, scheme, fragments)?;
    let run = SimulationRun::from_config(config);
    let threshold = config.radio.threshold_for(fragments)?;

    let outcomes: Result<Vec<(f64, ProtocolStats)>> = (0..run.realizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(run.master_seed, &[STREAM_SPATIAL, u64::from(r)]);
            let realization = sample_realization(&config.spatial, run.window_radius, &mut rng)?;
            let p = conditional_success_prob(&realization, threshold, &config.spatial);
            let stats = simulate_protocol(
                &setup,
                &FragmentSuccess::Marginal(p),
                run.packets_per_realization,
                run.master_seed,
                &[STREAM_PROTOCOL, u64::from(r)],
            )?;
            Ok((p, stats))
        })
        .collect();
    // ordered collect + sequential fold keeps sums bit-identical across
    // thread counts
    let outcomes = outcomes?;
    let count = outcomes.len() as f64;
    let empirical_m1 = outcomes.iter().map(|(p, _)| p).sum::<f64>() / count;
    let empirical_m2 = outcomes.iter().map(|(p, _)| p * p).sum::<f64>() / count;
    let mut total = ProtocolStats::default();
    for (_, stats) in &outcomes {
        total.merge(stats);
    }
    let psd = total.psd();
    let psd_stderr = if outcomes.len() > 1 {
        let variance = outcomes
            .iter()
            .map(|(_, s)| {
                let d = s.psd() - psd;
                d * d
            })
            .sum::<f64>()
            / (count - 1.0);
        (variance / count).sqrt()
    } else {
        0.0
    };
    let result = total.to_absorption()?;
    let latency = latency_seconds(
        &result,
        scheme,
        config.radio.slot_duration,
        config.feedback.ack_duration,
    );
    let energy = receiver_energy(
        &result,
        &config.energy,
        scheme,
        config.radio.slot_duration,
        config.feedback.ack_duration,
    );
    Ok(SchemeSimulation {
        scheme,
        fragments,
        realizations: run.realizations,
        packets_per_realization: run.packets_per_realization,
        empirical_m1,
        empirical_m2,
        psd,
        psd_stderr,
        latency_slots: result.mean_delay_slots(),
        latency_seconds: latency.unconditional_seconds,
        success_latency_seconds: latency.success_seconds,
        energy_joules: energy,
        analytic,
    })
}
