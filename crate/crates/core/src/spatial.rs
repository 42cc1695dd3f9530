//! Interference field statistics: moments of the conditional fragment
//! success probability across network realizations, the beta fit of its
//! distribution, and the collapse into equiprobable reliability classes.
//!
//! Conditioned on interferer positions, each receiver sees a different
//! fragment success probability. Its distribution over realizations is
//! summarized by two analytically available moments and approximated by a
//! beta distribution matched to them. When the variance collapses (for
//! example with no interferers, or a zero threshold) the beta fit is
//! replaced by a point mass at the mean.

use std::f64::consts::PI;

use crate::config::{FeedbackConfig, SpatialConfig};
use crate::error::{Error, Result};
use crate::special::{inv_reg_inc_beta, reg_inc_beta};

/// Variance below this is treated as a point mass; beta shapes would be
/// numerically meaningless.
const DEGENERATE_VARIANCE: f64 = 1e-13;
/// Combined beta shape (a + b) above this is likewise degenerate.
const DEGENERATE_SPREAD: f64 = 1e8;

/// One interferer in a sampled network: distance from the observed receiver
/// and the population type it belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interferer {
    pub distance: f64,
    pub type_index: usize,
}

/// A sampled interferer field on a finite disk around the receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub interferers: Vec<Interferer>,
    pub window_radius: f64,
}

/// Shared integral constant of the interference field:
/// 2 pi^2 lambda R^2 theta^(2/eta) / (eta sin(2 pi / eta)).
pub fn field_constant(density: f64, link_distance: f64, path_loss_exp: f64, threshold: f64) -> f64 {
    let eta = path_loss_exp;
    2.0 * PI * PI * density * link_distance * link_distance * threshold.powf(2.0 / eta)
        / (eta * (2.0 * PI / eta).sin())
}

fn check_field_inputs(spatial: &SpatialConfig, threshold: f64) -> Result<()> {
    if !(spatial.path_loss_exp > 2.0) {
        return Err(Error::config(
            "path-loss exponent must exceed 2 for finite interference moments",
        ));
    }
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return Err(Error::config(format!(
            "detection threshold must be finite and non-negative, got {threshold}"
        )));
    }
    Ok(())
}

/// Mean over realizations of the conditional fragment success probability.
pub fn moment_m1(spatial: &SpatialConfig, threshold: f64) -> Result<f64> {
    check_field_inputs(spatial, threshold)?;
    let exp_ratio = 2.0 / spatial.path_loss_exp;
    let weight: f64 = spatial
        .types
        .iter()
        .map(|t| t.fraction * t.activity * (t.power / spatial.signal_power).powf(exp_ratio))
        .sum();
    let c = field_constant(
        spatial.density,
        spatial.link_distance,
        spatial.path_loss_exp,
        threshold,
    );
    Ok((-c * weight).exp())
}

/// Second moment over realizations of the conditional fragment success
/// probability; the extra per-type factor accounts for the same interferer
/// appearing in both slots of the squared probability.
pub fn moment_m2(spatial: &SpatialConfig, threshold: f64) -> Result<f64> {
    check_field_inputs(spatial, threshold)?;
    let exp_ratio = 2.0 / spatial.path_loss_exp;
    let weight: f64 = spatial
        .types
        .iter()
        .map(|t| {
            t.fraction
                * t.activity
                * (t.power / spatial.signal_power).powf(exp_ratio)
                * (2.0 - t.activity * (1.0 - exp_ratio))
        })
        .sum();
    let c = field_constant(
        spatial.density,
        spatial.link_distance,
        spatial.path_loss_exp,
        threshold,
    );
    Ok((-c * weight).exp())
}

/// Per-slot acknowledgment success probability seen by the transmitter. A
/// configured fixed value bypasses the interference model; otherwise every
/// device in the field is a potential full-time interferer to the short
/// acknowledgment, giving the mean success at the acknowledgment threshold.
pub fn feedback_success_prob(
    spatial: &SpatialConfig,
    feedback: &FeedbackConfig,
    bandwidth_hz: f64,
) -> Result<f64> {
    if let Some(p) = feedback.fixed_ack_success {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!(
                "fixed acknowledgment success probability {p} outside [0, 1]"
            )));
        }
        return Ok(p);
    }
    let threshold = feedback.ack_threshold(bandwidth_hz)?;
    check_field_inputs(spatial, threshold)?;
    let c = field_constant(
        spatial.density,
        spatial.link_distance,
        spatial.path_loss_exp,
        threshold,
    );
    Ok((-c).exp())
}

/// Fragment success probability conditioned on one sampled interferer field,
/// averaging over fading and the interferers' independent per-slot activity.
pub fn conditional_success_prob(
    realization: &Realization,
    threshold: f64,
    spatial: &SpatialConfig,
) -> f64 {
    if threshold == 0.0 {
        return 1.0; // zero rate always decodes; avoids 0 * inf below
    }
    let eta = spatial.path_loss_exp;
    let mut prob = 1.0;
    for interferer in &realization.interferers {
        let t = &spatial.types[interferer.type_index];
        // interference-to-signal ratio contribution of this device; an
        // interferer at distance 0 contributes (1 - activity) exactly
        let ratio = threshold * (t.power / spatial.signal_power)
            * (spatial.link_distance / interferer.distance).powf(eta);
        prob *= (1.0 - t.activity) + t.activity / (1.0 + ratio);
    }
    prob
}

/// Shape of the fitted fragment-success distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaShape {
    Beta { alpha: f64, beta: f64 },
    PointMass,
}

/// Distribution of the conditional fragment success probability across
/// network realizations, represented by its first two moments and a matched
/// beta (or point-mass) shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaDistribution {
    threshold: f64,
    m1: f64,
    m2: f64,
    shape: BetaShape,
}

impl MetaDistribution {
    /// Fits a beta shape to the given moments. Fails with a degenerate-meta
    /// error when the variance is too small to support one; callers that can
    /// tolerate that should use [`MetaDistribution::from_moments_or_point_mass`].
    pub fn from_moments(threshold: f64, m1: f64, m2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&m1) || !(0.0..=1.0).contains(&m2) {
            return Err(Error::numerical(format!(
                "moments must lie in [0, 1], got m1={m1}, m2={m2}"
            )));
        }
        // For a [0, 1] variable: m1^2 <= m2 <= m1.
        if m2 > m1 + 1e-12 {
            return Err(Error::numerical(format!(
                "second moment {m2} exceeds first moment {m1}"
            )));
        }
        let variance = m2 - m1 * m1;
        if variance < -1e-12 {
            return Err(Error::numerical(format!(
                "moments imply negative variance: m1={m1}, m2={m2}"
            )));
        }
        if variance <= DEGENERATE_VARIANCE {
            return Err(Error::DegenerateMeta { mean: m1, variance });
        }
        let spread = (m1 - m2) / variance;
        if spread >= DEGENERATE_SPREAD {
            return Err(Error::DegenerateMeta { mean: m1, variance });
        }
        let alpha = m1 * spread;
        let beta = (1.0 - m1) * spread;
        if !(alpha > 0.0) || !(beta > 0.0) {
            return Err(Error::DegenerateMeta { mean: m1, variance });
        }
        Ok(MetaDistribution {
            threshold,
            m1,
            m2,
            shape: BetaShape::Beta { alpha, beta },
        })
    }

    /// Like [`MetaDistribution::from_moments`], but a degenerate fit falls
    /// back to a point mass at the mean instead of failing.
    pub fn from_moments_or_point_mass(threshold: f64, m1: f64, m2: f64) -> Result<Self> {
        match Self::from_moments(threshold, m1, m2) {
            Ok(meta) => Ok(meta),
            Err(Error::DegenerateMeta { mean, .. }) => Ok(MetaDistribution {
                threshold,
                m1: mean,
                m2,
                shape: BetaShape::PointMass,
            }),
            Err(e) => Err(e),
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn moment1(&self) -> f64 {
        self.m1
    }

    pub fn moment2(&self) -> f64 {
        self.m2
    }

    pub fn variance(&self) -> f64 {
        self.m2 - self.m1 * self.m1
    }

    pub fn shape(&self) -> BetaShape {
        self.shape
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.shape, BetaShape::PointMass)
    }

    /// Probability that a uniformly chosen receiver has conditional fragment
    /// success probability at most `x`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        match self.shape {
            BetaShape::Beta { alpha, beta } => reg_inc_beta(alpha, beta, x.clamp(0.0, 1.0)),
            BetaShape::PointMass => Ok(if x < self.m1 { 0.0 } else { 1.0 }),
        }
    }

    /// Probability that such a receiver exceeds reliability `x`.
    pub fn ccdf(&self, x: f64) -> Result<f64> {
        Ok(1.0 - self.cdf(x)?)
    }

    /// Quantile of the fitted shape; a point mass returns its location.
    pub fn quantile(&self, prob: f64, tol: f64) -> Result<f64> {
        match self.shape {
            BetaShape::Beta { alpha, beta } => inv_reg_inc_beta(alpha, beta, prob, tol),
            BetaShape::PointMass => Ok(self.m1),
        }
    }
}

/// The fragment-success distribution collapsed into equiprobable classes.
/// Class `m` covers the quantile band (m/M, (m+1)/M] and is represented by
/// its median, the quantile at (m + 1/2)/M.
#[derive(Debug, Clone, PartialEq)]
pub struct FsdClassSet {
    boundaries: Vec<f64>,
    medians: Vec<f64>,
    degenerate: bool,
}

impl FsdClassSet {
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn medians(&self) -> &[f64] {
        &self.medians
    }

    pub fn len(&self) -> usize {
        self.medians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.medians.is_empty()
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Splits the meta distribution into `count` equiprobable classes.
pub fn discretize_classes(
    meta: &MetaDistribution,
    count: u32,
    tol: f64,
) -> Result<FsdClassSet> {
    if count == 0 {
        return Err(Error::config("class count must be at least 1"));
    }
    let n = count as usize;
    if meta.is_degenerate() {
        // every receiver is identical: uniform boundaries, all medians at
        // the point mass
        let boundaries = (0..=n).map(|m| m as f64 / count as f64).collect();
        return Ok(FsdClassSet {
            boundaries,
            medians: vec![meta.moment1(); n],
            degenerate: true,
        });
    }
    let mut boundaries = Vec::with_capacity(n + 1);
    for m in 0..=n {
        boundaries.push(meta.quantile(m as f64 / count as f64, tol)?);
    }
    let mut medians = Vec::with_capacity(n);
    for m in 0..n {
        medians.push(meta.quantile((m as f64 + 0.5) / count as f64, tol)?);
    }
    // ties are legitimate: a sharply concentrated shape can saturate
    // adjacent quantiles to the same float; only a decrease is an inversion
    // bug
    for (i, pair) in medians.windows(2).enumerate() {
        if pair[0] > pair[1] {
            return Err(Error::numerical(format!(
                "class medians decrease at class {i}: {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    if !(medians[0] > 0.0) || !(medians[n - 1] < 1.0) {
        return Err(Error::numerical(
            "class medians must lie strictly inside (0, 1)",
        ));
    }
    Ok(FsdClassSet {
        boundaries,
        medians,
        degenerate: false,
    })
}
