//! Analytical engine and Monte Carlo validator for packet delivery in
//! large-scale slotted networks of low-power devices.
//!
//! A packet of fixed size is split into `n` fragments and must be delivered
//! within a deadline of `T` slots. Splitting lowers the per-slot rate, which
//! lowers the detection threshold and makes each slot more likely to decode,
//! but leaves fewer spare slots for retries. This crate quantifies that
//! trade-off for three repetition strategies:
//!
//! - **CLRA**: closed loop, every fragment is retried until acknowledged;
//! - **OLRA**: open loop, each fragment gets a fixed window of blind copies;
//! - **OLRA-ES**: open loop with equal windows, surplus slots left idle.
//!
//! Interference comes from a field of devices with heterogeneous activity
//! and power, summarized by the distribution of the per-link success
//! probability. The analysis discretizes that distribution into equiprobable
//! classes, runs each class through an absorbing chain of the chosen
//! strategy, and reports reliability, latency, and receiver energy.
//!
//! ```
//! use fraglink::{evaluate_scheme, NetworkConfig, Scheme};
//!
//! let config = NetworkConfig::default();
//! let report = evaluate_scheme(&config, Scheme::Olra, 4).unwrap();
//! assert!(report.average.psd > 0.9);
//! assert!(report.average.latency_seconds < 0.016);
//! ```

pub mod config;
pub mod error;
pub mod metrics;
pub mod sim;
pub mod spatial;
pub mod special;
pub mod temporal;

pub use config::{
    apply_override, from_toml_str, load, AnalysisConfig, EnergyConfig, FeedbackConfig,
    InterfererType, LatencyMetric, NetworkConfig, RadioConfig, RepetitionPlan, SpatialConfig,
};
pub use error::{Error, Result};
pub use metrics::{
    absorb, class_absorption, evaluate_scheme, latency_seconds, optimize_fragments,
    receiver_energy, AbsorptionResult, ClassKpi, KpiReport, KpiSummary, Latency, Objective,
    Optimization,
};
pub use sim::{
    empirical_meta, sample_realization, simulate_protocol, simulate_scheme, stream_rng,
    EmpiricalMeta, FragmentSuccess, ProtocolSetup, ProtocolStats, SchemeSimulation, SimulationRun,
};
pub use spatial::{
    conditional_success_prob, discretize_classes, feedback_success_prob, field_constant,
    moment_m1, moment_m2, BetaShape, FsdClassSet, Interferer, MetaDistribution, Realization,
};
pub use special::{inv_reg_inc_beta, ln_gamma, reg_inc_beta};
pub use temporal::{build_clra, build_olra, build_olra_es, AbsorbingChain, Level, Scheme, StateLabel};

/// Keeps every code block in the guide compiling and passing against the
/// current API.
#[cfg(doctest)]
mod book {
    macro_rules! doc_check {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    doc_check!(introduction, "../../../book/src/introduction.md");
    doc_check!(model, "../../../book/src/model.md");
    doc_check!(schemes, "../../../book/src/schemes.md");
    doc_check!(kpis, "../../../book/src/kpis.md");
    doc_check!(simulation, "../../../book/src/simulation.md");
    doc_check!(cli, "../../../book/src/cli.md");
}
