//! Generative invariant checks over the parameter space: chain structure,
//! absorption accounting, monotonicity, schedule invariance, numerical
//! round trips, and campaign determinism.

mod common;

use common::{enumerate_closed_loop, enumerate_open_loop, max_deviation};
use fraglink::{
    absorb, apply_override, build_clra, build_olra, build_olra_es, conditional_success_prob,
    discretize_classes, empirical_meta, evaluate_scheme, from_toml_str, inv_reg_inc_beta,
    moment_m1, moment_m2, reg_inc_beta, Interferer, MetaDistribution, NetworkConfig, Realization,
    RepetitionPlan, Scheme, SimulationRun,
};
use proptest::prelude::*;

fn scheme_strategy() -> impl Strategy<Value = Scheme> {
    prop_oneof![Just(Scheme::Clra), Just(Scheme::Olra), Just(Scheme::OlraEs)]
}

/// (fragments, deadline) with 1 <= fragments <= deadline <= cap.
fn plan_shape(cap: u32) -> impl Strategy<Value = (u32, u32)> {
    (1..=cap).prop_flat_map(move |deadline| ((1..=deadline), Just(deadline)))
}

fn build(scheme: Scheme, fragments: u32, deadline: u32, p: f64) -> fraglink::AbsorbingChain {
    match scheme {
        Scheme::Clra => build_clra(fragments, deadline, p).unwrap(),
        Scheme::Olra => {
            let plan = RepetitionPlan::standard(fragments, deadline).unwrap();
            build_olra(fragments, deadline, p, &plan).unwrap()
        }
        Scheme::OlraEs => build_olra_es(fragments, deadline, p).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Every generated chain passes its structural audit, absorbs all
    /// probability mass, and first absorbs at the structurally earliest
    /// slots.
    #[test]
    fn chains_account_for_all_mass(
        scheme in scheme_strategy(),
        (fragments, deadline) in plan_shape(12),
        p in 0.0f64..=1.0,
    ) {
        let chain = build(scheme, fragments, deadline, p);
        chain.check().unwrap();
        let result = absorb(&chain).unwrap();
        prop_assert!((result.success + result.timeout - 1.0).abs() <= 1e-12);
        prop_assert!(result.success_delay >= 0.0 && result.timeout_delay >= 0.0);

        let first_success = chain.levels().iter()
            .find(|l| l.h.iter().any(|h| h[0] > 0.0)).map(|l| l.slot);
        let first_drop = chain.levels().iter()
            .find(|l| l.h.iter().any(|h| h[1] > 0.0)).map(|l| l.slot);
        match scheme {
            Scheme::Clra => {
                prop_assert_eq!(first_success, Some(fragments));
                prop_assert_eq!(first_drop, Some(deadline - fragments + 1));
            }
            Scheme::Olra | Scheme::OlraEs => {
                let plan = if scheme == Scheme::Olra {
                    RepetitionPlan::standard(fragments, deadline).unwrap()
                } else {
                    RepetitionPlan::energy_saving(fragments, deadline).unwrap()
                };
                let copies = plan.copies();
                let lead: u32 = copies[..copies.len() - 1].iter().sum();
                prop_assert_eq!(first_success, Some(lead + 1));
                prop_assert_eq!(first_drop, Some(copies[0]));
            }
        }
    }

    /// Chain absorption agrees with exhaustive path enumeration away from
    /// the fixed acceptance grid.
    #[test]
    fn chains_match_path_enumeration(
        scheme in scheme_strategy(),
        (fragments, deadline) in plan_shape(9),
        p in 0.0f64..=1.0,
        ack in 0.0f64..=1.0,
    ) {
        let (chain, want) = match scheme {
            Scheme::Clra => (
                build_clra(fragments, deadline, p * ack).unwrap(),
                enumerate_closed_loop(fragments, deadline, p * ack),
            ),
            Scheme::Olra => {
                let plan = RepetitionPlan::standard(fragments, deadline).unwrap();
                (
                    build_olra(fragments, deadline, p, &plan).unwrap(),
                    enumerate_open_loop(plan.copies(), p),
                )
            }
            Scheme::OlraEs => {
                let plan = RepetitionPlan::energy_saving(fragments, deadline).unwrap();
                (
                    build_olra_es(fragments, deadline, p).unwrap(),
                    enumerate_open_loop(plan.copies(), p),
                )
            }
        };
        let got = absorb(&chain).unwrap();
        prop_assert!(max_deviation(&got, &want) <= 1e-12);
    }

    /// A better slot never hurts: delivery probability is nondecreasing in
    /// the per-slot success probability.
    #[test]
    fn delivery_monotone_in_slot_success(
        scheme in scheme_strategy(),
        (fragments, deadline) in plan_shape(12),
        p_low in 0.0f64..=1.0,
        bump in 0.0f64..=1.0,
    ) {
        let p_high = p_low + bump * (1.0 - p_low);
        let low = absorb(&build(scheme, fragments, deadline, p_low)).unwrap();
        let high = absorb(&build(scheme, fragments, deadline, p_high)).unwrap();
        prop_assert!(high.success >= low.success - 1e-12);
    }

    /// Where the surplus copies land shifts latency only; the delivery
    /// probability depends on the multiset of window widths alone.
    #[test]
    fn schedule_choice_never_moves_delivery(
        (fragments, deadline) in plan_shape(12).prop_filter("several windows", |&(n, _)| (2..=5).contains(&n)),
        p in 0.0f64..=1.0,
    ) {
        let assignments = RepetitionPlan::all_assignments(fragments, deadline).unwrap();
        let reference = absorb(&build_olra(fragments, deadline, p, &assignments[0]).unwrap())
            .unwrap();
        for plan in &assignments[1..] {
            let other = absorb(&build_olra(fragments, deadline, p, plan).unwrap()).unwrap();
            prop_assert!((other.success - reference.success).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Interference moments: within [0, 1], ordered, and monotone in the
    /// detection threshold and the interferer density.
    #[test]
    fn moments_are_monotone(
        threshold_a in 0.0f64..50.0,
        factor in 1.0f64..10.0,
        density_scale in 1.0f64..20.0,
    ) {
        let spatial = NetworkConfig::default().spatial;
        let threshold_b = threshold_a * factor;
        let m1_a = moment_m1(&spatial, threshold_a).unwrap();
        let m1_b = moment_m1(&spatial, threshold_b).unwrap();
        let m2_a = moment_m2(&spatial, threshold_a).unwrap();
        prop_assert!((0.0..=1.0).contains(&m1_a));
        prop_assert!(m2_a <= m1_a + 1e-15);
        prop_assert!(m2_a >= m1_a * m1_a - 1e-15);
        prop_assert!(m1_b <= m1_a + 1e-15);

        let mut denser = spatial.clone();
        denser.density *= density_scale;
        prop_assert!(moment_m1(&denser, threshold_a).unwrap() <= m1_a + 1e-15);
    }

    /// Conditional per-field success: in [0, 1], monotone in threshold, and
    /// never helped by an extra interferer.
    #[test]
    fn conditional_success_is_monotone(
        distances in prop::collection::vec(0.5f64..500.0, 0..40),
        marks in prop::collection::vec(0usize..3, 40),
        threshold in 0.0f64..40.0,
        factor in 1.0f64..8.0,
        extra in 0.5f64..500.0,
    ) {
        let spatial = NetworkConfig::default().spatial;
        let interferers: Vec<Interferer> = distances.iter().zip(&marks)
            .map(|(&distance, &type_index)| Interferer { distance, type_index })
            .collect();
        let mut field = Realization { interferers, window_radius: 500.0 };
        let p = conditional_success_prob(&field, threshold, &spatial);
        prop_assert!((0.0..=1.0).contains(&p));

        let tighter = conditional_success_prob(&field, threshold * factor, &spatial);
        prop_assert!(tighter <= p + 1e-15);

        field.interferers.push(Interferer { distance: extra, type_index: 0 });
        let crowded = conditional_success_prob(&field, threshold, &spatial);
        prop_assert!(crowded <= p + 1e-15);
    }

    /// The fitted reliability tail decreases in the reliability level, and
    /// equiprobable class medians average back to the first moment.
    #[test]
    fn fitted_distribution_is_coherent(fragments in 1u32..=10) {
        let config = NetworkConfig::default();
        let threshold = config.radio.threshold_for(fragments).unwrap();
        let m1 = moment_m1(&config.spatial, threshold).unwrap();
        let m2 = moment_m2(&config.spatial, threshold).unwrap();
        let meta = MetaDistribution::from_moments_or_point_mass(threshold, m1, m2).unwrap();
        let mut last = 1.0;
        for step in 0..=20 {
            let level = step as f64 / 20.0;
            let tail = meta.ccdf(level).unwrap();
            prop_assert!(tail <= last + 1e-12);
            last = tail;
        }
        let classes = discretize_classes(&meta, 100, 1e-10).unwrap();
        let mean: f64 = classes.medians().iter().sum::<f64>() / 100.0;
        prop_assert!((mean - m1).abs() <= 0.01 * m1.max(0.01));
    }

    /// Quantile and distribution function invert each other. Shapes far
    /// below 1 are excluded here: their density is so steep at an endpoint
    /// that adjacent floats in x straddle more than 1e-8 in probability,
    /// so no inverse can round-trip tighter (see the bracket test below).
    #[test]
    fn incomplete_beta_round_trips(
        a in 0.4f64..20.0,
        b in 0.4f64..20.0,
        level in 0.001f64..0.999,
    ) {
        let x = inv_reg_inc_beta(a, b, level, 1e-12).unwrap();
        let back = reg_inc_beta(a, b, x).unwrap();
        prop_assert!((back - level).abs() <= 1e-8);
    }

    /// Dotted-path overrides survive parsing and land on the right field.
    #[test]
    fn overrides_reach_their_field(
        density in 1e-6f64..1e-3,
        deadline in 1u32..=30,
        seed in any::<u64>(),
    ) {
        let mut table = toml::Table::new();
        apply_override(&mut table, "spatial.density", &format!("{density:e}")).unwrap();
        apply_override(&mut table, "radio.deadline_slots", &deadline.to_string()).unwrap();
        apply_override(&mut table, "radio.fragments", "1").unwrap();
        apply_override(&mut table, "analysis.seed", &seed.to_string()).unwrap();
        let config = from_toml_str(&toml::to_string(&table).unwrap()).unwrap();
        prop_assert!((config.spatial.density - density).abs() <= 1e-18 + 1e-12 * density);
        prop_assert_eq!(config.radio.deadline_slots, deadline);
        prop_assert_eq!(config.analysis.seed, seed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Full analytic pipeline stays well-formed across the parameter space.
    #[test]
    fn reports_are_well_formed(
        scheme in scheme_strategy(),
        density_exp in -6.0f64..-3.0,
        path_loss in 2.5f64..6.0,
        (fragments, deadline) in plan_shape(16),
    ) {
        let mut config = NetworkConfig::default();
        config.spatial.density = 10f64.powf(density_exp);
        config.spatial.path_loss_exp = path_loss;
        config.radio.deadline_slots = deadline;
        config.radio.fragments = fragments;
        let report = evaluate_scheme(&config, scheme, fragments).unwrap();
        prop_assert!((0.0..=1.0).contains(&report.average.psd));
        prop_assert!(report.average.latency_seconds > 0.0);
        prop_assert!(report.average.energy_joules > 0.0);
        // classes are ordered by link quality, so delivery follows
        for pair in report.classes.windows(2) {
            prop_assert!(pair[1].psd >= pair[0].psd - 1e-12);
        }
    }

    /// Campaigns are bit-identical across runs and across thread counts.
    #[test]
    fn campaigns_are_deterministic(seed in any::<u64>()) {
        let config = NetworkConfig::default();
        let run = SimulationRun {
            master_seed: seed,
            realizations: 64,
            packets_per_realization: 1,
            window_radius: 400.0,
        };
        let threshold = config.radio.threshold_for(2).unwrap();
        let wide = empirical_meta(&config.spatial, threshold, &run).unwrap();
        let narrow = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| empirical_meta(&config.spatial, threshold, &run))
            .unwrap();
        prop_assert_eq!(wide.samples(), narrow.samples());
    }
}

/// For extreme shape parameters the inverse cannot round-trip in
/// probability (float resolution in x is the binding constraint), but the
/// returned quantile must still bracket the target level within one float
/// step on either side.
#[test]
fn extreme_shapes_bracket_their_quantile() {
    for (a, b) in [(0.1, 3.7), (3.7, 0.1), (0.05, 0.05), (0.1, 18.0)] {
        for level in [0.001, 0.095, 0.5, 0.905, 0.999] {
            // sub-float tolerance: bisect until the bracket is two
            // adjacent floats, the tightest localization possible
            let x = inv_reg_inc_beta(a, b, level, 1e-17).unwrap();
            let below = reg_inc_beta(a, b, x.next_down().max(0.0)).unwrap();
            let above = reg_inc_beta(a, b, x.next_up().min(1.0)).unwrap();
            assert!(
                below <= level + 1e-12 && above >= level - 1e-12,
                "quantile {x} of shape ({a}, {b}) misses level {level}: \
                 neighbors map to [{below}, {above}]"
            );
        }
    }
}

/// Doubling the sampling window does not move the empirical mean: the
/// default radius already captures the interference that matters.
#[test]
fn window_truncation_is_negligible() {
    let config = NetworkConfig::default();
    let threshold = config.radio.threshold_for(2).unwrap();
    let mut means = Vec::new();
    for radius in [2000.0, 4000.0] {
        let run = SimulationRun {
            master_seed: 17,
            realizations: 2000,
            packets_per_realization: 1,
            window_radius: radius,
        };
        let emp = empirical_meta(&config.spatial, threshold, &run).unwrap();
        means.push(emp.mean());
    }
    let drift = (means[1] / means[0] - 1.0).abs();
    assert!(drift < 0.005, "window doubling moved the mean by {:.3}%", 100.0 * drift);
}
