//! Command line front end: analytical KPIs, Monte Carlo campaigns, scheme
//! sweeps, side-by-side comparisons, and fragment-count optimization, all
//! written as JSON/CSV into a chosen directory.

use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fraglink::{
    apply_override, empirical_meta, evaluate_scheme, optimize_fragments, simulate_scheme,
    MetaDistribution, NetworkConfig, Objective, Optimization, Scheme, SimulationRun,
};
use toml::Table;

#[derive(Parser)]
#[command(
    name = "fraglink",
    version,
    about = "Reliability, latency, and energy of fragmented packet delivery \
             under closed- and open-loop repetition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (TOML); built-in defaults apply when omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. --set spatial.density=1e-4 or
    /// --set "radio.slot_duration=2 ms" (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Master seed (shorthand for --set analysis.seed=N)
    #[arg(long)]
    seed: Option<u64>,

    /// Directory for generated files
    #[arg(long, default_value = ".", value_name = "DIR")]
    out: PathBuf,
}

/// Inclusive fragment-count range, written as "A..B" or a single count.
#[derive(Clone)]
struct FragmentRange(RangeInclusive<u32>);

impl FromStr for FragmentRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |part: &str| {
            part.trim()
                .parse::<u32>()
                .map_err(|_| format!("{part:?} is not a fragment count"))
        };
        let range = match s.split_once("..") {
            Some((lo, hi)) => parse(lo)?..=parse(hi.trim_start_matches('='))?,
            None => {
                let n = parse(s)?;
                n..=n
            }
        };
        if range.is_empty() || *range.start() == 0 {
            return Err(format!("{s:?} is not a nonempty positive range"));
        }
        Ok(FragmentRange(range))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Analytical KPIs for one scheme and fragment count
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Delivery scheme: clra, olra, or olra-es
        #[arg(long)]
        scheme: Scheme,
        /// Fragments per packet (defaults to the configured value)
        #[arg(long)]
        fragments: Option<u32>,
    },
    /// Monte Carlo campaign with the matching analytical report
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: Scheme,
        #[arg(long)]
        fragments: Option<u32>,
    },
    /// Analytical KPIs across schemes and fragment counts
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Schemes to include (comma separated; default all three)
        #[arg(long, value_delimiter = ',')]
        scheme: Vec<Scheme>,
        /// Fragment counts, e.g. 1..15 (default 1 to the deadline)
        #[arg(long, value_name = "A..B")]
        n_range: Option<FragmentRange>,
    },
    /// Delivery probability table: closed loop across feedback qualities
    /// next to both open-loop variants
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "A..B")]
        n_range: Option<FragmentRange>,
    },
    /// Best fragment count under an objective
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: Scheme,
        /// Objective: max-psd, min-latency, or min-energy
        #[arg(long, default_value = "max-psd")]
        goal: String,
        /// Minimum delivery probability for the min-* goals
        #[arg(long)]
        psd_floor: Option<f64>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Analyze { common, scheme, fragments } => analyze(&common, scheme, fragments),
        Command::Simulate { common, scheme, fragments } => simulate(&common, scheme, fragments),
        Command::Sweep { common, scheme, n_range } => sweep(&common, &scheme, n_range),
        Command::Compare { common, n_range } => compare(&common, n_range),
        Command::Optimize { common, scheme, goal, psd_floor } => {
            optimize(&common, scheme, &goal, psd_floor)
        }
    }
}

/// Layers the config file, --set overrides, and the --seed shorthand, then
/// parses and validates the result.
fn build_config(common: &Common) -> Result<NetworkConfig> {
    let mut table: Table = match &common.config {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?
            .parse()
            .context("configuration is not valid TOML")?,
        None => Table::new(),
    };
    for entry in &common.set {
        let (key, value) = entry
            .split_once('=')
            .with_context(|| format!("--set {entry:?} is not KEY=VALUE"))?;
        apply_override(&mut table, key.trim(), value.trim())?;
    }
    if let Some(seed) = common.seed {
        apply_override(&mut table, "analysis.seed", &seed.to_string())?;
    }
    Ok(fraglink::from_toml_str(&toml::to_string(&table)?)?)
}

fn out_file(common: &Common, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))?;
    Ok(common.out.join(name))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn csv_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn analyze(common: &Common, scheme: Scheme, fragments: Option<u32>) -> Result<()> {
    let config = build_config(common)?;
    let fragments = fragments.unwrap_or(config.radio.fragments);
    let report = evaluate_scheme(&config, scheme, fragments)?;

    let mut csv = String::from(
        "class,fragment_success,psd,latency_slots,latency_seconds,\
         success_latency_seconds,timeout_latency_seconds,energy_joules\n",
    );
    for class in &report.classes {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            class.class,
            class.fragment_success,
            class.psd,
            class.latency_slots,
            class.latency_seconds,
            csv_opt(class.success_latency_seconds),
            csv_opt(class.timeout_latency_seconds),
            class.energy_joules
        )?;
    }
    write_text(&out_file(common, "kpi.csv")?, &csv)?;
    write_json(&out_file(common, "report.json")?, &report)?;

    let average = &report.average;
    println!(
        "{scheme} n={fragments} T={}: delivery {:.6}, latency {:.3} ms, energy {:.1} uJ",
        report.deadline_slots,
        average.psd,
        1e3 * average.latency_seconds,
        1e6 * average.energy_joules
    );
    Ok(())
}

fn simulate(common: &Common, scheme: Scheme, fragments: Option<u32>) -> Result<()> {
    let config = build_config(common)?;
    let fragments = fragments.unwrap_or(config.radio.fragments);
    let outcome = simulate_scheme(&config, scheme, fragments)?;

    // empirical per-field success samples and the fitted tail next to the
    // measured one
    let threshold = config.radio.threshold_for(fragments)?;
    let run = SimulationRun::from_config(&config);
    let empirical = empirical_meta(&config.spatial, threshold, &run)?;
    let mut samples = String::new();
    for sample in empirical.samples() {
        writeln!(samples, "{sample}")?;
    }
    write_text(&out_file(common, &format!("samples_{fragments}.txt"))?, &samples)?;

    let fitted = MetaDistribution::from_moments_or_point_mass(
        threshold,
        outcome.analytic.moment_m1,
        outcome.analytic.moment_m2,
    )?;
    let mut csv = String::from("reliability_level,empirical_ccdf,fitted_ccdf\n");
    for step in 0..=100u32 {
        let level = f64::from(step) / 100.0;
        writeln!(csv, "{level},{},{}", empirical.ccdf(level), fitted.ccdf(level)?)?;
    }
    write_text(&out_file(common, &format!("meta_{fragments}.csv"))?, &csv)?;
    write_json(&out_file(common, "simulation.json")?, &outcome)?;

    println!(
        "{scheme} n={fragments}: simulated delivery {:.6} (stderr {:.6}) vs analytical {:.6}; \
         simulated latency {:.3} ms vs {:.3} ms",
        outcome.psd,
        outcome.psd_stderr,
        outcome.analytic.average.psd,
        1e3 * outcome.latency_seconds,
        1e3 * outcome.analytic.average.latency_seconds
    );
    Ok(())
}

fn sweep(common: &Common, schemes: &[Scheme], n_range: Option<FragmentRange>) -> Result<()> {
    let config = build_config(common)?;
    let schemes: Vec<Scheme> = if schemes.is_empty() {
        vec![Scheme::Clra, Scheme::Olra, Scheme::OlraEs]
    } else {
        schemes.to_vec()
    };
    let range = resolve_range(n_range, &config)?;

    let mut csv = String::from(
        "scheme,fragments,psd,latency_seconds,success_latency_seconds,energy_joules\n",
    );
    let mut rows = 0u32;
    for &scheme in &schemes {
        for fragments in range.clone() {
            let report = evaluate_scheme(&config, scheme, fragments)?;
            let average = &report.average;
            writeln!(
                csv,
                "{scheme},{fragments},{},{},{},{}",
                average.psd,
                average.latency_seconds,
                csv_opt(average.success_latency_seconds),
                average.energy_joules
            )?;
            rows += 1;
        }
    }
    write_text(&out_file(common, "sweep.csv")?, &csv)?;
    println!("swept {rows} scheme/fragment combinations");
    Ok(())
}

fn compare(common: &Common, n_range: Option<FragmentRange>) -> Result<()> {
    let config = build_config(common)?;
    let range = resolve_range(n_range, &config)?;

    let mut csv = String::from(
        "fragments,clra,clra_ack_100,clra_ack_70,clra_ack_50,olra,olra_es\n",
    );
    for fragments in range.clone() {
        let mut row = fragments.to_string();
        for ack in [None, Some(1.0), Some(0.7), Some(0.5)] {
            let mut cfg = config.clone();
            cfg.feedback.fixed_ack_success = ack;
            let report = evaluate_scheme(&cfg, Scheme::Clra, fragments)?;
            write!(row, ",{}", report.average.psd)?;
        }
        for scheme in [Scheme::Olra, Scheme::OlraEs] {
            let report = evaluate_scheme(&config, scheme, fragments)?;
            write!(row, ",{}", report.average.psd)?;
        }
        csv.push_str(&row);
        csv.push('\n');
    }
    write_text(&out_file(common, "compare.csv")?, &csv)?;
    println!("compared fragment counts {}..={}", range.start(), range.end());
    Ok(())
}

fn optimize(common: &Common, scheme: Scheme, goal: &str, psd_floor: Option<f64>) -> Result<()> {
    let config = build_config(common)?;
    let objective = match (goal, psd_floor) {
        ("max-psd", None) => Objective::MaxPsd,
        ("max-psd", Some(_)) => bail!("max-psd takes no --psd-floor"),
        ("min-latency", Some(floor)) => Objective::MinLatency { psd_floor: floor },
        ("min-energy", Some(floor)) => Objective::MinEnergy { psd_floor: floor },
        ("min-latency" | "min-energy", None) => {
            bail!("{goal} requires --psd-floor")
        }
        _ => bail!("unknown goal {goal:?} (expected max-psd, min-latency, or min-energy)"),
    };

    let mut csv = String::from("fragments,psd,latency_seconds,energy_joules\n");
    for fragments in 1..=config.radio.deadline_slots {
        let report = evaluate_scheme(&config, scheme, fragments)?;
        let average = &report.average;
        writeln!(
            csv,
            "{fragments},{},{},{}",
            average.psd, average.latency_seconds, average.energy_joules
        )?;
    }
    write_text(&out_file(common, "scan.csv")?, &csv)?;

    let outcome = optimize_fragments(&config, scheme, objective)?;
    write_json(&out_file(common, "optimize.json")?, &outcome)?;
    match &outcome {
        Optimization::Optimal { fragments, objective_value, report } => println!(
            "{scheme} best fragment count: {fragments} (objective value {objective_value:.6}, \
             delivery {:.6})",
            report.average.psd
        ),
        Optimization::Infeasible { psd_floor, best_psd, best_fragments } => println!(
            "{scheme}: no fragment count reaches delivery {psd_floor}; closest is \
             {best_fragments} at {best_psd:.6}"
        ),
    }
    Ok(())
}

fn resolve_range(
    n_range: Option<FragmentRange>,
    config: &NetworkConfig,
) -> Result<RangeInclusive<u32>> {
    let range = match n_range {
        Some(FragmentRange(range)) => range,
        None => 1..=config.radio.deadline_slots,
    };
    if *range.end() > config.radio.deadline_slots {
        bail!(
            "fragment count {} exceeds the {}-slot deadline",
            range.end(),
            config.radio.deadline_slots
        );
    }
    Ok(range)
}
