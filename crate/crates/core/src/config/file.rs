//! TOML ingestion with unit-suffixed quantities.
//!
//! Every section and key is optional; omitted keys keep their defaults.
//! Physical quantities accept either a bare number in base SI units or a
//! string with a unit suffix, e.g. `density = "200 /km2"`, `slot_duration =
//! "1 ms"`, `packet_bits = "300 B"`. Unknown keys are rejected with the full
//! dotted path so typos surface instead of silently keeping a default.

use std::path::Path;

use toml::{Table, Value};

use super::{InterfererType, LatencyMetric, NetworkConfig};
use crate::error::{Error, Result};

/// Reads and validates a configuration file.
pub fn load(path: impl AsRef<Path>) -> Result<NetworkConfig> {
    let text = std::fs::read_to_string(path)?;
    from_toml_str(&text)
}

/// Parses and validates configuration TOML.
pub fn from_toml_str(text: &str) -> Result<NetworkConfig> {
    let table: Table = text
        .parse()
        .map_err(|e| Error::config(format!("malformed TOML: {e}")))?;
    from_table(&table)
}

/// Applies a `section.key=value` override onto a raw TOML table, creating
/// intermediate tables as needed. The value is parsed as TOML where possible
/// and falls back to a plain string, so `--set radio.fragments=4` and
/// `--set radio.slot_duration="1 ms"` both work.
pub fn apply_override(table: &mut Table, dotted: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::key(dotted, "empty segment in key path"));
    }
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut current = table;
    for part in &parts[..parts.len() - 1] {
        current = current
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::key(dotted, "key path crosses a non-table value"))?;
    }
    current.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Converts an already-parsed TOML table (defaults plus any overrides) into
/// a validated configuration.
pub fn from_table(table: &Table) -> Result<NetworkConfig> {
    check_keys(table, "", &["spatial", "radio", "feedback", "energy", "analysis"])?;
    let mut config = NetworkConfig::default();

    if let Some(value) = table.get("spatial") {
        parse_spatial(as_table(value, "spatial")?, &mut config)?;
    }
    if let Some(value) = table.get("radio") {
        parse_radio(as_table(value, "radio")?, &mut config)?;
    }
    if let Some(value) = table.get("feedback") {
        parse_feedback(as_table(value, "feedback")?, &mut config)?;
    }
    if let Some(value) = table.get("energy") {
        parse_energy(as_table(value, "energy")?, &mut config)?;
    }
    if let Some(value) = table.get("analysis") {
        parse_analysis(as_table(value, "analysis")?, &mut config)?;
    }

    config.validate()?;
    Ok(config)
}

#[derive(Clone, Copy)]
enum Kind {
    Plain,
    Density,
    Length,
    Time,
    Power,
    Data,
    Frequency,
}

impl Kind {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Kind::Plain => &[],
            Kind::Density => &[
                ("/m2", 1.0),
                ("/m^2", 1.0),
                ("/km2", 1e-6),
                ("/km^2", 1e-6),
            ],
            Kind::Length => &[("m", 1.0), ("km", 1e3), ("cm", 1e-2), ("mm", 1e-3)],
            Kind::Time => &[
                ("s", 1.0),
                ("ms", 1e-3),
                ("us", 1e-6),
                ("µs", 1e-6),
                ("min", 60.0),
            ],
            Kind::Power => &[("W", 1.0), ("mW", 1e-3), ("uW", 1e-6), ("µW", 1e-6), ("kW", 1e3)],
            Kind::Data => &[
                ("bit", 1.0),
                ("bits", 1.0),
                ("kbit", 1e3),
                ("B", 8.0),
                ("byte", 8.0),
                ("bytes", 8.0),
                ("kB", 8e3),
            ],
            Kind::Frequency => &[("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6), ("GHz", 1e9)],
        }
    }
}

fn as_table<'a>(value: &'a Value, path: &str) -> Result<&'a Table> {
    value
        .as_table()
        .ok_or_else(|| Error::key(path, "expected a table"))
}

fn check_keys(table: &Table, section: &str, allowed: &[&str]) -> Result<()> {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            let path = if section.is_empty() {
                key.clone()
            } else {
                format!("{section}.{key}")
            };
            return Err(Error::key(
                path,
                format!("unknown key (expected one of: {})", allowed.join(", ")),
            ));
        }
    }
    Ok(())
}

fn quantity(value: &Value, kind: Kind, path: &str) -> Result<f64> {
    let v = match value {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        Value::String(s) => parse_quantity_str(s, kind, path)?,
        _ => return Err(Error::key(path, "expected a number or a quantity string")),
    };
    if !v.is_finite() {
        return Err(Error::key(path, format!("value {v} is not finite")));
    }
    Ok(v)
}

fn parse_quantity_str(s: &str, kind: Kind, path: &str) -> Result<f64> {
    let s = s.trim();
    // Longest numeric prefix wins, so exponents like "2.5e-3 W" stay intact.
    for i in (1..=s.len()).rev() {
        if !s.is_char_boundary(i) {
            continue;
        }
        if let Ok(number) = s[..i].trim().parse::<f64>() {
            let unit = s[i..].trim();
            return Ok(number * unit_factor(unit, kind, path)?);
        }
    }
    Err(Error::key(path, format!("`{s}` does not start with a number")))
}

fn unit_factor(unit: &str, kind: Kind, path: &str) -> Result<f64> {
    if unit.is_empty() {
        return Ok(1.0); // bare number: base SI unit
    }
    let units = kind.units();
    for &(name, factor) in units {
        if unit == name {
            return Ok(factor);
        }
    }
    let allowed: Vec<&str> = units.iter().map(|&(name, _)| name).collect();
    Err(Error::key(
        path,
        format!(
            "unknown unit `{unit}` (expected one of: {})",
            if allowed.is_empty() { "no unit".to_string() } else { allowed.join(", ") }
        ),
    ))
}

fn get_quantity(table: &Table, section: &str, key: &str, kind: Kind, slot: &mut f64) -> Result<()> {
    if let Some(value) = table.get(key) {
        *slot = quantity(value, kind, &format!("{section}.{key}"))?;
    }
    Ok(())
}

fn get_u32(table: &Table, section: &str, key: &str, slot: &mut u32) -> Result<()> {
    if let Some(value) = table.get(key) {
        let path = format!("{section}.{key}");
        let i = value
            .as_integer()
            .ok_or_else(|| Error::key(&path, "expected an integer"))?;
        *slot = u32::try_from(i)
            .map_err(|_| Error::key(&path, format!("{i} is out of range for a count")))?;
    }
    Ok(())
}

fn get_u64(table: &Table, section: &str, key: &str, slot: &mut u64) -> Result<()> {
    if let Some(value) = table.get(key) {
        let path = format!("{section}.{key}");
        // values above i64::MAX do not fit a TOML integer; accept them
        // spelled as strings
        *slot = match value {
            Value::Integer(i) => u64::try_from(*i)
                .map_err(|_| Error::key(&path, format!("{i} must be non-negative")))?,
            Value::String(s) => s
                .parse::<u64>()
                .map_err(|_| Error::key(&path, format!("{s:?} is not an unsigned integer")))?,
            _ => return Err(Error::key(&path, "expected an integer")),
        };
    }
    Ok(())
}

fn get_bool(table: &Table, section: &str, key: &str, slot: &mut bool) -> Result<()> {
    if let Some(value) = table.get(key) {
        *slot = value
            .as_bool()
            .ok_or_else(|| Error::key(format!("{section}.{key}"), "expected a boolean"))?;
    }
    Ok(())
}

fn number_array(value: &Value, kind: Kind, path: &str) -> Result<Vec<f64>> {
    let items = value
        .as_array()
        .ok_or_else(|| Error::key(path, "expected an array"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| quantity(item, kind, &format!("{path}[{i}]")))
        .collect()
}

fn parse_spatial(table: &Table, config: &mut NetworkConfig) -> Result<()> {
    check_keys(
        table,
        "spatial",
        &[
            "density",
            "path_loss_exp",
            "link_distance",
            "signal_power",
            "type_fractions",
            "type_activities",
            "type_powers",
        ],
    )?;
    let s = &mut config.spatial;
    get_quantity(table, "spatial", "density", Kind::Density, &mut s.density)?;
    get_quantity(table, "spatial", "path_loss_exp", Kind::Plain, &mut s.path_loss_exp)?;
    get_quantity(table, "spatial", "link_distance", Kind::Length, &mut s.link_distance)?;
    get_quantity(table, "spatial", "signal_power", Kind::Power, &mut s.signal_power)?;

    let type_keys = ["type_fractions", "type_activities", "type_powers"];
    if type_keys.iter().any(|k| table.contains_key(*k)) {
        for key in type_keys {
            if !table.contains_key(key) {
                return Err(Error::key(
                    format!("spatial.{key}"),
                    "required when any of the type arrays is given",
                ));
            }
        }
        let activities =
            number_array(&table["type_activities"], Kind::Plain, "spatial.type_activities")?;
        let powers = number_array(&table["type_powers"], Kind::Power, "spatial.type_powers")?;
        let fractions = match &table["type_fractions"] {
            Value::String(s) if s == "uniform" => {
                vec![1.0 / activities.len() as f64; activities.len()]
            }
            other => number_array(other, Kind::Plain, "spatial.type_fractions")?,
        };
        if fractions.len() != activities.len() || activities.len() != powers.len() {
            return Err(Error::key(
                "spatial.type_fractions",
                format!(
                    "type arrays must have equal lengths, got {}, {}, {}",
                    fractions.len(),
                    activities.len(),
                    powers.len()
                ),
            ));
        }
        s.types = fractions
            .into_iter()
            .zip(activities)
            .zip(powers)
            .map(|((fraction, activity), power)| InterfererType { fraction, activity, power })
            .collect();
    }
    Ok(())
}

fn parse_radio(table: &Table, config: &mut NetworkConfig) -> Result<()> {
    check_keys(
        table,
        "radio",
        &["packet_bits", "bandwidth", "slot_duration", "deadline_slots", "fragments"],
    )?;
    let r = &mut config.radio;
    get_quantity(table, "radio", "packet_bits", Kind::Data, &mut r.packet_bits)?;
    get_quantity(table, "radio", "bandwidth", Kind::Frequency, &mut r.bandwidth_hz)?;
    get_quantity(table, "radio", "slot_duration", Kind::Time, &mut r.slot_duration)?;
    get_u32(table, "radio", "deadline_slots", &mut r.deadline_slots)?;
    get_u32(table, "radio", "fragments", &mut r.fragments)?;
    Ok(())
}

fn parse_feedback(table: &Table, config: &mut NetworkConfig) -> Result<()> {
    check_keys(table, "feedback", &["ack_bits", "ack_duration", "fixed_ack_success"])?;
    let f = &mut config.feedback;
    get_quantity(table, "feedback", "ack_bits", Kind::Data, &mut f.ack_bits)?;
    get_quantity(table, "feedback", "ack_duration", Kind::Time, &mut f.ack_duration)?;
    if let Some(value) = table.get("fixed_ack_success") {
        f.fixed_ack_success =
            Some(quantity(value, Kind::Plain, "feedback.fixed_ack_success")?);
    }
    Ok(())
}

fn parse_energy(table: &Table, config: &mut NetworkConfig) -> Result<()> {
    check_keys(
        table,
        "energy",
        &["rx_circuit_power", "tx_circuit_power", "ack_tx_power", "amplifier_factor"],
    )?;
    let e = &mut config.energy;
    get_quantity(table, "energy", "rx_circuit_power", Kind::Power, &mut e.rx_circuit_power)?;
    get_quantity(table, "energy", "tx_circuit_power", Kind::Power, &mut e.tx_circuit_power)?;
    get_quantity(table, "energy", "ack_tx_power", Kind::Power, &mut e.ack_tx_power)?;
    get_quantity(table, "energy", "amplifier_factor", Kind::Plain, &mut e.amplifier_factor)?;
    Ok(())
}

fn parse_analysis(table: &Table, config: &mut NetworkConfig) -> Result<()> {
    check_keys(
        table,
        "analysis",
        &[
            "class_count",
            "beta_tolerance",
            "realizations",
            "packets_per_realization",
            "seed",
            "window_radius",
            "latency_metric",
            "average_assignments",
        ],
    )?;
    let a = &mut config.analysis;
    get_u32(table, "analysis", "class_count", &mut a.class_count)?;
    let mut tol = a.beta_tolerance;
    get_quantity(table, "analysis", "beta_tolerance", Kind::Plain, &mut tol)?;
    a.beta_tolerance = tol;
    get_u32(table, "analysis", "realizations", &mut a.realizations)?;
    get_u32(table, "analysis", "packets_per_realization", &mut a.packets_per_realization)?;
    get_u64(table, "analysis", "seed", &mut a.seed)?;
    get_quantity(table, "analysis", "window_radius", Kind::Length, &mut a.window_radius)?;
    if let Some(value) = table.get("latency_metric") {
        let path = "analysis.latency_metric";
        let s = value
            .as_str()
            .ok_or_else(|| Error::key(path, "expected a string"))?;
        a.latency_metric = match s {
            "unconditional" => LatencyMetric::Unconditional,
            "conditional-on-success" => LatencyMetric::ConditionalOnSuccess,
            other => {
                return Err(Error::key(
                    path,
                    format!(
                        "unknown metric `{other}` (expected `unconditional` or \
                         `conditional-on-success`)"
                    ),
                ))
            }
        };
    }
    get_bool(table, "analysis", "average_assignments", &mut a.average_assignments)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_yields_defaults() {
        let config = from_toml_str("").unwrap();
        assert_eq!(config, NetworkConfig::default());
    }

    #[test]
    fn unit_suffixes_convert_to_base_si() {
        let config = from_toml_str(
            r#"
            [spatial]
            density = "200 /km2"
            link_distance = "2000 cm"
            signal_power = "10 mW"

            [radio]
            packet_bits = "300 B"
            bandwidth = "250 kHz"
            slot_duration = "1 ms"

            [feedback]
            ack_bits = "5 B"
            ack_duration = "150 us"

            [analysis]
            window_radius = "2 km"
            "#,
        )
        .unwrap();
        assert!((config.spatial.density - 200e-6).abs() < 1e-15);
        assert!((config.spatial.link_distance - 20.0).abs() < 1e-12);
        assert!((config.spatial.signal_power - 10e-3).abs() < 1e-15);
        assert!((config.radio.packet_bits - 2400.0).abs() < 1e-9);
        assert!((config.radio.bandwidth_hz - 250e3).abs() < 1e-6);
        assert!((config.radio.slot_duration - 1e-3).abs() < 1e-15);
        assert!((config.feedback.ack_bits - 40.0).abs() < 1e-12);
        assert!((config.feedback.ack_duration - 150e-6).abs() < 1e-15);
        assert!((config.analysis.window_radius - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn bare_numbers_are_base_si() {
        let config = from_toml_str("[radio]\nslot_duration = 0.002\n").unwrap();
        assert!((config.radio.slot_duration - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let err = from_toml_str("[radio]\nslot_len = 1\n").unwrap_err();
        assert!(err.to_string().contains("radio.slot_len"), "got: {err}");

        let err = from_toml_str("[radios]\n").unwrap_err();
        assert!(err.to_string().contains("radios"), "got: {err}");
    }

    #[test]
    fn unknown_unit_is_rejected() {
        let err = from_toml_str("[radio]\nslot_duration = \"1 furlong\"\n").unwrap_err();
        assert!(err.to_string().contains("furlong"), "got: {err}");
    }

    #[test]
    fn type_arrays_parse_together() {
        let config = from_toml_str(
            r#"
            [spatial]
            type_fractions = "uniform"
            type_activities = [0.2, 0.4]
            type_powers = ["10 mW", "5 mW"]
            "#,
        )
        .unwrap();
        assert_eq!(config.spatial.types.len(), 2);
        assert!((config.spatial.types[0].fraction - 0.5).abs() < 1e-15);
        assert!((config.spatial.types[1].power - 5e-3).abs() < 1e-15);
    }

    #[test]
    fn partial_type_arrays_are_rejected() {
        let err = from_toml_str("[spatial]\ntype_activities = [0.5]\n").unwrap_err();
        assert!(err.to_string().contains("type_fractions") || err.to_string().contains("type_powers"));
    }

    #[test]
    fn mismatched_type_array_lengths_are_rejected() {
        let err = from_toml_str(
            r#"
            [spatial]
            type_fractions = [0.5, 0.5]
            type_activities = [0.2]
            type_powers = ["10 mW", "5 mW"]
            "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("equal lengths"), "got: {err}");
    }

    #[test]
    fn overrides_patch_and_create_tables() {
        let mut table = Table::new();
        apply_override(&mut table, "radio.fragments", "4").unwrap();
        apply_override(&mut table, "radio.slot_duration", "\"1 ms\"").unwrap();
        apply_override(&mut table, "feedback.fixed_ack_success", "0.7").unwrap();
        apply_override(&mut table, "analysis.average_assignments", "true").unwrap();
        // unquoted strings fall back to plain string values
        apply_override(&mut table, "analysis.latency_metric", "conditional-on-success").unwrap();
        let config = from_table(&table).unwrap();
        assert_eq!(config.radio.fragments, 4);
        assert!((config.radio.slot_duration - 1e-3).abs() < 1e-15);
        assert_eq!(config.feedback.fixed_ack_success, Some(0.7));
        assert!(config.analysis.average_assignments);
        assert_eq!(config.analysis.latency_metric, LatencyMetric::ConditionalOnSuccess);
    }

    #[test]
    fn override_rejects_bad_paths() {
        let mut table = Table::new();
        assert!(apply_override(&mut table, "radio..fragments", "4").is_err());
        apply_override(&mut table, "radio.fragments", "4").unwrap();
        assert!(apply_override(&mut table, "radio.fragments.deep", "4").is_err());
    }

    #[test]
    fn validation_runs_after_parsing() {
        let err = from_toml_str("[radio]\nfragments = 99\n").unwrap_err();
        assert!(err.to_string().contains("deadline"), "got: {err}");
    }

    #[test]
    fn negative_seed_is_rejected() {
        let err = from_toml_str("[analysis]\nseed = -3\n").unwrap_err();
        assert!(err.to_string().contains("analysis.seed"), "got: {err}");
    }
}
