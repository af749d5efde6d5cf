use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use timebin_core::analysis::{ScanSettings, SidePeakSettings};
use timebin_core::engine::ExperimentConfig;
use timebin_core::Diagnostic;

use crate::{CliError, Preset};

/// Everything a preset reads, as one JSON document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub scan: ScanSettings,
    pub power_scan: PowerScanSettings,
    pub sidepeak: SidePeakSettings,
    pub tac: TacSettings,
    pub analytic: AnalyticSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerScanSettings {
    pub mu: Vec<f64>,
}

impl Default for PowerScanSettings {
    fn default() -> Self {
        Self {
            mu: vec![0.02, 0.04, 0.06, 0.08, 0.10, 0.12, 0.14],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TacSettings {
    pub bin_width_ps: u64,
    /// Histogram range; chosen from the geometry when absent.
    pub start_ps: Option<i64>,
    pub end_ps: Option<i64>,
    pub half_width_ps: u64,
    /// Runs this many copies with the pump phase stepped evenly over a full
    /// turn and sums their histograms. Four steps average exactly.
    pub phase_average_points: usize,
}

impl Default for TacSettings {
    fn default() -> Self {
        Self {
            bin_width_ps: 50,
            start_ps: None,
            end_ps: None,
            half_width_ps: 300,
            phase_average_points: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticSettings {
    /// Mean pair numbers for the visibility curve.
    pub mu: Vec<f64>,
}

impl Default for AnalyticSettings {
    fn default() -> Self {
        Self {
            mu: (0..=40).map(|k| k as f64 * 0.005).collect(),
        }
    }
}

const SECTIONS: [&str; 6] = [
    "experiment",
    "scan",
    "power_scan",
    "sidepeak",
    "tac",
    "analytic",
];

impl RunConfig {
    /// Every violated invariant, with fields named by their full path.
    pub fn diagnostics(&self, preset: Option<Preset>) -> Vec<Diagnostic> {
        let mut out: Vec<Diagnostic> = self
            .experiment
            .diagnostics()
            .into_iter()
            .map(|d| Diagnostic {
                field: format!("experiment.{}", d.field),
                ..d
            })
            .collect();
        let simulates = !matches!(preset, Some(Preset::AnalyticTables));
        let budgeted = self.scan.expected_pairs_per_point.is_some();
        if preset.is_some() && simulates && self.experiment.n_pulses == 0 && !budgeted {
            out.push(Diagnostic::new(
                "experiment.n_pulses",
                0,
                "must be positive: the preset simulates at least one pulse",
            ));
        }
        if self.tac.bin_width_ps == 0 {
            out.push(Diagnostic::new("tac.bin_width_ps", 0, "must be positive"));
        }
        if self.tac.phase_average_points == 0 {
            out.push(Diagnostic::new(
                "tac.phase_average_points",
                0,
                "must be at least 1",
            ));
        }
        if self.sidepeak.bin_width_ps == 0 {
            out.push(Diagnostic::new(
                "sidepeak.bin_width_ps",
                0,
                "must be positive",
            ));
        }
        let s = &self.sidepeak.standard_relative_sigma;
        if !(s.is_finite() && *s >= 0.0) {
            out.push(Diagnostic::new(
                "sidepeak.standard_relative_sigma",
                s,
                "must be finite and non-negative",
            ));
        }
        if self.scan.points < 5 {
            out.push(Diagnostic::new(
                "scan.points",
                self.scan.points,
                "a fringe fit needs at least 5 points",
            ));
        }
        if self.scan.half_width_ps == 0 {
            out.push(Diagnostic::new("scan.half_width_ps", 0, "must be positive"));
        }
        for mu in &self.analytic.mu {
            if !(0.0..0.5).contains(mu) {
                out.push(Diagnostic::new("analytic.mu", mu, "must lie in [0, 0.5)"));
            }
        }
        out
    }

    /// Single-line JSON echo written into every output header.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }
}

/// Layers preset defaults, the config file and `key=value` overrides, in
/// that order, and parses the result.
pub fn resolve_config(
    preset: Option<Preset>,
    config_path: Option<&Path>,
    overrides: &[String],
) -> Result<RunConfig, CliError> {
    let mut doc = preset.map_or_else(|| Value::Object(Map::new()), Preset::defaults);
    if let Some(path) = config_path {
        let file = read_config_file(path)?;
        merge(&mut doc, file);
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))
}

fn read_config_file(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let Value::Object(top) = value else {
        return Err(CliError::Config(format!(
            "{}: top level must be a JSON object",
            path.display()
        )));
    };
    Ok(lift_experiment_keys(top))
}

/// Top-level keys outside the known sections belong to `experiment`.
fn lift_experiment_keys(top: Map<String, Value>) -> Value {
    let mut doc = Value::Object(Map::new());
    for (k, v) in top {
        let mut m = Map::new();
        if SECTIONS.contains(&k.as_str()) {
            m.insert(k, v);
        } else {
            let mut inner = Map::new();
            inner.insert(k, v);
            m.insert("experiment".to_string(), Value::Object(inner));
        }
        merge(&mut doc, Value::Object(m));
    }
    doc
}

/// Recursively merges `overlay` into `base`; objects merge, anything else replaces.
pub fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

/// Applies `a.b.c=value`. Keys not starting with a section name are taken
/// relative to `experiment`. The value is parsed as JSON when possible and
/// used as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Usage(format!(
            "override `{assignment}` has an empty key"
        )));
    }
    let mut path: Vec<&str> = key.split('.').collect();
    if !SECTIONS.contains(&path[0]) {
        path.insert(0, "experiment");
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut nested = value;
    for segment in path.iter().rev() {
        let mut m = Map::new();
        m.insert((*segment).to_string(), nested);
        nested = Value::Object(m);
    }
    merge(doc, nested);
    Ok(())
}

/// Diagnostics for a config file on its own, without preset defaults.
pub fn validate_config(path: &Path) -> Result<Vec<Diagnostic>, CliError> {
    let config = resolve_config(None, Some(path), &[])?;
    Ok(config.diagnostics(None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_default_to_experiment_section() {
        let mut doc = Value::Object(Map::new());
        apply_override(&mut doc, "mu=0.1").unwrap();
        apply_override(&mut doc, "bob.delay_ps=30000").unwrap();
        apply_override(&mut doc, "scan.points=8").unwrap();
        apply_override(&mut doc, "pair_source=exactly_one").unwrap();
        let c: RunConfig = serde_json::from_value(doc).unwrap();
        assert_eq!(c.experiment.mu, 0.1);
        assert_eq!(c.experiment.bob.delay_ps, 30_000);
        assert_eq!(c.experiment.bob.gate_width_ps, 50_000);
        assert_eq!(c.scan.points, 8);
        assert_eq!(
            c.experiment.pair_source,
            timebin_core::engine::PairSource::ExactlyOne
        );
    }

    #[test]
    fn malformed_overrides() {
        let mut doc = Value::Object(Map::new());
        assert!(matches!(
            apply_override(&mut doc, "mu"),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            apply_override(&mut doc, "a..b=1"),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = resolve_config(None, None, &["experiment.mew=0.1".to_string()]).unwrap_err();
        assert!(err.to_string().contains("mew"));
    }

    #[test]
    fn echo_round_trips() {
        let c = resolve_config(Some(Preset::Sidepeak), None, &["mu=0.0123".into()]).unwrap();
        let back: RunConfig = serde_json::from_str(&c.echo()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn flat_experiment_keys_are_lifted() {
        let mut top = Map::new();
        top.insert("mu".into(), Value::from(0.2));
        top.insert("scan".into(), serde_json::json!({"points": 7}));
        let c: RunConfig = serde_json::from_value(lift_experiment_keys(top)).unwrap();
        assert_eq!(c.experiment.mu, 0.2);
        assert_eq!(c.scan.points, 7);
    }

    #[test]
    fn default_is_valid() {
        assert!(RunConfig::default().diagnostics(None).is_empty());
    }
}
