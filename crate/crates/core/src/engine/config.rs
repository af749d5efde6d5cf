use serde::{de, Deserialize, Deserializer, Serialize};

use crate::analytic::{Geometry, PhaseSetting};
use crate::engine::BLOCK_PULSES;
use crate::error::{Diagnostic, Error, Result};
use crate::pair_stats::ChannelParams;

/// How many pairs a pulse carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    /// Poisson-distributed with mean `mu`.
    #[default]
    Poisson,
    /// Exactly one pair in every pulse; `mu` is ignored.
    ExactlyOne,
}

/// One detection arm: losses, filter, detector and timing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Label only.
    pub wavelength_nm: f64,
    pub transmission: f64,
    pub efficiency: f64,
    pub filter_pass: f64,
    /// Only read on Bob's arm: pass probability given Alice's twin passed.
    pub filter_pass_given_twin: f64,
    /// Hz when free-running, probability per ns while the gate is open when gated.
    pub dark_rate: f64,
    pub gated: bool,
    /// Gate opening relative to the triggering Alice click. `None` centres
    /// the gate on the twin photon's arrival.
    pub gate_offset_ps: Option<i64>,
    pub gate_width_ps: u64,
    /// Fixed fibre and electronics delay added to every photon timestamp.
    pub delay_ps: u64,
    pub dead_time_ps: u64,
    /// Gaussian timing jitter (standard deviation).
    pub jitter_ps: f64,
}

impl DetectorConfig {
    /// Free-running Germanium APD at 1310 nm.
    pub fn alice_default() -> Self {
        Self {
            wavelength_nm: 1310.0,
            transmission: 0.3,
            efficiency: 0.09,
            filter_pass: 1.0,
            filter_pass_given_twin: 1.0,
            dark_rate: 20e3,
            gated: false,
            gate_offset_ps: None,
            gate_width_ps: 0,
            delay_ps: 0,
            dead_time_ps: 0,
            jitter_ps: 0.0,
        }
    }

    /// InGaAs APD at 1550 nm, gated by Alice's clicks.
    pub fn bob_default() -> Self {
        Self {
            wavelength_nm: 1550.0,
            transmission: 0.3,
            efficiency: 0.3,
            filter_pass: 1.0,
            filter_pass_given_twin: 1.0,
            dark_rate: 1e-4,
            gated: true,
            gate_offset_ps: None,
            gate_width_ps: 50_000,
            delay_ps: 25_000,
            dead_time_ps: 0,
            jitter_ps: 0.0,
        }
    }

    /// Ideal arm: every photon reaching the `-` port clicks, no noise.
    pub fn lossless(&self) -> Self {
        Self {
            transmission: 1.0,
            efficiency: 1.0,
            filter_pass: 1.0,
            filter_pass_given_twin: 1.0,
            dark_rate: 0.0,
            ..self.clone()
        }
    }

    pub fn channel(&self) -> ChannelParams {
        ChannelParams {
            transmission: self.transmission,
            efficiency: self.efficiency,
            filter_pass: self.filter_pass,
            filter_pass_given_twin: self.filter_pass_given_twin,
        }
    }

    /// Dark count rate per picosecond.
    pub fn dark_rate_per_ps(&self) -> f64 {
        if self.gated {
            self.dark_rate / 1e3
        } else {
            self.dark_rate / 1e12
        }
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::alice_default()
    }
}

/// Every physical parameter of a run, plus the RNG seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label only.
    pub pump_wavelength_nm: f64,
    pub pulse_period_ps: u64,
    pub bin_separation_ps: u64,
    pub n_pulses: u64,
    pub mu: f64,
    pub pair_source: PairSource,
    pub phases: PhaseSetting,
    pub pump_interferometer: bool,
    pub analyzers: bool,
    pub intrinsic_visibility: f64,
    #[serde(deserialize_with = "alice_arm")]
    pub alice: DetectorConfig,
    #[serde(deserialize_with = "bob_arm")]
    pub bob: DetectorConfig,
    pub seed: u64,
}

/// Fills fields missing from a partial arm object from that arm's own
/// defaults rather than from `DetectorConfig::default()`.
fn overlay_arm<'de, D: Deserializer<'de>>(
    d: D,
    base: DetectorConfig,
) -> std::result::Result<DetectorConfig, D::Error> {
    let patch = serde_json::Value::deserialize(d)?;
    let serde_json::Value::Object(patch) = patch else {
        return Err(de::Error::custom("detector settings must be an object"));
    };
    let mut full = serde_json::to_value(base).map_err(de::Error::custom)?;
    if let serde_json::Value::Object(f) = &mut full {
        f.extend(patch);
    }
    serde_json::from_value(full).map_err(de::Error::custom)
}

fn alice_arm<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DetectorConfig, D::Error> {
    overlay_arm(d, DetectorConfig::alice_default())
}

fn bob_arm<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DetectorConfig, D::Error> {
    overlay_arm(d, DetectorConfig::bob_default())
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pump_wavelength_nm: 710.0,
            pulse_period_ps: 13_158,
            bin_separation_ps: 1_200,
            n_pulses: 1_000_000,
            mu: 0.05,
            pair_source: PairSource::Poisson,
            phases: PhaseSetting::default(),
            pump_interferometer: true,
            analyzers: true,
            intrinsic_visibility: 1.0,
            alice: DetectorConfig::alice_default(),
            bob: DetectorConfig::bob_default(),
            seed: 0x7153_2002,
        }
    }
}

impl ExperimentConfig {
    /// Bare-crystal geometry used to measure pairs per pulse.
    pub fn characterization() -> Self {
        Self {
            pump_interferometer: false,
            analyzers: false,
            ..Self::default()
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            pump_interferometer: self.pump_interferometer,
            analyzers: self.analyzers,
        }
    }

    /// Lossless, noiseless copy of this configuration.
    pub fn lossless(&self) -> Self {
        Self {
            alice: self.alice.lossless(),
            bob: self.bob.lossless(),
            ..self.clone()
        }
    }

    pub fn pulse_rate_hz(&self) -> f64 {
        1e12 / self.pulse_period_ps as f64
    }

    /// Bob's arrival delay relative to Alice's, subtracted by the TAC.
    pub fn relative_delay_ps(&self) -> i64 {
        self.bob.delay_ps as i64 - self.alice.delay_ps as i64
    }

    /// Gate opening time relative to the triggering Alice click.
    pub fn gate_offset_ps(&self) -> i64 {
        self.bob
            .gate_offset_ps
            .unwrap_or_else(|| self.relative_delay_ps() - self.bob.gate_width_ps as i64 / 2)
    }

    /// Probability that Bob's photon passes its filter when Alice's twin was
    /// blocked, chosen so Bob's marginal pass probability is `bob.filter_pass`.
    pub fn bob_filter_pass_given_twin_blocked(&self) -> Option<f64> {
        let pa = self.alice.filter_pass;
        if pa >= 1.0 {
            return None;
        }
        Some((self.bob.filter_pass - pa * self.bob.filter_pass_given_twin) / (1.0 - pa))
    }

    /// Every violated invariant; empty when the configuration is valid.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut check = |ok: bool, field: &str, value: String, rule: &str| {
            if !ok {
                out.push(Diagnostic::new(field, value, rule));
            }
        };

        check(
            self.pulse_period_ps > 0,
            "pulse_period_ps",
            self.pulse_period_ps.to_string(),
            "must be positive",
        );
        check(
            self.bin_separation_ps > 0,
            "bin_separation_ps",
            self.bin_separation_ps.to_string(),
            "must be positive",
        );
        check(
            2 * self.bin_separation_ps < self.pulse_period_ps,
            "bin_separation_ps",
            self.bin_separation_ps.to_string(),
            &format!(
                "must be below half the pulse period ({} ps) so peaks do not alias",
                self.pulse_period_ps
            ),
        );
        check(
            self.n_pulses <= (i64::MAX as u64) / self.pulse_period_ps.max(1) / 2,
            "n_pulses",
            self.n_pulses.to_string(),
            "run duration overflows the picosecond clock",
        );
        check(
            self.mu.is_finite() && (0.0..0.5).contains(&self.mu),
            "mu",
            self.mu.to_string(),
            "mean pairs per pulse must lie in [0, 0.5)",
        );
        check(
            self.phases.is_finite(),
            "phases",
            format!("{:?}", self.phases),
            "all phases must be finite",
        );
        check(
            (0.0..=1.0).contains(&self.intrinsic_visibility),
            "intrinsic_visibility",
            self.intrinsic_visibility.to_string(),
            "must lie in [0, 1]",
        );

        for (name, det) in [("alice", &self.alice), ("bob", &self.bob)] {
            for (field, value) in [
                ("transmission", det.transmission),
                ("efficiency", det.efficiency),
                ("filter_pass", det.filter_pass),
                ("filter_pass_given_twin", det.filter_pass_given_twin),
            ] {
                check(
                    (0.0..=1.0).contains(&value),
                    &format!("{name}.{field}"),
                    value.to_string(),
                    "probability must lie in [0, 1]",
                );
            }
            check(
                det.dark_rate.is_finite() && det.dark_rate >= 0.0,
                &format!("{name}.dark_rate"),
                det.dark_rate.to_string(),
                "must be finite and non-negative",
            );
            check(
                det.jitter_ps.is_finite() && det.jitter_ps >= 0.0,
                &format!("{name}.jitter_ps"),
                det.jitter_ps.to_string(),
                "must be finite and non-negative",
            );
        }
        check(
            !self.alice.gated,
            "alice.gated",
            "true".to_string(),
            "Alice's detector is free-running; only Bob can be gated",
        );
        if self.bob.gated {
            let offset = self.gate_offset_ps();
            check(
                offset >= 0,
                "bob.gate_offset_ps",
                offset.to_string(),
                "gates open only after the triggering Alice click (increase bob.delay_ps or set a non-negative offset)",
            );
            let reach = offset.unsigned_abs() + self.bob.gate_width_ps;
            check(
                reach < BLOCK_PULSES * self.pulse_period_ps,
                "bob.gate_width_ps",
                self.bob.gate_width_ps.to_string(),
                "gate reaches beyond the simulation block span",
            );
        }
        let delay_span = self.alice.delay_ps.max(self.bob.delay_ps);
        check(
            delay_span < BLOCK_PULSES * self.pulse_period_ps,
            "delay_ps",
            delay_span.to_string(),
            "detector delay exceeds the simulation block span",
        );
        match self.bob_filter_pass_given_twin_blocked() {
            Some(p) => check(
                (-1e-12..=1.0 + 1e-12).contains(&p),
                "bob.filter_pass_given_twin",
                self.bob.filter_pass_given_twin.to_string(),
                "inconsistent with alice.filter_pass and bob.filter_pass (no valid joint filter distribution)",
            ),
            None => check(
                (self.bob.filter_pass - self.bob.filter_pass_given_twin).abs() <= 1e-12,
                "bob.filter_pass_given_twin",
                self.bob.filter_pass_given_twin.to_string(),
                "must equal bob.filter_pass when Alice's filter always passes",
            ),
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let diagnostics = self.diagnostics();
        if diagnostics.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(diagnostics))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(c: &ExperimentConfig) -> Vec<String> {
        c.diagnostics().into_iter().map(|d| d.field).collect()
    }

    #[test]
    fn default_is_valid() {
        assert!(ExperimentConfig::default().diagnostics().is_empty());
        assert!(ExperimentConfig::characterization()
            .diagnostics()
            .is_empty());
        assert!(ExperimentConfig::default()
            .lossless()
            .diagnostics()
            .is_empty());
    }

    #[test]
    fn gate_is_centred_on_twin() {
        let c = ExperimentConfig::default();
        assert_eq!(c.relative_delay_ps(), 25_000);
        assert_eq!(c.gate_offset_ps(), 0);
    }

    #[test]
    fn mu_out_of_range() {
        let c = ExperimentConfig {
            mu: 0.9,
            ..Default::default()
        };
        assert_eq!(fields(&c), vec!["mu"]);
    }

    #[test]
    fn aliasing_bins() {
        let c = ExperimentConfig {
            bin_separation_ps: 7000,
            ..Default::default()
        };
        let d = c.diagnostics();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "bin_separation_ps");
        assert_eq!(d[0].value, "7000");
        assert!(d[0].rule.contains("alias"));
    }

    #[test]
    fn early_gate_rejected() {
        let mut c = ExperimentConfig::default();
        c.bob.gate_width_ps = 80_000;
        assert_eq!(fields(&c), vec!["bob.gate_offset_ps"]);
    }

    #[test]
    fn inconsistent_filters_rejected() {
        let mut c = ExperimentConfig::default();
        c.bob.filter_pass = 0.5;
        assert_eq!(fields(&c), vec!["bob.filter_pass_given_twin"]);
        c.alice.filter_pass = 0.5;
        assert!(c.diagnostics().is_empty());
        assert_eq!(c.bob_filter_pass_given_twin_blocked(), Some(0.0));
    }

    #[test]
    fn probability_fields_checked() {
        let mut c = ExperimentConfig::default();
        c.alice.efficiency = 1.5;
        c.bob.transmission = -0.1;
        let f = fields(&c);
        assert!(f.contains(&"alice.efficiency".to_string()));
        assert!(f.contains(&"bob.transmission".to_string()));
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let c = ExperimentConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"mew": 0.1}"#).is_err());
        let partial: ExperimentConfig = serde_json::from_str(r#"{"mu": 0.1}"#).unwrap();
        assert_eq!(partial.mu, 0.1);
        assert_eq!(partial.pulse_period_ps, 13_158);
        let arm: ExperimentConfig =
            serde_json::from_str(r#"{"bob": {"delay_ps": 30000}}"#).unwrap();
        assert_eq!(arm.bob.delay_ps, 30_000);
        assert_eq!(arm.bob.gate_width_ps, 50_000);
        assert!(arm.bob.gated);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bob": {"dleay_ps": 1}}"#).is_err());
    }
}
