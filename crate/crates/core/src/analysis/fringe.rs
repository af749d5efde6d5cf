use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::analysis::coincidence::{
    triple_coincidence_counts, twofold_coincidence_counts, AccidentalMethod, CoincidenceCounts,
};
use crate::analysis::tac::{PeakLabel, PeakWindow};
use crate::engine::{derive_seed, simulate_run_with, ExperimentConfig, PairSource, SimOptions};
use crate::error::{invalid, Error, Result};

/// One phase point of a fringe scan. Counts are real-valued so that
/// expected-value scans can be fitted as well as measured ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeSample {
    pub phase: f64,
    pub counts: f64,
    pub accidentals: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FringeScan {
    samples: Vec<FringeSample>,
}

/// Fewest phase points accepted by a fringe fit.
pub const MIN_SCAN_POINTS: usize = 5;
/// Smallest phase span (max minus min) accepted by a fringe fit.
pub const MIN_SCAN_SPAN: f64 = 1.5 * PI;

impl FringeScan {
    pub fn new(samples: Vec<FringeSample>) -> Result<Self> {
        if samples.len() < MIN_SCAN_POINTS {
            return Err(invalid(
                "scan",
                format!(
                    "{} points given, at least {MIN_SCAN_POINTS} needed",
                    samples.len()
                ),
            ));
        }
        for s in &samples {
            if !s.phase.is_finite() {
                return Err(invalid("scan", "phases must be finite"));
            }
            if !(s.counts >= 0.0 && s.accidentals >= 0.0) {
                return Err(invalid("scan", "counts must be non-negative"));
            }
        }
        let lo = samples
            .iter()
            .map(|s| s.phase)
            .fold(f64::INFINITY, f64::min);
        let hi = samples
            .iter()
            .map(|s| s.phase)
            .fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < MIN_SCAN_SPAN {
            return Err(invalid(
                "scan",
                format!("phases span {:.3} rad, at least 1.5 pi needed", hi - lo),
            ));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[FringeSample] {
        &self.samples
    }
}

/// `y = mean * (1 - visibility * cos(x - phase_offset))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit {
    pub mean: f64,
    pub visibility: f64,
    pub phase_offset: f64,
    pub sigma_visibility: f64,
}

impl SinusoidFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.mean * (1.0 - self.visibility * (x - self.phase_offset).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityFit {
    pub raw_v: f64,
    pub net_v: f64,
    /// Phase of the fringe minimum along the scanned variable, in `(-pi, pi]`.
    pub phase_offset: f64,
    /// Mean accidental-subtracted count per point.
    pub amplitude: f64,
    pub sigma_v: f64,
    pub raw_sigma_v: f64,
}

const IRLS_ITERATIONS: usize = 4;

/// Weighted least-squares fit on the basis `(1, cos x, sin x)`, reweighted
/// with Poisson variances `max(prediction + extra, 1)`.
pub fn fit_sinusoid(phases: &[f64], values: &[f64], extra_variance: &[f64]) -> Result<SinusoidFit> {
    let n = phases.len();
    if values.len() != n || extra_variance.len() != n {
        return Err(invalid(
            "values",
            "phases, values and variances differ in length",
        ));
    }
    let rows: Vec<Vector3<f64>> = phases
        .iter()
        .map(|&x| Vector3::new(1.0, x.cos(), x.sin()))
        .collect();
    let solve = |weights: &[f64]| -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let mut xtwx = Matrix3::zeros();
        let mut xtwy = Vector3::zeros();
        for ((r, &y), &w) in rows.iter().zip(values).zip(weights) {
            xtwx += w * r * r.transpose();
            xtwy += w * y * r;
        }
        let cov = xtwx
            .try_inverse()
            .ok_or_else(|| Error::FitFailed("design matrix is singular".into()))?;
        Ok((cov * xtwy, cov))
    };

    let mut weights = vec![1.0; n];
    let (mut beta, mut cov) = solve(&weights)?;
    for _ in 0..IRLS_ITERATIONS {
        for ((w, r), &extra) in weights.iter_mut().zip(&rows).zip(extra_variance) {
            *w = 1.0 / (r.dot(&beta) + extra).max(1.0);
        }
        (beta, cov) = solve(&weights)?;
    }

    let (a, b, c) = (beta[0], beta[1], beta[2]);
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::FitFailed(format!("fitted mean {a} is not positive")));
    }
    let r = b.hypot(c);
    let visibility = r / a;
    let phase_offset = if r > 0.0 { (-c).atan2(-b) } else { 0.0 };
    let grad = if r > 0.0 {
        Vector3::new(-visibility / a, b / (a * r), c / (a * r))
    } else {
        Vector3::new(0.0, 1.0 / a, 0.0)
    };
    let sigma_visibility = (grad.transpose() * cov * grad)[0].max(0.0).sqrt();
    Ok(SinusoidFit {
        mean: a,
        visibility,
        phase_offset,
        sigma_visibility,
    })
}

/// Fits raw counts and accidental-subtracted counts.
pub fn fit_fringe(scan: &FringeScan) -> Result<VisibilityFit> {
    let phases: Vec<f64> = scan.samples.iter().map(|s| s.phase).collect();
    let raw: Vec<f64> = scan.samples.iter().map(|s| s.counts).collect();
    let net: Vec<f64> = scan
        .samples
        .iter()
        .map(|s| s.counts - s.accidentals)
        .collect();
    let zero = vec![0.0; phases.len()];
    let twice_acc: Vec<f64> = scan.samples.iter().map(|s| 2.0 * s.accidentals).collect();
    let raw_fit = fit_sinusoid(&phases, &raw, &zero)?;
    let net_fit = fit_sinusoid(&phases, &net, &twice_acc)?;
    Ok(VisibilityFit {
        raw_v: raw_fit.visibility,
        net_v: net_fit.visibility,
        phase_offset: net_fit.phase_offset,
        amplitude: net_fit.mean,
        sigma_v: net_fit.sigma_visibility,
        raw_sigma_v: raw_fit.sigma_visibility,
    })
}

/// Which phase a scan sweeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScannedPhase {
    Pump,
    #[default]
    Alice,
    Bob,
}

impl ScannedPhase {
    /// Fringe minimum position along the scanned phase for the fixed phases
    /// of `config`.
    pub fn expected_offset(self, config: &ExperimentConfig) -> f64 {
        let p = &config.phases;
        crate::analytic::wrap_phase(match self {
            ScannedPhase::Alice => p.pump - p.bob,
            ScannedPhase::Bob => p.pump - p.alice,
            ScannedPhase::Pump => p.alice + p.bob,
        })
    }

    fn apply(self, config: &mut ExperimentConfig, phase: f64) {
        match self {
            ScannedPhase::Pump => config.phases.pump = phase,
            ScannedPhase::Alice => config.phases.alice = phase,
            ScannedPhase::Bob => config.phases.bob = phase,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSettings {
    pub points: usize,
    pub scanned: ScannedPhase,
    pub half_width_ps: u64,
    pub accidentals: AccidentalMethod,
    /// When set, each point runs `ceil(pairs / mu)` pulses instead of
    /// `n_pulses`, keeping the statistical weight constant across `mu`.
    pub expected_pairs_per_point: Option<f64>,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            points: 12,
            scanned: ScannedPhase::Alice,
            half_width_ps: 300,
            accidentals: AccidentalMethod::OffPeak,
            expected_pairs_per_point: None,
        }
    }
}

impl ScanSettings {
    fn pulses_for(&self, config: &ExperimentConfig) -> Result<u64> {
        match self.expected_pairs_per_point {
            None => Ok(config.n_pulses),
            Some(pairs) if pairs > 0.0 && pairs.is_finite() => Ok(match config.pair_source {
                PairSource::ExactlyOne => pairs.ceil() as u64,
                PairSource::Poisson if config.mu > 0.0 => (pairs / config.mu).ceil() as u64,
                PairSource::Poisson => {
                    return Err(invalid("mu", "a pair budget needs a positive mu"))
                }
            }),
            Some(pairs) => Err(invalid(
                "expected_pairs_per_point",
                format!("must be positive, got {pairs}"),
            )),
        }
    }

    pub fn central_window(&self) -> PeakWindow {
        PeakWindow::new(PeakLabel::Central, 0, self.half_width_ps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub phase: f64,
    pub theta: f64,
    pub n_pulses: u64,
    pub seed: u64,
    /// Middle-slot (postselected) coincidences.
    pub triple: CoincidenceCounts,
    /// Coincidences over all Alice clicks.
    pub twofold: CoincidenceCounts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FringeScanResult {
    pub points: Vec<ScanPoint>,
}

impl FringeScanResult {
    fn scan(&self, pick: impl Fn(&ScanPoint) -> CoincidenceCounts) -> Result<FringeScan> {
        FringeScan::new(
            self.points
                .iter()
                .map(|p| {
                    let c = pick(p);
                    FringeSample {
                        phase: p.phase,
                        counts: c.coincidences as f64,
                        accidentals: c.accidentals as f64,
                    }
                })
                .collect(),
        )
    }

    pub fn triple_scan(&self) -> Result<FringeScan> {
        self.scan(|p| p.triple)
    }

    pub fn twofold_scan(&self) -> Result<FringeScan> {
        self.scan(|p| p.twofold)
    }
}

/// Simulates one run per phase point, evenly spaced over `[0, 2 pi)`, each
/// with its own derived seed.
pub fn run_fringe_scan(
    base: &ExperimentConfig,
    settings: &ScanSettings,
    options: &SimOptions,
) -> Result<FringeScanResult> {
    if settings.points < MIN_SCAN_POINTS {
        return Err(invalid(
            "points",
            format!(
                "{} phase points, at least {MIN_SCAN_POINTS} needed",
                settings.points
            ),
        ));
    }
    if !base.geometry().is_franson() {
        return Err(invalid(
            "geometry",
            "a fringe scan needs the pump interferometer and both analyzers",
        ));
    }
    let n_pulses = settings.pulses_for(base)?;
    if n_pulses == 0 {
        return Err(invalid(
            "n_pulses",
            "a fringe scan needs at least one pulse per point",
        ));
    }
    let window = settings.central_window();
    let options = SimOptions {
        record_ground_truth: false,
        ..options.clone()
    };
    let mut points = Vec::with_capacity(settings.points);
    for k in 0..settings.points {
        let phase = TAU * k as f64 / settings.points as f64;
        let mut config = base.clone();
        settings.scanned.apply(&mut config, phase);
        config.n_pulses = n_pulses;
        config.seed = derive_seed(base.seed, k as u64);
        let stream = simulate_run_with(&config, &options)?;
        points.push(ScanPoint {
            phase,
            theta: config.phases.theta(),
            n_pulses,
            seed: config.seed,
            triple: triple_coincidence_counts(&stream, &window, settings.accidentals)?,
            twofold: twofold_coincidence_counts(&stream, &window, settings.accidentals)?,
        });
    }
    Ok(FringeScanResult { points })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub mu: f64,
    pub n_pulses: u64,
    pub fit: VisibilityFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerScanResult {
    pub points: Vec<PowerPoint>,
    /// Ordinary least-squares line through `(mu, net_v)`.
    pub slope: f64,
    pub intercept: f64,
    pub sigma_slope: f64,
    pub sigma_intercept: f64,
}

/// Largest mean pair number accepted by a power scan.
pub const MAX_POWER_SCAN_MU: f64 = 0.2;

/// Runs a postselected fringe scan at each `mu` and fits the net visibility
/// linearly in `mu`.
pub fn power_scan_visibility(
    mu_list: &[f64],
    base: &ExperimentConfig,
    settings: &ScanSettings,
    options: &SimOptions,
) -> Result<PowerScanResult> {
    if mu_list.len() < 2 {
        return Err(invalid(
            "mu_list",
            "at least two values needed for a line fit",
        ));
    }
    if let Some(mu) = mu_list
        .iter()
        .find(|&&m| !(m > 0.0 && m <= MAX_POWER_SCAN_MU))
    {
        return Err(invalid(
            "mu_list",
            format!("{mu} is outside (0, {MAX_POWER_SCAN_MU}]"),
        ));
    }
    if base.pair_source != PairSource::Poisson {
        return Err(invalid(
            "pair_source",
            "a power scan needs a Poisson source",
        ));
    }
    let mut points = Vec::with_capacity(mu_list.len());
    for (k, &mu) in mu_list.iter().enumerate() {
        let config = ExperimentConfig {
            mu,
            seed: derive_seed(base.seed ^ 0x5ca1_ab1e, k as u64),
            ..base.clone()
        };
        let scan = run_fringe_scan(&config, settings, options)?;
        let fit = fit_fringe(&scan.triple_scan()?)?;
        points.push(PowerPoint {
            mu,
            n_pulses: scan.points[0].n_pulses,
            fit,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.mu).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.fit.net_v).collect();
    let line = linear_fit(&xs, &ys)?;
    Ok(PowerScanResult {
        points,
        slope: line.slope,
        intercept: line.intercept,
        sigma_slope: line.sigma_slope,
        sigma_intercept: line.sigma_intercept,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard errors from the residual scatter; zero with two points.
    pub sigma_slope: f64,
    pub sigma_intercept: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len();
    if n != ys.len() || n < 2 {
        return Err(invalid(
            "xs",
            "need at least two (x, y) pairs of equal length",
        ));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("xs", "all x values are equal"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (sigma_slope, sigma_intercept) = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        let s2 = rss / (nf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(LinearFit {
        slope,
        intercept,
        sigma_slope,
        sigma_intercept,
    })
}
