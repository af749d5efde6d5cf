use serde::{Deserialize, Serialize};

use crate::analysis::tac::{count_windows, PeakLabel, PeakWindows, TacHistogram, WindowCounts};
use crate::engine::{Detector, EventStream, PairSource};
use crate::error::{invalid, Result};
use crate::pair_stats::{
    estimate_ppair_sidepeak, estimate_ppair_standard, peak_probabilities, side_peak_bias, Measured,
    PairNumberDistribution, PeakProbabilities, PpairEstimate,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SidePeakSettings {
    pub bin_width_ps: u64,
    pub half_width_ps: u64,
    /// Relative uncertainty assumed for Alice's transmission and efficiency
    /// in the singles-rate estimate.
    pub standard_relative_sigma: f64,
}

impl Default for SidePeakSettings {
    fn default() -> Self {
        Self {
            bin_width_ps: 50,
            half_width_ps: 300,
            standard_relative_sigma: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SidePeakMeasurement {
    pub histogram: TacHistogram,
    pub windows: WindowCounts,
    pub main: u64,
    /// Right side peak, one pulse period after the main peak.
    pub side: u64,
    pub left_side: u64,
    /// `side / main` without correction; `None` when the main peak is empty.
    pub raw: Option<PpairEstimate>,
    /// `side / main` divided by the single-pair channel bias; `None` when
    /// the main peak is empty or Bob detects every twin (no side peak).
    pub corrected: Option<PpairEstimate>,
    /// Singles-rate estimate; `None` without Alice clicks.
    pub standard: Option<PpairEstimate>,
    /// Full-series peak probabilities for the configured source.
    pub expected: PeakProbabilities,
}

/// Builds the TAC histogram of a characterization run, counts the main and
/// side peaks and derives the pair-number estimates.
pub fn measure_side_peaks(
    stream: &EventStream,
    settings: &SidePeakSettings,
) -> Result<SidePeakMeasurement> {
    let c = &stream.config;
    let w = settings.bin_width_ps;
    if w == 0 {
        return Err(invalid("bin_width_ps", "must be positive"));
    }
    let reach = (3 * c.pulse_period_ps / 2).div_ceil(w) * w;
    let histogram = TacHistogram::build(stream, w, -(reach as i64), reach as i64)?;
    let windows = count_windows(
        &histogram,
        &PeakWindows::side_peaks(c.pulse_period_ps, settings.half_width_ps)?,
    )?;
    let main = windows.get(PeakLabel::Central).unwrap_or(0);
    let side = windows.get(PeakLabel::RightSide).unwrap_or(0);
    let left_side = windows.get(PeakLabel::LeftSide).unwrap_or(0);
    let bob = c.bob.channel();
    let (raw, corrected) = if main == 0 {
        (None, None)
    } else {
        let raw = estimate_ppair_sidepeak(main, side, None)?;
        let corrected = if side_peak_bias(&bob) > 0.0 {
            Some(estimate_ppair_sidepeak(main, side, Some(&bob))?)
        } else {
            None
        };
        (Some(raw), corrected)
    };

    let singles = stream.count(Detector::Alice) as f64;
    let standard = if singles > 0.0 && stream.duration_s() > 0.0 {
        let rel = settings.standard_relative_sigma;
        Some(estimate_ppair_standard(
            singles / stream.duration_s(),
            Measured::new(c.alice.transmission, rel * c.alice.transmission),
            Measured::new(c.alice.efficiency, rel * c.alice.efficiency),
            c.pulse_rate_hz(),
        )?)
    } else {
        None
    };

    let dist = match c.pair_source {
        PairSource::Poisson => PairNumberDistribution::poisson(c.mu)?,
        PairSource::ExactlyOne => PairNumberDistribution::from_probabilities(vec![0.0, 1.0])?,
    };
    let expected = peak_probabilities(&dist, &c.alice.channel(), &bob);
    Ok(SidePeakMeasurement {
        histogram,
        windows,
        main,
        side,
        left_side,
        raw,
        corrected,
        standard,
        expected,
    })
}
