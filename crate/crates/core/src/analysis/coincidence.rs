use serde::{Deserialize, Serialize};

use crate::analysis::tac::PeakWindow;
use crate::engine::{Detector, EventStream};
use crate::error::{invalid, Result};

/// Where the accidental-coincidence reference window sits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccidentalMethod {
    /// Half a pulse period from the signal window, where no photon pairs
    /// can coincide: measures dark-count and noise accidentals only.
    #[default]
    OffPeak,
    /// One full pulse period away: also counts photons from different
    /// pulses, which for a Poisson source includes the multi-pair background.
    ShiftedPulse,
}

impl AccidentalMethod {
    pub fn shift_ps(self, pulse_period_ps: u64) -> i64 {
        match self {
            AccidentalMethod::OffPeak => pulse_period_ps as i64 / 2,
            AccidentalMethod::ShiftedPulse => pulse_period_ps as i64,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceCounts {
    pub coincidences: u64,
    pub accidentals: u64,
    /// Alice clicks that opened a coincidence test.
    pub starts: u64,
}

/// Counts starts with at least one stop in `[s + low, s + high)` for the
/// signal window and for the accidental reference window.
fn count_with(
    starts: &[i64],
    stops: &[i64],
    window: &PeakWindow,
    accidental_shift: i64,
) -> CoincidenceCounts {
    let hit = |s: i64, w: &PeakWindow| {
        let lo = s + w.low_ps();
        let k = stops.partition_point(|&t| t < lo);
        k < stops.len() && stops[k] < s + w.high_ps()
    };
    let reference = window.shifted(accidental_shift);
    let mut counts = CoincidenceCounts {
        starts: starts.len() as u64,
        ..Default::default()
    };
    for &s in starts {
        counts.coincidences += hit(s, window) as u64;
        counts.accidentals += hit(s, &reference) as u64;
    }
    counts
}

/// Two-fold coincidences between every Alice click and Bob.
pub fn twofold_coincidence_counts(
    stream: &EventStream,
    window: &PeakWindow,
    accidentals: AccidentalMethod,
) -> Result<CoincidenceCounts> {
    let starts = stream.corrected_times(Detector::Alice);
    let stops = stream.corrected_times(Detector::Bob);
    Ok(count_with(
        &starts,
        &stops,
        window,
        accidentals.shift_ps(stream.config.pulse_period_ps),
    ))
}

/// Coincidences between Alice clicks in the middle time slot and Bob.
///
/// An Alice click is in the middle slot when its time after the pulse,
/// modulo the pulse period, lies within the window half width of one bin
/// separation. Only the interferometric geometry is meaningful.
pub fn triple_coincidence_counts(
    stream: &EventStream,
    window: &PeakWindow,
    accidentals: AccidentalMethod,
) -> Result<CoincidenceCounts> {
    let config = &stream.config;
    if !config.geometry().is_franson() {
        return Err(invalid(
            "stream",
            "triple coincidences need the pump interferometer and both analyzers",
        ));
    }
    let period = config.pulse_period_ps as i64;
    let sep = config.bin_separation_ps as i64;
    let hw = window.half_width_ps as i64;
    let starts: Vec<i64> = stream
        .corrected_times(Detector::Alice)
        .into_iter()
        .filter(|t| {
            let offset = t.rem_euclid(period) - sep;
            (-hw..hw).contains(&offset)
        })
        .collect();
    let stops = stream.corrected_times(Detector::Bob);
    Ok(count_with(
        &starts,
        &stops,
        window,
        accidentals.shift_ps(config.pulse_period_ps),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::tac::PeakLabel;
    use crate::engine::{DetectionEvent, ExperimentConfig, Origin};

    fn event(time_ps: u64, detector: Detector) -> DetectionEvent {
        DetectionEvent {
            time_ps,
            detector,
            origin: Origin::Photon,
            pulse_index: 0,
            bin_index: None,
        }
    }

    #[test]
    fn postselects_middle_slot() {
        let config = ExperimentConfig::default();
        let d = config.bob.delay_ps;
        let p = config.pulse_period_ps;
        let stream = EventStream {
            events: vec![
                event(1200, Detector::Alice),
                event(1200 + d, Detector::Bob),
                event(p, Detector::Alice),
                event(p + d, Detector::Bob),
                event(2 * p + 1200, Detector::Alice),
                event(2 * p + 1200 + d + p / 2, Detector::Bob),
            ],
            config,
            ground_truth: None,
        };
        let w = PeakWindow::new(PeakLabel::Central, 0, 300);
        let triple = triple_coincidence_counts(&stream, &w, AccidentalMethod::OffPeak).unwrap();
        assert_eq!(
            triple,
            CoincidenceCounts {
                coincidences: 1,
                accidentals: 1,
                starts: 2
            }
        );
        let twofold = twofold_coincidence_counts(&stream, &w, AccidentalMethod::OffPeak).unwrap();
        assert_eq!(twofold.coincidences, 2);
        assert_eq!(twofold.starts, 3);
    }

    #[test]
    fn rejects_characterization_geometry() {
        let stream = EventStream {
            config: ExperimentConfig::characterization(),
            events: vec![],
            ground_truth: None,
        };
        let w = PeakWindow::new(PeakLabel::Central, 0, 300);
        assert!(triple_coincidence_counts(&stream, &w, AccidentalMethod::OffPeak).is_err());
    }
}
