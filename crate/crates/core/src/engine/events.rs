use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::engine::config::ExperimentConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Detector {
    Alice,
    Bob,
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Detector::Alice => "alice",
            Detector::Bob => "bob",
        })
    }
}

impl FromStr for Detector {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "alice" => Ok(Detector::Alice),
            "bob" => Ok(Detector::Bob),
            other => Err(format!("unknown detector `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Photon,
    Dark,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Photon => "photon",
            Origin::Dark => "dark",
        })
    }
}

impl FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "photon" => Ok(Origin::Photon),
            "dark" => Ok(Origin::Dark),
            other => Err(format!("unknown origin `{other}`")),
        }
    }
}

/// A recorded click. `pulse_index` is the pulse the photon was emitted in,
/// or for dark counts the pulse period the click falls into.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DetectionEvent {
    pub time_ps: u64,
    pub detector: Detector,
    pub origin: Origin,
    pub pulse_index: u64,
    /// Time bin of the photon; `None` for dark counts.
    pub bin_index: Option<u8>,
}

/// Pulses that carried at least one pair, with their pair counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PairTally {
    entries: Vec<(u64, u32)>,
}

impl PairTally {
    pub(crate) fn from_entries(entries: Vec<(u64, u32)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        Self { entries }
    }

    /// `(pulse_index, pairs)` for every non-empty pulse, in pulse order.
    pub fn entries(&self) -> &[(u64, u32)] {
        &self.entries
    }

    pub fn pairs_in_pulse(&self, pulse: u64) -> u32 {
        self.entries
            .binary_search_by_key(&pulse, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn total_pairs(&self) -> u64 {
        self.entries.iter().map(|e| e.1 as u64).sum()
    }

    /// Number of pulses carrying exactly `n` pairs, out of `n_pulses`.
    pub fn pulses_with(&self, n: u32, n_pulses: u64) -> u64 {
        if n == 0 {
            n_pulses - self.entries.len() as u64
        } else {
            self.entries.iter().filter(|e| e.1 == n).count() as u64
        }
    }
}

/// Output of one simulated run.
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    pub config: ExperimentConfig,
    /// Sorted by time, Alice before Bob on ties.
    pub events: Vec<DetectionEvent>,
    /// Per-pulse pair numbers; absent when the run did not record them.
    pub ground_truth: Option<PairTally>,
}

const FORMAT_LINE: &str = "# timebin-lab event stream v1";
const COLUMNS_LINE: &str = "# columns: time_ps detector origin pulse_index bin_index";

impl EventStream {
    pub fn detector_events(&self, detector: Detector) -> impl Iterator<Item = &DetectionEvent> {
        self.events.iter().filter(move |e| e.detector == detector)
    }

    pub fn count(&self, detector: Detector) -> usize {
        self.detector_events(detector).count()
    }

    /// Click times with the detector's fixed delay removed, ascending.
    pub fn corrected_times(&self, detector: Detector) -> Vec<i64> {
        let delay = match detector {
            Detector::Alice => self.config.alice.delay_ps,
            Detector::Bob => self.config.bob.delay_ps,
        } as i64;
        self.detector_events(detector)
            .map(|e| e.time_ps as i64 - delay)
            .collect()
    }

    pub fn duration_s(&self) -> f64 {
        self.config.n_pulses as f64 * self.config.pulse_period_ps as f64 * 1e-12
    }

    /// Writes the stream as text: a `#` header with the configuration echo,
    /// then one whitespace-separated line per event.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let config =
            serde_json::to_string(&self.config).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        writeln!(w, "{FORMAT_LINE}")?;
        writeln!(w, "# config: {config}")?;
        writeln!(w, "{COLUMNS_LINE}")?;
        for e in &self.events {
            match e.bin_index {
                Some(b) => writeln!(
                    w,
                    "{} {} {} {} {}",
                    e.time_ps, e.detector, e.origin, e.pulse_index, b
                )?,
                None => writeln!(
                    w,
                    "{} {} {} {} -",
                    e.time_ps, e.detector, e.origin, e.pulse_index
                )?,
            }
        }
        Ok(())
    }

    /// Reads a stream written by [`EventStream::write_text`]. Ground truth is
    /// not part of the text format.
    pub fn read_text<R: BufRead>(r: R) -> Result<EventStream> {
        let mut config = None;
        let mut events = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let parse_err = |reason: String| Error::Parse {
                line: lineno,
                reason,
            };
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(json) = rest.trim_start().strip_prefix("config:") {
                    let c: ExperimentConfig = serde_json::from_str(json.trim())
                        .map_err(|e| parse_err(format!("bad config echo: {e}")))?;
                    config = Some(c);
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(parse_err(format!(
                    "expected 5 fields, found {}",
                    fields.len()
                )));
            }
            let time_ps = fields[0]
                .parse()
                .map_err(|e| parse_err(format!("time_ps: {e}")))?;
            let detector = fields[1].parse().map_err(parse_err)?;
            let origin = fields[2].parse().map_err(parse_err)?;
            let pulse_index = fields[3]
                .parse()
                .map_err(|e| parse_err(format!("pulse_index: {e}")))?;
            let bin_index = match fields[4] {
                "-" => None,
                b => Some(
                    b.parse()
                        .map_err(|e| parse_err(format!("bin_index: {e}")))?,
                ),
            };
            events.push(DetectionEvent {
                time_ps,
                detector,
                origin,
                pulse_index,
                bin_index,
            });
        }
        let config = config.ok_or_else(|| Error::Parse {
            line: 0,
            reason: "missing `# config:` header".to_string(),
        })?;
        Ok(EventStream {
            config,
            events,
            ground_truth: None,
        })
    }
}
