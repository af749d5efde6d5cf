use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{Detector, EventStream};
use crate::error::{invalid, Result};

/// Start-stop time-to-amplitude converter histogram.
///
/// Delays are measured as `(t_B - bob.delay) - (t_A - alice.delay)`. Each
/// start records only its first stop inside `[start_ps, end_ps)`; bins are
/// half-open `[low, low + width)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TacHistogram {
    bin_width_ps: u64,
    start_ps: i64,
    counts: Vec<u64>,
    starts: u64,
}

impl TacHistogram {
    pub fn new(bin_width_ps: u64, start_ps: i64, end_ps: i64) -> Result<Self> {
        if bin_width_ps == 0 {
            return Err(invalid("bin_width_ps", "must be positive"));
        }
        if end_ps <= start_ps {
            return Err(invalid(
                "range",
                format!("empty TAC range [{start_ps}, {end_ps})"),
            ));
        }
        let span = (end_ps - start_ps) as u64;
        if !span.is_multiple_of(bin_width_ps) {
            return Err(invalid(
                "bin_width_ps",
                format!("{bin_width_ps} ps does not divide the {span} ps range"),
            ));
        }
        Ok(Self {
            bin_width_ps,
            start_ps,
            counts: vec![0; (span / bin_width_ps) as usize],
            starts: 0,
        })
    }

    /// Histogram of first stops from Bob for every Alice start in the stream.
    pub fn build(
        stream: &EventStream,
        bin_width_ps: u64,
        start_ps: i64,
        end_ps: i64,
    ) -> Result<Self> {
        let mut h = Self::new(bin_width_ps, start_ps, end_ps)?;
        h.accumulate(
            &stream.corrected_times(Detector::Alice),
            &stream.corrected_times(Detector::Bob),
        );
        Ok(h)
    }

    /// Adds starts and stops, both sorted ascending.
    pub fn accumulate(&mut self, starts: &[i64], stops: &[i64]) {
        let end = self.end_ps();
        let mut j = 0;
        for &s in starts {
            while j < stops.len() && stops[j] - s < self.start_ps {
                j += 1;
            }
            if j < stops.len() {
                let delta = stops[j] - s;
                if delta < end {
                    let bin = ((delta - self.start_ps) as u64 / self.bin_width_ps) as usize;
                    self.counts[bin] += 1;
                }
            }
        }
        self.starts += starts.len() as u64;
    }

    /// Adds another histogram with identical binning.
    pub fn merge(&mut self, other: &TacHistogram) -> Result<()> {
        if other.bin_width_ps != self.bin_width_ps
            || other.start_ps != self.start_ps
            || other.counts.len() != self.counts.len()
        {
            return Err(invalid("other", "histograms have different binning"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.starts += other.starts;
        Ok(())
    }

    pub fn bin_width_ps(&self) -> u64 {
        self.bin_width_ps
    }

    pub fn start_ps(&self) -> i64 {
        self.start_ps
    }

    pub fn end_ps(&self) -> i64 {
        self.start_ps + (self.counts.len() as u64 * self.bin_width_ps) as i64
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of starts fed in, including those without a stop in range.
    pub fn n_starts(&self) -> u64 {
        self.starts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_low(&self, i: usize) -> i64 {
        self.start_ps + (i as u64 * self.bin_width_ps) as i64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.bin_low(i) as f64 + self.bin_width_ps as f64 / 2.0
    }

    /// Indices of bins whose centre lies in `[low, high)`.
    pub fn bins_in(&self, low: f64, high: f64) -> impl Iterator<Item = usize> + '_ {
        (0..self.counts.len()).filter(move |&i| {
            let c = self.bin_center(i);
            c >= low && c < high
        })
    }

    /// Centre of the fullest bin with centre in `[low, high)`.
    pub fn peak_in(&self, low: f64, high: f64) -> Option<f64> {
        self.bins_in(low, high)
            .max_by(|&a, &b| self.counts[a].cmp(&self.counts[b]).then(b.cmp(&a)))
            .filter(|&i| self.counts[i] > 0)
            .map(|i| self.bin_center(i))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeakLabel {
    /// Zero-delay peak; the main peak in the characterization geometry.
    Central,
    LeftSatellite,
    RightSatellite,
    /// Peaks one pulse period away.
    LeftSide,
    RightSide,
}

impl fmt::Display for PeakLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeakLabel::Central => "central",
            PeakLabel::LeftSatellite => "left-satellite",
            PeakLabel::RightSatellite => "right-satellite",
            PeakLabel::LeftSide => "left-side",
            PeakLabel::RightSide => "right-side",
        })
    }
}

/// Counting window `[center - half_width, center + half_width)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakWindow {
    pub label: PeakLabel,
    pub center_ps: i64,
    pub half_width_ps: u64,
}

impl PeakWindow {
    pub fn new(label: PeakLabel, center_ps: i64, half_width_ps: u64) -> Self {
        Self {
            label,
            center_ps,
            half_width_ps,
        }
    }

    pub fn low_ps(&self) -> i64 {
        self.center_ps - self.half_width_ps as i64
    }

    pub fn high_ps(&self) -> i64 {
        self.center_ps + self.half_width_ps as i64
    }

    /// Same window moved by `shift_ps`.
    pub fn shifted(&self, shift_ps: i64) -> Self {
        Self {
            center_ps: self.center_ps + shift_ps,
            ..*self
        }
    }
}

/// A set of pairwise disjoint windows.
#[derive(Clone, Debug, PartialEq)]
pub struct PeakWindows {
    windows: Vec<PeakWindow>,
}

impl PeakWindows {
    pub fn new(mut windows: Vec<PeakWindow>) -> Result<Self> {
        if windows.iter().any(|w| w.half_width_ps == 0) {
            return Err(invalid("windows", "half widths must be positive"));
        }
        windows.sort_by_key(|w| w.low_ps());
        if let Some(pair) = windows.windows(2).find(|p| p[1].low_ps() < p[0].high_ps()) {
            return Err(invalid(
                "windows",
                format!("{} and {} windows overlap", pair[0].label, pair[1].label),
            ));
        }
        Ok(Self { windows })
    }

    /// Central peak and the two satellites one bin separation away.
    pub fn franson(bin_separation_ps: u64, half_width_ps: u64) -> Result<Self> {
        let s = bin_separation_ps as i64;
        Self::new(vec![
            PeakWindow::new(PeakLabel::LeftSatellite, -s, half_width_ps),
            PeakWindow::new(PeakLabel::Central, 0, half_width_ps),
            PeakWindow::new(PeakLabel::RightSatellite, s, half_width_ps),
        ])
    }

    /// Main peak and the two side peaks one pulse period away.
    pub fn side_peaks(pulse_period_ps: u64, half_width_ps: u64) -> Result<Self> {
        let p = pulse_period_ps as i64;
        Self::new(vec![
            PeakWindow::new(PeakLabel::LeftSide, -p, half_width_ps),
            PeakWindow::new(PeakLabel::Central, 0, half_width_ps),
            PeakWindow::new(PeakLabel::RightSide, p, half_width_ps),
        ])
    }

    pub fn windows(&self) -> &[PeakWindow] {
        &self.windows
    }

    pub fn get(&self, label: PeakLabel) -> Option<&PeakWindow> {
        self.windows.iter().find(|w| w.label == label)
    }
}

/// Counts per window plus everything in the histogram outside all windows.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowCounts {
    pub entries: Vec<(PeakWindow, u64)>,
    pub outside: u64,
}

impl WindowCounts {
    pub fn get(&self, label: PeakLabel) -> Option<u64> {
        self.entries
            .iter()
            .find(|(w, _)| w.label == label)
            .map(|e| e.1)
    }

    pub fn total(&self) -> u64 {
        self.outside + self.entries.iter().map(|e| e.1).sum::<u64>()
    }
}

/// Sums histogram bins into windows; a bin belongs to the window holding its
/// centre.
pub fn count_windows(hist: &TacHistogram, windows: &PeakWindows) -> Result<WindowCounts> {
    for w in windows.windows() {
        if w.low_ps() < hist.start_ps() || w.high_ps() > hist.end_ps() {
            return Err(invalid(
                "windows",
                format!(
                    "{} window [{}, {}) leaves the TAC range [{}, {})",
                    w.label,
                    w.low_ps(),
                    w.high_ps(),
                    hist.start_ps(),
                    hist.end_ps()
                ),
            ));
        }
    }
    let entries: Vec<(PeakWindow, u64)> = windows
        .windows()
        .iter()
        .map(|w| {
            let n = hist
                .bins_in(w.low_ps() as f64, w.high_ps() as f64)
                .map(|i| hist.counts()[i])
                .sum();
            (*w, n)
        })
        .collect();
    let inside: u64 = entries.iter().map(|e| e.1).sum();
    Ok(WindowCounts {
        entries,
        outside: hist.total() - inside,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_stop_only() {
        let mut h = TacHistogram::new(10, -50, 50).unwrap();
        h.accumulate(&[0, 1000], &[-60, 5, 25, 1049, 1050]);
        assert_eq!(h.total(), 2);
        assert_eq!(h.counts()[5], 1);
        assert_eq!(h.counts()[9], 1);
        assert_eq!(h.n_starts(), 2);
    }

    #[test]
    fn out_of_range_stop_is_not_recorded() {
        let mut h = TacHistogram::new(10, 0, 100).unwrap();
        // The first stop after the range start lies beyond the range end.
        h.accumulate(&[0], &[100, 20]);
        assert_eq!(h.total(), 0);
    }

    #[test]
    fn bin_geometry() {
        let h = TacHistogram::new(50, -100, 100).unwrap();
        assert_eq!(h.counts().len(), 4);
        assert_eq!(h.bin_center(0), -75.0);
        assert_eq!(h.end_ps(), 100);
        assert!(TacHistogram::new(30, -100, 100).is_err());
        assert!(TacHistogram::new(0, -100, 100).is_err());
        assert!(TacHistogram::new(10, 5, 5).is_err());
    }

    #[test]
    fn overlapping_windows_rejected() {
        assert!(PeakWindows::franson(1200, 700).is_err());
        assert!(PeakWindows::franson(1200, 600).is_ok());
    }

    #[test]
    fn boundary_event_joins_window_opening_there() {
        let mut h = TacHistogram::new(1, -10, 10).unwrap();
        h.accumulate(&[0], &[0]);
        let w = PeakWindows::new(vec![
            PeakWindow::new(PeakLabel::LeftSatellite, -5, 5),
            PeakWindow::new(PeakLabel::Central, 5, 5),
        ])
        .unwrap();
        let c = count_windows(&h, &w).unwrap();
        assert_eq!(c.get(PeakLabel::Central), Some(1));
        assert_eq!(c.get(PeakLabel::LeftSatellite), Some(0));
    }

    #[test]
    fn windows_must_fit_histogram() {
        let h = TacHistogram::new(10, -100, 100).unwrap();
        let w = PeakWindows::side_peaks(100, 20).unwrap();
        assert!(count_windows(&h, &w).is_err());
    }

    #[test]
    fn merge_requires_same_binning() {
        let mut a = TacHistogram::new(10, 0, 100).unwrap();
        let b = TacHistogram::new(10, 0, 200).unwrap();
        assert!(a.merge(&b).is_err());
        let mut c = TacHistogram::new(10, 0, 100).unwrap();
        c.accumulate(&[0], &[15]);
        a.merge(&c).unwrap();
        assert_eq!(a.counts()[1], 1);
    }
}
