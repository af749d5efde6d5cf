//! Coincidence histograms, window counting, fringe fits and scans.

pub mod coincidence;
pub mod export;
pub mod fringe;
pub mod sidepeak;
pub mod tac;

pub use coincidence::{
    triple_coincidence_counts, twofold_coincidence_counts, AccidentalMethod, CoincidenceCounts,
};
pub use fringe::{
    fit_fringe, fit_sinusoid, linear_fit, power_scan_visibility, run_fringe_scan, FringeSample,
    FringeScan, FringeScanResult, PowerPoint, PowerScanResult, ScanPoint, ScanSettings,
    ScannedPhase, SinusoidFit, VisibilityFit,
};
pub use sidepeak::{measure_side_peaks, SidePeakMeasurement, SidePeakSettings};
pub use tac::{count_windows, PeakLabel, PeakWindow, PeakWindows, TacHistogram, WindowCounts};
