//! Closed-form amplitudes and probabilities for the time-bin Franson geometry.
//!
//! Photons live in three time bins: bin 0 (no long arm traversed), bin 1 (one
//! long arm, either the pump's or an analyzer's) and bin 2 (both). Analyzers
//! are lossless four-port Michelson interferometers with a `-` and a `+`
//! output port; a transmitted pass contributes `1/2`, a reflected pass `i/2`
//! and the long arm the phase factor `e^{i phase}`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const BINS: usize = 3;
pub const PORTS: usize = 2;
/// Number of (bin, port) x (bin, port) outcomes for a photon pair.
pub const JOINT_ENTRIES: usize = BINS * PORTS * BINS * PORTS;

/// Visibility above which the fringe cannot be reproduced by a local model.
pub const CHSH_VISIBILITY_THRESHOLD: f64 = FRAC_1_SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Port {
    Minus,
    Plus,
}

impl Port {
    pub const ALL: [Port; PORTS] = [Port::Minus, Port::Plus];

    pub fn index(self) -> usize {
        match self {
            Port::Minus => 0,
            Port::Plus => 1,
        }
    }

    fn from_index(index: usize) -> Port {
        Port::ALL[index]
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Port::Minus => "-",
            Port::Plus => "+",
        })
    }
}

/// Where one photon ends up: a time bin at one analyzer output port.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot {
    pub bin: u8,
    pub port: Port,
}

impl Slot {
    pub const fn minus(bin: u8) -> Slot {
        Slot {
            bin,
            port: Port::Minus,
        }
    }

    pub const fn plus(bin: u8) -> Slot {
        Slot {
            bin,
            port: Port::Plus,
        }
    }

    fn index(self) -> usize {
        self.bin as usize * PORTS + self.port.index()
    }

    fn from_index(index: usize) -> Slot {
        Slot {
            bin: (index / PORTS) as u8,
            port: Port::from_index(index % PORTS),
        }
    }
}

/// Joint detection outcome of one pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Outcome {
    pub alice: Slot,
    pub bob: Slot,
}

impl Outcome {
    pub const fn new(alice: Slot, bob: Slot) -> Outcome {
        Outcome { alice, bob }
    }

    /// Flat index `((b_A * 2 + p_A) * 3 + b_B) * 2 + p_B`.
    pub fn index(self) -> usize {
        self.alice.index() * BINS * PORTS + self.bob.index()
    }

    pub fn from_index(index: usize) -> Outcome {
        assert!(index < JOINT_ENTRIES, "outcome index {index} out of range");
        Outcome {
            alice: Slot::from_index(index / (BINS * PORTS)),
            bob: Slot::from_index(index % (BINS * PORTS)),
        }
    }

    pub fn swapped(self) -> Outcome {
        Outcome {
            alice: self.bob,
            bob: self.alice,
        }
    }

    pub fn all() -> impl Iterator<Item = Outcome> {
        (0..JOINT_ENTRIES).map(Outcome::from_index)
    }
}

/// Relative phases of the pump, Alice's and Bob's interferometers (radians).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSetting {
    pub pump: f64,
    pub alice: f64,
    pub bob: f64,
}

impl PhaseSetting {
    pub fn new(pump: f64, alice: f64, bob: f64) -> Self {
        Self { pump, alice, bob }
    }

    /// `alpha + beta - phi`, unreduced.
    pub fn theta(&self) -> f64 {
        self.alice + self.bob - self.pump
    }

    /// `theta` reduced to `(-pi, pi]`.
    pub fn theta_display(&self) -> f64 {
        wrap_phase(self.theta())
    }

    pub fn is_finite(&self) -> bool {
        self.pump.is_finite() && self.alice.is_finite() && self.bob.is_finite()
    }

    pub fn swapped(&self) -> PhaseSetting {
        PhaseSetting {
            pump: self.pump,
            alice: self.bob,
            bob: self.alice,
        }
    }
}

/// Reduces an angle to `(-pi, pi]`.
pub fn wrap_phase(angle: f64) -> f64 {
    let mut reduced = angle.rem_euclid(TAU);
    if reduced > PI {
        reduced -= TAU;
    }
    reduced
}

/// Which interferometers are in the beam path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub pump_interferometer: bool,
    pub analyzers: bool,
}

impl Geometry {
    /// Pump interferometer plus both analyzers: the Bell test.
    pub const FRANSON: Geometry = Geometry {
        pump_interferometer: true,
        analyzers: true,
    };
    /// Bare crystal, photons sent straight to the detectors.
    pub const CHARACTERIZATION: Geometry = Geometry {
        pump_interferometer: false,
        analyzers: false,
    };

    pub fn is_franson(&self) -> bool {
        *self == Geometry::FRANSON
    }
}

/// Single-photon amplitudes over time bins, before any analyzer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeBinAmplitudes {
    bins: [Complex64; BINS],
}

impl TimeBinAmplitudes {
    pub fn new(bins: [Complex64; BINS]) -> Self {
        Self { bins }
    }

    /// A photon entirely in one bin.
    pub fn basis(bin: usize) -> Self {
        let mut bins = [Complex64::new(0.0, 0.0); BINS];
        bins[bin] = Complex64::new(1.0, 0.0);
        Self { bins }
    }

    pub fn bins(&self) -> &[Complex64; BINS] {
        &self.bins
    }

    pub fn norm_sqr(&self) -> f64 {
        self.bins.iter().map(Complex64::norm_sqr).sum()
    }
}

/// Single-photon amplitudes indexed by (bin, port) after an analyzer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PortedAmplitudes {
    amps: [[Complex64; PORTS]; BINS],
}

impl PortedAmplitudes {
    pub fn get(&self, slot: Slot) -> Complex64 {
        self.amps[slot.bin as usize][slot.port.index()]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().flatten().map(Complex64::norm_sqr).sum()
    }

    /// Bins carrying non-zero amplitude on either port.
    pub fn support(&self) -> Vec<usize> {
        (0..BINS)
            .filter(|&b| self.amps[b].iter().any(|a| a.norm_sqr() > 0.0))
            .collect()
    }
}

/// State of the pump photon after the pump interferometer:
/// `(|1,0> - e^{i phi} |0,1>) / sqrt(2)`.
pub fn pump_state(phase: f64) -> Result<TimeBinAmplitudes> {
    if !phase.is_finite() {
        return Err(invalid("phase", format!("must be finite, got {phase}")));
    }
    let early = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let late = -Complex64::from_polar(FRAC_1_SQRT_2, phase);
    Ok(TimeBinAmplitudes::new([
        early,
        late,
        Complex64::new(0.0, 0.0),
    ]))
}

/// Amplitude for a photon entering an analyzer in bin `input` to leave at `out`.
fn analyzer_coefficient(input: usize, out: Slot, phase: f64) -> Complex64 {
    let out_bin = out.bin as usize;
    let long = Complex64::from_polar(1.0, phase);
    let i = Complex64::i();
    match (out_bin == input, out_bin == input + 1, out.port) {
        (true, _, Port::Minus) => Complex64::new(0.5, 0.0),
        (_, true, Port::Minus) => -long * 0.5,
        (true, _, Port::Plus) => i * 0.5,
        (_, true, Port::Plus) => i * long * 0.5,
        _ => Complex64::new(0.0, 0.0),
    }
}

/// Amplitude for a photon skipping the analyzer: it keeps its bin and hits
/// the single detector, labelled port `-`.
fn bypass_coefficient(input: usize, out: Slot) -> Complex64 {
    if out.bin as usize == input && out.port == Port::Minus {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Sends a single photon through an analyzer with long-arm phase `phase`.
///
/// Each input bin `j` splits into four terms of magnitude 1/2: bin `j` and
/// bin `j + 1` on each of the two ports. Input in bin 2 is rejected because
/// the delayed term would leave the three-bin model.
pub fn analyzer_transform(state: &TimeBinAmplitudes, phase: f64) -> Result<PortedAmplitudes> {
    if state.bins[BINS - 1].norm_sqr() > 0.0 {
        return Err(invalid(
            "state",
            "input occupies bin 2; analyzer output would exceed three bins",
        ));
    }
    if !phase.is_finite() {
        return Err(invalid("phase", format!("must be finite, got {phase}")));
    }
    let mut amps = [[Complex64::new(0.0, 0.0); PORTS]; BINS];
    for (input, &c) in state.bins.iter().enumerate().take(BINS - 1) {
        for (slot_index, amp) in amps.iter_mut().flatten().enumerate() {
            *amp += c * analyzer_coefficient(input, Slot::from_index(slot_index), phase);
        }
    }
    Ok(PortedAmplitudes { amps })
}

/// Joint amplitudes of a pair after both analyzers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairAmplitudes {
    amps: [Complex64; JOINT_ENTRIES],
}

impl PairAmplitudes {
    /// Evolves the SPDC pair state through the given geometry.
    ///
    /// Both twins share their creation bin, so the pair entering the
    /// analyzers is `sum_j c_j |j>_A |j>_B` with `c` the pump amplitudes.
    pub fn evolve(phases: &PhaseSetting, geometry: Geometry) -> PairAmplitudes {
        let creation = if geometry.pump_interferometer {
            // Finite phases are a config invariant; fall back to the basis state otherwise.
            pump_state(phases.pump).unwrap_or_else(|_| TimeBinAmplitudes::basis(0))
        } else {
            TimeBinAmplitudes::basis(0)
        };
        let coefficient = |input: usize, out: Slot, phase: f64| {
            if geometry.analyzers {
                analyzer_coefficient(input, out, phase)
            } else {
                bypass_coefficient(input, out)
            }
        };
        let mut amps = [Complex64::new(0.0, 0.0); JOINT_ENTRIES];
        for outcome in Outcome::all() {
            amps[outcome.index()] = creation
                .bins
                .iter()
                .enumerate()
                .take(BINS - 1)
                .map(|(j, &c)| {
                    c * coefficient(j, outcome.alice, phases.alice)
                        * coefficient(j, outcome.bob, phases.bob)
                })
                .sum();
        }
        PairAmplitudes { amps }
    }

    pub fn get(&self, outcome: Outcome) -> Complex64 {
        self.amps[outcome.index()]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(Complex64::norm_sqr).sum()
    }
}

/// Probability table over all 36 pair outcomes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointDistribution {
    probs: [f64; JOINT_ENTRIES],
}

impl JointDistribution {
    pub fn for_geometry(phases: &PhaseSetting, geometry: Geometry) -> JointDistribution {
        let amps = PairAmplitudes::evolve(phases, geometry);
        let mut probs = [0.0; JOINT_ENTRIES];
        for (p, a) in probs.iter_mut().zip(amps.amps.iter()) {
            *p = a.norm_sqr();
        }
        JointDistribution { probs }
    }

    /// Table averaged over a uniformly random `theta`.
    ///
    /// Every entry is `a + b cos(theta) + c sin(theta)`, so averaging four
    /// settings a quarter turn apart is exact.
    pub fn phase_averaged(phases: &PhaseSetting, geometry: Geometry) -> JointDistribution {
        let mut probs = [0.0; JOINT_ENTRIES];
        for k in 0..4 {
            let shifted = PhaseSetting {
                pump: phases.pump + k as f64 * PI / 2.0,
                ..*phases
            };
            let table = JointDistribution::for_geometry(&shifted, geometry);
            for (acc, p) in probs.iter_mut().zip(table.probs.iter()) {
                *acc += p / 4.0;
            }
        }
        JointDistribution { probs }
    }

    pub fn probability(&self, outcome: Outcome) -> f64 {
        self.probs[outcome.index()]
    }

    pub fn probabilities(&self) -> &[f64; JOINT_ENTRIES] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (Outcome, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (Outcome::from_index(i), p))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Two-fold `A- B-` probability with Bob's bin offset from Alice's by
    /// `bob_minus_alice` bins (0 for the central TAC peak, +-1 for satellites).
    pub fn minus_minus_peak(&self, bob_minus_alice: i32) -> f64 {
        (0..BINS as i32)
            .filter_map(|a| {
                let b = a + bob_minus_alice;
                (0..BINS as i32).contains(&b).then(|| {
                    self.probability(Outcome::new(Slot::minus(a as u8), Slot::minus(b as u8)))
                })
            })
            .sum()
    }
}

/// Joint outcome table of the Franson geometry (pump and both analyzers).
pub fn joint_detection_distribution(phases: &PhaseSetting) -> Result<JointDistribution> {
    if !phases.is_finite() {
        return Err(invalid("phases", "all phases must be finite"));
    }
    Ok(JointDistribution::for_geometry(phases, Geometry::FRANSON))
}

/// Relative triple-coincidence rate `1 - v cos(theta)`.
pub fn triple_coincidence_rate(theta: f64, visibility: f64) -> Result<f64> {
    check_visibility(visibility)?;
    Ok(1.0 - visibility * theta.cos())
}

fn check_visibility(visibility: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(invalid(
            "visibility",
            format!("must lie in [0, 1], got {visibility}"),
        ));
    }
    Ok(())
}

/// Fringe visibility expected when multi-pair emission dilutes the
/// single-pair interference, truncated at four photons.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisibilityPrediction {
    pub p_pair: f64,
    /// `(1 + p) / (1 + 2p)`.
    pub v_exact: f64,
    /// `1 - p`, the first-order expansion.
    pub v_linear: f64,
    /// Interferometer-quality ceiling multiplying the interfering term.
    pub intrinsic_v: f64,
    /// Constant coefficient of the rate, `p + 2 p^2`.
    pub rate_constant: f64,
    /// `cos(theta)` coefficient of the rate, `p + p^2`.
    pub rate_cosine: f64,
}

impl VisibilityPrediction {
    /// Probability of four photons from two independent pairs, `p^2 / 2`.
    pub fn p_four_photons(&self) -> f64 {
        self.p_pair * self.p_pair / 2.0
    }

    /// Single-pair contribution `p (1 + cos theta) / 2`.
    pub fn two_photon_rate(&self, theta: f64) -> f64 {
        self.p_pair * (1.0 + theta.cos()) / 2.0
    }

    /// Two-pair contribution `4 P4 (1 + cos(theta)/2) / 2`.
    pub fn four_photon_rate(&self, theta: f64) -> f64 {
        4.0 * self.p_four_photons() * (1.0 + 0.5 * theta.cos()) / 2.0
    }

    /// Total rate `[(p + 2p^2) + (p + p^2) cos theta] / 2`.
    pub fn total_rate(&self, theta: f64) -> f64 {
        0.5 * (self.rate_constant + self.rate_cosine * theta.cos())
    }

    pub fn with_intrinsic(self, intrinsic_v: f64) -> Result<VisibilityPrediction> {
        check_visibility(intrinsic_v)?;
        Ok(VisibilityPrediction {
            intrinsic_v,
            ..self
        })
    }

    /// Visibility including the interferometer ceiling.
    pub fn observed(&self) -> f64 {
        self.intrinsic_v * self.v_exact
    }
}

pub fn multiphoton_visibility(p_pair: f64) -> Result<VisibilityPrediction> {
    if !(0.0..0.5).contains(&p_pair) {
        return Err(invalid(
            "p_pair",
            format!("must lie in [0, 0.5), got {p_pair}"),
        ));
    }
    let p = p_pair;
    Ok(VisibilityPrediction {
        p_pair: p,
        v_exact: (1.0 + p) / (1.0 + 2.0 * p),
        v_linear: 1.0 - p,
        intrinsic_v: 1.0,
        rate_constant: p + 2.0 * p * p,
        rate_cosine: p + p * p,
    })
}

/// Number of standard deviations by which `visibility` exceeds `1/sqrt(2)`.
pub fn chsh_significance(visibility: f64, sigma: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    Ok((visibility - CHSH_VISIBILITY_THRESHOLD) / sigma)
}
