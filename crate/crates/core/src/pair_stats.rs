//! Start/stop probabilities of a start-stop coincidence measurement on a
//! pulsed pair source, and the two pair-per-pulse estimators.
//!
//! A "start" is a click on Alice's side. A stop from the same pulse lands in
//! the main TAC peak; a stop from the following pulse, given that the twin
//! of the start photon was missed, lands in the right side peak.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Upper pair number kept in distribution sums.
pub const SERIES_TRUNCATION: usize = 20;

/// Loss budget of one arm of the source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Coupling and transmission probability.
    pub transmission: f64,
    /// Detector quantum efficiency.
    pub efficiency: f64,
    /// Probability that a photon passes this arm's interference filter.
    pub filter_pass: f64,
    /// Filter pass probability given that the twin passed its own filter.
    pub filter_pass_given_twin: f64,
}

impl ChannelParams {
    pub fn new(
        transmission: f64,
        efficiency: f64,
        filter_pass: f64,
        filter_pass_given_twin: f64,
    ) -> Result<Self> {
        let ch = Self {
            transmission,
            efficiency,
            filter_pass,
            filter_pass_given_twin,
        };
        ch.validate()?;
        Ok(ch)
    }

    /// Channel without interference filters.
    pub fn unfiltered(transmission: f64, efficiency: f64) -> Result<Self> {
        Self::new(transmission, efficiency, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("transmission", self.transmission),
            ("efficiency", self.efficiency),
            ("filter_pass", self.filter_pass),
            ("filter_pass_given_twin", self.filter_pass_given_twin),
        ];
        for (name, value) in fields {
            if !(0.0..=1.0).contains(&value) {
                return Err(invalid(name, format!("must lie in [0, 1], got {value}")));
            }
        }
        Ok(())
    }

    /// `t * eta`.
    pub fn transmission_efficiency(&self) -> f64 {
        self.transmission * self.efficiency
    }

    /// Probability that one photon of this arm clicks, filter included.
    pub fn detection_probability(&self) -> f64 {
        self.filter_pass * self.transmission_efficiency()
    }

    /// Click probability for a photon whose twin already passed its filter.
    pub fn twin_detection_probability(&self) -> f64 {
        self.filter_pass_given_twin * self.transmission_efficiency()
    }
}

/// Distribution of the number of pairs emitted in one pulse.
#[derive(Clone, Debug, PartialEq)]
pub struct PairNumberDistribution {
    probs: Vec<f64>,
}

impl PairNumberDistribution {
    /// Poisson distribution truncated at [`SERIES_TRUNCATION`] and renormalized.
    pub fn poisson(mean: f64) -> Result<Self> {
        if !(mean >= 0.0 && mean.is_finite()) {
            return Err(invalid(
                "mean",
                format!("must be finite and >= 0, got {mean}"),
            ));
        }
        let mut probs = Vec::with_capacity(SERIES_TRUNCATION + 1);
        let mut term = (-mean).exp();
        for n in 0..=SERIES_TRUNCATION {
            if n > 0 {
                term *= mean / n as f64;
            }
            probs.push(term);
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Self { probs })
    }

    /// At most one pair per pulse, emitted with probability `p_pair`.
    pub fn at_most_one(p_pair: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_pair) {
            return Err(invalid(
                "p_pair",
                format!("must lie in [0, 1], got {p_pair}"),
            ));
        }
        Ok(Self {
            probs: vec![1.0 - p_pair, p_pair],
        })
    }

    pub fn from_probabilities(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("probs", "entries must lie in [0, 1]"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("probs", format!("must sum to 1, got {total}")));
        }
        Ok(Self { probs })
    }

    pub fn probability(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.probs.iter().enumerate().map(|(n, &p)| (n as u32, p))
    }
}

fn at_least_one(q: f64, n: u32) -> f64 {
    1.0 - (1.0 - q).powi(n as i32)
}

/// `P(Start | N) = 1 - (1 - P(filter_A) t_A eta_A)^N`.
pub fn p_start_given_n(n: u32, alice: &ChannelParams) -> f64 {
    at_least_one(alice.detection_probability(), n)
}

/// `P(Stop_0 | N) = 1 - (1 - P(filter_B | filter_A) t_B eta_B)^N`.
pub fn p_stop_same_pulse_given_n(n: u32, bob: &ChannelParams) -> f64 {
    at_least_one(bob.twin_detection_probability(), n)
}

/// Probability that the following pulse yields a stop. The twin of such a
/// photon is not required to have passed a filter, so the unconditional pass
/// probability applies.
pub fn p_stop_next_pulse(dist: &PairNumberDistribution, bob: &ChannelParams) -> f64 {
    let q = bob.detection_probability();
    dist.iter().map(|(m, p)| p * at_least_one(q, m)).sum()
}

/// Main and right-side peak probabilities, both multiplied by `P(Start)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakProbabilities {
    pub main: f64,
    pub side: f64,
}

impl PeakProbabilities {
    pub fn side_over_main(&self) -> f64 {
        self.side / self.main
    }
}

/// Full-series peak probabilities for an arbitrary pair-number distribution.
pub fn peak_probabilities(
    dist: &PairNumberDistribution,
    alice: &ChannelParams,
    bob: &ChannelParams,
) -> PeakProbabilities {
    let next = p_stop_next_pulse(dist, bob);
    let mut main = 0.0;
    let mut side = 0.0;
    for (n, p) in dist.iter().skip(1) {
        let start = p * p_start_given_n(n, alice);
        let stop = p_stop_same_pulse_given_n(n, bob);
        main += start * stop;
        side += start * (1.0 - stop) * next;
    }
    PeakProbabilities { main, side }
}

/// Main-to-side peak ratio assuming at most one pair per pulse:
/// `P(f_B|f_A) / [p (1 - P(f_B|f_A) t_B eta_B) P(f_B)]`.
///
/// Alice's channel cancels; it is accepted to mirror the measurement.
pub fn main_side_ratio(p_pair: f64, _alice: &ChannelParams, bob: &ChannelParams) -> Result<f64> {
    if !(p_pair > 0.0 && p_pair < 1.0) {
        return Err(invalid(
            "p_pair",
            format!("must lie in (0, 1), got {p_pair}"),
        ));
    }
    let denominator = p_pair * (1.0 - bob.twin_detection_probability()) * bob.filter_pass;
    if denominator <= 0.0 {
        return Err(invalid("bob", "side peak vanishes for this channel"));
    }
    Ok(bob.filter_pass_given_twin / denominator)
}

/// Factor by which the raw side/main ratio underestimates `P_pair`:
/// `(1 - P(f_B|f_A) t_B eta_B) P(f_B) / P(f_B|f_A)`.
pub fn side_peak_bias(bob: &ChannelParams) -> f64 {
    (1.0 - bob.twin_detection_probability()) * bob.filter_pass / bob.filter_pass_given_twin
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    SidePeak,
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpairEstimate {
    pub value: f64,
    /// `INFINITY` when the data bound nothing (empty side peak).
    pub relative_uncertainty: f64,
    pub method: EstimateMethod,
}

impl PpairEstimate {
    pub fn absolute_uncertainty(&self) -> f64 {
        if self.value == 0.0 {
            if self.relative_uncertainty.is_finite() {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.value * self.relative_uncertainty
        }
    }
}

/// `P_pair = side / main`, optionally divided by [`side_peak_bias`].
/// Relative uncertainty is Poisson counting error `sqrt(1/side + 1/main)`.
pub fn estimate_ppair_sidepeak(
    main_counts: u64,
    side_counts: u64,
    bias_correction: Option<&ChannelParams>,
) -> Result<PpairEstimate> {
    if main_counts == 0 {
        return Err(invalid("main_counts", "main peak is empty"));
    }
    let main = main_counts as f64;
    let side = side_counts as f64;
    let mut value = side / main;
    if let Some(bob) = bias_correction {
        bob.validate()?;
        let bias = side_peak_bias(bob);
        if bias <= 0.0 {
            return Err(invalid("bias_correction", "correction factor is zero"));
        }
        value /= bias;
    }
    let relative_uncertainty = if side_counts == 0 {
        f64::INFINITY
    } else {
        (1.0 / side + 1.0 / main).sqrt()
    };
    Ok(PpairEstimate {
        value,
        relative_uncertainty,
        method: EstimateMethod::SidePeak,
    })
}

/// A value with a one-standard-deviation uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }

    pub fn relative(&self) -> f64 {
        self.sigma / self.value
    }
}

/// `P_pair = singles_rate / (t_A eta_A f)`; relative uncertainty is the
/// quadrature sum of the relative uncertainties of `t_A` and `eta_A`.
pub fn estimate_ppair_standard(
    singles_rate: f64,
    transmission: Measured,
    efficiency: Measured,
    pulse_rate: f64,
) -> Result<PpairEstimate> {
    for (name, v) in [
        ("singles_rate", singles_rate),
        ("transmission", transmission.value),
        ("efficiency", efficiency.value),
        ("pulse_rate", pulse_rate),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("must be positive, got {v}")));
        }
    }
    if transmission.sigma < 0.0 || efficiency.sigma < 0.0 {
        return Err(invalid("sigma", "uncertainties must be non-negative"));
    }
    Ok(PpairEstimate {
        value: singles_rate / (transmission.value * efficiency.value * pulse_rate),
        relative_uncertainty: transmission.relative().hypot(efficiency.relative()),
        method: EstimateMethod::Standard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ch(t: f64, eta: f64) -> ChannelParams {
        ChannelParams::unfiltered(t, eta).unwrap()
    }

    #[test]
    fn start_probabilities() {
        let a = ch(0.5, 1.0);
        assert_eq!(p_start_given_n(0, &a), 0.0);
        assert_abs_diff_eq!(p_start_given_n(1, &a), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p_start_given_n(2, &a), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn same_pulse_stop_probabilities() {
        let b = ChannelParams::new(0.5, 0.2, 0.3, 1.0).unwrap();
        assert_eq!(p_stop_same_pulse_given_n(0, &b), 0.0);
        assert_abs_diff_eq!(p_stop_same_pulse_given_n(1, &b), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(p_stop_same_pulse_given_n(3, &b), 0.271, epsilon = 1e-15);
    }

    #[test]
    fn next_pulse_stop() {
        let b = ch(0.3, 0.3);
        let empty = PairNumberDistribution::poisson(0.0).unwrap();
        assert_eq!(p_stop_next_pulse(&empty, &b), 0.0);

        let single = PairNumberDistribution::at_most_one(0.05).unwrap();
        assert_abs_diff_eq!(p_stop_next_pulse(&single, &b), 0.05 * 0.09, epsilon = 1e-15);

        // Brute-force Poisson series, summed far past the library's truncation.
        let (mu, q) = (0.1f64, 0.09f64);
        let mut oracle = 0.0;
        let mut factorial = 1.0;
        for m in 0..60 {
            if m > 0 {
                factorial *= m as f64;
            }
            oracle += (-mu).exp() * mu.powi(m) / factorial * (1.0 - (1.0 - q).powi(m));
        }
        let dist = PairNumberDistribution::poisson(mu).unwrap();
        let value = p_stop_next_pulse(&dist, &b);
        assert_abs_diff_eq!(value, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(value, 1.0 - (-mu * q).exp(), epsilon = 1e-15);
    }

    #[test]
    fn poisson_distribution_invariants() {
        for mu in [0.0, 0.01, 0.1, 0.49] {
            let d = PairNumberDistribution::poisson(mu).unwrap();
            assert_abs_diff_eq!(d.probabilities().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(d.mean(), mu, epsilon = 1e-12);
            if mu > 0.0 {
                assert_abs_diff_eq!(
                    d.probability(2) / d.probability(1),
                    mu / 2.0,
                    epsilon = 1e-12
                );
            }
        }
        assert!(PairNumberDistribution::poisson(-1.0).is_err());
        assert!(PairNumberDistribution::from_probabilities(vec![0.5, 0.4]).is_err());
    }

    #[test]
    fn ratio_examples() {
        let a = ch(0.3, 0.09);
        let b = ch(0.3, 0.3);
        let r = main_side_ratio(0.05, &a, &b).unwrap();
        assert_abs_diff_eq!(r, 1.0 / (0.05 * 0.91), epsilon = 1e-12);
        assert_abs_diff_eq!(r, 21.978, epsilon = 1e-3);

        let tiny = ch(1e-9, 1.0);
        assert_abs_diff_eq!(
            main_side_ratio(0.05, &a, &tiny).unwrap(),
            20.0,
            epsilon = 1e-6
        );

        assert!(main_side_ratio(0.0, &a, &b).is_err());
    }

    #[test]
    fn sidepeak_estimator() {
        let e = estimate_ppair_sidepeak(10_000, 500, None).unwrap();
        assert_abs_diff_eq!(e.value, 0.05, epsilon = 1e-15);
        assert_eq!(e.method, EstimateMethod::SidePeak);

        let empty = estimate_ppair_sidepeak(10_000, 0, None).unwrap();
        assert_eq!(empty.value, 0.0);
        assert!(empty.relative_uncertainty.is_infinite());

        let e = estimate_ppair_sidepeak(20_000, 1000, None).unwrap();
        assert!(e.relative_uncertainty > 0.03 && e.relative_uncertainty < 0.035);

        assert!(estimate_ppair_sidepeak(0, 3, None).is_err());
    }

    #[test]
    fn standard_estimator() {
        let e = estimate_ppair_standard(2.052e5, Measured::exact(0.3), Measured::exact(0.09), 76e6)
            .unwrap();
        assert_abs_diff_eq!(e.value, 0.1, epsilon = 1e-12);
        assert_eq!(e.relative_uncertainty, 0.0);

        let e = estimate_ppair_standard(
            1e5,
            Measured::new(0.30, 0.06),
            Measured::new(0.30, 0.06),
            76e6,
        )
        .unwrap();
        assert_abs_diff_eq!(e.relative_uncertainty, 0.08f64.sqrt(), epsilon = 1e-12);
        assert!(e.relative_uncertainty > 0.28 && e.relative_uncertainty < 0.30);

        let doubled = estimate_ppair_standard(
            2e5,
            Measured::new(0.30, 0.06),
            Measured::new(0.30, 0.06),
            76e6,
        )
        .unwrap();
        assert_abs_diff_eq!(doubled.value, 2.0 * e.value, epsilon = 1e-15);

        assert!(
            estimate_ppair_standard(1e5, Measured::exact(0.0), Measured::exact(0.3), 76e6).is_err()
        );
        assert!(
            estimate_ppair_standard(1e5, Measured::exact(0.3), Measured::exact(0.3), 0.0).is_err()
        );
    }

    #[test]
    fn noiseless_round_trip_recovers_ppair() {
        let a = ch(0.3, 0.09);
        let b = ch(0.5, 0.4);
        let p = 0.05;
        let ratio = main_side_ratio(p, &a, &b).unwrap();
        assert_abs_diff_eq!(ratio, 25.0, epsilon = 1e-12);
        let e = estimate_ppair_sidepeak(25_000, 1_000, Some(&b)).unwrap();
        assert_abs_diff_eq!(e.value, p, epsilon = 1e-15);
    }

    #[test]
    fn estimators_agree_on_synthetic_data() {
        let (p, t, eta, f) = (0.04, 0.3, 0.09, 76e6);
        let standard = estimate_ppair_standard(
            p * t * eta * f,
            Measured::new(t, 0.06),
            Measured::new(eta, 0.018),
            f,
        )
        .unwrap();
        let b = ch(0.3, 0.3);
        let ratio = main_side_ratio(p, &ch(t, eta), &b).unwrap();
        let main = 100_000u64;
        let side = (main as f64 / ratio).round() as u64;
        let side_peak = estimate_ppair_sidepeak(main, side, Some(&b)).unwrap();
        let combined = standard
            .absolute_uncertainty()
            .hypot(side_peak.absolute_uncertainty());
        assert!((standard.value - side_peak.value).abs() <= combined);
    }

    #[test]
    fn single_pair_series_matches_closed_form() {
        let a = ChannelParams::new(0.3, 0.09, 0.5, 1.0).unwrap();
        let b = ChannelParams::new(0.3, 0.3, 0.6, 0.9).unwrap();
        let dist = PairNumberDistribution::at_most_one(0.07).unwrap();
        let peaks = peak_probabilities(&dist, &a, &b);
        let ratio = main_side_ratio(0.07, &a, &b).unwrap();
        assert_abs_diff_eq!(peaks.main / peaks.side, ratio, epsilon = 1e-9 * ratio);
    }

    /// Sums the probability of every start/stop outcome tuple of two
    /// consecutive pulses carrying at most one pair each.
    fn enumerated_ratio(p: f64, a: &ChannelParams, b: &ChannelParams) -> f64 {
        let bern = |q: f64, happened: bool| if happened { q } else { 1.0 - q };
        let mut main = 0.0;
        let mut side = 0.0;
        for alice_filter in [true, false] {
            for alice_click in [true, false] {
                for bob_filter in [true, false] {
                    for bob_click in [true, false] {
                        for next_pair in [true, false] {
                            for next_filter in [true, false] {
                                for next_click in [true, false] {
                                    let twin_pass = if alice_filter {
                                        b.filter_pass_given_twin
                                    } else {
                                        b.filter_pass
                                    };
                                    let weight = p
                                        * bern(a.filter_pass, alice_filter)
                                        * bern(a.transmission_efficiency(), alice_click)
                                        * bern(twin_pass, bob_filter)
                                        * bern(b.transmission_efficiency(), bob_click)
                                        * bern(p, next_pair)
                                        * bern(b.filter_pass, next_filter)
                                        * bern(b.transmission_efficiency(), next_click);
                                    let start = alice_filter && alice_click;
                                    let stop0 = bob_filter && bob_click;
                                    let stop1 = next_pair && next_filter && next_click;
                                    if start && stop0 {
                                        main += weight;
                                    }
                                    if start && !stop0 && stop1 {
                                        side += weight;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        main / side
    }

    proptest! {
        #[test]
        fn probabilities_are_bounded(
            t in 0.0f64..=1.0, eta in 0.0f64..=1.0, f in 0.0f64..=1.0, n in 0u32..30,
        ) {
            let c = ChannelParams::new(t, eta, f, 1.0).unwrap();
            for p in [p_start_given_n(n, &c), p_stop_same_pulse_given_n(n, &c)] {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }

        #[test]
        fn start_probability_increases_with_pairs(q in 0.01f64..=1.0, n in 0u32..20) {
            let c = ChannelParams::unfiltered(q, 1.0).unwrap();
            let (lo, hi) = (p_start_given_n(n, &c), p_start_given_n(n + 1, &c));
            prop_assert!(hi > lo || (hi == 1.0 && lo == 1.0));
        }

        #[test]
        fn closed_form_matches_enumeration(
            p in 0.001f64..0.2,
            ta in 0.01f64..1.0, ea in 0.01f64..1.0, fa in 0.05f64..1.0,
            tb in 0.01f64..0.99, eb in 0.01f64..0.99, fb in 0.05f64..1.0, fbt in 0.05f64..1.0,
        ) {
            let a = ChannelParams::new(ta, ea, fa, 1.0).unwrap();
            let b = ChannelParams::new(tb, eb, fb, fbt).unwrap();
            let closed = main_side_ratio(p, &a, &b).unwrap();
            let brute = enumerated_ratio(p, &a, &b);
            prop_assert!((closed - brute).abs() <= 1e-12 * closed.max(1.0));
        }
    }
}
