use proptest::prelude::*;
use timebin_core::analysis::*;
use timebin_core::analytic::PhaseSetting;
use timebin_core::engine::*;

fn franson_lossless(n_pulses: u64, phases: PhaseSetting, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        pair_source: PairSource::ExactlyOne,
        n_pulses,
        phases,
        seed,
        ..ExperimentConfig::default().lossless()
    }
}

#[test]
fn tac_shows_three_peaks_at_bin_separations() {
    let c = franson_lossless(100_000, PhaseSetting::default(), 3);
    let stream = simulate_run(&c).unwrap();
    let hist = TacHistogram::build(&stream, 1, -3000, 3000).unwrap();
    for centre in [-1200.0, 0.0, 1200.0] {
        let peak = hist.peak_in(centre - 600.0, centre + 600.0).unwrap();
        assert!((peak - centre).abs() <= 1.0, "peak {peak} near {centre}");
    }
    let counts = count_windows(&hist, &PeakWindows::franson(1200, 300).unwrap()).unwrap();
    assert_eq!(counts.total(), hist.total());
    assert_eq!(counts.outside, 0);
}

#[test]
fn first_window_boundary_rule_on_real_delays() {
    // Zero jitter puts every coincidence exactly on a bin low edge, so a
    // window starting at the peak still collects it.
    let c = franson_lossless(20_000, PhaseSetting::default(), 4);
    let stream = simulate_run(&c).unwrap();
    let hist = TacHistogram::build(&stream, 1, -3000, 3000).unwrap();
    let right =
        PeakWindows::new(vec![PeakWindow::new(PeakLabel::RightSatellite, 1500, 300)]).unwrap();
    let left =
        PeakWindows::new(vec![PeakWindow::new(PeakLabel::RightSatellite, 900, 300)]).unwrap();
    let a = count_windows(&hist, &right).unwrap();
    let b = count_windows(&hist, &left).unwrap();
    assert!(a.entries[0].1 > 0);
    assert_eq!(b.entries[0].1, 0);
}

#[test]
fn characterization_run_shows_side_peaks() {
    let mut c = ExperimentConfig {
        n_pulses: 2_000_000,
        mu: 0.1,
        ..ExperimentConfig::characterization().lossless()
    };
    c.bob.efficiency = 0.5;
    let stream = simulate_run(&c).unwrap();
    let m = measure_side_peaks(&stream, &SidePeakSettings::default()).unwrap();
    assert!(m.main > 0 && m.side > 0 && m.left_side > 0);
    assert_eq!(m.windows.total(), m.histogram.total());
    let expected = m.expected.side_over_main();
    let observed = m.side as f64 / m.main as f64;
    assert!((observed - expected).abs() < 4.0 * observed * m.raw.unwrap().relative_uncertainty);
}

#[test]
fn triple_scan_tracks_pump_phase() {
    let base = franson_lossless(30_000, PhaseSetting::new(0.0, 0.5, 0.0), 8);
    let settings = ScanSettings {
        scanned: ScannedPhase::Pump,
        ..Default::default()
    };
    let scan = run_fringe_scan(&base, &settings, &SimOptions::default()).unwrap();
    let fit = fit_fringe(&scan.triple_scan().unwrap()).unwrap();
    let expected = ScannedPhase::Pump.expected_offset(&base);
    assert!(fit.net_v > 0.97);
    assert!(timebin_core::analytic::wrap_phase(fit.phase_offset - expected).abs() < 0.05);
}

#[test]
fn scan_rejects_characterization_geometry() {
    let base = ExperimentConfig::characterization();
    assert!(run_fringe_scan(&base, &ScanSettings::default(), &SimOptions::default()).is_err());
}

#[test]
fn shifted_pulse_accidentals_include_multipair_background() {
    let base = ExperimentConfig {
        mu: 0.1,
        ..ExperimentConfig::default().lossless()
    };
    let off = ScanSettings {
        expected_pairs_per_point: Some(1e5),
        ..Default::default()
    };
    let shifted = ScanSettings {
        accidentals: AccidentalMethod::ShiftedPulse,
        ..off.clone()
    };
    let o = SimOptions::default();
    let a = fit_fringe(
        &run_fringe_scan(&base, &off, &o)
            .unwrap()
            .triple_scan()
            .unwrap(),
    )
    .unwrap();
    let b = fit_fringe(
        &run_fringe_scan(&base, &shifted, &o)
            .unwrap()
            .triple_scan()
            .unwrap(),
    )
    .unwrap();
    assert_eq!(a.net_v, a.raw_v);
    assert!(b.net_v > a.net_v);
}

fn brute_force_first_stops(starts: &[i64], stops: &[i64], lo: i64, hi: i64) -> Vec<i64> {
    starts
        .iter()
        .filter_map(|&s| {
            stops
                .iter()
                .map(|&t| t - s)
                .filter(|&d| d >= lo)
                .min()
                .filter(|&d| d < hi)
        })
        .collect()
}

proptest! {
    #[test]
    fn histogram_matches_brute_force(
        mut starts in prop::collection::vec(-2000i64..2000, 0..40),
        mut stops in prop::collection::vec(-2000i64..2000, 0..40),
        lo in -500i64..0,
        width in 1u64..20,
        bins in 1usize..60,
    ) {
        starts.sort_unstable();
        stops.sort_unstable();
        let hi = lo + (width as usize * bins) as i64;
        let mut h = TacHistogram::new(width, lo, hi).unwrap();
        h.accumulate(&starts, &stops);
        let deltas = brute_force_first_stops(&starts, &stops, lo, hi);
        prop_assert_eq!(h.total(), deltas.len() as u64);
        let mut expected = vec![0u64; bins];
        for d in deltas {
            expected[((d - lo) as u64 / width) as usize] += 1;
        }
        prop_assert_eq!(h.counts(), expected.as_slice());
    }

    #[test]
    fn window_counts_are_conserved(
        stops in prop::collection::vec(-3000i64..3000, 1..200),
        half_width in 1u64..600,
    ) {
        let mut h = TacHistogram::new(10, -3000, 3000).unwrap();
        for s in stops {
            h.accumulate(&[0], &[s]);
        }
        let w = PeakWindows::franson(1200, half_width).unwrap();
        let c = count_windows(&h, &w).unwrap();
        prop_assert_eq!(c.total(), h.total());
    }
}
