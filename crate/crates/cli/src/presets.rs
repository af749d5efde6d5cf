use std::f64::consts::TAU;

use timebin_core::analysis::export::{
    write_fringe_csv, write_joint_csv, write_power_csv, write_tac_csv, write_visibility_curve_csv,
    write_windows_csv, FringeSeries,
};
use timebin_core::analysis::{
    count_windows, fit_fringe, measure_side_peaks, power_scan_visibility, run_fringe_scan,
    PeakWindows, TacHistogram,
};
use timebin_core::analytic::{
    chsh_significance, joint_detection_distribution, multiphoton_visibility,
};
use timebin_core::engine::{derive_seed, simulate_run_with, SimOptions};
use timebin_core::pair_stats::{side_peak_bias, PpairEstimate};

use crate::config::RunConfig;
use crate::{CliError, Outputs, Preset};

pub(crate) fn run(
    preset: Preset,
    config: &RunConfig,
    options: &SimOptions,
    out: &mut Outputs,
) -> Result<(), CliError> {
    match preset {
        Preset::BellScan => bell_scan(config, options, out),
        Preset::PowerScan => power_scan(config, options, out),
        Preset::Sidepeak => sidepeak(config, options, out),
        Preset::TacHistogram => tac_histogram(config, options, out),
        Preset::AnalyticTables => analytic_tables(config, out),
    }
}

fn bell_scan(config: &RunConfig, options: &SimOptions, out: &mut Outputs) -> Result<(), CliError> {
    let scan = run_fringe_scan(&config.experiment, &config.scan, options)?;
    out.write("fringe.csv", |w, h| {
        Ok(write_fringe_csv(w, h, &scan, FringeSeries::Triple)?)
    })?;
    out.write("twofold.csv", |w, h| {
        Ok(write_fringe_csv(w, h, &scan, FringeSeries::Twofold)?)
    })?;
    let triple = fit_fringe(&scan.triple_scan()?)?;
    let twofold = fit_fringe(&scan.twofold_scan()?)?;
    let expected_offset = config.scan.scanned.expected_offset(&config.experiment);
    let mut values = vec![
        ("raw_v", triple.raw_v.to_string()),
        ("net_v", triple.net_v.to_string()),
        ("sigma_v", triple.sigma_v.to_string()),
        ("raw_sigma_v", triple.raw_sigma_v.to_string()),
        ("phase_offset_rad", triple.phase_offset.to_string()),
        ("expected_phase_offset_rad", expected_offset.to_string()),
        ("amplitude", triple.amplitude.to_string()),
        ("twofold_raw_v", twofold.raw_v.to_string()),
        ("twofold_net_v", twofold.net_v.to_string()),
        ("twofold_sigma_v", twofold.sigma_v.to_string()),
    ];
    if let Ok(z) = chsh_significance(triple.net_v, triple.sigma_v) {
        values.push(("chsh_significance", z.to_string()));
    }
    out.write_values("visibility.txt", &values)
}

fn power_scan(config: &RunConfig, options: &SimOptions, out: &mut Outputs) -> Result<(), CliError> {
    let scan = power_scan_visibility(
        &config.power_scan.mu,
        &config.experiment,
        &config.scan,
        options,
    )?;
    out.write("power_scan.csv", |w, h| Ok(write_power_csv(w, h, &scan)?))?;
    out.write_values(
        "power_fit.txt",
        &[
            ("slope", scan.slope.to_string()),
            ("sigma_slope", scan.sigma_slope.to_string()),
            ("intercept", scan.intercept.to_string()),
            ("sigma_intercept", scan.sigma_intercept.to_string()),
            ("points", scan.points.len().to_string()),
        ],
    )
}

fn estimate_values(prefix: &str, e: Option<PpairEstimate>) -> Vec<(String, String)> {
    match e {
        Some(e) => vec![
            (prefix.to_string(), e.value.to_string()),
            (
                format!("{prefix}_relative_uncertainty"),
                e.relative_uncertainty.to_string(),
            ),
        ],
        None => vec![(prefix.to_string(), "undefined".to_string())],
    }
}

fn sidepeak(config: &RunConfig, options: &SimOptions, out: &mut Outputs) -> Result<(), CliError> {
    let stream = simulate_run_with(&config.experiment, options)?;
    let m = measure_side_peaks(&stream, &config.sidepeak)?;
    out.write("tac.csv", |w, h| Ok(write_tac_csv(w, h, &m.histogram)?))?;
    let bob = config.experiment.bob.channel();
    let mut values: Vec<(String, String)> = vec![
        ("mu".into(), config.experiment.mu.to_string()),
        ("starts".into(), m.histogram.n_starts().to_string()),
        ("main_counts".into(), m.main.to_string()),
        ("side_counts".into(), m.side.to_string()),
        ("left_side_counts".into(), m.left_side.to_string()),
        ("bias_factor".into(), side_peak_bias(&bob).to_string()),
        (
            "expected_side_over_main".into(),
            m.expected.side_over_main().to_string(),
        ),
    ];
    values.extend(estimate_values("ppair_raw", m.raw));
    values.extend(estimate_values("ppair_corrected", m.corrected));
    values.extend(estimate_values("ppair_standard", m.standard));
    let borrowed: Vec<(&str, String)> = values
        .iter()
        .map(|(k, v)| (k.as_str(), v.clone()))
        .collect();
    out.write_values("ppair.txt", &borrowed)
}

fn tac_histogram(
    config: &RunConfig,
    options: &SimOptions,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let exp = &config.experiment;
    let tac = &config.tac;
    let franson = exp.geometry().is_franson();
    let w = tac.bin_width_ps;
    let auto_reach = if franson {
        (3 * exp.bin_separation_ps + 2 * tac.half_width_ps).div_ceil(w) * w
    } else {
        (3 * exp.pulse_period_ps / 2).div_ceil(w) * w
    } as i64;
    let start = tac.start_ps.unwrap_or(-auto_reach);
    let end = tac.end_ps.unwrap_or(auto_reach);
    let windows = if franson {
        PeakWindows::franson(exp.bin_separation_ps, tac.half_width_ps)?
    } else {
        PeakWindows::side_peaks(exp.pulse_period_ps, tac.half_width_ps)?
    };

    let n = tac.phase_average_points;
    let mut hist = TacHistogram::new(w, start, end)?;
    for k in 0..n {
        let mut run = exp.clone();
        if n > 1 {
            run.phases.pump += TAU * k as f64 / n as f64;
            run.seed = derive_seed(exp.seed, k as u64);
        }
        let stream = simulate_run_with(&run, options)?;
        hist.merge(&TacHistogram::build(&stream, w, start, end)?)?;
        let name = if n > 1 {
            format!("events_{k}.txt")
        } else {
            "events.txt".to_string()
        };
        out.write(&name, |f, _| Ok(stream.write_text(f)?))?;
    }
    out.write("tac.csv", |f, h| Ok(write_tac_csv(f, h, &hist)?))?;
    let counts = count_windows(&hist, &windows)?;
    out.write("windows.csv", |f, h| Ok(write_windows_csv(f, h, &counts)?))
}

fn analytic_tables(config: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let dist = joint_detection_distribution(&config.experiment.phases)?;
    for mu in &config.analytic.mu {
        multiphoton_visibility(*mu)?;
    }
    out.write("joint_distribution.csv", |w, h| {
        Ok(write_joint_csv(w, h, &dist)?)
    })?;
    out.write("visibility_curve.csv", |w, h| {
        Ok(write_visibility_curve_csv(w, h, &config.analytic.mu)?)
    })
}
