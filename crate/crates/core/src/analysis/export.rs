//! CSV writers. Every file starts with `#` comment lines supplied by the
//! caller, followed by a column header row.

use std::io::Write;

use crate::analysis::coincidence::CoincidenceCounts;
use crate::analysis::fringe::{FringeScanResult, PowerScanResult, ScanPoint};
use crate::analysis::tac::{TacHistogram, WindowCounts};
use crate::analytic::{multiphoton_visibility, JointDistribution};
use crate::error::Result;

pub fn write_comments<W: Write>(w: &mut W, lines: &[String]) -> Result<()> {
    for line in lines {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

pub fn write_tac_csv<W: Write>(mut w: W, comments: &[String], hist: &TacHistogram) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "# starts: {}", hist.n_starts())?;
    writeln!(w, "bin_center_ps,count")?;
    for (i, n) in hist.counts().iter().enumerate() {
        writeln!(w, "{},{}", hist.bin_center(i), n)?;
    }
    Ok(())
}

pub fn write_windows_csv<W: Write>(
    mut w: W,
    comments: &[String],
    counts: &WindowCounts,
) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "label,low_ps,high_ps,counts")?;
    for (win, n) in &counts.entries {
        writeln!(w, "{},{},{},{}", win.label, win.low_ps(), win.high_ps(), n)?;
    }
    writeln!(w, "outside,,,{}", counts.outside)?;
    Ok(())
}

/// Which coincidence series of a fringe scan to export.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FringeSeries {
    Triple,
    Twofold,
}

pub fn write_fringe_csv<W: Write>(
    mut w: W,
    comments: &[String],
    scan: &FringeScanResult,
    series: FringeSeries,
) -> Result<()> {
    let pick = |p: &ScanPoint| -> CoincidenceCounts {
        match series {
            FringeSeries::Triple => p.triple,
            FringeSeries::Twofold => p.twofold,
        }
    };
    let count_column = match series {
        FringeSeries::Triple => "triple_count",
        FringeSeries::Twofold => "twofold_count",
    };
    write_comments(&mut w, comments)?;
    writeln!(
        w,
        "phase_rad,{count_column},accidental_count,theta_rad,starts,n_pulses,seed"
    )?;
    for p in &scan.points {
        let c = pick(p);
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.phase, c.coincidences, c.accidentals, p.theta, c.starts, p.n_pulses, p.seed
        )?;
    }
    Ok(())
}

pub fn write_power_csv<W: Write>(
    mut w: W,
    comments: &[String],
    scan: &PowerScanResult,
) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(
        w,
        "mu,net_v,sigma_v,raw_v,n_pulses,phase_offset_rad,model_v_exact,model_v_linear"
    )?;
    for p in &scan.points {
        let model = multiphoton_visibility(p.mu)?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            p.mu,
            p.fit.net_v,
            p.fit.sigma_v,
            p.fit.raw_v,
            p.n_pulses,
            p.fit.phase_offset,
            model.v_exact,
            model.v_linear
        )?;
    }
    Ok(())
}

pub fn write_joint_csv<W: Write>(
    mut w: W,
    comments: &[String],
    dist: &JointDistribution,
) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "alice_bin,alice_port,bob_bin,bob_port,probability")?;
    for (o, p) in dist.iter() {
        writeln!(
            w,
            "{},{},{},{},{}",
            o.alice.bin, o.alice.port, o.bob.bin, o.bob.port, p
        )?;
    }
    Ok(())
}

/// Model visibility against mean pair number.
pub fn write_visibility_curve_csv<W: Write>(
    mut w: W,
    comments: &[String],
    mus: &[f64],
) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "p_pair,v_exact,v_linear")?;
    for &mu in mus {
        let m = multiphoton_visibility(mu)?;
        writeln!(w, "{},{},{}", mu, m.v_exact, m.v_linear)?;
    }
    Ok(())
}
