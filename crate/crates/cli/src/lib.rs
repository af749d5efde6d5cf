//! Preset pipelines behind the `timebin-lab` binary.

pub mod config;
mod presets;

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde_json::json;
use thiserror::Error;

pub use config::{resolve_config, validate_config, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    BellScan,
    PowerScan,
    Sidepeak,
    TacHistogram,
    AnalyticTables,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::BellScan,
        Preset::PowerScan,
        Preset::Sidepeak,
        Preset::TacHistogram,
        Preset::AnalyticTables,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::BellScan => "bell-scan",
            Preset::PowerScan => "power-scan",
            Preset::Sidepeak => "sidepeak",
            Preset::TacHistogram => "tac-histogram",
            Preset::AnalyticTables => "analytic-tables",
        }
    }

    /// Configuration layer applied before the user's file.
    pub fn defaults(self) -> serde_json::Value {
        match self {
            Preset::BellScan => json!({ "experiment": { "n_pulses": 5_000_000 } }),
            Preset::PowerScan => json!({ "scan": { "expected_pairs_per_point": 200_000.0 } }),
            Preset::Sidepeak => json!({
                "experiment": {
                    "pump_interferometer": false,
                    "analyzers": false,
                    "n_pulses": 2_000_000
                }
            }),
            Preset::TacHistogram | Preset::AnalyticTables => json!({}),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                CliError::Usage(format!(
                    "unknown preset `{s}` (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },

    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Core(#[from] timebin_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// One invocation of a preset.
#[derive(Clone, Debug)]
pub struct RunRequest {
    pub preset: Preset,
    pub config_path: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    /// Simulation work units; defaults to the thread count.
    pub chunks: Option<usize>,
}

impl RunRequest {
    pub fn new(preset: Preset, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            preset,
            config_path: None,
            overrides: Vec::new(),
            out_dir: out_dir.into(),
            seed: None,
            chunks: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunManifest {
    pub preset: Preset,
    pub config: RunConfig,
    pub out_dir: PathBuf,
    /// Emitted files relative to `out_dir`, `manifest.txt` last.
    pub files: Vec<String>,
    pub duration: Duration,
    pub seed: u64,
    /// `ok`, or the error that stopped the pipeline.
    pub status: String,
}

pub const MANIFEST_FILE: &str = "manifest.txt";

/// Output directory bookkeeping shared by the presets.
pub(crate) struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    header: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path, preset: Preset, config: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            header: vec![
                format!("timebin-lab {preset}"),
                format!("config: {}", config.echo()),
            ],
        })
    }

    /// Creates `name`, hands a buffered writer to `body` and records the file.
    pub(crate) fn write<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>, &[String]) -> Result<(), CliError>,
    {
        let path = self.dir.join(name);
        let werr = |source| CliError::Write {
            path: path.clone(),
            source,
        };
        let file = File::create(&path).map_err(werr)?;
        let mut w = BufWriter::new(file);
        body(&mut w, &self.header)?;
        w.flush().map_err(werr)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `key = value` lines after the header.
    pub(crate) fn write_values(
        &mut self,
        name: &str,
        values: &[(&str, String)],
    ) -> Result<(), CliError> {
        self.write(name, |w, header| {
            let path = PathBuf::from(name);
            let werr = |source| CliError::Write {
                path: path.clone(),
                source,
            };
            timebin_core::analysis::export::write_comments(w, header)?;
            for (k, v) in values {
                writeln!(w, "{k} = {v}").map_err(werr)?;
            }
            Ok(())
        })
    }
}

/// Resolves the configuration, runs the preset and writes its outputs plus
/// `manifest.txt`. Outputs written before a failure are kept and listed.
pub fn run_preset(request: &RunRequest) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let mut overrides = request.overrides.clone();
    if let Some(seed) = request.seed {
        overrides.push(format!("experiment.seed={seed}"));
    }
    let config = resolve_config(
        Some(request.preset),
        request.config_path.as_deref(),
        &overrides,
    )?;
    let diagnostics = config.diagnostics(Some(request.preset));
    if !diagnostics.is_empty() {
        return Err(timebin_core::Error::InvalidConfig(diagnostics).into());
    }

    let mut outputs = Outputs::new(&request.out_dir, request.preset, &config)?;
    let options = timebin_core::engine::SimOptions {
        chunks: request
            .chunks
            .unwrap_or_else(|| timebin_core::engine::SimOptions::default().chunks),
        record_ground_truth: false,
    };
    let result = presets::run(request.preset, &config, &options, &mut outputs);

    let mut files = outputs.files;
    files.push(MANIFEST_FILE.to_string());
    let manifest = RunManifest {
        preset: request.preset,
        seed: config.experiment.seed,
        config,
        out_dir: request.out_dir.clone(),
        files,
        duration: started.elapsed(),
        status: match &result {
            Ok(()) => "ok".to_string(),
            Err(e) => format!("failed: {e}"),
        },
    };
    write_manifest(&manifest)?;
    result.map(|()| manifest)
}

fn write_manifest(m: &RunManifest) -> Result<(), CliError> {
    let path = m.out_dir.join(MANIFEST_FILE);
    let werr = |source| CliError::Write {
        path: path.clone(),
        source,
    };
    let mut w = BufWriter::new(File::create(&path).map_err(werr)?);
    writeln!(w, "preset = {}", m.preset).map_err(werr)?;
    writeln!(w, "status = {}", m.status).map_err(werr)?;
    writeln!(w, "seed = {}", m.seed).map_err(werr)?;
    writeln!(w, "out_dir = {}", m.out_dir.display()).map_err(werr)?;
    writeln!(w, "duration_s = {:.3}", m.duration.as_secs_f64()).map_err(werr)?;
    writeln!(w, "files = {}", m.files.join(" ")).map_err(werr)?;
    writeln!(w, "config = {}", m.config.echo()).map_err(werr)?;
    w.flush().map_err(werr)
}
