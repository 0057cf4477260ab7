//! The four subcommands. Each reads a validated [`RunConfig`] and writes its
//! files into the configured output directory.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use rangenav::cascade::{run_cascade, CascadeError, CascadeRun, RunSummary};
use rangenav::observability::{
    cross_check, sliding_starts, CrossCheckReport, GramianLevel, ObservabilityError,
    ScenarioSignals,
};
use rangenav::scenario::{run_truth, sense_run, RigidBodyTruth, ScenarioError, SensorSample};

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Diverged(#[from] CascadeError),
    #[error("observability audit failed: {0}")]
    AuditFailed(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Observability(#[from] ObservabilityError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::AuditFailed(_) => 4,
            CliError::Io { .. } | CliError::Scenario(_) | CliError::Observability(_) => 1,
        }
    }
}

/// `{:.16e}` keeps 17 significant digits, enough to round-trip an f64.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(num).collect::<Vec<_>>().join(",")
}

fn header(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn axes(prefix: &str) -> Vec<String> {
    ["x", "y", "z"]
        .iter()
        .map(|a| format!("{prefix}_{a}"))
        .collect()
}

struct CsvFile {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvFile {
    fn create(dir: &Path, name: &str, columns: &[String]) -> Result<Self, CliError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        let mut csv = CsvFile {
            path,
            out: BufWriter::new(file),
        };
        csv.line(&columns.join(","))?;
        Ok(csv)
    }

    fn line(&mut self, text: &str) -> Result<(), CliError> {
        writeln!(self.out, "{text}").map_err(|source| CliError::Io {
            path: self.path.clone(),
            source,
        })
    }

    fn finish(mut self) -> Result<PathBuf, CliError> {
        self.out.flush().map_err(|source| CliError::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(self.path)
    }
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_owned(),
        source,
    })
}

pub fn simulate_data(
    config: &RunConfig,
) -> Result<(Vec<RigidBodyTruth>, Vec<SensorSample>), CliError> {
    let world = config.world();
    let truth = run_truth(&config.trajectory(), &world, config.dt, config.duration)?;
    let samples = sense_run(&truth, &world, &config.noise());
    Ok((truth, samples))
}

fn sim_columns() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend(axes("p_I"));
    cols.extend(axes("v_I"));
    cols.extend(header("R", 9));
    cols.extend(axes("a_B"));
    cols.extend(axes("omega"));
    cols.push("d_y".into());
    cols.extend(axes("omega_y"));
    cols.extend(axes("a_y"));
    cols.extend(axes("m_y"));
    cols
}

fn write_sim(
    dir: &Path,
    truth: &[RigidBodyTruth],
    samples: &[SensorSample],
) -> Result<PathBuf, CliError> {
    let mut csv = CsvFile::create(dir, "sim.csv", &sim_columns())?;
    for (tr, s) in truth.iter().zip(samples) {
        let mut row: Vec<f64> = vec![tr.t];
        row.extend(tr.p_i.iter());
        row.extend(tr.v_i.iter());
        row.extend(tr.r.row_major());
        row.extend(tr.a_b.iter());
        row.extend(tr.omega.iter());
        row.push(s.d_y);
        row.extend(s.omega_y.iter());
        row.extend(s.a_y_b.iter());
        row.extend(s.m_y_b.iter());
        csv.line(&join(row))?;
    }
    csv.finish()
}

/// Truth and sensor log: `sim.csv` with `T/dt + 1` rows.
pub fn cmd_simulate(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let (truth, samples) = simulate_data(config)?;
    ensure_dir(&config.out)?;
    Ok(vec![write_sim(&config.out, &truth, &samples)?])
}

fn write_estimates(dir: &Path, run: &CascadeRun) -> Result<Vec<PathBuf>, CliError> {
    let mut cols = vec!["t".to_string()];
    cols.extend(header("xi_", 4));
    cols.extend(axes("p_B_hat"));
    cols.extend(axes("v_B_hat"));
    cols.extend(axes("g_B_hat"));
    cols.extend(["trace_P", "min_eig_P", "innovation"].map(String::from));
    let mut est = CsvFile::create(dir, "estimates.csv", &cols)?;

    let mut cols = vec!["t".to_string()];
    cols.extend(header("R_hat", 9));
    cols.push("attitude_error_rad".into());
    let mut att = CsvFile::create(dir, "attitude.csv", &cols)?;

    for r in &run.records {
        let mut row = vec![r.t];
        row.extend(r.x_hat.iter());
        row.extend([r.trace_p, r.min_eig_p, r.innovation]);
        est.line(&join(row))?;

        let mut row = vec![r.t];
        row.extend(r.r_hat.row_major());
        row.push(r.attitude_error);
        att.line(&join(row))?;
    }
    Ok(vec![est.finish()?, att.finish()?])
}

/// Observability margins of the configured scenario over sliding windows.
pub fn audit_report(config: &RunConfig) -> Result<CrossCheckReport, CliError> {
    config.check_audit_fits()?;
    let signals = ScenarioSignals::new(
        &config.trajectory(),
        &config.world(),
        config.dt / 2.0,
        config.duration,
    )?;
    let starts = sliding_starts(config.duration, config.audit_window, config.audit_stride);
    Ok(cross_check(
        &signals,
        &starts,
        config.audit_window,
        config.dt,
        config.audit_threshold,
    )?)
}

/// Runs the cascade and returns the step records with their summary.
pub fn observe_run(
    config: &RunConfig,
) -> Result<
    (
        Vec<RigidBodyTruth>,
        Vec<SensorSample>,
        CascadeRun,
        RunSummary,
    ),
    CliError,
> {
    let started = Instant::now();
    let (truth, samples) = simulate_data(config)?;
    let run = run_cascade(&truth, &samples, &config.world(), &config.cascade())?;
    let mut summary = RunSummary::from_records(&run.records, 5.0f64.min(config.duration));
    if config.audit_fits() {
        let report = audit_report(config)?;
        summary.pe_margin = Some(report.margin(GramianLevel::PePhi));
        summary.full_gramian_margin = Some(report.margin(GramianLevel::FullAugmented));
        summary.reduced_gramian_margin = Some(report.margin(GramianLevel::ReducedPair));
    }
    summary.wall_time_s = Some(started.elapsed().as_secs_f64());
    Ok((truth, samples, run, summary))
}

/// Full cascade: `sim.csv`, `estimates.csv`, `attitude.csv` and `summary.txt`.
pub fn cmd_observe(config: &RunConfig) -> Result<(Vec<PathBuf>, RunSummary), CliError> {
    let (truth, samples, run, summary) = observe_run(config)?;
    ensure_dir(&config.out)?;
    let mut files = vec![write_sim(&config.out, &truth, &samples)?];
    files.extend(write_estimates(&config.out, &run)?);
    files.push(write_text(
        &config.out,
        "summary.txt",
        &summary.to_key_values(),
    )?);
    Ok((files, summary))
}

/// Sliding-window audit: `audit.csv` and `audit_summary.txt`. Fails with
/// [`CliError::AuditFailed`] when any level's margin is at or below the threshold.
pub fn cmd_audit(config: &RunConfig) -> Result<(Vec<PathBuf>, CrossCheckReport), CliError> {
    let report = audit_report(config)?;
    ensure_dir(&config.out)?;
    let cols = ["window_start", "delta", "level", "min_eig"].map(String::from);
    let mut csv = CsvFile::create(&config.out, "audit.csv", &cols)?;
    let levels = [
        GramianLevel::FullAugmented,
        GramianLevel::ReducedPair,
        GramianLevel::PePhi,
    ];
    for row in &report.rows {
        for level in levels {
            csv.line(&format!(
                "{},{},{},{}",
                num(row.t_start),
                num(row.delta),
                level.name(),
                num(row.level_value(level))
            ))?;
        }
    }
    let mut files = vec![csv.finish()?];

    let mut text = String::new();
    for level in levels {
        text.push_str(&format!(
            "{}_margin={}\n",
            level.name(),
            num(report.margin(level))
        ));
    }
    text.push_str(&format!("e_set_margin={}\n", num(report.e_set_margin())));
    text.push_str(&format!("windows={}\n", report.rows.len()));
    text.push_str(&format!("threshold={}\n", num(config.audit_threshold)));
    text.push_str(&format!("disagreement={}\n", report.any_disagreement()));
    let failing: Vec<&str> = levels
        .iter()
        .filter(|l| !(report.margin(**l) > config.audit_threshold))
        .map(|l| l.name())
        .collect();
    let pass = !report.rows.is_empty() && failing.is_empty();
    text.push_str(&format!("pass={pass}\n"));
    files.push(write_text(&config.out, "audit_summary.txt", &text)?);

    if !pass {
        let why = if report.rows.is_empty() {
            "no complete window fits in the run".to_string()
        } else {
            format!(
                "margin at or below {:e} for {}",
                config.audit_threshold,
                failing.join(", ")
            )
        };
        return Err(CliError::AuditFailed(why));
    }
    Ok((files, report))
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub summary: RunSummary,
}

fn sweep_point(base: &RunConfig, param: &str, value: f64) -> Result<SweepRow, CliError> {
    let config = base.with_param(param, value)?;
    let (truth, samples) = simulate_data(&config)?;
    let run = run_cascade(&truth, &samples, &config.world(), &config.cascade())?;
    Ok(SweepRow {
        value,
        summary: RunSummary::from_records(&run.records, 5.0f64.min(config.duration)),
    })
}

/// Runs the grid in parallel; rows keep grid order. Writes `sweep.csv`.
pub fn cmd_sweep(config: &RunConfig) -> Result<(Vec<PathBuf>, Vec<SweepRow>), CliError> {
    let (param, values) = config.sweep_grid()?;
    for v in &values {
        config.with_param(&param, *v)?;
    }
    let rows = values
        .par_iter()
        .map(|v| sweep_point(config, &param, *v))
        .collect::<Result<Vec<_>, _>>()?;

    ensure_dir(&config.out)?;
    let cols: Vec<String> = [
        param.as_str(),
        "final_p_err",
        "final_v_err",
        "final_g_err",
        "rms_p_err",
        "rms_v_err",
        "rms_g_err",
        "final_attitude_err",
        "rms_attitude_err",
    ]
    .map(String::from)
    .to_vec();
    let mut csv = CsvFile::create(&config.out, "sweep.csv", &cols)?;
    for row in &rows {
        let s = &row.summary;
        csv.line(&join([
            row.value,
            s.final_p_err,
            s.final_v_err,
            s.final_g_err,
            s.rms_p_err,
            s.rms_v_err,
            s.rms_g_err,
            s.final_attitude_err,
            s.rms_attitude_err,
        ]))?;
    }
    Ok((vec![csv.finish()?], rows))
}
