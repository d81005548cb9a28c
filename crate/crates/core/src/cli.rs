//! Command-line front end: configuration loading, experiment sweeps, and
//! result persistence.
//!
//! Every command reads a single JSON config (unknown keys rejected), writes
//! its outputs into `--out`, and leaves a `manifest.json` recording the fully
//! resolved configuration, a content hash of it, the scheme version, wall
//! time, and a result summary. Exit codes: 0 success, 2 configuration or
//! validation error, 3 numerical failure.
//!
//! Determinism: a run's CSV output is a pure function of config + grid +
//! scheme version. Sweep rows are computed on a bounded worker pool, then
//! sorted by axis value, so the bytes are independent of `--parallelism`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::eigen::{self, EigenProblem, ThresholdKind, ThresholdResult};
use crate::model::{BirthRateField, InitialData, ModelError, ModelParams};
use crate::ode::{self, CompartmentParams, CompartmentState, UvParams};
use crate::pde::{self, Classification, DtPolicy, Grid, PdeError, RunOptions, Sample};
use crate::semiwave::{self, SemiWaveError, SemiWaveProblem};
use crate::SCHEME_VERSION;

// ---------------------------------------------------------------------------
// Errors and exit codes

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, unreadable/unwritable files: exit 2.
    Validation(String),
    /// Solver failure on a valid configuration: exit 3.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "invalid configuration: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PdeError> for CliError {
    fn from(e: PdeError) -> Self {
        match e {
            PdeError::Model(m) => CliError::Validation(m.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<eigen::EigenError> for CliError {
    fn from(e: eigen::EigenError) -> Self {
        match e {
            eigen::EigenError::Model(m) => CliError::Validation(m.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<SemiWaveError> for CliError {
    fn from(e: SemiWaveError) -> Self {
        match e {
            SemiWaveError::Model(m) => CliError::Validation(m.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<ode::OdeError> for CliError {
    fn from(e: ode::OdeError) -> Self {
        match e {
            ode::OdeError::Model(m) => CliError::Validation(m.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Argument parsing

#[derive(Parser)]
#[command(
    name = "wolfront",
    version,
    about = "Free-boundary reaction-diffusion solver for Wolbachia invasion fronts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one free-boundary run; writes series.csv + manifest.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a one-parameter family of simulations; writes sweep.csv,
    /// per-run manifests, and manifest.json.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for the sweep.
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Principal eigenvalue of the Neumann–Dirichlet problem; writes
    /// eigen.json + phi.csv + manifest.json.
    Eigen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Semi-wave spreading speed; writes speed.json (+ optional profile.csv,
    /// speed_sweep.csv) + manifest.json.
    Speed {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Critical-parameter root finding; writes threshold.json + manifest.json.
    Threshold {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Well-mixed compartment models; writes series.csv + manifest.json.
    Ode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Simulate { config, out } => cmd_simulate(config, out),
        Command::Sweep {
            config,
            out,
            parallelism,
        } => cmd_sweep(config, out, *parallelism),
        Command::Eigen { config, out } => cmd_eigen(config, out),
        Command::Speed { config, out } => cmd_speed(config, out),
        Command::Threshold { config, out } => cmd_threshold(config, out),
        Command::Ode { config, out } => cmd_ode(config, out),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", out.display())))
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Deterministic float formatting for CSV cells: plain decimal in a sane
/// magnitude window, scientific notation outside it.
fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let a = x.abs();
    if (1e-4..1e7).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Validation(e.to_string()))
}

/// Writes `manifest.json`: resolved config, its content hash, scheme version,
/// wall time, and the command-specific result payload.
fn write_manifest(
    out: &Path,
    command: &str,
    config: &Value,
    wall_time_s: f64,
    result: Value,
) -> Result<(), CliError> {
    let manifest = manifest_value(command, config, wall_time_s, result)?;
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Validation(e.to_string()))?;
    write_file(&out.join("manifest.json"), &(text + "\n"))
}

fn manifest_value(
    command: &str,
    config: &Value,
    wall_time_s: f64,
    result: Value,
) -> Result<Value, CliError> {
    let canonical =
        serde_json::to_string(config).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(json!({
        "command": command,
        "scheme_version": SCHEME_VERSION,
        "config": config,
        "config_sha256": sha256_hex(canonical.as_bytes()),
        "wall_time_s": wall_time_s,
        "result": result,
    }))
}

// ---------------------------------------------------------------------------
// Simulation config

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsSpec {
    d1: f64,
    d2: f64,
    delta1: f64,
    delta2: f64,
    mu: f64,
    h0: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    #[serde(default)]
    n_u: Option<usize>,
    #[serde(default)]
    n_v: Option<usize>,
    #[serde(default)]
    xmax: Option<f64>,
    #[serde(default)]
    dt_policy: Option<DtPolicy>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSpec {
    #[serde(default = "default_horizon")]
    horizon: f64,
    #[serde(default)]
    sample_dt: Option<f64>,
    #[serde(default)]
    stop_h: Option<f64>,
}

fn default_horizon() -> f64 {
    50.0
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            horizon: default_horizon(),
            sample_dt: None,
            stop_h: None,
        }
    }
}

/// One simulation: model parameters, birth-rate fields, optional initial
/// data / grid / run-control sections (defaults filled during resolution).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    params: ParamsSpec,
    b1: BirthRateField,
    b2: BirthRateField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init: Option<InitialData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run: Option<RunSpec>,
}

struct ResolvedSim {
    params: ModelParams,
    init: InitialData,
    grid: Grid,
    run: RunSpec,
}

impl SimConfig {
    fn resolve(&self) -> ResolvedSim {
        let params = ModelParams {
            d1: self.params.d1,
            d2: self.params.d2,
            delta1: self.params.delta1,
            delta2: self.params.delta2,
            mu: self.params.mu,
            h0: self.params.h0,
            b1: self.b1.clone(),
            b2: self.b2.clone(),
        };
        let gs = self.grid.unwrap_or_default();
        let defaults = Grid::default_for(&params);
        let grid = Grid {
            n_u: gs.n_u.unwrap_or(defaults.n_u),
            n_v: gs.n_v.unwrap_or(defaults.n_v),
            xmax: gs.xmax.unwrap_or(defaults.xmax),
            dt_policy: gs.dt_policy.unwrap_or(defaults.dt_policy),
        };
        let init = self
            .init
            .clone()
            .unwrap_or_else(|| InitialData::default_for(&params, grid.xmax));
        ResolvedSim {
            params,
            init,
            grid,
            run: self.run.unwrap_or_default(),
        }
    }
}

impl ResolvedSim {
    fn config_value(&self) -> Result<Value, CliError> {
        Ok(json!({
            "params": {
                "d1": self.params.d1,
                "d2": self.params.d2,
                "delta1": self.params.delta1,
                "delta2": self.params.delta2,
                "mu": self.params.mu,
                "h0": self.params.h0,
            },
            "b1": to_value(&self.params.b1)?,
            "b2": to_value(&self.params.b2)?,
            "init": to_value(&self.init)?,
            "grid": to_value(&self.grid)?,
            "run": to_value(&self.run)?,
        }))
    }

    fn run_options(&self) -> RunOptions {
        let mut opts = RunOptions::new(self.run.horizon);
        opts.sample_dt = self.run.sample_dt;
        opts.stop_h = self.run.stop_h;
        opts
    }
}

fn series_csv(series: &[Sample]) -> String {
    let mut csv = String::from("t,h,dhdt,sup_u,sup_v,mass_u\n");
    for s in series {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_g(s.t),
            fmt_g(s.h),
            fmt_g(s.dhdt),
            fmt_g(s.sup_u),
            fmt_g(s.sup_v),
            fmt_g(s.mass_u)
        ));
    }
    csv
}

fn sim_result_value(result: &pde::RunResult) -> Value {
    let mut payload = json!({
        "classification": result.classification,
        "lambda": result.diagnostics.lambda,
        "h_final": result.final_state.h,
        "t_final": result.final_state.t,
        "final_sup_u": result.diagnostics.final_sup_u,
        "final_sup_v": result.diagnostics.final_sup_v,
        "steps": result.diagnostics.steps,
        "dt_refined": result.diagnostics.dt_refined,
    });
    if let Ok(speed) = pde::measure_speed(result, 0.5) {
        payload["measured_speed"] = json!(speed);
    }
    payload
}

pub fn cmd_simulate(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let config: SimConfig = read_json(config_path)?;
    let resolved = config.resolve();
    ensure_out_dir(out_dir)?;
    let started = Instant::now();
    let result = pde::run(
        &resolved.params,
        &resolved.init,
        &resolved.grid,
        resolved.run_options(),
    )?;
    let wall = started.elapsed().as_secs_f64();
    write_file(&out_dir.join("series.csv"), &series_csv(&result.series))?;
    write_manifest(
        out_dir,
        "simulate",
        &resolved.config_value()?,
        wall,
        sim_result_value(&result),
    )
}

// ---------------------------------------------------------------------------
// Sweeps

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SweepValues {
    List { values: Vec<f64> },
    Linspace { lo: f64, hi: f64, count: usize },
    Logspace { lo: f64, hi: f64, count: usize },
}

impl SweepValues {
    fn expand(&self) -> Result<Vec<f64>, CliError> {
        let values = match self {
            SweepValues::List { values } => values.clone(),
            SweepValues::Linspace { lo, hi, count } => {
                if *count < 2 {
                    return Err(CliError::Validation("linspace needs count >= 2".into()));
                }
                (0..*count)
                    .map(|i| lo + (hi - lo) * i as f64 / (*count - 1) as f64)
                    .collect()
            }
            SweepValues::Logspace { lo, hi, count } => {
                if *count < 2 {
                    return Err(CliError::Validation("logspace needs count >= 2".into()));
                }
                if !(*lo > 0.0 && *hi > 0.0) {
                    return Err(CliError::Validation(
                        "logspace endpoints must be positive".into(),
                    ));
                }
                let (llo, lhi) = (lo.ln(), hi.ln());
                (0..*count)
                    .map(|i| (llo + (lhi - llo) * i as f64 / (*count - 1) as f64).exp())
                    .collect()
            }
        };
        if values.is_empty() {
            return Err(CliError::Validation("sweep values must be nonempty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Validation("sweep values must be finite".into()));
        }
        Ok(values)
    }
}

/// A one-parameter experiment family: `axis` names the swept scalar.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    axis: String,
    values: SweepValues,
    base: SimConfig,
}

fn apply_axis(config: &mut SimConfig, axis: &str, value: f64) -> Result<(), CliError> {
    match axis {
        "params.d1" => config.params.d1 = value,
        "params.d2" => config.params.d2 = value,
        "params.delta1" => config.params.delta1 = value,
        "params.delta2" => config.params.delta2 = value,
        "params.mu" => config.params.mu = value,
        "params.h0" => config.params.h0 = value,
        other => {
            return Err(CliError::Validation(format!(
                "unknown sweep axis {other:?}; expected one of params.{{d1,d2,delta1,delta2,mu,h0}}"
            )))
        }
    }
    Ok(())
}

struct SweepRow {
    index: usize,
    axis_value: f64,
    classification: String,
    h_final: Option<f64>,
    measured_speed: Option<f64>,
    manifest: Value,
}

fn sweep_one(spec: &SweepSpec, index: usize, value: f64) -> SweepRow {
    let started = Instant::now();
    let attempt = || -> Result<(Value, pde::RunResult), CliError> {
        let mut config = spec.base.clone();
        apply_axis(&mut config, &spec.axis, value)?;
        let resolved = config.resolve();
        let result = pde::run(
            &resolved.params,
            &resolved.init,
            &resolved.grid,
            resolved.run_options(),
        )?;
        Ok((resolved.config_value()?, result))
    };
    match attempt() {
        Ok((config_value, result)) => {
            let speed = if result.classification == Classification::Spreading {
                pde::measure_speed(&result, 0.5).ok()
            } else {
                None
            };
            let wall = started.elapsed().as_secs_f64();
            let manifest =
                manifest_value("sweep-run", &config_value, wall, sim_result_value(&result))
                    .unwrap_or_else(|e| json!({ "error": e.to_string() }));
            SweepRow {
                index,
                axis_value: value,
                classification: result.classification.to_string(),
                h_final: Some(result.final_state.h),
                measured_speed: speed,
                manifest,
            }
        }
        Err(e) => SweepRow {
            index,
            axis_value: value,
            classification: "Failed".to_string(),
            h_final: None,
            measured_speed: None,
            manifest: json!({
                "command": "sweep-run",
                "scheme_version": SCHEME_VERSION,
                "axis_value": value,
                "error": e.to_string(),
            }),
        },
    }
}

pub fn cmd_sweep(config_path: &Path, out_dir: &Path, parallelism: usize) -> Result<(), CliError> {
    let spec: SweepSpec = read_json(config_path)?;
    let values = spec.values.expand()?;
    // reject the axis name once up front rather than once per row
    apply_axis(&mut spec.base.clone(), &spec.axis, values[0])?;
    ensure_out_dir(out_dir)?;
    let started = Instant::now();

    let workers = parallelism.max(1).min(values.len());
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new((0..values.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= values.len() {
                    break;
                }
                let row = sweep_one(&spec, i, values[i]);
                rows.lock().unwrap()[i] = Some(row);
            });
        }
    });
    let mut rows: Vec<SweepRow> = rows
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every sweep row computed"))
        .collect();
    // ordered by axis value regardless of completion order; ties keep the
    // config-file order
    rows.sort_by(|a, b| {
        a.axis_value
            .partial_cmp(&b.axis_value)
            .unwrap()
            .then(a.index.cmp(&b.index))
    });

    let mut csv = String::from("axis_value,classification,h_final,measured_speed\n");
    let mut failed = 0usize;
    for row in &rows {
        if row.classification == "Failed" {
            failed += 1;
        }
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_g(row.axis_value),
            row.classification,
            row.h_final.map(fmt_g).unwrap_or_default(),
            row.measured_speed.map(fmt_g).unwrap_or_default()
        ));
    }
    write_file(&out_dir.join("sweep.csv"), &csv)?;
    for row in &rows {
        let text = serde_json::to_string_pretty(&row.manifest)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        write_file(
            &out_dir.join(format!("run_{:04}.manifest.json", row.index)),
            &(text + "\n"),
        )?;
    }

    let config_value = json!({
        "axis": spec.axis,
        "values": values,
        "base": to_value(&spec.base)?,
    });
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for row in &rows {
        *counts.entry(row.classification.clone()).or_default() += 1;
    }
    write_manifest(
        out_dir,
        "sweep",
        &config_value,
        started.elapsed().as_secs_f64(),
        json!({ "rows": rows.len(), "failed": failed, "classifications": counts }),
    )
}

// ---------------------------------------------------------------------------
// Eigen / speed / threshold / ode commands

fn default_eigen_n() -> usize {
    2048
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    d: f64,
    b: BirthRateField,
    h0: f64,
    #[serde(default = "default_eigen_n")]
    n: usize,
}

pub fn cmd_eigen(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let config: EigenConfig = read_json(config_path)?;
    ensure_out_dir(out_dir)?;
    let started = Instant::now();
    let problem = EigenProblem {
        d: config.d,
        b: config.b.clone(),
        h0: config.h0,
        n: config.n,
    };
    let result = eigen::principal_eigen(&problem)?;
    let payload = json!({
        "lambda1": result.lambda1,
        "d": config.d,
        "h0": config.h0,
        "n": config.n,
    });
    write_file(
        &out_dir.join("eigen.json"),
        &(serde_json::to_string_pretty(&payload)
            .map_err(|e| CliError::Validation(e.to_string()))?
            + "\n"),
    )?;
    let mut phi_csv = String::from("x,phi\n");
    for (x, p) in result.xs.iter().zip(&result.phi1) {
        phi_csv.push_str(&format!("{},{}\n", fmt_g(*x), fmt_g(*p)));
    }
    write_file(&out_dir.join("phi.csv"), &phi_csv)?;
    let config_value = json!({
        "d": config.d,
        "b": to_value(&config.b)?,
        "h0": config.h0,
        "n": config.n,
    });
    write_manifest(
        out_dir,
        "eigen",
        &config_value,
        started.elapsed().as_secs_f64(),
        json!({ "lambda1": result.lambda1 }),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedConfig {
    d: f64,
    a: f64,
    delta: f64,
    mu: f64,
    /// Also write the semi-wave profile as profile.csv.
    #[serde(default)]
    profile: bool,
    /// Additional μ values solved into speed_sweep.csv.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu_sweep: Option<Vec<f64>>,
}

pub fn cmd_speed(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let config: SpeedConfig = read_json(config_path)?;
    ensure_out_dir(out_dir)?;
    let started = Instant::now();
    let problem = SemiWaveProblem {
        d: config.d,
        a: config.a,
        delta: config.delta,
        mu: config.mu,
    };
    let result = semiwave::solve_beta0(&problem)?;
    let payload = json!({
        "beta0": result.beta0,
        "uprime0": result.uprime0,
        "mu": config.mu,
        "a": config.a,
        "delta": config.delta,
        "d": config.d,
        "residual": result.residual,
    });
    write_file(
        &out_dir.join("speed.json"),
        &(serde_json::to_string_pretty(&payload)
            .map_err(|e| CliError::Validation(e.to_string()))?
            + "\n"),
    )?;
    if config.profile {
        let mut csv = String::from("x,U\n");
        for (x, u) in result.profile.xs.iter().zip(&result.profile.us) {
            csv.push_str(&format!("{},{}\n", fmt_g(*x), fmt_g(*u)));
        }
        write_file(&out_dir.join("profile.csv"), &csv)?;
    }
    if let Some(mus) = &config.mu_sweep {
        let mut csv = String::from("mu,beta0\n");
        for &mu in mus {
            let r = semiwave::solve_beta0(&SemiWaveProblem { mu, ..problem })?;
            csv.push_str(&format!("{},{}\n", fmt_g(mu), fmt_g(r.beta0)));
        }
        write_file(&out_dir.join("speed_sweep.csv"), &csv)?;
    }
    write_manifest(
        out_dir,
        "speed",
        &to_value(&config)?,
        started.elapsed().as_secs_f64(),
        payload,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdConfig {
    /// Critical diffusivity via eigen-bisection.
    D1Star {
        b: BirthRateField,
        h0: f64,
        bracket: (f64, f64),
        #[serde(default = "default_eigen_n")]
        n: usize,
    },
    /// Critical habitat size via eigen-bisection.
    HStar {
        d: f64,
        b: BirthRateField,
        bracket: (f64, f64),
        #[serde(default = "default_eigen_n")]
        n: usize,
    },
    /// Smallest μ observed to spread, via simulation bisection.
    MuBar {
        sim: SimConfig,
        bracket: (f64, f64),
        budget: u32,
        horizon: f64,
    },
    /// Largest μ observed to vanish, via simulation bisection.
    MuLower {
        sim: SimConfig,
        bracket: (f64, f64),
        budget: u32,
        horizon: f64,
    },
}

pub fn cmd_threshold(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let config: ThresholdConfig = read_json(config_path)?;
    ensure_out_dir(out_dir)?;
    let started = Instant::now();
    let result: ThresholdResult = match &config {
        ThresholdConfig::D1Star { b, h0, bracket, n } => eigen::find_d1_star(b, *h0, *bracket, *n)?,
        ThresholdConfig::HStar { d, b, bracket, n } => eigen::find_h_star(*d, b, *bracket, *n)?,
        ThresholdConfig::MuBar {
            sim,
            bracket,
            budget,
            horizon,
        }
        | ThresholdConfig::MuLower {
            sim,
            bracket,
            budget,
            horizon,
        } => {
            let kind = match &config {
                ThresholdConfig::MuBar { .. } => ThresholdKind::MuBar,
                _ => ThresholdKind::MuLower,
            };
            let resolved = sim.resolve();
            eigen::find_mu_threshold(
                kind,
                &resolved.params,
                &resolved.init,
                &resolved.grid,
                *bracket,
                *budget,
                *horizon,
            )?
        }
    };
    let payload = to_value(&result)?;
    write_file(
        &out_dir.join("threshold.json"),
        &(serde_json::to_string_pretty(&payload)
            .map_err(|e| CliError::Validation(e.to_string()))?
            + "\n"),
    )?;
    write_manifest(
        out_dir,
        "threshold",
        &to_value(&config)?,
        started.elapsed().as_secs_f64(),
        payload,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case", deny_unknown_fields)]
pub enum OdeConfig {
    /// The 2-species well-mixed system.
    TwoSpecies {
        params: UvParams,
        u0: f64,
        v0: f64,
        horizon: f64,
        dt: f64,
    },
    /// The 6-compartment release + CI model.
    Compartments {
        params: CompartmentParams,
        state0: CompartmentState,
        horizon: f64,
        dt: f64,
    },
}

pub fn cmd_ode(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let config: OdeConfig = read_json(config_path)?;
    ensure_out_dir(out_dir)?;
    let started = Instant::now();
    let result: Value;
    let csv: String;
    match &config {
        OdeConfig::TwoSpecies {
            params,
            u0,
            v0,
            horizon,
            dt,
        } => {
            let traj = ode::integrate_uv(params, *u0, *v0, *horizon, *dt)?;
            let mut text = String::from("t,u,v\n");
            for (t, u, v) in &traj {
                text.push_str(&format!("{},{},{}\n", fmt_g(*t), fmt_g(*u), fmt_g(*v)));
            }
            csv = text;
            let (t, u, v) = *traj.last().expect("nonempty trajectory");
            result = json!({ "t_final": t, "u_final": u, "v_final": v });
        }
        OdeConfig::Compartments {
            params,
            state0,
            horizon,
            dt,
        } => {
            let traj = ode::integrate_compartments(params, state0, *horizon, *dt)?;
            let mut text = String::from("t,rf,rm,i_f,i_m,u_f,u_m,u,v\n");
            for (t, s) in &traj {
                let (u, v) = s.uv();
                text.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    fmt_g(*t),
                    fmt_g(s.rf),
                    fmt_g(s.rm),
                    fmt_g(s.i_f),
                    fmt_g(s.i_m),
                    fmt_g(s.u_f),
                    fmt_g(s.u_m),
                    fmt_g(u),
                    fmt_g(v)
                ));
            }
            csv = text;
            let (t, s) = traj.last().expect("nonempty trajectory");
            let (u, v) = s.uv();
            let mut payload = json!({
                "t_final": t,
                "state_final": to_value(s)?,
                "u_final": u,
                "v_final": v,
            });
            // equal-determination configs admit the 2-species reduction;
            // report the agreement so the config's symmetry is auditable
            if let Some(report) = reduction_report(params, state0, *horizon, *dt)? {
                payload["reduction_check"] = report;
            }
            result = payload;
        }
    }
    write_file(&out_dir.join("series.csv"), &csv)?;
    write_manifest(
        out_dir,
        "ode",
        &to_value(&config)?,
        started.elapsed().as_secs_f64(),
        result,
    )
}

/// For symmetric configs (equal sex determination, no releases, equal male
/// and female pools), integrates the reduced 2-species system and reports
/// the maximum relative deviation from the 6-compartment trajectory.
fn reduction_report(
    params: &CompartmentParams,
    state0: &CompartmentState,
    horizon: f64,
    dt: f64,
) -> Result<Option<Value>, CliError> {
    let symmetric = params.delta_sex == 0.5
        && state0.rf == 0.0
        && state0.rm == 0.0
        && state0.i_f == state0.i_m
        && state0.u_f == state0.u_m;
    if !symmetric {
        return Ok(None);
    }
    let full = ode::integrate_compartments(params, state0, horizon, dt)?;
    let reduced = ode::integrate_uv(
        &UvParams {
            b1: params.b_i / 2.0,
            b2: params.b_u / 2.0,
            delta1: params.delta1,
            delta2: params.delta2,
        },
        state0.i_f + state0.i_m,
        state0.u_f + state0.u_m,
        horizon,
        dt,
    )?;
    let scale = full
        .iter()
        .map(|(_, s)| s.total())
        .fold(f64::MIN_POSITIVE, f64::max);
    let mut max_rel = 0.0f64;
    for ((_, s), (_, u2, v2)) in full.iter().zip(&reduced) {
        let (u, v) = s.uv();
        max_rel = max_rel
            .max((u - u2).abs() / scale)
            .max((v - v2).abs() / scale);
    }
    Ok(Some(json!({ "max_rel_deviation": max_rel })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
        path
    }

    fn tiny_sim_config() -> Value {
        json!({
            "params": {"d1": 1.0, "d2": 1.0, "delta1": 1.0, "delta2": 1.0, "mu": 1.0, "h0": 1.0},
            "b1": {"kind": "constant", "value": 2.0},
            "b2": {"kind": "constant", "value": 1.0},
            "grid": {"n_u": 16, "n_v": 32, "dt_policy": {"kind": "fixed", "dt": 1e-3}},
            "run": {"horizon": 0.2, "sample_dt": 0.02}
        })
    }

    #[test]
    fn fmt_g_is_deterministic_and_readable() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(0.5), "0.5");
        assert_eq!(fmt_g(-3.25), "-3.25");
        assert_eq!(fmt_g(1e-7), "1e-7");
        assert_eq!(fmt_g(1.5e9), "1.5e9");
    }

    #[test]
    fn sim_config_rejects_unknown_fields() {
        let mut cfg = tiny_sim_config();
        cfg["surprise"] = json!(1);
        let err = serde_json::from_value::<SimConfig>(cfg).unwrap_err();
        assert!(err.to_string().contains("surprise"));
    }

    #[test]
    fn sweep_values_expand() {
        let lin = SweepValues::Linspace {
            lo: 0.0,
            hi: 1.0,
            count: 5,
        };
        assert_eq!(lin.expand().unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let log = SweepValues::Logspace {
            lo: 0.01,
            hi: 100.0,
            count: 5,
        };
        let vals = log.expand().unwrap();
        assert_eq!(vals.len(), 5);
        assert!((vals[2] - 1.0).abs() < 1e-12);
        assert!(matches!(
            SweepValues::Logspace {
                lo: -1.0,
                hi: 1.0,
                count: 3
            }
            .expand(),
            Err(CliError::Validation(_))
        ));
        assert!(matches!(
            SweepValues::List { values: vec![] }.expand(),
            Err(CliError::Validation(_))
        ));
    }

    #[test]
    fn axis_application() {
        let mut cfg: SimConfig = serde_json::from_value(tiny_sim_config()).unwrap();
        apply_axis(&mut cfg, "params.mu", 7.5).unwrap();
        assert_eq!(cfg.params.mu, 7.5);
        assert!(apply_axis(&mut cfg, "grid.n_u", 64.0).is_err());
    }

    #[test]
    fn simulate_happy_path_short_horizon_is_undecided() {
        let dir = tempdir().unwrap();
        let config = write_config(dir.path(), "sim.json", &tiny_sim_config());
        let out = dir.path().join("out");
        cmd_simulate(&config, &out).unwrap();
        let series = fs::read_to_string(out.join("series.csv")).unwrap();
        assert!(series.starts_with("t,h,dhdt,sup_u,sup_v,mass_u\n"));
        assert!(series.lines().count() > 5);
        let manifest: Value =
            serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["result"]["classification"], "Undecided");
        assert_eq!(manifest["scheme_version"], SCHEME_VERSION);
        assert_eq!(manifest["config"]["grid"]["xmax"], json!(4.0));
        assert!(manifest["config_sha256"].as_str().unwrap().len() == 64);
    }

    #[test]
    fn simulate_validation_error_names_field() {
        let dir = tempdir().unwrap();
        let mut cfg = tiny_sim_config();
        cfg["params"]["delta1"] = json!(0.0);
        let config = write_config(dir.path(), "sim.json", &cfg);
        let err = cmd_simulate(&config, &dir.path().join("out")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("delta1"), "{err}");
    }

    #[test]
    fn simulate_truncation_is_numerical_failure() {
        let dir = tempdir().unwrap();
        let cfg = json!({
            "params": {"d1": 1.0, "d2": 1.0, "delta1": 1.0, "delta2": 1.0, "mu": 5.0, "h0": 1.0},
            "b1": {"kind": "constant", "value": 3.0},
            "b2": {"kind": "constant", "value": 0.5},
            "grid": {"n_u": 16, "n_v": 16, "xmax": 1.5, "dt_policy": {"kind": "fixed", "dt": 1e-3}},
            "run": {"horizon": 5.0}
        });
        let config = write_config(dir.path(), "sim.json", &cfg);
        let err = cmd_simulate(&config, &dir.path().join("out")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("increase Xmax"), "{err}");
    }

    #[test]
    fn simulate_is_byte_deterministic() {
        let dir = tempdir().unwrap();
        let config = write_config(dir.path(), "sim.json", &tiny_sim_config());
        let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
        cmd_simulate(&config, &out_a).unwrap();
        cmd_simulate(&config, &out_b).unwrap();
        let a = fs::read(out_a.join("series.csv")).unwrap();
        let b = fs::read(out_b.join("series.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_rows_sorted_and_parallelism_invariant() {
        let dir = tempdir().unwrap();
        let spec = json!({
            "axis": "params.h0",
            "values": {"kind": "list", "values": [1.2, 0.8, 1.0]},
            "base": tiny_sim_config(),
        });
        let config = write_config(dir.path(), "sweep.json", &spec);
        let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
        cmd_sweep(&config, &out_a, 1).unwrap();
        cmd_sweep(&config, &out_b, 4).unwrap();
        let a = fs::read_to_string(out_a.join("sweep.csv")).unwrap();
        let b = fs::read_to_string(out_b.join("sweep.csv")).unwrap();
        assert_eq!(a, b, "sweep.csv must not depend on parallelism");
        let rows: Vec<&str> = a.lines().collect();
        assert_eq!(rows[0], "axis_value,classification,h_final,measured_speed");
        let first_cols: Vec<f64> = rows[1..]
            .iter()
            .map(|r| r.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(first_cols, vec![0.8, 1.0, 1.2]);
        // per-run manifests exist for every original index
        for i in 0..3 {
            assert!(out_a.join(format!("run_{i:04}.manifest.json")).exists());
        }
    }

    #[test]
    fn sweep_records_failed_rows_without_aborting() {
        let dir = tempdir().unwrap();
        // h0 = 2.0 exceeds xmax = 1.8, an invalid row; the others are fine
        let mut base = tiny_sim_config();
        base["grid"]["xmax"] = json!(1.8);
        let spec = json!({
            "axis": "params.h0",
            "values": {"kind": "list", "values": [1.0, 2.0]},
            "base": base,
        });
        let config = write_config(dir.path(), "sweep.json", &spec);
        let out = dir.path().join("out");
        cmd_sweep(&config, &out, 2).unwrap();
        let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
        let failed_row = csv.lines().find(|l| l.starts_with("2,")).unwrap();
        assert!(failed_row.contains("Failed"));
        let ok_row = csv.lines().find(|l| l.starts_with("1,")).unwrap();
        assert!(!ok_row.contains("Failed"));
    }

    #[test]
    fn eigen_command_matches_closed_form() {
        let dir = tempdir().unwrap();
        let cfg = json!({
            "d": 1.5,
            "b": {"kind": "constant", "value": 2.0},
            "h0": 2.0,
            "n": 1024
        });
        let config = write_config(dir.path(), "eigen.json", &cfg);
        let out = dir.path().join("out");
        cmd_eigen(&config, &out).unwrap();
        let payload: Value =
            serde_json::from_str(&fs::read_to_string(out.join("eigen.json")).unwrap()).unwrap();
        let lambda = payload["lambda1"].as_f64().unwrap();
        let exact = 1.5 * (std::f64::consts::PI / 4.0).powi(2) - 2.0;
        assert!((lambda - exact).abs() < 1e-5, "{lambda} vs {exact}");
        assert!(out.join("phi.csv").exists());
    }

    #[test]
    fn speed_command_writes_all_artifacts() {
        let dir = tempdir().unwrap();
        let cfg = json!({
            "d": 1.0, "a": 1.0, "delta": 1.0, "mu": 1.0,
            "profile": true,
            "mu_sweep": [0.5, 1.0, 2.0]
        });
        let config = write_config(dir.path(), "speed.json", &cfg);
        let out = dir.path().join("out");
        cmd_speed(&config, &out).unwrap();
        let payload: Value =
            serde_json::from_str(&fs::read_to_string(out.join("speed.json")).unwrap()).unwrap();
        let beta0 = payload["beta0"].as_f64().unwrap();
        assert!(beta0 > 0.0 && beta0 < 2.0);
        assert!(payload["residual"].as_f64().unwrap() < 1e-6);
        assert!(out.join("profile.csv").exists());
        let sweep = fs::read_to_string(out.join("speed_sweep.csv")).unwrap();
        let betas: Vec<f64> = sweep
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(betas.windows(2).all(|w| w[0] < w[1]), "monotone in mu");
    }

    #[test]
    fn threshold_command_d1_star_closed_form() {
        let dir = tempdir().unwrap();
        let cfg = json!({
            "kind": "d1_star",
            "b": {"kind": "constant", "value": 2.0},
            "h0": 1.0,
            "bracket": [1e-3, 10.0],
            "n": 1024
        });
        let config = write_config(dir.path(), "threshold.json", &cfg);
        let out = dir.path().join("out");
        cmd_threshold(&config, &out).unwrap();
        let payload: Value =
            serde_json::from_str(&fs::read_to_string(out.join("threshold.json")).unwrap()).unwrap();
        let value = payload["value"].as_f64().unwrap();
        let exact = 2.0 * (2.0 / std::f64::consts::PI).powi(2);
        assert!((value - exact).abs() < 1e-5 * exact, "{value} vs {exact}");
        assert_eq!(payload["kind"], "d1_star");
        assert_eq!(payload["method"], "eigen_bisect");
    }

    #[test]
    fn ode_command_two_species_and_reduction_report() {
        let dir = tempdir().unwrap();
        let cfg = json!({
            "system": "two_species",
            "params": {"b1": 1.0, "b2": 0.5, "delta1": 1.0, "delta2": 1.0},
            "u0": 0.3, "v0": 0.2, "horizon": 5.0, "dt": 1e-2
        });
        let config = write_config(dir.path(), "ode.json", &cfg);
        let out = dir.path().join("out");
        cmd_ode(&config, &out).unwrap();
        let series = fs::read_to_string(out.join("series.csv")).unwrap();
        assert!(series.starts_with("t,u,v\n"));

        let cfg = json!({
            "system": "compartments",
            "params": {"b_i": 2.0, "b_u": 1.0, "delta1": 1.0, "delta2": 1.0, "delta_sex": 0.5},
            "state0": {"rf": 0.0, "rm": 0.0, "i_f": 0.2, "i_m": 0.2, "u_f": 0.3, "u_m": 0.3},
            "horizon": 5.0, "dt": 1e-2
        });
        let config = write_config(dir.path(), "ode2.json", &cfg);
        let out2 = dir.path().join("out2");
        cmd_ode(&config, &out2).unwrap();
        let series = fs::read_to_string(out2.join("series.csv")).unwrap();
        assert!(series.starts_with("t,rf,rm,i_f,i_m,u_f,u_m,u,v\n"));
        let manifest: Value =
            serde_json::from_str(&fs::read_to_string(out2.join("manifest.json")).unwrap()).unwrap();
        let dev = manifest["result"]["reduction_check"]["max_rel_deviation"]
            .as_f64()
            .unwrap();
        assert!(dev < 1e-6, "reduction deviation {dev}");
    }
}
