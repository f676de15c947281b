//! Command-line front end: `current`, `sweep`, `transmission`, `oracle`.
//!
//! Exit codes: 0 ok, 2 invalid configuration, 3 numerical failure,
//! 4 oracle mismatch.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::current::{breakdown, sweep, CurrentBreakdown, CurrentError, SweepAxis, TransportProblem};
use crate::oracle::{compare, ComparisonReport, Discretization, Integrator, OracleError};
use crate::quadrature::Tolerance;
use crate::spectra::{Band, BathState, CouplingModel, DosModel, LeadSpectrum, PairCoupling, PumpDrive, Side, SpectraError, Table2d};
use crate::transmission::{CenterModel, GreensMode, Scatterer, TransmissionError, TransmissionKernel, DEFAULT_BROADENING};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

pub const THREADS_ENV: &str = "PHOTON_LANDAUER_THREADS";

#[derive(Debug, Parser)]
#[command(name = "photon-landauer", version, about = "Parametrically driven photon currents between bosonic leads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Currents, their normal/anomalous split and golden-rule rates.
    Current(Common),
    /// Breakdown over an evenly spaced parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long)]
        steps: usize,
    },
    /// Transmission function on the configured (ε1, ε2) grid.
    Transmission(Common),
    /// Analytic current against the time-domain simulation.
    Oracle(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum AxisArg {
    PumpFrequency,
    Temperature,
    CouplingScale,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::PumpFrequency => SweepAxis::PumpFrequency,
            AxisArg::Temperature => SweepAxis::Temperature,
            AxisArg::CouplingScale => SweepAxis::CouplingScale,
        }
    }
}

// Configuration schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub left: LeadConfig,
    pub right: LeadConfig,
    pub pump_frequency: f64,
    pub kernel: KernelKind,
    /// Non-separable pair amplitude; trivial kernel only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_coupling: Option<Table2d>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<CenterConfig>,
    #[serde(default = "unit")]
    pub coupling_scale: f64,
    #[serde(default)]
    pub tolerances: Tolerance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmission_grid: Option<GridConfig>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Trivial,
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeadConfig {
    pub band: BandConfig,
    pub dos: DosModel,
    pub coupling: CouplingModel,
    pub temperature: f64,
    /// Accept a band touching zero with a density that does not vanish there.
    #[serde(default)]
    pub allow_ir_divergence: bool,
}

/// `max` omitted or null means a semi-infinite band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub min: f64,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenterConfig {
    /// Full `K_C`, row-major. Exclusive with `frequencies`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_squared: Option<Vec<Vec<f64>>>,
    /// Uncoupled center modes, `K_C = diag(ω²)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
    pub left: Vec<CouplingModel>,
    pub right: Vec<CouplingModel>,
    #[serde(default = "default_broadening")]
    pub broadening: f64,
    #[serde(default)]
    pub greens: GreensMode,
}

fn default_broadening() -> f64 {
    DEFAULT_BROADENING
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub modes_per_lead: usize,
    pub ramp_cycles: usize,
    pub window_cycles: usize,
    pub steps_per_cycle: usize,
    pub integrator: Integrator,
    pub max_relative_deviation: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let d = Discretization::default();
        OracleConfig {
            modes_per_lead: d.modes_per_lead,
            ramp_cycles: d.ramp_cycles,
            window_cycles: d.window_cycles,
            steps_per_cycle: d.steps_per_cycle,
            integrator: d.integrator,
            max_relative_deviation: 0.1,
        }
    }
}

impl OracleConfig {
    pub fn discretization(&self) -> Discretization {
        Discretization {
            modes_per_lead: self.modes_per_lead,
            ramp_cycles: self.ramp_cycles,
            window_cycles: self.window_cycles,
            steps_per_cycle: self.steps_per_cycle,
            integrator: self.integrator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub format: Option<Format>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub left: AxisConfig,
    pub right: AxisConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl AxisConfig {
    fn points(&self) -> Result<Vec<f64>, String> {
        linspace(self.from, self.to, self.steps)
    }
}

/// `steps` evenly spaced values; the last one is exactly `to`.
pub fn linspace(from: f64, to: f64, steps: usize) -> Result<Vec<f64>, String> {
    if !from.is_finite() || !to.is_finite() {
        return Err("grid bounds must be finite".into());
    }
    match steps {
        0 => Err("grid needs at least one point".into()),
        1 => Ok(vec![from]),
        _ => {
            let h = (to - from) / (steps - 1) as f64;
            Ok((0..steps).map(|i| if i + 1 == steps { to } else { from + i as f64 * h }).collect())
        }
    }
}

impl LeadConfig {
    fn spectrum(&self, side: Side) -> Result<LeadSpectrum, SpectraError> {
        let band = Band::new(self.band.min, self.band.max.unwrap_or(f64::INFINITY))?;
        if self.allow_ir_divergence {
            LeadSpectrum::new_unregularized(side, band, self.dos.clone(), self.coupling.clone())
        } else {
            LeadSpectrum::new(side, band, self.dos.clone(), self.coupling.clone())
        }
    }
}

impl CenterConfig {
    fn model(&self) -> Result<CenterModel, String> {
        let k = match (&self.frequency_squared, &self.frequencies) {
            (Some(rows), None) => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err("center.frequency_squared must be a non-empty square matrix".into());
                }
                DMatrix::from_row_iterator(n, n, rows.iter().flatten().copied())
            }
            (None, Some(w)) => {
                if w.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return Err("center.frequencies must be finite and > 0".into());
                }
                DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(w.len(), w.iter().map(|w| w * w)))
            }
            _ => return Err("center block needs exactly one of frequency_squared or frequencies".into()),
        };
        let m = CenterModel::new(k, self.left.clone(), self.right.clone(), self.broadening).map_err(|e| e.to_string())?;
        Ok(m.with_greens_mode(self.greens))
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid configuration: {e}"))
    }

    /// Builds the transport problem, enforcing the cross-field rules.
    pub fn problem(&self) -> Result<TransportProblem, String> {
        let left = self.left.spectrum(Side::Left).map_err(|e| format!("left lead: {e}"))?;
        let right = self.right.spectrum(Side::Right).map_err(|e| format!("right lead: {e}"))?;
        let kernel = match (self.kernel, &self.center) {
            (KernelKind::Trivial, None) => {
                let pair = self.pair_coupling.clone().map_or(PairCoupling::Separable, PairCoupling::Tabulated);
                TransmissionKernel::new(left, right, Scatterer::Direct(pair))
            }
            (KernelKind::Center, Some(c)) => {
                if self.pair_coupling.is_some() {
                    return Err("pair_coupling applies to the trivial kernel only".into());
                }
                TransmissionKernel::center(left, right, c.model()?)
            }
            (KernelKind::Trivial, Some(_)) => return Err("center block given but kernel is \"trivial\"".into()),
            (KernelKind::Center, None) => return Err("kernel \"center\" requires a center block".into()),
        }
        .map_err(|e| e.to_string())?;
        if !self.coupling_scale.is_finite() {
            return Err("coupling_scale must be finite".into());
        }
        if !self.tolerances.is_valid() {
            return Err("tolerances must be positive".into());
        }
        let bath = |t: f64, which: &str| BathState::new(t).map_err(|e| format!("{which} temperature: {e}"));
        Ok(TransportProblem::new(
            kernel.with_coupling_scale(self.coupling_scale),
            bath(self.left.temperature, "left")?,
            bath(self.right.temperature, "right")?,
            PumpDrive::new(self.pump_frequency).map_err(|e| format!("pump_frequency: {e}"))?,
        )
        .with_tolerance(self.tolerances))
    }
}

// Result schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub converged: bool,
    /// Absent when the point failed outright.
    pub breakdown: Option<CurrentBreakdown>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionRecord {
    pub cells: Vec<TransmissionCell>,
    pub failed_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionCell {
    pub e1: f64,
    pub e2: f64,
    pub t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    #[serde(flatten)]
    pub report: ComparisonReport,
    pub max_relative_deviation: f64,
    pub within_bound: bool,
}

// Formatting

/// Writes every float with 17 significant digits so output is exact and
/// reproducible.
struct FixedPrecision;

impl serde_json::ser::Formatter for FixedPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedPrecision);
    value.serialize(&mut ser).expect("result records serialize");
    let mut s = String::from_utf8(buf).expect("serde_json emits UTF-8");
    s.push('\n');
    s
}

fn csv_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

const BREAKDOWN_COLUMNS: [&str; 8] = ["j_right", "j_left", "j_normal", "j_anomalous", "rate_creation", "rate_annihilation", "err", "converged"];

fn breakdown_cells(b: &CurrentBreakdown) -> Vec<String> {
    let mut cells: Vec<String> =
        [b.j_right, b.j_left, b.j_normal, b.j_anomalous, b.rate_creation, b.rate_annihilation, b.total_error()].map(csv_f64).into();
    cells.push(b.converged.to_string());
    cells
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

fn current_csv(b: &CurrentBreakdown) -> String {
    csv_table(&BREAKDOWN_COLUMNS, [breakdown_cells(b)])
}

fn sweep_csv(rec: &SweepRecord) -> String {
    let mut header = vec![rec.axis.name()];
    header.extend(BREAKDOWN_COLUMNS);
    csv_table(
        &header,
        rec.rows.iter().map(|r| {
            let mut cells = vec![csv_f64(r.value)];
            match &r.breakdown {
                Some(b) => cells.extend(breakdown_cells(b)),
                None => {
                    cells.extend(std::iter::repeat_n(String::new(), BREAKDOWN_COLUMNS.len()));
                    cells[8] = "false".into();
                }
            }
            cells
        }),
    )
}

fn transmission_csv(rec: &TransmissionRecord) -> String {
    csv_table(
        &["e1", "e2", "t"],
        rec.cells.iter().map(|c| vec![csv_f64(c.e1), csv_f64(c.e2), c.t.map(csv_f64).unwrap_or_default()]),
    )
}

// Commands

/// Outcome of a command: text to emit (if any), exit code, diagnostics.
struct Outcome {
    body: Option<String>,
    code: i32,
}

fn fail(code: i32, msg: impl std::fmt::Display) -> Outcome {
    eprintln!("error: {msg}");
    Outcome { body: None, code }
}

fn transmission_exit(e: &TransmissionError) -> i32 {
    match e {
        TransmissionError::Singular { .. } => EXIT_NUMERICAL,
        TransmissionError::Spectra(_) | TransmissionError::InvalidCenter(_) => EXIT_CONFIG,
    }
}

fn current_exit(e: &CurrentError) -> i32 {
    match e {
        CurrentError::Config(_) => EXIT_CONFIG,
        CurrentError::Transmission(t) => transmission_exit(t),
        CurrentError::NotConverged(_) => EXIT_NUMERICAL,
    }
}

fn cmd_current(p: &TransportProblem, format: Format) -> Outcome {
    let render = |b: &CurrentBreakdown| match format {
        Format::Json => to_json(b),
        Format::Csv => current_csv(b),
    };
    match breakdown(p) {
        Ok(b) => Outcome { body: Some(render(&b)), code: EXIT_OK },
        Err(CurrentError::NotConverged(b)) => {
            eprintln!("error: quadrature did not converge; writing best estimate");
            Outcome { body: Some(render(&b)), code: EXIT_NUMERICAL }
        }
        Err(e) => fail(current_exit(&e), e),
    }
}

fn cmd_sweep(p: &TransportProblem, axis: SweepAxis, grid: &[f64], format: Format) -> Outcome {
    let points = match sweep(p, axis, grid) {
        Ok(points) => points,
        Err(e) => return fail(current_exit(&e), e),
    };
    let mut code = EXIT_OK;
    let rows = points
        .into_iter()
        .map(|pt| match pt.result {
            Ok(b) => SweepRow { value: pt.value, converged: true, breakdown: Some(b), message: None },
            Err(e) => {
                eprintln!("warning: {} = {}: {e}", axis.name(), pt.value);
                code = code.max(current_exit(&e));
                match e {
                    CurrentError::NotConverged(b) => {
                        SweepRow { value: pt.value, converged: false, breakdown: Some(*b), message: Some("quadrature did not converge".into()) }
                    }
                    other => SweepRow { value: pt.value, converged: false, breakdown: None, message: Some(other.to_string()) },
                }
            }
        })
        .collect();
    let rec = SweepRecord { axis, rows };
    let body = match format {
        Format::Json => to_json(&rec),
        Format::Csv => sweep_csv(&rec),
    };
    Outcome { body: Some(body), code }
}

fn cmd_transmission(p: &TransportProblem, grid: Option<&GridConfig>, format: Format) -> Outcome {
    let Some(grid) = grid else {
        return fail(EXIT_CONFIG, "transmission needs a transmission_grid block");
    };
    let (e1s, e2s) = match (grid.left.points(), grid.right.points()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return fail(EXIT_CONFIG, format!("transmission_grid: {e}")),
    };
    let mut cells = Vec::with_capacity(e1s.len() * e2s.len());
    let mut failed = 0;
    for &e1 in &e1s {
        for &e2 in &e2s {
            let t = match p.kernel.eval(e1, e2) {
                Ok(t) => Some(t),
                Err(_) => {
                    failed += 1;
                    None
                }
            };
            cells.push(TransmissionCell { e1, e2, t });
        }
    }
    if failed > 0 {
        eprintln!("warning: {failed} transmission cell(s) could not be evaluated and were left empty");
    }
    let rec = TransmissionRecord { cells, failed_cells: failed };
    let body = match format {
        Format::Json => to_json(&rec),
        Format::Csv => transmission_csv(&rec),
    };
    Outcome { body: Some(body), code: EXIT_OK }
}

fn cmd_oracle(p: &TransportProblem, oracle: Option<&OracleConfig>, format: Format) -> Outcome {
    let Some(cfg) = oracle else {
        return fail(EXIT_CONFIG, "oracle needs an oracle block");
    };
    if format != Format::Json {
        return fail(EXIT_CONFIG, "the oracle report is JSON only");
    }
    if !(cfg.max_relative_deviation >= 0.0) {
        return fail(EXIT_CONFIG, "oracle.max_relative_deviation must be >= 0");
    }
    match compare(p, &cfg.discretization()) {
        Ok(report) => {
            if report.recurrence_window_exceeded {
                eprintln!(
                    "warning: run length {} exceeds the recurrence time {}; add modes per lead",
                    report.parameters.end_time, report.parameters.recurrence_time
                );
            }
            let within = report.relative_deviation <= cfg.max_relative_deviation;
            if !within {
                eprintln!(
                    "error: relative deviation {:e} exceeds bound {:e}",
                    report.relative_deviation, cfg.max_relative_deviation
                );
            }
            let rec = OracleRecord { report, max_relative_deviation: cfg.max_relative_deviation, within_bound: within };
            Outcome { body: Some(to_json(&rec)), code: if within { EXIT_OK } else { EXIT_MISMATCH } }
        }
        Err(e) => {
            let code = match &e {
                OracleError::Current(c) => current_exit(c),
                e if e.is_numerical() => EXIT_NUMERICAL,
                _ => EXIT_CONFIG,
            };
            fail(code, e)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn emit(body: &str, path: Option<&Path>) -> io::Result<()> {
    match path {
        Some(path) => fs::write(path, body),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()
        }
    }
}

/// Runs the CLI with the given arguments (program name first) and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        return fail(EXIT_CONFIG, e).code;
    }
    let common = match &cli.command {
        Command::Current(c) | Command::Transmission(c) | Command::Oracle(c) => c,
        Command::Sweep { common, .. } => common,
    };
    let config = match RunConfig::from_path(&common.config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e).code,
    };
    let problem = match config.problem() {
        Ok(p) => p,
        Err(e) => return fail(EXIT_CONFIG, e).code,
    };
    let default_format = match cli.command {
        Command::Current(_) | Command::Oracle(_) => Format::Json,
        Command::Sweep { .. } | Command::Transmission(_) => Format::Csv,
    };
    let format = common.format.or(config.output.format).unwrap_or(default_format);
    let path = common.output.clone().or_else(|| config.output.path.clone());

    let outcome = match &cli.command {
        Command::Current(_) => cmd_current(&problem, format),
        Command::Sweep { axis, from, to, steps, .. } => {
            if *steps < 2 {
                return fail(EXIT_CONFIG, "--steps must be at least 2").code;
            }
            match linspace(*from, *to, *steps) {
                Ok(grid) => cmd_sweep(&problem, (*axis).into(), &grid, format),
                Err(e) => fail(EXIT_CONFIG, e),
            }
        }
        Command::Transmission(_) => cmd_transmission(&problem, config.transmission_grid.as_ref(), format),
        Command::Oracle(_) => cmd_oracle(&problem, config.oracle.as_ref(), format),
    };
    if let Some(body) = outcome.body {
        if let Err(e) = emit(&body, path.as_deref()) {
            return fail(EXIT_CONFIG, format!("cannot write output: {e}")).code;
        }
    }
    outcome.code
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
