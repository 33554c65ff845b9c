//! The `ecomech` command line.
//!
//! Every subcommand that produces results writes a CSV table: `#`-prefixed
//! `key=value` metadata lines, a header row, then data rows. Reals carry 12
//! significant digits. Drivers are indexed from 0.
//!
//! Exit codes: 0 success, 2 invalid input, 3 I/O failure, 4 infeasible
//! mechanism program, 5 failed audit under `--strict`.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::audit::{
    audit_recommendation, ic_derivative_check, misreport_sweep, MechanismSetup, OBEDIENCE_TOL,
};
use crate::equilibrium::SolverOptions;
use crate::error::{Error, Result};
use crate::mechanism::{
    solve_mechanism, MechanismOptions, MechanismOutcome, Method, Mode, SolveStyle, FEASIBILITY_TOL,
};
use crate::model::TypeProfile;
use crate::scenario::{self, GenerationSpec};

/// Version of the CSV column layouts. Bumped whenever a column is renamed,
/// removed or reordered.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;
pub const EXIT_AUDIT_FAILED: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "ecomech", version, about = "Eco-driving incentive mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a random scenario and write it as JSON.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the mechanism once and write the outcome as a one-row table.
    Solve {
        #[command(flatten)]
        common: MechanismArgs,
        #[arg(long, allow_negative_numbers = true)]
        budget: f64,
        #[arg(long, default_value = "first-best")]
        mode: Mode,
    },
    /// Total emissions and incentives over a grid of budgets.
    BudgetSweep {
        #[command(flatten)]
        common: MechanismArgs,
        /// Comma-separated values or an inclusive `start:stop:step` range.
        #[arg(long, allow_hyphen_values = true)]
        budgets: String,
        #[arg(long, value_delimiter = ',', default_value = "first-best,second-best")]
        modes: Vec<Mode>,
    },
    /// Recommendation and best response of one driver across reported types.
    Misreport {
        #[command(flatten)]
        common: MechanismArgs,
        #[arg(long, allow_negative_numbers = true)]
        budget: f64,
        #[arg(long, default_value = "first-best")]
        mode: Mode,
        /// 0-based driver index.
        #[arg(long)]
        driver: usize,
        /// Reported types: comma-separated values or `start:stop:step`.
        #[arg(long, default_value = "0:1:0.05", allow_hyphen_values = true)]
        theta_hat: String,
        /// Overrides the driver's true type from the scenario file.
        #[arg(long, allow_negative_numbers = true)]
        true_theta: Option<f64>,
    },
    /// Obedience, incentive-compatibility and budget verdicts per driver.
    Audit {
        #[command(flatten)]
        common: MechanismArgs,
        #[arg(long, allow_negative_numbers = true)]
        budget: f64,
        #[arg(long, default_value = "first-best")]
        mode: Mode,
        /// Step of the finite differences in the incentive-compatibility check.
        #[arg(long, default_value_t = 1e-3)]
        ic_step: f64,
        /// Exit with a distinct code when any verdict fails.
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Debug, Args)]
struct MechanismArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "local")]
    style: SolveStyle,
    /// Seed for the random starts of the global style.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl MechanismArgs {
    fn options(&self) -> MechanismOptions {
        MechanismOptions {
            seed: self.seed,
            ..MechanismOptions::default()
        }
    }

    fn load(&self) -> Result<(crate::Scenario, TypeProfile)> {
        scenario::load(&self.scenario)
    }

    fn metadata(&self, command: &str, mech: &MechanismOptions, solver: &SolverOptions) -> Vec<(String, String)> {
        let mut meta = vec![
            ("artifact".to_string(), format!("ecomech {}", env!("CARGO_PKG_VERSION"))),
            ("schema_version".to_string(), CSV_SCHEMA_VERSION.to_string()),
            ("command".to_string(), command.to_string()),
            ("scenario".to_string(), self.scenario.display().to_string()),
            ("solve_style".to_string(), self.style.to_string()),
            ("seed".to_string(), self.seed.to_string()),
        ];
        let tolerances = [
            ("rounds", mech.rounds.to_string()),
            ("initial_penalty", real(mech.initial_penalty)),
            ("initial_sharpness", real(mech.initial_sharpness)),
            ("growth", real(mech.growth)),
            ("initial_step", real(mech.initial_step)),
            ("pg_tol", real(mech.pg_tol)),
            ("max_iters", mech.max_iters.to_string()),
            ("random_starts", mech.random_starts.to_string()),
            ("feasibility_tol", real(FEASIBILITY_TOL)),
            ("obedience_tol", real(OBEDIENCE_TOL)),
            ("tol_profile", real(solver.tol_profile)),
            ("tol_deriv", real(solver.tol_deriv)),
            ("max_sweeps", solver.max_sweeps.to_string()),
            ("grid_points", solver.grid_points.to_string()),
        ];
        meta.extend(tolerances.into_iter().map(|(k, v)| (k.to_string(), v)));
        meta
    }
}

/// Formats a real with 12 significant digits, `%g` style.
pub fn real(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".to_string()
        } else if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Parses `a,b,c` or an inclusive `start:stop:step` range.
pub fn parse_grid(field: &str, text: &str) -> Result<Vec<f64>> {
    let number = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::invalid(field, format!("{s:?} is not a number")))
    };
    let values = if let Some((start, rest)) = text.split_once(':') {
        let (stop, step) = rest
            .split_once(':')
            .ok_or_else(|| Error::invalid(field, "range must be start:stop:step"))?;
        let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
        if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
            return Err(Error::invalid(field, format!("empty range {text:?}")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| start + k as f64 * step).collect()
    } else {
        text.split(',').map(number).collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() {
        return Err(Error::invalid(field, "no values"));
    }
    Ok(values)
}

/// A value in a [`SweepTable`] cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(usize),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Real(v) => real(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Real)
    }
}

/// A CSV table with reproduction metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub metadata: Vec<(String, String)>,
}

impl SweepTable {
    pub fn new(columns: Vec<String>, metadata: Vec<(String, String)>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
            metadata,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (key, value) in &self.metadata {
            writeln!(out, "# {key}={value}")?;
        }
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(&self.columns)?;
        for row in &self.rows {
            writer.write_record(row.iter().map(Cell::render))?;
        }
        writer.flush()
    }

    fn emit(&self, path: Option<&Path>) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf),
            source,
        };
        match path {
            Some(p) => self.write_to(File::create(p).map_err(io_err)?).map_err(io_err),
            None => self.write_to(io::stdout().lock()).map_err(io_err),
        }
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Local => "local",
        Method::Global => "global",
        Method::GridSearch => "grid-search",
    }
}

fn check_budget(budget: f64) -> Result<()> {
    if budget >= 0.0 && budget.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("budget", format!("{budget} must be a finite non-negative number")))
    }
}

fn outcome_table(outcome: &MechanismOutcome, meta: Vec<(String, String)>) -> SweepTable {
    let n = outcome.f.len();
    let mut columns: Vec<String> = [
        "mode",
        "budget",
        "objective",
        "constraint_value",
        "total_incentive",
        "full_compliance",
        "method",
        "starts",
        "best_start",
        "iterations",
        "converged",
        "repaired",
    ]
    .map(String::from)
    .to_vec();
    columns.extend((0..n).map(|i| format!("f_{i}")));
    columns.extend((0..n).map(|i| format!("u_{i}")));

    let m = &outcome.solver_meta;
    let mut row: Vec<Cell> = vec![
        outcome.mode.as_str().into(),
        outcome.budget.into(),
        outcome.objective.into(),
        outcome.constraint_value.into(),
        outcome.total_incentive().into(),
        outcome.full_compliance().into(),
        method_name(m.method).into(),
        m.starts.into(),
        m.best_start.into(),
        m.iterations.into(),
        m.converged.into(),
        m.repaired.into(),
    ];
    row.extend(outcome.f.as_slice().iter().map(|&v| Cell::Real(v)));
    row.extend(outcome.u.as_slice().iter().map(|&v| Cell::Real(v)));

    let mut table = SweepTable::new(columns, meta);
    table.push(row);
    table
}

fn push_meta(meta: &mut Vec<(String, String)>, key: &str, value: impl ToString) {
    meta.push((key.to_string(), value.to_string()));
}

/// Runs one invocation and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::IndexOutOfRange { .. }
        | Error::DimensionMismatch { .. }
        | Error::Invalid { .. }
        | Error::TooManyDrivers(_)
        | Error::Parse { .. } => EXIT_INVALID,
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

fn dispatch(command: Command) -> Result<u8> {
    let solver = SolverOptions::default();
    match command {
        Command::Generate { n, seed, out } => {
            let (s, theta) = scenario::generate(&GenerationSpec::new(n, seed))?;
            scenario::save(&s, &theta, &out)?;
            Ok(EXIT_OK)
        }

        Command::Solve { common, budget, mode } => {
            check_budget(budget)?;
            let (s, theta) = common.load()?;
            let opts = common.options();
            let outcome = solve_mechanism(&s, &theta, budget, mode, common.style, &opts)?;
            let mut meta = common.metadata("solve", &opts, &solver);
            push_meta(&mut meta, "mode", mode);
            push_meta(&mut meta, "budget", real(budget));
            outcome_table(&outcome, meta).emit(common.out.as_deref())?;
            Ok(EXIT_OK)
        }

        Command::BudgetSweep { common, budgets, modes } => {
            let grid = parse_grid("budgets", &budgets)?;
            grid.iter().try_for_each(|&b| check_budget(b))?;
            if modes.is_empty() {
                return Err(Error::invalid("modes", "no modes given"));
            }
            let (s, theta) = common.load()?;
            let opts = common.options();
            let jobs: Vec<(f64, Mode)> = grid.iter().flat_map(|&b| modes.iter().map(move |&m| (b, m))).collect();
            let outcomes = jobs
                .par_iter()
                .map(|&(b, m)| solve_mechanism(&s, &theta, b, m, common.style, &opts))
                .collect::<Result<Vec<_>>>()?;

            let mut meta = common.metadata("budget-sweep", &opts, &solver);
            push_meta(&mut meta, "modes", modes.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(";"));
            push_meta(&mut meta, "budgets", budgets.replace(',', ";"));
            let columns = ["budget", "mode", "total_emissions", "total_incentive", "full_compliance"];
            let mut table = SweepTable::new(columns.map(String::from).to_vec(), meta);
            for ((b, m), o) in jobs.iter().zip(&outcomes) {
                table.push(vec![
                    (*b).into(),
                    m.as_str().into(),
                    o.objective.into(),
                    o.total_incentive().into(),
                    o.full_compliance().into(),
                ]);
            }
            table.emit(common.out.as_deref())?;
            Ok(EXIT_OK)
        }

        Command::Misreport {
            common,
            budget,
            mode,
            driver,
            theta_hat,
            true_theta,
        } => {
            check_budget(budget)?;
            let grid = parse_grid("theta_hat", &theta_hat)?;
            let (s, mut theta) = common.load()?;
            if driver >= s.n() {
                return Err(Error::IndexOutOfRange { index: driver, n: s.n() });
            }
            if let Some(t) = true_theta {
                theta = theta.with(driver, t)?;
            }
            let setup = MechanismSetup {
                mode,
                budget,
                style: common.style,
                options: common.options(),
            };
            let rows = misreport_sweep(&s, &theta, driver, &grid, &setup, &solver)?;

            let mut meta = common.metadata("misreport", &setup.options, &solver);
            push_meta(&mut meta, "mode", mode);
            push_meta(&mut meta, "budget", real(budget));
            push_meta(&mut meta, "driver", driver);
            push_meta(&mut meta, "true_theta", real(theta[driver]));
            let columns = [
                "theta_hat",
                "f_i",
                "u_i",
                "a_opt",
                "ell_at_a_opt",
                "ell_at_f",
                "obedient",
                "failure",
            ];
            let mut table = SweepTable::new(columns.map(String::from).to_vec(), meta);
            for r in rows {
                table.push(vec![
                    r.theta_hat.into(),
                    r.f_i.into(),
                    r.u_i.into(),
                    r.a_opt.into(),
                    r.ell_at_a_opt.into(),
                    r.ell_at_f.into(),
                    r.obedient.into(),
                    r.failure.as_deref().map_or(Cell::Empty, Cell::from),
                ]);
            }
            table.emit(common.out.as_deref())?;
            Ok(EXIT_OK)
        }

        Command::Audit {
            common,
            budget,
            mode,
            ic_step,
            strict,
        } => {
            check_budget(budget)?;
            let (s, theta) = common.load()?;
            let setup = MechanismSetup {
                mode,
                budget,
                style: common.style,
                options: common.options(),
            };
            let outcome = solve_mechanism(&s, &theta, budget, mode, common.style, &setup.options)?;
            let mut report = audit_recommendation(&s, &theta, &outcome.f, &outcome.u, budget, &solver)?;

            let mut meta = common.metadata("audit", &setup.options, &solver);
            push_meta(&mut meta, "mode", mode);
            push_meta(&mut meta, "budget", real(budget));
            push_meta(&mut meta, "ic_step", real(ic_step));
            match ic_derivative_check(&s, &theta, &setup, ic_step) {
                Ok(ic) => report.ic = Some(ic),
                // types at the edge of [0, 1] cannot be differenced centrally
                Err(e @ Error::Invalid { .. }) => push_meta(&mut meta, "ic_skipped", e),
                Err(e) => return Err(e),
            }
            push_meta(&mut meta, "verdict", if report.pass() { "pass" } else { "fail" });

            let columns = [
                "driver",
                "f",
                "u",
                "margin",
                "margin_witness",
                "obedience_pass",
                "definition_pass",
                "definition_witness",
                "ic_frozen_residual",
                "ic_total_residual",
                "ic_max_second_diff",
                "ic_concave",
                "ic_value_max_second_diff",
                "ic_value_concave",
                "ic_argmin_theta_hat",
                "ic_misreport_gain",
                "ic_pass",
                "budget_slack",
                "budget_pass",
            ];
            let mut table = SweepTable::new(columns.map(String::from).to_vec(), meta);
            for i in 0..s.n() {
                let ic = report.ic.as_ref().map(|r| &r.drivers[i]);
                let ic_real = |get: fn(&crate::audit::IcDriverReport) -> f64| ic.map_or(Cell::Empty, |d| get(d).into());
                let ic_bool = |get: fn(&crate::audit::IcDriverReport) -> bool| ic.map_or(Cell::Empty, |d| get(d).into());
                table.push(vec![
                    i.into(),
                    outcome.f[i].into(),
                    outcome.u[i].into(),
                    report.obedience.per_driver_margin[i].into(),
                    report.obedience.witness[i].into(),
                    report.obedience.driver_pass(i).into(),
                    report.definition.per_driver[i].into(),
                    report.definition.witness[i].into(),
                    ic_real(|d| d.frozen_residual),
                    ic_real(|d| d.total_residual),
                    ic_real(|d| d.max_second_diff),
                    ic_bool(|d| d.concave),
                    ic_real(|d| d.value_max_second_diff),
                    ic_bool(|d| d.value_concave),
                    ic_real(|d| d.argmin_theta_hat),
                    ic_real(|d| d.misreport_gain),
                    ic_bool(|d| d.pass()),
                    report.budget_slack.into(),
                    report.budget_pass().into(),
                ]);
            }
            table.emit(common.out.as_deref())?;
            Ok(if strict && !report.pass() {
                EXIT_AUDIT_FAILED
            } else {
                EXIT_OK
            })
        }
    }
}
