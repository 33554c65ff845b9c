//! Obedience, incentive-compatibility and budget audits.
//!
//! Reports are data: every failed check carries the grid point that
//! witnesses it, and nothing here logs or aborts on a violation.

use rayon::prelude::*;

use crate::equilibrium::{own_argmin, SolverOptions};
use crate::error::{Error, Result};
use crate::mechanism::{solve_mechanism, MechanismOptions, MechanismOutcome, Mode, SolveStyle};
use crate::model::{check_unit, EcoProfile, IncentiveVector, OwnAxis, Scenario, TypeProfile};

/// A margin or inequality counts as satisfied down to this slack.
pub const OBEDIENCE_TOL: f64 = 1e-6;
pub const BUDGET_TOL: f64 = 1e-6;
/// Allowed positive second difference when testing concavity.
pub const CONCAVITY_TOL: f64 = 1e-6;
pub const IC_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ObedienceReport {
    /// `uᵢ − max_a [θᵢξᵢ(a) + (1−θᵢ)τᵢ(a)]` over the grid on `[0, fᵢ)`;
    /// `f64::MAX` when `fᵢ = 0` (nothing to undercut).
    pub per_driver_margin: Vec<f64>,
    /// Grid point attaining the max, `None` when `fᵢ = 0`.
    pub witness: Vec<Option<f64>>,
    pub pass: bool,
}

impl ObedienceReport {
    pub fn driver_pass(&self, i: usize) -> bool {
        self.per_driver_margin[i] >= -OBEDIENCE_TOL
    }
}

/// Outcome of checking `ℓᵢ(f) ≤ ℓᵢ(aᵢ, f₋ᵢ)` directly on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DefinitionCheck {
    pub per_driver: Vec<bool>,
    /// First grid point that beats the recommendation, if any.
    pub witness: Vec<Option<f64>>,
}

impl DefinitionCheck {
    pub fn pass(&self) -> bool {
        self.per_driver.iter().all(|&p| p)
    }
}

fn check_inputs(scenario: &Scenario, theta: &TypeProfile, f: &EcoProfile, u: &IncentiveVector) -> Result<()> {
    scenario.check_len("type profile", theta.len())?;
    scenario.check_len("recommendation", f.len())?;
    scenario.check_len("incentive vector", u.len())
}

/// `grid_points` samples of `[0, fᵢ)`; `fᵢ` itself is excluded.
fn undercut_grid(fi: f64, points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |k| fi * k as f64 / points as f64)
}

/// Largest marginal gain from undercutting, `θξ + (1−θ)τ`, with its witness.
fn undercut_rate(axis: &OwnAxis, fi: f64, theta: f64, points: usize) -> (f64, f64) {
    let x_f = axis.emission(fi);
    let y_f = axis.travel_time(fi);
    undercut_grid(fi, points)
        .map(|a| {
            let gap = fi - a;
            let xi = (x_f - axis.emission(a)) / gap;
            let tau = (y_f - axis.travel_time(a)) / gap;
            (theta * xi + (1.0 - theta) * tau, a)
        })
        .fold((f64::NEG_INFINITY, 0.0), |best, cand| if cand.0 > best.0 { cand } else { best })
}

/// Obedience through the difference-quotient characterization: the incentive
/// must cover the weighted emission and travel-time rates of every undercut.
pub fn obedience_margin(
    scenario: &Scenario,
    theta: &TypeProfile,
    f: &EcoProfile,
    u: &IncentiveVector,
    opts: &SolverOptions,
) -> Result<ObedienceReport> {
    check_inputs(scenario, theta, f, u)?;
    let (margins, witness): (Vec<f64>, Vec<Option<f64>>) = (0..scenario.n())
        .map(|i| {
            let fi = f[i];
            if fi <= 0.0 {
                return (f64::MAX, None);
            }
            let axis = scenario.own_axis_raw(i, f.as_slice());
            let (rate, at) = undercut_rate(&axis, fi, theta[i], opts.grid_points);
            (u[i] - rate, Some(at))
        })
        .unzip();
    let pass = margins.iter().all(|&m| m >= -OBEDIENCE_TOL);
    Ok(ObedienceReport {
        per_driver_margin: margins,
        witness,
        pass,
    })
}

/// Obedience straight from the definition on the same grid as
/// [`obedience_margin`], with the tolerance scaled by `fᵢ − a` so the two
/// verdicts coincide.
pub fn obedience_definition_check(
    scenario: &Scenario,
    theta: &TypeProfile,
    f: &EcoProfile,
    u: &IncentiveVector,
    opts: &SolverOptions,
) -> Result<DefinitionCheck> {
    check_inputs(scenario, theta, f, u)?;
    let (per_driver, witness) = (0..scenario.n())
        .map(|i| {
            let fi = f[i];
            let axis = scenario.own_axis_raw(i, f.as_slice());
            let at_f = axis.incentivized_cost(fi, theta[i], u[i]);
            let violation = undercut_grid(fi, opts.grid_points).find(|&a| {
                at_f > axis.incentivized_cost(a, theta[i], u[i]) + OBEDIENCE_TOL * (fi - a)
            });
            (violation.is_none(), violation)
        })
        .unzip();
    Ok(DefinitionCheck { per_driver, witness })
}

/// `budget − Σuᵢ`; the budget holds when this is at least `−BUDGET_TOL`.
pub fn budget_check(u: &IncentiveVector, budget: f64) -> f64 {
    budget - u.total()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisreportRow {
    pub theta_hat: f64,
    pub f_i: f64,
    pub u_i: f64,
    /// Driver's best response to `f₋ᵢ` under their true type and `uᵢ`.
    pub a_opt: f64,
    pub ell_at_a_opt: f64,
    pub ell_at_f: f64,
    pub obedient: bool,
    /// Mechanism solve failure for this report; numeric fields are NaN.
    pub failure: Option<String>,
}

impl MisreportRow {
    fn failed(theta_hat: f64, err: Error) -> Self {
        Self {
            theta_hat,
            f_i: f64::NAN,
            u_i: f64::NAN,
            a_opt: f64::NAN,
            ell_at_a_opt: f64::NAN,
            ell_at_f: f64::NAN,
            obedient: false,
            failure: Some(err.to_string()),
        }
    }
}

/// Shared configuration for audits that re-solve the mechanism.
#[derive(Debug, Clone, Copy)]
pub struct MechanismSetup {
    pub mode: Mode,
    pub budget: f64,
    pub style: SolveStyle,
    pub options: MechanismOptions,
}

impl MechanismSetup {
    fn solve(&self, scenario: &Scenario, reported: &TypeProfile) -> Result<MechanismOutcome> {
        solve_mechanism(scenario, reported, self.budget, self.mode, self.style, &self.options)
    }
}

/// Re-solves the mechanism for each reported type of driver `i` (others
/// truthful) and records how the truthful driver responds, knowing `f₋ᵢ`.
pub fn misreport_sweep(
    scenario: &Scenario,
    theta: &TypeProfile,
    i: usize,
    theta_hat_grid: &[f64],
    setup: &MechanismSetup,
    opts: &SolverOptions,
) -> Result<Vec<MisreportRow>> {
    scenario.check_len("type profile", theta.len())?;
    if i >= scenario.n() {
        return Err(Error::IndexOutOfRange { index: i, n: scenario.n() });
    }
    for (k, &t) in theta_hat_grid.iter().enumerate() {
        check_unit(&format!("theta_hat[{k}]"), t)?;
    }
    let true_theta = theta[i];

    Ok(theta_hat_grid
        .par_iter()
        .map(|&theta_hat| {
            let reported = theta.with(i, theta_hat).expect("validated above");
            let outcome = match setup.solve(scenario, &reported) {
                Ok(o) => o,
                Err(e) => return MisreportRow::failed(theta_hat, e),
            };
            let f = outcome.f.as_slice();
            let u_i = outcome.u[i];
            let axis = scenario.own_axis_raw(i, f);
            let a_opt = own_argmin(&axis, true_theta, u_i, opts.tol_deriv);
            let ell_at_a_opt = axis.incentivized_cost(a_opt, true_theta, u_i);
            let ell_at_f = axis.incentivized_cost(f[i], true_theta, u_i);
            MisreportRow {
                theta_hat,
                f_i: f[i],
                u_i,
                a_opt,
                // a_opt is optimal up to bisection precision
                ell_at_a_opt: ell_at_a_opt.min(ell_at_f),
                ell_at_f,
                obedient: a_opt >= f[i] - OBEDIENCE_TOL,
                failure: None,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcDriverReport {
    /// `|∂θᵢ ℓᵢ − (xᵢ(f) − yᵢ(f))|` with `(f, u)` frozen at the truthful report.
    pub frozen_residual: f64,
    /// Same, but `f` and `u` move with the type (the total-derivative reading).
    pub total_residual: f64,
    /// Central difference of the report map `θ̂ᵢ ↦ ℓᵢ(f(θ̂ᵢ), θᵢ, uᵢ(θ̂ᵢ))` at the truth.
    pub report_slope: f64,
    /// Largest second difference of the report map on the 11-point grid.
    pub max_second_diff: f64,
    pub concave: bool,
    /// Largest second difference of the truthful value map
    /// `θᵢ ↦ ℓᵢ(f(θᵢ), θᵢ, uᵢ(θᵢ))` on the same grid.
    pub value_max_second_diff: f64,
    pub value_concave: bool,
    /// Best report among the 11-point grid and the truth.
    pub argmin_theta_hat: f64,
    /// `ℓ` at the truthful report minus `ℓ` at the best report; > 0 flags an
    /// incentive-compatibility violation.
    pub misreport_gain: f64,
}

impl IcDriverReport {
    /// No grid report beats the truth and the frozen derivative identity
    /// holds. Concavity is reported, not required.
    pub fn pass(&self) -> bool {
        self.frozen_residual <= IC_RESIDUAL_TOL && self.misreport_gain <= OBEDIENCE_TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcReport {
    pub h: f64,
    pub drivers: Vec<IcDriverReport>,
}

impl IcReport {
    pub fn pass(&self) -> bool {
        self.drivers.iter().all(IcDriverReport::pass)
    }
}

const REPORT_GRID: usize = 11;

/// Derivative and concavity checks of each driver's incentivized cost in their
/// type, plus an empirical misreporting sweep.
pub fn ic_derivative_check(
    scenario: &Scenario,
    theta: &TypeProfile,
    setup: &MechanismSetup,
    h: f64,
) -> Result<IcReport> {
    scenario.check_len("type profile", theta.len())?;
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::invalid("h", format!("{h} not in (0, 0.5)")));
    }
    for (i, &t) in theta.as_slice().iter().enumerate() {
        if t <= h || t >= 1.0 - h {
            return Err(Error::invalid(
                format!("theta[{i}]"),
                format!("{t} too close to the boundary for step {h}"),
            ));
        }
    }
    let truthful = setup.solve(scenario, theta)?;

    let drivers = (0..scenario.n())
        .into_par_iter()
        .map(|i| ic_for_driver(scenario, theta, setup, &truthful, i, h))
        .collect::<Result<Vec<_>>>()?;
    Ok(IcReport { h, drivers })
}

fn max_second_difference(values: &[f64]) -> f64 {
    values
        .windows(3)
        .map(|w| w[0] - 2.0 * w[1] + w[2])
        .fold(f64::NEG_INFINITY, f64::max)
}

fn ic_for_driver(
    scenario: &Scenario,
    theta: &TypeProfile,
    setup: &MechanismSetup,
    truthful: &MechanismOutcome,
    i: usize,
    h: f64,
) -> Result<IcDriverReport> {
    let t = theta[i];
    // ℓᵢ at outcome `o` for a driver of type `ty`
    let ell = |o: &MechanismOutcome, ty: f64| {
        let f = o.f.as_slice();
        scenario.own_axis_raw(i, f).incentivized_cost(f[i], ty, o.u[i])
    };

    let f = truthful.f.as_slice();
    let axis = scenario.own_axis_raw(i, f);
    let slope_target = axis.emission(f[i]) - axis.travel_time(f[i]);
    let frozen = (ell(truthful, t + h) - ell(truthful, t - h)) / (2.0 * h);

    let up = setup.solve(scenario, &theta.with(i, t + h)?)?;
    let down = setup.solve(scenario, &theta.with(i, t - h)?)?;
    let total = (ell(&up, t + h) - ell(&down, t - h)) / (2.0 * h);
    let report_slope = (ell(&up, t) - ell(&down, t)) / (2.0 * h);

    let grid: Vec<f64> = (0..REPORT_GRID).map(|k| k as f64 / (REPORT_GRID - 1) as f64).collect();
    let outcomes = grid
        .iter()
        .map(|&th| setup.solve(scenario, &theta.with(i, th)?))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = outcomes.iter().map(|o| ell(o, t)).collect();
    let truthful_values: Vec<f64> = outcomes.iter().zip(&grid).map(|(o, &th)| ell(o, th)).collect();
    let max_second_diff = max_second_difference(&values);
    let value_max_second_diff = max_second_difference(&truthful_values);

    let at_truth = ell(truthful, t);
    let (argmin_theta_hat, best) = grid
        .iter()
        .copied()
        .zip(values.iter().copied())
        .fold((t, at_truth), |best, cand| if cand.1 < best.1 { cand } else { best });

    Ok(IcDriverReport {
        frozen_residual: (frozen - slope_target).abs(),
        total_residual: (total - slope_target).abs(),
        report_slope,
        max_second_diff,
        concave: max_second_diff <= CONCAVITY_TOL,
        value_max_second_diff,
        value_concave: value_max_second_diff <= CONCAVITY_TOL,
        argmin_theta_hat,
        misreport_gain: at_truth - best,
    })
}

/// Everything that can be checked on a fixed `(f, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub obedience: ObedienceReport,
    pub definition: DefinitionCheck,
    pub budget_slack: f64,
    pub ic: Option<IcReport>,
}

impl AuditReport {
    pub fn budget_pass(&self) -> bool {
        self.budget_slack >= -BUDGET_TOL
    }

    pub fn pass(&self) -> bool {
        self.obedience.pass
            && self.definition.pass()
            && self.budget_pass()
            && self.ic.as_ref().is_none_or(IcReport::pass)
    }
}

pub fn audit_recommendation(
    scenario: &Scenario,
    theta: &TypeProfile,
    f: &EcoProfile,
    u: &IncentiveVector,
    budget: f64,
    opts: &SolverOptions,
) -> Result<AuditReport> {
    Ok(AuditReport {
        obedience: obedience_margin(scenario, theta, f, u, opts)?,
        definition: obedience_definition_check(scenario, theta, f, u, opts)?,
        budget_slack: budget_check(u, budget),
        ic: None,
    })
}
