//! Best responses and Nash equilibria of the induced eco-driving game.

use crate::error::{Error, Result};
use crate::model::{check_nonneg, check_unit, EcoProfile, IncentiveVector, OwnAxis, Scenario, TypeProfile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Gauss–Seidel stopping threshold on the max profile change per sweep.
    pub tol_profile: f64,
    /// Derivative tolerance for scalar best-response bisection.
    pub tol_deriv: f64,
    pub max_sweeps: usize,
    /// Own-axis grid size used by audits.
    pub grid_points: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_profile: 1e-6,
            tol_deriv: 1e-8,
            max_sweeps: 500,
            grid_points: 101,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_profile > 0.0) {
            return Err(Error::invalid("tol_profile", "must be positive"));
        }
        if !(self.tol_deriv > 0.0) {
            return Err(Error::invalid("tol_deriv", "must be positive"));
        }
        if self.max_sweeps == 0 {
            return Err(Error::invalid("max_sweeps", "must be positive"));
        }
        if self.grid_points < 2 {
            return Err(Error::invalid("grid_points", "need at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashResult {
    pub profile: EcoProfile,
    pub converged: bool,
    pub iterations: usize,
    /// Max absolute profile change over the last sweep.
    pub residual: f64,
}

/// Minimizer of a convex `ℓᵢ` over [0, 1] by sign analysis of its derivative.
///
/// Derivatives within `tol_deriv` of zero count as stationary, and the
/// largest such point is returned, so flat optima resolve to their top end.
pub(crate) fn own_argmin(axis: &OwnAxis, theta: f64, u: f64, tol_deriv: f64) -> f64 {
    let stationary_or_falling = |ai: f64| axis.incentivized_cost_grad(ai, theta, u) <= tol_deriv;
    if !stationary_or_falling(0.0) {
        return 0.0;
    }
    if stationary_or_falling(1.0) {
        return 1.0;
    }
    // invariant: predicate holds at lo, fails at hi
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return lo;
        }
        if stationary_or_falling(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Driver `i`'s best response to the others' levels in `a_others` (slot `i`
/// is ignored).
pub fn best_response(
    scenario: &Scenario,
    i: usize,
    a_others: &EcoProfile,
    theta_i: f64,
    u_i: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    check_unit("theta_i", theta_i)?;
    check_nonneg("u_i", u_i)?;
    let axis = scenario.own_axis(i, a_others)?;
    Ok(own_argmin(&axis, theta_i, u_i, opts.tol_deriv))
}

fn check_game(scenario: &Scenario, theta: &TypeProfile, u: &IncentiveVector) -> Result<()> {
    scenario.check_len("type profile", theta.len())?;
    scenario.check_len("incentive vector", u.len())
}

/// Gauss–Seidel iterated best response from `init`, ascending driver order.
///
/// Running out of sweeps is not an error: the last iterate comes back with
/// `converged = false`.
pub fn nash_solve(
    scenario: &Scenario,
    theta: &TypeProfile,
    u: &IncentiveVector,
    init: &EcoProfile,
    opts: &SolverOptions,
) -> Result<NashResult> {
    check_game(scenario, theta, u)?;
    scenario.check_len("initial profile", init.len())?;

    let mut a = init.as_slice().to_vec();
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        residual = 0.0;
        for i in 0..scenario.n() {
            let axis = scenario.own_axis_raw(i, &a);
            let next = own_argmin(&axis, theta[i], u[i], opts.tol_deriv);
            residual = f64::max(residual, (next - a[i]).abs());
            a[i] = next;
        }
        if residual <= opts.tol_profile {
            break;
        }
    }
    Ok(NashResult {
        profile: EcoProfile::from_vec_unchecked(a),
        converged: residual <= opts.tol_profile,
        iterations: sweeps,
        residual,
    })
}

/// `k`-th of `points` evenly spaced grid points on [0, 1].
pub(crate) fn unit_grid(points: usize) -> impl Iterator<Item = f64> {
    let last = (points - 1) as f64;
    (0..points).map(move |k| k as f64 / last)
}

/// Per-driver best improvement available by a unilateral deviation to a
/// point of the `grid_points` own-axis grid, floored at 0.
pub fn epsilon_nash_check(
    scenario: &Scenario,
    theta: &TypeProfile,
    u: &IncentiveVector,
    a: &EcoProfile,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    check_game(scenario, theta, u)?;
    scenario.check_len("eco profile", a.len())?;
    Ok((0..scenario.n())
        .map(|i| {
            let axis = scenario.own_axis_raw(i, a.as_slice());
            let here = axis.incentivized_cost(a[i], theta[i], u[i]);
            unit_grid(opts.grid_points)
                .map(|ai| here - axis.incentivized_cost(ai, theta[i], u[i]))
                .fold(0.0, f64::max)
        })
        .collect())
}
