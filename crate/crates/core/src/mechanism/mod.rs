//! First-best and second-best eco-driving mechanisms.
//!
//! Both recommend the emission-minimizing profile subject to a budget on the
//! summed positive parts of own-action derivatives, and pay each driver that
//! positive part as their incentive rate:
//!
//! * first-best hinges `∂ᵢcᵢ(a, θᵢ)` (types known),
//! * second-best hinges `∂ᵢyᵢ(a)` and never looks at reported types.

mod penalty;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{EcoProfile, IncentiveVector, Scenario, TypeProfile};
use crate::scenario::unit_f64;

use penalty::{descend, repair, Program};

/// Slack allowed when certifying `constraint ≤ budget`.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    FirstBest,
    SecondBest,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FirstBest => "first-best",
            Mode::SecondBest => "second-best",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-best" | "first_best" => Ok(Mode::FirstBest),
            "second-best" | "second_best" => Ok(Mode::SecondBest),
            other => Err(Error::invalid("mode", format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStyle {
    /// One descent from the zero profile.
    Local,
    /// Multi-start; keeps the best feasible candidate.
    Global,
}

impl SolveStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStyle::Local => "local",
            SolveStyle::Global => "global",
        }
    }
}

impl fmt::Display for SolveStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolveStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(SolveStyle::Local),
            "global" => Ok(SolveStyle::Global),
            other => Err(Error::invalid("style", format!("unknown solve style {other:?}"))),
        }
    }
}

/// How an outcome was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Local,
    Global,
    GridSearch,
}

/// Penalty-continuation schedule. Round `r` uses penalty weight
/// `initial_penalty·growthʳ` and softplus sharpness `initial_sharpness·growthʳ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismOptions {
    pub rounds: usize,
    pub initial_penalty: f64,
    pub initial_sharpness: f64,
    pub growth: f64,
    pub initial_step: f64,
    /// Stop a round once the projected-gradient sup-norm drops to this.
    pub pg_tol: f64,
    pub max_iters: usize,
    /// Uniform random starts added by the global style.
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for MechanismOptions {
    fn default() -> Self {
        Self {
            rounds: 5,
            initial_penalty: 1.0,
            initial_sharpness: 10.0,
            growth: 10.0,
            initial_step: 0.1,
            pg_tol: 1e-7,
            max_iters: 10_000,
            random_starts: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverMeta {
    pub method: Method,
    /// Number of starting points tried (grid points for the brute-force scan).
    pub starts: usize,
    /// Index into the start list of the returned candidate.
    pub best_start: usize,
    /// Descent iterations spent on the returned candidate.
    pub iterations: usize,
    pub converged: bool,
    /// Whether the candidate had to be pulled back to feasibility.
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismOutcome {
    /// Recommended levels.
    pub f: EcoProfile,
    pub u: IncentiveVector,
    /// Total emissions at `f`.
    pub objective: f64,
    /// Exact hinge constraint at `f`.
    pub constraint_value: f64,
    pub budget: f64,
    pub mode: Mode,
    pub solver_meta: SolverMeta,
}

impl MechanismOutcome {
    pub fn total_incentive(&self) -> f64 {
        self.u.total()
    }

    /// Every recommended level at 1 (up to 1e−6).
    pub fn full_compliance(&self) -> bool {
        self.f.as_slice().iter().all(|&v| v >= 1.0 - 1e-6)
    }
}

/// Per-driver weight on `∂ᵢxᵢ` inside the hinged derivative.
fn hinge_weights(scenario: &Scenario, theta: &TypeProfile, mode: Mode) -> Result<Vec<f64>> {
    match mode {
        Mode::FirstBest => {
            scenario.check_len("type profile", theta.len())?;
            Ok(theta.as_slice().to_vec())
        }
        Mode::SecondBest => Ok(vec![0.0; scenario.n()]),
    }
}

fn hinged_grads(scenario: &Scenario, weights: &[f64], a: &EcoProfile) -> Result<Vec<f64>> {
    scenario.check_len("eco profile", a.len())?;
    let a = a.as_slice();
    Ok((0..scenario.n())
        .map(|i| {
            scenario
                .own_axis_raw(i, a)
                .nominal_cost_grad(a[i], weights[i])
                .max(0.0)
        })
        .collect())
}

/// `Σᵢ |∂ᵢcᵢ(a, θᵢ)|₊`
pub fn first_best_constraint(scenario: &Scenario, theta: &TypeProfile, a: &EcoProfile) -> Result<f64> {
    let w = hinge_weights(scenario, theta, Mode::FirstBest)?;
    Ok(hinged_grads(scenario, &w, a)?.iter().sum())
}

/// `Σᵢ |∂ᵢyᵢ(a)|₊`
pub fn second_best_constraint(scenario: &Scenario, a: &EcoProfile) -> Result<f64> {
    Ok(hinged_grads(scenario, &vec![0.0; scenario.n()], a)?.iter().sum())
}

/// `uᵢ = |∂ᵢcᵢ(f, θᵢ)|₊`; zero for drivers who already prefer to go higher.
pub fn first_best_incentive(scenario: &Scenario, theta: &TypeProfile, f: &EcoProfile) -> Result<IncentiveVector> {
    let w = hinge_weights(scenario, theta, Mode::FirstBest)?;
    Ok(IncentiveVector::from_vec_unchecked(hinged_grads(scenario, &w, f)?))
}

/// `uᵢ = |∂ᵢyᵢ(f)|₊`
pub fn second_best_incentive(scenario: &Scenario, f: &EcoProfile) -> Result<IncentiveVector> {
    Ok(IncentiveVector::from_vec_unchecked(hinged_grads(
        scenario,
        &vec![0.0; scenario.n()],
        f,
    )?))
}

/// Incentive rule of `mode` evaluated at `f`.
pub fn incentive_rule(scenario: &Scenario, theta: &TypeProfile, f: &EcoProfile, mode: Mode) -> Result<IncentiveVector> {
    match mode {
        Mode::FirstBest => first_best_incentive(scenario, theta, f),
        Mode::SecondBest => second_best_incentive(scenario, f),
    }
}

fn check_budget(budget: f64) -> Result<()> {
    if budget >= 0.0 && budget.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("budget", format!("{budget} must be a finite non-negative number")))
    }
}

/// Orders candidates by objective, then toward larger profiles.
fn candidate_order(a: (f64, &[f64]), b: (f64, &[f64])) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| {
        b.1.iter()
            .zip(a.1)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

fn finish(
    scenario: &Scenario,
    theta: &TypeProfile,
    weights: &[f64],
    budget: f64,
    mode: Mode,
    f: Vec<f64>,
    solver_meta: SolverMeta,
) -> Result<MechanismOutcome> {
    let f = EcoProfile::from_vec_unchecked(f);
    let u = match mode {
        Mode::FirstBest => first_best_incentive(scenario, theta, &f)?,
        Mode::SecondBest => second_best_incentive(scenario, &f)?,
    };
    let constraint_value = hinged_grads(scenario, weights, &f)?.iter().sum();
    Ok(MechanismOutcome {
        objective: scenario.total_emissions_raw(f.as_slice()),
        f,
        u,
        constraint_value,
        budget,
        mode,
        solver_meta,
    })
}

/// Starting points: `0ₙ` for the local style; `0ₙ, 1ₙ, ½·1ₙ` plus seeded
/// uniform draws for the global style.
fn starts(n: usize, style: SolveStyle, opts: &MechanismOptions) -> Vec<Vec<f64>> {
    let mut starts = vec![vec![0.0; n]];
    if style == SolveStyle::Global {
        starts.push(vec![1.0; n]);
        starts.push(vec![0.5; n]);
        let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.random_starts {
            starts.push((0..n).map(|_| unit_f64(rng.next_u64())).collect());
        }
    }
    starts
}

/// Solves the mechanism program for `mode` and pairs the recommendation with
/// its incentive rule. `theta` is ignored in second-best mode.
pub fn solve_mechanism(
    scenario: &Scenario,
    theta: &TypeProfile,
    budget: f64,
    mode: Mode,
    style: SolveStyle,
    opts: &MechanismOptions,
) -> Result<MechanismOutcome> {
    check_budget(budget)?;
    let weights = hinge_weights(scenario, theta, mode)?;
    let program = Program {
        scenario,
        weights: &weights,
        budget,
    };
    let n = scenario.n();
    let origin = vec![0.0; n];
    if !program.is_feasible(&origin) {
        return Err(Error::Infeasible {
            value: program.exact_constraint(&origin),
            budget,
        });
    }

    let starts = starts(n, style, opts);
    let candidates: Vec<_> = starts
        .par_iter()
        .map(|start| {
            let descent = descend(&program, start, opts);
            let repaired = !program.is_feasible(&descent.profile);
            let profile = repair(&program, &descent.profile);
            let objective = scenario.total_emissions_raw(&profile);
            (objective, profile, descent, repaired)
        })
        .collect();

    let (best_start, (_, profile, descent, repaired)) = candidates
        .into_iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| candidate_order((a.0, &a.1), (b.0, &b.1)))
        .expect("at least one start");

    let meta = SolverMeta {
        method: match style {
            SolveStyle::Local => Method::Local,
            SolveStyle::Global => Method::Global,
        },
        starts: starts.len(),
        best_start,
        iterations: descent.iterations,
        converged: descent.converged,
        repaired,
    };
    finish(scenario, theta, &weights, budget, mode, profile, meta)
}

/// Exhaustive scan of the box grid with spacing `grid_step` (n ≤ 3).
///
/// Returns the feasible grid point with least total emissions; ties go to
/// the lexicographically larger profile.
pub fn brute_force_mechanism(
    scenario: &Scenario,
    theta: &TypeProfile,
    budget: f64,
    mode: Mode,
    grid_step: f64,
) -> Result<MechanismOutcome> {
    let n = scenario.n();
    if n > 3 {
        return Err(Error::TooManyDrivers(n));
    }
    check_budget(budget)?;
    let m = (1.0 / grid_step).round();
    if !(grid_step > 0.0) || m < 1.0 || (m * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("grid_step", format!("{grid_step} does not divide 1 evenly")));
    }
    let m = m as usize;
    let weights = hinge_weights(scenario, theta, mode)?;
    let program = Program {
        scenario,
        weights: &weights,
        budget,
    };

    let total = (m + 1).pow(n as u32);
    let mut idx = vec![0usize; n];
    let mut a = vec![0.0; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..total {
        for (v, &k) in a.iter_mut().zip(&idx) {
            *v = k as f64 / m as f64;
        }
        if program.is_feasible(&a) {
            let obj = scenario.total_emissions_raw(&a);
            // lexicographic enumeration: on equal objective the later point is larger
            if best.as_ref().is_none_or(|(b, _)| obj <= *b) {
                best = Some((obj, a.clone()));
            }
        }
        // odometer increment, last coordinate fastest
        for k in idx.iter_mut().rev() {
            *k += 1;
            if *k <= m {
                break;
            }
            *k = 0;
        }
    }

    let (_, profile) = best.ok_or_else(|| Error::Infeasible {
        value: program.exact_constraint(&vec![0.0; n]),
        budget,
    })?;
    let meta = SolverMeta {
        method: Method::GridSearch,
        starts: total,
        best_start: 0,
        iterations: total,
        converged: true,
        repaired: false,
    };
    finish(scenario, theta, &weights, budget, mode, profile, meta)
}
