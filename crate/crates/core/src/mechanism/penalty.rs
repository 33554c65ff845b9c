//! Box-constrained projected gradient descent on total emissions plus an
//! exterior quadratic penalty on a softplus-smoothed hinge constraint.

use crate::model::Scenario;

use super::MechanismOptions;

/// The program `min Σᵢ xᵢ(a)  s.t.  Σᵢ |Dᵢ(a)|₊ ≤ b` over the unit box, where
/// `Dᵢ = θᵢ·∂ᵢxᵢ + (1 − θᵢ)·∂ᵢyᵢ`. Second-best is the `θ = 0` instance.
pub(crate) struct Program<'a> {
    pub scenario: &'a Scenario,
    pub weights: &'a [f64],
    pub budget: f64,
}

/// `(ln(1 + e^{kz}) − ln 2) / k`, and its derivative in `z`.
///
/// Centered so a zero derivative costs nothing: consensus profiles stay
/// feasible at zero budget for every sharpness.
fn softplus(z: f64, k: f64) -> (f64, f64) {
    let t = k * z;
    let raw = if t > 0.0 {
        z + (-t).exp().ln_1p() / k
    } else {
        t.exp().ln_1p() / k
    };
    let value = raw - std::f64::consts::LN_2 / k;
    let slope = if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    };
    (value, slope)
}

impl Program<'_> {
    fn n(&self) -> usize {
        self.scenario.n()
    }

    /// Own-action derivative `Dᵢ(a)` that the hinge acts on.
    pub fn own_grad(&self, i: usize, a: &[f64]) -> f64 {
        self.scenario
            .own_axis_raw(i, a)
            .nominal_cost_grad(a[i], self.weights[i])
    }

    /// `Σᵢ |Dᵢ(a)|₊` with the exact hinge.
    pub fn exact_constraint(&self, a: &[f64]) -> f64 {
        (0..self.n()).map(|i| self.own_grad(i, a).max(0.0)).sum()
    }

    pub fn is_feasible(&self, a: &[f64]) -> bool {
        self.exact_constraint(a) <= self.budget + super::FEASIBILITY_TOL
    }

    /// Penalized objective at smoothing sharpness `k` and penalty weight `rho`,
    /// optionally writing its gradient into `grad`.
    fn penalized(&self, a: &[f64], k: f64, rho: f64, grad: Option<&mut [f64]>) -> f64 {
        let s = self.scenario;
        let n = self.n();
        let mut emissions = 0.0;
        let mut smoothed = 0.0;
        // per driver: (xᵢ, Dᵢ, σ(kDᵢ))
        let mut parts = Vec::with_capacity(n);
        for i in 0..n {
            let axis = s.own_axis_raw(i, a);
            let x = axis.emission(a[i]);
            let d = axis.nominal_cost_grad(a[i], self.weights[i]);
            let (sp, slope) = softplus(d, k);
            emissions += x;
            smoothed += sp;
            parts.push((x, d, slope));
        }
        let excess = (smoothed - self.budget).max(0.0);
        let value = emissions + rho * excess * excess;

        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v = 0.0);
            let scale = 2.0 * rho * excess;
            for (i, &(x, _, slope)) in parts.iter().enumerate() {
                let p = s.params()[i];
                let theta = self.weights[i];
                let ln_a = p.alpha.ln();
                // ∂xᵢ/∂aⱼ = xᵢ·ln αᵢ·cᵢⱼ with cᵢᵢ = 1, cᵢⱼ = wᵢⱼ on Nᵢ
                let dx = x * ln_a;
                // ∂ᵢxᵢ = dx, so ∂(∂ᵢxᵢ)/∂aⱼ = dx·ln αᵢ·cᵢⱼ
                let ddx = dx * ln_a;
                let two_beta = 2.0 * p.beta;
                let wsum = s.neighbor_weight_sum(i);
                let h = scale * slope;

                g[i] += dx + h * (theta * ddx + (1.0 - theta) * two_beta);
                for &(j, w) in s.neighbors(i) {
                    let dy_j = if wsum > 0.0 { -two_beta * w / wsum } else { 0.0 };
                    g[j] += dx * w + h * (theta * ddx * w + (1.0 - theta) * dy_j);
                }
            }
        }
        value
    }
}

pub(crate) struct Descent {
    pub profile: Vec<f64>,
    pub iterations: usize,
    /// Whether the last continuation round met the projected-gradient tolerance.
    pub converged: bool,
}

fn project(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Continuation over penalty weight and softplus sharpness from `start`.
pub(crate) fn descend(program: &Program<'_>, start: &[f64], opts: &MechanismOptions) -> Descent {
    let n = program.n();
    let mut a: Vec<f64> = start.iter().copied().map(project).collect();
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    for round in 0..opts.rounds {
        let growth = opts.growth.powi(round as i32);
        let rho = opts.initial_penalty * growth;
        let k = opts.initial_sharpness * growth;
        converged = false;

        for _ in 0..opts.max_iters {
            let value = program.penalized(&a, k, rho, Some(&mut grad));
            let pg_norm = a
                .iter()
                .zip(&grad)
                .map(|(&ai, &gi)| (project(ai - gi) - ai).abs())
                .fold(0.0, f64::max);
            if pg_norm <= opts.pg_tol {
                converged = true;
                break;
            }
            iterations += 1;

            let mut step = opts.initial_step;
            let mut accepted = false;
            for _ in 0..60 {
                let mut decrease = 0.0;
                for ((t, &ai), &gi) in trial.iter_mut().zip(&a).zip(&grad) {
                    *t = project(ai - step * gi);
                    decrease += gi * (*t - ai);
                }
                if decrease >= 0.0 {
                    // the step no longer moves the iterate
                    break;
                }
                let next = program.penalized(&trial, k, rho, None);
                if next < value && next <= value + 1e-4 * decrease {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // stationary to double precision: the remaining gradient is
                // below what the objective value can resolve
                converged = true;
                break;
            }
            std::mem::swap(&mut a, &mut trial);
        }
    }

    Descent {
        profile: a,
        iterations,
        converged,
    }
}

/// Pulls an infeasible point toward the origin until the exact constraint
/// meets the budget with no tolerance. Assumes the origin itself is feasible.
pub(crate) fn repair(program: &Program<'_>, a: &[f64]) -> Vec<f64> {
    if program.is_feasible(a) {
        return a.to_vec();
    }
    let scaled = |t: f64| a.iter().map(|&v| v * t).collect::<Vec<_>>();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if program.exact_constraint(&scaled(mid)) <= program.budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    scaled(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;

    #[test]
    fn softplus_limits() {
        let (v, s) = softplus(3.0, 1e5);
        assert!((v - 3.0).abs() < 1e-5);
        assert_eq!(s, 1.0);
        let (v, s) = softplus(-3.0, 1e5);
        assert!(v <= 0.0 && v > -1e-5);
        assert_eq!(s, 0.0);
        let (v, s) = softplus(0.0, 10.0);
        assert_eq!(v, 0.0);
        assert_eq!(s, 0.5);
    }

    #[test]
    fn penalized_gradient_matches_finite_differences() {
        let s = crate::model::Scenario::new(
            vec![
                vec![1.0, 0.5, 0.0],
                vec![0.2, 1.0, 0.7],
                vec![0.9, 0.0, 1.0],
            ],
            vec![driver(); 3],
        )
        .unwrap();
        let weights = [0.2, 0.05, 0.35];
        let program = Program { scenario: &s, weights: &weights, budget: 0.5 };
        let a = [0.3, 0.8, 0.55];
        let (k, rho) = (20.0, 7.0);
        let mut g = [0.0; 3];
        program.penalized(&a, k, rho, Some(&mut g));
        let h = 1e-6;
        for j in 0..3 {
            let mut up = a;
            let mut dn = a;
            up[j] += h;
            dn[j] -= h;
            let fd = (program.penalized(&up, k, rho, None) - program.penalized(&dn, k, rho, None)) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-6 * fd.abs().max(1.0), "j={j}: fd {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn repair_lands_on_boundary() {
        let s1 = s1();
        let program = Program { scenario: &s1, weights: &[0.0], budget: 3.0 };
        let fixed = repair(&program, &[0.9]);
        assert!(program.is_feasible(&fixed));
        assert!((fixed[0] - 0.6).abs() < 1e-6);
    }
}
