//! Game instance and per-driver cost evaluation.
//!
//! Driver `i` has emissions `x̄ᵢ·αᵢ^(aᵢ + Σ_{j∈Nᵢ} wᵢⱼaⱼ)` and travel time
//! `βᵢ(aᵢ − avgᵢ)² + γᵢ·Σ_{j∈Nᵢ} wᵢⱼaⱼ + ȳᵢ`, where `Nᵢ = { j ≠ i : wᵢⱼ > 0 }`
//! and `avgᵢ` is the `wᵢⱼ`-weighted mean of the neighbors' levels (zero when
//! `Nᵢ` is empty). The diagonal `wᵢᵢ = 1` is a matrix convention only and
//! never enters the sums.
//!
//! Nothing here clamps: out-of-range inputs are rejected.

use std::ops::Index;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverParams {
    /// Emission decay base, in (0, 1).
    pub alpha: f64,
    /// Conformity weight.
    pub beta: f64,
    /// Neighborhood level weight.
    pub gamma: f64,
    /// Emissions at the all-zero profile.
    pub xbar: f64,
    /// Travel time at the all-zero profile.
    pub ybar: f64,
}

impl DriverParams {
    pub fn validate(&self, i: usize) -> Result<()> {
        let check = |name: &str, ok: bool, value: f64, domain: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(
                    format!("{name}[{i}]"),
                    format!("{value} not in {domain}"),
                ))
            }
        };
        let p = self;
        check("alpha", p.alpha > 0.0 && p.alpha < 1.0, p.alpha, "(0, 1)")?;
        check("beta", p.beta >= 0.0 && p.beta.is_finite(), p.beta, "[0, inf)")?;
        check("gamma", p.gamma >= 0.0 && p.gamma.is_finite(), p.gamma, "[0, inf)")?;
        check("xbar", p.xbar > 0.0 && p.xbar.is_finite(), p.xbar, "(0, inf)")?;
        check("ybar", p.ybar > 0.0 && p.ybar.is_finite(), p.ybar, "(0, inf)")
    }
}

/// An n-driver game instance: interaction weights plus per-driver parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    n: usize,
    /// Row-major n×n.
    weights: Vec<f64>,
    params: Vec<DriverParams>,
    /// `(j, wᵢⱼ)` for `j ∈ Nᵢ`, ascending `j`.
    neighbors: Vec<Vec<(usize, f64)>>,
    weight_sums: Vec<f64>,
}

impl Scenario {
    /// Builds a scenario from weight rows and per-driver parameters.
    ///
    /// Fails if the diagonal is not exactly 1, an off-diagonal weight lies
    /// outside [0, 1], dimensions disagree, or a parameter is out of domain.
    pub fn new(weights: Vec<Vec<f64>>, params: Vec<DriverParams>) -> Result<Self> {
        let n = params.len();
        if n == 0 {
            return Err(Error::invalid("n", "scenario needs at least one driver"));
        }
        if weights.len() != n {
            return Err(Error::DimensionMismatch {
                what: "weights rows",
                expected: n,
                got: weights.len(),
            });
        }
        for (i, p) in params.iter().enumerate() {
            p.validate(i)?;
        }

        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in weights.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "weights columns",
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, &w) in row.iter().enumerate() {
                if i == j {
                    if w != 1.0 {
                        return Err(Error::invalid(
                            "weights diagonal",
                            format!("w[{i}][{i}] = {w}, expected 1"),
                        ));
                    }
                } else if !(0.0..=1.0).contains(&w) {
                    return Err(Error::invalid(
                        format!("weights[{i}][{j}]"),
                        format!("{w} not in [0, 1]"),
                    ));
                }
                flat.push(w);
            }
        }

        let neighbors: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && flat[i * n + j] > 0.0)
                    .map(|j| (j, flat[i * n + j]))
                    .collect()
            })
            .collect();
        let weight_sums = neighbors
            .iter()
            .map(|nb| nb.iter().map(|&(_, w)| w).sum())
            .collect();

        Ok(Self {
            n,
            weights: flat,
            params,
            neighbors,
            weight_sums,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weight_rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn params(&self) -> &[DriverParams] {
        &self.params
    }

    /// Neighbor set `Nᵢ` with weights, ascending index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn neighbor_weight_sum(&self, i: usize) -> f64 {
        self.weight_sums[i]
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, n: self.n })
        }
    }

    pub(crate) fn check_len(&self, what: &'static str, len: usize) -> Result<()> {
        if len == self.n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected: self.n,
                got: len,
            })
        }
    }

    /// `Σ_{j∈Nᵢ} wᵢⱼaⱼ`. Ignores `a[i]`.
    pub(crate) fn exposure_raw(&self, i: usize, a: &[f64]) -> f64 {
        self.neighbors[i].iter().map(|&(j, w)| w * a[j]).sum()
    }

    pub(crate) fn neighbor_avg_raw(&self, i: usize, a: &[f64]) -> f64 {
        let s = self.weight_sums[i];
        if s > 0.0 {
            self.exposure_raw(i, a) / s
        } else {
            0.0
        }
    }

    /// Driver `i`'s costs as functions of their own level, others fixed at `a`.
    pub(crate) fn own_axis_raw(&self, i: usize, a: &[f64]) -> OwnAxis {
        OwnAxis {
            params: self.params[i],
            exposure: self.exposure_raw(i, a),
            avg: self.neighbor_avg_raw(i, a),
        }
    }

    /// Freezes everyone but driver `i` at `a` (slot `i` is ignored).
    pub fn own_axis(&self, i: usize, a: &EcoProfile) -> Result<OwnAxis> {
        self.check_index(i)?;
        self.check_len("eco profile", a.len())?;
        Ok(self.own_axis_raw(i, a.as_slice()))
    }

    fn at(&self, i: usize, a: &EcoProfile) -> Result<(OwnAxis, f64)> {
        let axis = self.own_axis(i, a)?;
        Ok((axis, a[i]))
    }

    pub fn neighbor_avg(&self, i: usize, a: &EcoProfile) -> Result<f64> {
        self.at(i, a).map(|(axis, _)| axis.avg)
    }

    pub fn emission(&self, i: usize, a: &EcoProfile) -> Result<f64> {
        self.at(i, a).map(|(axis, ai)| axis.emission(ai))
    }

    pub fn travel_time(&self, i: usize, a: &EcoProfile) -> Result<f64> {
        self.at(i, a).map(|(axis, ai)| axis.travel_time(ai))
    }

    pub fn emission_grad_own(&self, i: usize, a: &EcoProfile) -> Result<f64> {
        self.at(i, a).map(|(axis, ai)| axis.emission_grad(ai))
    }

    pub fn travel_time_grad_own(&self, i: usize, a: &EcoProfile) -> Result<f64> {
        self.at(i, a).map(|(axis, ai)| axis.travel_time_grad(ai))
    }

    pub fn nominal_cost(&self, i: usize, a: &EcoProfile, theta_i: f64) -> Result<f64> {
        check_unit("theta_i", theta_i)?;
        self.at(i, a).map(|(axis, ai)| axis.nominal_cost(ai, theta_i))
    }

    pub fn nominal_cost_grad_own(&self, i: usize, a: &EcoProfile, theta_i: f64) -> Result<f64> {
        check_unit("theta_i", theta_i)?;
        self.at(i, a).map(|(axis, ai)| axis.nominal_cost_grad(ai, theta_i))
    }

    /// `cᵢ(a, θᵢ) − uᵢaᵢ`.
    pub fn incentivized_cost(&self, i: usize, a: &EcoProfile, theta_i: f64, u_i: f64) -> Result<f64> {
        check_unit("theta_i", theta_i)?;
        check_nonneg("u_i", u_i)?;
        self.at(i, a)
            .map(|(axis, ai)| axis.incentivized_cost(ai, theta_i, u_i))
    }

    pub(crate) fn total_emissions_raw(&self, a: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| self.own_axis_raw(i, a).emission(a[i]))
            .sum()
    }

    pub fn total_emissions(&self, a: &EcoProfile) -> Result<f64> {
        self.check_len("eco profile", a.len())?;
        Ok(self.total_emissions_raw(a.as_slice()))
    }
}

/// One driver's cost functions restricted to their own action, with the rest
/// of the profile frozen.
#[derive(Debug, Clone, Copy)]
pub struct OwnAxis {
    pub params: DriverParams,
    /// `Σ_{j∈Nᵢ} wᵢⱼaⱼ`
    pub exposure: f64,
    /// Weighted neighbor average (0 for an empty neighborhood).
    pub avg: f64,
}

impl OwnAxis {
    pub fn emission(&self, ai: f64) -> f64 {
        self.params.xbar * self.params.alpha.powf(ai + self.exposure)
    }

    pub fn travel_time(&self, ai: f64) -> f64 {
        let d = ai - self.avg;
        self.params.beta * d * d + self.params.gamma * self.exposure + self.params.ybar
    }

    pub fn emission_grad(&self, ai: f64) -> f64 {
        self.params.alpha.ln() * self.emission(ai)
    }

    pub fn travel_time_grad(&self, ai: f64) -> f64 {
        2.0 * self.params.beta * (ai - self.avg)
    }

    pub fn nominal_cost(&self, ai: f64, theta: f64) -> f64 {
        theta * self.emission(ai) + (1.0 - theta) * self.travel_time(ai)
    }

    pub fn nominal_cost_grad(&self, ai: f64, theta: f64) -> f64 {
        theta * self.emission_grad(ai) + (1.0 - theta) * self.travel_time_grad(ai)
    }

    pub fn incentivized_cost(&self, ai: f64, theta: f64, u: f64) -> f64 {
        self.nominal_cost(ai, theta) - u * ai
    }

    pub fn incentivized_cost_grad(&self, ai: f64, theta: f64, u: f64) -> f64 {
        self.nominal_cost_grad(ai, theta) - u
    }
}

pub(crate) fn check_unit(field: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{v} not in [0, 1]")))
    }
}

pub(crate) fn check_nonneg(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{v} is negative or not finite")))
    }
}

macro_rules! profile_newtype {
    ($(#[$doc:meta])* $name:ident, $label:literal, $check:path) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Result<Self> {
                for (i, &v) in values.iter().enumerate() {
                    $check(&format!("{}[{}]", $label, i), v)?;
                }
                Ok(Self(values))
            }

            pub fn from_slice(values: &[f64]) -> Result<Self> {
                Self::new(values.to_vec())
            }

            pub fn zeros(n: usize) -> Self {
                Self(vec![0.0; n])
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }

            /// Copy with component `i` replaced.
            pub fn with(&self, i: usize, value: f64) -> Result<Self> {
                if i >= self.0.len() {
                    return Err(Error::IndexOutOfRange { index: i, n: self.0.len() });
                }
                $check(&format!("{}[{}]", $label, i), value)?;
                let mut v = self.0.clone();
                v[i] = value;
                Ok(Self(v))
            }

            #[allow(dead_code)]
            pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
                debug_assert!(values.iter().all(|&v| $check("", v).is_ok()));
                Self(values)
            }
        }

        impl Index<usize> for $name {
            type Output = f64;

            fn index(&self, i: usize) -> &f64 {
                &self.0[i]
            }
        }
    };
}

profile_newtype!(
    /// Driver types θ ∈ [0,1]ⁿ.
    TypeProfile,
    "theta",
    check_unit
);
profile_newtype!(
    /// Eco-driving levels a ∈ [0,1]ⁿ.
    EcoProfile,
    "a",
    check_unit
);
profile_newtype!(
    /// Incentive rates u ∈ ℝ₊ⁿ.
    IncentiveVector,
    "u",
    check_nonneg
);

impl EcoProfile {
    pub fn constant(n: usize, level: f64) -> Result<Self> {
        Self::new(vec![level; n])
    }
}

impl IncentiveVector {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}
