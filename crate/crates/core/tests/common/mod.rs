#![allow(dead_code)]

use ecomech::scenario::{generate, unit_f64, GenerationSpec};
use ecomech::{DriverParams, EcoProfile, IncentiveVector, Scenario, TypeProfile};
use proptest::prelude::*;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn driver() -> DriverParams {
    DriverParams {
        alpha: 0.7,
        beta: 2.5,
        gamma: 3.5,
        xbar: 4.0,
        ybar: 1.0,
    }
}

/// One isolated driver.
pub fn s1() -> Scenario {
    Scenario::new(vec![vec![1.0]], vec![driver()]).unwrap()
}

/// Two identical drivers, weight 0.5 each way.
pub fn s2() -> Scenario {
    Scenario::new(vec![vec![1.0, 0.5], vec![0.5, 1.0]], vec![driver(); 2]).unwrap()
}

pub fn ty(v: &[f64]) -> TypeProfile {
    TypeProfile::from_slice(v).unwrap()
}

pub fn eco(v: &[f64]) -> EcoProfile {
    EcoProfile::from_slice(v).unwrap()
}

pub fn inc(v: &[f64]) -> IncentiveVector {
    IncentiveVector::from_slice(v).unwrap()
}

/// Seeded sampler for the fixed-size randomized suites.
pub struct Sampler(ChaCha20Rng);

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler(ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn unit(&mut self) -> f64 {
        unit_f64(self.0.next_u64())
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn index(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    pub fn seed(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// A generated scenario with `lo..=hi` drivers.
    pub fn scenario(&mut self, lo: usize, hi: usize) -> (Scenario, TypeProfile) {
        let n = lo + self.index(hi - lo + 1);
        generate(&GenerationSpec::new(n, self.seed())).unwrap()
    }

    pub fn types(&mut self, n: usize) -> TypeProfile {
        TypeProfile::new((0..n).map(|_| self.unit()).collect()).unwrap()
    }

    /// A profile in the box that hits the corners 0 and 1 now and then.
    pub fn profile(&mut self, n: usize) -> EcoProfile {
        let values = (0..n)
            .map(|_| match self.index(8) {
                0 => 0.0,
                1 => 1.0,
                _ => self.unit(),
            })
            .collect();
        EcoProfile::new(values).unwrap()
    }

    pub fn incentives(&mut self, n: usize, hi: f64) -> IncentiveVector {
        IncentiveVector::new((0..n).map(|_| self.range(0.0, hi)).collect()).unwrap()
    }
}

fn params() -> impl Strategy<Value = DriverParams> {
    (0.3f64..0.95, 0.5f64..4.0, 0.5f64..5.0, 1.0f64..6.0, 0.2f64..3.0).prop_map(
        |(alpha, beta, gamma, xbar, ybar)| DriverParams {
            alpha,
            beta,
            gamma,
            xbar,
            ybar,
        },
    )
}

/// Scenarios with 1..=`max_n` drivers; about half the off-diagonal weights are zero.
pub fn scenario(max_n: usize) -> impl Strategy<Value = Scenario> {
    (1..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::option::of(0.01f64..1.0), n * n),
            prop::collection::vec(params(), n),
        )
            .prop_map(move |(w, p)| {
                let rows = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| if i == j { 1.0 } else { w[i * n + j].unwrap_or(0.0) })
                            .collect()
                    })
                    .collect();
                Scenario::new(rows, p).unwrap()
            })
    })
}

fn unit_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, n)
}

/// A scenario with a type profile and an eco-driving profile of matching size.
pub fn instance(max_n: usize) -> impl Strategy<Value = (Scenario, TypeProfile, EcoProfile)> {
    scenario(max_n).prop_flat_map(|s| {
        let n = s.n();
        (Just(s), unit_vec(n), unit_vec(n))
            .prop_map(|(s, t, a)| (s, TypeProfile::new(t).unwrap(), EcoProfile::new(a).unwrap()))
    })
}
