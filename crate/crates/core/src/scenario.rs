//! Seeded scenario generation and the JSON scenario file.
//!
//! # Reproducibility contract
//!
//! Draws come from ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64(seed)`)
//! and each uniform variate is `(next_u64() >> 11) · 2⁻⁵³`, scaled affinely
//! onto its range. The draw order is fixed:
//!
//! 1. off-diagonal weights, row-major; each entry consumes one variate for the
//!    zero/non-zero decision (`v < zero_prob` ⇒ 0) and, when non-zero, a
//!    second variate for its value on [0, 1];
//! 2. per driver in index order: α, β, γ;
//! 3. θ for every driver in index order.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DriverParams, Scenario, TypeProfile};

pub const FILE_VERSION: u32 = 1;

/// Maps 64 random bits onto [0, 1) using the top 53.
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSpec {
    pub n: usize,
    pub seed: u64,
    /// Probability that an off-diagonal weight is exactly zero.
    pub zero_prob: f64,
    pub alpha_range: (f64, f64),
    pub beta_range: (f64, f64),
    pub gamma_range: (f64, f64),
    pub theta_range: (f64, f64),
    pub xbar: f64,
    pub ybar: f64,
}

impl GenerationSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            zero_prob: 0.5,
            alpha_range: (0.6, 0.8),
            beta_range: (2.0, 3.0),
            gamma_range: (3.0, 4.0),
            theta_range: (0.0, 0.4),
            xbar: 4.0,
            ybar: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.zero_prob) {
            return Err(Error::invalid("zero_prob", format!("{} not in [0, 1]", self.zero_prob)));
        }
        let ranges = [
            ("alpha_range", self.alpha_range, 0.0, 1.0, true),
            ("beta_range", self.beta_range, 0.0, f64::INFINITY, false),
            ("gamma_range", self.gamma_range, 0.0, f64::INFINITY, false),
            ("theta_range", self.theta_range, 0.0, 1.0, false),
        ];
        for (name, (lo, hi), min, max, open) in ranges {
            let inside = if open {
                lo > min && hi < max
            } else {
                lo >= min && hi <= max
            };
            if !(lo <= hi) || !inside || !hi.is_finite() {
                return Err(Error::invalid(name, format!("[{lo}, {hi}] is empty or outside the parameter domain")));
            }
        }
        if !(self.xbar > 0.0 && self.xbar.is_finite()) {
            return Err(Error::invalid("xbar", "must be positive"));
        }
        if !(self.ybar > 0.0 && self.ybar.is_finite()) {
            return Err(Error::invalid("ybar", "must be positive"));
        }
        Ok(())
    }
}

struct Draws(ChaCha20Rng);

impl Draws {
    fn unit(&mut self) -> f64 {
        unit_f64(self.0.next_u64())
    }

    fn uniform(&mut self, (lo, hi): (f64, f64)) -> f64 {
        lo + (hi - lo) * self.unit()
    }
}

pub fn generate(spec: &GenerationSpec) -> Result<(Scenario, TypeProfile)> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = Draws(ChaCha20Rng::seed_from_u64(spec.seed));

    let mut weights = vec![vec![0.0; n]; n];
    for (i, row) in weights.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            *w = if i == j {
                1.0
            } else if rng.unit() < spec.zero_prob {
                0.0
            } else {
                rng.unit()
            };
        }
    }

    let params = (0..n)
        .map(|_| {
            let alpha = rng.uniform(spec.alpha_range);
            let beta = rng.uniform(spec.beta_range);
            let gamma = rng.uniform(spec.gamma_range);
            DriverParams {
                alpha,
                beta,
                gamma,
                xbar: spec.xbar,
                ybar: spec.ybar,
            }
        })
        .collect();
    let theta = (0..n).map(|_| rng.uniform(spec.theta_range)).collect();

    Ok((Scenario::new(weights, params)?, TypeProfile::new(theta)?))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: u32,
    n: usize,
    weights: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    xbar: Vec<f64>,
    ybar: Vec<f64>,
    theta: Vec<f64>,
}

/// Writes floats with 17 significant digits, which round-trips every `f64`.
struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes a scenario and its types to the versioned JSON format.
pub fn to_json(scenario: &Scenario, theta: &TypeProfile) -> Result<String> {
    scenario.check_len("type profile", theta.len())?;
    let p = scenario.params();
    let file = ScenarioFile {
        version: FILE_VERSION,
        n: scenario.n(),
        weights: scenario.weight_rows(),
        alpha: p.iter().map(|d| d.alpha).collect(),
        beta: p.iter().map(|d| d.beta).collect(),
        gamma: p.iter().map(|d| d.gamma).collect(),
        xbar: p.iter().map(|d| d.xbar).collect(),
        ybar: p.iter().map(|d| d.ybar).collect(),
        theta: theta.as_slice().to_vec(),
    };
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits);
    file.serialize(&mut ser).expect("in-memory serialization");
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("json is utf-8"))
}

/// Parses and validates the JSON scenario format.
pub fn from_json(text: &str, origin: &Path) -> Result<(Scenario, TypeProfile)> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    if file.version != FILE_VERSION {
        return Err(Error::invalid(
            "version",
            format!("unsupported scenario file version {}", file.version),
        ));
    }
    let n = file.n;
    let vectors = [
        ("weights", file.weights.len()),
        ("alpha", file.alpha.len()),
        ("beta", file.beta.len()),
        ("gamma", file.gamma.len()),
        ("xbar", file.xbar.len()),
        ("ybar", file.ybar.len()),
        ("theta", file.theta.len()),
    ];
    for (field, len) in vectors {
        if len != n {
            return Err(Error::invalid(field, format!("has {len} entries, expected n = {n}")));
        }
    }
    let params = (0..n)
        .map(|i| DriverParams {
            alpha: file.alpha[i],
            beta: file.beta[i],
            gamma: file.gamma[i],
            xbar: file.xbar[i],
            ybar: file.ybar[i],
        })
        .collect();
    let scenario = Scenario::new(file.weights, params)?;
    let theta = TypeProfile::new(file.theta)?;
    Ok((scenario, theta))
}

pub fn save(scenario: &Scenario, theta: &TypeProfile, path: &Path) -> Result<()> {
    let text = to_json(scenario, theta)?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<(Scenario, TypeProfile)> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let spec = GenerationSpec::new(10, 42);
        let (s, theta) = generate(&spec).unwrap();
        let (s2, theta2) = generate(&spec).unwrap();
        assert_eq!(s, s2);
        assert_eq!(theta, theta2);

        for (i, p) in s.params().iter().enumerate() {
            assert!((0.6..=0.8).contains(&p.alpha));
            assert!((2.0..=3.0).contains(&p.beta));
            assert!((3.0..=4.0).contains(&p.gamma));
            assert_eq!(p.xbar, 4.0);
            assert_eq!(p.ybar, 1.0);
            assert!((0.0..=0.4).contains(&theta[i]));
            assert_eq!(s.weight(i, i), 1.0);
        }
        let (other, _) = generate(&GenerationSpec::new(10, 43)).unwrap();
        assert_ne!(s, other);
    }

    #[test]
    fn forced_zero_weights_isolate_drivers() {
        let spec = GenerationSpec {
            zero_prob: 1.0,
            ..GenerationSpec::new(2, 7)
        };
        let (s, _) = generate(&spec).unwrap();
        assert_eq!(s.weight(0, 1), 0.0);
        assert_eq!(s.weight(1, 0), 0.0);
        assert!(s.neighbors(0).is_empty());
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&GenerationSpec::new(0, 1)).unwrap_err().to_string().contains("n"));
        let spec = GenerationSpec {
            alpha_range: (0.8, 0.6),
            ..GenerationSpec::new(3, 1)
        };
        assert!(generate(&spec).unwrap_err().to_string().contains("alpha_range"));
        let spec = GenerationSpec {
            alpha_range: (0.5, 1.0),
            ..GenerationSpec::new(3, 1)
        };
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (s, theta) = generate(&GenerationSpec::new(6, 9)).unwrap();
        let text = to_json(&s, &theta).unwrap();
        let (s2, theta2) = from_json(&text, Path::new("mem")).unwrap();
        assert_eq!(s, s2);
        assert_eq!(theta, theta2);
        assert!(text.contains("\"version\":1"));
    }

    fn s1_json(weights: &str, theta: &str) -> String {
        format!(
            r#"{{"version":1,"n":1,"weights":{weights},"alpha":[0.7],"beta":[2.5],"gamma":[3.5],"xbar":[4.0],"ybar":[1.0],"theta":{theta}}}"#
        )
    }

    #[test]
    fn load_validation_errors() {
        let origin = Path::new("s.json");
        let err = from_json(&s1_json("[[0.5]]", "[0.2]"), origin).unwrap_err();
        assert!(err.to_string().contains("weights diagonal"), "{err}");

        let err = from_json(&s1_json("[[1.0]]", "[1.2]"), origin).unwrap_err();
        assert!(err.to_string().contains("theta[0]"), "{err}");

        let err = from_json(&s1_json("[[1.0]]", "[0.2, 0.3]"), origin).unwrap_err();
        assert!(err.to_string().contains("theta"), "{err}");

        let err = from_json(r#"{"version":1,"n":1}"#, origin).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("weights"), "{err}");
    }
}
