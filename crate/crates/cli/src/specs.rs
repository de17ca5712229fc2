//! Text forms of potentials, scalar functions and diffusions.
//!
//! Potentials and scalar functions use `kind=<name>,key=value,...`; list
//! values are separated by `;`. Diffusions are JSON objects tagged by `kind`.

use std::collections::BTreeMap;
use std::sync::Arc;

use pathkac::diffusion::DiffusionSpec;
use pathkac::functions::{field, Constant, Gaussian, ScalarField, SmoothPlateau, TestFunction};
use pathkac::hermite::delta_coeffs;
use pathkac::potential::{
    coordinate_potential, linear_potential, make_constant, make_linear_functional,
    make_state_potential, norm_potential, path_average_potential, quadratic_potential,
    PotentialSpec,
};
use serde::Deserialize;

use crate::CliError;

/// Parsed `kind=...,key=value` string.
#[derive(Debug, Clone, PartialEq)]
pub struct KindSpec {
    pub kind: String,
    params: BTreeMap<String, String>,
}

impl KindSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut kind = None;
        let mut params = BTreeMap::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("expected key=value in '{text}', found '{part}'"))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k == "kind" {
                kind = Some(v.to_string());
            } else if params.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Usage(format!("duplicate key '{k}' in '{text}'")));
            }
        }
        let kind = kind.ok_or_else(|| CliError::Usage(format!("missing kind in '{text}'")))?;
        Ok(KindSpec { kind, params })
    }

    fn float(&self, key: &str, default: Option<f64>) -> Result<f64, CliError> {
        match self.params.get(key) {
            Some(v) => v.parse().map_err(|_| {
                CliError::Usage(format!(
                    "{}: '{key}' must be a number, got '{v}'",
                    self.kind
                ))
            }),
            None => {
                default.ok_or_else(|| CliError::Usage(format!("{}: missing '{key}'", self.kind)))
            }
        }
    }

    fn list(&self, key: &str, default: Option<Vec<f64>>) -> Result<Vec<f64>, CliError> {
        match self.params.get(key) {
            Some(v) => v
                .split(';')
                .map(|x| {
                    x.trim().parse().map_err(|_| {
                        CliError::Usage(format!(
                            "{}: '{key}' must be a ';'-separated list",
                            self.kind
                        ))
                    })
                })
                .collect(),
            None => {
                default.ok_or_else(|| CliError::Usage(format!("{}: missing '{key}'", self.kind)))
            }
        }
    }

    fn order(&self) -> Result<usize, CliError> {
        let n = self.float("order", Some(32.0))?;
        if n < 0.0 || n.fract() != 0.0 {
            return Err(CliError::Usage(format!(
                "{}: order must be a non-negative integer",
                self.kind
            )));
        }
        Ok(n as usize)
    }

    fn only(&self, allowed: &[&str]) -> Result<(), CliError> {
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(CliError::Usage(format!(
                "{}: unknown key '{k}' (allowed: {})",
                self.kind,
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }
}

pub const POTENTIAL_KINDS: &str = "constant(lambda) | norm | coordinate(scale) | identity | \
quadratic(a, radius) | path_average | linear(weights) | point_value(at, order)";

/// Path potential `c(t, y)`.
pub fn parse_potential(text: &str) -> Result<PotentialSpec, CliError> {
    let s = KindSpec::parse(text)?;
    let c = match s.kind.as_str() {
        "constant" => {
            s.only(&["lambda"])?;
            make_constant(s.float("lambda", None)?)
        }
        "norm" => {
            s.only(&[])?;
            norm_potential()
        }
        "coordinate" => {
            s.only(&["scale"])?;
            coordinate_potential(s.float("scale", Some(1.0))?)
        }
        "identity" => {
            s.only(&[])?;
            make_state_potential("identity", field(|x| x[0]), 1.0, |a, _| a).with_dim(1)
        }
        "quadratic" => {
            s.only(&["a", "radius"])?;
            quadratic_potential(s.float("a", None)?, s.float("radius", Some(10.0))?)
        }
        "path_average" => {
            s.only(&[])?;
            path_average_potential()
        }
        "linear" => {
            s.only(&["weights"])?;
            linear_potential(format!("linear({text})"), s.list("weights", None)?)
        }
        "point_value" => {
            s.only(&["at", "order"])?;
            make_linear_functional(&delta_coeffs(&s.list("at", Some(vec![0.0]))?, s.order()?))
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown potential kind '{other}' (expected {POTENTIAL_KINDS})"
            )))
        }
    };
    Ok(c)
}

pub const FUNCTION_KINDS: &str = "constant(value) | quadratic(a) | linear(slope) | sin(amp, freq) | \
gaussian(amplitude, center, width) | gaussian_density(mean, variance) | plateau(level, inner, outer)";

/// Scalar function on `R^d`, usable both as `V̄` and as a test function.
#[derive(Clone)]
pub struct FunctionSpec {
    pub text: String,
    pub kind: String,
    pub test: Arc<dyn TestFunction>,
    pub field: ScalarField,
    /// `(mean, variance)` for `gaussian_density`.
    pub density: Option<(f64, f64)>,
}

impl std::fmt::Debug for FunctionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.text)
    }
}

impl FunctionSpec {
    pub fn is_constant(&self) -> bool {
        self.kind == "constant"
    }
}

fn wrap<T: TestFunction + Clone + 'static>(
    text: &str,
    kind: &str,
    t: T,
    density: Option<(f64, f64)>,
) -> FunctionSpec {
    let inner = t.clone();
    FunctionSpec {
        text: text.to_string(),
        kind: kind.to_string(),
        test: Arc::new(t),
        field: field(move |x| inner.value(x)),
        density,
    }
}

pub fn parse_function(text: &str) -> Result<FunctionSpec, CliError> {
    let s = KindSpec::parse(text)?;
    let spec = match s.kind.as_str() {
        "constant" => {
            s.only(&["value"])?;
            wrap(text, &s.kind, Constant(s.float("value", None)?), None)
        }
        "quadratic" => {
            s.only(&["a"])?;
            let a = s.float("a", None)?;
            let f = field(move |x| a * x.iter().map(|v| v * v).sum::<f64>());
            wrap(text, &s.kind, f, None)
        }
        "linear" => {
            s.only(&["slope"])?;
            let b = s.float("slope", None)?;
            wrap(text, &s.kind, field(move |x| b * x[0]), None)
        }
        "sin" => {
            s.only(&["amp", "freq"])?;
            let (a, w) = (s.float("amp", Some(1.0))?, s.float("freq", Some(1.0))?);
            wrap(text, &s.kind, field(move |x| a * (w * x[0]).sin()), None)
        }
        "gaussian" => {
            s.only(&["amplitude", "center", "width"])?;
            let g = Gaussian::new(
                s.float("amplitude", Some(1.0))?,
                s.list("center", Some(vec![0.0]))?,
                s.float("width", Some(1.0))?,
            );
            wrap(text, &s.kind, g, None)
        }
        "gaussian_density" => {
            s.only(&["mean", "variance"])?;
            let (m, v) = (s.float("mean", Some(0.0))?, s.float("variance", Some(1.0))?);
            if !(v > 0.0) {
                return Err(CliError::Usage(
                    "gaussian_density: variance must be positive".into(),
                ));
            }
            wrap(text, &s.kind, Gaussian::normal_density(m, v), Some((m, v)))
        }
        "plateau" => {
            s.only(&["level", "inner", "outer"])?;
            let p = SmoothPlateau {
                level: s.float("level", Some(1.0))?,
                inner: s.float("inner", Some(5.0))?,
                outer: s.float("outer", Some(7.5))?,
            };
            if !(p.outer > p.inner && p.inner >= 0.0) {
                return Err(CliError::Usage("plateau: need 0 <= inner < outer".into()));
            }
            wrap(text, &s.kind, p, None)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown function kind '{other}' (expected {FUNCTION_KINDS})"
            )))
        }
    };
    Ok(spec)
}

pub const DIFFUSION_KINDS: &str = r#"{"kind": "brownian" | "frozen" | "ou" (theta, mean, sigma) | "constant" (sigma, drift), "x0": [...], "lifetime_radius": r}"#;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DiffusionText {
    Brownian {
        x0: Vec<f64>,
        lifetime_radius: Option<f64>,
    },
    Frozen {
        x0: Vec<f64>,
    },
    Ou {
        theta: f64,
        #[serde(default)]
        mean: f64,
        sigma: f64,
        x0: Vec<f64>,
        lifetime_radius: Option<f64>,
    },
    Constant {
        sigma: Vec<f64>,
        drift: Vec<f64>,
        x0: Vec<f64>,
        lifetime_radius: Option<f64>,
    },
}

pub fn parse_diffusion(text: &str) -> Result<DiffusionSpec, CliError> {
    let d: DiffusionText = serde_json::from_str(text).map_err(|e| {
        CliError::Usage(format!(
            "diffusion '{text}': {e} (expected {DIFFUSION_KINDS})"
        ))
    })?;
    let (spec, radius) = match d {
        DiffusionText::Brownian {
            x0,
            lifetime_radius,
        } => (DiffusionSpec::brownian(x0), lifetime_radius),
        DiffusionText::Frozen { x0 } => (DiffusionSpec::frozen(x0), None),
        DiffusionText::Ou {
            theta,
            mean,
            sigma,
            x0,
            lifetime_radius,
        } => (
            DiffusionSpec::ornstein_uhlenbeck(theta, mean, sigma, x0),
            lifetime_radius,
        ),
        DiffusionText::Constant {
            sigma,
            drift,
            x0,
            lifetime_radius,
        } => (DiffusionSpec::constant(sigma, drift, x0), lifetime_radius),
    };
    let spec = spec.map_err(|e| CliError::Usage(format!("diffusion '{text}': {e}")))?;
    Ok(match radius {
        Some(r) => spec.with_lifetime_radius(r),
        None => spec,
    })
}
