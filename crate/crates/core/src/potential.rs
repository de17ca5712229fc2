//! Potentials `c(t, y)` on path space.
//!
//! A potential is a real functional of the path prefix `y|[0,t]`, Lipschitz
//! in the running sup norm with constant `β(T)` and bounded by `M(α, T)` on
//! the ball `‖y‖_T ≤ α`. The constants are declared by whoever builds the
//! potential; [`validate_potential`] samples paths to catch false claims.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::ScalarField;
use crate::hermite::{dot, HermiteState};
use crate::path_core::{euclidean_norm, GridPath, PathView};
use crate::rng::StreamRng;

type EvalFn = Arc<dyn Fn(f64, &PathView<'_>) -> f64 + Send + Sync>;
type BetaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type BoundFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A path functional with declared regularity constants.
#[derive(Clone)]
pub struct PotentialSpec {
    label: String,
    eval: EvalFn,
    beta: BetaFn,
    bound: BoundFn,
    dim: Option<usize>,
    reads_path: bool,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("reads_path", &self.reads_path)
            .finish()
    }
}

impl PotentialSpec {
    /// General constructor. `eval` receives the path prefix ending at `t`.
    pub fn new<E, B, M>(label: impl Into<String>, eval: E, beta: B, bound: M) -> Self
    where
        E: Fn(f64, &PathView<'_>) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        M: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        PotentialSpec {
            label: label.into(),
            eval: Arc::new(eval),
            beta: Arc::new(beta),
            bound: Arc::new(bound),
            dim: None,
            reads_path: true,
        }
    }

    /// Restricts the potential to paths of dimension `dim`.
    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = Some(dim);
        self
    }

    /// Declares that `eval` ignores the path (depends on time only).
    pub fn path_independent(mut self) -> Self {
        self.reads_path = false;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `c(t, y|[0,t])`. The view must end at `t`.
    pub fn eval(&self, t: f64, prefix: &PathView<'_>) -> f64 {
        (self.eval)(t, prefix)
    }

    /// Declared Lipschitz constant on `[0, T]`.
    pub fn beta(&self, horizon: f64) -> f64 {
        (self.beta)(horizon)
    }

    /// Declared bound `M(α, T)` on the ball of radius `α`.
    pub fn bound(&self, alpha: f64, horizon: f64) -> f64 {
        (self.bound)(alpha, horizon)
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn reads_path(&self) -> bool {
        self.reads_path
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self.dim {
            Some(d) if d != dim => Err(Error::Shape(format!(
                "potential `{}` expects paths of dimension {d}, got {dim}",
                self.label
            ))),
            _ => Ok(()),
        }
    }

    /// `−c` with the same constants.
    pub fn negate(&self) -> PotentialSpec {
        let inner = self.eval.clone();
        PotentialSpec {
            label: format!("-({})", self.label),
            eval: Arc::new(move |t, y| -inner(t, y)),
            ..self.clone()
        }
    }
}

/// `c ≡ λ`.
pub fn make_constant(lambda: f64) -> PotentialSpec {
    let m = lambda.abs();
    PotentialSpec::new(
        format!("constant({lambda})"),
        move |_, _| lambda,
        |_| 0.0,
        move |_, _| m,
    )
    .path_independent()
}

/// `c(t, y) = ⟨v, y(t)⟩` for a fixed vector `v`.
///
/// `β` is the Euclidean norm of `v`, the Cauchy–Schwarz constant for the
/// Euclidean path norm used by [`GridPath::sup_norm`].
pub fn linear_potential(label: impl Into<String>, v: Vec<f64>) -> PotentialSpec {
    let coeffs: Arc<[f64]> = v.into();
    let beta = euclidean_norm(&coeffs);
    let dim = coeffs.len();
    PotentialSpec::new(
        label,
        move |_, y| dot(&coeffs, y.last()),
        move |_| beta,
        move |alpha, _| beta * alpha,
    )
    .with_dim(dim)
}

/// `c(t, y) = ⟨V, y(t)⟩` on coefficient paths.
pub fn make_linear_functional(v: &HermiteState) -> PotentialSpec {
    linear_potential(
        format!("linear(N = {}, d = {})", v.order(), v.dim()),
        v.coeffs().to_vec(),
    )
}

/// `c(t, y) = V̄(y(t))` with a declared Lipschitz constant and ball bound.
pub fn make_state_potential<B>(
    label: impl Into<String>,
    vbar: ScalarField,
    beta_decl: f64,
    bound_decl: B,
) -> PotentialSpec
where
    B: Fn(f64, f64) -> f64 + Send + Sync + 'static,
{
    PotentialSpec::new(
        label,
        move |_, y| vbar(y.last()),
        move |_| beta_decl,
        bound_decl,
    )
}

/// `c(t, y) = ‖y(t)‖`, 1-Lipschitz and bounded by `α` on the ball.
pub fn norm_potential() -> PotentialSpec {
    PotentialSpec::new(
        "norm",
        |_, y| euclidean_norm(y.last()),
        |_| 1.0,
        |alpha, _| alpha,
    )
}

/// `c(t, y) = scale · y(t)` on scalar paths.
pub fn coordinate_potential(scale: f64) -> PotentialSpec {
    let s = scale.abs();
    PotentialSpec::new(
        format!("coordinate({scale})"),
        move |_, y| scale * y.last()[0],
        move |_| s,
        move |alpha, _| s * alpha,
    )
    .with_dim(1)
}

/// `c(t, y) = a ‖y(t)‖²`, with `β` declared for the ball of radius `radius`.
pub fn quadratic_potential(a: f64, radius: f64) -> PotentialSpec {
    PotentialSpec::new(
        format!("quadratic(a = {a}, radius = {radius})"),
        move |_, y| {
            let r = euclidean_norm(y.last());
            a * r * r
        },
        move |_| 2.0 * a.abs() * radius,
        move |alpha, _| a.abs() * alpha * alpha,
    )
}

/// Genuinely path-dependent potential
/// `c(t, y) = (1 + t)^{-1} ∫_0^t ‖y(s)‖ ds` (trapezoid on the grid).
pub fn path_average_potential() -> PotentialSpec {
    PotentialSpec::new(
        "path_average",
        |t, y| {
            let n = y.len();
            if n < 2 {
                return 0.0;
            }
            let mut acc = 0.0;
            let mut prev = euclidean_norm(y.point(0));
            for i in 1..n {
                let cur = euclidean_norm(y.point(i));
                acc += 0.5 * (prev + cur) * y.dt();
                prev = cur;
            }
            acc / (1.0 + t)
        },
        |horizon| horizon / (1.0 + horizon),
        |alpha, horizon| alpha * horizon / (1.0 + horizon),
    )
}

/// `c(t, y) = g(t)`, ignoring the path.
pub fn time_potential<G>(label: impl Into<String>, g: G, sup_abs: f64) -> PotentialSpec
where
    G: Fn(f64) -> f64 + Send + Sync + 'static,
{
    PotentialSpec::new(label, move |t, _| g(t), |_| 0.0, move |_, _| sup_abs).path_independent()
}

/// Outcome of [`validate_potential`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub label: String,
    pub alpha: f64,
    pub horizon: f64,
    pub samples: usize,
    pub declared_beta: f64,
    pub observed_lipschitz_ratio: f64,
    pub declared_bound: f64,
    pub observed_max_abs: f64,
    pub lipschitz_ok: bool,
    pub bound_ok: bool,
    pub non_anticipative: bool,
    pub pass: bool,
}

const VALIDATION_STEPS: usize = 50;
const SLACK: f64 = 1e-12;

/// Samples pairs of paths in the ball of radius `α` on `[0, T]` and checks
/// the declared Lipschitz constant, the declared ball bound and
/// non-anticipativity. Failures are reported, never raised.
pub fn validate_potential(
    spec: &PotentialSpec,
    alpha: f64,
    horizon: f64,
    n_samples: usize,
    seed: u64,
) -> ValidationReport {
    let dim = spec.dim().unwrap_or(1);
    validate_potential_in(spec, dim, alpha, horizon, n_samples, seed)
}

/// [`validate_potential`] on paths of an explicit dimension.
pub fn validate_potential_in(
    spec: &PotentialSpec,
    dim: usize,
    alpha: f64,
    horizon: f64,
    n_samples: usize,
    seed: u64,
) -> ValidationReport {
    let n_samples = n_samples.max(1);
    let dt = horizon / VALIDATION_STEPS as f64;
    let beta = spec.beta(horizon);
    let bound = spec.bound(alpha, horizon);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut non_anticipative = true;

    for s in 0..n_samples {
        let mut rng = StreamRng::new(seed, s as u64);
        let (y1, y2) = sample_pair(&mut rng, s % 4, dim, dt, alpha);
        let mut d_run: f64 = 0.0;
        for i in 0..=VALIDATION_STEPS {
            let t = i as f64 * dt;
            let c1 = spec.eval(t, &y1.prefix(i));
            let c2 = spec.eval(t, &y2.prefix(i));
            worst_abs = worst_abs.max(c1.abs()).max(c2.abs());
            let d: Vec<f64> = y1
                .point(i)
                .iter()
                .zip(y2.point(i))
                .map(|(a, b)| a - b)
                .collect();
            d_run = d_run.max(euclidean_norm(&d));
            let num = (c1 - c2).abs();
            let ratio = if d_run > 0.0 {
                num / d_run
            } else if num > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            if ratio.is_nan() {
                worst_ratio = f64::INFINITY;
            } else {
                worst_ratio = worst_ratio.max(ratio);
            }
        }

        // perturb strictly after a random time and compare bitwise
        let cut = (rng.uniform() * VALIDATION_STEPS as f64) as usize;
        let mut data = y1.as_slice().to_vec();
        for v in data.iter_mut().skip((cut + 1) * dim) {
            *v += alpha * (rng.uniform() - 0.5);
        }
        let perturbed = GridPath::new(0.0, dt, dim, data).expect("valid sample path");
        let t = cut as f64 * dt;
        let a = spec.eval(t, &y1.prefix(cut));
        let b = spec.eval(t, &perturbed.prefix(cut));
        if a.to_bits() != b.to_bits() {
            non_anticipative = false;
        }
    }

    let lipschitz_ok = worst_ratio <= beta + SLACK;
    let bound_ok = worst_abs <= bound + SLACK * bound.max(1.0);
    ValidationReport {
        label: spec.label().to_string(),
        alpha,
        horizon,
        samples: n_samples,
        declared_beta: beta,
        observed_lipschitz_ratio: worst_ratio,
        declared_bound: bound,
        observed_max_abs: worst_abs,
        lipschitz_ok,
        bound_ok,
        non_anticipative,
        pass: lipschitz_ok && bound_ok && non_anticipative,
    }
}

fn random_direction(rng: &mut StreamRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = euclidean_norm(&v);
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Smooth random path with a few Fourier modes per coordinate.
fn smooth_path(rng: &mut StreamRng, dim: usize, dt: f64) -> Vec<f64> {
    let horizon = dt * VALIDATION_STEPS as f64;
    let modes: Vec<[f64; 4]> = (0..dim)
        .map(|_| [rng.normal(), rng.normal(), rng.normal(), rng.normal()])
        .collect();
    let mut data = Vec::with_capacity((VALIDATION_STEPS + 1) * dim);
    for i in 0..=VALIDATION_STEPS {
        let u = i as f64 * dt / horizon;
        for m in &modes {
            let w = std::f64::consts::PI * u;
            data.push(m[0] + m[1] * w.cos() + m[2] * (2.0 * w).sin() + m[3] * (3.0 * w).cos());
        }
    }
    data
}

fn random_walk(rng: &mut StreamRng, dim: usize, dt: f64) -> Vec<f64> {
    let mut data = Vec::with_capacity((VALIDATION_STEPS + 1) * dim);
    let mut x: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    data.extend_from_slice(&x);
    for _ in 0..VALIDATION_STEPS {
        for xi in x.iter_mut() {
            *xi += rng.normal() * dt.sqrt();
        }
        data.extend_from_slice(&x);
    }
    data
}

/// Rescales so that the sup norm equals `radius`.
fn fit_ball(mut data: Vec<f64>, dim: usize, radius: f64) -> Vec<f64> {
    let sup = data.chunks(dim).map(euclidean_norm).fold(0.0, f64::max);
    if sup > 0.0 {
        let s = radius / sup;
        data.iter_mut().for_each(|v| *v *= s);
    }
    data
}

fn sample_pair(
    rng: &mut StreamRng,
    family: usize,
    dim: usize,
    dt: f64,
    alpha: f64,
) -> (GridPath, GridPath) {
    let steps = VALIDATION_STEPS;
    let r1 = alpha * (0.25 + 0.75 * rng.uniform());
    let r2 = alpha * (0.25 + 0.75 * rng.uniform());
    let (a, b) = match family {
        0 => {
            let dir = random_direction(rng, dim);
            let v: Vec<f64> = dir.iter().map(|d| d * r1).collect();
            (
                vec![0.0; (steps + 1) * dim],
                v.iter().copied().cycle().take((steps + 1) * dim).collect(),
            )
        }
        1 => (
            fit_ball(smooth_path(rng, dim, dt), dim, r1),
            fit_ball(smooth_path(rng, dim, dt), dim, r2),
        ),
        2 => {
            let base = fit_ball(smooth_path(rng, dim, dt), dim, 0.9 * r1);
            let eps = fit_ball(smooth_path(rng, dim, dt), dim, 1e-3 * alpha);
            let pert = base.iter().zip(&eps).map(|(x, e)| x + e).collect();
            (base, pert)
        }
        _ => (
            fit_ball(random_walk(rng, dim, dt), dim, r1),
            fit_ball(random_walk(rng, dim, dt), dim, r2),
        ),
    };
    (
        GridPath::new(0.0, dt, dim, a).expect("valid sample path"),
        GridPath::new(0.0, dt, dim, b).expect("valid sample path"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::field;
    use crate::hermite::{delta_coeffs, project};

    fn path_of(values: &[f64]) -> GridPath {
        GridPath::new(0.0, 0.1, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn constant_potential() {
        let y = path_of(&[1.0, 2.0, 3.0]);
        assert_eq!(make_constant(0.0).eval(0.2, &y.view()), 0.0);
        assert_eq!(make_constant(1.0).eval(0.2, &y.view()), 1.0);
        let c = make_constant(-2.5);
        assert_eq!(c.bound(1.0, 1.0), 2.5);
        assert_eq!(c.bound(17.0, 3.0), 2.5);
        assert_eq!(c.beta(5.0), 0.0);
    }

    #[test]
    fn linear_functional_on_delta_path() {
        let v0 = 1.7;
        let mut coeffs = vec![0.0; 9];
        coeffs[0] = v0;
        let v = HermiteState::new(coeffs, 8, 1, 0.0).unwrap();
        let c = make_linear_functional(&v);
        let y = GridPath::new(0.0, 0.1, 9, delta_coeffs(&[0.0], 8).into_coeffs()).unwrap();
        let expect = v0 * std::f64::consts::PI.powf(-0.25);
        assert!((c.eval(0.0, &y.view()) - expect).abs() < 1e-15);
        assert!((expect / v0 - 0.75113).abs() < 1e-5);
        let zero = make_linear_functional(&HermiteState::zeros(8, 1));
        assert_eq!(zero.eval(0.0, &y.view()), 0.0);
        assert!(c.check_dim(3).is_err());
    }

    #[test]
    fn linear_functional_reproduces_state_potential() {
        let vbar = |x: f64| (-(x - 0.3) * (x - 0.3)).exp() * 0.8;
        let v = project(&|x: &[f64]| vbar(x[0]), 64, 1).unwrap();
        let c = make_linear_functional(&v);
        for &x in &[-1.5, -0.2, 0.0, 0.9, 1.8] {
            let y = GridPath::new(0.0, 1.0, 65, delta_coeffs(&[x], 64).into_coeffs()).unwrap();
            assert!((c.eval(0.0, &y.view()) - vbar(x)).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn state_potentials() {
        let y = GridPath::from_rows(0.0, 0.5, &[vec![3.0, 4.0]]).unwrap();
        assert_eq!(norm_potential().eval(0.0, &y.view()), 5.0);
        let q = make_state_potential("half-square", field(|x| -x[0] * x[0] / 2.0), 1.0, |a, _| {
            a * a / 2.0
        });
        assert_eq!(q.bound(3.0, 1.0), 4.5);
        let seven = make_state_potential("seven", field(|_| 7.0), 0.0, |_, _| 7.0);
        let k = make_constant(7.0);
        assert_eq!(seven.eval(0.0, &y.view()), k.eval(0.0, &y.view()));
    }

    #[test]
    fn validator_accepts_true_declarations() {
        let r = validate_potential(&make_constant(3.0), 2.0, 1.0, 40, 1);
        assert!(r.pass);
        assert_eq!(r.observed_lipschitz_ratio, 0.0);
        assert_eq!(r.observed_max_abs, 3.0);
        let r = validate_potential_in(&norm_potential(), 3, 2.0, 1.0, 60, 2);
        assert!(r.pass, "{r:?}");
        assert!(r.observed_lipschitz_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn validator_rejects_false_lipschitz_claim() {
        let liar = PotentialSpec::new(
            "norm-liar",
            |_, y| euclidean_norm(y.last()),
            |_| 0.5,
            |a, _| a,
        );
        let r = validate_potential(&liar, 2.0, 1.0, 20, 3);
        assert!(!r.pass);
        assert!(!r.lipschitz_ok);
        assert!(r.observed_lipschitz_ratio > 0.5);
        assert!(r.non_anticipative);
    }

    #[test]
    fn validator_rejects_false_bound() {
        let liar = PotentialSpec::new(
            "norm-small-bound",
            |_, y| euclidean_norm(y.last()),
            |_| 1.0,
            |a, _| 0.5 * a,
        );
        let r = validate_potential(&liar, 2.0, 1.0, 20, 3);
        assert!(!r.bound_ok);
    }

    #[test]
    fn negation_preserves_validity() {
        for spec in [
            make_constant(-1.2),
            norm_potential(),
            path_average_potential(),
            quadratic_potential(-0.5, 2.0),
        ] {
            let a = validate_potential(&spec, 2.0, 1.0, 40, 5);
            let b = validate_potential(&spec.negate(), 2.0, 1.0, 40, 5);
            assert!(a.pass, "{a:?}");
            assert!(b.pass, "{b:?}");
        }
    }

    #[test]
    fn prefix_determinism_of_path_average() {
        let y1 = GridPath::scalar(0.0, 0.1, 10, |t| t.sin()).unwrap();
        let y2 = GridPath::scalar(0.0, 0.1, 10, |t| if t > 0.55 { 9.0 } else { t.sin() }).unwrap();
        let c = path_average_potential();
        assert_eq!(
            c.eval(0.5, &y1.prefix(5)).to_bits(),
            c.eval(0.5, &y2.prefix(5)).to_bits()
        );
        assert_ne!(c.eval(1.0, &y1.view()), c.eval(1.0, &y2.view()));
    }
}
