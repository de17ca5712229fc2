//! Feynman–Kac estimators and their cross-checks.
//!
//! For a diffusion `X` from `x` and a potential `V̄`, the weighted semigroup is
//! `P_t^V f(x) = E[e^{∫_0^t V̄(X_s) ds} f(X_t)]` and its coefficient-valued dual
//! is `P_t^{V*}(x) = E[e^{∫_0^t V̄(X_s) ds} δ_{X_t}]`. Every Monte Carlo
//! estimator here regenerates paths by index and reduces them in fixed
//! chunks, so results do not depend on the worker count, and estimators that
//! are compared against each other share their paths.

use serde::Serialize;

use crate::diffusion::{
    cumulative_trapezoid, euler_path, DiffusionSpec, GaussianShift, McConfig, PathBatch, PathBuffer,
};
use crate::error::{Error, Result};
use crate::functions::{ScalarField, TestFunction};
use crate::hermite::{
    adjoint_l_delta_coeffs, derivative, dot, hermite_basis, pair, project, state_len,
    translation_nodes, translation_window, HermiteState, Projector,
};
use crate::path_core::{euclidean_norm, GridPath};
use crate::potential::{make_linear_functional, PotentialSpec};
use crate::stats::{reduce_indices, Moments, VecMoments};
use crate::transform::{forward_map, kac_cumulative, EXPONENT_LIMIT};

/// Below this alive fraction an estimate carries a warning.
pub const MIN_ALIVE_FRACTION: f64 = 0.99;

/// Paths whose shift leaves the translation window may be dropped up to
/// this fraction.
pub const MAX_REJECTED_FRACTION: f64 = 0.01;

/// Scalar Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemigroupEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub alive_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Coefficient-valued Monte Carlo estimate with coordinate-wise standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateEstimate {
    pub value: HermiteState,
    pub std_error: Vec<f64>,
    pub n_paths: usize,
    pub alive_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// A compared quantity with its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gap {
    pub name: String,
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Gap {
    pub fn new(name: impl Into<String>, gap: f64, tolerance: f64) -> Self {
        Gap {
            name: name.into(),
            gap,
            tolerance,
            pass: gap <= tolerance,
        }
    }
}

fn alive_warning(alive_fraction: f64) -> Option<String> {
    (alive_fraction < MIN_ALIVE_FRACTION).then(|| {
        format!(
            "only {:.4} of the paths are alive at the query time (minimum {MIN_ALIVE_FRACTION})",
            alive_fraction
        )
    })
}

fn check_weight(k: f64, t: f64) -> Result<f64> {
    if !(k.abs() <= EXPONENT_LIMIT) {
        return Err(Error::Overflow {
            time: t,
            exponent: k.abs(),
            limit: EXPONENT_LIMIT,
        });
    }
    Ok(k.exp())
}

/// `∫_0^{t_k} V̄(X_s) ds` along the buffered path.
fn kac_exponent(buf: &PathBuffer, d: usize, k: usize, dt: f64, vbar: &ScalarField) -> f64 {
    *cumulative_trapezoid(&buf.states[..(k + 1) * d], d, dt, vbar, 1.0)
        .last()
        .expect("non-empty")
}

/// Per-chunk accumulator for one-pass estimators.
struct Acc<T> {
    buf: PathBuffer,
    dead: u64,
    worst_exponent: f64,
    inner: T,
}

fn run_paths<T, I, F, M>(
    spec: &DiffusionSpec,
    cfg: &McConfig,
    k: usize,
    vbar: &ScalarField,
    init: I,
    fold: F,
    merge: M,
) -> Acc<T>
where
    T: Send,
    I: Fn() -> T + Sync,
    F: Fn(&mut T, &PathBuffer, f64) + Sync,
    M: Fn(&mut T, T),
{
    let d = spec.dim();
    reduce_indices(
        cfg.n_paths,
        || Acc {
            buf: PathBuffer::new(),
            dead: 0,
            worst_exponent: 0.0,
            inner: init(),
        },
        |acc, i| {
            euler_path(spec, cfg, i, k, &mut acc.buf);
            if !acc.buf.alive_at(k) {
                acc.dead += 1;
                return;
            }
            let e = kac_exponent(&acc.buf, d, k, cfg.dt, vbar);
            if !(e.abs() <= acc.worst_exponent) {
                acc.worst_exponent = if e.is_nan() { f64::INFINITY } else { e.abs() };
            }
            fold(&mut acc.inner, &acc.buf, e);
        },
        |a, b| {
            a.dead += b.dead;
            a.worst_exponent = a.worst_exponent.max(b.worst_exponent);
            merge(&mut a.inner, b.inner);
        },
    )
}

fn finish<T>(acc: &Acc<T>, cfg: &McConfig, t: f64) -> Result<f64> {
    check_weight(acc.worst_exponent, t)?;
    Ok(1.0 - acc.dead as f64 / cfg.n_paths as f64)
}

/// `P_t^V f(x) = E[e^{∫_0^t V̄(X_s) ds} f(X_t)]` over paths alive at `t`.
pub fn pt_v_f(
    f: &dyn TestFunction,
    vbar: &ScalarField,
    spec: &DiffusionSpec,
    cfg: &McConfig,
    t: f64,
) -> Result<SemigroupEstimate> {
    cfg.validate()?;
    let k = cfg.step_index(t)?;
    let acc = run_paths(
        spec,
        cfg,
        k,
        vbar,
        Moments::new,
        |m, buf, e| m.push(e.exp() * f.value(buf.state(k))),
        |a, b| a.merge(&b),
    );
    let alive_fraction = finish(&acc, cfg, t)?;
    Ok(SemigroupEstimate {
        value: acc.inner.mean(),
        std_error: acc.inner.std_error(),
        n_paths: cfg.n_paths,
        alive_fraction,
        warning: alive_warning(alive_fraction),
    })
}

/// `P_t^{V*}(x) = E[e^{∫_0^t V̄(X_s) ds} δ_{X_t}]` in Hermite coefficients.
pub fn pt_v_star(
    vbar: &ScalarField,
    spec: &DiffusionSpec,
    cfg: &McConfig,
    t: f64,
    order: usize,
) -> Result<StateEstimate> {
    cfg.validate()?;
    let k = cfg.step_index(t)?;
    let len = state_len(order, spec.dim());
    let acc = run_paths(
        spec,
        cfg,
        k,
        vbar,
        || VecMoments::new(len),
        |m, buf, e| m.push_scaled(e.exp(), &hermite_basis(order, buf.state(k))),
        |a, b| a.merge(&b),
    );
    let alive_fraction = finish(&acc, cfg, t)?;
    Ok(StateEstimate {
        value: HermiteState::new(acc.inner.mean().to_vec(), order, spec.dim(), 0.0)?,
        std_error: acc.inner.std_errors(),
        n_paths: cfg.n_paths,
        alive_fraction,
        warning: alive_warning(alive_fraction),
    })
}

/// `Ŷ_t = Y_t exp(∫_0^t ⟨V, Y_s⟩ ds)` for a coefficient path `Y`.
pub fn transform_lifted(y: &GridPath, v: &HermiteState) -> Result<GridPath> {
    if y.dim() != v.len() {
        return Err(Error::Shape(format!(
            "coefficient path of dimension {} does not match V with {} coefficients",
            y.dim(),
            v.len()
        )));
    }
    if let Some(l) = y.lifetime() {
        y.check_alive(l)?;
    }
    let mut data = Vec::with_capacity(y.as_slice().len());
    let mut acc = 0.0;
    let mut prev = dot(v.coeffs(), y.point(0));
    for i in 0..y.len() {
        if i > 0 {
            let cur = dot(v.coeffs(), y.point(i));
            acc += 0.5 * y.dt() * (prev + cur);
            prev = cur;
        }
        if !(acc.abs() <= EXPONENT_LIMIT) {
            return Err(Error::Overflow {
                time: y.time(i),
                exponent: acc.abs(),
                limit: EXPONENT_LIMIT,
            });
        }
        let w = acc.exp();
        data.extend(y.point(i).iter().map(|c| c * w));
    }
    GridPath::new(y.t0(), y.dt(), y.dim(), data)
}

/// Mean and spread of the weak-form residual at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakResidual {
    pub t: f64,
    pub dt: f64,
    /// Mean of `D(t) = ⟨f, Ŷ_t⟩ − ⟨f, Ŷ_0⟩ − ∫_0^t e^{K_s} (L̄f + V̄f)(X_s) ds`.
    pub mean: f64,
    pub std_error: f64,
    /// `3 SE + 5 dt`.
    pub tolerance: f64,
    pub pass: bool,
    /// Mean of `D(t)` minus the discrete martingale `Σ e^{K_s} ∇f(X_s)·σ̄(X_s) ΔB_s`.
    pub strong_mean: f64,
    pub strong_std_error: f64,
    /// Mean of `|D(t) − martingale|`, the pathwise discretization error.
    pub strong_abs_mean: f64,
    pub alive_fraction: f64,
}

struct ResidualAcc {
    weak: Vec<Moments>,
    strong: Vec<Moments>,
    strong_abs: Vec<Moments>,
}

/// Weak-form residual of `Ŷ_t = e^{∫_0^t V̄(X_s) ds} δ_{X_t}` tested against
/// `f` at each of `times`, with `⟨f, Ŷ_t⟩` computed through the order-`N`
/// coefficients of `f`.
pub fn spde_weak_residual(
    f: &dyn TestFunction,
    vbar: &ScalarField,
    spec: &DiffusionSpec,
    cfg: &McConfig,
    times: &[f64],
    order: usize,
) -> Result<Vec<WeakResidual>> {
    cfg.validate()?;
    if times.is_empty() {
        return Ok(Vec::new());
    }
    let idx: Vec<usize> = times
        .iter()
        .map(|&t| cfg.step_index(t))
        .collect::<Result<_>>()?;
    let kmax = *idx.iter().max().expect("non-empty");
    let d = spec.dim();
    let r = spec.noise_dim();
    let dt = cfg.dt;
    let fc = project(&|x: &[f64]| f.value(x), order, d)?;
    let f_n = |x: &[f64]| dot(fc.coeffs(), &hermite_basis(order, x));
    let f_n0 = f_n(spec.x0());
    let f0 = f.value(spec.x0());

    let acc = reduce_indices(
        cfg.n_paths,
        || {
            (
                PathBuffer::new(),
                ResidualAcc {
                    weak: vec![Moments::new(); idx.len()],
                    strong: vec![Moments::new(); idx.len()],
                    strong_abs: vec![Moments::new(); idx.len()],
                },
                vec![0u64; idx.len()],
                0.0f64,
            )
        },
        |(buf, acc, dead, worst), i| {
            euler_path(spec, cfg, i, kmax, buf);
            let mut kac = 0.0;
            let mut v_prev = 0.0;
            let mut integral = 0.0;
            let mut g_prev = 0.0;
            let mut mart = 0.0;
            for k in 0..=kmax {
                if !buf.alive_at(k) {
                    for (j, &kt) in idx.iter().enumerate() {
                        if kt >= k {
                            dead[j] += 1;
                        }
                    }
                    return;
                }
                let x = buf.state(k);
                let v = vbar(x);
                if k > 0 {
                    kac += 0.5 * dt * (v_prev + v);
                }
                v_prev = v;
                *worst = worst.max(kac.abs());
                let w = kac.exp();
                let a = spec.diffusion_matrix(x);
                let b = spec.drift_at(x);
                let g = w * (crate::hermite::adjoint_l_on_delta(x, &a, &b, f) + v * f.value(x));
                if k > 0 {
                    integral += 0.5 * dt * (g_prev + g);
                }
                g_prev = g;
                for (j, &kt) in idx.iter().enumerate() {
                    if kt == k {
                        let weak = w * f_n(x) - f_n0 - integral;
                        let strong = w * f.value(x) - f0 - integral - mart;
                        acc.weak[j].push(weak);
                        acc.strong[j].push(strong);
                        acc.strong_abs[j].push(strong.abs());
                    }
                }
                if k < kmax {
                    let grad = f.gradient(x);
                    let sigma = spec.sigma_at(x);
                    let db = buf.increment(k, r);
                    let mut s = 0.0;
                    for p in 0..d {
                        for q in 0..r {
                            s += grad[p] * sigma[p * r + q] * db[q];
                        }
                    }
                    mart += w * s;
                }
            }
        },
        |a, b| {
            for j in 0..a.1.weak.len() {
                a.1.weak[j].merge(&b.1.weak[j]);
                a.1.strong[j].merge(&b.1.strong[j]);
                a.1.strong_abs[j].merge(&b.1.strong_abs[j]);
                a.2[j] += b.2[j];
            }
            a.3 = a.3.max(b.3);
        },
    );
    check_weight(acc.3, times[0])?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let weak = &acc.1.weak[j];
            let strong = &acc.1.strong[j];
            let tolerance = 3.0 * weak.std_error() + 5.0 * dt;
            WeakResidual {
                t,
                dt,
                mean: weak.mean(),
                std_error: weak.std_error(),
                tolerance,
                pass: weak.mean().abs() <= tolerance,
                strong_mean: strong.mean(),
                strong_std_error: strong.std_error(),
                strong_abs_mean: acc.1.strong_abs[j].mean(),
                alive_fraction: 1.0 - acc.2[j] as f64 / cfg.n_paths as f64,
            }
        })
        .collect())
}

/// Weak-form residual at index `k` of one lifted path, computed entirely in
/// coefficient space (scalar diffusions): `x` is the state path, `hat` the
/// transformed lift `Ŷ`, `f` and `v` the coefficients of the test function
/// and of `V̄`.
pub fn lifted_weak_residual(
    f: &HermiteState,
    x: &GridPath,
    hat: &GridPath,
    spec: &DiffusionSpec,
    v: &HermiteState,
    k: usize,
) -> Result<f64> {
    if f.dim() != 1 || spec.dim() != 1 {
        return Err(Error::Shape(
            "coefficient-space residual is one-dimensional".into(),
        ));
    }
    let order = f.order();
    if hat.dim() != f.len() || v.len() != f.len() {
        return Err(Error::Shape(
            "lifted path, f and V must share the truncation".into(),
        ));
    }
    hat.check_alive(k)?;
    let dt = hat.dt();
    let mut integral = 0.0;
    let mut g_prev = 0.0;
    for s in 0..=k {
        let xs = x.point(s);
        let y = hermite_basis(order, xs);
        let yhat = hat.point(s);
        // Ŷ_s = e^{K_s} Y_s
        let w = dot(yhat, &y) / dot(&y, &y);
        let a = spec.diffusion_matrix(xs)[0];
        let b = spec.drift_at(xs)[0];
        let l_delta = adjoint_l_delta_coeffs(xs[0], a, b, order);
        let g = w * dot(f.coeffs(), l_delta.coeffs()) + dot(v.coeffs(), &y) * dot(f.coeffs(), yhat);
        if s > 0 {
            integral += 0.5 * dt * (g_prev + g);
        }
        g_prev = g;
    }
    Ok(dot(f.coeffs(), hat.point(k)) - dot(f.coeffs(), hat.point(0)) - integral)
}

/// [`lifted_weak_residual`] averaged over a stored batch: each state path is
/// lifted, transformed with `c(s, Y) = ⟨V, Y_s⟩`, and tested at `t`.
pub fn spde_weak_residual_batch(
    f: &HermiteState,
    batch: &PathBatch,
    spec: &DiffusionSpec,
    v: &HermiteState,
    t: f64,
) -> Result<(f64, f64)> {
    let k = batch.cfg.step_index(t)?;
    let mut m = Moments::new();
    for x in &batch.paths {
        if !x.is_alive_at(k) {
            continue;
        }
        let prefix = x.restrict_index(k);
        let hat = transform_lifted(&crate::diffusion::lift_path(&prefix, f.order())?, v)?;
        m.push(lifted_weak_residual(f, &prefix, &hat, spec, v, k)?);
    }
    Ok((m.mean(), m.std_error()))
}

/// Discretization of the backward equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdeParams {
    pub nx: usize,
    pub dt: f64,
    /// Half-width of the domain around `x0`; defaults to `8 √t max σ̄`.
    pub half_width: Option<f64>,
}

impl Default for PdeParams {
    fn default() -> Self {
        PdeParams {
            nx: 2001,
            dt: 1e-3,
            half_width: None,
        }
    }
}

/// Finite-difference solution `u(t_n, x_i)` on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdeGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl PdeGrid {
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn final_values(&self) -> &[f64] {
        self.values.last().expect("at least the initial slice")
    }

    /// Cubic interpolation of the final slice.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        if !(x >= self.x_min && x <= self.x_max) {
            return Err(Error::Range(format!(
                "{x} outside [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        let u = self.final_values();
        let s = (x - self.x_min) / self.dx();
        let i = (s.floor() as usize).clamp(1, self.nx - 3) - 1;
        let nodes: Vec<f64> = (i..i + 4).map(|j| j as f64).collect();
        let mut out = 0.0;
        for a in 0..4 {
            let mut l = 1.0;
            for b in 0..4 {
                if a != b {
                    l *= (s - nodes[b]) / (nodes[a] - nodes[b]);
                }
            }
            out += l * u[i + a];
        }
        Ok(out)
    }
}

/// Crank–Nicolson for `∂_t u = ½σ̄²u'' + b̄u' + V̄u`, `u(0) = f`, with zero
/// Dirichlet data. The potential enters through symmetric half-steps
/// `u ← e^{V̄ dt/2} u` around each diffusion step.
pub fn pde_reference(
    vbar: &ScalarField,
    spec: &DiffusionSpec,
    f: &dyn TestFunction,
    t: f64,
    params: &PdeParams,
) -> Result<PdeGrid> {
    if spec.dim() != 1 || spec.noise_dim() != 1 {
        return Err(Error::Shape("the PDE oracle is one-dimensional".into()));
    }
    if params.nx < 3 {
        return Err(Error::Invalid("nx must be at least 3".into()));
    }
    let x0 = spec.x0()[0];
    let half = match params.half_width {
        Some(h) => h,
        None => {
            let probe = 8.0 * t.sqrt() * spec.sigma_at(&[x0])[0].abs().max(1e-3);
            let smax = (0..=200)
                .map(|i| spec.sigma_at(&[x0 - probe + 2.0 * probe * i as f64 / 200.0])[0].abs())
                .fold(0.0, f64::max);
            (8.0 * t.sqrt() * smax).max(1.0)
        }
    };
    let (x_min, x_max) = (x0 - half, x0 + half);
    let dx = (x_max - x_min) / (params.nx - 1) as f64;
    let init: Vec<f64> = (0..params.nx)
        .map(|i| f.value(&[x_min + i as f64 * dx]))
        .collect();
    pde_evolve(vbar, spec, x_min, x_max, init, t, params.dt)
}

/// Advances grid values `init` on `[x_min, x_max]` by time `t`.
pub fn pde_evolve(
    vbar: &ScalarField,
    spec: &DiffusionSpec,
    x_min: f64,
    x_max: f64,
    init: Vec<f64>,
    t: f64,
    dt: f64,
) -> Result<PdeGrid> {
    let nx = init.len();
    if nx < 3 || !(x_max > x_min) {
        return Err(Error::Invalid(
            "PDE grid needs nx ≥ 3 and x_max > x_min".into(),
        ));
    }
    if !(dt > 0.0) || !(t >= 0.0) {
        return Err(Error::Invalid(
            "PDE time step must be positive and t non-negative".into(),
        ));
    }
    let steps = (t / dt).round() as usize;
    if ((steps as f64) * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::Range(format!(
            "t = {t} is not a multiple of dt = {dt}"
        )));
    }
    let dx = (x_max - x_min) / (nx - 1) as f64;
    let xs: Vec<f64> = (0..nx).map(|i| x_min + i as f64 * dx).collect();
    let half_v: Vec<f64> = xs.iter().map(|&x| (0.5 * dt * vbar(&[x])).exp()).collect();
    // interior operator rows: lower, diag, upper
    let mut lo = vec![0.0; nx];
    let mut di = vec![0.0; nx];
    let mut up = vec![0.0; nx];
    for i in 1..nx - 1 {
        let s = spec.sigma_at(&[xs[i]])[0];
        let b = spec.drift_at(&[xs[i]])[0];
        let a = 0.5 * s * s / (dx * dx);
        let c = b / (2.0 * dx);
        lo[i] = a - c;
        di[i] = -2.0 * a;
        up[i] = a + c;
    }
    let h = 0.5 * dt;
    let mut u = init;
    u[0] = 0.0;
    u[nx - 1] = 0.0;
    let mut slices = vec![u.clone()];
    let mut times = vec![0.0];
    let mut rhs = vec![0.0; nx];
    let mut cp = vec![0.0; nx];
    let mut dp = vec![0.0; nx];
    for n in 0..steps {
        u.iter_mut().zip(&half_v).for_each(|(v, e)| *v *= e);
        rhs[0] = 0.0;
        rhs[nx - 1] = 0.0;
        for i in 1..nx - 1 {
            rhs[i] = u[i] + h * (lo[i] * u[i - 1] + di[i] * u[i] + up[i] * u[i + 1]);
        }
        // Thomas algorithm; boundary rows are identity
        cp[0] = 0.0;
        dp[0] = 0.0;
        for i in 1..nx - 1 {
            let a = -h * lo[i];
            let b = 1.0 - h * di[i];
            let c = -h * up[i];
            let m = b - a * cp[i - 1];
            cp[i] = c / m;
            dp[i] = (rhs[i] - a * dp[i - 1]) / m;
        }
        u[nx - 1] = 0.0;
        for i in (1..nx - 1).rev() {
            u[i] = dp[i] - cp[i] * u[i + 1];
        }
        u[0] = 0.0;
        u.iter_mut().zip(&half_v).for_each(|(v, e)| *v *= e);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!(
                "non-finite PDE solution at step {}",
                n + 1
            )));
        }
        slices.push(u.clone());
        times.push((n + 1) as f64 * dt);
    }
    Ok(PdeGrid {
        x_min,
        x_max,
        nx,
        dt,
        times,
        values: slices,
    })
}

/// Tolerances for [`fk_duality_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityTolerances {
    /// Added to `3 SE` for the scalar-versus-dual gap (truncation of `f`).
    pub truncation: f64,
    /// Added to `3 SE` for gaps against the PDE value (scheme and time-step bias).
    pub pde: f64,
}

impl Default for DualityTolerances {
    fn default() -> Self {
        DualityTolerances {
            truncation: 1e-5,
            pde: 2e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    pub t: f64,
    pub order: usize,
    pub scalar: SemigroupEstimate,
    /// `⟨project(f), P_t^{V*}⟩`.
    pub dual: f64,
    pub dual_std_error: f64,
    /// Standard error of the per-path difference of the two estimators.
    pub difference_std_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pde: Option<f64>,
    pub gaps: Vec<Gap>,
    pub pass: bool,
}

/// `P_t^V f(x)`, `⟨f, P_t^{V*}(x)⟩` and (for scalar diffusions) the PDE value,
/// with pairwise gaps. The two Monte Carlo estimators share their paths.
#[allow(clippy::too_many_arguments)]
pub fn fk_duality_check(
    f: &dyn TestFunction,
    vbar: &ScalarField,
    spec: &DiffusionSpec,
    cfg: &McConfig,
    t: f64,
    order: usize,
    pde: Option<&PdeParams>,
    tol: DualityTolerances,
) -> Result<DualityReport> {
    cfg.validate()?;
    let k = cfg.step_index(t)?;
    let d = spec.dim();
    let fc = project(&|x: &[f64]| f.value(x), order, d)?;
    let len = fc.len();
    let acc = run_paths(
        spec,
        cfg,
        k,
        vbar,
        || {
            (
                Moments::new(),
                Moments::new(),
                Moments::new(),
                VecMoments::new(len),
            )
        },
        |(scalar, dual, diff, state), buf, e| {
            let x = buf.state(k);
            let w = e.exp();
            let delta = hermite_basis(order, x);
            let a = w * f.value(x);
            let b = w * dot(fc.coeffs(), &delta);
            scalar.push(a);
            dual.push(b);
            diff.push(a - b);
            state.push_scaled(w, &delta);
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1.merge(&b.1);
            a.2.merge(&b.2);
            a.3.merge(&b.3);
        },
    );
    let alive_fraction = finish(&acc, cfg, t)?;
    let (scalar_m, dual_m, diff_m, state_m) = &acc.inner;
    let star = HermiteState::new(state_m.mean().to_vec(), order, d, 0.0)?;
    let dual = pair(&fc, &star)?;
    let scalar = SemigroupEstimate {
        value: scalar_m.mean(),
        std_error: scalar_m.std_error(),
        n_paths: cfg.n_paths,
        alive_fraction,
        warning: alive_warning(alive_fraction),
    };
    let mut gaps = vec![Gap::new(
        "scalar_vs_dual",
        (scalar.value - dual).abs(),
        3.0 * diff_m.std_error() + tol.truncation,
    )];
    let pde_value = match pde {
        Some(params) if d == 1 => {
            let grid = pde_reference(vbar, spec, f, t, params)?;
            let v = grid.value_at(spec.x0()[0])?;
            gaps.push(Gap::new(
                "scalar_vs_pde",
                (scalar.value - v).abs(),
                3.0 * scalar.std_error + tol.pde,
            ));
            gaps.push(Gap::new(
                "dual_vs_pde",
                (dual - v).abs(),
                3.0 * dual_m.std_error() + tol.pde,
            ));
            Some(v)
        }
        _ => None,
    };
    let pass = gaps.iter().all(|g| g.pass);
    Ok(DualityReport {
        t,
        order,
        scalar,
        dual,
        dual_std_error: dual_m.std_error(),
        difference_std_error: diff_m.std_error(),
        pde: pde_value,
        gaps,
        pass,
    })
}

/// Extra allowance on comparator gaps for rounding in the Kac sums.
pub const IDENTITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub t: f64,
    /// `P_t^{V*}(x)`.
    pub lhs: HermiteState,
    /// `e^{t V̄(x)} E δ_{X_t}`.
    pub rhs: HermiteState,
    /// Largest `|lhs_k − rhs_k|`.
    pub coefficient_gap: f64,
    /// `max_k |lhs_k − rhs_k| / (3 SE_k + slack)`; at most 1 when every
    /// coefficient is within tolerance.
    pub worst_gap_ratio: f64,
    /// `|⟨f, lhs⟩ − ⟨f, rhs⟩|`.
    pub scalar_gap: f64,
    pub scalar_std_error: f64,
    pub alive_fraction: f64,
    /// `Some` only when the identity is asserted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

/// Compares `P_t^{V*}(x)` with `e^{t V̄(x)} P_t^*(x)` on shared paths. The
/// verdict is produced only when `assert_identity` is set.
#[allow(clippy::too_many_arguments)]
pub fn section5_identity_comparator(
    f: &dyn TestFunction,
    vbar: &ScalarField,
    spec: &DiffusionSpec,
    cfg: &McConfig,
    t: f64,
    order: usize,
    assert_identity: bool,
) -> Result<IdentityReport> {
    cfg.validate()?;
    let k = cfg.step_index(t)?;
    let d = spec.dim();
    let fc = project(&|x: &[f64]| f.value(x), order, d)?;
    let len = fc.len();
    let frozen_weight = check_weight(t * vbar(spec.x0()), t)?;
    let acc = run_paths(
        spec,
        cfg,
        k,
        vbar,
        || {
            (
                VecMoments::new(len),
                VecMoments::new(len),
                VecMoments::new(len),
                Moments::new(),
            )
        },
        |(lhs, rhs, diff, scalar), buf, e| {
            let delta = hermite_basis(order, buf.state(k));
            let w = e.exp();
            lhs.push_scaled(w, &delta);
            rhs.push_scaled(frozen_weight, &delta);
            diff.push_scaled(w - frozen_weight, &delta);
            scalar.push((w - frozen_weight) * dot(fc.coeffs(), &delta));
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1.merge(&b.1);
            a.2.merge(&b.2);
            a.3.merge(&b.3);
        },
    );
    let alive_fraction = finish(&acc, cfg, t)?;
    let (lhs_m, rhs_m, diff_m, scalar_m) = &acc.inner;
    let lhs = HermiteState::new(lhs_m.mean().to_vec(), order, d, 0.0)?;
    let rhs = HermiteState::new(rhs_m.mean().to_vec(), order, d, 0.0)?;
    let se = diff_m.std_errors();
    let mut coefficient_gap: f64 = 0.0;
    let mut worst_gap_ratio: f64 = 0.0;
    for i in 0..len {
        let g = (lhs.coeffs()[i] - rhs.coeffs()[i]).abs();
        coefficient_gap = coefficient_gap.max(g);
        worst_gap_ratio = worst_gap_ratio.max(g / (3.0 * se[i] + IDENTITY_SLACK));
    }
    let scalar_gap = (pair(&fc, &lhs)? - pair(&fc, &rhs)?).abs();
    let scalar_std_error = scalar_m.std_error();
    let pass = assert_identity
        .then_some(worst_gap_ratio <= 1.0 && scalar_gap <= 3.0 * scalar_std_error + IDENTITY_SLACK);
    Ok(IdentityReport {
        t,
        lhs,
        rhs,
        coefficient_gap,
        worst_gap_ratio,
        scalar_gap,
        scalar_std_error,
        alive_fraction,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslationEstimate {
    /// `E τ_{Z_t} u0`.
    pub mean: StateEstimate,
    pub rejected_fraction: f64,
    /// `exp(∫_0^t c(s, x, EY) ds)` when a potential was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    /// `E(Y_t) exp(∫_0^t c(s, x, EY) ds)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wrapped: Option<HermiteState>,
}

/// `u(t, x) = E τ_{Z_t} u0` over the shifts `Z_t = σ B_t + b t`.
///
/// With a potential `c`, the mean is multiplied by `exp(∫_0^t c(s, EY) ds)`.
/// A path-reading `c` is integrated along the estimated mean path `s ↦ E Y_s`
/// on the whole grid (a second set of translations per grid point).
pub fn translation_semigroup_u(
    u0: &HermiteState,
    shift: &GaussianShift,
    cfg: &McConfig,
    t: f64,
    potential: Option<&PotentialSpec>,
) -> Result<TranslationEstimate> {
    cfg.validate()?;
    if shift.dim() != u0.dim() {
        return Err(Error::Shape("shift and state dimensions differ".into()));
    }
    let k = cfg.step_index(t)?;
    let d = u0.dim();
    let len = u0.len();
    let projector = Projector::new(u0.order(), d, translation_nodes(u0.order()))?;
    let window = translation_window(u0.order());
    let need_path = potential.is_some_and(|c| c.reads_path());
    let slots = if need_path { k + 1 } else { 1 };

    let acc = reduce_indices(
        cfg.n_paths,
        || {
            (
                Vec::new(),
                vec![VecMoments::new(len); slots],
                0u64,
                None::<Error>,
            )
        },
        |(buf, moments, rejected, err), i| {
            shift.path_into(cfg, i, k, buf);
            let zs = |s: usize| &buf[s * d..(s + 1) * d];
            let outside = if need_path {
                (0..=k).any(|s| euclidean_norm(zs(s)) > window)
            } else {
                euclidean_norm(zs(k)) > window
            };
            if outside {
                *rejected += 1;
                return;
            }
            let range = if need_path { 0..=k } else { k..=k };
            for (slot, s) in range.enumerate() {
                match projector.translate(u0, zs(s)) {
                    Ok(v) => moments[slot].push(v.coeffs()),
                    Err(e) => {
                        err.get_or_insert(e);
                    }
                }
            }
        },
        |a, b| {
            for (x, y) in a.1.iter_mut().zip(&b.1) {
                x.merge(y);
            }
            a.2 += b.2;
            if a.3.is_none() {
                a.3 = b.3;
            }
        },
    );
    if let Some(e) = acc.3 {
        return Err(e);
    }
    let rejected_fraction = acc.2 as f64 / cfg.n_paths as f64;
    if rejected_fraction > MAX_REJECTED_FRACTION {
        return Err(Error::Window(format!(
            "{:.4} of the shifts left the window |z| ≤ {window:.4} (limit {MAX_REJECTED_FRACTION})",
            rejected_fraction
        )));
    }
    let last = acc.1.last().expect("at least one slot");
    let mean_state = HermiteState::new(last.mean().to_vec(), u0.order(), d, u0.regularity())?;
    let mean = StateEstimate {
        value: mean_state.clone(),
        std_error: last.std_errors(),
        n_paths: cfg.n_paths,
        alive_fraction: 1.0 - rejected_fraction,
        warning: None,
    };
    let (factor, wrapped) = match potential {
        None => (None, None),
        Some(c) => {
            let data: Vec<f64> = if need_path {
                acc.1
                    .iter()
                    .flat_map(|m| m.mean().iter().copied())
                    .collect()
            } else {
                mean_state.coeffs().repeat(k + 1)
            };
            let mean_path = GridPath::new(0.0, cfg.dt, len, data)?;
            let exponent = kac_cumulative(c, &mean_path)?.last();
            let factor = check_weight(exponent, t)?;
            (Some(factor), Some(mean_state.scaled(factor)))
        }
    };
    Ok(TranslationEstimate {
        mean,
        rejected_fraction,
        factor,
        wrapped,
    })
}

/// Drift and diffusion of the translation flow `∂_t u = ½ σ² u'' − b u'`
/// for the weak-form check of [`hat_u_transform`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlowCheck {
    pub sigma: f64,
    pub drift: f64,
    pub test: HermiteState,
}

/// `û(t) = u(t) exp(∫_0^t c(s, u) ds)` along a coefficient path, plus, when
/// `check` is given, the largest weak residual
/// `|⟨f, û_t⟩ − ⟨f, û_0⟩ − ∫_0^t (½σ²⟨f'', û⟩ + b⟨f', û⟩ + c(s, u)⟨f, û⟩) ds|`
/// over the grid.
pub fn hat_u_transform(
    u_path: &GridPath,
    c: &PotentialSpec,
    check: Option<&FlowCheck>,
) -> Result<(GridPath, Option<f64>)> {
    let hat = forward_map(u_path, c)?;
    let residual = match check {
        None => None,
        Some(fc) => {
            if fc.test.len() != u_path.dim() {
                return Err(Error::Shape(
                    "test function and path truncation differ".into(),
                ));
            }
            let f1 = derivative(&fc.test)?;
            let f2 = derivative(&f1)?;
            let dt = u_path.dt();
            let mut integral = 0.0;
            let mut g_prev = 0.0;
            let mut worst: f64 = 0.0;
            let base = dot(fc.test.coeffs(), hat.point(0));
            for i in 0..hat.len() {
                let h = hat.point(i);
                let ci = c.eval(u_path.time(i), &u_path.prefix(i));
                let g = 0.5 * fc.sigma * fc.sigma * dot(f2.coeffs(), h)
                    + fc.drift * dot(f1.coeffs(), h)
                    + ci * dot(fc.test.coeffs(), h);
                if i > 0 {
                    integral += 0.5 * dt * (g_prev + g);
                }
                g_prev = g;
                worst = worst.max((dot(fc.test.coeffs(), h) - base - integral).abs());
            }
            Some(worst)
        }
    };
    Ok((hat, residual))
}

/// Potential `c(s, y) = ⟨V, y_s⟩` used by [`transform_lifted`], for callers
/// that want the same transform through the general solver.
pub fn lifted_potential(v: &HermiteState) -> PotentialSpec {
    make_linear_functional(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{lift_path, simulate_sde};
    use crate::functions::{field, Constant, Gaussian, SmoothPlateau};
    use crate::hermite::delta_coeffs;
    use crate::potential::make_constant;
    use crate::transform::solve_hat;

    fn cameron_martin() -> f64 {
        1.0 / 1f64.cosh().sqrt()
    }

    #[test]
    fn trivial_semigroups() {
        let bm = DiffusionSpec::brownian(vec![0.0]).unwrap();
        let cfg = McConfig::new(3000, 0.01, 1.0, 1).unwrap();
        let e = pt_v_f(&Constant(1.0), &field(|_| 0.0), &bm, &cfg, 1.0).unwrap();
        assert_eq!((e.value, e.std_error), (1.0, 0.0));
        let e = pt_v_f(&Constant(1.0), &field(|_| 0.5), &bm, &cfg, 1.0).unwrap();
        assert!((e.value - 0.5f64.exp()).abs() < 1e-14);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.alive_fraction, 1.0);

        let frozen = DiffusionSpec::frozen(vec![0.4]).unwrap();
        let s = pt_v_star(&field(|_| 0.0), &frozen, &cfg, 0.5, 16).unwrap();
        assert_eq!(s.value.coeffs(), delta_coeffs(&[0.4], 16).coeffs());
    }

    #[test]
    fn constant_potential_factorizes() {
        let bm = DiffusionSpec::brownian(vec![0.2]).unwrap();
        let cfg = McConfig::new(2000, 0.01, 1.0, 5).unwrap();
        let g = Gaussian::new(1.0, vec![0.0], 0.7);
        let a = pt_v_f(&g, &field(|_| 0.0), &bm, &cfg, 1.0).unwrap();
        let b = pt_v_f(&g, &field(|_| -0.8), &bm, &cfg, 1.0).unwrap();
        assert!((b.value - (-0.8f64).exp() * a.value).abs() <= 1e-12 * a.value.abs());
        let sa = pt_v_star(&field(|_| 0.0), &bm, &cfg, 1.0, 12).unwrap();
        let sb = pt_v_star(&field(|_| -0.8), &bm, &cfg, 1.0, 12).unwrap();
        for (x, y) in sa.value.coeffs().iter().zip(sb.value.coeffs()) {
            assert!((y - (-0.8f64).exp() * x).abs() <= 1e-12 * x.abs().max(1e-3));
        }
    }

    #[test]
    fn cameron_martin_anchor_small_batch() {
        let bm = DiffusionSpec::brownian(vec![0.0]).unwrap();
        let cfg = McConfig::new(20_000, 1e-2, 1.0, 17).unwrap();
        let e = pt_v_f(
            &Constant(1.0),
            &field(|x| -0.5 * x[0] * x[0]),
            &bm,
            &cfg,
            1.0,
        )
        .unwrap();
        assert!(
            (e.value - cameron_martin()).abs() <= 3.0 * e.std_error + 2e-3,
            "{e:?}"
        );
    }

    #[test]
    fn pde_heat_and_factorization() {
        let bm = DiffusionSpec::brownian(vec![0.0]).unwrap();
        let f = Gaussian::normal_density(0.0, 1.0);
        let params = PdeParams {
            nx: 4001,
            dt: 1e-3,
            half_width: None,
        };
        let heat = pde_reference(&field(|_| 0.0), &bm, &f, 0.5, &params).unwrap();
        let exact = Gaussian::normal_density(0.0, 1.5);
        let mut worst: f64 = 0.0;
        for i in 0..heat.nx {
            let x = heat.x(i);
            if x.abs() <= 4.0 {
                worst = worst.max((heat.final_values()[i] - exact.value(&[x])).abs());
            }
        }
        assert!(worst < 1e-6, "{worst}");

        let lam = 0.7;
        let scaled = pde_reference(&field(move |_| lam), &bm, &f, 0.5, &params).unwrap();
        for (a, b) in heat.final_values().iter().zip(scaled.final_values()) {
            assert!((b - (0.5 * lam).exp() * a).abs() <= 1e-8);
        }
    }

    #[test]
    fn pde_cameron_martin_and_semigroup() {
        let bm = DiffusionSpec::brownian(vec![0.0]).unwrap();
        let plateau = SmoothPlateau {
            level: 1.0,
            inner: 5.0,
            outer: 7.5,
        };
        let params = PdeParams {
            nx: 1601,
            dt: 1e-3,
            half_width: None,
        };
        let v = field(|x| -0.5 * x[0] * x[0]);
        let grid = pde_reference(&v, &bm, &plateau, 1.0, &params).unwrap();
        assert!((grid.value_at(0.0).unwrap() - cameron_martin()).abs() < 1e-3);

        let half = pde_evolve(
            &v,
            &bm,
            grid.x_min,
            grid.x_max,
            grid.values[0].clone(),
            0.5,
            1e-3,
        )
        .unwrap();
        let twice = pde_evolve(
            &v,
            &bm,
            grid.x_min,
            grid.x_max,
            half.final_values().to_vec(),
            0.5,
            1e-3,
        )
        .unwrap();
        for (a, b) in twice.final_values().iter().zip(grid.final_values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn duality_on_shared_paths() {
        let ou = DiffusionSpec::ornstein_uhlenbeck(1.0, 0.0, 1.0, vec![0.3]).unwrap();
        let cfg = McConfig::new(20_000, 1e-2, 1.0, 23).unwrap();
        let g = Gaussian::new(1.0, vec![0.1], 0.9);
        let params = PdeParams {
            nx: 1201,
            dt: 1e-3,
            half_width: None,
        };
        let tol = DualityTolerances {
            truncation: 1e-5,
            pde: 0.02,
        };
        let r = fk_duality_check(
            &g,
            &field(|x| -0.5 * x[0] * x[0]),
            &ou,
            &cfg,
            1.0,
            64,
            Some(&params),
            tol,
        )
        .unwrap();
        assert!(r.pass, "{r:#?}");
        assert!(r.gaps[0].gap < 1e-5);
    }

    #[test]
    fn weak_residual_deterministic_cases() {
        let frozen = DiffusionSpec::frozen(vec![0.2]).unwrap();
        let g = Gaussian::new(1.0, vec![0.0], 1.0);
        let cfg = McConfig::new(1, 1e-3, 1.0, 0).unwrap();
        let r = spde_weak_residual(&g, &field(|_| 0.0), &frozen, &cfg, &[0.5, 1.0], 64).unwrap();
        assert!(r.iter().all(|w| w.mean == 0.0 && w.strong_mean == 0.0));

        let cfg = McConfig::new(1, 1e-5, 1.0, 0).unwrap();
        let r = spde_weak_residual(&g, &field(|_| 1.0), &frozen, &cfg, &[1.0], 64).unwrap();
        assert!(r[0].strong_mean.abs() < 1e-10, "{:?}", r[0]);
    }

    #[test]
    fn weak_residual_brownian_small_batch() {
        let bm = DiffusionSpec::brownian(vec![0.0]).unwrap();
        let g = Gaussian::new(1.0, vec![0.3], 0.8);
        let cfg = McConfig::new(20_000, 1e-2, 1.0, 4).unwrap();
        let r = spde_weak_residual(
            &g,
            &field(|x| -0.5 * x[0] * x[0]),
            &bm,
            &cfg,
            &[0.5, 1.0],
            64,
        )
        .unwrap();
        for w in &r {
            assert!(w.pass, "{w:?}");
            assert!(w.strong_std_error < w.std_error);
        }
    }

    #[test]
    fn lifted_residual_matches_scalar_side() {
        let bm = DiffusionSpec::brownian(vec![0.0]).unwrap();
        let g = Gaussian::new(1.0, vec![0.3], 0.8);
        let vbar = |x: f64| -0.5 * x * x * (-x * x / 8.0).exp();
        let order = 48;
        let fc = project(&|x: &[f64]| g.value(x), order, 1).unwrap();
        let vc = project(&|x: &[f64]| vbar(x[0]), order, 1).unwrap();
        let cfg = McConfig::new(8, 1e-2, 1.0, 9).unwrap();
        let batch = simulate_sde(&bm, &cfg).unwrap();
        let (mean, _) = spde_weak_residual_batch(&fc, &batch, &bm, &vc, 1.0).unwrap();
        let scalar =
            spde_weak_residual(&g, &field(move |x| vbar(x[0])), &bm, &cfg, &[1.0], order).unwrap();
        assert!(
            (mean - scalar[0].mean).abs() < 1e-4,
            "{mean} vs {}",
            scalar[0].mean
        );
    }

    #[test]
    fn transform_lifted_agrees_with_solver() {
        let bm = DiffusionSpec::brownian(vec![0.0]).unwrap();
        let cfg = McConfig::new(1, 1e-3, 1.0, 12).unwrap();
        let x = &simulate_sde(&bm, &cfg).unwrap().paths[0];
        let order = 32;
        let vbar = |x: f64| 0.3 * (-x * x).exp();
        let v = project(&|x: &[f64]| vbar(x[0]), order, 1).unwrap();
        let y = lift_path(x, order).unwrap();
        let hat = transform_lifted(&y, &v).unwrap();
        let via_solver = forward_map(&y, &lifted_potential(&v)).unwrap();
        assert!(hat.sup_distance(&via_solver).unwrap() < 1e-12);
        assert_eq!(
            transform_lifted(&y, &HermiteState::zeros(order, 1)).unwrap(),
            y
        );

        let g = Gaussian::new(1.0, vec![0.0], 1.0);
        let fc = project(&|x: &[f64]| g.value(x), order, 1).unwrap();
        let k = crate::diffusion::kac_along(x, &field(move |x| vbar(x[0])), 1.0).unwrap();
        let i = x.steps();
        let lhs = dot(fc.coeffs(), hat.point(i));
        assert!((lhs - k.last().exp() * g.value(x.point(i))).abs() < 1e-5);

        let (back, _) = solve_hat(&hat, &lifted_potential(&v), 1e-12).unwrap();
        assert!(back.sup_distance(&y).unwrap() < 1e-10);
    }

    #[test]
    fn identity_comparator_cases() {
        let bm = DiffusionSpec::brownian(vec![0.1]).unwrap();
        let cfg = McConfig::new(5000, 1e-2, 1.0, 3).unwrap();
        let g = Gaussian::new(1.0, vec![0.0], 1.0);
        let r =
            section5_identity_comparator(&g, &field(|_| 0.6), &bm, &cfg, 1.0, 32, true).unwrap();
        assert_eq!(r.pass, Some(true), "{r:?}");

        let frozen = DiffusionSpec::frozen(vec![0.4]).unwrap();
        let r =
            section5_identity_comparator(&g, &field(|x| x[0].sin()), &frozen, &cfg, 1.0, 32, true)
                .unwrap();
        assert_eq!(r.pass, Some(true), "{r:?}");

        let r =
            section5_identity_comparator(&g, &field(|x| x[0]), &bm, &cfg, 1.0, 32, false).unwrap();
        assert_eq!(r.pass, None);
        assert!(r.scalar_gap > 0.0);
    }

    #[test]
    fn translation_semigroup_examples() {
        let order = 64;
        let u0 = project(
            &|x: &[f64]| Gaussian::normal_density(0.0, 1.0).value(x),
            order,
            1,
        )
        .unwrap();
        let cfg = McConfig::new(2000, 1e-2, 0.5, 6).unwrap();
        let still = GaussianShift::new(vec![0.0], vec![0.0]).unwrap();
        let r = translation_semigroup_u(&u0, &still, &cfg, 0.5, None).unwrap();
        assert!(r.mean.value.max_abs_diff(&u0).unwrap() < 1e-10);

        let bm = GaussianShift::new(vec![1.0], vec![0.0]).unwrap();
        let target = project(
            &|x: &[f64]| Gaussian::normal_density(0.0, 1.5).value(x),
            order,
            1,
        )
        .unwrap();
        let c = make_constant(0.4);
        let r = translation_semigroup_u(&u0, &bm, &cfg, 0.5, Some(&c)).unwrap();
        for (i, (m, e)) in r
            .mean
            .value
            .coeffs()
            .iter()
            .zip(target.coeffs())
            .enumerate()
        {
            assert!((m - e).abs() <= 1e-4 + 3.0 * r.mean.std_error[i], "k = {i}");
        }
        let factor = r.factor.unwrap();
        assert!((factor / (0.2f64).exp() - 1.0).abs() < 1e-12);
        let wrapped = r.wrapped.unwrap();
        assert!(wrapped.max_abs_diff(&r.mean.value.scaled(factor)).unwrap() == 0.0);
    }

    #[test]
    fn translation_wrapper_along_mean_path() {
        let order = 24;
        let u0 = project(
            &|x: &[f64]| Gaussian::normal_density(0.0, 1.0).value(x),
            order,
            1,
        )
        .unwrap();
        let cfg = McConfig::new(300, 0.05, 0.5, 8).unwrap();
        let bm = GaussianShift::new(vec![1.0], vec![0.0]).unwrap();
        let v = delta_coeffs(&[0.0], order);
        let c = make_linear_functional(&v);
        let r = translation_semigroup_u(&u0, &bm, &cfg, 0.5, Some(&c)).unwrap();
        // E Y_s(0) ≈ N(0, 1 + s) density at 0
        let approx: f64 = (0..=10)
            .map(|i| {
                let s = 0.05 * i as f64;
                let w = if i == 0 || i == 10 { 0.5 } else { 1.0 };
                w * 0.05 / (2.0 * std::f64::consts::PI * (1.0 + s)).sqrt()
            })
            .sum();
        assert!((r.factor.unwrap().ln() - approx).abs() < 0.01);
    }

    #[test]
    fn hat_u_weak_residual_on_heat_flow() {
        let order = 64;
        let dt = 1e-3;
        let steps = 500;
        let mut data = Vec::new();
        for i in 0..=steps {
            let var = 1.0 + i as f64 * dt;
            data.extend(
                project(
                    &|x: &[f64]| Gaussian::normal_density(0.0, var).value(x),
                    order,
                    1,
                )
                .unwrap()
                .into_coeffs(),
            );
        }
        let u = GridPath::new(0.0, dt, order + 1, data).unwrap();
        let fc = project(
            &|x: &[f64]| Gaussian::new(1.0, vec![0.2], 0.9).value(x),
            order,
            1,
        )
        .unwrap();
        let check = FlowCheck {
            sigma: 1.0,
            drift: 0.0,
            test: fc,
        };
        let (unchanged, res) = hat_u_transform(&u, &make_constant(0.0), Some(&check)).unwrap();
        assert_eq!(unchanged, u);
        assert!(res.unwrap() < 1e-6, "{res:?}");

        let v = project(&|x: &[f64]| 0.5 * (-x[0] * x[0]).exp(), order, 1).unwrap();
        let c = make_linear_functional(&v);
        let (hat, res) = hat_u_transform(&u, &c, Some(&check)).unwrap();
        assert!(res.unwrap() < 1e-6, "{res:?}");
        assert!(
            hat.sup_distance(&transform_lifted(&u, &v).unwrap())
                .unwrap()
                < 1e-12
        );

        let (scaled, _) = hat_u_transform(&u, &make_constant(0.3), None).unwrap();
        let end = scaled.steps();
        for (a, b) in scaled.point(end).iter().zip(u.point(end)) {
            assert!((a - (0.3 * 0.5f64).exp() * b).abs() < 1e-14);
        }
    }
}
