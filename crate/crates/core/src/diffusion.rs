//! Euler–Maruyama simulation of `dX = σ̄(X)·dB + b̄(X) dt`, Kac functionals
//! along trajectories, the Gaussian process `Z_t = σ B_t + b t`, and the lift
//! `X ↦ δ_X` into Hermite coefficient paths.
//!
//! Path `i` of a batch draws its increments from stream `i` of the seeded
//! counter-based generator, one fixed block of words per step, so any path
//! can be regenerated on its own.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::ScalarField;
use crate::hermite::hermite_basis;
use crate::path_core::{euclidean_norm, GridPath};
use crate::rng::StreamRng;
use crate::transform::KacIntegral;

/// `x ↦ value`, written into a caller-provided buffer.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Coefficients, start point and exit radius of an Itô diffusion in `R^d`
/// driven by `r` independent Brownian motions.
#[derive(Clone)]
pub struct DiffusionSpec {
    label: String,
    dim: usize,
    noise_dim: usize,
    /// Row-major `d × r`.
    sigma: VectorField,
    drift: VectorField,
    x0: Vec<f64>,
    lifetime_radius: f64,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("x0", &self.x0)
            .field("lifetime_radius", &self.lifetime_radius)
            .finish()
    }
}

impl DiffusionSpec {
    pub fn new(
        label: impl Into<String>,
        noise_dim: usize,
        sigma: VectorField,
        drift: VectorField,
        x0: Vec<f64>,
    ) -> Result<Self> {
        if x0.is_empty() || noise_dim == 0 {
            return Err(Error::Shape(
                "state and noise dimensions must be positive".into(),
            ));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("start point {x0:?} is not finite")));
        }
        Ok(DiffusionSpec {
            label: label.into(),
            dim: x0.len(),
            noise_dim,
            sigma,
            drift,
            x0,
            lifetime_radius: f64::INFINITY,
        })
    }

    /// Constant coefficients: `σ̄ ≡ sigma` (`d × r`, row-major), `b̄ ≡ drift`.
    pub fn constant(sigma: Vec<f64>, drift: Vec<f64>, x0: Vec<f64>) -> Result<Self> {
        let d = x0.len();
        if d == 0 || drift.len() != d || sigma.is_empty() || !sigma.len().is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "constant coefficients need sigma of length d·r and drift of length d = {d}"
            )));
        }
        let r = sigma.len() / d;
        let label = format!("constant(sigma = {sigma:?}, drift = {drift:?})");
        let s = sigma.clone();
        let b = drift.clone();
        DiffusionSpec::new(
            label,
            r,
            Arc::new(move |_, out| out.copy_from_slice(&s)),
            Arc::new(move |_, out| out.copy_from_slice(&b)),
            x0,
        )
    }

    /// Standard Brownian motion in `R^d` started at `x0`.
    pub fn brownian(x0: Vec<f64>) -> Result<Self> {
        let d = x0.len();
        let mut sigma = vec![0.0; d * d];
        for i in 0..d {
            sigma[i * d + i] = 1.0;
        }
        let mut spec = DiffusionSpec::constant(sigma, vec![0.0; d], x0)?;
        spec.label = "brownian".into();
        Ok(spec)
    }

    /// `σ̄ = 0`, `b̄ = 0`: the constant path `x0`.
    pub fn frozen(x0: Vec<f64>) -> Result<Self> {
        let d = x0.len();
        let mut spec = DiffusionSpec::constant(vec![0.0; d], vec![0.0; d], x0)?;
        spec.label = "frozen".into();
        Ok(spec)
    }

    /// Coordinate-wise Ornstein–Uhlenbeck process
    /// `dX = −θ (X − μ) dt + s dB` with `r = d`.
    pub fn ornstein_uhlenbeck(theta: f64, mean: f64, noise: f64, x0: Vec<f64>) -> Result<Self> {
        let d = x0.len();
        let label = format!("ou(theta = {theta}, mean = {mean}, sigma = {noise})");
        DiffusionSpec::new(
            label,
            d,
            Arc::new(move |_, out| {
                out.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..d {
                    out[i * d + i] = noise;
                }
            }),
            Arc::new(move |x, out| {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -theta * (xi - mean);
                }
            }),
            x0,
        )
    }

    /// Scalar diffusion from closures `σ̄(x)` and `b̄(x)` on `R`.
    pub fn scalar<S, B>(label: impl Into<String>, sigma: S, drift: B, x0: f64) -> Result<Self>
    where
        S: Fn(f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        DiffusionSpec::new(
            label,
            1,
            Arc::new(move |x, out| out[0] = sigma(x[0])),
            Arc::new(move |x, out| out[0] = drift(x[0])),
            vec![x0],
        )
    }

    pub fn with_lifetime_radius(mut self, radius: f64) -> Self {
        self.lifetime_radius = radius;
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.dim {
            return Err(Error::Shape(format!(
                "start point must have dimension {}",
                self.dim
            )));
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn lifetime_radius(&self) -> f64 {
        self.lifetime_radius
    }

    pub fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        (self.sigma)(x, out)
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    /// `σ̄(x)` as a row-major `d × r` matrix.
    pub fn sigma_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.noise_dim];
        self.sigma_into(x, &mut out);
        out
    }

    pub fn drift_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, &mut out);
        out
    }

    /// `σ̄σ̄ᵀ(x)`, row-major `d × d`.
    pub fn diffusion_matrix(&self, x: &[f64]) -> Vec<f64> {
        let (d, r) = (self.dim, self.noise_dim);
        let s = self.sigma_at(x);
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = (0..r).map(|k| s[i * r + k] * s[j * r + k]).sum();
            }
        }
        a
    }
}

/// Monte Carlo sizing: `n_paths` paths on the grid `0, dt, …, T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
}

impl McConfig {
    pub fn new(n_paths: usize, dt: f64, horizon: f64, seed: u64) -> Result<Self> {
        let cfg = McConfig {
            n_paths,
            dt,
            horizon,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Invalid("n_paths must be at least 1".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Invalid(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::Invalid(format!(
                "T must be non-negative, got {}",
                self.horizon
            )));
        }
        self.step_index(self.horizon).map(|_| ())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Grid index of the on-grid time `t ∈ [0, T]`.
    pub fn step_index(&self, t: f64) -> Result<usize> {
        let x = t / self.dt;
        let k = x.round();
        if (x - k).abs() > 1e-7 * x.abs().max(1.0) || k < 0.0 {
            return Err(Error::Range(format!(
                "time {t} is not on the grid with dt = {}",
                self.dt
            )));
        }
        if t > self.horizon + 1e-9 * self.horizon.max(1.0) {
            return Err(Error::Range(format!(
                "time {t} exceeds T = {}",
                self.horizon
            )));
        }
        Ok(k as usize)
    }
}

/// Reusable buffers for generating one trajectory at a time.
#[derive(Debug, Clone, Default)]
pub struct PathBuffer {
    /// Row-major `(steps + 1) × d` states.
    pub states: Vec<f64>,
    /// Row-major `steps × r` Brownian increments `ΔB_k`.
    pub increments: Vec<f64>,
    /// First dead index, if the path left the ball or blew up.
    pub lifetime: Option<usize>,
    sigma: Vec<f64>,
    drift: Vec<f64>,
}

impl PathBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        let d = self.drift.len();
        &self.states[k * d..(k + 1) * d]
    }

    pub fn increment(&self, k: usize, r: usize) -> &[f64] {
        &self.increments[k * r..(k + 1) * r]
    }

    /// Whether the path is alive at index `k`.
    pub fn alive_at(&self, k: usize) -> bool {
        self.lifetime.is_none_or(|l| k < l)
    }
}

/// Generates path `index` of the batch up to step `steps` into `buf`.
///
/// The path is frozen at its exit point once `‖X‖` exceeds the lifetime
/// radius; rows from a non-finite blow-up on are NaN.
pub fn euler_path(
    spec: &DiffusionSpec,
    cfg: &McConfig,
    index: usize,
    steps: usize,
    buf: &mut PathBuffer,
) {
    let (d, r) = (spec.dim, spec.noise_dim);
    let dt = cfg.dt;
    let sdt = dt.sqrt();
    buf.states.clear();
    buf.increments.clear();
    buf.sigma.resize(d * r, 0.0);
    buf.drift.resize(d, 0.0);
    buf.lifetime = None;
    buf.states.extend_from_slice(&spec.x0);
    if euclidean_norm(&spec.x0) > spec.lifetime_radius {
        buf.lifetime = Some(0);
    }
    let mut rng = StreamRng::new(cfg.seed, index as u64);
    let mut noise = vec![0.0; r];
    for k in 0..steps {
        if buf.lifetime.is_some() {
            buf.states.extend_from_within(k * d..(k + 1) * d);
            buf.increments.extend(std::iter::repeat_n(0.0, r));
            continue;
        }
        rng.fill_step(&mut noise);
        noise.iter_mut().for_each(|z| *z *= sdt);
        let x = &buf.states[k * d..(k + 1) * d];
        (spec.sigma)(x, &mut buf.sigma);
        (spec.drift)(x, &mut buf.drift);
        for i in 0..d {
            let mut v = x[i] + buf.drift[i] * dt;
            for (j, z) in noise.iter().enumerate() {
                v += buf.sigma[i * r + j] * z;
            }
            buf.drift[i] = v;
        }
        buf.states.extend_from_slice(&buf.drift);
        buf.increments.extend_from_slice(&noise);
        let next = &buf.states[(k + 1) * d..(k + 2) * d];
        if next.iter().any(|v| !v.is_finite()) {
            buf.lifetime = Some(k + 1);
            let n = buf.states.len();
            buf.states[n - d..].iter_mut().for_each(|v| *v = f64::NAN);
            for _ in k + 1..steps {
                buf.states.extend(std::iter::repeat_n(f64::NAN, d));
                buf.increments.extend(std::iter::repeat_n(0.0, r));
            }
            break;
        }
        if euclidean_norm(next) > spec.lifetime_radius {
            buf.lifetime = Some(k + 1);
        }
    }
}

/// The Gaussian process `Z_t = σ B_t + b t` for frozen coefficients, with
/// exact increments on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianShift {
    dim: usize,
    noise_dim: usize,
    sigma: Vec<f64>,
    drift: Vec<f64>,
}

impl GaussianShift {
    /// `sigma` is row-major `d × r`, `drift` has length `d`.
    pub fn new(sigma: Vec<f64>, drift: Vec<f64>) -> Result<Self> {
        let d = drift.len();
        if d == 0 || sigma.is_empty() || !sigma.len().is_multiple_of(d) {
            return Err(Error::Shape(
                "sigma must be d × r with d = drift length".into(),
            ));
        }
        Ok(GaussianShift {
            dim: d,
            noise_dim: sigma.len() / d,
            sigma,
            drift,
        })
    }

    /// Coefficients of `spec` frozen at `x`.
    pub fn frozen_at(spec: &DiffusionSpec, x: &[f64]) -> Result<Self> {
        GaussianShift::new(spec.sigma_at(x), spec.drift_at(x))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    /// Path `index` up to step `steps`, row-major into `out`.
    pub fn path_into(&self, cfg: &McConfig, index: usize, steps: usize, out: &mut Vec<f64>) {
        let (d, r) = (self.dim, self.noise_dim);
        let sdt = cfg.dt.sqrt();
        let mut rng = StreamRng::new(cfg.seed, index as u64);
        let mut noise = vec![0.0; r];
        let mut b = vec![0.0; r];
        out.clear();
        out.extend(std::iter::repeat_n(0.0, d));
        for k in 1..=steps {
            rng.fill_step(&mut noise);
            for (bj, z) in b.iter_mut().zip(&noise) {
                *bj += z * sdt;
            }
            let t = k as f64 * cfg.dt;
            for i in 0..d {
                let mut v = self.drift[i] * t;
                for j in 0..r {
                    v += self.sigma[i * r + j] * b[j];
                }
                out.push(v);
            }
        }
    }
}

/// A simulated batch of paths sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub cfg: McConfig,
    pub paths: Vec<GridPath>,
}

impl PathBatch {
    pub fn dim(&self) -> usize {
        self.paths.first().map_or(0, GridPath::dim)
    }

    /// Header `n, steps, d` (u64), `dt` (f64), `seed` (u64), little-endian,
    /// then the row-major doubles of every path. Dead rows are NaN.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let steps = self.cfg.steps();
        let d = self.dim();
        w.write_all(&(self.paths.len() as u64).to_le_bytes())?;
        w.write_all(&(steps as u64).to_le_bytes())?;
        w.write_all(&(d as u64).to_le_bytes())?;
        w.write_all(&self.cfg.dt.to_le_bytes())?;
        w.write_all(&self.cfg.seed.to_le_bytes())?;
        let mut bytes = Vec::with_capacity((steps + 1) * d * 8);
        for p in &self.paths {
            bytes.clear();
            for i in 0..p.len() {
                let alive = p.is_alive_at(i);
                for &v in p.point(i) {
                    let v = if alive { v } else { f64::NAN };
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<PathBatch> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let d = u64::from_le_bytes(next(&mut r)?) as usize;
        let dt = f64::from_le_bytes(next(&mut r)?);
        let seed = u64::from_le_bytes(next(&mut r)?);
        if n == 0 || d == 0 {
            return Err(Error::Format("empty batch header".into()));
        }
        let cfg = McConfig::new(n, dt, steps as f64 * dt, seed)?;
        let mut paths = Vec::with_capacity(n);
        let mut raw = vec![0u8; (steps + 1) * d * 8];
        for _ in 0..n {
            r.read_exact(&mut raw)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            paths.push(GridPath::new(0.0, dt, d, data)?);
        }
        Ok(PathBatch { cfg, paths })
    }
}

fn buffer_to_path(cfg: &McConfig, d: usize, buf: &PathBuffer) -> Result<GridPath> {
    let path = GridPath::new(0.0, cfg.dt, d, buf.states.clone())?;
    Ok(match buf.lifetime {
        Some(l) if path.lifetime().is_none() => path.with_lifetime(l),
        _ => path,
    })
}

/// Euler–Maruyama batch on `[0, T]`.
pub fn simulate_sde(spec: &DiffusionSpec, cfg: &McConfig) -> Result<PathBatch> {
    cfg.validate()?;
    let steps = cfg.steps();
    let paths = (0..cfg.n_paths)
        .into_par_iter()
        .map_init(PathBuffer::new, |buf, i| {
            euler_path(spec, cfg, i, steps, buf);
            buffer_to_path(cfg, spec.dim, buf)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathBatch { cfg: *cfg, paths })
}

/// Batch of `Z_t = σ(x) B_t + b(x) t`.
pub fn gaussian_z(shift: &GaussianShift, cfg: &McConfig) -> Result<PathBatch> {
    cfg.validate()?;
    let steps = cfg.steps();
    let paths = (0..cfg.n_paths)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            shift.path_into(cfg, i, steps, buf);
            GridPath::new(0.0, cfg.dt, shift.dim, buf.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathBatch { cfg: *cfg, paths })
}

/// `sign · ∫_0^{t_i} V̄(X_s) ds` (trapezoid) at every grid index of a live path.
pub fn kac_along(x: &GridPath, vbar: &ScalarField, sign: f64) -> Result<KacIntegral> {
    kac_along_prefix(x, vbar, sign, x.steps())
}

/// As [`kac_along`] on indices `0..=k`; a path dead at or before `k` is a
/// lifetime error.
pub fn kac_along_prefix(
    x: &GridPath,
    vbar: &ScalarField,
    sign: f64,
    k: usize,
) -> Result<KacIntegral> {
    if k > x.steps() {
        return Err(Error::Range(format!(
            "index {k} beyond the path's {} steps",
            x.steps()
        )));
    }
    x.check_alive(k)?;
    let d = x.dim();
    Ok(KacIntegral {
        values: cumulative_trapezoid(&x.as_slice()[..(k + 1) * d], d, x.dt(), vbar, sign),
    })
}

pub(crate) fn cumulative_trapezoid(
    states: &[f64],
    d: usize,
    dt: f64,
    vbar: &ScalarField,
    sign: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(states.len() / d);
    let mut acc = 0.0;
    let mut prev = vbar(&states[..d]);
    out.push(0.0);
    for row in states.chunks_exact(d).skip(1) {
        let cur = vbar(row);
        acc += 0.5 * dt * (prev + cur);
        out.push(sign * acc);
        prev = cur;
    }
    out
}

/// `t ↦ δ_{X_t}` as truncated Hermite coefficients, `(N+1)^d` per point.
/// Dead rows of `x` stay dead at the same index.
pub fn lift_path(x: &GridPath, order: usize) -> Result<GridPath> {
    let d = x.dim();
    let m = (order + 1).pow(d as u32);
    let mut data = Vec::with_capacity(x.len() * m);
    for i in 0..x.len() {
        if x.is_alive_at(i) {
            data.extend(hermite_basis(order, x.point(i)));
        } else {
            data.extend(std::iter::repeat_n(f64::NAN, m));
        }
    }
    let lifted = GridPath::new(x.t0(), x.dt(), m, data)?;
    Ok(match x.lifetime() {
        Some(l) if lifted.lifetime() != Some(l) => lifted.with_lifetime(l),
        _ => lifted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{field, Gaussian, TestFunction};
    use crate::hermite::{delta_coeffs, pair, project};

    #[test]
    fn zero_coefficients_give_constant_paths() {
        let spec = DiffusionSpec::frozen(vec![0.3, -1.0]).unwrap();
        let cfg = McConfig::new(4, 0.1, 1.0, 7).unwrap();
        let b = simulate_sde(&spec, &cfg).unwrap();
        for p in &b.paths {
            assert_eq!(p.len(), 11);
            assert!(p.lifetime().is_none());
            for i in 0..p.len() {
                assert_eq!(p.point(i), &[0.3, -1.0]);
            }
        }
    }

    #[test]
    fn constant_drift_is_exact_line() {
        let spec = DiffusionSpec::constant(vec![0.0], vec![2.0], vec![1.0]).unwrap();
        let cfg = McConfig::new(2, 0.25, 1.0, 1).unwrap();
        let b = simulate_sde(&spec, &cfg).unwrap();
        for i in 0..=4 {
            assert_eq!(b.paths[1].point(i)[0], 1.0 + 2.0 * 0.25 * i as f64);
        }
    }

    #[test]
    fn brownian_moments() {
        let spec = DiffusionSpec::brownian(vec![0.0]).unwrap();
        let cfg = McConfig::new(100_000, 0.01, 1.0, 42).unwrap();
        let steps = cfg.steps();
        let m = crate::stats::reduce_indices(
            cfg.n_paths,
            || {
                (
                    PathBuffer::new(),
                    crate::stats::Moments::new(),
                    crate::stats::Moments::new(),
                )
            },
            |(buf, mean, sq), i| {
                euler_path(&spec, &cfg, i, steps, buf);
                let x = buf.state(steps)[0];
                mean.push(x);
                sq.push(x * x);
            },
            |a, b| {
                a.1.merge(&b.1);
                a.2.merge(&b.2);
            },
        );
        let n = cfg.n_paths as f64;
        assert!(m.1.mean().abs() <= 3.0 * (1.0 / n).sqrt());
        assert!((m.2.mean() - 1.0).abs() <= 3.0 * m.2.std_error());
    }

    #[test]
    fn ornstein_uhlenbeck_weak_order() {
        let x0 = 1.0;
        let spec = DiffusionSpec::ornstein_uhlenbeck(1.0, 0.0, 1.0, vec![x0]).unwrap();
        let bias = |dt: f64| {
            let cfg = McConfig::new(100_000, dt, 1.0, 11).unwrap();
            let steps = cfg.steps();
            let m = crate::stats::reduce_indices(
                cfg.n_paths,
                || (PathBuffer::new(), crate::stats::Moments::new()),
                |(buf, m), i| {
                    euler_path(&spec, &cfg, i, steps, buf);
                    m.push(buf.state(steps)[0]);
                },
                |a, b| a.1.merge(&b.1),
            );
            (m.1.mean() - x0 * (-1.0f64).exp(), m.1.std_error())
        };
        // Euler mean is x0 (1 − dt)^{T/dt}; the noise is centered
        let (b1, se1) = bias(0.1);
        let (b2, se2) = bias(0.05);
        let exact_bias = |dt: f64| x0 * ((1.0 - dt).powf(1.0 / dt) - (-1.0f64).exp());
        assert!((b1 - exact_bias(0.1)).abs() <= 3.0 * se1);
        assert!((b2 - exact_bias(0.05)).abs() <= 3.0 * se2);
        assert!(b1.abs() <= 3.0 * se1 + 0.25 * 0.1);
        assert!(b2.abs() <= 3.0 * se2 + 0.25 * 0.05);
        let r = exact_bias(0.1) / exact_bias(0.05);
        assert!((r - 2.0).abs() < 0.1, "first-order ratio {r}");
    }

    #[test]
    fn lifetime_is_monotone_in_radius() {
        let cfg = McConfig::new(200, 0.01, 1.0, 3).unwrap();
        let small = simulate_sde(
            &DiffusionSpec::brownian(vec![0.0])
                .unwrap()
                .with_lifetime_radius(0.8),
            &cfg,
        )
        .unwrap();
        let large = simulate_sde(
            &DiffusionSpec::brownian(vec![0.0])
                .unwrap()
                .with_lifetime_radius(1.2),
            &cfg,
        )
        .unwrap();
        let mut killed = 0;
        for (a, b) in small.paths.iter().zip(&large.paths) {
            let la = a.lifetime().unwrap_or(usize::MAX);
            let lb = b.lifetime().unwrap_or(usize::MAX);
            assert!(lb >= la);
            if let Some(l) = a.lifetime() {
                killed += 1;
                assert!(euclidean_norm(a.point(l)) > 0.8);
                assert_eq!(a.point(l), a.point(a.steps()));
            }
        }
        assert!(killed > 0);
    }

    #[test]
    fn batches_are_reproducible_across_thread_counts() {
        let spec = DiffusionSpec::ornstein_uhlenbeck(0.5, 0.2, 0.7, vec![0.1, -0.3]).unwrap();
        let cfg = McConfig::new(300, 0.01, 0.5, 99).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_sde(&spec, &cfg).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn binary_roundtrip_keeps_lifetimes() {
        let spec = DiffusionSpec::brownian(vec![0.0])
            .unwrap()
            .with_lifetime_radius(0.5);
        let cfg = McConfig::new(20, 0.05, 1.0, 5).unwrap();
        let b = simulate_sde(&spec, &cfg).unwrap();
        let mut bytes = Vec::new();
        b.write_binary(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 40 + 20 * 21 * 8);
        let back = PathBatch::read_binary(bytes.as_slice()).unwrap();
        for (p, q) in b.paths.iter().zip(&back.paths) {
            assert_eq!(p.lifetime(), q.lifetime());
            assert_eq!(p.alive_len(), q.alive_len());
            for i in 0..p.alive_len() {
                assert_eq!(p.point(i), q.point(i));
            }
        }
    }

    #[test]
    fn kac_along_examples() {
        let line = GridPath::scalar(0.0, 1e-3, 1000, |t| 0.5 + 2.0 * t).unwrap();
        let k = kac_along(&line, &field(|_| 1.5), 1.0).unwrap();
        assert!((k.last() - 1.5).abs() < 1e-12);
        let k = kac_along(&line, &field(|x| x[0]), 1.0).unwrap();
        assert!((k.last() - (0.5 + 1.0)).abs() < 1e-12);
        let neg = kac_along(&line, &field(|x| x[0]), -1.0).unwrap();
        assert_eq!(neg.last(), -k.last());
        let dead = line.clone().with_lifetime(500);
        assert!(kac_along_prefix(&dead, &field(|x| x[0]), 1.0, 499).is_ok());
        assert!(matches!(
            kac_along(&dead, &field(|x| x[0]), 1.0),
            Err(Error::Lifetime { .. })
        ));
    }

    #[test]
    fn gaussian_z_moments() {
        let line = GaussianShift::new(vec![0.0], vec![0.7]).unwrap();
        let cfg = McConfig::new(3, 0.1, 1.0, 2).unwrap();
        let b = gaussian_z(&line, &cfg).unwrap();
        assert!((b.paths[2].point(10)[0] - 0.7).abs() < 1e-15);

        let bm = GaussianShift::new(vec![1.0, 0.0, 0.0, 1.0], vec![0.3, 0.0]).unwrap();
        let cfg = McConfig::new(100_000, 0.05, 1.0, 8).unwrap();
        let steps = cfg.steps();
        let m = crate::stats::reduce_indices(
            cfg.n_paths,
            || (Vec::new(), crate::stats::VecMoments::new(4)),
            |(buf, m), i| {
                bm.path_into(&cfg, i, steps, buf);
                let z = &buf[steps * 2..];
                m.push(&[z[0], z[1], z[0] * z[0], z[1] * z[1]]);
            },
            |a, b| a.1.merge(&b.1),
        );
        let (mean, se) = (m.1.mean(), m.1.std_errors());
        assert!((mean[0] - 0.3).abs() <= 3.0 * se[0]);
        assert!(mean[1].abs() <= 3.0 * se[1]);
        assert!((mean[2] - 0.3 * 0.3 - 1.0).abs() <= 3.0 * se[2]);
        assert!((mean[3] - 1.0).abs() <= 3.0 * se[3]);
    }

    #[test]
    fn lift_examples() {
        let zero = GridPath::constant(0.0, 0.1, 5, &[0.0]).unwrap();
        let lifted = lift_path(&zero, 16).unwrap();
        assert_eq!(lifted.dim(), 17);
        assert!((lifted.point(3)[0] - std::f64::consts::PI.powf(-0.25)).abs() < 1e-15);

        let g = Gaussian::new(1.0, vec![0.1], 0.8);
        let fc = project(&|x: &[f64]| g.value(x), 64, 1).unwrap();
        let spec = DiffusionSpec::brownian(vec![0.0]).unwrap();
        let cfg = McConfig::new(1, 0.01, 1.0, 4).unwrap();
        let x = &simulate_sde(&spec, &cfg).unwrap().paths[0];
        let y = lift_path(x, 64).unwrap();
        for i in 0..x.len() {
            let state = crate::hermite::HermiteState::new(y.point(i).to_vec(), 64, 1, 0.0).unwrap();
            assert_eq!(state.coeffs(), delta_coeffs(x.point(i), 64).coeffs());
            if x.point(i)[0].abs() <= 2.0 {
                assert!((pair(&fc, &state).unwrap() - g.value(x.point(i))).abs() < 1e-6);
            }
        }
        let dead = x.clone().with_lifetime(40);
        assert_eq!(lift_path(&dead, 8).unwrap().lifetime(), Some(40));
    }
}
