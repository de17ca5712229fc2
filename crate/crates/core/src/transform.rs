//! The path transformation `R(y) = ŷ` with `ŷ(t) = y(t) exp(−∫_0^t c(s, ŷ) ds)`
//! and its closed-form inverse `S(ŷ)(t) = ŷ(t) exp(∫_0^t c(s, ŷ) ds)`.
//!
//! `R` is computed on an adaptive partition `T_0 < T_1 < … < T_m = T`. On each
//! subinterval the map
//!
//! ```text
//! S_n(z)(t) = y(t + T_n) A_n α_n(t, z) − y(T_n) A_n,   A_n = e^{−∫_0^{T_n} c(s, ŷ) ds}
//! ```
//!
//! is a contraction and is iterated to its fixed point, after which the
//! solution is extended by `ŷ(t) = ŷ_n(t − T_n) + ŷ(T_n)`.
//!
//! All Kac integrals use the trapezoid rule on the path's grid, so `S` applied
//! to the discrete `R(y)` returns `y` up to the fixed-point tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path_core::{euclidean_norm, GridPath, PathView};
use crate::potential::PotentialSpec;

/// Largest admissible `|∫ c|` before `exp` loses all precision.
pub const EXPONENT_LIMIT: f64 = 700.0;

/// The `δ` of the partition conditions.
pub const DELTA: f64 = 0.5;

/// Cap on the contraction constant of any subinterval.
pub const MAX_CONTRACTION: f64 = 0.5;

/// Cumulative trapezoid integral `∫_0^{t_i} c(s, y) ds`, one value per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct KacIntegral {
    pub values: Vec<f64>,
}

impl KacIntegral {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("non-empty")
    }
}

/// Record of one [`solve_hat`] run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Partition times `T_0 < … < T_m`.
    pub partition: Vec<f64>,
    pub picard_iters: Vec<usize>,
    /// `K_n` per subinterval.
    pub contraction_constants: Vec<f64>,
    /// `sup_t ‖ŷ(t) − y(t) e^{−∫_0^t c(s, ŷ) ds}‖` of the returned path.
    pub final_residual: f64,
    pub tol: f64,
    /// `α = 2‖y‖_T + 1`.
    pub alpha: f64,
    /// Largest `‖ŷ‖` on the grid.
    pub hat_sup_norm: f64,
    /// Uniform step length implied by the worst-case constants `e^{M(3α)T}`,
    /// for comparison with the adaptive partition.
    pub a_priori_step: f64,
}

/// Solver limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_subintervals: usize,
    pub max_iterations: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_subintervals: 1_000_000,
            max_iterations: 200,
        }
    }
}

fn check_alive(y: &GridPath) -> Result<()> {
    match y.lifetime() {
        Some(_) => y.check_alive(y.steps()),
        None => Ok(()),
    }
}

/// `c(t_i, y|[0, t_i])` for every grid index.
fn potential_values(c: &PotentialSpec, y: &GridPath) -> Vec<f64> {
    (0..y.len())
        .map(|i| c.eval(y.time(i), &y.prefix(i)))
        .collect()
}

fn cumulate(dt: f64, values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Cumulative Kac integral along the whole path.
pub fn kac_cumulative(c: &PotentialSpec, y: &GridPath) -> Result<KacIntegral> {
    c.check_dim(y.dim())?;
    check_alive(y)?;
    Ok(KacIntegral {
        values: cumulate(y.dt(), &potential_values(c, y)),
    })
}

/// `∫_{t_0}^t c(s, y|[0,s]) ds` for on-grid `t`.
pub fn kac_integral(c: &PotentialSpec, y: &GridPath, t: f64) -> Result<f64> {
    let k = y.grid_index(t)?;
    y.check_alive(k)?;
    c.check_dim(y.dim())?;
    let prefix = y.restrict_index(k);
    Ok(cumulate(y.dt(), &potential_values(c, &prefix))[k])
}

/// `S(y)(t) = y(t) exp(∫_0^t c(s, y) ds)`.
pub fn forward_map(y: &GridPath, c: &PotentialSpec) -> Result<GridPath> {
    let k = kac_cumulative(c, y)?;
    scale_by_exponent(y, &k.values, 1.0)
}

fn scale_by_exponent(y: &GridPath, exponent: &[f64], sign: f64) -> Result<GridPath> {
    let dim = y.dim();
    let mut data = Vec::with_capacity(y.len() * dim);
    for (i, &e) in exponent.iter().enumerate() {
        check_exponent(y.time(i), e)?;
        let f = (sign * e).exp();
        data.extend(y.point(i).iter().map(|v| v * f));
    }
    GridPath::new(y.t0(), y.dt(), dim, data)
}

fn check_exponent(time: f64, e: f64) -> Result<()> {
    if !(e.abs() <= EXPONENT_LIMIT) {
        return Err(Error::Overflow {
            time,
            exponent: e.abs(),
            limit: EXPONENT_LIMIT,
        });
    }
    Ok(())
}

/// `sup_t ‖ŷ(t) − y(t) e^{−∫_0^t c(s, ŷ) ds}‖`.
pub fn defining_residual(y: &GridPath, hat: &GridPath, c: &PotentialSpec) -> Result<f64> {
    let k = kac_cumulative(c, hat)?;
    let mut worst: f64 = 0.0;
    for (i, &e) in k.values.iter().enumerate() {
        let f = (-e).exp();
        let r = y
            .point(i)
            .iter()
            .zip(hat.point(i))
            .map(|(a, b)| (b - a * f).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Greedy partition state for the subinterval starting at `start`.
struct Extent {
    end: usize,
    contraction: f64,
}

/// Longest admissible subinterval starting at `start`, reading `y` only up to
/// the candidate end.
fn next_extent(
    y: &GridPath,
    c: &PotentialSpec,
    start: usize,
    a_n: f64,
    running_sup: f64,
) -> Result<Extent> {
    let e_delta = DELTA.exp();
    let x0 = y.point(start);
    let mut sup = running_sup;
    let mut osc: f64 = 0.0;
    let mut accepted: Option<Extent> = None;
    for end in start + 1..y.len() {
        sup = sup.max(euclidean_norm(y.point(end)));
        let d: f64 = y
            .point(end)
            .iter()
            .zip(x0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        osc = osc.max(d);
        let t_end = y.time(end);
        let horizon = t_end - y.t0();
        let alpha = 2.0 * sup + 1.0;
        let m3 = c.bound(3.0 * alpha, horizon);
        let beta = c.beta(horizon);
        let h = t_end - y.time(start);
        let contraction = 2.0 * alpha * beta * a_n * e_delta * h;
        let ok = osc * a_n * e_delta < alpha / 2.0
            && m3 * a_n * e_delta * h < 0.5
            && contraction < MAX_CONTRACTION
            && 2.0 * m3 * h < DELTA;
        if !ok {
            break;
        }
        accepted = Some(Extent { end, contraction });
    }
    accepted.ok_or_else(|| {
        Error::Partition(format!(
            "no admissible subinterval starts at t = {}: a single step of {} already violates the contraction conditions",
            y.time(start),
            y.dt()
        ))
    })
}

/// Step length from the worst-case constants, with `A_n` bounded by `e^{M(3α)T}`.
fn a_priori_step(c: &PotentialSpec, alpha: f64, horizon: f64) -> f64 {
    let m3 = c.bound(3.0 * alpha, horizon);
    let growth = (m3 * horizon + DELTA).exp();
    let mut h = f64::INFINITY;
    if m3 > 0.0 {
        h = h.min(0.5 / (m3 * growth)).min(DELTA / (2.0 * m3));
    }
    let beta = c.beta(horizon);
    if beta > 0.0 {
        h = h.min(1.0 / (2.0 * alpha * beta * growth));
    }
    h
}

/// Solves `ŷ(t) = y(t) exp(−∫_0^t c(s, ŷ) ds)` on the grid of `y`.
pub fn solve_hat(
    y: &GridPath,
    c: &PotentialSpec,
    tol: f64,
) -> Result<(GridPath, SolveDiagnostics)> {
    solve_hat_with(y, c, tol, SolveOptions::default())
}

pub fn solve_hat_with(
    y: &GridPath,
    c: &PotentialSpec,
    tol: f64,
    opts: SolveOptions,
) -> Result<(GridPath, SolveDiagnostics)> {
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    c.check_dim(y.dim())?;
    check_alive(y)?;
    let dim = y.dim();
    let (t0, dt) = (y.t0(), y.dt());
    let horizon = y.final_time() - t0;
    let alpha = 2.0 * y.sup_norm_index(y.steps())? + 1.0;

    let mut diag = SolveDiagnostics {
        partition: vec![t0],
        picard_iters: Vec::new(),
        contraction_constants: Vec::new(),
        final_residual: 0.0,
        tol,
        alpha,
        hat_sup_norm: euclidean_norm(y.point(0)),
        a_priori_step: a_priori_step(c, alpha, horizon),
    };

    // ŷ(0) = y(0) since the integral over a point vanishes
    let mut hat: Vec<f64> = Vec::with_capacity(y.len() * dim);
    hat.extend_from_slice(y.point(0));
    let mut cvals: Vec<f64> = vec![c.eval(y.time(0), &PathView::raw(t0, dt, dim, &hat))];
    let mut kac: Vec<f64> = vec![0.0];

    let mut start = 0;
    let mut running_sup = euclidean_norm(y.point(0));
    let mut next = Vec::new();
    while start < y.steps() {
        if diag.picard_iters.len() >= opts.max_subintervals {
            return Err(Error::Partition(format!(
                "more than {} subintervals needed before t = {}",
                opts.max_subintervals,
                y.time(start)
            )));
        }
        let k_start = kac[start];
        check_exponent(y.time(start), k_start)?;
        let a_n = (-k_start).exp();
        let ext = next_extent(y, c, start, a_n, running_sup)?;
        let end = ext.end;
        for i in start + 1..=end {
            running_sup = running_sup.max(euclidean_norm(y.point(i)));
        }

        let offset: Vec<f64> = y
            .point(start)
            .iter()
            .zip(&hat[start * dim..(start + 1) * dim])
            .map(|(yv, hv)| hv - yv * a_n)
            .collect();

        // initial iterate: α_n ≡ 1
        hat.truncate((start + 1) * dim);
        for i in start + 1..=end {
            hat.extend(y.point(i).iter().zip(&offset).map(|(yv, o)| yv * a_n + o));
        }
        cvals.truncate(start + 1);
        kac.truncate(start + 1);

        let mut iters = 0;
        loop {
            iters += 1;
            // Kac exponent of the current iterate on the subinterval
            cvals.truncate(start + 1);
            kac.truncate(start + 1);
            for i in start + 1..=end {
                let ci = c.eval(
                    y.time(i),
                    &PathView::raw(t0, dt, dim, &hat[..(i + 1) * dim]),
                );
                let ki = kac[i - 1] + 0.5 * dt * (cvals[i - 1] + ci);
                check_exponent(y.time(i), ki)?;
                cvals.push(ci);
                kac.push(ki);
            }
            next.clear();
            for i in start + 1..=end {
                let factor = a_n * (-(kac[i] - k_start)).exp();
                next.extend(
                    y.point(i)
                        .iter()
                        .zip(&offset)
                        .map(|(yv, o)| yv * factor + o),
                );
            }
            let cur = &mut hat[(start + 1) * dim..(end + 1) * dim];
            let mut diff: f64 = 0.0;
            for (row_new, row_old) in next.chunks(dim).zip(cur.chunks(dim)) {
                let d = row_new
                    .iter()
                    .zip(row_old)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                diff = diff.max(d);
            }
            cur.copy_from_slice(&next);
            if !diff.is_finite() {
                return Err(Error::Overflow {
                    time: y.time(end),
                    exponent: f64::INFINITY,
                    limit: EXPONENT_LIMIT,
                });
            }
            if diff <= tol * (1.0 - ext.contraction) {
                break;
            }
            if iters >= opts.max_iterations {
                diag.partition.push(y.time(end));
                diag.picard_iters.push(iters);
                diag.contraction_constants.push(ext.contraction);
                return Err(Error::Convergence {
                    start: y.time(start),
                    end: y.time(end),
                    iterations: iters,
                    last_step: diff,
                    diagnostics: Box::new(diag),
                });
            }
        }
        // Kac exponent of the accepted iterate
        cvals.truncate(start + 1);
        kac.truncate(start + 1);
        for i in start + 1..=end {
            let ci = c.eval(
                y.time(i),
                &PathView::raw(t0, dt, dim, &hat[..(i + 1) * dim]),
            );
            kac.push(kac[i - 1] + 0.5 * dt * (cvals[i - 1] + ci));
            cvals.push(ci);
        }

        diag.partition.push(y.time(end));
        diag.picard_iters.push(iters);
        diag.contraction_constants.push(ext.contraction);
        start = end;
    }

    let out = GridPath::new(t0, dt, dim, hat)?;
    diag.hat_sup_norm = out.sup_norm_index(out.steps())?;
    diag.final_residual = defining_residual(y, &out, c)?;
    if diag.final_residual > tol {
        return Err(Error::Convergence {
            start: t0,
            end: y.final_time(),
            iterations: diag.picard_iters.iter().sum(),
            last_step: diag.final_residual,
            diagnostics: Box::new(diag),
        });
    }
    Ok((out, diag))
}

/// Both sides of the stability estimate for `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityBound {
    pub lhs: f64,
    pub rhs: f64,
    /// `M = exp(∫_0^T |c(s, ŷ_1)| ds)`.
    pub m: f64,
    pub delta: f64,
}

impl StabilityBound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// `lhs = ‖ŷ_1 − ŷ_2‖_T` and
/// `rhs = M ‖y_1 − y_2‖_T exp(T M ‖y_2‖_T β e^δ)` with `δ` just above `β T lhs`.
pub fn stability_bound(
    y1: &GridPath,
    y2: &GridPath,
    hat1: &GridPath,
    hat2: &GridPath,
    c: &PotentialSpec,
) -> Result<StabilityBound> {
    let horizon = y1.final_time() - y1.t0();
    let lhs = hat1.sup_distance(hat2)?;
    let dy = y1.sup_distance(y2)?;
    let abs_vals: Vec<f64> = potential_values(c, hat1)
        .into_iter()
        .map(f64::abs)
        .collect();
    let m = cumulate(hat1.dt(), &abs_vals)
        .last()
        .copied()
        .unwrap_or(0.0)
        .exp();
    let beta = c.beta(horizon);
    let delta = beta * horizon * lhs * (1.0 + 1e-9);
    let y2_norm = y2.sup_norm_index(y2.steps())?;
    let rhs = m * dy * (horizon * m * y2_norm * beta * delta.exp()).exp();
    Ok(StabilityBound { lhs, rhs, m, delta })
}

/// Errors of `S ∘ R` and `R ∘ S` against the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundTrip {
    /// `‖S(R(y)) − y‖_T`.
    pub forward: f64,
    /// `‖R(S(y)) − y‖_T`.
    pub reverse: f64,
}

impl RoundTrip {
    pub fn max(&self) -> f64 {
        self.forward.max(self.reverse)
    }
}

pub fn roundtrip(y: &GridPath, c: &PotentialSpec, tol: f64) -> Result<RoundTrip> {
    let (hat, _) = solve_hat(y, c, tol)?;
    let forward = forward_map(&hat, c)?.sup_distance(y)?;
    let (back, _) = solve_hat(&forward_map(y, c)?, c, tol)?;
    let reverse = back.sup_distance(y)?;
    Ok(RoundTrip { forward, reverse })
}

/// Larger of the two round-trip errors.
pub fn roundtrip_error(y: &GridPath, c: &PotentialSpec, tol: f64) -> Result<f64> {
    roundtrip(y, c, tol).map(|r| r.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::field;
    use crate::potential::{
        make_constant, make_state_potential, norm_potential, path_average_potential, time_potential,
    };
    use proptest::prelude::*;

    fn identity_potential() -> PotentialSpec {
        make_state_potential("identity", field(|x| x[0]), 1.0, |a, _| a)
    }

    fn wiggle(dt: f64, steps: usize, seed: f64) -> GridPath {
        GridPath::scalar(0.0, dt, steps, |t| {
            (3.0 * t + seed).sin() + 0.5 * (7.0 * t * seed).cos()
        })
        .unwrap()
    }

    #[test]
    fn kac_integral_examples() {
        let y = GridPath::scalar(0.0, 1e-3, 1000, |t| t).unwrap();
        assert!((kac_integral(&make_constant(2.0), &y, 0.5).unwrap() - 1.0).abs() < 1e-15);
        let time = time_potential("s", |s| s, 1.0);
        assert!((kac_integral(&time, &y, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((kac_integral(&norm_potential(), &y, 1.0).unwrap() - 0.5).abs() < 1e-12);
        let k = kac_cumulative(&make_constant(1.5), &y).unwrap();
        assert_eq!(k.values[0], 0.0);
    }

    #[test]
    fn kac_integral_refuses_dead_paths() {
        let mut data: Vec<f64> = (0..11).map(|i| i as f64).collect();
        data[6] = f64::NAN;
        let y = GridPath::new(0.0, 0.1, 1, data).unwrap();
        assert!(kac_integral(&make_constant(1.0), &y, 0.5).is_ok());
        assert!(matches!(
            kac_integral(&make_constant(1.0), &y, 0.8),
            Err(Error::Lifetime { .. })
        ));
    }

    #[test]
    fn forward_map_examples() {
        let y = wiggle(1e-2, 100, 0.3);
        assert_eq!(forward_map(&y, &make_constant(0.0)).unwrap(), y);
        let s = forward_map(&y, &make_constant(0.7)).unwrap();
        for i in 0..y.len() {
            let expect = y.point(i)[0] * (0.7 * y.time(i)).exp();
            assert!((s.point(i)[0] - expect).abs() <= 1e-14 * expect.abs().max(1.0));
        }
        let one = GridPath::constant(0.0, 1e-3, 1000, &[1.0]).unwrap();
        let e = forward_map(&one, &norm_potential()).unwrap();
        assert!((e.point(1000)[0] - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn forward_map_overflow_names_time() {
        let y = GridPath::constant(0.0, 1.0, 10, &[1.0]).unwrap();
        match forward_map(&y, &make_constant(100.0)) {
            Err(Error::Overflow { time, .. }) => assert_eq!(time, 8.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn solve_hat_zero_potential_is_identity() {
        let y = wiggle(1e-3, 1000, 1.1);
        let (hat, diag) = solve_hat(&y, &make_constant(0.0), 1e-12).unwrap();
        assert_eq!(hat.as_slice(), y.as_slice());
        assert_eq!(diag.final_residual, 0.0);
    }

    #[test]
    fn solve_hat_constant_potential_closed_form() {
        let y = wiggle(1e-3, 1000, 0.4);
        let (hat, diag) = solve_hat(&y, &make_constant(1.3), 1e-12).unwrap();
        for i in 0..y.len() {
            let expect = y.point(i)[0] * (-1.3 * y.time(i)).exp();
            assert!((hat.point(i)[0] - expect).abs() < 1e-14);
        }
        assert!(diag.picard_iters.iter().all(|&n| n <= 2));
    }

    fn closed_form_error(dt: f64) -> f64 {
        let steps = (1.0 / dt).round() as usize;
        let y = GridPath::constant(0.0, dt, steps, &[1.0]).unwrap();
        let (hat, diag) = solve_hat(&y, &identity_potential(), 1e-12).unwrap();
        assert!(diag.final_residual <= 1e-12);
        assert!(diag.contraction_constants.iter().all(|&k| k < 1.0));
        (0..hat.len())
            .map(|i| (hat.point(i)[0] - 1.0 / (1.0 + hat.time(i))).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn solve_hat_reciprocal_closed_form() {
        let y = GridPath::constant(0.0, 1e-3, 1000, &[1.0]).unwrap();
        let (hat, diag) = solve_hat(&y, &identity_potential(), 1e-12).unwrap();
        assert!((hat.point(1000)[0] - 0.5).abs() <= 5e-4);
        assert!(diag.partition.len() > 2);
        assert!(diag.a_priori_step < 1e-3);

        let coarse = closed_form_error(1e-2);
        let fine = closed_form_error(5e-3);
        assert!(coarse / fine >= 3.5, "ratio {}", coarse / fine);
    }

    #[test]
    fn solve_hat_agrees_with_fine_grid_reference() {
        let y = GridPath::constant(0.0, 1e-3, 1000, &[1.0]).unwrap();
        let (hat, _) = solve_hat(&y, &identity_potential(), 1e-12).unwrap();
        let yf = GridPath::constant(0.0, 1e-5, 100_000, &[1.0]).unwrap();
        let (fine, _) = solve_hat(&yf, &identity_potential(), 1e-12).unwrap();
        assert!((hat.point(1000)[0] - fine.point(100_000)[0]).abs() < 1e-6);
    }

    #[test]
    fn solve_hat_is_causal() {
        let y = wiggle(1e-3, 1000, 0.9);
        let c = norm_potential();
        let (full, _) = solve_hat(&y, &c, 1e-12).unwrap();
        let (part, _) = solve_hat(&y.restrict(0.4).unwrap(), &c, 1e-12).unwrap();
        assert!(full.restrict(0.4).unwrap().sup_distance(&part).unwrap() <= 1e-12);
    }

    #[test]
    fn partition_error_when_a_single_step_is_too_long() {
        let y = GridPath::constant(0.0, 1.0, 3, &[1.0]).unwrap();
        assert!(matches!(
            solve_hat(&y, &identity_potential(), 1e-12),
            Err(Error::Partition(_))
        ));
    }

    #[test]
    fn subinterval_cap_is_enforced() {
        let y = GridPath::constant(0.0, 1e-3, 1000, &[1.0]).unwrap();
        let opts = SolveOptions {
            max_subintervals: 3,
            ..SolveOptions::default()
        };
        assert!(matches!(
            solve_hat_with(&y, &identity_potential(), 1e-12, opts),
            Err(Error::Partition(_))
        ));
    }

    #[test]
    fn convergence_error_carries_diagnostics() {
        let y = wiggle(1e-3, 1000, 0.2);
        let opts = SolveOptions {
            max_iterations: 1,
            ..SolveOptions::default()
        };
        match solve_hat_with(&y, &norm_potential(), 1e-14, opts) {
            Err(Error::Convergence { diagnostics, .. }) => {
                assert_eq!(diagnostics.picard_iters, vec![1])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stability_examples() {
        let y = wiggle(1e-3, 1000, 0.5);
        let c = norm_potential();
        let (h, _) = solve_hat(&y, &c, 1e-12).unwrap();
        let b = stability_bound(&y, &y, &h, &h, &c).unwrap();
        assert_eq!((b.lhs, b.rhs), (0.0, 0.0));

        let y2 = wiggle(1e-3, 1000, 0.6);
        let zero = make_constant(0.0);
        let b = stability_bound(&y, &y2, &y, &y2, &zero).unwrap();
        assert_eq!(b.lhs, b.rhs);
    }

    #[test]
    fn stability_bound_on_seeded_pairs() {
        let c = norm_potential();
        for k in 0..100 {
            let s = 0.05 + 0.02 * k as f64;
            let y1 = wiggle(1e-2, 100, s);
            let y2 = GridPath::scalar(0.0, 1e-2, 100, |t| {
                (3.0 * t + s).sin() * (1.0 + 0.1 * s) + 0.2 * t
            })
            .unwrap();
            let (h1, _) = solve_hat(&y1, &c, 1e-12).unwrap();
            let (h2, _) = solve_hat(&y2, &c, 1e-12).unwrap();
            let b = stability_bound(&y1, &y2, &h1, &h2, &c).unwrap();
            assert!(b.holds(), "trial {k}: {b:?}");
        }
    }

    #[test]
    fn roundtrip_examples() {
        let y = wiggle(1e-3, 1000, 0.7);
        assert_eq!(
            roundtrip_error(&y, &make_constant(0.0), 1e-12).unwrap(),
            0.0
        );
        assert!(roundtrip_error(&y, &make_constant(0.8), 1e-12).unwrap() <= 1e-12);
        assert!(roundtrip_error(&y, &norm_potential(), 1e-12).unwrap() <= 1e-9);
        assert!(roundtrip_error(&y, &path_average_potential(), 1e-12).unwrap() <= 1e-9);
    }

    #[test]
    fn negation_duality() {
        let y = wiggle(1e-3, 1000, 0.3);
        let c = norm_potential();
        let s = forward_map(&y, &c).unwrap();
        let (r_neg, _) = solve_hat(&y, &c.negate(), 1e-12).unwrap();
        // y = S_c(y) e^{−∫c(y)}, so y solves the R_c equation for input S_c(y)
        assert!(defining_residual(&s, &y, &c).unwrap() <= 1e-12);
        assert!(defining_residual(&y, &r_neg, &c.negate()).unwrap() <= 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn bijection_on_random_paths(a in -1.0f64..1.0, b in -2.0f64..2.0, w in 0.5f64..6.0) {
            let y = GridPath::scalar(0.0, 2e-3, 500, |t| a + b * (w * t).sin()).unwrap();
            for c in [norm_potential(), path_average_potential(), make_constant(a)] {
                let rt = roundtrip(&y, &c, 1e-12).unwrap();
                prop_assert!(rt.forward <= 1e-10, "{rt:?}");
                prop_assert!(rt.reverse <= 1e-10, "{rt:?}");
            }
        }

        #[test]
        fn causality_on_random_prefixes(a in -1.0f64..1.0, w in 0.5f64..6.0, cut in 1usize..400) {
            let y = GridPath::scalar(0.0, 2e-3, 400, |t| a + (w * t).cos()).unwrap();
            let c = path_average_potential();
            let (full, _) = solve_hat(&y, &c, 1e-12).unwrap();
            let (part, _) = solve_hat(&y.restrict_index(cut), &c, 1e-12).unwrap();
            prop_assert!(full.restrict_index(cut).sup_distance(&part).unwrap() <= 1e-12);
        }

        #[test]
        fn continuity_under_shrinking_perturbations(a in -1.0f64..1.0, w in 0.5f64..6.0) {
            let c = norm_potential();
            let y = GridPath::scalar(0.0, 1e-2, 100, |t| a + (w * t).sin()).unwrap();
            let (h, _) = solve_hat(&y, &c, 1e-12).unwrap();
            for eps in [1e-1, 1e-2, 1e-3] {
                let yp = GridPath::scalar(0.0, 1e-2, 100, |t| a + (w * t).sin() + eps * t.cos()).unwrap();
                let (hp, _) = solve_hat(&yp, &c, 1e-12).unwrap();
                let b = stability_bound(&yp, &y, &hp, &h, &c).unwrap();
                prop_assert!(b.holds(), "{b:?}");
            }
        }
    }
}
