//! Truncated Hermite-Sobolev calculus.
//!
//! Elements of `S_p` and its dual are represented by their coefficients in
//! the L²-orthonormal Hermite functions
//!
//! ```text
//! h_k(x) = (2^k k! √π)^{-1/2} H_k(x) e^{-x²/2}
//! ```
//!
//! truncated at order `N`. In dimension `d > 1` the basis is the tensor
//! product `h_{k_1}(x_1)⋯h_{k_d}(x_d)` with every `k_i ≤ N`, flattened with
//! axis 0 fastest, so a state has `(N+1)^d` coefficients.
//!
//! The Sobolev norm uses the eigenvalues `2|k| + d` of the Hermite operator
//! `|x|² − Δ`:
//!
//! ```text
//! ‖u‖_q² = Σ_k (2|k| + d)^{2q} u_k²
//! ```
//!
//! With this weighting `δ_x ∈ S_{-p}` exactly when `p > d/4`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::TestFunction;

const RESCALE: f64 = 1e150;
const LN_RESCALE: f64 = 345.387_763_949_107; // ln(1e150)

/// Truncated Hermite coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteState {
    #[serde(rename = "N")]
    order: usize,
    #[serde(rename = "d")]
    dim: usize,
    p: f64,
    coeffs: Vec<f64>,
}

/// Number of coefficients of a state of order `order` in dimension `dim`.
pub fn state_len(order: usize, dim: usize) -> usize {
    (order + 1).pow(dim as u32)
}

impl HermiteState {
    pub fn new(coeffs: Vec<f64>, order: usize, dim: usize, p: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("dimension must be positive".into()));
        }
        if coeffs.len() != state_len(order, dim) {
            return Err(Error::Shape(format!(
                "expected {} coefficients for N = {order}, d = {dim}, got {}",
                state_len(order, dim),
                coeffs.len()
            )));
        }
        if let Some(k) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::Invalid(format!("coefficient {k} is not finite")));
        }
        Ok(HermiteState {
            order,
            dim,
            p,
            coeffs,
        })
    }

    pub fn zeros(order: usize, dim: usize) -> Self {
        HermiteState {
            order,
            dim,
            p: 0.0,
            coeffs: vec![0.0; state_len(order, dim)],
        }
    }

    /// Unit vector `e_k` in flattened indexing.
    pub fn unit(order: usize, dim: usize, k: usize) -> Result<Self> {
        let mut s = HermiteState::zeros(order, dim);
        if k >= s.coeffs.len() {
            return Err(Error::Range(format!("index {k} beyond {}", s.coeffs.len())));
        }
        s.coeffs[k] = 1.0;
        Ok(s)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn regularity(&self) -> f64 {
        self.p
    }

    pub fn with_regularity(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> HermiteState {
        HermiteState {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }

    fn check_compatible(&self, other: &HermiteState) -> Result<()> {
        if self.order != other.order || self.dim != other.dim {
            return Err(Error::Shape(format!(
                "states differ: (N = {}, d = {}) vs (N = {}, d = {})",
                self.order, self.dim, other.order, other.dim
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &HermiteState) -> Result<HermiteState> {
        self.check_compatible(other)?;
        Ok(HermiteState {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
            ..self.clone()
        })
    }

    /// Largest coefficient-wise absolute difference.
    pub fn max_abs_diff(&self, other: &HermiteState) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Multi-index of flattened coefficient `k`.
    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let n = self.order + 1;
        (0..self.dim)
            .map(|_| {
                let i = k % n;
                k /= n;
                i
            })
            .collect()
    }

    /// Writes `k,coeff` CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["k", "coeff"])?;
        for (k, c) in self.coeffs.iter().enumerate() {
            wtr.write_record([k.to_string(), crate::path_core::format_f64(*c)])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads `k,coeff` CSV for a state of the given order, dimension and regularity.
    pub fn read_csv<R: Read>(r: R, order: usize, dim: usize, p: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut coeffs = vec![0.0; state_len(order, dim)];
        let mut seen = vec![false; coeffs.len()];
        for rec in rdr.records() {
            let rec = rec?;
            let k: usize = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Format("bad index column".into()))?;
            let c: f64 = rec
                .get(1)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Format("bad coefficient column".into()))?;
            if k >= coeffs.len() {
                return Err(Error::Shape(format!("index {k} beyond {}", coeffs.len())));
            }
            coeffs[k] = c;
            seen[k] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Format("missing coefficient rows".into()));
        }
        HermiteState::new(coeffs, order, dim, p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: HermiteState = serde_json::from_str(s)?;
        HermiteState::new(raw.coeffs, raw.order, raw.dim, raw.p)
    }
}

/// Fills `out[k] = h_k(x)` for `k = 0..out.len()`.
///
/// Runs the three-term recurrence on a rescaled sequence so that high orders
/// at large `|x|` neither underflow nor overflow.
pub fn hermite_functions_into(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    // h_k = p_k · exp(log_scale)
    let mut log_scale = -0.5 * x * x - 0.25 * PI.ln();
    let mut scale = log_scale.exp();
    let mut prev = 0.0;
    let mut cur = 1.0;
    out[0] = cur * scale;
    for k in 1..out.len() {
        let kf = k as f64;
        let next = (2.0 / kf).sqrt() * x * cur - ((kf - 1.0) / kf).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            log_scale += LN_RESCALE;
            scale = log_scale.exp();
        }
        out[k] = if log_scale > -700.0 {
            cur * scale
        } else if cur == 0.0 {
            0.0
        } else {
            cur.signum() * (cur.abs().ln() + log_scale).exp()
        };
    }
}

/// `h_0(x), …, h_n(x)` on the real line.
pub fn hermite_functions(n: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    hermite_functions_into(x, &mut out);
    out
}

/// Tensor Hermite basis at `x ∈ R^d`, truncated at order `order` per axis.
pub fn hermite_basis(order: usize, x: &[f64]) -> Vec<f64> {
    let axes: Vec<Vec<f64>> = x.iter().map(|&xi| hermite_functions(order, xi)).collect();
    tensor_product(&axes)
}

fn tensor_product(axes: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![1.0];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for a in axis {
            next.extend(out.iter().map(|o| o * a));
        }
        out = next;
    }
    out
}

/// Values, first and second derivatives of `h_0..h_n` at `x`.
///
/// Uses `h_k' = √(k/2) h_{k-1} − √((k+1)/2) h_{k+1}` and the Hermite
/// equation `h_k'' = (x² − 2k − 1) h_k`.
pub fn hermite_derivatives(n: usize, x: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = hermite_functions(n + 1, x);
    let d1: Vec<f64> = (0..=n)
        .map(|k| {
            let kf = k as f64;
            let down = if k > 0 {
                (kf / 2.0).sqrt() * h[k - 1]
            } else {
                0.0
            };
            down - ((kf + 1.0) / 2.0).sqrt() * h[k + 1]
        })
        .collect();
    let d2: Vec<f64> = (0..=n)
        .map(|k| (x * x - 2.0 * k as f64 - 1.0) * h[k])
        .collect();
    let mut vals = h;
    vals.truncate(n + 1);
    (vals, d1, d2)
}

/// Gauss–Hermite rule in "function" form: `∫ g(x) dx ≈ Σ_i w_i g(x_i)`,
/// i.e. the classical weights multiplied by `e^{x_i²}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes are the roots of `h_n`, bracketed by a sign scan finer than the
    /// smallest root spacing and refined by bisection and Newton; the
    /// weights are `1 / (n h_{n-1}(x_i)²)`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid(
                "Gauss-Hermite rule needs at least one node".into(),
            ));
        }
        let nf = n as f64;
        let m = n / 2;
        let p = |x: f64| scaled_pair(n, x).0;
        let reach = (2.0 * nf + 1.0).sqrt() + 1.0;
        let step = std::f64::consts::PI / (8.0 * (2.0 * nf + 1.0).sqrt());
        let mut pos = Vec::with_capacity(m + 1);
        let mut a = if n % 2 == 1 { 0.5 * step } else { 0.0 };
        let mut pa = p(a);
        while a < reach && pos.len() < m {
            let b = a + step;
            let pb = p(b);
            if pa == 0.0 {
                pos.push(a);
            } else if pa.signum() != pb.signum() {
                let (mut lo, mut hi, mut plo) = (a, b, pa);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let pm = p(mid);
                    if pm == 0.0 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if pm.signum() == plo.signum() {
                        lo = mid;
                        plo = pm;
                    } else {
                        hi = mid;
                    }
                }
                let mut z = 0.5 * (lo + hi);
                for _ in 0..2 {
                    let (pn, pn1) = scaled_pair(n, z);
                    let deriv = (2.0 * nf).sqrt() * pn1 - z * pn;
                    let next = z - pn / deriv;
                    if next.is_finite() && next >= a && next <= b {
                        z = next;
                    }
                }
                pos.push(z);
            }
            a = b;
            pa = pb;
        }
        if pos.len() != m {
            return Err(Error::Projection(format!(
                "found {} of {m} positive Gauss-Hermite nodes for n = {n}",
                pos.len()
            )));
        }
        if n % 2 == 1 {
            pos.insert(0, 0.0);
        }
        let mut nodes = Vec::with_capacity(n);
        nodes.extend(pos.iter().rev().map(|x| -x));
        let skip = if n % 2 == 1 { 1 } else { 0 };
        nodes.extend(pos.iter().skip(skip).copied());
        debug_assert_eq!(nodes.len(), n);
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let weights = nodes
            .iter()
            .map(|&x| {
                let mut h = vec![0.0; n];
                hermite_functions_into(x, &mut h);
                1.0 / (nf * h[n - 1] * h[n - 1])
            })
            .collect::<Vec<_>>();
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Projection(format!(
                "Gauss-Hermite weights overflow for n = {n}"
            )));
        }
        Ok(GaussHermite { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * g(*x))
            .sum()
    }
}

/// `(p_n, p_{n-1})` sharing an arbitrary common positive scale, with
/// `h_k ∝ p_k`.
fn scaled_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 1..=n {
        let kf = k as f64;
        let next = (2.0 / kf).sqrt() * x * cur - ((kf - 1.0) / kf).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
        }
    }
    (cur, prev)
}

/// Node count used by [`project`]: `2(N+1)`.
pub fn projection_nodes(order: usize) -> usize {
    2 * (order + 1)
}

/// Node count used by [`translate`]. The shifted integrand carries an extra
/// `e^{zξ}` factor, so the rule is taken larger than for plain projection.
pub fn translation_nodes(order: usize) -> usize {
    3 * (order + 1) + 16
}

/// Applies a `rows × cols` matrix along `axis` of a tensor stored with
/// axis 0 fastest. `shape[axis]` must equal `cols`.
fn apply_axis(
    input: &[f64],
    shape: &[usize],
    axis: usize,
    mat: &[f64],
    rows: usize,
) -> (Vec<f64>, Vec<usize>) {
    let cols = shape[axis];
    let inner: usize = shape[..axis].iter().product();
    let outer: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; inner * rows * outer];
    for o in 0..outer {
        for r in 0..rows {
            let row = &mat[r * cols..(r + 1) * cols];
            let dst = &mut out[(o * rows + r) * inner..(o * rows + r + 1) * inner];
            for (c, m) in row.iter().enumerate() {
                if *m == 0.0 {
                    continue;
                }
                let src = &input[(o * cols + c) * inner..(o * cols + c + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += m * s;
                }
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = rows;
    (out, new_shape)
}

/// Precomputed quadrature and weighted basis for projecting functions on
/// `R^d` onto the truncated Hermite basis.
#[derive(Debug, Clone)]
pub struct Projector {
    order: usize,
    dim: usize,
    quad: GaussHermite,
    /// `(N+1) × n` matrix with entries `w_i h_k(x_i)`.
    analysis: Vec<f64>,
}

impl Projector {
    pub fn new(order: usize, dim: usize, nodes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("dimension must be positive".into()));
        }
        let quad = GaussHermite::new(nodes)?;
        let n = quad.len();
        let mut analysis = vec![0.0; (order + 1) * n];
        let mut h = vec![0.0; order + 1];
        for (i, (&x, &w)) in quad.nodes.iter().zip(&quad.weights).enumerate() {
            hermite_functions_into(x, &mut h);
            for k in 0..=order {
                analysis[k * n + i] = w * h[k];
            }
        }
        Ok(Projector {
            order,
            dim,
            quad,
            analysis,
        })
    }

    /// Projector with the default `2(N+1)`-node rule.
    pub fn standard(order: usize, dim: usize) -> Result<Self> {
        Projector::new(order, dim, projection_nodes(order))
    }

    pub fn quadrature(&self) -> &GaussHermite {
        &self.quad
    }

    /// Coefficients of a function given by its values on the tensor node grid.
    pub fn analyze(&self, values: &[f64]) -> Result<HermiteState> {
        let n = self.quad.len();
        let mut shape = vec![n; self.dim];
        let mut data = values.to_vec();
        for axis in 0..self.dim {
            let (next, s) = apply_axis(&data, &shape, axis, &self.analysis, self.order + 1);
            data = next;
            shape = s;
        }
        if let Some(k) = data.iter().position(|c| !c.is_finite()) {
            return Err(Error::Projection(format!("coefficient {k} is not finite")));
        }
        HermiteState::new(data, self.order, self.dim, 0.0)
    }

    /// `⟨f, h_k⟩` for every multi-index `k`.
    pub fn project<F: Fn(&[f64]) -> f64 + ?Sized>(&self, f: &F) -> Result<HermiteState> {
        let n = self.quad.len();
        let total = n.pow(self.dim as u32);
        let mut x = vec![0.0; self.dim];
        let mut values = Vec::with_capacity(total);
        for flat in 0..total {
            let mut r = flat;
            for xi in x.iter_mut() {
                *xi = self.quad.nodes[r % n];
                r /= n;
            }
            let v = f(&x);
            if !v.is_finite() {
                return Err(Error::Projection(format!("non-finite value at {x:?}")));
            }
            values.push(v);
        }
        self.analyze(&values)
    }

    /// Coefficients of `ξ ↦ u(ξ − z)`.
    pub fn translate(&self, u: &HermiteState, z: &[f64]) -> Result<HermiteState> {
        if u.order != self.order || u.dim != self.dim || z.len() != self.dim {
            return Err(Error::Shape(
                "translation operand does not match projector".into(),
            ));
        }
        let limit = translation_window(self.order);
        let norm = crate::path_core::euclidean_norm(z);
        if !(norm <= limit) {
            return Err(Error::Range(format!(
                "shift |z| = {norm} outside the reliable window {limit}"
            )));
        }
        let n = self.quad.len();
        let cols = self.order + 1;
        let mut shape = vec![cols; self.dim];
        let mut data = u.coeffs.clone();
        let mut synth = vec![0.0; n * cols];
        let mut h = vec![0.0; cols];
        for (axis, &za) in z.iter().enumerate() {
            for (i, &x) in self.quad.nodes.iter().enumerate() {
                hermite_functions_into(x - za, &mut h);
                synth[i * cols..(i + 1) * cols].copy_from_slice(&h);
            }
            let (next, s) = apply_axis(&data, &shape, axis, &synth, n);
            data = next;
            shape = s;
        }
        let mut out = self.analyze(&data)?;
        out.p = u.p;
        Ok(out)
    }
}

/// Largest shift accepted by [`translate`] at truncation order `order`.
pub fn translation_window(order: usize) -> f64 {
    (2.0 * order as f64).sqrt() / 2.0
}

/// Projects `f : R^d → R` onto `h_0..h_N` per axis with the `2(N+1)`-node rule.
pub fn project<F: Fn(&[f64]) -> f64 + ?Sized>(
    f: &F,
    order: usize,
    dim: usize,
) -> Result<HermiteState> {
    Projector::standard(order, dim)?.project(f)
}

/// Coefficients of `δ_x`: entry `k` is `h_k(x)`.
pub fn delta_coeffs(x: &[f64], order: usize) -> HermiteState {
    HermiteState {
        order,
        dim: x.len(),
        p: 0.0,
        coeffs: hermite_basis(order, x),
    }
}

/// `‖u‖_q = (Σ_k (2|k| + d)^{2q} u_k²)^{1/2}`.
pub fn sobolev_norm(u: &HermiteState, q: f64) -> f64 {
    let d = u.dim as f64;
    (0..u.coeffs.len())
        .map(|k| {
            let total: usize = u.multi_index(k).iter().sum();
            let w = (2.0 * total as f64 + d).powf(2.0 * q);
            w * u.coeffs[k] * u.coeffs[k]
        })
        .sum::<f64>()
        .sqrt()
}

/// Duality pairing `⟨f, u⟩ = Σ_k f_k u_k`.
pub fn pair(f: &HermiteState, u: &HermiteState) -> Result<f64> {
    f.check_compatible(u)?;
    Ok(dot(&f.coeffs, &u.coeffs))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ξ ↦ u(ξ − z)` by re-projection with the translation rule.
pub fn translate(u: &HermiteState, z: &[f64]) -> Result<HermiteState> {
    Projector::new(u.order, u.dim, translation_nodes(u.order))?.translate(u, z)
}

/// `L̄f(x) = ½ Σ a_ij ∂²_ij f(x) + Σ b_i ∂_i f(x)`, the action of the
/// generator on `f` at `x`, equal to `⟨f, L(δ_x)⟩` for
/// `L(y) = ½ Σ a_ij ∂²_ij y − Σ b_i ∂_i y` because `⟨f, ∂_i δ_x⟩ = −∂_i f(x)`.
///
/// `a` is the row-major `d × d` matrix `σσᵀ(x)`.
pub fn adjoint_l_on_delta(x: &[f64], a: &[f64], b: &[f64], f: &dyn TestFunction) -> f64 {
    let d = x.len();
    let grad = f.gradient(x);
    let hess = f.hessian(x);
    let second: f64 = a.iter().zip(&hess).map(|(ai, hi)| ai * hi).sum();
    let first: f64 = b.iter().zip(&grad).map(|(bi, gi)| bi * gi).sum();
    debug_assert_eq!(a.len(), d * d);
    0.5 * second + first
}

/// Coefficients of `L(δ_x)` in one dimension: entry `k` is
/// `½ a h_k''(x) + b h_k'(x)`.
pub fn adjoint_l_delta_coeffs(x: f64, a: f64, b: f64, order: usize) -> HermiteState {
    let (_, d1, d2) = hermite_derivatives(order, x);
    HermiteState {
        order,
        dim: 1,
        p: 0.0,
        coeffs: d1
            .iter()
            .zip(&d2)
            .map(|(g, h)| 0.5 * a * h + b * g)
            .collect(),
    }
}

/// Coefficients of `u'` in one dimension, dropping the `h_{N+1}` component:
/// `(u')_j = √((j+1)/2) u_{j+1} − √(j/2) u_{j-1}`.
pub fn derivative(u: &HermiteState) -> Result<HermiteState> {
    if u.dim != 1 {
        return Err(Error::Shape(
            "coefficient derivative is one-dimensional".into(),
        ));
    }
    let n = u.order;
    let c = &u.coeffs;
    let coeffs = (0..=n)
        .map(|j| {
            let jf = j as f64;
            let up = if j < n {
                ((jf + 1.0) / 2.0).sqrt() * c[j + 1]
            } else {
                0.0
            };
            let down = if j > 0 {
                (jf / 2.0).sqrt() * c[j - 1]
            } else {
                0.0
            };
            up - down
        })
        .collect();
    Ok(HermiteState {
        coeffs,
        ..u.clone()
    })
}

/// Evaluates the truncated expansion `Σ_k u_k h_k(x)`.
pub fn evaluate(u: &HermiteState, x: &[f64]) -> Result<f64> {
    if x.len() != u.dim {
        return Err(Error::Shape("point dimension does not match state".into()));
    }
    Ok(dot(&u.coeffs, &hermite_basis(u.order, x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{FnTest, Gaussian};

    const PI_M14: f64 = 0.751_125_544_464_942_5; // π^{-1/4}

    #[test]
    fn h0_at_zero() {
        let h = hermite_functions(3, 0.0);
        assert!((h[0] - PI_M14).abs() < 1e-15);
        assert_eq!(h[1], 0.0);
        assert!((h[0] - PI.powf(-0.25)).abs() < 1e-15);
    }

    #[test]
    fn matches_explicit_low_orders() {
        for &x in &[-2.3, -0.4, 0.0, 0.7, 3.1] {
            let h = hermite_functions(3, x);
            let e = (-x * x / 2.0).exp() * PI_M14;
            assert!((h[0] - e).abs() < 1e-15);
            assert!((h[1] - 2f64.sqrt() * x * e).abs() < 1e-14);
            assert!((h[2] - (2.0 * x * x - 1.0) / 2f64.sqrt() * e).abs() < 1e-14);
            assert!((h[3] - (2.0 * x.powi(3) - 3.0 * x) / 3f64.sqrt() * e).abs() < 1e-14);
        }
    }

    #[test]
    fn large_argument_high_order_does_not_underflow() {
        // h_n is O(1) near its turning point sqrt(2n+1) even though h_0 underflows.
        let h = hermite_functions(1200, 45.0);
        assert_eq!(h[0], 0.0);
        assert!(h[1200].abs() > 1e-3, "{}", h[1200]);
        assert!(h.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn quadrature_integrates_gaussian_moments() {
        let q = GaussHermite::new(20).unwrap();
        let m0 = q.integrate(|x| (-x * x).exp());
        let m2 = q.integrate(|x| x * x * (-x * x).exp());
        assert!((m0 - PI.sqrt()).abs() < 1e-13);
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-13);
        let odd = GaussHermite::new(7).unwrap();
        assert_eq!(odd.len(), 7);
        assert_eq!(odd.nodes()[3], 0.0);
    }

    #[test]
    fn orthonormality_under_high_order_quadrature() {
        for &n in &[4usize, 16, 64] {
            let q = GaussHermite::new(4 * n).unwrap();
            let rows: Vec<Vec<f64>> = q.nodes().iter().map(|&x| hermite_functions(n, x)).collect();
            let mut worst: f64 = 0.0;
            for i in 0..=n {
                for j in 0..=n {
                    let s: f64 = rows
                        .iter()
                        .zip(q.weights())
                        .map(|(h, w)| w * h[i] * h[j])
                        .sum();
                    let e = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((s - e).abs());
                }
            }
            assert!(worst < 1e-10, "N = {n}: {worst}");
        }
    }

    #[test]
    fn projection_reproduces_basis_elements() {
        let f = |x: &[f64]| hermite_functions(3, x[0])[3];
        let u = project(&f, 10, 1).unwrap();
        for (k, c) in u.coeffs().iter().enumerate() {
            let e = if k == 3 { 1.0 } else { 0.0 };
            assert!((c - e).abs() < 1e-10);
        }
        let zero = project(&|_: &[f64]| 0.0, 10, 1).unwrap();
        assert!(zero.coeffs().iter().all(|c| *c == 0.0));
    }

    /// Composite Simpson rule on [-L, L]; an oracle independent of the
    /// Gauss-Hermite machinery.
    fn simpson<F: Fn(f64) -> f64>(g: F, half_width: f64, panels: usize) -> f64 {
        let h = 2.0 * half_width / panels as f64;
        let mut s = g(-half_width) + g(half_width);
        for i in 1..panels {
            let x = -half_width + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(x);
        }
        s * h / 3.0
    }

    #[test]
    fn projection_of_gaussian_matches_quadrature_oracle() {
        let u = project(&|x: &[f64]| (-x[0] * x[0] / 2.0).exp(), 32, 1).unwrap();
        for k in 0..=32 {
            let oracle = simpson(
                |x| (-x * x / 2.0).exp() * hermite_functions(k, x)[k],
                14.0,
                20_000,
            );
            assert!((u.coeffs()[k] - oracle).abs() < 1e-8, "k = {k}");
        }
    }

    #[test]
    fn delta_parity_and_extension() {
        let d0 = delta_coeffs(&[0.0], 16);
        assert!((d0.coeffs()[0] - PI_M14).abs() < 1e-15);
        for k in (1..=16).step_by(2) {
            assert_eq!(d0.coeffs()[k], 0.0);
        }
        let a = delta_coeffs(&[0.8], 10);
        let b = delta_coeffs(&[-0.8], 10);
        for k in 0..=10 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!((a.coeffs()[k] - sign * b.coeffs()[k]).abs() < 1e-15);
        }
        let longer = delta_coeffs(&[0.8], 30);
        assert_eq!(&longer.coeffs()[..11], a.coeffs());
    }

    #[test]
    fn reconstruction_of_gaussian_at_points() {
        let g = Gaussian::new(1.0, vec![0.3], 0.9);
        let f = |x: &[f64]| g.value(x);
        let u = project(&f, 64, 1).unwrap();
        for i in 0..=20 {
            let x = -2.0 + 0.2 * i as f64;
            let v = pair(&u, &delta_coeffs(&[x], 64)).unwrap();
            assert!((v - g.value(&[x])).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn pairing_rules() {
        let z = HermiteState::zeros(5, 1);
        let u = delta_coeffs(&[0.4], 5);
        assert_eq!(pair(&u, &z).unwrap(), 0.0);
        let e2 = HermiteState::unit(5, 1, 2).unwrap();
        assert_eq!(pair(&e2, &u).unwrap(), hermite_functions(5, 0.4)[2]);
        assert!(matches!(
            pair(&e2, &delta_coeffs(&[0.4], 6)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn sobolev_norm_basics() {
        assert_eq!(sobolev_norm(&HermiteState::zeros(8, 1), 1.5), 0.0);
        let mut e0 = HermiteState::unit(8, 1, 0).unwrap();
        e0.coeffs[0] = -2.5;
        for q in [-3.0, 0.0, 0.7, 4.0] {
            assert!((sobolev_norm(&e0, q) - 2.5).abs() < 1e-15);
        }
        let u = delta_coeffs(&[0.3], 20);
        assert!(sobolev_norm(&u, -0.5) < sobolev_norm(&u, 0.0));
        assert!(sobolev_norm(&u, 0.0) < sobolev_norm(&u, 0.5));
    }

    #[test]
    fn delta_norm_series_matches_direct_summation() {
        for &(n, p) in &[(128usize, 0.5), (512, 0.5), (256, 0.125)] {
            let d = delta_coeffs(&[0.0], n);
            let direct: f64 = (0..=n)
                .map(|k| {
                    (2.0 * k as f64 + 1.0).powf(-2.0 * p) * hermite_functions(n, 0.0)[k].powi(2)
                })
                .sum::<f64>()
                .sqrt();
            assert!((sobolev_norm(&d, -p) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_identity_and_gaussian_shift() {
        let g0 = Gaussian::new(1.0, vec![0.0], 1.0);
        let g1 = Gaussian::new(1.0, vec![1.0], 1.0);
        let u0 = project(&|x: &[f64]| g0.value(x), 64, 1).unwrap();
        let u1 = project(&|x: &[f64]| g1.value(x), 64, 1).unwrap();
        let same = translate(&u0, &[0.0]).unwrap();
        assert!(same.max_abs_diff(&u0).unwrap() < 1e-10);
        let shifted = translate(&u0, &[1.0]).unwrap();
        assert!(shifted.max_abs_diff(&u1).unwrap() < 1e-6);
    }

    #[test]
    fn translation_semigroup() {
        let g = Gaussian::new(1.0, vec![-0.2], 0.8);
        let u = project(&|x: &[f64]| g.value(x), 64, 1).unwrap();
        let two = translate(&translate(&u, &[0.7]).unwrap(), &[1.1]).unwrap();
        let one = translate(&u, &[1.8]).unwrap();
        let single = translate(&u, &[0.7]).unwrap();
        let exact = project(&|x: &[f64]| g.value(&[x[0] - 0.7]), 64, 1).unwrap();
        let tol = single.max_abs_diff(&exact).unwrap().max(1e-12);
        assert!(two.max_abs_diff(&one).unwrap() <= 2.0 * tol + 1e-12);
    }

    #[test]
    fn translated_delta_pairs_like_shifted_delta() {
        let g = Gaussian::new(1.0, vec![0.5], 1.1);
        let f = project(&|x: &[f64]| g.value(x), 64, 1).unwrap();
        let moved = translate(&delta_coeffs(&[0.3], 64), &[0.9]).unwrap();
        let v = pair(&f, &moved).unwrap();
        assert!((v - g.value(&[1.2])).abs() < 1e-6);
    }

    #[test]
    fn translation_window_enforced() {
        let u = delta_coeffs(&[0.0], 8);
        assert!(matches!(translate(&u, &[2.5]), Err(Error::Range(_))));
    }

    #[test]
    fn adjoint_action_examples() {
        let lin = FnTest(|x: &[f64]| 3.0 * x[0] - 1.0);
        assert!(adjoint_l_on_delta(&[0.7], &[2.0], &[0.0], &lin).abs() < 1e-6);
        let sq = FnTest(|x: &[f64]| x[0] * x[0]);
        assert!((adjoint_l_on_delta(&[0.3], &[1.0], &[0.0], &sq) - 1.0).abs() < 1e-6);
        let sin = FnTest(|x: &[f64]| x[0].sin());
        assert!((adjoint_l_on_delta(&[0.0], &[1.0], &[1.0], &sin) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn coefficient_level_adjoint_action_converges() {
        let g = Gaussian::new(1.0, vec![0.2], 0.7);
        let (x, a, b) = (0.4, 1.3, -0.6);
        let exact = adjoint_l_on_delta(&[x], &[a], &[b], &g);
        let err = |n: usize| {
            let f = project(&|y: &[f64]| g.value(y), n, 1).unwrap();
            (pair(&f, &adjoint_l_delta_coeffs(x, a, b, n)).unwrap() - exact).abs()
        };
        let (e16, e48) = (err(16), err(48));
        assert!(e48 < e16, "{e16} -> {e48}");
        assert!(e48 < 1e-8);
    }

    #[test]
    fn two_dimensional_projection_and_delta() {
        let g = Gaussian::new(1.0, vec![0.3, -0.2], 0.9);
        let u = project(&|x: &[f64]| g.value(x), 40, 2).unwrap();
        assert_eq!(u.len(), 41 * 41);
        let v = pair(&u, &delta_coeffs(&[0.5, 0.1], 40)).unwrap();
        assert!((v - g.value(&[0.5, 0.1])).abs() < 1e-6);
        let moved = translate(&u, &[0.5, -0.5]).unwrap();
        let w = pair(&moved, &delta_coeffs(&[0.5, 0.1], 40)).unwrap();
        assert!((w - g.value(&[0.0, 0.6])).abs() < 1e-6);
    }

    #[test]
    fn json_and_csv_roundtrip() {
        let u = delta_coeffs(&[0.25], 6).with_regularity(-0.5);
        let back = HermiteState::from_json(&u.to_json().unwrap()).unwrap();
        assert_eq!(back, u);
        let text = u.to_json().unwrap();
        assert!(text.contains("\"N\": 6"));
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let csv_back = HermiteState::read_csv(buf.as_slice(), 6, 1, -0.5).unwrap();
        assert_eq!(csv_back, u);
    }
}
