//! Uniform-grid representation of continuous paths with values in a
//! finite-dimensional Hilbert space.
//!
//! A [`GridPath`] stores one vector of fixed dimension per grid point. Norms
//! are Euclidean; the running sup norm `‖y‖_s = sup_{u ≤ s} ‖y(u)‖` is the
//! path-space norm used throughout the crate.
//!
//! Killed paths carry a lifetime index: the first grid index at which the
//! path is dead. Reads at or past that index fail with
//! [`Error::Lifetime`]. A non-finite coordinate marks the path dead at the
//! first offending row.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Tolerance, in units of grid steps, for deciding that a time is on the grid.
const GRID_SNAP: f64 = 1e-7;

/// A discretized path `y : [t0, T] → R^m` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    t0: f64,
    dt: f64,
    dim: usize,
    data: Vec<f64>,
    lifetime: Option<usize>,
}

/// Borrowed prefix (or whole) of a [`GridPath`].
///
/// Potentials receive a view ending at the evaluation time, so they cannot
/// read the future of the path.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    t0: f64,
    dt: f64,
    dim: usize,
    data: &'a [f64],
}

impl<'a> PathView<'a> {
    pub fn new(t0: f64, dt: f64, dim: usize, data: &'a [f64]) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "view data of length {} is not a non-empty multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(PathView { t0, dt, dim, data })
    }

    pub(crate) fn raw(t0: f64, dt: f64, dim: usize, data: &'a [f64]) -> Self {
        debug_assert!(dim > 0 && !data.is_empty() && data.len().is_multiple_of(dim));
        PathView { t0, dt, dim, data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn final_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn point(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Value at the last grid point of the view.
    pub fn last(&self) -> &'a [f64] {
        self.point(self.len() - 1)
    }

    pub fn as_slice(&self) -> &'a [f64] {
        self.data
    }

    /// Shorter prefix of this view ending at index `i` (inclusive).
    pub fn prefix(&self, i: usize) -> PathView<'a> {
        PathView {
            data: &self.data[..(i + 1) * self.dim],
            ..*self
        }
    }

    pub fn to_path(&self) -> GridPath {
        GridPath {
            t0: self.t0,
            dt: self.dt,
            dim: self.dim,
            data: self.data.to_vec(),
            lifetime: None,
        }
    }
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl GridPath {
    /// Builds a path from row-major data (`len × dim`).
    ///
    /// The lifetime is set to the first row holding a non-finite coordinate.
    pub fn new(t0: f64, dt: f64, dim: usize, data: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Range(format!(
                "grid step must be positive and finite, got {dt}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::Range(format!("start time must be finite, got {t0}")));
        }
        if dim == 0 {
            return Err(Error::Shape("dimension must be positive".into()));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "data of length {} is not a non-empty multiple of dimension {dim}",
                data.len()
            )));
        }
        let lifetime = data
            .chunks(dim)
            .position(|row| row.iter().any(|v| !v.is_finite()));
        Ok(GridPath {
            t0,
            dt,
            dim,
            data,
            lifetime,
        })
    }

    pub fn from_rows(t0: f64, dt: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("rows have differing dimensions".into()));
        }
        GridPath::new(t0, dt, dim, rows.concat())
    }

    /// Samples `f(t, out)` at `steps + 1` grid points starting from `t0`.
    pub fn sample<F>(t0: f64, dt: f64, steps: usize, dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64, &mut [f64]),
    {
        let mut data = vec![0.0; (steps + 1) * dim];
        for (i, row) in data.chunks_mut(dim.max(1)).enumerate() {
            f(t0 + i as f64 * dt, row);
        }
        GridPath::new(t0, dt, dim, data)
    }

    /// Scalar path sampled from `f(t)`.
    pub fn scalar<F: Fn(f64) -> f64>(t0: f64, dt: f64, steps: usize, f: F) -> Result<Self> {
        GridPath::sample(t0, dt, steps, 1, |t, out| out[0] = f(t))
    }

    pub fn constant(t0: f64, dt: f64, steps: usize, value: &[f64]) -> Result<Self> {
        GridPath::sample(t0, dt, steps, value.len(), |_, out| {
            out.copy_from_slice(value)
        })
    }

    /// Marks the path dead from index `idx` (keeps an earlier lifetime if present).
    pub fn with_lifetime(mut self, idx: usize) -> Self {
        if idx < self.len() {
            self.lifetime = Some(self.lifetime.map_or(idx, |l| l.min(idx)));
        }
        self
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Number of grid steps, `len − 1`.
    pub fn steps(&self) -> usize {
        self.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn final_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// First dead index, if the path is killed before its final time.
    pub fn lifetime(&self) -> Option<usize> {
        self.lifetime
    }

    /// Number of leading alive grid points.
    pub fn alive_len(&self) -> usize {
        self.lifetime.unwrap_or(self.len())
    }

    pub fn is_alive_at(&self, i: usize) -> bool {
        i < self.alive_len()
    }

    /// Raw access to row `i`, ignoring the lifetime.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row `i`, refusing to read a dead state.
    pub fn alive_point(&self, i: usize) -> Result<&[f64]> {
        self.check_alive(i)?;
        Ok(self.point(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn check_alive(&self, i: usize) -> Result<()> {
        match self.lifetime {
            Some(l) if i >= l => Err(Error::Lifetime {
                lifetime: l,
                time: self.time(l),
                requested: i,
            }),
            _ => Ok(()),
        }
    }

    /// Index of the grid point at or below time `s`.
    pub fn index_at_or_below(&self, s: f64) -> Result<usize> {
        let x = (s - self.t0) / self.dt;
        if !(x >= -GRID_SNAP) || x > self.steps() as f64 + GRID_SNAP {
            return Err(Error::Range(format!(
                "time {s} outside [{}, {}]",
                self.t0,
                self.final_time()
            )));
        }
        let k = (x + GRID_SNAP).floor().max(0.0) as usize;
        Ok(k.min(self.steps()))
    }

    /// Index of the grid point equal to `s`; errors when `s` is off the grid.
    pub fn grid_index(&self, s: f64) -> Result<usize> {
        let k = self.index_at_or_below(s)?;
        let x = (s - self.t0) / self.dt;
        if (x - k as f64).abs() > GRID_SNAP {
            return Err(Error::Range(format!(
                "time {s} is not on the grid (dt = {})",
                self.dt
            )));
        }
        Ok(k)
    }

    /// Full view of the path including any dead tail.
    pub fn view(&self) -> PathView<'_> {
        PathView {
            t0: self.t0,
            dt: self.dt,
            dim: self.dim,
            data: &self.data,
        }
    }

    /// View of the prefix ending at index `i` (inclusive).
    pub fn prefix(&self, i: usize) -> PathView<'_> {
        PathView {
            t0: self.t0,
            dt: self.dt,
            dim: self.dim,
            data: &self.data[..(i + 1) * self.dim],
        }
    }

    /// Running sup norm `‖y‖_s`, with `s` snapped down to the grid.
    pub fn sup_norm(&self, s: f64) -> Result<f64> {
        let k = self.index_at_or_below(s)?;
        self.sup_norm_index(k)
    }

    pub fn sup_norm_index(&self, k: usize) -> Result<f64> {
        self.check_alive(k)?;
        Ok((0..=k)
            .map(|i| euclidean_norm(self.point(i)))
            .fold(0.0, f64::max))
    }

    /// Prefix of the path up to the on-grid time `s`.
    pub fn restrict(&self, s: f64) -> Result<GridPath> {
        let k = self.grid_index(s)?;
        Ok(self.restrict_index(k))
    }

    pub fn restrict_index(&self, k: usize) -> GridPath {
        GridPath {
            t0: self.t0,
            dt: self.dt,
            dim: self.dim,
            data: self.data[..(k + 1) * self.dim].to_vec(),
            lifetime: self.lifetime.filter(|&l| l <= k),
        }
    }

    /// Linear interpolation at an arbitrary time in `[t0, T]`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let k = self.index_at_or_below(t)?;
        let frac = ((t - self.time(k)) / self.dt).clamp(0.0, 1.0);
        if k == self.steps() || frac == 0.0 {
            return Ok(self.alive_point(k)?.to_vec());
        }
        let a = self.alive_point(k)?;
        let b = self.alive_point(k + 1)?;
        Ok(a.iter().zip(b).map(|(x, y)| x + frac * (y - x)).collect())
    }

    fn check_same_grid(&self, other: &GridPath) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::Shape(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        if (self.dt - other.dt).abs() > 1e-12 * self.dt.abs() {
            return Err(Error::Shape(format!(
                "grid step mismatch: {} vs {}",
                self.dt, other.dt
            )));
        }
        Ok(())
    }

    /// Pointwise combination `f(a, b)` of two paths on the same grid.
    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &GridPath, f: F) -> Result<GridPath> {
        self.check_same_grid(other)?;
        if self.len() != other.len() || (self.t0 - other.t0).abs() > GRID_SNAP * self.dt {
            return Err(Error::Shape(format!(
                "paths cover different grids: {} points from {} vs {} points from {}",
                self.len(),
                self.t0,
                other.len(),
                other.t0
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| f(*a, *b))
            .collect();
        let mut out = GridPath::new(self.t0, self.dt, self.dim, data)?;
        for l in [self.lifetime, other.lifetime].into_iter().flatten() {
            out = out.with_lifetime(l);
        }
        Ok(out)
    }

    /// `self − other` on a common grid.
    pub fn sub(&self, other: &GridPath) -> Result<GridPath> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Sup over the whole alive grid of `‖self(t) − other(t)‖`.
    pub fn sup_distance(&self, other: &GridPath) -> Result<f64> {
        let d = self.sub(other)?;
        d.sup_norm_index(d.steps())
    }

    /// The concatenation `y1 ⋄ y2` on `[t0, T]`.
    ///
    /// Equals `y1` on `[t0, t1]`, the increment of `y2` re-anchored at `y1(t1)`
    /// on `(t1, t1 + t2]`, and the constant `y2(t2) − y2(0) + y1(t1)` after
    /// that. `t2` is the duration of `y2`.
    pub fn concat(y1: &GridPath, y2: &GridPath, end: f64) -> Result<GridPath> {
        y1.check_same_grid(y2)?;
        let n1 = y1.steps();
        let n2 = y2.steps();
        let x = (end - y1.t0) / y1.dt;
        let total = x.round();
        if (x - total).abs() > GRID_SNAP || total < 0.0 {
            return Err(Error::Range(format!("end time {end} is not on the grid")));
        }
        let total = total as usize;
        if n2 == 0 || n1 + n2 >= total {
            return Err(Error::Range(format!(
                "concatenation needs t1 < t1 + t2 < T; got t1 = {}, t2 = {}, T = {}",
                n1 as f64 * y1.dt,
                n2 as f64 * y2.dt,
                end - y1.t0
            )));
        }
        y1.check_alive(n1)?;
        y2.check_alive(n2)?;
        let dim = y1.dim;
        let mut data = Vec::with_capacity((total + 1) * dim);
        data.extend_from_slice(&y1.data);
        let anchor = y1.point(n1);
        let base = y2.point(0);
        for j in 1..=n2 {
            paste_increment(anchor, base, y2.point(j), &mut data);
        }
        let tail_start = data.len() - dim;
        for _ in n1 + n2 + 1..=total {
            data.extend_from_within(tail_start..tail_start + dim);
        }
        GridPath::new(y1.t0, y1.dt, dim, data)
    }

    /// Writes `t,v0,...,v{m-1}` CSV rows with 17 significant digits.
    /// Rows at or after the lifetime are written as NaN.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim).map(|k| format!("v{k}")));
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![format_f64(self.time(i))];
            if self.is_alive_at(i) {
                rec.extend(self.point(i).iter().map(|v| format_f64(*v)));
            } else {
                rec.extend(std::iter::repeat_n("NaN".to_string(), self.dim));
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<GridPath> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("t") || headers.len() < 2 {
            return Err(Error::Format("expected header `t,v0,...`".into()));
        }
        let dim = headers.len() - 1;
        let mut times = Vec::new();
        let mut data = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != dim + 1 {
                return Err(Error::Format("ragged CSV row".into()));
            }
            let mut row = rec.iter().map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad number {s:?}: {e}")))
            });
            times.push(row.next().unwrap()?);
            for v in row {
                data.push(v?);
            }
        }
        if times.is_empty() {
            return Err(Error::Format("no rows".into()));
        }
        let dt = if times.len() > 1 {
            times[1] - times[0]
        } else {
            1.0
        };
        for (i, t) in times.iter().enumerate() {
            let expect = times[0] + i as f64 * dt;
            if (t - expect).abs() > 1e-9 * dt.abs().max(1.0) {
                return Err(Error::Format(format!("non-uniform time grid at row {i}")));
            }
        }
        GridPath::new(times[0], dt, dim, data)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<GridPath> {
        GridPath::read_csv(std::fs::File::open(path)?)
    }
}

/// Appends `anchor + (value − base)` to `out`.
pub(crate) fn paste_increment(anchor: &[f64], base: &[f64], value: &[f64], out: &mut Vec<f64>) {
    out.extend(
        anchor
            .iter()
            .zip(base)
            .zip(value)
            .map(|((a, b), v)| v - b + a),
    );
}

/// Scientific form with 17 significant digits, which round-trips exactly.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}
