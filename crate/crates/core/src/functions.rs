//! Scalar fields on `R^d`: test functions `f` paired against distributions
//! and potential functions `V̄` evaluated along trajectories.

use std::fmt;
use std::sync::Arc;

/// A real function on `R^d`, shareable across worker threads.
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Wraps a closure as a [`ScalarField`].
pub fn field<F>(f: F) -> ScalarField
where
    F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    Arc::new(f)
}

/// Step used for first-order central differences.
pub fn first_difference_step(x: &[f64]) -> f64 {
    1e-5 * (1.0 + crate::path_core::euclidean_norm(x))
}

/// Step used for second-order central differences. Larger than the
/// first-order step so that rounding stays near `ε^{1/2}`.
pub fn second_difference_step(x: &[f64]) -> f64 {
    1e-4 * (1.0 + crate::path_core::euclidean_norm(x))
}

/// A test function with (possibly numerical) first and second derivatives.
pub trait TestFunction: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// Gradient; defaults to central differences.
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let h = first_difference_step(x);
        let mut xp = x.to_vec();
        (0..x.len())
            .map(|i| {
                xp[i] = x[i] + h;
                let fp = self.value(&xp);
                xp[i] = x[i] - h;
                let fm = self.value(&xp);
                xp[i] = x[i];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    /// Row-major `d × d` Hessian; defaults to central differences.
    fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let h = second_difference_step(x);
        let f0 = self.value(x);
        let mut out = vec![0.0; d * d];
        let mut xp = x.to_vec();
        for i in 0..d {
            xp[i] = x[i] + h;
            let fp = self.value(&xp);
            xp[i] = x[i] - h;
            let fm = self.value(&xp);
            xp[i] = x[i];
            out[i * d + i] = (fp - 2.0 * f0 + fm) / (h * h);
            for j in 0..i {
                let mut corner = |si: f64, sj: f64| {
                    xp[i] = x[i] + si * h;
                    xp[j] = x[j] + sj * h;
                    let v = self.value(&xp);
                    xp[i] = x[i];
                    xp[j] = x[j];
                    v
                };
                let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                    + corner(-1.0, -1.0))
                    / (4.0 * h * h);
                out[i * d + j] = v;
                out[j * d + i] = v;
            }
        }
        out
    }
}

/// `amplitude · exp(−‖x − center‖² / (2 width²))`, with analytic derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

impl Gaussian {
    pub fn new(amplitude: f64, center: Vec<f64>, width: f64) -> Self {
        Gaussian {
            amplitude,
            center,
            width,
        }
    }

    /// Normal density with the given mean and variance on `R`.
    pub fn normal_density(mean: f64, variance: f64) -> Self {
        Gaussian::new(
            1.0 / (2.0 * std::f64::consts::PI * variance).sqrt(),
            vec![mean],
            variance.sqrt(),
        )
    }
}

impl TestFunction for Gaussian {
    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c).powi(2))
            .sum();
        self.amplitude * (-0.5 * r2 / (self.width * self.width)).exp()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let v = self.value(x);
        let s2 = self.width * self.width;
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| -(a - c) / s2 * v)
            .collect()
    }

    fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let v = self.value(x);
        let s2 = self.width * self.width;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let di = x[i] - self.center[i];
                let dj = x[j] - self.center[j];
                let delta = if i == j { 1.0 } else { 0.0 };
                out[i * d + j] = v * (di * dj / (s2 * s2) - delta / s2);
            }
        }
        out
    }
}

/// The constant function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl TestFunction for Constant {
    fn value(&self, _x: &[f64]) -> f64 {
        self.0
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }

    fn hessian(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len() * x.len()]
    }
}

/// Equals `level` on `|x|_∞ ≤ inner` and rolls off smoothly (C^∞) to zero at
/// `outer`. A compactly supported stand-in for a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothPlateau {
    pub level: f64,
    pub inner: f64,
    pub outer: f64,
}

impl SmoothPlateau {
    fn profile(&self, r: f64) -> f64 {
        // standard smooth step built from exp(-1/s)
        let g = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
        let s = ((self.outer - r.abs()) / (self.outer - self.inner)).clamp(0.0, 1.0);
        g(s) / (g(s) + g(1.0 - s))
    }
}

impl TestFunction for SmoothPlateau {
    fn value(&self, x: &[f64]) -> f64 {
        self.level * x.iter().map(|&xi| self.profile(xi)).product::<f64>()
    }
}

/// Adapts a closure into a [`TestFunction`] with numerical derivatives.
pub struct FnTest<F>(pub F);

impl<F> TestFunction for FnTest<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

impl<F> fmt::Debug for FnTest<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnTest(..)")
    }
}

impl TestFunction for ScalarField {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_derivatives_match_differences() {
        let g = Gaussian::new(1.3, vec![0.2, -0.4], 0.8);
        let x = [0.5, 0.1];
        let numeric = FnTest(|x: &[f64]| g.value(x));
        for (a, b) in g.gradient(&x).iter().zip(numeric.gradient(&x)) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in g.hessian(&x).iter().zip(numeric.hessian(&x)) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn plateau_is_flat_inside_and_zero_outside() {
        let p = SmoothPlateau {
            level: 1.0,
            inner: 2.0,
            outer: 3.0,
        };
        assert_eq!(p.value(&[1.9]), 1.0);
        assert_eq!(p.value(&[-3.5]), 0.0);
        let mid = p.value(&[2.5]);
        assert!((mid - 0.5).abs() < 1e-12);
    }
}
