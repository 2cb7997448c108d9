//! Scalar kernels of the fractional calculus used throughout the crate.
//!
//! The covariance density `phi_H(u) = H(2H-1)|u|^{2H-2}` has an integrable
//! singularity at the origin. Every integral that touches the diagonal is
//! evaluated through the exact antiderivatives below rather than through a
//! generic rule.

use alloc::vec::Vec;
use libm::{fabs, pow, sqrt, tgamma};

use crate::error::{Error, Result};
use crate::math::{gauss_legendre8, integrate};

/// Hurst exponent restricted to the long-memory regime `1/2 < H < 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "f64", into = "f64"))]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.5 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(Error::InvalidHurst(h))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `H(2H - 1)`, the prefactor of `phi_H`.
    #[inline]
    pub fn phi_scale(self) -> f64 {
        self.0 * (2.0 * self.0 - 1.0)
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<HurstParam> for f64 {
    fn from(h: HurstParam) -> f64 {
        h.0
    }
}

/// Order of a fractional integral or derivative, `0 < alpha < 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidOrder(alpha))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// A real function sampled on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::Shape(alloc::format!(
                "grid has {} points but {} values were given",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples on `0, h, 2h, ...`.
    pub fn uniform(step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidGrid("step must be positive".into()));
        }
        let grid = (0..values.len()).map(|i| i as f64 * step).collect();
        Self::new(grid, values)
    }

    pub fn from_fn<F: Fn(f64) -> f64>(step: f64, n_points: usize, f: F) -> Result<Self> {
        let values = (0..n_points).map(|i| f(i as f64 * step)).collect();
        Self::uniform(step, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Step of a uniform grid anchored at zero.
    pub fn uniform_step(&self) -> Result<f64> {
        if self.grid.len() < 2 {
            return Err(Error::InvalidGrid("need at least two samples".into()));
        }
        let h = self.grid[1] - self.grid[0];
        if fabs(self.grid[0]) > 1e-12 * h {
            return Err(Error::InvalidGrid("grid must start at 0".into()));
        }
        for (i, t) in self.grid.iter().enumerate() {
            if fabs(t - i as f64 * h) > 1e-9 * h * (1.0 + i as f64) {
                return Err(Error::NonUniformGrid);
            }
        }
        Ok(h)
    }
}

/// Covariance density `phi_H(u) = H(2H-1)|u|^{2H-2}`; undefined at `u = 0`.
pub fn phi(u: f64, h: HurstParam) -> Result<f64> {
    if u == 0.0 || !u.is_finite() {
        return Err(Error::Domain {
            what: "phi_H",
            value: u,
        });
    }
    Ok(h.phi_scale() * pow(fabs(u), 2.0 * h.value() - 2.0))
}

/// Exact `∫_a^b ∫_c^d phi_H(u - v) du dv`, i.e. the covariance of the fBm
/// increments over `[a, b]` and `[c, d]`.
pub fn phi_cell_integral(a: f64, b: f64, c: f64, d: f64, h: HurstParam) -> f64 {
    debug_assert!(a <= b && c <= d);
    if a == b || c == d {
        return 0.0;
    }
    let e = 2.0 * h.value();
    let p = |z: f64| pow(fabs(z), e);
    0.5 * (p(b - c) + p(a - d) - p(a - c) - p(b - d))
}

/// Exact `∫_{t0}^{t1} phi_H(t - theta) dtheta` for `t0 <= t1 <= t`.
pub fn phi_time_integral(t0: f64, t1: f64, t: f64, h: HurstParam) -> f64 {
    debug_assert!(t0 <= t1 && t1 <= t);
    let e = 2.0 * h.value() - 1.0;
    h.value() * (pow(t - t0, e) - pow(t - t1, e))
}

/// Riemann–Liouville integral `I^alpha f` by product integration.
///
/// `f` is interpolated piecewise linearly and `(t-s)^{alpha-1}` is integrated
/// exactly against each linear piece, so the rule is exact for linear `f`.
pub fn frac_integral(f: &SampledFunction, alpha: FracOrder) -> Result<SampledFunction> {
    let h = f.uniform_step()?;
    let a = alpha.value();
    let n = f.len();
    let vals = f.values();
    let pw: Vec<f64> = (0..n + 1).map(|k| pow(k as f64, a + 1.0)).collect();
    let scale = pow(h, a) / tgamma(a + 2.0);
    let mut out = Vec::with_capacity(n);
    out.push(0.0);
    for m in 1..n {
        let mf = m as f64;
        let mut acc = (pw[m - 1] - (mf - 1.0 - a) * pow(mf, a)) * vals[0];
        for (j, v) in vals.iter().enumerate().take(m).skip(1) {
            let k = m - j;
            acc += (pw[k + 1] - 2.0 * pw[k] + pw[k - 1]) * v;
        }
        acc += vals[m];
        out.push(scale * acc);
    }
    SampledFunction::new(f.grid().to_vec(), out)
}

/// Riemann–Liouville derivative `D^alpha f` for `f(0) = 0` (L1 scheme).
///
/// With `f(0) = 0` the Riemann–Liouville and Caputo derivatives coincide;
/// the derivative of the piecewise-linear interpolant is integrated exactly
/// against `(t-s)^{-alpha}`. Accuracy is `O(h^{2-alpha})` for `f` in `C^2`
/// and degrades for `f` whose first derivative is singular at the origin.
pub fn frac_derivative(f: &SampledFunction, alpha: FracOrder) -> Result<SampledFunction> {
    let h = f.uniform_step()?;
    let vals = f.values();
    let scale_ref = vals.iter().fold(0.0f64, |m, v| m.max(fabs(*v)));
    if fabs(vals[0]) > 1e-12 * (1.0 + scale_ref) {
        return Err(Error::NonZeroAtOrigin(vals[0]));
    }
    let a = alpha.value();
    let n = f.len();
    let b: Vec<f64> = (0..n)
        .map(|k| pow(k as f64 + 1.0, 1.0 - a) - pow(k as f64, 1.0 - a))
        .collect();
    let scale = pow(h, -a) / tgamma(2.0 - a);
    let diffs: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
    let mut out = Vec::with_capacity(n);
    out.push(0.0);
    for m in 1..n {
        let acc: f64 = (0..m).map(|j| b[m - 1 - j] * diffs[j]).sum();
        out.push(scale * acc);
    }
    SampledFunction::new(f.grid().to_vec(), out)
}

/// `∫_s^t (u-s)^{H-3/2} u^{H-1/2} du`, the smooth factor of the Volterra
/// kernel. The substitution `v = (u-s)^{H-1/2}` removes the endpoint
/// singularity at `u = s`.
pub(crate) fn kernel_shape(t: f64, s: f64, h: HurstParam) -> f64 {
    let a = h.value() - 0.5;
    if s <= 0.0 {
        return pow(t, 2.0 * a) / (2.0 * a);
    }
    let vmax = pow(t - s, a);
    let inv = 1.0 / a;
    integrate(|v| pow(s + pow(v, inv), a), 0.0, vmax, 0.0, 1e-12) / a
}

/// Volterra kernel `K(t, s) = c_H s^{1/2-H} ∫_s^t (u-s)^{H-3/2} u^{H-1/2} du`
/// of the representation `beta(t) = ∫_0^t K(t, s) dW(s)`.
pub fn volterra_kernel(t: f64, s: f64, h: HurstParam, c_h: f64) -> Result<f64> {
    if !(s > 0.0 && s < t) {
        return Err(Error::Domain {
            what: "Volterra kernel (need 0 < s < t)",
            value: s,
        });
    }
    Ok(c_h * pow(s, 0.5 - h.value()) * kernel_shape(t, s, h))
}

/// Literature normalisation `[H(2H-1) / B(2-2H, H-1/2)]^{1/2}`.
pub fn c_h_beta(h: HurstParam) -> f64 {
    let hv = h.value();
    let beta = tgamma(2.0 - 2.0 * hv) * tgamma(hv - 0.5) / tgamma(1.5 - hv);
    sqrt(h.phi_scale() / beta)
}

/// Normalising constant `c_H` making `∫_0^1 K(1, s)^2 ds = 1`.
///
/// The integral is split into `n` cells (at least 64). The two end cells
/// carry the singular behaviour (`s^{1-2H}` at the origin, `(1-s)^{2H-1}` at
/// the diagonal) and are integrated adaptively; interior cells use an
/// eight-point Gauss rule.
pub fn calibrate_c_h(h: HurstParam, n: usize) -> f64 {
    let n = n.max(64);
    let cell = 1.0 / n as f64;
    let e = 1.0 - 2.0 * h.value();
    let k2 = |s: f64| {
        let g = kernel_shape(1.0, s, h);
        pow(s, e) * g * g
    };
    let mut total = integrate(k2, 0.0, cell, 0.0, 1e-11);
    for j in 1..n - 1 {
        total += gauss_legendre8(k2, j as f64 * cell, (j + 1) as f64 * cell);
    }
    total += integrate(k2, 1.0 - cell, 1.0, 0.0, 1e-11);
    1.0 / sqrt(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    #[test]
    fn hurst_bounds_are_strict() {
        assert!(HurstParam::new(0.5).is_err());
        assert!(HurstParam::new(1.0).is_err());
        assert!(HurstParam::new(0.75).is_ok());
        assert!(FracOrder::new(0.0).is_err());
        assert!(FracOrder::new(1.0).is_err());
    }

    #[test]
    fn phi_values() {
        assert!((phi(1.0, hp(0.75)).unwrap() - 0.375).abs() < 1e-15);
        assert!((phi(-1.0, hp(0.75)).unwrap() - 0.375).abs() < 1e-15);
        assert!((phi(0.5, hp(0.75)).unwrap() - 0.530_330_085_9).abs() < 1e-10);
        assert!(matches!(phi(0.0, hp(0.75)), Err(Error::Domain { .. })));
    }

    #[test]
    fn cell_integral_examples() {
        let h = hp(0.75);
        assert!((phi_cell_integral(0.0, 1.0, 0.0, 1.0, h) - 1.0).abs() < 1e-15);
        assert!((phi_cell_integral(0.0, 1.0, 1.0, 2.0, h) - 0.5 * (2f64.powf(1.5) - 2.0)).abs() < 1e-15);
        assert_eq!(phi_cell_integral(0.0, 0.0, 0.3, 0.9, h), 0.0);
    }

    #[test]
    fn time_integral_examples() {
        let h = hp(0.75);
        assert!((phi_time_integral(0.0, 1.0, 1.0, h) - 0.75).abs() < 1e-15);
        assert_eq!(phi_time_integral(0.0, 0.0, 1.0, h), 0.0);
        assert!((phi_time_integral(0.0, 0.5, 1.0, h) - 0.219_669_9).abs() < 1e-7);
    }

    #[test]
    fn frac_integral_rejects_non_uniform_grid() {
        let f = SampledFunction::new(alloc::vec![0.0, 0.1, 0.3], alloc::vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            frac_integral(&f, FracOrder::new(0.5).unwrap()),
            Err(Error::NonUniformGrid)
        );
    }

    #[test]
    fn frac_derivative_requires_zero_at_origin() {
        let f = SampledFunction::uniform(0.1, alloc::vec![1.0, 1.1, 1.2]).unwrap();
        assert!(matches!(
            frac_derivative(&f, FracOrder::new(0.5).unwrap()),
            Err(Error::NonZeroAtOrigin(_))
        ));
    }

    #[test]
    fn volterra_kernel_domain() {
        let h = hp(0.7);
        assert!(volterra_kernel(1.0, 0.0, h, 1.0).is_err());
        assert!(volterra_kernel(1.0, 1.0, h, 1.0).is_err());
        assert!(volterra_kernel(1.0, 0.5, h, 1.0).unwrap() > 0.0);
    }
}
