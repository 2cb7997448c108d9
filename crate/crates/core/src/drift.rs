//! The no-arbitrage drift functional
//!
//! ```text
//! S_H sigma(t, x) = sum_j  sigma^j(t, x)        ∫_0^t I_{sigma^j}(theta, x + t) phi_H(t - theta) dtheta
//!                        + I_{sigma^j}(t, t + x) ∫_0^t sigma^j(theta, x + t - theta) phi_H(t - theta) dtheta
//! ```
//!
//! its Ho–Lee and Hull–White closed forms, the expectation kernel
//! `e(t, T)` with its time integral, and the market price of risk.
//!
//! All `theta`-integrals against `phi_H(t - theta)` go through
//! [`ProductRule`]: the smooth factor is interpolated quadratically on
//! Simpson panels and each panel is integrated exactly against the kernel,
//! so the `(t - theta)^{2H-2}` singularity never meets a sampling rule.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, pow};

use crate::error::{Error, Result};
use crate::fbm::TimeGrid;
use crate::kernel::HurstParam;
use crate::math::{gauss_legendre8, integrate, weighted_least_squares};
use crate::vol::{MaturityGrid, VolFactor, VolatilitySpec};

/// Product-integration weights for `∫_0^t g(theta) phi_H(t - theta) dtheta`
/// on `cells` equal cells (rounded up to an even count).
///
/// The weights for horizon `t` are `t^{2H-1}` times the weights for `t = 1`,
/// so they are computed once.
#[derive(Debug, Clone)]
pub struct ProductRule {
    h: HurstParam,
    unit: Vec<f64>,
}

impl ProductRule {
    pub fn new(h: HurstParam, cells: usize) -> Self {
        let m = (cells.max(2) + 1) & !1;
        let step = 1.0 / m as f64;
        let hv = h.value();
        let c = h.phi_scale();
        let e = 2.0 * hv - 2.0;
        let mut unit = vec![0.0; m + 1];
        for p in 0..m / 2 {
            let u1 = (2 * p + 1) as f64 * step;
            let (m0, m1, m2) = if p + 1 == m / 2 {
                // Panel touching the singularity: w = 1 - u, v = u - u1 = step - w.
                let l = 2.0 * step;
                let j0 = pow(l, e + 1.0) / (e + 1.0);
                let j1 = pow(l, e + 2.0) / (e + 2.0);
                let j2 = pow(l, e + 3.0) / (e + 3.0);
                (
                    c * j0,
                    c * (step * j0 - j1),
                    c * (step * step * j0 - 2.0 * step * j1 + j2),
                )
            } else {
                let lo = u1 - step;
                let hi = u1 + step;
                let ker = |u: f64| c * pow(1.0 - u, e);
                (
                    gauss_legendre8(ker, lo, hi),
                    gauss_legendre8(|u| (u - u1) * ker(u), lo, hi),
                    gauss_legendre8(|u| (u - u1) * (u - u1) * ker(u), lo, hi),
                )
            };
            let s2 = step * step;
            unit[2 * p] += (m2 - step * m1) / (2.0 * s2);
            unit[2 * p + 1] += m0 - m2 / s2;
            unit[2 * p + 2] += (m2 + step * m1) / (2.0 * s2);
        }
        Self { h, unit }
    }

    pub fn cells(&self) -> usize {
        self.unit.len() - 1
    }

    /// Weights for horizon `t` at nodes `theta_i = i t / cells`.
    pub fn weights(&self, t: f64) -> Vec<f64> {
        let s = pow(t, 2.0 * self.h.value() - 1.0);
        self.unit.iter().map(|w| w * s).collect()
    }

    /// `∫_0^t g(theta) phi_H(t - theta) dtheta`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, t: f64, g: F) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let m = self.cells();
        let dt = t / m as f64;
        let acc: f64 = self
            .unit
            .iter()
            .enumerate()
            .map(|(i, w)| w * g(if i == m { t } else { i as f64 * dt }))
            .sum();
        acc * pow(t, 2.0 * self.h.value() - 1.0)
    }
}

/// Default cell count for point evaluations.
pub const DEFAULT_CELLS: usize = 128;

/// Evaluator of `S_H sigma` that reuses one set of product weights.
#[derive(Debug, Clone)]
pub struct DriftEvaluator<'a> {
    spec: &'a VolatilitySpec,
    rule: ProductRule,
}

impl<'a> DriftEvaluator<'a> {
    pub fn new(spec: &'a VolatilitySpec, h: HurstParam, cells: usize) -> Self {
        Self {
            spec,
            rule: ProductRule::new(h, cells),
        }
    }

    pub fn rule(&self) -> &ProductRule {
        &self.rule
    }

    /// `S_H sigma(t, x)`.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let spec = self.spec;
        (0..spec.dims())
            .map(|j| {
                let a = self.rule.integrate(t, |th| spec.i_sigma(j, th, x + t));
                let b = self.rule.integrate(t, |th| spec.eval_flat(j, th, x + t - th));
                spec.eval_flat(j, t, x) * a + spec.i_sigma(j, t, t + x) * b
            })
            .sum()
    }

    /// `S_H sigma(t, x_k)` over a whole maturity grid.
    pub fn eval_row(&self, t: f64, x_grid: &MaturityGrid) -> Vec<f64> {
        (0..=x_grid.m_steps()).map(|k| self.eval(t, x_grid.point(k))).collect()
    }
}

/// `S_H sigma(t, x)` with `cells` product-integration cells.
pub fn drift_at(spec: &VolatilitySpec, h: HurstParam, t: f64, x: f64, cells: usize) -> f64 {
    DriftEvaluator::new(spec, h, cells).eval(t, x)
}

/// `S_H sigma` tabulated on a `(t, x)` grid; row `i` is time `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    t_grid: TimeGrid,
    x_grid: MaturityGrid,
    values: Vec<Vec<f64>>,
    extrapolated: bool,
}

impl DriftField {
    /// Evaluates `S_H sigma` with `max(128, 2n)` product cells per node.
    pub fn compute(spec: &VolatilitySpec, h: HurstParam, t_grid: TimeGrid, x_grid: MaturityGrid) -> Self {
        let eval = DriftEvaluator::new(spec, h, Self::cells_for(&t_grid));
        let values = (0..=t_grid.n_steps())
            .map(|i| {
                if i == 0 {
                    vec![0.0; x_grid.m_steps() + 1]
                } else {
                    eval.eval_row(t_grid.point(i), &x_grid)
                }
            })
            .collect();
        Self {
            t_grid,
            x_grid,
            values,
            extrapolated: Self::needs_extrapolation(spec, &t_grid, &x_grid),
        }
    }

    pub fn cells_for(t_grid: &TimeGrid) -> usize {
        (2 * t_grid.n_steps()).max(128)
    }

    /// Whether a tabulated factor had to be extended flat to cover the
    /// arguments `(theta, x + t - theta)` the functional needs.
    pub fn needs_extrapolation(spec: &VolatilitySpec, t_grid: &TimeGrid, x_grid: &MaturityGrid) -> bool {
        let t = t_grid.t_star();
        spec.extrapolates(0.0, 0.0) || spec.extrapolates(t, x_grid.x_max() + t)
    }

    pub fn from_rows(
        t_grid: TimeGrid,
        x_grid: MaturityGrid,
        values: Vec<Vec<f64>>,
        extrapolated: bool,
    ) -> Result<Self> {
        if values.len() != t_grid.n_steps() + 1 || values.iter().any(|r| r.len() != x_grid.m_steps() + 1) {
            return Err(Error::Shape("drift values must be (n+1) x (m+1)".into()));
        }
        Ok(Self {
            t_grid,
            x_grid,
            values,
            extrapolated,
        })
    }

    pub fn zeros(t_grid: TimeGrid, x_grid: MaturityGrid) -> Self {
        let values = vec![vec![0.0; x_grid.m_steps() + 1]; t_grid.n_steps() + 1];
        Self {
            t_grid,
            x_grid,
            values,
            extrapolated: false,
        }
    }

    pub fn t_grid(&self) -> TimeGrid {
        self.t_grid
    }

    pub fn x_grid(&self) -> MaturityGrid {
        self.x_grid
    }

    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.values[i][k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn extrapolated(&self) -> bool {
        self.extrapolated
    }
}

/// Ho–Lee drift `sigma^2 (2 x H t^{2H-1} + (H - 1/2) t^{2H})`.
pub fn drift_holee(sigma: f64, h: HurstParam, t: f64, x: f64) -> f64 {
    let hv = h.value();
    sigma * sigma * (2.0 * x * hv * pow(t, 2.0 * hv - 1.0) + (hv - 0.5) * pow(t, 2.0 * hv))
}

/// `J(t) = ∫_0^t e^{-alpha u} phi_H(u) du`.
///
/// With `u = w^{1/(2H-1)}` the integrand becomes `H exp(-alpha u(w))`, which
/// is bounded and smooth.
pub fn hullwhite_j(alpha: f64, h: HurstParam, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let hv = h.value();
    let inv = 1.0 / (2.0 * hv - 1.0);
    hv * integrate(|w| exp(-alpha * pow(w, inv)), 0.0, pow(t, 2.0 * hv - 1.0), 0.0, 1e-14)
}

/// Hull–White drift
/// `(sigma^2/alpha) e^{-alpha x} (H t^{2H-1} + J(t)) - (2 sigma^2/alpha) e^{-2 alpha x} J(t)`.
pub fn drift_hullwhite(sigma: f64, alpha: f64, h: HurstParam, t: f64, x: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let (e1, e2) = hullwhite_terms(sigma, alpha, h, t);
    e1 * exp(-alpha * x) + e2 * exp(-2.0 * alpha * x)
}

/// Coefficients of `e^{-alpha x}` and `e^{-2 alpha x}` in the Hull–White drift.
pub fn hullwhite_terms(sigma: f64, alpha: f64, h: HurstParam, t: f64) -> (f64, f64) {
    let j = hullwhite_j(alpha, h, t);
    let s2a = sigma * sigma / alpha;
    (s2a * (h.value() * pow(t, 2.0 * h.value() - 1.0) + j), -2.0 * s2a * j)
}

/// Closed-form drift where every factor is Ho–Lee or Hull–White.
pub fn drift_closed_form(spec: &VolatilitySpec, h: HurstParam, t: f64, x: f64) -> Option<f64> {
    spec.factors()
        .iter()
        .map(|f| match f {
            VolFactor::HoLee { sigma } => Some(drift_holee(*sigma, h, t, x)),
            VolFactor::HullWhite { sigma, alpha } => Some(drift_hullwhite(*sigma, *alpha, h, t, x)),
            VolFactor::Tabulated(_) => None,
        })
        .sum()
}

/// `e(t, T) = sum_j I_{sigma^j}(t, T) ∫_0^t I_{sigma^j}(theta, T) phi_H(t - theta) dtheta`.
pub fn expectation_kernel(spec: &VolatilitySpec, h: HurstParam, t: f64, t_mat: f64) -> f64 {
    expectation_kernel_with(&ProductRule::new(h, DEFAULT_CELLS), spec, t, t_mat)
}

fn expectation_kernel_with(rule: &ProductRule, spec: &VolatilitySpec, t: f64, t_mat: f64) -> f64 {
    (0..spec.dims())
        .map(|j| spec.i_sigma(j, t, t_mat) * rule.integrate(t, |th| spec.i_sigma(j, th, t_mat)))
        .sum()
}

/// `∫_0^t e(s, T) ds`, the logarithm of the expectation factor `y(t, T)`.
///
/// Near `s = 0` the kernel behaves like `s^{2H-1}`; the substitution
/// `s = t w^{1/(2H)}` turns that into a bounded integrand for the adaptive
/// rule.
pub fn log_expectation(spec: &VolatilitySpec, h: HurstParam, t: f64, t_mat: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let rule = ProductRule::new(h, DEFAULT_CELLS);
    let p = 1.0 / (2.0 * h.value());
    integrate(
        |w| {
            let s = t * pow(w, p);
            expectation_kernel_with(&rule, spec, s, t_mat) * t * p * pow(w, p - 1.0)
        },
        0.0,
        1.0,
        1e-15,
        1e-12,
    )
}

/// Least-squares solution of `sum_j gamma^j sigma^j(t, .) = S_H sigma_t - alpha_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPriceOfRisk {
    pub gamma: Vec<f64>,
    /// Trapezoid-weighted `L^2` norm of the residual over the maturity grid.
    pub residual: f64,
    pub rank: usize,
}

/// Market price of risk at grid time `t_i` of `alpha_field`.
pub fn solve_market_price_of_risk(
    spec: &VolatilitySpec,
    h: HurstParam,
    alpha_field: &DriftField,
    i: usize,
) -> Result<MarketPriceOfRisk> {
    let tg = alpha_field.t_grid();
    let xg = alpha_field.x_grid();
    if i > tg.n_steps() {
        return Err(Error::InvalidParameter(alloc::format!(
            "time index {i} beyond the grid"
        )));
    }
    let t = tg.point(i);
    let eval = DriftEvaluator::new(spec, h, DriftField::cells_for(&tg));
    let xs = xg.points();
    let target: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(k, x)| eval.eval(t, *x) - alpha_field.value(i, k))
        .collect();
    let columns: Vec<Vec<f64>> = (0..spec.dims())
        .map(|j| xs.iter().map(|x| spec.eval_flat(j, t, *x)).collect())
        .collect();
    let dx = xg.step();
    let weights: Vec<f64> = (0..xs.len())
        .map(|k| if k == 0 || k + 1 == xs.len() { 0.5 * dx } else { dx })
        .collect();
    let fit = weighted_least_squares(&columns, &target, &weights);
    Ok(MarketPriceOfRisk {
        gamma: fit.coefficients,
        residual: fit.residual_norm,
        rank: fit.rank,
    })
}
