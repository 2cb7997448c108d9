//! Checks of the no-arbitrage structure: the constant-expectation property
//! of discounted bond prices, the drift restriction behind it, and an
//! empirical probe of the small-oscillation event.

use alloc::vec::Vec;

use libm::{exp, fabs, log, pow, sqrt};

use crate::drift::{DriftEvaluator, DriftField, ProductRule};
use crate::error::{Error, Result};
use crate::fbm::{FbmPathSet, TimeGrid};
use crate::hjm::{BondSurface, InitialCurve};
use crate::kernel::HurstParam;
use crate::math::{integrate, pairwise_sum, simpson, trapezoid};
use crate::vol::VolatilitySpec;

/// Discounted prices `Z[i][m] = P(t_i, T_m) / S_0(t_i)` of path `p` from the
/// closed-form representation, in which the money account cancels:
///
/// ```text
/// log Z_t(T) = log P(0, T) - ∫_0^t I_alpha(s, T) ds - sum_j ∫_0^t I_{sigma^j}(s, T) dbeta^j_s
/// ```
///
/// `I_alpha` comes from the drift field (trapezoid in `x`), the time integral
/// is trapezoidal and the stochastic sum uses cell midpoints. Entries with
/// `T_m < t_i` are NaN.
pub fn closed_form_discounted(
    spec: &VolatilitySpec,
    drift: &DriftField,
    init: &InitialCurve,
    paths: &FbmPathSet,
    p: usize,
    mat_steps: usize,
) -> Result<Vec<f64>> {
    let tables = DiscountTables::new(spec, drift, init, paths.grid(), mat_steps)?;
    Ok(tables.path(paths, p))
}

/// Deterministic parts of [`closed_form_discounted`], shared by all paths.
#[derive(Debug, Clone)]
pub struct DiscountTables {
    t_grid: TimeGrid,
    mat_steps: usize,
    dims: usize,
    /// `log P(0, T_m) - ∫_0^{t_i} I_alpha(s, T_m) ds`, indexed `[m][i]`.
    deterministic: Vec<Vec<f64>>,
    /// `I_{sigma^j}(t_l + Delta/2, T_m)`, indexed `[j][m][l]`.
    exposure: Vec<Vec<Vec<f64>>>,
}

impl DiscountTables {
    pub fn new(
        spec: &VolatilitySpec,
        drift: &DriftField,
        init: &InitialCurve,
        t_grid: TimeGrid,
        mat_steps: usize,
    ) -> Result<Self> {
        let n = t_grid.n_steps();
        let dt = t_grid.step();
        if mat_steps > drift.x_grid().m_steps() || mat_steps >= init.len() {
            return Err(Error::InvalidGrid(
                "maturity beyond the drift or initial-curve grid".into(),
            ));
        }
        if drift.t_grid().n_steps() != n || fabs(drift.x_grid().step() - dt) > 1e-12 * dt {
            return Err(Error::InvalidGrid("drift field does not match the time grid".into()));
        }
        let deterministic = (0..=mat_steps)
            .map(|m| {
                let last = n.min(m);
                let i_alpha: Vec<f64> = (0..=last).map(|l| trapezoid(&drift.row(l)[..=m - l], dt)).collect();
                let mut acc = log(init.bond_price(m));
                let mut row = alloc::vec![acc];
                for i in 1..=last {
                    acc -= 0.5 * dt * (i_alpha[i - 1] + i_alpha[i]);
                    row.push(acc);
                }
                row
            })
            .collect();
        let exposure = (0..spec.dims())
            .map(|j| {
                (0..=mat_steps)
                    .map(|m| {
                        let t_mat = m as f64 * dt;
                        (0..n.min(m))
                            .map(|l| spec.i_sigma(j, (l as f64 + 0.5) * dt, t_mat))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            t_grid,
            mat_steps,
            dims: spec.dims(),
            deterministic,
            exposure,
        })
    }

    pub fn mat_steps(&self) -> usize {
        self.mat_steps
    }

    /// `sum_j sum_{l<i} I_{sigma^j}(t_l + Delta/2, T_m) Delta beta^j_l`; the
    /// centred Gaussian exponent of `Z_{t_i}(T_m)`.
    pub fn exposure(&self, paths: &FbmPathSet, p: usize, i: usize, m: usize) -> f64 {
        let width = self.dims * (self.t_grid.n_steps() + 1);
        self.exposure_of(&paths.samples()[p * width..(p + 1) * width], i, m)
    }

    /// [`Self::exposure`] for a single path block of `d x (n+1)` values.
    pub fn exposure_of(&self, block: &[f64], i: usize, m: usize) -> f64 {
        let stride = self.t_grid.n_steps() + 1;
        let mut acc = 0.0;
        for j in 0..self.dims {
            let path = &block[j * stride..(j + 1) * stride];
            let w = &self.exposure[j][m];
            for l in 0..i {
                acc += w[l] * (path[l + 1] - path[l]);
            }
        }
        acc
    }

    /// `Z_{t_i}(T_m)` for a single path block; `exposure` as returned by
    /// [`Self::exposure_of`].
    pub fn value_from_exposure(&self, i: usize, m: usize, exposure: f64) -> f64 {
        exp(self.deterministic[m][i] - exposure)
    }

    /// `(n+1) x (mat_steps+1)` block of discounted prices for path `p`.
    pub fn path(&self, paths: &FbmPathSet, p: usize) -> Vec<f64> {
        let n = self.t_grid.n_steps();
        let w = self.mat_steps + 1;
        let mut block = alloc::vec![f64::NAN; (n + 1) * w];
        for m in 0..=self.mat_steps {
            let mut noise = 0.0;
            for i in 0..=n.min(m) {
                if i > 0 {
                    for j in 0..self.dims {
                        let path = paths.path(p, j);
                        noise += self.exposure[j][m][i - 1] * (path[i] - path[i - 1]);
                    }
                }
                block[i * w + m] = exp(self.deterministic[m][i] - noise);
            }
        }
        block
    }
}

/// One `(t, T)` entry of the quasi-martingale check.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuasiMartingaleEntry {
    pub t: f64,
    pub maturity: f64,
    /// `P(0, T)`, the constant the expectation must keep.
    pub target: f64,
    /// `P(0, T) exp(-∫_0^t I_alpha(s, T) ds + ∫_0^t e(s, T) ds)`.
    pub analytic: f64,
    /// `|∫_0^t I_alpha(s, T) ds - ∫_0^t e(s, T) ds|`.
    pub identity_gap: f64,
    pub mc_mean: f64,
    pub std_error: f64,
    /// `(mc_mean - target) / std_error`, zero when both vanish.
    pub z_score: f64,
    /// Whether `mc_mean` used the Gaussian exponent as a control variate.
    pub control_variate: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuasiMartingaleReport {
    pub n_paths: usize,
    pub entries: Vec<QuasiMartingaleEntry>,
}

impl QuasiMartingaleReport {
    pub fn count_exceeding(&self, z: f64) -> usize {
        self.entries.iter().filter(|e| fabs(e.z_score) > z).count()
    }
}

/// Sample mean and its standard error, both by pairwise reduction.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if xs.iter().all(|x| *x == xs[0]) {
        return (xs[0], 0.0);
    }
    let mean = pairwise_sum(xs) / n as f64;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, sqrt(var / n as f64))
}

/// Control-variate mean of `y` with a zero-mean control `c`:
/// `mean(y) - b mean(c)` with `b` the fitted regression slope. The standard
/// error is that of the regression residual.
pub fn control_variate_mean(y: &[f64], c: &[f64]) -> (f64, f64) {
    let n = y.len();
    if n < 3 {
        return mean_and_se(y);
    }
    let (my, _) = mean_and_se(y);
    let (mc, _) = mean_and_se(c);
    let cov: Vec<f64> = y.iter().zip(c).map(|(a, b)| (a - my) * (b - mc)).collect();
    let var: Vec<f64> = c.iter().map(|b| (b - mc) * (b - mc)).collect();
    let sxx = pairwise_sum(&var);
    if sxx <= 0.0 {
        return mean_and_se(y);
    }
    let beta = pairwise_sum(&cov) / sxx;
    let est = my - beta * mc;
    let resid: Vec<f64> = y
        .iter()
        .zip(c)
        .map(|(a, b)| {
            let r = a - my - beta * (b - mc);
            r * r
        })
        .collect();
    let s2 = pairwise_sum(&resid) / (n - 2) as f64;
    (est, sqrt(s2 * (1.0 / n as f64 + mc * mc / sxx)))
}

/// `∫_0^t I_alpha(s, T) ds` with `I_alpha(s, T) = ∫_0^{T-s} S_H sigma(s, x) dx`.
///
/// `I_alpha(s, T)` behaves like `s^{2H-1}` at the origin, so the outer
/// integral uses `s = t w^{1/(2H)}`; the inner one is composite Simpson.
pub fn integrated_drift_exposure(spec: &VolatilitySpec, h: HurstParam, t: f64, t_mat: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let eval = DriftEvaluator::new(spec, h, crate::drift::DEFAULT_CELLS);
    let p = 1.0 / (2.0 * h.value());
    integrate(
        |w| {
            let s = t * pow(w, p);
            drift_maturity_integral(&eval, s, t_mat, 128) * t * p * pow(w, p - 1.0)
        },
        0.0,
        1.0,
        1e-15,
        1e-11,
    )
}

/// `∫_0^{T-t} S_H sigma(t, x) dx` by composite Simpson on `cells` cells.
fn drift_maturity_integral(eval: &DriftEvaluator<'_>, t: f64, t_mat: f64, cells: usize) -> f64 {
    let len = t_mat - t;
    if len <= 0.0 {
        return 0.0;
    }
    let dx = len / cells as f64;
    let vals: Vec<f64> = (0..=cells).map(|k| eval.eval(t, k as f64 * dx)).collect();
    simpson(&vals, dx)
}

/// Compares Monte Carlo means of discounted prices with `P(0, T)`.
///
/// `pairs` holds grid indices `(i, m)` with `t_i <= T_m`. When `controls`
/// is given, `controls[q][p]` must be the centred Gaussian exponent of path
/// `p` for pair `q` (see [`DiscountTables::exposure`]); the mean then uses
/// it as a control variate, which removes the leading-order noise and leaves
/// any bias in the mean exposed at a far smaller standard error.
pub fn check_quasi_martingale(
    discounted: &BondSurface,
    spec: &VolatilitySpec,
    h: HurstParam,
    init: &InitialCurve,
    pairs: &[(usize, usize)],
    controls: Option<&[Vec<f64>]>,
) -> Result<QuasiMartingaleReport> {
    for &(i, m) in pairs {
        if discounted.n_paths() == 0 || discounted.get(0, i, m).is_none() {
            return Err(Error::InvalidParameter(alloc::format!(
                "pair ({i}, {m}) lies below the diagonal"
            )));
        }
    }
    let samples: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(i, m)| (0..discounted.n_paths()).map(|p| discounted.value(p, i, m)).collect())
        .collect();
    quasi_martingale_from_samples(&discounted.t_grid(), spec, h, init, pairs, &samples, controls)
}

/// [`check_quasi_martingale`] on per-pair samples `samples[q][p] = Z_{t_i}(T_m)`,
/// for runs that never hold a full surface in memory.
pub fn quasi_martingale_from_samples(
    grid: &TimeGrid,
    spec: &VolatilitySpec,
    h: HurstParam,
    init: &InitialCurve,
    pairs: &[(usize, usize)],
    samples: &[Vec<f64>],
    controls: Option<&[Vec<f64>]>,
) -> Result<QuasiMartingaleReport> {
    let n_paths = samples.first().map_or(0, Vec::len);
    if samples.len() != pairs.len() || samples.iter().any(|v| v.len() != n_paths) {
        return Err(Error::Shape("one sample per path and pair is required".into()));
    }
    if let Some(c) = controls {
        if c.len() != pairs.len() || c.iter().any(|v| v.len() != n_paths) {
            return Err(Error::Shape("one control value per path and pair is required".into()));
        }
    }
    let dt = grid.step();
    let mut entries = Vec::with_capacity(pairs.len());
    for (q, &(i, m)) in pairs.iter().enumerate() {
        if m < i || i > grid.n_steps() || m >= init.len() {
            return Err(Error::InvalidParameter(alloc::format!(
                "pair ({i}, {m}) is outside the grid"
            )));
        }
        let t = grid.point(i);
        let t_mat = m as f64 * dt;
        let target = init.bond_price(m);
        let ys = &samples[q];
        let (mc_mean, std_error) = match controls {
            Some(c) if i > 0 => control_variate_mean(ys, &c[q]),
            _ => mean_and_se(ys),
        };
        let drift_part = integrated_drift_exposure(spec, h, t, t_mat);
        let y_part = crate::drift::log_expectation(spec, h, t, t_mat);
        let diff = mc_mean - target;
        let z_score = if std_error > 0.0 {
            diff / std_error
        } else if fabs(diff) <= 1e-14 * target {
            0.0
        } else {
            libm::copysign(f64::INFINITY, diff)
        };
        entries.push(QuasiMartingaleEntry {
            t,
            maturity: t_mat,
            target,
            analytic: target * exp(-drift_part + y_part),
            identity_gap: fabs(drift_part - y_part),
            mc_mean,
            std_error,
            z_score,
            control_variate: controls.is_some() && i > 0,
        });
    }
    Ok(QuasiMartingaleReport { n_paths, entries })
}

/// `max_i |I_{S_H sigma}(t_i, T) - e(t_i, T)|` over grid times `t_i <= T`.
///
/// The maturity integral is composite Simpson on the time step of the
/// grid; both `theta`-integrals use the product rule with
/// `max(128, 2n)` cells.
pub fn drift_identity_check(spec: &VolatilitySpec, h: HurstParam, t_grid: &TimeGrid, t_mat: f64) -> f64 {
    let cells = DriftField::cells_for(t_grid);
    let eval = DriftEvaluator::new(spec, h, cells);
    let rule = ProductRule::new(h, cells);
    let dt = t_grid.step();
    let mut worst: f64 = 0.0;
    for i in 0..=t_grid.n_steps() {
        let t = t_grid.point(i);
        if t > t_mat {
            break;
        }
        let len = t_mat - t;
        let x_cells = libm::ceil(len / dt - 1e-9).max(0.0) as usize;
        let lhs = if x_cells == 0 {
            0.0
        } else {
            let dx = len / x_cells as f64;
            let vals: Vec<f64> = (0..=x_cells).map(|k| eval.eval(t, k as f64 * dx)).collect();
            simpson(&vals, dx)
        };
        let rhs: f64 = (0..spec.dims())
            .map(|j| spec.i_sigma(j, t, t_mat) * rule.integrate(t, |th| spec.i_sigma(j, th, t_mat)))
            .sum();
        worst = worst.max(fabs(lhs - rhs));
    }
    worst
}

/// Empirical frequency of `sup_{tau <= t <= T <= T*} |Z_tau(tau)/Z_t(T) - 1| < k`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OscillationReport {
    pub k: f64,
    pub taus: Vec<f64>,
    pub frequencies: Vec<f64>,
}

/// Per-path largest oscillation `sup |Z_tau(tau)/Z_t(T) - 1|` from grid time `tau_idx`.
pub fn max_oscillation(discounted: &BondSurface, p: usize, tau_idx: usize) -> f64 {
    let last = discounted.t_grid().n_steps().min(discounted.mat_steps());
    let anchor = discounted.value(p, tau_idx, tau_idx);
    let mut worst: f64 = 0.0;
    for i in tau_idx..=last {
        for m in i..=last {
            worst = worst.max(fabs(anchor / discounted.value(p, i, m) - 1.0));
        }
    }
    worst
}

pub fn oscillation_probe(discounted: &BondSurface, k: f64, taus: &[usize]) -> Result<OscillationReport> {
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "oscillation threshold must be positive, got {k}"
        )));
    }
    let grid = discounted.t_grid();
    let last = grid.n_steps().min(discounted.mat_steps());
    if let Some(bad) = taus.iter().find(|t| **t >= last) {
        return Err(Error::InvalidParameter(alloc::format!(
            "tau index {bad} is not before the horizon"
        )));
    }
    let n_paths = discounted.n_paths();
    let frequencies = taus
        .iter()
        .map(|&tau| {
            let hits = (0..n_paths)
                .filter(|&p| max_oscillation(discounted, p, tau) < k)
                .count();
            hits as f64 / n_paths as f64
        })
        .collect();
    Ok(OscillationReport {
        k,
        taus: taus.iter().map(|t| grid.point(*t)).collect(),
        frequencies,
    })
}
