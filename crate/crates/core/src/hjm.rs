//! Forward-rate, bond-price and money-account surfaces.
//!
//! Time and time-to-maturity share one step `Delta`, so every node
//! `(t_i, x_k)` sits on the maturity date `T = t_{i+k}` and the shift
//! semigroup moves values along the diagonals of the grid. For the mild
//! solution
//!
//! ```text
//! r_{t_i}(x_k) = r_0(t_i + x_k) + ∫_0^{t_i} S_H sigma(s, x_k + t_i - s) ds
//!              + sum_j ∫_0^{t_i} sigma^j(s, x_k + t_i - s) dbeta^j_s
//! ```
//!
//! the drift integral uses the trapezoid rule on the grid and the stochastic
//! sums evaluate the deterministic integrand at the cell midpoint against the
//! path increment.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, log};

use crate::drift::DriftField;
use crate::error::{Error, Result};
use crate::fbm::{FbmPathSet, TimeGrid};
use crate::math::trapezoid;
use crate::vol::{MaturityGrid, VolatilitySpec};

/// Relative tolerance for matching the time and maturity steps.
const STEP_TOL: f64 = 1e-12;

/// Initial forward curve `r_0(y)` on `y_q = q Delta`, `q = 0..len-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCurve {
    step: f64,
    values: Vec<f64>,
}

impl InitialCurve {
    pub fn new(step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || values.len() < 2 {
            return Err(Error::InvalidGrid(
                "initial curve needs a positive step and two values".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "initial curve contains a non-finite value".into(),
            ));
        }
        Ok(Self { step, values })
    }

    /// Samples `f` on the extended grid `[0, T* + x_max]` of the two grids.
    pub fn from_fn<F: Fn(f64) -> f64>(t_grid: &TimeGrid, x_grid: &MaturityGrid, f: F) -> Result<Self> {
        check_steps(t_grid, x_grid)?;
        let len = t_grid.n_steps() + x_grid.m_steps() + 1;
        let step = t_grid.step();
        Self::new(step, (0..len).map(|q| f(q as f64 * step)).collect())
    }

    pub fn flat(t_grid: &TimeGrid, x_grid: &MaturityGrid, rate: f64) -> Result<Self> {
        Self::from_fn(t_grid, x_grid, |_| rate)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, q: usize) -> f64 {
        self.values[q]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `P(0, T_m) = exp(-∫_0^{T_m} r_0)` by the trapezoid rule.
    pub fn bond_price(&self, m: usize) -> f64 {
        exp(-trapezoid(&self.values[..=m], self.step))
    }
}

fn check_steps(t_grid: &TimeGrid, x_grid: &MaturityGrid) -> Result<()> {
    let (dt, dx) = (t_grid.step(), x_grid.step());
    if fabs(dt - dx) > STEP_TOL * dt {
        return Err(Error::InvalidGrid(alloc::format!(
            "time step {dt} and maturity step {dx} must coincide"
        )));
    }
    Ok(())
}

/// `r[p][i][k] = r_{t_i}(x_k)` for every path.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSurface {
    t_grid: TimeGrid,
    x_grid: MaturityGrid,
    n_paths: usize,
    values: Vec<f64>,
}

impl ForwardSurface {
    pub fn from_paths(t_grid: TimeGrid, x_grid: MaturityGrid, paths: Vec<Vec<f64>>) -> Result<Self> {
        let width = (t_grid.n_steps() + 1) * (x_grid.m_steps() + 1);
        if paths.iter().any(|p| p.len() != width) {
            return Err(Error::Shape("each forward path must be (n+1) x (m+1)".into()));
        }
        let n_paths = paths.len();
        Ok(Self {
            t_grid,
            x_grid,
            n_paths,
            values: paths.into_iter().flatten().collect(),
        })
    }

    pub fn t_grid(&self) -> TimeGrid {
        self.t_grid
    }

    pub fn x_grid(&self) -> MaturityGrid {
        self.x_grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    fn width(&self) -> usize {
        (self.t_grid.n_steps() + 1) * (self.x_grid.m_steps() + 1)
    }

    /// Curve `x_k -> r_{t_i}(x_k)` of path `p`.
    pub fn curve(&self, p: usize, i: usize) -> &[f64] {
        let m1 = self.x_grid.m_steps() + 1;
        let start = p * self.width() + i * m1;
        &self.values[start..start + m1]
    }

    pub fn value(&self, p: usize, i: usize, k: usize) -> f64 {
        self.curve(p, i)[k]
    }

    /// Short rate `r_{t_i}(0)` along path `p`.
    pub fn short_rate(&self, p: usize) -> Vec<f64> {
        (0..=self.t_grid.n_steps()).map(|i| self.value(p, i, 0)).collect()
    }
}

/// Deterministic ingredients of the forward simulation, shared by all paths.
#[derive(Debug, Clone)]
pub struct ForwardSimulator {
    t_grid: TimeGrid,
    x_grid: MaturityGrid,
    dims: usize,
    /// `init[D] + ∫_0^{t_i} S_H sigma(s, t_D - s) ds`, indexed `[i][D]`.
    deterministic: Vec<Vec<f64>>,
    /// `sigma^j(t_l + Delta/2, q Delta - Delta/2)`, indexed `[j][l][q]`.
    vol: Vec<Vec<Vec<f64>>>,
}

impl ForwardSimulator {
    pub fn new(
        spec: &VolatilitySpec,
        drift: &DriftField,
        init: &InitialCurve,
        t_grid: TimeGrid,
        x_grid: MaturityGrid,
    ) -> Result<Self> {
        check_steps(&t_grid, &x_grid)?;
        let n = t_grid.n_steps();
        let m = x_grid.m_steps();
        let dates = n + m + 1;
        if init.len() < dates || fabs(init.step() - t_grid.step()) > STEP_TOL * t_grid.step() {
            return Err(Error::InvalidGrid(
                "initial curve must cover [0, T* + x_max] on the time step".into(),
            ));
        }
        let dg = drift.t_grid();
        if dg.n_steps() != n || fabs(dg.t_star() - t_grid.t_star()) > STEP_TOL * t_grid.t_star() {
            return Err(Error::InvalidGrid(
                "drift field time grid differs from the simulation grid".into(),
            ));
        }
        let dxg = drift.x_grid();
        check_steps(&t_grid, &dxg)?;
        if dxg.m_steps() < n + m {
            return Err(Error::InvalidGrid(
                "drift field must cover maturities up to T* + x_max".into(),
            ));
        }
        let dt = t_grid.step();
        let mut deterministic = vec![vec![0.0; dates]; n + 1];
        deterministic[0][..dates].copy_from_slice(&init.values()[..dates]);
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            for d in i + 1..dates {
                let inc = 0.5 * dt * (drift.value(i, d - i) + drift.value(i + 1, d - i - 1));
                deterministic[i + 1][d] = deterministic[i][d] + inc;
            }
        }
        let vol = (0..spec.dims())
            .map(|j| {
                (0..n)
                    .map(|l| {
                        let s = (l as f64 + 0.5) * dt;
                        (0..dates - l)
                            .map(|q| {
                                if q == 0 {
                                    0.0
                                } else {
                                    spec.eval_flat(j, s, (q as f64 - 0.5) * dt)
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            t_grid,
            x_grid,
            dims: spec.dims(),
            deterministic,
            vol,
        })
    }

    pub fn t_grid(&self) -> TimeGrid {
        self.t_grid
    }

    pub fn x_grid(&self) -> MaturityGrid {
        self.x_grid
    }

    /// Forward surface `(n+1) x (m+1)` of path `p`, row-major in `(i, k)`.
    pub fn simulate_path(&self, paths: &FbmPathSet, p: usize) -> Vec<f64> {
        let n = self.t_grid.n_steps();
        let m = self.x_grid.m_steps();
        let dates = n + m + 1;
        let mut noise = vec![0.0; dates];
        let mut out = Vec::with_capacity((n + 1) * (m + 1));
        for i in 0..=n {
            for k in 0..=m {
                out.push(self.deterministic[i][i + k] + noise[i + k]);
            }
            if i == n {
                break;
            }
            for j in 0..self.dims {
                let path = paths.path(p, j);
                let db = path[i + 1] - path[i];
                let row = &self.vol[j][i];
                for d in i + 1..dates {
                    noise[d] += row[d - i] * db;
                }
            }
        }
        out
    }
}

/// Simulates the forward-rate surface for every path of `paths`.
pub fn simulate_forward(
    spec: &VolatilitySpec,
    drift: &DriftField,
    init: &InitialCurve,
    paths: &FbmPathSet,
    x_grid: MaturityGrid,
) -> Result<ForwardSurface> {
    if paths.dims() != spec.dims() {
        return Err(Error::Shape(alloc::format!(
            "{} fBm components for {} volatility factors",
            paths.dims(),
            spec.dims()
        )));
    }
    let sim = ForwardSimulator::new(spec, drift, init, paths.grid(), x_grid)?;
    let out = (0..paths.n_paths()).map(|p| sim.simulate_path(paths, p)).collect();
    ForwardSurface::from_paths(paths.grid(), x_grid, out)
}

/// Prices `P[p][i][m] = P(t_i, T_m)`, `T_m = m Delta`, stored on a rectangle
/// and defined only on `t_i <= T_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BondSurface {
    t_grid: TimeGrid,
    mat_steps: usize,
    n_paths: usize,
    values: Vec<f64>,
}

impl BondSurface {
    pub fn from_paths(t_grid: TimeGrid, mat_steps: usize, paths: Vec<Vec<f64>>) -> Result<Self> {
        let width = (t_grid.n_steps() + 1) * (mat_steps + 1);
        if paths.iter().any(|p| p.len() != width) {
            return Err(Error::Shape("each bond path must be (n+1) x (mat_steps+1)".into()));
        }
        let n_paths = paths.len();
        Ok(Self {
            t_grid,
            mat_steps,
            n_paths,
            values: paths.into_iter().flatten().collect(),
        })
    }

    pub fn t_grid(&self) -> TimeGrid {
        self.t_grid
    }

    pub fn mat_steps(&self) -> usize {
        self.mat_steps
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn maturity(&self, m: usize) -> f64 {
        m as f64 * self.t_grid.step()
    }

    fn index(&self, p: usize, i: usize, m: usize) -> usize {
        (p * (self.t_grid.n_steps() + 1) + i) * (self.mat_steps + 1) + m
    }

    /// `P(t_i, T_m)`, or `None` when `T_m < t_i`.
    pub fn get(&self, p: usize, i: usize, m: usize) -> Option<f64> {
        if m < i || i > self.t_grid.n_steps() || m > self.mat_steps {
            None
        } else {
            Some(self.values[self.index(p, i, m)])
        }
    }

    /// Unchecked access on `Delta^2`; panics outside it.
    pub fn value(&self, p: usize, i: usize, m: usize) -> f64 {
        self.get(p, i, m).expect("bond surface queried below the diagonal")
    }

    /// Block of path `p`, rows `i`, columns `m`; entries below the diagonal are NaN.
    pub fn path_block(&self, p: usize) -> &[f64] {
        let w = (self.t_grid.n_steps() + 1) * (self.mat_steps + 1);
        &self.values[p * w..(p + 1) * w]
    }
}

/// `P(t_i, T_m) = exp(-∫_0^{T_m - t_i} r_{t_i}(x) dx)` by the trapezoid rule,
/// for maturities `T_m = m Delta`, `m <= mat_steps`.
pub fn bond_surface(surface: &ForwardSurface, mat_steps: usize) -> Result<BondSurface> {
    if mat_steps > surface.x_grid().m_steps() {
        return Err(Error::InvalidGrid(alloc::format!(
            "maturity index {mat_steps} needs time to maturity beyond x_max"
        )));
    }
    let t_grid = surface.t_grid();
    let n = t_grid.n_steps();
    let dx = surface.x_grid().step();
    let paths = (0..surface.n_paths())
        .map(|p| {
            let mut block = vec![f64::NAN; (n + 1) * (mat_steps + 1)];
            for i in 0..=n {
                let curve = surface.curve(p, i);
                let mut acc = 0.0;
                for m in i..=mat_steps {
                    let k = m - i;
                    if k > 0 {
                        acc += 0.5 * dx * (curve[k - 1] + curve[k]);
                    }
                    block[i * (mat_steps + 1) + m] = exp(-acc);
                }
            }
            block
        })
        .collect();
    BondSurface::from_paths(t_grid, mat_steps, paths)
}

/// `S_0(t_i) = exp(∫_0^{t_i} r_s(0) ds)` per path, trapezoid in time.
pub fn money_account(surface: &ForwardSurface) -> Vec<Vec<f64>> {
    let dt = surface.t_grid().step();
    (0..surface.n_paths())
        .map(|p| {
            let r = surface.short_rate(p);
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(r.len());
            out.push(1.0);
            for i in 1..r.len() {
                acc += 0.5 * dt * (r[i - 1] + r[i]);
                out.push(exp(acc));
            }
            out
        })
        .collect()
}

/// `Z_t(T) = P(t, T) / S_0(t)`.
pub fn discounted_surface(bonds: &BondSurface, account: &[Vec<f64>]) -> Result<BondSurface> {
    let n = bonds.t_grid().n_steps();
    if account.len() != bonds.n_paths() || account.iter().any(|a| a.len() != n + 1) {
        return Err(Error::Shape("money account does not match the bond surface".into()));
    }
    let w = bonds.mat_steps() + 1;
    let paths = (0..bonds.n_paths())
        .map(|p| {
            bonds
                .path_block(p)
                .iter()
                .enumerate()
                .map(|(idx, v)| v / account[p][idx / w])
                .collect()
        })
        .collect();
    BondSurface::from_paths(bonds.t_grid(), bonds.mat_steps(), paths)
}

/// Bond prices of path `p` from the closed-form representation
///
/// ```text
/// P(t, T) = P(0, T) exp{ ∫_0^t [r_s(0) - I_alpha(s, T)] ds - sum_j ∫_0^t I_{sigma^j}(s, T) dbeta^j_s }
/// ```
///
/// with `alpha` the drift field, the short rate taken from `surface`, time
/// integrals by the trapezoid rule and the stochastic sum at cell midpoints.
pub fn closed_form_bond(
    spec: &VolatilitySpec,
    drift: &DriftField,
    init: &InitialCurve,
    paths: &FbmPathSet,
    surface: &ForwardSurface,
    p: usize,
    mat_steps: usize,
) -> Result<BondSurface> {
    let t_grid = surface.t_grid();
    let n = t_grid.n_steps();
    let dt = t_grid.step();
    if mat_steps > drift.x_grid().m_steps() || mat_steps >= init.len() {
        return Err(Error::InvalidGrid(
            "maturity beyond the drift or initial-curve grid".into(),
        ));
    }
    let short = surface.short_rate(p);
    let mut block = vec![f64::NAN; (n + 1) * (mat_steps + 1)];
    for m in 0..=mat_steps {
        let t_mat = m as f64 * dt;
        let p0 = init.bond_price(m);
        // I_alpha(t_l, T_m) for l = 0..=min(n, m).
        let last = n.min(m);
        let i_alpha: Vec<f64> = (0..=last).map(|l| trapezoid(&drift.row(l)[..=m - l], dt)).collect();
        let mut log_p = log(p0);
        block[m] = p0;
        for i in 1..=last {
            let s_mid = (i as f64 - 0.5) * dt;
            log_p += 0.5 * dt * (short[i - 1] + short[i]) - 0.5 * dt * (i_alpha[i - 1] + i_alpha[i]);
            for j in 0..spec.dims() {
                let path = paths.path(p, j);
                log_p -= spec.i_sigma(j, s_mid, t_mat) * (path[i] - path[i - 1]);
            }
            block[i * (mat_steps + 1) + m] = exp(log_p);
        }
    }
    BondSurface::from_paths(t_grid, mat_steps, alloc::vec![block])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::generate_cholesky;
    use crate::kernel::HurstParam;

    #[test]
    fn rejects_mismatched_steps() {
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let xg = MaturityGrid::new(1.0, 20).unwrap();
        assert!(InitialCurve::flat(&tg, &xg, 0.03).is_err());
    }

    #[test]
    fn zero_model_is_a_pure_shift() {
        let tg = TimeGrid::new(1.0, 8).unwrap();
        let xg = MaturityGrid::new(1.0, 8).unwrap();
        let spec = VolatilitySpec::ho_lee(0.0001).unwrap();
        let init = InitialCurve::from_fn(&tg, &xg, |y| 0.02 + 0.01 * y).unwrap();
        let drift = DriftField::zeros(tg, MaturityGrid::new(2.0, 16).unwrap());
        let paths = generate_cholesky(tg, 1, 2, HurstParam::new(0.7).unwrap(), 1).unwrap();
        let zero_paths = FbmPathSet::from_paths(tg, 1, vec![vec![0.0; 9]; 2], 0, paths.method(), None).unwrap();
        let surf = simulate_forward(&spec, &drift, &init, &zero_paths, xg).unwrap();
        for i in 0..=8 {
            for k in 0..=8 {
                assert_eq!(surf.value(1, i, k), init.value(i + k));
            }
        }
    }
}
