//! Fractional Brownian motion sample paths.
//!
//! Three generators share one output type: an exact Cholesky sampler, a
//! Volterra discretisation driven by Brownian increments, and the polygonal
//! approximation obtained by smoothing that driver on a coarser partition.
//!
//! Every path draws from its own ChaCha8 stream, keyed by the root seed and
//! selected by `(generator tag, path index)`. Path `p` is therefore the same
//! whether one path or a million are drawn and in whatever order.

use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, pow, sqrt};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel::{calibrate_c_h, kernel_shape, phi_cell_integral, HurstParam};

const TAG_CHOLESKY: u64 = 1 << 56;
const TAG_BROWNIAN: u64 = 2 << 56;

/// Grid size used when fixing `c_H` for the Volterra generators.
const C_H_CELLS: usize = 1024;

/// Largest grid the dense Cholesky sampler accepts.
pub const MAX_CHOLESKY_STEPS: usize = 4096;

/// Per-path random stream.
pub fn path_rng(seed: u64, tag: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag | path);
    rng
}

/// Uniform partition `t_i = i T*/n` of `[0, T*]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TimeGrid {
    t_star: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_star: f64, n_steps: usize) -> Result<Self> {
        if !(t_star > 0.0 && t_star.is_finite()) {
            return Err(Error::InvalidGrid(alloc::format!(
                "horizon must be positive, got {t_star}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("need at least one step".into()));
        }
        Ok(Self { t_star, n_steps })
    }

    pub fn t_star(&self) -> f64 {
        self.t_star
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step(&self) -> f64 {
        self.t_star / self.n_steps as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_star
        } else {
            i as f64 * self.step()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.point(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FbmMethod {
    Cholesky,
    Volterra,
    Polygonal,
}

/// `n_paths x d x (n+1)` samples of a d-dimensional fBm, `beta_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPathSet {
    grid: TimeGrid,
    dims: usize,
    n_paths: usize,
    samples: Vec<f64>,
    seed: u64,
    method: FbmMethod,
    jitter: Option<f64>,
}

impl FbmPathSet {
    /// Assembles a path set from per-path blocks of `d x (n+1)` values, as
    /// produced by the `sample_path` methods of the samplers.
    pub fn from_paths(
        grid: TimeGrid,
        dims: usize,
        paths: Vec<Vec<f64>>,
        seed: u64,
        method: FbmMethod,
        jitter: Option<f64>,
    ) -> Result<Self> {
        let width = dims * (grid.n_steps() + 1);
        if paths.iter().any(|p| p.len() != width) {
            return Err(Error::Shape(alloc::format!("each path must hold {width} values")));
        }
        let n_paths = paths.len();
        let samples = paths.into_iter().flatten().collect();
        Ok(Self {
            grid,
            dims,
            n_paths,
            samples,
            seed,
            method,
            jitter,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn method(&self) -> FbmMethod {
        self.method
    }

    /// Diagonal jitter added to the Gram matrix, if the plain factorisation failed.
    pub fn jitter(&self) -> Option<f64> {
        self.jitter
    }

    /// Values of component `j` of path `p` on the grid.
    pub fn path(&self, p: usize, j: usize) -> &[f64] {
        let n1 = self.grid.n_steps() + 1;
        let start = (p * self.dims + j) * n1;
        &self.samples[start..start + n1]
    }

    pub fn value(&self, p: usize, j: usize, i: usize) -> f64 {
        self.path(p, j)[i]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// Covariance `E[beta_s beta_t] = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2`.
pub fn fbm_covariance(s: f64, t: f64, h: HurstParam) -> f64 {
    let e = 2.0 * h.value();
    0.5 * (pow(s, e) + pow(t, e) - pow(fabs(t - s), e))
}

/// Gram matrix of `(beta_{t_1}, ..., beta_{t_n})`.
pub fn gram_matrix(grid: &TimeGrid, h: HurstParam) -> DMatrix<f64> {
    let n = grid.n_steps();
    DMatrix::from_fn(n, n, |i, j| fbm_covariance(grid.point(i + 1), grid.point(j + 1), h))
}

/// Exact sampler: `beta = L z` with `L L^T` the Gram matrix.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    grid: TimeGrid,
    lower: DMatrix<f64>,
    jitter: Option<f64>,
}

impl CholeskySampler {
    pub fn new(grid: TimeGrid, h: HurstParam) -> Result<Self> {
        if grid.n_steps() > MAX_CHOLESKY_STEPS {
            return Err(Error::InvalidGrid(alloc::format!(
                "Cholesky sampler supports at most {MAX_CHOLESKY_STEPS} steps"
            )));
        }
        let gram = gram_matrix(&grid, h);
        if let Some(c) = gram.clone().cholesky() {
            return Ok(Self {
                grid,
                lower: c.l(),
                jitter: None,
            });
        }
        let jitter = 1e-12;
        let n = gram.nrows();
        let c = (gram + DMatrix::identity(n, n) * jitter)
            .cholesky()
            .ok_or_else(|| Error::Factorization("Gram matrix not positive definite after jitter".into()))?;
        Ok(Self {
            grid,
            lower: c.l(),
            jitter: Some(jitter),
        })
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn jitter(&self) -> Option<f64> {
        self.jitter
    }

    /// `d x (n+1)` values for path `p`.
    pub fn sample_path(&self, dims: usize, seed: u64, p: u64) -> Vec<f64> {
        let n = self.grid.n_steps();
        let mut rng = path_rng(seed, TAG_CHOLESKY, p);
        let mut out = vec![0.0; dims * (n + 1)];
        let mut z = vec![0.0; n];
        for j in 0..dims {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let row = &mut out[j * (n + 1)..(j + 1) * (n + 1)];
            for i in 0..n {
                let mut acc = 0.0;
                for (k, zk) in z.iter().enumerate().take(i + 1) {
                    acc += self.lower[(i, k)] * zk;
                }
                row[i + 1] = acc;
            }
        }
        out
    }
}

pub fn generate_cholesky(grid: TimeGrid, dims: usize, n_paths: usize, h: HurstParam, seed: u64) -> Result<FbmPathSet> {
    check_counts(dims, n_paths)?;
    let sampler = CholeskySampler::new(grid, h)?;
    let paths = (0..n_paths as u64)
        .map(|p| sampler.sample_path(dims, seed, p))
        .collect();
    FbmPathSet::from_paths(grid, dims, paths, seed, FbmMethod::Cholesky, sampler.jitter())
}

fn check_counts(dims: usize, n_paths: usize) -> Result<()> {
    if dims == 0 || n_paths == 0 {
        return Err(Error::InvalidParameter("dims and n_paths must be at least 1".into()));
    }
    Ok(())
}

/// Increments `Delta W` of a d-dimensional Brownian motion on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianDriver {
    grid: TimeGrid,
    dims: usize,
    n_paths: usize,
    increments: Vec<f64>,
    seed: u64,
}

impl BrownianDriver {
    pub fn generate(grid: TimeGrid, dims: usize, n_paths: usize, seed: u64) -> Result<Self> {
        check_counts(dims, n_paths)?;
        let increments = (0..n_paths as u64)
            .flat_map(|p| brownian_path_increments(&grid, dims, seed, p))
            .collect();
        Ok(Self {
            grid,
            dims,
            n_paths,
            increments,
            seed,
        })
    }

    /// Wraps externally supplied increments laid out as `n_paths x d x n`.
    pub fn from_increments(
        grid: TimeGrid,
        dims: usize,
        n_paths: usize,
        increments: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        check_counts(dims, n_paths)?;
        if increments.len() != n_paths * dims * grid.n_steps() {
            return Err(Error::Shape("increments must be n_paths x dims x n_steps".into()));
        }
        Ok(Self {
            grid,
            dims,
            n_paths,
            increments,
            seed,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn increments(&self, p: usize, j: usize) -> &[f64] {
        let n = self.grid.n_steps();
        let start = (p * self.dims + j) * n;
        &self.increments[start..start + n]
    }
}

/// `d x n` Brownian increments of path `p`.
pub fn brownian_path_increments(grid: &TimeGrid, dims: usize, seed: u64, p: u64) -> Vec<f64> {
    let sd = sqrt(grid.step());
    let mut rng = path_rng(seed, TAG_BROWNIAN, p);
    (0..dims * grid.n_steps())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect()
}

/// Lower-triangular weights `w[k][j]` with `beta(t_k) = sum_{j<k} w[k][j] Delta W_j`.
///
/// Cells away from the origin use the kernel at the cell midpoint. On the
/// first cell `K(t, s)` behaves like `s^{1/2-H}`, whose square the midpoint
/// value underestimates by a factor that does not vanish with the step; there
/// the weight is chosen so that its square matches the exact second moment of
/// that factor over the cell.
#[derive(Debug, Clone)]
pub struct VolterraWeights {
    grid: TimeGrid,
    c_h: f64,
    rows: Vec<Vec<f64>>,
}

impl VolterraWeights {
    pub fn new(grid: TimeGrid, h: HurstParam) -> Self {
        Self::with_constant(grid, h, calibrate_c_h(h, C_H_CELLS))
    }

    pub fn with_constant(grid: TimeGrid, h: HurstParam, c_h: f64) -> Self {
        let n = grid.n_steps();
        let dt = grid.step();
        let hv = h.value();
        let origin = c_h * sqrt(pow(dt, 1.0 - 2.0 * hv) / (2.0 - 2.0 * hv));
        let rows = (0..=n)
            .map(|k| {
                let t = grid.point(k);
                (0..k)
                    .map(|j| {
                        let s = (j as f64 + 0.5) * dt;
                        let g = kernel_shape(t, s, h);
                        if j == 0 {
                            origin * g
                        } else {
                            c_h * pow(s, 0.5 - hv) * g
                        }
                    })
                    .collect()
            })
            .collect();
        Self { grid, c_h, rows }
    }

    pub fn c_h(&self) -> f64 {
        self.c_h
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    /// Path values on the grid from one component's increments.
    pub fn apply(&self, increments: &[f64]) -> Vec<f64> {
        debug_assert_eq!(increments.len(), self.grid.n_steps());
        self.rows
            .iter()
            .map(|r| r.iter().zip(increments).map(|(w, dw)| w * dw).sum())
            .collect()
    }
}

pub fn generate_volterra(driver: &BrownianDriver, h: HurstParam) -> FbmPathSet {
    let weights = VolterraWeights::new(driver.grid(), h);
    let paths = (0..driver.n_paths())
        .map(|p| {
            (0..driver.dims())
                .flat_map(|j| weights.apply(driver.increments(p, j)))
                .collect()
        })
        .collect();
    FbmPathSet {
        grid: driver.grid(),
        dims: driver.dims(),
        n_paths: driver.n_paths(),
        samples: flatten(paths),
        seed: driver.seed(),
        method: FbmMethod::Volterra,
        jitter: None,
    }
}

fn flatten(paths: Vec<Vec<f64>>) -> Vec<f64> {
    paths.into_iter().flatten().collect()
}

/// Weights of the polygonal approximation on a partition whose mesh is
/// `coarse_factor` fine steps.
///
/// On each coarse cell the smoothed driver has constant derivative
/// `Delta W_c / |Pi|`, so `beta_Pi(t_k) = sum_c P[k][c] Delta W_c` with
/// `P[k][c] = |Pi|^{-1} ∫_{cell c, s < t_k} K(t_k, s) ds`. The kernel
/// integral over each fine cell uses the same cell rule as
/// [`VolterraWeights`], so a factor of one reproduces the Volterra paths.
#[derive(Debug, Clone)]
pub struct PolygonalWeights {
    grid: TimeGrid,
    coarse_factor: usize,
    rows: Vec<Vec<f64>>,
}

impl PolygonalWeights {
    pub fn new(grid: TimeGrid, h: HurstParam, coarse_factor: usize) -> Result<Self> {
        Self::from_volterra(&VolterraWeights::new(grid, h), coarse_factor)
    }

    pub fn from_volterra(volterra: &VolterraWeights, coarse_factor: usize) -> Result<Self> {
        let grid = volterra.grid;
        let n = grid.n_steps();
        if coarse_factor == 0 || !n.is_multiple_of(coarse_factor) {
            return Err(Error::InvalidParameter(alloc::format!(
                "coarse factor {coarse_factor} does not divide {n} steps"
            )));
        }
        let n_coarse = n / coarse_factor;
        let inv = 1.0 / coarse_factor as f64;
        let rows = (0..=n)
            .map(|k| {
                let mut row = vec![0.0; n_coarse];
                for (j, w) in volterra.row(k).iter().enumerate() {
                    row[j / coarse_factor] += w * inv;
                }
                row
            })
            .collect();
        Ok(Self {
            grid,
            coarse_factor,
            rows,
        })
    }

    pub fn coarse_factor(&self) -> usize {
        self.coarse_factor
    }

    pub fn apply(&self, increments: &[f64]) -> Vec<f64> {
        debug_assert_eq!(increments.len(), self.grid.n_steps());
        let coarse: Vec<f64> = increments.chunks(self.coarse_factor).map(|c| c.iter().sum()).collect();
        self.rows
            .iter()
            .map(|r| r.iter().zip(&coarse).map(|(w, dw)| w * dw).sum())
            .collect()
    }
}

pub fn generate_polygonal(driver: &BrownianDriver, h: HurstParam, coarse_factor: usize) -> Result<FbmPathSet> {
    let weights = PolygonalWeights::new(driver.grid(), h, coarse_factor)?;
    let paths = (0..driver.n_paths())
        .map(|p| {
            (0..driver.dims())
                .flat_map(|j| weights.apply(driver.increments(p, j)))
                .collect()
        })
        .collect();
    Ok(FbmPathSet {
        grid: driver.grid(),
        dims: driver.dims(),
        n_paths: driver.n_paths(),
        samples: flatten(paths),
        seed: driver.seed(),
        method: FbmMethod::Polygonal,
        jitter: None,
    })
}

/// Variance of `beta(t_k)` implied by a weight row and unit-rate increments.
pub fn discrete_variance(row: &[f64], step: f64) -> f64 {
    row.iter().map(|w| w * w).sum::<f64>() * step
}

/// Gram matrix of the increments `beta_{t_{i+1}} - beta_{t_i}`.
pub fn increment_gram(grid: &TimeGrid, h: HurstParam) -> DMatrix<f64> {
    let n = grid.n_steps();
    DMatrix::from_fn(n, n, |i, j| {
        phi_cell_integral(grid.point(i), grid.point(i + 1), grid.point(j), grid.point(j + 1), h)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    #[test]
    fn covariance_examples() {
        assert!((fbm_covariance(1.0, 1.0, hp(0.6)) - 1.0).abs() < 1e-15);
        assert!((fbm_covariance(0.5, 1.0, hp(0.9)) - 0.5).abs() < 1e-15);
        let v = fbm_covariance(0.25, 0.75, hp(0.75));
        assert!((v - 0.210_482_831_1).abs() < 1e-9);
        let w = phi_cell_integral(0.0, 0.25, 0.0, 0.75, hp(0.75));
        assert!((v - w).abs() < 1e-15);
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = TimeGrid::new(0.7, 3).unwrap();
        assert_eq!(g.point(0), 0.0);
        assert_eq!(g.point(3), 0.7);
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn coarse_factor_must_divide() {
        let g = TimeGrid::new(1.0, 12).unwrap();
        let d = BrownianDriver::generate(g, 1, 1, 3).unwrap();
        assert!(generate_polygonal(&d, hp(0.7), 5).is_err());
        assert!(generate_polygonal(&d, hp(0.7), 4).is_ok());
    }

    #[test]
    fn paths_start_at_zero() {
        let g = TimeGrid::new(1.0, 16).unwrap();
        let s = generate_cholesky(g, 2, 3, hp(0.7), 9).unwrap();
        for p in 0..3 {
            for j in 0..2 {
                assert_eq!(s.value(p, j, 0), 0.0);
            }
        }
    }
}
