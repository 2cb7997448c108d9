//! Quadrature, summation and least-squares helpers shared by the model modules.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights at GK_NODES[1], [3], [5], [7].
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

const MAX_INTERVALS: usize = 2000;

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WEIGHTS[7];
    let mut gauss = fc * G7_WEIGHTS[3];
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * s;
        }
    }
    (kron * h, libm::fabs((kron - gauss) * h))
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// Nodes are strictly interior, so integrable endpoint singularities are
/// tolerated. Subdivision stops once the summed error estimate falls below
/// `max(abs_tol, rel_tol * |I|)` or the interval budget is spent.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (v, e) = kronrod15(&f, a, b);
    let mut parts: Vec<(f64, f64, f64, f64)> = alloc::vec![(a, b, v, e)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * libm::fabs(total)) || parts.len() >= MAX_INTERVALS {
            return pairwise_sum(&parts.iter().map(|p| p.2).collect::<Vec<_>>());
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Interval collapsed to adjacent floats; keep it as is.
            let (v, _) = kronrod15(&f, lo, hi);
            parts.push((lo, hi, v, 0.0));
            continue;
        }
        let (v1, e1) = kronrod15(&f, lo, mid);
        let (v2, e2) = kronrod15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Eight-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre8<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..4 {
        let dx = h * GL8_NODES[i];
        acc += GL8_WEIGHTS[i] * (f(c - dx) + f(c + dx));
    }
    acc * h
}

/// Pairwise (cascade) summation; the reduction tree depends only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Trapezoidal rule for samples on a uniform grid of spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// Composite Simpson rule on a uniform grid; an odd interval count is closed
/// with the 3/8 rule on the last three intervals.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len().saturating_sub(1);
    match n {
        0 => 0.0,
        1 => 0.5 * h * (values[0] + values[1]),
        2 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        3 => 3.0 * h / 8.0 * (values[0] + 3.0 * values[1] + 3.0 * values[2] + values[3]),
        _ if n.is_multiple_of(2) => {
            let mut acc = values[0] + values[n];
            for (i, v) in values.iter().enumerate().take(n).skip(1) {
                acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            acc * h / 3.0
        }
        _ => simpson(&values[..n - 2], h) + simpson(&values[n - 3..], h),
    }
}

/// Result of a (weighted) linear least-squares fit.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// Weighted L2 norm of the residual vector.
    pub residual_norm: f64,
    /// Numerical rank of the weighted design matrix.
    pub rank: usize,
}

/// Minimise `sum_k w_k (target_k - sum_i c_i columns[i][k])^2` through a
/// truncated SVD; rank-deficient designs fall back to the pseudo-inverse.
pub fn weighted_least_squares(columns: &[Vec<f64>], target: &[f64], weights: &[f64]) -> LeastSquares {
    let rows = target.len();
    let q = columns.len();
    let sw: Vec<f64> = weights.iter().map(|w| libm::sqrt(*w)).collect();
    if q == 0 {
        let r = target.iter().zip(&sw).map(|(g, s)| g * g * s * s).sum::<f64>();
        return LeastSquares {
            coefficients: Vec::new(),
            residual_norm: libm::sqrt(r),
            rank: 0,
        };
    }
    let a = DMatrix::from_fn(rows, q, |k, i| columns[i][k] * sw[k]);
    let b = DVector::from_fn(rows, |k, _| target[k] * sw[k]);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = smax * 1e-12 * (rows.max(q) as f64);
    let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
    let coeffs = svd
        .solve(&b, eps)
        .map(|c| c.iter().cloned().collect::<Vec<_>>())
        .unwrap_or_else(|_| alloc::vec![0.0; q]);
    let fitted = &a * DVector::from_column_slice(&coeffs);
    let resid = (b - fitted).norm();
    LeastSquares {
        coefficients: coeffs,
        residual_norm: resid,
        rank,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_handles_endpoint_singularity() {
        // ∫_0^1 u^{-1/2} du = 2
        let v = integrate(|u| 1.0 / libm::sqrt(u), 0.0, 1.0, 1e-13, 1e-13);
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn simpson_is_exact_for_cubics_with_odd_tail() {
        let h = 0.1;
        let v: Vec<f64> = (0..8)
            .map(|i| {
                let x = i as f64 * h;
                x * x * x - x
            })
            .collect();
        let exact = 0.7f64.powi(4) / 4.0 - 0.7f64.powi(2) / 2.0;
        assert!((simpson(&v, h) - exact).abs() < 1e-14);
    }

    #[test]
    fn least_squares_reports_rank() {
        let c1 = alloc::vec![1.0, 1.0, 1.0];
        let c2 = alloc::vec![2.0, 2.0, 2.0];
        let fit = weighted_least_squares(&[c1, c2], &[3.0, 3.0, 3.0], &[1.0, 1.0, 1.0]);
        assert_eq!(fit.rank, 1);
        assert!(fit.residual_norm < 1e-12);
    }
}
