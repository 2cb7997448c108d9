use fhjm_core::kernel::{
    c_h_beta, calibrate_c_h, frac_derivative, frac_integral, phi_cell_integral, phi_time_integral, volterra_kernel,
};
use fhjm_core::math::integrate;
use fhjm_core::{FracOrder, HurstParam, SampledFunction};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn hp(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

fn order(a: f64) -> FracOrder {
    FracOrder::new(a).unwrap()
}

fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

#[test]
fn cell_integral_against_two_dimensional_quadrature() {
    let h = 0.75;
    let phi = |u: f64| h * (2.0 * h - 1.0) * u.abs().powf(2.0 * h - 2.0);
    // Off-diagonal cell [0,1] x [1,2]: integrand singular only at the corner.
    let inner = |v: f64| integrate(|u| phi(u - v), 0.0, 1.0, 1e-13, 1e-12);
    let oracle = integrate(inner, 1.0, 2.0, 1e-12, 1e-11);
    let got = phi_cell_integral(0.0, 1.0, 1.0, 2.0, hp(h));
    assert!((got - oracle).abs() < 1e-8, "{got} {oracle}");
    assert!((got - 0.5 * (2f64.powf(1.5) - 2.0)).abs() < 1e-15);
    assert!((got - 0.414_213_6).abs() < 1e-7);
}

#[test]
fn time_integral_against_adaptive_quadrature() {
    let h = 0.75;
    // A node can round onto the singular endpoint; it carries no mass.
    let phi = |u: f64| {
        if u > 0.0 {
            h * (2.0 * h - 1.0) * u.powf(2.0 * h - 2.0)
        } else {
            0.0
        }
    };
    for (t0, t1, t) in [(0.0, 1.0, 1.0), (0.0, 0.5, 1.0), (0.2, 0.9, 1.3)] {
        let oracle = integrate(|th| phi(t - th), t0, t1, 1e-14, 1e-13);
        let got = phi_time_integral(t0, t1, t, hp(h));
        assert!((got - oracle).abs() < 1e-7, "{got} {oracle}");
    }
    assert!((phi_time_integral(0.0, 0.5, 1.0, hp(0.75)) - 0.219_669_9).abs() < 1e-7);
}

fn grid_fn(n: usize, f: impl Fn(f64) -> f64) -> SampledFunction {
    SampledFunction::from_fn(1.0 / (n - 1) as f64, n, f).unwrap()
}

#[test]
fn frac_integral_examples() {
    let one = grid_fn(257, |_| 1.0);
    let i = frac_integral(&one, order(0.25)).unwrap();
    let last = *i.values().last().unwrap();
    assert!((last - 1.0 / gamma(1.25)).abs() < 1e-12);
    assert!((last - 1.103_262_651_3).abs() < 1e-9);

    let zero = grid_fn(65, |_| 0.0);
    assert!(frac_integral(&zero, order(0.4))
        .unwrap()
        .values()
        .iter()
        .all(|v| *v == 0.0));

    let lin = grid_fn(257, |s| s);
    let i = frac_integral(&lin, order(0.5)).unwrap();
    let last = *i.values().last().unwrap();
    assert!((last - gamma(2.0) / gamma(2.5)).abs() < 1e-12);
    assert!((last - 0.752_252_8).abs() < 1e-7);
}

#[test]
fn frac_derivative_examples() {
    let zero = grid_fn(65, |_| 0.0);
    assert!(frac_derivative(&zero, order(0.4))
        .unwrap()
        .values()
        .iter()
        .all(|v| *v == 0.0));

    let lin = grid_fn(257, |s| s);
    let d = frac_derivative(&lin, order(0.5)).unwrap();
    let last = *d.values().last().unwrap();
    assert!((last - gamma(2.0) / gamma(1.5)).abs() < 1e-12);
    assert!((last - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
}

fn smooth_tests() -> Vec<fn(f64) -> f64> {
    vec![|t| (std::f64::consts::PI * t).sin(), |t| t * (-t).exp(), |t| {
        t - t * t * t / 3.0
    }]
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn derivative_inverts_integral() {
    for g in smooth_tests() {
        let f = grid_fn(2048, g);
        for alpha in [0.1, 0.25, 0.3] {
            let back = frac_derivative(&frac_integral(&f, order(alpha)).unwrap(), order(alpha)).unwrap();
            let err = max_err(back.values(), f.values());
            assert!(err <= 1e-3, "alpha={alpha}: {err}");
        }
    }
}

#[test]
fn integral_semigroup() {
    for g in smooth_tests() {
        let f = grid_fn(2048, g);
        for (a, b) in [(0.1, 0.25), (0.25, 0.3), (0.3, 0.3), (0.1, 0.1)] {
            let ab = frac_integral(&frac_integral(&f, order(a)).unwrap(), order(b)).unwrap();
            let direct = frac_integral(&f, order(a + b)).unwrap();
            let err = max_err(ab.values(), direct.values());
            assert!(err <= 1e-3, "({a},{b}): {err}");
        }
    }
}

#[test]
fn volterra_kernel_positive_and_increasing_in_t() {
    let h = hp(0.72);
    let c = calibrate_c_h(h, 128);
    for s in [0.01, 0.2, 0.5, 0.9] {
        let mut prev = 0.0;
        for k in 1..=10 {
            let t = s + 0.1 * k as f64;
            let v = volterra_kernel(t, s, h, c).unwrap();
            assert!(v > 0.0 && v > prev);
            prev = v;
        }
    }
}

#[test]
fn calibrated_kernel_has_unit_variance() {
    for h in [0.6, 0.75, 0.9] {
        let h = hp(h);
        let c = calibrate_c_h(h, 128);
        // Independent oracle: adaptive quadrature of K^2 split at 1/2.
        let k2 = |s: f64| volterra_kernel(1.0, s, h, c).unwrap().powi(2);
        let v = integrate(k2, 0.0, 0.5, 1e-14, 1e-12) + integrate(k2, 0.5, 1.0, 1e-14, 1e-12);
        assert!((v - 1.0).abs() < 1e-4, "{v}");
    }
}

#[test]
fn calibration_against_beta_constant() {
    let h = hp(0.75);
    let lit = c_h_beta(h);
    let c = calibrate_c_h(h, 64);
    assert!(((c - lit) / lit).abs() < 0.02, "{c} {lit}");
    for n in [64, 128, 256] {
        let a = calibrate_c_h(h, n);
        let b = calibrate_c_h(h, 2 * n);
        assert!(((a - b) / b).abs() < 0.005);
        assert!(a > 0.0);
    }
    assert_eq!(calibrate_c_h(h, 100), calibrate_c_h(h, 100));
}

proptest! {
    #[test]
    fn cell_integral_symmetry(a in 0.0..3.0f64, l1 in 0.0..2.0f64, c in 0.0..3.0f64, l2 in 0.0..2.0f64, h in 0.51..0.99f64) {
        let h = hp(h);
        let x = phi_cell_integral(a, a + l1, c, c + l2, h);
        let y = phi_cell_integral(c, c + l2, a, a + l1, h);
        prop_assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()));
    }

    #[test]
    fn cell_integral_additivity(a in 0.0..3.0f64, l in 0.0..2.0f64, frac in 0.0..1.0f64, c in 0.0..3.0f64, l2 in 0.01..2.0f64, h in 0.51..0.99f64) {
        let h = hp(h);
        let m = a + frac * l;
        let whole = phi_cell_integral(a, a + l, c, c + l2, h);
        let parts = phi_cell_integral(a, m, c, c + l2, h) + phi_cell_integral(m, a + l, c, c + l2, h);
        // Absolute floor: terms of size O(1) cancel down to `whole`.
        prop_assert!((whole - parts).abs() <= 1e-12 * whole.abs().max(1.0));
    }

    #[test]
    fn gram_matrices_are_psd(cuts in prop::collection::vec(0.001..5.0f64, 1..64), h in 0.51..0.99f64) {
        let h = hp(h);
        let mut pts = vec![0.0];
        for c in &cuts {
            pts.push(pts.last().unwrap() + c);
        }
        let n = cuts.len();
        let g = DMatrix::from_fn(n, n, |i, j| phi_cell_integral(pts[i], pts[i + 1], pts[j], pts[j + 1], h));
        prop_assert!((g.clone() - g.transpose()).amax() < 1e-12);
        let eig = g.symmetric_eigen();
        let floor = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(floor >= -1e-10, "{}", floor);
    }
}
