use fhjm_core::drift::log_expectation;
use fhjm_core::fbm::{generate_cholesky, CholeskySampler};
use fhjm_core::hjm::{bond_surface, discounted_surface, money_account, simulate_forward};
use fhjm_core::noarb::{
    check_quasi_martingale, drift_identity_check, integrated_drift_exposure, oscillation_probe,
    quasi_martingale_from_samples, DiscountTables,
};
use fhjm_core::{DriftField, HurstParam, InitialCurve, MaturityGrid, TimeGrid, VolatilitySpec};

fn hp(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

#[test]
fn drift_identity_holds_to_roundoff_for_holee() {
    let spec = VolatilitySpec::ho_lee(1.0).unwrap();
    let tg = TimeGrid::new(2.0, 512).unwrap();
    assert!(drift_identity_check(&spec, hp(0.75), &tg, 2.0) <= 1e-6);
    assert!(drift_identity_check(&spec, hp(0.75), &tg, 2.0) <= 1e-12);
}

#[test]
fn drift_identity_converges_for_hull_white() {
    let spec = VolatilitySpec::hull_white(0.01, 1.0).unwrap();
    let errs: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&n| drift_identity_check(&spec, hp(0.7), &TimeGrid::new(1.0, n).unwrap(), 1.0))
        .collect();
    assert!(errs[2] <= 1e-6, "{errs:?}");
    assert!(errs[0] / errs[1] >= 4.0 && errs[1] / errs[2] >= 4.0, "{errs:?}");
}

#[test]
fn integrated_identity_matches_exact_value() {
    // ∫_0^1 e(s, 2) ds = 8/7 for sigma = 1, H = 3/4.
    let spec = VolatilitySpec::ho_lee(1.0).unwrap();
    assert!((log_expectation(&spec, hp(0.75), 1.0, 2.0) - 8.0 / 7.0).abs() <= 1e-8);
    assert!((integrated_drift_exposure(&spec, hp(0.75), 1.0, 2.0) - 8.0 / 7.0).abs() <= 1e-8);
    assert_eq!(integrated_drift_exposure(&spec, hp(0.75), 0.0, 2.0), 0.0);
}

struct Panel {
    tg: TimeGrid,
    spec: VolatilitySpec,
    h: HurstParam,
    init: InitialCurve,
    pairs: Vec<(usize, usize)>,
    values: Vec<Vec<f64>>,
    zero_drift_values: Vec<Vec<f64>>,
    controls: Vec<Vec<f64>>,
}

fn panel(n_paths: usize) -> Panel {
    let h = hp(0.7);
    let spec = VolatilitySpec::ho_lee(0.01).unwrap();
    let tg = TimeGrid::new(1.0, 256).unwrap();
    let xg = MaturityGrid::new(1.0, 256).unwrap();
    let wide = MaturityGrid::new(2.0, 512).unwrap();
    let init = InitialCurve::flat(&tg, &xg, 0.03).unwrap();
    let drift = DriftField::compute(&spec, h, tg, wide);
    let tables = DiscountTables::new(&spec, &drift, &init, tg, 512).unwrap();
    let zero = DiscountTables::new(&spec, &DriftField::zeros(tg, wide), &init, tg, 512).unwrap();
    let pairs: Vec<(usize, usize)> = [64, 128, 192, 256]
        .iter()
        .flat_map(|&i| (0..5).map(move |k| (i, 256 + 64 * k)))
        .collect();
    let sampler = CholeskySampler::new(tg, h).unwrap();
    let mut values = vec![Vec::with_capacity(n_paths); pairs.len()];
    let mut zero_drift_values = values.clone();
    let mut controls = values.clone();
    for p in 0..n_paths as u64 {
        let block = sampler.sample_path(1, 2024, p);
        for (q, &(i, m)) in pairs.iter().enumerate() {
            let e = tables.exposure_of(&block, i, m);
            values[q].push(tables.value_from_exposure(i, m, e));
            zero_drift_values[q].push(zero.value_from_exposure(i, m, e));
            controls[q].push(e);
        }
    }
    Panel {
        tg,
        spec,
        h,
        init,
        pairs,
        values,
        zero_drift_values,
        controls,
    }
}

#[test]
fn quasi_martingale_panel_and_negative_control() {
    let pn = panel(100_000);
    let report = quasi_martingale_from_samples(
        &pn.tg,
        &pn.spec,
        pn.h,
        &pn.init,
        &pn.pairs,
        &pn.values,
        Some(&pn.controls),
    )
    .unwrap();
    assert_eq!(report.entries.len(), 20);
    assert!(report.count_exceeding(3.0) <= 1, "{:#?}", report.entries);
    for e in &report.entries {
        assert!(e.std_error > 0.0);
        assert!(e.identity_gap < 1e-8, "{e:?}");
        assert!((e.analytic / e.target - 1.0).abs() < 1e-8);
    }
    let t1 = report.entries.iter().find(|e| e.t == 0.5 && e.maturity == 1.0).unwrap();
    assert!((t1.target - 0.9704455).abs() < 1e-7);

    let control = quasi_martingale_from_samples(
        &pn.tg,
        &pn.spec,
        pn.h,
        &pn.init,
        &pn.pairs,
        &pn.zero_drift_values,
        Some(&pn.controls),
    )
    .unwrap();
    for e in control.entries.iter().filter(|e| e.t >= 0.5) {
        assert!(e.z_score > 3.0, "{e:?}");
    }
    // Bias grows with t for each maturity.
    for k in 0..5 {
        let bias: Vec<f64> = (0..4)
            .map(|r| &control.entries[5 * r + k])
            .map(|e| e.mc_mean - e.target)
            .collect();
        assert!(bias.windows(2).all(|w| w[1] > w[0]), "{bias:?}");
    }
}

#[test]
fn time_zero_prices_are_exact() {
    let h = hp(0.7);
    let spec = VolatilitySpec::ho_lee(0.01).unwrap();
    let tg = TimeGrid::new(1.0, 16).unwrap();
    let xg = MaturityGrid::new(1.0, 16).unwrap();
    let init = InitialCurve::flat(&tg, &xg, 0.03).unwrap();
    let drift = DriftField::compute(&spec, h, tg, MaturityGrid::new(2.0, 32).unwrap());
    let paths = generate_cholesky(tg, 1, 200, h, 9).unwrap();
    let surf = simulate_forward(&spec, &drift, &init, &paths, xg).unwrap();
    let z = discounted_surface(&bond_surface(&surf, 16).unwrap(), &money_account(&surf)).unwrap();
    let report = check_quasi_martingale(&z, &spec, h, &init, &[(0, 16), (0, 8), (8, 16)], None).unwrap();
    for e in &report.entries[..2] {
        assert_eq!(e.z_score, 0.0);
        assert_eq!(e.std_error, 0.0);
    }
    assert!(report.entries[2].std_error > 0.0);
    assert!(check_quasi_martingale(&z, &spec, h, &init, &[(9, 8)], None).is_err());
}

#[test]
fn oscillation_frequencies() {
    let h = hp(0.7);
    let spec = VolatilitySpec::ho_lee(0.01).unwrap();
    let tg = TimeGrid::new(1.0, 32).unwrap();
    let xg = MaturityGrid::new(1.0, 32).unwrap();
    let init = InitialCurve::flat(&tg, &xg, 0.03).unwrap();
    let drift = DriftField::compute(&spec, h, tg, MaturityGrid::new(2.0, 64).unwrap());
    let paths = generate_cholesky(tg, 1, 10_000, h, 17).unwrap();
    let surf = simulate_forward(&spec, &drift, &init, &paths, xg).unwrap();
    let z = discounted_surface(&bond_surface(&surf, 32).unwrap(), &money_account(&surf)).unwrap();
    let ks = [10.0, 0.1, 0.05, 0.04, 0.03, 0.02, 1e-3, 1e-9];
    let freqs: Vec<Vec<f64>> = ks
        .iter()
        .map(|&k| oscillation_probe(&z, k, &[0, 8, 16]).unwrap().frequencies)
        .collect();
    assert!(freqs[0].iter().all(|f| *f == 1.0));
    assert!(freqs[2][0] > 0.0, "{freqs:?}");
    assert!(freqs.last().unwrap().iter().all(|f| *f == 0.0));
    for w in freqs.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            assert!(b <= a && (0.0..=1.0).contains(b));
        }
    }
    assert!(oscillation_probe(&z, 0.0, &[0]).is_err());
    assert!(oscillation_probe(&z, 0.1, &[32]).is_err());
}
