use fhjm_core::consistency::{
    check_drift_and_vol_condition, check_shift_condition, controlled_path, fit_family, latin_hypercube,
    nagumo_full_check, partials_fd_error, tangent_residual, time_samples, ManifoldFamily, MembershipGrid, NelsonSiegel,
    NelsonSiegelFixedDecay, Outcome, Verdict, NELSON_SIEGEL_BOX,
};
use fhjm_core::hjm::simulate_forward;
use fhjm_core::{
    DriftField, FbmMethod, FbmPathSet, HurstParam, InitialCurve, MaturityGrid, SampledFunction, TimeGrid, VolFactor,
    VolatilitySpec,
};
use proptest::prelude::*;

fn hp(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

const Y: [f64; 4] = [0.03, -0.01, 0.005, 1.5];

fn sample(grid: &MembershipGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    grid.points().iter().map(|x| f(*x)).collect()
}

fn ns_samples() -> Vec<Vec<f64>> {
    latin_hypercube(&NELSON_SIEGEL_BOX, 50, 7).unwrap()
}

struct Constant;

impl ManifoldFamily for Constant {
    fn name(&self) -> &str {
        "constant"
    }
    fn dim(&self) -> usize {
        1
    }
    fn curve(&self, _x: f64, y: &[f64]) -> f64 {
        y[0]
    }
    fn partial(&self, _i: usize, _x: f64, _y: &[f64]) -> f64 {
        1.0
    }
    fn dx(&self, _x: f64, _y: &[f64]) -> f64 {
        0.0
    }
    fn in_domain(&self, y: &[f64]) -> bool {
        y.len() == 1
    }
}

/// `y_1 + y_2 sin(x)` with the frequency frozen.
struct Sine;

impl ManifoldFamily for Sine {
    fn name(&self) -> &str {
        "sine"
    }
    fn dim(&self) -> usize {
        2
    }
    fn curve(&self, x: f64, y: &[f64]) -> f64 {
        y[0] + y[1] * x.sin()
    }
    fn partial(&self, i: usize, x: f64, _y: &[f64]) -> f64 {
        if i == 0 {
            1.0
        } else {
            x.sin()
        }
    }
    fn dx(&self, x: f64, y: &[f64]) -> f64 {
        y[1] * x.cos()
    }
    fn in_domain(&self, y: &[f64]) -> bool {
        y.len() == 2
    }
}

/// Nelson–Siegel with `y_2` stored as `10 y_2`.
struct Rescaled;

impl ManifoldFamily for Rescaled {
    fn name(&self) -> &str {
        "rescaled"
    }
    fn dim(&self) -> usize {
        4
    }
    fn curve(&self, x: f64, y: &[f64]) -> f64 {
        NelsonSiegel.curve(x, &unscale(y))
    }
    fn partial(&self, i: usize, x: f64, y: &[f64]) -> f64 {
        let p = NelsonSiegel.partial(i, x, &unscale(y));
        if i == 1 {
            p / 10.0
        } else {
            p
        }
    }
    fn dx(&self, x: f64, y: &[f64]) -> f64 {
        NelsonSiegel.dx(x, &unscale(y))
    }
    fn in_domain(&self, y: &[f64]) -> bool {
        NelsonSiegel.in_domain(y)
    }
}

fn unscale(y: &[f64]) -> Vec<f64> {
    vec![y[0], y[1] / 10.0, y[2], y[3]]
}

#[test]
fn tangent_residual_examples() {
    let grid = MembershipGrid::default();
    let basis = sample(&grid, |x| NelsonSiegel.partial(1, x, &Y));
    assert!(tangent_residual(&NelsonSiegel, &Y, &basis, &grid).unwrap().residual <= 1e-12);
    let shift = sample(&grid, |x| NelsonSiegel.dx(x, &Y));
    assert!(tangent_residual(&NelsonSiegel, &Y, &shift, &grid).unwrap().residual <= 1e-10);
    let linear = sample(&grid, |x| x);
    assert!(tangent_residual(&NelsonSiegel, &Y, &linear, &grid).unwrap().residual > 0.1);
    let zero = vec![0.0; grid.points().len()];
    assert_eq!(tangent_residual(&NelsonSiegel, &Y, &zero, &grid).unwrap().residual, 0.0);
    assert!(tangent_residual(&NelsonSiegel, &[0.03, -0.01, 0.005, 0.0], &linear, &grid).is_err());
}

#[test]
fn degenerate_basis_reports_rank() {
    let grid = MembershipGrid::default();
    let y = [0.03, 0.0, 0.0, 1.5];
    let g = sample(&grid, |x| (-1.5 * x).exp());
    let fit = tangent_residual(&NelsonSiegel, &y, &g, &grid).unwrap();
    assert_eq!(fit.rank, 3);
    assert!(fit.residual <= 1e-12);
}

#[test]
fn shift_condition_verdicts() {
    let grid = MembershipGrid::default();
    let ns = check_shift_condition(&NelsonSiegel, &ns_samples(), &grid).unwrap();
    assert_eq!(ns.verdict, Verdict::Consistent);
    assert_eq!(ns.probes.len(), 50);
    assert!(ns.witness.is_none());
    let c = check_shift_condition(&Constant, &[vec![0.02], vec![-1.0]], &grid).unwrap();
    assert_eq!(c.verdict, Verdict::Consistent);
    let s = check_shift_condition(&Sine, &[vec![0.01, 0.5]], &grid).unwrap();
    assert_eq!(s.verdict, Verdict::Inconsistent);
    assert_eq!(s.witness.unwrap().label, "shift");
}

#[test]
fn holee_violates_the_drift_condition_through_its_linear_term() {
    let grid = MembershipGrid::default();
    let spec = VolatilitySpec::ho_lee(0.01).unwrap();
    let v = check_drift_and_vol_condition(
        &NelsonSiegel,
        &spec,
        hp(0.7),
        &time_samples(1.0, 8),
        &ns_samples(),
        &grid,
    )
    .unwrap();
    assert_eq!(v.verdict, Verdict::Inconsistent);
    assert_eq!(v.witness.as_ref().unwrap().label, "drift");
    assert_eq!(v.failing_terms, vec!["drift[0]: x-linear term".to_string()]);
    assert!(v.min_residual("drift[0]: x-linear term").unwrap() > 0.1);
    assert!(v.max_residual("vol[0]").unwrap() <= 1e-12);
    assert!(v.max_residual("drift[0]: constant term").unwrap() <= 1e-12);
    assert!(v
        .probes
        .iter()
        .filter(|p| p.label == "drift")
        .all(|p| p.outcome == Outcome::Fail));
}

#[test]
fn hull_white_violates_the_drift_condition_on_both_parameter_sets() {
    let grid = MembershipGrid::default();
    let spec = VolatilitySpec::hull_white(0.01, 1.0).unwrap();
    let ts = time_samples(1.0, 8);
    let fixed = NelsonSiegelFixedDecay { alpha: 1.0 };
    let ys: Vec<Vec<f64>> = ns_samples().into_iter().map(|y| y[..3].to_vec()).collect();
    let v = check_drift_and_vol_condition(&fixed, &spec, hp(0.7), &ts, &ys, &grid).unwrap();
    assert_eq!(v.verdict, Verdict::Inconsistent);
    assert_eq!(v.witness.as_ref().unwrap().label, "drift");
    assert_eq!(v.failing_terms, vec!["drift[0]: e^(-2 alpha x) term".to_string()]);
    assert!(v.max_residual("vol[0]").unwrap() <= 1e-12);
    assert!(v.max_residual("drift[0]: e^(-alpha x) term").unwrap() <= 1e-12);

    let full = check_drift_and_vol_condition(&NelsonSiegel, &spec, hp(0.7), &ts, &ns_samples(), &grid).unwrap();
    assert_eq!(full.verdict, Verdict::Inconsistent);
    assert!(full
        .failing_terms
        .contains(&"drift[0]: e^(-2 alpha x) term".to_string()));
    assert!(full
        .probes
        .iter()
        .filter(|p| p.label == "drift")
        .all(|p| p.outcome == Outcome::Fail));
}

#[test]
fn zero_volatility_is_trivially_consistent() {
    let grid = MembershipGrid::default();
    let spec = VolatilitySpec::zero(1.0, 10.0).unwrap();
    let r = nagumo_full_check(
        &NelsonSiegel,
        &spec,
        hp(0.7),
        &time_samples(1.0, 8),
        &ns_samples(),
        &grid,
    )
    .unwrap();
    assert_eq!(r.verdict, Verdict::Consistent);
    assert!(r.trivial);
}

#[test]
fn no_nontrivial_builtin_model_is_consistent() {
    let grid = MembershipGrid::default();
    let ts = time_samples(1.0, 8);
    let ys = ns_samples();
    let tab = VolFactor::Tabulated(fhjm_core::vol::TabulatedVol {
        t_grid: vec![0.0, 1.0],
        x_grid: vec![0.0, 5.0, 10.0],
        values: vec![vec![0.02, 0.01, 0.005], vec![0.02, 0.01, 0.005]],
    });
    let specs = [
        VolatilitySpec::ho_lee(0.01).unwrap(),
        VolatilitySpec::hull_white(0.01, 1.0).unwrap(),
        VolatilitySpec::hull_white(0.02, 0.3).unwrap(),
        VolatilitySpec::new(vec![
            VolFactor::HoLee { sigma: 0.01 },
            VolFactor::HullWhite {
                sigma: 0.01,
                alpha: 2.0,
            },
        ])
        .unwrap(),
        VolatilitySpec::new(vec![tab]).unwrap(),
    ];
    for spec in &specs {
        for h in [0.6, 0.75, 0.9] {
            let r = nagumo_full_check(&NelsonSiegel, spec, hp(h), &ts, &ys, &grid).unwrap();
            assert_eq!(r.verdict, Verdict::Inconsistent, "{spec:?} H={h}");
            assert_eq!(r.shift.verdict, Verdict::Consistent);
        }
    }
}

#[test]
fn verdicts_survive_grid_doubling_and_reparametrisation() {
    let coarse = MembershipGrid::default();
    let fine = coarse.refined();
    assert_eq!(fine.points().len(), 1023);
    let ts = time_samples(1.0, 8);
    let ys = ns_samples();
    let scaled: Vec<Vec<f64>> = ys.iter().map(|y| vec![y[0], 10.0 * y[1], y[2], y[3]]).collect();
    for spec in [
        VolatilitySpec::ho_lee(0.01).unwrap(),
        VolatilitySpec::hull_white(0.01, 1.0).unwrap(),
    ] {
        let a = nagumo_full_check(&NelsonSiegel, &spec, hp(0.7), &ts, &ys, &coarse).unwrap();
        let b = nagumo_full_check(&NelsonSiegel, &spec, hp(0.7), &ts, &ys, &fine).unwrap();
        let c = nagumo_full_check(&Rescaled, &spec, hp(0.7), &ts, &scaled, &coarse).unwrap();
        for other in [&b, &c] {
            assert_eq!(a.verdict, other.verdict);
            let pa = a.shift.probes.iter().chain(&a.drift_and_vol.probes);
            let pb = other.shift.probes.iter().chain(&other.drift_and_vol.probes);
            for (x, y) in pa.zip(pb) {
                assert_eq!(x.outcome, y.outcome, "{x:?} {y:?}");
            }
        }
        for (x, y) in a.drift_and_vol.probes.iter().zip(&c.drift_and_vol.probes) {
            assert!((x.residual - y.residual).abs() <= 1e-9 * x.residual.max(1e-3));
        }
    }
}

#[test]
fn latin_hypercube_fills_every_stratum() {
    let pts = latin_hypercube(&NELSON_SIEGEL_BOX, 50, 3).unwrap();
    for (d, (lo, hi)) in NELSON_SIEGEL_BOX.iter().enumerate() {
        let mut seen = [false; 50];
        for p in &pts {
            let s = ((p[d] - lo) / (hi - lo) * 50.0).floor() as usize;
            assert!(!seen[s]);
            seen[s] = true;
        }
    }
    assert_eq!(pts, latin_hypercube(&NELSON_SIEGEL_BOX, 50, 3).unwrap());
}

struct Sim {
    spec: VolatilitySpec,
    h: HurstParam,
    tg: TimeGrid,
    xg: MaturityGrid,
    drift: DriftField,
    init: InitialCurve,
}

fn ns_holee(sigma: f64) -> Sim {
    let h = hp(0.7);
    let spec = VolatilitySpec::ho_lee(sigma).unwrap();
    let tg = TimeGrid::new(1.0, 32).unwrap();
    let xg = MaturityGrid::new(5.0, 160).unwrap();
    let drift = DriftField::compute(&spec, h, tg, MaturityGrid::new(6.0, 192).unwrap());
    let init = InitialCurve::from_fn(&tg, &xg, |x| NelsonSiegel.curve(x, &Y)).unwrap();
    Sim {
        spec,
        h,
        tg,
        xg,
        drift,
        init,
    }
}

fn control(tg: TimeGrid, f: impl Fn(f64) -> f64) -> Vec<SampledFunction> {
    vec![SampledFunction::from_fn(tg.step(), tg.n_steps() + 1, f).unwrap()]
}

#[test]
fn zero_control_is_the_noise_free_simulation() {
    let s = ns_holee(0.05);
    let y = controlled_path(&s.spec, s.h, &s.drift, &s.init, &control(s.tg, |_| 0.0), s.xg).unwrap();
    let zero = FbmPathSet::from_paths(s.tg, 1, vec![vec![0.0; 33]], 0, FbmMethod::Cholesky, None).unwrap();
    let sim = simulate_forward(&s.spec, &s.drift, &s.init, &zero, s.xg).unwrap();
    assert_eq!(y.curve(0, 32), sim.curve(0, 32));
    for i in 0..=32 {
        assert_eq!(y.curve(0, i), sim.curve(0, i));
    }
}

#[test]
fn controlled_path_is_affine_in_the_control() {
    let s = ns_holee(0.05);
    let run =
        |f: &dyn Fn(f64) -> f64| controlled_path(&s.spec, s.h, &s.drift, &s.init, &control(s.tg, f), s.xg).unwrap();
    let base = run(&|_| 0.0);
    let a = run(&|t| (3.0 * t).sin());
    let b = run(&|t| 1.0 + t * t);
    let ab = run(&|t| (3.0 * t).sin() + 1.0 + t * t);
    for i in 0..=32 {
        for k in 0..=160 {
            let lhs = ab.value(0, i, k) - base.value(0, i, k);
            let rhs = (a.value(0, i, k) - base.value(0, i, k)) + (b.value(0, i, k) - base.value(0, i, k));
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }
    assert!(controlled_path(&s.spec, s.h, &s.drift, &s.init, &[], s.xg).is_err());
}

#[test]
fn controlled_paths_leave_the_nelson_siegel_family() {
    let s = ns_holee(0.05);
    let y = controlled_path(&s.spec, s.h, &s.drift, &s.init, &control(s.tg, |_| 1.0), s.xg).unwrap();
    let grid = MembershipGrid::new(5.0, 161).unwrap();
    let mut start = Y.to_vec();
    let mut dist = Vec::new();
    for i in [0, 8, 16, 24, 32] {
        let fit = fit_family(&NelsonSiegel, grid.points(), grid.weights(), y.curve(0, i), &start, 200).unwrap();
        start = fit.y.clone();
        dist.push(fit.relative);
    }
    assert!(dist[0] < 1e-10, "{dist:?}");
    for d in &dist[1..] {
        assert!(*d > 1e-5, "{dist:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partials_match_finite_differences(
        y1 in -0.05f64..0.05, y2 in -0.05f64..0.05, y3 in -0.05f64..0.05, y4 in 0.2f64..3.0,
        xs in prop::collection::vec(0.0f64..10.0, 8),
    ) {
        let y = [y1, y2, y3, y4];
        prop_assert!(partials_fd_error(&NelsonSiegel, &y, &xs, 1e-5) <= 1e-6);
    }

    #[test]
    fn residual_is_subadditive(
        c in prop::collection::vec(-1.0f64..1.0, 8),
        y4 in 1.0f64..3.0,
    ) {
        let grid = MembershipGrid::new(10.0, 257).unwrap();
        let y = [0.02, -0.01, 0.01, y4];
        let g1 = sample(&grid, |x| c[0] * x + c[1] * (-2.0 * x).exp() + c[2] + c[3] * (0.7 * x).sin());
        let g2 = sample(&grid, |x| c[4] * x * x * 0.1 + c[5] * (-y4 * x).exp() + c[6] * (-0.5 * x).exp() + c[7]);
        let sum: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
        let f1 = tangent_residual(&NelsonSiegel, &y, &g1, &grid).unwrap();
        let f2 = tangent_residual(&NelsonSiegel, &y, &g2, &grid).unwrap();
        let fs = tangent_residual(&NelsonSiegel, &y, &sum, &grid).unwrap();
        prop_assert!(fs.residual * fs.norm <= f1.residual * f1.norm + f2.residual * f2.norm + 1e-12);
    }
}
