use fhjm_core::ledger::{integration_by_parts_check, liquidation_value, DiscreteMeasure, Gate, Holding, Strategy};
use fhjm_core::{BondSurface, Error, TimeGrid};
use proptest::prelude::*;

fn surface(n: usize, mat: usize, f: impl Fn(usize, usize) -> f64) -> BondSurface {
    let tg = TimeGrid::new(1.0, n).unwrap();
    let mut block = vec![f64::NAN; (n + 1) * (mat + 1)];
    for i in 0..=n {
        for m in i..=mat {
            block[i * (mat + 1) + m] = f(i, m);
        }
    }
    BondSurface::from_paths(tg, mat, vec![block]).unwrap()
}

fn hold(from: usize, to: usize, atoms: Vec<(usize, f64)>, gate: Gate) -> Holding {
    Holding {
        from,
        to,
        measure: DiscreteMeasure::new(atoms).unwrap(),
        gate,
    }
}

#[test]
fn flat_market_buy_and_hold_costs_two_k() {
    let z = surface(10, 10, |_, _| 1.0);
    let s = Strategy::new(10, vec![hold(0, 10, vec![(10, 1.0)], Gate::Always)]).unwrap();
    for k in [0.0, 0.001, 0.01, 0.25] {
        let led = liquidation_value(&s, &z, 0, k).unwrap();
        assert_eq!(*led.value.last().unwrap(), -2.0 * k);
        assert!(led.gains.iter().all(|g| *g == 0.0));
        for (i, v) in led.value.iter().enumerate() {
            let want = if i == 0 { 0.0 } else { -2.0 * k };
            assert_eq!(*v, want);
        }
    }
    let zero_cost = liquidation_value(&s, &z, 0, 0.0).unwrap();
    assert!(zero_cost.value.iter().chain(&zero_cost.cost).all(|v| *v == 0.0));
}

#[test]
fn ledger_identity_and_gains_telescope() {
    let z = surface(8, 12, |i, m| {
        (-0.03 * (m as f64 - i as f64) / 8.0).exp() * (1.0 + 0.01 * (i as f64).sin())
    });
    let s = Strategy::new(
        8,
        vec![
            hold(1, 4, vec![(9, 2.0), (12, -1.0)], Gate::Always),
            hold(4, 7, vec![(10, 0.5)], Gate::Always),
        ],
    )
    .unwrap();
    let led = liquidation_value(&s, &z, 0, 0.02).unwrap();
    for i in 0..=8 {
        assert_eq!(led.value[i], led.gains[i] - led.cost[i] - led.liquidation[i]);
        let mut want = 0.0;
        for l in 1..i.min(4) {
            want += 2.0 * (z.value(0, l + 1, 9) - z.value(0, l, 9)) - (z.value(0, l + 1, 12) - z.value(0, l, 12));
        }
        for l in 4..i.min(7) {
            want += 0.5 * (z.value(0, l + 1, 10) - z.value(0, l, 10));
        }
        assert!((led.gains[i] - want).abs() < 1e-15, "{i}");
    }
    // Jumps at t_1 (open), t_4 (switch), t_7 (close).
    let k = 0.02;
    let want_cost = k * (2.0 * z.value(0, 1, 9) + z.value(0, 1, 12))
        + k * (2.0 * z.value(0, 4, 9) + z.value(0, 4, 12) + 0.5 * z.value(0, 4, 10))
        + k * 0.5 * z.value(0, 7, 10);
    assert!((led.cost[8] - want_cost).abs() < 1e-15);
    assert_eq!(led.liquidation[8], 0.0);
    assert_eq!(s.total_variation(), 3.0 + 3.5 + 0.5);
}

#[test]
fn scaling_and_monotonicity_in_k() {
    let z = surface(6, 8, |i, m| 0.9 + 0.01 * i as f64 - 0.005 * m as f64);
    let gate = Gate::Threshold {
        observe: 1,
        maturity: 8,
        level: 0.5,
        above: true,
    };
    let s = Strategy::new(6, vec![hold(2, 5, vec![(6, 1.0), (8, -0.5)], gate)]).unwrap();
    let a = liquidation_value(&s, &z, 0, 0.03).unwrap();
    let b = liquidation_value(&s.scaled(2.0), &z, 0, 0.03).unwrap();
    for i in 0..=6 {
        assert!((b.gains[i] - 2.0 * a.gains[i]).abs() < 1e-15);
        assert!((b.cost[i] - 2.0 * a.cost[i]).abs() < 1e-15);
        assert!((b.liquidation[i] - 2.0 * a.liquidation[i]).abs() < 1e-15);
        assert!((b.value[i] - 2.0 * a.value[i]).abs() < 1e-15);
    }
    let mut prev = liquidation_value(&s, &z, 0, 0.0).unwrap().value;
    for k in [0.01, 0.05, 0.2] {
        let v = liquidation_value(&s, &z, 0, k).unwrap().value;
        assert!(v.iter().zip(&prev).all(|(a, b)| a <= b));
        prev = v;
    }
}

#[test]
fn threshold_gates_read_the_observed_surface() {
    let z = surface(4, 4, |i, m| {
        if i == 1 && m == 4 {
            0.8
        } else {
            1.0 - 0.01 * (m - i) as f64
        }
    });
    let above = Gate::Threshold {
        observe: 1,
        maturity: 4,
        level: 0.9,
        above: true,
    };
    let below = Gate::Threshold {
        observe: 1,
        maturity: 4,
        level: 0.9,
        above: false,
    };
    let closed = Strategy::new(4, vec![hold(1, 4, vec![(4, 1.0)], above)]).unwrap();
    let open = Strategy::new(4, vec![hold(1, 4, vec![(4, 1.0)], below)]).unwrap();
    let c = liquidation_value(&closed, &z, 0, 0.1).unwrap();
    assert!(c.value.iter().all(|v| *v == 0.0));
    let o = liquidation_value(&open, &z, 0, 0.1).unwrap();
    assert!((o.gains[4] - (z.value(0, 4, 4) - z.value(0, 1, 4))).abs() < 1e-15);
    let look_ahead = Gate::Threshold {
        observe: 2,
        maturity: 4,
        level: 0.9,
        above: true,
    };
    assert_eq!(
        Strategy::new(4, vec![hold(1, 4, vec![(4, 1.0)], look_ahead)]),
        Err(Error::FutureInformation { observe: 2, start: 1 })
    );
}

#[test]
fn admissibility_screen() {
    let z = surface(4, 4, |i, m| 1.0 - 0.2 * (m - i) as f64 + 0.1 * i as f64);
    let short = Strategy::new(4, vec![hold(0, 4, vec![(4, -50.0)], Gate::Always)]).unwrap();
    let led = liquidation_value(&short, &z, 0, 0.0).unwrap();
    assert!(led.min_value() < -10.0);
    assert!(!led.admissible(10.0));
    assert!(led.admissible(-led.min_value()));
    assert!(liquidation_value(&short, &z, 0, -0.1).is_err());
}

#[test]
fn integration_by_parts_examples() {
    let z = surface(6, 9, |i, m| 1.0 + 0.1 * i as f64 * m as f64);
    let s = Strategy::new(
        6,
        vec![
            hold(0, 2, vec![(7, 1.5)], Gate::Always),
            hold(3, 6, vec![(6, -2.0), (9, 1.0)], Gate::Always),
        ],
    )
    .unwrap();
    let ibp = integration_by_parts_check(&s, &z, 0).unwrap();
    assert!(ibp.residual <= 1e-12);
    let empty = integration_by_parts_check(&Strategy::empty(6), &z, 0).unwrap();
    assert_eq!(
        (empty.g_dmu, empty.mu_dg, empty.boundary, empty.residual),
        (0.0, 0.0, 0.0, 0.0)
    );
}

fn random_case(n: usize, picks: &[u32], weights: &[f64], levels: &[f64], prices: &[f64]) -> (Strategy, BondSurface) {
    let mat = n + 3;
    let z = surface(n, mat, |i, m| prices[(i * (mat + 1) + m) % prices.len()]);
    let mut holdings = Vec::new();
    let mut at = 0;
    let mut c = 0;
    while at < n {
        let len = 1 + picks[c] as usize % (n - at);
        let skip = picks[c + 1].is_multiple_of(3);
        if !skip {
            let to = at + len;
            let atoms = (0..1 + picks[c + 2] as usize % 3)
                .map(|a| (to + picks[c + 3 + a] as usize % (mat - to + 1), weights[c + a]))
                .collect();
            let gate = if picks[c + 6].is_multiple_of(2) {
                Gate::Always
            } else {
                let observe = picks[c + 7] as usize % (at + 1);
                let maturity = observe + picks[c + 8] as usize % (mat - observe + 1);
                Gate::Threshold {
                    observe,
                    maturity,
                    level: levels[c],
                    above: picks[c + 9].is_multiple_of(2),
                }
            };
            holdings.push(hold(at, to, atoms, gate));
        }
        at += len;
        c += 10;
    }
    (Strategy::new(n, holdings).unwrap(), z)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn integration_by_parts_telescopes(
        n in 2usize..16,
        picks in prop::collection::vec(any::<u32>(), 200),
        weights in prop::collection::vec(-5.0f64..5.0, 200),
        levels in prop::collection::vec(0.5f64..1.5, 200),
        prices in prop::collection::vec(0.2f64..1.8, 400),
    ) {
        let (s, z) = random_case(n, &picks, &weights, &levels, &prices);
        let ibp = integration_by_parts_check(&s, &z, 0).unwrap();
        prop_assert!(ibp.residual <= 1e-10, "{:?}", ibp);
    }

    #[test]
    fn zero_cost_value_is_the_gain_sum(
        n in 2usize..12,
        picks in prop::collection::vec(any::<u32>(), 200),
        weights in prop::collection::vec(-5.0f64..5.0, 200),
        prices in prop::collection::vec(0.2f64..1.8, 400),
        k in 0.0f64..0.5,
    ) {
        let levels = vec![1.0; 200];
        let (s, z) = random_case(n, &picks, &weights, &levels, &prices);
        let free = liquidation_value(&s, &z, 0, 0.0).unwrap();
        prop_assert_eq!(&free.value, &free.gains);
        let paid = liquidation_value(&s, &z, 0, k).unwrap();
        for (a, b) in paid.value.iter().zip(&free.value) {
            prop_assert!(a <= b);
        }
        prop_assert!(s.total_variation() >= 0.0);
    }
}
