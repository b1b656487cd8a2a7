use mtscale_core::lawfit::{ChinchillaFit, DataUnit};
use mtscale_core::planner::{self, SixNd};
use mtscale_core::Error;
use proptest::prelude::*;

fn law(e: f64, a: f64, alpha: f64, b: f64, beta: f64, unit: DataUnit) -> ChinchillaFit {
    ChinchillaFit {
        e,
        a,
        alpha,
        b,
        beta,
        objective: 0.0,
        converged: true,
        n_points: 0,
        data_unit: unit,
    }
}

fn fits() -> impl Strategy<Value = ChinchillaFit> {
    (
        0.5f64..3.0,
        10.0f64..2000.0,
        0.1f64..0.8,
        10.0f64..5000.0,
        0.1f64..0.8,
    )
        .prop_map(|(e, a, alpha, b, beta)| law(e, a, alpha, b, beta, DataUnit::Tokens))
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// `N* = G·(C/6)^(β/(α+β))` with `G = (αa / βb)^(1/(α+β))`.
fn closed_form_n(fit: &ChinchillaFit, budget: f64) -> f64 {
    let s = fit.alpha + fit.beta;
    let g = (fit.alpha * fit.a / (fit.beta * fit.b)).powf(1.0 / s);
    g * (budget / 6.0).powf(fit.beta / s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn inversions_round_trip(fit in fits(), ln_n in 15.0f64..24.0, ln_d in 15.0f64..28.0) {
        let (n, d) = (ln_n.exp(), ln_d.exp());
        let target = fit.predict(n, d);
        let d_back = planner::data_needed(&fit, n, target);
        let n_back = planner::params_needed(&fit, d, target);
        if fit.data_term(d) > 1e-6 * target {
            prop_assert!(rel(d_back.unwrap(), d) < 1e-9 * (target / fit.data_term(d)).max(1.0));
        }
        if fit.model_term(n) > 1e-6 * target {
            prop_assert!(rel(n_back.unwrap(), n) < 1e-9 * (target / fit.model_term(n)).max(1.0));
        }
    }

    #[test]
    fn targets_below_the_floor_are_infeasible(fit in fits(), ln_n in 15.0f64..24.0, below in 0.0f64..1.0) {
        let n = ln_n.exp();
        let floor = fit.e + fit.model_term(n);
        match planner::data_needed(&fit, n, floor - below) {
            Err(Error::InfeasibleTarget { floor: reported, .. }) => prop_assert_eq!(reported, floor),
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn isoflop_matches_closed_form(fit in fits(), ln_c in 40.0f64..60.0) {
        let budget = ln_c.exp();
        let expected = closed_form_n(&fit, budget);
        prop_assume!(expected > 10.0 && 6.0 * expected < budget / 10.0);
        let opt = planner::isoflop_optimum(&fit, budget, &SixNd::per_token()).unwrap();
        prop_assert!(rel(opt.n, expected) < 1e-3, "{} vs {}", opt.n, expected);
        prop_assert!(rel(6.0 * opt.n * opt.d, budget) < 1e-9);
        prop_assert_eq!(opt.data_unit, DataUnit::Tokens);
    }
}

#[test]
fn isoflop_sweep_is_monotone() {
    let fit = law(1.7, 400.0, 0.34, 1200.0, 0.28, DataUnit::Tokens);
    let cost = SixNd::per_token();
    let sweep: Vec<_> = (0..20)
        .map(|i| planner::isoflop_optimum(&fit, 1e18 * 2f64.powi(i), &cost).unwrap())
        .collect();
    for w in sweep.windows(2) {
        assert!(w[1].loss <= w[0].loss);
        assert!(w[1].n >= w[0].n * (1.0 - 1e-6));
        assert!(w[1].d >= w[0].d * (1.0 - 1e-6));
    }
    for opt in &sweep {
        assert!(rel(opt.n, closed_form_n(&fit, opt.budget)) < 1e-3);
        assert_eq!(opt.curve.len(), 200);
        assert!(opt.curve.iter().all(|p| p.loss >= opt.loss - 1e-12));
    }
}

#[test]
fn constructed_fourfold_match() {
    let (small, big, d): (f64, f64, f64) = (8.5e7, 3.0e8, 2.0e9);
    let (e, a, alpha, beta) = (1.7, 400.0, 0.34, 0.28);
    let model_gap = a * (small.powf(-alpha) - big.powf(-alpha));
    let b = model_gap / (d.powf(-beta) * (1.0 - 4f64.powf(-beta)));
    let fit = law(e, a, alpha, b, beta, DataUnit::Samples);
    let m = planner::match_model(&fit, small, big, d, &SixNd::per_sample(512)).unwrap();
    assert!(rel(m.multiplier, 4.0) < 1e-9, "{m:?}");
    assert!(rel(m.small_flops / m.big_flops, 4.0 * small / big) < 1e-12);
    assert_eq!(m.data_unit, DataUnit::Samples);

    assert!(matches!(
        planner::match_model(&fit, 1e3, big, d, &SixNd::per_sample(512)),
        Err(Error::InfeasibleTarget { .. })
    ));
    assert!(matches!(
        planner::match_model(&fit, small, big, d, &SixNd::per_token()),
        Err(Error::UnitMismatch { .. })
    ));
}
