use hjm_core::drift_engine::{integrated_drift_residual, rw_drift, DriftInputs};
use hjm_core::model_spec::{CurveShape, JumpMeasure, JumpVolSpec, MarkFn, TimeFn, VolSpec};
use hjm_core::{Grid, Mode, ModelSpec};
use proptest::prelude::*;

fn vasicek(c: &[f64], delta: &[f64], lambda: f64) -> ModelSpec {
    let m = c.len() - 1;
    let mut s = ModelSpec::new(m, 1);
    s.vol = VolSpec::VasicekExp { c: c.to_vec(), delta: delta.to_vec() };
    s.initial_curves = (0..=m)
        .map(|i| CurveShape::NelsonSiegel { b0: 0.03 + 0.005 * i as f64, b1: -0.01, b2: 0.01, tau: 2.0 })
        .collect();
    s.market_price.lambda = vec![TimeFn::Constant(lambda)];
    s
}

fn params() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1usize..4).prop_flat_map(|m| {
        (
            prop::collection::vec(0.001f64..0.05, m + 1),
            prop::collection::vec(-3.0f64..-0.3, m + 1),
            -0.5f64..0.5,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn risk_neutral_is_the_zero_price_of_risk_case((c, d, _) in params(), t in 0.0f64..1.0) {
        let mut s = vasicek(&c, &d, 0.0);
        s.jump_vol = JumpVolSpec::ExpMark { g: vec![0.01; c.len()], eps: vec![-1.0; c.len()] };
        s.jumps = JumpMeasure::atoms(vec![-0.5, 0.3], vec![0.2, 0.4]).unwrap();
        s.market_price.psi = MarkFn::Constant(0.0);
        let g = Grid::new(0.01, 1.0, 5.0).unwrap();
        let f = s.initial_family(&g).unwrap();
        let rw = rw_drift(&DriftInputs::new(&f, t, &s).with_mode(Mode::RealWorld)).unwrap();
        let rn = rw_drift(&DriftInputs::new(&f, t, &s).with_mode(Mode::RiskNeutral)).unwrap();
        prop_assert_eq!(rw, rn);
    }

    #[test]
    fn drift_vanishes_at_the_horizon((c, d, lambda) in params(), fine in any::<bool>()) {
        let s = vasicek(&c, &d, lambda);
        let dx = if fine { 1e-3 } else { 1e-2 };
        let g = Grid::new(dx, 1.0, 8.0).unwrap();
        let f = s.initial_family(&g).unwrap();
        let a = rw_drift(&DriftInputs::new(&f, 0.0, &s)).unwrap();
        let xm = g.horizon_xi() - g.step();
        for i in 0..c.len() {
            // |α(ξ)| ≤ (c²/|δ| + |λ| c) e^{δξ}; the product β β̄ is rebuilt
            // from its derivative, which leaves an O(Δξ²) offset behind
            let eps = (c[i] * c[i] / d[i].abs() + lambda.abs() * c[i]) * (d[i] * xm).exp();
            let slack = c[i] * c[i] * (1.0 + d[i] * d[i]) * dx * dx;
            let v = a.get(i).eval(xm).unwrap();
            prop_assert!(v.abs() <= eps + slack, "index {i}: {v} vs {eps} + {slack}");
        }
    }

    #[test]
    fn integrated_residual_is_small((c, d, lambda) in params(), t in 0.0f64..1.0, tau in 0.0f64..4.0) {
        let s = vasicek(&c, &d, lambda);
        let g = Grid::new(1e-3, 1.0, 5.0).unwrap();
        let f = s.initial_family(&g).unwrap();
        for r in integrated_drift_residual(&DriftInputs::new(&f, t, &s), t + tau).unwrap() {
            prop_assert!(r.abs() < 1e-6, "{r}");
        }
    }

    #[test]
    fn perturbed_drift_shows_in_the_residual((c, d, lambda) in params(), tau in 0.1f64..4.0, eps in -0.02f64..0.02) {
        let mut s = vasicek(&c, &d, lambda);
        s.drift_perturbation = eps;
        let g = Grid::new(1e-3, 1.0, 5.0).unwrap();
        let f = s.initial_family(&g).unwrap();
        let tau = (tau / g.step()).round() * g.step();
        for r in integrated_drift_residual(&DriftInputs::new(&f, 0.0, &s), tau).unwrap() {
            prop_assert!((r - eps * tau).abs() < 1e-6, "{r} vs {}", eps * tau);
        }
    }

    /// `‖c e^{δ·}‖²_ρ = c² (1 + δ²/(−(2δ+ρ)))`.
    #[test]
    fn vasicek_volatility_norm(c in 0.001f64..0.1, d in -3.0f64..-0.75, rho in 0.1f64..1.0) {
        let s = vasicek(&[c], &[d], 0.0);
        let g = Grid::new(1e-4, 0.0, 60.0).unwrap();
        let f = s.initial_family(&g).unwrap();
        let beta = &s.beta(&f)[0][0];
        let want = (c * c * (1.0 + d * d / -(2.0 * d + rho))).sqrt();
        let got = beta.norm(rho).unwrap();
        prop_assert!((got - want).abs() <= 1e-8 * want, "{got} vs {want}");
    }
}

#[test]
fn single_curve_drift_closed_form() {
    let (c, d, lambda) = (0.02, -0.7, 0.3);
    let s = vasicek(&[c], &[d], lambda);
    let g = Grid::new(1e-3, 1.0, 6.0).unwrap();
    let f = s.initial_family(&g).unwrap();
    let a = rw_drift(&DriftInputs::new(&f, 0.0, &s)).unwrap();
    for k in (0..5000).step_by(250) {
        let x = k as f64 * g.step();
        let want = c * c / d * ((2.0 * d * x).exp() - (d * x).exp()) - lambda * c * (d * x).exp();
        assert!((a.get(0).node_value(k) - want).abs() < 1e-9, "ξ = {x}");
    }
}
