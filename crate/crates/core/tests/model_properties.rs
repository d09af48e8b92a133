use proptest::prelude::*;

use noether_core::dsl::parse_expr;
use noether_core::lagrangian::{
    build_lc, convexity_modulus_estimate, fiber_hessian, lc_noether_residual, lk_sum_residual,
    negative_eigenvalue_count, qk_identity_residual, quadgrowth_margin, LagrangianModel,
};
use noether_core::models::{beem_toy, beta_quadratic, beta_sine, cyl, flat11, minkowski, rotating_frame};
use noether_core::numerics::dot;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn models() -> Vec<LagrangianModel> {
    vec![flat11(), cyl(), rotating_frame(), beta_sine(), beem_toy(), beta_quadratic(), minkowski(3)]
}

fn point(dim: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, dim)
}

fn model_and_sample() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (0..models().len()).prop_flat_map(|k| {
        let dim = models()[k].dim();
        (Just(k), point(dim, 1.4), point(dim, 2.0))
    })
}

fn central(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn structural_identities_hold((k, x, v) in model_and_sample()) {
        let m = &models()[k];
        prop_assert!(qk_identity_residual(m, &x).unwrap() <= 1e-10);
        prop_assert!(lc_noether_residual(m, &x, &v).unwrap() <= 1e-8);
        prop_assert!(lk_sum_residual(m, &x).unwrap() <= 1e-10);
    }

    #[test]
    fn growth_bound_holds((k, x, v) in model_and_sample()) {
        let m = &models()[k];
        let lambda = convexity_modulus_estimate(&build_lc(m), &x, 8).unwrap();
        prop_assert!(lambda > 0.0);
        prop_assert!(quadgrowth_margin(m, lambda, &x, &v).unwrap() >= -1e-10);
    }

    #[test]
    fn derivatives_match_differences((k, x, v) in model_and_sample()) {
        let m = &models()[k];
        let gv = m.grad_v(&x, &v).unwrap();
        let gx = m.grad_x(&x, &v).unwrap();
        for j in 0..m.dim() {
            let shift = |w: &[f64], h: f64| { let mut w = w.to_vec(); w[j] += h; w };
            let fv = central(|h| m.value(&x, &shift(&v, h)).unwrap(), 1e-5);
            let fx = central(|h| m.value(&shift(&x, h), &v).unwrap(), 1e-5);
            prop_assert!((gv[j] - fv).abs() <= 1e-6 * gv[j].abs().max(1.0));
            prop_assert!((gx[j] - fx).abs() <= 1e-6 * gx[j].abs().max(1.0));
        }
    }

    #[test]
    fn indefinite_models_have_index_one(k in 0usize..3, x in point(3, 1.4), v in point(3, 2.0)) {
        let m = [rotating_frame(), beem_toy(), minkowski(3)][k].clone();
        prop_assume!(dot(&v, &v) > 1e-4);
        let h = fiber_hessian(&m, &x, &v).unwrap();
        prop_assert_eq!(negative_eigenvalue_count(&h, 1e-9), 1);
        let hc = fiber_hessian(&build_lc(&m), &x, &v).unwrap();
        prop_assert_eq!(negative_eigenvalue_count(&hc, 0.0), 0);
        prop_assert!(hc.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn product_form_reproduces_l(k in 0usize..4, x in point(2, 1.4), v in point(2, 2.0)) {
        let m = [flat11(), cyl(), beta_sine(), beta_quadratic()][k].clone();
        let ps = m.product().unwrap();
        let (xs, _) = ps.split(&x);
        let (nu, tau) = ps.split(&v);
        let l0 = ps.l0.value(&xs, &nu).unwrap();
        let om = dot(&ps.omega.value(&xs).unwrap(), &nu);
        let expect = l0 + 2.0 * (om + 0.5 * ps.d.value(&xs).unwrap()) * tau - ps.beta.value(&xs).unwrap() * tau * tau;
        prop_assert!((m.value(&x, &v).unwrap() - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
    }

    #[test]
    fn lorentz_complement_is_the_orthogonal_metric(x in point(3, 1.4), v in point(3, 2.0)) {
        let m = rotating_frame();
        let k = m.symmetry(&x).unwrap();
        let g = |a: &[f64], b: &[f64]| {
            let p: Vec<f64> = a.iter().zip(b).map(|(s, t)| s + t).collect();
            let q: Vec<f64> = a.iter().zip(b).map(|(s, t)| s - t).collect();
            0.25 * (m.value(&x, &p).unwrap() - m.value(&x, &q).unwrap())
        };
        let expect = g(&v, &v) - 2.0 * g(&k, &v).powi(2) / g(&k, &k);
        let lc = build_lc(&m).value(&x, &v).unwrap();
        prop_assert!((lc - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
    }

    #[test]
    fn beem_sum_identity(x in point(3, 1.4)) {
        let m = beem_toy();
        let k = m.symmetry(&x).unwrap();
        let zero = vec![0.0; 3];
        let lhs = m.value(&x, &k).unwrap() + build_lc(&m).value(&x, &k).unwrap();
        let rhs = 2.0 * (m.value(&x, &zero).unwrap() + m.charge_offset(&x).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10);
    }
}

const VARS: [&str; 4] = ["x0", "x1", "v0", "v1"];

/// Random expressions whose values stay finite on `[0.3, 1.7]^4`.
fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        prop::sample::select(VARS.to_vec()).prop_map(String::from),
        (0.1f64..3.0).prop_map(|c| format!("{c}")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), prop::sample::select(vec!["+", "-", "*"]))
                .prop_map(|(a, b, op)| format!("({a}) {op} ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})/(1 + ({b})^2)")),
            (inner.clone(), 1u8..4).prop_map(|(a, p)| format!("({a})^{p}")),
            (inner.clone(), prop::sample::select(vec!["sin", "cos", "tanh", "exp"]))
                .prop_map(|(a, f)| format!("{f}(0.1*({a}))")),
            inner.clone().prop_map(|a| format!("sqrt(1 + ({a})^2)")),
            inner.clone().prop_map(|a| format!("log(2 + sin({a}))")),
            inner.prop_map(|a| format!("-({a})")),
        ]
    })
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn printing_round_trips(text in expr(), p in prop::collection::vec(0.3f64..1.7, 4)) {
        let ast = parse_expr(&text, &VARS).unwrap();
        let again = parse_expr(&ast.to_string(), &VARS).unwrap();
        let (a, b) = (ast.eval(&p).unwrap(), again.eval(&p).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{} vs {}: {} {}", text, ast, a, b);
    }

    #[test]
    fn derivatives_match_central_differences(text in expr(), p in prop::collection::vec(0.3f64..1.7, 4), k in 0usize..4) {
        let ast = parse_expr(&text, &VARS).unwrap();
        let exact = ast.diff_index(k).eval(&p).unwrap();
        let f = |h: f64| { let mut q = p.clone(); q[k] += h; ast.eval(&q).unwrap() };
        let d = |h: f64| central(f, h);
        let approx = (4.0 * d(5e-4) - d(1e-3)) / 3.0;
        prop_assert!((exact - approx).abs() <= 1e-7 * exact.abs().max(1.0), "{}: {} vs {}", text, exact, approx);
    }

    #[test]
    fn parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..40)) {
        let text = String::from_utf8_lossy(&bytes);
        if let Ok(ast) = parse_expr(&text, &VARS) {
            let _ = ast.eval(&[0.5; 4]);
            let _ = ast.diff_index(0).to_string();
        }
    }

    #[test]
    fn parser_never_panics_on_token_soup(parts in prop::collection::vec(
        prop::sample::select(vec!["x0", "v1", "(", ")", "+", "-", "*", "/", "^", "sin", "2", "1e", ".5", " ", "abs", ","]), 0..30)) {
        let text = parts.concat();
        let _ = parse_expr(&text, &VARS);
    }
}
