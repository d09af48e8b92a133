use std::f64::consts::PI;

use proptest::prelude::*;

use noether_core::lagrangian::{assumption_audit, AuditOptions, LagrangianModel};
use noether_core::models::{beta_quadratic, beta_sine, cyl, flat11, rotating_frame};
use noether_core::path::{init_path, perturbed, DiscretePath};
use noether_core::reduction::{noether_profile, project_to_n};
use noether_core::solver::{minimize, BoundConstants, SolverMode, SolverOptions};
use noether_core::verify::{el_residual, energy_conservation, gradient_check, shooting_gap};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn bounds(m: &LagrangianModel) -> BoundConstants {
    let a = assumption_audit(m, &[(-3.0, 3.0), (-3.0, 3.0)], 200, &AuditOptions::default()).unwrap();
    BoundConstants::from_audit(&a)
}

fn start(m: &LagrangianModel, q: &[f64], winding: i64, n: usize, amp: f64, seed: u64) -> DiscretePath {
    let base = init_path(m, &[0.0, 0.0], q, n, &[winding, 0]).unwrap();
    perturbed(&base, &[0, 1], amp, 3, seed).unwrap()
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn descent_is_monotone_and_bounded(k in 0usize..3, projected in any::<bool>(), seed in 0u64..500,
                                       amp in 0.0f64..0.4, qx in 0.2f64..1.5, qt in -1.0f64..1.0) {
        let m = [flat11(), beta_sine(), beta_quadratic()][k].clone();
        let opts = SolverOptions {
            mode: if projected { SolverMode::ProjectedFull } else { SolverMode::ReducedX },
            grad_tol: 1e-8,
            bounds: Some(bounds(&m)),
            ..Default::default()
        };
        let r = minimize(&m, &start(&m, &[qx, qt], 0, 16, amp, seed), &opts).unwrap().report;
        prop_assert_eq!(r.monotonicity_violations, 0);
        prop_assert_eq!(r.lower_bound_violations, 0);
        for w in r.trace.windows(2).filter(|w| w[0].level_n == w[1].level_n) {
            prop_assert!(w[1].j <= w[0].j + 1e-12);
        }
        prop_assert!(r.converged);
        let tol = r.energy_mean.abs() + 1.0;
        prop_assert!(r.noether_deviation <= 1e-8);
        prop_assert!(r.energy_std <= 1e-3 * tol);
        prop_assert!(r.el_residual <= 1e-3);
        prop_assert!(r.full_grad_norm <= 10.0 * opts.grad_tol);
    }

    #[test]
    fn winding_class_is_preserved(winding in -2i64..3, seed in 0u64..500, amp in 0.0f64..0.3) {
        let m = cyl();
        let init = start(&m, &[PI / 2.0, 0.0], winding, 16, amp, seed);
        let opts = SolverOptions { levels: vec![16], ..Default::default() };
        let sol = minimize(&m, &init, &opts).unwrap();
        prop_assert_eq!(sol.report.winding.clone(), vec![winding, 0]);
        let lift = |p: &DiscretePath| p.end()[0] - p.start()[0];
        prop_assert_eq!(lift(&sol.path), lift(&init));
        let expect = (PI / 2.0 + 2.0 * PI * winding as f64).powi(2);
        prop_assert!((sol.report.j - expect).abs() <= 1e-6 * expect);
    }

    #[test]
    fn gradient_check_passes_on_smooth_models(k in 0usize..3, seed in 0u64..500) {
        let m = [flat11(), beta_sine(), rotating_frame()][k].clone();
        let q: Vec<f64> = (0..m.dim()).map(|j| 0.5 + 0.1 * j as f64).collect();
        let p = vec![0.0; m.dim()];
        let coords: Vec<usize> = (0..m.dim()).collect();
        let z = perturbed(&init_path(&m, &p, &q, 20, &vec![0; m.dim()]).unwrap(), &coords, 0.1, 3, seed).unwrap();
        let c = gradient_check(&m, &z, 4, seed).unwrap();
        prop_assert!(c.max_rel_err <= 1e-5);
    }
}

#[test]
fn closed_form_geodesics_verify_exactly() {
    for (m, q) in [(flat11(), [1.0, 0.5]), (cyl(), [PI / 2.0, -0.3])] {
        let line = init_path(&m, &[0.0, 0.0], &q, 32, &[0, 0]).unwrap();
        assert!(el_residual(&m, &line).unwrap() <= 1e-10);
        assert!(energy_conservation(&m, &line).unwrap().1 <= 1e-14);
        assert!(shooting_gap(&m, &line, 100).unwrap() <= 1e-10);
    }
}

#[test]
fn energy_and_charge_are_independent_checks() {
    let m = flat11();
    let n = 32;
    // ν = cosh θ, τ = sinh θ: energy ν² − τ² is constant while the charge −2τ is not.
    let hyper = DiscretePath::new(
        (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                vec![(2.0 * s).sinh() / 2.0, ((2.0 * s).cosh() - 1.0) / 2.0]
            })
            .collect(),
    )
    .unwrap();
    let (_, std) = energy_conservation(&m, &hyper).unwrap();
    let dev = noether_profile(&m, &hyper).unwrap().deviation;
    assert!(std < 1e-2 * dev, "{std} {dev}");
    // Constant τ with varying ν is a member with varying energy.
    let member = DiscretePath::new((0..=n).map(|i| {
        let s = i as f64 / n as f64;
        vec![s * s, 0.5 * s]
    }).collect()).unwrap();
    let (_, std) = energy_conservation(&m, &member).unwrap();
    assert!(noether_profile(&m, &member).unwrap().deviation <= 1e-14);
    assert!(std > 0.1);
}

#[test]
fn el_residual_decreases_under_refinement() {
    let m = beta_sine();
    let mut res = Vec::new();
    for n in [16, 32, 64] {
        let init = project_to_n(&m, &init_path(&m, &[0.0, 0.0], &[1.0, 0.5], n, &[0, 0]).unwrap()).unwrap();
        let opts = SolverOptions { levels: vec![n], grad_tol: 1e-10, ..Default::default() };
        res.push(minimize(&m, &init, &opts).unwrap().report.el_residual);
    }
    for w in res.windows(2) {
        assert!((w[0] / w[1]).log2() >= 0.9, "{res:?}");
    }
}
