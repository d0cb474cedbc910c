use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use milnor_core::observer::{
    auxiliary_z_norms, check_c1_c4, construct_mky, extended_regressor, fit_exponential_rate, gamma_search,
    lemma1_bound_check, lyapunov_increase, pe_check, simulate_observer, verify_mky, GammaCriteria, ObserverParams,
    ObserverSystem,
};
use milnor_core::ode::{IntegratorConfig, Trajectory};
use nalgebra::{dvector, DMatrix, DVector};
use proptest::prelude::*;

const ATOL: f64 = 1e-12;

fn run(phase: f64, tf: f64) -> (ObserverSystem, Trajectory) {
    let sys = ObserverSystem::scalar_example(0.05, 1.0, phase).unwrap();
    let traj = simulate_observer(&sys, &dvector![1.0, 1.0], &IntegratorConfig::rk45(1e-9, ATOL), tf).unwrap();
    (sys, traj)
}

#[test]
fn lambda_and_energy_never_grow() {
    for phase in [0.0, FRAC_PI_2] {
        let (sys, traj) = run(phase, 200.0);
        assert!(traj.events.is_empty(), "{:?}", traj.events);
        for pair in traj.states.windows(2) {
            assert!(pair[1][2] <= pair[0][2] + ATOL);
            assert!(pair[1][2] > 0.0);
        }
        let (p, _, _) = construct_mky(&sys.params().a, &sys.params().b).unwrap();
        let rise = lyapunov_increase(&sys, &p, &traj);
        assert!(rise <= 10.0 * ATOL, "phase {phase}: V rose by {rise:e}");
    }
}

#[test]
fn pe_certificate_is_shift_invariant() {
    let reg = |t: f64| dvector![t.sin(), t.cos()];
    let a = pe_check(reg, 2.0 * PI, 0.0, 20.0, 0.5).unwrap();
    let b = pe_check(reg, 2.0 * PI, 1.7, 20.0, 0.5).unwrap();
    assert!((a.mu - b.mu).abs() <= 1e-6);
    assert!((a.mu - PI).abs() <= 1e-6);
    assert!(a.m_phi >= 1.0);
}

fn polynomial_system(coeffs: Vec<f64>, lambda0: f64) -> ObserverSystem {
    let value = coeffs.clone();
    ObserverSystem::new(ObserverParams {
        a: DMatrix::from_element(1, 1, -1.0),
        b: dvector![1.0],
        c: dvector![0.5],
        big_gamma: DMatrix::identity(1, 1),
        gamma: 0.05,
        phi: Arc::new(|t| dvector![t.sin()]),
        v: Arc::new(move |t, l| t.cos() * value.iter().enumerate().map(|(j, a)| a * l.powi(j as i32 + 1)).sum::<f64>()),
        dv_dlambda: Some(Arc::new(move |t, l| {
            t.cos() * coeffs.iter().enumerate().map(|(j, a)| (j + 1) as f64 * a * l.powi(j as i32)).sum::<f64>()
        })),
        lambda0,
        dv_window: 2.0 * PI,
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn regressor_matches_polynomial_closed_form(
        coeffs in prop::collection::vec(-2.0f64..2.0, 1..=8),
        level in 0.05f64..1.5,
        t in 0.0f64..10.0,
    ) {
        let poly = |l: f64| coeffs.iter().enumerate().map(|(j, a)| a * l.powi(j as i32 + 1)).sum::<f64>();
        let sys = polynomial_system(coeffs.clone(), 1.5);
        let reg = extended_regressor(&sys, move |_| level);
        let got = reg(t);
        // the mean slope over [0, level] is the secant slope
        let exact = t.cos() * poly(level) / level;
        prop_assert!((got[1] - exact).abs() <= 1e-10, "{} vs {}", got[1], exact);
        prop_assert_eq!(got[0], t.sin());
    }

    #[test]
    fn constructed_triples_verify(
        raw in prop::collection::vec(-1.0f64..1.0, 16),
        skew in prop::collection::vec(-2.0f64..2.0, 16),
        b in prop::collection::vec(-2.0f64..2.0, 4),
        k in 1usize..=4,
    ) {
        let m = DMatrix::from_row_slice(k, k, &raw[..k * k]);
        let s = DMatrix::from_row_slice(k, k, &skew[..k * k]);
        let a = -(m.transpose() * &m) - 0.1 * DMatrix::identity(k, k) + (&s - s.transpose());
        let b = DVector::from_column_slice(&b[..k]);
        let (p, q, c) = construct_mky(&a, &b).unwrap();
        let scale = 1.0 + a.norm() * p.norm();
        prop_assert!(verify_mky(&a, &b, &c, &p, &q, 1e-9 * scale).is_ok());
        let shifted = &c + DVector::from_element(k, 1e-3);
        prop_assert!(!verify_mky(&a, &b, &shifted, &p, &q, 1e-9 * scale).is_ok());
    }
}

#[test]
fn rotating_matrix_has_no_triple() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    assert!(construct_mky(&a, &dvector![0.0, 1.0]).is_err());
}

#[test]
fn auxiliary_variable_vanishes_on_the_cosine_run() {
    let (sys, traj) = run(FRAC_PI_2, 500.0);
    let z = auxiliary_z_norms(&sys, &traj);
    let tail = traj.times.iter().zip(&z).filter(|(t, _)| **t >= 450.0).map(|(_, z)| *z).fold(0.0, f64::max);
    assert!(tail < 1e-3, "z tail {tail}");
}

#[test]
fn cosine_run_meets_the_convergence_diagnostics() {
    let (_, traj) = run(FRAC_PI_2, 200.0);
    let report = check_c1_c4(&traj, 1).unwrap();
    assert!(report.all_hold, "{report:?}");
    assert!(lemma1_bound_check(&traj, report.lemma_constant()));
    let fit = fit_exponential_rate(&traj, 0.0).unwrap();
    assert!(fit.fitted_rate > 0.0 && fit.fit_quality > 0.95, "{fit:?}");
    assert!(fit.lemma1_holds);
}

#[test]
fn gamma_search_keeps_the_passing_value() {
    let sys = ObserverSystem::scalar_example(0.05, 1.0, 0.0).unwrap();
    let criteria = GammaCriteria {
        horizon: 50.0,
        bound: 10.0,
    };
    let x0 = dvector![1.0, 1.0];
    let config = IntegratorConfig::default();
    let report = gamma_search(&sys, &x0, 10.0, &criteria, &config).unwrap();
    assert!(report.gamma_star >= 0.05, "{report:?}");
    let capped = gamma_search(&sys, &x0, 0.05, &criteria, &config).unwrap();
    assert_eq!(capped.gamma_star, 0.05);
}
