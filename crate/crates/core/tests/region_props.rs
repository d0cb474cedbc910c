use std::sync::Arc;

use milnor_core::observer::{simulate_observer, ObserverSystem};
use milnor_core::ode::{integrate, IntegratorConfig};
use milnor_core::region::{
    check_condition4, omega_membership, verify_forward_invariance, verify_limit_properties, Psi, RegionOmegaA,
};
use milnor_core::system::CascadeSystem;
use milnor_core::tightness::{example_cone, example_integrator, Example1Params};
use nalgebra::{dvector, DVector};
use proptest::prelude::*;

fn capped_cone() -> RegionOmegaA {
    example_cone(1.0, 1.0).capped(2.0).unwrap()
}

#[test]
fn example_cone_is_forward_invariant_at_threshold() {
    let params = Example1Params::new(1.0, 1.0, 0.25).unwrap();
    let region = capped_cone();
    let config = example_integrator();
    let report = verify_forward_invariance(&params.cascade(), &region, 100, 100.0, None, &config, 3).unwrap();
    assert_eq!(report.stay_count, 100, "{}", report.summary());

    let field = params.field();
    for outcome in report.outcomes.iter().filter(|o| o.stayed) {
        let traj = integrate(&field, &outcome.start, 0.0, 100.0, &config, &[]).unwrap();
        for z in &traj.states {
            let v = (region.v)(&dvector![z[0]]);
            assert!(v <= region.a + report.margin * (1.0 + z.norm()), "V = {v} from {}", outcome.start);
        }
    }
}

#[test]
fn escapes_are_recorded_above_threshold() {
    let params = Example1Params::new(1.0, 1.0, 0.275).unwrap();
    let report =
        verify_forward_invariance(&params.cascade(), &capped_cone(), 60, 100.0, None, &example_integrator(), 3).unwrap();
    let escapes: Vec<_> = report.escapes().collect();
    assert!(!escapes.is_empty());
    assert!(escapes.iter().all(|o| o.first_violation.is_some()));
    assert!(report.to_csv().contains(",escaped,"));
}

#[test]
fn condition_verdict_flips_with_the_perturbation() {
    let psi = Psi::SqrtFamily(0.5);
    let below = Example1Params::new(1.0, 1.0, 0.25 - 1e-6).unwrap().comparison_data();
    let above = Example1Params::new(1.0, 1.0, 0.25 + 1e-6).unwrap().comparison_data();
    assert!(check_condition4(&below, &psi, 1.0, 500).unwrap().holds());
    assert!(!check_condition4(&above, &psi, 1.0, 500).unwrap().holds());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn membership_is_monotone_in_lambda(x in -1.5f64..1.5, s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let region = capped_cone();
        let x = dvector![x];
        let low = region.psi.eval((region.v)(&x));
        let top = region.top();
        prop_assume!(low <= top);
        let (l1, l2) = (low + s.min(t) * (top - low), low + s.max(t) * (top - low));
        if omega_membership(&x, l1, &region) {
            prop_assert!(omega_membership(&x, l2, &region));
        }
    }
}

fn observer_cascade(sys: ObserverSystem) -> CascadeSystem {
    let (k, m) = (sys.k(), sys.m());
    let rate_sys = sys.clone();
    CascadeSystem::new(
        k + m,
        move |x: &DVector<f64>, l: f64, t: f64| {
            let mut z = DVector::zeros(k + m + 1);
            z.rows_mut(0, k + m).copy_from(x);
            z[k + m] = l;
            sys.rhs(t, &z).rows(0, k + m).into_owned()
        },
        move |x: &DVector<f64>, _l: f64, _t: f64| -rate_sys.gamma() * rate_sys.params().c.dot(&x.rows(0, k)).abs(),
    )
    .unwrap()
}

#[test]
fn observer_lambda_settles_monotonically() {
    let sys = ObserverSystem::scalar_example(0.05, 1.0, 0.0).unwrap();
    // fixed steps keep the tail densely sampled once the state has settled
    let traj = simulate_observer(&sys, &dvector![1.0, 1.0], &IntegratorConfig::rk4(0.05), 200.0).unwrap();
    let cascade = observer_cascade(sys);
    let limit = verify_limit_properties(&traj, &cascade, 1.0, 0.1, 1e-10).unwrap();
    assert!(limit.monotone);
    assert!(limit.limit_in_range);
    assert!(limit.g_residual < 1e-3, "{limit:?}");
}

#[test]
fn psi_must_vanish_at_zero() {
    let bad = Psi::Custom {
        psi: milnor_core::region::ScalarFn::new("psi", milnor_core::region::Monotonicity::Increasing, |v| 1.0 + v),
        derivative: None,
    };
    assert!(RegionOmegaA::new(1.0, bad, Arc::new(|x: &DVector<f64>| x.norm_squared())).is_err());
}
