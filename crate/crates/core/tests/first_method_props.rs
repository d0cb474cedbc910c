use milnor_core::first_method::{
    build_transform, cone_level, default_zero_tol, optimal_cone, solve_lyapunov_identity, split_field,
    weak_attractor_test, AnalysisOptions, Verdict,
};
use milnor_core::linalg;
use milnor_core::ode::{integrate, EventKind, EventSpec, IntegratorConfig};
use milnor_core::system::{AutonomousSystem, Smoothness};
use nalgebra::{dvector, DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn qualifying_jacobian(seed: u64, m: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m - 1;
    let mut r = |s: f64| rng.random_range(-s..s);
    let noise = DMatrix::from_fn(n, n, |_, _| r(1.0));
    let skew = DMatrix::from_fn(n, n, |_, _| r(1.0));
    let stable = -(&noise * noise.transpose()) - DMatrix::identity(n, n) * 0.5 + (&skew - skew.transpose());
    let mut block = DMatrix::zeros(m, m);
    block.view_mut((0, 0), (n, n)).copy_from(&stable);
    for i in 0..n {
        block[(i, n)] = r(2.0);
    }
    let s = DMatrix::identity(m, m) + DMatrix::from_fn(m, m, |_, _| r(0.3));
    let s_inv = s.clone().try_inverse().expect("near-identity matrix is invertible");
    s * block * s_inv
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn transform_zeroes_bottom_row(seed in any::<u64>(), m in 2usize..=8) {
        let j = qualifying_jacobian(seed, m);
        let split = build_transform(&j, default_zero_tol(&j)).unwrap();
        let tj = split.transformed_jacobian(&j);
        prop_assert!(tj.row(m - 1).norm() <= 1e-9 * j.norm(), "bottom {:e} vs |J| {:e}\n{}", tj.row(m - 1).norm(), j.norm(), j);
        let id = &split.transform * &split.inverse - DMatrix::<f64>::identity(m, m);
        prop_assert!(id.amax() <= 1e-10);
        prop_assert!(split.eigen_mismatch <= 1e-6 * j.norm());
    }

    #[test]
    fn lyapunov_solution_is_spd(seed in any::<u64>(), m in 2usize..=8) {
        let j = qualifying_jacobian(seed, m);
        let split = build_transform(&j, default_zero_tol(&j)).unwrap();
        let h = solve_lyapunov_identity(&split.a).unwrap();
        prop_assert!(linalg::min_symmetric_eigenvalue(&h) > 0.0);
    }

    #[test]
    fn golden_section_matches_grid(alpha1 in 0.2f64..5.0, beta1 in 0.2f64..5.0, gamma in 0.2f64..5.0) {
        let cone = optimal_cone(alpha1, beta1, gamma).unwrap();
        let kmax = alpha1 / beta1;
        let step = 1e-4 * kmax;
        let mut best = 0.0f64;
        let mut k = step;
        while k < kmax {
            best = best.max(cone_level(k, alpha1, beta1, gamma));
            k += step;
        }
        prop_assert!(cone.a_star >= best * (1.0 - 1e-6));
        prop_assert!(cone.k_star > 0.0 && cone.k_star < kmax);
    }
}

#[test]
fn cone_points_stay_and_approach_origin() {
    let system = AutonomousSystem::new(2, Smoothness::C2AtOrigin, |z| {
        dvector![-z[0] + z[1], -z[0] * z[0] - z[1] * z[1]]
    })
    .unwrap();
    let cert = weak_attractor_test(&system, &AnalysisOptions::default()).unwrap();
    assert_eq!(cert.verdict, Verdict::WeakAttractor);
    let region = cert.region().unwrap();
    let split = cert.split.clone();
    let config = IntegratorConfig::rk45(1e-10, 1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let y0 = region.sample(&mut rng);
        // the critical coordinate decays like 1/t, so run until the norm has halved
        let halving = [EventSpec::halt(EventKind::NormBelow { threshold: 0.5 * y0.norm() })];
        let field = |_: f64, y: &DVector<f64>| split_field(&system, &split, y);
        let traj = integrate(field, &y0, 0.0, 1e6, &config, &halving).unwrap();
        for y in &traj.states {
            assert!(region.contains(y, 1e-8), "left the cone at {y:?} from {y0:?}");
        }
        assert!(traj.last_state().norm() < y0.norm());
    }
}
