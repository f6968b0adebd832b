use bivo::bounded::{build_qcqp, gtrs_dual_oracle, qcqp_to_socp, reduced_socp, solve_qcqp, QcqpInstance};
use bivo::cone::{solve_cone, ConeSettings, ConeStatus};
use bivo::residual::{normal_terms, ResidualSystem};
use bivo::weighted::gauss_newton_step;
use nalgebra::{DMatrix, DVector, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Random instance built from least-squares data, so both quadratics are PSD
/// and their linear terms lie in range. The bound is placed between the
/// constraint minimum and its value at the unconstrained optimum, or above.
fn random_instance(rng: &mut ChaCha8Rng) -> QcqpInstance<f64> {
    let n = 6;
    let (m0, m1) = (rng.random_range(6..12), rng.random_range(6..12));
    let a0 = random_matrix(rng, m0, n);
    let a1 = random_matrix(rng, m1, n);
    let y0 = DVector::from_fn(m0, |_, _| gaussian(rng));
    let y1 = DVector::from_fn(m1, |_, _| gaussian(rng));
    let mut q = QcqpInstance {
        h_obj: a0.transpose() * &a0,
        h_con: a1.transpose() * &a1,
        b_obj: a0.transpose() * &y0,
        b_con: a1.transpose() * &y1,
        a_obj: y0.norm_squared(),
        a_con: y1.norm_squared(),
        epsilon: 1.0,
    };
    let unconstrained = -q.h_obj.clone().cholesky().unwrap().solve(&q.b_obj);
    let con_min = q.constraint(&-q.h_con.clone().cholesky().unwrap().solve(&q.b_con));
    let at_free = q.constraint(&unconstrained);
    let frac: f64 = rng.random_range(0.02..1.5);
    q.epsilon = con_min + frac * (at_free - con_min) + 1e-9;
    q
}

#[test]
fn cone_solver_matches_dual_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let settings = ConeSettings::default();
    let (mut worst_obj, mut worst_step) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let q = random_instance(&mut rng);
        let cone = solve_qcqp(&q, &settings).unwrap();
        let oracle = gtrs_dual_oracle(&q).unwrap();
        assert_eq!(cone.status, ConeStatus::Optimal);
        worst_obj = worst_obj.max((cone.objective - oracle.objective).abs());
        worst_step = worst_step.max((&cone.step - &oracle.step).norm());
    }
    eprintln!("worst objective gap {worst_obj:e}, worst step gap {worst_step:e}");
    assert!(worst_obj < 1e-6, "objective gap {worst_obj:e}");
    assert!(worst_step < 1e-5, "step gap {worst_step:e}");
}

#[test]
fn huge_bound_reproduces_unconstrained_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let mut q = random_instance(&mut rng);
        q.epsilon = 1e12;
        let cone = solve_qcqp(&q, &ConeSettings::default()).unwrap();
        let free = -q.h_obj.clone().cholesky().unwrap().solve(&q.b_obj);
        assert!((&cone.step - &free).norm() < 1e-6);
    }
}

#[test]
fn enlarging_the_bound_never_raises_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let mut q = random_instance(&mut rng);
        let mut last = f64::INFINITY;
        for scale in [1.0, 1.5, 3.0, 10.0] {
            let base = q.epsilon;
            q.epsilon = base * scale;
            let obj = gtrs_dual_oracle(&q).unwrap().objective;
            assert!(obj <= last + 1e-9);
            last = obj;
            q.epsilon = base;
        }
    }
}

/// A bound halfway between the constraint minimum and its value at zero.
fn midway_bound(q: &QcqpInstance<f64>) -> f64 {
    let min = q.constraint(&-q.h_con.clone().cholesky().unwrap().solve(&q.b_con));
    0.5 * (min + q.a_con)
}

fn random_system(rng: &mut ChaCha8Rng, n: usize) -> ResidualSystem<f64> {
    let mut sys = ResidualSystem::default();
    for _ in 0..n {
        sys.r_i.push(gaussian(rng) * 0.1);
        sys.r_d.push(gaussian(rng) * 0.05);
        sys.j_i.push(Vector6::from_fn(|_, _| gaussian(rng)));
        sys.j_d.push(Vector6::from_fn(|_, _| gaussian(rng)));
        sys.w_i.push(rng.random_range(0.2..1.2));
        sys.w_d.push(rng.random_range(0.2..1.2));
    }
    sys
}

#[test]
fn reduced_cone_matches_full_layout() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let settings = ConeSettings::default();
    for _ in 0..20 {
        let sys = random_system(&mut rng, 12);
        let terms = normal_terms(&sys);
        let mut q = build_qcqp(&terms, 1.0);
        q.epsilon = midway_bound(&q);
        let full = qcqp_to_socp(&q, &sys).unwrap();
        assert_eq!(full.cone_dims, vec![13, 13]);
        assert_eq!(full.h[13], q.epsilon.sqrt());
        let reduced = reduced_socp(&sys, q.epsilon).unwrap();
        assert_eq!(reduced.cone_dims, vec![8, 8]);

        let a = solve_cone(&full, &settings).unwrap();
        let b = solve_cone(&reduced, &settings).unwrap();
        assert_eq!(a.status, ConeStatus::Optimal);
        assert_eq!(b.status, ConeStatus::Optimal);
        assert!((&a.primal - &b.primal).norm() < 1e-6);

        // t* is the intensity norm at the optimum and t*² the QCQP optimum.
        let step = DVector::from_iterator(6, b.primal.rows(1, 6).iter().copied());
        let oracle = gtrs_dual_oracle(&q).unwrap();
        assert!((b.primal[0].powi(2) - oracle.objective).abs() < 1e-6);
        assert!((b.primal[0] - q.objective(&step).sqrt()).abs() < 1e-8);
        // The step satisfies the depth model bound.
        assert!(q.constraint(&step) <= q.epsilon * (1.0 + 1e-6));
    }
}

#[test]
fn inactive_bound_gives_gauss_newton_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sys = random_system(&mut rng, 30);
    let terms = normal_terms(&sys);
    let reduced = reduced_socp(&sys, 1e12).unwrap();
    let sol = solve_cone(&reduced, &ConeSettings::default()).unwrap();
    let gn = gauss_newton_step(&terms, 0.0).unwrap();
    for k in 0..6 {
        assert!((sol.primal[1 + k] - gn[k]).abs() < 1e-6);
    }
}

#[test]
fn zero_residuals_give_zero_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut sys = random_system(&mut rng, 10);
    sys.r_i.iter_mut().for_each(|r| *r = 0.0);
    sys.r_d.iter_mut().for_each(|r| *r = 0.0);
    let q = build_qcqp(&normal_terms(&sys), 1e-3);
    assert_eq!(q.a_obj, 0.0);
    assert_eq!(q.b_obj, DVector::zeros(6));
    let sol = solve_cone(&qcqp_to_socp(&q, &sys).unwrap(), &ConeSettings::default()).unwrap();
    assert_eq!(sol.status, ConeStatus::Optimal);
    assert!(sol.primal.norm() < 1e-7);
}

#[test]
fn constraint_above_bound_at_origin_is_still_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sys = random_system(&mut rng, 15);
    let terms = normal_terms(&sys);
    let mut q = build_qcqp(&terms, 1.0);
    q.epsilon = midway_bound(&q);
    assert!(q.a_con > q.epsilon);
    let oracle = gtrs_dual_oracle(&q).unwrap();
    assert!(q.constraint(&oracle.step) <= q.epsilon * (1.0 + 1e-9));
}
