//! Bounded-objective method: minimize `F_I` subject to `F_D ≤ ε_D`.
//!
//! Each step solves the convex QCQP
//!
//! ```text
//! minimize    Δᵀ H_I Δ + 2 b_Iᵀ Δ + a_I
//! subject to  Δᵀ H_D Δ + 2 b_Dᵀ Δ + a_D ≤ ε_D
//! ```
//!
//! rewritten as a second-order cone program over `(t, Δ)`:
//! `‖Ω_I^{1/2}(J_I Δ + r_I)‖ ≤ t`, `‖Ω_D^{1/2}(J_D Δ + r_D)‖ ≤ √ε_D`,
//! minimizing `t`.

use nalgebra::{DMatrix, DVector, Vector6};

use super::{run_alignment, small_change, AlignmentResult, Objectives, SolverSettings, StepRule};
use crate::cone::{solve_cone, ConeProblem, ConeSettings, ConeStatus};
use crate::dataset::FramePair;
use crate::error::{Error, Result};
use crate::geometry::MotionTwist;
use crate::residual::{NormalTerms, ObjectiveTerms, ResidualSystem};
use crate::scalar::{lit, Real};

/// Factor applied to `a_D` when the depth bound has to be relaxed.
pub const RELAXATION_FACTOR: f64 = 1.0 + 1e-3;

/// Convex QCQP with one quadratic constraint, in any dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct QcqpInstance<T: Real> {
    pub h_obj: DMatrix<T>,
    pub h_con: DMatrix<T>,
    pub b_obj: DVector<T>,
    pub b_con: DVector<T>,
    pub a_obj: T,
    pub a_con: T,
    pub epsilon: T,
}

fn quadratic<T: Real>(h: &DMatrix<T>, b: &DVector<T>, a: T, x: &DVector<T>) -> T {
    (h * x).dot(x) + b.dot(x) * lit(2.0) + a
}

impl<T: Real> QcqpInstance<T> {
    pub fn dim(&self) -> usize {
        self.b_obj.len()
    }

    pub fn objective(&self, x: &DVector<T>) -> T {
        quadratic(&self.h_obj, &self.b_obj, self.a_obj, x)
    }

    pub fn constraint(&self, x: &DVector<T>) -> T {
        quadratic(&self.h_con, &self.b_con, self.a_con, x)
    }

    /// Checks shapes, symmetry and positive semidefiniteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        for (name, h, b) in [
            ("objective", &self.h_obj, &self.b_obj),
            ("constraint", &self.h_con, &self.b_con),
        ] {
            if h.nrows() != n || h.ncols() != n || b.len() != n {
                return Err(Error::InvalidInput(format!(
                    "{name} terms have inconsistent sizes"
                )));
            }
            let scale = h.amax().max(T::one());
            if (h - h.transpose()).amax() > scale * lit(1e-10) {
                return Err(Error::InvalidInput(format!("{name} matrix is not symmetric")));
            }
            let min_eig = h.clone().symmetric_eigenvalues().min();
            if min_eig < -scale * lit(1e-10) {
                return Err(Error::InvalidInput(format!(
                    "{name} matrix is not positive semidefinite (eigenvalue {min_eig:?})"
                )));
            }
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidInput("depth bound must be positive".into()));
        }
        Ok(())
    }
}

fn dense_terms<T: Real>(t: &ObjectiveTerms<T>) -> (DMatrix<T>, DVector<T>) {
    (
        DMatrix::from_iterator(6, 6, t.h.iter().copied()),
        DVector::from_iterator(6, t.b.iter().copied()),
    )
}

/// Objective from the intensity terms, constraint from the depth terms.
pub fn build_qcqp<T: Real>(terms: &NormalTerms<T>, epsilon_d: T) -> QcqpInstance<T> {
    let (h_obj, b_obj) = dense_terms(&terms.intensity);
    let (h_con, b_con) = dense_terms(&terms.depth);
    QcqpInstance {
        h_obj,
        h_con,
        b_obj,
        b_con,
        a_obj: terms.intensity.a,
        a_con: terms.depth.a,
        epsilon: epsilon_d,
    }
}

/// Full cone program over `(t, Δ)` with one row per residual.
///
/// `G` stacks `[−1 0]`, `[0 −Ω_I^{1/2}J_I]`, a zero row and
/// `[0 −Ω_D^{1/2}J_D]`; `h` stacks `0`, `Ω_I^{1/2}r_I`, `√ε_D` and
/// `Ω_D^{1/2}r_D`. Both cones have size `n + 1`.
pub fn qcqp_to_socp<T: Real>(q: &QcqpInstance<T>, sys: &ResidualSystem<T>) -> Result<ConeProblem<T>> {
    check_system(sys)?;
    let n = sys.len();
    let m = 2 * n + 2;
    let mut g = DMatrix::zeros(m, 7);
    let mut h = DVector::zeros(m);
    g[(0, 0)] = -T::one();
    h[n + 1] = q.epsilon.sqrt();
    for i in 0..n {
        let (si, sd) = (sys.w_i[i].sqrt(), sys.w_d[i].sqrt());
        for c in 0..6 {
            g[(1 + i, 1 + c)] = -si * sys.j_i[i][c];
            g[(n + 2 + i, 1 + c)] = -sd * sys.j_d[i][c];
        }
        h[1 + i] = si * sys.r_i[i];
        h[n + 2 + i] = sd * sys.r_d[i];
    }
    Ok(ConeProblem {
        c: unit_objective(7),
        g,
        h,
        cone_dims: vec![n + 1, n + 1],
    })
}

/// Same program with each cone compressed by a QR factorization of
/// `Ω^{1/2}[J | r]`, which preserves every norm; cones have size at most 8.
pub fn reduced_socp<T: Real>(sys: &ResidualSystem<T>, epsilon_d: T) -> Result<ConeProblem<T>> {
    check_system(sys)?;
    let r_i = compress(&sys.j_i, &sys.r_i, &sys.w_i);
    let r_d = compress(&sys.j_d, &sys.r_d, &sys.w_d);
    let (ki, kd) = (r_i.nrows(), r_d.nrows());
    let m = ki + kd + 2;
    let mut g = DMatrix::zeros(m, 7);
    let mut h = DVector::zeros(m);
    g[(0, 0)] = -T::one();
    h[ki + 1] = epsilon_d.sqrt();
    for (offset, r) in [(1, &r_i), (ki + 2, &r_d)] {
        for row in 0..r.nrows() {
            for c in 0..6 {
                g[(offset + row, 1 + c)] = -r[(row, c)];
            }
            h[offset + row] = r[(row, 6)];
        }
    }
    Ok(ConeProblem {
        c: unit_objective(7),
        g,
        h,
        cone_dims: vec![ki + 1, kd + 1],
    })
}

fn check_system<T: Real>(sys: &ResidualSystem<T>) -> Result<()> {
    if !sys.has_jacobians() || sys.w_i.len() != sys.len() || sys.w_d.len() != sys.len() {
        return Err(Error::InvalidInput(
            "residual system needs Jacobians and weights".into(),
        ));
    }
    if sys.w_i.iter().chain(&sys.w_d).any(|w| !(*w > T::zero())) {
        return Err(Error::InvalidInput("weights must be positive".into()));
    }
    Ok(())
}

fn compress<T: Real>(j: &[Vector6<T>], r: &[T], w: &[T]) -> DMatrix<T> {
    let n = r.len();
    let mut m = DMatrix::zeros(n, 7);
    for i in 0..n {
        let s = w[i].sqrt();
        for c in 0..6 {
            m[(i, c)] = s * j[i][c];
        }
        m[(i, 6)] = s * r[i];
    }
    m.qr().r()
}

fn unit_objective<T: Real>(n: usize) -> DVector<T> {
    let mut c = DVector::zeros(n);
    c[0] = T::one();
    c
}

/// Cone form of a general instance: each quadratic is written as
/// `‖A x + y‖² + offset` from its eigendecomposition.
#[derive(Clone, Debug)]
pub struct QcqpCone<T: Real> {
    pub problem: ConeProblem<T>,
    /// Constant added to `t²` to recover the objective.
    pub objective_offset: T,
}

fn factor_quadratic<T: Real>(h: &DMatrix<T>, b: &DVector<T>, a: T) -> Result<(DMatrix<T>, DVector<T>, T)> {
    let n = b.len();
    let eig = h.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.amax();
    let tol = max_eig * T::default_epsilon() * lit(100.0 * n as f64);
    let keep: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > tol).collect();
    let mut a_mat = DMatrix::zeros(keep.len(), n);
    let mut y = DVector::zeros(keep.len());
    for (row, &k) in keep.iter().enumerate() {
        let lam = eig.eigenvalues[k].sqrt();
        let v = eig.eigenvectors.column(k);
        for c in 0..n {
            a_mat[(row, c)] = lam * v[c];
        }
        y[row] = v.dot(b) / lam;
    }
    let outside = b - a_mat.transpose() * &y;
    if outside.norm() > (b.norm() + T::one()) * lit(1e-8) {
        return Err(Error::InvalidInput(
            "linear term has a component outside the range of its matrix".into(),
        ));
    }
    let offset = a - y.norm_squared();
    Ok((a_mat, y, offset))
}

/// Converts `q` to a cone program over `(t, x)`.
///
/// Fails with [`Error::Infeasible`] when the constraint's constant part alone
/// exceeds the bound.
pub fn qcqp_cone_form<T: Real>(q: &QcqpInstance<T>) -> Result<QcqpCone<T>> {
    q.validate()?;
    let n = q.dim();
    let (a0, y0, c0) = factor_quadratic(&q.h_obj, &q.b_obj, q.a_obj)?;
    let (a1, y1, c1) = factor_quadratic(&q.h_con, &q.b_con, q.a_con)?;
    let radius2 = q.epsilon - c1;
    if radius2 < T::zero() {
        return Err(Error::Infeasible("constraint minimum exceeds the bound".into()));
    }
    let (k0, k1) = (a0.nrows(), a1.nrows());
    let m = k0 + k1 + 2;
    let mut g = DMatrix::zeros(m, n + 1);
    let mut h = DVector::zeros(m);
    g[(0, 0)] = -T::one();
    h[k0 + 1] = radius2.sqrt();
    for (offset, a, y) in [(1, &a0, &y0), (k0 + 2, &a1, &y1)] {
        for row in 0..a.nrows() {
            for c in 0..n {
                g[(offset + row, 1 + c)] = -a[(row, c)];
            }
            h[offset + row] = y[row];
        }
    }
    Ok(QcqpCone {
        problem: ConeProblem {
            c: unit_objective(n + 1),
            g,
            h,
            cone_dims: vec![k0 + 1, k1 + 1],
        },
        objective_offset: c0,
    })
}

#[derive(Clone, Debug)]
pub struct QcqpSolution<T: Real> {
    pub step: DVector<T>,
    pub objective: T,
    pub status: ConeStatus,
}

/// Solves `q` through its cone form with the interior-point solver.
pub fn solve_qcqp<T: Real>(q: &QcqpInstance<T>, settings: &ConeSettings<T>) -> Result<QcqpSolution<T>> {
    let cone = qcqp_cone_form(q)?;
    let sol = solve_cone(&cone.problem, settings)?;
    let step = sol.primal.rows(1, q.dim()).into_owned();
    Ok(QcqpSolution {
        objective: q.objective(&step),
        step,
        status: sol.status,
    })
}

/// Result of [`gtrs_dual_oracle`].
#[derive(Clone, Debug)]
pub struct GtrsSolution<T: Real> {
    pub step: DVector<T>,
    pub objective: T,
    /// Lagrange multiplier of the constraint; zero when it is inactive.
    pub multiplier: T,
}

/// Independent solver for a single-constraint convex QCQP.
///
/// For `μ ≥ 0` the stationary point `Δ(μ) = −(H_obj + μH_con)⁻¹(b_obj + μb_con)`
/// has a constraint value that does not increase with `μ`. The multiplier is
/// zero when `Δ(0)` is feasible; otherwise bisection finds the `μ` at which
/// the constraint is active.
pub fn gtrs_dual_oracle<T: Real>(q: &QcqpInstance<T>) -> Result<GtrsSolution<T>> {
    q.validate()?;
    let step_at = |mu: T| -> Option<DVector<T>> {
        let m = &q.h_obj + &q.h_con * mu;
        let rhs = &q.b_obj + &q.b_con * mu;
        m.cholesky().map(|ch| -ch.solve(&rhs))
    };
    let finish = |step: DVector<T>, multiplier: T| GtrsSolution {
        objective: q.objective(&step),
        step,
        multiplier,
    };

    // Smallest attainable constraint value, via the pseudo-inverse.
    let min_con = {
        let pinv = q
            .h_con
            .clone()
            .pseudo_inverse(q.h_con.amax() * T::default_epsilon() * lit(100.0))
            .map_err(|e| Error::Evaluation(e.to_string()))?;
        q.constraint(&-(pinv * &q.b_con))
    };
    let slack = q.epsilon.abs().max(T::one()) * T::default_epsilon() * lit(100.0);
    if min_con > q.epsilon + slack {
        return Err(Error::Infeasible(format!(
            "constraint minimum {min_con:?} exceeds the bound {:?}",
            q.epsilon
        )));
    }
    let feasible = |x: &DVector<T>| q.constraint(x) <= q.epsilon;

    if let Some(step) = step_at(T::zero()) {
        if feasible(&step) {
            return Ok(finish(step, T::zero()));
        }
    }

    let mut hi = T::one();
    let limit: T = lit(1e30);
    loop {
        match step_at(hi) {
            Some(s) if feasible(&s) => break,
            _ if hi > limit => {
                let s = step_at(hi).ok_or_else(|| {
                    Error::DegenerateFrame("objective and constraint matrices are jointly singular".into())
                })?;
                return Ok(finish(s, hi));
            }
            _ => hi *= lit(2.0),
        }
    }
    let mut lo = T::zero();
    for _ in 0..300 {
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        match step_at(mid) {
            Some(s) if feasible(&s) => hi = mid,
            _ => lo = mid,
        }
    }
    let step = step_at(hi).expect("upper bracket has a solution");
    Ok(finish(step, hi))
}

struct BoundedRule<T: Real> {
    epsilon_finest: T,
    finest_count: usize,
    level_epsilon: T,
    /// Bound in force for the current step, possibly relaxed.
    active_epsilon: T,
    relaxations: usize,
    cone_settings: ConeSettings<T>,
}

impl<T: Real> BoundedRule<T> {
    fn solve(&self, sys: &ResidualSystem<T>, epsilon: T) -> Result<(ConeStatus, Vector6<T>)> {
        let p = reduced_socp(sys, epsilon)?;
        let sol = solve_cone(&p, &self.cone_settings)?;
        Ok((
            sol.status,
            Vector6::from_iterator(sol.primal.rows(1, 6).iter().copied()),
        ))
    }
}

impl<T: Real> StepRule<T> for BoundedRule<T> {
    fn begin_level(&mut self, _level: usize, pair: &FramePair<T>) -> Result<()> {
        let count = pair.first.depth.valid_count();
        self.level_epsilon = self.epsilon_finest * lit(count as f64) / lit(self.finest_count as f64);
        self.active_epsilon = self.level_epsilon;
        Ok(())
    }

    fn step(&mut self, sys: &ResidualSystem<T>, terms: &NormalTerms<T>) -> Result<Vector6<T>> {
        self.active_epsilon = self.level_epsilon;
        let (status, step) = self.solve(sys, self.active_epsilon)?;
        match status {
            ConeStatus::Optimal | ConeStatus::MaxIterations => Ok(step),
            ConeStatus::Infeasible => {
                self.relaxations += 1;
                self.active_epsilon = terms.depth.a * lit(RELAXATION_FACTOR);
                log::debug!(
                    "depth bound {:?} infeasible, relaxed to {:?}",
                    self.level_epsilon,
                    self.active_epsilon
                );
                match self.solve(sys, self.active_epsilon)? {
                    (ConeStatus::Optimal | ConeStatus::MaxIterations, step) => Ok(step),
                    _ => Err(Error::Infeasible(
                        "depth bound stays infeasible after relaxation".into(),
                    )),
                }
            }
            ConeStatus::Unbounded => Err(Error::DegenerateFrame(
                "cone program reported an unbounded objective".into(),
            )),
        }
    }

    fn accept(&self, old: &Objectives<T>, new: &Objectives<T>) -> bool {
        let eps = self.active_epsilon;
        let improves = new.f_i <= old.f_i && new.f_d <= eps.max(old.f_d);
        let restores = old.f_d > eps && new.f_d < old.f_d;
        improves || restores
    }

    fn stalled(&self, old: &Objectives<T>, new: &Objectives<T>, tol: T) -> bool {
        small_change(old.f_i, new.f_i, tol) && small_change(old.f_d, new.f_d, tol)
    }
}

/// Aligns `pair` by the bounded-objective method starting from `init`.
///
/// `epsilon_d` bounds `F_D` at the finest level; coarser levels scale it by
/// their share of valid depth pixels.
pub fn align_bounded<T: Real>(
    pair: &FramePair<T>,
    init: &MotionTwist<T>,
    epsilon_d: T,
    settings: &SolverSettings<T>,
) -> Result<AlignmentResult<T>> {
    if !(epsilon_d > T::zero() && epsilon_d.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "depth bound must be finite and positive, got {epsilon_d:?}"
        )));
    }
    let finest_count = pair.first.depth.valid_count();
    if finest_count == 0 {
        return Err(Error::DegenerateFrame("first frame has no valid depth".into()));
    }
    let mut rule = BoundedRule {
        epsilon_finest: epsilon_d,
        finest_count,
        level_epsilon: epsilon_d,
        active_epsilon: epsilon_d,
        relaxations: 0,
        cone_settings: ConeSettings::default(),
    };
    let out = run_alignment(pair, init, settings, &mut rule)?;
    Ok(AlignmentResult {
        xi: out.xi,
        final_f_i: out.final_f_i,
        final_f_d: out.final_f_d,
        lambda_used: None,
        epsilon_used: Some(epsilon_d),
        iterations: out.iterations,
        converged: out.converged,
        valid_pixel_count: out.valid_pixel_count,
        relaxations: rule.relaxations,
    })
}
