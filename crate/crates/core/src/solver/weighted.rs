//! Weighted-sum Gauss-Newton: minimizes `F_I + λ F_D`.

use nalgebra::{Matrix6, Vector6};

use super::{run_alignment, small_change, AlignmentResult, Objectives, SolverSettings, StepRule};
use crate::dataset::FramePair;
use crate::error::{Error, Result};
use crate::geometry::MotionTwist;
use crate::residual::{NormalTerms, ResidualSystem};
use crate::scalar::{lit, Real};

/// Solves `(H_I + λH_D) Δξ = −(b_I + λb_D)`.
///
/// Uses a Cholesky factorization. Only when that fails is Levenberg damping
/// `μ·s·I` added, with `s = max(tr(H)/6, 1)` and `μ` from 1e-6 up to 1e2.
pub fn gauss_newton_step<T: Real>(terms: &NormalTerms<T>, lambda: T) -> Result<Vector6<T>> {
    let h = terms.intensity.h + terms.depth.h * lambda;
    let b = terms.intensity.b + terms.depth.b * lambda;
    solve_damped(&h, &b)
}

fn solve_damped<T: Real>(h: &Matrix6<T>, b: &Vector6<T>) -> Result<Vector6<T>> {
    if !h.iter().chain(b.iter()).all(|v| v.is_finite()) {
        return Err(Error::DegenerateFrame("normal equations are not finite".into()));
    }
    if let Some(ch) = h.cholesky() {
        return Ok(-ch.solve(b));
    }
    let scale = (h.trace() / lit(6.0)).max(T::one());
    let mut mu: T = lit(1e-6);
    while mu <= lit(1e2 * (1.0 + 1e-9)) {
        let damped = h + Matrix6::identity() * (mu * scale);
        if let Some(ch) = damped.cholesky() {
            return Ok(-ch.solve(b));
        }
        mu *= lit(10.0);
    }
    Err(Error::DegenerateFrame(
        "normal equations are singular even after damping".into(),
    ))
}

struct WeightedRule<T: Real> {
    lambda: T,
}

impl<T: Real> WeightedRule<T> {
    fn merit(&self, f: &Objectives<T>) -> T {
        f.f_i + self.lambda * f.f_d
    }
}

impl<T: Real> StepRule<T> for WeightedRule<T> {
    fn step(&mut self, _sys: &ResidualSystem<T>, terms: &NormalTerms<T>) -> Result<Vector6<T>> {
        gauss_newton_step(terms, self.lambda)
    }

    fn accept(&self, old: &Objectives<T>, new: &Objectives<T>) -> bool {
        self.merit(new) <= self.merit(old)
    }

    fn stalled(&self, old: &Objectives<T>, new: &Objectives<T>, tol: T) -> bool {
        small_change(self.merit(old), self.merit(new), tol)
    }
}

/// Aligns `pair` by weighted-sum Gauss-Newton starting from `init`.
///
/// `lambda = 0` is the intensity-only method.
pub fn align_weighted<T: Real>(
    pair: &FramePair<T>,
    init: &MotionTwist<T>,
    lambda: T,
    settings: &SolverSettings<T>,
) -> Result<AlignmentResult<T>> {
    if !(lambda >= T::zero() && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lambda must be finite and non-negative, got {lambda:?}"
        )));
    }
    let out = run_alignment(pair, init, settings, &mut WeightedRule { lambda })?;
    Ok(AlignmentResult {
        xi: out.xi,
        final_f_i: out.final_f_i,
        final_f_d: out.final_f_d,
        lambda_used: Some(lambda),
        epsilon_used: None,
        iterations: out.iterations,
        converged: out.converged,
        valid_pixel_count: out.valid_pixel_count,
        relaxations: 0,
    })
}
