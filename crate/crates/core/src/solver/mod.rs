//! Coarse-to-fine alignment shared by the weighted-sum and bounded solvers.
//!
//! Each iteration evaluates residuals at the current twist, drops occluded
//! rows, reweights, builds Jacobians and normal terms, and asks the method
//! for a step. Candidates are accepted through a halving line search; the
//! acceptance test belongs to the method.

pub mod bounded;
pub mod weighted;

use nalgebra::Vector6;

use crate::dataset::{Frame, FramePair};
use crate::error::{Error, Result};
use crate::geometry::{oplus, MotionTwist};
use crate::imaging::{build_pyramid, level_intrinsics, Pyramid};
use crate::residual::{
    evaluate_jacobians, evaluate_residuals, normal_terms, robust_scale, weights_at_scale, NormalTerms,
    ResidualSystem, MIN_PIXELS,
};
use crate::scalar::{lit, Real};

/// Maximum number of step halvings before a level stops.
pub const MAX_HALVINGS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings<T: Real> {
    /// Iteration cap per pyramid level.
    pub max_iterations: usize,
    /// A level converges once `‖Δξ‖` falls below this.
    pub step_tolerance: T,
    /// A level converges once the relative objective decrease falls below this.
    pub objective_tolerance: T,
    pub pyramid_levels: usize,
    /// Degrees of freedom of the t-distribution weights.
    pub dof: T,
    /// Rows with `|r_D|` above this many meters are treated as occluded.
    pub occlusion_threshold: T,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            step_tolerance: lit(1e-7),
            objective_tolerance: lit(1e-9),
            pyramid_levels: 3,
            dof: lit(5.0),
            occlusion_threshold: lit(0.3),
        }
    }
}

impl<T: Real> SolverSettings<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: T| v > T::zero() && v.is_finite();
        if self.max_iterations == 0 || self.pyramid_levels == 0 {
            return Err(Error::InvalidInput(
                "iteration cap and pyramid levels must be at least 1".into(),
            ));
        }
        if !positive(self.step_tolerance) || !positive(self.objective_tolerance) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !positive(self.dof) || !positive(self.occlusion_threshold) {
            return Err(Error::InvalidInput(
                "dof and occlusion threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentResult<T: Real> {
    pub xi: MotionTwist<T>,
    pub final_f_i: T,
    pub final_f_d: T,
    /// Weight on `F_D` for the weighted-sum method.
    pub lambda_used: Option<T>,
    /// Depth bound at the finest level for the bounded method.
    pub epsilon_used: Option<T>,
    /// Iterations spent per level, finest level first.
    pub iterations: Vec<usize>,
    /// False if any level hit its iteration cap.
    pub converged: bool,
    pub valid_pixel_count: usize,
    /// Steps for which the depth bound had to be relaxed.
    pub relaxations: usize,
}

/// Objective values of one evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Objectives<T: Real> {
    pub f_i: T,
    pub f_d: T,
}

/// What differs between the two methods.
pub(crate) trait StepRule<T: Real> {
    /// Called before the first iteration at `level`.
    fn begin_level(&mut self, _level: usize, _pair: &FramePair<T>) -> Result<()> {
        Ok(())
    }

    fn step(&mut self, sys: &ResidualSystem<T>, terms: &NormalTerms<T>) -> Result<Vector6<T>>;

    fn accept(&self, old: &Objectives<T>, new: &Objectives<T>) -> bool;

    /// True when the decrease from `old` to `new` is below the relative tolerance.
    fn stalled(&self, old: &Objectives<T>, new: &Objectives<T>, tol: T) -> bool;
}

pub(crate) struct LevelData<T: Real> {
    pub pair: FramePair<T>,
}

pub(crate) fn pyramid_pairs<T: Real>(pair: &FramePair<T>, levels: usize) -> Result<Vec<LevelData<T>>> {
    let first: Pyramid<T> = build_pyramid(&pair.first.intensity, &pair.first.depth, levels)?;
    let second: Pyramid<T> = build_pyramid(&pair.second.intensity, &pair.second.depth, levels)?;
    first
        .levels
        .into_iter()
        .zip(second.levels)
        .enumerate()
        .map(|(l, ((i1, d1), (i2, d2)))| {
            let f1 = Frame::new(i1, d1, pair.first.timestamp)?;
            let f2 = Frame::new(i2, d2, pair.second.timestamp)?;
            Ok(LevelData {
                pair: FramePair::new(f1, f2, level_intrinsics(&pair.intrinsics, l))?,
            })
        })
        .collect()
}

/// Residuals at `xi` with occluded rows removed and unweighted.
fn guarded_residuals<T: Real>(
    pair: &FramePair<T>,
    xi: &MotionTwist<T>,
    settings: &SolverSettings<T>,
) -> Result<ResidualSystem<T>> {
    let mut sys = evaluate_residuals(pair, xi)?;
    sys.drop_occlusions(settings.occlusion_threshold);
    if sys.len() < MIN_PIXELS {
        return Err(Error::DegenerateFrame(format!(
            "only {} pixels remain after the occlusion guard",
            sys.len()
        )));
    }
    Ok(sys)
}

/// `|old − new| ≤ tol·|old|`.
pub(crate) fn small_change<T: Real>(old: T, new: T, tol: T) -> bool {
    (old - new).abs() <= tol * old.abs()
}

fn weighted_sum<T: Real>(r: &[T], w: &[T]) -> T {
    r.iter().zip(w).fold(T::zero(), |a, (r, w)| a + *w * *r * *r)
}

/// Objectives at `xi` with the weight scales held fixed.
fn objectives_at_scale<T: Real>(
    pair: &FramePair<T>,
    xi: &MotionTwist<T>,
    settings: &SolverSettings<T>,
    scales: (Option<T>, Option<T>),
) -> Result<Objectives<T>> {
    let sys = guarded_residuals(pair, xi, settings)?;
    let w_i = weights_at_scale(&sys.r_i, settings.dof, scales.0);
    let w_d = weights_at_scale(&sys.r_d, settings.dof, scales.1);
    Ok(Objectives {
        f_i: weighted_sum(&sys.r_i, &w_i),
        f_d: weighted_sum(&sys.r_d, &w_d),
    })
}

/// Robust scales of the intensity and depth residuals.
type Scales<T> = (Option<T>, Option<T>);

/// Reweighted residual system with Jacobians at `xi`.
pub(crate) fn linearize<T: Real>(
    pair: &FramePair<T>,
    xi: &MotionTwist<T>,
    settings: &SolverSettings<T>,
) -> Result<(ResidualSystem<T>, Scales<T>)> {
    let mut sys = guarded_residuals(pair, xi, settings)?;
    let scales = (
        robust_scale(&sys.r_i, settings.dof),
        robust_scale(&sys.r_d, settings.dof),
    );
    sys.w_i = weights_at_scale(&sys.r_i, settings.dof, scales.0);
    sys.w_d = weights_at_scale(&sys.r_d, settings.dof, scales.1);
    evaluate_jacobians(&mut sys, &pair.intrinsics);
    Ok((sys, scales))
}

pub(crate) struct LoopOutcome<T: Real> {
    pub xi: MotionTwist<T>,
    pub iterations: Vec<usize>,
    pub converged: bool,
    pub final_f_i: T,
    pub final_f_d: T,
    pub valid_pixel_count: usize,
}

/// Runs the coarse-to-fine iteration with `rule` supplying steps.
pub(crate) fn run_alignment<T: Real, R: StepRule<T>>(
    pair: &FramePair<T>,
    init: &MotionTwist<T>,
    settings: &SolverSettings<T>,
    rule: &mut R,
) -> Result<LoopOutcome<T>> {
    settings.validate()?;
    if !init.is_finite() {
        return Err(Error::InvalidInput("initial twist is not finite".into()));
    }
    let levels = pyramid_pairs(pair, settings.pyramid_levels)?;
    let mut xi = *init;
    let mut iterations = vec![0; levels.len()];
    let mut converged = true;

    for (l, level) in levels.iter().enumerate().rev() {
        rule.begin_level(l, &level.pair)?;
        let mut level_done = false;
        for it in 0..settings.max_iterations {
            iterations[l] = it + 1;
            let (sys, scales) = linearize(&level.pair, &xi, settings)?;
            let terms = normal_terms(&sys);
            let old = Objectives {
                f_i: sys.intensity_objective(),
                f_d: sys.depth_objective(),
            };
            let delta = rule.step(&sys, &terms)?;
            if !delta.iter().all(|v| v.is_finite()) {
                return Err(Error::DegenerateFrame("non-finite step".into()));
            }

            let mut scale = T::one();
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let step = MotionTwist::from_vector(&(delta * scale));
                let candidate = oplus(&xi, &step);
                // A candidate that loses too many pixels counts as a failed step.
                if let Ok(new) = objectives_at_scale(&level.pair, &candidate, settings, scales) {
                    if rule.accept(&old, &new) {
                        accepted = Some((candidate, new, step.norm()));
                        break;
                    }
                }
                scale *= lit(0.5);
            }
            let Some((candidate, new, step_norm)) = accepted else {
                level_done = true;
                break;
            };
            xi = candidate;
            if step_norm < settings.step_tolerance || rule.stalled(&old, &new, settings.objective_tolerance) {
                level_done = true;
                break;
            }
        }
        converged &= level_done;
    }

    let (sys, _) = linearize(&levels[0].pair, &xi, settings)?;
    Ok(LoopOutcome {
        xi,
        iterations,
        converged,
        final_f_i: sys.intensity_objective(),
        final_f_d: sys.depth_objective(),
        valid_pixel_count: sys.len(),
    })
}
