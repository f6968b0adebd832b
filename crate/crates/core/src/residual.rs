//! Stacked intensity and depth residuals, their Jacobians with respect to a
//! left twist increment, t-distribution weights and Gauss-Newton terms.

use nalgebra::{Matrix6, Vector2, Vector3, Vector6};

use crate::dataset::{Frame, FramePair};
use crate::error::{Error, Result};
use crate::geometry::{
    exp_twist, point_increment_jacobian, warp_with, CameraIntrinsics, MotionTwist, PixelCoord,
};
use crate::imaging::Surface;
use crate::scalar::{lit, Real};

/// Minimum number of surviving pixels for a well-posed 6-DoF problem.
pub const MIN_PIXELS: usize = 6;

/// Residual rows for the pixels that survived every validity test.
#[derive(Clone, Debug)]
pub struct ResidualSystem<T: Real> {
    pub r_i: Vec<T>,
    pub r_d: Vec<T>,
    pub j_i: Vec<Vector6<T>>,
    pub j_d: Vec<Vector6<T>>,
    pub w_i: Vec<T>,
    pub w_d: Vec<T>,
    /// Row-major index of the source pixel for each row.
    pub pixel_ids: Vec<usize>,
    /// Transformed 3-D points in the second camera frame.
    points: Vec<Vector3<T>>,
    grad_i: Vec<Vector2<T>>,
    grad_d: Vec<Vector2<T>>,
}

impl<T: Real> Default for ResidualSystem<T> {
    fn default() -> Self {
        Self {
            r_i: Vec::new(),
            r_d: Vec::new(),
            j_i: Vec::new(),
            j_d: Vec::new(),
            w_i: Vec::new(),
            w_d: Vec::new(),
            pixel_ids: Vec::new(),
            points: Vec::new(),
            grad_i: Vec::new(),
            grad_d: Vec::new(),
        }
    }
}

impl<T: Real> ResidualSystem<T> {
    pub fn len(&self) -> usize {
        self.r_i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_i.is_empty()
    }

    pub fn has_jacobians(&self) -> bool {
        self.j_i.len() == self.len() && self.j_d.len() == self.len()
    }

    /// Keeps only the rows for which `keep(row)` is true.
    pub fn retain(&mut self, mut keep: impl FnMut(usize, &Self) -> bool) {
        let mask: Vec<bool> = (0..self.len()).map(|i| keep(i, self)).collect();
        fn filter<X: Clone>(v: &mut Vec<X>, mask: &[bool]) {
            if v.len() == mask.len() {
                let mut it = mask.iter();
                v.retain(|_| *it.next().unwrap());
            }
        }
        filter(&mut self.r_i, &mask);
        filter(&mut self.r_d, &mask);
        filter(&mut self.j_i, &mask);
        filter(&mut self.j_d, &mask);
        filter(&mut self.w_i, &mask);
        filter(&mut self.w_d, &mask);
        filter(&mut self.pixel_ids, &mask);
        filter(&mut self.points, &mask);
        filter(&mut self.grad_i, &mask);
        filter(&mut self.grad_d, &mask);
    }

    /// Drops rows whose depth residual exceeds `threshold` meters.
    pub fn drop_occlusions(&mut self, threshold: T) {
        self.retain(|i, s| s.r_d[i].abs() <= threshold);
    }

    /// Recomputes both weight vectors with [`robust_weights`].
    pub fn reweight(&mut self, dof: T) {
        self.w_i = robust_weights(&self.r_i, dof);
        self.w_d = robust_weights(&self.r_d, dof);
    }

    /// Weighted intensity objective `r_Iᵀ Ω_I r_I`.
    pub fn intensity_objective(&self) -> T {
        weighted_square_sum(&self.r_i, &self.w_i)
    }

    /// Weighted depth objective `r_Dᵀ Ω_D r_D`.
    pub fn depth_objective(&self) -> T {
        weighted_square_sum(&self.r_d, &self.w_d)
    }
}

fn weighted_square_sum<T: Real>(r: &[T], w: &[T]) -> T {
    if w.len() == r.len() {
        r.iter().zip(w).fold(T::zero(), |acc, (r, w)| acc + *w * *r * *r)
    } else {
        r.iter().fold(T::zero(), |acc, r| acc + *r * *r)
    }
}

/// Residuals of `pair` at `xi`, all weights 1.
pub fn evaluate_residuals<T: Real>(pair: &FramePair<T>, xi: &MotionTwist<T>) -> Result<ResidualSystem<T>> {
    evaluate_residuals_against(
        &pair.first,
        &pair.second.intensity,
        &pair.second.depth,
        &pair.intrinsics,
        xi,
    )
}

/// Residuals of `first` against arbitrary second-image surfaces.
pub fn evaluate_residuals_against<T, SI, SD>(
    first: &Frame<T>,
    second_intensity: &SI,
    second_depth: &SD,
    k: &CameraIntrinsics<T>,
    xi: &MotionTwist<T>,
) -> Result<ResidualSystem<T>>
where
    T: Real,
    SI: Surface<T> + ?Sized,
    SD: Surface<T> + ?Sized,
{
    let transform = exp_twist(xi);
    let (w, h) = (first.width(), first.height());
    let mut sys = ResidualSystem::default();
    for row in 0..h {
        for col in 0..w {
            let Some(d1) = first.depth.get(col, row) else {
                continue;
            };
            let x = PixelCoord::new(lit(col as f64), lit(row as f64));
            let Some((y, q)) = warp_with(&transform, &x, d1, k) else {
                continue;
            };
            let (Some(i2), Some(d2), Some(gi), Some(gd)) = (
                second_intensity.sample(&y),
                second_depth.sample(&y),
                second_intensity.gradient(&y),
                second_depth.gradient(&y),
            ) else {
                continue;
            };
            sys.r_i.push(i2 - first.intensity.get(col, row));
            sys.r_d.push(d2 - q[2]);
            sys.pixel_ids.push(row * w + col);
            sys.points.push(q);
            sys.grad_i.push(gi);
            sys.grad_d.push(gd);
        }
    }
    if sys.len() < MIN_PIXELS {
        return Err(Error::DegenerateFrame(format!(
            "only {} valid pixels survived warping",
            sys.len()
        )));
    }
    let n = sys.len();
    sys.w_i = vec![T::one(); n];
    sys.w_d = vec![T::one(); n];
    Ok(sys)
}

/// Fills `J_I` and `J_D` by the chain rule: image gradient at the warped
/// coordinate, projection Jacobian, and the left-increment point Jacobian.
pub fn evaluate_jacobians<T: Real>(sys: &mut ResidualSystem<T>, k: &CameraIntrinsics<T>) {
    let n = sys.len();
    sys.j_i.clear();
    sys.j_d.clear();
    sys.j_i.reserve(n);
    sys.j_d.reserve(n);
    for i in 0..n {
        let q = &sys.points[i];
        let jq = point_increment_jacobian(q);
        let warp_jac = k.projection_jacobian(q) * jq;
        let ji = warp_jac.transpose() * sys.grad_i[i];
        let jz = jq.row(2).transpose();
        let jd = warp_jac.transpose() * sys.grad_d[i] - jz;
        sys.j_i.push(ji);
        sys.j_d.push(jd);
    }
}

/// Student-t weights `(ν + 1)/(ν + r²/σ²)` with the scale `σ²` found by
/// fixed-point iteration.
pub fn robust_weights<T: Real>(residuals: &[T], dof: T) -> Vec<T> {
    weights_at_scale(residuals, dof, robust_scale(residuals, dof))
}

/// Scale `σ²` used by [`robust_weights`]; `None` when every residual is zero.
pub fn robust_scale<T: Real>(residuals: &[T], dof: T) -> Option<T> {
    if residuals.iter().all(|r| *r == T::zero()) {
        return None;
    }
    Some(t_scale(residuals, dof, 50, lit(1e-6)).max(lit(1e-12)))
}

/// Student-t weights under a fixed scale; `None` gives unit weights.
pub fn weights_at_scale<T: Real>(residuals: &[T], dof: T, sigma2: Option<T>) -> Vec<T> {
    let Some(sigma2) = sigma2 else {
        return vec![T::one(); residuals.len()];
    };
    let numerator = dof + T::one();
    residuals
        .iter()
        .map(|r| numerator / (dof + *r * *r / sigma2))
        .collect()
}

/// Fixed point of `σ² = (1/n) Σ rᵢ² (ν+1)/(ν + rᵢ²/σ²)`, stopping when the
/// relative change in `σ` drops below `tol`.
pub fn t_scale<T: Real>(residuals: &[T], dof: T, max_iterations: usize, tol: T) -> T {
    let n: T = lit(residuals.len() as f64);
    let floor: T = lit(1e-12);
    let numerator = dof + T::one();
    let mut sigma2 = residuals.iter().fold(T::zero(), |a, r| a + *r * *r) / n;
    sigma2 = sigma2.max(floor);
    for _ in 0..max_iterations {
        let next = residuals.iter().fold(T::zero(), |acc, r| {
            let r2 = *r * *r;
            acc + r2 * numerator / (dof + r2 / sigma2)
        }) / n;
        let next = next.max(floor);
        let change = (next.sqrt() - sigma2.sqrt()).abs() / sigma2.sqrt();
        sigma2 = next;
        if change < tol {
            break;
        }
    }
    sigma2
}

/// Quadratic model terms `a = rᵀΩr`, `b = JᵀΩr`, `H = JᵀΩJ` for one objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTerms<T: Real> {
    pub a: T,
    pub b: Vector6<T>,
    pub h: Matrix6<T>,
}

impl<T: Real> ObjectiveTerms<T> {
    pub fn zero() -> Self {
        Self {
            a: T::zero(),
            b: Vector6::zeros(),
            h: Matrix6::zeros(),
        }
    }

    fn accumulate(r: &[T], j: &[Vector6<T>], w: &[T]) -> Self {
        let mut t = Self::zero();
        for ((r, j), w) in r.iter().zip(j).zip(w) {
            let wr = *w * *r;
            t.a += wr * *r;
            t.b += j * wr;
            t.h.syger(*w, j, j, T::one());
        }
        t
    }

    /// Value of the model `Δᵀ H Δ + 2 bᵀ Δ + a`.
    pub fn model(&self, delta: &Vector6<T>) -> T {
        (self.h * delta).dot(delta) + self.b.dot(delta) * lit(2.0) + self.a
    }
}

/// Gauss-Newton terms for both objectives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalTerms<T: Real> {
    pub intensity: ObjectiveTerms<T>,
    pub depth: ObjectiveTerms<T>,
}

/// Exact weighted products, accumulated in row order.
pub fn normal_terms<T: Real>(sys: &ResidualSystem<T>) -> NormalTerms<T> {
    assert!(sys.has_jacobians(), "normal_terms needs Jacobians");
    let mut intensity = ObjectiveTerms::accumulate(&sys.r_i, &sys.j_i, &sys.w_i);
    let mut depth = ObjectiveTerms::accumulate(&sys.r_d, &sys.j_d, &sys.w_d);
    // syger fills only the lower triangle.
    intensity.h.fill_upper_triangle_with_lower_triangle();
    depth.h.fill_upper_triangle_with_lower_triangle();
    NormalTerms { intensity, depth }
}
