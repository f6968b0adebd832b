//! Small dense second-order cone programs.
//!
//! Solves
//!
//! ```text
//! minimize    cᵀx
//! subject to  Gx + s = h,  s ∈ K
//! ```
//!
//! where `K` is a product of second-order cones `{(u₀, u₁) : u₀ ≥ ‖u₁‖}`
//! (a cone of dimension one is the non-negative half-line). The method is a
//! primal-dual path-following interior-point iteration on the homogeneous
//! self-dual embedding, with Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector step. The embedding yields certificates when the
//! problem is primal or dual infeasible.
//!
//! Problems here are tiny (a handful of variables and cones), so every
//! scaling matrix is formed densely.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Cone program in standard form.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeProblem<T: Real> {
    pub c: DVector<T>,
    pub g: DMatrix<T>,
    pub h: DVector<T>,
    /// Sizes of the second-order cones, in row order.
    pub cone_dims: Vec<usize>,
}

impl<T: Real> ConeProblem<T> {
    pub fn validate(&self) -> Result<()> {
        let rows: usize = self.cone_dims.iter().sum();
        if self.cone_dims.contains(&0) {
            return Err(Error::InvalidInput("cone of dimension zero".into()));
        }
        if rows != self.g.nrows() || rows != self.h.len() {
            return Err(Error::InvalidInput(format!(
                "cone dimensions cover {rows} rows but G has {} and h has {}",
                self.g.nrows(),
                self.h.len()
            )));
        }
        if self.g.ncols() != self.c.len() {
            return Err(Error::InvalidInput(format!(
                "G has {} columns but c has {} entries",
                self.g.ncols(),
                self.c.len()
            )));
        }
        Ok(())
    }

    fn cones(&self) -> Vec<(usize, usize)> {
        let mut offset = 0;
        self.cone_dims
            .iter()
            .map(|&d| {
                let r = (offset, d);
                offset += d;
                r
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeStatus {
    Optimal,
    /// Primal infeasible; `dual` holds the certificate.
    Infeasible,
    /// Dual infeasible (objective unbounded below).
    Unbounded,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct ConeSolution<T: Real> {
    pub primal: DVector<T>,
    pub slack: DVector<T>,
    pub dual: DVector<T>,
    pub status: ConeStatus,
    /// Duality gap `sᵀz` of the returned point.
    pub gap: T,
    pub iterations: usize,
}

impl<T: Real> ConeSolution<T> {
    pub fn objective(&self, c: &DVector<T>) -> T {
        c.dot(&self.primal)
    }
}

/// Stopping rules.
///
/// A point is optimal once the residuals are below `feastol` and the gap is
/// below `abstol` or `reltol`. Iteration continues toward the tighter
/// `target` while it still makes progress, because near-degenerate problems
/// converge in the primal variables only like the square root of the gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeSettings<T: Real> {
    pub max_iterations: usize,
    pub abstol: T,
    pub reltol: T,
    pub feastol: T,
    pub target: T,
}

impl<T: Real> Default for ConeSettings<T> {
    fn default() -> Self {
        // 1e-9 in double precision, looser where the scalar cannot resolve it.
        let eps = T::default_epsilon();
        let tol = lit::<T>(1e-9).max(eps.powf(lit(0.75)));
        Self {
            max_iterations: 100,
            abstol: tol,
            reltol: tol,
            feastol: tol,
            target: lit::<T>(1e-14).max(eps * lit(64.0)).min(tol),
        }
    }
}

/// `xᵀ J y` within one cone, `J = diag(1, −1, …, −1)`.
fn jdot<T: Real>(x: &[T], y: &[T]) -> T {
    let tail = x[1..]
        .iter()
        .zip(&y[1..])
        .fold(T::zero(), |a, (p, q)| a + *p * *q);
    x[0] * y[0] - tail
}

fn tail_norm<T: Real>(x: &[T]) -> T {
    x[1..].iter().fold(T::zero(), |a, v| a + *v * *v).sqrt()
}

/// Jordan product `x ∘ y` for one cone.
fn jordan_product<T: Real>(x: &[T], y: &[T], out: &mut [T]) {
    out[0] = x.iter().zip(y).fold(T::zero(), |a, (p, q)| a + *p * *q);
    for i in 1..x.len() {
        out[i] = x[0] * y[i] + y[0] * x[i];
    }
}

/// Solves `λ ∘ u = d` for `u` within one cone.
fn jordan_divide<T: Real>(lambda: &[T], d: &[T], out: &mut [T]) {
    let det = jdot(lambda, lambda);
    let tail = lambda[1..]
        .iter()
        .zip(&d[1..])
        .fold(T::zero(), |a, (l, v)| a + *l * *v);
    out[0] = (lambda[0] * d[0] - tail) / det;
    for i in 1..lambda.len() {
        out[i] = (d[i] - out[0] * lambda[i]) / lambda[0];
    }
}

/// Largest `α ≥ 0` with `x + α d` in the cone; `None` if unbounded.
fn max_step_cone<T: Real>(x: &[T], d: &[T]) -> Option<T> {
    if x.len() == 1 {
        return (d[0] < T::zero()).then(|| -x[0] / d[0]);
    }
    // f(α) = (x₀ + α d₀)² − ‖x₁ + α d₁‖² = qa α² + qb α + qc, qc > 0 for
    // interior x; the feasible set is [0, first positive root].
    let qa = jdot(d, d);
    let qb = jdot(x, d) * lit(2.0);
    let qc = jdot(x, x);
    let mut best: Option<T> = None;
    let mut consider = |r: T| {
        if r > T::zero() && r.is_finite() {
            best = Some(best.map_or(r, |b: T| b.min(r)));
        }
    };
    let scale = qa.abs().max(qb.abs()).max(qc.abs());
    if qa.abs() <= scale * lit(1e-14) {
        if qb < T::zero() {
            consider(-qc / qb);
        }
    } else {
        let disc = qb * qb - lit::<T>(4.0) * qa * qc;
        if disc >= T::zero() {
            let root = disc.sqrt();
            let q = if qb >= T::zero() {
                -(qb + root) * lit(0.5)
            } else {
                (root - qb) * lit(0.5)
            };
            if q != T::zero() {
                consider(q / qa);
                consider(qc / q);
            }
        }
    }
    // The head must also stay non-negative (guards the degenerate apex case).
    if d[0] < T::zero() {
        consider(-x[0] / d[0]);
    }
    best
}

/// Nesterov-Todd scaling for one cone: `W z = W⁻¹ s = λ`.
struct ConeScaling<T: Real> {
    w: DMatrix<T>,
    w_inv: DMatrix<T>,
}

fn nt_scaling<T: Real>(s: &[T], z: &[T]) -> ConeScaling<T> {
    let m = s.len();
    let s_norm = jdot(s, s).sqrt();
    let z_norm = jdot(z, z).sqrt();
    let eta = (s_norm / z_norm).sqrt();
    let sb: Vec<T> = s.iter().map(|v| *v / s_norm).collect();
    let zb: Vec<T> = z.iter().map(|v| *v / z_norm).collect();
    let gamma = ((T::one() + sb.iter().zip(&zb).fold(T::zero(), |a, (p, q)| a + *p * *q)) * lit(0.5)).sqrt();
    let two_gamma = gamma * lit(2.0);
    let mut wb = DVector::zeros(m);
    wb[0] = (sb[0] + zb[0]) / two_gamma;
    for i in 1..m {
        wb[i] = (sb[i] - zb[i]) / two_gamma;
    }
    // W̄ = [w₀ w₁ᵀ; w₁ I + w₁w₁ᵀ/(1 + w₀)] is J-orthogonal, so W̄⁻¹ = J W̄ J.
    let mut wbar = DMatrix::identity(m, m);
    wbar[(0, 0)] = wb[0];
    for i in 1..m {
        wbar[(0, i)] = wb[i];
        wbar[(i, 0)] = wb[i];
        for k in 1..m {
            wbar[(i, k)] += wb[i] * wb[k] / (T::one() + wb[0]);
        }
    }
    let mut w_inv = wbar.clone() / eta;
    for i in 1..m {
        w_inv[(0, i)] = -w_inv[(0, i)];
        w_inv[(i, 0)] = -w_inv[(i, 0)];
    }
    let w = wbar * eta;
    ConeScaling { w, w_inv }
}

/// Block-diagonal scaling over all cones.
struct Scaling<T: Real> {
    blocks: Vec<(usize, ConeScaling<T>)>,
}

impl<T: Real> Scaling<T> {
    fn new(cones: &[(usize, usize)], s: &DVector<T>, z: &DVector<T>) -> Self {
        let blocks = cones
            .iter()
            .map(|&(o, d)| (o, nt_scaling(&s.as_slice()[o..o + d], &z.as_slice()[o..o + d])))
            .collect();
        Self { blocks }
    }

    fn apply(&self, v: &DVector<T>, inverse: bool) -> DVector<T> {
        let mut out = DVector::zeros(v.len());
        for (o, b) in &self.blocks {
            let m = if inverse { &b.w_inv } else { &b.w };
            let d = m.nrows();
            let seg = m * v.rows(*o, d);
            out.rows_mut(*o, d).copy_from(&seg);
        }
        out
    }

    fn w(&self, v: &DVector<T>) -> DVector<T> {
        self.apply(v, false)
    }

    fn w_inv(&self, v: &DVector<T>) -> DVector<T> {
        self.apply(v, true)
    }
}

fn cone_map<T: Real>(
    cones: &[(usize, usize)],
    x: &DVector<T>,
    y: &DVector<T>,
    f: impl Fn(&[T], &[T], &mut [T]),
) -> DVector<T> {
    let mut out = DVector::zeros(x.len());
    for &(o, d) in cones {
        f(
            &x.as_slice()[o..o + d],
            &y.as_slice()[o..o + d],
            &mut out.as_mut_slice()[o..o + d],
        );
    }
    out
}

fn identity_element<T: Real>(cones: &[(usize, usize)], m: usize) -> DVector<T> {
    let mut e = DVector::zeros(m);
    for &(o, _) in cones {
        e[o] = T::one();
    }
    e
}

/// Shifts `v` into the interior of the cone along the identity direction.
fn shift_interior<T: Real>(cones: &[(usize, usize)], v: &mut DVector<T>) {
    let alpha = cones
        .iter()
        .map(|&(o, d)| tail_norm(&v.as_slice()[o..o + d]) - v[o])
        .fold(-T::one(), |a, b| a.max(b));
    // The identity direction has a margin of one unit in every cone.
    if alpha >= -lit::<T>(1e-8) {
        let shift = T::one() + alpha.max(T::zero());
        for &(o, _) in cones {
            v[o] += shift;
        }
    }
}

fn max_step<T: Real>(cones: &[(usize, usize)], x: &DVector<T>, d: &DVector<T>) -> Option<T> {
    cones
        .iter()
        .filter_map(|&(o, n)| max_step_cone(&x.as_slice()[o..o + n], &d.as_slice()[o..o + n]))
        .fold(None, |acc: Option<T>, a| Some(acc.map_or(a, |b| b.min(a))))
}

fn cholesky_with_fallback<T: Real>(m: DMatrix<T>) -> Result<nalgebra::Cholesky<T, nalgebra::Dyn>> {
    let scale = (0..m.nrows())
        .map(|i| m[(i, i)].abs())
        .fold(T::one(), |a, b| a.max(b));
    let mut reg = T::zero();
    for _ in 0..8 {
        let mut trial = m.clone();
        for i in 0..trial.nrows() {
            trial[(i, i)] += reg;
        }
        if let Some(ch) = trial.cholesky() {
            return Ok(ch);
        }
        reg = if reg == T::zero() {
            scale * T::default_epsilon() * lit(16.0)
        } else {
            reg * lit(100.0)
        };
    }
    Err(Error::DegenerateFrame(
        "cone KKT system is singular; G lacks full column rank".into(),
    ))
}

const REFINEMENT_STEPS: usize = 2;

struct Iterate<T: Real> {
    x: DVector<T>,
    s: DVector<T>,
    z: DVector<T>,
    tau: T,
}

impl<T: Real> Iterate<T> {
    fn new(x: &DVector<T>, s: &DVector<T>, z: &DVector<T>, tau: T) -> Self {
        Self {
            x: x.clone(),
            s: s.clone(),
            z: z.clone(),
            tau,
        }
    }
}

/// Thin QR factors of the scaled constraint matrix `A = W⁻¹G`.
struct ReducedKkt<T: Real> {
    q: DMatrix<T>,
    r: DMatrix<T>,
}

impl<T: Real> ReducedKkt<T> {
    fn new(a: &DMatrix<T>) -> Result<Self> {
        let qr = a.clone().qr();
        let r = qr.r();
        let scale = (0..r.nrows())
            .map(|i| r[(i, i)].abs())
            .fold(T::zero(), |a, b| a.max(b));
        let floor = scale * T::default_epsilon() * lit(a.nrows().max(1) as f64);
        if scale == T::zero() || (0..r.nrows()).any(|i| r[(i, i)].abs() <= floor) {
            return Err(Error::DegenerateFrame(
                "cone KKT system is singular; G lacks full column rank".into(),
            ));
        }
        Ok(Self { q: qr.q(), r })
    }

    /// Solves `AᵀA u = p + Aᵀ q`.
    fn solve(&self, p: &DVector<T>, q: &DVector<T>) -> DVector<T> {
        let mut y = p.clone();
        self.r.tr_solve_upper_triangular_mut(&mut y);
        y += self.q.transpose() * q;
        self.r.solve_upper_triangular_mut(&mut y);
        y
    }
}

/// Solves `p` with the homogeneous self-dual interior-point method.
///
/// Returns `Err` only for malformed problems or a rank-deficient `G`; primal
/// or dual infeasibility is reported through [`ConeStatus`].
pub fn solve_cone<T: Real>(p: &ConeProblem<T>, settings: &ConeSettings<T>) -> Result<ConeSolution<T>> {
    p.validate()?;
    let cones = p.cones();
    let (m, n) = (p.g.nrows(), p.g.ncols());
    let degree: T = lit(cones.len() as f64);
    let g = &p.g;
    let gt = g.transpose();
    let (c, h) = (&p.c, &p.h);
    let e = identity_element::<T>(&cones, m);
    let c_scale = c.norm().max(T::one());
    let h_scale = h.norm().max(T::one());

    // Least-squares primal start and least-norm dual start.
    let gtg = cholesky_with_fallback(&gt * g)?;
    let x0 = gtg.solve(&(&gt * h));
    let mut x = x0.clone();
    let mut s = h - g * &x0;
    let mut z = -(g * gtg.solve(c));
    shift_interior(&cones, &mut s);
    shift_interior(&cones, &mut z);
    let (mut tau, mut kappa) = (T::one(), T::one());

    let step_fraction: T = lit(0.99);
    let mut status = ConeStatus::MaxIterations;
    let mut iterations = 0;
    // Best iterate meeting the optimality tolerances, with its merit.
    let mut best: Option<(T, Iterate<T>)> = None;

    for it in 0..=settings.max_iterations {
        iterations = it;
        let hz = h.dot(&z);
        let cx = c.dot(&x);
        let gtz = &gt * &z;
        let gx_s = g * &x + &s;
        let rx = &gtz + c * tau;
        let rz = &gx_s - h * tau;
        let rt = kappa + cx + hz;
        let gap = s.dot(&z);
        let mu = (gap + tau * kappa) / (degree + T::one());

        let pres = rz.norm() / tau / h_scale;
        let dres = rx.norm() / tau / c_scale;
        let pcost = cx / tau;
        let dcost = -hz / tau;
        let abs_gap = gap / (tau * tau);
        let rel_gap = if pcost < T::zero() {
            abs_gap / -pcost
        } else if dcost > T::zero() {
            abs_gap / dcost
        } else {
            T::max_value().unwrap_or(abs_gap)
        };
        let feas = pres.max(dres);
        if feas <= settings.target && abs_gap.min(rel_gap) <= settings.target {
            best = None;
            status = ConeStatus::Optimal;
            break;
        }
        if feas <= settings.feastol && (abs_gap <= settings.abstol || rel_gap <= settings.reltol) {
            let merit = feas.max(abs_gap.min(rel_gap));
            if best.as_ref().is_none_or(|(m, _)| merit < *m) {
                best = Some((merit, Iterate::new(&x, &s, &z, tau)));
            }
        } else if best.is_none() {
            if hz < T::zero() && gtz.norm() / c_scale / -hz <= settings.feastol {
                status = ConeStatus::Infeasible;
                break;
            }
            if cx < T::zero() && gx_s.norm() / h_scale / -cx <= settings.feastol {
                status = ConeStatus::Unbounded;
                break;
            }
        }
        if it == settings.max_iterations {
            break;
        }

        let scaling = Scaling::new(&cones, &s, &z);
        let lambda = scaling.w(&z);
        let lambda_sq = cone_map(&cones, &lambda, &lambda, jordan_product);

        // K [u; v] = [p; q] with K = [0 Gᵀ; G −W²], reduced to
        // (W⁻¹G)ᵀ(W⁻¹G) u = p + (W⁻¹G)ᵀ W⁻¹ q and solved through a QR
        // factorization of W⁻¹G, then refined on the unreduced system.
        let mut w_inv_g = DMatrix::zeros(m, n);
        for col in 0..n {
            let column = scaling.w_inv(&g.column(col).into_owned());
            w_inv_g.set_column(col, &column);
        }
        let reduced = match ReducedKkt::new(&w_inv_g) {
            Ok(r) => r,
            Err(_) if best.is_some() => break,
            Err(e) => return Err(e),
        };
        let kkt_once = |rhs_x: &DVector<T>, rhs_z: &DVector<T>| {
            let w_inv_q = scaling.w_inv(rhs_z);
            let u = reduced.solve(rhs_x, &w_inv_q);
            let v = scaling.w_inv(&(&w_inv_g * &u - w_inv_q));
            (u, v)
        };
        let kkt_solve = |rhs_x: &DVector<T>, rhs_z: &DVector<T>| {
            let (mut u, mut v) = kkt_once(rhs_x, rhs_z);
            for _ in 0..REFINEMENT_STEPS {
                let res_x = rhs_x - &gt * &v;
                let res_z = rhs_z - (g * &u - scaling.w(&scaling.w(&v)));
                let (du, dv) = kkt_once(&res_x, &res_z);
                u += du;
                v += dv;
            }
            (u, v)
        };
        let (x2, z2) = kkt_solve(c, &(-h));
        let denom_base = c.dot(&x2) + h.dot(&z2);

        // Solves the linearized embedding for a given centering and
        // complementarity right-hand side.
        let newton = |sigma: T, d_s: &DVector<T>, d_k: T| {
            let keep = T::one() - sigma;
            let bx = -(&rx * keep);
            let bz = -(&rz * keep);
            let bt = -(rt * keep);
            let u = cone_map(&cones, &lambda, d_s, jordan_divide);
            let wu = scaling.w(&u);
            let (x1, z1) = kkt_solve(&bx, &(&bz - &wu));
            let dtau = (c.dot(&x1) + h.dot(&z1) - bt + d_k / tau) / (denom_base + kappa / tau);
            let dx = &x1 - &x2 * dtau;
            let dz = &z1 - &z2 * dtau;
            // From the linear equation, so primal residuals shrink exactly.
            let ds = &bz - g * &dx + h * dtau;
            let dkappa = (d_k - kappa * dtau) / tau;
            (dx, ds, dz, dtau, dkappa)
        };

        let step_to_boundary = |ds: &DVector<T>, dz: &DVector<T>, dtau: T, dkappa: T| {
            let mut alpha: Option<T> = None;
            let mut take = |a: Option<T>| {
                if let Some(a) = a {
                    alpha = Some(alpha.map_or(a, |b| b.min(a)));
                }
            };
            take(max_step(&cones, &s, ds));
            take(max_step(&cones, &z, dz));
            take((dtau < T::zero()).then(|| -tau / dtau));
            take((dkappa < T::zero()).then(|| -kappa / dkappa));
            alpha
        };

        // Predictor.
        let (_, ds_a, dz_a, dtau_a, dkappa_a) = newton(T::zero(), &(-&lambda_sq), -(tau * kappa));
        let alpha_a = step_to_boundary(&ds_a, &dz_a, dtau_a, dkappa_a).map_or(T::one(), |a| a.min(T::one()));
        let sigma = (T::one() - alpha_a).powi(3);

        // Corrector with centering and the second-order term.
        let scaled_ds = scaling.w_inv(&ds_a);
        let scaled_dz = scaling.w(&dz_a);
        let correction = cone_map(&cones, &scaled_ds, &scaled_dz, jordan_product);
        let d_s = -&lambda_sq + &e * (sigma * mu) - correction;
        let d_k = -(tau * kappa) + sigma * mu - dtau_a * dkappa_a;
        let (dx, ds, dz, dtau, dkappa) = newton(sigma, &d_s, d_k);
        let alpha =
            step_to_boundary(&ds, &dz, dtau, dkappa).map_or(T::one(), |a| (a * step_fraction).min(T::one()));
        let finite = dx.iter().chain(ds.iter()).chain(dz.iter()).all(|v| v.is_finite())
            && dtau.is_finite()
            && dkappa.is_finite();
        if !finite || alpha < lit(1e-10) {
            break;
        }

        x += &dx * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
        tau += dtau * alpha;
        kappa += dkappa * alpha;
    }

    if let Some((_, it)) = best {
        x = it.x;
        s = it.s;
        z = it.z;
        tau = it.tau;
        status = ConeStatus::Optimal;
    }
    let (primal, slack, dual) = match status {
        ConeStatus::Infeasible => (x, s, &z / (-h.dot(&z))),
        ConeStatus::Unbounded => {
            let cx = -c.dot(&x);
            (&x / cx, &s / cx, z)
        }
        _ => (&x / tau, &s / tau, &z / tau),
    };
    let gap = slack.dot(&dual);
    Ok(ConeSolution {
        primal,
        slack,
        dual,
        status,
        gap,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn in_cone(x: &[f64]) -> bool {
        x[0] > 0.0 && x[0] * x[0] > x[1..].iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn nt_scaling_maps_both_sides_to_lambda() {
        let s = [3.0, 1.0, -0.5, 0.7];
        let z = [2.0, -0.3, 0.8, 0.1];
        assert!(in_cone(&s) && in_cone(&z));
        let sc = nt_scaling(&s, &z);
        let wz = &sc.w * DVector::from_row_slice(&z);
        let winv_s = &sc.w_inv * DVector::from_row_slice(&s);
        assert_relative_eq!(wz, winv_s, epsilon = 1e-12);
        assert_relative_eq!(&sc.w * &sc.w_inv, DMatrix::identity(4, 4), epsilon = 1e-12);

        let sc = nt_scaling(&[4.0], &[1.0]);
        assert_relative_eq!(sc.w[(0, 0)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn jordan_divide_inverts_product() {
        let l = [2.0f64, 0.3, -0.4];
        let d = [0.5, 1.0, -2.0];
        let mut u = [0.0; 3];
        jordan_divide(&l, &d, &mut u);
        let mut back = [0.0; 3];
        jordan_product(&l, &u, &mut back);
        for i in 0..3 {
            assert!((back[i] - d[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn max_step_hits_the_boundary() {
        let x = [1.0, 0.0, 0.0];
        let d = [0.0, 1.0, 0.0];
        assert_relative_eq!(max_step_cone(&x, &d).unwrap(), 1.0, epsilon = 1e-14);
        assert!(max_step_cone(&x, &[1.0, 0.5, 0.0]).is_none());
        assert_relative_eq!(max_step_cone(&[2.0], &[-4.0]).unwrap(), 0.5);
        let a = max_step_cone(&[2.0, 0.5, 0.5], &[-1.0, 0.3, -0.2]).unwrap();
        let y: Vec<f64> = [2.0, 0.5, 0.5]
            .iter()
            .zip([-1.0, 0.3, -0.2])
            .map(|(x, d)| x + a * d)
            .collect();
        assert!((y[0] - (y[1] * y[1] + y[2] * y[2]).sqrt()).abs() < 1e-12);
    }

    /// minimize t s.t. ‖(x − 1, y)‖ ≤ t, ‖(x, y)‖ ≤ 0.5
    fn toy() -> ConeProblem<f64> {
        let g = DMatrix::from_row_slice(
            6,
            3,
            &[
                -1.0, 0.0, 0.0, //
                0.0, -1.0, 0.0, //
                0.0, 0.0, -1.0, //
                0.0, 0.0, 0.0, //
                0.0, -1.0, 0.0, //
                0.0, 0.0, -1.0,
            ],
        );
        let h = DVector::from_row_slice(&[0.0, -1.0, 0.0, 0.5, 0.0, 0.0]);
        ConeProblem {
            c: DVector::from_row_slice(&[1.0, 0.0, 0.0]),
            g,
            h,
            cone_dims: vec![3, 3],
        }
    }

    #[test]
    fn toy_problem_solution() {
        let sol = solve_cone(&toy(), &ConeSettings::default()).unwrap();
        assert_eq!(sol.status, ConeStatus::Optimal);
        assert_relative_eq!(sol.primal[0], 0.5, epsilon = 1e-8);
        assert_relative_eq!(sol.primal[1], 0.5, epsilon = 1e-7);
        assert!(sol.primal[2].abs() < 1e-7);
        assert!(sol.gap < 1e-8);
    }

    #[test]
    fn detects_primal_infeasibility() {
        // ‖x − 3‖ ≤ 1 and ‖x‖ ≤ 1 cannot both hold.
        let p = ConeProblem {
            c: DVector::from_row_slice(&[1.0]),
            g: DMatrix::from_row_slice(4, 1, &[0.0, -1.0, 0.0, -1.0]),
            h: DVector::from_row_slice(&[1.0, -3.0, 1.0, 0.0]),
            cone_dims: vec![2, 2],
        };
        let sol = solve_cone(&p, &ConeSettings::default()).unwrap();
        assert_eq!(sol.status, ConeStatus::Infeasible);
        // Certificate: Gᵀz = 0, hᵀz = −1, z ∈ K.
        assert!((p.g.transpose() * &sol.dual).norm() < 1e-6);
        assert_relative_eq!(p.h.dot(&sol.dual), -1.0, epsilon = 1e-9);
    }

    #[test]
    fn detects_unbounded_objective() {
        // minimize −x subject to x ≥ 0 (a one-dimensional cone).
        let p = ConeProblem {
            c: DVector::from_row_slice(&[-1.0]),
            g: DMatrix::from_row_slice(1, 1, &[-1.0]),
            h: DVector::from_row_slice(&[0.0]),
            cone_dims: vec![1],
        };
        let sol = solve_cone(&p, &ConeSettings::default()).unwrap();
        assert_eq!(sol.status, ConeStatus::Unbounded);
    }

    #[test]
    fn linear_program_with_orthant_cones() {
        // minimize x + y s.t. x ≥ 1, y ≥ 2
        let p = ConeProblem {
            c: DVector::from_row_slice(&[1.0, 1.0]),
            g: DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]),
            h: DVector::from_row_slice(&[-1.0, -2.0]),
            cone_dims: vec![1, 1],
        };
        let sol = solve_cone(&p, &ConeSettings::default()).unwrap();
        assert_eq!(sol.status, ConeStatus::Optimal);
        assert_relative_eq!(sol.primal, DVector::from_row_slice(&[1.0, 2.0]), epsilon = 1e-8);
    }

    #[test]
    fn rejects_malformed_problems() {
        let mut p = toy();
        p.cone_dims = vec![3, 2];
        assert!(solve_cone(&p, &ConeSettings::default()).is_err());
        let mut p = toy();
        p.c = DVector::zeros(2);
        assert!(solve_cone(&p, &ConeSettings::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let a = solve_cone(&toy(), &ConeSettings::default()).unwrap();
        let b = solve_cone(&toy(), &ConeSettings::default()).unwrap();
        assert_eq!(a.primal, b.primal);
        assert_eq!(a.iterations, b.iterations);
    }
}
