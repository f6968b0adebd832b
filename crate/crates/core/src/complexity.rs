//! Image complexity metrics and the weight / bound selection rules built on
//! them.
//!
//! The complexity of an image is the mean absolute central difference over
//! interior pixels, summed over both axes. Rich texture gives a large
//! intensity complexity and rich structure a large depth complexity; the
//! adaptive weight grows with the latter and shrinks with the former.

use crate::dataset::FramePair;
use crate::error::{Error, Result};
use crate::imaging::{DepthImage, IntensityImage};
use crate::scalar::{lit, Real};

/// Read access to a grid of possibly-missing values.
pub trait GridValues<T: Real> {
    fn grid_width(&self) -> usize;
    fn grid_height(&self) -> usize;
    fn value(&self, col: usize, row: usize) -> Option<T>;
}

impl<T: Real> GridValues<T> for IntensityImage<T> {
    fn grid_width(&self) -> usize {
        self.width()
    }

    fn grid_height(&self) -> usize {
        self.height()
    }

    fn value(&self, col: usize, row: usize) -> Option<T> {
        Some(self.get(col, row))
    }
}

impl<T: Real> GridValues<T> for DepthImage<T> {
    fn grid_width(&self) -> usize {
        self.width()
    }

    fn grid_height(&self) -> usize {
        self.height()
    }

    fn value(&self, col: usize, row: usize) -> Option<T> {
        self.get(col, row)
    }
}

/// How the weighted-sum method picks `λ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LambdaMode {
    Fixed,
    Tykkala,
    Complexity,
}

impl std::str::FromStr for LambdaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "tykkala" => Ok(Self::Tykkala),
            "complexity" => Ok(Self::Complexity),
            other => Err(Error::InvalidInput(format!("unknown lambda mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for LambdaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Fixed => "fixed",
            Self::Tykkala => "tykkala",
            Self::Complexity => "complexity",
        })
    }
}

/// Tunable constants for weight and bound selection.
///
/// The depth bounds are per valid pixel; solvers multiply them by the number
/// of residual rows so the bound tracks the unnormalized sum `F_D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuningConfig<T: Real> {
    pub phi: T,
    /// Depth-complexity threshold (meters per pixel).
    pub delta: T,
    pub epsilon_min: T,
    pub epsilon_max: T,
    pub lambda_mode: LambdaMode,
    pub fixed_lambda: T,
    /// Cap used when the intensity image has no texture at all.
    pub lambda_max: T,
}

impl<T: Real> Default for TuningConfig<T> {
    fn default() -> Self {
        Self {
            phi: T::one(),
            delta: lit(0.02),
            epsilon_min: lit(1e-3),
            epsilon_max: lit(1e3),
            lambda_mode: LambdaMode::Complexity,
            fixed_lambda: T::one(),
            lambda_max: lit(1e4),
        }
    }
}

impl<T: Real> TuningConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi > T::zero()) || !(self.delta > T::zero()) {
            return Err(Error::InvalidInput("phi and delta must be positive".into()));
        }
        if !(self.epsilon_min > T::zero() && self.epsilon_min < self.epsilon_max) {
            return Err(Error::InvalidInput("need 0 < epsilon_min < epsilon_max".into()));
        }
        if self.fixed_lambda < T::zero() || !(self.lambda_max > T::zero()) {
            return Err(Error::InvalidInput("lambda values must be non-negative".into()));
        }
        Ok(())
    }
}

/// Complexity metrics and the derived tuning values for one frame pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexityReport<T: Real> {
    pub pi_i: T,
    pub pi_d: T,
    /// `None` when the depth variance vanishes.
    pub gamma: Option<T>,
    pub lambda: T,
    /// Per-pixel depth bound.
    pub epsilon_d: T,
}

/// Mean of `|f(i+1,j) − f(i−1,j)| + |f(i,j+1) − f(i,j−1)|` over interior
/// pixels, `f` indexed by (row, column). Pixels with a missing operand are
/// skipped and excluded from the normalizer.
pub fn complexity_metric<T: Real, G: GridValues<T> + ?Sized>(img: &G) -> Result<T> {
    let (w, h) = (img.grid_width(), img.grid_height());
    if w < 3 || h < 3 {
        return Err(Error::InvalidInput(format!(
            "complexity needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let mut sum = T::zero();
    let mut count = 0usize;
    for row in 1..h - 1 {
        for col in 1..w - 1 {
            let (Some(down), Some(up), Some(right), Some(left)) = (
                img.value(col, row + 1),
                img.value(col, row - 1),
                img.value(col + 1, row),
                img.value(col - 1, row),
            ) else {
                continue;
            };
            sum += (down - up).abs() + (right - left).abs();
            count += 1;
        }
    }
    Ok(if count == 0 {
        T::zero()
    } else {
        sum / lit(count as f64)
    })
}

fn population_variance<T: Real>(values: impl Iterator<Item = T>) -> Option<T> {
    let (mut n, mut mean, mut m2) = (0usize, T::zero(), T::zero());
    // Welford update.
    for x in values {
        n += 1;
        let d = x - mean;
        mean += d / lit(n as f64);
        m2 += d * (x - mean);
    }
    (n > 0).then(|| m2 / lit(n as f64))
}

/// `σ²(I)/σ²(D)` over explicit value lists.
pub fn variance_ratio_of<T: Real>(intensity: &[T], depth: &[T]) -> Result<T> {
    if depth.len() < 2 {
        return Err(Error::DegenerateScaling("fewer than two depth values".into()));
    }
    let var_i = population_variance(intensity.iter().copied())
        .ok_or_else(|| Error::DegenerateScaling("no intensity values".into()))?;
    let var_d = population_variance(depth.iter().copied()).unwrap_or_else(T::zero);
    if !(var_d > T::zero()) {
        return Err(Error::DegenerateScaling("depth variance is zero".into()));
    }
    Ok(var_i / var_d)
}

/// `γ = σ²(I)/σ²(D)` with population variances, depth over valid pixels.
pub fn variance_ratio<T: Real>(intensity: &IntensityImage<T>, depth: &DepthImage<T>) -> Result<T> {
    let depth: Vec<T> = depth.valid_values().collect();
    variance_ratio_of(intensity.data(), &depth)
}

/// `λ = φ γ² π(D)² / π(I)²`.
pub fn lambda_formula<T: Real>(phi: T, gamma: T, pi_d: T, pi_i: T) -> T {
    phi * gamma * gamma * pi_d * pi_d / (pi_i * pi_i)
}

/// Adaptive weight from the first frame of `pair`.
///
/// A textureless first image yields `cfg.lambda_max`; a constant depth map
/// (no usable scale) falls back to `cfg.fixed_lambda`. The result never
/// exceeds `cfg.lambda_max`.
pub fn adaptive_lambda<T: Real>(pair: &FramePair<T>, cfg: &TuningConfig<T>) -> Result<T> {
    let pi_i = complexity_metric(&pair.first.intensity)?;
    if pi_i <= T::zero() {
        return Ok(cfg.lambda_max);
    }
    let pi_d = complexity_metric(&pair.first.depth)?;
    let lambda = match variance_ratio(&pair.first.intensity, &pair.first.depth) {
        Ok(gamma) => lambda_formula(cfg.phi, gamma, pi_d, pi_i),
        Err(Error::DegenerateScaling(_)) => cfg.fixed_lambda,
        Err(e) => return Err(e),
    };
    Ok(lambda.min(cfg.lambda_max))
}

fn median<T: Real>(mut values: Vec<T>) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mid = values.len() / 2;
    let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("finite values");
    let (_, upper, _) = values.select_nth_unstable_by(mid, cmp);
    let upper = *upper;
    if values.len() % 2 == 1 {
        return Some(upper);
    }
    let lower = values[..mid].iter().copied().fold(values[0], |a, b| a.max(b));
    Some((lower + upper) * lit(0.5))
}

/// `λ = |median(I)/median(D)|²` on the first frame, depth over valid pixels.
pub fn tykkala_lambda<T: Real>(pair: &FramePair<T>) -> Result<T> {
    let med_i = median(pair.first.intensity.data().to_vec())
        .ok_or_else(|| Error::DegenerateScaling("empty intensity image".into()))?;
    let med_d = median(pair.first.depth.valid_values().collect())
        .ok_or_else(|| Error::DegenerateScaling("no valid depth".into()))?;
    if med_d == T::zero() {
        return Err(Error::DegenerateScaling("median depth is zero".into()));
    }
    let ratio = med_i / med_d;
    Ok(ratio * ratio)
}

/// Two-case depth bound: `ε_max` when `π(D) ≤ δ`, `ε_min` otherwise.
pub fn epsilon_rule<T: Real>(pi_d: T, cfg: &TuningConfig<T>) -> T {
    if pi_d <= cfg.delta {
        cfg.epsilon_max
    } else {
        cfg.epsilon_min
    }
}

/// Per-pixel depth bound for `pair`, from the complexity of the first depth map.
pub fn select_epsilon<T: Real>(pair: &FramePair<T>, cfg: &TuningConfig<T>) -> Result<T> {
    Ok(epsilon_rule(complexity_metric(&pair.first.depth)?, cfg))
}

/// Computes every metric and tuning value for `pair`.
pub fn complexity_report<T: Real>(pair: &FramePair<T>, cfg: &TuningConfig<T>) -> Result<ComplexityReport<T>> {
    let pi_i = complexity_metric(&pair.first.intensity)?;
    let pi_d = complexity_metric(&pair.first.depth)?;
    let gamma = variance_ratio(&pair.first.intensity, &pair.first.depth).ok();
    Ok(ComplexityReport {
        pi_i,
        pi_d,
        gamma,
        lambda: adaptive_lambda(pair, cfg)?,
        epsilon_d: epsilon_rule(pi_d, cfg),
    })
}
