//! Frame-to-frame odometry over a whole sequence.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use crate::complexity::{adaptive_lambda, select_epsilon, tykkala_lambda, LambdaMode, TuningConfig};
use crate::dataset::synthetic::{generate_sequence, SequenceSpec};
use crate::dataset::tum::{default_intrinsics, load_sequence, SequenceManifest, MAX_TIME_OFFSET};
use crate::dataset::{Frame, FramePair};
use crate::error::{Error, Result};
use crate::evaluation::{
    accumulate, drift_rmse, Accumulated, DriftReport, PairEstimate, ReportMeta, Trajectory, DRIFT_INTERVAL,
};
use crate::geometry::{CameraIntrinsics, MotionTwist, RigidTransform};
use crate::solver::bounded::align_bounded;
use crate::solver::weighted::align_weighted;
use crate::solver::{AlignmentResult, SolverSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Intensity only, the weighted sum with `λ = 0`.
    Single,
    /// Weighted sum with `λ` chosen by the configured mode.
    Weighted,
    /// Weighted sum with the median-ratio `λ`.
    Tykkala,
    /// Minimize `F_I` subject to `F_D ≤ ε_D`.
    Bounded,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "weighted" => Ok(Self::Weighted),
            "tykkala" => Ok(Self::Tykkala),
            "bounded" => Ok(Self::Bounded),
            other => Err(Error::InvalidInput(format!(
                "unknown method '{other}' (expected single, weighted, tykkala or bounded)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Single => "single",
            Self::Weighted => "weighted",
            Self::Tykkala => "tykkala",
            Self::Bounded => "bounded",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    /// A TUM-format sequence directory.
    Sequence(PathBuf),
    Synthetic(SequenceSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub input: Input,
    pub method: Method,
    pub tuning: TuningConfig<f64>,
    pub settings: SolverSettings<f64>,
    /// Replaces the sequence's own intrinsics.
    pub intrinsics: Option<CameraIntrinsics<f64>>,
    /// Replaces the seed of a synthetic spec.
    pub seed: Option<u64>,
    pub max_time_offset: f64,
    pub drift_interval: f64,
    /// Pairs further apart than this many seconds are flagged.
    pub max_gap: f64,
    /// Include the mean runtime in the report, which makes it non-reproducible.
    pub record_runtime: bool,
}

impl RunConfig {
    pub fn new(input: Input, method: Method) -> Self {
        Self {
            input,
            method,
            tuning: TuningConfig::default(),
            settings: SolverSettings::default(),
            intrinsics: None,
            seed: None,
            max_time_offset: MAX_TIME_OFFSET,
            drift_interval: DRIFT_INTERVAL,
            max_gap: 0.5,
            record_runtime: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.tuning.validate()?;
        self.settings.validate()?;
        if !(self.drift_interval > 0.0) || !(self.max_gap > 0.0) {
            return Err(Error::InvalidInput(
                "drift interval and gap limit must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Name of the `λ` selection actually used.
    pub fn lambda_label(&self) -> String {
        match self.method {
            Method::Single => "zero".into(),
            Method::Tykkala => LambdaMode::Tykkala.to_string(),
            Method::Weighted => self.tuning.lambda_mode.to_string(),
            Method::Bounded => "none".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub estimates: Vec<PairEstimate>,
    pub results: Vec<AlignmentResult<f64>>,
    /// Present when the input carries ground truth.
    pub report: Option<DriftReport>,
    pub meta: ReportMeta,
    pub mean_runtime_ms: f64,
    pub warnings: Vec<String>,
}

enum Source {
    Manifest(SequenceManifest),
    Frames(Vec<Frame<f64>>),
}

impl Source {
    fn len(&self) -> usize {
        match self {
            Source::Manifest(m) => m.frames.len(),
            Source::Frames(f) => f.len(),
        }
    }

    fn frame(&self, i: usize) -> Result<Frame<f64>> {
        match self {
            Source::Manifest(m) => m.load_frame(i),
            Source::Frames(f) => Ok(f[i].clone()),
        }
    }
}

/// Aligns one pair with `config.method`.
pub fn align_pair(
    pair: &FramePair<f64>,
    init: &MotionTwist<f64>,
    config: &RunConfig,
) -> Result<AlignmentResult<f64>> {
    let lambda = match (config.method, config.tuning.lambda_mode) {
        (Method::Bounded, _) => {
            let per_pixel = select_epsilon(pair, &config.tuning)?;
            let epsilon = per_pixel * pair.first.depth.valid_count() as f64;
            return align_bounded(pair, init, epsilon, &config.settings);
        }
        (Method::Single, _) => 0.0,
        (Method::Tykkala, _) | (Method::Weighted, LambdaMode::Tykkala) => tykkala_lambda(pair)?,
        (Method::Weighted, LambdaMode::Fixed) => config.tuning.fixed_lambda,
        (Method::Weighted, LambdaMode::Complexity) => adaptive_lambda(pair, &config.tuning)?,
    };
    align_weighted(pair, init, lambda, &config.settings)
}

/// Runs odometry over every consecutive frame pair, each initialized with the
/// previous estimate, and evaluates drift when ground truth is available.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let (source, intrinsics, ground_truth, sequence): (Source, _, Vec<(f64, RigidTransform<f64>)>, String) =
        match &config.input {
            Input::Sequence(path) => {
                let manifest = load_sequence(path, config.max_time_offset)?;
                let gt = manifest.ground_truth.clone();
                let name = path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                (Source::Manifest(manifest), default_intrinsics(), gt, name)
            }
            Input::Synthetic(spec) => {
                let mut spec = *spec;
                if let Some(seed) = config.seed {
                    spec.seed = seed;
                }
                let seq = generate_sequence(&spec)?;
                let name = format!("synthetic-{}-seed{}", spec.preset, spec.seed);
                (Source::Frames(seq.frames), seq.intrinsics, seq.ground_truth, name)
            }
        };
    let intrinsics = config.intrinsics.unwrap_or(intrinsics);
    if source.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "sequence has {} associated frames, need at least 2",
            source.len()
        )));
    }

    let mut estimates = Vec::with_capacity(source.len() - 1);
    let mut results = Vec::with_capacity(source.len() - 1);
    let mut runtime = 0.0;
    let mut init = MotionTwist::zero();
    let mut previous = source.frame(0)?;
    for i in 1..source.len() {
        let current = source.frame(i)?;
        let (t_first, t_second) = (previous.timestamp, current.timestamp);
        let pair = FramePair::new(previous, current, intrinsics)?;
        let start = Instant::now();
        let result = align_pair(&pair, &init, config)?;
        runtime += start.elapsed().as_secs_f64() * 1e3;
        log::debug!(
            "pair {i}: xi = {:?}, iterations {:?}",
            result.xi.to_vector(),
            result.iterations
        );
        init = result.xi;
        estimates.push(PairEstimate {
            t_first,
            t_second,
            xi: result.xi,
        });
        results.push(result);
        previous = pair.second;
    }
    let mean_runtime_ms = runtime / results.len() as f64;

    let Accumulated { trajectory, warnings } = accumulate(&estimates, config.max_gap)?;
    let report = if ground_truth.is_empty() {
        None
    } else {
        let gt = Trajectory::new(ground_truth)?;
        let mut report = drift_rmse(&trajectory, &gt, config.drift_interval)?;
        if config.record_runtime {
            report.mean_runtime_ms = Some(mean_runtime_ms);
        }
        Some(report)
    };
    Ok(RunOutput {
        meta: ReportMeta {
            sequence,
            method: config.method.to_string(),
            lambda_mode: config.lambda_label(),
            frames: trajectory.len(),
        },
        trajectory,
        estimates,
        results,
        report,
        mean_runtime_ms,
        warnings,
    })
}
