use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bivo::complexity::LambdaMode;
use bivo::dataset::synthetic::SequenceSpec;
use bivo::evaluation::emit_report;
use bivo::pipeline::{run, Input, Method, RunConfig};
use bivo::{CameraIntrinsics, Error};
use clap::error::ErrorKind;
use clap::Parser;

/// Dense RGB-D odometry over a TUM sequence or a synthetic scene.
#[derive(Debug, Parser)]
#[command(name = "bivo", version)]
struct Cli {
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// TUM-format sequence directory.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Synthetic sequence, e.g. `textureless:frames=31,depth_noise=0.0015`.
    #[arg(long)]
    synthetic: Option<String>,
    /// single, weighted, tykkala or bounded.
    #[arg(long)]
    method: Option<String>,
    /// fixed, tykkala or complexity (weighted method only).
    #[arg(long)]
    lambda_mode: Option<String>,
    /// λ for the fixed mode.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    /// Depth-complexity threshold for the bounded method.
    #[arg(long)]
    delta: Option<f64>,
    /// Per-pixel depth bound for structured scenes.
    #[arg(long)]
    eps_min: Option<f64>,
    /// Per-pixel depth bound for flat scenes.
    #[arg(long)]
    eps_max: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
    /// Iteration cap per pyramid level.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Camera intrinsics as `fx,fy,cx,cy`.
    #[arg(long)]
    intrinsics: Option<String>,
    /// Drift evaluation window, seconds.
    #[arg(long)]
    interval: Option<f64>,
    #[arg(long)]
    out_trajectory: Option<PathBuf>,
    #[arg(long)]
    out_report: Option<PathBuf>,
    /// Seed of the synthetic scene and noise.
    #[arg(long)]
    seed: Option<u64>,
    /// Add the mean runtime per match to the report.
    #[arg(long)]
    record_runtime: bool,
}

enum Failure {
    Usage(String),
    Data(Error),
    Numerical(Error),
}

impl Failure {
    fn from_run(e: Error) -> Self {
        match e {
            Error::DegenerateFrame(_) | Error::DegenerateScaling(_) | Error::Infeasible(_) => {
                Failure::Numerical(e)
            }
            _ => Failure::Data(e),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
        map.insert(k.trim().replace('_', "-"), v.trim().to_owned());
    }
    Ok(map)
}

fn parse_value<V: std::str::FromStr>(key: &str, value: &str) -> Result<V, Failure> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value '{value}' for {key}")))
}

/// Fills unset flags from the config file.
fn merge_config(cli: &mut Cli, map: BTreeMap<String, String>) -> Result<(), Failure> {
    for (key, value) in map {
        let v = value.as_str();
        match key.as_str() {
            "input" => {
                cli.input.get_or_insert_with(|| v.into());
            }
            "synthetic" => {
                cli.synthetic.get_or_insert_with(|| v.into());
            }
            "method" => {
                cli.method.get_or_insert_with(|| v.into());
            }
            "lambda-mode" => {
                cli.lambda_mode.get_or_insert_with(|| v.into());
            }
            "intrinsics" => {
                cli.intrinsics.get_or_insert_with(|| v.into());
            }
            "out-trajectory" => {
                cli.out_trajectory.get_or_insert_with(|| v.into());
            }
            "out-report" => {
                cli.out_report.get_or_insert_with(|| v.into());
            }
            "lambda" => {
                cli.lambda = cli.lambda.or(Some(parse_value(&key, v)?));
            }
            "phi" => {
                cli.phi = cli.phi.or(Some(parse_value(&key, v)?));
            }
            "delta" => {
                cli.delta = cli.delta.or(Some(parse_value(&key, v)?));
            }
            "eps-min" => {
                cli.eps_min = cli.eps_min.or(Some(parse_value(&key, v)?));
            }
            "eps-max" => {
                cli.eps_max = cli.eps_max.or(Some(parse_value(&key, v)?));
            }
            "levels" => {
                cli.levels = cli.levels.or(Some(parse_value(&key, v)?));
            }
            "max-iters" => {
                cli.max_iters = cli.max_iters.or(Some(parse_value(&key, v)?));
            }
            "interval" => {
                cli.interval = cli.interval.or(Some(parse_value(&key, v)?));
            }
            "seed" => {
                cli.seed = cli.seed.or(Some(parse_value(&key, v)?));
            }
            "record-runtime" => {
                cli.record_runtime |= parse_value::<bool>(&key, v)?;
            }
            other => return Err(usage(format!("unknown config key '{other}'"))),
        }
    }
    Ok(())
}

fn parse_intrinsics(s: &str) -> Result<CameraIntrinsics, Failure> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| parse_value("intrinsics", p.trim()))
        .collect::<Result<_, _>>()?;
    if v.len() != 4 {
        return Err(usage("intrinsics need four values fx,fy,cx,cy"));
    }
    CameraIntrinsics::new(v[0], v[1], v[2], v[3]).map_err(|e| usage(e.to_string()))
}

fn build_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let input = match (&cli.input, &cli.synthetic) {
        (Some(path), None) => Input::Sequence(path.clone()),
        (None, Some(spec)) => {
            Input::Synthetic(spec.parse::<SequenceSpec>().map_err(|e| usage(e.to_string()))?)
        }
        _ => return Err(usage("give exactly one of --input and --synthetic")),
    };
    let method = match &cli.method {
        Some(m) => m.parse::<Method>().map_err(|e| usage(e.to_string()))?,
        None => Method::Weighted,
    };
    let mut config = RunConfig::new(input, method);
    if let Some(mode) = &cli.lambda_mode {
        config.tuning.lambda_mode = mode.parse::<LambdaMode>().map_err(|e| usage(e.to_string()))?;
    }
    if let Some(v) = cli.lambda {
        config.tuning.fixed_lambda = v;
        if cli.lambda_mode.is_none() {
            config.tuning.lambda_mode = LambdaMode::Fixed;
        }
    }
    let t = &mut config.tuning;
    t.phi = cli.phi.unwrap_or(t.phi);
    t.delta = cli.delta.unwrap_or(t.delta);
    t.epsilon_min = cli.eps_min.unwrap_or(t.epsilon_min);
    t.epsilon_max = cli.eps_max.unwrap_or(t.epsilon_max);
    let s = &mut config.settings;
    s.pyramid_levels = cli.levels.unwrap_or(s.pyramid_levels);
    s.max_iterations = cli.max_iters.unwrap_or(s.max_iterations);
    config.drift_interval = cli.interval.unwrap_or(config.drift_interval);
    config.intrinsics = cli.intrinsics.as_deref().map(parse_intrinsics).transpose()?;
    config.seed = cli.seed;
    config.record_runtime = cli.record_runtime;
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn execute(cli: &Cli, config: &RunConfig, written: &mut Vec<PathBuf>) -> Result<(), Failure> {
    let out = run(config).map_err(Failure::from_run)?;
    if cli.out_report.is_some() && out.report.is_none() {
        return Err(Failure::Data(Error::Evaluation(
            "a report was requested but the input has no ground truth".into(),
        )));
    }
    if let Some(path) = &cli.out_trajectory {
        written.push(path.clone());
        out.trajectory.write_tum(path).map_err(Failure::Data)?;
    }
    if let (Some(path), Some(report)) = (&cli.out_report, &out.report) {
        written.push(path.clone());
        emit_report(report, &out.meta, path).map_err(Failure::Data)?;
    }
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} pairs, method {}, mean {:.3} ms per match",
        out.estimates.len(),
        out.meta.method,
        out.mean_runtime_ms
    );
    if let Some(r) = &out.report {
        println!("drift rmse {:.6} m/s, max {:.6} m/s", r.rmse_drift, r.max_error);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let mut written = Vec::new();
    let result = (|| {
        if let Some(path) = cli.config.clone() {
            merge_config(&mut cli, read_config_file(&path)?)?;
        }
        let config = build_config(&cli)?;
        execute(&cli, &config, &mut written)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            for path in &written {
                let _ = fs::remove_file(path);
            }
            let (code, msg) = match failure {
                Failure::Usage(m) => (1, format!("usage error: {m}")),
                Failure::Data(e) => (2, format!("data error: {e}")),
                Failure::Numerical(e) => (3, format!("numerical failure: {e}")),
            };
            eprintln!("bivo: {msg}");
            ExitCode::from(code)
        }
    }
}
