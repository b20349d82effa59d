//! Experiment configuration: a plain `key = value` file whose keys are all
//! mirrored by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use crate::synth::EllipseSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Volume,
    Moments,
    L2,
    Kl,
    Bhattacharyya,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Volume => "volume",
            ProblemKind::Moments => "moments",
            ProblemKind::L2 => "l2",
            ProblemKind::Kl => "kl",
            ProblemKind::Bhattacharyya => "bhattacharyya",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "volume" => ProblemKind::Volume,
            "moments" => ProblemKind::Moments,
            "l2" => ProblemKind::L2,
            "kl" => ProblemKind::Kl,
            "bhattacharyya" => ProblemKind::Bhattacharyya,
            _ => bail!("unknown problem kind {s:?}"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    LevelSet,
    LevelSetAdaptive,
    Ftr,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::LevelSet => "levelset",
            SolverKind::LevelSetAdaptive => "levelset-adaptive",
            SolverKind::Ftr => "ftr",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "levelset" => SolverKind::LevelSet,
            "levelset-adaptive" => SolverKind::LevelSetAdaptive,
            "ftr" => SolverKind::Ftr,
            _ => bail!("unknown solver {s:?}"),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Synthetic { size: usize, noise: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Volume(f64),
    Ellipse(EllipseSpec),
    GroundTruth(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub image: ImageSource,
    pub target: Option<TargetSpec>,
    pub init_mask: Option<PathBuf>,
    pub lambda_length: f64,
    pub lambda_volume: f64,
    pub lambda_shape: f64,
    pub lambda_app: f64,
    pub bins: usize,
    pub moment_order: u32,
    pub solver: SolverKind,
    pub time_steps: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Level-set iteration cap.
    pub max_iters: usize,
    /// Trust-region iteration cap.
    pub ftr_max_iters: usize,
    pub initial_radius: f64,
    pub window: usize,
    pub tolerance: f64,
    pub output: PathBuf,
    pub seed: u64,
    /// Zero every `cpu_ms` entry so traces are byte-reproducible.
    pub record_cpu_time: bool,
}

/// Every key accepted in config files and as `--key` flags.
pub const CONFIG_KEYS: &[&str] = &[
    "problem",
    "image",
    "synth_size",
    "synth_noise",
    "target_volume",
    "ellipse",
    "ground_truth",
    "init_mask",
    "lambda_length",
    "lambda_volume",
    "lambda_shape",
    "lambda_app",
    "bins",
    "moment_order",
    "solver",
    "dt",
    "alpha",
    "max_iters",
    "ftr_max_iters",
    "initial_radius",
    "window",
    "tolerance",
    "output",
    "seed",
    "cpu_time",
];

impl ExperimentConfig {
    /// Weights and binning used for each experiment family in the paper.
    pub fn defaults(problem: ProblemKind) -> Self {
        let (lambda_length, lambda_volume, lambda_shape, lambda_app) = match problem {
            ProblemKind::Volume => (1.0, 1e-4, 0.0, 0.0),
            ProblemKind::Moments => (10.0, 0.0, 0.01, 1.0),
            ProblemKind::L2 => (1.0, 0.0, 0.0, 1.0),
            ProblemKind::Kl => (0.01, 0.0, 0.0, 100.0),
            ProblemKind::Bhattacharyya => (0.01, 0.0, 0.0, 1000.0),
        };
        Self {
            problem,
            image: ImageSource::Synthetic {
                size: 100,
                noise: 0.0,
            },
            target: None,
            init_mask: None,
            lambda_length,
            lambda_volume,
            lambda_shape,
            lambda_app,
            bins: 100,
            moment_order: 2,
            solver: SolverKind::Ftr,
            time_steps: segopt::level_set::DEFAULT_TIME_STEPS.to_vec(),
            alphas: segopt::trust_region::DEFAULT_ALPHAS.to_vec(),
            max_iters: 10_000,
            ftr_max_iters: 1000,
            initial_radius: 10.0,
            window: 50,
            tolerance: 1e-6,
            output: PathBuf::from("out"),
            seed: 0,
            record_cpu_time: true,
        }
    }

    /// Applies `key=value` pairs in order. A `problem` key, wherever it
    /// appears, selects the defaults the other keys are applied on top of.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
        let problem = pairs
            .iter()
            .rev()
            .find(|(k, _)| *k == "problem")
            .map(|(_, v)| v.parse())
            .transpose()?
            .ok_or_else(|| anyhow!("missing key `problem`"))?;
        let mut cfg = Self::defaults(problem);
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Vec<(String, String)>> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        parse_pairs(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let ctx = || format!("config key {key} = {value:?}");
        match key {
            "problem" => self.problem = value.parse().with_context(ctx)?,
            "image" => self.image = ImageSource::File(PathBuf::from(value)),
            "synth_size" | "synth_noise" => {
                let (mut size, mut noise) = match self.image {
                    ImageSource::Synthetic { size, noise } => (size, noise),
                    ImageSource::File(_) => (100, 0.0),
                };
                if key == "synth_size" {
                    size = value.parse().with_context(ctx)?;
                } else {
                    noise = value.parse().with_context(ctx)?;
                }
                self.image = ImageSource::Synthetic { size, noise };
            }
            "target_volume" => self.set_target(TargetSpec::Volume(value.parse().with_context(ctx)?))?,
            "ellipse" => self.set_target(TargetSpec::Ellipse(value.parse().with_context(ctx)?))?,
            "ground_truth" => self.set_target(TargetSpec::GroundTruth(PathBuf::from(value)))?,
            "init_mask" => self.init_mask = Some(PathBuf::from(value)),
            "lambda_length" => self.lambda_length = value.parse().with_context(ctx)?,
            "lambda_volume" => self.lambda_volume = value.parse().with_context(ctx)?,
            "lambda_shape" => self.lambda_shape = value.parse().with_context(ctx)?,
            "lambda_app" => self.lambda_app = value.parse().with_context(ctx)?,
            "bins" => self.bins = value.parse().with_context(ctx)?,
            "moment_order" => self.moment_order = value.parse().with_context(ctx)?,
            "solver" => self.solver = value.parse().with_context(ctx)?,
            "dt" => self.time_steps = parse_list(value).with_context(ctx)?,
            "alpha" => self.alphas = parse_list(value).with_context(ctx)?,
            "max_iters" => self.max_iters = value.parse().with_context(ctx)?,
            "ftr_max_iters" => self.ftr_max_iters = value.parse().with_context(ctx)?,
            "initial_radius" => self.initial_radius = value.parse().with_context(ctx)?,
            "window" => self.window = value.parse().with_context(ctx)?,
            "tolerance" => self.tolerance = value.parse().with_context(ctx)?,
            "output" => self.output = PathBuf::from(value),
            "seed" => self.seed = value.parse().with_context(ctx)?,
            "cpu_time" => self.record_cpu_time = parse_bool(value).with_context(ctx)?,
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    fn set_target(&mut self, t: TargetSpec) -> Result<()> {
        if let Some(old) = &self.target {
            if std::mem::discriminant(old) != std::mem::discriminant(&t) {
                bail!("more than one target spec given ({old:?} and {t:?})");
            }
        }
        self.target = Some(t);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.lambda_length,
            self.lambda_volume,
            self.lambda_shape,
            self.lambda_app,
        ];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            bail!("weights must be finite and nonnegative: {weights:?}");
        }
        if self.bins == 0 {
            bail!("bins must be positive");
        }
        if let ImageSource::Synthetic { size, noise } = self.image {
            if size < 32 {
                bail!("synthetic images must be at least 32 pixels wide, got {size}");
            }
            if !(noise.is_finite() && noise >= 0.0) {
                bail!("synthetic noise must be nonnegative, got {noise}");
            }
        }
        let target = self
            .target
            .as_ref()
            .ok_or_else(|| anyhow!("problem {} needs a target spec", self.problem))?;
        let ok = match self.problem {
            ProblemKind::Volume => matches!(target, TargetSpec::Volume(_)),
            ProblemKind::Moments => matches!(target, TargetSpec::Ellipse(_)),
            _ => matches!(target, TargetSpec::Ellipse(_) | TargetSpec::GroundTruth(_)),
        };
        if !ok {
            bail!("target {target:?} does not fit problem {}", self.problem);
        }
        let params = self.parameters();
        if params.is_empty() {
            bail!("empty parameter sweep");
        }
        match self.solver {
            SolverKind::Ftr if params.iter().any(|a| !(*a > 1.0 && a.is_finite())) => {
                bail!("alpha values must exceed 1: {params:?}")
            }
            SolverKind::LevelSet | SolverKind::LevelSetAdaptive
                if params.iter().any(|d| !(*d > 0.0 && d.is_finite())) =>
            {
                bail!("time steps must be positive: {params:?}")
            }
            _ => {}
        }
        Ok(())
    }

    /// Values swept for the configured solver.
    pub fn parameters(&self) -> &[f64] {
        match self.solver {
            SolverKind::Ftr => &self.alphas,
            SolverKind::LevelSet | SolverKind::LevelSetAdaptive => &self.time_steps,
        }
    }
}

pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("expected key = value, got {line:?}"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn parse_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(Into::into))
        .collect()
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("expected a boolean, got {value:?}"),
    }
}
