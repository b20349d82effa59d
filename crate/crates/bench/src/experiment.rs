//! Problem construction, parameter sweeps and their on-disk outputs.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use segopt::functionals::{
    make_bhattacharyya, make_kl, make_l2_bins, make_loglikelihood, make_moments, make_volume,
};
use segopt::grid::{bin_counts, io, Image, Labeling};
use segopt::level_set::{self, Backtracking, LevelSetConfig};
use segopt::trust_region::{self, CroftonStencil, TrustConfig};
use segopt::{Energy, EvalCounter, LengthConvention, RunResult, RunStatus, Term};

use crate::config::{ExperimentConfig, ImageSource, ProblemKind, SolverKind, TargetSpec};
use crate::synth::{centered_square, synth_circle_image, targets_from_ellipse, SynthSpec};

/// Environment variable capping sweep workers.
pub const THREADS_ENV: &str = "SEGOPT_THREADS";

/// Fraction of the grid covered by the default initial square on file inputs.
pub const DEFAULT_INIT_FRACTION: f64 = 0.25;

/// An image, an initial mask and the energy terms, shared by every solver.
#[derive(Debug, Clone)]
pub struct Problem {
    pub kind: ProblemKind,
    pub image: Image,
    pub initial: Labeling,
    pub terms: Vec<Term>,
    /// Hex SHA-256 of everything that defines the problem.
    pub hash: String,
}

impl Problem {
    pub fn energy(&self, convention: LengthConvention) -> Result<Energy> {
        Ok(Energy::new(self.terms.clone(), convention)?)
    }
}

/// Builds the image, targets and energy terms described by `cfg`.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    cfg.validate()?;
    let target = cfg.target.as_ref().expect("validated");
    let (image, synth_init) = match &cfg.image {
        ImageSource::Synthetic { size, noise } => {
            let init_area = match target {
                TargetSpec::Volume(v0) => v0 / 2.0,
                _ => DEFAULT_INIT_FRACTION * (size * size) as f64,
            };
            let spec = SynthSpec {
                seed: cfg.seed,
                noise: *noise,
                init_area,
            };
            let (img, init) = synth_circle_image(*size, &spec)?;
            (img, Some(init))
        }
        ImageSource::File(path) => (
            io::load_image(path).with_context(|| format!("loading image {}", path.display()))?,
            None,
        ),
    };
    let (w, h) = image.dims();
    let initial = match (&cfg.init_mask, synth_init) {
        (Some(path), _) => {
            io::load_mask(path).with_context(|| format!("loading mask {}", path.display()))?
        }
        (None, Some(init)) => init,
        (None, None) => centered_square(w, h, DEFAULT_INIT_FRACTION * (w * h) as f64)?,
    };
    initial.check_dims((w, h))?;

    let length = Term::Length {
        weight: cfg.lambda_length,
    };
    let terms = match (cfg.problem, target) {
        (ProblemKind::Volume, TargetSpec::Volume(v0)) => vec![
            Term::Regional {
                model: make_volume(*v0)?,
                weight: cfg.lambda_volume,
            },
            length,
        ],
        (ProblemKind::Moments, TargetSpec::Ellipse(e)) => {
            let t = targets_from_ellipse(e, &image, cfg.bins, cfg.moment_order)?;
            // the shape prior leaves the volume to the appearance term
            let moments: Vec<_> = t.moments.into_iter().filter(|m| m.p + m.q > 0).collect();
            if moments.is_empty() {
                bail!("moment order {} leaves no shape targets", cfg.moment_order);
            }
            vec![
                Term::Regional {
                    model: make_moments(moments)?,
                    weight: cfg.lambda_shape,
                },
                length,
                Term::Unary {
                    field: make_loglikelihood(&image, &t.fg, &t.bg)?,
                    weight: cfg.lambda_app,
                },
            ]
        }
        (kind, target) => {
            let gt = match target {
                TargetSpec::Ellipse(e) => e.rasterize(w, h),
                TargetSpec::GroundTruth(path) => io::load_mask(path)
                    .with_context(|| format!("loading ground truth {}", path.display()))?,
                TargetSpec::Volume(_) => unreachable!("validated"),
            };
            gt.check_dims((w, h))?;
            let counts = bin_counts(&image, &gt, cfg.bins)?;
            let model = match kind {
                ProblemKind::L2 => make_l2_bins(counts)?,
                ProblemKind::Kl => make_kl(counts.normalized()?)?,
                ProblemKind::Bhattacharyya => make_bhattacharyya(counts.normalized()?)?,
                _ => unreachable!("validated"),
            };
            vec![
                Term::Regional {
                    model,
                    weight: cfg.lambda_app,
                },
                length,
            ]
        }
    };

    let hash = problem_hash(cfg, &image, &initial, &terms);
    Ok(Problem {
        kind: cfg.problem,
        image,
        initial,
        terms,
        hash,
    })
}

fn problem_hash(cfg: &ExperimentConfig, img: &Image, initial: &Labeling, terms: &[Term]) -> String {
    let mut h = Sha256::new();
    h.update(cfg.problem.name().as_bytes());
    h.update(format!("{:?}", terms).as_bytes());
    for v in [img.width(), img.height(), img.channels()] {
        h.update((v as u64).to_le_bytes());
    }
    for v in img.data() {
        h.update(v.to_le_bytes());
    }
    h.update(initial.as_slice().iter().map(|&b| u8::from(b)).collect::<Vec<_>>());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub problem_hash: String,
    pub problem: String,
    pub solver: String,
    pub param: f64,
    pub status: String,
    pub energy_continuous: f64,
    pub energy_crofton: f64,
    /// Everything except the length term.
    pub regional: f64,
    pub evaluations: u64,
    pub cpu_ms: f64,
    pub iterations: usize,
    pub area: usize,
    pub isoperimetric: f64,
}

pub const SUMMARY_HEADER: &str =
    "problem_hash,problem,solver,param,status,E_continuous,E_crofton,R,evals,cpu_ms,iterations,area,isoperimetric";

impl SummaryRow {
    /// Final energy under the solver's own length convention.
    pub fn own_energy(&self) -> f64 {
        if self.solver == SolverKind::Ftr.name() {
            self.energy_crofton
        } else {
            self.energy_continuous
        }
    }

    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.problem_hash,
            self.problem,
            self.solver,
            self.param,
            self.status,
            self.energy_continuous,
            self.energy_crofton,
            self.regional,
            self.evaluations,
            self.cpu_ms,
            self.iterations,
            self.area,
            self.isoperimetric
        )
    }

    fn from_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            bail!("summary line has {} fields, expected 13: {line:?}", f.len());
        }
        let ctx = || format!("bad summary line {line:?}");
        Ok(Self {
            problem_hash: f[0].to_string(),
            problem: f[1].to_string(),
            solver: f[2].to_string(),
            param: f[3].parse().with_context(ctx)?,
            status: f[4].to_string(),
            energy_continuous: f[5].parse().with_context(ctx)?,
            energy_crofton: f[6].parse().with_context(ctx)?,
            regional: f[7].parse().with_context(ctx)?,
            evaluations: f[8].parse().with_context(ctx)?,
            cpu_ms: f[9].parse().with_context(ctx)?,
            iterations: f[10].parse().with_context(ctx)?,
            area: f[11].parse().with_context(ctx)?,
            isoperimetric: f[12].parse().with_context(ctx)?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == SUMMARY_HEADER => {}
            other => bail!("missing summary header, found {other:?}"),
        }
        Ok(Self {
            rows: lines.map(SummaryRow::from_csv).collect::<Result<_>>()?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading summary {}", path.display()))?;
        Self::from_csv(&text)
    }
}

/// `4 pi A / P^2` with the order-16 Crofton perimeter, 0 for an empty boundary.
pub fn isoperimetric_ratio(s: &Labeling) -> f64 {
    let p = CroftonStencil::default().length(s);
    if p > 0.0 {
        4.0 * std::f64::consts::PI * s.area() as f64 / (p * p)
    } else {
        0.0
    }
}

/// Runs one solver with one sweep parameter.
pub fn run_solver(problem: &Problem, cfg: &ExperimentConfig, solver: SolverKind, param: f64) -> Result<RunResult> {
    let img = &problem.image;
    let result = match solver {
        SolverKind::Ftr => {
            let tc = TrustConfig {
                alpha: param,
                initial_radius: cfg.initial_radius,
                max_iters: cfg.ftr_max_iters,
                record_cpu_time: cfg.record_cpu_time,
                ..Default::default()
            };
            trust_region::run(img, &problem.initial, &problem.energy(LengthConvention::Crofton)?, &tc)?
        }
        SolverKind::LevelSet | SolverKind::LevelSetAdaptive => {
            let lc = LevelSetConfig {
                dt: param,
                max_iters: cfg.max_iters,
                window: cfg.window,
                tolerance: cfg.tolerance,
                record_cpu_time: cfg.record_cpu_time,
                ..Default::default()
            };
            let energy = problem.energy(LengthConvention::Continuous)?;
            if solver == SolverKind::LevelSet {
                level_set::run(img, &problem.initial, &energy, &lc)?
            } else {
                level_set::run_adaptive(img, &problem.initial, &energy, &lc, Backtracking::default())?
            }
        }
    };
    Ok(result)
}

/// Summary line of a finished run. The solver-convention energy is taken
/// from the trace row the run reports: the last one for the trust region and
/// adaptive level sets, the best one for fixed-step level sets.
pub fn summarize(problem: &Problem, solver: SolverKind, param: f64, result: &RunResult) -> Result<SummaryRow> {
    let convention = match solver {
        SolverKind::Ftr => LengthConvention::Crofton,
        _ => LengthConvention::Continuous,
    };
    let report = problem
        .energy(convention)?
        .report(&problem.image, &result.labeling, &EvalCounter::default())?;
    let row = match solver {
        SolverKind::LevelSet => result.trace.best(),
        _ => result.trace.last(),
    };
    let own = row.map_or(report.total, |r| r.energy);
    let (energy_continuous, energy_crofton) = match convention {
        LengthConvention::Crofton => (report.total_under(LengthConvention::Continuous), own),
        LengthConvention::Continuous => (own, report.total_under(LengthConvention::Crofton)),
    };
    Ok(SummaryRow {
        problem_hash: problem.hash.clone(),
        problem: problem.kind.name().to_string(),
        solver: solver.name().to_string(),
        param,
        status: result.status.to_string(),
        energy_continuous,
        energy_crofton,
        regional: report.data_term(),
        evaluations: result.evaluations,
        cpu_ms: result.trace.last().map_or(0.0, |r| r.cpu_ms),
        iterations: result.iterations,
        area: result.labeling.area(),
        isoperimetric: isoperimetric_ratio(&result.labeling),
    })
}

pub fn trace_path(dir: &Path, solver: SolverKind, param: f64) -> PathBuf {
    dir.join(format!("trace_{}_{}.csv", solver.name(), param))
}

pub fn mask_path(dir: &Path, solver: SolverKind, param: f64) -> PathBuf {
    dir.join(format!("mask_{}_{}.pgm", solver.name(), param))
}

/// Worker count: `SEGOPT_THREADS` if set, else the available parallelism,
/// never more than the number of jobs.
pub fn worker_count(jobs: usize) -> Result<usize> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .with_context(|| format!("{THREADS_ENV}={v:?} is not a count"))?
            .max(1),
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    Ok(cap.min(jobs.max(1)))
}

/// Runs the configured solver for every sweep parameter, writes each trace
/// and final mask, then `summary.csv`. Rows follow the sweep order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    let problem = build_problem(cfg)?;
    let dir = &cfg.output;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let params = cfg.parameters().to_vec();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(params.len())?)
        .build()?;
    info!(
        "{} with {} over {:?} on problem {}",
        cfg.problem,
        cfg.solver,
        params,
        &problem.hash[..12]
    );
    let rows: Vec<SummaryRow> = pool.install(|| {
        params
            .par_iter()
            .map(|&param| -> Result<SummaryRow> {
                let result = run_solver(&problem, cfg, cfg.solver, param)?;
                if let RunStatus::Unstable(detail) = &result.status {
                    info!("{} {param}: unstable ({detail})", cfg.solver);
                }
                let path = trace_path(dir, cfg.solver, param);
                let file = fs::File::create(&path)
                    .with_context(|| format!("creating {}", path.display()))?;
                let mut out = BufWriter::new(file);
                result.trace.write_csv(&mut out)?;
                out.flush()?;
                io::save_mask(mask_path(dir, cfg.solver, param), &result.labeling)?;
                let row = summarize(&problem, cfg.solver, param, &result)?;
                info!(
                    "{} {param}: {} E={} evals={} iterations={}",
                    cfg.solver,
                    row.status,
                    row.own_energy(),
                    row.evaluations,
                    row.iterations
                );
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = Summary { rows };
    fs::write(dir.join("summary.csv"), summary.to_csv())?;
    Ok(summary)
}
