//! Gradient descent on the segment boundary through an embedding function.
//!
//! The segment is `S = {phi <= 0}`. Each iteration applies an explicit
//! forward-Euler update `phi += dt * A(phi)` with
//!
//! ```text
//! A = mu (lap(phi) - kappa) + (g + lambda kappa) delta_eps(phi)
//! ```
//!
//! where `g` is the per-pixel derivative of the non-length energy terms and
//! `kappa = div(grad phi / |grad phi|)`. The `mu` term pulls `phi` towards a
//! signed distance function. All spatial derivatives are central
//! differences with the border replicated.

use std::collections::VecDeque;
use std::f64::consts::PI;

use log::debug;

use crate::error::{Result, SegError};
use crate::functionals::{Energy, EnergyReport, EvalCounter};
use crate::grid::{signed_distance, Image, Labeling, ScalarField};
use crate::trace::{CpuClock, RunResult, RunStatus, Trace, TraceRow};

pub const DEFAULT_EPSILON: f64 = 1.5;
pub const DEFAULT_MU: f64 = 0.05;

/// Floor on `|grad phi|` in the curvature.
pub const GRADIENT_FLOOR: f64 = 1e-8;

/// Time steps swept by default.
pub const DEFAULT_TIME_STEPS: [f64; 7] = [1.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0];

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    pub phi: ScalarField,
    pub iteration: usize,
}

impl LevelSetField {
    /// The segment `{phi <= 0}`.
    pub fn extract(&self) -> Labeling {
        self.phi.sublevel_set()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetConfig {
    pub dt: f64,
    pub epsilon: f64,
    pub mu: f64,
    /// Weight of the curvature flow. `run` takes it from the energy instead.
    pub length_weight: f64,
    pub max_iters: usize,
    /// Moving-average window of the convergence test.
    pub window: usize,
    /// Relative change of the moving average that counts as converged.
    pub tolerance: f64,
    pub record_cpu_time: bool,
    /// Keep the mask behind every trace row in the result.
    pub record_masks: bool,
}

impl Default for LevelSetConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            epsilon: DEFAULT_EPSILON,
            mu: DEFAULT_MU,
            length_weight: 0.0,
            max_iters: 10_000,
            window: 50,
            tolerance: 1e-6,
            record_cpu_time: true,
            record_masks: false,
        }
    }
}

impl LevelSetConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.dt.is_finite()
            && self.epsilon > 0.0
            && self.mu >= 0.0
            && self.length_weight >= 0.0
            && self.window >= 1
            && self.tolerance >= 0.0;
        if !ok {
            return Err(SegError::InvalidArgument(format!(
                "invalid level-set configuration {self:?}"
            )));
        }
        Ok(())
    }
}

/// Backtracking parameters of [`run_adaptive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backtracking {
    pub shrink: f64,
    pub min_dt: f64,
}

impl Default for Backtracking {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            min_dt: 1e-6,
        }
    }
}

/// `phi` as the signed distance of a non-degenerate mask.
pub fn init_phi(s: &Labeling) -> Result<LevelSetField> {
    let sd = signed_distance(s);
    if sd.degenerate {
        return Err(SegError::DegenerateMask);
    }
    Ok(LevelSetField {
        phi: sd.field,
        iteration: 0,
    })
}

/// `1/(2 eps) (1 + cos(pi t / eps))` on `[-eps, eps]`, zero elsewhere.
#[inline]
pub fn dirac(t: f64, epsilon: f64) -> f64 {
    if t.abs() > epsilon {
        0.0
    } else {
        (1.0 + (PI * t / epsilon).cos()) / (2.0 * epsilon)
    }
}

/// Central-difference gradient with replicated border.
fn gradient(phi: &ScalarField) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = phi.dims();
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = 0.5 * (phi.get_clamped(x + 1, y) - phi.get_clamped(x - 1, y));
            gy[i] = 0.5 * (phi.get_clamped(x, y + 1) - phi.get_clamped(x, y - 1));
        }
    }
    (gx, gy)
}

/// `kappa = div(grad phi / |grad phi|)` at every pixel.
pub fn curvature_field(phi: &ScalarField) -> ScalarField {
    let (w, h) = phi.dims();
    let (gx, gy) = gradient(phi);
    let mut nx = ScalarField::zeros(w, h);
    let mut ny = ScalarField::zeros(w, h);
    for i in 0..w * h {
        let norm = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt().max(GRADIENT_FLOOR);
        nx.as_mut_slice()[i] = gx[i] / norm;
        ny.as_mut_slice()[i] = gy[i] / norm;
    }
    ScalarField::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        0.5 * (nx.get_clamped(x + 1, y) - nx.get_clamped(x - 1, y))
            + 0.5 * (ny.get_clamped(x, y + 1) - ny.get_clamped(x, y - 1))
    })
}

/// Curvature of the level line through pixel `(x, y)`.
pub fn curvature(phi: &ScalarField, x: usize, y: usize) -> f64 {
    let n = |px: isize, py: isize| -> (f64, f64) {
        let gx = 0.5 * (phi.get_clamped(px + 1, py) - phi.get_clamped(px - 1, py));
        let gy = 0.5 * (phi.get_clamped(px, py + 1) - phi.get_clamped(px, py - 1));
        let norm = (gx * gx + gy * gy).sqrt().max(GRADIENT_FLOOR);
        (gx / norm, gy / norm)
    };
    let (w, h) = phi.dims();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1);
    let (x, y) = (x as isize, y as isize);
    let right = n(clamp(x + 1, w), y).0;
    let left = n(clamp(x - 1, w), y).0;
    let down = n(x, clamp(y + 1, h)).1;
    let up = n(x, clamp(y - 1, h)).1;
    0.5 * (right - left) + 0.5 * (down - up)
}

/// Five-point Laplacian with replicated border.
pub fn laplacian(phi: &ScalarField) -> ScalarField {
    let (w, h) = phi.dims();
    ScalarField::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        phi.get_clamped(xi + 1, yi)
            + phi.get_clamped(xi - 1, yi)
            + phi.get_clamped(xi, yi + 1)
            + phi.get_clamped(xi, yi - 1)
            - 4.0 * phi.get(x, y)
    })
}

/// `sum_p delta_eps(phi(p)) |grad phi(p)|` with unit grid spacing.
pub fn length_continuous(phi: &ScalarField, epsilon: f64) -> f64 {
    let (gx, gy) = gradient(phi);
    phi.as_slice()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let d = dirac(v, epsilon);
            if d == 0.0 {
                0.0
            } else {
                d * (gx[i] * gx[i] + gy[i] * gy[i]).sqrt()
            }
        })
        .sum()
}

/// The velocity `A(phi)` of one explicit update.
pub fn velocity(phi: &ScalarField, g: &ScalarField, cfg: &LevelSetConfig) -> Result<ScalarField> {
    if phi.dims() != g.dims() {
        return Err(SegError::DimensionMismatch {
            expected: phi.dims(),
            found: g.dims(),
        });
    }
    let kappa = curvature_field(phi);
    let lap = laplacian(phi);
    let mut a = ScalarField::zeros(phi.width(), phi.height());
    for (i, out) in a.as_mut_slice().iter_mut().enumerate() {
        let k = kappa.as_slice()[i];
        let regularizer = cfg.mu * (lap.as_slice()[i] - k);
        let band = dirac(phi.as_slice()[i], cfg.epsilon);
        let front = if band == 0.0 {
            0.0
        } else {
            (g.as_slice()[i] + cfg.length_weight * k) * band
        };
        *out = regularizer + front;
    }
    Ok(a)
}

/// One explicit update `phi + dt * A(phi)`.
pub fn step(field: &LevelSetField, g: &ScalarField, cfg: &LevelSetConfig) -> Result<LevelSetField> {
    let a = velocity(&field.phi, g, cfg)?;
    if let Some((i, v)) = a.as_slice().iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(SegError::Unstable {
            iteration: field.iteration + 1,
            detail: format!(
                "velocity {v} at pixel ({}, {}), max |phi| = {:e}",
                i % a.width(),
                i / a.width(),
                field.phi.max_abs()
            ),
        });
    }
    let mut phi = field.phi.clone();
    for (p, v) in phi.as_mut_slice().iter_mut().zip(a.as_slice()) {
        *p += cfg.dt * v;
    }
    if !phi.is_finite() {
        return Err(SegError::Unstable {
            iteration: field.iteration + 1,
            detail: "embedding overflowed".into(),
        });
    }
    Ok(LevelSetField {
        phi,
        iteration: field.iteration + 1,
    })
}

/// Relative change between consecutive moving averages of `window` energies.
struct ConvergenceMonitor {
    window: usize,
    tolerance: f64,
    history: VecDeque<f64>,
}

impl ConvergenceMonitor {
    fn new(window: usize, tolerance: f64) -> Self {
        Self {
            window,
            tolerance,
            history: VecDeque::with_capacity(2 * window + 1),
        }
    }

    fn push(&mut self, energy: f64) -> bool {
        self.history.push_back(energy);
        if self.history.len() > 2 * self.window {
            self.history.pop_front();
        }
        if self.history.len() < 2 * self.window {
            return false;
        }
        let older: f64 = self.history.iter().take(self.window).sum::<f64>() / self.window as f64;
        let newer: f64 = self.history.iter().skip(self.window).sum::<f64>() / self.window as f64;
        (newer - older).abs() < self.tolerance * older.abs().max(f64::MIN_POSITIVE)
    }
}

fn solver_config(energy: &Energy, cfg: &LevelSetConfig) -> LevelSetConfig {
    LevelSetConfig {
        length_weight: energy.length_weight(),
        ..cfg.clone()
    }
}

/// Fixed time-step evolution. Returns the best-energy mask seen along the trace.
pub fn run(img: &Image, initial: &Labeling, energy: &Energy, cfg: &LevelSetConfig) -> Result<RunResult> {
    cfg.validate()?;
    initial.check_dims(img.dims())?;
    energy.check_image(img)?;
    let cfg = solver_config(energy, cfg);
    let mut field = init_phi(initial)?;
    let counter = EvalCounter::default();
    let clock = CpuClock::start(cfg.record_cpu_time);
    let mut trace = Trace::default();
    let mut masks = Vec::new();
    let mut monitor = ConvergenceMonitor::new(cfg.window, cfg.tolerance);
    let mut best: Option<(f64, Labeling)> = None;
    let mut status = RunStatus::Capped;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        let g = energy.data_gradient(img, &field.extract())?;
        field = match step(&field, &g, &cfg) {
            Ok(f) => f,
            Err(SegError::Unstable { iteration, detail }) => {
                debug!("level set unstable at iteration {iteration}: {detail}");
                status = RunStatus::Unstable(detail);
                break;
            }
            Err(e) => return Err(e),
        };
        iterations = field.iteration;
        let s = field.extract();
        let report = energy.report(img, &s, &counter)?;
        trace
            .rows
            .push(TraceRow::from_report(field.iteration, clock.elapsed_ms(), &report, s.area()));
        if best.as_ref().is_none_or(|(e, _)| report.total < *e) {
            best = Some((report.total, s.clone()));
        }
        if cfg.record_masks {
            masks.push(s);
        }
        if monitor.push(report.total) {
            status = RunStatus::Converged;
            break;
        }
    }

    Ok(RunResult {
        labeling: best.map_or_else(|| initial.clone(), |(_, s)| s),
        trace,
        status,
        iterations,
        evaluations: counter.get(),
        masks,
    })
}

/// Evolution with backtracking on the discrete energy: the step is halved
/// until the energy of the extracted mask strictly decreases, and reset
/// after every accepted step. Every attempt is one iteration and one
/// evaluation; each produces a trace row holding the current accepted state.
pub fn run_adaptive(
    img: &Image,
    initial: &Labeling,
    energy: &Energy,
    cfg: &LevelSetConfig,
    backtracking: Backtracking,
) -> Result<RunResult> {
    cfg.validate()?;
    if !(backtracking.shrink > 0.0 && backtracking.shrink < 1.0 && backtracking.min_dt > 0.0) {
        return Err(SegError::InvalidArgument(format!(
            "invalid backtracking parameters {backtracking:?}"
        )));
    }
    initial.check_dims(img.dims())?;
    energy.check_image(img)?;
    let base = solver_config(energy, cfg);
    let mut field = init_phi(initial)?;
    let counter = EvalCounter::default();
    let clock = CpuClock::start(cfg.record_cpu_time);
    let mut trace = Trace::default();
    let mut masks = Vec::new();

    if cfg.max_iters == 0 {
        return Ok(RunResult {
            labeling: initial.clone(),
            trace,
            status: RunStatus::Capped,
            iterations: 0,
            evaluations: 0,
            masks,
        });
    }

    let mut current_mask = field.extract();
    let mut current: EnergyReport = energy.report(img, &current_mask, &counter)?;
    let mut g = energy.data_gradient(img, &current_mask)?;
    let mut dt = base.dt;
    let mut status = RunStatus::Capped;
    let mut attempts = 0;

    while attempts < cfg.max_iters {
        attempts += 1;
        let trial_cfg = LevelSetConfig { dt, ..base.clone() };
        let candidate = match step(&field, &g, &trial_cfg) {
            Ok(f) => f,
            Err(SegError::Unstable { detail, .. }) => {
                status = RunStatus::Unstable(detail);
                break;
            }
            Err(e) => return Err(e),
        };
        let mask = candidate.extract();
        let report = energy.report(img, &mask, &counter)?;
        let accepted = report.total < current.total;
        if accepted {
            field = candidate;
            current_mask = mask;
            current = report;
            g = energy.data_gradient(img, &current_mask)?;
            dt = base.dt;
        } else {
            dt *= backtracking.shrink;
        }
        let mut row = TraceRow::from_report(attempts, clock.elapsed_ms(), &current, current_mask.area());
        row.evals = counter.get();
        trace.rows.push(row);
        if cfg.record_masks {
            masks.push(current_mask.clone());
        }
        if dt < backtracking.min_dt {
            status = RunStatus::Stalled;
            break;
        }
    }

    Ok(RunResult {
        labeling: current_mask,
        trace,
        status,
        iterations: attempts,
        evaluations: counter.get(),
        masks,
    })
}
