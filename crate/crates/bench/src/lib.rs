//! Experiment harness for the segopt optimizers: synthetic and file inputs,
//! ellipse and ground-truth targets, parameter sweeps with trace and mask
//! outputs, and solver comparisons.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod synth;

pub use compare::{compare, Comparison};
pub use config::{ExperimentConfig, ImageSource, ProblemKind, SolverKind, TargetSpec};
pub use experiment::{build_problem, run_experiment, run_solver, summarize, Problem, Summary, SummaryRow};
pub use synth::{synth_circle_image, targets_from_ellipse, EllipseSpec, EllipseTargets, SynthSpec};
