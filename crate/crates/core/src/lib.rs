//! Level-set gradient descent and graph-cut fast trust region for binary
//! segmentation energies `E(S) = R(S) + lambda L(S)` whose regional term `R`
//! is a non-linear function of linear functionals of the segment.
//!
//! * [`grid`]: images, masks, scalar fields, histograms, signed distances, I/O.
//! * [`functionals`]: regional models, their first-order derivatives, and the
//!   composite energy.
//! * [`level_set`]: embedding-function evolution with a distance penalty.
//! * [`maxflow`]: exact s–t min-cut.
//! * [`trust_region`]: Taylor model, Crofton length, one cut per iteration.

pub mod error;
pub mod functionals;
pub mod grid;
pub mod level_set;
pub mod maxflow;
pub mod trace;
pub mod trust_region;

pub use error::{Result, SegError};
pub use functionals::{Energy, EnergyReport, EvalCounter, LengthConvention, RegionalModel, Term};
pub use grid::{Histogram, Image, Labeling, ScalarField};
pub use trace::{RunResult, RunStatus, Trace, TraceRow};
