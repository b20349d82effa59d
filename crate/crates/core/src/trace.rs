//! Per-iteration traces shared by both optimizers and their CSV encoding.

use std::fmt;
use std::io::Write;

use crate::functionals::EnergyReport;
use crate::grid::Labeling;

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    /// Stopped by the iteration cap.
    Capped,
    /// Backtracking shrank the step below its floor.
    Stalled,
    /// The evolution produced non-finite values and was aborted.
    Unstable(String),
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Converged => f.write_str("converged"),
            RunStatus::Capped => f.write_str("capped"),
            RunStatus::Stalled => f.write_str("stalled"),
            RunStatus::Unstable(_) => f.write_str("unstable"),
        }
    }
}

/// Trust-region bookkeeping appended to trace rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustColumns {
    pub accepted: bool,
    /// Trust radius in effect for this iteration's sub-problem.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub cpu_ms: f64,
    pub evals: u64,
    /// Total energy under the solver's own length convention.
    pub energy: f64,
    /// Weighted regional and unary terms, i.e. everything except length.
    pub regional: f64,
    pub length_continuous: f64,
    pub length_crofton: f64,
    pub area: usize,
    pub trust: Option<TrustColumns>,
}

impl TraceRow {
    pub fn from_report(iter: usize, cpu_ms: f64, report: &EnergyReport, area: usize) -> Self {
        Self {
            iter,
            cpu_ms,
            evals: report.evaluations,
            energy: report.total,
            regional: report.data_term(),
            length_continuous: report.length_continuous,
            length_crofton: report.length_crofton,
            area,
            trust: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

pub const TRACE_HEADER: &str = "iter,cpu_ms,evals,E,R,L_cont,L_crofton,area";

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Row with the lowest energy; the earliest wins ties.
    pub fn best(&self) -> Option<&TraceRow> {
        self.rows
            .iter()
            .fold(None, |best: Option<&TraceRow>, r| match best {
                Some(b) if b.energy <= r.energy => Some(b),
                _ => Some(r),
            })
    }

    /// Largest increase of energy between consecutive rows, 0 if none.
    pub fn max_energy_increase(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].energy - w[0].energy)
            .fold(0.0, f64::max)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let trust = self.rows.iter().any(|r| r.trust.is_some());
        if trust {
            writeln!(out, "{TRACE_HEADER},accepted,d")?;
        } else {
            writeln!(out, "{TRACE_HEADER}")?;
        }
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.iter,
                r.cpu_ms,
                r.evals,
                r.energy,
                r.regional,
                r.length_continuous,
                r.length_crofton,
                r.area
            )?;
            match r.trust {
                Some(t) => writeln!(out, ",{},{}", u8::from(t.accepted), t.radius)?,
                None if trust => writeln!(out, ",,")?,
                None => writeln!(out)?,
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Result of one optimizer run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub labeling: Labeling,
    pub trace: Trace,
    pub status: RunStatus,
    pub iterations: usize,
    pub evaluations: u64,
    /// Masks behind each trace row, kept only when requested in the config.
    pub masks: Vec<Labeling>,
}

/// Thread CPU time of the solver loop, in milliseconds.
#[derive(Debug, Clone, Copy)]
pub struct CpuClock {
    start: Option<f64>,
}

impl CpuClock {
    /// A clock that always reads 0 when `enabled` is false, which keeps traces
    /// byte-reproducible.
    pub fn start(enabled: bool) -> Self {
        Self {
            start: enabled.then(thread_cpu_ms),
        }
    }

    pub fn elapsed_ms(&self) -> f64 {
        match self.start {
            Some(s) => thread_cpu_ms() - s,
            None => 0.0,
        }
    }
}

fn thread_cpu_ms() -> f64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: clock_gettime only writes into the provided timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 * 1e3 + ts.tv_nsec as f64 * 1e-6
}
