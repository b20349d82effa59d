//! Side-by-side comparison of two solvers' sweeps on the same problem.

use std::fmt::Write as _;

use anyhow::{bail, Result};

use crate::experiment::{Summary, SummaryRow};

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub problem_hash: String,
    /// Best-energy row of each side, under that side's own length convention.
    pub best_a: SummaryRow,
    pub best_b: SummaryRow,
    /// `b / a` at each side's best parameter.
    pub cpu_ratio: f64,
    pub eval_ratio: f64,
    /// `b - a` under each length convention.
    pub gap_continuous: f64,
    pub gap_crofton: f64,
}

/// `num / den`, with `0 / 0 = 1`.
fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        1.0
    } else {
        num / den
    }
}

fn best(rows: &[SummaryRow]) -> Option<&SummaryRow> {
    rows.iter()
        .fold(None, |acc: Option<&SummaryRow>, r| match acc {
            Some(b) if b.own_energy() <= r.own_energy() => Some(b),
            _ => Some(r),
        })
}

/// Compares the best run of `a` against the best run of `b`. Refuses
/// summaries that come from different problems.
pub fn compare(a: &Summary, b: &Summary) -> Result<Comparison> {
    let Some(first) = a.rows.first().or(b.rows.first()) else {
        bail!("both summaries are empty");
    };
    let hash = &first.problem_hash;
    if let Some(r) = a.rows.iter().chain(&b.rows).find(|r| &r.problem_hash != hash) {
        bail!(
            "summaries describe different problems ({} vs {})",
            hash,
            r.problem_hash
        );
    }
    let (Some(best_a), Some(best_b)) = (best(&a.rows), best(&b.rows)) else {
        bail!("one of the summaries is empty");
    };
    Ok(Comparison {
        problem_hash: hash.clone(),
        cpu_ratio: ratio(best_b.cpu_ms, best_a.cpu_ms),
        eval_ratio: ratio(best_b.evaluations as f64, best_a.evaluations as f64),
        gap_continuous: best_b.energy_continuous - best_a.energy_continuous,
        gap_crofton: best_b.energy_crofton - best_a.energy_crofton,
        best_a: best_a.clone(),
        best_b: best_b.clone(),
    })
}

pub const COMPARISON_HEADER: &str =
    "problem_hash,solver_a,param_a,solver_b,param_b,cpu_ratio,eval_ratio,gap_E_continuous,gap_E_crofton";

impl Comparison {
    pub fn to_csv(&self) -> String {
        format!(
            "{COMPARISON_HEADER}\n{},{},{},{},{},{},{},{},{}\n",
            self.problem_hash,
            self.best_a.solver,
            self.best_a.param,
            self.best_b.solver,
            self.best_b.param,
            self.cpu_ratio,
            self.eval_ratio,
            self.gap_continuous,
            self.gap_crofton
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let (a, b) = (&self.best_a, &self.best_b);
        writeln!(out, "problem {} ({})", &self.problem_hash[..12.min(self.problem_hash.len())], a.problem).unwrap();
        for (tag, r) in [("A", a), ("B", b)] {
            writeln!(
                out,
                "{tag}: {} best at {} ({}): E_cont={:.6} E_crofton={:.6} evals={} cpu_ms={:.1} iterations={}",
                r.solver, r.param, r.status, r.energy_continuous, r.energy_crofton, r.evaluations, r.cpu_ms, r.iterations
            )
            .unwrap();
        }
        writeln!(out, "cpu time B/A: {:.3}", self.cpu_ratio).unwrap();
        writeln!(out, "evaluations B/A: {:.3}", self.eval_ratio).unwrap();
        writeln!(out, "energy gap B-A (continuous): {:.6}", self.gap_continuous).unwrap();
        writeln!(out, "energy gap B-A (crofton): {:.6}", self.gap_crofton).unwrap();
        out
    }
}
