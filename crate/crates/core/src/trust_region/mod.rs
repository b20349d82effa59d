//! Fast trust region with graph cuts.
//!
//! Each iteration linearizes the non-length terms at the current mask `S_j`
//! into a unary field `u`, then minimizes
//!
//! ```text
//! <u, S> + lambda_len * L_crofton(S) + lambda_dist * sum_{x in S xor S_j} |dist_{S_j}(x)|
//! ```
//!
//! exactly with one min-cut, where `lambda_dist = 1 / d_j` stands in for the
//! trust-region constraint `||S - S_j|| < d_j`. The candidate is accepted
//! when the true energy decreases, and `d_j` grows or shrinks by `alpha`
//! depending on the ratio of actual to predicted reduction.

mod crofton;

pub use crofton::{crofton_weights, CroftonStencil, StencilEdge};

use log::{debug, warn};

use crate::error::{Result, SegError};
use crate::functionals::{Energy, EnergyReport, EvalCounter};
use crate::grid::{linear_sum, signed_distance, Image, Labeling, ScalarField};
use crate::maxflow::{CutSide, FlowNetwork};
use crate::trace::{CpuClock, RunResult, RunStatus, Trace, TraceRow, TrustColumns};

/// Multipliers swept by default.
pub const DEFAULT_ALPHAS: [f64; 4] = [1.01, 1.1, 2.0, 10.0];

/// Upper bound on the trust radius.
const MAX_RADIUS: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrustConfig {
    /// Radius multiplier, `> 1`.
    pub alpha: f64,
    /// Initial radius in pixels.
    pub initial_radius: f64,
    /// Acceptance threshold on the reduction ratio.
    pub tau_accept: f64,
    /// Growth threshold on the reduction ratio.
    pub tau_grow: f64,
    pub max_iters: usize,
    pub record_cpu_time: bool,
    pub record_masks: bool,
}

impl Default for TrustConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            initial_radius: 10.0,
            tau_accept: 0.0,
            tau_grow: 0.25,
            max_iters: 1000,
            record_cpu_time: true,
            record_masks: false,
        }
    }
}

impl TrustConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 1.0
            && self.alpha.is_finite()
            && self.initial_radius > 0.0
            && self.initial_radius.is_finite()
            && (0.0..=self.tau_grow).contains(&self.tau_accept)
            && self.tau_grow < 1.0;
        if !ok {
            return Err(SegError::InvalidArgument(format!(
                "invalid trust-region configuration {self:?}"
            )));
        }
        Ok(())
    }
}

/// Mutable state of one trust-region run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustState {
    pub labeling: Labeling,
    pub radius: f64,
    pub iteration: usize,
}

/// Move penalty weight for trust radius `d`.
pub fn distance_weight(radius: f64) -> f64 {
    1.0 / radius
}

/// First-order model of the non-length energy at `s`: weighted regional
/// gradients plus the linear unaries, which are reproduced exactly.
pub fn taylor_unary(energy: &Energy, img: &Image, s: &Labeling) -> Result<ScalarField> {
    energy.data_gradient(img, s)
}

/// Exact minimizer of `<u,S> + length_weight * L(S) + distance_weight *
/// sum_{S xor current} |dist_current|` by one min-cut. Pixels with zero net
/// preference end up outside.
pub fn solve_subproblem(
    u: &ScalarField,
    length_weight: f64,
    stencil: &CroftonStencil,
    current: &Labeling,
    distance_weight: f64,
) -> Result<Labeling> {
    current.check_dims(u.dims())?;
    if !(length_weight >= 0.0 && length_weight.is_finite()) || distance_weight.is_nan() || distance_weight < 0.0 {
        return Err(SegError::InvalidArgument(format!(
            "weights must be nonnegative, got length {length_weight}, distance {distance_weight}"
        )));
    }
    if distance_weight.is_infinite() {
        return Ok(current.clone());
    }
    let (w, h) = u.dims();
    let dist = signed_distance(current).field;
    let mut net = FlowNetwork::with_capacity(w * h, w * h * stencil.edges().len());
    net.add_node_batch(w * h);
    for p in 0..w * h {
        let move_cost = distance_weight * dist.as_slice()[p].abs();
        let (cost_in, cost_out) = if current.at(p) {
            (u.as_slice()[p], move_cost)
        } else {
            (u.as_slice()[p] + move_cost, 0.0)
        };
        // source side means inside: an inside node pays its sink capacity
        let diff = cost_in - cost_out;
        if diff > 0.0 {
            net.add_terminal(p, 0.0, diff)?;
        } else if diff < 0.0 {
            net.add_terminal(p, -diff, 0.0)?;
        }
    }
    if length_weight > 0.0 {
        let mut result = Ok(());
        stencil.for_each_edge(w, h, |p, q, wt| {
            if result.is_ok() {
                result = net.add_edge(p, q, length_weight * wt, length_weight * wt);
            }
        });
        result?;
    }
    net.max_flow();
    let mask = (0..w * h)
        .map(|p| net.cut_side(p).map(|side| side == CutSide::Source))
        .collect::<Result<Vec<bool>>>()?;
    Labeling::from_vec(w, h, mask)
}

/// Value of the approximate energy up to its constant: `<u,S> + lambda L_crofton(S)`.
pub fn approximate_energy(
    u: &ScalarField,
    length_weight: f64,
    stencil: &CroftonStencil,
    s: &Labeling,
) -> Result<f64> {
    Ok(linear_sum(u, s)? + length_weight * stencil.length(s))
}

/// Runs the trust-region loop from `initial` until the radius drops below one
/// pixel on a rejected step, or `max_iters`.
pub fn run(img: &Image, initial: &Labeling, energy: &Energy, cfg: &TrustConfig) -> Result<RunResult> {
    cfg.validate()?;
    initial.check_dims(img.dims())?;
    energy.check_image(img)?;
    if initial.is_degenerate() {
        return Err(SegError::DegenerateMask);
    }
    let counter = EvalCounter::default();
    let clock = CpuClock::start(cfg.record_cpu_time);
    let length_weight = energy.length_weight();
    let stencil = energy.stencil();
    let mut trace = Trace::default();
    let mut masks = Vec::new();

    let mut state = TrustState {
        labeling: initial.clone(),
        radius: cfg.initial_radius,
        iteration: 0,
    };
    if cfg.max_iters == 0 {
        return Ok(RunResult {
            labeling: state.labeling,
            trace,
            status: RunStatus::Capped,
            iterations: 0,
            evaluations: 0,
            masks,
        });
    }
    let mut current: EnergyReport = energy.report(img, &state.labeling, &counter)?;
    let mut status = RunStatus::Capped;

    while state.iteration < cfg.max_iters {
        state.iteration += 1;
        let radius = state.radius;
        let u = taylor_unary(energy, img, &state.labeling)?;
        let candidate = solve_subproblem(
            &u,
            length_weight,
            stencil,
            &state.labeling,
            distance_weight(radius),
        )?;

        let mut accepted = false;
        let mut grow = false;
        if candidate != state.labeling {
            let report = energy.report(img, &candidate, &counter)?;
            let actual = current.total - report.total;
            let predicted = approximate_energy(&u, length_weight, stencil, &state.labeling)?
                - approximate_energy(&u, length_weight, stencil, &candidate)?;
            if predicted <= 0.0 {
                if actual > 0.0 {
                    warn!(
                        "non-positive predicted reduction {predicted} with actual reduction {actual}; accepting and shrinking"
                    );
                    accepted = true;
                }
            } else {
                let ratio = actual / predicted;
                accepted = actual > 0.0 && ratio > cfg.tau_accept;
                grow = accepted && ratio > cfg.tau_grow;
                debug!(
                    "iter {} d={radius} actual={actual} predicted={predicted} ratio={ratio}",
                    state.iteration
                );
            }
            if accepted {
                state.labeling = candidate;
                current = report;
            }
        }
        state.radius = if grow {
            (radius * cfg.alpha).min(MAX_RADIUS)
        } else {
            radius / cfg.alpha
        };

        let mut row = TraceRow::from_report(
            state.iteration,
            clock.elapsed_ms(),
            &current,
            state.labeling.area(),
        );
        row.evals = counter.get();
        row.trust = Some(TrustColumns { accepted, radius });
        trace.rows.push(row);
        if cfg.record_masks {
            masks.push(state.labeling.clone());
        }

        if !accepted && state.radius < 1.0 {
            status = RunStatus::Converged;
            break;
        }
    }

    Ok(RunResult {
        labeling: state.labeling,
        trace,
        status,
        iterations: state.iteration,
        evaluations: counter.get(),
        masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{make_volume, LengthConvention, Term};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn infinite_move_penalty_keeps_current() {
        let current = Labeling::from_fn(6, 5, |x, y| x + y < 5);
        let u = ScalarField::from_fn(6, 5, |x, y| (x as f64 - 2.5) * (y as f64 - 1.0));
        let stencil = crofton_weights(8).unwrap();
        assert_eq!(
            solve_subproblem(&u, 0.3, &stencil, &current, f64::INFINITY).unwrap(),
            current
        );
        assert_eq!(solve_subproblem(&u, 0.3, &stencil, &current, 1e9).unwrap(), current);
    }

    #[test]
    fn separable_problem_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = ScalarField::from_vec(9, 7, (0..63).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let current = Labeling::from_fn(9, 7, |x, _| x < 4);
        let s = solve_subproblem(&u, 0.0, &CroftonStencil::default(), &current, 0.0).unwrap();
        let expected = Labeling::from_fn(9, 7, |x, y| u.get(x, y) < 0.0);
        assert_eq!(s, expected);
        // exact zeros go outside
        let zero = ScalarField::zeros(4, 4);
        let s = solve_subproblem(&zero, 0.0, &CroftonStencil::default(), &current_4(), 0.0).unwrap();
        assert_eq!(s.area(), 0);
    }

    fn current_4() -> Labeling {
        Labeling::from_fn(4, 4, |x, y| x == y)
    }

    #[test]
    fn linear_unary_converges_to_threshold_quickly() {
        let img = Image::constant(20, 20, 0.0).unwrap();
        let field = ScalarField::from_fn(20, 20, |x, y| if (x as i32 - 9).abs() + (y as i32 - 8).abs() < 6 { -1.0 } else { 0.5 });
        let energy = Energy::new(
            vec![Term::Unary {
                field: field.clone(),
                weight: 1.0,
            }],
            LengthConvention::Crofton,
        )
        .unwrap();
        let init = Labeling::from_fn(20, 20, |x, y| x < 3 && y < 3);
        let cfg = TrustConfig {
            initial_radius: 1e6,
            ..Default::default()
        };
        let r = run(&img, &init, &energy, &cfg).unwrap();
        let optimum = Labeling::from_fn(20, 20, |x, y| field.get(x, y) < 0.0);
        assert_eq!(r.labeling, optimum);
        let accepted = r.trace.rows.iter().filter(|row| row.trust.unwrap().accepted).count();
        assert!(accepted <= 2);
    }

    #[test]
    fn accepted_energies_strictly_decrease() {
        let img = Image::constant(50, 50, 0.0).unwrap();
        let energy = Energy::new(
            vec![
                Term::Regional {
                    model: make_volume(500.0).unwrap(),
                    weight: 1e-4,
                },
                Term::Length { weight: 1.0 },
            ],
            LengthConvention::Crofton,
        )
        .unwrap();
        let init = Labeling::from_fn(50, 50, |x, y| (20..32).contains(&x) && (15..35).contains(&y));
        let r = run(&img, &init, &energy, &TrustConfig::default()).unwrap();
        let mut last = f64::INFINITY;
        for row in &r.trace.rows {
            if row.trust.unwrap().accepted {
                assert!(row.energy < last);
                last = row.energy;
            }
        }
        assert_eq!(r.status, RunStatus::Converged);
    }

    #[test]
    fn degenerate_initial_is_rejected() {
        let img = Image::constant(5, 5, 0.0).unwrap();
        let energy = Energy::new(vec![Term::Length { weight: 1.0 }], LengthConvention::Crofton).unwrap();
        assert!(matches!(
            run(&img, &Labeling::empty(5, 5), &energy, &TrustConfig::default()),
            Err(SegError::DegenerateMask)
        ));
    }

    #[test]
    fn config_validation() {
        assert!(TrustConfig { alpha: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrustConfig { tau_grow: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrustConfig::default().validate().is_ok());
    }
}
