//! Regional functionals `R(S) = F(<f_1,S>, ..., <f_k,S>)`.
//!
//! Every model is split into three pieces so that both optimizers and the
//! tests can reach each one: [`RegionalModel::features`] computes the vector
//! `v` of linear functionals, [`RegionalModel::combine`] evaluates `F(v)`,
//! and [`RegionalModel::partials`] returns `dF/dv`. The per-pixel first-order
//! derivative is `g(x) = sum_i dF/dv_i * f_i(x)`, assembled by
//! [`RegionalModel::gradient_field`].

mod energy;
pub mod targets;

pub use energy::{Energy, EnergyReport, EvalCounter, LengthConvention, Term};

use crate::error::{Result, SegError};
use crate::grid::{bin_index, Histogram, Image, Labeling, ScalarField};

/// Added to `<1,S>`, to each bin count and to each target probability inside
/// logarithms and square roots of the distribution functionals.
pub const EPS_VALUE: f64 = 1e-10;

/// Probability floor of the log-likelihood unary.
pub const EPS_PROB: f64 = 1e-8;

/// Target raw geometric moment `m_pq` over normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentTarget {
    pub p: u32,
    pub q: u32,
    pub value: f64,
}

/// Normalized pixel-center coordinate in `(0, 1)`.
#[inline]
pub fn normalized_coord(i: usize, extent: usize) -> f64 {
    (i as f64 + 0.5) / extent as f64
}

/// The field `x^p y^q` over normalized coordinates.
pub fn moment_field(width: usize, height: usize, p: u32, q: u32) -> ScalarField {
    ScalarField::from_fn(width, height, |x, y| {
        normalized_coord(x, width).powi(p as i32) * normalized_coord(y, height).powi(q as i32)
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Volume { target: f64 },
    Moments { terms: Vec<MomentTarget> },
    L2Bins { target: Histogram },
    Kl { target: Histogram },
    Bhattacharyya { target: Histogram },
}

/// A regional functional together with its target parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionalModel {
    kind: Kind,
}

/// `(<1,S> - V0)^2`.
pub fn make_volume(target: f64) -> Result<RegionalModel> {
    if !(target.is_finite() && target > 0.0) {
        return Err(SegError::InvalidArgument(format!(
            "target volume must be positive, got {target}"
        )));
    }
    Ok(RegionalModel {
        kind: Kind::Volume { target },
    })
}

/// `sum over targets of (<x^p y^q, S> - m_pq)^2` with normalized coordinates.
pub fn make_moments(terms: Vec<MomentTarget>) -> Result<RegionalModel> {
    if terms.is_empty() {
        return Err(SegError::InvalidArgument("no moment targets".into()));
    }
    if terms.iter().any(|t| !t.value.is_finite()) {
        return Err(SegError::InvalidArgument("moment targets must be finite".into()));
    }
    Ok(RegionalModel {
        kind: Kind::Moments { terms },
    })
}

/// Moment targets for every `p + q <= order`, read from `values(p, q)`.
pub fn moment_targets_up_to(order: u32, values: impl Fn(u32, u32) -> f64) -> Vec<MomentTarget> {
    let mut out = Vec::new();
    for total in 0..=order {
        for p in (0..=total).rev() {
            let q = total - p;
            out.push(MomentTarget {
                p,
                q,
                value: values(p, q),
            });
        }
    }
    out
}

/// `sqrt(sum_i (<f_i,S> - q_i)^2)` over raw bin counts of every channel.
pub fn make_l2_bins(target: Histogram) -> Result<RegionalModel> {
    Ok(RegionalModel {
        kind: Kind::L2Bins { target },
    })
}

/// KL divergence of the observed distribution from `target`, summed over channels.
pub fn make_kl(target: Histogram) -> Result<RegionalModel> {
    check_distribution(&target)?;
    Ok(RegionalModel {
        kind: Kind::Kl { target },
    })
}

/// `-log(sum_i sqrt(p_i q_i))`, summed over channels.
pub fn make_bhattacharyya(target: Histogram) -> Result<RegionalModel> {
    check_distribution(&target)?;
    Ok(RegionalModel {
        kind: Kind::Bhattacharyya { target },
    })
}

fn check_distribution(h: &Histogram) -> Result<()> {
    for c in 0..h.channels() {
        let total = h.total(c);
        if (total - 1.0).abs() > 1e-9 {
            return Err(SegError::InvalidArgument(format!(
                "target channel {c} sums to {total}, expected a distribution"
            )));
        }
    }
    Ok(())
}

/// `-log(P(I(x)|fg) + eps) + log(P(I(x)|bg) + eps)`, summed over channels.
pub fn make_loglikelihood(img: &Image, fg: &Histogram, bg: &Histogram) -> Result<ScalarField> {
    if fg.bins() != bg.bins() || fg.channels() != bg.channels() {
        return Err(SegError::InvalidArgument(
            "foreground and background histograms differ in shape".into(),
        ));
    }
    if fg.channels() != img.channels() {
        return Err(SegError::InvalidArgument(format!(
            "histograms have {} channels, image has {}",
            fg.channels(),
            img.channels()
        )));
    }
    if !fg.is_normalized() || !bg.is_normalized() {
        return Err(SegError::InvalidArgument(
            "log-likelihood needs normalized histograms".into(),
        ));
    }
    let bins = fg.bins();
    let mut data = Vec::with_capacity(img.len());
    for i in 0..img.len() {
        let mut v = 0.0;
        for c in 0..img.channels() {
            let b = bin_index(img.sample(i, c), bins);
            v += -(fg.get(c, b) + EPS_PROB).ln() + (bg.get(c, b) + EPS_PROB).ln();
        }
        data.push(v);
    }
    ScalarField::from_vec(img.width(), img.height(), data)
}

impl RegionalModel {
    pub fn name(&self) -> &'static str {
        match self.kind {
            Kind::Volume { .. } => "volume",
            Kind::Moments { .. } => "moments",
            Kind::L2Bins { .. } => "l2",
            Kind::Kl { .. } => "kl",
            Kind::Bhattacharyya { .. } => "bhattacharyya",
        }
    }

    fn target_histogram(&self) -> Option<&Histogram> {
        match &self.kind {
            Kind::L2Bins { target } | Kind::Kl { target } | Kind::Bhattacharyya { target } => {
                Some(target)
            }
            _ => None,
        }
    }

    /// Checks that the model's binning can be applied to `img`.
    pub fn check_image(&self, img: &Image) -> Result<()> {
        if let Some(t) = self.target_histogram() {
            if t.channels() != img.channels() {
                return Err(SegError::InvalidArgument(format!(
                    "target has {} channels, image has {}",
                    t.channels(),
                    img.channels()
                )));
            }
        }
        Ok(())
    }

    /// The vector `v` of linear functionals at `s`.
    ///
    /// Layouts: volume `[A]`; moments one entry per target; L2 the bin counts
    /// channel-major; KL and Bhattacharyya `[A, counts...]`.
    pub fn features(&self, img: &Image, s: &Labeling) -> Result<Vec<f64>> {
        s.check_dims(img.dims())?;
        self.check_image(img)?;
        Ok(match &self.kind {
            Kind::Volume { .. } => vec![s.area() as f64],
            Kind::Moments { terms } => {
                let (w, h) = s.dims();
                let mut v = vec![0.0; terms.len()];
                for y in 0..h {
                    let yn = normalized_coord(y, h);
                    for x in 0..w {
                        if !s.get(x, y) {
                            continue;
                        }
                        let xn = normalized_coord(x, w);
                        for (vi, t) in v.iter_mut().zip(terms) {
                            *vi += xn.powi(t.p as i32) * yn.powi(t.q as i32);
                        }
                    }
                }
                v
            }
            Kind::L2Bins { target } => counts(img, s, target.bins()),
            Kind::Kl { target } | Kind::Bhattacharyya { target } => {
                let mut v = Vec::with_capacity(1 + target.counts().len());
                v.push(s.area() as f64);
                v.extend(counts(img, s, target.bins()));
                v
            }
        })
    }

    /// Number of entries of the feature vector.
    pub fn feature_len(&self) -> usize {
        match &self.kind {
            Kind::Volume { .. } => 1,
            Kind::Moments { terms } => terms.len(),
            Kind::L2Bins { target } => target.counts().len(),
            Kind::Kl { target } | Kind::Bhattacharyya { target } => 1 + target.counts().len(),
        }
    }

    /// `F(v)`.
    pub fn combine(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.feature_len());
        match &self.kind {
            Kind::Volume { target } => (v[0] - target).powi(2),
            Kind::Moments { terms } => terms
                .iter()
                .zip(v)
                .map(|(t, vi)| (vi - t.value).powi(2))
                .sum(),
            Kind::L2Bins { target } => target
                .counts()
                .iter()
                .zip(v)
                .map(|(q, vi)| (vi - q).powi(2))
                .sum::<f64>()
                .sqrt(),
            Kind::Kl { target } => {
                let area = v[0];
                let mut total = 0.0;
                for c in 0..target.channels() {
                    let dist = Guarded::new(target, c, area, &v[1..]);
                    total += dist
                        .iter()
                        .map(|(p, q)| p * (p / q).ln())
                        .sum::<f64>();
                }
                total.max(0.0)
            }
            Kind::Bhattacharyya { target } => {
                let area = v[0];
                let mut total = 0.0;
                for c in 0..target.channels() {
                    let dist = Guarded::new(target, c, area, &v[1..]);
                    let bc: f64 = dist.iter().map(|(p, q)| (p * q).sqrt()).sum();
                    total += -bc.ln();
                }
                total.max(0.0)
            }
        }
    }

    /// `dF/dv` at `v`.
    pub fn partials(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.feature_len());
        match &self.kind {
            Kind::Volume { target } => vec![2.0 * (v[0] - target)],
            Kind::Moments { terms } => terms
                .iter()
                .zip(v)
                .map(|(t, vi)| 2.0 * (vi - t.value))
                .collect(),
            Kind::L2Bins { target } => {
                let r = self.combine(v);
                if r == 0.0 {
                    // minimal-norm subgradient at the kink
                    return vec![0.0; v.len()];
                }
                target
                    .counts()
                    .iter()
                    .zip(v)
                    .map(|(q, vi)| (vi - q) / r)
                    .collect()
            }
            Kind::Kl { target } => {
                let bins = target.bins();
                let mut out = vec![0.0; v.len()];
                for c in 0..target.channels() {
                    let dist = Guarded::new(target, c, v[0], &v[1..]);
                    // d/dA sums p_i (log + 1), and sum p_i is 1 only when the
                    // counts add up to the area
                    let mut weighted = 0.0;
                    for (i, (p, q)) in dist.iter().enumerate() {
                        let log = (p / q).ln();
                        weighted += p * (log + 1.0);
                        out[1 + c * bins + i] = (log + 1.0) / dist.mass;
                    }
                    out[0] -= weighted / dist.mass;
                }
                out
            }
            Kind::Bhattacharyya { target } => {
                let bins = target.bins();
                let mut out = vec![0.0; v.len()];
                for c in 0..target.channels() {
                    let dist = Guarded::new(target, c, v[0], &v[1..]);
                    let bc: f64 = dist.iter().map(|(p, q)| (p * q).sqrt()).sum();
                    for (i, (p, q)) in dist.iter().enumerate() {
                        out[1 + c * bins + i] = -0.5 * (q / p).sqrt() / (bc * dist.mass);
                    }
                    out[0] += 0.5 / dist.mass;
                }
                out
            }
        }
    }

    /// `F(<f_1,S>, ...)`; counts as one energy evaluation.
    pub fn evaluate(&self, img: &Image, s: &Labeling, counter: &EvalCounter) -> Result<f64> {
        counter.increment();
        self.value(img, s)
    }

    /// `F(<f_1,S>, ...)` without touching any counter.
    pub fn value(&self, img: &Image, s: &Labeling) -> Result<f64> {
        Ok(self.combine(&self.features(img, s)?))
    }

    /// Per-pixel first-order functional derivative at `s`.
    pub fn gradient_field(&self, img: &Image, s: &Labeling) -> Result<ScalarField> {
        let v = self.features(img, s)?;
        Ok(self.broadcast(img, &self.partials(&v)))
    }

    /// `sum_i coeffs_i * f_i(x)` for every pixel.
    pub fn broadcast(&self, img: &Image, coeffs: &[f64]) -> ScalarField {
        let (w, h) = img.dims();
        match &self.kind {
            Kind::Volume { .. } => ScalarField::constant(w, h, coeffs[0]),
            Kind::Moments { terms } => ScalarField::from_fn(w, h, |x, y| {
                let xn = normalized_coord(x, w);
                let yn = normalized_coord(y, h);
                terms
                    .iter()
                    .zip(coeffs)
                    .map(|(t, c)| c * xn.powi(t.p as i32) * yn.powi(t.q as i32))
                    .sum()
            }),
            Kind::L2Bins { target } => bin_broadcast(img, target.bins(), 0.0, coeffs),
            Kind::Kl { target } | Kind::Bhattacharyya { target } => {
                bin_broadcast(img, target.bins(), coeffs[0], &coeffs[1..])
            }
        }
    }
}

fn counts(img: &Image, s: &Labeling, bins: usize) -> Vec<f64> {
    let channels = img.channels();
    let mut out = vec![0.0; bins * channels];
    for (i, &m) in s.as_slice().iter().enumerate() {
        if m {
            for c in 0..channels {
                out[c * bins + bin_index(img.sample(i, c), bins)] += 1.0;
            }
        }
    }
    out
}

fn bin_broadcast(img: &Image, bins: usize, constant: f64, per_bin: &[f64]) -> ScalarField {
    let channels = img.channels();
    let data = (0..img.len())
        .map(|i| {
            constant
                + (0..channels)
                    .map(|c| per_bin[c * bins + bin_index(img.sample(i, c), bins)])
                    .sum::<f64>()
        })
        .collect();
    ScalarField::from_vec(img.width(), img.height(), data).expect("dimensions match image")
}

/// Observed and target distributions of one channel with the epsilon guards
/// applied: `p_i = (v_i + eps) / (A + k eps)`, `q_i = (t_i + eps) / (1 + k eps)`.
struct Guarded<'a> {
    counts: &'a [f64],
    target: &'a [f64],
    mass: f64,
    target_mass: f64,
}

impl<'a> Guarded<'a> {
    fn new(target: &'a Histogram, channel: usize, area: f64, all_counts: &'a [f64]) -> Self {
        let k = target.bins();
        Self {
            counts: &all_counts[channel * k..(channel + 1) * k],
            target: target.channel(channel),
            mass: area + k as f64 * EPS_VALUE,
            target_mass: 1.0 + k as f64 * EPS_VALUE,
        }
    }

    fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.counts.iter().zip(self.target).map(move |(v, t)| {
            (
                (v + EPS_VALUE) / self.mass,
                (t + EPS_VALUE) / self.target_mass,
            )
        })
    }
}
