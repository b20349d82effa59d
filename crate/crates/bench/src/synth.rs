//! Synthetic inputs and ellipse-derived targets.

use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segopt::functionals::{moment_field, moment_targets_up_to, MomentTarget};
use segopt::grid::{bin_counts, linear_sum, Histogram, Image, Labeling};

/// Gray level of the flat synthetic field.
pub const SYNTH_LEVEL: f64 = 128.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    /// Amplitude of uniform noise around the flat level.
    pub noise: f64,
    /// Area of the recorded initial square.
    pub init_area: f64,
}

/// A flat grayscale field with optional seeded noise, plus a centered
/// square initial mask of roughly `spec.init_area` pixels.
pub fn synth_circle_image(size: usize, spec: &SynthSpec) -> Result<(Image, Labeling)> {
    ensure!(size >= 32, "synthetic images must be at least 32 pixels wide, got {size}");
    ensure!(
        spec.noise.is_finite() && spec.noise >= 0.0,
        "noise must be nonnegative, got {}",
        spec.noise
    );
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let data = (0..size * size)
        .map(|_| {
            if spec.noise > 0.0 {
                (SYNTH_LEVEL + rng.gen_range(-spec.noise..=spec.noise)).clamp(0.0, 255.0)
            } else {
                SYNTH_LEVEL
            }
        })
        .collect();
    let img = Image::new(size, size, 1, data)?;
    let init = centered_square(size, size, spec.init_area)?;
    Ok((img, init))
}

/// Centered square of side `round(sqrt(area))`, clamped to the grid.
pub fn centered_square(width: usize, height: usize, area: f64) -> Result<Labeling> {
    ensure!(area > 0.0 && area.is_finite(), "square area must be positive, got {area}");
    let side = (area.sqrt().round() as usize).clamp(1, width.min(height));
    let (ox, oy) = ((width - side) / 2, (height - side) / 2);
    Ok(Labeling::from_fn(width, height, |x, y| {
        (ox..ox + side).contains(&x) && (oy..oy + side).contains(&y)
    }))
}

/// Ellipse in pixel coordinates; `theta` rotates the `a` axis away from `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseSpec {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl EllipseSpec {
    pub fn new(cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> Result<Self> {
        let e = Self { cx, cy, a, b, theta };
        ensure!(
            a > 0.0 && b > 0.0 && [cx, cy, a, b, theta].iter().all(|v| v.is_finite()),
            "invalid ellipse {e:?}"
        );
        Ok(e)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.theta.sin_cos();
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v <= 1.0
    }

    /// Pixels whose centers lie inside the ellipse.
    pub fn rasterize(&self, width: usize, height: usize) -> Labeling {
        Labeling::from_fn(width, height, |x, y| self.contains(x as f64, y as f64))
    }
}

/// `cx,cy,a,b,theta`.
impl FromStr for EllipseSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("bad ellipse {s:?}"))?;
        let [cx, cy, a, b, theta] = v[..] else {
            bail!("ellipse needs cx,cy,a,b,theta, got {s:?}");
        };
        EllipseSpec::new(cx, cy, a, b, theta)
    }
}

#[derive(Debug, Clone)]
pub struct EllipseTargets {
    pub mask: Labeling,
    /// Raw moments `m_pq` for every `p + q <= order`, volume included.
    pub moments: Vec<MomentTarget>,
    pub fg: Histogram,
    pub bg: Histogram,
}

/// Moment targets and normalized inside/outside histograms of the
/// rasterized ellipse.
pub fn targets_from_ellipse(e: &EllipseSpec, img: &Image, bins: usize, order: u32) -> Result<EllipseTargets> {
    let (w, h) = img.dims();
    let mask = e.rasterize(w, h);
    ensure!(mask.area() > 0, "ellipse {e:?} covers no pixel center");
    ensure!(mask.area() < mask.len(), "ellipse {e:?} covers the whole image");
    let moments = moment_targets_up_to(order, |p, q| {
        linear_sum(&moment_field(w, h, p, q), &mask).expect("matching dimensions")
    });
    let outside = Labeling::from_fn(w, h, |x, y| !mask.get(x, y));
    let fg = bin_counts(img, &mask, bins)?.normalized()?;
    let bg = bin_counts(img, &outside, bins)?.normalized()?;
    Ok(EllipseTargets { mask, moments, fg, bg })
}
