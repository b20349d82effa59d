//! Dense 2-D grid containers shared by both optimizers.
//!
//! Pixels are addressed row-major, `index = y * width + x`. Multi-channel
//! images interleave channels per pixel.

mod distance;
pub mod io;

pub use distance::{signed_distance, SignedDistance};

use crate::error::{Result, SegError};

/// Number of intensity levels in the byte-valued input range.
pub const INTENSITY_LEVELS: f64 = 256.0;

/// A 2-D intensity image with one or three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SegError::InvalidArgument("image must have at least one pixel".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(SegError::InvalidArgument(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(SegError::InvalidArgument(format!(
                "expected {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SegError::InvalidArgument("image intensities must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// A single-channel image filled with `value`.
    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, 1, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + channel]
    }

    /// Intensity of pixel `index` (row-major) in `channel`.
    #[inline]
    pub fn sample(&self, index: usize, channel: usize) -> f64 {
        self.data[index * self.channels + channel]
    }
}

/// Binary segmentation of the grid; `true` marks pixels inside the segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labeling {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl Labeling {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![true; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(SegError::InvalidArgument(format!(
                "mask has {} entries for a {width}x{height} grid",
                mask.len()
            )));
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut mask = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                mask.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            mask,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.mask[y * self.width + x] = value;
    }

    #[inline]
    pub fn at(&self, index: usize) -> bool {
        self.mask[index]
    }

    pub fn flip(&mut self, index: usize) {
        self.mask[index] = !self.mask[index];
    }

    /// Number of set pixels, the discrete `<1, S>`.
    pub fn area(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// True when the mask is empty or covers the whole grid.
    pub fn is_degenerate(&self) -> bool {
        let area = self.area();
        area == 0 || area == self.mask.len()
    }

    /// Number of pixels whose label differs from `other`.
    pub fn hamming(&self, other: &Labeling) -> usize {
        self.mask
            .iter()
            .zip(&other.mask)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn check_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(SegError::DimensionMismatch {
                expected: dims,
                found: self.dims(),
            });
        }
        Ok(())
    }
}

/// One finite real per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(SegError::InvalidArgument(format!(
                "field has {} entries for a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Value at `(x, y)` with out-of-range coordinates clamped to the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += weight * other`.
    pub fn add_scaled(&mut self, other: &ScalarField, weight: f64) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(SegError::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += weight * b;
        }
        Ok(())
    }

    /// The sub-zero set `{x : f(x) <= 0}`.
    pub fn sublevel_set(&self) -> Labeling {
        Labeling {
            width: self.width,
            height: self.height,
            mask: self.data.iter().map(|&v| v <= 0.0).collect(),
        }
    }
}

/// Discrete linear functional `<f, S>`: the sum of `f` over the set pixels.
pub fn linear_sum(f: &ScalarField, s: &Labeling) -> Result<f64> {
    s.check_dims(f.dims())?;
    Ok(f
        .data
        .iter()
        .zip(&s.mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v)
        .sum())
}

/// Bin index for intensity `v` with `bins` uniform bins over `[0, 256)`.
#[inline]
pub fn bin_index(v: f64, bins: usize) -> usize {
    let b = (v * bins as f64 / INTENSITY_LEVELS).floor();
    if b < 0.0 {
        0
    } else {
        (b as usize).min(bins - 1)
    }
}

/// Per-channel histograms with `bins` bins each, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    bins: usize,
    channels: usize,
    counts: Vec<f64>,
    normalized: bool,
}

impl Histogram {
    pub fn new(bins: usize, channels: usize, counts: Vec<f64>, normalized: bool) -> Result<Self> {
        if bins == 0 || channels == 0 {
            return Err(SegError::InvalidArgument(
                "histogram needs at least one bin and channel".into(),
            ));
        }
        if counts.len() != bins * channels {
            return Err(SegError::InvalidArgument(format!(
                "expected {} bin values, got {}",
                bins * channels,
                counts.len()
            )));
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(SegError::InvalidArgument(
                "bin values must be finite and nonnegative".into(),
            ));
        }
        let h = Self {
            bins,
            channels,
            counts,
            normalized,
        };
        if normalized {
            for c in 0..channels {
                let total: f64 = h.channel(c).iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(SegError::InvalidArgument(format!(
                        "channel {c} sums to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(h)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.counts[c * self.bins..(c + 1) * self.bins]
    }

    pub fn get(&self, channel: usize, bin: usize) -> f64 {
        self.counts[channel * self.bins + bin]
    }

    pub fn total(&self, channel: usize) -> f64 {
        self.channel(channel).iter().sum()
    }

    /// Divides every channel by its mass. Fails if some channel is empty.
    pub fn normalized(&self) -> Result<Histogram> {
        let mut counts = self.counts.clone();
        for c in 0..self.channels {
            let total = self.total(c);
            if total <= 0.0 {
                return Err(SegError::InvalidArgument(
                    "cannot normalize an empty histogram".into(),
                ));
            }
            for v in &mut counts[c * self.bins..(c + 1) * self.bins] {
                *v /= total;
            }
        }
        Ok(Histogram {
            bins: self.bins,
            channels: self.channels,
            counts,
            normalized: true,
        })
    }
}

/// Per-channel bin counts of the pixels in `s`.
pub fn bin_counts(img: &Image, s: &Labeling, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(SegError::InvalidArgument("bins must be at least 1".into()));
    }
    s.check_dims(img.dims())?;
    let channels = img.channels();
    let mut counts = vec![0.0; bins * channels];
    for (i, _) in s.as_slice().iter().enumerate().filter(|(_, &m)| m) {
        for c in 0..channels {
            counts[c * bins + bin_index(img.sample(i, c), bins)] += 1.0;
        }
    }
    Histogram::new(bins, channels, counts, false)
}

/// Precomputed bin index of every pixel in every channel, channel-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinMap {
    bins: usize,
    channels: usize,
    pixels: usize,
    index: Vec<u32>,
}

impl BinMap {
    pub fn new(img: &Image, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(SegError::InvalidArgument("bins must be at least 1".into()));
        }
        let pixels = img.len();
        let channels = img.channels();
        let mut index = Vec::with_capacity(pixels * channels);
        for c in 0..channels {
            for i in 0..pixels {
                index.push(bin_index(img.sample(i, c), bins) as u32);
            }
        }
        Ok(Self {
            bins,
            channels,
            pixels,
            index,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn bin(&self, channel: usize, pixel: usize) -> usize {
        self.index[channel * self.pixels + pixel] as usize
    }

    /// Counts for the set pixels of `s`, channel-major, `bins * channels` entries.
    pub fn counts(&self, s: &Labeling) -> Vec<f64> {
        let mut counts = vec![0.0; self.bins * self.channels];
        for c in 0..self.channels {
            let base = c * self.bins;
            let idx = &self.index[c * self.pixels..(c + 1) * self.pixels];
            for (b, &m) in idx.iter().zip(s.as_slice()) {
                if m {
                    counts[base + *b as usize] += 1.0;
                }
            }
        }
        counts
    }
}
