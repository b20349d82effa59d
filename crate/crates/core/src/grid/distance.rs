//! Exact signed Euclidean distance to the half-pixel boundary of a labeling.
//!
//! The boundary is the set of midpoints between 4-adjacent pixels with
//! different labels. Those midpoints become lattice points once coordinates
//! are doubled, so an exact squared distance transform on the doubled lattice
//! (separable lower-envelope-of-parabolas pass per axis) gives exact
//! distances at every pixel center.

use super::{Labeling, ScalarField};

/// Output of [`signed_distance`].
#[derive(Debug, Clone, PartialEq)]
pub struct SignedDistance {
    pub field: ScalarField,
    /// Set when the mask was empty or full. The field then holds the distance
    /// to the grid border, negative for a full mask and positive for an empty one.
    pub degenerate: bool,
}

/// Signed distance to the boundary of `s`: negative inside, positive outside,
/// `±0.5` on pixels adjacent to the interface.
pub fn signed_distance(s: &Labeling) -> SignedDistance {
    let (w, h) = s.dims();
    let area = s.area();
    if area == 0 || area == s.len() {
        let sign = if area == 0 { 1.0 } else { -1.0 };
        let field = ScalarField::from_fn(w, h, |x, y| {
            let dx = (x as f64 + 0.5).min(w as f64 - x as f64 - 0.5);
            let dy = (y as f64 + 0.5).min(h as f64 - y as f64 - 0.5);
            sign * dx.min(dy)
        });
        return SignedDistance {
            field,
            degenerate: true,
        };
    }

    let (dw, dh) = (2 * w - 1, 2 * h - 1);
    let mut grid = vec![f64::INFINITY; dw * dh];
    for y in 0..h {
        for x in 0..w {
            let here = s.get(x, y);
            if x + 1 < w && s.get(x + 1, y) != here {
                grid[2 * y * dw + 2 * x + 1] = 0.0;
            }
            if y + 1 < h && s.get(x, y + 1) != here {
                grid[(2 * y + 1) * dw + 2 * x] = 0.0;
            }
        }
    }

    let n = dw.max(dh);
    let mut scratch = Scratch::new(n);
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];

    // Columns first, then rows; only even rows are needed after the column pass.
    for x in 0..dw {
        for y in 0..dh {
            line[y] = grid[y * dw + x];
        }
        scratch.transform(&line[..dh], &mut out[..dh]);
        for y in 0..dh {
            grid[y * dw + x] = out[y];
        }
    }
    let mut field = ScalarField::zeros(w, h);
    for y in 0..h {
        let row = &grid[2 * y * dw..2 * y * dw + dw];
        scratch.transform(row, &mut out[..dw]);
        for x in 0..w {
            let d = out[2 * x].sqrt() * 0.5;
            field.set(x, y, if s.get(x, y) { -d } else { d });
        }
    }
    SignedDistance {
        field,
        degenerate: false,
    }
}

/// Buffers for the 1-D squared distance transform.
struct Scratch {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            v: vec![0; n],
            z: vec![0.0; n + 1],
        }
    }

    /// `out[q] = min_p (q - p)^2 + f[p]`, exact for finite entries of `f`.
    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        let first = match f.iter().position(|v| v.is_finite()) {
            Some(p) => p,
            None => {
                out.iter_mut().for_each(|o| *o = f64::INFINITY);
                return;
            }
        };
        let mut k = 0usize;
        self.v[0] = first;
        self.z[0] = f64::NEG_INFINITY;
        self.z[1] = f64::INFINITY;
        for q in first + 1..n {
            if !f[q].is_finite() {
                continue;
            }
            // z[0] is -inf, so k never underflows
            let s = loop {
                let p = self.v[k];
                let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                    / (2.0 * (q as f64 - p as f64));
                if s <= self.z[k] {
                    k -= 1;
                } else {
                    break s;
                }
            };
            k += 1;
            self.v[k] = q;
            self.z[k] = s;
            self.z[k + 1] = f64::INFINITY;
        }
        let mut k = 0usize;
        for (q, o) in out.iter_mut().enumerate().take(n) {
            while self.z[k + 1] < q as f64 {
                k += 1;
            }
            let p = self.v[k];
            let d = q as f64 - p as f64;
            *o = d * d + f[p];
        }
    }
}
