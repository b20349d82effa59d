//! Cauchy–Crofton edge weights: the cut cost of a labeling under these
//! weights approximates the Euclidean length of its boundary.

use std::f64::consts::PI;

use crate::error::{Result, SegError};
use crate::grid::Labeling;

/// One undirected neighborhood direction with its edge weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilEdge {
    pub dx: isize,
    pub dy: isize,
    pub weight: f64,
}

/// Edge weights for a 4-, 8- or 16-neighborhood. Each undirected direction
/// appears once; the reversed direction carries the same weight.
#[derive(Debug, Clone, PartialEq)]
pub struct CroftonStencil {
    order: usize,
    edges: Vec<StencilEdge>,
}

impl Default for CroftonStencil {
    fn default() -> Self {
        crofton_weights(16).expect("16 is a supported order")
    }
}

/// `w_k = dθ_k / (2 |e_k|)` for unit grid spacing, where `dθ_k` is the
/// angular cell of direction `k` among the directions in `[0, π)`.
pub fn crofton_weights(order: usize) -> Result<CroftonStencil> {
    let dirs: &[(isize, isize)] = match order {
        4 => &[(1, 0), (0, 1)],
        8 => &[(1, 0), (1, 1), (0, 1), (-1, 1)],
        16 => &[
            (1, 0),
            (2, 1),
            (1, 1),
            (1, 2),
            (0, 1),
            (-1, 2),
            (-1, 1),
            (-2, 1),
        ],
        _ => {
            return Err(SegError::InvalidArgument(format!(
                "unsupported neighborhood order {order}"
            )))
        }
    };
    let angles: Vec<f64> = dirs
        .iter()
        .map(|&(dx, dy)| (dy as f64).atan2(dx as f64))
        .collect();
    let n = dirs.len();
    let edges = dirs
        .iter()
        .enumerate()
        .map(|(k, &(dx, dy))| {
            let prev = if k == 0 { angles[n - 1] - PI } else { angles[k - 1] };
            let next = if k + 1 == n { angles[0] + PI } else { angles[k + 1] };
            let dtheta = 0.5 * (next - prev);
            let len = ((dx * dx + dy * dy) as f64).sqrt();
            StencilEdge {
                dx,
                dy,
                weight: dtheta / (2.0 * len),
            }
        })
        .collect();
    Ok(CroftonStencil { order, edges })
}

impl CroftonStencil {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn edges(&self) -> &[StencilEdge] {
        &self.edges
    }

    /// Visits every undirected in-grid edge `(p, q, weight)` once.
    pub fn for_each_edge(&self, width: usize, height: usize, mut f: impl FnMut(usize, usize, f64)) {
        for y in 0..height as isize {
            for x in 0..width as isize {
                let p = y as usize * width + x as usize;
                for e in &self.edges {
                    let (nx, ny) = (x + e.dx, y + e.dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    f(p, ny as usize * width + nx as usize, e.weight);
                }
            }
        }
    }

    /// Cut cost of `s`: total weight of edges joining differently labeled pixels.
    pub fn length(&self, s: &Labeling) -> f64 {
        let mut total = 0.0;
        let mask = s.as_slice();
        self.for_each_edge(s.width(), s.height(), |p, q, w| {
            if mask[p] != mask[q] {
                total += w;
            }
        });
        total
    }
}
