//! Dynamic time warping between feature sequences.
//!
//! Local cost is the Euclidean distance between rows; steps are
//! `(1,0)`, `(0,1)` and `(1,1)` with unit weights. An optional Sakoe-Chiba
//! band restricts cells to `|i - j| <= radius`.

use serde::{Deserialize, Serialize};

use crate::features::FeatureSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtwConfig {
    /// Sakoe-Chiba radius; `None` leaves the alignment unconstrained.
    pub band_radius: Option<usize>,
    /// Divide the accumulated cost by the number of cells on the optimal path.
    pub normalize_by_path: bool,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn dtw_distance(a: &FeatureSequence, b: &FeatureSequence, config: &DtwConfig) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("DTW on an empty sequence".into()));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let (n, m) = (a.len(), b.len());
    if let Some(r) = config.band_radius {
        if n.abs_diff(m) > r {
            return Err(Error::BandTooNarrow {
                radius: r,
                len_a: n,
                len_b: m,
            });
        }
    }
    let radius = config.band_radius.unwrap_or(usize::MAX);

    // Two rolling rows of (accumulated cost, path length).
    let inf = (f64::INFINITY, 0u32);
    let mut prev = vec![inf; m];
    let mut cur = vec![inf; m];
    for i in 0..n {
        cur.fill(inf);
        let lo = i.saturating_sub(radius);
        let hi = i.saturating_add(radius).min(m - 1);
        let ai = a.row(i);
        for j in lo..=hi {
            let cost = euclidean(ai, b.row(j));
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = inf;
                for cand in [
                    if i > 0 { prev[j] } else { inf },
                    if j > 0 { cur[j - 1] } else { inf },
                    if i > 0 && j > 0 { prev[j - 1] } else { inf },
                ] {
                    if cand.0 < best.0 {
                        best = cand;
                    }
                }
                best
            };
            cur[j] = (cost + best.0, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (total, steps) = prev[m - 1];
    Ok(if config.normalize_by_path {
        total / f64::from(steps)
    } else {
        total
    })
}
