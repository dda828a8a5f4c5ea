//! Evaluation: normalized DTW between glyphs, the eight geometric layout
//! features and their gaps, edit-distance recognition rates, and small
//! content/style classifiers.

pub mod classifier;

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::traj::{Glyph, Layout};

/// Absolute `(x, y)` of the pen-down points.
pub fn ink_points(glyph: &Glyph) -> Result<Vec<(f64, f64)>> {
    let pts: Vec<(f64, f64)> = glyph.to_absolute()?.iter().filter(|p| p.is_down()).map(|p| (p.x, p.y)).collect();
    if pts.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    Ok(pts)
}

/// Optimal monotone alignment cost with Euclidean step cost, divided by
/// `a.len() + b.len()`.
pub fn dtw_points(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let m = b.len();
    let mut prev = alloc::vec![f64::INFINITY; m + 1];
    let mut cur = alloc::vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &(ax, ay) in a {
        cur[0] = f64::INFINITY;
        for (j, &(bx, by)) in b.iter().enumerate() {
            let cost = libm::hypot(ax - bx, ay - by);
            cur[j + 1] = cost + prev[j].min(prev[j + 1]).min(cur[j]);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m] / (a.len() + b.len()) as f64)
}

/// Normalized DTW over the pen-down points of two glyphs.
pub fn dtw_normalized(a: &Glyph, b: &Glyph) -> Result<f64> {
    dtw_points(&ink_points(a)?, &ink_points(b)?)
}

/// Table of the eight adjacent-pair layout features, each averaged over pairs:
/// |Δ vertical centre|, |Δ horizontal centre|, |Δ top|, |Δ bottom|,
/// |Δ left|, |Δ right|, height ratio and width ratio (later / earlier).
pub type GeoFeatures = [f64; 8];

pub fn geo_features(layout: &Layout) -> Result<GeoFeatures> {
    if layout.len() < 2 {
        return Err(Error::NeedTwoBoxes);
    }
    let place = layout.placements();
    let mut f = [0.0; 8];
    for i in 1..layout.len() {
        let (a, b) = (&layout.boxes[i - 1], &layout.boxes[i]);
        let ([la, ra, ta, ba], [lb, rb, tb, bb]) = (place[i - 1], place[i]);
        f[0] += (b.cy - a.cy).abs();
        f[1] += ((lb + rb) / 2.0 - (la + ra) / 2.0).abs();
        f[2] += (tb - ta).abs();
        f[3] += (bb - ba).abs();
        f[4] += (lb - la).abs();
        f[5] += (rb - ra).abs();
        f[6] += b.height / a.height;
        f[7] += b.width / a.width;
    }
    let pairs = (layout.len() - 1) as f64;
    Ok(f.map(|v| v / pairs))
}

fn mean_features(layouts: &[Layout]) -> Result<GeoFeatures> {
    if layouts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sum = [0.0; 8];
    for l in layouts {
        for (s, v) in sum.iter_mut().zip(geo_features(l)?) {
            *s += v;
        }
    }
    Ok(sum.map(|v| v / layouts.len() as f64))
}

/// `∇_j = |mean_generated(feature j) − mean_real(feature j)|`.
pub fn feature_gap(generated: &[Layout], real: &[Layout]) -> Result<GeoFeatures> {
    let (g, r) = (mean_features(generated)?, mean_features(real)?);
    Ok(core::array::from_fn(|j| (g[j] - r[j]).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecognitionCounts {
    pub n_total: usize,
    pub sub: usize,
    pub del: usize,
    pub ins: usize,
}

impl RecognitionCounts {
    pub fn new(n_total: usize, sub: usize, del: usize, ins: usize) -> Self {
        Self { n_total, sub, del, ins }
    }
}

/// Unit-cost Levenshtein alignment of a hypothesis against the reference.
/// The backtrace prefers a diagonal move, then a deletion, then an insertion.
pub fn align_and_count<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> RecognitionCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = alloc::vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i * w + j] = diag.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let mut counts = RecognitionCounts { n_total: n, ..Default::default() };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let mismatch = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if d[(i - 1) * w + j - 1] + mismatch == here {
                counts.sub += mismatch;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            counts.del += 1;
            i -= 1;
        } else {
            counts.ins += 1;
            j -= 1;
        }
    }
    counts
}

/// `(AR, CR)` with `CR = (N − D − S) / N` and `AR = (N − D − S − I) / N`.
pub fn ar_cr(counts: &RecognitionCounts) -> Result<(f64, f64)> {
    if counts.n_total == 0 {
        return Err(Error::EmptyReference);
    }
    let n = counts.n_total as f64;
    let correct = counts.n_total as f64 - counts.del as f64 - counts.sub as f64;
    Ok(((correct - counts.ins as f64) / n, correct / n))
}
