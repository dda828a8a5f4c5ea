//! Pen trajectories and their geometry.
//!
//! A glyph is a sequence of [`PenPoint`] rows `(dh, dv, s)`: the horizontal
//! and vertical movement from the previous point and the pen state, `+1`
//! while the pen touches the surface and `-1` while it is lifted. Absolute
//! coordinates are the running sum of the movements, so the first row of a
//! glyph is its absolute start position. Inside a [`TextLine`] every glyph is
//! encoded relative to the line origin, so its absolute coordinates are line
//! coordinates.
//!
//! A stroke is a maximal run of pen-down points. Bounding boxes and extents
//! are taken over pen-down points only.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

pub const PEN_DOWN: f64 = 1.0;
pub const PEN_UP: f64 = -1.0;

/// Default maximum glyph length after simplification.
pub const DEFAULT_MAX_POINTS: usize = 120;

/// Default RDP tolerance, in raw capture units.
pub const DEFAULT_RDP_EPSILON: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenPoint {
    pub dh: f64,
    pub dv: f64,
    pub s: f64,
}

impl PenPoint {
    pub const PAD: PenPoint = PenPoint { dh: 0.0, dv: 0.0, s: PEN_UP };

    pub fn new(dh: f64, dv: f64, s: f64) -> Self {
        Self { dh, dv, s }
    }

    pub fn is_down(&self) -> bool {
        self.s > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsPoint {
    pub x: f64,
    pub y: f64,
    pub s: f64,
}

impl AbsPoint {
    pub fn new(x: f64, y: f64, s: f64) -> Self {
        Self { x, y, s }
    }

    pub fn is_down(&self) -> bool {
        self.s > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl Extent {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    /// Extent of the pen-down points, `None` when there is no ink.
    pub fn of_ink(points: &[AbsPoint]) -> Option<Extent> {
        let mut ink = points.iter().filter(|p| p.is_down());
        let first = ink.next()?;
        let mut e = Extent { min_x: first.x, max_x: first.x, min_y: first.y, max_y: first.y };
        for p in ink {
            e.min_x = e.min_x.min(p.x);
            e.max_x = e.max_x.max(p.x);
            e.min_y = e.min_y.min(p.y);
            e.max_y = e.max_y.max(p.y);
        }
        Some(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    pub points: Vec<PenPoint>,
    pub category: usize,
}

impl Glyph {
    pub fn new(points: Vec<PenPoint>, category: usize) -> Self {
        Self { points, category }
    }

    pub fn from_absolute(points: &[AbsPoint], category: usize) -> Result<Self> {
        Ok(Self { points: to_relative(points)?, category })
    }

    pub fn to_absolute(&self) -> Result<Vec<AbsPoint>> {
        to_absolute(&self.points)
    }

    pub fn has_ink(&self) -> bool {
        self.points.iter().any(PenPoint::is_down)
    }

    pub fn ink_extent(&self) -> Result<Extent> {
        Extent::of_ink(&self.to_absolute()?).ok_or(Error::EmptyTrajectory)
    }

    pub fn stroke_count(&self) -> usize {
        stroke_ranges(self.points.iter().map(PenPoint::is_down)).len()
    }

    /// Multiplies every movement by `factor`.
    pub fn scaled(&self, factor: f64) -> Glyph {
        let points = self
            .points
            .iter()
            .map(|p| PenPoint::new(p.dh * factor, p.dv * factor, p.s))
            .collect();
        Glyph { points, category: self.category }
    }

    /// Uniformly rescales so the ink is exactly one unit tall.
    pub fn normalize_height(&self) -> Result<Glyph> {
        let h = self.ink_extent()?.height();
        if !(h > 0.0) {
            return Err(Error::DegenerateExtent);
        }
        Ok(self.scaled(1.0 / h))
    }
}

/// How [`normalize_glyph`] scaled a glyph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    ByHeight,
    /// Zero-height ink (a horizontal dash): scaled to unit width instead.
    /// Such glyphs are kept in the data but skipped by the glyph trainer.
    ByWidth,
}

/// Height normalization that falls back to unit width for flat glyphs.
pub fn normalize_glyph(glyph: &Glyph) -> Result<(Glyph, Normalization)> {
    match glyph.normalize_height() {
        Ok(g) => Ok((g, Normalization::ByHeight)),
        Err(Error::DegenerateExtent) => {
            let w = glyph.ink_extent()?.width();
            if !(w > 0.0) {
                return Err(Error::DegenerateExtent);
            }
            Ok((glyph.scaled(1.0 / w), Normalization::ByWidth))
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextLine {
    pub glyphs: Vec<Glyph>,
    pub writer: String,
}

impl TextLine {
    pub fn new(glyphs: Vec<Glyph>, writer: impl Into<String>) -> Self {
        Self { glyphs, writer: writer.into() }
    }

    pub fn transcript(&self) -> Vec<usize> {
        self.glyphs.iter().map(|g| g.category).collect()
    }

    /// Scales the whole line so its ink is one unit tall, preserving layout
    /// proportions.
    pub fn normalize_height(&self) -> Result<TextLine> {
        let mut ext: Option<Extent> = None;
        for g in &self.glyphs {
            if let Some(e) = Extent::of_ink(&g.to_absolute()?) {
                ext = Some(match ext {
                    None => e,
                    Some(a) => Extent {
                        min_x: a.min_x.min(e.min_x),
                        max_x: a.max_x.max(e.max_x),
                        min_y: a.min_y.min(e.min_y),
                        max_y: a.max_y.max(e.max_y),
                    },
                });
            }
        }
        let h = ext.ok_or(Error::EmptyTrajectory)?.height();
        if !(h > 0.0) {
            return Err(Error::DegenerateExtent);
        }
        let glyphs = self.glyphs.iter().map(|g| g.scaled(1.0 / h)).collect();
        Ok(TextLine { glyphs, writer: self.writer.clone() })
    }
}

/// One character box: size, vertical center in line coordinates, and the
/// gap from the previous box's right edge to this box's left edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub height: f64,
    pub width: f64,
    pub cy: f64,
    pub dx: f64,
}

impl BoundingBox {
    pub fn new(height: f64, width: f64, cy: f64, dx: f64) -> Self {
        Self { height, width, cy, dx }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.height, self.width, self.cy, self.dx]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Layout {
    pub boxes: Vec<BoundingBox>,
}

impl Layout {
    pub fn new(boxes: Vec<BoundingBox>) -> Self {
        Self { boxes }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Absolute `(left, right, top, bottom)` of each box, with the first box
    /// offset from x = 0. `top` is the smaller y.
    pub fn placements(&self) -> Vec<[f64; 4]> {
        let mut right = 0.0;
        self.boxes
            .iter()
            .map(|b| {
                let left = right + b.dx;
                right = left + b.width;
                [left, right, b.cy - b.height / 2.0, b.cy + b.height / 2.0]
            })
            .collect()
    }
}

pub fn to_absolute(points: &[PenPoint]) -> Result<Vec<AbsPoint>> {
    if points.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let (mut x, mut y) = (0.0, 0.0);
    Ok(points
        .iter()
        .map(|p| {
            x += p.dh;
            y += p.dv;
            AbsPoint::new(x, y, p.s)
        })
        .collect())
}

pub fn to_relative(points: &[AbsPoint]) -> Result<Vec<PenPoint>> {
    if points.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let (mut px, mut py) = (0.0, 0.0);
    Ok(points
        .iter()
        .map(|p| {
            let r = PenPoint::new(p.x - px, p.y - py, p.s);
            px = p.x;
            py = p.y;
            r
        })
        .collect())
}

/// Threshold a continuous pen-state value at 0; ties go to pen-up.
pub fn binarize_pen_state(value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::InvalidValue(alloc::format!("pen state {value}")));
    }
    Ok(if value > 0.0 { PEN_DOWN } else { PEN_UP })
}

/// Index ranges of the maximal pen-down runs.
pub fn stroke_ranges(down: impl Iterator<Item = bool>) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    let mut n = 0;
    for (i, d) in down.enumerate() {
        match (d, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(s..i);
                start = None;
            }
            _ => {}
        }
        n = i + 1;
    }
    if let Some(s) = start {
        out.push(s..n);
    }
    out
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 { ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    libm::sqrt(dx * dx + dy * dy)
}

/// Ramer–Douglas–Peucker on one polyline. Returns a keep mask; both
/// endpoints are always kept and a point survives only if it lies farther
/// than `epsilon` from the simplified segment spanning it.
fn rdp_mask(pts: &[(f64, f64)], epsilon: f64) -> Vec<bool> {
    let n = pts.len();
    let mut keep = alloc::vec![false; n];
    if n == 0 {
        return keep;
    }
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = alloc::vec![(0usize, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let mut best = (lo, -1.0);
        for i in lo + 1..hi {
            let d = segment_distance(pts[i], pts[lo], pts[hi]);
            if d > best.1 {
                best = (i, d);
            }
        }
        if best.1 > epsilon {
            keep[best.0] = true;
            stack.push((best.0, hi));
            stack.push((lo, best.0));
        }
    }
    keep
}

/// Simplifies each pen-down stroke independently. Pen-up points are kept.
pub fn rdp_simplify(glyph: &Glyph, epsilon: f64) -> Result<Glyph> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidValue(alloc::format!("rdp epsilon {epsilon}")));
    }
    let abs = glyph.to_absolute()?;
    let mut keep = alloc::vec![true; abs.len()];
    for r in stroke_ranges(abs.iter().map(AbsPoint::is_down)) {
        let pts: Vec<(f64, f64)> = abs[r.clone()].iter().map(|p| (p.x, p.y)).collect();
        for (k, m) in keep[r].iter_mut().zip(rdp_mask(&pts, epsilon)) {
            *k = m;
        }
    }
    let kept: Vec<AbsPoint> = abs.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
    Glyph::from_absolute(&kept, glyph.category)
}

/// Per-glyph ink boxes of a line whose glyphs are in shared line coordinates.
pub fn extract_layout(line: &TextLine) -> Result<Layout> {
    let mut prev_right = 0.0;
    let mut boxes = Vec::with_capacity(line.glyphs.len());
    for g in &line.glyphs {
        let e = g.ink_extent()?;
        boxes.push(BoundingBox::new(
            e.height(),
            e.width(),
            (e.max_y + e.min_y) / 2.0,
            e.min_x - prev_right,
        ));
        prev_right = e.max_x;
    }
    Ok(Layout::new(boxes))
}

/// Scales each glyph's ink anisotropically onto its box and places the boxes
/// left to right. A glyph with zero width (or height) is centered on that
/// axis instead of stretched.
pub fn compose_line(glyphs: &[Glyph], layout: &Layout, writer: &str) -> Result<TextLine> {
    if glyphs.len() != layout.len() {
        return Err(crate::error::shape_err(alloc::format!(
            "{} glyphs for {} boxes",
            glyphs.len(),
            layout.len()
        )));
    }
    let mut out = Vec::with_capacity(glyphs.len());
    for (g, place) in glyphs.iter().zip(layout.placements()) {
        let [left, right, top, bottom] = place;
        let abs = g.to_absolute()?;
        let e = Extent::of_ink(&abs).ok_or(Error::EmptyTrajectory)?;
        let map_axis = |v: f64, lo: f64, span: f64, dst_lo: f64, dst_hi: f64| {
            if span > 0.0 {
                dst_lo + (v - lo) * (dst_hi - dst_lo) / span
            } else {
                (dst_lo + dst_hi) / 2.0 + (v - lo)
            }
        };
        let placed: Vec<AbsPoint> = abs
            .iter()
            .map(|p| {
                AbsPoint::new(
                    map_axis(p.x, e.min_x, e.width(), left, right),
                    map_axis(p.y, e.min_y, e.height(), top, bottom),
                    p.s,
                )
            })
            .collect();
        out.push(Glyph::from_absolute(&placed, g.category)?);
    }
    Ok(TextLine::new(out, writer))
}

/// Fixed-length view for the denoiser: truncates to the first `n_max`
/// points or pads with `(0, 0, -1)`.
pub fn pad_or_truncate(glyph: &Glyph, n_max: usize) -> Glyph {
    let mut points: Vec<PenPoint> = glyph.points.iter().copied().take(n_max).collect();
    points.resize(n_max, PenPoint::PAD);
    Glyph::new(points, glyph.category)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64, f64)]) -> Vec<PenPoint> {
        v.iter().map(|&(a, b, s)| PenPoint::new(a, b, s)).collect()
    }

    fn random_glyph(rng: &mut Rng, n: usize) -> Glyph {
        let mut points = Vec::with_capacity(n);
        for i in 0..n {
            let s = if i == 0 || rng.uniform() > 0.15 { PEN_DOWN } else { PEN_UP };
            points.push(PenPoint::new(rng.normal() * 3.0, rng.normal() * 3.0, s));
        }
        Glyph::new(points, 0)
    }

    #[test]
    fn absolute_examples() {
        let a = to_absolute(&pts(&[(1.0, 2.0, 1.0)])).unwrap();
        assert_eq!(a, vec![AbsPoint::new(1.0, 2.0, 1.0)]);
        let a = to_absolute(&pts(&[(1.0, 0.0, 1.0), (1.0, 0.0, 1.0), (0.0, 3.0, -1.0)])).unwrap();
        assert_eq!(
            a,
            vec![AbsPoint::new(1.0, 0.0, 1.0), AbsPoint::new(2.0, 0.0, 1.0), AbsPoint::new(2.0, 3.0, -1.0)]
        );
        assert_eq!(to_absolute(&[]), Err(Error::EmptyTrajectory));
    }

    #[test]
    fn relative_examples() {
        let r = to_relative(&[AbsPoint::new(2.0, 0.0, 1.0), AbsPoint::new(2.0, 3.0, -1.0)]).unwrap();
        assert_eq!(r, pts(&[(2.0, 0.0, 1.0), (0.0, 3.0, -1.0)]));
        assert_eq!(to_relative(&[]), Err(Error::EmptyTrajectory));
    }

    #[test]
    fn fifty_point_round_trip() {
        let mut rng = Rng::new(5);
        let g = random_glyph(&mut rng, 50);
        let back = to_relative(&g.to_absolute().unwrap()).unwrap();
        for (a, b) in g.points.iter().zip(&back) {
            assert!((a.dh - b.dh).abs() < 1e-9 && (a.dv - b.dv).abs() < 1e-9 && a.s == b.s);
        }
    }

    #[test]
    fn binarize_examples() {
        assert_eq!(binarize_pen_state(0.73), Ok(1.0));
        assert_eq!(binarize_pen_state(-0.002), Ok(-1.0));
        assert_eq!(binarize_pen_state(0.0), Ok(-1.0));
        assert!(matches!(binarize_pen_state(f64::NAN), Err(Error::InvalidValue(_))));
        assert!(matches!(binarize_pen_state(f64::INFINITY), Err(Error::InvalidValue(_))));
    }

    #[test]
    fn rdp_drops_collinear_middle() {
        let g = Glyph::from_absolute(
            &[AbsPoint::new(0.0, 0.0, 1.0), AbsPoint::new(5.0, 5.0, 1.0), AbsPoint::new(10.0, 10.0, 1.0)],
            3,
        )
        .unwrap();
        let s = rdp_simplify(&g, 2.0).unwrap();
        let abs = s.to_absolute().unwrap();
        assert_eq!(abs, vec![AbsPoint::new(0.0, 0.0, 1.0), AbsPoint::new(10.0, 10.0, 1.0)]);
        assert_eq!(s.category, 3);
    }

    #[test]
    fn rdp_zero_epsilon_keeps_general_position() {
        let g = Glyph::from_absolute(
            &[
                AbsPoint::new(0.0, 0.0, 1.0),
                AbsPoint::new(1.0, 3.0, 1.0),
                AbsPoint::new(4.0, 2.0, 1.0),
                AbsPoint::new(6.0, 7.0, 1.0),
            ],
            0,
        )
        .unwrap();
        assert_eq!(rdp_simplify(&g, 0.0).unwrap(), g);
        assert!(matches!(rdp_simplify(&g, -1.0), Err(Error::InvalidValue(_))));
    }

    #[test]
    fn rdp_never_crosses_pen_up() {
        // Two collinear strokes joined by a pen-up point: each stroke keeps its endpoints.
        let abs = [
            AbsPoint::new(0.0, 0.0, 1.0),
            AbsPoint::new(1.0, 0.0, 1.0),
            AbsPoint::new(2.0, 0.0, 1.0),
            AbsPoint::new(3.0, 0.0, -1.0),
            AbsPoint::new(4.0, 0.0, 1.0),
            AbsPoint::new(5.0, 0.0, 1.0),
        ];
        let g = Glyph::from_absolute(&abs, 0).unwrap();
        let s = rdp_simplify(&g, 2.0).unwrap().to_absolute().unwrap();
        assert_eq!(s, vec![abs[0], abs[2], abs[3], abs[4], abs[5]]);
    }

    /// Textbook recursive RDP with point-to-segment distance,
    /// written independently of the iterative implementation.
    fn rdp_reference(points: &[(f64, f64)], eps: f64) -> Vec<(f64, f64)> {
        if points.len() < 3 {
            return points.to_vec();
        }
        let (a, b) = (points[0], points[points.len() - 1]);
        let dist = |p: (f64, f64)| {
            let ab = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
            if ab == 0.0 {
                return ((p.0 - a.0).powi(2) + (p.1 - a.1).powi(2)).sqrt();
            }
            let t = ((p.0 - a.0) * (b.0 - a.0) + (p.1 - a.1) * (b.1 - a.1)) / (ab * ab);
            let q = if t <= 0.0 {
                a
            } else if t >= 1.0 {
                b
            } else {
                (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
            };
            ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
        };
        let mut idx = 0;
        let mut dmax = -1.0;
        for (i, p) in points.iter().enumerate().take(points.len() - 1).skip(1) {
            let d = dist(*p);
            if d > dmax {
                dmax = d;
                idx = i;
            }
        }
        if dmax > eps {
            let mut left = rdp_reference(&points[..=idx], eps);
            let right = rdp_reference(&points[idx..], eps);
            left.pop();
            left.extend(right);
            left
        } else {
            vec![a, b]
        }
    }

    #[test]
    fn rdp_matches_recursive_reference_on_random_strokes() {
        let mut rng = Rng::new(99);
        for _ in 0..50 {
            let mut x = 0.0;
            let mut y = 0.0;
            let raw: Vec<(f64, f64)> = (0..100)
                .map(|_| {
                    x += rng.normal() * 2.0 + 0.5;
                    y += rng.normal() * 2.0;
                    (x, y)
                })
                .collect();
            let abs: Vec<AbsPoint> = raw.iter().map(|&(x, y)| AbsPoint::new(x, y, 1.0)).collect();
            let got = rdp_simplify(&Glyph::from_absolute(&abs, 0).unwrap(), 2.0).unwrap();
            let got: Vec<(f64, f64)> = got.to_absolute().unwrap().iter().map(|p| (p.x, p.y)).collect();
            let want = rdp_reference(&raw, 2.0);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert!((g.0 - w.0).abs() < 1e-9 && (g.1 - w.1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalize_height_examples() {
        let g = Glyph::from_absolute(
            &[AbsPoint::new(0.0, 0.0, 1.0), AbsPoint::new(2.0, 4.0, 1.0), AbsPoint::new(3.0, 1.0, -1.0)],
            1,
        )
        .unwrap();
        let n = g.normalize_height().unwrap();
        for (a, b) in g.points.iter().zip(&n.points) {
            assert_eq!(b.dh, a.dh * 0.25);
            assert_eq!(b.dv, a.dv * 0.25);
        }
        assert!((n.ink_extent().unwrap().height() - 1.0).abs() < 1e-12);
        let again = n.normalize_height().unwrap();
        for (a, b) in n.points.iter().zip(&again.points) {
            assert!((a.dh - b.dh).abs() < 1e-9 && (a.dv - b.dv).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_glyph_is_degenerate() {
        let dash = Glyph::from_absolute(&[AbsPoint::new(0.0, 1.0, 1.0), AbsPoint::new(4.0, 1.0, 1.0)], 0).unwrap();
        assert_eq!(dash.normalize_height(), Err(Error::DegenerateExtent));
        let (n, how) = normalize_glyph(&dash).unwrap();
        assert_eq!(how, Normalization::ByWidth);
        assert!((n.ink_extent().unwrap().width() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layout_of_two_unit_squares() {
        let sq = |x0: f64| {
            Glyph::from_absolute(
                &[
                    AbsPoint::new(x0, 0.0, 1.0),
                    AbsPoint::new(x0 + 1.0, 0.0, 1.0),
                    AbsPoint::new(x0 + 1.0, 1.0, 1.0),
                    AbsPoint::new(x0, 1.0, 1.0),
                ],
                0,
            )
            .unwrap()
        };
        let line = TextLine::new(vec![sq(0.0), sq(1.5)], "w");
        let l = extract_layout(&line).unwrap();
        assert_eq!(l.boxes, vec![BoundingBox::new(1.0, 1.0, 0.5, 0.0), BoundingBox::new(1.0, 1.0, 0.5, 0.5)]);
        let single = TextLine::new(vec![sq(2.0)], "w");
        assert_eq!(extract_layout(&single).unwrap().boxes[0].dx, 2.0);
        let inkless = TextLine::new(vec![Glyph::new(pts(&[(1.0, 1.0, -1.0)]), 0)], "w");
        assert_eq!(extract_layout(&inkless), Err(Error::EmptyTrajectory));
    }

    #[test]
    fn compose_scales_into_box() {
        let unit = Glyph::from_absolute(&[AbsPoint::new(0.0, 0.0, 1.0), AbsPoint::new(1.0, 1.0, 1.0)], 0).unwrap();
        let layout = Layout::new(vec![BoundingBox::new(2.0, 3.0, 1.0, 0.0)]);
        let line = compose_line(&[unit], &layout, "w").unwrap();
        let abs = line.glyphs[0].to_absolute().unwrap();
        assert_eq!(abs, vec![AbsPoint::new(0.0, 0.0, 1.0), AbsPoint::new(3.0, 2.0, 1.0)]);
        let err = compose_line(&[], &layout, "w");
        assert!(matches!(err, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn compose_allows_overlap() {
        let unit = Glyph::from_absolute(&[AbsPoint::new(0.0, 0.0, 1.0), AbsPoint::new(1.0, 1.0, 1.0)], 0).unwrap();
        let layout = Layout::new(vec![BoundingBox::new(1.0, 1.0, 0.5, 0.0), BoundingBox::new(1.0, 1.0, 0.5, -0.4)]);
        let line = compose_line(&[unit.clone(), unit], &layout, "w").unwrap();
        let back = extract_layout(&line).unwrap();
        assert!((back.boxes[1].dx + 0.4).abs() < 1e-12);
    }

    #[test]
    fn pad_and_truncate() {
        let g = Glyph::new(pts(&[(1.0, 1.0, 1.0), (2.0, 2.0, 1.0), (3.0, 3.0, -1.0)]), 0);
        let p = pad_or_truncate(&g, 5);
        assert_eq!(p.points.len(), 5);
        assert_eq!(&p.points[..3], &g.points[..]);
        assert_eq!(p.points[3], PenPoint::PAD);
        assert_eq!(p.points[4], PenPoint::new(0.0, 0.0, -1.0));
        let long = Glyph::new(pts(&[(1.0, 0.0, 1.0); 7]), 0);
        assert_eq!(pad_or_truncate(&long, 5).points, long.points[..5].to_vec());
        assert_eq!(pad_or_truncate(&g, 3), g);
    }

    #[test]
    fn stroke_ranges_split_on_pen_up() {
        let r = stroke_ranges([true, true, false, true, false, false, true].into_iter());
        assert_eq!(r, vec![0..2, 3..4, 6..7]);
    }

    fn glyph_strategy(max: usize) -> impl Strategy<Value = Glyph> {
        prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, prop::bool::weighted(0.85)), 2..max).prop_map(
            |v| {
                let mut points: Vec<PenPoint> =
                    v.into_iter().map(|(a, b, d)| PenPoint::new(a, b, if d { 1.0 } else { -1.0 })).collect();
                points[0].s = 1.0;
                Glyph::new(points, 0)
            },
        )
    }

    proptest! {
        #[test]
        fn relative_absolute_inverse(g in glyph_strategy(60)) {
            let back = to_relative(&g.to_absolute().unwrap()).unwrap();
            for (a, b) in g.points.iter().zip(&back) {
                prop_assert!((a.dh - b.dh).abs() < 1e-9 && (a.dv - b.dv).abs() < 1e-9);
            }
        }

        #[test]
        fn rdp_idempotent_and_shrinking(g in glyph_strategy(80), eps in 0.0f64..20.0) {
            let once = rdp_simplify(&g, eps).unwrap();
            let twice = rdp_simplify(&once, eps).unwrap();
            prop_assert!(once.points.len() <= g.points.len());
            let a = once.to_absolute().unwrap();
            let b = twice.to_absolute().unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9 && p.s == q.s);
            }
        }

        #[test]
        fn normalization_keeps_aspect(g in glyph_strategy(40)) {
            let e = g.ink_extent().unwrap();
            prop_assume!(e.height() > 1e-3 && e.width() > 1e-3);
            let n = g.normalize_height().unwrap().ink_extent().unwrap();
            prop_assert!((n.height() - 1.0).abs() < 1e-6);
            prop_assert!((n.width() / n.height() - e.width() / e.height()).abs() < 1e-6 * (1.0 + e.width() / e.height()));
        }

        #[test]
        fn compose_extract_round_trip(
            gs in prop::collection::vec(glyph_strategy(20), 1..6),
            boxes in prop::collection::vec((0.1f64..5.0, 0.1f64..5.0, -5.0f64..5.0, -1.0f64..3.0), 6),
        ) {
            for g in &gs {
                let e = g.ink_extent().unwrap();
                prop_assume!(e.height() > 1e-3 && e.width() > 1e-3);
            }
            let layout = Layout::new(boxes[..gs.len()].iter().map(|&(h, w, c, d)| BoundingBox::new(h, w, c, d)).collect());
            let line = compose_line(&gs, &layout, "w").unwrap();
            let back = extract_layout(&line).unwrap();
            for (a, b) in layout.boxes.iter().zip(&back.boxes) {
                for (x, y) in a.to_array().iter().zip(b.to_array()) {
                    prop_assert!((x - y).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn binarize_total(v in proptest::num::f64::NORMAL | proptest::num::f64::ZERO) {
            let s = binarize_pen_state(v).unwrap();
            prop_assert!(s == 1.0 || s == -1.0);
        }
    }
}
