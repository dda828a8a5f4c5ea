//! Seeded synthetic writers and glyph templates.
//!
//! Templates are grid-based stroke patterns in the unit square. A writer
//! bends, shears, scales and jitters them, and lays glyphs out with its own
//! spacing and vertical drift. Every line comes with the exact layout used
//! to place it.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::metrics::dtw_normalized;
use crate::rng::Rng;
use crate::traj::{compose_line, AbsPoint, BoundingBox, Glyph, Layout, TextLine, PEN_DOWN, PEN_UP};

/// Distance between consecutive points along a template stroke.
const POINT_STEP: f64 = 0.1;
const MAX_TEMPLATE_POINTS: usize = 100;
const MIN_TEMPLATE_EXTENT: f64 = 0.3;
/// Minimum normalized DTW between any two templates of a set.
pub const MIN_TEMPLATE_DTW: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticWriter {
    pub seed: u64,
    /// Change of vertical centre per glyph.
    pub slant: f64,
    pub spacing_mu: f64,
    pub spacing_sigma: f64,
    pub size_scale: f64,
    /// Sideways bend of each stroke, relative to its chord length.
    pub curvature: f64,
    /// Standard deviation of per-point noise.
    pub jitter: f64,
    /// Horizontal shear of glyph shapes (italic lean).
    pub shear: f64,
}

impl SyntheticWriter {
    /// Reproduces templates exactly.
    pub fn identity() -> Self {
        Self {
            seed: 0,
            slant: 0.0,
            spacing_mu: 0.2,
            spacing_sigma: 0.0,
            size_scale: 1.0,
            curvature: 0.0,
            jitter: 0.0,
            shear: 0.0,
        }
    }

    /// Writer `index` of a corpus. Parameters are spread so that writers
    /// differ clearly in both layout and glyph shape.
    pub fn sample(index: usize, corpus_seed: u64) -> Self {
        let mut rng = Rng::derive(corpus_seed, 0x5752_4954 + index as u64);
        let sign = if index % 2 == 0 { 1.0 } else { -1.0 };
        let spacing_mu = rng.uniform_range(0.05, 0.6);
        Self {
            seed: rng.next_u64(),
            slant: sign * rng.uniform_range(0.02, 0.06),
            spacing_mu,
            spacing_sigma: 0.02 + 0.3 * spacing_mu,
            size_scale: rng.uniform_range(0.7, 1.3),
            curvature: rng.uniform_range(-0.3, 0.3),
            jitter: rng.uniform_range(0.003, 0.015),
            shear: rng.uniform_range(-0.4, 0.4),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphTemplate {
    pub category: usize,
    /// Polylines in `[0, 1]²`, already densified.
    pub strokes: Vec<Vec<(f64, f64)>>,
}

impl GlyphTemplate {
    fn extent(&self) -> (f64, f64, f64, f64) {
        let pts = self.strokes.iter().flatten();
        pts.fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |(a, b, c, d), &(x, y)| {
            (a.min(x), b.max(x), c.min(y), d.max(y))
        })
    }

    /// Ink width and height.
    pub fn size(&self) -> (f64, f64) {
        let (x0, x1, y0, y1) = self.extent();
        (x1 - x0, y1 - y0)
    }

    pub fn point_count(&self) -> usize {
        self.strokes.iter().map(Vec::len).sum::<usize>() + self.strokes.len().saturating_sub(1)
    }
}

fn densify(vertices: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = alloc::vec![vertices[0]];
    for w in vertices.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let n = libm::ceil(libm::hypot(x1 - x0, y1 - y0) / POINT_STEP).max(1.0) as usize;
        for i in 1..=n {
            let t = i as f64 / n as f64;
            out.push((x0 + t * (x1 - x0), y0 + t * (y1 - y0)));
        }
    }
    out
}

fn random_template(category: usize, rng: &mut Rng) -> GlyphTemplate {
    let grid = |i: usize| i as f64 / 4.0;
    loop {
        let n_strokes = 1 + rng.below(4);
        let mut strokes = Vec::with_capacity(n_strokes);
        for _ in 0..n_strokes {
            let n_vertices = 2 + rng.below(3);
            let mut v = alloc::vec![(rng.below(5), rng.below(5))];
            while v.len() < n_vertices {
                let next = (rng.below(5), rng.below(5));
                if next != *v.last().expect("non-empty") {
                    v.push(next);
                }
            }
            let pts: Vec<(f64, f64)> = v.iter().map(|&(i, j)| (grid(i), grid(j))).collect();
            strokes.push(densify(&pts));
        }
        let t = GlyphTemplate { category, strokes };
        let (w, h) = t.size();
        if w >= MIN_TEMPLATE_EXTENT && h >= MIN_TEMPLATE_EXTENT && t.point_count() <= MAX_TEMPLATE_POINTS {
            return t;
        }
    }
}

fn normalized_template_glyph(t: &GlyphTemplate) -> Glyph {
    render_glyph(t, &SyntheticWriter::identity(), 0).normalize_height().expect("templates have height")
}

/// `k` distinct templates; each new template must be at least
/// twice [`MIN_TEMPLATE_DTW`] away from all earlier ones.
pub fn make_template_set(k: usize, seed: u64) -> Vec<GlyphTemplate> {
    let mut rng = Rng::derive(seed, 0x5445_4d50);
    let mut out: Vec<GlyphTemplate> = Vec::with_capacity(k);
    let mut normalized: Vec<Glyph> = Vec::with_capacity(k);
    while out.len() < k {
        let t = random_template(out.len(), &mut rng);
        let g = normalized_template_glyph(&t);
        let far = normalized
            .iter()
            .all(|o| dtw_normalized(&g, o).map(|d| d >= 2.0 * MIN_TEMPLATE_DTW).unwrap_or(false));
        if far {
            out.push(t);
            normalized.push(g);
        }
    }
    out
}

/// Applies the writer's bend, shear, size and jitter to a template. Strokes
/// are joined by one pen-up point halfway between them.
pub fn render_glyph(template: &GlyphTemplate, writer: &SyntheticWriter, seed: u64) -> Glyph {
    let mut rng = Rng::derive(seed, writer.seed);
    let mut abs: Vec<AbsPoint> = Vec::with_capacity(template.point_count());
    for stroke in &template.strokes {
        let (x0, y0) = stroke[0];
        let (x1, y1) = *stroke.last().expect("non-empty stroke");
        let chord = libm::hypot(x1 - x0, y1 - y0);
        let mut arc = Vec::with_capacity(stroke.len());
        let mut acc = 0.0;
        for (i, p) in stroke.iter().enumerate() {
            if i > 0 {
                acc += libm::hypot(p.0 - stroke[i - 1].0, p.1 - stroke[i - 1].1);
            }
            arc.push(acc);
        }
        let (nx, ny) = if chord > 0.0 { (-(y1 - y0) / chord, (x1 - x0) / chord) } else { (0.0, 0.0) };
        let placed: Vec<(f64, f64)> = stroke
            .iter()
            .zip(&arc)
            .map(|(&(x, y), &a)| {
                let u = if acc > 0.0 { a / acc } else { 0.0 };
                let bend = writer.curvature * chord * libm::sin(core::f64::consts::PI * u);
                let (x, y) = (x + bend * nx, y + bend * ny);
                let x = x + writer.shear * (y - 0.5);
                let (x, y) = (x * writer.size_scale, y * writer.size_scale);
                if writer.jitter > 0.0 {
                    (x + writer.jitter * rng.normal(), y + writer.jitter * rng.normal())
                } else {
                    (x, y)
                }
            })
            .collect();
        if let Some(last) = abs.last().copied() {
            let (sx, sy) = placed[0];
            abs.push(AbsPoint::new((last.x + sx) / 2.0, (last.y + sy) / 2.0, PEN_UP));
        }
        abs.extend(placed.iter().map(|&(x, y)| AbsPoint::new(x, y, PEN_DOWN)));
    }
    Glyph::from_absolute(&abs, template.category).expect("templates are non-empty")
}

/// Glyphs placed left to right: `dx ~ N(spacing_mu, spacing_sigma²)`, the
/// vertical centre drifting by `slant` per glyph from 0, box size the
/// template's ink size times `size_scale`.
pub fn render_line(
    templates: &[GlyphTemplate],
    categories: &[usize],
    writer: &SyntheticWriter,
    name: &str,
    seed: u64,
) -> Result<(TextLine, Layout)> {
    let mut rng = Rng::derive(seed, writer.seed ^ 0x4c49_4e45);
    let mut glyphs = Vec::with_capacity(categories.len());
    let mut boxes = Vec::with_capacity(categories.len());
    for (i, &c) in categories.iter().enumerate() {
        let t = templates
            .get(c)
            .ok_or(crate::Error::UnknownCategory { category: c, count: templates.len() })?;
        let glyph_seed = rng.next_u64();
        glyphs.push(render_glyph(t, writer, glyph_seed).normalize_height()?);
        let (w, h) = t.size();
        let dx = writer.spacing_mu + writer.spacing_sigma * rng.normal();
        boxes.push(BoundingBox::new(h * writer.size_scale, w * writer.size_scale, writer.slant * i as f64, dx));
    }
    let layout = Layout::new(boxes);
    let line = compose_line(&glyphs, &layout, name)?;
    Ok((line, layout))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusConfig {
    pub writers: usize,
    pub lines_per_writer: usize,
    pub categories: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { writers: 8, lines_per_writer: 200, categories: 20, min_len: 10, max_len: 16, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusLine {
    pub writer: usize,
    pub line: TextLine,
    pub layout: Layout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub templates: Vec<GlyphTemplate>,
    pub writers: Vec<SyntheticWriter>,
    pub lines: Vec<CorpusLine>,
}

pub fn writer_name(index: usize) -> String {
    format!("w{index:03}")
}

/// Lines are ordered writer by writer.
pub fn make_corpus(config: &CorpusConfig) -> Result<Corpus> {
    let templates = make_template_set(config.categories, config.seed);
    let writers: Vec<SyntheticWriter> = (0..config.writers).map(|i| SyntheticWriter::sample(i, config.seed)).collect();
    let mut lines = Vec::with_capacity(config.writers * config.lines_per_writer);
    for (wi, w) in writers.iter().enumerate() {
        for li in 0..config.lines_per_writer {
            let mut rng = Rng::derive(config.seed, ((wi as u64) << 32) | li as u64);
            let span = config.max_len.saturating_sub(config.min_len) + 1;
            let len = config.min_len.max(1) + rng.below(span);
            let cats: Vec<usize> = (0..len).map(|_| rng.below(config.categories)).collect();
            let (line, layout) = render_line(&templates, &cats, w, &writer_name(wi), rng.next_u64())?;
            lines.push(CorpusLine { writer: wi, line, layout });
        }
    }
    Ok(Corpus { templates, writers, lines })
}
