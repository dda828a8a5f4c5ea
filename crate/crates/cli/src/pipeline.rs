//! The subcommands, as library functions.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use inkline_core::diffusion::{FontModel, FontSample, FontTrainer};
use inkline_core::layout::{LayoutModel, LayoutSample, LayoutTrainer};
use inkline_core::metrics::classifier::{concat_glyphs, train_classifier, trajectory_tensor, ClassifierConfig, Task, STYLE_GLYPHS};
use inkline_core::metrics::{align_and_count, ar_cr, dtw_normalized, feature_gap, RecognitionCounts};
use inkline_core::nn::Tensor;
use inkline_core::rng::mix;
use inkline_core::synth::{make_corpus, CorpusConfig};
use inkline_core::traj::{compose_line, extract_layout, normalize_glyph, rdp_simplify, BoundingBox, Glyph, Layout, TextLine};
use inkline_core::Error;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{font_from_checkpoint, font_to_checkpoint, layout_from_checkpoint, layout_to_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::dataset::{read_json_lines, read_jsonl, write_jsonl, DatasetRecord};
use crate::error::{CliError, Result};
use crate::render::render_svg;

/// Synthetic lines are written in capture units: one template unit is this
/// many units, the scale the default RDP tolerance is meant for.
pub const CAPTURE_SCALE: f64 = 100.0;
/// Attempts at drawing a glyph with ink before giving up.
const GLYPH_ATTEMPTS: u64 = 8;

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn synth_corpus(out: &Path, config: &CorpusConfig) -> Result<usize> {
    let corpus = make_corpus(config)?;
    let records: Vec<DatasetRecord> = corpus
        .lines
        .iter()
        .map(|l| {
            let glyphs = l.line.glyphs.iter().map(|g| g.scaled(CAPTURE_SCALE)).collect();
            let line = TextLine::new(glyphs, l.line.writer.clone());
            let boxes = l.layout.boxes.iter().map(|b| BoundingBox::from_array(b.to_array().map(|v| v * CAPTURE_SCALE)));
            DatasetRecord::from_line(&line, Some(&Layout::new(boxes.collect())))
        })
        .collect();
    write_jsonl(out, &records)?;
    Ok(records.len())
}

/// Per-stroke RDP, layout extraction from the simplified line, then height
/// normalization of every glyph. Already normalized records pass through.
pub fn preprocess_record(r: &DatasetRecord, epsilon: f64) -> Result<DatasetRecord> {
    if r.normalized {
        return Ok(r.clone());
    }
    let glyphs: Vec<Glyph> = r.glyphs().iter().map(|g| rdp_simplify(g, epsilon)).collect::<Result<_, _>>()?;
    let line = TextLine::new(glyphs, r.writer.clone());
    let layout = extract_layout(&line)?;
    let normalized: Vec<Glyph> = line.glyphs.iter().map(|g| normalize_glyph(g).map(|n| n.0)).collect::<Result<_, _>>()?;
    let mut out = DatasetRecord::from_line(&TextLine::new(normalized, r.writer.clone()), Some(&layout));
    out.normalized = true;
    Ok(out)
}

pub fn preprocess(input: &Path, out: &Path, epsilon: f64) -> Result<usize> {
    let records = read_jsonl(input)?;
    let processed: Vec<DatasetRecord> = records.iter().map(|r| preprocess_record(r, epsilon)).collect::<Result<_>>()?;
    write_jsonl(out, &processed)?;
    Ok(processed.len())
}

fn category_count(records: &[DatasetRecord]) -> Result<usize> {
    records.iter().flat_map(|r| r.transcript()).max().map(|m| m + 1).ok_or(CliError::Core(Error::EmptyDataset))
}

/// Layout samples tagged with a writer index in order of first appearance.
pub fn layout_samples(records: &[DatasetRecord]) -> Result<Vec<LayoutSample>> {
    let mut writers: Vec<&str> = Vec::new();
    records
        .iter()
        .map(|r| {
            let w = match writers.iter().position(|&w| w == r.writer) {
                Some(w) => w,
                None => {
                    writers.push(&r.writer);
                    writers.len() - 1
                }
            };
            Ok(LayoutSample::new(r.transcript(), r.layout_or_extract()?)?.with_writer(w))
        })
        .collect()
}

/// `<ckpt>.loss.csv` next to a checkpoint.
pub fn loss_csv_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".loss.csv");
    PathBuf::from(s)
}

/// Trains (or resumes) the layout model; returns the per-step losses.
pub fn train_layout(config: &RunConfig, data: &Path, out: &Path, steps: usize, resume: Option<&Path>) -> Result<Vec<f64>> {
    let records = read_jsonl(data)?;
    let samples = layout_samples(&records)?;
    let scale = config.scale.as_str();
    let adam_cfg = inkline_core::nn::AdamConfig::new(config.layout.lr);
    let mut trainer = match resume {
        Some(p) => {
            let ckpt = Checkpoint::load(p)?;
            let model = layout_from_checkpoint(&ckpt, Some(scale))?;
            if model.config != config.layout_model(model.config.categories) {
                return Err(CliError::ConfigMismatch("layout model shape differs from the checkpoint".into()));
            }
            let adam = ckpt.adam("adam", adam_cfg, &model.store)?;
            LayoutTrainer::resume(model, adam, config.layout_train())
        }
        None => {
            let model = LayoutModel::new(config.layout_model(category_count(&records)?), config.seeds.layout);
            LayoutTrainer::new(model, &samples, config.layout_train())?
        }
    };
    let mut losses = Vec::with_capacity(steps);
    for i in 0..steps {
        let l = trainer.step(&samples)?;
        if i % 100 == 0 {
            info!("layout step {} loss {l:.5}", trainer.optimizer.step);
        }
        losses.push(l);
    }
    layout_to_checkpoint(&trainer.model, Some(&trainer.optimizer), scale).save(out)?;
    write_loss_csv(&loss_csv_path(out), trainer.optimizer.step as usize - steps, &losses, &["loss"], |l| vec![*l])?;
    Ok(losses)
}

fn write_loss_csv<T>(path: &Path, first: usize, rows: &[T], cols: &[&str], f: impl Fn(&T) -> Vec<f64>) -> Result<()> {
    let mut s = format!("step,{}\n", cols.join(","));
    for (i, r) in rows.iter().enumerate() {
        let v: Vec<String> = f(r).iter().map(|x| format!("{x}")).collect();
        s.push_str(&format!("{},{}\n", first + i + 1, v.join(",")));
    }
    write_text(path, &s)
}

/// Writer indices by first appearance.
fn writer_indices(records: &[DatasetRecord]) -> BTreeMap<String, usize> {
    let mut map = BTreeMap::new();
    for r in records {
        let n = map.len();
        map.entry(r.writer.clone()).or_insert(n);
    }
    map
}

/// Height-normalized glyphs of a record, skipping inkless ones.
pub fn normalized_glyphs(r: &DatasetRecord) -> Vec<Glyph> {
    r.glyphs()
        .iter()
        .filter_map(|g| if r.normalized { Some(g.clone()) } else { normalize_glyph(g).ok().map(|n| n.0) })
        .filter(Glyph::has_ink)
        .collect()
}

pub fn font_samples(records: &[DatasetRecord]) -> Vec<FontSample> {
    let writers = writer_indices(records);
    records
        .iter()
        .flat_map(|r| {
            let w = writers[&r.writer];
            normalized_glyphs(r).into_iter().map(move |glyph| FontSample { glyph, writer: w })
        })
        .collect()
}

pub fn train_font(config: &RunConfig, data: &Path, out: &Path, steps: usize, resume: Option<&Path>) -> Result<Vec<(f64, f64)>> {
    let records = read_jsonl(data)?;
    let samples = font_samples(&records);
    let scale = config.scale.as_str();
    let train_cfg = config.font_train();
    let (mut trainer, fallback) = match resume {
        Some(p) => {
            let ckpt = Checkpoint::load(p)?;
            let model = font_from_checkpoint(&ckpt, Some(scale))?;
            let expect = config.diffusion(model.config.categories);
            if model.config != expect {
                return Err(CliError::ConfigMismatch("diffusion model shape differs from the checkpoint".into()));
            }
            let adam = ckpt.adam("adam", FontTrainer::adam_config(&train_cfg), &model.store)?;
            (FontTrainer::resume(model, adam, train_cfg), ckpt.get("meta.font.fallback_reference").cloned())
        }
        None => {
            let model = FontModel::new(config.diffusion(category_count(&records)?), config.seeds.font)?;
            (FontTrainer::new(model, &samples, train_cfg)?, None)
        }
    };
    let fallback = fallback.unwrap_or_else(|| {
        let first: Vec<Glyph> = samples
            .iter()
            .filter(|s| s.writer == 0)
            .take(train_cfg.reference_glyphs.max(1))
            .map(|s| s.glyph.clone())
            .collect();
        trainer.model.reference_tensor(&first)
    });
    let mut losses = Vec::with_capacity(steps);
    for i in 0..steps {
        let l = trainer.step(&samples)?;
        if i % 50 == 0 {
            info!("font step {} reconstruction {:.5} contrastive {:.5}", trainer.optimizer.step, l.reconstruction, l.contrastive);
        }
        losses.push((l.reconstruction, l.contrastive));
    }
    font_to_checkpoint(&trainer.model, Some(&trainer.optimizer), scale, Some(&fallback)).save(out)?;
    let first = trainer.optimizer.step as usize - steps;
    write_loss_csv(&loss_csv_path(out), first, &losses, &["reconstruction", "contrastive"], |l| vec![l.0, l.1])?;
    Ok(losses)
}

pub fn parse_text(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|e| CliError::Core(Error::InvalidValue(format!("category {s:?}: {e}")))))
        .collect()
}

/// Draws glyph `index` of a line, redrawing with a fresh seed if the sample
/// has no ink.
fn draw_glyph(font: &FontModel, category: usize, style: &inkline_core::style::MultiScaleFeatures, seed: u64, index: usize) -> Result<Glyph> {
    for attempt in 0..GLYPH_ATTEMPTS {
        let s = mix(seed ^ mix(((index as u64) << 8) | attempt));
        let g = font.generate_with_features(category, style, s)?;
        if g.has_ink() {
            return Ok(g);
        }
    }
    Err(CliError::Core(Error::EmptyTrajectory))
}

/// Layout in context of the reference line, glyphs in its style, composed
/// into one line. Without a reference the layout is unconditional and the
/// style comes from the fallback reference stored with the font model.
pub fn generate_line(
    text: &[usize],
    reference: Option<&DatasetRecord>,
    layout_model: &LayoutModel,
    font: &FontModel,
    fallback: Option<&Tensor>,
    seed: u64,
) -> Result<(TextLine, Layout)> {
    for &c in text {
        if c >= font.config.categories {
            return Err(Error::UnknownCategory { category: c, count: font.config.categories }.into());
        }
    }
    let (layout, style, writer) = match reference {
        Some(r) => {
            let boxes = r.layout_or_extract()?.boxes;
            let layout = layout_model.generate_in_context(&boxes, &r.transcript(), text)?;
            (layout, font.encode_style(&normalized_glyphs(r))?, r.writer.clone())
        }
        None => {
            warn!("no reference line: unconditional layout and the fallback style reference");
            let fb = fallback.ok_or(Error::EmptyReference)?;
            (layout_model.generate_unconditional(text)?, font.net.style.encode(&font.store, fb)?, "generated".into())
        }
    };
    let glyphs: Vec<Glyph> =
        text.iter().enumerate().map(|(i, &c)| draw_glyph(font, c, &style, seed, i)).collect::<Result<_>>()?;
    Ok((compose_line(&glyphs, &layout, &writer)?, layout))
}

pub fn generate(
    text: &str,
    reference: Option<&Path>,
    layout_ckpt: &Path,
    font_ckpt: &Path,
    out: &Path,
    seed: u64,
) -> Result<DatasetRecord> {
    let text = parse_text(text)?;
    let lc = Checkpoint::load(layout_ckpt)?;
    let fc = Checkpoint::load(font_ckpt)?;
    let layout_model = layout_from_checkpoint(&lc, None)?;
    let font = font_from_checkpoint(&fc, None)?;
    let refs = match reference {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let (line, layout) =
        generate_line(&text, refs.first(), &layout_model, &font, fc.get("meta.font.fallback_reference"), seed)?;
    let record = DatasetRecord::from_line(&line, Some(&layout));
    write_jsonl(out, std::slice::from_ref(&record))?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dtw: f64,
    pub nabla: [f64; 8],
    pub ar: Option<f64>,
    pub cr: Option<f64>,
    pub style_score: Option<f64>,
    pub content_score: Option<f64>,
}

/// One recognizer output per generated record, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub hyp: Vec<usize>,
}

/// Mean over generated glyphs of the normalized DTW to the closest real
/// glyph of the same category, preferring real glyphs of the same writer.
pub fn glyph_dtw(generated: &[DatasetRecord], real: &[DatasetRecord]) -> Result<f64> {
    let mut pool: BTreeMap<(String, usize), Vec<Glyph>> = BTreeMap::new();
    let mut any: BTreeMap<usize, Vec<Glyph>> = BTreeMap::new();
    for r in real {
        for g in normalized_glyphs(r) {
            pool.entry((r.writer.clone(), g.category)).or_default().push(g.clone());
            any.entry(g.category).or_default().push(g);
        }
    }
    let (mut total, mut n) = (0.0, 0usize);
    for r in generated {
        for g in normalized_glyphs(r) {
            let candidates = pool.get(&(r.writer.clone(), g.category)).or_else(|| any.get(&g.category));
            let Some(c) = candidates else { continue };
            let best = c.iter().map(|o| dtw_normalized(&g, o)).collect::<Result<Vec<f64>, _>>()?;
            total += best.into_iter().fold(f64::INFINITY, f64::min);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyDataset.into());
    }
    Ok(total / n as f64)
}

fn layouts(records: &[DatasetRecord]) -> Result<Vec<Layout>> {
    records.iter().filter(|r| r.glyphs.len() >= 2).map(DatasetRecord::layout_or_extract).collect()
}

/// Style samples: consecutive groups of [`STYLE_GLYPHS`] glyphs per writer.
fn style_inputs(records: &[DatasetRecord], writers: &BTreeMap<String, usize>) -> (Vec<Tensor>, Vec<usize>) {
    let mut by_writer: BTreeMap<usize, Vec<Glyph>> = BTreeMap::new();
    for r in records {
        if let Some(&w) = writers.get(&r.writer) {
            by_writer.entry(w).or_default().extend(normalized_glyphs(r));
        }
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (w, glyphs) in by_writer {
        for chunk in glyphs.chunks(STYLE_GLYPHS).filter(|c| c.len() == STYLE_GLYPHS) {
            xs.push(trajectory_tensor(&concat_glyphs(chunk), 8));
            ys.push(w);
        }
    }
    (xs, ys)
}

pub fn evaluate_records(
    generated: &[DatasetRecord],
    real: &[DatasetRecord],
    transcripts: Option<&[Transcript]>,
    classifier: Option<&ClassifierConfig>,
) -> Result<Report> {
    if generated.is_empty() || real.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let nabla = feature_gap(&layouts(generated)?, &layouts(real)?)?;
    let dtw = glyph_dtw(generated, real)?;
    let (ar, cr) = match transcripts {
        Some(t) => {
            let mut total = RecognitionCounts::new(0, 0, 0, 0);
            for (r, h) in generated.iter().zip(t) {
                let c = align_and_count(&r.transcript(), &h.hyp);
                total = RecognitionCounts::new(total.n_total + c.n_total, total.sub + c.sub, total.del + c.del, total.ins + c.ins);
            }
            let (ar, cr) = ar_cr(&total)?;
            (Some(ar), Some(cr))
        }
        None => (None, None),
    };
    let (mut style_score, mut content_score) = (None, None);
    if let Some(cfg) = classifier {
        let glyph_inputs = |rs: &[DatasetRecord]| -> (Vec<Tensor>, Vec<usize>) {
            rs.iter()
                .flat_map(normalized_glyphs)
                .map(|g| (trajectory_tensor(&g.points, 8), g.category))
                .unzip()
        };
        let (xr, yr) = glyph_inputs(real);
        let (xg, yg) = glyph_inputs(generated);
        let content = train_classifier(Task::Content, &xr, &yr, cfg)?;
        content_score = Some(content.accuracy(&xg, &yg)?);
        let writers = writer_indices(real);
        let (sr, lr) = style_inputs(real, &writers);
        let (sg, lg) = style_inputs(generated, &writers);
        if !sg.is_empty() && !sr.is_empty() {
            let style = train_classifier(Task::Style, &sr, &lr, cfg)?;
            style_score = Some(style.accuracy(&sg, &lg)?);
        }
    }
    Ok(Report { dtw, nabla, ar, cr, style_score, content_score })
}

pub fn evaluate(gen: &Path, real: &Path, hyp: Option<&Path>, classifier: Option<&ClassifierConfig>, out: &Path) -> Result<Report> {
    let g = read_jsonl(gen)?;
    let r = read_jsonl(real)?;
    let t: Option<Vec<Transcript>> = hyp.map(read_json_lines).transpose()?;
    let report = evaluate_records(&g, &r, t.as_deref(), classifier)?;
    write_text(out, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    Ok(report)
}

pub fn render(input: &Path, out: &Path, index: usize, color_per_stroke: bool) -> Result<()> {
    let records = read_jsonl(input)?;
    let r = records.get(index).ok_or(Error::EmptyDataset)?;
    write_text(out, &render_svg(&r.placed_line()?, color_per_stroke)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleFeature {
    pub writer: String,
    pub cat: usize,
    pub features: Vec<f32>,
}

pub fn style_features(font: &FontModel, records: &[DatasetRecord]) -> Result<Vec<StyleFeature>> {
    let mut out = Vec::new();
    for r in records {
        for g in normalized_glyphs(r) {
            let f = font.encode_style(std::slice::from_ref(&g))?;
            out.push(StyleFeature { writer: r.writer.clone(), cat: g.category, features: f.pooled_f3() });
        }
    }
    Ok(out)
}

pub fn export_style_features(ckpt: &Path, data: &Path, out: &Path) -> Result<usize> {
    let font = font_from_checkpoint(&Checkpoint::load(ckpt)?, None)?;
    let feats = style_features(&font, &read_jsonl(data)?)?;
    let mut s = String::new();
    for f in &feats {
        s.push_str(&serde_json::to_string(f).expect("features serialize"));
        s.push('\n');
    }
    write_text(out, &s)?;
    Ok(feats.len())
}
