//! JSONL datasets: one text line per record.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use inkline_core::traj::{compose_line, extract_layout, BoundingBox, Glyph, Layout, PenPoint, TextLine};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphRecord {
    pub cat: usize,
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub writer: String,
    pub glyphs: Vec<GlyphRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Vec<[f64; 4]>>,
    /// Set by `preprocess`: glyphs are simplified, height-normalized and
    /// stored in their own coordinates, and `layout` places them.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub normalized: bool,
}

impl DatasetRecord {
    pub fn from_line(line: &TextLine, layout: Option<&Layout>) -> Self {
        Self {
            writer: line.writer.clone(),
            glyphs: line
                .glyphs
                .iter()
                .map(|g| GlyphRecord { cat: g.category, points: g.points.iter().map(|p| [p.dh, p.dv, p.s]).collect() })
                .collect(),
            layout: layout.map(|l| l.boxes.iter().map(BoundingBox::to_array).collect()),
            normalized: false,
        }
    }

    pub fn glyphs(&self) -> Vec<Glyph> {
        self.glyphs
            .iter()
            .map(|g| Glyph::new(g.points.iter().map(|p| PenPoint::new(p[0], p[1], p[2])).collect(), g.cat))
            .collect()
    }

    pub fn transcript(&self) -> Vec<usize> {
        self.glyphs.iter().map(|g| g.cat).collect()
    }

    /// The stored glyphs as a line, without composing normalized glyphs.
    pub fn line(&self) -> TextLine {
        TextLine::new(self.glyphs(), self.writer.clone())
    }

    /// The line in line coordinates: normalized records are composed into
    /// their layout first.
    pub fn placed_line(&self) -> Result<TextLine> {
        match (&self.layout, self.normalized) {
            (Some(_), true) => Ok(compose_line(&self.glyphs(), &self.layout_or_extract()?, &self.writer)?),
            _ => Ok(self.line()),
        }
    }

    /// The stored layout, or the one extracted from the line.
    pub fn layout_or_extract(&self) -> Result<Layout> {
        match &self.layout {
            Some(l) => Ok(Layout::new(l.iter().map(|a| BoundingBox::from_array(*a)).collect())),
            None => Ok(extract_layout(&self.line())?),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        for (i, g) in self.glyphs.iter().enumerate() {
            if let Some(p) = g.points.iter().find(|p| p[2] != 1.0 && p[2] != -1.0) {
                return Err(format!("glyph {i}: pen state {} is not ±1", p[2]));
            }
            if g.points.iter().flatten().any(|v| !v.is_finite()) {
                return Err(format!("glyph {i}: non-finite coordinate"));
            }
        }
        if let Some(l) = &self.layout {
            if l.len() != self.glyphs.len() {
                return Err(format!("{} boxes for {} glyphs", l.len(), self.glyphs.len()));
            }
        }
        Ok(())
    }
}

pub fn parse_jsonl(text: &str, path: &Path) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| CliError::Parse { path: path.to_path_buf(), line: i + 1, message };
        let r: DatasetRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        r.validate().map_err(err)?;
        out.push(r);
    }
    Ok(out)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<DatasetRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_jsonl(&text, path)
}

pub fn to_jsonl(records: &[DatasetRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialize"));
        s.push('\n');
    }
    s
}

pub fn write_jsonl(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(to_jsonl(records).as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Reads any JSON-lines file of `T`, reporting the failing line.
pub fn read_json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
