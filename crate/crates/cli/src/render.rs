//! SVG rendering of text lines: one polyline per pen-down stroke.

use std::fmt::Write;

use inkline_core::traj::{stroke_ranges, AbsPoint, TextLine};
use inkline_core::Error;

use crate::error::Result;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Pen-down strokes of every glyph, in line coordinates.
pub fn line_strokes(line: &TextLine) -> Result<Vec<Vec<(f64, f64)>>> {
    let mut out = Vec::new();
    for g in &line.glyphs {
        let abs: Vec<AbsPoint> = g.to_absolute()?;
        for r in stroke_ranges(abs.iter().map(AbsPoint::is_down)) {
            out.push(abs[r].iter().map(|p| (p.x, p.y)).collect());
        }
    }
    Ok(out)
}

pub fn render_svg(line: &TextLine, color_per_stroke: bool) -> Result<String> {
    let strokes = line_strokes(line)?;
    let pts = strokes.iter().flatten();
    let (x0, x1, y0, y1) = pts.fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |a, &(x, y)| {
        (a.0.min(x), a.1.max(x), a.2.min(y), a.3.max(y))
    });
    if strokes.is_empty() {
        return Err(Error::EmptyTrajectory.into());
    }
    let (w, h) = (x1 - x0, y1 - y0);
    let margin = 0.05 * w.max(h).max(f64::MIN_POSITIVE);
    let (vw, vh) = (w + 2.0 * margin, h + 2.0 * margin);
    let stroke_width = 0.01 * vw.max(vh);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{:.6} {:.6} {:.6} {:.6}" width="{:.0}" height="{:.0}">"#,
        x0 - margin,
        y0 - margin,
        vw,
        vh,
        800.0,
        800.0 * vh / vw
    )
    .expect("string write");
    for (i, stroke) in strokes.iter().enumerate() {
        let color = if color_per_stroke { PALETTE[i % PALETTE.len()] } else { "#000000" };
        let coords: Vec<String> = stroke.iter().map(|(x, y)| format!("{x:.6},{y:.6}")).collect();
        writeln!(
            s,
            r#"  <polyline points="{}" fill="none" stroke="{color}" stroke-width="{stroke_width:.6}" stroke-linecap="round" stroke-linejoin="round"/>"#,
            coords.join(" ")
        )
        .expect("string write");
    }
    s.push_str("</svg>\n");
    Ok(s)
}
