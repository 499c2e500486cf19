//! Fluency-vs-attribution plots as SVG plus a CSV of every plotted
//! coordinate. x = attribution, y = sensibleness, both on [0,1].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gridlab::{GridError, RunArchive};
use crate::metrics::ExperimentPoint;
use crate::modelgw::ModelSize;
use crate::retrieval::RecallPoint;

pub const DEFAULT_ISO_LEVELS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
pub const DEFAULT_ISO_SAMPLES: usize = 64;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 60.0;
const AREA: f64 = SIZE - 2.0 * MARGIN;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("invalid plot: {0}")]
    Spec(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error on {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error(transparent)]
    Archive(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PointStyle {
    /// Colored by model size; light when sampled above temperature zero.
    Model {
        size: ModelSize,
        temperature: f64,
    },
    MaxAttr,
    SensibleThenAttr,
    Other,
}

impl PointStyle {
    pub fn series(&self) -> String {
        match self {
            PointStyle::Model { size, temperature } => format!("model-{size}-t{temperature}"),
            PointStyle::MaxAttr => "rerank-max-attr".into(),
            PointStyle::SensibleThenAttr => "rerank-sensible-then-attr".into(),
            PointStyle::Other => "other".into(),
        }
    }

    pub fn color(&self) -> &'static str {
        match self {
            PointStyle::Model { size, temperature } => {
                let light = *temperature > 0.0;
                match (size, light) {
                    (ModelSize::S, false) => "#1f4e9c",
                    (ModelSize::S, true) => "#8fb3e8",
                    (ModelSize::M, false) => "#7b4a1e",
                    (ModelSize::M, true) => "#d2a679",
                    (ModelSize::L, false) => "#b22222",
                    (ModelSize::L, true) => "#f1948a",
                }
            }
            PointStyle::MaxAttr => "#ff8c00",
            PointStyle::SensibleThenAttr => "#006400",
            PointStyle::Other => "#333333",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlayKind {
    /// Simulated top-1 retrieval line (gray).
    Recall,
    /// Simulated top-k retrieval line (red).
    TopK,
}

impl OverlayKind {
    fn series(self) -> &'static str {
        match self {
            OverlayKind::Recall => "overlay-recall",
            OverlayKind::TopK => "overlay-topk",
        }
    }

    fn color(self) -> &'static str {
        match self {
            OverlayKind::Recall => "#808080",
            OverlayKind::TopK => "#e74c3c",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyledPoint {
    pub point: ExperimentPoint,
    pub style: PointStyle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub label: String,
    pub kind: OverlayKind,
    pub points: Vec<RecallPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub points: Vec<StyledPoint>,
    #[serde(default)]
    pub overlays: Vec<Overlay>,
    #[serde(default = "default_levels")]
    pub iso_f1_levels: Vec<f64>,
    #[serde(default = "default_samples")]
    pub iso_samples: usize,
}

fn default_levels() -> Vec<f64> {
    DEFAULT_ISO_LEVELS.to_vec()
}

fn default_samples() -> usize {
    DEFAULT_ISO_SAMPLES
}

fn in_unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl PlotSpec {
    pub fn new(points: Vec<StyledPoint>) -> Self {
        Self { points, overlays: Vec::new(), iso_f1_levels: default_levels(), iso_samples: default_samples() }
    }

    /// One point per complete archive cell, styled by model and temperature.
    pub fn from_archive(archive: &RunArchive) -> Result<Self, PlotError> {
        let points = archive
            .points()?
            .into_iter()
            .map(|(cell, point)| StyledPoint {
                point,
                style: PointStyle::Model { size: cell.model, temperature: cell.temperature },
            })
            .collect();
        Ok(Self::new(points))
    }

    pub fn validate(&self) -> Result<(), PlotError> {
        for l in &self.iso_f1_levels {
            if !(*l > 0.0 && *l < 1.0) {
                return Err(PlotError::Spec(format!("iso-F1 level {l} is not inside (0,1)")));
            }
        }
        if self.iso_samples < 2 {
            return Err(PlotError::Spec("iso-F1 curves need at least 2 samples".into()));
        }
        for p in &self.points {
            if !in_unit(p.point.mean_attribution) || !in_unit(p.point.mean_sensibleness) {
                return Err(PlotError::Spec(format!("point '{}' lies outside the unit square", p.point.label)));
            }
        }
        for o in &self.overlays {
            if o.points.iter().any(|p| !in_unit(p.attribution) || !in_unit(p.sensibleness)) {
                return Err(PlotError::Spec(format!("overlay '{}' leaves the unit square", o.label)));
            }
        }
        Ok(())
    }
}

/// Points `(attribution, sensibleness)` with harmonic mean `level`, for x
/// from `level / (2 - level)` (where y = 1) to 1.
pub fn iso_f1_curve(level: f64, samples: usize) -> Result<Vec<(f64, f64)>, PlotError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(PlotError::Spec(format!("iso-F1 level {level} is not inside (0,1)")));
    }
    if samples < 2 {
        return Err(PlotError::Spec("an iso-F1 curve needs at least 2 samples".into()));
    }
    let x0 = level / (2.0 - level);
    Ok((0..samples)
        .map(|i| {
            let x = if i + 1 == samples { 1.0 } else { x0 + (1.0 - x0) * i as f64 / (samples - 1) as f64 };
            // rounding can push y a hair above 1 next to x0
            (x, (level * x / (2.0 * x - level)).min(1.0))
        })
        .collect())
}

/// A row of the plot CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub label: String,
    pub series: String,
    pub x: f64,
    pub y: f64,
}

/// Every coordinate the SVG draws, in drawing order.
pub fn plot_rows(spec: &PlotSpec) -> Result<Vec<PlotRow>, PlotError> {
    let mut rows = Vec::new();
    for level in &spec.iso_f1_levels {
        for (x, y) in iso_f1_curve(*level, spec.iso_samples)? {
            rows.push(PlotRow { label: format!("f1={level}"), series: "iso-f1".into(), x, y });
        }
    }
    for o in &spec.overlays {
        for p in &o.points {
            rows.push(PlotRow {
                label: o.label.clone(),
                series: o.kind.series().into(),
                x: p.attribution,
                y: p.sensibleness,
            });
        }
    }
    for p in &spec.points {
        rows.push(PlotRow {
            label: p.point.label.clone(),
            series: p.style.series(),
            x: p.point.mean_attribution,
            y: p.point.mean_sensibleness,
        });
    }
    Ok(rows)
}

fn px(x: f64) -> f64 {
    MARGIN + x * AREA
}

fn py(y: f64) -> f64 {
    SIZE - MARGIN - y * AREA
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn path_d(coords: impl Iterator<Item = (f64, f64)>) -> String {
    let mut d = String::new();
    for (i, (x, y)) in coords.enumerate() {
        let _ = write!(d, "{}{:.3},{:.3}", if i == 0 { "M" } else { " L" }, px(x), py(y));
    }
    d
}

pub fn render_svg(spec: &PlotSpec) -> Result<String, PlotError> {
    spec.validate()?;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#);

    // Axes, ticks and titles.
    let _ = writeln!(s, r#"<g id="axes" stroke="black" stroke-width="1" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{AREA}" height="{AREA}" fill="none"/>"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ =
            writeln!(s, r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#, px(v), py(0.0), px(v), py(0.0) + 5.0);
        let _ =
            writeln!(s, r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#, px(0.0) - 5.0, py(v), px(0.0), py(v));
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" stroke="none" text-anchor="middle">{v:.1}</text>"#,
            px(v),
            py(0.0) + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" stroke="none" text-anchor="end">{v:.1}</text>"#,
            px(0.0) - 8.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" stroke="none" text-anchor="middle" font-size="13">attribution</text>"#,
        SIZE / 2.0,
        SIZE - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.3}" stroke="none" text-anchor="middle" font-size="13" transform="rotate(-90 15 {:.3})">sensibleness</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<g id="iso-f1" fill="none" stroke="#2e8b57" stroke-width="1" stroke-dasharray="4 3">"##);
    for level in &spec.iso_f1_levels {
        let curve = iso_f1_curve(*level, spec.iso_samples)?;
        let _ = writeln!(s, r#"<path class="iso-f1" data-level="{level}" d="{}"/>"#, path_d(curve.into_iter()));
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="overlays" fill="none" stroke-width="1.5">"#);
    for o in &spec.overlays {
        let d = path_d(o.points.iter().map(|p| (p.attribution, p.sensibleness)));
        let _ = writeln!(
            s,
            r#"<path class="overlay" data-label="{}" stroke="{}" d="{d}"/>"#,
            escape(&o.label),
            o.kind.color()
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="points" stroke="black" stroke-width="0.5">"#);
    for p in &spec.points {
        let (x, y) = (p.point.mean_attribution, p.point.mean_sensibleness);
        let _ = writeln!(
            s,
            r#"<circle class="marker" cx="{:.3}" cy="{:.3}" r="5" fill="{}" data-x="{x}" data-y="{y}"><title>{}</title></circle>"#,
            px(x),
            py(y),
            p.style.color(),
            escape(&p.point.label)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

pub fn write_csv(rows: &[PlotRow], path: &Path) -> Result<(), PlotError> {
    let err = |e: csv::Error| PlotError::Csv { path: path.to_path_buf(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| PlotError::Io { path: path.to_path_buf(), source: e })
}

pub fn read_csv(path: &Path) -> Result<Vec<PlotRow>, PlotError> {
    let err = |e: csv::Error| PlotError::Csv { path: path.to_path_buf(), message: e.to_string() };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().map(|row| row.map_err(err)).collect()
}

pub fn emit_plot(spec: &PlotSpec, out_svg: &Path, out_csv: &Path) -> Result<(), PlotError> {
    let svg = render_svg(spec)?;
    let rows = plot_rows(spec)?;
    std::fs::write(out_svg, svg).map_err(|e| PlotError::Io { path: out_svg.to_path_buf(), source: e })?;
    write_csv(&rows, out_csv)
}
