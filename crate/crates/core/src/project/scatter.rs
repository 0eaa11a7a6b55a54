//! Static SVG and CSV scatter plots of 2D projections.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{Label, Matrix, ProjectionResult};

pub const CANVAS: f64 = 800.0;
const MARGIN: f64 = 60.0;
const BENIGN_COLOR: &str = "#1f77b4";
const MALICIOUS_COLOR: &str = "#d62728";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScatterFormat {
    Svg,
    Csv,
}

impl FromStr for ScatterFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svg" => Ok(ScatterFormat::Svg),
            "csv" => Ok(ScatterFormat::Csv),
            other => Err(Error::InvalidInput(format!("unknown scatter format {other:?}"))),
        }
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Axis range of `values` widened by 5% on each side.
fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    (lo - 0.05 * span, hi + 0.05 * span)
}

pub fn render_svg(result: &ProjectionResult, labels: &[Label]) -> Result<String> {
    check_lengths(&result.points, labels)?;
    let pts = &result.points;
    let (x0, x1) = padded_range(pts.iter_rows().map(|r| r[0]));
    let (y0, y1) = padded_range(pts.iter_rows().map(|r| r[1]));
    let plot = CANVAS - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * plot;
    let sy = |y: f64| CANVAS - MARGIN - (y - y0) / (y1 - y0) * plot;
    let title = result
        .params
        .get("title")
        .cloned()
        .unwrap_or_else(|| result.method.as_str().to_uppercase());

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="800" height="800" viewBox="0 0 800 800">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="800" height="800" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="400" y="32" text-anchor="middle" font-family="sans-serif" font-size="20">{}</text>"#,
        escape(&title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot}" height="{plot}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for (value, x, y, anchor) in [
        (x0, MARGIN, CANVAS - MARGIN + 20.0, "start"),
        (x1, CANVAS - MARGIN, CANVAS - MARGIN + 20.0, "end"),
        (y0, MARGIN - 6.0, CANVAS - MARGIN, "end"),
        (y1, MARGIN - 6.0, MARGIN + 12.0, "end"),
    ] {
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}" font-family="sans-serif" font-size="12">{value:.3}</text>"#
        );
    }
    let _ = writeln!(s, r#"<g stroke="none" fill-opacity="0.7">"#);
    for (row, label) in pts.iter_rows().zip(labels) {
        let color = if label.is_positive() { MALICIOUS_COLOR } else { BENIGN_COLOR };
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(row[0]), sy(row[1]));
    }
    let _ = writeln!(s, "</g>");
    for (k, (name, color)) in [("benign", BENIGN_COLOR), ("malicious", MALICIOUS_COLOR)].into_iter().enumerate() {
        let y = MARGIN + 12.0 + 20.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{y:.1}" width="12" height="12" fill="{color}"/>"#,
            CANVAS - MARGIN - 110.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13">{name}</text>"#,
            CANVAS - MARGIN - 92.0,
            y + 11.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_csv(points: &Matrix, labels: &[Label]) -> Result<String> {
    check_lengths(points, labels)?;
    let mut s = String::from("x,y,label\n");
    for (row, label) in points.iter_rows().zip(labels) {
        let _ = writeln!(s, "{},{},{}", row[0], row[1], label.as_u8());
    }
    Ok(s)
}

fn check_lengths(points: &Matrix, labels: &[Label]) -> Result<()> {
    if points.rows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: points.rows(),
            right: labels.len(),
        });
    }
    if points.cols() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: points.cols(),
        });
    }
    Ok(())
}

pub fn emit_scatter(result: &ProjectionResult, labels: &[Label], path: impl AsRef<Path>, format: ScatterFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ScatterFormat::Svg => render_svg(result, labels)?,
        ScatterFormat::Csv => render_csv(&result.points, labels)?,
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read back a scatter CSV written by [`emit_scatter`].
pub fn read_scatter_csv(path: impl AsRef<Path>) -> Result<(Matrix, Vec<Label>)> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for row in reader.deserialize::<(f64, f64, u8)>() {
        let (x, y, l) = row?;
        data.extend([x, y]);
        labels.push(Label::from_u8(l).ok_or_else(|| Error::InvalidInput(format!("label {l} is not 0 or 1")))?);
    }
    Ok((Matrix::new(labels.len(), 2, data)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ProjectionMethod;
    use std::collections::BTreeMap;

    fn result(rows: &[[f64; 2]]) -> ProjectionResult {
        ProjectionResult {
            points: Matrix::from_rows(rows).unwrap(),
            method: ProjectionMethod::Tsne,
            explained_variance_ratio: None,
            params: BTreeMap::from([("title".to_string(), "t-SNE <p=15>".to_string())]),
        }
    }

    #[test]
    fn two_points_two_circles() {
        let svg = render_svg(&result(&[[0.0, 0.0], [1.0, 2.0]]), &[Label::Benign, Label::Malicious]).unwrap();
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains(r#"width="800" height="800""#));
        assert!(svg.contains("t-SNE &lt;p=15&gt;"));
        assert!(svg.contains(BENIGN_COLOR) && svg.contains(MALICIOUS_COLOR));
    }

    #[test]
    fn padding_keeps_points_inside_plot() {
        let svg = render_svg(&result(&[[-5.0, 3.0], [5.0, 8.0], [0.0, 5.0]]), &[Label::Benign; 3]).unwrap();
        // extremes land 5% of the span inside the frame
        let plot = CANVAS - 2.0 * MARGIN;
        let expect = format!(r#"cx="{:.2}""#, MARGIN + plot * 0.05 / 1.1);
        assert!(svg.contains(&expect), "{svg}");
    }

    #[test]
    fn svg_is_deterministic_and_length_checked() {
        let r = result(&[[0.1, 0.2], [0.3, 0.4], [0.5, 0.1]]);
        let labels = [Label::Benign, Label::Malicious, Label::Benign];
        assert_eq!(render_svg(&r, &labels).unwrap(), render_svg(&r, &labels).unwrap());
        assert!(render_svg(&r, &labels[..2]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let r = result(&[[0.123456789012345, -7.5e-9], [1e10, 3.0]]);
        let labels = [Label::Malicious, Label::Benign];
        emit_scatter(&r, &labels, &path, ScatterFormat::Csv).unwrap();
        let (pts, back) = read_scatter_csv(&path).unwrap();
        assert_eq!(back, labels);
        for (a, b) in pts.as_slice().iter().zip(r.points.as_slice()) {
            assert!((a - b).abs() <= 1e-9);
        }
        assert!(fs::read_to_string(&path).unwrap().starts_with("x,y,label\n"));
    }

    #[test]
    fn unwritable_path_errors() {
        let r = result(&[[0.0, 0.0]]);
        let err = emit_scatter(&r, &[Label::Benign], "/nonexistent-dir/x.svg", ScatterFormat::Svg).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
