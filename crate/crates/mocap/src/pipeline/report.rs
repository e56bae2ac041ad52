//! Report rendering: per-frame error curves as SVG line plots (mean in the
//! legend) and a CSV table.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

use super::MetricsReport;

/// Writes `metrics.csv` plus one SVG curve per available metric into
/// `out_dir`. An empty report is an error.
pub fn render_report(report: &MetricsReport, out_dir: &Path) -> Result<()> {
    if report.frames.is_empty() {
        return Err(Error::InvalidInput("report has no frames".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut csv = String::from(
        "frame,joint_error_similarity_mm,joint_error_rigid_mm,vertex_error_mm,iou,degenerate\n",
    );
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    for f in &report.frames {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            f.frame,
            cell(f.joint_error_similarity_mm),
            cell(f.joint_error_rigid_mm),
            cell(f.vertex_error_mm),
            cell(f.iou),
            f.degenerate
        )
        .expect("write to string");
    }
    let csv_path = out_dir.join("metrics.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let curves: [(&str, Box<dyn Fn(&super::metrics::FrameMetrics) -> Option<f64>>, Option<f64>); 4] = [
        (
            "joint_error_similarity_mm",
            Box::new(|f| f.joint_error_similarity_mm),
            report.mean_joint_error_similarity_mm,
        ),
        (
            "joint_error_rigid_mm",
            Box::new(|f| f.joint_error_rigid_mm),
            report.mean_joint_error_rigid_mm,
        ),
        (
            "vertex_error_mm",
            Box::new(|f| f.vertex_error_mm),
            report.mean_vertex_error_mm,
        ),
        ("iou", Box::new(|f| f.iou), report.mean_iou),
    ];
    for (name, getter, mean) in curves {
        let series: Vec<(usize, f64)> = report
            .frames
            .iter()
            .filter_map(|f| getter(f).map(|v| (f.frame, v)))
            .collect();
        if series.is_empty() {
            continue;
        }
        let svg = line_plot(name, &series, mean);
        let path = out_dir.join(format!("{name}.svg"));
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn line_plot(title: &str, series: &[(usize, f64)], mean: Option<f64>) -> String {
    let (w, h) = (640.0, 360.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 40.0, 40.0);
    let x_max = series.iter().map(|&(f, _)| f).max().unwrap_or(0).max(1) as f64;
    let y_min = series.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
    let y_max = series.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let (y_lo, y_hi) = if (y_max - y_min).abs() < 1e-12 {
        (y_min - 1.0, y_max + 1.0)
    } else {
        let pad = 0.05 * (y_max - y_min);
        (y_min - pad, y_max + pad)
    };
    let sx = |f: f64| ml + (w - ml - mr) * f / x_max;
    let sy = |v: f64| h - mb - (h - mb - mt) * (v - y_lo) / (y_hi - y_lo);

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    )
    .unwrap();
    writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>").unwrap();
    // Axes.
    writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        h - mb,
        w - mr,
        h - mb
    )
    .unwrap();
    writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>",
        h - mb
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{ml}\" y=\"{}\" font-size=\"12\">0</text>",
        h - mb + 16.0
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>",
        w - mr - 20.0,
        h - mb + 16.0,
        x_max as usize
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"4\" y=\"{}\" font-size=\"12\">{:.3}</text>",
        h - mb,
        y_lo
    )
    .unwrap();
    writeln!(svg, "<text x=\"4\" y=\"{}\" font-size=\"12\">{:.3}</text>", mt + 6.0, y_hi).unwrap();

    if series.len() == 1 {
        let (f, v) = series[0];
        writeln!(
            svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"steelblue\"/>",
            sx(f as f64),
            sy(v)
        )
        .unwrap();
    } else {
        let points: Vec<String> = series
            .iter()
            .map(|&(f, v)| format!("{:.2},{:.2}", sx(f as f64), sy(v)))
            .collect();
        writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.join(" ")
        )
        .unwrap();
    }
    let legend = match mean {
        Some(m) => format!("{title} (mean {m:.4})"),
        None => title.to_string(),
    };
    writeln!(svg, "<text x=\"{ml}\" y=\"{}\" font-size=\"14\">{legend}</text>", mt - 12.0).unwrap();
    writeln!(svg, "</svg>").unwrap();
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::metrics::{FrameMetrics, MetricsReport};

    fn frame(f: usize, v: f64) -> FrameMetrics {
        FrameMetrics {
            frame: f,
            joint_error_similarity_mm: Some(v),
            joint_error_rigid_mm: None,
            vertex_error_mm: None,
            iou: None,
            degenerate: false,
        }
    }

    #[test]
    fn single_frame_report_renders_a_point() {
        let report = MetricsReport {
            frames: vec![frame(0, 3.5)],
            mean_joint_error_similarity_mm: Some(3.5),
            mean_joint_error_rigid_mm: None,
            mean_vertex_error_mm: None,
            mean_iou: None,
            stage_runtimes_s: Default::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        render_report(&report, dir.path()).unwrap();
        let svg = std::fs::read_to_string(dir.path().join("joint_error_similarity_mm.svg")).unwrap();
        assert!(svg.contains("circle"));
        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn empty_report_is_an_error() {
        let report = MetricsReport {
            frames: vec![],
            mean_joint_error_similarity_mm: None,
            mean_joint_error_rigid_mm: None,
            mean_vertex_error_mm: None,
            mean_iou: None,
            stage_runtimes_s: Default::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(render_report(&report, dir.path()).is_err());
    }

    #[test]
    fn constant_series_mean_matches_the_constant() {
        let report = MetricsReport {
            frames: (0..10).map(|f| frame(f, 2.25)).collect(),
            mean_joint_error_similarity_mm: Some(2.25),
            mean_joint_error_rigid_mm: None,
            mean_vertex_error_mm: None,
            mean_iou: None,
            stage_runtimes_s: Default::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        render_report(&report, dir.path()).unwrap();
        let svg = std::fs::read_to_string(dir.path().join("joint_error_similarity_mm.svg")).unwrap();
        assert!(svg.contains("mean 2.2500"));
        assert!(svg.contains("polyline"));
    }
}
