//! CSV, JSON and SVG outputs. Every writer is a pure function of its inputs,
//! so identical results produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{write_file, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::froc::{FrocBand, FrocCurve, OperatingPoint};
use crate::roc::{BandPoint, RocBootstrap, RocCurve};

pub const TOOL_NAME: &str = "cadeval";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const ROC_CSV: &str = "roc.csv";
pub const ROC_BAND_CSV: &str = "roc_band.csv";
pub const ROC_SUMMARY: &str = "roc_summary.json";
pub const ROC_SVG: &str = "roc.svg";
pub const FROC_CSV: &str = "froc.csv";
pub const FROC_SUMMARY: &str = "froc_summary.json";
pub const FROC_SVG: &str = "froc.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEcho {
    pub replicates: usize,
    pub interval: f64,
    pub seed: u64,
    pub degenerate_redraws: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub format_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub n_cases: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub auc: f64,
    pub lo: f64,
    pub hi: f64,
    pub replicates: usize,
    pub interval: f64,
    pub seed: u64,
    pub degenerate_redraws: u64,
    /// Free-form echo of the settings that produced this result.
    pub config: serde_json::Value,
}

impl RocSummary {
    pub fn new(
        bootstrap: &RocBootstrap,
        n_positive: usize,
        n_negative: usize,
        config: serde_json::Value,
    ) -> Self {
        RocSummary {
            format_version: FORMAT_VERSION,
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            n_cases: n_positive + n_negative,
            n_positive,
            n_negative,
            auc: bootstrap.auc,
            lo: bootstrap.lo,
            hi: bootstrap.hi,
            replicates: bootstrap.replicates,
            interval: bootstrap.interval,
            seed: bootstrap.seed,
            degenerate_redraws: bootstrap.degenerate_redraws,
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocOperatingSummary {
    #[serde(flatten)]
    pub point: OperatingPoint,
    /// Bootstrap sensitivity interval at the target, when a band was computed.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocSummary {
    pub format_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub total_images: u64,
    pub total_lesions: u64,
    pub max_sensitivity: f64,
    pub operating_points: Vec<FrocOperatingSummary>,
    pub bootstrap: Option<BootstrapEcho>,
    pub config: serde_json::Value,
}

impl FrocSummary {
    pub fn new(
        curve: &FrocCurve,
        operating: &[OperatingPoint],
        band: Option<&FrocBand>,
        config: serde_json::Value,
    ) -> Self {
        let operating_points = operating
            .iter()
            .map(|p| {
                let b = band.and_then(|b| b.at(p.target_fp_per_image));
                FrocOperatingSummary {
                    point: *p,
                    lo: b.map(|b| b.lo),
                    hi: b.map(|b| b.hi),
                }
            })
            .collect();
        FrocSummary {
            format_version: FORMAT_VERSION,
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            total_images: curve.total_images,
            total_lesions: curve.total_lesions,
            max_sensitivity: curve.max_sensitivity(),
            operating_points,
            bootstrap: band.map(|b| BootstrapEcho {
                replicates: b.replicates,
                interval: b.interval,
                seed: b.seed,
                degenerate_redraws: b.degenerate_redraws,
            }),
            config,
        }
    }
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report values serialize");
    v.push(b'\n');
    v
}

/// `threshold,fpr,tpr`; the leading point has threshold `inf`.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    s
}

/// `fpr,lo,hi`.
pub fn roc_band_csv(band: &[BandPoint]) -> String {
    let mut s = String::from("fpr,lo,hi\n");
    for b in band {
        let _ = writeln!(s, "{},{},{}", b.x, b.lo, b.hi);
    }
    s
}

/// `threshold,fp_per_image,sensitivity[,lo,hi]`. The band columns appear only
/// when a band is given; its grid must contain every achieved rate.
pub fn froc_csv(curve: &FrocCurve, band: Option<&FrocBand>) -> Result<String> {
    let mut s = String::from("threshold,fp_per_image,sensitivity");
    if band.is_some() {
        s.push_str(",lo,hi");
    }
    s.push('\n');
    for p in &curve.points {
        let _ = write!(s, "{},{},{}", p.threshold, p.fp_per_image, p.sensitivity);
        if let Some(band) = band {
            let b = band.at(p.fp_per_image).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "band grid lacks the achieved rate {}",
                    p.fp_per_image
                ))
            })?;
            let _ = write!(s, ",{},{}", b.lo, b.hi);
        }
        s.push('\n');
    }
    Ok(s)
}

/// One plotted series.
pub struct Series<'a> {
    pub points: &'a [(f64, f64)],
    pub dashed: bool,
    pub step: bool,
}

const SVG_W: f64 = 480.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Line plot with linear axes `[0, x_max] x [0, 1]`.
pub fn svg_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    x_max: f64,
    series: &[Series<'_>],
) -> String {
    let pw = SVG_W - 2.0 * MARGIN;
    let ph = SVG_H - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + pw * (x / x_max).clamp(0.0, 1.0);
    let py = |y: f64| SVG_H - MARGIN - ph * y.clamp(0.0, 1.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        SVG_W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let f = f64::from(i) / 5.0;
        let (x, y) = (px(f * x_max), py(f));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            MARGIN,
            SVG_H - MARGIN,
            SVG_H - MARGIN + 16.0,
            tick(f * x_max)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            MARGIN,
            SVG_W - MARGIN,
            MARGIN - 6.0,
            y + 4.0,
            tick(f)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        SVG_W / 2.0,
        SVG_H - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        SVG_H / 2.0,
        SVG_H / 2.0,
        escape(y_label)
    );
    for series in series {
        let mut coords = String::new();
        let mut prev: Option<(f64, f64)> = None;
        for &(x, y) in series.points {
            if series.step {
                if let Some((_, py0)) = prev {
                    let _ = write!(coords, "{:.2},{:.2} ", px(x), py(py0));
                }
            }
            let _ = write!(coords, "{:.2},{:.2} ", px(x), py(y));
            prev = Some((x, y));
        }
        let dash = if series.dashed {
            r#" stroke-dasharray="5,4""#
        } else {
            ""
        };
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f5fbf" stroke-width="{}"{dash}/>"##,
            coords.trim_end(),
            if series.dashed { "1" } else { "2" }
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn roc_svg(curve: &RocCurve, band: &[BandPoint]) -> String {
    let main: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.fpr, p.tpr)).collect();
    let lo: Vec<(f64, f64)> = band.iter().map(|b| (b.x, b.lo)).collect();
    let hi: Vec<(f64, f64)> = band.iter().map(|b| (b.x, b.hi)).collect();
    let mut series = vec![Series {
        points: &main,
        dashed: false,
        step: false,
    }];
    if !band.is_empty() {
        series.push(Series {
            points: &lo,
            dashed: true,
            step: false,
        });
        series.push(Series {
            points: &hi,
            dashed: true,
            step: false,
        });
    }
    svg_plot(
        &format!("ROC (AUC = {:.3})", curve.auc),
        "False positive rate",
        "True positive rate",
        1.0,
        &series,
    )
}

pub fn froc_svg(curve: &FrocCurve, band: Option<&FrocBand>) -> String {
    let main: Vec<(f64, f64)> = curve
        .points
        .iter()
        .map(|p| (p.fp_per_image, p.sensitivity))
        .collect();
    let band_pts = band.map_or(&[][..], |b| b.band.as_slice());
    let lo: Vec<(f64, f64)> = band_pts.iter().map(|b| (b.x, b.lo)).collect();
    let hi: Vec<(f64, f64)> = band_pts.iter().map(|b| (b.x, b.hi)).collect();
    let x_max = main
        .iter()
        .chain(&lo)
        .map(|p| p.0)
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let mut series = vec![Series {
        points: &main,
        dashed: false,
        step: true,
    }];
    if !band_pts.is_empty() {
        series.push(Series {
            points: &lo,
            dashed: true,
            step: true,
        });
        series.push(Series {
            points: &hi,
            dashed: true,
            step: true,
        });
    }
    svg_plot(
        "FROC",
        "False positive marks per image",
        "Lesion sensitivity",
        x_max,
        &series,
    )
}

/// Writes `roc.csv`, `roc_band.csv` (when a band exists), `roc_summary.json`
/// and `roc.svg` into `dir`.
pub fn write_roc_report(
    dir: &Path,
    curve: &RocCurve,
    bootstrap: &RocBootstrap,
    summary: &RocSummary,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(ROC_CSV), roc_csv(curve).as_bytes())?;
    if !bootstrap.band.is_empty() {
        write_file(
            &dir.join(ROC_BAND_CSV),
            roc_band_csv(&bootstrap.band).as_bytes(),
        )?;
    }
    write_file(&dir.join(ROC_SUMMARY), &json_bytes(summary))?;
    write_file(
        &dir.join(ROC_SVG),
        roc_svg(curve, &bootstrap.band).as_bytes(),
    )
}

/// Writes `froc.csv`, `froc_summary.json` and `froc.svg` into `dir`.
pub fn write_froc_report(
    dir: &Path,
    curve: &FrocCurve,
    band: Option<&FrocBand>,
    summary: &FrocSummary,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(FROC_CSV), froc_csv(curve, band)?.as_bytes())?;
    write_file(&dir.join(FROC_SUMMARY), &json_bytes(summary))?;
    write_file(&dir.join(FROC_SVG), froc_svg(curve, band).as_bytes())
}

/// Parses a numeric CSV written by this module into its header and rows.
pub fn parse_numeric_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty CSV".into()))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|v| {
                v.parse::<f64>().map_err(|e| {
                    Error::validation(format!("line {}", i + 2), format!("{v:?}: {e}"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(Error::validation(
                format!("line {}", i + 2),
                format!("expected {} fields, got {}", header.len(), row.len()),
            ));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
