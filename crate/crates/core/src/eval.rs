//! Rate-distortion measurement, BD-rate and CSV reports.

use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::frame::{psnr, PsnrReport, VideoSequence};
use crate::gop::FrameStat;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    pub label: String,
    pub points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(label: impl Into<String>, points: Vec<RdPoint>) -> Self {
        RdCurve { label: label.into(), points }
    }

    /// Points sorted by rate; logs a warning when the curve is not a valid
    /// RD curve (repeated rates, or quality falling as rate rises).
    pub fn sorted(&self) -> Vec<RdPoint> {
        let mut pts = self.points.clone();
        pts.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        for w in pts.windows(2) {
            if w[1].bpp <= w[0].bpp {
                warn!("curve {}: repeated rate {}", self.label, w[0].bpp);
            }
            if w[1].psnr < w[0].psnr {
                warn!("curve {}: PSNR falls from {} to {} as rate rises", self.label, w[0].psnr, w[1].psnr);
            }
        }
        pts
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePsnrRow {
    pub frame: usize,
    pub psnr_y: f64,
    pub psnr_u: f64,
    pub psnr_v: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub point: RdPoint,
    pub bits: u64,
    pub frames: Vec<FramePsnrRow>,
}

/// Per-frame PSNR and the sequence RD point: `bits / (W * H * frames)` and
/// the mean combined PSNR.
pub fn measure(original: &VideoSequence, decoded: &VideoSequence, stream_bits: u64) -> Result<Measurement> {
    if original.len() != decoded.len() {
        return invalid(format!("{} original frames, {} decoded", original.len(), decoded.len()));
    }
    if original.is_empty() {
        return invalid("empty sequence");
    }
    if (original.width, original.height) != (decoded.width, decoded.height) {
        return invalid(format!(
            "original is {}x{}, decoded is {}x{}",
            original.width, original.height, decoded.width, decoded.height
        ));
    }
    let frames = original
        .frames
        .iter()
        .zip(&decoded.frames)
        .enumerate()
        .map(|(k, (a, b))| {
            let PsnrReport { y, u, v, combined } = psnr(a, b)?;
            Ok(FramePsnrRow { frame: k, psnr_y: y, psnr_u: u, psnr_v: v, psnr: combined })
        })
        .collect::<Result<Vec<_>>>()?;
    let pixels = (original.width * original.height * original.len()) as f64;
    let mean = frames.iter().map(|f| f.psnr).sum::<f64>() / frames.len() as f64;
    Ok(Measurement { point: RdPoint { bpp: stream_bits as f64 / pixels, psnr: mean }, bits: stream_bits, frames })
}

/// Least-squares polynomial of degree `deg` through `(x, y)`, coefficients
/// lowest order first.
fn polyfit(xs: &[f64], ys: &[f64], deg: usize) -> Result<Vec<f64>> {
    let n = deg + 1;
    let mut m = vec![vec![0.0; n + 1]; n];
    for (&x, &y) in xs.iter().zip(ys) {
        let pw: Vec<f64> = (0..2 * n).map(|k| x.powi(k as i32)).collect();
        for r in 0..n {
            for c in 0..n {
                m[r][c] += pw[r + c];
            }
            m[r][n] += pw[r] * y;
        }
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
        if m[piv][col].abs() < 1e-12 {
            return invalid("degenerate RD curve: PSNR values are not distinct enough for a cubic fit");
        }
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Ok((0..n).map(|k| m[k][n] / m[k][k]).collect())
}

/// Definite integral of a polynomial over `[a, b]`.
fn poly_integral(coef: &[f64], a: f64, b: f64) -> f64 {
    let prim = |x: f64| coef.iter().enumerate().map(|(k, c)| c * x.powi(k as i32 + 1) / (k as f64 + 1.0)).sum::<f64>();
    prim(b) - prim(a)
}

/// Bjontegaard delta rate of `test` against `anchor` in percent: cubic
/// least-squares fits of `log10(bpp)` over PSNR, averaged over the common
/// PSNR interval. Negative means `test` needs fewer bits.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    for c in [anchor, test] {
        if c.points.len() < 4 {
            return invalid(format!("curve {} has {} points, need at least 4", c.label, c.points.len()));
        }
        if let Some(p) = c.points.iter().find(|p| !(p.bpp > 0.0) || !p.psnr.is_finite()) {
            return invalid(format!("curve {} has invalid point {p:?}", c.label));
        }
    }
    let (a, t) = (anchor.sorted(), test.sorted());
    let range = |pts: &[RdPoint]| {
        let lo = pts.iter().map(|p| p.psnr).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.psnr).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let ((alo, ahi), (tlo, thi)) = (range(&a), range(&t));
    let (lo, hi) = (alo.max(tlo), ahi.min(thi));
    if hi <= lo {
        return Err(Error::NoOverlap);
    }
    let center = 0.5 * (lo + hi);
    let fit = |pts: &[RdPoint]| {
        let xs: Vec<f64> = pts.iter().map(|p| p.psnr - center).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.bpp.log10()).collect();
        polyfit(&xs, &ys, 3)
    };
    let (pa, pt) = (fit(&a)?, fit(&t)?);
    let (x0, x1) = (lo - center, hi - center);
    let avg = (poly_integral(&pt, x0, x1) - poly_integral(&pa, x0, x1)) / (x1 - x0);
    Ok((10f64.powf(avg) - 1.0) * 100.0)
}

/// One row of an RD sweep CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdRow {
    pub label: String,
    pub quality: u8,
    pub bits: u64,
    pub bpp: f64,
    pub psnr_y: f64,
    pub psnr_u: f64,
    pub psnr_v: f64,
    pub psnr: f64,
}

pub fn write_rd_csv<W: Write>(rows: &[RdRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rd_rows<R: Read>(input: R) -> Result<Vec<RdRow>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Reads an RD sweep CSV as one curve; the label is taken from the rows.
pub fn read_rd_curve<R: Read>(input: R) -> Result<RdCurve> {
    let rows = read_rd_rows(input)?;
    let label = rows.first().map(|r| r.label.clone()).unwrap_or_default();
    Ok(RdCurve::new(label, rows.iter().map(|r| RdPoint { bpp: r.bpp, psnr: r.psnr }).collect()))
}

#[derive(Serialize)]
struct FrameLogRow<'a> {
    frame: usize,
    #[serde(rename = "type")]
    frame_type: &'a str,
    i: String,
    d: String,
    bits: u64,
    psnr_y: f64,
    psnr_u: f64,
    psnr_v: f64,
    psnr: f64,
}

/// Per-frame encoder log in coding order; `i` and `d` are `-` where absent.
pub fn write_frame_log<W: Write>(stats: &[FrameStat], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in stats {
        let is_b = s.frame_type == crate::gop::FrameType::B;
        w.serialize(FrameLogRow {
            frame: s.display_index,
            frame_type: s.frame_type.as_str(),
            i: if is_b { s.ref_distance.to_string() } else { "-".into() },
            d: s.factor.map_or("-".into(), |d| d.value().to_string()),
            bits: s.bits,
            psnr_y: s.psnr.y,
            psnr_u: s.psnr.u,
            psnr_v: s.psnr.v,
            psnr: s.psnr.combined,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_frame_psnr<W: Write>(rows: &[FramePsnrRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// A curve for one (sequence, configuration) pair.
#[derive(Clone, Debug)]
pub struct ReportEntry {
    pub sequence: String,
    pub config: String,
    pub curve: RdCurve,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub sequence: String,
    /// BD-rate per configuration, `None` when it could not be computed.
    pub values: Vec<Option<f64>>,
}

/// BD-rate of every configuration against `anchor`, one row per sequence
/// in first-seen order, followed by an `Average` row.
pub fn report(entries: &[ReportEntry], anchor: &str, configs: &[String]) -> Vec<ReportRow> {
    let mut sequences: Vec<&str> = Vec::new();
    for e in entries {
        if !sequences.contains(&e.sequence.as_str()) {
            sequences.push(&e.sequence);
        }
    }
    let find = |s: &str, c: &str| entries.iter().find(|e| e.sequence == s && e.config == c).map(|e| &e.curve);
    let mut rows: Vec<ReportRow> = sequences
        .iter()
        .map(|&s| {
            let values = configs
                .iter()
                .map(|c| {
                    let (Some(a), Some(t)) = (find(s, anchor), find(s, c)) else {
                        warn!("sequence {s}: missing curve for {anchor} or {c}");
                        return None;
                    };
                    bd_rate(a, t).map_err(|e| warn!("sequence {s}, config {c}: {e}")).ok()
                })
                .collect();
            ReportRow { sequence: s.to_string(), values }
        })
        .collect();
    let average = (0..configs.len())
        .map(|k| {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.values[k]).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    rows.push(ReportRow { sequence: "Average".into(), values: average });
    rows
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], configs: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sequence".to_string()];
    header.extend(configs.iter().cloned());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.sequence.clone()];
        rec.extend(r.values.iter().map(|v| v.map_or(String::new(), |v| format!("{v:.4}"))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
