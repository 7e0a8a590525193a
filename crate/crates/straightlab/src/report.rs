//! Named metric containers and the plain-file emitters: JSON documents,
//! CSV curves, and portable pixmap images for reconstruction strips.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct HistogramData {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub mean: f64,
    pub std: f64,
    pub n: u64,
}

impl HistogramData {
    /// Fixed-width bins over [lo, hi]; values outside clamp to the end bins.
    pub fn build(lo: f64, hi: f64, bins: usize, values: impl Iterator<Item = f64>) -> Self {
        let mut counts = vec![0u64; bins];
        let mut n = 0u64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let width = (hi - lo) / bins as f64;
        for v in values {
            let idx = (((v - lo) / width).floor() as i64).clamp(0, bins as i64 - 1) as usize;
            counts[idx] += 1;
            n += 1;
            sum += v;
            sum_sq += v * v;
        }
        let mean = if n > 0 { sum / n as f64 } else { 0.0 };
        let var = if n > 1 {
            (sum_sq - sum * sum / n as f64) / (n - 1) as f64
        } else {
            0.0
        };
        HistogramData {
            lo,
            hi,
            counts,
            mean,
            std: var.max(0.0).sqrt(),
            n,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.lo + i as f64 * width,
                self.lo + (i + 1) as f64 * width,
                c
            ));
        }
        out
    }
}

/// Named scalar/curve/histogram results from one analysis.
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub scalars: BTreeMap<String, f64>,
    pub curves: BTreeMap<String, Vec<(f64, f64)>>,
    pub histograms: BTreeMap<String, HistogramData>,
}

impl MetricReport {
    pub fn new(name: impl Into<String>) -> Self {
        MetricReport {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.scalars.insert(key.into(), value);
        self
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }

    pub fn add_curve(&mut self, key: impl Into<String>, points: Vec<(f64, f64)>) -> &mut Self {
        self.curves.insert(key.into(), points);
        self
    }

    pub fn add_histogram(&mut self, key: impl Into<String>, h: HistogramData) -> &mut Self {
        self.histograms.insert(key.into(), h);
        self
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|_| crate::error::Error::FileMissing(path.to_path_buf()))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn curve_csv(&self, key: &str) -> Option<String> {
        self.curves.get(key).map(|points| {
            let mut out = String::from("x,y\n");
            for (x, y) in points {
                out.push_str(&format!("{x},{y}\n"));
            }
            out
        })
    }
}

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut out = String::from(header);
    if !out.ends_with('\n') {
        out.push('\n');
    }
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a `[C,H,W]` tensor as PGM (C=1) or PPM (C=3), clamping to [0,1].
pub fn write_image(path: &Path, frame: &Tensor) -> Result<()> {
    let (c, h, w) = (frame.shape()[0], frame.shape()[1], frame.shape()[2]);
    let data = frame.data();
    let mut bytes: Vec<u8>;
    match c {
        1 => {
            bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
            bytes.extend(data.iter().map(|&v| to_byte(v)));
        }
        3 => {
            bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
            let hw = h * w;
            for i in 0..hw {
                bytes.push(to_byte(data[i]));
                bytes.push(to_byte(data[hw + i]));
                bytes.push(to_byte(data[2 * hw + i]));
            }
        }
        other => {
            return Err(crate::error::Error::ShapeMismatch(format!(
                "cannot write an image with {other} channels"
            )))
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Compose equally-sized frames into a grid with a 2-pixel separator,
/// row-major cell order. `None` cells render mid-gray.
pub fn image_grid(cells: &[Vec<Option<Tensor>>]) -> Result<Tensor> {
    let rows = cells.len();
    let cols = cells.iter().map(|r| r.len()).max().unwrap_or(0);
    let first = cells
        .iter()
        .flatten()
        .flatten()
        .next()
        .ok_or_else(|| crate::error::Error::EmptyGroup("image grid has no frames".into()))?;
    let (c, h, w) = (first.shape()[0], first.shape()[1], first.shape()[2]);
    const PAD: usize = 2;
    let gh = rows * h + (rows + 1) * PAD;
    let gw = cols * w + (cols + 1) * PAD;
    let mut grid = Tensor::from_vec(&[c, gh, gw], vec![0.25; c * gh * gw])?;
    for (ri, row) in cells.iter().enumerate() {
        for (ci, cell) in row.iter().enumerate() {
            let oy = PAD + ri * (h + PAD);
            let ox = PAD + ci * (w + PAD);
            let gdata = grid.data_mut();
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let v = match cell {
                            Some(t) => t.data()[(ch * h + y) * w + x].clamp(0.0, 1.0),
                            None => 0.5,
                        };
                        gdata[(ch * gh + oy + y) * gw + ox + x] = v;
                    }
                }
            }
        }
    }
    Ok(grid)
}
