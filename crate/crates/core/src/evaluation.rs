//! Reference-based image quality metrics: PSNR and single-scale SSIM, plus
//! a directory-level harness that pairs rendered frames with ground truth.
//!
//! PSNR accumulates squared differences in integer arithmetic, so it is
//! exactly symmetric in its arguments. SSIM uses the standard 11x11
//! Gaussian window (sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 255)
//! over valid window positions only, with channels averaged.
//!
//! Perceptual metrics (LPIPS, FID, FVD) need pretrained networks and are
//! out of scope; the report format reserves fields for them so external
//! tooling can merge values into the same file.

use crate::scene_io::{load_color, load_mask, ColorImage, OccupancyMask, SceneIoError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// PSNR reported for identical images, dB.
pub const PSNR_CAP_DB: f64 = 99.0;

/// SSIM window side length.
pub const SSIM_WINDOW: u32 = 11;

const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("images are {found_width}x{found_height}, expected {width}x{height}")]
    DimensionMismatch {
        width: u32,
        height: u32,
        found_width: u32,
        found_height: u32,
    },
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("images are {width}x{height}; SSIM needs at least {SSIM_WINDOW} per side")]
    TooSmall { width: u32, height: u32 },
    #[error("stem {stem:?} has no counterpart in {missing_in}")]
    MissingCounterpart { stem: String, missing_in: PathBuf },
    #[error("stem {stem:?} has no occupancy mask for masked evaluation")]
    MissingMask { stem: String },
    #[error(transparent)]
    SceneIo(#[from] SceneIoError),
}

/// Metrics for one render/ground-truth pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub name: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Arithmetic means over a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Full evaluation output. `lpips`, `fid` and `fvd` are always `None` here;
/// they exist so external perceptual-metric tooling can fill them in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub masked: bool,
    pub per_image: Vec<ImageMetrics>,
    pub aggregate: AggregateMetrics,
    pub lpips: Option<f64>,
    pub fid: Option<f64>,
    pub fvd: Option<f64>,
}

impl MetricReport {
    /// Flat CSV with one row per image plus an aggregate row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,psnr_db,ssim\n");
        for m in &self.per_image {
            writeln!(out, "{},{},{}", m.name, m.psnr_db, m.ssim).expect("string write");
        }
        writeln!(
            out,
            "aggregate,{},{}",
            self.aggregate.psnr_db, self.aggregate.ssim
        )
        .expect("string write");
        out
    }
}

fn check_dims(a: &ColorImage, b: &ColorImage) -> Result<(), EvaluationError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(EvaluationError::DimensionMismatch {
            width: a.width(),
            height: a.height(),
            found_width: b.width(),
            found_height: b.height(),
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB, channels pooled into one mean squared
/// error. With a mask, only set pixels contribute. Identical inputs return
/// [`PSNR_CAP_DB`].
pub fn psnr(
    a: &ColorImage,
    b: &ColorImage,
    mask: Option<&OccupancyMask>,
) -> Result<f64, EvaluationError> {
    check_dims(a, b)?;
    if let Some(mask) = mask {
        if mask.width() != a.width() || mask.height() != a.height() {
            return Err(EvaluationError::DimensionMismatch {
                width: a.width(),
                height: a.height(),
                found_width: mask.width(),
                found_height: mask.height(),
            });
        }
    }
    let mut squared_sum: u64 = 0;
    let mut samples: u64 = 0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            if let Some(mask) = mask {
                if !mask.get(x, y) {
                    continue;
                }
            }
            let pa = a.get(x, y);
            let pb = b.get(x, y);
            for c in 0..3 {
                let diff = i64::from(pa[c]) - i64::from(pb[c]);
                squared_sum += (diff * diff) as u64;
            }
            samples += 3;
        }
    }
    if samples == 0 {
        return Err(EvaluationError::EmptyMask);
    }
    if squared_sum == 0 {
        return Ok(PSNR_CAP_DB);
    }
    let mse = squared_sum as f64 / samples as f64;
    Ok(10.0 * ((255.0 * 255.0) / mse).log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW as usize] {
    let mut kernel = [0.0; SSIM_WINDOW as usize];
    let center = f64::from(SSIM_WINDOW - 1) / 2.0;
    let mut sum = 0.0;
    for (i, k) in kernel.iter_mut().enumerate() {
        let d = i as f64 - center;
        *k = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *k;
    }
    for k in &mut kernel {
        *k /= sum;
    }
    kernel
}

/// Valid-mode separable Gaussian blur: output is
/// `(w - SSIM_WINDOW + 1) x (h - SSIM_WINDOW + 1)`.
fn blur_valid(data: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let t = kernel.len();
    let ow = w - t + 1;
    let oh = h - t + 1;
    let mut horizontal = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                acc += k * data[y * w + x + i];
            }
            horizontal[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                acc += k * horizontal[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean structural similarity over valid window positions, channels
/// averaged. Result lies in [-1, 1]; identical images give 1.
pub fn ssim(a: &ColorImage, b: &ColorImage) -> Result<f64, EvaluationError> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(EvaluationError::TooSmall {
            width: w,
            height: h,
        });
    }
    let kernel = gaussian_kernel();
    let (w, h) = (w as usize, h as usize);
    let mut channel_means = 0.0;
    for channel in 0..3 {
        let pa: Vec<f64> = a.data()[channel..].iter().step_by(3).map(|&v| f64::from(v)).collect();
        let pb: Vec<f64> = b.data()[channel..].iter().step_by(3).map(|&v| f64::from(v)).collect();
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = blur_valid(&pa, w, h, &kernel);
        let mu_b = blur_valid(&pb, w, h, &kernel);
        let raw_aa = blur_valid(&aa, w, h, &kernel);
        let raw_bb = blur_valid(&bb, w, h, &kernel);
        let raw_ab = blur_valid(&ab, w, h, &kernel);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = raw_aa[i] - ma * ma;
            let var_b = raw_bb[i] - mb * mb;
            let cov = raw_ab[i] - ma * mb;
            let numerator = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let denominator = (ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2);
            sum += numerator / denominator;
        }
        channel_means += sum / mu_a.len() as f64;
    }
    Ok(channel_means / 3.0)
}

/// How a PNG file name maps to a comparison stem: `<stem>_color.png` and
/// bare `<stem>.png` are color images, `_depth`/`_occ` suffixes are
/// auxiliary channels and are skipped.
fn color_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>, EvaluationError> {
    let mut stems = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| {
        EvaluationError::SceneIo(if e.kind() == std::io::ErrorKind::NotFound {
            SceneIoError::MissingFile(dir.to_path_buf())
        } else {
            SceneIoError::Validation(format!("cannot list {}: {e}", dir.display()))
        })
    })?;
    for entry in entries {
        let entry = entry.map_err(|e| {
            EvaluationError::SceneIo(SceneIoError::Validation(format!(
                "cannot list {}: {e}",
                dir.display()
            )))
        })?;
        let path = entry.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(base) = name.strip_suffix(".png") else {
            continue;
        };
        if base.ends_with("_depth") || base.ends_with("_occ") {
            continue;
        }
        let stem = base.strip_suffix("_color").unwrap_or(base).to_string();
        stems.insert(stem, path);
    }
    Ok(stems)
}

/// Evaluates every matching stem between a render directory and a
/// ground-truth directory. With `masked` set, PSNR is restricted to each
/// render's occupancy pixels (`<stem>_occ.png` next to the render).
pub fn evaluate_sequence(
    render_dir: &Path,
    gt_dir: &Path,
    masked: bool,
) -> Result<MetricReport, EvaluationError> {
    let renders = color_stems(render_dir)?;
    let gts = color_stems(gt_dir)?;
    for stem in renders.keys() {
        if !gts.contains_key(stem) {
            return Err(EvaluationError::MissingCounterpart {
                stem: stem.clone(),
                missing_in: gt_dir.to_path_buf(),
            });
        }
    }
    for stem in gts.keys() {
        if !renders.contains_key(stem) {
            return Err(EvaluationError::MissingCounterpart {
                stem: stem.clone(),
                missing_in: render_dir.to_path_buf(),
            });
        }
    }
    let per_image = renders
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(stem, render_path)| {
            let render = load_color(render_path)?;
            let gt = load_color(&gts[*stem])?;
            let mask = if masked {
                let mask_path = render_dir.join(format!("{stem}_occ.png"));
                if !mask_path.is_file() {
                    return Err(EvaluationError::MissingMask {
                        stem: (*stem).clone(),
                    });
                }
                Some(load_mask(&mask_path)?)
            } else {
                None
            };
            Ok(ImageMetrics {
                name: (*stem).clone(),
                psnr_db: psnr(&render, &gt, mask.as_ref())?,
                ssim: ssim(&render, &gt)?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = per_image.len().max(1) as f64;
    let aggregate = AggregateMetrics {
        psnr_db: per_image.iter().map(|m| m.psnr_db).sum::<f64>() / n,
        ssim: per_image.iter().map(|m| m.ssim).sum::<f64>() / n,
    };
    Ok(MetricReport {
        masked,
        per_image,
        aggregate,
        lpips: None,
        fid: None,
        fvd: None,
    })
}
