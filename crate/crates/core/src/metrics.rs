//! Full-reference (PSNR, SSIM) and no-reference (UIQM, UCIQE) quality scores
//! and a batch evaluator.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::aqualoss::{abl, AblWeights};
use crate::error::{dim_err, Error, Result};
use crate::tensor::{gaussian_kernel_1d, opponent_channels, ImageTensor};

/// Value reported by [`psnr`] for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_RANGE: f64 = 1.0;

pub const UCIQE_COEFFS: [f64; 3] = [0.4680, 0.2745, 0.2576];
/// Guard in the saturation term `chroma / (luma + ε)`.
pub const UCIQE_EPSILON: f64 = 1e-6;
pub const UCIQE_LABEL: &str = "UCIQE (opponent-space variant)";

/// Peak signal-to-noise ratio in dB for `[0, 1]` images, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let n = a.data().len() as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Luma for RGB input, the plane itself for single-channel input.
fn gray_plane(img: &ImageTensor) -> Result<Vec<f64>> {
    match img.channels() {
        1 => Ok(img.data().to_vec()),
        3 => img.luminance(),
        c => dim_err(format!("expected 1 or 3 channels, got {c}")),
    }
}

/// Valid-region separable filtering of a plane with `taps`.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * ow + x])
                .sum();
        }
    }
    (out, oh, ow)
}

/// Mean structural similarity on luma over all fully contained 11×11
/// Gaussian windows (σ = 1.5, dynamic range 1).
pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (_, h, w) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return dim_err(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        ));
    }
    let (x, y) = (gray_plane(a)?, gray_plane(b)?);
    let taps = ssim_taps();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let (mx, oh, ow) = filter_valid(&x, h, w, &taps);
    let (my, _, _) = filter_valid(&y, h, w, &taps);
    let (exx, _, _) = filter_valid(&xx, h, w, &taps);
    let (eyy, _, _) = filter_valid(&yy, h, w, &taps);
    let (exy, _, _) = filter_valid(&xy, h, w, &taps);
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let sum: f64 = (0..oh * ow)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = exx[i] - ux * ux;
            let vy = eyy[i] - uy * uy;
            let cov = exy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(sum / (oh * ow) as f64)
}

/// The 1-D factor of the SSIM window.
pub fn ssim_taps() -> Vec<f64> {
    // radius ceil(3 * 1.5) = 5 gives exactly the 11-tap window
    let taps = gaussian_kernel_1d(SSIM_SIGMA).expect("positive sigma");
    debug_assert_eq!(taps.len(), SSIM_WINDOW);
    taps
}

/// The composite AbL score under `w`.
pub fn uiqm(img: &ImageTensor, w: &AblWeights) -> Result<f64> {
    Ok(abl(img, w)?.abl)
}

/// Percentile with linear interpolation between closest ranks on sorted data.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `0.4680·σ_chroma + 0.2745·(p99 − p1 of luma) + 0.2576·mean(chroma/(luma+ε))`
/// with chroma taken from the opponent planes.
pub fn uciqe(img: &ImageTensor) -> Result<f64> {
    let luma = img.luminance()?;
    let (rg, yb) = opponent_channels(img)?;
    let chroma: Vec<f64> = rg
        .data()
        .iter()
        .zip(yb.data())
        .map(|(a, b)| (a * a + b * b).sqrt())
        .collect();
    let n = chroma.len() as f64;
    let mu_c = chroma.iter().sum::<f64>() / n;
    let sigma_c = (chroma.iter().map(|c| (c - mu_c) * (c - mu_c)).sum::<f64>() / n).sqrt();
    let mut sorted = luma.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let contrast = percentile_sorted(&sorted, 0.99) - percentile_sorted(&sorted, 0.01);
    let sat = chroma
        .iter()
        .zip(&luma)
        .map(|(c, l)| c / (l + UCIQE_EPSILON))
        .sum::<f64>()
        / n;
    let [k1, k2, k3] = UCIQE_COEFFS;
    Ok(k1 * sigma_c + k2 * contrast + k3 * sat)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Psnr,
    Ssim,
    Uiqm,
    Uciqe,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Psnr, Metric::Ssim, Metric::Uiqm, Metric::Uciqe];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Psnr => "psnr",
            Metric::Ssim => "ssim",
            Metric::Uiqm => "uiqm",
            Metric::Uciqe => "uciqe",
        }
    }

    pub fn needs_reference(self) -> bool {
        matches!(self, Metric::Psnr | Metric::Ssim)
    }

    /// Parses a comma-separated list such as `psnr,ssim`.
    pub fn parse_list(s: &str) -> Result<Vec<Metric>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: Metric = part.parse()?;
            if out.contains(&m) {
                return Err(Error::Parameter(format!("metric `{part}` listed twice")));
            }
            out.push(m);
        }
        if out.is_empty() {
            return Err(Error::Parameter("no metrics requested".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown metric `{s}`")))
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedImage {
    /// File name; pairing uses its stem.
    pub name: String,
    pub image: ImageTensor,
}

impl NamedImage {
    pub fn new(name: impl Into<String>, image: ImageTensor) -> Self {
        Self {
            name: name.into(),
            image,
        }
    }

    pub fn stem(&self) -> String {
        Path::new(&self.name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.name.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub image: String,
    /// Aligned with [`MetricReport::metrics`].
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRole {
    Test,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedImage {
    pub image: String,
    pub role: ImageRole,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub metrics: Vec<Metric>,
    /// Sorted by image name.
    pub rows: Vec<MetricRow>,
    pub aggregate: Vec<f64>,
    pub skipped: Vec<SkippedImage>,
    pub notes: Vec<String>,
}

impl MetricReport {
    pub fn value(&self, row: usize, metric: Metric) -> Option<f64> {
        let col = self.metrics.iter().position(|&m| m == metric)?;
        self.rows.get(row).map(|r| r.values[col])
    }

    pub fn aggregate_of(&self, metric: Metric) -> Option<f64> {
        let col = self.metrics.iter().position(|&m| m == metric)?;
        Some(self.aggregate[col])
    }
}

fn score(
    test: &ImageTensor,
    reference: Option<&ImageTensor>,
    metrics: &[Metric],
    w: &AblWeights,
) -> Result<Vec<f64>> {
    metrics
        .iter()
        .map(|m| match (m, reference) {
            (Metric::Psnr, Some(r)) => psnr(test, r),
            (Metric::Ssim, Some(r)) => ssim(test, r),
            (Metric::Uiqm, _) => uiqm(test, w),
            (Metric::Uciqe, _) => uciqe(test),
            (m, None) => Err(Error::Input(format!("{m} needs a reference image"))),
        })
        .collect()
}

/// Scores every test image. Reference metrics pair images by file stem;
/// unpaired or failing images are listed in `skipped`.
pub fn evaluate(
    refs: Option<&[NamedImage]>,
    tests: &[NamedImage],
    metrics: &[Metric],
    w: &AblWeights,
) -> Result<MetricReport> {
    if tests.is_empty() {
        return Err(Error::Input("no test images".into()));
    }
    if metrics.is_empty() {
        return Err(Error::Parameter("no metrics requested".into()));
    }
    w.validate()?;
    let paired = metrics.iter().any(|m| m.needs_reference());
    let mut skipped = Vec::new();
    let mut jobs: Vec<(&NamedImage, Option<&ImageTensor>)> = Vec::new();

    if paired {
        let Some(refs) = refs else {
            return Err(Error::Input(
                "reference metrics requested without reference images".into(),
            ));
        };
        let by_stem: BTreeMap<String, &NamedImage> = refs.iter().map(|r| (r.stem(), r)).collect();
        let test_stems: Vec<String> = tests.iter().map(NamedImage::stem).collect();
        for (t, stem) in tests.iter().zip(&test_stems) {
            match by_stem.get(stem) {
                Some(r) => jobs.push((t, Some(&r.image))),
                None => skipped.push(SkippedImage {
                    image: t.name.clone(),
                    role: ImageRole::Test,
                    reason: "no reference with the same stem".into(),
                }),
            }
        }
        for r in refs {
            if !test_stems.contains(&r.stem()) {
                skipped.push(SkippedImage {
                    image: r.name.clone(),
                    role: ImageRole::Reference,
                    reason: "reference without a test image".into(),
                });
            }
        }
        if jobs.is_empty() {
            return Err(Error::Input("no test image pairs with a reference".into()));
        }
    } else {
        jobs.extend(tests.iter().map(|t| (t, None)));
    }
    jobs.sort_by(|a, b| a.0.name.cmp(&b.0.name));

    let results: Vec<(String, Result<Vec<f64>>)> = jobs
        .par_iter()
        .map(|(t, r)| (t.name.clone(), score(&t.image, *r, metrics, w)))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    for (image, res) in results {
        match res {
            Ok(values) => rows.push(MetricRow { image, values }),
            Err(e) => skipped.push(SkippedImage {
                image,
                role: ImageRole::Test,
                reason: e.to_string(),
            }),
        }
    }
    skipped.sort_by(|a, b| a.image.cmp(&b.image));
    if rows.is_empty() {
        return Err(Error::Input("every image failed to evaluate".into()));
    }
    let aggregate = (0..metrics.len())
        .map(|c| rows.iter().map(|r| r.values[c]).sum::<f64>() / rows.len() as f64)
        .collect();
    let mut notes = Vec::new();
    if metrics.contains(&Metric::Uciqe) {
        notes.push(format!("uciqe: {UCIQE_LABEL}"));
    }
    Ok(MetricReport {
        metrics: metrics.to_vec(),
        rows,
        aggregate,
        skipped,
        notes,
    })
}
