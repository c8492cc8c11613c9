//! Central-difference gradients of the AbL components with respect to
//! individual pixels, plus the diagnostics built on them: step-halving
//! consistency and the pairwise gradient-angle matrix.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{abl, edge_maps, to_metric_domain, AblBreakdown, AblWeights};
use crate::error::{param_err, Error, Result};
use crate::tensor::{block_partition_plane, opponent_channels, trim_count, ImageTensor};

/// Relative tolerance for two step sizes to be considered consistent.
pub const STEP_REL_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Coi,
    Si,
    Cti,
    Abl,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Coi,
        Component::Si,
        Component::Cti,
        Component::Abl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Coi => "coi",
            Component::Si => "si",
            Component::Cti => "cti",
            Component::Abl => "abl",
        }
    }

    pub fn of(self, b: &AblBreakdown) -> f64 {
        match self {
            Component::Coi => b.l_coi,
            Component::Si => b.l_si,
            Component::Cti => b.l_cti,
            Component::Abl => b.abl,
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coi" => Ok(Component::Coi),
            "si" => Ok(Component::Si),
            "cti" => Ok(Component::Cti),
            "abl" => Ok(Component::Abl),
            other => param_err(format!("unknown component `{other}` (coi|si|cti|abl)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PixelSample {
    pub y: usize,
    pub x: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientSample {
    pub y: usize,
    pub x: usize,
    pub channel: usize,
    pub value: f64,
}

/// Derivatives of every component at one (pixel, channel).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentGradient {
    pub y: usize,
    pub x: usize,
    pub channel: usize,
    pub coi: f64,
    pub si: f64,
    pub cti: f64,
    pub abl: f64,
}

impl ComponentGradient {
    pub fn get(&self, component: Component) -> f64 {
        match component {
            Component::Coi => self.coi,
            Component::Si => self.si,
            Component::Cti => self.cti,
            Component::Abl => self.abl,
        }
    }
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 0.5) {
        return param_err(format!(
            "finite-difference step must lie in (0, 0.5), got {h}"
        ));
    }
    Ok(())
}

fn check_sample(img: &ImageTensor, p: PixelSample, h: f64) -> Result<()> {
    if p.y >= img.height() || p.x >= img.width() {
        return param_err(format!(
            "pixel ({}, {}) outside {}x{} image",
            p.y,
            p.x,
            img.height(),
            img.width()
        ));
    }
    for c in 0..img.channels() {
        let v = img.get(c, p.y, p.x);
        if v - h < 0.0 || v + h > 1.0 {
            return param_err(format!(
                "pixel ({}, {}) channel {c} value {v} is within {h} of the clamp bounds",
                p.y, p.x
            ));
        }
    }
    Ok(())
}

fn perturbed(img: &ImageTensor, p: PixelSample, c: usize, delta: f64) -> ImageTensor {
    let mut out = img.clone();
    let v = out.get(c, p.y, p.x);
    out.set(c, p.y, p.x, v + delta);
    out
}

/// Central differences of all components at every sampled pixel and channel,
/// ordered by (sample, channel).
pub fn breakdown_gradient(
    img: &ImageTensor,
    w: &AblWeights,
    pixels: &[PixelSample],
    h: f64,
) -> Result<Vec<ComponentGradient>> {
    check_step(h)?;
    w.validate()?;
    for &p in pixels {
        check_sample(img, p, h)?;
    }
    let jobs: Vec<(PixelSample, usize)> = pixels
        .iter()
        .flat_map(|&p| (0..img.channels()).map(move |c| (p, c)))
        .collect();
    jobs.par_iter()
        .map(|&(p, c)| {
            let plus = abl(&perturbed(img, p, c, h), w)?;
            let minus = abl(&perturbed(img, p, c, -h), w)?;
            let d = |comp: Component| (comp.of(&plus) - comp.of(&minus)) / (2.0 * h);
            Ok(ComponentGradient {
                y: p.y,
                x: p.x,
                channel: c,
                coi: d(Component::Coi),
                si: d(Component::Si),
                cti: d(Component::Cti),
                abl: d(Component::Abl),
            })
        })
        .collect()
}

pub fn numerical_gradient(
    img: &ImageTensor,
    w: &AblWeights,
    component: Component,
    pixels: &[PixelSample],
    h: f64,
) -> Result<Vec<GradientSample>> {
    Ok(breakdown_gradient(img, w, pixels, h)?
        .into_iter()
        .map(|g| GradientSample {
            y: g.y,
            x: g.x,
            channel: g.channel,
            value: g.get(component),
        })
        .collect())
}

/// Up to `count` distinct pixels whose every channel lies in `[h, 1 - h]`,
/// chosen by a seeded shuffle and returned in raster order.
pub fn interior_pixels(img: &ImageTensor, h: f64, count: usize, seed: u64) -> Vec<PixelSample> {
    let mut candidates: Vec<PixelSample> = (0..img.height())
        .flat_map(|y| (0..img.width()).map(move |x| PixelSample { y, x }))
        .filter(|p| {
            (0..img.channels()).all(|c| {
                let v = img.get(c, p.y, p.x);
                v >= h && v <= 1.0 - h
            })
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates.truncate(count);
    candidates.sort();
    candidates
}

/// Discrete structure an AbL evaluation depends on: which opponent samples the
/// trim discards and where every block attains its extrema.
#[derive(Debug, PartialEq)]
struct Structure {
    trimmed: Vec<Vec<usize>>,
    edge_extrema: Vec<(usize, usize)>,
    luma_extrema: Vec<(usize, usize, bool)>,
}

fn dropped_indices(values: &[f64], trim: f64) -> Result<Vec<usize>> {
    let k = trim_count(values.len(), trim)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut low = order[..k].to_vec();
    let mut high = order[order.len() - k..].to_vec();
    low.sort_unstable();
    high.sort_unstable();
    low.push(usize::MAX);
    low.extend(high);
    Ok(low)
}

fn structure(img: &ImageTensor, w: &AblWeights) -> Result<Structure> {
    let scaled = to_metric_domain(img);
    let (h, wd) = (img.height(), img.width());
    let (rg, yb) = opponent_channels(&scaled)?;
    let trimmed = vec![
        dropped_indices(rg.data(), w.trim)?,
        dropped_indices(yb.data(), w.trim)?,
    ];
    let [k1, k2] = w.eme_blocks;
    let mut edge_extrema = Vec::new();
    for map in edge_maps(&scaled, w)? {
        for b in block_partition_plane(&map, h, wd, k1, k2)? {
            edge_extrema.push((b.argmin, b.argmax));
        }
    }
    let [k1, k2] = w.cti_blocks;
    let luma = scaled.luminance()?;
    let luma_extrema = block_partition_plane(&luma, h, wd, k1, k2)?
        .iter()
        .map(|b| (b.argmin, b.argmax, b.max - b.min > w.epsilon))
        .collect();
    Ok(Structure {
        trimmed,
        edge_extrema,
        luma_extrema,
    })
}

/// True when nudging `channel` at `p` by `±h` changes neither the trimmed sets
/// nor any block extremum, so the components are smooth along that axis.
pub fn is_tie_free(
    img: &ImageTensor,
    w: &AblWeights,
    p: PixelSample,
    channel: usize,
    h: f64,
) -> Result<bool> {
    check_step(h)?;
    check_sample(img, p, h)?;
    let base = structure(img, w)?;
    Ok(structure(&perturbed(img, p, channel, h), w)? == base
        && structure(&perturbed(img, p, channel, -h), w)? == base)
}

pub fn steps_agree(coarse: f64, fine: f64) -> bool {
    (coarse - fine).abs() <= STEP_REL_TOL * coarse.abs().max(fine.abs()) + 1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepCheck {
    pub y: usize,
    pub x: usize,
    pub channel: usize,
    pub coarse: f64,
    pub fine: f64,
    /// `fine / coarse`, absent when the coarse estimate is zero.
    pub ratio: Option<f64>,
    pub tie_free: bool,
    pub agree: bool,
}

/// Compares estimates at two step sizes for one component.
pub fn step_consistency(
    img: &ImageTensor,
    w: &AblWeights,
    component: Component,
    pixels: &[PixelSample],
    h_coarse: f64,
    h_fine: f64,
) -> Result<Vec<StepCheck>> {
    if !(h_fine < h_coarse) {
        return param_err("fine step must be smaller than the coarse step");
    }
    let coarse = numerical_gradient(img, w, component, pixels, h_coarse)?;
    let fine = numerical_gradient(img, w, component, pixels, h_fine)?;
    coarse
        .par_iter()
        .zip(&fine)
        .map(|(c, f)| {
            let tie_free =
                is_tie_free(img, w, PixelSample { y: c.y, x: c.x }, c.channel, h_coarse)?;
            Ok(StepCheck {
                y: c.y,
                x: c.x,
                channel: c.channel,
                coarse: c.value,
                fine: f.value,
                ratio: (c.value != 0.0).then(|| f.value / c.value),
                tie_free,
                agree: steps_agree(c.value, f.value),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientAngleReport {
    pub components: [Component; 3],
    /// Pairwise cosine similarities; `None` where a gradient has zero norm.
    pub cosine: [[Option<f64>; 3]; 3],
    pub norms: [f64; 3],
}

/// Cosine similarities between the sampled gradient vectors of the colour,
/// sharpness and contrast indices.
pub fn gradient_angle_report(
    img: &ImageTensor,
    w: &AblWeights,
    pixels: &[PixelSample],
    h: f64,
) -> Result<GradientAngleReport> {
    if pixels.is_empty() {
        return Err(Error::Input(
            "gradient angle report needs at least one sample".into(),
        ));
    }
    let grads = breakdown_gradient(img, w, pixels, h)?;
    let components = [Component::Coi, Component::Si, Component::Cti];
    let vectors: Vec<Vec<f64>> = components
        .iter()
        .map(|&c| grads.iter().map(|g| g.get(c)).collect())
        .collect();
    let norms: Vec<f64> = vectors
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut cosine = [[None; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let dot: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
            let cos = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            cosine[i][j] = Some(cos);
            cosine[j][i] = Some(cos);
        }
    }
    Ok(GradientAngleReport {
        components,
        cosine,
        norms: [norms[0], norms[1], norms[2]],
    })
}
