//! Feature post-processing: gray-world correction, a border enhancement mask
//! built from a Gaussian high-pass, and the pivot blend.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Result};
use crate::jdpnet::NetworkWeights;
use crate::tensor::{conv2d, gaussian_blur, global_avg_pool, ImageTensor, Padding};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FppConfig {
    /// Gaussian scale of the low-pass, in pixels.
    pub omega: f64,
    /// Mask pivot and intensity, in `(0, 1)`.
    pub lambda_bem: f64,
    /// Target gray level; the mean of the channel means when absent.
    pub target_gray: Option<f64>,
    /// Channels whose mean magnitude is at most this pass through uncorrected.
    pub epsilon: f64,
}

impl Default for FppConfig {
    fn default() -> Self {
        Self {
            omega: 1.5,
            lambda_bem: 0.5,
            target_gray: None,
            epsilon: 1e-6,
        }
    }
}

impl FppConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return param_err(format!("omega must be positive, got {}", self.omega));
        }
        if !(self.lambda_bem > 0.0 && self.lambda_bem < 1.0) {
            return param_err(format!(
                "lambda_bem must lie in (0, 1), got {}",
                self.lambda_bem
            ));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return param_err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if let Some(g) = self.target_gray {
            if !g.is_finite() {
                return param_err("target_gray must be finite");
            }
        }
        Ok(())
    }
}

/// What [`gray_world_correct_with_report`] did to each channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrayWorldReport {
    pub target: f64,
    pub channel_means: Vec<f64>,
    /// Applied factors; 1 for pass-through channels.
    pub scales: Vec<f64>,
    /// Channels left untouched because their mean was too close to zero.
    pub passthrough: Vec<usize>,
}

/// Average of the channel means, pivoted on the first so equal means give
/// that mean back exactly.
fn mean_of(values: &[f64]) -> f64 {
    let pivot = values[0];
    pivot + values.iter().map(|v| v - pivot).sum::<f64>() / values.len() as f64
}

pub fn gray_world_correct_with_report(
    x: &ImageTensor,
    cfg: &FppConfig,
) -> Result<(ImageTensor, GrayWorldReport)> {
    cfg.validate()?;
    let means = global_avg_pool(x);
    let target = cfg.target_gray.unwrap_or_else(|| mean_of(&means));
    let mut out = x.clone();
    let mut scales = Vec::with_capacity(means.len());
    let mut passthrough = Vec::new();
    for (c, &m) in means.iter().enumerate() {
        if m.abs() <= cfg.epsilon {
            passthrough.push(c);
            scales.push(1.0);
            continue;
        }
        let s = target / m;
        out.channel_mut(c).iter_mut().for_each(|v| *v *= s);
        scales.push(s);
    }
    Ok((
        out,
        GrayWorldReport {
            target,
            channel_means: means,
            scales,
            passthrough,
        },
    ))
}

/// Scales each channel so its mean equals the target gray level.
pub fn gray_world_correct(x: &ImageTensor, cfg: &FppConfig) -> Result<ImageTensor> {
    Ok(gray_world_correct_with_report(x, cfg)?.0)
}

/// `F3 − blur(F3, ω) + λ`
pub fn compute_bem(f3: &ImageTensor, cfg: &FppConfig) -> Result<ImageTensor> {
    cfg.validate()?;
    let lambda = cfg.lambda_bem;
    f3.zip_map(&gaussian_blur(f3, cfg.omega)?, |x, lo| x - lo + lambda)
}

/// Pivot blend of a value `f` with mask value `b`.
///
/// Below the pivot this is `f·b/λ`; otherwise `1 − (1−f)(1−b)/λ`, evaluated as
/// `f + (1−f)(b − (1−λ))/λ` so that `b = λ = 0.5` returns `f` exactly.
#[inline]
pub fn blend_scalar(f: f64, b: f64, lambda: f64) -> f64 {
    if b < lambda {
        f * b / lambda
    } else {
        f + (1.0 - f) * (b - (1.0 - lambda)) / lambda
    }
}

pub fn bem_blend(f3: &ImageTensor, bem: &ImageTensor, cfg: &FppConfig) -> Result<ImageTensor> {
    cfg.validate()?;
    if f3.shape() != bem.shape() {
        return dim_err(format!(
            "blend shapes differ: {:?} vs {:?}",
            f3.shape(),
            bem.shape()
        ));
    }
    let lambda = cfg.lambda_bem;
    f3.zip_map(bem, |f, b| blend_scalar(f, b, lambda))
}

fn post_process(x: &ImageTensor, cfg: &FppConfig) -> Result<ImageTensor> {
    let f3 = gray_world_correct(x, cfg)?;
    let bem = compute_bem(&f3, cfg)?;
    bem_blend(&f3, &bem, cfg)
}

/// Correction and blend on `F2`, then the 3-channel output conv and a clamp.
pub fn fpp_forward(f2: &ImageTensor, w: &NetworkWeights, cfg: &FppConfig) -> Result<ImageTensor> {
    let head = w.layer("fpp.out")?;
    if head.in_channels() != f2.channels() {
        return dim_err(format!(
            "output conv expects {} channels, got {}",
            head.in_channels(),
            f2.channels()
        ));
    }
    let fp = post_process(f2, cfg)?;
    Ok(conv2d(&fp, head, Padding::Same)?.clamp01())
}

/// The same correction and blend applied directly to an RGB image, without
/// any learned layer.
pub fn fpp_enhance_image(img: &ImageTensor, cfg: &FppConfig) -> Result<ImageTensor> {
    if img.channels() != 3 {
        return dim_err(format!(
            "expected an RGB image, got {} channels",
            img.channels()
        ));
    }
    Ok(post_process(img, cfg)?.clamp01())
}
