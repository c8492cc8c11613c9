//! AquaBalance loss family.
//!
//! `AbL = c1·L_coi + c2·L_si + c3·L_cti` scores an RGB image by colour
//! balance, edge sharpness and block contrast. The loss compares the score of
//! an output against a reference: `|AbL_out - AbL_ref + λ_imp|²`.
//!
//! All three indices work on pixels rescaled from `[0, 1]` to `[0, 255]`; the
//! coefficient sets were fitted on 8-bit data.

mod gradient;

pub use gradient::{
    breakdown_gradient, gradient_angle_report, interior_pixels, is_tie_free, numerical_gradient,
    step_consistency, steps_agree, Component, ComponentGradient, GradientAngleReport,
    GradientSample, PixelSample, StepCheck, STEP_REL_TOL,
};

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::jdpnet::PgParams;
use crate::tensor::{
    self, alpha_trimmed_mean, alpha_trimmed_variance, opponent_channels, sobel_magnitude,
    ImageTensor,
};

/// Pixel values are multiplied by this before any index is computed.
pub const METRIC_SCALE: f64 = 255.0;

const COLOR_MEAN_COEF: f64 = -0.027;
const COLOR_SPREAD_COEF: f64 = 0.159;

/// What the sharpness index measures per channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMap {
    /// Sobel magnitude multiplied by the channel intensity.
    #[default]
    EdgeWeighted,
    /// Raw Sobel magnitude.
    Sobel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblWeights {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub lambda_imp: f64,
    /// Fraction trimmed from each tail for the colour statistics.
    pub trim: f64,
    /// Per-channel weights of the sharpness sum (R, G, B).
    pub channel_weights: [f64; 3],
    pub eme_blocks: [usize; 2],
    pub cti_blocks: [usize; 2],
    pub alpha_entropy: f64,
    /// Guard for logs and divisions, in 8-bit intensity units.
    pub epsilon: f64,
    pub edge_map: EdgeMap,
}

impl Default for AblWeights {
    fn default() -> Self {
        Self {
            c1: 0.029,
            c2: 0.295,
            c3: 3.550,
            lambda_imp: 0.0,
            trim: 0.1,
            channel_weights: tensor::LUMA_WEIGHTS,
            eme_blocks: [8, 8],
            cti_blocks: [8, 8],
            alpha_entropy: 1.0,
            epsilon: 1.0,
            edge_map: EdgeMap::EdgeWeighted,
        }
    }
}

impl AblWeights {
    /// Defaults with the three component coefficients replaced.
    pub fn with_coefficients(c1: f64, c2: f64, c3: f64) -> Self {
        Self {
            c1,
            c2,
            c3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("lambda_imp", self.lambda_imp),
        ] {
            if !v.is_finite() {
                return param_err(format!("{name} must be finite, got {v}"));
            }
        }
        if !(0.0..0.5).contains(&self.trim) {
            return param_err(format!("trim must lie in [0, 0.5), got {}", self.trim));
        }
        if !(self.alpha_entropy > 0.0 && self.alpha_entropy.is_finite()) {
            return param_err(format!(
                "alpha_entropy must be positive, got {}",
                self.alpha_entropy
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return param_err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self
            .channel_weights
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return param_err("channel_weights must be finite and non-negative");
        }
        for (name, [k1, k2]) in [
            ("eme_blocks", self.eme_blocks),
            ("cti_blocks", self.cti_blocks),
        ] {
            if k1 == 0 || k2 == 0 {
                return param_err(format!("{name} must be at least 1x1"));
            }
        }
        Ok(())
    }
}

/// Every intermediate of one AbL evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblBreakdown {
    pub l_coi: f64,
    pub l_si: f64,
    pub l_cti: f64,
    pub abl: f64,
    /// Magnitude of the trimmed opponent means.
    pub l: f64,
    /// Magnitude of the trimmed opponent spreads.
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorIndex {
    pub l_coi: f64,
    pub l: f64,
    pub r: f64,
}

fn ensure_rgb(img: &ImageTensor) -> Result<()> {
    if img.channels() != 3 {
        return dim_err(format!(
            "expected a 3-channel image, got {}",
            img.channels()
        ));
    }
    Ok(())
}

fn to_metric_domain(img: &ImageTensor) -> ImageTensor {
    img.map(|v| v * METRIC_SCALE)
}

pub fn color_index(img: &ImageTensor, w: &AblWeights) -> Result<ColorIndex> {
    ensure_rgb(img)?;
    color_index_scaled(&to_metric_domain(img), w)
}

fn color_index_scaled(scaled: &ImageTensor, w: &AblWeights) -> Result<ColorIndex> {
    let (rg, yb) = opponent_channels(scaled)?;
    let mu_rg = alpha_trimmed_mean(rg.data(), w.trim)?;
    let mu_yb = alpha_trimmed_mean(yb.data(), w.trim)?;
    let s_rg = alpha_trimmed_variance(rg.data(), w.trim)?;
    let s_yb = alpha_trimmed_variance(yb.data(), w.trim)?;
    let l = (mu_rg * mu_rg + mu_yb * mu_yb).sqrt();
    let r = (s_rg + s_yb).sqrt();
    Ok(ColorIndex {
        l_coi: COLOR_MEAN_COEF * l + COLOR_SPREAD_COEF * r,
        l,
        r,
    })
}

/// Per-channel edge maps in the metric domain.
pub(crate) fn edge_maps(scaled: &ImageTensor, w: &AblWeights) -> Result<Vec<Vec<f64>>> {
    let sobel = sobel_magnitude(scaled)?;
    Ok((0..scaled.channels())
        .map(|c| match w.edge_map {
            EdgeMap::EdgeWeighted => sobel
                .channel(c)
                .iter()
                .zip(scaled.channel(c))
                .map(|(s, v)| s * v)
                .collect(),
            EdgeMap::Sobel => sobel.channel(c).to_vec(),
        })
        .collect())
}

pub fn sharpness_index(img: &ImageTensor, w: &AblWeights) -> Result<f64> {
    ensure_rgb(img)?;
    sharpness_index_scaled(&to_metric_domain(img), w)
}

fn sharpness_index_scaled(scaled: &ImageTensor, w: &AblWeights) -> Result<f64> {
    let (h, wd) = (scaled.height(), scaled.width());
    let [k1, k2] = w.eme_blocks;
    let maps = edge_maps(scaled, w)?;
    let mut total = 0.0;
    for (map, lambda) in maps.iter().zip(w.channel_weights) {
        let blocks = tensor::block_partition_plane(map, h, wd, k1, k2)?;
        let sum: f64 = blocks
            .iter()
            .map(|b| ((b.max + w.epsilon) / (b.min + w.epsilon)).ln())
            .sum();
        total += lambda * 2.0 / (k1 * k2) as f64 * sum;
    }
    Ok(total)
}

pub fn contrast_index(img: &ImageTensor, w: &AblWeights) -> Result<f64> {
    ensure_rgb(img)?;
    contrast_index_scaled(&to_metric_domain(img), w)
}

fn contrast_index_scaled(scaled: &ImageTensor, w: &AblWeights) -> Result<f64> {
    let luma = scaled.luminance()?;
    let [k1, k2] = w.cti_blocks;
    let blocks = tensor::block_partition_plane(&luma, scaled.height(), scaled.width(), k1, k2)?;
    let alpha = w.alpha_entropy;
    let sum: f64 = blocks
        .iter()
        .map(|b| {
            let top = b.max - b.min;
            if top <= w.epsilon {
                return 0.0;
            }
            let ratio = top / (b.max + b.min);
            alpha * ratio.powf(alpha) * ratio.ln()
        })
        .sum();
    Ok(0.0 - sum / (k1 * k2) as f64)
}

pub fn abl(img: &ImageTensor, w: &AblWeights) -> Result<AblBreakdown> {
    ensure_rgb(img)?;
    w.validate()?;
    let scaled = to_metric_domain(img);
    let color = color_index_scaled(&scaled, w)?;
    let l_si = sharpness_index_scaled(&scaled, w)?;
    let l_cti = contrast_index_scaled(&scaled, w)?;
    Ok(AblBreakdown {
        l_coi: color.l_coi,
        l_si,
        l_cti,
        abl: w.c1 * color.l_coi + w.c2 * l_si + w.c3 * l_cti,
        l: color.l,
        r: color.r,
    })
}

/// `|AbL(out) - AbL(reference) + λ_imp|²`
pub fn aqua_balance_loss(
    out: &ImageTensor,
    reference: &ImageTensor,
    w: &AblWeights,
) -> Result<f64> {
    let d = abl(out, w)?.abl - abl(reference, w)?.abl + w.lambda_imp;
    Ok(d * d)
}

/// KL divergence `KL(N(mu_p, sigma_p²) ‖ N(mu_q, sigma_q²))` between diagonal Gaussians.
pub fn kl_diag_gaussian(
    mu_p: &[f64],
    sigma_p: &[f64],
    mu_q: &[f64],
    sigma_q: &[f64],
) -> Result<f64> {
    let n = mu_p.len();
    if sigma_p.len() != n || mu_q.len() != n || sigma_q.len() != n {
        return dim_err("kl_diag_gaussian: parameter vectors differ in length");
    }
    if sigma_p
        .iter()
        .chain(sigma_q)
        .any(|s| !(*s > 0.0) || !s.is_finite())
    {
        return param_err("kl_diag_gaussian: standard deviations must be positive");
    }
    Ok((0..n)
        .map(|i| {
            let (sp, sq) = (sigma_p[i], sigma_q[i]);
            let dm = mu_p[i] - mu_q[i];
            (sq / sp).ln() + (sp * sp + dm * dm) / (2.0 * sq * sq) - 0.5
        })
        .sum())
}

/// KL of both PG distributions against a standard-normal prior.
pub fn pg_kl(pg: &PgParams) -> Result<f64> {
    let zeros = vec![0.0; pg.a.len()];
    let ones = vec![1.0; pg.a.len()];
    Ok(kl_diag_gaussian(&pg.a, &pg.m, &zeros, &ones)?
        + kl_diag_gaussian(&pg.b, &pg.n, &zeros, &ones)?)
}

/// Mean absolute error.
pub fn reconstruction_loss(out: &ImageTensor, gt: &ImageTensor) -> Result<f64> {
    out.ensure_same_shape(gt)?;
    let sum: f64 = out
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / out.data().len() as f64)
}

/// Which image the AquaBalance term of the composite loss is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblReference {
    #[default]
    GroundTruth,
    DegradedInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub abl_reference: AblReference,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.025,
            lambda2: 1.0,
            lambda3: 0.1,
            lambda4: 0.1,
            abl_reference: AblReference::GroundTruth,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ] {
            if !v.is_finite() {
                return param_err(format!("{name} must be finite, got {v}"));
            }
        }
        Ok(())
    }
}

/// Feature-space perceptual distance (e.g. a pretrained VGG16 comparison),
/// supplied by the caller.
pub trait PerceptualLoss: Send + Sync {
    fn perceptual_loss(&self, output: &ImageTensor, target: &ImageTensor) -> Result<f64>;
}

pub struct CompositeInputs<'a> {
    pub output: &'a ImageTensor,
    pub ground_truth: &'a ImageTensor,
    /// Needed only when [`LossWeights::abl_reference`] is `DegradedInput`.
    pub degraded: Option<&'a ImageTensor>,
    pub pg: &'a PgParams,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub perceptual: f64,
    pub kl: f64,
    pub reconstruction: f64,
    pub aqua_balance: f64,
    pub total: f64,
    pub weights: LossWeights,
}

pub fn composite_loss(
    inputs: &CompositeInputs<'_>,
    lw: &LossWeights,
    w: &AblWeights,
    perceptual: Option<&dyn PerceptualLoss>,
) -> Result<LossBreakdown> {
    lw.validate()?;
    let reference = match lw.abl_reference {
        AblReference::GroundTruth => inputs.ground_truth,
        AblReference::DegradedInput => inputs.degraded.ok_or_else(|| {
            Error::Parameter("abl_reference = degraded_input but no degraded image given".into())
        })?,
    };
    let perceptual = match perceptual {
        Some(p) => p.perceptual_loss(inputs.output, inputs.ground_truth)?,
        None => 0.0,
    };
    let kl = pg_kl(inputs.pg)?;
    let reconstruction = reconstruction_loss(inputs.output, inputs.ground_truth)?;
    let aqua_balance = aqua_balance_loss(inputs.output, reference, w)?;
    let total = lw.lambda1 * perceptual
        + lw.lambda2 * kl
        + lw.lambda3 * reconstruction
        + lw.lambda4 * aqua_balance;
    Ok(LossBreakdown {
        perceptual,
        kl,
        reconstruction,
        aqua_balance,
        total,
        weights: lw.clone(),
    })
}
