//! Forward-only enhancement network: joint feature extractor, probabilistic
//! statistics guidance with AdaIN restyling, and the post-processing head.

mod weights;

pub use weights::{
    architecture, ese_hidden, init_weights, inspect_container, ContainerReport, LayerInfo,
    LayerSpec, Manifest, ManifestEntry, NetworkWeights, DEFAULT_CHANNEL_WIDTH, FORMAT_NAME,
    FORMAT_VERSION, MANIFEST_FILE, PAYLOAD_FILE,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Result};
use crate::fpp::{fpp_forward, FppConfig};
use crate::tensor::{
    channel_stats, concat_channels, conv2d, elu, global_avg_pool, max_pool2, sigmoid_scalar,
    softplus_scalar, upsample2, ConvKernel, ImageTensor, Padding,
};

/// Guard added to the content standard deviation in [`adain`].
pub const ADAIN_EPSILON: f64 = 1e-8;

/// Softplus floored at the smallest normal float, so scales stay strictly
/// positive when the pre-activation is very negative.
fn positive(v: f64) -> f64 {
    softplus_scalar(v).max(f64::MIN_POSITIVE)
}

/// Parameters of the two diagonal Gaussians produced by the PG stage.
/// `m` and `n` are already positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgParams {
    pub a: Vec<f64>,
    pub m: Vec<f64>,
    pub b: Vec<f64>,
    pub n: Vec<f64>,
}

impl PgParams {
    pub fn new(a: Vec<f64>, m: Vec<f64>, b: Vec<f64>, n: Vec<f64>) -> Result<Self> {
        let len = a.len();
        if m.len() != len || b.len() != len || n.len() != len {
            return dim_err("PgParams vectors must have equal lengths");
        }
        if m.iter().chain(&n).any(|s| !(*s > 0.0) || !s.is_finite()) {
            return param_err("PgParams m and n must be positive and finite");
        }
        Ok(Self { a, m, b, n })
    }

    /// Two standard normals of dimension `len`.
    pub fn standard_normal(len: usize) -> Self {
        Self {
            a: vec![0.0; len],
            m: vec![1.0; len],
            b: vec![0.0; len],
            n: vec![1.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PgMode {
    /// Use the distribution means.
    #[default]
    Deterministic,
    /// Draw once from each distribution with a ChaCha8 stream.
    Sampled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgOutput {
    pub params: PgParams,
    pub mu_opt: Vec<f64>,
    pub sigma_opt: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JfeOutput {
    pub f1: ImageTensor,
    /// Pre-pool encoder maps, shallowest first.
    pub skips: Vec<ImageTensor>,
    pub bottleneck: ImageTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PbOutput {
    pub f2: ImageTensor,
    pub pg: PgOutput,
}

/// Weights of one ESE residual block.
#[derive(Debug, Clone, Copy)]
pub struct ResBlockWeights<'a> {
    pub conv1: &'a ConvKernel,
    pub conv2: &'a ConvKernel,
    pub fc1: &'a ConvKernel,
    pub fc2: &'a ConvKernel,
}

impl<'a> ResBlockWeights<'a> {
    /// Looks up `{prefix}.conv1`, `{prefix}.conv2`, `{prefix}.ese.fc1`, `{prefix}.ese.fc2`.
    pub fn from_network(w: &'a NetworkWeights, prefix: &str) -> Result<Self> {
        Ok(Self {
            conv1: w.layer(&format!("{prefix}.conv1"))?,
            conv2: w.layer(&format!("{prefix}.conv2"))?,
            fc1: w.layer(&format!("{prefix}.ese.fc1"))?,
            fc2: w.layer(&format!("{prefix}.ese.fc2"))?,
        })
    }
}

/// Conv → ELU → (dropout, identity at inference) → Conv → ELU, then 2×2 max pool.
/// Returns `(pre_pool, pooled)`.
pub fn fe_block(
    x: &ImageTensor,
    conv1: &ConvKernel,
    conv2: &ConvKernel,
) -> Result<(ImageTensor, ImageTensor)> {
    let h = elu(&conv2d(x, conv1, Padding::Same)?);
    let pre = elu(&conv2d(&h, conv2, Padding::Same)?);
    let pooled = max_pool2(&pre)?;
    Ok((pre, pooled))
}

/// Channel gate `sigmoid(W2·ELU(W1·GAP(x)))`.
pub fn ese_gate(x: &ImageTensor, fc1: &ConvKernel, fc2: &ConvKernel) -> Result<Vec<f64>> {
    if fc2.out_channels() != x.channels() {
        return dim_err(format!(
            "ESE gate emits {} channels for a {}-channel input",
            fc2.out_channels(),
            x.channels()
        ));
    }
    let hidden: Vec<f64> = fc1
        .apply_to_vector(&global_avg_pool(x))?
        .into_iter()
        .map(crate::tensor::elu_scalar)
        .collect();
    Ok(fc2
        .apply_to_vector(&hidden)?
        .into_iter()
        .map(sigmoid_scalar)
        .collect())
}

pub fn ese_layer(x: &ImageTensor, fc1: &ConvKernel, fc2: &ConvKernel) -> Result<ImageTensor> {
    let gate = ese_gate(x, fc1, fc2)?;
    let mut out = x.clone();
    for (c, g) in gate.iter().enumerate() {
        out.channel_mut(c).iter_mut().for_each(|v| *v *= g);
    }
    Ok(out)
}

/// `ESE(Conv(ELU(Conv(x)))) + x`
pub fn ese_resblock(x: &ImageTensor, w: &ResBlockWeights) -> Result<ImageTensor> {
    if w.conv1.in_channels() != x.channels() || w.conv2.out_channels() != x.channels() {
        return dim_err(format!(
            "residual block maps {}→{} channels but input has {}",
            w.conv1.in_channels(),
            w.conv2.out_channels(),
            x.channels()
        ));
    }
    let h = elu(&conv2d(x, w.conv1, Padding::Same)?);
    let h = conv2d(&h, w.conv2, Padding::Same)?;
    ese_layer(&h, w.fc1, w.fc2)?.add(x)
}

fn decoder_stage(x: &ImageTensor, skip: &ImageTensor, conv: &ConvKernel) -> Result<ImageTensor> {
    let up = concat_channels(&upsample2(x), skip)?;
    Ok(elu(&conv2d(&up, conv, Padding::Same)?))
}

/// Encoder (three FE blocks and an ESE residual bottleneck at H/8×W/8) and
/// decoder (upsample, concatenate skip, fuse). `F1` has `2C` channels.
pub fn jfe_forward(img: &ImageTensor, w: &NetworkWeights) -> Result<JfeOutput> {
    let (c, h, wd) = img.shape();
    if c != 3 {
        return dim_err(format!("network input must have 3 channels, got {c}"));
    }
    if h % 8 != 0 || wd % 8 != 0 {
        return dim_err(format!("network input {h}x{wd} is not divisible by 8"));
    }
    let mut skips = Vec::with_capacity(3);
    let mut x = img.clone();
    for stage in 1..=3 {
        let (pre, pooled) = fe_block(
            &x,
            w.layer(&format!("jfe.enc{stage}.conv1"))?,
            w.layer(&format!("jfe.enc{stage}.conv2"))?,
        )?;
        skips.push(pre);
        x = pooled;
    }
    let bottleneck = ese_resblock(&x, &ResBlockWeights::from_network(w, "jfe.bottleneck")?)?;
    let mut y = bottleneck.clone();
    for stage in (1..=3).rev() {
        y = decoder_stage(
            &y,
            &skips[stage - 1],
            w.layer(&format!("jfe.dec{stage}.conv"))?,
        )?;
    }
    Ok(JfeOutput {
        f1: y,
        skips,
        bottleneck,
    })
}

/// Maps the channel statistics of `F1` to two Gaussians and extracts the
/// AdaIN targets from them.
pub fn pg_module(f1: &ImageTensor, w: &NetworkWeights, mode: PgMode) -> Result<PgOutput> {
    let stats = channel_stats(f1);
    let a = w.layer("pb.pg.mean_loc")?.apply_to_vector(&stats.means)?;
    let m: Vec<f64> = w
        .layer("pb.pg.mean_scale")?
        .apply_to_vector(&stats.means)?
        .into_iter()
        .map(positive)
        .collect();
    let b = w.layer("pb.pg.std_loc")?.apply_to_vector(&stats.stds)?;
    let n: Vec<f64> = w
        .layer("pb.pg.std_scale")?
        .apply_to_vector(&stats.stds)?
        .into_iter()
        .map(positive)
        .collect();
    if a.len() != f1.channels() {
        return dim_err(format!(
            "PG emits {} statistics for {} feature channels",
            a.len(),
            f1.channels()
        ));
    }
    let (mu_opt, sigma_opt) = match mode {
        PgMode::Deterministic => (a.clone(), b.iter().map(|&v| softplus_scalar(v)).collect()),
        PgMode::Sampled { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = |loc: &[f64], scale: &[f64]| -> Vec<f64> {
                loc.iter()
                    .zip(scale)
                    .map(|(l, s)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        l + s * z
                    })
                    .collect()
            };
            let mu = draw(&a, &m);
            let sigma = draw(&b, &n).into_iter().map(softplus_scalar).collect();
            (mu, sigma)
        }
    };
    Ok(PgOutput {
        params: PgParams::new(a, m, b, n)?,
        mu_opt,
        sigma_opt,
    })
}

/// Per channel: `σ_opt · (x − μ_x) / (σ_x + eps) + μ_opt`.
pub fn adain(
    content: &ImageTensor,
    mu_opt: &[f64],
    sigma_opt: &[f64],
    eps: f64,
) -> Result<ImageTensor> {
    let c = content.channels();
    if mu_opt.len() != c || sigma_opt.len() != c {
        return dim_err(format!(
            "AdaIN targets have lengths {}/{} for {c} channels",
            mu_opt.len(),
            sigma_opt.len()
        ));
    }
    if !(eps > 0.0) {
        return param_err("AdaIN epsilon must be positive");
    }
    if sigma_opt.iter().any(|s| !(*s >= 0.0)) {
        return param_err("AdaIN target standard deviations must be non-negative");
    }
    let stats = channel_stats(content);
    let mut out = content.clone();
    for ch in 0..c {
        let (mu, scale) = (stats.means[ch], sigma_opt[ch] / (stats.stds[ch] + eps));
        let target = mu_opt[ch];
        out.channel_mut(ch)
            .iter_mut()
            .for_each(|v| *v = (*v - mu) * scale + target);
    }
    Ok(out)
}

/// AdaIN restyle with the PG targets, then the PB residual block.
pub fn pb_forward(f1: &ImageTensor, w: &NetworkWeights, mode: PgMode) -> Result<PbOutput> {
    let pg = pg_module(f1, w, mode)?;
    let styled = adain(f1, &pg.mu_opt, &pg.sigma_opt, ADAIN_EPSILON)?;
    let f2 = ese_resblock(&styled, &ResBlockWeights::from_network(w, "pb.res")?)?;
    Ok(PbOutput { f2, pg })
}

/// Full pipeline; output has the input's shape with values in `[0, 1]`.
pub fn jdpnet_forward(
    img: &ImageTensor,
    w: &NetworkWeights,
    cfg: &FppConfig,
    mode: PgMode,
) -> Result<ImageTensor> {
    let jfe = jfe_forward(img, w)?;
    let pb = pb_forward(&jfe.f1, w, mode)?;
    fpp_forward(&pb.f2, w, cfg)
}
