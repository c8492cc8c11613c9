//! Dense `C×H×W` tensors and the numerical kernels the network, losses and
//! metrics are built on.
//!
//! Data is stored channel-major, row-major within each channel. Every kernel
//! here is a pure function of its inputs; parallel kernels split work by
//! output channel so results are bit-identical regardless of thread count.

mod conv;
mod filter;
mod robust;

pub use conv::{conv2d, ConvKernel, Padding};
pub use filter::{gaussian_blur, gaussian_kernel_1d, sobel_magnitude};
pub use robust::{
    alpha_trimmed_mean, alpha_trimmed_variance, block_partition, block_partition_plane,
    block_ranges, opponent_channels, trim_count, Block,
};

use crate::error::{dim_err, Result};

/// Luminance weights used wherever a single intensity plane is derived from RGB.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return dim_err(format!(
                "tensor dimensions must be positive, got {channels}x{height}x{width}"
            ));
        }
        if data.len() != channels * height * width {
            return dim_err(format!(
                "data length {} does not match {channels}x{height}x{width}",
                data.len()
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// # Panics
    /// Panics if any dimension is zero.
    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "empty tensor");
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    /// Builds a tensor by evaluating `f(c, y, x)` at every position.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut out = Self::zeros(channels, height, width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    out.data[(c * height + y) * width + x] = f(c, y, x);
                }
            }
        }
        out
    }

    /// Stacks single-plane buffers (each `height*width` long) into one tensor.
    pub fn from_planes(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(planes.len() * height * width);
        for (i, p) in planes.iter().enumerate() {
            if p.len() != height * width {
                return dim_err(format!(
                    "plane {i} has {} values, expected {}",
                    p.len(),
                    height * width
                ));
            }
            data.extend_from_slice(p);
        }
        Self::new(planes.len(), height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Copies channel `c` out as a single-channel tensor.
    pub fn channel_tensor(&self, c: usize) -> ImageTensor {
        ImageTensor {
            channels: 1,
            height: self.height,
            width: self.width,
            data: self.channel(c).to_vec(),
        }
    }

    /// Channels `start..end` as a new tensor.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<ImageTensor> {
        if start >= end || end > self.channels {
            return dim_err(format!(
                "channel range {start}..{end} invalid for {} channels",
                self.channels
            ));
        }
        let n = self.plane_len();
        ImageTensor::new(
            end - start,
            self.height,
            self.width,
            self.data[start * n..end * n].to_vec(),
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageTensor {
        ImageTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two equally shaped tensors.
    pub fn zip_map(&self, other: &ImageTensor, f: impl Fn(f64, f64) -> f64) -> Result<ImageTensor> {
        self.ensure_same_shape(other)?;
        Ok(ImageTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &ImageTensor) -> Result<ImageTensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ImageTensor) -> Result<ImageTensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn clamp01(&self) -> ImageTensor {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn ensure_same_shape(&self, other: &ImageTensor) -> Result<()> {
        if self.shape() != other.shape() {
            return dim_err(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            ));
        }
        Ok(())
    }

    /// Weighted sum of the three RGB planes using [`LUMA_WEIGHTS`].
    pub fn luminance(&self) -> Result<Vec<f64>> {
        if self.channels != 3 {
            return dim_err(format!("luminance needs 3 channels, got {}", self.channels));
        }
        let (r, g, b) = (self.channel(0), self.channel(1), self.channel(2));
        Ok(r.iter()
            .zip(g)
            .zip(b)
            .map(|((&r, &g), &b)| LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b)
            .collect())
    }
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Mean of a plane computed around its first sample, so a constant plane
/// yields that constant exactly.
fn shifted_mean(values: &[f64]) -> f64 {
    let pivot = values[0];
    let offset: f64 = values.iter().map(|&v| v - pivot).sum();
    pivot + offset / values.len() as f64
}

pub fn elu(x: &ImageTensor) -> ImageTensor {
    x.map(elu_scalar)
}

#[inline]
pub fn elu_scalar(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

pub fn sigmoid(x: &ImageTensor) -> ImageTensor {
    x.map(sigmoid_scalar)
}

#[inline]
pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus_scalar(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// 2×2 max pooling with stride 2. A trailing odd row or column is dropped.
pub fn max_pool2(input: &ImageTensor) -> Result<ImageTensor> {
    let (c, h, w) = input.shape();
    if h < 2 || w < 2 {
        return dim_err(format!("max_pool2 needs at least 2x2, got {h}x{w}"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = ImageTensor::zeros(c, oh, ow);
    for ch in 0..c {
        let src = input.channel(ch);
        let dst = out.channel_mut(ch);
        for y in 0..oh {
            let r0 = &src[2 * y * w..2 * y * w + w];
            let r1 = &src[(2 * y + 1) * w..(2 * y + 1) * w + w];
            for x in 0..ow {
                dst[y * ow + x] = r0[2 * x]
                    .max(r0[2 * x + 1])
                    .max(r1[2 * x])
                    .max(r1[2 * x + 1]);
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2(input: &ImageTensor) -> ImageTensor {
    let (c, h, w) = input.shape();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = ImageTensor::zeros(c, oh, ow);
    for ch in 0..c {
        let src = input.channel(ch);
        let dst = out.channel_mut(ch);
        for y in 0..oh {
            let row = &src[(y / 2) * w..(y / 2) * w + w];
            for (x, d) in dst[y * ow..(y + 1) * ow].iter_mut().enumerate() {
                *d = row[x / 2];
            }
        }
    }
    out
}

/// Stacks `b`'s channels after `a`'s.
pub fn concat_channels(a: &ImageTensor, b: &ImageTensor) -> Result<ImageTensor> {
    if a.height != b.height || a.width != b.width {
        return dim_err(format!(
            "concat needs equal spatial size: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        ));
    }
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    ImageTensor::new(a.channels + b.channels, a.height, a.width, data)
}

pub fn global_avg_pool(input: &ImageTensor) -> Vec<f64> {
    (0..input.channels)
        .map(|c| shifted_mean(input.channel(c)))
        .collect()
}

pub fn channel_stats(input: &ImageTensor) -> ChannelStats {
    let means = global_avg_pool(input);
    let stds = means
        .iter()
        .enumerate()
        .map(|(c, &m)| {
            let plane = input.channel(c);
            let ss: f64 = plane.iter().map(|&v| (v - m) * (v - m)).sum();
            (ss / plane.len() as f64).sqrt()
        })
        .collect();
    ChannelStats { means, stds }
}
