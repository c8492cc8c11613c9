use rayon::prelude::*;

use super::ImageTensor;
use crate::error::{dim_err, param_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `k/2` on every side; spatial size is preserved.
    Same,
    /// No padding; each axis shrinks by `k - 1`.
    Valid,
}

/// Convolution weights laid out `[out][in][kh][kw]`, plus one bias per
/// output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    out_channels: usize,
    in_channels: usize,
    kernel_height: usize,
    kernel_width: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvKernel {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_height: usize,
        kernel_width: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return dim_err("kernel channel counts must be positive");
        }
        for k in [kernel_height, kernel_width] {
            if k != 1 && k != 3 {
                return param_err(format!("kernel size must be 1 or 3, got {k}"));
            }
        }
        let expected = out_channels * in_channels * kernel_height * kernel_width;
        if weights.len() != expected {
            return dim_err(format!(
                "kernel weights have {} values, expected {expected}",
                weights.len()
            ));
        }
        if bias.len() != out_channels {
            return dim_err(format!(
                "kernel bias has {} values, expected {out_channels}",
                bias.len()
            ));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return param_err("kernel contains non-finite values");
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel_height,
            kernel_width,
            weights,
            bias,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, k: usize) -> Result<Self> {
        Self::new(
            out_channels,
            in_channels,
            k,
            k,
            vec![0.0; out_channels * in_channels * k * k],
            vec![0.0; out_channels],
        )
    }

    /// 1×1 identity mapping on `channels` channels.
    pub fn identity(channels: usize) -> Self {
        let mut weights = vec![0.0; channels * channels];
        for c in 0..channels {
            weights[c * channels + c] = 1.0;
        }
        Self::new(channels, channels, 1, 1, weights, vec![0.0; channels])
            .expect("identity kernel is well formed")
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_height(&self) -> usize {
        self.kernel_height
    }

    pub fn kernel_width(&self) -> usize {
        self.kernel_width
    }

    /// `[out, in, kh, kw]`
    pub fn shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels,
            self.kernel_height,
            self.kernel_width,
        ]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights
            [((o * self.in_channels + i) * self.kernel_height + ky) * self.kernel_width + kx]
    }

    /// Applies a 1×1 kernel to a vector viewed as a `len×1×1` tensor.
    pub fn apply_to_vector(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.kernel_height != 1 || self.kernel_width != 1 {
            return dim_err("apply_to_vector needs a 1x1 kernel");
        }
        if v.len() != self.in_channels {
            return dim_err(format!(
                "vector length {} does not match kernel input {}",
                v.len(),
                self.in_channels
            ));
        }
        Ok((0..self.out_channels)
            .map(|o| {
                let row = &self.weights[o * self.in_channels..(o + 1) * self.in_channels];
                self.bias[o] + row.iter().zip(v).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect())
    }
}

/// Direct 2-D cross-correlation (no kernel flip).
pub fn conv2d(input: &ImageTensor, kernel: &ConvKernel, padding: Padding) -> Result<ImageTensor> {
    let (cin, h, w) = input.shape();
    if cin != kernel.in_channels {
        return dim_err(format!(
            "conv2d: input has {cin} channels, kernel expects {}",
            kernel.in_channels
        ));
    }
    let (kh, kw) = (kernel.kernel_height, kernel.kernel_width);
    let (pad_y, pad_x, oh, ow) = match padding {
        Padding::Same => (kh / 2, kw / 2, h, w),
        Padding::Valid => {
            if h < kh || w < kw {
                return dim_err(format!(
                    "conv2d valid: {h}x{w} input too small for {kh}x{kw} kernel"
                ));
            }
            (0, 0, h - kh + 1, w - kw + 1)
        }
    };

    let plane = oh * ow;
    let mut data = vec![0.0; kernel.out_channels * plane];
    data.par_chunks_mut(plane).enumerate().for_each(|(o, dst)| {
        dst.fill(kernel.bias[o]);
        for i in 0..cin {
            let src = input.channel(i);
            for ky in 0..kh {
                // output rows whose tap lands inside the input
                let y_lo = pad_y.saturating_sub(ky);
                let y_hi = (h + pad_y).saturating_sub(ky).min(oh);
                for kx in 0..kw {
                    let wv = kernel.weight(o, i, ky, kx);
                    if wv == 0.0 {
                        continue;
                    }
                    let x_lo = pad_x.saturating_sub(kx);
                    let x_hi = (w + pad_x).saturating_sub(kx).min(ow);
                    if x_lo >= x_hi {
                        continue;
                    }
                    for y in y_lo..y_hi {
                        let sy = y + ky - pad_y;
                        let sx0 = x_lo + kx - pad_x;
                        let s = &src[sy * w + sx0..sy * w + sx0 + (x_hi - x_lo)];
                        let d = &mut dst[y * ow + x_lo..y * ow + x_hi];
                        for (dv, sv) in d.iter_mut().zip(s) {
                            *dv += wv * sv;
                        }
                    }
                }
            }
        }
    });
    ImageTensor::new(kernel.out_channels, oh, ow, data)
}
