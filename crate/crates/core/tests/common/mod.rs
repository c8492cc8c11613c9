#![allow(dead_code)]

use jdpnet_core::{ConvKernel, ImageTensor, Padding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> ImageTensor {
    ImageTensor::from_fn(c, h, w, |_, _, _| rng.random::<f64>())
}

/// Values in `[lo, hi)`.
pub fn tensor_in(
    rng: &mut ChaCha8Rng,
    c: usize,
    h: usize,
    w: usize,
    lo: f64,
    hi: f64,
) -> ImageTensor {
    ImageTensor::from_fn(c, h, w, |_, _, _| rng.random_range(lo..hi))
}

pub fn kernel(rng: &mut ChaCha8Rng, out: usize, inp: usize, k: usize) -> ConvKernel {
    let weights = (0..out * inp * k * k)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let bias = (0..out).map(|_| rng.random_range(-0.5..0.5)).collect();
    ConvKernel::new(out, inp, k, k, weights, bias).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Replicate-edge read.
pub fn at_clamped(img: &ImageTensor, c: usize, y: isize, x: isize) -> f64 {
    let yy = y.clamp(0, img.height() as isize - 1) as usize;
    let xx = x.clamp(0, img.width() as isize - 1) as usize;
    img.get(c, yy, xx)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn luma_at(img: &ImageTensor, y: usize, x: usize) -> f64 {
    0.299 * img.get(0, y, x) + 0.587 * img.get(1, y, x) + 0.114 * img.get(2, y, x)
}

/// Direct zero-padded cross-correlation.
pub fn conv_oracle(x: &ImageTensor, k: &ConvKernel, padding: Padding) -> ImageTensor {
    let (cin, h, w) = x.shape();
    let (kh, kw) = (k.kernel_height(), k.kernel_width());
    let (oh, ow, oy, ox) = match padding {
        Padding::Same => (h, w, (kh / 2) as isize, (kw / 2) as isize),
        Padding::Valid => (h - kh + 1, w - kw + 1, 0, 0),
    };
    ImageTensor::from_fn(k.out_channels(), oh, ow, |o, y, xx| {
        let mut acc = k.bias()[o];
        for i in 0..cin {
            for ky in 0..kh {
                for kx in 0..kw {
                    let iy = y as isize + ky as isize - oy;
                    let ix = xx as isize + kx as isize - ox;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                        acc += k.weight(o, i, ky, kx) * x.get(i, iy as usize, ix as usize);
                    }
                }
            }
        }
        acc
    })
}
