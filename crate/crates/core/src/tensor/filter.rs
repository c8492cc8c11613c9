use rayon::prelude::*;

use super::ImageTensor;
use crate::error::{dim_err, param_err, Result};

/// Normalized 1-D Gaussian taps of standard deviation `omega`, truncated at
/// radius `ceil(3 * omega)`.
pub fn gaussian_kernel_1d(omega: f64) -> Result<Vec<f64>> {
    if !(omega > 0.0) || !omega.is_finite() {
        return param_err(format!("gaussian scale must be positive, got {omega}"));
    }
    let radius = (3.0 * omega).ceil() as isize;
    let denom = 2.0 * omega * omega;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / denom).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable Gaussian low-pass with replicate edges, applied per channel.
/// Taps are accumulated as offsets from the centre sample, so constant
/// regions come back bit-exact.
pub fn gaussian_blur(input: &ImageTensor, omega: f64) -> Result<ImageTensor> {
    let taps = gaussian_kernel_1d(omega)?;
    let radius = (taps.len() / 2) as isize;
    let (c, h, w) = input.shape();
    let plane = h * w;
    let mut data = vec![0.0; c * plane];
    data.par_chunks_mut(plane)
        .enumerate()
        .for_each(|(ch, dst)| {
            let src = input.channel(ch);
            let mut tmp = vec![0.0; plane];
            for y in 0..h {
                let row = &src[y * w..(y + 1) * w];
                for x in 0..w {
                    let centre = row[x];
                    let mut acc = 0.0;
                    for (k, t) in taps.iter().enumerate() {
                        acc += t * (row[clamp_index(x as isize + k as isize - radius, w)] - centre);
                    }
                    tmp[y * w + x] = centre + acc;
                }
            }
            for y in 0..h {
                for x in 0..w {
                    let centre = tmp[y * w + x];
                    let mut acc = 0.0;
                    for (k, t) in taps.iter().enumerate() {
                        acc += t
                            * (tmp[clamp_index(y as isize + k as isize - radius, h) * w + x]
                                - centre);
                    }
                    dst[y * w + x] = centre + acc;
                }
            }
        });
    ImageTensor::new(c, h, w, data)
}

/// Sobel gradient magnitude `sqrt(gx² + gy²)` with replicate edges.
/// Multi-channel inputs are processed plane by plane.
pub fn sobel_magnitude(input: &ImageTensor) -> Result<ImageTensor> {
    let (c, h, w) = input.shape();
    if h < 3 || w < 3 {
        return dim_err(format!("sobel needs at least 3x3, got {h}x{w}"));
    }
    let mut out = ImageTensor::zeros(c, h, w);
    for ch in 0..c {
        let src = input.channel(ch);
        let dst = out.channel_mut(ch);
        let at = |y: isize, x: isize| src[clamp_index(y, h) * w + clamp_index(x, w)];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                    - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
                let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                    - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
                dst[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
            }
        }
    }
    Ok(out)
}
