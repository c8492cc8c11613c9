//! Trimmed statistics, opponent colour planes and block partitioning.

use super::ImageTensor;
use crate::error::{dim_err, param_err, Result};

/// Number of samples dropped from each tail for `n` values at fraction `trim`.
pub fn trim_count(n: usize, trim: f64) -> Result<usize> {
    if !(0.0..0.5).contains(&trim) {
        return param_err(format!("trim fraction must lie in [0, 0.5), got {trim}"));
    }
    if n == 0 {
        return param_err("trimmed statistics of an empty list");
    }
    let k = (trim * n as f64).floor() as usize;
    if n <= 2 * k {
        return param_err(format!(
            "trimming {k} per tail leaves nothing of {n} values"
        ));
    }
    Ok(k)
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Mean after dropping `floor(trim * n)` values from each end of the sorted list.
pub fn alpha_trimmed_mean(values: &[f64], trim: f64) -> Result<f64> {
    let k = trim_count(values.len(), trim)?;
    let v = sorted(values);
    let kept = &v[k..v.len() - k];
    // offsets from the first kept value keep constant runs exact
    let pivot = kept[0];
    Ok(pivot + kept.iter().map(|x| x - pivot).sum::<f64>() / kept.len() as f64)
}

/// Squared deviations of *all* values from the trimmed mean, divided by the
/// full count `n`.
pub fn alpha_trimmed_variance(values: &[f64], trim: f64) -> Result<f64> {
    let mu = alpha_trimmed_mean(values, trim)?;
    Ok(values.iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>() / values.len() as f64)
}

/// Red-green and yellow-blue opponent planes: `RG = R - G`, `YB = (R + G)/2 - B`.
pub fn opponent_channels(rgb: &ImageTensor) -> Result<(ImageTensor, ImageTensor)> {
    if rgb.channels() != 3 {
        return dim_err(format!(
            "opponent channels need 3 channels, got {}",
            rgb.channels()
        ));
    }
    let (h, w) = (rgb.height(), rgb.width());
    let (r, g, b) = (rgb.channel(0), rgb.channel(1), rgb.channel(2));
    let rg: Vec<f64> = r.iter().zip(g).map(|(r, g)| r - g).collect();
    let yb: Vec<f64> = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((r, g), b)| (r + g) / 2.0 - b)
        .collect();
    Ok((
        ImageTensor::new(1, h, w, rg)?,
        ImageTensor::new(1, h, w, yb)?,
    ))
}

/// One cell of a `k1×k2` grid with its extrema. `argmin`/`argmax` are flat
/// plane indices of the first occurrence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub y0: usize,
    pub x0: usize,
    pub height: usize,
    pub width: usize,
    pub min: f64,
    pub max: f64,
    pub argmin: usize,
    pub argmax: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits `0..n` into `k` runs of `n / k`, the last one absorbing the remainder.
pub fn block_ranges(n: usize, k: usize) -> Vec<(usize, usize)> {
    let base = n / k;
    (0..k)
        .map(|i| {
            let len = if i + 1 == k { n - base * (k - 1) } else { base };
            (i * base, len)
        })
        .collect()
}

/// Same as [`block_partition`] on a raw `height*width` plane.
pub fn block_partition_plane(
    plane: &[f64],
    height: usize,
    width: usize,
    k1: usize,
    k2: usize,
) -> Result<Vec<Block>> {
    if k1 == 0 || k2 == 0 || k1 > height || k2 > width {
        return param_err(format!(
            "block grid {k1}x{k2} does not fit a {height}x{width} image"
        ));
    }
    let rows = block_ranges(height, k1);
    let cols = block_ranges(width, k2);
    let mut blocks = Vec::with_capacity(k1 * k2);
    for &(y0, bh) in &rows {
        for &(x0, bw) in &cols {
            let mut b = Block {
                y0,
                x0,
                height: bh,
                width: bw,
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                argmin: 0,
                argmax: 0,
            };
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    let i = y * width + x;
                    let v = plane[i];
                    if v < b.min {
                        b.min = v;
                        b.argmin = i;
                    }
                    if v > b.max {
                        b.max = v;
                        b.argmax = i;
                    }
                }
            }
            blocks.push(b);
        }
    }
    Ok(blocks)
}

/// Partitions a single-channel image into a `k1×k2` grid of near-equal blocks.
pub fn block_partition(channel: &ImageTensor, k1: usize, k2: usize) -> Result<Vec<Block>> {
    if channel.channels() != 1 {
        return dim_err(format!(
            "block partition expects one channel, got {}",
            channel.channels()
        ));
    }
    block_partition_plane(channel.data(), channel.height(), channel.width(), k1, k2)
}
