//! 8-bit PNG/JPEG decoding into `[0, 1]` tensors, round-half-up PNG encoding,
//! directory listing and the replicate pad/crop used around the network.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::{ImageFormat, RgbImage};
use jdpnet_core::ImageTensor;

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

pub fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// A single image file, or every supported image directly inside a
/// directory, sorted by file name.
pub fn list_images(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        bail!("{} does not exist", input.display());
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(input).with_context(|| format!("listing {}", input.display()))? {
        let path = entry?.path();
        if path.is_file() && is_image(&path) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_name(path))
}

pub fn rgb_to_tensor(img: &RgbImage) -> ImageTensor {
    ImageTensor::from_fn(3, img.height() as usize, img.width() as usize, |c, y, x| {
        f64::from(img.get_pixel(x as u32, y as u32)[c]) / 255.0
    })
}

pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let img = image::open(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(rgb_to_tensor(&img.to_rgb8()))
}

pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn tensor_to_rgb(t: &ImageTensor) -> Result<RgbImage> {
    let (c, h, w) = t.shape();
    if c != 3 {
        bail!("expected a 3-channel image, got {c} channels");
    }
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        image::Rgb([0, 1, 2].map(|ch| quantize(t.get(ch, y, x))))
    }))
}

pub fn save_png(t: &ImageTensor, path: &Path) -> Result<()> {
    tensor_to_rgb(t)?
        .save_with_format(path, ImageFormat::Png)
        .with_context(|| format!("writing {}", path.display()))
}

/// Pads bottom and right edges by replication up to multiples of `m`.
pub fn pad_replicate(t: &ImageTensor, m: usize) -> ImageTensor {
    let (c, h, w) = t.shape();
    let ph = h.div_ceil(m) * m;
    let pw = w.div_ceil(m) * m;
    if (ph, pw) == (h, w) {
        return t.clone();
    }
    ImageTensor::from_fn(c, ph, pw, |ch, y, x| t.get(ch, y.min(h - 1), x.min(w - 1)))
}

pub fn crop(t: &ImageTensor, h: usize, w: usize) -> ImageTensor {
    if (t.height(), t.width()) == (h, w) {
        return t.clone();
    }
    ImageTensor::from_fn(t.channels(), h, w, |c, y, x| t.get(c, y, x))
}
