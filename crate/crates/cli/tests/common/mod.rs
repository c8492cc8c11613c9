#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BIN: &str = env!("CARGO_BIN_EXE_jdpnet");

pub fn jdpnet(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn jdpnet")
}

/// Runs and asserts success, returning stdout.
pub fn ok(args: &[&str]) -> String {
    let out = jdpnet(args);
    assert!(
        out.status.success(),
        "jdpnet {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn random_rgb(seed: u64, w: u32, h: u32) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
}

pub fn constant_rgb(w: u32, h: u32, v: [u8; 3]) -> RgbImage {
    RgbImage::from_pixel(w, h, Rgb(v))
}

pub fn save(img: &RgbImage, path: &Path) {
    img.save(path).unwrap();
}

/// Bytes of every file directly inside `dir`, sorted by name.
pub fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

/// Sidecar JSON with the wall-clock `run` section removed.
pub fn sidecar_without_run(dir: &Path) -> serde_json::Value {
    let mut v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("enhance.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("run");
    v
}

/// Header plus rows (label, values) of an emitted CSV report.
pub fn parse_csv(text: &str) -> (Vec<String>, Vec<(String, Vec<f64>)>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| {
            let mut it = l.split(',');
            let label = it.next().unwrap().to_string();
            (label, it.map(|v| v.parse::<f64>().unwrap()).collect())
        })
        .collect();
    (header, rows)
}
