use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use jdpnet_core::fpp::{fpp_enhance_image, FppConfig};
use jdpnet_core::jdpnet::{inspect_container, jdpnet_forward, NetworkWeights, PgMode};
use jdpnet_core::ImageTensor;
use rayon::prelude::*;
use serde::Serialize;

use super::elapsed_ms;
use crate::config::{self, CommonArgs, FppArgs, Overrides, PgModeArg, RunConfig};
use crate::io;
use crate::report;

pub const SIDECAR_FILE: &str = "enhance.json";

/// Every image dimension the network sees is padded to a multiple of this.
const NETWORK_MULTIPLE: usize = 8;

enum Pipeline {
    FppOnly,
    Network(Box<NetworkWeights>),
}

#[derive(Serialize)]
struct WeightsInfo {
    channel_width: usize,
    payload_sha256: String,
}

#[derive(Serialize)]
struct EffectiveConfig<'a> {
    seed: u64,
    pg_mode: PgModeArg,
    fpp: &'a FppConfig,
    weights: Option<WeightsInfo>,
}

#[derive(Serialize)]
struct ImageEntry {
    input: String,
    output: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    height: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
}

/// Wall-clock details; the only part of the sidecar that varies between
/// otherwise identical runs.
#[derive(Serialize)]
struct RunInfo {
    jobs: usize,
    total_ms: f64,
    image_ms: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    command: &'static str,
    mode: &'static str,
    config: EffectiveConfig<'a>,
    images: Vec<ImageEntry>,
    run: RunInfo,
}

fn enhance_one(
    img: &ImageTensor,
    pipeline: &Pipeline,
    fpp: &FppConfig,
    mode: PgMode,
) -> Result<ImageTensor> {
    match pipeline {
        Pipeline::FppOnly => Ok(fpp_enhance_image(img, fpp)?),
        Pipeline::Network(w) => {
            let (h, wd) = (img.height(), img.width());
            let padded = io::pad_replicate(img, NETWORK_MULTIPLE);
            let out = jdpnet_forward(&padded, w, fpp, mode)?;
            Ok(io::crop(&out, h, wd))
        }
    }
}

struct Outcome {
    entry: ImageEntry,
    ms: f64,
}

fn process(src: &Path, dst: &Path, pipeline: &Pipeline, cfg: &RunConfig) -> Outcome {
    let start = Instant::now();
    let mut entry = ImageEntry {
        input: io::file_name(src),
        output: io::file_name(dst),
        status: "ok",
        error: None,
        height: None,
        width: None,
    };
    let result = io::load_image(src).and_then(|img| {
        entry.height = Some(img.height());
        entry.width = Some(img.width());
        let out = enhance_one(&img, pipeline, &cfg.fpp, cfg.pg_mode())?;
        io::save_png(&out, dst)
    });
    if let Err(e) = result {
        entry.status = "error";
        entry.error = Some(format!("{e:#}"));
    }
    Outcome {
        entry,
        ms: elapsed_ms(start),
    }
}

fn output_paths(inputs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut seen = BTreeMap::new();
    for src in inputs {
        let stem = io::file_stem(src);
        if let Some(prev) = seen.insert(stem.clone(), io::file_name(src)) {
            bail!(
                "{} and {} would both be written to {stem}.png",
                prev,
                io::file_name(src)
            );
        }
    }
    Ok(inputs
        .iter()
        .map(|src| out_dir.join(format!("{}.png", io::file_stem(src))))
        .collect())
}

pub fn run(
    input: &Path,
    out_dir: &Path,
    weights: Option<&Path>,
    pg_mode: Option<PgModeArg>,
    common: &CommonArgs,
    fpp: &FppArgs,
) -> Result<bool> {
    let cfg = config::resolve(Overrides {
        common: Some(common),
        fpp: Some(fpp),
        pg_mode,
        ..Default::default()
    })?;
    let (pipeline, weights_info) = match weights {
        Some(dir) => {
            let report = inspect_container(dir)
                .with_context(|| format!("weight container {}", dir.display()))?;
            let info = WeightsInfo {
                channel_width: report.weights.channel_width(),
                payload_sha256: report.payload_sha256,
            };
            (Pipeline::Network(Box::new(report.weights)), Some(info))
        }
        None => (Pipeline::FppOnly, None),
    };
    let inputs = io::list_images(input)?;
    if inputs.is_empty() {
        bail!("no PNG or JPEG images in {}", input.display());
    }
    let outputs = output_paths(&inputs, out_dir)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let start = Instant::now();
    let (outcomes, jobs) = config::with_pool(cfg.jobs, || {
        let outcomes: Vec<Outcome> = inputs
            .par_iter()
            .zip(&outputs)
            .map(|(src, dst)| process(src, dst, &pipeline, &cfg))
            .collect();
        (outcomes, rayon::current_num_threads())
    })?;
    let total_ms = elapsed_ms(start);

    let mut failures = 0;
    let mut image_ms = BTreeMap::new();
    let mut images = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        if let Some(err) = &o.entry.error {
            failures += 1;
            eprintln!("{}: {err}", o.entry.input);
        }
        image_ms.insert(o.entry.input.clone(), o.ms);
        images.push(o.entry);
    }
    let sidecar = Sidecar {
        command: "enhance",
        mode: match pipeline {
            Pipeline::FppOnly => "fpp_only",
            Pipeline::Network(_) => "network",
        },
        config: EffectiveConfig {
            seed: cfg.seed,
            pg_mode: cfg.pg_mode,
            fpp: &cfg.fpp,
            weights: weights_info,
        },
        images,
        run: RunInfo {
            jobs,
            total_ms,
            image_ms,
        },
    };
    report::emit(
        &report::pretty_json(&sidecar)?,
        Some(&out_dir.join(SIDECAR_FILE)),
    )?;
    if failures > 0 {
        eprintln!("{failures} of {} images failed", inputs.len());
    }
    Ok(failures == 0)
}
