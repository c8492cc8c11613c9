use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use jdpnet_core::jdpnet::{init_weights, inspect_container, ContainerReport};

use crate::report;

fn listing(report: &ContainerReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "channel_width {}", report.weights.channel_width());
    for l in &report.layers {
        let [o, i, kh, kw] = l.shape;
        let _ = writeln!(
            out,
            "{:<24} [{o}, {i}, {kh}, {kw}] offset {} sha256 {}",
            l.name, l.offset, l.sha256
        );
    }
    let _ = writeln!(out, "payload sha256 {}", report.payload_sha256);
    out
}

pub fn init(dir: &Path, seed: u64, width: usize) -> Result<bool> {
    let weights = init_weights(seed, width)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    weights
        .save(dir)
        .with_context(|| format!("writing weights to {}", dir.display()))?;
    let report = inspect_container(dir)?;
    report::emit(&listing(&report), None)?;
    Ok(true)
}

pub fn inspect(dir: &Path) -> Result<bool> {
    let report =
        inspect_container(dir).with_context(|| format!("weight container {}", dir.display()))?;
    report::emit(&listing(&report), None)?;
    Ok(true)
}
