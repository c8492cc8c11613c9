use std::path::Path;

use anyhow::Result;
use jdpnet_core::aqualoss::abl;
use serde_json::json;

use crate::config::{self, AblArgs, CommonArgs, Overrides};
use crate::io;
use crate::report;

pub fn run(image: &Path, common: &CommonArgs, abl_args: &AblArgs) -> Result<bool> {
    let cfg = config::resolve(Overrides {
        common: Some(common),
        abl: Some(abl_args),
        ..Default::default()
    })?;
    let img = io::load_image(image)?;
    let breakdown = config::with_pool(cfg.jobs, || abl(&img, &cfg.abl))??;
    let doc = json!({
        "image": io::file_name(image),
        "breakdown": breakdown,
        "abl": cfg.abl,
    });
    report::emit(&report::pretty_json(&doc)?, None)?;
    Ok(true)
}
