use std::path::Path;

use anyhow::{bail, Result};
use jdpnet_core::metrics::{evaluate, ImageRole, Metric, NamedImage, SkippedImage};
use rayon::prelude::*;

use crate::config::{self, AblArgs, CommonArgs, Format, Overrides};
use crate::io;
use crate::report;

pub struct Request<'a> {
    pub test_dir: &'a Path,
    pub reference: Option<&'a Path>,
    pub metrics: Option<&'a str>,
    pub format: Option<Format>,
    pub out: Option<&'a Path>,
    pub common: &'a CommonArgs,
    pub abl: &'a AblArgs,
}

/// Decodes every image in `dir`; unreadable files become skip entries.
fn load_dir(dir: &Path, role: ImageRole) -> Result<(Vec<NamedImage>, Vec<SkippedImage>)> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let results: Vec<_> = io::list_images(dir)?
        .par_iter()
        .map(|p| (io::file_name(p), io::load_image(p)))
        .collect();
    let mut images = Vec::new();
    let mut skipped = Vec::new();
    for (name, res) in results {
        match res {
            Ok(img) => images.push(NamedImage::new(name, img)),
            Err(e) => skipped.push(SkippedImage {
                image: name,
                role,
                reason: format!("{e:#}"),
            }),
        }
    }
    Ok((images, skipped))
}

fn role_name(role: ImageRole) -> &'static str {
    match role {
        ImageRole::Test => "test",
        ImageRole::Reference => "reference",
    }
}

pub fn run(req: Request<'_>) -> Result<bool> {
    let cfg = config::resolve(Overrides {
        common: Some(req.common),
        abl: Some(req.abl),
        metrics: req.metrics,
        format: req.format,
        ..Default::default()
    })?;
    let metrics = match &cfg.metrics {
        Some(m) => m.clone(),
        None if req.reference.is_some() => Metric::ALL.to_vec(),
        None => vec![Metric::Uiqm, Metric::Uciqe],
    };
    if let Some(r) = req.reference {
        if !r.is_dir() {
            bail!("{} is not a directory", r.display());
        }
    }

    let (report, mut skipped, unreadable) = config::with_pool(cfg.jobs, || -> Result<_> {
        let (tests, mut skipped) = load_dir(req.test_dir, ImageRole::Test)?;
        if tests.is_empty() && skipped.is_empty() {
            bail!("no PNG or JPEG images in {}", req.test_dir.display());
        }
        let refs = match req.reference {
            Some(dir) => {
                let (refs, bad) = load_dir(dir, ImageRole::Reference)?;
                skipped.extend(bad);
                Some(refs)
            }
            None => None,
        };
        if tests.is_empty() {
            bail!("no readable images in {}", req.test_dir.display());
        }
        let unreadable = !skipped.is_empty();
        let report = evaluate(refs.as_deref(), &tests, &metrics, &cfg.abl)?;
        Ok((report, skipped, unreadable))
    })??;
    skipped.extend(report.skipped.iter().cloned());
    skipped.sort_by(|a, b| (role_name(a.role), &a.image).cmp(&(role_name(b.role), &b.image)));

    for s in &skipped {
        eprintln!(
            "skipped {} image {}: {}",
            role_name(s.role),
            s.image,
            s.reason
        );
    }
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    let text = match cfg.format {
        Format::Csv => report::to_csv(&report),
        Format::Json => {
            let mut echoed = cfg.clone();
            echoed.metrics = Some(metrics.clone());
            report::to_json(&report, &skipped, &echoed)?
        }
    };
    report::emit(&text, req.out)?;
    Ok(!unreadable && !skipped.iter().any(|s| s.role == ImageRole::Test))
}
