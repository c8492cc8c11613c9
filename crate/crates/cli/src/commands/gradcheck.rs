use std::path::Path;

use anyhow::{bail, Result};
use jdpnet_core::aqualoss::{
    abl, breakdown_gradient, gradient_angle_report, interior_pixels, step_consistency,
    AblBreakdown, Component, ComponentGradient, GradientAngleReport, StepCheck,
};
use serde::Serialize;

use crate::config::{self, AblArgs, CommonArgs, Overrides, RunConfig};
use crate::io;
use crate::report;

/// Ratio between the coarse and the fine finite-difference step.
pub const STEP_RATIO: f64 = 10.0;

#[derive(Serialize)]
struct Summary {
    pixels: usize,
    gradients: usize,
    all_finite: bool,
    tie_free: usize,
    tie_free_agree: usize,
    max_tie_free_rel_diff: Option<f64>,
}

#[derive(Serialize)]
struct Steps {
    component: Component,
    h_coarse: f64,
    h_fine: f64,
    checks: Vec<StepCheck>,
}

#[derive(Serialize)]
struct GradcheckReport<'a> {
    image: String,
    config: &'a RunConfig,
    breakdown: AblBreakdown,
    h: f64,
    samples: Vec<ComponentGradient>,
    angles: GradientAngleReport,
    steps: Steps,
    summary: Summary,
    pass: bool,
}

fn rel_diff(c: &StepCheck) -> f64 {
    let scale = c.coarse.abs().max(c.fine.abs());
    if scale == 0.0 {
        0.0
    } else {
        (c.coarse - c.fine).abs() / scale
    }
}

pub fn run(
    image: &Path,
    component: Component,
    samples: usize,
    h: f64,
    out: Option<&Path>,
    common: &CommonArgs,
    abl_args: &AblArgs,
) -> Result<bool> {
    let cfg = config::resolve(Overrides {
        common: Some(common),
        abl: Some(abl_args),
        ..Default::default()
    })?;
    if samples == 0 {
        bail!("--samples must be at least 1");
    }
    if !(h > 0.0 && h < 0.5) {
        bail!("--h must lie in (0, 0.5), got {h}");
    }
    let img = io::load_image(image)?;
    let pixels = interior_pixels(&img, h, samples, cfg.seed);
    if pixels.is_empty() {
        bail!(
            "no interior samples: every pixel of {} has a channel within {h} of 0 or 1, \
             so central differences would cross the clamp bounds",
            image.display()
        );
    }
    let h_fine = h / STEP_RATIO;
    let report = config::with_pool(cfg.jobs, || -> Result<_> {
        let breakdown = abl(&img, &cfg.abl)?;
        let grads = breakdown_gradient(&img, &cfg.abl, &pixels, h)?;
        let angles = gradient_angle_report(&img, &cfg.abl, &pixels, h)?;
        let checks = step_consistency(&img, &cfg.abl, component, &pixels, h, h_fine)?;
        Ok((breakdown, grads, angles, checks))
    })??;
    let (breakdown, grads, angles, checks) = report;

    let all_finite = grads
        .iter()
        .all(|g| [g.coi, g.si, g.cti, g.abl].iter().all(|v| v.is_finite()))
        && checks
            .iter()
            .all(|c| c.coarse.is_finite() && c.fine.is_finite());
    let tie_free: Vec<&StepCheck> = checks.iter().filter(|c| c.tie_free).collect();
    let summary = Summary {
        pixels: pixels.len(),
        gradients: grads.len(),
        all_finite,
        tie_free: tie_free.len(),
        tie_free_agree: tie_free.iter().filter(|c| c.agree).count(),
        max_tie_free_rel_diff: tie_free.iter().map(|c| rel_diff(c)).reduce(f64::max),
    };
    let doc = GradcheckReport {
        image: io::file_name(image),
        config: &cfg,
        breakdown,
        h,
        samples: grads,
        angles,
        steps: Steps {
            component,
            h_coarse: h,
            h_fine,
            checks,
        },
        summary,
        pass: all_finite,
    };
    report::emit(&report::pretty_json(&doc)?, out)?;
    if !all_finite {
        eprintln!("non-finite gradient in {}", image.display());
    }
    Ok(all_finite)
}
