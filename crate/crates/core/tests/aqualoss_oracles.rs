mod common;

use common::*;
use jdpnet_core::aqualoss::{
    abl, aqua_balance_loss, color_index, contrast_index, gradient_angle_report, interior_pixels,
    is_tie_free, kl_diag_gaussian, numerical_gradient, pg_kl, sharpness_index, step_consistency,
    AblWeights, Component, EdgeMap, PixelSample,
};
use jdpnet_core::jdpnet::PgParams;
use jdpnet_core::ImageTensor;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const S: f64 = 255.0;

fn ranges(n: usize, k: usize) -> Vec<(usize, usize)> {
    let base = n / k;
    (0..k)
        .map(|i| (i * base, if i == k - 1 { n } else { (i + 1) * base }))
        .collect()
}

fn sorted_trimmed_mean(v: &[f64], trim: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = (trim * v.len() as f64).floor() as usize;
    mean(&s[k..s.len() - k])
}

fn color_oracle(img: &ImageTensor, trim: f64) -> f64 {
    let (h, w) = (img.height(), img.width());
    let mut rg = Vec::new();
    let mut yb = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let (r, g, b) = (
                S * img.get(0, y, x),
                S * img.get(1, y, x),
                S * img.get(2, y, x),
            );
            rg.push(r - g);
            yb.push(0.5 * (r + g) - b);
        }
    }
    let (m1, m2) = (
        sorted_trimmed_mean(&rg, trim),
        sorted_trimmed_mean(&yb, trim),
    );
    let v1 = rg.iter().map(|v| (v - m1).powi(2)).sum::<f64>() / rg.len() as f64;
    let v2 = yb.iter().map(|v| (v - m2).powi(2)).sum::<f64>() / yb.len() as f64;
    -0.027 * (m1 * m1 + m2 * m2).sqrt() + 0.159 * (v1 + v2).sqrt()
}

fn sobel_at(img: &ImageTensor, c: usize, y: usize, x: usize) -> f64 {
    let p = |dy: isize, dx: isize| S * at_clamped(img, c, y as isize + dy, x as isize + dx);
    let gx = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
    let gy = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
    (gx * gx + gy * gy).sqrt()
}

fn sharpness_oracle(img: &ImageTensor, w: &AblWeights) -> f64 {
    let (h, wd) = (img.height(), img.width());
    let [k1, k2] = w.eme_blocks;
    let mut total = 0.0;
    for c in 0..3 {
        let mut eme = 0.0;
        for &(y0, y1) in &ranges(h, k1) {
            for &(x0, x1) in &ranges(wd, k2) {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for y in y0..y1 {
                    for x in x0..x1 {
                        let e = match w.edge_map {
                            EdgeMap::EdgeWeighted => sobel_at(img, c, y, x) * S * img.get(c, y, x),
                            EdgeMap::Sobel => sobel_at(img, c, y, x),
                        };
                        lo = lo.min(e);
                        hi = hi.max(e);
                    }
                }
                eme += ((hi + w.epsilon) / (lo + w.epsilon)).ln();
            }
        }
        total += w.channel_weights[c] * 2.0 / (k1 * k2) as f64 * eme;
    }
    total
}

fn contrast_oracle(img: &ImageTensor, w: &AblWeights) -> f64 {
    let (h, wd) = (img.height(), img.width());
    let [k1, k2] = w.cti_blocks;
    let a = w.alpha_entropy;
    let mut sum = 0.0;
    for &(y0, y1) in &ranges(h, k1) {
        for &(x0, x1) in &ranges(wd, k2) {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for y in y0..y1 {
                for x in x0..x1 {
                    let l = S * luma_at(img, y, x);
                    lo = lo.min(l);
                    hi = hi.max(l);
                }
            }
            if hi - lo > w.epsilon {
                let q = (hi - lo) / (hi + lo);
                sum += a * q.powf(a) * q.ln();
            }
        }
    }
    -sum / (k1 * k2) as f64
}

fn random_weights(r: &mut rand_chacha::ChaCha8Rng, h: usize, w: usize) -> AblWeights {
    AblWeights {
        trim: r.random_range(0.0..0.3),
        eme_blocks: [r.random_range(1..=h.min(6)), r.random_range(1..=w.min(6))],
        cti_blocks: [r.random_range(1..=h.min(6)), r.random_range(1..=w.min(6))],
        alpha_entropy: r.random_range(0.5..2.0),
        epsilon: r.random_range(0.1..2.0),
        edge_map: if r.random_bool(0.5) {
            EdgeMap::Sobel
        } else {
            EdgeMap::EdgeWeighted
        },
        ..AblWeights::default()
    }
}

#[test]
fn components_match_block_loop_oracles() {
    let mut r = rng(200);
    for _ in 0..100 {
        let (h, w) = (r.random_range(3..14), r.random_range(3..14));
        let img = tensor(&mut r, 3, h, w);
        let wt = random_weights(&mut r, h, w);
        let coi = color_index(&img, &wt).unwrap().l_coi;
        assert!((coi - color_oracle(&img, wt.trim)).abs() < 1e-9, "colour");
        let si = sharpness_index(&img, &wt).unwrap();
        assert!((si - sharpness_oracle(&img, &wt)).abs() < 1e-9, "sharpness");
        let cti = contrast_index(&img, &wt).unwrap();
        assert!((cti - contrast_oracle(&img, &wt)).abs() < 1e-9, "contrast");
        let b = abl(&img, &wt).unwrap();
        assert_eq!(b.abl, wt.c1 * b.l_coi + wt.c2 * b.l_si + wt.c3 * b.l_cti);
    }
}

/// Values of the default-weight score on a fixed synthetic scene, frozen from
/// the block-loop oracles above.
#[test]
fn frozen_scene_breakdown() {
    let img = ImageTensor::from_fn(3, 32, 32, |c, y, x| {
        let base = [0.15, 0.45, 0.6][c];
        let ripple = 0.2 * (((x + 2 * y + 5 * c) % 9) as f64 / 8.0);
        (base + ripple + if (x / 8 + y / 8) % 2 == 0 { 0.1 } else { 0.0 }).min(1.0)
    });
    let w = AblWeights::default();
    let b = abl(&img, &w).unwrap();
    let oracle = (
        color_oracle(&img, w.trim),
        sharpness_oracle(&img, &w),
        contrast_oracle(&img, &w),
    );
    assert!((b.l_coi - oracle.0).abs() < 1e-9);
    assert!((b.l_si - oracle.1).abs() < 1e-9);
    assert!((b.l_cti - oracle.2).abs() < 1e-9);
    assert!((b.l_coi - FROZEN_COI).abs() < 1e-9, "{}", b.l_coi);
    assert!((b.l_si - FROZEN_SI).abs() < 1e-9, "{}", b.l_si);
    assert!((b.l_cti - FROZEN_CTI).abs() < 1e-9, "{}", b.l_cti);
}

const FROZEN_COI: f64 = 2.521444166729328;
const FROZEN_SI: f64 = 3.670905712733804;
const FROZEN_CTI: f64 = 0.23351717045275838;

#[test]
fn loss_identities() {
    let mut r = rng(201);
    let w = AblWeights::default();
    for _ in 0..5 {
        let x = tensor(&mut r, 3, 16, 16);
        assert_eq!(aqua_balance_loss(&x, &x, &w).unwrap(), 0.0);
    }
    for g in [0.0, 0.2, 0.5, 0.731, 1.0] {
        let b = abl(&ImageTensor::filled(3, 24, 20, g), &w).unwrap();
        assert!(b.abl.abs() < 1e-12);
        assert!(b.l_coi.abs() < 1e-12 && b.l_si.abs() < 1e-12 && b.l_cti.abs() < 1e-12);
    }
}

#[test]
fn kl_closed_forms() {
    assert!(
        kl_diag_gaussian(&[0.0; 3], &[1.0; 3], &[0.0; 3], &[1.0; 3])
            .unwrap()
            .abs()
            < 1e-12
    );
    for mu in [-2.0, -0.3, 0.0, 0.7, 3.1] {
        let kl = kl_diag_gaussian(&[mu], &[1.0], &[0.0], &[1.0]).unwrap();
        assert!((kl - mu * mu / 2.0).abs() < 1e-12);
    }
    assert!(pg_kl(&PgParams::standard_normal(6)).unwrap().abs() < 1e-12);
}

#[test]
fn kl_matches_monte_carlo() {
    let mut r = rng(202);
    for _ in 0..3 {
        let d = 4;
        let mp: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let sp: Vec<f64> = (0..d).map(|_| r.random_range(0.5..1.5)).collect();
        let mq: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let sq: Vec<f64> = (0..d).map(|_| r.random_range(0.5..1.5)).collect();
        let exact = kl_diag_gaussian(&mp, &sp, &mq, &sq).unwrap();
        let log_n = |x: f64, m: f64, s: f64| -((x - m) / s).powi(2) / 2.0 - s.ln();
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            for i in 0..d {
                let z: f64 = StandardNormal.sample(&mut r);
                let x = mp[i] + sp[i] * z;
                acc += log_n(x, mp[i], sp[i]) - log_n(x, mq[i], sq[i]);
            }
        }
        let mc = acc / n as f64;
        assert!(
            (mc - exact).abs() <= 1e-2 * exact.abs(),
            "mc {mc} exact {exact}"
        );
    }
}

#[test]
fn gradients_are_finite_and_step_stable() {
    let w = AblWeights::default();
    for seed in 0..3 {
        let mut r = rng(300 + seed);
        let img = tensor_in(&mut r, 3, 32, 32, 0.05, 0.95);
        let pixels = interior_pixels(&img, 1e-3, 64, seed);
        assert_eq!(pixels.len(), 64);
        for comp in Component::ALL {
            let g = numerical_gradient(&img, &w, comp, &pixels, 1e-3).unwrap();
            assert!(g.iter().all(|s| s.value.is_finite()));
            let checks = step_consistency(&img, &w, comp, &pixels, 1e-3, 1e-4).unwrap();
            for c in checks.iter().filter(|c| c.tie_free) {
                assert!(
                    c.agree,
                    "{comp} at ({}, {}, {}): {} vs {}",
                    c.y, c.x, c.channel, c.coarse, c.fine
                );
            }
        }
        let report = gradient_angle_report(&img, &w, &pixels, 1e-3).unwrap();
        for i in 0..3 {
            assert!((report.cosine[i][i].unwrap() - 1.0).abs() < 1e-9);
            for j in 0..3 {
                assert_eq!(report.cosine[i][j], report.cosine[j][i]);
            }
        }
    }
}

#[test]
fn tie_detection_flags_extremum_swaps() {
    let mut img = ImageTensor::filled(3, 8, 8, 0.5);
    img.set(1, 3, 3, 0.6);
    img.set(1, 3, 4, 0.6 + 1e-4);
    let w = AblWeights {
        cti_blocks: [1, 1],
        eme_blocks: [1, 1],
        ..AblWeights::default()
    };
    assert!(!is_tie_free(&img, &w, PixelSample { y: 3, x: 3 }, 1, 1e-3).unwrap());
}

fn flip_h(img: &ImageTensor) -> ImageTensor {
    let w = img.width();
    ImageTensor::from_fn(img.channels(), img.height(), w, |c, y, x| {
        img.get(c, y, w - 1 - x)
    })
}

fn rgb16() -> impl Strategy<Value = ImageTensor> {
    prop::collection::vec(0.0f64..1.0, 3 * 16 * 16)
        .prop_map(|d| ImageTensor::new(3, 16, 16, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn abl_is_mirror_invariant(img in rgb16()) {
        let w = AblWeights::default();
        let a = abl(&img, &w).unwrap();
        let b = abl(&flip_h(&img), &w).unwrap();
        prop_assert!((a.l_coi - b.l_coi).abs() < 1e-9);
        prop_assert!((a.abl - b.abl).abs() < 1e-9);
    }

    #[test]
    fn abl_scales_with_coefficients(img in rgb16(), s in 0.1f64..10.0) {
        let w = AblWeights::default();
        let ws = AblWeights::with_coefficients(s * w.c1, s * w.c2, s * w.c3);
        let a = abl(&img, &w).unwrap().abl;
        let b = abl(&img, &ws).unwrap().abl;
        prop_assert!((b - s * a).abs() < 1e-9 * (1.0 + a.abs() * s));
    }

    #[test]
    fn self_loss_is_offset_squared(img in rgb16(), t in -2.0f64..2.0) {
        let w = AblWeights { lambda_imp: t, ..AblWeights::default() };
        prop_assert!((aqua_balance_loss(&img, &img, &w).unwrap() - t * t).abs() < 1e-12);
    }

    #[test]
    fn gray_scores_zero(g in 0.0f64..1.0, h in 8usize..20, w in 8usize..20) {
        let b = abl(&ImageTensor::filled(3, h, w, g), &AblWeights::default()).unwrap();
        prop_assert!(b.abl.abs() < 1e-12);
    }
}
