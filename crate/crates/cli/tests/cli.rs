mod common;

use std::fs;

use common::*;
use serde_json::Value;

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn fpp_only_constant_image_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    save(&constant_rgb(19, 13, [90, 90, 90]), &input);
    let out = dir.path().join("out");
    ok(&[
        "enhance",
        p(&input),
        p(&out),
        "--fpp-only",
        "--lambda-bem",
        "0.5",
    ]);
    let a = image::open(&input).unwrap().to_rgb8();
    let b = image::open(out.join("in.png")).unwrap().to_rgb8();
    assert_eq!(a, b);
}

#[test]
fn enhance_is_deterministic_across_runs_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let inp = dir.path().join("in");
    fs::create_dir(&inp).unwrap();
    for i in 0..3 {
        save(
            &random_rgb(i, 20 + i as u32, 17),
            &inp.join(format!("x{i}.png")),
        );
    }
    let w = dir.path().join("w");
    ok(&["weights", "init", p(&w), "--seed", "7", "--width", "4"]);
    let mut runs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "4"), ("c", "4")] {
        let out = dir.path().join(name);
        ok(&[
            "enhance",
            p(&inp),
            p(&out),
            "--weights",
            p(&w),
            "--seed",
            "7",
            "--pg-mode",
            "sampled",
            "--jobs",
            jobs,
        ]);
        runs.push(out);
    }
    let images = |d: &std::path::Path| -> Vec<_> {
        dir_bytes(d)
            .into_iter()
            .filter(|(n, _)| n.ends_with(".png"))
            .collect()
    };
    assert_eq!(images(&runs[0]).len(), 3);
    for r in &runs[1..] {
        assert_eq!(images(&runs[0]), images(r));
        assert_eq!(sidecar_without_run(&runs[0]), sidecar_without_run(r));
    }
    // A different sampling seed changes the output.
    let other = dir.path().join("d");
    ok(&[
        "enhance",
        p(&inp),
        p(&other),
        "--weights",
        p(&w),
        "--seed",
        "8",
        "--pg-mode",
        "sampled",
    ]);
    assert_ne!(images(&runs[0]), images(&other));
}

#[test]
fn sidecar_lists_images_in_sorted_order() {
    let dir = tempfile::tempdir().unwrap();
    let inp = dir.path().join("in");
    fs::create_dir(&inp).unwrap();
    for (i, name) in ["delta.png", "alpha.jpg", "charlie.png", "bravo.jpeg"]
        .iter()
        .enumerate()
    {
        save(&random_rgb(i as u64, 16, 16), &inp.join(name));
    }
    let out = dir.path().join("out");
    ok(&["enhance", p(&inp), p(&out), "--fpp-only", "--jobs", "4"]);
    let side = sidecar_without_run(&out);
    let names: Vec<&str> = side["images"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["input"].as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        ["alpha.jpg", "bravo.jpeg", "charlie.png", "delta.png"]
    );
    for stem in ["alpha", "bravo", "charlie", "delta"] {
        assert!(out.join(format!("{stem}.png")).is_file());
    }
    assert_eq!(side["mode"], "fpp_only");
    assert_eq!(side["config"]["fpp"]["lambda_bem"], 0.5);
}

#[test]
fn network_output_keeps_odd_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("odd.png");
    save(&random_rgb(3, 21, 11), &input);
    let w = dir.path().join("w");
    ok(&["weights", "init", p(&w), "--width", "4"]);
    let out = dir.path().join("out");
    ok(&["enhance", p(&input), p(&out), "--weights", p(&w)]);
    let img = image::open(out.join("odd.png")).unwrap();
    assert_eq!((img.width(), img.height()), (21, 11));
}

#[test]
fn enhance_rejects_bad_inputs_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let inp = dir.path().join("in");
    fs::create_dir(&inp).unwrap();
    save(&random_rgb(1, 8, 8), &inp.join("a.png"));

    let out = dir.path().join("out1");
    let r = jdpnet(&[
        "enhance",
        p(&inp),
        p(&out),
        "--fpp-only",
        "--lambda-bem",
        "1.5",
    ]);
    assert!(!r.status.success());
    assert!(!out.exists());

    let w = dir.path().join("w");
    ok(&["weights", "init", p(&w), "--width", "4"]);
    let payload = w.join("weights.bin");
    let bytes = fs::read(&payload).unwrap();
    fs::write(&payload, &bytes[..bytes.len() - 4]).unwrap();
    let out = dir.path().join("out2");
    let r = jdpnet(&["enhance", p(&inp), p(&out), "--weights", p(&w)]);
    assert!(!r.status.success());
    assert!(stderr(&r).contains("out of bounds"), "{}", stderr(&r));
    assert!(!out.exists());

    save(&random_rgb(2, 8, 8), &inp.join("a.jpg"));
    let out = dir.path().join("out3");
    let r = jdpnet(&["enhance", p(&inp), p(&out), "--fpp-only"]);
    assert!(!r.status.success());
    assert!(stderr(&r).contains("a.png"));
}

#[test]
fn enhance_partial_failure_is_nonzero_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let inp = dir.path().join("in");
    fs::create_dir(&inp).unwrap();
    save(&random_rgb(1, 8, 8), &inp.join("good.png"));
    fs::write(inp.join("bad.png"), b"not a png").unwrap();
    let out = dir.path().join("out");
    let r = jdpnet(&["enhance", p(&inp), p(&out), "--fpp-only"]);
    assert!(!r.status.success());
    assert!(out.join("good.png").is_file());
    let side = sidecar_without_run(&out);
    assert_eq!(side["images"][0]["input"], "bad.png");
    assert_eq!(side["images"][0]["status"], "error");
    assert_eq!(side["images"][1]["status"], "ok");
}

fn pair_dirs(root: &std::path::Path, n: u64) -> (std::path::PathBuf, std::path::PathBuf) {
    let test = root.join("test");
    let reference = root.join("ref");
    fs::create_dir(&test).unwrap();
    fs::create_dir(&reference).unwrap();
    for i in 0..n {
        save(
            &random_rgb(100 + i, 24, 20),
            &test.join(format!("p{i}.png")),
        );
        save(
            &random_rgb(200 + i, 24, 20),
            &reference.join(format!("p{i}.png")),
        );
    }
    (test, reference)
}

#[test]
fn identical_dirs_give_perfect_scores() {
    let dir = tempfile::tempdir().unwrap();
    let (test, _) = pair_dirs(dir.path(), 3);
    let csv = ok(&[
        "evaluate",
        p(&test),
        "--ref",
        p(&test),
        "--metrics",
        "psnr,ssim",
    ]);
    let (header, rows) = parse_csv(&csv);
    assert_eq!(header, ["image", "psnr", "ssim"]);
    let (label, agg) = rows.last().unwrap();
    assert_eq!(label, "AGGREGATE");
    assert_eq!(agg[0], 100.0);
    assert!((agg[1] - 1.0).abs() < 1e-12);
}

#[test]
fn gray_images_score_zero_uiqm() {
    let dir = tempfile::tempdir().unwrap();
    for (i, v) in [40u8, 128, 200].iter().enumerate() {
        save(
            &constant_rgb(16, 16, [*v; 3]),
            &dir.path().join(format!("g{i}.png")),
        );
    }
    let csv = ok(&["evaluate", p(dir.path()), "--metrics", "uiqm,uciqe"]);
    let (_, rows) = parse_csv(&csv);
    assert_eq!(rows.len(), 4);
    for (_, values) in rows {
        assert!(values.iter().all(|v| v.abs() < 1e-12), "{values:?}");
    }
}

#[test]
fn csv_round_trip_matches_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let (test, reference) = pair_dirs(dir.path(), 4);
    let out = dir.path().join("report.csv");
    ok(&[
        "evaluate",
        p(&test),
        "--ref",
        p(&reference),
        "--out",
        p(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(!text.contains('\r'));
    let (header, rows) = parse_csv(&text);
    assert_eq!(header, ["image", "psnr", "ssim", "uiqm", "uciqe"]);
    assert_eq!(rows.len(), 5);
    let (data, agg) = rows.split_at(4);
    for col in 0..4 {
        let mean = data.iter().map(|r| r.1[col]).sum::<f64>() / 4.0;
        assert!((mean - agg[0].1[col]).abs() < 1e-9);
    }
}

#[test]
fn evaluate_json_and_jobs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (test, reference) = pair_dirs(dir.path(), 4);
    let run = |jobs: &str, fmt: &str| {
        ok(&[
            "evaluate",
            p(&test),
            "--ref",
            p(&reference),
            "--jobs",
            jobs,
            "--format",
            fmt,
        ])
    };
    assert_eq!(run("1", "csv"), run("4", "csv"));
    let j1 = run("1", "json");
    assert_eq!(j1, run("3", "json"));
    let v = json(&j1);
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
    assert_eq!(
        v["config"]["metrics"],
        serde_json::json!(["psnr", "ssim", "uiqm", "uciqe"])
    );
    assert!(v["notes"][0].as_str().unwrap().contains("opponent"));
}

#[test]
fn evaluate_errors_and_skips() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert!(!jdpnet(&["evaluate", p(&empty)]).status.success());

    let (test, reference) = pair_dirs(dir.path(), 2);
    save(&random_rgb(9, 24, 20), &test.join("orphan.png"));
    let r = jdpnet(&[
        "evaluate",
        p(&test),
        "--ref",
        p(&reference),
        "--metrics",
        "psnr",
    ]);
    assert!(!r.status.success());
    assert!(stderr(&r).contains("orphan.png"));
    let (_, rows) = parse_csv(&String::from_utf8(r.stdout).unwrap());
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|(name, _)| name != "orphan.png"));

    assert!(!jdpnet(&["evaluate", p(&test), "--metrics", "psnr"])
        .status
        .success());
    assert!(!jdpnet(&["evaluate", p(&test), "--metrics", "psnr,bogus"])
        .status
        .success());
}

#[test]
fn config_file_is_strict_and_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let (test, _) = pair_dirs(dir.path(), 1);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"metrics": "uciqe", "format": "json"}"#).unwrap();
    let v = json(&ok(&["evaluate", p(&test), "--config", p(&cfg)]));
    assert_eq!(v["metrics"], serde_json::json!(["uciqe"]));
    let csv = ok(&[
        "evaluate",
        p(&test),
        "--config",
        p(&cfg),
        "--format",
        "csv",
        "--metrics",
        "uiqm",
    ]);
    assert!(csv.starts_with("image,uiqm\n"));
    fs::write(&cfg, r#"{"metrcs": "uciqe"}"#).unwrap();
    let r = jdpnet(&["evaluate", p(&test), "--config", p(&cfg)]);
    assert!(!r.status.success());
    assert!(stderr(&r).contains("metrcs"));
}

#[test]
fn gradcheck_report_contract() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("r.png");
    save(&random_rgb(5, 32, 32), &img);
    let out = dir.path().join("g.json");
    ok(&[
        "gradcheck",
        p(&img),
        "--samples",
        "12",
        "--seed",
        "3",
        "--out",
        p(&out),
    ]);
    let v = json(&fs::read_to_string(&out).unwrap());
    assert_eq!(v["pass"], true);
    assert_eq!(v["samples"].as_array().unwrap().len(), 36);
    let cos = &v["angles"]["cosine"];
    for i in 0..3 {
        assert!((cos[i][i].as_f64().unwrap() - 1.0).abs() < 1e-9);
        for j in 0..3 {
            assert!((cos[i][j].as_f64().unwrap() - cos[j][i].as_f64().unwrap()).abs() < 1e-12);
        }
    }
    for c in v["steps"]["checks"].as_array().unwrap() {
        if c["tie_free"] == true {
            assert_eq!(c["agree"], true, "{c}");
        }
    }

    let zero = ok(&[
        "gradcheck",
        p(&img),
        "--samples",
        "4",
        "--c1",
        "0",
        "--c2",
        "0",
        "--c3",
        "0",
    ]);
    let v = json(&zero);
    for s in v["samples"].as_array().unwrap() {
        assert_eq!(s["abl"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn gradcheck_rejects_saturated_image() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("sat.png");
    let mut rgb = constant_rgb(8, 8, [0, 255, 0]);
    rgb.put_pixel(3, 3, image::Rgb([255, 0, 255]));
    save(&rgb, &img);
    let r = jdpnet(&["gradcheck", p(&img)]);
    assert!(!r.status.success());
    assert!(stderr(&r).contains("no interior samples"));
}

#[test]
fn weights_init_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let la = ok(&["weights", "init", p(&a), "--seed", "7", "--width", "4"]);
    let lb = ok(&["weights", "init", p(&b), "--seed", "7", "--width", "4"]);
    assert_eq!(la, lb);
    assert_eq!(
        fs::read(a.join("weights.bin")).unwrap(),
        fs::read(b.join("weights.bin")).unwrap()
    );
    assert_eq!(ok(&["weights", "inspect", p(&a)]), la);
}

#[test]
fn truncated_payload_names_first_out_of_bounds_layer() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w");
    ok(&["weights", "init", p(&w), "--width", "4"]);
    let manifest = json(&fs::read_to_string(w.join("manifest.json")).unwrap());
    let payload = w.join("weights.bin");
    let len = fs::metadata(&payload).unwrap().len();
    let cut = len / 2;
    fs::OpenOptions::new()
        .write(true)
        .open(&payload)
        .unwrap()
        .set_len(cut)
        .unwrap();

    let mut layers: Vec<(u64, String, u64)> = manifest["layers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| {
            let shape: Vec<u64> = l["shape"]
                .as_array()
                .unwrap()
                .iter()
                .map(|d| d.as_u64().unwrap())
                .collect();
            let bytes = 4 * (shape.iter().product::<u64>() + shape[0]);
            (
                l["offset"].as_u64().unwrap(),
                l["name"].as_str().unwrap().to_string(),
                bytes,
            )
        })
        .collect();
    layers.sort();
    let expected = layers
        .iter()
        .find(|(off, _, bytes)| off + bytes > cut)
        .unwrap()
        .1
        .clone();

    let r = jdpnet(&["weights", "inspect", p(&w)]);
    assert!(!r.status.success());
    assert!(
        stderr(&r).contains(&format!("`{expected}`")),
        "{}",
        stderr(&r)
    );
}

#[test]
fn width_64_manifest_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w");
    ok(&["weights", "init", p(&w), "--seed", "1"]);
    let manifest = json(&fs::read_to_string(w.join("manifest.json")).unwrap());
    assert_eq!(manifest["channel_width"], 64);
    let shape = |name: &str| -> Vec<u64> {
        manifest["layers"]
            .as_array()
            .unwrap()
            .iter()
            .find(|l| l["name"] == name)
            .unwrap_or_else(|| panic!("{name} missing"))["shape"]
            .as_array()
            .unwrap()
            .iter()
            .map(|d| d.as_u64().unwrap())
            .collect()
    };
    assert_eq!(shape("jfe.enc1.conv1"), [64, 3, 3, 3]);
    assert_eq!(shape("jfe.enc3.conv2"), [64, 64, 3, 3]);
    assert_eq!(shape("jfe.bottleneck.ese.fc1"), [16, 64, 1, 1]);
    assert_eq!(shape("jfe.dec3.conv"), [64, 128, 3, 3]);
    assert_eq!(shape("jfe.dec1.conv"), [128, 128, 3, 3]);
    assert_eq!(shape("pb.pg.mean_loc"), [128, 128, 1, 1]);
    assert_eq!(shape("pb.res.conv1"), [128, 128, 3, 3]);
    assert_eq!(shape("fpp.out"), [3, 128, 3, 3]);
}

#[test]
fn stats_prints_breakdown() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("s.png");
    save(&random_rgb(11, 16, 16), &img);
    let v = json(&ok(&["stats", p(&img), "--blocks", "4x4"]));
    let b = &v["breakdown"];
    let recomposed = 0.029 * b["l_coi"].as_f64().unwrap()
        + 0.295 * b["l_si"].as_f64().unwrap()
        + 3.55 * b["l_cti"].as_f64().unwrap();
    assert!((recomposed - b["abl"].as_f64().unwrap()).abs() < 1e-12);
    assert_eq!(v["abl"]["eme_blocks"], serde_json::json!([4, 4]));
}
