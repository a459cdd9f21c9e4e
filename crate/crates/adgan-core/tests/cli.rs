//! End-to-end exercise of every CLI subcommand on a tiny configuration:
//! synth-masks -> gen-phantom -> train -> translate/segment/instances/
//! synthesize/interpolate -> evaluate/diagnose/export-features, plus the
//! checkpoint and config utilities.

use std::path::Path;
use std::process::Command;

fn adgan() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adgan"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn adgan");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_tiny_config(path: &Path) {
    let cfg = serde_json::json!({
        "generator": {
            "base_channels": 8,
            "content_channels": 16,
            "n_res_blocks_enc": 1,
            "n_res_blocks_dec": 1,
            "scale_preset": "full"
        },
        "train": {
            "total_iters": 2,
            "const_lr_iters": 1,
            "batch_size": 2,
            "crop": 32,
            "seed": 11,
            "checkpoint_interval": 0
        },
        "masksynth": {
            "n_max": 4,
            "a_range": [5.0, 8.0],
            "e_range": [0.25, 0.75],
            "canvas": [32, 32],
            "max_attempts_per_object": 100
        }
    });
    std::fs::write(path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
}

#[test]
fn full_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg_path = root.join("config.json");
    write_tiny_config(&cfg_path);

    // synth-masks writes PNGs plus JSON geometry sidecars.
    let masks_dir = root.join("masks");
    run_ok(adgan()
        .args(["synth-masks", "--count", "3", "--out"])
        .arg(&masks_dir)
        .arg("--config")
        .arg(&cfg_path));
    assert!(masks_dir.join("mask_00000.png").exists());
    let sidecar = std::fs::read_to_string(masks_dir.join("mask_00000.json")).unwrap();
    assert!(sidecar.contains("ellipses"));

    // gen-phantom builds the dataset tree with a manifest.
    let data_dir = root.join("data");
    run_ok(adgan()
        .args(["gen-phantom", "--count", "4", "--out"])
        .arg(&data_dir)
        .arg("--config")
        .arg(&cfg_path));
    for sub in ["images", "gt_masks", "gt_labels", "unpaired_masks"] {
        assert!(data_dir.join(sub).is_dir(), "{sub} missing");
    }
    assert!(data_dir.join("manifest.json").exists());

    // train for two iterations.
    let run_dir = root.join("run");
    run_ok(adgan()
        .args(["train"])
        .arg("--images")
        .arg(data_dir.join("images"))
        .arg("--masks")
        .arg(data_dir.join("unpaired_masks"))
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&run_dir));
    let ckpt = run_dir.join("checkpoints/ckpt_final.bin");
    assert!(ckpt.exists());
    let log = std::fs::read_to_string(run_dir.join("training_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3, "header plus two rows:\n{log}");
    assert!(log.starts_with("iteration,l_rec,l_adv_d,l_adv_g,l_ctr,l_cyc,total,lr"));

    // describe-checkpoint reports the iteration.
    let desc = run_ok(adgan().args(["describe-checkpoint", "--ckpt"]).arg(&ckpt));
    assert!(desc.contains("iteration: 2"), "{desc}");

    // translate / segment / segment-instances / synthesize over the images.
    let images = data_dir.join("images");
    for (cmd, outdir) in [
        ("translate", "translated"),
        ("segment", "segmented"),
        ("segment-instances", "instances"),
    ] {
        run_ok(adgan()
            .args([cmd, "--ckpt"])
            .arg(&ckpt)
            .arg("--input")
            .arg(&images)
            .arg("--out")
            .arg(root.join(outdir)));
        assert!(root.join(outdir).join("img_00000.png").exists());
    }
    run_ok(adgan()
        .args(["synthesize", "--ckpt"])
        .arg(&ckpt)
        .arg("--input")
        .arg(data_dir.join("unpaired_masks"))
        .arg("--out")
        .arg(root.join("synth")));
    assert!(root.join("synth").join("mask_00000.png").exists());

    // interpolate a single frame sequence.
    run_ok(adgan()
        .args(["interpolate", "--steps", "4", "--ckpt"])
        .arg(&ckpt)
        .arg("--input")
        .arg(images.join("img_00000.png"))
        .arg("--out")
        .arg(root.join("interp")));
    for k in 0..4 {
        assert!(root.join("interp").join(format!("img_00000_{k:02}.png")).exists());
    }

    // evaluate segmentation against the quarantined ground truth.
    let report_path = root.join("report.json");
    let out = run_ok(adgan()
        .args(["evaluate", "--pred"])
        .arg(root.join("segmented"))
        .arg("--gt")
        .arg(data_dir.join("gt_masks"))
        .arg("--out")
        .arg(&report_path));
    assert!(out.contains("dice_mean"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["aggregate"]["n_images"], 4);
    assert!(root.join("report.csv").exists());

    // instance evaluation against gt labels.
    run_ok(adgan()
        .args(["evaluate", "--instance", "--pred"])
        .arg(root.join("instances"))
        .arg("--gt")
        .arg(data_dir.join("gt_labels"))
        .arg("--out")
        .arg(root.join("instance_report.json")));

    // diagnose: lossy-transformation report against reference labels.
    let diag = run_ok(adgan()
        .args(["diagnose", "--pred"])
        .arg(root.join("instances"))
        .arg("--ref")
        .arg(data_dir.join("gt_labels"))
        .arg("--out")
        .arg(root.join("diag.json")));
    assert!(diag.contains("abs_count_delta_mean"));

    // export-features: one CSV row per image.
    run_ok(adgan()
        .args(["export-features", "--domain", "image", "--ckpt"])
        .arg(&ckpt)
        .arg("--images")
        .arg(&images)
        .arg("--out")
        .arg(root.join("features.csv")));
    let features = std::fs::read_to_string(root.join("features.csv")).unwrap();
    assert_eq!(features.lines().count(), 5, "header + 4 rows");

    // default-config emits the single source of truth.
    run_ok(adgan()
        .args(["default-config", "--out"])
        .arg(root.join("default.json")));
    let def: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("default.json")).unwrap()).unwrap();
    assert_eq!(def["train"]["lr"], 1e-4);
}

#[test]
fn help_exits_zero_and_unknown_flag_exits_two() {
    let out = adgan().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "synth-masks",
        "gen-phantom",
        "train",
        "translate",
        "segment",
        "segment-instances",
        "synthesize",
        "interpolate",
        "evaluate",
        "diagnose",
        "export-features",
        "describe-checkpoint",
    ] {
        assert!(text.contains(sub), "--help missing {sub}");
    }

    let out = adgan().args(["train", "--bogus-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = adgan().arg("no-such-subcommand").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resume_continues_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg_path = root.join("config.json");
    write_tiny_config(&cfg_path);
    let data_dir = root.join("data");
    run_ok(adgan()
        .args(["gen-phantom", "--count", "3", "--out"])
        .arg(&data_dir)
        .arg("--config")
        .arg(&cfg_path));

    let run_dir = root.join("run");
    run_ok(adgan()
        .args(["train"])
        .arg("--images")
        .arg(data_dir.join("images"))
        .arg("--masks")
        .arg(data_dir.join("unpaired_masks"))
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&run_dir));
    let ckpt = run_dir.join("checkpoints/ckpt_final.bin");

    // Extend the schedule and resume.
    let mut loaded = adgan_core::checkpoint::Checkpoint::load(&ckpt).unwrap();
    loaded.train.total_iters = 4;
    let extended = root.join("extended.bin");
    loaded.save(&extended).unwrap();

    let cfg4 = root.join("config4.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&cfg_path).unwrap()).unwrap();
    v["train"]["total_iters"] = 4.into();
    std::fs::write(&cfg4, serde_json::to_string(&v).unwrap()).unwrap();

    let run2 = root.join("run2");
    run_ok(adgan()
        .args(["train"])
        .arg("--images")
        .arg(data_dir.join("images"))
        .arg("--masks")
        .arg(data_dir.join("unpaired_masks"))
        .arg("--config")
        .arg(&cfg4)
        .arg("--out")
        .arg(&run2)
        .arg("--resume")
        .arg(&extended));
    let desc = run_ok(adgan()
        .args(["describe-checkpoint", "--ckpt"])
        .arg(run2.join("checkpoints/ckpt_final.bin")));
    assert!(desc.contains("iteration: 4"), "{desc}");
}
