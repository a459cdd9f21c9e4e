//! Command-line front end for the image-to-mask translation pipeline:
//! synthetic mask generation, phantom dataset rendering, training,
//! translation/segmentation inference, evaluation and diagnostics.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use adgan_core::checkpoint::Checkpoint;
use adgan_core::config::{load_config, save_config, RunConfig};
use adgan_core::dataset::{list_images, load_folder};
use adgan_core::diagnostics::{export_content_features, lossy_report};
use adgan_core::image_io::{load_image, load_label_png16, save_image, save_label_png16};
use adgan_core::inference::{
    binarize, instance_segment, interpolate_domains, translate, TileConfig, TERNARY_HI, TERNARY_LO,
};
use adgan_core::masksynth::{generate_mask, rasterize_instance_mask, rasterize_mask};
use adgan_core::metrics::{mean_std, object_f1, pixel_metrics};
use adgan_core::model::{AdGanModel, DomainLabel};
use adgan_core::morphology::{connected_components, LabelMap};
use adgan_core::phantom::make_dataset;
use adgan_core::trainer::fit;

#[derive(Parser)]
#[command(
    name = "adgan",
    version,
    about = "Unsupervised nuclei segmentation via unpaired image-to-mask translation"
)]
struct Cli {
    /// Override the RNG seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DomainArg {
    Image,
    Mask,
}

impl DomainArg {
    fn label(self) -> DomainLabel {
        match self {
            DomainArg::Image => DomainLabel::image(),
            DomainArg::Mask => DomainLabel::mask(),
        }
    }
}

#[derive(Args)]
struct TileArgs {
    /// Tile size for full-frame inference (multiple of 4).
    #[arg(long, default_value_t = 256)]
    tile: usize,
    /// Tile overlap in pixels (>= 16).
    #[arg(long, default_value_t = 32)]
    overlap: usize,
}

impl TileArgs {
    fn config(&self) -> TileConfig {
        TileConfig {
            tile: self.tile,
            overlap: self.overlap,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic ellipse masks (PNG + JSON geometry sidecars).
    SynthMasks {
        /// Run config JSON (defaults used when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write ternary instance masks (gray object edges).
        #[arg(long)]
        instance: bool,
    },
    /// Render a phantom microscopy dataset with quarantined ground truth.
    GenPhantom {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Rasterize the unpaired mask domain as instance (ternary) masks.
        #[arg(long)]
        instance: bool,
    },
    /// Train on two unpaired directories.
    Train {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Resume from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Train this many independent runs (seed, seed+1, ...), each in
        /// its own subdirectory, and report per-run checkpoints.
        #[arg(long, default_value_t = 1)]
        repeats: u64,
    },
    /// Translate images between domains.
    Translate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Input file or directory.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = DomainArg::Image)]
        src: DomainArg,
        #[arg(long, value_enum, default_value_t = DomainArg::Mask)]
        dst: DomainArg,
        #[command(flatten)]
        tiling: TileArgs,
    },
    /// Semantic segmentation: image -> mask domain -> binary PNG.
    Segment {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Binarization threshold in [-1, 1].
        #[arg(long, default_value_t = 0.0)]
        threshold: f32,
        #[command(flatten)]
        tiling: TileArgs,
    },
    /// Instance segmentation: ternarize the translation and watershed.
    SegmentInstances {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = TERNARY_LO)]
        t_lo: f32,
        #[arg(long, default_value_t = TERNARY_HI)]
        t_hi: f32,
        #[command(flatten)]
        tiling: TileArgs,
    },
    /// Synthesize images from masks (mask -> image direction).
    Synthesize {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tiling: TileArgs,
    },
    /// Decode one input under interpolated domain labels.
    Interpolate {
        #[arg(long)]
        ckpt: PathBuf,
        /// A single image file.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = DomainArg::Image)]
        src: DomainArg,
        #[arg(long, value_enum, default_value_t = DomainArg::Mask)]
        dst: DomainArg,
    },
    /// Compare predictions against ground truth (pixel or object level).
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Object-level evaluation of 16-bit label maps.
        #[arg(long)]
        instance: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lossy-transformation report: prediction vs reference label maps.
    Diagnose {
        #[arg(long)]
        pred: PathBuf,
        /// Reference labels (16-bit PNG).
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export spatially pooled content features as CSV.
    ExportFeatures {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long, value_enum)]
        domain: DomainArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print checkpoint iteration and parameter shapes.
    DescribeCheckpoint {
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Write the default configuration file.
    DefaultConfig {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_run_config(
    path: &Option<PathBuf>,
    seed: Option<u64>,
) -> Result<RunConfig, Box<dyn std::error::Error>> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn load_model(ckpt: &Path) -> Result<AdGanModel, Box<dyn std::error::Error>> {
    let ckpt = Checkpoint::load(ckpt)?;
    Ok(ckpt.restore_model()?)
}

/// Input files: a directory of images or one file.
fn input_files(input: &Path) -> Result<Vec<PathBuf>, Box<dyn std::error::Error>> {
    if input.is_dir() {
        Ok(list_images(input)?)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

fn out_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into())
}

fn ensure_parent(out: &Path) -> std::io::Result<()> {
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::SynthMasks {
            config,
            count,
            out,
            instance,
        } => {
            let cfg = load_run_config(&config, cli.seed)?;
            std::fs::create_dir_all(&out)?;
            let base_seed = cfg.train.seed;
            for i in 0..count {
                let seed = adgan_core::rng::derive_seed(base_seed, 0x6d61736b, i as u64);
                let spec = generate_mask(&cfg.masksynth, seed)?;
                let img = if instance {
                    rasterize_instance_mask(&spec, 2)
                } else {
                    rasterize_mask(&spec)
                };
                let name = format!("mask_{i:05}");
                save_image(&img, out.join(format!("{name}.png")), 8)?;
                std::fs::write(
                    out.join(format!("{name}.json")),
                    serde_json::to_string_pretty(&spec)?,
                )?;
            }
            println!("wrote {count} masks to {}", out.display());
        }
        Command::GenPhantom {
            config,
            count,
            out,
            instance,
        } => {
            let cfg = load_run_config(&config, cli.seed)?;
            let manifest = make_dataset(
                count,
                &cfg.masksynth,
                &cfg.phantom,
                cfg.train.seed,
                &out,
                instance,
            )?;
            println!(
                "wrote {} images + {} unpaired masks to {}",
                manifest.images.len(),
                manifest.unpaired_masks.len(),
                out.display()
            );
        }
        Command::Train {
            images,
            masks,
            config,
            out,
            resume,
            repeats,
        } => {
            let cfg = load_run_config(&config, cli.seed)?;
            if repeats <= 1 {
                let outcome = fit(
                    &images,
                    &masks,
                    cfg.generator,
                    cfg.train,
                    &out,
                    resume.as_deref(),
                )?;
                println!(
                    "trained to iteration {}; checkpoint {}",
                    outcome.rows.last().map(|r| r.iteration + 1).unwrap_or(0),
                    outcome.final_checkpoint.display()
                );
            } else {
                for r in 0..repeats {
                    let mut run_cfg = cfg.train.clone();
                    run_cfg.seed = cfg.train.seed + r;
                    let run_out = out.join(format!("run_{r:02}"));
                    let outcome =
                        fit(&images, &masks, cfg.generator, run_cfg, &run_out, None)?;
                    println!(
                        "run {r}: seed {} -> {}",
                        cfg.train.seed + r,
                        outcome.final_checkpoint.display()
                    );
                }
            }
        }
        Command::Translate {
            ckpt,
            input,
            out,
            src,
            dst,
            tiling,
        } => {
            let model = load_model(&ckpt)?;
            std::fs::create_dir_all(&out)?;
            for f in input_files(&input)? {
                let img = load_image(&f)?;
                let y = translate(&model, &img, &src.label(), &dst.label(), &tiling.config())?;
                save_image(&y, out.join(format!("{}.png", out_name(&f))), 16)?;
            }
            println!("translated into {}", out.display());
        }
        Command::Segment {
            ckpt,
            input,
            out,
            threshold,
            tiling,
        } => {
            let model = load_model(&ckpt)?;
            std::fs::create_dir_all(&out)?;
            for f in input_files(&input)? {
                let img = load_image(&f)?;
                let y = translate(
                    &model,
                    &img,
                    &DomainLabel::image(),
                    &DomainLabel::mask(),
                    &tiling.config(),
                )?;
                let mask = binarize(&y, threshold);
                save_image(&mask, out.join(format!("{}.png", out_name(&f))), 8)?;
            }
            println!("segmented into {}", out.display());
        }
        Command::SegmentInstances {
            ckpt,
            input,
            out,
            t_lo,
            t_hi,
            tiling,
        } => {
            let model = load_model(&ckpt)?;
            std::fs::create_dir_all(&out)?;
            for f in input_files(&input)? {
                let img = load_image(&f)?;
                let labels = instance_segment(&model, &img, t_lo, t_hi, &tiling.config())?;
                save_label_png16(
                    labels.data(),
                    labels.height,
                    labels.width,
                    out.join(format!("{}.png", out_name(&f))),
                )?;
            }
            println!("instance maps written to {}", out.display());
        }
        Command::Synthesize {
            ckpt,
            input,
            out,
            tiling,
        } => {
            let model = load_model(&ckpt)?;
            std::fs::create_dir_all(&out)?;
            for f in input_files(&input)? {
                let mask = load_image(&f)?;
                let y = translate(
                    &model,
                    &mask,
                    &DomainLabel::mask(),
                    &DomainLabel::image(),
                    &tiling.config(),
                )?;
                save_image(&y, out.join(format!("{}.png", out_name(&f))), 16)?;
            }
            println!("synthesized into {}", out.display());
        }
        Command::Interpolate {
            ckpt,
            input,
            out,
            steps,
            src,
            dst,
        } => {
            let model = load_model(&ckpt)?;
            std::fs::create_dir_all(&out)?;
            let img = load_image(&input)?;
            let frames = interpolate_domains(&model, &img, &src.label(), &dst.label(), steps)?;
            let stem = out_name(&input);
            for (k, frame) in frames.iter().enumerate() {
                save_image(frame, out.join(format!("{stem}_{k:02}.png")), 16)?;
            }
            println!("wrote {} frames to {}", frames.len(), out.display());
        }
        Command::Evaluate {
            pred,
            gt,
            instance,
            out,
        } => {
            let report = evaluate_dirs(&pred, &gt, instance)?;
            ensure_parent(&out)?;
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            let csv = out.with_extension("csv");
            std::fs::write(&csv, report_csv(&report))?;
            println!("{}", report["aggregate"]);
            println!("report: {} and {}", out.display(), csv.display());
        }
        Command::Diagnose {
            pred,
            reference,
            out,
        } => {
            let report = diagnose_dirs(&pred, &reference)?;
            ensure_parent(&out)?;
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            println!("{}", report["aggregate"]);
        }
        Command::ExportFeatures {
            ckpt,
            images,
            domain,
            out,
        } => {
            let model = load_model(&ckpt)?;
            let folder = load_folder(&images)?;
            let named: Vec<(String, adgan_core::image_io::ImageTensor)> = folder
                .files
                .iter()
                .zip(folder.images)
                .map(|(f, img)| (out_name(f), img))
                .collect();
            let tag = match domain {
                DomainArg::Image => "image",
                DomainArg::Mask => "mask",
            };
            let mut buf = Vec::new();
            let n = export_content_features(&model, &named, &domain.label(), tag, &mut buf)?;
            ensure_parent(&out)?;
            std::fs::write(&out, buf)?;
            println!("wrote {n} feature rows to {}", out.display());
        }
        Command::DescribeCheckpoint { ckpt } => {
            let c = Checkpoint::load(&ckpt)?;
            print!("{}", c.describe());
        }
        Command::DefaultConfig { out } => {
            ensure_parent(&out)?;
            save_config(&RunConfig::default(), &out)?;
            println!("default config written to {}", out.display());
        }
    }
    Ok(())
}

fn matched_pairs(
    pred: &Path,
    gt: &Path,
) -> Result<Vec<(PathBuf, PathBuf)>, Box<dyn std::error::Error>> {
    let preds = list_images(pred)?;
    let mut pairs = Vec::new();
    for p in preds {
        let name = p.file_name().expect("file");
        let g = gt.join(name);
        if g.exists() {
            pairs.push((p, g));
        }
    }
    if pairs.is_empty() {
        return Err(format!(
            "no filename-matched pairs between {} and {}",
            pred.display(),
            gt.display()
        )
        .into());
    }
    Ok(pairs)
}

fn load_labels(path: &Path) -> Result<LabelMap, Box<dyn std::error::Error>> {
    let (data, h, w) = load_label_png16(path)?;
    let mut lm = LabelMap::new(h, w, data);
    lm.relabel_contiguous();
    Ok(lm)
}

fn evaluate_dirs(
    pred: &Path,
    gt: &Path,
    instance: bool,
) -> Result<serde_json::Value, Box<dyn std::error::Error>> {
    let pairs = matched_pairs(pred, gt)?;
    let mut per_image = Vec::new();
    let mut dices = Vec::new();
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    let mut f1s = Vec::new();
    let mut segs = Vec::new();
    for (p, g) in &pairs {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        if instance {
            let pl = load_labels(p)?;
            let gl = load_labels(g)?;
            let r = object_f1(&pl, &gl, 0.5)?;
            f1s.push(r.f1);
            segs.push(r.seg_score);
            per_image.push(serde_json::json!({ "image": name, "object": r }));
        } else {
            let pm = load_image(p)?;
            let gm = load_image(g)?;
            let r = pixel_metrics(&pm, &gm)?;
            dices.push(r.dice);
            precisions.push(r.precision);
            recalls.push(r.recall);
            per_image.push(serde_json::json!({ "image": name, "pixel": r }));
        }
    }
    let aggregate = if instance {
        let (f1_m, f1_s) = mean_std(&f1s);
        let (seg_m, seg_s) = mean_std(&segs);
        serde_json::json!({
            "n_images": pairs.len(),
            "object_f1_mean": f1_m, "object_f1_std": f1_s,
            "seg_mean": seg_m, "seg_std": seg_s,
        })
    } else {
        let (d_m, d_s) = mean_std(&dices);
        let (p_m, p_s) = mean_std(&precisions);
        let (r_m, r_s) = mean_std(&recalls);
        serde_json::json!({
            "n_images": pairs.len(),
            "dice_mean": d_m, "dice_std": d_s,
            "precision_mean": p_m, "precision_std": p_s,
            "recall_mean": r_m, "recall_std": r_s,
        })
    };
    Ok(serde_json::json!({ "aggregate": aggregate, "per_image": per_image }))
}

fn report_csv(report: &serde_json::Value) -> String {
    let mut out = String::new();
    let per_image = report["per_image"].as_array().cloned().unwrap_or_default();
    if per_image.is_empty() {
        return out;
    }
    if per_image[0].get("pixel").is_some() {
        out.push_str("image,n_tp,n_fp,n_fn,precision,recall,dice\n");
        for row in &per_image {
            let p = &row["pixel"];
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row["image"].as_str().unwrap_or(""),
                p["n_tp"],
                p["n_fp"],
                p["n_fn"],
                p["precision"],
                p["recall"],
                p["dice"]
            ));
        }
    } else {
        out.push_str("image,n_gt,n_pred,matches,f1,seg_score\n");
        for row in &per_image {
            let o = &row["object"];
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row["image"].as_str().unwrap_or(""),
                o["n_gt"],
                o["n_pred"],
                o["matches"],
                o["f1"],
                o["seg_score"]
            ));
        }
    }
    out
}

fn diagnose_dirs(
    pred: &Path,
    reference: &Path,
) -> Result<serde_json::Value, Box<dyn std::error::Error>> {
    let pairs = matched_pairs(pred, reference)?;
    let mut per_image = Vec::new();
    let mut abs_deltas = Vec::new();
    let mut offsets = Vec::new();
    for (p, r) in &pairs {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        // Accept 16-bit label maps or binary masks (labeled by components).
        let pl = load_labels(p).or_else(|_| -> Result<LabelMap, Box<dyn std::error::Error>> {
            Ok(connected_components(&load_image(p)?))
        })?;
        let rl = load_labels(r)?;
        let rep = lossy_report(&pl, &rl)?;
        abs_deltas.push(rep.count_delta.unsigned_abs() as f64);
        offsets.push(rep.mean_offset);
        per_image.push(serde_json::json!({ "image": name, "report": rep }));
    }
    let (cd_m, cd_s) = mean_std(&abs_deltas);
    let (of_m, of_s) = mean_std(&offsets);
    Ok(serde_json::json!({
        "aggregate": {
            "n_images": pairs.len(),
            "abs_count_delta_mean": cd_m, "abs_count_delta_std": cd_s,
            "mean_offset_mean": of_m, "mean_offset_std": of_s,
        },
        "per_image": per_image,
    }))
}

fn main() -> ExitCode {
    // Device selection hook: this build is CPU-only.
    if let Ok(dev) = std::env::var("ADGAN_DEVICE") {
        if !dev.eq_ignore_ascii_case("cpu") && !dev.is_empty() {
            eprintln!("error: ADGAN_DEVICE={dev} is not available; this build supports cpu only");
            return ExitCode::FAILURE;
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
