use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ia_core::data::{
    default_sigma, fixations_to_heatmap, load_dataset, make_zeroshot_split, read_ighm, write_ighm,
    write_png, AttentionMap, Record, SplitManifest, DEFAULT_TEST_FRACTION,
};
use ia_core::encoders::EncoderBackend;
use ia_core::hoi::{min_max_normalized, pseudo_label, train_toy, write_pseudo_labels, AlignmentConfig};
use ia_core::metrics::{
    evaluate, write_per_sample_csv, GroundTruthPredictor, HeatmapDirPredictor, ModelPredictor, Predictor,
};
use ia_core::model::Checkpoint;
use ia_core::train::{ablate, prepare_samples, Trainer, Variant};
use image::{Rgb, RgbImage};
use rayon::prelude::*;

use crate::args::{AlignArg, Command, GlobalArgs, KeyArg};
use crate::config::Effective;
use crate::metadata::write_atomic;
use crate::{plot, Failure, F};

pub struct Context<'a> {
    pub global: &'a GlobalArgs,
    pub config: &'a Effective,
}

impl Context<'_> {
    fn out(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.global.out.join(rel)
    }

    fn manifest(&self) -> Result<&Path, Failure> {
        self.global
            .manifest
            .as_deref()
            .ok_or_else(|| Failure::Validation("--manifest is required for this command".into()))
    }

    fn records(&self) -> Result<Vec<Record>, Failure> {
        Ok(load_dataset(self.manifest()?)?)
    }

    /// Directory that relative image paths resolve against.
    fn base_dir(&self) -> Result<PathBuf, Failure> {
        Ok(self
            .manifest()?
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default())
    }

    fn cache_dir(&self) -> Option<PathBuf> {
        std::env::var_os("IA_CACHE_DIR").map(PathBuf::from)
    }

    fn write_json(&self, rel: &str, value: &impl serde::Serialize) -> Result<PathBuf, Failure> {
        let path = self.out(rel);
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)?;
        Ok(path)
    }

    fn write_text(&self, rel: &str, text: &str) -> Result<PathBuf, Failure> {
        let path = self.out(rel);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

fn load_split(path: &Path, records: &[Record]) -> Result<SplitManifest, Failure> {
    let split = SplitManifest::load(path)?;
    let samples: Vec<_> = records.iter().map(|r| r.sample.clone()).collect();
    split.validate(&samples)?;
    Ok(split)
}

fn select(records: &[Record], ids: &[String]) -> Vec<Record> {
    let keep: HashSet<&str> = ids.iter().map(String::as_str).collect();
    records
        .iter()
        .filter(|r| keep.contains(r.sample.sample_id.as_str()))
        .cloned()
        .collect()
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint<F>, Failure> {
    Checkpoint::load(path, None).map_err(|e| match e {
        ia_core::IaError::Io(io) => Failure::Validation(format!("{}: {io}", path.display())),
        other => other.into(),
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

pub fn run(cx: &Context, command: &Command) -> Result<Vec<PathBuf>, Failure> {
    std::fs::create_dir_all(&cx.global.out)?;
    match command {
        Command::ConvertFixations {
            sigma,
            observer,
            no_png,
        } => convert_fixations(cx, *sigma, observer.as_deref(), !no_png),
        Command::Split {
            category_key,
            test_fraction,
        } => split(cx, *category_key, *test_fraction),
        Command::Train {
            split,
            epochs,
            resume,
        } => train(cx, split.as_deref(), *epochs, resume.as_deref()),
        Command::Predict {
            checkpoint,
            split,
            no_png,
        } => predict(cx, checkpoint, split.as_deref(), !no_png),
        Command::Evaluate {
            pred,
            checkpoint,
            oracle,
            split,
            sigma,
        } => evaluate_cmd(cx, pred.as_deref(), checkpoint.as_deref(), *oracle, split.as_deref(), *sigma),
        Command::Ablate {
            split,
            variants,
            epochs,
        } => ablate_cmd(cx, split.as_deref(), variants, *epochs),
        Command::PseudoLabel { checkpoint } => pseudo_label_cmd(cx, checkpoint),
        Command::TrainToy {
            align,
            lambda1,
            lambda2,
        } => train_toy_cmd(cx, *align, *lambda1, *lambda2),
        Command::Plot {
            image,
            maps,
            labels,
            name,
        } => plot_cmd(cx, image, maps, labels, name),
    }
}

fn convert_fixations(
    cx: &Context,
    sigma: Option<f64>,
    observer: Option<&str>,
    png: bool,
) -> Result<Vec<PathBuf>, Failure> {
    let records = cx.records()?;
    let sigma = sigma.or(cx.config.eval.sigma);
    let dir = cx.out("heatmaps");
    std::fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    for r in &records {
        let s = &r.sample;
        let fix = match observer {
            Some(o) => r.fixations.for_observer(o),
            None => r.fixations.clone(),
        };
        let map: AttentionMap<F> =
            fixations_to_heatmap(&fix, s.width, s.height, sigma.unwrap_or_else(|| default_sigma(s.width)))?;
        let path = dir.join(format!("{}.ighm", s.sample_id));
        write_ighm(&path, &map)?;
        written.push(path);
        if png {
            let path = dir.join(format!("{}.png", s.sample_id));
            write_png(&path, &map)?;
            written.push(path);
        }
    }
    log::info!("wrote {} heatmaps", records.len());
    Ok(written)
}

fn split(cx: &Context, key: KeyArg, fraction: Option<f64>) -> Result<Vec<PathBuf>, Failure> {
    let records = cx.records()?;
    let samples: Vec<_> = records.iter().map(|r| r.sample.clone()).collect();
    let manifest = make_zeroshot_split(
        &samples,
        key.into(),
        cx.config.seed,
        fraction.unwrap_or(DEFAULT_TEST_FRACTION),
    )?;
    let path = cx.write_json("split.json", &manifest)?;
    log::info!(
        "{} train / {} test samples",
        manifest.train_ids.len(),
        manifest.test_ids.len()
    );
    Ok(vec![path])
}

fn train(
    cx: &Context,
    split: Option<&Path>,
    epochs: Option<usize>,
    resume: Option<&Path>,
) -> Result<Vec<PathBuf>, Failure> {
    let mut records = cx.records()?;
    if let Some(path) = split {
        let s = load_split(path, &records)?;
        records = select(&records, &s.train_ids);
    }
    let mut config = cx.config.train.clone();
    if let Some(e) = epochs {
        config.epochs = e;
    }
    config.validate()?;
    let (mut trainer, encoder) = match resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            let encoder = ck.meta.encoder.clone();
            (Trainer::<F>::resume(ck, config)?, encoder)
        }
        None => (Trainer::<F>::new(cx.config.model.clone(), config)?, cx.config.encoder.clone()),
    };
    let backend = encoder.build::<F>(cx.cache_dir().as_deref())?;
    let data = prepare_samples(&records, &cx.base_dir()?, backend.as_ref(), &trainer.model.config, trainer.config.sigma)?;
    if data.is_empty() {
        return Err(Failure::Validation("no training samples selected".into()));
    }
    trainer.train(&data)?;
    let mut csv = String::from("epoch,lr,mean_loss\n");
    for e in &trainer.log {
        let _ = writeln!(csv, "{},{:e},{}", e.epoch, e.lr, e.mean_loss);
    }
    let log_path = cx.write_text("loss.csv", &csv)?;
    let ids = data.iter().map(|s| s.record.sample.sample_id.clone()).collect();
    let ck_path = cx.out("checkpoint.iack");
    write_atomic(&ck_path, &trainer.checkpoint(encoder, ids)?.to_bytes()?)?;
    Ok(vec![ck_path, log_path])
}

fn predict(cx: &Context, checkpoint: &Path, split: Option<&Path>, png: bool) -> Result<Vec<PathBuf>, Failure> {
    let ck = load_checkpoint(checkpoint)?;
    let mut records = cx.records()?;
    if let Some(path) = split {
        let s = load_split(path, &records)?;
        records = select(&records, &s.test_ids);
    }
    let backend = ck.meta.encoder.build::<F>(cx.cache_dir().as_deref())?;
    let base = cx.base_dir()?;
    let predictor = ModelPredictor {
        model: &ck.model,
        backend: backend.as_ref(),
        base_dir: base,
    };
    let maps: Vec<ia_core::Result<Option<AttentionMap<F>>>> =
        pool(cx.config.jobs)?.install(|| records.par_iter().map(|r| predictor.predict(r)).collect());
    let dir = cx.out("predictions");
    std::fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    for (r, map) in records.iter().zip(maps) {
        let Some(map) = map? else { continue };
        let path = dir.join(format!("{}.ighm", r.sample.sample_id));
        write_ighm(&path, &map)?;
        written.push(path);
        if png {
            let path = dir.join(format!("{}.png", r.sample.sample_id));
            write_png(&path, &map)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn evaluate_cmd(
    cx: &Context,
    pred: Option<&Path>,
    checkpoint: Option<&Path>,
    oracle: bool,
    split: Option<&Path>,
    sigma: Option<f64>,
) -> Result<Vec<PathBuf>, Failure> {
    let records = cx.records()?;
    let split = split.map(|p| load_split(p, &records)).transpose()?;
    let sigma = sigma.or(cx.config.eval.sigma);
    let ck;
    let backend: Box<dyn EncoderBackend<F>>;
    let predictor: Box<dyn Predictor<F>> = match (pred, checkpoint, oracle) {
        (Some(dir), None, false) => Box::new(HeatmapDirPredictor { dir: dir.to_path_buf() }),
        (None, Some(path), false) => {
            ck = load_checkpoint(path)?;
            backend = ck.meta.encoder.build::<F>(cx.cache_dir().as_deref())?;
            Box::new(ModelPredictor {
                model: &ck.model,
                backend: backend.as_ref(),
                base_dir: cx.base_dir()?,
            })
        }
        (None, None, true) => Box::new(GroundTruthPredictor { sigma }),
        _ => {
            return Err(Failure::Validation(
                "give exactly one of --pred, --checkpoint or --oracle".into(),
            ))
        }
    };
    let ev = evaluate(&records, predictor.as_ref(), split.as_ref(), sigma, cx.config.jobs)?;
    let report = cx.write_json("report.json", &ev.report(sigma))?;
    let csv = cx.out("per_sample.csv");
    write_per_sample_csv(&csv, &ev.per_sample)?;
    log::info!(
        "cc {:.4} kldiv {:.4} sim {:.4} auc {:.4} over {} samples",
        ev.report.cc,
        ev.report.kldiv,
        ev.report.sim,
        ev.report.auc,
        ev.report.n_samples
    );
    Ok(vec![report, csv])
}

fn ablate_cmd(
    cx: &Context,
    split: Option<&Path>,
    variants: &[String],
    epochs: Option<usize>,
) -> Result<Vec<PathBuf>, Failure> {
    let records = cx.records()?;
    let split = match split {
        Some(path) => load_split(path, &records)?,
        None => {
            let samples: Vec<_> = records.iter().map(|r| r.sample.clone()).collect();
            make_zeroshot_split(
                &samples,
                ia_core::data::CategoryKey::InteractionPair,
                cx.config.seed,
                DEFAULT_TEST_FRACTION,
            )?
        }
    };
    let variants: Vec<Variant> = if variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        variants.iter().map(|v| v.trim().parse()).collect::<ia_core::Result<_>>()?
    };
    let mut config = cx.config.train.clone();
    if let Some(e) = epochs {
        config.epochs = e;
    }
    let backend = cx.config.encoder.build::<F>(cx.cache_dir().as_deref())?;
    let base = cx.base_dir()?;
    let model = &cx.config.model;
    let train = prepare_samples(&select(&records, &split.train_ids), &base, backend.as_ref(), model, config.sigma)?;
    let test = prepare_samples(&select(&records, &split.test_ids), &base, backend.as_ref(), model, config.sigma)?;
    let rows = ablate(&train, &test, model, &config, &variants, cx.config.jobs)?;
    let json = cx.write_json("ablation.json", &rows)?;
    let mut csv = String::from("variant,final_loss,n_params,cc,kldiv,sim,auc\n");
    for r in &rows {
        let m = &r.metrics;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.variant, r.final_loss, r.n_params, m.cc, m.kldiv, m.sim, m.auc
        );
    }
    let csv = cx.write_text("ablation.csv", &csv)?;
    let split_path = cx.write_json("split.json", &split)?;
    Ok(vec![json, csv, split_path])
}

fn pseudo_label_cmd(cx: &Context, checkpoint: &Path) -> Result<Vec<PathBuf>, Failure> {
    let ck = load_checkpoint(checkpoint)?;
    let records = cx.records()?;
    let backend = ck.meta.encoder.build::<F>(cx.cache_dir().as_deref())?;
    let labels = pseudo_label(&ck, &records, &cx.base_dir()?, backend.as_ref(), cx.config.jobs)?;
    Ok(write_pseudo_labels(&cx.out("pseudo"), &labels)?)
}

fn gray_to_rgb(m: &ia_core::tensor::Matrix<F>) -> RgbImage {
    RgbImage::from_fn(m.cols() as u32, m.rows() as u32, |x, y| {
        let v = (m.get(y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([v, v, v])
    })
}

fn train_toy_cmd(
    cx: &Context,
    align: AlignArg,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
) -> Result<Vec<PathBuf>, Failure> {
    let align = align.source().map(|source| AlignmentConfig {
        lambda1: lambda1.unwrap_or(cx.config.align.lambda1),
        lambda2: lambda2.unwrap_or(cx.config.align.lambda2),
        source,
    });
    if align.is_none() && (lambda1.is_some() || lambda2.is_some()) {
        return Err(Failure::Validation("--lambda1/--lambda2 need --align human or ia".into()));
    }
    let (_, report) = train_toy::<F>(&cx.config.toy, align.as_ref(), cx.config.seed)?;
    let mut written = vec![cx.write_json("toy_report.json", &report)?];
    let dir = cx.out("attention");
    std::fs::create_dir_all(&dir)?;
    for (k, (map, sample)) in report.attention.iter().zip(&report.test_samples).enumerate() {
        let img = gray_to_rgb(&sample.pixels);
        let labels = vec![format!("class {}", sample.label), "cue".into(), "attn".into()];
        let fig = plot::figure(&img, &[sample.cue_mask.clone(), min_max_normalized(map)], &labels)?;
        let path = dir.join(format!("sample{k}.png"));
        write_atomic(&path, &plot::encode_png(&fig)?)?;
        written.push(path);
    }
    log::info!(
        "accuracy {:.3}, in-mask attention {:.3}",
        report.accuracy,
        report.in_mask_fraction
    );
    Ok(written)
}

fn plot_cmd(
    cx: &Context,
    image_path: &Path,
    maps: &[PathBuf],
    labels: &[String],
    name: &str,
) -> Result<Vec<PathBuf>, Failure> {
    let img = image::open(image_path)
        .map_err(|e| Failure::Validation(format!("{}: {e}", image_path.display())))?
        .to_rgb8();
    let maps: Vec<AttentionMap<F>> = maps.iter().map(read_ighm).collect::<ia_core::Result<_>>()?;
    let fig = plot::figure(&img, &maps, labels)?;
    let path = cx.out(name);
    write_atomic(&path, &plot::encode_png(&fig)?)?;
    Ok(vec![path])
}
