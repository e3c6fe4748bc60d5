use std::fs;
use std::path::Path;

use super::config::RunConfig;
use super::dataset::{build_dataset, Dataset, DatasetSummary};
use super::train::{train, TrainOutcome, TrainPaths, TrainState};
use super::CliError;
use crate::diffcore::Checkpoint;
use crate::eval::{comparison_table, evaluate, transcribe_image, SerReport, Subset};
use crate::model::{preprocess, DecoderKind, Model, Transcription};
use crate::render::StaffImage;

pub fn cmd_dataset(cfg: &RunConfig) -> Result<DatasetSummary, CliError> {
    let s = build_dataset(cfg, &cfg.data)?;
    log::info!(
        "dataset {}: {} samples (train {}, val {}, test {}), {} hard, {} rejected",
        cfg.data.display(),
        s.samples,
        s.train,
        s.val,
        s.test,
        s.hard,
        s.rejected.len()
    );
    Ok(s)
}

/// Loads a model checkpoint; when `requested` is set it must match the
/// checkpoint's decoder.
pub fn load_model(path: &Path, requested: Option<DecoderKind>) -> Result<Model, CliError> {
    let ck = Checkpoint::load(path).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    let model = Model::from_checkpoint(&ck)?;
    if let Some(kind) = requested {
        if kind != model.kind() {
            return Err(CliError::Checkpoint(format!(
                "{} holds a `{}` decoder but `{kind}` was requested",
                path.display(),
                model.kind()
            )));
        }
    }
    Ok(model)
}

#[derive(Debug)]
pub struct TrainReport {
    pub outcome: TrainOutcome,
    pub paths: TrainPaths,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport, CliError> {
    cfg.validate()?;
    let kind = cfg.decoder.unwrap_or(DecoderKind::Baseline);
    let opts = cfg.train_options();
    let paths = TrainPaths::beside(&cfg.checkpoint);
    let mut state = if cfg.resume {
        let s = TrainState::resume(&paths.state, &opts)?;
        if s.model.kind() != kind {
            return Err(CliError::Checkpoint(format!(
                "{} holds a `{}` decoder but `{kind}` was requested",
                paths.state.display(),
                s.model.kind()
            )));
        }
        s
    } else {
        TrainState::new(Model::new(cfg.model_config(kind)?, cfg.seed)?, cfg.learning_rate)
    };
    let height = state.model.config().encoder.input_height;
    let data = Dataset::open(&cfg.data)?;
    let mut train_ids = data.manifest("train")?;
    let val_ids = match cfg.overfit {
        Some(n) => {
            if train_ids.len() < n {
                return Err(CliError::Config(format!("overfit {n} exceeds the {} training samples", train_ids.len())));
            }
            train_ids.truncate(n);
            train_ids.clone()
        }
        None => {
            let mut v = data.manifest("val")?;
            if cfg.val_samples > 0 {
                v.truncate(cfg.val_samples);
            }
            v
        }
    };
    let mut train_set = data.train_samples(&train_ids, kind, height)?;
    let encoder = &state.model.config().encoder;
    let before = train_set.len();
    train_set.retain(|s| {
        let ok = s.fits(encoder);
        if !ok {
            log::warn!("{}: labels need more slices than the image gives; skipped", s.id);
        }
        ok
    });
    if train_set.is_empty() {
        return Err(CliError::Dataset(format!("none of the {before} training samples fits the encoder")));
    }
    let val_set = data.train_samples(&val_ids, kind, height)?;
    if let Some(dir) = cfg.checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let outcome = train(&mut state, &train_set, &val_set, &opts, Some(&paths))?;
    Ok(TrainReport { outcome, paths })
}

/// Scores the checkpoint on the test split and its hard part, and writes
/// `<reports>/<decoder>.txt` (table) and `<reports>/<decoder>.records`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<Vec<SerReport>, CliError> {
    let model = load_model(&cfg.checkpoint, cfg.decoder)?;
    let kind = model.kind();
    let data = Dataset::open(&cfg.data)?;
    let test = data.manifest("test")?;
    let hard: std::collections::HashSet<String> = data.manifest("hard")?.into_iter().collect();
    let height = model.config().encoder.input_height;
    let mut reports = Vec::new();
    let full = data.eval_samples(&test, height)?;
    reports.push(evaluate(&model, kind, Subset::Full, &full)?);
    let hard_samples: Vec<_> = full.into_iter().filter(|s| hard.contains(&s.id)).collect();
    if hard_samples.is_empty() {
        log::warn!("test split has no hard samples; hard report skipped");
    } else {
        reports.push(evaluate(&model, kind, Subset::Hard, &hard_samples)?);
    }
    fs::create_dir_all(&cfg.reports)?;
    fs::write(cfg.reports.join(format!("{kind}.txt")), comparison_table(&reports))?;
    let records: String = reports.iter().map(|r| r.record() + "\n").collect();
    fs::write(cfg.reports.join(format!("{kind}.records")), records)?;
    for r in &reports {
        log::info!("{}", r.record());
    }
    Ok(reports)
}

/// Greedy transcription of one image file.
pub fn cmd_transcribe(cfg: &RunConfig, image: &Path) -> Result<Transcription, CliError> {
    let model = load_model(&cfg.checkpoint, cfg.decoder)?;
    let img = StaffImage::load(image)?;
    let x = preprocess(&img, model.config().encoder.input_height)?;
    Ok(transcribe_image(&model, &x)?)
}
