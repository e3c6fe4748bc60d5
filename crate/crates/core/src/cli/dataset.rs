//! On-disk dataset layout:
//!
//! ```text
//! <dir>/config.toml          run configuration the dataset was built with
//! <dir>/labels.jsonl         one label record per sample
//! <dir>/images/<id>.png      rendered staff images
//! <dir>/train.txt, val.txt, test.txt
//! <dir>/hard.txt             ids with density >= threshold (all splits)
//! <dir>/stats.txt            corpus statistics as key=value lines
//! <dir>/rejected.txt         MusicXML inputs that were skipped, with reasons
//! ```
//!
//! Manifests list one sample id per line. Every file is a pure function of
//! the configuration, so rebuilding with the same seed reproduces the bytes.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::train::TrainSample;
use super::CliError;
use crate::codecs::{encode_advance, read_records, write_records, LabelRecord};
use crate::eval::EvalSample;
use crate::ingest::{compute_stats, dataset_filter, hard_filter_at, parse_musicxml, split_fractions};
use crate::model::{preprocess, DecoderKind, Targets};
use crate::notation::SymbolicScore;
use crate::render::{generate_random_score, render, StaffImage};

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

/// What [`build_dataset`] produced.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSummary {
    pub samples: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub hard: usize,
    /// `(source, reason)` for every input left out.
    pub rejected: Vec<(String, String)>,
}

fn write_lines(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let mut text = lines.join("\n");
    if !lines.is_empty() {
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Scores from the MusicXML directory, in file-name order, with the files
/// that were skipped and why.
fn ingest_dir(dir: &Path) -> Result<(Vec<(String, SymbolicScore)>, Vec<(String, String)>), CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("xml" | "musicxml")))
        .collect();
    files.sort();
    let mut scores = Vec::new();
    let mut rejected = Vec::new();
    for f in files {
        let name = f.file_name().unwrap().to_string_lossy().into_owned();
        let text = fs::read_to_string(&f)?;
        match parse_musicxml(&text) {
            Ok(parsed) => scores.push((name, parsed.score)),
            Err(e) => {
                let reason = e.reason().map_or_else(|| e.to_string(), |r| r.code().to_string());
                log::warn!("skipping {name}: {e}");
                rejected.push((name, reason));
            }
        }
    }
    let (kept, dropped) = dataset_filter(&scores.iter().map(|(_, s)| s.clone()).collect::<Vec<_>>());
    for d in dropped {
        rejected.push((scores[d.index].0.clone(), d.reason.to_string()));
    }
    let kept: BTreeSet<usize> = kept.into_iter().collect();
    let scores = scores
        .into_iter()
        .enumerate()
        .filter(|(i, _)| kept.contains(i))
        .map(|(_, s)| s)
        .collect();
    Ok((scores, rejected))
}

/// Generates or ingests the corpus, renders it and writes the layout above.
pub fn build_dataset(cfg: &RunConfig, out: &Path) -> Result<DatasetSummary, CliError> {
    cfg.validate()?;
    let (scores, rejected) = match &cfg.musicxml {
        Some(dir) => ingest_dir(dir)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut v = Vec::with_capacity(cfg.samples);
            for i in 0..cfg.samples {
                v.push((format!("generated-{i}"), generate_random_score(&mut rng, &cfg.generator)?));
            }
            (v, Vec::new())
        }
    };
    fs::create_dir_all(out.join("images"))?;
    let mut render_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_1A6E);
    let mut records = Vec::with_capacity(scores.len());
    for (i, (_, score)) in scores.iter().enumerate() {
        let id = format!("s{i:05}");
        let rel = format!("images/{id}.png");
        render(score, render_rng.gen(), &cfg.noise)?.save(out.join(&rel))?;
        records.push(LabelRecord::from_score(&id, rel, score));
    }
    let mut labels = Vec::new();
    write_records(&mut labels, &records)?;
    fs::write(out.join("labels.jsonl"), labels)?;

    let parts = split_fractions(records.len(), cfg.splits, cfg.seed)?;
    let ids = |ix: &[usize]| -> Vec<String> {
        let mut v: Vec<usize> = ix.to_vec();
        v.sort_unstable();
        v.into_iter().map(|i| records[i].id.clone()).collect()
    };
    for (name, part) in SPLIT_NAMES.iter().zip([&parts.train, &parts.val, &parts.test]) {
        write_lines(&out.join(format!("{name}.txt")), &ids(part))?;
    }
    let hard = hard_filter_at(&records, cfg.hard_threshold);
    write_lines(&out.join("hard.txt"), &ids(&hard))?;

    let stats = compute_stats(&records)?;
    let mut report = stats.report();
    report.push_str(&format!(
        "split.train={}\nsplit.val={}\nsplit.test={}\nhard.threshold={}\nhard.count={}\nrejected={}\n",
        parts.train.len(),
        parts.val.len(),
        parts.test.len(),
        cfg.hard_threshold,
        hard.len(),
        rejected.len()
    ));
    fs::write(out.join("stats.txt"), report)?;
    let rejected_lines: Vec<String> = rejected.iter().map(|(s, r)| format!("{s}\t{r}")).collect();
    write_lines(&out.join("rejected.txt"), &rejected_lines)?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    Ok(DatasetSummary {
        samples: records.len(),
        train: parts.train.len(),
        val: parts.val.len(),
        test: parts.test.len(),
        hard: hard.len(),
        rejected,
    })
}

/// A dataset directory opened for reading.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub records: Vec<LabelRecord>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join("labels.jsonl");
        let f = fs::File::open(&path).map_err(|e| CliError::Dataset(format!("{}: {e}", path.display())))?;
        let records = read_records(BufReader::new(f))?;
        let index = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            records,
            index,
        })
    }

    /// Ids listed in `<name>.txt`.
    pub fn manifest(&self, name: &str) -> Result<Vec<String>, CliError> {
        let path = self.dir.join(format!("{name}.txt"));
        let text = fs::read_to_string(&path).map_err(|e| CliError::Dataset(format!("{}: {e}", path.display())))?;
        let ids: Vec<String> = text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect();
        if let Some(bad) = ids.iter().find(|id| !self.index.contains_key(*id)) {
            return Err(CliError::Dataset(format!("{}: unknown sample `{bad}`", path.display())));
        }
        Ok(ids)
    }

    pub fn record(&self, id: &str) -> Option<&LabelRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn image(&self, id: &str) -> Result<StaffImage, CliError> {
        let r = self.record(id).ok_or_else(|| CliError::Dataset(format!("unknown sample `{id}`")))?;
        Ok(StaffImage::load(self.dir.join(&r.image))?)
    }

    /// Preprocessed images with labels, for evaluation.
    pub fn eval_samples(&self, ids: &[String], height: usize) -> Result<Vec<EvalSample>, CliError> {
        ids.iter()
            .map(|id| {
                Ok(EvalSample {
                    id: id.clone(),
                    image: preprocess(&self.image(id)?, height)?,
                    truth: encode_advance(&self.record(id).unwrap().score),
                })
            })
            .collect()
    }

    /// Preprocessed images with `kind` targets, for training.
    pub fn train_samples(&self, ids: &[String], kind: DecoderKind, height: usize) -> Result<Vec<TrainSample>, CliError> {
        ids.iter()
            .map(|id| {
                let score = &self.record(id).unwrap().score;
                Ok(TrainSample {
                    id: id.clone(),
                    image: preprocess(&self.image(id)?, height)?,
                    targets: Targets::from_score(kind, score)?,
                    truth: encode_advance(score),
                })
            })
            .collect()
    }
}

/// Renders `scores` in memory and pairs them with `kind` targets; used for
/// experiments that skip the file system.
pub fn samples_for(
    scores: &[SymbolicScore],
    kind: DecoderKind,
    height: usize,
    seed: u64,
    noise: &crate::render::NoiseOptions,
) -> Result<Vec<TrainSample>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scores
        .iter()
        .enumerate()
        .map(|(i, score)| {
            let image = render(score, rng.gen(), noise)?;
            Ok(TrainSample {
                id: format!("m{i:05}"),
                image: preprocess(&image, height)?,
                targets: Targets::from_score(kind, score)?,
                truth: encode_advance(score),
            })
        })
        .collect()
}
