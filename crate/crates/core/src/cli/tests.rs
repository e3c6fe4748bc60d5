use std::fs;
use std::path::Path;

use clap::Parser;
use tempfile::TempDir;

use super::*;
use crate::model::{DecoderKind, EncoderConfig, Model};
use crate::render::{GeneratorConfig, NoiseOptions};

/// Small enough that a few optimizer steps take well under a second.
fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        input_height: 32,
        filters: vec![2, 4],
        pools: vec![(2, 2), (2, 1)],
        projection: 8,
        lstm_hidden: 6,
        lstm_layers: 1,
        ..EncoderConfig::default()
    }
}

fn tiny_config(dir: &Path, kind: DecoderKind) -> RunConfig {
    RunConfig {
        decoder: Some(kind),
        data: dir.join("data"),
        checkpoint: dir.join("ck").join("model.ckpt"),
        reports: dir.join("reports"),
        samples: 16,
        learning_rate: 1e-2,
        batch_size: 2,
        max_steps: 6,
        eval_every: 3,
        log_every: 1,
        val_samples: 2,
        encoder: Some(tiny_encoder()),
        generator: GeneratorConfig {
            measures: 1,
            events_per_measure: 2,
            ..GeneratorConfig::default()
        },
        noise: NoiseOptions::none(),
        ..RunConfig::default()
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn flags_override_file_which_overrides_defaults() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("run.toml");
    fs::write(&file, "learning_rate = 0.5\nbatch_size = 3\nseed = 9\n").unwrap();
    let cli = Cli::try_parse_from([
        "polyomr",
        "--config",
        file.to_str().unwrap(),
        "train",
        "--batch-size",
        "7",
        "--decoder",
        "flag",
    ])
    .unwrap();
    let c = cli.resolve().unwrap();
    assert_eq!(c.learning_rate, 0.5);
    assert_eq!(c.batch_size, 7);
    assert_eq!(c.seed, 9);
    assert_eq!(c.decoder, Some(DecoderKind::Flag));
    assert_eq!(c.max_steps, RunConfig::default().max_steps);

    let cli = Cli::try_parse_from(["polyomr", "--config", file.to_str().unwrap(), "--seed", "2", "eval"]).unwrap();
    assert_eq!(cli.resolve().unwrap().seed, 2);
}

#[test]
fn config_round_trips_through_toml() {
    let c = tiny_config(Path::new("/tmp/x"), DecoderKind::Rnn);
    assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
}

#[test]
fn configuration_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("bad.toml");
    fs::write(&file, "learning_rat = 0.5\n").unwrap();
    assert_eq!(run(["polyomr", "--config", file.to_str().unwrap(), "eval"]), 1);
    assert_eq!(run(["polyomr", "train", "--learning-rate", "-1"]), 1);
    assert_eq!(run(["polyomr", "dataset", "--splits", "0.5,0.5,0.5"]), 1);
    assert_eq!(run(["polyomr", "frobnicate"]), 1);
    assert_eq!(run(["polyomr", "--help"]), 0);
}

#[test]
fn runtime_failures_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("none.ckpt");
    assert_eq!(run(["polyomr", "eval", "--checkpoint", missing.to_str().unwrap()]), 2);
}

#[test]
fn dataset_bytes_depend_only_on_the_configuration() {
    let tmp = TempDir::new().unwrap();
    let mut c = tiny_config(tmp.path(), DecoderKind::Baseline);
    c.noise = NoiseOptions::standard();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    build_dataset(&c, &a).unwrap();
    build_dataset(&c, &b).unwrap();
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), 16 + 8);
    assert_eq!(fa, fb);

    c.seed = 1;
    let d = tmp.path().join("d");
    build_dataset(&c, &d).unwrap();
    assert_ne!(files(&d), fa);
}

#[test]
fn manifests_partition_and_hard_list_spans_all_splits() {
    let tmp = TempDir::new().unwrap();
    let mut c = tiny_config(tmp.path(), DecoderKind::Baseline);
    c.samples = 40;
    c.generator = GeneratorConfig::default();
    c.hard_threshold = 12;
    let s = build_dataset(&c, &c.data).unwrap();
    assert_eq!((s.samples, s.train, s.val, s.test), (40, 28, 6, 6));
    let data = Dataset::open(&c.data).unwrap();
    let mut all: Vec<String> = SPLIT_NAMES.iter().flat_map(|n| data.manifest(n).unwrap()).collect();
    all.sort();
    assert_eq!(all, data.records.iter().map(|r| r.id.clone()).collect::<Vec<_>>());

    let expected: Vec<String> = data
        .records
        .iter()
        .filter(|r| r.score.symbol_count() >= 12 * r.score.measure_count())
        .map(|r| r.id.clone())
        .collect();
    assert_eq!(data.manifest("hard").unwrap(), expected);
    assert_eq!(s.hard, expected.len());
    let stats = fs::read_to_string(c.data.join("stats.txt")).unwrap();
    assert!(stats.contains(&format!("hard.count={}\n", expected.len())));
    assert!(stats.contains("split.train=28\n"));
}

#[test]
fn batches_are_a_pure_function_of_seed_and_step() {
    for step in 0..20 {
        assert_eq!(batch_indices(7, 3, 4, step), batch_indices(7, 3, 4, step));
    }
    // Each epoch visits every index once.
    let seq: Vec<usize> = (0..7).flat_map(|s| batch_indices(7, 2, 4, s)).collect();
    for epoch in seq.chunks(7) {
        let mut e = epoch.to_vec();
        e.sort_unstable();
        assert_eq!(e, (0..7).collect::<Vec<_>>());
    }
    assert_ne!(
        (0..4).flat_map(|s| batch_indices(7, 2, 4, s)).collect::<Vec<_>>(),
        (0..4).flat_map(|s| batch_indices(7, 2, 5, s)).collect::<Vec<_>>()
    );
}

#[test]
fn training_is_deterministic_and_resume_continues_the_same_trajectory() {
    let tmp = TempDir::new().unwrap();
    let c = tiny_config(tmp.path(), DecoderKind::Flag);
    build_dataset(&c, &c.data).unwrap();

    let full = cmd_train(&c).unwrap();
    assert_eq!(full.outcome.final_step, 6);
    assert_eq!(full.outcome.validations.len(), 2);
    let log = fs::read_to_string(&full.paths.log).unwrap();
    assert!(log.starts_with("start step=0 decoder=flag loss=loss_flag"));
    let full_state = fs::read(&full.paths.state).unwrap();

    let other = TempDir::new().unwrap();
    let c2 = RunConfig {
        checkpoint: other.path().join("model.ckpt"),
        ..c.clone()
    };
    let again = cmd_train(&c2).unwrap();
    assert_eq!(again.outcome.losses, full.outcome.losses);
    assert_eq!(fs::read(&again.paths.state).unwrap(), full_state);

    let third = TempDir::new().unwrap();
    let first_half = RunConfig {
        checkpoint: third.path().join("model.ckpt"),
        max_steps: 3,
        ..c.clone()
    };
    let a = cmd_train(&first_half).unwrap();
    let b = cmd_train(&RunConfig {
        max_steps: 6,
        resume: true,
        ..first_half.clone()
    })
    .unwrap();
    let joined: Vec<(u64, f64)> = a.outcome.losses.iter().chain(&b.outcome.losses).copied().collect();
    assert_eq!(joined, full.outcome.losses);
    assert_eq!(fs::read(&b.paths.state).unwrap(), full_state);
    let log = fs::read_to_string(&b.paths.log).unwrap();
    assert!(log.contains("start step=3"));
    assert_eq!(log.lines().filter(|l| l.starts_with("step=") && l.contains("loss=")).count(), 6);
}

#[test]
fn resume_rejects_a_different_batch_schedule() {
    let tmp = TempDir::new().unwrap();
    let c = RunConfig {
        max_steps: 3,
        ..tiny_config(tmp.path(), DecoderKind::Baseline)
    };
    build_dataset(&c, &c.data).unwrap();
    cmd_train(&c).unwrap();
    let err = cmd_train(&RunConfig {
        batch_size: 3,
        resume: true,
        ..c.clone()
    })
    .unwrap_err();
    assert!(matches!(err, CliError::Checkpoint(_)), "{err}");
}

#[test]
fn non_finite_loss_stops_with_the_batch_dumped() {
    let tmp = TempDir::new().unwrap();
    let c = tiny_config(tmp.path(), DecoderKind::Baseline);
    build_dataset(&c, &c.data).unwrap();
    let data = Dataset::open(&c.data).unwrap();
    let ids = data.manifest("train").unwrap();
    let set = data.train_samples(&ids, DecoderKind::Baseline, 32).unwrap();
    let mut state = TrainState::new(Model::new(c.model_config(DecoderKind::Baseline).unwrap(), 0).unwrap(), 1e-2);
    let (_, p) = state.model.params_mut().iter_mut().next().unwrap();
    p.data_mut()[0] = f64::NAN;
    let paths = TrainPaths::beside(&tmp.path().join("nan.ckpt"));
    let err = train(&mut state, &set, &set, &c.train_options(), Some(&paths)).unwrap_err();
    let CliError::NonFinite { step, ids } = &err else { panic!("{err}") };
    assert_eq!(*step, 0);
    assert_eq!(ids.len(), 2);
    let dump = fs::read_to_string(&paths.dump).unwrap();
    assert!(ids.iter().all(|id| dump.contains(id.as_str())));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn eval_writes_reports_and_rejects_a_mismatched_decoder() {
    let tmp = TempDir::new().unwrap();
    let mut c = tiny_config(tmp.path(), DecoderKind::Rnn);
    c.samples = 20;
    c.hard_threshold = 1;
    c.max_steps = 2;
    build_dataset(&c, &c.data).unwrap();
    cmd_train(&c).unwrap();

    let reports = cmd_eval(&RunConfig { decoder: None, ..c.clone() }).unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0].samples.len(), 3);
    let records = fs::read_to_string(c.reports.join("rnn.records")).unwrap();
    assert!(records.starts_with("decoder=rnn subset=full samples=3 "));
    assert!(fs::read_to_string(c.reports.join("rnn.txt")).unwrap().contains("rnn"));

    let err = cmd_eval(&RunConfig {
        decoder: Some(DecoderKind::Flag),
        ..c.clone()
    })
    .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("rnn") && msg.contains("flag"), "{msg}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn transcribe_reads_one_image() {
    let tmp = TempDir::new().unwrap();
    let mut c = tiny_config(tmp.path(), DecoderKind::Baseline);
    c.max_steps = 1;
    build_dataset(&c, &c.data).unwrap();
    cmd_train(&c).unwrap();
    let t = cmd_transcribe(&c, &c.data.join("images/s00000.png")).unwrap();
    assert_eq!(t.pitch.is_empty(), t.rhythm.is_empty());
    let ck = c.checkpoint.to_str().unwrap();
    let img = c.data.join("images/s00000.png");
    assert_eq!(run(["polyomr", "transcribe", "--checkpoint", ck, img.to_str().unwrap()]), 0);
}
