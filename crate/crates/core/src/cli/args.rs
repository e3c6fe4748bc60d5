use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use super::commands::{cmd_dataset, cmd_eval, cmd_train, cmd_transcribe};
use super::config::{ModelSize, RunConfig};
use super::CliError;
use crate::eval::comparison_table;
use crate::model::DecoderKind;
use crate::notation::join_tokens;
use crate::render::NoiseOptions;

/// Polyphonic staff transcription: dataset generation, training,
/// evaluation and transcription.
#[derive(Debug, Parser)]
#[command(name = "polyomr", version)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for generation, splits, initialization and batch order.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dataset directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub data: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (or ingest) and render a labelled corpus with splits and statistics.
    Dataset(DatasetArgs),
    /// Train one decoder; writes the best checkpoint, its resumable state and a log.
    Train(TrainArgs),
    /// Score a checkpoint on the test split and its hard subset.
    Eval(EvalArgs),
    /// Print the pitch and rhythm sequences read from one staff image.
    Transcribe(TranscribeArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Synthetic samples to generate.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Build from the MusicXML files in this directory instead.
    #[arg(long, value_name = "DIR")]
    pub musicxml: Option<PathBuf>,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, value_name = "F")]
    pub splits: Option<Vec<f64>>,
    /// Minimum density (symbols per measure) of the hard subset.
    #[arg(long)]
    pub hard_threshold: Option<u64>,
    /// Voices per generated measure (2 to 4).
    #[arg(long)]
    pub voices: Option<u8>,
    /// Measures per generated score.
    #[arg(long)]
    pub measures: Option<usize>,
    /// Onsets of the leading voice per measure.
    #[arg(long)]
    pub events_per_measure: Option<usize>,
    /// Notes one voice may stack at an onset (1 to 3).
    #[arg(long)]
    pub max_chord: Option<usize>,
    /// Render without crop jitter or margin clutter.
    #[arg(long)]
    pub clean: bool,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Checkpoint path.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Decoder head: baseline, flag or rnn.
    #[arg(long)]
    pub decoder: Option<DecoderKind>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Width preset: desk or full.
    #[arg(long = "model")]
    pub size: Option<ModelSize>,
    /// Adam learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Samples per optimizer step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Step budget; a resumed run continues up to this step.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Validate and write checkpoints every this many steps.
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Log the batch loss every this many steps.
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Validation samples used while training (0 for all).
    #[arg(long)]
    pub val_samples: Option<usize>,
    /// Train on the first N training samples and validate on them.
    #[arg(long, value_name = "N")]
    pub overfit: Option<usize>,
    /// Rescale batch gradients to at most this L2 norm.
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Stop once validation rhythm SER (%) is at most this (with --stop-pitch-ser).
    #[arg(long)]
    pub stop_rhythm_ser: Option<f64>,
    /// Stop once validation pitch SER (%) is at most this (with --stop-rhythm-ser).
    #[arg(long)]
    pub stop_pitch_ser: Option<f64>,
    /// Continue from `<checkpoint>.state`.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Report directory.
    #[arg(long, value_name = "DIR")]
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TranscribeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Staff image (PNG or PGM).
    pub image: PathBuf,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl ModelArgs {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.checkpoint, self.checkpoint.clone());
        if self.decoder.is_some() {
            c.decoder = self.decoder;
        }
    }
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::load(self.config.as_deref())?;
        set(&mut c.seed, self.seed);
        set(&mut c.data, self.data.clone());
        match &self.command {
            Command::Dataset(a) => {
                set(&mut c.samples, a.samples);
                if a.musicxml.is_some() {
                    c.musicxml = a.musicxml.clone();
                }
                if let Some(s) = &a.splits {
                    c.splits = [s[0], s[1], s[2]];
                }
                set(&mut c.hard_threshold, a.hard_threshold);
                set(&mut c.generator.voices, a.voices);
                set(&mut c.generator.measures, a.measures);
                set(&mut c.generator.events_per_measure, a.events_per_measure);
                set(&mut c.generator.max_chord, a.max_chord);
                if a.clean {
                    c.noise = NoiseOptions::none();
                }
            }
            Command::Train(a) => {
                a.model.apply(&mut c);
                set(&mut c.model, a.size);
                set(&mut c.learning_rate, a.learning_rate);
                set(&mut c.batch_size, a.batch_size);
                set(&mut c.max_steps, a.max_steps);
                set(&mut c.eval_every, a.eval_every);
                set(&mut c.log_every, a.log_every);
                set(&mut c.val_samples, a.val_samples);
                if a.overfit.is_some() {
                    c.overfit = a.overfit;
                }
                if a.clip_norm.is_some() {
                    c.clip_norm = a.clip_norm;
                }
                if a.stop_rhythm_ser.is_some() {
                    c.stop_rhythm_ser = a.stop_rhythm_ser;
                }
                if a.stop_pitch_ser.is_some() {
                    c.stop_pitch_ser = a.stop_pitch_ser;
                }
                c.resume |= a.resume;
            }
            Command::Eval(a) => {
                a.model.apply(&mut c);
                set(&mut c.reports, a.reports.clone());
            }
            Command::Transcribe(a) => a.model.apply(&mut c),
        }
        c.validate()?;
        Ok(c)
    }

    pub fn execute(&self) -> Result<(), CliError> {
        let cfg = self.resolve()?;
        match &self.command {
            Command::Dataset(_) => {
                cmd_dataset(&cfg)?;
            }
            Command::Train(_) => {
                let r = cmd_train(&cfg)?;
                log::info!(
                    "trained to step {}; best checkpoint {}",
                    r.outcome.final_step,
                    r.paths.best.display()
                );
            }
            Command::Eval(_) => {
                let reports = cmd_eval(&cfg)?;
                eprint!("{}", comparison_table(&reports));
            }
            Command::Transcribe(a) => {
                let t = cmd_transcribe(&cfg, &a.image)?;
                println!("{}", join_tokens(&t.pitch));
                println!("{}", join_tokens(&t.rhythm));
            }
        }
        Ok(())
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match cli.execute() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
