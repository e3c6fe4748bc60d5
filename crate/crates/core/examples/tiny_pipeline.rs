//! The whole command-line workflow at toy scale in a temporary directory:
//! build a dataset, train each decoder briefly, evaluate and transcribe.
//!
//! ```text
//! cargo run --release --example tiny_pipeline
//! ```

use polyomr::cli::{cmd_dataset, cmd_eval, cmd_train, cmd_transcribe, RunConfig};
use polyomr::eval::comparison_table;
use polyomr::model::{DecoderKind, EncoderConfig};
use polyomr::notation::join_tokens;
use polyomr::render::GeneratorConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let base = RunConfig {
        data: dir.path().join("data"),
        reports: dir.path().join("reports"),
        samples: 60,
        max_steps: 40,
        batch_size: 4,
        learning_rate: 2e-3,
        eval_every: 20,
        log_every: 10,
        val_samples: 8,
        hard_threshold: 12,
        encoder: Some(EncoderConfig {
            input_height: 32,
            filters: vec![4, 8],
            pools: vec![(2, 2), (2, 1)],
            projection: 16,
            lstm_hidden: 12,
            lstm_layers: 1,
            ..EncoderConfig::default()
        }),
        generator: GeneratorConfig {
            measures: 1,
            ..GeneratorConfig::default()
        },
        ..RunConfig::default()
    };
    let s = cmd_dataset(&base)?;
    println!("dataset: {} train, {} val, {} test, {} hard", s.train, s.val, s.test, s.hard);

    let mut reports = Vec::new();
    for kind in DecoderKind::ALL {
        let cfg = RunConfig {
            decoder: Some(kind),
            checkpoint: dir.path().join(format!("{kind}.ckpt")),
            ..base.clone()
        };
        let r = cmd_train(&cfg)?;
        let last = r.outcome.losses.last().map_or(f64::NAN, |l| l.1);
        println!("{kind}: {} steps, final batch loss {last:.2}", r.outcome.final_step);
        reports.extend(cmd_eval(&cfg)?);
        let t = cmd_transcribe(&cfg, &base.data.join("images/s00000.png"))?;
        println!("  s00000 pitch  {}", join_tokens(&t.pitch));
        println!("  s00000 rhythm {}", join_tokens(&t.rhythm));
    }
    print!("{}", comparison_table(&reports));
    Ok(())
}
