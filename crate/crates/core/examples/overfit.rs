//! Memorize a small fixed set of generated staves with one decoder and
//! report training-set SER as it falls.
//!
//! ```text
//! cargo run --release --example overfit -- flag 3000
//! cargo run --release --example overfit -- rnn 3000 5e-3 8    # learning rate, batch
//! ```

use std::time::Instant;

use polyomr::cli::{overfit_model, overfit_options, overfit_scores, samples_for, train, TrainOptions, TrainState};
use polyomr::model::{DecoderKind, Model};
use polyomr::render::NoiseOptions;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind: DecoderKind = args.first().map_or(Ok(DecoderKind::Baseline), |s| s.parse())?;
    let steps: usize = args.get(1).map_or(Ok(2000), |s| s.parse())?;
    let preset = overfit_options();
    let learning_rate: f64 = args.get(2).map_or(Ok(preset.learning_rate), |s| s.parse())?;
    let batch_size: usize = args.get(3).map_or(Ok(preset.batch_size), |s| s.parse())?;

    let scores = overfit_scores()?;

    let config = overfit_model(kind);
    let set = samples_for(&scores, kind, config.encoder.input_height, 5, &NoiseOptions::none())?;
    let mut state = TrainState::new(Model::new(config, 0)?, 0.0);
    let opts = TrainOptions {
        max_steps: steps,
        learning_rate,
        batch_size,
        ..preset
    };
    println!("{} parameters", state.model.params().num_elements());
    let t0 = Instant::now();
    let out = train(&mut state, &set, &set, &opts, None)?;
    for (step, r) in &out.validations {
        println!("step {step:5}  rhythm {:6.2}%  pitch {:6.2}%", r.rhythm_ser(), r.pitch_ser());
    }
    let losses: Vec<String> = out.losses.iter().step_by(50).map(|(s, l)| format!("{s}:{l:.2}")).collect();
    println!("losses {}", losses.join(" "));
    println!("{} steps in {:.1}s", out.final_step, t0.elapsed().as_secs_f64());
    Ok(())
}
