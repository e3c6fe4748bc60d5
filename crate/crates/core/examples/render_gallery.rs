//! Renders a handful of random scores to PNG and prints their labels.
//!
//! ```text
//! cargo run --example render_gallery -- /tmp/gallery
//! ```

use polyomr::codecs::LabelRecord;
use polyomr::render::{generate_random_score, render, GeneratorConfig, NoiseOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "gallery".into());
    std::fs::create_dir_all(&out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let configs = [
        ("plain", GeneratorConfig::default(), NoiseOptions::none()),
        (
            "busy",
            GeneratorConfig {
                voices: 3,
                measures: 2,
                events_per_measure: 6,
                max_chord: 3,
                accidental_prob: 0.3,
                rest_prob: 0.2,
                ..GeneratorConfig::default()
            },
            NoiseOptions::standard(),
        ),
        ("dense", GeneratorConfig::dense(), NoiseOptions::none()),
    ];
    for (i, (name, cfg, noise)) in configs.iter().enumerate() {
        let score = generate_random_score(&mut rng, cfg)?;
        let path = format!("{out}/{name}.png");
        render(&score, i as u64, noise)?.save(&path)?;
        let rec = LabelRecord::from_score(name.to_string(), path.clone(), &score);
        println!("{path}\n  pitch:  {}\n  rhythm: {}", rec.advance_pitch, rec.advance_rhythm);
    }
    Ok(())
}
