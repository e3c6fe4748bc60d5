//! Every codec inverts its encoder on generated scores, up to voice indices.

use polyomr::codecs::{decode_advance, decode_flag, decode_multiseq, encode_advance, encode_flag, encode_multiseq};
use polyomr::render::{generate_random_score, GeneratorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(rng: &mut impl Rng, i: usize) -> GeneratorConfig {
    let base = if i % 4 == 0 { GeneratorConfig::dense() } else { GeneratorConfig::default() };
    GeneratorConfig {
        voices: rng.gen_range(2..=4),
        measures: rng.gen_range(1..=4),
        max_chord: rng.gen_range(1..=3),
        accidental_prob: rng.gen_range(0.0..0.6),
        ..base
    }
}

#[test]
fn thousand_generated_scores_round_trip_through_all_codecs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = Vec::new();
    for i in 0..1000 {
        let cfg = config(&mut rng, i);
        let score = generate_random_score(&mut rng, &cfg).unwrap();
        let want = score.without_voices();
        let advance = decode_advance(&encode_advance(&score)).map(|s| s.without_voices());
        let flag = encode_flag(&score).and_then(|c| decode_flag(&c));
        let multi = encode_multiseq(&score).and_then(|l| decode_multiseq(&l));
        for (name, got) in [("advance", advance), ("flag", flag), ("multiseq", multi)] {
            match got {
                Ok(s) if s == want => {}
                Ok(_) => failures.push(format!("{name} #{i}: decoded score differs")),
                Err(e) => failures.push(format!("{name} #{i}: {e}")),
            }
        }
    }
    assert!(failures.is_empty(), "{} failures: {:?}", failures.len(), &failures[..failures.len().min(10)]);
}
