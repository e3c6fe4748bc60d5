//! One generated staff in all three label encodings, each decoded back.
//!
//! ```text
//! cargo run --example label_formats -- 7
//! ```

use polyomr::codecs::{decode_advance, decode_flag, decode_multiseq, encode_advance, encode_flag, encode_multiseq};
use polyomr::notation::join_tokens;
use polyomr::render::{generate_random_score, GeneratorConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(7), |s| s.parse())?;
    let cfg = GeneratorConfig {
        voices: 3,
        measures: 1,
        events_per_measure: 4,
        ..GeneratorConfig::default()
    };
    let score = generate_random_score(&mut ChaCha8Rng::seed_from_u64(seed), &cfg)?;
    let plain = score.without_voices();

    let adv = encode_advance(&score);
    println!("advance pitch   {}", join_tokens(&adv.pitch));
    println!("advance rhythm  {}", join_tokens(&adv.rhythm));
    println!("  decodes back: {}\n", decode_advance(&adv)?.without_voices() == plain);

    let flags = encode_flag(&score)?;
    println!("{} flag configurations", flags.len());
    for f in &flags {
        println!("  {f}");
    }
    println!("  decodes back: {}\n", decode_flag(&flags)? == plain);

    let multi = encode_multiseq(&score)?;
    for (i, (p, r)) in multi.pitch.iter().zip(&multi.rhythm).enumerate() {
        println!("stream {i}  pitch  {}", join_tokens(p));
        println!("          rhythm {}", join_tokens(r));
    }
    println!("  decodes back: {}", decode_multiseq(&multi)? == plain);
    Ok(())
}
