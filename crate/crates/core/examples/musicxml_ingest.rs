//! Reads MusicXML files (or, without arguments, generated scores written as
//! MusicXML), applies the corpus filter and prints statistics.
//!
//! ```text
//! cargo run --example musicxml_ingest -- score1.xml score2.musicxml
//! ```

use polyomr::codecs::encode_advance;
use polyomr::ingest::{compute_stats, dataset_filter, hard_filter, parse_musicxml, to_musicxml};
use polyomr::notation::join_tokens;
use polyomr::render::{generate_random_score, GeneratorConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let files: Vec<String> = std::env::args().skip(1).collect();
    let sources: Vec<(String, String)> = if files.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..6)
            .map(|i| {
                let cfg = if i % 3 == 0 { GeneratorConfig::dense() } else { GeneratorConfig::default() };
                let score = generate_random_score(&mut rng, &cfg)?;
                Ok((format!("generated-{i}"), to_musicxml(&score)?))
            })
            .collect::<Result<_, Box<dyn std::error::Error>>>()?
    } else {
        files
            .into_iter()
            .map(|f| Ok((f.clone(), std::fs::read_to_string(&f)?)))
            .collect::<Result<_, std::io::Error>>()?
    };

    let mut scores = Vec::new();
    for (name, xml) in &sources {
        match parse_musicxml(xml) {
            Ok(p) => {
                println!("{name}: {} voices, {}", p.voices, join_tokens(&encode_advance(&p.score).pitch));
                scores.push(p.score);
            }
            Err(e) => println!("{name}: rejected ({e})"),
        }
    }
    let (kept, dropped) = dataset_filter(&scores);
    for d in &dropped {
        println!("filtered #{}: {}", d.index, d.reason);
    }
    let kept: Vec<_> = kept.into_iter().map(|i| scores[i].clone()).collect();
    if kept.is_empty() {
        return Ok(());
    }
    print!("{}", compute_stats(&kept)?.report());
    println!("hard (density >= 41): {:?}", hard_filter(&kept));
    Ok(())
}
