//! Symbol error rate of a prediction against a reference, with the edit
//! counts behind it.
//!
//! ```text
//! cargo run --example ser_breakdown -- "clef-G2 + note-C4 + barline" "clef-G2 + note-D4 barline"
//! ```

use polyomr::eval::ser;
use polyomr::notation::parse_tokens;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let truth = args.next().unwrap_or_else(|| "clef-G2 + note-C4 + note-E4 + barline".into());
    let pred = args.next().unwrap_or_else(|| "clef-G2 + note-C4 + note-F4 barline".into());
    let c = ser(&parse_tokens(&pred)?, &parse_tokens(&truth)?)?;
    println!("reference  {truth}\nprediction {pred}");
    println!(
        "insertions {}  deletions {}  substitutions {}  reference length {}",
        c.insertions, c.deletions, c.substitutions, c.reference
    );
    println!("SER {:.2}%", 100.0 * c.rate());
    Ok(())
}
