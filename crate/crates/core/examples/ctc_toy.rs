//! The CTC dynamic program against exhaustive alignment enumeration on a
//! lattice small enough to list, then greedy decoding of the same lattice.
//!
//! ```text
//! cargo run --example ctc_toy
//! ```

use polyomr::ctc::{ctc_bruteforce, ctc_nll, greedy_decode};
use polyomr::diffcore::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // five frames over {blank, a, b}
    let probs = [
        0.1, 0.8, 0.1, //
        0.6, 0.3, 0.1, //
        0.2, 0.1, 0.7, //
        0.5, 0.1, 0.4, //
        0.1, 0.7, 0.2,
    ];
    let (frames, classes) = (5, 3);
    let logp: Vec<f64> = probs.iter().map(|p: &f64| p.ln()).collect();
    for target in [vec![1, 2, 1], vec![1, 1], vec![2], vec![1, 2, 1, 2, 1], vec![2, 2, 2]] {
        let dp = ctc_nll(&logp, frames, classes, &target, 0)?;
        let bf = ctc_bruteforce(&probs, frames, classes, &target, 0)?;
        println!("target {target:?}: dp {dp:.12}  enumeration {bf:.12}");
    }
    let lattice = Tensor::new(vec![frames, classes], logp)?;
    println!("greedy: {:?}", greedy_decode(&lattice));
    Ok(())
}
