use crate::codecs::{FlagConfiguration, FLAG_ACCIDENTAL_CLASSES, FLAG_RHYTHM_CLASSES, FLAG_ROWS, FLAG_STAFF_BITS};
use crate::diffcore::Tensor;
use crate::notation::BLANK;

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Best path through a `[frames, classes]` lattice (logits or
/// log-probabilities), with repeats collapsed and blanks removed.
pub fn greedy_decode(lattice: &Tensor) -> Vec<usize> {
    let classes = lattice.shape()[1];
    let path: Vec<usize> = lattice.data().chunks(classes).map(argmax).collect();
    crate::ctc::collapse(&path, BLANK)
}

/// A staff bit is on when its sigmoid exceeds one half.
pub fn flag_threshold(probability: f64) -> bool {
    probability > 0.5
}

/// Most likely configuration of one slice: thresholded staff bits, argmax
/// rhythm and accidental per row.
pub fn flag_argmax(staff_logits: &[f64], rhythm_logits: &[f64], accidental_logits: &[f64]) -> FlagConfiguration {
    let mut cfg = FlagConfiguration::blank();
    for (i, &x) in staff_logits.iter().enumerate().take(FLAG_STAFF_BITS) {
        cfg.set_bit(i, flag_threshold(crate::diffcore::sigmoid(x)));
    }
    for r in 0..FLAG_ROWS {
        let rc = argmax(&rhythm_logits[r * FLAG_RHYTHM_CLASSES..(r + 1) * FLAG_RHYTHM_CLASSES]);
        let ac = argmax(&accidental_logits[r * FLAG_ACCIDENTAL_CLASSES..(r + 1) * FLAG_ACCIDENTAL_CLASSES]);
        cfg.set_row(r, rc as u8, ac as u8);
    }
    cfg
}

/// Per-slice configurations, adjacent repeats collapsed, all-off removed.
pub fn greedy_decode_flag(staff_logits: &Tensor, rhythm_logits: &Tensor, accidental_logits: &Tensor) -> Vec<FlagConfiguration> {
    let frames = staff_logits.shape()[0];
    let mut out = Vec::new();
    let mut prev: Option<FlagConfiguration> = None;
    for t in 0..frames {
        let cfg = flag_argmax(
            staff_logits.row(t),
            rhythm_logits.row(t),
            accidental_logits.row(t),
        );
        if Some(cfg) != prev && !cfg.is_blank() {
            out.push(cfg);
        }
        prev = Some(cfg);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(path: &[usize], classes: usize) -> Tensor {
        let mut data = vec![-10.0; path.len() * classes];
        for (t, &k) in path.iter().enumerate() {
            data[t * classes + k] = 0.0;
        }
        Tensor::new(vec![path.len(), classes], data).unwrap()
    }

    #[test]
    fn collapse_example() {
        // ∅ a a ∅ b
        assert_eq!(greedy_decode(&one_hot(&[0, 1, 1, 0, 2], 3)), vec![1, 2]);
        assert!(greedy_decode(&one_hot(&[0, 0, 0], 3)).is_empty());
    }

    #[test]
    fn threshold_at_one_half() {
        assert!(flag_threshold(0.51));
        assert!(!flag_threshold(0.49));
    }
}
