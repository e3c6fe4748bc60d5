use super::{dp::check_target, CtcError};

/// Longest lattice accepted by the exhaustive oracle.
pub const BRUTE_FORCE_MAX_FRAMES: usize = 8;

/// Removes adjacent repeats, then blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// `-ln` of the summed probability of every path through a row-major
/// `frames x classes` probability lattice that collapses to `target`.
/// Enumerates all `classes^frames` paths.
pub fn ctc_bruteforce(probs: &[f64], frames: usize, classes: usize, target: &[usize], blank: usize) -> Result<f64, CtcError> {
    if frames > BRUTE_FORCE_MAX_FRAMES {
        return Err(CtcError::TooManyFrames(frames));
    }
    if probs.len() != frames * classes {
        return Err(CtcError::LatticeShape { len: probs.len(), frames, classes });
    }
    check_target(target, classes, blank)?;
    let mut total = 0.0;
    let mut path = vec![0usize; frames];
    loop {
        if collapse(&path, blank) == target {
            total += path.iter().enumerate().map(|(t, &k)| probs[t * classes + k]).product::<f64>();
        }
        // odometer increment
        let mut t = 0;
        loop {
            if t == frames {
                return Ok(-total.ln());
            }
            path[t] += 1;
            if path[t] < classes {
                break;
            }
            path[t] = 0;
            t += 1;
        }
    }
}
