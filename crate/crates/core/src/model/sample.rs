use alloc::vec::Vec;

use rand::Rng;

use super::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Greedy,
    /// Sample from the smallest top set whose mass reaches `p`.
    Nucleus(f64),
}

/// Draws a token id from `probs`. Greedy breaks ties toward the lower id.
pub fn sample_token<R: Rng + ?Sized>(
    probs: &[f64],
    strategy: Strategy,
    rng: &mut R,
) -> Result<usize> {
    match strategy {
        Strategy::Greedy => Ok(probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bp), (i, &p)| {
                if p > bp {
                    (i, p)
                } else {
                    (bi, bp)
                }
            })
            .0),
        Strategy::Nucleus(p) => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(ModelError::InvalidP(p));
            }
            let support = nucleus(probs, p);
            let mass: f64 = support.iter().map(|&i| probs[i]).sum();
            let mut r = rng.random::<f64>() * mass;
            for &i in &support {
                r -= probs[i];
                if r < 0.0 {
                    return Ok(i);
                }
            }
            Ok(*support.last().expect("non-empty support"))
        }
    }
}

/// Token ids in descending probability (ascending id on ties), cut after
/// the cumulative mass first reaches `p`. With `p = 1` every token stays.
pub(crate) fn nucleus(probs: &[f64], p: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    if p >= 1.0 {
        return order;
    }
    let mut cum = 0.0;
    let mut keep = order.len();
    for (k, &i) in order.iter().enumerate() {
        cum += probs[i];
        if cum >= p {
            keep = k + 1;
            break;
        }
    }
    order.truncate(keep);
    order
}
