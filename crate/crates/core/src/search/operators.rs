use std::cmp::Ordering;

use rand::Rng;

use crate::analysis::grouping::GroupingMap;
use crate::decoder::{repair, Genome};
use crate::error::{Error, Result};

/// Truncation selection: indices of the `n_p` largest keys, ties to the
/// lower index.
pub fn select_parents<K: PartialOrd>(keys: &[Option<K>], n_p: usize) -> Result<Vec<usize>> {
    if let Some(i) = keys.iter().position(Option::is_none) {
        return Err(Error::Genome(format!("genome {i} has no fitness")));
    }
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| {
        keys[b]
            .partial_cmp(&keys[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(n_p);
    Ok(idx)
}

/// Single-point crossover: children swap suffixes starting at `cut`.
pub fn crossover(a: &Genome, b: &Genome, cut: usize) -> Result<(Genome, Genome)> {
    if a.len() != b.len() {
        return Err(Error::Genome(format!("parent lengths differ: {} vs {}", a.len(), b.len())));
    }
    if cut == 0 || cut >= a.len() {
        return Err(Error::Genome(format!("cut {cut} outside [1, {})", a.len())));
    }
    let mut x = a.clone();
    let mut y = b.clone();
    x.bits[cut..].copy_from_slice(&b.bits[cut..]);
    y.bits[cut..].copy_from_slice(&a.bits[cut..]);
    Ok((x, y))
}

/// Flips each bit with probability `p_m`, then repairs.
pub fn mutate<R: Rng>(genome: &Genome, p_m: f64, grouping: &GroupingMap, rng: &mut R) -> Genome {
    let mut out = genome.clone();
    for b in &mut out.bits {
        if rng.gen_bool(p_m) {
            *b = !*b;
        }
    }
    repair(&out, grouping)
}
