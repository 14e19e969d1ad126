use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::grouping::GroupingMap;
use crate::analysis::sensitivity::SensitivityProfile;
use crate::decoder::{repair, Genome};

/// Produces a class's initial population.
pub trait InitStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn population(
        &self,
        grouping: &GroupingMap,
        profile: &SensitivityProfile,
        class_id: usize,
        n_i: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Genome>;
}

/// Bits for one segment with `round(ratio * groups)` zeros at random
/// positions, leaving at least one group kept.
pub fn drop_bits(groups: usize, ratio: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let zeros = ((ratio * groups as f64).round() as usize).min(groups.saturating_sub(1));
    let mut bits = vec![true; groups];
    for i in sample(rng, groups, zeros) {
        bits[i] = false;
    }
    bits
}

/// Drops 10%-50% of a sensitive segment's groups and 50%-90% otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct SensitivityInit;

pub const SENSITIVE_RANGE: (f64, f64) = (0.1, 0.5);
pub const INSENSITIVE_RANGE: (f64, f64) = (0.5, 0.9);

impl InitStrategy for SensitivityInit {
    fn name(&self) -> &'static str {
        "sensitivity"
    }

    fn population(
        &self,
        grouping: &GroupingMap,
        profile: &SensitivityProfile,
        class_id: usize,
        n_i: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Genome> {
        let sensitive: Vec<bool> = grouping
            .segments
            .iter()
            .map(|s| s.convs.iter().any(|&c| profile.is_sensitive(c)))
            .collect();
        (0..n_i)
            .map(|_| {
                let mut bits = Vec::with_capacity(grouping.total_bits());
                for (s, &sens) in grouping.segments.iter().zip(&sensitive) {
                    let (lo, hi) = if sens { SENSITIVE_RANGE } else { INSENSITIVE_RANGE };
                    let ratio = rng.gen_range(lo..=hi);
                    bits.extend(drop_bits(s.groups, ratio, rng));
                }
                Genome::new(bits, class_id)
            })
            .collect()
    }
}

/// Fair coin per bit, then repair.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomInit;

impl InitStrategy for RandomInit {
    fn name(&self) -> &'static str {
        "random"
    }

    fn population(
        &self,
        grouping: &GroupingMap,
        _profile: &SensitivityProfile,
        class_id: usize,
        n_i: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Genome> {
        (0..n_i)
            .map(|_| {
                let bits = (0..grouping.total_bits()).map(|_| rng.gen_bool(0.5)).collect();
                repair(&Genome::new(bits, class_id), grouping)
            })
            .collect()
    }
}
