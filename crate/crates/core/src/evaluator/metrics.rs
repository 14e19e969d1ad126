use crate::decoder::KernelSet;
use crate::error::{Error, Result};

/// `(|A∪B| - |A∩B|) / |A∪B|`; two empty sets are at distance 0.
pub fn jaccard_distance(a: &KernelSet, b: &KernelSet) -> f64 {
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        (union - inter) as f64 / union as f64
    }
}

/// Mean Jaccard distance over all unordered pairs, summed in index order.
pub fn cm_diff(sets: &[&KernelSet]) -> Result<f64> {
    let n = sets.len();
    if n < 2 {
        return Err(Error::Config(format!("diff needs at least 2 modules, got {n}")));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += jaccard_distance(sets[i], sets[j]);
        }
    }
    Ok(sum * 2.0 / (n * (n - 1)) as f64)
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub fn fitness(acc: f64, diff: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(weighted(acc, diff, alpha))
}

pub(crate) fn weighted(acc: f64, diff: f64, alpha: f64) -> f64 {
    alpha * acc + (1.0 - alpha) * diff
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn set(ids: &[usize]) -> KernelSet {
        ids.iter().copied().collect()
    }

    #[test]
    fn jaccard_examples() {
        let a = set(&[1, 2, 3]);
        assert_eq!(jaccard_distance(&a, &a), 0.0);
        assert_eq!(jaccard_distance(&a, &set(&[4, 5])), 1.0);
        assert_eq!(jaccard_distance(&a, &set(&[2, 3, 4])), 0.5);
        assert_eq!(jaccard_distance(&set(&[]), &set(&[])), 0.0);
    }

    #[test]
    fn diff_examples() {
        let a = set(&[1, 2]);
        assert_eq!(cm_diff(&[&a, &a, &a]).unwrap(), 0.0);
        let (x, y, z) = (set(&[1]), set(&[2]), set(&[3]));
        assert_eq!(cm_diff(&[&x, &y, &z]).unwrap(), 1.0);
        // JD(p,q)=0.5, JD(p,r)=0.5, JD(q,r)=1
        let (p, q, r) = (set(&[1, 2]), set(&[1]), set(&[2]));
        assert_abs_diff_eq!(cm_diff(&[&p, &q, &r]).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert!(cm_diff(&[&p]).is_err());
    }

    #[test]
    fn fitness_examples() {
        assert_abs_diff_eq!(fitness(0.8607, 0.5277, 0.9).unwrap(), 0.82740, epsilon = 5e-6);
        assert_abs_diff_eq!(fitness(1.0, 0.0, 0.3).unwrap(), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(fitness(0.42, 0.42, 0.7).unwrap(), 0.42, epsilon = 1e-12);
        assert!(fitness(0.5, 0.5, 0.0).is_err());
        assert!(fitness(0.5, 0.5, 1.0).is_err());
    }

    fn arb_set() -> impl Strategy<Value = KernelSet> {
        prop::collection::btree_set(0usize..40, 1..20).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn jaccard_is_a_metric(a in arb_set(), b in arb_set(), c in arb_set()) {
            let ab = jaccard_distance(&a, &b);
            prop_assert_eq!(ab, jaccard_distance(&b, &a));
            prop_assert_eq!(jaccard_distance(&a, &a), 0.0);
            prop_assert_eq!(ab == 0.0, a == b);
            prop_assert!(jaccard_distance(&a, &c) <= ab + jaccard_distance(&b, &c) + 1e-12);
        }

        #[test]
        fn fitness_is_monotone(acc in 0.0f64..1.0, diff in 0.0f64..1.0,
                               da in 0.0f64..0.5, dd in 0.0f64..0.5, alpha in 0.01f64..0.99) {
            let base = fitness(acc, diff, alpha).unwrap();
            prop_assert!(fitness(acc + da, diff, alpha).unwrap() >= base);
            prop_assert!(fitness(acc, diff + dd, alpha).unwrap() >= base);
        }
    }
}
