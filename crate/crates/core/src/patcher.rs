//! Patching a weak model's target class with a module from a strong model.

use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::ops::softmax_slice;
use crate::error::{Error, Result};
use crate::store::cost::{count_flops, count_kernels};
use crate::store::dataset::LabeledDataset;
use crate::store::model::Model;
use crate::tensor::argmax;

/// Range of a module's own-class logit over its class's training samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub class_id: usize,
    pub min: f32,
    pub max: f32,
}

impl Calibration {
    pub fn from_logits(values: &[f32], class_id: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NoClassSamples(class_id));
        }
        let min = values.iter().copied().fold(f32::INFINITY, f32::min);
        let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let cal = Self { class_id, min, max };
        if cal.is_degenerate() {
            warn!("calibration for class {class_id} has min == max ({min}); patch outputs 0.5");
        }
        Ok(cal)
    }

    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }

    /// `(o - min) / (max - min)` clamped to [0, 1].
    pub fn normalize(&self, logit: f32) -> f32 {
        if self.is_degenerate() {
            return 0.5;
        }
        let v = (logit as f64 - self.min as f64) / (self.max as f64 - self.min as f64);
        v.clamp(0.0, 1.0) as f32
    }
}

pub fn calibrate_module(module: &Model, train: &LabeledDataset, class_id: usize) -> Result<Calibration> {
    let logits = train
        .class_indices(class_id)
        .par_iter()
        .map(|&i| Ok(module.forward(&train.image(i))?.data()[class_id]))
        .collect::<Result<Vec<f32>>>()?;
    Calibration::from_logits(&logits, class_id)
}

/// Weak softmax with the target position replaced by the normalized patch.
pub fn patch_vector(weak_logits: &[f32], module_logit: f32, cal: &Calibration) -> Vec<f32> {
    let mut out = softmax_slice(weak_logits);
    out[cal.class_id] = cal.normalize(module_logit);
    out
}

pub fn patched_predict(
    weak: &Model,
    module: &Model,
    cal: &Calibration,
    input: &crate::Tensor,
) -> Result<(usize, Vec<f32>)> {
    let (w, m) = rayon::join(|| weak.forward(input), || module.forward(input));
    let (w, m) = (w?, m?);
    if w.len() != m.len() || cal.class_id >= w.len() {
        return Err(Error::Shape(format!(
            "weak model emits {} logits, module {}, target class {}",
            w.len(),
            m.len(),
            cal.class_id
        )));
    }
    let v = patch_vector(w.data(), m.data()[cal.class_id], cal);
    Ok((argmax(&v), v))
}

/// Precision, recall and F1 of one class; `None` when the class has no
/// test samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn class_metrics(preds: &[usize], labels: &[usize], classes: usize) -> Vec<ClassMetrics> {
    let mut tp = vec![0usize; classes];
    let mut predicted = vec![0usize; classes];
    let mut support = vec![0usize; classes];
    for (&p, &l) in preds.iter().zip(labels) {
        predicted[p] += 1;
        support[l] += 1;
        if p == l {
            tp[p] += 1;
        }
    }
    (0..classes)
        .map(|c| {
            if support[c] == 0 {
                return ClassMetrics {
                    class: c,
                    support: 0,
                    precision: None,
                    recall: None,
                    f1: None,
                };
            }
            let precision = if predicted[c] == 0 { 0.0 } else { tp[c] as f64 / predicted[c] as f64 };
            let recall = tp[c] as f64 / support[c] as f64;
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                class: c,
                support: support[c],
                precision: Some(precision),
                recall: Some(recall),
                f1: Some(f1),
            }
        })
        .collect()
}

fn non_tc_accuracy(preds: &[usize], labels: &[usize], tc: usize) -> Option<f64> {
    let (hits, total) = preds
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l != tc)
        .fold((0usize, 0usize), |(h, t), (&p, &l)| (h + usize::from(p == l), t + 1));
    (total > 0).then(|| hits as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchReport {
    pub target_class: usize,
    pub calibration: Calibration,
    pub weak: Vec<ClassMetrics>,
    pub patched: Vec<ClassMetrics>,
    pub weak_non_tc_accuracy: f64,
    pub patched_non_tc_accuracy: f64,
    pub module_kernels: usize,
    pub module_flops: u64,
}

impl PatchReport {
    pub fn tc_weak(&self) -> &ClassMetrics {
        &self.weak[self.target_class]
    }

    pub fn tc_patched(&self) -> &ClassMetrics {
        &self.patched[self.target_class]
    }

    pub fn non_tc_accuracy_delta(&self) -> f64 {
        self.patched_non_tc_accuracy - self.weak_non_tc_accuracy
    }

    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
        let mut out = String::from("model,class,support,precision,recall,f1\n");
        for (name, rows) in [("weak", &self.weak), ("patched", &self.patched)] {
            for m in rows {
                let _ = writeln!(
                    out,
                    "{name},{},{},{},{},{}",
                    m.class,
                    m.support,
                    cell(m.precision),
                    cell(m.recall),
                    cell(m.f1)
                );
            }
        }
        let _ = writeln!(out, "weak,non_tc_accuracy,,{:.6},,", self.weak_non_tc_accuracy);
        let _ = writeln!(out, "patched,non_tc_accuracy,,{:.6},,", self.patched_non_tc_accuracy);
        out
    }

    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "   n/a".to_string(), |x| format!("{:6.2}", 100.0 * x));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "target class {} | calibration [{:.4}, {:.4}]{} | normalized patch clamped to [0, 1]",
            self.target_class,
            self.calibration.min,
            self.calibration.max,
            if self.calibration.is_degenerate() { " (degenerate)" } else { "" }
        );
        let _ = writeln!(
            out,
            "patch module: {} kernels, {} FLOPs",
            self.module_kernels, self.module_flops
        );
        let _ = writeln!(
            out,
            "{:>5} {:>7} | {:>6} {:>6} {:>6} | {:>6} {:>6} {:>6}",
            "class", "support", "P(w)", "R(w)", "F1(w)", "P(p)", "R(p)", "F1(p)"
        );
        for (w, p) in self.weak.iter().zip(&self.patched) {
            let mark = if w.class == self.target_class { "*" } else { " " };
            let _ = writeln!(
                out,
                "{:>4}{mark} {:>7} | {} {} {} | {} {} {}",
                w.class,
                w.support,
                pct(w.precision),
                pct(w.recall),
                pct(w.f1),
                pct(p.precision),
                pct(p.recall),
                pct(p.f1)
            );
        }
        let _ = writeln!(
            out,
            "non-target accuracy: weak {:.2}%, patched {:.2}% ({:+.2})",
            100.0 * self.weak_non_tc_accuracy,
            100.0 * self.patched_non_tc_accuracy,
            100.0 * self.non_tc_accuracy_delta()
        );
        out
    }
}

pub fn evaluate_patch(
    weak: &Model,
    module: &Model,
    cal: &Calibration,
    test: &LabeledDataset,
    tc: usize,
) -> Result<PatchReport> {
    let classes = weak.num_classes();
    if tc >= classes || cal.class_id != tc {
        return Err(Error::Config(format!(
            "target class {tc} does not match calibration class {} or the model's {classes} classes",
            cal.class_id
        )));
    }
    let labels = test.labels();
    if !labels.contains(&tc) {
        return Err(Error::NoClassSamples(tc));
    }
    let both = (0..test.len())
        .into_par_iter()
        .map(|i| {
            let x = test.image(i);
            let w = argmax(weak.forward(&x)?.data());
            let (p, _) = patched_predict(weak, module, cal, &x)?;
            Ok((w, p))
        })
        .collect::<Result<Vec<(usize, usize)>>>()?;
    let (weak_preds, patched_preds): (Vec<usize>, Vec<usize>) = both.into_iter().unzip();
    let no_other = || Error::Config(format!("test set has no samples outside class {tc}"));
    Ok(PatchReport {
        target_class: tc,
        calibration: *cal,
        weak: class_metrics(&weak_preds, labels, classes),
        patched: class_metrics(&patched_preds, labels, classes),
        weak_non_tc_accuracy: non_tc_accuracy(&weak_preds, labels, tc).ok_or_else(no_other)?,
        patched_non_tc_accuracy: non_tc_accuracy(&patched_preds, labels, tc).ok_or_else(no_other)?,
        module_kernels: count_kernels(&module.spec),
        module_flops: count_flops(&module.spec)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn calibration_examples() {
        let c = Calibration::from_logits(&[2.0], 0).unwrap();
        assert_eq!((c.min, c.max), (2.0, 2.0));
        assert_eq!(c.normalize(7.0), 0.5);
        let c = Calibration::from_logits(&[1.0, 3.0], 1).unwrap();
        assert_eq!((c.min, c.max), (1.0, 3.0));
        assert_eq!(c.normalize(2.0), 0.5);
        assert_eq!(c.normalize(-5.0), 0.0);
        assert_eq!(c.normalize(9.0), 1.0);
        assert!(Calibration::from_logits(&[], 0).is_err());
    }

    #[test]
    fn replacement_rule() {
        // logits whose softmax is [0.2, 0.5, 0.3]
        let logits = [0.2f32.ln(), 0.5f32.ln(), 0.3f32.ln()];
        let cal = Calibration { class_id: 0, min: 0.0, max: 1.0 };
        let v = patch_vector(&logits, 0.9, &cal);
        assert_abs_diff_eq!(v[0], 0.9, epsilon = 1e-6);
        assert_abs_diff_eq!(v[1], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(v[2], 0.3, epsilon = 1e-6);
        assert_eq!(argmax(&v), 0);
    }

    #[test]
    fn metrics_match_confusion_matrix() {
        let labels = [0, 0, 1, 1, 1, 2, 2, 0];
        let preds = [0, 1, 1, 1, 0, 2, 1, 0];
        let mut cm = [[0usize; 4]; 4];
        for (&p, &l) in preds.iter().zip(&labels) {
            cm[l][p] += 1;
        }
        let m = class_metrics(&preds, &labels, 4);
        for c in 0..3 {
            let tp = cm[c][c] as f64;
            let col: usize = (0..4).map(|r| cm[r][c]).sum();
            let row: usize = cm[c].iter().sum();
            assert_abs_diff_eq!(m[c].precision.unwrap(), tp / col as f64);
            assert_abs_diff_eq!(m[c].recall.unwrap(), tp / row as f64);
        }
        assert_eq!(m[3].precision, None);
        assert_eq!(m[3].f1, None);
    }

    #[test]
    fn perfect_classifier_scores_one() {
        let labels = [0, 1, 2, 1];
        for m in class_metrics(&labels, &labels, 3) {
            assert_eq!((m.precision, m.recall, m.f1), (Some(1.0), Some(1.0), Some(1.0)));
        }
    }

    #[test]
    fn unpredicted_class_has_zero_precision() {
        let m = class_metrics(&[0, 0], &[0, 1], 2);
        assert_eq!((m[1].precision, m[1].recall, m[1].f1), (Some(0.0), Some(0.0), Some(0.0)));
    }

    proptest! {
        #[test]
        fn only_the_target_logit_matters(
            weak in prop::collection::vec(-5.0f32..5.0, 4),
            tc in 0usize..4, lo in -3.0f32..0.0, hi in 0.5f32..3.0, o in -4.0f32..4.0
        ) {
            let cal = Calibration { class_id: tc, min: lo, max: hi };
            let v = patch_vector(&weak, o, &cal);
            let s = softmax_slice(&weak);
            for c in 0..4 {
                if c != tc {
                    prop_assert_eq!(v[c], s[c]);
                }
            }
            prop_assert!((0.0..=1.0).contains(&v[tc]));
        }
    }
}
