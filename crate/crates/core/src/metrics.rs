//! Confusion matrices and per-class / aggregate classification metrics.

use serde::{Deserialize, Serialize};

use crate::scene::{BehaviorClass, NUM_CLASSES};
use crate::Scalar;

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn new() -> Self {
        Confusion {
            counts: vec![vec![0; NUM_CLASSES]; NUM_CLASSES],
        }
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth][pred] += 1;
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    fn tp(&self, class: usize) -> usize {
        self.counts[class][class]
    }

    fn predicted(&self, class: usize) -> usize {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// tp / (tp + fp); 0 when the class was never predicted.
    pub fn precision(&self, class: usize) -> Scalar {
        let p = self.predicted(class);
        if p == 0 {
            0.0
        } else {
            self.tp(class) as Scalar / p as Scalar
        }
    }

    /// tp / (tp + fn); None when the class has no true instances.
    pub fn recall(&self, class: usize) -> Option<Scalar> {
        let s = self.support(class);
        if s == 0 {
            None
        } else {
            Some(self.tp(class) as Scalar / s as Scalar)
        }
    }

    /// Harmonic mean of precision and recall; 0 when both are 0, None for
    /// zero-support classes.
    pub fn f1(&self, class: usize) -> Option<Scalar> {
        let r = self.recall(class)?;
        let p = self.precision(class);
        if p + r == 0.0 {
            Some(0.0)
        } else {
            Some(2.0 * p * r / (p + r))
        }
    }

    pub fn accuracy(&self) -> Scalar {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let correct: usize = (0..NUM_CLASSES).map(|c| self.tp(c)).sum();
        correct as Scalar / total as Scalar
    }

    fn macro_over(&self, f: impl Fn(usize) -> Option<Scalar>) -> Scalar {
        let values: Vec<Scalar> = (0..NUM_CLASSES).filter_map(f).collect();
        if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<Scalar>() / values.len() as Scalar
        }
    }

    /// Mean recall over classes with at least one true instance.
    pub fn macro_recall(&self) -> Scalar {
        self.macro_over(|c| self.recall(c))
    }

    /// Mean F1 over classes with at least one true instance.
    pub fn macro_f1(&self) -> Scalar {
        self.macro_over(|c| self.f1(c))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub support: usize,
    pub precision: Scalar,
    pub recall: Option<Scalar>,
    pub f1: Option<Scalar>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub accuracy: Scalar,
    pub macro_f1: Scalar,
    pub macro_recall: Scalar,
    pub per_class: Vec<ClassReport>,
    pub confusion: Confusion,
}

impl RunMetrics {
    pub fn from_confusion(seed: u64, cm: &Confusion) -> RunMetrics {
        RunMetrics {
            seed,
            accuracy: cm.accuracy(),
            macro_f1: cm.macro_f1(),
            macro_recall: cm.macro_recall(),
            per_class: BehaviorClass::ALL
                .iter()
                .enumerate()
                .map(|(c, class)| ClassReport {
                    class: class.name().to_string(),
                    support: cm.support(c),
                    precision: cm.precision(c),
                    recall: cm.recall(c),
                    f1: cm.f1(c),
                })
                .collect(),
            confusion: cm.clone(),
        }
    }
}

/// Multi-seed evaluation report for one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub runs: Vec<RunMetrics>,
    pub mean_accuracy: Scalar,
    pub mean_macro_f1: Scalar,
    pub mean_macro_recall: Scalar,
    /// Class x [node, relations...] attention summary; NaN-free rows only
    /// (absent classes are omitted as nulls).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attention: Option<Vec<Vec<Option<Scalar>>>>,
}

impl EvalReport {
    pub fn from_runs(method: &str, runs: Vec<RunMetrics>) -> EvalReport {
        assert!(!runs.is_empty(), "report requires at least one run");
        let n = runs.len() as Scalar;
        EvalReport {
            method: method.to_string(),
            mean_accuracy: runs.iter().map(|r| r.accuracy).sum::<Scalar>() / n,
            mean_macro_f1: runs.iter().map(|r| r.macro_f1).sum::<Scalar>() / n,
            mean_macro_recall: runs.iter().map(|r| r.macro_recall).sum::<Scalar>() / n,
            runs,
            attention: None,
        }
    }

    /// Drops per-class rows for classes with zero support in every run
    /// (used by transfer targets that lack some classes).
    pub fn retain_present_classes(&mut self) {
        let present: Vec<String> = BehaviorClass::ALL
            .iter()
            .enumerate()
            .filter(|(c, _)| {
                self.runs
                    .iter()
                    .any(|r| r.per_class.iter().any(|p| p.class == BehaviorClass::ALL[*c].name() && p.support > 0))
            })
            .map(|(_, class)| class.name().to_string())
            .collect();
        for run in &mut self.runs {
            run.per_class.retain(|p| present.contains(&p.class));
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
