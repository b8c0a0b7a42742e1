use serde::{Deserialize, Serialize};

/// Binary confusion matrix; label 1 is the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fn_: usize, tn: usize, fp: usize) -> Self {
        ConfusionMatrix { tp, fn_, tn, fp }
    }

    pub fn from_predictions(labels: &[u8], preds: &[u8]) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (&y, &p) in labels.iter().zip(preds) {
            match (y, p) {
                (1, 1) => cm.tp += 1,
                (1, _) => cm.fn_ += 1,
                (_, 1) => cm.fp += 1,
                _ => cm.tn += 1,
            }
        }
        cm
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }

    /// True-positive rate; 0 when there are no positives.
    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.positives())
    }

    /// True-negative rate; 0 when there are no negatives.
    pub fn tnr(&self) -> f64 {
        ratio(self.tn, self.negatives())
    }

    /// True when one class is absent and a recall term was defined as 0.
    pub fn is_degenerate(&self) -> bool {
        self.positives() == 0 || self.negatives() == 0
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// `½ (TP/(TP+FN) + TN/(TN+FP))`.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> f64 {
    0.5 * (cm.tpr() + cm.tnr())
}

/// `√(TP/(TP+FN) · TN/(TN+FP))`.
pub fn g_mean(cm: &ConfusionMatrix) -> f64 {
    (cm.tpr() * cm.tnr()).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub epoch: usize,
    pub split: String,
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
    pub b_acc: f64,
    pub g_mean: f64,
    pub loss_cls: f64,
    pub loss_syn: f64,
}

impl MetricsReport {
    pub fn new(epoch: usize, split: &str, cm: ConfusionMatrix, loss_cls: f64, loss_syn: f64) -> Self {
        MetricsReport {
            epoch,
            split: split.to_string(),
            tp: cm.tp,
            fn_: cm.fn_,
            tn: cm.tn,
            fp: cm.fp,
            b_acc: balanced_accuracy(&cm),
            g_mean: g_mean(&cm),
            loss_cls,
            loss_syn,
        }
    }

    pub fn confusion(&self) -> ConfusionMatrix {
        ConfusionMatrix::new(self.tp, self.fn_, self.tn, self.fp)
    }

    pub fn tpr(&self) -> f64 {
        self.confusion().tpr()
    }

    pub fn tnr(&self) -> f64 {
        self.confusion().tnr()
    }

    pub const CSV_HEADER: [&'static str; 10] =
        ["epoch", "split", "tp", "fn", "tn", "fp", "b_acc", "g_mean", "loss_cls", "loss_syn"];

    pub fn csv_record(&self) -> [String; 10] {
        [
            self.epoch.to_string(),
            self.split.clone(),
            self.tp.to_string(),
            self.fn_.to_string(),
            self.tn.to_string(),
            self.fp.to_string(),
            self.b_acc.to_string(),
            self.g_mean.to_string(),
            self.loss_cls.to_string(),
            self.loss_syn.to_string(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let cm = ConfusionMatrix::new(50, 50, 100, 0);
        assert_eq!(balanced_accuracy(&cm), 0.75);
        assert!((g_mean(&cm) - 0.5f64.sqrt()).abs() < 1e-15);
        let all_major = ConfusionMatrix::new(0, 231, 1122, 0);
        assert_eq!((balanced_accuracy(&all_major), g_mean(&all_major)), (0.5, 0.0));
        let perfect = ConfusionMatrix::new(231, 0, 1122, 0);
        assert_eq!((balanced_accuracy(&perfect), g_mean(&perfect)), (1.0, 1.0));
        assert_eq!(g_mean(&ConfusionMatrix::new(0, 5, 3, 9)), 0.0);
    }

    #[test]
    fn degenerate_split_is_flagged() {
        let cm = ConfusionMatrix::new(0, 0, 10, 2);
        assert!(cm.is_degenerate());
        assert_eq!(cm.tpr(), 0.0);
    }

    #[test]
    fn from_predictions_counts() {
        let cm = ConfusionMatrix::from_predictions(&[1, 1, 0, 0, 0], &[1, 0, 0, 1, 0]);
        assert_eq!(cm, ConfusionMatrix::new(1, 1, 2, 1));
    }

    #[test]
    fn json_field_names() {
        let r = MetricsReport::new(3, "test", ConfusionMatrix::new(1, 2, 3, 4), 0.1, 0.2);
        let v = serde_json::to_value(&r).unwrap();
        for k in MetricsReport::CSV_HEADER {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
