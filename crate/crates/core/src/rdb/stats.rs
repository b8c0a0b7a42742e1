use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class counts and `#majority / #minority`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceStats {
    pub n_pos: usize,
    pub n_neg: usize,
    /// Infinite when one class is absent.
    pub imbalance_ratio: f64,
    pub single_class: bool,
}

impl ImbalanceStats {
    /// The less frequent label; ties resolve to 1.
    pub fn minority_label(&self) -> u8 {
        if self.n_pos <= self.n_neg {
            1
        } else {
            0
        }
    }
}

pub fn compute_imbalance_stats(labels: &[u8]) -> Result<ImbalanceStats> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty label set".into()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidArgument(format!("label {bad} is not binary")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    let (hi, lo) = (n_pos.max(n_neg), n_pos.min(n_neg));
    let single_class = lo == 0;
    let imbalance_ratio = if single_class {
        f64::INFINITY
    } else {
        hi as f64 / lo as f64
    };
    Ok(ImbalanceStats {
        n_pos,
        n_neg,
        imbalance_ratio,
        single_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(pos: usize, neg: usize) -> Vec<u8> {
        let mut v = vec![1u8; pos];
        v.extend(std::iter::repeat(0u8).take(neg));
        v
    }

    #[test]
    fn table_ratios() {
        let s = compute_imbalance_stats(&labels(231, 1122)).unwrap();
        assert_eq!(format!("{:.2}", s.imbalance_ratio), "4.86");
        assert_eq!(s.minority_label(), 1);
        // Published as 9.62; the exact value is 9.6255, so allow the last digit.
        let s = compute_imbalance_stats(&labels(78467, 8152)).unwrap();
        assert!((s.imbalance_ratio - 9.62).abs() < 0.01);
        assert_eq!(s.minority_label(), 0);
        let s = compute_imbalance_stats(&labels(10, 10)).unwrap();
        assert_eq!(s.imbalance_ratio, 1.0);
    }

    #[test]
    fn single_class_is_flagged() {
        let s = compute_imbalance_stats(&labels(0, 7)).unwrap();
        assert!(s.single_class);
        assert!(s.imbalance_ratio.is_infinite());
        assert!(compute_imbalance_stats(&[]).is_err());
        assert!(compute_imbalance_stats(&[2]).is_err());
    }

    proptest! {
        #[test]
        fn ratio_at_least_one_and_label_symmetric(v in prop::collection::vec(0u8..2, 1..200)) {
            let s = compute_imbalance_stats(&v).unwrap();
            prop_assert!(s.imbalance_ratio >= 1.0);
            let flipped: Vec<u8> = v.iter().map(|l| 1 - l).collect();
            let f = compute_imbalance_stats(&flipped).unwrap();
            prop_assert_eq!(s.imbalance_ratio, f.imbalance_ratio);
        }
    }
}
