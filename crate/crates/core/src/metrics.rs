//! Confusion matrices and the precision / recall / F1 / accuracy / AUC
//! measures, with one-vs-rest reduction and macro averaging over the three
//! polarity classes.

use std::io::Write;

use thiserror::Error;

use crate::corpus::Sentiment;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("predictions ({predictions}) and actuals ({actuals}) differ in length")]
    LengthMismatch { predictions: usize, actuals: usize },
    #[error("label {label} at position {index} is not a class index in 0..3")]
    LabelOutOfRange { index: usize, label: usize },
}

/// 3×3 counts, `cells[predicted][actual]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix3 {
    pub cells: [[u64; 3]; 3],
}

impl ConfusionMatrix3 {
    pub fn from_labels(predictions: &[usize], actuals: &[usize]) -> Result<Self, MetricsError> {
        confusion(predictions, actuals)
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.cells[i][i]).sum()
    }

    /// Multiclass accuracy, `trace / total` (0 for an empty matrix).
    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }

    /// CSV with a labeled header row (actual) and label column (predicted).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "predicted\\actual,-1,0,1")?;
        for p in Sentiment::ALL {
            let row = &self.cells[p.index()];
            writeln!(out, "{},{},{},{}", p, row[0], row[1], row[2])?;
        }
        Ok(())
    }
}

/// Counts `cells[p][a]` over paired class indices.
pub fn confusion(
    predictions: &[usize],
    actuals: &[usize],
) -> Result<ConfusionMatrix3, MetricsError> {
    if predictions.len() != actuals.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            actuals: actuals.len(),
        });
    }
    let mut cm = ConfusionMatrix3::default();
    for (index, (&p, &a)) in predictions.iter().zip(actuals).enumerate() {
        for label in [p, a] {
            if label >= 3 {
                return Err(MetricsError::LabelOutOfRange { index, label });
            }
        }
        cm.cells[p][a] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

/// Returns 0 when the denominator is 0.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl BinaryCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// TP / (TP + FP)
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// TP / (TP + FN)
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// FP / (FP + TN)
    pub fn false_positive_rate(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    /// 2PR / (P + R)
    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// (TP + TN) / total
    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// Single-threshold AUC: (R − FP/(FP+TN) + 1) / 2.
    pub fn auc(&self) -> f64 {
        (self.recall() - self.false_positive_rate() + 1.0) / 2.0
    }
}

pub fn precision(c: &BinaryCounts) -> f64 {
    c.precision()
}

pub fn recall(c: &BinaryCounts) -> f64 {
    c.recall()
}

pub fn f1(c: &BinaryCounts) -> f64 {
    c.f1()
}

pub fn accuracy(c: &BinaryCounts) -> f64 {
    c.accuracy()
}

pub fn auc(c: &BinaryCounts) -> f64 {
    c.auc()
}

/// Collapses the matrix to `positive` vs everything else.
pub fn one_vs_rest(cm: &ConfusionMatrix3, positive: Sentiment) -> BinaryCounts {
    let c = positive.index();
    let tp = cm.cells[c][c];
    let predicted_c: u64 = cm.cells[c].iter().sum();
    let actual_c: u64 = (0..3).map(|p| cm.cells[p][c]).sum();
    let fp = predicted_c - tp;
    let fn_ = actual_c - tp;
    let tn = cm.total() - tp - fp - fn_;
    BinaryCounts { tp, fp, fn_, tn }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

impl ClassScores {
    fn of(c: &BinaryCounts) -> Self {
        Self {
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            auc: c.auc(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroReport {
    /// Indexed by class index (Negative, Neutral, Positive).
    pub per_class: [ClassScores; 3],
    /// Unweighted mean of `per_class`.
    pub macro_avg: ClassScores,
    pub accuracy: f64,
}

pub fn macro_report(cm: &ConfusionMatrix3) -> MacroReport {
    let per_class = Sentiment::ALL.map(|c| ClassScores::of(&one_vs_rest(cm, c)));
    let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / 3.0;
    MacroReport {
        per_class,
        macro_avg: ClassScores {
            precision: mean(|s| s.precision),
            recall: mean(|s| s.recall),
            f1: mean(|s| s.f1),
            auc: mean(|s| s.auc),
        },
        accuracy: cm.accuracy(),
    }
}

impl MacroReport {
    /// Rows per class and `macro`, then a trailing `accuracy,<value>` line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "class,precision,recall,f1,auc")?;
        let row = |out: &mut W, name: &str, s: &ClassScores| {
            writeln!(
                out,
                "{},{},{},{},{}",
                name, s.precision, s.recall, s.f1, s.auc
            )
        };
        for c in Sentiment::ALL {
            row(&mut out, &c.to_string(), &self.per_class[c.index()])?;
        }
        row(&mut out, "macro", &self.macro_avg)?;
        writeln!(out, "accuracy,{}", self.accuracy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_diagonal() {
        let cm = confusion(&[0, 1, 2], &[0, 1, 2]).unwrap();
        assert_eq!(cm.cells, [[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
    }

    #[test]
    fn constant_predictor_fills_one_row() {
        let cm = confusion(&[0, 0, 0], &[0, 1, 2]).unwrap();
        assert_eq!(cm.cells, [[1, 1, 1], [0, 0, 0], [0, 0, 0]]);
    }

    #[test]
    fn confusion_errors() {
        assert_eq!(
            confusion(&[0], &[0, 1]),
            Err(MetricsError::LengthMismatch {
                predictions: 1,
                actuals: 2
            })
        );
        assert_eq!(
            confusion(&[0, 3], &[0, 1]),
            Err(MetricsError::LabelOutOfRange { index: 1, label: 3 })
        );
    }

    #[test]
    fn one_vs_rest_examples() {
        let diag = ConfusionMatrix3 {
            cells: [[3, 0, 0], [0, 4, 0], [0, 0, 5]],
        };
        assert_eq!(
            one_vs_rest(&diag, Sentiment::Negative),
            BinaryCounts::new(3, 0, 0, 9)
        );
        let all_zero_pred = ConfusionMatrix3 {
            cells: [[4, 4, 4], [0, 0, 0], [0, 0, 0]],
        };
        assert_eq!(
            one_vs_rest(&all_zero_pred, Sentiment::Negative),
            BinaryCounts::new(4, 8, 0, 0)
        );
    }

    #[test]
    fn perfect_binary_scores() {
        let c = BinaryCounts::new(10, 0, 0, 10);
        for v in [c.precision(), c.recall(), c.f1(), c.accuracy(), c.auc()] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn worked_example() {
        let c = BinaryCounts::new(5, 2, 3, 10);
        assert!((c.precision() - 5.0 / 7.0).abs() < 1e-15);
        assert_eq!(c.recall(), 0.625);
        assert!((c.f1() - 0.6666666666666666).abs() < 1e-12);
        assert_eq!(c.accuracy(), 0.75);
        assert!((c.auc() - 0.7291666666666666).abs() < 1e-12);
    }

    #[test]
    fn zero_denominators() {
        let c = BinaryCounts::new(0, 0, 4, 6);
        assert_eq!(c.precision(), 0.0);
        assert_eq!(c.f1(), 0.0);
        let empty = BinaryCounts::default();
        assert_eq!(empty.accuracy(), 0.0);
        assert_eq!(empty.auc(), 0.5);
    }

    #[test]
    fn macro_of_perfect_matrix() {
        let cm = ConfusionMatrix3 {
            cells: [[2, 0, 0], [0, 2, 0], [0, 0, 2]],
        };
        let r = macro_report(&cm);
        let m = r.macro_avg;
        for v in [m.precision, m.recall, m.f1, m.auc, r.accuracy] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn macro_of_symmetric_matrix_equals_class_value() {
        let cm = ConfusionMatrix3 {
            cells: [[5, 1, 1], [1, 5, 1], [1, 1, 5]],
        };
        let r = macro_report(&cm);
        assert!((r.macro_avg.f1 - r.per_class[0].f1).abs() < 1e-15);
        assert!((r.macro_avg.precision - 5.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layouts() {
        let cm = ConfusionMatrix3 {
            cells: [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        };
        let mut buf = Vec::new();
        cm.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "predicted\\actual,-1,0,1\n-1,1,0,0\n0,0,1,0\n1,0,0,1\n"
        );
        let mut buf = Vec::new();
        macro_report(&cm).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "class,precision,recall,f1,auc");
        assert_eq!(lines[1], "-1,1,1,1,1");
        assert_eq!(lines[4], "macro,1,1,1,1");
        assert_eq!(lines[5], "accuracy,1");
    }
}
