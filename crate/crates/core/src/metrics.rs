//! Classification and boundary metrics, label-recovery counts and the
//! mutual-information gain from adding context.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    /// `confusion[true][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn classification_metrics(pred: &[usize], truth: &[usize], classes: usize) -> Result<ClassificationMetrics> {
    if pred.is_empty() {
        return Err(Error::Contract("metrics on empty input".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(Error::Contract(format!("label outside 0..{classes}")));
        }
        confusion[t][p] += 1;
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let per_class_f1: Vec<f64> = (0..classes)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let actual: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|r| r[c]).sum();
            let denom = (actual + predicted) as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .collect();
    Ok(ClassificationMetrics {
        accuracy: correct as f64 / pred.len() as f64,
        macro_f1: per_class_f1.iter().sum::<f64>() / classes as f64,
        per_class_f1,
        confusion,
    })
}

/// 1-based indices `i` with `labels[i] ≠ labels[i+1]`.
pub fn change_points(labels: &[usize]) -> Vec<usize> {
    labels
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, _)| i + 1)
        .collect()
}

/// Tolerance-windowed change-point F1. Both sorted point lists are walked
/// together, matching the earliest compatible pair first; on a line this
/// greedy order yields a maximum one-to-one matching.
pub fn c_score_points(pred: &[usize], truth: &[usize], tau: usize) -> f64 {
    match (pred.is_empty(), truth.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut p = pred.to_vec();
    let mut t = truth.to_vec();
    p.sort_unstable();
    t.sort_unstable();
    let (mut i, mut j, mut matched) = (0, 0, 0usize);
    while i < p.len() && j < t.len() {
        if p[i].abs_diff(t[j]) <= tau {
            matched += 1;
            i += 1;
            j += 1;
        } else if p[i] < t[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    if matched == 0 {
        return 0.0;
    }
    let precision = matched as f64 / pred.len() as f64;
    let recall = matched as f64 / truth.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn c_score(pred: &[usize], truth: &[usize], tau: usize) -> f64 {
    c_score_points(&change_points(pred), &change_points(truth), tau)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelRecovery {
    /// Segments whose disturbed label differed from the clean one.
    pub disturbed: usize,
    /// Of those, how many the harmonized label restored.
    pub restored: usize,
    /// Segments whose disturbed label was already clean.
    pub intact: usize,
    /// Of those, how many harmonization broke.
    pub corrupted: usize,
}

impl LabelRecovery {
    pub fn recovery(&self) -> f64 {
        if self.disturbed == 0 {
            0.0
        } else {
            self.restored as f64 / self.disturbed as f64
        }
    }

    pub fn corruption(&self) -> f64 {
        if self.intact == 0 {
            0.0
        } else {
            self.corrupted as f64 / self.intact as f64
        }
    }

    /// Agreement of the disturbed labels with the clean ones.
    pub fn disturbed_agreement(&self) -> f64 {
        let n = self.disturbed + self.intact;
        if n == 0 {
            1.0
        } else {
            self.intact as f64 / n as f64
        }
    }

    /// Agreement of the harmonized labels with the clean ones.
    pub fn harmonized_agreement(&self) -> f64 {
        let n = self.disturbed + self.intact;
        if n == 0 {
            1.0
        } else {
            (self.restored + self.intact - self.corrupted) as f64 / n as f64
        }
    }

    pub fn merge(&mut self, other: &LabelRecovery) {
        self.disturbed += other.disturbed;
        self.restored += other.restored;
        self.intact += other.intact;
        self.corrupted += other.corrupted;
    }
}

pub fn label_recovery(harmonized: &[usize], disturbed: &[usize], clean: &[usize]) -> Result<LabelRecovery> {
    if harmonized.len() != disturbed.len() || disturbed.len() != clean.len() {
        return Err(Error::Contract("label_recovery needs equal lengths".into()));
    }
    let mut r = LabelRecovery::default();
    for ((&h, &d), &c) in harmonized.iter().zip(disturbed).zip(clean) {
        if d != c {
            r.disturbed += 1;
            r.restored += usize::from(h == c);
        } else {
            r.intact += 1;
            r.corrupted += usize::from(h != c);
        }
    }
    Ok(r)
}

/// Joint distribution `P(y, x, x_A)` over finite alphabets, stored
/// `table[y][x][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    table: Vec<Vec<Vec<f64>>>,
}

impl DiscreteJoint {
    pub fn new(table: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let ny = table.len();
        let nx = table.first().map_or(0, Vec::len);
        let na = table.first().and_then(|t| t.first()).map_or(0, Vec::len);
        if ny == 0 || nx == 0 || na == 0 {
            return Err(Error::Contract("empty joint table".into()));
        }
        let mut total = 0.0;
        for plane in &table {
            if plane.len() != nx || plane.iter().any(|r| r.len() != na) {
                return Err(Error::Contract("ragged joint table".into()));
            }
            for &p in plane.iter().flatten() {
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(Error::Contract(format!("invalid probability {p}")));
                }
                total += p;
            }
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!("joint sums to {total}")));
        }
        Ok(Self { table })
    }

    /// `P(y)·P(x)·P(x_A)` from three marginals.
    pub fn independent(py: &[f64], px: &[f64], pa: &[f64]) -> Result<Self> {
        Self::new(
            py.iter()
                .map(|&y| px.iter().map(|&x| pa.iter().map(|&a| y * x * a).collect()).collect())
                .collect(),
        )
    }

    pub fn table(&self) -> &[Vec<Vec<f64>>] {
        &self.table
    }
}

fn mutual_information(pairs: &[Vec<f64>]) -> f64 {
    // pairs[y][z] = P(y, z)
    let py: Vec<f64> = pairs.iter().map(|r| r.iter().sum()).collect();
    let nz = pairs.first().map_or(0, Vec::len);
    let pz: Vec<f64> = (0..nz).map(|z| pairs.iter().map(|r| r[z]).sum()).collect();
    let mut mi = 0.0;
    for (y, row) in pairs.iter().enumerate() {
        for (z, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (py[y] * pz[z])).log2();
            }
        }
    }
    mi
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiGain {
    pub i_y_x: f64,
    pub i_y_x_context: f64,
    pub gain: f64,
}

/// `I(y; x)`, `I(y; x, x_A)` and their difference, in bits.
pub fn mi_gain(joint: &DiscreteJoint) -> MiGain {
    let yx: Vec<Vec<f64>> = joint
        .table
        .iter()
        .map(|plane| plane.iter().map(|r| r.iter().sum()).collect())
        .collect();
    let y_xa: Vec<Vec<f64>> = joint
        .table
        .iter()
        .map(|plane| plane.iter().flatten().copied().collect())
        .collect();
    let i_y_x = mutual_information(&yx);
    let i_y_x_context = mutual_information(&y_xa);
    MiGain {
        i_y_x,
        i_y_x_context,
        gain: i_y_x_context - i_y_x,
    }
}

/// Entropy in bits.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.log2()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
    /// F1 of class 1, emitted for binary tasks.
    pub positive_f1: Option<f64>,
    pub c_score: f64,
    pub label_recovery: Option<LabelRecovery>,
    pub segments: usize,
    pub intervals: usize,
}

/// Pools segment predictions across intervals for the classification
/// metrics and averages the C-score over intervals.
pub fn evaluate_intervals(pairs: &[(Vec<usize>, Vec<usize>)], classes: usize, tau: usize) -> Result<MetricsReport> {
    let pred: Vec<usize> = pairs.iter().flat_map(|(p, _)| p.iter().copied()).collect();
    let truth: Vec<usize> = pairs.iter().flat_map(|(_, t)| t.iter().copied()).collect();
    let m = classification_metrics(&pred, &truth, classes)?;
    let c = pairs.iter().map(|(p, t)| c_score(p, t, tau)).sum::<f64>() / pairs.len() as f64;
    Ok(MetricsReport {
        accuracy: m.accuracy,
        macro_f1: m.macro_f1,
        positive_f1: (classes == 2).then(|| m.per_class_f1[1]),
        per_class_f1: m.per_class_f1,
        c_score: c,
        label_recovery: None,
        segments: pred.len(),
        intervals: pairs.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub folds: usize,
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
    pub c_score: MeanStd,
}

pub fn summarize_folds(reports: &[MetricsReport]) -> FoldSummary {
    let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    FoldSummary {
        folds: reports.len(),
        accuracy: col(|r| r.accuracy),
        macro_f1: col(|r| r.macro_f1),
        c_score: col(|r| r.c_score),
    }
}
