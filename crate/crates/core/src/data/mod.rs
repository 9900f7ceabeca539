//! Synthetic series, segmentation, label disturbance, curriculum levels and splits.

mod curriculum;
mod disturb;
mod generate;
pub mod io;
mod segment;
mod splits;

use serde::{Deserialize, Serialize};

pub use curriculum::{
    assign_levels, find_class_runs, point_levels, sample_intervals_per_level, ClassRun,
    LeveledPool, SampledInterval,
};
pub use disturb::{disturb_boundaries, disturb_symmetric, DisturbMode, DisturbanceConfig};
pub use generate::{class_template, generate_mvd, GeneratorConfig};
pub use segment::{
    majority_label, segment_count, segment_interval, segment_labels, window_starts,
    SegmentSequence,
};
pub use splits::{make_splits, Fold, SplitPlan, SplitScheme};

use crate::error::{Error, Result};

/// One raw labelled multivariate series.
///
/// `labels` are the working (possibly disturbed) annotations; `clean_labels`
/// keep the generator's ground truth and are never modified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub interval_id: usize,
    pub group_id: usize,
    /// `T × F`, row-major.
    pub values: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub clean_labels: Vec<usize>,
}

impl TimeInterval {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn features(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        let t = self.values.len();
        let f = self.features();
        let bad = |msg: String| Error::Format {
            path: format!("interval {}", self.interval_id),
            msg,
        };
        if t == 0 || f == 0 {
            return Err(bad("empty series".into()));
        }
        if self.labels.len() != t || self.clean_labels.len() != t {
            return Err(bad("label length differs from series length".into()));
        }
        if self.values.iter().any(|r| r.len() != f || r.iter().any(|v| !v.is_finite())) {
            return Err(bad("ragged or non-finite values".into()));
        }
        if self.labels.iter().chain(&self.clean_labels).any(|&l| l >= classes) {
            return Err(bad(format!("label outside 0..{classes}")));
        }
        Ok(())
    }
}

/// Boundary disturbance applied to every interval's working labels; each
/// interval draws from `seed + interval_id`.
pub fn disturb_dataset(data: &[TimeInterval], ratio: f64, seed: u64) -> Result<Vec<TimeInterval>> {
    data.iter()
        .map(|iv| {
            let labels = disturb_boundaries(&iv.labels, ratio, seed.wrapping_add(iv.interval_id as u64))?;
            Ok(TimeInterval {
                labels,
                ..iv.clone()
            })
        })
        .collect()
}
