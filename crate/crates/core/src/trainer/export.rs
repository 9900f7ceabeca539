//! Harmonized training labels as standalone records.

use serde::{Deserialize, Serialize};

use super::run::TrainOutcome;
use crate::data::TimeInterval;
use crate::error::{Error, Result};

/// Final segment labels of one sampled training interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonizedInterval {
    pub interval_id: usize,
    /// First point of the sampled interval within its record.
    pub start: usize,
    pub level: usize,
    pub original: Vec<usize>,
    pub harmonized: Vec<usize>,
}

pub fn harmonized_intervals(out: &TrainOutcome) -> Vec<HarmonizedInterval> {
    out.data
        .train
        .iter()
        .zip(&out.labels)
        .map(|(s, l)| HarmonizedInterval {
            interval_id: s.interval_id,
            start: s.start,
            level: s.level,
            original: l.y0.clone(),
            harmonized: l.y_cur.clone(),
        })
        .collect()
}

/// Rewrites working point labels by majority vote of the harmonized
/// segments covering each point. Ties and uncovered points keep their label.
pub fn apply_harmonized(
    data: &[TimeInterval],
    items: &[HarmonizedInterval],
    window: usize,
    stride: usize,
    classes: usize,
) -> Result<Vec<TimeInterval>> {
    let mut out = data.to_vec();
    let mut votes: Vec<Vec<Vec<u32>>> = data.iter().map(|iv| vec![vec![0; classes]; iv.len()]).collect();
    for item in items {
        let r = data
            .iter()
            .position(|iv| iv.interval_id == item.interval_id)
            .ok_or_else(|| Error::config("input", format!("no record with interval_id {}", item.interval_id)))?;
        for (k, &y) in item.harmonized.iter().enumerate() {
            let from = item.start + k * stride;
            if y >= classes || from + window > data[r].len() {
                return Err(Error::config(
                    "labels",
                    format!("segment {k} of interval {} does not fit its record", item.interval_id),
                ));
            }
            for v in &mut votes[r][from..from + window] {
                v[y] += 1;
            }
        }
    }
    for (iv, v) in out.iter_mut().zip(&votes) {
        for (label, counts) in iv.labels.iter_mut().zip(v) {
            let top = *counts.iter().max().unwrap_or(&0);
            if top == 0 || counts.iter().filter(|&&c| c == top).count() > 1 {
                continue;
            }
            *label = counts.iter().position(|&c| c == top).expect("max exists");
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(labels: Vec<usize>) -> TimeInterval {
        TimeInterval {
            interval_id: 4,
            group_id: 0,
            values: vec![vec![0.0]; labels.len()],
            clean_labels: labels.clone(),
            labels,
        }
    }

    #[test]
    fn votes_and_ties() {
        let data = vec![record(vec![0; 12])];
        let items = vec![
            HarmonizedInterval {
                interval_id: 4,
                start: 0,
                level: 1,
                original: vec![0, 0],
                harmonized: vec![1, 1],
            },
            HarmonizedInterval {
                interval_id: 4,
                start: 2,
                level: 1,
                original: vec![0, 0],
                harmonized: vec![0, 0],
            },
        ];
        // Windows of 4 with stride 2: first item covers 0..6, second 2..8.
        let out = apply_harmonized(&data, &items, 4, 2, 2).unwrap();
        assert_eq!(out[0].labels, vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(out[0].clean_labels, vec![0; 12]);
        let bad = HarmonizedInterval {
            interval_id: 9,
            ..items[0].clone()
        };
        assert!(apply_harmonized(&data, &[bad], 4, 2, 2).is_err());
    }
}
