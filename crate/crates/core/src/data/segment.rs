use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The `L` windows of one interval with majority labels and curriculum levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSequence {
    pub interval_id: usize,
    pub window: usize,
    pub stride: usize,
    /// `L × w × F`
    pub segments: Vec<Vec<Vec<f64>>>,
    pub seg_labels: Vec<usize>,
    pub levels: Vec<usize>,
}

impl SegmentSequence {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

pub fn segment_count(t: usize, window: usize, stride: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Segmentation("stride must be at least 1".into()));
    }
    if window == 0 || window > t {
        return Err(Error::Segmentation(format!(
            "window {window} does not fit a series of length {t}"
        )));
    }
    Ok((t - window) / stride + 1)
}

/// 0-based start offsets of every window.
pub fn window_starts(t: usize, window: usize, stride: usize) -> Result<Vec<usize>> {
    Ok((0..segment_count(t, window, stride)?).map(|i| i * stride).collect())
}

/// Majority label of a window; ties go to the centre point's label when it is
/// among the tied classes, otherwise to the lowest tied class.
pub fn majority_label(labels: &[usize]) -> usize {
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let best = *counts.iter().max().unwrap_or(&0);
    let center = labels[(labels.len() - 1) / 2];
    if counts[center] == best {
        center
    } else {
        counts.iter().position(|&c| c == best).unwrap_or(0)
    }
}

/// Window labels by majority vote.
pub fn segment_labels(labels: &[usize], window: usize, stride: usize) -> Result<Vec<usize>> {
    Ok(window_starts(labels.len(), window, stride)?
        .into_iter()
        .map(|s| majority_label(&labels[s..s + window]))
        .collect())
}

/// Sliding-window segmentation of `values` (`T × F`) with point labels.
///
/// `point_levels` supplies a curriculum level per point; each segment takes
/// the level of its centre point. Pass `None` to tag every segment level 1.
pub fn segment_interval(
    interval_id: usize,
    values: &[Vec<f64>],
    labels: &[usize],
    point_levels: Option<&[usize]>,
    window: usize,
    stride: usize,
) -> Result<SegmentSequence> {
    if values.len() != labels.len() {
        return Err(Error::Segmentation(format!(
            "{} values vs {} labels",
            values.len(),
            labels.len()
        )));
    }
    let starts = window_starts(values.len(), window, stride)?;
    let segments = starts.iter().map(|&s| values[s..s + window].to_vec()).collect();
    let seg_labels = starts
        .iter()
        .map(|&s| majority_label(&labels[s..s + window]))
        .collect();
    let levels = starts
        .iter()
        .map(|&s| point_levels.map_or(1, |lv| lv[s + (window - 1) / 2]))
        .collect();
    Ok(SegmentSequence {
        interval_id,
        window,
        stride,
        segments,
        seg_labels,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_windows() {
        // T=10, w=4, r=2 → 1-based windows [1..4], [3..6], [5..8], [7..10].
        let values: Vec<Vec<f64>> = (1..=10).map(|t| vec![t as f64]).collect();
        let labels = vec![0; 10];
        let s = segment_interval(0, &values, &labels, None, 4, 2).unwrap();
        assert_eq!(s.len(), 4);
        let firsts: Vec<f64> = s.segments.iter().map(|w| w[0][0]).collect();
        let lasts: Vec<f64> = s.segments.iter().map(|w| w[3][0]).collect();
        assert_eq!(firsts, vec![1.0, 3.0, 5.0, 7.0]);
        assert_eq!(lasts, vec![4.0, 6.0, 8.0, 10.0]);
        assert_eq!(s.seg_labels, vec![0; 4]);
    }

    #[test]
    fn tie_goes_to_centre() {
        assert_eq!(majority_label(&[0, 0, 1, 1]), 0);
        assert_eq!(majority_label(&[1, 1, 0, 0]), 1);
        assert_eq!(majority_label(&[0, 1, 1]), 1);
        // Centre class 2 is not among the tied maxima {0, 1}.
        assert_eq!(majority_label(&[1, 1, 2, 0, 0]), 0);
    }

    #[test]
    fn window_too_long() {
        let v = vec![vec![0.0]; 3];
        assert!(matches!(
            segment_interval(0, &v, &[0; 3], None, 4, 1),
            Err(Error::Segmentation(_))
        ));
        assert!(segment_count(5, 2, 0).is_err());
    }

    #[test]
    fn coverage_is_exact() {
        for (t, w, r) in [(10, 4, 2), (17, 5, 3), (9, 9, 1), (30, 7, 4)] {
            let starts = window_starts(t, w, r).unwrap();
            let l = starts.len();
            let mut covered = vec![false; t];
            for s in starts {
                covered[s..s + w].iter_mut().for_each(|c| *c = true);
            }
            let end = (l - 1) * r + w;
            assert!(covered[..end].iter().all(|&c| c));
            assert!(covered[end..].iter().all(|&c| !c));
        }
    }
}
