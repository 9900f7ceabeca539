//! Class runs, distance-to-boundary levels and level-balanced sampling.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A maximal constant-label stretch, 1-based inclusive bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRun {
    pub start: usize,
    pub end: usize,
    pub class: usize,
}

impl ClassRun {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn find_class_runs(labels: &[usize]) -> Vec<ClassRun> {
    let mut runs: Vec<ClassRun> = Vec::new();
    for (i, &c) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.class == c => r.end = i + 1,
            _ => runs.push(ClassRun {
                start: i + 1,
                end: i + 1,
                class: c,
            }),
        }
    }
    runs
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Level (1 = core … `n_levels` = edge) of every position `1..=k` in a run.
///
/// For `k ≥ 2·n_levels` the run is cut into `2·n_levels` equal chunks.
/// Level 1 is the open centre interval
/// `(⌈(N−1)K/2N⌉, ⌊(N+1)K/2N⌋)` and level `N` is
/// `[1, ⌈K/2N⌉) ∪ (⌊(2N−1)K/2N⌋, K]`, exactly as the endpoint formulas read.
/// Remaining positions take the level of the chunk containing them
/// (chunk `m` ↦ level `N−m+1` on the left half, `m−N` on the right) clamped
/// into the intermediate range `2..=N−1`.
///
/// Shorter runs fall back to quantized relative distance to the nearest edge.
pub fn assign_levels(k: usize, n_levels: usize) -> Vec<usize> {
    let n = n_levels.max(1);
    if k == 0 {
        return Vec::new();
    }
    if k < 2 * n {
        return (1..=k)
            .map(|p| {
                let dist = (p as f64 - 0.5).min(k as f64 + 0.5 - p as f64);
                let raw = (n as f64 * (1.0 - 2.0 * dist / k as f64)).ceil() as usize;
                raw.clamp(1, n)
            })
            .collect();
    }
    let two_n = 2 * n;
    let core_lo = ceil_div((n - 1) * k, two_n);
    let core_hi = (n + 1) * k / two_n;
    let edge_lo = ceil_div(k, two_n);
    let edge_hi = (two_n - 1) * k / two_n;
    let (mid_lo, mid_hi) = if n > 2 { (2, n - 1) } else { (1, n) };
    (1..=k)
        .map(|p| {
            if p > core_lo && p < core_hi {
                1
            } else if p < edge_lo || p > edge_hi {
                n
            } else {
                let m = ceil_div(p * two_n, k).clamp(1, two_n);
                let lvl = if m <= n { n - m + 1 } else { m - n };
                lvl.clamp(mid_lo, mid_hi)
            }
        })
        .collect()
}

/// Per-point levels for a whole label sequence, run by run.
pub fn point_levels(labels: &[usize], n_levels: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(labels.len());
    for run in find_class_runs(labels) {
        out.extend(assign_levels(run.len(), n_levels));
    }
    out
}

/// One fixed-length window cut from a source series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledInterval {
    /// Index into the slice of sources passed to the sampler.
    pub source: usize,
    /// 0-based first point.
    pub start: usize,
    pub len: usize,
    /// Level of the centre point.
    pub level: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LeveledPool {
    pub items: Vec<SampledInterval>,
    /// `(level, sampled count)` for every level that got fewer than requested.
    pub undersampled: Vec<(usize, usize)>,
}

/// Draws `per_level` distinct windows of length `len` for each level, where a
/// window's level is that of its centre point. `levels[s]` holds the
/// per-point levels of source `s`.
pub fn sample_intervals_per_level(
    levels: &[Vec<usize>],
    n_levels: usize,
    per_level: usize,
    len: usize,
    seed: u64,
) -> Result<LeveledPool> {
    if per_level == 0 {
        return Err(Error::config("per_level", "must be at least 1"));
    }
    if len == 0 {
        return Err(Error::config("interval_len", "must be positive"));
    }
    let half = (len - 1) / 2;
    let mut eligible: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_levels];
    for (s, lv) in levels.iter().enumerate() {
        if lv.len() < len {
            continue;
        }
        for start in 0..=lv.len() - len {
            let l = lv[start + half];
            if (1..=n_levels).contains(&l) {
                eligible[l - 1].push((s, start));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = LeveledPool::default();
    for (i, cands) in eligible.iter().enumerate() {
        let take = per_level.min(cands.len());
        if take < per_level {
            pool.undersampled.push((i + 1, take));
        }
        let mut picked: Vec<usize> = sample(&mut rng, cands.len(), take).into_vec();
        picked.sort_unstable();
        pool.items.extend(picked.into_iter().map(|j| SampledInterval {
            source: cands[j].0,
            start: cands[j].1,
            len,
            level: i + 1,
        }));
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs() {
        let r = find_class_runs(&[0, 0, 1]);
        assert_eq!(
            r,
            vec![
                ClassRun { start: 1, end: 2, class: 0 },
                ClassRun { start: 3, end: 3, class: 1 }
            ]
        );
        assert_eq!(find_class_runs(&[2; 7]).len(), 1);
        let r = find_class_runs(&[0, 1, 0, 1]);
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|x| x.len() == 1));
    }

    #[test]
    fn literal_endpoints_at_k10() {
        let lv = assign_levels(10, 5);
        let members = |l| (1..=10).filter(|&p| lv[p - 1] == l).collect::<Vec<_>>();
        assert_eq!(members(1), vec![5]);
        assert_eq!(members(5), vec![10]);
    }

    #[test]
    fn short_runs_never_fail() {
        for k in 1..10 {
            let lv = assign_levels(k, 5);
            assert_eq!(lv.len(), k);
            assert!(lv.iter().all(|&l| (1..=5).contains(&l)));
            // Edges are never more central than the middle.
            assert!(lv[0] >= lv[(k - 1) / 2]);
        }
        assert_eq!(assign_levels(1, 5), vec![1]);
    }

    #[test]
    fn partition_is_monotone_in_edge_distance() {
        for k in 10..=200 {
            let lv = assign_levels(k, 5);
            assert!(lv.iter().all(|&l| (1..=5).contains(&l)));
            // Walking from either edge towards the centre, levels never rise.
            let mid = k / 2;
            assert!(lv[..mid].windows(2).all(|w| w[0] >= w[1]), "K={k}: {lv:?}");
            assert!(lv[mid..].windows(2).all(|w| w[0] <= w[1]), "K={k}: {lv:?}");
            // Levels untouched by the open core interval stay balanced.
            let sizes: Vec<usize> = (3..=5).map(|l| lv.iter().filter(|&&x| x == l).count()).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(hi - lo <= 2, "K={k}: {sizes:?}");
        }
    }

    #[test]
    fn sampling_tags_and_determinism() {
        let labels: Vec<usize> = [vec![0; 60], vec![1; 60], vec![0; 60]].concat();
        let lv = point_levels(&labels, 5);
        let pool = sample_intervals_per_level(&[lv.clone()], 5, 1, 21, 3).unwrap();
        assert!(pool.items.len() <= 5);
        let tags: Vec<usize> = pool.items.iter().map(|i| i.level).collect();
        assert_eq!(tags, vec![1, 2, 3, 4, 5]);
        for it in &pool.items {
            assert_eq!(lv[it.start + 10], it.level);
        }
        assert_eq!(pool, sample_intervals_per_level(&[lv], 5, 1, 21, 3).unwrap());
    }

    #[test]
    fn undersampling_is_recorded() {
        let lv = point_levels(&[0; 20], 5);
        let pool = sample_intervals_per_level(&[lv], 5, 50, 5, 0).unwrap();
        assert!(!pool.undersampled.is_empty());
        assert!(sample_intervals_per_level(&[], 5, 0, 5, 0).is_err());
    }
}
