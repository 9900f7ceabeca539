//! Synthetic multi-class varying-duration series.
//!
//! Every class owns a sinusoid template per feature with a class-specific
//! frequency. An interval is a chain of class runs; neighbouring runs are
//! crossfaded linearly around their shared boundary and an AR(1) noise
//! process is added on top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::TimeInterval;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub classes: usize,
    pub features: usize,
    pub intervals: usize,
    pub runs_per_interval: usize,
    pub duration_min: usize,
    pub duration_max: usize,
    /// Width in points of the linear blend centred on each boundary.
    pub crossfade: usize,
    /// Standard deviation of the AR(1) innovations.
    pub noise: f64,
    pub ar_coef: f64,
    /// Intervals are assigned to groups round-robin.
    pub groups: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            classes: 2,
            features: 2,
            intervals: 16,
            runs_per_interval: 8,
            duration_min: 150,
            duration_max: 300,
            crossfade: 16,
            noise: 0.3,
            ar_coef: 0.7,
            groups: 4,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("classes", "need at least 2 classes"));
        }
        if self.features == 0 {
            return Err(Error::config("features", "must be positive"));
        }
        if self.duration_min == 0 || self.duration_min > self.duration_max {
            return Err(Error::config(
                "duration_min",
                format!("empty duration range [{}, {}]", self.duration_min, self.duration_max),
            ));
        }
        if self.runs_per_interval == 0 {
            return Err(Error::config("runs_per_interval", "must be positive"));
        }
        if self.groups == 0 {
            return Err(Error::config("groups", "must be positive"));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::config("noise", "must be a non-negative number"));
        }
        if !(self.ar_coef.abs() < 1.0) {
            return Err(Error::config("ar_coef", "must lie in (-1, 1)"));
        }
        Ok(())
    }
}

/// Noise-free emission of `class` on `feature` at time `t`.
pub fn class_template(class: usize, feature: usize, t: usize) -> f64 {
    let freq = 0.03 + 0.05 * class as f64;
    let amp = 1.0 + 0.3 * (class % 3) as f64;
    let phase = feature as f64 * std::f64::consts::FRAC_PI_3;
    amp * (2.0 * std::f64::consts::PI * freq * t as f64 + phase).sin()
}

pub fn generate_mvd(config: &GeneratorConfig, seed: u64) -> Result<Vec<TimeInterval>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(config.intervals);
    for id in 0..config.intervals {
        let mut labels = Vec::new();
        let mut class = rng.random_range(0..config.classes);
        for run in 0..config.runs_per_interval {
            if run > 0 {
                class = next_class(&mut rng, class, config.classes);
            }
            let len = rng.random_range(config.duration_min..=config.duration_max);
            labels.extend(std::iter::repeat_n(class, len));
        }
        let t_len = labels.len();
        let weights = blend_weights(&labels, config.classes, config.crossfade);
        let mut values = vec![vec![0.0; config.features]; t_len];
        for f in 0..config.features {
            let mut ar = 0.0;
            for (t, row) in values.iter_mut().enumerate() {
                let clean: f64 = weights[t]
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w != 0.0)
                    .map(|(c, &w)| w * class_template(c, f, t))
                    .sum();
                ar = config.ar_coef * ar + config.noise * normal.sample(&mut rng);
                row[f] = clean + ar;
            }
        }
        out.push(TimeInterval {
            interval_id: id,
            group_id: id % config.groups,
            values,
            clean_labels: labels.clone(),
            labels,
        });
    }
    Ok(out)
}

fn next_class(rng: &mut ChaCha8Rng, current: usize, classes: usize) -> usize {
    if classes == 2 {
        return 1 - current;
    }
    let k = rng.random_range(0..classes - 1);
    if k >= current {
        k + 1
    } else {
        k
    }
}

/// Per-point mixing weights over classes; one-hot away from boundaries.
fn blend_weights(labels: &[usize], classes: usize, crossfade: usize) -> Vec<Vec<f64>> {
    let mut w: Vec<Vec<f64>> = labels
        .iter()
        .map(|&c| {
            let mut v = vec![0.0; classes];
            v[c] = 1.0;
            v
        })
        .collect();
    if crossfade == 0 {
        return w;
    }
    let half = crossfade / 2;
    for b in 1..labels.len() {
        if labels[b] == labels[b - 1] {
            continue;
        }
        let (from, to) = (labels[b - 1], labels[b]);
        let start = b.saturating_sub(half);
        let end = (start + crossfade).min(labels.len());
        for (k, t) in (start..end).enumerate() {
            // Only blend points that belong to one of the two adjacent runs.
            if labels[t] != from && labels[t] != to {
                continue;
            }
            let lambda = (k as f64 + 0.5) / crossfade as f64;
            let mut v = vec![0.0; classes];
            v[from] = 1.0 - lambda;
            v[to] += lambda;
            w[t] = v;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::find_class_runs;

    #[test]
    fn pure_signals_without_noise_or_fade() {
        let cfg = GeneratorConfig {
            intervals: 3,
            crossfade: 0,
            noise: 0.0,
            ..GeneratorConfig::default()
        };
        for iv in generate_mvd(&cfg, 1).unwrap() {
            for (t, row) in iv.values.iter().enumerate() {
                for (f, &v) in row.iter().enumerate() {
                    assert_eq!(v, class_template(iv.labels[t], f, t));
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        let cfg = GeneratorConfig::default();
        assert_eq!(generate_mvd(&cfg, 42).unwrap(), generate_mvd(&cfg, 42).unwrap());
        assert_ne!(generate_mvd(&cfg, 42).unwrap(), generate_mvd(&cfg, 43).unwrap());
    }

    #[test]
    fn run_lengths_and_alternation() {
        let cfg = GeneratorConfig {
            intervals: 1000,
            runs_per_interval: 4,
            duration_min: 50,
            duration_max: 100,
            features: 1,
            ..GeneratorConfig::default()
        };
        for iv in generate_mvd(&cfg, 5).unwrap() {
            let runs = find_class_runs(&iv.labels);
            assert_eq!(runs.len(), 4);
            for pair in runs.windows(2) {
                assert_ne!(pair[0].class, pair[1].class);
            }
            assert!(runs.iter().all(|r| (50..=100).contains(&r.len())));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = GeneratorConfig::default();
        cfg.duration_min = 10;
        cfg.duration_max = 5;
        assert!(matches!(generate_mvd(&cfg, 0), Err(Error::Config { .. })));
        cfg = GeneratorConfig { classes: 1, ..GeneratorConfig::default() };
        assert!(generate_mvd(&cfg, 0).is_err());
    }

    #[test]
    fn crossfade_blends_at_boundary() {
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let w = blend_weights(&labels, 2, 4);
        assert_eq!(w[0], vec![1.0, 0.0]);
        assert_eq!(w[2], vec![0.875, 0.125]);
        assert_eq!(w[5], vec![0.125, 0.875]);
        assert_eq!(w[7], vec![0.0, 1.0]);
    }
}
