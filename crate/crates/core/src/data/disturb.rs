use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::curriculum::find_class_runs;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbMode {
    Boundary,
    Symmetric,
}

impl std::str::FromStr for DisturbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boundary" => Ok(Self::Boundary),
            "symmetric" => Ok(Self::Symmetric),
            other => Err(Error::config("mode", format!("unknown disturbance mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceConfig {
    pub mode: DisturbMode,
    pub ratio: f64,
    pub seed: u64,
}

impl DisturbanceConfig {
    pub fn validate(&self) -> Result<()> {
        check_ratio(self.ratio)
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::config("ratio", format!("{ratio} is outside [0, 1]")));
    }
    Ok(())
}

/// Moves every interior class boundary by up to `ratio` of the length of the
/// run it moves into.
///
/// Boundaries are handled left to right. For each, a fair coin picks the
/// direction and the shift is uniform on `1..=⌊ratio·K⌋`, `K` being the
/// original length of the run being entered. Shifts are clamped so each run
/// keeps at least one point, so the run count and run classes never change.
pub fn disturb_boundaries(labels: &[usize], ratio: f64, seed: u64) -> Result<Vec<usize>> {
    check_ratio(ratio)?;
    let runs = find_class_runs(labels);
    if runs.len() < 2 || ratio == 0.0 {
        return Ok(labels.to_vec());
    }
    let t = labels.len();
    // 0-based index of the first point of run k+1.
    let mut pos: Vec<usize> = runs[1..].iter().map(|r| r.start - 1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..pos.len() {
        let forward = rng.random_bool(0.5);
        let entered = if forward { runs[k + 1] } else { runs[k] };
        let max_shift = (ratio * entered.len() as f64 + 1e-9).floor() as usize;
        if max_shift == 0 {
            continue;
        }
        let shift = rng.random_range(1..=max_shift);
        pos[k] = if forward {
            let limit = pos.get(k + 1).copied().unwrap_or(t) - 1;
            (pos[k] + shift).min(limit)
        } else {
            let floor = if k == 0 { 1 } else { pos[k - 1] + 1 };
            pos[k].saturating_sub(shift).max(floor)
        };
    }
    let mut out = Vec::with_capacity(t);
    let mut prev = 0;
    for (k, run) in runs.iter().enumerate() {
        let end = pos.get(k).copied().unwrap_or(t);
        out.extend(std::iter::repeat_n(run.class, end - prev));
        prev = end;
    }
    Ok(out)
}

/// Reassigns `⌊ratio·L⌋` distinct segments to a uniformly drawn different class.
pub fn disturb_symmetric(
    seg_labels: &[usize],
    classes: usize,
    ratio: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    check_ratio(ratio)?;
    if classes < 2 {
        return Err(Error::config("classes", "symmetric disturbance needs 2+ classes"));
    }
    let mut out = seg_labels.to_vec();
    let count = (ratio * seg_labels.len() as f64 + 1e-9).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in sample(&mut rng, seg_labels.len(), count) {
        let k = rng.random_range(0..classes - 1);
        out[i] = if k >= out[i] { k + 1 } else { k };
    }
    Ok(out)
}
