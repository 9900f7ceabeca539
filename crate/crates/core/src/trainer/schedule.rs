//! Trust, history-weight and curriculum schedules, plus per-interval label state.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::autodiff::{argmax, Tensor};
use crate::error::{Error, Result};
use crate::predict::one_hot;

pub const HISTORY_LEN: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Epochs for the trust weight to reach 1; 0 trusts predictions at once.
    pub e_eta: usize,
    /// Epochs between curriculum level admissions; 0 admits every level.
    pub e_g: usize,
    pub levels: usize,
    pub epochs: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            e_eta: 30,
            e_g: 5,
            levels: 5,
            epochs: 60,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::config("levels", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        Ok(())
    }
}

pub fn eta(e: usize, e_eta: usize) -> f64 {
    if e_eta == 0 {
        1.0
    } else {
        (e as f64 / e_eta as f64).min(1.0)
    }
}

/// Weights for `n` history entries, most recent first, proportional to
/// `exp(−m/2)`.
pub fn omega_weights(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Contract("no prediction history".into()));
    }
    let raw: Vec<f64> = (0..n).map(|m| (-(m as f64) / 2.0).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// History weights available at epoch `e` (0-based).
pub fn omega(e: usize) -> Vec<f64> {
    omega_weights(e.min(HISTORY_LEN - 1) + 1).expect("non-empty")
}

/// Admitted levels at epoch `e`: `1..=min(N, 1 + ⌊e/E_g⌋)`.
pub fn curriculum_active_levels(e: usize, e_g: usize, levels: usize) -> Vec<usize> {
    let top = if e_g == 0 { levels } else { levels.min(1 + e / e_g) };
    (1..=top).collect()
}

/// `(1−η)·y₀ + η·((1−η/2)·p̂ + (η/2)·p̄)`.
pub fn harmonized_target(y0: &Tensor, p_hat: &Tensor, p_bar: &Tensor, eta: f64) -> Result<Tensor> {
    if y0.shape() != p_hat.shape() || y0.shape() != p_bar.shape() {
        return Err(Error::dim(
            "harmonized_target",
            format!("{:?}, {:?}, {:?}", y0.shape(), p_hat.shape(), p_bar.shape()),
        ));
    }
    let data = y0
        .data()
        .iter()
        .zip(p_hat.data())
        .zip(p_bar.data())
        .map(|((&y, &p), &q)| (1.0 - eta) * y + eta * ((1.0 - eta / 2.0) * p + (eta / 2.0) * q))
        .collect();
    Tensor::new(y0.shape().to_vec(), data)
}

fn weighted_average(entries: impl Iterator<Item = (f64, Tensor)>) -> Tensor {
    let mut acc: Option<Tensor> = None;
    for (w, t) in entries {
        let scaled = t.map(|v| w * v);
        acc = Some(match acc {
            None => scaled,
            Some(a) => {
                let data = a.data().iter().zip(scaled.data()).map(|(x, y)| x + y).collect();
                Tensor::new(a.shape().to_vec(), data).expect("same shape")
            }
        });
    }
    acc.expect("non-empty history")
}

/// Labels of one training interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelState {
    pub classes: usize,
    /// Original (possibly disturbed) segment labels.
    pub y0: Vec<usize>,
    pub y_cur: Vec<usize>,
    /// Current soft labels, `L × C`.
    pub p_e: Tensor,
    /// `(p̂, p̄)` of recent epochs, most recent first.
    #[serde(skip)]
    pub history: VecDeque<(Tensor, Tensor)>,
}

impl LabelState {
    pub fn new(y0: Vec<usize>, classes: usize) -> Result<Self> {
        let p_e = one_hot(&y0, classes)?;
        Ok(Self {
            classes,
            y_cur: y0.clone(),
            y0,
            p_e,
            history: VecDeque::new(),
        })
    }

    pub fn y0_onehot(&self) -> Tensor {
        one_hot(&self.y0, self.classes).expect("labels validated at construction")
    }

    pub fn push(&mut self, p_hat: Tensor, p_bar: Tensor) {
        self.history.push_front((p_hat, p_bar));
        self.history.truncate(HISTORY_LEN);
    }

    /// ω-weighted averages `(p̂⁵, p̄⁵)` over the available history.
    pub fn averaged_history(&self) -> Result<(Tensor, Tensor)> {
        let w = omega_weights(self.history.len())?;
        let p_hat = weighted_average(w.iter().zip(&self.history).map(|(&w, (p, _))| (w, p.clone())));
        let p_bar = weighted_average(w.iter().zip(&self.history).map(|(&w, (_, q))| (w, q.clone())));
        Ok((p_hat, p_bar))
    }

    /// Applies the harmonization update; returns how many labels changed.
    pub fn update(&mut self, eta: f64) -> Result<usize> {
        let (p_hat, p_bar) = self.averaged_history()?;
        self.p_e = harmonized_target(&self.y0_onehot(), &p_hat, &p_bar, eta)?;
        let mut changed = 0;
        for i in 0..self.y_cur.len() {
            let y = argmax(self.p_e.row(i));
            changed += usize::from(y != self.y_cur[i]);
            self.y_cur[i] = y;
        }
        Ok(changed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_examples() {
        assert_eq!(eta(0, 30), 0.0);
        assert_eq!(eta(15, 30), 0.5);
        assert_eq!(eta(30, 30), 1.0);
        assert_eq!(eta(45, 30), 1.0);
        assert!((0..50).all(|e| eta(e, 0) == 1.0));
    }

    #[test]
    fn curriculum_examples() {
        assert_eq!(curriculum_active_levels(0, 5, 5), vec![1]);
        assert_eq!(curriculum_active_levels(12, 5, 5), vec![1, 2, 3]);
        assert_eq!(curriculum_active_levels(20, 5, 5), vec![1, 2, 3, 4, 5]);
        assert_eq!(curriculum_active_levels(99, 5, 5).len(), 5);
        assert_eq!(curriculum_active_levels(0, 0, 5).len(), 5);
    }

    #[test]
    fn omega_warm_up() {
        assert_eq!(omega(0), vec![1.0]);
        assert_eq!(omega(1).len(), 2);
        assert!(omega_weights(0).is_err());
    }

    #[test]
    fn history_ring_is_bounded() {
        let mut s = LabelState::new(vec![0, 1], 2).unwrap();
        for _ in 0..9 {
            s.push(Tensor::full(&[2, 2], 0.5), Tensor::full(&[2, 2], 0.5));
            assert!(s.history.len() <= HISTORY_LEN);
        }
        assert_eq!(s.history.len(), HISTORY_LEN);
    }

    #[test]
    fn zero_trust_keeps_original_labels() {
        let mut s = LabelState::new(vec![0, 1, 1], 2).unwrap();
        s.push(Tensor::from_rows(&[vec![0.1, 0.9], vec![0.9, 0.1], vec![0.9, 0.1]]).unwrap(), Tensor::full(&[3, 2], 0.5));
        assert_eq!(s.update(0.0).unwrap(), 0);
        assert_eq!(s.y_cur, s.y0);
        assert_eq!(s.p_e, s.y0_onehot());
        assert_eq!(s.update(1.0).unwrap(), 3);
        assert!(LabelState::new(vec![2], 2).is_err());
    }
}
