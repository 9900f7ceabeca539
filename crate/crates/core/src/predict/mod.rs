//! Independent and pairwise heads, context aggregation, the monotone Tanh
//! constraint and final inference.

mod tanh;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use tanh::{
    abscissa, fit_tanh, initial_params, loss_and_grad, TanhFit, TanhParams, FIT_LR,
    FIT_MAX_ITER, FIT_TOL,
};

use crate::autodiff::{argmax, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{dropout, glorot, Linear};

/// `d → d/2 → C` classifier applied to every segment.
#[derive(Clone, Debug)]
pub struct IndependentHead {
    hidden: Linear,
    out: Linear,
}

impl IndependentHead {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, d: usize, classes: usize) -> Self {
        let h = (d / 2).max(1);
        Self {
            hidden: Linear::new(store, rng, "head/independent/hidden", d, h),
            out: Linear::new(store, rng, "head/independent/out", h, classes),
        }
    }

    /// `p̂`: `L × C` probabilities.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, c: Var, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let z = self.hidden.forward(tape, store, c)?;
        let z = tape.gelu(z);
        let z = dropout(tape, z, rate, rng)?;
        let logits = self.out.forward(tape, store, z)?;
        Ok(tape.softmax_rows(logits))
    }

    pub fn layers(&self) -> (Linear, Linear) {
        (self.hidden, self.out)
    }
}

/// `2d → d/2 → 2` same-class discriminator over every ordered segment pair.
///
/// The first layer acting on `c_i ‖ c_j` splits into `c_i·W_top + c_j·W_bottom`,
/// so the two halves are computed once per segment and summed per pair.
#[derive(Clone, Debug)]
pub struct PairwiseHead {
    w1: ParamId,
    b1: ParamId,
    out: Linear,
    d: usize,
}

impl PairwiseHead {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, d: usize) -> Self {
        let h = (d / 2).max(1);
        Self {
            w1: store.register("head/pairwise/hidden/w", glorot(rng, 2 * d, h)),
            b1: store.register("head/pairwise/hidden/b", Tensor::zeros(&[h])),
            out: Linear::new(store, rng, "head/pairwise/out", h, 2),
            d,
        }
    }

    pub fn hidden_params(&self) -> (ParamId, ParamId) {
        (self.w1, self.b1)
    }

    pub fn out_layer(&self) -> Linear {
        self.out
    }

    /// `R̂`: `L² × 2`, row `i·L + j` holding `[different, same]` for `(i, j)`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, c: Var, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let w = tape.param(store, self.w1);
        let top = tape.slice_rows(w, 0, self.d)?;
        let bottom = tape.slice_rows(w, self.d, 2 * self.d)?;
        let left = tape.matmul(c, top)?;
        let right = tape.matmul(c, bottom)?;
        let z = tape.pairwise_sum(left, right)?;
        let b = tape.param(store, self.b1);
        let z = tape.add_row(z, b)?;
        let z = tape.gelu(z);
        let z = dropout(tape, z, rate, rng)?;
        let logits = self.out.forward(tape, store, z)?;
        Ok(tape.softmax_rows(logits))
    }
}

/// Pair targets `Ỹ`: `L² × 2` one-hot rows, `[0, 1]` where `y_i = y_j`.
pub fn same_class_mask(labels: &[usize]) -> Tensor {
    let l = labels.len();
    let mut data = Vec::with_capacity(l * l * 2);
    for &a in labels {
        for &b in labels {
            if a == b {
                data.extend([0.0, 1.0]);
            } else {
                data.extend([1.0, 0.0]);
            }
        }
    }
    Tensor::matrix(l * l, 2, data).expect("mask shape")
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Contract(format!("label {y} outside 0..{classes}")));
        }
        t.set(i, y, 1.0);
    }
    Ok(t)
}

/// Loss terms on one interval.
#[derive(Clone, Copy, Debug)]
pub struct ConsistencyLoss {
    pub independent: Var,
    pub pairwise: Var,
    pub total: Var,
}

/// Cross-entropy of `p̂` against `labels` plus cross-entropy of `R̂` against
/// the induced same-class mask, weighted equally.
pub fn consistency_losses(tape: &mut Tape, p_hat: Var, r_hat: Var, labels: &[usize]) -> Result<ConsistencyLoss> {
    let classes = tape.value(p_hat).cols();
    let independent = tape.cross_entropy(p_hat, &one_hot(labels, classes)?)?;
    let pairwise = tape.cross_entropy(r_hat, &same_class_mask(labels))?;
    let total = tape.add(independent, pairwise)?;
    Ok(ConsistencyLoss {
        independent,
        pairwise,
        total,
    })
}

/// `L × L` same-class channel of `R̂` (given as `L² × 2`).
pub fn same_class_weights(r_hat: &Tensor) -> Result<Tensor> {
    let n = r_hat.rows();
    let l = (n as f64).sqrt().round() as usize;
    if l * l != n || r_hat.cols() != 2 {
        return Err(Error::dim("same_class_weights", format!("{n}×{} is not L²×2", r_hat.cols())));
    }
    Tensor::matrix(l, l, (0..n).map(|r| r_hat.get(r, 1)).collect())
}

/// `p̃ = W·p̂` with `W` the same-class weights rescaled to unit row sums.
/// A row with no weight keeps its own prediction.
pub fn aggregate_weights(weights: &Tensor, p_hat: &Tensor) -> Result<Tensor> {
    let l = p_hat.rows();
    if weights.rows() != l || weights.cols() != l {
        return Err(Error::dim("aggregate_context", format!("weights {:?} for {l} segments", weights.shape())));
    }
    let mut w = weights.clone();
    for i in 0..l {
        let row = w.row_mut(i);
        let s: f64 = row.iter().sum();
        if s > 0.0 && s.is_finite() {
            row.iter_mut().for_each(|v| *v /= s);
        } else {
            row.fill(0.0);
            row[i] = 1.0;
        }
    }
    w.matmul(p_hat)
}

pub fn aggregate_context(r_hat: &Tensor, p_hat: &Tensor) -> Result<Tensor> {
    aggregate_weights(&same_class_weights(r_hat)?, p_hat)
}

/// Fits each class channel of `p̃` and renormalizes rows. Two-class inputs
/// fit the class-1 channel and take its complement for class 0.
pub fn constrain_behavior(p_tilde: &Tensor) -> (Tensor, Vec<TanhParams>) {
    let (l, c) = (p_tilde.rows(), p_tilde.cols());
    let channel = |k: usize| -> Vec<f64> { (0..l).map(|i| p_tilde.get(i, k)).collect() };
    let mut out = Tensor::zeros(&[l, c]);
    if c == 2 {
        let fit = fit_tanh(&channel(1));
        for (i, &v) in fit.curve.iter().enumerate() {
            out.set(i, 0, 1.0 - v);
            out.set(i, 1, v);
        }
        return (out, vec![fit.params.mirrored(), fit.params]);
    }
    let mut params = Vec::with_capacity(c);
    for k in 0..c {
        let fit = fit_tanh(&channel(k));
        for (i, &v) in fit.curve.iter().enumerate() {
            out.set(i, k, v);
        }
        params.push(fit.params);
    }
    for i in 0..l {
        let row = out.row_mut(i);
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        } else {
            row.fill(1.0 / c as f64);
        }
    }
    (out, params)
}

/// `ŷ = argmax (p̂ + p̄)/2`, ties to the lowest class.
pub fn infer_final(p_hat: &Tensor, p_bar: &Tensor) -> Result<(Vec<usize>, Tensor)> {
    if p_hat.shape() != p_bar.shape() {
        return Err(Error::dim("infer_final", format!("{:?} vs {:?}", p_hat.shape(), p_bar.shape())));
    }
    let data = p_hat.data().iter().zip(p_bar.data()).map(|(a, b)| (a + b) / 2.0).collect();
    let scores = Tensor::new(p_hat.shape().to_vec(), data)?;
    let labels = (0..scores.rows()).map(|i| argmax(scores.row(i))).collect();
    Ok((labels, scores))
}

/// All post-network quantities for one interval.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionBundle {
    pub p_hat: Tensor,
    pub r_hat: Tensor,
    pub p_tilde: Tensor,
    pub p_bar: Tensor,
    pub tanh_params: Vec<TanhParams>,
}

impl PredictionBundle {
    pub fn from_heads(p_hat: Tensor, r_hat: Tensor) -> Result<Self> {
        let p_tilde = aggregate_context(&r_hat, &p_hat)?;
        let (p_bar, tanh_params) = constrain_behavior(&p_tilde);
        Ok(Self {
            p_hat,
            r_hat,
            p_tilde,
            p_bar,
            tanh_params,
        })
    }

    pub fn final_labels(&self) -> Vec<usize> {
        infer_final(&self.p_hat, &self.p_bar).expect("matching shapes").0
    }

    pub fn record(&self, interval_id: usize) -> PredictionRecord {
        PredictionRecord {
            interval_id,
            p_hat: self.p_hat.to_rows(),
            p_tilde: self.p_tilde.to_rows(),
            p_bar: self.p_bar.to_rows(),
            y_hat: self.final_labels(),
            tanh: self.tanh_params.clone(),
        }
    }
}

/// One line of a prediction dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub interval_id: usize,
    pub p_hat: Vec<Vec<f64>>,
    pub p_tilde: Vec<Vec<f64>>,
    pub p_bar: Vec<Vec<f64>>,
    pub y_hat: Vec<usize>,
    pub tanh: Vec<TanhParams>,
}
