//! Small building blocks shared by the encoder and the prediction heads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Glorot-uniform initialised `in × out` matrix.
pub fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Tensor::matrix(rows, cols, data).expect("glorot shape")
}

pub fn normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("valid std");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect()).expect("shape")
}

/// Affine map `x·W + b`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let w = store.register(format!("{name}/w"), glorot(rng, fan_in, fan_out));
        let b = store.register(format!("{name}/b"), Tensor::zeros(&[fan_out]));
        Self { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let h = tape.matmul(x, w)?;
        tape.add_row(h, b)
    }
}

/// Row-wise layer normalization with learned gain and shift.
#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.register(format!("{name}/gain"), Tensor::full(&[dim], 1.0)),
            shift: store.register(format!("{name}/shift"), Tensor::zeros(&[dim])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let n = tape.layer_norm(x, Self::EPS);
        let g = tape.param(store, self.gain);
        let s = tape.param(store, self.shift);
        let n = tape.mul_row(n, g)?;
        tape.add_row(n, s)
    }
}

/// Inverted dropout. `rng = None` (evaluation) or `rate = 0` is the identity.
pub fn dropout(tape: &mut Tape, x: Var, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if rate <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 - rate;
    let shape = tape.value(x).shape().to_vec();
    let n = tape.value(x).len();
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let m = tape.constant(Tensor::new(shape, mask)?);
    tape.mul(x, m)
}
