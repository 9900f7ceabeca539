//! Least-squares fit of `a·tanh(k(x+b)) + h` to one prediction channel.

use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_update, AdamConfig};

pub const FIT_LR: f64 = 0.1;
pub const FIT_MAX_ITER: usize = 100;
pub const FIT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TanhParams {
    pub a: f64,
    pub k: f64,
    pub b: f64,
    pub h: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl TanhParams {
    /// Curve value on the `[−1, 1]` scale at abscissa `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.a * (self.k * (x + self.b)).tanh() + self.h
    }

    /// Parameters of the negated curve, used for the complementary channel.
    pub fn mirrored(&self) -> Self {
        Self {
            k: -self.k,
            h: -self.h,
            ..*self
        }
    }

    /// Fitted curve mapped back to `[0, 1]`.
    pub fn curve(&self, len: usize) -> Vec<f64> {
        abscissa(len)
            .map(|x| ((self.eval(x) + 1.0) / 2.0).clamp(0.0, 1.0))
            .collect()
    }
}

/// `x_i = i − ⌊L/2⌋` for `i = 1..=L`.
pub fn abscissa(len: usize) -> impl Iterator<Item = f64> {
    let mid = (len / 2) as f64;
    (1..=len).map(move |i| i as f64 - mid)
}

/// Initial parameters from the steepest adjacent jump of `s` (on `[−1, 1]`).
pub fn initial_params(s: &[f64]) -> TanhParams {
    let l = s.len();
    let mut best = 0;
    let mut best_abs = f64::NEG_INFINITY;
    for j in 0..l - 1 {
        let d = (s[j + 1] - s[j]).abs();
        if d > best_abs {
            best_abs = d;
            best = j;
        }
    }
    let d = s[best + 1] - s[best];
    let b_idx = best + 1;
    TanhParams {
        a: 1.0,
        k: if d == 0.0 { 0.0 } else { best_abs * d.signum() },
        b: -(b_idx as f64 - (l / 2) as f64 + 0.5),
        h: 0.0,
        converged: false,
        iterations: 0,
    }
}

/// Mean squared error and its analytic gradient with respect to `[a, k, b, h]`.
pub fn loss_and_grad(p: &TanhParams, xs: &[f64], s: &[f64]) -> (f64, [f64; 4]) {
    let n = s.len() as f64;
    let mut loss = 0.0;
    let mut g = [0.0; 4];
    for (&x, &y) in xs.iter().zip(s) {
        let t = (p.k * (x + p.b)).tanh();
        let r = p.a * t + p.h - y;
        loss += r * r;
        let dt = 1.0 - t * t;
        let c = 2.0 * r / n;
        g[0] += c * t;
        g[1] += c * p.a * dt * (x + p.b);
        g[2] += c * p.a * dt * p.k;
        g[3] += c;
    }
    (loss / n, g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TanhFit {
    pub params: TanhParams,
    /// Fitted values on `[0, 1]`.
    pub curve: Vec<f64>,
}

/// Fits one channel of values in `[0, 1]`. Sequences shorter than two points
/// pass through unchanged and are flagged unconverged; constant sequences
/// return the flat curve without iterating.
pub fn fit_tanh(seq: &[f64]) -> TanhFit {
    let l = seq.len();
    if l < 2 {
        return TanhFit {
            params: TanhParams {
                a: 0.0,
                k: 0.0,
                b: 0.0,
                h: seq.first().map_or(0.0, |v| 2.0 * v - 1.0),
                converged: false,
                iterations: 0,
            },
            curve: seq.to_vec(),
        };
    }
    let s: Vec<f64> = seq.iter().map(|v| 2.0 * v - 1.0).collect();
    let xs: Vec<f64> = abscissa(l).collect();
    let mut p = initial_params(&s);
    if p.k == 0.0 {
        // No adjacent jump at all: the flat curve is exact.
        p.a = 0.0;
        p.h = s[0];
        p.converged = true;
        return TanhFit {
            curve: p.curve(l),
            params: p,
        };
    }

    let cfg = AdamConfig::new(FIT_LR, 0.0);
    let mut m = [0.0; 4];
    let mut v = [0.0; 4];
    let mut prev: Option<f64> = None;
    for it in 0..FIT_MAX_ITER {
        let (loss, g) = loss_and_grad(&p, &xs, &s);
        p.iterations = it + 1;
        if prev.is_some_and(|q| (q - loss).abs() < FIT_TOL) {
            p.converged = true;
            break;
        }
        prev = Some(loss);
        let mut theta = [p.a, p.k, p.b, p.h];
        adam_update(&cfg, it as u64 + 1, &mut theta, &g, &mut m, &mut v);
        [p.a, p.k, p.b, p.h] = theta;
    }
    TanhFit {
        curve: p.curve(l),
        params: p,
    }
}
