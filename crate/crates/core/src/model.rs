//! Encoder plus both prediction heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Var};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::predict::{IndependentHead, PairwiseHead, PredictionBundle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            classes: 2,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ModelOutput {
    pub c: Var,
    pub p_hat: Var,
    pub r_hat: Var,
}

#[derive(Clone, Debug)]
pub struct Con4m {
    pub encoder: Encoder,
    pub independent: IndependentHead,
    pub pairwise: PairwiseHead,
    classes: usize,
}

impl Con4m {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        if cfg.classes < 2 {
            return Err(Error::config("classes", "need at least two classes"));
        }
        let encoder = Encoder::new(store, cfg.encoder.clone(), seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_4ead);
        let d = cfg.encoder.d_model;
        Ok(Self {
            independent: IndependentHead::new(store, &mut rng, d, cfg.classes),
            pairwise: PairwiseHead::new(store, &mut rng, d),
            encoder,
            classes: cfg.classes,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Differentiable pass. Passing `rng` enables dropout.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        segments: &[Vec<Vec<f64>>],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ModelOutput> {
        let c = self.encoder.forward(tape, store, segments, rng.as_deref_mut())?;
        let rate = self.encoder.config().dropout;
        let p_hat = self.independent.forward(tape, store, c, rate, rng.as_deref_mut())?;
        let r_hat = self.pairwise.forward(tape, store, c, rate, rng)?;
        Ok(ModelOutput { c, p_hat, r_hat })
    }

    /// Evaluation-mode predictions with aggregation and the Tanh constraint.
    pub fn predict(&self, store: &ParamStore, segments: &[Vec<Vec<f64>>]) -> Result<PredictionBundle> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, store, segments, None)?;
        PredictionBundle::from_heads(tape.value(out.p_hat).clone(), tape.value(out.r_hat).clone())
    }
}
