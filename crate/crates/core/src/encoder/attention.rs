//! Two-branch attention: scaled dot-product self-attention next to a
//! Gaussian-prior neighbour aggregation with a learned per-position scale,
//! combined per position by an additive gate.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EncoderConfig;
use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{dropout, glorot, LayerNorm, Linear};

/// How the two branches are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Additive-attention gate over the two branch outputs.
    #[default]
    Learned,
    /// Gaussian branch only.
    Gaussian,
    /// Self-attention branch only.
    SelfAttention,
}

impl std::str::FromStr for GateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(Self::Learned),
            "gaussian" => Ok(Self::Gaussian),
            "self_attention" => Ok(Self::SelfAttention),
            other => Err(Error::config("gate", format!("unknown gate mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
struct Head {
    query: Linear,
    key: Linear,
    value_self: Linear,
    value_gauss: Linear,
    sigma: Linear,
}

/// `score_b = vᵀ·tanh(W_f·z_b + u_f)` for each branch, softmaxed over the two.
#[derive(Clone, Debug)]
struct FusionGate {
    proj: Linear,
    score: ParamId,
}

#[derive(Clone, Debug)]
pub struct ConAttentionLayer {
    index: usize,
    heads: Vec<Head>,
    gate: FusionGate,
    out: Linear,
    norm_attn: LayerNorm,
    norm_ffn: LayerNorm,
    ffn_in: Linear,
    ffn_out: Linear,
    d_head: usize,
    sigma_floor: f64,
    dropout: f64,
    gate_mode: GateMode,
}

/// Handles to the intermediate quantities of one layer pass.
#[derive(Clone, Debug, Default)]
pub struct LayerTrace {
    /// Per head, `L × L` self-attention weights.
    pub attention: Vec<Var>,
    /// Per head, `L × L` Gaussian weights.
    pub gaussian: Vec<Var>,
    /// Per head, `L × 1` scales.
    pub sigma: Vec<Var>,
    /// Per head, `L × 2` branch weights `[self, gaussian]` (learned gate only).
    pub gate: Vec<Var>,
    /// Per head, `L × d_head` value rows of the Gaussian branch.
    pub values_gauss: Vec<Var>,
    /// Fused head outputs concatenated, before the output projection.
    pub mixed: Option<Var>,
}

impl ConAttentionLayer {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, cfg: &EncoderConfig, index: usize) -> Self {
        let d = cfg.d_model;
        let dh = d / cfg.heads;
        let base = format!("encoder/layer{index}");
        let heads = (0..cfg.heads)
            .map(|h| {
                let p = format!("{base}/head{h}");
                let sigma = Linear::new(store, rng, &format!("{p}/w_sigma"), d, 1);
                // Start with scales around 1.4 positions.
                store.get_mut(sigma.b).data_mut()[0] = 1.0;
                Head {
                    query: Linear::new(store, rng, &format!("{p}/w_q"), d, dh),
                    key: Linear::new(store, rng, &format!("{p}/w_k"), d, dh),
                    value_self: Linear::new(store, rng, &format!("{p}/w_vs"), d, dh),
                    value_gauss: Linear::new(store, rng, &format!("{p}/w_vg"), d, dh),
                    sigma,
                }
            })
            .collect();
        let gate = FusionGate {
            proj: Linear::new(store, rng, &format!("{base}/gate/w_f"), dh, dh),
            score: store.register(format!("{base}/gate/v"), glorot(rng, dh, 1)),
        };
        Self {
            index,
            heads,
            gate,
            out: Linear::new(store, rng, &format!("{base}/w_o"), d, d),
            norm_attn: LayerNorm::new(store, &format!("{base}/norm_attn"), d),
            norm_ffn: LayerNorm::new(store, &format!("{base}/norm_ffn"), d),
            ffn_in: Linear::new(store, rng, &format!("{base}/ffn/in"), d, cfg.d_ff),
            ffn_out: Linear::new(store, rng, &format!("{base}/ffn/out"), cfg.d_ff, d),
            d_head: dh,
            sigma_floor: cfg.sigma_floor,
            dropout: cfg.dropout,
            gate_mode: cfg.gate,
        }
    }

    pub fn set_gate_mode(&mut self, mode: GateMode) {
        self.gate_mode = mode;
    }

    /// Parameter holding the σ-head bias of `head`.
    pub fn sigma_bias(&self, head: usize) -> ParamId {
        self.heads[head].sigma.b
    }

    /// Parameter holding the σ-head weights of `head`.
    pub fn sigma_weight(&self, head: usize) -> ParamId {
        self.heads[head].sigma.w
    }

    fn fuse(&self, tape: &mut Tape, store: &ParamStore, zs: Var, zg: Var, trace: &mut LayerTrace) -> Result<Var> {
        match self.gate_mode {
            GateMode::Gaussian => return Ok(zg),
            GateMode::SelfAttention => return Ok(zs),
            GateMode::Learned => {}
        }
        let v = tape.param(store, self.gate.score);
        let score = |tape: &mut Tape, z: Var| -> Result<Var> {
            let h = self.gate.proj.forward(tape, store, z)?;
            let h = tape.tanh(h);
            tape.matmul(h, v)
        };
        let ss = score(tape, zs)?;
        let sg = score(tape, zg)?;
        let both = tape.concat_cols(ss, sg)?;
        let alpha = tape.softmax_rows(both);
        trace.gate.push(alpha);
        let a_s = tape.slice_cols(alpha, 0, 1)?;
        let a_g = tape.slice_cols(alpha, 1, 2)?;
        let ws = tape.mul_col(zs, a_s)?;
        let wg = tape.mul_col(zg, a_g)?;
        tape.add(ws, wg)
    }

    /// `c_prev` is `L × d`. `rng` enables dropout.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        c_prev: Var,
        mut rng: Option<&mut ChaCha8Rng>,
        trace: &mut LayerTrace,
    ) -> Result<Var> {
        let x = self.norm_attn.forward(tape, store, c_prev)?;
        let scale = 1.0 / (self.d_head as f64).sqrt();
        let mut mixed: Option<Var> = None;
        for head in &self.heads {
            let q = head.query.forward(tape, store, x)?;
            let k = head.key.forward(tape, store, x)?;
            let vs = head.value_self.forward(tape, store, x)?;
            let vg = head.value_gauss.forward(tape, store, x)?;

            let kt = tape.transpose(k)?;
            let logits = tape.matmul(q, kt)?;
            let logits = tape.scale(logits, scale);
            let s = tape.softmax_rows(logits);

            let raw = head.sigma.forward(tape, store, x)?;
            let sigma = tape.softplus(raw);
            let sigma = tape.add_scalar(sigma, self.sigma_floor);
            let g = tape.gaussian_weights(sigma)?;

            let zs = tape.matmul(s, vs)?;
            let zg = tape.matmul(g, vg)?;
            let z = self.fuse(tape, store, zs, zg, trace)?;

            trace.attention.push(s);
            trace.gaussian.push(g);
            trace.sigma.push(sigma);
            trace.values_gauss.push(vg);
            mixed = Some(match mixed {
                None => z,
                Some(m) => tape.concat_cols(m, z)?,
            });
        }
        let mixed = mixed.expect("at least one head");
        trace.mixed = Some(mixed);

        let attn = self.out.forward(tape, store, mixed)?;
        let attn = dropout(tape, attn, self.dropout, rng.as_deref_mut())?;
        let c1 = tape.add(c_prev, attn)?;

        let y = self.norm_ffn.forward(tape, store, c1)?;
        let h = self.ffn_in.forward(tape, store, y)?;
        let h = tape.gelu(h);
        let h = self.ffn_out.forward(tape, store, h)?;
        let h = dropout(tape, h, self.dropout, rng)?;
        let out = tape.add(c1, h)?;
        if !tape.value(out).is_finite() {
            return Err(Error::Numeric {
                layer: format!("encoder/layer{}", self.index),
            });
        }
        Ok(out)
    }
}
