//! Segment encoder: a small convolution stack per segment, learnable absolute
//! positions, then stacked two-branch attention layers across segments.

mod attention;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use attention::{ConAttentionLayer, GateMode, LayerTrace};

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{normal, LayerNorm, Linear};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub features: usize,
    pub window: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub heads: usize,
    pub layers: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub conv_stride: usize,
    pub dropout: f64,
    pub sigma_floor: f64,
    pub max_len: usize,
    pub gate: GateMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            features: 2,
            window: 16,
            d_model: 32,
            d_ff: 64,
            heads: 4,
            layers: 2,
            conv_channels: vec![16, 16, 16],
            kernel: 3,
            conv_stride: 1,
            dropout: 0.1,
            sigma_floor: 0.1,
            max_len: 64,
            gate: GateMode::Learned,
        }
    }
}

impl EncoderConfig {
    /// Time steps left after each convolution stage.
    pub fn conv_lengths(&self) -> Vec<usize> {
        let mut t = self.window;
        let mut out = Vec::with_capacity(self.conv_channels.len());
        for _ in &self.conv_channels {
            if t < self.kernel || self.conv_stride == 0 {
                break;
            }
            t = (t - self.kernel) / self.conv_stride + 1;
            out.push(t);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("features", self.features),
            ("window", self.window),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("heads", self.heads),
            ("layers", self.layers),
            ("kernel", self.kernel),
            ("conv_stride", self.conv_stride),
            ("max_len", self.max_len),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return Err(Error::config("conv_channels", "need at least one positive channel count"));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::config(
                "heads",
                format!("d_model {} not divisible by {} heads", self.d_model, self.heads),
            ));
        }
        if self.conv_lengths().len() != self.conv_channels.len() {
            return Err(Error::config(
                "window",
                format!("window {} shorter than the convolution receptive field", self.window),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must lie in [0, 1)"));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::config("sigma_floor", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    cfg: EncoderConfig,
    conv: Vec<Linear>,
    proj: Linear,
    positions: ParamId,
    layers: Vec<ConAttentionLayer>,
    final_norm: LayerNorm,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, cfg: EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c_in = cfg.features;
        let mut conv = Vec::new();
        for (i, &c_out) in cfg.conv_channels.iter().enumerate() {
            conv.push(Linear::new(store, &mut rng, &format!("encoder/conv{i}"), cfg.kernel * c_in, c_out));
            c_in = c_out;
        }
        let proj = Linear::new(store, &mut rng, "encoder/conv_proj", c_in, cfg.d_model);
        let positions = store.register(
            "encoder/positions",
            normal(&mut rng, &[cfg.max_len, cfg.d_model], 0.02),
        );
        let layers = (0..cfg.layers)
            .map(|l| ConAttentionLayer::new(store, &mut rng, &cfg, l))
            .collect();
        let final_norm = LayerNorm::new(store, "encoder/final_norm", cfg.d_model);
        Ok(Self {
            cfg,
            conv,
            proj,
            positions,
            layers,
            final_norm,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn layers(&self) -> &[ConAttentionLayer] {
        &self.layers
    }

    pub fn set_gate_mode(&mut self, mode: GateMode) {
        self.cfg.gate = mode;
        for l in &mut self.layers {
            l.set_gate_mode(mode);
        }
    }

    /// Stacks `L` segments of `w × F` into one `(L·w) × F` tensor.
    pub fn stack_segments(&self, segments: &[Vec<Vec<f64>>]) -> Result<Tensor> {
        let (w, f) = (self.cfg.window, self.cfg.features);
        let mut data = Vec::with_capacity(segments.len() * w * f);
        for (i, seg) in segments.iter().enumerate() {
            if seg.len() != w || seg.iter().any(|r| r.len() != f) {
                return Err(Error::dim(
                    "encoder",
                    format!("segment {i} is not {w}×{f}"),
                ));
            }
            for r in seg {
                data.extend_from_slice(r);
            }
        }
        Tensor::matrix(segments.len() * w, f, data)
    }

    /// Per-segment embeddings `L × d` from stacked segments `(L·w) × F`.
    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, stacked: Var) -> Result<Var> {
        let rows = tape.value(stacked).rows();
        if rows % self.cfg.window != 0 {
            return Err(Error::dim("encoder", format!("{rows} rows not a multiple of the window")));
        }
        let blocks = rows / self.cfg.window;
        let mut h = stacked;
        for conv in &self.conv {
            let u = tape.unfold(h, blocks, self.cfg.kernel, self.cfg.conv_stride)?;
            let z = conv.forward(tape, store, u)?;
            h = tape.gelu(z);
        }
        let pooled = tape.block_mean(h, blocks)?;
        self.proj.forward(tape, store, pooled)
    }

    /// Contextual representations `L × d`. Passing `rng` enables dropout.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        segments: &[Vec<Vec<f64>>],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let x = self.stack_segments(segments)?;
        let x = tape.constant(x);
        self.forward_stacked(tape, store, x, rng, None)
    }

    /// As [`Encoder::forward`] on pre-stacked input, optionally recording one
    /// trace per layer.
    pub fn forward_stacked(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        stacked: Var,
        mut rng: Option<&mut ChaCha8Rng>,
        mut traces: Option<&mut Vec<LayerTrace>>,
    ) -> Result<Var> {
        let len = tape.value(stacked).rows() / self.cfg.window;
        if len == 0 {
            return Err(Error::dim("encoder", "empty segment sequence"));
        }
        if len > self.cfg.max_len {
            return Err(Error::Capacity {
                len,
                max: self.cfg.max_len,
            });
        }
        let e = self.embed(tape, store, stacked)?;
        let table = tape.param(store, self.positions);
        let pos = tape.slice_rows(table, 0, len)?;
        let mut c = tape.add(e, pos)?;
        for layer in &self.layers {
            let mut trace = LayerTrace::default();
            c = layer.forward(tape, store, c, rng.as_deref_mut(), &mut trace)?;
            if let Some(t) = traces.as_deref_mut() {
                t.push(trace);
            }
        }
        self.final_norm.forward(tape, store, c)
    }
}
