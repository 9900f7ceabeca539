//! Data preparation, the epoch loop and model selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::schedule::{curriculum_active_levels, eta, LabelState, Schedule};
use crate::autodiff::{AdamConfig, Gradients, OptimizerState, ParamStore, Tape};
use crate::data::{
    point_levels, sample_intervals_per_level, segment_interval, segment_labels, Fold, TimeInterval,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_intervals, label_recovery, LabelRecovery, MetricsReport};
use crate::model::{Con4m, ModelConfig};
use crate::predict::{aggregate_context, consistency_losses, constrain_behavior, PredictionBundle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub model: ModelConfig,
    pub schedule: Schedule,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub stride: usize,
    /// Segments per sampled interval.
    pub seq_len: usize,
    /// Sampled intervals per curriculum level.
    pub per_level: usize,
    /// Change-point tolerance in segments.
    pub tau: usize,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            schedule: Schedule::default(),
            lr: 1e-3,
            weight_decay: 1e-4,
            batch_size: 16,
            seed: 0,
            stride: 8,
            seq_len: 16,
            per_level: 40,
            tau: 2,
        }
    }
}

impl TrainRunConfig {
    pub fn window(&self) -> usize {
        self.model.encoder.window
    }

    /// Points covered by one sampled interval.
    pub fn interval_len(&self) -> usize {
        (self.seq_len - 1) * self.stride + self.window()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.encoder.validate()?;
        self.schedule.validate()?;
        if !(self.lr > 0.0) {
            return Err(Error::config("lr", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::config("stride", "must be at least 1"));
        }
        if self.seq_len == 0 || self.seq_len > self.model.encoder.max_len {
            return Err(Error::config(
                "seq_len",
                format!("must lie in 1..={}", self.model.encoder.max_len),
            ));
        }
        if self.per_level == 0 {
            return Err(Error::config("per_level", "must be at least 1"));
        }
        if self.model.classes < 2 {
            return Err(Error::config("classes", "need at least two classes"));
        }
        Ok(())
    }
}

/// A training interval cut from a longer record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub interval_id: usize,
    pub start: usize,
    pub level: usize,
    pub segments: Vec<Vec<Vec<f64>>>,
    pub clean: Vec<usize>,
}

/// An evaluation interval: consecutive segments of one record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub interval_id: usize,
    pub first_segment: usize,
    pub segments: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<usize>,
    pub clean: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: Vec<TrainSample>,
    pub y0: Vec<Vec<usize>>,
    pub val: Vec<EvalSample>,
    pub test: Vec<EvalSample>,
    pub undersampled: Vec<(usize, usize)>,
}

fn in_groups<'a>(data: &'a [TimeInterval], groups: &'a [usize]) -> impl Iterator<Item = &'a TimeInterval> {
    data.iter().filter(move |iv| groups.contains(&iv.group_id))
}

/// Segments whole records and cuts them into runs of at most `seq_len`
/// consecutive segments.
pub fn tile_records(records: &[&TimeInterval], window: usize, stride: usize, seq_len: usize) -> Result<Vec<EvalSample>> {
    let mut out = Vec::new();
    for iv in records {
        if iv.len() < window {
            continue;
        }
        let seq = segment_interval(iv.interval_id, &iv.values, &iv.labels, None, window, stride)?;
        let clean = segment_labels(&iv.clean_labels, window, stride)?;
        let mut first = 0;
        while first < seq.len() {
            let end = (first + seq_len).min(seq.len());
            out.push(EvalSample {
                interval_id: iv.interval_id,
                first_segment: first,
                segments: seq.segments[first..end].to_vec(),
                labels: seq.seg_labels[first..end].to_vec(),
                clean: clean[first..end].to_vec(),
            });
            first = end;
        }
    }
    Ok(out)
}

pub fn prepare_data(data: &[TimeInterval], fold: &Fold, cfg: &TrainRunConfig) -> Result<PreparedData> {
    let classes = cfg.model.classes;
    for iv in data {
        iv.validate(classes)?;
        if iv.features() != cfg.model.encoder.features {
            return Err(Error::config(
                "features",
                format!("interval {} has {} features", iv.interval_id, iv.features()),
            ));
        }
    }
    let train_records: Vec<&TimeInterval> = in_groups(data, &fold.train).collect();
    if train_records.is_empty() {
        return Err(Error::config("fold", "no training records"));
    }
    let levels: Vec<Vec<usize>> = train_records
        .iter()
        .map(|iv| point_levels(&iv.labels, cfg.schedule.levels))
        .collect();
    let len = cfg.interval_len();
    let pool = sample_intervals_per_level(&levels, cfg.schedule.levels, cfg.per_level, len, cfg.seed)?;
    let (w, r) = (cfg.window(), cfg.stride);
    let mut train = Vec::with_capacity(pool.items.len());
    let mut y0 = Vec::with_capacity(pool.items.len());
    for item in &pool.items {
        let iv = train_records[item.source];
        let span = item.start..item.start + item.len;
        let seq = segment_interval(iv.interval_id, &iv.values[span.clone()], &iv.labels[span.clone()], None, w, r)?;
        y0.push(seq.seg_labels);
        train.push(TrainSample {
            interval_id: iv.interval_id,
            start: item.start,
            level: item.level,
            segments: seq.segments,
            clean: segment_labels(&iv.clean_labels[span], w, r)?,
        });
    }
    let val_records: Vec<&TimeInterval> = in_groups(data, &fold.val).collect();
    let test_records: Vec<&TimeInterval> = in_groups(data, &fold.test).collect();
    Ok(PreparedData {
        train,
        y0,
        val: tile_records(&val_records, w, r, cfg.seq_len)?,
        test: tile_records(&test_records, w, r, cfg.seq_len)?,
        undersampled: pool.undersampled,
    })
}

/// Hex SHA-256 over a list of label sequences.
pub fn labels_digest<'a>(labels: impl IntoIterator<Item = &'a [usize]>) -> String {
    let mut h = Sha256::new();
    for seq in labels {
        h.update((seq.len() as u64).to_le_bytes());
        for &l in seq {
            h.update((l as u64).to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn eval_digest(samples: &[EvalSample]) -> String {
    labels_digest(samples.iter().flat_map(|s| [s.labels.as_slice(), s.clean.as_slice()]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub eta: f64,
    pub active_levels: usize,
    pub admitted_intervals: usize,
    pub loss: f64,
    pub loss_independent: f64,
    pub loss_pairwise: f64,
    pub label_changes: usize,
    /// Segments whose current label differs from the original one.
    pub changed_from_original: usize,
    pub val_macro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub undersampled_levels: Vec<(usize, usize)>,
    pub train_segments: usize,
    pub label_recovery: LabelRecovery,
    pub heldout_digest_before: String,
    pub heldout_digest_after: String,
}

pub struct TrainOutcome {
    pub model: Con4m,
    /// Parameters from the epoch with the best validation macro-F1.
    pub best: ParamStore,
    /// Parameters after the final epoch.
    pub last: ParamStore,
    pub log: TrainLog,
    pub labels: Vec<LabelState>,
    pub data: PreparedData,
}

fn mix(seed: u64, epoch: usize, index: usize) -> u64 {
    let mut z = seed
        ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (index as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Final labels for each sample, in evaluation mode.
pub fn predict_samples(model: &Con4m, store: &ParamStore, samples: &[EvalSample]) -> Result<Vec<PredictionBundle>> {
    samples.iter().map(|s| model.predict(store, &s.segments)).collect()
}

/// Scores evaluation samples against their working labels (`clean = false`)
/// or their clean labels.
pub fn evaluate_samples(
    model: &Con4m,
    store: &ParamStore,
    samples: &[EvalSample],
    clean: bool,
    tau: usize,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::config("fold", "no evaluation intervals"));
    }
    let pairs = samples
        .iter()
        .map(|s| {
            let b = model.predict(store, &s.segments)?;
            let truth = if clean { s.clean.clone() } else { s.labels.clone() };
            Ok((b.final_labels(), truth))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_intervals(&pairs, model.classes(), tau)
}

pub fn train(cfg: &TrainRunConfig, data: &[TimeInterval], fold: &Fold) -> Result<TrainOutcome> {
    cfg.validate()?;
    let prepared = prepare_data(data, fold, cfg)?;
    if prepared.train.is_empty() {
        return Err(Error::config("per_level", "no training interval could be sampled"));
    }
    if prepared.val.is_empty() {
        return Err(Error::config("scheme", "fold has no validation intervals"));
    }
    let heldout_digest_before = format!("{}:{}", eval_digest(&prepared.val), eval_digest(&prepared.test));

    let mut store = ParamStore::new();
    let model = Con4m::new(&mut store, &cfg.model, cfg.seed)?;
    let mut opt = OptimizerState::new(AdamConfig::new(cfg.lr, cfg.weight_decay), &store)?;
    let mut labels: Vec<LabelState> = prepared
        .y0
        .iter()
        .map(|y| LabelState::new(y.clone(), cfg.model.classes))
        .collect::<Result<_>>()?;

    let mut best = store.clone();
    let mut best_epoch = 0;
    let mut best_f1 = f64::NEG_INFINITY;
    let mut epochs = Vec::with_capacity(cfg.schedule.epochs);

    for e in 0..cfg.schedule.epochs {
        let active = curriculum_active_levels(e, cfg.schedule.e_g, cfg.schedule.levels);
        let top = *active.last().expect("at least one level");
        let mut order: Vec<usize> = (0..prepared.train.len())
            .filter(|&i| prepared.train[i].level <= top)
            .collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(cfg.seed, e, usize::MAX)));

        let (mut sum_loss, mut sum_l1, mut sum_l2) = (0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::default();
            for &i in batch {
                let sample = &prepared.train[i];
                let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, e, i));
                let mut tape = Tape::new();
                let out = model.forward(&mut tape, &store, &sample.segments, Some(&mut rng))?;
                let loss = consistency_losses(&mut tape, out.p_hat, out.r_hat, &labels[i].y_cur)?;
                let total = tape.value(loss.total).item();
                if !total.is_finite() {
                    return Err(Error::Training {
                        param: format!("loss at epoch {e}, interval {}", sample.interval_id),
                    });
                }
                sum_loss += total;
                sum_l1 += tape.value(loss.independent).item();
                sum_l2 += tape.value(loss.pairwise).item();
                grads.add_assign(&tape.backward(loss.total)?);

                let p_hat = tape.value(out.p_hat).clone();
                let p_tilde = aggregate_context(tape.value(out.r_hat), &p_hat)?;
                let (p_bar, _) = constrain_behavior(&p_tilde);
                labels[i].push(p_hat, p_bar);
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(&mut store, &grads)?;
        }

        let trust = eta(e, cfg.schedule.e_eta);
        let mut changes = 0;
        for &i in &order {
            changes += labels[i].update(trust)?;
        }
        let changed_from_original = labels
            .iter()
            .map(|s| s.y_cur.iter().zip(&s.y0).filter(|(a, b)| a != b).count())
            .sum();

        let val = evaluate_samples(&model, &store, &prepared.val, false, cfg.tau)?;
        if val.macro_f1 > best_f1 {
            best_f1 = val.macro_f1;
            best_epoch = e;
            best = store.clone();
        }
        let n = order.len().max(1) as f64;
        epochs.push(EpochLog {
            epoch: e,
            eta: trust,
            active_levels: top,
            admitted_intervals: order.len(),
            loss: sum_loss / n,
            loss_independent: sum_l1 / n,
            loss_pairwise: sum_l2 / n,
            label_changes: changes,
            changed_from_original,
            val_macro_f1: val.macro_f1,
        });
    }

    let mut recovery = LabelRecovery::default();
    for (state, sample) in labels.iter().zip(&prepared.train) {
        recovery.merge(&label_recovery(&state.y_cur, &state.y0, &sample.clean)?);
    }
    let heldout_digest_after = format!("{}:{}", eval_digest(&prepared.val), eval_digest(&prepared.test));
    let log = TrainLog {
        epochs,
        best_epoch,
        best_val_macro_f1: best_f1,
        undersampled_levels: prepared.undersampled.clone(),
        train_segments: labels.iter().map(|s| s.y0.len()).sum(),
        label_recovery: recovery,
        heldout_digest_before,
        heldout_digest_after,
    };
    Ok(TrainOutcome {
        model,
        best,
        last: store,
        log,
        labels,
        data: prepared,
    })
}
