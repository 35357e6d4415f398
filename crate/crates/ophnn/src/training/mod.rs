//! Estimation of the model and encoder from data: subsection construction,
//! the truncated simulation loss, joint Adam optimization with early
//! stopping, z-score normalization and checkpointing.

mod adam;
mod checkpoint;
mod loss;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPS};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use loss::{subnet_loss, subnet_loss_grad};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::Dataset;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::integrator::IntegratorScheme;
use crate::phcore::PhModel;
use crate::signal::Channels;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Subsection length T: how many steps each truncated simulation runs.
    pub truncation: usize,
    /// Encoder output/input window lengths.
    pub n_a: usize,
    pub n_b: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without validation improvement
    /// (0 disables early stopping).
    pub patience: usize,
    /// Drives batch shuffling.
    pub seed: u64,
    pub scheme: IntegratorScheme,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            truncation: 100,
            n_a: 20,
            n_b: 20,
            batch_size: 256,
            learning_rate: 1e-3,
            max_epochs: 100,
            patience: 0,
            seed: 0,
            scheme: IntegratorScheme::rk4(),
            clip_norm: Some(100.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.truncation == 0 {
            return Err(Error::invalid("truncation length must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning rate must be > 0"));
        }
        if self.n_a == 0 || self.n_b == 0 {
            return Err(Error::invalid("encoder lags must be >= 1"));
        }
        Ok(())
    }

    /// Longest encoder lag `n`.
    pub fn max_lag(&self) -> usize {
        self.n_a.max(self.n_b)
    }
}

/// Per-channel z-score constants, always computed on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub u_mean: Vec<f64>,
    pub u_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

impl NormalizationStats {
    /// Population means and standard deviations of a record's channels.
    /// Constant channels are rejected: they cannot be z-scored.
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let (u_mean, u_std) = (ds.u.mean(), ds.u.std_pop());
        let (y_mean, y_std) = (ds.y.mean(), ds.y.std_pop());
        for (name, stds) in [("u", &u_std), ("y", &y_std)] {
            if let Some(idx) = stds.iter().position(|&s| s <= 0.0) {
                return Err(Error::invalid(format!(
                    "channel {name}[{idx}] has zero variance; cannot normalize"
                )));
            }
        }
        Ok(Self {
            u_mean,
            u_std,
            y_mean,
            y_std,
        })
    }
}

fn zscore(ch: &Channels, mean: &[f64], std: &[f64]) -> Channels {
    let mut out = Channels::with_capacity(ch.channels(), ch.len());
    for row in ch.rows() {
        let scaled: Vec<f64> = row
            .iter()
            .zip(mean.iter().zip(std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect();
        out.push_row(&scaled);
    }
    out
}

/// Z-scores a dataset's inputs and outputs channelwise.
pub fn normalize(ds: &Dataset, stats: &NormalizationStats) -> Dataset {
    Dataset {
        ts: ds.ts,
        u: zscore(&ds.u, &stats.u_mean, &stats.u_std),
        y: zscore(&ds.y, &stats.y_mean, &stats.y_std),
        y_clean: ds
            .y_clean
            .as_ref()
            .map(|c| zscore(c, &stats.y_mean, &stats.y_std)),
        split: ds.split,
        meta: ds.meta.clone(),
    }
}

/// Maps normalized model outputs back to physical units.
pub fn denormalize_outputs(y: &Channels, stats: &NormalizationStats) -> Channels {
    let mut out = Channels::with_capacity(y.channels(), y.len());
    for row in y.rows() {
        let scaled: Vec<f64> = row
            .iter()
            .zip(stats.y_mean.iter().zip(&stats.y_std))
            .map(|(&v, (&m, &s))| v * s + m)
            .collect();
        out.push_row(&scaled);
    }
    out
}

/// One truncated training subsection, identified by its start sample τ.
/// Targets and inputs cover `τ … τ+T−1`; the encoder windows end at τ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subsection {
    pub start: usize,
}

/// Enumerates every admissible subsection start: `τ ∈ [n, N−T]` with
/// `n = max(n_a, n_b)`, giving exactly `N − T − n + 1` subsections.
pub fn build_subsections(ds: &Dataset, config: &TrainConfig) -> Result<Vec<Subsection>> {
    let n = config.max_lag();
    let t = config.truncation;
    let len = ds.len();
    if len < t + n {
        return Err(Error::invalid(format!(
            "record too short for subsection training: {len} samples, need at least T + n = {}",
            t + n
        )));
    }
    Ok((n..=len - t).map(|start| Subsection { start }).collect())
}

// ── flat parameter views ─────────────────────────────────────────────
//
// Canonical order: H, A, B, G nets then the encoder, each layer weight
// before bias. The loss gradient and Adam state use the same layout.

fn model_nets(m: &PhModel) -> [&crate::nn::Mlp; 4] {
    [&m.h_net, &m.a_net, &m.b_net, &m.g_net]
}

pub(crate) fn param_count(model: &PhModel, encoder: &Encoder) -> usize {
    model.n_params() + encoder.n_params()
}

pub(crate) fn leaf_count(model: &PhModel, encoder: &Encoder) -> usize {
    let layers: usize = model_nets(model).iter().map(|n| n.layers.len()).sum();
    2 * (layers + encoder.net.layers.len())
}

pub fn flatten_model_params(model: &PhModel) -> Vec<f64> {
    let mut flat = Vec::with_capacity(model.n_params());
    for net in model_nets(model) {
        for layer in &net.layers {
            flat.extend_from_slice(layer.w.data());
            flat.extend_from_slice(layer.b.data());
        }
    }
    flat
}

pub fn load_model_params(model: &mut PhModel, flat: &[f64]) {
    let mut at = 0;
    for net in [
        &mut model.h_net,
        &mut model.a_net,
        &mut model.b_net,
        &mut model.g_net,
    ] {
        for layer in &mut net.layers {
            let wlen = layer.w.len();
            layer.w.data_mut().copy_from_slice(&flat[at..at + wlen]);
            at += wlen;
            let blen = layer.b.len();
            layer.b.data_mut().copy_from_slice(&flat[at..at + blen]);
            at += blen;
        }
    }
    assert_eq!(at, flat.len(), "model parameter count");
}

/// Model and encoder parameters as one flat vector (θ then η).
pub fn flatten_params(model: &PhModel, encoder: &Encoder) -> Vec<f64> {
    let mut flat = flatten_model_params(model);
    for layer in &encoder.net.layers {
        flat.extend_from_slice(layer.w.data());
        flat.extend_from_slice(layer.b.data());
    }
    flat
}

/// Writes a flat vector back into the model and encoder.
pub fn load_params(model: &mut PhModel, encoder: &mut Encoder, flat: &[f64]) {
    let n_model = model.n_params();
    load_model_params(model, &flat[..n_model]);
    let mut at = n_model;
    for layer in &mut encoder.net.layers {
        let wlen = layer.w.len();
        layer.w.data_mut().copy_from_slice(&flat[at..at + wlen]);
        at += wlen;
        let blen = layer.b.len();
        layer.b.data_mut().copy_from_slice(&flat[at..at + blen]);
        at += blen;
    }
    assert_eq!(at, flat.len(), "parameter count");
}

// ── training loop ────────────────────────────────────────────────────

/// One epoch's summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean truncated loss over the epoch's minibatches (normalized data).
    pub train_loss: f64,
    /// Full-simulation NRMS on the validation split.
    pub val_nrms: f64,
}

/// How a training run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainOutcome {
    /// Ran all `max_epochs`.
    Completed,
    /// Validation stopped improving.
    EarlyStopped { at_epoch: usize },
    /// The loss became non-finite; the checkpoint holds the best earlier
    /// parameters.
    Diverged { at_epoch: usize },
}

pub struct TrainResult {
    pub checkpoint: Checkpoint,
    pub outcome: TrainOutcome,
}

/// Fits model and encoder jointly by minimizing the truncated simulation
/// loss with Adam. Model selection uses full-simulation NRMS on the
/// validation split; the returned checkpoint holds the best-validation
/// parameters and the complete loss history. Deterministic given the
/// config seed.
pub fn train(
    train_ds: &Dataset,
    val_ds: &Dataset,
    model: PhModel,
    encoder: Encoder,
    config: TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &Checkpoint),
) -> Result<TrainResult> {
    config.validate()?;
    train_ds.validate()?;
    val_ds.validate()?;
    if encoder.spec.n_a != config.n_a || encoder.spec.n_b != config.n_b {
        return Err(Error::invalid(format!(
            "encoder lags ({}, {}) do not match config ({}, {})",
            encoder.spec.n_a, encoder.spec.n_b, config.n_a, config.n_b
        )));
    }

    let stats = NormalizationStats::from_dataset(train_ds)?;
    let norm_train = normalize(train_ds, &stats);
    let subsections = build_subsections(&norm_train, &config)?;
    let ts = train_ds.ts;

    let mut model = model;
    let mut enc = encoder;
    let mut params = flatten_params(&model, &enc);
    let mut adam = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let make_checkpoint = |model: &PhModel, enc: &Encoder, epoch: usize, history: &[EpochStats]| {
        Checkpoint {
            model: model.clone(),
            encoder: enc.clone(),
            stats: stats.clone(),
            config: config.clone(),
            ts,
            epoch,
            history: history.to_vec(),
        }
    };

    let mut history: Vec<EpochStats> = Vec::with_capacity(config.max_epochs);
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_nrms = f64::INFINITY;
    let mut outcome = TrainOutcome::Completed;

    let mut order: Vec<usize> = (0..subsections.len()).collect();
    'epochs: for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sse_weighted = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Subsection> = chunk.iter().map(|&i| subsections[i]).collect();
            let step = subnet_loss_grad(
                &model,
                &enc,
                &norm_train,
                &batch,
                &config.scheme,
                ts,
                config.truncation,
            );
            let (loss, mut grad) = match step {
                Ok(ok) => ok,
                Err(Error::NonFinite { .. }) => {
                    outcome = TrainOutcome::Diverged { at_epoch: epoch };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if let Some(clip) = config.clip_norm {
                let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > clip {
                    let scale = clip / norm;
                    for v in &mut grad {
                        *v *= scale;
                    }
                }
            }
            adam_step(&mut params, &grad, &mut adam, config.learning_rate, BETA1, BETA2, EPS);
            load_params(&mut model, &mut enc, &params);
            sse_weighted += loss * batch.len() as f64;
            count += batch.len();
        }
        let train_loss = sse_weighted / count as f64;

        let val_ckpt = make_checkpoint(&model, &enc, epoch, &history);
        let val_nrms = match crate::eval::simulate_on_record(&val_ckpt, val_ds, &config.scheme, 1)
            .and_then(|sim| sim.metrics(val_ds).map(|m| m.nrms))
        {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };

        let stats_row = EpochStats {
            epoch,
            train_loss,
            val_nrms,
        };
        history.push(stats_row);
        on_epoch(&stats_row, &val_ckpt);

        if val_nrms < best_nrms {
            best_nrms = val_nrms;
            best_epoch = epoch;
            best_params.copy_from_slice(&params);
        } else if config.patience > 0 && epoch - best_epoch >= config.patience {
            outcome = TrainOutcome::EarlyStopped { at_epoch: epoch };
            break;
        }
    }

    load_params(&mut model, &mut enc, &best_params);
    let checkpoint = make_checkpoint(&model, &enc, best_epoch, &history);
    Ok(TrainResult { checkpoint, outcome })
}
