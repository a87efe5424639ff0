//! Label-smoothed 1-N training.
//!
//! One training row is a distinct `(s, p, t)` key of the augmented train
//! split; its target is the set of train objects observed with that key.
//! Each batch runs forward fusion (with dropout), scores every entity,
//! takes the mean binary cross-entropy and applies one Adam step. The
//! learning rate decays once per epoch.

use std::collections::BTreeSet;
use std::time::Instant;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cycles::TimeEncoder;
use crate::data::{augment_reciprocal, group_targets, resample_time, Dataset, Quadruple, QueryKey};
use crate::error::{Error, Result};
use crate::eval::RankingMetrics;
use crate::optim::{adam_step, decay_lr, AdamState};
use crate::scoring::{DropoutMasks, EncoderKind, Model, ModelParams, ModelShape, Variant};
use crate::tensor::{DenseMatrix, DenseVector};

/// Identity of the random generator, recorded with every run.
pub const RNG_ALGORITHM: &str = "rand_chacha::ChaCha8Rng";
const INIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;

/// Generator for one named purpose (`stream`) of a seeded run.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub encoder: EncoderKind,
    pub d_e: usize,
    pub d_r: usize,
    pub d_t: usize,
    pub k: usize,
    pub lr: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub label_smoothing: f64,
    pub input_dropout: f64,
    pub hidden_dropout: f64,
    pub epochs: usize,
    pub seed: u64,
    pub time_sampling_rate: usize,
    /// Stop after this many validations without MRR improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Cfb,
            encoder: EncoderKind::Ste,
            d_e: 300,
            d_r: 300,
            d_t: 300,
            k: 32,
            lr: 0.01,
            decay: 0.99,
            batch_size: 1000,
            label_smoothing: 0.01,
            input_dropout: 0.1,
            hidden_dropout: 0.2,
            epochs: 100,
            seed: 0,
            time_sampling_rate: 1,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.d_e == 0 || self.d_r == 0 || self.d_t == 0 || self.k == 0 {
            return bad("dimensions and rank must be positive".into());
        }
        if self.variant == Variant::Ftp && self.k != 1 {
            return bad(format!("ftp requires k = 1, got {}", self.k));
        }
        if self.variant.modulates_relation() && self.d_t != self.d_r {
            return bad(format!("{} requires d_t == d_r", self.variant));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label smoothing must be in [0, 1), got {}", self.label_smoothing));
        }
        for (name, rate) in [("input_dropout", self.input_dropout), ("hidden_dropout", self.hidden_dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("{name} must be in [0, 1), got {rate}"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.time_sampling_rate == 0 {
            return bad("time_sampling_rate must be >= 1".into());
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return bad(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        if !self.decay.is_finite() || self.decay <= 0.0 {
            return bad(format!("decay must be positive, got {}", self.decay));
        }
        Ok(())
    }
}

/// `y[o] = (1 - eps) * [o is true] + eps / |E|`.
pub fn smooth_targets(true_objects: &BTreeSet<usize>, num_entities: usize, epsilon: f64) -> Result<DenseVector> {
    if true_objects.is_empty() {
        return Err(Error::Config("target set is empty".into()));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Config(format!("label smoothing must be in [0, 1), got {epsilon}")));
    }
    let floor = epsilon / num_entities as f64;
    let mut y = vec![floor; num_entities];
    for &o in true_objects {
        let slot = y.get_mut(o).ok_or_else(|| Error::IndexOutOfRange {
            what: "target entity".into(),
            index: o,
            size: num_entities,
        })?;
        *slot += 1.0 - epsilon;
    }
    Ok(DenseVector::new(y))
}

/// Mean binary cross-entropy over all candidates, with its gradient
/// `(sigmoid(x) - y) / |E|`.
pub fn bce_loss(logits: &[f64], targets: &[f64]) -> Result<(f64, DenseVector)> {
    if logits.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            op: "bce_loss",
            expected: logits.len(),
            actual: targets.len(),
        });
    }
    if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("logit {i}")));
    }
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&x, &y) in logits.iter().zip(targets) {
        // -[y log s(x) + (1-y) log(1-s(x))] = max(x,0) - x y + log(1 + e^{-|x|})
        total += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        grad.push((sigmoid(x) - y) / n);
    }
    Ok((total / n, DenseVector::new(grad)))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout multipliers: `0` with probability `rate`, else `1 / (1 - rate)`.
/// `None` when dropout is a no-op.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Option<Vec<f64>> {
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    )
}

pub fn apply_dropout<R: Rng + ?Sized>(x: &[f64], rate: f64, mode: Mode, rng: &mut R) -> DenseVector {
    match (mode, dropout_mask(x.len(), rate, rng)) {
        (Mode::Train, Some(mask)) => DenseVector::new(x.iter().zip(mask).map(|(v, m)| v * m).collect()),
        _ => DenseVector::new(x.to_vec()),
    }
}

/// Dataset after time resampling and reciprocal augmentation, plus the
/// 1-N training rows.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub num_entities: usize,
    /// Original relations; models hold `2x` rows.
    pub num_relations: usize,
    pub num_timestamps: usize,
    /// Date standing for each (possibly coarsened) timestamp: the first date of its bucket.
    pub time_dates: Vec<NaiveDate>,
    /// Resampled, not augmented.
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
    /// Resampled and augmented train split.
    pub train_augmented: Vec<Quadruple>,
    /// Distinct training keys with their train-only object sets.
    pub train_rows: Vec<(QueryKey, BTreeSet<usize>)>,
}

impl PreparedData {
    pub fn new(dataset: &Dataset, time_sampling_rate: usize) -> Result<Self> {
        let vocab = &dataset.vocab;
        let nt = vocab.num_timestamps();
        let (train, num_timestamps) = resample_time(&dataset.train, nt, time_sampling_rate)?;
        let (valid, _) = resample_time(&dataset.valid, nt, time_sampling_rate)?;
        let (test, _) = resample_time(&dataset.test, nt, time_sampling_rate)?;
        let time_dates = (0..num_timestamps)
            .map(|t| vocab.timestamps[t * time_sampling_rate])
            .collect();
        let train_augmented = augment_reciprocal(&train, vocab.num_relations())?;
        let train_rows = group_targets(&train_augmented).into_iter().collect();
        Ok(Self {
            num_entities: vocab.num_entities(),
            num_relations: vocab.num_relations(),
            num_timestamps,
            time_dates,
            train,
            valid,
            test,
            train_augmented,
            train_rows,
        })
    }

    pub fn split(&self, split: crate::data::Split) -> &[Quadruple] {
        match split {
            crate::data::Split::Train => &self.train,
            crate::data::Split::Valid => &self.valid,
            crate::data::Split::Test => &self.test,
        }
    }

    pub fn time_encoder(&self, kind: EncoderKind) -> Result<TimeEncoder> {
        match kind {
            EncoderKind::Ste => Ok(TimeEncoder::simple(self.num_timestamps)),
            EncoderKind::Cte => TimeEncoder::cyclic(&self.time_dates),
        }
    }

    pub fn model_shape(&self, config: &TrainConfig) -> ModelShape {
        ModelShape {
            variant: config.variant,
            num_entities: self.num_entities,
            num_relations: self.num_relations,
            d_e: config.d_e,
            d_r: config.d_r,
            d_t: config.d_t,
            k: config.k,
        }
    }

    /// Freshly initialized model for `config`, seeded from the init stream.
    pub fn build_model(&self, config: &TrainConfig) -> Result<Model> {
        config.validate()?;
        let encoder = if config.variant.uses_time() {
            Some(self.time_encoder(config.encoder)?)
        } else {
            None
        };
        let mut rng = rng_stream(config.seed, INIT_STREAM);
        Model::new(self.model_shape(config), encoder, &mut rng)
    }
}

/// Runs one epoch over shuffled batches of training rows and returns the
/// mean batch loss. `epoch` and the batch number in errors are 1-based.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch<R: Rng + ?Sized>(
    model: &mut Model,
    adam: &mut AdamState<ModelParams>,
    grads: &mut ModelParams,
    rows: &[(QueryKey, BTreeSet<usize>)],
    config: &TrainConfig,
    lr: f64,
    epoch: usize,
    rng: &mut R,
) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Config("no training rows".into()));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(rng);

    let num_entities = model.num_entities();
    let kd = model.shape.projection_dim();
    let mut loss_sum = 0.0;
    let mut num_batches = 0usize;
    for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
        let diverged = || Error::Diverged {
            epoch,
            batch: batch_idx + 1,
        };
        let mut fused = Vec::with_capacity(chunk.len());
        let mut dlogits = DenseMatrix::zeros(chunk.len(), num_entities);
        let mut batch_loss = 0.0;
        let scale = 1.0 / chunk.len() as f64;
        for (i, &row) in chunk.iter().enumerate() {
            let (key, objects) = &rows[row];
            let masks = DropoutMasks {
                input: dropout_mask(kd, config.input_dropout, rng),
                hidden: dropout_mask(model.shape.d_e, config.hidden_dropout, rng),
            };
            let f = model.forward(*key, masks)?;
            let logits = model.score(&f)?;
            let targets = smooth_targets(objects, num_entities, config.label_smoothing)?;
            let (loss, grad) = match bce_loss(logits.as_slice(), targets.as_slice()) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => return Err(diverged()),
                Err(e) => return Err(e),
            };
            batch_loss += loss;
            for (d, g) in dlogits.row_mut(i).iter_mut().zip(grad.as_slice()) {
                *d = g * scale;
            }
            fused.push(f);
        }
        batch_loss *= scale;
        if !batch_loss.is_finite() {
            return Err(diverged());
        }
        grads.fill(0.0);
        model.backward(&fused, &dlogits, grads)?;
        adam_step(&mut model.params, grads, adam, lr)?;
        if !model.params.is_finite() {
            return Err(diverged());
        }
        loss_sum += batch_loss;
        num_batches += 1;
    }
    Ok(loss_sum / num_batches as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val: Option<RankingMetrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// One JSON object per line.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Owns a model and its optimizer state across epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub adam: AdamState<ModelParams>,
    pub history: TrainHistory,
    /// Completed epochs.
    pub epoch: usize,
    grads: ModelParams,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(&model.params);
        let grads = model.params.zeros_like();
        let rng = rng_stream(config.seed, TRAIN_STREAM);
        Ok(Self {
            model,
            config,
            adam,
            history: TrainHistory::default(),
            epoch: 0,
            grads,
            rng,
        })
    }

    pub fn current_lr(&self) -> f64 {
        decay_lr(self.config.lr, self.config.decay, self.epoch)
    }

    /// Trains one epoch and appends it to the history.
    pub fn run_epoch(&mut self, rows: &[(QueryKey, BTreeSet<usize>)]) -> Result<&mut EpochRecord> {
        let lr = self.current_lr();
        let start = Instant::now();
        let loss = train_epoch(
            &mut self.model,
            &mut self.adam,
            &mut self.grads,
            rows,
            &self.config,
            lr,
            self.epoch + 1,
            &mut self.rng,
        )?;
        self.epoch += 1;
        self.history.epochs.push(EpochRecord {
            epoch: self.epoch,
            loss,
            lr,
            seconds: start.elapsed().as_secs_f64(),
            val: None,
        });
        Ok(self.history.epochs.last_mut().expect("just pushed"))
    }

    /// Trains `config.epochs` epochs without validation.
    pub fn fit(&mut self, rows: &[(QueryKey, BTreeSet<usize>)]) -> Result<&TrainHistory> {
        while self.epoch < self.config.epochs {
            self.run_epoch(rows)?;
        }
        Ok(&self.history)
    }
}
