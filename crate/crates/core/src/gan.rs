//! Adversarial training of a tabular generator against a discriminator on
//! minority rows.
//!
//! The generator's input comes from a [`LatentSource`]: standard-normal
//! noise for a plain GAN, or a fixed repertoire of pre-sampled rows (the
//! SMOTE output) for SMOTified-GAN. Everything else, architecture included,
//! is shared between the two.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::write_rows;
use crate::error::{Error, Result};
use crate::numerics::{
    bce_with_logits, sigmoid, AdamConfig, AdamState, Gradients, LayerSpec, Matrix, MlpModel, Mode,
    DEFAULT_LEAKY_SLOPE,
};
use crate::rng::{self, StreamRng};

/// Where generator inputs come from.
#[derive(Clone, Debug, PartialEq)]
pub enum LatentSource {
    /// Standard-normal vectors of the given width.
    Noise { dim: usize },
    /// Fixed rows, consumed in shuffled passes during training and in order
    /// when sampling.
    Repertoire(Matrix),
}

impl LatentSource {
    pub fn width(&self) -> usize {
        match self {
            LatentSource::Noise { dim } => *dim,
            LatentSource::Repertoire(m) => m.cols(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LatentSource::Noise { .. } => "noise",
            LatentSource::Repertoire(_) => "repertoire",
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.width() != d {
            return Err(Error::shape("latent source width", d, self.width()));
        }
        if let LatentSource::Repertoire(m) = self {
            if m.is_empty() {
                return Err(Error::TooFewRows {
                    context: "latent repertoire",
                    needed: 1,
                    found: 0,
                });
            }
        }
        Ok(())
    }
}

/// Draws training minibatches from a latent source. Repertoire rows are
/// taken without replacement from a shuffled pass; a new pass starts when
/// the current one is used up.
pub struct LatentSampler<'a> {
    source: &'a LatentSource,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> LatentSampler<'a> {
    pub fn new(source: &'a LatentSource) -> Self {
        LatentSampler {
            source,
            order: Vec::new(),
            cursor: 0,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rows: usize, rng: &mut R) -> Matrix {
        match self.source {
            LatentSource::Noise { dim } => noise(rows, *dim, rng),
            LatentSource::Repertoire(m) => {
                let mut picked = Vec::with_capacity(rows);
                while picked.len() < rows {
                    if self.cursor == self.order.len() {
                        self.order = (0..m.rows()).collect();
                        self.order.shuffle(rng);
                        self.cursor = 0;
                    }
                    picked.push(self.order[self.cursor]);
                    self.cursor += 1;
                }
                m.select_rows(&picked)
            }
        }
    }
}

fn noise<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, dim, data).expect("sized")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Discriminator updates per generator update.
    pub disc_steps: usize,
    /// Epochs without validation-F1 improvement before stopping.
    pub patience: usize,
    pub leaky_slope: f64,
    /// Abort when a loss stays below `collapse_floor` for `collapse_epochs` epochs.
    pub collapse_floor: f64,
    pub collapse_epochs: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            generator_hidden: vec![128, 256, 512, 1024],
            discriminator_hidden: vec![512, 256, 128],
            learning_rate: 1e-5,
            batch_size: 128,
            max_epochs: 2000,
            disc_steps: 1,
            patience: 200,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            collapse_floor: 1e-6,
            collapse_epochs: 50,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.generator_hidden.contains(&0) || self.discriminator_hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("GAN learning rate must be positive".into()));
        }
        if self.disc_steps == 0 {
            return Err(Error::Config("discriminator steps per generator step must be ≥ 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("GAN batch size must be ≥ 2 (batch norm)".into()));
        }
        Ok(())
    }
}

/// Generator `d → hidden… → d` (dense, batch norm, ReLU; linear output) and
/// discriminator `d → hidden… → 1` (dense, LeakyReLU; logit output).
#[derive(Clone, Debug, PartialEq)]
pub struct GanModel {
    pub generator: MlpModel,
    pub discriminator: MlpModel,
}

impl GanModel {
    pub fn new<R: Rng + ?Sized>(d: usize, cfg: &GanConfig, rng: &mut R) -> Result<Self> {
        let generator = MlpModel::stack(d, &cfg.generator_hidden, d, LayerSpec::Relu, true, None, rng)?;
        let discriminator = MlpModel::stack(
            d,
            &cfg.discriminator_hidden,
            1,
            LayerSpec::LeakyRelu {
                alpha: cfg.leaky_slope,
            },
            false,
            None,
            rng,
        )?;
        Ok(GanModel {
            generator,
            discriminator,
        })
    }

    pub fn data_width(&self) -> usize {
        self.generator.output_width()
    }
}

/// Per-epoch losses and validation scores.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub disc_loss: Vec<f64>,
    pub gen_loss: Vec<f64>,
    pub val_f1: Vec<Option<f64>>,
    pub disc_updates: u64,
    pub gen_updates: u64,
    /// Epoch (1-based) whose weights were kept, when a validation hook ran.
    pub best_epoch: Option<usize>,
}

impl TrainTrace {
    pub fn epochs(&self) -> usize {
        self.disc_loss.len()
    }

    /// `epoch,disc_loss,gen_loss,val_f1` with an empty last cell when no
    /// validation score was recorded.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header = ["epoch", "disc_loss", "gen_loss", "val_f1"].map(String::from);
        let rows = (0..self.epochs()).map(|e| {
            vec![
                (e + 1).to_string(),
                format!("{:?}", self.disc_loss[e]),
                format!("{:?}", self.gen_loss[e]),
                self.val_f1[e].map(|v| format!("{v:?}")).unwrap_or_default(),
            ]
        });
        write_rows(path, &header, rows)
    }
}

/// `BCE(real, 1) + BCE(fake, 0)`, each mean-reduced; returns the loss and the
/// gradients at both logit sets.
pub fn discriminator_loss(real_logits: &Matrix, fake_logits: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    let (lr, gr) = bce_with_logits(real_logits, &Matrix::filled(real_logits.rows(), real_logits.cols(), 1.0))?;
    let (lf, gf) = bce_with_logits(fake_logits, &Matrix::zeros(fake_logits.rows(), fake_logits.cols()))?;
    Ok((lr + lf, gr, gf))
}

/// Non-saturating generator loss `BCE(fake, 1)`.
pub fn generator_loss(fake_logits: &Matrix) -> Result<(f64, Matrix)> {
    bce_with_logits(fake_logits, &Matrix::filled(fake_logits.rows(), fake_logits.cols(), 1.0))
}

/// Discriminator objective and its parameter gradients for one real
/// minibatch and one latent minibatch. The generator runs in training mode
/// but is not modified.
pub fn discriminator_gradients(model: &GanModel, real: &Matrix, latent: &Matrix) -> Result<(f64, Gradients)> {
    let (fake, _) = model.generator.forward(latent, Mode::Training)?;
    let (real_logits, real_cache) = model.discriminator.forward(real, Mode::Training)?;
    let (fake_logits, fake_cache) = model.discriminator.forward(&fake, Mode::Training)?;
    let (loss, g_real, g_fake) = discriminator_loss(&real_logits, &fake_logits)?;
    let (mut grads, _) = model.discriminator.backward(&real_cache, &g_real)?;
    let (fake_grads, _) = model.discriminator.backward(&fake_cache, &g_fake)?;
    grads.accumulate(&fake_grads)?;
    Ok((loss, grads))
}

/// Generator objective, its parameter gradients (through the frozen
/// discriminator) and the generator cache for committing batch statistics.
pub fn generator_gradients(
    model: &GanModel,
    latent: &Matrix,
) -> Result<(f64, Gradients, crate::numerics::ForwardCache)> {
    let (fake, g_cache) = model.generator.forward(latent, Mode::Training)?;
    let (logits, d_cache) = model.discriminator.forward(&fake, Mode::Training)?;
    let (loss, g_logits) = generator_loss(&logits)?;
    let d_fake = model.discriminator.backward_input(&d_cache, &g_logits)?;
    let (grads, _) = model.generator.backward(&g_cache, &d_fake)?;
    Ok((loss, grads, g_cache))
}

/// Model plus one Adam state per network.
pub struct GanTrainer {
    pub model: GanModel,
    adam_d: AdamState,
    adam_g: AdamState,
    pub disc_updates: u64,
    pub gen_updates: u64,
}

impl GanTrainer {
    pub fn new(model: GanModel, learning_rate: f64) -> Result<Self> {
        let cfg = AdamConfig::with_learning_rate(learning_rate);
        Ok(GanTrainer {
            adam_d: AdamState::for_model(cfg, &model.discriminator)?,
            adam_g: AdamState::for_model(cfg, &model.generator)?,
            model,
            disc_updates: 0,
            gen_updates: 0,
        })
    }

    /// One Adam update of the discriminator; the generator is untouched.
    pub fn discriminator_step(&mut self, real: &Matrix, latent: &Matrix) -> Result<f64> {
        let (loss, grads) = discriminator_gradients(&self.model, real, latent)?;
        self.adam_d.step_model(&mut self.model.discriminator, &grads)?;
        self.disc_updates += 1;
        Ok(loss)
    }

    /// One Adam update of the generator; the discriminator is untouched.
    pub fn generator_step(&mut self, latent: &Matrix) -> Result<f64> {
        let (loss, grads, cache) = generator_gradients(&self.model, latent)?;
        self.adam_g.step_model(&mut self.model.generator, &grads)?;
        self.model.generator.commit_batch_stats(&cache)?;
        self.gen_updates += 1;
        Ok(loss)
    }
}

/// Splits `0..n` (already shuffled in `order`) into minibatches of at most
/// `batch` rows, never leaving a single-row tail (batch norm needs two).
fn minibatches(order: &[usize], batch: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch).collect();
    if out.len() > 1 && out.last().is_some_and(|c| c.len() < 2) {
        out.pop();
        let start = (out.len() - 1) * batch;
        *out.last_mut().expect("nonempty") = &order[start..];
    }
    out
}

/// Validation callback: called after every epoch with the 1-based epoch and
/// the current model; returns a validation F1 when one was computed.
pub type ValidationHook<'a> = dyn FnMut(usize, &GanModel) -> Result<Option<f64>> + 'a;

/// Trains a GAN on `real` (scaled minority rows).
///
/// Each epoch shuffles the real rows into minibatches; per minibatch the
/// discriminator takes `disc_steps` Adam updates on [`discriminator_loss`]
/// followed by one generator update on [`generator_loss`]. With a hook,
/// training stops after `patience` epochs without F1 improvement and the
/// best-F1 weights are returned.
pub fn train_gan(
    real: &Matrix,
    latent: &LatentSource,
    cfg: &GanConfig,
    mut hook: Option<&mut ValidationHook<'_>>,
) -> Result<(GanModel, TrainTrace)> {
    cfg.validate()?;
    let n = real.rows();
    if n < 2 {
        return Err(Error::TooFewRows {
            context: "GAN real rows",
            needed: 2,
            found: n,
        });
    }
    let d = real.cols();
    latent.validate(d)?;

    let mut init_rng = rng::stream(rng::derive_seed(cfg.seed, "gan-init"));
    let mut rng: StreamRng = rng::stream(rng::derive_seed(cfg.seed, "gan-train"));
    let model = GanModel::new(d, cfg, &mut init_rng)?;
    let mut trainer = GanTrainer::new(model, cfg.learning_rate)?;
    let mut sampler = LatentSampler::new(latent);
    let mut trace = TrainTrace::default();

    let batch = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut low_d = 0usize;
    let mut low_g = 0usize;
    let mut best: Option<(f64, usize, GanModel)> = None;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut d_sum = 0.0;
        let mut g_sum = 0.0;
        let batches = minibatches(&order, batch);
        for idx in &batches {
            let real_batch = real.select_rows(idx);
            let mut d_batch = 0.0;
            for _ in 0..cfg.disc_steps {
                let z = sampler.draw(idx.len(), &mut rng);
                d_batch += trainer.discriminator_step(&real_batch, &z)?;
            }
            d_sum += d_batch / cfg.disc_steps as f64;
            let z = sampler.draw(idx.len(), &mut rng);
            g_sum += trainer.generator_step(&z)?;
        }
        let d_loss = d_sum / batches.len() as f64;
        let g_loss = g_sum / batches.len() as f64;
        if !d_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                what: "discriminator",
                epoch,
            });
        }
        if !g_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                what: "generator",
                epoch,
            });
        }
        low_d = if d_loss < cfg.collapse_floor { low_d + 1 } else { 0 };
        low_g = if g_loss < cfg.collapse_floor { low_g + 1 } else { 0 };
        for (what, run) in [("discriminator", low_d), ("generator", low_g)] {
            if run >= cfg.collapse_epochs {
                return Err(Error::CollapsedLoss {
                    what,
                    floor: cfg.collapse_floor,
                    epochs: run,
                    epoch,
                });
            }
        }
        trace.disc_loss.push(d_loss);
        trace.gen_loss.push(g_loss);

        let f1 = match hook.as_mut() {
            Some(h) => h(epoch, &trainer.model)?,
            None => None,
        };
        trace.val_f1.push(f1);
        if let Some(f1) = f1 {
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, epoch, trainer.model.clone()));
            }
        }
        if let Some((_, best_epoch, _)) = &best {
            if epoch - best_epoch >= cfg.patience {
                break;
            }
        }
    }

    trace.disc_updates = trainer.disc_updates;
    trace.gen_updates = trainer.gen_updates;
    let model = match best {
        Some((_, epoch, model)) => {
            trace.best_epoch = Some(epoch);
            model
        }
        None => trainer.model,
    };
    Ok((model, trace))
}

/// True when the discriminator's probability for a logit meets `threshold`.
pub fn passes_filter(logit: f64, threshold: f64) -> bool {
    sigmoid(logit) >= threshold
}

/// Maps `n_fake` latent rows through the trained generator (inference mode)
/// and clamps the result to the scaled data range `[0, 1]`.
///
/// Repertoire rows are consumed in order, cycling when `n_fake` exceeds the
/// repertoire. With `filter = Some(t)` only outputs whose discriminator
/// probability is at least `t` are kept; at most `50·n_fake` latent rows are
/// tried before giving up.
pub fn accumulate_fake(
    model: &GanModel,
    latent: &LatentSource,
    n_fake: usize,
    filter: Option<f64>,
    seed: u64,
) -> Result<Matrix> {
    let d = model.data_width();
    latent.validate(d)?;
    if n_fake == 0 {
        return Ok(Matrix::zeros(0, d));
    }
    let mut rng = rng::stream(rng::derive_seed(seed, "gan-sample"));
    let mut cursor = 0usize;
    let mut next_latent = |rows: usize, rng: &mut StreamRng| -> Matrix {
        match latent {
            LatentSource::Noise { dim } => noise(rows, *dim, rng),
            LatentSource::Repertoire(m) => {
                let idx: Vec<usize> = (0..rows).map(|k| (cursor + k) % m.rows()).collect();
                cursor = (cursor + rows) % m.rows();
                m.select_rows(&idx)
            }
        }
    };
    let clamp01 = |m: Matrix| m.map(|v| v.clamp(0.0, 1.0));

    let Some(threshold) = filter else {
        let z = next_latent(n_fake, &mut rng);
        return Ok(clamp01(model.generator.predict(&z)?));
    };

    let budget = 50 * n_fake;
    let mut drawn = 0usize;
    let mut kept: Vec<f64> = Vec::with_capacity(n_fake * d);
    let mut accepted = 0usize;
    while accepted < n_fake && drawn < budget {
        let rows = (n_fake - accepted).max(16).min(budget - drawn);
        let z = next_latent(rows, &mut rng);
        drawn += rows;
        let fake = model.generator.predict(&z)?;
        let logits = model.discriminator.predict(&fake)?;
        for i in 0..rows {
            if accepted < n_fake && passes_filter(logits[(i, 0)], threshold) {
                kept.extend(fake.row(i).iter().map(|v| v.clamp(0.0, 1.0)));
                accepted += 1;
            }
        }
    }
    if accepted < n_fake {
        return Err(Error::DrawBudgetExhausted {
            wanted: n_fake,
            accepted,
            budget,
        });
    }
    Matrix::from_vec(n_fake, d, kept)
}
