//! Self-supervised phase filtering: each pixel's phasor is predicted from
//! its neighbourhood as a bivariate Gaussian. Training sees only noisy
//! images; the predicted mean is the filtered phase, the predicted spread
//! gives coherence, and sampling the Gaussian generates plausible variants.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{extract_patch, pad_reflect, phasor_arg, store_phase, CoherenceMap, ComplexField, Patch, PhaseImage, DEGENERATE_EPS};
use crate::mdn::{
    adam_step, batch_gradient, combine_pixels, convolve, forward, AdamState, Architecture,
    Checkpoint, FeatureMap, GaussianParams, NetworkWeights, Sample, TrainerSnapshot,
};
use crate::rng::{derive_seed, rng_for};

/// Pixels per combiner work item.
pub const COMBINER_CHUNK: usize = 4096;
/// Loss is logged every this many optimizer steps.
pub const LOG_EVERY: usize = 100;
pub const EMA_DECAY: f64 = 0.99;

const SAMPLER_STREAM: u64 = 0x5a3b;
const DROPOUT_STREAM: u64 = 0xd5;
const DRAW_STREAM: u64 = 0x6e;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub patch_size: usize,
    pub batch: usize,
    pub epochs: usize,
    pub patches_per_epoch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(arch: Architecture) -> Self {
        Self {
            patch_size: arch.receptive_field(),
            arch,
            batch: 64,
            epochs: 2,
            patches_per_epoch: 100_000,
            lr: 1e-3,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.patch_size % 2 == 0 {
            return Err(Error::InvalidValue(format!("patch size {} must be odd", self.patch_size)));
        }
        if self.patch_size != self.arch.receptive_field() {
            return Err(Error::Shape(format!(
                "patch size {} must equal the network's receptive field {}",
                self.patch_size,
                self.arch.receptive_field()
            )));
        }
        if self.batch == 0 {
            return Err(Error::InvalidValue("batch must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidValue(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.patches_per_epoch / self.batch
    }
}

/// A neighbourhood with its center removed and the center's unit phasor.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: Patch,
    pub target: (f32, f32),
}

/// Interleaves a patch's two channels into an HWC feature map.
pub fn patch_features(p: &Patch) -> FeatureMap<f32> {
    let data = p.re().iter().zip(p.im()).flat_map(|(&r, &i)| [r, i]).collect();
    FeatureMap::new(p.size(), p.size(), 2, data).expect("patch dims are consistent")
}

pub fn field_features(c: &ComplexField) -> FeatureMap<f32> {
    let data = c.re().iter().zip(c.im()).flat_map(|(&r, &i)| [r, i]).collect();
    FeatureMap::new(c.height(), c.width(), 2, data).expect("field dims are consistent")
}

fn unit(re: f64, im: f64) -> (f32, f32) {
    let n = re.hypot(im);
    if n > DEGENERATE_EPS {
        ((re / n) as f32, (im / n) as f32)
    } else {
        // no direction to learn from; any unit vector is as good as another
        (1.0, 0.0)
    }
}

/// Uniform draws over every valid (fully in-bounds) center position of
/// every image. Sample `k` depends only on `(seed, k)`.
#[derive(Debug, Clone)]
pub struct PatchSampler<'a> {
    images: &'a [ComplexField],
    size: usize,
    seed: u64,
    cumulative: Vec<u64>,
    next: u64,
}

impl<'a> PatchSampler<'a> {
    pub fn new(images: &'a [ComplexField], size: usize, seed: u64) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::InvalidValue("training set is empty".into()));
        }
        let mut cumulative = Vec::with_capacity(images.len());
        let mut total = 0u64;
        for img in images {
            if img.width() < size || img.height() < size {
                return Err(Error::ImageTooSmall {
                    width: img.width(),
                    height: img.height(),
                    required: size,
                });
            }
            total += ((img.width() - size + 1) * (img.height() - size + 1)) as u64;
            cumulative.push(total);
        }
        Ok(Self {
            images,
            size,
            seed,
            cumulative,
            next: 0,
        })
    }

    /// Number of distinct center positions.
    pub fn positions(&self) -> u64 {
        *self.cumulative.last().unwrap()
    }

    /// Repositions the stream so the next draw is sample `index`.
    pub fn seek(&mut self, index: u64) {
        self.next = index;
    }

    pub fn sample(&self, index: u64) -> TrainingSample {
        use rand::Rng;
        let mut rng = rng_for(self.seed, &[SAMPLER_STREAM, index]);
        let pick = rng.random_range(0..self.positions());
        let img_idx = self.cumulative.partition_point(|&c| c <= pick);
        let offset = pick - if img_idx == 0 { 0 } else { self.cumulative[img_idx - 1] };
        let img = &self.images[img_idx];
        let span = (img.width() - self.size + 1) as u64;
        let half = self.size / 2;
        let row = (offset / span) as usize + half;
        let col = (offset % span) as usize + half;
        let input = extract_patch(img, row, col, self.size, true).expect("position is valid");
        let (re, im) = img.get(row, col);
        TrainingSample {
            input,
            target: unit(re, im),
        }
    }
}

impl Iterator for PatchSampler<'_> {
    type Item = TrainingSample;

    fn next(&mut self) -> Option<TrainingSample> {
        let s = self.sample(self.next);
        self.next += 1;
        Some(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub raw_loss: f64,
    pub ema_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: NetworkWeights<f32>,
    pub adam: AdamState<f32>,
    pub epochs_done: usize,
    /// Raw batch loss of every step run in this call.
    pub losses: Vec<f64>,
    /// One record every [`LOG_EVERY`] steps (and the last step).
    pub log: Vec<LossRecord>,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            weights: self.weights.clone(),
            snapshot: Some(TrainerSnapshot {
                adam: self.adam.clone(),
                epochs_done: self.epochs_done as u32,
            }),
        }
    }
}

/// Runs `epochs × (patches_per_epoch / batch)` Adam steps on the batch-mean
/// NLL. `resume` continues from a saved snapshot; `on_epoch` is called with a
/// resumable checkpoint after every finished epoch.
pub fn train(
    images: &[ComplexField],
    cfg: &TrainConfig,
    resume: Option<Checkpoint>,
    mut on_epoch: impl FnMut(&Checkpoint, &[LossRecord]) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let sampler = PatchSampler::new(images, cfg.patch_size, cfg.seed)?;
    let (mut weights, mut adam, start_epoch) = match resume {
        Some(ck) => {
            if ck.weights.arch() != &cfg.arch {
                return Err(Error::Shape("checkpoint architecture differs from the configuration".into()));
            }
            let (adam, done) = match ck.snapshot {
                Some(s) => (s.adam, s.epochs_done as usize),
                None => (AdamState::new(ck.weights.params().len(), cfg.lr), 0),
            };
            (ck.weights, adam, done)
        }
        None => {
            let w = NetworkWeights::<f32>::init(cfg.arch.clone(), cfg.seed)?;
            let adam = AdamState::new(w.params().len(), cfg.lr);
            (w, adam, 0)
        }
    };
    adam.lr = cfg.lr;

    let steps = cfg.steps_per_epoch();
    let mut losses = Vec::new();
    let mut log = Vec::new();
    let mut ema: Option<f64> = None;
    for epoch in start_epoch..cfg.epochs {
        for i in 0..steps {
            let step = epoch * steps + i;
            let first = (step * cfg.batch) as u64;
            let samples: Vec<Sample<f32>> = (0..cfg.batch as u64)
                .map(|b| {
                    let s = sampler.sample(first + b);
                    Sample {
                        input: patch_features(&s.input),
                        target: s.target,
                        dropout_seed: derive_seed(cfg.seed, &[DROPOUT_STREAM, first + b]),
                    }
                })
                .collect();
            let g = batch_gradient(&weights, &samples, true)?;
            if !g.loss.is_finite() || g.grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged {
                    step,
                    last_good: Box::new(weights),
                });
            }
            let before = weights.clone();
            adam_step(&mut weights, &g.grad, &mut adam)?;
            if weights.params().iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged {
                    step,
                    last_good: Box::new(before),
                });
            }
            let e = match ema {
                None => g.loss,
                Some(prev) => EMA_DECAY * prev + (1.0 - EMA_DECAY) * g.loss,
            };
            ema = Some(e);
            losses.push(g.loss);
            if step % LOG_EVERY == 0 || i + 1 == steps && epoch + 1 == cfg.epochs {
                log.push(LossRecord {
                    step,
                    raw_loss: g.loss,
                    ema_loss: e,
                });
            }
        }
        let ck = Checkpoint {
            weights: weights.clone(),
            snapshot: Some(TrainerSnapshot {
                adam: adam.clone(),
                epochs_done: (epoch + 1) as u32,
            }),
        };
        on_epoch(&ck, &log)?;
    }
    Ok(TrainOutcome {
        weights,
        adam,
        epochs_done: cfg.epochs.max(start_epoch),
        losses,
        log,
    })
}

fn check_patch(weights: &NetworkWeights<f32>, patch: &Patch) -> Result<()> {
    let rf = weights.arch().receptive_field();
    if patch.size() != rf {
        return Err(Error::Shape(format!(
            "patch is {0}x{0}, the network expects {rf}x{rf}",
            patch.size()
        )));
    }
    Ok(())
}

/// Center-pixel Gaussian of one patch, dropout disabled.
pub fn predict_patchwise(weights: &NetworkWeights<f32>, patch: &Patch) -> Result<GaussianParams<f32>> {
    check_patch(weights, patch)?;
    Ok(forward(weights, &patch_features(patch), None)?.params())
}

/// Every conv block, applied to a whole image in one pass.
#[derive(Debug, Clone, Copy)]
pub struct Convolver<'a> {
    weights: &'a NetworkWeights<f32>,
}

/// The dense head, applied independently to every pixel's feature vector.
#[derive(Debug, Clone, Copy)]
pub struct Combiner<'a> {
    weights: &'a NetworkWeights<f32>,
}

impl Convolver<'_> {
    /// Output is smaller than the input by the receptive-field margin on
    /// every side.
    pub fn apply(&self, input: &FeatureMap<f32>) -> Result<FeatureMap<f32>> {
        convolve(self.weights, input)
    }
}

impl Combiner<'_> {
    pub fn apply(&self, features: &FeatureMap<f32>, chunk: usize) -> Result<Vec<GaussianParams<f32>>> {
        combine_pixels(self.weights, features, chunk)
    }
}

pub fn split_model(weights: &NetworkWeights<f32>) -> (Convolver<'_>, Combiner<'_>) {
    (Convolver { weights }, Combiner { weights })
}

/// Per-pixel Gaussians over an image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianField {
    width: usize,
    height: usize,
    params: Vec<GaussianParams<f32>>,
}

impl GaussianField {
    pub fn new(width: usize, height: usize, params: Vec<GaussianParams<f32>>) -> Result<Self> {
        if params.len() != width * height {
            return Err(Error::Shape(format!(
                "{} parameters for a {width}x{height} grid",
                params.len()
            )));
        }
        Ok(Self { width, height, params })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn params(&self) -> &[GaussianParams<f32>] {
        &self.params
    }

    pub fn get(&self, row: usize, col: usize) -> GaussianParams<f32> {
        self.params[row * self.width + col]
    }
}

fn check_size(weights: &NetworkWeights<f32>, image: &ComplexField) -> Result<()> {
    let rf = weights.arch().receptive_field();
    if image.width() < rf || image.height() < rf {
        return Err(Error::ImageTooSmall {
            width: image.width(),
            height: image.height(),
            required: rf,
        });
    }
    Ok(())
}

/// Full-image inference: reflect-pad by the margin, one convolver pass,
/// then the combiner in `chunk`-pixel work items. Center pixels are *not*
/// zeroed in this mode; see [`predict_strict`].
pub fn predict_full(weights: &NetworkWeights<f32>, image: &ComplexField, chunk: usize) -> Result<GaussianField> {
    check_size(weights, image)?;
    let padded = pad_reflect(image, weights.arch().margin())?;
    let (conv, comb) = split_model(weights);
    let features = conv.apply(&field_features(&padded))?;
    let params = comb.apply(&features, chunk)?;
    GaussianField::new(image.width(), image.height(), params)
}

/// Patch-by-patch inference with every center zeroed exactly as in
/// training. Far slower than [`predict_full`].
pub fn predict_strict(weights: &NetworkWeights<f32>, image: &ComplexField) -> Result<GaussianField> {
    check_size(weights, image)?;
    let m = weights.arch().margin();
    let size = weights.arch().receptive_field();
    let padded = pad_reflect(image, m)?;
    let w = image.width();
    let params = (0..image.height())
        .into_par_iter()
        .map(|row| {
            (0..w)
                .map(|col| {
                    let p = extract_patch(&padded, row + m, col + m, size, true)?;
                    predict_patchwise(weights, &p)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    GaussianField::new(w, image.height(), params)
}

/// `γ = sqrt(1 − clip(σ_R² + σ_I², 0, 1))` per pixel.
pub fn coherence_from_sigma(field: &GaussianField) -> CoherenceMap {
    let data = field.params.iter().map(|p| p.coherence() as f32).collect();
    CoherenceMap::new(field.width, field.height, data).expect("coherence lies in [0, 1]")
}

/// `arg(μ)` per pixel; a zero mean gives phase 0 and a `true` flag.
pub fn filtered_phase(field: &GaussianField) -> (PhaseImage, Vec<bool>) {
    let mut flags = vec![false; field.params.len()];
    let data = field
        .params
        .iter()
        .zip(flags.iter_mut())
        .map(|(p, flag)| arg_or_zero(p.mu_r as f64, p.mu_i as f64, flag))
        .collect();
    (
        PhaseImage::new(field.width, field.height, data).expect("dims are consistent"),
        flags,
    )
}

fn arg_or_zero(re: f64, im: f64, flag: &mut bool) -> f32 {
    match phasor_arg(re, im) {
        Some(a) => store_phase(a),
        None => {
            *flag = true;
            0.0
        }
    }
}

/// Draws `P ~ N(μ, (ασ)²)` independently per pixel and channel and returns
/// `arg(P)`. `alpha = 0` reproduces [`filtered_phase`] exactly.
pub fn sample_interferogram(field: &GaussianField, alpha: f64, seed: u64) -> Result<PhaseImage> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidValue(format!("alpha {alpha} must be finite and >= 0")));
    }
    let w = field.width;
    let mut data = vec![0.0f32; field.params.len()];
    data.par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(row, out)| {
            for (col, v) in out.iter_mut().enumerate() {
                let idx = (row * w + col) as u64;
                let p = field.params[idx as usize];
                let mut rng = rng_for(seed, &[DRAW_STREAM, idx]);
                let zr: f64 = StandardNormal.sample(&mut rng);
                let zi: f64 = StandardNormal.sample(&mut rng);
                let re = p.mu_r as f64 + alpha * p.sigma_r as f64 * zr;
                let im = p.mu_i as f64 + alpha * p.sigma_i as f64 * zi;
                *v = arg_or_zero(re, im, &mut false);
            }
        });
    PhaseImage::new(field.width, field.height, data)
}
