//! End-to-end training: permutation loss through the unrolled Sinkhorn
//! layer, AdamW, mini-batches and early stopping on validation loss.

mod loss;
mod optim;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use loss::{build_gt_matrix, loss_backward, permutation_loss, BCE_CLAMP};
pub use optim::{adamw_step, AdamWConfig, OptimizerState};

use crate::datagen::{derive_seed, Corpus, Sample, Split};
use crate::error::{Error, Result};
use crate::graph::{compute_feature_stats, standardize_features, AdjacencyTolerance, FeatureStats};
use crate::matching::{
    affinity, affinity_backward, ensure_augmented, instance_normalize_backward, instance_normalize_with_scale,
    pad_dummy_columns, sinkhorn_backward, sinkhorn_unrolled, Matcher, INSTANCE_NORM_EPS,
};
use crate::matrix::Matrix;
use crate::nn::{Architecture, DropoutMasks, EncoderInput, EncoderParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub sinkhorn_train_iters: usize,
    pub architecture: Architecture,
    pub adjacency: AdjacencyTolerance,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 5e-5,
            batch_size: 16,
            max_epochs: 500,
            patience: 20,
            seed: 0,
            sinkhorn_train_iters: 20,
            architecture: Architecture::default(),
            adjacency: AdjacencyTolerance::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("train config: {msg}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.sinkhorn_train_iters == 0 {
            return bad("sinkhorn_train_iters must be positive");
        }
        self.architecture.validate()
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..Default::default()
        }
    }
}

/// Encoder inputs and ground-truth matrix of one sample, ready for training.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    pub a: EncoderInput,
    pub s: EncoderInput,
    pub gt: Matrix,
}

impl PreparedSample {
    pub fn new(sample: &Sample, stats: &FeatureStats, tol: AdjacencyTolerance) -> Result<Self> {
        let prep = |g| -> Result<EncoderInput> {
            EncoderInput::from_scene(&standardize_features(&ensure_augmented(g, tol)?, stats)?)
        };
        let a = prep(&sample.a_graph)?;
        let s = prep(&sample.s_graph)?;
        let gt = build_gt_matrix(&sample.ground_truth, a.n_nodes(), s.n_nodes())?;
        Ok(Self { a, s, gt })
    }
}

/// Feature statistics over every A- and S-graph in the given samples.
pub fn training_stats<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<FeatureStats> {
    let samples: Vec<&Sample> = samples.into_iter().collect();
    compute_feature_stats(samples.iter().flat_map(|s| [&s.a_graph, &s.s_graph]))
}

/// Dropout masks for the A-graph and S-graph passes of one sample.
pub type SampleMasks = (DropoutMasks, DropoutMasks);

pub fn sample_masks(params: &EncoderParams, sample: &PreparedSample, seed: u64) -> SampleMasks {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ma = params.sample_masks(&sample.a, &mut rng);
    let ms = params.sample_masks(&sample.s, &mut rng);
    (ma, ms)
}

/// Full-pipeline loss for one sample. `masks = None` runs the encoder in
/// evaluation mode.
pub fn sample_loss(params: &EncoderParams, sample: &PreparedSample, masks: Option<&SampleMasks>, iters: usize) -> Result<f64> {
    let h1 = params.forward(&sample.a, masks.map(|m| &m.0))?;
    let h2 = params.forward(&sample.s, masks.map(|m| &m.1))?;
    let aff = affinity(&h1, &h2)?;
    let (norm, _) = instance_normalize_with_scale(&aff, INSTANCE_NORM_EPS);
    let (soft, _) = sinkhorn_unrolled(&pad_dummy_columns(&norm)?, 1.0, iters)?;
    permutation_loss(&soft.leading_cols(h2.rows()), &sample.gt)
}

/// Loss and its gradient with respect to every encoder parameter.
pub fn sample_loss_and_grad(
    params: &EncoderParams,
    sample: &PreparedSample,
    masks: Option<&SampleMasks>,
    iters: usize,
) -> Result<(f64, EncoderParams)> {
    let (h1, c1) = params.forward_cached(&sample.a, masks.map(|m| &m.0))?;
    let (h2, c2) = params.forward_cached(&sample.s, masks.map(|m| &m.1))?;
    let (n1, n2) = (h1.rows(), h2.rows());
    let aff = affinity(&h1, &h2)?;
    let (norm, sigma) = instance_normalize_with_scale(&aff, INSTANCE_NORM_EPS);
    let (soft, trace) = sinkhorn_unrolled(&pad_dummy_columns(&norm)?, 1.0, iters)?;
    let real = soft.leading_cols(n2);
    let loss = permutation_loss(&real, &sample.gt)?;

    let d_real = loss_backward(&real, &sample.gt)?;
    let d_soft = Matrix::from_fn(n1, n1, |i, j| if j < n2 { d_real[(i, j)] } else { 0.0 });
    let d_padded = sinkhorn_backward(&trace, &d_soft)?;
    let d_aff = instance_normalize_backward(&norm, sigma, &d_padded.leading_cols(n2));
    let (d_h1, d_h2) = affinity_backward(&h1, &h2, &d_aff);
    let mut grads = params.backward(&sample.a, &c1, &d_h1)?;
    grads.add_scaled(&params.backward(&sample.s, &c2, &d_h2)?, 1.0);
    Ok((loss, grads))
}

/// Tracks the best validation loss; strict improvement resets the counter.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_loss: f64,
    pub best_epoch: Option<usize>,
    pub bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: None,
            bad_epochs: 0,
        }
    }

    /// Records one epoch; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = Some(epoch);
            self.bad_epochs = 0;
            (true, false)
        } else {
            self.bad_epochs += 1;
            (false, self.bad_epochs >= self.patience)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Deterministic per-epoch record. Wall-clock times live in [`Timings`] so
/// that this file is reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub epoch_wall_s: Vec<f64>,
    pub total_wall_s: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: EncoderParams,
    pub stats: FeatureStats,
    pub history: History,
    pub timings: Timings,
}

impl TrainOutput {
    pub fn matcher(&self) -> Matcher {
        Matcher::new(self.params.clone(), self.stats)
    }
}

/// Per-epoch progress event handed to the observer.
pub struct EpochEvent<'a> {
    pub record: &'a EpochRecord,
    pub wall_s: f64,
    pub improved: bool,
    pub params: &'a EncoderParams,
}

const STREAM_SHUFFLE: u64 = 11;
const STREAM_MASKS: u64 = 12;

fn mean_loss(params: &EncoderParams, samples: &[PreparedSample], iters: usize) -> Result<f64> {
    let losses = samples
        .par_iter()
        .map(|s| sample_loss(params, s, None, iters))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

pub fn train(corpus: &Corpus, config: &TrainConfig, init: Option<EncoderParams>) -> Result<TrainOutput> {
    train_with_observer(corpus, config, init, |_| {})
}

/// Trains on the corpus' train split and selects the epoch with the lowest
/// validation loss. The result is a pure function of the corpus, config and
/// initial parameters regardless of the number of worker threads.
pub fn train_with_observer(
    corpus: &Corpus,
    config: &TrainConfig,
    init: Option<EncoderParams>,
    mut observer: impl FnMut(&EpochEvent),
) -> Result<TrainOutput> {
    config.validate()?;
    let train_idx = corpus.indices(Split::Train);
    let val_idx = corpus.indices(Split::Val);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::InvalidInput(format!(
            "training needs non-empty train and val splits (got {} and {})",
            train_idx.len(),
            val_idx.len()
        )));
    }
    let stats = training_stats(train_idx.iter().map(|&i| &corpus.samples[i]))?;
    let prepare = |idx: &[usize]| -> Result<Vec<PreparedSample>> {
        idx.iter()
            .map(|&i| PreparedSample::new(&corpus.samples[i], &stats, config.adjacency))
            .collect()
    };
    let train_set = prepare(&train_idx)?;
    let val_set = prepare(&val_idx)?;

    let mut params = match init {
        Some(p) => {
            if p.arch != config.architecture {
                return Err(Error::InvalidInput("initial weights do not match the configured architecture".into()));
            }
            p
        }
        None => EncoderParams::init(&config.architecture, config.seed),
    };
    let adamw = config.adamw();
    let iters = config.sinkhorn_train_iters;
    let mut state = OptimizerState::new(&params);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = params.clone();
    let mut history = History {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
    };
    let mut timings = Timings {
        epoch_wall_s: Vec::new(),
        total_wall_s: 0.0,
    };
    let run_start = Instant::now();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..config.max_epochs {
        let epoch_start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64, STREAM_SHUFFLE));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&k| {
                    let sample = &train_set[k];
                    let seed = derive_seed(derive_seed(config.seed, epoch as u64, STREAM_MASKS), k as u64, 0);
                    let masks = sample_masks(&params, sample, seed);
                    sample_loss_and_grad(&params, sample, Some(&masks), iters)
                })
                .collect::<Vec<_>>();
            let mut grads = params.zeros_like();
            for (&k, result) in batch.iter().zip(results) {
                let (loss, g) = result?;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        sample: train_idx[k],
                        loss,
                    });
                }
                loss_sum += loss;
                grads.add_scaled(&g, 1.0);
            }
            grads.scale(1.0 / batch.len() as f64);
            adamw_step(&mut params, &grads, &mut state, &adamw)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = mean_loss(&params, &val_set, iters)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                sample: val_idx[0],
                loss: val_loss,
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
        };
        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best = params.clone();
            history.best_epoch = epoch;
            history.best_val_loss = val_loss;
        }
        let wall_s = epoch_start.elapsed().as_secs_f64();
        timings.epoch_wall_s.push(wall_s);
        observer(&EpochEvent {
            record: &record,
            wall_s,
            improved,
            params: &params,
        });
        history.epochs.push(record);
        if stop {
            history.stopped_early = true;
            break;
        }
    }
    timings.total_wall_s = run_start.elapsed().as_secs_f64();
    Ok(TrainOutput {
        params: best,
        stats,
        history,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_corpus, CorpusSpec, GenParams, NoiseParams};
    use crate::nn::gradcheck::grad_check;

    fn small_arch() -> Architecture {
        Architecture {
            mlp_hidden: 8,
            embed_dim: 8,
            heads: 2,
            hidden_dim: 8,
            output_dim: 6,
            ..Default::default()
        }
    }

    fn tiny_corpus(count: usize, seed: u64) -> Corpus {
        generate_corpus(&CorpusSpec {
            count,
            seed,
            gen: GenParams {
                rooms_min: 2,
                rooms_max: 3,
                ..Default::default()
            },
            noise: NoiseParams::drop_only(0.0, 0.2),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn pipeline_gradient_matches_finite_differences() {
        let corpus = tiny_corpus(1, 4);
        let sample = &corpus.samples[0];
        let stats = training_stats([sample]).unwrap();
        let prepared = PreparedSample::new(sample, &stats, AdjacencyTolerance::default()).unwrap();
        let params = EncoderParams::init(&small_arch(), 2);
        let masks = sample_masks(&params, &prepared, 9);
        let (_, grads) = sample_loss_and_grad(&params, &prepared, Some(&masks), 5).unwrap();
        let mut probe = params.clone();
        let f = |x: &[f64]| {
            probe.set_flat(x).unwrap();
            sample_loss(&probe, &prepared, Some(&masks), 5).unwrap()
        };
        let report = grad_check(f, &params.to_flat(), &grads.to_flat(), 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-3, "{report:?}");
    }

    #[test]
    fn early_stopping_rule() {
        let mut e = EarlyStopping::new(1);
        assert_eq!(e.observe(0, 1.0), (true, false));
        assert_eq!(e.observe(1, 0.5), (true, false));
        // plateau begins at epoch 2
        assert_eq!(e.observe(2, 0.5), (false, true));
        assert_eq!(e.best_epoch, Some(1));

        let mut e = EarlyStopping::new(3);
        let losses = [3.0, 2.0, 2.0, 2.5, 1.0, 1.0, 1.0, 1.0];
        let stop = losses.iter().enumerate().position(|(i, &l)| e.observe(i, l).1);
        assert_eq!(stop, Some(7));
        assert_eq!(e.best_epoch, Some(4));
    }

    #[test]
    fn rejects_missing_splits() {
        let mut corpus = tiny_corpus(4, 1);
        corpus.splits = vec![Split::Train; 4];
        assert!(matches!(train(&corpus, &TrainConfig::default(), None), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let corpus = tiny_corpus(12, 3);
        let config = TrainConfig {
            max_epochs: 3,
            batch_size: 4,
            architecture: small_arch(),
            seed: 5,
            ..Default::default()
        };
        let a = train(&corpus, &config, None).unwrap();
        let b = train(&corpus, &config, None).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| train(&corpus, &config, None)).unwrap();
        assert_eq!(a.params, c.params);
    }

    #[test]
    fn best_checkpoint_has_lowest_val_loss() {
        let corpus = tiny_corpus(12, 8);
        let config = TrainConfig {
            max_epochs: 6,
            batch_size: 4,
            architecture: small_arch(),
            ..Default::default()
        };
        let out = train(&corpus, &config, None).unwrap();
        let min = out.history.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(out.history.best_val_loss, min);
        let val: Vec<PreparedSample> = corpus
            .indices(Split::Val)
            .iter()
            .map(|&i| PreparedSample::new(&corpus.samples[i], &out.stats, config.adjacency).unwrap())
            .collect();
        let recomputed = mean_loss(&out.params, &val, config.sinkhorn_train_iters).unwrap();
        assert!((recomputed - min).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_initial_params() {
        let corpus = tiny_corpus(8, 2);
        let config = TrainConfig {
            max_epochs: 2,
            learning_rate: 0.0,
            architecture: small_arch(),
            ..Default::default()
        };
        let out = train(&corpus, &config, None).unwrap();
        assert_eq!(out.params, EncoderParams::init(&small_arch(), 0));
    }

    #[test]
    fn overfits_single_sample() {
        // Instance normalization puts a size-dependent floor under the loss,
        // so this needs a default-size plan rather than a tiny one.
        let mut corpus = generate_corpus(&CorpusSpec {
            count: 1,
            seed: 6,
            noise: NoiseParams::drop_only(0.0, 0.2),
            ..Default::default()
        })
        .unwrap();
        corpus.samples.push(corpus.samples[0].clone());
        corpus.splits = vec![Split::Train, Split::Val];
        let config = TrainConfig {
            max_epochs: 200,
            patience: 200,
            learning_rate: 1e-3,
            architecture: Architecture {
                mlp_dropout: 0.0,
                node_dropout: 0.0,
                attn_dropout: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = train(&corpus, &config, None).unwrap();
        let last = out.history.epochs.last().unwrap();
        assert!(last.train_loss < 0.05, "{last:?}");
        assert!(last.train_loss < out.history.epochs[0].train_loss);
    }
}
