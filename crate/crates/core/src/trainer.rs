//! Mini-batch training of the penalized ELBO with Adam.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::dataset::{DatasetBundle, Sequence};
use crate::error::{ModelError, TrainError};
use crate::latent_ode::{DEFAULT_HIDDEN, DEFAULT_STEPS_PER_FRAME};
use crate::objective::{batch_gradient, elbo, ElboBreakdown, ElboOptions, PenaltyConfig, SampleNoise};
use crate::optim::{clip_global_norm, Adam};
use crate::scalar::Scalar;
use crate::vae::{ModelConfig, VariationalModel};

pub const GRAD_CLIP: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub amortized_len: usize,
    pub gamma: f64,
    pub latent_dim: usize,
    pub steps_per_frame: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub channels: [usize; 3],
    pub field_hidden: usize,
    /// Posterior samples per validation sequence.
    pub val_mc_samples: usize,
    /// Caps the number of validation sequences scored per epoch.
    pub val_limit: Option<usize>,
}

impl TrainConfig {
    pub fn new(latent_dim: usize, epochs: usize) -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 32,
            epochs,
            amortized_len: 3,
            gamma: 1.0,
            latent_dim,
            steps_per_frame: DEFAULT_STEPS_PER_FRAME,
            seed: 0,
            checkpoint_every: 1,
            channels: [16, 32, 64],
            field_hidden: DEFAULT_HIDDEN,
            val_mc_samples: 10,
            val_limit: None,
        }
    }

    pub fn model_config(&self, resolution: usize) -> ModelConfig {
        ModelConfig {
            resolution,
            latent_dim: self.latent_dim,
            amortized_len: self.amortized_len,
            channels: self.channels,
            field_hidden: self.field_hidden,
        }
    }

    pub fn validate(&self, seq_len: usize) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.steps_per_frame == 0 || self.checkpoint_every == 0 || self.val_mc_samples == 0 {
            return bad("batch size, steps per frame, checkpoint interval and validation samples must be positive");
        }
        if self.latent_dim == 0 {
            return bad("latent dimension must be positive");
        }
        if self.amortized_len < 2 || self.amortized_len > seq_len {
            return Err(TrainError::Config(format!(
                "amortized length {} must lie in [2, {seq_len}]",
                self.amortized_len
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be non-negative");
        }
        Ok(())
    }

    pub fn penalty(&self, model: &ModelConfig) -> PenaltyConfig {
        PenaltyConfig::for_model(model, self.gamma)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean penalized ELBO over training batches.
    pub train_penalized_elbo: f64,
    pub train_elbo: f64,
    pub val: ElboBreakdown,
    pub wall_clock_secs: f64,
    pub mean_grad_norm: f64,
    pub clipped_batches: usize,
    /// L2 norm per parameter group.
    pub param_norms: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

/// Where training writes its artifacts.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainPaths {
    pub last: PathBuf,
    pub best: PathBuf,
    pub log: PathBuf,
}

impl TrainPaths {
    /// `CKPT`, `CKPT.best` and `CKPT.trainlog.jsonl`.
    pub fn for_checkpoint(ckpt: &Path) -> Self {
        let with = |suffix: &str| {
            let mut s = ckpt.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        Self { last: ckpt.to_path_buf(), best: with(".best"), log: with(".trainlog.jsonl") }
    }
}

pub struct TrainOutcome<T> {
    pub model: VariationalModel<T>,
    pub best_model: VariationalModel<T>,
    pub best_epoch: Option<usize>,
    pub log: TrainLog,
}

fn param_norms<T: Scalar>(model: &VariationalModel<T>) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for p in &model.params {
        let group = if p.name.starts_with("q_w.") { p.name.clone() } else { p.name.split('.').next().unwrap().to_string() };
        let sq: f64 = p.data.iter().map(|x| x.to_f64_lossy().powi(2)).sum();
        *out.entry(group).or_insert(0.0) += sq;
    }
    out.values_mut().for_each(|v| *v = v.sqrt());
    out
}

/// Mean ELBO breakdown over `seqs` with a fixed noise stream.
pub fn evaluate_split<T: Scalar>(
    model: &VariationalModel<T>,
    seqs: &[Sequence],
    opts: &ElboOptions,
    seed: u64,
) -> Result<ElboBreakdown, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parts = seqs
        .iter()
        .map(|s| elbo(model, &s.frames, &mut rng, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ElboBreakdown::mean(&parts))
}

pub fn train<T: Scalar>(
    dataset: &DatasetBundle,
    config: &TrainConfig,
    out: Option<&TrainPaths>,
) -> Result<TrainOutcome<T>, TrainError> {
    train_with_progress(dataset, config, out, |_| {})
}

/// Trains from a fresh initialization. Calls `progress` after each epoch.
pub fn train_with_progress<T: Scalar>(
    dataset: &DatasetBundle,
    config: &TrainConfig,
    out: Option<&TrainPaths>,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>, TrainError> {
    config.validate(dataset.manifest.seq_len)?;
    if dataset.train.is_empty() {
        return Err(TrainError::Config("training split is empty".into()));
    }
    let model_cfg = config.model_config(dataset.manifest.resolution);
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = VariationalModel::<T>::init(model_cfg.clone(), &mut init_rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let penalty = config.penalty(&model_cfg);
    let train_opts = ElboOptions { mc_samples: 1, steps_per_frame: config.steps_per_frame, penalty };
    let val_opts = ElboOptions { mc_samples: config.val_mc_samples, ..train_opts };
    let val_seqs = &dataset.val[..config.val_limit.unwrap_or(usize::MAX).min(dataset.val.len())];
    let val_seed = config.seed ^ 0x0005_eed0_f7a1;

    let mut adam = Adam::new(config.learning_rate, &model.params);
    let mut log = TrainLog::default();
    let mut best_model = model.clone();
    let mut best: Option<(usize, f64)> = None;
    let mut last_good: Option<PathBuf> = None;
    if let Some(p) = out {
        save_checkpoint(&model, &p.last)?;
        last_good = Some(p.last.clone());
        write_log(&p.log, &log)?;
    }

    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut batches = 0usize;
        let (mut sum_pen, mut sum_total, mut sum_norm) = (0.0, 0.0, 0.0);
        let mut clipped = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let frames: Vec<&[crate::dataset::Frame]> = chunk.iter().map(|&i| dataset.train[i].frames.as_slice()).collect();
            let noise: Vec<Vec<SampleNoise<T>>> = chunk.iter().map(|_| vec![SampleNoise::draw(&model_cfg, &mut rng)]).collect();
            let diverged = || TrainError::Diverged { epoch, batch: b, last_good: last_good.clone() };
            let (br, mut grads) = match batch_gradient(&model, &frames, &noise, &train_opts) {
                Ok(r) => r,
                Err(ModelError::Diverged { .. }) => return Err(diverged()),
                Err(e) => return Err(e.into()),
            };
            if !br.penalized_total.is_finite() {
                return Err(diverged());
            }
            grads.iter_mut().flat_map(|g| g.iter_mut()).for_each(|x| *x = -*x);
            let norm = clip_global_norm(&mut grads, GRAD_CLIP);
            if !norm.is_finite() {
                return Err(diverged());
            }
            if norm > GRAD_CLIP {
                clipped += 1;
            }
            adam.step(&mut model.params, &grads);
            sum_pen += br.penalized_total;
            sum_total += br.total;
            sum_norm += norm;
            batches += 1;
        }
        let val = if val_seqs.is_empty() {
            ElboBreakdown::default()
        } else {
            match evaluate_split(&model, val_seqs, &val_opts, val_seed) {
                Ok(v) => v,
                Err(ModelError::Diverged { .. }) => {
                    return Err(TrainError::Diverged { epoch, batch: batches, last_good: last_good.clone() })
                }
                Err(e) => return Err(e.into()),
            }
        };
        let record = EpochRecord {
            epoch,
            train_penalized_elbo: sum_pen / batches as f64,
            train_elbo: sum_total / batches as f64,
            val,
            wall_clock_secs: started.elapsed().as_secs_f64(),
            mean_grad_norm: sum_norm / batches as f64,
            clipped_batches: clipped,
            param_norms: param_norms(&model),
        };
        let score = if val_seqs.is_empty() { record.train_penalized_elbo } else { record.val.penalized_total };
        let improved = best.is_none_or(|(_, s)| score > s);
        if improved {
            best = Some((epoch, score));
            best_model = model.clone();
        }
        progress(&record);
        log.epochs.push(record);
        if let Some(p) = out {
            if improved {
                save_checkpoint(&model, &p.best)?;
            }
            if epoch % config.checkpoint_every == 0 || epoch == config.epochs {
                save_checkpoint(&model, &p.last)?;
                last_good = Some(p.last.clone());
            }
            write_log(&p.log, &log)?;
        }
    }
    if let Some(p) = out {
        if best.is_none() {
            save_checkpoint(&model, &p.best)?;
        }
    }
    Ok(TrainOutcome { model, best_model, best_epoch: best.map(|(e, _)| e), log })
}

fn write_log(path: &Path, log: &TrainLog) -> Result<(), TrainError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(log.to_jsonl().as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_dataset, DatasetKind, SplitCounts};
    use crate::sim::BallWorldConfig;

    fn tiny_dataset() -> DatasetBundle {
        let mut cfg = BallWorldConfig::with_balls(1);
        cfg.seq_len = 5;
        build_dataset(DatasetKind::Bouncing(cfg), SplitCounts { train: 6, val: 2, test: 2 }, 3, 8).unwrap()
    }

    fn tiny_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            batch_size: 3,
            channels: [2, 2, 4],
            field_hidden: 6,
            steps_per_frame: 2,
            val_mc_samples: 2,
            seed: 11,
            ..TrainConfig::new(2, epochs)
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = tiny_dataset();
        let cfg = tiny_config(0);
        let outcome = train::<f64>(&data, &cfg, None).unwrap();
        let init = VariationalModel::<f64>::init(cfg.model_config(8), &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
        assert_eq!(outcome.model, init);
        assert!(outcome.log.epochs.is_empty());
    }

    #[test]
    fn same_seed_same_first_epoch() {
        let data = tiny_dataset();
        let cfg = tiny_config(1);
        let a = train::<f64>(&data, &cfg, None).unwrap();
        let b = train::<f64>(&data, &cfg, None).unwrap();
        assert!((a.log.epochs[0].train_penalized_elbo - b.log.epochs[0].train_penalized_elbo).abs() < 1e-6);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn writes_checkpoints_and_one_log_line_per_epoch() {
        let data = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        let paths = TrainPaths::for_checkpoint(&dir.path().join("model.ckpt"));
        let outcome = train::<f32>(&data, &tiny_config(2), Some(&paths)).unwrap();
        let last: VariationalModel<f32> = crate::checkpoint::load_checkpoint(&paths.last).unwrap();
        assert_eq!(last, outcome.model);
        let best: VariationalModel<f32> = crate::checkpoint::load_checkpoint(&paths.best).unwrap();
        assert_eq!(best, outcome.best_model);
        let text = fs::read_to_string(&paths.log).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn small_step_does_not_increase_batch_loss() {
        let data = tiny_dataset();
        let cfg = tiny_config(0);
        let model_cfg = cfg.model_config(8);
        let mut model = VariationalModel::<f64>::init(model_cfg.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let frames: Vec<&[crate::dataset::Frame]> = data.train[..3].iter().map(|s| s.frames.as_slice()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise: Vec<Vec<SampleNoise<f64>>> = (0..3).map(|_| vec![SampleNoise::draw(&model_cfg, &mut rng)]).collect();
        let opts = ElboOptions { mc_samples: 1, steps_per_frame: 2, penalty: cfg.penalty(&model_cfg) };
        let (before, grads) = batch_gradient(&model, &frames, &noise, &opts).unwrap();
        let step = 1e-5;
        for (p, g) in model.params.iter_mut().zip(&grads) {
            p.data.iter_mut().zip(g).for_each(|(x, gx)| *x += step * gx);
        }
        let (after, _) = batch_gradient(&model, &frames, &noise, &opts).unwrap();
        assert!(after.penalized_total >= before.penalized_total);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let data = tiny_dataset();
        let mut cfg = tiny_config(1);
        cfg.amortized_len = 9;
        assert!(matches!(train::<f64>(&data, &cfg, None), Err(TrainError::Config(_))));
    }
}
