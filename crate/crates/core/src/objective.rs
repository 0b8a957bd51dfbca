//! Evidence lower bound and its penalized training variant.
//!
//! One posterior sample draws `z₀ ~ q_enc(z₀ | x₀:m)` and `W ~ q(W)`, rolls the
//! latent ODE forward while tracking `log q_ode(z_i)`, decodes every latent
//! position and scores each frame. The per-sample quantities are kept on the
//! tape so the same pass serves the ELBO, its gradient and the importance
//! weights used for the marginal likelihood.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::dataset::Frame;
use crate::error::ModelError;
use crate::latent_ode::{frame_grid, integrate_on_tape, FieldVars, DEFAULT_STEPS_PER_FRAME};
use crate::scalar::Scalar;
use crate::vae::{frames_tensor, standard_normal_log_density, DiagonalGaussian, ModelConfig, ModelVars, VariationalModel};

/// `KL[q ‖ p]` between diagonal Gaussians.
pub fn kl_diag_gaussian<T: Scalar>(q: &DiagonalGaussian<T>, p: &DiagonalGaussian<T>) -> Result<T, ModelError> {
    if q.dim() != p.dim() {
        return Err(ModelError::Dimension(format!("KL between dimensions {} and {}", q.dim(), p.dim())));
    }
    let half = T::of(0.5);
    Ok((0..q.dim())
        .map(|i| {
            let (mq, lq, mp, lp) = (q.mean[i], q.log_std[i], p.mean[i], p.log_std[i]);
            let vp = (lp + lp).exp();
            let d = mq - mp;
            lp - lq + ((lq + lq).exp() + d * d) / (vp + vp) - half
        })
        .sum())
}

/// `KL[q ‖ N(0, I)]` on a tape.
fn kl_to_standard<'t, T: Scalar>(mean: Var<'t, T>, log_std: Var<'t, T>) -> Var<'t, T> {
    let n = mean.len();
    let quad = (log_std.scale(T::of(2.0)).exp() + mean.square()).sum().scale(T::of(0.5));
    (quad - log_std.sum()).offset(T::of(-0.5 * n as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub beta_w: f64,
    pub gamma: f64,
}

impl PenaltyConfig {
    /// `β_W = a / |W|` for `config`.
    pub fn for_model(config: &ModelConfig, gamma: f64) -> Self {
        Self { beta_w: config.default_beta_w(), gamma }
    }

    /// Plain ELBO weights.
    pub fn unpenalized() -> Self {
        Self { beta_w: 1.0, gamma: 0.0 }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.beta_w > 0.0 && self.beta_w.is_finite()) {
            return Err(ModelError::Config(format!("beta_w must be positive, got {}", self.beta_w)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(ModelError::Config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// ELBO parts for one sequence, averaged over posterior samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboBreakdown {
    /// `-KL[q(W) ‖ p(W)]`.
    pub ode_regularization: f64,
    pub vae_loss: f64,
    pub dynamic_loss: f64,
    pub total: f64,
    pub penalized_total: f64,
    /// Single-sample `KL[q_ode ‖ q_enc]` estimate; `None` when `γ = 0`.
    pub gamma_kl: Option<f64>,
    /// Frames whose encoder window ran past the sequence end and reused the last full one.
    pub reused_windows: usize,
}

impl ElboBreakdown {
    fn accumulate(&mut self, other: &ElboBreakdown) {
        self.ode_regularization += other.ode_regularization;
        self.vae_loss += other.vae_loss;
        self.dynamic_loss += other.dynamic_loss;
        self.penalized_total += other.penalized_total;
        self.gamma_kl = match (self.gamma_kl, other.gamma_kl) {
            (Some(a), Some(b)) => Some(a + b),
            (None, b) => b,
            (a, None) => a,
        };
        self.reused_windows = self.reused_windows.max(other.reused_windows);
    }

    fn scaled(mut self, c: f64) -> Self {
        self.ode_regularization *= c;
        self.vae_loss *= c;
        self.dynamic_loss *= c;
        self.penalized_total *= c;
        self.gamma_kl = self.gamma_kl.map(|g| g * c);
        self.total = self.ode_regularization + self.vae_loss + self.dynamic_loss;
        self
    }

    /// Mean over a non-empty list.
    pub fn mean(items: &[ElboBreakdown]) -> Self {
        let mut acc = ElboBreakdown::default();
        for b in items {
            acc.accumulate(b);
        }
        acc.scaled(1.0 / items.len().max(1) as f64)
    }
}

/// Standard-normal draws for one posterior sample: `z₀` noise first, then `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleNoise<T> {
    pub z0: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> SampleNoise<T> {
    pub fn draw<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let mut normal = || -> T {
            let e: f64 = StandardNormal.sample(rng);
            T::of(e)
        };
        let z0 = (0..2 * config.latent_dim).map(|_| normal()).collect();
        let weights = (0..config.field().param_count()).map(|_| normal()).collect();
        Self { z0, weights }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        Self { z0: vec![T::zero(); 2 * config.latent_dim], weights: vec![T::zero(); config.field().param_count()] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    pub steps_per_frame: usize,
    /// Evaluate the encoders on every frame window (needed for the `γ` term).
    pub encoder_windows: bool,
    pub record_accels: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self { steps_per_frame: DEFAULT_STEPS_PER_FRAME, encoder_windows: false, record_accels: false }
    }
}

/// Everything one posterior sample produces, on the tape.
pub struct SampleForward<'t, T: Scalar> {
    pub s: Vec<Var<'t, T>>,
    pub v: Vec<Var<'t, T>>,
    pub accels: Vec<Var<'t, T>>,
    /// `[T, 1, r, r]` decoder logits.
    pub logits: Var<'t, T>,
    pub log_lik: Vec<Var<'t, T>>,
    /// `log q(z_i)`: encoder density at `i = 0`, ODE flow density after.
    pub log_q: Vec<Var<'t, T>>,
    pub log_prior: Vec<Var<'t, T>>,
    pub kl_w: Var<'t, T>,
    pub log_q_w: Var<'t, T>,
    pub log_p_w: Var<'t, T>,
    /// `log q_enc_i(z_i)` for `i ≥ 1`, present with encoder windows.
    pub log_q_enc: Vec<Var<'t, T>>,
    pub reused_windows: usize,
}

pub fn forward_sample<'t, T: Scalar>(
    vars: &ModelVars<'t, T>,
    frames: &[Frame],
    noise: &SampleNoise<T>,
    opts: &ForwardOptions,
) -> Result<SampleForward<'t, T>, ModelError> {
    let cfg = &vars.config;
    let (a, m, r) = (cfg.latent_dim, cfg.amortized_len, cfg.resolution);
    let n = frames.len();
    if n < m {
        return Err(ModelError::Dimension(format!("sequence of {n} frames is shorter than m = {m}")));
    }
    if noise.z0.len() != 2 * a || noise.weights.len() != cfg.field().param_count() {
        return Err(ModelError::Dimension("noise does not match the model".into()));
    }
    let tape = vars.get("q_w.mean").tape();

    let pos_rows = if opts.encoder_windows { n } else { 1 };
    let vel_rows = if opts.encoder_windows { n - m + 1 } else { 1 };
    let pos_in: Vec<&Frame> = frames[..pos_rows].iter().collect();
    let vel_in: Vec<&Frame> = (0..vel_rows).flat_map(|j| frames[j..j + m].iter()).collect();
    let pos = vars.encode("pos_enc", frames_tensor(tape, &pos_in, 1, r)?);
    let vel = vars.encode("vel_enc", frames_tensor(tape, &vel_in, m, r)?);

    let (s0, lq_s) = pos.row(0).sample(&noise.z0[..a]);
    let (v0, lq_v) = vel.row(0).sample(&noise.z0[a..]);
    let log_q0 = lq_s + lq_v;

    let q_w = vars.weight_posterior();
    let (w, log_q_w) = q_w.sample(&noise.weights);
    let log_p_w = standard_normal_log_density(w);
    let kl_w = kl_to_standard(q_w.mean, q_w.log_std);
    let field = FieldVars::from_flat(tape, w, cfg.field())?;
    let traj = integrate_on_tape(&field, s0, v0, log_q0, &frame_grid::<T>(n), opts.steps_per_frame, opts.record_accels)?;

    let positions = tape.concat(&traj.s).reshape(&[n, a]);
    let logits = vars.decode_logits(positions);
    let plane = r * r;
    let log_lik = (0..n)
        .map(|i| {
            let target: Vec<T> = frames[i].pixels.iter().map(|&p| T::of(p as f64)).collect();
            tape.bernoulli_log_likelihood(logits.slice(i * plane, plane), &target)
        })
        .collect();
    let log_prior = (0..n)
        .map(|i| standard_normal_log_density(traj.s[i]) + standard_normal_log_density(traj.v[i]))
        .collect();

    let mut log_q_enc = Vec::new();
    let mut reused_windows = 0;
    if opts.encoder_windows {
        for i in 1..n {
            let j = i.min(n - m);
            if j < i {
                reused_windows += 1;
            }
            log_q_enc.push(pos.row(i).log_density(traj.s[i]) + vel.row(j).log_density(traj.v[i]));
        }
    }

    Ok(SampleForward {
        s: traj.s,
        v: traj.v,
        accels: traj.accels,
        logits,
        log_lik,
        log_q: traj.log_q,
        log_prior,
        kl_w,
        log_q_w,
        log_p_w,
        log_q_enc,
        reused_windows,
    })
}

impl<'t, T: Scalar> SampleForward<'t, T> {
    /// Penalized ELBO of this sample on the tape, with its breakdown.
    pub fn objective(&self, penalty: &PenaltyConfig) -> (Var<'t, T>, ElboBreakdown) {
        let vae = self.log_lik[0] - self.log_q[0] + self.log_prior[0];
        let mut dynamic = self.kl_w.scale(T::zero());
        for i in 1..self.log_q.len() {
            dynamic = dynamic + self.log_lik[i] - self.log_q[i] + self.log_prior[i];
        }
        let mut penalized = self.kl_w.scale(T::of(-penalty.beta_w)) + vae + dynamic;
        let mut gamma_kl = None;
        if !self.log_q_enc.is_empty() {
            let mut g = self.kl_w.scale(T::zero());
            for (i, &lq_enc) in self.log_q_enc.iter().enumerate() {
                g = g + self.log_q[i + 1] - lq_enc;
            }
            gamma_kl = Some(g.item().to_f64_lossy());
            if penalty.gamma != 0.0 {
                penalized = penalized - g.scale(T::of(penalty.gamma));
            }
        }
        let ode_regularization = -self.kl_w.item().to_f64_lossy();
        let vae_loss = vae.item().to_f64_lossy();
        let dynamic_loss = dynamic.item().to_f64_lossy();
        let breakdown = ElboBreakdown {
            ode_regularization,
            vae_loss,
            dynamic_loss,
            total: ode_regularization + vae_loss + dynamic_loss,
            penalized_total: penalized.item().to_f64_lossy(),
            gamma_kl,
            reused_windows: self.reused_windows,
        };
        (penalized, breakdown)
    }

    /// `log p(X | W, z₀) + log p(W) + log p(z₀) − log q(W) − log q(z₀ | X)`.
    pub fn log_importance_weight(&self) -> T {
        let ll: T = self.log_lik.iter().map(|v| v.item()).sum();
        ll + self.log_p_w.item() + self.log_prior[0].item() - self.log_q_w.item() - self.log_q[0].item()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboOptions {
    pub mc_samples: usize,
    pub steps_per_frame: usize,
    pub penalty: PenaltyConfig,
}

impl ElboOptions {
    pub fn new(penalty: PenaltyConfig) -> Self {
        Self { mc_samples: 1, steps_per_frame: DEFAULT_STEPS_PER_FRAME, penalty }
    }

    fn forward(&self) -> ForwardOptions {
        ForwardOptions { steps_per_frame: self.steps_per_frame, encoder_windows: self.penalty.gamma > 0.0, record_accels: false }
    }
}

/// ELBO breakdown with explicit noise, one entry per posterior sample.
pub fn elbo_with_noise<T: Scalar>(
    model: &VariationalModel<T>,
    frames: &[Frame],
    noise: &[SampleNoise<T>],
    opts: &ElboOptions,
) -> Result<ElboBreakdown, ModelError> {
    opts.penalty.validate()?;
    if noise.is_empty() {
        return Err(ModelError::Config("at least one posterior sample is required".into()));
    }
    let tape = Tape::new();
    let vars = model.bind(&tape, false);
    let parts = noise
        .iter()
        .map(|nz| Ok(forward_sample(&vars, frames, nz, &opts.forward())?.objective(&opts.penalty).1))
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(ElboBreakdown::mean(&parts))
}

pub fn elbo<T: Scalar, R: Rng + ?Sized>(
    model: &VariationalModel<T>,
    frames: &[Frame],
    rng: &mut R,
    opts: &ElboOptions,
) -> Result<ElboBreakdown, ModelError> {
    if opts.mc_samples == 0 {
        return Err(ModelError::Config("mc_samples must be at least 1".into()));
    }
    let noise: Vec<SampleNoise<T>> = (0..opts.mc_samples).map(|_| SampleNoise::draw(&model.config, rng)).collect();
    elbo_with_noise(model, frames, &noise, opts)
}

pub fn penalized_elbo<T: Scalar, R: Rng + ?Sized>(
    model: &VariationalModel<T>,
    frames: &[Frame],
    rng: &mut R,
    opts: &ElboOptions,
) -> Result<f64, ModelError> {
    Ok(elbo(model, frames, rng, opts)?.penalized_total)
}

/// Mean penalized ELBO over a batch and its gradient with respect to every
/// parameter tensor (ascent direction). `noise[b]` holds the posterior samples
/// for sequence `b`.
pub fn batch_gradient<T: Scalar>(
    model: &VariationalModel<T>,
    batch: &[&[Frame]],
    noise: &[Vec<SampleNoise<T>>],
    opts: &ElboOptions,
) -> Result<(ElboBreakdown, Vec<Vec<T>>), ModelError> {
    opts.penalty.validate()?;
    if batch.is_empty() || batch.len() != noise.len() || noise.iter().any(|n| n.is_empty()) {
        return Err(ModelError::Config("batch and noise must be non-empty and aligned".into()));
    }
    let tape = Tape::new();
    let vars = model.bind(&tape, true);
    let mut root: Option<Var<'_, T>> = None;
    let mut parts = Vec::with_capacity(batch.len());
    for (frames, nz) in batch.iter().zip(noise) {
        let weight = T::one() / T::of((batch.len() * nz.len()) as f64);
        let mut per_seq = Vec::with_capacity(nz.len());
        for sample in nz {
            let (obj, br) = forward_sample(&vars, frames, sample, &opts.forward())?.objective(&opts.penalty);
            let term = obj.scale(weight);
            root = Some(match root {
                Some(r) => r + term,
                None => term,
            });
            per_seq.push(br);
        }
        parts.push(ElboBreakdown::mean(&per_seq));
    }
    let grads = tape.backward(root.expect("non-empty batch"));
    let out = vars.vars.iter().map(|&v| grads.get_or_zero(v)).collect();
    Ok((ElboBreakdown::mean(&parts), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::rasterize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_config() -> ModelConfig {
        ModelConfig { resolution: 8, latent_dim: 2, amortized_len: 3, channels: [2, 3, 4], field_hidden: 4 }
    }

    fn toy_frames(n: usize) -> Vec<Frame> {
        (0..n).map(|i| rasterize(&[[3.0 + 0.6 * i as f64, 5.0 - 0.4 * i as f64]], &[1.5], 10.0, 8)).collect()
    }

    fn toy_model(seed: u64) -> VariationalModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = VariationalModel::init(toy_config(), &mut rng).unwrap();
        // Nonzero biases keep ReLU pre-activations off the kink at 0.
        for p in model.params.iter_mut().filter(|p| p.name.ends_with(".b")) {
            p.data.iter_mut().for_each(|x| *x += rng.random_range(-0.2..0.2));
        }
        model.param_mut("q_w.log_std").unwrap().data.iter_mut().for_each(|x| *x = -1.0);
        model
    }

    #[test]
    fn kl_examples() {
        let p = DiagonalGaussian::<f64>::standard(1);
        assert_eq!(kl_diag_gaussian(&p, &p).unwrap(), 0.0);
        let q = DiagonalGaussian::new(vec![1.0], vec![0.0]).unwrap();
        assert!((kl_diag_gaussian(&q, &p).unwrap() - 0.5).abs() < 1e-15);
        let q = DiagonalGaussian::new(vec![0.0], vec![1.0]).unwrap();
        let e2 = std::f64::consts::E.powi(2);
        assert!((kl_diag_gaussian(&q, &p).unwrap() - (e2 - 3.0) / 2.0).abs() < 1e-12);
        assert!(kl_diag_gaussian(&q, &DiagonalGaussian::standard(2)).is_err());
    }

    #[test]
    fn kl_is_non_negative_and_zero_only_at_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let d = rng.random_range(1..6);
            let mut g = || DiagonalGaussian::<f64>::new(
                (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                (0..d).map(|_| rng.random_range(-1.5..1.5)).collect(),
            )
            .unwrap();
            let (q, p) = (g(), g());
            assert!(kl_diag_gaussian(&q, &p).unwrap() > 0.0);
            assert!(kl_diag_gaussian(&q, &q).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn default_beta_is_latent_over_weight_count() {
        let p = PenaltyConfig { beta_w: 3.0 / 5000.0, gamma: 1.0 };
        assert!((p.beta_w - 0.0006).abs() < 1e-15);
        let cfg = toy_config();
        let pc = PenaltyConfig::for_model(&cfg, 1.0);
        assert!((pc.beta_w - 2.0 / cfg.field().param_count() as f64).abs() < 1e-15);
        assert!(PenaltyConfig { beta_w: 0.0, gamma: 1.0 }.validate().is_err());
    }

    #[test]
    fn prior_matching_weight_posterior_has_zero_regularization() {
        let mut model = toy_model(2);
        model.param_mut("q_w.mean").unwrap().data.iter_mut().for_each(|x| *x = 0.0);
        model.param_mut("q_w.log_std").unwrap().data.iter_mut().for_each(|x| *x = 0.0);
        // Zero noise keeps W at the prior mean, so the rollout stays tame.
        let frames = toy_frames(4);
        let noise = vec![SampleNoise::zeros(&model.config)];
        let br = elbo_with_noise(&model, &frames, &noise, &ElboOptions::new(PenaltyConfig::unpenalized())).unwrap();
        assert_eq!(br.ode_regularization, 0.0);
    }

    #[test]
    fn breakdown_identity_and_reduction() {
        let model = toy_model(3);
        let frames = toy_frames(5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise: Vec<SampleNoise<f64>> = (0..3).map(|_| SampleNoise::draw(&model.config, &mut rng)).collect();
        let plain = elbo_with_noise(&model, &frames, &noise, &ElboOptions::new(PenaltyConfig::unpenalized())).unwrap();
        assert!((plain.total - (plain.ode_regularization + plain.vae_loss + plain.dynamic_loss)).abs() < 1e-8);
        assert!((plain.penalized_total - plain.total).abs() < 1e-8);
        assert!(plain.gamma_kl.is_none());
        let pen = PenaltyConfig::for_model(&model.config, 1.0);
        let br = elbo_with_noise(&model, &frames, &noise, &ElboOptions::new(pen)).unwrap();
        assert!((br.total - plain.total).abs() < 1e-8);
        let expected = pen.beta_w * plain.ode_regularization + plain.vae_loss + plain.dynamic_loss - br.gamma_kl.unwrap();
        assert!((br.penalized_total - expected).abs() < 1e-8);
        assert_eq!(br.reused_windows, 2);
    }

    #[test]
    fn gamma_term_vanishes_when_encoder_equals_flow_density() {
        // Constant encoders, zero field and a velocity posterior collapsed at 0:
        // the flow density at z_i equals the encoder density at z_i.
        let cfg = toy_config();
        let mut model = VariationalModel::<f64>::zeros(cfg.clone()).unwrap();
        model.param_mut("pos_enc.mean.b").unwrap().data = vec![0.4, -0.3];
        model.param_mut("pos_enc.log_std.b").unwrap().data = vec![-0.5, 0.2];
        model.param_mut("vel_enc.log_std.b").unwrap().data = vec![-30.0, -30.0];
        model.param_mut("q_w.log_std").unwrap().data.iter_mut().for_each(|x| *x = -300.0);
        let frames = toy_frames(6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = vec![SampleNoise::draw(&cfg, &mut rng)];
        let br = elbo_with_noise(&model, &frames, &noise, &ElboOptions::new(PenaltyConfig::for_model(&cfg, 1.0))).unwrap();
        assert!(br.gamma_kl.unwrap().abs() < 1e-8, "{:?}", br.gamma_kl);
    }

    #[test]
    fn gradient_matches_finite_differences_on_sampled_entries() {
        let model = toy_model(6);
        let frames = toy_frames(4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = vec![vec![SampleNoise::draw(&model.config, &mut rng)]];
        let opts = ElboOptions { mc_samples: 1, steps_per_frame: 4, penalty: PenaltyConfig::for_model(&model.config, 1.0) };
        let (_, grads) = batch_gradient(&model, &[&frames], &noise, &opts).unwrap();
        let h = 1e-6;
        for (pi, p) in model.params.iter().enumerate() {
            for k in [0, p.data.len() / 2, p.data.len() - 1] {
                let eval = |delta: f64| {
                    let mut m = model.clone();
                    m.params[pi].data[k] += delta;
                    elbo_with_noise(&m, &frames, &noise[0], &opts).unwrap().penalized_total
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let g = grads[pi][k];
                assert!((fd - g).abs() <= 1e-4 * fd.abs().max(g.abs()) + 1e-6, "{} [{k}]: fd {fd} vs {g}", p.name);
            }
        }
    }

    #[test]
    fn same_noise_gives_same_elbo_and_mc_average_is_stable() {
        let model = toy_model(8);
        let frames = toy_frames(4);
        let opts = ElboOptions { mc_samples: 2, steps_per_frame: 4, penalty: PenaltyConfig::unpenalized() };
        let a = elbo(&model, &frames, &mut ChaCha8Rng::seed_from_u64(1), &opts).unwrap();
        let b = elbo(&model, &frames, &mut ChaCha8Rng::seed_from_u64(1), &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.total.is_finite());
        assert!(elbo(&model, &toy_frames(2), &mut ChaCha8Rng::seed_from_u64(1), &opts).is_err());
    }
}
