//! Encoders, decoder and weight posterior.
//!
//! The position encoder maps the first frame to a diagonal Gaussian over
//! `s₀`; the velocity encoder stacks the first `m` frames as channels and maps
//! them to a diagonal Gaussian over `v₀`. Both are three stride-2 convolutions
//! with ReLU followed by linear heads for the mean and the log standard
//! deviation. The decoder mirrors the position encoder with transposed
//! convolutions and emits Bernoulli logits per pixel.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Tape, Var};
use crate::dataset::Frame;
use crate::error::ModelError;
use crate::latent_ode::{FieldArchitecture, DEFAULT_HIDDEN};
use crate::scalar::Scalar;

pub const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PAD: usize = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub resolution: usize,
    pub latent_dim: usize,
    pub amortized_len: usize,
    /// Channels of the three convolution blocks.
    pub channels: [usize; 3],
    pub field_hidden: usize,
}

impl ModelConfig {
    pub fn new(latent_dim: usize) -> Self {
        Self {
            resolution: 32,
            latent_dim,
            amortized_len: 3,
            channels: [16, 32, 64],
            field_hidden: DEFAULT_HIDDEN,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.latent_dim == 0 {
            return Err(ModelError::Config("latent_dim must be at least 1".into()));
        }
        if self.amortized_len < 2 {
            return Err(ModelError::Config("amortized_len must be at least 2".into()));
        }
        if self.resolution < 8 || self.resolution % 8 != 0 {
            return Err(ModelError::Config("resolution must be a positive multiple of 8".into()));
        }
        if self.channels.contains(&0) || self.field_hidden == 0 {
            return Err(ModelError::Config("channel counts and hidden width must be positive".into()));
        }
        Ok(())
    }

    pub fn field(&self) -> FieldArchitecture {
        FieldArchitecture::new(self.latent_dim, self.field_hidden)
    }

    /// Spatial side of the innermost feature map.
    pub fn bottleneck_side(&self) -> usize {
        self.resolution / 8
    }

    pub fn bottleneck_len(&self) -> usize {
        self.channels[2] * self.bottleneck_side().pow(2)
    }

    /// Parameter count of an encoder with `in_channels` input channels.
    pub fn encoder_param_count(&self, in_channels: usize) -> usize {
        let [c0, c1, c2] = self.channels;
        let k2 = KERNEL * KERNEL;
        (c0 * in_channels * k2 + c0) + (c1 * c0 * k2 + c1) + (c2 * c1 * k2 + c2) + 2 * (self.latent_dim * self.bottleneck_len() + self.latent_dim)
    }

    pub fn decoder_param_count(&self) -> usize {
        let [c0, c1, c2] = self.channels;
        let k2 = KERNEL * KERNEL;
        (self.bottleneck_len() * self.latent_dim + self.bottleneck_len()) + (c2 * c1 * k2 + c1) + (c1 * c0 * k2 + c0) + (c0 * k2 + 1)
    }

    /// Weight penalty ratio `a / |W|`.
    pub fn default_beta_w(&self) -> f64 {
        self.latent_dim as f64 / self.field().param_count() as f64
    }

    /// Named parameter shapes in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let [c0, c1, c2] = self.channels;
        let (a, k) = (self.latent_dim, KERNEL);
        let mut out = Vec::new();
        for (prefix, cin) in [("pos_enc", 1), ("vel_enc", self.amortized_len)] {
            out.push((format!("{prefix}.conv0.w"), vec![c0, cin, k, k]));
            out.push((format!("{prefix}.conv0.b"), vec![c0]));
            out.push((format!("{prefix}.conv1.w"), vec![c1, c0, k, k]));
            out.push((format!("{prefix}.conv1.b"), vec![c1]));
            out.push((format!("{prefix}.conv2.w"), vec![c2, c1, k, k]));
            out.push((format!("{prefix}.conv2.b"), vec![c2]));
            out.push((format!("{prefix}.mean.w"), vec![a, self.bottleneck_len()]));
            out.push((format!("{prefix}.mean.b"), vec![a]));
            out.push((format!("{prefix}.log_std.w"), vec![a, self.bottleneck_len()]));
            out.push((format!("{prefix}.log_std.b"), vec![a]));
        }
        out.push(("dec.head.w".into(), vec![self.bottleneck_len(), a]));
        out.push(("dec.head.b".into(), vec![self.bottleneck_len()]));
        out.push(("dec.deconv0.w".into(), vec![c2, c1, k, k]));
        out.push(("dec.deconv0.b".into(), vec![c1]));
        out.push(("dec.deconv1.w".into(), vec![c1, c0, k, k]));
        out.push(("dec.deconv1.b".into(), vec![c0]));
        out.push(("dec.deconv2.w".into(), vec![c0, 1, k, k]));
        out.push(("dec.deconv2.b".into(), vec![1]));
        let w = self.field().param_count();
        out.push(("q_w.mean".into(), vec![w]));
        out.push(("q_w.log_std".into(), vec![w]));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalGaussian<T> {
    pub mean: Vec<T>,
    pub log_std: Vec<T>,
}

impl<T: Scalar> DiagonalGaussian<T> {
    pub fn new(mean: Vec<T>, log_std: Vec<T>) -> Result<Self, ModelError> {
        if mean.len() != log_std.len() {
            return Err(ModelError::Dimension(format!(
                "mean has {} entries, log_std {}",
                mean.len(),
                log_std.len()
            )));
        }
        Ok(Self { mean, log_std })
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![T::zero(); dim], log_std: vec![T::zero(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<T> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    pub fn log_density(&self, x: &[T]) -> T {
        let half_log_2pi = T::of(0.5 * (2.0 * std::f64::consts::PI).ln());
        self.mean
            .iter()
            .zip(&self.log_std)
            .zip(x)
            .map(|((&m, &ls), &xi)| {
                let z = (xi - m) / ls.exp();
                -ls - T::of(0.5) * z * z - half_log_2pi
            })
            .sum()
    }

    /// Block-diagonal concatenation.
    pub fn concat(&self, other: &Self) -> Self {
        let mut mean = self.mean.clone();
        mean.extend_from_slice(&other.mean);
        let mut log_std = self.log_std.clone();
        log_std.extend_from_slice(&other.log_std);
        Self { mean, log_std }
    }
}

/// Reparameterized draw `mean + std ⊙ ε` and its log-density.
pub fn sample_gaussian<T: Scalar, R: Rng + ?Sized>(g: &DiagonalGaussian<T>, rng: &mut R) -> (Vec<T>, T) {
    let eps: Vec<T> = (0..g.dim()).map(|_| T::of(StandardNormal.sample(rng))).collect();
    let x: Vec<T> = g
        .mean
        .iter()
        .zip(&g.log_std)
        .zip(&eps)
        .map(|((&m, &ls), &e)| m + ls.exp() * e)
        .collect();
    let lp = g.log_density(&x);
    (x, lp)
}

/// `Σ x log p + (1 − x) log(1 − p)` over pixels.
pub fn bernoulli_log_likelihood<T: Scalar>(x: &[T], p: &[T]) -> T {
    x.iter()
        .zip(p)
        .map(|(&xi, &pi)| xi * pi.ln() + (T::one() - xi) * (T::one() - pi).ln())
        .sum()
}

/// Diagonal Gaussian whose mean and log-std live on a tape as `[rows, a]`.
#[derive(Clone, Copy)]
pub struct GaussianVars<'t, T: Scalar> {
    pub mean: Var<'t, T>,
    pub log_std: Var<'t, T>,
}

impl<'t, T: Scalar> GaussianVars<'t, T> {
    /// Row `i` as `[1, a]` vars.
    pub fn row(&self, i: usize) -> Self {
        let a = *self.mean.shape().last().unwrap();
        Self {
            mean: self.mean.slice(i * a, a).reshape(&[1, a]),
            log_std: self.log_std.slice(i * a, a).reshape(&[1, a]),
        }
    }

    pub fn to_gaussian(&self) -> DiagonalGaussian<T> {
        DiagonalGaussian { mean: self.mean.value(), log_std: self.log_std.value() }
    }

    /// Reparameterized draw from a single-row Gaussian; returns the sample and
    /// its log-density, which at `mean + std ⊙ ε` equals
    /// `-Σ log_std - ½ Σ ε² - (d/2) log 2π`.
    pub fn sample(&self, eps: &[T]) -> (Var<'t, T>, Var<'t, T>) {
        let tape = self.mean.tape();
        let shape = self.mean.shape();
        let e = tape.constant(eps.to_vec(), &shape);
        let x = self.mean + self.log_std.exp() * e;
        let const_part: T = eps.iter().map(|&v| T::of(-0.5) * v * v).sum::<T>()
            - T::of(0.5 * (2.0 * std::f64::consts::PI).ln() * eps.len() as f64);
        let lp = (-self.log_std.sum()).offset(const_part);
        (x, lp)
    }

    /// Log-density of an arbitrary point `x` (same shape as one row).
    pub fn log_density(&self, x: Var<'t, T>) -> Var<'t, T> {
        let d = self.mean.len();
        let z = (x - self.mean) * (-self.log_std).exp();
        (z.square().sum().scale(T::of(-0.5)) - self.log_std.sum())
            .offset(T::of(-0.5 * (2.0 * std::f64::consts::PI).ln() * d as f64))
    }
}

/// `log N(x; 0, I)` on a tape.
pub fn standard_normal_log_density<'t, T: Scalar>(x: Var<'t, T>) -> Var<'t, T> {
    let d = x.len();
    x.square()
        .sum()
        .scale(T::of(-0.5))
        .offset(T::of(-0.5 * (2.0 * std::f64::consts::PI).ln() * d as f64))
}

/// All trainable parameters plus the architecture they instantiate.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalModel<T> {
    pub config: ModelConfig,
    pub params: Vec<ParamTensor<T>>,
}

impl<T: Scalar> VariationalModel<T> {
    /// Random initialization: He-uniform convolutions, Glorot-uniform heads,
    /// zero biases, `q(W)` mean `N(0, 0.1²)` and log-std `-3`.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = Vec::new();
        for (name, shape) in config.param_shapes() {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = if name == "q_w.mean" {
                (0..n)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(rng);
                        0.1 * e
                    })
                    .collect()
            } else if name == "q_w.log_std" {
                vec![-3.0; n]
            } else if name.ends_with("log_std.b") {
                // Narrow initial posteriors let the decoder see latent signal early.
                vec![-3.0; n]
            } else if name == "dec.deconv2.b" {
                // Frames are mostly background.
                vec![-2.0; n]
            } else if name.ends_with(".b") {
                vec![0.0; n]
            } else {
                let bound = if name.contains("conv") {
                    let fan_in = if name.starts_with("dec.") { shape[0] * shape[2] * shape[3] / 4 } else { shape[1..].iter().product() };
                    (6.0 / fan_in as f64).sqrt()
                } else {
                    (6.0 / (shape[0] + shape[1]) as f64).sqrt()
                };
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            params.push(ParamTensor { name, shape, data: data.into_iter().map(T::of).collect() });
        }
        Ok(Self { config, params })
    }

    /// Model with every parameter zero (then edited by tests and oracles).
    pub fn zeros(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let params = config
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                ParamTensor { name, shape, data: vec![T::zero(); n] }
            })
            .collect();
        Ok(Self { config, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut ParamTensor<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn weight_posterior(&self) -> DiagonalGaussian<T> {
        DiagonalGaussian {
            mean: self.param("q_w.mean").unwrap().data.clone(),
            log_std: self.param("q_w.log_std").unwrap().data.clone(),
        }
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> VariationalModel<U> {
        VariationalModel {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| ParamTensor {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|&x| U::of(x.to_f64_lossy())).collect(),
                })
                .collect(),
        }
    }

    /// Places every parameter on `tape`, differentiable when `trainable`.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> ModelVars<'t, T> {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.data.clone(), &p.shape)
                } else {
                    tape.constant(p.data.clone(), &p.shape)
                }
            })
            .collect();
        ModelVars { config: self.config.clone(), names: self.params.iter().map(|p| p.name.clone()).collect(), vars }
    }

    pub fn encode_position(&self, x0: &Frame) -> Result<DiagonalGaussian<T>, ModelError> {
        let tape = Tape::new();
        let vars = self.bind(&tape, false);
        let input = frames_tensor(&tape, &[x0], 1, self.config.resolution)?;
        Ok(vars.encode("pos_enc", input).to_gaussian())
    }

    pub fn encode_velocity(&self, frames: &[Frame]) -> Result<DiagonalGaussian<T>, ModelError> {
        let m = self.config.amortized_len;
        if frames.len() != m {
            return Err(ModelError::Dimension(format!("velocity encoder expects {m} frames, got {}", frames.len())));
        }
        let tape = Tape::new();
        let vars = self.bind(&tape, false);
        let refs: Vec<&Frame> = frames.iter().collect();
        let input = frames_tensor(&tape, &refs, m, self.config.resolution)?;
        Ok(vars.encode("vel_enc", input).to_gaussian())
    }

    /// Block-diagonal posterior over `z₀ = [s₀, v₀]`.
    pub fn initial_posterior(&self, frames: &[Frame]) -> Result<DiagonalGaussian<T>, ModelError> {
        let m = self.config.amortized_len;
        if frames.len() < m {
            return Err(ModelError::Dimension(format!("sequence of {} frames is shorter than m = {m}", frames.len())));
        }
        let pos = self.encode_position(&frames[0])?;
        let vel = self.encode_velocity(&frames[..m])?;
        Ok(pos.concat(&vel))
    }

    /// Bernoulli means for the frame generated by latent position `s`.
    pub fn decode(&self, s: &[T]) -> Result<Vec<T>, ModelError> {
        let a = self.config.latent_dim;
        if s.len() != a {
            return Err(ModelError::Dimension(format!("decoder expects {a} latent values, got {}", s.len())));
        }
        let tape = Tape::new();
        let vars = self.bind(&tape, false);
        let logits = vars.decode_logits(tape.constant(s.to_vec(), &[1, a]));
        Ok(logits.value().into_iter().map(sigmoid).collect())
    }
}

/// Stacks frames into a `[rows, channels, r, r]` constant; `frames` holds
/// `rows * channels` frames in row-major order.
pub fn frames_tensor<'t, T: Scalar>(
    tape: &'t Tape<T>,
    frames: &[&Frame],
    channels: usize,
    resolution: usize,
) -> Result<Var<'t, T>, ModelError> {
    if frames.is_empty() || frames.len() % channels != 0 {
        return Err(ModelError::Dimension("frame count is not a multiple of the channel count".into()));
    }
    let mut data = Vec::with_capacity(frames.len() * resolution * resolution);
    for f in frames {
        if f.resolution != resolution || f.pixels.len() != resolution * resolution {
            return Err(ModelError::Dimension(format!(
                "frame of resolution {} where {resolution} is expected",
                f.resolution
            )));
        }
        data.extend(f.pixels.iter().map(|&p| T::of(p as f64)));
    }
    Ok(tape.constant(data, &[frames.len() / channels, channels, resolution, resolution]))
}

/// Model parameters bound to a tape.
pub struct ModelVars<'t, T: Scalar> {
    pub config: ModelConfig,
    names: Vec<String>,
    pub vars: Vec<Var<'t, T>>,
}

impl<'t, T: Scalar> ModelVars<'t, T> {
    pub fn get(&self, name: &str) -> Var<'t, T> {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.vars[i]
    }

    /// Runs the encoder `prefix` on `[rows, c, r, r]`, returning `[rows, a]` heads.
    pub fn encode(&self, prefix: &str, input: Var<'t, T>) -> GaussianVars<'t, T> {
        let tape = input.tape();
        let mut h = input;
        for layer in 0..3 {
            let w = self.get(&format!("{prefix}.conv{layer}.w"));
            let b = self.get(&format!("{prefix}.conv{layer}.b"));
            h = tape.conv2d(h, w, b, STRIDE, PAD).relu();
        }
        let rows = h.shape()[0];
        let flat = h.reshape(&[rows, self.config.bottleneck_len()]);
        let mean = tape.linear(flat, self.get(&format!("{prefix}.mean.w")), Some(self.get(&format!("{prefix}.mean.b"))));
        let log_std = tape.linear(
            flat,
            self.get(&format!("{prefix}.log_std.w")),
            Some(self.get(&format!("{prefix}.log_std.b"))),
        );
        GaussianVars { mean, log_std }
    }

    /// `[rows, a]` latent positions to `[rows, 1, r, r]` logits.
    pub fn decode_logits(&self, s: Var<'t, T>) -> Var<'t, T> {
        let tape = s.tape();
        let a = self.config.latent_dim;
        let rows = s.len() / a;
        let side = self.config.bottleneck_side();
        let h = tape.linear(s.reshape(&[rows, a]), self.get("dec.head.w"), Some(self.get("dec.head.b"))).relu();
        let mut h = h.reshape(&[rows, self.config.channels[2], side, side]);
        for layer in 0..3 {
            let w = self.get(&format!("dec.deconv{layer}.w"));
            let b = self.get(&format!("dec.deconv{layer}.b"));
            h = tape.conv_transpose2d(h, w, b, STRIDE, PAD);
            if layer < 2 {
                h = h.relu();
            }
        }
        h
    }

    pub fn weight_posterior(&self) -> GaussianVars<'t, T> {
        GaussianVars { mean: self.get("q_w.mean"), log_std: self.get("q_w.log_std") }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::rasterize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> ModelConfig {
        ModelConfig {
            resolution: 16,
            latent_dim: 2,
            amortized_len: 3,
            channels: [4, 4, 8],
            field_hidden: 6,
        }
    }

    fn ball(x: f64, y: f64, res: usize) -> Frame {
        rasterize(&[[x, y]], &[1.2], 10.0, res)
    }

    #[test]
    fn parameter_counts_match_formulae() {
        let cfg = ModelConfig::new(3);
        let model = VariationalModel::<f32>::init(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let count = |prefix: &str| -> usize {
            model.params.iter().filter(|p| p.name.starts_with(prefix)).map(|p| p.data.len()).sum()
        };
        assert_eq!(count("pos_enc"), cfg.encoder_param_count(1));
        assert_eq!(count("vel_enc"), cfg.encoder_param_count(3));
        assert_eq!(count("dec."), cfg.decoder_param_count());
        assert_eq!(count("q_w"), 2 * cfg.field().param_count());
        // 32x32 input, channels 16/32/64: conv0 = 16*16+16, conv1 = 32*16*16+32, ...
        assert_eq!(cfg.encoder_param_count(1), 272 + 8224 + 32832 + 2 * (3 * 1024 + 3));
        assert!((cfg.default_beta_w() - 3.0 / 3053.0).abs() < 1e-15);
    }

    #[test]
    fn encoders_are_deterministic_with_positive_std() {
        let cfg = small_config();
        let model = VariationalModel::<f64>::init(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let frames: Vec<Frame> = (0..3).map(|i| ball(3.0 + i as f64, 5.0, 16)).collect();
        let a = model.encode_position(&frames[0]).unwrap();
        let b = model.encode_position(&frames[0]).unwrap();
        assert_eq!(a, b);
        assert!(a.std().iter().all(|&s| s > 0.0));
        let v = model.encode_velocity(&frames).unwrap();
        assert!(v.std().iter().all(|&s| s > 0.0));
        let reversed: Vec<Frame> = frames.iter().rev().cloned().collect();
        assert_ne!(model.encode_velocity(&reversed).unwrap().mean, v.mean);
        assert!(matches!(model.encode_velocity(&frames[..2]), Err(ModelError::Dimension(_))));
        let moved = model.encode_position(&ball(7.0, 5.0, 16)).unwrap();
        assert_ne!(moved.mean, a.mean);
    }

    #[test]
    fn initial_posterior_is_block_concatenation() {
        let cfg = small_config();
        let model = VariationalModel::<f64>::init(cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let frames: Vec<Frame> = (0..5).map(|i| ball(2.0 + i as f64, 4.0, 16)).collect();
        let q = model.initial_posterior(&frames).unwrap();
        let pos = model.encode_position(&frames[0]).unwrap();
        let vel = model.encode_velocity(&frames[..3]).unwrap();
        assert_eq!(q.mean[..2], pos.mean[..]);
        assert_eq!(q.mean[2..], vel.mean[..]);
        let at_mean = q.log_density(&q.mean);
        let expected = -q.log_std.iter().sum::<f64>() - 2.0 * (2.0 * std::f64::consts::PI).ln();
        assert!((at_mean - expected).abs() < 1e-12);
        let x = [0.3, -0.2, 1.0, 0.5];
        let joint = q.log_density(&x);
        assert!((joint - pos.log_density(&x[..2]) - vel.log_density(&x[2..])).abs() < 1e-12);
        // Changing frames 1.. leaves the position block untouched.
        let mut other = frames.clone();
        other[1] = ball(8.0, 8.0, 16);
        assert_eq!(model.initial_posterior(&other).unwrap().mean[..2], q.mean[..2]);
        assert!(model.initial_posterior(&frames[..2]).is_err());
    }

    #[test]
    fn decoder_outputs_probabilities() {
        let model = VariationalModel::<f64>::init(small_config(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let p = model.decode(&[0.5, -1.0]).unwrap();
        assert_eq!(p.len(), 256);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(p, model.decode(&[0.5, -1.0]).unwrap());
        assert!(model.decode(&[0.5]).is_err());
    }

    #[test]
    fn degenerate_gaussian_sample_is_mean() {
        let g = DiagonalGaussian::<f64>::new(vec![1.5, -2.0], vec![-30.0, -30.0]).unwrap();
        let (x, lp) = sample_gaussian(&g, &mut ChaCha8Rng::seed_from_u64(4));
        assert!((x[0] - 1.5).abs() < 1e-9 && (x[1] + 2.0).abs() < 1e-9);
        assert!((lp - g.log_density(&x)).abs() < 1e-10);
    }

    #[test]
    fn gaussian_sample_mean_within_four_standard_errors() {
        let g = DiagonalGaussian::<f64>::new(vec![0.7, -1.3, 2.0], vec![0.2, -0.5, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut sum = [0.0; 3];
        for _ in 0..n {
            let (x, lp) = sample_gaussian(&g, &mut rng);
            debug_assert!((lp - g.log_density(&x)).abs() < 1e-10);
            for i in 0..3 {
                sum[i] += x[i];
            }
        }
        for i in 0..3 {
            let se = g.log_std[i].exp() / (n as f64).sqrt();
            assert!((sum[i] / n as f64 - g.mean[i]).abs() < 4.0 * se);
        }
    }

    #[test]
    fn tape_sample_density_matches_direct_formula() {
        let tape = Tape::<f64>::new();
        let gv = GaussianVars {
            mean: tape.param(vec![0.2, -0.4], &[1, 2]),
            log_std: tape.param(vec![0.3, -0.1], &[1, 2]),
        };
        let (x, lp) = gv.sample(&[0.5, -1.2]);
        let direct = gv.to_gaussian().log_density(&x.value());
        assert!((lp.item() - direct).abs() < 1e-12);
        assert!((gv.log_density(x).item() - direct).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_likelihood_examples() {
        let x = vec![0.0f64; 1024];
        let p = vec![0.5f64; 1024];
        assert!((bernoulli_log_likelihood(&x, &p) - (-709.782712893384)).abs() < 1e-9);
        let xs: [f64; 5] = [0.0, 1.0, 1.0, 0.0, 0.3];
        let ps: [f64; 5] = [0.2, 0.9, 0.6, 0.4, 0.7];
        let flipped_x: Vec<f64> = xs.iter().map(|v| 1.0 - v).collect();
        let flipped_p: Vec<f64> = ps.iter().map(|v| 1.0 - v).collect();
        assert!((bernoulli_log_likelihood(&xs, &ps) - bernoulli_log_likelihood(&flipped_x, &flipped_p)).abs() < 1e-12);
        // Binary targets: p = x (clamped inside (0,1)) beats any other p.
        let bx: [f64; 3] = [0.0, 1.0, 1.0];
        let best = bernoulli_log_likelihood(&bx, &[1e-9, 1.0 - 1e-9, 1.0 - 1e-9]);
        assert!(best > bernoulli_log_likelihood(&bx, &[0.1, 0.8, 0.95]));
    }

    #[test]
    fn bernoulli_gradient_matches_finite_differences() {
        let x: [f64; 4] = [0.0, 1.0, 0.25, 0.8];
        let p: [f64; 4] = [0.3, 0.6, 0.1, 0.95];
        let eps = 1e-7;
        for i in 0..4 {
            let analytic = x[i] / p[i] - (1.0 - x[i]) / (1.0 - p[i]);
            let mut hi = p;
            hi[i] += eps;
            let mut lo = p;
            lo[i] -= eps;
            let fd = (bernoulli_log_likelihood(&x, &hi) - bernoulli_log_likelihood(&x, &lo)) / (2.0 * eps);
            assert!((fd - analytic).abs() < 1e-6 * (1.0 + analytic.abs()));
        }
    }
}
