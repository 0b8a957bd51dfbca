//! Reconstruction error, importance-sampled NLL and latent-norm analysis.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Tape};
use crate::dataset::{Frame, Sequence};
use crate::error::MetricsError;
use crate::latent_ode::{LatentState, LatentTrajectory, DEFAULT_STEPS_PER_FRAME};
use crate::objective::{forward_sample, ForwardOptions, SampleNoise};
use crate::scalar::{log_sum_exp, Scalar};
use crate::vae::VariationalModel;

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

fn check_aligned(a: usize, b: usize, what: &str) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::ShapeMismatch(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// Per-frame mean squared pixel error.
pub fn pixel_mse(pred: &[Vec<f64>], truth: &[Frame]) -> Result<Vec<f64>, MetricsError> {
    check_aligned(pred.len(), truth.len(), "frame count")?;
    pred.iter()
        .zip(truth)
        .map(|(p, t)| {
            check_aligned(p.len(), t.pixels.len(), "pixel count")?;
            let se: f64 = p.iter().zip(&t.pixels).map(|(&a, &b)| (a - b as f64).powi(2)).sum();
            Ok(se / p.len() as f64)
        })
        .collect()
}

/// `10·log10(1 / mse)` in dB for pixels in `[0, 1]`; `+∞` at zero error.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn psnr(pred: &[Vec<f64>], truth: &[Frame]) -> Result<Vec<f64>, MetricsError> {
    Ok(pixel_mse(pred, truth)?.into_iter().map(psnr_from_mse).collect())
}

/// A PSNR value that may be infinite; serialized as `{"db": null, "infinite": true}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psnr {
    pub db: Option<f64>,
    pub infinite: bool,
}

impl Psnr {
    pub fn new(db: f64) -> Self {
        if db.is_infinite() {
            Self { db: None, infinite: true }
        } else {
            Self { db: Some(db), infinite: false }
        }
    }
}

/// Per-time `(‖v_t‖, ‖f_W(s_t, v_t)‖)` statistics across samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentNorms {
    pub velocity: Vec<MeanStd>,
    pub accel: Vec<MeanStd>,
}

fn l2<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt()
}

pub fn latent_norms<T: Scalar>(trajectories: &[LatentTrajectory<T>]) -> Result<LatentNorms, MetricsError> {
    let Some(first) = trajectories.first() else {
        return Err(MetricsError::InvalidConfig("no trajectories".into()));
    };
    let n = first.states.len();
    for tr in trajectories {
        check_aligned(tr.states.len(), n, "trajectory length")?;
        check_aligned(tr.accels.len(), n, "acceleration count")?;
    }
    let per_time = |f: &dyn Fn(&LatentTrajectory<T>, usize) -> f64| -> Vec<MeanStd> {
        (0..n)
            .map(|t| MeanStd::of(&trajectories.iter().map(|tr| f(tr, t)).collect::<Vec<_>>()))
            .collect()
    };
    Ok(LatentNorms {
        velocity: per_time(&|tr, t| l2(&tr.states[t].v)),
        accel: per_time(&|tr, t| l2(&tr.accels[t])),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventWindows {
    pub expanded: BTreeSet<usize>,
    pub window_size: usize,
}

impl EventWindows {
    pub fn contains(&self, t: usize) -> bool {
        self.expanded.contains(&t)
    }
}

/// Union of `[e − (w−1)/2, e + (w−1)/2]` over events, clipped to `[0, T−1]`.
pub fn expand_event_windows(events: &[usize], window_size: usize, seq_len: usize) -> Result<EventWindows, MetricsError> {
    if window_size.is_multiple_of(2) {
        return Err(MetricsError::InvalidConfig(format!("window size must be odd, got {window_size}")));
    }
    let half = (window_size - 1) / 2;
    let mut expanded = BTreeSet::new();
    for &e in events {
        if e >= seq_len {
            return Err(MetricsError::InvalidConfig(format!("event index {e} outside 0..{seq_len}")));
        }
        expanded.extend(e.saturating_sub(half)..=(e + half).min(seq_len - 1));
    }
    Ok(EventWindows { expanded, window_size })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    /// `None` when the group is empty.
    pub stats: Option<MeanStd>,
    pub empty: bool,
}

impl GroupStats {
    fn of(values: &[f64]) -> Self {
        Self {
            count: values.len(),
            stats: (!values.is_empty()).then(|| MeanStd::of(values)),
            empty: values.is_empty(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBreakdown {
    pub event: GroupStats,
    pub non_event: GroupStats,
}

/// Pools `norms[case][t]` into event-window and other time steps.
pub fn norm_breakdown(norms: &[Vec<f64>], windows: &[EventWindows]) -> Result<NormBreakdown, MetricsError> {
    check_aligned(norms.len(), windows.len(), "case count")?;
    let (mut event, mut other) = (Vec::new(), Vec::new());
    for (series, w) in norms.iter().zip(windows) {
        for (t, &v) in series.iter().enumerate() {
            if w.contains(t) {
                event.push(v);
            } else {
                other.push(v);
            }
        }
    }
    Ok(NormBreakdown { event: GroupStats::of(&event), non_event: GroupStats::of(&other) })
}

/// Importance-sampled `−log p(X)` from precomputed log weights.
pub fn nll_from_log_weights(log_w: &[f64]) -> f64 {
    -(log_sum_exp(log_w) - (log_w.len() as f64).ln())
}

/// Everything computed for one test case from `L` posterior samples.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseEvaluation {
    /// Mean decoded Bernoulli frame per time step.
    pub mean_frames: Vec<Vec<f64>>,
    pub mse: Vec<f64>,
    pub trajectories: Vec<LatentTrajectory<f64>>,
    pub log_weights: Vec<f64>,
    pub nll: f64,
}

/// Draws `samples` posterior samples for `seq` and scores them.
pub fn evaluate_case<T: Scalar, R: Rng + ?Sized>(
    model: &VariationalModel<T>,
    frames: &[Frame],
    samples: usize,
    steps_per_frame: usize,
    rng: &mut R,
) -> Result<CaseEvaluation, MetricsError> {
    if samples == 0 {
        return Err(MetricsError::InvalidConfig("at least one sample is required".into()));
    }
    let n = frames.len();
    let plane = model.config.resolution * model.config.resolution;
    let mut mean_frames = vec![vec![0.0; plane]; n];
    let mut trajectories = Vec::with_capacity(samples);
    let mut log_weights = Vec::with_capacity(samples);
    let opts = ForwardOptions { steps_per_frame, encoder_windows: false, record_accels: true };
    for _ in 0..samples {
        let noise = SampleNoise::draw(&model.config, rng);
        let tape = Tape::new();
        let vars = model.bind(&tape, false);
        let fwd = forward_sample(&vars, frames, &noise, &opts)?;
        let logits = fwd.logits.value();
        for (t, frame) in mean_frames.iter_mut().enumerate() {
            for (acc, &l) in frame.iter_mut().zip(&logits[t * plane..(t + 1) * plane]) {
                *acc += sigmoid(l.to_f64_lossy());
            }
        }
        let cast = |v: Vec<T>| -> Vec<f64> { v.into_iter().map(|x| x.to_f64_lossy()).collect() };
        trajectories.push(LatentTrajectory {
            times: (0..n).map(|t| t as f64).collect(),
            states: (0..n).map(|t| LatentState::new(cast(fwd.s[t].value()), cast(fwd.v[t].value()))).collect(),
            accels: fwd.accels.iter().map(|a| cast(a.value())).collect(),
            log_q: fwd.log_q.iter().map(|q| q.item().to_f64_lossy()).collect(),
        });
        log_weights.push(fwd.log_importance_weight().to_f64_lossy());
    }
    let inv = 1.0 / samples as f64;
    mean_frames.iter_mut().flatten().for_each(|p| *p *= inv);
    let mse = pixel_mse(&mean_frames, frames)?;
    let nll = nll_from_log_weights(&log_weights);
    Ok(CaseEvaluation { mean_frames, mse, trajectories, log_weights, nll })
}

/// `−log p(X)` by importance sampling with the variational posterior as proposal.
pub fn nll_importance<T: Scalar, R: Rng + ?Sized>(
    model: &VariationalModel<T>,
    frames: &[Frame],
    samples: usize,
    steps_per_frame: usize,
    rng: &mut R,
) -> Result<f64, MetricsError> {
    Ok(evaluate_case(model, frames, samples, steps_per_frame, rng)?.nll)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub samples: usize,
    pub steps_per_frame: usize,
    pub window_size: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { samples: 10, steps_per_frame: DEFAULT_STEPS_PER_FRAME, window_size: 3, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeStep {
    pub t: usize,
    /// Per-case MSE across test cases (unitless, pixels in `[0, 1]`).
    pub mse: MeanStd,
    /// Per-case PSNR in dB across test cases; `None` if any case is exact.
    pub psnr_db: Option<MeanStd>,
    pub psnr_infinite_cases: usize,
    pub velocity_norm: MeanStd,
    pub accel_norm: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub index: usize,
    pub mse: Vec<f64>,
    pub psnr: Vec<Psnr>,
    pub nll_nats: f64,
    pub events: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub split: String,
    pub num_cases: usize,
    pub seq_len: usize,
    pub samples: usize,
    pub steps_per_frame: usize,
    pub seed: u64,
    pub per_time: Vec<TimeStep>,
    /// Mean over cases of the per-case importance-sampled NLL, in nats.
    pub nll_nats: MeanStd,
    pub window_size: usize,
    pub velocity_breakdown: NormBreakdown,
    pub accel_breakdown: NormBreakdown,
    pub cases: Vec<CaseReport>,
}

/// Per-case results kept alongside the report for figure output.
pub struct Evaluation {
    pub report: MetricsReport,
    pub cases: Vec<CaseEvaluation>,
}

/// Evaluates every sequence with its own RNG stream (`seed`, stream = case index).
pub fn evaluate_split<T: Scalar>(
    model: &VariationalModel<T>,
    seqs: &[Sequence],
    dataset: &str,
    split: &str,
    opts: &EvalOptions,
) -> Result<Evaluation, MetricsError> {
    let Some(first) = seqs.first() else {
        return Err(MetricsError::InvalidConfig("no sequences to evaluate".into()));
    };
    let n = first.len();
    let mut cases = Vec::with_capacity(seqs.len());
    let mut windows = Vec::with_capacity(seqs.len());
    for (i, seq) in seqs.iter().enumerate() {
        check_aligned(seq.len(), n, "sequence length")?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(i as u64);
        cases.push(evaluate_case(model, &seq.frames, opts.samples, opts.steps_per_frame, &mut rng)?);
        windows.push(expand_event_windows(&seq.events, opts.window_size, n)?);
    }
    let mean_norm = |c: &CaseEvaluation, t: usize, accel: bool| -> f64 {
        let vals: Vec<f64> = c
            .trajectories
            .iter()
            .map(|tr| if accel { l2(&tr.accels[t]) } else { l2(&tr.states[t].v) })
            .collect();
        MeanStd::of(&vals).mean
    };
    let mut per_time = Vec::with_capacity(n);
    for t in 0..n {
        let mse: Vec<f64> = cases.iter().map(|c| c.mse[t]).collect();
        let ps: Vec<f64> = mse.iter().map(|&m| psnr_from_mse(m)).collect();
        let infinite = ps.iter().filter(|p| p.is_infinite()).count();
        let pooled = |accel: bool| -> MeanStd {
            let vals: Vec<f64> = cases
                .iter()
                .flat_map(|c| c.trajectories.iter().map(move |tr| if accel { l2(&tr.accels[t]) } else { l2(&tr.states[t].v) }))
                .collect();
            MeanStd::of(&vals)
        };
        per_time.push(TimeStep {
            t,
            mse: MeanStd::of(&mse),
            psnr_db: (infinite == 0).then(|| MeanStd::of(&ps)),
            psnr_infinite_cases: infinite,
            velocity_norm: pooled(false),
            accel_norm: pooled(true),
        });
    }
    let v_norms: Vec<Vec<f64>> = cases.iter().map(|c| (0..n).map(|t| mean_norm(c, t, false)).collect()).collect();
    let f_norms: Vec<Vec<f64>> = cases.iter().map(|c| (0..n).map(|t| mean_norm(c, t, true)).collect()).collect();
    let nll: Vec<f64> = cases.iter().map(|c| c.nll).collect();
    let report = MetricsReport {
        dataset: dataset.into(),
        split: split.into(),
        num_cases: seqs.len(),
        seq_len: n,
        samples: opts.samples,
        steps_per_frame: opts.steps_per_frame,
        seed: opts.seed,
        per_time,
        nll_nats: MeanStd::of(&nll),
        window_size: opts.window_size,
        velocity_breakdown: norm_breakdown(&v_norms, &windows)?,
        accel_breakdown: norm_breakdown(&f_norms, &windows)?,
        cases: cases
            .iter()
            .zip(seqs)
            .enumerate()
            .map(|(i, (c, s))| CaseReport {
                index: i,
                mse: c.mse.clone(),
                psnr: c.mse.iter().map(|&m| Psnr::new(psnr_from_mse(m))).collect(),
                nll_nats: c.nll,
                events: s.events.clone(),
            })
            .collect(),
    };
    Ok(Evaluation { report, cases })
}
