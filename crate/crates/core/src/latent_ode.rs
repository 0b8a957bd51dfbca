//! Second-order latent dynamics.
//!
//! The latent state `z = [s, v]` evolves as `ds/dt = v`, `dv/dt = f_W(s, v)`,
//! where `f_W` is a tanh MLP whose weights `W` are one sample from the
//! weight posterior. The log-density of a transported sample evolves as
//! `dℓ/dt = -Tr(∂f_W/∂v)`; the trace is computed exactly.
//!
//! Weight layout of the flat vector `W` (row-major, `[out, in]` matrices):
//! `w1s [H, a]`, `w1v [H, a]`, `b1 [H]`, `w2 [H, H]`, `b2 [H]`, `w3 [a, H]`, `b3 [a]`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::ModelError;
use crate::scalar::Scalar;

pub const DEFAULT_HIDDEN: usize = 50;
pub const DEFAULT_STEPS_PER_FRAME: usize = 10;

/// Shape of the acceleration network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldArchitecture {
    pub latent_dim: usize,
    pub hidden: usize,
}

impl FieldArchitecture {
    pub fn new(latent_dim: usize, hidden: usize) -> Self {
        Self { latent_dim, hidden }
    }

    /// `|W|`.
    pub fn param_count(&self) -> usize {
        let (a, h) = (self.latent_dim, self.hidden);
        2 * a * h + h + h * h + h + a * h + a
    }

    /// `(offset, shape)` of each block in the flat weight vector.
    pub fn blocks(&self) -> [(usize, [usize; 2]); 7] {
        let (a, h) = (self.latent_dim, self.hidden);
        let shapes = [[h, a], [h, a], [h, 1], [h, h], [h, 1], [a, h], [a, 1]];
        let mut out = [(0, [0, 0]); 7];
        let mut offset = 0;
        for (slot, shape) in out.iter_mut().zip(shapes) {
            *slot = (offset, shape);
            offset += shape[0] * shape[1];
        }
        out
    }
}

/// Flat acceleration-network weights drawn from the weight posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSample<T>(pub Vec<T>);

#[derive(Clone, Debug, PartialEq)]
pub struct LatentState<T> {
    pub s: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> LatentState<T> {
    pub fn new(s: Vec<T>, v: Vec<T>) -> Self {
        Self { s, v }
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    fn check(&self, arch: &FieldArchitecture) -> Result<(), ModelError> {
        if self.s.len() != arch.latent_dim || self.v.len() != arch.latent_dim {
            return Err(ModelError::Dimension(format!(
                "state has |s| = {}, |v| = {}, architecture expects {}",
                self.s.len(),
                self.v.len(),
                arch.latent_dim
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentTrajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<LatentState<T>>,
    /// `f_W(s_t, v_t)` at each frame time.
    pub accels: Vec<Vec<T>>,
    pub log_q: Vec<T>,
}

/// Acceleration network bound to a tape.
pub struct FieldVars<'t, T: Scalar> {
    arch: FieldArchitecture,
    w1s: Var<'t, T>,
    w1v: Var<'t, T>,
    b1: Var<'t, T>,
    w2: Var<'t, T>,
    b2: Var<'t, T>,
    w3: Var<'t, T>,
    b3: Var<'t, T>,
    /// `W2 ⊙ (W1v · W3)ᵀ`; with `d_k = 1 - h_k²` the trace is `d2ᵀ Q d1`.
    trace_kernel: Var<'t, T>,
}

impl<'t, T: Scalar> FieldVars<'t, T> {
    /// Unpacks a flat weight vector of length `|W|`.
    pub fn from_flat(tape: &'t Tape<T>, weights: Var<'t, T>, arch: FieldArchitecture) -> Result<Self, ModelError> {
        if weights.len() != arch.param_count() {
            return Err(ModelError::Dimension(format!(
                "weight vector has {} entries, architecture needs {}",
                weights.len(),
                arch.param_count()
            )));
        }
        let blocks = arch.blocks();
        let matrix = |i: usize| {
            let (offset, shape) = blocks[i];
            weights.slice(offset, shape[0] * shape[1]).reshape(&shape)
        };
        let vector = |i: usize| {
            let (offset, shape) = blocks[i];
            weights.slice(offset, shape[0])
        };
        let (w1s, w1v, b1, w2, b2, w3, b3) = (matrix(0), matrix(1), vector(2), matrix(3), vector(4), matrix(5), vector(6));
        let p = tape.matmul(w1v, w3);
        let trace_kernel = w2 * tape.transpose(p);
        Ok(Self { arch, w1s, w1v, b1, w2, b2, w3, b3, trace_kernel })
    }

    pub fn arch(&self) -> FieldArchitecture {
        self.arch
    }

    fn hidden(&self, s: Var<'t, T>, v: Var<'t, T>) -> (Var<'t, T>, Var<'t, T>) {
        let tape = s.tape();
        let pre1 = tape.linear(s, self.w1s, Some(self.b1)) + tape.linear(v, self.w1v, None);
        let h1 = pre1.tanh();
        let h2 = tape.linear(h1, self.w2, Some(self.b2)).tanh();
        (h1, h2)
    }

    /// `f_W(s, v)` as a `[1, a]` row.
    pub fn accel(&self, s: Var<'t, T>, v: Var<'t, T>) -> Var<'t, T> {
        let (_, h2) = self.hidden(s, v);
        s.tape().linear(h2, self.w3, Some(self.b3))
    }

    /// `(f_W(s, v), Tr(∂f_W/∂v))`.
    pub fn accel_and_trace(&self, s: Var<'t, T>, v: Var<'t, T>) -> (Var<'t, T>, Var<'t, T>) {
        let tape = s.tape();
        let (h1, h2) = self.hidden(s, v);
        let f = tape.linear(h2, self.w3, Some(self.b3));
        let d1 = h1.square().scale(-T::one()).offset(T::one());
        let d2 = h2.square().scale(-T::one()).offset(T::one());
        let qd1 = tape.linear(d1, self.trace_kernel, None);
        (f, qd1.dot(d2))
    }
}

/// Trajectory recorded on a tape at each frame time.
pub struct TapeTrajectory<'t, T: Scalar> {
    pub s: Vec<Var<'t, T>>,
    pub v: Vec<Var<'t, T>>,
    pub log_q: Vec<Var<'t, T>>,
    /// Present when requested.
    pub accels: Vec<Var<'t, T>>,
}

fn all_finite<T: Scalar>(vars: &[Var<'_, T>]) -> bool {
    vars.iter().all(|v| v.value().iter().all(|x| x.is_finite()))
}

/// Classical RK4 on `(s, v, ℓ)` with `steps_per_frame` equal steps between
/// consecutive frame times. `s0`, `v0` are `[1, a]` rows, `log_q0` a scalar.
pub fn integrate_on_tape<'t, T: Scalar>(
    field: &FieldVars<'t, T>,
    s0: Var<'t, T>,
    v0: Var<'t, T>,
    log_q0: Var<'t, T>,
    frame_times: &[T],
    steps_per_frame: usize,
    record_accels: bool,
) -> Result<TapeTrajectory<'t, T>, ModelError> {
    check_grid(frame_times, steps_per_frame)?;
    let a = field.arch.latent_dim;
    if s0.len() != a || v0.len() != a || log_q0.len() != 1 {
        return Err(ModelError::Dimension(format!("initial state must have |s| = |v| = {a}")));
    }
    let (mut s, mut v, mut l) = (s0.reshape(&[1, a]), v0.reshape(&[1, a]), log_q0);
    let mut traj = TapeTrajectory {
        s: vec![s],
        v: vec![v],
        log_q: vec![l],
        accels: Vec::new(),
    };
    if record_accels {
        traj.accels.push(field.accel(s, v));
    }
    let half = T::of(0.5);
    let two = T::of(2.0);
    let sixth = T::one() / T::of(6.0);
    let deriv = |s: Var<'t, T>, v: Var<'t, T>| {
        let (f, tr) = field.accel_and_trace(s, v);
        (v, f, -tr)
    };
    for window in frame_times.windows(2) {
        let h = (window[1] - window[0]) / T::of(steps_per_frame as f64);
        for step in 0..steps_per_frame {
            let (k1s, k1v, k1l) = deriv(s, v);
            let (k2s, k2v, k2l) = deriv(s + k1s.scale(h * half), v + k1v.scale(h * half));
            let (k3s, k3v, k3l) = deriv(s + k2s.scale(h * half), v + k2v.scale(h * half));
            let (k4s, k4v, k4l) = deriv(s + k3s.scale(h), v + k3v.scale(h));
            let combine = |y: Var<'t, T>, k1: Var<'t, T>, k2: Var<'t, T>, k3: Var<'t, T>, k4: Var<'t, T>| {
                y + (k1 + k2.scale(two) + k3.scale(two) + k4).scale(h * sixth)
            };
            s = combine(s, k1s, k2s, k3s, k4s);
            v = combine(v, k1v, k2v, k3v, k4v);
            l = combine(l, k1l, k2l, k3l, k4l);
            if !all_finite(&[s, v, l]) {
                let t = window[0] + h * T::of((step + 1) as f64);
                return Err(ModelError::Diverged { time: t.to_f64_lossy() });
            }
        }
        traj.s.push(s);
        traj.v.push(v);
        traj.log_q.push(l);
        if record_accels {
            traj.accels.push(field.accel(s, v));
        }
    }
    Ok(traj)
}

fn check_grid<T: Scalar>(frame_times: &[T], steps_per_frame: usize) -> Result<(), ModelError> {
    if steps_per_frame == 0 {
        return Err(ModelError::Config("steps_per_frame must be at least 1".into()));
    }
    if frame_times.is_empty() || frame_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ModelError::Config("frame times must be non-empty and strictly increasing".into()));
    }
    Ok(())
}

/// Frame-index time grid `0, 1, ..., n - 1`.
pub fn frame_grid<T: Scalar>(n: usize) -> Vec<T> {
    (0..n).map(|i| T::of(i as f64)).collect()
}

fn bind<'t, T: Scalar>(
    tape: &'t Tape<T>,
    arch: FieldArchitecture,
    weights: &WeightSample<T>,
) -> Result<FieldVars<'t, T>, ModelError> {
    let n = weights.0.len();
    FieldVars::from_flat(tape, tape.constant(weights.0.clone(), &[n]), arch)
}

/// `f_W(s, v)`.
pub fn eval_field<T: Scalar>(
    arch: FieldArchitecture,
    weights: &WeightSample<T>,
    state: &LatentState<T>,
) -> Result<Vec<T>, ModelError> {
    state.check(&arch)?;
    let tape = Tape::new();
    let field = bind(&tape, arch, weights)?;
    let a = arch.latent_dim;
    let s = tape.constant(state.s.clone(), &[1, a]);
    let v = tape.constant(state.v.clone(), &[1, a]);
    Ok(field.accel(s, v).value())
}

/// Exact `Tr(∂f_W/∂v)`.
pub fn trace_jacobian_v<T: Scalar>(
    arch: FieldArchitecture,
    weights: &WeightSample<T>,
    state: &LatentState<T>,
) -> Result<T, ModelError> {
    state.check(&arch)?;
    let tape = Tape::new();
    let field = bind(&tape, arch, weights)?;
    let a = arch.latent_dim;
    let s = tape.constant(state.s.clone(), &[1, a]);
    let v = tape.constant(state.v.clone(), &[1, a]);
    Ok(field.accel_and_trace(s, v).1.item())
}

/// Integrates from `z0` with initial log-density `log_q0`, sampling the
/// trajectory at every frame time.
pub fn integrate<T: Scalar>(
    arch: FieldArchitecture,
    z0: &LatentState<T>,
    log_q0: T,
    weights: &WeightSample<T>,
    frame_times: &[T],
    steps_per_frame: usize,
) -> Result<LatentTrajectory<T>, ModelError> {
    z0.check(&arch)?;
    let tape = Tape::new();
    let field = bind(&tape, arch, weights)?;
    let a = arch.latent_dim;
    let s0 = tape.constant(z0.s.clone(), &[1, a]);
    let v0 = tape.constant(z0.v.clone(), &[1, a]);
    let l0 = tape.scalar(log_q0);
    let traj = integrate_on_tape(&field, s0, v0, l0, frame_times, steps_per_frame, true)?;
    Ok(LatentTrajectory {
        times: frame_times.to_vec(),
        states: traj
            .s
            .iter()
            .zip(&traj.v)
            .map(|(s, v)| LatentState::new(s.value(), v.value()))
            .collect(),
        accels: traj.accels.iter().map(|f| f.value()).collect(),
        log_q: traj.log_q.iter().map(|l| l.item()).collect(),
    })
}

/// Builds `W` for a field that is, in the small-signal regime, the linear map
/// `f(s, v) ≈ A s + B v` (`A`, `B` row-major `a × a`). Inputs are scaled by
/// `gain` before the tanh layers and rescaled after, so the nonlinearity
/// contributes `O(gain²)` relative error. Requires `hidden >= a`.
pub fn small_signal_linear_field<T: Scalar>(arch: FieldArchitecture, a_mat: &[T], b_mat: &[T], gain: T) -> WeightSample<T> {
    let (a, h) = (arch.latent_dim, arch.hidden);
    assert!(h >= a, "hidden width must be at least the latent dimension");
    assert!(a_mat.len() == a * a && b_mat.len() == a * a);
    let mut w = vec![T::zero(); arch.param_count()];
    let [(o1s, _), (o1v, _), _, (o2, _), _, (o3, _), _] = arch.blocks();
    for i in 0..a {
        for j in 0..a {
            w[o1s + i * a + j] = gain * a_mat[i * a + j];
            w[o1v + i * a + j] = gain * b_mat[i * a + j];
        }
        w[o2 + i * h + i] = T::one();
        w[o3 + i * h + i] = T::one() / gain;
    }
    WeightSample(w)
}
