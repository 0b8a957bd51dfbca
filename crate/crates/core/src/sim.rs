//! Ground-truth simulators for the three motion families.
//!
//! Every simulator is a pure function of its configuration and a seeded
//! random stream, and reports world-coordinate centers and velocities at
//! each frame time together with the frame indices at which an event
//! (collision, bounce, direction change) happens.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::SimError;

pub type Vec2 = [f64; 2];

/// Rejection attempts per ball when placing non-overlapping initial centers.
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallWorldConfig {
    pub box_side: f64,
    pub n_balls: usize,
    pub radius: f64,
    pub mass: f64,
    pub frame_dt: f64,
    pub sim_dt: f64,
    pub seq_len: usize,
}

impl Default for BallWorldConfig {
    fn default() -> Self {
        Self {
            box_side: 10.0,
            n_balls: 1,
            radius: 1.2,
            mass: 1.0,
            frame_dt: 1.0,
            sim_dt: 0.5,
            seq_len: 10,
        }
    }
}

impl BallWorldConfig {
    pub fn with_balls(n_balls: usize) -> Self {
        Self { n_balls, ..Self::default() }
    }

    /// Kinetic energy every trajectory is normalized to: half a joule per ball.
    pub fn target_energy(&self) -> f64 {
        0.5 * self.n_balls as f64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.box_side > 2.0 * self.radius) || !(self.radius > 0.0) {
            return Err(SimError::InvalidConfig("box_side must exceed 2*radius".into()));
        }
        if self.n_balls == 0 {
            return Err(SimError::InvalidConfig("n_balls must be at least 1".into()));
        }
        if !(self.mass > 0.0) || !(self.frame_dt > 0.0) || !(self.sim_dt > 0.0) {
            return Err(SimError::InvalidConfig("mass and time steps must be positive".into()));
        }
        let ratio = self.frame_dt / self.sim_dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(SimError::InvalidConfig("sim_dt must divide frame_dt".into()));
        }
        if self.seq_len < 2 {
            return Err(SimError::InvalidConfig("seq_len must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumConfig {
    pub box_side: f64,
    pub bob_radius: f64,
    pub rod_length_range: [f64; 2],
    pub init_angle_range: [f64; 2],
    pub g: f64,
    pub frame_dt: f64,
    pub seq_len: usize,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            box_side: 10.0,
            bob_radius: 1.0,
            rod_length_range: [3.0, 6.0],
            init_angle_range: [PI / 36.0, PI / 9.0],
            g: 9.91,
            frame_dt: 0.4,
            seq_len: 10,
        }
    }
}

impl PendulumConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let [l_lo, l_hi] = self.rod_length_range;
        let [a_lo, a_hi] = self.init_angle_range;
        if !(l_lo > 0.0 && l_lo <= l_hi) || !(l_hi + self.bob_radius < self.box_side) {
            return Err(SimError::InvalidConfig("rod_length + bob_radius must stay below box_side".into()));
        }
        if !(a_lo > 0.0 && a_lo <= a_hi && a_hi < std::f64::consts::FRAC_PI_2) {
            return Err(SimError::InvalidConfig("initial angles must lie in (0, pi/2)".into()));
        }
        if !(self.g > 0.0) || !(self.frame_dt > 0.0) || self.seq_len < 2 {
            return Err(SimError::InvalidConfig("g, frame_dt must be positive and seq_len >= 2".into()));
        }
        Ok(())
    }

    pub fn pivot(&self) -> Vec2 {
        [0.5 * self.box_side, self.box_side]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectileConfig {
    pub box_side: f64,
    pub radius: f64,
    pub vx_range: [f64; 2],
    pub vy_range: [f64; 2],
    pub hy_range: [f64; 2],
    pub restitution: f64,
    pub contact_duration: f64,
    pub frame_dt: f64,
    pub g: f64,
    pub seq_len: usize,
}

impl Default for ProjectileConfig {
    fn default() -> Self {
        Self {
            box_side: 10.0,
            radius: 1.0,
            vx_range: [1.0, 4.0],
            vy_range: [0.0, 1.0],
            hy_range: [1.0, 3.0],
            restitution: 0.80,
            contact_duration: 0.1,
            frame_dt: 0.1,
            g: 9.91,
            seq_len: 10,
        }
    }
}

impl ProjectileConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.restitution > 0.0 && self.restitution < 1.0) {
            return Err(SimError::InvalidConfig("restitution must lie in (0, 1)".into()));
        }
        let [h_lo, h_hi] = self.hy_range;
        if !(h_lo >= self.radius && h_hi <= self.box_side - self.radius && h_lo <= h_hi) {
            return Err(SimError::InvalidConfig("hy_range must lie within [radius, box_side - radius]".into()));
        }
        if !(self.vx_range[0] <= self.vx_range[1]) || !(self.vy_range[0] <= self.vy_range[1]) {
            return Err(SimError::InvalidConfig("velocity ranges must be ordered".into()));
        }
        if !(self.g > 0.0) || !(self.frame_dt > 0.0) || !(self.contact_duration >= 0.0) || self.seq_len < 2 {
            return Err(SimError::InvalidConfig("g, frame_dt must be positive and seq_len >= 2".into()));
        }
        Ok(())
    }
}

/// World-coordinate trajectory sampled at frame times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldTrajectory {
    pub times: Vec<f64>,
    /// `centers[frame][object]`
    pub centers: Vec<Vec<Vec2>>,
    pub velocities: Vec<Vec<Vec2>>,
    /// Sorted, deduplicated frame indices.
    pub events: Vec<usize>,
    /// Radius of each drawn object.
    pub radii: Vec<f64>,
}

impl WorldTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn kinetic_energy(velocities: &[Vec2], mass: f64) -> f64 {
    velocities
        .iter()
        .map(|v| 0.5 * mass * (v[0] * v[0] + v[1] * v[1]))
        .sum()
}

/// Uniform non-overlapping centers and standard-normal velocities rescaled to
/// the fixed kinetic energy.
pub fn sample_ball_initial_state<R: Rng + ?Sized>(
    config: &BallWorldConfig,
    rng: &mut R,
) -> Result<(Vec<Vec2>, Vec<Vec2>), SimError> {
    config.validate()?;
    let lo = config.radius;
    let hi = config.box_side - config.radius;
    let min_dist2 = (2.0 * config.radius).powi(2);
    let mut centers: Vec<Vec2> = Vec::with_capacity(config.n_balls);
    for _ in 0..config.n_balls {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let c = [rng.random_range(lo..=hi), rng.random_range(lo..=hi)];
            if centers.iter().all(|p| dist2(p, &c) > min_dist2) {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SimError::Placement {
                n_balls: config.n_balls,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        }
    }

    let mut velocities: Vec<Vec2> = (0..config.n_balls)
        .map(|_| [StandardNormal.sample(rng), StandardNormal.sample(rng)])
        .collect();
    let energy = kinetic_energy(&velocities, config.mass);
    // A zero draw has probability zero; fall back to a unit x-velocity.
    if energy <= f64::MIN_POSITIVE {
        velocities[0] = [1.0, 0.0];
    }
    let energy = kinetic_energy(&velocities, config.mass);
    let scale = (config.target_energy() / energy).sqrt();
    for v in &mut velocities {
        v[0] *= scale;
        v[1] *= scale;
    }
    Ok((centers, velocities))
}

pub fn simulate_bouncing_balls<R: Rng + ?Sized>(
    config: &BallWorldConfig,
    rng: &mut R,
) -> Result<WorldTrajectory, SimError> {
    let (centers, velocities) = sample_ball_initial_state(config, rng)?;
    simulate_balls_from(config, centers, velocities)
}

/// Event-driven elastic simulation from a given state; frame `i` is sampled at
/// `i * frame_dt`.
pub fn simulate_balls_from(
    config: &BallWorldConfig,
    centers: Vec<Vec2>,
    velocities: Vec<Vec2>,
) -> Result<WorldTrajectory, SimError> {
    config.validate()?;
    if centers.len() != velocities.len() || centers.is_empty() {
        return Err(SimError::InvalidConfig("centers and velocities must be non-empty and aligned".into()));
    }
    let mut world = BallWorld {
        pos: centers,
        vel: velocities,
        lo: config.radius,
        hi: config.box_side - config.radius,
        contact2: (2.0 * config.radius).powi(2),
    };
    let n_frames = config.seq_len;
    let mut times = Vec::with_capacity(n_frames);
    let mut out_centers = Vec::with_capacity(n_frames);
    let mut out_vel = Vec::with_capacity(n_frames);
    let mut events = Vec::new();

    times.push(0.0);
    out_centers.push(world.pos.clone());
    out_vel.push(world.vel.clone());

    // Internal substeps of sim_dt only bound each advance; collision times are exact.
    let substeps = (config.frame_dt / config.sim_dt).round() as usize;
    for frame in 1..n_frames {
        let mut collided = false;
        for _ in 0..substeps {
            collided |= world.advance(config.sim_dt);
        }
        if collided {
            events.push(frame);
        }
        times.push(frame as f64 * config.frame_dt);
        out_centers.push(world.pos.clone());
        out_vel.push(world.vel.clone());
    }

    Ok(WorldTrajectory {
        times,
        centers: out_centers,
        velocities: out_vel,
        events,
        radii: vec![config.radius; world.pos.len()],
    })
}

fn dist2(a: &Vec2, b: &Vec2) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

struct BallWorld {
    pos: Vec<Vec2>,
    vel: Vec<Vec2>,
    lo: f64,
    hi: f64,
    contact2: f64,
}

#[derive(Clone, Copy, Debug)]
enum Collision {
    Wall { ball: usize, axis: usize },
    Pair { i: usize, j: usize },
}

impl BallWorld {
    /// Advances by `duration`, resolving every collision on the way. Returns
    /// whether at least one collision happened in `(0, duration]`.
    fn advance(&mut self, duration: f64) -> bool {
        let mut remaining = duration;
        let mut collided = false;
        // Bounded so a pathological configuration cannot spin forever.
        for _ in 0..100_000 {
            let (t_hit, hits) = self.next_collisions();
            if t_hit > remaining {
                self.drift(remaining);
                return collided;
            }
            self.drift(t_hit);
            remaining -= t_hit;
            for hit in hits {
                self.resolve(hit);
            }
            collided = true;
        }
        self.drift(remaining);
        collided
    }

    fn drift(&mut self, dt: f64) {
        for (p, v) in self.pos.iter_mut().zip(&self.vel) {
            p[0] = (p[0] + v[0] * dt).clamp(self.lo, self.hi);
            p[1] = (p[1] + v[1] * dt).clamp(self.lo, self.hi);
        }
    }

    /// Earliest collision time and every collision sharing it, walls first,
    /// then pairs in ascending index order.
    fn next_collisions(&self) -> (f64, Vec<Collision>) {
        const TIE: f64 = 1e-12;
        let mut best = f64::INFINITY;
        let mut hits: Vec<(f64, Collision)> = Vec::new();
        let mut consider = |t: f64, c: Collision, best: &mut f64| {
            if t < *best - TIE {
                *best = t;
            }
            hits.push((t, c));
        };
        for (b, (p, v)) in self.pos.iter().zip(&self.vel).enumerate() {
            for axis in 0..2 {
                let t = if v[axis] > 0.0 {
                    (self.hi - p[axis]) / v[axis]
                } else if v[axis] < 0.0 {
                    (self.lo - p[axis]) / v[axis]
                } else {
                    f64::INFINITY
                };
                consider(t.max(0.0), Collision::Wall { ball: b, axis }, &mut best);
            }
        }
        let n = self.pos.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let dp = [self.pos[j][0] - self.pos[i][0], self.pos[j][1] - self.pos[i][1]];
                let dv = [self.vel[j][0] - self.vel[i][0], self.vel[j][1] - self.vel[i][1]];
                let b = dp[0] * dv[0] + dp[1] * dv[1];
                if b >= 0.0 {
                    continue;
                }
                let a = dv[0] * dv[0] + dv[1] * dv[1];
                let c = dp[0] * dp[0] + dp[1] * dp[1] - self.contact2;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    continue;
                }
                // Smaller root of a t^2 + 2 b t + c = 0; already touching gives t = 0.
                let t = if c <= 0.0 { 0.0 } else { c / (-b + disc.sqrt()) };
                consider(t, Collision::Pair { i, j }, &mut best);
            }
        }
        let selected = hits
            .into_iter()
            .filter(|(t, _)| *t <= best + TIE)
            .map(|(_, c)| c)
            .collect();
        (best, selected)
    }

    fn resolve(&mut self, hit: Collision) {
        match hit {
            Collision::Wall { ball, axis } => {
                let p = self.pos[ball][axis];
                let v = self.vel[ball][axis];
                let at_hi = (p - self.hi).abs() < 1e-9 && v > 0.0;
                let at_lo = (p - self.lo).abs() < 1e-9 && v < 0.0;
                if at_hi || at_lo {
                    self.vel[ball][axis] = -v;
                }
            }
            Collision::Pair { i, j } => {
                let dp = [self.pos[j][0] - self.pos[i][0], self.pos[j][1] - self.pos[i][1]];
                let norm = (dp[0] * dp[0] + dp[1] * dp[1]).sqrt();
                if norm == 0.0 {
                    return;
                }
                let n = [dp[0] / norm, dp[1] / norm];
                let u = (self.vel[i][0] - self.vel[j][0]) * n[0] + (self.vel[i][1] - self.vel[j][1]) * n[1];
                // Only approaching pairs exchange momentum.
                if u <= 0.0 {
                    return;
                }
                self.vel[i][0] -= u * n[0];
                self.vel[i][1] -= u * n[1];
                self.vel[j][0] += u * n[0];
                self.vel[j][1] += u * n[1];
            }
        }
    }
}

/// Closed-form small-angle pendulum parameters for one sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub rod_length: f64,
    pub init_angle: f64,
    /// +1 or -1.
    pub swing_sign: f64,
}

impl PendulumParams {
    pub fn omega(&self, g: f64) -> f64 {
        (g / self.rod_length).sqrt()
    }

    pub fn angle(&self, g: f64, t: f64) -> f64 {
        self.swing_sign * self.init_angle * (self.omega(g) * t).cos()
    }
}

pub fn sample_pendulum_params<R: Rng + ?Sized>(config: &PendulumConfig, rng: &mut R) -> PendulumParams {
    let [l_lo, l_hi] = config.rod_length_range;
    let [a_lo, a_hi] = config.init_angle_range;
    let rod_length = rng.random_range(l_lo..=l_hi);
    let init_angle = rng.random_range(a_lo..=a_hi);
    let swing_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    PendulumParams { rod_length, init_angle, swing_sign }
}

pub fn simulate_pendulum<R: Rng + ?Sized>(
    config: &PendulumConfig,
    rng: &mut R,
) -> Result<(WorldTrajectory, PendulumParams), SimError> {
    config.validate()?;
    let params = sample_pendulum_params(config, rng);
    Ok((pendulum_trajectory(config, &params), params))
}

pub fn pendulum_trajectory(config: &PendulumConfig, params: &PendulumParams) -> WorldTrajectory {
    let pivot = config.pivot();
    let l = params.rod_length;
    let omega = params.omega(config.g);
    let n = config.seq_len;
    let mut times = Vec::with_capacity(n);
    let mut centers = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * config.frame_dt;
        let alpha = params.angle(config.g, t);
        let alpha_dot = -params.swing_sign * params.init_angle * omega * (omega * t).sin();
        times.push(t);
        centers.push(vec![[pivot[0] + l * alpha.sin(), pivot[1] - l * alpha.cos()]]);
        velocities.push(vec![[l * alpha.cos() * alpha_dot, l * alpha.sin() * alpha_dot]]);
    }

    // Turning points at k * pi / omega, including the release at k = 0.
    let half_period = std::f64::consts::PI / omega;
    let mut events = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * half_period;
        let idx = (t / config.frame_dt).round();
        if idx > (n - 1) as f64 {
            break;
        }
        let idx = idx as usize;
        if events.last() != Some(&idx) {
            events.push(idx);
        }
        k += 1;
    }

    WorldTrajectory {
        times,
        centers,
        velocities,
        events,
        radii: vec![config.bob_radius],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectileParams {
    pub vx: f64,
    pub vy: f64,
    /// Initial center height; the horizontal start is the left wall contact.
    pub hy: f64,
}

/// One floor contact: the ball rests in `[start, start + duration)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    pub start: f64,
    pub impact_vy: f64,
    pub release_vy: f64,
}

pub fn sample_projectile_params<R: Rng + ?Sized>(config: &ProjectileConfig, rng: &mut R) -> ProjectileParams {
    let vx = rng.random_range(config.vx_range[0]..=config.vx_range[1]);
    let vy = rng.random_range(config.vy_range[0]..=config.vy_range[1]);
    let hy = rng.random_range(config.hy_range[0]..=config.hy_range[1]);
    ProjectileParams { vx, vy, hy }
}

pub fn simulate_projectile<R: Rng + ?Sized>(
    config: &ProjectileConfig,
    rng: &mut R,
) -> Result<(WorldTrajectory, ProjectileParams), SimError> {
    config.validate()?;
    let params = sample_projectile_params(config, rng);
    Ok((projectile_trajectory(config, &params).0, params))
}

/// Time until a ball at height `y` (center) moving with vertical speed `vy`
/// reaches the floor contact height.
pub fn time_to_floor(y: f64, vy: f64, radius: f64, g: f64) -> f64 {
    let drop = (y - radius).max(0.0);
    // Positive root of g/2 t^2 - vy t - drop = 0.
    (vy + (vy * vy + 2.0 * g * drop).sqrt()) / g
}

/// Piecewise-analytic projectile trajectory plus the list of floor contacts.
pub fn projectile_trajectory(config: &ProjectileConfig, params: &ProjectileParams) -> (WorldTrajectory, Vec<Contact>) {
    // Below this impact speed the ball stays on the floor and slides.
    const REST_SPEED: f64 = 1e-9;
    let r = config.radius;
    let lo = r;
    let hi = config.box_side - r;
    let n = config.seq_len;
    let t_end = (n - 1) as f64 * config.frame_dt;

    // Vertical motion: a sequence of flight arcs separated by contacts.
    let mut contacts = Vec::new();
    let mut t0 = 0.0;
    let mut y0 = params.hy.max(r);
    let mut vy0 = params.vy;
    let mut resting_from = None;
    while t0 <= t_end {
        let tau = time_to_floor(y0, vy0, r, config.g);
        let t_hit = t0 + tau;
        if t_hit > t_end {
            break;
        }
        let impact_vy = vy0 - config.g * tau;
        let release_vy = config.restitution * impact_vy.abs();
        contacts.push(Contact { start: t_hit, impact_vy, release_vy });
        if release_vy <= REST_SPEED {
            resting_from = Some(t_hit + config.contact_duration);
            break;
        }
        t0 = t_hit + config.contact_duration;
        y0 = r;
        vy0 = release_vy;
    }

    let state_at = |t: f64| -> (Vec2, Vec2) {
        // Horizontal clock excludes time spent in contact.
        let mut moving_time = t;
        let mut arc_start = 0.0;
        let mut arc_y = params.hy.max(r);
        let mut arc_vy = params.vy;
        let mut in_contact = false;
        for c in &contacts {
            if t < c.start {
                break;
            }
            let end = c.start + config.contact_duration;
            if t < end {
                moving_time -= t - c.start;
                in_contact = true;
                break;
            }
            moving_time -= config.contact_duration;
            arc_start = end;
            arc_y = r;
            arc_vy = c.release_vy;
        }
        let (x, vx) = reflect_1d(params.vx * moving_time, params.vx, lo, hi);
        if in_contact {
            return ([x, r], [0.0, 0.0]);
        }
        if let Some(rest) = resting_from {
            if t >= rest {
                return ([x, r], [vx, 0.0]);
            }
        }
        let dt = t - arc_start;
        let y = (arc_y + arc_vy * dt - 0.5 * config.g * dt * dt).clamp(lo, hi);
        ([x, y], [vx, arc_vy - config.g * dt])
    };

    let mut times = Vec::with_capacity(n);
    let mut centers = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    let mut events = Vec::new();
    for i in 0..n {
        let t = i as f64 * config.frame_dt;
        let (p, v) = state_at(t);
        times.push(t);
        centers.push(vec![p]);
        velocities.push(vec![v]);
        let touching = contacts
            .iter()
            .any(|c| t >= c.start - 1e-12 && t < c.start + config.contact_duration - 1e-12);
        if touching {
            events.push(i);
        }
    }

    (
        WorldTrajectory {
            times,
            centers,
            velocities,
            events,
            radii: vec![r],
        },
        contacts,
    )
}

/// Position `lo + travel` folded back into `[lo, hi]` by specular reflection,
/// with the matching velocity sign.
fn reflect_1d(travel: f64, v: f64, lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let period = 2.0 * span;
    let u = travel.rem_euclid(period);
    if u <= span {
        (lo + u, v)
    } else {
        (hi - (u - span), -v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn kinetic_energy_examples() {
        assert_eq!(kinetic_energy(&[[0.0, 0.0]], 1.0), 0.0);
        assert_eq!(kinetic_energy(&[[1.0, 0.0]], 1.0), 0.5);
        assert_eq!(kinetic_energy(&[[3.0, 4.0], [0.0, 0.0]], 1.0), 12.5);
    }

    #[test]
    fn initial_state_energy_is_normalized() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (_, v) = sample_ball_initial_state(&BallWorldConfig::with_balls(1), &mut rng).unwrap();
            assert!((kinetic_energy(&v, 1.0) - 0.5).abs() < 1e-15);
            let (c, v) = sample_ball_initial_state(&BallWorldConfig::with_balls(3), &mut rng).unwrap();
            assert!((kinetic_energy(&v, 1.0) - 1.5).abs() < 1e-12);
            for i in 0..3 {
                for j in (i + 1)..3 {
                    assert!(dist2(&c[i], &c[j]).sqrt() > 2.4);
                }
            }
        }
    }

    #[test]
    fn initial_state_is_deterministic() {
        let cfg = BallWorldConfig::with_balls(2);
        let a = sample_ball_initial_state(&cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = sample_ball_initial_state(&cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overcrowded_box_cannot_place_balls() {
        let cfg = BallWorldConfig { n_balls: 40, ..BallWorldConfig::default() };
        let err = sample_ball_initial_state(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap_err();
        assert!(matches!(err, SimError::Placement { .. }));
    }

    #[test]
    fn single_ball_reflects_off_right_wall() {
        let cfg = BallWorldConfig::with_balls(1);
        let traj = simulate_balls_from(&cfg, vec![[5.0, 5.0]], vec![[1.0, 0.0]]).unwrap();
        for k in 0..=3 {
            assert!((traj.centers[k][0][0] - (5.0 + k as f64)).abs() < 1e-12);
            assert_eq!(traj.centers[k][0][1], 5.0);
        }
        // Hits x = 8.8 at t = 3.8, then travels back.
        assert!((traj.centers[4][0][0] - 8.6).abs() < 1e-12);
        assert_eq!(traj.velocities[4][0][0], -1.0);
        assert!((traj.centers[9][0][0] - 3.6).abs() < 1e-12);
        assert_eq!(traj.events, vec![4]);
    }

    #[test]
    fn head_on_equal_masses_swap_velocities() {
        let cfg = BallWorldConfig { n_balls: 2, seq_len: 3, ..BallWorldConfig::default() };
        let traj = simulate_balls_from(&cfg, vec![[3.0, 5.0], [7.0, 5.0]], vec![[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        // Contact when the gap 4 - 2.4 closes at relative speed 2: t = 0.8.
        assert_eq!(traj.events, vec![1]);
        let v = &traj.velocities[1];
        assert!((v[0][0] + 1.0).abs() < 1e-12 && (v[1][0] - 1.0).abs() < 1e-12);
        assert!((traj.centers[1][0][0] - 3.6).abs() < 1e-12);
        assert!((traj.centers[1][1][0] - 6.4).abs() < 1e-12);
    }

    #[test]
    fn pendulum_release_and_half_period() {
        let cfg = PendulumConfig::default();
        let p = PendulumParams { rod_length: 4.0, init_angle: PI / 18.0, swing_sign: 1.0 };
        let traj = pendulum_trajectory(&cfg, &p);
        let c0 = traj.centers[0][0];
        assert!((c0[0] - (5.0 + 4.0 * (PI / 18.0).sin())).abs() < 1e-12);
        assert!((c0[1] - (10.0 - 4.0 * (PI / 18.0).cos())).abs() < 1e-12);
        let half = PI / p.omega(cfg.g);
        assert!((half - 1.996).abs() < 1e-3);
        assert!((p.angle(cfg.g, half) + p.init_angle).abs() < 1e-15);
        assert_eq!(traj.events, vec![0, 5]);
    }

    #[test]
    fn projectile_impact_and_bounce() {
        let cfg = ProjectileConfig { seq_len: 20, ..ProjectileConfig::default() };
        let p = ProjectileParams { vx: 2.0, vy: 0.5, hy: 2.0 };
        let (traj, contacts) = projectile_trajectory(&cfg, &p);
        let g = 9.91;
        let disc: f64 = 0.25 + 2.0 * g * 1.0;
        let t_hit = (0.5 + disc.sqrt()) / g;
        assert!((contacts[0].start - t_hit).abs() < 1e-12);
        assert!((contacts[0].release_vy - 0.8 * contacts[0].impact_vy.abs()).abs() < 1e-12);
        let first_event = (t_hit / 0.1).ceil() as usize;
        assert_eq!(traj.events[0], first_event);
    }

    #[test]
    fn projectile_starting_on_floor_at_rest() {
        let cfg = ProjectileConfig::default();
        let p = ProjectileParams { vx: 2.0, vy: 0.0, hy: 1.0 };
        let (traj, contacts) = projectile_trajectory(&cfg, &p);
        assert_eq!(contacts[0].start, 0.0);
        assert_eq!(traj.events, vec![0]);
        assert_eq!(traj.centers[0][0], [1.0, 1.0]);
        assert_eq!(traj.velocities[0][0], [0.0, 0.0]);
        for f in &traj.centers {
            assert_eq!(f[0][1], 1.0);
        }
    }

    #[test]
    fn reflect_folds_into_interval() {
        assert_eq!(reflect_1d(3.0, 1.0, 1.0, 9.0), (4.0, 1.0));
        assert_eq!(reflect_1d(10.0, 1.0, 1.0, 9.0), (7.0, -1.0));
    }
}
