//! Stokes-law inertial-particle integration against a frozen field
//! realization, plus the passive-tracer limit.
//!
//! The first-order system is `ẋ = y`, `ẏ = (v(x,t) − y)/τ`. One particle
//! step spans two field-grid steps, so the classic RK4 stages at `t`,
//! `t + h/2`, `t + h` read field indices `j`, `j+1`, `j+2` exactly — no
//! interpolation of the rough coefficient paths ever happens. Stage
//! arithmetic runs in the universal cover; positions wrap into `[0,1)²` once
//! per completed step.
//!
//! Explicit RK4 is stable only for `h/τ ≲ 2.8`. Below that the classic
//! scheme is used; above it `integrate` switches to an exponential
//! variation-of-constants step that treats the relaxation factor `e^(-h/τ)`
//! exactly and collapses to a Simpson tracer step with an O(τ) inertial
//! correction in the deep-stiff limit. The homogeneous decay is exact in
//! both regimes.

use crate::error::{require, Error, Result};
use crate::field::FieldPath;
use rayon::prelude::*;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

/// `(position on [0,1)², velocity in ℝ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl ParticleState {
    pub fn new(x: [f64; 2], y: [f64; 2]) -> Result<Self> {
        require(x[0].is_finite() && x[1].is_finite(), "x", x[0], "finite")?;
        require(y[0].is_finite() && y[1].is_finite(), "y", y[0], "finite")?;
        Ok(Self { x: wrap(x), y })
    }

    fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }
}

/// Stage-stability boundary for classic RK4 on the relaxation equation;
/// `integrate` switches to the exponential step beyond it.
pub const RK4_STIFF_LIMIT: f64 = 2.5;

/// Integration scheme for the inertial system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Classic fourth-order Runge–Kutta.
    Rk4,
    /// Exponential variation-of-constants step (exact homogeneous decay).
    Relaxation,
}

/// Scheme `integrate` selects for a given Stokes time and particle step.
pub fn scheme_for(tau: f64, dt_particle: f64) -> Scheme {
    if dt_particle / tau > RK4_STIFF_LIMIT {
        Scheme::Relaxation
    } else {
        Scheme::Rk4
    }
}

/// Integration window against a specific field grid. The particle step is
/// always exactly two field steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    tau: f64,
    dt_particle: f64,
    start_index: usize,
    n_steps: usize,
    output_stride: usize,
}

impl SimConfig {
    /// `tau = 0` selects tracer mode. The window `[start_index,
    /// start_index + 2·n_steps]` must lie inside the field grid.
    pub fn new(
        field: &FieldPath,
        tau: f64,
        start_index: usize,
        n_steps: usize,
        output_stride: usize,
    ) -> Result<Self> {
        require(tau.is_finite() && tau >= 0.0, "tau", tau, ">= 0")?;
        require(
            output_stride >= 1,
            "output_stride",
            output_stride as f64,
            ">= 1",
        )?;
        let last = start_index + 2 * n_steps;
        if last >= field.grid().len() {
            return Err(Error::IndexOutOfRange {
                index: last,
                n: field.grid().len(),
            });
        }
        Ok(Self {
            tau,
            dt_particle: 2.0 * field.grid().dt(),
            start_index,
            n_steps,
            output_stride,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dt_particle(&self) -> f64 {
        self.dt_particle
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn output_stride(&self) -> usize {
        self.output_stride
    }
}

fn wrap(x: [f64; 2]) -> [f64; 2] {
    [x[0] - x[0].floor(), x[1] - x[1].floor()]
}

/// Right-hand side `f(t_j, x, y) = (y, (v(x, t_j) − y)/τ)` of the inertial
/// system. Tracer mode has a separate path; `τ = 0` is rejected here.
pub fn rhs(
    field: &FieldPath,
    tau: f64,
    j: usize,
    state: &ParticleState,
) -> Result<([f64; 2], [f64; 2])> {
    require(tau > 0.0, "tau", tau, "> 0 (use the tracer path)")?;
    let v = field.velocity(state.x, j)?;
    Ok((
        state.y,
        [(v[0] - state.y[0]) / tau, (v[1] - state.y[1]) / tau],
    ))
}

/// One classic RK4 step from field index `j` (stages at `j`, `j+1`, `j+2`).
pub fn rk4_step(
    field: &FieldPath,
    config: &SimConfig,
    j: usize,
    state: &ParticleState,
) -> Result<ParticleState> {
    require(config.tau > 0.0, "tau", config.tau, "> 0 (use the tracer path)")?;
    if j + 2 >= field.grid().len() {
        return Err(Error::IndexOutOfRange {
            index: j + 2,
            n: field.grid().len(),
        });
    }
    Ok(rk4_step_unchecked(field, config.tau, config.dt_particle, j, state))
}

fn rk4_step_unchecked(
    field: &FieldPath,
    tau: f64,
    h: f64,
    j: usize,
    state: &ParticleState,
) -> ParticleState {
    let f = |jj: usize, x: [f64; 2], y: [f64; 2]| -> ([f64; 2], [f64; 2]) {
        let v = field.velocity_unchecked(x, jj);
        (y, [(v[0] - y[0]) / tau, (v[1] - y[1]) / tau])
    };
    let (x0, y0) = (state.x, state.y);
    let (k1x, k1y) = f(j, x0, y0);
    let (k2x, k2y) = f(
        j + 1,
        add(x0, scale(k1x, h / 2.0)),
        add(y0, scale(k1y, h / 2.0)),
    );
    let (k3x, k3y) = f(
        j + 1,
        add(x0, scale(k2x, h / 2.0)),
        add(y0, scale(k2y, h / 2.0)),
    );
    let (k4x, k4y) = f(j + 2, add(x0, scale(k3x, h)), add(y0, scale(k3y, h)));
    let x = [
        x0[0] + h / 6.0 * (k1x[0] + 2.0 * k2x[0] + 2.0 * k3x[0] + k4x[0]),
        x0[1] + h / 6.0 * (k1x[1] + 2.0 * k2x[1] + 2.0 * k3x[1] + k4x[1]),
    ];
    let y = [
        y0[0] + h / 6.0 * (k1y[0] + 2.0 * k2y[0] + 2.0 * k3y[0] + k4y[0]),
        y0[1] + h / 6.0 * (k1y[1] + 2.0 * k2y[1] + 2.0 * k3y[1] + k4y[1]),
    ];
    ParticleState { x: wrap(x), y }
}

/// One RK4 step of the tracer equation `ẋ = v(x, t)`, same stage alignment.
fn tracer_step_unchecked(field: &FieldPath, h: f64, j: usize, x0: [f64; 2]) -> [f64; 2] {
    let k1 = field.velocity_unchecked(x0, j);
    let k2 = field.velocity_unchecked(add(x0, scale(k1, h / 2.0)), j + 1);
    let k3 = field.velocity_unchecked(add(x0, scale(k2, h / 2.0)), j + 1);
    let k4 = field.velocity_unchecked(add(x0, scale(k3, h)), j + 2);
    wrap([
        x0[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x0[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ])
}

/// Exponential variation-of-constants step. With `θ = h/τ` and the quadratic
/// stage interpolant `g̃` of the fluid velocity along the predicted path,
///
/// ```text
///     y(h) = e^(-θ) y₀ + A w₀ + B w₁ + C w₂,
///     x(h) = x₀ + τ(1-e^(-θ)) y₀ + h(A + B/2 + C/3) − τ(A w₀ + B w₁ + C w₂),
/// ```
///
/// where `w_m = (1/τ)∫₀^h e^((σ-h)/τ) (σ/h)^m dσ`. Zero and constant fields
/// are integrated exactly; as `θ → ∞` the position update tends to the
/// Simpson tracer step plus the O(τ) inertial correction.
fn relaxation_step_unchecked(
    field: &FieldPath,
    tau: f64,
    h: f64,
    j: usize,
    state: &ParticleState,
) -> ParticleState {
    let (x0, y0) = (state.x, state.y);
    let theta = h / tau;
    let emt = (-theta).exp();
    let emt_half = (-0.5 * theta).exp();
    // w moments of the exponential kernel against 1, σ/h, (σ/h)².
    let w0 = 1.0 - emt;
    let w1 = 1.0 - w0 / theta;
    let w2 = 1.0 - 2.0 / theta + 2.0 * w0 / (theta * theta);

    let g0 = field.velocity_unchecked(x0, j);
    // Midpoint prediction with g frozen at g0 (exact for constant fields).
    let lag0 = [y0[0] - g0[0], y0[1] - g0[1]];
    let x_mid = [
        x0[0] + 0.5 * h * g0[0] + tau * (1.0 - emt_half) * lag0[0],
        x0[1] + 0.5 * h * g0[1] + tau * (1.0 - emt_half) * lag0[1],
    ];
    let g1 = field.velocity_unchecked(x_mid, j + 1);
    // End prediction with the midpoint slope.
    let x_end = [
        x0[0] + h * g1[0] + tau * w0 * lag0[0],
        x0[1] + h * g1[1] + tau * w0 * lag0[1],
    ];
    let g2 = field.velocity_unchecked(x_end, j + 2);

    let mut x = [0.0; 2];
    let mut y = [0.0; 2];
    for a in 0..2 {
        let aa = g0[a];
        let b = -3.0 * g0[a] + 4.0 * g1[a] - g2[a];
        let c = 2.0 * g0[a] - 4.0 * g1[a] + 2.0 * g2[a];
        let conv = aa * w0 + b * w1 + c * w2;
        y[a] = emt * y0[a] + conv;
        x[a] = x0[a] + tau * w0 * y0[a] + h * (aa + b / 2.0 + c / 3.0) - tau * conv;
    }
    ParticleState { x: wrap(x), y }
}

/// Trajectory output: strided frames plus the final full state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub tau: f64,
    pub dt_particle: f64,
    pub start_index: usize,
    pub n_steps: usize,
    pub stride: usize,
    pub field_hash: u64,
    /// Particle steps at which frames were stored (`0, stride, 2·stride, …`).
    pub frame_steps: Vec<usize>,
    /// Frame-major, particle-major within each frame.
    pub frames: Vec<Vec<ParticleState>>,
    pub final_states: Vec<ParticleState>,
}

fn integrate_one<S>(
    step: &S,
    n_steps: usize,
    stride: usize,
    start: usize,
    mut state: ParticleState,
) -> std::result::Result<(Vec<ParticleState>, ParticleState), usize>
where
    S: Fn(usize, &ParticleState) -> ParticleState,
{
    let mut frames = Vec::with_capacity(n_steps / stride + 1);
    frames.push(state);
    for s in 0..n_steps {
        state = step(start + 2 * s, &state);
        if !state.is_finite() {
            return Err(s);
        }
        if (s + 1) % stride == 0 {
            frames.push(state);
        }
    }
    Ok((frames, state))
}

/// Integrate a set of inertial particles. Particles are independent and run
/// in parallel; outputs are ordered by particle index regardless of schedule.
/// The scheme is chosen by [`scheme_for`]; `tau = 0` is rejected (use
/// [`integrate_tracer`]).
pub fn integrate(
    field: &FieldPath,
    config: &SimConfig,
    initial: &[ParticleState],
) -> Result<TrajectoryRecord> {
    require(config.tau > 0.0, "tau", config.tau, "> 0 (use integrate_tracer)")?;
    let scheme = scheme_for(config.tau, config.dt_particle);
    integrate_with(field, config, initial, scheme)
}

/// Integrate with an explicit scheme choice.
pub fn integrate_with(
    field: &FieldPath,
    config: &SimConfig,
    initial: &[ParticleState],
    scheme: Scheme,
) -> Result<TrajectoryRecord> {
    require(config.tau > 0.0, "tau", config.tau, "> 0")?;
    let (tau, h) = (config.tau, config.dt_particle);
    let step = move |j: usize, s: &ParticleState| match scheme {
        Scheme::Rk4 => rk4_step_unchecked(field, tau, h, j, s),
        Scheme::Relaxation => relaxation_step_unchecked(field, tau, h, j, s),
    };
    run(field, config, initial, step)
}

/// Integrate passive tracers (`ẋ = v(x,t)`) from bare positions. The stored
/// velocity channel carries the instantaneous fluid velocity.
pub fn integrate_tracer(
    field: &FieldPath,
    config: &SimConfig,
    initial_positions: &[[f64; 2]],
) -> Result<TrajectoryRecord> {
    require(config.tau == 0.0, "tau", config.tau, "0 in tracer mode")?;
    let h = config.dt_particle;
    let step = move |j: usize, s: &ParticleState| {
        let x = tracer_step_unchecked(field, h, j, s.x);
        let y = field.velocity_unchecked(x, j + 2);
        ParticleState { x, y }
    };
    let initial: Vec<ParticleState> = initial_positions
        .iter()
        .map(|&p| ParticleState {
            x: wrap(p),
            y: field.velocity_unchecked(wrap(p), config.start_index),
        })
        .collect();
    run(field, config, &initial, step)
}

fn run<S>(
    field: &FieldPath,
    config: &SimConfig,
    initial: &[ParticleState],
    step: S,
) -> Result<TrajectoryRecord>
where
    S: Fn(usize, &ParticleState) -> ParticleState + Sync,
{
    let results: Vec<std::result::Result<(Vec<ParticleState>, ParticleState), usize>> = initial
        .par_iter()
        .map(|&p0| {
            integrate_one(
                &step,
                config.n_steps,
                config.output_stride,
                config.start_index,
                p0,
            )
        })
        .collect();
    // Scan in index order so the reported failure is schedule-independent.
    for (p, r) in results.iter().enumerate() {
        if let Err(s) = r {
            return Err(Error::NonFiniteState {
                particle: p,
                step: *s,
            });
        }
    }
    let per_particle: Vec<(Vec<ParticleState>, ParticleState)> =
        results.into_iter().map(|r| r.unwrap()).collect();
    let n_frames = per_particle.first().map_or(0, |(f, _)| f.len());
    let frames: Vec<Vec<ParticleState>> = (0..n_frames)
        .map(|f| per_particle.iter().map(|(fr, _)| fr[f]).collect())
        .collect();
    let frame_steps: Vec<usize> = (0..config.n_steps + 1)
        .filter(|s| s % config.output_stride == 0)
        .collect();
    let final_states: Vec<ParticleState> = per_particle.into_iter().map(|(_, f)| f).collect();
    Ok(TrajectoryRecord {
        tau: config.tau,
        dt_particle: config.dt_particle,
        start_index: config.start_index,
        n_steps: config.n_steps,
        stride: config.output_stride,
        field_hash: field.metadata_hash(),
        frame_steps,
        frames,
        final_states,
    })
}

/// Velocity-energy envelope along the window:
/// `b(t) = e^(-t/τ)|y₀|² + (1/τ)∫₀^t e^((u-t)/τ) c1²(u) du`, with the history
/// integral accumulated by trapezoid on the field grid. Entry `s` bounds
/// `|y(t_s)|²` at particle step `s` for any trajectory started inside
/// `|y₀|² ≤ y0_norm_sq`.
pub fn velocity_energy_bound(
    field: &FieldPath,
    tau: f64,
    start_index: usize,
    n_steps: usize,
    y0_norm_sq: f64,
    probe_m: usize,
) -> Result<Vec<f64>> {
    require(tau > 0.0, "tau", tau, "> 0")?;
    let dt = field.grid().dt();
    let c1 = field.c1_norm_series(start_index, start_index + 2 * n_steps + 1, probe_m)?;
    let decay = (-dt / tau).exp();
    let mut integral = 0.0;
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(y0_norm_sq);
    for j in 1..c1.len() {
        integral = decay * integral
            + dt / 2.0 * (decay * c1[j - 1] * c1[j - 1] + c1[j] * c1[j]);
        if j % 2 == 0 {
            let t = j as f64 * dt;
            out.push((-t / tau).exp() * y0_norm_sq + integral / tau);
        }
    }
    Ok(out)
}

const TRAJ_MAGIC: &str = "fouflow-traj v1";

impl TrajectoryRecord {
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "{TRAJ_MAGIC}")?;
        writeln!(w, "tau = {}", self.tau)?;
        writeln!(w, "dt_particle = {}", self.dt_particle)?;
        writeln!(w, "start_index = {}", self.start_index)?;
        writeln!(w, "n_steps = {}", self.n_steps)?;
        writeln!(w, "stride = {}", self.stride)?;
        writeln!(w, "field_hash = {}", self.field_hash)?;
        writeln!(w, "particles = {}", self.final_states.len())?;
        writeln!(w, "frames = {}", self.frames.len())?;
        writeln!(w, "data")?;
        let mut dump = |states: &[ParticleState]| -> Result<()> {
            for s in states {
                for v in [s.x[0], s.x[1], s.y[0], s.y[1]] {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            Ok(())
        };
        for frame in &self.frames {
            dump(frame)?;
        }
        dump(&self.final_states)?;
        Ok(())
    }

    pub fn save_to_path<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        self.save(std::fs::File::create(path)?)
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let mut r = BufReader::new(reader);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != TRAJ_MAGIC {
            return Err(Error::Format(format!("bad magic line {line:?}")));
        }
        let mut tau = None;
        let mut dt_particle = None;
        let mut start_index = None;
        let mut n_steps = None;
        let mut stride = None;
        let mut field_hash = None;
        let mut particles = None;
        let mut n_frames = None;
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Format("missing data section".into()));
            }
            let t = line.trim_end();
            if t == "data" {
                break;
            }
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("malformed line {t:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let bad = || Error::Format(format!("bad value {v:?} for {k}"));
            match k {
                "tau" => tau = Some(v.parse().map_err(|_| bad())?),
                "dt_particle" => dt_particle = Some(v.parse().map_err(|_| bad())?),
                "start_index" => start_index = Some(v.parse().map_err(|_| bad())?),
                "n_steps" => n_steps = Some(v.parse().map_err(|_| bad())?),
                "stride" => stride = Some(v.parse().map_err(|_| bad())?),
                "field_hash" => field_hash = Some(v.parse().map_err(|_| bad())?),
                "particles" => particles = Some(v.parse().map_err(|_| bad())?),
                "frames" => n_frames = Some(v.parse().map_err(|_| bad())?),
                other => return Err(Error::Format(format!("unknown key {other:?}"))),
            }
        }
        let missing = |k: &str| Error::Format(format!("missing key {k}"));
        let particles: usize = particles.ok_or_else(|| missing("particles"))?;
        let n_frames: usize = n_frames.ok_or_else(|| missing("frames"))?;
        let mut read_block = |count: usize| -> Result<Vec<ParticleState>> {
            let mut buf = vec![0u8; count * 32];
            r.read_exact(&mut buf)
                .map_err(|e| Error::Format(format!("truncated data: {e}")))?;
            Ok((0..count)
                .map(|i| {
                    let f = |o: usize| {
                        f64::from_le_bytes(buf[32 * i + 8 * o..32 * i + 8 * o + 8].try_into().unwrap())
                    };
                    ParticleState {
                        x: [f(0), f(1)],
                        y: [f(2), f(3)],
                    }
                })
                .collect())
        };
        let frames: Vec<Vec<ParticleState>> = (0..n_frames)
            .map(|_| read_block(particles))
            .collect::<Result<_>>()?;
        let final_states = read_block(particles)?;
        let n_steps: usize = n_steps.ok_or_else(|| missing("n_steps"))?;
        let stride: usize = stride.ok_or_else(|| missing("stride"))?;
        Ok(Self {
            tau: tau.ok_or_else(|| missing("tau"))?,
            dt_particle: dt_particle.ok_or_else(|| missing("dt_particle"))?,
            start_index: start_index.ok_or_else(|| missing("start_index"))?,
            n_steps,
            stride,
            field_hash: field_hash.ok_or_else(|| missing("field_hash"))?,
            frame_steps: (0..n_steps + 1).filter(|s| s % stride == 0).collect(),
            frames,
            final_states,
        })
    }
}


fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn scale(a: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] * s, a[1] * s]
}
