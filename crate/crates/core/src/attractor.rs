//! Explicit absorbing velocity ball and finite-sample pullback approximation.
//!
//! Along any trajectory the velocity obeys
//!
//! ```text
//!     |ẋ(t)|² ≤ e^(-t/τ) |ẋ(0)|² + (1/τ) ∫₀^t e^((s-t)/τ) |ψ(s)|²_{C¹} ds,
//! ```
//!
//! so the ball of squared radius `(1+δ)/τ ∫_{-∞}^0 e^(u/τ) |ψ(u)|²_{C¹} du`
//! is forward invariant and absorbs tempered sets. The infinite history is
//! truncated at `T_tail = τ·ln(1/ε)`; the truncation bound is reported and
//! added to the radius as a safety margin. A pullback section of the
//! attractor is approximated by integrating a uniform sample of the absorbing
//! ball at time `-T` forward to time 0; the intersection over depths is
//! replaced by the single deepest affordable pullback plus the nesting
//! diagnostic between clouds of different depths.

use crate::error::{require, Error, Result};
use crate::field::FieldPath;
use crate::particles::{integrate, ParticleState, SimConfig};
use crate::streams::{stream, Domain};
use rand::Rng;

/// Relative tail-truncation target of the history integral.
pub const TAIL_EPSILON: f64 = 1e-8;

/// Field-grid steps of history needed before a base index so the truncated
/// tail is below [`TAIL_EPSILON`].
pub fn required_history_steps(tau: f64, dt: f64) -> usize {
    (tau * (1.0 / TAIL_EPSILON).ln() / dt).ceil() as usize
}

/// Absorbing-ball radius with its inflation parameter and truncation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorbingRadius {
    pub r: f64,
    pub delta: f64,
    /// Contribution bound of the discarded `(-∞, -T_tail]` history (added to
    /// r² as a safety margin).
    pub tail_error: f64,
}

/// Finite point cloud approximating a pullback-attractor section.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorCloud {
    pub points: Vec<ParticleState>,
    /// Pullback depth in time units.
    pub pullback_time: f64,
    pub field_hash: u64,
    pub sample_count: usize,
    pub seed: u64,
}

/// Worst final-to-radius ratio over boundary samples.
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub worst_ratio: f64,
    pub r_start: f64,
    pub r_end: f64,
    /// Sample indices whose final speed exceeded `r_end · (1 + 1e-6)`.
    pub offenders: Vec<(usize, f64)>,
}

/// Semidistance `sup_{a∈from} min_{b∈to} d(a,b)` in the full phase space
/// (torus metric on positions) and in velocity coordinates alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudSemidistance {
    pub phase: f64,
    pub velocity: f64,
}

/// Absorbing radius at grid index `base_index`, using all history the grid
/// holds before it. Fails unless the available history reaches
/// `τ·ln(1/ε_tail)`.
pub fn absorbing_radius(
    field: &FieldPath,
    tau: f64,
    delta: f64,
    base_index: usize,
    probe_m: usize,
) -> Result<AbsorbingRadius> {
    require(tau.is_finite() && tau > 0.0, "tau", tau, "> 0")?;
    require(delta.is_finite() && delta > 0.0, "delta", delta, "> 0")?;
    if base_index >= field.grid().len() {
        return Err(Error::IndexOutOfRange {
            index: base_index,
            n: field.grid().len(),
        });
    }
    let dt = field.grid().dt();
    let needed = required_history_steps(tau, dt);
    if base_index < needed {
        return Err(Error::InsufficientHistory {
            needed,
            available: base_index,
            at: base_index,
        });
    }
    let c1 = field.c1_norm_series(0, base_index + 1, probe_m)?;
    let decay = (-dt / tau).exp();
    let mut integral = 0.0;
    let mut max_sq = 0.0f64;
    for j in 1..c1.len() {
        let a = c1[j - 1] * c1[j - 1];
        let b = c1[j] * c1[j];
        integral = decay * integral + dt / 2.0 * (decay * a + b);
        max_sq = max_sq.max(a.max(b));
    }
    max_sq = max_sq.max(c1.first().map_or(0.0, |v| v * v));
    let t_tail = base_index as f64 * dt;
    let tail_error = (-t_tail / tau).exp() * (1.0 + delta) * max_sq;
    let r_sq = (1.0 + delta) / tau * integral + tail_error;
    Ok(AbsorbingRadius {
        r: r_sq.sqrt(),
        delta,
        tail_error,
    })
}

/// Sample the boundary sphere `|y| = r(base)` with uniform positions,
/// integrate `n_steps` particle steps, and compare final speeds against the
/// shifted radius.
#[allow(clippy::too_many_arguments)]
pub fn forward_invariance_check(
    field: &FieldPath,
    tau: f64,
    delta: f64,
    base_index: usize,
    n_steps: usize,
    samples: usize,
    seed: u64,
    probe_m: usize,
) -> Result<InvarianceReport> {
    let start = absorbing_radius(field, tau, delta, base_index, probe_m)?;
    let end_index = base_index + 2 * n_steps;
    let end = absorbing_radius(field, tau, delta, end_index, probe_m)?;
    let mut rng = stream(seed, Domain::BoundarySample, 0);
    let init: Vec<ParticleState> = (0..samples)
        .map(|_| {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let phi = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            ParticleState {
                x,
                y: [start.r * phi.cos(), start.r * phi.sin()],
            }
        })
        .collect();
    let cfg = SimConfig::new(field, tau, base_index, n_steps, n_steps.max(1))?;
    let record = integrate(field, &cfg, &init)?;
    let mut worst = 0.0f64;
    let mut offenders = Vec::new();
    for (i, s) in record.final_states.iter().enumerate() {
        let speed = (s.y[0] * s.y[0] + s.y[1] * s.y[1]).sqrt();
        let ratio = if end.r > 0.0 {
            speed / end.r
        } else if speed > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > worst {
            worst = ratio;
        }
        if ratio > 1.0 + 1e-6 {
            offenders.push((i, ratio));
        }
    }
    Ok(InvarianceReport {
        worst_ratio: worst,
        r_start: start.r,
        r_end: end.r,
        offenders,
    })
}

/// Pullback snapshot: draw `samples` states uniformly on
/// `𝕋² × ball(r(start))`, integrate from `start_index` to
/// `start_index + 2·n_steps`, and return the final states.
#[allow(clippy::too_many_arguments)]
pub fn pullback_snapshot(
    field: &FieldPath,
    tau: f64,
    delta: f64,
    start_index: usize,
    n_steps: usize,
    samples: usize,
    seed: u64,
    probe_m: usize,
) -> Result<AttractorCloud> {
    let start = absorbing_radius(field, tau, delta, start_index, probe_m)?;
    let mut rng = stream(seed, Domain::PullbackInit, 0);
    let init: Vec<ParticleState> = (0..samples)
        .map(|_| {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let phi = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            let rad = start.r * rng.random::<f64>().sqrt();
            ParticleState {
                x,
                y: [rad * phi.cos(), rad * phi.sin()],
            }
        })
        .collect();
    let cfg = SimConfig::new(field, tau, start_index, n_steps, n_steps.max(1))?;
    let record = integrate(field, &cfg, &init)?;
    Ok(AttractorCloud {
        points: record.final_states,
        pullback_time: n_steps as f64 * cfg.dt_particle(),
        field_hash: field.metadata_hash(),
        sample_count: samples,
        seed,
    })
}

fn torus_dist_sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        let d = (a[i] - b[i]).abs();
        let d = d.min(1.0 - d);
        s += d * d;
    }
    s
}

/// Brute-force O(N²) semidistance between clouds.
pub fn semidistance(from: &AttractorCloud, to: &AttractorCloud) -> CloudSemidistance {
    let mut phase = 0.0f64;
    let mut velocity = 0.0f64;
    for a in &from.points {
        let mut best_phase = f64::INFINITY;
        let mut best_vel = f64::INFINITY;
        for b in &to.points {
            let dv =
                (a.y[0] - b.y[0]) * (a.y[0] - b.y[0]) + (a.y[1] - b.y[1]) * (a.y[1] - b.y[1]);
            let dp = torus_dist_sq(a.x, b.x) + dv;
            if dp < best_phase {
                best_phase = dp;
            }
            if dv < best_vel {
                best_vel = dv;
            }
        }
        phase = phase.max(best_phase);
        velocity = velocity.max(best_vel);
    }
    CloudSemidistance {
        phase: phase.sqrt(),
        velocity: velocity.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::CoeffPath;
    use crate::grid::TimeGrid;
    use crate::spectrum::{SpectrumConfig, SpectrumKind};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn zero_field(n: usize, dt: f64) -> FieldPath {
        let cfg = SpectrumConfig::new(SpectrumKind::Table(BTreeMap::new()), 1.0, 2, 0.5).unwrap();
        FieldPath::synthesize(&cfg, 1.0, TimeGrid::new(0.0, dt, n).unwrap(), 0).unwrap()
    }

    fn kolmogorov_field(n: usize, dt: f64, seed: u64) -> FieldPath {
        let cfg = SpectrumConfig::kolmogorov(1.0, 2, 1.0 / 3.0).unwrap();
        FieldPath::synthesize(&cfg, 1e-2, TimeGrid::new(0.0, dt, n).unwrap(), seed).unwrap()
    }

    /// Frozen single-mode field: constant C¹ norm, so the history integral
    /// has the closed form (1+δ)c²(1 - e^{-T/τ}).
    fn constant_c1_field(n: usize, dt: f64, amplitude: f64) -> FieldPath {
        let mut f = kolmogorov_field(4, 0.05, 77);
        let kplus_len = f.kplus_modes().len();
        let target: Vec<CoeffPath> = (0..kplus_len)
            .map(|i| {
                let re = if f.kplus_modes()[i].z == [1, 0] {
                    vec![amplitude; 4]
                } else {
                    vec![0.0; 4]
                };
                CoeffPath {
                    re,
                    im: vec![0.0; 4],
                    jitter: None,
                }
            })
            .collect();
        f.set_coeffs_for_tests(target);
        f.frozen_with_grid(0, TimeGrid::new(0.0, dt, n).unwrap()).unwrap()
    }

    #[test]
    fn zero_field_gives_zero_radius() {
        let f = zero_field(512, 0.05);
        let r = absorbing_radius(&f, 1.0, 0.1, 400, 8).unwrap();
        assert_eq!(r.r, 0.0);
        assert_eq!(r.tail_error, 0.0);
    }

    #[test]
    fn constant_c1_recovers_closed_form() {
        let tau = 1.0;
        let delta = 0.25;
        let dt = 0.05;
        let f = constant_c1_field(1024, dt, 0.3);
        let c1 = f.c1_norm(0, 64).unwrap();
        let base = 900;
        let r = absorbing_radius(&f, tau, delta, base, 64).unwrap();
        let t = base as f64 * dt;
        let want_sq = (1.0 + delta) * c1 * c1 * (1.0 - (-t / tau).exp()) + r.tail_error;
        assert_relative_eq!(r.r * r.r, want_sq, max_relative = 1e-3);
        // Doubling the available history moves r by less than the reported
        // tail bound (trapezoid drift stays under it for smooth c1).
        let shallow = absorbing_radius(&f, tau, delta, 450, 64).unwrap();
        assert!((r.r - shallow.r).abs() <= shallow.tail_error.sqrt().max(1e-6));
    }

    #[test]
    fn radius_is_monotone_in_delta() {
        let f = kolmogorov_field(700, 0.05, 5);
        let lo = absorbing_radius(&f, 1.0, 0.1, 600, 32).unwrap();
        let hi = absorbing_radius(&f, 1.0, 0.5, 600, 32).unwrap();
        assert!(hi.r > lo.r);
    }

    #[test]
    fn rejects_insufficient_history() {
        let f = kolmogorov_field(700, 0.05, 5);
        // τ = 1 needs ≈ 18.4/0.05 = 369 steps of history.
        match absorbing_radius(&f, 1.0, 0.1, 100, 32) {
            Err(Error::InsufficientHistory { needed, available, .. }) => {
                assert!(needed > available);
            }
            other => panic!("expected InsufficientHistory, got {other:?}"),
        }
    }

    #[test]
    fn forward_invariance_holds_on_sample() {
        let f = kolmogorov_field(560, 0.05, 42);
        let report = forward_invariance_check(&f, 0.5, 0.1, 400, 40, 64, 9, 32).unwrap();
        assert!(report.worst_ratio <= 1.0 + 1e-6, "worst {}", report.worst_ratio);
        assert!(report.offenders.is_empty());
    }

    #[test]
    fn zero_field_pullback_keeps_positions() {
        let f = zero_field(900, 0.05);
        let cloud = pullback_snapshot(&f, 1.0, 0.1, 400, 100, 50, 3, 8).unwrap();
        for p in &cloud.points {
            assert_eq!(p.y, [0.0, 0.0]);
        }
        // Zero radius ⇒ zero initial velocity ⇒ positions never move.
        let mut rng = stream(3, Domain::PullbackInit, 0);
        for p in &cloud.points {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let _phi: f64 = rng.random();
            let _u: f64 = rng.random();
            assert_eq!(p.x, x);
        }
    }

    #[test]
    fn pullback_is_deterministic() {
        let f = kolmogorov_field(1100, 0.05, 17);
        let a = pullback_snapshot(&f, 0.5, 0.1, 600, 100, 40, 7, 32).unwrap();
        let b = pullback_snapshot(&f, 0.5, 0.1, 600, 100, 40, 7, 32).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn temperedness_surrogate_decays() {
        // r(θ(-t)ψ)e^{-ct} → 0: radii over a sliding base stay bounded, so
        // the exponential wins.
        let f = kolmogorov_field(1100, 0.05, 29);
        for &c in &[0.1, 1.0] {
            let mut vals = Vec::new();
            for (i, base) in (600..1100).step_by(100).enumerate() {
                let r = absorbing_radius(&f, 0.5, 0.1, base, 32).unwrap();
                let t = (i * 100) as f64 * 0.05;
                vals.push(r.r * (-c * t).exp());
            }
            assert!(vals.last().unwrap() < &(vals[0] * 0.2 + 1e-12));
        }
    }

    #[test]
    fn semidistance_basics() {
        let mk = |pts: Vec<ParticleState>| AttractorCloud {
            points: pts,
            pullback_time: 1.0,
            field_hash: 0,
            sample_count: 0,
            seed: 0,
        };
        let a = mk(vec![ParticleState {
            x: [0.95, 0.5],
            y: [1.0, 0.0],
        }]);
        let b = mk(vec![ParticleState {
            x: [0.05, 0.5],
            y: [0.0, 0.0],
        }]);
        let d = semidistance(&a, &b);
        // torus wraps the 0.9 gap to 0.1
        assert_relative_eq!(d.velocity, 1.0, max_relative = 1e-12);
        assert_relative_eq!(d.phase, (0.01f64 + 1.0).sqrt(), max_relative = 1e-12);
        // identical clouds: zero
        let z = semidistance(&a, &a);
        assert_eq!(z.phase, 0.0);
        assert_eq!(z.velocity, 0.0);
    }
}
