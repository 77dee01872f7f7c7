//! Statistical estimators confronted with their analytic targets.
//!
//! Monte-Carlo quantities report a 4-sigma band alongside every estimate;
//! reductions over ensemble members run in member order so results do not
//! depend on the parallel schedule.

use crate::error::{require, Error, Result};
use crate::field::FieldPath;
use crate::fou;
use crate::grid::TimeGrid;
use crate::quad;
use crate::spectrum::{mode_energy, mode_set, SpectrumConfig};
use crate::streams::subseed;
use rayon::prelude::*;

/// Ordinary least-squares fit in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

/// OLS of `ln y` on `ln x` over the points with positive coordinates.
/// `None` with fewer than three usable points.
pub fn log_log_fit(points: &[(f64, f64)]) -> Option<SlopeFit> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = data.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = data.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = data.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = data.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = data.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = data
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let stderr = if n > 2 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(SlopeFit {
        slope,
        intercept,
        stderr,
    })
}

/// One Monte-Carlo point of the time structure function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagEstimate {
    pub lag: f64,
    pub estimate: f64,
    /// 4-sigma band of the ensemble mean.
    pub band: f64,
    pub analytic: f64,
    pub upper_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureFunctionReport {
    pub probe: [f64; 2],
    pub ensemble: usize,
    pub lags: Vec<LagEstimate>,
    pub slope: Option<SlopeFit>,
}

/// Analytic time structure function
/// `E|v(x,t+s) - v(x,t)|² = Σ_k |k|² · 2(Var_k − Cov_k(s))` over the cutoff
/// lattice.
pub fn structure_function_time_analytic(config: &SpectrumConfig, nu: f64, lag: f64) -> Result<f64> {
    let mut total = 0.0;
    for mode in mode_set(config).iter().filter(|m| m.in_k_plus) {
        let params = fou::FouParams::new(mode.alpha, mode.lambda, nu, config.h)?;
        let var = fou::fou_variance(&params);
        let cov = fou::fou_covariance(&params, lag)?;
        total += 2.0 * mode.alpha * 2.0 * (var - cov);
    }
    Ok(total)
}

/// Global upper bound `C(H,ν)|s|^(2H)` with
/// `C(H,ν) = ν^(2H) Σ_k λ_k |k|²` (each mode's increment variance is bounded
/// by `λ_k (ν|s|)^(2H)`).
pub fn structure_function_time_bound(config: &SpectrumConfig, nu: f64, lag: f64) -> f64 {
    let sum: f64 = mode_set(config)
        .iter()
        .map(|m| m.lambda * m.alpha)
        .sum();
    nu.powf(2.0 * config.h) * lag.abs().powf(2.0 * config.h) * sum
}

/// Monte-Carlo time structure function at a fixed probe point, over
/// independent field syntheses. Each member averages the squared increment
/// over every admissible start index; the band comes from member-to-member
/// scatter. Lags are grid-index multiples.
pub fn structure_function_time(
    config: &SpectrumConfig,
    nu: f64,
    grid: TimeGrid,
    probe: [f64; 2],
    lag_indices: &[usize],
    ensemble: usize,
    seed: u64,
) -> Result<StructureFunctionReport> {
    require(ensemble >= 2, "ensemble", ensemble as f64, ">= 2")?;
    for &l in lag_indices {
        if l >= grid.len() {
            return Err(Error::IndexOutOfRange {
                index: l,
                n: grid.len(),
            });
        }
    }
    let per_member: Vec<Vec<f64>> = (0..ensemble)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let field = FieldPath::synthesize(config, nu, grid, subseed(seed, i as u64))?;
            let series: Vec<[f64; 2]> = (0..grid.len())
                .map(|j| field.velocity_unchecked(probe, j))
                .collect();
            Ok(lag_indices
                .iter()
                .map(|&l| {
                    if l == 0 {
                        return 0.0;
                    }
                    let count = grid.len() - l;
                    let mut acc = 0.0;
                    for t0 in 0..count {
                        let d0 = series[t0 + l][0] - series[t0][0];
                        let d1 = series[t0 + l][1] - series[t0][1];
                        acc += d0 * d0 + d1 * d1;
                    }
                    acc / count as f64
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let lags: Vec<LagEstimate> = lag_indices
        .iter()
        .enumerate()
        .map(|(li, &l)| -> Result<LagEstimate> {
            let lag = l as f64 * grid.dt();
            let vals: Vec<f64> = per_member.iter().map(|m| m[li]).collect();
            let mean = vals.iter().sum::<f64>() / ensemble as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (ensemble as f64 - 1.0);
            Ok(LagEstimate {
                lag,
                estimate: mean,
                band: 4.0 * (var / ensemble as f64).sqrt(),
                analytic: structure_function_time_analytic(config, nu, lag)?,
                upper_bound: structure_function_time_bound(config, nu, lag),
            })
        })
        .collect::<Result<_>>()?;

    let points: Vec<(f64, f64)> = lags.iter().map(|l| (l.lag, l.estimate)).collect();
    Ok(StructureFunctionReport {
        probe,
        ensemble,
        lags,
        slope: log_log_fit(&points),
    })
}

/// Measured-vs-analytic energy of one mode shell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEnergyRow {
    pub z: [i32; 2],
    pub z_norm_sq: u32,
    pub analytic: f64,
    pub measured: f64,
    /// measured/analytic (1 when both are zero).
    pub ratio: f64,
    /// 4-sigma band on the ratio.
    pub band: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub ensemble: usize,
    pub rows: Vec<ModeEnergyRow>,
    /// Fit of `ln(κ·𝓔(κ))` against `ln κ` over the shells (κ = |k|).
    pub shell_fit: Option<SlopeFit>,
}

/// Per-mode measured energy `𝓔(k) = ½|k|²·mean|ψ̂_k(0)|²` over an ensemble of
/// independently synthesized fields, with ratios to the analytic value.
pub fn energy_spectrum_estimate(paths: &[FieldPath]) -> Result<SpectrumReport> {
    if paths.is_empty() {
        return Err(Error::EmptyInput("energy_spectrum_estimate needs paths"));
    }
    require(paths.len() >= 100, "ensemble", paths.len() as f64, ">= 100")?;
    let first = &paths[0];
    let config = first.spectrum().clone();
    let h = config.h;
    let kplus = first.kplus_modes().to_vec();
    for p in paths {
        if p.spectrum() != &config || p.kplus_modes().len() != kplus.len() {
            return Err(Error::EmptyInput("ensemble members differ in spectrum"));
        }
    }
    let e = paths.len() as f64;
    let rows: Vec<ModeEnergyRow> = kplus
        .iter()
        .enumerate()
        .map(|(i, mode)| {
            let mean_sq: f64 = paths
                .iter()
                .map(|p| {
                    let c = p.coeff(i);
                    c.re[0] * c.re[0] + c.im[0] * c.im[0]
                })
                .sum::<f64>()
                / e;
            let measured = 0.5 * mode.alpha * mean_sq;
            let analytic = mode_energy(mode, h);
            let (ratio, band) = if analytic > 0.0 {
                // |ψ̂|² is exponential with mean E|ψ̂|²: sd of the mean = mean/√E.
                (measured / analytic, 4.0 / e.sqrt())
            } else {
                (if measured == 0.0 { 1.0 } else { f64::INFINITY }, 0.0)
            };
            ModeEnergyRow {
                z: mode.z,
                z_norm_sq: mode.z_norm_sq(),
                analytic,
                measured,
                ratio,
                band,
            }
        })
        .collect();

    // Shell-average the measured energies, then fit κ·𝓔(κ).
    let mut shells: Vec<(u32, f64, usize)> = Vec::new();
    for r in &rows {
        match shells.iter_mut().find(|s| s.0 == r.z_norm_sq) {
            Some(s) => {
                s.1 += r.measured;
                s.2 += 1;
            }
            None => shells.push((r.z_norm_sq, r.measured, 1)),
        }
    }
    shells.sort_unstable_by_key(|s| s.0);
    let points: Vec<(f64, f64)> = shells
        .iter()
        .map(|&(z2, sum, count)| {
            let kappa = 2.0 * std::f64::consts::PI * (z2 as f64).sqrt();
            (kappa, kappa * sum / count as f64)
        })
        .collect();
    Ok(SpectrumReport {
        ensemble: paths.len(),
        rows,
        shell_fit: log_log_fit(&points),
    })
}

/// Box-count dispersion statistics on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterStats {
    pub box_resolution: usize,
    pub n_particles: usize,
    /// Variance of box counts over their mean; 1 in expectation for uniform
    /// scatter.
    pub dispersion_index: f64,
    pub mean_count: f64,
    /// Mean count below 5: the index estimate is noisy.
    pub low_occupancy: bool,
}

/// Index of dispersion of positions over an `m×m` box partition of `[0,1)²`.
pub fn dispersion_index(positions: &[[f64; 2]], m: usize) -> Result<ClusterStats> {
    if positions.is_empty() {
        return Err(Error::EmptyInput("dispersion_index needs positions"));
    }
    require(m >= 1, "m", m as f64, ">= 1")?;
    let mut counts = vec![0usize; m * m];
    for p in positions {
        let bx = ((p[0].rem_euclid(1.0)) * m as f64) as usize % m;
        let by = ((p[1].rem_euclid(1.0)) * m as f64) as usize % m;
        counts[bx * m + by] += 1;
    }
    let nb = (m * m) as f64;
    let mean = positions.len() as f64 / nb;
    let variance = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / nb;
    Ok(ClusterStats {
        box_resolution: m,
        n_particles: positions.len(),
        dispersion_index: variance / mean,
        mean_count: mean,
        low_occupancy: mean < 5.0,
    })
}

/// Analytic velocity autocovariance `R(x, y, t, s) = E[v_i(x,t) v_j(y,s)]`:
///
/// ```text
///     R = Σ_k [[k₂², -k₁k₂], [-k₁k₂, k₁²]] λ_k |k|^(-4H) δ_k(t-s) e_k(x-y),
///     δ_k(s) = C(H) ∫₀^∞ cos(s ν α_k z) z^(1-2H)/(1+z²) dz,
/// ```
///
/// evaluated over the cutoff mode set (the conjugate pairs collapse to a
/// cosine).
pub fn velocity_autocovariance_analytic(
    config: &SpectrumConfig,
    nu: f64,
    displacement: [f64; 2],
    lag: f64,
) -> Result<[[f64; 2]; 2]> {
    require(
        displacement[0].is_finite() && displacement[1].is_finite(),
        "displacement",
        displacement[0],
        "finite",
    )?;
    require(lag.is_finite(), "lag", lag, "finite")?;
    let h = config.h;
    let c_h = fou::spectral_constant(h);
    let mut r = [[0.0; 2]; 2];
    for mode in mode_set(config).iter().filter(|m| m.in_k_plus) {
        if mode.lambda == 0.0 {
            continue;
        }
        let omega = lag.abs() * nu * mode.alpha;
        let delta_k = c_h * quad::spectral_kernel(omega, h, quad::KERNEL_REL_TOL)?.value;
        let weight = mode.lambda * mode.alpha.powf(-2.0 * h) * delta_k;
        let phase =
            2.0 * std::f64::consts::PI
                * (mode.z[0] as f64 * displacement[0] + mode.z[1] as f64 * displacement[1]);
        let c = 2.0 * phase.cos() * weight;
        let (k1, k2) = (mode.k[0], mode.k[1]);
        r[0][0] += c * k2 * k2;
        r[0][1] -= c * k1 * k2;
        r[1][0] -= c * k1 * k2;
        r[1][1] += c * k1 * k1;
    }
    Ok(r)
}

/// Monte-Carlo estimate of the velocity autocovariance matrix
/// `E[v_i(x, t₀+lag) v_j(x+d, t₀)]` with 4-sigma bands, over independent
/// syntheses.
#[allow(clippy::too_many_arguments)]
pub fn velocity_autocovariance_mc(
    config: &SpectrumConfig,
    nu: f64,
    grid: TimeGrid,
    x: [f64; 2],
    displacement: [f64; 2],
    t0_index: usize,
    lag_index: usize,
    ensemble: usize,
    seed: u64,
) -> Result<([[f64; 2]; 2], [[f64; 2]; 2])> {
    require(ensemble >= 2, "ensemble", ensemble as f64, ">= 2")?;
    let j1 = t0_index + lag_index;
    if j1 >= grid.len() {
        return Err(Error::IndexOutOfRange {
            index: j1,
            n: grid.len(),
        });
    }
    let y = [x[0] + displacement[0], x[1] + displacement[1]];
    let samples: Vec<[f64; 4]> = (0..ensemble)
        .into_par_iter()
        .map(|i| -> Result<[f64; 4]> {
            let field = FieldPath::synthesize(config, nu, grid, subseed(seed, i as u64))?;
            let va = field.velocity_unchecked(x, j1);
            let vb = field.velocity_unchecked(y, t0_index);
            Ok([va[0] * vb[0], va[0] * vb[1], va[1] * vb[0], va[1] * vb[1]])
        })
        .collect::<Result<_>>()?;
    let e = ensemble as f64;
    let mut mean = [0.0; 4];
    for s in &samples {
        for i in 0..4 {
            mean[i] += s[i];
        }
    }
    for m in &mut mean {
        *m /= e;
    }
    let mut band = [0.0; 4];
    for s in &samples {
        for i in 0..4 {
            let d = s[i] - mean[i];
            band[i] += d * d;
        }
    }
    for b in &mut band {
        *b = 4.0 * (*b / (e - 1.0) / e).sqrt();
    }
    Ok((
        [[mean[0], mean[1]], [mean[2], mean[3]]],
        [[band[0], band[1]], [band[2], band[3]]],
    ))
}
