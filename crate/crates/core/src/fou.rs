//! Stationary fractional Ornstein–Uhlenbeck processes.
//!
//! A process with parameters `(α, λ, ν, H)` is the stationary solution of the
//! fractional Langevin equation driven by `ν^H √λ B^H`; its covariance is
//!
//! ```text
//!     Cov(Y_t, Y_s) = C(H) λ α^(-2H) ∫₀^∞ cos((t-s) ν α x) x^(1-2H)/(1+x²) dx,
//!     C(H) = Γ(2H+1) sin(πH) / π,
//! ```
//!
//! with `Var(Y) = λ Γ(2H) H / α^(2H)`. Sampling a path on a uniform grid is
//! exact: the stationary covariance is Toeplitz, and the innovations
//! recursion (Levinson–Durbin) applies the unique lower-triangular Cholesky
//! transport of i.i.d. standard normals in O(n²) time and O(n) memory. The
//! factor it applies is identical to the dense Cholesky factor; the dense
//! route is kept for covariance matrices and as a cross-check.

use crate::error::{require, Error, Result};
use crate::grid::TimeGrid;
use crate::quad::{self, spectral_kernel, QuadOutcome};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::gamma;

/// Relative accuracy target of the covariance quadrature (against the
/// zero-lag scale).
pub const COVARIANCE_REL_TOL: f64 = quad::KERNEL_REL_TOL;

/// Largest grid accepted by the exact sampler.
pub const CHOLESKY_CAP: usize = 8192;

/// Diagonal jitter escalation, as multiples of the process variance.
const JITTER_LADDER: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Parameters `(α, λ, ν, H)` of one fractional Langevin coefficient equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FouParams {
    alpha: f64,
    lambda: f64,
    nu: f64,
    h: f64,
}

impl FouParams {
    pub fn new(alpha: f64, lambda: f64, nu: f64, h: f64) -> Result<Self> {
        require(alpha.is_finite() && alpha > 0.0, "alpha", alpha, "> 0")?;
        require(lambda.is_finite() && lambda >= 0.0, "lambda", lambda, ">= 0")?;
        require(nu.is_finite() && nu > 0.0, "nu", nu, "> 0")?;
        require(h > 0.0 && h < 1.0, "h", h, "in (0, 1)")?;
        Ok(Self {
            alpha,
            lambda,
            nu,
            h,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    fn with_unit_lambda(&self) -> Self {
        Self {
            lambda: 1.0,
            ..*self
        }
    }
}

/// `C(H) = Γ(2H+1) sin(πH) / π`.
pub fn spectral_constant(h: f64) -> f64 {
    gamma(2.0 * h + 1.0) * (std::f64::consts::PI * h).sin() / std::f64::consts::PI
}

/// Stationary variance `λ Γ(2H) H / α^(2H)`. Independent of ν.
pub fn fou_variance(params: &FouParams) -> f64 {
    params.lambda * gamma(2.0 * params.h) * params.h * params.alpha.powf(-2.0 * params.h)
}

/// Stationary covariance at time lag `s` (even in `s`).
pub fn fou_covariance(params: &FouParams, s: f64) -> Result<f64> {
    fou_covariance_with_tol(params, s, COVARIANCE_REL_TOL).map(|q| q.value)
}

/// Covariance with an explicit tolerance; returns the quadrature outcome so
/// callers can inspect the achieved error estimate.
pub fn fou_covariance_with_tol(params: &FouParams, s: f64, rel_tol: f64) -> Result<QuadOutcome> {
    require(s.is_finite(), "s", s, "finite")?;
    let omega = s.abs() * params.nu * params.alpha;
    let k = spectral_kernel(omega, params.h, rel_tol)?;
    let pref = spectral_constant(params.h) * params.lambda * params.alpha.powf(-2.0 * params.h);
    Ok(QuadOutcome {
        value: pref * k.value,
        abs_error: pref * k.abs_error,
        panels: k.panels,
    })
}

/// Upper (and optional window-dependent lower) bound on the increment second
/// moment `E|Y_t - Y_s|²` at lag `s`, for a Hölder exponent `γ ∈ (0, H]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureBounds {
    /// Valid for lags inside a window `[-T, T]`; `None` without a window.
    pub lower: Option<f64>,
    pub upper: f64,
}

/// Increment bounds `lower ≤ E|Y_t - Y_s|² ≤ upper · (as |t-s|^(2γ))`.
///
/// For `γ = H` the upper constant collapses: `2 C(H) ∫ (1-cos z) z^(-1-2H) dz
/// = 1`, so the bound is exactly `λ (ν|s|)^(2H)`. For `γ < H` it is
/// `4 C(H) λ α^(2γ-2H) (ν|s|/2)^(2γ) ∫ x^(1+2γ-2H)/(1+x²) dx`. The lower
/// bound exists only on a window `[-T, T]` and uses the worst lag `2T`:
/// `2 C(H) λ (ν|s|)^(2H) ∫ (1-cos z) z^(1-2H)/((2Tνα)² + z²) dz`.
pub fn structure_function_bounds(
    params: &FouParams,
    s: f64,
    gamma_exp: f64,
    window: Option<f64>,
) -> Result<StructureBounds> {
    require(s.is_finite(), "s", s, "finite")?;
    require(
        gamma_exp > 0.0 && gamma_exp <= params.h,
        "gamma",
        gamma_exp,
        "in (0, h]",
    )?;
    let h = params.h;
    let lam = params.lambda;
    let nu = params.nu;
    let alpha = params.alpha;
    let pi = std::f64::consts::PI;
    let c_h = spectral_constant(h);

    let upper = if (h - gamma_exp).abs() < 1e-12 {
        // I_H = π / (2 Γ(1+2H) sin(πH)); 2 C(H) I_H = 1.
        let i_h = pi / (2.0 * gamma(1.0 + 2.0 * h) * (pi * h).sin());
        2.0 * c_h * lam * (nu * s.abs()).powf(2.0 * h) * i_h
    } else {
        let j = (pi / 2.0) / (pi * (1.0 + gamma_exp - h)).sin();
        4.0 * c_h
            * lam
            * alpha.powf(2.0 * gamma_exp - 2.0 * h)
            * (nu * s.abs() / 2.0).powf(2.0 * gamma_exp)
            * j
    };

    let lower = match window {
        Some(t_win) => {
            require(t_win.is_finite() && t_win > 0.0, "window", t_win, "> 0")?;
            if s.abs() > 2.0 * t_win {
                None
            } else if s == 0.0 {
                Some(0.0)
            } else {
                let c = 2.0 * t_win * nu * alpha;
                let integral = quad::one_minus_cos_integral(c, h, COVARIANCE_REL_TOL)?;
                Some(2.0 * c_h * lam * (nu * s.abs()).powf(2.0 * h) * integral)
            }
        }
        None => None,
    };

    Ok(StructureBounds { lower, upper })
}

/// First row of the (Toeplitz) covariance matrix on `grid`: entry `j` is the
/// covariance at lag `j·dt`. Only `n` quadratures are performed.
pub fn covariance_row(params: &FouParams, grid: &TimeGrid) -> Result<Vec<f64>> {
    (0..grid.len())
        .map(|j| fou_covariance(params, j as f64 * grid.dt()))
        .collect()
}

/// Dense symmetric Toeplitz covariance matrix `M[i][j] = Cov(lag (i-j)·dt)`.
pub fn fou_covariance_matrix(params: &FouParams, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    let row = covariance_row(params, grid)?;
    let n = row.len();
    Ok(DMatrix::from_fn(n, n, |i, j| row[i.abs_diff(j)]))
}

/// Cholesky factorization with the escalating diagonal-jitter policy. Returns
/// the lower factor and the jitter applied (as an absolute diagonal shift),
/// if any.
pub fn cholesky_with_jitter(
    matrix: &DMatrix<f64>,
    params: &FouParams,
) -> Result<(DMatrix<f64>, Option<f64>)> {
    let var = matrix[(0, 0)];
    if let Some(chol) = matrix.clone().cholesky() {
        return Ok((chol.unpack(), None));
    }
    for eps in JITTER_LADDER {
        let shift = eps * var;
        let mut jittered = matrix.clone();
        for i in 0..matrix.nrows() {
            jittered[(i, i)] += shift;
        }
        if let Some(chol) = jittered.cholesky() {
            return Ok((chol.unpack(), Some(shift)));
        }
    }
    Err(factorization_failed(params))
}

fn factorization_failed(params: &FouParams) -> Error {
    Error::FactorizationFailed {
        alpha: params.alpha,
        nu: params.nu,
        h: params.h,
        max_jitter: *JITTER_LADDER.last().unwrap(),
    }
}

/// One realization of a stationary fOU path on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealFouPath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub params: FouParams,
    /// 1 for a standalone real process, 1/2 for one component of a complex
    /// coefficient.
    pub variance_scale: f64,
    /// Absolute diagonal jitter that was needed to factorize, if any.
    pub jitter: Option<f64>,
}

/// Exact stationary sampler for a fixed `(α, ν, H, grid)`. The unit-noise
/// covariance row is computed once; each sample runs the innovations
/// recursion against a fresh normal vector and applies `√(variance_scale·λ)`.
#[derive(Debug, Clone)]
pub struct StationarySampler {
    params: FouParams,
    grid: TimeGrid,
    unit_row: Vec<f64>,
    jitter: Option<f64>,
}

impl StationarySampler {
    pub fn new(params: FouParams, grid: TimeGrid) -> Result<Self> {
        if grid.len() > CHOLESKY_CAP {
            return Err(Error::GridTooLarge {
                n: grid.len(),
                cap: CHOLESKY_CAP,
            });
        }
        let mut unit_row = covariance_row(&params.with_unit_lambda(), &grid)?;
        // Determine once whether the recursion needs jitter; the prediction
        // variances depend only on the row, not on the noise.
        let mut jitter = None;
        if innovations_feasible(&unit_row).is_err() {
            let var = unit_row[0];
            let mut fixed = false;
            for eps in JITTER_LADDER {
                unit_row[0] = var + eps * var;
                if innovations_feasible(&unit_row).is_ok() {
                    jitter = Some(eps * var);
                    fixed = true;
                    break;
                }
            }
            if !fixed {
                return Err(factorization_failed(&params));
            }
        }
        Ok(Self {
            params,
            grid,
            unit_row,
            jitter,
        })
    }

    /// Construct from a precomputed unit-noise covariance row (one entry per
    /// lag). Used by callers that share rows across equal-α modes.
    pub fn from_unit_row(params: FouParams, grid: TimeGrid, unit_row: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(unit_row.len(), grid.len());
        if grid.len() > CHOLESKY_CAP {
            return Err(Error::GridTooLarge {
                n: grid.len(),
                cap: CHOLESKY_CAP,
            });
        }
        let mut row = unit_row;
        let mut jitter = None;
        if innovations_feasible(&row).is_err() {
            let var = row[0];
            let mut fixed = false;
            for eps in JITTER_LADDER {
                row[0] = var + eps * var;
                if innovations_feasible(&row).is_ok() {
                    jitter = Some(eps * var);
                    fixed = true;
                    break;
                }
            }
            if !fixed {
                return Err(factorization_failed(&params));
            }
        }
        Ok(Self {
            params,
            grid,
            unit_row: row,
            jitter,
        })
    }

    pub fn jitter(&self) -> Option<f64> {
        self.jitter
    }

    pub fn unit_row(&self) -> &[f64] {
        &self.unit_row
    }

    /// Draw one path with the given variance scale (1 or 1/2).
    pub fn sample<R: Rng + ?Sized>(&self, variance_scale: f64, rng: &mut R) -> RealFouPath {
        let n = self.grid.len();
        let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut values = vec![0.0; n];
        innovations_apply(&self.unit_row, &noise, &mut values)
            .expect("feasibility established at construction");
        let amp = (variance_scale * self.params.lambda).sqrt();
        for v in &mut values {
            *v *= amp;
        }
        RealFouPath {
            grid: self.grid,
            values,
            params: self.params,
            variance_scale,
            jitter: self.jitter,
        }
    }
}

/// Draw one stationary path. `variance_scale` must be 1 (standalone real
/// process) or 1/2 (component of a complex coefficient).
pub fn sample_real_fou<R: Rng + ?Sized>(
    params: &FouParams,
    grid: TimeGrid,
    variance_scale: f64,
    rng: &mut R,
) -> Result<RealFouPath> {
    require(
        variance_scale == 1.0 || variance_scale == 0.5,
        "variance_scale",
        variance_scale,
        "1 or 1/2",
    )?;
    let sampler = StationarySampler::new(*params, grid)?;
    Ok(sampler.sample(variance_scale, rng))
}

/// Draw the two independent components of one complex coefficient, each with
/// variance scale 1/2, so that `E|ψ̂|² = Var` and the real/imaginary parts
/// carry `Var/2` each.
pub fn sample_complex_coeff_pair<R1, R2>(
    params: &FouParams,
    grid: TimeGrid,
    re_rng: &mut R1,
    im_rng: &mut R2,
) -> Result<(RealFouPath, RealFouPath)>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    let sampler = StationarySampler::new(*params, grid)?;
    let re = sampler.sample(0.5, re_rng);
    let im = sampler.sample(0.5, im_rng);
    Ok((re, im))
}

/// Innovation-variance dry run of the Levinson–Durbin recursion.
fn innovations_feasible(row: &[f64]) -> std::result::Result<(), ()> {
    let n = row.len();
    if !(row[0] > 0.0) || !row[0].is_finite() {
        return Err(());
    }
    let mut phi = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut sigma2 = row[0];
    for j in 1..n {
        let mut acc = row[j];
        for i in 1..j {
            acc -= phi[i - 1] * row[j - i];
        }
        let k = acc / sigma2;
        sigma2 *= 1.0 - k * k;
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(());
        }
        scratch[..j - 1].copy_from_slice(&phi[..j - 1]);
        for i in 1..j {
            phi[i - 1] = scratch[i - 1] - k * scratch[j - 1 - i];
        }
        phi[j - 1] = k;
    }
    Ok(())
}

/// Apply the innovations form of the Cholesky transport: `out = L·noise`
/// where `L` is the lower Cholesky factor of the Toeplitz matrix generated by
/// `row`. The conditional representation `y_j = E[y_j | y_{<j}] + σ_j ξ_j`
/// realizes exactly the rows of `L`.
fn innovations_apply(row: &[f64], noise: &[f64], out: &mut [f64]) -> std::result::Result<(), ()> {
    let n = row.len();
    if !(row[0] > 0.0) || !row[0].is_finite() {
        return Err(());
    }
    let mut phi = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut sigma2 = row[0];
    out[0] = sigma2.sqrt() * noise[0];
    for j in 1..n {
        let mut acc = row[j];
        for i in 1..j {
            acc -= phi[i - 1] * row[j - i];
        }
        let k = acc / sigma2;
        sigma2 *= 1.0 - k * k;
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(());
        }
        scratch[..j - 1].copy_from_slice(&phi[..j - 1]);
        for i in 1..j {
            phi[i - 1] = scratch[i - 1] - k * scratch[j - 1 - i];
        }
        phi[j - 1] = k;
        let mut pred = 0.0;
        for i in 1..=j {
            pred += phi[i - 1] * out[j - i];
        }
        out[j] = pred + sigma2.sqrt() * noise[j];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn params(alpha: f64, lambda: f64, nu: f64, h: f64) -> FouParams {
        FouParams::new(alpha, lambda, nu, h).unwrap()
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(FouParams::new(0.0, 1.0, 1.0, 0.5).is_err());
        assert!(FouParams::new(1.0, -1.0, 1.0, 0.5).is_err());
        assert!(FouParams::new(1.0, 1.0, 0.0, 0.5).is_err());
        assert!(FouParams::new(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(FouParams::new(1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn variance_classical_ou() {
        // Γ(1)·(1/2)·2 = 1: the classical OU variance λ/(2α).
        let v = fou_variance(&params(1.0, 2.0, 1.0, 0.5));
        assert_relative_eq!(v, 1.0, max_relative = 1e-13);
    }

    #[test]
    fn variance_zero_noise() {
        assert_eq!(fou_variance(&params(1.0, 0.0, 1.0, 0.3)), 0.0);
    }

    #[test]
    fn variance_rough_mode_and_nu_independence() {
        // Γ(2/3)·(1/3)·(4π²)^(-2/3); Γ(2/3) = 1.3541179394264004 from an
        // independent high-precision gamma evaluation.
        let want = 1.3541179394264004 / 3.0 * (4.0 * std::f64::consts::PI.powi(2)).powf(-2.0 / 3.0);
        let a = fou_variance(&params(4.0 * std::f64::consts::PI.powi(2), 1.0, 1e-2, 1.0 / 3.0));
        let b = fou_variance(&params(4.0 * std::f64::consts::PI.powi(2), 1.0, 1.0, 1.0 / 3.0));
        assert_relative_eq!(a, want, max_relative = 1e-12);
        assert_eq!(a, b);
    }

    #[test]
    fn covariance_matches_classical_ou_closed_form() {
        let p = params(1.0, 2.0, 1.0, 0.5);
        for &s in &[0.0, 0.1, 0.5, 1.0, 3.0, 10.0] {
            let got = fou_covariance(&p, s).unwrap();
            let want = (-s).exp();
            assert_abs_diff_eq!(got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn covariance_rough_frozen_value() {
        // Independent 40-digit oscillatory quadrature of the defining
        // integral; a singularity-corrected 10^8-node Simpson rule on
        // (0, 10^6] agrees to 6e-7.
        let p = params(1.0, 1.0, 1.0, 1.0 / 3.0);
        let got = fou_covariance(&p, 2.0).unwrap();
        assert_abs_diff_eq!(got, 0.004347140569651373, epsilon = 1e-9);
    }

    #[test]
    fn covariance_zero_lag_equals_variance_across_sweep() {
        let pi2 = std::f64::consts::PI.powi(2);
        for &h in &[0.1, 1.0 / 3.0, 0.5, 0.7, 0.9] {
            for &alpha in &[1.0, 4.0 * pi2, 16.0 * pi2] {
                for &nu in &[1e-2, 1.0] {
                    let p = params(alpha, 1.7, nu, h);
                    let var = fou_variance(&p);
                    let cov0 = fou_covariance(&p, 0.0).unwrap();
                    assert_abs_diff_eq!(cov0, var, epsilon = 1e-9 * var);
                }
            }
        }
    }

    #[test]
    fn covariance_is_even_and_dominated_by_variance() {
        let p = params(4.0 * std::f64::consts::PI.powi(2), 1.3, 1e-2, 1.0 / 3.0);
        let var = fou_variance(&p);
        for &s in &[0.25, 1.0, 5.0, 20.0, 100.0] {
            let plus = fou_covariance(&p, s).unwrap();
            let minus = fou_covariance(&p, -s).unwrap();
            assert_eq!(plus, minus);
            assert!(plus.abs() <= var * (1.0 + 1e-9));
        }
    }

    #[test]
    fn covariance_decay_monotone_for_ou() {
        let p = params(1.0, 1.0, 1.0, 0.5);
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let s = i as f64 * 0.5;
            let c = fou_covariance(&p, s).unwrap().abs();
            assert!(c <= prev + 1e-12);
            prev = c;
        }
    }

    #[test]
    fn upper_bound_slope_matches_ou_small_lag() {
        // For H = 1/2, γ = 1/2 the bound is exactly λν|s|, the slope of the
        // OU increment variance at 0.
        let p = params(1.0, 1.0, 1.0, 0.5);
        let b = structure_function_bounds(&p, 1e-6, 0.5, None).unwrap();
        assert_relative_eq!(b.upper / 1e-6, 1.0, max_relative = 1e-12);
        // And it dominates the closed-form increment variance everywhere.
        for &s in &[0.01, 0.1, 1.0, 5.0] {
            let b = structure_function_bounds(&p, s, 0.5, None).unwrap();
            let exact = 1.0 - (-s).exp(); // (λ/α)(1 - e^{-να|s|})
            assert!(b.upper >= exact);
        }
    }

    #[test]
    fn bounds_zero_lag_and_domain() {
        let p = params(2.0, 1.0, 1.0, 0.4);
        let b = structure_function_bounds(&p, 0.0, 0.4, None).unwrap();
        assert_eq!(b.upper, 0.0);
        assert!(structure_function_bounds(&p, 1.0, 0.41, None).is_err());
        assert!(structure_function_bounds(&p, 1.0, 0.0, None).is_err());
    }

    #[test]
    fn sandwich_brackets_exact_ou_increments() {
        // lower(T) ≤ E|ΔY|² = (λ/α)(1-e^{-να|s|}) ≤ upper on a window.
        let p = params(1.0, 1.0, 1.0, 0.5);
        let t_win = 4.0;
        for &s in &[0.05, 0.2, 1.0, 4.0, 8.0] {
            let b = structure_function_bounds(&p, s, 0.5, Some(t_win)).unwrap();
            let exact = 1.0 - (-s).exp();
            let lower = b.lower.expect("window supplied");
            assert!(lower <= exact * (1.0 + 1e-9), "s={s}: {lower} > {exact}");
            assert!(exact <= b.upper * (1.0 + 1e-9), "s={s}: {exact} > {}", b.upper);
        }
        // Lag outside the window: no lower bound.
        let b = structure_function_bounds(&p, 9.0, 0.5, Some(4.0)).unwrap();
        assert!(b.lower.is_none());
        let b = structure_function_bounds(&p, 1.0, 0.5, None).unwrap();
        assert!(b.lower.is_none());
    }

    #[test]
    fn sandwich_brackets_rough_increments() {
        // For H ≠ 1/2 compare against 2(Var - Cov(s)) from the quadrature.
        for &h in &[1.0 / 3.0, 0.7] {
            let p = params(4.0 * std::f64::consts::PI.powi(2), 1.0, 1e-2, h);
            let t_win = 8.0;
            for &s in &[0.1, 0.5, 2.0, 8.0] {
                let b = structure_function_bounds(&p, s, h, Some(t_win)).unwrap();
                let exact = 2.0 * (fou_variance(&p) - fou_covariance(&p, s).unwrap());
                let lower = b.lower.unwrap();
                assert!(lower <= exact * (1.0 + 1e-8), "h={h} s={s}");
                assert!(exact <= b.upper * (1.0 + 1e-8), "h={h} s={s}");
            }
        }
    }

    #[test]
    fn matrix_single_point() {
        let p = params(3.0, 1.5, 2.0, 0.3);
        let g = TimeGrid::new(0.0, 1.0, 1).unwrap();
        let m = fou_covariance_matrix(&p, &g).unwrap();
        assert_eq!(m.nrows(), 1);
        assert_abs_diff_eq!(m[(0, 0)], fou_variance(&p), epsilon = 1e-9 * fou_variance(&p));
    }

    #[test]
    fn matrix_ou_toeplitz_row() {
        let p = params(1.0, 2.0, 1.0, 0.5);
        let g = TimeGrid::new(0.0, 1.0, 3).unwrap();
        let m = fou_covariance_matrix(&p, &g).unwrap();
        let want = [1.0, (-1.0f64).exp(), (-2.0f64).exp()];
        for j in 0..3 {
            assert_abs_diff_eq!(m[(0, j)], want[j], epsilon = 1e-9);
            assert_eq!(m[(0, j)], m[(j, 0)]);
        }
        assert_eq!(m[(1, 2)], m[(0, 1)]);
    }

    #[test]
    fn matrix_eigenvalues_nonnegative() {
        // Independent eigensolve route: the covariance matrix must be PSD.
        let p = params(4.0 * std::f64::consts::PI.powi(2), 1.0, 1e-2, 1.0 / 3.0);
        let g = TimeGrid::new(0.0, 0.05, 48).unwrap();
        let m = fou_covariance_matrix(&p, &g).unwrap();
        let trace = m.trace();
        let eig = m.symmetric_eigenvalues();
        for &e in eig.iter() {
            assert!(e >= -1e-10 * trace, "eigenvalue {e} < -1e-10·trace");
        }
    }

    #[test]
    fn innovations_recursion_equals_dense_cholesky() {
        let p = params(4.0 * std::f64::consts::PI.powi(2), 1.0, 1e-2, 1.0 / 3.0);
        let g = TimeGrid::new(0.0, 0.1, 64).unwrap();
        let unit = p.with_unit_lambda();
        let m = fou_covariance_matrix(&unit, &g).unwrap();
        let (l, jit) = cholesky_with_jitter(&m, &unit).unwrap();
        assert!(jit.is_none());
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let noise: Vec<f64> = (0..64).map(|_| rng.sample(StandardNormal)).collect();
        let dense = &l * nalgebra::DVector::from_column_slice(&noise);
        let row = covariance_row(&unit, &g).unwrap();
        let mut fast = vec![0.0; 64];
        innovations_apply(&row, &noise, &mut fast).unwrap();
        for j in 0..64 {
            assert_abs_diff_eq!(fast[j], dense[j], epsilon = 1e-10 * row[0].sqrt());
        }
    }

    #[test]
    fn zero_noise_gives_zero_path() {
        let p = params(1.0, 0.0, 1.0, 0.4);
        let g = TimeGrid::new(0.0, 0.5, 16).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let path = sample_real_fou(&p, g, 1.0, &mut rng).unwrap();
        assert!(path.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let p = params(2.0, 1.0, 0.5, 0.6);
        let g = TimeGrid::new(0.0, 0.25, 32).unwrap();
        let a = sample_real_fou(&p, g, 1.0, &mut ChaCha12Rng::seed_from_u64(7)).unwrap();
        let b = sample_real_fou(&p, g, 1.0, &mut ChaCha12Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn rejects_grid_beyond_cap() {
        let p = params(1.0, 1.0, 1.0, 0.5);
        let g = TimeGrid::new(0.0, 0.001, CHOLESKY_CAP + 1).unwrap();
        match sample_real_fou(&p, g, 1.0, &mut ChaCha12Rng::seed_from_u64(0)) {
            Err(Error::GridTooLarge { n, cap }) => {
                assert_eq!(n, CHOLESKY_CAP + 1);
                assert_eq!(cap, CHOLESKY_CAP);
            }
            other => panic!("expected GridTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_variance_scale() {
        let p = params(1.0, 1.0, 1.0, 0.5);
        let g = TimeGrid::new(0.0, 0.5, 4).unwrap();
        assert!(sample_real_fou(&p, g, 0.7, &mut ChaCha12Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn near_singular_grid_engages_jitter_or_succeeds() {
        // Extremely fine grid at high H: adjacent correlations within one ulp
        // of 1 drive the innovation variance to the floor.
        let p = params(1.0, 1.0, 1.0, 0.95);
        let g = TimeGrid::new(0.0, 1e-9, 96).unwrap();
        match StationarySampler::new(p, g) {
            Ok(s) => {
                let mut rng = ChaCha12Rng::seed_from_u64(3);
                let path = s.sample(1.0, &mut rng);
                assert!(path.values.iter().all(|v| v.is_finite()));
            }
            Err(Error::FactorizationFailed { .. }) => {}
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }
}
