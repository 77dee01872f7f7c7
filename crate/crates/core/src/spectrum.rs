//! Wave-mode lattice and energy-spectrum configuration.
//!
//! Modes live on `K = 2πℤ² \ {0}`; a mode with lattice index `z` has wave
//! vector `k = 2πz`, Laplacian eigenvalue `α_k = |k|²`, and isotropic noise
//! weight `λ_k` determined by `|z|` alone. The Kolmogorov spectrum choice
//! `λ_k = c0 |z|^(-14/3 + 4H)` makes the shell energy density scale as
//! `|k|^(-5/3)`.

use crate::error::{require, Result};
use statrs::function::gamma::gamma;
use std::collections::BTreeMap;

/// Spectrum family. Power laws are normalized in `|z|` (so `c0` absorbs the
/// powers of 2π); table entries are keyed by `|z|²` with missing entries = 0.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumKind {
    Kolmogorov,
    PowerLaw(f64),
    Table(BTreeMap<u32, f64>),
}

/// Energy-spectrum configuration with ultraviolet cutoff `|z| ≤ R`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumConfig {
    pub kind: SpectrumKind,
    pub c0: f64,
    pub cutoff_r: u32,
    pub h: f64,
}

impl SpectrumConfig {
    pub fn new(kind: SpectrumKind, c0: f64, cutoff_r: u32, h: f64) -> Result<Self> {
        require(c0.is_finite() && c0 > 0.0, "c0", c0, "> 0")?;
        require(cutoff_r >= 1, "cutoff_r", cutoff_r as f64, ">= 1")?;
        require(h > 0.0 && h < 1.0, "h", h, "in (0, 1)")?;
        if let SpectrumKind::PowerLaw(p) = kind {
            require(p.is_finite(), "p", p, "finite")?;
        }
        if let SpectrumKind::Table(ref t) = kind {
            for (&z2, &w) in t {
                require(w.is_finite() && w >= 0.0, "table weight", w, ">= 0")?;
                require(z2 >= 1, "table key", z2 as f64, ">= 1")?;
            }
        }
        Ok(Self {
            kind,
            c0,
            cutoff_r,
            h,
        })
    }

    pub fn kolmogorov(c0: f64, cutoff_r: u32, h: f64) -> Result<Self> {
        Self::new(SpectrumKind::Kolmogorov, c0, cutoff_r, h)
    }

    /// Noise weight of a mode with squared lattice norm `|z|²`. Depends only
    /// on `|z|`, so equal-norm modes get bitwise-equal weights.
    pub fn lambda_of(&self, z_norm_sq: u32) -> f64 {
        if z_norm_sq == 0 || z_norm_sq > self.cutoff_r * self.cutoff_r {
            return 0.0;
        }
        match &self.kind {
            SpectrumKind::Kolmogorov => {
                let expo = -14.0 / 3.0 + 4.0 * self.h;
                self.c0 * (z_norm_sq as f64).powf(expo / 2.0)
            }
            SpectrumKind::PowerLaw(p) => self.c0 * (z_norm_sq as f64).powf(-p / 2.0),
            SpectrumKind::Table(t) => self.c0 * t.get(&z_norm_sq).copied().unwrap_or(0.0),
        }
    }
}

/// One lattice wave vector with its derived quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveMode {
    /// Lattice index `z ∈ ℤ² \ {0}`.
    pub z: [i32; 2],
    /// Wave vector `k = 2πz`.
    pub k: [f64; 2],
    /// `α_k = |k|² = 4π²|z|²`.
    pub alpha: f64,
    /// Isotropic noise weight.
    pub lambda: f64,
    /// Member of the designated half lattice `K⁺ = {z₁ > 0} ∪ {z₁ = 0, z₂ > 0}`.
    pub in_k_plus: bool,
}

impl WaveMode {
    pub fn z_norm_sq(&self) -> u32 {
        (self.z[0] as i64 * self.z[0] as i64 + self.z[1] as i64 * self.z[1] as i64) as u32
    }

    /// `|k| = 2π|z|`.
    pub fn k_norm(&self) -> f64 {
        (self.alpha).sqrt()
    }
}

/// All modes with `0 < |z| ≤ R` in lexicographic `(z₁, z₂)` order. The set is
/// closed under `z ↦ -z` and exactly half of it is marked as `K⁺`.
pub fn mode_set(config: &SpectrumConfig) -> Vec<WaveMode> {
    let r = config.cutoff_r as i32;
    let r2 = (r as i64) * (r as i64);
    let tau = 2.0 * std::f64::consts::PI;
    let mut modes = Vec::new();
    for z1 in -r..=r {
        for z2 in -r..=r {
            let n2 = (z1 as i64) * (z1 as i64) + (z2 as i64) * (z2 as i64);
            if n2 == 0 || n2 > r2 {
                continue;
            }
            let lambda = config.lambda_of(n2 as u32);
            modes.push(WaveMode {
                z: [z1, z2],
                k: [tau * z1 as f64, tau * z2 as f64],
                alpha: 4.0 * std::f64::consts::PI.powi(2) * n2 as f64,
                lambda,
                in_k_plus: z1 > 0 || (z1 == 0 && z2 > 0),
            });
        }
    }
    modes
}

/// Energy of one Fourier mode: `Γ(2H)·H/2 · λ_k · |k|^(2-4H)`.
pub fn mode_energy(mode: &WaveMode, h: f64) -> f64 {
    gamma(2.0 * h) * h / 2.0 * mode.lambda * mode.alpha.powf(1.0 - 2.0 * h)
}

/// Convergence of the two lattice sums
/// `Σ λ_k α_k^(2γ-2H) |k|^(2m)` and `Σ λ_k α_k^(-2H) |k|^(2m+2γ)`
/// for the infinite power law `λ_k = |k|^(-p)`, `α_k = |k|²`, decided by
/// exponent arithmetic: a 2-D lattice sum of `|k|^q` converges iff `q < -2`.
/// Boundary exponents (within 1e-9 of -2) count as divergent.
pub fn check_regularity(p: f64, h: f64, m: u32, gamma_exp: f64) -> (bool, bool) {
    let q1 = -p + 4.0 * gamma_exp - 4.0 * h + 2.0 * m as f64;
    let q2 = -p - 4.0 * h + 2.0 * m as f64 + 2.0 * gamma_exp;
    let conv = |q: f64| q < -2.0 - 1e-9;
    (conv(q1), conv(q2))
}
