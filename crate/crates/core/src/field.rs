//! Synthesis and evaluation of one stream-function realization.
//!
//! A realization stores one complex coefficient path per half-lattice mode
//! `k ∈ K⁺`; the conjugate modes are implied by `ψ̂_{-k} = ψ̂_k*`, which keeps
//! every evaluation real:
//!
//! ```text
//!     ψ(x, t_j) = Σ_{k∈K⁺} 2 Re[ ψ̂_k(t_j) e^{i⟨k,x⟩} ],
//!     v(x, t_j) = Σ_{k∈K⁺} 2 Re[ i (k₂, -k₁) ψ̂_k(t_j) e^{i⟨k,x⟩} ].
//! ```
//!
//! Evaluation is exact direct summation — no interpolation in x or t; the
//! coefficient paths are only Hölder-rough in t, so consumers must query
//! integer grid indices. A band-limited FFT path evaluates whole grids for
//! diagnostics.

use crate::error::{Error, Result};
use crate::fou::{FouParams, StationarySampler};
use crate::grid::TimeGrid;
use crate::spectrum::{mode_set, SpectrumConfig, SpectrumKind, WaveMode};
use crate::streams::{coefficient_stream, Component};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

/// One complex coefficient path (components sampled independently, each with
/// variance scale 1/2).
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffPath {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub jitter: Option<f64>,
}

/// One realization of the stream function on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath {
    spectrum: SpectrumConfig,
    nu: f64,
    seed: u64,
    grid: TimeGrid,
    modes: Vec<WaveMode>,
    kplus: Vec<WaveMode>,
    coeffs: Vec<CoeffPath>,
}

/// Real-valued grids produced by the FFT evaluation path.
#[derive(Debug, Clone)]
pub struct FieldGrid {
    pub n: usize,
    /// Row-major `psi[m1 * n + m2]` at `x = (m1/n, m2/n)`.
    pub psi: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// Largest imaginary residue discarded, absolute.
    pub imag_residual: f64,
}

impl FieldPath {
    /// Draw one realization: every `K⁺` coefficient gets two independent fOU
    /// components from streams addressed by `(seed, mode index, component)`.
    /// Synthesis parallelizes over modes; output is schedule-independent.
    pub fn synthesize(
        config: &SpectrumConfig,
        nu: f64,
        grid: TimeGrid,
        seed: u64,
    ) -> Result<Self> {
        let modes = mode_set(config);
        let kplus: Vec<WaveMode> = modes.iter().copied().filter(|m| m.in_k_plus).collect();

        // One exact sampler per distinct |z|²: equal-norm modes share α and λ.
        let mut shells: Vec<u32> = kplus.iter().map(|m| m.z_norm_sq()).collect();
        shells.sort_unstable();
        shells.dedup();
        let samplers: BTreeMap<u32, StationarySampler> = shells
            .par_iter()
            .map(|&z2| {
                let alpha = 4.0 * std::f64::consts::PI.powi(2) * z2 as f64;
                let lambda = config.lambda_of(z2);
                // λ = 0 still samples (and yields zeros); α fixes the row.
                let params = FouParams::new(alpha, lambda, nu, config.h)?;
                Ok((z2, StationarySampler::new(params, grid)?))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect();

        let coeffs: Vec<CoeffPath> = kplus
            .par_iter()
            .enumerate()
            .map(|(idx, mode)| {
                let sampler = &samplers[&mode.z_norm_sq()];
                let mut re_rng = coefficient_stream(seed, idx as u32, Component::Re);
                let mut im_rng = coefficient_stream(seed, idx as u32, Component::Im);
                let re = sampler.sample(0.5, &mut re_rng);
                let im = sampler.sample(0.5, &mut im_rng);
                CoeffPath {
                    re: re.values,
                    im: im.values,
                    jitter: sampler.jitter(),
                }
            })
            .collect();

        Ok(Self {
            spectrum: config.clone(),
            nu,
            seed,
            grid,
            modes,
            kplus,
            coeffs,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn h(&self) -> f64 {
        self.spectrum.h
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spectrum(&self) -> &SpectrumConfig {
        &self.spectrum
    }

    /// Full (±) mode set.
    pub fn modes(&self) -> &[WaveMode] {
        &self.modes
    }

    /// Half-lattice modes in synthesis/serialization order.
    pub fn kplus_modes(&self) -> &[WaveMode] {
        &self.kplus
    }

    pub fn coeff(&self, kplus_index: usize) -> &CoeffPath {
        &self.coeffs[kplus_index]
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.grid.len() {
            return Err(Error::IndexOutOfRange {
                index: j,
                n: self.grid.len(),
            });
        }
        Ok(())
    }

    /// Velocity `v = ∇⊥ψ` at torus point `x` and grid index `j`, by direct
    /// half-lattice summation. `x` may live in the universal cover; the basis
    /// is 1-periodic.
    pub fn velocity(&self, x: [f64; 2], j: usize) -> Result<[f64; 2]> {
        self.check_index(j)?;
        Ok(self.velocity_unchecked(x, j))
    }

    #[inline]
    pub(crate) fn velocity_unchecked(&self, x: [f64; 2], j: usize) -> [f64; 2] {
        let tau = 2.0 * std::f64::consts::PI;
        let mut v1 = 0.0;
        let mut v2 = 0.0;
        for (mode, c) in self.kplus.iter().zip(&self.coeffs) {
            let theta = tau * (mode.z[0] as f64 * x[0] + mode.z[1] as f64 * x[1]);
            let (s, co) = theta.sin_cos();
            // 2 Re[i ψ̂ e^{iθ}] = -2 (im·cosθ + re·sinθ)
            let g = -2.0 * (c.im[j] * co + c.re[j] * s);
            v1 += mode.k[1] * g;
            v2 -= mode.k[0] * g;
        }
        [v1, v2]
    }

    /// Stream function and its gradient at `(x, t_j)`; `v = (∂₂ψ, -∂₁ψ)`
    /// holds against [`Self::velocity`] to round-off.
    pub fn stream_and_gradient(&self, x: [f64; 2], j: usize) -> Result<(f64, [f64; 2])> {
        self.check_index(j)?;
        let tau = 2.0 * std::f64::consts::PI;
        let mut psi = 0.0;
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for (mode, c) in self.kplus.iter().zip(&self.coeffs) {
            let theta = tau * (mode.z[0] as f64 * x[0] + mode.z[1] as f64 * x[1]);
            let (s, co) = theta.sin_cos();
            psi += 2.0 * (c.re[j] * co - c.im[j] * s);
            let g = -2.0 * (c.im[j] * co + c.re[j] * s);
            d1 += mode.k[0] * g;
            d2 += mode.k[1] * g;
        }
        Ok((psi, [d1, d2]))
    }

    /// Evaluate `ψ`, `v₁`, `v₂` on the whole `n×n` grid by inverse FFT of the
    /// wrapped coefficient placement. Requires `n ≥ 2R+2` so the cutoff band
    /// does not alias.
    pub fn grid_eval_fft(&self, j: usize, n: usize) -> Result<FieldGrid> {
        self.check_index(j)?;
        let min = 2 * self.spectrum.cutoff_r as usize + 2;
        if n < min {
            return Err(Error::GridTooCoarse {
                n,
                r: self.spectrum.cutoff_r,
                min,
            });
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_inverse(n);
        let mut work = GridWork::new(n);
        self.fill_spectral(j, &mut work);
        work.transform(fft.as_ref());
        Ok(work.into_grid())
    }

    /// `C¹`-type norm probe: max over an `m×m` grid of
    /// `sqrt(ψ² + (∂₁ψ)² + (∂₂ψ)²)`, so `|∇⊥ψ(x)|² ≤ c1_norm²` pointwise on
    /// the probe grid. Monotone non-decreasing on nested grids.
    pub fn c1_norm(&self, j: usize, m: usize) -> Result<f64> {
        let g = self.grid_eval_fft(j, m)?;
        Ok(c1_from_grid(&g))
    }

    /// `c1_norm` over a contiguous index range, reusing the FFT plan and
    /// buffers. This is the kernel behind history integrals.
    pub fn c1_norm_series(&self, j0: usize, j1: usize, m: usize) -> Result<Vec<f64>> {
        self.check_index(j1.saturating_sub(1).max(j0))?;
        let min = 2 * self.spectrum.cutoff_r as usize + 2;
        if m < min {
            return Err(Error::GridTooCoarse {
                n: m,
                r: self.spectrum.cutoff_r,
                min,
            });
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_inverse(m);
        let mut out = Vec::with_capacity(j1 - j0);
        let mut work = GridWork::new(m);
        for j in j0..j1 {
            work.reset();
            self.fill_spectral(j, &mut work);
            work.transform(fft.as_ref());
            out.push(work.c1_max());
        }
        Ok(out)
    }

    fn fill_spectral(&self, j: usize, work: &mut GridWork) {
        let n = work.n;
        for (mode, c) in self.kplus.iter().zip(&self.coeffs) {
            let psi_hat = Complex64::new(c.re[j], c.im[j]);
            let v1_hat = Complex64::new(0.0, mode.k[1]) * psi_hat;
            let v2_hat = Complex64::new(0.0, -mode.k[0]) * psi_hat;
            let (i1, i2) = wrap_index(mode.z, n);
            let (j1, j2) = wrap_index([-mode.z[0], -mode.z[1]], n);
            work.psi[i1 * n + i2] = psi_hat;
            work.psi[j1 * n + j2] = psi_hat.conj();
            work.v1[i1 * n + i2] = v1_hat;
            work.v1[j1 * n + j2] = v1_hat.conj();
            work.v2[i1 * n + i2] = v2_hat;
            work.v2[j1 * n + j2] = v2_hat.conj();
        }
    }

    /// Time-frozen copy: every coefficient holds its index-`j` value on the
    /// whole grid. Frozen fields make ψ a first integral of the tracer flow,
    /// which several tests exploit.
    pub fn frozen(&self, j: usize) -> Result<FieldPath> {
        self.frozen_with_grid(j, self.grid)
    }

    /// Time-frozen copy on an arbitrary grid (constant coefficients make the
    /// grid spacing free). Used for step-halving convergence studies.
    pub fn frozen_with_grid(&self, j: usize, grid: TimeGrid) -> Result<FieldPath> {
        self.check_index(j)?;
        let n = grid.len();
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| CoeffPath {
                re: vec![c.re[j]; n],
                im: vec![c.im[j]; n],
                jitter: c.jitter,
            })
            .collect();
        Ok(FieldPath {
            coeffs,
            grid,
            ..self.clone()
        })
    }

    /// FNV-1a hash of the canonical metadata header.
    pub fn metadata_hash(&self) -> u64 {
        fnv1a(self.header_string().as_bytes())
    }

    #[cfg(test)]
    pub(crate) fn set_coeffs_for_tests(&mut self, coeffs: Vec<CoeffPath>) {
        assert_eq!(coeffs.len(), self.kplus.len());
        for c in &coeffs {
            assert_eq!(c.re.len(), self.grid.len());
            assert_eq!(c.im.len(), self.grid.len());
        }
        self.coeffs = coeffs;
    }

    fn header_string(&self) -> String {
        let mut s = String::new();
        s.push_str(MAGIC);
        s.push('\n');
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("nu = {}\n", self.nu));
        s.push_str(&format!("h = {}\n", self.spectrum.h));
        match &self.spectrum.kind {
            SpectrumKind::Kolmogorov => s.push_str("spectrum.kind = kolmogorov\n"),
            SpectrumKind::PowerLaw(p) => {
                s.push_str("spectrum.kind = power_law\n");
                s.push_str(&format!("spectrum.p = {p}\n"));
            }
            SpectrumKind::Table(t) => {
                s.push_str("spectrum.kind = table\n");
                let entries: Vec<String> =
                    t.iter().map(|(k, v)| format!("{k}:{v}")).collect();
                s.push_str(&format!("spectrum.table = {}\n", entries.join(",")));
            }
        }
        s.push_str(&format!("spectrum.c0 = {}\n", self.spectrum.c0));
        s.push_str(&format!("spectrum.r = {}\n", self.spectrum.cutoff_r));
        s.push_str(&format!("grid.t0 = {}\n", self.grid.t0()));
        s.push_str(&format!("grid.dt = {}\n", self.grid.dt()));
        s.push_str(&format!("grid.n = {}\n", self.grid.len()));
        let jitter: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.jitter.map(|v| format!("{i}:{v}")))
            .collect();
        s.push_str(&format!("jitter = {}\n", jitter.join(",")));
        s
    }

    /// Serialize: text header, then `data` marker, then coefficient paths as
    /// little-endian f64, Re/Im interleaved per time index, modes in `K⁺`
    /// lexicographic order. Round-trips bit-exactly.
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        w.write_all(self.header_string().as_bytes())?;
        w.write_all(b"data\n")?;
        for c in &self.coeffs {
            for j in 0..self.grid.len() {
                w.write_all(&c.re[j].to_le_bytes())?;
                w.write_all(&c.im[j].to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_to_path<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        self.save(std::fs::File::create(path)?)
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let mut r = BufReader::new(reader);
        let mut header = Header::default();
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(Error::Format(format!("bad magic line {line:?}")));
        }
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Format("missing data section".into()));
            }
            let trimmed = line.trim_end();
            if trimmed == "data" {
                break;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("malformed header line {trimmed:?}")))?;
            header.set(key.trim(), value.trim())?;
        }
        let (spectrum, nu, seed, grid, jitter) = header.finish()?;
        let modes = mode_set(&spectrum);
        let kplus: Vec<WaveMode> = modes.iter().copied().filter(|m| m.in_k_plus).collect();
        let n = grid.len();
        let mut coeffs = Vec::with_capacity(kplus.len());
        let mut buf = vec![0u8; n * 16];
        for i in 0..kplus.len() {
            r.read_exact(&mut buf).map_err(|e| {
                Error::Format(format!("truncated coefficient data for mode {i}: {e}"))
            })?;
            let mut re = Vec::with_capacity(n);
            let mut im = Vec::with_capacity(n);
            for j in 0..n {
                re.push(f64::from_le_bytes(buf[16 * j..16 * j + 8].try_into().unwrap()));
                im.push(f64::from_le_bytes(
                    buf[16 * j + 8..16 * j + 16].try_into().unwrap(),
                ));
            }
            coeffs.push(CoeffPath {
                re,
                im,
                jitter: jitter.get(&i).copied(),
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after coefficient data".into()));
        }
        Ok(Self {
            spectrum,
            nu,
            seed,
            grid,
            modes,
            kplus,
            coeffs,
        })
    }

    pub fn load_from_path<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        Self::load(std::fs::File::open(path)?)
    }
}

const MAGIC: &str = "fouflow-field v1";

pub(crate) fn c1_from_grid(g: &FieldGrid) -> f64 {
    let mut best = 0.0f64;
    for i in 0..g.psi.len() {
        let s = g.psi[i] * g.psi[i] + g.v1[i] * g.v1[i] + g.v2[i] * g.v2[i];
        if s > best {
            best = s;
        }
    }
    best.sqrt()
}

fn wrap_index(z: [i32; 2], n: usize) -> (usize, usize) {
    let w = |a: i32| -> usize { a.rem_euclid(n as i32) as usize };
    (w(z[0]), w(z[1]))
}

struct GridWork {
    n: usize,
    psi: Vec<Complex64>,
    v1: Vec<Complex64>,
    v2: Vec<Complex64>,
    scratch: Vec<Complex64>,
    done: bool,
}

impl GridWork {
    fn new(n: usize) -> Self {
        Self {
            n,
            psi: vec![Complex64::default(); n * n],
            v1: vec![Complex64::default(); n * n],
            v2: vec![Complex64::default(); n * n],
            scratch: vec![Complex64::default(); n * n],
            done: false,
        }
    }

    fn reset(&mut self) {
        self.psi.fill(Complex64::default());
        self.v1.fill(Complex64::default());
        self.v2.fill(Complex64::default());
        self.done = false;
    }

    fn transform(&mut self, fft: &dyn rustfft::Fft<f64>) {
        for buf in [&mut self.psi, &mut self.v1, &mut self.v2] {
            fft2_inverse(buf, &mut self.scratch, self.n, fft);
        }
        self.done = true;
    }

    fn c1_max(&self) -> f64 {
        debug_assert!(self.done);
        let mut best = 0.0f64;
        for i in 0..self.psi.len() {
            let s = self.psi[i].re * self.psi[i].re
                + self.v1[i].re * self.v1[i].re
                + self.v2[i].re * self.v2[i].re;
            if s > best {
                best = s;
            }
        }
        best.sqrt()
    }

    fn into_grid(self) -> FieldGrid {
        debug_assert!(self.done);
        let mut residual = 0.0f64;
        let take = |v: &[Complex64], residual: &mut f64| -> Vec<f64> {
            v.iter()
                .map(|c| {
                    *residual = residual.max(c.im.abs());
                    c.re
                })
                .collect()
        };
        let psi = take(&self.psi, &mut residual);
        let v1 = take(&self.v1, &mut residual);
        let v2 = take(&self.v2, &mut residual);
        FieldGrid {
            n: self.n,
            psi,
            v1,
            v2,
            imag_residual: residual,
        }
    }
}

/// Unnormalized 2-D inverse DFT: rows, transpose, rows, transpose.
fn fft2_inverse(
    data: &mut [Complex64],
    scratch: &mut [Complex64],
    n: usize,
    fft: &dyn rustfft::Fft<f64>,
) {
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    transpose(data, scratch, n);
    for row in scratch.chunks_exact_mut(n) {
        fft.process(row);
    }
    transpose(scratch, data, n);
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::SpectrumKind;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn kolmogorov_field(r: u32, h: f64, n: usize, seed: u64) -> FieldPath {
        let cfg = SpectrumConfig::kolmogorov(1.0, r, h).unwrap();
        let grid = TimeGrid::new(0.0, 0.05, n).unwrap();
        FieldPath::synthesize(&cfg, 1e-2, grid, seed).unwrap()
    }

    fn zero_field() -> FieldPath {
        let cfg =
            SpectrumConfig::new(SpectrumKind::Table(BTreeMap::new()), 1.0, 2, 0.5).unwrap();
        let grid = TimeGrid::new(0.0, 0.1, 8).unwrap();
        FieldPath::synthesize(&cfg, 1.0, grid, 0).unwrap()
    }

    /// Full-lattice complex summation, including conjugate modes explicitly.
    fn velocity_brute(field: &FieldPath, x: [f64; 2], j: usize) -> [f64; 2] {
        let tau = 2.0 * std::f64::consts::PI;
        let mut v = [Complex64::default(); 2];
        for mode in field.modes() {
            // locate the K⁺ partner and conjugate if needed
            let (idx, conj) = if mode.in_k_plus {
                (
                    field
                        .kplus_modes()
                        .iter()
                        .position(|m| m.z == mode.z)
                        .unwrap(),
                    false,
                )
            } else {
                (
                    field
                        .kplus_modes()
                        .iter()
                        .position(|m| m.z == [-mode.z[0], -mode.z[1]])
                        .unwrap(),
                    true,
                )
            };
            let c = field.coeff(idx);
            let mut psi_hat = Complex64::new(c.re[j], c.im[j]);
            if conj {
                psi_hat = psi_hat.conj();
            }
            let phase =
                Complex64::from_polar(1.0, tau * (mode.z[0] as f64 * x[0] + mode.z[1] as f64 * x[1]));
            let factor = Complex64::new(0.0, 1.0) * psi_hat * phase;
            v[0] += factor * mode.k[1];
            v[1] += factor * -mode.k[0];
        }
        assert!(v[0].im.abs() < 1e-12, "imaginary residue {}", v[0].im);
        assert!(v[1].im.abs() < 1e-12);
        [v[0].re, v[1].re]
    }

    #[test]
    fn zero_spectrum_is_identically_zero() {
        let f = zero_field();
        let v = f.velocity([0.3, 0.7], 3).unwrap();
        assert_eq!(v, [0.0, 0.0]);
        let (psi, grad) = f.stream_and_gradient([0.1, 0.2], 0).unwrap();
        assert_eq!((psi, grad), (0.0, [0.0, 0.0]));
        assert_eq!(f.c1_norm(0, 8).unwrap(), 0.0);
        let g = f.grid_eval_fft(0, 8).unwrap();
        assert!(g.psi.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let a = kolmogorov_field(2, 1.0 / 3.0, 16, 42);
        let b = kolmogorov_field(2, 1.0 / 3.0, 16, 42);
        assert_eq!(a, b);
        let c = kolmogorov_field(2, 1.0 / 3.0, 16, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn single_mode_velocity_matches_hand_expansion() {
        // Keep only ±z = (0, ±1) with a real constant coefficient c:
        // v₁(x) = -4πc sin(2πx₂), v₂ = 0.
        let mut f = kolmogorov_field(1, 0.5, 4, 7);
        let c = 0.37;
        for (i, mode) in f.kplus.clone().iter().enumerate() {
            let (re, im) = if mode.z == [0, 1] {
                (vec![c; 4], vec![0.0; 4])
            } else {
                (vec![0.0; 4], vec![0.0; 4])
            };
            f.coeffs[i] = CoeffPath {
                re,
                im,
                jitter: None,
            };
        }
        for &x2 in &[0.0, 0.13, 0.5, 0.77] {
            let v = f.velocity([0.4, x2], 1).unwrap();
            let want = -4.0 * std::f64::consts::PI * c * (2.0 * std::f64::consts::PI * x2).sin();
            assert_abs_diff_eq!(v[0], want, epsilon = 1e-13);
            assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-13);
        }
        // Full-lattice brute force agrees with the half-lattice formula.
        let brute = velocity_brute(&f, [0.21, 0.58], 1);
        let fast = f.velocity([0.21, 0.58], 1).unwrap();
        assert_abs_diff_eq!(brute[0], fast[0], epsilon = 1e-14);
        assert_abs_diff_eq!(brute[1], fast[1], epsilon = 1e-14);
    }

    #[test]
    fn half_lattice_equals_full_lattice_summation() {
        let f = kolmogorov_field(2, 1.0 / 3.0, 8, 11);
        for &(x, j) in &[([0.0, 0.0], 0), ([0.31, 0.64], 3), ([0.99, 0.5], 7)] {
            let brute = velocity_brute(&f, x, j);
            let fast = f.velocity(x, j).unwrap();
            let scale = brute[0].abs().max(brute[1].abs()).max(1e-30);
            assert_abs_diff_eq!(fast[0], brute[0], epsilon = 1e-12 * scale);
            assert_abs_diff_eq!(fast[1], brute[1], epsilon = 1e-12 * scale);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = kolmogorov_field(2, 0.5, 8, 5);
        let x = [0.37, 0.82];
        let j = 2;
        let (_, grad) = f.stream_and_gradient(x, j).unwrap();
        let h = 1e-5;
        let scale = f.c1_norm(j, 32).unwrap();
        for axis in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[axis] += h;
            xm[axis] -= h;
            let pp = f.stream_and_gradient(xp, j).unwrap().0;
            let pm = f.stream_and_gradient(xm, j).unwrap().0;
            let fd = (pp - pm) / (2.0 * h);
            assert_abs_diff_eq!(grad[axis], fd, epsilon = 1e-6 * scale);
        }
    }

    #[test]
    fn perp_gradient_identity() {
        let f = kolmogorov_field(2, 1.0 / 3.0, 8, 9);
        for &(x, j) in &[([0.11, 0.92], 1), ([0.5, 0.5], 6)] {
            let v = f.velocity(x, j).unwrap();
            let (_, d) = f.stream_and_gradient(x, j).unwrap();
            assert_abs_diff_eq!(v[0], d[1], epsilon = 1e-12);
            assert_abs_diff_eq!(v[1], -d[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn fft_grid_matches_direct_evaluation() {
        let f = kolmogorov_field(2, 1.0 / 3.0, 8, 21);
        let n = 16;
        let g = f.grid_eval_fft(3, n).unwrap();
        let mut max_v = 0.0f64;
        for &v in g.v1.iter().chain(&g.v2) {
            max_v = max_v.max(v.abs());
        }
        for m1 in 0..n {
            for m2 in 0..n {
                let x = [m1 as f64 / n as f64, m2 as f64 / n as f64];
                let v = f.velocity(x, 3).unwrap();
                let (psi, _) = f.stream_and_gradient(x, 3).unwrap();
                assert_abs_diff_eq!(g.v1[m1 * n + m2], v[0], epsilon = 1e-10 * max_v);
                assert_abs_diff_eq!(g.v2[m1 * n + m2], v[1], epsilon = 1e-10 * max_v);
                assert_abs_diff_eq!(g.psi[m1 * n + m2], psi, epsilon = 1e-10 * max_v);
            }
        }
        assert!(g.imag_residual <= 1e-12 * max_v.max(1e-30));
    }

    #[test]
    fn fft_rejects_aliasing_resolution() {
        let f = kolmogorov_field(2, 0.5, 4, 2);
        match f.grid_eval_fft(0, 5) {
            Err(Error::GridTooCoarse { min, .. }) => assert_eq!(min, 6),
            other => panic!("expected GridTooCoarse, got {other:?}"),
        }
    }

    #[test]
    fn c1_norm_single_mode_closed_form() {
        // Single mode pair with real amplitude c: ψ = 2c cos(2π⟨z,x⟩),
        // sup √(ψ² + |∇ψ|²) = 2c·max(1, 2π|z|) = 4π|z|c for |z| ≥ 1.
        let mut f = kolmogorov_field(1, 0.5, 4, 3);
        let c = 0.25;
        for (i, mode) in f.kplus.clone().iter().enumerate() {
            let re = if mode.z == [1, 0] {
                vec![c; 4]
            } else {
                vec![0.0; 4]
            };
            f.coeffs[i] = CoeffPath {
                re,
                im: vec![0.0; 4],
                jitter: None,
            };
        }
        let want = 4.0 * std::f64::consts::PI * c;
        let got = f.c1_norm(0, 64).unwrap();
        assert!((got - want).abs() / want < 0.01, "got {got}, want {want}");
        assert!(got <= want * (1.0 + 1e-12));
    }

    #[test]
    fn c1_norm_grid_refinement_is_stable() {
        let f = kolmogorov_field(2, 1.0 / 3.0, 8, 13);
        let coarse = f.c1_norm(4, 32).unwrap();
        let fine = f.c1_norm(4, 256).unwrap();
        assert!(fine >= coarse);
        assert!((fine - coarse) / fine < 0.02, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn frozen_field_is_constant_in_time() {
        let f = kolmogorov_field(2, 0.5, 8, 17);
        let frozen = f.frozen(5).unwrap();
        let x = [0.3, 0.9];
        let v5 = frozen.velocity(x, 5).unwrap();
        for j in 0..8 {
            assert_eq!(frozen.velocity(x, j).unwrap(), v5);
        }
        assert_eq!(
            f.velocity(x, 5).unwrap(),
            frozen.velocity(x, 5).unwrap()
        );
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let f = kolmogorov_field(2, 1.0 / 3.0, 16, 77);
        let mut buf = Vec::new();
        f.save(&mut buf).unwrap();
        let g = FieldPath::load(buf.as_slice()).unwrap();
        assert_eq!(f, g);
        assert_eq!(f.metadata_hash(), g.metadata_hash());
        // And byte-identical when re-serialized.
        let mut buf2 = Vec::new();
        g.save(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn roundtrip_preserves_table_spectrum_and_jitter() {
        let mut t = BTreeMap::new();
        t.insert(1u32, 0.5);
        t.insert(2u32, 0.125);
        let cfg = SpectrumConfig::new(SpectrumKind::Table(t), 2.0, 2, 0.8).unwrap();
        let grid = TimeGrid::new(-1.5, 0.25, 12).unwrap();
        let f = FieldPath::synthesize(&cfg, 0.5, grid, 123).unwrap();
        let mut buf = Vec::new();
        f.save(&mut buf).unwrap();
        let g = FieldPath::load(buf.as_slice()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn load_rejects_corrupt_input() {
        let f = kolmogorov_field(1, 0.5, 4, 1);
        let mut buf = Vec::new();
        f.save(&mut buf).unwrap();
        assert!(FieldPath::load(&buf[..buf.len() - 8]).is_err());
        let mut extra = buf.clone();
        extra.extend_from_slice(&[0u8; 8]);
        assert!(FieldPath::load(extra.as_slice()).is_err());
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(FieldPath::load(bad_magic.as_slice()).is_err());
    }
}

#[derive(Default)]
struct Header {
    seed: Option<u64>,
    nu: Option<f64>,
    h: Option<f64>,
    kind: Option<String>,
    p: Option<f64>,
    table: Option<BTreeMap<u32, f64>>,
    c0: Option<f64>,
    r: Option<u32>,
    t0: Option<f64>,
    dt: Option<f64>,
    n: Option<usize>,
    jitter: BTreeMap<usize, f64>,
}

impl Header {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |k: &str, v: &str| Error::Format(format!("bad value {v:?} for {k}"));
        match key {
            "seed" => self.seed = Some(value.parse().map_err(|_| bad(key, value))?),
            "nu" => self.nu = Some(value.parse().map_err(|_| bad(key, value))?),
            "h" => self.h = Some(value.parse().map_err(|_| bad(key, value))?),
            "spectrum.kind" => self.kind = Some(value.to_string()),
            "spectrum.p" => self.p = Some(value.parse().map_err(|_| bad(key, value))?),
            "spectrum.table" => {
                let mut t = BTreeMap::new();
                if !value.is_empty() {
                    for entry in value.split(',') {
                        let (k, v) = entry
                            .split_once(':')
                            .ok_or_else(|| bad("spectrum.table", entry))?;
                        t.insert(
                            k.parse().map_err(|_| bad("spectrum.table", entry))?,
                            v.parse().map_err(|_| bad("spectrum.table", entry))?,
                        );
                    }
                }
                self.table = Some(t);
            }
            "spectrum.c0" => self.c0 = Some(value.parse().map_err(|_| bad(key, value))?),
            "spectrum.r" => self.r = Some(value.parse().map_err(|_| bad(key, value))?),
            "grid.t0" => self.t0 = Some(value.parse().map_err(|_| bad(key, value))?),
            "grid.dt" => self.dt = Some(value.parse().map_err(|_| bad(key, value))?),
            "grid.n" => self.n = Some(value.parse().map_err(|_| bad(key, value))?),
            "jitter" => {
                if !value.is_empty() {
                    for entry in value.split(',') {
                        let (k, v) = entry.split_once(':').ok_or_else(|| bad("jitter", entry))?;
                        self.jitter.insert(
                            k.parse().map_err(|_| bad("jitter", entry))?,
                            v.parse().map_err(|_| bad("jitter", entry))?,
                        );
                    }
                }
            }
            other => return Err(Error::Format(format!("unknown header key {other:?}"))),
        }
        Ok(())
    }

    #[allow(clippy::type_complexity)]
    fn finish(self) -> Result<(SpectrumConfig, f64, u64, TimeGrid, BTreeMap<usize, f64>)> {
        let missing = |k: &str| Error::Format(format!("missing header key {k}"));
        let kind = match self.kind.as_deref() {
            Some("kolmogorov") => SpectrumKind::Kolmogorov,
            Some("power_law") => SpectrumKind::PowerLaw(self.p.ok_or_else(|| missing("spectrum.p"))?),
            Some("table") => SpectrumKind::Table(self.table.ok_or_else(|| missing("spectrum.table"))?),
            Some(other) => return Err(Error::Format(format!("unknown spectrum kind {other:?}"))),
            None => return Err(missing("spectrum.kind")),
        };
        let spectrum = SpectrumConfig::new(
            kind,
            self.c0.ok_or_else(|| missing("spectrum.c0"))?,
            self.r.ok_or_else(|| missing("spectrum.r"))?,
            self.h.ok_or_else(|| missing("h"))?,
        )?;
        let grid = TimeGrid::new(
            self.t0.ok_or_else(|| missing("grid.t0"))?,
            self.dt.ok_or_else(|| missing("grid.dt"))?,
            self.n.ok_or_else(|| missing("grid.n"))?,
        )?;
        Ok((
            spectrum,
            self.nu.ok_or_else(|| missing("nu"))?,
            self.seed.ok_or_else(|| missing("seed"))?,
            grid,
            self.jitter,
        ))
    }
}
