//! Spectral sampling of spatially Riesz-correlated, temporally white noise on
//! a periodic lattice.
//!
//! A slice is `W(x) = Σ_m Z_m e^{2πi m·x/L}` with independent complex Gaussian
//! coefficients of variance `amp(m)² / L^k` subject to Hermitian symmetry, so
//! that `E[W(x) W(y)] = Σ_m amp(m)² L^{-k} cos(2π m·(x−y)/L)`, the periodized,
//! band-limited version of `‖x−y‖^{-β}`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{Read, Write};

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fft::LatticeFft;
use crate::kernels::{riesz_fourier_constant, NoiseParams};
use crate::quadrature::gauss_legendre;
use crate::rng::SeedPath;

/// Periodic lattice with `points` sites per axis on a torus of side `length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub k: usize,
    pub length: f64,
    pub points: usize,
    pub dt: f64,
}

impl TorusGrid {
    pub fn new(k: usize, length: f64, points: usize, dt: f64) -> Result<Self> {
        let g = Self { k, length, points, dt };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return domain("grid dimension must be positive");
        }
        if self.points < 4 || !self.points.is_multiple_of(2) {
            return domain(format!("points per axis must be even and >= 4, got {}", self.points));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return domain(format!("torus side must be positive, got {}", self.length));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return domain(format!("time step must be positive, got {}", self.dt));
        }
        Ok(())
    }

    /// Lattice spacing `h = L / M`.
    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    /// Number of lattice sites, `M^k`.
    pub fn len(&self) -> usize {
        self.points.pow(self.k as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Signed frequency index of FFT slot `j` along one axis.
    pub fn signed_mode(&self, j: usize) -> i64 {
        if j <= self.points / 2 {
            j as i64
        } else {
            j as i64 - self.points as i64
        }
    }

    /// Row-major multi-index of a flat lattice index.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.k];
        for slot in idx.iter_mut().rev() {
            *slot = flat % self.points;
            flat /= self.points;
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.points + i % self.points)
    }

    /// Physical coordinates of a site.
    pub fn site(&self, flat: usize) -> Vec<f64> {
        let h = self.spacing();
        self.unflatten(flat).into_iter().map(|i| i as f64 * h).collect()
    }

    /// Flat index of the site displaced from `flat` by `lag` cells (periodic).
    pub fn shifted(&self, flat: usize, lag: &[i64]) -> usize {
        let m = self.points as i64;
        let idx: Vec<usize> =
            self.unflatten(flat).into_iter().zip(lag).map(|(i, &l)| (i as i64 + l).rem_euclid(m) as usize).collect();
        self.flatten(&idx)
    }
}

/// Per-mode data shared by the sampler and the solver.
#[derive(Debug, Clone)]
pub struct SpectralPlan {
    pub grid: TorusGrid,
    pub params: NoiseParams,
    /// `‖ξ‖²` with `ξ = m / L`, in FFT order.
    pub freq_sq: Vec<f64>,
    /// Standard deviation of each spectral coefficient, `amp / L^{k/2}`.
    pub coef_sd: Vec<f64>,
    /// Flat index of the mode `−m`.
    pub conjugate: Vec<usize>,
}

impl SpectralPlan {
    pub fn new(grid: TorusGrid, params: NoiseParams) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        if grid.k != params.k {
            return Err(Error::Shape(format!("grid k = {} but noise k = {}", grid.k, params.k)));
        }
        let amps = spectral_amplitudes(&grid, &params);
        let scale = grid.length.powf(-(grid.k as f64) / 2.0);
        let n = grid.len();
        let mut freq_sq = Vec::with_capacity(n);
        let mut conjugate = Vec::with_capacity(n);
        for flat in 0..n {
            let idx = grid.unflatten(flat);
            let f: f64 = idx
                .iter()
                .map(|&j| {
                    let xi = grid.signed_mode(j) as f64 / grid.length;
                    xi * xi
                })
                .sum();
            freq_sq.push(f);
            let neg: Vec<usize> = idx.iter().map(|&j| (grid.points - j) % grid.points).collect();
            conjugate.push(grid.flatten(&neg));
        }
        Ok(Self { grid, params, freq_sq, coef_sd: amps.iter().map(|a| a * scale).collect(), conjugate })
    }

    /// Fill `coef` with one channel of Hermitian-symmetric Gaussian coefficients
    /// scaled by `scale(j)`. Normals are consumed in increasing flat order.
    pub fn draw_coefficients<R, F>(&self, rng: &mut R, coef: &mut [Complex64], scale: F)
    where
        R: rand::Rng + ?Sized,
        F: Fn(usize) -> f64,
    {
        for j in 0..coef.len() {
            let c = self.conjugate[j];
            if c < j {
                continue;
            }
            let sd = self.coef_sd[j] * scale(j);
            if c == j {
                let a: f64 = StandardNormal.sample(rng);
                coef[j] = Complex64::new(sd * a, 0.0);
            } else {
                let a: f64 = StandardNormal.sample(rng);
                let b: f64 = StandardNormal.sample(rng);
                let z = Complex64::new(a, b) * (sd * FRAC_1_SQRT_2);
                coef[j] = z;
                coef[c] = z.conj();
            }
        }
    }

    /// Exact covariance of the sampled field at lattice lag `lag` (in cells).
    pub fn lattice_covariance(&self, lag: &[i64]) -> f64 {
        let m = self.grid.points as f64;
        (0..self.grid.len())
            .map(|flat| {
                let phase: f64 = self
                    .grid
                    .unflatten(flat)
                    .iter()
                    .zip(lag)
                    .map(|(&j, &l)| self.grid.signed_mode(j) as f64 * l as f64)
                    .sum();
                self.coef_sd[flat].powi(2) * (2.0 * PI * phase / m).cos()
            })
            .sum()
    }
}

/// Square root of the spectral density `c ‖ξ‖^{β−k}` on the frequency lattice,
/// in FFT order. The zero mode carries the average of the density over the
/// cell `[−1/(2L), 1/(2L)]^k`.
pub fn spectral_amplitudes(grid: &TorusGrid, params: &NoiseParams) -> Vec<f64> {
    let c = riesz_fourier_constant(params);
    let k = grid.k as f64;
    let beta = params.beta;
    let zero = c * grid.length.powf(k) * (2.0 * grid.length).powf(-beta) * cube_cone_integral(grid.k, beta);
    (0..grid.len())
        .map(|flat| {
            if flat == 0 {
                return zero.sqrt();
            }
            let r2: f64 =
                grid.unflatten(flat).iter().map(|&j| (grid.signed_mode(j) as f64 / grid.length).powi(2)).sum();
            (c * r2.powf((beta - k) / 2.0)).sqrt()
        })
        .collect()
}

/// `∫_{[−1,1]^k} ‖u‖^{β−k} du`, via the pyramid decomposition
/// `(2k/β) ∫_{[−1,1]^{k−1}} (1 + ‖v‖²)^{(β−k)/2} dv`.
pub(crate) fn cube_cone_integral(k: usize, beta: f64) -> f64 {
    let p = (beta - k as f64) / 2.0;
    let face = if k == 1 {
        1.0
    } else {
        let (x, w) = gauss_legendre(32);
        // Map to [0, 1] and use the reflection symmetry of the face.
        let nodes: Vec<(f64, f64)> = x.iter().zip(&w).map(|(x, w)| ((x + 1.0) / 2.0, w / 2.0)).collect();
        let dims = k - 1;
        let mut total = 0.0;
        let mut idx = vec![0usize; dims];
        loop {
            let mut r2 = 1.0;
            let mut wt = 1.0;
            for &i in &idx {
                r2 += nodes[i].0 * nodes[i].0;
                wt *= nodes[i].1;
            }
            total += wt * r2.powf(p);
            let mut a = 0;
            while a < dims {
                idx[a] += 1;
                if idx[a] < nodes.len() {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == dims {
                break;
            }
        }
        total * 2f64.powi(dims as i32)
    };
    2.0 * k as f64 / beta * face
}

/// One time step of the noise in unit-time normalization: each channel has
/// the lattice covariance of [`SpectralPlan::lattice_covariance`].
#[derive(Debug, Clone)]
pub struct NoiseSlice {
    pub grid: TorusGrid,
    pub d: usize,
    /// Channel-major values, `values[c * M^k + site]`.
    pub values: Vec<f64>,
    pub seed_path: SeedPath,
    /// Largest imaginary part left by the inverse FFT, relative to the field RMS.
    pub imag_residue: f64,
}

impl NoiseSlice {
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[c * n..(c + 1) * n]
    }
}

/// Reusable sampler holding the spectral plan and FFT workspace.
pub struct NoiseSampler {
    plan: SpectralPlan,
    fft: LatticeFft,
    buf: Vec<Complex64>,
}

impl NoiseSampler {
    pub fn new(grid: TorusGrid, params: NoiseParams) -> Result<Self> {
        let plan = SpectralPlan::new(grid, params)?;
        let n = grid.len();
        Ok(Self { fft: LatticeFft::new(grid.k, grid.points), buf: vec![Complex64::default(); n], plan })
    }

    pub fn plan(&self) -> &SpectralPlan {
        &self.plan
    }

    pub fn sample(&mut self, seed_path: SeedPath) -> NoiseSlice {
        let n = self.plan.grid.len();
        let d = self.plan.params.d;
        let mut values = Vec::with_capacity(d * n);
        let mut residue: f64 = 0.0;
        for c in 0..d {
            let mut rng = seed_path.channel_rng(c);
            self.plan.draw_coefficients(&mut rng, &mut self.buf, |_| 1.0);
            self.fft.inverse(&mut self.buf);
            let mut sq = 0.0;
            let mut im: f64 = 0.0;
            for z in &self.buf {
                values.push(z.re);
                sq += z.re * z.re;
                im = im.max(z.im.abs());
            }
            let rms = (sq / n as f64).sqrt();
            if rms > 0.0 {
                residue = residue.max(im / rms);
            }
        }
        NoiseSlice { grid: self.plan.grid, d, values, seed_path, imag_residue: residue }
    }
}

/// Draw one noise slice for `seed_path`.
pub fn sample_noise_increment(grid: &TorusGrid, params: &NoiseParams, seed_path: SeedPath) -> Result<NoiseSlice> {
    Ok(NoiseSampler::new(*grid, *params)?.sample(seed_path))
}

pub const DUMP_MAGIC: &[u8; 8] = b"HLNOISE1";
pub const DUMP_HEADER_LEN: usize = 64;

/// Fixed 64-byte header preceding every record of a lattice dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub k: u32,
    pub d: u32,
    pub points: u64,
    pub length: f64,
    pub dt: f64,
    pub seed: u64,
    pub replica: u64,
    pub step: u64,
}

impl DumpHeader {
    pub fn for_slice(slice: &NoiseSlice) -> Self {
        Self {
            k: slice.grid.k as u32,
            d: slice.d as u32,
            points: slice.grid.points as u64,
            length: slice.grid.length,
            dt: slice.grid.dt,
            seed: slice.seed_path.master,
            replica: slice.seed_path.replica,
            step: slice.seed_path.step,
        }
    }

    pub fn payload_len(&self) -> usize {
        self.d as usize * (self.points as usize).pow(self.k)
    }

    pub fn to_bytes(&self) -> [u8; DUMP_HEADER_LEN] {
        let mut b = [0u8; DUMP_HEADER_LEN];
        b[0..8].copy_from_slice(DUMP_MAGIC);
        b[8..12].copy_from_slice(&self.k.to_le_bytes());
        b[12..16].copy_from_slice(&self.d.to_le_bytes());
        b[16..24].copy_from_slice(&self.points.to_le_bytes());
        b[24..32].copy_from_slice(&self.length.to_le_bytes());
        b[32..40].copy_from_slice(&self.dt.to_le_bytes());
        b[40..48].copy_from_slice(&self.seed.to_le_bytes());
        b[48..56].copy_from_slice(&self.replica.to_le_bytes());
        b[56..64].copy_from_slice(&self.step.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; DUMP_HEADER_LEN]) -> Result<Self> {
        if &b[0..8] != DUMP_MAGIC {
            return Err(Error::Parse("bad dump magic".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let f64_at = |i: usize| f64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        Ok(Self {
            k: u32_at(8),
            d: u32_at(12),
            points: u64_at(16),
            length: f64_at(24),
            dt: f64_at(32),
            seed: u64_at(40),
            replica: u64_at(48),
            step: u64_at(56),
        })
    }
}

/// Append one record (header plus little-endian payload).
pub fn write_record<W: Write>(w: &mut W, header: &DumpHeader, values: &[f64]) -> Result<()> {
    if values.len() != header.payload_len() {
        return Err(Error::Shape(format!(
            "payload has {} values, header implies {}",
            values.len(),
            header.payload_len()
        )));
    }
    w.write_all(&header.to_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read every record of a dump stream.
pub fn read_records<R: Read>(r: &mut R) -> Result<Vec<(DumpHeader, Vec<f64>)>> {
    let mut out = Vec::new();
    let mut head = [0u8; DUMP_HEADER_LEN];
    loop {
        match r.read_exact(&mut head) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let header = DumpHeader::from_bytes(&head)?;
        let mut bytes = vec![0u8; header.payload_len() * 8];
        r.read_exact(&mut bytes)?;
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push((header, values));
    }
    Ok(out)
}
