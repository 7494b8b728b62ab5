//! Energies, capacities, Hausdorff-measure upper estimates and box-counting
//! dimension of finite point sets.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernels::{k_alpha, KAlphaConfig};
use crate::stats::linear_fit;

/// Weighted point cloud standing in for a probability measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub support: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Distance used for the self-interaction of each atom.
    pub cell_radius: f64,
}

impl DiscreteMeasure {
    pub fn new(support: Vec<Vec<f64>>, weights: Vec<f64>, cell_radius: f64) -> Result<Self> {
        let m = Self { support, weights, cell_radius };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform(support: Vec<Vec<f64>>, cell_radius: f64) -> Result<Self> {
        let n = support.len();
        Self::new(support, vec![1.0 / n as f64; n], cell_radius)
    }

    pub fn validate(&self) -> Result<()> {
        if self.support.is_empty() || self.support.len() != self.weights.len() {
            return domain("measure needs a nonempty support with one weight per point");
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return domain("weights must be finite and nonnegative");
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return domain(format!("weights sum to {total}, not 1"));
        }
        if !(self.cell_radius >= 0.0 && self.cell_radius.is_finite()) {
            return domain("cell radius must be finite and nonnegative");
        }
        check_points(&self.support)?;
        let mut seen = HashSet::with_capacity(self.support.len());
        for p in &self.support {
            let key: Vec<u64> = p.iter().map(|v| (v + 0.0).to_bits()).collect();
            if !seen.insert(key) {
                return domain("support points must be distinct");
            }
        }
        Ok(())
    }

    /// Image under `x ↦ λ x`, with the cell radius scaled alongside.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            support: self.support.iter().map(|p| p.iter().map(|v| v * lambda).collect()).collect(),
            weights: self.weights.clone(),
            cell_radius: self.cell_radius * lambda,
        }
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().map(|p| p.len()).unwrap_or(0);
    if d == 0 {
        return domain("points must have at least one coordinate");
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("points have differing dimensions".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return domain("point coordinates must be finite");
    }
    Ok(d)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Compact set to be hit: a point, a closed ball, or a finite cloud of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompactTarget {
    Point { at: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Cloud { points: Vec<Vec<f64>>, cell_radius: f64 },
}

impl CompactTarget {
    pub fn dimension(&self) -> usize {
        match self {
            CompactTarget::Point { at } => at.len(),
            CompactTarget::Ball { center, .. } => center.len(),
            CompactTarget::Cloud { points, .. } => points.first().map_or(0, |p| p.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CompactTarget::Point { at } => check_points(std::slice::from_ref(at)).map(|_| ()),
            CompactTarget::Ball { center, radius } => {
                check_points(std::slice::from_ref(center))?;
                if !(*radius >= 0.0 && radius.is_finite()) {
                    return domain("ball radius must be finite and nonnegative");
                }
                Ok(())
            }
            CompactTarget::Cloud { points, cell_radius } => {
                if points.is_empty() {
                    return domain("cloud target must be nonempty");
                }
                check_points(points)?;
                if !(*cell_radius >= 0.0 && cell_radius.is_finite()) {
                    return domain("cell radius must be finite and nonnegative");
                }
                Ok(())
            }
        }
    }

    /// Euclidean distance from `x` to the set.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            CompactTarget::Point { at } => dist(at, x),
            CompactTarget::Ball { center, radius } => (dist(center, x) - radius).max(0.0),
            CompactTarget::Cloud { points, .. } => points.iter().map(|p| dist(p, x)).fold(f64::INFINITY, f64::min),
        }
    }

    /// Grid discretization: lattice points of spacing `diameter / resolution`
    /// inside the set, each carrying half the spacing as cell radius.
    pub fn discretize(&self, resolution: usize) -> Result<(Vec<Vec<f64>>, f64)> {
        self.validate()?;
        match self {
            CompactTarget::Point { at } => Ok((vec![at.clone()], 0.0)),
            CompactTarget::Cloud { points, cell_radius } => Ok((points.clone(), *cell_radius)),
            CompactTarget::Ball { center, radius } => {
                if *radius == 0.0 {
                    return Ok((vec![center.clone()], 0.0));
                }
                if resolution < 2 {
                    return domain("ball discretization needs resolution >= 2");
                }
                let d = center.len();
                let step = 2.0 * radius / resolution as f64;
                let total = (resolution as u64 + 1).checked_pow(d as u32).unwrap_or(u64::MAX);
                if total > 50_000_000 {
                    return domain(format!("ball discretization would visit {total} lattice points"));
                }
                let mut out = vec![];
                let mut idx = vec![0usize; d];
                loop {
                    let p: Vec<f64> =
                        idx.iter().zip(center).map(|(&i, c)| c - radius + step * (i as f64 + 0.5)).collect();
                    if dist(&p, center) <= *radius {
                        out.push(p);
                    }
                    let mut a = 0;
                    while a < d {
                        idx[a] += 1;
                        if idx[a] < resolution {
                            break;
                        }
                        idx[a] = 0;
                        a += 1;
                    }
                    if a == d {
                        break;
                    }
                }
                Ok((out, step / 2.0))
            }
        }
    }
}

/// `I_α(μ) = Σ_{i,j} w_i w_j K_α(‖x_i − x_j‖)`, with the diagonal evaluated at
/// the cell radius. Atomic measures (`cell_radius = 0`) have infinite energy
/// for `α ≥ 0`.
pub fn energy(mu: &DiscreteMeasure, alpha: f64, cfg: &KAlphaConfig) -> Result<f64> {
    mu.validate()?;
    if alpha < 0.0 {
        return Ok(1.0);
    }
    if mu.cell_radius == 0.0 && mu.weights.iter().any(|w| *w > 0.0) {
        return Ok(f64::INFINITY);
    }
    let diag = k_alpha(mu.cell_radius, alpha, cfg)?;
    let n = mu.support.len();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = mu.weights[i] * diag;
            for j in 0..n {
                if j != i {
                    s += mu.weights[j] * k_alpha(dist(&mu.support[i], &mu.support[j]), alpha, cfg)?;
                }
            }
            Ok(mu.weights[i] * s)
        })
        .collect::<Result<_>>()?;
    Ok(rows.iter().sum())
}

/// Stopping rule and discretization for [`capacity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityOptions {
    /// Target Frank–Wolfe duality gap.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Frank–Wolfe iterations between active-set polishing attempts.
    pub polish_every: usize,
    /// Lattice points per diameter when a ball is discretized.
    pub ball_resolution: usize,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-8, max_iter: 100_000, polish_every: 200, ball_resolution: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub capacity: f64,
    /// Minimal discrete energy found (`+∞` when the capacity is 0).
    pub min_energy: f64,
    /// Upper bound on `min_energy − true discrete minimum`.
    pub duality_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Minimizing weights, when an optimization was run.
    pub weights: Option<Vec<f64>>,
}

impl CapacityResult {
    fn exact(capacity: f64, min_energy: f64) -> Self {
        Self { capacity, min_energy, duality_gap: 0.0, iterations: 0, converged: true, weights: None }
    }
}

/// Largest atom count for which the dense kernel matrix is built.
pub const MAX_CAPACITY_ATOMS: usize = 8000;

/// `Cap_α(F) = 1 / inf_μ I_α(μ)` over probability measures on the discretized set.
///
/// The quadratic program `min wᵀKw` over the simplex is solved by Frank–Wolfe
/// with away steps, alternated with an active-set polish that solves the KKT
/// system `K_S w = λ 1` on the current support.
pub fn capacity(
    target: &CompactTarget,
    alpha: f64,
    cfg: &KAlphaConfig,
    opt: &CapacityOptions,
) -> Result<CapacityResult> {
    target.validate()?;
    if alpha < 0.0 {
        return Ok(CapacityResult::exact(1.0, 1.0));
    }
    let (points, cell_radius) = target.discretize(opt.ball_resolution)?;
    if cell_radius == 0.0 {
        // Any probability measure on finitely many atoms has infinite energy.
        return Ok(CapacityResult::exact(0.0, f64::INFINITY));
    }
    if points.len() > MAX_CAPACITY_ATOMS {
        return domain(format!(
            "capacity discretization has {} atoms; the dense kernel matrix allows at most {MAX_CAPACITY_ATOMS}",
            points.len()
        ));
    }
    let k = kernel_matrix(&points, cell_radius, alpha, cfg)?;
    let sol = minimize_on_simplex(&k, opt);
    Ok(CapacityResult {
        capacity: 1.0 / sol.value,
        min_energy: sol.value,
        duality_gap: sol.gap,
        iterations: sol.iterations,
        converged: sol.gap < opt.gap_tol,
        weights: Some(sol.weights),
    })
}

fn kernel_matrix(points: &[Vec<f64>], cell_radius: f64, alpha: f64, cfg: &KAlphaConfig) -> Result<DMatrix<f64>> {
    let n = points.len();
    let diag = k_alpha(cell_radius, alpha, cfg)?;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Ok(diag) } else { k_alpha(dist(&points[i], &points[j]), alpha, cfg) })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

struct SimplexSolution {
    weights: Vec<f64>,
    value: f64,
    gap: f64,
    iterations: usize,
}

/// Frank–Wolfe gap `⟨∇f, w − s⟩ = 2 (wᵀKw − min_i (Kw)_i)`.
fn fw_gap(w: &[f64], kw: &[f64]) -> (f64, f64) {
    let value: f64 = w.iter().zip(kw).map(|(a, b)| a * b).sum();
    let min = kw.iter().copied().fold(f64::INFINITY, f64::min);
    (value, 2.0 * (value - min))
}

fn minimize_on_simplex(k: &DMatrix<f64>, opt: &CapacityOptions) -> SimplexSolution {
    let n = k.nrows();
    // Start from the uniform measure.
    let mut w = vec![1.0 / n as f64; n];
    let mut kw: Vec<f64> = (k * DVector::from_column_slice(&w)).iter().copied().collect();
    let (mut value, mut gap) = fw_gap(&w, &kw);
    let mut it = 0;
    while gap >= opt.gap_tol && it < opt.max_iter {
        if it % opt.polish_every == 0 {
            if let Some((pw, pkw, pv, pg)) = polish(k, &w) {
                if pg < gap {
                    w = pw;
                    kw = pkw;
                    value = pv;
                    gap = pg;
                    if gap < opt.gap_tol {
                        break;
                    }
                }
            }
        }
        it += 1;
        let s = argmin(&kw);
        let v = (0..n)
            .filter(|&i| w[i] > 0.0)
            .max_by(|&a, &b| kw[a].total_cmp(&kw[b]))
            .expect("weights are a probability vector");
        let fw_dir = value - kw[s];
        let away_dir = kw[v] - value;
        let (toward, gamma_max, num, curv) = if fw_dir >= away_dir {
            // d = e_s − w
            (true, 1.0, kw[s] - value, k[(s, s)] - 2.0 * kw[s] + value)
        } else {
            // d = w − e_v
            (false, w[v] / (1.0 - w[v]), value - kw[v], value - 2.0 * kw[v] + k[(v, v)])
        };
        let gamma = if curv > 0.0 { (-num / curv).clamp(0.0, gamma_max) } else { gamma_max };
        if gamma == 0.0 {
            break;
        }
        let col = if toward { s } else { v };
        if toward {
            for i in 0..n {
                w[i] *= 1.0 - gamma;
                kw[i] = (1.0 - gamma) * kw[i] + gamma * k[(i, col)];
            }
            w[s] += gamma;
        } else {
            for i in 0..n {
                w[i] *= 1.0 + gamma;
                kw[i] = (1.0 + gamma) * kw[i] - gamma * k[(i, col)];
            }
            w[v] -= gamma;
            if w[v] < 1e-300 {
                w[v] = 0.0;
            }
        }
        let (nv, ng) = fw_gap(&w, &kw);
        value = nv;
        gap = ng;
    }
    if gap >= opt.gap_tol {
        if let Some((pw, pkw, pv, pg)) = polish(k, &w) {
            if pg < gap {
                w = pw;
                kw = pkw;
                value = pv;
                gap = pg;
            }
        }
    }
    let _ = kw;
    SimplexSolution { weights: w, value, gap: gap.max(0.0), iterations: it }
}

fn argmin(v: &[f64]) -> usize {
    v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).expect("nonempty")
}

type Polished = (Vec<f64>, Vec<f64>, f64, f64);

/// Active-set refinement: solve `K_S x = 1` on the support `S`, drop atoms
/// with nonpositive solution, add the most violated KKT condition, repeat.
fn polish(k: &DMatrix<f64>, w: &[f64]) -> Option<Polished> {
    let n = k.nrows();
    let mut active: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
    for _ in 0..64 {
        let m = active.len();
        let ks = DMatrix::from_fn(m, m, |a, b| k[(active[a], active[b])]);
        let x = ks.cholesky()?.solve(&DVector::from_element(m, 1.0));
        if let Some(worst) = (0..m).filter(|&a| x[a] <= 0.0).min_by(|&a, &b| x[a].total_cmp(&x[b])) {
            active.remove(worst);
            if active.is_empty() {
                return None;
            }
            continue;
        }
        let total: f64 = x.iter().sum();
        let mut cand = vec![0.0; n];
        for (a, &i) in active.iter().enumerate() {
            cand[i] = x[a] / total;
        }
        let kw: Vec<f64> = (k * DVector::from_column_slice(&cand)).iter().copied().collect();
        let (value, gap) = fw_gap(&cand, &kw);
        let j = argmin(&kw);
        if gap <= 0.0 || cand[j] > 0.0 || kw[j] >= value * (1.0 - 1e-13) {
            return Some((cand, kw, value, gap.max(0.0)));
        }
        active.push(j);
        active.sort_unstable();
    }
    None
}

/// Upper estimate of the `ε`-premeasure `H_α^ε`: cover by dyadic cubes of side
/// `δ = 2^{−j} ≤ 2ε/√d`, each inside a ball of radius `δ√d/2 ≤ ε`, and return
/// `N · (δ√d)^α`. Infinite for `α < 0`.
pub fn hausdorff_upper(target: &CompactTarget, alpha: f64, eps: f64) -> Result<f64> {
    target.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return domain(format!("covering scale must be positive, got {eps}"));
    }
    if alpha < 0.0 {
        return Ok(f64::INFINITY);
    }
    let d = target.dimension();
    let side = dyadic_side(2.0 * eps / (d as f64).sqrt());
    let count = occupied_cubes(target, side)?;
    Ok(count as f64 * (side * (d as f64).sqrt()).powf(alpha))
}

/// Largest power of two not exceeding `x`.
fn dyadic_side(x: f64) -> f64 {
    2f64.powi(x.log2().floor() as i32)
}

fn occupied_cubes(target: &CompactTarget, side: f64) -> Result<u64> {
    match target {
        CompactTarget::Point { .. } => Ok(1),
        CompactTarget::Cloud { points, .. } => {
            let set: HashSet<Vec<i64>> =
                points.iter().map(|p| p.iter().map(|v| (v / side).floor() as i64).collect()).collect();
            Ok(set.len() as u64)
        }
        CompactTarget::Ball { center, radius } => {
            let lo: Vec<i64> = center.iter().map(|c| ((c - radius) / side).floor() as i64).collect();
            let hi: Vec<i64> = center.iter().map(|c| ((c + radius) / side).floor() as i64).collect();
            let total: f64 = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as f64).product();
            if total > 5e7 {
                return domain(format!("ball cover would visit {total:.0} cubes"));
            }
            let d = center.len();
            let mut idx = lo.clone();
            let mut count = 0;
            loop {
                // Distance from the center to the cube.
                let gap2: f64 = (0..d)
                    .map(|a| {
                        let c0 = idx[a] as f64 * side;
                        let c1 = c0 + side;
                        let x = center[a];
                        if x < c0 {
                            (c0 - x).powi(2)
                        } else if x > c1 {
                            (x - c1).powi(2)
                        } else {
                            0.0
                        }
                    })
                    .sum();
                if gap2 <= radius * radius {
                    count += 1;
                }
                let mut a = 0;
                while a < d {
                    idx[a] += 1;
                    if idx[a] <= hi[a] {
                        break;
                    }
                    idx[a] = lo[a];
                    a += 1;
                }
                if a == d {
                    break;
                }
            }
            Ok(count)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDimension {
    pub dimension: f64,
    pub ci: (f64, f64),
    pub r_squared: f64,
    /// `(δ, occupied boxes)` per scale.
    pub counts: Vec<(f64, u64)>,
    pub warnings: Vec<String>,
}

/// Box-counting dimension: slope of `log N(δ)` against `log(1/δ)`.
pub fn box_dimension(points: &[Vec<f64>], scales: &[f64]) -> Result<BoxDimension> {
    let dim = check_points(points)?;
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    box_dimension_flat(&flat, dim, scales)
}

/// [`box_dimension`] on a flat coordinate buffer, `dim` values per point.
pub fn box_dimension_flat(coords: &[f64], dim: usize, scales: &[f64]) -> Result<BoxDimension> {
    if dim == 0 || !coords.len().is_multiple_of(dim) {
        return Err(Error::Shape(format!("{} coordinates do not split into {dim}-vectors", coords.len())));
    }
    let mut counter = BoxCounter::new(dim, scales)?;
    counter.extend_flat(coords)?;
    counter.finish()
}

/// Occupied boxes per scale, accumulated over batches of points.
///
/// Boxes are the cells of the lattice `δ Z^dim`. Counters built from
/// disjoint batches merge into the counter of the union.
#[derive(Debug, Clone)]
pub struct BoxCounter {
    dim: usize,
    scales: Vec<f64>,
    packed: Vec<HashSet<u128>>,
    wide: Vec<HashSet<Vec<i64>>>,
    points: u64,
    first: Option<Vec<f64>>,
    distinct: bool,
}

impl BoxCounter {
    pub fn new(dim: usize, scales: &[f64]) -> Result<Self> {
        if dim == 0 {
            return domain("points must have at least one coordinate");
        }
        if scales.len() < 4 || scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return domain("box counting needs at least 4 positive scales");
        }
        let (smin, smax) = scales.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
        if (smax / smin).log10() < 1.5 - 1e-9 {
            return domain("box-counting scales must span at least 1.5 decades");
        }
        Ok(Self {
            dim,
            scales: scales.to_vec(),
            packed: vec![HashSet::new(); scales.len()],
            wide: vec![HashSet::new(); scales.len()],
            points: 0,
            first: None,
            distinct: false,
        })
    }

    pub fn points(&self) -> u64 {
        self.points
    }

    /// Add points given as a flat buffer, `dim` values per point.
    pub fn extend_flat(&mut self, coords: &[f64]) -> Result<()> {
        let dim = self.dim;
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} coordinates do not split into {dim}-vectors", coords.len())));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return domain("point coordinates must be finite");
        }
        if coords.is_empty() {
            return Ok(());
        }
        let first = self.first.get_or_insert_with(|| coords[..dim].to_vec()).clone();
        if !self.distinct {
            self.distinct = coords.chunks_exact(dim).any(|p| p != first.as_slice());
        }
        self.points += (coords.len() / dim) as u64;
        let bits = if dim <= 16 { (128 / dim as u32).min(63) } else { 0 };
        self.scales.par_iter().zip(self.packed.par_iter_mut().zip(self.wide.par_iter_mut())).for_each(
            |(&side, (packed, wide))| {
                let half = if bits > 0 { 1i64 << (bits - 1) } else { 0 };
                for p in coords.chunks_exact(dim) {
                    let mut key = 0u128;
                    let mut fits = bits > 0;
                    for &v in p {
                        let i = (v / side).floor() as i64;
                        if fits && i > -half && i < half {
                            key = (key << bits) | (i + half) as u128;
                        } else {
                            fits = false;
                            break;
                        }
                    }
                    if fits {
                        packed.insert(key);
                    } else {
                        wide.insert(p.iter().map(|v| (v / side).floor() as i64).collect());
                    }
                }
            },
        );
        Ok(())
    }

    /// Absorb a counter built with the same dimension and scales.
    pub fn merge(&mut self, other: BoxCounter) -> Result<()> {
        if other.dim != self.dim || other.scales != self.scales {
            return Err(Error::Shape("box counters differ in dimension or scales".into()));
        }
        if other.points == 0 {
            return Ok(());
        }
        match (&self.first, &other.first) {
            (None, _) => self.first = other.first.clone(),
            (Some(a), Some(b)) if a != b => self.distinct = true,
            _ => {}
        }
        self.distinct |= other.distinct;
        self.points += other.points;
        for (mine, theirs) in self.packed.iter_mut().zip(other.packed) {
            if mine.len() < theirs.len() {
                let small = std::mem::replace(mine, theirs);
                mine.extend(small);
            } else {
                mine.extend(theirs);
            }
        }
        for (mine, theirs) in self.wide.iter_mut().zip(other.wide) {
            mine.extend(theirs);
        }
        Ok(())
    }

    /// Fit the counts accumulated so far.
    pub fn finish(&self) -> Result<BoxDimension> {
        let n = self.points;
        if n < 1000 {
            return domain(format!("box counting needs at least 1000 points, got {n}"));
        }
        if !self.distinct {
            return Ok(BoxDimension {
                dimension: 0.0,
                ci: (0.0, 0.0),
                r_squared: 1.0,
                counts: self.scales.iter().map(|&s| (s, 1)).collect(),
                warnings: vec!["all points coincide; dimension set to 0".into()],
            });
        }
        let counts: Vec<(f64, u64)> = self
            .scales
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, (self.packed[i].len() + self.wide[i].len()) as u64))
            .collect();
        let mut warnings = vec![];
        if let Some((s, _)) = counts.iter().find(|(_, c)| *c >= n) {
            warnings.push(format!("scale {s} saturates: every point occupies its own box"));
        }
        if let Some((s, _)) = counts.iter().find(|(_, c)| *c == 1) {
            warnings.push(format!("scale {s} puts every point in one box"));
        }
        let x: Vec<f64> = counts.iter().map(|(s, _)| -s.ln()).collect();
        let y: Vec<f64> = counts.iter().map(|(_, c)| (*c as f64).ln()).collect();
        let fit = linear_fit(&x, &y)?;
        Ok(BoxDimension { dimension: fit.slope, ci: fit.slope_ci, r_squared: fit.r_squared, counts, warnings })
    }
}

/// Parse points from text: one point per line, whitespace-separated
/// coordinates, `#` comments. With `dim = Some(d)`, a line with `d + 1`
/// columns carries a trailing weight; weights are normalized to sum to one.
pub fn parse_points(text: &str, dim: Option<usize>) -> Result<(Vec<Vec<f64>>, Option<Vec<f64>>)> {
    let mut points = vec![];
    let mut weights = vec![];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}: {t:?}", lineno + 1))))
            .collect::<Result<_>>()?;
        let d = dim.unwrap_or(vals.len());
        if vals.len() == d {
            points.push(vals);
        } else if vals.len() == d + 1 {
            weights.push((points.len(), vals[d]));
            points.push(vals[..d].to_vec());
        } else {
            return Err(Error::Parse(format!(
                "line {}: expected {d} or {} columns, got {}",
                lineno + 1,
                d + 1,
                vals.len()
            )));
        }
    }
    if points.is_empty() {
        return Err(Error::Parse("no points found".into()));
    }
    check_points(&points)?;
    if weights.is_empty() {
        return Ok((points, None));
    }
    if weights.len() != points.len() {
        return Err(Error::Parse("either every line or no line may carry a weight".into()));
    }
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) || weights.iter().any(|(_, w)| *w < 0.0) {
        return Err(Error::Parse("weights must be nonnegative with positive sum".into()));
    }
    Ok((points, Some(weights.into_iter().map(|(_, w)| w / total).collect())))
}

/// Cell centers of a uniform `cells`-cell partition of `[a, b]`, with half
/// the cell width as cell radius.
pub fn interval_cloud(a: f64, b: f64, cells: usize) -> CompactTarget {
    let w = (b - a) / cells as f64;
    CompactTarget::Cloud { points: (0..cells).map(|i| vec![a + (i as f64 + 0.5) * w]).collect(), cell_radius: w / 2.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> KAlphaConfig {
        KAlphaConfig::new(10.0).unwrap()
    }

    #[test]
    fn two_point_energy() {
        let mu = DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0]], 0.01).unwrap();
        assert_relative_eq!(energy(&mu, 1.0, &cfg()).unwrap(), 50.5, max_relative = 1e-14);
        assert_eq!(energy(&mu, -0.5, &cfg()).unwrap(), 1.0);
        let atom = DiscreteMeasure::uniform(vec![vec![0.3, 0.1]], 0.0).unwrap();
        assert_eq!(energy(&atom, 2.0, &cfg()).unwrap(), f64::INFINITY);
    }

    #[test]
    fn measure_validation() {
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.6], 0.1).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![0.0]], vec![0.5, 0.5], 0.1).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5], 0.1).is_err());
    }

    #[test]
    fn singleton_capacity_and_hausdorff() {
        let z = CompactTarget::Point { at: vec![0.1, 0.2, 0.3] };
        let opt = CapacityOptions::default();
        assert_eq!(capacity(&z, 0.5, &cfg(), &opt).unwrap().capacity, 0.0);
        assert_eq!(capacity(&z, -0.5, &cfg(), &opt).unwrap().capacity, 1.0);
        assert_eq!(hausdorff_upper(&z, -0.1, 0.1).unwrap(), f64::INFINITY);
        let h: Vec<f64> = (1..12).map(|j| hausdorff_upper(&z, 0.5, 2f64.powi(-j)).unwrap()).collect();
        assert!(h.windows(2).all(|w| w[1] < w[0]));
        assert!(h[10] < 0.05);
    }

    #[test]
    fn interval_equilibrium_is_certified_and_symmetric() {
        let t = interval_cloud(0.0, 1.0, 128);
        let r = capacity(&t, 0.5, &cfg(), &CapacityOptions::default()).unwrap();
        assert!(r.converged && r.duality_gap < 1e-8, "gap {}", r.duality_gap);
        let w = r.weights.unwrap();
        for i in 0..64 {
            assert!((w[i] - w[127 - i]).abs() < 1e-6);
        }
        // Endpoint mass exceeds interior mass for a Riesz equilibrium measure.
        assert!(w[0] > w[64]);
    }

    #[test]
    fn box_dimension_of_a_segment_and_degenerate_cloud() {
        let pts: Vec<Vec<f64>> = (0..5000).map(|i| vec![i as f64 / 5000.0, 0.5 * i as f64 / 5000.0, 0.0]).collect();
        let scales: Vec<f64> = (2..8).map(|j| 2f64.powi(-j)).collect();
        let b = box_dimension(&pts, &scales).unwrap();
        assert!((b.dimension - 1.0).abs() < 0.1, "{b:?}");
        let same = vec![vec![0.2, 0.2]; 2000];
        let b = box_dimension(&same, &scales).unwrap();
        assert_eq!(b.dimension, 0.0);
        assert!(!b.warnings.is_empty());
        assert!(box_dimension(&pts[..10], &scales).is_err());
        assert!(box_dimension(&pts, &scales[..3]).is_err());
    }

    #[test]
    fn parse_points_with_and_without_weights() {
        let (p, w) = parse_points("# header\n0 1\n2 3 # trailing\n\n", None).unwrap();
        assert_eq!(p, vec![vec![0.0, 1.0], vec![2.0, 3.0]]);
        assert!(w.is_none());
        let (p, w) = parse_points("0 1 1\n2 3 3\n", Some(2)).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(w.unwrap(), vec![0.25, 0.75]);
        assert!(parse_points("0 1 1\n2 3\n", Some(2)).is_err());
        assert!(parse_points("0 x\n", None).is_err());
        assert!(parse_points("", None).is_err());
    }

    #[test]
    fn ball_cover_counts_intersecting_cubes() {
        let b = CompactTarget::Ball { center: vec![0.5, 0.5], radius: 0.25 };
        let d = CompactTarget::Ball { center: vec![0.5, 0.5], radius: 0.0 };
        // Degenerate ball behaves like a point up to boundary cubes.
        assert!(hausdorff_upper(&d, 1.0, 0.01).unwrap() <= 4.0 * 0.01 * 2.0);
        let h2 = hausdorff_upper(&b, 2.0, 1e-3).unwrap();
        // Area π/16 times the cover overhead (δ√2)²/δ² = 2, up to the boundary layer.
        let area = std::f64::consts::PI / 16.0;
        assert!(h2 > 2.0 * area && h2 < 2.0 * area * 1.05, "{h2}");
    }

    proptest! {
        #[test]
        fn energy_scales_homogeneously(
            xs in proptest::collection::vec(-5.0f64..5.0, 2..12),
            lambda in 0.1f64..10.0,
            alpha in 0.1f64..3.0,
        ) {
            let mut pts: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
            pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
            pts.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-2);
            prop_assume!(pts.len() >= 2);
            let mu = DiscreteMeasure::uniform(pts, 1e-3).unwrap();
            let c = KAlphaConfig::new(1e9).unwrap();
            let e1 = energy(&mu, alpha, &c).unwrap();
            let e2 = energy(&mu.scaled(lambda), alpha, &c).unwrap();
            prop_assert!((e2 / (lambda.powf(-alpha) * e1) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn hausdorff_nonincreasing_for_alpha_at_least_dimension(
            cx in -1.0f64..1.0, cy in -1.0f64..1.0, r in 0.01f64..0.5, alpha in 2.0f64..3.0,
        ) {
            let b = CompactTarget::Ball { center: vec![cx, cy], radius: r };
            let h: Vec<f64> = (3..9).map(|j| hausdorff_upper(&b, alpha, 2f64.powi(-j)).unwrap()).collect();
            prop_assert!(h.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        }
    }
}
