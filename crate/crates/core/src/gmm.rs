//! Diagonal-covariance Gaussian mixtures: EM training of the universal
//! background model, means-only MAP adaptation, log-likelihood-ratio scoring
//! and zeroth/first-order Baum-Welch statistics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, ln, sqrt, LN_2PI};
use crate::matrix::{check_dims, total_frames, FeatureMatrix, Matrix};
use crate::rng::{derive_seed, normal, permutation, rng_from};

/// Variances are floored at this fraction of the global per-dimension variance.
pub const VARIANCE_FLOOR_RATIO: f64 = 1e-4;
/// A component whose soft count falls below this is considered empty.
pub const EMPTY_COMPONENT_COUNT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    weights: Vec<f64>,
    means: Matrix,
    variances: Matrix,
    // cached: 1/σ² and ln w_c − ½(D ln 2π + Σ ln σ²)
    inv_var: Matrix,
    log_const: Vec<f64>,
}

impl Gmm {
    pub fn new(weights: Vec<f64>, means: Matrix, variances: Matrix) -> Result<Self> {
        let c = weights.len();
        if c == 0 {
            return Err(Error::Empty("mixture has no components"));
        }
        if means.rows() != c || variances.rows() != c || means.cols() != variances.cols() {
            return Err(Error::ShapeMismatch(format!(
                "{c} weights, means {}x{}, variances {}x{}",
                means.rows(),
                means.cols(),
                variances.rows(),
                variances.cols()
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidConfig(format!("weights sum to {sum}")));
        }
        if !means.is_finite() || variances.as_slice().iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite mean or non-positive variance".into()));
        }
        let d = means.cols();
        let inv_var = Matrix::from_fn(c, d, |i, j| 1.0 / variances[(i, j)]);
        let log_const = (0..c)
            .map(|i| {
                let log_det: f64 = variances.row(i).iter().map(|&v| ln(v)).sum();
                ln(weights[i]) - 0.5 * (d as f64 * LN_2PI + log_det)
            })
            .collect();
        Ok(Self {
            weights,
            means,
            variances,
            inv_var,
            log_const,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn variances(&self) -> &Matrix {
        &self.variances
    }

    /// Weighted per-component log densities `ln w_c + ln N(x; m_c, σ²_c)`.
    pub fn component_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let s = crate::math::weighted_sq_dist(x, self.means.row(c), self.inv_var.row(c));
            *o = self.log_const[c] - 0.5 * s;
        }
    }

    pub fn frame_log_likelihood(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.n_components()];
        self.component_log_densities(x, &mut buf);
        crate::math::log_sum_exp(&buf)
    }

    /// Posteriors γ_c(x) into `out`; returns the frame log-likelihood.
    pub fn posteriors(&self, x: &[f64], out: &mut [f64]) -> f64 {
        self.component_log_densities(x, out);
        let lse = crate::math::log_sum_exp(out);
        out.iter_mut().for_each(|g| *g = exp(*g - lse));
        lse
    }

    /// Same weights and variances, new means.
    pub fn with_means(&self, means: Matrix) -> Result<Self> {
        Self::new(self.weights.clone(), means, self.variances.clone())
    }

    /// Content hash identifying this model (FNV-1a over the parameter bits).
    pub fn content_hash(&self) -> u64 {
        let mut bytes = Vec::with_capacity(8 * (self.weights.len() * (1 + 2 * self.dim())) + 8);
        bytes.extend_from_slice(&(self.n_components() as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for v in self
            .weights
            .iter()
            .chain(self.means.as_slice())
            .chain(self.variances.as_slice())
        {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        crate::rng::fnv1a(&bytes)
    }

    fn check_dim(&self, data: &FeatureMatrix) -> Result<()> {
        if data.dim() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: data.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UbmConfig {
    pub n_components: usize,
    pub em_iters: usize,
    pub kmeans_iters: usize,
    pub max_init_frames: usize,
    pub seed: u64,
}

impl UbmConfig {
    pub fn new(n_components: usize, em_iters: usize, seed: u64) -> Self {
        Self {
            n_components,
            em_iters,
            kmeans_iters: 10,
            max_init_frames: 100_000,
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UbmReport {
    /// Total data log-likelihood before the first EM iteration and after each one.
    pub log_likelihoods: Vec<f64>,
    /// `(iteration, component)` pairs re-seeded after collapsing.
    pub reseeded: Vec<(usize, usize)>,
    pub frames: usize,
}

impl UbmReport {
    /// True when the log-likelihood never dropped by more than `rel_tol`
    /// (relative), ignoring iterations that re-seeded a component.
    pub fn is_monotone(&self, rel_tol: f64) -> bool {
        self.log_likelihoods
            .windows(2)
            .enumerate()
            .all(|(i, w)| self.reseeded.iter().any(|&(it, _)| it == i) || w[1] >= w[0] - rel_tol * w[0].abs())
    }
}

struct GlobalStats {
    mean: Vec<f64>,
    var: Vec<f64>,
}

fn global_stats(data: &[FeatureMatrix], dim: usize) -> GlobalStats {
    let n = total_frames(data) as f64;
    let mut mean = vec![0.0; dim];
    for f in data {
        for row in f.frames.row_iter() {
            crate::math::axpy(1.0, row, &mut mean);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for f in data {
        for row in f.frames.row_iter() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
    }
    var.iter_mut().for_each(|v| *v = (*v / n).max(f64::MIN_POSITIVE));
    GlobalStats { mean, var }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Trains a UBM: seeded k-means on a frame subsample, then EM on all frames.
pub fn train_ubm(data: &[FeatureMatrix], cfg: &UbmConfig) -> Result<(Gmm, UbmReport)> {
    let c = cfg.n_components;
    let n_frames = total_frames(data);
    if c == 0 {
        return Err(Error::InvalidConfig("n_components must be positive".into()));
    }
    if n_frames < 10 * c {
        return Err(Error::InsufficientFrames {
            frames: n_frames,
            needed: 10 * c,
        });
    }
    let dim = data.iter().find(|f| !f.is_empty()).map_or(0, FeatureMatrix::dim);
    check_dims(data, dim)?;
    let frames: Vec<&[f64]> = data.iter().flat_map(|f| f.frames.row_iter()).collect();
    let global = global_stats(data, dim);
    let floor: Vec<f64> = global.var.iter().map(|v| v * VARIANCE_FLOOR_RATIO).collect();
    let mut rng = rng_from(derive_seed(cfg.seed, "ubm"));

    // k-means initialisation on a subsample
    let subsample: Vec<&[f64]> = if n_frames <= cfg.max_init_frames {
        frames.clone()
    } else {
        let mut idx = permutation(&mut rng, n_frames);
        idx.truncate(cfg.max_init_frames);
        idx.sort_unstable();
        idx.iter().map(|&i| frames[i]).collect()
    };
    let order = permutation(&mut rng, subsample.len());
    let mut centers = Matrix::zeros(c, dim);
    for k in 0..c {
        centers.row_mut(k).copy_from_slice(subsample[order[k]]);
    }
    let mut assign = vec![0usize; subsample.len()];
    for _ in 0..cfg.kmeans_iters {
        for (a, x) in assign.iter_mut().zip(&subsample) {
            let mut best = (f64::INFINITY, 0);
            for k in 0..c {
                let d = sq_dist(x, centers.row(k));
                if d < best.0 {
                    best = (d, k);
                }
            }
            *a = best.1;
        }
        let mut sums = Matrix::zeros(c, dim);
        let mut counts = vec![0usize; c];
        for (&a, x) in assign.iter().zip(&subsample) {
            counts[a] += 1;
            crate::math::axpy(1.0, x, sums.row_mut(a));
        }
        for k in 0..c {
            if counts[k] > 0 {
                let inv = 1.0 / counts[k] as f64;
                for (m, s) in centers.row_mut(k).iter_mut().zip(sums.row(k)) {
                    *m = s * inv;
                }
            }
        }
    }
    let mut counts = vec![0usize; c];
    let mut var = Matrix::zeros(c, dim);
    for (&a, x) in assign.iter().zip(&subsample) {
        counts[a] += 1;
        for ((v, xi), m) in var.row_mut(a).iter_mut().zip(*x).zip(centers.row(a)) {
            *v += (xi - m) * (xi - m);
        }
    }
    let mut weights = vec![0.0; c];
    for k in 0..c {
        if counts[k] == 0 {
            var.row_mut(k).copy_from_slice(&global.var);
            weights[k] = 1.0 / subsample.len() as f64;
        } else {
            let inv = 1.0 / counts[k] as f64;
            for (j, v) in var.row_mut(k).iter_mut().enumerate() {
                *v = (*v * inv).max(floor[j]);
            }
            weights[k] = counts[k] as f64;
        }
    }
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);
    let mut gmm = Gmm::new(weights, centers, var)?;

    let mut report = UbmReport {
        frames: n_frames,
        ..UbmReport::default()
    };
    let mut post = vec![0.0; c];
    for iter in 0..=cfg.em_iters {
        let mut occ = vec![0.0; c];
        let mut first = Matrix::zeros(c, dim);
        let mut second = Matrix::zeros(c, dim);
        let mut total_ll = 0.0;
        for x in &frames {
            total_ll += gmm.posteriors(x, &mut post);
            if iter == cfg.em_iters {
                continue;
            }
            for k in 0..c {
                let g = post[k];
                if g < 1e-300 {
                    continue;
                }
                occ[k] += g;
                let f = first.row_mut(k);
                for (fi, xi) in f.iter_mut().zip(x.iter()) {
                    *fi += g * xi;
                }
                let s = second.row_mut(k);
                for (si, xi) in s.iter_mut().zip(x.iter()) {
                    *si += g * xi * xi;
                }
            }
        }
        report.log_likelihoods.push(total_ll);
        if iter == cfg.em_iters {
            break;
        }
        let mut weights = vec![0.0; c];
        let mut means = Matrix::zeros(c, dim);
        let mut vars = Matrix::zeros(c, dim);
        for k in 0..c {
            if occ[k] < EMPTY_COMPONENT_COUNT {
                report.reseeded.push((iter, k));
                for j in 0..dim {
                    means[(k, j)] = global.mean[j] + 0.1 * sqrt(global.var[j]) * normal(&mut rng);
                    vars[(k, j)] = global.var[j];
                }
                weights[k] = 1.0 / n_frames as f64;
                continue;
            }
            weights[k] = occ[k] / n_frames as f64;
            let inv = 1.0 / occ[k];
            for j in 0..dim {
                let m = first[(k, j)] * inv;
                means[(k, j)] = m;
                vars[(k, j)] = (second[(k, j)] * inv - m * m).max(floor[j]);
            }
        }
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= wsum);
        gmm = Gmm::new(weights, means, vars)?;
    }
    Ok((gmm, report))
}

/// Iterated means-only MAP adaptation:
/// `m̂_c = (N_c x̄_c + r m_c) / (N_c + r)` with posteriors recomputed against
/// the current adapted model on each iteration.
pub fn map_adapt(ubm: &Gmm, data: &FeatureMatrix, relevance: f64, iters: usize) -> Result<Gmm> {
    if data.is_empty() {
        return Err(Error::EmptyUtterance(data.utterance_id.clone()));
    }
    ubm.check_dim(data)?;
    if !(relevance >= 0.0) {
        return Err(Error::InvalidConfig(format!("relevance factor {relevance}")));
    }
    let (c, dim) = (ubm.n_components(), ubm.dim());
    let mut model = ubm.clone();
    let mut post = vec![0.0; c];
    for _ in 0..iters {
        let mut occ = vec![0.0; c];
        let mut first = Matrix::zeros(c, dim);
        for x in data.frames.row_iter() {
            model.posteriors(x, &mut post);
            for k in 0..c {
                occ[k] += post[k];
                crate::math::axpy(post[k], x, first.row_mut(k));
            }
        }
        let mut means = ubm.means().clone();
        for k in 0..c {
            let denom = occ[k] + relevance;
            if denom <= 0.0 {
                continue;
            }
            for j in 0..dim {
                means[(k, j)] = (first[(k, j)] + relevance * ubm.means()[(k, j)]) / denom;
            }
        }
        model = model.with_means(means)?;
    }
    Ok(model)
}

/// `(1/T) Σ_t ln Σ_c w_c N(x_t; m_c, σ²_c)`.
pub fn avg_log_likelihood(model: &Gmm, data: &FeatureMatrix) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyUtterance(data.utterance_id.clone()));
    }
    model.check_dim(data)?;
    let mut buf = vec![0.0; model.n_components()];
    let mut total = 0.0;
    for x in data.frames.row_iter() {
        model.component_log_densities(x, &mut buf);
        total += crate::math::log_sum_exp(&buf);
    }
    Ok(total / data.num_frames() as f64)
}

/// Average log-likelihood ratio of the claimant model against the UBM.
pub fn llr_score(target: &Gmm, ubm: &Gmm, data: &FeatureMatrix) -> Result<f64> {
    if target.n_components() != ubm.n_components() || target.dim() != ubm.dim() {
        return Err(Error::ShapeMismatch(format!(
            "target {}x{} vs ubm {}x{}",
            target.n_components(),
            target.dim(),
            ubm.n_components(),
            ubm.dim()
        )));
    }
    Ok(avg_log_likelihood(target, data)? - avg_log_likelihood(ubm, data)?)
}

/// Zeroth-order and UBM-mean-centred first-order statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BaumWelchStats {
    pub utterance_id: String,
    pub zeroth: Vec<f64>,
    pub first: Matrix,
    pub ubm_hash: u64,
}

impl BaumWelchStats {
    pub fn n_components(&self) -> usize {
        self.zeroth.len()
    }

    pub fn dim(&self) -> usize {
        self.first.cols()
    }

    pub fn total_count(&self) -> f64 {
        self.zeroth.iter().sum()
    }

    /// Zero statistics (no evidence) for a given UBM.
    pub fn zeros(ubm: &Gmm, utterance_id: impl Into<String>) -> Self {
        Self {
            utterance_id: utterance_id.into(),
            zeroth: vec![0.0; ubm.n_components()],
            first: Matrix::zeros(ubm.n_components(), ubm.dim()),
            ubm_hash: ubm.content_hash(),
        }
    }
}

pub fn accumulate_stats(ubm: &Gmm, data: &FeatureMatrix) -> Result<BaumWelchStats> {
    if data.is_empty() {
        return Err(Error::EmptyUtterance(data.utterance_id.clone()));
    }
    ubm.check_dim(data)?;
    let mut stats = BaumWelchStats::zeros(ubm, data.utterance_id.clone());
    let mut post = vec![0.0; ubm.n_components()];
    for x in data.frames.row_iter() {
        ubm.posteriors(x, &mut post);
        for (k, &g) in post.iter().enumerate() {
            stats.zeroth[k] += g;
            let m = ubm.means().row(k);
            for ((f, xi), mi) in stats.first.row_mut(k).iter_mut().zip(x).zip(m) {
                *f += g * (xi - mi);
            }
        }
    }
    Ok(stats)
}
