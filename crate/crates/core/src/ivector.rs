//! Total-variability subspace `M = m + T w` over Baum-Welch statistics.
//!
//! The first-order statistics are already centred on the UBM means, so the
//! model only needs `T` and the UBM's diagonal covariances.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gmm::{BaumWelchStats, Gmm, EMPTY_COMPONENT_COUNT};
use crate::linalg::Cholesky;
use crate::math::norm;
use crate::matrix::Matrix;
use crate::rng::{derive_seed, normal, rng_from};

pub const T_INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct TotalVariabilityModel {
    /// `(C·D) × R`, component blocks `T_c` of shape `D × R` stacked by rows.
    t_matrix: Matrix,
    n_components: usize,
    dim: usize,
    ubm_hash: u64,
    inv_var: Vec<f64>,
    // T_cᵀ Σ_c⁻¹ T_c per component
    precisions: Vec<Matrix>,
}

impl TotalVariabilityModel {
    pub fn new(t_matrix: Matrix, ubm: &Gmm) -> Result<Self> {
        let (c, d) = (ubm.n_components(), ubm.dim());
        if t_matrix.rows() != c * d {
            return Err(Error::DimMismatch {
                expected: c * d,
                found: t_matrix.rows(),
            });
        }
        if t_matrix.cols() == 0 || t_matrix.cols() >= c * d {
            return Err(Error::InvalidConfig(format!(
                "rank {} must be in 1..{}",
                t_matrix.cols(),
                c * d
            )));
        }
        if !t_matrix.is_finite() {
            return Err(Error::InvalidConfig("non-finite T matrix".into()));
        }
        let inv_var: Vec<f64> = ubm.variances().as_slice().iter().map(|v| 1.0 / v).collect();
        let r = t_matrix.cols();
        let precisions = (0..c)
            .map(|k| {
                let mut p = Matrix::zeros(r, r);
                for j in 0..d {
                    let row = t_matrix.row(k * d + j);
                    let iv = inv_var[k * d + j];
                    for a in 0..r {
                        let s = iv * row[a];
                        if s == 0.0 {
                            continue;
                        }
                        let prow = p.row_mut(a);
                        for (pb, tb) in prow.iter_mut().zip(row) {
                            *pb += s * tb;
                        }
                    }
                }
                p
            })
            .collect();
        Ok(Self {
            t_matrix,
            n_components: c,
            dim: d,
            ubm_hash: ubm.content_hash(),
            inv_var,
            precisions,
        })
    }

    pub fn rank(&self) -> usize {
        self.t_matrix.cols()
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ubm_hash(&self) -> u64 {
        self.ubm_hash
    }

    pub fn t_matrix(&self) -> &Matrix {
        &self.t_matrix
    }

    fn check_stats(&self, stats: &BaumWelchStats) -> Result<()> {
        if stats.ubm_hash != self.ubm_hash {
            return Err(Error::UbmMismatch {
                expected: self.ubm_hash,
                found: stats.ubm_hash,
            });
        }
        if stats.n_components() != self.n_components || stats.dim() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "stats {}x{} vs model {}x{}",
                stats.n_components(),
                stats.dim(),
                self.n_components,
                self.dim
            )));
        }
        Ok(())
    }

    /// Posterior of `w` given one utterance's statistics.
    pub fn posterior(&self, stats: &BaumWelchStats) -> Result<Posterior> {
        self.check_stats(stats)?;
        let r = self.rank();
        let mut precision = Matrix::identity(r);
        for (k, &n) in stats.zeroth.iter().enumerate() {
            if n != 0.0 {
                for (a, p) in precision.as_mut_slice().iter_mut().zip(self.precisions[k].as_slice()) {
                    *a += n * p;
                }
            }
        }
        let mut linear = vec![0.0; r];
        for (row_idx, (&f, &iv)) in stats.first.as_slice().iter().zip(&self.inv_var).enumerate() {
            let s = f * iv;
            if s != 0.0 {
                crate::math::axpy(s, self.t_matrix.row(row_idx), &mut linear);
            }
        }
        let chol = Cholesky::new(&precision).map_err(|_| Error::SingularPrecision(stats.utterance_id.clone()))?;
        let mean = chol.solve(&linear);
        Ok(Posterior { mean, linear, chol })
    }
}

/// Gaussian posterior `N(L⁻¹ b, L⁻¹)` of the latent factor.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: Vec<f64>,
    /// `b = Σ_c T_cᵀ Σ_c⁻¹ F_c`
    pub linear: Vec<f64>,
    pub chol: Cholesky,
}

impl Posterior {
    /// `½ bᵀ L⁻¹ b − ½ ln|L|`: the `T`-dependent part of the statistics'
    /// marginal log-likelihood.
    pub fn log_evidence(&self) -> f64 {
        0.5 * crate::math::dot(&self.linear, &self.mean) - 0.5 * self.chol.log_det()
    }

    /// `E[w wᵀ] = L⁻¹ + w wᵀ`.
    pub fn second_moment(&self) -> Matrix {
        let mut m = self.chol.inverse();
        let r = self.mean.len();
        for a in 0..r {
            for b in 0..r {
                m[(a, b)] += self.mean[a] * self.mean[b];
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IVector {
    pub w: Vec<f64>,
    pub utterance_id: String,
}

impl IVector {
    pub fn new(utterance_id: impl Into<String>, w: Vec<f64>) -> Self {
        Self {
            w,
            utterance_id: utterance_id.into(),
        }
    }

    pub fn rank(&self) -> usize {
        self.w.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TvReport {
    /// Σ_u (½ bᵀL⁻¹b − ½ ln|L|) at the initial T and after each EM iteration.
    pub objectives: Vec<f64>,
}

impl TvReport {
    pub fn is_monotone(&self, rel_tol: f64) -> bool {
        self.objectives.windows(2).all(|w| w[1] >= w[0] - rel_tol * w[0].abs())
    }
}

/// EM estimation of the total-variability matrix.
pub fn train_t(
    stats: &[BaumWelchStats],
    ubm: &Gmm,
    rank: usize,
    em_iters: usize,
    seed: u64,
) -> Result<(TotalVariabilityModel, TvReport)> {
    if stats.len() < rank {
        return Err(Error::InvalidConfig(format!(
            "{} utterances cannot support rank {rank}",
            stats.len()
        )));
    }
    let (c, d) = (ubm.n_components(), ubm.dim());
    let mut rng = rng_from(derive_seed(seed, "tvm"));
    let t0 = Matrix::from_fn(c * d, rank, |_, _| T_INIT_STD * normal(&mut rng));
    let mut model = TotalVariabilityModel::new(t0, ubm)?;
    let mut report = TvReport::default();
    for iter in 0..=em_iters {
        let mut objective = 0.0;
        let mut second = vec![Matrix::zeros(rank, rank); c];
        let mut cross = Matrix::zeros(c * d, rank);
        let mut occupancy = vec![0.0; c];
        for s in stats {
            let post = model.posterior(s)?;
            objective += post.log_evidence();
            if iter == em_iters {
                continue;
            }
            let ww = post.second_moment();
            for (k, &n) in s.zeroth.iter().enumerate() {
                occupancy[k] += n;
                if n != 0.0 {
                    for (a, b) in second[k].as_mut_slice().iter_mut().zip(ww.as_slice()) {
                        *a += n * b;
                    }
                }
            }
            for (row_idx, &f) in s.first.as_slice().iter().enumerate() {
                if f != 0.0 {
                    crate::math::axpy(f, &post.mean, cross.row_mut(row_idx));
                }
            }
        }
        report.objectives.push(objective);
        if iter == em_iters {
            break;
        }
        // T_c = C_c A_c⁻¹, row by row: A_c t = c (A_c symmetric)
        // A component the data never visits leaves the objective independent
        // of its block, so the previous block is kept.
        let mut t_new = model.t_matrix().clone();
        for k in 0..c {
            if occupancy[k] < EMPTY_COMPONENT_COUNT {
                continue;
            }
            let chol = Cholesky::new(&second[k])
                .map_err(|_| Error::SingularPrecision(format!("component {k} accumulator")))?;
            for j in 0..d {
                let row = chol.solve(cross.row(k * d + j));
                t_new.row_mut(k * d + j).copy_from_slice(&row);
            }
        }
        model = TotalVariabilityModel::new(t_new, ubm)?;
    }
    Ok((model, report))
}

pub fn extract_ivector(model: &TotalVariabilityModel, stats: &BaumWelchStats) -> Result<IVector> {
    let post = model.posterior(stats)?;
    Ok(IVector::new(stats.utterance_id.clone(), post.mean))
}

/// Element-wise mean of enrollment i-vectors.
pub fn average_enrollment(ivectors: &[IVector], model_id: &str) -> Result<IVector> {
    let first = ivectors.first().ok_or(Error::Empty("no enrollment i-vectors"))?;
    let r = first.rank();
    let mut mean = vec![0.0; r];
    for v in ivectors {
        if v.rank() != r {
            return Err(Error::DimMismatch {
                expected: r,
                found: v.rank(),
            });
        }
        crate::math::axpy(1.0, &v.w, &mut mean);
    }
    let n = ivectors.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(IVector::new(model_id, mean))
}

pub fn length_normalize(v: &IVector) -> Result<IVector> {
    let n = norm(&v.w);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateIVector);
    }
    Ok(IVector::new(
        v.utterance_id.clone(),
        v.w.iter().map(|x| x / n).collect(),
    ))
}

#[cfg(test)]
mod tests;
