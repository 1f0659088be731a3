use alloc::vec;
use alloc::vec::Vec;
use core::borrow::Borrow;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::matrix::{FeatureMatrix, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// `k × d`, orthonormal rows ordered by decreasing variance.
    pub components: Matrix,
    /// Variance captured by each component.
    pub variances: Vec<f64>,
}

impl PcaProjection {
    pub fn new(mean: Vec<f64>, components: Matrix) -> Result<Self> {
        if components.cols() != mean.len() {
            return Err(Error::DimMismatch {
                expected: mean.len(),
                found: components.cols(),
            });
        }
        let k = components.rows();
        Ok(Self {
            mean,
            components,
            variances: vec![0.0; k],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.rows()
    }

    /// Maps projected coordinates back to the input space.
    pub fn back_project(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.components.tr_mat_vec(z);
        x.iter_mut().zip(&self.mean).for_each(|(a, m)| *a += m);
        x
    }
}

/// Top-`k` eigenvectors of the pooled frame covariance.
pub fn pca_fit<F: Borrow<FeatureMatrix>>(data: &[F], k: usize) -> Result<PcaProjection> {
    let d = data.first().ok_or(Error::Empty("no PCA data"))?.borrow().dim();
    if let Some(f) = data.iter().map(Borrow::borrow).find(|f| f.dim() != d) {
        return Err(Error::DimMismatch {
            expected: d,
            found: f.dim(),
        });
    }
    if k == 0 || k > d {
        return Err(Error::InvalidConfig(alloc::format!("PCA rank {k} outside 1..={d}")));
    }
    let n: usize = data.iter().map(|f| f.borrow().num_frames()).sum();
    if n < 2 {
        return Err(Error::InsufficientFrames { frames: n, needed: 2 });
    }
    let mut mean = vec![0.0; d];
    for f in data.iter().map(Borrow::borrow) {
        for row in f.frames.row_iter() {
            crate::math::axpy(1.0, row, &mut mean);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = Matrix::zeros(d, d);
    let mut centred = vec![0.0; d];
    for f in data.iter().map(Borrow::borrow) {
        for row in f.frames.row_iter() {
            for ((c, x), m) in centred.iter_mut().zip(row).zip(&mean) {
                *c = x - m;
            }
            for i in 0..d {
                let ci = centred[i];
                if ci != 0.0 {
                    crate::math::axpy(ci, &centred[i..], &mut cov.row_mut(i)[i..]);
                }
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    cov.scale(1.0 / n as f64);
    let eig = symmetric_eigen(&cov)?;
    let components = Matrix::from_fn(k, d, |r, c| eig.vectors[(c, r)]);
    Ok(PcaProjection {
        mean,
        components,
        variances: eig.values[..k].iter().map(|v| v.max(0.0)).collect(),
    })
}

pub fn pca_project(p: &PcaProjection, feat: &FeatureMatrix) -> Result<FeatureMatrix> {
    if feat.dim() != p.input_dim() {
        return Err(Error::DimMismatch {
            expected: p.input_dim(),
            found: feat.dim(),
        });
    }
    let k = p.output_dim();
    let mut out = Matrix::zeros(feat.num_frames(), k);
    let mut centred = vec![0.0; p.input_dim()];
    for (t, row) in feat.frames.row_iter().enumerate() {
        for ((c, x), m) in centred.iter_mut().zip(row).zip(&p.mean) {
            *c = x - m;
        }
        let orow = out.row_mut(t);
        for (o, comp) in orow.iter_mut().zip(p.components.row_iter()) {
            *o = crate::math::dot(comp, &centred);
        }
    }
    Ok(feat.with_frames(out))
}
