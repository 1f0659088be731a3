//! Two-covariance PLDA: `x = y + e`, `y ~ N(μ, B)`, `e ~ N(0, W)`.
//!
//! All heavy lifting happens in the basis `V` with `VᵀWV = I` and
//! `VᵀBV = diag(ψ)`, where every hypothesis factorises per dimension.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ivector::IVector;
use crate::linalg::{clamp_psd, symmetric_eigen, Cholesky};
use crate::math::{ln, LN_2PI};
use crate::matrix::Matrix;

pub const WITHIN_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct PldaModel {
    mu: Vec<f64>,
    between: Matrix,
    within: Matrix,
    /// Columns diagonalise both covariances.
    basis: Matrix,
    psi: Vec<f64>,
    within_chol: Cholesky,
}

impl PartialEq for PldaModel {
    fn eq(&self, other: &Self) -> bool {
        self.mu == other.mu && self.between == other.between && self.within == other.within
    }
}

impl PldaModel {
    /// Requires `within` positive definite; `between` is treated as PSD.
    pub fn new(mu: Vec<f64>, between: Matrix, within: Matrix) -> Result<Self> {
        let r = mu.len();
        for m in [&between, &within] {
            if m.rows() != r || m.cols() != r {
                return Err(Error::ShapeMismatch(format!(
                    "covariance {}x{} for rank {r}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        if r == 0 {
            return Err(Error::Empty("zero-rank PLDA model"));
        }
        let within_chol = Cholesky::new(&within)?;
        let eig = symmetric_eigen(&within_chol.whiten(&between))?;
        // V = L⁻ᵀ Q, column by column
        let mut basis = Matrix::zeros(r, r);
        for k in 0..r {
            let mut col = eig.vectors.column(k);
            within_chol.solve_upper(&mut col);
            for i in 0..r {
                basis[(i, k)] = col[i];
            }
        }
        let psi = eig.values.iter().map(|&v| v.max(0.0)).collect();
        Ok(Self {
            mu,
            between,
            within,
            basis,
            psi,
            within_chol,
        })
    }

    pub fn rank(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn between(&self) -> &Matrix {
        &self.between
    }

    pub fn within(&self) -> &Matrix {
        &self.within
    }

    /// Between-class variances in the diagonalised basis, descending.
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    /// `Vᵀ (x − μ)`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let centred: Vec<f64> = x.iter().zip(&self.mu).map(|(a, m)| a - m).collect();
        self.basis.tr_mat_vec(&centred)
    }

    fn check_rank(&self, v: &IVector) -> Result<()> {
        if v.rank() != self.rank() {
            return Err(Error::DimMismatch {
                expected: self.rank(),
                found: v.rank(),
            });
        }
        Ok(())
    }
}

/// Same-class versus different-class log-likelihood ratio, symmetric in its arguments.
pub fn score_plda(model: &PldaModel, enroll: &IVector, test: &IVector) -> Result<f64> {
    model.check_rank(enroll)?;
    model.check_rank(test)?;
    let u = model.project(&enroll.w);
    let v = model.project(&test.w);
    let mut llr = 0.0;
    for ((&psi, &u), &v) in model.psi.iter().zip(&u).zip(&v) {
        let (a, b) = (psi + 1.0, psi);
        let det = a * a - b * b;
        let same = -0.5 * ln(det) - 0.5 * (a * u * u - 2.0 * b * u * v + a * v * v) / det;
        let diff = -ln(a) - 0.5 * (u * u + v * v) / a;
        llr += same - diff;
    }
    Ok(llr)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PldaReport {
    /// Total data log-likelihood at the initial estimate and after each EM iteration.
    pub objectives: Vec<f64>,
    pub classes: usize,
    pub examples: usize,
    /// Within-class scatter vanished, so `W` sits on the smoothing floor.
    pub degenerate_within: bool,
}

impl PldaReport {
    pub fn is_monotone(&self, rel_tol: f64) -> bool {
        self.objectives.windows(2).all(|w| w[1] >= w[0] - rel_tol * w[0].abs())
    }
}

struct ClassStats {
    n: usize,
    mean: Vec<f64>,
}

struct Pooled {
    classes: Vec<ClassStats>,
    /// Σ_i Σ_j (x_ij − x̄_i)(x_ij − x̄_i)ᵀ
    within_scatter: Matrix,
    total_trace: f64,
    examples: usize,
}

fn pool<L: Ord>(data: &[(IVector, L)]) -> Result<Pooled> {
    let first = data.first().ok_or(Error::Empty("no PLDA training data"))?;
    let r = first.0.rank();
    let mut groups: BTreeMap<&L, Vec<&IVector>> = BTreeMap::new();
    for (v, label) in data {
        if v.rank() != r {
            return Err(Error::DimMismatch {
                expected: r,
                found: v.rank(),
            });
        }
        groups.entry(label).or_default().push(v);
    }
    if groups.len() < 2 {
        return Err(Error::SingleClass(groups.len()));
    }
    let mut within_scatter = Matrix::zeros(r, r);
    let mut classes = Vec::with_capacity(groups.len());
    let mut grand = vec![0.0; r];
    for members in groups.values() {
        let n = members.len();
        let mut mean = vec![0.0; r];
        for v in members {
            crate::math::axpy(1.0, &v.w, &mut mean);
            crate::math::axpy(1.0, &v.w, &mut grand);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for v in members {
            add_outer(&mut within_scatter, 1.0, &v.w, &mean);
        }
        classes.push(ClassStats { n, mean });
    }
    grand.iter_mut().for_each(|g| *g /= data.len() as f64);
    let total_trace = data
        .iter()
        .map(|(v, _)| v.w.iter().zip(&grand).map(|(a, g)| (a - g) * (a - g)).sum::<f64>())
        .sum::<f64>()
        / data.len() as f64;
    Ok(Pooled {
        classes,
        within_scatter,
        total_trace,
        examples: data.len(),
    })
}

/// `m += s (x − c)(x − c)ᵀ`
fn add_outer(m: &mut Matrix, s: f64, x: &[f64], c: &[f64]) {
    let d: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
    let r = d.len();
    for i in 0..r {
        let si = s * d[i];
        if si == 0.0 {
            continue;
        }
        let row = m.row_mut(i);
        for j in 0..r {
            row[j] += si * d[j];
        }
    }
}

/// `W + 1e-6·τ/R·I` where τ is tr(W), or the total-covariance trace when
/// tr(W) has collapsed. Returns whether the fallback was used.
fn smooth_within(w: &mut Matrix, total_trace: f64) -> bool {
    let r = w.rows();
    let tr = w.trace();
    let degenerate = !(tr > 1e-12 * total_trace);
    let tau = if degenerate { total_trace } else { tr };
    let tau = if tau > 0.0 { tau } else { 1.0 };
    let add = WITHIN_SMOOTHING * tau / r as f64;
    for i in 0..r {
        w[(i, i)] += add;
    }
    degenerate
}

fn log_likelihood(model: &PldaModel, pooled: &Pooled) -> f64 {
    let r = model.rank() as f64;
    let ln_det_w = model.within_chol.log_det();
    let w_inv = model.within_chol.inverse();
    let tr_scatter: f64 = w_inv
        .as_slice()
        .iter()
        .zip(pooled.within_scatter.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    let mut total = -0.5 * tr_scatter;
    for c in &pooled.classes {
        let n = c.n as f64;
        total -= 0.5 * (n - 1.0) * r * LN_2PI + 0.5 * (n - 1.0) * ln_det_w + 0.5 * r * ln(n);
        // ln N(x̄; μ, B + W/n) in the diagonal basis, Jacobian −½ ln|W|
        let z = model.project(&c.mean);
        total -= 0.5 * ln_det_w;
        for (&psi, &z) in model.psi.iter().zip(&z) {
            let var = psi + 1.0 / n;
            total -= 0.5 * (LN_2PI + ln(var) + z * z / var);
        }
    }
    total
}

fn em_step(model: &PldaModel, pooled: &Pooled) -> (Vec<f64>, Matrix, Matrix) {
    let r = model.rank();
    // A = W V maps diagonal-basis coordinates back: x − μ = A z
    let a = model.within.matmul(&model.basis).expect("square");
    let k = pooled.classes.len() as f64;
    let mut posterior_means = Vec::with_capacity(pooled.classes.len());
    let mut cov_between = vec![0.0; r];
    let mut cov_within = vec![0.0; r];
    for c in &pooled.classes {
        let n = c.n as f64;
        let z = model.project(&c.mean);
        let mut shrunk = vec![0.0; r];
        for d in 0..r {
            let psi = model.psi[d];
            let denom = n * psi + 1.0;
            shrunk[d] = n * psi / denom * z[d];
            cov_between[d] += psi / denom;
            cov_within[d] += n * psi / denom;
        }
        let m: Vec<f64> = a.mat_vec(&shrunk).iter().zip(&model.mu).map(|(x, mu)| x + mu).collect();
        posterior_means.push(m);
    }
    let mut mu = vec![0.0; r];
    for m in &posterior_means {
        crate::math::axpy(1.0 / k, m, &mut mu);
    }
    let mut between = conjugate_diag(&a, &cov_between);
    let mut within = conjugate_diag(&a, &cov_within);
    within.add_assign(&pooled.within_scatter);
    for (c, m) in pooled.classes.iter().zip(&posterior_means) {
        add_outer(&mut between, 1.0, m, &mu);
        add_outer(&mut within, c.n as f64, &c.mean, m);
    }
    between.scale(1.0 / k);
    within.scale(1.0 / pooled.examples as f64);
    between.symmetrize();
    within.symmetrize();
    (mu, between, within)
}

/// `A diag(d) Aᵀ`
fn conjugate_diag(a: &Matrix, d: &[f64]) -> Matrix {
    let r = a.rows();
    Matrix::from_fn(r, r, |i, j| {
        a.row(i).iter().zip(a.row(j)).zip(d).map(|((x, y), s)| x * y * s).sum()
    })
}

/// Classes are whatever the labels distinguish; singleton classes are
/// allowed and only inform `μ` and `B`.
pub fn train_plda<L: Ord>(data: &[(IVector, L)], em_iters: usize) -> Result<(PldaModel, PldaReport)> {
    let pooled = pool(data)?;
    let r = data[0].0.rank();
    let k = pooled.classes.len() as f64;
    let mut mu = vec![0.0; r];
    for c in &pooled.classes {
        crate::math::axpy(1.0 / k, &c.mean, &mut mu);
    }
    let mut between = Matrix::zeros(r, r);
    for c in &pooled.classes {
        add_outer(&mut between, 1.0 / k, &c.mean, &mu);
    }
    let mut within = pooled.within_scatter.clone();
    within.scale(1.0 / pooled.examples as f64);
    let degenerate_within = smooth_within(&mut within, pooled.total_trace);
    let mut model = PldaModel::new(mu, clamp_psd(&between)?, within)?;
    let mut report = PldaReport {
        objectives: vec![log_likelihood(&model, &pooled)],
        classes: pooled.classes.len(),
        examples: pooled.examples,
        degenerate_within,
    };
    for _ in 0..em_iters {
        let (mu, between, mut within) = em_step(&model, &pooled);
        smooth_within(&mut within, pooled.total_trace);
        model = PldaModel::new(mu, clamp_psd(&between)?, within)?;
        report.objectives.push(log_likelihood(&model, &pooled));
    }
    Ok((model, report))
}
