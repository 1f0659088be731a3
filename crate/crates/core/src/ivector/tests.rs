extern crate std;

use super::*;
use crate::gmm::accumulate_stats;
use crate::matrix::FeatureMatrix;
use nalgebra::{DMatrix, DVector};

fn toy_ubm(seed: u64, c: usize, d: usize) -> Gmm {
    let mut rng = rng_from(seed);
    let w = vec![1.0 / c as f64; c];
    let means = Matrix::from_fn(c, d, |_, _| 2.0 * normal(&mut rng));
    let vars = Matrix::from_fn(c, d, |_, _| 0.5 + normal(&mut rng).abs());
    Gmm::new(w, means, vars).unwrap()
}

fn toy_stats(ubm: &Gmm, n_utts: usize, frames: usize, seed: u64) -> Vec<BaumWelchStats> {
    let mut rng = rng_from(seed);
    (0..n_utts)
        .map(|u| {
            let shift: Vec<f64> = (0..ubm.dim()).map(|_| normal(&mut rng)).collect();
            let m = Matrix::from_fn(frames, ubm.dim(), |_, j| 1.5 * normal(&mut rng) + shift[j]);
            accumulate_stats(ubm, &FeatureMatrix::new(alloc::format!("u{u}"), m)).unwrap()
        })
        .collect()
}

/// Dense supervector solve: (I + Tᵀ Σ⁻¹ N T) w = Tᵀ Σ⁻¹ F with CD×CD matrices.
fn dense_posterior_mean(model: &TotalVariabilityModel, ubm: &Gmm, s: &BaumWelchStats) -> DVector<f64> {
    let (c, d, r) = (ubm.n_components(), ubm.dim(), model.rank());
    let t = DMatrix::from_row_slice(c * d, r, model.t_matrix().as_slice());
    let mut sigma_inv = DMatrix::zeros(c * d, c * d);
    let mut n_big = DMatrix::zeros(c * d, c * d);
    for k in 0..c {
        for j in 0..d {
            sigma_inv[(k * d + j, k * d + j)] = 1.0 / ubm.variances()[(k, j)];
            n_big[(k * d + j, k * d + j)] = s.zeroth[k];
        }
    }
    let f = DVector::from_row_slice(s.first.as_slice());
    let l = DMatrix::identity(r, r) + t.transpose() * &sigma_inv * &n_big * &t;
    let b = t.transpose() * &sigma_inv * f;
    l.lu().solve(&b).unwrap()
}

#[test]
fn toy_training_posteriors_match_dense_solve() {
    let ubm = toy_ubm(1, 2, 2);
    let stats = toy_stats(&ubm, 3, 20, 2);
    let (model, report) = train_t(&stats, &ubm, 1, 5, 3).unwrap();
    assert!(report.is_monotone(1e-6), "{:?}", report.objectives);
    for s in &stats {
        let w = extract_ivector(&model, s).unwrap();
        let oracle = dense_posterior_mean(&model, &ubm, s);
        for (a, b) in w.w.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn posterior_matches_dense_solve_small_instances() {
    for (seed, (c, d, r)) in [(2, 2, 1), (2, 2, 3), (4, 2, 3), (2, 4, 2), (1, 8, 3)]
        .into_iter()
        .enumerate()
    {
        let ubm = toy_ubm(10 + seed as u64, c, d);
        let stats = toy_stats(&ubm, 6, 15, 20 + seed as u64);
        let (model, _) = train_t(&stats, &ubm, r, 2, seed as u64).unwrap();
        for s in &stats {
            let w = extract_ivector(&model, s).unwrap();
            let oracle = dense_posterior_mean(&model, &ubm, s);
            for (a, b) in w.w.iter().zip(oracle.iter()) {
                assert!((a - b).abs() < 1e-8, "C={c} D={d} R={r}");
            }
        }
    }
}

#[test]
fn zero_statistics_give_the_prior_mean() {
    let ubm = toy_ubm(3, 2, 2);
    let stats = toy_stats(&ubm, 4, 10, 4);
    let (model, _) = train_t(&stats, &ubm, 2, 2, 0).unwrap();
    let w = extract_ivector(&model, &BaumWelchStats::zeros(&ubm, "silent")).unwrap();
    assert_eq!(w.w, vec![0.0, 0.0]);
}

#[test]
fn zero_subspace_gives_zero_ivector() {
    let ubm = toy_ubm(4, 2, 3);
    let model = TotalVariabilityModel::new(Matrix::zeros(6, 2), &ubm).unwrap();
    let stats = toy_stats(&ubm, 1, 10, 5);
    let w = extract_ivector(&model, &stats[0]).unwrap();
    assert!(w.w.iter().all(|&x| x == 0.0));
}

#[test]
fn foreign_ubm_statistics_are_rejected() {
    let ubm = toy_ubm(5, 2, 2);
    let other = toy_ubm(6, 2, 2);
    let model = TotalVariabilityModel::new(Matrix::from_fn(4, 1, |i, _| i as f64), &ubm).unwrap();
    let stats = toy_stats(&other, 1, 5, 7);
    assert!(matches!(
        extract_ivector(&model, &stats[0]),
        Err(Error::UbmMismatch { .. })
    ));
}

#[test]
fn duplicated_statistics_shrink_less() {
    let ubm = toy_ubm(7, 3, 2);
    let stats = toy_stats(&ubm, 5, 12, 8);
    let (model, _) = train_t(&stats, &ubm, 2, 3, 1).unwrap();
    let single = &stats[0];
    let mut doubled = single.clone();
    doubled.zeroth.iter_mut().for_each(|n| *n *= 2.0);
    doubled.first.scale(2.0);
    let w1 = extract_ivector(&model, single).unwrap();
    let w2 = extract_ivector(&model, &doubled).unwrap();
    let oracle = dense_posterior_mean(&model, &ubm, &doubled);
    for (a, b) in w2.w.iter().zip(oracle.iter()) {
        assert!((a - b).abs() < 1e-8);
    }
    assert!(norm(&w2.w) > norm(&w1.w));
    let cos = crate::math::dot(&w1.w, &w2.w) / (norm(&w1.w) * norm(&w2.w));
    assert!(cos > 0.0);
}

#[test]
fn training_is_deterministic_and_monotone() {
    let ubm = toy_ubm(8, 4, 3);
    let stats = toy_stats(&ubm, 12, 25, 9);
    let (a, ra) = train_t(&stats, &ubm, 3, 6, 42).unwrap();
    let (b, _) = train_t(&stats, &ubm, 3, 6, 42).unwrap();
    assert_eq!(a.t_matrix(), b.t_matrix());
    assert!(ra.is_monotone(1e-6), "{:?}", ra.objectives);
    assert_eq!(ra.objectives.len(), 7);
}

#[test]
fn average_enrollment_cases() {
    let v = IVector::new("a", vec![1.0, -2.0, 3.0]);
    assert_eq!(average_enrollment(core::slice::from_ref(&v), "m").unwrap().w, v.w);
    let neg = IVector::new("b", v.w.iter().map(|x| -x).collect());
    assert_eq!(average_enrollment(&[v.clone(), neg], "m").unwrap().w, vec![0.0; 3]);
    let vs = [
        IVector::new("1", vec![1.0, 2.0]),
        IVector::new("2", vec![4.0, -1.0]),
        IVector::new("3", vec![-2.0, 5.0]),
    ];
    let avg = average_enrollment(&vs, "m").unwrap();
    assert!((avg.w[0] - 1.0).abs() < 1e-15);
    assert!((avg.w[1] - 2.0).abs() < 1e-15);
    assert_eq!(avg.utterance_id, "m");
    assert!(average_enrollment(&[], "m").is_err());
}

#[test]
fn length_normalization() {
    let unit = IVector::new("u", vec![0.0, 1.0, 0.0]);
    assert_eq!(length_normalize(&unit).unwrap().w, unit.w);
    let v = length_normalize(&IVector::new("v", vec![3.0, 4.0])).unwrap();
    assert!((v.w[0] - 0.6).abs() < 1e-15 && (v.w[1] - 0.8).abs() < 1e-15);
    let mut rng = rng_from(1);
    let r = IVector::new("r", (0..20).map(|_| normal(&mut rng)).collect());
    assert!((norm(&length_normalize(&r).unwrap().w) - 1.0).abs() < 1e-12);
    assert_eq!(
        length_normalize(&IVector::new("z", vec![0.0; 4])).unwrap_err(),
        Error::DegenerateIVector
    );
}

#[test]
fn unvisited_component_keeps_its_initial_block() {
    let ubm = toy_ubm(21, 4, 3);
    let mut stats = toy_stats(&ubm, 12, 25, 22);
    for s in &mut stats {
        s.zeroth[0] = 0.0;
        s.first.row_mut(0).iter_mut().for_each(|v| *v = 0.0);
    }
    let (init, _) = train_t(&stats, &ubm, 3, 0, 5).unwrap();
    let (trained, report) = train_t(&stats, &ubm, 3, 4, 5).unwrap();
    let block = |m: &TotalVariabilityModel| m.t_matrix().as_slice()[..3 * 3].to_vec();
    assert_eq!(block(&init), block(&trained));
    assert_ne!(init.t_matrix(), trained.t_matrix());
    assert!(report.is_monotone(1e-8), "{:?}", report.objectives);
}
