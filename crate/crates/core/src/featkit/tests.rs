extern crate std;

use super::*;
use crate::rng::{normal, rng_from};
use proptest::prelude::*;

fn tone(freq: f64, seconds: f64, sr: u32) -> Waveform {
    let n = (seconds * f64::from(sr)) as usize;
    let samples = (0..n)
        .map(|i| 0.5 * crate::math::sin(2.0 * PI * freq * i as f64 / f64::from(sr)))
        .collect();
    Waveform::new(samples, sr)
}

#[test]
fn energy_floor_is_exp_minus_fifty() {
    assert!((ln(ENERGY_FLOOR) - LOG_ENERGY_FLOOR).abs() < 1e-12);
}

#[test]
fn frame_count_two_seconds() {
    let cfg = FrontEndConfig::default();
    let wave = Waveform::new(vec![0.0; 32_000], 16_000);
    let mfcc = extract_mfcc(&wave, &cfg).unwrap();
    assert_eq!(mfcc.num_frames(), 199);
    assert_eq!(mfcc.dim(), 19);
    let framing = Framing::new(8_000, &cfg);
    assert_eq!((framing.frame_len, framing.shift, framing.nfft), (160, 80, 256));
}

#[test]
fn shorter_than_one_window_is_rejected() {
    let cfg = FrontEndConfig::default();
    let wave = Waveform::new(vec![0.1; 319], 16_000);
    assert!(matches!(
        extract_mfcc(&wave, &cfg),
        Err(Error::TooShort {
            samples: 319,
            needed: 320
        })
    ));
}

#[test]
fn silence_gives_floor_energies_and_constant_cepstra() {
    let cfg = FrontEndConfig::default();
    let wave = Waveform::new(vec![0.0; 16_000], 16_000);
    let mfcc = extract_mfcc(&wave, &cfg).unwrap();
    let first = mfcc.frame(0).to_vec();
    for t in 0..mfcc.num_frames() {
        assert_eq!(mfcc.frame(t), &first[..]);
    }
    // DCT-II rows c1.. are orthogonal to the constant vector
    assert!(first.iter().all(|c| c.abs() < 1e-9));
}

/// Filterbank energies computed with a direct O(N²) DFT instead of the FFT.
fn direct_mel_energies(wave: &Waveform, cfg: &FrontEndConfig) -> Matrix {
    let framing = Framing::new(wave.sample_rate, cfg);
    let t_count = framing.num_frames(wave.samples.len()).unwrap();
    let bank = MelFilterbank::new(cfg.n_mel_filters, framing.nfft, wave.sample_rate);
    let n = framing.frame_len;
    let mut out = Matrix::zeros(t_count, cfg.n_mel_filters);
    for t in 0..t_count {
        let frame = framing.frame(&wave.samples, t);
        let windowed: Vec<f64> = (0..n)
            .map(|i| frame[i] * (0.54 - 0.46 * libm::cos(2.0 * PI * i as f64 / (n - 1) as f64)))
            .collect();
        for k in 0..=framing.nfft / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in windowed.iter().enumerate() {
                let a = -2.0 * PI * (k * i) as f64 / framing.nfft as f64;
                re += x * libm::cos(a);
                im += x * libm::sin(a);
            }
            let p = re * re + im * im;
            for m in 0..cfg.n_mel_filters {
                out[(t, m)] += bank.weight(m, k) * p;
            }
        }
    }
    out
}

#[test]
fn sine_peaks_in_nearest_mel_filter() {
    let cfg = FrontEndConfig::default();
    let wave = tone(1000.0, 0.1, 16_000);
    let fast = mel_energies(&wave, &cfg).unwrap();
    let slow = direct_mel_energies(&wave, &cfg);
    let bank = MelFilterbank::new(24, 512, 16_000);
    let nearest = bank
        .centers_hz()
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1000.0).abs().total_cmp(&(b.1 - 1000.0).abs()))
        .unwrap()
        .0;
    for t in 0..fast.rows() {
        for m in 0..24 {
            let (a, b) = (fast[(t, m)], slow[(t, m)]);
            assert!(
                (a - b).abs() <= 1e-8 * (1.0 + b.abs()),
                "frame {t} filter {m}: {a} vs {b}"
            );
        }
        let argmax = |row: &[f64]| row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax(fast.row(t)), nearest);
        assert_eq!(argmax(slow.row(t)), nearest);
    }
}

/// Direct difference equation over an explicitly padded input.
fn rasta_oracle(x: &[f64]) -> Vec<f64> {
    let mut padded = vec![x[0]; 4];
    padded.extend_from_slice(x);
    let mut y: Vec<f64> = Vec::with_capacity(x.len());
    for t in 0..x.len() {
        let p = t + 4;
        let fir = 0.1 * (2.0 * padded[p] + padded[p - 1] - padded[p - 3] - 2.0 * padded[p - 4]);
        let prev = if t == 0 { 0.0 } else { y[t - 1] };
        y.push(0.98 * prev + fir);
    }
    y
}

fn column_matrix(x: &[f64]) -> FeatureMatrix {
    FeatureMatrix::new("u", Matrix::from_vec(x.len(), 1, x.to_vec()).unwrap())
}

#[test]
fn rasta_rejects_dc() {
    let out = apply_rasta(&column_matrix(&[3.7; 400]));
    assert!(out.frames.as_slice().iter().all(|y| y.abs() < 1e-12));
}

#[test]
fn rasta_impulse_matches_recursion() {
    let mut x = vec![0.0; 60];
    x[0] = 1.0;
    let out = apply_rasta(&column_matrix(&x));
    let oracle = rasta_oracle(&x);
    for (a, b) in out.frames.as_slice().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-14);
    }
    let mut delayed = vec![0.0; 60];
    delayed[5] = 1.0;
    let out = apply_rasta(&column_matrix(&delayed));
    let oracle = rasta_oracle(&delayed);
    assert!((out.frames[(5, 0)] - 0.2).abs() < 1e-15);
    for (a, b) in out.frames.as_slice().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn rasta_single_frame() {
    let out = apply_rasta(&column_matrix(&[2.5]));
    assert_eq!(out.frames.as_slice(), &rasta_oracle(&[2.5])[..]);
}

proptest! {
    #[test]
    fn rasta_matches_recursion_on_random_trajectories(x in proptest::collection::vec(-10.0f64..10.0, 1..200)) {
        let out = apply_rasta(&column_matrix(&x));
        let oracle = rasta_oracle(&x);
        for (a, b) in out.frames.as_slice().iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn cmvn_normalizes_any_input(seed in 0u64..1000, t in 2usize..60) {
        let mut rng = rng_from(seed);
        let m = Matrix::from_fn(t, 5, |_, d| 3.0 * normal(&mut rng) + d as f64 * 10.0);
        let out = apply_cmvn(&FeatureMatrix::new("x", m)).unwrap();
        for d in 0..5 {
            let col = out.frames.column(d);
            let mean = col.iter().sum::<f64>() / t as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
            prop_assert!(mean.abs() < 1e-5);
            prop_assert!((var - 1.0).abs() < 1e-4);
        }
        let again = apply_cmvn(&out).unwrap();
        for (a, b) in again.frames.as_slice().iter().zip(out.frames.as_slice()) {
            prop_assert!((a - b).abs() < 1e-5);
        }
    }
}

#[test]
fn deltas_of_constant_are_zero() {
    let stat = FeatureMatrix::new("c", Matrix::from_fn(30, 19, |_, d| d as f64 - 4.0));
    let full = append_deltas(&stat, 2).unwrap();
    assert_eq!(full.dim(), 57);
    for t in 0..30 {
        assert!(full.frame(t)[19..].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn deltas_of_ramp_equal_slope() {
    let slope = 0.75;
    let stat = FeatureMatrix::new("r", Matrix::from_fn(20, 19, |t, d| slope * t as f64 + d as f64));
    let full = append_deltas(&stat, 2).unwrap();
    for t in 2..18 {
        for d in 19..38 {
            assert!((full.frame(t)[d] - slope).abs() < 1e-12);
        }
    }
    // second derivative of a ramp is zero away from the replicated edges
    for t in 4..16 {
        for d in 38..57 {
            assert!(full.frame(t)[d].abs() < 1e-12);
        }
    }
}

#[test]
fn deltas_single_frame() {
    let stat = FeatureMatrix::new("s", Matrix::from_fn(1, 19, |_, d| d as f64 * 1.5));
    let full = append_deltas(&stat, 2).unwrap();
    assert_eq!(full.num_frames(), 1);
    assert!(full.frame(0)[19..].iter().all(|&v| v == 0.0));
}

#[test]
fn vad_silence_keeps_everything() {
    let cfg = FrontEndConfig::default();
    let mask = energy_vad(&Waveform::new(vec![0.0; 8_000], 16_000), &cfg).unwrap();
    assert_eq!(mask.kept(), mask.keep.len());
    assert_eq!(mask.keep.len(), 49);
}

#[test]
fn vad_percentile_zero_keeps_everything() {
    let cfg = FrontEndConfig {
        vad_energy_percentile: 0.0,
        ..FrontEndConfig::default()
    };
    let mut rng = rng_from(3);
    let wave = Waveform::new((0..16_000).map(|_| 0.1 * normal(&mut rng)).collect(), 16_000);
    let mask = energy_vad(&wave, &cfg).unwrap();
    assert!(mask.keep.iter().all(|&k| k));
}

#[test]
fn vad_half_silence_half_tone() {
    let cfg = FrontEndConfig {
        vad_energy_percentile: 0.5,
        ..FrontEndConfig::default()
    };
    // frames 0..50 silent, frame 50 straddles, 51..=100 inside the tone
    let mut samples = vec![0.0; 8_160];
    samples.extend(tone(440.0, 0.51, 16_000).samples);
    let wave = Waveform::new(samples, 16_000);
    let energies = frame_log_energies(&wave, &cfg).unwrap();
    let t_count = energies.len();
    // sort-and-threshold oracle: drop the floor(p·T) quietest frames, keep ties
    let mut order: Vec<usize> = (0..t_count).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    let cut = energies[order[t_count / 2]];
    let oracle: Vec<bool> = energies.iter().map(|&e| e >= cut).collect();
    let mask = energy_vad(&wave, &cfg).unwrap();
    assert_eq!(mask.keep, oracle);
    assert_eq!(t_count, 101);
    for (t, &k) in mask.keep.iter().enumerate() {
        if t < 50 {
            assert!(!k, "silent frame {t} kept");
        }
        if t >= 51 {
            assert!(k, "loud frame {t} dropped");
        }
    }
}

#[test]
fn cmvn_constant_dimension_is_zeroed() {
    let m = Matrix::from_fn(10, 3, |t, d| if d == 1 { 4.2 } else { t as f64 * (d + 1) as f64 });
    let out = apply_cmvn(&FeatureMatrix::new("c", m)).unwrap();
    assert!(out.frames.column(1).iter().all(|&v| v.abs() < 1e-12));
}

#[test]
fn cmvn_needs_two_frames() {
    let m = Matrix::zeros(1, 3);
    assert_eq!(
        apply_cmvn(&FeatureMatrix::new("c", m)).unwrap_err(),
        Error::InsufficientFrames { frames: 1, needed: 2 }
    );
}

#[test]
fn cmvn_is_identity_on_standardized_input() {
    let m = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
    let out = apply_cmvn(&FeatureMatrix::new("c", m.clone())).unwrap();
    for (a, b) in out.frames.as_slice().iter().zip(m.as_slice()) {
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn front_end_is_57_dim_finite_and_deterministic() {
    let cfg = FrontEndConfig::default();
    let mut rng = rng_from(11);
    let mut samples: Vec<f64> = tone(300.0, 1.0, 16_000).samples;
    samples.iter_mut().for_each(|s| *s += 0.01 * normal(&mut rng));
    let wave = Waveform::new(samples, 16_000);
    let a = front_end("u1", &wave, &cfg).unwrap();
    let b = front_end("u1", &wave, &cfg).unwrap();
    assert_eq!(a.dim(), 57);
    assert!(a.frames.is_finite());
    assert!(a.num_frames() >= 60 && a.num_frames() < 99);
    let bits_a: Vec<u64> = a.frames.as_slice().iter().map(|v| v.to_bits()).collect();
    let bits_b: Vec<u64> = b.frames.as_slice().iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits_a, bits_b);
}

#[test]
fn config_validation() {
    let bad = FrontEndConfig {
        window_ms: 10.0,
        shift_ms: 10.0,
        ..FrontEndConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = FrontEndConfig {
        n_cepstra: 30,
        ..FrontEndConfig::default()
    };
    assert!(bad.validate().is_err());
}
