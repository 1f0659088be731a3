//! Acoustic front-end: framing, Hamming-windowed power spectra, a triangular
//! mel filterbank, log compression and DCT-II cepstra, followed by RASTA
//! filtering of the cepstral trajectories, regression deltas, percentile
//! energy VAD and utterance-level CMVN.

pub mod fft;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math::{cos, ln, log10, powf, round, sqrt};
use crate::matrix::{FeatureMatrix, Matrix};

/// Log energies are clamped at `ln(ENERGY_FLOOR) = -50`.
pub const ENERGY_FLOOR: f64 = 1.928_749_847_963_918e-22;
pub const LOG_ENERGY_FLOOR: f64 = -50.0;
pub const CMVN_VARIANCE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    /// Amplitudes in `[-1, 1]`.
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / f64::from(self.sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontEndConfig {
    pub window_ms: f64,
    pub shift_ms: f64,
    pub n_mel_filters: usize,
    pub n_cepstra: usize,
    pub delta_window: usize,
    pub rasta_enabled: bool,
    pub vad_energy_percentile: f64,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        Self {
            window_ms: 20.0,
            shift_ms: 10.0,
            n_mel_filters: 24,
            n_cepstra: 19,
            delta_window: 2,
            rasta_enabled: true,
            vad_energy_percentile: 0.3,
        }
    }
}

impl FrontEndConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shift_ms > 0.0 && self.window_ms > self.shift_ms) {
            return Err(Error::InvalidConfig(alloc::format!(
                "need window_ms > shift_ms > 0, got {} / {}",
                self.window_ms,
                self.shift_ms
            )));
        }
        if self.n_cepstra == 0 || self.n_cepstra > self.n_mel_filters {
            return Err(Error::InvalidConfig(alloc::format!(
                "n_cepstra {} must be in 1..={}",
                self.n_cepstra,
                self.n_mel_filters
            )));
        }
        if self.delta_window == 0 {
            return Err(Error::InvalidConfig("delta_window must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.vad_energy_percentile) {
            return Err(Error::InvalidConfig(alloc::format!(
                "vad_energy_percentile {} outside [0, 1]",
                self.vad_energy_percentile
            )));
        }
        Ok(())
    }

    /// Output dimension after deltas.
    pub fn feature_dim(&self) -> usize {
        3 * self.n_cepstra
    }
}

/// Frame length, frame shift and FFT size in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Framing {
    pub frame_len: usize,
    pub shift: usize,
    pub nfft: usize,
}

impl Framing {
    pub fn new(sample_rate: u32, cfg: &FrontEndConfig) -> Self {
        let sr = f64::from(sample_rate);
        let frame_len = round(sr * cfg.window_ms / 1000.0) as usize;
        let shift = round(sr * cfg.shift_ms / 1000.0) as usize;
        Self {
            frame_len,
            shift,
            nfft: frame_len.next_power_of_two(),
        }
    }

    /// `floor((N - frame_len) / shift) + 1`, or an error when shorter than one window.
    pub fn num_frames(&self, n_samples: usize) -> Result<usize> {
        if n_samples < self.frame_len || self.frame_len == 0 {
            return Err(Error::TooShort {
                samples: n_samples,
                needed: self.frame_len,
            });
        }
        Ok((n_samples - self.frame_len) / self.shift + 1)
    }

    pub fn frame<'a>(&self, samples: &'a [f64], t: usize) -> &'a [f64] {
        &samples[t * self.shift..t * self.shift + self.frame_len]
    }
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * cos(2.0 * PI * i as f64 / (n - 1) as f64))
        .collect()
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * log10(1.0 + f / 700.0)
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (powf(10.0, m / 2595.0) - 1.0)
}

/// Triangular filters evenly spaced on the HTK mel scale from 0 Hz to Nyquist.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Per filter: first FFT bin and the weights from that bin on.
    filters: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_filters: usize, nfft: usize, sample_rate: u32) -> Self {
        let sr = f64::from(sample_rate);
        let mel_max = hz_to_mel(sr / 2.0);
        let edges: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_filters + 1) as f64))
            .collect();
        let n_bins = nfft / 2 + 1;
        let mut filters = Vec::with_capacity(n_filters);
        for m in 0..n_filters {
            let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut start = None;
            let mut weights = Vec::new();
            for k in 0..n_bins {
                let f = k as f64 * sr / nfft as f64;
                let w = if f > lo && f <= c {
                    (f - lo) / (c - lo)
                } else if f > c && f < hi {
                    (hi - f) / (hi - c)
                } else {
                    0.0
                };
                if w > 0.0 {
                    start.get_or_insert(k);
                    weights.push(w);
                } else if start.is_some() {
                    break;
                }
            }
            filters.push((start.unwrap_or(0), weights));
        }
        Self {
            filters,
            centers_hz: edges[1..=n_filters].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Weight of filter `m` at FFT bin `k`.
    pub fn weight(&self, m: usize, k: usize) -> f64 {
        let (start, w) = &self.filters[m];
        if k < *start {
            0.0
        } else {
            w.get(k - start).copied().unwrap_or(0.0)
        }
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, (start, w)) in out.iter_mut().zip(&self.filters) {
            *o = w.iter().zip(&power[*start..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Linear (not log) mel filterbank energies, `T × n_mel_filters`.
pub fn mel_energies(wave: &Waveform, cfg: &FrontEndConfig) -> Result<Matrix> {
    cfg.validate()?;
    let framing = Framing::new(wave.sample_rate, cfg);
    let t_count = framing.num_frames(wave.samples.len())?;
    let window = hamming(framing.frame_len);
    let bank = MelFilterbank::new(cfg.n_mel_filters, framing.nfft, wave.sample_rate);
    let mut out = Matrix::zeros(t_count, cfg.n_mel_filters);
    let mut buf = vec![0.0; framing.frame_len];
    for t in 0..t_count {
        for (b, (x, w)) in buf.iter_mut().zip(framing.frame(&wave.samples, t).iter().zip(&window)) {
            *b = x * w;
        }
        let power = fft::power_spectrum(&buf, framing.nfft);
        bank.apply(&power, out.row_mut(t));
    }
    Ok(out)
}

/// Static cepstra `c1..c{n_cepstra}` (c0 excluded), `T × n_cepstra`.
pub fn extract_mfcc(wave: &Waveform, cfg: &FrontEndConfig) -> Result<FeatureMatrix> {
    let energies = mel_energies(wave, cfg)?;
    let m = cfg.n_mel_filters;
    let norm = sqrt(2.0 / m as f64);
    let basis = Matrix::from_fn(cfg.n_cepstra, m, |n, j| {
        norm * cos(PI * (n + 1) as f64 * (j as f64 + 0.5) / m as f64)
    });
    let mut out = Matrix::zeros(energies.rows(), cfg.n_cepstra);
    let mut logs = vec![0.0; m];
    for t in 0..energies.rows() {
        for (l, &e) in logs.iter_mut().zip(energies.row(t)) {
            *l = ln(e.max(ENERGY_FLOOR));
        }
        for n in 0..cfg.n_cepstra {
            out[(t, n)] = crate::math::dot(basis.row(n), &logs);
        }
    }
    Ok(FeatureMatrix::new("", out))
}

pub const RASTA_NUMERATOR: [f64; 5] = [0.2, 0.1, 0.0, -0.1, -0.2];
pub const RASTA_POLE: f64 = 0.98;

/// RASTA band-pass along time for every cepstral coefficient.
///
/// The FIR history is primed with the first frame so that a constant
/// trajectory produces zero output from the first frame on.
pub fn apply_rasta(cepstra: &FeatureMatrix) -> FeatureMatrix {
    let (t_count, dim) = (cepstra.num_frames(), cepstra.dim());
    let mut out = Matrix::zeros(t_count, dim);
    for d in 0..dim {
        let first = if t_count > 0 { cepstra.frames[(0, d)] } else { 0.0 };
        let mut hist = [first; 5];
        let mut y_prev = 0.0;
        for t in 0..t_count {
            hist.rotate_right(1);
            hist[0] = cepstra.frames[(t, d)];
            let fir: f64 = RASTA_NUMERATOR.iter().zip(&hist).map(|(b, x)| b * x).sum();
            let y = RASTA_POLE * y_prev + fir;
            out[(t, d)] = y;
            y_prev = y;
        }
    }
    cepstra.with_frames(out)
}

/// Regression deltas over `±window` frames with replicated edges.
pub fn deltas(feat: &Matrix, window: usize) -> Matrix {
    let (t_count, dim) = (feat.rows(), feat.cols());
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Matrix::zeros(t_count, dim);
    if t_count == 0 {
        return out;
    }
    let clamp = |t: isize| t.clamp(0, t_count as isize - 1) as usize;
    for t in 0..t_count {
        let row = out.row_mut(t);
        for n in 1..=window {
            let plus = feat.row(clamp(t as isize + n as isize));
            let minus = feat.row(clamp(t as isize - n as isize));
            for ((o, p), m) in row.iter_mut().zip(plus).zip(minus) {
                *o += n as f64 * (p - m);
            }
        }
        row.iter_mut().for_each(|o| *o /= denom);
    }
    out
}

/// Appends Δ and ΔΔ: `T × D` becomes `T × 3D`.
pub fn append_deltas(stat: &FeatureMatrix, window: usize) -> Result<FeatureMatrix> {
    let d1 = deltas(&stat.frames, window);
    let d2 = deltas(&d1, window);
    Ok(stat.with_frames(stat.frames.hstack(&d1)?.hstack(&d2)?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VadMask {
    pub keep: Vec<bool>,
}

impl VadMask {
    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

pub fn frame_log_energies(wave: &Waveform, cfg: &FrontEndConfig) -> Result<Vec<f64>> {
    let framing = Framing::new(wave.sample_rate, cfg);
    let t_count = framing.num_frames(wave.samples.len())?;
    Ok((0..t_count)
        .map(|t| {
            let e: f64 = framing.frame(&wave.samples, t).iter().map(|x| x * x).sum();
            ln(e.max(ENERGY_FLOOR))
        })
        .collect())
}

/// Keeps the frames at or above the `vad_energy_percentile` quantile of the
/// utterance's frame log energies. Ties at the threshold are kept, so at
/// least one frame always survives.
pub fn energy_vad(wave: &Waveform, cfg: &FrontEndConfig) -> Result<VadMask> {
    let energies = frame_log_energies(wave, cfg)?;
    Ok(VadMask {
        keep: percentile_mask(&energies, cfg.vad_energy_percentile),
    })
}

pub fn percentile_mask(energies: &[f64], percentile: f64) -> Vec<bool> {
    if energies.is_empty() {
        return Vec::new();
    }
    let mut sorted = energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((percentile * sorted.len() as f64) as usize).min(sorted.len() - 1);
    let threshold = sorted[idx];
    energies.iter().map(|&e| e >= threshold).collect()
}

/// Per-dimension zero mean and unit variance over the utterance.
pub fn apply_cmvn(feat: &FeatureMatrix) -> Result<FeatureMatrix> {
    let (t_count, dim) = (feat.num_frames(), feat.dim());
    if t_count < 2 {
        return Err(Error::InsufficientFrames {
            frames: t_count,
            needed: 2,
        });
    }
    let mut mean = vec![0.0; dim];
    for row in feat.frames.row_iter() {
        crate::math::axpy(1.0, row, &mut mean);
    }
    mean.iter_mut().for_each(|m| *m /= t_count as f64);
    let mut var = vec![0.0; dim];
    for row in feat.frames.row_iter() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let inv_std: Vec<f64> = var
        .iter()
        .map(|v| {
            let v = v / t_count as f64;
            if v < CMVN_VARIANCE_FLOOR {
                1.0
            } else {
                1.0 / sqrt(v)
            }
        })
        .collect();
    let mut out = feat.frames.clone();
    for t in 0..t_count {
        for ((o, m), s) in out.row_mut(t).iter_mut().zip(&mean).zip(&inv_std) {
            *o = (*o - m) * s;
        }
    }
    Ok(feat.with_frames(out))
}

/// Full front-end: MFCC → RASTA → Δ/ΔΔ → VAD frame selection → CMVN.
pub fn front_end(utterance_id: &str, wave: &Waveform, cfg: &FrontEndConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    let mut stat = extract_mfcc(wave, cfg)?;
    stat.utterance_id = utterance_id.into();
    if cfg.rasta_enabled {
        stat = apply_rasta(&stat);
    }
    let full = append_deltas(&stat, cfg.delta_window)?;
    let mask = energy_vad(wave, cfg)?;
    let selected = full.with_frames(full.frames.select_rows(&mask.keep));
    apply_cmvn(&selected)
}

#[cfg(test)]
mod tests;
