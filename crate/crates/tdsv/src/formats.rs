//! Little-endian binary containers for features, audio and trained models.
//! Every `encode_*` has a matching `decode_*`; the path-level wrappers only
//! add file IO and attach the path to errors.

use std::fs;
use std::path::Path;

use tdsv_core::featkit::Waveform;
use tdsv_core::gmm::Gmm;
use tdsv_core::ivector::{IVector, TotalVariabilityModel};
use tdsv_core::neural::{Activation, Layer, Mlp, PcaProjection};
use tdsv_core::plda::PldaModel;
use tdsv_core::{FeatureMatrix, Matrix};

use crate::error::{Error, Result};

pub const FMAT_MAGIC: &[u8; 4] = b"FMAT";
pub const FMAT_VERSION: u32 = 1;
pub const GMM_MAGIC: &[u8; 4] = b"GMM1";
pub const TVM_MAGIC: &[u8; 4] = b"TVM1";
pub const IVEC_MAGIC: &[u8; 4] = b"IVEC";
pub const PLDA_MAGIC: &[u8; 4] = b"PLD1";
pub const MLP_MAGIC: &[u8; 4] = b"MLP1";
pub const PCA_MAGIC: &[u8; 4] = b"PCA1";
pub const WAV_HEADER_LEN: usize = 44;

/// Cursor over a byte buffer; every read failure names the byte offset.
pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(format!("truncated at byte {}", self.bytes.len())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        let got = self.take(4)?;
        if got != expected {
            return Err(Error::format(format!(
                "bad magic {:?} at byte {at}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn count(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::format("size overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        Ok(Matrix::from_vec(rows, cols, self.f64s(rows * cols)?)?)
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::format(format!(
                "{} trailing bytes at byte {}",
                self.remaining(),
                self.pos
            )));
        }
        Ok(())
    }
}

#[derive(Default)]
pub struct Writer {
    bytes: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn raw(&mut self, b: &[u8]) -> &mut Self {
        self.bytes.extend_from_slice(b);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.raw(&v.to_le_bytes())
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.raw(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.raw(&v.to_le_bytes())
    }

    pub fn count(&mut self, n: usize) -> Result<&mut Self> {
        let v = u32::try_from(n).map_err(|_| Error::format(format!("count {n} exceeds 32 bits")))?;
        Ok(self.u32(v))
    }

    pub fn f64s(&mut self, v: &[f64]) -> &mut Self {
        for x in v {
            self.bytes.extend_from_slice(&x.to_le_bytes());
        }
        self
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temporary file so readers never see partial output.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = Path::new(&tmp);
    fs::write(tmp, bytes).map_err(|e| Error::io(tmp, e))?;
    fs::rename(tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load<T>(path: &Path, decode: impl FnOnce(&[u8]) -> Result<T>) -> Result<T> {
    decode(&read_bytes(path)?).map_err(|e| e.at(path))
}

// ---------------------------------------------------------------- FMAT

/// `FMAT`, version, rows, cols, then row-major `f32` values.
pub fn encode_fmat(feat: &FeatureMatrix) -> Result<Vec<u8>> {
    if !feat.frames.is_finite() {
        return Err(Error::format(format!("non-finite value in {}", feat.utterance_id)));
    }
    let mut w = Writer::new();
    w.raw(FMAT_MAGIC).u32(FMAT_VERSION);
    w.count(feat.num_frames())?.count(feat.dim())?;
    for v in feat.frames.as_slice() {
        w.raw(&(*v as f32).to_le_bytes());
    }
    Ok(w.into_bytes())
}

pub fn decode_fmat(bytes: &[u8], utterance_id: &str) -> Result<FeatureMatrix> {
    let mut r = Reader::new(bytes);
    r.magic(FMAT_MAGIC)?;
    let version = r.u32()?;
    if version != FMAT_VERSION {
        return Err(Error::format(format!("unsupported FMAT version {version}")));
    }
    let (rows, cols) = (r.count()?, r.count()?);
    let payload = r.take(rows * cols * 4)?;
    r.finish()?;
    let values = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(FeatureMatrix::new(utterance_id, Matrix::from_vec(rows, cols, values)?))
}

pub fn write_fmat(path: &Path, feat: &FeatureMatrix) -> Result<()> {
    write_bytes(path, &encode_fmat(feat).map_err(|e| e.at(path))?)
}

/// The utterance id is the file stem.
pub fn read_fmat(path: &Path) -> Result<FeatureMatrix> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load(path, |b| decode_fmat(b, &id))
}

// ---------------------------------------------------------------- WAV

/// Round-half-away-from-zero PCM16 quantisation of `x ∈ [-1, 1]`.
pub fn quantize_pcm16(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

pub fn encode_wav(wave: &Waveform) -> Result<Vec<u8>> {
    if wave.sample_rate == 0 {
        return Err(Error::format("sample rate must be positive"));
    }
    if let Some(x) = wave.samples.iter().find(|x| !(x.abs() <= 1.0)) {
        return Err(Error::format(format!("sample {x} outside [-1, 1]")));
    }
    let data_len = u32::try_from(wave.samples.len() * 2).map_err(|_| Error::format("audio too long for RIFF"))?;
    let mut w = Writer::new();
    w.raw(b"RIFF").u32(36 + data_len).raw(b"WAVE");
    w.raw(b"fmt ").u32(16).u16(1).u16(1).u32(wave.sample_rate);
    w.u32(wave.sample_rate * 2).u16(2).u16(16);
    w.raw(b"data").u32(data_len);
    for &x in &wave.samples {
        w.raw(&quantize_pcm16(x).to_le_bytes());
    }
    Ok(w.into_bytes())
}

fn format_tag_name(tag: u16) -> &'static str {
    match tag {
        1 => "PCM",
        3 => "IEEE float",
        6 => "A-law",
        7 => "mu-law",
        0xFFFE => "extensible",
        _ => "unknown",
    }
}

/// Mono PCM16 only; other chunks are skipped.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != b"RIFF" {
        return Err(Error::format("not a RIFF file"));
    }
    r.u32()?;
    if r.take(4)? != b"WAVE" {
        return Err(Error::format("RIFF form is not WAVE"));
    }
    let mut rate: Option<u32> = None;
    loop {
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        match id {
            b"fmt " => {
                let body = r.take(len)?;
                let mut f = Reader::new(body);
                let tag = f.u16()?;
                let channels = f.u16()?;
                let sample_rate = f.u32()?;
                f.u32()?;
                f.u16()?;
                let bits = f.u16()?;
                if tag != 1 {
                    return Err(Error::format(format!(
                        "unsupported WAV format tag {tag} ({}); only PCM is read",
                        format_tag_name(tag)
                    )));
                }
                if channels != 1 || bits != 16 {
                    return Err(Error::format(format!(
                        "unsupported PCM layout: {channels} channel(s), {bits} bits; need mono 16-bit"
                    )));
                }
                if sample_rate == 0 {
                    return Err(Error::format("sample rate 0"));
                }
                rate = Some(sample_rate);
                if len % 2 == 1 {
                    r.take(1)?;
                }
            }
            b"data" => {
                let rate = rate.ok_or_else(|| Error::format("data chunk before fmt chunk"))?;
                let body = r.take(len)?;
                let samples = body
                    .chunks_exact(2)
                    .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])) / 32767.0)
                    .map(|x| x.max(-1.0))
                    .collect();
                return Ok(Waveform::new(samples, rate));
            }
            _ => {
                r.take(len + len % 2)?;
            }
        }
    }
}

pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    write_bytes(path, &encode_wav(wave).map_err(|e| e.at(path))?)
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    load(path, decode_wav)
}

// ---------------------------------------------------------------- GMM1

pub fn encode_gmm(g: &Gmm) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.raw(GMM_MAGIC).count(g.n_components())?.count(g.dim())?;
    w.f64s(g.weights())
        .f64s(g.means().as_slice())
        .f64s(g.variances().as_slice());
    Ok(w.into_bytes())
}

pub fn decode_gmm(bytes: &[u8]) -> Result<Gmm> {
    let mut r = Reader::new(bytes);
    r.magic(GMM_MAGIC)?;
    let (c, d) = (r.count()?, r.count()?);
    let weights = r.f64s(c)?;
    let means = r.matrix(c, d)?;
    let vars = r.matrix(c, d)?;
    r.finish()?;
    Ok(Gmm::new(weights, means, vars)?)
}

pub fn write_gmm(path: &Path, g: &Gmm) -> Result<()> {
    write_bytes(path, &encode_gmm(g)?)
}

pub fn read_gmm(path: &Path) -> Result<Gmm> {
    load(path, decode_gmm)
}

// ---------------------------------------------------------------- TVM1

pub fn encode_tvm(m: &TotalVariabilityModel) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.raw(TVM_MAGIC)
        .count(m.n_components())?
        .count(m.dim())?
        .count(m.rank())?;
    w.u64(m.ubm_hash()).f64s(m.t_matrix().as_slice());
    Ok(w.into_bytes())
}

/// The stored UBM hash must match `ubm`.
pub fn decode_tvm(bytes: &[u8], ubm: &Gmm) -> Result<TotalVariabilityModel> {
    let mut r = Reader::new(bytes);
    r.magic(TVM_MAGIC)?;
    let (c, d, rank) = (r.count()?, r.count()?, r.count()?);
    let hash = r.u64()?;
    let t = r.matrix(c * d, rank)?;
    r.finish()?;
    if hash != ubm.content_hash() {
        return Err(tdsv_core::Error::UbmMismatch {
            expected: hash,
            found: ubm.content_hash(),
        }
        .into());
    }
    Ok(TotalVariabilityModel::new(t, ubm)?)
}

pub fn write_tvm(path: &Path, m: &TotalVariabilityModel) -> Result<()> {
    write_bytes(path, &encode_tvm(m)?)
}

pub fn read_tvm(path: &Path, ubm: &Gmm) -> Result<TotalVariabilityModel> {
    load(path, |b| decode_tvm(b, ubm))
}

// ---------------------------------------------------------------- IVEC

/// One `IVEC` record per vector, concatenated.
pub fn encode_ivectors(vs: &[IVector]) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    for v in vs {
        w.raw(IVEC_MAGIC).count(v.rank())?;
        w.count(v.utterance_id.len())?.raw(v.utterance_id.as_bytes());
        w.f64s(&v.w);
    }
    Ok(w.into_bytes())
}

pub fn decode_ivectors(bytes: &[u8]) -> Result<Vec<IVector>> {
    let mut r = Reader::new(bytes);
    let mut out = Vec::new();
    while r.remaining() > 0 {
        r.magic(IVEC_MAGIC)?;
        let rank = r.count()?;
        let len = r.count()?;
        let at = r.position();
        let id = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format(format!("utterance id at byte {at} is not UTF-8")))?
            .to_string();
        out.push(IVector::new(id, r.f64s(rank)?));
    }
    Ok(out)
}

pub fn write_ivectors(path: &Path, vs: &[IVector]) -> Result<()> {
    write_bytes(path, &encode_ivectors(vs)?)
}

pub fn read_ivectors(path: &Path) -> Result<Vec<IVector>> {
    load(path, decode_ivectors)
}

// ---------------------------------------------------------------- PLD1

pub fn encode_plda(m: &PldaModel) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.raw(PLDA_MAGIC).count(m.rank())?;
    w.f64s(m.mu()).f64s(m.between().as_slice()).f64s(m.within().as_slice());
    Ok(w.into_bytes())
}

pub fn decode_plda(bytes: &[u8]) -> Result<PldaModel> {
    let mut r = Reader::new(bytes);
    r.magic(PLDA_MAGIC)?;
    let rank = r.count()?;
    let mu = r.f64s(rank)?;
    let between = r.matrix(rank, rank)?;
    let within = r.matrix(rank, rank)?;
    r.finish()?;
    Ok(PldaModel::new(mu, between, within)?)
}

pub fn write_plda(path: &Path, m: &PldaModel) -> Result<()> {
    write_bytes(path, &encode_plda(m)?)
}

pub fn read_plda(path: &Path) -> Result<PldaModel> {
    load(path, decode_plda)
}

// ---------------------------------------------------------------- MLP1

/// Per layer: rows (inputs), cols (outputs), activation code, weights, bias.
pub fn encode_mlp(net: &Mlp) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.raw(MLP_MAGIC).count(net.layers().len())?;
    for l in net.layers() {
        w.count(l.input_dim())?.count(l.output_dim())?.u32(l.activation.code());
        w.f64s(l.weights.as_slice()).f64s(&l.bias);
    }
    Ok(w.into_bytes())
}

pub fn decode_mlp(bytes: &[u8]) -> Result<Mlp> {
    let mut r = Reader::new(bytes);
    r.magic(MLP_MAGIC)?;
    let n = r.count()?;
    let mut layers = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let (rows, cols) = (r.count()?, r.count()?);
        let act = Activation::from_code(r.u32()?)?;
        let weights = r.matrix(rows, cols)?;
        let bias = r.f64s(cols)?;
        layers.push(Layer::new(weights, bias, act)?);
    }
    r.finish()?;
    Ok(Mlp::new(layers)?)
}

pub fn write_mlp(path: &Path, net: &Mlp) -> Result<()> {
    write_bytes(path, &encode_mlp(net)?)
}

pub fn read_mlp(path: &Path) -> Result<Mlp> {
    load(path, decode_mlp)
}

// ---------------------------------------------------------------- PCA1

pub fn encode_pca(p: &PcaProjection) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.raw(PCA_MAGIC).count(p.input_dim())?.count(p.output_dim())?;
    w.f64s(&p.mean).f64s(p.components.as_slice()).f64s(&p.variances);
    Ok(w.into_bytes())
}

pub fn decode_pca(bytes: &[u8]) -> Result<PcaProjection> {
    let mut r = Reader::new(bytes);
    r.magic(PCA_MAGIC)?;
    let (d, k) = (r.count()?, r.count()?);
    let mean = r.f64s(d)?;
    let components = r.matrix(k, d)?;
    let variances = r.f64s(k)?;
    r.finish()?;
    let mut p = PcaProjection::new(mean, components)?;
    p.variances = variances;
    Ok(p)
}

pub fn write_pca(path: &Path, p: &PcaProjection) -> Result<()> {
    write_bytes(path, &encode_pca(p)?)
}

pub fn read_pca(path: &Path) -> Result<PcaProjection> {
    load(path, decode_pca)
}
