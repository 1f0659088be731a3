//! Synthetic multi-phrase corpus: speakers realise fixed phone sequences in a
//! 57-dimensional feature space (or as harmonic-stack audio), perturbed by
//! session offsets, frame noise and a slow channel drift.
//!
//! Roles mirror a text-dependent evaluation: `ubm` speakers read free
//! content, `pretrain` speakers read background phrases, `development` and
//! evaluation speakers (`enroll`, `test`) read the evaluation phrases.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::eval::{Trial, TrialCounts, TrialLabel};
use crate::featkit::{front_end, FrontEndConfig, Waveform};
use crate::math::{cos, exp, sin};
use crate::matrix::{FeatureMatrix, Matrix};
use crate::rng::{derive_seed, derive_seed_indexed, normal, rng_from, SeededRng};

/// Phrase id carried by free-content (`ubm`) utterances.
pub const FREE_CONTENT: &str = "free";
pub const WAVEFORM_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_phrases: usize,
    pub n_background_phrases: usize,
    pub n_speakers: usize,
    pub n_development_speakers: usize,
    pub n_background_speakers: usize,
    pub n_ubm_speakers: usize,
    pub enroll_sessions: usize,
    pub test_sessions: usize,
    pub development_sessions: usize,
    pub background_sessions: usize,
    pub ubm_utterances: usize,
    pub n_phones: usize,
    pub phones_per_phrase: usize,
    /// Inclusive range of base phone durations in frames.
    pub frames_per_phone: (usize, usize),
    /// Per-utterance duration perturbation, uniform in `±duration_jitter` frames.
    pub duration_jitter: usize,
    pub dim: usize,
    pub speaker_shift_scale: f64,
    pub session_noise_scale: f64,
    pub channel_drift_scale: f64,
    /// Synthesize audio and run the front-end instead of sampling features.
    pub waveform: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_phrases: 10,
            n_background_phrases: 10,
            n_speakers: 30,
            n_development_speakers: 9,
            n_background_speakers: 60,
            n_ubm_speakers: 30,
            enroll_sessions: 3,
            test_sessions: 1,
            development_sessions: 3,
            background_sessions: 2,
            ubm_utterances: 4,
            n_phones: 32,
            phones_per_phrase: 8,
            frames_per_phone: (3, 7),
            duration_jitter: 1,
            dim: 57,
            speaker_shift_scale: 0.5,
            session_noise_scale: 1.0,
            channel_drift_scale: 0.3,
            waveform: false,
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_phrases", self.n_phrases),
            ("n_background_phrases", self.n_background_phrases),
            ("n_speakers", self.n_speakers),
            ("n_development_speakers", self.n_development_speakers),
            ("n_background_speakers", self.n_background_speakers),
            ("n_ubm_speakers", self.n_ubm_speakers),
            ("enroll_sessions", self.enroll_sessions),
            ("test_sessions", self.test_sessions),
            ("development_sessions", self.development_sessions),
            ("background_sessions", self.background_sessions),
            ("ubm_utterances", self.ubm_utterances),
            ("n_phones", self.n_phones),
            ("phones_per_phrase", self.phones_per_phrase),
            ("dim", self.dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        let (lo, hi) = self.frames_per_phone;
        if lo == 0 || hi < lo {
            return Err(Error::InvalidConfig(format!(
                "frames_per_phone range {lo}..={hi} is empty or zero"
            )));
        }
        for (name, v) in [
            ("speaker_shift_scale", self.speaker_shift_scale),
            ("session_noise_scale", self.session_noise_scale),
            ("channel_drift_scale", self.channel_drift_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a finite value >= 0, got {v}"
                )));
            }
        }
        if self.n_phones < 2 {
            return Err(Error::InvalidConfig("need at least 2 phones".into()));
        }
        if self.waveform && self.dim != FrontEndConfig::default().feature_dim() {
            return Err(Error::InvalidConfig(format!(
                "waveform mode yields {}-dimensional features, spec asks for {}",
                FrontEndConfig::default().feature_dim(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Trial-type cardinalities of the full model × test cross.
    pub fn expected_trial_counts(&self) -> TrialCounts {
        let (s, p, t) = (self.n_speakers, self.n_phrases, self.test_sessions);
        TrialCounts {
            genuine: s * p * t,
            target_wrong: s * p * (p - 1) * t,
            impostor_correct: s * p * (s - 1) * t,
            impostor_wrong: s * p * (s - 1) * (p - 1) * t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Ubm,
    Pretrain,
    Development,
    Enroll,
    Test,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::Ubm, Role::Pretrain, Role::Development, Role::Enroll, Role::Test];

    pub fn name(self) -> &'static str {
        match self {
            Role::Ubm => "ubm",
            Role::Pretrain => "pretrain",
            Role::Development => "development",
            Role::Enroll => "enroll",
            Role::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Role::ALL.into_iter().find(|r| r.name() == s)
    }

    fn is_evaluation(self) -> bool {
        matches!(self, Role::Enroll | Role::Test)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub phrase_id: String,
    pub session: usize,
    pub role: Role,
    /// Empty until the utterance is written to disk.
    pub path: String,
}

pub fn model_id(speaker_id: &str, phrase_id: &str) -> String {
    format!("{speaker_id}_{phrase_id}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    records: Vec<UtteranceRecord>,
}

impl Manifest {
    /// Rejects duplicate utterance ids and speakers shared between the
    /// evaluation roles and the training roles.
    pub fn new(records: Vec<UtteranceRecord>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for r in &records {
            if !ids.insert(r.utterance_id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate utterance id {}",
                    r.utterance_id
                )));
            }
            for field in [&r.utterance_id, &r.speaker_id, &r.phrase_id, &r.path] {
                if field.chars().any(char::is_whitespace) {
                    return Err(Error::InvalidConfig(format!("whitespace in manifest field `{field}`")));
                }
            }
        }
        let eval: BTreeSet<&str> = records
            .iter()
            .filter(|r| r.role.is_evaluation())
            .map(|r| r.speaker_id.as_str())
            .collect();
        if let Some(r) = records
            .iter()
            .find(|r| !r.role.is_evaluation() && eval.contains(r.speaker_id.as_str()))
        {
            return Err(Error::InvalidConfig(format!(
                "speaker {} appears in both {} and evaluation roles",
                r.speaker_id,
                r.role.name()
            )));
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [UtteranceRecord] {
        &mut self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Indices of the records carrying `role`, in manifest order.
    pub fn indices(&self, role: Role) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].role == role)
            .collect()
    }

    pub fn find(&self, utterance_id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.utterance_id == utterance_id)
    }

    /// Enrollment groups keyed by model id, in order of first appearance.
    pub fn enrollment_models(&self) -> Vec<(String, Vec<usize>)> {
        let mut order: Vec<(String, Vec<usize>)> = Vec::new();
        let mut pos: BTreeMap<String, usize> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate().filter(|(_, r)| r.role == Role::Enroll) {
            let id = model_id(&r.speaker_id, &r.phrase_id);
            match pos.get(&id) {
                Some(&k) => order[k].1.push(i),
                None => {
                    pos.insert(id.clone(), order.len());
                    order.push((id, vec![i]));
                }
            }
        }
        order
    }

    /// Checks that every enrollment model has exactly `sessions` utterances.
    pub fn check_enrollment(&self, sessions: usize) -> Result<()> {
        for (id, utts) in self.enrollment_models() {
            if utts.len() != sessions {
                return Err(Error::InvalidConfig(format!(
                    "model {id} has {} enrollment sessions, expected {sessions}",
                    utts.len()
                )));
            }
        }
        Ok(())
    }

    /// Full cross of enrollment models and test utterances, labelled by
    /// speaker and phrase agreement.
    pub fn trials(&self) -> Vec<Trial> {
        let models = self.enrollment_models();
        let tests: Vec<&UtteranceRecord> = self.records.iter().filter(|r| r.role == Role::Test).collect();
        let mut out = Vec::with_capacity(models.len() * tests.len());
        for (id, utts) in &models {
            let owner = &self.records[utts[0]];
            for t in &tests {
                let label = match (owner.speaker_id == t.speaker_id, owner.phrase_id == t.phrase_id) {
                    (true, true) => TrialLabel::Genuine,
                    (true, false) => TrialLabel::TargetWrong,
                    (false, true) => TrialLabel::ImpostorCorrect,
                    (false, false) => TrialLabel::ImpostorWrong,
                };
                out.push(Trial::new(id.clone(), t.utterance_id.clone(), label));
            }
        }
        out
    }

    /// `utterance speaker phrase session role path` per line; `-` marks an
    /// empty path.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# utterance speaker phrase session role path\n");
        for r in &self.records {
            let path = if r.path.is_empty() { "-" } else { r.path.as_str() };
            let _ = writeln!(
                s,
                "{} {} {} {} {} {}",
                r.utterance_id,
                r.speaker_id,
                r.phrase_id,
                r.session,
                r.role.name(),
                path
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [utt, spk, phrase, session, role, path] = fields[..] else {
                return Err(err(format!("expected 6 fields, found {}", fields.len())));
            };
            let session = session
                .parse()
                .map_err(|_| err(format!("bad session number `{session}`")))?;
            let role = Role::parse(role).ok_or_else(|| err(format!("unknown role `{role}`")))?;
            records.push(UtteranceRecord {
                utterance_id: utt.into(),
                speaker_id: spk.into(),
                phrase_id: phrase.into(),
                session,
                role,
                path: if path == "-" { String::new() } else { path.into() },
            });
        }
        Self::new(records)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: Manifest,
    /// Aligned with `manifest.records()`.
    pub features: Vec<FeatureMatrix>,
    pub trials: Vec<Trial>,
}

impl Corpus {
    pub fn features_of(&self, role: Role) -> Vec<&FeatureMatrix> {
        self.manifest
            .indices(role)
            .into_iter()
            .map(|i| &self.features[i])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Evaluation,
    Development,
    Background,
    Ubm,
}

impl Group {
    fn prefix(self) -> char {
        match self {
            Group::Evaluation => 'e',
            Group::Development => 'd',
            Group::Background => 'b',
            Group::Ubm => 'u',
        }
    }
}

#[derive(Debug, Clone)]
struct Phrase {
    id: String,
    phones: Vec<usize>,
    durations: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Speaker {
    id: String,
    /// Realisation offset per phone, `n_phones × dim`.
    offsets: Matrix,
    /// Fundamental frequency and vocal-tract scaling in waveform mode.
    f0: f64,
    tract: f64,
}

/// Latent generative structure shared by all utterances of a spec.
#[derive(Debug, Clone)]
pub struct CorpusModel {
    spec: SynthSpec,
    centroids: Matrix,
    /// Three formant frequencies per phone (waveform mode).
    formants: Vec<[f64; 3]>,
    phrases: Vec<Phrase>,
    speakers: Vec<Speaker>,
}

impl CorpusModel {
    pub fn new(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from(derive_seed(spec.seed, "phones"));
        let centroids = Matrix::from_fn(spec.n_phones, spec.dim, |_, _| normal(&mut rng));
        let formants = (0..spec.n_phones)
            .map(|_| {
                [
                    rng.random_range(300.0..900.0),
                    rng.random_range(900.0..2300.0),
                    rng.random_range(2300.0..3400.0),
                ]
            })
            .collect();
        let mut phrases = Vec::new();
        for (tag, prefix, n) in [
            ("phrase", 'p', spec.n_phrases),
            ("background-phrase", 'q', spec.n_background_phrases),
        ] {
            for i in 0..n {
                let mut rng = rng_from(derive_seed_indexed(spec.seed, tag, i as u64));
                let phones = phone_sequence(&mut rng, spec.n_phones, spec.phones_per_phrase);
                let durations = (0..spec.phones_per_phrase)
                    .map(|_| rng.random_range(spec.frames_per_phone.0..=spec.frames_per_phone.1))
                    .collect();
                phrases.push(Phrase {
                    id: format!("{prefix}{i:02}"),
                    phones,
                    durations,
                });
            }
        }
        let mut speakers = Vec::new();
        for (group, n) in [
            (Group::Evaluation, spec.n_speakers),
            (Group::Development, spec.n_development_speakers),
            (Group::Background, spec.n_background_speakers),
            (Group::Ubm, spec.n_ubm_speakers),
        ] {
            for i in 0..n {
                let mut tag = String::from("speaker-");
                tag.push(group.prefix());
                let mut rng = rng_from(derive_seed_indexed(spec.seed, &tag, i as u64));
                let s = spec.speaker_shift_scale;
                // variance s² split between a global and a phone-specific part
                let global: Vec<f64> = (0..spec.dim).map(|_| 0.6 * s * normal(&mut rng)).collect();
                let offsets = Matrix::from_fn(spec.n_phones, spec.dim, |_, j| global[j] + 0.8 * s * normal(&mut rng));
                let f0 = 140.0 * exp(0.25 * s * normal(&mut rng));
                let tract = exp(0.08 * s * normal(&mut rng));
                speakers.push(Speaker {
                    id: format!("{}{i:03}", group.prefix()),
                    offsets,
                    f0,
                    tract,
                });
            }
        }
        Ok(Self {
            spec: spec.clone(),
            centroids,
            formants,
            phrases,
            speakers,
        })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn phrase_ids(&self) -> impl Iterator<Item = &str> {
        self.phrases[..self.spec.n_phrases].iter().map(|p| p.id.as_str())
    }

    fn speaker_range(&self, group: Group) -> core::ops::Range<usize> {
        let s = &self.spec;
        let bounds = [
            s.n_speakers,
            s.n_development_speakers,
            s.n_background_speakers,
            s.n_ubm_speakers,
        ];
        let k = match group {
            Group::Evaluation => 0,
            Group::Development => 1,
            Group::Background => 2,
            Group::Ubm => 3,
        };
        let start: usize = bounds[..k].iter().sum();
        start..start + bounds[k]
    }

    /// Records in deterministic order: ubm, pretrain, development, enroll, test.
    pub fn manifest(&self) -> Manifest {
        let s = &self.spec;
        let eval_phrases = 0..s.n_phrases;
        let background_phrases = s.n_phrases..s.n_phrases + s.n_background_phrases;
        let mut records = Vec::new();
        let mut push = |spk: usize, phrase: Option<usize>, session: usize, role: Role| {
            let speaker_id = self.speakers[spk].id.clone();
            let phrase_id = phrase.map_or(String::from(FREE_CONTENT), |p| self.phrases[p].id.clone());
            records.push(UtteranceRecord {
                utterance_id: format!("{speaker_id}_{phrase_id}_{}{session}", role_tag(role)),
                speaker_id,
                phrase_id,
                session,
                role,
                path: String::new(),
            });
        };
        for spk in self.speaker_range(Group::Ubm) {
            for session in 0..s.ubm_utterances {
                push(spk, None, session, Role::Ubm);
            }
        }
        for spk in self.speaker_range(Group::Background) {
            for p in background_phrases.clone() {
                for session in 0..s.background_sessions {
                    push(spk, Some(p), session, Role::Pretrain);
                }
            }
        }
        for spk in self.speaker_range(Group::Development) {
            for p in eval_phrases.clone() {
                for session in 0..s.development_sessions {
                    push(spk, Some(p), session, Role::Development);
                }
            }
        }
        for spk in self.speaker_range(Group::Evaluation) {
            for p in eval_phrases.clone() {
                for session in 0..s.enroll_sessions {
                    push(spk, Some(p), session, Role::Enroll);
                }
            }
        }
        for spk in self.speaker_range(Group::Evaluation) {
            for p in eval_phrases.clone() {
                for session in 0..s.test_sessions {
                    push(spk, Some(p), s.enroll_sessions + session, Role::Test);
                }
            }
        }
        Manifest { records }
    }

    fn speaker_index(&self, id: &str) -> Result<usize> {
        self.speakers
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown speaker {id}")))
    }

    /// Phone sequence and per-phone durations of one utterance.
    fn segments(&self, record: &UtteranceRecord, rng: &mut SeededRng) -> Result<(Vec<usize>, Vec<usize>)> {
        let s = &self.spec;
        let (phones, base) = if record.phrase_id == FREE_CONTENT {
            let phones = phone_sequence(rng, s.n_phones, s.phones_per_phrase);
            let base = (0..s.phones_per_phrase)
                .map(|_| rng.random_range(s.frames_per_phone.0..=s.frames_per_phone.1))
                .collect();
            (phones, base)
        } else {
            let p = self
                .phrases
                .iter()
                .find(|p| p.id == record.phrase_id)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown phrase {}", record.phrase_id)))?;
            (p.phones.clone(), p.durations.clone())
        };
        let j = s.duration_jitter as i64;
        let durations = base
            .iter()
            .map(|&d| {
                let delta = if j > 0 { rng.random_range(-j..=j) } else { 0 };
                (d as i64 + delta).max(1) as usize
            })
            .collect();
        Ok((phones, durations))
    }

    /// Feature-space realisation of the record at manifest position `index`,
    /// rounded to `f32` precision.
    pub fn synthesize_features(&self, index: usize, record: &UtteranceRecord) -> Result<FeatureMatrix> {
        let s = &self.spec;
        let spk = &self.speakers[self.speaker_index(&record.speaker_id)?];
        let mut rng = rng_from(derive_seed_indexed(s.seed, "utterance", index as u64));
        let (phones, durations) = self.segments(record, &mut rng)?;
        let d = s.dim;
        let session: Vec<f64> = (0..d).map(|_| 0.5 * s.session_noise_scale * normal(&mut rng)).collect();
        let direction: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let total: usize = durations.iter().sum();
        let period = (total as f64) * rng.random_range(2.0..4.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        let mut frames = Matrix::zeros(total, d);
        let mut t = 0;
        for (&ph, &dur) in phones.iter().zip(&durations) {
            for _ in 0..dur {
                let drift = s.channel_drift_scale * sin(2.0 * PI * t as f64 / period + phase);
                let row = frames.row_mut(t);
                for j in 0..d {
                    let v = self.centroids[(ph, j)]
                        + spk.offsets[(ph, j)]
                        + session[j]
                        + drift * direction[j]
                        + s.session_noise_scale * normal(&mut rng);
                    row[j] = f64::from(v as f32);
                }
                t += 1;
            }
        }
        Ok(FeatureMatrix::new(record.utterance_id.clone(), frames))
    }

    /// Harmonic-stack audio for the record at manifest position `index`:
    /// each phone is a sum of harmonics of the speaker's f0 shaped by three
    /// formant resonances, with 10 ms per frame and low-level noise padding.
    pub fn synthesize_waveform(&self, index: usize, record: &UtteranceRecord) -> Result<Waveform> {
        let s = &self.spec;
        let spk = &self.speakers[self.speaker_index(&record.speaker_id)?];
        let mut rng = rng_from(derive_seed_indexed(s.seed, "utterance", index as u64));
        let (phones, durations) = self.segments(record, &mut rng)?;
        let hop = (WAVEFORM_RATE / 100) as usize;
        let pad = 10 * hop;
        let gain = exp(0.3 * s.session_noise_scale * normal(&mut rng)).min(1.5);
        let tilt = 0.2 * s.channel_drift_scale * normal(&mut rng);
        let f0 = spk.f0 * exp(0.03 * s.session_noise_scale * normal(&mut rng));
        let total: usize = durations.iter().sum::<usize>() * hop + 2 * pad;
        let mut samples = vec![0.0; total];
        let nyquist = f64::from(WAVEFORM_RATE) / 2.0;
        let mut start = pad;
        for (&ph, &dur) in phones.iter().zip(&durations) {
            let formants = self.formants[ph].map(|f| f * spk.tract);
            let n = dur * hop;
            let mut h = 1;
            while (h as f64) * f0 < nyquist - 200.0 {
                let f = h as f64 * f0;
                let env: f64 = formants
                    .iter()
                    .map(|&fc| {
                        let bw = 80.0 + 0.08 * fc;
                        exp(-0.5 * ((f - fc) / bw) * ((f - fc) / bw))
                    })
                    .sum::<f64>()
                    * exp(-tilt * f / 1000.0);
                if env > 1e-6 {
                    let w = 2.0 * PI * f / f64::from(WAVEFORM_RATE);
                    for k in 0..n {
                        // raised-cosine edges avoid clicks at phone boundaries
                        let edge = ((k.min(n - 1 - k)) as f64 / hop as f64).min(1.0);
                        let ramp = 0.5 - 0.5 * cos(PI * edge);
                        samples[start + k] += env * ramp * sin(w * (start + k) as f64);
                    }
                }
                h += 1;
            }
            start += n;
        }
        let peak = samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let scale = if peak > 0.0 { 0.5 * gain / peak } else { 0.0 };
        let noise = 1e-3 * (0.1 + s.session_noise_scale);
        for v in &mut samples {
            *v = (*v * scale + noise * normal(&mut rng)).clamp(-1.0, 1.0);
        }
        Ok(Waveform::new(samples, WAVEFORM_RATE))
    }
}

fn role_tag(role: Role) -> &'static str {
    match role {
        Role::Ubm => "u",
        Role::Pretrain => "r",
        Role::Development => "d",
        Role::Enroll => "e",
        Role::Test => "t",
    }
}

/// Uniform phones with no immediate repetition.
fn phone_sequence(rng: &mut SeededRng, n_phones: usize, len: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(len);
    while out.len() < len {
        let p = rng.random_range(0..n_phones);
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

/// Manifest, per-utterance features and the trial list of `spec`. Each
/// utterance draws from its own derived stream, so generation order is
/// irrelevant.
pub fn generate_corpus(spec: &SynthSpec) -> Result<Corpus> {
    generate_corpus_with(spec, &FrontEndConfig::default())
}

/// As [`generate_corpus`], with `fe` as the front-end of waveform mode.
pub fn generate_corpus_with(spec: &SynthSpec, fe: &FrontEndConfig) -> Result<Corpus> {
    let model = CorpusModel::new(spec)?;
    let manifest = model.manifest();
    let features = manifest
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if spec.waveform {
                front_end(&r.utterance_id, &model.synthesize_waveform(i, r)?, fe)
            } else {
                model.synthesize_features(i, r)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let trials = manifest.trials();
    Ok(Corpus {
        manifest,
        features,
        trials,
    })
}
