//! Recipe configuration: `key = value` lines grouped under `[section]`
//! headers (TOML). Unknown sections and keys are rejected, and every value is
//! validated by the module that consumes it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tdsv_core::corpus::SynthSpec;
use tdsv_core::eval::DcfParams;
use tdsv_core::featkit::FrontEndConfig;
use tdsv_core::gmm::UbmConfig;
use tdsv_core::neural::{Architecture, Loss, TrainConfig};
use tdsv_core::ppdnn::TrainingMode;

use crate::error::{Error, Result};
use crate::formats::read_text;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecipeConfig {
    pub recipe: RecipeSection,
    pub corpus: CorpusSection,
    pub frontend: FrontEndSection,
    pub gmm: GmmSection,
    pub ivector: IVectorSection,
    pub ppdnn: PpDnnSection,
    pub bn: BnSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecipeSection {
    pub seed: u64,
    /// Subset of `gmm`, `ivector`.
    pub backends: Vec<String>,
    /// Subset of `mfcc`, `bn`.
    pub features: Vec<String>,
    /// PP-DNN training modes for MFCC systems; BN systems use the first.
    pub modes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
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
    pub frames_per_phone: [usize; 2],
    pub duration_jitter: usize,
    pub dim: usize,
    pub speaker_shift_scale: f64,
    pub session_noise_scale: f64,
    pub channel_drift_scale: f64,
    pub waveform: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontEndSection {
    pub window_ms: f64,
    pub shift_ms: f64,
    pub n_mel_filters: usize,
    pub n_cepstra: usize,
    pub delta_window: usize,
    pub rasta_enabled: bool,
    pub vad_energy_percentile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmmSection {
    pub components: usize,
    pub em_iters: usize,
    pub kmeans_iters: usize,
    pub max_init_frames: usize,
    pub map_relevance: f64,
    pub map_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IVectorSection {
    pub rank: usize,
    pub em_iters: usize,
    pub plda_em_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpDnnSection {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub validation_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BnSection {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// 1-based hidden layer that is projected.
    pub tap_layer: usize,
    /// Frames of context on each side.
    pub context: usize,
    pub output_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub validation_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for RecipeSection {
    fn default() -> Self {
        Self {
            seed: 42,
            backends: vec!["gmm".into(), "ivector".into()],
            features: vec!["mfcc".into(), "bn".into()],
            modes: vec!["transfer".into(), "scratch".into()],
        }
    }
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self::from(&SynthSpec::default())
    }
}

impl From<&SynthSpec> for CorpusSection {
    fn from(s: &SynthSpec) -> Self {
        Self {
            n_phrases: s.n_phrases,
            n_background_phrases: s.n_background_phrases,
            n_speakers: s.n_speakers,
            n_development_speakers: s.n_development_speakers,
            n_background_speakers: s.n_background_speakers,
            n_ubm_speakers: s.n_ubm_speakers,
            enroll_sessions: s.enroll_sessions,
            test_sessions: s.test_sessions,
            development_sessions: s.development_sessions,
            background_sessions: s.background_sessions,
            ubm_utterances: s.ubm_utterances,
            n_phones: s.n_phones,
            phones_per_phrase: s.phones_per_phrase,
            frames_per_phone: [s.frames_per_phone.0, s.frames_per_phone.1],
            duration_jitter: s.duration_jitter,
            dim: s.dim,
            speaker_shift_scale: s.speaker_shift_scale,
            session_noise_scale: s.session_noise_scale,
            channel_drift_scale: s.channel_drift_scale,
            waveform: s.waveform,
        }
    }
}

impl Default for FrontEndSection {
    fn default() -> Self {
        let f = FrontEndConfig::default();
        Self {
            window_ms: f.window_ms,
            shift_ms: f.shift_ms,
            n_mel_filters: f.n_mel_filters,
            n_cepstra: f.n_cepstra,
            delta_window: f.delta_window,
            rasta_enabled: f.rasta_enabled,
            vad_energy_percentile: f.vad_energy_percentile,
        }
    }
}

impl Default for GmmSection {
    fn default() -> Self {
        Self {
            components: 512,
            em_iters: 20,
            kmeans_iters: 10,
            max_init_frames: 100_000,
            map_relevance: 10.0,
            map_iters: 3,
        }
    }
}

impl Default for IVectorSection {
    fn default() -> Self {
        Self {
            rank: 400,
            em_iters: 5,
            plda_em_iters: 10,
        }
    }
}

impl Default for PpDnnSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden_width: 512,
            hidden_layers: 3,
            epochs: 30,
            pretrain_epochs: t.epochs,
            learning_rate: t.learning_rate,
            dropout: t.dropout_rate,
            batch_size: t.batch_size,
            l2_lambda: t.l2_lambda,
            validation_fraction: t.validation_fraction,
        }
    }
}

impl Default for BnSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden_width: 1024,
            hidden_layers: 6,
            tap_layer: 4,
            context: 5,
            output_dim: 57,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            dropout: t.dropout_rate,
            batch_size: t.batch_size,
            l2_lambda: 0.0,
            validation_fraction: t.validation_fraction,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        let p = DcfParams::default();
        Self {
            p_target: p.p_target,
            c_miss: p.c_miss,
            c_fa: p.c_fa,
        }
    }
}

pub const BACKENDS: [&str; 2] = ["gmm", "ivector"];
pub const FEATURES: [&str; 2] = ["mfcc", "bn"];

impl RecipeConfig {
    /// Single-core laptop scale: 64-component UBM, rank-50 total
    /// variability, narrow networks and batches sized to the per-phrase data.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.gmm.components = 64;
        c.gmm.em_iters = 10;
        c.ivector.rank = 50;
        c.ppdnn.hidden_width = 64;
        c.ppdnn.pretrain_epochs = 10;
        c.ppdnn.batch_size = 128;
        c.bn.hidden_width = 128;
        c.bn.hidden_layers = 2;
        c.bn.tap_layer = 1;
        c.bn.context = 1;
        c.bn.epochs = 10;
        c.bn.batch_size = 256;
        c
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical serialisation.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.recipe;
        for (name, values, allowed) in [
            ("backends", &r.backends, &BACKENDS[..]),
            ("features", &r.features, &FEATURES[..]),
        ] {
            if values.is_empty() {
                return Err(Error::Config(format!("recipe.{name} is empty")));
            }
            if let Some(v) = values.iter().find(|v| !allowed.contains(&v.as_str())) {
                return Err(Error::Config(format!("recipe.{name}: unknown value `{v}`")));
            }
        }
        if r.modes.is_empty() {
            return Err(Error::Config("recipe.modes is empty".into()));
        }
        self.modes()?;
        self.synth_spec().validate()?;
        self.frontend_config().validate()?;
        if self.gmm.components == 0 || self.gmm.em_iters == 0 {
            return Err(Error::Config("gmm.components and gmm.em_iters must be positive".into()));
        }
        if !(self.gmm.map_relevance >= 0.0 && self.gmm.map_relevance.is_finite()) {
            return Err(Error::Config(format!(
                "gmm.map_relevance {} must be >= 0",
                self.gmm.map_relevance
            )));
        }
        if self.ivector.rank == 0 {
            return Err(Error::Config("ivector.rank must be positive".into()));
        }
        self.ppdnn_architecture().validate()?;
        self.ppdnn_train(0).validate()?;
        self.bn_architecture(2).validate()?;
        self.bn_train(0).validate()?;
        if self.bn.tap_layer == 0 || self.bn.tap_layer > self.bn.hidden_layers {
            return Err(Error::Config(format!(
                "bn.tap_layer {} outside 1..={}",
                self.bn.tap_layer, self.bn.hidden_layers
            )));
        }
        if self.bn.output_dim == 0 || self.bn.output_dim > self.bn.hidden_width {
            return Err(Error::Config(format!(
                "bn.output_dim {} outside 1..={}",
                self.bn.output_dim, self.bn.hidden_width
            )));
        }
        let e = &self.eval;
        if !(e.p_target > 0.0 && e.p_target < 1.0 && e.c_miss > 0.0 && e.c_fa > 0.0) {
            return Err(Error::Config("eval needs 0 < p_target < 1 and positive costs".into()));
        }
        Ok(())
    }

    pub fn modes(&self) -> Result<Vec<TrainingMode>> {
        self.recipe
            .modes
            .iter()
            .map(|m| TrainingMode::parse(m).ok_or_else(|| Error::Config(format!("recipe.modes: unknown value `{m}`"))))
            .collect()
    }

    pub fn has_backend(&self, name: &str) -> bool {
        self.recipe.backends.iter().any(|b| b == name)
    }

    pub fn has_feature(&self, name: &str) -> bool {
        self.recipe.features.iter().any(|f| f == name)
    }

    pub fn synth_spec(&self) -> SynthSpec {
        let c = &self.corpus;
        SynthSpec {
            n_phrases: c.n_phrases,
            n_background_phrases: c.n_background_phrases,
            n_speakers: c.n_speakers,
            n_development_speakers: c.n_development_speakers,
            n_background_speakers: c.n_background_speakers,
            n_ubm_speakers: c.n_ubm_speakers,
            enroll_sessions: c.enroll_sessions,
            test_sessions: c.test_sessions,
            development_sessions: c.development_sessions,
            background_sessions: c.background_sessions,
            ubm_utterances: c.ubm_utterances,
            n_phones: c.n_phones,
            phones_per_phrase: c.phones_per_phrase,
            frames_per_phone: (c.frames_per_phone[0], c.frames_per_phone[1]),
            duration_jitter: c.duration_jitter,
            dim: c.dim,
            speaker_shift_scale: c.speaker_shift_scale,
            session_noise_scale: c.session_noise_scale,
            channel_drift_scale: c.channel_drift_scale,
            waveform: c.waveform,
            seed: self.recipe.seed,
        }
    }

    pub fn frontend_config(&self) -> FrontEndConfig {
        let f = &self.frontend;
        FrontEndConfig {
            window_ms: f.window_ms,
            shift_ms: f.shift_ms,
            n_mel_filters: f.n_mel_filters,
            n_cepstra: f.n_cepstra,
            delta_window: f.delta_window,
            rasta_enabled: f.rasta_enabled,
            vad_energy_percentile: f.vad_energy_percentile,
        }
    }

    pub fn ubm_config(&self, seed: u64) -> UbmConfig {
        UbmConfig {
            n_components: self.gmm.components,
            em_iters: self.gmm.em_iters,
            kmeans_iters: self.gmm.kmeans_iters,
            max_init_frames: self.gmm.max_init_frames,
            seed,
        }
    }

    pub fn ppdnn_architecture(&self) -> Architecture {
        Architecture::autoencoder(self.corpus.dim, self.ppdnn.hidden_width, self.ppdnn.hidden_layers)
    }

    fn train_config(&self, epochs: usize, seed: u64, bn: bool) -> TrainConfig {
        let (lr, dropout, batch, l2, val) = if bn {
            let b = &self.bn;
            (
                b.learning_rate,
                b.dropout,
                b.batch_size,
                b.l2_lambda,
                b.validation_fraction,
            )
        } else {
            let p = &self.ppdnn;
            (
                p.learning_rate,
                p.dropout,
                p.batch_size,
                p.l2_lambda,
                p.validation_fraction,
            )
        };
        TrainConfig {
            learning_rate: lr,
            dropout_rate: dropout,
            batch_size: batch,
            epochs,
            l2_lambda: l2,
            seed,
            loss: if bn { Loss::CrossEntropy } else { Loss::MseL2 },
            validation_fraction: val,
        }
    }

    pub fn ppdnn_train(&self, seed: u64) -> TrainConfig {
        self.train_config(self.ppdnn.epochs, seed, false)
    }

    pub fn pretrain_train(&self, seed: u64) -> TrainConfig {
        self.train_config(self.ppdnn.pretrain_epochs, seed, false)
    }

    pub fn bn_architecture(&self, classes: usize) -> Architecture {
        let input = (2 * self.bn.context + 1) * self.corpus.dim;
        Architecture::classifier(input, self.bn.hidden_width, self.bn.hidden_layers, classes)
    }

    pub fn bn_train(&self, seed: u64) -> TrainConfig {
        self.train_config(self.bn.epochs, seed, true)
    }

    pub fn dcf(&self) -> DcfParams {
        DcfParams {
            p_target: self.eval.p_target,
            c_miss: self.eval.c_miss,
            c_fa: self.eval.c_fa,
        }
    }
}
