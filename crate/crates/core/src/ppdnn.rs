//! Pass-phrase-specific autoencoder ensembles, bottleneck features and
//! equal-weight score fusion.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::borrow::Borrow;

use crate::error::{Error, Result};
use crate::eval::ScoreSet;
use crate::matrix::FeatureMatrix;
use crate::neural::{
    hidden_activations, pca_project, splice_context, train_autoencoder, Architecture, Mlp, PcaProjection, TrainConfig,
    TrainReport,
};
use crate::rng::derive_seed_indexed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainingMode {
    /// Fine-tune a copy of one pretrained network per phrase.
    Transfer,
    /// Random initialisation per phrase.
    Scratch,
}

impl TrainingMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainingMode::Transfer => "transfer",
            TrainingMode::Scratch => "scratch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "transfer" => Some(TrainingMode::Transfer),
            "scratch" => Some(TrainingMode::Scratch),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpDnnEnsemble {
    members: Vec<(String, Mlp)>,
    mode: TrainingMode,
}

impl PpDnnEnsemble {
    pub fn new(members: Vec<(String, Mlp)>, mode: TrainingMode) -> Result<Self> {
        let first = members.first().ok_or(Error::Empty("ensemble without members"))?;
        let arch = first.1.architecture();
        if arch.input_dim != arch.output_dim {
            return Err(Error::DimMismatch {
                expected: arch.input_dim,
                found: arch.output_dim,
            });
        }
        for (i, (id, net)) in members.iter().enumerate() {
            if members[..i].iter().any(|(other, _)| other == id) {
                return Err(Error::InvalidConfig(format!("duplicate phrase id {id}")));
            }
            if net.architecture() != arch {
                return Err(Error::ShapeMismatch(format!("member {id} differs in architecture")));
            }
        }
        Ok(Self { members, mode })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mode(&self) -> TrainingMode {
        self.mode
    }

    pub fn architecture(&self) -> Architecture {
        self.members[0].1.architecture()
    }

    pub fn dim(&self) -> usize {
        self.members[0].1.input_dim()
    }

    pub fn members(&self) -> &[(String, Mlp)] {
        &self.members
    }

    pub fn phrase_ids(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|(p, _)| p.as_str())
    }

    pub fn member(&self, index: usize) -> Result<&Mlp> {
        self.members.get(index).map(|(_, n)| n).ok_or(Error::IndexOutOfRange {
            index,
            limit: self.members.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberReport {
    pub phrase_id: String,
    pub utterances: usize,
    pub frames: usize,
    pub training: TrainReport,
}

/// One autoencoder per phrase, trained only on that phrase's utterances.
/// Member `i` uses a seed derived from `cfg.seed` and `i`.
pub fn train_ensemble<F: Borrow<FeatureMatrix>>(
    per_phrase: &[(String, Vec<F>)],
    mode: TrainingMode,
    arch: &Architecture,
    cfg: &TrainConfig,
    pretrained: Option<&Mlp>,
) -> Result<(PpDnnEnsemble, Vec<MemberReport>)> {
    if per_phrase.is_empty() {
        return Err(Error::Empty("no phrases"));
    }
    let init = match mode {
        TrainingMode::Transfer => Some(pretrained.ok_or(Error::MissingPretrained)?),
        TrainingMode::Scratch => None,
    };
    let mut members = Vec::with_capacity(per_phrase.len());
    let mut reports = Vec::with_capacity(per_phrase.len());
    for (i, (phrase, data)) in per_phrase.iter().enumerate() {
        if data.is_empty() {
            return Err(Error::InvalidConfig(format!("phrase {phrase} has no utterances")));
        }
        let member_cfg = TrainConfig {
            seed: derive_seed_indexed(cfg.seed, "ppdnn-member", i as u64),
            ..cfg.clone()
        };
        let (net, training) = train_autoencoder(data, arch, &member_cfg, init)?;
        reports.push(MemberReport {
            phrase_id: phrase.clone(),
            utterances: data.len(),
            frames: data.iter().map(|f| f.borrow().num_frames()).sum(),
            training,
        });
        members.push((phrase.clone(), net));
    }
    Ok((PpDnnEnsemble::new(members, mode)?, reports))
}

/// Frame-by-frame regeneration of `feat` through member `member_index`.
pub fn transform(ensemble: &PpDnnEnsemble, member_index: usize, feat: &FeatureMatrix) -> Result<FeatureMatrix> {
    let net = ensemble.member(member_index)?;
    if feat.is_empty() {
        return Err(Error::EmptyUtterance(feat.utterance_id.clone()));
    }
    Ok(feat.with_frames(net.predict(&feat.frames)?))
}

/// Speaker-classifier tap plus PCA, applied to unspliced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct BnExtractor {
    pub net: Mlp,
    pub pca: PcaProjection,
    /// 1-based hidden layer whose activations are projected.
    pub layer: usize,
}

impl BnExtractor {
    pub fn extract(&self, feat: &FeatureMatrix) -> Result<FeatureMatrix> {
        extract_bn_features(&self.net, &self.pca, feat, self.layer)
    }
}

/// Splices `feat` to the network's input width, taps hidden layer `layer`
/// and projects with `pca`.
pub fn extract_bn_features(
    net: &Mlp,
    pca: &PcaProjection,
    feat: &FeatureMatrix,
    layer: usize,
) -> Result<FeatureMatrix> {
    if feat.is_empty() {
        return Err(Error::EmptyUtterance(feat.utterance_id.clone()));
    }
    let (width, d) = (net.input_dim(), feat.dim());
    // width = (2·context + 1)·d
    if d == 0 || width % d != 0 || (width / d) % 2 == 0 {
        return Err(Error::DimMismatch {
            expected: width,
            found: d,
        });
    }
    let context = (width / d - 1) / 2;
    let spliced = splice_context(feat, context, context);
    let hidden = hidden_activations(net, &spliced, layer)?;
    pca_project(pca, &hidden)
}

/// Per-trial arithmetic mean over systems covering the same trial list.
pub fn fuse_scores(systems: &[&ScoreSet]) -> Result<ScoreSet> {
    let first = systems.first().ok_or(Error::Empty("no systems to fuse"))?;
    for s in &systems[1..] {
        first.check_aligned(s)?;
    }
    let n = systems.len() as f64;
    let mut sums: Vec<f64> = Vec::from_iter(first.scores());
    for s in &systems[1..] {
        for (acc, v) in sums.iter_mut().zip(s.scores()) {
            *acc += v;
        }
    }
    ScoreSet::new(first.trials().cloned().zip(sums.into_iter().map(|s| s / n)).collect())
}
