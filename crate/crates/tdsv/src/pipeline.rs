//! Stage functions shared by the individual subcommands and the one-shot
//! recipe. Inputs are always aligned with a [`Manifest`]: `feats[i]` belongs
//! to `manifest.records()[i]`.

use std::collections::BTreeMap;

use tdsv_core::corpus::{Manifest, Role};
use tdsv_core::eval::{ScoreSet, Trial};
use tdsv_core::gmm::{accumulate_stats, avg_log_likelihood, map_adapt, train_ubm, BaumWelchStats, Gmm, UbmConfig};
use tdsv_core::ivector::{
    average_enrollment, extract_ivector, length_normalize, train_t, IVector, TotalVariabilityModel,
};
use tdsv_core::neural::{hidden_activations, pca_fit, splice_context, train_classifier_spliced, TrainConfig};
use tdsv_core::neural::{Architecture, Mlp};
use tdsv_core::plda::{score_plda, train_plda, PldaModel};
use tdsv_core::ppdnn::BnExtractor;
use tdsv_core::{FeatureMatrix, Matrix};

use crate::config::IVectorSection;
use crate::error::{Error, Result};

pub fn role_features<'a>(manifest: &Manifest, feats: &'a [FeatureMatrix], role: Role) -> Vec<&'a FeatureMatrix> {
    manifest.indices(role).into_iter().map(|i| &feats[i]).collect()
}

/// Rounds every value to `f32`, the precision features are stored at.
pub fn storage_precision(feat: FeatureMatrix) -> FeatureMatrix {
    let mut feat = feat;
    for v in feat.frames.as_mut_slice() {
        *v = f64::from(*v as f32);
    }
    feat
}

/// UBM on the free-content (`ubm`) role.
pub fn train_background(manifest: &Manifest, feats: &[FeatureMatrix], cfg: &UbmConfig) -> Result<Gmm> {
    let data: Vec<FeatureMatrix> = role_features(manifest, feats, Role::Ubm).into_iter().cloned().collect();
    Ok(train_ubm(&data, cfg)?.0)
}

/// One MAP-adapted model per enrollment group, its sessions pooled.
pub fn enroll_gmm(
    ubm: &Gmm,
    manifest: &Manifest,
    feats: &[FeatureMatrix],
    relevance: f64,
    iters: usize,
) -> Result<BTreeMap<String, Gmm>> {
    manifest
        .enrollment_models()
        .into_iter()
        .map(|(id, utts)| {
            let frames = Matrix::vstack(utts.iter().map(|&i| &feats[i].frames), ubm.dim())?;
            let model = map_adapt(ubm, &FeatureMatrix::new(id.clone(), frames), relevance, iters)?;
            Ok((id, model))
        })
        .collect()
}

fn lookup<'a, T>(map: &'a BTreeMap<String, T>, key: &str, what: &str) -> Result<&'a T> {
    map.get(key)
        .ok_or_else(|| Error::Config(format!("trial refers to unknown {what} `{key}`")))
}

fn test_index(manifest: &Manifest, feats: &[FeatureMatrix]) -> BTreeMap<String, usize> {
    manifest
        .indices(Role::Test)
        .into_iter()
        .map(|i| (feats[i].utterance_id.clone(), i))
        .collect()
}

/// Average frame log-likelihood ratio per trial; the UBM term is computed
/// once per test utterance.
pub fn score_gmm(
    ubm: &Gmm,
    models: &BTreeMap<String, Gmm>,
    trials: &[Trial],
    tests: &BTreeMap<String, &FeatureMatrix>,
) -> Result<ScoreSet> {
    let mut ubm_ll: BTreeMap<&str, f64> = BTreeMap::new();
    for (id, f) in tests {
        ubm_ll.insert(id, avg_log_likelihood(ubm, f)?);
    }
    let scores = trials
        .iter()
        .map(|t| {
            let model = lookup(models, &t.model_id, "model")?;
            let test = lookup(tests, &t.test_utt, "test utterance")?;
            Ok(avg_log_likelihood(model, test)? - ubm_ll[t.test_utt.as_str()])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ScoreSet::from_scores(trials, scores)?)
}

pub struct GmmSystem {
    pub ubm: Gmm,
    pub scores: ScoreSet,
}

pub fn gmm_system(
    manifest: &Manifest,
    feats: &[FeatureMatrix],
    trials: &[Trial],
    ubm_cfg: &UbmConfig,
    relevance: f64,
    map_iters: usize,
) -> Result<GmmSystem> {
    let ubm = train_background(manifest, feats, ubm_cfg)?;
    let models = enroll_gmm(&ubm, manifest, feats, relevance, map_iters)?;
    let tests = test_index(manifest, feats)
        .into_iter()
        .map(|(id, i)| (id, &feats[i]))
        .collect();
    let scores = score_gmm(&ubm, &models, trials, &tests)?;
    Ok(GmmSystem { ubm, scores })
}

/// Mean of the training i-vectors, removed before length normalisation.
pub fn ivector_mean(vs: &[IVector]) -> Result<Vec<f64>> {
    let first = vs.first().ok_or(tdsv_core::Error::Empty("no i-vectors"))?;
    let mut m = vec![0.0; first.rank()];
    for v in vs {
        if v.rank() != m.len() {
            return Err(tdsv_core::Error::DimMismatch {
                expected: m.len(),
                found: v.rank(),
            }
            .into());
        }
        m.iter_mut().zip(&v.w).for_each(|(a, b)| *a += b);
    }
    m.iter_mut().for_each(|a| *a /= vs.len() as f64);
    Ok(m)
}

/// Centres by `mean` and scales to unit length.
pub fn normalize_ivector(v: &IVector, mean: &[f64]) -> Result<IVector> {
    let centred = IVector::new(
        v.utterance_id.clone(),
        v.w.iter().zip(mean).map(|(a, b)| a - b).collect(),
    );
    Ok(length_normalize(&centred)?)
}

pub fn collect_stats(ubm: &Gmm, feats: &[&FeatureMatrix]) -> Result<Vec<BaumWelchStats>> {
    feats.iter().map(|f| Ok(accumulate_stats(ubm, f)?)).collect()
}

/// PLDA classes are (speaker, phrase) pairs.
pub fn plda_training_set(manifest: &Manifest, ivectors: &[IVector], role: Role) -> Vec<(IVector, (String, String))> {
    manifest
        .indices(role)
        .into_iter()
        .zip(ivectors)
        .map(|(i, v)| {
            let r = &manifest.records()[i];
            (v.clone(), (r.speaker_id.clone(), r.phrase_id.clone()))
        })
        .collect()
}

/// Averaged enrollment i-vector per model, then centred and length-normalised.
pub fn enroll_ivectors(
    manifest: &Manifest,
    raw: &BTreeMap<String, IVector>,
    mean: &[f64],
) -> Result<BTreeMap<String, IVector>> {
    manifest
        .enrollment_models()
        .into_iter()
        .map(|(id, utts)| {
            let sessions: Vec<IVector> = utts
                .iter()
                .map(|&i| lookup(raw, &manifest.records()[i].utterance_id, "enrollment i-vector").cloned())
                .collect::<Result<_>>()?;
            let avg = average_enrollment(&sessions, &id)?;
            Ok((id, normalize_ivector(&avg, mean)?))
        })
        .collect()
}

pub fn score_ivectors(
    plda: &PldaModel,
    models: &BTreeMap<String, IVector>,
    tests: &BTreeMap<String, IVector>,
    trials: &[Trial],
) -> Result<ScoreSet> {
    let scores = trials
        .iter()
        .map(|t| {
            let e = lookup(models, &t.model_id, "model")?;
            let x = lookup(tests, &t.test_utt, "test i-vector")?;
            Ok(score_plda(plda, e, x)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ScoreSet::from_scores(trials, scores)?)
}

pub struct IVectorSystem {
    pub tvm: TotalVariabilityModel,
    pub plda: PldaModel,
    pub mean: Vec<f64>,
    pub degenerate_within: bool,
    pub scores: ScoreSet,
}

/// T and PLDA are trained on the `pretrain` role; enrollment and test
/// utterances are only projected.
pub fn ivector_system(
    manifest: &Manifest,
    feats: &[FeatureMatrix],
    trials: &[Trial],
    ubm: &Gmm,
    cfg: &IVectorSection,
    seed: u64,
) -> Result<IVectorSystem> {
    let train_stats = collect_stats(ubm, &role_features(manifest, feats, Role::Pretrain))?;
    let (tvm, _) = train_t(&train_stats, ubm, cfg.rank, cfg.em_iters, seed)?;
    let train_iv: Vec<IVector> = train_stats
        .iter()
        .map(|s| extract_ivector(&tvm, s))
        .collect::<std::result::Result<_, _>>()?;
    drop(train_stats);
    let mean = ivector_mean(&train_iv)?;
    let normalized: Vec<IVector> = train_iv
        .iter()
        .map(|v| normalize_ivector(v, &mean))
        .collect::<Result<_>>()?;
    let (plda, report) = train_plda(
        &plda_training_set(manifest, &normalized, Role::Pretrain),
        cfg.plda_em_iters,
    )?;
    let mut raw = BTreeMap::new();
    for role in [Role::Enroll, Role::Test] {
        for f in role_features(manifest, feats, role) {
            let iv = extract_ivector(&tvm, &accumulate_stats(ubm, f)?)?;
            raw.insert(f.utterance_id.clone(), iv);
        }
    }
    let models = enroll_ivectors(manifest, &raw, &mean)?;
    let tests: BTreeMap<String, IVector> = manifest
        .indices(Role::Test)
        .into_iter()
        .map(|i| {
            let id = &feats[i].utterance_id;
            Ok((id.clone(), normalize_ivector(&raw[id], &mean)?))
        })
        .collect::<Result<_>>()?;
    let scores = score_ivectors(&plda, &models, &tests, trials)?;
    Ok(IVectorSystem {
        tvm,
        plda,
        mean,
        degenerate_within: report.degenerate_within,
        scores,
    })
}

/// Speaker classifier on the `pretrain` role plus a PCA fitted on the tapped
/// activations of the `ubm` role.
pub fn train_bn_extractor(
    manifest: &Manifest,
    feats: &[FeatureMatrix],
    arch_for: impl Fn(usize) -> Architecture,
    context: usize,
    tap_layer: usize,
    output_dim: usize,
    cfg: &TrainConfig,
) -> Result<BnExtractor> {
    let mut speakers: BTreeMap<&str, usize> = BTreeMap::new();
    for i in manifest.indices(Role::Pretrain) {
        let n = speakers.len();
        speakers.entry(manifest.records()[i].speaker_id.as_str()).or_insert(n);
    }
    let labelled: Vec<(FeatureMatrix, usize)> = manifest
        .indices(Role::Pretrain)
        .into_iter()
        .map(|i| (feats[i].clone(), speakers[manifest.records()[i].speaker_id.as_str()]))
        .collect();
    let (net, _) = train_classifier_spliced(&labelled, context, &arch_for(speakers.len()), cfg)?;
    let tapped: Vec<FeatureMatrix> = role_features(manifest, feats, Role::Ubm)
        .into_iter()
        .map(|f| hidden_activations(&net, &splice_context(f, context, context), tap_layer))
        .collect::<std::result::Result<_, _>>()?;
    let pca = pca_fit(&tapped, output_dim)?;
    Ok(BnExtractor {
        net,
        pca,
        layer: tap_layer,
    })
}

pub fn bn_features(bn: &BnExtractor, feats: &[FeatureMatrix]) -> Result<Vec<FeatureMatrix>> {
    feats.iter().map(|f| Ok(storage_precision(bn.extract(f)?))).collect()
}

pub fn mlp_transform(net: &Mlp, feats: &[FeatureMatrix]) -> Result<Vec<FeatureMatrix>> {
    feats
        .iter()
        .map(|f| Ok(storage_precision(f.with_frames(net.predict(&f.frames)?))))
        .collect()
}

/// Enrollment plus development utterances of each evaluation phrase, in
/// order of first appearance among enrollment records.
pub fn phrase_training_sets<'a>(
    manifest: &Manifest,
    feats: &'a [FeatureMatrix],
) -> Vec<(String, Vec<&'a FeatureMatrix>)> {
    let mut order: Vec<String> = Vec::new();
    for i in manifest.indices(Role::Enroll) {
        let p = &manifest.records()[i].phrase_id;
        if !order.contains(p) {
            order.push(p.clone());
        }
    }
    order
        .into_iter()
        .map(|p| {
            let utts = manifest
                .records()
                .iter()
                .enumerate()
                .filter(|(_, r)| r.phrase_id == p && matches!(r.role, Role::Enroll | Role::Development))
                .map(|(i, _)| &feats[i])
                .collect();
            (p, utts)
        })
        .collect()
}
