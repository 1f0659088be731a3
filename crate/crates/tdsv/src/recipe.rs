//! The one-shot experiment: synthetic corpus, baseline systems on MFCC and
//! BN features, both PP-DNN ensembles, per-member systems and their fusion.
//!
//! Everything written under the output directory is a pure function of the
//! configuration (which carries the seed), and `run.log` lists the SHA-256
//! of every artifact so two runs can be compared file by file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};
use tdsv_core::corpus::{generate_corpus_with, Manifest, Role};
use tdsv_core::eval::{condition_breakdown, format_scores, format_trials, MetricReport, ReportTable, ScoreSet, Trial};
use tdsv_core::neural::{train_autoencoder, Mlp};
use tdsv_core::ppdnn::{fuse_scores, train_ensemble, BnExtractor, MemberReport, PpDnnEnsemble, TrainingMode};
use tdsv_core::rng::derive_seed;
use tdsv_core::FeatureMatrix;

use crate::config::RecipeConfig;
use crate::dataset::{format_ensemble, MemberEntry, ENSEMBLE, MANIFEST};
use crate::error::{Error, Result};
use crate::formats;
use crate::pipeline;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone)]
pub struct RecipeOutcome {
    /// Baselines, fused ensembles and ensembles fused with their baseline.
    pub table: ReportTable,
    /// One row per ensemble member.
    pub members: ReportTable,
    /// Per phrase, distance between the transfer and scratch members.
    pub member_distances: Vec<(String, f64)>,
    pub artifacts: Vec<Artifact>,
    pub config_digest: String,
}

impl RecipeOutcome {
    pub fn average_eer(&self, system: &str) -> Option<f64> {
        self.table.get(system).map(|r| r.average_eer)
    }
}

/// Row name of a baseline system, e.g. `gmm/mfcc baseline`.
pub fn baseline_name(backend: &str, feature: &str) -> String {
    format!("{backend}/{feature} baseline")
}

/// Row name of a fused ensemble; `with_baseline` adds the baseline system
/// as one more equally weighted member.
pub fn fused_name(backend: &str, feature: &str, mode: TrainingMode, with_baseline: bool) -> String {
    let plus = if with_baseline { "+baseline" } else { "" };
    format!("{backend}/{feature} ppdnn-{}{plus}", mode.name())
}

pub fn member_name(backend: &str, feature: &str, mode: TrainingMode, phrase: &str) -> String {
    format!("{backend}/{feature} ppdnn-{} {phrase}", mode.name())
}

struct Output {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Output {
    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        formats::write_bytes(&self.root.join(rel), bytes)?;
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }
}

struct Progress<'a> {
    start: Instant,
    sink: &'a mut dyn FnMut(&str),
}

impl Progress<'_> {
    fn note(&mut self, msg: &str) {
        let t = self.start.elapsed().as_secs_f64();
        (self.sink)(&format!("[{t:7.1}s] {msg}"));
    }
}

struct Runner<'a> {
    cfg: &'a RecipeConfig,
    manifest: Manifest,
    trials: Vec<Trial>,
    out: Output,
    progress: Progress<'a>,
}

impl Runner<'_> {
    fn report(&self, scores: &ScoreSet) -> Result<MetricReport> {
        Ok(condition_breakdown(scores, self.cfg.dcf())?)
    }

    /// Trains every enabled backend on one feature set and returns the
    /// scores of each, keyed by backend.
    fn systems(&mut self, set: &str, feats: &[FeatureMatrix]) -> Result<BTreeMap<&'static str, Vec<f64>>> {
        let cfg = self.cfg;
        let seed = cfg.recipe.seed;
        let ubm = pipeline::train_background(
            &self.manifest,
            feats,
            &cfg.ubm_config(derive_seed(seed, &format!("ubm/{set}"))),
        )?;
        self.out
            .write(&format!("models/{set}/ubm.gmm"), &formats::encode_gmm(&ubm)?)?;
        let mut scores = BTreeMap::new();
        if cfg.has_backend("gmm") {
            let models = pipeline::enroll_gmm(&ubm, &self.manifest, feats, cfg.gmm.map_relevance, cfg.gmm.map_iters)?;
            let tests = self
                .manifest
                .indices(Role::Test)
                .into_iter()
                .map(|i| (feats[i].utterance_id.clone(), &feats[i]))
                .collect();
            let s = pipeline::score_gmm(&ubm, &models, &self.trials, &tests)?;
            self.out
                .write(&format!("scores/gmm/{set}.txt"), format_scores(&s).as_bytes())?;
            scores.insert("gmm", s.scores().collect());
        }
        if cfg.has_backend("ivector") {
            let sys = pipeline::ivector_system(
                &self.manifest,
                feats,
                &self.trials,
                &ubm,
                &cfg.ivector,
                derive_seed(seed, &format!("tvm/{set}")),
            )?;
            if sys.degenerate_within {
                self.progress
                    .note(&format!("{set}: within-class covariance was smoothed"));
            }
            self.out
                .write(&format!("models/{set}/t.tvm"), &formats::encode_tvm(&sys.tvm)?)?;
            self.out
                .write(&format!("models/{set}/plda.plda"), &formats::encode_plda(&sys.plda)?)?;
            self.out.write(
                &format!("scores/ivector/{set}.txt"),
                format_scores(&sys.scores).as_bytes(),
            )?;
            scores.insert("ivector", sys.scores.scores().collect());
        }
        self.progress.note(&format!("{set}: systems done"));
        Ok(scores)
    }

    fn score_set(&self, scores: Vec<f64>) -> Result<ScoreSet> {
        Ok(ScoreSet::from_scores(&self.trials, scores)?)
    }

    fn features_for(
        &self,
        feature: &str,
        mfcc: Vec<FeatureMatrix>,
        bn: Option<&BnExtractor>,
    ) -> Result<Vec<FeatureMatrix>> {
        match (feature, bn) {
            ("bn", Some(bn)) => pipeline::bn_features(bn, &mfcc),
            ("bn", None) => Err(Error::Config("bn features requested without an extractor".into())),
            _ => Ok(mfcc),
        }
    }
}

fn ensemble_entries(ensemble: &PpDnnEnsemble, reports: &[MemberReport]) -> Vec<MemberEntry> {
    ensemble
        .members()
        .iter()
        .zip(reports)
        .map(|((phrase, _), r)| MemberEntry {
            phrase_id: phrase.clone(),
            path: format!("{phrase}.mlp"),
            mode: ensemble.mode(),
            epochs: r.training.train_loss.len().saturating_sub(1),
            utterances: r.utterances,
            frames: r.frames,
        })
        .collect()
}

/// Runs the full experiment into `out_dir`, reporting progress lines to
/// `progress`.
pub fn run_recipe(cfg: &RecipeConfig, out_dir: &Path, progress: &mut dyn FnMut(&str)) -> Result<RecipeOutcome> {
    cfg.validate()?;
    let seed = cfg.recipe.seed;
    let mut progress = Progress {
        start: Instant::now(),
        sink: progress,
    };
    let mut out = Output {
        root: out_dir.to_path_buf(),
        artifacts: Vec::new(),
    };
    out.write("config.toml", cfg.to_text().as_bytes())?;

    let mut corpus = generate_corpus_with(&cfg.synth_spec(), &cfg.frontend_config())?;
    for r in corpus.manifest.records_mut() {
        r.path = format!("features/{}.fmat", r.utterance_id);
    }
    for (r, f) in corpus.manifest.records().iter().zip(&corpus.features) {
        out.write(&r.path, &formats::encode_fmat(f)?)?;
    }
    out.write(MANIFEST, corpus.manifest.to_text().as_bytes())?;
    out.write("trials.txt", format_trials(&corpus.trials).as_bytes())?;
    progress.note(&format!(
        "corpus: {} utterances, {} trials",
        corpus.manifest.len(),
        corpus.trials.len()
    ));
    let mfcc = corpus.features;
    let mut run = Runner {
        cfg,
        manifest: corpus.manifest,
        trials: corpus.trials,
        out,
        progress,
    };

    let bn = if cfg.has_feature("bn") {
        let bn = pipeline::train_bn_extractor(
            &run.manifest,
            &mfcc,
            |classes| cfg.bn_architecture(classes),
            cfg.bn.context,
            cfg.bn.tap_layer,
            cfg.bn.output_dim,
            &cfg.bn_train(derive_seed(seed, "bn")),
        )?;
        run.out
            .write("models/networks/bn.mlp", &formats::encode_mlp(&bn.net)?)?;
        run.out
            .write("models/networks/bn.pca", &formats::encode_pca(&bn.pca)?)?;
        run.progress.note("bn extractor trained");
        Some(bn)
    } else {
        None
    };

    let features: Vec<&str> = crate::config::FEATURES
        .into_iter()
        .filter(|f| cfg.has_feature(f))
        .collect();
    let mut table = ReportTable::default();
    let mut members = ReportTable::default();
    let mut baselines: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for &feature in &features {
        let feats = run.features_for(feature, mfcc.clone(), bn.as_ref())?;
        for (backend, s) in run.systems(feature, &feats)? {
            let set = run.score_set(s.clone())?;
            table.push(baseline_name(backend, feature), run.report(&set)?);
            baselines.insert((backend, feature), s);
        }
    }

    let modes = cfg.modes()?;
    let pretrained: Option<Mlp> = if modes.contains(&TrainingMode::Transfer) {
        let data = pipeline::role_features(&run.manifest, &mfcc, Role::Pretrain);
        let (net, _) = train_autoencoder(
            &data,
            &cfg.ppdnn_architecture(),
            &cfg.pretrain_train(derive_seed(seed, "pretrain")),
            None,
        )?;
        run.out
            .write("models/networks/pretrained.mlp", &formats::encode_mlp(&net)?)?;
        run.progress.note("pretrained autoencoder trained");
        Some(net)
    } else {
        None
    };

    let per_phrase = pipeline::phrase_training_sets(&run.manifest, &mfcc);
    let mut ensembles: Vec<PpDnnEnsemble> = Vec::new();
    for &mode in &modes {
        let (ensemble, reports) = train_ensemble(
            &per_phrase,
            mode,
            &cfg.ppdnn_architecture(),
            &cfg.ppdnn_train(derive_seed(seed, &format!("ppdnn-{}", mode.name()))),
            pretrained.as_ref(),
        )?;
        let dir = format!("models/networks/ppdnn-{}", mode.name());
        for (phrase, net) in ensemble.members() {
            run.out
                .write(&format!("{dir}/{phrase}.mlp"), &formats::encode_mlp(net)?)?;
        }
        let index = format_ensemble(&ensemble_entries(&ensemble, &reports));
        run.out.write(&format!("{dir}/{ENSEMBLE}"), index.as_bytes())?;
        run.progress.note(&format!("ppdnn-{} ensemble trained", mode.name()));

        let mut member_scores: BTreeMap<(&str, &str), Vec<Vec<f64>>> = BTreeMap::new();
        for (phrase, net) in ensemble.members() {
            let regenerated = pipeline::mlp_transform(net, &mfcc)?;
            for &feature in &features {
                let feats = run.features_for(feature, regenerated.clone(), bn.as_ref())?;
                let set = format!("{feature}.{}.{phrase}", mode.name());
                for (backend, s) in run.systems(&set, &feats)? {
                    let scores = run.score_set(s.clone())?;
                    members.push(member_name(backend, feature, mode, phrase), run.report(&scores)?);
                    member_scores.entry((backend, feature)).or_default().push(s);
                }
            }
        }
        for &feature in &features {
            for backend in crate::config::BACKENDS {
                let Some(list) = member_scores.remove(&(backend, feature)) else {
                    continue;
                };
                let sets: Vec<ScoreSet> = list.into_iter().map(|s| run.score_set(s)).collect::<Result<_>>()?;
                let mut refs: Vec<&ScoreSet> = sets.iter().collect();
                let fused = fuse_scores(&refs)?;
                let name = format!("{feature}.{}", mode.name());
                run.out.write(
                    &format!("scores/{backend}/{name}.fused.txt"),
                    format_scores(&fused).as_bytes(),
                )?;
                table.push(fused_name(backend, feature, mode, false), run.report(&fused)?);
                let baseline = run.score_set(baselines[&(backend, feature)].clone())?;
                refs.push(&baseline);
                let with_baseline = fuse_scores(&refs)?;
                run.out.write(
                    &format!("scores/{backend}/{name}+baseline.fused.txt"),
                    format_scores(&with_baseline).as_bytes(),
                )?;
                table.push(fused_name(backend, feature, mode, true), run.report(&with_baseline)?);
            }
        }
        ensembles.push(ensemble);
    }

    let member_distances = match ensembles.as_slice() {
        [a, b] => a
            .members()
            .iter()
            .zip(b.members())
            .map(|((p, x), (_, y))| Ok((p.clone(), x.parameter_distance(y)?)))
            .collect::<Result<Vec<_>>>()?,
        _ => Vec::new(),
    };

    let mut outcome = RecipeOutcome {
        table,
        members,
        member_distances,
        artifacts: Vec::new(),
        config_digest: cfg.digest(),
    };
    run.out
        .write("report.txt", run_report(cfg, &outcome, &features, &modes).as_bytes())?;
    run.out.write("report.csv", outcome.table.to_csv().as_bytes())?;
    run.out.write("members.csv", outcome.members.to_csv().as_bytes())?;

    let mut log = format!("config-sha256 {}\nseed {seed}\n", outcome.config_digest);
    for a in &run.out.artifacts {
        let _ = writeln!(log, "artifact {} {}", a.sha256, a.path);
    }
    formats::write_bytes(&out_dir.join("run.log"), log.as_bytes())?;
    run.progress.note("done");
    outcome.artifacts = run.out.artifacts;
    Ok(outcome)
}

/// Result tables followed by the change of every fused system relative to
/// its baseline and the transfer/scratch comparison.
fn run_report(cfg: &RecipeConfig, outcome: &RecipeOutcome, features: &[&str], modes: &[TrainingMode]) -> String {
    let mut s = format!("config-sha256 {}\nseed {}\n\n", outcome.config_digest, cfg.recipe.seed);
    s.push_str(&outcome.table.to_text());
    s.push_str("\nchange in average EER relative to baseline (percentage points)\n");
    for backend in crate::config::BACKENDS.into_iter().filter(|b| cfg.has_backend(b)) {
        for &feature in features {
            let Some(base) = outcome.average_eer(&baseline_name(backend, feature)) else {
                continue;
            };
            for &mode in modes {
                for with_baseline in [false, true] {
                    let name = fused_name(backend, feature, mode, with_baseline);
                    if let Some(eer) = outcome.average_eer(&name) {
                        let _ = writeln!(s, "{name}: {base:.3} -> {eer:.3} ({:+.3})", eer - base);
                    }
                }
            }
            if let [a, b] = modes {
                let ea = outcome.average_eer(&fused_name(backend, feature, *a, false));
                let eb = outcome.average_eer(&fused_name(backend, feature, *b, false));
                if let (Some(ea), Some(eb)) = (ea, eb) {
                    let _ = writeln!(
                        s,
                        "{backend}/{feature} {} vs {}: |{ea:.3} - {eb:.3}| = {:.3}",
                        a.name(),
                        b.name(),
                        (ea - eb).abs()
                    );
                }
            }
        }
    }
    if !outcome.member_distances.is_empty() {
        s.push_str("\nparameter distance between transfer and scratch members\n");
        for (p, d) in &outcome.member_distances {
            let _ = writeln!(s, "{p}: {d:.6}");
        }
    }
    s.push_str("\nensemble members\n");
    s.push_str(&outcome.members.to_text());
    s
}
