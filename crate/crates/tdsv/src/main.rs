use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdsv::config::RecipeConfig;
use tdsv::dataset::{self, MemberEntry};
use tdsv::error::{Error, Result};
use tdsv::{formats, pipeline, recipe};
use tdsv_core::corpus::{CorpusModel, Manifest, Role};
use tdsv_core::eval::{
    condition_breakdown, format_scores, format_trials, parse_scores, parse_trials, ReportTable, ScoreSet, Trial,
};
use tdsv_core::featkit::front_end;
use tdsv_core::ivector::{extract_ivector, train_t, IVector};
use tdsv_core::neural::train_autoencoder;
use tdsv_core::plda::train_plda;
use tdsv_core::ppdnn::{fuse_scores, train_ensemble, BnExtractor, TrainingMode};
use tdsv_core::rng::derive_seed;

/// Text-dependent speaker verification with pass-phrase specific
/// autoencoder ensembles.
#[derive(Parser)]
#[command(name = "tdsv", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Recipe configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `recipe.seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ManifestArg {
    /// Dataset manifest; record paths are relative to its directory.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus: features (or WAV files in waveform
    /// mode), manifest and trial list.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the front-end over the WAV files of a manifest.
    Featext {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the UBM on one role of a dataset.
    TrainUbm {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long, default_value = "ubm")]
        role: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// MAP-adapt one model per enrollment group; writes `<model>.gmm`.
    MapAdapt {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        ubm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the total-variability matrix.
    TrainT {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        ubm: PathBuf,
        #[arg(long, default_value = "pretrain")]
        role: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Raw i-vectors of every non-UBM utterance.
    ExtractIvec {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        ubm: PathBuf,
        #[arg(long)]
        tvm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PLDA on centred, length-normalised training i-vectors.
    TrainPlda {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        ivectors: PathBuf,
        #[arg(long, default_value = "pretrain")]
        role: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the autoencoder used to initialise transfer-mode members.
    PretrainAe {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long, default_value = "pretrain")]
        role: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one autoencoder per evaluation phrase.
    TrainPpdnn {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        mode: String,
        /// Required in transfer mode.
        #[arg(long)]
        pretrained: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate a dataset through one ensemble member.
    Transform {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        phrase: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bottleneck features; trains the extractor when none is given.
    ExtractBn {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long, requires = "pca")]
        network: Option<PathBuf>,
        #[arg(long, requires = "network")]
        pca: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trial list against MAP-adapted models.
    ScoreGmm {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        ubm: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trial list with PLDA.
    ScoreIvec {
        #[command(flatten)]
        input: ManifestArg,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        ivectors: PathBuf,
        #[arg(long)]
        plda: PathBuf,
        #[arg(long, default_value = "pretrain")]
        role: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-trial mean of several score files.
    Fuse {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// EER and minDCF per non-target condition.
    Eval {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// The complete experiment, baseline and PP-DNN systems alike.
    RunRecipe {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}

fn load_config(common: &Common) -> Result<RecipeConfig> {
    let mut cfg = match &common.config {
        Some(p) => RecipeConfig::load(p)?,
        None => RecipeConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.recipe.seed = seed;
    }
    Ok(cfg)
}

fn role(name: &str) -> Result<Role> {
    Role::parse(name).ok_or_else(|| Error::Config(format!("unknown role `{name}`")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    formats::write_bytes(path, text.as_bytes())
}

fn read_trials(path: &Path) -> Result<Vec<Trial>> {
    parse_trials(&formats::read_text(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn read_scores(path: &Path, trials: &[Trial]) -> Result<ScoreSet> {
    let raw = parse_scores(&formats::read_text(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    ScoreSet::attach(trials, raw).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn ivector_map(vs: Vec<IVector>) -> BTreeMap<String, IVector> {
    vs.into_iter().map(|v| (v.utterance_id.clone(), v)).collect()
}

fn training_ivectors(manifest: &Manifest, all: &BTreeMap<String, IVector>, role: Role) -> Result<Vec<IVector>> {
    manifest
        .indices(role)
        .into_iter()
        .map(|i| {
            let id = &manifest.records()[i].utterance_id;
            all.get(id)
                .cloned()
                .ok_or_else(|| Error::Config(format!("no i-vector for `{id}`")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let Cli { common, command } = cli;
    let cfg = load_config(&common)?;
    let seed = cfg.recipe.seed;
    match command {
        Command::SynthCorpus { out } => {
            let spec = cfg.synth_spec();
            let model = CorpusModel::new(&spec)?;
            let mut manifest = model.manifest();
            if spec.waveform {
                for (i, r) in manifest.records_mut().iter_mut().enumerate() {
                    let wave = model.synthesize_waveform(i, r)?;
                    r.path = format!("wav/{}.wav", r.utterance_id);
                    formats::write_wav(&out.join(&r.path), &wave)?;
                }
                write_text(&out.join(dataset::MANIFEST), &manifest.to_text())?;
            } else {
                let feats = manifest
                    .records()
                    .iter()
                    .enumerate()
                    .map(|(i, r)| model.synthesize_features(i, r))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                dataset::write_features(&out, &manifest, &feats)?;
            }
            write_text(&out.join("trials.txt"), &format_trials(&manifest.trials()))?;
        }
        Command::Featext { input, out } => {
            let manifest = dataset::read_manifest(&input.manifest)?;
            let fe = cfg.frontend_config();
            let feats = manifest
                .records()
                .iter()
                .map(|r| {
                    let wave = formats::read_wav(&dataset::resolve(&input.manifest, &r.path)?)?;
                    Ok(front_end(&r.utterance_id, &wave, &fe)?)
                })
                .collect::<Result<Vec<_>>>()?;
            dataset::write_features(&out, &manifest, &feats)?;
        }
        Command::TrainUbm { input, role: r, out } => {
            let (manifest, feats) = dataset::load_features(&input.manifest)?;
            let data: Vec<_> = pipeline::role_features(&manifest, &feats, role(&r)?)
                .into_iter()
                .cloned()
                .collect();
            let (ubm, _) = tdsv_core::gmm::train_ubm(&data, &cfg.ubm_config(derive_seed(seed, "ubm")))?;
            formats::write_gmm(&out, &ubm)?;
        }
        Command::MapAdapt { input, ubm, out } => {
            let (manifest, feats) = dataset::load_features(&input.manifest)?;
            let ubm = formats::read_gmm(&ubm)?;
            let models = pipeline::enroll_gmm(&ubm, &manifest, &feats, cfg.gmm.map_relevance, cfg.gmm.map_iters)?;
            for (id, model) in &models {
                formats::write_gmm(&out.join(format!("{id}.gmm")), model)?;
            }
        }
        Command::ScoreGmm {
            input,
            trials,
            ubm,
            models,
            out,
        } => {
            let (manifest, feats) = dataset::load_features(&input.manifest)?;
            let trials = read_trials(&trials)?;
            let ubm = formats::read_gmm(&ubm)?;
            let mut adapted = BTreeMap::new();
            for t in &trials {
                if !adapted.contains_key(&t.model_id) {
                    let m = formats::read_gmm(&models.join(format!("{}.gmm", t.model_id)))?;
                    adapted.insert(t.model_id.clone(), m);
                }
            }
            let tests = manifest
                .indices(Role::Test)
                .into_iter()
                .map(|i| (feats[i].utterance_id.clone(), &feats[i]))
                .collect();
            let scores = pipeline::score_gmm(&ubm, &adapted, &trials, &tests)?;
            write_text(&out, &format_scores(&scores))?;
        }
        Command::TrainT {
            input,
            ubm,
            role: r,
            out,
        } => {
            let (manifest, feats) = dataset::load_features(&input.manifest)?;
            let ubm = formats::read_gmm(&ubm)?;
            let stats = pipeline::collect_stats(&ubm, &pipeline::role_features(&manifest, &feats, role(&r)?))?;
            let (tvm, _) = train_t(
                &stats,
                &ubm,
                cfg.ivector.rank,
                cfg.ivector.em_iters,
                derive_seed(seed, "tvm"),
            )?;
            formats::write_tvm(&out, &tvm)?;
        }
        Command::ExtractIvec { input, ubm, tvm, out } => {
            let (manifest, feats) = dataset::load_features(&input.manifest)?;
            let ubm = formats::read_gmm(&ubm)?;
            let tvm = formats::read_tvm(&tvm, &ubm)?;
            let vs = manifest
                .records()
                .iter()
                .zip(&feats)
                .filter(|(r, _)| r.role != Role::Ubm)
                .map(|(_, f)| Ok(extract_ivector(&tvm, &tdsv_core::gmm::accumulate_stats(&ubm, f)?)?))
                .collect::<Result<Vec<_>>>()?;
            formats::write_ivectors(&out, &vs)?;
        }
        Command::TrainPlda {
            input,
            ivectors,
            role: r,
            out,
        } => {
            let manifest = dataset::read_manifest(&input.manifest)?;
            let all = ivector_map(formats::read_ivectors(&ivectors)?);
            let role = role(&r)?;
            let train = training_ivectors(&manifest, &all, role)?;
            let mean = pipeline::ivector_mean(&train)?;
            let normalized: Vec<IVector> = train
                .iter()
                .map(|v| pipeline::normalize_ivector(v, &mean))
                .collect::<Result<_>>()?;
            let labelled = pipeline::plda_training_set(&manifest, &normalized, role);
            let (plda, _) = train_plda(&labelled, cfg.ivector.plda_em_iters)?;
            formats::write_plda(&out, &plda)?;
        }
        Command::ScoreIvec {
            input,
            trials,
            ivectors,
            plda,
            role: r,
            out,
        } => {
            let manifest = dataset::read_manifest(&input.manifest)?;
            let trials = read_trials(&trials)?;
            let all = ivector_map(formats::read_ivectors(&ivectors)?);
            let plda = formats::read_plda(&plda)?;
            let mean = pipeline::ivector_mean(&training_ivectors(&manifest, &all, role(&r)?)?)?;
            let models = pipeline::enroll_ivectors(&manifest, &all, &mean)?;
            let tests = training_ivectors(&manifest, &all, Role::Test)?
                .iter()
                .map(|v| Ok((v.utterance_id.clone(), pipeline::normalize_ivector(v, &mean)?)))
                .collect::<Result<_>>()?;
            let scores = pipeline::score_ivectors(&plda, &models, &tests, &trials)?;
            write_text(&out, &format_scores(&scores))?;
        }
        Command::PretrainAe { input, role: r, out } => {
            let (manifest, feats) = dataset::load_features(&input.manifest)?;
            let data = pipeline::role_features(&manifest, &feats, role(&r)?);
            let (net, _) = train_autoencoder(
                &data,
                &cfg.ppdnn_architecture(),
                &cfg.pretrain_train(derive_seed(seed, "pretrain")),
                None,
            )?;
            formats::write_mlp(&out, &net)?;
        }
        Command::TrainPpdnn {
            input,
            mode,
            pretrained,
            out,
        } => {
            let mode = TrainingMode::parse(&mode).ok_or_else(|| Error::Config(format!("unknown mode `{mode}`")))?;
            let pretrained = pretrained.as_deref().map(formats::read_mlp).transpose()?;
            let (manifest, feats) = dataset::load_features(&input.manifest)?;
            let per_phrase = pipeline::phrase_training_sets(&manifest, &feats);
            let (ensemble, reports) = train_ensemble(
                &per_phrase,
                mode,
                &cfg.ppdnn_architecture(),
                &cfg.ppdnn_train(derive_seed(seed, &format!("ppdnn-{}", mode.name()))),
                pretrained.as_ref(),
            )?;
            let mut entries = Vec::new();
            for ((phrase, net), r) in ensemble.members().iter().zip(&reports) {
                let path = format!("{phrase}.mlp");
                formats::write_mlp(&out.join(&path), net)?;
                entries.push(MemberEntry {
                    phrase_id: phrase.clone(),
                    path,
                    mode,
                    epochs: r.training.train_loss.len().saturating_sub(1),
                    utterances: r.utterances,
                    frames: r.frames,
                });
            }
            write_text(&out.join(dataset::ENSEMBLE), &dataset::format_ensemble(&entries))?;
        }
        Command::Transform {
            input,
            ensemble,
            phrase,
            out,
        } => {
            let (ensemble, _) = dataset::read_ensemble(&ensemble)?;
            let index = ensemble
                .phrase_ids()
                .position(|p| p == phrase)
                .ok_or_else(|| Error::Config(format!("ensemble has no member for phrase `{phrase}`")))?;
            let (manifest, feats) = dataset::load_features(&input.manifest)?;
            let regenerated = pipeline::mlp_transform(ensemble.member(index)?, &feats)?;
            dataset::write_features(&out, &manifest, &regenerated)?;
        }
        Command::ExtractBn {
            input,
            network,
            pca,
            out,
        } => {
            let (manifest, feats) = dataset::load_features(&input.manifest)?;
            let bn = match (network, pca) {
                (Some(n), Some(p)) => BnExtractor {
                    net: formats::read_mlp(&n)?,
                    pca: formats::read_pca(&p)?,
                    layer: cfg.bn.tap_layer,
                },
                _ => {
                    let bn = pipeline::train_bn_extractor(
                        &manifest,
                        &feats,
                        |classes| cfg.bn_architecture(classes),
                        cfg.bn.context,
                        cfg.bn.tap_layer,
                        cfg.bn.output_dim,
                        &cfg.bn_train(derive_seed(seed, "bn")),
                    )?;
                    formats::write_mlp(&out.join("bn.mlp"), &bn.net)?;
                    formats::write_pca(&out.join("bn.pca"), &bn.pca)?;
                    bn
                }
            };
            dataset::write_features(&out, &manifest, &pipeline::bn_features(&bn, &feats)?)?;
        }
        Command::Fuse { trials, scores, out } => {
            let trials = read_trials(&trials)?;
            let sets = scores
                .iter()
                .map(|p| read_scores(p, &trials))
                .collect::<Result<Vec<_>>>()?;
            let fused = fuse_scores(&sets.iter().collect::<Vec<_>>())?;
            write_text(&out, &format_scores(&fused))?;
        }
        Command::Eval { trials, scores, csv } => {
            let trials = read_trials(&trials)?;
            let set = read_scores(&scores, &trials)?;
            let report = condition_breakdown(&set, cfg.dcf())?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let mut table = ReportTable::default();
            table.push(scores.display().to_string(), report);
            print!("{}", table.to_text());
            if let Some(csv) = csv {
                write_text(&csv, &table.to_csv())?;
            }
        }
        Command::RunRecipe { out } => {
            let outcome = recipe::run_recipe(&cfg, &out, &mut |m| eprintln!("{m}"))?;
            print!("{}", outcome.table.to_text());
            eprintln!("report written to {}", out.join("report.txt").display());
        }
    }
    Ok(())
}
