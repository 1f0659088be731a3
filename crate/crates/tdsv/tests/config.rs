use std::path::Path;

use tdsv::config::RecipeConfig;
use tdsv::error::Error;

fn desk_file() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.cfg")
}

fn config_message(text: &str) -> String {
    match RecipeConfig::parse(text) {
        Err(Error::Config(m)) => m,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn shipped_desk_config_matches_the_preset() {
    assert_eq!(RecipeConfig::load(&desk_file()).unwrap(), RecipeConfig::desk());
}

#[test]
fn defaults_are_full_scale() {
    let c = RecipeConfig::default();
    assert_eq!(c.gmm.components, 512);
    assert_eq!((c.gmm.map_relevance, c.gmm.map_iters), (10.0, 3));
    assert_eq!(c.ivector.rank, 400);
    assert_eq!((c.ppdnn.hidden_layers, c.ppdnn.hidden_width), (3, 512));
    assert_eq!((c.ppdnn.epochs, c.ppdnn.batch_size), (30, 1024));
    assert_eq!((c.bn.hidden_layers, c.bn.hidden_width, c.bn.output_dim), (6, 1024, 57));
    assert_eq!((c.eval.c_miss, c.eval.c_fa, c.eval.p_target), (10.0, 1.0, 0.01));
    assert_eq!(c.corpus.n_phrases, 10);
}

#[test]
fn empty_text_gives_defaults() {
    assert_eq!(RecipeConfig::parse("").unwrap(), RecipeConfig::default());
}

#[test]
fn serialisation_round_trips() {
    let c = RecipeConfig::desk();
    assert_eq!(RecipeConfig::parse(&c.to_text()).unwrap(), c);
}

#[test]
fn unknown_keys_and_sections_are_rejected() {
    let m = config_message("[gmm]\ncomponents = 8\nrelevence = 3\n");
    assert!(m.contains("relevence"), "{m}");
    let m = config_message("[gmmm]\ncomponents = 8\n");
    assert!(m.contains("gmmm"), "{m}");
}

#[test]
fn values_are_type_checked() {
    config_message("[gmm]\ncomponents = \"many\"\n");
    config_message("[gmm]\ncomponents = -1\n");
}

#[test]
fn values_are_validated_by_their_module() {
    let cases = [
        "[gmm]\ncomponents = 0\n",
        "[gmm]\nmap_relevance = -1.0\n",
        "[ivector]\nrank = 0\n",
        "[ppdnn]\ndropout = 1.0\n",
        "[ppdnn]\nbatch_size = 0\n",
        "[bn]\ntap_layer = 7\n",
        "[bn]\noutput_dim = 2000\n",
        "[corpus]\nn_speakers = 0\n",
        "[corpus]\nsession_noise_scale = -0.5\n",
        "[corpus]\nframes_per_phone = [6, 2]\n",
        "[frontend]\nvad_energy_percentile = 1.5\n",
        "[eval]\np_target = 0.0\n",
        "[recipe]\nbackends = [\"svm\"]\n",
        "[recipe]\nfeatures = []\n",
        "[recipe]\nmodes = [\"finetune\"]\n",
    ];
    for text in cases {
        assert!(RecipeConfig::parse(text).is_err(), "accepted {text:?}");
    }
}

#[test]
fn digest_tracks_content() {
    let a = RecipeConfig::desk();
    let mut b = a.clone();
    assert_eq!(a.digest(), b.digest());
    assert_eq!(a.digest().len(), 64);
    b.recipe.seed += 1;
    assert_ne!(a.digest(), b.digest());
}

#[test]
fn load_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "[recipe]\nsede = 1\n").unwrap();
    let e = RecipeConfig::load(&path).unwrap_err();
    assert_eq!(e.kind(), "config");
    assert!(e.to_string().contains("bad.cfg"), "{e}");
    assert_eq!(
        RecipeConfig::load(&dir.path().join("none.cfg")).unwrap_err().kind(),
        "io"
    );
}

#[test]
fn builders_carry_the_configured_values() {
    let c = RecipeConfig::desk();
    let spec = c.synth_spec();
    assert_eq!(spec.seed, c.recipe.seed);
    assert_eq!(spec.n_speakers, c.corpus.n_speakers);
    let ubm = c.ubm_config(7);
    assert_eq!((ubm.n_components, ubm.seed), (64, 7));
    let arch = c.ppdnn_architecture();
    assert_eq!(arch.dims(), vec![57, 64, 64, 64, 57]);
    let bn = c.bn_architecture(60);
    assert_eq!(bn.input_dim, (2 * c.bn.context + 1) * 57);
    assert_eq!(bn.output_dim, 60);
    assert_eq!(c.ppdnn_train(3).epochs, c.ppdnn.epochs);
    assert_eq!(c.pretrain_train(3).epochs, c.ppdnn.pretrain_epochs);
}
