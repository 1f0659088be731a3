//! A dataset directory is a `manifest.txt` whose record paths are relative
//! to the manifest's own directory, plus the files they name.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use tdsv_core::corpus::Manifest;
use tdsv_core::neural::Mlp;
use tdsv_core::ppdnn::{PpDnnEnsemble, TrainingMode};
use tdsv_core::FeatureMatrix;

use crate::error::{Error, Result};
use crate::formats;

pub const MANIFEST: &str = "manifest.txt";
pub const ENSEMBLE: &str = "ensemble.txt";

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Manifest::parse(&formats::read_text(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Path of a record's file; relative paths resolve against the manifest.
pub fn resolve(manifest_path: &Path, record_path: &str) -> Result<PathBuf> {
    if record_path.is_empty() {
        return Err(Error::Format {
            path: manifest_path.to_path_buf(),
            message: "record has no file path".into(),
        });
    }
    Ok(manifest_path.parent().unwrap_or(Path::new("")).join(record_path))
}

/// Manifest and features aligned with its records.
pub fn load_features(manifest_path: &Path) -> Result<(Manifest, Vec<FeatureMatrix>)> {
    let manifest = read_manifest(manifest_path)?;
    let feats = manifest
        .records()
        .iter()
        .map(|r| {
            let path = resolve(manifest_path, &r.path)?;
            formats::decode_fmat(&formats::read_bytes(&path)?, &r.utterance_id).map_err(|e| e.at(&path))
        })
        .collect::<Result<_>>()?;
    Ok((manifest, feats))
}

/// Writes `features/<utterance>.fmat` for every record and a manifest
/// pointing at them.
pub fn write_features(dir: &Path, manifest: &Manifest, feats: &[FeatureMatrix]) -> Result<PathBuf> {
    let mut manifest = manifest.clone();
    for (r, f) in manifest.records_mut().iter_mut().zip(feats) {
        r.path = format!("features/{}.fmat", r.utterance_id);
        formats::write_fmat(&dir.join(&r.path), f)?;
    }
    let path = dir.join(MANIFEST);
    formats::write_bytes(&path, manifest.to_text().as_bytes())?;
    Ok(path)
}

/// Per-member training summary recorded next to an ensemble.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberEntry {
    pub phrase_id: String,
    pub path: String,
    pub mode: TrainingMode,
    pub epochs: usize,
    pub utterances: usize,
    pub frames: usize,
}

pub fn format_ensemble(entries: &[MemberEntry]) -> String {
    let mut s = String::from("# phrase path mode epochs utterances frames\n");
    for e in entries {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            e.phrase_id,
            e.path,
            e.mode.name(),
            e.epochs,
            e.utterances,
            e.frames
        );
    }
    s
}

pub fn parse_ensemble(text: &str) -> Result<Vec<MemberEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::format(format!("line {}: {message}", i + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [phrase, path, mode, epochs, utts, frames] = fields[..] else {
            return Err(bad(format!("expected 6 fields, found {}", fields.len())));
        };
        let count = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("bad count `{v}`")));
        out.push(MemberEntry {
            phrase_id: phrase.into(),
            path: path.into(),
            mode: TrainingMode::parse(mode).ok_or_else(|| bad(format!("unknown mode `{mode}`")))?,
            epochs: count(epochs)?,
            utterances: count(utts)?,
            frames: count(frames)?,
        });
    }
    Ok(out)
}

/// Member lists and networks of an ensemble directory.
pub fn read_ensemble(dir: &Path) -> Result<(PpDnnEnsemble, Vec<MemberEntry>)> {
    let index = dir.join(ENSEMBLE);
    let entries = parse_ensemble(&formats::read_text(&index)?).map_err(|e| e.at(&index))?;
    let mode = entries
        .first()
        .map(|e| e.mode)
        .ok_or_else(|| Error::format("ensemble lists no members").at(&index))?;
    if entries.iter().any(|e| e.mode != mode) {
        return Err(Error::format("members disagree on the training mode").at(&index));
    }
    let members: Vec<(String, Mlp)> = entries
        .iter()
        .map(|e| Ok((e.phrase_id.clone(), formats::read_mlp(&dir.join(&e.path))?)))
        .collect::<Result<_>>()?;
    Ok((PpDnnEnsemble::new(members, mode)?, entries))
}
