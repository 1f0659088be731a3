//! Trial lists, score sets and detection metrics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrialLabel {
    /// Target speaker, correct phrase.
    Genuine,
    TargetWrong,
    ImpostorCorrect,
    ImpostorWrong,
}

impl TrialLabel {
    pub const NON_TARGET: [TrialLabel; 3] = [
        TrialLabel::TargetWrong,
        TrialLabel::ImpostorCorrect,
        TrialLabel::ImpostorWrong,
    ];

    pub fn token(self) -> &'static str {
        match self {
            TrialLabel::Genuine => "tc",
            TrialLabel::TargetWrong => "tw",
            TrialLabel::ImpostorCorrect => "ic",
            TrialLabel::ImpostorWrong => "iw",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "tc" => Some(TrialLabel::Genuine),
            "tw" => Some(TrialLabel::TargetWrong),
            "ic" => Some(TrialLabel::ImpostorCorrect),
            "iw" => Some(TrialLabel::ImpostorWrong),
            _ => None,
        }
    }

    /// Column heading used in reports.
    pub fn heading(self) -> &'static str {
        match self {
            TrialLabel::Genuine => "Genuine",
            TrialLabel::TargetWrong => "Target-wrong",
            TrialLabel::ImpostorCorrect => "Impostor-correct",
            TrialLabel::ImpostorWrong => "Impostor-wrong",
        }
    }
}

impl fmt::Display for TrialLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trial {
    pub model_id: String,
    pub test_utt: String,
    pub label: TrialLabel,
}

impl Trial {
    pub fn new(model_id: impl Into<String>, test_utt: impl Into<String>, label: TrialLabel) -> Self {
        Self {
            model_id: model_id.into(),
            test_utt: test_utt.into(),
            label,
        }
    }

    fn key(&self) -> String {
        format!("{} {}", self.model_id, self.test_utt)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialCounts {
    pub genuine: usize,
    pub target_wrong: usize,
    pub impostor_correct: usize,
    pub impostor_wrong: usize,
}

impl TrialCounts {
    pub fn of(trials: &[Trial]) -> Self {
        let mut c = Self::default();
        for t in trials {
            *c.get_mut(t.label) += 1;
        }
        c
    }

    pub fn get(&self, label: TrialLabel) -> usize {
        match label {
            TrialLabel::Genuine => self.genuine,
            TrialLabel::TargetWrong => self.target_wrong,
            TrialLabel::ImpostorCorrect => self.impostor_correct,
            TrialLabel::ImpostorWrong => self.impostor_wrong,
        }
    }

    fn get_mut(&mut self, label: TrialLabel) -> &mut usize {
        match label {
            TrialLabel::Genuine => &mut self.genuine,
            TrialLabel::TargetWrong => &mut self.target_wrong,
            TrialLabel::ImpostorCorrect => &mut self.impostor_correct,
            TrialLabel::ImpostorWrong => &mut self.impostor_wrong,
        }
    }

    pub fn total(&self) -> usize {
        self.genuine + self.target_wrong + self.impostor_correct + self.impostor_wrong
    }
}

/// Parses `model_id test_utt label` lines; blank lines and `#` comments are skipped.
pub fn parse_trials(text: &str) -> Result<Vec<Trial>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [model, test, label] = fields[..] else {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        };
        let label = TrialLabel::from_token(label).ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("unknown trial label `{label}`"),
        })?;
        out.push(Trial::new(model, test, label));
    }
    Ok(out)
}

pub fn format_trials(trials: &[Trial]) -> String {
    let mut s = String::new();
    for t in trials {
        let _ = writeln!(s, "{} {} {}", t.model_id, t.test_utt, t.label);
    }
    s
}

/// One finite score per trial, in trial-list order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    entries: Vec<(Trial, f64)>,
}

impl ScoreSet {
    pub fn new(entries: Vec<(Trial, f64)>) -> Result<Self> {
        if let Some((t, _)) = entries.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::NonFiniteScore(t.key()));
        }
        Ok(Self { entries })
    }

    pub fn from_scores(trials: &[Trial], scores: Vec<f64>) -> Result<Self> {
        if trials.len() != scores.len() {
            return Err(Error::DimMismatch {
                expected: trials.len(),
                found: scores.len(),
            });
        }
        Self::new(trials.iter().cloned().zip(scores).collect())
    }

    /// Attaches labels from `trials` to raw `(model, test, score)` rows, which
    /// must follow the trial list exactly.
    pub fn attach(trials: &[Trial], raw: Vec<(String, String, f64)>) -> Result<Self> {
        for (i, (t, (m, u, _))) in trials.iter().zip(&raw).enumerate() {
            if t.model_id != *m || t.test_utt != *u {
                return Err(Error::TrialMismatch {
                    index: i,
                    expected: t.key(),
                    found: format!("{m} {u}"),
                });
            }
        }
        if trials.len() != raw.len() {
            let i = trials.len().min(raw.len());
            return Err(Error::TrialMismatch {
                index: i,
                expected: trials.get(i).map_or("<end>".into(), Trial::key),
                found: raw.get(i).map_or("<end>".into(), |(m, u, _)| format!("{m} {u}")),
            });
        }
        Self::new(trials.iter().cloned().zip(raw.into_iter().map(|r| r.2)).collect())
    }

    pub fn entries(&self) -> &[(Trial, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn trials(&self) -> impl Iterator<Item = &Trial> {
        self.entries.iter().map(|(t, _)| t)
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, s)| *s)
    }

    pub fn scores_with(&self, label: TrialLabel) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|(t, _)| t.label == label)
            .map(|(_, s)| *s)
            .collect()
    }

    /// Checks that `other` covers the same trials in the same order.
    pub fn check_aligned(&self, other: &ScoreSet) -> Result<()> {
        for (i, ((a, _), (b, _))) in self.entries.iter().zip(&other.entries).enumerate() {
            if a != b {
                return Err(Error::TrialMismatch {
                    index: i,
                    expected: a.key(),
                    found: b.key(),
                });
            }
        }
        if self.len() != other.len() {
            let i = self.len().min(other.len());
            return Err(Error::TrialMismatch {
                index: i,
                expected: self.entries.get(i).map_or("<end>".into(), |(t, _)| t.key()),
                found: other.entries.get(i).map_or("<end>".into(), |(t, _)| t.key()),
            });
        }
        Ok(())
    }

    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.entries.iter().map(|(t, s)| (t.clone(), f(*s))).collect())
    }
}

/// Score lines `model_id test_utt score`, printed in shortest round-trip form.
pub fn format_scores(scores: &ScoreSet) -> String {
    let mut s = String::new();
    for (t, v) in &scores.entries {
        let _ = writeln!(s, "{} {} {}", t.model_id, t.test_utt, v);
    }
    s
}

pub fn parse_scores(text: &str) -> Result<Vec<(String, String, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [model, test, score] = fields[..] else {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        };
        let value: f64 = score.parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("bad score `{score}`"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("non-finite score `{score}`"),
            });
        }
        out.push((model.to_string(), test.to_string(), value));
    }
    Ok(out)
}

/// Detection-cost parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            p_target: 0.01,
            c_miss: 10.0,
            c_fa: 1.0,
        }
    }
}

impl DcfParams {
    pub fn cost(&self, p_miss: f64, p_fa: f64) -> f64 {
        self.c_miss * self.p_target * p_miss + self.c_fa * (1.0 - self.p_target) * p_fa
    }
}

/// Miss and false-alarm rates at every distinct threshold, ascending.
/// A trial is accepted when `score ≥ θ`; the final point rejects everything.
fn operating_points(genuine: &[f64], impostor: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    if genuine.is_empty() {
        return Err(Error::Empty("no genuine scores"));
    }
    if impostor.is_empty() {
        return Err(Error::Empty("no impostor scores"));
    }
    let mut pooled: Vec<(f64, bool)> = genuine
        .iter()
        .map(|&s| (s, true))
        .chain(impostor.iter().map(|&s| (s, false)))
        .collect();
    if pooled.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFiniteScore("metric input".into()));
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (g, n) = (genuine.len() as f64, impostor.len() as f64);
    let mut points = Vec::with_capacity(pooled.len() + 1);
    let (mut misses, mut rejected_impostors) = (0usize, 0usize);
    let mut i = 0;
    while i < pooled.len() {
        let theta = pooled[i].0;
        points.push((theta, misses as f64 / g, 1.0 - rejected_impostors as f64 / n));
        while i < pooled.len() && pooled[i].0 == theta {
            if pooled[i].1 {
                misses += 1;
            } else {
                rejected_impostors += 1;
            }
            i += 1;
        }
    }
    points.push((f64::INFINITY, 1.0, 0.0));
    Ok(points)
}

/// EER as a fraction plus the threshold of the first operating point at or
/// past the crossing.
pub fn eer_operating_point(genuine: &[f64], impostor: &[f64]) -> Result<(f64, f64)> {
    let points = operating_points(genuine, impostor)?;
    let mut prev = points[0];
    for &p in &points {
        let (_, frr, far) = p;
        if frr >= far {
            let d1 = prev.2 - prev.1;
            let d2 = far - frr;
            let eer = if d1 - d2 > 0.0 {
                let alpha = d1 / (d1 - d2);
                prev.1 + alpha * (frr - prev.1)
            } else {
                frr
            };
            return Ok((eer, p.0));
        }
        prev = p;
    }
    unreachable!("the reject-all point always has FRR ≥ FAR")
}

pub fn compute_eer(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    Ok(100.0 * eer_operating_point(genuine, impostor)?.0)
}

pub fn compute_min_dcf(genuine: &[f64], impostor: &[f64], params: DcfParams) -> Result<f64> {
    let points = operating_points(genuine, impostor)?;
    Ok(points
        .iter()
        .map(|&(_, p_miss, p_fa)| params.cost(p_miss, p_fa))
        .fold(f64::INFINITY, f64::min))
}

/// DCF at a fixed threshold (accept when `score ≥ θ`).
pub fn dcf_at(genuine: &[f64], impostor: &[f64], theta: f64, params: DcfParams) -> f64 {
    let p_miss = genuine.iter().filter(|&&s| s < theta).count() as f64 / genuine.len() as f64;
    let p_fa = impostor.iter().filter(|&&s| s >= theta).count() as f64 / impostor.len() as f64;
    params.cost(p_miss, p_fa)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionMetrics {
    pub eer_percent: f64,
    pub min_dcf: f64,
    pub genuine: usize,
    pub non_target: usize,
}

/// Genuine trials against each non-target class in turn.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// TW, IC, IW in that order; `None` when the class has no trials.
    pub conditions: [Option<ConditionMetrics>; 3],
    pub average_eer: f64,
    pub average_min_dcf: f64,
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn condition(&self, label: TrialLabel) -> Option<&ConditionMetrics> {
        TrialLabel::NON_TARGET
            .iter()
            .position(|&l| l == label)
            .and_then(|i| self.conditions[i].as_ref())
    }
}

pub fn condition_breakdown(scores: &ScoreSet, params: DcfParams) -> Result<MetricReport> {
    let genuine = scores.scores_with(TrialLabel::Genuine);
    if genuine.is_empty() {
        return Err(Error::Empty("no genuine trials"));
    }
    let mut conditions = [None, None, None];
    let mut warnings = Vec::new();
    for (slot, label) in conditions.iter_mut().zip(TrialLabel::NON_TARGET) {
        let impostor = scores.scores_with(label);
        if impostor.is_empty() {
            warnings.push(format!("no {} trials; excluded from the average", label.heading()));
            continue;
        }
        *slot = Some(ConditionMetrics {
            eer_percent: compute_eer(&genuine, &impostor)?,
            min_dcf: compute_min_dcf(&genuine, &impostor, params)?,
            genuine: genuine.len(),
            non_target: impostor.len(),
        });
    }
    let present: Vec<&ConditionMetrics> = conditions.iter().flatten().collect();
    if present.is_empty() {
        return Err(Error::Empty("no non-target trials"));
    }
    let k = present.len() as f64;
    Ok(MetricReport {
        average_eer: present.iter().map(|c| c.eer_percent).sum::<f64>() / k,
        average_min_dcf: present.iter().map(|c| c.min_dcf).sum::<f64>() / k,
        conditions,
        warnings,
    })
}

/// Breakdown restricted to trials whose claimed model belongs to each phrase.
pub fn phrase_breakdown(
    scores: &ScoreSet,
    params: DcfParams,
    phrase_of: impl Fn(&Trial) -> String,
) -> Result<BTreeMap<String, MetricReport>> {
    let mut groups: BTreeMap<String, Vec<(Trial, f64)>> = BTreeMap::new();
    for (t, s) in scores.entries() {
        groups.entry(phrase_of(t)).or_default().push((t.clone(), *s));
    }
    groups
        .into_iter()
        .map(|(p, entries)| Ok((p, condition_breakdown(&ScoreSet { entries }, params)?)))
        .collect()
}

/// Named systems rendered as an aligned text table and as CSV, with
/// minDCF scaled by 100.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<(String, MetricReport)>,
}

impl ReportTable {
    pub fn push(&mut self, name: impl Into<String>, report: MetricReport) {
        self.rows.push((name.into(), report));
    }

    pub fn get(&self, name: &str) -> Option<&MetricReport> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }

    fn cells(report: &MetricReport) -> Vec<String> {
        let mut cells: Vec<String> = report
            .conditions
            .iter()
            .map(|c| match c {
                Some(c) => format!("{:.2}/{:.2}", c.eer_percent, 100.0 * c.min_dcf),
                None => "-".into(),
            })
            .collect();
        cells.push(format!(
            "{:.2}/{:.2}",
            report.average_eer,
            100.0 * report.average_min_dcf
        ));
        cells
    }

    pub fn to_text(&self) -> String {
        let mut header: Vec<String> = Vec::from(["System".to_string()]);
        header.extend(TrialLabel::NON_TARGET.iter().map(|l| l.heading().to_string()));
        header.push("Average".into());
        let mut body: Vec<Vec<String>> = Vec::from([header]);
        for (name, r) in &self.rows {
            let mut row = Vec::from([name.clone()]);
            row.extend(Self::cells(r));
            body.push(row);
        }
        let widths: Vec<usize> = (0..body[0].len())
            .map(|c| body.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut s = String::from("EER(%)/minDCFx100\n");
        for row in &body {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, &w))| {
                    if i == 0 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(s, "{}", line.join("  ").trim_end());
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("system,tw_eer,tw_mindcf100,ic_eer,ic_mindcf100,iw_eer,iw_mindcf100,avg_eer,avg_mindcf100\n");
        for (name, r) in &self.rows {
            let _ = write!(s, "{name}");
            for c in &r.conditions {
                match c {
                    Some(c) => {
                        let _ = write!(s, ",{:.4},{:.4}", c.eer_percent, 100.0 * c.min_dcf);
                    }
                    None => s.push_str(",,"),
                }
            }
            let _ = writeln!(s, ",{:.4},{:.4}", r.average_eer, 100.0 * r.average_min_dcf);
        }
        s
    }
}
