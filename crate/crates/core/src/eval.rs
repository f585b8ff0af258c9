//! Corpus-scale evaluation: per-trial similarity scores, multi-event
//! sequences, threshold calibration at target false-positive rates and the
//! resulting detection rates.
//!
//! Each trial contributes the score of its longest CSI event. Sequences of
//! `n` events are formed by averaging `n` distinct same-label trial scores.
//! Legitimate trials are split by manifest position: even positions calibrate
//! the threshold, odd positions measure held-out false positives.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::pipeline::{compare, AttributePair, AttributeTriple, Bounds, CsiFeatures, Pipeline, PipelineError, VideoFeatures};
use crate::pipeline::{calibrate_decision_threshold, Calibration};
use crate::scalar::Scalar;
use crate::synth::{self, CorpusProtocol, ManifestEntry, ManifestLabel, SynthError};
use crate::trace::{self, CsiFormat, TraceError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Manifest { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Trace { path: PathBuf, source: TraceError },
    #[error("{path}: {source}")]
    Pipeline { path: PathBuf, source: PipelineError },
    #[error("corpus has no {0} trials")]
    MissingLabel(&'static str),
    #[error("{label} pool has {available} trials, sequences of {n} need at least {n}")]
    PoolTooSmall { label: &'static str, n: usize, available: usize },
    #[error("target false-positive rate must lie in (0, 1), got {0}")]
    TargetFpr(f64),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Score(PipelineError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub max_events: usize,
    pub target_fprs: Vec<f64>,
    /// Sequences drawn per event count when `n > 1`.
    pub sequences_per_n: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { max_events: 5, target_fprs: vec![0.001, 0.005, 0.009], sequences_per_n: 2000, seed: 0 }
    }
}

/// Features of every distinct trace in a corpus.
pub struct FeatureBank<T> {
    pub videos: Vec<VideoFeatures<T>>,
    pub csis: Vec<CsiFeatures<T>>,
}

/// One (video, CSI) pairing to score, by index into a [`FeatureBank`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairRef {
    pub id: String,
    pub label: ManifestLabel,
    pub event_type: String,
    pub video_event_type: Option<String>,
    pub degenerate: bool,
    pub video: usize,
    pub csi: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialScore {
    pub id: String,
    pub label: ManifestLabel,
    pub event_type: String,
    pub video_event_type: Option<String>,
    pub degenerate: bool,
    pub score: u8,
    pub per_attribute: [u8; 3],
    pub csi_events: usize,
}

/// Maps manifest entries to pair references, assigning trace indices in
/// first-seen order. Returns the distinct video and CSI paths.
pub fn index_entries(entries: &[ManifestEntry]) -> (Vec<String>, Vec<String>, Vec<PairRef>) {
    let mut videos: Vec<String> = Vec::new();
    let mut csis: Vec<String> = Vec::new();
    let mut video_idx: HashMap<String, usize> = HashMap::new();
    let mut csi_idx: HashMap<String, usize> = HashMap::new();
    let intern = |map: &mut HashMap<String, usize>, list: &mut Vec<String>, p: &str| {
        *map.entry(p.to_string()).or_insert_with(|| {
            list.push(p.to_string());
            list.len() - 1
        })
    };
    let pairs = entries
        .iter()
        .map(|e| PairRef {
            id: e.id.clone(),
            label: e.label.clone(),
            event_type: e.event_type.clone(),
            video_event_type: e.video_event_type.clone(),
            degenerate: e.degenerate,
            video: intern(&mut video_idx, &mut videos, &e.video_path),
            csi: intern(&mut csi_idx, &mut csis, &e.csi_path),
        })
        .collect();
    (videos, csis, pairs)
}

pub fn load_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(synth::MANIFEST_FILE);
    let file = File::open(&path).map_err(|source| EvalError::Io { path: path.clone(), source })?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io { path: path.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| EvalError::Manifest {
            path: path.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(EvalError::Manifest { path, line: 0, message: "manifest is empty".into() });
    }
    Ok(entries)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

fn trace_err(path: &Path) -> impl FnOnce(TraceError) -> EvalError + '_ {
    move |e| match e {
        TraceError::Io(source) => EvalError::Io { path: path.to_path_buf(), source },
        source => EvalError::Trace { path: path.to_path_buf(), source },
    }
}

fn pipeline_err(path: &Path) -> impl FnOnce(PipelineError) -> EvalError + '_ {
    move |source| EvalError::Pipeline { path: path.to_path_buf(), source }
}

/// Loads every distinct trace named by `entries` (relative to `dir`) and
/// computes its features.
pub fn features_from_manifest<T: Scalar>(
    pipeline: &Pipeline,
    dir: &Path,
    entries: &[ManifestEntry],
) -> Result<(FeatureBank<T>, Vec<PairRef>)> {
    let (video_paths, csi_paths, pairs) = index_entries(entries);
    let videos = video_paths
        .par_iter()
        .map(|p| {
            let path = dir.join(p);
            let trace = trace::parse_keypoint_trace::<T, _>(open(&path)?).map_err(trace_err(&path))?;
            pipeline.video_features(&trace).map_err(pipeline_err(&path))
        })
        .collect::<Result<Vec<_>>>()?;
    let csis = csi_paths
        .par_iter()
        .map(|p| {
            let path = dir.join(p);
            let trace =
                trace::parse_csi_trace::<T, _>(open(&path)?, CsiFormat::from_path(&path)).map_err(trace_err(&path))?;
            pipeline.csi_features(&trace).map_err(pipeline_err(&path))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((FeatureBank { videos, csis }, pairs))
}

/// Generates a protocol's corpus in memory and computes its features, with
/// the same pair ids and ordering as [`synth::gen_corpus`] would write.
pub fn features_from_protocol(
    pipeline: &Pipeline,
    protocol: &CorpusProtocol,
    seed: u64,
) -> Result<(FeatureBank<f64>, Vec<PairRef>)> {
    protocol.validate()?;
    let plans = synth::plan_trials(protocol, seed);
    let entries = synth::manifest_entries(protocol, &plans);
    let (video_paths, csi_paths, pairs) = index_entries(&entries);
    debug_assert_eq!(video_paths.len(), plans.len());
    debug_assert_eq!(csi_paths.len(), plans.len());
    let features = plans
        .par_iter()
        .map(|plan| {
            let (video, csi, _) = synth::gen_trial(plan, protocol)?;
            let label = PathBuf::from(format!("<synth trial {}>", plan.index));
            let v = pipeline.video_features(&video).map_err(pipeline_err(&label))?;
            let c = pipeline.csi_features(&csi).map_err(pipeline_err(&label))?;
            Ok((v, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let (videos, csis) = features.into_iter().unzip();
    Ok((FeatureBank { videos, csis }, pairs))
}

/// Scores every pair on its CSI trace's longest event. Trials without a CSI
/// event score 0.
pub fn score_pairs<T: Scalar>(pipeline: &Pipeline, bank: &FeatureBank<T>, pairs: &[PairRef]) -> Result<Vec<TrialScore>> {
    let longest: Vec<_> = bank
        .csis
        .iter()
        .map(|c| c.events.iter().copied().reduce(|a, b| if b.duration() > a.duration() { b } else { a }))
        .collect();

    let video_attrs = pairs
        .par_iter()
        .map(|p| match &longest[p.csi] {
            Some(w) => pipeline.video_attributes(&bank.videos[p.video], w).map(Some),
            None => Ok(None),
        })
        .collect::<Result<Vec<Option<AttributeTriple>>, _>>()
        .map_err(EvalError::Score)?;

    // the CSI frequency depends only on the CSI trace and the band edge, which
    // takes few distinct values, so compute each combination once
    let keys: BTreeMap<(usize, u64), f64> = pairs
        .iter()
        .zip(&video_attrs)
        .filter_map(|(p, v)| v.as_ref().map(|v| pipeline.csi_band_high(v.f)).map(|h| ((p.csi, h.to_bits()), h)))
        .collect();
    let keys: Vec<((usize, u64), f64)> = keys.into_iter().collect();
    let freqs: HashMap<(usize, u64), Option<f64>> = keys
        .par_iter()
        .map(|&((c, bits), high)| {
            let w = longest[c].expect("keys only exist for CSI traces with events");
            pipeline.csi_frequency(&bank.csis[c], &w, high).map(|f| ((c, bits), f))
        })
        .collect::<Result<_, _>>()
        .map_err(EvalError::Score)?;

    let th = &pipeline.config().thresholds;
    Ok(pairs
        .iter()
        .zip(video_attrs)
        .map(|(p, v)| {
            let (score, per_attribute) = match (v, &longest[p.csi]) {
                (Some(video), Some(w)) => {
                    let high = pipeline.csi_band_high(video.f);
                    let csi = AttributeTriple {
                        bounds: Some(Bounds { tau_start: w.start_s, tau_end: w.end_s }),
                        f: freqs[&(p.csi, high.to_bits())],
                    };
                    let verdict = compare(&AttributePair { video, csi }, th);
                    (verdict.score, verdict.per_attribute)
                }
                _ => (0, [0; 3]),
            };
            TrialScore {
                id: p.id.clone(),
                label: p.label.clone(),
                event_type: p.event_type.clone(),
                video_event_type: p.video_event_type.clone(),
                degenerate: p.degenerate,
                score,
                per_attribute,
                csi_events: bank.csis[p.csi].events.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalCell {
    pub n: usize,
    pub target_fpr: f64,
    pub threshold: f64,
    pub tpr: f64,
    pub fpr_calibration: f64,
    pub fpr_holdout: f64,
    pub calibration_sequences: usize,
    pub holdout_sequences: usize,
    pub attack_sequences: usize,
    pub undersampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceStats {
    pub n: usize,
    pub label: &'static str,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeSummary {
    pub event_type: String,
    pub label: &'static str,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

/// Sorted sequence means of one label at one event count.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet {
    pub n: usize,
    pub label: &'static str,
    pub means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub seed: u64,
    pub sequences_per_n: usize,
    pub split_rule: &'static str,
    pub legitimate_trials: usize,
    pub attack_trials: usize,
    pub degenerate_attacks: usize,
    pub trials_without_csi_event: usize,
    pub cells: Vec<EvalCell>,
    pub sequence_stats: Vec<SequenceStats>,
    pub type_summaries: Vec<TypeSummary>,
    #[serde(skip)]
    pub sequences: Vec<SequenceSet>,
}

impl EvalReport {
    pub fn cell(&self, n: usize, target_fpr: f64) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.n == n && c.target_fpr == target_fpr)
    }

    pub fn stats(&self, n: usize, label: &str) -> Option<&SequenceStats> {
        self.sequence_stats.iter().find(|s| s.n == n && s.label == label)
    }
}

pub const LEGITIMATE: &str = "legitimate";
pub const ATTACK: &str = "attack";
const SPLIT_RULE: &str = "legitimate trials in manifest order: even positions calibrate, odd positions are held out";

fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Means of `n`-trial sequences. For `n == 1` every trial is one sequence;
/// otherwise `count` sequences of `n` distinct trials are drawn.
pub fn sequence_means(pool: &[f64], n: usize, count: usize, seed: u64, label: &'static str) -> Result<Vec<f64>> {
    if pool.len() < n || pool.is_empty() {
        return Err(EvalError::PoolTooSmall { label, n, available: pool.len() });
    }
    if n == 1 {
        return Ok(pool.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| index::sample(&mut rng, pool.len(), n).iter().map(|i| pool[i]).sum::<f64>() / n as f64)
        .collect())
}

fn fraction_below(x: &[f64], threshold: f64) -> f64 {
    x.iter().filter(|&&v| v < threshold).count() as f64 / x.len() as f64
}

fn check_targets(targets: &[f64]) -> Result<()> {
    match targets.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        Some(&t) => Err(EvalError::TargetFpr(t)),
        None => Ok(()),
    }
}

fn seq_seed(seed: u64, n: usize, tag: u64) -> u64 {
    synth::mix_seed(seed, (n as u64) << 8 | tag)
}

pub fn evaluate(scores: &[TrialScore], settings: &EvalSettings) -> Result<EvalReport> {
    check_targets(&settings.target_fprs)?;
    let legit: Vec<f64> =
        scores.iter().filter(|s| s.label == ManifestLabel::Matched).map(|s| f64::from(s.score)).collect();
    let attack: Vec<f64> =
        scores.iter().filter(|s| s.label == ManifestLabel::Attack).map(|s| f64::from(s.score)).collect();
    if legit.is_empty() {
        return Err(EvalError::MissingLabel("matched"));
    }
    if attack.is_empty() {
        return Err(EvalError::MissingLabel("attack"));
    }
    let calibration: Vec<f64> = legit.iter().copied().step_by(2).collect();
    let holdout: Vec<f64> = legit.iter().copied().skip(1).step_by(2).collect();

    let mut cells = Vec::new();
    let mut sequence_stats = Vec::new();
    let mut sequences = Vec::new();
    for n in 1..=settings.max_events {
        let count = settings.sequences_per_n;
        let cal = sequence_means(&calibration, n, count, seq_seed(settings.seed, n, 1), "calibration")?;
        let hold = sequence_means(&holdout, n, count, seq_seed(settings.seed, n, 2), "holdout")?;
        let att = sequence_means(&attack, n, count, seq_seed(settings.seed, n, 3), ATTACK)?;
        let all = sequence_means(&legit, n, count, seq_seed(settings.seed, n, 4), LEGITIMATE)?;
        for &target in &settings.target_fprs {
            let c = calibrate_decision_threshold(&cal, target).map_err(EvalError::Score)?;
            cells.push(EvalCell {
                n,
                target_fpr: target,
                threshold: c.threshold,
                tpr: fraction_below(&att, c.threshold),
                fpr_calibration: c.empirical_fpr(),
                fpr_holdout: fraction_below(&hold, c.threshold),
                calibration_sequences: cal.len(),
                holdout_sequences: hold.len(),
                attack_sequences: att.len(),
                undersampled: c.undersampled,
            });
        }
        for (label, set) in [(LEGITIMATE, all), (ATTACK, att)] {
            let (mean, std) = mean_std(&set);
            sequence_stats.push(SequenceStats { n, label, count: set.len(), mean, std });
            let mut means = set;
            means.sort_by(f64::total_cmp);
            sequences.push(SequenceSet { n, label, means });
        }
    }

    let mut groups: BTreeMap<(&str, &'static str), Vec<f64>> = BTreeMap::new();
    for s in scores {
        let label = if s.label == ManifestLabel::Matched { LEGITIMATE } else { ATTACK };
        groups.entry((s.event_type.as_str(), label)).or_default().push(f64::from(s.score));
    }
    let type_summaries = groups
        .into_iter()
        .map(|((event_type, label), v)| {
            let (mean, std) = mean_std(&v);
            TypeSummary { event_type: event_type.to_string(), label, count: v.len(), mean, std }
        })
        .collect();

    Ok(EvalReport {
        seed: settings.seed,
        sequences_per_n: settings.sequences_per_n,
        split_rule: SPLIT_RULE,
        legitimate_trials: legit.len(),
        attack_trials: attack.len(),
        degenerate_attacks: scores.iter().filter(|s| s.degenerate).count(),
        trials_without_csi_event: scores.iter().filter(|s| s.csi_events == 0).count(),
        cells,
        sequence_stats,
        type_summaries,
        sequences,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub n: usize,
    pub sequences: usize,
    #[serde(flatten)]
    pub calibration: Calibration,
    pub empirical_fpr: f64,
}

/// Thresholds per event count from all legitimate trials.
pub fn calibrate_scores(scores: &[TrialScore], target_fpr: f64, settings: &EvalSettings) -> Result<Vec<CalibrationRow>> {
    check_targets(&[target_fpr])?;
    let legit: Vec<f64> =
        scores.iter().filter(|s| s.label == ManifestLabel::Matched).map(|s| f64::from(s.score)).collect();
    if legit.is_empty() {
        return Err(EvalError::MissingLabel("matched"));
    }
    (1..=settings.max_events.min(legit.len()))
        .map(|n| {
            let means = sequence_means(&legit, n, settings.sequences_per_n, seq_seed(settings.seed, n, 4), LEGITIMATE)?;
            let calibration = calibrate_decision_threshold(&means, target_fpr).map_err(EvalError::Score)?;
            Ok(CalibrationRow { n, sequences: means.len(), empirical_fpr: calibration.empirical_fpr(), calibration })
        })
        .collect()
}

pub fn write_tpr_csv<W: Write>(mut w: W, report: &EvalReport) -> io::Result<()> {
    writeln!(
        w,
        "n,target_fpr,threshold,tpr,fpr_calibration,fpr_holdout,calibration_sequences,holdout_sequences,attack_sequences"
    )?;
    for c in &report.cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            c.n,
            c.target_fpr,
            c.threshold,
            c.tpr,
            c.fpr_calibration,
            c.fpr_holdout,
            c.calibration_sequences,
            c.holdout_sequences,
            c.attack_sequences
        )?;
    }
    Ok(())
}

pub fn write_scores_csv<W: Write>(mut w: W, scores: &[TrialScore]) -> io::Result<()> {
    writeln!(w, "id,label,event_type,video_event_type,score,as_start,as_end,as_freq,csi_events")?;
    for s in scores {
        let label = if s.label == ManifestLabel::Matched { LEGITIMATE } else { ATTACK };
        let [a, b, c] = s.per_attribute;
        writeln!(
            w,
            "{},{},{},{},{},{a},{b},{c},{}",
            s.id,
            label,
            s.event_type,
            s.video_event_type.as_deref().unwrap_or(&s.event_type),
            s.score,
            s.csi_events
        )?;
    }
    Ok(())
}

pub fn write_cdf_csv<W: Write>(mut w: W, report: &EvalReport) -> io::Result<()> {
    writeln!(w, "label,n,mean_score,cdf")?;
    for set in &report.sequences {
        let total = set.means.len() as f64;
        for (i, m) in set.means.iter().enumerate() {
            // only the last of equal values carries the step
            if set.means.get(i + 1) == Some(m) {
                continue;
            }
            writeln!(w, "{},{},{},{}", set.label, set.n, m, (i + 1) as f64 / total)?;
        }
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(mut w: W, report: &EvalReport) -> io::Result<()> {
    writeln!(w, "event_type,label,count,mean,std")?;
    for t in &report.type_summaries {
        writeln!(w, "{},{},{},{},{}", t.event_type, t.label, t.count, t.mean, t.std)?;
    }
    Ok(())
}
