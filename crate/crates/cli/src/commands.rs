use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use surfi_core::eval::{self, EvalSettings};
use surfi_core::synth::{self, CorpusProtocol};
use surfi_core::trace::{parse_csi_trace, parse_keypoint_trace, CsiFormat};
use surfi_core::{Analysis, Pipeline, PipelineConfig, Verdict};

use crate::error::CliError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Options shared by every subcommand.
pub struct Global {
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
}

/// What a command produced: text for stdout (or `--out`) and the exit code.
pub struct Outcome {
    pub output: String,
    pub exit: i32,
}

impl Outcome {
    fn ok(output: String) -> Self {
        Self { output, exit: 0 }
    }
}

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path).map_err(CliError::read(path))?;
    PipelineConfig::from_json(&text).map_err(|problems| CliError::Config { path: path.to_path_buf(), problems })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(CliError::read(path))
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize") + "\n"
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn detect_csv(a: &Analysis) -> String {
    let mut out = String::from(
        "event,start_s,end_s,video_start_s,video_end_s,video_freq_hz,csi_freq_hz,as_start,as_end,as_freq,score\n",
    );
    for (i, e) in a.events.iter().enumerate() {
        let vb = e.attributes.video.bounds;
        let [a1, a2, a3] = e.verdict.per_attribute;
        out += &format!(
            "{i},{},{},{},{},{},{},{a1},{a2},{a3},{}\n",
            e.window.start_s,
            e.window.end_s,
            opt(vb.map(|b| b.tau_start)),
            opt(vb.map(|b| b.tau_end)),
            opt(e.attributes.video.f),
            opt(e.attributes.csi.f),
            e.verdict.score
        );
    }
    out
}

pub fn cmd_detect(g: &Global, video: &Path, csi: &Path, csi_format: Option<CsiFormat>) -> Result<Outcome> {
    let cfg = load_config(g.config.as_deref())?;
    let video_trace = parse_keypoint_trace::<f64, _>(open(video)?).map_err(CliError::parse(video))?;
    let format = csi_format.unwrap_or_else(|| CsiFormat::from_path(csi));
    let csi_trace = parse_csi_trace::<f64, _>(open(csi)?, format).map_err(CliError::parse(csi))?;
    let analysis = Pipeline::new(cfg).analyze(&video_trace, &csi_trace)?;
    for w in &analysis.warnings {
        log::warn!("{w}");
    }
    let exit = match analysis.decision.as_ref().map(|d| d.verdict) {
        Some(Verdict::Looped) => 2,
        _ => 0,
    };
    let output = match g.format {
        Format::Json => pretty(&analysis),
        Format::Csv => detect_csv(&analysis),
    };
    Ok(Outcome { output, exit })
}

fn require_out(g: &Global, command: &str) -> Result<PathBuf> {
    g.out.clone().ok_or_else(|| CliError::Usage(format!("`{command}` needs --out <dir>")))
}

pub fn cmd_synth(g: &Global, protocol_path: Option<&Path>) -> Result<Outcome> {
    let out = require_out(g, "synth")?;
    let protocol = match protocol_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(CliError::read(p))?;
            CorpusProtocol::from_json(&text).map_err(|source| CliError::Protocol { path: p.to_path_buf(), source })?
        }
        None => CorpusProtocol::default(),
    };
    let entries = synth::gen_corpus(&protocol, g.seed, &out)?;
    let summary = json!({
        "out": out.display().to_string(),
        "seed": g.seed,
        "matched": protocol.matched_count(),
        "attack": protocol.attack_count(),
        "entries": entries.len(),
    });
    Ok(Outcome::ok(pretty(&summary)))
}

fn corpus_scores(cfg: PipelineConfig, corpus: &Path) -> Result<Vec<eval::TrialScore>> {
    let pipeline = Pipeline::new(cfg);
    let entries = eval::load_manifest(corpus)?;
    let (bank, pairs) = eval::features_from_manifest::<f64>(&pipeline, corpus, &entries)?;
    Ok(eval::score_pairs(&pipeline, &bank, &pairs)?)
}

pub fn cmd_calibrate(g: &Global, corpus: &Path, target_fpr: Option<f64>) -> Result<Outcome> {
    let cfg = load_config(g.config.as_deref())?;
    let target = target_fpr.or(cfg.decision.target_fpr).unwrap_or(0.001);
    if !(target > 0.0 && target < 1.0) {
        return Err(CliError::Usage(format!("target FPR must lie in (0, 1), got {target}")));
    }
    let scores = corpus_scores(cfg, corpus)?;
    let settings = EvalSettings { seed: g.seed, ..Default::default() };
    let rows = eval::calibrate_scores(&scores, target, &settings)?;
    let output = match g.format {
        Format::Json => pretty(&json!({ "target_fpr": target, "seed": g.seed, "thresholds": rows })),
        Format::Csv => {
            let mut s = String::from("n,sequences,threshold,target_fpr,empirical_fpr,undersampled\n");
            for r in &rows {
                s += &format!(
                    "{},{},{},{},{},{}\n",
                    r.n, r.sequences, r.calibration.threshold, target, r.empirical_fpr, r.calibration.undersampled
                );
            }
            s
        }
    };
    Ok(Outcome::ok(output))
}

fn write_file(path: &Path, render: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(CliError::write(path))?);
    render(&mut w).and_then(|_| w.flush()).map_err(CliError::write(path))
}

pub fn cmd_eval(g: &Global, corpus: &Path, sequences: usize) -> Result<Outcome> {
    let out = require_out(g, "eval")?;
    let cfg = load_config(g.config.as_deref())?;
    let scores = corpus_scores(cfg, corpus)?;
    let settings = EvalSettings { seed: g.seed, sequences_per_n: sequences, ..Default::default() };
    let report = eval::evaluate(&scores, &settings)?;
    fs::create_dir_all(&out).map_err(CliError::write(&out))?;
    write_file(&out.join("tpr.csv"), |w| eval::write_tpr_csv(w, &report))?;
    write_file(&out.join("scores.csv"), |w| eval::write_scores_csv(w, &scores))?;
    write_file(&out.join("cdf.csv"), |w| eval::write_cdf_csv(w, &report))?;
    write_file(&out.join("summary.csv"), |w| eval::write_summary_csv(w, &report))?;
    let json = pretty(&report);
    write_file(&out.join("report.json"), |w| w.write_all(json.as_bytes()))?;
    let output = match g.format {
        Format::Json => json,
        Format::Csv => {
            let mut buf = Vec::new();
            eval::write_tpr_csv(&mut buf, &report).expect("writing to memory");
            String::from_utf8(buf).expect("ascii csv")
        }
    };
    Ok(Outcome::ok(output))
}
