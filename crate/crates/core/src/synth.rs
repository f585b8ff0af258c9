//! Ground-truth generator for paired keypoint / CSI traces.
//!
//! A trial is one repeated activity at a known frequency between known start
//! and end times. The video side moves one keypoint (and, for limbs, its
//! parent joint at half amplitude) sinusoidally; every other keypoint sits
//! still with pixel jitter and occasional dropouts. The CSI side amplitude
//! modulates each subcarrier's DC level by the same activity (fundamental
//! plus a second harmonic 10 dB down) and adds white Gaussian noise at the
//! requested SNR. SNR is the ratio of each column's modulation power over the
//! event to its noise variance.
//!
//! This is a behavioural model for exercising the detector, not an RF model.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{self, Axis, CsiFormat, CsiTrace, Frame, Keypoint, KeypointTrace, TraceError, KEYPOINT_COUNT};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid event spec: {0}")]
    InvalidSpec(String),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("cannot write corpus at {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

/// Approximate BODY_25 rest pose (pixels) of a person facing the camera.
const REST_POSE: [(f64, f64); KEYPOINT_COUNT] = [
    (960.0, 300.0),
    (960.0, 400.0),
    (880.0, 400.0),
    (860.0, 520.0),
    (850.0, 630.0),
    (1040.0, 400.0),
    (1060.0, 520.0),
    (1070.0, 630.0),
    (960.0, 650.0),
    (910.0, 650.0),
    (905.0, 820.0),
    (900.0, 980.0),
    (1010.0, 650.0),
    (1015.0, 820.0),
    (1020.0, 980.0),
    (945.0, 285.0),
    (975.0, 285.0),
    (925.0, 295.0),
    (995.0, 295.0),
    (1040.0, 1010.0),
    (1055.0, 1005.0),
    (1015.0, 995.0),
    (880.0, 1010.0),
    (865.0, 1005.0),
    (905.0, 995.0),
];

pub const LEFT_WRIST: usize = 7;
pub const RIGHT_WRIST: usize = 4;

/// Joint dragged along (at half amplitude) when a limb end moves.
fn follower(id: usize) -> Option<usize> {
    match id {
        4 => Some(3),
        7 => Some(6),
        11 => Some(10),
        14 => Some(13),
        _ => None,
    }
}

/// CSI-only disturbance (e.g. movement outside the camera's view).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nuisance {
    pub t_start: f64,
    pub t_end: f64,
    /// Amplitude relative to each column's event gain.
    pub relative_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub freq: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub keypoint_id: usize,
    pub axis: Axis,
    pub amplitude_px: f64,
    /// Modulation amplitude per subcarrier column; its length sets the column count.
    pub csi_gain: Vec<f64>,
    /// `f64::INFINITY` disables noise.
    pub snr_db: f64,
    /// Video clock minus CSI clock.
    pub clock_offset_s: f64,
    pub nuisance: Option<Nuisance>,
}

impl EventSpec {
    /// An event with the default corpus setup: 90 columns of unit gain, 20 dB SNR.
    pub fn new(freq: f64, t_start: f64, t_end: f64) -> Self {
        Self {
            freq,
            t_start,
            t_end,
            keypoint_id: LEFT_WRIST,
            axis: Axis::Y,
            amplitude_px: 60.0,
            csi_gain: vec![1.0; 90],
            snr_db: 20.0,
            clock_offset_s: 0.0,
            nuisance: None,
        }
    }

    pub fn validate(&self, settings: &SynthSettings) -> Result<()> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(self.freq > 0.0 && self.freq.is_finite()) {
            return bad(format!("freq must be positive, got {}", self.freq));
        }
        if !(self.t_start >= 0.0 && self.t_start < self.t_end && self.t_end <= settings.duration_s) {
            return bad(format!(
                "need 0 <= t_start < t_end <= {} s, got [{}, {}]",
                settings.duration_s, self.t_start, self.t_end
            ));
        }
        if self.keypoint_id >= KEYPOINT_COUNT {
            return bad(format!("keypoint_id {} out of range", self.keypoint_id));
        }
        if !self.amplitude_px.is_finite() {
            return bad("amplitude_px must be finite".into());
        }
        if self.csi_gain.is_empty() || self.csi_gain.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return bad("csi_gain must be a non-empty list of non-negative numbers".into());
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return bad(format!("snr_db must be a number or +inf, got {}", self.snr_db));
        }
        if !self.clock_offset_s.is_finite() {
            return bad("clock_offset_s must be finite".into());
        }
        if let Some(n) = &self.nuisance {
            if !(n.t_start < n.t_end && n.relative_amplitude.is_finite()) {
                return bad("nuisance interval must be non-empty".into());
            }
        }
        Ok(())
    }

    fn truth(&self) -> EventTruth {
        EventTruth { t_start: self.t_start, t_end: self.t_end, freq: self.freq }
    }
}

/// Trace-level generation settings shared by every trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub duration_s: f64,
    pub csi_rate: f64,
    pub video_rate: f64,
    pub jitter_px: f64,
    pub dropout_prob: f64,
    /// Level of the second harmonic relative to the fundamental.
    pub harmonic_db: f64,
    /// Scales the CSI modulation only (noise keeps its unattenuated level).
    pub attenuation: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            duration_s: 40.0,
            csi_rate: 1000.0,
            video_rate: 30.0,
            jitter_px: 0.5,
            dropout_prob: 0.02,
            harmonic_db: -10.0,
            attenuation: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventTruth {
    pub t_start: f64,
    pub t_end: f64,
    pub freq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PairLabel {
    Matched,
    Attack {
        video: EventTruth,
        csi: EventTruth,
        /// Both sides were generated from the same spec; indistinguishable from a matched pair.
        degenerate: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialGroundTruth {
    /// What actually happened in front of the CSI link.
    pub truth: EventTruth,
    pub label: PairLabel,
}

/// SplitMix64 finalizer; derives independent sub-seeds.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_VIDEO: u64 = 1;
const TAG_CSI_DC: u64 = 2;
const TAG_CSI_NOISE: u64 = 0x1000;
const TAG_NUISANCE: u64 = 3;

fn rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, tag))
}

/// Rounds to a multiple of `step`, which must be a power of ten below one.
/// Dividing by the integer scale keeps the shortest decimal representation.
fn round_to(v: f64, step: f64) -> f64 {
    let scale = step.recip().round();
    (v * scale).round() / scale
}

fn activity(spec: &EventSpec, harmonic: f64, t: f64) -> f64 {
    if t < spec.t_start || t >= spec.t_end {
        return 0.0;
    }
    let phase = 2.0 * std::f64::consts::PI * spec.freq * (t - spec.t_start);
    phase.sin() + harmonic * (2.0 * phase).sin()
}

pub fn gen_keypoints(spec: &EventSpec, settings: &SynthSettings, seed: u64) -> Result<KeypointTrace<f64>> {
    spec.validate(settings)?;
    let mut r = rng(seed, TAG_VIDEO);
    let jitter = Normal::new(0.0, settings.jitter_px.max(0.0)).expect("finite sigma");
    let frames_n = (settings.duration_s * settings.video_rate).round() as usize;
    let mut times = Vec::with_capacity(frames_n);
    let mut frames = Vec::with_capacity(frames_n);
    let follow = follower(spec.keypoint_id);
    for i in 0..frames_n {
        let t = round_to(i as f64 / settings.video_rate, 1e-6);
        // the video clock runs `clock_offset_s` ahead of the CSI clock
        let m = spec.amplitude_px * activity(spec, 0.0, t - spec.clock_offset_s);
        let frame: Frame<f64> = std::array::from_fn(|k| {
            let (mut x, mut y) = REST_POSE[k];
            let scale = if k == spec.keypoint_id {
                1.0
            } else if Some(k) == follow {
                0.5
            } else {
                0.0
            };
            match spec.axis {
                Axis::X => x += scale * m,
                Axis::Y => y += scale * m,
            }
            x += jitter.sample(&mut r);
            y += jitter.sample(&mut r);
            let conf: f64 = r.random_range(0.85..0.95);
            if r.random::<f64>() < settings.dropout_prob {
                Keypoint::missing()
            } else {
                Keypoint { x: round_to(x, 0.01), y: round_to(y, 0.01), confidence: round_to(conf, 0.001) }
            }
        });
        times.push(t);
        frames.push(frame);
    }
    Ok(KeypointTrace::new(times, frames)?)
}

/// Noise-free and noise-only parts of one CSI column, for checking the generator.
pub struct CsiComponents {
    pub dc: f64,
    pub signal: Vec<f64>,
    pub noise: Vec<f64>,
}

struct CsiPlan {
    times: Vec<f64>,
    /// Activity waveform (unit gain) per sample.
    wave: Vec<f64>,
    /// Nuisance waveform (unit gain) per sample, if any.
    nuisance: Option<Vec<f64>>,
    dc: Vec<f64>,
    sigma: Vec<f64>,
}

fn plan_csi(spec: &EventSpec, settings: &SynthSettings, seed: u64) -> Result<CsiPlan> {
    spec.validate(settings)?;
    let n = (settings.duration_s * settings.csi_rate).round() as usize;
    let times: Vec<f64> = (0..n).map(|i| round_to(i as f64 / settings.csi_rate, 1e-6)).collect();
    let harmonic = 10f64.powf(settings.harmonic_db / 20.0);
    let wave: Vec<f64> = times.iter().map(|&t| activity(spec, harmonic, t)).collect();
    let in_event: Vec<f64> = times
        .iter()
        .zip(&wave)
        .filter(|(t, _)| **t >= spec.t_start && **t < spec.t_end)
        .map(|(_, w)| *w)
        .collect();
    let wave_power = in_event.iter().map(|w| w * w).sum::<f64>() / in_event.len().max(1) as f64;

    let nuisance = spec.nuisance.map(|nz| {
        let mut r = rng(seed, TAG_NUISANCE);
        let tones: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| (r.random_range(0.3..3.0), r.random_range(0.0..std::f64::consts::TAU), r.random_range(0.5..1.0)))
            .collect();
        let span = nz.t_end - nz.t_start;
        times
            .iter()
            .map(|&t| {
                if t < nz.t_start || t >= nz.t_end {
                    return 0.0;
                }
                let env = 0.5 - 0.5 * (std::f64::consts::TAU * (t - nz.t_start) / span).cos();
                let s: f64 = tones.iter().map(|(f, ph, a)| a * (std::f64::consts::TAU * f * t + ph).sin()).sum();
                nz.relative_amplitude * env * s
            })
            .collect()
    });

    let mut r = rng(seed, TAG_CSI_DC);
    let dc: Vec<f64> = spec.csi_gain.iter().map(|_| r.random_range(15.0..35.0)).collect();
    let snr = 10f64.powf(spec.snr_db / 10.0);
    let sigma = spec.csi_gain.iter().map(|g| (g * g * wave_power / snr).sqrt()).collect();
    Ok(CsiPlan { times, wave, nuisance, dc, sigma })
}

fn column_noise(plan: &CsiPlan, seed: u64, c: usize) -> Vec<f64> {
    let sigma = plan.sigma[c];
    if !(sigma > 0.0 && sigma.is_finite()) {
        return vec![0.0; plan.times.len()];
    }
    let mut r = rng(seed, TAG_CSI_NOISE + c as u64);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    (0..plan.times.len()).map(|_| normal.sample(&mut r)).collect()
}

fn column_signal(plan: &CsiPlan, spec: &EventSpec, settings: &SynthSettings, c: usize) -> Vec<f64> {
    let g = spec.csi_gain[c];
    let a = g * settings.attenuation;
    match &plan.nuisance {
        Some(nz) => plan.wave.iter().zip(nz).map(|(w, n)| a * w + g * n).collect(),
        None => plan.wave.iter().map(|w| a * w).collect(),
    }
}

/// Regenerates the separate signal and noise of one column exactly as
/// [`gen_csi`] combines them (before rounding and clamping).
pub fn csi_components(spec: &EventSpec, settings: &SynthSettings, seed: u64, column: usize) -> Result<CsiComponents> {
    let plan = plan_csi(spec, settings, seed)?;
    if column >= spec.csi_gain.len() {
        return Err(SynthError::InvalidSpec(format!("column {column} out of range")));
    }
    Ok(CsiComponents {
        dc: plan.dc[column],
        signal: column_signal(&plan, spec, settings, column),
        noise: column_noise(&plan, seed, column),
    })
}

pub fn gen_csi(spec: &EventSpec, settings: &SynthSettings, seed: u64) -> Result<CsiTrace<f64>> {
    let plan = plan_csi(spec, settings, seed)?;
    let m = spec.csi_gain.len();
    let n = plan.times.len();
    let mut amps = vec![0.0; n * m];
    for c in 0..m {
        let signal = column_signal(&plan, spec, settings, c);
        let noise = column_noise(&plan, seed, c);
        for i in 0..n {
            amps[i * m + c] = round_to((plan.dc[c] + signal[i] + noise[i]).max(0.0), 1e-4);
        }
    }
    Ok(CsiTrace::new(plan.times, amps, m)?)
}

/// Video and CSI of the same activity.
pub fn gen_matched_pair(spec: &EventSpec, seed: u64) -> Result<(KeypointTrace<f64>, CsiTrace<f64>, TrialGroundTruth)> {
    gen_matched_pair_with(spec, &SynthSettings::default(), seed)
}

pub fn gen_matched_pair_with(
    spec: &EventSpec,
    settings: &SynthSettings,
    seed: u64,
) -> Result<(KeypointTrace<f64>, CsiTrace<f64>, TrialGroundTruth)> {
    let video = gen_keypoints(spec, settings, seed)?;
    let csi = gen_csi(spec, settings, seed)?;
    Ok((video, csi, TrialGroundTruth { truth: spec.truth(), label: PairLabel::Matched }))
}

/// A looped video of one activity next to live CSI of another.
pub fn gen_attack_pair(
    video_spec: &EventSpec,
    csi_spec: &EventSpec,
    seed: u64,
) -> Result<(KeypointTrace<f64>, CsiTrace<f64>, TrialGroundTruth)> {
    gen_attack_pair_with(video_spec, csi_spec, &SynthSettings::default(), seed)
}

pub fn gen_attack_pair_with(
    video_spec: &EventSpec,
    csi_spec: &EventSpec,
    settings: &SynthSettings,
    seed: u64,
) -> Result<(KeypointTrace<f64>, CsiTrace<f64>, TrialGroundTruth)> {
    let video = gen_keypoints(video_spec, settings, mix_seed(seed, 0xA77AC4))?;
    let csi = gen_csi(csi_spec, settings, seed)?;
    let degenerate = video_spec == csi_spec;
    if degenerate {
        log::warn!("attack pair built from identical specs is indistinguishable from a matched pair");
    }
    let label = PairLabel::Attack { video: video_spec.truth(), csi: csi_spec.truth(), degenerate };
    Ok((video, csi, TrialGroundTruth { truth: csi_spec.truth(), label }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WallDistance {
    Near,
    Middle,
    Far,
}

impl WallDistance {
    /// Modulation scale after wall and distance loss.
    pub fn attenuation(self) -> f64 {
        match self {
            Self::Near => 0.5,
            Self::Middle => 0.01,
            Self::Far => 0.003,
        }
    }
}

/// CSI of an activity behind a wall: the modulation is attenuated by the
/// receiver's distance class while the noise floor is not.
pub fn gen_wall_scenario(distance: WallDistance, seed: u64) -> CsiTrace<f64> {
    let settings = SynthSettings { attenuation: distance.attenuation(), ..SynthSettings::default() };
    let mut r = rng(seed, 0x3A11);
    let mut spec = EventSpec::new(1.0, 10.0, 30.0);
    spec.csi_gain = (0..90).map(|_| r.random_range(0.5..3.0)).collect();
    gen_csi(&spec, &settings, seed).expect("wall scenario spec is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventType {
    pub name: String,
    pub freq: f64,
    pub keypoint_id: usize,
    pub axis: Axis,
    pub amplitude_px: f64,
}

/// Describes a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusProtocol {
    pub event_types: Vec<EventType>,
    pub trials_per_type: usize,
    pub start_range: [f64; 2],
    pub end_range: [f64; 2],
    pub snr_db: f64,
    pub csi_columns: usize,
    /// Per-column modulation gain is drawn uniformly from this range.
    pub gain_range: [f64; 2],
    pub clock_offset_s: f64,
    /// Probability that a trial also carries a CSI-only disturbance next to the event.
    pub nuisance_prob: f64,
    pub csi_format: CsiFormat,
    pub settings: SynthSettings,
}

impl Default for CorpusProtocol {
    fn default() -> Self {
        let ev = |name: &str, freq, keypoint_id, axis, amplitude_px| EventType {
            name: name.into(),
            freq,
            keypoint_id,
            axis,
            amplitude_px,
        };
        Self {
            event_types: vec![
                ev("E1", 0.6, LEFT_WRIST, Axis::Y, 80.0),
                ev("E2", 1.0, RIGHT_WRIST, Axis::Y, 40.0),
                ev("E3", 1.6, RIGHT_WRIST, Axis::X, 30.0),
            ],
            trials_per_type: 30,
            start_range: [5.0, 15.0],
            end_range: [25.0, 35.0],
            snr_db: 20.0,
            csi_columns: 90,
            gain_range: [0.5, 3.0],
            clock_offset_s: 0.0,
            nuisance_prob: 0.15,
            csi_format: CsiFormat::CsiJsonl,
            settings: SynthSettings::default(),
        }
    }
}

impl CorpusProtocol {
    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(|e| SynthError::InvalidProtocol(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.event_types.is_empty() {
            errs.push("event_types must not be empty".to_string());
        }
        for e in &self.event_types {
            if !(e.freq > 0.0 && e.freq.is_finite()) || e.keypoint_id >= KEYPOINT_COUNT {
                errs.push(format!("event type {}: need freq > 0 and keypoint_id < {KEYPOINT_COUNT}", e.name));
            }
        }
        if self.trials_per_type == 0 {
            errs.push("trials_per_type must be at least 1".into());
        }
        let [s0, s1] = self.start_range;
        let [e0, e1] = self.end_range;
        if !(0.0 <= s0 && s0 <= s1 && s1 < e0 && e0 <= e1 && e1 <= self.settings.duration_s) {
            errs.push(format!(
                "need 0 <= start_range <= end_range <= settings.duration_s ({}), got {:?} / {:?}",
                self.settings.duration_s, self.start_range, self.end_range
            ));
        }
        if self.csi_columns == 0 {
            errs.push("csi_columns must be at least 1".into());
        }
        if !(0.0 <= self.gain_range[0] && self.gain_range[0] <= self.gain_range[1]) {
            errs.push("gain_range must be a non-negative ascending pair".into());
        }
        if !(0.0..=1.0).contains(&self.nuisance_prob) {
            errs.push("nuisance_prob must lie in [0, 1]".into());
        }
        if self.snr_db.is_nan() {
            errs.push("snr_db must be a number".into());
        }
        if !(self.settings.csi_rate > 0.0 && self.settings.video_rate > 0.0) {
            errs.push("settings rates must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SynthError::InvalidProtocol(errs.join("; ")))
        }
    }

    pub fn matched_count(&self) -> usize {
        self.event_types.len() * self.trials_per_type
    }

    /// Attack pairs: every ordered (video trial, CSI trial) with different event types.
    pub fn attack_count(&self) -> usize {
        let n = self.trials_per_type;
        let k = self.event_types.len();
        k * (k - 1) * n * n
    }
}

/// Earliest start of a nuisance burst; leaves a quiet lead-in for the detector baseline.
const NUISANCE_EARLIEST_S: f64 = 4.0;

/// One planned trial of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPlan {
    pub index: usize,
    pub event_type: String,
    pub spec: EventSpec,
    pub seed: u64,
}

/// Expands a protocol into per-trial specs, type-major order.
pub fn plan_trials(protocol: &CorpusProtocol, seed: u64) -> Vec<TrialPlan> {
    let mut plans = Vec::with_capacity(protocol.matched_count());
    for (ti, et) in protocol.event_types.iter().enumerate() {
        for j in 0..protocol.trials_per_type {
            let index = ti * protocol.trials_per_type + j;
            let trial_seed = mix_seed(seed, index as u64 + 1);
            let mut r = rng(trial_seed, 0x7E1A1);
            let t_start = uniform(&mut r, protocol.start_range);
            let t_end = uniform(&mut r, protocol.end_range);
            let csi_gain = (0..protocol.csi_columns).map(|_| uniform(&mut r, protocol.gain_range)).collect();
            let nuisance = (r.random::<f64>() < protocol.nuisance_prob).then(|| {
                let len = r.random_range(1.5..4.0);
                let gap = r.random_range(0.0..0.8);
                let rel = r.random_range(0.5..1.0);
                let before = r.random::<bool>();
                // a disturbance inside the detector's warm-up would hide the whole event
                if before && t_start - gap - len >= NUISANCE_EARLIEST_S {
                    Nuisance { t_start: (t_start - gap - len).max(0.0), t_end: t_start - gap, relative_amplitude: rel }
                } else {
                    let a = t_end + gap;
                    Nuisance { t_start: a, t_end: (a + len).min(protocol.settings.duration_s), relative_amplitude: rel }
                }
            });
            let spec = EventSpec {
                freq: et.freq,
                t_start,
                t_end,
                keypoint_id: et.keypoint_id,
                axis: et.axis,
                amplitude_px: et.amplitude_px,
                csi_gain,
                snr_db: protocol.snr_db,
                clock_offset_s: protocol.clock_offset_s,
                nuisance: nuisance.filter(|n| n.t_end > n.t_start),
            };
            plans.push(TrialPlan { index, event_type: et.name.clone(), spec, seed: trial_seed });
        }
    }
    plans
}

fn uniform(r: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        r.random_range(lo..hi)
    } else {
        lo
    }
}

/// Ordered (video trial, CSI trial) index pairs of different event types.
pub fn attack_pairs(plans: &[TrialPlan]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for v in plans {
        for c in plans {
            if v.event_type != c.event_type {
                out.push((v.index, c.index));
            }
        }
    }
    out
}

pub fn gen_trial(plan: &TrialPlan, protocol: &CorpusProtocol) -> Result<(KeypointTrace<f64>, CsiTrace<f64>, TrialGroundTruth)> {
    gen_matched_pair_with(&plan.spec, &protocol.settings, plan.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifestLabel {
    Matched,
    Attack,
}

/// One line of `manifest.jsonl`. Paths are relative to the corpus directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub video_path: String,
    pub csi_path: String,
    pub label: ManifestLabel,
    pub truth: EventTruth,
    pub seed: u64,
    pub event_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_event_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_truth: Option<EventTruth>,
    #[serde(default)]
    pub degenerate: bool,
}

/// Corpus-level metadata written next to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub seed: u64,
    pub matched: usize,
    pub attack: usize,
    pub pairing: String,
    pub protocol: CorpusProtocol,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CORPUS_INFO_FILE: &str = "corpus.json";

fn trial_paths(index: usize, format: CsiFormat) -> (String, String) {
    let ext = match format {
        CsiFormat::CsiJsonl => "jsonl",
        CsiFormat::CsiCsv => "csv",
    };
    (format!("trials/{index:04}_video.jsonl"), format!("trials/{index:04}_csi.{ext}"))
}

/// Manifest entries for a protocol: matched trials first, then attack pairs.
pub fn manifest_entries(protocol: &CorpusProtocol, plans: &[TrialPlan]) -> Vec<ManifestEntry> {
    let mut entries: Vec<ManifestEntry> = plans
        .iter()
        .map(|p| {
            let (video_path, csi_path) = trial_paths(p.index, protocol.csi_format);
            ManifestEntry {
                id: format!("m{:04}", p.index),
                video_path,
                csi_path,
                label: ManifestLabel::Matched,
                truth: p.spec.truth(),
                seed: p.seed,
                event_type: p.event_type.clone(),
                video_event_type: None,
                video_truth: None,
                degenerate: false,
            }
        })
        .collect();
    for (k, (v, c)) in attack_pairs(plans).into_iter().enumerate() {
        let (vp, cp) = (&plans[v], &plans[c]);
        entries.push(ManifestEntry {
            id: format!("a{k:05}"),
            video_path: trial_paths(v, protocol.csi_format).0,
            csi_path: trial_paths(c, protocol.csi_format).1,
            label: ManifestLabel::Attack,
            truth: cp.spec.truth(),
            seed: cp.seed,
            event_type: cp.event_type.clone(),
            video_event_type: Some(vp.event_type.clone()),
            video_truth: Some(vp.spec.truth()),
            degenerate: vp.spec == cp.spec,
        });
    }
    entries
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Write { path: path.to_path_buf(), source }
}

fn trace_write_err(path: &Path) -> impl FnOnce(TraceError) -> SynthError + '_ {
    move |e| match e {
        TraceError::Io(source) => SynthError::Write { path: path.to_path_buf(), source },
        other => SynthError::Trace(other),
    }
}

/// Writes every trial's traces, `manifest.jsonl` and `corpus.json` under `out_dir`.
pub fn gen_corpus(protocol: &CorpusProtocol, seed: u64, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    protocol.validate()?;
    let trials_dir = out_dir.join("trials");
    fs::create_dir_all(&trials_dir).map_err(write_err(&trials_dir))?;
    let plans = plan_trials(protocol, seed);
    plans.par_iter().try_for_each(|plan| -> Result<()> {
        let (video, csi, _) = gen_trial(plan, protocol)?;
        let (vp, cp) = trial_paths(plan.index, protocol.csi_format);
        let vpath = out_dir.join(vp);
        let f = fs::File::create(&vpath).map_err(write_err(&vpath))?;
        trace::write_keypoint_trace(BufWriter::new(f), &video).map_err(trace_write_err(&vpath))?;
        let cpath = out_dir.join(cp);
        let f = fs::File::create(&cpath).map_err(write_err(&cpath))?;
        trace::write_csi_trace(BufWriter::new(f), &csi, protocol.csi_format).map_err(trace_write_err(&cpath))?;
        Ok(())
    })?;

    let entries = manifest_entries(protocol, &plans);
    let mpath = out_dir.join(MANIFEST_FILE);
    let mut w = BufWriter::new(fs::File::create(&mpath).map_err(write_err(&mpath))?);
    for e in &entries {
        serde_json::to_writer(&mut w, e).map_err(|e| write_err(&mpath)(e.into()))?;
        w.write_all(b"\n").map_err(write_err(&mpath))?;
    }
    w.flush().map_err(write_err(&mpath))?;

    let info = CorpusInfo {
        seed,
        matched: protocol.matched_count(),
        attack: protocol.attack_count(),
        pairing: "attack pairs = every ordered (video trial, csi trial) whose event types differ; \
                  count = sum over type pairs A != B of n_A * n_B"
            .into(),
        protocol: protocol.clone(),
    };
    let ipath = out_dir.join(CORPUS_INFO_FILE);
    let text = serde_json::to_string_pretty(&info).expect("serializable");
    fs::write(&ipath, text + "\n").map_err(write_err(&ipath))?;
    Ok(entries)
}
