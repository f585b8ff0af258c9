//! End-to-end detection: CSI events, per-event attributes from both
//! modalities, similarity scores and the multi-event decision.

mod attributes;
mod config;
mod detect;
mod score;

pub use attributes::{extract_attributes, AttributePair, AttributeTriple};
pub use config::{BandConfig, DecisionConfig, DetectorConfig, PeakConfig, PipelineConfig, Rates, Thresholds, VideoBoundsConfig};
pub use detect::{detect_bounds_video, detect_events_csi, Bounds, EventWindow};
pub use score::{calibrate_decision_threshold, compare, decide, deltas, Calibration, Decision, EventVerdict, Verdict};

use serde::Serialize;
use thiserror::Error;

use crate::preprocess::{self, PreprocessError};
use crate::scalar::Scalar;
use crate::spectral::{motion_energy_series, MotionEnergySeries, SpectralError};
use crate::trace::{CsiTrace, KeypointTrace, SeriesOrigin, TraceError, UniformSeries};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("energy series has {got} samples, need at least {needed}")]
    EnergyTooShort { needed: usize, got: usize },
    #[error("no similarity scores to decide on")]
    NoScores,
    #[error("target false-positive rate must lie in (0, 1), got {0}")]
    TargetFpr(f64),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// CSI-side products of one trace: the selected denoised subcarrier, its
/// motion energy and the detected events.
#[derive(Debug, Clone)]
pub struct CsiFeatures<T> {
    pub series: UniformSeries<T>,
    pub subcarrier: usize,
    pub energy: MotionEnergySeries<T>,
    pub events: Vec<EventWindow>,
}

/// Video-side products of one trace: the selected keypoint series and its
/// motion energy.
#[derive(Debug, Clone)]
pub struct VideoFeatures<T> {
    pub series: UniformSeries<T>,
    pub energy: MotionEnergySeries<T>,
    pub zero_energy: bool,
}

impl<T: Scalar> VideoFeatures<T> {
    pub fn origin(&self) -> &SeriesOrigin {
        self.series.origin()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EventReport {
    pub window: EventWindow,
    pub attributes: AttributePair,
    pub verdict: EventVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub csi_subcarrier: usize,
    pub video_series: SeriesOrigin,
    pub events: Vec<EventReport>,
    /// `None` when the CSI shows no event to compare against.
    pub decision: Option<Decision>,
    pub warnings: Vec<String>,
}

/// The detection pipeline with a fixed configuration.
#[derive(Debug, Clone, Default)]
pub struct Pipeline {
    cfg: PipelineConfig,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        Self { cfg }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Resample, denoise every column, pick the subcarrier, detect events.
    pub fn csi_features<T: Scalar>(&self, trace: &CsiTrace<T>) -> Result<CsiFeatures<T>> {
        let columns = trace.uniform_columns(self.cfg.rates.csi)?;
        let denoised = preprocess::denoise_columns(&columns, &self.cfg.denoise)?;
        drop(columns);
        let sel = preprocess::select_csi_subcarrier(&denoised, (self.cfg.band.low, self.cfg.band.high))?;
        let energy = motion_energy_series(&sel.series, self.cfg.energy_window_s)?;
        let events = detect_events_csi(&energy, &self.cfg.detector)?;
        Ok(CsiFeatures { series: sel.series, subcarrier: sel.index, energy, events })
    }

    pub fn video_features<T: Scalar>(&self, trace: &KeypointTrace<T>) -> Result<VideoFeatures<T>> {
        let candidates = preprocess::keypoint_series_at(trace, self.cfg.rates.video)?;
        let sel = preprocess::select_video_series(&candidates)?;
        let energy = motion_energy_series(&sel.series, self.cfg.energy_window_s)?;
        Ok(VideoFeatures { series: sel.series, energy, zero_energy: sel.zero_energy })
    }

    /// Video triple for one CSI event.
    pub fn video_attributes<T: Scalar>(&self, video: &VideoFeatures<T>, window: &EventWindow) -> Result<AttributeTriple> {
        attributes::video_attributes(&video.series, &video.energy, window, &self.cfg)
    }

    /// Upper edge of the CSI frequency search for a given video frequency.
    pub fn csi_band_high(&self, f_video: Option<f64>) -> f64 {
        attributes::csi_band_high(&self.cfg, f_video)
    }

    /// CSI prominent frequency within `[band.low, high]` over `window`.
    pub fn csi_frequency<T: Scalar>(&self, csi: &CsiFeatures<T>, window: &EventWindow, high: f64) -> Result<Option<f64>> {
        attributes::csi_frequency(&csi.series, window, high, &self.cfg)
    }

    pub fn score_event<T: Scalar>(&self, video: &VideoFeatures<T>, csi: &CsiFeatures<T>, window: &EventWindow) -> Result<EventReport> {
        let v = self.video_attributes(video, window)?;
        let f_c = self.csi_frequency(csi, window, self.csi_band_high(v.f))?;
        let attributes = AttributePair {
            video: v,
            csi: AttributeTriple { bounds: Some(Bounds { tau_start: window.start_s, tau_end: window.end_s }), f: f_c },
        };
        Ok(EventReport { window: *window, attributes, verdict: compare(&attributes, &self.cfg.thresholds) })
    }

    pub fn analyze_features<T: Scalar>(&self, video: &VideoFeatures<T>, csi: &CsiFeatures<T>) -> Result<Analysis> {
        let events = csi.events.iter().map(|w| self.score_event(video, csi, w)).collect::<Result<Vec<_>>>()?;
        let mut warnings = Vec::new();
        if video.zero_energy {
            warnings.push("video shows no motion in any keypoint".to_string());
        }
        for (i, e) in events.iter().enumerate() {
            if e.attributes.video.bounds.is_none() {
                warnings.push(format!("event {i}: CSI activity with no matching video activity"));
            }
        }
        let scores: Vec<u8> = events.iter().map(|e| e.verdict.score).collect();
        let decision = if scores.is_empty() {
            warnings.push("no CSI events detected; nothing to compare".to_string());
            None
        } else {
            Some(decide(&scores, self.cfg.decision.threshold)?)
        };
        Ok(Analysis {
            csi_subcarrier: csi.subcarrier,
            video_series: video.origin().clone(),
            events,
            decision,
            warnings,
        })
    }

    pub fn analyze<T: Scalar>(&self, video: &KeypointTrace<T>, csi: &CsiTrace<T>) -> Result<Analysis> {
        let v = self.video_features(video)?;
        let c = self.csi_features(csi)?;
        self.analyze_features(&v, &c)
    }
}
