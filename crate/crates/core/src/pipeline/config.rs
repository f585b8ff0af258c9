use serde::{Deserialize, Serialize};

use crate::preprocess::DenoiseConfig;
use crate::spectral::PeakSearch;

/// Per-attribute tolerances for the similarity score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Start-time tolerance, seconds.
    pub t_start: f64,
    /// End-time tolerance, seconds.
    pub t_end: f64,
    /// Prominent-frequency tolerance, Hz.
    pub t_freq: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { t_start: 2.5, t_end: 2.0, t_freq: 0.25 }
    }
}

/// CSI variance-trigger event detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Span of the rolling variance of motion energy.
    pub variance_window_s: f64,
    /// Span of the trailing moving average the variance is compared to.
    pub baseline_s: f64,
    /// Trigger factor over the moving average.
    pub k: f64,
    /// Time the variance must stay below the trigger before an event closes.
    pub hysteresis_s: f64,
    /// Shorter events are discarded.
    pub min_event_s: f64,
    /// Variances below this fraction of the trace maximum never trigger.
    pub floor_ratio: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { variance_window_s: 0.5, baseline_s: 3.0, k: 10.0, hysteresis_s: 1.0, min_event_s: 2.0, floor_ratio: 1e-9 }
    }
}

/// Video-side onset/offset search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoBoundsConfig {
    /// Energy must reach this multiple of its moving average.
    pub energy_ratio: f64,
    pub baseline_s: f64,
    /// The CSI event window is widened by this much on each side.
    pub pad_s: f64,
    /// Minimum moving-average history before a crossing counts.
    pub min_history_s: f64,
    /// The mean energy over this span after an onset (before an offset) must
    /// also clear the ratio, so a lone jitter window cannot open an event.
    pub confirm_s: f64,
}

impl Default for VideoBoundsConfig {
    fn default() -> Self {
        Self { energy_ratio: 10.0, baseline_s: 3.0, pad_s: 5.0, min_history_s: 1.0, confirm_s: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandConfig {
    pub low: f64,
    pub high: f64,
    /// The CSI frequency search stops this far above the video frequency.
    pub csi_headroom: f64,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self { low: 0.3, high: 10.0, csi_headroom: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakConfig {
    pub min_duration_s: f64,
    pub max_bin_width: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        let p = PeakSearch::default();
        Self { min_duration_s: p.min_duration_s, max_bin_width: p.max_bin_width }
    }
}

impl From<PeakConfig> for PeakSearch {
    fn from(p: PeakConfig) -> Self {
        Self { min_duration_s: p.min_duration_s, max_bin_width: p.max_bin_width }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub csi: f64,
    pub video: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self { csi: 1000.0, video: 30.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionConfig {
    /// Mean per-event score below which a feed is declared looped.
    pub threshold: f64,
    /// When set, commands that calibrate use this target instead of `threshold`.
    pub target_fpr: Option<f64>,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self { threshold: 2.0, target_fpr: None }
    }
}

/// Everything the detection pipeline reads. Loaded once, read-only after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub thresholds: Thresholds,
    pub detector: DetectorConfig,
    pub video: VideoBoundsConfig,
    pub denoise: DenoiseConfig,
    /// Motion-energy window length.
    pub energy_window_s: f64,
    pub band: BandConfig,
    pub peak: PeakConfig,
    pub rates: Rates,
    pub decision: DecisionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            detector: DetectorConfig::default(),
            video: VideoBoundsConfig::default(),
            denoise: DenoiseConfig::default(),
            energy_window_s: 0.1,
            band: BandConfig::default(),
            peak: PeakConfig::default(),
            rates: Rates::default(),
            decision: DecisionConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, Vec<String>> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| vec![e.to_string()])?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Lists every violated constraint.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be a positive number, got {v}"));
            }
        };
        positive("thresholds.t_start", self.thresholds.t_start);
        positive("thresholds.t_end", self.thresholds.t_end);
        positive("thresholds.t_freq", self.thresholds.t_freq);
        positive("detector.variance_window_s", self.detector.variance_window_s);
        positive("detector.baseline_s", self.detector.baseline_s);
        positive("detector.k", self.detector.k);
        positive("detector.hysteresis_s", self.detector.hysteresis_s);
        positive("video.energy_ratio", self.video.energy_ratio);
        positive("video.baseline_s", self.video.baseline_s);
        positive("energy_window_s", self.energy_window_s);
        positive("band.low", self.band.low);
        positive("band.high", self.band.high);
        positive("peak.min_duration_s", self.peak.min_duration_s);
        positive("peak.max_bin_width", self.peak.max_bin_width);
        positive("rates.csi", self.rates.csi);
        positive("rates.video", self.rates.video);
        if self.band.low >= self.band.high {
            errs.push(format!("band.low ({}) must be below band.high ({})", self.band.low, self.band.high));
        }
        if self.band.high > self.rates.video / 2.0 {
            errs.push(format!("band.high ({}) exceeds the video Nyquist rate", self.band.high));
        }
        if self.band.csi_headroom < 0.0 {
            errs.push("band.csi_headroom must be non-negative".into());
        }
        if self.video.pad_s < 0.0 || self.video.min_history_s < 0.0 || self.video.confirm_s < 0.0 || self.detector.min_event_s < 0.0 {
            errs.push("pad, history and minimum-event durations must be non-negative".into());
        }
        if self.denoise.levels == 0 {
            errs.push("denoise.levels must be at least 1".into());
        }
        if let Some(f) = self.decision.target_fpr {
            if !(f > 0.0 && f < 1.0) {
                errs.push(format!("decision.target_fpr must lie in (0, 1), got {f}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}
