use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::detect::{video_bounds_from_energy, Bounds, EventWindow};
use super::Result;
use crate::scalar::Scalar;
use crate::spectral::{bandpass, motion_energy_series, prominent_frequency_with, MotionEnergySeries, PeakSearch, SpectralError};
use crate::trace::UniformSeries;

/// Start, end and prominent frequency of one event in one modality.
/// `None` fields are missing-attribute markers and always score 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeTriple {
    pub bounds: Option<Bounds>,
    pub f: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributePair {
    pub video: AttributeTriple,
    pub csi: AttributeTriple,
}

/// Peak search failures that mean "no usable frequency" rather than a bad call.
fn peak_marker<T>(r: std::result::Result<T, SpectralError>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(SpectralError::NoPeak | SpectralError::SegmentTooShort { .. } | SpectralError::EmptyBand { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Upper edge of the CSI frequency search given the video frequency.
pub(crate) fn csi_band_high(cfg: &PipelineConfig, f_video: Option<f64>) -> f64 {
    f_video.map_or(cfg.band.high, |f| f + cfg.band.csi_headroom)
}

/// Prominent frequency of the bandpassed CSI segment covering `window`.
pub(crate) fn csi_frequency<T: Scalar>(
    csi: &UniformSeries<T>,
    window: &EventWindow,
    high: f64,
    cfg: &PipelineConfig,
) -> Result<Option<f64>> {
    let segment = csi.slice_time(window.start_s, window.end_s);
    let search: PeakSearch = cfg.peak.into();
    if segment.duration() + 1e-9 < search.min_duration_s {
        return Ok(None);
    }
    let filtered = bandpass(&segment, cfg.band.low, high)?;
    Ok(peak_marker(prominent_frequency_with(&filtered, (cfg.band.low, high), &search))?.map(|p| p.frequency))
}

/// Video bounds and frequency near one CSI event, from a precomputed energy series.
pub(crate) fn video_attributes<T: Scalar>(
    video: &UniformSeries<T>,
    video_energy: &MotionEnergySeries<T>,
    window: &EventWindow,
    cfg: &PipelineConfig,
) -> Result<AttributeTriple> {
    let bounds = video_bounds_from_energy(video_energy, window, &cfg.video);
    let (a, b) = bounds.map_or((window.start_s, window.end_s), |b| (b.tau_start, b.tau_end));
    let segment = video.slice_time(a, b);
    let f = peak_marker(prominent_frequency_with(&segment, (cfg.band.low, cfg.band.high), &cfg.peak.into()))?;
    Ok(AttributeTriple { bounds, f: f.map(|p| p.frequency) })
}

/// Extracts both attribute triples for one CSI-detected event.
///
/// The video triple comes from the energy-ratio bounds search and the video
/// spectrum. The CSI triple takes the event window as its bounds and searches
/// the bandpassed CSI segment up to the video frequency plus headroom.
pub fn extract_attributes<T: Scalar>(
    video: &UniformSeries<T>,
    csi: &UniformSeries<T>,
    window: &EventWindow,
    cfg: &PipelineConfig,
) -> Result<AttributePair> {
    let energy = motion_energy_series(video, cfg.energy_window_s)?;
    let v = video_attributes(video, &energy, window, cfg)?;
    let f_c = csi_frequency(csi, window, csi_band_high(cfg, v.f), cfg)?;
    Ok(AttributePair {
        video: v,
        csi: AttributeTriple { bounds: Some(Bounds { tau_start: window.start_s, tau_end: window.end_s }), f: f_c },
    })
}
