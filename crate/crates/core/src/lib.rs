//! Detection of camera-looping attacks by checking that the motion seen by a
//! camera also shows up in Wi-Fi channel state information (CSI) recorded in
//! the same room.
//!
//! Both modalities are reduced to a single motion series, cut into events by
//! the CSI detector and summarised per event as (start, end, frequency).
//! Events whose attributes agree across modalities score high; a recording
//! whose mean score falls below a threshold is reported as looped.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for the common cases.

pub mod eval;
pub mod pipeline;
pub mod preprocess;
mod scalar;
pub mod spectral;
pub mod synth;
pub mod trace;

pub use pipeline::{
    calibrate_decision_threshold, compare, decide, detect_bounds_video, detect_events_csi, extract_attributes, Analysis,
    AttributePair, AttributeTriple, Bounds, Calibration, Decision, EventVerdict, EventWindow, Pipeline, PipelineConfig,
    PipelineError, Thresholds, Verdict,
};
pub use preprocess::{dwt_denoise, select_csi_subcarrier, select_video_series, DenoiseConfig};
pub use scalar::Scalar;
pub use spectral::{motion_energy, prominent_frequency, MotionEnergySeries, SpectralPeak};
pub use trace::{parse_csi_trace, parse_keypoint_trace, CsiFormat, CsiTrace, KeypointTrace, UniformSeries};

pub type CsiTrace64 = CsiTrace<f64>;
pub type CsiTrace32 = CsiTrace<f32>;
pub type KeypointTrace64 = KeypointTrace<f64>;
pub type KeypointTrace32 = KeypointTrace<f32>;
pub type UniformSeries64 = UniformSeries<f64>;
pub type UniformSeries32 = UniformSeries<f32>;
pub type CsiFeatures64 = pipeline::CsiFeatures<f64>;
pub type VideoFeatures64 = pipeline::VideoFeatures<f64>;
