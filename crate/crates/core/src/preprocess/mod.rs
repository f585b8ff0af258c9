//! Turning raw traces into the single analysis series per modality.

mod dwt;
mod keypoints;
mod select;

pub use dwt::{denoise_columns, dwt_denoise, DenoiseConfig, Decomposition, ThresholdRule, Wavelet};
pub use keypoints::{keypoint_series, keypoint_series_at};
pub use select::{select_csi_subcarrier, select_video_series, Selection};

use thiserror::Error;

use crate::spectral::SpectralError;
use crate::trace::TraceError;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("series of {len} samples is too short for {levels} decomposition levels")]
    TooShort { len: usize, levels: usize },
    #[error("decomposition levels must be at least 1")]
    InvalidLevels,
    #[error("no keypoint is present in at least half of the frames")]
    NoUsableSeries,
    #[error("no candidate series to select from")]
    NoCandidates,
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

pub type Result<T, E = PreprocessError> = std::result::Result<T, E>;
