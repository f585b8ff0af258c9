use super::{PreprocessError, Result};
use crate::scalar::Scalar;
use crate::spectral::centre;
use crate::trace::{Axis, KeypointTrace, ResampleGrid, SeriesOrigin, UniformSeries, KEYPOINT_COUNT};

/// Fills missing entries by linear interpolation between the nearest present
/// neighbours, holding the nearest value at either end.
fn fill_gaps<T: Scalar>(values: &mut [T], present: &[bool]) {
    let idx: Vec<usize> = (0..values.len()).filter(|&i| present[i]).collect();
    let (Some(&first), Some(&last)) = (idx.first(), idx.last()) else {
        return;
    };
    for i in 0..first {
        values[i] = values[first];
    }
    for i in last + 1..values.len() {
        values[i] = values[last];
    }
    for pair in idx.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (values[a], values[b]);
        for i in a + 1..b {
            let w = T::from_usize_lossy(i - a) / T::from_usize_lossy(b - a);
            values[i] = va + (vb - va) * w;
        }
    }
}

/// Candidate series at the trace's own frame rate.
pub fn keypoint_series<T: Scalar>(trace: &KeypointTrace<T>) -> Result<Vec<UniformSeries<T>>> {
    keypoint_series_at(trace, trace.frame_rate())
}

/// One mean-subtracted series per keypoint axis, resampled to `rate`.
///
/// Keypoints missing (confidence 0) in more than half of the frames are
/// dropped; shorter gaps are linearly interpolated.
pub fn keypoint_series_at<T: Scalar>(trace: &KeypointTrace<T>, rate: f64) -> Result<Vec<UniformSeries<T>>> {
    let grid = ResampleGrid::new(trace.frame_times(), rate)?;
    let frames = trace.frames();
    let mut out = Vec::with_capacity(2 * KEYPOINT_COUNT);
    for id in 0..KEYPOINT_COUNT {
        let present: Vec<bool> = frames.iter().map(|f| !f[id].is_missing()).collect();
        let missing = present.iter().filter(|p| !**p).count();
        if 2 * missing > frames.len() {
            continue;
        }
        for axis in [Axis::X, Axis::Y] {
            let mut values: Vec<T> = frames
                .iter()
                .map(|f| match axis {
                    Axis::X => f[id].x,
                    Axis::Y => f[id].y,
                })
                .collect();
            fill_gaps(&mut values, &present);
            let samples = centre(&grid.apply(&values));
            out.push(UniformSeries::from_parts(rate, grid.t0, samples, SeriesOrigin::Keypoint { id, axis }));
        }
    }
    if out.is_empty() {
        return Err(PreprocessError::NoUsableSeries);
    }
    Ok(out)
}
