use super::{PreprocessError, Result};
use crate::scalar::Scalar;
use crate::spectral::{band_energy_with, fft_half_magnitudes, RealDft};
use crate::trace::{Axis, SeriesOrigin, UniformSeries};

/// The chosen series plus why it won.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection<T> {
    pub series: UniformSeries<T>,
    /// Position of the winner in the candidate list.
    pub index: usize,
    pub score: T,
    /// Every candidate scored zero; the winner is only the tie-break.
    pub zero_energy: bool,
}

/// Tie-break key: keypoints by id then x before y, subcarriers by column,
/// anything else by list position.
fn rank(origin: &SeriesOrigin, pos: usize) -> (u8, usize, u8, usize) {
    match origin {
        SeriesOrigin::Keypoint { id, axis } => (0, *id, (*axis == Axis::Y) as u8, pos),
        SeriesOrigin::Subcarrier(c) => (1, *c, 0, pos),
        SeriesOrigin::Label(_) => (2, 0, 0, pos),
    }
}

fn argmax_by<T: Scalar>(candidates: &[UniformSeries<T>], mut score: impl FnMut(&UniformSeries<T>) -> Result<T>) -> Result<Selection<T>> {
    if candidates.is_empty() {
        return Err(PreprocessError::NoCandidates);
    }
    let mut best: Option<(usize, T)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let s = score(c)?;
        let better = match best {
            None => true,
            Some((j, bs)) => s > bs || (s == bs && rank(c.origin(), i) < rank(candidates[j].origin(), j)),
        };
        if better {
            best = Some((i, s));
        }
    }
    let (index, score) = best.expect("non-empty");
    let zero_energy = score <= T::zero();
    Ok(Selection { series: candidates[index].clone(), index, score, zero_energy })
}

/// Picks the candidate whose largest non-DC DFT magnitude is greatest.
pub fn select_video_series<T: Scalar>(candidates: &[UniformSeries<T>]) -> Result<Selection<T>> {
    let sel = argmax_by(candidates, |c| {
        let mags = fft_half_magnitudes(c.samples())?;
        Ok(mags.into_iter().fold(T::zero(), T::max))
    })?;
    if sel.zero_energy {
        log::warn!("all video candidates have zero spectral energy; using {}", sel.series.origin());
    }
    Ok(sel)
}

/// Picks the (denoised) subcarrier column with the most spectral energy in `band`.
pub fn select_csi_subcarrier<T: Scalar>(columns: &[UniformSeries<T>], band: (f64, f64)) -> Result<Selection<T>> {
    let mut dft: Option<RealDft<T>> = None;
    let sel = argmax_by(columns, |c| {
        if c.len() < 2 {
            return Ok(T::zero());
        }
        let dft = match &mut dft {
            Some(d) if d.len() == c.len() => d,
            slot => slot.insert(RealDft::new(c.len())),
        };
        Ok(band_energy_with(dft, c.samples(), c.rate(), band.0, band.1))
    })?;
    if sel.zero_energy {
        log::warn!("all CSI columns have zero in-band energy; using {}", sel.series.origin());
    }
    Ok(sel)
}
