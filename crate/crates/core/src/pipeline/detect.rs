//! Event detection on motion-energy series.
//!
//! The CSI detector watches the rolling variance of motion energy and opens
//! an event when it exceeds `k` times its trailing moving average. The
//! average is frozen while an event is open, and the event closes once the
//! variance has stayed under the frozen trigger level for the hysteresis time.
//!
//! The video detector looks for the first energy window at least
//! `energy_ratio` times the average of the preceding windows (onset) and the
//! last window at least that multiple of the following windows (offset).

use serde::{Deserialize, Serialize};

use super::config::{DetectorConfig, VideoBoundsConfig};
use super::{PipelineError, Result};
use crate::scalar::Scalar;
use crate::spectral::{motion_energy_series, MotionEnergySeries};
use crate::trace::UniformSeries;

/// A CSI-detected activity interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventWindow {
    pub start_s: f64,
    pub end_s: f64,
}

impl EventWindow {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Start and end times of an event in one modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub tau_start: f64,
    pub tau_end: f64,
}

fn samples_for(seconds: f64, window_s: f64) -> usize {
    (seconds / window_s).round() as usize
}

fn population_variance<T: Scalar>(x: &[T]) -> T {
    let n = T::from_usize_lossy(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n
}

fn mean<T: Scalar>(x: &[T]) -> T {
    x.iter().copied().sum::<T>() / T::from_usize_lossy(x.len())
}

/// Opens and closes CSI events from the rolling variance of motion energy.
pub fn detect_events_csi<T: Scalar>(energy: &MotionEnergySeries<T>, cfg: &DetectorConfig) -> Result<Vec<EventWindow>> {
    let ws = energy.window_s;
    let var_len = samples_for(cfg.variance_window_s, ws).max(2);
    let base_len = samples_for(cfg.baseline_s, ws).max(1);
    let hysteresis = samples_for(cfg.hysteresis_s, ws).max(1);
    let e = &energy.values;
    if e.len() < var_len + base_len {
        return Err(PipelineError::EnergyTooShort { needed: var_len + base_len, got: e.len() });
    }

    // variance[i] covers e[i .. i + var_len], so it is "current" at energy index i + var_len - 1
    let variance: Vec<T> = e.windows(var_len).map(population_variance).collect();
    let peak = variance.iter().copied().fold(T::zero(), T::max);
    let floor = peak * T::lit(cfg.floor_ratio);
    let k = T::lit(cfg.k);
    let to_energy_idx = |vi: usize| vi + var_len - 1;

    let mut events = Vec::new();
    let mut open: Option<(usize, T, usize)> = None; // (start energy idx, trigger level, last active variance idx)
    let mut below = 0usize;
    let close = |start: usize, last_active: usize, events: &mut Vec<EventWindow>| {
        // the last active variance window still holds the final event sample at its left edge
        let end_idx = last_active + 1;
        let w = EventWindow { start_s: energy.time_of(start), end_s: energy.time_of(end_idx) };
        if w.duration() + 1e-9 >= cfg.min_event_s {
            events.push(w);
        }
    };

    for vi in base_len..variance.len() {
        let v = variance[vi];
        match open {
            None => {
                let baseline = mean(&variance[vi - base_len..vi]);
                let level = (k * baseline).max(floor);
                if v > level {
                    open = Some((to_energy_idx(vi), level, vi));
                    below = 0;
                }
            }
            Some((start, level, _)) => {
                if v > level {
                    open = Some((start, level, vi));
                    below = 0;
                } else {
                    below += 1;
                    if below >= hysteresis {
                        let (start, _, last) = open.take().expect("open");
                        close(start, last, &mut events);
                    }
                }
            }
        }
    }
    if let Some((start, _, last)) = open {
        close(start, last, &mut events);
    }
    Ok(events)
}

/// Finds the video-side onset and offset near a CSI event.
///
/// Returns `Ok(None)` (the no-event marker) when no onset/offset pair is found
/// inside the hint widened by `cfg.pad_s` on both sides.
pub fn detect_bounds_video<T: Scalar>(
    series: &UniformSeries<T>,
    hint: &EventWindow,
    cfg: &VideoBoundsConfig,
    window_s: f64,
) -> Result<Option<Bounds>> {
    let energy = motion_energy_series(series, window_s)?;
    Ok(video_bounds_from_energy(&energy, hint, cfg))
}

pub(crate) fn video_bounds_from_energy<T: Scalar>(
    energy: &MotionEnergySeries<T>,
    hint: &EventWindow,
    cfg: &VideoBoundsConfig,
) -> Option<Bounds> {
    let ws = energy.window_s;
    let e = &energy.values;
    let n = e.len();
    let base_len = samples_for(cfg.baseline_s, ws).max(1);
    let history = samples_for(cfg.min_history_s, ws).max(1);

    let lo_t = hint.start_s - cfg.pad_s;
    let hi_t = hint.end_s + cfg.pad_s;
    let first = (((lo_t - energy.t0) / ws) - 1e-9).ceil().max(0.0) as usize;
    let last = ((((hi_t - energy.t0) / ws) + 1e-9).floor().max(0.0) as usize).min(n);
    if first >= last {
        return None;
    }
    let region = &e[first..last];
    let floor = region.iter().copied().fold(T::zero(), T::max) * T::lit(1e-9);
    let ratio = T::lit(cfg.energy_ratio);
    let confirm = samples_for(cfg.confirm_s, ws).max(1);
    let crosses = |i: usize, run: &[T], reference: &[T]| {
        let level = ratio * mean(reference);
        e[i] > floor && e[i] >= level && mean(run) >= level
    };

    let onset = (first.max(history)..last)
        .find(|&i| crosses(i, &e[i..(i + confirm).min(n)], &e[i.saturating_sub(base_len)..i]))?;
    let offset = (first..last.min(n.saturating_sub(history) + 1))
        .rev()
        .find(|&i| crosses(i, &e[(i + 1).saturating_sub(confirm)..=i], &e[i + 1..(i + 1 + base_len).min(n)]))?;
    if offset < onset {
        return None;
    }
    Some(Bounds { tau_start: energy.time_of(onset), tau_end: energy.time_of(offset + 1) })
}
