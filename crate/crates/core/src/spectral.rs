//! Frequency-domain kernels.
//!
//! All transforms use the unnormalized forward DFT `X_k = Σ x_n e^{-2πikn/N}`.
//! Windows are rectangular. Before any transform the first sample is
//! subtracted and then the mean, which leaves every non-DC bin unchanged but
//! makes constant windows map to exact zeros.

use std::sync::Arc;

use realfft::{RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::trace::{SeriesOrigin, UniformSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("window of {got} samples is too short, need at least {needed}")]
    TooShort { needed: usize, got: usize },
    #[error("segment lasts {duration:.3} s, need at least {needed:.3} s")]
    SegmentTooShort { duration: f64, needed: f64 },
    #[error("band [{low}, {high}] Hz is invalid for a {rate} Hz series")]
    InvalidBand { low: f64, high: f64, rate: f64 },
    #[error("band [{low}, {high}] Hz contains no frequency bins")]
    EmptyBand { low: f64, high: f64 },
    #[error("segment has no spectral peak (zero energy)")]
    NoPeak,
}

pub type Result<T, E = SpectralError> = std::result::Result<T, E>;

/// Per-window motion energy of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionEnergySeries<T> {
    /// Actual window length in seconds (samples per window / sample rate).
    pub window_s: f64,
    pub values: Vec<T>,
    pub t0: f64,
    pub source: SeriesOrigin,
}

impl<T> MotionEnergySeries<T> {
    /// Energy samples per second.
    pub fn rate(&self) -> f64 {
        1.0 / self.window_s
    }

    /// Start time of window `i`.
    pub fn time_of(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.window_s
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPeak<T> {
    pub frequency: f64,
    pub magnitude: T,
    pub bin_width: f64,
}

/// Resolution requirements for [`prominent_frequency_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSearch {
    pub min_duration_s: f64,
    pub max_bin_width: f64,
}

impl Default for PeakSearch {
    fn default() -> Self {
        Self { min_duration_s: 4.0, max_bin_width: 0.05 }
    }
}

/// Forward real-input transform of a fixed size, reusable across windows.
/// Yields bins `0..=len/2`.
pub(crate) struct RealDft<T: Scalar> {
    fft: Arc<dyn RealToComplex<T>>,
    input: Vec<T>,
    output: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Scalar> RealDft<T> {
    pub(crate) fn new(len: usize) -> Self {
        let fft = RealFftPlanner::new().plan_fft_forward(len);
        Self { input: fft.make_input_vec(), output: fft.make_output_vec(), scratch: fft.make_scratch_vec(), fft }
    }

    pub(crate) fn len(&self) -> usize {
        self.input.len()
    }

    /// Transforms the centred window, zero-padded to the planned size.
    pub(crate) fn run(&mut self, window: &[T]) -> &[Complex<T>] {
        let centred = centre(window);
        for (slot, x) in self.input.iter_mut().zip(centred.iter().copied().chain(std::iter::repeat(T::zero()))) {
            *slot = x;
        }
        self.fft
            .process_with_scratch(&mut self.input, &mut self.output, &mut self.scratch)
            .expect("buffers sized by the plan");
        &self.output
    }
}

/// Subtracts the first sample, then the mean of the result.
pub(crate) fn centre<T: Scalar>(x: &[T]) -> Vec<T> {
    let Some(&first) = x.first() else {
        return Vec::new();
    };
    let shifted: Vec<T> = x.iter().map(|&v| v - first).collect();
    let mean = shifted.iter().copied().sum::<T>() / T::from_usize_lossy(shifted.len());
    shifted.into_iter().map(|v| v - mean).collect()
}

fn half_energy<T: Scalar>(spectrum: &[Complex<T>], n: usize) -> T {
    spectrum[1..=n / 2].iter().map(|c| c.norm_sqr()).sum()
}

/// Magnitudes of DFT bins `1..=n/2` (DC dropped).
pub fn fft_half_magnitudes<T: Scalar>(window: &[T]) -> Result<Vec<T>> {
    if window.len() < 2 {
        return Err(SpectralError::TooShort { needed: 2, got: window.len() });
    }
    let mut dft = RealDft::new(window.len());
    Ok(dft.run(window)[1..=window.len() / 2].iter().map(|c| c.norm()).collect())
}

/// Motion energy of one window: the sum of squared half-spectrum magnitudes.
pub fn motion_energy<T: Scalar>(window: &[T]) -> Result<T> {
    if window.len() < 2 {
        return Err(SpectralError::TooShort { needed: 2, got: window.len() });
    }
    let mut dft = RealDft::new(window.len());
    let spectrum = dft.run(window);
    Ok(half_energy(spectrum, window.len()))
}

/// Motion energy over consecutive non-overlapping windows of `window_s`
/// seconds. A trailing partial window is discarded.
pub fn motion_energy_series<T: Scalar>(series: &UniformSeries<T>, window_s: f64) -> Result<MotionEnergySeries<T>> {
    let n = (window_s * series.rate()).round() as usize;
    if n < 2 {
        return Err(SpectralError::TooShort { needed: 2, got: n });
    }
    if series.len() < n {
        return Err(SpectralError::TooShort { needed: n, got: series.len() });
    }
    let mut dft = RealDft::new(n);
    let values = series
        .samples()
        .chunks_exact(n)
        .map(|w| half_energy(dft.run(w), n))
        .collect();
    Ok(MotionEnergySeries {
        window_s: n as f64 / series.rate(),
        values,
        t0: series.t0(),
        source: series.origin().clone(),
    })
}

/// Dominant frequency of `segment` within `band`, using default resolution.
pub fn prominent_frequency<T: Scalar>(segment: &UniformSeries<T>, band: (f64, f64)) -> Result<SpectralPeak<T>> {
    prominent_frequency_with(segment, band, &PeakSearch::default())
}

/// Zero-pads to a power of two with bin width at most `search.max_bin_width`
/// and returns the largest in-band magnitude. Ties go to the lower frequency.
pub fn prominent_frequency_with<T: Scalar>(
    segment: &UniformSeries<T>,
    (low, high): (f64, f64),
    search: &PeakSearch,
) -> Result<SpectralPeak<T>> {
    let rate = segment.rate();
    let n = segment.len();
    if segment.duration() + 1e-9 < search.min_duration_s || n < 2 {
        return Err(SpectralError::SegmentTooShort { duration: segment.duration(), needed: search.min_duration_s });
    }
    if !(low > 0.0 && low < high && high <= rate / 2.0) {
        return Err(SpectralError::InvalidBand { low, high, rate });
    }
    let min_len = (rate / search.max_bin_width).ceil() as usize;
    let nfft = n.max(min_len).next_power_of_two();
    let bin_width = rate / nfft as f64;
    let first = (low / bin_width - 1e-9).ceil().max(1.0) as usize;
    let last = ((high / bin_width + 1e-9).floor() as usize).min(nfft / 2);
    if first > last {
        return Err(SpectralError::EmptyBand { low, high });
    }
    let mut dft = RealDft::new(nfft);
    let spectrum = dft.run(segment.samples());
    let mut best = (first, T::zero());
    for (k, c) in spectrum.iter().enumerate().take(last + 1).skip(first) {
        let m = c.norm();
        if m > best.1 {
            best = (k, m);
        }
    }
    let scale = segment.samples().iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
    let floor = T::epsilon() * T::lit(64.0) * T::from_usize_lossy(n) * scale;
    if best.1 <= floor || best.1 <= T::zero() {
        return Err(SpectralError::NoPeak);
    }
    Ok(SpectralPeak { frequency: best.0 as f64 * bin_width, magnitude: best.1, bin_width })
}

/// Frequency-domain mask filter: forward DFT, zero bins outside
/// `[low, high]`, inverse DFT.
pub fn bandpass<T: Scalar>(series: &UniformSeries<T>, low: f64, high: f64) -> Result<UniformSeries<T>> {
    let rate = series.rate();
    if !(low > 0.0 && low < high && high < rate / 2.0) {
        return Err(SpectralError::InvalidBand { low, high, rate });
    }
    let n = series.len();
    if n < 2 {
        return Err(SpectralError::TooShort { needed: 2, got: n });
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<T>> = series.samples().iter().map(|&x| Complex::new(x, T::zero())).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * rate / n as f64;
        if f < low - 1e-12 || f > high + 1e-12 {
            *c = Complex::default();
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = T::from_usize_lossy(n).recip();
    Ok(series.with_samples(buf.into_iter().map(|c| c.re * scale).collect()))
}

/// Sum of squared DFT magnitudes over bins whose frequency lies in
/// `[low, high]`, after centring.
pub fn band_energy<T: Scalar>(samples: &[T], rate: f64, low: f64, high: f64) -> T {
    if samples.len() < 2 {
        return T::zero();
    }
    band_energy_with(&mut RealDft::new(samples.len()), samples, rate, low, high)
}

/// [`band_energy`] with a caller-held transform of length `samples.len()`.
pub(crate) fn band_energy_with<T: Scalar>(dft: &mut RealDft<T>, samples: &[T], rate: f64, low: f64, high: f64) -> T {
    let n = samples.len();
    debug_assert_eq!(dft.len(), n);
    let spectrum = dft.run(samples);
    (1..=n / 2)
        .filter(|&k| {
            let f = k as f64 * rate / n as f64;
            f >= low && f <= high
        })
        .map(|k| spectrum[k].norm_sqr())
        .sum()
}


#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn series(rate: f64, samples: Vec<f64>) -> UniformSeries<f64> {
        UniformSeries::new(rate, 0.0, samples, SeriesOrigin::Label("test".into())).unwrap()
    }

    fn sine(freq: f64, amp: f64, rate: f64, secs: f64) -> Vec<f64> {
        (0..(rate * secs).round() as usize).map(|i| amp * (2.0 * PI * freq * i as f64 / rate).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn zeros_and_constants() {
        assert!(fft_half_magnitudes(&[0.0f64; 8]).unwrap().iter().all(|&m| m == 0.0));
        assert!(fft_half_magnitudes(&[5.0f64; 8]).unwrap().iter().all(|&m| m == 0.0));
        assert_eq!(motion_energy(&[0.0f64; 8]).unwrap(), 0.0);
        assert_eq!(motion_energy(&[3.3f64; 100]).unwrap(), 0.0);
        assert_eq!(motion_energy(&[-0.1f32; 17]).unwrap(), 0.0);
        assert!(matches!(motion_energy(&[1.0f64]), Err(SpectralError::TooShort { .. })));
    }

    #[test]
    fn integer_bin_cosine_single_bin() {
        let n = 64;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * 5.0 * i as f64 / n as f64).cos()).collect();
        let got = fft_half_magnitudes(&x).unwrap();
        let want = oracle::half_magnitudes(&x);
        for (k, (g, w)) in got.iter().zip(&want).enumerate() {
            assert_abs_diff_eq!(g, w, epsilon = 1e-9);
            if k + 1 != 5 {
                assert!(*g < 1e-9);
            }
        }
        assert_abs_diff_eq!(got[4], n as f64 / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn unit_sine_energy_matches_oracle() {
        let n = 100;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * 7.0 * i as f64 / n as f64).sin()).collect();
        assert_relative_eq!(motion_energy(&x).unwrap(), oracle::energy(&x), max_relative = 1e-9);
    }

    #[test]
    fn energy_series_counts() {
        let s = series(1000.0, vec![0.0; 1000]);
        let e = motion_energy_series(&s, 0.1).unwrap();
        assert_eq!(e.len(), 10);
        assert!(e.values.iter().all(|&v| v == 0.0));
        let s = series(1000.0, vec![1.0; 20_000]);
        assert_eq!(motion_energy_series(&s, 0.1).unwrap().len(), 200);
        let s = series(1000.0, vec![1.0; 20_050]);
        assert_eq!(motion_energy_series(&s, 0.1).unwrap().len(), 200);
        assert!(motion_energy_series(&series(1000.0, vec![1.0; 99]), 0.1).is_err());
    }

    #[test]
    fn energy_series_burst_windows() {
        let rate = 1000.0;
        let x: Vec<f64> = (0..20_000)
            .map(|i| {
                let t = i as f64 / rate;
                if (5.0..15.0).contains(&t) { (2.0 * PI * 1.0 * t).sin() } else { 0.0 }
            })
            .collect();
        let e = motion_energy_series(&series(rate, x.clone()), 0.1).unwrap();
        for (i, v) in e.values.iter().enumerate() {
            let want = oracle::energy(&x[i * 100..(i + 1) * 100]);
            assert_relative_eq!(*v, want, max_relative = 1e-6, epsilon = 1e-12);
            if (50..150).contains(&i) {
                assert!(*v > 1e-3, "window {i}");
            } else {
                assert_eq!(*v, 0.0, "window {i}");
            }
        }
    }

    #[test]
    fn prominent_frequency_mixed_tones() {
        let s = series(30.0, sine(0.6, 1.0, 30.0, 20.0));
        let p = prominent_frequency(&s, (0.3, 10.0)).unwrap();
        assert!(p.bin_width <= 0.05);
        assert!((p.frequency - 0.6).abs() <= p.bin_width, "{}", p.frequency);
    }

    #[test]
    fn prominent_frequency_flat_is_no_peak() {
        let s = series(30.0, vec![4.0; 300]);
        assert_eq!(prominent_frequency(&s, (0.3, 10.0)), Err(SpectralError::NoPeak));
    }

    #[test]
    fn prominent_frequency_two_tones_oracle() {
        let rate = 30.0;
        let x: Vec<f64> = sine(0.6, 2.0, rate, 20.0).iter().zip(sine(1.6, 1.0, rate, 20.0)).map(|(a, b)| a + b).collect();
        let p = prominent_frequency(&series(rate, x.clone()), (0.3, 10.0)).unwrap();
        // dense DFT over the same zero-padded grid
        let nfft = 1024;
        let mut padded = centre(&x);
        padded.resize(nfft, 0.0);
        let spec = oracle::dft(&padded);
        let bw = rate / nfft as f64;
        let (k, _) = (1..=nfft / 2)
            .filter(|&k| (0.3..=10.0).contains(&(k as f64 * bw)))
            .map(|k| (k, spec[k].0.hypot(spec[k].1)))
            .fold((0, 0.0), |b, c| if c.1 > b.1 { c } else { b });
        assert_abs_diff_eq!(p.frequency, k as f64 * bw, epsilon = 1e-12);
        assert!((p.frequency - 0.6).abs() < 0.05);
    }

    #[test]
    fn prominent_frequency_errors() {
        let short = series(30.0, sine(0.6, 1.0, 30.0, 3.0));
        assert!(matches!(prominent_frequency(&short, (0.3, 10.0)), Err(SpectralError::SegmentTooShort { .. })));
        let s = series(30.0, sine(0.6, 1.0, 30.0, 5.0));
        assert!(matches!(prominent_frequency(&s, (0.3, 20.0)), Err(SpectralError::InvalidBand { .. })));
        assert!(matches!(prominent_frequency(&s, (0.30, 0.31)), Err(SpectralError::EmptyBand { .. })));
    }

    #[test]
    fn bandpass_rejects_and_passes() {
        let rate = 100.0;
        let slow = sine(0.1, 1.0, rate, 20.0);
        let out = bandpass(&series(rate, slow.clone()), 0.3, 10.0).unwrap();
        assert!(rms(out.samples()) < 0.05 * rms(&slow));
        let fast = sine(1.0, 1.0, rate, 20.0);
        let out = bandpass(&series(rate, fast.clone()), 0.3, 10.0).unwrap();
        assert!((rms(out.samples()) / rms(&fast) - 1.0).abs() < 0.05);
        assert!(bandpass(&series(rate, fast), 0.3, 60.0).is_err());
    }

    #[test]
    fn bandpass_mixed_matches_oracle() {
        let rate = 50.0;
        let x: Vec<f64> = sine(0.1, 1.0, rate, 20.0).iter().zip(sine(1.0, 1.0, rate, 20.0)).map(|(a, b)| a + b).collect();
        let got = bandpass(&series(rate, x.clone()), 0.3, 10.0).unwrap();
        let n = x.len();
        let mut spec = oracle::dft(&x);
        for (k, c) in spec.iter_mut().enumerate() {
            let f = k.min(n - k) as f64 * rate / n as f64;
            if !(0.3..=10.0).contains(&f) {
                *c = (0.0, 0.0);
            }
        }
        let want = oracle::idft_real(&spec);
        let err: Vec<f64> = got.samples().iter().zip(&want).map(|(a, b)| a - b).collect();
        assert!(rms(&err) < 1e-6);
    }

    #[test]
    fn band_energy_selects_in_band_bins() {
        let rate = 100.0;
        let x = sine(1.0, 1.0, rate, 10.0);
        let spec = oracle::dft(&x);
        let want: f64 = (1..=500).filter(|&k| (0.3..=10.0).contains(&(k as f64 / 10.0))).map(|k| spec[k].0.powi(2) + spec[k].1.powi(2)).sum();
        assert_relative_eq!(band_energy(&x, rate, 0.3, 10.0), want, max_relative = 1e-9);
        assert!(band_energy(&x, rate, 2.0, 10.0) < 1e-12 * want);
    }

    #[test]
    fn f32_kernels_agree_with_f64() {
        let x64: Vec<f64> = (0..128).map(|i| (i as f64 * 0.31).sin() * 3.0 + 1.0).collect();
        let x32: Vec<f32> = x64.iter().map(|&v| v as f32).collect();
        let e64 = motion_energy(&x64).unwrap();
        let e32 = motion_energy(&x32).unwrap() as f64;
        assert_relative_eq!(e32, e64, max_relative = 1e-4);
    }

    proptest! {
        #[test]
        fn energy_scales_quadratically(x in proptest::collection::vec(-10.0f64..10.0, 2..200), c in -5.0f64..5.0) {
            let e = motion_energy(&x).unwrap();
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            let es = motion_energy(&scaled).unwrap();
            prop_assert!((es - c * c * e).abs() <= 1e-9 * (c * c * e).abs() + 1e-9);
        }

        #[test]
        fn energy_matches_parseval_oracle(x in proptest::collection::vec(-10.0f64..10.0, 2..128)) {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
            let want = oracle::energy(&centred);
            let got = motion_energy(&x).unwrap();
            prop_assert!((got - want).abs() <= 1e-6 * want.abs() + 1e-9);
        }

        #[test]
        fn prominent_frequency_scale_invariant(f in 0.4f64..5.0, c in 0.01f64..100.0) {
            let s = series(30.0, sine(f, 1.0, 30.0, 6.0));
            let scaled = series(30.0, s.samples().iter().map(|v| v * c).collect());
            let a = prominent_frequency(&s, (0.3, 10.0)).unwrap();
            let b = prominent_frequency(&scaled, (0.3, 10.0)).unwrap();
            prop_assert_eq!(a.frequency, b.frequency);
        }

        #[test]
        fn bandpass_idempotent(x in proptest::collection::vec(-10.0f64..10.0, 64..256)) {
            let s = series(50.0, x);
            let once = bandpass(&s, 0.5, 10.0).unwrap();
            let twice = bandpass(&once, 0.5, 10.0).unwrap();
            let err: Vec<f64> = once.samples().iter().zip(twice.samples()).map(|(a, b)| a - b).collect();
            prop_assert!(rms(&err) < 1e-9);
        }
    }
}
