//! Periodized orthogonal discrete wavelet transform and universal
//! soft-threshold denoising.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PreprocessError, Result};
use crate::scalar::Scalar;
use crate::trace::UniformSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Wavelet {
    Haar,
    Db2,
    #[default]
    Db4,
}

impl Wavelet {
    /// Reconstruction low-pass (scaling) filter.
    fn scaling(self) -> &'static [f64] {
        match self {
            Self::Haar => &[std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
            Self::Db2 => &[0.48296291314469025, 0.836516303737469, 0.22414386804185735, -0.12940952255092145],
            Self::Db4 => &[
                0.23037781330885523,
                0.7148465705525415,
                0.6308807679295904,
                -0.02798376941698385,
                -0.18703481171888114,
                0.030841381835986965,
                0.032883011666982945,
                -0.010597401784997278,
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    /// σ·sqrt(2 ln n) with σ = MAD(finest detail) / 0.6745, soft shrinkage.
    #[default]
    UniversalSoft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    pub wavelet: Wavelet,
    pub levels: usize,
    pub threshold_rule: ThresholdRule,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self { wavelet: Wavelet::Db4, levels: 4, threshold_rule: ThresholdRule::UniversalSoft }
    }
}

struct FilterBank<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Scalar> FilterBank<T> {
    fn new(w: Wavelet) -> Self {
        let h = w.scaling();
        let len = h.len();
        let lo = h.iter().map(|&v| T::lit(v)).collect();
        let hi = (0..len)
            .map(|k| {
                let v = h[len - 1 - k];
                T::lit(if k % 2 == 0 { v } else { -v })
            })
            .collect();
        Self { lo, hi }
    }

    fn analyze(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let n = x.len();
        let half = n / 2;
        let taps = self.lo.len();
        let mut a = vec![T::zero(); half];
        let mut d = vec![T::zero(); half];
        for i in 0..half {
            let (mut sa, mut sd) = (T::zero(), T::zero());
            let start = 2 * i;
            if start + taps <= n {
                let w = &x[start..start + taps];
                for k in 0..taps {
                    sa = sa + self.lo[k] * w[k];
                    sd = sd + self.hi[k] * w[k];
                }
            } else {
                for k in 0..taps {
                    let v = x[(start + k) % n];
                    sa = sa + self.lo[k] * v;
                    sd = sd + self.hi[k] * v;
                }
            }
            a[i] = sa;
            d[i] = sd;
        }
        (a, d)
    }

    fn synthesize(&self, a: &[T], d: &[T]) -> Vec<T> {
        let n = a.len() * 2;
        let taps = self.lo.len();
        let mut x = vec![T::zero(); n];
        for i in 0..a.len() {
            let start = 2 * i;
            if start + taps <= n {
                let w = &mut x[start..start + taps];
                for k in 0..taps {
                    w[k] = w[k] + a[i] * self.lo[k] + d[i] * self.hi[k];
                }
            } else {
                for k in 0..taps {
                    let j = (start + k) % n;
                    x[j] = x[j] + a[i] * self.lo[k] + d[i] * self.hi[k];
                }
            }
        }
        x
    }
}

/// Multi-level decomposition: coarsest approximation plus details, finest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<T> {
    pub approx: Vec<T>,
    pub details: Vec<Vec<T>>,
    original_len: usize,
}

impl<T: Scalar> Decomposition<T> {
    /// Decomposes `x`, edge-padding it to a multiple of `2^levels`.
    pub fn new(x: &[T], wavelet: Wavelet, levels: usize) -> Result<Self> {
        check_levels(x.len(), levels)?;
        let block = 1usize << levels;
        let padded_len = x.len().div_ceil(block) * block;
        let mut cur = x.to_vec();
        cur.resize(padded_len, x[x.len() - 1]);
        let bank = FilterBank::new(wavelet);
        let mut details = Vec::with_capacity(levels);
        for _ in 0..levels {
            let (a, d) = bank.analyze(&cur);
            details.push(d);
            cur = a;
        }
        Ok(Self { approx: cur, details, original_len: x.len() })
    }

    pub fn reconstruct(&self, wavelet: Wavelet) -> Vec<T> {
        let bank = FilterBank::new(wavelet);
        let mut cur = self.approx.clone();
        for d in self.details.iter().rev() {
            cur = bank.synthesize(&cur, d);
        }
        cur.truncate(self.original_len);
        cur
    }

    pub fn detail_energy(&self) -> T {
        self.details.iter().flatten().map(|&v| v * v).sum()
    }
}

fn check_levels(len: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(PreprocessError::InvalidLevels);
    }
    if levels >= usize::BITS as usize || len < (1usize << levels) {
        return Err(PreprocessError::TooShort { len, levels });
    }
    Ok(())
}

fn median_abs<T: Scalar>(v: &[T]) -> T {
    let mut a: Vec<T> = v.iter().map(|x| x.abs()).collect();
    if a.is_empty() {
        return T::zero();
    }
    let m = a.len() / 2;
    let cmp = |x: &T, y: &T| x.partial_cmp(y).expect("finite");
    let (lower, upper, _) = a.select_nth_unstable_by(m, cmp);
    let upper = *upper;
    if v.len() % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(T::neg_infinity(), T::max);
        (below + upper) / T::lit(2.0)
    }
}

fn soft<T>(v: T, thr: T) -> T
where
    T: Scalar,
{
    let mag = v.abs() - thr;
    if mag > T::zero() {
        mag * v.signum()
    } else {
        T::zero()
    }
}

/// Wavelet shrinkage: decompose, soft-threshold every detail band with the
/// universal threshold, reconstruct. Length and rate are preserved.
pub fn dwt_denoise<T: Scalar>(series: &UniformSeries<T>, cfg: &DenoiseConfig) -> Result<UniformSeries<T>> {
    let mut dec = Decomposition::new(series.samples(), cfg.wavelet, cfg.levels)?;
    let sigma = median_abs(&dec.details[0]) / T::lit(0.6745);
    let n = T::from_usize_lossy(series.len());
    let thr = sigma * (T::lit(2.0) * n.ln()).sqrt();
    match cfg.threshold_rule {
        ThresholdRule::UniversalSoft => {
            for band in &mut dec.details {
                for v in band.iter_mut() {
                    *v = soft(*v, thr);
                }
            }
        }
    }
    Ok(series.with_samples(dec.reconstruct(cfg.wavelet)))
}

/// Denoises every column independently, in parallel. Output order matches input.
pub fn denoise_columns<T: Scalar>(columns: &[UniformSeries<T>], cfg: &DenoiseConfig) -> Result<Vec<UniformSeries<T>>> {
    columns.par_iter().map(|c| dwt_denoise(c, cfg)).collect()
}
