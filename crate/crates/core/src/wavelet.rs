//! Periodic discrete wavelet transform and multiresolution band reconstruction.
//!
//! Each trailing power window is decomposed on its own, so features never see
//! samples later than the window end. A window of length `2^levels` is split
//! into one approximation band and `levels` detail bands; every band is
//! synthesised back to the window length, and the bands sum to the window.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Window length used for the band features.
pub const WINDOW_LEN: usize = 8;
/// Decomposition depth used for the band features.
pub const LEVELS: usize = 3;
/// Number of band features per window: `(LEVELS + 1) * WINDOW_LEN`.
pub const BAND_FEATURES: usize = (LEVELS + 1) * WINDOW_LEN;

#[derive(Debug, Error, PartialEq)]
pub enum WaveletError {
    #[error("signal length {0} is odd")]
    OddLength(usize),
    #[error("approximation length {approx} does not match detail length {detail}")]
    LengthMismatch { approx: usize, detail: usize },
    #[error("window length {len} is not divisible by 2^{levels}")]
    InvalidWindow { len: usize, levels: usize },
    #[error("unknown wavelet '{0}' (expected haar or db4)")]
    UnknownWavelet(String),
}

/// Orthogonal two-channel filter bank. The highpass filter is always derived
/// from the lowpass as its quadrature mirror.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilter {
    name: &'static str,
    lowpass: Vec<f64>,
    highpass: Vec<f64>,
}

impl WaveletFilter {
    fn from_lowpass(name: &'static str, lowpass: Vec<f64>) -> Self {
        let len = lowpass.len();
        let highpass = (0..len)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * lowpass[len - 1 - k]
            })
            .collect();
        Self {
            name,
            lowpass,
            highpass,
        }
    }

    pub fn haar() -> Self {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_lowpass("haar", vec![c, c])
    }

    /// Four-tap Daubechies filter (two vanishing moments).
    pub fn db4() -> Self {
        let s3 = 3f64.sqrt();
        let norm = 4.0 * 2f64.sqrt();
        Self::from_lowpass(
            "db4",
            vec![
                (1.0 + s3) / norm,
                (3.0 + s3) / norm,
                (3.0 - s3) / norm,
                (1.0 - s3) / norm,
            ],
        )
    }

    pub fn name(&self) -> &str {
        self.name
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    pub fn highpass(&self) -> &[f64] {
        &self.highpass
    }
}

impl Default for WaveletFilter {
    fn default() -> Self {
        Self::haar()
    }
}

impl FromStr for WaveletFilter {
    type Err = WaveletError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "haar" => Ok(Self::haar()),
            "db4" | "d4" | "daubechies4" => Ok(Self::db4()),
            other => Err(WaveletError::UnknownWavelet(other.to_string())),
        }
    }
}

impl fmt::Display for WaveletFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

/// One analysis stage: filter, downsample by two, wrap indices periodically.
pub fn dwt_step(signal: &[f64], filter: &WaveletFilter) -> Result<(Vec<f64>, Vec<f64>), WaveletError> {
    let n = signal.len();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(WaveletError::OddLength(n));
    }
    let half = n / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for k in 0..half {
        for (tap, (&h, &g)) in filter.lowpass.iter().zip(&filter.highpass).enumerate() {
            let x = signal[(2 * k + tap) % n];
            approx[k] += h * x;
            detail[k] += g * x;
        }
    }
    Ok((approx, detail))
}

/// Synthesis stage; the adjoint of [`dwt_step`], which is its inverse because
/// the periodised filter bank is orthogonal.
pub fn idwt_step(approx: &[f64], detail: &[f64], filter: &WaveletFilter) -> Result<Vec<f64>, WaveletError> {
    if approx.len() != detail.len() {
        return Err(WaveletError::LengthMismatch {
            approx: approx.len(),
            detail: detail.len(),
        });
    }
    let n = 2 * approx.len();
    let mut signal = vec![0.0; n];
    if n == 0 {
        return Ok(signal);
    }
    for (k, (&a, &d)) in approx.iter().zip(detail).enumerate() {
        for (tap, (&h, &g)) in filter.lowpass.iter().zip(&filter.highpass).enumerate() {
            signal[(2 * k + tap) % n] += h * a + g * d;
        }
    }
    Ok(signal)
}

/// Full-length band signals of a three-level decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSet {
    pub a3: Vec<f64>,
    pub d3: Vec<f64>,
    pub d2: Vec<f64>,
    pub d1: Vec<f64>,
}

impl BandSet {
    /// Sum of the four bands; equals the decomposed signal.
    pub fn reconstruct(&self) -> Vec<f64> {
        (0..self.a3.len())
            .map(|i| self.a3[i] + self.d3[i] + self.d2[i] + self.d1[i])
            .collect()
    }

    /// Bands in coarsest-first order.
    pub fn bands(&self) -> [&[f64]; 4] {
        [&self.a3, &self.d3, &self.d2, &self.d1]
    }
}

/// Multiresolution analysis of `signal`, returning per-scale bands of full
/// length. Each band is obtained by inverting the cascade with every other
/// coefficient set zeroed.
///
/// Bands are returned as `[approx, detail_levels, ..., detail_1]`.
pub fn mra(signal: &[f64], filter: &WaveletFilter, levels: usize) -> Result<Vec<Vec<f64>>, WaveletError> {
    let n = signal.len();
    if levels == 0 || n == 0 || !n.is_multiple_of(1 << levels) {
        return Err(WaveletError::InvalidWindow { len: n, levels });
    }

    let mut details = Vec::with_capacity(levels);
    let mut approx = signal.to_vec();
    for _ in 0..levels {
        let (a, d) = dwt_step(&approx, filter)?;
        details.push(d);
        approx = a;
    }

    // Synthesise from `level` (1-based, finest = 1) down to full length.
    let synthesise = |mut coeffs: Vec<f64>, is_detail: bool, level: usize| -> Result<Vec<f64>, WaveletError> {
        let zeros = vec![0.0; coeffs.len()];
        coeffs = if is_detail {
            idwt_step(&zeros, &coeffs, filter)?
        } else {
            idwt_step(&coeffs, &zeros, filter)?
        };
        for _ in 1..level {
            let zeros = vec![0.0; coeffs.len()];
            coeffs = idwt_step(&coeffs, &zeros, filter)?;
        }
        Ok(coeffs)
    };

    let mut bands = Vec::with_capacity(levels + 1);
    bands.push(synthesise(approx, false, levels)?);
    for level in (1..=levels).rev() {
        bands.push(synthesise(details[level - 1].clone(), true, level)?);
    }
    Ok(bands)
}

pub fn mra_bands(signal: &[f64], filter: &WaveletFilter) -> Result<BandSet, WaveletError> {
    let mut bands = mra(signal, filter, LEVELS)?.into_iter();
    let mut next = || bands.next().expect("mra returns LEVELS + 1 bands");
    Ok(BandSet {
        a3: next(),
        d3: next(),
        d2: next(),
        d1: next(),
    })
}

/// The 32 band features of an 8-sample window: `[a3 | d3 | d2 | d1]`.
pub fn window_band_features(window: &[f64], filter: &WaveletFilter) -> Result<Vec<f64>, WaveletError> {
    if window.len() != WINDOW_LEN {
        return Err(WaveletError::InvalidWindow {
            len: window.len(),
            levels: LEVELS,
        });
    }
    let bands = mra_bands(window, filter)?;
    Ok(bands.bands().iter().flat_map(|b| b.iter().copied()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn filters_satisfy_qmf_identities() {
        for filter in [WaveletFilter::haar(), WaveletFilter::db4()] {
            let h = filter.lowpass();
            let g = filter.highpass();
            let len = h.len();
            for k in 0..len {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                assert_eq!(g[k], sign * h[len - 1 - k]);
            }
            assert!((h.iter().sum::<f64>() - SQRT2).abs() < 1e-12, "{filter}");
            assert!((h.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12, "{filter}");
        }
    }

    #[test]
    fn haar_step_on_known_signal() {
        let (a, d) = dwt_step(&[4.0, 4.0, 2.0, 2.0], &WaveletFilter::haar()).unwrap();
        assert!(max_abs_diff(&a, &[4.0 * SQRT2, 2.0 * SQRT2]) < 1e-12);
        assert!(max_abs_diff(&d, &[0.0, 0.0]) < 1e-12);

        let c = 3.5;
        let (a, d) = dwt_step(&[c, c], &WaveletFilter::haar()).unwrap();
        assert!((a[0] - c * SQRT2).abs() < 1e-12);
        assert!(d[0].abs() < 1e-12);
    }

    #[test]
    fn haar_inverse_on_known_coefficients() {
        let x = idwt_step(&[4.0 * SQRT2, 2.0 * SQRT2], &[0.0, 0.0], &WaveletFilter::haar()).unwrap();
        assert!(max_abs_diff(&x, &[4.0, 4.0, 2.0, 2.0]) < 1e-12);
        let z = idwt_step(&[0.0; 3], &[0.0; 3], &WaveletFilter::db4()).unwrap();
        assert_eq!(z, vec![0.0; 6]);
    }

    #[test]
    fn step_errors() {
        let f = WaveletFilter::haar();
        assert_eq!(dwt_step(&[1.0, 2.0, 3.0], &f), Err(WaveletError::OddLength(3)));
        assert!(matches!(
            idwt_step(&[1.0], &[1.0, 2.0], &f),
            Err(WaveletError::LengthMismatch { approx: 1, detail: 2 })
        ));
        assert!(mra_bands(&[1.0; 6], &f).is_err());
        assert!(window_band_features(&[1.0; 16], &f).is_err());
        assert!("sym8".parse::<WaveletFilter>().is_err());
    }

    #[test]
    fn constant_window_is_pure_approximation() {
        for filter in [WaveletFilter::haar(), WaveletFilter::db4()] {
            let window = [7.25; 8];
            let bands = mra_bands(&window, &filter).unwrap();
            assert!(max_abs_diff(&bands.a3, &window) < 1e-12);
            for d in [&bands.d3, &bands.d2, &bands.d1] {
                assert!(d.iter().all(|v| v.abs() < 1e-12));
            }
        }
        let feats = window_band_features(&[2.0; 8], &WaveletFilter::haar()).unwrap();
        assert_eq!(feats.len(), BAND_FEATURES);
        assert!(feats[..8].iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert!(feats[8..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn alternating_window_lives_in_finest_detail() {
        let window: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let bands = mra_bands(&window, &WaveletFilter::haar()).unwrap();
        assert!(max_abs_diff(&bands.d1, &window) < 1e-12);
        for b in [&bands.a3, &bands.d3, &bands.d2] {
            assert!(b.iter().all(|v| v.abs() < 1e-12));
        }
    }

    fn window_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, 8)
    }

    proptest! {
        #[test]
        fn step_round_trip(x in prop::collection::vec(-1.0f64..1.0, 8)) {
            for filter in [WaveletFilter::haar(), WaveletFilter::db4()] {
                let (a, d) = dwt_step(&x, &filter).unwrap();
                let back = idwt_step(&a, &d, &filter).unwrap();
                prop_assert!(max_abs_diff(&back, &x) < 1e-12);
            }
        }

        #[test]
        fn bands_sum_to_window(x in window_strategy()) {
            for filter in [WaveletFilter::haar(), WaveletFilter::db4()] {
                let bands = mra_bands(&x, &filter).unwrap();
                prop_assert!(max_abs_diff(&bands.reconstruct(), &x) < 1e-9);
            }
        }

        #[test]
        fn band_map_is_linear(x in window_strategy(), y in window_strategy(), alpha in -10.0f64..10.0) {
            for filter in [WaveletFilter::haar(), WaveletFilter::db4()] {
                let fx = window_band_features(&x, &filter).unwrap();
                let fy = window_band_features(&y, &filter).unwrap();
                let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
                let fsum = window_band_features(&sum, &filter).unwrap();
                let expected: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a + b).collect();
                prop_assert!(max_abs_diff(&fsum, &expected) < 1e-9);

                let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
                let fscaled = window_band_features(&scaled, &filter).unwrap();
                let expected: Vec<f64> = fx.iter().map(|v| alpha * v).collect();
                prop_assert!(max_abs_diff(&fscaled, &expected) < 1e-9);
            }
        }
    }
}
