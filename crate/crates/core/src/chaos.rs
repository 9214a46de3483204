//! Largest Lyapunov exponent of a scalar series by nearest-neighbour
//! divergence tracking in a delay embedding (Rosenstein et al.).

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChaosError {
    #[error("series of length {len} is too short for delay {delay} and dimension {dimension}")]
    TooShort { len: usize, delay: usize, dimension: usize },
    #[error("invalid embedding configuration: {0}")]
    InvalidConfig(String),
    #[error("series is constant; divergence is undefined")]
    Degenerate,
    #[error("no valid neighbour pairs outside the Theiler window")]
    NoNeighbours,
    #[error("divergence curve undefined at step {0}")]
    UndefinedDivergence(usize),
    #[error("empty parameter range")]
    EmptyRange,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Delay-embedding and fitting parameters. `None` fields are derived from the
/// mean period of the series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingConfig {
    pub delay: usize,
    pub dimension: usize,
    pub theiler_window: Option<usize>,
    /// Inclusive step range used for the slope fit.
    pub fit_range: Option<(usize, usize)>,
}

impl EmbeddingConfig {
    pub fn new(delay: usize, dimension: usize) -> Self {
        Self {
            delay,
            dimension,
            theiler_window: None,
            fit_range: None,
        }
    }

    fn validate(&self, len: usize) -> Result<(), ChaosError> {
        if self.delay == 0 {
            return Err(ChaosError::InvalidConfig("delay must be at least 1".into()));
        }
        if self.dimension < 2 {
            return Err(ChaosError::InvalidConfig("dimension must be at least 2".into()));
        }
        if let Some(w) = self.theiler_window {
            if w < self.delay {
                return Err(ChaosError::InvalidConfig(format!(
                    "theiler window {w} is smaller than delay {}",
                    self.delay
                )));
            }
        }
        if let Some((lo, hi)) = self.fit_range {
            if hi <= lo {
                return Err(ChaosError::InvalidConfig(format!("fit range {lo}..={hi} is empty")));
            }
        }
        if (self.dimension - 1) * self.delay >= len {
            return Err(ChaosError::TooShort {
                len,
                delay: self.delay,
                dimension: self.dimension,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovResult {
    /// Nats per sample.
    pub lambda_max: f64,
    /// Mean log separation after `i` steps, for `i = 0..=fit_end`.
    pub divergence_curve: Vec<f64>,
    pub neighbor_count: usize,
    pub theiler_window: usize,
    pub fit_range: (usize, usize),
}

/// Rows `[x(i), x(i + τ), ..., x(i + (m - 1)τ)]`.
pub fn embed(series: &[f64], delay: usize, dimension: usize) -> Result<Array2<f64>, ChaosError> {
    if delay == 0 || dimension == 0 {
        return Err(ChaosError::InvalidConfig("delay and dimension must be positive".into()));
    }
    let span = (dimension - 1) * delay;
    if span >= series.len() {
        return Err(ChaosError::TooShort {
            len: series.len(),
            delay,
            dimension,
        });
    }
    let rows = series.len() - span;
    Ok(Array2::from_shape_fn((rows, dimension), |(i, k)| series[i + k * delay]))
}

/// Reciprocal of the power-weighted mean frequency, in samples. `None` for a
/// series with no variance.
pub fn mean_period(series: &[f64]) -> Option<f64> {
    let n = series.len();
    if n < 4 {
        return None;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let (mut weighted, mut total) = (0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let power = c.norm_sqr();
        weighted += k as f64 * power;
        total += power;
    }
    if total <= f64::EPSILON * n as f64 * mean.abs().max(1.0).powi(2) {
        return None;
    }
    let mean_freq = weighted / total / n as f64;
    Some(1.0 / mean_freq)
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn largest_lyapunov(series: &[f64], config: &EmbeddingConfig) -> Result<LyapunovResult, ChaosError> {
    config.validate(series.len())?;
    let period = mean_period(series).ok_or(ChaosError::Degenerate)?;
    let period_steps = period.round().max(1.0) as usize;

    let theiler = config.theiler_window.unwrap_or(period_steps.max(config.delay));
    let (fit_lo, fit_hi) = config.fit_range.unwrap_or((1, period_steps.max(2)));
    let points = embed(series, config.delay, config.dimension)?;
    let m = points.nrows();

    // Nearest neighbour of each point outside the temporal exclusion zone.
    let neighbours: Vec<Option<usize>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let pj = points.row(j);
            let mut best: Option<(usize, f64)> = None;
            for k in 0..m {
                if k.abs_diff(j) <= theiler {
                    continue;
                }
                let d = sq_dist(pj, points.row(k));
                if d > 0.0 && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((k, d));
                }
            }
            best.map(|(k, _)| k)
        })
        .collect();

    let neighbor_count = neighbours.iter().flatten().count();
    if neighbor_count == 0 {
        return Err(ChaosError::NoNeighbours);
    }

    let mut curve = Vec::with_capacity(fit_hi + 1);
    for step in 0..=fit_hi {
        let (sum, count) = neighbours
            .iter()
            .enumerate()
            .filter_map(|(j, nb)| {
                let k = (*nb)?;
                if j + step >= m || k + step >= m {
                    return None;
                }
                let d = sq_dist(points.row(j + step), points.row(k + step));
                (d > 0.0).then(|| 0.5 * d.ln())
            })
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        if count == 0 {
            return Err(ChaosError::UndefinedDivergence(step));
        }
        curve.push(sum / count as f64);
    }

    let lambda_max = ols_slope(fit_lo, &curve[fit_lo..=fit_hi]);
    Ok(LyapunovResult {
        lambda_max,
        divergence_curve: curve,
        neighbor_count,
        theiler_window: theiler,
        fit_range: (fit_lo, fit_hi),
    })
}

/// Least-squares slope of `ys` against `x0, x0 + 1, ...`.
fn ols_slope(x0: usize, ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let xs: Vec<f64> = (0..ys.len()).map(|i| (x0 + i) as f64).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// λ_max over a grid of delays (rows) and dimensions (columns). Cells whose
/// estimate fails are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSurface {
    pub delays: Vec<usize>,
    pub dimensions: Vec<usize>,
    pub cells: Vec<Vec<Option<f64>>>,
}

pub fn lyapunov_surface(series: &[f64], delays: &[usize], dimensions: &[usize]) -> Result<LyapunovSurface, ChaosError> {
    if delays.is_empty() || dimensions.is_empty() {
        return Err(ChaosError::EmptyRange);
    }
    let grid: Vec<(usize, usize)> = delays
        .iter()
        .flat_map(|&d| dimensions.iter().map(move |&m| (d, m)))
        .collect();
    let values: Vec<Option<f64>> = grid
        .par_iter()
        .map(
            |&(delay, dim)| match largest_lyapunov(series, &EmbeddingConfig::new(delay, dim)) {
                Ok(r) => Some(r.lambda_max),
                Err(e) => {
                    log::debug!("lyapunov cell delay={delay} dim={dim} invalid: {e}");
                    None
                }
            },
        )
        .collect();
    let cells = values.chunks(dimensions.len()).map(<[_]>::to_vec).collect();
    Ok(LyapunovSurface {
        delays: delays.to_vec(),
        dimensions: dimensions.to_vec(),
        cells,
    })
}

impl LyapunovSurface {
    pub fn write_csv<W: Write>(&self, mut out: W, header_comment: &str) -> Result<(), ChaosError> {
        writeln!(out, "# {header_comment}")?;
        let dims: Vec<String> = self.dimensions.iter().map(|m| m.to_string()).collect();
        writeln!(out, "delay,{}", dims.join(","))?;
        for (delay, row) in self.delays.iter().zip(&self.cells) {
            let cells: Vec<String> = row
                .iter()
                .map(|c| c.map_or_else(|| "NA".to_string(), |v| v.to_string()))
                .collect();
            writeln!(out, "{delay},{}", cells.join(","))?;
        }
        Ok(())
    }
}
