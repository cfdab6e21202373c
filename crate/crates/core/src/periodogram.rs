//! Windowed, zero-padded range/speed periodogram.

use std::f64::consts::LN_2;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::CsiFrame;
use crate::params::{performance_bounds, PerformanceBounds, SystemParams};
use crate::taper::Taper;
use crate::tdd::ObservationWindow;

/// Power map over range (rows) and speed (columns, zero speed centered).
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    pub power: Array2<f64>,
    pub range_axis: Vec<f64>,
    pub speed_axis: Vec<f64>,
    pub params: SystemParams,
    pub sample_interval: f64,
    /// Slow-time samples before zero padding.
    pub effective_symbols: usize,
}

impl Periodogram {
    /// Periodogram of a full frame sampled every symbol period.
    pub fn from_frame(frame: &CsiFrame, params: &SystemParams, taper: Taper) -> Result<Self> {
        frame.check_dims(params)?;
        if !frame.symbols.windows(2).all(|w| w[1] == w[0] + 1) {
            return Err(Error::Domain(
                "frame periodogram needs contiguous symbols".into(),
            ));
        }
        compute_periodogram(frame.data.view(), params, params.symbol_period_s, taper)
    }

    pub fn from_window(
        window: &ObservationWindow,
        params: &SystemParams,
        taper: Taper,
    ) -> Result<Self> {
        compute_periodogram(window.data.view(), params, window.sample_interval, taper)
    }

    pub fn range_bins(&self) -> usize {
        self.power.nrows()
    }

    pub fn speed_bins(&self) -> usize {
        self.power.ncols()
    }

    pub fn range_step(&self) -> f64 {
        self.params.unambiguous_range() / self.range_bins() as f64
    }

    pub fn speed_step(&self) -> f64 {
        self.unambiguous_speed() / self.speed_bins() as f64
    }

    /// Unambiguous speed of the effective slow-time sampling.
    pub fn unambiguous_speed(&self) -> f64 {
        self.params.unambiguous_speed(self.sample_interval)
    }

    pub fn bounds(&self) -> Result<PerformanceBounds> {
        performance_bounds(&self.params, self.effective_symbols, self.sample_interval)
    }

    pub fn bin_to_range(&self, n: usize) -> Result<f64> {
        if n >= self.range_bins() {
            return Err(Error::OutOfRange {
                index: n,
                len: self.range_bins(),
            });
        }
        Ok(self.range_axis[n])
    }

    pub fn bin_to_speed(&self, m: usize) -> Result<f64> {
        if m >= self.speed_bins() {
            return Err(Error::OutOfRange {
                index: m,
                len: self.speed_bins(),
            });
        }
        Ok(self.speed_axis[m])
    }

    /// Nearest range bin to `range` (not wrapped).
    pub fn range_to_bin(&self, range: f64) -> usize {
        ((range / self.range_step()).round().max(0.0) as usize).min(self.range_bins() - 1)
    }

    /// Nearest speed bin to `speed`, wrapping into the unambiguous interval.
    pub fn speed_to_bin(&self, speed: f64) -> usize {
        let m = self.speed_bins() as i64;
        let idx = (speed / self.speed_step()).round() as i64 + m / 2;
        idx.rem_euclid(m) as usize
    }

    /// Largest bin as `(range_bin, speed_bin, power)`.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for ((n, m), &v) in self.power.indexed_iter() {
            if v > best.2 {
                best = (n, m, v);
            }
        }
        best
    }

    pub fn max_power(&self) -> f64 {
        self.power.iter().cloned().fold(0.0, f64::max)
    }
}

/// `S(n, m) = |sum_k sum_l H~(k, l) e^{-j2pi lm/M'} e^{+j2pi kn/N'}|^2 / (N'M')`
/// where `H~` is the tapered CSI zero-padded to powers of two. The speed axis is
/// half-spectrum shifted so column `M'/2` holds zero speed.
pub fn compute_periodogram(
    data: ArrayView2<Complex64>,
    params: &SystemParams,
    sample_interval: f64,
    taper: Taper,
) -> Result<Periodogram> {
    let (rows, cols) = data.dim();
    if rows != params.subcarriers {
        return Err(Error::DimensionMismatch {
            expected: format!("{} subcarriers", params.subcarriers),
            actual: format!("{rows} rows"),
        });
    }
    if cols < 2 {
        return Err(Error::DimensionMismatch {
            expected: "at least 2 symbols".into(),
            actual: format!("{cols} columns"),
        });
    }
    if !(sample_interval.is_finite() && sample_interval > 0.0) {
        return Err(Error::Domain("sample interval must be positive".into()));
    }
    let n_pad = rows.next_power_of_two();
    let m_pad = cols.next_power_of_two();
    let range_taper = taper.coefficients(rows);
    let speed_taper = taper.coefficients(cols);

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(m_pad);
    let inverse = planner.plan_fft_inverse(n_pad);

    // DFT over symbols, one row per subcarrier.
    let mut slow = vec![Complex64::new(0.0, 0.0); rows * m_pad];
    slow.par_chunks_mut(m_pad).enumerate().for_each(|(k, row)| {
        let wk = range_taper[k];
        for (l, z) in row.iter_mut().take(cols).enumerate() {
            *z = data[[k, l]] * (wk * speed_taper[l]);
        }
        forward.process(row);
    });

    // IDFT over subcarriers, one row per speed bin.
    let mut fast = vec![Complex64::new(0.0, 0.0); m_pad * n_pad];
    fast.par_chunks_mut(n_pad).enumerate().for_each(|(m, row)| {
        for k in 0..rows {
            row[k] = slow[k * m_pad + m];
        }
        inverse.process(row);
    });

    let scale = 1.0 / (n_pad * m_pad) as f64;
    let half = m_pad / 2;
    let power = Array2::from_shape_fn((n_pad, m_pad), |(n, s)| {
        let m = (s + half) % m_pad;
        fast[m * n_pad + n].norm_sqr() * scale
    });

    let d_step = params.unambiguous_range() / n_pad as f64;
    let v_step = params.unambiguous_speed(sample_interval) / m_pad as f64;
    Ok(Periodogram {
        power,
        range_axis: (0..n_pad).map(|n| n as f64 * d_step).collect(),
        speed_axis: (0..m_pad)
            .map(|s| (s as f64 - half as f64) * v_step)
            .collect(),
        params: *params,
        sample_interval,
        effective_symbols: cols,
    })
}

/// Noise power from the median of the non-zero bins, scaled by `1 / ln 2`
/// (median-to-mean ratio of an exponential distribution).
///
/// Zero bins (padding artifacts or masked regions) are excluded. A degenerate
/// constant map returns its value.
pub fn estimate_noise_floor(p: &Periodogram) -> Result<f64> {
    if p.power.is_empty() {
        return Err(Error::Empty("periodogram"));
    }
    let mut values: Vec<f64> = p.power.iter().copied().filter(|&v| v > 0.0).collect();
    if values.is_empty() {
        return Err(Error::AllZero("periodogram"));
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if hi - lo <= 1e-12 * hi {
        return Ok(hi);
    }
    let mid = values.len() / 2;
    let (_, median, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    Ok(*median / LN_2)
}

/// Ratio of the strongest bin to the noise power, in dB.
pub fn periodogram_snr(p: &Periodogram, noise_var: f64) -> Result<f64> {
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(Error::Domain(format!(
            "noise estimate must be positive, got {noise_var}"
        )));
    }
    let peak = p.max_power();
    if peak <= 0.0 {
        return Err(Error::AllZero("periodogram has no power"));
    }
    Ok(10.0 * (peak / noise_var).log10())
}
