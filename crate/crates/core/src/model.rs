//! Point-scatterer CSI model.
//!
//! A frame is `e^{j phase} * sum_h b_h a(d_h) b(v_h)^T + Z` where `a` holds the
//! per-subcarrier range phase and `b` the per-symbol Doppler phase.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::params::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    /// Range in meters.
    pub range: f64,
    /// Radial speed in m/s, positive when receding.
    pub speed: f64,
    pub coefficient: Complex64,
}

impl Scatterer {
    pub fn new(range: f64, speed: f64, coefficient: Complex64) -> Self {
        Self {
            range,
            speed,
            coefficient,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.range.is_finite() && self.range >= 0.0) {
            return Err(Error::Domain(format!(
                "scatterer range must be finite and non-negative, got {}",
                self.range
            )));
        }
        if !self.speed.is_finite()
            || !self.coefficient.re.is_finite()
            || !self.coefficient.im.is_finite()
        {
            return Err(Error::Domain(
                "scatterer speed and coefficient must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// CSI of one radio frame.
///
/// `data` is subcarrier-major (`subcarriers x symbols.len()`); column `i` holds
/// OFDM symbol `symbols[i]` of the frame. A full frame stores all symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFrame {
    pub data: Array2<Complex64>,
    pub symbols: Vec<usize>,
    pub frame_idx: u64,
    /// Absolute start time of the frame in seconds.
    pub t0: f64,
}

impl CsiFrame {
    pub fn new(
        data: Array2<Complex64>,
        symbols: Vec<usize>,
        frame_idx: u64,
        t0: f64,
    ) -> Result<Self> {
        if data.ncols() != symbols.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} columns", symbols.len()),
                actual: format!("{} columns", data.ncols()),
            });
        }
        if symbols.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "frame symbol indices must be strictly increasing".into(),
            ));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("frame contains non-finite entries".into()));
        }
        Ok(Self {
            data,
            symbols,
            frame_idx,
            t0,
        })
    }

    /// Check that the frame is consistent with `params`; a full frame stores every symbol.
    pub fn check_dims(&self, params: &SystemParams) -> Result<()> {
        if self.data.nrows() != params.subcarriers {
            return Err(Error::DimensionMismatch {
                expected: format!("{} subcarriers", params.subcarriers),
                actual: format!("{} rows", self.data.nrows()),
            });
        }
        if let Some(&last) = self.symbols.last() {
            if last >= params.symbols {
                return Err(Error::OutOfRange {
                    index: last,
                    len: params.symbols,
                });
            }
        }
        Ok(())
    }

    pub fn is_full(&self, params: &SystemParams) -> bool {
        self.symbols.len() == params.symbols
    }

    /// Column position of OFDM symbol `symbol`, if stored.
    pub fn column_of(&self, symbol: usize) -> Option<usize> {
        self.symbols.binary_search(&symbol).ok()
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Per-subcarrier range phase `exp(-j 4 pi k df d / c0)`.
pub fn range_steering(params: &SystemParams, range: f64) -> Result<Array1<Complex64>> {
    if !(range.is_finite() && range >= 0.0) {
        return Err(Error::Domain(format!(
            "range must be non-negative, got {range}"
        )));
    }
    let step = -4.0 * PI * params.subcarrier_spacing_hz * range / params.c0;
    Ok(Array1::from_shape_fn(params.subcarriers, |k| {
        Complex64::from_polar(1.0, step * k as f64)
    }))
}

/// Per-symbol Doppler phase `exp(+j 4 pi fc v t_l / c0)` with `t_l` taken
/// relative to the first time.
pub fn doppler_steering(
    params: &SystemParams,
    speed: f64,
    times: &[f64],
) -> Result<Array1<Complex64>> {
    if !speed.is_finite() || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain(
            "speed and symbol times must be finite".into(),
        ));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("symbol times must be nondecreasing".into()));
    }
    let origin = times.first().copied().unwrap_or(0.0);
    let rate = 4.0 * PI * params.carrier_hz * speed / params.c0;
    Ok(times
        .iter()
        .map(|&t| Complex64::from_polar(1.0, rate * (t - origin)))
        .collect())
}

/// Synthesize a full frame (all `params.symbols` symbols).
pub fn synthesize_csi(
    params: &SystemParams,
    scatterers: &[Scatterer],
    phase: f64,
    noise_var: f64,
    seed: u64,
) -> Result<CsiFrame> {
    let symbols: Vec<usize> = (0..params.symbols).collect();
    let data = synthesize_symbols(params, &symbols, scatterers, phase, noise_var, seed)?;
    CsiFrame::new(data, symbols, 0, 0.0)
}

/// Synthesize the CSI columns for a subset of frame symbols.
///
/// Noise for column `l` is drawn from its own ChaCha stream keyed by `(seed, l)`,
/// so a subset equals the matching columns of the full frame.
pub fn synthesize_symbols(
    params: &SystemParams,
    symbols: &[usize],
    scatterers: &[Scatterer],
    phase: f64,
    noise_var: f64,
    seed: u64,
) -> Result<Array2<Complex64>> {
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(invalid(
            "noise_var",
            format!("must be non-negative, got {noise_var}"),
        ));
    }
    if let Some(&bad) = symbols.iter().find(|&&l| l >= params.symbols) {
        return Err(Error::OutOfRange {
            index: bad,
            len: params.symbols,
        });
    }
    let times: Vec<f64> = symbols
        .iter()
        .map(|&l| l as f64 * params.symbol_period_s)
        .collect();
    let rotation = Complex64::from_polar(1.0, phase);

    let mut data = Array2::<Complex64>::zeros((params.subcarriers, symbols.len()));
    for s in scatterers {
        s.validate()?;
        let a = range_steering(params, s.range)?;
        // Doppler phase is referenced to symbol 0 of the frame, not the first stored symbol.
        let rate = 4.0 * PI * params.carrier_hz * s.speed / params.c0;
        let b: Array1<Complex64> = times
            .iter()
            .map(|&t| Complex64::from_polar(1.0, rate * t))
            .collect();
        let scale = rotation * s.coefficient;
        for (mut row, &ak) in data.axis_iter_mut(Axis(0)).zip(a.iter()) {
            let ak = scale * ak;
            row.zip_mut_with(&b, |h, &bl| *h += ak * bl);
        }
    }

    if noise_var > 0.0 {
        let sigma = (noise_var / 2.0).sqrt();
        for (col, &l) in symbols.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(l as u64);
            for k in 0..params.subcarriers {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                data[[k, col]] += Complex64::new(sigma * re, sigma * im);
            }
        }
    }
    Ok(data)
}
