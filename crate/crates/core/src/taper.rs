//! Separable 2D tapers applied to CSI before the periodogram.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Window applied along both axes of the CSI matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Taper {
    Rectangular,
    /// Dolph-Chebyshev window with the given sidelobe attenuation in dB.
    Chebyshev {
        attenuation_db: f64,
    },
}

impl Taper {
    pub const DEFAULT_ATTENUATION_DB: f64 = 80.0;

    pub fn chebyshev(attenuation_db: f64) -> Self {
        Taper::Chebyshev { attenuation_db }
    }

    pub fn coefficients(&self, len: usize) -> Vec<f64> {
        match *self {
            Taper::Rectangular => vec![1.0; len],
            Taper::Chebyshev { attenuation_db } => chebyshev_window(len, attenuation_db),
        }
    }
}

impl Default for Taper {
    fn default() -> Self {
        Taper::chebyshev(Self::DEFAULT_ATTENUATION_DB)
    }
}

/// Symmetric Dolph-Chebyshev window normalized to a unit peak.
///
/// Built from samples of the Chebyshev polynomial on the unit circle followed
/// by a DFT (same construction as `scipy.signal.windows.chebwin`).
pub fn chebyshev_window(len: usize, attenuation_db: f64) -> Vec<f64> {
    match len {
        0 => return Vec::new(),
        1 => return vec![1.0],
        _ => {}
    }
    let order = (len - 1) as f64;
    let beta = ((10f64.powf(attenuation_db.abs() / 20.0)).acosh() / order).cosh();
    let odd = len % 2 == 1;

    let mut p: Vec<Complex64> = (0..len)
        .map(|k| {
            let x = beta * (PI * k as f64 / len as f64).cos();
            let value = if x > 1.0 {
                (order * x.acosh()).cosh()
            } else if x < -1.0 {
                let sign = if odd { 1.0 } else { -1.0 };
                sign * (order * (-x).acosh()).cosh()
            } else {
                (order * x.acos()).cos()
            };
            if odd {
                Complex64::new(value, 0.0)
            } else {
                value * Complex64::from_polar(1.0, PI * k as f64 / len as f64)
            }
        })
        .collect();

    FftPlanner::new().plan_fft_forward(len).process(&mut p);
    let spectrum: Vec<f64> = p.iter().map(|z| z.re).collect();

    let mut w = Vec::with_capacity(len);
    if odd {
        let half = (len + 1) / 2;
        w.extend(spectrum[1..half].iter().rev());
        w.extend(&spectrum[..half]);
    } else {
        let half = len / 2 + 1;
        w.extend(spectrum[1..half].iter().rev());
        w.extend(&spectrum[1..half]);
    }
    let peak = w.iter().cloned().fold(f64::MIN, f64::max);
    w.iter_mut().for_each(|x| *x /= peak);
    w
}
