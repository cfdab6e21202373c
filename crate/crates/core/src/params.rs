//! Radio numerology, TDD layout and ideal sensing performance.
//!
//! Sign convention used across the crate: a positive radial speed means the
//! path length is increasing (receding target).

use crate::error::{invalid, Result};

/// Propagation speed in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// OFDM numerology of the sensing radio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub subcarriers: usize,
    /// OFDM symbols per radio frame.
    pub symbols: usize,
    /// Useful symbol time without cyclic prefix.
    pub symbol_time_s: f64,
    pub cp_time_s: f64,
    /// Symbol period including the cyclic prefix.
    pub symbol_period_s: f64,
    pub frame_duration_s: f64,
    pub c0: f64,
}

impl SystemParams {
    /// FR2 prototype numerology (mu = 3, 27.4 GHz, 1584 x 1120 CSI per 10 ms frame).
    pub fn fr2_poc() -> Self {
        Self {
            carrier_hz: 27.4e9,
            subcarrier_spacing_hz: 120e3,
            subcarriers: 1584,
            symbols: 1120,
            symbol_time_s: 8.33e-6,
            cp_time_s: 0.59e-6,
            symbol_period_s: 8.92e-6,
            frame_duration_s: 10e-3,
            c0: SPEED_OF_LIGHT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
            ("symbol_time_s", self.symbol_time_s),
            ("cp_time_s", self.cp_time_s),
            ("symbol_period_s", self.symbol_period_s),
            ("frame_duration_s", self.frame_duration_s),
            ("c0", self.c0),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(
                    field,
                    format!("must be positive and finite, got {value}"),
                ));
            }
        }
        if self.subcarriers == 0 {
            return Err(invalid("subcarriers", "must be positive"));
        }
        if self.symbols == 0 {
            return Err(invalid("symbols", "must be positive"));
        }
        if (self.symbol_time_s + self.cp_time_s - self.symbol_period_s).abs() > 1e-12 {
            return Err(invalid(
                "symbol_period_s",
                format!(
                    "must equal symbol_time_s + cp_time_s ({} s), got {} s",
                    self.symbol_time_s + self.cp_time_s,
                    self.symbol_period_s
                ),
            ));
        }
        if self.symbols as f64 * self.symbol_period_s > self.frame_duration_s * (1.0 + 1e-3) {
            return Err(invalid(
                "symbols",
                format!(
                    "{} symbols of {} s do not fit in a {} s frame",
                    self.symbols, self.symbol_period_s, self.frame_duration_s
                ),
            ));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        self.c0 / self.carrier_hz
    }

    /// Unambiguous range `c0 / (2 df)`.
    pub fn unambiguous_range(&self) -> f64 {
        self.c0 / (2.0 * self.subcarrier_spacing_hz)
    }

    /// Unambiguous speed for a slow-time sampling interval.
    pub fn unambiguous_speed(&self, sample_interval_s: f64) -> f64 {
        self.c0 / (2.0 * self.carrier_hz * sample_interval_s)
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::fr2_poc()
    }
}

/// Repeating downlink/uplink symbol pattern within a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TddConfig {
    pub pattern_duration_s: f64,
    pub dl_symbols: usize,
    pub ul_symbols: usize,
    /// Patterns per frame.
    pub repetitions: usize,
}

impl TddConfig {
    /// 1.25 ms pattern with 104 DL and 36 UL symbols, repeated 8 times per frame.
    pub fn fr2_poc() -> Self {
        Self {
            pattern_duration_s: 1.25e-3,
            dl_symbols: 104,
            ul_symbols: 36,
            repetitions: 8,
        }
    }

    /// Downlink-only transmission: a single pattern spanning the frame.
    pub fn continuous(params: &SystemParams) -> Self {
        Self {
            pattern_duration_s: params.frame_duration_s,
            dl_symbols: params.symbols,
            ul_symbols: 0,
            repetitions: 1,
        }
    }

    pub fn pattern_len(&self) -> usize {
        self.dl_symbols + self.ul_symbols
    }

    pub fn is_downlink(&self, symbol: usize) -> bool {
        symbol % self.pattern_len() < self.dl_symbols
    }

    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        if !(self.pattern_duration_s.is_finite() && self.pattern_duration_s > 0.0) {
            return Err(invalid("pattern_duration_s", "must be positive and finite"));
        }
        if self.dl_symbols == 0 {
            return Err(invalid("dl_symbols", "must be positive"));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions", "must be positive"));
        }
        if self.repetitions * self.pattern_len() != params.symbols {
            return Err(invalid(
                "repetitions",
                format!(
                    "{} patterns of {} symbols do not cover the {}-symbol frame",
                    self.repetitions,
                    self.pattern_len(),
                    params.symbols
                ),
            ));
        }
        let per_frame = params.frame_duration_s / self.pattern_duration_s;
        if (per_frame - self.repetitions as f64).abs() > 1e-9 * per_frame {
            return Err(invalid(
                "pattern_duration_s",
                format!(
                    "frame holds {per_frame} patterns, expected {}",
                    self.repetitions
                ),
            ));
        }
        // The tabulated symbol period is rounded, so the pattern may hold up
        // to one symbol less than pattern_duration / symbol_period.
        let nominal = self.pattern_duration_s / params.symbol_period_s;
        if (nominal - self.pattern_len() as f64).abs() >= 2.0 {
            return Err(invalid(
                "dl_symbols",
                format!(
                    "pattern of {} symbols inconsistent with {nominal:.2} symbol periods",
                    self.pattern_len()
                ),
            ));
        }
        Ok(())
    }
}

impl Default for TddConfig {
    fn default() -> Self {
        Self::fr2_poc()
    }
}

/// Ideal resolution and unambiguous extent of a periodogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceBounds {
    pub v_unamb: f64,
    pub d_unamb: f64,
    pub v_res: f64,
    pub d_res: f64,
}

/// Bounds for processing `effective_symbols` slow-time samples spaced by
/// `sample_interval_s`.
pub fn performance_bounds(
    params: &SystemParams,
    effective_symbols: usize,
    sample_interval_s: f64,
) -> Result<PerformanceBounds> {
    if effective_symbols < 2 {
        return Err(invalid(
            "effective_symbols",
            "at least 2 symbols are required",
        ));
    }
    if !(sample_interval_s.is_finite() && sample_interval_s > 0.0) {
        return Err(invalid("sample_interval_s", "must be positive and finite"));
    }
    let v_unamb = params.unambiguous_speed(sample_interval_s);
    let d_unamb = params.unambiguous_range();
    Ok(PerformanceBounds {
        v_unamb,
        d_unamb,
        v_res: v_unamb / effective_symbols as f64,
        d_res: d_unamb / params.subcarriers as f64,
    })
}
