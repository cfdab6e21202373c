//! CFAR thresholding, peak extraction, LOS/NLOS regions and detection-rate metrics.

use crate::error::{invalid, Error, Result};
use crate::periodogram::Periodogram;

/// Scale of the `alpha / d^2` term of the range-adjusted threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPolicy {
    /// Square root of the periodogram maximum, recomputed per periodogram.
    SqrtMax,
    Fixed(f64),
    /// Plain CFAR threshold.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub p_fa: f64,
    pub alpha_policy: AlphaPolicy,
    /// Zero-speed discard half width in m/s. `None` uses one effective
    /// speed-resolution cell.
    pub zero_speed_halfwidth: Option<f64>,
    /// Matching tolerances. `None` uses two effective resolution cells.
    pub match_tol_range: Option<f64>,
    pub match_tol_speed: Option<f64>,
    pub top_k_nlos: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            p_fa: 1e-4,
            alpha_policy: AlphaPolicy::SqrtMax,
            zero_speed_halfwidth: None,
            match_tol_range: None,
            match_tol_speed: None,
            top_k_nlos: 10,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return Err(invalid(
                "p_fa",
                format!("must be in (0, 1), got {}", self.p_fa),
            ));
        }
        if let AlphaPolicy::Fixed(a) = self.alpha_policy {
            if !(a.is_finite() && a >= 0.0) {
                return Err(invalid("alpha", "must be non-negative"));
            }
        }
        if let Some(w) = self.zero_speed_halfwidth {
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid("zero_speed_halfwidth", "must be non-negative"));
            }
        }
        for (field, tol) in [
            ("match_tol_range", self.match_tol_range),
            ("match_tol_speed", self.match_tol_speed),
        ] {
            if let Some(t) = tol {
                if !(t.is_finite() && t > 0.0) {
                    return Err(invalid(field, "must be positive"));
                }
            }
        }
        if self.top_k_nlos == 0 {
            return Err(invalid("top_k_nlos", "must be at least 1"));
        }
        Ok(())
    }

    /// Zero-speed half width resolved against a periodogram.
    pub fn halfwidth_for(&self, p: &Periodogram) -> f64 {
        self.zero_speed_halfwidth
            .unwrap_or_else(|| p.unambiguous_speed() / p.effective_symbols as f64)
    }

    /// `(range, speed)` matching tolerances resolved against a periodogram.
    pub fn tolerances_for(&self, p: &Periodogram) -> (f64, f64) {
        let d_res = p.params.unambiguous_range() / p.params.subcarriers as f64;
        let v_res = p.unambiguous_speed() / p.effective_symbols as f64;
        (
            self.match_tol_range.unwrap_or(2.0 * d_res),
            self.match_tol_speed.unwrap_or(2.0 * v_res),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Los,
    Nlos,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Los => "LOS",
            Region::Nlos => "NLOS",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub range: f64,
    pub speed: f64,
    pub power: f64,
    pub range_bin: usize,
    pub speed_bin: usize,
    pub region: Region,
    pub matched: bool,
    pub window_idx: usize,
    pub time: f64,
}

/// Mounting height of the radio and ground distance to the reflecting wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneGeometry {
    pub h_gnb: f64,
    pub d_wall: f64,
}

impl SceneGeometry {
    pub fn new(h_gnb: f64, d_wall: f64) -> Result<Self> {
        let g = Self { h_gnb, d_wall };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_gnb.is_finite() && self.h_gnb > 0.0) {
            return Err(invalid("h_gnb", "must be positive"));
        }
        if !(self.d_wall.is_finite() && self.d_wall > self.h_gnb) {
            return Err(invalid("d_wall", "must exceed h_gnb"));
        }
        Ok(())
    }

    /// Depression angle of the LOS ray measured from the vertical.
    pub fn theta_los(&self, d_los: f64) -> Result<f64> {
        if !(d_los.is_finite() && d_los >= self.h_gnb) {
            return Err(Error::Domain(format!(
                "slant range {d_los} m shorter than mounting height {} m",
                self.h_gnb
            )));
        }
        Ok((self.h_gnb / d_los).acos())
    }
}

impl Default for SceneGeometry {
    fn default() -> Self {
        Self {
            h_gnb: 5.12,
            d_wall: 23.0,
        }
    }
}

/// Threshold that a single exponential noise bin exceeds with probability
/// `1 - (1 - p_fa)^(1/n_bins)`, so the whole image false-alarms with `p_fa`.
pub fn cfar_threshold(noise_var: f64, p_fa: f64, n_bins: usize) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(invalid("p_fa", format!("must be in (0, 1), got {p_fa}")));
    }
    if n_bins == 0 {
        return Err(invalid("n_bins", "must be positive"));
    }
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(invalid("noise_var", "must be positive"));
    }
    // 1 - (1 - p)^(1/n) without cancellation.
    let per_bin = -((1.0 - p_fa).ln() / n_bins as f64).exp_m1();
    Ok(-noise_var * per_bin.ln())
}

/// `eta_cfar + alpha / d^2`.
pub fn range_adjusted_threshold(eta_cfar: f64, alpha: f64, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("range must be positive, got {d}")));
    }
    Ok(eta_cfar + alpha / (d * d))
}

pub fn resolve_alpha(policy: AlphaPolicy, p: &Periodogram) -> f64 {
    match policy {
        AlphaPolicy::SqrtMax => p.max_power().sqrt(),
        AlphaPolicy::Fixed(a) => a,
        AlphaPolicy::Off => 0.0,
    }
}

/// Range-adjusted threshold per range bin. Bin 0 uses the first positive bin center.
pub fn threshold_profile(
    p: &Periodogram,
    cfg: &DetectionConfig,
    noise_var: f64,
) -> Result<Vec<f64>> {
    let eta = cfar_threshold(noise_var, cfg.p_fa, p.power.len())?;
    let alpha = resolve_alpha(cfg.alpha_policy, p);
    let step = p.range_step();
    p.range_axis
        .iter()
        .map(|&d| range_adjusted_threshold(eta, alpha, d.max(step)))
        .collect()
}

/// Local maxima (8-neighborhood, speed axis circular) above the range-adjusted
/// threshold, strongest first. Regions default to LOS until labeled.
pub fn detect_peaks(
    p: &Periodogram,
    cfg: &DetectionConfig,
    noise_var: f64,
) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let thresholds = threshold_profile(p, cfg, noise_var)?;
    let (rows, cols) = p.power.dim();
    let s = &p.power;
    let mut out = Vec::new();
    for n in 0..rows {
        let eta = thresholds[n];
        for m in 0..cols {
            let v = s[[n, m]];
            if !(v > eta) {
                continue;
            }
            let mut is_peak = true;
            'nb: for dn in -1i64..=1 {
                let nn = n as i64 + dn;
                if nn < 0 || nn >= rows as i64 {
                    continue;
                }
                for dm in -1i64..=1 {
                    if dn == 0 && dm == 0 {
                        continue;
                    }
                    let mm = (m as i64 + dm).rem_euclid(cols as i64) as usize;
                    let w = s[[nn as usize, mm]];
                    // Ties go to the first bin in scan order.
                    let earlier = (dn, dm) < (0, 0);
                    if w > v || (earlier && w == v) {
                        is_peak = false;
                        break 'nb;
                    }
                }
            }
            if is_peak {
                out.push(Detection {
                    range: p.range_axis[n],
                    speed: p.speed_axis[m],
                    power: v,
                    range_bin: n,
                    speed_bin: m,
                    region: Region::Los,
                    matched: false,
                    window_idx: 0,
                    time: 0.0,
                });
            }
        }
    }
    out.sort_by(|a, b| b.power.total_cmp(&a.power));
    Ok(out)
}

/// Copy of `p` with every bin of speed magnitude up to `halfwidth` set to zero.
pub fn mask_zero_speed(p: &Periodogram, halfwidth: f64) -> Result<Periodogram> {
    if !(halfwidth >= 0.0) {
        return Err(invalid("zero_speed_halfwidth", "must be non-negative"));
    }
    let mut out = p.clone();
    let tol = 1e-9 * p.speed_step();
    for (m, &v) in p.speed_axis.iter().enumerate() {
        if v.abs() <= halfwidth + tol {
            out.power.column_mut(m).fill(0.0);
        }
    }
    Ok(out)
}

/// LOS/NLOS split of the range axis; ranges beyond `d_wall` are NLOS.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub d_wall: f64,
    /// First NLOS range bin (equal to the bin count when the region is empty).
    pub first_nlos_bin: usize,
    pub range_bins: usize,
}

impl RegionMask {
    pub fn region_of_bin(&self, n: usize) -> Region {
        if n >= self.first_nlos_bin {
            Region::Nlos
        } else {
            Region::Los
        }
    }

    pub fn region_of_range(&self, d: f64) -> Region {
        if d > self.d_wall {
            Region::Nlos
        } else {
            Region::Los
        }
    }

    pub fn nlos_bins(&self) -> usize {
        self.range_bins - self.first_nlos_bin
    }

    pub fn label(&self, detections: &mut [Detection]) {
        for d in detections {
            d.region = self.region_of_bin(d.range_bin);
        }
    }
}

pub fn split_regions(p: &Periodogram, geometry: &SceneGeometry) -> Result<RegionMask> {
    let d_unamb = p.params.unambiguous_range();
    if !(geometry.d_wall > 0.0 && geometry.d_wall < d_unamb) {
        return Err(Error::Domain(format!(
            "wall distance {} m outside the unambiguous range {d_unamb} m",
            geometry.d_wall
        )));
    }
    let first = p
        .range_axis
        .iter()
        .position(|&d| d > geometry.d_wall)
        .unwrap_or(p.range_bins());
    Ok(RegionMask {
        d_wall: geometry.d_wall,
        first_nlos_bin: first,
        range_bins: p.range_bins(),
    })
}

/// Expected `(range, speed)` of the wall-reflected echo of a target seen at
/// slant range `d_los` with radial speed `v_los`.
pub fn expected_nlos(geometry: &SceneGeometry, d_los: f64, v_los: f64) -> Result<(f64, f64)> {
    let theta = geometry.theta_los(d_los)?;
    Ok((2.0 * geometry.d_wall - d_los * theta.sin(), -v_los))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Moving,
    Stationary,
    /// The window straddles a start or stop.
    Mixed,
}

/// Ground truth summarized over one observation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowTruth {
    pub time: f64,
    pub d_los: f64,
    pub v_los: f64,
    pub d_nlos: f64,
    pub v_nlos: f64,
    pub motion: Motion,
    pub target_present: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowDetections {
    pub window_idx: usize,
    pub time: f64,
    pub detections: Vec<Detection>,
    pub truth: WindowTruth,
    /// Unambiguous speed of the window's periodogram, for wrapped comparisons.
    pub v_unamb: f64,
    pub tol_range: f64,
    pub tol_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowOutcome {
    pub window_idx: usize,
    pub time: f64,
    pub motion: Motion,
    pub nlos_matched: bool,
    pub los_matched: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRateReport {
    pub windows_total: usize,
    pub windows_los_present: usize,
    pub windows_moving: usize,
    /// NLOS matches over all windows with the target present.
    pub overall_rate: f64,
    /// NLOS matches over fully moving windows.
    pub moving_rate: f64,
    /// LOS matches over fully moving windows.
    pub los_rate_moving: f64,
    pub per_window: Vec<WindowOutcome>,
}

fn wrapped_diff(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Marks matched detections and computes NLOS/LOS detection rates.
///
/// A window counts as an NLOS hit when one of its `top_k` strongest NLOS
/// detections lies within the tolerances of the expected NLOS echo.
pub fn match_and_rate(
    windows: &mut [WindowDetections],
    top_k: usize,
) -> Result<DetectionRateReport> {
    if windows.is_empty() {
        return Err(Error::Empty("truth stream"));
    }
    if top_k == 0 {
        return Err(invalid("top_k_nlos", "must be at least 1"));
    }
    let mut per_window = Vec::with_capacity(windows.len());
    for w in windows.iter_mut() {
        let t = w.truth;
        let (tol_d, tol_v, period) = (w.tol_range, w.tol_speed, w.v_unamb);
        let near = |det: &Detection, d: f64, v: f64| {
            (det.range - d).abs() <= tol_d && wrapped_diff(det.speed, v, period) <= tol_v
        };
        let mut nlos_hit = false;
        let mut los_hit = false;
        if t.target_present {
            let mut nlos_seen = 0;
            for det in w.detections.iter_mut() {
                match det.region {
                    Region::Nlos if nlos_seen < top_k => {
                        nlos_seen += 1;
                        if near(det, t.d_nlos, t.v_nlos) {
                            det.matched = true;
                            nlos_hit = true;
                        }
                    }
                    Region::Los if near(det, t.d_los, t.v_los) => {
                        det.matched = true;
                        los_hit = true;
                    }
                    _ => {}
                }
            }
        }
        per_window.push(WindowOutcome {
            window_idx: w.window_idx,
            time: w.time,
            motion: t.motion,
            nlos_matched: nlos_hit,
            los_matched: los_hit,
        });
    }
    let present = windows.iter().filter(|w| w.truth.target_present).count();
    let moving: Vec<&WindowOutcome> = per_window
        .iter()
        .zip(windows.iter())
        .filter(|(_, w)| w.truth.target_present && w.truth.motion == Motion::Moving)
        .map(|(o, _)| o)
        .collect();
    let hits = per_window.iter().filter(|o| o.nlos_matched).count();
    Ok(DetectionRateReport {
        windows_total: windows.len(),
        windows_los_present: present,
        windows_moving: moving.len(),
        overall_rate: ratio(hits, present),
        moving_rate: ratio(
            moving.iter().filter(|o| o.nlos_matched).count(),
            moving.len(),
        ),
        los_rate_moving: ratio(
            moving.iter().filter(|o| o.los_matched).count(),
            moving.len(),
        ),
        per_window,
    })
}

/// Trailing mean over `round(window_duration / update_period)` updates.
///
/// Element `i` of the result averages `flags[i..i + len]`, so the first value
/// belongs to update `len - 1`.
pub fn moving_average(
    flags: &[bool],
    window_duration: f64,
    update_period: f64,
) -> Result<Vec<f64>> {
    if !(update_period.is_finite() && update_period > 0.0) {
        return Err(invalid("update_period", "must be positive"));
    }
    if !(window_duration >= update_period) {
        return Err(invalid("window_duration", "shorter than one update"));
    }
    let len = (window_duration / update_period).round() as usize;
    if flags.len() < len {
        return Ok(Vec::new());
    }
    let mut count = flags[..len].iter().filter(|&&f| f).count();
    let mut out = Vec::with_capacity(flags.len() - len + 1);
    out.push(count as f64 / len as f64);
    for i in len..flags.len() {
        count += flags[i] as usize;
        count -= flags[i - len] as usize;
        out.push(count as f64 / len as f64);
    }
    Ok(out)
}
