//! End-to-end processing shared by the command-line tool and the tests:
//! windowing, clutter removal, periodogram, masking, detection and matching.

use rayon::prelude::*;

use crate::clutter::{
    extract_environment, fit_clutter, remove_clutter, ClutterModel, EnvironmentConfig,
};
use crate::detection::{
    detect_peaks, mask_zero_speed, match_and_rate, moving_average, split_regions, Detection,
    DetectionConfig, DetectionRateReport, SceneGeometry, WindowDetections,
};
use crate::error::{invalid, Error, Result};
use crate::model::CsiFrame;
use crate::params::{SystemParams, TddConfig};
use crate::periodogram::{compute_periodogram, estimate_noise_floor, periodogram_snr, Periodogram};
use crate::scenario::{window_truth, GroundTruthSample};
use crate::taper::Taper;
use crate::tdd::{build_decimation_plan, DecimationPlan, ObservationWindow, WindowBuilder};

/// Decimation `J`, frames per window `K`, stride `V` and taper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessingConfig {
    pub decimation: usize,
    pub frames_per_window: usize,
    pub stride: usize,
    pub taper: Taper,
}

impl Default for ProcessingConfig {
    fn default() -> Self {
        Self {
            decimation: 70,
            frames_per_window: 8,
            stride: 2,
            taper: Taper::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub params: SystemParams,
    pub tdd: TddConfig,
    pub processing: ProcessingConfig,
    pub detection: DetectionConfig,
    pub geometry: SceneGeometry,
    /// Span of the detection-rate moving average, seconds.
    pub moving_average_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            params: SystemParams::fr2_poc(),
            tdd: TddConfig::fr2_poc(),
            processing: ProcessingConfig::default(),
            detection: DetectionConfig::default(),
            geometry: SceneGeometry::default(),
            moving_average_s: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.tdd.validate(&self.params)?;
        self.detection.validate()?;
        self.geometry.validate()?;
        if self.geometry.d_wall >= self.params.unambiguous_range() {
            return Err(invalid("d_wall", "beyond the unambiguous range"));
        }
        if !(self.moving_average_s.is_finite() && self.moving_average_s > 0.0) {
            return Err(invalid("moving_average_s", "must be positive"));
        }
        self.plan()?;
        let p = &self.processing;
        if p.frames_per_window == 0 || p.stride == 0 || p.stride > p.frames_per_window {
            return Err(invalid("stride", "must satisfy 1 <= V <= K"));
        }
        Ok(())
    }

    pub fn plan(&self) -> Result<DecimationPlan> {
        let plan = build_decimation_plan(&self.params, &self.tdd, self.processing.decimation)?;
        if self.processing.frames_per_window > 1 && !plan.uniform_across_frames {
            return Err(Error::NonUniformPlan(plan.factor));
        }
        Ok(plan)
    }

    pub fn update_period(&self) -> f64 {
        self.processing.stride as f64 * self.params.frame_duration_s
    }
}

/// Periodogram of a window, optionally after clutter removal.
pub fn window_periodogram(
    window: &ObservationWindow,
    clutter: Option<&ClutterModel>,
    params: &SystemParams,
    taper: Taper,
) -> Result<Periodogram> {
    match clutter {
        Some(model) => {
            let cleaned = remove_clutter(window.data.view(), model)?;
            compute_periodogram(cleaned.view(), params, window.sample_interval, taper)
        }
        None => compute_periodogram(window.data.view(), params, window.sample_interval, taper),
    }
}

/// Detections of one window with the tolerances used to match them.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowAnalysis {
    pub window_idx: usize,
    pub time: f64,
    pub frame_indices: Vec<u64>,
    pub noise_var: f64,
    pub detections: Vec<Detection>,
    pub v_unamb: f64,
    pub tol_range: f64,
    pub tol_speed: f64,
}

pub fn analyze_window(
    window: &ObservationWindow,
    window_idx: usize,
    clutter: Option<&ClutterModel>,
    cfg: &PipelineConfig,
) -> Result<WindowAnalysis> {
    let p = window_periodogram(window, clutter, &cfg.params, cfg.processing.taper)?;
    let noise_var = estimate_noise_floor(&p)?;
    let masked = mask_zero_speed(&p, cfg.detection.halfwidth_for(&p))?;
    let mut detections = detect_peaks(&masked, &cfg.detection, noise_var)?;
    split_regions(&masked, &cfg.geometry)?.label(&mut detections);
    let time = window.center_time(&cfg.params);
    for d in &mut detections {
        d.window_idx = window_idx;
        d.time = time;
    }
    let (tol_range, tol_speed) = cfg.detection.tolerances_for(&p);
    Ok(WindowAnalysis {
        window_idx,
        time,
        frame_indices: window.frame_indices.clone(),
        noise_var,
        detections,
        v_unamb: p.unambiguous_speed(),
        tol_range,
        tol_speed,
    })
}

/// Feeds frames through a window builder and analyzes windows in parallel batches.
pub fn analyze_stream<I>(
    frames: I,
    clutter: Option<&ClutterModel>,
    cfg: &PipelineConfig,
) -> Result<Vec<WindowAnalysis>>
where
    I: IntoIterator<Item = Result<CsiFrame>>,
{
    const BATCH: usize = 32;
    cfg.validate()?;
    let p = &cfg.processing;
    let mut builder = WindowBuilder::new(cfg.params, cfg.plan()?, p.frames_per_window, p.stride)?;
    let mut out = Vec::new();
    let mut pending: Vec<ObservationWindow> = Vec::with_capacity(BATCH);
    let flush =
        |pending: &mut Vec<ObservationWindow>, out: &mut Vec<WindowAnalysis>| -> Result<()> {
            let base = out.len();
            let results: Vec<Result<WindowAnalysis>> = pending
                .par_iter()
                .enumerate()
                .map(|(i, w)| analyze_window(w, base + i, clutter, cfg))
                .collect();
            for r in results {
                out.push(r?);
            }
            pending.clear();
            Ok(())
        };
    for frame in frames {
        if let Some(w) = builder.push(frame?)? {
            pending.push(w);
            if pending.len() == BATCH {
                flush(&mut pending, &mut out)?;
            }
        }
    }
    flush(&mut pending, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRun {
    pub windows: Vec<WindowDetections>,
    pub report: DetectionRateReport,
    /// `(time, rate)` of the trailing NLOS detection-rate average.
    pub moving_average: Vec<(f64, f64)>,
    pub clutter_applied: bool,
    pub update_period: f64,
}

impl DetectionRun {
    pub fn all_detections(&self) -> Vec<Detection> {
        self.windows
            .iter()
            .flat_map(|w| w.detections.iter().cloned())
            .collect()
    }
}

/// Matches analyzed windows against per-frame truth (indexed by frame number).
pub fn score_windows(
    analyses: Vec<WindowAnalysis>,
    truth: &[GroundTruthSample],
    target_present: bool,
    clutter_applied: bool,
    cfg: &PipelineConfig,
) -> Result<DetectionRun> {
    if truth.is_empty() {
        return Err(Error::Empty("truth stream"));
    }
    let mut windows = Vec::with_capacity(analyses.len());
    for a in analyses {
        let samples: Vec<GroundTruthSample> = a
            .frame_indices
            .iter()
            .map(|&f| {
                truth.get(f as usize).copied().ok_or(Error::OutOfRange {
                    index: f as usize,
                    len: truth.len(),
                })
            })
            .collect::<Result<_>>()?;
        windows.push(WindowDetections {
            window_idx: a.window_idx,
            time: a.time,
            detections: a.detections,
            truth: window_truth(&cfg.geometry, &samples, target_present)?,
            v_unamb: a.v_unamb,
            tol_range: a.tol_range,
            tol_speed: a.tol_speed,
        });
    }
    let report = match_and_rate(&mut windows, cfg.detection.top_k_nlos)?;
    let update_period = cfg.update_period();
    let flags: Vec<bool> = report.per_window.iter().map(|o| o.nlos_matched).collect();
    let averages = if cfg.moving_average_s >= update_period {
        moving_average(&flags, cfg.moving_average_s, update_period)?
    } else {
        flags.iter().map(|&f| f as u8 as f64).collect()
    };
    let offset = flags.len() - averages.len();
    let moving = averages
        .into_iter()
        .enumerate()
        .map(|(i, r)| (report.per_window[i + offset].time, r))
        .collect();
    Ok(DetectionRun {
        windows,
        report,
        moving_average: moving,
        clutter_applied,
        update_period,
    })
}

/// Full detection run over a frame stream.
pub fn run_detection<I>(
    frames: I,
    truth: &[GroundTruthSample],
    target_present: bool,
    clutter: Option<&ClutterModel>,
    cfg: &PipelineConfig,
) -> Result<DetectionRun>
where
    I: IntoIterator<Item = Result<CsiFrame>>,
{
    let analyses = analyze_stream(frames, clutter, cfg)?;
    if analyses.is_empty() {
        return Err(Error::Empty(
            "no complete observation window in the capture",
        ));
    }
    score_windows(analyses, truth, target_present, clutter.is_some(), cfg)
}

/// Clutter model from the first `calib_count` windows of a target-free stream.
pub fn calibrate<I>(
    frames: I,
    cfg: &PipelineConfig,
    calib_count: usize,
    energy_threshold: f64,
) -> Result<ClutterModel>
where
    I: IntoIterator<Item = Result<CsiFrame>>,
{
    let windows = calibration_windows(frames, cfg, calib_count)?;
    let data: Vec<_> = windows.into_iter().map(|w| w.data).collect();
    fit_clutter(&data, energy_threshold)
}

pub fn calibration_windows<I>(
    frames: I,
    cfg: &PipelineConfig,
    calib_count: usize,
) -> Result<Vec<ObservationWindow>>
where
    I: IntoIterator<Item = Result<CsiFrame>>,
{
    cfg.validate()?;
    let p = &cfg.processing;
    let mut builder = WindowBuilder::new(cfg.params, cfg.plan()?, p.frames_per_window, p.stride)?;
    let mut windows = Vec::with_capacity(calib_count);
    for frame in frames {
        if let Some(w) = builder.push(frame?)? {
            windows.push(w);
            if windows.len() == calib_count {
                break;
            }
        }
    }
    if windows.len() < calib_count {
        return Err(invalid(
            "calib_frames",
            format!(
                "capture yields {} calibration windows, {calib_count} required",
                windows.len()
            ),
        ));
    }
    Ok(windows)
}

/// Ground distance of the wall from an unmasked calibration window.
pub fn estimate_wall_distance(window: &ObservationWindow, cfg: &PipelineConfig) -> Result<f64> {
    let p = window_periodogram(window, None, &cfg.params, cfg.processing.taper)?;
    let env = EnvironmentConfig {
        p_fa: cfg.detection.p_fa,
        ..Default::default()
    };
    let slant = extract_environment(&p, &env)?;
    let h = cfg.geometry.h_gnb;
    Ok(if slant > h {
        (slant * slant - h * h).sqrt()
    } else {
        slant
    })
}

/// Periodogram SNR of the first window of `(K, J)` in a frame sequence.
pub fn window_snr(
    frames: &[CsiFrame],
    params: &SystemParams,
    tdd: &TddConfig,
    k: usize,
    j: usize,
    taper: Taper,
) -> Result<(usize, f64)> {
    if frames.len() < k {
        return Err(Error::Empty("not enough frames for the requested window"));
    }
    let plan = build_decimation_plan(params, tdd, j)?;
    let window = crate::tdd::concatenate_window(&frames[..k], &plan, params, k)?;
    let p = compute_periodogram(window.data.view(), params, window.sample_interval, taper)?;
    let noise = estimate_noise_floor(&p)?;
    Ok((window.columns(), periodogram_snr(&p, noise)?))
}
