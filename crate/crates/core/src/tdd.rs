//! TDD masking, slow-time decimation and multi-frame concatenation.

use std::collections::VecDeque;
use std::f64::consts::PI;

use ndarray::{s, Array2};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::model::CsiFrame;
use crate::params::{SystemParams, TddConfig};

/// Zero the uplink columns of a full frame.
pub fn apply_tdd_mask(
    frame: &CsiFrame,
    params: &SystemParams,
    tdd: &TddConfig,
) -> Result<CsiFrame> {
    frame.check_dims(params)?;
    let mut out = frame.clone();
    for (col, &symbol) in frame.symbols.iter().enumerate() {
        if !tdd.is_downlink(symbol) {
            out.data.column_mut(col).fill(Complex64::new(0.0, 0.0));
        }
    }
    Ok(out)
}

/// Downlink symbols kept by selecting every `factor`-th symbol of a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecimationPlan {
    pub factor: usize,
    pub indices: Vec<usize>,
    /// The selection repeats with uniform spacing across consecutive frames.
    pub uniform_across_frames: bool,
}

impl DecimationPlan {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn build_decimation_plan(
    params: &SystemParams,
    tdd: &TddConfig,
    factor: usize,
) -> Result<DecimationPlan> {
    if factor == 0 {
        return Err(invalid("decimation", "factor must be at least 1"));
    }
    let multiples: Vec<usize> = (0..params.symbols).step_by(factor).collect();
    let indices: Vec<usize> = multiples
        .iter()
        .copied()
        .filter(|&l| tdd.is_downlink(l))
        .collect();
    if indices.is_empty() {
        return Err(Error::EmptyDecimation(factor));
    }
    // Exact integer check: the grid must close on the frame boundary and no
    // multiple of the factor may land in an uplink block.
    let uniform_across_frames = params.symbols % factor == 0 && indices.len() == multiples.len();
    Ok(DecimationPlan {
        factor,
        indices,
        uniform_across_frames,
    })
}

/// `K` consecutive decimated frames concatenated along slow time.
#[derive(Debug, Clone)]
pub struct ObservationWindow {
    /// Frames per window.
    pub frames_per_window: usize,
    /// Frames between consecutive window starts.
    pub stride: usize,
    pub frame_indices: Vec<u64>,
    /// Absolute time of each retained symbol.
    pub symbol_times: Vec<f64>,
    /// `subcarriers x (K * plan.len())` CSI.
    pub data: Array2<Complex64>,
    /// Nominal slow-time sampling interval, `J * T_s`.
    pub sample_interval: f64,
}

impl ObservationWindow {
    pub fn columns(&self) -> usize {
        self.data.ncols()
    }

    pub fn start_time(&self) -> f64 {
        self.symbol_times.first().copied().unwrap_or(0.0)
    }

    /// Midpoint between the first frame start and the last frame end.
    pub fn center_time(&self, params: &SystemParams) -> f64 {
        let first = self.frame_indices.first().copied().unwrap_or(0) as f64;
        let last = self.frame_indices.last().copied().unwrap_or(0) as f64;
        0.5 * (first + last + 1.0) * params.frame_duration_s
    }
}

pub fn concatenate_window(
    frames: &[CsiFrame],
    plan: &DecimationPlan,
    params: &SystemParams,
    stride: usize,
) -> Result<ObservationWindow> {
    let k = frames.len();
    if k == 0 {
        return Err(Error::Empty("observation window needs at least one frame"));
    }
    if stride == 0 || stride > k {
        return Err(invalid(
            "stride",
            format!("must satisfy 1 <= V <= K ({k}), got {stride}"),
        ));
    }
    if k > 1 && !plan.uniform_across_frames {
        return Err(Error::NonUniformPlan(plan.factor));
    }
    for pair in frames.windows(2) {
        if pair[1].frame_idx != pair[0].frame_idx + 1 {
            return Err(Error::NonConsecutiveFrames {
                prev: pair[0].frame_idx,
                next: pair[1].frame_idx,
            });
        }
    }

    // Grid positions falling into uplink blocks stay zero so that the slow-time
    // samples remain uniformly spaced.
    let grid: Vec<usize> = (0..params.symbols).step_by(plan.factor).collect();
    let per_frame = grid.len();
    let mut data = Array2::<Complex64>::zeros((params.subcarriers, k * per_frame));
    let mut symbol_times = Vec::with_capacity(k * per_frame);
    for (f, frame) in frames.iter().enumerate() {
        frame.check_dims(params)?;
        for (i, &symbol) in grid.iter().enumerate() {
            if plan.indices.binary_search(&symbol).is_ok() {
                let col = frame.column_of(symbol).ok_or_else(|| {
                    Error::Domain(format!(
                        "frame {} does not store symbol {symbol} required by J={}",
                        frame.frame_idx, plan.factor
                    ))
                })?;
                data.column_mut(f * per_frame + i)
                    .assign(&frame.data.column(col));
            }
            symbol_times.push(frame.t0 + symbol as f64 * params.symbol_period_s);
        }
    }
    if symbol_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(
            "window symbol times must be strictly increasing".into(),
        ));
    }

    Ok(ObservationWindow {
        frames_per_window: k,
        stride,
        frame_indices: frames.iter().map(|f| f.frame_idx).collect(),
        symbol_times,
        data,
        sample_interval: plan.factor as f64 * params.symbol_period_s,
    })
}

/// Sliding window over a frame stream: emits a window every `stride` frames
/// once `frames_per_window` frames are buffered.
pub struct WindowBuilder {
    params: SystemParams,
    plan: DecimationPlan,
    frames_per_window: usize,
    stride: usize,
    buffer: VecDeque<CsiFrame>,
}

impl WindowBuilder {
    pub fn new(
        params: SystemParams,
        plan: DecimationPlan,
        frames_per_window: usize,
        stride: usize,
    ) -> Result<Self> {
        if frames_per_window == 0 {
            return Err(invalid("frames_per_window", "must be at least 1"));
        }
        if stride == 0 || stride > frames_per_window {
            return Err(invalid("stride", "must satisfy 1 <= V <= K"));
        }
        if frames_per_window > 1 && !plan.uniform_across_frames {
            return Err(Error::NonUniformPlan(plan.factor));
        }
        Ok(Self {
            params,
            plan,
            frames_per_window,
            stride,
            buffer: VecDeque::with_capacity(frames_per_window),
        })
    }

    /// Seconds between consecutive windows.
    pub fn update_period(&self) -> f64 {
        self.stride as f64 * self.params.frame_duration_s
    }

    /// Keep only the planned symbols of a frame to bound memory.
    fn reduce(&self, frame: CsiFrame) -> Result<CsiFrame> {
        if frame.symbols == self.plan.indices {
            return Ok(frame);
        }
        let mut data = Array2::<Complex64>::zeros((frame.data.nrows(), self.plan.len()));
        for (i, &symbol) in self.plan.indices.iter().enumerate() {
            let col = frame.column_of(symbol).ok_or_else(|| {
                Error::Domain(format!("frame {} lacks symbol {symbol}", frame.frame_idx))
            })?;
            data.column_mut(i).assign(&frame.data.column(col));
        }
        CsiFrame::new(data, self.plan.indices.clone(), frame.frame_idx, frame.t0)
    }

    /// Feed one frame; returns a window when one completes.
    pub fn push(&mut self, frame: CsiFrame) -> Result<Option<ObservationWindow>> {
        let frame = self.reduce(frame)?;
        if let Some(prev) = self.buffer.back() {
            if frame.frame_idx != prev.frame_idx + 1 {
                return Err(Error::NonConsecutiveFrames {
                    prev: prev.frame_idx,
                    next: frame.frame_idx,
                });
            }
        }
        self.buffer.push_back(frame);
        if self.buffer.len() < self.frames_per_window {
            return Ok(None);
        }
        let frames: Vec<CsiFrame> = self.buffer.iter().cloned().collect();
        let window = concatenate_window(&frames, &self.plan, &self.params, self.stride)?;
        for _ in 0..self.stride {
            self.buffer.pop_front();
        }
        Ok(Some(window))
    }
}

/// Speed spacing of the TDD replicas for full-frame processing.
pub fn replica_spacing(params: &SystemParams, tdd: &TddConfig) -> f64 {
    params.c0 * tdd.repetitions as f64
        / (2.0 * params.carrier_hz * params.symbols as f64 * params.symbol_period_s)
}

/// Normalized point-spread function of the TDD on/off pattern along speed.
///
/// `|sum_l w_l exp(-j 4 pi fc v l T_s / c0)|^2 / (sum_l w_l)^2` with `w` the
/// 0/1 downlink mask over one frame.
pub fn tdd_psf(params: &SystemParams, tdd: &TddConfig, speeds: &[f64]) -> Vec<f64> {
    let mask: Vec<usize> = (0..params.symbols)
        .filter(|&l| tdd.is_downlink(l))
        .collect();
    let norm = (mask.len() as f64).powi(2);
    speeds
        .iter()
        .map(|&v| {
            let step = -4.0 * PI * params.carrier_hz * v * params.symbol_period_s / params.c0;
            let sum: Complex64 = mask
                .iter()
                .map(|&l| Complex64::from_polar(1.0, step * l as f64))
                .sum();
            sum.norm_sqr() / norm
        })
        .collect()
}

/// Select every `factor`-th column of a concatenated full-frame matrix.
pub fn decimate_columns(data: &Array2<Complex64>, factor: usize) -> Array2<Complex64> {
    data.slice(s![.., ..;factor]).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synthesize_csi, synthesize_symbols, Scatterer};
    use ndarray::concatenate;
    use ndarray::Axis;

    fn ones_frame(params: &SystemParams) -> CsiFrame {
        let data = Array2::from_elem(
            (params.subcarriers, params.symbols),
            Complex64::new(1.0, 0.0),
        );
        CsiFrame::new(data, (0..params.symbols).collect(), 0, 0.0).unwrap()
    }

    fn narrow() -> SystemParams {
        SystemParams {
            subcarriers: 4,
            ..SystemParams::fr2_poc()
        }
    }

    #[test]
    fn mask_zeroes_uplink_columns() {
        let p = narrow();
        let masked = apply_tdd_mask(&ones_frame(&p), &p, &TddConfig::fr2_poc()).unwrap();
        let zero_cols = masked
            .data
            .columns()
            .into_iter()
            .filter(|c| c.iter().all(|z| z.norm() == 0.0))
            .count();
        assert_eq!(zero_cols, 8 * 36);
        assert_eq!(masked.data[[0, 103]], Complex64::new(1.0, 0.0));
        assert_eq!(masked.data[[0, 104]], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn mask_without_uplink_is_identity() {
        let p = narrow();
        let frame = ones_frame(&p);
        let masked = apply_tdd_mask(&frame, &p, &TddConfig::continuous(&p)).unwrap();
        assert_eq!(masked, frame);
    }

    #[test]
    fn mask_is_idempotent() {
        let p = narrow();
        let tdd = TddConfig::fr2_poc();
        let s = [Scatterer::new(3.0, 1.0, Complex64::new(1.0, 0.0))];
        let frame = synthesize_csi(&p, &s, 0.0, 0.5, 3).unwrap();
        let once = apply_tdd_mask(&frame, &p, &tdd).unwrap();
        let twice = apply_tdd_mask(&once, &p, &tdd).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn mask_rejects_wrong_dims() {
        let p = narrow();
        let other = SystemParams {
            subcarriers: 8,
            ..p
        };
        assert!(apply_tdd_mask(&ones_frame(&other), &p, &TddConfig::fr2_poc()).is_err());
    }

    #[test]
    fn plan_j70_is_uniform() {
        let p = SystemParams::fr2_poc();
        let plan = build_decimation_plan(&p, &TddConfig::fr2_poc(), 70).unwrap();
        assert_eq!(plan.len(), 16);
        assert_eq!(plan.indices[0], 0);
        assert_eq!(*plan.indices.last().unwrap(), 1050);
        assert!(plan.uniform_across_frames);
    }

    #[test]
    fn plan_j47_is_single_frame() {
        let p = SystemParams::fr2_poc();
        let tdd = TddConfig::fr2_poc();
        let plan = build_decimation_plan(&p, &tdd, 47).unwrap();
        assert_eq!(plan.len(), 24);
        assert!(plan.indices.iter().all(|&l| tdd.is_downlink(l)));
        assert!(!plan.uniform_across_frames);
    }

    #[test]
    fn plan_j1_without_uplink_keeps_all() {
        let p = SystemParams::fr2_poc();
        let plan = build_decimation_plan(&p, &TddConfig::continuous(&p), 1).unwrap();
        assert_eq!(plan.len(), p.symbols);
        assert!(plan.uniform_across_frames);
    }

    #[test]
    fn plan_errors() {
        let p = SystemParams::fr2_poc();
        assert!(build_decimation_plan(&p, &TddConfig::fr2_poc(), 0).is_err());
        // Symbol 0 is always downlink for a valid pattern, so an empty plan
        // needs a pattern without downlink symbols.
        let no_dl = TddConfig {
            dl_symbols: 0,
            ul_symbols: 140,
            ..TddConfig::fr2_poc()
        };
        assert!(matches!(
            build_decimation_plan(&p, &no_dl, 70),
            Err(Error::EmptyDecimation(70))
        ));
    }

    fn frames(p: &SystemParams, count: u64) -> Vec<CsiFrame> {
        let s = [Scatterer::new(7.0, 1.3, Complex64::new(1.0, 0.0))];
        (0..count)
            .map(|f| {
                let mut frame = synthesize_csi(p, &s, 0.0, 0.1, f).unwrap();
                frame.frame_idx = f;
                frame.t0 = f as f64 * p.frame_duration_s;
                frame
            })
            .collect()
    }

    #[test]
    fn window_column_counts() {
        let p = narrow();
        let tdd = TddConfig::fr2_poc();
        let plan = build_decimation_plan(&p, &tdd, 70).unwrap();
        let fs = frames(&p, 10);
        assert_eq!(
            concatenate_window(&fs[..6], &plan, &p, 2)
                .unwrap()
                .columns(),
            96
        );
        assert_eq!(
            concatenate_window(&fs, &plan, &p, 2).unwrap().columns(),
            160
        );
        let j47 = build_decimation_plan(&p, &tdd, 47).unwrap();
        assert_eq!(
            concatenate_window(&fs[..1], &j47, &p, 1).unwrap().columns(),
            24
        );
    }

    #[test]
    fn single_frame_j1_window_is_the_masked_frame() {
        let p = narrow();
        let tdd = TddConfig::fr2_poc();
        let frame = frames(&p, 1).remove(0);
        let plan = build_decimation_plan(&p, &tdd, 1).unwrap();
        assert_eq!(plan.len(), 832);
        let w = concatenate_window(std::slice::from_ref(&frame), &plan, &p, 1).unwrap();
        assert_eq!(w.columns(), 1120);
        assert_eq!(w.data, apply_tdd_mask(&frame, &p, &tdd).unwrap().data);
        let reduced =
            CsiFrame::new(decimate_dl(&frame, &plan), plan.indices.clone(), 0, 0.0).unwrap();
        assert_eq!(
            concatenate_window(&[reduced], &plan, &p, 1).unwrap().data,
            w.data
        );
    }

    fn decimate_dl(frame: &CsiFrame, plan: &DecimationPlan) -> Array2<Complex64> {
        let cols: Vec<_> = plan.indices.iter().map(|&l| frame.data.column(l)).collect();
        ndarray::stack(Axis(1), &cols).unwrap()
    }

    #[test]
    fn window_errors() {
        let p = narrow();
        let tdd = TddConfig::fr2_poc();
        let fs = frames(&p, 3);
        let j47 = build_decimation_plan(&p, &tdd, 47).unwrap();
        assert!(matches!(
            concatenate_window(&fs[..2], &j47, &p, 1),
            Err(Error::NonUniformPlan(47))
        ));
        let plan = build_decimation_plan(&p, &tdd, 70).unwrap();
        let gap = vec![fs[0].clone(), fs[2].clone()];
        assert!(matches!(
            concatenate_window(&gap, &plan, &p, 1),
            Err(Error::NonConsecutiveFrames { .. })
        ));
        assert!(concatenate_window(&fs, &plan, &p, 4).is_err());
        assert!(concatenate_window(&fs, &plan, &p, 0).is_err());
    }

    #[test]
    fn window_times_increase_with_nominal_spacing() {
        let p = narrow();
        let plan = build_decimation_plan(&p, &TddConfig::fr2_poc(), 70).unwrap();
        let w = concatenate_window(&frames(&p, 4), &plan, &p, 2).unwrap();
        let dt = 70.0 * p.symbol_period_s;
        for pair in w.symbol_times.windows(2) {
            let gap = pair[1] - pair[0];
            // Frame boundaries add the frame's idle tail (T_f - M T_s).
            assert!(
                gap >= dt - 1e-12
                    && gap <= dt + (p.frame_duration_s - 1120.0 * p.symbol_period_s) + 1e-12
            );
        }
        assert!((w.sample_interval - dt).abs() < 1e-15);
    }

    #[test]
    fn decimate_commutes_with_concatenate() {
        let p = narrow();
        let plan = build_decimation_plan(&p, &TddConfig::fr2_poc(), 70).unwrap();
        let fs = frames(&p, 3);
        let window = concatenate_window(&fs, &plan, &p, 1).unwrap();
        let views: Vec<_> = fs.iter().map(|f| f.data.view()).collect();
        let joined = concatenate(Axis(1), &views).unwrap();
        assert_eq!(decimate_columns(&joined, 70), window.data);
    }

    #[test]
    fn builder_emits_with_stride() {
        let p = narrow();
        let plan = build_decimation_plan(&p, &TddConfig::fr2_poc(), 70).unwrap();
        let mut builder = WindowBuilder::new(p, plan, 4, 2).unwrap();
        let mut starts = Vec::new();
        for f in frames(&p, 10) {
            if let Some(w) = builder.push(f).unwrap() {
                starts.push(w.frame_indices[0]);
                assert_eq!(w.frame_indices.len(), 4);
            }
        }
        assert_eq!(starts, vec![0, 2, 4, 6]);
        assert!((builder.update_period() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn builder_accepts_reduced_frames() {
        let p = narrow();
        let plan = build_decimation_plan(&p, &TddConfig::fr2_poc(), 70).unwrap();
        let s = [Scatterer::new(7.0, 1.3, Complex64::new(1.0, 0.0))];
        let full = frames(&p, 2);
        let mut builder = WindowBuilder::new(p, plan.clone(), 2, 1).unwrap();
        let mut from_reduced = None;
        for f in 0..2u64 {
            let data = synthesize_symbols(&p, &plan.indices, &s, 0.0, 0.1, f).unwrap();
            let frame = CsiFrame::new(data, plan.indices.clone(), f, f as f64 * p.frame_duration_s)
                .unwrap();
            from_reduced = builder.push(frame).unwrap();
        }
        let direct = concatenate_window(&full, &plan, &p, 1).unwrap();
        assert_eq!(from_reduced.unwrap().data, direct.data);
    }

    #[test]
    fn replica_spacing_values() {
        let p = SystemParams::fr2_poc();
        assert!((replica_spacing(&p, &TddConfig::fr2_poc()) / 4.4 - 1.0).abs() < 0.02);
        let b = crate::params::performance_bounds(&p, p.symbols, p.symbol_period_s).unwrap();
        assert!((replica_spacing(&p, &TddConfig::continuous(&p)) - b.v_res).abs() < 1e-12);
        let two = TddConfig {
            pattern_duration_s: 5e-3,
            dl_symbols: 416,
            ul_symbols: 144,
            repetitions: 2,
        };
        assert!((replica_spacing(&p, &two) - 1.10).abs() < 0.01);
    }

    #[test]
    fn psf_of_continuous_is_dirichlet() {
        let p = SystemParams::fr2_poc();
        let tdd = TddConfig::continuous(&p);
        let v_res = p.unambiguous_speed(p.symbol_period_s) / p.symbols as f64;
        let psf = tdd_psf(&p, &tdd, &[0.0, v_res, 2.0 * v_res, 1.5 * v_res]);
        assert!((psf[0] - 1.0).abs() < 1e-12);
        assert!(psf[1] < 1e-12 && psf[2] < 1e-12);
        // Dirichlet first sidelobe of a long rectangle: (2 / (3 pi))^2.
        assert!((psf[3] - (2.0 / (3.0 * PI)).powi(2)).abs() < 1e-3);
    }

    #[test]
    fn psf_matches_dft_of_mask() {
        use rustfft::FftPlanner;
        let p = SystemParams::fr2_poc();
        let tdd = TddConfig::fr2_poc();
        let n = 2048;
        let mut seq: Vec<Complex64> = (0..n)
            .map(|l| {
                let on = l < p.symbols && tdd.is_downlink(l);
                Complex64::new(if on { 1.0 } else { 0.0 }, 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut seq);
        let dl = (0..p.symbols).filter(|&l| tdd.is_downlink(l)).count() as f64;
        let v_unamb = p.unambiguous_speed(p.symbol_period_s);
        let speeds: Vec<f64> = (0..n).map(|m| m as f64 * v_unamb / n as f64).collect();
        let psf = tdd_psf(&p, &tdd, &speeds);
        for (m, value) in psf.iter().enumerate() {
            let reference = seq[m].norm_sqr() / (dl * dl);
            assert!(
                (value - reference).abs() <= 1e-9 * reference + 1e-12,
                "bin {m}"
            );
        }
    }

    #[test]
    fn psf_peaks_at_replica_multiples() {
        let p = SystemParams::fr2_poc();
        let tdd = TddConfig::fr2_poc();
        let spacing = replica_spacing(&p, &tdd);
        let v_res = p.unambiguous_speed(p.symbol_period_s) / p.symbols as f64;
        let step = 0.001;
        let speeds: Vec<f64> = (-12_000..=12_000).map(|i| i as f64 * step).collect();
        let psf = tdd_psf(&p, &tdd, &speeds);
        for n in [-2i32, -1, 1, 2] {
            let target = n as f64 * spacing;
            // Largest value within +-0.2 m/s of the predicted replica.
            let (best, _) = speeds
                .iter()
                .zip(&psf)
                .filter(|(v, _)| (*v - target).abs() < 0.2)
                .fold(
                    (0.0, 0.0),
                    |acc, (&v, &y)| if y > acc.1 { (v, y) } else { acc },
                );
            // The single-pattern envelope tilts each grating lobe slightly.
            assert!(
                (best - target).abs() < v_res / 4.0,
                "replica {n} at {best}, expected {target}"
            );
        }
    }
}
