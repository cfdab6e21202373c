//! Synthetic intrusion scenario: a target walking between the radio pole and a
//! wall, seen directly (LOS) and via a wall bounce (NLOS).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detection::{expected_nlos, Motion, SceneGeometry, WindowTruth};
use crate::error::{invalid, Error, Result};
use crate::model::{synthesize_symbols, CsiFrame, Scatterer};
use crate::params::{SystemParams, TddConfig};

/// Straight walk from `start` to `end` (ground ranges from the pole foot)
/// followed by a stationary pause.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    /// Ground speed magnitude, m/s.
    pub speed: f64,
    pub dwell_after: f64,
}

impl Segment {
    fn travel_time(&self) -> f64 {
        if self.start == self.end {
            0.0
        } else {
            (self.end - self.start).abs() / self.speed
        }
    }

    pub fn duration(&self) -> f64 {
        self.travel_time() + self.dwell_after
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
}

/// Ground position and signed ground velocity at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub ground_range: f64,
    pub ground_velocity: f64,
}

impl Trajectory {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let t = Self { segments };
        t.validate(None)?;
        Ok(t)
    }

    /// Alternating legs between `near` and `far`, starting at `near`, with a
    /// dwell after each leg, until `duration` is covered.
    pub fn back_and_forth(
        near: f64,
        far: f64,
        speed: f64,
        dwell: f64,
        duration: f64,
    ) -> Result<Self> {
        if !(speed > 0.0) {
            return Err(invalid(
                "speed",
                "must be positive for a back-and-forth walk",
            ));
        }
        if !(far > near) {
            return Err(invalid("far", "must exceed near"));
        }
        if !(dwell >= 0.0 && duration > 0.0) {
            return Err(invalid(
                "duration",
                "dwell must be non-negative and duration positive",
            ));
        }
        let mut segments = Vec::new();
        let mut covered = 0.0;
        let (mut a, mut b) = (near, far);
        while covered < duration {
            let s = Segment {
                start: a,
                end: b,
                speed,
                dwell_after: dwell,
            };
            covered += s.duration();
            segments.push(s);
            std::mem::swap(&mut a, &mut b);
        }
        Self::new(segments)
    }

    pub fn validate(&self, geometry: Option<&SceneGeometry>) -> Result<()> {
        if self.segments.is_empty() {
            return Err(invalid("trajectory", "needs at least one segment"));
        }
        for s in &self.segments {
            if !(s.speed.is_finite() && s.speed >= 0.0) {
                return Err(invalid("speed", "must be non-negative"));
            }
            if s.speed == 0.0 && s.start != s.end {
                return Err(invalid("speed", "zero speed requires start == end"));
            }
            if !(s.dwell_after.is_finite() && s.dwell_after >= 0.0) {
                return Err(invalid("dwell_after", "must be non-negative"));
            }
            let limit = geometry.map_or(f64::INFINITY, |g| g.d_wall);
            for x in [s.start, s.end] {
                if !(x.is_finite() && x > 0.0 && x < limit) {
                    return Err(invalid(
                        "ground_range",
                        format!("{x} m outside (0, d_wall)"),
                    ));
                }
            }
        }
        if self.duration() <= 0.0 {
            return Err(invalid("trajectory", "has zero duration"));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    pub fn sample(&self, t: f64) -> Result<TrajectoryPoint> {
        let total = self.duration();
        if !(t >= 0.0 && t <= total) {
            return Err(Error::Domain(format!(
                "time {t} s outside trajectory [0, {total}] s"
            )));
        }
        let mut start = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            let travel = s.travel_time();
            let end = start + s.duration();
            if t < end || i + 1 == self.segments.len() {
                let local = t - start;
                if local < travel {
                    let dir = (s.end - s.start).signum();
                    return Ok(TrajectoryPoint {
                        ground_range: s.start + dir * s.speed * local,
                        ground_velocity: dir * s.speed,
                    });
                }
                return Ok(TrajectoryPoint {
                    ground_range: s.end,
                    ground_velocity: 0.0,
                });
            }
            start = end;
        }
        unreachable!("segments cover the duration")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthSample {
    pub t: f64,
    pub d_los: f64,
    pub v_los: f64,
    pub d_nlos: f64,
    pub v_nlos: f64,
    pub moving: bool,
}

pub fn sample_truth(
    geometry: &SceneGeometry,
    traj: &Trajectory,
    t: f64,
) -> Result<GroundTruthSample> {
    let p = traj.sample(t)?;
    let x = p.ground_range;
    let d_los = geometry.h_gnb.hypot(x);
    let v_los = x * p.ground_velocity / d_los;
    let (d_nlos, v_nlos) = expected_nlos(geometry, d_los, v_los)?;
    Ok(GroundTruthSample {
        t,
        d_los,
        v_los,
        d_nlos,
        v_nlos,
        moving: p.ground_velocity != 0.0,
    })
}

/// Reflection amplitudes of the three paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeConfig {
    pub gain: f64,
    pub rho_los: f64,
    /// Wall reflectivity; scales both the static wall echo and the bounce path.
    pub rho_wall: f64,
    pub rho_nlos: f64,
    /// Extra loss of the double-bounce path, dB.
    pub nlos_reflection_loss_db: f64,
    /// Scale amplitudes by `1 / d^2`.
    pub path_loss: bool,
}

impl Default for AmplitudeConfig {
    fn default() -> Self {
        Self {
            gain: 100.0,
            rho_los: 1.0,
            rho_wall: 1.0,
            rho_nlos: 1.0,
            nlos_reflection_loss_db: 10.0,
            path_loss: true,
        }
    }
}

impl AmplitudeConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("gain", self.gain),
            ("rho_los", self.rho_los),
            ("rho_wall", self.rho_wall),
            ("rho_nlos", self.rho_nlos),
            ("nlos_reflection_loss_db", self.nlos_reflection_loss_db),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, "must be non-negative"));
            }
        }
        Ok(())
    }

    fn amplitude(&self, rho: f64, d: f64) -> f64 {
        if self.path_loss {
            self.gain * rho / (d * d)
        } else {
            self.gain * rho
        }
    }
}

/// Slant range of the wall echo.
pub fn wall_range(geometry: &SceneGeometry) -> f64 {
    geometry.h_gnb.hypot(geometry.d_wall)
}

/// `(range, speed, amplitude)` of the LOS, wall and NLOS paths.
fn path_table(
    geometry: &SceneGeometry,
    truth: &GroundTruthSample,
    amp: &AmplitudeConfig,
) -> [(f64, f64, f64); 3] {
    let loss = 10f64.powf(-amp.nlos_reflection_loss_db / 20.0);
    let d_wall = wall_range(geometry);
    [
        (
            truth.d_los,
            truth.v_los,
            amp.amplitude(amp.rho_los, truth.d_los),
        ),
        (d_wall, 0.0, amp.amplitude(amp.rho_wall, d_wall)),
        (
            truth.d_nlos,
            truth.v_nlos,
            amp.amplitude(amp.rho_nlos * amp.rho_wall, truth.d_nlos) * loss,
        ),
    ]
}

/// LOS, wall and NLOS scatterers for one truth sample; zero-amplitude paths
/// are omitted. Coefficients are real; per-path phase is applied by the caller.
pub fn compose_scene(
    geometry: &SceneGeometry,
    truth: &GroundTruthSample,
    amp: &AmplitudeConfig,
) -> Vec<Scatterer> {
    path_table(geometry, truth, amp)
        .into_iter()
        .filter(|&(_, _, b)| b > 0.0)
        .map(|(d, v, b)| Scatterer::new(d, v, Complex64::new(b, 0.0)))
        .collect()
}

/// Global phase `phi` applied to each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseMode {
    /// `phi = 0` for every frame.
    #[default]
    Coherent,
    /// Fresh uniform `phi` per frame.
    Incoherent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementConfig {
    pub params: SystemParams,
    pub tdd: TddConfig,
    pub geometry: SceneGeometry,
    pub trajectory: Trajectory,
    pub amplitudes: AmplitudeConfig,
    pub noise_var: f64,
    pub phase_mode: PhaseMode,
    pub seed: u64,
    pub duration: f64,
    /// Symbols stored per frame; uplink symbols are stored as zeros.
    pub symbols: Vec<usize>,
    /// Leave the target out entirely (calibration runs).
    pub target_present: bool,
}

impl MeasurementConfig {
    pub fn frames(&self) -> u64 {
        (self.duration / self.params.frame_duration_s + 1e-9).floor() as u64
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.tdd.validate(&self.params)?;
        self.geometry.validate()?;
        self.trajectory.validate(Some(&self.geometry))?;
        self.amplitudes.validate()?;
        if !(self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return Err(invalid("noise_var", "must be non-negative"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) || self.frames() == 0 {
            return Err(invalid("duration", "empty run"));
        }
        if self.target_present && self.duration > self.trajectory.duration() + 1e-9 {
            return Err(invalid(
                "duration",
                format!(
                    "{} s exceeds the {} s trajectory",
                    self.duration,
                    self.trajectory.duration()
                ),
            ));
        }
        if self.symbols.is_empty() {
            return Err(invalid("symbols", "at least one symbol must be stored"));
        }
        if self.symbols.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("symbols", "must be strictly increasing"));
        }
        if let Some(&bad) = self.symbols.iter().find(|&&l| l >= self.params.symbols) {
            return Err(Error::OutOfRange {
                index: bad,
                len: self.params.symbols,
            });
        }
        Ok(())
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise seed of one frame of a run.
pub fn frame_seed(run_seed: u64, frame_idx: u64) -> u64 {
    mix(run_seed ^ mix(frame_idx))
}

/// Deterministic stream of frames and ground truth, one per frame period.
///
/// The scene is sampled at each frame midpoint. Every path carries its own
/// carrier phase, advanced between frames by its radial speed, so consecutive
/// frames stay coherent.
pub struct Measurement {
    cfg: MeasurementConfig,
    next: u64,
    total: u64,
    path_phase: [f64; 3],
}

pub fn run_measurement(cfg: MeasurementConfig) -> Result<Measurement> {
    cfg.validate()?;
    let total = cfg.frames();
    Ok(Measurement {
        cfg,
        next: 0,
        total,
        path_phase: [0.0; 3],
    })
}

impl Measurement {
    pub fn config(&self) -> &MeasurementConfig {
        &self.cfg
    }

    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    fn frame(&mut self, idx: u64) -> Result<(CsiFrame, GroundTruthSample)> {
        let cfg = &self.cfg;
        let p = &cfg.params;
        let t0 = idx as f64 * p.frame_duration_s;
        let mid = (t0 + 0.5 * p.frame_duration_s).min(cfg.trajectory.duration());
        let truth = sample_truth(&cfg.geometry, &cfg.trajectory, mid)?;

        let mut paths = path_table(&cfg.geometry, &truth, &cfg.amplitudes);
        if !cfg.target_present {
            paths[0].2 = 0.0;
            paths[2].2 = 0.0;
        }
        let scatterers: Vec<Scatterer> = paths
            .iter()
            .zip(self.path_phase.iter())
            .filter(|((_, _, b), _)| *b > 0.0)
            .map(|(&(d, v, b), &psi)| Scatterer::new(d, v, Complex64::from_polar(b, psi)))
            .collect();

        let seed = frame_seed(cfg.seed, idx);
        let phi = match cfg.phase_mode {
            PhaseMode::Coherent => 0.0,
            PhaseMode::Incoherent => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(u64::MAX);
                rng.random_range(0.0..2.0 * PI)
            }
        };
        let mut data = synthesize_symbols(p, &cfg.symbols, &scatterers, phi, cfg.noise_var, seed)?;
        for (col, &l) in cfg.symbols.iter().enumerate() {
            if !cfg.tdd.is_downlink(l) {
                data.column_mut(col).fill(Complex64::new(0.0, 0.0));
            }
        }

        let step = 4.0 * PI * p.carrier_hz * p.frame_duration_s / p.c0;
        for (psi, &(_, v, _)) in self.path_phase.iter_mut().zip(paths.iter()) {
            *psi = (*psi + step * v).rem_euclid(2.0 * PI);
        }
        let frame = CsiFrame::new(data, cfg.symbols.clone(), idx, t0)?;
        Ok((frame, truth))
    }
}

impl Iterator for Measurement {
    type Item = Result<(CsiFrame, GroundTruthSample)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.total {
            return None;
        }
        let idx = self.next;
        self.next += 1;
        Some(self.frame(idx))
    }
}

/// Truth for a window from the per-frame samples of its frames.
///
/// Position and speed are taken at the window center (interpolated between
/// the two middle frames for even counts).
pub fn window_truth(
    geometry: &SceneGeometry,
    samples: &[GroundTruthSample],
    target_present: bool,
) -> Result<WindowTruth> {
    if samples.is_empty() {
        return Err(Error::Empty("window truth samples"));
    }
    let n = samples.len();
    let (a, b) = (&samples[(n - 1) / 2], &samples[n / 2]);
    let d_los = 0.5 * (a.d_los + b.d_los);
    let v_los = 0.5 * (a.v_los + b.v_los);
    let (d_nlos, v_nlos) = expected_nlos(geometry, d_los.max(geometry.h_gnb), v_los)?;
    let moving = samples.iter().filter(|s| s.moving).count();
    let motion = if moving == n {
        Motion::Moving
    } else if moving == 0 {
        Motion::Stationary
    } else {
        Motion::Mixed
    };
    Ok(WindowTruth {
        time: 0.5 * (a.t + b.t),
        d_los,
        v_los,
        d_nlos,
        v_nlos,
        motion,
        target_present,
    })
}
