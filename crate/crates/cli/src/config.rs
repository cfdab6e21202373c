//! TOML run configuration. Every key is optional; defaults reproduce the FR2
//! prototype numerology with K=8, J=70, V=2 processing.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use nlos_core::detection::{AlphaPolicy, DetectionConfig, SceneGeometry};
use nlos_core::pipeline::{PipelineConfig, ProcessingConfig};
use nlos_core::scenario::{AmplitudeConfig, MeasurementConfig, PhaseMode, Trajectory};
use nlos_core::tdd::build_decimation_plan;
use nlos_core::{Error as CoreError, SystemParams, Taper, TddConfig};

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub radio: RadioSection,
    pub tdd: TddSection,
    pub processing: ProcessingSection,
    pub detection: DetectionSection,
    pub clutter: ClutterSection,
    pub scenario: ScenarioSection,
    pub outputs: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            radio: RadioSection::default(),
            tdd: TddSection::default(),
            processing: ProcessingSection::default(),
            detection: DetectionSection::default(),
            clutter: ClutterSection::default(),
            scenario: ScenarioSection::default(),
            outputs: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSection {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub subcarriers: usize,
    pub symbols: usize,
    pub symbol_time_s: f64,
    pub cp_time_s: f64,
    pub symbol_period_s: f64,
    pub frame_duration_s: f64,
    pub c0: f64,
}

impl Default for RadioSection {
    fn default() -> Self {
        let p = SystemParams::fr2_poc();
        Self {
            carrier_hz: p.carrier_hz,
            subcarrier_spacing_hz: p.subcarrier_spacing_hz,
            subcarriers: p.subcarriers,
            symbols: p.symbols,
            symbol_time_s: p.symbol_time_s,
            cp_time_s: p.cp_time_s,
            symbol_period_s: p.symbol_period_s,
            frame_duration_s: p.frame_duration_s,
            c0: p.c0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TddSection {
    pub pattern_duration_s: f64,
    pub dl_symbols: usize,
    pub ul_symbols: usize,
    pub repetitions: usize,
}

impl Default for TddSection {
    fn default() -> Self {
        let t = TddConfig::fr2_poc();
        Self {
            pattern_duration_s: t.pattern_duration_s,
            dl_symbols: t.dl_symbols,
            ul_symbols: t.ul_symbols,
            repetitions: t.repetitions,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TaperKind {
    Chebyshev,
    Rectangular,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessingSection {
    /// J
    pub decimation: usize,
    /// K
    pub frames: usize,
    /// V
    pub stride: usize,
    pub taper: TaperKind,
    pub taper_db: f64,
    /// `[K, J]` pairs evaluated by `process`.
    pub snr_table: Vec<[usize; 2]>,
}

impl Default for ProcessingSection {
    fn default() -> Self {
        Self {
            decimation: 70,
            frames: 8,
            stride: 2,
            taper: TaperKind::Chebyshev,
            taper_db: Taper::DEFAULT_ATTENUATION_DB,
            snr_table: vec![[1, 1], [1, 47], [6, 70], [10, 70]],
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AlphaKind {
    SqrtMax,
    Fixed,
    Off,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSection {
    pub p_fa: f64,
    pub alpha_policy: AlphaKind,
    /// Used with `alpha_policy = "fixed"`.
    pub alpha: f64,
    pub zero_speed_halfwidth: Option<f64>,
    pub match_tol_range: Option<f64>,
    pub match_tol_speed: Option<f64>,
    pub top_k_nlos: usize,
    pub moving_average_s: f64,
}

impl Default for DetectionSection {
    fn default() -> Self {
        let d = DetectionConfig::default();
        Self {
            p_fa: d.p_fa,
            alpha_policy: AlphaKind::SqrtMax,
            alpha: 0.0,
            zero_speed_halfwidth: None,
            match_tol_range: None,
            match_tol_speed: None,
            top_k_nlos: d.top_k_nlos,
            moving_average_s: 0.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ClutterSection {
    pub energy_threshold: f64,
    /// Calibration windows used to fit the model.
    pub calib_frames: usize,
}

impl Default for ClutterSection {
    fn default() -> Self {
        Self {
            energy_threshold: nlos_core::clutter::DEFAULT_ENERGY_THRESHOLD,
            calib_frames: nlos_core::clutter::DEFAULT_CALIB_COUNT,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CaptureSymbols {
    /// Only the symbols of the configured decimation plan.
    Plan,
    /// Every symbol of the frame.
    All,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Coherent,
    Incoherent,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub h_gnb: f64,
    pub d_wall: f64,
    /// Ground ranges between which the target walks.
    pub near: f64,
    pub far: f64,
    pub speed: f64,
    pub dwell_s: f64,
    pub duration_s: f64,
    pub noise_var: f64,
    pub phase: PhaseKind,
    pub capture_symbols: CaptureSymbols,
    /// `false` simulates an empty room (calibration runs).
    pub target_present: bool,
    pub amplitudes: AmplitudeSection,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let g = SceneGeometry::default();
        Self {
            h_gnb: g.h_gnb,
            d_wall: g.d_wall,
            near: 6.0,
            far: 18.0,
            speed: 1.5,
            dwell_s: 1.0,
            duration_s: 20.0,
            noise_var: 1.0,
            phase: PhaseKind::Coherent,
            capture_symbols: CaptureSymbols::Plan,
            target_present: true,
            amplitudes: AmplitudeSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AmplitudeSection {
    pub gain: f64,
    pub rho_los: f64,
    pub rho_wall: f64,
    pub rho_nlos: f64,
    pub nlos_reflection_loss_db: f64,
    pub path_loss: bool,
}

impl Default for AmplitudeSection {
    fn default() -> Self {
        let a = AmplitudeConfig::default();
        Self {
            gain: a.gain,
            rho_los: a.rho_los,
            rho_wall: a.rho_wall,
            rho_nlos: a.rho_nlos,
            nlos_reflection_loss_db: a.nlos_reflection_loss_db,
            path_loss: a.path_loss,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// Invalid configuration with the dotted path of the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn scoped(section: &str, e: CoreError) -> ConfigError {
    match e {
        CoreError::InvalidParameter { field, reason } => {
            ConfigError(format!("{section}.{field}: {reason}"))
        }
        other => ConfigError(format!("{section}: {other}")),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => {
                let cfg = RunConfig::default();
                cfg.validate()?;
                Ok(cfg)
            }
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    ConfigError(format!("config: cannot read {}: {e}", p.display()))
                })?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn params(&self) -> SystemParams {
        let r = &self.radio;
        SystemParams {
            carrier_hz: r.carrier_hz,
            subcarrier_spacing_hz: r.subcarrier_spacing_hz,
            subcarriers: r.subcarriers,
            symbols: r.symbols,
            symbol_time_s: r.symbol_time_s,
            cp_time_s: r.cp_time_s,
            symbol_period_s: r.symbol_period_s,
            frame_duration_s: r.frame_duration_s,
            c0: r.c0,
        }
    }

    pub fn tdd(&self) -> TddConfig {
        let t = &self.tdd;
        TddConfig {
            pattern_duration_s: t.pattern_duration_s,
            dl_symbols: t.dl_symbols,
            ul_symbols: t.ul_symbols,
            repetitions: t.repetitions,
        }
    }

    pub fn taper(&self) -> Taper {
        match self.processing.taper {
            TaperKind::Chebyshev => Taper::chebyshev(self.processing.taper_db),
            TaperKind::Rectangular => Taper::Rectangular,
        }
    }

    pub fn geometry(&self) -> SceneGeometry {
        SceneGeometry {
            h_gnb: self.scenario.h_gnb,
            d_wall: self.scenario.d_wall,
        }
    }

    pub fn detection(&self) -> DetectionConfig {
        let d = &self.detection;
        DetectionConfig {
            p_fa: d.p_fa,
            alpha_policy: match d.alpha_policy {
                AlphaKind::SqrtMax => AlphaPolicy::SqrtMax,
                AlphaKind::Fixed => AlphaPolicy::Fixed(d.alpha),
                AlphaKind::Off => AlphaPolicy::Off,
            },
            zero_speed_halfwidth: d.zero_speed_halfwidth,
            match_tol_range: d.match_tol_range,
            match_tol_speed: d.match_tol_speed,
            top_k_nlos: d.top_k_nlos,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            params: self.params(),
            tdd: self.tdd(),
            processing: ProcessingConfig {
                decimation: self.processing.decimation,
                frames_per_window: self.processing.frames,
                stride: self.processing.stride,
                taper: self.taper(),
            },
            detection: self.detection(),
            geometry: self.geometry(),
            moving_average_s: self.detection.moving_average_s,
        }
    }

    pub fn trajectory(&self) -> Result<Trajectory, ConfigError> {
        let s = &self.scenario;
        Trajectory::back_and_forth(
            s.near,
            s.far,
            s.speed,
            s.dwell_s,
            s.duration_s.max(f64::MIN_POSITIVE),
        )
        .map_err(|e| scoped("scenario", e))
    }

    pub fn measurement(
        &self,
        seed: u64,
        target_present: bool,
    ) -> Result<MeasurementConfig, ConfigError> {
        let params = self.params();
        let symbols = match self.scenario.capture_symbols {
            CaptureSymbols::All => (0..params.symbols).collect(),
            CaptureSymbols::Plan => {
                self.pipeline()
                    .plan()
                    .map_err(|e| scoped("processing", e))?
                    .indices
            }
        };
        let a = &self.scenario.amplitudes;
        Ok(MeasurementConfig {
            params,
            tdd: self.tdd(),
            geometry: self.geometry(),
            trajectory: self.trajectory()?,
            amplitudes: AmplitudeConfig {
                gain: a.gain,
                rho_los: a.rho_los,
                rho_wall: a.rho_wall,
                rho_nlos: a.rho_nlos,
                nlos_reflection_loss_db: a.nlos_reflection_loss_db,
                path_loss: a.path_loss,
            },
            noise_var: self.scenario.noise_var,
            phase_mode: match self.scenario.phase {
                PhaseKind::Coherent => PhaseMode::Coherent,
                PhaseKind::Incoherent => PhaseMode::Incoherent,
            },
            seed,
            duration: self.scenario.duration_s,
            symbols,
            target_present,
        })
    }

    /// Checks every section before any computation starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let params = self.params();
        params.validate().map_err(|e| scoped("radio", e))?;
        self.tdd().validate(&params).map_err(|e| scoped("tdd", e))?;

        let p = &self.processing;
        if p.frames == 0 {
            return Err(ConfigError("processing.frames: must be at least 1".into()));
        }
        if p.stride == 0 || p.stride > p.frames {
            return Err(ConfigError(
                "processing.stride: must satisfy 1 <= stride <= frames".into(),
            ));
        }
        if p.taper == TaperKind::Chebyshev && !(p.taper_db.is_finite() && p.taper_db > 0.0) {
            return Err(ConfigError("processing.taper_db: must be positive".into()));
        }
        self.pipeline()
            .plan()
            .map_err(|e| scoped("processing.decimation", e))?;
        for (i, &[k, j]) in p.snr_table.iter().enumerate() {
            let plan = build_decimation_plan(&params, &self.tdd(), j)
                .map_err(|e| ConfigError(format!("processing.snr_table[{i}]: {e}")))?;
            if k == 0 {
                return Err(ConfigError(format!(
                    "processing.snr_table[{i}]: K must be at least 1"
                )));
            }
            if k > 1 && !plan.uniform_across_frames {
                return Err(ConfigError(format!(
                    "processing.snr_table[{i}]: {}",
                    CoreError::NonUniformPlan(j)
                )));
            }
        }

        self.detection()
            .validate()
            .map_err(|e| scoped("detection", e))?;
        if self.detection.alpha_policy == AlphaKind::Fixed && !(self.detection.alpha >= 0.0) {
            return Err(ConfigError("detection.alpha: must be non-negative".into()));
        }
        if !(self.detection.moving_average_s > 0.0) {
            return Err(ConfigError(
                "detection.moving_average_s: must be positive".into(),
            ));
        }

        let c = &self.clutter;
        if !(c.energy_threshold > 0.0 && c.energy_threshold <= 1.0) {
            return Err(ConfigError(
                "clutter.energy_threshold: must be in (0, 1]".into(),
            ));
        }
        if c.calib_frames < 2 {
            return Err(ConfigError(
                "clutter.calib_frames: at least 2 calibration windows are required".into(),
            ));
        }

        let g = self.geometry();
        g.validate().map_err(|e| scoped("scenario", e))?;
        if g.d_wall >= params.unambiguous_range() {
            return Err(ConfigError(
                "scenario.d_wall: beyond the unambiguous range".into(),
            ));
        }
        let s = &self.scenario;
        if !(s.duration_s.is_finite() && s.duration_s >= 0.0) {
            return Err(ConfigError(
                "scenario.duration_s: must be non-negative".into(),
            ));
        }
        if !(s.noise_var.is_finite() && s.noise_var >= 0.0) {
            return Err(ConfigError(
                "scenario.noise_var: must be non-negative".into(),
            ));
        }
        self.trajectory()?
            .validate(Some(&g))
            .map_err(|e| scoped("scenario", e))?;
        self.measurement(self.seed, true)?;
        Ok(())
    }
}
