use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nlos_core::clutter::{fit_clutter, ClutterModel};
use nlos_core::detection::detect_peaks;
use nlos_core::io::{
    fmt_num, read_clutter_model, read_truth_csv, write_clutter_model, write_detections_csv,
    write_peaks_csv, write_periodogram, write_report, write_series_csv, write_snr_csv,
    write_truth_csv, CaptureHeader, CaptureReader, CaptureWriter, SnrRow,
};
use nlos_core::periodogram::{estimate_noise_floor, periodogram_snr};
use nlos_core::pipeline::{
    calibration_windows, estimate_wall_distance, run_detection, PipelineConfig,
};
use nlos_core::scenario::run_measurement;
use nlos_core::tdd::{build_decimation_plan, concatenate_window, replica_spacing, tdd_psf};
use nlos_core::{CsiFrame, Error as CoreError, Periodogram};

use crate::config::{ConfigError, RunConfig};

pub const CAPTURE_FILE: &str = "capture.isac";
pub const CLUTTER_FILE: &str = "clutter.isac";

/// Span and step of the PSF speed grid.
const PSF_SPAN: f64 = 20.0;
const PSF_STEP: f64 = 0.01;

/// Seed offset of simulated calibration runs so they never share noise with the measurement.
const CALIB_SEED_SALT: u64 = 0xCA1B_0000_0000_0001;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Classifies a library error raised while handling data.
fn data(context: &str) -> impl Fn(CoreError) -> CliError + '_ {
    move |e| match e {
        CoreError::InvalidParameter { field, reason } => {
            CliError::Config(format!("{context}.{field}: {reason}"))
        }
        CoreError::NonUniformPlan(_) | CoreError::EmptyDecimation(_) => {
            CliError::Config(format!("{context}: {e}"))
        }
        other => CliError::Data(format!("{context}: {other}")),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn open_capture(path: &Path) -> CliResult<CaptureReader<BufReader<File>>> {
    let f = File::open(path).map_err(io_err(path))?;
    CaptureReader::new(BufReader::new(f))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Truth file written next to a capture.
pub fn truth_path_for(capture: &Path) -> PathBuf {
    capture.with_extension("truth.csv")
}

pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    fn out(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Pipeline settings from the configuration with the numerology of a capture.
    fn pipeline_for(&self, header: &CaptureHeader) -> PipelineConfig {
        PipelineConfig {
            params: header.params,
            tdd: header.tdd,
            ..self.config.pipeline()
        }
    }
}

pub struct SimulateSummary {
    pub capture: PathBuf,
    pub truth: PathBuf,
    pub frames: u64,
}

pub fn simulate(ctx: &Context, capture: Option<&Path>) -> CliResult<SimulateSummary> {
    let m = ctx
        .config
        .measurement(ctx.seed, ctx.config.scenario.target_present)?;
    m.validate().map_err(data("scenario"))?;
    let capture = capture
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.out(CAPTURE_FILE));
    let truth_path = truth_path_for(&capture);
    let header = CaptureHeader {
        params: m.params,
        tdd: m.tdd,
        frame_count: m.frames(),
        symbols: m.symbols.clone(),
    };
    let frames = m.frames();
    let mut writer = CaptureWriter::new(create(&capture)?, header).map_err(data("capture"))?;
    let mut truth = Vec::with_capacity(frames as usize);
    for item in run_measurement(m).map_err(data("scenario"))? {
        let (frame, sample) = item.map_err(data("scenario"))?;
        writer.write_frame(&frame).map_err(data("capture"))?;
        truth.push(sample);
    }
    writer
        .finish()
        .and_then(|mut w| w.flush().map_err(Into::into))
        .map_err(data("capture"))?;
    let mut tw = create(&truth_path)?;
    write_truth_csv(&mut tw, &truth).map_err(data("truth"))?;
    tw.flush().map_err(io_err(&truth_path))?;
    Ok(SimulateSummary {
        capture,
        truth: truth_path,
        frames,
    })
}

pub fn process(ctx: &Context, capture: &Path) -> CliResult<Vec<SnrRow>> {
    let reader = open_capture(capture)?;
    let header = reader.header.clone();
    let table = &ctx.config.processing.snr_table;
    let needed = table.iter().map(|&[k, _]| k).max().unwrap_or(0);
    let frames: Vec<CsiFrame> = reader
        .take(needed)
        .collect::<nlos_core::Result<_>>()
        .map_err(data("capture"))?;
    if frames.len() < needed {
        return Err(CliError::Data(format!(
            "capture holds {} frames, the SNR table needs {needed}",
            frames.len()
        )));
    }
    let taper = ctx.config.taper();
    let mut rows = Vec::with_capacity(table.len());
    for &[k, j] in table {
        let plan = build_decimation_plan(&header.params, &header.tdd, j)
            .map_err(data("processing.snr_table"))?;
        let window =
            concatenate_window(&frames[..k], &plan, &header.params, k).map_err(data("capture"))?;
        let p = Periodogram::from_window(&window, &header.params, taper)
            .map_err(data("periodogram"))?;
        let noise = estimate_noise_floor(&p).map_err(data("periodogram"))?;
        let snr = periodogram_snr(&p, noise).map_err(data("periodogram"))?;
        let path = ctx.out(&format!("periodogram_K{k}_J{j}.pgm"));
        let mut w = create(&path)?;
        write_periodogram(&mut w, &p).map_err(data("periodogram"))?;
        w.flush().map_err(io_err(&path))?;
        let peaks =
            detect_peaks(&p, &ctx.config.detection(), noise).map_err(data("periodogram"))?;
        let path = ctx.out(&format!("periodogram_K{k}_J{j}_peaks.csv"));
        let mut w = create(&path)?;
        write_peaks_csv(&mut w, &peaks).map_err(data("periodogram"))?;
        w.flush().map_err(io_err(&path))?;
        rows.push(SnrRow {
            frames: k,
            decimation: j,
            symbols: window.columns(),
            snr_db: snr,
        });
    }
    let path = ctx.out("snr_table.csv");
    let mut w = create(&path)?;
    write_snr_csv(&mut w, &rows).map_err(data("snr table"))?;
    w.flush().map_err(io_err(&path))?;
    Ok(rows)
}

pub struct DetectSummary {
    pub overall_rate: f64,
    pub moving_rate: f64,
    pub windows: usize,
    pub clutter_applied: bool,
}

fn load_clutter(path: &Path) -> CliResult<ClutterModel> {
    let f = File::open(path).map_err(io_err(path))?;
    read_clutter_model(&mut BufReader::new(f))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn detect(
    ctx: &Context,
    capture: &Path,
    truth: Option<&Path>,
    clutter: Option<&Path>,
) -> CliResult<DetectSummary> {
    let truth_path = truth
        .map(Path::to_path_buf)
        .unwrap_or_else(|| truth_path_for(capture));
    if !truth_path.exists() {
        return Err(CliError::Data(format!(
            "missing truth file {}",
            truth_path.display()
        )));
    }
    let truth = read_truth_csv(BufReader::new(
        File::open(&truth_path).map_err(io_err(&truth_path))?,
    ))
    .map_err(|e| CliError::Data(format!("{}: {e}", truth_path.display())))?;
    let model = clutter.map(load_clutter).transpose()?;
    let reader = open_capture(capture)?;
    let cfg = ctx.pipeline_for(&reader.header);
    let frames = reader.header.frame_count;
    let run = run_detection(
        reader,
        &truth,
        ctx.config.scenario.target_present,
        model.as_ref(),
        &cfg,
    )
    .map_err(data("detection"))?;

    let path = ctx.out("detections.csv");
    let mut w = create(&path)?;
    write_detections_csv(&mut w, &run.all_detections()).map_err(data("detections"))?;
    w.flush().map_err(io_err(&path))?;

    let path = ctx.out("moving_average.csv");
    let mut w = create(&path)?;
    write_series_csv(&mut w, "time_s,rate", &run.moving_average).map_err(data("moving average"))?;
    w.flush().map_err(io_err(&path))?;

    let r = &run.report;
    let p = &cfg.processing;
    let mut comments = vec![
        "NLOS detection report".to_string(),
        nlos_core::io::describe_geometry(&cfg.geometry),
    ];
    if !run.clutter_applied {
        comments.push("WARNING: no clutter model supplied, static returns were not removed".into());
    }
    comments.push("hardware reference rates, not asserted: K=4 0.61, K=6 0.60, K=8 0.67".into());
    let entries = [
        ("overall_rate", fmt_num(r.overall_rate)),
        ("moving_rate", fmt_num(r.moving_rate)),
        ("los_rate_moving", fmt_num(r.los_rate_moving)),
        ("windows_total", r.windows_total.to_string()),
        ("windows_los_present", r.windows_los_present.to_string()),
        ("windows_moving", r.windows_moving.to_string()),
        ("frames", frames.to_string()),
        ("K", p.frames_per_window.to_string()),
        ("J", p.decimation.to_string()),
        ("V", p.stride.to_string()),
        ("p_fa", fmt_num(cfg.detection.p_fa)),
        ("update_period_s", fmt_num(run.update_period)),
        (
            "clutter",
            if run.clutter_applied {
                "applied"
            } else {
                "none"
            }
            .to_string(),
        ),
    ];
    let path = ctx.out("report.txt");
    let mut w = create(&path)?;
    write_report(&mut w, &comments, &entries).map_err(data("report"))?;
    w.flush().map_err(io_err(&path))?;

    Ok(DetectSummary {
        overall_rate: r.overall_rate,
        moving_rate: r.moving_rate,
        windows: r.windows_total,
        clutter_applied: run.clutter_applied,
    })
}

/// Replica spacing text: a speed in m/s, or `none (continuous)` without uplink gaps.
pub fn replica_text(cfg: &RunConfig) -> String {
    let tdd = cfg.tdd();
    if tdd.ul_symbols == 0 {
        "none (continuous)".to_string()
    } else {
        fmt_num(replica_spacing(&cfg.params(), &tdd))
    }
}

pub fn psf(ctx: &Context) -> CliResult<String> {
    let n = (PSF_SPAN / PSF_STEP).round() as i64;
    let speeds: Vec<f64> = (-n..=n).map(|i| i as f64 * PSF_STEP).collect();
    let values = tdd_psf(&ctx.config.params(), &ctx.config.tdd(), &speeds);
    let rows: Vec<(f64, f64)> = speeds.into_iter().zip(values).collect();
    let path = ctx.out("psf.csv");
    let mut w = create(&path)?;
    write_series_csv(&mut w, "speed_mps,psf", &rows).map_err(data("psf"))?;
    w.flush().map_err(io_err(&path))?;

    let spacing = replica_text(&ctx.config);
    let path = ctx.out("psf_report.txt");
    let mut w = create(&path)?;
    write_report(&mut w, &[], &[("replica_spacing_mps", spacing.clone())]).map_err(data("psf"))?;
    w.flush().map_err(io_err(&path))?;
    Ok(spacing)
}

pub struct ClutterSummary {
    pub rank: usize,
    pub dim: usize,
    pub wall_estimate: Option<f64>,
    pub path: PathBuf,
}

pub fn fit_clutter_cmd(ctx: &Context, capture: Option<&Path>) -> CliResult<ClutterSummary> {
    let calib = ctx.config.clutter.calib_frames;
    let (cfg, windows) = match capture {
        Some(path) => {
            let reader = open_capture(path)?;
            let cfg = ctx.pipeline_for(&reader.header);
            let windows = calibration_windows(reader, &cfg, calib).map_err(data("clutter"))?;
            (cfg, windows)
        }
        None => {
            let cfg = ctx.config.pipeline();
            let p = &cfg.processing;
            let frames = p.frames_per_window + (calib - 1) * p.stride;
            let mut m = ctx.config.measurement(ctx.seed ^ CALIB_SEED_SALT, false)?;
            m.duration = frames as f64 * m.params.frame_duration_s;
            let run = run_measurement(m).map_err(data("scenario"))?;
            let windows = calibration_windows(run.map(|r| r.map(|(f, _)| f)), &cfg, calib)
                .map_err(data("clutter"))?;
            (cfg, windows)
        }
    };
    let wall_estimate = match estimate_wall_distance(&windows[0], &cfg) {
        Ok(d) => Some(d),
        Err(CoreError::NoStaticReturn) => None,
        Err(e) => return Err(data("clutter")(e)),
    };
    let data_sets: Vec<_> = windows.into_iter().map(|w| w.data).collect();
    let model =
        fit_clutter(&data_sets, ctx.config.clutter.energy_threshold).map_err(data("clutter"))?;

    let path = ctx.out(CLUTTER_FILE);
    let mut w = create(&path)?;
    write_clutter_model(&mut w, &model).map_err(data("clutter"))?;
    w.flush().map_err(io_err(&path))?;

    let entries = [
        ("rank", model.rank().to_string()),
        ("dim", model.dim().to_string()),
        ("calib_windows", calib.to_string()),
        ("energy_threshold", fmt_num(model.energy_threshold)),
        (
            "d_wall_estimate_m",
            wall_estimate.map_or("none".to_string(), fmt_num),
        ),
        ("d_wall_configured_m", fmt_num(cfg.geometry.d_wall)),
    ];
    let report = ctx.out("clutter_report.txt");
    let mut w = create(&report)?;
    write_report(&mut w, &["clutter calibration".to_string()], &entries)
        .map_err(data("clutter"))?;
    w.flush().map_err(io_err(&report))?;

    Ok(ClutterSummary {
        rank: model.rank(),
        dim: model.dim(),
        wall_estimate,
        path,
    })
}
