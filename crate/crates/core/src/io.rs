//! Binary capture, periodogram and clutter-model files, plus CSV/report writers.
//!
//! Binary files are little-endian and start with an 8-byte magic. Complex
//! samples are stored as interleaved `f32` pairs.

use std::io::{Read, Write};

use ndarray::Array2;
use num_complex::Complex64;

use crate::clutter::ClutterModel;
use crate::detection::{Detection, SceneGeometry};
use crate::error::{Error, Result};
use crate::model::CsiFrame;
use crate::params::{SystemParams, TddConfig};
use crate::periodogram::Periodogram;
use crate::scenario::GroundTruthSample;

pub const CAPTURE_MAGIC: &[u8; 8] = b"ISACCSI1";
pub const PERIODOGRAM_MAGIC: &[u8; 8] = b"ISACPGM1";
pub const CLUTTER_MAGIC: &[u8; 8] = b"ISACCLT1";

// Guards against absurd allocations when reading corrupt headers.
const MAX_ELEMENTS: u64 = 1 << 34;

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_usize<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let v = get_u64(r)?;
    if v > MAX_ELEMENTS {
        return Err(Error::Format(format!("{what} = {v} is implausibly large")));
    }
    Ok(v as usize)
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<()> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("file too short for header".into()))?;
    if &b != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&b),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn put_complex<W: Write>(w: &mut W, values: impl Iterator<Item = Complex64>) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * 4096);
    for z in values {
        buf.extend_from_slice(&(z.re as f32).to_le_bytes());
        buf.extend_from_slice(&(z.im as f32).to_le_bytes());
        if buf.len() >= 8 * 4096 {
            w.write_all(&buf)?;
            buf.clear();
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn get_complex<R: Read>(r: &mut R, count: usize) -> Result<Vec<Complex64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect())
}

fn put_params<W: Write>(w: &mut W, p: &SystemParams) -> Result<()> {
    for v in [p.carrier_hz, p.subcarrier_spacing_hz] {
        put_f64(w, v)?;
    }
    put_u64(w, p.subcarriers as u64)?;
    put_u64(w, p.symbols as u64)?;
    for v in [
        p.symbol_time_s,
        p.cp_time_s,
        p.symbol_period_s,
        p.frame_duration_s,
        p.c0,
    ] {
        put_f64(w, v)?;
    }
    Ok(())
}

fn get_params<R: Read>(r: &mut R) -> Result<SystemParams> {
    let p = SystemParams {
        carrier_hz: get_f64(r)?,
        subcarrier_spacing_hz: get_f64(r)?,
        subcarriers: get_usize(r, "subcarriers")?,
        symbols: get_usize(r, "symbols")?,
        symbol_time_s: get_f64(r)?,
        cp_time_s: get_f64(r)?,
        symbol_period_s: get_f64(r)?,
        frame_duration_s: get_f64(r)?,
        c0: get_f64(r)?,
    };
    p.validate()
        .map_err(|e| Error::Format(format!("stored parameters invalid: {e}")))?;
    Ok(p)
}

/// Header of a CSI capture.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureHeader {
    pub params: SystemParams,
    pub tdd: TddConfig,
    pub frame_count: u64,
    /// Symbols stored in every frame.
    pub symbols: Vec<usize>,
}

impl CaptureHeader {
    fn frame_bytes(&self) -> usize {
        16 + self.params.subcarriers * self.symbols.len() * 8
    }
}

pub struct CaptureWriter<W: Write> {
    inner: W,
    header: CaptureHeader,
    written: u64,
}

impl<W: Write> CaptureWriter<W> {
    pub fn new(mut inner: W, header: CaptureHeader) -> Result<Self> {
        inner.write_all(CAPTURE_MAGIC)?;
        put_params(&mut inner, &header.params)?;
        put_f64(&mut inner, header.tdd.pattern_duration_s)?;
        for v in [
            header.tdd.dl_symbols,
            header.tdd.ul_symbols,
            header.tdd.repetitions,
        ] {
            put_u64(&mut inner, v as u64)?;
        }
        put_u64(&mut inner, header.frame_count)?;
        put_u64(&mut inner, header.symbols.len() as u64)?;
        for &s in &header.symbols {
            put_u64(&mut inner, s as u64)?;
        }
        Ok(Self {
            inner,
            header,
            written: 0,
        })
    }

    pub fn write_frame(&mut self, frame: &CsiFrame) -> Result<()> {
        if self.written >= self.header.frame_count {
            return Err(Error::Format(
                "more frames than declared in the header".into(),
            ));
        }
        if frame.symbols != self.header.symbols
            || frame.data.nrows() != self.header.params.subcarriers
        {
            return Err(Error::DimensionMismatch {
                expected: format!(
                    "{} subcarriers x {} stored symbols",
                    self.header.params.subcarriers,
                    self.header.symbols.len()
                ),
                actual: format!("{}x{}", frame.data.nrows(), frame.data.ncols()),
            });
        }
        put_u64(&mut self.inner, frame.frame_idx)?;
        put_f64(&mut self.inner, frame.t0)?;
        put_complex(&mut self.inner, frame.data.iter().copied())?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.header.frame_count {
            return Err(Error::Format(format!(
                "wrote {} frames, header declares {}",
                self.written, self.header.frame_count
            )));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct CaptureReader<R: Read> {
    inner: R,
    pub header: CaptureHeader,
    read: u64,
}

impl<R: Read> CaptureReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        expect_magic(&mut inner, CAPTURE_MAGIC)?;
        let params = get_params(&mut inner)?;
        let tdd = TddConfig {
            pattern_duration_s: get_f64(&mut inner)?,
            dl_symbols: get_usize(&mut inner, "dl_symbols")?,
            ul_symbols: get_usize(&mut inner, "ul_symbols")?,
            repetitions: get_usize(&mut inner, "repetitions")?,
        };
        tdd.validate(&params)
            .map_err(|e| Error::Format(format!("stored TDD layout invalid: {e}")))?;
        let frame_count = get_u64(&mut inner)?;
        let n = get_usize(&mut inner, "stored symbols")?;
        if n == 0 || n > params.symbols {
            return Err(Error::Format(format!("stored symbol count {n} invalid")));
        }
        let mut symbols = Vec::with_capacity(n);
        for _ in 0..n {
            symbols.push(get_usize(&mut inner, "symbol index")?);
        }
        if symbols.windows(2).any(|w| w[1] <= w[0]) || symbols[n - 1] >= params.symbols {
            return Err(Error::Format(
                "stored symbol list not increasing or out of range".into(),
            ));
        }
        Ok(Self {
            inner,
            header: CaptureHeader {
                params,
                tdd,
                frame_count,
                symbols,
            },
            read: 0,
        })
    }

    fn read_frame(&mut self) -> Result<CsiFrame> {
        let h = &self.header;
        let idx = get_u64(&mut self.inner)?;
        let t0 = get_f64(&mut self.inner)?;
        let (rows, cols) = (h.params.subcarriers, h.symbols.len());
        let values = get_complex(&mut self.inner, rows * cols)?;
        let data = Array2::from_shape_vec((rows, cols), values).expect("sized by header");
        CsiFrame::new(data, h.symbols.clone(), idx, t0)
    }

    pub fn expected_bytes(&self) -> u64 {
        self.header.frame_count * self.header.frame_bytes() as u64
    }
}

impl<R: Read> Iterator for CaptureReader<R> {
    type Item = Result<CsiFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read >= self.header.frame_count {
            return None;
        }
        self.read += 1;
        Some(self.read_frame().map_err(|e| match e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                Error::Format("capture truncated".into())
            }
            other => other,
        }))
    }
}

pub fn write_periodogram<W: Write>(w: &mut W, p: &Periodogram) -> Result<()> {
    w.write_all(PERIODOGRAM_MAGIC)?;
    let dims = [p.range_bins(), p.speed_bins()];
    for d in dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::Format(format!("periodogram dimension {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    // Axis parameters: range step, speed step, first speed bin.
    for v in [p.range_step(), p.speed_step(), p.speed_axis[0]] {
        put_f64(w, v)?;
    }
    // Numerology needed to rebuild bin conversions and bounds.
    put_params(w, &p.params)?;
    put_f64(w, p.sample_interval)?;
    put_u64(w, p.effective_symbols as u64)?;
    let mut buf = Vec::with_capacity(p.power.len() * 4);
    for &v in p.power.iter() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_periodogram<R: Read>(r: &mut R) -> Result<Periodogram> {
    expect_magic(r, PERIODOGRAM_MAGIC)?;
    let mut dims = [0usize; 2];
    for d in dims.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let [rows, cols] = dims;
    let stored_steps = [get_f64(r)?, get_f64(r)?, get_f64(r)?];
    let params = get_params(r)?;
    let sample_interval = get_f64(r)?;
    let effective_symbols = get_usize(r, "effective symbols")?;
    if rows != params.subcarriers.next_power_of_two()
        || cols != effective_symbols.next_power_of_two()
    {
        return Err(Error::Format(
            "periodogram size inconsistent with header".into(),
        ));
    }
    let mut bytes = vec![0u8; rows * cols * 4];
    r.read_exact(&mut bytes)?;
    let power: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let d_step = params.unambiguous_range() / rows as f64;
    let v_step = params.unambiguous_speed(sample_interval) / cols as f64;
    let half = (cols / 2) as f64;
    let expected = [d_step, v_step, -half * v_step];
    if stored_steps
        .iter()
        .zip(expected)
        .any(|(&a, b)| !((a - b).abs() <= 1e-9 * b.abs().max(1e-300)))
    {
        return Err(Error::Format(
            "periodogram axis parameters inconsistent with numerology".into(),
        ));
    }
    Ok(Periodogram {
        power: Array2::from_shape_vec((rows, cols), power).expect("sized by header"),
        range_axis: (0..rows).map(|n| n as f64 * d_step).collect(),
        speed_axis: (0..cols).map(|m| (m as f64 - half) * v_step).collect(),
        params,
        sample_interval,
        effective_symbols,
    })
}

pub fn write_clutter_model<W: Write>(w: &mut W, m: &ClutterModel) -> Result<()> {
    w.write_all(CLUTTER_MAGIC)?;
    put_u64(w, m.rows as u64)?;
    put_u64(w, m.cols as u64)?;
    put_u64(w, m.rank() as u64)?;
    put_f64(w, m.energy_threshold)?;
    put_u64(w, m.calib_count as u64)?;
    for c in m.basis.columns() {
        put_complex(w, c.iter().copied())?;
    }
    Ok(())
}

/// Reads a clutter model and re-orthonormalizes the `f32` basis.
pub fn read_clutter_model<R: Read>(r: &mut R) -> Result<ClutterModel> {
    expect_magic(r, CLUTTER_MAGIC)?;
    let rows = get_usize(r, "rows")?;
    let cols = get_usize(r, "cols")?;
    let rank = get_usize(r, "rank")?;
    let energy_threshold = get_f64(r)?;
    let calib_count = get_usize(r, "calibration count")?;
    let dim = rows
        .checked_mul(cols)
        .filter(|&d| d as u64 <= MAX_ELEMENTS && rank <= d)
        .ok_or_else(|| Error::Format("clutter model dimensions invalid".into()))?;
    let mut basis = Array2::<Complex64>::zeros((dim, rank));
    for j in 0..rank {
        let col = get_complex(r, dim)?;
        for (i, z) in col.into_iter().enumerate() {
            basis[[i, j]] = z;
        }
    }
    ClutterModel::from_basis(rows, cols, basis, energy_threshold, calib_count)
}

/// Nine significant digits, fixed notation for moderate magnitudes.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0.00000000".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}

const TRUTH_COLUMNS: [&str; 6] = ["t", "d_los", "v_los", "d_nlos", "v_nlos", "moving"];

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

pub fn write_truth_csv<W: Write>(w: &mut W, samples: &[GroundTruthSample]) -> Result<()> {
    writeln!(w, "{}", TRUTH_COLUMNS.join(","))?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_num(s.t),
            fmt_num(s.d_los),
            fmt_num(s.v_los),
            fmt_num(s.d_nlos),
            fmt_num(s.v_nlos),
            s.moving as u8
        )?;
    }
    Ok(())
}

pub fn read_truth_csv<R: Read>(r: R) -> Result<Vec<GroundTruthSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != TRUTH_COLUMNS {
        return Err(Error::Format(format!(
            "unexpected truth header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = i + 2;
        let num = |k: usize| -> Result<f64> {
            record[k].parse().map_err(|_| {
                Error::Format(format!("truth line {line}: bad number `{}`", &record[k]))
            })
        };
        out.push(GroundTruthSample {
            t: num(0)?,
            d_los: num(1)?,
            v_los: num(2)?,
            d_nlos: num(3)?,
            v_nlos: num(4)?,
            moving: match &record[5] {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Format(format!(
                        "truth line {line}: bad flag `{other}`"
                    )))
                }
            },
        });
    }
    if out.is_empty() {
        return Err(Error::Empty("truth file"));
    }
    Ok(out)
}

pub fn write_detections_csv<W: Write>(w: &mut W, detections: &[Detection]) -> Result<()> {
    writeln!(
        w,
        "window_idx,time_s,range_m,speed_mps,power_db,region,matched"
    )?;
    for d in detections {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            d.window_idx,
            fmt_num(d.time),
            fmt_num(d.range),
            fmt_num(d.speed),
            fmt_num(10.0 * d.power.log10()),
            d.region.as_str(),
            d.matched as u8
        )?;
    }
    Ok(())
}

/// Peak list accompanying an exported periodogram.
pub fn write_peaks_csv<W: Write>(w: &mut W, peaks: &[Detection]) -> Result<()> {
    writeln!(w, "range_bin,speed_bin,range_m,speed_mps,power_db")?;
    for d in peaks {
        writeln!(
            w,
            "{},{},{},{},{}",
            d.range_bin,
            d.speed_bin,
            fmt_num(d.range),
            fmt_num(d.speed),
            fmt_num(10.0 * d.power.log10())
        )?;
    }
    Ok(())
}

pub fn write_series_csv<W: Write>(w: &mut W, header: &str, rows: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "{header}")?;
    for &(a, b) in rows {
        writeln!(w, "{},{}", fmt_num(a), fmt_num(b))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrRow {
    pub frames: usize,
    pub decimation: usize,
    pub symbols: usize,
    pub snr_db: f64,
}

pub fn write_snr_csv<W: Write>(w: &mut W, rows: &[SnrRow]) -> Result<()> {
    writeln!(w, "K,J,M_symbols,SNR_dB")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.frames,
            r.decimation,
            r.symbols,
            fmt_num(r.snr_db)
        )?;
    }
    Ok(())
}

/// Flat `key=value` report; `comments` are emitted first as `#` lines.
pub fn write_report<W: Write>(
    w: &mut W,
    comments: &[String],
    entries: &[(&str, String)],
) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    for (k, v) in entries {
        writeln!(w, "{k}={v}")?;
    }
    Ok(())
}

/// Geometry summary line used in report headers.
pub fn describe_geometry(g: &SceneGeometry) -> String {
    format!("h_gnb={} d_wall={}", fmt_num(g.h_gnb), fmt_num(g.d_wall))
}
