//! Subspace clutter removal from calibration windows, and wall-range extraction.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::detection::cfar_threshold;
use crate::error::{invalid, Error, Result};
use crate::periodogram::{estimate_noise_floor, Periodogram};

pub const DEFAULT_ENERGY_THRESHOLD: f64 = 0.99;
pub const DEFAULT_CALIB_COUNT: usize = 10;

/// Orthonormal basis of the static-environment subspace in the space of
/// vectorized (subcarrier-major) decimated windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClutterModel {
    pub rows: usize,
    pub cols: usize,
    /// `rows * cols` by rank.
    pub basis: Array2<Complex64>,
    pub energy_threshold: f64,
    pub calib_count: usize,
}

impl ClutterModel {
    /// Wraps an externally stored basis, re-orthonormalizing its columns.
    pub fn from_basis(
        rows: usize,
        cols: usize,
        basis: Array2<Complex64>,
        energy_threshold: f64,
        calib_count: usize,
    ) -> Result<Self> {
        if basis.nrows() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{} basis rows", rows * cols),
                actual: format!("{}", basis.nrows()),
            });
        }
        if !(energy_threshold > 0.0 && energy_threshold <= 1.0) {
            return Err(invalid("energy_threshold", "must be in (0, 1]"));
        }
        let rank = basis.ncols();
        let basis = if rank == 0 {
            basis
        } else {
            let m = DMatrix::from_fn(basis.nrows(), rank, |i, j| basis[[i, j]]);
            let q = m.qr().q();
            Array2::from_shape_fn((q.nrows(), rank), |(i, j)| q[(i, j)])
        };
        Ok(Self {
            rows,
            cols,
            basis,
            energy_threshold,
            calib_count,
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }
}

fn vectorize(x: &ArrayView2<Complex64>) -> Vec<Complex64> {
    x.iter().copied().collect()
}

/// Leading left singular vectors of the matrix of vectorized calibration
/// windows, keeping the fewest that capture `energy_threshold` of the energy.
pub fn fit_clutter(calib: &[Array2<Complex64>], energy_threshold: f64) -> Result<ClutterModel> {
    if calib.len() < 2 {
        return Err(invalid(
            "calib_count",
            "at least 2 calibration windows are required",
        ));
    }
    if !(energy_threshold > 0.0 && energy_threshold <= 1.0) {
        return Err(invalid("energy_threshold", "must be in (0, 1]"));
    }
    let (rows, cols) = calib[0].dim();
    if let Some(bad) = calib.iter().find(|w| w.dim() != (rows, cols)) {
        return Err(Error::DimensionMismatch {
            expected: format!("{rows}x{cols}"),
            actual: format!("{}x{}", bad.nrows(), bad.ncols()),
        });
    }
    let dim = rows * cols;
    let w = calib.len();
    if dim < w {
        return Err(Error::DimensionMismatch {
            expected: format!("window size of at least {w} elements"),
            actual: format!("{dim}"),
        });
    }
    let mut x = DMatrix::<Complex64>::zeros(dim, w);
    for (j, win) in calib.iter().enumerate() {
        for (i, z) in vectorize(&win.view()).into_iter().enumerate() {
            x[(i, j)] = z;
        }
    }
    if x.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::AllZero("calibration windows"));
    }

    // Thin QR first, then the small W x W SVD.
    let qr = x.qr();
    let q = qr.q();
    let svd = qr.r().svd(true, false);
    let u_small = svd
        .u
        .ok_or_else(|| Error::Domain("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let energies: Vec<f64> = order
        .iter()
        .map(|&i| svd.singular_values[i].powi(2))
        .collect();
    let total: f64 = energies.iter().sum();

    let mut rank = 0;
    let mut acc = 0.0;
    for e in &energies {
        rank += 1;
        acc += e;
        if acc >= energy_threshold * total * (1.0 - 1e-12) {
            break;
        }
    }

    let mut basis = Array2::<Complex64>::zeros((dim, rank));
    for (c, &src) in order.iter().take(rank).enumerate() {
        let u = &q * u_small.column(src);
        for i in 0..dim {
            basis[[i, c]] = u[i];
        }
    }
    Ok(ClutterModel {
        rows,
        cols,
        basis,
        energy_threshold,
        calib_count: w,
    })
}

/// Window minus its orthogonal projection onto the clutter subspace.
pub fn remove_clutter(
    window: ArrayView2<Complex64>,
    model: &ClutterModel,
) -> Result<Array2<Complex64>> {
    if window.dim() != (model.rows, model.cols) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", model.rows, model.cols),
            actual: format!("{}x{}", window.nrows(), window.ncols()),
        });
    }
    let mut x = vectorize(&window);
    for b in model.basis.columns() {
        let c: Complex64 = b.iter().zip(&x).map(|(u, z)| u.conj() * z).sum();
        for (z, u) in x.iter_mut().zip(b.iter()) {
            *z -= c * u;
        }
    }
    Ok(Array2::from_shape_vec((model.rows, model.cols), x).expect("shape preserved"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentConfig {
    /// Returns closer than this are ignored (antenna coupling, mounting structure).
    pub min_range: f64,
    pub p_fa: f64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            min_range: 2.0,
            p_fa: 1e-4,
        }
    }
}

/// Range of the strongest zero-speed return beyond `min_range`.
pub fn extract_environment(p: &Periodogram, cfg: &EnvironmentConfig) -> Result<f64> {
    let noise = match estimate_noise_floor(p) {
        Ok(v) => v,
        Err(Error::AllZero(_)) => return Err(Error::NoStaticReturn),
        Err(e) => return Err(e),
    };
    let eta = cfar_threshold(noise, cfg.p_fa, p.power.len())?;
    let zero = p.speed_to_bin(0.0);
    let column = p.power.column(zero);
    let best = p
        .range_axis
        .iter()
        .zip(column.iter())
        .filter(|(&d, &s)| d >= cfg.min_range && s > eta)
        .max_by(|a, b| a.1.total_cmp(b.1));
    best.map(|(&d, _)| d).ok_or(Error::NoStaticReturn)
}
