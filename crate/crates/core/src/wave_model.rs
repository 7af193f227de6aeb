//! Passive array imaging model.
//!
//! Receivers sit on a line at range zero; the image window is a uniform grid
//! of pixels in the (cross-range, range) plane. Propagation uses the
//! homogeneous 3D Green's function, so coordinates are stored in 3D with the
//! second component unused by the builders here.

use std::f64::consts::PI;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{complex_gaussian_vec, rng_from_seed, Rng};
use crate::{linalg, C64};

/// Propagation speed in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.9979e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Point in the imaging plane: cross-range `x`, range `z`.
    pub const fn planar(x: f64, z: f64) -> Self {
        Self { x, y: 0.0, z }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Homogeneous-medium Green's function `exp(iω|x−y|/c0) / (4π|x−y|)`.
pub fn green(x: &Point, y: &Point, omega: f64, wave_speed: f64) -> Result<C64> {
    let r = x.distance(y);
    if r <= 0.0 {
        return Err(Error::domain("green: source and receiver coincide"));
    }
    if omega <= 0.0 {
        return Err(Error::domain("green: angular frequency must be positive"));
    }
    Ok(C64::from_polar(1.0 / (4.0 * PI * r), omega * r / wave_speed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub aperture: f64,
    /// Distance from the array to the center of the image window.
    pub range: f64,
    pub receivers: Vec<Point>,
}

impl ArrayGeometry {
    /// `n` equally spaced receivers `x_r = −a/2 + (r−1)a/(n−1)` on the line `z = 0`.
    pub fn linear(aperture: f64, range: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain("array needs at least two receivers"));
        }
        if !(aperture > 0.0) {
            return Err(Error::domain("aperture must be positive"));
        }
        let receivers = (0..n)
            .map(|r| Point::planar(-aperture / 2.0 + r as f64 * aperture / (n - 1) as f64, 0.0))
            .collect();
        Ok(Self {
            aperture,
            range,
            receivers,
        })
    }

    pub fn len(&self) -> usize {
        self.receivers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.receivers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub central_frequency: f64,
    pub bandwidth: f64,
    pub wave_speed: f64,
    /// Angular frequencies `ω_l = 2π f_l`.
    pub omegas: Vec<f64>,
}

impl FrequencyGrid {
    /// `n` equally spaced frequencies over `[f0 − B/2, f0 + B/2]`; `n = 1` gives `f0` alone.
    pub fn uniform(f0: f64, bandwidth: f64, n: usize, wave_speed: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("frequency grid needs at least one frequency"));
        }
        if !(bandwidth >= 0.0) || !(wave_speed > 0.0) {
            return Err(Error::domain("bandwidth and wave speed must be nonnegative / positive"));
        }
        let omegas: Vec<f64> = if n == 1 {
            vec![2.0 * PI * f0]
        } else {
            (0..n)
                .map(|l| {
                    let f = f0 - bandwidth / 2.0 + l as f64 * bandwidth / (n - 1) as f64;
                    2.0 * PI * f
                })
                .collect()
        };
        if omegas.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::domain("all frequencies must be positive"));
        }
        Ok(Self {
            central_frequency: f0,
            bandwidth,
            wave_speed,
            omegas,
        })
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn central_wavelength(&self) -> f64 {
        self.wave_speed / self.central_frequency
    }
}

/// Uniform pixel grid; pixel `k = iz * nx + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagingGrid {
    pub nx: usize,
    pub nz: usize,
    pub pitch_cross: f64,
    pub pitch_range: f64,
    pub points: Vec<Point>,
}

impl ImagingGrid {
    /// `nx × nz` grid centered at `center` with the given pitches.
    pub fn centered(center: Point, nx: usize, nz: usize, pitch_cross: f64, pitch_range: f64) -> Result<Self> {
        if nx == 0 || nz == 0 {
            return Err(Error::domain("imaging grid must have at least one pixel"));
        }
        let x0 = center.x - pitch_cross * (nx - 1) as f64 / 2.0;
        let z0 = center.z - pitch_range * (nz - 1) as f64 / 2.0;
        let mut points = Vec::with_capacity(nx * nz);
        for iz in 0..nz {
            for ix in 0..nx {
                points.push(Point::new(
                    x0 + ix as f64 * pitch_cross,
                    center.y,
                    z0 + iz as f64 * pitch_range,
                ));
            }
        }
        Ok(Self {
            nx,
            nz,
            pitch_cross,
            pitch_range,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Point sources on grid pixels.
///
/// Entries are summed per pixel, so repeated indices superpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfiguration {
    pub pixel_count: usize,
    pub sources: Vec<(usize, C64)>,
}

impl SourceConfiguration {
    pub fn new(pixel_count: usize, sources: Vec<(usize, C64)>) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::domain("source set is empty"));
        }
        if let Some(&(k, _)) = sources.iter().find(|(k, _)| *k >= pixel_count) {
            return Err(Error::domain(format!(
                "source index {k} outside grid of {pixel_count} pixels"
            )));
        }
        Ok(Self {
            pixel_count,
            sources,
        })
    }

    /// `m` sources at distinct random pixels with unit magnitude and uniform random phase.
    pub fn random_unit(pixel_count: usize, m: usize, rng: &mut Rng) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("sparsity M must be positive"));
        }
        if m >= pixel_count {
            return Err(Error::domain(format!(
                "sparsity M = {m} must be smaller than K = {pixel_count}"
            )));
        }
        let mut pixels = index::sample(rng, pixel_count, m).into_vec();
        pixels.sort_unstable();
        let phases: Vec<f64> = pixels
            .iter()
            .map(|_| rand::Rng::random_range(rng, 0.0..2.0 * PI))
            .collect();
        let sources = pixels
            .into_iter()
            .zip(phases)
            .map(|(k, phi)| (k, C64::from_polar(1.0, phi)))
            .collect();
        Self::new(pixel_count, sources)
    }

    /// The dense source vector `ρ̃ ∈ ℂ^K`.
    pub fn dense(&self) -> Vec<C64> {
        let mut v = vec![C64::default(); self.pixel_count];
        for &(k, a) in &self.sources {
            v[k] += a;
        }
        v
    }

    /// Sorted pixels with nonzero net amplitude.
    pub fn support(&self) -> Vec<usize> {
        self.dense()
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm() > 0.0)
            .map(|(k, _)| k)
            .collect()
    }
}

/// `N × K` matrix of unit-norm multi-frequency Green's vectors.
///
/// Row `l * N_r + r` holds receiver `r` at frequency `l`; column `k` is
/// stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    nrows: usize,
    ncols: usize,
    receivers: usize,
    frequencies: usize,
    columns: Vec<C64>,
    normalizers: Vec<f64>,
}

impl MeasurementMatrix {
    /// Builds from raw (unnormalized) columns, normalizing each to unit length.
    pub fn from_raw_columns(receivers: usize, frequencies: usize, raw: Vec<Vec<C64>>) -> Result<Self> {
        let nrows = receivers * frequencies;
        let ncols = raw.len();
        let mut columns = Vec::with_capacity(nrows * ncols);
        let mut normalizers = Vec::with_capacity(ncols);
        for (k, mut col) in raw.into_iter().enumerate() {
            if col.len() != nrows {
                return Err(Error::Dimension {
                    context: "measurement column",
                    expected: nrows,
                    got: col.len(),
                });
            }
            let c = linalg::normalize(&mut col);
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::domain(format!("column {k} has zero or non-finite norm")));
            }
            normalizers.push(c);
            columns.extend(col);
        }
        Ok(Self {
            nrows,
            ncols,
            receivers,
            frequencies,
            columns,
            normalizers,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn receivers(&self) -> usize {
        self.receivers
    }

    pub fn frequencies(&self) -> usize {
        self.frequencies
    }

    /// `a_k`.
    pub fn column(&self, k: usize) -> &[C64] {
        &self.columns[k * self.nrows..(k + 1) * self.nrows]
    }

    pub fn get(&self, i: usize, k: usize) -> C64 {
        self.columns[k * self.nrows + i]
    }

    /// `c_k`, the norm of the raw stacked Green's vector.
    pub fn normalizers(&self) -> &[f64] {
        &self.normalizers
    }

    pub fn apply(&self, rho: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::default(); self.nrows];
        for (k, &r) in rho.iter().enumerate() {
            if r == C64::default() {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.column(k)) {
                *o += a * r;
            }
        }
        out
    }
}

pub fn build_measurement_matrix(
    geom: &ArrayGeometry,
    freqs: &FrequencyGrid,
    grid: &ImagingGrid,
) -> Result<MeasurementMatrix> {
    let raw = grid
        .points
        .iter()
        .map(|y| {
            let mut col = Vec::with_capacity(geom.len() * freqs.len());
            for &omega in &freqs.omegas {
                for x in &geom.receivers {
                    col.push(green(x, y, omega, freqs.wave_speed)?);
                }
            }
            Ok(col)
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementMatrix::from_raw_columns(geom.len(), freqs.len(), raw)
}

/// Linear array data and the normalized unknown that produces it.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearData {
    /// Stacked multi-frequency data `b ∈ ℂ^N`.
    pub b: Vec<C64>,
    /// `ρ = diag(c) ρ̃`, so that `A ρ = b` for noise-free data.
    pub rho: Vec<C64>,
}

pub fn synthesize_data(a: &MeasurementMatrix, src: &SourceConfiguration) -> Result<LinearData> {
    if src.sources.is_empty() {
        return Err(Error::domain("source set is empty"));
    }
    crate::error::check_len("source pixel count", a.ncols(), src.pixel_count)?;
    // b from the raw Green's vectors c_k a_k, source by source.
    let mut b = vec![C64::default(); a.nrows()];
    for &(k, alpha) in &src.sources {
        let scale = alpha * a.normalizers()[k];
        for (o, g) in b.iter_mut().zip(a.column(k)) {
            *o += g * scale;
        }
    }
    let rho: Vec<C64> = src
        .dense()
        .iter()
        .zip(a.normalizers())
        .map(|(r, c)| r * c)
        .collect();
    let bnorm = linalg::norm2(&b);
    let mismatch = linalg::dist2(&a.apply(&rho), &b);
    debug_assert!(
        mismatch <= 1e-10 * bnorm,
        "A rho != b: {mismatch} vs {bnorm}"
    );
    Ok(LinearData { b, rho })
}

/// Adds complex white Gaussian noise scaled to exactly `snr_db`.
///
/// `snr_db = +∞` leaves the data untouched.
pub fn add_noise(data: &LinearData, snr_db: f64, seed: u64) -> Result<LinearData> {
    if snr_db == f64::INFINITY {
        return Ok(data.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::domain("snr_db must be finite or +inf"));
    }
    let bnorm = linalg::norm2(&data.b);
    if bnorm == 0.0 {
        return Err(Error::domain("cannot set a finite SNR on zero data"));
    }
    let mut rng = rng_from_seed(seed);
    let mut e = complex_gaussian_vec(&mut rng, data.b.len());
    linalg::normalize(&mut e);
    let target = bnorm * 10f64.powf(-snr_db / 20.0);
    let b = data.b.iter().zip(&e).map(|(b, e)| b + e * target).collect();
    Ok(LinearData {
        b,
        rho: data.rho.clone(),
    })
}
