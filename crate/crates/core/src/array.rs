//! Uniform linear array steering vectors, their angle derivatives, and
//! directional analog beamforming matrices.
//!
//! Elements sit on the symmetric unit-step grid
//! `x = [-(N-1)/2, ..., (N-1)/2]` (in units of the element spacing), so a
//! steering vector for angle `phi` has element `k` equal to
//! `(1/sqrt(N)) * exp(-j 2 pi (d/lambda) cos(phi) x_k)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// ULA geometry: element count and spacing in carrier wavelengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    n_elements: usize,
    spacing_ratio: f64,
    locations: Vec<f64>,
}

impl ArrayConfig {
    /// Build an N-element ULA with spacing `d/lambda`. The element location
    /// grid is always the symmetric, zero-mean, unit-step vector.
    pub fn new(n_elements: usize, spacing_ratio: f64) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::InvalidConfig("array needs at least one element".into()));
        }
        if !(spacing_ratio > 0.0) || !spacing_ratio.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "spacing ratio d/lambda must be positive and finite, got {spacing_ratio}"
            )));
        }
        let half = (n_elements as f64 - 1.0) / 2.0;
        let locations = (0..n_elements).map(|k| k as f64 - half).collect();
        Ok(Self { n_elements, spacing_ratio, locations })
    }

    /// Standard half-wavelength spacing.
    pub fn half_wavelength(n_elements: usize) -> Result<Self> {
        Self::new(n_elements, 0.5)
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn spacing_ratio(&self) -> f64 {
        self.spacing_ratio
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }
}

/// Unit-norm array response vector at `angle` (radians from the array axis).
pub fn steering_vector(cfg: &ArrayConfig, angle: f64) -> DVector<Complex64> {
    let n = cfg.n_elements as f64;
    let scale = 1.0 / n.sqrt();
    let wavenumber = TAU * cfg.spacing_ratio * angle.cos();
    DVector::from_iterator(
        cfg.n_elements,
        cfg.locations.iter().map(|&x| {
            let phase = -wavenumber * x;
            Complex64::from_polar(scale, phase)
        }),
    )
}

/// Elementwise derivative of [`steering_vector`] with respect to the angle:
/// `j 2 pi (d/lambda) sin(phi) x_k` times the corresponding steering entry.
pub fn steering_derivative(cfg: &ArrayConfig, angle: f64) -> DVector<Complex64> {
    let a = steering_vector(cfg, angle);
    let factor = TAU * cfg.spacing_ratio * angle.sin();
    DVector::from_iterator(
        cfg.n_elements,
        cfg.locations
            .iter()
            .zip(a.iter())
            .map(|(&x, &ak)| Complex64::new(0.0, factor * x) * ak),
    )
}

/// An analog beamforming matrix (transmit `F` or receive `W`) together with
/// the per-beam power bookkeeping used by the noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    matrix: DMatrix<Complex64>,
    n_beams: usize,
    beam_power: f64,
}

impl BeamformerSet {
    /// Wrap an arbitrary beamforming matrix. `beam_power` is the sigma_b^2
    /// carried into the noise variance; it is bookkeeping, not recomputed
    /// from the columns.
    pub fn from_matrix(matrix: DMatrix<Complex64>, beam_power: f64) -> Result<Self> {
        if matrix.ncols() == 0 || matrix.nrows() == 0 {
            return Err(Error::InvalidConfig("beamformer must be non-empty".into()));
        }
        if !(beam_power > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "beam power sigma_b^2 must be positive, got {beam_power}"
            )));
        }
        let n_beams = matrix.ncols();
        Ok(Self { matrix, n_beams, beam_power })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn n_beams(&self) -> usize {
        self.n_beams
    }

    pub fn n_antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn beam_power(&self) -> f64 {
        self.beam_power
    }
}

/// Directional beamformer with `n_beams` columns `(1/sqrt(N_B)) a(phi_l)`,
/// where the beam angles `phi_l` are spread uniformly over `sector`
/// (a single beam points at the sector midpoint).
///
/// `beam_power` records the configured sigma_b^2; the actual columns each
/// have squared norm `1/n_beams` regardless.
pub fn make_directional_beamformer(
    cfg: &ArrayConfig,
    n_beams: usize,
    sector: (f64, f64),
    beam_power: f64,
) -> Result<BeamformerSet> {
    if n_beams == 0 {
        return Err(Error::InvalidConfig("need at least one beam".into()));
    }
    let (start, end) = sector;
    if !start.is_finite() || !end.is_finite() {
        return Err(Error::InvalidConfig("beam sector must be finite".into()));
    }
    let scale = Complex64::new(1.0 / (n_beams as f64).sqrt(), 0.0);
    let mut matrix = DMatrix::zeros(cfg.n_elements, n_beams);
    for l in 0..n_beams {
        let angle = if n_beams == 1 {
            0.5 * (start + end)
        } else {
            start + l as f64 * (end - start) / (n_beams as f64 - 1.0)
        };
        let col = steering_vector(cfg, angle) * scale;
        matrix.set_column(l, &col);
    }
    BeamformerSet::from_matrix(matrix, beam_power)
}
