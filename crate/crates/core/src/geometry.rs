//! Mapping between the transmitter's location/orientation and the channel
//! geometry, and the extraction of position/orientation error bounds from
//! the equivalent FIM.
//!
//! The receiver sits at the origin with a known array axis; the transmitter
//! at `p = (p_x, p_y)` with orientation `phi_0`. Uplink geometry gives
//! `tau = |p| / c`, `phi_R = arccos(p_x / |p|)`, and
//! `phi_T = pi - phi_0 + phi_R`.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fim::Efim3;
use crate::linalg;

/// Speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Transmitter location and orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocParams {
    pub px: f64,
    pub py: f64,
    /// Orientation offset phi_0 (rad).
    pub phi_0: f64,
}

impl LocParams {
    pub fn new(px: f64, py: f64, phi_0: f64) -> Result<Self> {
        let p = Self { px, py, phi_0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.range();
        if !(r > 0.0) || !r.is_finite() || !self.phi_0.is_finite() {
            return Err(Error::DegenerateGeometry { px: self.px, py: self.py });
        }
        Ok(())
    }

    pub fn range(&self) -> f64 {
        self.px.hypot(self.py)
    }
}

/// Channel geometry implied by a location: (phi_R, phi_T, tau).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGeometry {
    pub phi_r: f64,
    pub phi_t: f64,
    pub tau: f64,
}

/// Map a transmitter location to the channel geometry. The transmitter must
/// be in the upper half-plane (the receive array's field of view).
pub fn geometry_from_location(loc: &LocParams) -> Result<ChannelGeometry> {
    loc.validate()?;
    if !(loc.py > 0.0) {
        return Err(Error::DegenerateGeometry { px: loc.px, py: loc.py });
    }
    let r = loc.range();
    let phi_r = (loc.px / r).acos();
    Ok(ChannelGeometry { phi_r, phi_t: PI - loc.phi_0 + phi_r, tau: r / SPEED_OF_LIGHT })
}

/// Jacobian of (phi_R, phi_T, tau) with respect to (p_x, p_y, phi_0):
/// row i, column j holds the derivative of channel parameter j with respect
/// to location parameter i. Used to pull the channel-domain EFIM back to the
/// location domain as `J_L = Y J_G^e Y^T`.
pub fn location_jacobian(loc: &LocParams) -> Result<Matrix3<f64>> {
    loc.validate()?;
    if !(loc.py > 0.0) {
        return Err(Error::DegenerateGeometry { px: loc.px, py: loc.py });
    }
    let r2 = loc.px * loc.px + loc.py * loc.py;
    let r = r2.sqrt();
    let dphi_dx = -loc.py / r2;
    let dphi_dy = loc.px / r2;
    Ok(Matrix3::new(
        dphi_dx,
        dphi_dx,
        loc.px / (SPEED_OF_LIGHT * r),
        dphi_dy,
        dphi_dy,
        loc.py / (SPEED_OF_LIGHT * r),
        0.0,
        -1.0,
        0.0,
    ))
}

/// Location-domain equivalent FIM over (p_x, p_y, phi_0).
pub fn location_efim(channel_efim: &Efim3, loc: &LocParams) -> Result<Matrix3<f64>> {
    let y = location_jacobian(loc)?;
    let j = y * channel_efim.matrix * y.transpose();
    Ok(0.5 * (j + j.transpose()))
}

/// Position and orientation error bounds extracted from a location-domain
/// FIM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    /// sqrt(C_11 + C_22) where C is the inverse location FIM (meters).
    pub peb: f64,
    /// sqrt(C_33) (radians).
    pub oeb: f64,
}

/// Invert the location FIM and read off PEB/OEB, guarding against
/// unidentifiable configurations.
pub fn bounds_from_location_fim(j_l: &Matrix3<f64>, cond_threshold: f64) -> Result<BoundResult> {
    let dm = nalgebra::DMatrix::from_fn(3, 3, |i, k| j_l[(i, k)]);
    let inv = linalg::sym_inverse(&dm, cond_threshold)
        .map_err(|cond| Error::NearSingularLocationFim { cond, threshold: cond_threshold })?;
    let peb_sq = inv[(0, 0)] + inv[(1, 1)];
    let oeb_sq = inv[(2, 2)];
    if peb_sq < 0.0 || oeb_sq < 0.0 {
        return Err(Error::NearSingularLocationFim {
            cond: f64::INFINITY,
            threshold: cond_threshold,
        });
    }
    Ok(BoundResult { peb: peb_sq.sqrt(), oeb: oeb_sq.sqrt() })
}

/// Full pipeline tail: channel-domain EFIM plus location to PEB/OEB.
pub fn bounds_from_efim(
    channel_efim: &Efim3,
    loc: &LocParams,
    cond_threshold: f64,
) -> Result<BoundResult> {
    let j_l = location_efim(channel_efim, loc)?;
    bounds_from_location_fim(&j_l, cond_threshold)
}
