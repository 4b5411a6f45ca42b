//! I/Q imbalance coefficient algebra, symbol-energy accounting, noise
//! statistics, and the integrated signal-correlation constants consumed by
//! the closed-form FIM.
//!
//! Branch mismatch is modeled per side by an amplitude factor `m = 1 + eps`
//! and a phase offset `psi`, which act on the signal through the complex
//! pair (alpha, beta): the impaired signal is `alpha s + beta s*`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Amplitude/phase imbalance parameters for the transmitter and receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqiParams {
    pub eps_t: f64,
    pub psi_t: f64,
    pub eps_r: f64,
    pub psi_r: f64,
}

impl IqiParams {
    pub fn new(eps_t: f64, psi_t: f64, eps_r: f64, psi_r: f64) -> Result<Self> {
        let p = Self { eps_t, psi_t, eps_r, psi_r };
        p.validate()?;
        Ok(p)
    }

    /// Perfectly matched branches on both sides.
    pub fn matched() -> Self {
        Self { eps_t: 0.0, psi_t: 0.0, eps_r: 0.0, psi_r: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for eps in [self.eps_t, self.eps_r] {
            if !(eps > -1.0) || !eps.is_finite() {
                return Err(Error::InvalidImbalance { eps });
            }
        }
        if !self.psi_t.is_finite() || !self.psi_r.is_finite() {
            return Err(Error::InvalidConfig("phase imbalance must be finite".into()));
        }
        Ok(())
    }

    pub fn m_t(&self) -> f64 {
        1.0 + self.eps_t
    }

    pub fn m_r(&self) -> f64 {
        1.0 + self.eps_r
    }
}

/// The four complex mixing coefficients.
///
/// alpha_T = (1 + m_T e^{j psi_T})/2, beta_T = (1 - m_T e^{j psi_T})/2,
/// alpha_R = (1 + m_R e^{-j psi_R})/2, beta_R = (1 - m_R e^{j psi_R})/2.
/// Note the receive-side sign convention: alpha_R conjugates the phase,
/// beta_R does not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqiCoefficients {
    pub alpha_t: Complex64,
    pub beta_t: Complex64,
    pub alpha_r: Complex64,
    pub beta_r: Complex64,
}

pub fn iqi_coefficients(p: &IqiParams) -> Result<IqiCoefficients> {
    p.validate()?;
    let one = Complex64::new(1.0, 0.0);
    let et = Complex64::from_polar(p.m_t(), p.psi_t);
    let er_neg = Complex64::from_polar(p.m_r(), -p.psi_r);
    let er_pos = Complex64::from_polar(p.m_r(), p.psi_r);
    Ok(IqiCoefficients {
        alpha_t: 0.5 * (one + et),
        beta_t: 0.5 * (one - et),
        alpha_r: 0.5 * (one + er_neg),
        beta_r: 0.5 * (one - er_pos),
    })
}

/// Which convention fixes the squared effective bandwidth from `W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EffBandwidthConvention {
    /// W_eff^2 = W^2 / 3 (the value quoted with the simulation setup).
    #[default]
    WSquaredOverThree,
    /// W_eff^2 = W^2 / 12, the second spectral moment of a unit-energy
    /// flat PSD over [-W/2, W/2].
    SpectralMoment,
}

impl EffBandwidthConvention {
    pub fn eff_bandwidth_sq(&self, bandwidth: f64) -> f64 {
        match self {
            Self::WSquaredOverThree => bandwidth * bandwidth / 3.0,
            Self::SpectralMoment => bandwidth * bandwidth / 12.0,
        }
    }
}

/// Pilot-signal bookkeeping: energies, counts, durations, noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    /// E_t, energy per symbol of the ideal baseband signal (J/symbol).
    pub symbol_energy_baseband: f64,
    /// N_s, number of pilot symbols.
    pub n_pilots: usize,
    /// T_s, symbol duration (s).
    pub symbol_duration: f64,
    /// N_0, noise power spectral density (W/Hz).
    pub noise_psd: f64,
    /// W, signal bandwidth (Hz).
    pub bandwidth: f64,
    /// W_eff^2, squared effective bandwidth (Hz^2).
    pub eff_bandwidth_sq: f64,
}

impl SignalConfig {
    pub fn new(
        symbol_energy_baseband: f64,
        n_pilots: usize,
        symbol_duration: f64,
        noise_psd: f64,
        bandwidth: f64,
        eff_bandwidth_sq: f64,
    ) -> Result<Self> {
        let cfg = Self {
            symbol_energy_baseband,
            n_pilots,
            symbol_duration,
            noise_psd,
            bandwidth,
            eff_bandwidth_sq,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The simulation setup of the degradation study: W = 125 MHz,
    /// T_s = 1/W, N_s = 16, N_0 = -170 dBm/Hz, E_t = 1, W_eff^2 = W^2/3.
    pub fn study_defaults() -> Self {
        let bandwidth = 125e6;
        Self {
            symbol_energy_baseband: 1.0,
            n_pilots: 16,
            symbol_duration: 1.0 / bandwidth,
            noise_psd: 1e-3 * 10f64.powf(-170.0 / 10.0),
            bandwidth,
            eff_bandwidth_sq: EffBandwidthConvention::WSquaredOverThree.eff_bandwidth_sq(bandwidth),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("E_t", self.symbol_energy_baseband),
            ("T_s", self.symbol_duration),
            ("N_0", self.noise_psd),
            ("W", self.bandwidth),
            ("W_eff^2", self.eff_bandwidth_sq),
        ];
        for (name, v) in all {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_pilots == 0 {
            return Err(Error::InvalidConfig("need at least one pilot symbol".into()));
        }
        Ok(())
    }

    /// T_0 = N_s * T_s.
    pub fn observation_time(&self) -> f64 {
        self.n_pilots as f64 * self.symbol_duration
    }
}

/// E_s = 2 E_t / (1 + m_T^2): transmit-side imbalance costs symbol energy.
pub fn transmit_symbol_energy(cfg: &SignalConfig, p: &IqiParams) -> Result<f64> {
    p.validate()?;
    let m_t = p.m_t();
    Ok(2.0 * cfg.symbol_energy_baseband / (1.0 + m_t * m_t))
}

/// sigma_z^2 = N_0 (1 + m_R^2) sigma_b^2 / 2: post-combining noise variance.
pub fn noise_variance(cfg: &SignalConfig, p: &IqiParams, beam_power: f64) -> Result<f64> {
    p.validate()?;
    let m_r = p.m_r();
    Ok(0.5 * cfg.noise_psd * (1.0 + m_r * m_r) * beam_power)
}

/// Integrated second-order statistics of the impaired pilot signal,
/// normalized by unit symbol energy:
///
/// * `c_hh`:  integral of E[s_T s_T^H]  = (1 + m_T^2) N_s / 2
/// * `c_tt`:  integral of E[s_T s_T^T]  = (1 - m_T^2 e^{2j psi_T}) N_s / 2
/// * `c_dhh`, `c_dtt`: the same for the delay-derivative signal, which is
///   the base correlation scaled by the common factor 4 pi^2 W_eff^2.
///
/// Cross-correlations between the derivative and the base signal vanish.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationConstants {
    pub c_hh: f64,
    pub c_tt: Complex64,
    pub c_dhh: f64,
    pub c_dtt: Complex64,
}

pub fn correlation_constants(cfg: &SignalConfig, p: &IqiParams) -> Result<CorrelationConstants> {
    p.validate()?;
    let n_s = cfg.n_pilots as f64;
    let m_t = p.m_t();
    let c_hh = 0.5 * (1.0 + m_t * m_t) * n_s;
    let c_tt = 0.5
        * n_s
        * (Complex64::new(1.0, 0.0) - Complex64::from_polar(m_t * m_t, 2.0 * p.psi_t));
    let scale = 4.0 * PI * PI * cfg.eff_bandwidth_sq;
    Ok(CorrelationConstants { c_hh, c_tt, c_dhh: scale * c_hh, c_dtt: scale * c_tt })
}
