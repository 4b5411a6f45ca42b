//! Closed-form Fisher information of the channel parameters
//! `[phi_R, phi_T, tau, gamma_R, gamma_I, eps_R, eps_T, psi_R, psi_T]`,
//! its reduction to the 3x3 equivalent FIM of the geometric parameters,
//! and the matched (imbalance-free) baseline FIM.
//!
//! Every score vector has the form `sqrt(E_s N_R N_T) (a u + b u*)` with
//! `u = c (W^H v_R)(v_T^H F) w(t)`, where `(a, b)` are receive-side mixing
//! coefficients, `c` a complex gain, `v_R in {a_R, k_R}`, `v_T in {a_T,
//! k_T}`, and `w(t)` one of three transmit-side pilot signals. Each FIM
//! entry therefore reduces to the bilinear pattern
//!
//! `J_xy = pref * Re{ (a_x* a_y + b_x b_y*) c_x* c_y S_H Q_H
//!                  + (a_x b_y* + b_x* a_y) c_x  c_y S_T Q_T }`
//!
//! with `S_H`/`S_T` the integrated pilot correlations and `Q_H`/`Q_T`
//! quadratic forms in the beamformers. Assembling all 45 distinct entries
//! through this one pattern keeps the catalogue free of transcription
//! slips; the numerical oracle checks it entry by entry.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{steering_derivative, steering_vector, ArrayConfig, BeamformerSet};
use crate::error::{Error, Result};
use crate::linalg;
use crate::signal::{
    correlation_constants, iqi_coefficients, noise_variance, transmit_symbol_energy, IqiParams,
    SignalConfig,
};

/// Row/column order of the 9x9 channel FIM.
pub const PARAM_NAMES: [&str; 9] =
    ["phi_r", "phi_t", "tau", "gamma_r", "gamma_i", "eps_r", "eps_t", "psi_r", "psi_t"];

/// Default conditioning threshold for nuisance marginalization and bound
/// extraction: beyond this the configuration is treated as unidentifiable.
pub const DEFAULT_COND_THRESHOLD: f64 = 1e12;

/// Geometric and gain parameters of the single-path channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Direction of arrival (rad).
    pub phi_r: f64,
    /// Direction of departure (rad).
    pub phi_t: f64,
    /// Time of arrival (s).
    pub tau: f64,
    pub gamma_re: f64,
    pub gamma_im: f64,
}

impl ChannelParams {
    pub fn new(phi_r: f64, phi_t: f64, tau: f64, gamma_re: f64, gamma_im: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { phi_r, phi_t, tau, gamma_re, gamma_im })
    }

    pub fn gamma(&self) -> Complex64 {
        Complex64::new(self.gamma_re, self.gamma_im)
    }

    pub fn gamma_abs(&self) -> f64 {
        self.gamma().norm()
    }

    pub fn theta(&self) -> f64 {
        self.gamma().arg()
    }
}

/// A complete physical configuration: arrays, beamformers, pilot signal,
/// imbalance, and channel. Both the closed form and the oracle consume it.
#[derive(Debug, Clone)]
pub struct Scene {
    pub tx_array: ArrayConfig,
    pub rx_array: ArrayConfig,
    /// Transmit beamformer F (N_T x N_B).
    pub tx_beams: BeamformerSet,
    /// Receive beamformer W (N_R x N_B).
    pub rx_beams: BeamformerSet,
    pub signal: SignalConfig,
    pub iqi: IqiParams,
    pub channel: ChannelParams,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.tx_beams.n_antennas() != self.tx_array.n_elements() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "F has {} rows but the transmit array has {} elements",
                    self.tx_beams.n_antennas(),
                    self.tx_array.n_elements()
                ),
            });
        }
        if self.rx_beams.n_antennas() != self.rx_array.n_elements() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "W has {} rows but the receive array has {} elements",
                    self.rx_beams.n_antennas(),
                    self.rx_array.n_elements()
                ),
            });
        }
        if self.tx_beams.n_beams() != self.rx_beams.n_beams() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "F has {} beams, W has {}",
                    self.tx_beams.n_beams(),
                    self.rx_beams.n_beams()
                ),
            });
        }
        self.signal.validate()?;
        self.iqi.validate()
    }

    /// The same scene with all imbalance parameters removed (set to zero).
    pub fn matched(&self) -> Scene {
        let mut scene = self.clone();
        scene.iqi = IqiParams::matched();
        scene
    }
}

/// Scalar aggregates of the FIM prefactors.
#[derive(Debug, Clone, Copy)]
pub struct FimContext {
    /// eta = E_s N_R N_T N_s / (4 sigma_z^2).
    pub eta: f64,
    pub g_r: f64,
    pub g_t: f64,
    pub w_r: Complex64,
    pub w_t: Complex64,
    pub theta: f64,
    pub gamma_abs: f64,
    pub e_s: f64,
    pub sigma_z_sq: f64,
    pub n_r: usize,
    pub n_t: usize,
}

impl FimContext {
    pub fn new(
        signal: &SignalConfig,
        iqi: &IqiParams,
        channel: &ChannelParams,
        n_r: usize,
        n_t: usize,
        beam_power: f64,
    ) -> Result<Self> {
        let e_s = transmit_symbol_energy(signal, iqi)?;
        let sigma_z_sq = noise_variance(signal, iqi, beam_power)?;
        let m_r = iqi.m_r();
        let m_t = iqi.m_t();
        let eta = e_s * (n_r * n_t) as f64 * signal.n_pilots as f64 / (4.0 * sigma_z_sq);
        Ok(Self {
            eta,
            g_r: 1.0 + m_r * m_r,
            g_t: 1.0 + m_t * m_t,
            w_r: Complex64::new(1.0, 0.0) - Complex64::from_polar(m_r * m_r, -2.0 * iqi.psi_r),
            w_t: Complex64::new(1.0, 0.0) - Complex64::from_polar(m_t * m_t, 2.0 * iqi.psi_t),
            theta: channel.theta(),
            gamma_abs: channel.gamma_abs(),
            e_s,
            sigma_z_sq,
            n_r,
            n_t,
        })
    }
}

/// The recurring beamformer quadratic forms over `{a, da/dphi}` on each
/// side, indexed 0 = steering vector, 1 = its angle derivative:
///
/// * `h_rx[x][y] = v_x^H W W^H v_y`    * `t_rx[x][y] = v_x^T W* W^H v_y`
/// * `h_tx[x][y] = v_x^H F F^H v_y`    * `t_tx[x][y] = v_x^H F F^T v_y*`
#[derive(Debug, Clone, Copy)]
pub struct BeamGainTerms {
    pub h_rx: [[Complex64; 2]; 2],
    pub t_rx: [[Complex64; 2]; 2],
    pub h_tx: [[Complex64; 2]; 2],
    pub t_tx: [[Complex64; 2]; 2],
}

/// Compute every beamformer quadratic form needed by the entry catalogue.
pub fn beam_gain_terms(
    tx_beams: &BeamformerSet,
    rx_beams: &BeamformerSet,
    tx_array: &ArrayConfig,
    rx_array: &ArrayConfig,
    channel: &ChannelParams,
) -> Result<BeamGainTerms> {
    if tx_beams.n_antennas() != tx_array.n_elements()
        || rx_beams.n_antennas() != rx_array.n_elements()
    {
        return Err(Error::DimensionMismatch {
            context: "beamformer rows must match array elements".into(),
        });
    }
    let a_r = steering_vector(rx_array, channel.phi_r);
    let k_r = steering_derivative(rx_array, channel.phi_r);
    let a_t = steering_vector(tx_array, channel.phi_t);
    let k_t = steering_derivative(tx_array, channel.phi_t);

    let w = rx_beams.matrix();
    let f = tx_beams.matrix();
    // W^H v and F^H v: beam-space images of the array vectors.
    let wu = [w.adjoint() * &a_r, w.adjoint() * &k_r];
    let fu = [f.adjoint() * &a_t, f.adjoint() * &k_t];

    let mut h_rx = [[Complex64::default(); 2]; 2];
    let mut t_rx = [[Complex64::default(); 2]; 2];
    let mut h_tx = [[Complex64::default(); 2]; 2];
    let mut t_tx = [[Complex64::default(); 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            h_rx[x][y] = wu[x].dotc(&wu[y]);
            t_rx[x][y] = wu[x].dot(&wu[y]);
            h_tx[x][y] = fu[x].dotc(&fu[y]);
            t_tx[x][y] = fu[x].dot(&fu[y]).conj();
        }
    }
    Ok(BeamGainTerms { h_rx, t_rx, h_tx, t_tx })
}

/// Transmit-side pilot signal entering a score vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SigKind {
    /// s_T(t - tau).
    Base,
    /// d s_T(t - tau) / d tau.
    Delay,
    /// d s_T(t - tau) / d eps_T = (e^{j psi_T}/2)(s - s*).
    EpsT,
}

/// One parameter's score-vector descriptor.
#[derive(Debug, Clone, Copy)]
struct ParamDesc {
    a: Complex64,
    b: Complex64,
    c: Complex64,
    rx: usize,
    tx: usize,
    sig: SigKind,
}

fn param_descriptors(iqi: &IqiParams, channel: &ChannelParams) -> Result<[ParamDesc; 9]> {
    let co = iqi_coefficients(iqi)?;
    let (ar, br) = (co.alpha_r, co.beta_r);
    let gamma = channel.gamma();
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let m_r = iqi.m_r();
    let m_t = iqi.m_t();
    let er_neg = Complex64::from_polar(1.0, -iqi.psi_r);
    let er_pos = Complex64::from_polar(1.0, iqi.psi_r);
    Ok([
        // phi_R: gamma W^H k_R a_T^H F s_T
        ParamDesc { a: ar, b: br, c: gamma, rx: 1, tx: 0, sig: SigKind::Base },
        // phi_T: gamma W^H a_R k_T^H F s_T
        ParamDesc { a: ar, b: br, c: gamma, rx: 0, tx: 1, sig: SigKind::Base },
        // tau: gamma W^H a_R a_T^H F (d s_T / d tau)
        ParamDesc { a: ar, b: br, c: gamma, rx: 0, tx: 0, sig: SigKind::Delay },
        // gamma_R: W^H a_R a_T^H F s_T
        ParamDesc { a: ar, b: br, c: one, rx: 0, tx: 0, sig: SigKind::Base },
        // gamma_I: j W^H a_R a_T^H F s_T
        ParamDesc { a: ar, b: br, c: i, rx: 0, tx: 0, sig: SigKind::Base },
        // eps_R: the receive mixing coefficients are differentiated instead.
        ParamDesc {
            a: 0.5 * er_neg,
            b: -0.5 * er_pos,
            c: gamma,
            rx: 0,
            tx: 0,
            sig: SigKind::Base,
        },
        // eps_T.
        ParamDesc { a: ar, b: br, c: gamma, rx: 0, tx: 0, sig: SigKind::EpsT },
        // psi_R.
        ParamDesc {
            a: -0.5 * i * m_r * er_neg,
            b: -0.5 * i * m_r * er_pos,
            c: gamma,
            rx: 0,
            tx: 0,
            sig: SigKind::Base,
        },
        // psi_T: j m_T times the eps_T score on both mixing branches, which
        // pins J_{psi_T psi_T} = m_T^2 J_{eps_T eps_T}.
        ParamDesc { a: i * m_t * ar, b: i * m_t * br, c: gamma, rx: 0, tx: 0, sig: SigKind::EpsT },
    ])
}

/// Integrated pilot-correlation scalars for each signal pair.
struct SigTable {
    c_hh: Complex64,
    c_tt: Complex64,
    c_dhh: Complex64,
    c_dtt: Complex64,
    /// E-signal self terms.
    e_hh: Complex64,
    e_tt: Complex64,
    /// Base/E cross terms.
    se_hh: Complex64,
    se_tt: Complex64,
}

impl SigTable {
    fn new(signal: &SignalConfig, iqi: &IqiParams) -> Result<Self> {
        let cc = correlation_constants(signal, iqi)?;
        let n_s = signal.n_pilots as f64;
        let m_t = iqi.m_t();
        let e2psi = Complex64::from_polar(1.0, 2.0 * iqi.psi_t);
        Ok(Self {
            c_hh: Complex64::new(cc.c_hh, 0.0),
            c_tt: cc.c_tt,
            c_dhh: Complex64::new(cc.c_dhh, 0.0),
            c_dtt: cc.c_dtt,
            e_hh: Complex64::new(0.5 * n_s, 0.0),
            e_tt: -0.5 * n_s * e2psi,
            se_hh: Complex64::new(0.5 * m_t * n_s, 0.0),
            se_tt: -0.5 * m_t * n_s * e2psi,
        })
    }

    fn hermitian(&self, x: SigKind, y: SigKind) -> Complex64 {
        use SigKind::*;
        match (x, y) {
            (Base, Base) => self.c_hh,
            (Delay, Delay) => self.c_dhh,
            (EpsT, EpsT) => self.e_hh,
            (Base, EpsT) | (EpsT, Base) => self.se_hh,
            // Delay/non-delay cross-correlations vanish.
            _ => Complex64::default(),
        }
    }

    fn transpose(&self, x: SigKind, y: SigKind) -> Complex64 {
        use SigKind::*;
        match (x, y) {
            (Base, Base) => self.c_tt,
            (Delay, Delay) => self.c_dtt,
            (EpsT, EpsT) => self.e_tt,
            (Base, EpsT) | (EpsT, Base) => self.se_tt,
            _ => Complex64::default(),
        }
    }
}

/// The 9x9 channel-parameter FIM (row/column order [`PARAM_NAMES`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Fim9 {
    matrix: DMatrix<f64>,
}

impl Fim9 {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != 9 || matrix.ncols() != 9 {
            return Err(Error::DimensionMismatch { context: "channel FIM must be 9x9".into() });
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// 3x3 geometric block over [phi_R, phi_T, tau].
    pub fn geometric_block(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.matrix[(i, j)])
    }

    /// 3x6 coupling block between geometric and nuisance parameters.
    pub fn coupling_block(&self) -> DMatrix<f64> {
        self.matrix.view((0, 3), (3, 6)).into_owned()
    }

    /// 6x6 nuisance block over [gamma_R, gamma_I, eps_R, eps_T, psi_R, psi_T].
    pub fn nuisance_block(&self) -> DMatrix<f64> {
        self.matrix.view((3, 3), (6, 6)).into_owned()
    }
}

/// 3x3 equivalent FIM over [phi_R, phi_T, tau].
#[derive(Debug, Clone, PartialEq)]
pub struct Efim3 {
    pub matrix: Matrix3<f64>,
}

/// Matched-baseline FIM over [phi_R, phi_T, tau, gamma_R, gamma_I].
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedFim5 {
    matrix: DMatrix<f64>,
}

impl MatchedFim5 {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

fn bilinear_entry(
    x: &ParamDesc,
    y: &ParamDesc,
    bg: &BeamGainTerms,
    sig: &SigTable,
    pref: f64,
) -> f64 {
    let coef_h = x.a.conj() * y.a + x.b * y.b.conj();
    let coef_t = x.a * y.b.conj() + x.b.conj() * y.a;
    let q_h = bg.h_rx[x.rx][y.rx] * bg.h_tx[y.tx][x.tx];
    let q_t = bg.t_rx[x.rx][y.rx] * bg.t_tx[y.tx][x.tx];
    let s_h = sig.hermitian(x.sig, y.sig);
    let s_t = sig.transpose(x.sig, y.sig);
    pref * (coef_h * x.c.conj() * y.c * s_h * q_h + coef_t * x.c * y.c * s_t * q_t).re
}

fn assemble_generic(
    descs: &[ParamDesc],
    bg: &BeamGainTerms,
    sig: &SigTable,
    pref: f64,
) -> DMatrix<f64> {
    let n = descs.len();
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in x..n {
            let v = bilinear_entry(&descs[x], &descs[y], bg, sig, pref);
            m[(x, y)] = v;
            m[(y, x)] = v;
        }
    }
    m
}

/// Deterministic noise-derivative contribution to J_{eps_R eps_R}:
/// `2 m_R^2 N_B^2 T_0 / g_R^2`. Independent of the symbol energy.
pub fn noise_information_term(signal: &SignalConfig, iqi: &IqiParams, n_beams: usize) -> f64 {
    let m_r = iqi.m_r();
    let g_r = 1.0 + m_r * m_r;
    let t0 = signal.observation_time();
    2.0 * m_r * m_r * (n_beams * n_beams) as f64 * t0 / (g_r * g_r)
}

/// Assemble the full 9x9 channel FIM from context, beam gains, imbalance
/// and pilot configuration.
pub fn assemble_fim(
    ctx: &FimContext,
    terms: &BeamGainTerms,
    iqi: &IqiParams,
    signal: &SignalConfig,
    channel: &ChannelParams,
    n_beams: usize,
) -> Result<Fim9> {
    let descs = param_descriptors(iqi, channel)?;
    let sig = SigTable::new(signal, iqi)?;
    let pref = ctx.e_s * (ctx.n_r * ctx.n_t) as f64 / ctx.sigma_z_sq;
    let mut m = assemble_generic(&descs, terms, &sig, pref);
    m[(5, 5)] += noise_information_term(signal, iqi, n_beams);
    Fim9::from_matrix(m)
}

/// Convenience wrapper: channel FIM straight from a [`Scene`].
pub fn scene_fim(scene: &Scene) -> Result<Fim9> {
    scene.validate()?;
    let terms = beam_gain_terms(
        &scene.tx_beams,
        &scene.rx_beams,
        &scene.tx_array,
        &scene.rx_array,
        &scene.channel,
    )?;
    let ctx = FimContext::new(
        &scene.signal,
        &scene.iqi,
        &scene.channel,
        scene.rx_array.n_elements(),
        scene.tx_array.n_elements(),
        scene.rx_beams.beam_power(),
    )?;
    assemble_fim(&ctx, &terms, &scene.iqi, &scene.signal, &scene.channel, scene.rx_beams.n_beams())
}

/// The signal-dependent part of the FIM alone (no noise-derivative term).
/// Together with [`noise_information_term`] this decomposes the full FIM;
/// the signal part scales linearly with E_s at fixed sigma_z^2.
pub fn scene_fim_signal_part(scene: &Scene) -> Result<Fim9> {
    scene.validate()?;
    let terms = beam_gain_terms(
        &scene.tx_beams,
        &scene.rx_beams,
        &scene.tx_array,
        &scene.rx_array,
        &scene.channel,
    )?;
    let ctx = FimContext::new(
        &scene.signal,
        &scene.iqi,
        &scene.channel,
        scene.rx_array.n_elements(),
        scene.tx_array.n_elements(),
        scene.rx_beams.beam_power(),
    )?;
    let descs = param_descriptors(&scene.iqi, &scene.channel)?;
    let sig = SigTable::new(&scene.signal, &scene.iqi)?;
    let pref = ctx.e_s * (ctx.n_r * ctx.n_t) as f64 / ctx.sigma_z_sq;
    Fim9::from_matrix(assemble_generic(&descs, &terms, &sig, pref))
}

/// Schur complement onto the geometric block: J_G - J_GN J_N^+ J_GN^T.
///
/// The nuisance block of this model is structurally rank-deficient for
/// symmetric ULAs (the beam-space images of the steering vectors are real,
/// which collapses the nuisance observables), so the marginalization uses
/// the generalized Schur complement: nuisance eigendirections below the
/// conditioning cutoff are dropped after verifying the coupling carries no
/// component along them — a property guaranteed for any true Gram.
pub fn efim_geometric(j: &Fim9, cond_threshold: f64) -> Result<Efim3> {
    let j_g = j.geometric_block();
    let j_gn = j.coupling_block();
    let j_n = j.nuisance_block();
    let x = linalg::psd_marginal_solve(&j_n, &j_gn.transpose(), cond_threshold)
        .map_err(|cond| Error::NearSingularNuisanceBlock { cond, threshold: cond_threshold })?;
    let correction = &j_gn * x;
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        for k in 0..3 {
            out[(i, k)] = j_g[(i, k)] - correction[(i, k)];
        }
    }
    // Exact symmetry by construction.
    let sym = 0.5 * (out + out.transpose());
    Ok(Efim3 { matrix: sym })
}

/// Assemble the matched-baseline 5x5 FIM over
/// [phi_R, phi_T, tau, gamma_R, gamma_I] from a context built with matched
/// imbalance. Useful when the beam gains are shared across many channel
/// realizations (sweeps reuse `terms` per position).
pub fn assemble_matched_fim(
    ctx: &FimContext,
    terms: &BeamGainTerms,
    signal: &SignalConfig,
    channel: &ChannelParams,
) -> Result<MatchedFim5> {
    let iqi = IqiParams::matched();
    let descs = param_descriptors(&iqi, channel)?;
    let sig = SigTable::new(signal, &iqi)?;
    let pref = ctx.e_s * (ctx.n_r * ctx.n_t) as f64 / ctx.sigma_z_sq;
    let m = assemble_generic(&descs[..5], terms, &sig, pref);
    Ok(MatchedFim5 { matrix: m })
}

/// Matched-baseline 5x5 FIM over [phi_R, phi_T, tau, gamma_R, gamma_I]:
/// the imbalance parameters are removed from the model and set to zero.
pub fn matched_fim(scene: &Scene) -> Result<MatchedFim5> {
    let matched = scene.matched();
    matched.validate()?;
    let terms = beam_gain_terms(
        &matched.tx_beams,
        &matched.rx_beams,
        &matched.tx_array,
        &matched.rx_array,
        &matched.channel,
    )?;
    let ctx = FimContext::new(
        &matched.signal,
        &matched.iqi,
        &matched.channel,
        matched.rx_array.n_elements(),
        matched.tx_array.n_elements(),
        matched.rx_beams.beam_power(),
    )?;
    assemble_matched_fim(&ctx, &terms, &matched.signal, &matched.channel)
}

/// EFIM of the matched baseline: Schur complement over [gamma_R, gamma_I].
pub fn matched_efim(j: &MatchedFim5, cond_threshold: f64) -> Result<Efim3> {
    let j_g = j.matrix.view((0, 0), (3, 3)).into_owned();
    let j_gn = j.matrix.view((0, 3), (3, 2)).into_owned();
    let j_n = j.matrix.view((3, 3), (2, 2)).into_owned();
    let x = linalg::psd_marginal_solve(&j_n, &j_gn.transpose(), cond_threshold)
        .map_err(|cond| Error::NearSingularNuisanceBlock { cond, threshold: cond_threshold })?;
    let correction = &j_gn * x;
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        for k in 0..3 {
            out[(i, k)] = j_g[(i, k)] - correction[(i, k)];
        }
    }
    let sym = 0.5 * (out + out.transpose());
    Ok(Efim3 { matrix: sym })
}
