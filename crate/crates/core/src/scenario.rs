//! Scenario sweeps over imbalance grids.
//!
//! A sweep grids the imbalance parameters of one side of the link (the
//! *swept* side), randomizes the far end, samples transmitter locations
//! uniformly over the service region, and reports the mean percentage
//! degradation of PEB/OEB relative to the matched baseline at each grid
//! point. The service region is the diamond `{(x, y): y >= |x| and
//! y <= L*sqrt(2) - |x|}`; sampling `(u, v) ~ U(0, L)^2` and rotating by 45
//! degrees covers it exactly.
//!
//! Determinism: all randomness flows from per-position ChaCha streams keyed
//! by `(seed, position index)`, so the environment draws (location, channel
//! phase, far-end imbalance) are identical at every grid point and the
//! parallel schedule never affects output. Sharing the environment across
//! grid points pairs the comparisons, which is what makes the degradation
//! surface smooth at moderate sample counts.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{make_directional_beamformer, ArrayConfig, BeamformerSet};
use crate::error::{Error, Result};
use crate::fim::{
    assemble_fim, assemble_matched_fim, beam_gain_terms, efim_geometric, matched_efim,
    scene_fim, BeamGainTerms, ChannelParams, FimContext, Scene, DEFAULT_COND_THRESHOLD,
    PARAM_NAMES,
};
use crate::geometry::{bounds_from_efim, geometry_from_location, BoundResult, LocParams, SPEED_OF_LIGHT};
use crate::oracle::{deterministic_fim, monte_carlo_fim, NumericFim, Pulse};
use crate::signal::{IqiParams, SignalConfig};

/// Which side of the link the grid sweeps; the other side is the far end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepSide {
    Tx,
    Rx,
}

/// One axis of the imbalance grid: `steps` points spread linearly over
/// `[min, max]` (a single step collapses to `min`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.steps <= 1 {
            return vec![self.min];
        }
        let d = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.min + i as f64 * d).collect()
    }
}

/// Far-end imbalance: either redrawn each iteration or held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FarEnd {
    Random { eps_min: f64, eps_max: f64, psi_min_deg: f64, psi_max_deg: f64 },
    Fixed { eps: f64, psi_deg: f64 },
}

impl FarEnd {
    /// Representative value written into the far-end CSV columns: the fixed
    /// value, or the range midpoint when randomized.
    fn reported(&self) -> (f64, f64) {
        match *self {
            FarEnd::Fixed { eps, psi_deg } => (eps, psi_deg),
            FarEnd::Random { eps_min, eps_max, psi_min_deg, psi_max_deg } => {
                (0.5 * (eps_min + eps_max), 0.5 * (psi_min_deg + psi_max_deg))
            }
        }
    }
}

/// Built-in sweep presets for the degradation study's result figures.
/// The naming follows the figure map in the README.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigurePreset {
    /// Transmitter-side grid; plot `peb_deg_pct`.
    Fig3,
    /// Transmitter-side sweep with a fine eps axis and three psi slices;
    /// plot `peb_deg_pct` against `eps_t`.
    Fig4,
    /// Transmitter-side grid; plot `oeb_deg_pct`.
    Fig5,
    /// Receiver-side grid; plot `peb_deg_pct`.
    Fig6,
    /// Receiver-side grid; plot `oeb_deg_pct`.
    Fig7,
}

/// Full description of a sweep: link hardware, pilot signal, grid,
/// far-end model, region sampling and seeding. Loads from TOML; omitted
/// fields fall back to the transmitter-sweep defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Carrier frequency f_c (Hz); fixes the wavelength for |gamma|.
    pub carrier_freq_hz: f64,
    pub n_rx_antennas: usize,
    pub n_tx_antennas: usize,
    pub n_beams: usize,
    /// Per-beam pilot power sigma_b^2.
    pub beam_power: f64,
    pub signal: SignalConfig,
    /// Transmitter array orientation phi_0 (degrees).
    pub phi_0_deg: f64,
    pub sweep_side: SweepSide,
    pub eps_grid: GridAxis,
    pub psi_grid_deg: GridAxis,
    pub far_end: FarEnd,
    /// Region scale L: the service diamond has vertices at (0, 0),
    /// (±L/sqrt(2), L/sqrt(2)) and (0, L*sqrt(2)).
    pub region_extent: f64,
    pub n_positions: usize,
    pub n_iterations: usize,
    /// Multiplier on the free-space |gamma| = lambda / (4 pi r); degradation
    /// percentages are insensitive to it (they are bound ratios).
    pub gamma_scale: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            carrier_freq_hz: 38e9,
            n_rx_antennas: 64,
            n_tx_antennas: 32,
            n_beams: 18,
            beam_power: 1.0,
            signal: SignalConfig::study_defaults(),
            phi_0_deg: 0.0,
            sweep_side: SweepSide::Tx,
            eps_grid: GridAxis { min: -0.5, max: 0.5, steps: 21 },
            psi_grid_deg: GridAxis { min: -30.0, max: 30.0, steps: 21 },
            far_end: FarEnd::Random {
                eps_min: -0.5,
                eps_max: 0.5,
                psi_min_deg: -30.0,
                psi_max_deg: 30.0,
            },
            region_extent: 10.0,
            n_positions: 120,
            n_iterations: 100,
            gamma_scale: 1.0,
            seed: 7,
        }
    }
}

impl ScenarioConfig {
    pub fn preset(fig: FigurePreset) -> Self {
        let mut cfg = ScenarioConfig::default();
        match fig {
            FigurePreset::Fig3 | FigurePreset::Fig5 => {}
            FigurePreset::Fig4 => {
                cfg.eps_grid = GridAxis { min: -0.5, max: 0.5, steps: 41 };
                cfg.psi_grid_deg = GridAxis { min: -30.0, max: 30.0, steps: 3 };
            }
            FigurePreset::Fig6 | FigurePreset::Fig7 => {
                cfg.sweep_side = SweepSide::Rx;
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.signal.validate()?;
        if !(self.carrier_freq_hz > 0.0) {
            return Err(Error::InvalidConfig("carrier frequency must be positive".into()));
        }
        if self.n_rx_antennas == 0 || self.n_tx_antennas == 0 || self.n_beams == 0 {
            return Err(Error::InvalidConfig("antenna and beam counts must be positive".into()));
        }
        if !(self.beam_power > 0.0) {
            return Err(Error::InvalidConfig("beam power must be positive".into()));
        }
        if self.eps_grid.steps == 0 || self.psi_grid_deg.steps == 0 {
            return Err(Error::InvalidConfig("grid axes need at least one step".into()));
        }
        if !(self.region_extent > 0.0) {
            return Err(Error::InvalidConfig("region extent must be positive".into()));
        }
        if self.n_positions == 0 || self.n_iterations == 0 {
            return Err(Error::InvalidConfig("need at least one position and iteration".into()));
        }
        if !(self.gamma_scale > 0.0) || !self.gamma_scale.is_finite() {
            return Err(Error::InvalidConfig("gamma scale must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }
}

/// Load a [`ScenarioConfig`] from a TOML file.
pub fn load_config(path: &std::path::Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let cfg: ScenarioConfig = toml::from_str(&text)
        .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

/// One row of sweep output: the grid point, the mean percentage
/// degradations, and how many samples succeeded/failed. The psi columns
/// are in degrees; on the randomized far end the columns carry the range
/// midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub eps_t: f64,
    pub psi_t: f64,
    pub eps_r: f64,
    pub psi_r: f64,
    pub peb_deg_pct: f64,
    pub oeb_deg_pct: f64,
    pub n_ok: u64,
    pub n_fail: u64,
}

impl SweepRecord {
    /// A grid point where more than 10% of the samples failed to produce
    /// bounds is flagged; its means are not trustworthy.
    pub fn is_flagged(&self) -> bool {
        let total = self.n_ok + self.n_fail;
        total > 0 && 10 * self.n_fail > total
    }
}

/// ChaCha stream keyed by (seed, domain, index): deterministic and
/// platform-independent, so parallel scheduling cannot change the draws.
fn keyed_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

const POSITION_DOMAIN: u64 = 0x706f736974696f6e; // "position"

/// Per-iteration environment draws shared by every grid point.
struct IterDraw {
    theta: f64,
    far_eps: f64,
    far_psi: f64,
}

/// Everything a grid point needs about one sampled location: geometry,
/// per-iteration draws, beam gains at that geometry, and the matched
/// baseline bounds (identical across grid points).
struct PositionEnv {
    loc: LocParams,
    phi_r: f64,
    phi_t: f64,
    tau: f64,
    gamma_abs: f64,
    terms: BeamGainTerms,
    draws: Vec<IterDraw>,
    matched: Vec<Option<BoundResult>>,
}

/// Uniform sample from the service diamond via the rotated unit square.
fn sample_location(rng: &mut impl Rng, extent: f64, phi_0: f64) -> LocParams {
    loop {
        let u: f64 = rng.gen_range(0.0..extent);
        let v: f64 = rng.gen_range(0.0..extent);
        let x = (u - v) / 2f64.sqrt();
        let y = (u + v) / 2f64.sqrt();
        if y > 1e-9 {
            return LocParams::new(x, y, phi_0).expect("region sample is finite");
        }
    }
}

struct SweepHardware {
    tx_array: ArrayConfig,
    rx_array: ArrayConfig,
    tx_beams: BeamformerSet,
    rx_beams: BeamformerSet,
}

fn build_hardware(cfg: &ScenarioConfig) -> Result<SweepHardware> {
    let tx_array = ArrayConfig::half_wavelength(cfg.n_tx_antennas)?;
    let rx_array = ArrayConfig::half_wavelength(cfg.n_rx_antennas)?;
    let phi_0 = cfg.phi_0_deg.to_radians();
    // The region subtends DOAs in [pi/4, 3*pi/4]; the DOD sector follows
    // from phi_T = pi - phi_0 + phi_R.
    let rx_sector = (PI / 4.0, 3.0 * PI / 4.0);
    let tx_sector = (PI - phi_0 + rx_sector.0, PI - phi_0 + rx_sector.1);
    let rx_beams = make_directional_beamformer(&rx_array, cfg.n_beams, rx_sector, cfg.beam_power)?;
    let tx_beams = make_directional_beamformer(&tx_array, cfg.n_beams, tx_sector, cfg.beam_power)?;
    Ok(SweepHardware { tx_array, rx_array, tx_beams, rx_beams })
}

fn build_environment(cfg: &ScenarioConfig, hw: &SweepHardware) -> Result<Vec<PositionEnv>> {
    let phi_0 = cfg.phi_0_deg.to_radians();
    let lambda = cfg.wavelength();
    let matched_iqi = IqiParams::matched();
    (0..cfg.n_positions)
        .map(|pi| {
            let mut rng = keyed_rng(cfg.seed, POSITION_DOMAIN, pi as u64);
            let loc = sample_location(&mut rng, cfg.region_extent, phi_0);
            let geo = geometry_from_location(&loc)?;
            let gamma_abs = cfg.gamma_scale * lambda / (4.0 * PI * loc.range());
            let draws: Vec<IterDraw> = (0..cfg.n_iterations)
                .map(|_| {
                    let theta = rng.gen_range(0.0..2.0 * PI);
                    let (far_eps, far_psi) = match cfg.far_end {
                        FarEnd::Fixed { eps, psi_deg } => (eps, psi_deg.to_radians()),
                        FarEnd::Random { eps_min, eps_max, psi_min_deg, psi_max_deg } => (
                            rng.gen_range(eps_min..=eps_max),
                            rng.gen_range(psi_min_deg.to_radians()..=psi_max_deg.to_radians()),
                        ),
                    };
                    IterDraw { theta, far_eps, far_psi }
                })
                .collect();
            let channel_for_terms =
                ChannelParams::new(geo.phi_r, geo.phi_t, geo.tau, gamma_abs, 0.0)?;
            let terms = beam_gain_terms(
                &hw.tx_beams,
                &hw.rx_beams,
                &hw.tx_array,
                &hw.rx_array,
                &channel_for_terms,
            )?;
            let matched = draws
                .iter()
                .map(|d| {
                    let g = num_complex::Complex64::from_polar(gamma_abs, d.theta);
                    let channel =
                        ChannelParams::new(geo.phi_r, geo.phi_t, geo.tau, g.re, g.im).ok()?;
                    let ctx = FimContext::new(
                        &cfg.signal,
                        &matched_iqi,
                        &channel,
                        cfg.n_rx_antennas,
                        cfg.n_tx_antennas,
                        cfg.beam_power,
                    )
                    .ok()?;
                    let fim = assemble_matched_fim(&ctx, &terms, &cfg.signal, &channel).ok()?;
                    let efim = matched_efim(&fim, DEFAULT_COND_THRESHOLD).ok()?;
                    bounds_from_efim(&efim, &loc, DEFAULT_COND_THRESHOLD).ok()
                })
                .collect();
            Ok(PositionEnv {
                loc,
                phi_r: geo.phi_r,
                phi_t: geo.phi_t,
                tau: geo.tau,
                gamma_abs,
                terms,
                draws,
                matched,
            })
        })
        .collect()
}

/// Run the full sweep: grid points in parallel over the shared environment.
/// Records come back in row-major grid order (eps outer, psi inner).
pub fn run_sweep(cfg: &ScenarioConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let hw = build_hardware(cfg)?;
    let env = build_environment(cfg, &hw)?;
    let eps_values = cfg.eps_grid.values();
    let psi_values = cfg.psi_grid_deg.values();
    let grid: Vec<(f64, f64)> = eps_values
        .iter()
        .flat_map(|&e| psi_values.iter().map(move |&p| (e, p)))
        .collect();
    let (far_eps_rep, far_psi_rep) = cfg.far_end.reported();

    let records: Vec<SweepRecord> = grid
        .par_iter()
        .map(|&(grid_eps, grid_psi_deg)| {
            let grid_psi = grid_psi_deg.to_radians();
            let mut n_ok = 0u64;
            let mut n_fail = 0u64;
            let mut peb_sum = 0.0;
            let mut oeb_sum = 0.0;
            for pos in &env {
                for (draw, matched) in pos.draws.iter().zip(&pos.matched) {
                    let sample = matched.and_then(|base| {
                        let iqi = match cfg.sweep_side {
                            SweepSide::Tx => {
                                IqiParams::new(grid_eps, grid_psi, draw.far_eps, draw.far_psi)
                            }
                            SweepSide::Rx => {
                                IqiParams::new(draw.far_eps, draw.far_psi, grid_eps, grid_psi)
                            }
                        }
                        .ok()?;
                        let g = num_complex::Complex64::from_polar(pos.gamma_abs, draw.theta);
                        let channel =
                            ChannelParams::new(pos.phi_r, pos.phi_t, pos.tau, g.re, g.im).ok()?;
                        let ctx = FimContext::new(
                            &cfg.signal,
                            &iqi,
                            &channel,
                            cfg.n_rx_antennas,
                            cfg.n_tx_antennas,
                            cfg.beam_power,
                        )
                        .ok()?;
                        let fim = assemble_fim(
                            &ctx,
                            &pos.terms,
                            &iqi,
                            &cfg.signal,
                            &channel,
                            cfg.n_beams,
                        )
                        .ok()?;
                        let efim = efim_geometric(&fim, DEFAULT_COND_THRESHOLD).ok()?;
                        let iq = bounds_from_efim(&efim, &pos.loc, DEFAULT_COND_THRESHOLD).ok()?;
                        Some((iq, base))
                    });
                    match sample {
                        Some((iq, base)) if base.peb > 0.0 && base.oeb > 0.0 => {
                            peb_sum += (iq.peb - base.peb) / base.peb * 100.0;
                            oeb_sum += (iq.oeb - base.oeb) / base.oeb * 100.0;
                            n_ok += 1;
                        }
                        _ => n_fail += 1,
                    }
                }
            }
            let denom = if n_ok > 0 { n_ok as f64 } else { 1.0 };
            let (eps_t, psi_t, eps_r, psi_r) = match cfg.sweep_side {
                SweepSide::Tx => (grid_eps, grid_psi_deg, far_eps_rep, far_psi_rep),
                SweepSide::Rx => (far_eps_rep, far_psi_rep, grid_eps, grid_psi_deg),
            };
            SweepRecord {
                eps_t,
                psi_t,
                eps_r,
                psi_r,
                peb_deg_pct: peb_sum / denom,
                oeb_deg_pct: oeb_sum / denom,
                n_ok,
                n_fail,
            }
        })
        .collect();
    Ok(records)
}

/// PEB/OEB at a single point under a fully specified imbalance, together
/// with the matched baseline. `theta` is the channel phase in radians.
pub struct PointBounds {
    pub iq: BoundResult,
    pub matched: BoundResult,
    pub gamma_abs: f64,
}

pub fn point_bounds(
    cfg: &ScenarioConfig,
    loc: &LocParams,
    iqi: &IqiParams,
    theta: f64,
) -> Result<PointBounds> {
    cfg.validate()?;
    let hw = build_hardware(cfg)?;
    let geo = geometry_from_location(loc)?;
    let gamma_abs = cfg.gamma_scale * cfg.wavelength() / (4.0 * PI * loc.range());
    let g = num_complex::Complex64::from_polar(gamma_abs, theta);
    let channel = ChannelParams::new(geo.phi_r, geo.phi_t, geo.tau, g.re, g.im)?;
    let scene = Scene {
        tx_array: hw.tx_array,
        rx_array: hw.rx_array,
        tx_beams: hw.tx_beams,
        rx_beams: hw.rx_beams,
        signal: cfg.signal,
        iqi: *iqi,
        channel,
    };
    let fim = scene_fim(&scene)?;
    let efim = efim_geometric(&fim, DEFAULT_COND_THRESHOLD)?;
    let iq = bounds_from_efim(&efim, loc, DEFAULT_COND_THRESHOLD)?;
    let mfim = crate::fim::matched_fim(&scene)?;
    let mefim = matched_efim(&mfim, DEFAULT_COND_THRESHOLD)?;
    let matched = bounds_from_efim(&mefim, loc, DEFAULT_COND_THRESHOLD)?;
    Ok(PointBounds { iq, matched, gamma_abs })
}

/// One FIM entry compared against the numeric oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyEntry {
    pub row: usize,
    pub col: usize,
    pub row_name: String,
    pub col_name: String,
    pub closed_form: f64,
    pub numeric: f64,
    pub std_err: f64,
    pub z: f64,
}

/// Per-entry comparison of the closed-form FIM against the Monte Carlo
/// oracle. `passed` means every z-score is within the threshold (entries
/// with zero standard error must agree to roundoff instead).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub n_draws: usize,
    pub seed: u64,
    pub z_threshold: f64,
    pub entries: Vec<VerifyEntry>,
    pub max_abs_z: f64,
    pub passed: bool,
}

pub const VERIFY_Z_THRESHOLD: f64 = 4.0;

/// Entries that are structurally near-zero sit many orders of magnitude
/// below the information carried by their own parameters; the oracle
/// resolves them only to the roundoff floor of the Gram accumulation. The
/// floor for entry (i, k) is therefore tied to the geometric mean of the
/// corresponding diagonal entries.
fn roundoff_floor(closed: &DMatrix<f64>, i: usize, k: usize) -> f64 {
    1e-9 * (closed[(i, i)].abs() * closed[(k, k)].abs()).sqrt()
}

fn compare_entries(
    closed: &DMatrix<f64>,
    numeric: &DMatrix<f64>,
    std_err: &DMatrix<f64>,
) -> (Vec<VerifyEntry>, f64, bool) {
    let mut entries = Vec::with_capacity(81);
    let mut max_abs_z = 0.0f64;
    let mut passed = true;
    for i in 0..9 {
        for k in i..9 {
            let cf = closed[(i, k)];
            let num = numeric[(i, k)];
            let se = std_err[(i, k)];
            let diff = num - cf;
            // Differences below the roundoff floor carry no evidence either
            // way; report them as z = 0 rather than dividing roundoff by a
            // (legitimately tiny) statistical standard error.
            let z = if diff.abs() <= roundoff_floor(closed, i, k) {
                0.0
            } else if se > 0.0 {
                diff / se
            } else {
                f64::INFINITY
            };
            max_abs_z = max_abs_z.max(z.abs());
            if !(z.abs() <= VERIFY_Z_THRESHOLD) {
                passed = false;
            }
            entries.push(VerifyEntry {
                row: i,
                col: k,
                row_name: PARAM_NAMES[i].to_string(),
                col_name: PARAM_NAMES[k].to_string(),
                closed_form: cf,
                numeric: num,
                std_err: se,
                z,
            });
        }
    }
    (entries, max_abs_z, passed)
}

/// Compare the closed-form FIM against the Monte Carlo oracle on a scene.
/// `corruption` multiplies the closed-form (phi_R, phi_R) entry before the
/// comparison; the negative-control fixture passes 1.1 to prove the check
/// has power.
pub fn verify_monte_carlo(
    scene: &Scene,
    pulse: &Pulse,
    n_draws: usize,
    seed: u64,
    corruption: Option<f64>,
) -> Result<VerifyReport> {
    let closed = corrupted_closed_form(scene, corruption)?;
    let numeric: NumericFim = monte_carlo_fim(scene, pulse, n_draws, seed)?;
    let (entries, max_abs_z, passed) = compare_entries(&closed, &numeric.mean, &numeric.std_err);
    Ok(VerifyReport {
        n_draws,
        seed,
        z_threshold: VERIFY_Z_THRESHOLD,
        entries,
        max_abs_z,
        passed,
    })
}

/// Deterministic-quadrature comparison: no statistical error, so the check
/// is a tight relative tolerance instead of a z-score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeterministicReport {
    pub max_rel: f64,
    pub rel_tolerance: f64,
    pub passed: bool,
}

pub const DETERMINISTIC_REL_TOLERANCE: f64 = 1e-6;

pub fn verify_deterministic(
    scene: &Scene,
    pulse: &Pulse,
    corruption: Option<f64>,
) -> Result<DeterministicReport> {
    let closed = corrupted_closed_form(scene, corruption)?;
    let numeric = deterministic_fim(scene, pulse)?;
    let mut max_rel = 0.0f64;
    for i in 0..9 {
        for k in 0..9 {
            let cf = closed[(i, k)];
            let denom = cf.abs() + roundoff_floor(&closed, i, k) + f64::MIN_POSITIVE;
            let rel = (numeric[(i, k)] - cf).abs() / denom;
            max_rel = max_rel.max(rel);
        }
    }
    Ok(DeterministicReport {
        max_rel,
        rel_tolerance: DETERMINISTIC_REL_TOLERANCE,
        passed: max_rel < DETERMINISTIC_REL_TOLERANCE,
    })
}

fn corrupted_closed_form(scene: &Scene, corruption: Option<f64>) -> Result<DMatrix<f64>> {
    let mut closed = scene_fim(scene)?.matrix().clone();
    if let Some(factor) = corruption {
        closed[(0, 0)] *= factor;
    }
    Ok(closed)
}

/// Small scene + pulse for oracle verification: reduced antenna counts so
/// the numeric oracle is fast, imbalance and channel drawn from the study's
/// random ranges. The signal's effective bandwidth is replaced by the
/// pulse's own second moment so the two sides model the same waveform.
pub fn small_verify_scene(cfg: &ScenarioConfig, seed: u64) -> Result<(Scene, Pulse)> {
    let mut rng = keyed_rng(seed, 0x766572696679, 0); // "verify"
    let tx_array = ArrayConfig::half_wavelength(4)?;
    let rx_array = ArrayConfig::half_wavelength(6)?;
    let n_beams = 2;
    let tx_beams = make_directional_beamformer(
        &tx_array,
        n_beams,
        (PI + PI / 4.0, PI + 3.0 * PI / 4.0),
        cfg.beam_power,
    )?;
    let rx_beams =
        make_directional_beamformer(&rx_array, n_beams, (PI / 4.0, 3.0 * PI / 4.0), cfg.beam_power)?;
    let iqi = IqiParams::new(
        rng.gen_range(-0.5..=0.5),
        rng.gen_range(-30f64.to_radians()..=30f64.to_radians()),
        rng.gen_range(-0.5..=0.5),
        rng.gen_range(-30f64.to_radians()..=30f64.to_radians()),
    )?;
    let loc = sample_location(&mut rng, cfg.region_extent, cfg.phi_0_deg.to_radians());
    let geo = geometry_from_location(&loc)?;
    let gamma_abs = cfg.gamma_scale * cfg.wavelength() / (4.0 * PI * loc.range());
    let g = num_complex::Complex64::from_polar(gamma_abs, rng.gen_range(0.0..2.0 * PI));
    let channel = ChannelParams::new(geo.phi_r, geo.phi_t, geo.tau, g.re, g.im)?;
    let mut signal = cfg.signal;
    signal.n_pilots = 8;
    let pulse = Pulse::new(signal.n_pilots, 8, signal.symbol_duration)?;
    signal.eff_bandwidth_sq = pulse.eff_bandwidth_sq();
    let scene = Scene { tx_array, rx_array, tx_beams, rx_beams, signal, iqi, channel };
    scene.validate()?;
    Ok((scene, pulse))
}

/// Human-readable verification table.
pub fn format_verify_report(report: &VerifyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8}{:<8}{:>16}{:>16}{:>12}{:>9}",
        "row", "col", "closed_form", "numeric", "std_err", "z"
    );
    for e in &report.entries {
        let _ = writeln!(
            out,
            "{:<8}{:<8}{:>16.6e}{:>16.6e}{:>12.3e}{:>9.2}",
            e.row_name, e.col_name, e.closed_form, e.numeric, e.std_err, e.z
        );
    }
    let _ = writeln!(
        out,
        "max |z| = {:.3} (threshold {}), n_draws = {}: {}",
        report.max_abs_z,
        report.z_threshold,
        report.n_draws,
        if report.passed { "PASS" } else { "FAIL" }
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ScenarioConfig {
        ScenarioConfig {
            n_rx_antennas: 8,
            n_tx_antennas: 4,
            n_beams: 2,
            eps_grid: GridAxis { min: -0.3, max: 0.3, steps: 3 },
            psi_grid_deg: GridAxis { min: -20.0, max: 20.0, steps: 3 },
            n_positions: 4,
            n_iterations: 3,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn grid_axis_values() {
        let a = GridAxis { min: -1.0, max: 1.0, steps: 5 };
        assert_eq!(a.values(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let single = GridAxis { min: 0.25, max: 0.25, steps: 1 };
        assert_eq!(single.values(), vec![0.25]);
    }

    #[test]
    fn region_samples_inside_diamond() {
        let mut rng = keyed_rng(1, 2, 3);
        for _ in 0..500 {
            let p = sample_location(&mut rng, 10.0, 0.0);
            assert!(p.py >= p.px.abs() - 1e-12);
            assert!(p.py <= 10.0 * 2f64.sqrt() - p.px.abs() + 1e-12);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let cfg = tiny_config();
        let a = run_sweep(&cfg).unwrap();
        let b = run_sweep(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 9);
        for r in &a {
            assert_eq!(r.n_ok + r.n_fail, 12);
        }
    }

    #[test]
    fn single_point_grid_matches_direct_pipeline() {
        // One position, one iteration, fixed matched far end: the sweep must
        // reproduce the direct single-call degradation.
        let mut cfg = tiny_config();
        cfg.eps_grid = GridAxis { min: 0.2, max: 0.2, steps: 1 };
        cfg.psi_grid_deg = GridAxis { min: 10.0, max: 10.0, steps: 1 };
        cfg.far_end = FarEnd::Fixed { eps: 0.0, psi_deg: 0.0 };
        cfg.n_positions = 1;
        cfg.n_iterations = 1;
        let records = run_sweep(&cfg).unwrap();
        assert_eq!(records.len(), 1);
        let r = records[0];
        assert_eq!(r.n_ok, 1);

        let mut rng = keyed_rng(cfg.seed, POSITION_DOMAIN, 0);
        let loc = sample_location(&mut rng, cfg.region_extent, 0.0);
        let theta = rng.gen_range(0.0..2.0 * PI);
        let iqi = IqiParams::new(0.2, 10f64.to_radians(), 0.0, 0.0).unwrap();
        let pb = point_bounds(&cfg, &loc, &iqi, theta).unwrap();
        let expect_peb = (pb.iq.peb - pb.matched.peb) / pb.matched.peb * 100.0;
        let expect_oeb = (pb.iq.oeb - pb.matched.oeb) / pb.matched.oeb * 100.0;
        assert!((r.peb_deg_pct - expect_peb).abs() < 1e-9, "{} vs {}", r.peb_deg_pct, expect_peb);
        assert!((r.oeb_deg_pct - expect_oeb).abs() < 1e-9);
    }

    #[test]
    fn matched_grid_point_is_nonnegative_minimum_penalty() {
        // At the matched grid point with a matched far end, the degradation
        // is the pure nuisance penalty of the four extra parameters; it must
        // be nonnegative.
        let mut cfg = tiny_config();
        cfg.eps_grid = GridAxis { min: 0.0, max: 0.0, steps: 1 };
        cfg.psi_grid_deg = GridAxis { min: 0.0, max: 0.0, steps: 1 };
        cfg.far_end = FarEnd::Fixed { eps: 0.0, psi_deg: 0.0 };
        let records = run_sweep(&cfg).unwrap();
        assert_eq!(records[0].n_fail, 0);
        assert!(records[0].peb_deg_pct >= -1e-9);
        assert!(records[0].oeb_deg_pct >= -1e-9);
    }

    #[test]
    fn gamma_scale_does_not_move_degradation() {
        let cfg = tiny_config();
        let base = run_sweep(&cfg).unwrap();
        let mut scaled_cfg = cfg.clone();
        scaled_cfg.gamma_scale = 10.0;
        let scaled = run_sweep(&scaled_cfg).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert!(
                (a.peb_deg_pct - b.peb_deg_pct).abs() < 0.1,
                "peb degradation moved: {} vs {}",
                a.peb_deg_pct,
                b.peb_deg_pct
            );
            assert!((a.oeb_deg_pct - b.oeb_deg_pct).abs() < 0.1);
        }
    }

    #[test]
    fn config_toml_round_trip_and_partial_load() {
        let cfg = ScenarioConfig::preset(FigurePreset::Fig6);
        let text = toml::to_string(&cfg).unwrap();
        let back: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);

        // Partial files fall back to defaults.
        let partial: ScenarioConfig = toml::from_str("n_positions = 7\nseed = 3\n").unwrap();
        assert_eq!(partial.n_positions, 7);
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.n_beams, ScenarioConfig::default().n_beams);
    }

    #[test]
    fn verify_passes_and_corruption_fails() {
        let cfg = tiny_config();
        let (scene, pulse) = small_verify_scene(&cfg, 5).unwrap();
        let det = verify_deterministic(&scene, &pulse, None).unwrap();
        assert!(det.passed, "max_rel = {:.3e}", det.max_rel);
        let det_bad = verify_deterministic(&scene, &pulse, Some(1.1)).unwrap();
        assert!(!det_bad.passed);

        let mc = verify_monte_carlo(&scene, &pulse, 2000, 11, None).unwrap();
        assert!(mc.passed, "max |z| = {}", mc.max_abs_z);
        let mc_bad = verify_monte_carlo(&scene, &pulse, 2000, 11, Some(1.1)).unwrap();
        assert!(!mc_bad.passed);
    }
}
