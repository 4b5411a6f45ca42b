//! Command-line front end: run imbalance sweeps, verify the closed-form
//! Fisher information against the numeric oracle, or query the bounds at a
//! single point. Thread count can be pinned with the `IQLOC_THREADS`
//! environment variable.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use iqloc::export;
use iqloc::scenario::{
    self, load_config, point_bounds, run_sweep, FigurePreset, ScenarioConfig,
};
use iqloc::signal::IqiParams;
use iqloc::geometry::LocParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Figure {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
}

impl From<Figure> for FigurePreset {
    fn from(f: Figure) -> Self {
        match f {
            Figure::Fig3 => FigurePreset::Fig3,
            Figure::Fig4 => FigurePreset::Fig4,
            Figure::Fig5 => FigurePreset::Fig5,
            Figure::Fig6 => FigurePreset::Fig6,
            Figure::Fig7 => FigurePreset::Fig7,
        }
    }
}

/// Error-bound degradation studies for uplink localization under I/Q
/// imbalance.
#[derive(Parser)]
#[command(name = "iqloc", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a degradation sweep over an imbalance grid and export the records.
    Sweep {
        /// TOML scenario file; omitted fields use the study defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Built-in preset (overridden by --config if both are given).
        #[arg(long, value_enum)]
        figure: Option<Figure>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
    },
    /// Compare the closed-form FIM against the numeric oracle on a small
    /// scene; exits nonzero if any entry disagrees.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Monte Carlo draws (ignored with --deterministic).
        #[arg(long, default_value_t = 2000)]
        n_draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Use the deterministic-expectation quadrature instead of Monte
        /// Carlo (tight relative tolerance, no statistics).
        #[arg(long)]
        deterministic: bool,
        /// Write the machine-readable report (JSON) here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// PEB/OEB at a single transmitter location under a fixed imbalance.
    Bound {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        figure: Option<Figure>,
        #[arg(long, default_value_t = 0.0)]
        px: f64,
        #[arg(long, default_value_t = 5.0)]
        py: f64,
        #[arg(long, default_value_t = 0.0)]
        phi0_deg: f64,
        #[arg(long, default_value_t = 0.0)]
        eps_t: f64,
        #[arg(long, default_value_t = 0.0)]
        psi_t_deg: f64,
        #[arg(long, default_value_t = 0.0)]
        eps_r: f64,
        #[arg(long, default_value_t = 0.0)]
        psi_r_deg: f64,
        /// Channel phase theta (degrees).
        #[arg(long, default_value_t = 0.0)]
        theta_deg: f64,
    },
}

fn resolve_config(
    config: &Option<PathBuf>,
    figure: Option<Figure>,
    seed: Option<u64>,
) -> iqloc::Result<ScenarioConfig> {
    let mut cfg = match (config, figure) {
        (Some(path), _) => load_config(path)?,
        (None, Some(fig)) => ScenarioConfig::preset(fig.into()),
        (None, None) => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() {
    if let Ok(v) = std::env::var("IQLOC_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run() -> iqloc::Result<bool> {
    let cli = Cli::parse();
    init_threads();
    match cli.cmd {
        Cmd::Sweep { config, figure, seed, out_dir, format } => {
            let cfg = resolve_config(&config, figure, seed)?;
            let records = run_sweep(&cfg)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| iqloc::Error::Io {
                path: out_dir.display().to_string(),
                source: e,
            })?;
            let path = match format {
                OutputFormat::Csv => {
                    let p = out_dir.join("sweep.csv");
                    export::write_csv_file(&p, &records)?;
                    p
                }
                OutputFormat::Json => {
                    let p = out_dir.join("sweep.json");
                    export::write_json_file(&p, &records)?;
                    p
                }
            };
            let flagged = records.iter().filter(|r| r.is_flagged()).count();
            println!(
                "wrote {} records to {} (seed {}, {} flagged grid points)",
                records.len(),
                path.display(),
                cfg.seed,
                flagged
            );
            Ok(true)
        }
        Cmd::Verify { config, n_draws, seed, deterministic, report } => {
            let cfg = resolve_config(&config, None, None)?;
            let (scene, pulse) = scenario::small_verify_scene(&cfg, seed)?;
            if deterministic {
                let det = scenario::verify_deterministic(&scene, &pulse, None)?;
                println!(
                    "deterministic quadrature: max relative deviation {:.3e} (tolerance {:.0e}): {}",
                    det.max_rel,
                    det.rel_tolerance,
                    if det.passed { "PASS" } else { "FAIL" }
                );
                if let Some(path) = report {
                    write_json(&path, &det)?;
                }
                Ok(det.passed)
            } else {
                let rep = scenario::verify_monte_carlo(&scene, &pulse, n_draws, seed, None)?;
                print!("{}", scenario::format_verify_report(&rep));
                if let Some(path) = report {
                    write_json(&path, &rep)?;
                }
                Ok(rep.passed)
            }
        }
        Cmd::Bound {
            config,
            figure,
            px,
            py,
            phi0_deg,
            eps_t,
            psi_t_deg,
            eps_r,
            psi_r_deg,
            theta_deg,
        } => {
            let mut cfg = resolve_config(&config, figure, None)?;
            cfg.phi_0_deg = phi0_deg;
            let loc = LocParams::new(px, py, phi0_deg.to_radians())?;
            let iqi = IqiParams::new(
                eps_t,
                psi_t_deg.to_radians(),
                eps_r,
                psi_r_deg.to_radians(),
            )?;
            let pb = point_bounds(&cfg, &loc, &iqi, theta_deg.to_radians())?;
            println!("location        ({px}, {py}) m, phi_0 = {phi0_deg} deg");
            println!("|gamma|         {:.6e}", pb.gamma_abs);
            println!("PEB (imbalanced) {:.6e} m", pb.iq.peb);
            println!("OEB (imbalanced) {:.6e} rad", pb.iq.oeb);
            println!("PEB (matched)    {:.6e} m", pb.matched.peb);
            println!("OEB (matched)    {:.6e} rad", pb.matched.oeb);
            println!(
                "degradation      PEB {:+.3}%, OEB {:+.3}%",
                (pb.iq.peb - pb.matched.peb) / pb.matched.peb * 100.0,
                (pb.iq.oeb - pb.matched.oeb) / pb.matched.oeb * 100.0
            );
            Ok(true)
        }
    }
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> iqloc::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text).map_err(|e| iqloc::Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
