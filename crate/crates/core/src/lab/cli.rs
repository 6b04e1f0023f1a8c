//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::besov::{band_decomposition, support_octaves, FourierConfig};
use crate::error::{Error, Result};
use crate::grid::{parse_grid_spec, Grid};
use crate::operator::assemble_distorted;
use crate::projection::{DistortedHankelProjector, ProjectorConfig};
use crate::spectrum::kernel_spectrum;
use crate::symbol::by_name;
use crate::Exponent;

use super::config::LabConfig;
use super::{audit_reports, run_experiment, write_outcome, ExperimentId, Verdict};

#[derive(Debug, Parser)]
#[command(
    name = "dhankel",
    version,
    about = "Distorted Hankel operator toolkit and experiment runner"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for reports and plots.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Override a config key, e.g. `--set window.ppos=[8,16]`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print a logarithmic grid.
    Grid {
        /// `j_min:j_max:ppo`.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Apply `x ↦ x^a` to nodes and weights.
        #[arg(long)]
        power: Option<f64>,
    },
    /// Band norms and Besov norm of a symbol.
    Besov {
        #[arg(long)]
        symbol: String,
        #[arg(long)]
        param: Option<f64>,
        #[arg(long)]
        p: Exponent,
        #[arg(long, allow_hyphen_values = true)]
        s: f64,
        #[arg(long, allow_hyphen_values = true)]
        jmin: Option<i32>,
        #[arg(long, allow_hyphen_values = true)]
        jmax: Option<i32>,
        /// Sampling preset for discontinuous symbols.
        #[arg(long)]
        indicator: bool,
    },
    /// Singular values of a distorted Hankel matrix.
    Svd {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        symbol: String,
        #[arg(long)]
        param: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Apply the discrete averaging projection to a perturbed distorted Hankel matrix.
    Project {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        symbol: String,
        #[arg(long)]
        param: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Relative size of the seeded Gaussian perturbation.
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long)]
        radial_ppo: Option<u32>,
    },
    /// Run one experiment, or `all`.
    Experiment { id: String },
    /// Re-evaluate the verdicts of stored reports.
    Report,
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not KEY=VALUE")))?;
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Loads the configuration and applies overrides and global flags.
pub fn resolve_config(cli: &Cli) -> Result<LabConfig> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut doc: toml::Table = toml::from_str(&text).map_err(|e| {
        let loc = cli
            .config
            .as_deref()
            .map_or_else(String::new, |p| format!("{}: ", p.display()));
        Error::Config(format!("{loc}{e}"))
    })?;
    for spec in &cli.overrides {
        apply_override(&mut doc, spec)?;
    }
    let merged = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
    let mut cfg = LabConfig::from_toml(&merged).map_err(|e| match (&cli.config, e) {
        (Some(p), Error::Config(msg)) => Error::Config(format!("{}: {msg}", p.display())),
        (_, e) => e,
    })?;
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn grid_from(spec: &str) -> Result<Grid> {
    let (a, b, c) = parse_grid_spec(spec)?;
    Grid::log(a, b, c)
}

fn run_experiments(cfg: &LabConfig, id: &str, out: &mut dyn Write) -> Result<i32> {
    let ids: Vec<ExperimentId> = if id == "all" {
        ExperimentId::ALL.to_vec()
    } else {
        vec![id.parse()?]
    };
    let mut code = 0;
    for id in ids {
        let outcome = run_experiment(id, cfg)?;
        let written = write_outcome(&outcome, &cfg.out)?;
        write!(out, "{}", outcome.report.summary())?;
        writeln!(
            out,
            "{id}: {:.1} s, report {}",
            outcome.timing.total_seconds,
            written.json.display()
        )?;
        if !outcome.report.all_ok() {
            code = 1;
        }
    }
    Ok(code)
}

fn run_report(dir: &Path, out: &mut dyn Write) -> Result<i32> {
    let reports = audit_reports(dir)?;
    if reports.is_empty() {
        return Err(Error::Config(format!("no reports found in {}", dir.display())));
    }
    let mut code = 0;
    for (report, rows) in reports {
        for (name, stored, recomputed) in rows {
            let mark = if stored == recomputed {
                ""
            } else {
                " (MISMATCH with stored verdict)"
            };
            writeln!(out, "[{recomputed}] {}/{name}{mark}", report.experiment)?;
            if stored != recomputed || !matches!(recomputed, Verdict::Pass | Verdict::Vacuous) {
                code = 1;
            }
        }
    }
    Ok(code)
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Grid { grid, power } => {
            let mut g = grid_from(grid)?;
            if let Some(a) = power {
                g = g.power_transform(*a)?;
            }
            writeln!(out, "# {} nodes", g.len())?;
            writeln!(out, "point,weight")?;
            for (x, w) in g.points().iter().zip(g.weights()) {
                writeln!(out, "{x:.17e},{w:.17e}")?;
            }
        }
        Command::Besov {
            symbol,
            param,
            p,
            s,
            jmin,
            jmax,
            indicator,
        } => {
            let phi = by_name(symbol, *param)?;
            let range = match (jmin, jmax, support_octaves(&phi)) {
                (Some(a), Some(b), _) => *a..=*b,
                (a, b, Some(r)) => a.unwrap_or(*r.start())..=b.unwrap_or(*r.end()),
                _ => {
                    return Err(Error::Config(
                        "symbol without compact support needs --jmin and --jmax".into(),
                    ))
                }
            };
            let fc = if *indicator {
                FourierConfig::for_indicators()
            } else {
                FourierConfig::default()
            };
            let dec = band_decomposition(&phi, *p, *s, range, &fc)?;
            writeln!(out, "j,band_norm,weighted")?;
            for (j, b) in &dec.band_norms {
                writeln!(out, "{j},{b:.12e},{:.12e}", (f64::from(*j) * s).exp2() * b)?;
            }
            writeln!(out, "besov_norm = {:.12e}", dec.norm())?;
        }
        Command::Svd {
            alpha,
            beta,
            symbol,
            param,
            grid,
            top,
        } => {
            let g = grid_from(grid)?;
            let phi = by_name(symbol, *param)?;
            let m = assemble_distorted(&phi, *alpha, *beta, &g, &g)?;
            let sp = kernel_spectrum(&m)?;
            for (j, v) in sp.values.iter().take(*top).enumerate() {
                writeln!(out, "s_{j} = {v:.6}")?;
            }
            for p in [1.0, 2.0] {
                writeln!(out, "S_{p} = {:.6}", sp.schatten(Exponent::new(p)?))?;
            }
            writeln!(out, "noise_floor = {:.3e}", sp.noise_floor)?;
        }
        Command::Project {
            alpha,
            beta,
            symbol,
            param,
            grid,
            noise,
            radial_ppo,
        } => {
            use rand::SeedableRng;
            use rand_distr::Distribution;
            let g = grid_from(grid)?;
            let ppo = g.dyadic().map_or(16, |d| d.ppo);
            let phi = by_name(symbol, *param)?;
            let m = assemble_distorted(&phi, *alpha, *beta, &g, &g)?;
            let seed = cli.seed.unwrap_or(LabConfig::default().seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let base = m.entries();
            let scale = noise * base.norm() / (base.len() as f64).sqrt();
            let noisy = base.map(|v| {
                let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                v + scale * z
            });
            let q = DistortedHankelProjector::new(
                &g,
                &g,
                *alpha,
                *beta,
                ProjectorConfig {
                    radial_ppo: radial_ppo.unwrap_or(2 * ppo),
                    band: None,
                },
            )?;
            let qm = q.apply(&noisy)?;
            let qq = q.apply(&qm)?;
            let fixed = q.apply(base)?;
            writeln!(out, "hs_input = {:.6e}", noisy.norm())?;
            writeln!(out, "hs_output = {:.6e}", qm.norm())?;
            writeln!(out, "distance_to_clean = {:.6e}", (&qm - base).norm() / base.norm())?;
            writeln!(
                out,
                "fixed_point_deviation = {:.6e}",
                (&fixed - base).norm() / base.norm()
            )?;
            writeln!(out, "idempotence_deviation = {:.6e}", (&qq - &qm).norm() / qm.norm())?;
        }
        Command::Experiment { id } => {
            let cfg = resolve_config(cli)?;
            return run_experiments(&cfg, id, out);
        }
        Command::Report => {
            let dir = match &cli.out {
                Some(d) => d.clone(),
                None => resolve_config(cli)?.out,
            };
            return run_report(&dir, out);
        }
    }
    Ok(0)
}

/// Parses `argv` and runs; returns the process exit code.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}
