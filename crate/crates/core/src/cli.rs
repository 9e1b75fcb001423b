//! Command-line front end. Exit codes: 0 success, 1 invalid input or failed
//! validation, 2 numerical failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_override, preset_names, preset_text, ConfigError, ExperimentConfig};
use crate::experiment::{self, ExperimentError, SWEEP_AXES};

#[derive(Parser, Debug)]
#[command(name = "corner-qed", version, about = "Emitter dynamics in open photonic lattices and corner-state detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Source {
    /// Config file (flat TOML).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Shipped preset: fig1, fig2, fig3, fig3-strong.
    #[arg(long)]
    pub preset: Option<String>,
    /// Override a config entry, e.g. --set emitter=11 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Propagate one configuration and write observables, densities and a manifest.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat a run over values of one parameter.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// One of g, delta, emitter, chain_modes.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, in the config's units.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check dispersion, Hermiticity, norm conservation and the polaron solve.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// Export the Lanczos chain coefficients.
    ChainMap {
        #[command(flatten)]
        source: Source,
        /// Number of chain modes (defaults to chain_modes, or the site count).
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export eigenvalues and the bound-state report.
    Spectrum {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a preset's config, or list presets.
    Preset { name: Option<String> },
}

fn load(source: &Source) -> Result<ExperimentConfig, ExperimentError> {
    let overrides = source.overrides.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    let text = match (&source.config, &source.preset) {
        (Some(path), _) => std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?,
        (None, Some(name)) => preset_text(name)?.to_string(),
        (None, None) => return Err(ConfigError::Invalid("pass --config PATH or --preset NAME".into()).into()),
    };
    Ok(ExperimentConfig::from_toml_with_overrides(&text, &overrides)?)
}

fn report(e: &ExperimentError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

pub fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Command::Run { source, out } => {
            let r = load(&source).and_then(|c| experiment::run(&c, &out));
            match r {
                Ok(s) => {
                    println!(
                        "{}: P_BIC = {:.6} (std {:.2e}, plateau {}), outputs in {}",
                        s.name,
                        s.p_bic.value,
                        s.p_bic.std,
                        s.p_bic.plateau,
                        out.display()
                    );
                    0
                }
                Err(e) => report(&e),
            }
        }
        Command::Sweep { source, axis, values, workers, out } => {
            if !SWEEP_AXES.contains(&axis.as_str()) {
                return report(&ExperimentError::BadAxis(axis));
            }
            match load(&source).and_then(|c| experiment::sweep(&c, &axis, &values, workers, Some(&out))) {
                Ok(rows) => {
                    for r in rows {
                        println!(
                            "{axis} = {}: P_BIC = {:.6} plateau {} P_up = {:.6} P_gamma = {:.6}",
                            r.value, r.p_bic, r.plateau, r.p_up, r.p_gamma
                        );
                    }
                    0
                }
                Err(e) => report(&e),
            }
        }
        Command::Validate { source } => match load(&source) {
            Ok(c) => {
                let rep = experiment::validate(&c);
                for k in &rep.checks {
                    println!("{} {}: {}", if k.passed { "PASS" } else { "FAIL" }, k.name, k.detail);
                }
                if rep.passed() {
                    0
                } else {
                    1
                }
            }
            Err(e) => report(&e),
        },
        Command::ChainMap { source, modes, out } => {
            let r = load(&source).and_then(|c| {
                let m = modes.or((c.chain_modes > 0).then_some(c.chain_modes));
                let chain = experiment::chain_map(&c, m)?;
                std::fs::create_dir_all(&out)
                    .map_err(|e| ExperimentError::Io { context: format!("creating {}", out.display()), source: e })?;
                let path = out.join("chain.csv");
                let f = std::fs::File::create(&path)
                    .map_err(|e| ExperimentError::Io { context: format!("creating {}", path.display()), source: e })?;
                chain
                    .write_csv(std::io::BufWriter::new(f))
                    .map_err(|e| ExperimentError::Io { context: format!("writing {}", path.display()), source: e })?;
                Ok((chain, path))
            });
            match r {
                Ok((chain, path)) => {
                    println!(
                        "{} modes (breakdown {}), reflection bound {:.3}/J, written to {}",
                        chain.len(),
                        chain.breakdown,
                        crate::chainmap::reflection_time_bound(&chain),
                        path.display()
                    );
                    0
                }
                Err(e) => report(&e),
            }
        }
        Command::Spectrum { source, out } => match load(&source).and_then(|c| experiment::spectrum(&c, &out)) {
            Ok(c) => {
                for b in &c {
                    println!(
                        "E = {:.9} qubit weight {:.6} region weight {:.6} IPR {:.3e}",
                        b.energy, b.qubit_weight, b.region_weight, b.ipr
                    );
                }
                println!("{} bound-state candidates, outputs in {}", c.len(), out.display());
                0
            }
            Err(e) => report(&e),
        },
        Command::Preset { name } => match name {
            None => {
                for n in preset_names() {
                    println!("{n}");
                }
                0
            }
            Some(n) => match preset_text(&n) {
                Ok(t) => {
                    print!("{t}");
                    0
                }
                Err(e) => report(&e.into()),
            },
        },
    }
}
