//! Build → polaron solve → assemble → propagate → analyse, and the files a
//! run leaves behind.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    self, bic_probability, directionality_fraction, final_quarter_stats, find_bic_eigenstates, fit_decay_rate,
    photon_density_map, spectral_projection, trap_region, BicCandidate, BicProbability, DecayFit, DensityMap,
    EigenOptions, TrapRegion,
};
use crate::chainmap::{self, chain_single_exc_hamiltonian, map_bath, reflection_time_bound, ChainError, ChainFrame};
use crate::config::{ConfigError, ExperimentConfig};
use crate::dynamics::{self, initial_excited_state, propagate, uniform_grid, DynamicsError, PropagationOptions, Trajectory};
use crate::lattice::{build_periodic, dispersion_deviation, BathGraph, Coord, LatticeError};
use crate::polaron::{
    assemble_polaron_hamiltonian, assemble_rwa_hamiltonian, solve_selfconsistent, EmitterSpec, Frame, PolaronError,
    PolaronSolution, SingleExcHamiltonian, SolverOptions,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("lattice: {0}")]
    Lattice(#[from] LatticeError),
    #[error("polaron: {0}")]
    Polaron(#[from] PolaronError),
    #[error("propagation: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("chain mapping: {0}")]
    Chain(#[from] ChainError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("sweep axis '{0}' is not one of g, delta, emitter, chain_modes")]
    BadAxis(String),
}

impl ExperimentError {
    /// 1 for configuration problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Lattice(_) | ExperimentError::BadAxis(_) => 1,
            ExperimentError::Polaron(PolaronError::InvalidEmitter(_)) => 1,
            ExperimentError::Chain(ChainError::TooManyModes { .. }) => 1,
            _ => 2,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> ExperimentError {
    let context = context.into();
    move |source| ExperimentError::Io { context, source }
}

/// Bath, emitter and Hamiltonian for a config.
pub struct Setup {
    pub bath: BathGraph,
    pub emitter: EmitterSpec,
    pub polaron: Option<PolaronSolution>,
    pub hamiltonian: SingleExcHamiltonian,
    pub region: TrapRegion,
}

pub fn setup(config: &ExperimentConfig) -> Result<Setup, ExperimentError> {
    config.validate()?;
    let (omega_a, delta, g) = config.energies_in_j();
    let bath = config.geometry_kind().build(omega_a, 1.0)?;
    let site = bath.diagonal_site(config.emitter)?;
    let emitter = EmitterSpec::new(delta, g, site, &bath)?;
    let (polaron, hamiltonian) = match config.frame {
        Frame::Rwa => (None, assemble_rwa_hamiltonian(&bath, &emitter)?),
        Frame::Polaron => {
            let sol = solve_selfconsistent(&bath, &emitter, &SolverOptions::default())?;
            let h = assemble_polaron_hamiltonian(&bath, &emitter, &sol)?;
            (Some(sol), h)
        }
    };
    let region = trap_region(&bath, site);
    Ok(Setup { bath, emitter, polaron, hamiltonian, region })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolaronSummary {
    pub delta_tilde: f64,
    pub residual: f64,
    pub iterations: usize,
    pub f_norm_sq: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainComparison {
    pub modes: usize,
    pub reflection_time: f64,
    /// Largest |c_chain(t) − c_lattice(t)| on grid points up to the horizon.
    pub max_amplitude_error: f64,
    pub compared_until: f64,
    pub f_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub n_sites: usize,
    pub emitter_site: usize,
    pub emitter_coords: Coord,
    pub trap_region_size: usize,
    pub polaron: Option<PolaronSummary>,
    pub p_bic: BicProbability,
    /// Final-quarter means.
    pub p_up: f64,
    pub p_gamma: f64,
    pub decay_fit: Option<DecayFit>,
    pub decay_fit_error: Option<String>,
    pub spectral_projection: Option<f64>,
    pub bic_candidates: Option<usize>,
    /// Qubit weight of the candidate with the largest qubit weight.
    pub bound_state_qubit_weight: Option<f64>,
    pub directionality: Option<f64>,
    pub norm_drift_rate: f64,
    pub energy_drift: f64,
    pub accumulated_step_error: f64,
    pub max_krylov_used: usize,
    pub chain: Option<ChainComparison>,
}

pub struct RunOutput {
    pub setup: Setup,
    pub trajectory: Trajectory,
    pub candidates: Option<Vec<BicCandidate>>,
    pub density: DensityMap,
    pub summary: RunSummary,
}

pub fn execute(config: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    let setup = setup(config)?;
    let Setup { bath, emitter, hamiltonian: h, region, .. } = &setup;
    let times = uniform_grid(config.dt, config.t_max);
    let opts = PropagationOptions { tol: config.tol, snapshot_every: config.snapshot_every, ..Default::default() };
    let s0 = initial_excited_state(bath);
    let traj = propagate(h, &s0, &times, &region.sites, &opts)?;

    let p_bic = bic_probability(&traj);
    let ups: Vec<f64> = traj.samples.iter().map(|s| s.p_up()).collect();
    let gammas: Vec<f64> = traj.samples.iter().map(|s| s.p_gamma).collect();
    let n: Vec<f64> = traj.samples.iter().map(|s| s.n_excit()).collect();
    let (decay_fit, decay_fit_error) = match fit_decay_rate(&traj.times(), &n, config.fit_start()) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let candidates = config.spectrum.then(|| find_bic_eigenstates(h, bath, region, &EigenOptions::default()));
    let density = photon_density_map(traj.final_state(), bath);
    let directionality = (bath.dimension() > 1)
        .then(|| directionality_fraction(traj.final_state(), bath, emitter.site, config.directionality_half_width))
        .transpose()
        .expect("dimension checked");

    let chain = if config.chain_modes > 0 {
        Some(compare_chain(&setup, config, &traj, &opts)?)
    } else {
        None
    };

    let summary = RunSummary {
        name: config.name.clone(),
        n_sites: bath.n_sites(),
        emitter_site: emitter.site,
        emitter_coords: bath.corner_coords(emitter.site),
        trap_region_size: region.len(),
        polaron: setup.polaron.as_ref().map(|s| PolaronSummary {
            delta_tilde: s.delta_tilde,
            residual: s.residual,
            iterations: s.iterations,
            f_norm_sq: s.f_norm_sq(),
        }),
        p_bic,
        p_up: final_quarter_stats(&ups).value,
        p_gamma: final_quarter_stats(&gammas).value,
        decay_fit,
        decay_fit_error,
        spectral_projection: candidates.as_ref().map(|c| spectral_projection(c, &s0)),
        bic_candidates: candidates.as_ref().map(|c| c.len()),
        bound_state_qubit_weight: candidates
            .as_ref()
            .and_then(|c| c.iter().map(|b| b.qubit_weight).max_by(f64::total_cmp)),
        directionality,
        norm_drift_rate: traj.norm_drift_rate(),
        energy_drift: traj.energy_drift(),
        accumulated_step_error: traj.accumulated_error,
        max_krylov_used: traj.max_krylov_used,
        chain,
    };
    Ok(RunOutput { setup, trajectory: traj, candidates, density, summary })
}

fn compare_chain(
    setup: &Setup,
    config: &ExperimentConfig,
    traj: &Trajectory,
    opts: &PropagationOptions,
) -> Result<ChainComparison, ExperimentError> {
    let m = config.chain_modes.min(setup.bath.n_sites());
    let chain = map_bath(&setup.bath, setup.emitter.site, m)?;
    let frame = match &setup.polaron {
        Some(sol) => ChainFrame::Polaron(sol),
        None => ChainFrame::Rwa,
    };
    let ch = chain_single_exc_hamiltonian(&chain, &setup.emitter, frame)?;
    let tstar = reflection_time_bound(&chain);
    let times: Vec<f64> = traj.times().into_iter().take_while(|&t| t <= tstar).collect();
    let s0 = dynamics::SingleExcState::excited(chain.len());
    let (err, until) = if times.len() >= 2 {
        let ct = propagate(&ch.hamiltonian, &s0, &times, &[], opts)?;
        let err = ct.samples.iter().zip(&traj.samples).map(|(a, b)| (a.c - b.c).norm()).fold(0.0, f64::max);
        (err, *times.last().unwrap())
    } else {
        (0.0, 0.0)
    };
    Ok(ChainComparison {
        modes: chain.len(),
        reflection_time: tstar,
        max_amplitude_error: err,
        compared_until: until,
        f_residual: ch.f_residual,
    })
}

/// Files written by [`run`], relative to the output directory.
pub const OBSERVABLES_CSV: &str = "observables.csv";
pub const DENSITY_CSV: &str = "density_final.csv";
pub const PROJECTION_CSV: &str = "density_projection.csv";
pub const BIC_JSON: &str = "bic.json";
pub const DECAY_JSON: &str = "decay_fit.json";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(value).expect("json");
    fs::write(path, text + "\n").map_err(io_err(format!("writing {}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, ExperimentError> {
    fs::File::create(path).map(BufWriter::new).map_err(io_err(format!("creating {}", path.display())))
}

/// Conventions recorded in every manifest.
pub fn conventions() -> serde_json::Value {
    serde_json::json!({
        "basis": "index 0 is the excited qubit with an empty bath; index 1 + x is one photon on site x",
        "time_units": "1/J",
        "energy_units_internal": "J",
        "corner_frame": "1D: x; 2D: (i - j, i + j); 3D: doubled cartesian (X, Y, Z) of the BCC cube",
        "emitter": "chain site x in 1D, corner-frame diagonal position n in 2D/3D",
        "trap_region": "sites whose corner-frame coordinates are all <= the emitter's",
        "observables": "n_excit = p_up + p_gamma, p_gamma summed over the trap region",
        "photon_frame": "observables are evaluated in the frame of the propagated Hamiltonian (RWA or polaron)",
        "thresholds": {
            "plateau_std": analysis::PLATEAU_STD,
            "bic_absent": analysis::BIC_ABSENT,
            "gamma_floor": analysis::GAMMA_FLOOR,
            "min_r_squared": analysis::MIN_R_SQUARED,
            "min_region_weight": analysis::MIN_REGION_WEIGHT,
            "ipr_threshold": "4x median IPR of in-band eigenstates",
        },
    })
}

/// Runs a config and writes its bundle into `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunSummary, ExperimentError> {
    let output = execute(config)?;
    write_outputs(config, &output, out)?;
    Ok(output.summary)
}

pub fn write_outputs(config: &ExperimentConfig, output: &RunOutput, out: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(out).map_err(io_err(format!("creating {}", out.display())))?;
    let bath = &output.setup.bath;
    let mut files: Vec<String> = Vec::new();

    output
        .trajectory
        .write_csv(create(&out.join(OBSERVABLES_CSV))?)
        .map_err(io_err(OBSERVABLES_CSV))?;
    files.push(OBSERVABLES_CSV.into());
    output.density.write_csv(create(&out.join(DENSITY_CSV))?).map_err(io_err(DENSITY_CSV))?;
    files.push(DENSITY_CSV.into());
    if bath.dimension() == 3 {
        use std::io::Write;
        let mut w = create(&out.join(PROJECTION_CSV))?;
        let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
            writeln!(w, "c1,c2,density")?;
            for ((a, b), d) in output.density.projection(2) {
                writeln!(w, "{a},{b},{d:e}")?;
            }
            Ok(())
        };
        write(&mut w).map_err(io_err(PROJECTION_CSV))?;
        files.push(PROJECTION_CSV.into());
    }
    if config.write_snapshots {
        let dir = out.join(SNAPSHOT_DIR);
        fs::create_dir_all(&dir).map_err(io_err("creating snapshot directory"))?;
        for (k, s) in output.trajectory.snapshots.iter().enumerate() {
            let name = format!("{SNAPSHOT_DIR}/density_{k:05}.csv");
            photon_density_map(s, bath).write_csv(create(&out.join(&name))?).map_err(io_err(name.clone()))?;
            files.push(name);
        }
    }
    if let Some(c) = &output.candidates {
        write_json(
            &out.join(BIC_JSON),
            &serde_json::json!({
                "candidates": c,
                "spectral_projection": output.summary.spectral_projection,
            }),
        )?;
        files.push(BIC_JSON.into());
    }
    write_json(
        &out.join(DECAY_JSON),
        &serde_json::json!({ "fit": output.summary.decay_fit, "error": output.summary.decay_fit_error }),
    )?;
    files.push(DECAY_JSON.into());

    let snapshot_times: Vec<f64> = output.trajectory.snapshots.iter().map(|s| s.t).collect();
    let manifest = serde_json::json!({
        "software": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "config": config,
        "config_toml": config.to_toml_string(),
        "config_j_units": config.in_j_units(),
        "conventions": conventions(),
        "derived": {
            "n_sites": bath.n_sites(),
            "bandwidth": bath.bandwidth(),
            "band_edges": bath.band_edges(),
            "emitter_site": output.setup.emitter.site,
            "emitter_coords": bath.corner_coords(output.setup.emitter.site),
            "trap_region_size": output.setup.region.len(),
            "grid_points": output.trajectory.samples.len(),
            "snapshot_times": snapshot_times,
        },
        "summary": output.summary,
        "outputs": files,
    });
    write_json(&out.join(MANIFEST_JSON), &manifest)
}

/// Reads the config recorded in a manifest.
pub fn config_from_manifest(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    let toml_text = v["config_toml"].as_str().ok_or_else(|| ConfigError::Parse("manifest lacks config_toml".into()))?;
    Ok(ExperimentConfig::from_toml_str(toml_text)?)
}

pub const SWEEP_AXES: &[&str] = &["g", "delta", "emitter", "chain_modes"];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub p_bic: f64,
    pub p_bic_std: f64,
    pub plateau: bool,
    pub p_up: f64,
    pub p_gamma: f64,
    pub bound_qubit_weight: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_r_squared: Option<f64>,
    pub floor_flag: Option<bool>,
    pub delta_tilde: Option<f64>,
    pub chain_error: Option<f64>,
}

fn axis_value(axis: &str, v: f64) -> Result<toml::Value, ExperimentError> {
    match axis {
        "g" | "delta" => Ok(toml::Value::Float(v)),
        "emitter" | "chain_modes" => {
            if v.fract() != 0.0 || (axis == "chain_modes" && v < 0.0) {
                return Err(ConfigError::Invalid(format!("{axis} needs integer values, got {v}")).into());
            }
            Ok(toml::Value::Integer(v as i64))
        }
        other => Err(ExperimentError::BadAxis(other.into())),
    }
}

/// One run per value, `workers` at a time. Each run writes into
/// `out/<axis>_<index>` when `out` is given.
pub fn sweep(
    config: &ExperimentConfig,
    axis: &str,
    values: &[f64],
    workers: usize,
    out: Option<&Path>,
) -> Result<Vec<SweepRow>, ExperimentError> {
    use rayon::prelude::*;
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| Ok(config.with_value(axis, axis_value(axis, v)?)?))
        .collect::<Result<_, ExperimentError>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let rows: Vec<Result<SweepRow, ExperimentError>> = pool.install(|| {
        configs
            .par_iter()
            .zip(values.par_iter())
            .enumerate()
            .map(|(k, (c, &v))| {
                let o = execute(c)?;
                if let Some(dir) = out {
                    write_outputs(c, &o, &dir.join(format!("{axis}_{k:03}")))?;
                }
                let s = &o.summary;
                Ok(SweepRow {
                    value: v,
                    p_bic: s.p_bic.value,
                    p_bic_std: s.p_bic.std,
                    plateau: s.p_bic.plateau,
                    p_up: s.p_up,
                    p_gamma: s.p_gamma,
                    bound_qubit_weight: s.bound_state_qubit_weight,
                    gamma: s.decay_fit.map(|f| f.gamma),
                    gamma_r_squared: s.decay_fit.map(|f| f.r_squared),
                    floor_flag: s.decay_fit.map(|f| f.floor_flag),
                    delta_tilde: s.polaron.as_ref().map(|p| p.delta_tilde),
                    chain_error: s.chain.as_ref().map(|c| c.max_amplitude_error),
                })
            })
            .collect()
    });
    let rows: Vec<SweepRow> = rows.into_iter().collect::<Result<_, _>>()?;
    if let Some(dir) = out {
        write_sweep_csv(&rows, axis, &dir.join("sweep.csv"))?;
    }
    Ok(rows)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_e(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_sweep_csv(rows: &[SweepRow], axis: &str, path: &Path) -> Result<(), ExperimentError> {
    use std::io::Write;
    let mut w = create(path)?;
    let mut body = || -> std::io::Result<()> {
        writeln!(
            w,
            "{axis},p_bic,p_bic_std,plateau,p_up,p_gamma,bound_qubit_weight,gamma,gamma_r_squared,floor_flag,delta_tilde,chain_error"
        )?;
        for r in rows {
            writeln!(
                w,
                "{},{:e},{:e},{},{:e},{:e},{},{},{},{},{},{}",
                r.value,
                r.p_bic,
                r.p_bic_std,
                r.plateau,
                r.p_up,
                r.p_gamma,
                opt_e(r.bound_qubit_weight),
                opt_e(r.gamma),
                opt_e(r.gamma_r_squared),
                opt(r.floor_flag),
                opt_e(r.delta_tilde),
                opt_e(r.chain_error)
            )?;
        }
        w.flush()
    };
    body().map_err(io_err(format!("writing {}", path.display())))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.into(), passed, detail });
    }
}

/// Invariant checks for a config: dispersion of the matching periodic
/// lattice, Hermiticity, norm drift over a short run, polaron residual.
pub fn validate(config: &ExperimentConfig) -> ValidationReport {
    let mut r = ValidationReport { checks: Vec::new() };
    if let Err(e) = config.validate() {
        r.push("config", false, e.to_string());
        return r;
    }
    let (omega_a, delta, g) = config.energies_in_j();
    let kind = config.geometry_kind();
    let d = kind.dimension();
    let extent = if d == 3 { 6 } else { 10 };
    match build_periodic(d, extent, omega_a, 1.0) {
        Ok(p) => {
            let dev = dispersion_deviation(&p);
            r.push("dispersion", dev <= 1e-12, format!("max deviation {dev:e} on a periodic {d}D lattice of extent {extent}"));
        }
        Err(e) => r.push("dispersion", false, e.to_string()),
    }
    let bath = match kind.build(omega_a, 1.0) {
        Ok(b) => b,
        Err(e) => {
            r.push("geometry", false, e.to_string());
            return r;
        }
    };
    let site = match bath.diagonal_site(config.emitter) {
        Ok(s) => s,
        Err(e) => {
            r.push("emitter", false, e.to_string());
            return r;
        }
    };
    let emitter = match EmitterSpec::new(delta, g, site, &bath) {
        Ok(e) => e,
        Err(e) => {
            r.push("emitter", false, e.to_string());
            return r;
        }
    };
    let h = match config.frame {
        Frame::Rwa => assemble_rwa_hamiltonian(&bath, &emitter).map_err(|e| e.to_string()),
        Frame::Polaron => match solve_selfconsistent(&bath, &emitter, &SolverOptions::default()) {
            Ok(sol) => {
                let ok = sol.residual <= 1e-10 * delta && sol.delta_tilde <= delta;
                r.push(
                    "polaron",
                    ok,
                    format!(
                        "delta_tilde = {:e}, residual = {:e}, iterations = {}",
                        sol.delta_tilde, sol.residual, sol.iterations
                    ),
                );
                assemble_polaron_hamiltonian(&bath, &emitter, &sol).map_err(|e| e.to_string())
            }
            Err(e) => {
                r.push("polaron", false, e.to_string());
                Err(e.to_string())
            }
        },
    };
    let h = match h {
        Ok(h) => h,
        Err(e) => {
            r.push("hamiltonian", false, e);
            return r;
        }
    };
    r.push("hermiticity", h.is_hermitian(), format!("dimension {}", h.dim()));
    let t_short = config.t_max.min(10.0);
    let opts = PropagationOptions { tol: config.tol, snapshot_every: 0, ..Default::default() };
    let all: Vec<usize> = (0..bath.n_sites()).collect();
    match propagate(&h, &initial_excited_state(&bath), &uniform_grid(config.dt, t_short), &all, &opts) {
        Ok(t) => {
            let drift = t.norm_drift_rate();
            let excit = t.samples.iter().map(|s| (s.n_excit() - 1.0).abs()).fold(0.0, f64::max);
            r.push("norm_drift", drift <= 1e-8, format!("{drift:e} per unit time over t <= {t_short}"));
            r.push("total_excitation", excit <= 1e-8, format!("max |N_total - 1| = {excit:e}"));
        }
        Err(e) => r.push("norm_drift", false, e.to_string()),
    }
    r
}

/// Chain coefficients for a config's bath and emitter site; `None` maps the
/// whole lattice.
pub fn chain_map(config: &ExperimentConfig, modes: Option<usize>) -> Result<chainmap::ChainRepresentation, ExperimentError> {
    config.validate()?;
    let (omega_a, _, _) = config.energies_in_j();
    let bath = config.geometry_kind().build(omega_a, 1.0)?;
    let site = bath.diagonal_site(config.emitter)?;
    Ok(map_bath(&bath, site, modes.unwrap_or(bath.n_sites()))?)
}

/// Writes `eigenvalues.csv` and `bic.json` for a config.
pub fn spectrum(config: &ExperimentConfig, out: &Path) -> Result<Vec<BicCandidate>, ExperimentError> {
    use std::io::Write;
    let s = setup(config)?;
    let pairs = analysis::eigenpairs(&s.hamiltonian, &EigenOptions::default());
    fs::create_dir_all(out).map_err(io_err(format!("creating {}", out.display())))?;
    let path: PathBuf = out.join("eigenvalues.csv");
    let mut w = create(&path)?;
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "index,energy,qubit_weight,ipr,in_band,region_weight")?;
        for (k, p) in pairs.iter().enumerate() {
            writeln!(
                w,
                "{k},{:e},{:e},{:e},{},{:e}",
                p.energy,
                p.vector[0] * p.vector[0],
                analysis::ipr(&p.vector),
                analysis::in_band(&s.hamiltonian, &s.bath, p.energy),
                analysis::region_weight(&p.vector, &s.region)
            )?;
        }
        w.flush()
    };
    body().map_err(io_err(format!("writing {}", path.display())))?;
    let cands = find_bic_eigenstates(&s.hamiltonian, &s.bath, &s.region, &EigenOptions::default());
    let proj = spectral_projection(&cands, &initial_excited_state(&s.bath));
    write_json(&out.join(BIC_JSON), &serde_json::json!({ "candidates": cands, "spectral_projection": proj }))?;
    Ok(cands)
}
