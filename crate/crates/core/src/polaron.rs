//! Emitter parameters, the polaron self-consistency loop and the
//! single-excitation Hamiltonians it feeds.
//!
//! Basis convention for every [`SingleExcHamiltonian`]: index 0 is the
//! excited qubit with the bath in vacuum, index `1 + x` is the ground-state
//! qubit with one photon on bath site (or chain mode) `x`.
//!
//! Energies in the one-excitation sector:
//!
//! | entry            | RWA              | polaron                              |
//! |------------------|------------------|--------------------------------------|
//! | qubit diagonal   | `Δ/2`            | `Δ̃/2`                                |
//! | photon block     | `H_b − Δ/2`      | `H_b − Δ̃/2 − 4Δ̃ f fᵀ`               |
//! | qubit ↔ photon x | `g δ_{x,x0}`     | `2Δ̃ f_x`                             |
//!
//! The `−4Δ̃ f fᵀ` term is `(Δ̃/2) σᶻ · 8 F†F` with `σᶻ = −1` in the
//! photon sector.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::BathGraph;
use crate::sparse::{conjugate_gradient, dot, CsrMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum PolaronError {
    #[error("invalid emitter: {0}")]
    InvalidEmitter(String),
    #[error("fixed point not reached after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error(
        "shifted bath matrix is not safely positive definite: lower spectral bound {lower_bound:e} at Δ̃ = {delta_tilde:e}"
    )]
    NearSingularBathShift { lower_bound: f64, delta_tilde: f64 },
    #[error("linear solve for the coupling vector stalled (relative residual {0:e})")]
    LinearSolve(f64),
    #[error("polaron solution is not converged or belongs to a different bath")]
    UnusableSolution,
}

/// Two-level emitter coupled locally to one bath site.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmitterSpec {
    /// Qubit splitting Δ.
    pub delta: f64,
    /// Bare coupling g.
    pub g: f64,
    /// Index of the coupling site x₀ in the bath's site list.
    pub site: usize,
}

impl EmitterSpec {
    pub fn new(delta: f64, g: f64, site: usize, bath: &BathGraph) -> Result<Self, PolaronError> {
        let e = Self { delta, g, site };
        e.validate(bath)?;
        Ok(e)
    }

    pub fn validate(&self, bath: &BathGraph) -> Result<(), PolaronError> {
        if !(self.delta > 0.0) {
            return Err(PolaronError::InvalidEmitter(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.g >= 0.0) {
            return Err(PolaronError::InvalidEmitter(format!("g must be non-negative, got {}", self.g)));
        }
        if self.site >= bath.n_sites() {
            return Err(PolaronError::InvalidEmitter(format!(
                "site {} outside a bath of {} sites",
                self.site,
                bath.n_sites()
            )));
        }
        Ok(())
    }

    /// Bare coupling vector `g e_{x0}` over bath sites.
    pub fn coupling_vector(&self, n_sites: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_sites];
        v[self.site] = self.g;
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence when `|φ(Δ̃) − Δ̃| <= tol · Δ`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor used once the residual changes sign.
    pub damping: f64,
    /// Apply damping from the first iteration.
    pub damp_from_start: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 500, damping: 0.5, damp_from_start: false }
    }
}

/// Converged polaron parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolaronSolution {
    pub delta_tilde: f64,
    /// Collective coupling vector, solving `(H_b + Δ̃) f = g e_{x0}`.
    #[serde(skip)]
    pub f: Vec<f64>,
    /// Final `|φ(Δ̃) − Δ̃|`.
    pub residual: f64,
    pub iterations: usize,
    /// Fixed-point residual after each iteration.
    pub residual_history: Vec<f64>,
    /// Iteration at which damping engaged, if it did.
    pub damping_engaged_at: Option<usize>,
}

impl PolaronSolution {
    pub fn f_norm_sq(&self) -> f64 {
        dot(&self.f, &self.f)
    }

    /// JSON summary: delta_tilde, residual, iterations.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "delta_tilde": self.delta_tilde,
            "residual": self.residual,
            "iterations": self.iterations,
            "f_norm_sq": self.f_norm_sq(),
        })
    }

    /// `site,c1[,c2[,c3]],f`
    pub fn write_f_csv<W: std::io::Write>(&self, bath: &BathGraph, mut w: W) -> std::io::Result<()> {
        let d = bath.dimension();
        let names = ["c1", "c2", "c3"];
        writeln!(w, "site,{},f", names[..d].join(","))?;
        for (i, (c, fx)) in bath.sites().iter().zip(&self.f).enumerate() {
            let cs: Vec<String> = c[..d].iter().map(|v| v.to_string()).collect();
            writeln!(w, "{i},{},{fx:e}", cs.join(","))?;
        }
        Ok(())
    }
}

/// Smallest value of `λ_min(H_b) + Δ̃` accepted before declaring the shifted
/// bath near singular, relative to the bath's spectral scale.
const SINGULAR_MARGIN: f64 = 1e-9;

/// Lower bound on `λ_min(H_b)`: the band bottom of the infinite lattice,
/// which bounds every open-boundary principal submatrix.
pub fn bath_lower_bound(bath: &BathGraph) -> f64 {
    bath.band_edges().0
}

/// `f(Δ̃) = (H_b + Δ̃)⁻¹ g e_{x0}` by conjugate gradients.
fn coupling_for(
    bath: &BathGraph,
    matrix: &CsrMatrix,
    emitter: &EmitterSpec,
    delta_tilde: f64,
) -> Result<Vec<f64>, PolaronError> {
    let lo = bath_lower_bound(bath) + delta_tilde;
    let scale = bath.omega_a().abs() + bath.bandwidth() + delta_tilde.abs();
    if lo <= SINGULAR_MARGIN * scale {
        return Err(PolaronError::NearSingularBathShift { lower_bound: lo, delta_tilde });
    }
    let rhs = emitter.coupling_vector(bath.n_sites());
    let (f, rep) = conjugate_gradient(matrix, delta_tilde, &rhs, 1e-14, 20 * bath.n_sites() + 200);
    if rep.relative_residual > 1e-11 {
        return Err(PolaronError::LinearSolve(rep.relative_residual));
    }
    Ok(f)
}

/// Iterates `Δ̃ ← Δ exp(−2‖f(Δ̃)‖²)` from `Δ̃ = Δ`.
pub fn solve_selfconsistent(
    bath: &BathGraph,
    emitter: &EmitterSpec,
    opts: &SolverOptions,
) -> Result<PolaronSolution, PolaronError> {
    emitter.validate(bath)?;
    let matrix = bath.single_particle_matrix();
    let delta = emitter.delta;
    let mut dt = delta;
    let mut history = Vec::new();
    let mut damping_at = if opts.damp_from_start { Some(0) } else { None };
    let mut prev_signed: Option<f64> = None;
    for it in 1..=opts.max_iter {
        let f = coupling_for(bath, &matrix, emitter, dt)?;
        let mapped = delta * (-2.0 * dot(&f, &f)).exp();
        let signed = mapped - dt;
        let residual = signed.abs();
        history.push(residual);
        if residual <= opts.tol * delta {
            return Ok(PolaronSolution {
                delta_tilde: dt,
                f,
                residual,
                iterations: it,
                residual_history: history,
                damping_engaged_at: damping_at,
            });
        }
        if damping_at.is_none() {
            if let Some(p) = prev_signed {
                if p.signum() != signed.signum() {
                    damping_at = Some(it);
                }
            }
        }
        prev_signed = Some(signed);
        dt = match damping_at {
            Some(_) => dt + opts.damping * signed,
            None => mapped,
        };
    }
    Err(PolaronError::NonConvergence {
        iterations: opts.max_iter,
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}

/// Which single-excitation model a Hamiltonian represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Rwa,
    Polaron,
}

/// Hermitian single-excitation Hamiltonian of dimension `n_modes + 1`,
/// stored as a sparse mode block plus a rank-one correction and a coupling
/// column.
#[derive(Clone, Debug)]
pub struct SingleExcHamiltonian {
    frame: Frame,
    qubit_energy: f64,
    modes: CsrMatrix,
    photon_shift: f64,
    rank_one: Option<(f64, Vec<f64>)>,
    coupling: Vec<f64>,
}

impl SingleExcHamiltonian {
    /// Assembles from parts. `modes` must be symmetric.
    pub fn from_parts(
        frame: Frame,
        qubit_energy: f64,
        modes: CsrMatrix,
        photon_shift: f64,
        rank_one: Option<(f64, Vec<f64>)>,
        coupling: Vec<f64>,
    ) -> Self {
        assert_eq!(coupling.len(), modes.dim());
        if let Some((_, u)) = &rank_one {
            assert_eq!(u.len(), modes.dim());
        }
        assert!(modes.is_symmetric(), "mode block is not symmetric");
        Self { frame, qubit_energy, modes, photon_shift, rank_one, coupling }
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn dim(&self) -> usize {
        self.modes.dim() + 1
    }

    pub fn n_modes(&self) -> usize {
        self.modes.dim()
    }

    pub fn qubit_energy(&self) -> f64 {
        self.qubit_energy
    }

    /// Constant added to the photon block; bare photon energies are
    /// `E − photon_shift`.
    pub fn photon_shift(&self) -> f64 {
        self.photon_shift
    }

    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    pub fn rank_one(&self) -> Option<(f64, &[f64])> {
        self.rank_one.as_ref().map(|(c, u)| (*c, u.as_slice()))
    }

    pub fn mode_block(&self) -> &CsrMatrix {
        &self.modes
    }

    /// Largest absolute row sum; bounds the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        let mut b = self.qubit_energy.abs() + self.coupling.iter().map(|c| c.abs()).sum::<f64>();
        let rank = self.rank_one.as_ref().map(|(c, u)| c.abs() * dot(u, u)).unwrap_or(0.0);
        let cmax = self.coupling.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        b = b.max(self.modes.max_abs_row_sum() + self.photon_shift.abs() + rank + cmax);
        b
    }

    /// y = H x
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        let n = self.modes.dim();
        assert_eq!(x.len(), n + 1);
        assert_eq!(y.len(), n + 1);
        let (x0, xp) = x.split_first().unwrap();
        let (y0, yp) = y.split_first_mut().unwrap();
        self.modes.mul_vec_c(xp, yp);
        let mut acc = *x0 * self.qubit_energy;
        for ((yi, xi), ci) in yp.iter_mut().zip(xp).zip(&self.coupling) {
            *yi += xi * self.photon_shift + x0 * ci;
            acc += xi * ci;
        }
        *y0 = acc;
        if let Some((coef, u)) = &self.rank_one {
            let proj: C64 = u.iter().zip(xp).map(|(ui, xi)| xi * ui).sum();
            let s = proj * *coef;
            for (yi, ui) in yp.iter_mut().zip(u) {
                *yi += s * ui;
            }
        }
    }

    /// Real counterpart of [`apply`](Self::apply).
    pub fn apply_real(&self, x: &[f64], y: &mut [f64]) {
        let n = self.modes.dim();
        assert_eq!(x.len(), n + 1);
        assert_eq!(y.len(), n + 1);
        let (x0, xp) = x.split_first().unwrap();
        let (y0, yp) = y.split_first_mut().unwrap();
        self.modes.mul_vec(xp, yp);
        let mut acc = x0 * self.qubit_energy;
        for ((yi, xi), ci) in yp.iter_mut().zip(xp).zip(&self.coupling) {
            *yi += xi * self.photon_shift + x0 * ci;
            acc += xi * ci;
        }
        *y0 = acc;
        if let Some((coef, u)) = &self.rank_one {
            let s = coef * dot(u, xp);
            for (yi, ui) in yp.iter_mut().zip(u) {
                *yi += s * ui;
            }
        }
    }

    /// ⟨x|H|x⟩ (real for Hermitian H).
    pub fn expectation(&self, x: &[C64]) -> f64 {
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        self.apply(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.modes.dim();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m[(0, 0)] = self.qubit_energy;
        for i in 0..n {
            for (j, v) in self.modes.row(i) {
                m[(i + 1, j + 1)] += v;
            }
            m[(i + 1, i + 1)] += self.photon_shift;
            m[(0, i + 1)] = self.coupling[i];
            m[(i + 1, 0)] = self.coupling[i];
        }
        if let Some((coef, u)) = &self.rank_one {
            for i in 0..n {
                for j in 0..n {
                    m[(i + 1, j + 1)] += coef * (u[i] * u[j]);
                }
            }
        }
        m
    }

    /// Exact symmetry of the stored blocks; with real entries this is
    /// Hermiticity.
    pub fn is_hermitian(&self) -> bool {
        self.modes.is_symmetric()
            && self.qubit_energy.is_finite()
            && self.coupling.iter().all(|c| c.is_finite())
    }
}

/// Polaron Hamiltonian projected onto the single-excitation sector.
pub fn assemble_polaron_hamiltonian(
    bath: &BathGraph,
    emitter: &EmitterSpec,
    sol: &PolaronSolution,
) -> Result<SingleExcHamiltonian, PolaronError> {
    emitter.validate(bath)?;
    if sol.f.len() != bath.n_sites() || !sol.delta_tilde.is_finite() || !(sol.residual <= 1e-6 * emitter.delta) {
        return Err(PolaronError::UnusableSolution);
    }
    let dt = sol.delta_tilde;
    let coupling: Vec<f64> = sol.f.iter().map(|f| 2.0 * dt * f).collect();
    let rank_one = if sol.f.iter().any(|&f| f != 0.0) { Some((-4.0 * dt, sol.f.clone())) } else { None };
    Ok(SingleExcHamiltonian::from_parts(
        Frame::Polaron,
        0.5 * dt,
        bath.single_particle_matrix(),
        -0.5 * dt,
        rank_one,
        coupling,
    ))
}

/// Rotating-wave Hamiltonian: bare coupling `g` at the emitter site only.
pub fn assemble_rwa_hamiltonian(bath: &BathGraph, emitter: &EmitterSpec) -> Result<SingleExcHamiltonian, PolaronError> {
    emitter.validate(bath)?;
    Ok(SingleExcHamiltonian::from_parts(
        Frame::Rwa,
        0.5 * emitter.delta,
        bath.single_particle_matrix(),
        -0.5 * emitter.delta,
        None,
        emitter.coupling_vector(bath.n_sites()),
    ))
}
