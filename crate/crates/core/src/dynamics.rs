//! Single-excitation time evolution.
//!
//! Each grid step applies `exp(−i H δt)` through a Krylov subspace built by
//! Lanczos with full re-orthogonalization. The step error is estimated a
//! posteriori as `β_{m+1} |[exp(−i T_m δt) e₁]_m|`; when the Krylov cap is hit
//! the step is split in halves.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::BathGraph;
use crate::polaron::SingleExcHamiltonian;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("Krylov step of length {dt} did not converge: estimated error {residual:e} with {krylov_dim} vectors")]
    StepNotConverged { dt: f64, residual: f64, krylov_dim: usize },
    #[error("time grid must be strictly increasing")]
    BadGrid,
    #[error("state dimension {state} does not match Hamiltonian dimension {hamiltonian}")]
    DimensionMismatch { state: usize, hamiltonian: usize },
}

/// Qubit amplitude `c`, photon amplitudes `psi` and time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleExcState {
    pub c: C64,
    pub psi: Vec<C64>,
    pub t: f64,
}

impl SingleExcState {
    /// Excited qubit, empty bath of `n_modes` modes.
    pub fn excited(n_modes: usize) -> Self {
        Self { c: C64::new(1.0, 0.0), psi: vec![ZERO; n_modes], t: 0.0 }
    }

    pub fn from_flat(v: &[C64], t: f64) -> Self {
        Self { c: v[0], psi: v[1..].to_vec(), t }
    }

    /// `[c, ψ₀, ψ₁, …]`
    pub fn to_flat(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(self.psi.len() + 1);
        v.push(self.c);
        v.extend_from_slice(&self.psi);
        v
    }

    pub fn dim(&self) -> usize {
        self.psi.len() + 1
    }

    pub fn photon_probability(&self) -> f64 {
        self.psi.iter().map(|a| a.norm_sqr()).sum()
    }
}

pub fn initial_excited_state(bath: &BathGraph) -> SingleExcState {
    SingleExcState::excited(bath.n_sites())
}

pub fn norm(s: &SingleExcState) -> f64 {
    (s.c.norm_sqr() + s.photon_probability()).sqrt()
}

fn flat_norm(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationOptions {
    /// Per-step error bound in the 2-norm.
    pub tol: f64,
    /// Largest Krylov dimension before a step is split.
    pub max_krylov: usize,
    /// Maximum number of halvings of a single grid step.
    pub max_splits: u32,
    /// Keep the full state every this many grid steps (0 keeps only the last).
    pub snapshot_every: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_krylov: 48, max_splits: 12, snapshot_every: 50 }
    }
}

/// Per-step record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub c: C64,
    pub norm: f64,
    pub energy: f64,
    /// Photon probability inside the tracked region.
    pub p_gamma: f64,
}

impl Sample {
    pub fn p_up(&self) -> f64 {
        self.c.norm_sqr()
    }

    pub fn n_excit(&self) -> f64 {
        self.p_up() + self.p_gamma
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Full states at grid indices `snapshot_every · k`, and the final state.
    pub snapshots: Vec<SingleExcState>,
    /// Photon indices summed into `p_gamma`.
    pub region: Vec<usize>,
    /// Largest Krylov dimension used.
    pub max_krylov_used: usize,
    /// Sum of the per-step error estimates.
    pub accumulated_error: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn final_state(&self) -> &SingleExcState {
        self.snapshots.last().expect("trajectory has a final snapshot")
    }

    /// `max_t |‖s(t)‖ − ‖s(0)‖| / max(t − t₀, 1)`
    pub fn norm_drift_rate(&self) -> f64 {
        let s0 = &self.samples[0];
        let span = (self.samples.last().unwrap().t - s0.t).max(1.0);
        self.samples.iter().map(|s| (s.norm - s0.norm).abs()).fold(0.0, f64::max) / span
    }

    /// `max_t |E(t) − E(0)| / max(|E(0)|, 1)`
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.samples[0].energy;
        self.samples.iter().map(|s| (s.energy - e0).abs()).fold(0.0, f64::max) / e0.abs().max(1.0)
    }

    /// `t,re_c,im_c,norm,n_excit,p_up,p_gamma`
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,re_c,im_c,norm,n_excit,p_up,p_gamma")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                s.t,
                s.c.re,
                s.c.im,
                s.norm,
                s.n_excit(),
                s.p_up(),
                s.p_gamma
            )?;
        }
        Ok(())
    }
}

/// Uniform grid `0, dt, …, n·dt` with `n = round(t_max / dt)`.
pub fn uniform_grid(dt: f64, t_max: f64) -> Vec<f64> {
    let n = (t_max / dt).round() as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}

/// Result of one Krylov application.
struct KrylovStep {
    error: f64,
    dim: usize,
}

/// Overwrites `x` with `exp(−i H dt) x` if the error estimate stays below
/// `tol` within `max_krylov` vectors; leaves `x` untouched otherwise.
fn krylov_step(
    h: &SingleExcHamiltonian,
    x: &mut [C64],
    dt: f64,
    tol: f64,
    max_krylov: usize,
) -> Result<KrylovStep, f64> {
    let n = x.len();
    let nrm = flat_norm(x);
    if nrm == 0.0 || dt == 0.0 {
        return Ok(KrylovStep { error: 0.0, dim: 0 });
    }
    let mmax = max_krylov.min(n).max(1);
    let scale = h.norm_bound().max(1e-300);
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(mmax);
    basis.push(x.iter().map(|a| a / nrm).collect());
    let mut alpha = Vec::with_capacity(mmax);
    let mut beta: Vec<f64> = Vec::with_capacity(mmax);
    let mut w = vec![ZERO; n];
    let mut last_err = f64::INFINITY;
    for j in 0..mmax {
        h.apply(&basis[j], &mut w);
        let a = cdot(&basis[j], &w).re;
        alpha.push(a);
        for (wi, vi) in w.iter_mut().zip(&basis[j]) {
            *wi -= vi * a;
        }
        if j > 0 {
            let b = beta[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= vi * b;
            }
        }
        for v in &basis {
            let p = cdot(v, &w);
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= vi * p;
            }
        }
        let b_next = flat_norm(&w);
        let m = j + 1;
        let breakdown = b_next <= 1e-14 * scale;
        let y = small_expm_e1(&alpha, &beta, dt);
        let err = if breakdown { 0.0 } else { b_next * y[m - 1].norm() * nrm };
        last_err = err;
        if err <= tol || breakdown || m == n {
            for (k, xi) in x.iter_mut().enumerate() {
                *xi = (0..m).map(|i| basis[i][k] * y[i]).sum::<C64>() * nrm;
            }
            return Ok(KrylovStep { error: err, dim: m });
        }
        if m == mmax {
            break;
        }
        beta.push(b_next);
        basis.push(w.iter().map(|a| a / b_next).collect());
    }
    Err(last_err)
}

/// `exp(−i T dt) e₁` for the symmetric tridiagonal `T(alpha, beta)`.
fn small_expm_e1(alpha: &[f64], beta: &[f64], dt: f64) -> Vec<C64> {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let q = &eig.eigenvectors;
    let phases: Vec<C64> = (0..m).map(|k| C64::from_polar(q[(0, k)], -eig.eigenvalues[k] * dt)).collect();
    (0..m).map(|i| (0..m).map(|k| phases[k] * q[(i, k)]).sum()).collect()
}

/// Applies `exp(−i H dt)` to `x`, splitting the interval when needed.
/// Negative `dt` evolves backwards. Returns the summed error estimate and
/// the largest Krylov dimension used.
pub fn evolve(
    h: &SingleExcHamiltonian,
    x: &mut [C64],
    dt: f64,
    opts: &PropagationOptions,
) -> Result<(f64, usize), DynamicsError> {
    if x.len() != h.dim() {
        return Err(DynamicsError::DimensionMismatch { state: x.len(), hamiltonian: h.dim() });
    }
    evolve_split(h, x, dt, opts, 0)
}

fn evolve_split(
    h: &SingleExcHamiltonian,
    x: &mut [C64],
    dt: f64,
    opts: &PropagationOptions,
    depth: u32,
) -> Result<(f64, usize), DynamicsError> {
    let sub_tol = opts.tol / (1u64 << depth) as f64;
    match krylov_step(h, x, dt, sub_tol, opts.max_krylov) {
        Ok(step) => Ok((step.error, step.dim)),
        Err(residual) => {
            if depth >= opts.max_splits {
                return Err(DynamicsError::StepNotConverged { dt, residual, krylov_dim: opts.max_krylov });
            }
            let (e1, m1) = evolve_split(h, x, 0.5 * dt, opts, depth + 1)?;
            let (e2, m2) = evolve_split(h, x, 0.5 * dt, opts, depth + 1)?;
            Ok((e1 + e2, m1.max(m2)))
        }
    }
}

fn sample(h: &SingleExcHamiltonian, x: &[C64], t: f64, region: &[usize], scratch: &mut [C64]) -> Sample {
    h.apply(x, scratch);
    let energy = cdot(x, scratch).re;
    Sample {
        t,
        c: x[0],
        norm: flat_norm(x),
        energy,
        p_gamma: region.iter().map(|&i| x[i + 1].norm_sqr()).sum(),
    }
}

/// Propagates `s0` across `times`; `s0.t` is taken to equal `times[0]`.
/// `region` lists photon indices whose probability is recorded as `p_gamma`.
pub fn propagate(
    h: &SingleExcHamiltonian,
    s0: &SingleExcState,
    times: &[f64],
    region: &[usize],
    opts: &PropagationOptions,
) -> Result<Trajectory, DynamicsError> {
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DynamicsError::BadGrid);
    }
    if s0.dim() != h.dim() {
        return Err(DynamicsError::DimensionMismatch { state: s0.dim(), hamiltonian: h.dim() });
    }
    let mut x = s0.to_flat();
    let mut scratch = vec![ZERO; x.len()];
    let mut samples = Vec::with_capacity(times.len());
    let mut snapshots = Vec::new();
    let mut max_dim = 0;
    let mut acc = 0.0;
    samples.push(sample(h, &x, times[0], region, &mut scratch));
    snapshots.push(SingleExcState::from_flat(&x, times[0]));
    for k in 1..times.len() {
        let (err, dim) = evolve_split(h, &mut x, times[k] - times[k - 1], opts, 0)?;
        acc += err;
        max_dim = max_dim.max(dim);
        samples.push(sample(h, &x, times[k], region, &mut scratch));
        let last = k + 1 == times.len();
        if last || (opts.snapshot_every > 0 && k % opts.snapshot_every == 0) {
            snapshots.push(SingleExcState::from_flat(&x, times[k]));
        }
    }
    Ok(Trajectory { samples, snapshots, region: region.to_vec(), max_krylov_used: max_dim, accumulated_error: acc })
}

/// Full eigendecomposition of a dense Hermitian matrix, for exact
/// propagation at small sizes.
pub struct DenseSpectral {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl DenseSpectral {
    pub fn new(h: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(h.clone());
        Self { values: eig.eigenvalues, vectors: eig.eigenvectors }
    }

    /// `exp(−i H t) x`
    pub fn evolve(&self, x: &[C64], t: f64) -> Vec<C64> {
        let n = x.len();
        let q = &self.vectors;
        let coef: Vec<C64> = (0..n)
            .map(|k| {
                let p: C64 = (0..n).map(|i| x[i] * q[(i, k)]).sum();
                p * C64::from_polar(1.0, -self.values[k] * t)
            })
            .collect();
        (0..n).map(|i| (0..n).map(|k| coef[k] * q[(i, k)]).sum()).collect()
    }
}
