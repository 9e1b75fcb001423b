//! Lanczos mapping of the bath onto a semi-infinite chain seeded at the
//! emitter, and the chain form of the single-excitation Hamiltonian.
//!
//! The chain Hamiltonian is unitarily equivalent to the lattice one on the
//! Krylov space of the seed, so the qubit amplitude computed on an `M`-mode
//! chain agrees with the lattice result until a wavefront reflected at the
//! truncated end returns to mode 0.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::BathGraph;
use crate::polaron::{EmitterSpec, Frame, PolaronError, PolaronSolution, SingleExcHamiltonian};
use crate::sparse::{conjugate_gradient, dot, norm2, CsrMatrix};

/// Lanczos vectors are kept only up to this many modes.
pub const MAX_STORED_MODES: usize = 2000;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("seed vector is zero")]
    ZeroSeed,
    #[error("requested {requested} modes but the bath has {sites} sites")]
    TooManyModes { requested: usize, sites: usize },
    #[error("chain seed is not the emitter's coupling site {0}")]
    SeedMismatch(usize),
    #[error(transparent)]
    Polaron(#[from] PolaronError),
    #[error("chain file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainRepresentation {
    /// On-site energies α₀..α_{M−1}.
    pub alphas: Vec<f64>,
    /// Couplings β₁..β_{M−1}; `betas[n]` joins modes `n` and `n + 1`.
    pub betas: Vec<f64>,
    /// Norm of the residual after the last mode (β_M); zero when the Krylov
    /// space is exhausted.
    pub tail_beta: f64,
    /// Modes requested.
    pub requested: usize,
    /// Krylov space exhausted before `requested` modes.
    pub breakdown: bool,
    /// Normalized seed, when built from a bath.
    #[serde(skip)]
    pub seed: Option<Vec<f64>>,
    /// Lanczos vectors, row `n` is mode `n` over bath sites.
    #[serde(skip)]
    pub modes: Option<Vec<Vec<f64>>>,
}

impl ChainRepresentation {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn matrix(&self) -> CsrMatrix {
        CsrMatrix::tridiagonal(&self.alphas, &self.betas)
    }

    /// Largest deviation of `VᵀV` from the identity.
    pub fn orthogonality_error(&self) -> Option<f64> {
        let v = self.modes.as_ref()?;
        let mut worst = 0.0f64;
        for i in 0..v.len() {
            for j in 0..=i {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(&v[i], &v[j]) - target).abs());
            }
        }
        Some(worst)
    }

    /// Lattice amplitudes of a chain-mode vector, `V φ`.
    pub fn to_lattice(&self, phi: &[num_complex::Complex64]) -> Option<Vec<num_complex::Complex64>> {
        let v = self.modes.as_ref()?;
        let n = v.first()?.len();
        let mut out = vec![num_complex::Complex64::new(0.0, 0.0); n];
        for (mode, a) in v.iter().zip(phi) {
            for (o, m) in out.iter_mut().zip(mode) {
                *o += a * m;
            }
        }
        Some(out)
    }

    /// `n,alpha,beta` where `beta` couples mode `n − 1` to `n` (empty for `n = 0`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,alpha,beta")?;
        for (n, a) in self.alphas.iter().enumerate() {
            if n == 0 {
                writeln!(w, "0,{a:e},")?;
            } else {
                writeln!(w, "{n},{a:e},{:e}", self.betas[n - 1])?;
            }
        }
        Ok(())
    }

    /// Reads the format written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, ChainError> {
        let mut alphas = Vec::new();
        let mut betas = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if i == 0 || line.is_empty() {
                continue;
            }
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| ChainError::Parse { line: i + 1, msg: e.to_string() })
            };
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(ChainError::Parse { line: i + 1, msg: "expected 3 columns".into() });
            }
            let n: usize = cols[0].trim().parse().map_err(|_| ChainError::Parse { line: i + 1, msg: "bad index".into() })?;
            if n != alphas.len() {
                return Err(ChainError::Parse { line: i + 1, msg: format!("expected mode {}", alphas.len()) });
            }
            alphas.push(parse(cols[1])?);
            if n > 0 {
                betas.push(parse(cols[2])?);
            }
        }
        let m = alphas.len();
        Ok(Self { alphas, betas, tail_beta: f64::NAN, requested: m, breakdown: false, seed: None, modes: None })
    }
}

/// Three-term Lanczos recursion with full re-orthogonalization. Stops early
/// when β falls below `1e−12 ‖H‖`.
pub fn lanczos_tridiagonalize(matrix: &CsrMatrix, seed: &[f64], m: usize) -> Result<ChainRepresentation, ChainError> {
    let n = matrix.dim();
    assert_eq!(seed.len(), n, "seed length");
    if m > n {
        return Err(ChainError::TooManyModes { requested: m, sites: n });
    }
    let s = norm2(seed);
    if s == 0.0 || m == 0 {
        return Err(ChainError::ZeroSeed);
    }
    let seed: Vec<f64> = seed.iter().map(|x| x / s).collect();
    let cutoff = 1e-12 * matrix.max_abs_row_sum().max(f64::MIN_POSITIVE);
    let mut v: Vec<Vec<f64>> = vec![seed.clone()];
    let mut alphas = Vec::with_capacity(m);
    let mut betas = Vec::with_capacity(m);
    let mut w = vec![0.0; n];
    let mut tail = 0.0;
    let mut breakdown = false;
    for j in 0..m {
        matrix.mul_vec(&v[j], &mut w);
        let a = dot(&v[j], &w);
        alphas.push(a);
        for (wi, vi) in w.iter_mut().zip(&v[j]) {
            *wi -= a * vi;
        }
        if j > 0 {
            let b: f64 = betas[j - 1];
            for (wi, vi) in w.iter_mut().zip(&v[j - 1]) {
                *wi -= b * vi;
            }
        }
        // Two passes of classical Gram-Schmidt against every stored vector.
        for _ in 0..2 {
            for q in &v {
                let p = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= p * qi;
                }
            }
        }
        let b = norm2(&w);
        tail = b;
        if b < cutoff {
            breakdown = j + 1 < m;
            tail = 0.0;
            break;
        }
        if j + 1 == m {
            break;
        }
        betas.push(b);
        v.push(w.iter().map(|x| x / b).collect());
    }
    let requested = m;
    let modes = if v.len() <= MAX_STORED_MODES { Some(v) } else { None };
    Ok(ChainRepresentation { alphas, betas, tail_beta: tail, requested, breakdown, seed: Some(seed), modes })
}

/// Chain of `m` modes seeded at the emitter site.
pub fn map_bath(bath: &BathGraph, site: usize, m: usize) -> Result<ChainRepresentation, ChainError> {
    let mut seed = vec![0.0; bath.n_sites()];
    seed[site] = 1.0;
    lanczos_tridiagonalize(&bath.single_particle_matrix(), &seed, m)
}

/// Which emitter model to place at the head of the chain.
pub enum ChainFrame<'a> {
    Rwa,
    Polaron(&'a PolaronSolution),
}

/// Chain Hamiltonian plus, in the polaron frame, the relative mismatch
/// between `‖f‖²` on the chain and on the lattice.
pub struct ChainHamiltonian {
    pub hamiltonian: SingleExcHamiltonian,
    pub f_residual: f64,
}

/// `(M + 1)`-dimensional Hamiltonian on the chain. In the RWA the qubit
/// couples to mode 0 with strength `g`; in the polaron frame `f` is
/// re-solved on the chain, `(T + Δ̃) f_c = g e₀`, which reproduces `Vᵀ f` on
/// the full Krylov space.
pub fn chain_single_exc_hamiltonian(
    chain: &ChainRepresentation,
    emitter: &EmitterSpec,
    frame: ChainFrame<'_>,
) -> Result<ChainHamiltonian, ChainError> {
    if let Some(seed) = &chain.seed {
        let ok = seed.get(emitter.site).is_some_and(|&s| (s.abs() - 1.0).abs() < 1e-12);
        if !ok {
            return Err(ChainError::SeedMismatch(emitter.site));
        }
    }
    let t = chain.matrix();
    let m = chain.len();
    match frame {
        ChainFrame::Rwa => {
            let mut coupling = vec![0.0; m];
            coupling[0] = emitter.g;
            Ok(ChainHamiltonian {
                hamiltonian: SingleExcHamiltonian::from_parts(
                    Frame::Rwa,
                    0.5 * emitter.delta,
                    t,
                    -0.5 * emitter.delta,
                    None,
                    coupling,
                ),
                f_residual: 0.0,
            })
        }
        ChainFrame::Polaron(sol) => {
            let dt = sol.delta_tilde;
            let mut rhs = vec![0.0; m];
            rhs[0] = emitter.g;
            let (fc, rep) = conjugate_gradient(&t, dt, &rhs, 1e-14, 20 * m + 200);
            if rep.relative_residual > 1e-11 {
                return Err(PolaronError::LinearSolve(rep.relative_residual).into());
            }
            let lattice = sol.f_norm_sq();
            let chain_norm = dot(&fc, &fc);
            let f_residual = if lattice > 0.0 { (chain_norm - lattice).abs() / lattice } else { chain_norm };
            let coupling: Vec<f64> = fc.iter().map(|f| 2.0 * dt * f).collect();
            let rank_one = if emitter.g > 0.0 { Some((-4.0 * dt, fc)) } else { None };
            Ok(ChainHamiltonian {
                hamiltonian: SingleExcHamiltonian::from_parts(Frame::Polaron, 0.5 * dt, t, -0.5 * dt, rank_one, coupling),
                f_residual,
            })
        }
    }
}

/// Horizon `M / (2 max β)` before which truncation cannot reach the qubit;
/// infinite when the chain is exact.
pub fn reflection_time_bound(chain: &ChainRepresentation) -> f64 {
    if chain.tail_beta == 0.0 {
        return f64::INFINITY;
    }
    let bmax = chain.betas.iter().copied().chain(std::iter::once(chain.tail_beta)).fold(0.0f64, f64::max);
    chain.len() as f64 / (2.0 * bmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{propagate, uniform_grid, PropagationOptions, SingleExcState};
    use crate::lattice::{build_chain_1d, build_rhombus_2d, sorted_eigenvalues};
    use crate::polaron::{assemble_polaron_hamiltonian, assemble_rwa_hamiltonian, solve_selfconsistent, SolverOptions};

    #[test]
    fn first_step_by_hand() {
        let bath = build_chain_1d(40, 2.5, 0.7).unwrap();
        let interior = map_bath(&bath, 10, 2).unwrap();
        assert!((interior.alphas[0] - 2.5).abs() < 1e-15);
        assert!((interior.betas[0] - 2f64.sqrt() * 0.7).abs() < 1e-15);
        let end = map_bath(&bath, 0, 2).unwrap();
        assert!((end.alphas[0] - 2.5).abs() < 1e-15);
        assert!((end.betas[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn full_chain_is_unitarily_equivalent() {
        // Every eigenvector of an open chain has weight on its end site.
        let bath = build_chain_1d(25, 0.3, 1.0).unwrap();
        let m = bath.n_sites();
        let chain = map_bath(&bath, 0, m).unwrap();
        assert!(!chain.breakdown);
        assert_eq!(chain.len(), m);
        assert!(chain.betas.iter().all(|&b| b > 0.0));
        assert!(chain.orthogonality_error().unwrap() < 1e-10);
        let a = sorted_eigenvalues(chain.matrix().to_dense());
        let b = sorted_eigenvalues(bath.dense_matrix());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn breakdown_on_symmetric_seed() {
        // A centred seed on an odd chain only sees the symmetric subspace.
        let bath = build_chain_1d(9, 0.0, 1.0).unwrap();
        let chain = map_bath(&bath, 4, 9).unwrap();
        assert!(chain.breakdown);
        assert_eq!(chain.len(), 5);
        assert_eq!(reflection_time_bound(&chain), f64::INFINITY);
    }

    #[test]
    fn moments_match() {
        let bath = build_rhombus_2d(4, 2.5, 1.0).unwrap();
        let chain = map_bath(&bath, 5, 4).unwrap();
        let h = bath.dense_matrix();
        let t = chain.matrix().to_dense();
        let mut hp = nalgebra::DMatrix::<f64>::identity(h.nrows(), h.nrows());
        let mut tp = nalgebra::DMatrix::<f64>::identity(4, 4);
        for p in 0..8 {
            let scale = 10f64.powi(p as i32);
            assert!((hp[(5, 5)] - tp[(0, 0)]).abs() <= 1e-10 * scale, "p={p}");
            hp = &hp * &h;
            tp = &tp * &t;
        }
    }

    #[test]
    fn reflection_bound_scales_with_m() {
        let bath = build_chain_1d(400, 2.5, 1.0).unwrap();
        let a = map_bath(&bath, 0, 50).unwrap();
        let b = map_bath(&bath, 0, 100).unwrap();
        // Seeded at the end of a uniform chain every β equals J.
        assert!((reflection_time_bound(&a) - 25.0).abs() < 1e-9);
        assert!((reflection_time_bound(&b) - 2.0 * reflection_time_bound(&a)).abs() < 1e-9);
    }

    #[test]
    fn single_mode_chain_is_rabi() {
        let bath = build_chain_1d(30, 2.5, 1.0).unwrap();
        let em = EmitterSpec::new(2.5, 0.3, 7, &bath).unwrap();
        let chain = map_bath(&bath, 7, 1).unwrap();
        let h = chain_single_exc_hamiltonian(&chain, &em, ChainFrame::Rwa).unwrap().hamiltonian;
        let d = h.to_dense();
        assert_eq!(d.nrows(), 2);
        assert_eq!(d[(0, 1)], 0.3);
        assert!((d[(1, 1)] - (chain.alphas[0] - 1.25)).abs() < 1e-15);
    }

    #[test]
    fn seed_mismatch_is_rejected() {
        let bath = build_chain_1d(30, 2.5, 1.0).unwrap();
        let em = EmitterSpec::new(2.5, 0.3, 8, &bath).unwrap();
        let chain = map_bath(&bath, 7, 5).unwrap();
        assert!(matches!(
            chain_single_exc_hamiltonian(&chain, &em, ChainFrame::Rwa),
            Err(ChainError::SeedMismatch(8))
        ));
    }

    #[test]
    fn truncated_chain_tracks_lattice_until_reflection() {
        let bath = build_chain_1d(400, 2.5, 1.0).unwrap();
        let em = EmitterSpec::new(2.5, 0.25, 11, &bath).unwrap();
        let chain = map_bath(&bath, 11, 100).unwrap();
        let tstar = reflection_time_bound(&chain);
        assert!(tstar > 30.0);
        let opts = PropagationOptions::default();
        let times = uniform_grid(0.1, tstar);
        let hl = assemble_rwa_hamiltonian(&bath, &em).unwrap();
        let hc = chain_single_exc_hamiltonian(&chain, &em, ChainFrame::Rwa).unwrap().hamiltonian;
        let a = propagate(&hl, &SingleExcState::excited(400), &times, &[], &opts).unwrap();
        let b = propagate(&hc, &SingleExcState::excited(100), &times, &[], &opts).unwrap();
        let worst = a.samples.iter().zip(&b.samples).map(|(x, y)| (x.c - y.c).norm()).fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{worst:e}");
    }

    #[test]
    fn polaron_chain_matches_lattice() {
        let bath = build_chain_1d(120, 2.5, 1.0).unwrap();
        let em = EmitterSpec::new(2.5, 0.5, 20, &bath).unwrap();
        let sol = solve_selfconsistent(&bath, &em, &SolverOptions::default()).unwrap();
        let chain = map_bath(&bath, 20, 120).unwrap();
        let ch = chain_single_exc_hamiltonian(&chain, &em, ChainFrame::Polaron(&sol)).unwrap();
        assert!(ch.f_residual < 1e-10);
        let hl = assemble_polaron_hamiltonian(&bath, &em, &sol).unwrap();
        let mut a = sorted_eigenvalues(ch.hamiltonian.to_dense());
        let mut b = sorted_eigenvalues(hl.to_dense());
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_round_trip() {
        let bath = build_chain_1d(20, 2.5, 1.0).unwrap();
        let chain = map_bath(&bath, 3, 6).unwrap();
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        let back = ChainRepresentation::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.alphas, chain.alphas);
        assert_eq!(back.betas, chain.betas);
        assert!(ChainRepresentation::read_csv("n,alpha,beta\n1,2,3\n".as_bytes()).is_err());
    }
}
