//! Observables on single-excitation states and trajectories: excitation
//! number in the trap region, plateau and decay-rate extraction, localized
//! in-band eigenstates, density maps and emission directionality.
//!
//! Regions and maps use corner-frame coordinates (see
//! [`BathGraph::corner_coords`]), in which the trap region of an emitter is
//! the box of sites with every coordinate at most the emitter's.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{SingleExcState, Trajectory};
use crate::lattice::{BathGraph, Coord};
use crate::polaron::SingleExcHamiltonian;
use crate::sparse::{dot, minres_op, norm2};

/// Decay rates below this are not resolved by the fit.
pub const GAMMA_FLOOR: f64 = 1e-5;
/// Minimum R² for a trusted exponential fit.
pub const MIN_R_SQUARED: f64 = 0.9;
/// Largest standard deviation of N_excit over the final quarter for a plateau.
pub const PLATEAU_STD: f64 = 0.01;
/// Below this the bound state counts as absent.
pub const BIC_ABSENT: f64 = 0.01;
/// Minimum photon weight inside the trap region for a bound-state candidate.
pub const MIN_REGION_WEIGHT: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("fit window holds {0} samples, at least 20 are needed")]
    WindowTooShort(usize),
    #[error("non-positive value {value} at t = {t} in the fit window")]
    NonPositiveData { t: f64, value: f64 },
    #[error("operation needs a {needed} bath, got dimension {got}")]
    Dimension { needed: &'static str, got: usize },
}

/// Bath sites between the emitter and the corner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapRegion {
    pub emitter: usize,
    pub sites: Vec<usize>,
}

impl TrapRegion {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }
}

pub fn trap_region(bath: &BathGraph, emitter_site: usize) -> TrapRegion {
    let d = bath.dimension();
    let e = bath.corner_coords(emitter_site);
    let sites = (0..bath.n_sites())
        .filter(|&i| {
            let c = bath.corner_coords(i);
            (0..d).all(|k| c[k] <= e[k])
        })
        .collect();
    TrapRegion { emitter: emitter_site, sites }
}

/// `(N_excit, P_↑, P_γ)` with `P_γ` summed over the region.
pub fn excitation_number(s: &SingleExcState, region: &TrapRegion) -> (f64, f64, f64) {
    let p_up = s.c.norm_sqr();
    let p_gamma: f64 = region.sites.iter().map(|&i| s.psi[i].norm_sqr()).sum();
    (p_up + p_gamma, p_up, p_gamma)
}

/// `N(t) ≈ N(t₀) exp(−γ (t − t₀))` on `t ≥ t₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma: f64,
    pub n_t0: f64,
    pub t0: f64,
    pub r_squared: f64,
    /// γ below [`GAMMA_FLOOR`] or R² below [`MIN_R_SQUARED`].
    pub floor_flag: bool,
    pub samples: usize,
}

/// Least-squares line through `log N` against `t` over `t ≥ t0`.
pub fn fit_decay_rate(t: &[f64], n: &[f64], t0: f64) -> Result<DecayFit, AnalysisError> {
    assert_eq!(t.len(), n.len());
    let win: Vec<(f64, f64)> = t.iter().zip(n).filter(|(ti, _)| **ti >= t0).map(|(a, b)| (*a, *b)).collect();
    if win.len() < 20 {
        return Err(AnalysisError::WindowTooShort(win.len()));
    }
    if let Some(&(ti, v)) = win.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(AnalysisError::NonPositiveData { t: ti, value: v });
    }
    let m = win.len() as f64;
    let xs: Vec<f64> = win.iter().map(|(ti, _)| ti - t0).collect();
    let ys: Vec<f64> = win.iter().map(|(_, v)| v.ln()).collect();
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_tot: f64 = ys.iter().map(|y| (y - ym).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let gamma = -slope;
    Ok(DecayFit {
        gamma,
        n_t0: intercept.exp(),
        t0,
        r_squared,
        floor_flag: gamma < GAMMA_FLOOR || r_squared < MIN_R_SQUARED,
        samples: win.len(),
    })
}

/// Long-time average of N_excit and whether it qualifies as a plateau.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicProbability {
    pub value: f64,
    pub std: f64,
    pub plateau: bool,
}

/// Mean and spread of a series over its final quarter.
pub fn final_quarter_stats(series: &[f64]) -> BicProbability {
    let k = (series.len() / 4).max(1);
    let tail = &series[series.len() - k..];
    let mean = tail.iter().sum::<f64>() / k as f64;
    let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k as f64;
    let std = var.sqrt();
    BicProbability { value: mean, std, plateau: std <= PLATEAU_STD }
}

pub fn bic_probability(traj: &Trajectory) -> BicProbability {
    let n: Vec<f64> = traj.samples.iter().map(|s| s.n_excit()).collect();
    final_quarter_stats(&n)
}

/// Σ |v|⁴ of a normalized vector.
pub fn ipr(v: &[f64]) -> f64 {
    let n2 = dot(v, v);
    v.iter().map(|x| x.powi(4)).sum::<f64>() / (n2 * n2)
}

/// Photon weight of a `[qubit, photons…]` vector inside the region, as a
/// fraction of its total photon weight.
pub fn region_weight(v: &[f64], region: &TrapRegion) -> f64 {
    let total: f64 = v[1..].iter().map(|x| x * x).sum();
    if total == 0.0 {
        return 0.0;
    }
    region.sites.iter().map(|&i| v[i + 1] * v[i + 1]).sum::<f64>() / total
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Eigenpair {
    pub energy: f64,
    /// `[qubit, photons…]`, unit norm.
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BicCandidate {
    pub energy: f64,
    #[serde(skip)]
    pub vector: Vec<f64>,
    pub ipr: f64,
    pub in_band: bool,
    pub region_weight: f64,
    /// `|⟨qubit|v⟩|²`
    pub qubit_weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Dense diagonalization up to this dimension; shift-invert above.
    pub dense_limit: usize,
    /// Eigenpairs sought by shift-invert.
    pub n_eigs: usize,
    /// Shift-invert target; defaults to the qubit energy.
    pub target: Option<f64>,
    /// IPR cut; defaults to 4× the median IPR of in-band states.
    pub ipr_threshold: Option<f64>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { dense_limit: 4000, n_eigs: 24, target: None, ipr_threshold: None }
    }
}

/// All eigenpairs, ascending.
pub fn dense_eigenpairs(h: &SingleExcHamiltonian) -> Vec<Eigenpair> {
    let eig = SymmetricEigen::new(h.to_dense());
    let mut out: Vec<Eigenpair> = (0..eig.eigenvalues.len())
        .map(|k| Eigenpair { energy: eig.eigenvalues[k], vector: eig.eigenvectors.column(k).iter().copied().collect() })
        .collect();
    out.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    out
}

/// Eigenpairs nearest `sigma` by Lanczos on `(H − σ)⁻¹`, ascending in
/// energy. Only pairs with residual `‖Hv − λv‖ ≤ 1e−8 ‖H‖` are returned.
pub fn shift_invert_eigenpairs(h: &SingleExcHamiltonian, sigma: f64, k: usize) -> Vec<Eigenpair> {
    let n = h.dim();
    let m = n.min((3 * k).max(k + 40));
    let scale = h.norm_bound();
    let solve = |b: &[f64]| minres_op(|x, y| h.apply_real(x, y), sigma, b, 1e-13, 50 * n + 1000).0;
    // Deterministic start with weight on the qubit and every mode.
    let mut v0: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (1.7 * i as f64).sin()).collect();
    v0[0] += n as f64;
    let s = norm2(&v0);
    v0.iter_mut().for_each(|x| *x /= s);
    let mut basis = vec![v0];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..m {
        let mut w = solve(&basis[j]);
        let a = dot(&basis[j], &w);
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let p = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= p * qi);
            }
        }
        let b = norm2(&w);
        if j + 1 == m || b < 1e-12 * a.abs().max(1e-300) {
            break;
        }
        // Diagonal plus off-diagonal recovered from the orthogonalized basis.
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    let mm = alpha.len();
    let mut t = DMatrix::<f64>::zeros(mm, mm);
    for i in 0..mm {
        t[(i, i)] = alpha[i];
        if i + 1 < mm {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..mm).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
    let mut out = Vec::new();
    let mut hv = vec![0.0; n];
    for &idx in order.iter().take(k) {
        let theta = eig.eigenvalues[idx];
        if theta == 0.0 {
            continue;
        }
        let mut v = vec![0.0; n];
        for (i, q) in basis.iter().enumerate().take(mm) {
            let y = eig.eigenvectors[(i, idx)];
            v.iter_mut().zip(q).for_each(|(vi, qi)| *vi += y * qi);
        }
        let nv = norm2(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        h.apply_real(&v, &mut hv);
        let e = dot(&v, &hv);
        let res = hv.iter().zip(&v).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt();
        if res <= 1e-8 * scale {
            out.push(Eigenpair { energy: e, vector: v });
        }
    }
    out.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    out
}

/// Eigenpairs by the method the size calls for.
pub fn eigenpairs(h: &SingleExcHamiltonian, opts: &EigenOptions) -> Vec<Eigenpair> {
    if h.dim() <= opts.dense_limit {
        dense_eigenpairs(h)
    } else {
        // Nudge the target off any exact eigenvalue.
        let sigma = opts.target.unwrap_or(h.qubit_energy()) + 1e-3 * 0.618_033_988_749_895;
        shift_invert_eigenpairs(h, sigma, opts.n_eigs)
    }
}

/// Whether `energy` lies in the bath band as seen through the Hamiltonian's
/// photon energy offset.
pub fn in_band(h: &SingleExcHamiltonian, bath: &BathGraph, energy: f64) -> bool {
    let (lo, hi) = bath.band_edges();
    let e = energy - h.photon_shift();
    e >= lo && e <= hi
}

/// In-band eigenstates localized inside the trap region, sorted by region
/// weight (largest first).
pub fn find_bic_eigenstates(
    h: &SingleExcHamiltonian,
    bath: &BathGraph,
    region: &TrapRegion,
    opts: &EigenOptions,
) -> Vec<BicCandidate> {
    let pairs = eigenpairs(h, opts);
    let all: Vec<BicCandidate> = pairs
        .into_iter()
        .map(|p| BicCandidate {
            energy: p.energy,
            ipr: ipr(&p.vector),
            in_band: in_band(h, bath, p.energy),
            region_weight: region_weight(&p.vector, region),
            qubit_weight: p.vector[0] * p.vector[0],
            vector: p.vector,
        })
        .collect();
    let threshold = opts.ipr_threshold.unwrap_or_else(|| {
        let mut iprs: Vec<f64> = all.iter().filter(|c| c.in_band).map(|c| c.ipr).collect();
        iprs.sort_by(f64::total_cmp);
        if iprs.is_empty() {
            0.0
        } else {
            4.0 * iprs[iprs.len() / 2]
        }
    });
    let mut out: Vec<BicCandidate> = all
        .into_iter()
        .filter(|c| c.in_band && c.region_weight >= MIN_REGION_WEIGHT && c.ipr > threshold)
        .collect();
    out.sort_by(|a, b| b.region_weight.total_cmp(&a.region_weight));
    out
}

/// `Σ |⟨v|s⟩|²` over the candidates.
pub fn spectral_projection(candidates: &[BicCandidate], s: &SingleExcState) -> f64 {
    let x = s.to_flat();
    candidates
        .iter()
        .map(|c| c.vector.iter().zip(&x).map(|(v, a)| a * v).sum::<C64>().norm_sqr())
        .sum()
}

/// Photon density keyed by corner-frame coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityMap {
    pub dimension: usize,
    pub coords: Vec<Coord>,
    pub density: Vec<f64>,
}

impl DensityMap {
    pub fn total(&self) -> f64 {
        self.density.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::max)
    }

    /// Density summed over all sites sharing coordinate `axis`.
    pub fn marginal(&self, axis: usize) -> BTreeMap<i64, f64> {
        let mut m = BTreeMap::new();
        for (c, d) in self.coords.iter().zip(&self.density) {
            *m.entry(c[axis]).or_insert(0.0) += d;
        }
        m
    }

    /// Density summed along `axis`, keyed by the two remaining coordinates.
    pub fn projection(&self, axis: usize) -> BTreeMap<(i64, i64), f64> {
        let keep: Vec<usize> = (0..3).filter(|&k| k != axis).collect();
        let mut m = BTreeMap::new();
        for (c, d) in self.coords.iter().zip(&self.density) {
            *m.entry((c[keep[0]], c[keep[1]])).or_insert(0.0) += d;
        }
        m
    }

    /// `c1[,c2[,c3]],density`
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let names = ["c1", "c2", "c3"];
        writeln!(w, "{},density", names[..self.dimension].join(","))?;
        for (c, d) in self.coords.iter().zip(&self.density) {
            let cs: Vec<String> = c[..self.dimension].iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{d:e}", cs.join(","))?;
        }
        Ok(())
    }
}

pub fn photon_density_map(s: &SingleExcState, bath: &BathGraph) -> DensityMap {
    DensityMap {
        dimension: bath.dimension(),
        coords: (0..bath.n_sites()).map(|i| bath.corner_coords(i)).collect(),
        density: s.psi.iter().map(|a| a.norm_sqr()).collect(),
    }
}

/// Fraction of photon density within `half_width` sites of the collimation
/// lines through the emitter. Those lines run along the corner-frame axes,
/// where neighbouring parallel rows are two coordinate units apart.
pub fn directionality_fraction(
    s: &SingleExcState,
    bath: &BathGraph,
    emitter_site: usize,
    half_width: usize,
) -> Result<f64, AnalysisError> {
    let d = bath.dimension();
    if d < 2 {
        return Err(AnalysisError::Dimension { needed: "2D or 3D", got: d });
    }
    let e = bath.corner_coords(emitter_site);
    let w = 2 * half_width as i64;
    let mut inside = 0.0;
    let mut total = 0.0;
    for (i, a) in s.psi.iter().enumerate() {
        let p = a.norm_sqr();
        total += p;
        let c = bath.corner_coords(i);
        let on_line = (0..d).any(|axis| (0..d).filter(|&k| k != axis).all(|k| (c[k] - e[k]).abs() <= w));
        if on_line {
            inside += p;
        }
    }
    Ok(if total > 0.0 { inside / total } else { 0.0 })
}
