//! Photonic bath graphs with open (reflective) boundaries.
//!
//! Three geometries are supported, each with a periodic twin used to check
//! the band structure:
//!
//! * `Chain1D`: sites `x = 1..=N`, hopping between `x` and `x + 1`. The
//!   missing site `x = 0` is the mirror.
//! * `Rhombus2D`: square lattice in bond coordinates `(i, j)`, cut along the
//!   two diagonal directions. In the corner frame `p = i - j`, `q = i + j`
//!   the retained sites are `0 <= p, q < 2L` with `p ≡ q (mod 2)`, i.e.
//!   `|i - (L - 1/2)| + |j| <= L - 1/2`. The count is exactly `2 L²` (the
//!   `2L x 2L` rotated grid holds `4 L²` points split into two decoupled
//!   parity classes; only the class containing the corner is kept). The
//!   reflective corner is the site `(0, 0)` and its diagonal is `j = 0`.
//! * `Corner3D`: body-centred cubic lattice stored in skewed primitive
//!   coordinates `(n1, n2, n3)` with bond vectors `e1, e2, e3, e1+e2+e3`.
//!   In doubled cartesian coordinates `X = -n1+n2+n3`, `Y = n1-n2+n3`,
//!   `Z = n1+n2-n3` the retained sites fill the cube `0 <= X, Y, Z < 2L`
//!   (all coordinates of equal parity), `2 L³` sites in total. Cube faces are
//!   perpendicular to the three collimated emission directions; the corner
//!   site is the origin and its diagonal is `n1 = n2 = n3`.
//!
//! The periodic variants are tori of extent `L` per axis in the same lattice
//! coordinates and reproduce the closed-form dispersions on the grid
//! `k = 2π m / L` exactly.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::CsrMatrix;

/// Integer lattice coordinate; unused trailing axes are zero.
pub type Coord = [i64; 3];

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("extent {extent} is below the minimum of {min}")]
    ExtentTooSmall { extent: usize, min: usize },
    #[error("dimension {0} is not supported (expected 1, 2 or 3)")]
    BadDimension(usize),
    #[error("no site at corner-frame diagonal position {0}")]
    NoDiagonalSite(i64),
}

/// Which lattice is built and how large.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum GeometryKind {
    /// Open chain with `n` sites.
    Chain1D { n: usize },
    /// Open rhombus with `half_diagonal` sites along each diagonal row.
    Rhombus2D { half_diagonal: usize },
    /// Open BCC cube with `edge` conventional cells per edge.
    Corner3D { edge: usize },
    /// Torus of `extent` sites per axis.
    Periodic { dimension: usize, extent: usize },
}

impl GeometryKind {
    pub fn dimension(&self) -> usize {
        match *self {
            GeometryKind::Chain1D { .. } => 1,
            GeometryKind::Rhombus2D { .. } => 2,
            GeometryKind::Corner3D { .. } => 3,
            GeometryKind::Periodic { dimension, .. } => dimension,
        }
    }

    pub fn extent(&self) -> usize {
        match *self {
            GeometryKind::Chain1D { n } => n,
            GeometryKind::Rhombus2D { half_diagonal } => half_diagonal,
            GeometryKind::Corner3D { edge } => edge,
            GeometryKind::Periodic { extent, .. } => extent,
        }
    }

    /// Nearest-neighbour count of the underlying infinite lattice.
    pub fn n_nn(&self) -> usize {
        match self.dimension() {
            1 => 2,
            2 => 4,
            _ => 8,
        }
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        let d = self.dimension();
        if !(1..=3).contains(&d) {
            return Err(LatticeError::BadDimension(d));
        }
        if self.extent() < 2 {
            return Err(LatticeError::ExtentTooSmall { extent: self.extent(), min: 2 });
        }
        Ok(())
    }

    /// Photon bandwidth `W = 2 n_nn J`.
    pub fn bandwidth(&self, hopping: f64) -> f64 {
        bandwidth(self.n_nn(), hopping)
    }

    pub fn dispersion(&self, omega_a: f64, hopping: f64, k: &[f64]) -> f64 {
        dispersion(self.dimension(), omega_a, hopping, k)
    }

    pub fn build(&self, omega_a: f64, hopping: f64) -> Result<BathGraph, LatticeError> {
        match *self {
            GeometryKind::Chain1D { n } => build_chain_1d(n, omega_a, hopping),
            GeometryKind::Rhombus2D { half_diagonal } => build_rhombus_2d(half_diagonal, omega_a, hopping),
            GeometryKind::Corner3D { edge } => build_corner_3d(edge, omega_a, hopping),
            GeometryKind::Periodic { dimension, extent } => build_periodic(dimension, extent, omega_a, hopping),
        }
    }
}

/// `W = 2 n_nn J`.
pub fn bandwidth(n_nn: usize, hopping: f64) -> f64 {
    2.0 * n_nn as f64 * hopping.abs()
}

/// Closed-form band dispersion of the infinite lattice in lattice coordinates.
///
/// * 1D: `ω_a + 2J cos k`
/// * 2D: `ω_a + 2J (cos kx + cos ky)`
/// * 3D: `ω_a + 2J (cos kx + cos ky + cos kz + cos(kx + ky + kz))`
pub fn dispersion(dimension: usize, omega_a: f64, hopping: f64, k: &[f64]) -> f64 {
    let s = match dimension {
        1 => k[0].cos(),
        2 => k[0].cos() + k[1].cos(),
        3 => k[0].cos() + k[1].cos() + k[2].cos() + (k[0] + k[1] + k[2]).cos(),
        d => panic!("unsupported dimension {d}"),
    };
    omega_a + 2.0 * hopping * s
}

/// Bond vectors in lattice coordinates; each contributes two neighbours.
fn bond_vectors(dimension: usize) -> &'static [Coord] {
    match dimension {
        1 => &[[1, 0, 0]],
        2 => &[[1, 0, 0], [0, 1, 0]],
        _ => &[[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]],
    }
}

fn add(a: Coord, b: Coord) -> Coord {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Single-particle photonic bath: sites, on-site frequency and hoppings.
///
/// Immutable after construction.
#[derive(Clone, Debug)]
pub struct BathGraph {
    geometry: GeometryKind,
    sites: Vec<Coord>,
    omega_a: f64,
    hopping: f64,
    hops: Vec<(usize, usize, f64)>,
    index: HashMap<Coord, usize>,
}

impl BathGraph {
    fn from_sites(geometry: GeometryKind, sites: Vec<Coord>, omega_a: f64, hopping: f64) -> Self {
        let index: HashMap<Coord, usize> = sites.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut hops = Vec::new();
        for (a, &c) in sites.iter().enumerate() {
            for &b in bond_vectors(geometry.dimension()) {
                if let Some(&t) = index.get(&add(c, b)) {
                    hops.push((a.min(t), a.max(t), hopping));
                }
            }
        }
        Self { geometry, sites, omega_a, hopping, hops, index }
    }

    pub fn geometry(&self) -> GeometryKind {
        self.geometry
    }

    pub fn dimension(&self) -> usize {
        self.geometry.dimension()
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Coord] {
        &self.sites
    }

    pub fn omega_a(&self) -> f64 {
        self.omega_a
    }

    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    /// Undirected edges `(i, j, amplitude)` with `i < j`, each stored once.
    pub fn hops(&self) -> &[(usize, usize, f64)] {
        &self.hops
    }

    pub fn n_nn(&self) -> usize {
        self.geometry.n_nn()
    }

    pub fn bandwidth(&self) -> f64 {
        self.geometry.bandwidth(self.hopping)
    }

    /// `[min ω(k), max ω(k)]` of the infinite lattice.
    pub fn band_edges(&self) -> (f64, f64) {
        let half = 0.5 * self.bandwidth();
        (self.omega_a - half, self.omega_a + half)
    }

    pub fn site_index(&self, coord: Coord) -> Option<usize> {
        self.index.get(&coord).copied()
    }

    /// Number of distinct neighbours of site `i`.
    pub fn coordination(&self, i: usize) -> usize {
        let mut neigh: Vec<usize> = self
            .hops
            .iter()
            .filter_map(|&(a, b, _)| if a == i { Some(b) } else if b == i { Some(a) } else { None })
            .collect();
        neigh.sort_unstable();
        neigh.dedup();
        neigh.len()
    }

    /// Coordinates in the corner-adapted frame, where the reflective corner
    /// sits at the origin and the trapping diagonal is `(n, n, n)`.
    ///
    /// 1D: `x`; 2D: `(i - j, i + j)`; 3D: doubled cartesian `(X, Y, Z)`.
    pub fn corner_coords(&self, i: usize) -> Coord {
        let c = self.sites[i];
        match self.dimension() {
            1 => c,
            2 => [c[0] - c[1], c[0] + c[1], 0],
            _ => [-c[0] + c[1] + c[2], c[0] - c[1] + c[2], c[0] + c[1] - c[2]],
        }
    }

    /// Site at corner-frame diagonal position `n`: `x = n` in 1D, `(n, n)` or
    /// `(n, n, n)` in the corner frame otherwise.
    pub fn diagonal_site(&self, n: i64) -> Result<usize, LatticeError> {
        let coord = match self.dimension() {
            1 => [n, 0, 0],
            2 => [n, 0, 0],
            _ => [n, n, n],
        };
        self.site_index(coord).ok_or(LatticeError::NoDiagonalSite(n))
    }

    /// Bath matrix: `ω_a` on the diagonal, hopping amplitudes on the edges.
    pub fn single_particle_matrix(&self) -> CsrMatrix {
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(self.sites.len() + 2 * self.hops.len());
        for i in 0..self.sites.len() {
            t.push((i, i, self.omega_a));
        }
        for &(a, b, v) in &self.hops {
            t.push((a, b, v));
            t.push((b, a, v));
        }
        CsrMatrix::from_triplets(self.sites.len(), &t)
    }

    pub fn dense_matrix(&self) -> DMatrix<f64> {
        self.single_particle_matrix().to_dense()
    }

    /// `site_i,site_j,amplitude`
    pub fn write_edges_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "site_i,site_j,amplitude")?;
        for &(a, b, v) in &self.hops {
            writeln!(w, "{a},{b},{v:e}")?;
        }
        Ok(())
    }

    /// `site,c1[,c2[,c3]]` in lattice coordinates.
    pub fn write_sites_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.dimension();
        let names = ["c1", "c2", "c3"];
        writeln!(w, "site,{}", names[..d].join(","))?;
        for (i, c) in self.sites.iter().enumerate() {
            let cs: Vec<String> = c[..d].iter().map(|v| v.to_string()).collect();
            writeln!(w, "{i},{}", cs.join(","))?;
        }
        Ok(())
    }
}

/// One isolated mode of energy `omega_a`. Useful as the smallest bath.
pub fn single_mode(omega_a: f64) -> BathGraph {
    BathGraph::from_sites(GeometryKind::Chain1D { n: 1 }, vec![[1, 0, 0]], omega_a, 0.0)
}

pub fn build_chain_1d(n: usize, omega_a: f64, hopping: f64) -> Result<BathGraph, LatticeError> {
    let geometry = GeometryKind::Chain1D { n };
    geometry.validate()?;
    let sites = (1..=n as i64).map(|x| [x, 0, 0]).collect();
    Ok(BathGraph::from_sites(geometry, sites, omega_a, hopping))
}

/// Rhombus with `2 L²` sites; see the module docs for the convention.
pub fn build_rhombus_2d(half_diagonal: usize, omega_a: f64, hopping: f64) -> Result<BathGraph, LatticeError> {
    let geometry = GeometryKind::Rhombus2D { half_diagonal };
    geometry.validate()?;
    let side = 2 * half_diagonal as i64;
    let mut sites = Vec::with_capacity(2 * half_diagonal * half_diagonal);
    for p in 0..side {
        for q in (0..side).filter(|q| (p - q).rem_euclid(2) == 0) {
            sites.push([(p + q) / 2, (q - p) / 2, 0]);
        }
    }
    Ok(BathGraph::from_sites(geometry, sites, omega_a, hopping))
}

/// BCC cube with `2 L³` sites; see the module docs for the convention.
pub fn build_corner_3d(edge: usize, omega_a: f64, hopping: f64) -> Result<BathGraph, LatticeError> {
    let geometry = GeometryKind::Corner3D { edge };
    geometry.validate()?;
    let side = 2 * edge as i64;
    let mut sites = Vec::with_capacity(2 * edge.pow(3));
    for x in 0..side {
        for y in (0..side).filter(|y| (x - y).rem_euclid(2) == 0) {
            for z in (0..side).filter(|z| (x - z).rem_euclid(2) == 0) {
                sites.push([(y + z) / 2, (x + z) / 2, (x + y) / 2]);
            }
        }
    }
    Ok(BathGraph::from_sites(geometry, sites, omega_a, hopping))
}

/// Torus of `extent` sites per axis. Bonds that wrap onto the same pair of
/// sites (extent 2) are merged with summed amplitude.
pub fn build_periodic(dimension: usize, extent: usize, omega_a: f64, hopping: f64) -> Result<BathGraph, LatticeError> {
    let geometry = GeometryKind::Periodic { dimension, extent };
    geometry.validate()?;
    let l = extent as i64;
    let sites: Vec<Coord> = periodic_grid(dimension, extent)
        .into_iter()
        .map(|m| [m[0], m[1], m[2]])
        .collect();
    let index: HashMap<Coord, usize> = sites.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut merged: HashMap<(usize, usize), f64> = HashMap::new();
    for (a, &c) in sites.iter().enumerate() {
        for &b in bond_vectors(dimension) {
            let mut t = add(c, b);
            for ax in 0..dimension {
                t[ax] = t[ax].rem_euclid(l);
            }
            let tb = index[&t];
            *merged.entry((a.min(tb), a.max(tb))).or_insert(0.0) += hopping;
        }
    }
    let mut hops: Vec<(usize, usize, f64)> = merged.into_iter().map(|((a, b), v)| (a, b, v)).collect();
    hops.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    Ok(BathGraph { geometry, sites, omega_a, hopping, hops, index })
}

fn periodic_grid(dimension: usize, extent: usize) -> Vec<[i64; 3]> {
    let l = extent as i64;
    let r = |ax: usize| if ax < dimension { 0..l } else { 0..1 };
    let mut out = Vec::new();
    for a in r(0) {
        for b in r(1) {
            for c in r(2) {
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// The discrete wave vectors `2π m / L` of a periodic torus, folded into
/// `(−π, π]`.
pub fn k_grid(dimension: usize, extent: usize) -> Vec<Vec<f64>> {
    let fold = |m: i64| {
        let k = 2.0 * PI * m as f64 / extent as f64;
        if k > PI { k - 2.0 * PI } else { k }
    };
    periodic_grid(dimension, extent)
        .into_iter()
        .map(|m| (0..dimension).map(|ax| fold(m[ax])).collect())
        .collect()
}

/// Sorted eigenvalues of a dense symmetric matrix.
pub(crate) fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Largest absolute deviation between the spectrum of a periodic bath and
/// the closed-form dispersion sampled on its k-grid.
pub fn dispersion_deviation(bath: &BathGraph) -> f64 {
    let GeometryKind::Periodic { dimension, extent } = bath.geometry() else {
        panic!("dispersion check needs a periodic bath");
    };
    let numeric = sorted_eigenvalues(bath.dense_matrix());
    let mut formula: Vec<f64> = k_grid(dimension, extent)
        .iter()
        .map(|k| dispersion(dimension, bath.omega_a(), bath.hopping(), k))
        .collect();
    formula.sort_by(|a, b| a.partial_cmp(b).unwrap());
    numeric.iter().zip(&formula).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
