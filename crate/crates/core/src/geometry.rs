//! Finite-volume gradients on Cartesian, FCC and tilted-cuboid lattices.
//!
//! For a cell `P` with faces `f` (area `|S_f|`, outward normal `n_f`) the
//! divergence theorem with a face value equal to the mean of the two adjacent
//! cells gives
//!
//! ```text
//! ∇Φ(P) = 1/(2|Ω|) Σ_f |S_f| n_f (Φ(Q_f) − Φ(P))
//! ```
//!
//! (the `Φ(P)` term vanishes for closed cells; keeping it makes missing
//! neighbours at the boundary contribute zero). The divergence is the exact
//! negative adjoint of this operator.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;

use crate::error::Result;
use crate::lattice::{LatticeDescriptor, LatticeKind, Site, Vec3};
use crate::volume::Volume;

#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub normal: Vec3,
    pub area: f64,
    /// Physical offset to the neighbouring cell centre.
    pub neighbor_offset: Vec3,
    /// The same offset in site units.
    pub site_offset: Site,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellGeometry {
    pub cell_volume: f64,
    pub faces: Vec<Face>,
}

impl CellGeometry {
    /// `Σ_f |S_f| n_f`, zero for a closed cell.
    pub fn closure(&self) -> Vec3 {
        let mut acc = [0.0; 3];
        for f in &self.faces {
            for a in 0..3 {
                acc[a] += f.area * f.normal[a];
            }
        }
        acc
    }

    /// Volume recovered from the faces as a union of pyramids.
    pub fn pyramid_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let d = 0.5 * norm(f.neighbor_offset);
                f.area * d / 3.0
            })
            .sum()
    }
}

fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Voronoi cell of one lattice site.
pub fn cell_geometry(lattice: &LatticeDescriptor) -> Result<CellGeometry> {
    let s = lattice.scale();
    let (offsets, areas, volume): (Vec<Site>, Vec<f64>, f64) = match lattice.kind() {
        LatticeKind::Cartesian => {
            let o = vec![
                [1, 0, 0],
                [-1, 0, 0],
                [0, 1, 0],
                [0, -1, 0],
                [0, 0, 1],
                [0, 0, -1],
            ];
            (o, vec![s * s; 6], s * s * s)
        }
        LatticeKind::Fcc => {
            let mut o = Vec::with_capacity(12);
            for a in [1i64, -1] {
                for b in [1i64, -1] {
                    o.push([a, b, 0]);
                    o.push([a, 0, b]);
                    o.push([0, a, b]);
                }
            }
            (o, vec![0.5 * SQRT_2 * s * s; 12], 2.0 * s * s * s)
        }
        LatticeKind::TiltedCuboid => {
            let o = vec![
                [1, 1, 0],
                [-1, -1, 0],
                [1, -1, 0],
                [-1, 1, 0],
                [0, 0, 2],
                [0, 0, -2],
            ];
            let diag = 2.0 * SQRT_2 * s * s;
            (
                o,
                vec![diag, diag, diag, diag, 2.0 * s * s, 2.0 * s * s],
                4.0 * s * s * s,
            )
        }
    };
    let faces = offsets
        .into_iter()
        .zip(areas)
        .map(|(site_offset, area)| {
            let neighbor_offset = site_offset.map(|c| c as f64 * s);
            let len = norm(neighbor_offset);
            Face {
                normal: neighbor_offset.map(|c| c / len),
                area,
                neighbor_offset,
                site_offset,
            }
        })
        .collect();
    Ok(CellGeometry {
        cell_volume: volume,
        faces,
    })
}

/// Per-site 3-vectors on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub lattice: LatticeDescriptor,
    pub values: Vec<Vec3>,
}

const NONE: u32 = u32::MAX;

/// Precomputed neighbour table and face weights for one lattice.
#[derive(Clone, Debug)]
pub struct GradientOperator {
    lattice: LatticeDescriptor,
    faces: usize,
    /// `weights[f] = |S_f| n_f / (2|Ω|)`.
    weights: Vec<Vec3>,
    /// Row-major `len × faces`, `NONE` for missing neighbours.
    neighbors: Vec<u32>,
}

impl GradientOperator {
    pub fn new(lattice: &LatticeDescriptor) -> Result<Self> {
        let cell = cell_geometry(lattice)?;
        let faces = cell.faces.len();
        let weights = cell
            .faces
            .iter()
            .map(|f| f.normal.map(|c| c * f.area / (2.0 * cell.cell_volume)))
            .collect();
        let mut neighbors = Vec::with_capacity(lattice.len() * faces);
        for n in 0..lattice.len() {
            let site = lattice.site(lattice.unravel(n));
            for f in &cell.faces {
                let o = f.site_offset;
                let nb = lattice
                    .index_of_site([site[0] + o[0], site[1] + o[1], site[2] + o[2]])
                    .map_or(NONE, |idx| lattice.linear(idx) as u32);
                neighbors.push(nb);
            }
        }
        Ok(Self {
            lattice: lattice.clone(),
            faces,
            weights,
            neighbors,
        })
    }

    pub fn lattice(&self) -> &LatticeDescriptor {
        &self.lattice
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    #[inline]
    fn row(&self, n: usize) -> &[u32] {
        &self.neighbors[n * self.faces..(n + 1) * self.faces]
    }

    /// Whether every face of site `n` has a stored neighbour.
    pub fn is_interior(&self, n: usize) -> bool {
        self.row(n).iter().all(|&nb| nb != NONE)
    }

    #[inline]
    pub fn gradient_at(&self, u: &[f64], n: usize) -> Vec3 {
        let un = u[n];
        let mut g = [0.0; 3];
        for (w, &nb) in self.weights.iter().zip(self.row(n)) {
            if nb != NONE {
                let d = u[nb as usize] - un;
                g[0] += w[0] * d;
                g[1] += w[1] * d;
                g[2] += w[2] * d;
            }
        }
        g
    }

    #[inline]
    pub fn divergence_at(&self, p: &[Vec3], n: usize) -> f64 {
        let pn = p[n];
        let mut acc = 0.0;
        for (w, &nb) in self.weights.iter().zip(self.row(n)) {
            if nb != NONE {
                let q = p[nb as usize];
                acc += w[0] * (pn[0] + q[0]) + w[1] * (pn[1] + q[1]) + w[2] * (pn[2] + q[2]);
            }
        }
        acc
    }

    pub fn apply_gradient(&self, u: &[f64], out: &mut [Vec3]) {
        out.par_iter_mut()
            .enumerate()
            .for_each(|(n, g)| *g = self.gradient_at(u, n));
    }

    pub fn apply_divergence(&self, p: &[Vec3], out: &mut [f64]) {
        out.par_iter_mut()
            .enumerate()
            .for_each(|(n, d)| *d = self.divergence_at(p, n));
    }
}

pub fn gradient(field: &Volume) -> Result<VectorField> {
    let op = GradientOperator::new(field.lattice())?;
    let mut values = vec![[0.0; 3]; field.len()];
    op.apply_gradient(field.data(), &mut values);
    Ok(VectorField {
        lattice: field.lattice().clone(),
        values,
    })
}

pub fn divergence(dual: &VectorField) -> Result<Volume> {
    let op = GradientOperator::new(&dual.lattice)?;
    let mut out = vec![0.0; dual.values.len()];
    op.apply_divergence(&dual.values, &mut out);
    Volume::new(dual.lattice.clone(), out)
}
