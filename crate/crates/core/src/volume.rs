//! Scalar and vector fields on described lattices, interpolation and warping.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::lattice::{Index3, LatticeDescriptor, LatticeKind, Vec3};

/// Scalar grey-value field stored in the lattice's array layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    lattice: LatticeDescriptor,
    data: Vec<f64>,
    original_extents: Index3,
}

impl Volume {
    pub fn new(lattice: LatticeDescriptor, data: Vec<f64>) -> Result<Self> {
        let original_extents = lattice.extents();
        Self::with_original_extents(lattice, data, original_extents)
    }

    pub fn with_original_extents(
        lattice: LatticeDescriptor,
        data: Vec<f64>,
        original_extents: Index3,
    ) -> Result<Self> {
        if data.len() != lattice.len() {
            return Err(invalid!(
                "data length {} does not match extents {:?}",
                data.len(),
                lattice.extents()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid!("non-finite sample at {:?}", lattice.unravel(pos)));
        }
        Ok(Self {
            lattice,
            data,
            original_extents,
        })
    }

    /// Internal constructor for data that is finite by construction.
    pub(crate) fn from_parts(
        lattice: LatticeDescriptor,
        data: Vec<f64>,
        original_extents: Index3,
    ) -> Self {
        debug_assert_eq!(data.len(), lattice.len());
        Self {
            lattice,
            data,
            original_extents,
        }
    }

    pub fn filled(lattice: LatticeDescriptor, value: f64) -> Self {
        let n = lattice.len();
        let ext = lattice.extents();
        Self::from_parts(lattice, vec![value; n], ext)
    }

    pub fn from_fn(lattice: LatticeDescriptor, f: impl Fn(Index3) -> f64) -> Result<Self> {
        let data = (0..lattice.len()).map(|n| f(lattice.unravel(n))).collect();
        Self::new(lattice, data)
    }

    pub fn lattice(&self) -> &LatticeDescriptor {
        &self.lattice
    }

    pub fn extents(&self) -> Index3 {
        self.lattice.extents()
    }

    pub fn original_extents(&self) -> Index3 {
        self.original_extents
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, idx: Index3) -> f64 {
        self.data[self.lattice.linear(idx)]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Volume {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Self::from_parts(self.lattice.clone(), data, self.original_extents)
    }

    pub fn is_normalized(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Trilinear interpolation in Bravais coordinates with edge clamping.
    pub fn interpolate(&self, point: Vec3) -> f64 {
        interpolate(self, point)
    }
}

/// Three displacement components on one lattice, physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    lattice: LatticeDescriptor,
    components: [Vec<f64>; 3],
}

impl DisplacementField {
    pub fn new(lattice: LatticeDescriptor, u: Vec<f64>, v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        for (name, c) in ["u", "v", "w"].iter().zip([&u, &v, &w]) {
            if c.len() != lattice.len() {
                return Err(invalid!(
                    "component {name} has {} samples, lattice holds {}",
                    c.len(),
                    lattice.len()
                ));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(invalid!("component {name} contains non-finite values"));
            }
        }
        Ok(Self {
            lattice,
            components: [u, v, w],
        })
    }

    pub(crate) fn from_components(lattice: LatticeDescriptor, components: [Vec<f64>; 3]) -> Self {
        debug_assert!(components.iter().all(|c| c.len() == lattice.len()));
        Self {
            lattice,
            components,
        }
    }

    pub fn zeros(lattice: LatticeDescriptor) -> Self {
        Self::constant(lattice, [0.0; 3])
    }

    pub fn constant(lattice: LatticeDescriptor, value: Vec3) -> Self {
        let n = lattice.len();
        Self {
            lattice,
            components: value.map(|c| vec![c; n]),
        }
    }

    pub fn lattice(&self) -> &LatticeDescriptor {
        &self.lattice
    }

    pub fn components(&self) -> &[Vec<f64>; 3] {
        &self.components
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.components[c]
    }

    pub fn u(&self) -> &[f64] {
        &self.components[0]
    }

    pub fn v(&self) -> &[f64] {
        &self.components[1]
    }

    pub fn w(&self) -> &[f64] {
        &self.components[2]
    }

    pub(crate) fn components_mut(&mut self) -> &mut [Vec<f64>; 3] {
        &mut self.components
    }

    pub fn into_components(self) -> [Vec<f64>; 3] {
        self.components
    }

    #[inline]
    pub fn at(&self, n: usize) -> Vec3 {
        [
            self.components[0][n],
            self.components[1][n],
            self.components[2][n],
        ]
    }

    pub fn component_volume(&self, c: usize) -> Volume {
        Volume::from_parts(
            self.lattice.clone(),
            self.components[c].clone(),
            self.lattice.extents(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Grey value at a physical point.
///
/// The point is mapped to Bravais coordinates through the basis inverse and
/// the eight surrounding lattice sites are blended trilinearly. Sites outside
/// the stored region are replaced by the nearest stored site, and the point
/// itself is first clamped to the bounding box of the stored sites.
pub fn interpolate(volume: &Volume, point: Vec3) -> f64 {
    let lat = volume.lattice();
    let bx = lat.site_box();
    let origin = lat.origin();
    let s = lat.scale();
    let mut p = point;
    for a in 0..3 {
        let hi = origin[a] + s * (bx[a] - 1) as f64;
        p[a] = if p[a].is_nan() {
            origin[a]
        } else {
            p[a].clamp(origin[a], hi)
        };
    }

    if lat.kind() == LatticeKind::Cartesian {
        return interpolate_cartesian(volume, p);
    }

    let mut abc = lat.physical_to_lattice(p);
    let mut base = [0i64; 3];
    let mut frac = [0f64; 3];
    for a in 0..3 {
        let r = abc[a].round();
        if (abc[a] - r).abs() < 1e-9 {
            abc[a] = r;
        }
        let f = abc[a].floor();
        base[a] = f as i64;
        frac[a] = abc[a] - f;
    }

    let mut acc = 0.0;
    for corner in 0..8usize {
        let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let mut wgt = 1.0;
        for a in 0..3 {
            wgt *= if off[a] == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if wgt == 0.0 {
            continue;
        }
        let site = lat.bravais_to_site([0, 1, 2].map(|a| base[a] + off[a] as i64));
        let idx = lat
            .index_of_site(site)
            .unwrap_or_else(|| lat.clamp_site(site));
        acc += wgt * volume.get(idx);
    }
    acc
}

#[inline]
fn interpolate_cartesian(volume: &Volume, p: Vec3) -> f64 {
    let lat = volume.lattice();
    let ext = lat.extents();
    let origin = lat.origin();
    let s = lat.scale();
    let mut i0 = [0usize; 3];
    let mut i1 = [0usize; 3];
    let mut t = [0f64; 3];
    for a in 0..3 {
        let x = (p[a] - origin[a]) / s;
        let max = (ext[a] - 1) as f64;
        let x = x.clamp(0.0, max);
        let f = x.floor();
        i0[a] = f as usize;
        i1[a] = (i0[a] + 1).min(ext[a] - 1);
        t[a] = x - f;
    }
    let d = volume.data();
    let nx = ext[0];
    let nxy = ext[0] * ext[1];
    let at = |i: usize, j: usize, k: usize| d[i + nx * j + nxy * k];
    let [tx, ty, tz] = t;
    let c00 = at(i0[0], i0[1], i0[2]) * (1.0 - tx) + at(i1[0], i0[1], i0[2]) * tx;
    let c10 = at(i0[0], i1[1], i0[2]) * (1.0 - tx) + at(i1[0], i1[1], i0[2]) * tx;
    let c01 = at(i0[0], i0[1], i1[2]) * (1.0 - tx) + at(i1[0], i0[1], i1[2]) * tx;
    let c11 = at(i0[0], i1[1], i1[2]) * (1.0 - tx) + at(i1[0], i1[1], i1[2]) * tx;
    let c0 = c00 * (1.0 - ty) + c10 * ty;
    let c1 = c01 * (1.0 - ty) + c11 * ty;
    c0 * (1.0 - tz) + c1 * tz
}

/// `output(p) = moving(position(p) + field(p))` for every site `p`.
pub fn warp(moving: &Volume, field: &DisplacementField) -> Result<Volume> {
    let lat = moving.lattice();
    lat.ensure_same_grid(field.lattice(), "warp")?;
    let data: Vec<f64> = (0..lat.len())
        .into_par_iter()
        .map(|n| {
            let x = lat.position(lat.unravel(n));
            let d = field.at(n);
            interpolate(moving, [x[0] + d[0], x[1] + d[1], x[2] + d[2]])
        })
        .collect();
    Ok(Volume::from_parts(
        lat.clone(),
        data,
        moving.original_extents(),
    ))
}

/// Resamples a field onto another lattice by interpolating each component
/// at the target sites. Values are not rescaled.
pub fn resample_field(field: &DisplacementField, target: &LatticeDescriptor) -> DisplacementField {
    let comps = [0, 1, 2].map(|c| field.component_volume(c));
    let out = [0, 1, 2].map(|c| {
        (0..target.len())
            .into_par_iter()
            .map(|n| interpolate(&comps[c], target.position(target.unravel(n))))
            .collect::<Vec<f64>>()
    });
    DisplacementField::from_components(target.clone(), out)
}
