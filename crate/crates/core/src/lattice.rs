//! Lattice descriptors for the three grids visited by the lifting cycle.
//!
//! Every lattice is a sublattice of the finest Cartesian grid, scaled by a
//! power of two. Sites are addressed in two ways:
//!
//! * **array index** `(i, j, k)`: the dense storage layout, a box of
//!   `extents[0] × extents[1] × extents[2]` entries, `i` fastest;
//! * **site coordinates**: integer physical coordinates in units of the
//!   lattice scale `s`, so the physical position is `origin + s · site`.
//!
//! The storage layouts are the ones produced by the lifting steps:
//!
//! | kind           | site of array index `(i, j, k)`   |
//! |----------------|-----------------------------------|
//! | `Cartesian`    | `(i, j, k)`                       |
//! | `Fcc`          | `(i, j, 2k + (i + j) mod 2)`      |
//! | `TiltedCuboid` | `(i, 2j + i mod 2, 2k)`           |
//!
//! The Bravais basis (used for lattice coordinates and interpolation) is kept
//! alongside, since the array layout of the FCC and cuboid grids is not an
//! affine image of the Bravais coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Vec3 = [f64; 3];
pub type Index3 = [usize; 3];
pub type Site = [i64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    Cartesian,
    Fcc,
    TiltedCuboid,
}

impl LatticeKind {
    /// Integer basis columns in site units.
    pub fn integer_basis(self) -> [Site; 3] {
        match self {
            LatticeKind::Cartesian => [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
            LatticeKind::Fcc => [[1, 1, 0], [1, 0, 1], [0, 1, 1]],
            LatticeKind::TiltedCuboid => [[1, 1, 0], [1, -1, 0], [0, 0, 2]],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LatticeKind::Cartesian => "cartesian",
            LatticeKind::Fcc => "fcc",
            LatticeKind::TiltedCuboid => "tilted_cuboid",
        }
    }
}

impl std::fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeDescriptor {
    kind: LatticeKind,
    scale: f64,
    origin: Vec3,
    extents: Index3,
    level: usize,
}

impl LatticeDescriptor {
    pub fn new(
        kind: LatticeKind,
        scale: f64,
        origin: Vec3,
        extents: Index3,
        level: usize,
    ) -> Result<Self> {
        if extents.contains(&0) {
            return Err(invalid!("degenerate extents {extents:?}"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid!("lattice scale must be positive, got {scale}"));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(invalid!("non-finite lattice origin {origin:?}"));
        }
        Ok(Self {
            kind,
            scale,
            origin,
            extents,
            level,
        })
    }

    /// Level-0 Cartesian grid with unit spacing at the origin.
    pub fn cartesian(extents: Index3) -> Result<Self> {
        Self::new(LatticeKind::Cartesian, 1.0, [0.0; 3], extents, 0)
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn extents(&self) -> Index3 {
        self.extents
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_extents(&self, extents: Index3) -> Result<Self> {
        Self::new(self.kind, self.scale, self.origin, extents, self.level)
    }

    pub fn with_origin(&self, origin: Vec3) -> Result<Self> {
        Self::new(self.kind, self.scale, origin, self.extents, self.level)
    }

    /// Physical basis columns (units of finest-voxel edges).
    pub fn basis(&self) -> [Vec3; 3] {
        let b = self.kind.integer_basis();
        b.map(|col| col.map(|c| c as f64 * self.scale))
    }

    /// Absolute determinant of the basis: the volume of one lattice cell.
    pub fn cell_volume(&self) -> f64 {
        let [a, b, c] = self.basis();
        let det = a[0] * (b[1] * c[2] - b[2] * c[1]) - b[0] * (a[1] * c[2] - a[2] * c[1])
            + c[0] * (a[1] * b[2] - a[2] * b[1]);
        det.abs()
    }

    #[inline]
    pub fn linear(&self, idx: Index3) -> usize {
        idx[0] + self.extents[0] * (idx[1] + self.extents[1] * idx[2])
    }

    #[inline]
    pub fn unravel(&self, n: usize) -> Index3 {
        let [nx, ny, _] = self.extents;
        [n % nx, (n / nx) % ny, n / (nx * ny)]
    }

    /// Exclusive upper bound of site coordinates along each axis.
    pub fn site_box(&self) -> Site {
        let [nx, ny, nz] = self.extents.map(|n| n as i64);
        match self.kind {
            LatticeKind::Cartesian => [nx, ny, nz],
            LatticeKind::Fcc => [nx, ny, 2 * nz],
            LatticeKind::TiltedCuboid => [nx, 2 * ny, 2 * nz],
        }
    }

    #[inline]
    pub fn site(&self, idx: Index3) -> Site {
        let [i, j, k] = idx.map(|v| v as i64);
        match self.kind {
            LatticeKind::Cartesian => [i, j, k],
            LatticeKind::Fcc => [i, j, 2 * k + (i + j).rem_euclid(2)],
            LatticeKind::TiltedCuboid => [i, 2 * j + i.rem_euclid(2), 2 * k],
        }
    }

    /// Array index of a site, or `None` when the site is not stored.
    #[inline]
    pub fn index_of_site(&self, site: Site) -> Option<Index3> {
        let bx = self.site_box();
        if (0..3).any(|a| site[a] < 0 || site[a] >= bx[a]) {
            return None;
        }
        let [x, y, z] = site;
        let idx = match self.kind {
            LatticeKind::Cartesian => [x, y, z],
            LatticeKind::Fcc => {
                let p = (x + y).rem_euclid(2);
                if (z - p).rem_euclid(2) != 0 {
                    return None;
                }
                [x, y, (z - p) / 2]
            }
            LatticeKind::TiltedCuboid => {
                let p = x.rem_euclid(2);
                if (y - p).rem_euclid(2) != 0 || z.rem_euclid(2) != 0 {
                    return None;
                }
                [x, (y - p) / 2, z / 2]
            }
        };
        Some(idx.map(|v| v as usize))
    }

    /// Nearest stored site to an arbitrary site (edge replication).
    pub fn clamp_site(&self, site: Site) -> Index3 {
        let bx = self.site_box();
        let mut s = [0i64; 3];
        for a in 0..3 {
            s[a] = site[a].clamp(0, bx[a] - 1);
        }
        match self.kind {
            LatticeKind::Cartesian => {}
            LatticeKind::Fcc => {
                let p = (s[0] + s[1]).rem_euclid(2);
                if (s[2] - p).rem_euclid(2) != 0 {
                    s[2] = if s[2] >= 1 { s[2] - 1 } else { s[2] + 1 };
                }
            }
            LatticeKind::TiltedCuboid => {
                if s[2].rem_euclid(2) != 0 {
                    s[2] -= 1;
                }
                let p = s[0].rem_euclid(2);
                if (s[1] - p).rem_euclid(2) != 0 {
                    s[1] = if s[1] >= 1 { s[1] - 1 } else { s[1] + 1 };
                }
            }
        }
        self.index_of_site(s)
            .expect("clamped site must be stored on a non-degenerate lattice")
    }

    #[inline]
    pub fn position(&self, idx: Index3) -> Vec3 {
        let s = self.site(idx);
        [
            self.origin[0] + self.scale * s[0] as f64,
            self.origin[1] + self.scale * s[1] as f64,
            self.origin[2] + self.scale * s[2] as f64,
        ]
    }

    /// `origin + basis · (a, b, c)` for integer Bravais coordinates.
    ///
    /// Fails when the resulting point is not one of the stored sites.
    pub fn lattice_to_physical(&self, abc: Site) -> Result<Vec3> {
        let site = self.bravais_to_site(abc);
        if self.index_of_site(site).is_none() {
            return Err(Error::Bounds(format!(
                "lattice index {abc:?} is outside the {} lattice with extents {:?}",
                self.kind, self.extents
            )));
        }
        Ok([0, 1, 2].map(|a| self.origin[a] + self.scale * site[a] as f64))
    }

    #[inline]
    pub(crate) fn bravais_to_site(&self, abc: Site) -> Site {
        let b = self.kind.integer_basis();
        [0, 1, 2].map(|r| b[0][r] * abc[0] + b[1][r] * abc[1] + b[2][r] * abc[2])
    }

    /// Whether `point` lies in the axis-aligned bounding box of the stored sites.
    #[inline]
    pub fn contains_point(&self, point: Vec3) -> bool {
        let bx = self.site_box();
        (0..3).all(|a| {
            let t = (point[a] - self.origin[a]) / self.scale;
            t >= 0.0 && t <= (bx[a] - 1) as f64
        })
    }

    /// Real-valued Bravais coordinates of a physical point (basis inverse).
    #[inline]
    pub fn physical_to_lattice(&self, point: Vec3) -> Vec3 {
        let [x, y, z] = [0, 1, 2].map(|a| (point[a] - self.origin[a]) / self.scale);
        match self.kind {
            LatticeKind::Cartesian => [x, y, z],
            LatticeKind::Fcc => [0.5 * (x + y - z), 0.5 * (x - y + z), 0.5 * (-x + y + z)],
            LatticeKind::TiltedCuboid => [0.5 * (x + y), 0.5 * (x - y), 0.5 * z],
        }
    }

    /// Same kind, scale, origin and extents (level is bookkeeping only).
    pub fn same_grid(&self, other: &LatticeDescriptor) -> bool {
        self.kind == other.kind
            && self.scale == other.scale
            && self.origin == other.origin
            && self.extents == other.extents
    }

    pub(crate) fn ensure_same_grid(&self, other: &LatticeDescriptor, what: &str) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(invalid!(
                "{what}: lattice mismatch ({} {:?} scale {} vs {} {:?} scale {})",
                self.kind,
                self.extents,
                self.scale,
                other.kind,
                other.extents,
                other.scale
            ))
        }
    }
}
