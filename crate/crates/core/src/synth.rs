//! Synthetic concrete-like phantoms and ground-truth deformations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{Index3, LatticeDescriptor, LatticeKind, Vec3};
use crate::lifting::{baseline::convolve_axis, gaussian_kernel};
use crate::volume::{interpolate, DisplacementField, Volume};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(invalid!("unknown axis {other:?}")),
        }
    }
}

/// Planar dark slab `position ≤ x_axis < position + opening`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrackSpec {
    pub axis: Axis,
    pub position: f64,
    pub opening: f64,
    pub grey: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub extents: Index3,
    pub grain_count: usize,
    pub grain_radius_range: (f64, f64),
    pub grain_grey: f64,
    pub matrix_grey: f64,
    #[serde(default)]
    pub crack: Option<CrackSpec>,
    /// Gaussian blur of the grain structure, standing in for the scanner's
    /// point spread. Applied before the crack and the noise.
    #[serde(default)]
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

pub const DEFAULT_NOISE_SIGMA: f64 = 0.01;
pub const DEFAULT_BLUR_SIGMA: f64 = 1.5;

impl PhantomSpec {
    /// Aggregate-in-mortar phantom of the given size without a crack.
    pub fn concrete(extents: Index3, seed: u64) -> Self {
        let n = extents.iter().product::<usize>() as f64;
        // roughly 25 % grain volume fraction at mean radius ~4
        let grain_count = ((0.25 * n) / (4.0 / 3.0 * std::f64::consts::PI * 64.0)).round() as usize;
        Self {
            extents,
            grain_count: grain_count.max(1),
            grain_radius_range: (2.5, 5.5),
            grain_grey: 0.75,
            matrix_grey: 0.35,
            crack: None,
            blur_sigma: DEFAULT_BLUR_SIGMA,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, g) in [
            ("grain_grey", self.grain_grey),
            ("matrix_grey", self.matrix_grey),
        ] {
            if !(0.0..=1.0).contains(&g) {
                return Err(invalid!("{name} must lie in [0, 1], got {g}"));
            }
        }
        if let Some(c) = &self.crack {
            if !(0.0..=1.0).contains(&c.grey) {
                return Err(invalid!("crack grey must lie in [0, 1], got {}", c.grey));
            }
            if !(c.opening >= 0.0) {
                return Err(invalid!(
                    "crack opening must be non-negative, got {}",
                    c.opening
                ));
            }
        }
        let (lo, hi) = self.grain_radius_range;
        if self.grain_count > 0 && !(lo > 0.0 && hi >= lo) {
            return Err(invalid!("invalid grain radius range ({lo}, {hi})"));
        }
        if !(self.noise_sigma >= 0.0 && self.blur_sigma >= 0.0) {
            return Err(invalid!("noise and blur sigma must be non-negative"));
        }
        LatticeDescriptor::cartesian(self.extents)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Grain {
    centre: Vec3,
    radius: f64,
}

const PLACEMENT_ATTEMPTS_PER_GRAIN: usize = 2000;

fn place_grains(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Grain>> {
    let mut grains: Vec<Grain> = Vec::with_capacity(spec.grain_count);
    let (lo, hi) = spec.grain_radius_range;
    let ext = spec.extents.map(|n| n as f64);
    let budget = PLACEMENT_ATTEMPTS_PER_GRAIN * spec.grain_count.max(1);
    let mut attempts = 0;
    while grains.len() < spec.grain_count {
        if attempts == budget {
            return Err(invalid!(
                "placed only {} of {} non-overlapping grains after {budget} attempts",
                grains.len(),
                spec.grain_count
            ));
        }
        attempts += 1;
        let radius = if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        };
        let centre = [0, 1, 2].map(|a| rng.random_range(0.0..ext[a]));
        let clear = grains.iter().all(|g| {
            let d2: f64 = (0..3).map(|a| (g.centre[a] - centre[a]).powi(2)).sum();
            d2.sqrt() >= g.radius + radius + 1.0
        });
        if clear {
            grains.push(Grain { centre, radius });
        }
    }
    Ok(grains)
}

/// Matrix grey everywhere, anti-aliased spherical grains, optional blur,
/// optional crack slab and clipped Gaussian noise. Deterministic per seed.
pub fn make_phantom(spec: &PhantomSpec) -> Result<Volume> {
    spec.validate()?;
    let lattice = LatticeDescriptor::cartesian(spec.extents)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let grains = place_grains(spec, &mut rng)?;

    let mut data = vec![spec.matrix_grey; lattice.len()];
    for g in &grains {
        let r = g.radius + 1.0;
        let lo = g.centre.map(|c| (c - r).floor().max(0.0) as usize);
        let hi = [0, 1, 2].map(|a| ((g.centre[a] + r).ceil() as usize).min(spec.extents[a] - 1));
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let p = [i as f64, j as f64, k as f64];
                    let d = (0..3)
                        .map(|a| (p[a] - g.centre[a]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    let cover = (g.radius - d + 0.5).clamp(0.0, 1.0);
                    if cover > 0.0 {
                        let n = lattice.linear([i, j, k]);
                        data[n] = spec.matrix_grey + cover * (spec.grain_grey - spec.matrix_grey);
                    }
                }
            }
        }
    }

    if spec.blur_sigma > 0.0 {
        let kernel = gaussian_kernel(spec.blur_sigma);
        for axis in 0..3 {
            data = convolve_axis(&data, spec.extents, axis, &kernel);
        }
    }

    if let Some(c) = &spec.crack {
        let a = c.axis.index();
        for (n, v) in data.iter_mut().enumerate() {
            let x = lattice.unravel(n)[a] as f64;
            if x >= c.position && x < c.position + c.opening {
                *v = c.grey;
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| invalid!("{e}"))?;
        for v in data.iter_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Volume::new(lattice, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deformation {
    /// Rigid translation by `t`.
    Translate(Vec3),
    /// Sites with `x_axis > position` move by `opening` along the axis; the
    /// gap that opens is filled with `grey`.
    CrackOpen {
        axis: Axis,
        position: f64,
        opening: f64,
        grey: f64,
    },
}

/// Produces the moving image `I₁` and the truth field `u` such that
/// `I₀(x) = I₁(x + u(x))`.
pub fn deform(volume: &Volume, truth: &Deformation) -> Result<(Volume, DisplacementField)> {
    let lat = volume.lattice();
    if lat.kind() != LatticeKind::Cartesian {
        return Err(invalid!("deformation needs a Cartesian volume"));
    }
    match *truth {
        Deformation::Translate(t) => {
            let data = (0..lat.len())
                .map(|n| {
                    let x = lat.position(lat.unravel(n));
                    interpolate(volume, [x[0] - t[0], x[1] - t[1], x[2] - t[2]])
                })
                .collect();
            Ok((
                Volume::new(lat.clone(), data)?,
                DisplacementField::constant(lat.clone(), t),
            ))
        }
        Deformation::CrackOpen {
            axis,
            position,
            opening,
            grey,
        } => {
            let a = axis.index();
            let mut shift = [0.0; 3];
            shift[a] = opening;
            let data = (0..lat.len())
                .map(|n| {
                    let y = lat.position(lat.unravel(n));
                    if y[a] <= position {
                        volume.get(lat.unravel(n))
                    } else if y[a] > position + opening {
                        interpolate(volume, [y[0] - shift[0], y[1] - shift[1], y[2] - shift[2]])
                    } else {
                        grey
                    }
                })
                .collect();
            let mut comps = [
                vec![0.0; lat.len()],
                vec![0.0; lat.len()],
                vec![0.0; lat.len()],
            ];
            for (n, v) in comps[a].iter_mut().enumerate() {
                if lat.position(lat.unravel(n))[a] > position {
                    *v = opening;
                }
            }
            let [u, v, w] = comps;
            Ok((
                Volume::new(lat.clone(), data)?,
                DisplacementField::new(lat.clone(), u, v, w)?,
            ))
        }
    }
}

/// Grey value of air in cracks.
pub const CRACK_GREY: f64 = 0.0;

/// Named phantom/deformation pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 32³ phantom shifted by (2, 1, 0).
    Shift32,
    /// 64³ phantom shifted by (2, 1, 0).
    Shift64,
    /// 32³ phantom opening a crack of 2 voxels across the mid z-plane.
    Crack32,
    /// 64³ phantom opening a crack of 2 voxels across the mid z-plane.
    Crack64,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Shift32,
        Preset::Shift64,
        Preset::Crack32,
        Preset::Crack64,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Shift32 => "shift32",
            Preset::Shift64 => "shift64",
            Preset::Crack32 => "crack32",
            Preset::Crack64 => "crack64",
        }
    }

    pub fn edge(self) -> usize {
        match self {
            Preset::Shift32 | Preset::Crack32 => 32,
            Preset::Shift64 | Preset::Crack64 => 64,
        }
    }

    pub fn phantom(self, seed: u64) -> PhantomSpec {
        PhantomSpec::concrete([self.edge(); 3], seed)
    }

    pub fn deformation(self) -> Deformation {
        match self {
            Preset::Shift32 | Preset::Shift64 => Deformation::Translate([2.0, 1.0, 0.0]),
            Preset::Crack32 | Preset::Crack64 => Deformation::CrackOpen {
                axis: Axis::Z,
                position: self.edge() as f64 / 2.0 - 0.5,
                opening: 2.0,
                grey: CRACK_GREY,
            },
        }
    }

    /// `(fixed, moving, truth)`.
    pub fn generate(self, seed: u64) -> Result<(Volume, Volume, DisplacementField)> {
        let fixed = make_phantom(&self.phantom(seed))?;
        let (moving, truth) = deform(&fixed, &self.deformation())?;
        Ok((fixed, moving, truth))
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Preset {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid!("unknown preset {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::warp;

    fn plain(extents: Index3) -> PhantomSpec {
        PhantomSpec {
            extents,
            grain_count: 0,
            grain_radius_range: (2.0, 3.0),
            grain_grey: 0.8,
            matrix_grey: 0.4,
            crack: None,
            blur_sigma: 0.0,
            noise_sigma: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn presets_parse_and_generate() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("crack16".parse::<Preset>().is_err());
        let (f, m, u) = Preset::Crack32.generate(7).unwrap();
        assert_eq!(f.extents(), [32; 3]);
        assert_eq!(m.get([3, 3, 16]), CRACK_GREY);
        assert_eq!(u.w()[u.lattice().linear([0, 0, 16])], 2.0);
        assert_eq!(u.w()[u.lattice().linear([0, 0, 15])], 0.0);
    }

    #[test]
    fn empty_spec_is_constant_matrix() {
        let v = make_phantom(&plain([8, 8, 8])).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.4));
    }

    #[test]
    fn crack_slab_is_exact() {
        let mut spec = plain([32, 32, 32]);
        spec.crack = Some(CrackSpec {
            axis: Axis::Z,
            position: 16.0,
            opening: 2.0,
            grey: 0.05,
        });
        let v = make_phantom(&spec).unwrap();
        for n in 0..v.len() {
            let k = v.lattice().unravel(n)[2];
            let expected = if k == 16 || k == 17 { 0.05 } else { 0.4 };
            assert_eq!(v.data()[n], expected);
        }
    }

    #[test]
    fn same_seed_same_volume() {
        let spec = PhantomSpec::concrete([24, 24, 24], 7);
        assert_eq!(make_phantom(&spec).unwrap(), make_phantom(&spec).unwrap());
        let other = PhantomSpec {
            seed: 8,
            ..spec.clone()
        };
        assert_ne!(make_phantom(&spec).unwrap(), make_phantom(&other).unwrap());
    }

    #[test]
    fn impossible_packing_fails() {
        let mut spec = plain([8, 8, 8]);
        spec.grain_count = 50;
        spec.grain_radius_range = (3.0, 3.0);
        assert!(make_phantom(&spec).is_err());
    }

    #[test]
    fn zero_translation_is_identity() {
        let v = make_phantom(&PhantomSpec::concrete([16, 16, 16], 1)).unwrap();
        let (m, t) = deform(&v, &Deformation::Translate([0.0; 3])).unwrap();
        assert_eq!(m, v);
        assert_eq!(t.max_abs(), 0.0);
    }

    #[test]
    fn integer_translation_is_array_shift() {
        let v = make_phantom(&PhantomSpec::concrete([16, 16, 16], 2)).unwrap();
        let (m, _) = deform(&v, &Deformation::Translate([3.0, 0.0, 0.0])).unwrap();
        for n in 0..m.len() {
            let [i, j, k] = m.lattice().unravel(n);
            if i >= 3 {
                assert_eq!(m.get([i, j, k]), v.get([i - 3, j, k]));
            }
        }
    }

    #[test]
    fn translation_then_truth_warp_recovers_original() {
        let v = make_phantom(&PhantomSpec::concrete([24, 24, 24], 3)).unwrap();
        let (m, t) = deform(&v, &Deformation::Translate([2.0, -1.0, 1.0])).unwrap();
        let back = warp(&m, &t).unwrap();
        for n in 0..v.len() {
            let idx = v.lattice().unravel(n);
            if idx.iter().all(|&c| (3..21).contains(&c)) {
                assert!((back.data()[n] - v.data()[n]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn crack_open_truth_and_gap() {
        let v = make_phantom(&PhantomSpec::concrete([16, 16, 16], 4)).unwrap();
        let (m, t) = deform(
            &v,
            &Deformation::CrackOpen {
                axis: Axis::Z,
                position: 8.0,
                opening: 2.0,
                grey: 0.02,
            },
        )
        .unwrap();
        for n in 0..v.len() {
            let [i, j, k] = v.lattice().unravel(n);
            assert_eq!(t.w()[n], if k > 8 { 2.0 } else { 0.0 });
            match k {
                0..=8 => assert_eq!(m.get([i, j, k]), v.get([i, j, k])),
                9 | 10 => assert_eq!(m.get([i, j, k]), 0.02),
                _ => assert_eq!(m.get([i, j, k]), v.get([i, j, k - 2])),
            }
        }
        // the truth field compensates the opening exactly
        let back = warp(&m, &t).unwrap();
        for n in 0..v.len() {
            if v.lattice().unravel(n)[2] < 14 {
                assert_eq!(back.data()[n], v.data()[n]);
            }
        }
    }
}
