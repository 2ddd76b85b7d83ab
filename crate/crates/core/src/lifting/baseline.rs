//! Gaussian and Haar pyramids used as comparison front ends.

use crate::error::{invalid, Result};
use crate::lattice::{Index3, LatticeDescriptor, LatticeKind};
use crate::volume::Volume;

pub const DEFAULT_GAUSSIAN_SIGMA: f64 = 1.0;

/// Normalized 1D Gaussian weights on `[-2σ, 2σ]` (integer taps).
///
/// The 3D kernel is the outer product of three copies, which equals the
/// truncated isotropic kernel renormalized to unit sum.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (2.0 * sigma).floor() as i64;
    let w: Vec<f64> = (-radius..=radius)
        .map(|m| (-(m * m) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|x| x / sum).collect()
}

fn check_cartesian(v: &Volume, what: &str) -> Result<()> {
    if v.lattice().kind() != LatticeKind::Cartesian {
        return Err(invalid!(
            "{what} needs a Cartesian volume, got {}",
            v.lattice().kind()
        ));
    }
    Ok(())
}

fn check_reducible(extents: Index3, level: usize, what: &str) -> Result<()> {
    if extents.iter().all(|&n| n < 2) {
        return Err(invalid!(
            "{what}: extents {extents:?} cannot be reduced further at level {level}"
        ));
    }
    Ok(())
}

fn coarser(lat: &LatticeDescriptor, extents: Index3, shift: f64) -> Result<LatticeDescriptor> {
    let o = lat.origin();
    let s = lat.scale();
    LatticeDescriptor::new(
        LatticeKind::Cartesian,
        2.0 * s,
        [o[0] + shift * s, o[1] + shift * s, o[2] + shift * s],
        extents,
        lat.level() + 3,
    )
}

/// Separable correlation along one axis with clamped indices.
pub(crate) fn convolve_axis(data: &[f64], ext: Index3, axis: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let stride = match axis {
        0 => 1,
        1 => ext[0],
        _ => ext[0] * ext[1],
    };
    let n_axis = ext[axis] as i64;
    let mut out = vec![0.0; data.len()];
    for (lin, o) in out.iter_mut().enumerate() {
        let pos = ((lin / stride) % ext[axis]) as i64;
        let base = lin as i64 - pos * stride as i64;
        *o = kernel
            .iter()
            .enumerate()
            .map(|(t, w)| {
                let p = (pos + t as i64 - r).clamp(0, n_axis - 1);
                w * data[(base + p * stride as i64) as usize]
            })
            .sum();
    }
    out
}

/// Gaussian pyramid: blur with the normalized `2σ` kernel, keep even samples.
///
/// Returns `levels + 1` volumes, the input first.
pub fn gaussian_pyramid(input: &Volume, sigma: f64, levels: usize) -> Result<Vec<Volume>> {
    check_cartesian(input, "gaussian pyramid")?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid!("gaussian sigma must be positive, got {sigma}"));
    }
    let kernel = gaussian_kernel(sigma);
    let mut out = vec![input.clone()];
    for level in 1..=levels {
        let prev = out.last().unwrap();
        let ext = prev.extents();
        check_reducible(ext, level, "gaussian pyramid")?;
        let mut blurred = prev.data().to_vec();
        for axis in 0..3 {
            blurred = convolve_axis(&blurred, ext, axis, &kernel);
        }
        let next_ext = ext.map(|n| n.div_ceil(2));
        let lat = coarser(prev.lattice(), next_ext, 0.0)?;
        let data = (0..lat.len())
            .map(|lin| {
                let [i, j, k] = lat.unravel(lin);
                blurred[2 * i + ext[0] * (2 * j + ext[1] * 2 * k)]
            })
            .collect();
        out.push(Volume::from_parts(lat, data, input.original_extents()));
    }
    Ok(out)
}

/// Haar approximation pyramid: means of disjoint 2×2×2 blocks.
///
/// Odd extents are padded by edge replication; the coarse sample sits at the
/// block centre, so each level's origin moves by half a fine voxel.
pub fn haar_pyramid(input: &Volume, levels: usize) -> Result<Vec<Volume>> {
    check_cartesian(input, "haar pyramid")?;
    let mut out = vec![input.clone()];
    for level in 1..=levels {
        let prev = out.last().unwrap();
        let ext = prev.extents();
        check_reducible(ext, level, "haar pyramid")?;
        let next_ext = ext.map(|n| n.div_ceil(2));
        let lat = coarser(prev.lattice(), next_ext, 0.5)?;
        let data = (0..lat.len())
            .map(|lin| {
                let [i, j, k] = lat.unravel(lin);
                let mut acc = 0.0;
                for dk in 0..2 {
                    for dj in 0..2 {
                        for di in 0..2 {
                            let idx = [
                                (2 * i + di).min(ext[0] - 1),
                                (2 * j + dj).min(ext[1] - 1),
                                (2 * k + dk).min(ext[2] - 1),
                            ];
                            acc += prev.get(idx);
                        }
                    }
                }
                acc / 8.0
            })
            .collect();
        out.push(Volume::from_parts(lat, data, input.original_extents()));
    }
    Ok(out)
}
