//! Residuals, RMSE, SSIM, multi-level SSIM, strain and scanlines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Index3, LatticeDescriptor, LatticeKind};
use crate::lifting::haar_pyramid;
use crate::synth::Axis;
use crate::volume::{warp, DisplacementField, Volume};

/// `|I₀ − I₁|`, or `|I₀ − I₁(x + u)|` when a field is given.
pub fn residual(
    fixed: &Volume,
    moving: &Volume,
    field: Option<&DisplacementField>,
) -> Result<Volume> {
    fixed
        .lattice()
        .ensure_same_grid(moving.lattice(), "residual")?;
    let warped;
    let m = match field {
        Some(u) => {
            warped = warp(moving, u)?;
            &warped
        }
        None => moving,
    };
    let data = fixed
        .data()
        .iter()
        .zip(m.data())
        .map(|(a, b)| (a - b).abs())
        .collect();
    Volume::new(fixed.lattice().clone(), data)
}

fn ensure_same_extents(a: &Volume, b: &Volume, what: &str) -> Result<()> {
    if a.extents() != b.extents() {
        return Err(invalid!(
            "{what}: extents {:?} and {:?} differ",
            a.extents(),
            b.extents()
        ));
    }
    Ok(())
}

pub fn rmse(fixed: &Volume, warped: &Volume) -> Result<f64> {
    ensure_same_extents(fixed, warped, "rmse")?;
    let sum: f64 = fixed
        .data()
        .iter()
        .zip(warped.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum / fixed.len() as f64).sqrt())
}

/// Linear-interpolated quantile, `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub mean: f64,
    pub max: f64,
    pub q90: f64,
}

pub fn residual_stats(r: &Volume) -> ResidualStats {
    ResidualStats {
        mean: r.data().iter().sum::<f64>() / r.len() as f64,
        max: r.max(),
        q90: quantile(r.data(), 0.9),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window_edge: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub levels: usize,
}

impl Default for SsimParams {
    fn default() -> Self {
        let c2 = 0.03f64 * 0.03;
        Self {
            window_edge: 7,
            c1: 0.01 * 0.01,
            c2,
            c3: c2 / 2.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            levels: 3,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.c3 > 0.0) {
            return Err(invalid!("ssim constants must be positive"));
        }
        if self.window_edge == 0 || self.levels == 0 {
            return Err(invalid!(
                "ssim window edge and level count must be positive"
            ));
        }
        Ok(())
    }
}

/// Per-window luminance, contrast and structure terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowTerms {
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
}

fn pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else {
        x.powf(e)
    }
}

fn window_terms(a: &Volume, b: &Volume, corner: Index3, p: &SsimParams) -> WindowTerms {
    let w = p.window_edge;
    let count = (w * w * w) as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for k in 0..w {
        for j in 0..w {
            for i in 0..w {
                let idx = [corner[0] + i, corner[1] + j, corner[2] + k];
                sa += a.get(idx);
                sb += b.get(idx);
            }
        }
    }
    let (ma, mb) = (sa / count, sb / count);
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for k in 0..w {
        for j in 0..w {
            for i in 0..w {
                let idx = [corner[0] + i, corner[1] + j, corner[2] + k];
                let (da, db) = (a.get(idx) - ma, b.get(idx) - mb);
                vaa += da * da;
                vbb += db * db;
                vab += da * db;
            }
        }
    }
    let (vaa, vbb, vab) = (vaa / count, vbb / count, vab / count);
    let sd = (vaa * vbb).sqrt();
    WindowTerms {
        luminance: (2.0 * ma * mb + p.c1) / (ma * ma + mb * mb + p.c1),
        contrast: (2.0 * sd + p.c2) / (vaa + vbb + p.c2),
        structure: (vab + p.c3) / (sd + p.c3),
    }
}

fn window_corners(extents: Index3, edge: usize) -> Result<Vec<Index3>> {
    if extents.iter().any(|&n| n < edge) {
        return Err(invalid!(
            "ssim window of edge {edge} does not fit extents {extents:?}"
        ));
    }
    let span = extents.map(|n| n - edge + 1);
    let mut out = Vec::with_capacity(span.iter().product());
    for k in 0..span[2] {
        for j in 0..span[1] {
            for i in 0..span[0] {
                out.push([i, j, k]);
            }
        }
    }
    Ok(out)
}

/// Mean over windows of `f(terms)`.
fn window_mean(
    a: &Volume,
    b: &Volume,
    p: &SsimParams,
    f: impl Fn(WindowTerms) -> f64 + Sync,
) -> Result<f64> {
    ensure_same_extents(a, b, "ssim")?;
    p.validate()?;
    let corners = window_corners(a.extents(), p.window_edge)?;
    let sum: f64 = corners
        .par_iter()
        .map(|&c| f(window_terms(a, b, c, p)))
        .sum();
    Ok(sum / corners.len() as f64)
}

/// Mean structural similarity over all interior windows.
pub fn ssim(a: &Volume, b: &Volume, params: &SsimParams) -> Result<f64> {
    window_mean(a, b, params, |t| {
        pow(t.luminance, params.alpha)
            * pow(t.contrast, params.beta)
            * pow(t.structure, params.gamma)
    })
}

/// Product over `levels` block-mean scales: contrast·structure means at every
/// scale, luminance only at the coarsest.
pub fn ml_ssim(a: &Volume, b: &Volume, params: &SsimParams) -> Result<f64> {
    ensure_same_extents(a, b, "ml-ssim")?;
    params.validate()?;
    let m = params.levels;
    let pa = haar_pyramid(a, m - 1).map_err(insufficient)?;
    let pb = haar_pyramid(b, m - 1).map_err(insufficient)?;
    let mut product = 1.0;
    for j in 0..m {
        let coarsest = j == m - 1;
        product *= window_mean(&pa[j], &pb[j], params, |t| {
            let cs = pow(t.contrast, params.beta) * pow(t.structure, params.gamma);
            if coarsest {
                pow(t.luminance, params.alpha) * cs
            } else {
                cs
            }
        })?;
    }
    Ok(product)
}

fn insufficient(e: Error) -> Error {
    invalid!("ml-ssim needs more halvings than the extents allow: {e}")
}

/// Symmetric small-strain tensor components on a Cartesian lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct StrainField {
    pub lattice: LatticeDescriptor,
    pub e11: Vec<f64>,
    pub e22: Vec<f64>,
    pub e33: Vec<f64>,
    pub e12: Vec<f64>,
    pub e13: Vec<f64>,
    pub e23: Vec<f64>,
}

impl StrainField {
    pub const NAMES: [&'static str; 6] = ["e11", "e22", "e33", "e12", "e13", "e23"];

    pub fn components(&self) -> [&[f64]; 6] {
        [
            &self.e11, &self.e22, &self.e33, &self.e12, &self.e13, &self.e23,
        ]
    }

    pub fn component_volume(&self, c: usize) -> Volume {
        Volume::new(self.lattice.clone(), self.components()[c].to_vec()).expect("finite strain")
    }
}

/// `∂f/∂x_axis`: central differences inside, one-sided at the boundary.
fn derivative(lat: &LatticeDescriptor, f: &[f64], axis: usize) -> Vec<f64> {
    let ext = lat.extents();
    let h = lat.scale();
    (0..lat.len())
        .map(|n| {
            let idx = lat.unravel(n);
            let i = idx[axis];
            if ext[axis] < 2 {
                return 0.0;
            }
            let at = |c: usize| {
                let mut q = idx;
                q[axis] = c;
                f[lat.linear(q)]
            };
            if i == 0 {
                (at(1) - at(0)) / h
            } else if i == ext[axis] - 1 {
                (at(i) - at(i - 1)) / h
            } else {
                (at(i + 1) - at(i - 1)) / (2.0 * h)
            }
        })
        .collect()
}

pub fn strain(field: &DisplacementField) -> Result<StrainField> {
    let lat = field.lattice();
    if lat.kind() != LatticeKind::Cartesian {
        return Err(invalid!(
            "strain is defined on Cartesian lattices only, got {}",
            lat.kind()
        ));
    }
    let d: Vec<[Vec<f64>; 3]> = (0..3)
        .map(|c| [0, 1, 2].map(|a| derivative(lat, field.component(c), a)))
        .collect();
    let sym = |i: usize, j: usize| -> Vec<f64> {
        d[i][j]
            .iter()
            .zip(&d[j][i])
            .map(|(x, y)| 0.5 * (x + y))
            .collect()
    };
    Ok(StrainField {
        lattice: lat.clone(),
        e11: d[0][0].clone(),
        e22: d[1][1].clone(),
        e33: d[2][2].clone(),
        e12: sym(0, 1),
        e13: sym(0, 2),
        e23: sym(1, 2),
    })
}

/// Grey values along `axis` through one slice.
///
/// For x the slice index selects z and the line index y; for y, z and x;
/// for z, y and x. Coordinates are physical positions along the axis.
pub fn scanline(
    volume: &Volume,
    axis: Axis,
    slice_index: usize,
    line_index: usize,
) -> Result<Vec<(f64, f64)>> {
    let lat = volume.lattice();
    if lat.kind() != LatticeKind::Cartesian {
        return Err(invalid!(
            "scanlines need a Cartesian lattice, got {}",
            lat.kind()
        ));
    }
    let (a, slice_axis, line_axis) = match axis {
        Axis::X => (0, 2, 1),
        Axis::Y => (1, 2, 0),
        Axis::Z => (2, 1, 0),
    };
    let ext = lat.extents();
    if slice_index >= ext[slice_axis] || line_index >= ext[line_axis] {
        return Err(Error::Bounds(format!(
            "scanline slice {slice_index} / line {line_index} outside extents {ext:?}"
        )));
    }
    Ok((0..ext[a])
        .map(|t| {
            let mut idx = [0; 3];
            idx[a] = t;
            idx[slice_axis] = slice_index;
            idx[line_axis] = line_index;
            (lat.position(idx)[a], volume.get(idx))
        })
        .collect())
}
