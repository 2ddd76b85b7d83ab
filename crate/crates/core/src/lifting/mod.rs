//! Morphological (min/max) lifting on the hv → d1 → d2 lattice cycle.
//!
//! One cycle maps a Cartesian grid to a Cartesian grid of doubled spacing:
//!
//! * **hv** splits the Cartesian grid by parity of `x + y + z`; the retained
//!   even sites form an FCC lattice. Removed sites are predicted from their
//!   six axis neighbours.
//! * **d1** removes FCC sites with odd `z`; the retained sites form a tilted
//!   cuboid lattice. Prediction uses the eight retained FCC neighbours
//!   `(±1, 0, ±1)`, `(0, ±1, ±1)`.
//! * **d2** removes cuboid sites with odd `x`; the retained sites form the
//!   Cartesian lattice of doubled spacing. Prediction uses the four retained
//!   neighbours `(±1, ±1, 0)`.
//!
//! With Max lifting a removed site `q` stores `γ_q = x_q − max_{r∼q} x_r` and
//! every retained site is updated by `max(0, max_{q∼r} γ_q)`. Min lifting is
//! the dual with minima. Neighbours outside the stored region are skipped.

pub(crate) mod baseline;

pub use baseline::{gaussian_kernel, gaussian_pyramid, haar_pyramid, DEFAULT_GAUSSIAN_SIGMA};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Index3, LatticeDescriptor, LatticeKind, Site};
use crate::volume::{DisplacementField, Volume};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiftingMode {
    Max,
    #[default]
    Min,
}

impl LiftingMode {
    #[inline]
    fn pick(self, a: f64, b: f64) -> f64 {
        match self {
            LiftingMode::Max => a.max(b),
            LiftingMode::Min => a.min(b),
        }
    }

    #[inline]
    fn identity(self) -> f64 {
        match self {
            LiftingMode::Max => f64::NEG_INFINITY,
            LiftingMode::Min => f64::INFINITY,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LiftingMode::Max => "max",
            LiftingMode::Min => "min",
        }
    }
}

impl std::str::FromStr for LiftingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(LiftingMode::Max),
            "min" => Ok(LiftingMode::Min),
            other => Err(invalid!("unknown lifting mode {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiftStep {
    Hv,
    D1,
    D2,
}

const HV_OFFSETS: [Site; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

const D1_OFFSETS: [Site; 8] = [
    [1, 0, 1],
    [-1, 0, 1],
    [1, 0, -1],
    [-1, 0, -1],
    [0, 1, 1],
    [0, -1, 1],
    [0, 1, -1],
    [0, -1, -1],
];

const D2_OFFSETS: [Site; 4] = [[1, 1, 0], [-1, 1, 0], [1, -1, 0], [-1, -1, 0]];

impl LiftStep {
    /// The step that takes level `level` to `level + 1`.
    pub fn from_level(level: usize) -> Self {
        match level % 3 {
            0 => LiftStep::Hv,
            1 => LiftStep::D1,
            _ => LiftStep::D2,
        }
    }

    pub fn source_kind(self) -> LatticeKind {
        match self {
            LiftStep::Hv => LatticeKind::Cartesian,
            LiftStep::D1 => LatticeKind::Fcc,
            LiftStep::D2 => LatticeKind::TiltedCuboid,
        }
    }

    pub fn target_kind(self) -> LatticeKind {
        match self {
            LiftStep::Hv => LatticeKind::Fcc,
            LiftStep::D1 => LatticeKind::TiltedCuboid,
            LiftStep::D2 => LatticeKind::Cartesian,
        }
    }

    /// Prediction stencil in site units of the source lattice.
    pub fn stencil(self) -> &'static [Site] {
        match self {
            LiftStep::Hv => &HV_OFFSETS,
            LiftStep::D1 => &D1_OFFSETS,
            LiftStep::D2 => &D2_OFFSETS,
        }
    }

    #[inline]
    pub fn is_removed(self, site: Site) -> bool {
        let odd = |v: i64| v.rem_euclid(2) == 1;
        match self {
            LiftStep::Hv => odd(site[0] + site[1] + site[2]),
            LiftStep::D1 => odd(site[2]),
            LiftStep::D2 => odd(site[0]),
        }
    }
}

impl std::fmt::Display for LiftStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LiftStep::Hv => "hv",
            LiftStep::D1 => "d1",
            LiftStep::D2 => "d2",
        })
    }
}

/// Source and target lattices of one lifting step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepGeometry {
    pub step: LiftStep,
    /// Source lattice after padding (the lattice that is split).
    pub source: LatticeDescriptor,
    /// Source extents before padding; synthesis crops back to these.
    pub input_extents: Index3,
    pub target: LatticeDescriptor,
}

impl StepGeometry {
    pub fn new(step: LiftStep, input: &LatticeDescriptor) -> Result<Self> {
        if input.kind() != step.source_kind() {
            return Err(invalid!(
                "{step} lifting expects a {} lattice, got {}",
                step.source_kind(),
                input.kind()
            ));
        }
        let ext = input.extents();
        let source = match step {
            LiftStep::Hv => {
                if ext.iter().any(|&n| n < 2) {
                    return Err(invalid!("hv lifting needs extents >= 2, got {ext:?}"));
                }
                input.with_extents(ext.map(|n| n + n % 2))?
            }
            LiftStep::D1 => {
                if !ext[1].is_multiple_of(2) {
                    return Err(invalid!(
                        "d1 lifting needs an even second extent, got {ext:?}"
                    ));
                }
                input.clone()
            }
            LiftStep::D2 => {
                if !ext[0].is_multiple_of(2) {
                    return Err(invalid!(
                        "d2 lifting needs an even first extent, got {ext:?}"
                    ));
                }
                input.clone()
            }
        };
        let [nx, ny, nz] = source.extents();
        let level = source.level() + 1;
        let target = match step {
            LiftStep::Hv => LatticeDescriptor::new(
                LatticeKind::Fcc,
                source.scale(),
                source.origin(),
                [nx, ny, nz / 2],
                level,
            )?,
            LiftStep::D1 => LatticeDescriptor::new(
                LatticeKind::TiltedCuboid,
                source.scale(),
                source.origin(),
                [nx, ny / 2, nz],
                level,
            )?,
            LiftStep::D2 => LatticeDescriptor::new(
                LatticeKind::Cartesian,
                2.0 * source.scale(),
                source.origin(),
                [nx / 2, ny, nz],
                level,
            )?,
        };
        Ok(Self {
            step,
            source,
            input_extents: ext,
            target,
        })
    }

    fn target_index(&self, site: Site) -> Option<Index3> {
        match self.step {
            LiftStep::Hv | LiftStep::D1 => self.target.index_of_site(site),
            LiftStep::D2 => self.target.index_of_site(site.map(|v| v / 2)),
        }
    }
}

/// Compressed adjacency list.
#[derive(Clone, Debug, Default)]
struct Adjacency {
    offsets: Vec<u32>,
    items: Vec<u32>,
}

impl Adjacency {
    #[inline]
    fn of(&self, n: usize) -> &[u32] {
        &self.items[self.offsets[n] as usize..self.offsets[n + 1] as usize]
    }
}

fn build_adjacency(
    src: &LatticeDescriptor,
    slot: &[u32],
    stencil: &[Site],
    sites: &[u32],
) -> Adjacency {
    let mut adj = Adjacency {
        offsets: Vec::with_capacity(sites.len() + 1),
        items: Vec::with_capacity(sites.len() * stencil.len()),
    };
    adj.offsets.push(0);
    for &lin in sites {
        let site = src.site(src.unravel(lin as usize));
        for o in stencil {
            if let Some(idx) = src.index_of_site([site[0] + o[0], site[1] + o[1], site[2] + o[2]]) {
                adj.items.push(slot[src.linear(idx)]);
            }
        }
        adj.offsets.push(adj.items.len() as u32);
    }
    adj
}

/// Index tables for one step: which source sites are removed or retained and
/// who predicts whom.
#[derive(Clone, Debug)]
pub struct StepPlan {
    geometry: StepGeometry,
    /// Source linear indices of removed sites, ascending.
    removed: Vec<u32>,
    /// Source linear indices of retained sites, in target linear order.
    retained: Vec<u32>,
    /// For each removed site, positions into `retained`.
    predictors: Adjacency,
    /// For each retained site, positions into `removed`.
    updaters: Adjacency,
}

impl StepPlan {
    pub fn new(geometry: StepGeometry) -> Result<Self> {
        let src = &geometry.source;
        let n = src.len();
        let mut removed = Vec::new();
        let mut retained = vec![u32::MAX; geometry.target.len()];
        // position of each source site within `removed` or `retained`
        let mut slot = vec![u32::MAX; n];
        for lin in 0..n {
            let site = src.site(src.unravel(lin));
            if geometry.step.is_removed(site) {
                slot[lin] = removed.len() as u32;
                removed.push(lin as u32);
            } else {
                let t = geometry
                    .target_index(site)
                    .ok_or_else(|| invalid!("retained site {site:?} has no target slot"))?;
                let t = geometry.target.linear(t);
                retained[t] = lin as u32;
                slot[lin] = t as u32;
            }
        }
        if retained.contains(&u32::MAX) {
            return Err(invalid!(
                "target lattice {:?} not covered by retained sites",
                geometry.target.extents()
            ));
        }

        let stencil = geometry.step.stencil();
        let build = |sites: &[u32]| build_adjacency(src, &slot, stencil, sites);
        let predictors = build(&removed);
        let updaters = build(&retained);
        if let Some(q) = (0..removed.len()).find(|&q| predictors.of(q).is_empty()) {
            return Err(invalid!(
                "removed site {:?} has no retained neighbour",
                src.unravel(removed[q] as usize)
            ));
        }
        Ok(Self {
            geometry,
            removed,
            retained,
            predictors,
            updaters,
        })
    }

    pub fn for_input(step: LiftStep, input: &LatticeDescriptor) -> Result<Self> {
        Self::new(StepGeometry::new(step, input)?)
    }

    pub fn geometry(&self) -> &StepGeometry {
        &self.geometry
    }

    pub fn removed_count(&self) -> usize {
        self.removed.len()
    }

    /// Source lattice index of each removed site, in coefficient order.
    pub fn removed_sites(&self) -> impl Iterator<Item = Index3> + '_ {
        self.removed
            .iter()
            .map(|&lin| self.geometry.source.unravel(lin as usize))
    }

    #[inline]
    fn predict(&self, mode: LiftingMode, q: usize, retained_values: &[f64]) -> f64 {
        self.predictors
            .of(q)
            .iter()
            .fold(mode.identity(), |acc, &r| {
                mode.pick(acc, retained_values[r as usize])
            })
    }

    #[inline]
    fn update(&self, mode: LiftingMode, r: usize, gamma: &[f64]) -> f64 {
        self.updaters
            .of(r)
            .iter()
            .fold(0.0, |acc, &q| mode.pick(acc, gamma[q as usize]))
    }

    /// Forward step on raw source data (already padded).
    fn forward(&self, mode: LiftingMode, source: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let retained_values: Vec<f64> = self.retained.iter().map(|&l| source[l as usize]).collect();
        let gamma: Vec<f64> = self
            .removed
            .par_iter()
            .enumerate()
            .map(|(q, &lin)| source[lin as usize] - self.predict(mode, q, &retained_values))
            .collect();
        let approx: Vec<f64> = retained_values
            .par_iter()
            .enumerate()
            .map(|(r, &x)| x + self.update(mode, r, &gamma))
            .collect();
        (approx, gamma)
    }

    /// Inverse step; returns padded source data.
    fn inverse(&self, mode: LiftingMode, approx: &[f64], gamma: &[f64]) -> Vec<f64> {
        let retained_values: Vec<f64> = approx
            .par_iter()
            .enumerate()
            .map(|(r, &a)| a - self.update(mode, r, gamma))
            .collect();
        let mut out = vec![0.0; self.geometry.source.len()];
        for (r, &lin) in self.retained.iter().enumerate() {
            out[lin as usize] = retained_values[r];
        }
        let removed_values: Vec<f64> = gamma
            .par_iter()
            .enumerate()
            .map(|(q, &g)| g + self.predict(mode, q, &retained_values))
            .collect();
        for (q, &lin) in self.removed.iter().enumerate() {
            out[lin as usize] = removed_values[q];
        }
        out
    }

    /// Inverse step with all detail coefficients zero, cropped to the input
    /// extents.
    fn prolong(&self, mode: LiftingMode, approx: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.geometry.source.len()];
        for (r, &lin) in self.retained.iter().enumerate() {
            out[lin as usize] = approx[r];
        }
        let removed_values: Vec<f64> = (0..self.removed.len())
            .into_par_iter()
            .map(|q| self.predict(mode, q, approx))
            .collect();
        for (q, &lin) in self.removed.iter().enumerate() {
            out[lin as usize] = removed_values[q];
        }
        crop(&self.geometry.source, out, self.geometry.input_extents)
    }

    /// Pads raw input data on the input lattice to the source lattice.
    fn pad(&self, input: &[f64]) -> Vec<f64> {
        let src = &self.geometry.source;
        let ie = self.geometry.input_extents;
        if src.extents() == ie {
            return input.to_vec();
        }
        (0..src.len())
            .map(|lin| {
                let [i, j, k] = src.unravel(lin);
                let idx = [i.min(ie[0] - 1), j.min(ie[1] - 1), k.min(ie[2] - 1)];
                input[idx[0] + ie[0] * (idx[1] + ie[1] * idx[2])]
            })
            .collect()
    }

    fn input_lattice(&self) -> LatticeDescriptor {
        self.geometry
            .source
            .with_extents(self.geometry.input_extents)
            .expect("input extents are non-degenerate")
    }
}

fn crop(src: &LatticeDescriptor, data: Vec<f64>, extents: Index3) -> Vec<f64> {
    if src.extents() == extents {
        return data;
    }
    let mut out = Vec::with_capacity(extents.iter().product());
    for k in 0..extents[2] {
        for j in 0..extents[1] {
            for i in 0..extents[0] {
                out.push(data[src.linear([i, j, k])]);
            }
        }
    }
    out
}

/// Detail coefficients of one lifting step, ordered like
/// [`StepPlan::removed_sites`].
#[derive(Clone, Debug, PartialEq)]
pub struct DetailSet {
    pub geometry: StepGeometry,
    pub coefficients: Vec<f64>,
}

impl DetailSet {
    pub fn step(&self) -> LiftStep {
        self.geometry.step
    }
}

/// One forward lifting step.
pub fn analyze_step(
    input: &Volume,
    step: LiftStep,
    mode: LiftingMode,
) -> Result<(Volume, DetailSet)> {
    let plan = StepPlan::for_input(step, input.lattice())?;
    analyze_with_plan(&plan, input, mode)
}

fn analyze_with_plan(
    plan: &StepPlan,
    input: &Volume,
    mode: LiftingMode,
) -> Result<(Volume, DetailSet)> {
    input
        .lattice()
        .ensure_same_grid(&plan.input_lattice(), "lifting analysis")?;
    let padded = plan.pad(input.data());
    let (approx, gamma) = plan.forward(mode, &padded);
    let approx = Volume::from_parts(
        plan.geometry.target.clone(),
        approx,
        input.original_extents(),
    );
    Ok((
        approx,
        DetailSet {
            geometry: plan.geometry.clone(),
            coefficients: gamma,
        },
    ))
}

pub fn hv_analyze(input: &Volume, mode: LiftingMode) -> Result<(Volume, DetailSet)> {
    analyze_step(input, LiftStep::Hv, mode)
}

pub fn d1_analyze(input: &Volume, mode: LiftingMode) -> Result<(Volume, DetailSet)> {
    analyze_step(input, LiftStep::D1, mode)
}

pub fn d2_analyze(input: &Volume, mode: LiftingMode) -> Result<(Volume, DetailSet)> {
    analyze_step(input, LiftStep::D2, mode)
}

/// Exact inverse of one lifting step.
pub fn synthesize_step(approx: &Volume, details: &DetailSet, mode: LiftingMode) -> Result<Volume> {
    approx
        .lattice()
        .ensure_same_grid(&details.geometry.target, "lifting synthesis")?;
    let plan = StepPlan::new(details.geometry.clone())?;
    if details.coefficients.len() != plan.removed_count() {
        return Err(invalid!(
            "{} detail set holds {} coefficients, step removes {}",
            details.step(),
            details.coefficients.len(),
            plan.removed_count()
        ));
    }
    let full = plan.inverse(mode, approx.data(), &details.coefficients);
    let ie = details.geometry.input_extents;
    let data = crop(&details.geometry.source, full, ie);
    Ok(Volume::from_parts(
        plan.input_lattice(),
        data,
        approx.original_extents(),
    ))
}

/// Zero-detail inverse step applied to each displacement component.
///
/// Retained sites keep their values and removed sites receive the mode's
/// extremum over their predictors. Values are not rescaled.
pub fn prolong_zero_detail(
    field: &DisplacementField,
    geometry: &StepGeometry,
    mode: LiftingMode,
) -> Result<DisplacementField> {
    field
        .lattice()
        .ensure_same_grid(&geometry.target, "zero-detail prolongation")?;
    let plan = StepPlan::new(geometry.clone())?;
    Ok(prolong_with_plan(&plan, field, mode))
}

pub(crate) fn prolong_with_plan(
    plan: &StepPlan,
    field: &DisplacementField,
    mode: LiftingMode,
) -> DisplacementField {
    let comps = [0, 1, 2].map(|c| plan.prolong(mode, field.component(c)));
    DisplacementField::from_components(plan.input_lattice(), comps)
}

/// Multilevel morphological decomposition.
#[derive(Clone, Debug)]
pub struct WaveletDecomposition {
    mode: LiftingMode,
    /// Approximation at every level, `approximations[0]` is the input.
    approximations: Vec<Volume>,
    /// Detail sets ordered coarsest first.
    details: Vec<DetailSet>,
}

impl WaveletDecomposition {
    pub fn mode(&self) -> LiftingMode {
        self.mode
    }

    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn coarsest(&self) -> &Volume {
        self.approximations
            .last()
            .expect("level 0 is always present")
    }

    pub fn finest_lattice(&self) -> &LatticeDescriptor {
        self.approximations[0].lattice()
    }

    /// Approximation after `level` lifting steps.
    pub fn approximation(&self, level: usize) -> Option<&Volume> {
        self.approximations.get(level)
    }

    pub fn approximations(&self) -> &[Volume] {
        &self.approximations
    }

    /// Detail sets, coarsest first.
    pub fn details(&self) -> &[DetailSet] {
        &self.details
    }

    /// Geometry of the step that produced `level` from `level - 1`.
    pub fn step_into(&self, level: usize) -> Option<&StepGeometry> {
        if level == 0 || level > self.levels() {
            return None;
        }
        Some(&self.details[self.levels() - level].geometry)
    }

    /// Full synthesis from the coarsest approximation and stored details.
    pub fn reconstruct(&self) -> Result<Volume> {
        let mut v = self.coarsest().clone();
        for d in &self.details {
            v = synthesize_step(&v, d, self.mode)?;
        }
        Ok(v)
    }
}

/// Largest number of lifting steps the extents admit.
pub fn max_depth(extents: Index3) -> usize {
    let mut e = extents;
    let mut depth = 0;
    while e.iter().all(|&n| n >= 2) {
        e = e.map(|n| n.div_ceil(2));
        depth += 3;
    }
    depth
}

/// Applies `levels` lifting steps, cycling hv, d1, d2.
pub fn analyze(input: &Volume, levels: usize, mode: LiftingMode) -> Result<WaveletDecomposition> {
    if input.lattice().kind() != LatticeKind::Cartesian {
        return Err(invalid!(
            "analysis starts on a Cartesian lattice, got {}",
            input.lattice().kind()
        ));
    }
    let feasible = max_depth(input.extents());
    if levels > feasible {
        return Err(invalid!(
            "{levels} lifting levels requested but extents {:?} allow at most {feasible}",
            input.extents()
        ));
    }
    let mut approximations = Vec::with_capacity(levels + 1);
    let mut details = Vec::with_capacity(levels);
    approximations.push(input.clone());
    for level in 0..levels {
        let step = LiftStep::from_level(input.lattice().level() + level);
        let (a, d) = analyze_step(approximations.last().unwrap(), step, mode)?;
        approximations.push(a);
        details.push(d);
    }
    details.reverse();
    Ok(WaveletDecomposition {
        mode,
        approximations,
        details,
    })
}
