//! Coarse-to-fine driver over the morphological decomposition, plus the
//! Gaussian and Haar pyramid baselines.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{Index3, LatticeKind};
use crate::lifting::{
    analyze, gaussian_pyramid, haar_pyramid, max_depth, prolong_zero_detail, LiftingMode,
    DEFAULT_GAUSSIAN_SIGMA,
};
use crate::tvl1::{solve_level_traced, SolverParams};
use crate::volume::{resample_field, DisplacementField, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphFlowConfig {
    pub l_start: usize,
    #[serde(default)]
    pub l_end: usize,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub mode: LiftingMode,
}

impl Default for MorphFlowConfig {
    fn default() -> Self {
        Self {
            l_start: 12,
            l_end: 0,
            solver: SolverParams::default(),
            mode: LiftingMode::Min,
        }
    }
}

impl MorphFlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.l_start.is_multiple_of(3) || !self.l_end.is_multiple_of(3) {
            return Err(invalid!(
                "l_start ({}) and l_end ({}) must be multiples of 3",
                self.l_start,
                self.l_end
            ));
        }
        if self.l_end > self.l_start {
            return Err(invalid!(
                "l_end ({}) exceeds l_start ({})",
                self.l_end,
                self.l_start
            ));
        }
        self.solver.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pyramid {
    Gaussian,
    Haar,
}

impl std::str::FromStr for Pyramid {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss" | "gaussian" => Ok(Pyramid::Gaussian),
            "haar" => Ok(Pyramid::Haar),
            other => Err(invalid!("unknown pyramid {other:?}")),
        }
    }
}

/// One solve in the coarse-to-fine schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Lifting level; baseline stages report `3 × pyramid level`.
    pub level: usize,
    pub kind: LatticeKind,
    pub extents: Index3,
    pub energy_before: f64,
    pub energy_after: f64,
    pub seconds: f64,
}

fn check_pair(fixed: &Volume, moving: &Volume) -> Result<()> {
    if fixed.lattice().kind() != LatticeKind::Cartesian {
        return Err(invalid!(
            "flow inputs must be Cartesian, got {}",
            fixed.lattice().kind()
        ));
    }
    fixed.lattice().ensure_same_grid(moving.lattice(), "flow")
}

fn solve_stage(
    level: usize,
    fixed: &Volume,
    moving: &Volume,
    u: &DisplacementField,
    params: &SolverParams,
    records: &mut Vec<StageRecord>,
) -> Result<DisplacementField> {
    let t0 = Instant::now();
    let (u, trace) = solve_level_traced(fixed, moving, u, params)?;
    records.push(StageRecord {
        level,
        kind: fixed.lattice().kind(),
        extents: fixed.extents(),
        energy_before: trace.initial(),
        energy_after: trace.last(),
        seconds: t0.elapsed().as_secs_f64(),
    });
    Ok(u)
}

pub fn run(fixed: &Volume, moving: &Volume, config: &MorphFlowConfig) -> Result<DisplacementField> {
    run_traced(fixed, moving, config).map(|(u, _)| u)
}

/// Solves on every level from `l_start` down to `l_end`, carrying the field
/// between lattices by zero-detail synthesis. Records are ordered as solved.
pub fn run_traced(
    fixed: &Volume,
    moving: &Volume,
    config: &MorphFlowConfig,
) -> Result<(DisplacementField, Vec<StageRecord>)> {
    config.validate()?;
    check_pair(fixed, moving)?;
    let (df, dm) = rayon::join(
        || analyze(fixed, config.l_start, config.mode),
        || analyze(moving, config.l_start, config.mode),
    );
    let (df, dm) = (df?, dm?);

    let level_pair = |l: usize| (df.approximation(l).unwrap(), dm.approximation(l).unwrap());
    let mut records = Vec::with_capacity(config.l_start - config.l_end + 1);

    let (f, m) = level_pair(config.l_start);
    let mut u = DisplacementField::zeros(f.lattice().clone());
    u = solve_stage(config.l_start, f, m, &u, &config.solver, &mut records)?;

    for level in (config.l_end..config.l_start).rev() {
        let geometry = df
            .step_into(level + 1)
            .expect("level within decomposition depth");
        u = prolong_zero_detail(&u, geometry, config.mode)?;
        let (f, m) = level_pair(level);
        u = solve_stage(level, f, m, &u, &config.solver, &mut records)?;
    }
    Ok((u, records))
}

pub fn run_baseline(
    fixed: &Volume,
    moving: &Volume,
    pyramid: Pyramid,
    config: &MorphFlowConfig,
) -> Result<DisplacementField> {
    run_baseline_traced(fixed, moving, pyramid, config).map(|(u, _)| u)
}

/// Same schedule on factor-2 Cartesian pyramids with `l_start / 3` levels;
/// fields move between levels by trilinear resampling.
pub fn run_baseline_traced(
    fixed: &Volume,
    moving: &Volume,
    pyramid: Pyramid,
    config: &MorphFlowConfig,
) -> Result<(DisplacementField, Vec<StageRecord>)> {
    config.validate()?;
    check_pair(fixed, moving)?;
    let feasible = max_depth(fixed.extents());
    if config.l_start > feasible {
        return Err(invalid!(
            "{} levels requested but extents {:?} allow at most {feasible}",
            config.l_start,
            fixed.extents()
        ));
    }
    let (start, end) = (config.l_start / 3, config.l_end / 3);
    let build = |v: &Volume| match pyramid {
        Pyramid::Gaussian => gaussian_pyramid(v, DEFAULT_GAUSSIAN_SIGMA, start),
        Pyramid::Haar => haar_pyramid(v, start),
    };
    let (pf, pm) = rayon::join(|| build(fixed), || build(moving));
    let (pf, pm) = (pf?, pm?);

    let mut records = Vec::with_capacity(start - end + 1);
    let mut u = DisplacementField::zeros(pf[start].lattice().clone());
    u = solve_stage(
        3 * start,
        &pf[start],
        &pm[start],
        &u,
        &config.solver,
        &mut records,
    )?;
    for level in (end..start).rev() {
        u = resample_field(&u, pf[level].lattice());
        u = solve_stage(
            3 * level,
            &pf[level],
            &pm[level],
            &u,
            &config.solver,
            &mut records,
        )?;
    }
    Ok((u, records))
}
