//! Single-level TV-L1 optical flow on any supported lattice.
//!
//! The energy `Σ_c |∇u_c| + λ |ρ(u)|` is split with an auxiliary field `v`
//! coupled by `|u − v|² / (2θ)`. Each warp freezes the linearization
//! `ρ(v) = ∇I₁ᵀ v + ρ₀`, then alternates a pointwise thresholding step for `v`
//! with one primal-dual iteration of TV denoising for `u`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GradientOperator;
use crate::lattice::{LatticeDescriptor, Vec3};
use crate::volume::{warp, DisplacementField, Volume};

const CHUNK: usize = 4096;

/// Upper bound on `‖∇‖²` used for the step-size condition.
pub const GRADIENT_NORM_BOUND_SQ: f64 = 12.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimalUpdate {
    /// Proximal map of `|u − v|² / (2θ)`.
    #[default]
    Prox,
    /// `(u − τ div p + v) / (1 + τλ)`, kept for side-by-side comparison.
    Printed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub tau: f64,
    pub sigma_dual: f64,
    pub lambda: f64,
    pub theta: f64,
    pub warps: usize,
    pub inner_iters: usize,
    #[serde(default)]
    pub primal_update: PrimalUpdate,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self::with_tau(0.25)
    }
}

impl SolverParams {
    /// Table defaults with `σ = 1 / (12 τ)`.
    pub fn with_tau(tau: f64) -> Self {
        Self {
            tau,
            sigma_dual: 1.0 / (GRADIENT_NORM_BOUND_SQ * tau),
            lambda: 25.0,
            theta: 0.2,
            warps: 20,
            inner_iters: 30,
            primal_update: PrimalUpdate::Prox,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau", self.tau),
            ("sigma_dual", self.sigma_dual),
            ("lambda", self.lambda),
            ("theta", self.theta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.warps == 0 || self.inner_iters == 0 {
            return Err(Error::Validation(
                "warps and inner_iters must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Warning text when `τσL² > 1`.
    pub fn step_size_warning(&self) -> Option<String> {
        let product = self.tau * self.sigma_dual * GRADIENT_NORM_BOUND_SQ;
        (product > 1.0 + 1e-12).then(|| {
            format!("tau * sigma * L^2 = {product:.4} exceeds 1; primal-dual iteration may not converge")
        })
    }
}

/// Linearization of the data term around the current displacement.
#[derive(Clone, Debug)]
pub struct WarpContext {
    pub warped: Volume,
    pub grad_warped: Vec<Vec3>,
    pub rho_const: Vec<f64>,
}

impl WarpContext {
    #[inline]
    pub fn rho(&self, n: usize, v: Vec3) -> f64 {
        let g = self.grad_warped[n];
        g[0] * v[0] + g[1] * v[1] + g[2] * v[2] + self.rho_const[n]
    }
}

/// Per-site dual vectors, one 3-vector per displacement component.
#[derive(Clone, Debug, PartialEq)]
pub struct DualField {
    /// `p[c][n]` is the dual vector of component `c` at site `n`.
    pub p: [Vec<Vec3>; 3],
}

impl DualField {
    pub fn zeros(len: usize) -> Self {
        Self {
            p: [
                vec![[0.0; 3]; len],
                vec![[0.0; 3]; len],
                vec![[0.0; 3]; len],
            ],
        }
    }

    /// Largest Euclidean norm over all per-component dual vectors.
    pub fn max_norm(&self) -> f64 {
        self.p
            .iter()
            .flatten()
            .map(|q| (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt())
            .fold(0.0, f64::max)
    }
}

pub fn build_warp_context(
    fixed: &Volume,
    moving: &Volume,
    u0: &DisplacementField,
) -> Result<WarpContext> {
    let op = GradientOperator::new(fixed.lattice())?;
    build_context_with(&op, fixed, moving, u0)
}

fn build_context_with(
    op: &GradientOperator,
    fixed: &Volume,
    moving: &Volume,
    u0: &DisplacementField,
) -> Result<WarpContext> {
    fixed
        .lattice()
        .ensure_same_grid(moving.lattice(), "warp context")?;
    fixed
        .lattice()
        .ensure_same_grid(op.lattice(), "warp context")?;
    let lat = fixed.lattice();
    let warped = warp(moving, u0)?;
    let mut grad_warped = vec![[0.0; 3]; warped.len()];
    op.apply_gradient(warped.data(), &mut grad_warped);
    // sites sampling outside the domain carry no data term
    let rho_const = grad_warped
        .par_iter_mut()
        .enumerate()
        .map(|(n, g)| {
            let d = u0.at(n);
            let x = lat.position(lat.unravel(n));
            if !lat.contains_point([x[0] + d[0], x[1] + d[1], x[2] + d[2]]) {
                *g = [0.0; 3];
                return 0.0;
            }
            warped.data()[n] - (g[0] * d[0] + g[1] * d[1] + g[2] * d[2]) - fixed.data()[n]
        })
        .collect();
    Ok(WarpContext {
        warped,
        grad_warped,
        rho_const,
    })
}

/// Minimizer of `|u − v|² / (2θ) + λ|ρ(v)|` at one site.
#[inline]
pub fn threshold_point(grad: Vec3, rho_u: f64, u: Vec3, lambda: f64, theta: f64) -> Vec3 {
    let g2 = grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2];
    if g2 == 0.0 {
        return u;
    }
    let lt = lambda * theta;
    let step = if rho_u < -lt * g2 {
        lt
    } else if rho_u > lt * g2 {
        -lt
    } else {
        -rho_u / g2
    };
    [
        u[0] + step * grad[0],
        u[1] + step * grad[1],
        u[2] + step * grad[2],
    ]
}

pub fn threshold_step(
    ctx: &WarpContext,
    u: &DisplacementField,
    lambda: f64,
    theta: f64,
) -> DisplacementField {
    let mut out = [
        vec![0.0; u.lattice().len()],
        vec![0.0; u.lattice().len()],
        vec![0.0; u.lattice().len()],
    ];
    threshold_into(ctx, u.components(), lambda, theta, &mut out);
    DisplacementField::from_components(u.lattice().clone(), out)
}

fn threshold_into(
    ctx: &WarpContext,
    u: &[Vec<f64>; 3],
    lambda: f64,
    theta: f64,
    v: &mut [Vec<f64>; 3],
) {
    let [v0, v1, v2] = v;
    v0.par_iter_mut()
        .zip(v1.par_iter_mut())
        .zip(v2.par_iter_mut())
        .with_min_len(CHUNK)
        .enumerate()
        .for_each(|(n, ((a, b), c))| {
            let un = [u[0][n], u[1][n], u[2][n]];
            let r = threshold_point(ctx.grad_warped[n], ctx.rho(n, un), un, lambda, theta);
            *a = r[0];
            *b = r[1];
            *c = r[2];
        });
}

/// Primal, extrapolated primal and dual state of the TV step.
#[derive(Clone, Debug)]
pub struct TvState {
    pub u: DisplacementField,
    pub u_bar: DisplacementField,
    pub dual: DualField,
}

impl TvState {
    pub fn new(u: DisplacementField) -> Self {
        let n = u.lattice().len();
        Self {
            u_bar: u.clone(),
            u,
            dual: DualField::zeros(n),
        }
    }
}

/// One primal-dual iteration of TV denoising towards `v`, per component:
/// dual ascent with projection onto the unit ball, proximal primal step,
/// extrapolation `ū = 2u' − u`.
pub fn tv_denoise_step(
    state: &mut TvState,
    v: &DisplacementField,
    op: &GradientOperator,
    params: &SolverParams,
) {
    tv_step_inner(state, v.components(), op, params);
}

fn tv_step_inner(
    state: &mut TvState,
    v: &[Vec<f64>; 3],
    op: &GradientOperator,
    params: &SolverParams,
) {
    let sigma = params.sigma_dual;
    let tau = params.tau;
    // u' = (u ± τ div p + kv v) / denom
    let (div_sign, kv, denom) = match params.primal_update {
        PrimalUpdate::Prox => {
            let k = tau / params.theta;
            (1.0, k, 1.0 + k)
        }
        PrimalUpdate::Printed => (-1.0, 1.0, 1.0 + tau * params.lambda),
    };
    for c in 0..3 {
        let u_bar = state.u_bar.component(c);
        state.dual.p[c]
            .par_iter_mut()
            .with_min_len(CHUNK)
            .enumerate()
            .for_each(|(n, p)| {
                let g = op.gradient_at(u_bar, n);
                let q = [
                    p[0] + sigma * g[0],
                    p[1] + sigma * g[1],
                    p[2] + sigma * g[2],
                ];
                let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
                let scale = 1.0 / norm.max(1.0);
                *p = [q[0] * scale, q[1] * scale, q[2] * scale];
            });

        let pc = &state.dual.p[c];
        let (u, u_bar) = split_components(&mut state.u, &mut state.u_bar, c);
        let vc = &v[c];
        u.par_iter_mut()
            .zip(u_bar.par_iter_mut())
            .with_min_len(CHUNK)
            .enumerate()
            .for_each(|(n, (un, ub))| {
                let old = *un;
                let new = (old + div_sign * tau * op.divergence_at(pc, n) + kv * vc[n]) / denom;
                *un = new;
                *ub = 2.0 * new - old;
            });
    }
}

fn split_components<'a>(
    u: &'a mut DisplacementField,
    u_bar: &'a mut DisplacementField,
    c: usize,
) -> (&'a mut Vec<f64>, &'a mut Vec<f64>) {
    (&mut u.components_mut()[c], &mut u_bar.components_mut()[c])
}

/// `Σ_c Σ_n |∇u_c(n)| + λ Σ_n |I₁(x + u) − I₀(x)|`, with the data term taken
/// from a context linearized at `u`.
pub fn energy(op: &GradientOperator, u: &DisplacementField, ctx: &WarpContext, lambda: f64) -> f64 {
    let tv: f64 = (0..3)
        .map(|c| {
            let uc = u.component(c);
            (0..op.len())
                .into_par_iter()
                .map(|n| {
                    let g = op.gradient_at(uc, n);
                    (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt()
                })
                .sum::<f64>()
        })
        .sum();
    let data: f64 = (0..op.len())
        .into_par_iter()
        .map(|n| ctx.rho(n, u.at(n)).abs())
        .sum();
    tv + lambda * data
}

/// Energies recorded by [`solve_level_traced`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    /// Energy at the start of each warp, then once after the last warp.
    pub energies: Vec<f64>,
}

impl LevelTrace {
    pub fn initial(&self) -> f64 {
        self.energies.first().copied().unwrap_or(0.0)
    }

    pub fn last(&self) -> f64 {
        self.energies.last().copied().unwrap_or(0.0)
    }
}

pub fn solve_level(
    fixed: &Volume,
    moving: &Volume,
    u_init: &DisplacementField,
    params: &SolverParams,
) -> Result<DisplacementField> {
    solve_level_traced(fixed, moving, u_init, params).map(|(u, _)| u)
}

/// Warped TV-L1 on one lattice.
///
/// Parameters are per lattice spacing: the solve runs on a unit-spacing copy
/// of the lattice with the field divided by the scale, and the result is
/// converted back to physical units.
pub fn solve_level_traced(
    fixed: &Volume,
    moving: &Volume,
    u_init: &DisplacementField,
    params: &SolverParams,
) -> Result<(DisplacementField, LevelTrace)> {
    let lat = fixed.lattice();
    lat.ensure_same_grid(moving.lattice(), "solve_level")?;
    lat.ensure_same_grid(u_init.lattice(), "solve_level")?;
    let s = lat.scale();
    if s == 1.0 && lat.origin() == [0.0; 3] {
        return solve_unit(fixed, moving, u_init, params);
    }
    let unit = LatticeDescriptor::new(lat.kind(), 1.0, [0.0; 3], lat.extents(), lat.level())?;
    let relabel =
        |v: &Volume| Volume::from_parts(unit.clone(), v.data().to_vec(), v.original_extents());
    let scaled = |u: &DisplacementField, f: f64, target: &LatticeDescriptor| {
        DisplacementField::from_components(
            target.clone(),
            u.components()
                .clone()
                .map(|c| c.into_iter().map(|x| x * f).collect()),
        )
    };
    let (u, trace) = solve_unit(
        &relabel(fixed),
        &relabel(moving),
        &scaled(u_init, 1.0 / s, &unit),
        params,
    )?;
    Ok((scaled(&u, s, lat), trace))
}

fn solve_unit(
    fixed: &Volume,
    moving: &Volume,
    u_init: &DisplacementField,
    params: &SolverParams,
) -> Result<(DisplacementField, LevelTrace)> {
    params.validate()?;
    let lat = fixed.lattice();
    lat.ensure_same_grid(moving.lattice(), "solve_level")?;
    lat.ensure_same_grid(u_init.lattice(), "solve_level")?;
    let op = GradientOperator::new(lat)?;
    let n = lat.len();

    let mut state = TvState::new(u_init.clone());
    let mut v = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut trace = LevelTrace::default();

    for warp_index in 0..params.warps {
        let ctx = build_context_with(&op, fixed, moving, &state.u)?;
        trace
            .energies
            .push(energy(&op, &state.u, &ctx, params.lambda));
        // extrapolation restarts at the new linearization point
        state.u_bar = state.u.clone();
        for iter in 0..params.inner_iters {
            threshold_into(
                &ctx,
                state.u.components(),
                params.lambda,
                params.theta,
                &mut v,
            );
            tv_step_inner(&mut state, &v, &op, params);
            if !state.u.is_finite() {
                return Err(Error::Solver(format!(
                    "non-finite displacement at warp {} iteration {} on {} lattice {:?}",
                    warp_index + 1,
                    iter + 1,
                    lat.kind(),
                    lat.extents()
                )));
            }
        }
    }
    let ctx = build_context_with(&op, fixed, moving, &state.u)?;
    trace
        .energies
        .push(energy(&op, &state.u, &ctx, params.lambda));
    Ok((state.u, trace))
}
