//! Policy iteration for the extended HJB system.
//!
//! Each outer iteration freezes the current policy, solves the auxiliary
//! field `g` (and `z = σ* ∂x g`), then backward-marches the value `v`
//! while minimizing the Hamiltonian pointwise over a finite candidate
//! set; the recorded argmins form the next policy after a Lipschitz
//! projection.  The loop stops when both the policy and the value stop
//! moving in sup norm.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::grid::{self, GridSpec};
use crate::pde::{self, Stepper, CFL_LIMIT};
use crate::policy::FeedbackPolicy;
use crate::problem::{ControlBox, ProblemSpec};
use crate::{Field, Real};

/// Solver output: the value, the auxiliary field and its gradient
/// companion, plus the optimal feedback policy, all on one grid.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub v: Field,
    pub g: Field,
    pub z: Field,
    pub u_star: FeedbackPolicy,
}

/// Per-outer-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct IterationStats {
    /// `‖u_{n+1} − u_n‖∞` over the policy lattice.
    pub policy_change: Real,
    /// `‖v_{n+1} − v_n‖∞`; for the first iteration, `‖v_1‖∞`.
    pub value_change: Real,
    /// Wall-clock seconds for the auxiliary solve.
    pub g_seconds: Real,
    /// Wall-clock seconds for the value sweep and projection.
    pub v_seconds: Real,
}

/// Outer-loop summary returned alongside the fields.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: Vec<IterationStats>,
    /// True when both final sup-norm changes fell at or below the
    /// tolerance before the iteration cap.
    pub converged: bool,
    /// Sup-norm residual of the value equation over the inner domain.
    pub residual_v: Real,
    /// Sup-norm residual of the auxiliary equation over the inner domain.
    pub residual_g: Real,
    /// Largest sampled `|∂x g|`, a smoothness diagnostic.
    pub max_dg_dx: Real,
}

/// Uniform candidate grid of `count` points spanning a scalar control box.
pub fn uniform_candidates(control: &ControlBox, count: usize) -> Result<Vec<Real>> {
    if control.dim() != 1 {
        return Err(Error::InvalidArgument(
            "candidate grids are scalar-control only".into(),
        ));
    }
    if count == 0 {
        return Err(Error::InvalidArgument(
            "candidate count must be positive".into(),
        ));
    }
    let lo = control.lower[0];
    let hi = control.upper[0];
    if count == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    Ok((0..count)
        .map(|i| lo + (hi - lo) * i as Real / (count - 1) as Real)
        .collect())
}

/// Minimizes the Hamiltonian `μ·dv1 + ½σ²·dv2 + f(t, x, g, z, u)` over a
/// finite candidate set.  Ties break toward the smallest candidate, so
/// the result is deterministic for a fixed candidate ordering.
pub fn hamiltonian_argmin(
    t: Real,
    x: Real,
    dv1: Real,
    dv2: Real,
    g_val: Real,
    z_val: Real,
    spec: &ProblemSpec,
    candidates: &[Real],
) -> (Real, Real) {
    debug_assert!(!candidates.is_empty());
    let mut best_u = candidates[0];
    let mut best = Real::INFINITY;
    for &u in candidates {
        let mu = spec.mu1(t, x, u);
        let sigma = spec.sigma1(t, x, u);
        let val = mu * dv1 + 0.5 * sigma * sigma * dv2 + spec.f1(t, x, g_val, z_val, u);
        if val < best {
            best = val;
            best_u = u;
        }
    }
    (best_u, best)
}

/// Projects one policy slice onto the grid Lipschitz class: a
/// left-to-right sweep clamping each node into `[u_{i−1} − KΔx,
/// u_{i−1} + KΔx]`, the mirrored right-to-left sweep, then a clamp into
/// the control box.  Both the sweeps and the final clamp are
/// 1-Lipschitz, so the output satisfies the bound exactly and a
/// compliant slice passes through unchanged.
pub fn lipschitz_project(slice: &mut [Real], dx: Real, k: Real, lo: Real, hi: Real) {
    let bound = k * dx;
    for i in 1..slice.len() {
        slice[i] = slice[i].clamp(slice[i - 1] - bound, slice[i - 1] + bound);
    }
    for i in (0..slice.len() - 1).rev() {
        slice[i] = slice[i].clamp(slice[i + 1] - bound, slice[i + 1] + bound);
    }
    for v in slice.iter_mut() {
        *v = v.clamp(lo, hi);
    }
}

/// Runs policy iteration on the extended system.
///
/// `u0` may live on any lattice; it is resampled onto the solve grid
/// first.  `candidates` must be sorted ascending (for deterministic tie
/// breaks) and lie inside the control box.  The explicit/implicit choice
/// applies to the auxiliary solves; the value sweep is always explicit
/// and enforces the CFL bound over every candidate.
pub fn solve_extended_hjb(
    spec: &ProblemSpec,
    grid: &GridSpec,
    u0: &FeedbackPolicy,
    candidates: &[Real],
    tol: Real,
    max_iter: usize,
    stepper: Stepper,
) -> Result<(FieldPair, SolveReport)> {
    spec.validate()?;
    grid.validate()?;
    if !spec.is_one_dimensional() {
        return Err(Error::InvalidProblem(
            "the HJB solver requires n = m = k = 1".into(),
        ));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("empty candidate set".into()));
    }
    if !candidates.windows(2).all(|w| w[0] <= w[1]) {
        return Err(Error::InvalidArgument(
            "candidates must be sorted ascending".into(),
        ));
    }
    if candidates
        .iter()
        .any(|&u| u < spec.control.lower[0] - 1e-12 || u > spec.control.upper[0] + 1e-12)
    {
        return Err(Error::InvalidArgument(
            "candidates must lie in the control box".into(),
        ));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument(
            "max outer iterations must be positive".into(),
        ));
    }

    let t_knots: Vec<Real> = (0..=grid.nt).map(|j| grid.t(j)).collect();
    let x_nodes: Vec<Real> = (0..grid.nx).map(|i| grid.x(i)).collect();
    let mut u_prev = FeedbackPolicy::from_fn(
        t_knots.clone(),
        x_nodes.clone(),
        spec.lipschitz_k,
        |t, x| u0.value(t, x),
    )?;

    let mut v_prev: Option<Field> = None;
    let mut iterations = Vec::new();
    let mut converged = false;

    for _ in 0..max_iter {
        let clock = Instant::now();
        let (g_n, z_n) = pde::solve_g(spec, &u_prev, grid, stepper)?;
        let g_seconds = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let (v_n, mut raw) = value_sweep(spec, grid, &g_n, &z_n, candidates)?;
        for j in 0..=grid.nt {
            lipschitz_project(
                &mut raw[j * grid.nx..(j + 1) * grid.nx],
                grid.dx(),
                spec.lipschitz_k,
                spec.control.lower[0],
                spec.control.upper[0],
            );
        }
        let u_next = FeedbackPolicy::new(
            t_knots.clone(),
            x_nodes.clone(),
            raw,
            spec.lipschitz_k,
        )?;
        let v_seconds = clock.elapsed().as_secs_f64();

        let policy_change = u_prev.sup_distance(&u_next)?;
        let value_change = match &v_prev {
            Some(v0) => v_n.sup_distance(v0),
            // No previous value: measure against zero so a huge tolerance
            // still converges after one sweep.
            None => v_n.values().iter().fold(0.0, |a: Real, &b| a.max(b.abs())),
        };
        iterations.push(IterationStats {
            policy_change,
            value_change,
            g_seconds,
            v_seconds,
        });

        u_prev = u_next;
        v_prev = Some(v_n);
        if policy_change <= tol && value_change <= tol {
            converged = true;
            break;
        }
    }

    // Re-solve the auxiliary pair under the final policy so the returned
    // (g, z) match u_star exactly.
    let (g, z) = pde::solve_g(spec, &u_prev, grid, stepper)?;
    let v = v_prev.expect("max_iter >= 1 guarantees at least one sweep");

    let report = SolveReport {
        residual_v: residual_v(spec, candidates, &v, &g, &z, 0.9),
        residual_g: pde::residual_g(spec, &u_prev, &g, &z, 0.9),
        max_dg_dx: pde::max_abs_dx(&g),
        iterations,
        converged,
    };
    let pair = FieldPair {
        v,
        g,
        z,
        u_star: u_prev,
    };
    Ok((pair, report))
}

/// One explicit backward sweep of the value equation under frozen
/// `(g, z)`, recording the per-node argmin into a raw policy (row-major
/// over time slices; the terminal slice copies the last computed one).
fn value_sweep(
    spec: &ProblemSpec,
    grid: &GridSpec,
    g_n: &Field,
    z_n: &Field,
    candidates: &[Real],
) -> Result<(Field, Vec<Real>)> {
    let nx = grid.nx;
    let nt = grid.nt;
    let dx = grid.dx();
    let dt = grid.dt();

    let mut v = Field::zeros(*grid);
    let mut raw = vec![0.0; (nt + 1) * nx];
    for i in 0..nx {
        v.set(nt, i, spec.g_terminal1(grid.x(i)));
    }

    let mut prev = vec![0.0; nx];
    for j in (0..nt).rev() {
        let t = grid.t(j);
        prev.copy_from_slice(v.slice(j + 1));
        let derivs = grid::slice_derivs(&prev, dx);
        let mut worst_cfl: Real = 0.0;
        let out = v.slice_mut(j);
        for i in 0..nx {
            let x = grid.x(i);
            let y = g_n.at(j, i);
            let zv = z_n.at(j, i);

            // Exhaustive candidate search with upwinding chosen per
            // candidate, so the committed step reuses the winner's
            // drift-consistent stencil.
            let mut best = Real::INFINITY;
            let mut best_u = candidates[0];
            let mut best_mu = 0.0;
            let mut best_sigma = 0.0;
            let mut best_d1 = 0.0;
            let mut best_f = 0.0;
            for &u in candidates {
                let mu = spec.mu1(t, x, u);
                let sigma = spec.sigma1(t, x, u);
                let d1 = grid::pick_upwind(mu, derivs.fwd[i], derivs.bwd[i]);
                let fv = spec.f1(t, x, y, zv, u);
                let val = mu * d1 + 0.5 * sigma * sigma * derivs.d2[i] + fv;
                if val < best {
                    best = val;
                    best_u = u;
                    best_mu = mu;
                    best_sigma = sigma;
                    best_d1 = d1;
                    best_f = fv;
                }
                worst_cfl = worst_cfl.max(pde::cfl_number(mu, sigma, dt, dx));
            }
            out[i] = pde::explicit_update(
                prev[i],
                dt,
                best_mu,
                best_d1,
                best_sigma,
                derivs.d2[i],
                best_f,
            );
            raw[j * nx + i] = best_u;
        }
        if worst_cfl > CFL_LIMIT {
            return Err(Error::CflViolated(format!(
                "CFL number {worst_cfl:.3} exceeds {CFL_LIMIT} in the value sweep at t = {t:.6}"
            )));
        }
        if let Some(i) = v.slice(j).iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFinite { step: j, node: i });
        }
    }
    // The terminal slice carries no argmin; extend the last interior one.
    if nt >= 1 {
        let (head, tail) = raw.split_at_mut(nt * nx);
        tail.copy_from_slice(&head[(nt - 1) * nx..]);
    }
    Ok((v, raw))
}

/// Sup-norm residual of the value equation `∂t v + min_u H(t, x, u) = 0`
/// over the inner domain, with central space differences and a forward
/// time difference — stencils independent of the marching scheme.
pub fn residual_v(
    spec: &ProblemSpec,
    candidates: &[Real],
    v: &Field,
    g: &Field,
    z: &Field,
    inner_fraction: Real,
) -> Real {
    let grid = v.grid;
    let dx = grid.dx();
    let dt = grid.dt();
    let range = grid.inner_range(inner_fraction);
    let mut worst: Real = 0.0;
    for j in 0..grid.nt {
        let t = grid.t(j);
        let slice = v.slice(j);
        for i in range.clone().filter(|&i| i > 0 && i + 1 < grid.nx) {
            let x = grid.x(i);
            let dtv = (v.at(j + 1, i) - v.at(j, i)) / dt;
            let d1 = (slice[i + 1] - slice[i - 1]) / (2.0 * dx);
            let d2 = (slice[i - 1] - 2.0 * slice[i] + slice[i + 1]) / (dx * dx);
            let (_, h_min) =
                hamiltonian_argmin(t, x, d1, d2, g.at(j, i), z.at(j, i), spec, candidates);
            worst = worst.max((dtv + h_min).abs());
        }
    }
    worst
}
