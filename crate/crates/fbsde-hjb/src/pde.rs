//! Backward linear parabolic solve for the auxiliary field `g` under a
//! frozen feedback policy, and the shared explicit stepping kernel.
//!
//! The field solves `∂t g + μ* ∂x g + ½ σ*² ∂xx g + h(t, x, g, z, u) = 0`
//! backward from `g(T, x) = Φ(x)`, with `z = σ* ∂x g` and all starred
//! coefficients evaluated at the frozen policy.  The drift term is
//! upwinded per node, the diffusion term is central, and `h`'s `(y, z)`
//! arguments are lagged one slice, so the explicit scheme is monotone
//! under the CFL bound.

use crate::error::{Error, Result};
use crate::grid::{self, GridSpec};
use crate::policy::FeedbackPolicy;
use crate::problem::ProblemSpec;
use crate::{Field, Real};

/// Time-stepping scheme for the auxiliary solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stepper {
    /// Forward Euler in backward time; enforces the CFL bound.
    #[default]
    Explicit,
    /// Fully implicit advection/diffusion with the driver kept explicit;
    /// no CFL restriction.
    Implicit,
}

/// CFL number at one node: `σ² Δt / Δx² + |μ| Δt / Δx`.
#[inline]
pub fn cfl_number(mu: Real, sigma: Real, dt: Real, dx: Real) -> Real {
    sigma * sigma * dt / (dx * dx) + mu.abs() * dt / dx
}

/// Largest admissible CFL number for the explicit stepper.
pub const CFL_LIMIT: Real = 0.9;

/// One explicit backward step at one node.  The value sweep in the
/// policy-iteration solver uses the same kernel so that, for a singleton
/// control set, the two solvers produce identical floating-point results.
#[inline]
pub fn explicit_update(
    prev: Real,
    dt: Real,
    mu: Real,
    d1: Real,
    sigma: Real,
    d2: Real,
    source: Real,
) -> Real {
    prev + dt * (mu * d1 + 0.5 * sigma * sigma * d2 + source)
}

/// Scans the grid for the worst CFL number under the given policy.
pub fn max_cfl(spec: &ProblemSpec, policy: &FeedbackPolicy, grid: &GridSpec) -> Real {
    let dt = grid.dt();
    let dx = grid.dx();
    let mut worst: Real = 0.0;
    for j in 0..=grid.nt {
        let t = grid.t(j);
        for i in 0..grid.nx {
            let x = grid.x(i);
            let u = policy.value(t, x);
            let c = cfl_number(spec.mu1(t, x, u), spec.sigma1(t, x, u), dt, dx);
            worst = worst.max(c);
        }
    }
    worst
}

/// Solves for the auxiliary field `g` and its companion `z = σ* ∂x g`
/// under the frozen policy, marching backward from `g(T, x) = Φ(x)`.
pub fn solve_g(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    grid: &GridSpec,
    stepper: Stepper,
) -> Result<(Field, Field)> {
    spec.validate()?;
    grid.validate()?;
    if !spec.is_one_dimensional() {
        return Err(Error::InvalidProblem(
            "the grid solver requires n = m = k = 1".into(),
        ));
    }

    let nx = grid.nx;
    let nt = grid.nt;
    let dx = grid.dx();
    let dt = grid.dt();

    let mut g = Field::zeros(*grid);
    let mut z = Field::zeros(*grid);

    for i in 0..nx {
        g.set(nt, i, spec.phi1(grid.x(i)));
    }
    fill_z_slice(spec, policy, grid, &g, &mut z, nt);

    let mut mu = vec![0.0; nx];
    let mut sigma = vec![0.0; nx];
    let mut u = vec![0.0; nx];
    let mut prev = vec![0.0; nx];

    for j in (0..nt).rev() {
        let t = grid.t(j);
        let t_prev = grid.t(j + 1);
        for i in 0..nx {
            let x = grid.x(i);
            u[i] = policy.value(t, x);
            mu[i] = spec.mu1(t, x, u[i]);
            sigma[i] = spec.sigma1(t, x, u[i]);
        }
        prev.copy_from_slice(g.slice(j + 1));
        let z_prev: Vec<Real> = z.slice(j + 1).to_vec();

        match stepper {
            Stepper::Explicit => {
                let worst = (0..nx)
                    .map(|i| cfl_number(mu[i], sigma[i], dt, dx))
                    .fold(0.0, Real::max);
                if worst > CFL_LIMIT {
                    return Err(Error::CflViolated(format!(
                        "CFL number {worst:.3} exceeds {CFL_LIMIT} at t = {t:.6}; \
                         refine the time grid or use the implicit stepper"
                    )));
                }
                let derivs = grid::slice_derivs(&prev, dx);
                let out = g.slice_mut(j);
                for i in 0..nx {
                    let d1 = grid::pick_upwind(mu[i], derivs.fwd[i], derivs.bwd[i]);
                    let src = spec.h1(t, grid.x(i), prev[i], z_prev[i], u[i]);
                    out[i] = explicit_update(prev[i], dt, mu[i], d1, sigma[i], derivs.d2[i], src);
                }
            }
            Stepper::Implicit => {
                implicit_step(
                    spec, grid, &mu, &sigma, &u, &prev, &z_prev, t, t_prev, j, &mut g,
                )?;
            }
        }

        if let Some(i) = g.slice(j).iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: j, node: i });
        }
        fill_z_slice(spec, policy, grid, &g, &mut z, j);
    }

    Ok((g, z))
}

/// Implicit advection/diffusion step: solves `(I - Δt L) g_j = g_{j+1} +
/// Δt h`, with `L` the upwinded advection plus central diffusion at time
/// `t_j`.  The boundary rows carry one-sided advection only; their
/// diffusion contribution is taken explicitly from the previous slice.
#[allow(clippy::too_many_arguments)]
fn implicit_step(
    spec: &ProblemSpec,
    grid: &GridSpec,
    mu: &[Real],
    sigma: &[Real],
    u: &[Real],
    prev: &[Real],
    z_prev: &[Real],
    t: Real,
    _t_prev: Real,
    j: usize,
    g: &mut Field,
) -> Result<()> {
    let nx = grid.nx;
    let dx = grid.dx();
    let dt = grid.dt();
    let mut sub = vec![0.0; nx];
    let mut diag = vec![0.0; nx];
    let mut sup = vec![0.0; nx];
    let mut rhs = vec![0.0; nx];
    let prev_d2 = grid::d2_central(prev, dx);

    for i in 0..nx {
        let s = 0.5 * sigma[i] * sigma[i];
        let h = spec.h1(t, grid.x(i), prev[i], z_prev[i], u[i]);
        rhs[i] = prev[i] + dt * h;
        if i == 0 {
            // One-sided advection into the interior; diffusion explicit.
            diag[i] = 1.0 + dt * mu[i] / dx;
            sup[i] = -dt * mu[i] / dx;
            rhs[i] += dt * s * prev_d2[i];
        } else if i == nx - 1 {
            diag[i] = 1.0 - dt * mu[i] / dx;
            sub[i] = dt * mu[i] / dx;
            rhs[i] += dt * s * prev_d2[i];
        } else {
            let (adv_sub, adv_diag, adv_sup) = if mu[i] >= 0.0 {
                (0.0, -mu[i] / dx, mu[i] / dx)
            } else {
                (-mu[i] / dx, mu[i] / dx, 0.0)
            };
            let dif = s / (dx * dx);
            sub[i] = -dt * (adv_sub + dif);
            diag[i] = 1.0 - dt * (adv_diag - 2.0 * dif);
            sup[i] = -dt * (adv_sup + dif);
        }
    }

    let solved = grid::solve_tridiagonal(&sub, &diag, &sup, &rhs)?;
    g.slice_mut(j).copy_from_slice(&solved);
    Ok(())
}

/// Computes `z(t_j, x) = σ*(t_j, x) ∂x g(t_j, x)` with the same upwind
/// stencil the marcher uses, so the stored `z` field is bit-identical to
/// re-deriving it from the returned `g`.
pub fn fill_z_slice(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    grid: &GridSpec,
    g: &Field,
    z: &mut Field,
    j: usize,
) {
    let t = grid.t(j);
    let dx = grid.dx();
    let derivs = grid::slice_derivs(g.slice(j), dx);
    for i in 0..grid.nx {
        let x = grid.x(i);
        let u = policy.value(t, x);
        let mu = spec.mu1(t, x, u);
        let sigma = spec.sigma1(t, x, u);
        let d1 = grid::pick_upwind(mu, derivs.fwd[i], derivs.bwd[i]);
        z.set(j, i, sigma * d1);
    }
}

/// Recomputes the `z` field from a solved `g` field; used to check the
/// stencil-consistency contract.
pub fn z_from_g(spec: &ProblemSpec, policy: &FeedbackPolicy, g: &Field) -> Field {
    let grid = g.grid;
    let mut z = Field::zeros(grid);
    for j in 0..=grid.nt {
        fill_z_slice(spec, policy, &grid, g, &mut z, j);
    }
    z
}

/// Sup-norm residual of the auxiliary equation over the inner domain,
/// using central differences in space and a forward difference in time —
/// stencils independent of the marching scheme.
pub fn residual_g(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    g: &Field,
    z: &Field,
    inner_fraction: Real,
) -> Real {
    let grid = g.grid;
    let dx = grid.dx();
    let dt = grid.dt();
    let range = grid.inner_range(inner_fraction);
    let mut worst: Real = 0.0;
    for j in 0..grid.nt {
        let t = grid.t(j);
        let slice = g.slice(j);
        for i in range.clone().filter(|&i| i > 0 && i + 1 < grid.nx) {
            let x = grid.x(i);
            let u = policy.value(t, x);
            let mu = spec.mu1(t, x, u);
            let sigma = spec.sigma1(t, x, u);
            let dtg = (g.at(j + 1, i) - g.at(j, i)) / dt;
            let d1 = (slice[i + 1] - slice[i - 1]) / (2.0 * dx);
            let d2 = (slice[i - 1] - 2.0 * slice[i] + slice[i + 1]) / (dx * dx);
            let r = dtg + mu * d1 + 0.5 * sigma * sigma * d2 + spec.h1(t, x, g.at(j, i), z.at(j, i), u);
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Largest sampled `|∂x g|`, reported as a smoothness diagnostic.
pub fn max_abs_dx(g: &Field) -> Real {
    let grid = g.grid;
    let dx = grid.dx();
    let mut worst: Real = 0.0;
    for j in 0..=grid.nt {
        let slice = g.slice(j);
        for i in 0..grid.nx - 1 {
            worst = worst.max(((slice[i + 1] - slice[i]) / dx).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::problem::{from_expressions, ControlBox, ExprCoefficients};
    use approx::assert_relative_eq;

    fn spec_1d(mu: &str, sigma: &str, h: &str, phi: &str) -> ProblemSpec {
        from_expressions(
            &ExprCoefficients {
                mu: mu.into(),
                sigma: sigma.into(),
                h: h.into(),
                f: "0".into(),
                phi: phi.into(),
                g_terminal: "0".into(),
                gamma: None,
                gamma_d1: None,
                gamma_d2: None,
            },
            1.0,
            ControlBox::scalar(0.0, 0.0),
            0.0,
        )
        .unwrap()
    }

    fn zero_policy() -> FeedbackPolicy {
        FeedbackPolicy::constant(0.0, 0.0, 1.0, -10.0, 10.0).unwrap()
    }

    #[test]
    fn driftless_martingale_is_exact() {
        // h = 0, phi = x, mu = 0, sigma = 1: g(t, x) = x and z = 1.
        let spec = spec_1d("0", "1", "0", "x");
        let grid = GridSpec::new(-5.0, 5.0, 41, 400, 0.0, 1.0).unwrap();
        let (g, z) = solve_g(&spec, &zero_policy(), &grid, Stepper::Explicit).unwrap();
        for j in 0..=grid.nt {
            for i in 0..grid.nx {
                assert_relative_eq!(g.at(j, i), grid.x(i), epsilon = 1e-10);
                assert_relative_eq!(z.at(j, i), 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn linear_driver_reproduces_exponential_decay() {
        // dY = Y dt + Z dB (h = -y), phi = 1, frozen forward:
        // g(t, x) = exp(t - T); at t = 0.5, T = 1: exp(-0.5).
        let spec = spec_1d("0", "0", "-y", "1");
        let grid = GridSpec::new(-1.0, 1.0, 11, 1000, 0.0, 1.0).unwrap();
        let (g, _) = solve_g(&spec, &zero_policy(), &grid, Stepper::Explicit).unwrap();
        let j = 500; // t = 0.5
        for i in 0..grid.nx {
            assert_relative_eq!(g.at(j, i), (-0.5f64).exp(), epsilon = 1e-3);
        }
        assert_relative_eq!(g.at(0, 5), (-1.0f64).exp(), epsilon = 1e-3);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let spec = spec_1d("0", "1", "0", "x");
        // dx = 0.05, dt = 0.1 -> sigma^2 dt / dx^2 = 40 >> 0.9.
        let grid = GridSpec::new(-1.0, 1.0, 41, 10, 0.0, 1.0).unwrap();
        let r = solve_g(&spec, &zero_policy(), &grid, Stepper::Explicit);
        assert!(matches!(r, Err(Error::CflViolated(_))));
        // The implicit stepper accepts the same grid.
        let (g, _) = solve_g(&spec, &zero_policy(), &grid, Stepper::Implicit).unwrap();
        assert_relative_eq!(g.at(0, 20), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn affine_data_stays_affine() {
        let spec = spec_1d("1", "2", "3", "2*x+1");
        let grid = GridSpec::new(-2.0, 2.0, 21, 800, 0.0, 1.0).unwrap();
        let (g, _) = solve_g(&spec, &zero_policy(), &grid, Stepper::Explicit).unwrap();
        for j in 0..=grid.nt {
            let s = g.slice(j);
            // Second differences vanish on every slice.
            for i in 1..grid.nx - 1 {
                assert_relative_eq!(s[i - 1] - 2.0 * s[i] + s[i + 1], 0.0, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn z_field_matches_rederivation_bitwise() {
        let spec = spec_1d("x", "1+0.1*x", "-y", "x^2");
        let grid = GridSpec::new(-2.0, 2.0, 31, 600, 0.0, 1.0).unwrap();
        let policy = zero_policy();
        let (g, z) = solve_g(&spec, &policy, &grid, Stepper::Explicit).unwrap();
        let z2 = z_from_g(&spec, &policy, &g);
        assert_eq!(z.values(), z2.values());
    }

    #[test]
    fn comparison_on_monotone_pairs() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let grid = GridSpec::new(-2.0, 2.0, 21, 400, 0.0, 1.0).unwrap();
        let policy = zero_policy();
        for _ in 0..20 {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(0.0..1.0);
            let c: f64 = rng.random_range(0.0..2.0);
            let spec1 = spec_1d("0.3", "0.5", &format!("{a}"), &format!("{a}*x")); // h1, phi1
            let spec2 = spec_1d(
                "0.3",
                "0.5",
                &format!("{a}+{b}"),
                &format!("{a}*x+{c}"),
            );
            let (g1, _) = solve_g(&spec1, &policy, &grid, Stepper::Explicit).unwrap();
            let (g2, _) = solve_g(&spec2, &policy, &grid, Stepper::Explicit).unwrap();
            for (v1, v2) in g1.values().iter().zip(g2.values()) {
                assert!(v1 <= &(v2 + 1e-12));
            }
        }
    }

    #[test]
    fn implicit_matches_explicit_on_smooth_problem() {
        let spec = spec_1d("0.2*x", "0.5", "-0.5*y", "x^2");
        let grid = GridSpec::new(-2.0, 2.0, 41, 800, 0.0, 1.0).unwrap();
        let policy = zero_policy();
        let (ge, _) = solve_g(&spec, &policy, &grid, Stepper::Explicit).unwrap();
        let (gi, _) = solve_g(&spec, &policy, &grid, Stepper::Implicit).unwrap();
        let range = grid.inner_range(0.6);
        for j in 0..=grid.nt {
            for i in range.clone() {
                assert_relative_eq!(ge.at(j, i), gi.at(j, i), epsilon = 2e-2);
            }
        }
    }
}
