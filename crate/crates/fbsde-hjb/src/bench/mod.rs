//! Ground-truth problems: the exponential-utility portfolio benchmark
//! with its closed-form solution and ODE cross-check, the mean–variance
//! instance, and the piecewise-linear viscosity fixture.

pub mod viscosity;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::mc::{self, YzSource};
use crate::policy::FeedbackPolicy;
use crate::problem::{self, ControlBox, ExprCoefficients, ProblemSpec};
use crate::scalar::Scalar;
use crate::Real;

/// Market and preference parameters for the exponential-utility
/// portfolio problem: bond rate `r`, stock drift `mu` and volatility
/// `sigma`, risk aversion `gamma`, horizon `T`.
#[derive(Debug, Clone, Copy)]
pub struct UtilityBenchmarkParams<S> {
    pub r: S,
    pub mu: S,
    pub sigma: S,
    pub gamma: S,
    pub horizon: S,
}

impl<S: Scalar> UtilityBenchmarkParams<S> {
    pub fn new(r: S, mu: S, sigma: S, gamma: S, horizon: S) -> Result<Self> {
        let ok = r > S::zero()
            && sigma > S::zero()
            && gamma > S::zero()
            && horizon > S::zero()
            && mu.is_finite();
        if !ok {
            return Err(Error::InvalidArgument(
                "need r > 0, sigma > 0, gamma > 0, horizon > 0, finite mu".into(),
            ));
        }
        Ok(UtilityBenchmarkParams {
            r,
            mu,
            sigma,
            gamma,
            horizon,
        })
    }

    /// Market price of risk `β = (μ − r)/σ`.
    pub fn beta(&self) -> S {
        (self.mu - self.r) / self.sigma
    }

    /// The optimal dollar position at the horizon,
    /// `π*(T) = (μ − r)/(γσ²)` — also the largest value `π*` takes on
    /// `[0, T]` when `μ ≥ r`.
    pub fn pi_terminal(&self) -> S {
        (self.mu - self.r) / (self.gamma * self.sigma * self.sigma)
    }
}

impl UtilityBenchmarkParams<Real> {
    /// Conventional desk-scale defaults: r=0.05, μ=0.1, σ=0.2, γ=1, T=1.
    pub fn defaults() -> Self {
        UtilityBenchmarkParams {
            r: 0.05,
            mu: 0.1,
            sigma: 0.2,
            gamma: 1.0,
            horizon: 1.0,
        }
    }
}

/// Closed-form solution pieces at one `(t, x)`.
#[derive(Debug, Clone, Copy)]
pub struct ClosedForm<S> {
    pub a: S,
    pub b: S,
    pub c: S,
    pub d: S,
    /// The maximized value `v(t,x) = −(1/γ)e^{A(t)x}B(t)` (reward sign;
    /// the minimizing solver's value is its negation).
    pub v: S,
    /// Auxiliary field `g(t,x) = C(t)x + D(t)`.
    pub g: S,
    /// Optimal dollar position `π*(t,x) = (μ−r)e^{r(t−T)}/(γσ²)`.
    pub pi_star: S,
}

/// Evaluates the closed forms
/// `A(t) = −γe^{−r(t−T)}`, `C(t) = e^{−r(t−T)}`, `D(t) = β²(T−t)/γ`,
/// `B(t) = e^{β²(t−T)/2} + (2/β²)(e^{β²(t−T)/2} − e^{β²(t−T)})`.
///
/// The B-integral `∫_t^T e^{β²(t+s−2T)/2} ds` has antiderivative
/// `(2/β²)e^{β²(t+s−2T)/2}` in `s`, which evaluates to the difference of
/// exponentials above; for `β = 0` the integrand is 1 and the limit is
/// `B(t) = 1 + (T − t)`.
pub fn closed_form<S: Scalar>(
    params: &UtilityBenchmarkParams<S>,
    t: S,
    x: S,
) -> Result<ClosedForm<S>> {
    let tt = params.horizon;
    if t < S::zero() || t > tt {
        return Err(Error::InvalidArgument(format!(
            "t = {t} outside [0, {tt}]"
        )));
    }
    let beta = params.beta();
    let b2 = beta * beta;
    let gamma = params.gamma;
    let dt = t - tt; // <= 0

    let c = (-params.r * dt).exp();
    let a = -gamma * c;
    let d = b2 * (tt - t) / gamma;
    let b = if beta == S::zero() {
        S::one() + (tt - t)
    } else {
        let half = S::from_f64_lossy(0.5);
        let e_half = (half * b2 * dt).exp();
        let e_full = (b2 * dt).exp();
        e_half + S::two() / b2 * (e_half - e_full)
    };
    let v = -(a * x).exp() * b / gamma;
    let g = c * x + d;
    let pi_star = (params.mu - params.r) * (params.r * dt).exp()
        / (gamma * params.sigma * params.sigma);
    Ok(ClosedForm {
        a,
        b,
        c,
        d,
        v,
        g,
        pi_star,
    })
}

/// ODE solutions sampled on a uniform time mesh (ascending `t`).
#[derive(Debug, Clone)]
pub struct OdeMesh {
    pub t: Vec<Real>,
    pub a: Vec<Real>,
    pub b: Vec<Real>,
    pub c: Vec<Real>,
    pub d: Vec<Real>,
}

/// Integrates the coefficient ODEs
/// `C′ = −rC`, `D′ = −β²/γ`, `B′ = ½β²B − e^{−γD}`, `A = −γC`
/// backward from the terminal data `C(T)=1, D(T)=0, B(T)=1` with
/// classical fourth-order Runge–Kutta.
pub fn integrate_odes(
    params: &UtilityBenchmarkParams<Real>,
    steps: usize,
) -> Result<OdeMesh> {
    if steps < 10 {
        return Err(Error::InvalidArgument(
            "ODE mesh needs at least 10 steps".into(),
        ));
    }
    let tt = params.horizon;
    let b2 = params.beta() * params.beta();
    let gamma = params.gamma;
    let r = params.r;
    // State (B, C, D); the right-hand side in forward time t.
    let rhs = |state: [Real; 3]| -> [Real; 3] {
        let [b, c, d] = state;
        let _ = c;
        [0.5 * b2 * b - (-gamma * d).exp(), -r * c, -b2 / gamma]
    };

    let h = tt / steps as Real;
    let mut t = vec![0.0; steps + 1];
    let mut bm = vec![0.0; steps + 1];
    let mut cm = vec![0.0; steps + 1];
    let mut dm = vec![0.0; steps + 1];
    t[steps] = tt;
    bm[steps] = 1.0;
    cm[steps] = 1.0;
    dm[steps] = 0.0;

    let mut state = [1.0, 1.0, 0.0];
    for i in (0..steps).rev() {
        // One RK4 step of size −h (marching toward t = 0).
        let step = -h;
        let add = |s: [Real; 3], k: [Real; 3], w: Real| {
            [s[0] + w * k[0], s[1] + w * k[1], s[2] + w * k[2]]
        };
        let k1 = rhs(state);
        let k2 = rhs(add(state, k1, 0.5 * step));
        let k3 = rhs(add(state, k2, 0.5 * step));
        let k4 = rhs(add(state, k3, step));
        for j in 0..3 {
            state[j] += step / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        t[i] = i as Real * h;
        bm[i] = state[0];
        cm[i] = state[1];
        dm[i] = state[2];
    }

    let am = cm.iter().map(|&c| -gamma * c).collect();
    Ok(OdeMesh {
        t,
        a: am,
        b: bm,
        c: cm,
        d: dm,
    })
}

/// Largest pointwise gap between the RK4 mesh and the printed closed
/// form of `B`; reported (not asserted) so any disagreement between the
/// two derivations is visible in benchmark output.
pub fn printed_b_discrepancy(
    params: &UtilityBenchmarkParams<Real>,
    steps: usize,
) -> Result<Real> {
    let mesh = integrate_odes(params, steps)?;
    let mut worst: Real = 0.0;
    for (i, &t) in mesh.t.iter().enumerate() {
        let cf = closed_form(params, t, 0.0)?;
        worst = worst.max((mesh.b[i] - cf.b).abs());
    }
    Ok(worst)
}

/// Builds the utility benchmark as a minimization problem.
///
/// The market reward `J = 𝔼[∫ −(1/γ)e^{−γY} ds − (1/γ)e^{−γX_T}]` is
/// maximized; the solver minimizes, so `f` and `G` are negated here and
/// the solved value is the negation of the closed-form `v`.  The optimal
/// policy is unchanged.  Controls are dollar positions in
/// `[0, 2π*(T)]` by default.
pub fn utility_problem(
    params: &UtilityBenchmarkParams<Real>,
    control: Option<ControlBox>,
    lipschitz_k: Real,
) -> Result<ProblemSpec> {
    let control = match control {
        Some(c) => c,
        None => ControlBox::scalar(0.0, 2.0 * params.pi_terminal().max(0.0)),
    };
    let r = params.r;
    let excess = params.mu - params.r;
    let sigma = params.sigma;
    let gamma = params.gamma;
    problem::from_expressions(
        &ExprCoefficients {
            mu: format!("({r})*x + ({excess})*u"),
            sigma: format!("({sigma})*u"),
            h: "0".into(),
            f: format!("exp(-({gamma})*y)/({gamma})"),
            phi: "x".into(),
            g_terminal: format!("exp(-({gamma})*x)/({gamma})"),
            gamma: None,
            gamma_d1: None,
            gamma_d2: None,
        },
        params.horizon,
        control,
        lipschitz_k,
    )
}

/// Default wealth window for the benchmark: `x0 ± 6σ√T·π̄` with `π̄` the
/// largest admissible position, so the state stays far from the
/// truncation boundary at the stated path probabilities.
pub fn default_grid(
    params: &UtilityBenchmarkParams<Real>,
    x0: Real,
    nx: usize,
    nt: usize,
) -> Result<GridSpec> {
    let pi_bar = 2.0 * params.pi_terminal().max(0.0);
    let half_width = (6.0 * params.sigma * params.horizon.sqrt() * pi_bar).max(1.0);
    GridSpec::new(
        x0 - half_width,
        x0 + half_width,
        nx,
        nt,
        0.0,
        params.horizon,
    )
}

/// The closed-form optimal policy `π*(t)` sampled on a grid lattice.
pub fn closed_form_policy(
    params: &UtilityBenchmarkParams<Real>,
    grid: &GridSpec,
    lipschitz_k: Real,
) -> Result<FeedbackPolicy> {
    let t_knots: Vec<Real> = (0..=grid.nt).map(|j| grid.t(j)).collect();
    let x_nodes: Vec<Real> = (0..grid.nx).map(|i| grid.x(i)).collect();
    FeedbackPolicy::from_fn(t_knots, x_nodes, lipschitz_k, |t, _| {
        (params.mu - params.r) * (params.r * (t - params.horizon)).exp()
            / (params.gamma * params.sigma * params.sigma)
    })
}

/// Parameters of the mean–variance instance: `dX = c·X dt + σ dB`,
/// cost `Var(X_T)` expressed through the nonlinear terminal term
/// `γ(y) = −y²` on the conditional mean.
#[derive(Debug, Clone, Copy)]
pub struct MeanVarParams {
    /// Linear drift coefficient `c` (0 switches the drift off).
    pub drift: Real,
    pub sigma: Real,
    pub x0: Real,
    pub horizon: Real,
}

impl Default for MeanVarParams {
    fn default() -> Self {
        MeanVarParams {
            drift: 0.1,
            sigma: 0.2,
            x0: 1.0,
            horizon: 1.0,
        }
    }
}

/// The uncontrolled mean–variance problem before the gamma transform:
/// `Φ(x) = x` (so `Y` is the conditional mean of `X_T`), terminal cost
/// `x²`, and `γ(y) = −y²`, giving total cost
/// `𝔼[X_T²] − (𝔼X_T)² = Var(X_T)`.
pub fn meanvar_problem(params: &MeanVarParams) -> Result<ProblemSpec> {
    problem::from_expressions(
        &ExprCoefficients {
            mu: format!("({})*x", params.drift),
            sigma: format!("{}", params.sigma),
            h: "0".into(),
            f: "0".into(),
            phi: "x".into(),
            g_terminal: "x*x".into(),
            gamma: Some("-(y*y)".into()),
            gamma_d1: Some("-2*y".into()),
            gamma_d2: Some("-2".into()),
        },
        params.horizon,
        ControlBox::scalar(0.0, 0.0),
        0.0,
    )
}

/// The two independent variance estimators and their disagreement.
#[derive(Debug, Clone, Copy)]
pub struct MeanVarReport {
    /// Direct estimator `𝔼[(X_T − 𝔼X_T)²]` with its standard error.
    pub direct: Real,
    pub direct_se: Real,
    /// Transformed-cost estimator `𝔼[∫ Z² ds]` with its standard error.
    pub transformed: Real,
    pub transformed_se: Real,
    /// `|direct − transformed|` in units of the combined standard error.
    pub gap_in_se: Real,
}

/// Estimates `Var(X_T)` two ways from independent seeds: directly from
/// terminal samples, and through the gamma-transformed running cost
/// `∫ Z² ds` with regression-based `Z`.
pub fn meanvar_check(
    params: &MeanVarParams,
    paths: usize,
    nt: usize,
    degree: usize,
    seed: u64,
) -> Result<MeanVarReport> {
    let spec = meanvar_problem(params)?;
    let policy = FeedbackPolicy::constant(0.0, 0.0, params.horizon, -1.0, 1.0)?;

    // Direct estimator from terminal samples.
    let ens = mc::simulate_forward(&spec, &policy, 0.0, params.x0, nt, paths, seed)?;
    let terminal: Vec<Real> = (0..paths).map(|p| ens.x_at(p, nt)).collect();
    let mean = terminal.iter().sum::<Real>() / paths as Real;
    let centered: Vec<Real> = terminal.iter().map(|x| (x - mean) * (x - mean)).collect();
    let direct = centered.iter().sum::<Real>() / paths as Real;
    let m4 = centered
        .iter()
        .map(|s| (s - direct) * (s - direct))
        .sum::<Real>()
        / paths as Real;
    let direct_se = (m4 / paths as Real).sqrt();

    // Transformed estimator from an independent seed.
    let transformed_spec = problem::transform_gamma(&spec)?;
    let est = mc::estimate_cost(
        &transformed_spec,
        &policy,
        0.0,
        params.x0,
        nt,
        paths,
        seed ^ 0x9e37_79b9_7f4a_7c15,
        YzSource::Regression { degree },
    )?;

    let combined = (direct_se * direct_se + est.std_err * est.std_err).sqrt();
    Ok(MeanVarReport {
        direct,
        direct_se,
        transformed: est.mean,
        transformed_se: est.std_err,
        gap_in_se: (direct - est.mean).abs() / combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn defaults() -> UtilityBenchmarkParams<Real> {
        UtilityBenchmarkParams::defaults()
    }

    #[test]
    fn terminal_values_match_the_boundary_data() {
        let p = defaults();
        let cf = closed_form(&p, 1.0, 0.3).unwrap();
        assert_eq!(cf.a, -1.0);
        assert_eq!(cf.b, 1.0);
        assert_eq!(cf.c, 1.0);
        assert_eq!(cf.d, 0.0);
        assert_relative_eq!(cf.pi_star, 1.25, epsilon = 1e-14);
    }

    #[test]
    fn time_zero_values_match_independent_evaluation() {
        let p = defaults();
        let cf = closed_form(&p, 0.0, 1.0).unwrap();
        assert_relative_eq!(p.beta(), 0.25, epsilon = 1e-12);
        assert_relative_eq!(cf.c, (0.05f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(cf.c, 1.051271, epsilon = 1e-6);
        assert_relative_eq!(cf.d, 0.0625, epsilon = 1e-12);
        assert_relative_eq!(cf.pi_star, 1.25 * (-0.05f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(cf.pi_star, 1.1890368, epsilon = 1e-6);
        assert_relative_eq!(cf.g, cf.c * 1.0 + cf.d, epsilon = 1e-15);
    }

    #[test]
    fn zero_risk_premium_degenerates() {
        let p = UtilityBenchmarkParams::new(0.05, 0.05, 0.2, 1.0, 1.0).unwrap();
        let cf = closed_form(&p, 0.3, 2.0).unwrap();
        assert_eq!(cf.d, 0.0);
        assert_eq!(cf.pi_star, 0.0);
        assert_relative_eq!(cf.b, 1.0 + 0.7, epsilon = 1e-15);
        assert_relative_eq!(cf.g, (0.05f64 * 0.7).exp() * 2.0, epsilon = 1e-14);
    }

    #[test]
    fn closed_form_rejects_times_outside_horizon() {
        let p = defaults();
        assert!(closed_form(&p, -0.1, 0.0).is_err());
        assert!(closed_form(&p, 1.1, 0.0).is_err());
    }

    #[test]
    fn rk4_matches_closed_form() {
        let p = defaults();
        let mesh = integrate_odes(&p, 1000).unwrap();
        for (i, &t) in mesh.t.iter().enumerate() {
            let cf = closed_form(&p, t, 0.0).unwrap();
            assert_relative_eq!(mesh.a[i], cf.a, epsilon = 1e-8);
            assert_relative_eq!(mesh.b[i], cf.b, epsilon = 1e-8);
            assert_relative_eq!(mesh.c[i], cf.c, epsilon = 1e-8);
            assert_relative_eq!(mesh.d[i], cf.d, epsilon = 1e-8);
        }
        assert_relative_eq!(mesh.c[0], (0.05f64).exp(), epsilon = 1e-8);
        assert!(printed_b_discrepancy(&p, 1000).unwrap() <= 1e-8);
    }

    #[test]
    fn rk4_beta_zero_gives_linear_b() {
        let p = UtilityBenchmarkParams::new(0.05, 0.05, 0.2, 1.0, 1.0).unwrap();
        let mesh = integrate_odes(&p, 200).unwrap();
        for (i, &t) in mesh.t.iter().enumerate() {
            assert_relative_eq!(mesh.b[i], 1.0 + (1.0 - t), epsilon = 1e-10);
            assert_relative_eq!(mesh.d[i], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn closed_form_satisfies_the_odes_analytically() {
        // Residuals with analytic derivatives at random times:
        // C' + rC, D' + beta^2/gamma, B' - beta^2 B/2 + exp(-gamma D),
        // A + gamma C.
        let p = defaults();
        let b2 = p.beta() * p.beta();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let t: Real = rng.random_range(0.0..1.0);
            let cf = closed_form(&p, t, 0.0).unwrap();
            let dt = t - p.horizon;
            let c_prime = -p.r * (-p.r * dt).exp();
            let d_prime = -b2 / p.gamma;
            // From the closed form: B' = beta^2 B/2 - e^{beta^2 (t-T)}.
            let b_prime = 0.5 * b2 * cf.b - (b2 * dt).exp();
            assert!((c_prime + p.r * cf.c).abs() <= 1e-9);
            assert!((d_prime + b2 / p.gamma).abs() <= 1e-9);
            assert!(
                (b_prime - 0.5 * b2 * cf.b + (-p.gamma * cf.d).exp()).abs() <= 1e-9
            );
            assert!((cf.a + p.gamma * cf.c).abs() <= 1e-9);
        }
    }

    #[test]
    fn g_ansatz_satisfies_the_auxiliary_equation() {
        // dt g + [rx + (mu - r) pi*] dx g + 0 = 0 with g = C x + D:
        // C'x + D' + (rx + (mu - r) pi*) C = 0 analytically.
        let p = defaults();
        let b2 = p.beta() * p.beta();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let t: Real = rng.random_range(0.0..1.0);
            let x: Real = rng.random_range(-2.0..4.0);
            let cf = closed_form(&p, t, x).unwrap();
            let c_prime = -p.r * cf.c;
            let d_prime = -b2 / p.gamma;
            let residual = c_prime * x
                + d_prime
                + (p.r * x + (p.mu - p.r) * cf.pi_star) * cf.c;
            assert!(residual.abs() <= 1e-9, "residual {residual} at ({t}, {x})");
        }
    }

    #[test]
    fn pi_star_is_independent_of_x() {
        let p = defaults();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let base = closed_form(&p, 0.4, 0.0).unwrap().pi_star;
        for _ in 0..20 {
            let x: Real = rng.random_range(-5.0..5.0);
            assert_eq!(closed_form(&p, 0.4, x).unwrap().pi_star, base);
        }
    }

    #[test]
    fn utility_problem_evaluates_the_negated_reward() {
        let p = defaults();
        let spec = utility_problem(&p, None, 5.0).unwrap();
        assert_relative_eq!(spec.control.upper[0], 2.5, epsilon = 1e-12);
        // f(y) = e^{-y} at y = 0 is 1 (gamma = 1), independent of u.
        assert_relative_eq!(spec.f1(0.0, 0.0, 0.0, 0.0, 1.0), 1.0, epsilon = 1e-15);
        // mu(t, x, u) = 0.05 x + 0.05 u.
        assert_relative_eq!(spec.mu1(0.0, 2.0, 1.0), 0.15, epsilon = 1e-15);
        assert_relative_eq!(spec.sigma1(0.0, 2.0, 1.0), 0.2, epsilon = 1e-15);
        assert_relative_eq!(spec.phi1(0.7), 0.7, epsilon = 1e-15);
        assert_relative_eq!(spec.g_terminal1(0.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn default_grid_brackets_the_start_point() {
        let p = defaults();
        let grid = default_grid(&p, 1.0, 201, 800).unwrap();
        assert_relative_eq!(grid.x_lo, -2.0, epsilon = 1e-12);
        assert_relative_eq!(grid.x_hi, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn meanvar_transform_produces_z_squared_running_cost() {
        let params = MeanVarParams::default();
        let spec = meanvar_problem(&params).unwrap();
        let transformed = crate::problem::transform_gamma(&spec).unwrap();
        // f_new = 0 + 0*gamma' - z^2/2 * (-2) = z^2.
        assert_relative_eq!(
            transformed.f1(0.2, 0.5, 0.3, 0.7, 0.0),
            0.49,
            epsilon = 1e-12
        );
        // G_new = x^2 + gamma(x) = 0.
        assert_relative_eq!(transformed.g_terminal1(1.3), 0.0, epsilon = 1e-12);
    }
}
