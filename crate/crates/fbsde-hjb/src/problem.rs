//! Problem definitions: coefficient functions, the control class, the
//! cost-functional transform absorbing a nonlinear terminal term, and
//! sampled regularity checkers.

use crate::error::{Error, Result};
use crate::expr::{self, Env, ExprAst};
use crate::policy::FeedbackPolicy;
use crate::Real;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

/// State, noise, and control dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub k: usize,
}

/// Axis-aligned control domain in `R^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    pub lower: Vec<Real>,
    pub upper: Vec<Real>,
}

impl ControlBox {
    pub fn scalar(lo: Real, hi: Real) -> Self {
        ControlBox {
            lower: vec![lo],
            upper: vec![hi],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn midpoint(&self) -> Vec<Real> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, u: &[Real]) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, h))| v >= l && v <= h)
    }
}

/// Vector coefficient `(t, x, u) -> out` (drift writes `n` values,
/// volatility writes `n * m` values row-major).
pub type VectorCoef = Arc<dyn Fn(Real, &[Real], &[Real], &mut [Real]) + Send + Sync>;
/// Scalar coefficient `(t, x, y, z, u) -> value` (the driver `h` and the
/// running cost `f`).
pub type DriverCoef = Arc<dyn Fn(Real, &[Real], Real, &[Real], &[Real]) -> Real + Send + Sync>;
/// Terminal condition `x -> value`.
pub type TerminalCoef = Arc<dyn Fn(&[Real]) -> Real + Send + Sync>;
/// Scalar function of `y`, used by the nonlinear terminal transform.
pub type YFn = Arc<dyn Fn(Real) -> Real + Send + Sync>;

/// Nonlinear terminal term with optional analytic derivatives.  Missing
/// derivatives fall back to central differences with step `1e-5`.
#[derive(Clone)]
pub struct GammaSpec {
    pub value: YFn,
    pub d1: Option<YFn>,
    pub d2: Option<YFn>,
}

const GAMMA_FD_STEP: Real = 1e-5;

impl GammaSpec {
    pub fn d1_at(&self, y: Real) -> Real {
        match &self.d1 {
            Some(f) => f(y),
            None => ((self.value)(y + GAMMA_FD_STEP) - (self.value)(y - GAMMA_FD_STEP))
                / (2.0 * GAMMA_FD_STEP),
        }
    }

    pub fn d2_at(&self, y: Real) -> Real {
        match &self.d2 {
            Some(f) => f(y),
            None => {
                ((self.value)(y + GAMMA_FD_STEP) - 2.0 * (self.value)(y)
                    + (self.value)(y - GAMMA_FD_STEP))
                    / (GAMMA_FD_STEP * GAMMA_FD_STEP)
            }
        }
    }
}

impl std::fmt::Debug for GammaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GammaSpec")
            .field("analytic_d1", &self.d1.is_some())
            .field("analytic_d2", &self.d2.is_some())
            .finish()
    }
}

/// Full description of a control problem.
///
/// Coefficient closures must be pure and reentrant; the spec is immutable
/// after construction and freely sharable across threads.
#[derive(Clone)]
pub struct ProblemSpec {
    pub dims: Dims,
    pub horizon: Real,
    pub mu: VectorCoef,
    pub sigma: VectorCoef,
    pub h: DriverCoef,
    pub f: DriverCoef,
    pub phi: TerminalCoef,
    pub g_terminal: TerminalCoef,
    pub gamma: Option<GammaSpec>,
    pub control: ControlBox,
    pub lipschitz_k: Real,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dims", &self.dims)
            .field("horizon", &self.horizon)
            .field("control", &self.control)
            .field("lipschitz_k", &self.lipschitz_k)
            .field("gamma", &self.gamma)
            .finish()
    }
}

impl ProblemSpec {
    /// Validates the structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.horizon <= 0.0 || !self.horizon.is_finite() {
            return Err(Error::InvalidProblem("horizon T must be positive".into()));
        }
        if self.dims.n < 1 || self.dims.m < 1 || self.dims.k < 1 {
            return Err(Error::InvalidProblem("all dimensions must be >= 1".into()));
        }
        if self.control.lower.len() != self.dims.k || self.control.upper.len() != self.dims.k {
            return Err(Error::InvalidProblem(
                "control box dimension does not match k".into(),
            ));
        }
        if self
            .control
            .lower
            .iter()
            .zip(&self.control.upper)
            .any(|(l, u)| l > u)
        {
            return Err(Error::InvalidProblem(
                "control box must satisfy lower <= upper per coordinate".into(),
            ));
        }
        if self.lipschitz_k < 0.0 || !self.lipschitz_k.is_finite() {
            return Err(Error::InvalidProblem(
                "policy Lipschitz constant must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Scalar drift for 1-D problems.
    pub fn mu1(&self, t: Real, x: Real, u: Real) -> Real {
        debug_assert_eq!(self.dims.n, 1);
        let mut out = [0.0];
        (self.mu)(t, &[x], &[u], &mut out);
        out[0]
    }

    /// Scalar volatility for 1-D problems.
    pub fn sigma1(&self, t: Real, x: Real, u: Real) -> Real {
        debug_assert_eq!(self.dims.n, 1);
        debug_assert_eq!(self.dims.m, 1);
        let mut out = [0.0];
        (self.sigma)(t, &[x], &[u], &mut out);
        out[0]
    }

    pub fn h1(&self, t: Real, x: Real, y: Real, z: Real, u: Real) -> Real {
        (self.h)(t, &[x], y, &[z], &[u])
    }

    pub fn f1(&self, t: Real, x: Real, y: Real, z: Real, u: Real) -> Real {
        (self.f)(t, &[x], y, &[z], &[u])
    }

    pub fn phi1(&self, x: Real) -> Real {
        (self.phi)(&[x])
    }

    pub fn g_terminal1(&self, x: Real) -> Real {
        (self.g_terminal)(&[x])
    }

    pub fn is_one_dimensional(&self) -> bool {
        self.dims.n == 1 && self.dims.m == 1 && self.dims.k == 1
    }
}

/// Expression sources for a 1-D problem.
#[derive(Debug, Clone)]
pub struct ExprCoefficients {
    pub mu: String,
    pub sigma: String,
    pub h: String,
    pub f: String,
    pub phi: String,
    pub g_terminal: String,
    pub gamma: Option<String>,
    pub gamma_d1: Option<String>,
    pub gamma_d2: Option<String>,
}

/// Parses a coefficient expression, restricting variables to `allowed`.
///
/// Thin wrapper over the expression parser so problem construction and
/// direct use share one entry point.
pub fn parse_coefficient(source: &str, allowed: &[expr::Var]) -> Result<ExprAst> {
    expr::parse(source, allowed)
}

/// Builds a 1-D problem from expression text.
pub fn from_expressions(
    coefs: &ExprCoefficients,
    horizon: Real,
    control: ControlBox,
    lipschitz_k: Real,
) -> Result<ProblemSpec> {
    use expr::{ALL_VARS, TXU, X_ONLY, Y_ONLY};
    if control.dim() != 1 {
        return Err(Error::InvalidProblem(
            "expression problems are scalar-control (k = 1)".into(),
        ));
    }
    let mu = parse_coefficient(&coefs.mu, &TXU)?;
    let sigma = parse_coefficient(&coefs.sigma, &TXU)?;
    let h = parse_coefficient(&coefs.h, &ALL_VARS)?;
    let f = parse_coefficient(&coefs.f, &ALL_VARS)?;
    let phi = parse_coefficient(&coefs.phi, &X_ONLY)?;
    let g_terminal = parse_coefficient(&coefs.g_terminal, &X_ONLY)?;

    let gamma = match &coefs.gamma {
        Some(src) => {
            let value = parse_coefficient(src, &Y_ONLY)?;
            let d1 = coefs
                .gamma_d1
                .as_deref()
                .map(|s| parse_coefficient(s, &Y_ONLY))
                .transpose()?;
            let d2 = coefs
                .gamma_d2
                .as_deref()
                .map(|s| parse_coefficient(s, &Y_ONLY))
                .transpose()?;
            Some(GammaSpec {
                value: y_fn(value),
                d1: d1.map(y_fn),
                d2: d2.map(y_fn),
            })
        }
        None => None,
    };

    let spec = ProblemSpec {
        dims: Dims { n: 1, m: 1, k: 1 },
        horizon,
        mu: vector_coef(mu),
        sigma: vector_coef(sigma),
        h: driver_coef(h),
        f: driver_coef(f),
        phi: terminal_coef(phi),
        g_terminal: terminal_coef(g_terminal),
        gamma,
        control,
        lipschitz_k,
    };
    spec.validate()?;
    Ok(spec)
}

fn vector_coef(ast: ExprAst) -> VectorCoef {
    Arc::new(move |t, x, u, out| {
        out[0] = ast.eval(&Env::new(t, x[0], 0.0, 0.0, u[0]));
    })
}

fn driver_coef(ast: ExprAst) -> DriverCoef {
    Arc::new(move |t, x, y, z, u| ast.eval(&Env::new(t, x[0], y, z[0], u[0])))
}

fn terminal_coef(ast: ExprAst) -> TerminalCoef {
    Arc::new(move |x| ast.eval(&Env::new(0.0, x[0], 0.0, 0.0, 0.0)))
}

fn y_fn(ast: ExprAst) -> YFn {
    Arc::new(move |y| ast.eval(&Env::new(0.0, 0.0, y, 0.0, 0.0)))
}

/// Absorbs the nonlinear terminal term into the running and terminal
/// costs: the running cost gains `h * gamma'(y) - (z z^T / 2) gamma''(y)`
/// and the terminal cost gains `gamma(phi(x))`; the returned problem has
/// no gamma term.
pub fn transform_gamma(spec: &ProblemSpec) -> Result<ProblemSpec> {
    let gamma = spec.gamma.clone().ok_or(Error::MissingGamma)?;
    let f = spec.f.clone();
    let h = spec.h.clone();
    let g_terminal = spec.g_terminal.clone();
    let phi = spec.phi.clone();

    let gamma_f = gamma.clone();
    let new_f: DriverCoef = Arc::new(move |t, x, y, z, u| {
        let zz: Real = z.iter().map(|v| v * v).sum();
        f(t, x, y, z, u) + h(t, x, y, z, u) * gamma_f.d1_at(y) - 0.5 * zz * gamma_f.d2_at(y)
    });
    let new_g: TerminalCoef = Arc::new(move |x| g_terminal(x) + (gamma.value)(phi(x)));

    let mut out = spec.clone();
    out.f = new_f;
    out.g_terminal = new_g;
    out.gamma = None;
    Ok(out)
}

/// Pass/fail constants for the sampled regularity checks.
#[derive(Debug, Clone, Copy)]
pub struct AssumptionThresholds {
    /// Bound on sampled Lipschitz difference quotients.
    pub lipschitz_c: Real,
    /// Bound on sampled linear-growth ratios.
    pub growth_c: Real,
    /// Bound on `(V[u(., x)] + sup_s |u(s, 0)|) / (1 + |x|)`.
    pub total_variation_c: Real,
}

impl Default for AssumptionThresholds {
    fn default() -> Self {
        AssumptionThresholds {
            lipschitz_c: 10.0,
            growth_c: 10.0,
            total_variation_c: 10.0,
        }
    }
}

/// Sampled estimate plus its pass flag.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: Real,
    pub passes: bool,
}

/// Result of [`check_assumptions`]: sampled suprema of difference
/// quotients and growth ratios per coefficient, and the total-variation
/// estimate of a supplied policy.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub lipschitz_mu: Estimate,
    pub lipschitz_sigma: Estimate,
    pub lipschitz_h: Estimate,
    pub lipschitz_phi: Estimate,
    pub growth_mu: Estimate,
    pub growth_sigma: Estimate,
    pub growth_h: Estimate,
    pub growth_phi: Estimate,
    /// `max_x (V[u(., x)] + sup_s |u(s, 0)|) / (1 + |x|)` over sampled x.
    pub policy_variation: Option<Estimate>,
    pub budget: usize,
    pub seed: u64,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        let coef = [
            self.lipschitz_mu,
            self.lipschitz_sigma,
            self.lipschitz_h,
            self.lipschitz_phi,
            self.growth_mu,
            self.growth_sigma,
            self.growth_h,
            self.growth_phi,
        ];
        coef.iter().all(|e| e.passes) && self.policy_variation.map(|e| e.passes).unwrap_or(true)
    }
}

/// Half-width of the sampling box for `x`, `y`, `z`.
const SAMPLE_BOX: Real = 10.0;

#[derive(Debug, Clone, Copy, Default)]
struct SampleMax {
    lip_mu: Real,
    lip_sigma: Real,
    lip_h: Real,
    lip_phi: Real,
    gro_mu: Real,
    gro_sigma: Real,
    gro_h: Real,
    gro_phi: Real,
}

impl SampleMax {
    fn merge(self, o: SampleMax) -> SampleMax {
        SampleMax {
            lip_mu: self.lip_mu.max(o.lip_mu),
            lip_sigma: self.lip_sigma.max(o.lip_sigma),
            lip_h: self.lip_h.max(o.lip_h),
            lip_phi: self.lip_phi.max(o.lip_phi),
            gro_mu: self.gro_mu.max(o.gro_mu),
            gro_sigma: self.gro_sigma.max(o.gro_sigma),
            gro_h: self.gro_h.max(o.gro_h),
            gro_phi: self.gro_phi.max(o.gro_phi),
        }
    }
}

/// Monte Carlo check of the Lipschitz, linear-growth, and (for a supplied
/// policy) total-variation conditions.
///
/// Sampling is counter-based: sample `i` draws from an independent RNG
/// stream derived from `(seed, i)`, so the report does not depend on how
/// the budget is partitioned across workers.
pub fn check_assumptions(
    spec: &ProblemSpec,
    policy: Option<&FeedbackPolicy>,
    budget: usize,
    seed: u64,
    thresholds: &AssumptionThresholds,
) -> Result<AssumptionReport> {
    if budget < 100 {
        return Err(Error::InvalidArgument(
            "assumption check budget must be at least 100".into(),
        ));
    }
    spec.validate()?;

    let max = (0..budget)
        .into_par_iter()
        .map(|i| sample_once(spec, seed, i as u64))
        .reduce(SampleMax::default, SampleMax::merge);

    let policy_variation = policy.map(|p| {
        let sup_origin: Real = p
            .t_knots()
            .iter()
            .map(|&t| p.value(t, 0.0).abs())
            .fold(0.0, Real::max);
        let mut worst: Real = 0.0;
        for i in 0..200 {
            let mut rng = stream_rng(seed ^ 0x7076, i);
            let x = rng.random_range(-SAMPLE_BOX..SAMPLE_BOX);
            let ratio = (p.total_variation_in_t(x) + sup_origin) / (1.0 + x.abs());
            worst = worst.max(ratio);
        }
        Estimate {
            value: worst,
            passes: worst <= thresholds.total_variation_c,
        }
    });

    let est = |v: Real, c: Real| Estimate {
        value: v,
        passes: v <= c,
    };
    let lc = thresholds.lipschitz_c;
    let gc = thresholds.growth_c;
    Ok(AssumptionReport {
        lipschitz_mu: est(max.lip_mu, lc),
        lipschitz_sigma: est(max.lip_sigma, lc),
        lipschitz_h: est(max.lip_h, lc),
        lipschitz_phi: est(max.lip_phi, lc),
        growth_mu: est(max.gro_mu, gc),
        growth_sigma: est(max.gro_sigma, gc),
        growth_h: est(max.gro_h, gc),
        growth_phi: est(max.gro_phi, gc),
        policy_variation,
        budget,
        seed,
    })
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn norm(v: &[Real]) -> Real {
    v.iter().map(|a| a * a).sum::<Real>().sqrt()
}

fn diff_norm(a: &[Real], b: &[Real]) -> Real {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<Real>()
        .sqrt()
}

fn sample_once(spec: &ProblemSpec, seed: u64, index: u64) -> SampleMax {
    let mut rng = stream_rng(seed, index);
    let Dims { n, m, k } = spec.dims;
    let t = rng.random_range(0.0..spec.horizon);

    let draw_x = |rng: &mut ChaCha8Rng| -> Vec<Real> {
        (0..n).map(|_| rng.random_range(-SAMPLE_BOX..SAMPLE_BOX)).collect()
    };
    let draw_z = |rng: &mut ChaCha8Rng| -> Vec<Real> {
        (0..m).map(|_| rng.random_range(-SAMPLE_BOX..SAMPLE_BOX)).collect()
    };
    let draw_u = |rng: &mut ChaCha8Rng, box_: &ControlBox| -> Vec<Real> {
        box_.lower
            .iter()
            .zip(&box_.upper)
            .map(|(&l, &h)| if l == h { l } else { rng.random_range(l..h) })
            .collect()
    };

    let x1 = draw_x(&mut rng);
    let u1 = draw_u(&mut rng, &spec.control);
    let y1 = rng.random_range(-SAMPLE_BOX..SAMPLE_BOX);
    let z1 = draw_z(&mut rng);
    let x2_full = draw_x(&mut rng);
    let u2_full = draw_u(&mut rng, &spec.control);
    let y2 = rng.random_range(-SAMPLE_BOX..SAMPLE_BOX);
    let z2 = draw_z(&mut rng);
    let x2_only = draw_x(&mut rng);
    let u2_only = draw_u(&mut rng, &spec.control);

    let mut out = SampleMax::default();
    let mut buf_a = vec![0.0; n * m];
    let mut buf_b = vec![0.0; n * m];

    // Variation in (x, u) jointly, in x alone, and in u alone; the last
    // two tighten the estimate when the true constant is attained along an
    // axis.
    let pairs: [(&[Real], &[Real], Real, &[Real]); 3] = [
        (&x2_full, &u2_full, y2, &z2),
        (&x2_only, &u1, y1, &z1),
        (&x1, &u2_only, y1, &z1),
    ];
    for (x2, u2, y2p, z2p) in pairs {
        let dxu = diff_norm(&x1, x2) + diff_norm(&u1, u2);
        if dxu > 1e-9 {
            (spec.mu)(t, &x1, &u1, &mut buf_a[..n]);
            (spec.mu)(t, x2, u2, &mut buf_b[..n]);
            out.lip_mu = out.lip_mu.max(diff_norm(&buf_a[..n], &buf_b[..n]) / dxu);
            (spec.sigma)(t, &x1, &u1, &mut buf_a[..n * m]);
            (spec.sigma)(t, x2, u2, &mut buf_b[..n * m]);
            out.lip_sigma = out.lip_sigma.max(diff_norm(&buf_a, &buf_b) / dxu);
        }
        let dall = dxu + (y1 - y2p).abs() + diff_norm(&z1, z2p);
        if dall > 1e-9 {
            let ha = (spec.h)(t, &x1, y1, &z1, &u1);
            let hb = (spec.h)(t, x2, y2p, z2p, u2);
            out.lip_h = out.lip_h.max((ha - hb).abs() / dall);
        }
        let dx = diff_norm(&x1, x2);
        if dx > 1e-9 {
            out.lip_phi = out
                .lip_phi
                .max(((spec.phi)(&x1) - (spec.phi)(x2)).abs() / dx);
        }
    }

    let denom = 1.0 + norm(&x1) + norm(&u1);
    (spec.mu)(t, &x1, &u1, &mut buf_a[..n]);
    out.gro_mu = norm(&buf_a[..n]) / denom;
    (spec.sigma)(t, &x1, &u1, &mut buf_a[..n * m]);
    out.gro_sigma = norm(&buf_a) / denom;
    out.gro_h = (spec.h)(t, &x1, y1, &z1, &u1).abs() / denom;
    out.gro_phi = (spec.phi)(&x1).abs() / (1.0 + norm(&x1));
    let _ = k;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn simple_spec(
        mu: &str,
        sigma: &str,
        h: &str,
        f: &str,
        phi: &str,
        g: &str,
        gamma: Option<&str>,
    ) -> ProblemSpec {
        from_expressions(
            &ExprCoefficients {
                mu: mu.into(),
                sigma: sigma.into(),
                h: h.into(),
                f: f.into(),
                phi: phi.into(),
                g_terminal: g.into(),
                gamma: gamma.map(String::from),
                gamma_d1: None,
                gamma_d2: None,
            },
            1.0,
            ControlBox::scalar(-1.0, 1.0),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn mean_variance_transform() {
        // f = 0, h = 0, phi = x, G = x^2, gamma(y) = -y^2
        // => running cost z^2, terminal cost 0.
        let spec = simple_spec("0", "1", "0", "0", "x", "x^2", Some("-(y^2)"));
        let out = transform_gamma(&spec).unwrap();
        assert_relative_eq!(out.f1(0.0, 0.0, 0.0, 2.0, 0.0), 4.0, epsilon = 1e-5);
        assert_relative_eq!(out.f1(0.3, 1.0, 5.0, 0.5, 0.0), 0.25, epsilon = 1e-5);
        assert_relative_eq!(out.g_terminal1(3.0), 0.0, epsilon = 1e-9);
        assert!(out.gamma.is_none());
    }

    #[test]
    fn zero_gamma_is_identity() {
        let spec = simple_spec("0", "1", "x", "x*u", "x", "x^2", Some("0"));
        let out = transform_gamma(&spec).unwrap();
        for &(t, x, y, z, u) in &[(0.1, 0.5, 2.0, -1.0, 0.3), (0.9, -3.0, 0.0, 4.0, -0.7)] {
            assert_relative_eq!(
                out.f1(t, x, y, z, u),
                spec.f1(t, x, y, z, u),
                epsilon = 1e-9
            );
        }
        assert_relative_eq!(out.g_terminal1(2.0), spec.g_terminal1(2.0), epsilon = 1e-9);
    }

    #[test]
    fn linear_gamma_adds_driver_and_terminal() {
        // f = 0, h = 1, gamma(y) = y => new f = 1, new G = G + phi.
        let spec = simple_spec("0", "1", "1", "0", "x", "x^2", Some("y"));
        let out = transform_gamma(&spec).unwrap();
        assert_relative_eq!(out.f1(0.2, 1.0, 3.0, -2.0, 0.5), 1.0, epsilon = 1e-5);
        assert_relative_eq!(out.g_terminal1(2.0), 4.0 + 2.0, epsilon = 1e-9);
    }

    #[test]
    fn transform_without_gamma_errors() {
        let spec = simple_spec("0", "1", "0", "0", "x", "x", None);
        assert!(matches!(transform_gamma(&spec), Err(Error::MissingGamma)));
    }

    #[test]
    fn lipschitz_estimate_of_linear_drift() {
        let spec = simple_spec("2*x", "1", "0", "0", "x", "x", None);
        let report = check_assumptions(
            &spec,
            None,
            10_000,
            7,
            &AssumptionThresholds {
                lipschitz_c: 2.1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.lipschitz_mu.value >= 1.9 && report.lipschitz_mu.value <= 2.0);
        assert!(report.lipschitz_mu.passes);
    }

    #[test]
    fn quadratic_terminal_fails_linear_growth() {
        let spec = simple_spec("0", "1", "0", "0", "x^2", "x", None);
        let report = check_assumptions(
            &spec,
            None,
            10_000,
            7,
            &AssumptionThresholds {
                growth_c: 5.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.growth_phi.value > 5.0);
        assert!(!report.growth_phi.passes);
    }

    #[test]
    fn constant_policy_has_zero_variation() {
        let spec = simple_spec("0", "1", "0", "0", "x", "x", None);
        let policy = FeedbackPolicy::constant(0.5, 0.0, 1.0, -1.0, 1.0).unwrap();
        let report =
            check_assumptions(&spec, Some(&policy), 100, 3, &AssumptionThresholds::default())
                .unwrap();
        let pv = report.policy_variation.unwrap();
        // Only the sup-at-origin term contributes.
        assert!(pv.value <= 0.5);
        assert!(pv.passes);
    }

    #[test]
    fn report_is_reproducible_and_partition_independent() {
        let spec = simple_spec("x*u", "1+x", "y+z", "0", "x", "x", None);
        let a = check_assumptions(&spec, None, 500, 11, &AssumptionThresholds::default()).unwrap();
        let b = check_assumptions(&spec, None, 500, 11, &AssumptionThresholds::default()).unwrap();
        assert_eq!(a.lipschitz_mu.value.to_bits(), b.lipschitz_mu.value.to_bits());
        assert_eq!(a.growth_h.value.to_bits(), b.growth_h.value.to_bits());
    }
}
