//! Monte Carlo simulation of the controlled forward/backward pair,
//! regression-based backward estimates, cost estimation, and the
//! dynamic-programming consistency check.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hjb::FieldPair;
use crate::policy::FeedbackPolicy;
use crate::problem::ProblemSpec;
use crate::{Field, Real};

/// Simulated path bundle.  Forward data is always present; backward
/// estimates and applied controls are filled by the regression pass.
///
/// Row-major layouts: `x[p * (nt + 1) + k]`, `db[p * nt + k]`, and
/// likewise for `y`, `z`, `controls`.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub paths: usize,
    pub nt: usize,
    pub t0: Real,
    pub dt: Real,
    pub x: Vec<Real>,
    pub db: Vec<Real>,
    pub y: Option<Vec<Real>>,
    pub z: Option<Vec<Real>>,
    pub controls: Option<Vec<Real>>,
    pub seed: u64,
    /// Number of backward regression steps that needed the ridge fallback.
    pub ridge_fallbacks: usize,
}

impl PathEnsemble {
    pub fn t(&self, k: usize) -> Real {
        self.t0 + k as Real * self.dt
    }

    pub fn x_at(&self, p: usize, k: usize) -> Real {
        self.x[p * (self.nt + 1) + k]
    }

    pub fn all_finite(&self) -> bool {
        let opt_ok = |v: &Option<Vec<Real>>| {
            v.as_ref()
                .map(|v| v.iter().all(|a| a.is_finite()))
                .unwrap_or(true)
        };
        self.x.iter().all(|a| a.is_finite())
            && self.db.iter().all(|a| a.is_finite())
            && opt_ok(&self.y)
            && opt_ok(&self.z)
            && opt_ok(&self.controls)
    }
}

/// Cost functional estimate with its Monte Carlo error.
#[derive(Debug, Clone, Copy)]
pub struct CostEstimate {
    pub mean: Real,
    pub std_err: Real,
    pub paths: usize,
    pub seed: u64,
}

/// Where the backward pair `(Y, Z)` along paths comes from when
/// estimating costs.
pub enum YzSource<'a> {
    /// Run the least-squares backward scheme with this basis degree.
    Regression { degree: usize },
    /// Read `Y = g(t, x)` and `Z = z(t, x)` from solved grid fields.
    Fields { g: &'a Field, z: &'a Field },
}

/// Euler–Maruyama forward simulation over `[t0, T]` under a feedback
/// policy, with one counter-based substream per path so any partition of
/// the path range reproduces the same draws.
pub fn simulate_forward(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    t0: Real,
    x0: Real,
    nt: usize,
    paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    simulate_forward_to(spec, policy, t0, spec.horizon, x0, nt, paths, seed, 0)
}

/// Forward simulation on an explicit time window, with the substream
/// counter offset by `path_offset` (global path index = offset + row).
#[allow(clippy::too_many_arguments)]
pub fn simulate_forward_to(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    t0: Real,
    t_end: Real,
    x0: Real,
    nt: usize,
    paths: usize,
    seed: u64,
    path_offset: u64,
) -> Result<PathEnsemble> {
    spec.validate()?;
    if !spec.is_one_dimensional() {
        return Err(Error::InvalidProblem(
            "the simulator requires n = m = k = 1".into(),
        ));
    }
    if paths == 0 || nt == 0 {
        return Err(Error::InvalidArgument(
            "need at least one path and one time step".into(),
        ));
    }
    if !(t_end > t0) {
        return Err(Error::InvalidArgument(
            "simulation window must have positive length".into(),
        ));
    }
    let dt = (t_end - t0) / nt as Real;
    let sqrt_dt = dt.sqrt();

    let mut x = vec![0.0; paths * (nt + 1)];
    let mut db = vec![0.0; paths * nt];

    let first_bad = x
        .par_chunks_mut(nt + 1)
        .zip(db.par_chunks_mut(nt))
        .enumerate()
        .map(|(p, (xrow, brow))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path_offset + p as u64);
            xrow[0] = x0;
            for k in 0..nt {
                let t = t0 + k as Real * dt;
                let xv = xrow[k];
                let u = policy.value(t, xv);
                let n: Real = rng.sample(StandardNormal);
                let dbk = sqrt_dt * n;
                brow[k] = dbk;
                let next =
                    xv + spec.mu1(t, xv, u) * dt + spec.sigma1(t, xv, u) * dbk;
                if !next.is_finite() {
                    return Some((p, k));
                }
                xrow[k + 1] = next;
            }
            None
        })
        .reduce(|| None, |a, b| a.or(b));

    if let Some((p, k)) = first_bad {
        return Err(Error::NonFiniteState { path: p, step: k });
    }

    Ok(PathEnsemble {
        paths,
        nt,
        t0,
        dt,
        x,
        db,
        y: None,
        z: None,
        controls: None,
        seed,
        ridge_fallbacks: 0,
    })
}

/// Least-squares polynomial fit of `ys` on `xs` with degree `<= degree`,
/// using centered/scaled monomials for conditioning.  Returns the fitted
/// values per sample and whether the ridge fallback was needed.
fn regress(xs: &[Real], ys: &[Real], degree: usize) -> Result<(Vec<Real>, bool)> {
    let n = xs.len();
    let dim = degree + 1;
    let mean = xs.iter().sum::<Real>() / n as Real;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<Real>() / n as Real;
    let scale = var.sqrt();

    // Degenerate cross-section (e.g. the deterministic start point): the
    // conditional expectation is the plain sample mean.
    if scale <= 1e-12 * (1.0 + mean.abs()) {
        let ymean = ys.iter().sum::<Real>() / n as Real;
        return Ok((vec![ymean; n], false));
    }

    // Normal equations accumulated sequentially for determinism.
    let mut gram = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    let mut basis = vec![0.0; dim];
    for (&x, &y) in xs.iter().zip(ys) {
        let s = (x - mean) / scale;
        basis[0] = 1.0;
        for j in 1..dim {
            basis[j] = basis[j - 1] * s;
        }
        for a in 0..dim {
            for b in 0..dim {
                gram[a * dim + b] += basis[a] * basis[b];
            }
            rhs[a] += basis[a] * y;
        }
    }

    let (coefs, ridged) = match solve_dense(&gram, &rhs, dim) {
        Ok(c) => (c, false),
        Err(_) => {
            let mut g2 = gram.clone();
            for a in 0..dim {
                g2[a * dim + a] += 1e-10 * n as Real;
            }
            (solve_dense(&g2, &rhs, dim)?, true)
        }
    };

    let fitted = xs
        .iter()
        .map(|&x| {
            let s = (x - mean) / scale;
            let mut pw = 1.0;
            let mut acc = 0.0;
            for &c in &coefs {
                acc += c * pw;
                pw *= s;
            }
            acc
        })
        .collect();
    Ok((fitted, ridged))
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(a: &[Real], b: &[Real], n: usize) -> Result<Vec<Real>> {
    let mut m = a.to_vec();
    let mut r = b.to_vec();
    for col in 0..n {
        let (piv, mag) = (col..n)
            .map(|row| (row, m[row * n + col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if mag < 1e-12 * n as Real {
            return Err(Error::SingularSystem(col));
        }
        if piv != col {
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
            }
            r.swap(col, piv);
        }
        for row in col + 1..n {
            let factor = m[row * n + col] / m[col * n + col];
            for j in col..n {
                m[row * n + j] -= factor * m[col * n + j];
            }
            r[row] -= factor * r[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = r[row];
        for j in row + 1..n {
            acc -= m[row * n + j] * x[j];
        }
        x[row] = acc / m[row * n + row];
    }
    Ok(x)
}

/// Backward least-squares scheme filling `Y`, `Z`, and the applied
/// controls on a forward ensemble.
///
/// `Y_N = Φ(X_N)` per path.  Going backward, the conditional mean
/// `m̂_k(x) = Ê[Y_{k+1} | X_k = x]` is a degree-`d` polynomial fit, `Z`
/// is regressed from the centered response
/// `(Y_{k+1} − m̂_k(X_k))·ΔB_k/Δt` — same conditional expectation as the
/// plain `Y_{k+1}ΔB_k/Δt` response (the centering term is orthogonal to
/// the increment) but with variance that stays bounded as Δt shrinks —
/// and `Y_k = m̂_k(X_k) + h(t_k, X_k, m̂_k(X_k), Z_k, u_k)Δt`.
pub fn backward_regression(
    spec: &ProblemSpec,
    ensemble: &mut PathEnsemble,
    policy: &FeedbackPolicy,
    degree: usize,
) -> Result<()> {
    if degree == 0 {
        return Err(Error::InvalidArgument(
            "regression basis degree must be >= 1".into(),
        ));
    }
    let p = ensemble.paths;
    let nt = ensemble.nt;
    let dt = ensemble.dt;

    let mut y = vec![0.0; p * (nt + 1)];
    let mut z = vec![0.0; p * nt];
    let mut controls = vec![0.0; p * nt];
    let mut ridge_count = 0usize;

    for path in 0..p {
        y[path * (nt + 1) + nt] = spec.phi1(ensemble.x_at(path, nt));
    }

    let mut xs = vec![0.0; p];
    let mut ynext = vec![0.0; p];
    let mut zresp = vec![0.0; p];
    for k in (0..nt).rev() {
        let t = ensemble.t(k);
        for path in 0..p {
            xs[path] = ensemble.x_at(path, k);
            ynext[path] = y[path * (nt + 1) + k + 1];
        }
        let (ymean, ridged_y) = regress(&xs, &ynext, degree)?;
        for path in 0..p {
            zresp[path] =
                (ynext[path] - ymean[path]) * ensemble.db[path * nt + k] / dt;
        }
        let (zfit, ridged_z) = regress(&xs, &zresp, degree)?;
        ridge_count += usize::from(ridged_y) + usize::from(ridged_z);

        for path in 0..p {
            let u = policy.value(t, xs[path]);
            controls[path * nt + k] = u;
            z[path * nt + k] = zfit[path];
            y[path * (nt + 1) + k] = ymean[path]
                + spec.h1(t, xs[path], ymean[path], zfit[path], u) * dt;
        }
    }

    ensemble.y = Some(y);
    ensemble.z = Some(z);
    ensemble.controls = Some(controls);
    ensemble.ridge_fallbacks = ridge_count;
    Ok(())
}

/// Monte Carlo estimate of the cost functional
/// `J = 𝔼[Σ_k f(t_k, X_k, Y_k, Z_k, u_k)Δt + G(X_N)]`
/// with a left-rectangle quadrature aligned to the Euler grid.
#[allow(clippy::too_many_arguments)]
pub fn estimate_cost(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    t0: Real,
    x0: Real,
    nt: usize,
    paths: usize,
    seed: u64,
    source: YzSource,
) -> Result<CostEstimate> {
    let mut ensemble = simulate_forward(spec, policy, t0, x0, nt, paths, seed)?;
    match source {
        YzSource::Regression { degree } => {
            backward_regression(spec, &mut ensemble, policy, degree)?;
        }
        YzSource::Fields { .. } => {}
    }
    cost_from_ensemble(spec, policy, &ensemble, &source)
}

/// Cost accumulation over an already-simulated ensemble.
pub fn cost_from_ensemble(
    spec: &ProblemSpec,
    policy: &FeedbackPolicy,
    ensemble: &PathEnsemble,
    source: &YzSource,
) -> Result<CostEstimate> {
    let p = ensemble.paths;
    let nt = ensemble.nt;
    let dt = ensemble.dt;

    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for path in 0..p {
        let mut acc = 0.0;
        for k in 0..nt {
            let t = ensemble.t(k);
            let xv = ensemble.x_at(path, k);
            let (yv, zv) = match source {
                YzSource::Regression { .. } => {
                    let y = ensemble.y.as_ref().ok_or_else(|| {
                        Error::InvalidArgument(
                            "ensemble lacks backward estimates".into(),
                        )
                    })?;
                    let z = ensemble.z.as_ref().unwrap();
                    (y[path * (nt + 1) + k], z[path * nt + k])
                }
                YzSource::Fields { g, z } => (g.interp(t, xv), z.interp(t, xv)),
            };
            let u = policy.value(t, xv);
            acc += spec.f1(t, xv, yv, zv, u) * dt;
        }
        acc += spec.g_terminal1(ensemble.x_at(path, nt));
        sum += acc;
        sumsq += acc * acc;
    }

    let mean = sum / p as Real;
    let var = (sumsq / p as Real - mean * mean).max(0.0);
    let std_err = if p > 1 {
        (var * p as Real / (p - 1) as Real).sqrt() / (p as Real).sqrt()
    } else {
        Real::INFINITY
    };
    Ok(CostEstimate {
        mean,
        std_err,
        paths: p,
        seed: ensemble.seed,
    })
}

/// Dynamic-programming consistency report: the solved value at the root
/// against first-stage Monte Carlo continuations.
#[derive(Debug, Clone)]
pub struct DppReport {
    /// `v(t0, x0)` interpolated from the solved field.
    pub lhs: Real,
    /// One estimate per first-stage candidate policy.
    pub rhs: Vec<CostEstimate>,
    pub min_rhs: Real,
    pub min_index: usize,
    /// `min rhs − lhs`; statistically zero when the optimal policy is
    /// among the candidates.
    pub gap: Real,
}

/// Checks the dynamic-programming relation: for each candidate
/// first-stage policy, simulate to the split time `s` under common random
/// numbers, accumulate the running cost with `(Y, Z)` read from the
/// solved fields along the path, add the solved value at `(s, X_s)`, and
/// compare the best candidate against `v(t0, x0)`.
#[allow(clippy::too_many_arguments)]
pub fn check_dpp(
    spec: &ProblemSpec,
    solved: &FieldPair,
    t0: Real,
    x0: Real,
    split: Real,
    candidates: &[FeedbackPolicy],
    nt: usize,
    paths: usize,
    seed: u64,
) -> Result<DppReport> {
    if !(split > t0 && split < spec.horizon) {
        return Err(Error::InvalidArgument(format!(
            "split {split} must lie strictly between {t0} and {}",
            spec.horizon
        )));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one candidate policy".into(),
        ));
    }

    let lhs = solved.v.interp(t0, x0);
    let mut rhs = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let ens =
            simulate_forward_to(spec, cand, t0, split, x0, nt, paths, seed, 0)?;
        let dt = ens.dt;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for path in 0..paths {
            let mut acc = 0.0;
            for k in 0..nt {
                let t = ens.t(k);
                let xv = ens.x_at(path, k);
                let u = cand.value(t, xv);
                let yv = solved.g.interp(t, xv);
                let zv = solved.z.interp(t, xv);
                acc += spec.f1(t, xv, yv, zv, u) * dt;
            }
            acc += solved.v.interp(split, ens.x_at(path, nt));
            sum += acc;
            sumsq += acc * acc;
        }
        let mean = sum / paths as Real;
        let var = (sumsq / paths as Real - mean * mean).max(0.0);
        let std_err = if paths > 1 {
            (var * paths as Real / (paths - 1) as Real).sqrt()
                / (paths as Real).sqrt()
        } else {
            Real::INFINITY
        };
        rhs.push(CostEstimate {
            mean,
            std_err,
            paths,
            seed,
        });
    }

    let (min_index, min_rhs) = rhs
        .iter()
        .enumerate()
        .map(|(i, e)| (i, e.mean))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    Ok(DppReport {
        lhs,
        rhs,
        min_rhs,
        min_index,
        gap: min_rhs - lhs,
    })
}

/// Writes the per-step cross-sectional summary: `k,t,mean_X,std_X,mean_Y,mean_Z`.
pub fn write_summary_csv<W: Write>(ensemble: &PathEnsemble, mut w: W) -> Result<()> {
    writeln!(w, "k,t,mean_X,std_X,mean_Y,mean_Z")?;
    let p = ensemble.paths as Real;
    for k in 0..=ensemble.nt {
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for path in 0..ensemble.paths {
            let x = ensemble.x_at(path, k);
            sum += x;
            sumsq += x * x;
        }
        let mean_x = sum / p;
        let std_x = (sumsq / p - mean_x * mean_x).max(0.0).sqrt();
        let mean_y = ensemble.y.as_ref().map(|y| {
            (0..ensemble.paths)
                .map(|q| y[q * (ensemble.nt + 1) + k])
                .sum::<Real>()
                / p
        });
        let mean_z = ensemble.z.as_ref().filter(|_| k < ensemble.nt).map(|z| {
            (0..ensemble.paths)
                .map(|q| z[q * ensemble.nt + k])
                .sum::<Real>()
                / p
        });
        let fmt = |v: Option<Real>| match v {
            Some(v) => format!("{v:.16e}"),
            None => String::new(),
        };
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{},{}",
            k,
            ensemble.t(k),
            mean_x,
            std_x,
            fmt(mean_y),
            fmt(mean_z)
        )?;
    }
    Ok(())
}

/// Writes the full path dump: `path,k,t,x,y,z,u` (empty cells where the
/// backward pass has not run or the index has no increment).
pub fn write_paths_csv<W: Write>(ensemble: &PathEnsemble, mut w: W) -> Result<()> {
    writeln!(w, "path,k,t,x,y,z,u")?;
    let nt = ensemble.nt;
    for path in 0..ensemble.paths {
        for k in 0..=nt {
            let opt = |v: &Option<Vec<Real>>, idx: Option<usize>| match (v, idx) {
                (Some(v), Some(i)) => format!("{:.16e}", v[i]),
                _ => String::new(),
            };
            let y = opt(&ensemble.y, Some(path * (nt + 1) + k));
            let step = if k < nt { Some(path * nt + k) } else { None };
            let z = opt(&ensemble.z, step);
            let u = opt(&ensemble.controls, step);
            writeln!(
                w,
                "{},{},{:.16e},{:.16e},{},{},{}",
                path,
                k,
                ensemble.t(k),
                ensemble.x_at(path, k),
                y,
                z,
                u
            )?;
        }
    }
    Ok(())
}
