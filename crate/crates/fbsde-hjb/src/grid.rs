//! Uniform 1-D space-time grids, grid-sampled fields, finite-difference
//! stencils, and the tridiagonal solver.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Real;
use std::io::{BufRead, Write};

/// Uniform grid on `[x_lo, x_hi] x [t0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_lo: Real,
    pub x_hi: Real,
    /// Node count, `>= 3`.
    pub nx: usize,
    /// Time step count, `>= 1`; slices number `nt + 1`.
    pub nt: usize,
    pub t0: Real,
    pub t_end: Real,
}

impl GridSpec {
    pub fn new(x_lo: Real, x_hi: Real, nx: usize, nt: usize, t0: Real, t_end: Real) -> Result<Self> {
        let g = GridSpec {
            x_lo,
            x_hi,
            nx,
            nt,
            t0,
            t_end,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_lo < self.x_hi) {
            return Err(Error::InvalidGrid("x_lo must be below x_hi".into()));
        }
        if self.nx < 3 {
            return Err(Error::InvalidGrid("grid too small: need nx >= 3".into()));
        }
        if self.nt < 1 {
            return Err(Error::InvalidGrid("need nt >= 1".into()));
        }
        if !(self.t0 < self.t_end) {
            return Err(Error::InvalidGrid("t0 must be below the terminal time".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn dx(&self) -> Real {
        (self.x_hi - self.x_lo) / (self.nx - 1) as Real
    }

    #[inline]
    pub fn dt(&self) -> Real {
        (self.t_end - self.t0) / self.nt as Real
    }

    #[inline]
    pub fn x(&self, i: usize) -> Real {
        self.x_lo + i as Real * self.dx()
    }

    #[inline]
    pub fn t(&self, j: usize) -> Real {
        self.t0 + j as Real * self.dt()
    }

    pub fn x_nodes(&self) -> Vec<Real> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn t_knots(&self) -> Vec<Real> {
        (0..=self.nt).map(|j| self.t(j)).collect()
    }

    /// Index range of the central fraction of the spatial nodes, used to
    /// keep boundary effects out of accuracy comparisons.
    pub fn inner_range(&self, fraction: Real) -> std::ops::Range<usize> {
        let margin = ((1.0 - fraction) * 0.5 * (self.nx - 1) as Real).ceil() as usize;
        margin..self.nx - margin
    }
}

/// Grid-sampled scalar field `w(t_j, x_i)`, row-major by time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<S> {
    pub grid: GridSpec,
    values: Vec<S>,
}

impl<S: Scalar> ScalarField<S> {
    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField {
            grid,
            values: vec![S::zero(); (grid.nt + 1) * grid.nx],
        }
    }

    #[inline]
    pub fn at(&self, j: usize, i: usize) -> S {
        self.values[j * self.grid.nx + i]
    }

    #[inline]
    pub fn set(&mut self, j: usize, i: usize, v: S) {
        self.values[j * self.grid.nx + i] = v;
    }

    pub fn slice(&self, j: usize) -> &[S] {
        &self.values[j * self.grid.nx..(j + 1) * self.grid.nx]
    }

    pub fn slice_mut(&mut self, j: usize) -> &mut [S] {
        &mut self.values[j * self.grid.nx..(j + 1) * self.grid.nx]
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// First non-finite entry as `(slice, node)`, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.values
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / self.grid.nx, p % self.grid.nx))
    }

    pub fn sup_distance(&self, other: &ScalarField<S>) -> S {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs())
            .fold(S::zero(), S::max)
    }

    /// Bilinear interpolation, clamped to the grid range.
    pub fn interp(&self, t: Real, x: Real) -> S {
        let g = &self.grid;
        let tt = ((t - g.t0) / g.dt()).clamp(0.0, g.nt as Real);
        let xx = ((x - g.x_lo) / g.dx()).clamp(0.0, (g.nx - 1) as Real);
        let j = (tt.floor() as usize).min(g.nt - 1);
        let i = (xx.floor() as usize).min(g.nx - 2);
        let wt = S::from_f64_lossy(tt - j as Real);
        let wx = S::from_f64_lossy(xx - i as Real);
        let one = S::one();
        let a = self.at(j, i) * (one - wx) + self.at(j, i + 1) * wx;
        let b = self.at(j + 1, i) * (one - wx) + self.at(j + 1, i + 1) * wx;
        a * (one - wt) + b * wt
    }

    /// Writes the field as `t,x,value` CSV with 17 significant digits,
    /// row-major by time slice.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,value")?;
        for j in 0..=self.grid.nt {
            let t = self.grid.t(j);
            for i in 0..self.grid.nx {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", t, self.grid.x(i), self.at(j, i))?;
            }
        }
        Ok(())
    }
}

impl ScalarField<Real> {
    /// Reads a field written by [`ScalarField::write_csv`].  The grid is
    /// reconstructed from the coordinate columns.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut ts: Vec<Real> = Vec::new();
        let mut xs: Vec<Real> = Vec::new();
        let mut vals: Vec<Real> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = |what: &str| -> Result<Real> {
                parts
                    .next()
                    .ok_or_else(|| Error::InvalidArgument(format!("missing {what} column")))?
                    .trim()
                    .parse::<Real>()
                    .map_err(|e| Error::InvalidArgument(format!("bad {what} on line {lineno}: {e}")))
            };
            let t = next("t")?;
            let x = next("x")?;
            let v = next("value")?;
            if ts.last() != Some(&t) {
                ts.push(t);
            }
            if ts.len() == 1 {
                xs.push(x);
            }
            vals.push(v);
        }
        if ts.len() < 2 || xs.len() < 3 {
            return Err(Error::InvalidArgument("field CSV too small".into()));
        }
        if vals.len() != ts.len() * xs.len() {
            return Err(Error::InvalidArgument("ragged field CSV".into()));
        }
        let grid = GridSpec::new(
            xs[0],
            *xs.last().unwrap(),
            xs.len(),
            ts.len() - 1,
            ts[0],
            *ts.last().unwrap(),
        )?;
        Ok(ScalarField { grid, values: vals })
    }
}

/// Forward, backward, and central-second differences of one slice.
///
/// At the boundaries the one-sided difference stands in for both
/// directions and the second difference copies the adjacent interior
/// value (zero-curvature extrapolation).
pub struct SliceDerivs<S> {
    pub fwd: Vec<S>,
    pub bwd: Vec<S>,
    pub d2: Vec<S>,
}

pub fn slice_derivs<S: Scalar>(slice: &[S], dx: S) -> SliceDerivs<S> {
    let n = slice.len();
    debug_assert!(n >= 3);
    let mut fwd = vec![S::zero(); n];
    let mut bwd = vec![S::zero(); n];
    let mut d2 = vec![S::zero(); n];
    let dx2 = dx * dx;
    for i in 0..n {
        let f = if i + 1 < n {
            (slice[i + 1] - slice[i]) / dx
        } else {
            (slice[i] - slice[i - 1]) / dx
        };
        let b = if i > 0 {
            (slice[i] - slice[i - 1]) / dx
        } else {
            (slice[1] - slice[0]) / dx
        };
        fwd[i] = f;
        bwd[i] = b;
        if i > 0 && i + 1 < n {
            d2[i] = (slice[i - 1] - S::two() * slice[i] + slice[i + 1]) / dx2;
        }
    }
    d2[0] = d2[1];
    d2[n - 1] = d2[n - 2];
    SliceDerivs { fwd, bwd, d2 }
}

/// Picks the upwind one-sided difference for the given drift value.
#[inline]
pub fn pick_upwind<S: Scalar>(drift: S, fwd: S, bwd: S) -> S {
    if drift >= S::zero() {
        fwd
    } else {
        bwd
    }
}

/// First derivative, upwinded by the per-node drift sign (forward when
/// the drift is nonnegative, backward otherwise, one-sided at the
/// boundaries).
pub fn d1_upwind<S: Scalar>(slice: &[S], drift: &[S], dx: S) -> Vec<S> {
    let d = slice_derivs(slice, dx);
    (0..slice.len())
        .map(|i| pick_upwind(drift[i], d.fwd[i], d.bwd[i]))
        .collect()
}

/// Central second derivative; boundary nodes copy the adjacent interior
/// value.
pub fn d2_central<S: Scalar>(slice: &[S], dx: S) -> Vec<S> {
    slice_derivs(slice, dx).d2
}

/// Solves a tridiagonal system by the Thomas algorithm.
///
/// `sub[0]` and `sup[n-1]` are ignored.  Fails on a vanishing pivot.
pub fn solve_tridiagonal<S: Scalar>(
    sub: &[S],
    diag: &[S],
    sup: &[S],
    rhs: &[S],
) -> Result<Vec<S>> {
    let n = diag.len();
    debug_assert!(sub.len() == n && sup.len() == n && rhs.len() == n);
    let mut c_star = vec![S::zero(); n];
    let mut d_star = vec![S::zero(); n];
    let tiny = S::from_f64_lossy(1e-300);

    let mut pivot = diag[0];
    if pivot.abs() < tiny {
        return Err(Error::SingularSystem(0));
    }
    c_star[0] = sup[0] / pivot;
    d_star[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i] * c_star[i - 1];
        if pivot.abs() < tiny {
            return Err(Error::SingularSystem(i));
        }
        if i + 1 < n {
            c_star[i] = sup[i] / pivot;
        }
        d_star[i] = (rhs[i] - sub[i] * d_star[i - 1]) / pivot;
    }
    let mut x = d_star;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] = x[i] - c_star[i] * next;
    }
    Ok(x)
}
