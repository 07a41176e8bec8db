//! Piecewise-linear functions and the 1-D sub/super-differential
//! checker, with the two-equation counterexample showing that the
//! classical test-function definition breaks when one equation's
//! operator consumes the other unknown's derivative.

use crate::error::{Error, Result};
use crate::Real;

/// Continuous piecewise-linear function given by values at strictly
/// increasing breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear1D {
    xs: Vec<Real>,
    ys: Vec<Real>,
}

impl PiecewiseLinear1D {
    pub fn new(xs: Vec<Real>, ys: Vec<Real>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidArgument(
                "need matching breakpoint/value lists of length >= 2".into(),
            ));
        }
        if !xs.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "breakpoints and values must be finite".into(),
            ));
        }
        Ok(PiecewiseLinear1D { xs, ys })
    }

    pub fn breakpoints(&self) -> &[Real] {
        &self.xs
    }

    pub fn x_lo(&self) -> Real {
        self.xs[0]
    }

    pub fn x_hi(&self) -> Real {
        *self.xs.last().unwrap()
    }

    /// Slope of segment `i` (between breakpoints `i` and `i + 1`).
    pub fn slope(&self, i: usize) -> Real {
        (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
    }

    pub fn eval(&self, x: Real) -> Result<Real> {
        self.check_range(x)?;
        let i = self.segment_of(x);
        Ok(self.ys[i] + self.slope(i) * (x - self.xs[i]))
    }

    fn check_range(&self, x: Real) -> Result<()> {
        if x < self.x_lo() || x > self.x_hi() {
            return Err(Error::InvalidArgument(format!(
                "x = {x} outside [{}, {}]",
                self.x_lo(),
                self.x_hi()
            )));
        }
        Ok(())
    }

    fn segment_of(&self, x: Real) -> usize {
        let i = self.xs.partition_point(|&b| b <= x);
        i.saturating_sub(1).min(self.xs.len() - 2)
    }
}

/// A closed derivative interval or the empty set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffInterval {
    Empty,
    /// `lo <= hi`; a singleton when `lo == hi`.
    Interval { lo: Real, hi: Real },
}

impl DiffInterval {
    pub fn singleton(s: Real) -> Self {
        DiffInterval::Interval { lo: s, hi: s }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, DiffInterval::Empty)
    }

    pub fn contains(&self, p: Real) -> bool {
        match *self {
            DiffInterval::Empty => false,
            DiffInterval::Interval { lo, hi } => lo <= p && p <= hi,
        }
    }
}

/// Derivative sets of C¹ test functions touching `func` at `x`:
/// `from_above` holds the derivatives of functions with
/// `φ ≥ func, φ(x) = func(x)` (the super-differential), `from_below`
/// those of functions touching from below (the sub-differential).
///
/// At a kink with left slope `a` and right slope `b`: from above the
/// interval is `[b, a]` when `b ≤ a` (concave kink) and empty otherwise;
/// from below it is `[a, b]` when `a ≤ b` and empty otherwise.  At
/// smooth points both are the singleton `{slope}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subdifferentials {
    pub from_above: DiffInterval,
    pub from_below: DiffInterval,
}

/// Computes the sub/super-differential derivative intervals of a
/// piecewise-linear function at `x` (which must lie in its breakpoint
/// range).
pub fn subdiff_interval(func: &PiecewiseLinear1D, x: Real) -> Result<Subdifferentials> {
    func.check_range(x)?;
    let xs = func.breakpoints();
    // Interior breakpoint hit exactly?
    let kink = (1..xs.len() - 1).find(|&i| xs[i] == x);
    let (a, b) = match kink {
        Some(i) => (func.slope(i - 1), func.slope(i)),
        None => {
            let i = func.segment_of(x);
            let s = func.slope(i);
            (s, s)
        }
    };
    let from_above = if b <= a {
        DiffInterval::Interval { lo: b, hi: a }
    } else {
        DiffInterval::Empty
    };
    let from_below = if a <= b {
        DiffInterval::Interval { lo: a, hi: b }
    } else {
        DiffInterval::Empty
    };
    Ok(Subdifferentials {
        from_above,
        from_below,
    })
}

/// Outcome of the two-equation counterexample check.
#[derive(Debug, Clone)]
pub struct Example51Report {
    /// Derivative interval of test functions above the first unknown at
    /// the kink: `[-3, 1]`.
    pub u_from_above: DiffInterval,
    /// Same for the second unknown: `[-1, 1]`.
    pub v_from_above: DiffInterval,
    /// `2 − |p| − q` at `(p, q) = (−3, 1)`: `−2`.
    pub operator_negative_case: Real,
    /// `2 − |p| − q` at `(p, q) = (0, 0)`: `+2`.
    pub operator_positive_case: Real,
    /// Both signs occur over admissible test gradients, so the classical
    /// definition cannot classify the first equation.
    pub classical_definition_fails: bool,
    /// The tent function passes the sub/super-solution inequalities for
    /// `1 − |v′| = 0` at the kink and at smooth points.
    pub v_is_viscosity_solution: bool,
    /// `1 − |v′|` at the smooth point `x = 0.5` (exactly zero).
    pub smooth_point_residual: Real,
}

/// The first-equation operator of the example system: `2 − |p| − q`,
/// where `p` is the first unknown's gradient and `q` the second's.
pub fn example51_operator(p: Real, q: Real) -> Real {
    2.0 - p.abs() - q
}

/// Builds the example's two piecewise-linear candidates and runs both
/// checks: the tent `ṽ` (slopes +1 then −1, peak 1 at x = 1) is a
/// viscosity solution of `1 − |v′| = 0`, while `ũ` (slopes +1 then −3,
/// value 3 at the kink) admits test gradients driving `2 − |u′| − v′`
/// strictly below and strictly above zero, so no classical viscosity
/// classification exists for the first equation.
pub fn check_example51() -> Example51Report {
    let v_tilde = PiecewiseLinear1D::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
    let u_tilde = PiecewiseLinear1D::new(vec![0.0, 1.0, 2.0], vec![2.0, 3.0, 0.0]).unwrap();

    let v_diff = subdiff_interval(&v_tilde, 1.0).unwrap();
    let u_diff = subdiff_interval(&u_tilde, 1.0).unwrap();

    let operator_negative_case = example51_operator(-3.0, 1.0);
    let operator_positive_case = example51_operator(0.0, 0.0);
    let classical_definition_fails = u_diff.from_above.contains(-3.0)
        && v_diff.from_above.contains(1.0)
        && operator_negative_case < 0.0
        && u_diff.from_above.contains(0.0)
        && v_diff.from_above.contains(0.0)
        && operator_positive_case > 0.0;

    // Sub-solution: 1 − |p| ≥ 0 for all super-differential gradients;
    // super-solution: 1 − |p| ≤ 0 for all sub-differential gradients.
    let sub_ok = |d: DiffInterval| match d {
        DiffInterval::Empty => true,
        DiffInterval::Interval { lo, hi } => 1.0 - lo.abs().max(hi.abs()) >= 0.0,
    };
    let super_ok = |d: DiffInterval| match d {
        DiffInterval::Empty => true,
        DiffInterval::Interval { lo, hi } => {
            let min_abs = if lo <= 0.0 && hi >= 0.0 {
                0.0
            } else {
                lo.abs().min(hi.abs())
            };
            1.0 - min_abs <= 0.0
        }
    };
    let mut v_ok = sub_ok(v_diff.from_above) && super_ok(v_diff.from_below);
    for &x in &[0.25, 0.5, 0.75, 1.25, 1.5, 1.75] {
        let d = subdiff_interval(&v_tilde, x).unwrap();
        v_ok = v_ok && sub_ok(d.from_above) && super_ok(d.from_below);
    }

    let smooth = subdiff_interval(&v_tilde, 0.5).unwrap();
    let smooth_slope = match smooth.from_above {
        DiffInterval::Interval { lo, .. } => lo,
        DiffInterval::Empty => unreachable!("smooth points carry a singleton"),
    };

    Example51Report {
        u_from_above: u_diff.from_above,
        v_from_above: v_diff.from_above,
        operator_negative_case,
        operator_positive_case,
        classical_definition_fails,
        v_is_viscosity_solution: v_ok,
        smooth_point_residual: 1.0 - smooth_slope.abs(),
    }
}
