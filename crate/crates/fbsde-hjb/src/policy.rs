//! Markov feedback policies `u(t, x)`.

use crate::error::{Error, Result};
use crate::problem::ControlBox;
use crate::Real;

/// Evaluable feedback control, possibly vector-valued.
pub trait Policy: Send + Sync {
    /// Control dimension `k`.
    fn control_dim(&self) -> usize;

    /// Writes `u(t, x)` into `out` (length `k`).  Implementations clamp
    /// `t` and `x` to their covered range.
    fn eval(&self, t: Real, x: &[Real], out: &mut [Real]);
}

/// Grid-sampled scalar feedback policy: piecewise-linear in `x`,
/// piecewise-constant (right-continuous) in `t`.
///
/// Samples live on a time-knot by x-node lattice.  Evaluation clamps both
/// coordinates to the sampled range, so the policy is total on
/// `[0, ∞) × ℝ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackPolicy {
    t_knots: Vec<Real>,
    x_nodes: Vec<Real>,
    /// Row-major: `values[slice * x_nodes.len() + node]`.
    values: Vec<Real>,
    lipschitz_k: Real,
}

impl FeedbackPolicy {
    /// Builds a policy from raw samples.
    ///
    /// `values` is row-major over (time slice, node).  Knots and nodes must
    /// be strictly increasing; the per-slice Lipschitz bound is *not*
    /// enforced here (see [`FeedbackPolicy::lipschitz_ok`]).
    pub fn new(
        t_knots: Vec<Real>,
        x_nodes: Vec<Real>,
        values: Vec<Real>,
        lipschitz_k: Real,
    ) -> Result<Self> {
        if t_knots.is_empty() || x_nodes.is_empty() {
            return Err(Error::InvalidArgument(
                "policy needs at least one time knot and one x-node".into(),
            ));
        }
        if !strictly_increasing(&t_knots) {
            return Err(Error::InvalidArgument(
                "policy time knots must be strictly increasing".into(),
            ));
        }
        if !strictly_increasing(&x_nodes) {
            return Err(Error::InvalidArgument(
                "policy x-nodes must be strictly increasing".into(),
            ));
        }
        if values.len() != t_knots.len() * x_nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "policy value count {} does not match {} slices x {} nodes",
                values.len(),
                t_knots.len(),
                x_nodes.len()
            )));
        }
        if lipschitz_k < 0.0 || !lipschitz_k.is_finite() {
            return Err(Error::InvalidArgument(
                "policy Lipschitz constant must be finite and nonnegative".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "policy samples must be finite".into(),
            ));
        }
        Ok(FeedbackPolicy {
            t_knots,
            x_nodes,
            values,
            lipschitz_k,
        })
    }

    /// Constant policy `u(t, x) = u0` covering `[t0, t1] × [x_lo, x_hi]`.
    pub fn constant(u0: Real, t0: Real, t1: Real, x_lo: Real, x_hi: Real) -> Result<Self> {
        FeedbackPolicy::new(vec![t0, t1], vec![x_lo, x_hi], vec![u0; 4], 0.0)
    }

    /// Samples `f(t, x)` on the given lattice.
    pub fn from_fn(
        t_knots: Vec<Real>,
        x_nodes: Vec<Real>,
        lipschitz_k: Real,
        f: impl Fn(Real, Real) -> Real,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(t_knots.len() * x_nodes.len());
        for &t in &t_knots {
            for &x in &x_nodes {
                values.push(f(t, x));
            }
        }
        FeedbackPolicy::new(t_knots, x_nodes, values, lipschitz_k)
    }

    pub fn t_knots(&self) -> &[Real] {
        &self.t_knots
    }

    pub fn x_nodes(&self) -> &[Real] {
        &self.x_nodes
    }

    pub fn values(&self) -> &[Real] {
        &self.values
    }

    pub fn lipschitz_k(&self) -> Real {
        self.lipschitz_k
    }

    pub fn slice(&self, j: usize) -> &[Real] {
        let nx = self.x_nodes.len();
        &self.values[j * nx..(j + 1) * nx]
    }

    /// Index of the time slice governing time `t` (right-continuous:
    /// the last knot `<= t`, clamped to the covered range).
    pub fn slice_index(&self, t: Real) -> usize {
        match self
            .t_knots
            .iter()
            .rposition(|&knot| knot <= t)
        {
            Some(j) => j,
            None => 0,
        }
    }

    /// Evaluates the policy: right-constant in `t`, linear in `x`,
    /// clamped at the spatial edges.
    pub fn value(&self, t: Real, x: Real) -> Real {
        let j = self.slice_index(t);
        let slice = self.slice(j);
        let nodes = &self.x_nodes;
        if x <= nodes[0] {
            return slice[0];
        }
        let last = nodes.len() - 1;
        if x >= nodes[last] {
            return slice[last];
        }
        let i = nodes.partition_point(|&n| n <= x) - 1;
        let i = i.min(last - 1);
        let w = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
        slice[i] + w * (slice[i + 1] - slice[i])
    }

    /// True when every sample lies inside the control box.
    pub fn in_box(&self, control: &ControlBox) -> bool {
        let lo = control.lower[0];
        let hi = control.upper[0];
        self.values.iter().all(|&v| v >= lo && v <= hi)
    }

    /// True when every time slice satisfies the grid Lipschitz bound
    /// `|u(t_j, x_{i+1}) - u(t_j, x_i)| <= K |x_{i+1} - x_i|`.
    ///
    /// A tiny relative slack absorbs roundoff from the projection sweeps.
    pub fn lipschitz_ok(&self) -> bool {
        let nx = self.x_nodes.len();
        for j in 0..self.t_knots.len() {
            let slice = self.slice(j);
            for i in 0..nx - 1 {
                let dx = self.x_nodes[i + 1] - self.x_nodes[i];
                let bound = self.lipschitz_k * dx;
                if (slice[i + 1] - slice[i]).abs() > bound * (1.0 + 1e-12) + 1e-300 {
                    return false;
                }
            }
        }
        true
    }

    /// Sup-norm distance between the samples of two policies on the same
    /// lattice.
    pub fn sup_distance(&self, other: &FeedbackPolicy) -> Result<Real> {
        if self.t_knots != other.t_knots || self.x_nodes != other.x_nodes {
            return Err(Error::InvalidArgument(
                "policies live on different lattices".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, Real::max))
    }

    /// Total variation of `t -> u(t, x)` for a piecewise-constant-in-t
    /// policy: the sum of jumps across time knots at fixed `x`.
    pub fn total_variation_in_t(&self, x: Real) -> Real {
        let mut tv = 0.0;
        let mut prev = self.value(self.t_knots[0], x);
        for &t in &self.t_knots[1..] {
            let cur = self.value(t, x);
            tv += (cur - prev).abs();
            prev = cur;
        }
        tv
    }

    /// Returns a copy with every sample shifted by `delta` and clamped to
    /// the control box.
    pub fn shifted(&self, delta: Real, control: &ControlBox) -> FeedbackPolicy {
        let lo = control.lower[0];
        let hi = control.upper[0];
        let mut out = self.clone();
        for v in &mut out.values {
            *v = (*v + delta).clamp(lo, hi);
        }
        out
    }
}

impl Policy for FeedbackPolicy {
    fn control_dim(&self) -> usize {
        1
    }

    fn eval(&self, t: Real, x: &[Real], out: &mut [Real]) {
        out[0] = self.value(t, x[0]);
    }
}

/// Constant vector control, for uncontrolled or multi-dimensional runs.
#[derive(Debug, Clone)]
pub struct ConstantPolicy {
    pub u: Vec<Real>,
}

impl Policy for ConstantPolicy {
    fn control_dim(&self) -> usize {
        self.u.len()
    }

    fn eval(&self, _t: Real, _x: &[Real], out: &mut [Real]) {
        out.copy_from_slice(&self.u);
    }
}

fn strictly_increasing(v: &[Real]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}
