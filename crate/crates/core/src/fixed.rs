//! Fixed points of the monotone piecewise-affine maps used by the solvers.
//!
//! Plain iteration runs until the step falls below the tolerance. Close to
//! the fixed point these maps often contract very slowly, so the iterate can
//! still be far from the fixed point. Newton steps on the active affine piece
//! then land on it exactly, and are kept only while they shrink the residual.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// A map evaluated at a point: the step `T(x) - x`, computed directly so
/// that small steps are not lost against large coordinates, and the slope of
/// each coordinate of `T` in its own direction.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Eval<const N: usize> {
    pub step: [f64; N],
    pub slope: [f64; N],
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct FixedPoint<const N: usize> {
    pub x: [f64; N],
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Schedule {
    pub tol: f64,
    pub max_iters: usize,
    /// Step size in (0, 1]; 1 is plain iteration.
    pub relaxation: f64,
}

/// Neumaier compensated sum. The maps' steps are differences of sums whose
/// terms nearly cancel at the fixed point; plain summation leaves noise there
/// that the slow contraction then magnifies.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Sum {
    sum: f64,
    comp: f64,
}

impl Sum {
    pub fn new(x: f64) -> Self {
        Sum { sum: x, comp: 0.0 }
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

const TRACE_LEN: usize = 64;
const POLISH_STEPS: usize = 64;

fn residual<const N: usize>(t: &Eval<N>) -> f64 {
    t.step.iter().fold(0.0, |m, s| m.max(s.abs()))
}

pub(crate) fn solve<const N: usize>(
    what: &'static str,
    start: [f64; N],
    schedule: Schedule,
    mut map: impl FnMut([f64; N]) -> Result<Eval<N>>,
) -> Result<FixedPoint<N>> {
    let mut x = start;
    let mut trace = VecDeque::with_capacity(TRACE_LEN);
    for it in 1..=schedule.max_iters {
        let t = map(x)?;
        let r = residual(&t);
        if r <= schedule.tol {
            let (x, residual) = polish(x, t, r, &mut map)?;
            return Ok(FixedPoint { x, iterations: it, residual });
        }
        let w = schedule.relaxation;
        for (xk, sk) in x.iter_mut().zip(t.step) {
            *xk += w * sk;
        }
        if trace.len() == TRACE_LEN {
            trace.pop_front();
        }
        trace.push_back(r);
    }
    Err(Error::NoConvergence {
        what,
        iterations: schedule.max_iters,
        last_residual: trace.back().copied().unwrap_or(f64::NAN),
        residual_trace: trace.into(),
    })
}

fn polish<const N: usize>(
    mut x: [f64; N],
    mut t: Eval<N>,
    mut r: f64,
    map: &mut impl FnMut([f64; N]) -> Result<Eval<N>>,
) -> Result<([f64; N], f64)> {
    for _ in 0..POLISH_STEPS {
        if r == 0.0 {
            break;
        }
        let mut cand = x;
        for k in 0..N {
            let gap = 1.0 - t.slope[k];
            cand[k] = x[k] + if gap > 0.0 { t.step[k] / gap } else { t.step[k] };
        }
        let tc = map(cand)?;
        let rc = residual(&tc);
        if rc >= r {
            break;
        }
        (x, t, r) = (cand, tc, rc);
    }
    Ok((x, r))
}

/// Scalar convenience wrapper; `map` returns the step and the slope.
pub(crate) fn solve_scalar(
    what: &'static str,
    start: f64,
    schedule: Schedule,
    mut map: impl FnMut(f64) -> (f64, f64),
) -> Result<FixedPoint<1>> {
    solve(what, [start], schedule, |[w]| {
        let (step, slope) = map(w);
        Ok(Eval { step: [step], slope: [slope] })
    })
}
