//! Time-stamped frames produced by the propagators.

use crate::error::{invalid, Result};
use crate::scalar::{from_usize, lit, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T: Real, S> {
    pub times: Vec<T>,
    pub frames: Vec<S>,
}

impl<T: Real, S> Trajectory<T, S> {
    pub fn new() -> Self {
        Trajectory { times: Vec::new(), frames: Vec::new() }
    }

    pub fn push(&mut self, t: T, frame: S) {
        self.times.push(t);
        self.frames.push(frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn last(&self) -> Option<&S> {
        self.frames.last()
    }
}

impl<T: Real, S> Default for Trajectory<T, S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Number of steps covering `[0, t_end]` with steps no longer than `dt`,
/// and the resulting uniform step.
pub fn step_count<T: Real>(dt: T, t_end: T) -> Result<(usize, T)> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(invalid("dt", "must be positive"));
    }
    if !(t_end >= T::zero()) || !t_end.is_finite() {
        return Err(invalid("t_end", "must be non-negative"));
    }
    let ratio = t_end / dt;
    let mut n = ratio.round();
    if (ratio - n).abs() > lit::<T>(1e-9) * ratio.max(T::one()) {
        n = ratio.ceil();
    }
    let steps = crate::scalar::to_f64(n) as usize;
    if steps == 0 {
        return Ok((0, dt));
    }
    Ok((steps, t_end / from_usize(steps)))
}

/// Least-squares slope of `ln y` against `t`.
pub fn log_growth_rate<T: Real>(times: &[T], values: &[T]) -> Result<T> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(invalid("values", "need at least two matching samples"));
    }
    if values.iter().any(|v| !(*v > T::zero())) {
        return Err(invalid("values", "must be positive"));
    }
    let n = from_usize::<T>(times.len());
    let logs: Vec<T> = values.iter().map(|v| v.ln()).collect();
    let tm = times.iter().fold(T::zero(), |a, &b| a + b) / n;
    let lm = logs.iter().fold(T::zero(), |a, &b| a + b) / n;
    let mut num = T::zero();
    let mut den = T::zero();
    for (t, l) in times.iter().zip(&logs) {
        num += (*t - tm) * (*l - lm);
        den += (*t - tm) * (*t - tm);
    }
    if den == T::zero() {
        return Err(invalid("times", "must not all coincide"));
    }
    Ok(num / den)
}
