//! Score calibrators: Platt sigmoid and isotonic (pool-adjacent-violators).

use std::ops::{Add, Mul};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{compensated_sum, Scalar};

pub const PLATT_MAX_ITER: usize = 100;
pub const PLATT_GRAD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    Sigmoid,
    Isotonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("Platt scaling did not converge (gradient {grad_norm:e} after {iterations} iterations)")]
pub struct NonConvergence {
    pub grad_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattFit<T> {
    pub a: T,
    pub b: T,
}

fn sigmoid<T: Scalar>(f: T) -> T {
    if f >= T::zero() {
        T::one() / (T::one() + (-f).exp())
    } else {
        let e = f.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^f)` without overflow.
fn softplus<T: Scalar>(f: T) -> T {
    if f > T::zero() {
        f + (-f).exp().ln_1p()
    } else {
        f.exp().ln_1p()
    }
}

fn platt_targets<T: Scalar>(z: &[bool]) -> Vec<T> {
    let n_pos = z.iter().filter(|&&v| v).count();
    let n_neg = z.len() - n_pos;
    let hi = T::from_count(n_pos + 1) / T::from_count(n_pos + 2);
    let lo = T::one() / T::from_count(n_neg + 2);
    z.iter().map(|&v| if v { hi } else { lo }).collect()
}

fn platt_nll<T: Scalar>(scores: &[T], targets: &[T], a: T, b: T) -> T {
    compensated_sum(scores.iter().zip(targets).map(|(&s, &t)| {
        let f = a * s + b;
        // -[t ln σ(f) + (1-t) ln(1-σ(f))] = t softplus(-f) + (1-t) softplus(f)
        t * softplus(-f) + (T::one() - t) * softplus(f)
    }))
}

/// Fit `P(z = 1 | s) = σ(a s + b)` by Newton's method on smoothed targets.
pub fn fit_platt<T: Scalar>(scores: &[T], z: &[bool]) -> Result<PlattFit<T>, NonConvergence> {
    let targets: Vec<T> = platt_targets(z);
    let n = T::from_count(scores.len().max(1));
    let mean_t = compensated_sum(targets.iter().copied()) / n;

    let lo = scores.iter().copied().fold(T::INFINITY, |m, v| m.min(v));
    let hi = scores
        .iter()
        .copied()
        .fold(T::NEG_INFINITY, |m, v| m.max(v));
    if scores.is_empty() || hi <= lo {
        // Flat likelihood along `a`; pin a = 0.
        return Ok(PlattFit {
            a: T::zero(),
            b: (mean_t / (T::one() - mean_t)).ln(),
        });
    }

    let tol = T::lit(PLATT_GRAD_TOL).max(T::lit(100.0) * T::MACHINE_EPSILON * n);
    let ridge = T::lit(1e-12);
    let (mut a, mut b) = (T::zero(), (mean_t / (T::one() - mean_t)).ln());
    let mut value = platt_nll(scores, &targets, a, b);
    let mut grad_norm = T::INFINITY;
    for _ in 0..PLATT_MAX_ITER {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (&s, &t) in scores.iter().zip(&targets) {
            let p = sigmoid(a * s + b);
            let d = p - t;
            let w = p * (T::one() - p);
            ga.push(d * s);
            gb.push(d);
            haa.push(w * s * s);
            hab.push(w * s);
            hbb.push(w);
        }
        let (ga, gb) = (compensated_sum(ga), compensated_sum(gb));
        grad_norm = ga.abs().max(gb.abs());
        if grad_norm < tol {
            return Ok(PlattFit { a, b });
        }
        let (haa, hab, hbb) = (
            compensated_sum(haa) + ridge,
            compensated_sum(hab),
            compensated_sum(hbb) + ridge,
        );
        let det = haa * hbb - hab * hab;
        let da = -(hbb * ga - hab * gb) / det;
        let db = -(haa * gb - hab * ga) / det;
        let slope = ga * da + gb * db;

        let mut step = T::one();
        let min_step = T::lit(1e-10);
        loop {
            let (na, nb) = (a + step * da, b + step * db);
            let nv = platt_nll(scores, &targets, na, nb);
            if nv <= value + T::lit(1e-4) * step * slope {
                a = na;
                b = nb;
                value = nv;
                break;
            }
            step /= T::lit(2.0);
            if step < min_step {
                return Err(NonConvergence {
                    grad_norm: grad_norm.as_f64(),
                    iterations: PLATT_MAX_ITER,
                });
            }
        }
    }
    Err(NonConvergence {
        grad_norm: grad_norm.as_f64(),
        iterations: PLATT_MAX_ITER,
    })
}

impl<T: Scalar> PlattFit<T> {
    pub fn apply(&self, s: T) -> T {
        sigmoid(self.a * s + self.b)
    }
}

/// Pool-adjacent-violators on pre-pooled `(sum_y, weight)` blocks.
///
/// Returns one fitted value per input block, non-decreasing, minimizing the
/// weighted squared error. Generic over any ordered field so it can run on
/// exact rationals as well as floats.
pub fn pava<T>(blocks: &[(T, T)]) -> Vec<T>
where
    T: Clone
        + PartialOrd
        + Zero
        + One
        + Add<Output = T>
        + Mul<Output = T>
        + std::ops::Div<Output = T>,
{
    // (sum_y, weight, number of input blocks)
    let mut stack: Vec<(T, T, usize)> = Vec::with_capacity(blocks.len());
    for (sy, w) in blocks.iter().cloned() {
        let mut cur = (sy, w, 1usize);
        while let Some(prev) = stack.last() {
            // prev.mean > cur.mean  <=>  prev.sy * cur.w > cur.sy * prev.w  (weights positive)
            if prev.0.clone() * cur.1.clone() > cur.0.clone() * prev.1.clone() {
                let prev = stack.pop().expect("non-empty");
                cur = (prev.0 + cur.0, prev.1 + cur.1, prev.2 + cur.2);
            } else {
                break;
            }
        }
        stack.push(cur);
    }
    let mut out = Vec::with_capacity(blocks.len());
    for (sy, w, count) in stack {
        let v = sy / w;
        out.extend(std::iter::repeat_n(v, count));
    }
    out
}

/// Non-decreasing step function over sorted distinct score knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit<T> {
    pub knots: Vec<T>,
    pub values: Vec<T>,
}

pub fn fit_isotonic<T: Scalar>(scores: &[T], z: &[bool]) -> IsotonicFit<T> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[i]
            .partial_cmp(&scores[j])
            .expect("finite scores")
            .then(i.cmp(&j))
    });

    let mut knots: Vec<T> = Vec::new();
    let mut blocks: Vec<(T, T)> = Vec::new();
    for i in order {
        let y = if z[i] { T::one() } else { T::zero() };
        match knots.last() {
            Some(&k) if k == scores[i] => {
                let last = blocks.last_mut().expect("paired with knot");
                last.0 += y;
                last.1 += T::one();
            }
            _ => {
                knots.push(scores[i]);
                blocks.push((y, T::one()));
            }
        }
    }
    let values = pava(&blocks);
    IsotonicFit { knots, values }
}

impl<T: Scalar> IsotonicFit<T> {
    /// Left-constant step evaluation, clamped to `[0, 1]`.
    pub fn apply(&self, s: T) -> T {
        if self.knots.is_empty() {
            return T::lit(0.5);
        }
        let idx = self.knots.partition_point(|&k| k <= s);
        let v = if idx == 0 {
            self.values[0]
        } else {
            self.values[idx - 1]
        };
        v.max(T::zero()).min(T::one())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Calibrator<T> {
    Sigmoid {
        a: T,
        b: T,
    },
    Isotonic {
        knots: Vec<T>,
        values: Vec<T>,
    },
    /// Raw score clamped to `[0, 1]`; used when Platt fitting fails.
    Identity,
}

impl<T: Scalar> Calibrator<T> {
    pub fn fit(method: CalibrationMethod, scores: &[T], z: &[bool]) -> Self {
        match method {
            CalibrationMethod::Sigmoid => match fit_platt(scores, z) {
                Ok(PlattFit { a, b }) => Calibrator::Sigmoid { a, b },
                Err(err) => {
                    tracing::warn!(%err, "falling back to identity calibration");
                    Calibrator::Identity
                }
            },
            CalibrationMethod::Isotonic => {
                let IsotonicFit { knots, values } = fit_isotonic(scores, z);
                Calibrator::Isotonic { knots, values }
            }
        }
    }

    pub fn apply(&self, s: T) -> T {
        match self {
            Calibrator::Sigmoid { a, b } => PlattFit { a: *a, b: *b }.apply(s),
            Calibrator::Isotonic { knots, values } => IsotonicFit {
                knots: knots.clone(),
                values: values.clone(),
            }
            .apply(s),
            Calibrator::Identity => s.max(T::zero()).min(T::one()),
        }
    }
}
