//! Class-weighted ridge regression on a binary target.
//!
//! Minimizes `sum_i w_i (z_i - (x_i . coef + intercept))^2 + alpha * |coef|^2`
//! with an unpenalized intercept. The intercept is eliminated by weighted
//! centering, leaving a symmetric positive definite system for the slopes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GateError, Result};
use crate::scalar::{compensated_sum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Dense Cholesky solve of the normal equations.
    ClosedForm,
    /// Damped LSQR; the only path where `tol` and `max_iter` matter.
    Lsqr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit<T> {
    pub coef: Vec<T>,
    pub intercept: T,
}

impl<T: Scalar> RidgeFit<T> {
    pub fn predict_row(&self, row: &[T]) -> T {
        compensated_sum(row.iter().zip(&self.coef).map(|(&x, &w)| x * w)) + self.intercept
    }

    pub fn predict(&self, x: &DMatrix<T>) -> Vec<T> {
        let coef = DVector::from_column_slice(&self.coef);
        let raw = x * coef;
        raw.iter().map(|&v| v + self.intercept).collect()
    }
}

/// Weighted objective value, used by tests and diagnostics.
pub fn ridge_objective<T: Scalar>(
    x: &DMatrix<T>,
    z: &[T],
    weights: &[T],
    alpha: T,
    coef: &[T],
    intercept: T,
) -> T {
    let fit = RidgeFit {
        coef: coef.to_vec(),
        intercept,
    };
    let pred = fit.predict(x);
    let loss = compensated_sum(
        pred.iter()
            .zip(z)
            .zip(weights)
            .map(|((&p, &t), &w)| w * (t - p) * (t - p)),
    );
    loss + alpha * compensated_sum(coef.iter().map(|&c| c * c))
}

struct Centered<T: Scalar> {
    xc: DMatrix<T>,
    zc: DVector<T>,
    x_mean: DVector<T>,
    z_mean: T,
}

fn center<T: Scalar>(x: &DMatrix<T>, z: &[T], weights: &[T]) -> Result<Centered<T>> {
    let (n, d) = x.shape();
    if z.len() != n || weights.len() != n {
        return Err(GateError::LengthMismatch {
            left: n,
            right: z.len().min(weights.len()),
        });
    }
    let w_total = compensated_sum(weights.iter().copied());
    if w_total <= T::zero() {
        return Err(GateError::InvalidInput(
            "weights must sum to a positive value".into(),
        ));
    }
    let z_mean = compensated_sum(z.iter().zip(weights).map(|(&t, &w)| t * w)) / w_total;
    let x_mean = DVector::from_fn(d, |j, _| {
        compensated_sum(x.column(j).iter().zip(weights).map(|(&v, &w)| v * w)) / w_total
    });
    let xc = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - x_mean[j]);
    let zc = DVector::from_fn(n, |i, _| z[i] - z_mean);
    Ok(Centered {
        xc,
        zc,
        x_mean,
        z_mean,
    })
}

fn finish<T: Scalar>(c: &Centered<T>, coef: DVector<T>) -> RidgeFit<T> {
    let intercept = c.z_mean - c.x_mean.dot(&coef);
    RidgeFit {
        coef: coef.iter().copied().collect(),
        intercept,
    }
}

pub fn fit_ridge_closed_form<T: Scalar>(
    x: &DMatrix<T>,
    z: &[T],
    weights: &[T],
    alpha: T,
) -> Result<RidgeFit<T>> {
    let c = center(x, z, weights)?;
    let d = x.ncols();
    let sqrt_w = DVector::from_iterator(weights.len(), weights.iter().map(|w| w.sqrt()));
    let mut xw = c.xc.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= sqrt_w[i];
    }
    let mut gram = xw.transpose() * &xw;
    for j in 0..d {
        gram[(j, j)] += alpha;
    }
    let zw = c.zc.component_mul(&sqrt_w);
    let rhs = xw.transpose() * zw;
    let chol = gram.cholesky().ok_or(GateError::SingularSystem)?;
    let coef = chol.solve(&rhs);
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(GateError::SingularSystem);
    }
    Ok(finish(&c, coef))
}

/// Damped LSQR (Paige & Saunders) on the weighted, centered system.
pub fn fit_ridge_lsqr<T: Scalar>(
    x: &DMatrix<T>,
    z: &[T],
    weights: &[T],
    alpha: T,
    tol: T,
    max_iter: usize,
) -> Result<RidgeFit<T>> {
    let c = center(x, z, weights)?;
    let sqrt_w = DVector::from_iterator(weights.len(), weights.iter().map(|w| w.sqrt()));
    let mut a = c.xc.clone();
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row *= sqrt_w[i];
    }
    let b = c.zc.component_mul(&sqrt_w);
    let coef = lsqr(&a, &b, alpha.max(T::zero()).sqrt(), tol, tol, max_iter);
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(GateError::SingularSystem);
    }
    Ok(finish(&c, coef))
}

fn lsqr<T: Scalar>(
    a: &DMatrix<T>,
    b: &DVector<T>,
    damp: T,
    atol: T,
    btol: T,
    iter_lim: usize,
) -> DVector<T> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut u = b.clone();
    let bnorm = u.norm();
    let mut beta = bnorm;
    if beta > T::zero() {
        u /= beta;
    } else {
        return x;
    }
    let mut v = a.tr_mul(&u);
    let mut alpha = v.norm();
    if alpha > T::zero() {
        v /= alpha;
    } else {
        return x;
    }
    let mut w = v.clone();
    let mut phibar = beta;
    let mut rhobar = alpha;
    let mut anorm = T::zero();
    let mut res2 = T::zero();

    for _ in 0..iter_lim {
        u = a * &v - &u * alpha;
        beta = u.norm();
        if beta > T::zero() {
            u /= beta;
        }
        anorm = (anorm * anorm + alpha * alpha + beta * beta + damp * damp).sqrt();
        v = a.tr_mul(&u) - &v * beta;
        alpha = v.norm();
        if alpha > T::zero() {
            v /= alpha;
        }

        let rhobar1 = (rhobar * rhobar + damp * damp).sqrt();
        let cs1 = rhobar / rhobar1;
        let sn1 = damp / rhobar1;
        let psi = sn1 * phibar;
        phibar *= cs1;

        let rho = (rhobar1 * rhobar1 + beta * beta).sqrt();
        let cs = rhobar1 / rho;
        let sn = beta / rho;
        let theta = sn * alpha;
        rhobar = -cs * alpha;
        let phi = cs * phibar;
        phibar *= sn;
        let tau = sn * phi;

        x += &w * (phi / rho);
        w = &v - &w * (theta / rho);

        res2 += psi * psi;
        let rnorm = (phibar * phibar + res2).sqrt();
        let arnorm = alpha * tau.abs();
        let xnorm = x.norm();
        let test1 = rnorm / bnorm;
        let test2 = arnorm / (anorm * rnorm + T::MACHINE_EPSILON);
        if test2 <= atol || test1 <= btol + atol * anorm * xnorm / bnorm || alpha == T::zero() {
            break;
        }
    }
    x
}

pub fn fit_ridge_weighted<T: Scalar>(
    x: &DMatrix<T>,
    z: &[T],
    weights: &[T],
    alpha: T,
    solver: Solver,
    tol: T,
    max_iter: usize,
) -> Result<RidgeFit<T>> {
    if alpha <= T::zero() {
        return Err(GateError::InvalidInput("alpha must be positive".into()));
    }
    match solver {
        Solver::ClosedForm => fit_ridge_closed_form(x, z, weights, alpha),
        Solver::Lsqr => fit_ridge_lsqr(x, z, weights, alpha, tol, max_iter),
    }
}
