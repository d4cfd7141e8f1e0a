use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop when the objective decreases by less than this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 5000,
        }
    }
}

fn objective(f: &DMatrix<f64>, nabla: &DVector<f64>, g: &DVector<f64>) -> f64 {
    (f * g).dot(g) - 2.0 * g.dot(nabla)
}

fn project(g: DVector<f64>, radius: f64) -> DVector<f64> {
    let n = g.norm();
    if n > radius {
        g * (radius / n)
    } else {
        g
    }
}

/// `argmin_{||g|| <= radius} g^T F g - 2 g^T nabla` for PSD `F`.
///
/// Starts from the better of the trust-region KKT point (from an
/// eigendecomposition) and the projected pseudo-inverse solution, then
/// refines with projected gradient descent using step `1 / (2 lambda_max + eps)`.
/// Each descent step is accepted only if it does not increase the objective.
pub fn solve_constrained_quadratic(
    f_hat: &DMatrix<f64>,
    nabla_hat: &DVector<f64>,
    radius: f64,
    tol: f64,
    max_iters: usize,
) -> Result<DVector<f64>> {
    let d = nabla_hat.len();
    if f_hat.nrows() != d || f_hat.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: f_hat.nrows(),
        });
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig("ball radius must be positive".into()));
    }
    if f_hat.iter().chain(nabla_hat.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite solver input".into()));
    }
    let grad_norm = nabla_hat.norm();
    if f_hat.iter().all(|&x| x == 0.0) {
        return Ok(if grad_norm > 0.0 {
            nabla_hat * (radius / grad_norm)
        } else {
            DVector::zeros(d)
        });
    }
    let sym = (f_hat + f_hat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lam_max = eig.eigenvalues.max().max(0.0);
    let floor = lam_max * 1e-12;
    let b = eig.eigenvectors.transpose() * nabla_hat;
    let from_coeffs = |mu: f64| -> DVector<f64> {
        let mut c = DVector::zeros(d);
        for i in 0..d {
            let l = eig.eigenvalues[i].max(0.0) + mu;
            if l > floor {
                c[i] = b[i] / l;
            }
        }
        &eig.eigenvectors * c
    };
    let pinv = from_coeffs(0.0);
    let null_mass: f64 = (0..d)
        .filter(|&i| eig.eigenvalues[i].max(0.0) <= floor)
        .map(|i| b[i] * b[i])
        .sum::<f64>()
        .sqrt();
    let kkt = if pinv.norm() <= radius && null_mass <= 1e-12 * grad_norm.max(1.0) {
        pinv.clone()
    } else {
        // ||g(mu)|| = ||(F + mu I)^{-1} nabla|| decreases in mu; find the root
        // of ||g(mu)|| = radius by bisection on [0, ||nabla|| / radius].
        let (mut lo, mut hi) = (0.0, grad_norm / radius);
        let norm_at = |mu: f64| -> f64 {
            (0..d)
                .map(|i| {
                    let l = eig.eigenvalues[i].max(0.0) + mu;
                    if l > 0.0 {
                        (b[i] / l).powi(2)
                    } else if b[i] != 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                .sqrt()
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_at(mid) > radius {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let mut c = DVector::zeros(d);
        for i in 0..d {
            c[i] = b[i] / (eig.eigenvalues[i].max(0.0) + hi);
        }
        project(&eig.eigenvectors * c, radius)
    };
    let projected = project(pinv, radius);
    let (mut g, mut obj) = {
        let (o1, o2) = (
            objective(f_hat, nabla_hat, &kkt),
            objective(f_hat, nabla_hat, &projected),
        );
        if o1 <= o2 {
            (kkt, o1)
        } else {
            (projected, o2)
        }
    };
    let step = 1.0 / (2.0 * lam_max + 1e-12);
    for _ in 0..max_iters {
        let grad = (f_hat * &g - nabla_hat) * 2.0;
        let cand = project(&g - grad * step, radius);
        let cand_obj = objective(f_hat, nabla_hat, &cand);
        if !(cand_obj <= obj) {
            break;
        }
        let decrease = obj - cand_obj;
        g = cand;
        obj = cand_obj;
        if decrease < tol {
            break;
        }
    }
    Ok(g)
}
