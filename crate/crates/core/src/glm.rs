//! Classical GLM fits by iteratively reweighted least squares. Provides the
//! nonspatial baseline and the proposal covariance for random-walk updates
//! of the regression coefficients.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::Mat;
use serde::Serialize;

use crate::basis::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::Family;

pub const MAX_ITERATIONS: usize = 100;
pub const STEP_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct IrlsStep {
    pub iteration: usize,
    pub max_step: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct GlmFit {
    pub beta_hat: Vec<f64>,
    /// Inverse Fisher information at `beta_hat`, scaled by the dispersion
    /// estimate for the Gaussian family.
    pub cov_hat: Mat<f64>,
    pub sigma2_hat: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IrlsStep>,
}

impl GlmFit {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.beta_hat.len())
            .map(|j| self.cov_hat[(j, j)].sqrt())
            .collect()
    }
}

fn weights_and_mean(family: Family, eta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let link = family.canonical_link();
    let mu: Vec<f64> = eta.iter().map(|&e| link.inverse(e)).collect();
    let w = mu
        .iter()
        .map(|&m| match family {
            Family::Bernoulli => m * (1.0 - m),
            Family::Poisson => m,
            Family::Gaussian => 1.0,
        })
        .collect();
    (w, mu)
}

fn weighted_cross_product(x: &DesignMatrix, w: &[f64]) -> Mat<f64> {
    let p = x.p();
    let mut xtwx = Mat::<f64>::zeros(p, p);
    for a in 0..p {
        let ca = x.column(a);
        for b in 0..=a {
            let cb = x.column(b);
            let s: f64 = (0..w.len()).map(|i| ca[i] * w[i] * cb[i]).sum();
            xtwx[(a, b)] = s;
            xtwx[(b, a)] = s;
        }
    }
    xtwx
}

fn kernel_log_likelihood(family: Family, z: &[f64], eta: &[f64]) -> f64 {
    z.iter()
        .zip(eta)
        .map(|(&zi, &ei)| family.log_kernel(zi, ei, 1.0))
        .sum()
}

/// Maximum likelihood fit with the canonical link, starting from `beta = 0`.
/// Stops when `max |delta beta| < 1e-8` or after 100 iterations. A fit that
/// stops for any other reason (divergence under separation, vanishing
/// weights) is returned with `converged = false` and its iteration trace.
pub fn irls_fit(family: Family, x: &DesignMatrix, z: &[f64], offset: Option<&[f64]>) -> Result<GlmFit> {
    let (n, p) = (x.n(), x.p());
    if z.len() != n {
        return Err(Error::mismatch("response length", n, z.len()));
    }
    family.validate_response(z)?;
    let log_offset: Option<Vec<f64>> = match offset {
        Some(o) => {
            if family != Family::Poisson {
                return Err(Error::InvalidArgument("offsets require the poisson family".into()));
            }
            if o.len() != n {
                return Err(Error::mismatch("offset length", n, o.len()));
            }
            if let Some((i, v)) = o.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::NonPositive {
                    name: format!("offset[{i}]"),
                    value: *v,
                });
            }
            Some(o.iter().map(|v| v.ln()).collect())
        }
        None => None,
    };
    let predictor = |beta: &[f64]| {
        let mut eta = x.mul(beta);
        if let Some(lo) = &log_offset {
            eta.iter_mut().zip(lo).for_each(|(e, o)| *e += o);
        }
        eta
    };

    let mut beta = vec![0.0; p];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for iteration in 0..MAX_ITERATIONS {
        let eta = predictor(&beta);
        let (w, mu) = weights_and_mean(family, &eta);
        let xtwx = weighted_cross_product(x, &w);
        let llt = match xtwx.llt(faer::Side::Lower) {
            Ok(l) => l,
            Err(_) if iteration == 0 => return Err(Error::SingularSystem { iteration }),
            Err(_) => break,
        };
        let resid: Vec<f64> = z.iter().zip(&mu).map(|(zi, m)| zi - m).collect();
        let score = linalg::mat_t_vec(x.matrix(), &resid);
        let step = llt.solve(faer::ColRef::from_slice(&score));
        let max_step = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if !max_step.is_finite() {
            break;
        }
        beta.iter_mut().zip(step.iter()).for_each(|(b, s)| *b += s);
        iterations = iteration + 1;
        trace.push(IrlsStep {
            iteration: iterations,
            max_step,
            log_likelihood: kernel_log_likelihood(family, z, &predictor(&beta)),
        });
        if max_step < STEP_TOLERANCE {
            converged = true;
            break;
        }
    }

    let eta = predictor(&beta);
    let (w, mu) = weights_and_mean(family, &eta);
    let xtwx = weighted_cross_product(x, &w);
    let mut cov_hat = match xtwx.llt(faer::Side::Lower) {
        Ok(llt) => llt.inverse(),
        Err(_) => {
            converged = false;
            Mat::from_fn(p, p, |i, j| if i == j { f64::INFINITY } else { 0.0 })
        }
    };
    let sigma2_hat = (family == Family::Gaussian).then(|| {
        let rss: f64 = z.iter().zip(&mu).map(|(zi, m)| (zi - m).powi(2)).sum();
        rss / (n - p) as f64
    });
    if let Some(s2) = sigma2_hat {
        for j in 0..p {
            for i in 0..p {
                cov_hat[(i, j)] *= s2;
            }
        }
    }
    linalg::symmetrize(&mut cov_hat);
    Ok(GlmFit {
        beta_hat: beta,
        cov_hat,
        sigma2_hat,
        iterations,
        converged,
        trace,
    })
}

/// Inverse Fisher information `(X' W X)^{-1}` at `beta`, without any
/// dispersion factor.
pub fn information_inverse(family: Family, x: &DesignMatrix, beta: &[f64], offset: Option<&[f64]>) -> Result<Mat<f64>> {
    if beta.len() != x.p() {
        return Err(Error::mismatch("beta length", x.p(), beta.len()));
    }
    let mut eta = x.mul(beta);
    if let Some(o) = offset {
        eta.iter_mut().zip(o).for_each(|(e, v)| *e += v.ln());
    }
    let (w, _) = weights_and_mean(family, &eta);
    let xtwx = weighted_cross_product(x, &w);
    let mut inv = linalg::cholesky(xtwx.as_ref(), "fisher information")?.inverse();
    linalg::symmetrize(&mut inv);
    Ok(inv)
}

/// Fitted means `g^{-1}(X beta_hat + log offset)`.
pub fn fitted_means(family: Family, x: &DesignMatrix, beta: &[f64], offset: Option<&[f64]>) -> Vec<f64> {
    let link = family.canonical_link();
    let mut eta = x.mul(beta);
    if let Some(o) = offset {
        eta.iter_mut().zip(o).for_each(|(e, v)| *e += v.ln());
    }
    eta.into_iter().map(|e| link.inverse(e)).collect()
}
