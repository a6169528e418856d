//! Building blocks of the update schedule: the Metropolis decision, local CAR
//! conditionals and the conjugate draws.

use faer::{Mat, MatRef};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg;
use crate::model::PriorSet;

/// Metropolis decision for a symmetric proposal. Returns whether the move is
/// accepted and its acceptance probability `min(1, exp(log_ratio))`.
pub fn metropolis_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> (bool, f64) {
    if log_ratio.is_nan() {
        return (false, 0.0);
    }
    if log_ratio >= 0.0 {
        return (true, 1.0);
    }
    let alpha = log_ratio.exp();
    (rng.random::<f64>() < alpha, alpha)
}

/// Change in `-(tau/2) w'Qw` when `w[i]` moves to `proposal`, computed from
/// vertex `i` and its neighbors only.
pub fn car_local_delta(graph: &Graph, w: &[f64], i: usize, proposal: f64, tau: f64) -> f64 {
    let old = w[i];
    let neighbor_sum: f64 = graph.neighbors(i).iter().map(|&j| w[j]).sum();
    let d = graph.degree(i) as f64;
    -0.5 * tau * (d * (proposal * proposal - old * old) - 2.0 * (proposal - old) * neighbor_sum)
}

/// Shape and rate of the full conditional of `tau` given the effects.
pub fn tau_conditional(priors: &PriorSet, k: usize, quad_form: f64) -> (f64, f64) {
    (
        priors.tau_shape + 0.5 * k as f64,
        1.0 / priors.tau_scale + 0.5 * quad_form,
    )
}

pub fn draw_tau<R: Rng + ?Sized>(priors: &PriorSet, k: usize, quad_form: f64, rng: &mut R) -> Result<f64> {
    let (shape, rate) = tau_conditional(priors, k, quad_form);
    draw_gamma(shape, rate, rng, "tau")
}

/// Inverse-gamma full conditional of `sigma2` given the residual sum of
/// squares over `n` observations.
pub fn draw_sigma2<R: Rng + ?Sized>(priors: &PriorSet, n: usize, rss: f64, rng: &mut R) -> Result<f64> {
    let precision = draw_gamma(priors.sigma2_shape + 0.5 * n as f64, priors.sigma2_rate + 0.5 * rss, rng, "sigma2")?;
    let s2 = 1.0 / precision;
    if !(s2.is_finite() && s2 > 0.0) {
        return Err(Error::NonFinite(format!("sigma2 draw {s2} (rss = {rss})")));
    }
    Ok(s2)
}

fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R, what: &str) -> Result<f64> {
    let dist = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::NonFinite(format!("{what} conditional gamma({shape}, rate {rate}): {e}")))?;
    let v = dist.sample(rng);
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else if v == 0.0 {
        Ok(f64::MIN_POSITIVE)
    } else {
        Err(Error::NonFinite(format!("{what} draw {v}")))
    }
}

/// A Gaussian block whose conditional precision has the form
/// `a S + c I` for a fixed symmetric `S = U diag(d) U'`. Each draw then costs
/// `O(k^2)` instead of a fresh factorization.
#[derive(Debug, Clone)]
pub struct EigenBlock {
    vectors: Mat<f64>,
    values: Vec<f64>,
}

impl EigenBlock {
    pub fn new(s: MatRef<'_, f64>) -> Result<Self> {
        let (mut values, vectors) = linalg::sym_eigen_desc(s)?;
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for v in values.iter_mut() {
            if *v < 1e-10 * scale {
                *v = 0.0;
            }
        }
        Ok(EigenBlock { vectors, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    /// Draws from `N(P^{-1} rhs, P^{-1})` with `P = a S + c I`. Directions
    /// with zero precision carry no information and keep their value in
    /// `current`.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        rhs: &[f64],
        a: f64,
        c: f64,
        current: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let u = self.vectors.as_ref();
        let y = linalg::mat_t_vec(u, rhs);
        let mut keep: Option<Vec<f64>> = None;
        let mut coef = vec![0.0; self.dim()];
        for j in 0..self.dim() {
            let precision = a * self.values[j] + c;
            if precision > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                coef[j] = y[j] / precision + z / precision.sqrt();
            } else if precision == 0.0 {
                let cur = keep.get_or_insert_with(|| linalg::mat_t_vec(u, current));
                coef[j] = cur[j];
            } else {
                return Err(Error::Cholesky {
                    what: "conditional precision".into(),
                    condition: f64::INFINITY,
                });
            }
        }
        let out = linalg::mat_vec(u, &coef);
        if out.iter().any(|v| !v.is_finite()) {
            let lo = self.values.iter().map(|&d| a * d + c).fold(f64::INFINITY, f64::min);
            let hi = self.values.iter().map(|&d| a * d + c).fold(0.0, f64::max);
            return Err(Error::Cholesky {
                what: "conditional precision".into(),
                condition: hi / lo,
            });
        }
        Ok(out)
    }

    /// `P^{-1} rhs` for `P = a S + c I`, used by tests and diagnostics.
    pub fn solve(&self, rhs: &[f64], a: f64, c: f64) -> Vec<f64> {
        let u = self.vectors.as_ref();
        let y = linalg::mat_t_vec(u, rhs);
        let coef: Vec<f64> = y
            .iter()
            .zip(&self.values)
            .map(|(yj, d)| yj / (a * d + c))
            .collect();
        linalg::mat_vec(u, &coef)
    }
}
