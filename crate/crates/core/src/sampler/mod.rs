//! MCMC fitting for every parameterization and family.
//!
//! Each iteration updates `beta`, the random effects, `tau` and `sigma2`, in
//! that order. Bernoulli and Poisson models use random-walk Metropolis for
//! `beta` (proposal covariance `s^2 V`, with `V` from the GLM fit) and for
//! the effects (a spherical block proposal for RHZ and sparse, single-site
//! proposals for the traditional model), and a conjugate gamma draw for
//! `tau`. Gaussian models are sampled entirely by Gibbs steps.
//!
//! Random-effect proposals are scaled by `tau^{-1/2}`, the prior standard
//! deviation scale of the effects.
//!
//! Every chain draws from `ChaCha20Rng::seed_from_u64(seed)` on stream
//! `stream`; chain `c` of [`fit_chains`] uses stream `c`.

mod adapt;
mod chain;
mod config;
pub mod kernels;

pub use adapt::{Scaler, MIN_STEP};
pub use chain::{column_names, Chain, CsvSink, DrawSink, NullSink, Timing};
pub use config::{McmcConfig, StepSizes};

use std::collections::BTreeMap;
use std::time::Instant;

use faer::{Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::DesignMatrix;
use crate::error::{Error, Result};
use crate::glm;
use crate::graph::Graph;
use crate::linalg;
use crate::model::{self, EffectBasis, Family, ModelSpec, ParameterState};
use kernels::EigenBlock;

/// Runs one chain and keeps its draws in memory.
pub fn fit(spec: &ModelSpec, x: &DesignMatrix, z: &[f64], basis: &EffectBasis, cfg: &McmcConfig) -> Result<Chain> {
    fit_stream(spec, x, z, basis, cfg, 0, &mut NullSink)
}

/// Runs one chain on RNG stream `stream`, sending every retained draw to
/// `sink` as it is produced.
pub fn fit_stream(
    spec: &ModelSpec,
    x: &DesignMatrix,
    z: &[f64],
    basis: &EffectBasis,
    cfg: &McmcConfig,
    stream: u64,
    sink: &mut dyn DrawSink,
) -> Result<Chain> {
    let started = Instant::now();
    let mut engine = Engine::new(spec, x, z, basis, cfg, stream)?;
    let mut chain = engine.run(sink)?;
    chain.timing.total = started.elapsed().as_secs_f64();
    Ok(chain)
}

/// Runs one chain per sink concurrently, chain `c` on RNG stream `c`.
pub fn fit_chains(
    spec: &ModelSpec,
    x: &DesignMatrix,
    z: &[f64],
    basis: &EffectBasis,
    cfg: &McmcConfig,
    sinks: Vec<Box<dyn DrawSink + Send + '_>>,
) -> Result<Vec<Chain>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = sinks
            .into_iter()
            .enumerate()
            .map(|(c, mut sink)| scope.spawn(move || fit_stream(spec, x, z, basis, cfg, c as u64, sink.as_mut())))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::InvalidArgument("chain thread panicked".into()))))
            .collect()
    })
}

const RESCALE_STEP: f64 = 0.5;

enum EffectKernel {
    None,
    Block(Scaler),
    Sites { graph: Graph, scalers: Vec<Scaler> },
}

enum Kernels {
    Metropolis {
        /// Lower Cholesky factor of the GLM covariance.
        beta_factor: Mat<f64>,
        beta: Scaler,
        effects: EffectKernel,
        /// Joint move `theta -> c theta`, `tau -> tau / c^2`.
        rescale: Option<Scaler>,
        /// Component labels of the traditional model's graph. The move
        /// leaves per-component means of `w` alone.
        components: Option<(Vec<usize>, usize)>,
    },
    Gibbs {
        beta: EigenBlock,
        effects: Option<EigenBlock>,
    },
}

struct Engine<'a> {
    spec: &'a ModelSpec,
    x: &'a DesignMatrix,
    z: &'a [f64],
    basis: &'a EffectBasis,
    cfg: &'a McmcConfig,
    use_likelihood: bool,
    spatial: bool,
    log_offset: Vec<f64>,
    beta: Vec<f64>,
    theta: Vec<f64>,
    tau: f64,
    sigma2: f64,
    xb: Vec<f64>,
    eta: Vec<f64>,
    loglik: f64,
    quad: f64,
    kernels: Kernels,
    rng: ChaCha20Rng,
    timing: Timing,
    stream: u64,
    // scratch buffers
    eta_prop: Vec<f64>,
    xb_prop: Vec<f64>,
}

fn kernel_sum(family: Family, z: &[f64], eta: &[f64], sigma2: f64) -> f64 {
    z.iter().zip(eta).map(|(&zi, &ei)| family.log_kernel(zi, ei, sigma2)).sum()
}

fn normals(rng: &mut ChaCha20Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| StandardNormal.sample(rng)).collect()
}

fn lower_times(l: MatRef<'_, f64>, v: &[f64], scale: f64, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, vj) in v.iter().enumerate().take(i + 1) {
            acc += l[(i, j)] * vj;
        }
        *o = scale * acc;
    }
}

impl<'a> Engine<'a> {
    fn new(
        spec: &'a ModelSpec,
        x: &'a DesignMatrix,
        z: &'a [f64],
        basis: &'a EffectBasis,
        cfg: &'a McmcConfig,
        stream: u64,
    ) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        let n = x.n();
        if z.len() != n {
            return Err(Error::mismatch("response length", n, z.len()));
        }
        spec.family.validate_response(z)?;
        let log_offset = match spec.log_offset() {
            Some(o) if o.len() != n => return Err(Error::mismatch("offset length", n, o.len())),
            Some(o) => o,
            None => vec![0.0; n],
        };
        let k = basis.dim();
        let spatial = spec.parameterization.is_spatial();
        let p = x.p();
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);

        let gaussian = spec.family == Family::Gaussian;
        let sigma2 = if gaussian {
            match cfg.fixed_sigma2 {
                Some(s) => s,
                None => {
                    let mean = z.iter().sum::<f64>() / n as f64;
                    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
                    if var > 0.0 { var } else { 1.0 }
                }
            }
        } else {
            1.0
        };
        let tau = cfg.fixed_tau.unwrap_or(1.0);

        let (beta, kernels) = if gaussian {
            let mut xtx = Mat::<f64>::zeros(p, p);
            faer::linalg::matmul::matmul(
                xtx.as_mut(),
                faer::Accum::Replace,
                x.matrix().transpose(),
                x.matrix(),
                1.0,
                faer::Par::Seq,
            );
            linalg::symmetrize(&mut xtx);
            let effects = match basis {
                EffectBasis::None => None,
                EffectBasis::Traditional(q) => Some(EigenBlock::new(q.to_dense().as_ref())?),
                EffectBasis::Rhz(b) => Some(EigenBlock::new(b.reduced_precision())?),
                EffectBasis::Sparse(b) => Some(EigenBlock::new(b.reduced_precision())?),
            };
            (
                vec![0.0; p],
                Kernels::Gibbs {
                    beta: EigenBlock::new(xtx.as_ref())?,
                    effects,
                },
            )
        } else {
            let offset = spec.offset.as_deref();
            let (beta, cov) = match glm::irls_fit(spec.family, x, z, offset) {
                Ok(f) if f.converged => (f.beta_hat, f.cov_hat),
                other => {
                    let why = match other {
                        Ok(f) => format!("did not converge in {} iterations", f.iterations),
                        Err(e) => e.to_string(),
                    };
                    log::warn!("GLM fit {why}; starting beta at 0 with the information at 0");
                    let zero = vec![0.0; p];
                    let cov = glm::information_inverse(spec.family, x, &zero, offset)?;
                    (zero, cov)
                }
            };
            let factor = linalg::cholesky(cov.as_ref(), "GLM covariance")?.L().to_owned();
            let beta_step = cfg.initial_step_sizes.beta.unwrap_or(2.38 / (p as f64).sqrt());
            let adapt = cfg.adapt;
            let effects = match basis {
                EffectBasis::None => EffectKernel::None,
                EffectBasis::Traditional(q) => {
                    let step = cfg.initial_step_sizes.effects.unwrap_or(1.0);
                    EffectKernel::Sites {
                        graph: q.graph().clone(),
                        scalers: (0..k)
                            .map(|_| Scaler::new(step, cfg.target_accept_univariate, adapt))
                            .collect(),
                    }
                }
                _ => {
                    let step = cfg
                        .initial_step_sizes
                        .effects
                        .unwrap_or(2.38 / (k.max(1) as f64).sqrt());
                    EffectKernel::Block(Scaler::new(step, cfg.target_accept_multivariate, adapt))
                }
            };
            let rescale = (k > 0 && cfg.fixed_tau.is_none())
                .then(|| Scaler::new(RESCALE_STEP, cfg.target_accept_univariate, adapt));
            let components = match basis {
                EffectBasis::Traditional(q) => {
                    let labels = q.graph().component_labels();
                    let count = labels.iter().max().map_or(0, |m| m + 1);
                    Some((labels, count))
                }
                _ => None,
            };
            (
                beta,
                Kernels::Metropolis {
                    beta_factor: factor,
                    beta: Scaler::new(beta_step, cfg.target_accept_multivariate, adapt),
                    effects,
                    rescale,
                    components,
                },
            )
        };

        let mut xb = x.mul(&beta);
        xb.iter_mut().zip(&log_offset).for_each(|(v, o)| *v += o);
        let eta = xb.clone();
        let theta = vec![0.0; k];
        let use_likelihood = !cfg.prior_only;

        // exact log posterior at the starting point
        let state = ParameterState {
            beta: beta.clone(),
            effects: theta.clone(),
            tau: spatial.then_some(tau),
            sigma2: gaussian.then_some(sigma2),
        };
        let ll = model::log_likelihood(spec, z, &eta, state.sigma2)?;
        let lp = model::log_prior(spec, basis, &state)?;
        if !(ll + lp).is_finite() {
            return Err(Error::NonFinite(format!(
                "log posterior at the initial state: log-likelihood {ll}, log-prior {lp}"
            )));
        }
        let loglik = if use_likelihood {
            kernel_sum(spec.family, z, &eta, sigma2)
        } else {
            0.0
        };

        Ok(Engine {
            spec,
            x,
            z,
            basis,
            cfg,
            use_likelihood,
            spatial,
            log_offset,
            beta,
            theta,
            tau,
            sigma2,
            xb,
            eta,
            loglik,
            quad: 0.0,
            kernels,
            rng,
            timing: Timing::default(),
            stream,
            eta_prop: vec![0.0; n],
            xb_prop: vec![0.0; n],
        })
    }

    fn freeze(&mut self) {
        if let Kernels::Metropolis {
            beta, effects, rescale, ..
        } = &mut self.kernels
        {
            beta.freeze();
            if let Some(r) = rescale {
                r.freeze();
            }
            match effects {
                EffectKernel::Block(s) => s.freeze(),
                EffectKernel::Sites { scalers, .. } => scalers.iter_mut().for_each(Scaler::freeze),
                EffectKernel::None => {}
            }
        }
    }

    fn run(&mut self, sink: &mut dyn DrawSink) -> Result<Chain> {
        let cfg = self.cfg;
        let p = self.x.p();
        let k = self.basis.dim();
        let gaussian = self.spec.family == Family::Gaussian;
        let columns = column_names(self.x.names(), self.spec.parameterization, k, self.spatial, gaussian);
        sink.start(&columns)?;
        let width = columns.len();
        let keep_effects = cfg.retain_effects || k == 0;
        let kept_width = if keep_effects { width } else { width - k };
        let mut values = Vec::with_capacity(cfg.retained() * kept_width);
        let mut fitted_sum = vec![0.0; self.x.n()];
        let mut row = Vec::with_capacity(width);
        let link = self.spec.family.canonical_link();
        let mut retained = 0usize;

        for t in 0..cfg.iterations {
            if t == cfg.burn_in {
                self.freeze();
            }
            self.iterate()?;
            if t >= cfg.burn_in && (t - cfg.burn_in + 1).is_multiple_of(cfg.thin) {
                row.clear();
                row.extend_from_slice(&self.beta);
                row.extend_from_slice(&self.theta);
                if self.spatial {
                    row.push(self.tau);
                }
                if gaussian {
                    row.push(self.sigma2);
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("non-finite draw at iteration {t}")));
                }
                sink.record(&row)?;
                if keep_effects {
                    values.extend_from_slice(&row);
                } else {
                    values.extend_from_slice(&row[..p]);
                    values.extend_from_slice(&row[p + k..]);
                }
                fitted_sum.iter_mut().zip(&self.eta).for_each(|(s, e)| *s += link.inverse(*e));
                retained += 1;
            }
        }
        sink.finish()?;
        self.timing.iterations = cfg.iterations;

        let mut acceptance_rates = BTreeMap::new();
        let mut step_sizes = BTreeMap::new();
        if let Kernels::Metropolis {
            beta, effects, rescale, ..
        } = &self.kernels
        {
            acceptance_rates.insert("beta".to_string(), beta.acceptance_rate());
            step_sizes.insert("beta".to_string(), beta.step());
            if let Some(r) = rescale {
                acceptance_rates.insert("rescale".to_string(), r.acceptance_rate());
                step_sizes.insert("rescale".to_string(), r.step());
            }
            match effects {
                EffectKernel::Block(s) => {
                    acceptance_rates.insert("effects".to_string(), s.acceptance_rate());
                    step_sizes.insert("effects".to_string(), s.step());
                }
                EffectKernel::Sites { scalers, .. } => {
                    let acc: u64 = scalers.iter().map(Scaler::accepted).sum();
                    let prop: u64 = scalers.iter().map(Scaler::proposed).sum();
                    acceptance_rates.insert("effects".to_string(), acc as f64 / prop.max(1) as f64);
                    let mean_step = scalers.iter().map(Scaler::step).sum::<f64>() / scalers.len().max(1) as f64;
                    step_sizes.insert("effects".to_string(), mean_step);
                }
                EffectKernel::None => {}
            }
        }

        let mut kept_columns = columns;
        if !keep_effects {
            kept_columns.drain(p..p + k);
        }
        Ok(Chain {
            columns: kept_columns,
            p,
            effects: k,
            effects_retained: keep_effects,
            has_tau: self.spatial,
            has_sigma2: gaussian,
            values,
            acceptance_rates,
            step_sizes,
            timing: self.timing,
            seed: cfg.seed,
            stream: self.stream,
            spec: self.spec.clone(),
            config: cfg.clone(),
            fitted_mean: fitted_sum.into_iter().map(|s| s / retained.max(1) as f64).collect(),
        })
    }

    fn iterate(&mut self) -> Result<()> {
        let t0 = Instant::now();
        if matches!(self.kernels, Kernels::Gibbs { .. }) {
            self.gibbs_beta()?;
            let t1 = Instant::now();
            self.timing.beta_update += (t1 - t0).as_secs_f64();
            self.gibbs_effects()?;
            let t2 = Instant::now();
            self.timing.effect_update += (t2 - t1).as_secs_f64();
        } else {
            self.update_beta_rw();
            let t1 = Instant::now();
            self.timing.beta_update += (t1 - t0).as_secs_f64();
            self.update_effects_rw();
            let t2 = Instant::now();
            self.timing.effect_update += (t2 - t1).as_secs_f64();
        }
        let t3 = Instant::now();
        self.update_hyperparameters()?;
        self.timing.hyper_update += t3.elapsed().as_secs_f64();
        Ok(())
    }

    fn update_beta_rw(&mut self) {
        let Kernels::Metropolis { beta_factor, beta: scaler, .. } = &mut self.kernels else {
            unreachable!()
        };
        let p = self.beta.len();
        let eps = normals(&mut self.rng, p);
        let mut step = vec![0.0; p];
        lower_times(beta_factor.as_ref(), &eps, scaler.step(), &mut step);
        let proposal: Vec<f64> = self.beta.iter().zip(&step).map(|(b, s)| b + s).collect();

        linalg::gemv(&mut self.xb_prop, self.x.matrix(), &proposal, 1.0, false);
        self.xb_prop.iter_mut().zip(&self.log_offset).for_each(|(v, o)| *v += o);
        for i in 0..self.eta.len() {
            self.eta_prop[i] = self.eta[i] - self.xb[i] + self.xb_prop[i];
        }
        let ll = if self.use_likelihood {
            kernel_sum(self.spec.family, self.z, &self.eta_prop, 1.0)
        } else {
            0.0
        };
        let v = self.spec.priors.beta_variance;
        let prior_delta = -0.5 * (linalg::dot(&proposal, &proposal) - linalg::dot(&self.beta, &self.beta)) / v;
        let (accept, alpha) = kernels::metropolis_accept(ll - self.loglik + prior_delta, &mut self.rng);
        scaler.observe(alpha, accept);
        if accept {
            self.beta = proposal;
            std::mem::swap(&mut self.xb, &mut self.xb_prop);
            std::mem::swap(&mut self.eta, &mut self.eta_prop);
            self.loglik = ll;
        }
    }

    fn update_effects_rw(&mut self) {
        let Kernels::Metropolis { effects, .. } = &mut self.kernels else {
            unreachable!()
        };
        let family = self.spec.family;
        match effects {
            EffectKernel::None => {}
            EffectKernel::Block(scaler) => {
                let k = self.theta.len();
                let t0 = Instant::now();
                let s = scaler.step() / self.tau.sqrt();
                let mut d = normals(&mut self.rng, k);
                d.iter_mut().for_each(|v| *v *= s);
                let proposal: Vec<f64> = self.theta.iter().zip(&d).map(|(a, b)| a + b).collect();
                let quad = self.basis.quad_form(&proposal);
                self.timing.effect_prior += t0.elapsed().as_secs_f64();

                self.eta_prop.copy_from_slice(&self.eta);
                self.basis.add_apply(&d, &mut self.eta_prop);
                let ll = if self.use_likelihood {
                    kernel_sum(family, self.z, &self.eta_prop, 1.0)
                } else {
                    0.0
                };
                let log_ratio = ll - self.loglik - 0.5 * self.tau * (quad - self.quad);
                let (accept, alpha) = kernels::metropolis_accept(log_ratio, &mut self.rng);
                scaler.observe(alpha, accept);
                if accept {
                    self.theta = proposal;
                    self.quad = quad;
                    self.loglik = ll;
                    std::mem::swap(&mut self.eta, &mut self.eta_prop);
                }
            }
            EffectKernel::Sites { graph, scalers } => {
                let sd = 1.0 / self.tau.sqrt();
                for i in 0..self.theta.len() {
                    let scaler = &mut scalers[i];
                    let e: f64 = StandardNormal.sample(&mut self.rng);
                    let dw = scaler.step() * sd * e;
                    let proposal = self.theta[i] + dw;
                    let prior_delta = kernels::car_local_delta(graph, &self.theta, i, proposal, self.tau);
                    let lik_delta = if self.use_likelihood {
                        let zi = self.z[i];
                        family.log_kernel(zi, self.eta[i] + dw, 1.0) - family.log_kernel(zi, self.eta[i], 1.0)
                    } else {
                        0.0
                    };
                    let (accept, alpha) = kernels::metropolis_accept(lik_delta + prior_delta, &mut self.rng);
                    scaler.observe(alpha, accept);
                    if accept {
                        self.theta[i] = proposal;
                        self.eta[i] += dw;
                    }
                }
                self.quad = self.basis.quad_form(&self.theta);
                if self.use_likelihood {
                    self.loglik = kernel_sum(family, self.z, &self.eta, 1.0);
                }
            }
        }
    }

    fn gibbs_beta(&mut self) -> Result<()> {
        let Kernels::Gibbs { beta: block, .. } = &self.kernels else {
            unreachable!()
        };
        let v = self.spec.priors.beta_variance;
        let (rhs, a) = if self.use_likelihood {
            // X'(z - B theta) / sigma2
            let resid: Vec<f64> = (0..self.z.len())
                .map(|i| self.z[i] - (self.eta[i] - self.xb[i]))
                .collect();
            let mut r = linalg::mat_t_vec(self.x.matrix(), &resid);
            r.iter_mut().for_each(|v| *v /= self.sigma2);
            (r, 1.0 / self.sigma2)
        } else {
            (vec![0.0; self.beta.len()], 0.0)
        };
        let beta = block.draw(&rhs, a, 1.0 / v, &self.beta, &mut self.rng)?;
        linalg::gemv(&mut self.xb_prop, self.x.matrix(), &beta, 1.0, false);
        self.xb_prop.iter_mut().zip(&self.log_offset).for_each(|(v, o)| *v += o);
        for i in 0..self.eta.len() {
            self.eta[i] += self.xb_prop[i] - self.xb[i];
        }
        std::mem::swap(&mut self.xb, &mut self.xb_prop);
        self.beta = beta;
        Ok(())
    }

    fn gibbs_effects(&mut self) -> Result<()> {
        let Kernels::Gibbs { effects: Some(block), .. } = &self.kernels else {
            return Ok(());
        };
        let (rhs, c) = if self.use_likelihood {
            let resid: Vec<f64> = self.z.iter().zip(&self.xb).map(|(z, xb)| z - xb).collect();
            let mut r = self.basis.apply_transpose(&resid);
            r.iter_mut().for_each(|v| *v /= self.sigma2);
            (r, 1.0 / self.sigma2)
        } else {
            (vec![0.0; self.theta.len()], 0.0)
        };
        let t0 = Instant::now();
        let theta = block.draw(&rhs, self.tau, c, &self.theta, &mut self.rng)?;
        self.quad = self.basis.quad_form(&theta);
        self.timing.effect_prior += t0.elapsed().as_secs_f64();
        self.eta.copy_from_slice(&self.xb);
        self.basis.add_apply(&theta, &mut self.eta);
        self.theta = theta;
        Ok(())
    }

    /// Moves along the ridge where `tau * theta'Q theta` is constant. Only
    /// the part of `theta` outside the null space of `Q` is scaled, so the
    /// random-effect prior density and the volume terms cancel and the ratio
    /// involves the likelihood and the `tau` prior alone.
    fn rescale_effects(&mut self) {
        let Kernels::Metropolis {
            rescale: Some(scaler),
            components,
            ..
        } = &mut self.kernels
        else {
            return;
        };
        let e: f64 = StandardNormal.sample(&mut self.rng);
        let log_c = scaler.step() * e;
        let c = log_c.exp();
        let tau_prop = self.tau / (c * c);
        let mut proposal = self.theta.clone();
        match components {
            Some((labels, count)) => {
                let mut sums = vec![0.0; *count];
                let mut sizes = vec![0usize; *count];
                for (&l, &w) in labels.iter().zip(&self.theta) {
                    sums[l] += w;
                    sizes[l] += 1;
                }
                for ((w, &l), (eta, xb)) in proposal.iter_mut().zip(labels.iter()).zip(self.eta_prop.iter_mut().zip(&self.xb)) {
                    let m = sums[l] / sizes[l] as f64;
                    *w = m + c * (*w - m);
                    *eta = xb + *w;
                }
            }
            None => {
                proposal.iter_mut().for_each(|v| *v *= c);
                for i in 0..self.eta.len() {
                    self.eta_prop[i] = self.xb[i] + c * (self.eta[i] - self.xb[i]);
                }
            }
        }
        let ll = if self.use_likelihood {
            kernel_sum(self.spec.family, self.z, &self.eta_prop, 1.0)
        } else {
            0.0
        };
        let priors = &self.spec.priors;
        let tau_term = priors.tau_shape * (tau_prop.ln() - self.tau.ln()) - (tau_prop - self.tau) / priors.tau_scale;
        let (accept, alpha) = kernels::metropolis_accept(ll - self.loglik + tau_term, &mut self.rng);
        scaler.observe(alpha, accept);
        if accept && tau_prop.is_finite() && tau_prop > 0.0 {
            self.tau = tau_prop;
            self.theta = proposal;
            self.quad = self.basis.quad_form(&self.theta);
            self.loglik = ll;
            std::mem::swap(&mut self.eta, &mut self.eta_prop);
        }
    }

    fn update_hyperparameters(&mut self) -> Result<()> {
        self.rescale_effects();
        if self.spatial && self.cfg.fixed_tau.is_none() {
            self.tau = kernels::draw_tau(
                &self.spec.priors,
                self.basis.tau_exponent_dim(),
                self.quad,
                &mut self.rng,
            )?;
        }
        if self.spec.family == Family::Gaussian && self.cfg.fixed_sigma2.is_none() && self.use_likelihood {
            let rss: f64 = self.z.iter().zip(&self.eta).map(|(z, e)| (z - e).powi(2)).sum();
            self.sigma2 = kernels::draw_sigma2(&self.spec.priors, self.z.len(), rss, &mut self.rng)?;
        }
        Ok(())
    }
}
