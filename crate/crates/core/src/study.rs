//! Fitting one simulated dataset under several models and tabulating the
//! results in the layout of a simulation-study report.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::basis::{moran_basis, rhz_basis, RankRule};
use crate::error::Result;
use crate::glm;
use crate::io::format_float;
use crate::model::{EffectBasis, Family, ModelSpec, Parameterization};
use crate::sampler::{self, McmcConfig};
use crate::simulate::SimulatedData;
use crate::summary::{self, ParameterSummary};

#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub model: Parameterization,
    /// Random-effect dimension, `None` for the nonspatial model.
    pub dim: Option<usize>,
    pub beta: Vec<ParameterSummary>,
    pub tau: Option<ParameterSummary>,
    pub sigma2: Option<ParameterSummary>,
    /// Distance between the true and the fitted mean surface.
    pub error_norm: f64,
    /// Basis construction plus sampling, in seconds.
    pub seconds: f64,
    pub glm_converged: Option<bool>,
}

impl StudyRow {
    pub fn beta_width(&self, j: usize) -> f64 {
        self.beta[j].eqt_hi - self.beta[j].eqt_lo
    }
}

/// Builds the random-effect basis a parameterization needs.
pub fn build_basis(data: &SimulatedData, model: Parameterization, q: usize) -> Result<EffectBasis> {
    Ok(match model {
        Parameterization::Nonspatial => EffectBasis::None,
        Parameterization::Traditional => EffectBasis::Traditional(data.graph.laplacian()),
        Parameterization::Rhz => EffectBasis::Rhz(rhz_basis(&data.x, &data.graph)?),
        Parameterization::Sparse => {
            if q == data.basis.q() {
                EffectBasis::Sparse(data.basis.clone())
            } else if q < data.basis.q() {
                EffectBasis::Sparse(data.basis.truncate(q, &data.graph.laplacian())?)
            } else {
                EffectBasis::Sparse(moran_basis(&data.x, &data.graph, RankRule::Fixed(q))?)
            }
        }
    })
}

/// Fits `data` under `model` (sparse models use `q` basis vectors) and
/// summarizes the chain.
pub fn fit_model(
    data: &SimulatedData,
    model: Parameterization,
    q: usize,
    cfg: &McmcConfig,
    level: f64,
) -> Result<StudyRow> {
    let started = Instant::now();
    let basis = build_basis(data, model, q)?;
    let mut spec = ModelSpec::new(data.family, model);
    if model == Parameterization::Sparse {
        spec.q = Some(q);
    }
    let cfg = McmcConfig {
        retain_effects: false,
        ..cfg.clone()
    };
    let chain = sampler::fit(&spec, &data.x, &data.z, &basis, &cfg)?;
    let seconds = started.elapsed().as_secs_f64();
    let beta = (0..data.x.p())
        .map(|j| ParameterSummary::from_draws(&chain.columns[j], &chain.beta_draws(j), level))
        .collect::<Result<Vec<_>>>()?;
    let tau = chain
        .tau_draws()
        .map(|d| ParameterSummary::from_draws("tau", &d, level))
        .transpose()?;
    let sigma2 = chain
        .sigma2_draws()
        .map(|d| ParameterSummary::from_draws("sigma2", &d, level))
        .transpose()?;
    let glm_converged = (model == Parameterization::Nonspatial && data.family != Family::Gaussian)
        .then(|| glm::irls_fit(data.family, &data.x, &data.z, None).map(|f| f.converged))
        .transpose()?;
    Ok(StudyRow {
        model,
        dim: (model != Parameterization::Nonspatial).then(|| basis.dim()),
        beta,
        tau,
        sigma2,
        error_norm: summary::error_norm(&data.mean, &chain.fitted_mean)?,
        seconds,
        glm_converged,
    })
}

fn interval(lo: f64, hi: f64) -> String {
    format!("({lo:.3}, {hi:.3})")
}

/// Markdown table with one row per model.
pub fn render_markdown(family: Family, rows: &[StudyRow]) -> String {
    let norm = match family {
        Family::Bernoulli => "‖p − p̂‖",
        Family::Poisson => "‖λ − λ̂‖",
        Family::Gaussian => "‖μ − μ̂‖",
    };
    let gaussian = family == Family::Gaussian;
    let mut s = String::new();
    let _ = write!(s, "| Model | Dim | β̂1 | CI(β1) | HPD(β1) | β̂2 | CI(β2) | HPD(β2) | τ̂ | CI(τ) |");
    if gaussian {
        let _ = write!(s, " σ̂² | CI(σ²) |");
    }
    let _ = writeln!(s, " {norm} | Time (s) |");
    let cols = if gaussian { 14 } else { 12 };
    let _ = writeln!(s, "|{}", "---|".repeat(cols));
    for r in rows {
        let dim = r.dim.map_or("--".to_string(), |d| d.to_string());
        let _ = write!(s, "| {} | {dim} |", r.model);
        for b in r.beta.iter().take(2) {
            let _ = write!(
                s,
                " {:.3} | {} | {} |",
                b.mean,
                interval(b.eqt_lo, b.eqt_hi),
                interval(b.hpd_lo, b.hpd_hi)
            );
        }
        match &r.tau {
            Some(t) => {
                let _ = write!(s, " {:.3} | {} |", t.mean, interval(t.eqt_lo, t.eqt_hi));
            }
            None => s.push_str(" -- | -- |"),
        }
        if gaussian {
            match &r.sigma2 {
                Some(t) => {
                    let _ = write!(s, " {:.3} | {} |", t.mean, interval(t.eqt_lo, t.eqt_hi));
                }
                None => s.push_str(" -- | -- |"),
            }
        }
        let _ = writeln!(s, " {:.3} | {:.1} |", r.error_norm, r.seconds);
    }
    s
}

/// The same rows as CSV. Fields of absent `tau` and `sigma2` blocks are
/// left empty.
pub fn rows_csv(rows: &[StudyRow]) -> String {
    let mut s = String::from(
        "model,dim,beta1,beta1_lo,beta1_hi,beta1_hpd_lo,beta1_hpd_hi,beta2,beta2_lo,beta2_hi,beta2_hpd_lo,beta2_hpd_hi,tau,tau_lo,tau_hi,sigma2,sigma2_lo,sigma2_hi,error_norm,seconds\n",
    );
    let opt = |p: &Option<ParameterSummary>| match p {
        Some(p) => format!("{},{},{}", format_float(p.mean), format_float(p.eqt_lo), format_float(p.eqt_hi)),
        None => ",,".to_string(),
    };
    for r in rows {
        let _ = write!(s, "{},{},", r.model, r.dim.map_or(String::new(), |d| d.to_string()));
        for b in r.beta.iter().take(2) {
            let _ = write!(
                s,
                "{},{},{},{},{},",
                format_float(b.mean),
                format_float(b.eqt_lo),
                format_float(b.eqt_hi),
                format_float(b.hpd_lo),
                format_float(b.hpd_hi)
            );
        }
        let _ = writeln!(
            s,
            "{},{},{},{}",
            opt(&r.tau),
            opt(&r.sigma2),
            format_float(r.error_norm),
            format_float(r.seconds)
        );
    }
    s
}
