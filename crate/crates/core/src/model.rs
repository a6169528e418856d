//! Model specification (family, link, parameterization, priors, offset) and
//! the exact log densities shared by every sampler.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::{DesignMatrix, MoranBasis, RhzBasis};
use crate::error::{Error, Result};
use crate::graph::PrecisionMatrix;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Bernoulli,
    Poisson,
    Gaussian,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Bernoulli, Family::Poisson, Family::Gaussian];

    pub fn name(self) -> &'static str {
        match self {
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
            Family::Gaussian => "gaussian",
        }
    }

    pub fn canonical_link(self) -> Link {
        match self {
            Family::Bernoulli => Link::Logit,
            Family::Poisson => Link::Log,
            Family::Gaussian => Link::Identity,
        }
    }

    /// Checks that every observation is in the family's support.
    pub fn validate_response(self, z: &[f64]) -> Result<()> {
        for (index, &value) in z.iter().enumerate() {
            let ok = match self {
                Family::Bernoulli => value == 0.0 || value == 1.0,
                Family::Poisson => value.is_finite() && value >= 0.0 && value.fract() == 0.0,
                Family::Gaussian => value.is_finite(),
            };
            if !ok {
                return Err(Error::InvalidResponse {
                    index,
                    family: self.name(),
                    value,
                });
            }
        }
        Ok(())
    }

    /// Log density of one observation given its linear predictor, without
    /// parameter-free constants (`-ln z!` for Poisson, `-ln(2 pi)/2` for
    /// Gaussian).
    #[inline]
    pub(crate) fn log_kernel(self, z: f64, eta: f64, sigma2: f64) -> f64 {
        match self {
            Family::Bernoulli => z * eta - softplus(eta),
            Family::Poisson => z * eta - eta.exp(),
            Family::Gaussian => {
                let r = z - eta;
                -0.5 * (sigma2.ln() + r * r / sigma2)
            }
        }
    }

    /// Sum of the constants dropped by [`Family::log_kernel`].
    pub(crate) fn log_constant(self, z: &[f64]) -> f64 {
        match self {
            Family::Bernoulli => 0.0,
            Family::Poisson => -z.iter().map(|&k| ln_factorial(k as u64)).sum::<f64>(),
            Family::Gaussian => -0.5 * z.len() as f64 * (2.0 * std::f64::consts::PI).ln(),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown family {s:?}; allowed values: bernoulli, poisson, gaussian"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Log,
    Identity,
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::Logit => "logit",
            Link::Log => "log",
            Link::Identity => "identity",
        }
    }

    /// Mean from linear predictor.
    #[inline]
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logit => logistic(eta),
            Link::Log => eta.exp(),
            Link::Identity => eta,
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(Link::Logit),
            "log" => Ok(Link::Log),
            "identity" => Ok(Link::Identity),
            _ => Err(Error::InvalidArgument(format!(
                "unknown link {s:?}; allowed values: logit, log, identity"
            ))),
        }
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln k!`, exact summation for small `k` and a Stirling series above.
pub(crate) fn ln_factorial(k: u64) -> f64 {
    if k < 256 {
        (2..=k).map(|i| (i as f64).ln()).sum()
    } else {
        let x = k as f64 + 1.0;
        // ln Gamma(x) Stirling series
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    Nonspatial,
    Traditional,
    Rhz,
    Sparse,
}

impl Parameterization {
    pub fn name(self) -> &'static str {
        match self {
            Parameterization::Nonspatial => "nonspatial",
            Parameterization::Traditional => "traditional",
            Parameterization::Rhz => "rhz",
            Parameterization::Sparse => "sparse",
        }
    }

    pub fn is_spatial(self) -> bool {
        self != Parameterization::Nonspatial
    }
}

impl fmt::Display for Parameterization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Parameterization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonspatial" => Ok(Parameterization::Nonspatial),
            "traditional" => Ok(Parameterization::Traditional),
            "rhz" => Ok(Parameterization::Rhz),
            "sparse" => Ok(Parameterization::Sparse),
            _ => Err(Error::InvalidArgument(format!(
                "unknown model {s:?}; allowed values: nonspatial, traditional, rhz, sparse"
            ))),
        }
    }
}

/// Prior hyperparameters. `tau ~ Gamma(shape, scale)`, `beta ~ N(0, v I)`,
/// `sigma2 ~ InvGamma(shape, rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    pub beta_variance: f64,
    pub tau_shape: f64,
    pub tau_scale: f64,
    pub sigma2_shape: f64,
    pub sigma2_rate: f64,
}

impl Default for PriorSet {
    fn default() -> Self {
        PriorSet {
            beta_variance: 100.0,
            tau_shape: 0.5,
            tau_scale: 2000.0,
            sigma2_shape: 0.001,
            sigma2_rate: 0.001,
        }
    }
}

impl PriorSet {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("beta_variance", self.beta_variance),
            ("tau_shape", self.tau_shape),
            ("tau_scale", self.tau_scale),
            ("sigma2_shape", self.sigma2_shape),
            ("sigma2_rate", self.sigma2_rate),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositive {
                    name: name.into(),
                    value,
                });
            }
        }
        Ok(())
    }

    pub fn tau_mean(&self) -> f64 {
        self.tau_shape * self.tau_scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub link: Link,
    pub parameterization: Parameterization,
    /// Random-effect dimension for the sparse parameterization.
    pub q: Option<usize>,
    pub priors: PriorSet,
    /// Multiplicative exposure, Poisson only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub offset: Option<Vec<f64>>,
}

impl ModelSpec {
    pub fn new(family: Family, parameterization: Parameterization) -> Self {
        ModelSpec {
            family,
            link: family.canonical_link(),
            parameterization,
            q: None,
            priors: PriorSet::default(),
            offset: None,
        }
    }

    pub fn sparse(family: Family, q: usize) -> Self {
        ModelSpec {
            q: Some(q),
            ..ModelSpec::new(family, Parameterization::Sparse)
        }
    }

    pub fn with_priors(mut self, priors: PriorSet) -> Self {
        self.priors = priors;
        self
    }

    pub fn with_offset(mut self, offset: Vec<f64>) -> Self {
        self.offset = Some(offset);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.link != self.family.canonical_link() {
            return Err(Error::InvalidArgument(format!(
                "link {} is not the canonical link of the {} family",
                self.link.name(),
                self.family
            )));
        }
        match (self.parameterization, self.q) {
            (Parameterization::Sparse, None) | (Parameterization::Sparse, Some(0)) => {
                return Err(Error::InvalidArgument(
                    "the sparse model needs q >= 1 random effects".into(),
                ))
            }
            (p, Some(_)) if p != Parameterization::Sparse => {
                return Err(Error::InvalidArgument(format!(
                    "q only applies to the sparse model, not {p}"
                )))
            }
            _ => {}
        }
        if let Some(offset) = &self.offset {
            if self.family != Family::Poisson {
                return Err(Error::InvalidArgument(format!(
                    "offsets are only supported for the poisson family, not {}",
                    self.family
                )));
            }
            if let Some((i, v)) = offset
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.is_finite() && **v > 0.0))
            {
                return Err(Error::NonPositive {
                    name: format!("offset[{i}]"),
                    value: *v,
                });
            }
        }
        self.priors.validate()
    }

    /// `log(offset)`, if an offset is present.
    pub fn log_offset(&self) -> Option<Vec<f64>> {
        self.offset
            .as_ref()
            .map(|o| o.iter().map(|v| v.ln()).collect())
    }
}

/// One state of the chain. `tau` is absent for the nonspatial model and
/// `sigma2` outside the Gaussian family.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub beta: Vec<f64>,
    pub effects: Vec<f64>,
    pub tau: Option<f64>,
    pub sigma2: Option<f64>,
}

/// The random-effect basis `B` and prior precision `Q_B` for each
/// parameterization: `B = I, Q_B = Q` (traditional), `B = L, Q_B = Q_R`
/// (RHZ) and `B = M, Q_B = Q_S` (sparse).
#[derive(Debug, Clone)]
pub enum EffectBasis {
    None,
    Traditional(PrecisionMatrix),
    Rhz(RhzBasis),
    Sparse(MoranBasis),
}

impl EffectBasis {
    pub fn parameterization(&self) -> Parameterization {
        match self {
            EffectBasis::None => Parameterization::Nonspatial,
            EffectBasis::Traditional(_) => Parameterization::Traditional,
            EffectBasis::Rhz(_) => Parameterization::Rhz,
            EffectBasis::Sparse(_) => Parameterization::Sparse,
        }
    }

    /// Number of random effects.
    pub fn dim(&self) -> usize {
        match self {
            EffectBasis::None => 0,
            EffectBasis::Traditional(q) => q.n(),
            EffectBasis::Rhz(b) => b.dim(),
            EffectBasis::Sparse(b) => b.q(),
        }
    }

    /// Exponent `k` in the `tau^{k/2}` factor of the effect prior.
    pub fn tau_exponent_dim(&self) -> usize {
        match self {
            EffectBasis::Traditional(q) => q.rank(),
            other => other.dim(),
        }
    }

    /// `theta' Q_B theta`.
    pub fn quad_form(&self, theta: &[f64]) -> f64 {
        match self {
            EffectBasis::None => 0.0,
            EffectBasis::Traditional(q) => q.quad_form(theta),
            EffectBasis::Rhz(b) => linalg::sym_quad_form(b.reduced_precision(), theta),
            EffectBasis::Sparse(b) => linalg::sym_quad_form(b.reduced_precision(), theta),
        }
    }

    /// `out += B theta`.
    pub fn add_apply(&self, theta: &[f64], out: &mut [f64]) {
        match self {
            EffectBasis::None => {}
            EffectBasis::Traditional(_) => out.iter_mut().zip(theta).for_each(|(o, t)| *o += t),
            EffectBasis::Rhz(b) => linalg::gemv(out, b.vectors(), theta, 1.0, true),
            EffectBasis::Sparse(b) => linalg::gemv(out, b.vectors(), theta, 1.0, true),
        }
    }

    /// `B' v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        match self {
            EffectBasis::None => Vec::new(),
            EffectBasis::Traditional(_) => v.to_vec(),
            EffectBasis::Rhz(b) => linalg::mat_t_vec(b.vectors(), v),
            EffectBasis::Sparse(b) => linalg::mat_t_vec(b.vectors(), v),
        }
    }

    /// Vertex count the basis is defined on, if any.
    pub fn n(&self) -> Option<usize> {
        match self {
            EffectBasis::None => None,
            EffectBasis::Traditional(q) => Some(q.n()),
            EffectBasis::Rhz(b) => Some(b.vectors().nrows()),
            EffectBasis::Sparse(b) => Some(b.n()),
        }
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.parameterization() != spec.parameterization {
            return Err(Error::InvalidArgument(format!(
                "the {} model needs a matching basis, got one for {}",
                spec.parameterization,
                self.parameterization()
            )));
        }
        if let (EffectBasis::Sparse(b), Some(q)) = (self, spec.q) {
            if b.q() != q {
                return Err(Error::mismatch("sparse basis rank q", q, b.q()));
            }
        }
        Ok(())
    }
}

fn check_state(spec: &ModelSpec, x: &DesignMatrix, basis: &EffectBasis, state: &ParameterState) -> Result<()> {
    basis.check(spec)?;
    if state.beta.len() != x.p() {
        return Err(Error::mismatch("beta length", x.p(), state.beta.len()));
    }
    if state.effects.len() != basis.dim() {
        return Err(Error::mismatch("random effect length", basis.dim(), state.effects.len()));
    }
    if let Some(n) = basis.n() {
        if n != x.n() {
            return Err(Error::mismatch("basis rows vs. design rows", x.n(), n));
        }
    }
    Ok(())
}

/// `eta = X beta + B theta (+ log offset)`.
pub fn linear_predictor(
    spec: &ModelSpec,
    x: &DesignMatrix,
    basis: &EffectBasis,
    state: &ParameterState,
) -> Result<Vec<f64>> {
    check_state(spec, x, basis, state)?;
    let mut eta = x.mul(&state.beta);
    basis.add_apply(&state.effects, &mut eta);
    if let Some(offset) = &spec.offset {
        if offset.len() != eta.len() {
            return Err(Error::mismatch("offset length", eta.len(), offset.len()));
        }
        eta.iter_mut().zip(offset).for_each(|(e, o)| *e += o.ln());
    }
    Ok(eta)
}

/// Exact log density of the response given the linear predictor.
pub fn log_likelihood(spec: &ModelSpec, z: &[f64], eta: &[f64], sigma2: Option<f64>) -> Result<f64> {
    if z.len() != eta.len() {
        return Err(Error::mismatch("response vs. linear predictor length", eta.len(), z.len()));
    }
    spec.family.validate_response(z)?;
    let s2 = match spec.family {
        Family::Gaussian => {
            let s2 = sigma2.ok_or_else(|| Error::InvalidArgument("gaussian likelihood needs sigma2".into()))?;
            if !(s2 > 0.0) {
                return Err(Error::NonPositive {
                    name: "sigma2".into(),
                    value: s2,
                });
            }
            s2
        }
        _ => 1.0,
    };
    let kernel: f64 = z
        .iter()
        .zip(eta)
        .map(|(&zi, &ei)| spec.family.log_kernel(zi, ei, s2))
        .sum();
    Ok(kernel + spec.family.log_constant(z))
}

/// Log prior density. Dropped constants: the `(2 pi)` factor of the CAR
/// prior, the gamma normalizer of `tau` and the inverse-gamma normalizer of
/// `sigma2`. The normal prior on `beta` is fully normalized.
pub fn log_prior(spec: &ModelSpec, basis: &EffectBasis, state: &ParameterState) -> Result<f64> {
    basis.check(spec)?;
    if state.effects.len() != basis.dim() {
        return Err(Error::mismatch("random effect length", basis.dim(), state.effects.len()));
    }
    let pr = &spec.priors;
    let v = pr.beta_variance;
    let p = state.beta.len() as f64;
    let mut total = -0.5 * state.beta.iter().map(|b| b * b).sum::<f64>() / v
        - 0.5 * p * (2.0 * std::f64::consts::PI * v).ln();

    if spec.parameterization.is_spatial() {
        let tau = state
            .tau
            .ok_or_else(|| Error::InvalidArgument("spatial models need tau".into()))?;
        if !(tau > 0.0) {
            return Err(Error::NonPositive {
                name: "tau".into(),
                value: tau,
            });
        }
        let k = basis.tau_exponent_dim() as f64;
        total += 0.5 * k * tau.ln() - 0.5 * tau * basis.quad_form(&state.effects);
        total += (pr.tau_shape - 1.0) * tau.ln() - tau / pr.tau_scale;
    }
    if spec.family == Family::Gaussian {
        let s2 = state
            .sigma2
            .ok_or_else(|| Error::InvalidArgument("gaussian models need sigma2".into()))?;
        if !(s2 > 0.0) {
            return Err(Error::NonPositive {
                name: "sigma2".into(),
                value: s2,
            });
        }
        total += -(pr.sigma2_shape + 1.0) * s2.ln() - pr.sigma2_rate / s2;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{moran_basis, rhz_basis, RankRule};
    use crate::graph::Graph;

    fn lattice_setup(rows: usize, q: usize) -> (Graph, DesignMatrix, MoranBasis) {
        let g = Graph::lattice(rows, rows).unwrap();
        let x = DesignMatrix::coordinates(&g).unwrap();
        let b = moran_basis(&x, &g, RankRule::Fixed(q)).unwrap();
        (g, x, b)
    }

    #[test]
    fn family_parsing_lists_allowed_values() {
        assert_eq!("poisson".parse::<Family>().unwrap(), Family::Poisson);
        let msg = "binomial".parse::<Family>().unwrap_err().to_string();
        assert!(msg.contains("bernoulli, poisson, gaussian"), "{msg}");
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::sparse(Family::Bernoulli, 50).validate().is_ok());
        assert!(ModelSpec::sparse(Family::Bernoulli, 0).validate().is_err());
        assert!(ModelSpec::new(Family::Bernoulli, Parameterization::Sparse).validate().is_err());
        let mut s = ModelSpec::new(Family::Poisson, Parameterization::Rhz);
        s.link = Link::Identity;
        assert!(s.validate().is_err());
        let s = ModelSpec::sparse(Family::Bernoulli, 3).with_offset(vec![1.0; 4]);
        assert!(s.validate().is_err());
        let s = ModelSpec::sparse(Family::Poisson, 3).with_offset(vec![1.0, 0.0]);
        assert!(matches!(s.validate(), Err(Error::NonPositive { .. })));
    }

    #[test]
    fn linear_predictor_examples() {
        let (g, x, b) = lattice_setup(4, 3);
        let n = g.n();
        let spec = ModelSpec::sparse(Family::Bernoulli, 3);
        let state = ParameterState {
            beta: vec![0.0, 0.0],
            effects: vec![0.0; 3],
            tau: Some(1.0),
            sigma2: None,
        };
        let basis = EffectBasis::Sparse(b.clone());
        assert!(linear_predictor(&spec, &x, &basis, &state).unwrap().iter().all(|&e| e == 0.0));

        let births: Vec<f64> = (0..n).map(|i| 10.0 + i as f64).collect();
        let spec = ModelSpec::sparse(Family::Poisson, 3).with_offset(births.clone());
        let eta = linear_predictor(&spec, &x, &basis, &state).unwrap();
        for (e, b) in eta.iter().zip(&births) {
            assert!((e - b.ln()).abs() < 1e-15);
        }

        let spec = ModelSpec::new(Family::Bernoulli, Parameterization::Traditional);
        let w: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let state = ParameterState {
            beta: vec![1.0, -2.0],
            effects: w.clone(),
            tau: Some(1.0),
            sigma2: None,
        };
        let eta = linear_predictor(&spec, &x, &EffectBasis::Traditional(g.laplacian()), &state).unwrap();
        let xb = x.mul(&[1.0, -2.0]);
        for i in 0..n {
            assert!((eta[i] - xb[i] - w[i]).abs() < 1e-15);
        }

        let bad = ParameterState {
            beta: vec![1.0],
            ..state
        };
        assert!(linear_predictor(&spec, &x, &EffectBasis::Traditional(g.laplacian()), &bad).is_err());
    }

    #[test]
    fn log_likelihood_examples() {
        let b = ModelSpec::new(Family::Bernoulli, Parameterization::Nonspatial);
        assert!((log_likelihood(&b, &[1.0], &[0.0], None).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        let p = ModelSpec::new(Family::Poisson, Parameterization::Nonspatial);
        assert!((log_likelihood(&p, &[0.0], &[0.0], None).unwrap() + 1.0).abs() < 1e-15);
        let g = ModelSpec::new(Family::Gaussian, Parameterization::Nonspatial);
        let ll = log_likelihood(&g, &[0.3, 0.7], &[0.3, 0.7], Some(1.0)).unwrap();
        assert!((ll + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);

        assert!(matches!(
            log_likelihood(&b, &[0.0, 2.0], &[0.0, 0.0], None),
            Err(Error::InvalidResponse { index: 1, .. })
        ));
        assert!(log_likelihood(&p, &[1.5], &[0.0], None).is_err());
        assert!(log_likelihood(&g, &[f64::NAN], &[0.0], Some(1.0)).is_err());
    }

    /// Scalar densities evaluated independently: pmf products in the
    /// probability scale for small cases.
    #[test]
    fn log_likelihood_matches_scalar_densities() {
        let eta: Vec<f64> = (0..60).map(|i| (i as f64 * 0.29).sin() * 3.0).collect();
        let zb: Vec<f64> = (0..60).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let zp: Vec<f64> = (0..60).map(|i| (i % 7) as f64).collect();
        let zg: Vec<f64> = (0..60).map(|i| (i as f64 * 0.1).cos()).collect();

        let oracle_b: f64 = zb
            .iter()
            .zip(&eta)
            .map(|(&z, &e)| {
                let p = 1.0 / (1.0 + (-e).exp());
                if z == 1.0 { p.ln() } else { (1.0 - p).ln() }
            })
            .sum();
        let oracle_p: f64 = zp
            .iter()
            .zip(&eta)
            .map(|(&z, &e)| {
                let lam = e.exp();
                let fact: f64 = (1..=z as u64).map(|k| k as f64).product();
                (lam.powf(z) * (-lam).exp() / fact).ln()
            })
            .sum();
        let s2 = 0.7;
        let oracle_g: f64 = zg
            .iter()
            .zip(&eta)
            .map(|(&z, &e)| {
                ((-(z - e).powi(2) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt()).ln()
            })
            .sum();

        let spec = |f| ModelSpec::new(f, Parameterization::Nonspatial);
        let lb = log_likelihood(&spec(Family::Bernoulli), &zb, &eta, None).unwrap();
        let lp = log_likelihood(&spec(Family::Poisson), &zp, &eta, None).unwrap();
        let lg = log_likelihood(&spec(Family::Gaussian), &zg, &eta, Some(s2)).unwrap();
        assert!((lb - oracle_b).abs() < 1e-10, "{lb} {oracle_b}");
        assert!((lp - oracle_p).abs() < 1e-10, "{lp} {oracle_p}");
        assert!((lg - oracle_g).abs() < 1e-10, "{lg} {oracle_g}");
    }

    #[test]
    fn bernoulli_is_finite_at_extremes() {
        let spec = ModelSpec::new(Family::Bernoulli, Parameterization::Nonspatial);
        let ll = log_likelihood(&spec, &[1.0, 0.0, 1.0, 0.0], &[700.0, 700.0, -700.0, -700.0], None).unwrap();
        assert!(ll.is_finite());
        assert!((ll + 1400.0).abs() < 1e-9);
    }

    #[test]
    fn ln_factorial_branches_agree() {
        let exact: f64 = (2..=300u64).map(|i| (i as f64).ln()).sum();
        assert!((ln_factorial(300) - exact).abs() < 1e-9);
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
    }

    #[test]
    fn car_prior_tau_exponent() {
        let (_, _, b) = lattice_setup(5, 4);
        let spec = ModelSpec::sparse(Family::Bernoulli, 4);
        let basis = EffectBasis::Sparse(b);
        let zero = |tau| ParameterState {
            beta: vec![0.0, 0.0],
            effects: vec![0.0; 4],
            tau: Some(tau),
            sigma2: None,
        };
        let pr = spec.priors;
        let base = log_prior(&spec, &basis, &zero(1.0)).unwrap();
        // CAR term is zero at tau = 1, leaving the beta and tau priors.
        let beta_part = -(2.0 * std::f64::consts::PI * 100.0).ln();
        assert!((base - beta_part - (-1.0 / pr.tau_scale)).abs() < 1e-12);
        let doubled = log_prior(&spec, &basis, &zero(2.0)).unwrap();
        let tau_part = (pr.tau_shape - 1.0) * 2f64.ln() - 2.0 / pr.tau_scale + 1.0 / pr.tau_scale;
        assert!((doubled - base - (2.0 * 2f64.ln() + tau_part)).abs() < 1e-12);
        assert!(log_prior(&spec, &basis, &zero(0.0)).is_err());
    }

    #[test]
    fn traditional_prior_uses_laplacian_rank() {
        let g = Graph::lattice(30, 30).unwrap();
        let q = g.laplacian();
        assert_eq!(q.rank(), 899);
        let spec = ModelSpec::new(Family::Poisson, Parameterization::Traditional);
        let basis = EffectBasis::Traditional(q);
        assert_eq!(basis.tau_exponent_dim(), 899);
        let st = |tau| ParameterState {
            beta: vec![0.0, 0.0],
            effects: vec![0.0; 900],
            tau: Some(tau),
            sigma2: None,
        };
        let diff = log_prior(&spec, &basis, &st(2.0)).unwrap() - log_prior(&spec, &basis, &st(1.0)).unwrap();
        let pr = spec.priors;
        let expected = 899.0 / 2.0 * 2f64.ln() + (pr.tau_shape - 1.0) * 2f64.ln() - 1.0 / pr.tau_scale;
        assert!((diff - expected).abs() < 1e-9);
    }

    /// Second, independent implementation of the prior difference: full
    /// normalized densities with a dense quadratic form.
    #[test]
    fn log_prior_differences_match_normalized_densities() {
        let g = Graph::lattice(4, 4).unwrap();
        let x = DesignMatrix::coordinates(&g).unwrap();
        let rhz = rhz_basis(&x, &g).unwrap();
        let k = rhz.dim();
        let spec = ModelSpec::new(Family::Gaussian, Parameterization::Rhz);
        let basis = EffectBasis::Rhz(rhz.clone());
        let pr = spec.priors;

        fn ln_gamma(a: f64) -> f64 {
            // Lanczos approximation, g = 7
            const C: [f64; 9] = [
                0.999_999_999_999_809_9,
                676.520_368_121_885_1,
                -1_259.139_216_722_402_8,
                771.323_428_777_653_1,
                -176.615_029_162_140_6,
                12.507_343_278_686_905,
                -0.138_571_095_265_720_12,
                9.984_369_578_019_572e-6,
                1.505_632_735_149_311_6e-7,
            ];
            if a < 0.5 {
                return (std::f64::consts::PI / (std::f64::consts::PI * a).sin()).ln() - ln_gamma(1.0 - a);
            }
            let a = a - 1.0;
            let mut s = C[0];
            for (i, c) in C.iter().enumerate().skip(1) {
                s += c / (a + i as f64);
            }
            let t = a + 7.5;
            0.5 * (2.0 * std::f64::consts::PI).ln() + (a + 0.5) * t.ln() - t + s.ln()
        }

        let full = |st: &ParameterState| -> f64 {
            let tau = st.tau.unwrap();
            let s2 = st.sigma2.unwrap();
            let qr = rhz.reduced_precision();
            let mut quad = 0.0;
            for i in 0..k {
                for j in 0..k {
                    quad += st.effects[i] * qr[(i, j)] * st.effects[j];
                }
            }
            let beta: f64 = st
                .beta
                .iter()
                .map(|b| -0.5 * (2.0 * std::f64::consts::PI * pr.beta_variance).ln() - b * b / (2.0 * pr.beta_variance))
                .sum();
            let car = -0.5 * k as f64 * (2.0 * std::f64::consts::PI).ln() + 0.5 * k as f64 * tau.ln() - 0.5 * tau * quad;
            let gamma = -ln_gamma(pr.tau_shape) - pr.tau_shape * pr.tau_scale.ln()
                + (pr.tau_shape - 1.0) * tau.ln()
                - tau / pr.tau_scale;
            let invgamma = pr.sigma2_shape * pr.sigma2_rate.ln() - ln_gamma(pr.sigma2_shape)
                - (pr.sigma2_shape + 1.0) * s2.ln()
                - pr.sigma2_rate / s2;
            beta + car + gamma + invgamma
        };

        let a = ParameterState {
            beta: vec![0.3, -1.2],
            effects: (0..k).map(|i| (i as f64 * 0.7).cos()).collect(),
            tau: Some(2.5),
            sigma2: Some(0.8),
        };
        let b = ParameterState {
            beta: vec![-0.4, 2.0],
            effects: (0..k).map(|i| (i as f64 * 1.3).sin() * 0.5).collect(),
            tau: Some(0.4),
            sigma2: Some(1.9),
        };
        let d1 = log_prior(&spec, &basis, &a).unwrap() - log_prior(&spec, &basis, &b).unwrap();
        let d2 = full(&a) - full(&b);
        assert!((d1 - d2).abs() < 1e-10, "{d1} vs {d2}");
    }
}
