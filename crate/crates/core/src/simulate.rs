//! Synthetic data from the sparse model: `delta_s ~ N(0, (tau Q_S)^{-1})`,
//! `eta = X beta + M delta_s` and independent responses given `eta`.

use faer::MatRef;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::Serialize;

use crate::basis::{moran_basis, DesignMatrix, MoranBasis, RankRule};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io::Table;
use crate::linalg;
use crate::model::Family;

/// One draw from `N(0, (tau Q_S)^{-1})`: with `tau Q_S = L L'`, solve
/// `L' d = e` for standard normal `e`.
pub fn simulate_random_effects<R: Rng + ?Sized>(q_s: MatRef<'_, f64>, tau: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::NonPositive {
            name: "tau".into(),
            value: tau,
        });
    }
    let k = q_s.nrows();
    if q_s.ncols() != k {
        return Err(Error::mismatch("reduced precision columns", k, q_s.ncols()));
    }
    let scaled = faer::Mat::from_fn(k, k, |i, j| tau * q_s[(i, j)]);
    let llt = linalg::cholesky(scaled.as_ref(), "random-effect precision")?;
    let l = llt.L();
    let mut d: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
    for i in (0..k).rev() {
        let mut acc = d[i];
        for j in (i + 1)..k {
            acc -= l[(j, i)] * d[j];
        }
        d[i] = acc / l[(i, i)];
    }
    Ok(d)
}

pub fn simulate_random_effects_seeded(q_s: MatRef<'_, f64>, tau: f64, seed: u64) -> Result<Vec<f64>> {
    simulate_random_effects(q_s, tau, &mut ChaCha20Rng::seed_from_u64(seed))
}

/// Independent responses with mean `g^{-1}(eta)`.
pub fn simulate_response<R: Rng + ?Sized>(
    family: Family,
    eta: &[f64],
    sigma2: Option<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let link = family.canonical_link();
    let sd = match family {
        Family::Gaussian => {
            let s2 = sigma2.ok_or_else(|| Error::InvalidArgument("gaussian responses need sigma2".into()))?;
            if !(s2 > 0.0 && s2.is_finite()) {
                return Err(Error::NonPositive {
                    name: "sigma2".into(),
                    value: s2,
                });
            }
            s2.sqrt()
        }
        _ => 0.0,
    };
    eta.iter()
        .map(|&e| {
            let mean = link.inverse(e);
            match family {
                Family::Bernoulli => Ok(if rng.random::<f64>() < mean { 1.0 } else { 0.0 }),
                Family::Poisson => {
                    if mean == 0.0 {
                        return Ok(0.0);
                    }
                    let dist = Poisson::new(mean)
                        .map_err(|err| Error::NonFinite(format!("poisson rate {mean}: {err}")))?;
                    Ok(dist.sample(rng))
                }
                Family::Gaussian => {
                    let z: f64 = StandardNormal.sample(rng);
                    Ok(mean + sd * z)
                }
            }
        })
        .collect()
}

/// A simulation design on a square-ish lattice with `X = [x y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub family: Family,
    pub q: usize,
    pub tau: f64,
    pub sigma2: Option<f64>,
    pub beta: [f64; 2],
}

impl Preset {
    pub const BINARY: Preset = Preset {
        name: "binary",
        rows: 30,
        cols: 30,
        family: Family::Bernoulli,
        q: 400,
        tau: 1.0,
        sigma2: None,
        beta: [1.0, 1.0],
    };
    pub const COUNT: Preset = Preset {
        name: "count",
        rows: 30,
        cols: 30,
        family: Family::Poisson,
        q: 400,
        tau: 3.0,
        sigma2: None,
        beta: [1.0, 1.0],
    };
    pub const GAUSSIAN: Preset = Preset {
        name: "gaussian",
        rows: 20,
        cols: 20,
        family: Family::Gaussian,
        q: 180,
        tau: 1.0,
        sigma2: Some(1.0),
        beta: [1.0, 1.0],
    };
    pub const ALL: [Preset; 3] = [Preset::BINARY, Preset::COUNT, Preset::GAUSSIAN];

    pub fn by_name(name: &str) -> Result<Preset> {
        Preset::ALL.into_iter().find(|p| p.name == name).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown preset '{name}' (allowed: binary, count, gaussian)"))
        })
    }

    /// Same design on a different lattice and basis rank.
    pub fn scaled(self, rows: usize, cols: usize, q: usize) -> Preset {
        Preset { rows, cols, q, ..self }
    }
}

/// Everything needed to fit a simulated dataset and score the fit.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub graph: Graph,
    pub x: DesignMatrix,
    pub basis: MoranBasis,
    pub family: Family,
    pub beta: Vec<f64>,
    pub tau: f64,
    pub sigma2: Option<f64>,
    pub delta_s: Vec<f64>,
    pub eta: Vec<f64>,
    /// True mean surface `p`, `lambda` or `mu`.
    pub mean: Vec<f64>,
    pub z: Vec<f64>,
}

impl SimulatedData {
    /// Response and covariates: columns `z`, then the design columns.
    pub fn data_table(&self) -> Table {
        let mut names = vec!["z".to_string()];
        names.extend(self.x.names().iter().cloned());
        let mut cols = vec![self.z.clone()];
        cols.extend((0..self.x.p()).map(|j| self.x.column(j).to_vec()));
        Table::from_columns(names, cols).expect("columns share the vertex count")
    }

    /// True linear predictor, mean and basis contribution `M delta_s`.
    pub fn truth_table(&self) -> Table {
        let mut effect = vec![0.0; self.x.n()];
        linalg::gemv(&mut effect, self.basis.vectors(), &self.delta_s, 1.0, false);
        Table::from_columns(
            vec!["eta".into(), "mean".into(), "spatial_effect".into()],
            vec![self.eta.clone(), self.mean.clone(), effect],
        )
        .expect("columns share the vertex count")
    }

    /// True `delta_s`, one row per basis vector.
    pub fn delta_table(&self) -> Table {
        Table::from_columns(vec!["delta_s".into()], vec![self.delta_s.clone()]).expect("single column")
    }
}

/// Simulates from the sparse model on a given graph, design and basis.
#[allow(clippy::too_many_arguments)]
pub fn simulate_sparse(
    graph: Graph,
    x: DesignMatrix,
    basis: MoranBasis,
    family: Family,
    beta: &[f64],
    tau: f64,
    sigma2: Option<f64>,
    seed: u64,
) -> Result<SimulatedData> {
    if beta.len() != x.p() {
        return Err(Error::mismatch("beta length", x.p(), beta.len()));
    }
    if basis.n() != x.n() {
        return Err(Error::mismatch("basis rows", x.n(), basis.n()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let delta_s = simulate_random_effects(basis.reduced_precision(), tau, &mut rng)?;
    let mut eta = x.mul(beta);
    linalg::gemv(&mut eta, basis.vectors(), &delta_s, 1.0, true);
    let link = family.canonical_link();
    let mean: Vec<f64> = eta.iter().map(|&e| link.inverse(e)).collect();
    let z = simulate_response(family, &eta, sigma2, &mut rng)?;
    Ok(SimulatedData {
        graph,
        x,
        basis,
        family,
        beta: beta.to_vec(),
        tau,
        sigma2: if family == Family::Gaussian { sigma2 } else { None },
        delta_s,
        eta,
        mean,
        z,
    })
}

pub fn simulate_preset(preset: &Preset, seed: u64) -> Result<SimulatedData> {
    let graph = Graph::lattice(preset.rows, preset.cols)?;
    let x = DesignMatrix::coordinates(&graph)?;
    let basis = moran_basis(&x, &graph, RankRule::Fixed(preset.q))?;
    simulate_sparse(graph, x, basis, preset.family, &preset.beta, preset.tau, preset.sigma2, seed)
}
