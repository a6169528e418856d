//! Python bindings: lattices and graphs, Moran bases, simulation, MCMC fits
//! and posterior summaries.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sglmm_core::basis::{self, DesignMatrix, RankRule};
use sglmm_core::sampler::{self, McmcConfig};
use sglmm_core::simulate::{simulate_preset, Preset};
use sglmm_core::summary::{self, ParameterSummary};
use sglmm_core::{EffectBasis, Family, ModelSpec, Parameterization};

fn to_py(e: sglmm_core::Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn design(graph: Option<&sglmm_core::Graph>, columns: Option<Vec<Vec<f64>>>) -> PyResult<DesignMatrix> {
    match (columns, graph) {
        (None, Some(g)) => DesignMatrix::coordinates(g).map_err(to_py),
        (None, None) => Err(PyValueError::new_err("give a graph or design columns")),
        (Some(cols), _) => {
            let names = (0..cols.len()).map(|j| format!("x{j}")).collect();
            DesignMatrix::from_columns(&cols, names).map_err(to_py)
        }
    }
}

/// Undirected graph of areal units.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Graph {
    inner: sglmm_core::Graph,
}

#[pymethods]
impl Graph {
    /// Rook-adjacency lattice with unit-square coordinates.
    #[staticmethod]
    fn lattice(rows: usize, cols: usize) -> PyResult<Self> {
        Ok(Graph {
            inner: sglmm_core::Graph::lattice(rows, cols).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_edges(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Graph {
            inner: sglmm_core::Graph::from_edges(n, &edges).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn neighbors(&self, v: usize) -> PyResult<Vec<usize>> {
        if v >= self.inner.n() {
            return Err(PyValueError::new_err(format!("vertex {v} out of range")));
        }
        Ok(self.inner.neighbors(v).to_vec())
    }

    fn coords(&self) -> Option<Vec<(f64, f64)>> {
        self.inner.coords().map(|c| c.iter().map(|p| (p[0], p[1])).collect())
    }

    /// `v'Qv` for the CAR precision `Q = diag(A1) - A`.
    fn precision_quad_form(&self, v: Vec<f64>) -> PyResult<f64> {
        if v.len() != self.inner.n() {
            return Err(PyValueError::new_err("vector length must equal the vertex count"));
        }
        Ok(self.inner.laplacian().quad_form(&v))
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.n(), self.inner.edge_count())
    }
}

/// Leading eigenvectors of the Moran operator with the reduced precision.
#[pyclass(frozen, skip_from_py_object)]
pub struct MoranBasis {
    inner: basis::MoranBasis,
}

#[pymethods]
impl MoranBasis {
    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    #[getter]
    fn standardized_eigenvalues(&self) -> Vec<f64> {
        self.inner.standardized_eigenvalues().to_vec()
    }

    /// Basis vectors as a list of columns.
    fn vectors(&self) -> Vec<Vec<f64>> {
        let m = self.inner.vectors();
        (0..m.ncols()).map(|j| m.col(j).iter().copied().collect()).collect()
    }

    /// `M'QM` as a list of rows.
    fn reduced_precision(&self) -> Vec<Vec<f64>> {
        let q = self.inner.reduced_precision();
        (0..q.nrows()).map(|i| (0..q.ncols()).map(|j| q[(i, j)]).collect()).collect()
    }

    fn __repr__(&self) -> String {
        format!("MoranBasis(n={}, q={})", self.inner.n(), self.inner.q())
    }
}

/// Standardized eigenvalues of the Moran operator, in descending order.
#[pyfunction]
#[pyo3(signature = (graph, design_columns=None))]
fn moran_spectrum(graph: &Graph, design_columns: Option<Vec<Vec<f64>>>) -> PyResult<Vec<f64>> {
    let x = design(Some(&graph.inner), design_columns)?;
    Ok(basis::moran_spectrum(&x, &graph.inner).map_err(to_py)?.standardized)
}

/// Moran basis of rank `q`, or of every eigenvector whose standardized
/// eigenvalue exceeds `threshold`.
#[pyfunction]
#[pyo3(signature = (graph, q=None, threshold=None, design_columns=None))]
fn moran_basis(
    graph: &Graph,
    q: Option<usize>,
    threshold: Option<f64>,
    design_columns: Option<Vec<Vec<f64>>>,
) -> PyResult<MoranBasis> {
    let rule = match (q, threshold) {
        (Some(q), None) => RankRule::Fixed(q),
        (None, Some(t)) => RankRule::StandardizedAbove(t),
        _ => return Err(PyValueError::new_err("give exactly one of q and threshold")),
    };
    let x = design(Some(&graph.inner), design_columns)?;
    Ok(MoranBasis {
        inner: basis::moran_basis(&x, &graph.inner, rule).map_err(to_py)?,
    })
}

/// Simulates a preset (`binary`, `count` or `gaussian`) and returns a dict
/// with the graph, the design columns, the response and the truth.
#[pyfunction]
#[pyo3(signature = (preset, seed, rows=None, cols=None, q=None))]
fn simulate<'py>(
    py: Python<'py>,
    preset: &str,
    seed: u64,
    rows: Option<usize>,
    cols: Option<usize>,
    q: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut p = Preset::by_name(preset).map_err(to_py)?;
    p = p.scaled(rows.unwrap_or(p.rows), cols.unwrap_or(p.cols), q.unwrap_or(p.q));
    let data = simulate_preset(&p, seed).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("family", data.family.name())?;
    d.set_item("z", data.z.clone())?;
    d.set_item(
        "design",
        (0..data.x.p()).map(|j| data.x.column(j).to_vec()).collect::<Vec<_>>(),
    )?;
    d.set_item("beta", data.beta.clone())?;
    d.set_item("tau", data.tau)?;
    d.set_item("sigma2", data.sigma2)?;
    d.set_item("delta_s", data.delta_s.clone())?;
    d.set_item("eta", data.eta.clone())?;
    d.set_item("mean", data.mean.clone())?;
    d.set_item("graph", Graph { inner: data.graph })?;
    Ok(d)
}

fn summary_dict<'py>(py: Python<'py>, s: &ParameterSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mean", s.mean)?;
    d.set_item("eqt", (s.eqt_lo, s.eqt_hi))?;
    d.set_item("hpd", (s.hpd_lo, s.hpd_hi))?;
    d.set_item("mcse", s.mcse)?;
    Ok(d)
}

/// Posterior draws from one MCMC run.
#[pyclass(frozen, skip_from_py_object)]
pub struct Chain {
    inner: sampler::Chain,
}

#[pymethods]
impl Chain {
    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.columns.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        self.inner
            .column(name)
            .ok_or_else(|| PyValueError::new_err(format!("no column named '{name}'")))
    }

    fn draws(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|i| self.inner.row(i).to_vec()).collect()
    }

    #[getter]
    fn acceptance_rates(&self) -> std::collections::BTreeMap<String, f64> {
        self.inner.acceptance_rates.clone()
    }

    #[getter]
    fn step_sizes(&self) -> std::collections::BTreeMap<String, f64> {
        self.inner.step_sizes.clone()
    }

    #[getter]
    fn wall_time(&self) -> f64 {
        self.inner.wall_time()
    }

    /// Posterior mean of `g^{-1}(eta)` at every areal unit.
    #[getter]
    fn fitted_mean(&self) -> Vec<f64> {
        self.inner.fitted_mean.clone()
    }

    /// Per-parameter mean, equal-tailed and HPD intervals and MCSE.
    #[pyo3(signature = (level=0.95))]
    fn summary<'py>(&self, py: Python<'py>, level: f64) -> PyResult<Bound<'py, PyDict>> {
        let s = summary::summarize_chain(&self.inner, level).map_err(to_py)?;
        let d = PyDict::new(py);
        for p in &s.parameters {
            d.set_item(&p.name, summary_dict(py, p)?)?;
        }
        Ok(d)
    }
}

/// Fits a model by MCMC. `model` is one of nonspatial, traditional, rhz,
/// sparse; `design_columns` defaults to the graph coordinates.
#[pyfunction]
#[pyo3(signature = (
    z, family, model="sparse", graph=None, design_columns=None, q=None,
    iterations=20000, burn_in=5000, thin=5, seed=0, prior_only=false
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    z: Vec<f64>,
    family: &str,
    model: &str,
    graph: Option<&Graph>,
    design_columns: Option<Vec<Vec<f64>>>,
    q: Option<usize>,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
    prior_only: bool,
) -> PyResult<Chain> {
    let family: Family = family.parse().map_err(to_py)?;
    let model: Parameterization = model.parse().map_err(to_py)?;
    let x = design(graph.map(|g| &g.inner), design_columns)?;
    let need_graph = || graph.map(|g| &g.inner).ok_or_else(|| PyValueError::new_err("this model needs a graph"));
    let mut spec = ModelSpec::new(family, model);
    let basis = match model {
        Parameterization::Nonspatial => EffectBasis::None,
        Parameterization::Traditional => EffectBasis::Traditional(need_graph()?.laplacian()),
        Parameterization::Rhz => EffectBasis::Rhz(basis::rhz_basis(&x, need_graph()?).map_err(to_py)?),
        Parameterization::Sparse => {
            let q = q.ok_or_else(|| PyValueError::new_err("the sparse model needs q"))?;
            spec.q = Some(q);
            EffectBasis::Sparse(basis::moran_basis(&x, need_graph()?, RankRule::Fixed(q)).map_err(to_py)?)
        }
    };
    let cfg = McmcConfig {
        iterations,
        burn_in,
        thin,
        seed,
        prior_only,
        ..Default::default()
    };
    let chain = py
        .detach(|| sampler::fit(&spec, &x, &z, &basis, &cfg))
        .map_err(to_py)?;
    Ok(Chain { inner: chain })
}

/// Mean, intervals and MCSE of a single vector of draws.
#[pyfunction]
#[pyo3(signature = (draws, level=0.95))]
fn summarize<'py>(py: Python<'py>, draws: Vec<f64>, level: f64) -> PyResult<Bound<'py, PyDict>> {
    let s = ParameterSummary::from_draws("x", &draws, level).map_err(to_py)?;
    summary_dict(py, &s)
}

/// Maximum-likelihood GLM fit by IRLS; returns coefficients, covariance and
/// convergence information.
#[pyfunction]
fn glm_fit<'py>(
    py: Python<'py>,
    family: &str,
    design_columns: Vec<Vec<f64>>,
    z: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let family: Family = family.parse().map_err(to_py)?;
    let names = (0..design_columns.len()).map(|j| format!("x{j}")).collect();
    let x = DesignMatrix::from_columns(&design_columns, names).map_err(to_py)?;
    let f = sglmm_core::irls_fit(family, &x, &z, None).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("beta", f.beta_hat.clone())?;
    d.set_item("standard_errors", f.standard_errors())?;
    d.set_item("iterations", f.iterations)?;
    d.set_item("converged", f.converged)?;
    Ok(d)
}

#[pymodule]
pub fn sglmm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<MoranBasis>()?;
    m.add_class::<Chain>()?;
    m.add_function(wrap_pyfunction!(moran_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(moran_basis, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(glm_fit, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
