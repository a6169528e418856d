use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::format_float;
use crate::model::{ModelSpec, Parameterization, ParameterState};

use super::McmcConfig;

/// Wall-clock breakdown of a run, in seconds.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Timing {
    pub total: f64,
    pub beta_update: f64,
    pub effect_update: f64,
    /// Share of `effect_update` spent generating proposals and evaluating
    /// the prior quadratic form, i.e. everything except the likelihood.
    pub effect_prior: f64,
    pub hyper_update: f64,
    pub iterations: usize,
}

impl Timing {
    pub fn effect_prior_per_iteration(&self) -> f64 {
        self.effect_prior / self.iterations.max(1) as f64
    }
}

/// Column names for a chain: `beta_<name>`, the effects, `tau`, `sigma2`.
pub fn column_names(
    beta_names: &[String],
    parameterization: Parameterization,
    effects: usize,
    has_tau: bool,
    has_sigma2: bool,
) -> Vec<String> {
    let mut names: Vec<String> = beta_names.iter().map(|n| format!("beta_{n}")).collect();
    let prefix = match parameterization {
        Parameterization::Traditional => "w",
        Parameterization::Rhz => "delta",
        Parameterization::Sparse => "delta_s",
        Parameterization::Nonspatial => "",
    };
    names.extend((0..effects).map(|i| format!("{prefix}_{i}")));
    if has_tau {
        names.push("tau".into());
    }
    if has_sigma2 {
        names.push("sigma2".into());
    }
    names
}

/// Retained draws plus run metadata.
#[derive(Debug, Clone)]
pub struct Chain {
    pub columns: Vec<String>,
    /// Number of regression coefficients.
    pub p: usize,
    /// Number of random effects (whether or not they were retained).
    pub effects: usize,
    pub effects_retained: bool,
    pub has_tau: bool,
    pub has_sigma2: bool,
    /// Row-major draws, one row per retained iteration.
    pub values: Vec<f64>,
    pub acceptance_rates: BTreeMap<String, f64>,
    pub step_sizes: BTreeMap<String, f64>,
    pub timing: Timing,
    pub seed: u64,
    pub stream: u64,
    pub spec: ModelSpec,
    pub config: McmcConfig,
    /// Posterior mean of `g^{-1}(eta)` accumulated over retained draws.
    pub fitted_mean: Vec<f64>,
}

impl Chain {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.values.len() / self.width()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn wall_time(&self) -> f64 {
        self.timing.total
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column_at(&self, j: usize) -> Vec<f64> {
        let w = self.width();
        self.values.iter().skip(j).step_by(w).copied().collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.column_index(name).map(|j| self.column_at(j))
    }

    pub fn beta_draws(&self, j: usize) -> Vec<f64> {
        assert!(j < self.p);
        self.column_at(j)
    }

    /// Draws of random effect `j`, if effects were retained.
    pub fn effect_draws(&self, j: usize) -> Option<Vec<f64>> {
        (self.effects_retained && j < self.effects).then(|| self.column_at(self.p + j))
    }

    pub fn tau_draws(&self) -> Option<Vec<f64>> {
        self.has_tau.then(|| self.column("tau").unwrap())
    }

    pub fn sigma2_draws(&self) -> Option<Vec<f64>> {
        self.has_sigma2.then(|| self.column("sigma2").unwrap())
    }

    /// Parameter state of retained draw `i`.
    pub fn state(&self, i: usize) -> Result<ParameterState> {
        if !self.effects_retained && self.effects > 0 {
            return Err(Error::InvalidArgument(
                "random-effect draws were not retained for this chain".into(),
            ));
        }
        let row = self.row(i);
        let mut at = self.p + self.effects;
        let tau = self.has_tau.then(|| {
            at += 1;
            row[at - 1]
        });
        let sigma2 = self.has_sigma2.then(|| row[at]);
        Ok(ParameterState {
            beta: row[..self.p].to_vec(),
            effects: row[self.p..self.p + self.effects].to_vec(),
            tau,
            sigma2,
        })
    }
}

/// Receives retained draws as they are produced.
pub trait DrawSink {
    fn start(&mut self, columns: &[String]) -> Result<()>;
    fn record(&mut self, row: &[f64]) -> Result<()>;
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Streams draws as CSV, one row per retained iteration.
pub struct CsvSink<W: Write> {
    out: W,
    line: String,
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W) -> Self {
        CsvSink {
            out,
            line: String::new(),
        }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> DrawSink for CsvSink<W> {
    fn start(&mut self, columns: &[String]) -> Result<()> {
        writeln!(self.out, "{}", columns.join(","))?;
        Ok(())
    }

    fn record(&mut self, row: &[f64]) -> Result<()> {
        self.line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                self.line.push(',');
            }
            self.line.push_str(&format_float(*v));
        }
        self.line.push('\n');
        self.out.write_all(self.line.as_bytes())?;
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Discards every draw.
pub struct NullSink;

impl DrawSink for NullSink {
    fn start(&mut self, _: &[String]) -> Result<()> {
        Ok(())
    }
    fn record(&mut self, _: &[f64]) -> Result<()> {
        Ok(())
    }
}
