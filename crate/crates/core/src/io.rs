//! CSV tables and `key = value` run configuration files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Family, ModelSpec, Parameterization, PriorSet};
use crate::sampler::McmcConfig;

/// Formats a float so that parsing it back yields the same value.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// A numeric table with named columns, stored column-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(names: Vec<String>) -> Self {
        let columns = vec![Vec::new(); names.len()];
        Table { names, columns }
    }

    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::mismatch("column count", names.len(), columns.len()));
        }
        if let Some(first) = columns.first() {
            if let Some(bad) = columns.iter().find(|c| c.len() != first.len()) {
                return Err(Error::mismatch("column length", first.len(), bad.len()));
            }
        }
        Ok(Table { names, columns })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.names.len() {
            return Err(Error::mismatch("row length", self.names.len(), row.len()));
        }
        self.columns.iter_mut().zip(row).for_each(|(c, v)| c.push(*v));
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// Like [`Table::column`] but reports the available columns when missing.
    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.column(name).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "no column named '{name}' (available: {})",
                self.names.join(", ")
            ))
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.names.join(",");
        out.push('\n');
        for r in 0..self.rows() {
            for (j, c) in self.columns.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format_float(c[r]));
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a CSV table with a mandatory header row. Every field must be a
/// finite number.
pub fn parse_table(text: &str, source: &str) -> Result<Table> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header row".into()))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if let Some(pos) = names.iter().position(|n| n.is_empty()) {
        return Err(err(1, format!("empty column name at position {}", pos + 1)));
    }
    let mut table = Table::new(names);
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != table.names.len() {
            return Err(err(
                idx + 1,
                format!("expected {} fields, found {}", table.names.len(), fields.len()),
            ));
        }
        let mut row = Vec::with_capacity(fields.len());
        for (j, f) in fields.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| err(idx + 1, format!("column '{}': cannot parse '{f}' as a number", table.names[j])))?;
            if !v.is_finite() {
                return Err(err(idx + 1, format!("column '{}': non-finite value '{f}'", table.names[j])));
            }
            row.push(v);
        }
        table.push_row(&row)?;
    }
    Ok(table)
}

pub fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_table(&text, &path.display().to_string())
}

pub fn write_table(path: impl AsRef<Path>, table: &Table) -> Result<()> {
    std::fs::write(path, table.to_csv())?;
    Ok(())
}

/// Model and sampler settings read from a configuration file. Keys are the
/// field names of [`ModelSpec`], [`PriorSet`] and [`McmcConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub family: Family,
    pub parameterization: Parameterization,
    pub q: Option<usize>,
    pub priors: PriorSet,
    pub mcmc: McmcConfig,
}

impl RunConfig {
    pub fn new(family: Family, parameterization: Parameterization) -> Self {
        RunConfig {
            family,
            parameterization,
            q: None,
            priors: PriorSet::default(),
            mcmc: McmcConfig::default(),
        }
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        let spec = ModelSpec {
            q: self.q,
            priors: self.priors,
            ..ModelSpec::new(self.family, self.parameterization)
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical `key = value` rendering; parsing it returns `self`.
    pub fn to_config_string(&self) -> String {
        let m = &self.mcmc;
        let p = &self.priors;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("family", self.family.to_string());
        put("parameterization", self.parameterization.to_string());
        if let Some(q) = self.q {
            put("q", q.to_string());
        }
        put("beta_variance", format_float(p.beta_variance));
        put("tau_shape", format_float(p.tau_shape));
        put("tau_scale", format_float(p.tau_scale));
        put("sigma2_shape", format_float(p.sigma2_shape));
        put("sigma2_rate", format_float(p.sigma2_rate));
        put("iterations", m.iterations.to_string());
        put("burn_in", m.burn_in.to_string());
        put("thin", m.thin.to_string());
        put("seed", m.seed.to_string());
        put("adapt", m.adapt.to_string());
        put("target_accept_multivariate", format_float(m.target_accept_multivariate));
        put("target_accept_univariate", format_float(m.target_accept_univariate));
        if let Some(v) = m.initial_step_sizes.beta {
            put("initial_step_sizes.beta", format_float(v));
        }
        if let Some(v) = m.initial_step_sizes.effects {
            put("initial_step_sizes.effects", format_float(v));
        }
        put("prior_only", m.prior_only.to_string());
        if let Some(v) = m.fixed_tau {
            put("fixed_tau", format_float(v));
        }
        if let Some(v) = m.fixed_sigma2 {
            put("fixed_sigma2", format_float(v));
        }
        put("retain_effects", m.retain_effects.to_string());
        s
    }
}

pub const CONFIG_KEYS: [&str; 22] = [
    "family",
    "link",
    "parameterization",
    "q",
    "beta_variance",
    "tau_shape",
    "tau_scale",
    "sigma2_shape",
    "sigma2_rate",
    "iterations",
    "burn_in",
    "thin",
    "seed",
    "adapt",
    "target_accept_multivariate",
    "target_accept_univariate",
    "initial_step_sizes.beta",
    "initial_step_sizes.effects",
    "prior_only",
    "fixed_tau",
    "fixed_sigma2",
    "retain_effects",
];

/// Parses a configuration file. `family` is required; `parameterization`
/// defaults to `sparse` when `q` is given and to `nonspatial` otherwise.
pub fn parse_config(text: &str, source: &str) -> Result<RunConfig> {
    let err = |line: usize, message: String| Error::Config { line, message: format!("{source}: {message}") };
    let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(idx + 1, format!("expected 'key = value', found '{line}'")))?;
        let (k, v) = (k.trim(), v.trim());
        if !CONFIG_KEYS.contains(&k) {
            return Err(err(
                idx + 1,
                format!("unknown key '{k}' (allowed keys: {})", CONFIG_KEYS.join(", ")),
            ));
        }
        if entries.insert(k, (idx + 1, v)).is_some() {
            return Err(err(idx + 1, format!("duplicate key '{k}'")));
        }
    }

    fn value<T: std::str::FromStr>(
        entries: &BTreeMap<&str, (usize, &str)>,
        key: &str,
        err: &dyn Fn(usize, String) -> Error,
    ) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| err(*line, format!("invalid value for '{key}': {e}"))),
        }
    }

    let family: Family = value(&entries, "family", &err)?
        .ok_or_else(|| err(0, "missing required key 'family'".into()))?;
    let q: Option<usize> = value(&entries, "q", &err)?;
    let parameterization = value(&entries, "parameterization", &err)?.unwrap_or(if q.is_some() {
        Parameterization::Sparse
    } else {
        Parameterization::Nonspatial
    });
    let mut cfg = RunConfig::new(family, parameterization);
    cfg.q = q;
    if let Some(link) = value::<crate::model::Link>(&entries, "link", &err)? {
        if link != family.canonical_link() {
            let line = entries["link"].0;
            return Err(err(
                line,
                format!(
                    "link {} is not the canonical link of {family} (use {})",
                    link.name(),
                    family.canonical_link().name()
                ),
            ));
        }
    }
    let p = &mut cfg.priors;
    for (key, slot) in [
        ("beta_variance", &mut p.beta_variance),
        ("tau_shape", &mut p.tau_shape),
        ("tau_scale", &mut p.tau_scale),
        ("sigma2_shape", &mut p.sigma2_shape),
        ("sigma2_rate", &mut p.sigma2_rate),
    ] {
        if let Some(v) = value(&entries, key, &err)? {
            *slot = v;
        }
    }
    let m = &mut cfg.mcmc;
    for (key, slot) in [
        ("iterations", &mut m.iterations),
        ("burn_in", &mut m.burn_in),
        ("thin", &mut m.thin),
    ] {
        if let Some(v) = value(&entries, key, &err)? {
            *slot = v;
        }
    }
    if let Some(v) = value(&entries, "seed", &err)? {
        m.seed = v;
    }
    for (key, slot) in [
        ("adapt", &mut m.adapt),
        ("prior_only", &mut m.prior_only),
        ("retain_effects", &mut m.retain_effects),
    ] {
        if let Some(v) = value(&entries, key, &err)? {
            *slot = v;
        }
    }
    for (key, slot) in [
        ("target_accept_multivariate", &mut m.target_accept_multivariate),
        ("target_accept_univariate", &mut m.target_accept_univariate),
    ] {
        if let Some(v) = value(&entries, key, &err)? {
            *slot = v;
        }
    }
    m.initial_step_sizes.beta = value(&entries, "initial_step_sizes.beta", &err)?;
    m.initial_step_sizes.effects = value(&entries, "initial_step_sizes.effects", &err)?;
    m.fixed_tau = value(&entries, "fixed_tau", &err)?;
    m.fixed_sigma2 = value(&entries, "fixed_sigma2", &err)?;

    cfg.spec().map_err(|e| err(0, e.to_string()))?;
    cfg.mcmc.validate().map_err(|e| err(0, e.to_string()))?;
    Ok(cfg)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, &path.display().to_string())
}
