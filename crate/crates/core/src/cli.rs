//! The `sglmm` command-line tool.
//!
//! Subcommands: `lattice`, `eigs`, `simulate`, `fit`, `summarize` and
//! `reproduce`. [`dispatch`] returns the process exit code: 0 on success, 1
//! for invalid input or usage and 2 for numerical failures.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::basis::{
    self, moran_basis_with, moran_operator, rhz_basis, standardization_factor, DesignMatrix, EigenMethod,
    OperatorSource, RankRule,
};
use crate::error::{Error, Result};
use crate::glm;
use crate::graph::Graph;
use crate::io::{self, format_float, RunConfig, Table};
use crate::linalg;
use crate::model::{EffectBasis, Family, Parameterization};
use crate::sampler::{self, CsvSink, DrawSink, McmcConfig};
use crate::simulate::{self, Preset};
use crate::study;
use crate::summary;

#[derive(Parser, Debug)]
#[command(name = "sglmm", version, about = "Spatial generalized linear mixed models for areal data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a rook-adjacency lattice as an edge list plus coordinates.
    Lattice(LatticeArgs),
    /// Spectrum of the Moran operator and its leading eigenvectors.
    Eigs(EigsArgs),
    /// Simulate a dataset from the sparse model.
    Simulate(SimulateArgs),
    /// Fit a model by MCMC.
    Fit(FitArgs),
    /// Summarize a chain CSV.
    Summarize(SummarizeArgs),
    /// Run the simulation study end to end and write a report.
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug)]
struct LatticeArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Edge-list output.
    #[arg(long, default_value = "lattice.edges")]
    out: PathBuf,
    /// Coordinate output (default: the edge-list path with extension `.coords`).
    #[arg(long)]
    coords: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SourceArg {
    Adjacency,
    Laplacian,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    Auto,
    Dense,
    Iterative,
}

#[derive(Args, Debug)]
struct EigsArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Vertex coordinates (default: `<graph>.coords` when present).
    #[arg(long)]
    coords: Option<PathBuf>,
    /// Design CSV; without it the design is the vertex coordinates `[x y]`.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Comma-separated design columns (default: every column).
    #[arg(long)]
    columns: Option<String>,
    /// Keep the q leading eigenvectors.
    #[arg(long, conflicts_with = "threshold")]
    q: Option<usize>,
    /// Keep eigenvectors whose standardized eigenvalue exceeds this.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum, default_value = "adjacency")]
    source: SourceArg,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    /// Spectrum CSV: index, eigenvalue, standardized_eigenvalue.
    #[arg(long, default_value = "spectrum.csv")]
    out: PathBuf,
    /// Basis CSV, one column per kept eigenvector.
    #[arg(long)]
    basis_out: Option<PathBuf>,
    /// Map CSV (x, y, component) of one kept eigenvector.
    #[arg(long)]
    map_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    map_index: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// binary, count or gaussian.
    #[arg(long, default_value = "binary")]
    preset: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Number of basis vectors carrying the simulated effects.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    /// Comma-separated regression coefficients for `[x y]`.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    model: Option<Parameterization>,
    #[arg(long)]
    family: Option<Family>,
    #[arg(long)]
    q: Option<usize>,
    /// `key = value` configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    coords: Option<PathBuf>,
    #[arg(long, default_value = "z")]
    response: String,
    /// Comma-separated design columns (default: every other column).
    #[arg(long)]
    columns: Option<String>,
    /// Column of positive exposures entering as a log offset (poisson only).
    #[arg(long)]
    offset_col: Option<String>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Independent chains, run on separate threads.
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long)]
    prior_only: bool,
    /// Keep random effects only in the chain CSV, not in memory.
    #[arg(long)]
    no_effects_in_memory: bool,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Truth CSV with the true mean surface, for the error norm.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "mean")]
    truth_col: String,
    #[arg(long, default_value = "fit_out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    #[arg(long)]
    chain: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Summary JSON output (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Histogram CSV of pairwise posterior correlations among the effects.
    #[arg(long)]
    correlations: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    bins: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
enum ScaleArg {
    /// 20x20 lattices, sparse fits with 50 basis vectors.
    Desk,
    /// The original lattice sizes and basis ranks.
    Full,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "desk")]
    scale: ScaleArg,
    /// Comma-separated presets.
    #[arg(long, default_value = "binary,count,gaussian")]
    presets: String,
    /// Comma-separated models.
    #[arg(long, default_value = "nonspatial,traditional,rhz,sparse")]
    models: String,
    /// Basis rank of the sparse fits.
    #[arg(long)]
    sparse_q: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long, default_value = "reproduce_out")]
    out_dir: PathBuf,
}

/// Runs the tool on `argv` (including the program name) and returns the
/// exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let command_line: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match cli.command {
        Command::Lattice(a) => lattice(a),
        Command::Eigs(a) => eigs(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Fit(a) => fit_cmd(a, &command_line),
        Command::Summarize(a) => summarize_cmd(a),
        Command::Reproduce(a) => reproduce(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect()
}

fn sibling_coords(graph: &Path) -> PathBuf {
    graph.with_extension("coords")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn load_graph(path: &Path, coords: Option<&Path>) -> Result<Graph> {
    let g = Graph::read_edge_list(path)?;
    match coords {
        Some(c) => g.read_coords(c),
        None => {
            let c = sibling_coords(path);
            if c.exists() {
                g.read_coords(c)
            } else {
                Ok(g)
            }
        }
    }
}

fn design_from_table(table: &Table, columns: Option<&str>, exclude: &[&str]) -> Result<DesignMatrix> {
    let names: Vec<String> = match columns {
        Some(list) => split_list(list),
        None => table
            .names()
            .iter()
            .filter(|n| !exclude.contains(&n.as_str()))
            .cloned()
            .collect(),
    };
    if names.is_empty() {
        return Err(Error::InvalidArgument("the design has no columns".into()));
    }
    let cols = names
        .iter()
        .map(|n| table.require(n).map(<[f64]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    DesignMatrix::from_columns(&cols, names)
}

fn lattice(a: LatticeArgs) -> Result<()> {
    if a.rows == 0 || a.cols == 0 {
        return Err(Error::InvalidArgument("rows and cols must be at least 1".into()));
    }
    let g = Graph::lattice(a.rows, a.cols)?;
    g.write_edge_list(&a.out)?;
    let coords = a.coords.unwrap_or_else(|| sibling_coords(&a.out));
    g.write_coords(&coords)?;
    println!(
        "wrote {} ({} vertices, {} edges) and {}",
        a.out.display(),
        g.n(),
        g.edge_count(),
        coords.display()
    );
    Ok(())
}

fn eigs(a: EigsArgs) -> Result<()> {
    let g = load_graph(&a.graph, a.coords.as_deref())?;
    let x = match &a.design {
        Some(path) => design_from_table(&io::read_table(path)?, a.columns.as_deref(), &[])?,
        None => DesignMatrix::coordinates(&g)?,
    };
    if x.n() != g.n() {
        return Err(Error::mismatch("design rows vs. graph vertices", g.n(), x.n()));
    }
    let factor = standardization_factor(&g)?;
    let method = match a.method {
        MethodArg::Auto => EigenMethod::Auto,
        MethodArg::Dense => EigenMethod::Dense,
        MethodArg::Iterative => EigenMethod::Iterative,
    };
    let rule = match (a.q, a.threshold) {
        (Some(q), _) => Some(RankRule::Fixed(q)),
        (None, Some(t)) => Some(RankRule::StandardizedAbove(t)),
        (None, None) => None,
    };
    let mut report = String::new();
    let _ = writeln!(report, "vertices: {}, design columns: {}", g.n(), x.p());

    let dense = match method {
        EigenMethod::Dense => true,
        EigenMethod::Iterative => false,
        EigenMethod::Auto => g.n() <= basis::DENSE_EIGEN_LIMIT,
    };
    let spectrum: Vec<f64> = match a.source {
        SourceArg::Adjacency if dense => {
            let s = basis::moran_spectrum(&x, &g)?;
            let _ = writeln!(
                report,
                "positive eigenvalues: {}, non-positive: {}",
                s.positive_count(),
                s.nonpositive_count()
            );
            s.eigenvalues
        }
        SourceArg::Laplacian => {
            if rule.is_some() {
                return Err(Error::InvalidArgument(
                    "basis extraction uses the adjacency operator; drop --q/--threshold with --source laplacian".into(),
                ));
            }
            let op = moran_operator(&x, &g, OperatorSource::Laplacian)?;
            linalg::sym_eigenvalues_desc(op.as_ref())?
        }
        SourceArg::Adjacency => Vec::new(),
    };

    let kept = match rule {
        Some(rule) => {
            let b = moran_basis_with(&x, &g, rule, method)?;
            let _ = writeln!(report, "basis columns: {}", b.q());
            if let Some(path) = &a.basis_out {
                let names: Vec<String> = (0..b.q()).map(|j| format!("m_{j}")).collect();
                let cols: Vec<Vec<f64>> = (0..b.q()).map(|j| b.vectors().col(j).iter().copied().collect()).collect();
                io::write_table(path, &Table::from_columns(names, cols)?)?;
            }
            if let Some(path) = &a.map_out {
                if a.map_index >= b.q() {
                    return Err(Error::InvalidArgument(format!(
                        "map index {} out of range for {} basis vectors",
                        a.map_index,
                        b.q()
                    )));
                }
                let coords = g
                    .coords()
                    .ok_or_else(|| Error::InvalidArgument("maps need vertex coordinates".into()))?;
                let (xs, ys): (Vec<f64>, Vec<f64>) = coords.iter().map(|c| (c[0], c[1])).unzip();
                let comp: Vec<f64> = b.vectors().col(a.map_index).iter().copied().collect();
                io::write_table(
                    path,
                    &Table::from_columns(vec!["x".into(), "y".into(), "component".into()], vec![xs, ys, comp])?,
                )?;
            }
            Some(b)
        }
        None => {
            if a.basis_out.is_some() || a.map_out.is_some() {
                return Err(Error::InvalidArgument("--basis-out and --map-out need --q or --threshold".into()));
            }
            None
        }
    };
    let values = if spectrum.is_empty() {
        kept.as_ref().map(|b| b.eigenvalues().to_vec()).unwrap_or_default()
    } else {
        spectrum
    };
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "graphs above the dense limit need --q or --threshold".into(),
        ));
    }
    let table = Table::from_columns(
        vec!["index".into(), "eigenvalue".into(), "standardized_eigenvalue".into()],
        vec![
            (0..values.len()).map(|i| i as f64).collect(),
            values.clone(),
            values.iter().map(|v| v * factor).collect(),
        ],
    )?;
    io::write_table(&a.out, &table)?;
    let _ = writeln!(report, "wrote {} ({} eigenvalues)", a.out.display(), values.len());
    print!("{report}");
    Ok(())
}

fn parse_beta(s: &str) -> Result<Vec<f64>> {
    split_list(s)
        .iter()
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("cannot parse beta entry '{v}'")))
        })
        .collect()
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let mut preset = Preset::by_name(&a.preset)?;
    preset.rows = a.rows.unwrap_or(preset.rows);
    preset.cols = a.cols.unwrap_or(preset.cols);
    preset.q = a.q.unwrap_or(preset.q);
    preset.tau = a.tau.unwrap_or(preset.tau);
    if a.sigma2.is_some() {
        if preset.family != Family::Gaussian {
            return Err(Error::InvalidArgument("--sigma2 applies to the gaussian preset only".into()));
        }
        preset.sigma2 = a.sigma2;
    }
    if let Some(b) = &a.beta {
        let b = parse_beta(b)?;
        if b.len() != 2 {
            return Err(Error::mismatch("beta entries for [x y]", 2, b.len()));
        }
        preset.beta = [b[0], b[1]];
    }
    let data = simulate::simulate_preset(&preset, a.seed)?;
    ensure_dir(&a.out_dir)?;
    let d = &a.out_dir;
    io::write_table(d.join("data.csv"), &data.data_table())?;
    let mut truth = data.truth_table();
    let coords = data.graph.coords().expect("lattices carry coordinates");
    let mut names = truth.names().to_vec();
    let mut cols: Vec<Vec<f64>> = names.iter().map(|n| truth.column(n).unwrap().to_vec()).collect();
    names.insert(0, "y".into());
    names.insert(0, "x".into());
    cols.insert(0, coords.iter().map(|c| c[1]).collect());
    cols.insert(0, coords.iter().map(|c| c[0]).collect());
    truth = Table::from_columns(names, cols)?;
    io::write_table(d.join("truth.csv"), &truth)?;
    io::write_table(d.join("delta.csv"), &data.delta_table())?;
    data.graph.write_edge_list(d.join("graph.edges"))?;
    data.graph.write_coords(d.join("graph.coords"))?;
    println!(
        "simulated {} data on a {}x{} lattice (q = {}, tau = {}) into {}",
        preset.family,
        preset.rows,
        preset.cols,
        preset.q,
        format_float(preset.tau),
        d.display()
    );
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn file_digest(path: &Path) -> Result<serde_json::Value> {
    let bytes = fs::read(path)?;
    Ok(json!({ "path": path.display().to_string(), "sha256": sha256_hex(&bytes) }))
}

fn fit_cmd(a: FitArgs, command_line: &[String]) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => io::read_config(path)?,
        None => {
            let family = a
                .family
                .ok_or_else(|| Error::InvalidArgument("--family is required without --config".into()))?;
            let model = a.model.unwrap_or(if a.q.is_some() {
                Parameterization::Sparse
            } else {
                Parameterization::Nonspatial
            });
            RunConfig::new(family, model)
        }
    };
    if let Some(f) = a.family {
        cfg.family = f;
    }
    if let Some(m) = a.model {
        cfg.parameterization = m;
        if m != Parameterization::Sparse {
            cfg.q = None;
        }
    }
    if a.q.is_some() {
        cfg.q = a.q;
    }
    cfg.mcmc.seed = a.seed;
    if let Some(v) = a.iterations {
        cfg.mcmc.iterations = v;
    }
    if let Some(v) = a.burn_in {
        cfg.mcmc.burn_in = v;
    }
    if let Some(v) = a.thin {
        cfg.mcmc.thin = v;
    }
    if a.prior_only {
        cfg.mcmc.prior_only = true;
    }
    if a.no_effects_in_memory {
        cfg.mcmc.retain_effects = false;
    }
    cfg.mcmc.validate()?;
    if a.chains == 0 {
        return Err(Error::InvalidArgument("--chains must be at least 1".into()));
    }

    let table = io::read_table(&a.data)?;
    let z = table.require(&a.response)?.to_vec();
    let mut exclude = vec![a.response.as_str()];
    if let Some(o) = &a.offset_col {
        exclude.push(o.as_str());
    }
    let x = design_from_table(&table, a.columns.as_deref(), &exclude)?;
    let mut spec = cfg.spec()?;
    if let Some(col) = &a.offset_col {
        spec = spec.with_offset(table.require(col)?.to_vec());
        spec.validate()?;
    }

    let graph = match &a.graph {
        Some(p) => Some(load_graph(p, a.coords.as_deref())?),
        None => None,
    };
    let need_graph = || {
        graph.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("the {} model needs --graph", spec.parameterization))
        })
    };
    if let Some(g) = &graph {
        if g.n() != x.n() {
            return Err(Error::mismatch("graph vertices vs. data rows", x.n(), g.n()));
        }
    }
    let basis = match spec.parameterization {
        Parameterization::Nonspatial => EffectBasis::None,
        Parameterization::Traditional => EffectBasis::Traditional(need_graph()?.laplacian()),
        Parameterization::Rhz => EffectBasis::Rhz(rhz_basis(&x, need_graph()?)?),
        Parameterization::Sparse => EffectBasis::Sparse(basis::moran_basis(
            &x,
            need_graph()?,
            RankRule::Fixed(spec.q.expect("validated sparse spec has q")),
        )?),
    };

    ensure_dir(&a.out_dir)?;
    let out = &a.out_dir;
    let suffix = |c: usize| if a.chains == 1 { String::new() } else { format!("_{c}") };
    let mut sinks: Vec<Box<dyn DrawSink + Send>> = Vec::new();
    let mut outputs = Vec::new();
    for c in 0..a.chains {
        let path = out.join(format!("chain{}.csv", suffix(c)));
        let file = std::io::BufWriter::new(fs::File::create(&path)?);
        sinks.push(Box::new(CsvSink::new(file)));
        outputs.push(path.display().to_string());
    }
    let chains = sampler::fit_chains(&spec, &x, &z, &basis, &cfg.mcmc, sinks)?;

    let truth = match &a.truth {
        Some(p) => Some(io::read_table(p)?.require(&a.truth_col)?.to_vec()),
        None => None,
    };
    let glm_fit = if spec.parameterization == Parameterization::Nonspatial {
        Some(glm::irls_fit(spec.family, &x, &z, spec.offset.as_deref())?)
    } else {
        None
    };

    for (c, chain) in chains.iter().enumerate() {
        let s = summary::summarize_chain(chain, a.level)?;
        let error_norm = match &truth {
            Some(t) => Some(summary::error_norm(t, &chain.fitted_mean)?),
            None => None,
        };
        let mut doc = serde_json::to_value(&s).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        doc["model"] = json!(spec.parameterization.name());
        doc["family"] = json!(spec.family.name());
        doc["effects"] = json!(basis.dim());
        doc["seed"] = json!(chain.seed);
        doc["stream"] = json!(chain.stream);
        doc["timing"] = serde_json::to_value(chain.timing).unwrap_or_default();
        if let Some(e) = error_norm {
            doc["error_norm"] = json!(e);
        }
        if let Some(f) = &glm_fit {
            doc["glm"] = json!({
                "beta_hat": f.beta_hat,
                "standard_errors": f.standard_errors(),
                "sigma2_hat": f.sigma2_hat,
                "iterations": f.iterations,
                "converged": f.converged,
            });
        }
        let path = out.join(format!("summary{}.json", suffix(c)));
        fs::write(&path, serde_json::to_string_pretty(&doc).unwrap_or_default())?;
        outputs.push(path.display().to_string());

        let fitted_path = out.join(format!("fitted{}.csv", suffix(c)));
        let (xs, ys): (Vec<f64>, Vec<f64>) = match graph.as_ref().and_then(Graph::coords) {
            Some(cs) => cs.iter().map(|p| (p[0], p[1])).unzip(),
            None => ((0..x.n()).map(|i| i as f64).collect(), vec![0.0; x.n()]),
        };
        io::write_table(
            &fitted_path,
            &Table::from_columns(
                vec!["x".into(), "y".into(), "fitted".into()],
                vec![xs, ys, chain.fitted_mean.clone()],
            )?,
        )?;
        outputs.push(fitted_path.display().to_string());

        println!(
            "chain {c}: {} draws in {:.2} s, acceptance {:?}",
            chain.len(),
            chain.wall_time(),
            chain.acceptance_rates
        );
        for p in s.parameters.iter().filter(|p| !p.name.contains('_') || p.name.starts_with("beta_")) {
            println!(
                "  {:<12} mean {:>10.4}  {:.0}% interval ({:.4}, {:.4})",
                p.name,
                p.mean,
                a.level * 100.0,
                p.eqt_lo,
                p.eqt_hi
            );
        }
        if let Some(e) = error_norm {
            println!("  error norm {e:.4}");
        }
    }

    let config_text = cfg.to_config_string();
    fs::write(out.join("run.conf"), &config_text)?;
    let mut inputs = serde_json::Map::new();
    inputs.insert("data".into(), file_digest(&a.data)?);
    if let Some(p) = &a.graph {
        inputs.insert("graph".into(), file_digest(p)?);
    }
    if let Some(p) = &a.truth {
        inputs.insert("truth".into(), file_digest(p)?);
    }
    let manifest = json!({
        "tool": "sglmm",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command_line,
        "seed": a.seed,
        "chains": a.chains,
        "config_hash": format!("sha256:{}", sha256_hex(config_text.as_bytes())),
        "config": config_text,
        "response": a.response,
        "columns": x.names(),
        "offset_col": a.offset_col,
        "inputs": inputs,
        "outputs": outputs,
    });
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap_or_default(),
    )?;
    Ok(())
}

fn summarize_cmd(a: SummarizeArgs) -> Result<()> {
    let table = io::read_table(&a.chain)?;
    if table.rows() == 0 {
        return Err(Error::EmptyChain);
    }
    let names = table.names().to_vec();
    let cols: Vec<Vec<f64>> = names.iter().map(|n| table.column(n).unwrap().to_vec()).collect();
    let s = summary::summarize_columns(&names, &cols, a.level)?;
    let text = serde_json::to_string_pretty(&s).unwrap_or_default();
    match &a.out {
        Some(p) => fs::write(p, &text)?,
        None => println!("{text}"),
    }
    if let Some(path) = &a.correlations {
        let effects: Vec<Vec<f64>> = names
            .iter()
            .zip(&cols)
            .filter(|(n, _)| n.starts_with("w_") || n.starts_with("delta_"))
            .map(|(_, c)| c.clone())
            .collect();
        let h = summary::correlation_histogram(&effects, a.bins, 0)?;
        let table = Table::from_columns(
            vec!["bin_lo".into(), "bin_hi".into(), "count".into()],
            vec![
                h.edges[..h.edges.len() - 1].to_vec(),
                h.edges[1..].to_vec(),
                h.counts.iter().map(|&c| c as f64).collect(),
            ],
        )?;
        io::write_table(path, &table)?;
        eprintln!(
            "{} pairs{}, mean |r| = {:.3}, {} zero-variance effects excluded",
            h.pairs,
            if h.sampled { " (sampled)" } else { "" },
            h.mean_abs,
            h.excluded.len()
        );
    }
    Ok(())
}

fn reproduce(a: ReproduceArgs) -> Result<()> {
    let presets = split_list(&a.presets)
        .iter()
        .map(|p| Preset::by_name(p))
        .collect::<Result<Vec<_>>>()?;
    let models = split_list(&a.models)
        .iter()
        .map(|m| m.parse::<Parameterization>())
        .collect::<Result<Vec<_>>>()?;
    let desk = a.scale == ScaleArg::Desk;
    let mcmc = McmcConfig {
        seed: a.seed,
        iterations: a.iterations.unwrap_or(if desk { 20_000 } else { 200_000 }),
        burn_in: a.burn_in.unwrap_or(if desk { 5_000 } else { 20_000 }),
        thin: a.thin.unwrap_or(if desk { 5 } else { 10 }),
        ..Default::default()
    };
    mcmc.validate()?;
    ensure_dir(&a.out_dir)?;
    let mut report = String::from("# Simulation study\n\n");
    let _ = writeln!(
        report,
        "seed {}, {} iterations, burn-in {}, thin {}; intervals are {}% equal-tailed (CI) and HPD.\n",
        a.seed,
        mcmc.iterations,
        mcmc.burn_in,
        mcmc.thin,
        95
    );
    let mut all = Vec::new();
    for (i, preset) in presets.iter().enumerate() {
        let preset = if desk { preset.scaled(20, 20, 180) } else { *preset };
        let q = a.sparse_q.unwrap_or(if desk { 50 } else { preset.q });
        let data = simulate::simulate_preset(&preset, a.seed.wrapping_add(i as u64))?;
        let mut rows = Vec::new();
        for &m in &models {
            eprintln!("{}: fitting {m}", preset.name);
            rows.push(study::fit_model(&data, m, q, &mcmc, 0.95)?);
        }
        let _ = writeln!(
            report,
            "## {} ({}x{} lattice, {} true basis vectors, tau = {})\n",
            preset.name,
            preset.rows,
            preset.cols,
            preset.q,
            format_float(preset.tau)
        );
        report.push_str(&study::render_markdown(preset.family, &rows));
        report.push('\n');
        fs::write(a.out_dir.join(format!("{}.csv", preset.name)), study::rows_csv(&rows))?;
        all.push(json!({ "preset": preset, "sparse_q": q, "rows": rows }));
    }
    fs::write(a.out_dir.join("report.md"), &report)?;
    fs::write(
        a.out_dir.join("report.json"),
        serde_json::to_string_pretty(&all).unwrap_or_default(),
    )?;
    print!("{report}");
    Ok(())
}
