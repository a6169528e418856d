use faer::Mat;
use sglmm_core::basis::{moran_basis, rhz_basis, DesignMatrix, RankRule};
use sglmm_core::graph::Graph;
use sglmm_core::model::{EffectBasis, Family, ModelSpec, Parameterization, PriorSet};
use sglmm_core::sampler::{fit, fit_chains, fit_stream, CsvSink, DrawSink, McmcConfig};
use sglmm_core::simulate::{simulate_preset, simulate_sparse, Preset};
use sglmm_core::summary::{mcse, mean};

fn lattice(rows: usize, cols: usize) -> (Graph, DesignMatrix) {
    let g = Graph::lattice(rows, cols).unwrap();
    let x = DesignMatrix::coordinates(&g).unwrap();
    (g, x)
}

fn sparse_basis(g: &Graph, x: &DesignMatrix, q: usize) -> EffectBasis {
    EffectBasis::Sparse(moran_basis(x, g, RankRule::Fixed(q)).unwrap())
}

fn within(draws: &[f64], target: f64, k: f64) -> (bool, f64, f64) {
    let m = mean(draws).unwrap();
    let se = mcse(draws).unwrap();
    ((m - target).abs() <= k * se, m, se)
}

#[test]
fn identical_seed_gives_identical_draws() {
    let (g, x) = lattice(4, 4);
    let basis = sparse_basis(&g, &x, 3);
    let data = simulate_sparse(
        g.clone(),
        x.clone(),
        moran_basis(&x, &g, RankRule::Fixed(3)).unwrap(),
        Family::Poisson,
        &[1.0, 1.0],
        3.0,
        None,
        2,
    )
    .unwrap();
    let spec = ModelSpec::sparse(Family::Poisson, 3);
    let cfg = McmcConfig {
        iterations: 3000,
        burn_in: 500,
        thin: 5,
        seed: 17,
        ..Default::default()
    };
    let a = fit(&spec, &x, &data.z, &basis, &cfg).unwrap();
    let b = fit(&spec, &x, &data.z, &basis, &cfg).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(a.len(), 500);
    let other = fit(&spec, &x, &data.z, &basis, &McmcConfig { seed: 18, ..cfg.clone() }).unwrap();
    assert_ne!(a.values, other.values);
}

#[test]
fn bernoulli_sparse_on_two_by_two() {
    let (g, x) = lattice(2, 2);
    let basis = sparse_basis(&g, &x, 1);
    let z = [1.0, 0.0, 1.0, 1.0];
    let spec = ModelSpec::sparse(Family::Bernoulli, 1);
    let cfg = McmcConfig {
        iterations: 10_000,
        burn_in: 1000,
        thin: 1,
        seed: 3,
        ..Default::default()
    };
    let chain = fit(&spec, &x, &z, &basis, &cfg).unwrap();
    assert!(chain.tau_draws().unwrap().iter().all(|&t| t > 0.0));
    for (block, rate) in &chain.acceptance_rates {
        assert!(*rate > 0.0 && *rate < 1.0, "{block}: {rate}");
    }
}

#[test]
fn streamed_csv_matches_memory() {
    let (g, x) = lattice(3, 3);
    let basis = EffectBasis::Traditional(g.laplacian());
    let z = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
    let spec = ModelSpec::new(Family::Bernoulli, Parameterization::Traditional);
    let cfg = McmcConfig {
        iterations: 400,
        burn_in: 100,
        thin: 3,
        seed: 1,
        ..Default::default()
    };
    let mut sink = CsvSink::new(Vec::new());
    let chain = fit_stream(&spec, &x, &z, &basis, &cfg, 0, &mut sink).unwrap();
    let text = String::from_utf8(sink.into_inner()).unwrap();
    let table = sglmm_core::io::parse_table(&text, "chain").unwrap();
    assert_eq!(table.rows(), chain.len());
    assert_eq!(table.names(), chain.columns.as_slice());
    for (j, name) in chain.columns.iter().enumerate() {
        assert_eq!(table.column(name).unwrap(), chain.column_at(j).as_slice());
    }
}

#[test]
fn parallel_chains_use_distinct_streams() {
    let (g, x) = lattice(3, 3);
    let basis = sparse_basis(&g, &x, 2);
    let z = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
    let spec = ModelSpec::sparse(Family::Bernoulli, 2);
    let cfg = McmcConfig {
        iterations: 500,
        burn_in: 100,
        thin: 1,
        seed: 9,
        ..Default::default()
    };
    let sinks: Vec<Box<dyn DrawSink + Send>> = (0..3)
        .map(|_| Box::new(sglmm_core::sampler::NullSink) as Box<dyn DrawSink + Send>)
        .collect();
    let chains = fit_chains(&spec, &x, &z, &basis, &cfg, sinks).unwrap();
    assert_eq!(chains.len(), 3);
    assert_ne!(chains[0].values, chains[1].values);
    let single = fit(&spec, &x, &z, &basis, &cfg).unwrap();
    assert_eq!(single.values, chains[0].values);
    let mut s1 = sglmm_core::sampler::NullSink;
    let again = fit_stream(&spec, &x, &z, &basis, &cfg, 2, &mut s1).unwrap();
    assert_eq!(again.values, chains[2].values);
}

#[test]
fn gaussian_conjugate_posterior_mean() {
    let (g, x) = lattice(5, 5);
    let mb = moran_basis(&x, &g, RankRule::Fixed(5)).unwrap();
    let data = simulate_sparse(g.clone(), x.clone(), mb.clone(), Family::Gaussian, &[1.0, 1.0], 1.0, Some(1.0), 5).unwrap();
    let (tau, s2) = (1.0, 1.0);
    let spec = ModelSpec::sparse(Family::Gaussian, 5);
    let basis = EffectBasis::Sparse(mb.clone());
    let cfg = McmcConfig {
        iterations: 40_000,
        burn_in: 1000,
        thin: 1,
        seed: 21,
        fixed_tau: Some(tau),
        fixed_sigma2: Some(s2),
        ..Default::default()
    };
    let chain = fit(&spec, &x, &data.z, &basis, &cfg).unwrap();

    // closed form: X'M = 0 so the (beta, delta_s) posterior factorizes
    let solve = |a: Mat<f64>, b: Vec<f64>| -> Vec<f64> {
        let n = b.len();
        let mut m = a;
        let mut r = b;
        for c in 0..n {
            for row in (c + 1)..n {
                let f = m[(row, c)] / m[(c, c)];
                for k in c..n {
                    let v = m[(c, k)];
                    m[(row, k)] -= f * v;
                }
                r[row] -= f * r[c];
            }
        }
        let mut out = vec![0.0; n];
        for i in (0..n).rev() {
            out[i] = (r[i] - ((i + 1)..n).map(|k| m[(i, k)] * out[k]).sum::<f64>()) / m[(i, i)];
        }
        out
    };
    let xm = x.matrix();
    let pb = Mat::from_fn(2, 2, |i, j| {
        (0..25).map(|r| xm[(r, i)] * xm[(r, j)]).sum::<f64>() / s2 + if i == j { 0.01 } else { 0.0 }
    });
    let rb: Vec<f64> = (0..2).map(|i| (0..25).map(|r| xm[(r, i)] * data.z[r]).sum::<f64>() / s2).collect();
    let beta_mean = solve(pb, rb);
    let m = mb.vectors();
    let qs = mb.reduced_precision();
    let pd = Mat::from_fn(5, 5, |i, j| tau * qs[(i, j)] + if i == j { 1.0 / s2 } else { 0.0 });
    let rd: Vec<f64> = (0..5).map(|i| (0..25).map(|r| m[(r, i)] * data.z[r]).sum::<f64>() / s2).collect();
    let delta_mean = solve(pd, rd);

    for j in 0..2 {
        let (ok, got, se) = within(&chain.beta_draws(j), beta_mean[j], 3.0);
        assert!(ok, "beta {j}: {got} vs {} (mcse {se})", beta_mean[j]);
    }
    for j in 0..5 {
        let (ok, got, se) = within(&chain.effect_draws(j).unwrap(), delta_mean[j], 3.0);
        assert!(ok, "delta {j}: {got} vs {} (mcse {se})", delta_mean[j]);
    }
}

#[test]
fn gaussian_prior_only_recovers_tau_and_effect_variances() {
    let (g, x) = lattice(4, 4);
    let mb = moran_basis(&x, &g, RankRule::Fixed(3)).unwrap();
    let basis = EffectBasis::Sparse(mb.clone());
    let z: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
    let spec = ModelSpec::sparse(Family::Gaussian, 3);
    let cfg = McmcConfig {
        iterations: 100_000,
        burn_in: 1000,
        thin: 1,
        seed: 4,
        prior_only: true,
        ..Default::default()
    };
    let chain = fit(&spec, &x, &z, &basis, &cfg).unwrap();
    let (ok, m, se) = within(&chain.tau_draws().unwrap(), 1000.0, 3.0);
    assert!(ok, "tau mean {m} (mcse {se})");
    for j in 0..2 {
        let (ok, m, se) = within(&chain.beta_draws(j), 0.0, 3.0);
        assert!(ok, "beta {j} mean {m} (mcse {se})");
    }

    // fixed tau: Var(delta_s) = diag((tau Q_S)^{-1})
    let tau = 2.0;
    let cfg = McmcConfig {
        fixed_tau: Some(tau),
        ..cfg
    };
    let chain = fit(&spec, &x, &z, &basis, &cfg).unwrap();
    let qs = mb.reduced_precision();
    let inv = qs.to_owned().llt(faer::Side::Lower).unwrap();
    let inv = faer::linalg::solvers::DenseSolveCore::inverse(&inv);
    for j in 0..3 {
        let d = chain.effect_draws(j).unwrap();
        let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
        let target = inv[(j, j)] / tau;
        let (ok, m, se) = within(&sq, target, 3.0);
        assert!(ok, "var delta {j}: {m} vs {target} (mcse {se})");
    }
}

#[test]
fn huge_sigma2_gives_prior_beta_moments() {
    let (g, x) = lattice(4, 4);
    let basis = sparse_basis(&g, &x, 2);
    let z: Vec<f64> = (0..16).map(|i| i as f64).collect();
    let spec = ModelSpec::sparse(Family::Gaussian, 2);
    let cfg = McmcConfig {
        iterations: 50_000,
        burn_in: 100,
        thin: 1,
        seed: 12,
        fixed_sigma2: Some(1e12),
        fixed_tau: Some(1.0),
        ..Default::default()
    };
    let chain = fit(&spec, &x, &z, &basis, &cfg).unwrap();
    for j in 0..2 {
        let b = chain.beta_draws(j);
        let (ok, m, se) = within(&b, 0.0, 3.0);
        assert!(ok, "beta {j}: {m} ({se})");
        let sq: Vec<f64> = b.iter().map(|v| v * v).collect();
        let (ok, m, se) = within(&sq, 100.0, 3.0);
        assert!(ok, "beta {j} second moment {m} ({se})");
    }
}

#[test]
fn flat_target_accepts_every_beta_proposal() {
    let (g, x) = lattice(3, 3);
    let z = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
    let spec = ModelSpec::new(Family::Bernoulli, Parameterization::Nonspatial).with_priors(PriorSet {
        beta_variance: 1e300,
        ..Default::default()
    });
    let cfg = McmcConfig {
        iterations: 2000,
        burn_in: 1,
        thin: 1,
        seed: 2,
        prior_only: true,
        adapt: false,
        ..Default::default()
    };
    let _ = g;
    let chain = fit(&spec, &x, &z, &EffectBasis::None, &cfg).unwrap();
    assert!(chain.acceptance_rates["beta"] > 0.999);
}

#[test]
fn non_gaussian_prior_recovery() {
    let (g, x) = lattice(3, 3);
    let z = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
    for (param, basis) in [
        (Parameterization::Sparse, sparse_basis(&g, &x, 2)),
        (Parameterization::Rhz, EffectBasis::Rhz(rhz_basis(&x, &g).unwrap())),
        (Parameterization::Traditional, EffectBasis::Traditional(g.laplacian())),
    ] {
        let mut spec = ModelSpec::new(Family::Bernoulli, param);
        if param == Parameterization::Sparse {
            spec.q = Some(2);
        }
        let cfg = McmcConfig {
            iterations: 100_000,
            burn_in: 5000,
            thin: 1,
            seed: 31,
            prior_only: true,
            ..Default::default()
        };
        let chain = fit(&spec, &x, &z, &basis, &cfg).unwrap();
        let (ok, m, se) = within(&chain.tau_draws().unwrap(), 1000.0, 3.0);
        assert!(ok, "{param} tau mean {m} (mcse {se})");
        for j in 0..2 {
            let (ok, m, se) = within(&chain.beta_draws(j), 0.0, 3.0);
            assert!(ok, "{param} beta {j} mean {m} (mcse {se})");
        }
    }
}

#[test]
fn adaptation_tunes_binary_preset() {
    let data = simulate_preset(&Preset::BINARY.scaled(30, 30, 400), 1).unwrap();
    let basis = sparse_basis(&data.graph, &data.x, 50);
    let spec = ModelSpec::sparse(Family::Bernoulli, 50);
    let cfg = McmcConfig {
        iterations: 6000,
        burn_in: 3000,
        thin: 10,
        seed: 5,
        ..Default::default()
    };
    let chain = fit(&spec, &data.x, &data.z, &basis, &cfg).unwrap();
    for block in ["beta", "effects"] {
        let rate = chain.acceptance_rates[block];
        assert!(rate > 0.1 && rate < 0.5, "{block}: {rate}");
    }
}
