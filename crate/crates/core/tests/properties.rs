use proptest::prelude::*;

use sglmm_core::basis::{moran_basis, DesignMatrix, RankRule};
use sglmm_core::io::{format_float, parse_table, Table};
use sglmm_core::summary::{equal_tailed, hpd, quantile_sorted};
use sglmm_core::Graph;

fn random_graph() -> impl Strategy<Value = Graph> {
    (2usize..12).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |pairs| {
            let mut edges: Vec<(usize, usize)> = pairs
                .into_iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect();
            edges.sort_unstable();
            edges.dedup();
            Graph::from_edges(n, &edges).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_rows_sum_to_zero(g in random_graph()) {
        let q = g.laplacian();
        prop_assert!(q.row_sums().iter().all(|&s| s == 0));
        prop_assert_eq!(q.rank(), g.n() - g.connected_components());
    }

    #[test]
    fn laplacian_quad_form_is_edge_sum(g in random_graph(), seed in any::<u64>()) {
        let v: Vec<f64> = (0..g.n()).map(|i| ((seed.wrapping_mul(i as u64 + 7) % 1000) as f64) / 100.0 - 5.0).collect();
        let direct: f64 = g.edges().iter().map(|&(a, b)| (v[a] - v[b]).powi(2)).sum();
        let q = g.laplacian().quad_form(&v);
        prop_assert!((q - direct).abs() <= 1e-9 * direct.max(1.0));
    }

    #[test]
    fn projection_is_idempotent_and_orthogonal(
        rows in 3usize..7,
        cols in 3usize..7,
        v in proptest::collection::vec(-10.0f64..10.0, 49),
    ) {
        let g = Graph::lattice(rows, cols).unwrap();
        let x = DesignMatrix::coordinates(&g).unwrap();
        let mut once = v[..g.n()].to_vec();
        x.project_out(&mut once);
        let mut twice = once.clone();
        x.project_out(&mut twice);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        for j in 0..x.p() {
            let dot: f64 = x.column(j).iter().zip(&once).map(|(a, b)| a * b).sum();
            prop_assert!(dot.abs() < 1e-9);
        }
    }

    #[test]
    fn moran_basis_is_orthonormal_and_confounding_free(rows in 3usize..7, cols in 3usize..7) {
        let g = Graph::lattice(rows, cols).unwrap();
        let x = DesignMatrix::coordinates(&g).unwrap();
        let b = moran_basis(&x, &g, RankRule::StandardizedAbove(1e-6)).unwrap();
        let m = b.vectors();
        for i in 0..b.q() {
            for j in 0..b.q() {
                let d: f64 = (0..g.n()).map(|r| m[(r, i)] * m[(r, j)]).sum();
                prop_assert!((d - f64::from(u8::from(i == j))).abs() < 1e-9);
            }
            for c in 0..x.p() {
                let d: f64 = x.column(c).iter().enumerate().map(|(r, v)| v * m[(r, i)]).sum();
                prop_assert!(d.abs() < 1e-9);
            }
        }
        prop_assert!(b.standardized_eigenvalues().iter().all(|&s| s > 0.0));
    }

    #[test]
    fn hpd_is_no_wider_than_equal_tailed(
        draws in proptest::collection::vec(-1e3f64..1e3, 2..300),
        level in 0.5f64..0.99,
    ) {
        let (elo, ehi) = equal_tailed(&draws, level).unwrap();
        let (hlo, hhi) = hpd(&draws, level).unwrap();
        prop_assert!(hlo <= hhi);
        prop_assert!(hhi - hlo <= ehi - elo + 1e-9);
    }

    #[test]
    fn quantiles_are_monotone(
        mut draws in proptest::collection::vec(-1e6f64..1e6, 1..200),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        draws.sort_by(f64::total_cmp);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantile_sorted(&draws, lo) <= quantile_sorted(&draws, hi));
        prop_assert!(quantile_sorted(&draws, 0.0) == draws[0]);
        prop_assert!(quantile_sorted(&draws, 1.0) == *draws.last().unwrap());
    }

    #[test]
    fn floats_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let s = format_float(v);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn tables_round_trip(rows in proptest::collection::vec(proptest::collection::vec(-1e12f64..1e12, 3), 0..20)) {
        let mut t = Table::new(vec!["a".into(), "b".into(), "c".into()]);
        for r in &rows {
            t.push_row(r).unwrap();
        }
        let back = parse_table(&t.to_csv(), "memory").unwrap();
        prop_assert_eq!(back.names(), t.names());
        prop_assert_eq!(back.rows(), rows.len());
        for name in ["a", "b", "c"] {
            prop_assert_eq!(back.column(name).unwrap(), t.column(name).unwrap());
        }
    }
}
