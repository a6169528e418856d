//! Areal graphs, their adjacency structure and the intrinsic CAR precision
//! `Q = diag(A1) - A`.
//!
//! Adjacency is kept sparse (edge list plus CSR neighbor lists). Dense
//! matrices are only materialized on request for the spectral routines.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use faer::Mat;

use crate::error::{Error, Result};

/// Undirected simple graph over vertices `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    coords: Option<Vec<[f64; 2]>>,
}

impl Graph {
    /// Validates `edges` and builds the neighbor lists. Pairs may be given in
    /// either orientation; `(i, j)` and `(j, i)` count as the same edge.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("graph needs at least one vertex".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut normalized = Vec::with_capacity(edges.len());
        for (index, &(a, b)) in edges.iter().enumerate() {
            for v in [a, b] {
                if v >= n {
                    return Err(Error::VertexOutOfRange { index, vertex: v, n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop { index, vertex: a });
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge { index, i: a, j: b });
            }
            normalized.push(key);
        }

        let mut degree = vec![0usize; n];
        for &(i, j) in &normalized {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0usize; offsets[n]];
        for &(i, j) in &normalized {
            neighbors[fill[i]] = j;
            fill[i] += 1;
            neighbors[fill[j]] = i;
            fill[j] += 1;
        }
        for v in 0..n {
            neighbors[offsets[v]..offsets[v + 1]].sort_unstable();
        }

        Ok(Graph {
            n,
            edges: normalized,
            offsets,
            neighbors,
            coords: None,
        })
    }

    /// Rook-adjacency lattice with `rows * cols` vertices. Vertex `(r, c)` has
    /// index `r * cols + c` and coordinates `(c / (cols - 1), r / (rows - 1))`;
    /// a single row or column sits at coordinate 0.5.
    pub fn lattice(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "lattice dimensions must be positive, got {rows}x{cols}"
            )));
        }
        let mut edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        let unit = |k: usize, len: usize| {
            if len == 1 {
                0.5
            } else {
                k as f64 / (len - 1) as f64
            }
        };
        let coords = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| [unit(c, cols), unit(r, rows)])
            .collect();
        let mut g = Graph::from_edges(rows * cols, &edges)?;
        g.coords = Some(coords);
        Ok(g)
    }

    pub fn with_coords(mut self, coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.len() != self.n {
            return Err(Error::mismatch("vertex coordinates", self.n, coords.len()));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(i, j)` with `i < j`, in insertion order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    /// `1'A1`, i.e. twice the edge count.
    pub fn adjacency_total(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn connected_components(&self) -> usize {
        self.component_labels().iter().max().map_or(0, |m| m + 1)
    }

    /// Component index of every vertex, numbered in order of first vertex.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = components;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                for &w in self.neighbors(v) {
                    if label[w] == usize::MAX {
                        label[w] = components;
                        queue.push_back(w);
                    }
                }
            }
            components += 1;
        }
        label
    }

    /// Dense binary adjacency matrix.
    pub fn adjacency_dense(&self) -> Mat<f64> {
        let mut a = Mat::<f64>::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// `out = A v`.
    pub fn adjacency_mul(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.neighbors(i).iter().map(|&j| v[j]).sum();
        }
    }

    pub fn laplacian(&self) -> PrecisionMatrix {
        PrecisionMatrix {
            graph: self.clone(),
            rank: self.n - self.connected_components(),
        }
    }

    /// Serializes to the edge-list format: a `"n m"` header then one
    /// `"i j"` line per edge with `i < j`.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(16 * (self.edges.len() + 1));
        let _ = writeln!(out, "{} {}", self.n, self.edges.len());
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn parse_edge_list(text: &str, source: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing \"n m\" header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(hline, format!("expected \"n m\", found {header:?}")));
        }
        let parse_usize = |s: &str, line: usize| {
            s.parse::<usize>()
                .map_err(|_| parse_err(line, format!("{s:?} is not a non-negative integer")))
        };
        let n = parse_usize(fields[0], hline)?;
        let m = parse_usize(fields[1], hline)?;

        let mut edges = Vec::with_capacity(m);
        for (line, content) in lines {
            let f: Vec<&str> = content.split_whitespace().collect();
            if f.len() != 2 {
                return Err(parse_err(line, format!("expected \"i j\", found {content:?}")));
            }
            let (i, j) = (parse_usize(f[0], line)?, parse_usize(f[1], line)?);
            if i >= j {
                return Err(parse_err(line, format!("edge ({i}, {j}) must satisfy i < j")));
            }
            edges.push((i, j));
        }
        if edges.len() != m {
            return Err(parse_err(
                hline,
                format!("header declares {m} edges but {} were found", edges.len()),
            ));
        }
        Graph::from_edges(n, &edges).map_err(|e| match e {
            Error::DuplicateEdge { index, .. }
            | Error::VertexOutOfRange { index, .. }
            | Error::SelfLoop { index, .. } => parse_err(0, format!("edge {index}: {e}")),
            other => other,
        })
    }

    pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Graph::parse_edge_list(&text, &path.display().to_string())
    }

    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }

    /// Reads an `n`-line `"x y"` coordinate file and attaches it.
    pub fn read_coords(self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut coords = Vec::with_capacity(self.n);
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed: Vec<f64> = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line: k + 1,
                    message: e.to_string(),
                })?;
            if parsed.len() != 2 || parsed.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: k + 1,
                    message: format!("expected two finite floats, found {line:?}"),
                });
            }
            coords.push([parsed[0], parsed[1]]);
        }
        self.with_coords(coords)
    }

    pub fn write_coords(&self, path: impl AsRef<Path>) -> Result<()> {
        let coords = self
            .coords
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("graph has no coordinates".into()))?;
        let mut out = String::new();
        for [x, y] in coords {
            let _ = writeln!(out, "{x:.17e} {y:.17e}");
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// The graph Laplacian `Q = diag(A1) - A`, stored through its graph.
#[derive(Debug, Clone)]
pub struct PrecisionMatrix {
    graph: Graph,
    rank: usize,
}

impl PrecisionMatrix {
    pub fn n(&self) -> usize {
        self.graph.n
    }

    /// `n` minus the number of connected components.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Integer entry `Q[i][j]`.
    pub fn entry(&self, i: usize, j: usize) -> i64 {
        if i == j {
            self.graph.degree(i) as i64
        } else if self.graph.neighbors(i).binary_search(&j).is_ok() {
            -1
        } else {
            0
        }
    }

    /// Row sums evaluated in integer arithmetic.
    pub fn row_sums(&self) -> Vec<i64> {
        (0..self.n())
            .map(|i| {
                self.graph.degree(i) as i64
                    - self.graph.neighbors(i).iter().map(|_| 1i64).sum::<i64>()
            })
            .collect()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.n();
        let mut q = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            q[(i, i)] = self.graph.degree(i) as f64;
        }
        for &(i, j) in self.graph.edges() {
            q[(i, j)] = -1.0;
            q[(j, i)] = -1.0;
        }
        q
    }

    /// `out = Q v`.
    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let s: f64 = self.graph.neighbors(i).iter().map(|&j| v[j]).sum();
            *o = self.graph.degree(i) as f64 * v[i] - s;
        }
    }

    /// `v'Qv = sum over edges of (v_i - v_j)^2`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.graph
            .edges()
            .iter()
            .map(|&(i, j)| {
                let d = v[i] - v[j];
                d * d
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_edge_counts() {
        let g = Graph::lattice(2, 2).unwrap();
        assert_eq!((g.n(), g.edge_count()), (4, 4));
        let g = Graph::lattice(30, 30).unwrap();
        assert_eq!((g.n(), g.edge_count()), (900, 1740));
        let g = Graph::lattice(1, 5).unwrap();
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.edges(), &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        assert_eq!(g.coords().unwrap()[0], [0.0, 0.5]);
        assert_eq!(g.coords().unwrap()[4], [1.0, 0.5]);
        assert!(Graph::lattice(0, 3).is_err());
    }

    #[test]
    fn lattice_coordinates_span_unit_square() {
        let g = Graph::lattice(3, 4).unwrap();
        let c = g.coords().unwrap();
        assert_eq!(c[0], [0.0, 0.0]);
        assert_eq!(c[11], [1.0, 1.0]);
        // vertex (1, 2)
        assert_eq!(c[6], [2.0 / 3.0, 0.5]);
    }

    #[test]
    fn edge_validation() {
        assert!(Graph::from_edges(2, &[(0, 1)]).is_ok());
        assert!(matches!(
            Graph::from_edges(3, &[(0, 0)]),
            Err(Error::SelfLoop { index: 0, vertex: 0 })
        ));
        assert!(matches!(
            Graph::from_edges(3, &[(0, 1), (1, 0)]),
            Err(Error::DuplicateEdge { index: 1, i: 1, j: 0 })
        ));
        assert!(matches!(
            Graph::from_edges(3, &[(0, 3)]),
            Err(Error::VertexOutOfRange { index: 0, vertex: 3, n: 3 })
        ));
        assert!(Graph::from_edges(0, &[]).is_err());
    }

    #[test]
    fn single_edge_laplacian() {
        let q = Graph::from_edges(2, &[(0, 1)]).unwrap().laplacian();
        let d = q.to_dense();
        assert_eq!(
            [d[(0, 0)], d[(0, 1)], d[(1, 0)], d[(1, 1)]],
            [1.0, -1.0, -1.0, 1.0]
        );
        assert_eq!(q.rank(), 1);
    }

    /// Independent traversal: union-find component count.
    fn components_union_find(g: &Graph) -> usize {
        let mut parent: Vec<usize> = (0..g.n()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for &(i, j) in g.edges() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a] = b;
        }
        (0..g.n()).filter(|&v| find(&mut parent, v) == v).count()
    }

    #[test]
    fn lattice_laplacian_rank() {
        let g = Graph::lattice(30, 30).unwrap();
        assert_eq!(components_union_find(&g), 1);
        assert_eq!(g.laplacian().rank(), 900 - components_union_find(&g));
        assert_eq!(g.laplacian().rank(), 899);

        let g = Graph::from_edges(5, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(g.laplacian().rank(), 5 - 3);
    }

    #[test]
    fn laplacian_entries_and_spectrum() {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (0, 5)]).unwrap();
        let q = g.laplacian();
        assert!(q.row_sums().iter().all(|&s| s == 0));
        let a = g.adjacency_dense();
        let d = q.to_dense();
        for i in 0..6 {
            let deg: f64 = (0..6).map(|j| a[(i, j)]).sum();
            for j in 0..6 {
                assert_eq!(a[(i, j)], a[(j, i)]);
                let expect = if i == j { deg } else { -a[(i, j)] };
                assert_eq!(d[(i, j)], expect);
                assert_eq!(q.entry(i, j) as f64, expect);
            }
        }
        let ev = d.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        assert!(ev.iter().all(|&l| l >= -1e-10));
    }

    #[test]
    fn sparse_products_match_dense() {
        let g = Graph::lattice(4, 5).unwrap();
        let q = g.laplacian();
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut out = vec![0.0; 20];
        q.mul_vec(&v, &mut out);
        let dense = q.to_dense();
        let mut quad = 0.0;
        for i in 0..20 {
            let row: f64 = (0..20).map(|j| dense[(i, j)] * v[j]).sum();
            assert!((row - out[i]).abs() < 1e-12);
            quad += v[i] * row;
        }
        assert!((quad - q.quad_form(&v)).abs() < 1e-10);
    }

    #[test]
    fn edge_list_round_trip_and_errors() {
        let g = Graph::lattice(3, 3).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("9 12\n"));
        let back = Graph::parse_edge_list(&format!("# comment\n{text}"), "mem").unwrap();
        assert_eq!(back.edges(), g.edges());

        let err = Graph::parse_edge_list("3 1\n1 0\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = Graph::parse_edge_list("3 2\n0 1\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let err = Graph::parse_edge_list("3 1\n0 x\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
