//! Dense and matrix-free linear algebra helpers on top of `faer`.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Llt;
use faer::{Accum, ColMut, ColRef, Mat, MatRef, Par, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// `out = alpha * a * v` (or `out += ...` when `accumulate`).
pub(crate) fn gemv(out: &mut [f64], a: MatRef<'_, f64>, v: &[f64], alpha: f64, accumulate: bool) {
    let beta = if accumulate { Accum::Add } else { Accum::Replace };
    matmul(
        ColMut::from_slice_mut(out).as_mat_mut(),
        beta,
        a,
        ColRef::from_slice(v).as_mat(),
        alpha,
        Par::Seq,
    );
}

/// `out = alpha * a' * v` (or `out += ...`).
pub(crate) fn gemv_t(out: &mut [f64], a: MatRef<'_, f64>, v: &[f64], alpha: f64, accumulate: bool) {
    gemv(out, a.transpose(), v, alpha, accumulate);
}

pub(crate) fn mat_vec(a: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    gemv(&mut out, a, v, 1.0, false);
    out
}

pub(crate) fn mat_t_vec(a: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.ncols()];
    gemv_t(&mut out, a, v, 1.0, false);
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `v' S v` for a dense symmetric `S`, `O(k^2)`.
pub(crate) fn sym_quad_form(s: MatRef<'_, f64>, v: &[f64]) -> f64 {
    let k = v.len();
    let mut total = 0.0;
    for j in 0..k {
        let col = s.col(j);
        let mut acc = 0.0;
        for i in 0..k {
            acc += col[i] * v[i];
        }
        total += acc * v[j];
    }
    total
}

pub(crate) fn symmetrize(a: &mut Mat<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

#[cfg(test)]
pub(crate) fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

/// Flips `v` so that its first non-negligible component is positive.
pub(crate) fn canonical_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-10 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues in descending
/// order and canonically signed eigenvectors.
pub(crate) fn sym_eigen_desc(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let n = a.nrows();
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let mut vectors = Mat::<f64>::zeros(n, n);
    for (k, src) in (0..n).rev().enumerate() {
        let dst = vectors.col_as_slice_mut(k);
        for i in 0..n {
            dst[i] = u[(i, src)];
        }
        canonical_sign(dst);
    }
    Ok((values, vectors))
}

pub(crate) fn sym_eigenvalues_desc(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let mut v = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    v.reverse();
    Ok(v)
}

/// Cholesky factor of a symmetric positive definite matrix. On failure the
/// error carries an eigenvalue-based condition number estimate.
pub(crate) fn cholesky(a: MatRef<'_, f64>, what: &str) -> Result<Llt<f64>> {
    a.llt(Side::Lower).map_err(|_| {
        let condition = match sym_eigenvalues_desc(a) {
            Ok(ev) if !ev.is_empty() => {
                let hi = ev[0].abs();
                let lo = ev[ev.len() - 1];
                if lo <= 0.0 {
                    f64::INFINITY
                } else {
                    hi / lo
                }
            }
            _ => f64::NAN,
        };
        Error::Cholesky {
            what: what.to_string(),
            condition,
        }
    })
}

/// Orthonormal basis of the column space of `x` by twice-iterated modified
/// Gram-Schmidt. Returns the index of the first column that is numerically
/// dependent on its predecessors.
pub(crate) fn orthonormal_columns(x: MatRef<'_, f64>, rel_tol: f64) -> std::result::Result<Mat<f64>, usize> {
    let (n, p) = (x.nrows(), x.ncols());
    let mut q = Mat::<f64>::zeros(n, p);
    for j in 0..p {
        let mut v: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
        let original = dot(&v, &v).sqrt();
        for _ in 0..2 {
            for k in 0..j {
                let qk = q.col_as_slice(k);
                let c = dot(qk, &v);
                v.iter_mut().zip(qk).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if original == 0.0 || norm <= rel_tol * original {
            return Err(j);
        }
        q.col_as_slice_mut(j)
            .iter_mut()
            .zip(&v)
            .for_each(|(d, s)| *d = s / norm);
    }
    Ok(q)
}

/// Which leading eigenpairs a matrix-free solve must deliver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeadingTarget {
    /// The `k` largest eigenpairs.
    Count(usize),
    /// Every eigenpair with eigenvalue strictly above the bound.
    Above(f64),
}

/// Leading eigenpairs of a symmetric operator by block Krylov iteration with
/// full reorthogonalization and Rayleigh-Ritz extraction.
///
/// Blocks (rather than single vectors) are needed because lattice spectra
/// have repeated eigenvalues, which a single Krylov sequence cannot resolve.
/// A Ritz pair is accepted once `||A y - theta y|| <= tol`.
pub fn leading_eigenpairs<F>(
    apply: F,
    n: usize,
    target: LeadingTarget,
    tol: f64,
    block: usize,
    seed: u64,
) -> Result<(Vec<f64>, Mat<f64>)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let block = block.max(1).min(n);
    if let LeadingTarget::Count(k) = target {
        if k > n {
            return Err(Error::InvalidArgument(format!(
                "requested {k} eigenpairs of an operator of dimension {n}"
            )));
        }
        if k == 0 {
            return Ok((Vec::new(), Mat::zeros(n, 0)));
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut basis: Vec<f64> = Vec::new();
    let mut images: Vec<f64> = Vec::new();
    let mut m = 0usize;
    let mut pending: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut next_check = (2 * block).max(match target {
        LeadingTarget::Count(k) => 2 * k + block,
        LeadingTarget::Above(_) => 4 * block,
    });
    let mut scratch = vec![0.0; n];

    loop {
        let mut accepted = Vec::new();
        for mut w in pending.drain(..) {
            if m == n {
                break;
            }
            let mut tries = 0;
            loop {
                let before = dot(&w, &w).sqrt();
                if m > 0 {
                    let v = MatRef::from_column_major_slice(&basis, n, m);
                    for _ in 0..2 {
                        let c = mat_t_vec(v, &w);
                        gemv(&mut w, v, &c, -1.0, true);
                    }
                }
                let after = dot(&w, &w).sqrt();
                if after > 1e-8 * before.max(f64::MIN_POSITIVE) && after > 0.0 {
                    w.iter_mut().for_each(|x| *x /= after);
                    break;
                }
                tries += 1;
                if tries > 5 {
                    return Err(Error::Eigen("could not extend Krylov basis".into()));
                }
                w = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            }
            apply(&w, &mut scratch);
            basis.extend_from_slice(&w);
            images.extend_from_slice(&scratch);
            accepted.push(scratch.clone());
            m += 1;
        }
        pending = accepted;

        if m < next_check && m < n {
            continue;
        }
        next_check = (m + m / 3).max(m + block);

        let v = MatRef::from_column_major_slice(&basis, n, m);
        let av = MatRef::from_column_major_slice(&images, n, m);
        let mut h = Mat::<f64>::zeros(m, m);
        matmul(h.as_mut(), Accum::Replace, v.transpose(), av, 1.0, Par::Seq);
        symmetrize(&mut h);
        let (theta, y) = sym_eigen_desc(h.as_ref())?;

        let wanted = match target {
            LeadingTarget::Count(k) => k,
            LeadingTarget::Above(t) => theta.iter().take_while(|&&x| x > t).count() + 1,
        }
        .min(m);
        let mut ritz = Mat::<f64>::zeros(n, wanted);
        let mut converged = 0;
        for i in 0..wanted {
            let yi = y.col_as_slice(i);
            let mut r = mat_vec(av, yi);
            let u = mat_vec(v, yi);
            r.iter_mut().zip(&u).for_each(|(a, b)| *a -= theta[i] * b);
            if dot(&r, &r).sqrt() > tol && m < n {
                break;
            }
            ritz.col_as_slice_mut(i).copy_from_slice(&u);
            converged += 1;
        }

        let done = match target {
            LeadingTarget::Count(k) => converged >= k,
            LeadingTarget::Above(t) => {
                converged == wanted && (wanted == m || theta[wanted - 1] <= t)
            }
        };
        if done {
            let keep = match target {
                LeadingTarget::Count(k) => k,
                LeadingTarget::Above(t) => theta.iter().take_while(|&&x| x > t).count(),
            };
            let mut vectors = Mat::<f64>::zeros(n, keep);
            for i in 0..keep {
                let dst = vectors.col_as_slice_mut(i);
                dst.copy_from_slice(ritz.col_as_slice(i));
                canonical_sign(dst);
            }
            return Ok((theta[..keep].to_vec(), vectors));
        }
        if m == n {
            return Err(Error::Eigen("Krylov space exhausted before convergence".into()));
        }
    }
}
