//! Lowest eigenpairs of sparse SPD operators: shift-invert block Lanczos
//! with full reorthogonalization and Krylov-Schur thick restart, or a dense
//! solve for small problems.

use crate::error::{Error, Result};
use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub(crate) struct EigOptions {
    pub block: usize,
    /// Ritz residual bound relative to the Ritz value of the inverse.
    pub tol: f64,
    /// Problems up to this size go to the dense solver.
    pub dense_max: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { block: 32, tol: 1e-9, dense_max: 1200, max_restarts: 300, seed: 0x5eed_a9e7 }
    }
}

/// Ascending eigenvalues with unit-norm eigenvectors as columns.
pub(crate) struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

/// The `nev` smallest eigenpairs of the SPD matrix `lower + ...` given by
/// its lower triangle (including `shift` on the diagonal, removed again in
/// the returned values).
pub(crate) fn smallest(
    n: usize,
    lower: &[Triplet<usize, usize, f64>],
    shift: f64,
    nev: usize,
    opts: &EigOptions,
) -> Result<EigenPairs> {
    let nev = nev.min(n);
    if nev == 0 {
        return Ok(EigenPairs { values: Vec::new(), vectors: Mat::zeros(n, 0) });
    }
    if n <= opts.dense_max || 2 * nev + 4 * opts.block >= n {
        return dense(n, lower, shift, nev);
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, lower)
        .map_err(|e| Error::Aperture(format!("sparse assembly: {e:?}")))?;
    let llt = a
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::Aperture(format!("Cholesky factorization failed: {e:?}")))?;
    let op = |x: MatMut<'_, f64>| llt.solve_in_place(x);
    let (theta, vectors) = krylov_schur(n, &op, nev, opts)?;
    Ok(EigenPairs { values: theta.iter().map(|t| 1.0 / t - shift).collect(), vectors })
}

fn dense(n: usize, lower: &[Triplet<usize, usize, f64>], shift: f64, nev: usize) -> Result<EigenPairs> {
    let mut a = Mat::<f64>::zeros(n, n);
    for t in lower {
        a[(t.row, t.col)] += t.val;
        if t.row != t.col {
            a[(t.col, t.row)] += t.val;
        }
    }
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Aperture(format!("dense eigensolver: {e:?}")))?;
    let s = e.S().column_vector();
    let values = (0..nev).map(|k| s[k] - shift).collect();
    let vectors = e.U().subcols(0, nev).to_owned();
    Ok(EigenPairs { values, vectors })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormalizes `z` against the first `k` columns of `v` and within itself.
///
/// Returns the projection coefficients (`k x bs`) and the triangular factor
/// (`bs x bs`). Columns that vanish are replaced by fresh random directions
/// with a zero row in the factor.
fn orthonormalize(v: MatRef<'_, f64>, k: usize, z: &mut Mat<f64>, rng: &mut ChaCha8Rng) -> (Mat<f64>, Mat<f64>) {
    let bs = z.ncols();
    let n = z.nrows();
    let vk = v.subcols(0, k);
    let mut h = Mat::<f64>::zeros(k, bs);
    let mut tmp = Mat::<f64>::zeros(k, bs);
    let norms = |z: &Mat<f64>| -> Vec<f64> { (0..bs).map(|c| dot(z.col_as_slice(c), z.col_as_slice(c)).sqrt()).collect() };
    let before = norms(z);
    for pass in 0..2 {
        if pass == 1 {
            // One classical pass leaves orthogonality near eps times the
            // norm reduction; repeat only when that reduction is large.
            let after = norms(z);
            if before.iter().zip(&after).all(|(b, a)| *a >= 1e-4 * b) {
                break;
            }
        }
        matmul(tmp.as_mut(), Accum::Replace, vk.transpose(), z.as_ref(), 1.0, par(n));
        matmul(z.as_mut(), Accum::Add, vk, tmp.as_ref(), -1.0, par(n));
        if pass == 0 {
            h.copy_from(&tmp);
        } else {
            h += &tmp;
        }
    }
    let mut r = Mat::<f64>::zeros(bs, bs);
    for c in 0..bs {
        let orig = dot(z.col_as_slice(c), z.col_as_slice(c)).sqrt();
        for _ in 0..2 {
            for p in 0..c {
                let (zp, zc) = two_cols(z, p, c);
                let d = dot(zp, zc);
                zc.iter_mut().zip(zp).for_each(|(x, y)| *x -= d * y);
                r[(p, c)] += d;
            }
        }
        let nrm = dot(z.col_as_slice(c), z.col_as_slice(c)).sqrt();
        if nrm > 1e-12 * orig.max(f64::MIN_POSITIVE) && nrm > 0.0 {
            r[(c, c)] = nrm;
            z.col_as_slice_mut(c).iter_mut().for_each(|x| *x /= nrm);
            continue;
        }
        // Breakdown: an invariant subspace was found. Continue with a random
        // direction orthogonal to everything so far; it couples with nothing.
        for p in 0..c {
            r[(p, c)] = 0.0;
        }
        let fresh: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        z.col_as_slice_mut(c).copy_from_slice(&fresh);
        for _ in 0..2 {
            let mut coef = Mat::<f64>::zeros(k, 1);
            matmul(coef.as_mut(), Accum::Replace, vk.transpose(), z.as_ref().subcols(c, 1), 1.0, Par::Seq);
            matmul(z.as_mut().subcols_mut(c, 1), Accum::Add, vk, coef.as_ref(), -1.0, Par::Seq);
            for p in 0..c {
                let (zp, zc) = two_cols(z, p, c);
                let d = dot(zp, zc);
                zc.iter_mut().zip(zp).for_each(|(x, y)| *x -= d * y);
            }
        }
        let nrm = dot(z.col_as_slice(c), z.col_as_slice(c)).sqrt();
        z.col_as_slice_mut(c).iter_mut().for_each(|x| *x /= nrm);
    }
    (h, r)
}

fn two_cols(z: &mut Mat<f64>, p: usize, c: usize) -> (&[f64], &mut [f64]) {
    debug_assert!(p < c);
    let n = z.nrows();
    let (left, right) = z.as_mut().split_at_col_mut(c);
    let zp = left.col(p).try_as_col_major().unwrap().as_slice();
    let zc = right.col_mut(0).try_as_col_major_mut().unwrap().as_slice_mut();
    debug_assert_eq!(zc.len(), n);
    (zp, zc)
}

/// Largest eigenpairs of the SPD operator `op` (applied in place to a block).
fn krylov_schur(
    n: usize,
    op: &dyn Fn(MatMut<'_, f64>),
    nev: usize,
    opts: &EigOptions,
) -> Result<(Vec<f64>, Mat<f64>)> {
    let bs = opts.block;
    let m_max = (nev + nev.max(8 * bs)).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v = Mat::<f64>::zeros(n, m_max);
    let mut h = Mat::<f64>::zeros(m_max, m_max);

    let mut z = Mat::<f64>::from_fn(n, bs, |_, _| rng.gen::<f64>() - 0.5);
    orthonormalize(v.as_ref(), 0, &mut z, &mut rng);
    v.as_mut().subcols_mut(0, bs).copy_from(&z);
    let mut cur = bs;

    for restart in 0..=opts.max_restarts {
        while cur + bs <= m_max {
            let b0 = cur - bs;
            z.copy_from(v.as_ref().subcols(b0, bs));
            let t0 = std::time::Instant::now();
            op(z.as_mut());
            let t1 = std::time::Instant::now();
            let (coef, r) = orthonormalize(v.as_ref(), cur, &mut z, &mut rng);
            log::trace!("op {:.2?} orth {:.2?}", t1 - t0, t1.elapsed());
            h.as_mut().submatrix_mut(0, b0, cur, bs).copy_from(&coef);
            h.as_mut().submatrix_mut(b0, 0, bs, b0).copy_from(coef.as_ref().subrows(0, b0).transpose());
            h.as_mut().submatrix_mut(cur, b0, bs, bs).copy_from(&r);
            v.as_mut().subcols_mut(cur, bs).copy_from(&z);
            cur += bs;
        }
        // Rayleigh-Ritz on the columns whose images are known.
        let k = cur - bs;
        let mut hk = h.as_ref().submatrix(0, 0, k, k).to_owned();
        for i in 0..k {
            for j in 0..i {
                let s = 0.5 * (hk[(i, j)] + hk[(j, i)]);
                hk[(i, j)] = s;
                hk[(j, i)] = s;
            }
        }
        let e = hk
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Aperture(format!("projected eigenproblem: {e:?}")))?;
        // Descending order.
        let theta: Vec<f64> = (0..k).rev().map(|i| e.S().column_vector()[i]).collect();
        let y = Mat::<f64>::from_fn(k, k, |i, j| e.U()[(i, k - 1 - j)]);
        let b_last = h.as_ref().submatrix(k, k - bs, bs, bs).to_owned();
        let mut res = Mat::<f64>::zeros(bs, k);
        matmul(res.as_mut(), Accum::Replace, b_last.as_ref(), y.as_ref().subrows(k - bs, bs), 1.0, Par::Seq);
        let nconv = (0..k)
            .take_while(|&i| {
                let r = (0..bs).map(|q| res[(q, i)] * res[(q, i)]).sum::<f64>().sqrt();
                r <= opts.tol * theta[i].abs()
            })
            .count();
        log::debug!("krylov-schur pass {restart}: basis {k}, converged {nconv}/{nev}");
        if nconv >= nev {
            let x = ritz_vectors(v.as_ref().subcols(0, k), y.as_ref().subcols(0, nev));
            return Ok((theta[..nev].to_vec(), x));
        }
        if restart == opts.max_restarts {
            break;
        }
        // Thick restart on the leading Ritz vectors.
        let p = (nev + (k - nev) / 4).max(nconv + 1).min(k - bs).max(1);
        let t0 = std::time::Instant::now();
        let keep = ritz_vectors(v.as_ref().subcols(0, k), y.as_ref().subcols(0, p));
        log::trace!("restart vectors {:.2?}", t0.elapsed());
        v.as_mut().subcols_mut(0, p).copy_from(&keep);
        drop(keep);
        let last = v.as_ref().subcols(k, bs).to_owned();
        v.as_mut().subcols_mut(p, bs).copy_from(&last);
        h.fill(0.0);
        for i in 0..p {
            h[(i, i)] = theta[i];
        }
        let mut arrow = Mat::<f64>::zeros(bs, p);
        matmul(arrow.as_mut(), Accum::Replace, b_last.as_ref(), y.as_ref().submatrix(k - bs, 0, bs, p), 1.0, Par::Seq);
        h.as_mut().submatrix_mut(p, 0, bs, p).copy_from(&arrow);
        h.as_mut().submatrix_mut(0, p, p, bs).copy_from(arrow.transpose());
        cur = p + bs;
    }
    Err(Error::Aperture(format!(
        "eigensolver did not converge {nev} eigenpairs in {} restarts",
        opts.max_restarts
    )))
}

/// Thread-parallel gemm for tall operands.
fn par(rows: usize) -> Par {
    if rows >= 50_000 {
        Par::rayon(0)
    } else {
        Par::Seq
    }
}

/// `V Y` computed in row chunks to bound temporaries.
fn ritz_vectors(v: MatRef<'_, f64>, y: MatRef<'_, f64>) -> Mat<f64> {
    let n = v.nrows();
    let mut out = Mat::<f64>::zeros(n, y.ncols());
    let chunk = 8192;
    let mut r0 = 0;
    while r0 < n {
        let rows = chunk.min(n - r0);
        matmul(
            out.as_mut().subrows_mut(r0, rows),
            Accum::Replace,
            v.subrows(r0, rows),
            y,
            1.0,
            par(n),
        );
        r0 += rows;
    }
    out
}
