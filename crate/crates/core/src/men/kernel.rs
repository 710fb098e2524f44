//! Frequency-independent part of the moment-method kernel.

use crate::aperture::CouplingMatrix;
use crate::error::{Error, Result};
use crate::media::AsymptoticCoeffs;
use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};

/// Static sums over the localized modes `n_accessible..m_total`:
/// `Sk = sum ck C_m C_m^T` for the four asymptotic coefficients.
#[derive(Clone, Debug)]
pub struct KernelSplit {
    pub s1: Mat<f64>,
    pub s2: Mat<f64>,
    pub s3: Mat<f64>,
    pub s4: Mat<f64>,
    pub n_accessible: usize,
    /// Box modes in the kernel (accessible ones included in the count).
    pub m_total: usize,
    /// Leading box modes corrected with their exact admittance.
    pub m_dynamic: usize,
}

/// `sum_m w_m C_m C_m^T` over the columns `range` of `c`.
pub(crate) fn weighted_gram(c: &Mat<f64>, range: std::ops::Range<usize>, w: impl Fn(usize) -> f64) -> Mat<f64> {
    let nb = c.nrows();
    let cols = range.len();
    let sub = c.as_ref().subcols(range.start, cols);
    let scaled = Mat::<f64>::from_fn(nb, cols, |i, k| sub[(i, k)] * w(range.start + k));
    let mut out = Mat::<f64>::zeros(nb, nb);
    matmul(out.as_mut(), Accum::Replace, scaled.as_ref(), sub.transpose(), 1.0, Par::Seq);
    // Exact symmetry regardless of gemm blocking.
    for i in 0..nb {
        for j in 0..i {
            let s = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

/// Sums the asymptotic kernel once per geometry.
///
/// `coeffs[m]` belongs to box mode `m`; modes `n_accessible..m_total` are
/// summed and `m_dynamic` is recorded for the per-frequency correction.
pub fn assemble_static(
    c: &CouplingMatrix,
    coeffs: &[AsymptoticCoeffs<f64>],
    n_accessible: usize,
    m_total: usize,
    m_dynamic: usize,
) -> Result<KernelSplit> {
    if m_total > c.nk() || m_total > coeffs.len() {
        return Err(Error::Config(format!(
            "kernel of {m_total} modes exceeds the {} available box modes",
            c.nk().min(coeffs.len())
        )));
    }
    if n_accessible >= m_total {
        return Err(Error::Config(format!(
            "{n_accessible} accessible modes leave no localized modes among {m_total}"
        )));
    }
    if m_dynamic > m_total {
        return Err(Error::Config(format!("{m_dynamic} dynamic terms exceed the {m_total}-mode kernel")));
    }
    let s1 = weighted_gram(&c.c, n_accessible..m_total, |m| coeffs[m].c1);
    let s2 = weighted_gram(&c.c, n_accessible..m_total, |m| coeffs[m].c2);
    let s3 = weighted_gram(&c.c, n_accessible..m_total, |m| coeffs[m].c3);
    let s4 = weighted_gram(&c.c, n_accessible..m_total, |m| coeffs[m].c4);
    Ok(KernelSplit { s1, s2, s3, s4, n_accessible, m_total, m_dynamic })
}
