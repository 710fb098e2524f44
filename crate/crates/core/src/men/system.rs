//! Per-frequency moment system and its dense solve.

use super::kernel::{weighted_gram, KernelSplit};
use crate::aperture::CouplingMatrix;
use crate::boxmodes::BoxMode;
use crate::error::{Error, Result};
use crate::media::{total_admittance, AsymptoticCoeffs, LayerStack};
use crate::scalar::{EPS0, MU0};
use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Solve;
use faer::{c64, Accum, Mat, Par};
use std::f64::consts::PI;

/// Condition estimates above this flag the point as ill-conditioned.
pub const COND_LIMIT: f64 = 1e12;

/// `A alpha = rhs` at one frequency. Right-hand sides are the port
/// couplings followed by the accessible-mode columns of `C`.
#[derive(Clone, Debug)]
pub struct MomSystem {
    pub a: Mat<c64>,
    pub rhs: Mat<c64>,
    pub n_ports: usize,
    pub freq: f64,
    /// A dynamic kernel term sits near a modal resonance.
    pub near_resonance: bool,
}

/// Solution columns with diagnostics.
#[derive(Clone, Debug)]
pub struct Solved {
    pub alpha: Mat<c64>,
    /// `||A alpha - rhs||_F / ||rhs||_F` after refinement.
    pub residual: f64,
    /// 1-norm condition estimate of `A`.
    pub cond_estimate: f64,
    pub ill_conditioned: bool,
}

fn to_complex(m: faer::MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

/// Builds `A = S1/(j w mu0) + j w eps0 S2 + j w^3 mu0 eps0^2 S3 + j w^5 mu0^2 eps0^3 S4 + sum_dyn (Y^T - Y_inf) C_m C_m^T`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_system(
    split: &KernelSplit,
    c: &CouplingMatrix,
    port_cols: &Mat<f64>,
    box_modes: &[BoxMode<f64>],
    coeffs: &[AsymptoticCoeffs<f64>],
    stack: &LayerStack<f64>,
    f: f64,
) -> Result<MomSystem> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::Config(format!("frequency must be positive, got {f}")));
    }
    let nb = c.nb();
    let n_acc = split.n_accessible;
    let w = 2.0 * PI * f;
    let mut near = false;
    let dyn_range = n_acc..split.m_dynamic.max(n_acc);
    let d: Vec<c64> = dyn_range
        .clone()
        .map(|m| {
            let y = total_admittance(&box_modes[m], stack, f);
            near |= y.near_resonance;
            y.y - coeffs[m].eval(f)
        })
        .collect();
    let off = dyn_range.start;
    let re = weighted_gram(&c.c, dyn_range.clone(), |m| d[m - off].re);
    let im = weighted_gram(&c.c, dyn_range, |m| d[m - off].im);
    let (ks1, ks2, ks3) = (-1.0 / (w * MU0), w * EPS0, w * w * w * MU0 * EPS0 * EPS0);
    let ks4 = ks3 * w * w * MU0 * EPS0;
    let a = Mat::from_fn(nb, nb, |i, j| {
        let s = ks1 * split.s1[(i, j)] + ks2 * split.s2[(i, j)] + ks3 * split.s3[(i, j)] + ks4 * split.s4[(i, j)];
        c64::new(re[(i, j)], im[(i, j)] + s)
    });
    let p = port_cols.ncols();
    let mut rhs = Mat::<c64>::zeros(nb, p + n_acc);
    rhs.as_mut().subcols_mut(0, p).copy_from(to_complex(port_cols.as_ref()));
    rhs.as_mut().subcols_mut(p, n_acc).copy_from(to_complex(c.c.as_ref().subcols(0, n_acc)));
    Ok(MomSystem { a, rhs, n_ports: p, freq: f, near_resonance: near })
}

fn fro(m: faer::MatRef<'_, c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

fn residual(a: &Mat<c64>, x: &Mat<c64>, rhs: &Mat<c64>) -> Mat<c64> {
    let mut r = rhs.clone();
    matmul(r.as_mut(), Accum::Add, a.as_ref(), x.as_ref(), c64::new(-1.0, 0.0), Par::Seq);
    r
}

/// Hager-Higham estimate of `||A^-1||_1`, using `A^T = A` for the adjoint
/// solves.
fn inverse_norm1(solve: &dyn Fn(&Mat<c64>) -> Mat<c64>, n: usize) -> f64 {
    let mut x = Mat::<c64>::from_fn(n, 1, |_, _| c64::new(1.0 / n as f64, 0.0));
    let mut est = 0.0;
    for it in 0..5 {
        let y = solve(&x);
        let e: f64 = (0..n).map(|i| y[(i, 0)].norm()).sum();
        if it > 0 && e <= est {
            break;
        }
        est = e;
        let xi = Mat::<c64>::from_fn(n, 1, |i, _| {
            let v = y[(i, 0)];
            if v.norm() > 0.0 { (v / v.norm()).conj() } else { c64::new(1.0, 0.0) }
        });
        let z = solve(&xi);
        let z: Vec<c64> = (0..n).map(|i| z[(i, 0)].conj()).collect();
        let (jmax, zmax) = z.iter().enumerate().fold((0, 0.0), |b, (i, v)| if v.norm() > b.1 { (i, v.norm()) } else { b });
        let ztx: f64 = (0..n).map(|i| (z[i].conj() * x[(i, 0)]).re).sum();
        if zmax <= ztx {
            break;
        }
        x = Mat::zeros(n, 1);
        x[(jmax, 0)] = c64::new(1.0, 0.0);
    }
    est
}

/// Dense LU solve with up to three refinement steps.
pub fn solve(sys: &MomSystem) -> Result<Solved> {
    let n = sys.a.nrows();
    let lu = sys.a.partial_piv_lu();
    let sol = |b: &Mat<c64>| -> Mat<c64> { lu.solve(b) };
    let mut x = sol(&sys.rhs);
    let finite = |m: &Mat<c64>| (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].re.is_finite() && m[(i, j)].im.is_finite()));
    if !finite(&x) {
        return Err(Error::Numerical { freq_hz: Some(sys.freq), msg: "singular moment matrix".into() });
    }
    let bn = fro(sys.rhs.as_ref());
    let mut rel = 0.0;
    for _ in 0..4 {
        let r = residual(&sys.a, &x, &sys.rhs);
        rel = if bn > 0.0 { fro(r.as_ref()) / bn } else { 0.0 };
        if rel < 1e-10 {
            break;
        }
        x += sol(&r);
    }
    let anorm = (0..n).map(|j| (0..n).map(|i| sys.a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max);
    let cond = anorm * inverse_norm1(&sol, n);
    let ill = !(cond < COND_LIMIT) || !(rel < 1e-10);
    if ill {
        log::warn!(
            "moment matrix at {:.6} GHz: condition estimate {cond:.3e}, residual {rel:.3e}",
            sys.freq * 1e-9
        );
    }
    Ok(Solved { alpha: x, residual: rel, cond_estimate: cond, ill_conditioned: ill })
}
