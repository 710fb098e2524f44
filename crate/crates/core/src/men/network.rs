//! Generalized impedance matrices, port reduction, S-parameters and the
//! cascade of stacked discontinuities.

use crate::error::{Error, Result};
use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Solve;
use faer::{c64, Accum, Mat, MatRef, Par};

/// Impedance matrix over `n_ports` lumped ports followed by accessible-mode
/// terminals.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedZ {
    pub z: Mat<c64>,
    pub n_ports: usize,
}

impl GeneralizedZ {
    pub fn n_accessible(&self) -> usize {
        self.z.nrows() - self.n_ports
    }

    /// Port block, i.e. every accessible terminal left open.
    pub fn ports(&self) -> Mat<c64> {
        self.z.as_ref().submatrix(0, 0, self.n_ports, self.n_ports).to_owned()
    }
}

/// `Z = R^T alpha`: entry `(p, q)` is `sum_k alpha[k][q] R[k][p]`.
pub fn impedance_matrix(alpha: &Mat<c64>, rhs: &Mat<c64>, n_ports: usize) -> GeneralizedZ {
    let k = rhs.ncols();
    let mut z = Mat::<c64>::zeros(k, k);
    matmul(z.as_mut(), Accum::Replace, rhs.transpose(), alpha.as_ref(), c64::new(1.0, 0.0), Par::Seq);
    GeneralizedZ { z, n_ports }
}

fn finite(m: &Mat<c64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].re.is_finite() && m[(i, j)].im.is_finite()))
}

fn solve_checked(a: MatRef<'_, c64>, b: MatRef<'_, c64>, what: &str) -> Result<Mat<c64>> {
    let x = a.partial_piv_lu().solve(b);
    if !finite(&x) {
        return Err(Error::numerical(format!("singular {what}")));
    }
    // Reject exactly singular pivots that still produced finite garbage.
    let mut r = b.to_owned();
    matmul(r.as_mut(), Accum::Add, a, x.as_ref(), c64::new(-1.0, 0.0), Par::Seq);
    let rn: f64 = (0..r.ncols()).flat_map(|j| (0..r.nrows()).map(move |i| (i, j))).map(|(i, j)| r[(i, j)].norm_sqr()).sum();
    let bn: f64 = (0..b.ncols()).flat_map(|j| (0..b.nrows()).map(move |i| (i, j))).map(|(i, j)| b[(i, j)].norm_sqr()).sum();
    if rn.sqrt() > 1e-6 * bn.sqrt().max(f64::MIN_POSITIVE) {
        return Err(Error::numerical(format!("singular {what}")));
    }
    Ok(x)
}

/// Terminates every accessible terminal with its load admittance:
/// `Z_PP - Z_PA (Z_AA + diag(1/Y))^-1 Z_AP`.
pub fn reduce_to_ports(z: &GeneralizedZ, loads: &[c64]) -> Result<Mat<c64>> {
    let (p, n) = (z.n_ports, z.n_accessible());
    if loads.len() != n {
        return Err(Error::numerical(format!("{} loads for {n} accessible terminals", loads.len())));
    }
    if n == 0 {
        return Ok(z.ports());
    }
    let mut k = z.z.as_ref().submatrix(p, p, n, n).to_owned();
    for (i, y) in loads.iter().enumerate() {
        if y.norm() == 0.0 {
            return Err(Error::numerical("zero load admittance on an accessible terminal"));
        }
        k[(i, i)] += c64::new(1.0, 0.0) / y;
    }
    let zap = z.z.as_ref().submatrix(p, 0, n, p);
    let x = solve_checked(k.as_ref(), zap, "accessible-mode reduction")?;
    let mut out = z.ports();
    matmul(out.as_mut(), Accum::Add, z.z.as_ref().submatrix(0, p, p, n), x.as_ref(), c64::new(-1.0, 0.0), Par::Seq);
    Ok(out)
}

/// `S = (Z - Z0 I)(Z + Z0 I)^-1`.
pub fn z_to_s(z: &Mat<c64>, z_ref: f64) -> Result<Mat<c64>> {
    let p = z.nrows();
    if z.ncols() != p {
        return Err(Error::numerical("port impedance matrix must be square"));
    }
    let shift = |s: f64| {
        let mut m = z.clone();
        for i in 0..p {
            m[(i, i)] += c64::new(s * z_ref, 0.0);
        }
        m
    };
    let (plus, minus) = (shift(1.0), shift(-1.0));
    // S^T = (Z + Z0)^-T (Z - Z0)^T; solve against the transposes so the
    // general (non-symmetric) case is also right.
    let st = solve_checked(plus.transpose(), minus.transpose(), "Z + Z0 I")?;
    Ok(st.transpose().to_owned())
}

/// Uniform line section joining the accessible modes of neighbouring
/// discontinuities.
#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub length: f64,
    pub gamma: Vec<c64>,
    pub yc: Vec<c64>,
}

impl Section {
    /// Two-port-per-mode impedance matrix ordered `[far terminals, near
    /// terminals]`.
    fn z(&self) -> Result<Mat<c64>> {
        let n = self.gamma.len();
        let mut z = Mat::<c64>::zeros(2 * n, 2 * n);
        let one = c64::new(1.0, 0.0);
        for i in 0..n {
            let e = (-self.gamma[i] * self.length).exp();
            let d = one - e * e;
            if d.norm() < 1e-14 || self.yc[i].norm() == 0.0 {
                return Err(Error::numerical("line section at resonance or with zero admittance"));
            }
            let zs = (one + e * e) / d / self.yc[i];
            let zm = e * 2.0 / d / self.yc[i];
            z[(i, i)] = zs;
            z[(n + i, n + i)] = zs;
            z[(i, n + i)] = zm;
            z[(n + i, i)] = zm;
        }
        Ok(z)
    }
}

/// Parallel connection of two networks at `nodes` shared terminal pairs.
///
/// Each matrix lists its own external terminals first and the shared node
/// terminals last. The result lists `a`'s externals, `b`'s externals and the
/// node terminals, which remain available for current injection.
fn join(za: &Mat<c64>, zb: &Mat<c64>, nodes: usize) -> Result<Mat<c64>> {
    let n = nodes;
    let (ea, eb) = (za.nrows() - n, zb.nrows() - n);
    let blk = |m: &Mat<c64>, r0: usize, c0: usize, r: usize, c: usize| m.as_ref().submatrix(r0, c0, r, c).to_owned();
    let (aee, aen, ane, ann) = (blk(za, 0, 0, ea, ea), blk(za, 0, ea, ea, n), blk(za, ea, 0, n, ea), blk(za, ea, ea, n, n));
    let (bee, ben, bne, bnn) = (blk(zb, 0, 0, eb, eb), blk(zb, 0, eb, eb, n), blk(zb, eb, 0, n, eb), blk(zb, eb, eb, n, n));
    let k = &ann + &bnn;
    let t = ea + eb + n;
    // G maps inputs (Ia, Ib, J) to the current into `a` at the nodes.
    let mut rhs = Mat::<c64>::zeros(n, t);
    rhs.as_mut().submatrix_mut(0, 0, n, ea).copy_from(-&ane);
    rhs.as_mut().submatrix_mut(0, ea, n, eb).copy_from(&bne);
    rhs.as_mut().submatrix_mut(0, ea + eb, n, n).copy_from(&bnn);
    let g = solve_checked(k.as_ref(), rhs.as_ref(), "node impedance sum")?;
    let mut h = -&g;
    for i in 0..n {
        h[(i, ea + eb + i)] += c64::new(1.0, 0.0);
    }
    let one = c64::new(1.0, 0.0);
    let mut out = Mat::<c64>::zeros(t, t);
    out.as_mut().submatrix_mut(0, 0, ea, ea).copy_from(&aee);
    matmul(out.as_mut().subrows_mut(0, ea), Accum::Add, aen.as_ref(), g.as_ref(), one, Par::Seq);
    out.as_mut().submatrix_mut(ea, ea, eb, eb).copy_from(&bee);
    matmul(out.as_mut().subrows_mut(ea, eb), Accum::Add, ben.as_ref(), h.as_ref(), one, Par::Seq);
    out.as_mut().submatrix_mut(ea + eb, 0, n, ea).copy_from(&ane);
    matmul(out.as_mut().subrows_mut(ea + eb, n), Accum::Add, ann.as_ref(), g.as_ref(), one, Par::Seq);
    Ok(out)
}

fn pick(z: &Mat<c64>, idx: &[usize]) -> Mat<c64> {
    Mat::from_fn(idx.len(), idx.len(), |i, j| z[(idx[i], idx[j])])
}

/// Joins stacked discontinuities through line sections of the intermediate
/// layers.
///
/// The result lists every discontinuity's ports in order, then the
/// accessible terminals of the first and of the last plane, to be loaded by
/// the outer media. With a single discontinuity and no sections the input is
/// returned unchanged. A zero-length section merges the two planes.
pub fn cascade(discs: &[GeneralizedZ], sections: &[Section]) -> Result<GeneralizedZ> {
    let Some(first) = discs.first() else {
        return Err(Error::numerical("cascade needs at least one discontinuity"));
    };
    if sections.len() + 1 != discs.len() {
        return Err(Error::numerical(format!(
            "{} discontinuities need {} sections, got {}",
            discs.len(),
            discs.len() - 1,
            sections.len()
        )));
    }
    if discs.len() == 1 {
        return Ok(first.clone());
    }
    let n = first.n_accessible();
    for (i, d) in discs.iter().enumerate() {
        if d.n_accessible() != n {
            return Err(Error::numerical(format!(
                "discontinuity {i} has {} accessible modes, expected {n}",
                d.n_accessible()
            )));
        }
    }
    for (i, s) in sections.iter().enumerate() {
        if s.gamma.len() != n || s.yc.len() != n || !(s.length >= 0.0) {
            return Err(Error::numerical(format!("section {i} does not match {n} accessible modes")));
        }
    }
    // Current network: [ports so far, first-plane terminals, current node].
    let p0 = first.n_ports;
    let mut cur = {
        let mut idx: Vec<usize> = (0..p0).collect();
        idx.extend(p0..p0 + n);
        idx.extend(p0..p0 + n);
        pick(&first.z, &idx)
    };
    let mut ports = p0;
    for (d, s) in discs[1..].iter().zip(sections) {
        if s.length > 0.0 {
            // Attach the line at the current node, then drop that node.
            let j = join(&cur, &s.z()?, n)?;
            let keep: Vec<usize> = (0..j.nrows() - n).collect();
            cur = pick(&j, &keep);
        }
        // `cur` now ends with the node where `d` sits.
        let pd = d.n_ports;
        let j = join(&cur, &d.z, n)?;
        // j = [ports, first, (node), ports_d, node]; reorder into
        // [ports, ports_d, first, node].
        let e = j.nrows() - n - pd;
        let mut idx: Vec<usize> = (0..ports).collect();
        idx.extend(e..e + pd);
        idx.extend(ports..ports + n);
        idx.extend(e + pd..e + pd + n);
        cur = pick(&j, &idx);
        ports += pd;
    }
    Ok(GeneralizedZ { z: cur, n_ports: ports })
}
