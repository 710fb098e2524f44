//! Aperture modes and their expansion onto the box modes.
//!
//! The aperture's TE modes come from the Neumann and its TM modes from the
//! Dirichlet Laplacian on the raster, each solved on a staggered grid so
//! that the vector fields of both families live on the same cell faces.
//! Metal pieces that float inside the aperture add one static (kc = 0)
//! TM-type field each, without which a strip could hold no voltage.
//! The coupling matrix `C[i][m]` is the face-weighted inner product of
//! aperture mode `i` with box mode `m`.

mod analytic;
mod cache;
pub(crate) mod eigen;
pub(crate) mod grid;

pub use analytic::{analytic_rect_aperture, rect_mode_field};
pub use cache::{cache_key, load_cached, store_cached};

use crate::boxmodes::{enumerate_modes, BoxMode, Family};
use crate::error::{Error, Result};
use crate::geometry::RegionMask;
use eigen::EigOptions;
use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Solve;
use faer::sparse::SparseColMat;
use faer::{Accum, Mat, Par, Side};
use grid::{Dofs, Grid, NONE};
use std::f64::consts::PI;

/// Numerical controls of the aperture precompute.
#[derive(Clone, Debug, PartialEq)]
pub struct ApertureOptions {
    /// Block size of the Lanczos iteration.
    pub block: usize,
    /// Relative Ritz residual for convergence.
    pub tol: f64,
    /// Eigenproblems up to this size are solved densely.
    pub dense_max: usize,
    pub seed: u64,
    /// Minimum run of aperture cells across any feature.
    pub min_feature_cells: usize,
    /// Lower Parseval bound per coupling row.
    pub parseval_min: f64,
    /// Keep grid potentials in the returned modes.
    pub keep_potentials: bool,
}

impl Default for ApertureOptions {
    fn default() -> Self {
        let e = EigOptions::default();
        Self {
            block: e.block,
            tol: e.tol,
            dense_max: e.dense_max,
            seed: e.seed,
            min_feature_cells: 4,
            parseval_min: 0.98,
            keep_potentials: false,
        }
    }
}

impl ApertureOptions {
    fn eig(&self) -> EigOptions {
        EigOptions {
            block: self.block,
            tol: self.tol,
            dense_max: self.dense_max,
            seed: self.seed,
            ..EigOptions::default()
        }
    }
}

/// One aperture mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ApertureMode<T = f64> {
    pub family: Family,
    pub kc: T,
    /// Potential samples: cell centres (`j * nx + i`) for TE, cell corners
    /// (`j * (nx + 1) + i`) for TM. Empty once dropped.
    pub potential: Vec<T>,
    /// Box-mode expansion coefficients, when computed.
    pub coeff_row: Vec<T>,
}

/// Aperture modes together with the grid they were computed on.
#[derive(Clone, Debug)]
pub struct ApertureModes {
    grid: Grid,
    pub modes: Vec<ApertureMode>,
}

impl ApertureModes {
    pub fn dims(&self) -> (usize, usize, f64, f64) {
        (self.grid.nx, self.grid.ny, self.grid.hx, self.grid.hy)
    }

    /// Face samples `(hx on vertical faces, hy on horizontal faces)` of
    /// mode `k`; see the module docs for the layout.
    pub fn face_fields(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let md = &self.modes[k];
        let d = self.grid.all_sites(md.family);
        let mut fx = vec![0.0; self.grid.n_vfaces()];
        let mut fy = vec![0.0; self.grid.n_hfaces()];
        self.grid.face_fields(&d, &md.potential, md.kc, &mut fx, &mut fy);
        (fx, fy)
    }
}

/// `N_b x N_k` overlaps of aperture modes with box modes.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix {
    pub c: Mat<f64>,
}

impl CouplingMatrix {
    pub fn nb(&self) -> usize {
        self.c.nrows()
    }

    pub fn nk(&self) -> usize {
        self.c.ncols()
    }

    pub fn row_energy(&self, i: usize) -> f64 {
        (0..self.nk()).map(|m| self.c[(i, m)].powi(2)).sum()
    }

    /// Every row's energy must lie in `[min, 1]`.
    pub fn check_parseval(&self, min: f64) -> Result<()> {
        for i in 0..self.nb() {
            let s = self.row_energy(i);
            if !(s >= min && s <= 1.0 + 1e-8) {
                return Err(Error::Parseval { row: i, sum: s, min });
            }
        }
        Ok(())
    }
}

/// Modes and coupling produced by the precompute.
#[derive(Clone, Debug, PartialEq)]
pub struct ApertureData {
    pub families: Vec<Family>,
    pub kc: Vec<f64>,
    pub coupling: CouplingMatrix,
}

fn grid_of(mask: &RegionMask<f64>) -> Grid {
    Grid { nx: mask.nx, ny: mask.ny, hx: mask.hx, hy: mask.hy, cells: mask.cells().to_vec() }
}

fn check_features(g: &Grid, min_cells: usize) -> Result<()> {
    if g.cells.iter().all(|c| !c) {
        return Err(Error::Aperture("aperture is empty".into()));
    }
    if let Some((s, h, v)) = g.thin_feature(min_cells) {
        return Err(Error::Aperture(format!(
            "insufficient grid resolution: aperture cell ({}, {}) spans {h} x {v} cells, need {min_cells}",
            s % g.nx,
            s / g.nx
        )));
    }
    Ok(())
}

struct FamilyModes {
    family: Family,
    dofs: Dofs,
    kc: Vec<f64>,
    /// Unknowns scaled to unit power, one column per mode.
    vecs: Mat<f64>,
    /// All non-trivial modes of the discrete problem were requested.
    exhausted: bool,
}

fn solve_family(g: &Grid, family: Family, want: usize, opts: &ApertureOptions) -> Result<FamilyModes> {
    let dofs = g.dofs(family);
    let n = dofs.len();
    let lref = (PI / (g.nx as f64 * g.hx).max(g.ny as f64 * g.hy)).powi(2);
    let (shift, zeros) = match family {
        Family::TE => (0.5 * lref, g.components()),
        Family::TM => (0.0, 0),
    };
    let nev = (want + zeros).min(n);
    let lap = g.laplacian(&dofs, shift);
    let ep = eigen::smallest(n, &lap, shift, nev, &opts.eig())?;
    let keep: Vec<usize> = (0..ep.values.len()).filter(|&k| ep.values[k] > 1e-8 * lref).collect();
    let scale = 1.0 / (g.hx * g.hy).sqrt();
    let kc = keep.iter().map(|&k| ep.values[k].sqrt()).collect();
    let vecs = Mat::from_fn(n, keep.len(), |r, c| ep.vectors[(r, keep[c])] * scale);
    log::debug!("{} aperture modes: {} of {} unknowns", family.as_str(), keep.len(), n);
    let fm = FamilyModes { family, dofs, kc, vecs, exhausted: nev == n };
    match family {
        Family::TE => Ok(fm),
        Family::TM => with_static_modes(g, fm),
    }
}

/// Prepends the kc = 0 fields of floating conductors to the TM family.
///
/// Each metal piece not tied to the wall adds one curl- and divergence-free
/// field `z x grad V`, with `V` harmonic in the aperture, one on that piece
/// and zero on the others and the wall. These carry the quasi-static voltage
/// of a strip and lie outside both eigenvalue families.
fn with_static_modes(g: &Grid, fm: FamilyModes) -> Result<FamilyModes> {
    let (label, nh) = g.holes();
    if nh == 0 {
        return Ok(fm);
    }
    let d = &fm.dofs;
    let n = d.len();
    let w = g.nx + 1;
    let (cx, cy) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
    let mut rhs = Mat::<f64>::zeros(n, nh);
    for (k, &s) in d.sites.iter().enumerate() {
        for (nb, c) in [(s - 1, cx), (s + 1, cx), (s - w, cy), (s + w, cy)] {
            if label[nb] != NONE {
                rhs[(k, label[nb])] += c;
            }
        }
    }
    if n > 0 {
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &g.laplacian(d, 0.0))
            .map_err(|e| Error::Aperture(format!("sparse assembly: {e:?}")))?;
        let llt = a
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Aperture(format!("Cholesky factorization failed: {e:?}")))?;
        llt.solve_in_place(rhs.as_mut());
    }

    // Extended unknowns: free corners, then corners on floating metal.
    let mut index = d.index.clone();
    let mut sites = d.sites.clone();
    for (s, &l) in label.iter().enumerate() {
        if l != NONE {
            index[s] = sites.len();
            sites.push(s);
        }
    }
    let ne = sites.len();
    let ext = Dofs { family: Family::TM, index, sites };
    let mut pot = Mat::<f64>::from_fn(ne, nh, |r, h| {
        if r < n {
            rhs[(r, h)]
        } else {
            (label[ext.sites[r]] == h) as u8 as f64
        }
    });

    // Orthonormalize under the aperture power product.
    let mut fields = Vec::with_capacity(nh);
    let mut fx = vec![0.0; g.n_vfaces()];
    let mut fy = vec![0.0; g.n_hfaces()];
    for h in 0..nh {
        g.face_fields(&ext, pot.col_as_slice(h), 0.0, &mut fx, &mut fy);
        fields.push([fx.clone(), fy.clone()].concat());
    }
    let gram = Mat::<f64>::from_fn(nh, nh, |a, b| {
        g.hx * g.hy * fields[a].iter().zip(&fields[b]).map(|(x, y)| x * y).sum::<f64>()
    });
    let l = gram
        .llt(Side::Lower)
        .map_err(|e| Error::Aperture(format!("static conductor fields are dependent: {e:?}")))?;
    let mut linv = Mat::<f64>::identity(nh, nh);
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l.L(), linv.as_mut(), Par::Seq);
    let old = pot.clone();
    matmul(pot.as_mut(), Accum::Replace, old.as_ref(), linv.transpose(), 1.0, Par::Seq);
    log::debug!("{nh} floating conductors, static fields added");

    let nm = fm.kc.len();
    let vecs = Mat::<f64>::from_fn(ne, nh + nm, |r, c| {
        if c < nh {
            pot[(r, c)]
        } else if r < n {
            fm.vecs[(r, c - nh)]
        } else {
            0.0
        }
    });
    let kc = std::iter::repeat_n(0.0, nh).chain(fm.kc.iter().copied()).collect();
    Ok(FamilyModes { family: Family::TM, dofs: ext, kc, vecs, exhausted: fm.exhausted })
}

/// Projects face fields onto the sampled box modes.
fn project(g: &Grid, fm: &FamilyModes, box_modes: &[BoxMode<f64>]) -> Result<Mat<f64>> {
    let (nx, ny) = (g.nx, g.ny);
    let pmax = box_modes.iter().map(|m| m.m as usize).max().unwrap_or(0);
    let qmax = box_modes.iter().map(|m| m.n as usize).max().unwrap_or(0);
    if pmax >= nx || qmax >= ny {
        return Err(Error::Aperture(format!(
            "grid {nx}x{ny} cannot resolve box mode indices up to ({pmax}, {qmax})"
        )));
    }
    let (np, nq) = (pmax + 1, qmax + 1);
    let sx = Mat::<f64>::from_fn(nx - 1, np, |i, p| (PI * (p * (i + 1)) as f64 / nx as f64).sin());
    let cy = Mat::<f64>::from_fn(ny, nq, |j, q| (PI * q as f64 * (j as f64 + 0.5) / ny as f64).cos());
    let cx = Mat::<f64>::from_fn(nx, np, |i, p| (PI * p as f64 * (i as f64 + 0.5) / nx as f64).cos());
    let sy = Mat::<f64>::from_fn(ny - 1, nq, |j, q| (PI * (q * (j + 1)) as f64 / ny as f64).sin());
    let bx = crate::geometry::ShieldBox { a: nx as f64 * g.hx, b: ny as f64 * g.hy };
    let amps: Vec<(f64, f64)> = box_modes.iter().map(|m| m.amplitudes(&bx)).collect();

    let nm = fm.kc.len();
    let mut c = Mat::<f64>::zeros(nm, box_modes.len());
    let chunk = 32usize;
    let mut fx = vec![0.0; g.n_vfaces()];
    let mut fy = vec![0.0; g.n_hfaces()];
    let mut k0 = 0;
    while k0 < nm {
        let b = chunk.min(nm - k0);
        let mut big_x = Mat::<f64>::zeros(b * (nx - 1), ny);
        let mut big_y = Mat::<f64>::zeros(b * nx, ny - 1);
        for k in 0..b {
            g.face_fields(&fm.dofs, fm.vecs.col_as_slice(k0 + k), fm.kc[k0 + k], &mut fx, &mut fy);
            for j in 0..ny {
                big_x.col_as_slice_mut(j)[k * (nx - 1)..(k + 1) * (nx - 1)]
                    .copy_from_slice(&fx[(nx - 1) * j..(nx - 1) * (j + 1)]);
            }
            for j in 0..ny - 1 {
                big_y.col_as_slice_mut(j)[k * nx..(k + 1) * nx].copy_from_slice(&fy[nx * j..nx * (j + 1)]);
            }
        }
        let mut tx = Mat::<f64>::zeros(b * (nx - 1), nq);
        matmul(tx.as_mut(), Accum::Replace, big_x.as_ref(), cy.as_ref(), 1.0, Par::Seq);
        drop(big_x);
        let mut ty = Mat::<f64>::zeros(b * nx, nq);
        matmul(ty.as_mut(), Accum::Replace, big_y.as_ref(), sy.as_ref(), 1.0, Par::Seq);
        drop(big_y);
        let mut px = Mat::<f64>::zeros(np, nq);
        let mut py = Mat::<f64>::zeros(np, nq);
        for k in 0..b {
            matmul(px.as_mut(), Accum::Replace, sx.transpose(), tx.as_ref().subrows(k * (nx - 1), nx - 1), 1.0, Par::Seq);
            matmul(py.as_mut(), Accum::Replace, cx.transpose(), ty.as_ref().subrows(k * nx, nx), 1.0, Par::Seq);
            for (m, md) in box_modes.iter().enumerate() {
                let (p, q) = (md.m as usize, md.n as usize);
                let (ax, ay) = amps[m];
                c[(k0 + k, m)] = g.hx * g.hy * (ax * px[(p, q)] + ay * py[(p, q)]);
            }
        }
        k0 += b;
    }
    Ok(c)
}

/// Rotates degenerate clusters onto their dominant box modes and fixes signs
/// so each row's largest entry is positive.
fn canonicalize(kc: &[f64], c: &mut Mat<f64>, mut vecs: Option<&mut Mat<f64>>) -> Result<()> {
    let n = kc.len();
    let nk = c.ncols();
    let mut s = 0;
    while s < n {
        let mut e = s + 1;
        while e < n && (kc[e] - kc[e - 1]).abs() <= 1e-9 * kc[e] {
            e += 1;
        }
        let k = e - s;
        if k > 1 && k <= nk {
            let mut energy: Vec<(f64, usize)> =
                (0..nk).map(|m| ((s..e).map(|r| c[(r, m)].powi(2)).sum(), m)).collect();
            energy.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut cols: Vec<usize> = energy[..k].iter().map(|x| x.1).collect();
            cols.sort_unstable();
            let m = Mat::<f64>::from_fn(k, k, |i, j| c[(s + i, cols[j])]);
            let svd = m.thin_svd().map_err(|e| Error::Aperture(format!("cluster alignment: {e:?}")))?;
            let mut r = Mat::<f64>::zeros(k, k);
            matmul(r.as_mut(), Accum::Replace, svd.U(), svd.V().transpose(), 1.0, Par::Seq);
            let old = c.as_ref().subrows(s, k).to_owned();
            matmul(c.as_mut().subrows_mut(s, k), Accum::Replace, r.transpose(), old.as_ref(), 1.0, Par::Seq);
            if let Some(v) = vecs.as_deref_mut() {
                let old = v.as_ref().subcols(s, k).to_owned();
                matmul(v.as_mut().subcols_mut(s, k), Accum::Replace, old.as_ref(), r.as_ref(), 1.0, Par::Seq);
            }
        }
        s = e;
    }
    for r in 0..n {
        let mut best = 0;
        for m in 1..nk {
            if c[(r, m)].abs() > c[(r, best)].abs() {
                best = m;
            }
        }
        if nk > 0 && c[(r, best)] < 0.0 {
            for m in 0..nk {
                c[(r, m)] = -c[(r, m)];
            }
            if let Some(v) = vecs.as_deref_mut() {
                v.col_as_slice_mut(r).iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    Ok(())
}

struct Solved {
    modes: Vec<ApertureMode>,
    c: Mat<f64>,
}

/// Solves both families until the lowest `n_modes` merged modes are
/// complete, projects on `box_modes` and merges.
fn solve_all(g: &Grid, n_modes: usize, box_modes: &[BoxMode<f64>], opts: &ApertureOptions) -> Result<Solved> {
    check_features(g, opts.min_feature_cells)?;
    let area = g.cells.iter().filter(|&&c| c).count() as f64 * g.hx * g.hy;
    let perim = g.perimeter();
    let kstar = (2.0 * PI * n_modes as f64 / area).sqrt();
    let weyl_te = area * kstar * kstar / (4.0 * PI) + perim * kstar / (4.0 * PI);
    let weyl_tm = (area * kstar * kstar / (4.0 * PI) - perim * kstar / (4.0 * PI)).max(0.0);
    let mut want = [
        ((1.1 * weyl_te).ceil() as usize + 8).min(n_modes),
        ((1.1 * weyl_tm).ceil() as usize + 8).min(n_modes),
    ];
    let fams = [Family::TE, Family::TM];
    let mut solved: [Option<(FamilyModes, Mat<f64>)>; 2] = [None, None];
    loop {
        for f in 0..2 {
            if solved[f].is_none() {
                let t0 = std::time::Instant::now();
                let mut fm = solve_family(g, fams[f], want[f], opts)?;
                let t1 = std::time::Instant::now();
                let mut c = project(g, &fm, box_modes)?;
                canonicalize(&fm.kc, &mut c, Some(&mut fm.vecs))?;
                log::debug!(
                    "{}: {} modes solved in {:.2?}, projected in {:.2?}",
                    fams[f].as_str(),
                    fm.kc.len(),
                    t1 - t0,
                    t1.elapsed()
                );
                if !opts.keep_potentials {
                    fm.vecs = Mat::zeros(0, 0);
                }
                solved[f] = Some((fm, c));
            }
        }
        let mut all: Vec<f64> = solved.iter().flat_map(|s| s.as_ref().unwrap().0.kc.clone()).collect();
        all.sort_by(f64::total_cmp);
        let kth = all.get(n_modes - 1).copied().unwrap_or(f64::INFINITY);
        let mut complete = true;
        for f in 0..2 {
            let fm = &solved[f].as_ref().unwrap().0;
            let top = fm.kc.last().copied().unwrap_or(0.0);
            if !fm.exhausted && top < kth {
                complete = false;
                want[f] = want[f] * 13 / 10 + 16;
                log::info!("{} aperture modes incomplete, retrying with {}", fams[f].as_str(), want[f]);
                solved[f] = None;
            }
        }
        if complete {
            if all.len() < n_modes {
                return Err(Error::Aperture(format!(
                    "aperture grid supports only {} modes, {} requested",
                    all.len(),
                    n_modes
                )));
            }
            break;
        }
    }
    // Merge: ascending kc, TE first on exact ties.
    let mut order: Vec<(f64, usize, usize)> = Vec::new();
    for (f, s) in solved.iter().enumerate() {
        for (k, &kc) in s.as_ref().unwrap().0.kc.iter().enumerate() {
            order.push((kc, f, k));
        }
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    // Cutoffs equal up to solver round-off count as ties, so analytically
    // degenerate TE/TM pairs keep the TE-first order.
    let mut s = 0;
    while s < order.len() {
        let mut e = s + 1;
        while e < order.len() && order[e].0 - order[e - 1].0 <= 1e-8 * order[e].0 {
            e += 1;
        }
        order[s..e].sort_by(|a, b| a.1.cmp(&b.1).then(a.2.cmp(&b.2)));
        s = e;
    }
    order.truncate(n_modes);
    let nk = box_modes.len();
    let mut c = Mat::<f64>::zeros(n_modes, nk);
    let mut modes = Vec::with_capacity(n_modes);
    for (row, &(kc, f, k)) in order.iter().enumerate() {
        let (fm, cf) = solved[f].as_ref().unwrap();
        c.as_mut().row_mut(row).copy_from(cf.row(k));
        let potential = if opts.keep_potentials {
            let nsites = match fm.family {
                Family::TE => g.nx * g.ny,
                Family::TM => (g.nx + 1) * (g.ny + 1),
            };
            let mut p = vec![0.0; nsites];
            for (u, &s) in fm.dofs.sites.iter().enumerate() {
                p[s] = fm.vecs[(u, k)];
            }
            p
        } else {
            Vec::new()
        };
        modes.push(ApertureMode { family: fm.family, kc, potential, coeff_row: Vec::new() });
    }
    Ok(Solved { modes, c })
}

fn reference_modes(g: &Grid, n_modes: usize) -> Vec<BoxMode<f64>> {
    let bx = crate::geometry::ShieldBox { a: g.nx as f64 * g.hx, b: g.ny as f64 * g.hy };
    let mut refs = enumerate_modes(&bx, (4 * n_modes).max(64));
    refs.retain(|m| (m.m as usize) < g.nx && (m.n as usize) < g.ny);
    refs
}

/// The lowest `n_modes` aperture modes with their grid potentials.
///
/// Degenerate clusters are aligned with their dominant expansion
/// coefficients on the leading box modes, so the result is reproducible.
pub fn solve_aperture_modes(mask: &RegionMask<f64>, n_modes: usize, opts: &ApertureOptions) -> Result<ApertureModes> {
    let g = grid_of(mask);
    let opts = ApertureOptions { keep_potentials: true, ..opts.clone() };
    let refs = reference_modes(&g, n_modes);
    let s = solve_all(&g, n_modes, &refs, &opts)?;
    Ok(ApertureModes { grid: g, modes: s.modes })
}

/// Midpoint-rule coupling of aperture modes with `box_modes`; also fills
/// each mode's `coeff_row`.
pub fn coupling_matrix(ap: &mut ApertureModes, box_modes: &[BoxMode<f64>], parseval_min: f64) -> Result<CouplingMatrix> {
    let nb = ap.modes.len();
    if nb == 0 || box_modes.is_empty() {
        return Err(Error::Aperture("coupling needs aperture and box modes".into()));
    }
    if box_modes.len() < 4 * nb {
        return Err(Error::Aperture(format!(
            "{} box modes are below 4 x {} aperture modes",
            box_modes.len(),
            nb
        )));
    }
    let g = &ap.grid;
    let mut c = Mat::<f64>::zeros(nb, box_modes.len());
    for fam in [Family::TE, Family::TM] {
        let rows: Vec<usize> = (0..nb).filter(|&k| ap.modes[k].family == fam).collect();
        if rows.is_empty() {
            continue;
        }
        let dofs = g.all_sites(fam);
        let vecs = Mat::from_fn(dofs.len(), rows.len(), |u, k| ap.modes[rows[k]].potential[u]);
        let fm = FamilyModes {
            family: fam,
            dofs,
            kc: rows.iter().map(|&k| ap.modes[k].kc).collect(),
            vecs,
            exhausted: false,
        };
        let cf = project(g, &fm, box_modes)?;
        for (k, &r) in rows.iter().enumerate() {
            c.as_mut().row_mut(r).copy_from(cf.row(k));
        }
    }
    for (k, md) in ap.modes.iter_mut().enumerate() {
        md.coeff_row = (0..box_modes.len()).map(|m| c[(k, m)]).collect();
    }
    let cm = CouplingMatrix { c };
    cm.check_parseval(parseval_min)?;
    Ok(cm)
}

/// The precompute used by the solver: aperture modes, their cutoffs and the
/// coupling matrix, with potentials dropped per family as soon as projected.
pub fn compute_coupling(
    mask: &RegionMask<f64>,
    n_modes: usize,
    box_modes: &[BoxMode<f64>],
    opts: &ApertureOptions,
) -> Result<ApertureData> {
    if n_modes == 0 {
        return Err(Error::Aperture("at least one aperture mode is required".into()));
    }
    if box_modes.len() < 4 * n_modes {
        return Err(Error::Aperture(format!(
            "{} box modes are below 4 x {} aperture modes",
            box_modes.len(),
            n_modes
        )));
    }
    let g = grid_of(mask);
    let s = solve_all(&g, n_modes, box_modes, opts)?;
    let coupling = CouplingMatrix { c: s.c };
    coupling.check_parseval(opts.parseval_min)?;
    Ok(ApertureData {
        families: s.modes.iter().map(|m| m.family).collect(),
        kc: s.modes.iter().map(|m| m.kc).collect(),
        coupling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_aperture, Metallization, Shape, ShieldBox};

    fn rect_mask(n: usize, cells: (usize, usize, usize, usize)) -> RegionMask<f64> {
        let bx = ShieldBox::new(1.0, 1.0).unwrap();
        let h = 1.0 / n as f64;
        let (i0, j0, i1, j1) = cells;
        let (x0, y0, x1, y1) = (i0 as f64 * h, j0 as f64 * h, i1 as f64 * h, j1 as f64 * h);
        let metal = Metallization::new(vec![
            Shape::rect(0.0, 0.0, 1.0, y0),
            Shape::rect(0.0, y1, 1.0, 1.0),
            Shape::rect(0.0, y0, x0, y1),
            Shape::rect(x1, y0, 1.0, y1),
        ]);
        build_aperture(&bx, &metal, n, n).unwrap()
    }

    #[test]
    fn full_box_reproduces_box_modes() {
        let bx = ShieldBox::new(1.0, 0.8).unwrap();
        let mask = build_aperture(&bx, &Metallization::default(), 64, 48).unwrap();
        let mut ap = solve_aperture_modes(&mask, 10, &ApertureOptions::default()).unwrap();
        let bm = enumerate_modes(&bx, 40);
        for (k, md) in ap.modes.iter().enumerate() {
            assert!((md.kc - bm[k].kc).abs() / bm[k].kc < 1e-2, "{k}");
        }
        let c = coupling_matrix(&mut ap, &bm, 0.98).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let d = if i == j { 1.0 } else { 0.0 };
                assert!((c.c[(i, j)] - d).abs() < 1e-2, "C[{i}][{j}] = {}", c.c[(i, j)]);
            }
        }
    }

    #[test]
    fn rectangle_cutoffs() {
        // 3:2 aperture occupying cells [8, 56) x [16, 48) of a 64 grid.
        let (w, l) = (0.75, 0.5);
        let exact_tm = |p: f64, q: f64| (PI * PI * ((p / w).powi(2) + (q / l).powi(2))).sqrt();
        let mask = rect_mask(64, (8, 16, 56, 48));
        let ap = solve_aperture_modes(&mask, 12, &ApertureOptions::default()).unwrap();
        let tm: Vec<f64> = ap.modes.iter().filter(|m| m.family == Family::TM).map(|m| m.kc).collect();
        assert!((tm[0] - exact_tm(1.0, 1.0)).abs() / exact_tm(1.0, 1.0) < 1e-2);
        let te: Vec<f64> = ap.modes.iter().filter(|m| m.family == Family::TE).map(|m| m.kc).collect();
        assert!((te[0] - PI / w).abs() / (PI / w) < 1e-2);
    }

    #[test]
    fn parity_selection_rule() {
        // Centred 38 x 24 aperture in a 128 grid: no accidental degeneracy.
        let mask = rect_mask(128, (45, 52, 83, 76));
        let bx = ShieldBox::new(1.0, 1.0).unwrap();
        let mut ap = solve_aperture_modes(&mask, 10, &ApertureOptions::default()).unwrap();
        let bm = enumerate_modes(&bx, 400);
        let c = coupling_matrix(&mut ap, &bm, 0.0).unwrap();
        let parity = |md: &ApertureMode| -> (bool, bool) {
            // Parity of hx about the centre, from the potential.
            let (nx, ny) = (128usize, 128usize);
            let pot = &md.potential;
            let w = if md.family == Family::TE { nx } else { nx + 1 };
            let h = if md.family == Family::TE { ny } else { ny + 1 };
            let (mut sx, mut sy) = (0.0, 0.0);
            for j in 0..h {
                for i in 0..w {
                    sx += pot[j * w + i] * pot[j * w + (w - 1 - i)];
                    sy += pot[j * w + i] * pot[(h - 1 - j) * w + i];
                }
            }
            (sx > 0.0, sy > 0.0)
        };
        let box_parity = |m: &BoxMode<f64>| -> (bool, bool) {
            // Potential cos(m pi x) is even about 1/2 iff m is even; sin(m pi x) iff m is odd.
            match m.family {
                Family::TE => (m.m % 2 == 0, m.n % 2 == 0),
                Family::TM => (m.m % 2 == 1, m.n % 2 == 1),
            }
        };
        let mut checked = 0;
        for (i, md) in ap.modes.iter().enumerate() {
            let pa = parity(md);
            // Potentials of both families: TE even potential <-> TE box even
            // potential; across families the vector parity flips.
            for (m, b) in bm.iter().enumerate() {
                let mut pb = box_parity(b);
                if b.family != md.family {
                    pb = (!pb.0, !pb.1);
                }
                if pa != pb {
                    assert!(c.c[(i, m)].abs() < 1e-10, "C[{i}][{m}] = {:e}", c.c[(i, m)]);
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn floating_conductors_add_static_modes() {
        let bx = ShieldBox::new(1.0, 1.0).unwrap();
        let h = 1.0 / 64.0;
        let metal = Metallization::new(vec![
            Shape::rect(12.0 * h, 24.0 * h, 26.0 * h, 40.0 * h),
            Shape::rect(34.0 * h, 24.0 * h, 52.0 * h, 40.0 * h),
            // Tied to the wall: no static field.
            Shape::rect(0.0, 0.0, 8.0 * h, 8.0 * h),
        ]);
        let mask = build_aperture(&bx, &metal, 64, 64).unwrap();
        let ap = solve_aperture_modes(&mask, 12, &ApertureOptions::default()).unwrap();
        assert_eq!(ap.modes.iter().filter(|m| m.kc == 0.0).count(), 2);
        assert!(ap.modes[..2].iter().all(|m| m.kc == 0.0 && m.family == Family::TM));
        let fields: Vec<Vec<f64>> = (0..ap.modes.len())
            .map(|k| {
                let (fx, fy) = ap.face_fields(k);
                [fx, fy].concat()
            })
            .collect();
        for i in 0..2 {
            for (j, fj) in fields.iter().enumerate() {
                let d: f64 = h * h * fields[i].iter().zip(fj).map(|(a, b)| a * b).sum::<f64>();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-9, "<{i},{j}> = {d}");
            }
        }
    }

    #[test]
    fn thin_aperture_rejected() {
        let mask = rect_mask(64, (8, 16, 56, 19));
        let e = solve_aperture_modes(&mask, 4, &ApertureOptions::default()).unwrap_err();
        assert!(e.to_string().contains("insufficient grid resolution"), "{e}");
    }

    #[test]
    fn too_few_box_modes_rejected() {
        let bx = ShieldBox::new(1.0, 1.0).unwrap();
        let mask = build_aperture(&bx, &Metallization::default(), 32, 32).unwrap();
        let bm = enumerate_modes(&bx, 30);
        assert!(compute_coupling(&mask, 10, &bm, &ApertureOptions::default()).is_err());
    }
}
