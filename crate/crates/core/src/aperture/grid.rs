//! Staggered finite-difference discretization of the aperture.
//!
//! TE potentials live on aperture cell centres (Neumann), TM potentials on
//! cell corners whose four surrounding cells are all aperture (Dirichlet).
//! Both vector fields live on the same faces: vertical faces
//! `x = i hx, y = (j + 1/2) hy` (`i = 1..nx-1`, `j = 0..ny-1`) carry `hx`,
//! horizontal faces `x = (i + 1/2) hx, y = j hy` (`i = 0..nx-1`,
//! `j = 1..ny-1`) carry `hy`.

use crate::boxmodes::Family;
use faer::sparse::Triplet;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    /// `j * nx + i`, true = aperture.
    pub cells: Vec<bool>,
}

/// Map from grid sites to unknowns.
#[derive(Clone, Debug)]
pub(crate) struct Dofs {
    pub family: Family,
    /// Site index -> unknown, `NONE` for fixed or absent sites.
    pub index: Vec<usize>,
    /// Unknown -> site index.
    pub sites: Vec<usize>,
}

pub(crate) const NONE: usize = usize::MAX;

impl Dofs {
    pub fn len(&self) -> usize {
        self.sites.len()
    }
}

impl Grid {
    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.nx + i]
    }

    pub fn n_vfaces(&self) -> usize {
        (self.nx - 1) * self.ny
    }

    pub fn n_hfaces(&self) -> usize {
        self.nx * (self.ny - 1)
    }

    pub fn dofs(&self, family: Family) -> Dofs {
        let (nsites, free): (usize, Box<dyn Fn(usize) -> bool + '_>) = match family {
            Family::TE => (self.nx * self.ny, Box::new(|s| self.cells[s])),
            Family::TM => {
                let w = self.nx + 1;
                (
                    w * (self.ny + 1),
                    Box::new(move |s| {
                        let (i, j) = (s % w, s / w);
                        i >= 1
                            && j >= 1
                            && i < self.nx
                            && j < self.ny
                            && self.cell(i - 1, j - 1)
                            && self.cell(i, j - 1)
                            && self.cell(i - 1, j)
                            && self.cell(i, j)
                    }),
                )
            }
        };
        let mut index = vec![NONE; nsites];
        let mut sites = Vec::new();
        for (s, slot) in index.iter_mut().enumerate() {
            if free(s) {
                *slot = sites.len();
                sites.push(s);
            }
        }
        Dofs { family, index, sites }
    }

    /// Every site of `family` as an unknown, for full potential arrays.
    pub fn all_sites(&self, family: Family) -> Dofs {
        let n = match family {
            Family::TE => self.nx * self.ny,
            Family::TM => (self.nx + 1) * (self.ny + 1),
        };
        Dofs { family, index: (0..n).collect(), sites: (0..n).collect() }
    }

    /// Lower triangle of `L + shift I` in triplet form.
    pub fn laplacian(&self, d: &Dofs, shift: f64) -> Vec<Triplet<usize, usize, f64>> {
        let (cx, cy) = (1.0 / (self.hx * self.hx), 1.0 / (self.hy * self.hy));
        let mut t = Vec::with_capacity(3 * d.len());
        match d.family {
            Family::TE => {
                for (k, &s) in d.sites.iter().enumerate() {
                    let (i, j) = (s % self.nx, s / self.nx);
                    let mut diag = shift;
                    let mut link = |ok: bool, nb: usize, c: f64, t: &mut Vec<_>| {
                        if ok && d.index[nb] != NONE {
                            diag += c;
                            let m = d.index[nb];
                            if m < k {
                                t.push(Triplet::new(k, m, -c));
                            }
                        }
                    };
                    link(i > 0, s.wrapping_sub(1), cx, &mut t);
                    link(i + 1 < self.nx, s + 1, cx, &mut t);
                    link(j > 0, s.wrapping_sub(self.nx), cy, &mut t);
                    link(j + 1 < self.ny, s + self.nx, cy, &mut t);
                    t.push(Triplet::new(k, k, diag));
                }
            }
            Family::TM => {
                let w = self.nx + 1;
                for (k, &s) in d.sites.iter().enumerate() {
                    // Free nodes are interior, so all four neighbours exist.
                    for (nb, c) in [(s - 1, cx), (s + 1, cx), (s - w, cy), (s + w, cy)] {
                        let m = d.index[nb];
                        if m != NONE && m < k {
                            t.push(Triplet::new(k, m, -c));
                        }
                    }
                    t.push(Triplet::new(k, k, shift + 2.0 * (cx + cy)));
                }
            }
        }
        t
    }

    /// Face fields of one unit-power mode from its unknowns `v` (normalized
    /// so that `hx hy sum v^2 = 1`) and cutoff `kc`.
    ///
    /// `fx` is `(nx-1) x ny` column-major (`(i-1) + (nx-1) j`), `fy` is
    /// `nx x (ny-1)` column-major (`i + nx (j-1)`).
    pub fn face_fields(&self, d: &Dofs, v: &[f64], kc: f64, fx: &mut [f64], fy: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        // Static (kc = 0) modes carry unit power in `v` directly.
        let kc = if kc > 0.0 { kc } else { 1.0 };
        let sx = 1.0 / (self.hx * kc);
        let sy = 1.0 / (self.hy * kc);
        let val = |site: usize| {
            let m = d.index[site];
            if m == NONE {
                0.0
            } else {
                v[m]
            }
        };
        match d.family {
            Family::TE => {
                for j in 0..ny {
                    for i in 1..nx {
                        let (a, b) = (j * nx + i - 1, j * nx + i);
                        fx[(i - 1) + (nx - 1) * j] =
                            if self.cells[a] && self.cells[b] { (val(b) - val(a)) * sx } else { 0.0 };
                    }
                }
                for j in 1..ny {
                    for i in 0..nx {
                        let (a, b) = ((j - 1) * nx + i, j * nx + i);
                        fy[i + nx * (j - 1)] =
                            if self.cells[a] && self.cells[b] { (val(b) - val(a)) * sy } else { 0.0 };
                    }
                }
            }
            Family::TM => {
                let w = nx + 1;
                for j in 0..ny {
                    for i in 1..nx {
                        fx[(i - 1) + (nx - 1) * j] = (val((j + 1) * w + i) - val(j * w + i)) * sy;
                    }
                }
                for j in 1..ny {
                    for i in 0..nx {
                        fy[i + nx * (j - 1)] = -(val(j * w + i + 1) - val(j * w + i)) * sx;
                    }
                }
            }
        }
    }

    /// Number of 4-connected aperture components.
    pub fn components(&self) -> usize {
        let mut seen = vec![false; self.cells.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for s0 in 0..self.cells.len() {
            if !self.cells[s0] || seen[s0] {
                continue;
            }
            count += 1;
            seen[s0] = true;
            stack.push(s0);
            while let Some(s) = stack.pop() {
                let (i, j) = (s % self.nx, s / self.nx);
                let mut push = |ok: bool, t: usize| {
                    if ok && self.cells[t] && !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                };
                push(i > 0, s.wrapping_sub(1));
                push(i + 1 < self.nx, s + 1);
                push(j > 0, s.wrapping_sub(self.nx));
                push(j + 1 < self.ny, s + self.nx);
            }
        }
        count
    }

    /// Labels cell corners by the floating metal piece they touch.
    ///
    /// Returns one entry per corner (`j * (nx + 1) + i`): `NONE` for free
    /// corners and corners tied to the box wall (directly or through metal),
    /// otherwise the hole number `0..n_holes`.
    pub fn holes(&self) -> (Vec<usize>, usize) {
        let (nx, ny) = (self.nx, self.ny);
        // Union-find over metal cells (8-connected) plus one wall node.
        let wall = nx * ny;
        let mut parent: Vec<usize> = (0..=wall).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let unite = |p: &mut Vec<usize>, a: usize, b: usize| {
            let (ra, rb) = (find(p, a), find(p, b));
            if ra != rb {
                p[ra.max(rb)] = ra.min(rb);
            }
        };
        for j in 0..ny {
            for i in 0..nx {
                if self.cell(i, j) {
                    continue;
                }
                let s = j * nx + i;
                if i == 0 || j == 0 || i + 1 == nx || j + 1 == ny {
                    unite(&mut parent, s, wall);
                }
                for (di, dj) in [(1isize, 0isize), (0, 1), (1, 1), (-1, 1)] {
                    let (a, b) = (i as isize + di, j as isize + dj);
                    if a >= 0 && (a as usize) < nx && (b as usize) < ny && !self.cell(a as usize, b as usize) {
                        unite(&mut parent, s, b as usize * nx + a as usize);
                    }
                }
            }
        }
        let wroot = find(&mut parent, wall);
        let mut number = vec![NONE; wall + 1];
        let mut n_holes = 0;
        let w = nx + 1;
        let mut label = vec![NONE; w * (ny + 1)];
        for j in 1..ny {
            for i in 1..nx {
                let around = [(i - 1, j - 1), (i, j - 1), (i - 1, j), (i, j)];
                if let Some(&(a, b)) = around.iter().find(|&&(a, b)| !self.cell(a, b)) {
                    let r = find(&mut parent, b * nx + a);
                    if r == wroot {
                        continue;
                    }
                    if number[r] == NONE {
                        number[r] = n_holes;
                        n_holes += 1;
                    }
                    label[j * w + i] = number[r];
                }
            }
        }
        (label, n_holes)
    }

    /// Aperture boundary length (cell faces against metal or wall).
    pub fn perimeter(&self) -> f64 {
        let mut p = 0.0;
        for j in 0..self.ny {
            for i in 0..self.nx {
                if !self.cell(i, j) {
                    continue;
                }
                if i == 0 || !self.cell(i - 1, j) {
                    p += self.hy;
                }
                if i + 1 == self.nx || !self.cell(i + 1, j) {
                    p += self.hy;
                }
                if j == 0 || !self.cell(i, j - 1) {
                    p += self.hx;
                }
                if j + 1 == self.ny || !self.cell(i, j + 1) {
                    p += self.hx;
                }
            }
        }
        p
    }

    /// First aperture cell whose horizontal and vertical runs are both
    /// shorter than `min_cells`, reported with those runs.
    pub fn thin_feature(&self, min_cells: usize) -> Option<(usize, usize, usize)> {
        let (nx, ny) = (self.nx, self.ny);
        let mut hrun = vec![0usize; nx * ny];
        for j in 0..ny {
            let mut i = 0;
            while i < nx {
                if !self.cell(i, j) {
                    i += 1;
                    continue;
                }
                let s = i;
                while i < nx && self.cell(i, j) {
                    i += 1;
                }
                for k in s..i {
                    hrun[j * nx + k] = i - s;
                }
            }
        }
        for i in 0..nx {
            let mut j = 0;
            while j < ny {
                if !self.cell(i, j) {
                    j += 1;
                    continue;
                }
                let s = j;
                while j < ny && self.cell(i, j) {
                    j += 1;
                }
                for k in s..j {
                    let h = hrun[k * nx + i];
                    if h.min(j - s) < min_cells {
                        return Some((k * nx + i, h, j - s));
                    }
                }
            }
        }
        None
    }
}
