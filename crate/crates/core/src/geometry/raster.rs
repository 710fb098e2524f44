use super::polygon::{decompose, edges, Decomposition};
use super::{Metallization, Point, ShieldBox};
use crate::error::{Error, Result};
use crate::scalar::{coord_f64, Coord};

/// Raster of the aperture over the box plus its exact trapezoid partition.
///
/// Cell `(i, j)` covers `[i*hx, (i+1)*hx] x [j*hy, (j+1)*hy]`; it is `true`
/// when its centre lies in the aperture.
#[derive(Clone, Debug)]
pub struct RegionMask<T> {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    cells: Vec<bool>,
    pub exact: Decomposition<T>,
    pub bx: ShieldBox<T>,
}

impl<T: Coord> RegionMask<T> {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.nx + i]
    }

    /// Row-major (`j` outer) cell flags.
    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn true_fraction(&self) -> f64 {
        self.count() as f64 / self.cells.len() as f64
    }

    /// Exact aperture area.
    pub fn aperture_area(&self) -> T {
        self.exact.aperture_area()
    }

    /// Wraps an explicit raster; the exact partition is left empty.
    pub fn from_cells(bx: ShieldBox<T>, nx: usize, ny: usize, cells: Vec<bool>) -> Result<Self> {
        if nx < 16 || ny < 16 {
            return Err(Error::Geometry(format!("grid {nx}x{ny} below 16x16")));
        }
        if cells.len() != nx * ny {
            return Err(Error::Geometry("cell count does not match grid".into()));
        }
        Ok(Self {
            nx,
            ny,
            hx: coord_f64(&bx.a) / nx as f64,
            hy: coord_f64(&bx.b) / ny as f64,
            cells,
            exact: Decomposition { metal: Vec::new(), aperture: Vec::new() },
            bx,
        })
    }
}

/// Rasterizes the complement of `metal` in the box on an `nx x ny` grid.
pub fn build_aperture<T: Coord>(
    bx: &ShieldBox<T>,
    metal: &Metallization<T>,
    nx: usize,
    ny: usize,
) -> Result<RegionMask<T>> {
    if nx < 16 || ny < 16 {
        return Err(Error::Geometry(format!("grid {nx}x{ny} below 16x16")));
    }
    metal.validate(bx)?;
    let exact = decompose(bx, &metal.shapes);

    let two = T::one() + T::one();
    let centre = |k: usize, n: usize, len: &T| {
        len.clone() * T::from_usize(2 * k + 1).unwrap() / (two.clone() * T::from_usize(n).unwrap())
    };
    let ys: Vec<T> = (0..ny).map(|j| centre(j, ny, &bx.b)).collect();
    let mut cells = vec![true; nx * ny];

    for i in 0..nx {
        let xc = centre(i, nx, &bx.a);
        for s in &metal.shapes {
            let touches_vertex = s.rings().flatten().any(|p| p.x == xc);
            if touches_vertex {
                for (j, y) in ys.iter().enumerate() {
                    if s.contains(&Point::new(xc.clone(), y.clone())) {
                        cells[j * nx + i] = false;
                    }
                }
                continue;
            }
            // No vertex on this scanline: every crossing is transversal and
            // even-odd pairing of the half-open crossings is exact.
            let mut hits: Vec<T> = Vec::new();
            for ring in s.rings() {
                for (p, q) in edges(ring) {
                    if (p.x < xc) != (q.x < xc) {
                        let t = (xc.clone() - p.x.clone()) / (q.x.clone() - p.x.clone());
                        hits.push(p.y.clone() + t * (q.y.clone() - p.y.clone()));
                    }
                }
            }
            hits.sort_by(|u, v| u.partial_cmp(v).unwrap_or(std::cmp::Ordering::Equal));
            for pair in hits.chunks_exact(2) {
                for (j, y) in ys.iter().enumerate() {
                    if *y >= pair[0] && *y <= pair[1] {
                        cells[j * nx + i] = false;
                    }
                }
            }
        }
    }

    Ok(RegionMask {
        nx,
        ny,
        hx: coord_f64(&bx.a) / nx as f64,
        hy: coord_f64(&bx.b) / ny as f64,
        cells,
        exact,
        bx: bx.clone(),
    })
}
