//! Closed-form modes of a rectangular aperture.

use crate::boxmodes::{enumerate_modes, eval_unchecked, BoxMode};
use crate::error::{Error, Result};
use crate::geometry::{Rect, ShieldBox};
use crate::scalar::Real;

use super::ApertureMode;

/// Integral of `cos(k x + phi)` over `[x0, x1]`, stable as `k -> 0`.
fn icos<T: Real>(k: T, phi: T, x0: T, x1: T) -> T {
    let half = (x1 - x0) / T::lit(2.0);
    let mid = (x0 + x1) / T::lit(2.0);
    let u = k * half;
    let sinc = if u.abs() < T::lit(1e-4) {
        T::one() - u * u / T::lit(6.0)
    } else {
        u.sin() / u
    };
    T::lit(2.0) * half * (k * mid + phi).cos() * sinc
}

/// `int sin(a (x - x0)) sin(k x)` over the aperture span.
fn iss<T: Real>(a: T, k: T, x0: T, x1: T) -> T {
    let phi = -a * x0;
    (icos(a - k, phi, x0, x1) - icos(a + k, phi, x0, x1)) / T::lit(2.0)
}

/// `int cos(a (x - x0)) cos(k x)` over the aperture span.
fn icc<T: Real>(a: T, k: T, x0: T, x1: T) -> T {
    let phi = -a * x0;
    (icos(a - k, phi, x0, x1) + icos(a + k, phi, x0, x1)) / T::lit(2.0)
}

/// Field of a rectangular-aperture mode at a box point; zero outside.
pub fn rect_mode_field<T: Real>(rect: &Rect<T>, mode: &BoxMode<T>, x: T, y: T) -> (T, T) {
    if x < rect.x0 || x > rect.x1 || y < rect.y0 || y > rect.y1 {
        return (T::zero(), T::zero());
    }
    let local = ShieldBox { a: rect.width(), b: rect.height() };
    let [hx, hy] = eval_unchecked(mode, &local, x - rect.x0, y - rect.y0);
    (hx, hy)
}

/// The lowest `n_modes` modes of the open rectangle `rect` inside `bx`,
/// with exact coupling rows against `box_modes`.
///
/// Cutoffs and degeneracy order follow box-mode enumeration on the
/// rectangle; `potential` is left empty.
pub fn analytic_rect_aperture<T: Real>(
    bx: &ShieldBox<T>,
    rect: &Rect<T>,
    n_modes: usize,
    box_modes: &[BoxMode<T>],
) -> Result<Vec<ApertureMode<T>>> {
    if !(rect.x0 >= T::zero() && rect.y0 >= T::zero() && rect.x1 <= bx.a && rect.y1 <= bx.b)
        || rect.width() <= T::zero()
        || rect.height() <= T::zero()
    {
        return Err(Error::Geometry("aperture rectangle must lie inside the box".into()));
    }
    let local = ShieldBox { a: rect.width(), b: rect.height() };
    let pi = T::PI();
    Ok(enumerate_modes(&local, n_modes)
        .into_iter()
        .map(|am| {
            let (a_x, a_y) = am.amplitudes(&local);
            let al = pi * T::from_u32(am.m).unwrap() / local.a;
            let be = pi * T::from_u32(am.n).unwrap() / local.b;
            let row = box_modes
                .iter()
                .map(|bm| {
                    let (b_x, b_y) = bm.amplitudes(bx);
                    let kx = pi * T::from_u32(bm.m).unwrap() / bx.a;
                    let ky = pi * T::from_u32(bm.n).unwrap() / bx.b;
                    a_x * b_x * iss(al, kx, rect.x0, rect.x1) * icc(be, ky, rect.y0, rect.y1)
                        + a_y * b_y * icc(al, kx, rect.x0, rect.x1) * iss(be, ky, rect.y0, rect.y1)
                })
                .collect();
            ApertureMode { family: am.family, kc: am.kc, potential: Vec::new(), coeff_row: row }
        })
        .collect())
}
