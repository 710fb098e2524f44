//! Modal admittances of the shorted layered regions above and below the plane.

use crate::boxmodes::{BoxMode, Family};
use crate::error::{Error, Result};
use crate::scalar::{Real, EPS0, MU0};
use num_complex::Complex;
use std::ops::{Add, Div, Mul, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Layer<T> {
    pub eps_r: T,
    pub tan_delta: T,
    /// Metres.
    pub thickness: T,
}

impl<T> Layer<T> {
    pub fn new(eps_r: T, tan_delta: T, thickness: T) -> Self {
        Self { eps_r, tan_delta, thickness }
    }
}

/// Which side of the discontinuity plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Below = 1,
    Above = 2,
}

/// Layers on both sides, each listed from the plane outward to its PEC wall.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack<T> {
    pub below: Vec<Layer<T>>,
    pub above: Vec<Layer<T>>,
}

impl<T: Real> LayerStack<T> {
    pub fn new(below: Vec<Layer<T>>, above: Vec<Layer<T>>) -> Self {
        Self { below, above }
    }

    pub fn side(&self, s: Side) -> &[Layer<T>] {
        match s {
            Side::Below => &self.below,
            Side::Above => &self.above,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (s, name) in [(Side::Below, "layers_below"), (Side::Above, "layers_above")] {
            let ls = self.side(s);
            if ls.is_empty() {
                return Err(Error::Config(format!("{name} needs at least one layer")));
            }
            for (k, l) in ls.iter().enumerate() {
                if !(l.eps_r >= T::one()) || !(l.tan_delta >= T::zero()) || !(l.thickness > T::zero()) {
                    return Err(Error::Config(format!(
                        "{name}[{k}]: need eps_r >= 1, tan_delta >= 0, t > 0"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_lossless(&self) -> bool {
        self.below.iter().chain(&self.above).all(|l| l.tan_delta == T::zero())
    }
}

/// Input admittance with its resonance flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModalAdmittance<T> {
    pub y: Complex<T>,
    pub near_resonance: bool,
}

fn resonance_tol<T: Real>() -> T {
    T::lit(1e-10)
}

/// Principal-branch `sqrt(kc^2 - k0^2 eps_r (1 - j tan))`, real part >= 0.
pub fn propagation_constant<T: Real>(kc: T, k0: T, layer: &Layer<T>) -> Complex<T> {
    let k2 = k0 * k0 * layer.eps_r;
    Complex::new(kc * kc - k2, k2 * layer.tan_delta).sqrt()
}

/// Shorted-stack input admittance at the plane for one box mode.
///
/// Transmission-line recursion from the PEC wall inward; `coth` and `tanh`
/// enter through `exp(-2 gamma t)` so large attenuation cannot overflow.
pub fn modal_admittance<T: Real>(
    mode: &BoxMode<T>,
    side: Side,
    stack: &LayerStack<T>,
    f: T,
) -> ModalAdmittance<T> {
    let omega = T::lit(2.0) * T::PI() * f;
    let k0 = omega * T::lit((MU0 * EPS0).sqrt());
    let j = Complex::new(T::zero(), T::one());
    let one = Complex::new(T::one(), T::zero());
    let mut y: Option<Complex<T>> = None;
    let mut flagged = false;
    for l in stack.side(side).iter().rev() {
        let g = propagation_constant(mode.kc, k0, l);
        let yc = match mode.family {
            Family::TE => g / (j * omega * T::lit(MU0)),
            Family::TM => {
                let eps = Complex::new(l.eps_r, -(l.eps_r * l.tan_delta));
                j * omega * T::lit(EPS0) * eps / g
            }
        };
        let e = (-(g * T::lit(2.0) * l.thickness)).exp();
        let (p, m) = (one + e, one - e);
        let (num, den) = match y {
            None => (p, m),
            Some(yl) => (yl * p + yc * m, yc * p + yl * m),
        };
        let scale = match y {
            None => p.norm(),
            Some(yl) => yc.norm() * p.norm() + yl.norm() * m.norm(),
        };
        if den.norm() <= resonance_tol::<T>() * scale {
            flagged = true;
        }
        y = Some(yc * num / den);
    }
    ModalAdmittance { y: y.expect("validated stack"), near_resonance: flagged }
}

/// `Y^T = Y^(1) + Y^(2)`, flagged also when the sum itself nearly vanishes.
pub fn total_admittance<T: Real>(mode: &BoxMode<T>, stack: &LayerStack<T>, f: T) -> ModalAdmittance<T> {
    let y1 = modal_admittance(mode, Side::Below, stack, f);
    let y2 = modal_admittance(mode, Side::Above, stack, f);
    let y = y1.y + y2.y;
    let cancel = y.norm() <= resonance_tol::<T>() * (y1.y.norm() + y2.y.norm());
    ModalAdmittance { y, near_resonance: y1.near_resonance || y2.near_resonance || cancel }
}

/// Frequency-factorized large-cutoff form of `Y^T`:
/// `Y_inf = c1/(j w mu0) + j w eps0 c2 + j w^3 mu0 eps0^2 c3 + j w^5 mu0^2 eps0^3 c4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsymptoticCoeffs<T> {
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub c4: T,
}

impl<T: Real> AsymptoticCoeffs<T> {
    pub fn eval(&self, f: T) -> Complex<T> {
        let omega = T::lit(2.0) * T::PI() * f;
        let (mu, eps) = (T::lit(MU0), T::lit(EPS0));
        // c1/(j w mu0) = -j c1/(w mu0)
        let w3 = omega * omega * omega * mu * eps * eps;
        let w5 = w3 * omega * omega * mu * eps;
        let im = omega * eps * self.c2 - self.c1 / (omega * mu) + w3 * self.c3 + w5 * self.c4;
        Complex::new(T::zero(), im)
    }
}

/// Taylor coefficients up to third order in `s = k0^2`.
#[derive(Clone, Copy, Debug)]
struct Jet<T> {
    v: T,
    d: T,
    d2: T,
    d3: T,
}

impl<T: Real> Jet<T> {
    fn c(v: T) -> Self {
        Self { v, d: T::zero(), d2: T::zero(), d3: T::zero() }
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        let (d, d2) = (self.d, self.d2);
        Self {
            v: e,
            d: e * d,
            d2: e * (d2 + d * d / T::lit(2.0)),
            d3: e * (self.d3 + d * d2 + d * d * d / T::lit(6.0)),
        }
    }
}

impl<T: Real> Add for Jet<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { v: self.v + o.v, d: self.d + o.d, d2: self.d2 + o.d2, d3: self.d3 + o.d3 }
    }
}

impl<T: Real> Sub for Jet<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { v: self.v - o.v, d: self.d - o.d, d2: self.d2 - o.d2, d3: self.d3 - o.d3 }
    }
}

impl<T: Real> Mul for Jet<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
            d2: self.d2 * o.v + self.d * o.d + self.v * o.d2,
            d3: self.d3 * o.v + self.d2 * o.d + self.d * o.d2 + self.v * o.d3,
        }
    }
}

impl<T: Real> Div for Jet<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let v = self.v / o.v;
        let d = (self.d - v * o.d) / o.v;
        let d2 = (self.d2 - v * o.d2 - d * o.d) / o.v;
        let d3 = (self.d3 - v * o.d3 - d * o.d2 - d2 * o.d) / o.v;
        Self { v, d, d2, d3 }
    }
}

/// `sqrt(kc^2 - eps_r s)` expanded about `s = 0`.
fn gamma_jet<T: Real>(kc: T, eps_r: T) -> Jet<T> {
    Jet {
        v: kc,
        d: -eps_r / (T::lit(2.0) * kc),
        d2: -eps_r * eps_r / (T::lit(8.0) * kc * kc * kc),
        d3: -eps_r * eps_r * eps_r / (T::lit(16.0) * kc.powi(5)),
    }
}

/// Shorted-stack recursion with real per-layer `(gamma, yc)`.
fn static_recursion<T: Real>(layers: &[Layer<T>], per_layer: impl Fn(&Layer<T>) -> (Jet<T>, Jet<T>)) -> Jet<T> {
    let one = Jet::c(T::one());
    let mut y: Option<Jet<T>> = None;
    for l in layers.iter().rev() {
        let (g, yc) = per_layer(l);
        let e = (Jet::c(-T::lit(2.0) * l.thickness) * g).exp();
        let (p, m) = (one + e, one - e);
        y = Some(match y {
            None => yc * p / m,
            Some(yl) => yc * (yl * p + yc * m) / (yc * p + yl * m),
        });
    }
    y.expect("validated stack")
}

/// Quasi-static expansion of `Y^T` in `k0^2` truncated after third order.
///
/// With `Y_TE = F(s)/(j w mu0)` and `Y_TM = j w eps0 G(s)`, where `F` and
/// `G` are the shorted-line recursions with characteristic values `gamma_i`
/// and `eps_i / gamma_i`, the terms collect as `c1 = F(0)`,
/// `c2 = G(0) - F'(0)`, `c3 = G'(0) - F''(0)/2` and `c4 = G''(0)/2 - F'''(0)/6`,
/// summed over both sides.
/// For large `kc` this tends to `c1 = 2 kc` (TE) and `c2 = (eps1 + eps2)/kc`
/// (TM); the remainder is `O((k/kc)^6)` relative (TM) and `O((k/kc)^8)` (TE).
pub fn asymptotic_coeffs<T: Real>(mode: &BoxMode<T>, stack: &LayerStack<T>) -> AsymptoticCoeffs<T> {
    let kc = mode.kc;
    let (mut c1, mut c2, mut c3, mut c4) = (T::zero(), T::zero(), T::zero(), T::zero());
    for side in [Side::Below, Side::Above] {
        let ls = stack.side(side);
        match mode.family {
            Family::TE => {
                let f = static_recursion(ls, |l| {
                    let g = gamma_jet(kc, l.eps_r);
                    (g, g)
                });
                c1 = c1 + f.v;
                c2 = c2 - f.d;
                c3 = c3 - f.d2;
                c4 = c4 - f.d3;
            }
            Family::TM => {
                let g = static_recursion(ls, |l| {
                    let g = gamma_jet(kc, l.eps_r);
                    (g, Jet::c(l.eps_r) / g)
                });
                c2 = c2 + g.v;
                c3 = c3 + g.d;
                c4 = c4 + g.d2;
            }
        }
    }
    AsymptoticCoeffs { c1, c2, c3, c4 }
}
