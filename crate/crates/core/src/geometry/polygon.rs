//! Exact planar predicates and the slab decomposition of the metal union.

use super::{Point, Rect, Shape, ShieldBox};
use crate::scalar::Coord;
use std::cmp::Ordering;

/// Twice the signed area of triangle `abc`; positive when counter-clockwise.
pub(crate) fn orient<T: Coord>(a: &Point<T>, b: &Point<T>, c: &Point<T>) -> T {
    (b.x.clone() - a.x.clone()) * (c.y.clone() - a.y.clone())
        - (b.y.clone() - a.y.clone()) * (c.x.clone() - a.x.clone())
}

pub fn signed_area<T: Coord>(ring: &[Point<T>]) -> T {
    let mut s = T::zero();
    for (p, q) in edges(ring) {
        s = s + p.x.clone() * q.y.clone() - q.x.clone() * p.y.clone();
    }
    s / (T::one() + T::one())
}

pub(crate) fn edges<T>(ring: &[Point<T>]) -> impl Iterator<Item = (&Point<T>, &Point<T>)> {
    let n = ring.len();
    (0..n).map(move |i| (&ring[i], &ring[(i + 1) % n]))
}

fn cmp<T: PartialOrd>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

fn between<T: Coord>(v: &T, a: &T, b: &T) -> bool {
    (a <= v && v <= b) || (b <= v && v <= a)
}

fn on_segment<T: Coord>(p: &Point<T>, a: &Point<T>, b: &Point<T>) -> bool {
    orient(a, b, p).is_zero() && between(&p.x, &a.x, &b.x) && between(&p.y, &a.y, &b.y)
}

/// Closed segment intersection test.
pub(crate) fn segments_intersect<T: Coord>(
    a: &Point<T>,
    b: &Point<T>,
    c: &Point<T>,
    d: &Point<T>,
) -> bool {
    let d1 = orient(c, d, a).signum();
    let d2 = orient(c, d, b).signum();
    let d3 = orient(a, b, c).signum();
    let d4 = orient(a, b, d).signum();
    if (d1.clone() * d2.clone()).is_negative() && (d3.clone() * d4.clone()).is_negative() {
        return true;
    }
    (d1.is_zero() && on_segment(a, c, d))
        || (d2.is_zero() && on_segment(b, c, d))
        || (d3.is_zero() && on_segment(c, a, b))
        || (d4.is_zero() && on_segment(d, a, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Inside,
    Boundary,
    Outside,
}

/// Exact point location relative to a simple ring.
pub fn point_in_ring<T: Coord>(p: &Point<T>, ring: &[Point<T>]) -> Location {
    let mut inside = false;
    for (a, b) in edges(ring) {
        if on_segment(p, a, b) {
            return Location::Boundary;
        }
        if (a.y > p.y) != (b.y > p.y) {
            // Crossing of the rightward ray, decided by orientation sign.
            let o = orient(a, b, p);
            let up = b.y > a.y;
            if (up && o.is_positive()) || (!up && o.is_negative()) {
                inside = !inside;
            }
        }
    }
    if inside {
        Location::Inside
    } else {
        Location::Outside
    }
}

pub(crate) fn validate_ring<T: Coord>(ring: &[Point<T>]) -> Result<(), String> {
    let n = ring.len();
    if n < 3 {
        return Err(format!("needs at least 3 vertices, got {n}"));
    }
    let (mut lo, mut hi) = (ring[0].clone(), ring[0].clone());
    for p in ring {
        if p.x < lo.x {
            lo.x = p.x.clone();
        }
        if p.y < lo.y {
            lo.y = p.y.clone();
        }
        if p.x > hi.x {
            hi.x = p.x.clone();
        }
        if p.y > hi.y {
            hi.y = p.y.clone();
        }
    }
    let w = hi.x - lo.x;
    let h = hi.y - lo.y;
    let extent = if w > h { w } else { h };
    // Relative floor absorbs rounding in inexact coordinates.
    let floor = extent.clone() * extent * T::from_f64(1e-14).unwrap_or_else(T::zero);
    if signed_area(ring).abs() <= floor {
        return Err("degenerate polygon (zero area)".into());
    }
    for i in 0..n {
        if ring[i] == ring[(i + 1) % n] {
            return Err(format!("repeated vertex {i}"));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (a, b) = (&ring[i], &ring[(i + 1) % n]);
            let (c, d) = (&ring[j], &ring[(j + 1) % n]);
            if adjacent {
                // Adjacent edges may only fold back onto each other when collinear.
                let (p, m, r) = if j == i + 1 { (a, b, d) } else { (c, a, b) };
                let dot = (m.x.clone() - p.x.clone()) * (r.x.clone() - m.x.clone())
                    + (m.y.clone() - p.y.clone()) * (r.y.clone() - m.y.clone());
                if orient(p, m, r).is_zero() && dot.is_negative() {
                    return Err(format!("edges {i} and {j} overlap"));
                }
            } else if segments_intersect(a, b, c, d) {
                return Err(format!("self-intersection between edges {i} and {j}"));
            }
        }
    }
    Ok(())
}

/// `inner` lies in the closed region of `outer` and crosses none of its edges.
pub(crate) fn ring_within<T: Coord>(inner: &[Point<T>], outer: &[Point<T>]) -> bool {
    if inner.iter().any(|p| point_in_ring(p, outer) == Location::Outside) {
        return false;
    }
    for (a, b) in edges(inner) {
        for (c, d) in edges(outer) {
            let o1 = orient(c, d, a).signum();
            let o2 = orient(c, d, b).signum();
            let o3 = orient(a, b, c).signum();
            let o4 = orient(a, b, d).signum();
            if (o1 * o2).is_negative() && (o3 * o4).is_negative() {
                return false;
            }
        }
    }
    // Edge midpoints catch a hole bridging two touching points of the outline.
    let two = T::one() + T::one();
    edges(inner).all(|(a, b)| {
        let m = Point::new((a.x.clone() + b.x.clone()) / two.clone(), (a.y.clone() + b.y.clone()) / two.clone());
        point_in_ring(&m, outer) != Location::Outside
    })
}

/// x coordinates where segment `pq` meets the horizontal line at `y`.
pub(crate) fn crossings_on_line<T: Coord>(p: &Point<T>, q: &Point<T>, y: &T) -> Vec<T> {
    if p.y == *y && q.y == *y {
        return vec![p.x.clone(), q.x.clone()];
    }
    if !between(y, &p.y, &q.y) {
        return Vec::new();
    }
    let t = (y.clone() - p.y.clone()) / (q.y.clone() - p.y.clone());
    vec![p.x.clone() + t * (q.x.clone() - p.x.clone())]
}

/// True when the closed segment `pq` meets the open rectangle `r`.
pub(crate) fn segment_hits_open_rect<T: Coord>(p: &Point<T>, q: &Point<T>, r: &Rect<T>) -> bool {
    // Liang-Barsky on the closed rectangle, then a strict test at the midpoint
    // of the clipped piece: the clipped piece is convex, so it meets the open
    // interior iff its midpoint does, unless it lies along the boundary.
    let dx = q.x.clone() - p.x.clone();
    let dy = q.y.clone() - p.y.clone();
    let mut t0 = T::zero();
    let mut t1 = T::one();
    let checks = [
        (-dx.clone(), p.x.clone() - r.x0.clone()),
        (dx.clone(), r.x1.clone() - p.x.clone()),
        (-dy.clone(), p.y.clone() - r.y0.clone()),
        (dy.clone(), r.y1.clone() - p.y.clone()),
    ];
    for (pk, qk) in checks {
        if pk.is_zero() {
            if qk.is_negative() {
                return false;
            }
        } else {
            let t = qk / pk.clone();
            if pk.is_negative() {
                if t > t1 {
                    return false;
                }
                if t > t0 {
                    t0 = t;
                }
            } else {
                if t < t0 {
                    return false;
                }
                if t < t1 {
                    t1 = t;
                }
            }
        }
    }
    let two = T::one() + T::one();
    let tm = (t0 + t1) / two;
    let mx = p.x.clone() + tm.clone() * dx;
    let my = p.y.clone() + tm * dy;
    mx > r.x0 && mx < r.x1 && my > r.y0 && my < r.y1
}

/// Vertical trapezoid between two non-crossing edges over `[x0, x1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trapezoid<T> {
    pub x0: T,
    pub x1: T,
    /// Lower edge at `x0` and `x1`.
    pub lo: (T, T),
    /// Upper edge at `x0` and `x1`.
    pub hi: (T, T),
}

impl<T: Coord> Trapezoid<T> {
    pub fn area(&self) -> T {
        let h0 = self.hi.0.clone() - self.lo.0.clone();
        let h1 = self.hi.1.clone() - self.lo.1.clone();
        (self.x1.clone() - self.x0.clone()) * (h0 + h1) / (T::one() + T::one())
    }
}

/// Partition of the box into metal and aperture trapezoids.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition<T> {
    pub metal: Vec<Trapezoid<T>>,
    pub aperture: Vec<Trapezoid<T>>,
}

impl<T: Coord> Decomposition<T> {
    pub fn metal_area(&self) -> T {
        self.metal.iter().fold(T::zero(), |s, t| s + t.area())
    }

    pub fn aperture_area(&self) -> T {
        self.aperture.iter().fold(T::zero(), |s, t| s + t.area())
    }
}

struct Edge<'a, T> {
    shape: usize,
    a: &'a Point<T>,
    b: &'a Point<T>,
}

fn y_at<T: Coord>(a: &Point<T>, b: &Point<T>, x: &T) -> T {
    a.y.clone() + (x.clone() - a.x.clone()) * (b.y.clone() - a.y.clone()) / (b.x.clone() - a.x.clone())
}

/// Exact slab decomposition of the metal union and its complement in the box.
///
/// Slabs are cut at every vertex abscissa and every pairwise edge crossing,
/// so inside a slab the edges are totally ordered by height.
pub fn decompose<T: Coord>(bx: &ShieldBox<T>, shapes: &[Shape<T>]) -> Decomposition<T> {
    let mut edges_all = Vec::new();
    let mut xs = vec![T::zero(), bx.a.clone()];
    for (k, s) in shapes.iter().enumerate() {
        for ring in s.rings() {
            for (a, b) in edges(ring) {
                xs.push(a.x.clone());
                if a.x != b.x {
                    edges_all.push(Edge { shape: k, a, b });
                }
            }
        }
    }
    for i in 0..edges_all.len() {
        for j in i + 1..edges_all.len() {
            let (e, f) = (&edges_all[i], &edges_all[j]);
            if !segments_intersect(e.a, e.b, f.a, f.b) {
                continue;
            }
            let o1 = orient(f.a, f.b, e.a);
            let o2 = orient(f.a, f.b, e.b);
            let den = o1.clone() - o2;
            if den.is_zero() {
                continue; // collinear overlap: endpoints are already events
            }
            let t = o1 / den;
            xs.push(e.a.x.clone() + t * (e.b.x.clone() - e.a.x.clone()));
        }
    }
    xs.retain(|x| *x >= T::zero() && *x <= bx.a);
    xs.sort_by(cmp);
    xs.dedup();

    let two = T::one() + T::one();
    let mut out = Decomposition { metal: Vec::new(), aperture: Vec::new() };
    let mut parity = vec![false; shapes.len()];
    for w in xs.windows(2) {
        let (x0, x1) = (&w[0], &w[1]);
        let mut active: Vec<(usize, T, T, T)> = edges_all
            .iter()
            .filter(|e| {
                let (lo, hi) = if e.a.x < e.b.x { (&e.a.x, &e.b.x) } else { (&e.b.x, &e.a.x) };
                lo <= x0 && hi >= x1
            })
            .map(|e| {
                let y0 = y_at(e.a, e.b, x0);
                let y1 = y_at(e.a, e.b, x1);
                let ym = (y0.clone() + y1.clone()) / two.clone();
                (e.shape, y0, y1, ym)
            })
            .collect();
        active.sort_by(|p, q| cmp(&p.3, &q.3));

        parity.iter_mut().for_each(|p| *p = false);
        let mut covered = 0usize;
        let mut start = (T::zero(), T::zero());
        for (shape, y0, y1, _) in active {
            let was = covered > 0;
            parity[shape] = !parity[shape];
            if parity[shape] {
                covered += 1;
            } else {
                covered -= 1;
            }
            if (covered > 0) != was {
                let end = (y0, y1);
                emit(&mut out, was, x0, x1, &start, &end);
                start = end;
            }
        }
        let top = (bx.b.clone(), bx.b.clone());
        emit(&mut out, covered > 0, x0, x1, &start, &top);
    }
    out
}

fn emit<T: Coord>(
    out: &mut Decomposition<T>,
    metal: bool,
    x0: &T,
    x1: &T,
    lo: &(T, T),
    hi: &(T, T),
) {
    if lo.0 == hi.0 && lo.1 == hi.1 {
        return;
    }
    let t = Trapezoid { x0: x0.clone(), x1: x1.clone(), lo: lo.clone(), hi: hi.clone() };
    if metal {
        out.metal.push(t);
    } else {
        out.aperture.push(t);
    }
}
