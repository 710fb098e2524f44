//! Circuit description: shielding box, metallization, ports and the aperture region.

mod config;
mod polygon;
mod raster;

pub use config::{
    parse_config, serialize_config, CircuitSpec, LayerDoc, Numerics, SweepPlan,
};
pub use polygon::{decompose, point_in_ring, signed_area, Decomposition, Location, Trapezoid};
pub use raster::{build_aperture, RegionMask};

use crate::error::{Error, Result};
use crate::scalar::Coord;

/// Cross section of the shielding box, `[0, a] x [0, b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShieldBox<T> {
    pub a: T,
    pub b: T,
}

impl<T: Coord> ShieldBox<T> {
    pub fn new(a: T, b: T) -> Result<Self> {
        if !(a > T::zero()) || !(b > T::zero()) {
            return Err(Error::Geometry("box dimensions must be positive".into()));
        }
        Ok(Self { a, b })
    }

    pub fn area(&self) -> T {
        self.a.clone() * self.b.clone()
    }

    /// Closed containment.
    pub fn contains(&self, p: &Point<T>) -> bool {
        p.x >= T::zero() && p.x <= self.a && p.y >= T::zero() && p.y <= self.b
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }
}

/// Closed vertex ring; the closing edge is implicit.
pub type Ring<T> = Vec<Point<T>>;

/// A simple polygon with optional holes.
#[derive(Clone, Debug, PartialEq)]
pub struct Shape<T> {
    pub outer: Ring<T>,
    pub holes: Vec<Ring<T>>,
}

impl<T: Coord> Shape<T> {
    pub fn new(outer: Ring<T>) -> Self {
        Self { outer, holes: Vec::new() }
    }

    pub fn with_holes(outer: Ring<T>, holes: Vec<Ring<T>>) -> Self {
        Self { outer, holes }
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rect(x0: T, y0: T, x1: T, y1: T) -> Self {
        Self::new(vec![
            Point::new(x0.clone(), y0.clone()),
            Point::new(x1.clone(), y0),
            Point::new(x1, y1.clone()),
            Point::new(x0, y1),
        ])
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring<T>> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    /// Metal is closed: boundary points belong to the shape.
    pub fn contains(&self, p: &Point<T>) -> bool {
        if point_in_ring(p, &self.outer) == Location::Outside {
            return false;
        }
        self.holes.iter().all(|h| point_in_ring(p, h) != Location::Inside)
    }

    pub fn area(&self) -> T {
        let mut s = signed_area(&self.outer).abs();
        for h in &self.holes {
            s = s - signed_area(h).abs();
        }
        s
    }
}

/// Union of printed metal shapes on the discontinuity plane.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Metallization<T> {
    pub shapes: Vec<Shape<T>>,
}

impl<T: Coord> Metallization<T> {
    pub fn new(shapes: Vec<Shape<T>>) -> Self {
        Self { shapes }
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn contains(&self, p: &Point<T>) -> bool {
        self.shapes.iter().any(|s| s.contains(p))
    }

    /// Rejects self-intersecting or zero-area rings, holes escaping their
    /// outline and anything outside the box.
    pub fn validate(&self, bx: &ShieldBox<T>) -> Result<()> {
        for (k, s) in self.shapes.iter().enumerate() {
            for (r, ring) in s.rings().enumerate() {
                let what = if r == 0 { "outline".to_string() } else { format!("hole {}", r - 1) };
                polygon::validate_ring(ring).map_err(|m| {
                    Error::Geometry(format!("metal polygon {k} {what}: {m}"))
                })?;
                if let Some(p) = ring.iter().find(|p| !bx.contains(p)) {
                    return Err(Error::Geometry(format!(
                        "metal polygon {k} {what}: vertex ({:?}, {:?}) outside box",
                        p.x, p.y
                    )));
                }
            }
            for (h, hole) in s.holes.iter().enumerate() {
                if !polygon::ring_within(hole, &s.outer) {
                    return Err(Error::Geometry(format!(
                        "metal polygon {k}: hole {h} not inside outline"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Axis-aligned rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct Rect<T> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
}

impl<T: Coord> Rect<T> {
    pub fn width(&self) -> T {
        self.x1.clone() - self.x0.clone()
    }

    pub fn height(&self) -> T {
        self.y1.clone() - self.y0.clone()
    }
}

/// Axis of the impressed port current.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orientation {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PortRole {
    External,
    Internal,
}

/// Lumped gap port. The impressed current flows along `orientation` across
/// a gap of `length`; the excitation pulse spans `width` transverse to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Port<T> {
    pub id: u32,
    pub center: Point<T>,
    pub width: T,
    pub length: T,
    pub orientation: Orientation,
    pub role: PortRole,
}

impl<T: Coord> Port<T> {
    /// Footprint of the port on the plane.
    pub fn rect(&self) -> Rect<T> {
        let two = T::one() + T::one();
        let (hx, hy) = match self.orientation {
            Orientation::X => (self.length.clone() / two.clone(), self.width.clone() / two),
            Orientation::Y => (self.width.clone() / two.clone(), self.length.clone() / two),
        };
        let c = &self.center;
        Rect {
            x0: c.x.clone() - hx.clone(),
            y0: c.y.clone() - hy.clone(),
            x1: c.x.clone() + hx,
            y1: c.y.clone() + hy,
        }
    }

    /// The open footprint must lie inside the box and touch no metal.
    pub fn validate(&self, bx: &ShieldBox<T>, metal: &Metallization<T>) -> Result<()> {
        let err = |msg: &str| Error::Port { id: self.id, msg: msg.into() };
        if !(self.width > T::zero()) {
            return Err(err("width must be positive"));
        }
        if !(self.length > T::zero()) {
            return Err(err("length must be positive"));
        }
        let r = self.rect();
        if r.x0 < T::zero() || r.y0 < T::zero() || r.x1 > bx.a || r.y1 > bx.b {
            return Err(err("port extends outside the box"));
        }
        if metal.contains(&self.center) {
            return Err(err("port intersects metallization"));
        }
        for s in &metal.shapes {
            for ring in s.rings() {
                for (p, q) in polygon::edges(ring) {
                    if polygon::segment_hits_open_rect(p, q, &r) {
                        return Err(err("port intersects metallization"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Metal-free extent along `orientation` through `center`, from the nearest
/// metal edge or wall on either side.
pub fn gap_through<T: Coord>(
    bx: &ShieldBox<T>,
    metal: &Metallization<T>,
    center: &Point<T>,
    orientation: Orientation,
) -> (T, T) {
    // Work in a frame where the current runs along x.
    let swap = |p: &Point<T>| match orientation {
        Orientation::X => p.clone(),
        Orientation::Y => Point::new(p.y.clone(), p.x.clone()),
    };
    let c = swap(center);
    let upper = match orientation {
        Orientation::X => bx.a.clone(),
        Orientation::Y => bx.b.clone(),
    };
    let mut lo = T::zero();
    let mut hi = upper;
    for s in &metal.shapes {
        for ring in s.rings() {
            for (p, q) in polygon::edges(ring) {
                let (p, q) = (swap(p), swap(q));
                for x in polygon::crossings_on_line(&p, &q, &c.y) {
                    if x <= c.x && x > lo {
                        lo = x;
                    } else if x >= c.x && x < hi {
                        hi = x;
                    }
                }
            }
        }
    }
    (lo, hi)
}
