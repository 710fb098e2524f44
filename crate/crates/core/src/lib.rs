//! Multimode equivalent network analysis of boxed zero-thickness planar
//! circuits with arbitrarily shaped metallizations.
//!
//! The pipeline: [`geometry`] describes the box and rasterizes the aperture,
//! [`aperture`] computes aperture modes and their coupling to the box modes of
//! [`boxmodes`], [`media`] supplies the layered modal admittances, and [`men`]
//! assembles and solves the moment system per frequency. [`sweep`] and [`io`]
//! drive a frequency sweep and write results.

pub mod aperture;
pub mod boxmodes;
pub mod error;
pub mod geometry;
pub mod io;
pub mod media;
pub mod men;
pub mod scalar;
pub mod sweep;

pub use error::{Error, Result};
pub use scalar::{Coord, Real};

/// Double-precision instantiations.
pub type ShieldBox = geometry::ShieldBox<f64>;
pub type Port = geometry::Port<f64>;
pub type Shape = geometry::Shape<f64>;
pub type Metallization = geometry::Metallization<f64>;
pub type RegionMask = geometry::RegionMask<f64>;
pub type BoxMode = boxmodes::BoxMode<f64>;
pub type Layer = media::Layer<f64>;
pub type LayerStack = media::LayerStack<f64>;
pub type Complex64 = num_complex::Complex<f64>;
