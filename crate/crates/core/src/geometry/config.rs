//! TOML circuit description. Lengths are millimetres and frequencies GHz in
//! the document; everything is SI once parsed.

use super::{gap_through, Metallization, Orientation, Point, Port, PortRole, Shape, ShieldBox};
use crate::error::{Error, Result};
use crate::media::{Layer, LayerStack};
use serde::{Deserialize, Serialize};

/// Solver size parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Aperture basis/test functions N_b.
    pub n_basis: usize,
    /// Box modes summed only through their asymptotic form.
    pub n_kernel_static: usize,
    /// Leading box modes that also get the exact-minus-asymptotic correction.
    pub n_kernel_dynamic: usize,
    /// Box modes kept as network terminals.
    pub n_accessible: usize,
    pub grid_nx: usize,
    pub grid_ny: usize,
    /// Smallest accepted coupling-row energy.
    pub parseval_min: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n_basis: 600,
            n_kernel_static: 3900,
            n_kernel_dynamic: 100,
            n_accessible: 1,
            grid_nx: 512,
            grid_ny: 512,
            parseval_min: 0.98,
        }
    }
}

impl Numerics {
    /// Total number of box modes in the kernel and coupling matrix.
    pub fn n_kernel(&self) -> usize {
        self.n_kernel_static + self.n_kernel_dynamic
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_basis == 0 {
            return bad("numerics.n_basis must be at least 1".into());
        }
        if self.grid_nx < 16 || self.grid_ny < 16 {
            return bad(format!("numerics grid {}x{} below 16x16", self.grid_nx, self.grid_ny));
        }
        if !(self.parseval_min >= 0.0 && self.parseval_min <= 1.0) {
            return bad(format!("numerics.parseval_min = {} outside [0, 1]", self.parseval_min));
        }
        if self.n_accessible >= self.n_kernel() {
            return bad(format!(
                "numerics.n_accessible = {} leaves no localized modes in a {}-mode kernel",
                self.n_accessible,
                self.n_kernel()
            ));
        }
        if self.n_kernel() < 4 * self.n_basis {
            return bad(format!(
                "kernel of {} box modes is below 4 x n_basis = {}",
                self.n_kernel(),
                4 * self.n_basis
            ));
        }
        Ok(())
    }
}

/// Linear frequency sweep, Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub f_start: f64,
    pub f_stop: f64,
    pub n_points: usize,
}

impl SweepPlan {
    pub fn new(f_start: f64, f_stop: f64, n_points: usize) -> Result<Self> {
        if !(f_start > 0.0) || !(f_stop >= f_start) || n_points == 0 {
            return Err(Error::Config(format!(
                "sweep needs 0 < f_start <= f_stop and n_points >= 1 (got {f_start}, {f_stop}, {n_points})"
            )));
        }
        if n_points > 1 && f_stop == f_start {
            return Err(Error::Config("sweep with several points needs f_stop > f_start".into()));
        }
        Ok(Self { f_start, f_stop, n_points })
    }

    pub fn frequencies(&self) -> Vec<f64> {
        if self.n_points == 1 {
            return vec![self.f_start];
        }
        let step = (self.f_stop - self.f_start) / (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|k| if k + 1 == self.n_points { self.f_stop } else { self.f_start + k as f64 * step })
            .collect()
    }
}

/// Complete problem description, SI units.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitSpec {
    pub bx: ShieldBox<f64>,
    pub stack: LayerStack<f64>,
    pub metal: Metallization<f64>,
    pub ports: Vec<Port<f64>>,
    pub numerics: Numerics,
    pub sweep: Option<SweepPlan>,
}

impl CircuitSpec {
    /// Geometric and numeric consistency checks shared by parsing and builders.
    pub fn validate(&self) -> Result<()> {
        self.stack.validate()?;
        self.metal.validate(&self.bx)?;
        let mut ids: Vec<u32> = self.ports.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Port { id: w[0], msg: "duplicate port id".into() });
        }
        for p in &self.ports {
            p.validate(&self.bx, &self.metal)?;
        }
        self.numerics.validate()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    #[serde(rename = "box")]
    bx: BoxDoc,
    layers_below: Vec<LayerDoc>,
    layers_above: Vec<LayerDoc>,
    #[serde(default)]
    metal: Vec<MetalDoc>,
    #[serde(default)]
    ports: Vec<PortDoc>,
    #[serde(default)]
    numerics: Numerics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxDoc {
    a_mm: f64,
    b_mm: f64,
}

/// One dielectric layer as written in the document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    pub eps_r: f64,
    #[serde(default)]
    pub tan_delta: f64,
    pub t_mm: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetalDoc {
    polygon: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    holes: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum AxisDoc {
    X,
    Y,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RoleDoc {
    External,
    Internal,
}

fn external() -> RoleDoc {
    RoleDoc::External
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PortDoc {
    id: u32,
    x_mm: f64,
    y_mm: f64,
    width_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length_mm: Option<f64>,
    orientation: AxisDoc,
    #[serde(default = "external")]
    role: RoleDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepDoc {
    f_start_ghz: f64,
    f_stop_ghz: f64,
    n_points: usize,
}

fn mm(v: f64) -> f64 {
    v / 1e3
}

fn ghz(v: f64) -> f64 {
    v * 1e9
}

/// Inverse of `x -> x / s` (or `x * s` for `up`) that reproduces `x` exactly
/// after the forward conversion.
fn invert(x: f64, fwd: impl Fn(f64) -> f64, guess: f64) -> f64 {
    [guess, guess.next_up(), guess.next_down()]
        .into_iter()
        .find(|c| fwd(*c) == x)
        .unwrap_or(guess)
}

fn to_mm(x: f64) -> f64 {
    invert(x, mm, x * 1e3)
}

fn to_ghz(x: f64) -> f64 {
    invert(x, ghz, x / 1e9)
}

fn ring(pts: &[[f64; 2]]) -> Vec<Point<f64>> {
    pts.iter().map(|p| Point::new(mm(p[0]), mm(p[1]))).collect()
}

fn unring(r: &[Point<f64>]) -> Vec<[f64; 2]> {
    r.iter().map(|p| [to_mm(p.x), to_mm(p.y)]).collect()
}

fn layers(docs: &[LayerDoc]) -> Vec<Layer<f64>> {
    docs.iter().map(|l| Layer::new(l.eps_r, l.tan_delta, mm(l.t_mm))).collect()
}

fn unlayers(ls: &[Layer<f64>]) -> Vec<LayerDoc> {
    ls.iter()
        .map(|l| LayerDoc { eps_r: l.eps_r, tan_delta: l.tan_delta, t_mm: to_mm(l.thickness) })
        .collect()
}

/// Parses and validates a TOML circuit description.
pub fn parse_config(text: &str) -> Result<CircuitSpec> {
    let doc: Doc = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let bx = ShieldBox::new(mm(doc.bx.a_mm), mm(doc.bx.b_mm))
        .map_err(|_| Error::Config("box.a_mm and box.b_mm must be positive".into()))?;
    let stack = LayerStack::new(layers(&doc.layers_below), layers(&doc.layers_above));
    let metal = Metallization::new(
        doc.metal
            .iter()
            .map(|m| Shape::with_holes(ring(&m.polygon), m.holes.iter().map(|h| ring(h)).collect()))
            .collect(),
    );
    metal.validate(&bx)?;

    let mut ports = Vec::with_capacity(doc.ports.len());
    for p in &doc.ports {
        let center = Point::new(mm(p.x_mm), mm(p.y_mm));
        let orientation = match p.orientation {
            AxisDoc::X => Orientation::X,
            AxisDoc::Y => Orientation::Y,
        };
        if !bx.contains(&center) {
            return Err(Error::Port { id: p.id, msg: "centre outside the box".into() });
        }
        if metal.contains(&center) {
            return Err(Error::Port { id: p.id, msg: "port intersects metallization".into() });
        }
        let length = match p.length_mm {
            Some(l) => mm(l),
            None => {
                let c = match orientation {
                    Orientation::X => center.x,
                    Orientation::Y => center.y,
                };
                let (lo, hi) = gap_through(&bx, &metal, &center, orientation);
                2.0 * (c - lo).min(hi - c)
            }
        };
        ports.push(Port {
            id: p.id,
            center,
            width: mm(p.width_mm),
            length,
            orientation,
            role: match p.role {
                RoleDoc::External => PortRole::External,
                RoleDoc::Internal => PortRole::Internal,
            },
        });
    }
    let sweep = doc
        .sweep
        .map(|s| SweepPlan::new(ghz(s.f_start_ghz), ghz(s.f_stop_ghz), s.n_points))
        .transpose()?;
    let spec = CircuitSpec { bx, stack, metal, ports, numerics: doc.numerics, sweep };
    spec.validate()?;
    Ok(spec)
}

/// Writes a document that parses back to an identical spec.
pub fn serialize_config(spec: &CircuitSpec) -> Result<String> {
    let doc = Doc {
        bx: BoxDoc { a_mm: to_mm(spec.bx.a), b_mm: to_mm(spec.bx.b) },
        layers_below: unlayers(&spec.stack.below),
        layers_above: unlayers(&spec.stack.above),
        metal: spec
            .metal
            .shapes
            .iter()
            .map(|s| MetalDoc {
                polygon: unring(&s.outer),
                holes: s.holes.iter().map(|h| unring(h)).collect(),
            })
            .collect(),
        ports: spec
            .ports
            .iter()
            .map(|p| PortDoc {
                id: p.id,
                x_mm: to_mm(p.center.x),
                y_mm: to_mm(p.center.y),
                width_mm: to_mm(p.width),
                length_mm: Some(to_mm(p.length)),
                orientation: match p.orientation {
                    Orientation::X => AxisDoc::X,
                    Orientation::Y => AxisDoc::Y,
                },
                role: match p.role {
                    PortRole::External => RoleDoc::External,
                    PortRole::Internal => RoleDoc::Internal,
                },
            })
            .collect(),
        numerics: spec.numerics.clone(),
        sweep: spec.sweep.as_ref().map(|s| SweepDoc {
            f_start_ghz: to_ghz(s.f_start),
            f_stop_ghz: to_ghz(s.f_stop),
            n_points: s.n_points,
        }),
    };
    toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOXED: &str = r#"
[box]
a_mm = 67.5
b_mm = 67.5

[[layers_below]]
eps_r = 2.33
t_mm = 1.57

[[layers_above]]
eps_r = 1.0
t_mm = 9.83
"#;

    #[test]
    fn minimal_document() {
        let s = parse_config(BOXED).unwrap();
        assert_eq!(s.bx.a, 0.0675);
        assert_eq!(s.stack.below[0].thickness, 1.57e-3);
        assert_eq!(s.stack.below[0].eps_r, 2.33);
        let h: f64 = s.stack.below.iter().chain(&s.stack.above).map(|l| l.thickness).sum();
        assert!((h - 11.4e-3).abs() < 1e-15);
        assert!(s.metal.is_empty());
        assert_eq!(s.numerics, Numerics::default());
        assert!(s.sweep.is_none());
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config(&format!("{BOXED}\n[numerics]\nn_bassis = 3\n")).unwrap_err();
        assert!(e.to_string().contains("n_bassis"), "{e}");
        let e = parse_config("[box]\na_mm = 1.0\n").unwrap_err();
        assert!(e.to_string().contains("b_mm"), "{e}");
    }

    #[test]
    fn port_on_metal_rejected() {
        let text = format!(
            "{BOXED}
[[metal]]
polygon = [[10.0, 10.0], [20.0, 10.0], [20.0, 20.0], [10.0, 20.0]]

[[ports]]
id = 1
x_mm = 15.0
y_mm = 15.0
width_mm = 1.0
orientation = \"x\"
"
        );
        let e = parse_config(&text).unwrap_err();
        assert!(e.to_string().contains("port intersects metallization"), "{e}");
    }

    #[test]
    fn polygon_outside_box_rejected() {
        let text = format!("{BOXED}\n[[metal]]\npolygon = [[60.0, 1.0], [70.0, 1.0], [65.0, 5.0]]\n");
        assert!(matches!(parse_config(&text), Err(Error::Geometry(_))));
    }

    #[test]
    fn gap_length_detected() {
        let text = format!(
            "{BOXED}
[[metal]]
polygon = [[10.0, 30.0], [33.0, 30.0], [33.0, 32.0], [10.0, 32.0]]

[[metal]]
polygon = [[34.0, 30.0], [57.0, 30.0], [57.0, 32.0], [34.0, 32.0]]

[[ports]]
id = 7
x_mm = 33.5
y_mm = 31.0
width_mm = 2.0
orientation = \"x\"
role = \"internal\"
"
        );
        let s = parse_config(&text).unwrap();
        assert!((s.ports[0].length - 1e-3).abs() < 1e-15);
        assert_eq!(s.ports[0].role, PortRole::Internal);
    }

    #[test]
    fn round_trip() {
        let text = format!(
            "{BOXED}
[[metal]]
polygon = [[10.1, 30.3], [33.7, 30.3], [33.7, 32.9], [10.1, 32.9]]
holes = [[[11.0, 31.0], [12.0, 31.0], [12.0, 32.0]]]

[[ports]]
id = 2
x_mm = 33.9
y_mm = 31.6
width_mm = 2.6
length_mm = 0.4
orientation = \"x\"

[numerics]
n_basis = 40
n_kernel_static = 300
n_kernel_dynamic = 20
grid_nx = 64
grid_ny = 96

[sweep]
f_start_ghz = 0.3
f_stop_ghz = 7.1
n_points = 17
"
        );
        let s = parse_config(&text).unwrap();
        let again = parse_config(&serialize_config(&s).unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn mm_inverse_exact() {
        for k in 1..20000 {
            let x = mm(k as f64 * 1.37e-3);
            assert_eq!(mm(to_mm(x)), x);
            assert_eq!(ghz(to_ghz(x * 1e9)), x * 1e9);
        }
    }

    #[test]
    fn sweep_endpoints() {
        let p = SweepPlan::new(1e9, 2e9, 11).unwrap();
        let f = p.frequencies();
        assert_eq!(f.len(), 11);
        assert_eq!(f[0], 1e9);
        assert_eq!(f[10], 2e9);
        assert!(SweepPlan::new(0.0, 1.0, 3).is_err());
    }
}
