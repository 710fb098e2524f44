use faer::linalg::matmul::matmul;
use faer::{c64, Accum, Mat, Par};
use shielded_men::aperture::{compute_coupling, ApertureOptions, CouplingMatrix};
use shielded_men::boxmodes::enumerate_modes;
use shielded_men::geometry::{build_aperture, Metallization, Orientation, Point, Port, PortRole, Shape, ShieldBox};
use shielded_men::media::{total_admittance, Layer, LayerStack};
use shielded_men::men::MenModel;

const A: f64 = 0.0675;
const H: f64 = A / 256.0;

fn stack() -> LayerStack<f64> {
    LayerStack::new(vec![Layer::new(2.33, 0.0, 1.57e-3)], vec![Layer::new(1.0, 0.0, 9.83e-3)])
}

fn patch() -> (ShieldBox<f64>, Metallization<f64>, Vec<Port<f64>>) {
    let bx = ShieldBox::new(A, A).unwrap();
    let yc = 128.0 * H;
    let metal = Metallization::new(vec![
        Shape::rect(0.0, yc - 3.0 * H, 70.0 * H, yc + 3.0 * H),
        Shape::rect(86.0 * H, yc - 38.0 * H, 162.0 * H, yc + 38.0 * H),
    ]);
    let port = Port {
        id: 1,
        center: Point::new(78.0 * H, yc),
        width: 6.0 * H,
        length: 4.0 * H,
        orientation: Orientation::X,
        role: PortRole::External,
    };
    (bx, metal, vec![port])
}

fn head(c: &CouplingMatrix, n: usize) -> CouplingMatrix {
    CouplingMatrix { c: c.c.as_ref().subcols(0, n).to_owned() }
}

/// Direct kernel `sum_m Y_m C_m C_m^T` over the localized modes `from..`.
fn direct_a(c: &Mat<f64>, y: &[c64], from: usize) -> Mat<c64> {
    let nb = c.nrows();
    let cols = c.ncols() - from;
    let sub = c.as_ref().subcols(from, cols);
    let mut parts = [Mat::<f64>::zeros(nb, nb), Mat::<f64>::zeros(nb, nb)];
    for (k, part) in parts.iter_mut().enumerate() {
        let w = Mat::<f64>::from_fn(nb, cols, |i, m| sub[(i, m)] * if k == 0 { y[from + m].re } else { y[from + m].im });
        matmul(part.as_mut(), Accum::Replace, w.as_ref(), sub.transpose(), 1.0, Par::Seq);
    }
    Mat::from_fn(nb, nb, |i, j| c64::new(parts[0][(i, j)], parts[1][(i, j)]))
}

/// Largest entry error scaled by `sqrt(|d_ii| |d_jj|)`; small off-diagonal
/// entries come from cancellation and have no useful relative error.
fn scaled_error(a: &Mat<c64>, d: &Mat<c64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let g = (d[(i, i)].norm() * d[(j, j)].norm()).sqrt();
            worst = worst.max((a[(i, j)] - d[(i, j)]).norm() / g);
        }
    }
    worst
}

#[test]
fn split_matches_direct_kernel() {
    let (bx, metal, ports) = patch();
    let mask = build_aperture(&bx, &metal, 256, 256).unwrap();
    let modes = enumerate_modes(&bx, 20000);
    let opts = ApertureOptions { parseval_min: 0.0, ..Default::default() };
    let data = compute_coupling(&mask, 60, &modes, &opts).unwrap();
    let nk = 4100;
    let model = MenModel::new(&bx, stack(), modes[..nk].to_vec(), head(&data.coupling, nk), &ports, 1, 100).unwrap();
    for f in [0.5e9, 2e9, 5e9] {
        let a = model.system(f).unwrap().a;
        let y: Vec<c64> = modes.iter().map(|m| total_admittance(m, &stack(), f).y).collect();
        // Same modes: only the asymptotic remainder beyond the dynamic set differs.
        let same = direct_a(&head(&data.coupling, nk).c, &y[..nk], 1);
        let e = scaled_error(&a, &same);
        assert!(e < 1e-3, "f {f}: split vs direct over {nk} modes {e}");
        // Longer series: adds the truncation tail.
        let full = direct_a(&data.coupling.c, &y, 1);
        let e = scaled_error(&a, &full);
        assert!(e < 5e-3, "f {f}: split vs direct over 20000 modes {e}");
    }
}

#[test]
fn dynamic_part_contributes() {
    let (bx, metal, ports) = patch();
    let mask = build_aperture(&bx, &metal, 128, 128).unwrap();
    let modes = enumerate_modes(&bx, 400);
    let opts = ApertureOptions { parseval_min: 0.0, ..Default::default() };
    let data = compute_coupling(&mask, 20, &modes, &opts).unwrap();
    let build = |dynamic: usize| MenModel::new(&bx, stack(), modes.clone(), data.coupling.clone(), &ports, 1, dynamic).unwrap();
    let (none, all) = (build(0), build(400));
    let f = 3e9;
    let a0 = none.system(f).unwrap().a;
    let a1 = all.system(f).unwrap().a;
    let y: Vec<c64> = modes.iter().map(|m| total_admittance(m, &stack(), f).y).collect();
    let d = direct_a(&data.coupling.c, &y, 1);
    let diff = (0..20).map(|i| (a0[(i, i)] - a1[(i, i)]).norm() / a1[(i, i)].norm()).fold(0.0, f64::max);
    assert!(diff > 1e-6, "split made no difference: {diff}");
    let exact = (0..20).flat_map(|i| (0..20).map(move |j| (i, j))).map(|(i, j)| (a1[(i, j)] - d[(i, j)]).norm()).fold(0.0, f64::max);
    let scale = (0..20).map(|i| d[(i, i)].norm()).fold(0.0, f64::max);
    assert!(exact < 1e-10 * scale, "all-dynamic kernel is the direct sum: {exact}");
}
