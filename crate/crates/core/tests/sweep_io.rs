use faer::c64;
use shielded_men::aperture::{analytic_rect_aperture, CouplingMatrix};
use shielded_men::boxmodes::enumerate_modes;
use shielded_men::geometry::{parse_config, CircuitSpec, Rect, ShieldBox};
use shielded_men::io::{csv_string, touchstone_string, write_csv, write_touchstone, DB_FLOOR};
use shielded_men::media::{Layer, LayerStack};
use shielded_men::men::MenModel;
use shielded_men::sweep::{precompute, run_sweep, sweep_with, SweepOptions, SweepResult};
use std::time::Instant;

/// Floating strip fed across 4-cell gaps from wall-tied lines.
fn two_port(n_points: usize) -> CircuitSpec {
    let text = format!(
        r#"
[box]
a_mm = 20.0
b_mm = 20.0
[[layers_below]]
eps_r = 2.33
t_mm = 1.57
[[layers_above]]
eps_r = 1.0
t_mm = 9.83
[[metal]]
polygon = [[0.0, 9.375], [3.75, 9.375], [3.75, 10.625], [0.0, 10.625]]
[[metal]]
polygon = [[5.0, 9.375], [15.0, 9.375], [15.0, 10.625], [5.0, 10.625]]
[[metal]]
polygon = [[16.25, 9.375], [20.0, 9.375], [20.0, 10.625], [16.25, 10.625]]
[[ports]]
id = 1
x_mm = 4.375
y_mm = 10.0
width_mm = 1.25
orientation = "x"
[[ports]]
id = 2
x_mm = 15.625
y_mm = 10.0
width_mm = 1.25
orientation = "x"
[numerics]
n_basis = 12
grid_nx = 64
grid_ny = 64
n_kernel_static = 300
n_kernel_dynamic = 60
parseval_min = 0.5
[sweep]
f_start_ghz = 2.0
f_stop_ghz = 8.0
n_points = {n_points}
"#
    );
    parse_config(&text).unwrap()
}

fn sweep(n_points: usize, threads: usize) -> SweepResult {
    run_sweep(&two_port(n_points), &SweepOptions { threads: Some(threads), ..Default::default() }).unwrap()
}

#[test]
fn single_point_csv_has_one_row() {
    let r = sweep(1, 1);
    assert_eq!(r.s.len(), 1);
    let csv = csv_string(&r);
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("freq_ghz,S11_db,S11_deg,S12_db,S12_deg,S21_db,S21_deg,S22_db,S22_deg,"));
}

#[test]
fn csv_matches_raw_complex() {
    let r = sweep(7, 2);
    let csv = csv_string(&r);
    for (k, line) in csv.lines().skip(1).enumerate() {
        let v: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
        assert!((v[0] * 1e9 - r.freqs[k]).abs() <= 1e-6 * r.freqs[k]);
        for i in 0..2 {
            for j in 0..2 {
                let s = r.s[k][(i, j)];
                let (db, deg) = (v[1 + 2 * (2 * i + j)], v[2 + 2 * (2 * i + j)]);
                let mag = 10f64.powf(db / 20.0);
                assert!((mag - s.norm()).abs() < 1e-6, "|S{}{}|", i + 1, j + 1);
                assert!(db >= DB_FLOOR);
                let want = s.im.atan2(s.re).to_degrees();
                assert!((deg - want).abs() < 1e-6);
            }
        }
        assert!(v[9] == 0.0 || v[9] == 1.0);
        assert!(v[10] == 0.0 || v[10] == 1.0);
    }
}

/// Minimal independent reader for version-1 RI Touchstone data.
fn read_touchstone(text: &str, ports: usize) -> (String, Vec<(f64, Vec<c64>)>) {
    let mut option = String::new();
    let mut nums = Vec::new();
    for line in text.lines() {
        let line = line.split('!').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            option = line.to_string();
            continue;
        }
        nums.extend(line.split_whitespace().map(|t| t.parse::<f64>().unwrap()));
    }
    let per = 1 + 2 * ports * ports;
    assert_eq!(nums.len() % per, 0);
    let rows = nums
        .chunks(per)
        .map(|c| (c[0], c[1..].chunks(2).map(|p| c64::new(p[0], p[1])).collect()))
        .collect();
    (option, rows)
}

#[test]
fn touchstone_reads_back_exactly() {
    let r = sweep(5, 1);
    let text = touchstone_string(&r).unwrap();
    assert!(text.lines().any(|l| l == "# GHz S RI R 50"));
    let (option, rows) = read_touchstone(&text, 2);
    assert_eq!(option, "# GHz S RI R 50");
    assert_eq!(rows.len(), r.freqs.len());
    for (k, (f, s)) in rows.iter().enumerate() {
        assert_eq!(*f, r.freqs[k] * 1e-9);
        // Two-port order: S11 S21 S12 S22.
        let want = [r.s[k][(0, 0)], r.s[k][(1, 0)], r.s[k][(0, 1)], r.s[k][(1, 1)]];
        assert_eq!(s.as_slice(), &want);
    }
    assert!(rows.windows(2).all(|w| w[0].0 < w[1].0));
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (run, threads) in [(0, 1), (1, 3)] {
        let r = sweep(9, threads);
        let (c, t) = (dir.path().join(format!("r{run}.csv")), dir.path().join(format!("r{run}.s2p")));
        write_csv(&r, &c).unwrap();
        write_touchstone(&r, &t).unwrap();
        files.push((std::fs::read(c).unwrap(), std::fs::read(t).unwrap()));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn precompute_is_cached_per_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SweepOptions { cache_dir: Some(dir.path().to_path_buf()), threads: Some(1), ..Default::default() };
    let spec = two_port(3);
    let first = precompute(&spec, &opts).unwrap();
    let second = precompute(&spec, &opts).unwrap();
    assert!(!first.cache_hit && second.cache_hit);
    let freqs = spec.sweep.as_ref().unwrap().frequencies();
    let a = sweep_with(&first, &freqs, &opts).unwrap();
    let b = sweep_with(&second, &freqs, &opts).unwrap();
    assert_eq!(a.s, b.s);
    // A different geometry misses.
    let mut moved = spec.clone();
    moved.ports[0].width *= 0.5;
    moved.numerics.grid_nx = 80;
    moved.numerics.grid_ny = 80;
    assert!(!precompute(&moved, &opts).unwrap().cache_hit);
}

#[test]
fn per_point_cost_independent_of_kernel_size() {
    let bx = ShieldBox::new(0.0675, 0.0675).unwrap();
    let rect = Rect { x0: 0.01, y0: 0.02, x1: 0.05, y1: 0.045 };
    let modes = enumerate_modes(&bx, 4000);
    let ap = analytic_rect_aperture(&bx, &rect, 300, &modes).unwrap();
    let c = CouplingMatrix { c: faer::Mat::from_fn(ap.len(), modes.len(), |i, m| ap[i].coeff_row[m]) };
    let stack = LayerStack::new(vec![Layer::new(2.33, 0.0, 1.57e-3)], vec![Layer::new(1.0, 0.0, 9.83e-3)]);
    let model = |nk: usize| {
        let sub = CouplingMatrix { c: c.c.as_ref().subcols(0, nk).to_owned() };
        MenModel::new(&bx, stack.clone(), modes[..nk].to_vec(), sub, &[], 1, 100).unwrap()
    };
    let (small, large) = (model(1000), model(4000));
    let mut t = [Vec::new(), Vec::new()];
    // Interleaved so background load hits both alike.
    for k in 0..15 {
        let f = 1e9 + 0.2e9 * k as f64;
        for (slot, m) in [&small, &large].into_iter().enumerate() {
            let t0 = Instant::now();
            m.solve_at(f).unwrap();
            t[slot].push(t0.elapsed().as_secs_f64());
        }
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (a, b) = (median(&mut t[0]), median(&mut t[1]));
    let ratio = a.max(b) / a.min(b);
    assert!(ratio < 1.2, "per-point {a:.4} s vs {b:.4} s");
}
