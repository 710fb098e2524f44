use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
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
n_points = 6
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_men-sweep")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = run(&["--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let bad = write(dir.path(), "bad.toml", &CONFIG.replace("eps_r = 2.33", "eps_r = 2.33\nepsilon = 1.0"));
    let o = run(&["--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon"), "{}", stderr(&o));

    let on_metal = write(dir.path(), "metal.toml", &CONFIG.replace("x_mm = 4.375", "x_mm = 2.0"));
    let o = run(&["--config", &on_metal]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("port 1"), "{}", stderr(&o));

    let strict = write(dir.path(), "strict.toml", &CONFIG.replace("parseval_min = 0.5", "parseval_min = 0.999"));
    let o = run(&["--config", &strict]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("Parseval"));

    let good = write(dir.path(), "good.toml", CONFIG);
    let o = run(&["--config", &good, "--npoints", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn one_point_csv_and_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let mut outs = Vec::new();
    for (k, threads) in ["1", "2"].iter().enumerate() {
        let csv = dir.path().join(format!("o{k}.csv"));
        let s2p = dir.path().join(format!("o{k}.s2p"));
        let o = run(&[
            "--config",
            &cfg,
            "--threads",
            threads,
            "--out-csv",
            csv.to_str().unwrap(),
            "--out-touchstone",
            s2p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outs.push((std::fs::read(&csv).unwrap(), std::fs::read(&s2p).unwrap()));
    }
    assert_eq!(outs[0], outs[1]);
    let csv = String::from_utf8(outs[0].0.clone()).unwrap();
    assert_eq!(csv.lines().count(), 7);
    let s2p = String::from_utf8(outs[0].1.clone()).unwrap();
    assert!(s2p.lines().any(|l| l == "# GHz S RI R 50"));

    let o = run(&["--config", &cfg, "--fmin-ghz", "3.0", "--fmax-ghz", "3.0", "--npoints", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 2);
    assert!(stdout.lines().nth(1).unwrap().starts_with("3,"));
}

#[test]
fn cache_hit_is_logged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let cache = dir.path().join("cache");
    let args = ["--config", &cfg, "--npoints", "2", "--cache-dir", cache.to_str().unwrap(), "--verbose"];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success() && second.status.success());
    assert!(stderr(&first).contains("cache miss"), "{}", stderr(&first));
    assert!(stderr(&second).contains("cache hit"), "{}", stderr(&second));
    assert_eq!(first.stdout, second.stdout);
}
