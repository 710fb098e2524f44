//! `men-sweep`: S-parameter sweep of a boxed planar circuit.

use clap::Parser;
use shielded_men::geometry::{parse_config, CircuitSpec, SweepPlan};
use shielded_men::io::{csv_string, write_csv, write_touchstone};
use shielded_men::sweep::{run_sweep, SweepOptions};
use shielded_men::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "men-sweep", version, about = "Frequency sweep of a shielded planar circuit")]
struct Args {
    /// Circuit description (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    fmin_ghz: Option<f64>,
    #[arg(long)]
    fmax_ghz: Option<f64>,
    #[arg(long)]
    npoints: Option<usize>,
    /// Aperture basis functions.
    #[arg(long)]
    nbasis: Option<usize>,
    /// Box modes summed in asymptotic form only.
    #[arg(long)]
    nstatic: Option<usize>,
    /// Box modes with the exact admittance correction.
    #[arg(long)]
    ndynamic: Option<usize>,
    /// Box modes kept as network terminals.
    #[arg(long)]
    naccessible: Option<usize>,
    /// Raster cells per side.
    #[arg(long)]
    grid: Option<usize>,
    /// Worker threads (default: all hardware threads).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_touchstone: Option<PathBuf>,
    /// Directory for the aperture precompute cache.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, short)]
    verbose: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn load(args: &Args) -> Result<CircuitSpec, Error> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut spec = parse_config(&text)?;
    let nm = &mut spec.numerics;
    if let Some(v) = args.nbasis {
        nm.n_basis = v;
    }
    if let Some(v) = args.nstatic {
        nm.n_kernel_static = v;
    }
    if let Some(v) = args.ndynamic {
        nm.n_kernel_dynamic = v;
    }
    if let Some(v) = args.naccessible {
        nm.n_accessible = v;
    }
    if let Some(v) = args.grid {
        nm.grid_nx = v;
        nm.grid_ny = v;
    }
    if args.fmin_ghz.is_some() || args.fmax_ghz.is_some() || args.npoints.is_some() {
        let base = spec.sweep.clone();
        let pick = |o: Option<f64>, b: Option<f64>, key: &str| {
            o.map(|g| g * 1e9).or(b).ok_or_else(|| Error::Config(format!("no sweep in config; pass --{key}")))
        };
        let start = pick(args.fmin_ghz, base.as_ref().map(|s| s.f_start), "fmin-ghz")?;
        let stop = pick(args.fmax_ghz, base.as_ref().map(|s| s.f_stop), "fmax-ghz")?;
        let n = args
            .npoints
            .or(base.as_ref().map(|s| s.n_points))
            .ok_or_else(|| Error::Config("no sweep in config; pass --npoints".into()))?;
        spec.sweep = Some(SweepPlan::new(start, stop, n)?);
    }
    if spec.sweep.is_none() {
        return Err(Error::Config("no sweep given in the config or on the command line".into()));
    }
    spec.validate()?;
    Ok(spec)
}

fn run(args: &Args) -> Result<(), Error> {
    let spec = load(args)?;
    let opts = SweepOptions { cache_dir: args.cache_dir.clone(), threads: args.threads, ..SweepOptions::default() };
    let r = run_sweep(&spec, &opts)?;
    if let Some(p) = &args.out_csv {
        write_csv(&r, p)?;
    }
    if let Some(p) = &args.out_touchstone {
        write_touchstone(&r, p)?;
    }
    if args.out_csv.is_none() && args.out_touchstone.is_none() {
        print!("{}", csv_string(&r));
    }
    let t = &r.timing;
    let n = t.per_point_ms.len().max(1) as f64;
    let flagged = r.flags.iter().filter(|f| f.near_resonance || f.ill_conditioned).count();
    eprintln!(
        "precompute {:.2} s ({}), sweep of {} points {:.2} s total, {:.1} ms per point, {} flagged",
        t.precompute_s,
        if t.cache_hit { "cached" } else { "computed" },
        r.freqs.len(),
        t.total_s - t.precompute_s,
        t.per_point_ms.iter().sum::<f64>() / n,
        flagged
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_NUMERICAL)
            }
        }
    }
}
