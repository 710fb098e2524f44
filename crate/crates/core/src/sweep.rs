//! Precompute once, then solve every frequency point in parallel.

use crate::aperture::{cache_key, compute_coupling, load_cached, store_cached, ApertureData, ApertureOptions};
use crate::boxmodes::enumerate_modes;
use crate::error::{Error, Result};
use crate::geometry::{build_aperture, CircuitSpec, PortRole};
use crate::men::{z_to_s, MenModel};
use faer::{c64, Mat};
use rayon::prelude::*;
use std::path::PathBuf;
use std::time::Instant;

/// Run-time controls that do not change the results.
#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub cache_dir: Option<PathBuf>,
    /// Worker threads; `None` uses every hardware thread.
    pub threads: Option<usize>,
    pub z_ref: f64,
    pub aperture: ApertureOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { cache_dir: None, threads: None, z_ref: 50.0, aperture: ApertureOptions::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PointFlags {
    pub near_resonance: bool,
    pub ill_conditioned: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Timing {
    pub precompute_s: f64,
    pub per_point_ms: Vec<f64>,
    pub total_s: f64,
    pub cache_hit: bool,
}

/// One S matrix per frequency, over the external ports in id order.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub freqs: Vec<f64>,
    pub port_ids: Vec<u32>,
    pub s: Vec<Mat<c64>>,
    pub flags: Vec<PointFlags>,
    pub timing: Timing,
}

/// The frequency-independent model of a circuit.
#[derive(Clone, Debug)]
pub struct Precomputed {
    pub model: MenModel,
    /// Indices into `spec.ports` of the external ports, by ascending id.
    pub external: Vec<usize>,
    pub port_ids: Vec<u32>,
    pub seconds: f64,
    pub cache_hit: bool,
}

/// Aperture modes, coupling matrix and static kernel; the coupling is read
/// from and written to `opts.cache_dir` when given.
pub fn precompute(spec: &CircuitSpec, opts: &SweepOptions) -> Result<Precomputed> {
    spec.validate()?;
    let t0 = Instant::now();
    let nm = &spec.numerics;
    let box_modes = enumerate_modes(&spec.bx, nm.n_kernel());
    let mask = build_aperture(&spec.bx, &spec.metal, nm.grid_nx, nm.grid_ny)?;
    let aopts = ApertureOptions { parseval_min: nm.parseval_min, ..opts.aperture.clone() };
    let key = cache_key(&mask, nm.n_basis, &box_modes, aopts.tol);
    let cached = opts.cache_dir.as_deref().and_then(|d| load_cached(d, &key));
    let cache_hit = cached.is_some();
    let data: ApertureData = match cached {
        Some(d) => {
            d.coupling.check_parseval(nm.parseval_min)?;
            d
        }
        None => {
            log::info!("aperture precompute: grid {}x{}, {} modes", nm.grid_nx, nm.grid_ny, nm.n_basis);
            let d = compute_coupling(&mask, nm.n_basis, &box_modes, &aopts)?;
            if let Some(dir) = &opts.cache_dir {
                store_cached(dir, &key, &d)?;
            }
            d
        }
    };
    let model = MenModel::new(
        &spec.bx,
        spec.stack.clone(),
        box_modes,
        data.coupling,
        &spec.ports,
        nm.n_accessible,
        nm.n_kernel_dynamic,
    )?;
    let mut external: Vec<usize> = (0..spec.ports.len()).filter(|&i| spec.ports[i].role == PortRole::External).collect();
    external.sort_by_key(|&i| spec.ports[i].id);
    let port_ids = external.iter().map(|&i| spec.ports[i].id).collect();
    let seconds = t0.elapsed().as_secs_f64();
    log::info!("precompute done in {seconds:.2} s (cache {})", if cache_hit { "hit" } else { "miss" });
    Ok(Precomputed { model, external, port_ids, seconds, cache_hit })
}

/// S matrix over the external ports at `f`; internal ports stay open.
pub fn solve_point(pre: &Precomputed, f: f64, z_ref: f64) -> Result<(Mat<c64>, PointFlags)> {
    let sol = pre.model.solve_at(f)?;
    let e = &pre.external;
    let z = Mat::from_fn(e.len(), e.len(), |i, j| sol.z_ports[(e[i], e[j])]);
    let s = z_to_s(&z, z_ref).map_err(|err| err.at_frequency(f))?;
    Ok((s, PointFlags { near_resonance: sol.near_resonance, ill_conditioned: sol.ill_conditioned }))
}

/// Sweeps the frequencies of `pre` in parallel; results keep frequency order.
pub fn sweep_with(pre: &Precomputed, freqs: &[f64], opts: &SweepOptions) -> Result<SweepResult> {
    let t0 = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let points: Vec<(Mat<c64>, PointFlags, f64)> = pool.install(|| {
        freqs
            .par_iter()
            .map(|&f| {
                let t = Instant::now();
                let (s, flags) = solve_point(pre, f, opts.z_ref)?;
                Ok((s, flags, t.elapsed().as_secs_f64() * 1e3))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let n_flagged = points.iter().filter(|p| p.1 != PointFlags::default()).count();
    if n_flagged > 0 {
        log::warn!("{n_flagged} of {} frequency points flagged", points.len());
    }
    let mut timing = Timing { precompute_s: pre.seconds, cache_hit: pre.cache_hit, ..Timing::default() };
    let mut s = Vec::with_capacity(points.len());
    let mut flags = Vec::with_capacity(points.len());
    for (m, fl, ms) in points {
        s.push(m);
        flags.push(fl);
        timing.per_point_ms.push(ms);
    }
    timing.total_s = pre.seconds + t0.elapsed().as_secs_f64();
    Ok(SweepResult { freqs: freqs.to_vec(), port_ids: pre.port_ids.clone(), s, flags, timing })
}

/// Precompute plus the configured sweep.
pub fn run_sweep(spec: &CircuitSpec, opts: &SweepOptions) -> Result<SweepResult> {
    let plan = spec.sweep.as_ref().ok_or_else(|| Error::Config("no [sweep] section".into()))?;
    let pre = precompute(spec, opts)?;
    sweep_with(&pre, &plan.frequencies(), opts)
}
