//! Moment-method solution of the aperture integral equation and the
//! multimode equivalent network built from it.
//!
//! Box modes `0..n_accessible` stay explicit as network terminals; all
//! others up to the kernel size are localized and summed into the kernel,
//! the first `m_dynamic` of them exactly and the rest through their
//! frequency-factorized asymptotic form.

mod kernel;
mod network;
mod system;

pub use kernel::{assemble_static, KernelSplit};
pub use network::{cascade, impedance_matrix, reduce_to_ports, z_to_s, GeneralizedZ, Section};
pub use system::{assemble_system, solve, MomSystem, Solved, COND_LIMIT};

use crate::aperture::CouplingMatrix;
use crate::boxmodes::{pulse_overlap, BoxMode};
use crate::error::{Error, Result};
use crate::geometry::{Port, ShieldBox};
use crate::media::{asymptotic_coeffs, total_admittance, AsymptoticCoeffs, LayerStack};
use faer::{c64, Mat};

/// Port coupling columns `C_{i,0} = sum_m C_{i,m} overlap(m, port)`.
pub fn port_coupling(c: &CouplingMatrix, box_modes: &[BoxMode<f64>], bx: &ShieldBox<f64>, ports: &[Port<f64>]) -> Mat<f64> {
    let ov: Vec<Vec<f64>> = ports.iter().map(|p| box_modes.iter().map(|m| pulse_overlap(m, bx, p)).collect()).collect();
    Mat::from_fn(c.nb(), ports.len(), |i, p| {
        (0..box_modes.len().min(c.nk())).map(|m| c.c[(i, m)] * ov[p][m]).sum()
    })
}

/// Everything frequency-independent for one discontinuity.
#[derive(Clone, Debug)]
pub struct MenModel {
    pub stack: LayerStack<f64>,
    pub box_modes: Vec<BoxMode<f64>>,
    pub coupling: CouplingMatrix,
    pub port_cols: Mat<f64>,
    pub coeffs: Vec<AsymptoticCoeffs<f64>>,
    pub split: KernelSplit,
}

/// One frequency point.
#[derive(Clone, Debug)]
pub struct MenSolution {
    pub freq: f64,
    pub alpha: Mat<c64>,
    pub z: GeneralizedZ,
    pub z_ports: Mat<c64>,
    pub near_resonance: bool,
    pub ill_conditioned: bool,
    pub cond_estimate: f64,
}

impl MenModel {
    /// `box_modes` fixes the kernel size; it must match the columns of `C`.
    pub fn new(
        bx: &ShieldBox<f64>,
        stack: LayerStack<f64>,
        box_modes: Vec<BoxMode<f64>>,
        coupling: CouplingMatrix,
        ports: &[Port<f64>],
        n_accessible: usize,
        m_dynamic: usize,
    ) -> Result<Self> {
        if coupling.nk() != box_modes.len() {
            return Err(Error::Config(format!(
                "coupling has {} box-mode columns for {} box modes",
                coupling.nk(),
                box_modes.len()
            )));
        }
        stack.validate()?;
        let coeffs: Vec<_> = box_modes.iter().map(|m| asymptotic_coeffs(m, &stack)).collect();
        let split = assemble_static(&coupling, &coeffs, n_accessible, box_modes.len(), m_dynamic)?;
        let port_cols = port_coupling(&coupling, &box_modes, bx, ports);
        Ok(Self { stack, box_modes, coupling, port_cols, coeffs, split })
    }

    pub fn system(&self, f: f64) -> Result<MomSystem> {
        assemble_system(&self.split, &self.coupling, &self.port_cols, &self.box_modes, &self.coeffs, &self.stack, f)
    }

    /// Generalized Z and the port matrix with the accessible modes loaded by
    /// their total modal admittance.
    pub fn solve_at(&self, f: f64) -> Result<MenSolution> {
        let sys = self.system(f)?;
        let sol = solve(&sys).map_err(|e| e.at_frequency(f))?;
        let z = impedance_matrix(&sol.alpha, &sys.rhs, sys.n_ports);
        let mut near = sys.near_resonance;
        let loads: Vec<c64> = (0..self.split.n_accessible)
            .map(|m| {
                let y = total_admittance(&self.box_modes[m], &self.stack, f);
                near |= y.near_resonance;
                y.y
            })
            .collect();
        let z_ports = reduce_to_ports(&z, &loads).map_err(|e| e.at_frequency(f))?;
        Ok(MenSolution {
            freq: f,
            alpha: sol.alpha,
            z,
            z_ports,
            near_resonance: near,
            ill_conditioned: sol.ill_conditioned,
            cond_estimate: sol.cond_estimate,
        })
    }
}
