//! Equivalent-baseband MiLAC network: admittance, scattering and
//! beamforming-matrix mappings.
//!
//! Ports `0..N_RF` face the RF chains and ports `N_RF..N_RF+N_T` face the
//! antennas.

use crate::error::{Error, Result};
use crate::linalg::{frob, CMat, C64};

/// Reference impedance in ohms.
pub const DEFAULT_Z0: f64 = 50.0;
/// Largest accepted condition number of `I + Z0 Y`.
pub const MAX_CONDITION: f64 = 1e12;

/// Multiport network described by its admittance matrix (siemens).
#[derive(Debug, Clone, PartialEq)]
pub struct MiLACNetwork {
    pub y: CMat,
    pub z0: f64,
    pub n_rf: usize,
    pub n_tx: usize,
}

impl MiLACNetwork {
    pub fn new(y: CMat, n_rf: usize, n_tx: usize) -> Result<Self> {
        Self::with_reference(y, DEFAULT_Z0, n_rf, n_tx)
    }

    pub fn with_reference(y: CMat, z0: f64, n_rf: usize, n_tx: usize) -> Result<Self> {
        let ports = n_rf + n_tx;
        if y.shape() != (ports, ports) {
            return Err(Error::dims(
                "MiLACNetwork admittance",
                format!("{ports}x{ports}"),
                format!("{}x{}", y.nrows(), y.ncols()),
            ));
        }
        Ok(MiLACNetwork { y, z0, n_rf, n_tx })
    }

    pub fn ports(&self) -> usize {
        self.n_rf + self.n_tx
    }

    pub fn is_reciprocal(&self, tol: f64) -> bool {
        frob(&(&self.y - self.y.transpose())) <= tol * frob(&self.y).max(f64::MIN_POSITIVE)
    }

    /// Purely imaginary admittance, `Y = jB` with `B` real.
    pub fn is_lossless(&self, tol: f64) -> bool {
        let re: f64 = self.y.iter().map(|z| z.re * z.re).sum::<f64>().sqrt();
        re <= tol * frob(&self.y).max(f64::MIN_POSITIVE)
    }

    /// `(I + Z0 Y)^{-1}`, refusing ill-conditioned systems.
    fn resolvent(&self) -> Result<CMat> {
        let a = CMat::identity(self.ports(), self.ports()) + &self.y * C64::new(self.z0, 0.0);
        let inv = a
            .clone()
            .try_inverse()
            .ok_or(Error::IllConditioned(f64::INFINITY))?;
        let cond = spectral_norm(&a) * spectral_norm(&inv);
        if !(cond < MAX_CONDITION) {
            return Err(Error::IllConditioned(cond));
        }
        Ok(inv)
    }
}

/// Port-level scattering matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringMatrix(pub CMat);

/// `Phi = (I + Z0 Y)^{-1} (I - Z0 Y)`.
pub fn admittance_to_scattering(net: &MiLACNetwork) -> Result<ScatteringMatrix> {
    let inv = net.resolvent()?;
    let n = net.ports();
    let minus = CMat::identity(n, n) - &net.y * C64::new(net.z0, 0.0);
    Ok(ScatteringMatrix(inv * minus))
}

/// `P^M = 1/2 [Phi]_{antenna rows, RF columns}`.
pub fn scattering_to_beamforming(phi: &ScatteringMatrix, n_rf: usize, n_tx: usize) -> Result<CMat> {
    let ports = n_rf + n_tx;
    if phi.0.shape() != (ports, ports) {
        return Err(Error::dims(
            "scattering_to_beamforming",
            format!("{ports}x{ports}"),
            format!("{}x{}", phi.0.nrows(), phi.0.ncols()),
        ));
    }
    Ok(phi.0.view((n_rf, 0), (n_tx, n_rf)) * C64::new(0.5, 0.0))
}

/// `P^M = [(I + Z0 Y)^{-1}]_{antenna rows, RF columns}`.
pub fn admittance_to_beamforming(net: &MiLACNetwork) -> Result<CMat> {
    let inv = net.resolvent()?;
    Ok(inv.view((net.n_rf, 0), (net.n_tx, net.n_rf)).into_owned())
}

/// Deviations from symmetry and unitarity of a scattering matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    /// `||Phi - Phi^T||_F / ||Phi||_F`
    pub reciprocity_dev: f64,
    /// `||Phi^H Phi - I||_F / sqrt(ports)`
    pub unitarity_dev: f64,
    pub passed: bool,
}

pub fn check_reciprocal_lossless(phi: &ScatteringMatrix, tol: f64) -> ConstraintReport {
    let m = &phi.0;
    let n = m.nrows();
    let scale = frob(m);
    let reciprocity_dev = if scale > 0.0 {
        frob(&(m - m.transpose())) / scale
    } else {
        0.0
    };
    let unitarity_dev = frob(&(m.adjoint() * m - CMat::identity(n, n))) / (n.max(1) as f64).sqrt();
    ConstraintReport {
        reciprocity_dev,
        unitarity_dev,
        passed: m.is_square() && reciprocity_dev <= tol && unitarity_dev <= tol,
    }
}

/// Largest singular value.
pub fn spectral_norm(x: &CMat) -> f64 {
    crate::linalg::spectral_norm(x)
}
