//! Steady-state density matrix in a truncated Fock basis: the thermal state
//! plus the first-order correction in the coupling measure.

use nalgebra::DMatrix;

use crate::effective::EffectiveModel;
use crate::{Error, Result};

/// Density matrix (or correction) in the number basis. Only real entries
/// arise here.
#[derive(Debug, Clone)]
pub struct FockDensity {
    /// Truncation level `n_max`; the matrix is `(n_max+1) x (n_max+1)`.
    pub n_max: usize,
    /// 0 for the thermal state, 1 for the first-order correction.
    pub order: u8,
    pub elements: DMatrix<f64>,
}

impl FockDensity {
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn trace(&self) -> f64 {
        self.elements.diagonal().sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.elements.diagonal().iter().copied().collect()
    }

    /// Sparse JSON form `{dim, entries: [[i, j, value], ...]}` listing
    /// nonzero entries in row-major order.
    pub fn to_sparse_json(&self) -> serde_json::Value {
        let mut entries = Vec::new();
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                let v = self.elements[(i, j)];
                if v != 0.0 {
                    entries.push(serde_json::json!([i, j, v]));
                }
            }
        }
        serde_json::json!({
            "dim": n,
            "order": self.order,
            "entries": entries,
        })
    }
}

/// Truncation rule: the geometric tail drops below 1e-9 around
/// `20/beta + 20`.
pub fn suggested_n_max(beta_hw0: f64) -> usize {
    (20.0 / beta_hw0 + 20.0).ceil() as usize
}

/// Thermal state: `p_n = (1 - e^{-beta}) e^{-beta n}`.
///
/// The zero-point factor of the Hamiltonian cancels in the normalisation.
pub fn rho_zero(beta_hw0: f64, n_max: usize) -> FockDensity {
    assert!(beta_hw0 > 0.0, "rho_zero requires beta_hw0 > 0");
    assert!(n_max >= 1);
    let x = (-beta_hw0).exp();
    let dim = n_max + 1;
    let mut m = DMatrix::zeros(dim, dim);
    for n in 0..dim {
        m[(n, n)] = (1.0 - x) * x.powi(n as i32);
    }
    FockDensity {
        n_max,
        order: 0,
        elements: m,
    }
}

fn lowering(dim: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = (n as f64).sqrt();
    }
    a
}

/// First-order steady-state correction, built from exact ladder-operator
/// matrices:
///
/// `rho1 = -rho0 (C nu / 4 N0) e^{-2 beta}
///         (a a + e^{2 beta} ad ad + 2 e^{beta} (ad a + 1) - 2 N0 e^{2 beta})`.
///
/// The operator product is symmetrised, which makes hermiticity exact in
/// floating point. The normalisation is fixed by the inverse
/// phase-space-moment identity (see the index-sum oracle in the tests and
/// the quadrature cross-check in the acceptance suite); it makes
/// `Tr rho1 = 0` up to the truncation tail.
pub fn rho_one(model: &EffectiveModel, n_max: usize) -> Result<FockDensity> {
    let beta = model.beta_hw0;
    let n0 = model.n0;
    if n0 <= 1e-6 {
        return Err(Error::InvalidSpec(format!(
            "first-order correction needs N0 > 1e-6 (C diverges as 1/N0); got N0 = {n0}"
        )));
    }
    let needed = suggested_n_max(beta);
    if n_max < needed {
        return Err(Error::TruncationTooSmall { n_max, needed });
    }
    let dim = n_max + 1;
    let rho0 = rho_zero(beta, n_max);
    let a = lowering(dim);
    let ad = a.transpose();
    let eb = beta.exp();
    let mut op = &a * &a + (&ad * &ad) * (eb * eb) + (&ad * &a) * (2.0 * eb);
    for i in 0..dim {
        op[(i, i)] += 2.0 * eb - 2.0 * n0 * eb * eb;
    }
    let prefactor = -model.c * model.nu_bar / (4.0 * n0) * (-2.0 * beta).exp();
    let raw = &rho0.elements * op * prefactor;
    let sym = (&raw + raw.transpose()) * 0.5;
    Ok(FockDensity {
        n_max,
        order: 1,
        elements: sym,
    })
}

/// Index-shifted-sum route to the same correction; test oracle for the
/// ladder-matrix construction.
pub fn rho_one_index_sum(model: &EffectiveModel, n_max: usize) -> FockDensity {
    let beta = model.beta_hw0;
    let n0 = model.n0;
    let x = (-beta).exp();
    let dim = n_max + 1;
    let pref = model.c * model.nu_bar / n0;
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let mf = i as f64;
        if i + 2 < dim {
            let v = -pref / (4.0 * n0) * ((mf + 2.0) * (mf + 1.0)).sqrt() * x.powi(i as i32 + 3);
            m[(i, i + 2)] = v;
            m[(i + 2, i)] = v;
        }
        m[(i, i)] =
            -pref * 0.5 * ((mf + 1.0) / n0 * x.powi(i as i32 + 2) - x.powi(i as i32 + 1));
    }
    FockDensity {
        n_max,
        order: 1,
        elements: m,
    }
}
