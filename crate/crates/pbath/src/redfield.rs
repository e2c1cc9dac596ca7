//! Coefficients of the conventional weak-coupling (Redfield) master
//! equation for the same oscillator coupled directly to the photonic bath,
//! in the same phase-space convention as the marginal theory.
//!
//! These are computed from their own integral definitions — the golden-ratio
//! relation to the marginal coefficients must emerge, it is never assumed.

use nalgebra::Matrix2;

use crate::bath::{coefficient_set, BathSpec};
use crate::effective::{steady_kernel_matrices, EffectiveModel};
use crate::{Error, Result};

use std::f64::consts::PI;

/// Phase-space coefficients of the conventional weak-coupling equation.
#[derive(Debug, Clone)]
pub struct RedfieldModel {
    pub beta_hw0: f64,
    pub xi_c: f64,
    pub nu_bar: f64,
    pub n0: f64,
    pub f1: f64,
    pub f2: f64,
    pub d1: f64,
    pub d2: f64,
    pub f_rf: Matrix2<f64>,
    pub d_rf: Matrix2<f64>,
    /// Frequency-shift scalar `PV int 2 xi^4/(1-xi^2)`.
    pub s_plus_tilde: f64,
    /// Thermal shift scalar `PV int 2 xi^3 (2N+1)/(1-xi^2)`.
    pub s_minus: f64,
}

impl RedfieldModel {
    pub fn relaxation_time(&self) -> f64 {
        let rate = self.nu_bar * self.f1;
        if rate > 0.0 {
            1.0 / rate
        } else {
            f64::INFINITY
        }
    }

    pub fn steady_kernel(&self) -> Result<Matrix2<f64>> {
        steady_kernel_matrices(&self.f_rf, &self.d_rf)
    }
}

/// Assemble the weak-coupling coefficients.
///
/// The damping rates down/up are `(2/3) nu (N0+1)` and `(2/3) nu N0`; their
/// difference fixes `f1`, their diffusion combines with the counter-rotating
/// terms into `d1` and the structural zero of `D_11`. The off-diagonal
/// entries come from the shift scalars.
pub fn redfield_coefficients(spec: &BathSpec) -> Result<RedfieldModel> {
    spec.validate()?;
    if spec.xi_c <= 1.0 {
        return Err(Error::InvalidSpec(
            "weak-coupling coefficients need xi_c > 1".into(),
        ));
    }
    let coeffs = coefficient_set(spec)?;
    let n0 = spec.n0();

    // drift: rotating part (gamma_down - gamma_up)/2 twice on the diagonal,
    // counter-rotating part moves it all onto the lower-right entry
    let f1 = (2.0 / 3.0) * ((n0 + 1.0) - n0);
    // shift Hamiltonian contributes 2 s to the (1,0) entry, s = S+~/(3 pi)
    let f2 = 2.0 * coeffs.s_plus_tilde / (3.0 * PI);

    // diffusion: isotropic N0/6 from the rotating part, +-N0/6 from the
    // counter-rotating part -> D_11 = 0, D_22 = nu N0/3
    let d1 = n0 / 6.0 + n0 / 6.0;
    // off-diagonal: -S+~/(12 pi) from the shift, +S-/(12 pi) thermal
    let d2 = (coeffs.s_minus - coeffs.s_plus_tilde) / (12.0 * PI);

    let nu = spec.nu_bar;
    let f_rf = Matrix2::new(0.0, -1.0, 1.0 + nu * f2, nu * f1);
    let d_rf = Matrix2::new(0.0, nu * d2, nu * d2, nu * d1);
    Ok(RedfieldModel {
        beta_hw0: spec.beta_hw0,
        xi_c: spec.xi_c,
        nu_bar: nu,
        n0,
        f1,
        f2,
        d1,
        d2,
        f_rf,
        d_rf,
        s_plus_tilde: coeffs.s_plus_tilde,
        s_minus: coeffs.s_minus,
    })
}

fn mat2(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Side-by-side comparison of the marginal and weak-coupling theories.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonReport {
    pub thermostat: String,
    pub beta_hw0: f64,
    pub xi_c: f64,
    pub nu_bar: f64,
    pub n0: f64,
    pub r_b: f64,
    pub marginal: [f64; 4],
    pub redfield: [f64; 4],
    /// `(f1/f1_rf, f2/f2_rf, d1/d1_rf, d2/d2_rf)`.
    pub ratios: [f64; 4],
    pub expected_ratios: [f64; 4],
    pub steady_kernel_marginal: [[f64; 2]; 2],
    pub steady_kernel_redfield: [[f64; 2]; 2],
    pub tau_s_marginal: f64,
    pub tau_s_redfield: f64,
    /// First-order steady-state corrections `nu C` of each theory and their
    /// difference.
    pub correction_marginal: f64,
    pub correction_redfield: f64,
    pub correction_difference: f64,
}

impl ComparisonReport {
    pub fn human_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "coefficient comparison (thermostat = {}, beta = {}, xi_c = {}, nu = {})\n",
            self.thermostat, self.beta_hw0, self.xi_c, self.nu_bar
        ));
        s.push_str("  quantity      marginal         weak-coupling    ratio        expected\n");
        for (k, name) in ["f1", "f2", "d1", "d2"].iter().enumerate() {
            s.push_str(&format!(
                "  {:<10} {:>16.12} {:>16.12} {:>12.9} {:>12.9}\n",
                name, self.marginal[k], self.redfield[k], self.ratios[k], self.expected_ratios[k]
            ));
        }
        s.push_str(&format!(
            "  tau_S       {:>16.6} {:>16.6}\n",
            self.tau_s_marginal, self.tau_s_redfield
        ));
        s.push_str(&format!(
            "  steady A    [[{:.9}, {:.9}], [{:.9}, {:.9}]]  vs  [[{:.9}, {:.9}], [{:.9}, {:.9}]]\n",
            self.steady_kernel_marginal[0][0],
            self.steady_kernel_marginal[0][1],
            self.steady_kernel_marginal[1][0],
            self.steady_kernel_marginal[1][1],
            self.steady_kernel_redfield[0][0],
            self.steady_kernel_redfield[0][1],
            self.steady_kernel_redfield[1][0],
            self.steady_kernel_redfield[1][1],
        ));
        s.push_str(&format!(
            "  O(nu) steady correction: {:.9} vs {:.9} (difference {:.9})\n",
            self.correction_marginal, self.correction_redfield, self.correction_difference
        ));
        s
    }
}

/// Compare a marginal model with the weak-coupling model built from the
/// same bath specification.
pub fn compare(model: &EffectiveModel, rf: &RedfieldModel) -> Result<ComparisonReport> {
    if model.beta_hw0 != rf.beta_hw0 || model.xi_c != rf.xi_c || model.nu_bar != rf.nu_bar {
        return Err(Error::SpecMismatch(format!(
            "(beta, xi_c, nu) = ({}, {}, {}) vs ({}, {}, {})",
            model.beta_hw0, model.xi_c, model.nu_bar, rf.beta_hw0, rf.xi_c, rf.nu_bar
        )));
    }
    let ratios = [
        model.f1 / rf.f1,
        model.f2 / rf.f2,
        model.d1 / rf.d1,
        model.d2 / rf.d2,
    ];
    let expected = [model.r_b / 4.0, 0.25, model.r_b / 4.0, 0.25];
    let a_marg = model.steady_kernel()?;
    let a_rf = rf.steady_kernel()?;
    let c_marg = model.nu_bar * model.c;
    let c_rf = model.nu_bar * (rf.f2 - 4.0 * rf.d2 / rf.n0);
    Ok(ComparisonReport {
        thermostat: model.thermostat.label().to_string(),
        beta_hw0: model.beta_hw0,
        xi_c: model.xi_c,
        nu_bar: model.nu_bar,
        n0: model.n0,
        r_b: model.r_b,
        marginal: [model.f1, model.f2, model.d1, model.d2],
        redfield: [rf.f1, rf.f2, rf.d1, rf.d2],
        ratios,
        expected_ratios: expected,
        steady_kernel_marginal: mat2(&a_marg),
        steady_kernel_redfield: mat2(&a_rf),
        tau_s_marginal: model.relaxation_time(),
        tau_s_redfield: rf.relaxation_time(),
        correction_marginal: c_marg,
        correction_redfield: c_rf,
        correction_difference: c_marg - c_rf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::Thermostat;
    use crate::effective::limit_coefficients;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lb_factor_four() {
        let spec = BathSpec::new(Thermostat::Lb, 1.0, 2.0, 0.1);
        let rf = redfield_coefficients(&spec).unwrap();
        assert_abs_diff_eq!(rf.f1, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rf.d1, rf.n0 / 3.0, epsilon = 1e-15);
        let marg = limit_coefficients(&spec).unwrap();
        let rep = compare(&marg, &rf).unwrap();
        for (r, e) in rep.ratios.iter().zip(rep.expected_ratios.iter()) {
            assert_abs_diff_eq!(r, e, epsilon = 1e-10);
        }
    }

    #[test]
    fn rf_thermostat_ratios_carry_r_b() {
        let spec = BathSpec::new(Thermostat::Rf, 1.0, 2.0, 0.1);
        let marg = limit_coefficients(&spec).unwrap();
        let rf = redfield_coefficients(&spec).unwrap();
        let rep = compare(&marg, &rf).unwrap();
        assert_abs_diff_eq!(rep.ratios[0], marg.r_b / 4.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.ratios[1], 0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.ratios[2], marg.r_b / 4.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.ratios[3], 0.25, epsilon = 1e-10);
        // relaxation ratio 4/R_B
        assert_abs_diff_eq!(
            rep.tau_s_marginal / rep.tau_s_redfield,
            4.0 / marg.r_b,
            epsilon = 1e-9
        );
    }

    #[test]
    fn equilibrium_ratio_shared() {
        for beta in [0.5, 1.0, 2.0] {
            let spec = BathSpec::new(Thermostat::Lb, beta, 2.0, 0.1);
            let rf = redfield_coefficients(&spec).unwrap();
            assert_abs_diff_eq!(rf.f1 / rf.d1, 2.0 / rf.n0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mismatched_specs_rejected() {
        let marg = limit_coefficients(&BathSpec::new(Thermostat::Lb, 1.0, 2.0, 0.1)).unwrap();
        let rf = redfield_coefficients(&BathSpec::new(Thermostat::Lb, 2.0, 2.0, 0.1)).unwrap();
        assert!(matches!(compare(&marg, &rf), Err(Error::SpecMismatch(_))));
    }

    #[test]
    fn structural_zero_pattern() {
        let rf = redfield_coefficients(&BathSpec::new(Thermostat::Lb, 1.0, 2.0, 0.1)).unwrap();
        assert_eq!(rf.f_rf[(0, 0)], 0.0);
        assert_eq!(rf.f_rf[(0, 1)], -1.0);
        assert_eq!(rf.d_rf[(0, 0)], 0.0);
        assert_eq!(rf.d_rf[(0, 1)], rf.d_rf[(1, 0)]);
    }
}
