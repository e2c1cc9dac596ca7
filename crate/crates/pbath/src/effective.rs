//! Continuum-limit coefficients of the marginal phase-space equation, the
//! effective 2x2 drift/diffusion matrices, and the Gaussian kernels they
//! generate.
//!
//! Conventions: the coefficients `f1, f2, d1, d2` exclude the coupling
//! measure `nu_bar`; it enters once, in the assembled matrices
//! `F_eff = [[0, -1], [1 + nu f2, nu f1]]` and
//! `D_eff = [[0, nu d2], [nu d2, nu d1]]`.

use nalgebra::Matrix2;

use crate::bath::{bose_occupation, coefficient_set, BathSpec, Thermostat, COEFF_TOL};
use crate::quadrature::{integrate, pv_integrate, Tolerance};
use crate::{Error, Result};

use std::f64::consts::PI;

/// Effective marginal model: scalar coefficients plus assembled matrices.
#[derive(Debug, Clone)]
pub struct EffectiveModel {
    pub thermostat: Thermostat,
    pub beta_hw0: f64,
    pub xi_c: f64,
    pub nu_bar: f64,
    /// Mean quanta at the system frequency.
    pub n0: f64,
    pub r_b: f64,
    pub f1: f64,
    pub f2: f64,
    pub d1: f64,
    pub d2: f64,
    pub f_eff: Matrix2<f64>,
    pub d_eff: Matrix2<f64>,
    /// First-order steady-state correction `C = f2 - 4 d2 / N0`.
    pub c: f64,
    /// False when `xi_c <= 1`: the resonance lies outside the thermostat
    /// band and no resonant thermalisation occurs (`f1 = d1 = 0`).
    pub resonant: bool,
}

impl EffectiveModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_coefficients(
        thermostat: Thermostat,
        beta_hw0: f64,
        xi_c: f64,
        nu_bar: f64,
        r_b: f64,
        f1: f64,
        f2: f64,
        d1: f64,
        d2: f64,
    ) -> Self {
        let n0 = bose_occupation(1.0, beta_hw0);
        let f_eff = Matrix2::new(0.0, -1.0, 1.0 + nu_bar * f2, nu_bar * f1);
        let d_eff = Matrix2::new(0.0, nu_bar * d2, nu_bar * d2, nu_bar * d1);
        EffectiveModel {
            thermostat,
            beta_hw0,
            xi_c,
            nu_bar,
            n0,
            r_b,
            f1,
            f2,
            d1,
            d2,
            f_eff,
            d_eff,
            c: f2 - 4.0 * d2 / n0,
            resonant: xi_c > 1.0,
        }
    }

    /// Wrap externally assembled effective matrices (the finite-N block sums)
    /// in a model, extracting the scalar coefficients. Requires `nu_bar > 0`.
    pub fn from_effective_matrices(
        thermostat: Thermostat,
        beta_hw0: f64,
        xi_c: f64,
        nu_bar: f64,
        r_b: f64,
        f_eff: Matrix2<f64>,
        d_eff: Matrix2<f64>,
    ) -> Result<Self> {
        if !(nu_bar > 0.0) {
            return Err(Error::InvalidSpec(
                "from_effective_matrices requires nu_bar > 0".into(),
            ));
        }
        let n0 = bose_occupation(1.0, beta_hw0);
        let f1 = f_eff[(1, 1)] / nu_bar;
        let f2 = (f_eff[(1, 0)] - 1.0) / nu_bar;
        let d1 = d_eff[(1, 1)] / nu_bar;
        let d2 = d_eff[(0, 1)] / nu_bar;
        Ok(EffectiveModel {
            thermostat,
            beta_hw0,
            xi_c,
            nu_bar,
            n0,
            r_b,
            f1,
            f2,
            d1,
            d2,
            f_eff,
            d_eff,
            c: f2 - 4.0 * d2 / n0,
            resonant: xi_c > 1.0,
        })
    }

    /// Relaxation time `tau_S = 1/(nu_bar f1)`; infinite when there is no
    /// resonant thermalisation.
    pub fn relaxation_time(&self) -> f64 {
        let rate = self.nu_bar * self.f1;
        if rate > 0.0 {
            1.0 / rate
        } else {
            f64::INFINITY
        }
    }

    pub fn steady_kernel(&self) -> Result<Matrix2<f64>> {
        steady_kernel_matrices(&self.f_eff, &self.d_eff)
    }

    pub fn kernel_at(&self, t: f64) -> Result<GaussianKernel> {
        kernel_at(self, t)
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            thermostat: self.thermostat.label().to_string(),
            beta_hw0: self.beta_hw0,
            xi_c: self.xi_c,
            nu_bar: self.nu_bar,
            n0: self.n0,
            r_b: self.r_b,
            f1: self.f1,
            f2: self.f2,
            d1: self.d1,
            d2: self.d2,
            c: self.c,
            tau_s: self.relaxation_time(),
            resonant: self.resonant,
        }
    }
}

/// Serializable snapshot of a model for reports and file sidecars.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ModelSummary {
    pub thermostat: String,
    pub beta_hw0: f64,
    pub xi_c: f64,
    pub nu_bar: f64,
    pub n0: f64,
    pub r_b: f64,
    pub f1: f64,
    pub f2: f64,
    pub d1: f64,
    pub d2: f64,
    pub c: f64,
    pub tau_s: f64,
    pub resonant: bool,
}

/// Time-dependent Gaussian kernel of the conditional phase-space
/// distribution started from a point.
#[derive(Debug, Clone, Copy)]
pub struct GaussianKernel {
    pub t: f64,
    /// Covariance `A^{-1}(t)`; the zero matrix at `t = 0`.
    pub a_inv: Matrix2<f64>,
    /// Precision `A(t)`; `None` in the delta-limit branch (`t` below
    /// `1e-6 tau_S`, or no diffusion at all).
    pub precision: Option<Matrix2<f64>>,
    /// Propagator `exp(-F_eff t)`.
    pub propagator: Matrix2<f64>,
}

/// Resonant-limit coefficients of the marginal equation.
///
/// For `xi_c > 1`: `f1 = R_B/6`, `d1 = R_B N0 / 12`, and `f2`, `d2` are the
/// principal-value integrals over the thermostat band. For `xi_c <= 1` the
/// resonance is outside the band: `f1 = d1 = 0` and the model is flagged
/// non-resonant.
pub fn limit_coefficients(spec: &BathSpec) -> Result<EffectiveModel> {
    spec.validate()?;
    let coeffs = coefficient_set(spec)?;
    let beta = spec.beta_hw0;
    let xi_c = spec.xi_c;
    let n0 = spec.n0();

    let (f1, d1) = if xi_c > 1.0 {
        (coeffs.r_b / 6.0, coeffs.r_b * n0 / 12.0)
    } else {
        (0.0, 0.0)
    };

    // f2 = -(1/3pi) PV int_0^{xi_c} xi^4/(xi^2-1) dxi
    let f2 = if xi_c > 1.0 {
        -pv_integrate(|x| x.powi(4) / (x + 1.0), 1.0, 0.0, xi_c, COEFF_TOL)?.value / (3.0 * PI)
    } else {
        -integrate(|x| x.powi(4) / (x * x - 1.0), 0.0, xi_c, COEFF_TOL)?.value / (3.0 * PI)
    };

    // d2 = (1/24pi) int xi^3 [1/(xi+1) - 2 N(xi)/(xi^2-1)] dxi
    let regular = integrate(|x| x.powi(3) / (x + 1.0), 0.0, xi_c, COEFF_TOL)?.value;
    let thermal_g = move |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        2.0 * x.powi(3) * bose_occupation(x, beta) / (x + 1.0)
    };
    let thermal = if xi_c > 1.0 {
        pv_integrate(thermal_g, 1.0, 0.0, xi_c, COEFF_TOL)?.value
    } else {
        integrate(|x| thermal_g(x) / (x - 1.0), 0.0, xi_c, COEFF_TOL)?.value
    };
    let d2 = (regular - thermal) / (24.0 * PI);

    Ok(EffectiveModel::from_coefficients(
        spec.thermostat,
        beta,
        xi_c,
        spec.nu_bar,
        coeffs.r_b,
        f1,
        f2,
        d1,
        d2,
    ))
}

/// One finite-damping evaluation of the coefficient quadruple
/// `(f1, f2, d1, d2)` at `mu_bar_scale = scale`.
///
/// The shared denominator is
/// `h = (xi^2-1)^2 - 2 e2 a xi (1-xi^2) + e2^2 xi^2 a^2
///      + (e1^2 + e3^2 + 2 e1 e3 xi^2) m^2`
/// with `m = mu_bar(xi)` and `a = alpha_bar(xi)`; `h > 0` for `scale > 0`,
/// so no principal values are needed.
pub fn finite_mu_quadruple(spec: &BathSpec, scale: f64) -> Result<[f64; 4]> {
    spec.validate()?;
    if !(scale > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "finite-mu evaluation needs a positive damping scale, got {scale}"
        )));
    }
    let mut at_scale = spec.clone();
    at_scale.mu_bar_scale = scale;
    let (e1, e2, e3) = spec.thermostat.epsilons();
    let beta = spec.beta_hw0;
    let xi_c = spec.xi_c;
    // The inner principal values (Rf only) put a noise floor under the
    // outer integrand, so the outer tolerance must sit above it.
    let inner_tol = Tolerance {
        rel: 1e-12,
        abs: 1e-15,
    };
    let tol = if e2 == 0.0 {
        Tolerance {
            rel: 1e-11,
            abs: 1e-14,
        }
    } else {
        Tolerance {
            rel: 1e-9,
            abs: 1e-12,
        }
    };

    let alpha_at = |x: f64| -> f64 {
        if e2 == 0.0 || x <= 0.0 {
            return 0.0;
        }
        let j = |w: f64| at_scale.spectral_density(w);
        let g = move |w: f64| -2.0 * w * j(w) / (w + x);
        let p = if x < xi_c {
            pv_integrate(g, x, 0.0, xi_c, inner_tol)
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
        } else {
            integrate(|w| g(w) / (w - x), 0.0, xi_c, inner_tol)
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
        };
        scale * x * p / PI
    };

    let h = move |x: f64, m: f64, a: f64| -> f64 {
        let u = x * x - 1.0;
        u * u - 2.0 * e2 * a * x * (-u) + e2 * e2 * x * x * a * a
            + (e1 * e1 + e3 * e3 + 2.0 * e1 * e3 * x * x) * m * m
    };

    let f1_int = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let m = at_scale.mu_bar(x);
        let a = alpha_at(x);
        m * (e1 + e3) * x.powi(4) / h(x, m, a)
    };
    let f2_int = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let m = at_scale.mu_bar(x);
        let a = alpha_at(x);
        -x.powi(4) * (x * x - 1.0) / h(x, m, a)
    };
    let d1_int = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let m = at_scale.mu_bar(x);
        let a = alpha_at(x);
        let n = bose_occupation(x, beta);
        m * x.powi(3) * ((1.0 - x) * (e1 - x * e3) + 2.0 * n * (e1 + e3 * x * x)) / h(x, m, a)
    };
    let d2_int = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let m = at_scale.mu_bar(x);
        let a = alpha_at(x);
        let n = bose_occupation(x, beta);
        x.powi(3) * (x * x - 1.0) * (x - 1.0 - 2.0 * n) / h(x, m, a)
    };

    let f1 = integrate(f1_int, 0.0, xi_c, tol)?.value / (3.0 * PI);
    let f2 = integrate(f2_int, 0.0, xi_c, tol)?.value / (3.0 * PI);
    // The equilibrium identity f1/d1 = 2/N0 fixes the d1 prefactor at
    // 1/(12 pi); see the per-mode elimination in `blocks`.
    let d1 = integrate(d1_int, 0.0, xi_c, tol)?.value / (12.0 * PI);
    let d2 = integrate(d2_int, 0.0, xi_c, tol)?.value / (24.0 * PI);
    for (name, v) in [("f1", f1), ("f2", f2), ("d1", d1), ("d2", d2)] {
        if !v.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "finite-mu coefficient {name} is not finite at scale {scale}"
            )));
        }
    }
    Ok([f1, f2, d1, d2])
}

/// Polynomial extrapolation of `samples = [(h, value)]` to `h = 0`
/// (Richardson). Returns the extrapolated value and a residual estimate
/// (difference against the extrapolation of one lower order).
pub fn extrapolate_to_zero(samples: &[(f64, f64)]) -> (f64, f64) {
    assert!(samples.len() >= 2, "need at least two samples");
    let lagrange_at_zero = |pts: &[(f64, f64)]| -> f64 {
        let mut acc = 0.0;
        for (i, &(xi, yi)) in pts.iter().enumerate() {
            let mut l = 1.0;
            for (j, &(xj, _)) in pts.iter().enumerate() {
                if i != j {
                    l *= -xj / (xi - xj);
                }
            }
            acc += yi * l;
        }
        acc
    };
    let full = lagrange_at_zero(samples);
    let lower = if samples.len() == 2 {
        samples[1].1
    } else {
        lagrange_at_zero(&samples[1..])
    };
    (full, (full - lower).abs())
}

/// Finite-damping coefficients Richardson-extrapolated to zero damping.
///
/// `mu_schedule` must be strictly decreasing and positive. The extrapolation
/// residual of each coefficient must stay below `2%` relative (`1e-8`
/// absolute floor), otherwise the error carries the residual.
pub fn finite_mu_coefficients(spec: &BathSpec, mu_schedule: &[f64]) -> Result<EffectiveModel> {
    if mu_schedule.len() < 2 {
        return Err(Error::InvalidSpec(
            "mu schedule needs at least two entries".into(),
        ));
    }
    for w in mu_schedule.windows(2) {
        if !(w[0] > w[1] && w[1] > 0.0) {
            return Err(Error::InvalidSpec(
                "mu schedule must be strictly decreasing and positive".into(),
            ));
        }
    }
    let quads: Vec<[f64; 4]> = mu_schedule
        .iter()
        .map(|&s| finite_mu_quadruple(spec, s))
        .collect::<Result<_>>()?;

    let names: [&'static str; 4] = ["f1", "f2", "d1", "d2"];
    let mut out = [0.0; 4];
    for k in 0..4 {
        let samples: Vec<(f64, f64)> = mu_schedule
            .iter()
            .zip(quads.iter())
            .map(|(&s, q)| (s, q[k]))
            .collect();
        let (value, residual) = extrapolate_to_zero(&samples);
        let tol = (0.02 * value.abs()).max(1e-8);
        if residual > tol {
            return Err(Error::ExtrapolationResidual {
                name: names[k],
                residual,
                tol,
            });
        }
        out[k] = value;
    }
    let coeffs = coefficient_set(spec)?;
    Ok(EffectiveModel::from_coefficients(
        spec.thermostat,
        spec.beta_hw0,
        spec.xi_c,
        spec.nu_bar,
        coeffs.r_b,
        out[0],
        out[1],
        out[2],
        out[3],
    ))
}

/// `exp(-F t)` for a 2x2 matrix, in closed form.
///
/// With `s = tr F / 2` and `B = F - s I`, Cayley–Hamilton gives
/// `B^2 = -(det F - s^2) I`; the three spectral cases (complex pair,
/// real pair, defective) share the code path below.
pub fn exp_neg(f: &Matrix2<f64>, t: f64) -> Matrix2<f64> {
    let s = 0.5 * (f[(0, 0)] + f[(1, 1)]);
    let det = f[(0, 0)] * f[(1, 1)] - f[(0, 1)] * f[(1, 0)];
    let disc = det - s * s;
    let b = f - Matrix2::identity() * s;
    let scale = (-s * t).exp();
    let eps = 1e-14 * (1.0 + s * s);
    if disc > eps {
        let w = disc.sqrt();
        let (sin, cos) = (w * t).sin_cos();
        (Matrix2::identity() * cos - b * (sin / w)) * scale
    } else if disc < -eps {
        let k = (-disc).sqrt();
        let ch = (k * t).cosh();
        let sh = (k * t).sinh();
        (Matrix2::identity() * ch - b * (sh / k)) * scale
    } else {
        (Matrix2::identity() - b * t) * scale
    }
}

/// Antisymmetric `Q` solving `F Q + Q F^T = F D - D F^T`.
///
/// A 2x2 antisymmetric matrix has one free parameter, and the equation
/// collapses to `q = (F D - D F^T)_{01} / tr F`.
pub fn lyapunov_q_matrices(f: &Matrix2<f64>, d: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let tr = f[(0, 0)] + f[(1, 1)];
    let scale = f.amax().max(d.amax()).max(1.0);
    if tr.abs() <= 1e-14 * scale {
        return Err(Error::UnstableDrift);
    }
    let rhs = f * d - d * f.transpose();
    let q = rhs[(0, 1)] / tr;
    Ok(Matrix2::new(0.0, q, -q, 0.0))
}

/// Steady precision matrix `A(inf) = (D + Q)^{-1} F`, with `Q` from
/// [`lyapunov_q_matrices`]. Requires a strictly stable drift.
pub fn steady_kernel_matrices(f: &Matrix2<f64>, d: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let tr = f[(0, 0)] + f[(1, 1)];
    let det = f[(0, 0)] * f[(1, 1)] - f[(0, 1)] * f[(1, 0)];
    if !(tr > 0.0 && det > 0.0) {
        return Err(Error::UnstableDrift);
    }
    let q = lyapunov_q_matrices(f, d)?;
    let dq = d + q;
    let inv = dq.try_inverse().ok_or(Error::UnstableDrift)?;
    let a = inv * f;
    // symmetric by construction; average away rounding asymmetry
    Ok(Matrix2::new(
        a[(0, 0)],
        0.5 * (a[(0, 1)] + a[(1, 0)]),
        0.5 * (a[(0, 1)] + a[(1, 0)]),
        a[(1, 1)],
    ))
}

/// `|F A^{-1} + A^{-1} F^T - 2 D|_max`, the steady-state defect of a
/// candidate precision matrix.
pub fn lyapunov_residual(f: &Matrix2<f64>, d: &Matrix2<f64>, a: &Matrix2<f64>) -> f64 {
    let a_inv = a.try_inverse().expect("precision matrix must be invertible");
    (f * a_inv + a_inv * f.transpose() - 2.0 * d).amax()
}

/// Fraction of the relaxation time below which the kernel is reported as a
/// delta rather than inverted.
const DELTA_FLOOR: f64 = 1e-6;

/// Time-dependent kernel via the propagator route:
/// `A^{-1}(t) = S - G S G^T` with `S = A^{-1}(inf)` and `G = exp(-F t)`.
pub fn kernel_at(model: &EffectiveModel, t: f64) -> Result<GaussianKernel> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidTime(t));
    }
    let g = exp_neg(&model.f_eff, t);
    let diffusive = model.d_eff.amax() > 0.0
        && model.f_eff[(1, 1)] > 0.0
        && (model.f_eff[(0, 0)] + model.f_eff[(1, 1)]) > 0.0;
    if !diffusive {
        // No diffusion: the conditional kernel stays a delta forever.
        return Ok(GaussianKernel {
            t,
            a_inv: Matrix2::zeros(),
            precision: None,
            propagator: g,
        });
    }
    let sigma_inf = steady_kernel_matrices(&model.f_eff, &model.d_eff)?
        .try_inverse()
        .ok_or(Error::UnstableDrift)?;
    let a_inv = sigma_inf - g * sigma_inf * g.transpose();
    let tau = model.relaxation_time();
    let precision = if t > DELTA_FLOOR * tau {
        a_inv.try_inverse()
    } else {
        None
    };
    Ok(GaussianKernel {
        t,
        a_inv,
        precision,
        propagator: g,
    })
}

/// Time-dependent precision matrix in entrywise closed form.
///
/// The covariance is expanded exactly over the basis
/// `{1, E, E cos 2w't, E sin 2w't}` with `E = e^{-t/tau_S}` and `w'` the
/// imaginary part of the drift eigenvalue, then inverted analytically.
/// This is an independent scalar route to the same kernel as [`kernel_at`];
/// its leading order in the coupling reproduces [`kernel_first_order`].
pub fn kernel_closed_form(model: &EffectiveModel, t: f64) -> Result<Matrix2<f64>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidTime(t));
    }
    let f_1 = model.f_eff[(1, 1)]; // nu f1 = 1/tau_S
    let b = model.f_eff[(1, 0)]; // 1 + nu f2
    let d_1 = model.d_eff[(1, 1)];
    let d_2 = model.d_eff[(0, 1)];
    if !(f_1 > 0.0 && b > 0.0 && d_1 > 0.0) {
        return Err(Error::UnstableDrift);
    }
    let s = 0.5 * f_1;
    let w2 = b - s * s;
    if w2 <= 0.0 {
        return Err(Error::UnstableDrift);
    }
    let w = w2.sqrt();

    let sig2 = d_1 / f_1;
    let sig1 = (sig2 + 2.0 * d_2) / b;

    let e = (-f_1 * t).exp();
    let c2 = (2.0 * w * t).cos();
    let s2 = (2.0 * w * t).sin();

    let q11 = s * s * sig1 + sig2;
    let q22 = b * b * sig1 + s * s * sig2;
    let q12 = -f_1 * (sig2 + d_2);

    let m11 = (0.5 * sig1 + q11 / (2.0 * w2))
        + c2 * (0.5 * sig1 - q11 / (2.0 * w2))
        + s2 * (f_1 * sig1 / (2.0 * w));
    let m22 = (0.5 * sig2 + q22 / (2.0 * w2)) + c2 * (0.5 * sig2 - q22 / (2.0 * w2))
        - s2 * (f_1 * sig2 / (2.0 * w));
    let m12 = q12 / (2.0 * w2) - c2 * (q12 / (2.0 * w2)) - s2 * (d_2 / w);

    let s11 = sig1 - e * m11;
    let s22 = sig2 - e * m22;
    let s12 = -e * m12;
    let det = s11 * s22 - s12 * s12;
    if det <= 0.0 {
        return Err(Error::InvalidTime(t));
    }
    Ok(Matrix2::new(s22 / det, -s12 / det, -s12 / det, s11 / det))
}

/// First-order-in-coupling entrywise kernel: the compact display with
/// denominators `N0^2 (1 - E)^2`. Accurate to `O(nu_bar)`; kept as a
/// cross-check against [`kernel_closed_form`], which it approximates.
pub fn kernel_first_order(model: &EffectiveModel, t: f64) -> Matrix2<f64> {
    let n0 = model.n0;
    let nu = model.nu_bar;
    let f_1 = nu * model.f1;
    let f_2 = nu * model.f2;
    let d_2 = nu * model.d2;
    let s = 0.5 * f_1;
    let w = (1.0 + nu * model.f2 - s * s).sqrt();
    let e = (-f_1 * t).exp();
    let l = n0 * (1.0 - e);
    let m = n0 * n0 * (1.0 - e) * (1.0 - e);
    let c2 = (2.0 * w * t).cos();
    let s2 = (2.0 * w * t).sin();
    let a11 = 2.0 / l
        + (2.0 * f_2 * n0 - 8.0 * d_2) * (1.0 - e) / m
        + e * (4.0 * d_2 * c2 - f_1 * n0 * s2) / m;
    let a12 = -e * f_1 * n0 / m + e * (f_1 * n0 * c2 + 4.0 * d_2 * s2) / m;
    let a22 = 2.0 / l + e * 2.0 * d_2 / m + e * (2.0 * d_2 * c2 + f_1 * n0 * s2) / m;
    Matrix2::new(a11, a12, a12, a22)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lb_spec() -> BathSpec {
        BathSpec::new(Thermostat::Lb, 1.0, 2.0, 0.1)
    }

    fn lb_model() -> EffectiveModel {
        limit_coefficients(&lb_spec()).unwrap()
    }

    #[test]
    fn limit_values_lb() {
        let m = lb_model();
        assert_eq!(m.f1, 1.0 / 6.0);
        assert_abs_diff_eq!(m.d1, m.n0 / 12.0, epsilon = 1e-16);
        // f2 against the antiderivative (1/3)x^3 + x + (1/2) ln|(x-1)/(x+1)|
        let f2_exact = -(14.0 / 3.0 - 0.5 * 3.0_f64.ln()) / (3.0 * PI);
        assert_abs_diff_eq!(m.f2, f2_exact, epsilon = 1e-10);
        // equilibrium identity
        assert_abs_diff_eq!(m.f1 / m.d1, 2.0 / m.n0, epsilon = 1e-12);
    }

    #[test]
    fn d2_zero_temperature() {
        // N = 0: d2 = (1/24pi) (8/3 - ln 3)
        let spec = BathSpec::new(Thermostat::Lb, f64::INFINITY, 2.0, 0.1);
        let m = limit_coefficients(&spec).unwrap();
        let exact = (8.0 / 3.0 - 3.0_f64.ln()) / (24.0 * PI);
        assert_abs_diff_eq!(m.d2, exact, epsilon = 1e-10);
        assert_abs_diff_eq!(m.d2, 0.020797, epsilon = 1e-6);
    }

    #[test]
    fn below_cutoff_shuts_off_thermalisation() {
        let spec = BathSpec::new(Thermostat::Lb, 1.0, 0.5, 0.1);
        let m = limit_coefficients(&spec).unwrap();
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.d1, 0.0);
        assert!(!m.resonant);
        assert_eq!(m.relaxation_time(), f64::INFINITY);
    }

    #[test]
    fn relaxation_time_values() {
        let m = lb_model();
        assert_abs_diff_eq!(m.relaxation_time(), 60.0, epsilon = 1e-9);
        let spec2 = BathSpec::new(Thermostat::Lb, 1.0, 2.0, 0.2);
        let m2 = limit_coefficients(&spec2).unwrap();
        assert_abs_diff_eq!(m2.relaxation_time(), 30.0, epsilon = 1e-9);
    }

    #[test]
    fn rf_relaxation_scales_inverse_r_b() {
        let lb = lb_model();
        let rf = limit_coefficients(&BathSpec::new(Thermostat::Rf, 1.0, 2.0, 0.1)).unwrap();
        assert_abs_diff_eq!(
            rf.relaxation_time(),
            lb.relaxation_time() / rf.r_b,
            epsilon = 1e-9
        );
    }

    #[test]
    fn finite_mu_extrapolates_to_limit() {
        let m = finite_mu_coefficients(&lb_spec(), &[0.08, 0.04, 0.02]).unwrap();
        let limit = lb_model();
        assert!((m.f1 - limit.f1).abs() / limit.f1 < 0.01, "f1 = {}", m.f1);
        assert!((m.d1 - limit.d1).abs() / limit.d1 < 0.01, "d1 = {}", m.d1);
        assert!((m.f2 - limit.f2).abs() / limit.f2.abs() < 0.01);
        assert!((m.d2 - limit.d2).abs() / limit.d2.abs() < 0.02);
    }

    #[test]
    fn finite_mu_single_is_mu_accurate() {
        let q = finite_mu_quadruple(&lb_spec(), 0.04).unwrap();
        // leading deviation is O(mu); at mu = 0.04 it sits near 12%
        assert!((q[0] - 1.0 / 6.0).abs() / (1.0 / 6.0) < 5.0 * 0.04);
    }

    #[test]
    fn lorentzian_normalisation_near_resonance() {
        // the resonant weight (e1+e3) m / h integrates to pi/2 (1 + O(mu))
        let (e1, _, e3) = Thermostat::Lb.epsilons();
        let m = 0.02;
        let h = |x: f64| {
            (x * x - 1.0_f64).powi(2) + (e1 * e1 + e3 * e3 + 2.0 * e1 * e3 * x * x) * m * m
        };
        let v = integrate(|x| (e1 + e3) * m / h(x), 0.0, 2.0, Tolerance::default())
            .unwrap()
            .value;
        assert!((v - PI / 2.0).abs() < 2.0 * m, "v = {v}");
    }

    #[test]
    fn rf_finite_mu_limit_is_thermostat_independent() {
        // The drift block's frequency-renormalisation term completes a
        // square in h: the resonance shifts instead of broadening, so the
        // extrapolated resonant weight is the same as for Lb. The R_B
        // suppression of the limit formulas does not survive the exact
        // per-mode elimination; see the decision record.
        let spec = BathSpec::new(Thermostat::Rf, 1.0, 2.0, 0.1);
        let m = finite_mu_coefficients(&spec, &[0.08, 0.04, 0.02]).unwrap();
        assert!((m.f1 - 1.0 / 6.0).abs() * 6.0 < 0.01, "f1 = {}", m.f1);
        assert!(
            (m.d1 - m.n0 / 12.0).abs() / (m.n0 / 12.0) < 0.01,
            "d1 = {}",
            m.d1
        );
    }

    #[test]
    fn extrapolation_residual_error_carries_value() {
        // A schedule too short to cancel the O(mu) error trips the residual
        // guard.
        let err = finite_mu_coefficients(&lb_spec(), &[0.4, 0.38]).unwrap_err();
        assert!(matches!(err, Error::ExtrapolationResidual { .. }));
    }

    #[test]
    fn propagator_pure_rotation_at_zero_coupling() {
        let m = EffectiveModel::from_coefficients(
            Thermostat::Lb,
            1.0,
            2.0,
            0.0,
            1.0,
            1.0 / 6.0,
            -0.4,
            0.05,
            0.007,
        );
        let g = exp_neg(&m.f_eff, std::f64::consts::FRAC_PI_2);
        let expected = Matrix2::new(0.0, 1.0, -1.0, 0.0);
        assert!((g - expected).amax() < 1e-12);
    }

    #[test]
    fn eigenvalue_real_parts_are_half_trace() {
        let m = lb_model();
        let eig = m.f_eff.complex_eigenvalues();
        for lam in eig.iter() {
            assert_abs_diff_eq!(lam.re, m.nu_bar * m.f1 / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn lyapunov_q_trivial_cases() {
        // isotropic F and D: RHS vanishes
        let f = Matrix2::identity();
        let d = Matrix2::identity() * 0.5;
        let q = lyapunov_q_matrices(&f, &d).unwrap();
        assert_eq!(q.amax(), 0.0);
        let a = steady_kernel_matrices(&f, &d).unwrap();
        assert!((a - Matrix2::identity() * 2.0).amax() < 1e-14);
    }

    #[test]
    fn lyapunov_q_residual() {
        let m = lb_model();
        let q = lyapunov_q_matrices(&m.f_eff, &m.d_eff).unwrap();
        let res = (m.f_eff * q + q * m.f_eff.transpose()
            - (m.f_eff * m.d_eff - m.d_eff * m.f_eff.transpose()))
        .amax();
        assert!(res < 1e-12, "residual {res}");
        assert_eq!(q[(0, 0)], 0.0);
        assert_eq!(q[(0, 1)], -q[(1, 0)]);
    }

    #[test]
    fn steady_kernel_first_order_structure() {
        let m = lb_model();
        let a = m.steady_kernel().unwrap();
        assert!(lyapunov_residual(&m.f_eff, &m.d_eff, &a) < 1e-10);
        // diag ~ (2/N0)(1 + C nu), 2/N0 with O(nu^2) discrepancy
        let approx11 = (2.0 / m.n0) * (1.0 + m.c * m.nu_bar);
        let approx22 = 2.0 / m.n0;
        assert!((a[(0, 0)] - approx11).abs() <= 3.0 * m.nu_bar * m.nu_bar * approx11.abs());
        assert!((a[(1, 1)] - approx22).abs() <= 3.0 * m.nu_bar * m.nu_bar * approx22);
        assert_abs_diff_eq!(a[(0, 1)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn steady_state_thermostat_independent() {
        let lb = lb_model().steady_kernel().unwrap();
        let rf = limit_coefficients(&BathSpec::new(Thermostat::Rf, 1.0, 2.0, 0.1))
            .unwrap()
            .steady_kernel()
            .unwrap();
        // R_B cancels between f1 and d1; agreement is quadrature-exact.
        assert!((lb - rf).amax() < 1e-9, "diff {}", (lb - rf).amax());
    }

    #[test]
    fn kernel_routes_agree() {
        let m = lb_model();
        let tau = m.relaxation_time();
        for frac in [0.01, 0.3, 1.0, 2.7] {
            let t = frac * tau;
            let k = kernel_at(&m, t).unwrap();
            let a_prop = k.precision.unwrap();
            let a_closed = kernel_closed_form(&m, t).unwrap();
            let scale = a_prop.amax();
            assert!(
                (a_prop - a_closed).amax() <= 1e-10 * scale.max(1.0),
                "mismatch at t = {t}"
            );
        }
    }

    #[test]
    fn first_order_kernel_is_coupling_accurate() {
        let m = lb_model();
        let tau = m.relaxation_time();
        for frac in [0.5, 1.0, 3.0] {
            let t = frac * tau;
            let exact = kernel_closed_form(&m, t).unwrap();
            let lead = kernel_first_order(&m, t);
            let rel = (exact - lead).amax() / exact.amax();
            assert!(rel < 5.0 * m.nu_bar * m.nu_bar, "rel = {rel} at t = {t}");
        }
    }

    #[test]
    fn kernel_delta_branch_and_long_time() {
        let m = lb_model();
        let k0 = kernel_at(&m, 0.0).unwrap();
        assert!(k0.precision.is_none());
        assert_eq!(k0.a_inv.amax(), 0.0);
        let tiny = kernel_at(&m, 1e-8 * m.relaxation_time()).unwrap();
        assert!(tiny.precision.is_none());
        let a_inf = m.steady_kernel().unwrap();
        let k = kernel_at(&m, 50.0 * m.relaxation_time()).unwrap();
        assert!((k.precision.unwrap() - a_inf).amax() < 1e-8);
    }

    #[test]
    fn kernel_spread_is_monotone() {
        let m = lb_model();
        let tau = m.relaxation_time();
        let mut prev = -1.0;
        for k in 1..40 {
            let t = 0.1 * k as f64 * tau;
            let a_inv = kernel_at(&m, t).unwrap().a_inv;
            let det = a_inv[(0, 0)] * a_inv[(1, 1)] - a_inv[(0, 1)] * a_inv[(1, 0)];
            assert!(det >= prev - 1e-15, "det A^{{-1}} not monotone at t={t}");
            prev = det;
        }
    }

    #[test]
    fn ode_route_matches_closed_forms() {
        // RK4 on dSigma/dt = -F Sigma - Sigma F^T + 2D from Sigma(0) = 0,
        // checked at tau_S against both closed forms.
        let m = lb_model();
        let tau = m.relaxation_time();
        let (sig, _) = crate::blocks::propagate_covariance(
            &nalgebra::DMatrix::from_fn(2, 2, |i, j| m.f_eff[(i, j)]),
            &nalgebra::DMatrix::from_fn(2, 2, |i, j| m.d_eff[(i, j)]),
            &nalgebra::DMatrix::zeros(2, 2),
            &nalgebra::DVector::zeros(2),
            tau,
            1e-3,
        )
        .unwrap();
        let a_ode = Matrix2::new(sig[(0, 0)], sig[(0, 1)], sig[(1, 0)], sig[(1, 1)])
            .try_inverse()
            .unwrap();
        let a_prop = kernel_at(&m, tau).unwrap().precision.unwrap();
        let a_closed = kernel_closed_form(&m, tau).unwrap();
        assert!((a_ode - a_prop).amax() < 1e-8);
        assert!((a_ode - a_closed).amax() < 1e-8);
    }
}
