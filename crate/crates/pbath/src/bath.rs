//! Spectral density, Bose occupation and the scalar coefficient functions of
//! the thermostatted photonic bath.

use std::fmt;
use std::sync::Arc;

use crate::quadrature::{integrate, pv_integrate, Tolerance};
use crate::{Error, Result};

/// Quadrature tolerance used for every coefficient integral. Tighter than
/// the library default so that coefficient *ratios* hold to 1e-10.
pub(crate) const COEFF_TOL: Tolerance = Tolerance {
    rel: 1e-12,
    abs: 1e-15,
};

/// Thermostat attached to the bath by the boundary degrees of freedom.
///
/// `Lb` keeps only co-rotating terms; `Rf` retains the frequency
/// cross-terms, which show up as the renormalisation coefficients
/// `alpha_i`, `delta_i` in the bath blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Thermostat {
    Lb,
    Rf,
}

impl Thermostat {
    /// The `(eps1, eps2, eps3)` parameterisation of the bath drift block.
    pub fn epsilons(self) -> (f64, f64, f64) {
        match self {
            Thermostat::Lb => (0.5, 0.0, 0.5),
            Thermostat::Rf => (1.0, 1.0, 0.0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Thermostat::Lb => "lb",
            Thermostat::Rf => "rf",
        }
    }
}

impl fmt::Display for Thermostat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Spectral density `J(xi)` of the boundary oscillators, in units where
/// `omega_0 = 1`.
#[derive(Clone)]
pub enum SpectralDensity {
    /// `J(xi) = slope * xi` up to the cutoff.
    Ohmic { slope: f64 },
    /// User-supplied `J(xi)`; must vanish at `xi = 0` fast enough that
    /// `J(xi) * N(xi)` stays finite.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl SpectralDensity {
    pub fn eval(&self, xi: f64) -> f64 {
        match self {
            SpectralDensity::Ohmic { slope } => slope * xi,
            SpectralDensity::Custom(f) => f(xi),
        }
    }
}

impl fmt::Debug for SpectralDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralDensity::Ohmic { slope } => write!(f, "Ohmic {{ slope: {slope} }}"),
            SpectralDensity::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Full parameterisation of bath and thermostat.
///
/// All quantities are dimensionless: `beta_hw0` is `beta * hbar * omega_0`,
/// `xi_c = omega_c / omega_0` is the thermostat cutoff, `nu_bar` the
/// system-bath coupling measure and `mu_bar_scale` the overall scale of the
/// bath damping `mu_bar(xi) = mu_bar_scale * xi * J(xi)`.
#[derive(Debug, Clone)]
pub struct BathSpec {
    pub thermostat: Thermostat,
    pub beta_hw0: f64,
    pub xi_c: f64,
    pub nu_bar: f64,
    pub mu_bar_scale: f64,
    pub spectral: SpectralDensity,
}

impl BathSpec {
    /// Ohmic bath with unit slope; the common construction.
    pub fn new(thermostat: Thermostat, beta_hw0: f64, xi_c: f64, nu_bar: f64) -> Self {
        BathSpec {
            thermostat,
            beta_hw0,
            xi_c,
            nu_bar,
            mu_bar_scale: 0.0,
            spectral: SpectralDensity::Ohmic { slope: 1.0 },
        }
    }

    pub fn with_mu_scale(mut self, scale: f64) -> Self {
        self.mu_bar_scale = scale;
        self
    }

    pub fn with_ohmic_slope(mut self, slope: f64) -> Self {
        self.spectral = SpectralDensity::Ohmic { slope };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_hw0 > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "beta_hw0 must be positive, got {}",
                self.beta_hw0
            )));
        }
        if !(self.xi_c > 0.0) || !self.xi_c.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "xi_c must be positive and finite, got {}",
                self.xi_c
            )));
        }
        if !(self.nu_bar >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "nu_bar must be non-negative, got {}",
                self.nu_bar
            )));
        }
        if !(self.mu_bar_scale >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "mu_bar_scale must be non-negative, got {}",
                self.mu_bar_scale
            )));
        }
        if let SpectralDensity::Ohmic { slope } = self.spectral {
            if !(slope > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "ohmic slope must be positive, got {slope}"
                )));
            }
        }
        if (self.xi_c - 1.0).abs() < 1e-12 {
            return Err(Error::InvalidSpec(
                "cutoff xi_c coincides with the system resonance".into(),
            ));
        }
        Ok(())
    }

    pub fn spectral_density(&self, xi: f64) -> f64 {
        self.spectral.eval(xi)
    }

    /// Mean quanta of the system mode, `N(1)`.
    pub fn n0(&self) -> f64 {
        bose_occupation(1.0, self.beta_hw0)
    }

    /// Bath damping rate `mu_bar(xi) = mu_bar_scale * xi * J(xi)`.
    pub fn mu_bar(&self, xi: f64) -> f64 {
        assert!(xi > 0.0, "mu_bar requires xi > 0");
        self.mu_bar_scale * xi * self.spectral_density(xi)
    }

    /// Frequency-renormalisation coefficient `alpha_bar(xi) =
    /// mu_bar_scale * xi * P(xi)`; zero by construction for the Lb
    /// thermostat.
    pub fn alpha_bar(&self, xi: f64) -> Result<f64> {
        if self.thermostat == Thermostat::Lb {
            return Ok(0.0);
        }
        Ok(self.mu_bar_scale * xi * self.p_at(xi)?)
    }

    /// Off-diagonal diffusion coefficient `delta_bar(xi) =
    /// mu_bar_scale * xi * Q(xi)`; zero for the Lb thermostat.
    pub fn delta_bar(&self, xi: f64) -> Result<f64> {
        if self.thermostat == Thermostat::Lb {
            return Ok(0.0);
        }
        Ok(self.mu_bar_scale * xi * self.q_at(xi)?)
    }

    /// `P(xi) = (1/pi) PV \int_0^{xi_c} J(W) 2W/(xi^2 - W^2) dW`.
    pub fn p_at(&self, xi: f64) -> Result<f64> {
        assert!(xi > 0.0);
        let j = |w: f64| self.spectral_density(w);
        // 2 W J(W)/(xi^2 - W^2) = g(W)/(W - xi) with g = -2 W J(W)/(W + xi)
        let g = move |w: f64| -2.0 * w * j(w) / (w + xi);
        let v = if xi < self.xi_c {
            pv_integrate(g, xi, 0.0, self.xi_c, COEFF_TOL)?.value
        } else {
            integrate(|w| g(w) / (w - xi), 0.0, self.xi_c, COEFF_TOL)?.value
        };
        Ok(v / std::f64::consts::PI)
    }

    /// `Q(xi) = (1/4pi) PV \int_0^{xi_c} J(W) [1/(xi+W) + 2 xi N(W)/(xi^2-W^2)] dW`.
    pub fn q_at(&self, xi: f64) -> Result<f64> {
        assert!(xi > 0.0);
        let beta = self.beta_hw0;
        let j = |w: f64| self.spectral_density(w);
        let regular = integrate(|w| j(w) / (xi + w), 0.0, self.xi_c, COEFF_TOL)?.value;
        // 2 xi J N /(xi^2 - W^2) = g/(W - xi), g = -2 xi J(W) N(W)/(W + xi);
        // J N is continued to 0 at W = 0.
        let g = move |w: f64| {
            if w <= 0.0 {
                return 0.0;
            }
            -2.0 * xi * j(w) * bose_occupation(w, beta) / (w + xi)
        };
        let thermal = if xi < self.xi_c {
            pv_integrate(g, xi, 0.0, self.xi_c, COEFF_TOL)?.value
        } else {
            integrate(|w| g(w) / (w - xi), 0.0, self.xi_c, COEFF_TOL)?.value
        };
        Ok((regular + thermal) / (4.0 * std::f64::consts::PI))
    }
}

/// Scalar coefficients of the bath at the system frequency.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CoefficientSet {
    pub j0: f64,
    pub p0: f64,
    pub q0: f64,
    pub s_plus_tilde: f64,
    pub s_minus: f64,
    pub r_b: f64,
}

/// Bose occupation `N(xi) = 1/(exp(beta xi) - 1)`.
///
/// The `xi -> 0` divergence is the caller's responsibility inside
/// integrands; calling with `xi <= 0` is a contract violation.
pub fn bose_occupation(xi: f64, beta_hw0: f64) -> f64 {
    assert!(xi > 0.0, "bose_occupation requires xi > 0");
    assert!(beta_hw0 > 0.0, "bose_occupation requires beta_hw0 > 0");
    1.0 / (beta_hw0 * xi).exp_m1()
}

/// All scalar bath coefficients at the system frequency.
///
/// `r_b` is exactly 1 for the Lb thermostat and
/// `J0 / sqrt(P0^2 + J0^2)` for the Rf thermostat.
pub fn coefficient_set(spec: &BathSpec) -> Result<CoefficientSet> {
    spec.validate()?;
    let beta = spec.beta_hw0;
    let xi_c = spec.xi_c;
    let j0 = spec.spectral_density(1.0);
    let p0 = spec.p_at(1.0)?;
    let q0 = spec.q_at(1.0)?;

    // Frequency-shift scalars of the conventional weak-coupling theory;
    // kept here for completeness, they drive no dynamics.
    let s_plus_tilde = if xi_c > 1.0 {
        pv_integrate(|x| -2.0 * x.powi(4) / (1.0 + x), 1.0, 0.0, xi_c, COEFF_TOL)?.value
    } else {
        integrate(|x| 2.0 * x.powi(4) / (1.0 - x * x), 0.0, xi_c, COEFF_TOL)?.value
    };
    let s_minus_g = move |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        -2.0 * x.powi(3) * (2.0 * bose_occupation(x, beta) + 1.0) / (1.0 + x)
    };
    let s_minus = if xi_c > 1.0 {
        pv_integrate(s_minus_g, 1.0, 0.0, xi_c, COEFF_TOL)?.value
    } else {
        integrate(|x| s_minus_g(x) / (x - 1.0), 0.0, xi_c, COEFF_TOL)?.value
    };

    let r_b = match spec.thermostat {
        Thermostat::Lb => 1.0,
        Thermostat::Rf => j0 / (p0 * p0 + j0 * j0).sqrt(),
    };

    Ok(CoefficientSet {
        j0,
        p0,
        q0,
        s_plus_tilde,
        s_minus,
        r_b,
    })
}
