//! The finite-N composite model: full block drift/diffusion matrices,
//! per-mode Sylvester solves, block-sum assembly of the effective 2x2
//! matrices, spectral analysis, and brute-force covariance propagation.
//!
//! State layout: coordinates `(x, y)` of the system at indices 0, 1, then
//! `(x_i, y_i)` of mode `i` at indices `2 + 2i`, `3 + 2i`.

use nalgebra::{Complex, DMatrix, DVector, Matrix2, Matrix4, Vector4};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::bath::{bose_occupation, BathSpec, Thermostat};
use crate::quadrature::gauss_legendre_on;
use crate::{Error, Result};

/// One discretised bath mode.
#[derive(Debug, Clone, Copy)]
pub struct ModeBlock {
    /// Dimensionless frequency `xi_i`.
    pub xi: f64,
    /// System-mode coupling `gamma_bar_i`.
    pub gamma: f64,
    /// Thermostat damping `mu_bar_i`.
    pub mu: f64,
    /// Bose occupation `N_i`.
    pub occupation: f64,
    /// Frequency renormalisation `alpha_bar_i` (Rf only).
    pub alpha: f64,
    /// Off-diagonal diffusion `delta_bar_i` (Rf only).
    pub delta: f64,
}

/// Finite-N composite system with assembled drift and diffusion matrices.
#[derive(Debug, Clone)]
pub struct FiniteSystem {
    pub thermostat: Thermostat,
    pub nu_bar: f64,
    pub modes: Vec<ModeBlock>,
    pub drift: DMatrix<f64>,
    pub diffusion: DMatrix<f64>,
}

/// Per-mode solutions of the two 2x2 Sylvester equations.
#[derive(Debug, Clone, Copy)]
pub struct SylvesterPair {
    pub i1: Matrix2<f64>,
    pub i2: Matrix2<f64>,
}

/// Eigenvalue analysis of the full drift matrix.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// All eigenvalues with positive imaginary part.
    pub eigenvalues: Vec<Complex<f64>>,
    /// Eigenvalue whose eigenvector has the largest weight on the system
    /// coordinates.
    pub system: Complex<f64>,
    pub system_weight: f64,
    /// `2 Re lambda_0`.
    pub tau_s_inv: f64,
    /// `2 Re lambda_i` aligned with `modes` order.
    pub mode_rates: Vec<f64>,
}

const FS: Matrix2<f64> = Matrix2::new(0.0, -1.0, 1.0, 0.0);

/// Ratio `gamma/mu` above which a near-resonant mode breaks the
/// fast-bath assumption.
pub const GAMMA_MU_LIMIT: f64 = 0.5;

/// Gauss–Legendre mode grid over `[xi_min, xi_c]` with a dedicated sub-grid
/// around the resonance of half-width `min(10 mu_bar(1), ...)`.
///
/// Returns `(xi_i, w_i)` pairs; the weights are plain quadrature weights,
/// folded into the couplings by [`build_finite_system`].
pub fn resonant_mode_grid(
    spec: &BathSpec,
    xi_min: f64,
    n_outer: usize,
    n_inner: usize,
) -> Vec<(f64, f64)> {
    assert!(xi_min > 0.0 && xi_min < spec.xi_c);
    let mu_res = if spec.mu_bar_scale > 0.0 {
        spec.mu_bar(1.0)
    } else {
        0.0
    };
    let resonant = spec.xi_c > 1.0 && xi_min < 1.0 && mu_res > 0.0;
    if !resonant {
        return gauss_legendre_on(xi_min, spec.xi_c, 2 * (n_outer + n_inner));
    }
    let w = (10.0 * mu_res)
        .min(0.5 * (spec.xi_c - 1.0))
        .min(0.5 * (1.0 - xi_min));
    let mut grid = Vec::with_capacity(2 * (n_outer + n_inner));
    grid.extend(gauss_legendre_on(xi_min, 1.0 - w, n_outer));
    grid.extend(gauss_legendre_on(1.0 - w, 1.0, n_inner));
    grid.extend(gauss_legendre_on(1.0, 1.0 + w, n_inner));
    grid.extend(gauss_legendre_on(1.0 + w, spec.xi_c, n_outer));
    grid
}

/// Drift block `F_B^i = [[e3 mu, -xi], [xi + e2 alpha, e1 mu]]`.
fn bath_drift_block(mode: &ModeBlock, thermostat: Thermostat) -> Matrix2<f64> {
    let (e1, e2, e3) = thermostat.epsilons();
    Matrix2::new(
        e3 * mode.mu,
        -mode.xi,
        mode.xi + e2 * mode.alpha,
        e1 * mode.mu,
    )
}

/// Build the full `(2N+2)`-dimensional drift and diffusion matrices.
pub fn build_finite_system(spec: &BathSpec, grid: &[(f64, f64)]) -> Result<FiniteSystem> {
    spec.validate()?;
    for &(xi, w) in grid {
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "mode frequencies must be positive, got {xi}"
            )));
        }
        if !(w >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "mode weights must be non-negative, got {w}"
            )));
        }
    }
    let mut sorted: Vec<f64> = grid.iter().map(|&(xi, _)| xi).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|p| p[0] == p[1]) {
        return Err(Error::InvalidSpec("duplicate mode frequency".into()));
    }

    let measure = spec.nu_bar / (3.0 * std::f64::consts::PI);
    let make_mode = |&(xi, w): &(f64, f64)| -> Result<ModeBlock> {
        Ok(ModeBlock {
            xi,
            gamma: (measure * w * xi.powi(3)).sqrt(),
            mu: spec.mu_bar(xi),
            occupation: bose_occupation(xi, spec.beta_hw0),
            alpha: spec.alpha_bar(xi)?,
            delta: spec.delta_bar(xi)?,
        })
    };
    #[cfg(feature = "parallel")]
    let modes: Vec<ModeBlock> = grid.par_iter().map(make_mode).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let modes: Vec<ModeBlock> = grid.iter().map(make_mode).collect::<Result<_>>()?;

    let n = 2 * modes.len() + 2;
    let mut drift = DMatrix::zeros(n, n);
    let mut diffusion = DMatrix::zeros(n, n);
    drift[(0, 1)] = -1.0;
    drift[(1, 0)] = 1.0;
    for (i, mode) in modes.iter().enumerate() {
        let r = 2 + 2 * i;
        let fb = bath_drift_block(mode, spec.thermostat);
        drift[(r, r)] = fb[(0, 0)];
        drift[(r, r + 1)] = fb[(0, 1)];
        drift[(r + 1, r)] = fb[(1, 0)];
        drift[(r + 1, r + 1)] = fb[(1, 1)];
        // F_off^i = [[0,0],[0,g]] and Ftilde_off^i = [[-g,0],[0,0]]
        drift[(1, r + 1)] = mode.gamma;
        drift[(r, 0)] = -mode.gamma;
        // D_off^i = (g/8) diag(1, -1), mirrored below the diagonal
        let d8 = mode.gamma / 8.0;
        diffusion[(0, r)] = d8;
        diffusion[(1, r + 1)] = -d8;
        diffusion[(r, 0)] = d8;
        diffusion[(r + 1, 1)] = -d8;
        match spec.thermostat {
            Thermostat::Lb => {
                let d = mode.occupation * mode.mu / 4.0;
                diffusion[(r, r)] = d;
                diffusion[(r + 1, r + 1)] = d;
            }
            Thermostat::Rf => {
                diffusion[(r, r + 1)] = mode.delta;
                diffusion[(r + 1, r)] = mode.delta;
                diffusion[(r + 1, r + 1)] = mode.occupation * mode.mu / 2.0;
            }
        }
    }
    Ok(FiniteSystem {
        thermostat: spec.thermostat,
        nu_bar: spec.nu_bar,
        modes,
        drift,
        diffusion,
    })
}

/// Solve `F_B X - X F_S = W` for a single mode (row-major vectorisation of
/// the 4x4 linear system, dense elimination).
fn solve_sylvester(fb: &Matrix2<f64>, w: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let mut m = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let mut v = 0.0;
                    if j == l {
                        v += fb[(i, k)];
                    }
                    if i == k {
                        v -= FS[(l, j)];
                    }
                    m[(2 * i + j, 2 * k + l)] = v;
                }
            }
        }
    }
    let rhs = Vector4::new(w[(0, 0)], w[(0, 1)], w[(1, 0)], w[(1, 1)]);
    let sol = m.lu().solve(&rhs)?;
    Some(Matrix2::new(sol[0], sol[1], sol[2], sol[3]))
}

/// `|F_B X - X F_S - W|_max`.
pub fn sylvester_residual(fb: &Matrix2<f64>, x: &Matrix2<f64>, w: &Matrix2<f64>) -> f64 {
    (fb * x - x * FS - w).amax()
}

/// Right-hand sides of the two per-mode equations:
/// `W1 = Ftilde_off` and `W2 = A_B^{-1} F_off^T - 2 D_off^T`.
pub fn sylvester_rhs(mode: &ModeBlock) -> (Matrix2<f64>, Matrix2<f64>) {
    let g = mode.gamma;
    let w1 = Matrix2::new(-g, 0.0, 0.0, 0.0);
    let w2 = Matrix2::new(
        -g / 4.0,
        0.0,
        0.0,
        mode.occupation * g / 2.0 + g / 4.0,
    );
    (w1, w2)
}

/// Solve both per-mode Sylvester systems.
pub fn solve_sylvester_pair(
    mode: &ModeBlock,
    thermostat: Thermostat,
    index: usize,
) -> Result<SylvesterPair> {
    let fb = bath_drift_block(mode, thermostat);
    let (w1, w2) = sylvester_rhs(mode);
    let i1 = solve_sylvester(&fb, &w1).ok_or(Error::SingularMode {
        index,
        xi: mode.xi,
    })?;
    let i2 = solve_sylvester(&fb, &w2).ok_or(Error::SingularMode {
        index,
        xi: mode.xi,
    })?;
    Ok(SylvesterPair { i1, i2 })
}

/// Block-sum assembly of the effective matrices:
/// `F_eff = F_S - sum_i F_off^i I1^i`,
/// `D_eff = sum_i (F_off^i I2^i + (I2^i)^T (F_off^i)^T)/2`.
///
/// Per-mode solves run independently; the sums are taken in mode order so
/// the result does not depend on the parallel schedule.
pub fn assemble_effective(system: &FiniteSystem) -> Result<(Matrix2<f64>, Matrix2<f64>)> {
    let solve =
        |(i, mode): (usize, &ModeBlock)| solve_sylvester_pair(mode, system.thermostat, i);
    #[cfg(feature = "parallel")]
    let pairs: Vec<SylvesterPair> = system
        .modes
        .par_iter()
        .enumerate()
        .map(solve)
        .collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let pairs: Vec<SylvesterPair> = system
        .modes
        .iter()
        .enumerate()
        .map(solve)
        .collect::<Result<_>>()?;

    let mut f_eff = FS;
    let mut d_eff = Matrix2::zeros();
    for (mode, pair) in system.modes.iter().zip(pairs.iter()) {
        let f_off = Matrix2::new(0.0, 0.0, 0.0, mode.gamma);
        f_eff -= f_off * pair.i1;
        let fd = f_off * pair.i2;
        d_eff += (fd + fd.transpose()) * 0.5;
    }
    Ok((f_eff, d_eff))
}

/// Reject systems whose near-resonant modes violate `gamma << mu`.
///
/// Only modes inside the resonant band `|xi^2 - 1| <= 10 mu` matter: away
/// from resonance the detuning, not the damping, controls the adiabatic
/// elimination.
pub fn check_scale_separation(system: &FiniteSystem) -> Result<()> {
    for (i, mode) in system.modes.iter().enumerate() {
        if mode.gamma == 0.0 {
            continue;
        }
        let resonant = (mode.xi * mode.xi - 1.0).abs() <= 10.0 * mode.mu;
        if resonant {
            let ratio = if mode.mu > 0.0 {
                mode.gamma / mode.mu
            } else {
                f64::INFINITY
            };
            if ratio > GAMMA_MU_LIMIT {
                return Err(Error::ScaleSeparation {
                    index: i,
                    xi: mode.xi,
                    ratio,
                    limit: GAMMA_MU_LIMIT,
                });
            }
        }
    }
    Ok(())
}

impl FiniteSystem {
    pub fn dim(&self) -> usize {
        2 * self.modes.len() + 2
    }

    /// `Sigma(0)`: system block zero, bath blocks at the zeroth-order
    /// stationary covariance `diag(N_i/2)`.
    pub fn stationary_bath_covariance(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut sigma = DMatrix::zeros(n, n);
        for (i, mode) in self.modes.iter().enumerate() {
            let r = 2 + 2 * i;
            sigma[(r, r)] = mode.occupation / 2.0;
            sigma[(r + 1, r + 1)] = mode.occupation / 2.0;
        }
        sigma
    }

    /// Mean vector with the system displaced to `(x0, y0)`.
    pub fn displaced_mean(&self, x0: f64, y0: f64) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        m[0] = x0;
        m[1] = y0;
        m
    }

    /// Fixed integration step `min(0.01, tau_B/50)` where `tau_B` is the
    /// fastest bath relaxation time.
    pub fn default_time_step(&self) -> f64 {
        let mu_max = self
            .modes
            .iter()
            .map(|m| m.mu)
            .fold(0.0_f64, f64::max);
        if mu_max > 0.0 {
            (1.0 / mu_max / 50.0).min(0.01)
        } else {
            0.01
        }
    }

    pub fn propagate(
        &self,
        sigma0: &DMatrix<f64>,
        mean0: &DVector<f64>,
        t: f64,
        dt: f64,
    ) -> Result<(DMatrix<f64>, DVector<f64>)> {
        propagate_covariance(&self.drift, &self.diffusion, sigma0, mean0, t, dt)
    }

    pub fn spectrum_and_rates(&self) -> Result<Spectrum> {
        spectrum_and_rates(self)
    }
}

/// Sparse triplet view of a drift matrix, used on the RK4 hot path.
struct Triplets {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    fn from_dense(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut entries = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let v = m[(r, c)];
                if v != 0.0 {
                    entries.push((r, c, v));
                }
            }
        }
        Triplets { n, entries }
    }

    /// `out = self * sigma`, column by column.
    fn mul_into(&self, sigma: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        let n = self.n;
        let sig = sigma.as_slice();
        let compute = |(j, col): (usize, &mut [f64])| {
            col.fill(0.0);
            let base = j * n;
            for &(r, c, v) in &self.entries {
                col[r] += v * sig[base + c];
            }
        };
        #[cfg(feature = "parallel")]
        out.as_mut_slice()
            .par_chunks_mut(n)
            .enumerate()
            .for_each(compute);
        #[cfg(not(feature = "parallel"))]
        out.as_mut_slice()
            .chunks_mut(n)
            .enumerate()
            .for_each(compute);
    }

    fn mul_vec(&self, v: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for &(r, c, w) in &self.entries {
            out[r] += w * v[c];
        }
    }
}

/// Propagate covariance and mean of the OU process
/// `dSigma/dt = -F Sigma - Sigma F^T + 2D`, `dm/dt = -F m`
/// with classical fixed-step RK4 (the step is shrunk so that an integer
/// number of steps lands exactly on `t`).
pub fn propagate_covariance(
    drift: &DMatrix<f64>,
    diffusion: &DMatrix<f64>,
    sigma0: &DMatrix<f64>,
    mean0: &DVector<f64>,
    t: f64,
    dt: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidTimeStep(dt));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidTime(t));
    }
    let n = drift.nrows();
    assert_eq!(drift.ncols(), n);
    assert_eq!(diffusion.nrows(), n);
    assert_eq!(sigma0.nrows(), n);
    assert_eq!(mean0.len(), n);
    if t == 0.0 {
        return Ok((sigma0.clone(), mean0.clone()));
    }

    let steps = (t / dt).ceil() as usize;
    let h = t / steps as f64;
    let trip = Triplets::from_dense(drift);

    let mut sigma = sigma0.clone();
    let mut mean = mean0.clone();
    let two_d = diffusion * 2.0;

    let mut p = DMatrix::zeros(n, n);
    let mut k = [
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
    ];
    let mut stage = DMatrix::zeros(n, n);
    let mut km = [
        DVector::zeros(n),
        DVector::zeros(n),
        DVector::zeros(n),
        DVector::zeros(n),
    ];
    let mut vstage = DVector::zeros(n);

    let rhs_sigma =
        |s: &DMatrix<f64>, p: &mut DMatrix<f64>, out: &mut DMatrix<f64>, trip: &Triplets| {
            trip.mul_into(s, p);
            out.copy_from(&two_d);
            *out -= &*p;
            for r in 0..n {
                for c in 0..n {
                    out[(r, c)] -= p[(c, r)];
                }
            }
        };

    fn add_scaled(dst: &mut DMatrix<f64>, src: &DMatrix<f64>, factor: f64) {
        for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
            *d += factor * s;
        }
    }

    for step in 0..steps {
        rhs_sigma(&sigma, &mut p, &mut k[0], &trip);
        stage.copy_from(&sigma);
        add_scaled(&mut stage, &k[0], 0.5 * h);
        rhs_sigma(&stage, &mut p, &mut k[1], &trip);
        stage.copy_from(&sigma);
        add_scaled(&mut stage, &k[1], 0.5 * h);
        rhs_sigma(&stage, &mut p, &mut k[2], &trip);
        stage.copy_from(&sigma);
        add_scaled(&mut stage, &k[2], h);
        rhs_sigma(&stage, &mut p, &mut k[3], &trip);
        add_scaled(&mut sigma, &k[0], h / 6.0);
        add_scaled(&mut sigma, &k[1], h / 3.0);
        add_scaled(&mut sigma, &k[2], h / 3.0);
        add_scaled(&mut sigma, &k[3], h / 6.0);

        trip.mul_vec(&mean, &mut km[0]);
        vstage.copy_from(&mean);
        vstage.axpy(-0.5 * h, &km[0], 1.0);
        trip.mul_vec(&vstage, &mut km[1]);
        vstage.copy_from(&mean);
        vstage.axpy(-0.5 * h, &km[1], 1.0);
        trip.mul_vec(&vstage, &mut km[2]);
        vstage.copy_from(&mean);
        vstage.axpy(-h, &km[2], 1.0);
        trip.mul_vec(&vstage, &mut km[3]);
        mean.axpy(-h / 6.0, &km[0], 1.0);
        mean.axpy(-h / 3.0, &km[1], 1.0);
        mean.axpy(-h / 3.0, &km[2], 1.0);
        mean.axpy(-h / 6.0, &km[3], 1.0);

        if step % 256 == 0 && !sigma[(0, 0)].is_finite() {
            return Err(Error::NonFinite {
                t: (step + 1) as f64 * h,
            });
        }
    }
    if !sigma.iter().all(|v| v.is_finite()) || !mean.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { t });
    }
    Ok((sigma, mean))
}

/// Eigenvalues of the drift matrix plus relaxation-rate bookkeeping.
///
/// The system eigenvalue is the one whose eigenvector carries the largest
/// weight on coordinates (0, 1); near-ties are broken by `|Im lambda - 1|`.
/// Eigenvectors come from two rounds of shifted inverse iteration.
pub fn spectrum_and_rates(system: &FiniteSystem) -> Result<Spectrum> {
    if system.modes.is_empty() {
        return Err(Error::InvalidSpec(
            "spectral analysis needs at least one mode".into(),
        ));
    }
    let n = system.dim();
    let eig = system.drift.clone().complex_eigenvalues();
    let mut upper: Vec<Complex<f64>> = eig.iter().filter(|l| l.im > 1e-12).copied().collect();
    upper.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
    if upper.len() != system.modes.len() + 1 {
        return Err(Error::InvalidSpec(format!(
            "expected {} oscillatory eigenvalues, found {}",
            system.modes.len() + 1,
            upper.len()
        )));
    }

    let fc = DMatrix::from_fn(n, n, |r, c| Complex::new(system.drift[(r, c)], 0.0));
    let weight_of = |lambda: &Complex<f64>| -> f64 {
        let shift = lambda + Complex::new(1e-10 * (1.0 + lambda.norm()), 0.0);
        let mut shifted = fc.clone();
        for i in 0..n {
            shifted[(i, i)] -= shift;
        }
        let lu = shifted.lu();
        let mut v = DVector::from_element(n, Complex::new(1.0 / (n as f64).sqrt(), 0.0));
        for _ in 0..2 {
            match lu.solve(&v) {
                Some(w) => {
                    let norm = w.norm();
                    if norm == 0.0 || !norm.is_finite() {
                        return 0.0;
                    }
                    v = w / Complex::new(norm, 0.0);
                }
                None => return 0.0,
            }
        }
        v[0].norm_sqr() + v[1].norm_sqr()
    };

    #[cfg(feature = "parallel")]
    let weights: Vec<f64> = upper.par_iter().map(weight_of).collect();
    #[cfg(not(feature = "parallel"))]
    let weights: Vec<f64> = upper.iter().map(weight_of).collect();

    let mut best = 0;
    for i in 1..upper.len() {
        let better = weights[i] > weights[best] + 1e-9
            || (weights[i] > weights[best] - 1e-9
                && (upper[i].im - 1.0).abs() < (upper[best].im - 1.0).abs());
        if better {
            best = i;
        }
    }
    let system_eig = upper[best];
    let system_weight = weights[best];

    // remaining eigenvalues pair with modes in frequency order
    let mut rest: Vec<Complex<f64>> = upper
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, l)| *l)
        .collect();
    rest.sort_by(|a, b| a.im.total_cmp(&b.im));
    let mut order: Vec<usize> = (0..system.modes.len()).collect();
    order.sort_by(|&a, &b| system.modes[a].xi.total_cmp(&system.modes[b].xi));
    let mut mode_rates = vec![0.0; system.modes.len()];
    for (slot, &mode_idx) in order.iter().enumerate() {
        mode_rates[mode_idx] = 2.0 * rest[slot].re;
    }

    Ok(Spectrum {
        eigenvalues: upper,
        system: system_eig,
        system_weight,
        tau_s_inv: 2.0 * system_eig.re,
        mode_rates,
    })
}
