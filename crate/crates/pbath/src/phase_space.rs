//! Quasi-probability fields on a rectangular grid, negativity diagnostics
//! and figure-data emission.

use std::io::Write;

use nalgebra::{Matrix2, Vector2};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::effective::{kernel_at, EffectiveModel, ModelSummary};
use crate::{Error, Result};

/// Rectangular evaluation lattice. `values[iy * nx + ix]` holds the field at
/// `(xs[ix], ys[iy])`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
}

impl Grid {
    /// Symmetric square grid; an odd point count puts the origin on a node.
    pub fn symmetric(half_width: f64, points: usize) -> Self {
        assert!(half_width > 0.0 && points >= 3);
        Grid {
            x_min: -half_width,
            x_max: half_width,
            nx: points,
            y_min: -half_width,
            y_max: half_width,
            ny: points,
        }
    }

    /// Default: `x, y` in `[-4 sqrt(N0), 4 sqrt(N0)]`, 401 points per axis
    /// (more than eight standard deviations of the steady Gaussian).
    pub fn default_for(model: &EffectiveModel) -> Self {
        let half = if model.n0 > 0.0 {
            4.0 * model.n0.sqrt()
        } else {
            4.0
        };
        Grid::symmetric(half, 401)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn x_at(&self, ix: usize) -> f64 {
        self.x_min + self.dx() * ix as f64
    }

    pub fn y_at(&self, iy: usize) -> f64 {
        self.y_min + self.dy() * iy as f64
    }
}

/// Initial system state for the field evaluation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// Steady thermal field; time independent.
    Thermal,
    /// Point state displaced to `(x0, y0)`, broadened to an isotropic
    /// Gaussian of standard deviation `width` so it fits on a grid.
    Coherent { x0: f64, y0: f64, width: f64 },
    /// First excited number state.
    FockOne,
}

/// Sampled quasi-probability field with model metadata.
#[derive(Debug, Clone)]
pub struct QuasiProbField {
    pub grid: Grid,
    pub t: f64,
    pub init: InitialState,
    pub values: Vec<f64>,
    pub model: ModelSummary,
}

/// Negativity diagnostics of a sampled field.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct NegativityMetrics {
    pub min_value: f64,
    /// Trapezoid integral of `|min(P, 0)|`.
    pub negative_mass: f64,
    /// Total cell area where `P < 0`.
    pub negative_area: f64,
}

fn eval_grid<F>(grid: Grid, f: F, parallel: bool) -> Vec<f64>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let mut values = vec![0.0; grid.nx * grid.ny];
    let fill_row = |(iy, row): (usize, &mut [f64])| {
        let y = grid.y_at(iy);
        for (ix, v) in row.iter_mut().enumerate() {
            *v = f(grid.x_at(ix), y);
        }
    };
    #[cfg(feature = "parallel")]
    if parallel {
        values
            .par_chunks_mut(grid.nx)
            .enumerate()
            .for_each(fill_row);
        return values;
    }
    let _ = parallel;
    values.chunks_mut(grid.nx).enumerate().for_each(fill_row);
    values
}

fn quadratic_form(a: &Matrix2<f64>, x: f64, y: f64) -> f64 {
    a[(0, 0)] * x * x + 2.0 * a[(0, 1)] * x * y + a[(1, 1)] * y * y
}

fn fock1_values(model: &EffectiveModel, t: f64, grid: Grid, parallel: bool) -> Result<Vec<f64>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidTime(t));
    }
    let kernel = kernel_at(model, t)?;
    let a = kernel.precision.ok_or(Error::InvalidTime(t))?;
    let g = kernel.propagator;
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { t });
    }
    let k = a * g;
    let khat = g.transpose() * a * g;
    let det_a = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let norm = det_a.sqrt() / (8.0 * std::f64::consts::PI);
    let base = 4.0 - (khat[(0, 0)] + khat[(1, 1)]);
    let point = move |x: f64, y: f64| {
        let q1 = x * k[(0, 0)] + y * k[(1, 0)];
        let q2 = x * k[(0, 1)] + y * k[(1, 1)];
        let bracket = base + q1 * q1 + q2 * q2;
        norm * (-0.5 * quadratic_form(&a, x, y)).exp() * bracket
    };
    Ok(eval_grid(grid, point, parallel))
}

fn gaussian_values(
    model: &EffectiveModel,
    t: f64,
    init: InitialState,
    grid: Grid,
    parallel: bool,
) -> Result<Vec<f64>> {
    let (a, mean) = match init {
        InitialState::Thermal => {
            let a = model.steady_kernel()?;
            (a, Vector2::zeros())
        }
        InitialState::Coherent { x0, y0, width } => {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::InvalidTime(t));
            }
            if !(width > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "coherent initial width must be positive, got {width}"
                )));
            }
            let kernel = kernel_at(model, t)?;
            let g = kernel.propagator;
            let sigma = g * Matrix2::identity() * (width * width) * g.transpose() + kernel.a_inv;
            let a = sigma.try_inverse().ok_or(Error::NonFinite { t })?;
            (a, g * Vector2::new(x0, y0))
        }
        InitialState::FockOne => {
            return Err(Error::InvalidSpec(
                "use field_fock1 for the Fock initial state".into(),
            ))
        }
    };
    let det_a = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    if !(det_a > 0.0) {
        return Err(Error::NonFinite { t });
    }
    let norm = det_a.sqrt() / (2.0 * std::f64::consts::PI);
    let point =
        move |x: f64, y: f64| norm * (-0.5 * quadratic_form(&a, x - mean[0], y - mean[1])).exp();
    Ok(eval_grid(grid, point, parallel))
}

/// Field of the first excited number state evolved for time `t > 0`:
///
/// `P = (sqrt(det A)/8 pi) exp(-r^T A r / 2)
///      [4 - tr Khat + (x K11 + y K21)^2 + (x K12 + y K22)^2]`
///
/// with `K = A(t) exp(-F t)` and `Khat = exp(-F^T t) A(t) exp(-F t)`. The
/// Gaussian average of the bracket is exactly 4, so the field is normalised.
pub fn field_fock1(model: &EffectiveModel, t: f64, grid: Grid) -> Result<QuasiProbField> {
    let values = fock1_values(model, t, grid, cfg!(feature = "parallel"))?;
    Ok(QuasiProbField {
        grid,
        t,
        init: InitialState::FockOne,
        values,
        model: model.summary(),
    })
}

/// Gaussian fields: the steady thermal field, or a broadened coherent state
/// transported by the propagator.
pub fn field_gaussian(
    model: &EffectiveModel,
    t: f64,
    init: InitialState,
    grid: Grid,
) -> Result<QuasiProbField> {
    let values = gaussian_values(model, t, init, grid, cfg!(feature = "parallel"))?;
    Ok(QuasiProbField {
        grid,
        t,
        init,
        values,
        model: model.summary(),
    })
}

/// Dispatch on the initial state.
pub fn field(
    model: &EffectiveModel,
    t: f64,
    init: InitialState,
    grid: Grid,
) -> Result<QuasiProbField> {
    match init {
        InitialState::FockOne => field_fock1(model, t, grid),
        other => field_gaussian(model, t, other, grid),
    }
}

/// Sequential evaluation path, independent of the thread pool; used by the
/// benchmarks and the schedule-independence tests.
#[doc(hidden)]
pub fn field_fock1_sequential(
    model: &EffectiveModel,
    t: f64,
    grid: Grid,
) -> Result<QuasiProbField> {
    let values = fock1_values(model, t, grid, false)?;
    Ok(QuasiProbField {
        grid,
        t,
        init: InitialState::FockOne,
        values,
        model: model.summary(),
    })
}

fn trapezoid_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i + 1 == n {
        0.5
    } else {
        1.0
    }
}

/// Trapezoid quadrature of the field over its grid.
pub fn grid_norm(field: &QuasiProbField) -> f64 {
    let g = &field.grid;
    let cell = g.dx() * g.dy();
    let mut acc = 0.0;
    for iy in 0..g.ny {
        let wy = trapezoid_weight(iy, g.ny);
        for ix in 0..g.nx {
            acc += wy * trapezoid_weight(ix, g.nx) * field.values[iy * g.nx + ix];
        }
    }
    acc * cell
}

/// Minimum, negative mass and negative area of a sampled field.
pub fn negativity_metrics(field: &QuasiProbField) -> NegativityMetrics {
    let g = &field.grid;
    let cell = g.dx() * g.dy();
    let mut min_value = f64::INFINITY;
    let mut mass = 0.0;
    let mut cells = 0usize;
    for iy in 0..g.ny {
        let wy = trapezoid_weight(iy, g.ny);
        for ix in 0..g.nx {
            let v = field.values[iy * g.nx + ix];
            min_value = min_value.min(v);
            if v < 0.0 {
                mass += wy * trapezoid_weight(ix, g.nx) * (-v);
                cells += 1;
            }
        }
    }
    NegativityMetrics {
        min_value,
        negative_mass: mass * cell,
        negative_area: cells as f64 * cell,
    }
}

impl QuasiProbField {
    /// Row-major CSV with header `x,y,p`; every number is written in its
    /// shortest round-trip decimal form.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,y,p")?;
        for iy in 0..self.grid.ny {
            let y = self.grid.y_at(iy);
            for ix in 0..self.grid.nx {
                writeln!(
                    w,
                    "{},{},{}",
                    self.grid.x_at(ix),
                    y,
                    self.values[iy * self.grid.nx + ix]
                )?;
            }
        }
        Ok(())
    }

    /// The `y = 0` slice (nearest row), as `(x, p)` pairs.
    pub fn slice_y0(&self) -> Vec<(f64, f64)> {
        let mut best = 0;
        for iy in 1..self.grid.ny {
            if self.grid.y_at(iy).abs() < self.grid.y_at(best).abs() {
                best = iy;
            }
        }
        (0..self.grid.nx)
            .map(|ix| (self.grid.x_at(ix), self.values[best * self.grid.nx + ix]))
            .collect()
    }

    /// JSON sidecar carrying the model, time, initial state and grid.
    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "t": self.t,
            "init": self.init,
            "grid": self.grid,
            "model": self.model,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{BathSpec, Thermostat};
    use crate::effective::limit_coefficients;
    use approx::assert_abs_diff_eq;

    fn paper_model() -> EffectiveModel {
        limit_coefficients(&BathSpec::new(Thermostat::Lb, 1.0, 2.0, 0.1)).unwrap()
    }

    #[test]
    fn fock1_normalised_and_negative_early() {
        let m = paper_model();
        let tau = m.relaxation_time();
        let grid = Grid::default_for(&m);
        let f = field_fock1(&m, 0.3 * tau, grid).unwrap();
        assert_abs_diff_eq!(grid_norm(&f), 1.0, epsilon = 1e-3);
        let neg = negativity_metrics(&f);
        assert!(neg.negative_mass > 0.1, "mass = {}", neg.negative_mass);
        assert!(neg.min_value < -1.0);
        assert!(neg.negative_area > 0.0);
        // frozen from an independent dense-grid evaluation of the same
        // closed form
        assert_abs_diff_eq!(neg.negative_mass, 1.1801662743202834, epsilon = 1e-3);
    }

    #[test]
    fn fock1_negativity_decays_monotonically() {
        let m = paper_model();
        let tau = m.relaxation_time();
        let grid = Grid::default_for(&m);
        let mut prev = f64::INFINITY;
        for frac in [0.35, 0.5, 0.7, 0.9] {
            let f = field_fock1(&m, frac * tau, grid).unwrap();
            let mass = negativity_metrics(&f).negative_mass;
            assert!(mass < prev, "mass not decreasing at {frac} tau");
            assert!(mass > 0.0);
            prev = mass;
        }
        let late = field_fock1(&m, 1.5 * tau, grid).unwrap();
        assert_eq!(negativity_metrics(&late).negative_mass, 0.0);
    }

    #[test]
    fn fock1_sign_at_origin_matches_trace_condition() {
        // independent route to the sign: P(0,0) > 0 iff tr Khat < 4
        let m = paper_model();
        let tau = m.relaxation_time();
        let grid = Grid::symmetric(2.0, 41);
        for frac in [0.4, 0.8, 1.2, 2.0] {
            let t = frac * tau;
            let f = field_fock1(&m, t, grid).unwrap();
            let centre = f.values[(grid.ny / 2) * grid.nx + grid.nx / 2];
            let k = kernel_at(&m, t).unwrap();
            let a = k.precision.unwrap();
            let khat = k.propagator.transpose() * a * k.propagator;
            let cond = 4.0 - (khat[(0, 0)] + khat[(1, 1)]);
            assert_eq!(centre > 0.0, cond > 0.0, "sign mismatch at t = {t}");
            assert_abs_diff_eq!(
                centre,
                (a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]).sqrt()
                    / (8.0 * std::f64::consts::PI)
                    * cond,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn fock1_relaxes_to_steady_gaussian() {
        // the field approaches the steady Gaussian like e^{-t/tau}; by
        // 20 tau the residual sits nine orders below the 1e-6 target
        let m = paper_model();
        let tau = m.relaxation_time();
        let grid = Grid::default_for(&m);
        let f = field_fock1(&m, 20.0 * tau, grid).unwrap();
        let steady = field_gaussian(&m, 0.0, InitialState::Thermal, grid).unwrap();
        let sup = f
            .values
            .iter()
            .zip(steady.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(sup < 1e-6, "sup-norm distance {sup}");
        assert!(negativity_metrics(&f).min_value >= 0.0);
    }

    #[test]
    fn thermal_field_variance() {
        let m = paper_model();
        let grid = Grid::symmetric(4.0 * m.n0.sqrt(), 501);
        let f = field_gaussian(&m, 0.0, InitialState::Thermal, grid).unwrap();
        // second moment along y is N0/2 exactly; along x it carries the
        // first-order anisotropy
        let mut y2 = 0.0;
        for iy in 0..grid.ny {
            let y = grid.y_at(iy);
            let wy = trapezoid_weight(iy, grid.ny);
            for ix in 0..grid.nx {
                y2 += wy * trapezoid_weight(ix, grid.nx) * y * y * f.values[iy * grid.nx + ix];
            }
        }
        y2 *= grid.dx() * grid.dy();
        assert_abs_diff_eq!(y2, m.n0 / 2.0, epsilon = 2e-4);
    }

    #[test]
    fn coherent_rotates_rigidly_without_coupling() {
        let free = EffectiveModel::from_coefficients(
            Thermostat::Lb,
            1.0,
            2.0,
            0.0,
            1.0,
            0.0,
            0.0,
            0.0,
            0.0,
        );
        let grid = Grid::symmetric(3.0, 101);
        let init = InitialState::Coherent {
            x0: 1.2,
            y0: 0.0,
            width: 0.3,
        };
        let t = 0.7;
        let f_t = field_gaussian(&free, t, init, grid).unwrap();
        let f_0 = field_gaussian(&free, 0.0, init, grid).unwrap();
        // rotational covariance: P_t(r) = P_0(G^-1 r), G the rotation by -t.
        // Compare against the analytic t=0 Gaussian evaluated at the rotated
        // points.
        let (sin, cos) = t.sin_cos();
        let width: f64 = 0.3;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * width * width);
        let mut worst = 0.0_f64;
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let x = grid.x_at(ix);
                let y = grid.y_at(iy);
                // G^{-1} = exp(+F_S t) rotates by angle +t in the (x, y)
                // convention of exp(-F_S t) = [[cos, sin], [-sin, cos]]
                let xr = cos * x - sin * y;
                let yr = sin * x + cos * y;
                let reference =
                    norm * (-((xr - 1.2).powi(2) + yr * yr) / (2.0 * width * width)).exp();
                worst = worst.max((f_t.values[iy * grid.nx + ix] - reference).abs());
            }
        }
        assert!(worst < 1e-6, "rotational covariance violated: {worst}");
        // mean sits at angle -t
        let expected_mean = (1.2 * cos, -1.2 * sin);
        let mut best = (0.0, 0.0, f64::NEG_INFINITY);
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let v = f_t.values[iy * grid.nx + ix];
                if v > best.2 {
                    best = (grid.x_at(ix), grid.y_at(iy), v);
                }
            }
        }
        assert!((best.0 - expected_mean.0).abs() < 2.0 * grid.dx());
        assert!((best.1 - expected_mean.1).abs() < 2.0 * grid.dy());
        let norm0 = grid_norm(&f_0);
        assert_abs_diff_eq!(norm0, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn coherent_mean_decays_with_propagator() {
        let m = paper_model();
        let t = 25.0;
        let k = kernel_at(&m, t).unwrap();
        let mean = k.propagator * Vector2::new(1.0, 0.0);
        // |mean| = |exp(-F t) r0|, which contracts like exp(-t/(2 tau))
        let expected = (-t / (2.0 * m.relaxation_time())).exp();
        assert_abs_diff_eq!(mean.norm(), expected, epsilon = 0.02 * expected);
    }

    #[test]
    fn parallel_and_sequential_paths_agree_bitwise() {
        let m = paper_model();
        let grid = Grid::symmetric(3.0, 101);
        let t = 20.0;
        let par = field_fock1(&m, t, grid).unwrap();
        let seq = field_fock1_sequential(&m, t, grid).unwrap();
        assert_eq!(par.values.len(), seq.values.len());
        for (a, b) in par.values.iter().zip(seq.values.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_layout_and_slice() {
        let m = paper_model();
        let grid = Grid::symmetric(1.0, 5);
        let f = field_fock1(&m, 10.0, grid).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x,y,p");
        assert_eq!(text.lines().count(), 1 + 25);
        let first = lines.next().unwrap();
        assert!(first.starts_with("-1,-1,"));
        let slice = f.slice_y0();
        assert_eq!(slice.len(), 5);
        assert_eq!(slice[0].0, -1.0);
        // odd grid centres the slice exactly on y = 0
        let mid = f.values[2 * grid.nx..3 * grid.nx].to_vec();
        for (s, v) in slice.iter().zip(mid.iter()) {
            assert_eq!(s.1, *v);
        }
    }

    #[test]
    fn field_rejects_bad_times() {
        let m = paper_model();
        let grid = Grid::symmetric(1.0, 5);
        assert!(field_fock1(&m, 0.0, grid).is_err());
        assert!(field_fock1(&m, -1.0, grid).is_err());
        assert!(field_gaussian(
            &m,
            -1.0,
            InitialState::Coherent {
                x0: 0.0,
                y0: 0.0,
                width: 0.1
            },
            grid
        )
        .is_err());
    }
}
