//! Deterministic one-dimensional quadrature with Cauchy principal-value
//! support.
//!
//! The workhorse is a globally adaptive Gauss–Kronrod 15-point rule: the
//! panel with the largest error estimate is bisected until the summed error
//! estimate drops below `max(abs, rel * |value|)`. All bookkeeping is
//! rounding-order deterministic, so repeated calls with identical inputs
//! return bit-identical results.

use crate::{Error, Result};

/// Gauss–Kronrod 15-point abscissae (positive half, including the centre).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// Embedded 7-point Gauss weights (for XGK indices 1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Hard cap on panel bisection depth; exceeding it is an error, never a
/// silent partial answer.
pub const MAX_DEPTH: u32 = 30;

const MAX_PANELS: usize = 100_000;

/// Relative/absolute tolerance pair for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: 1e-10,
            abs: 1e-14,
        }
    }
}

impl Tolerance {
    pub fn rel(rel: f64) -> Self {
        assert!(rel > 0.0, "tolerance must be positive");
        Tolerance {
            rel,
            abs: Tolerance::default().abs,
        }
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: u64,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

/// One Gauss–Kronrod 15 evaluation on `[a, b]`.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(centre);
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut fv = [0.0_f64; 15];
    fv[7] = fc;

    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        resk += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }

    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[j] - reskh).abs() + (fv[14 - j] - reskh).abs());
    }
    resasc *= half.abs();

    let value = resk * half;
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    (value, err)
}

/// Adaptive integral of `f` over `[a, b]`.
///
/// Panics if `a >= b` or the tolerance is not positive; those are contract
/// violations, not runtime conditions. Failure to converge within the
/// refinement budget is a real error carrying the partial result.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadratureResult> {
    assert!(a < b, "integration bounds must satisfy a < b");
    assert!(tol.rel > 0.0 && tol.abs > 0.0, "tolerances must be positive");

    let mut evaluations: u64 = 15;
    let (v0, e0) = gk15(&f, a, b);
    let mut panels = vec![Panel {
        a,
        b,
        value: v0,
        error: e0,
        depth: 0,
    }];

    loop {
        // Canonical summation order: panels sorted by left endpoint.
        let mut order: Vec<usize> = (0..panels.len()).collect();
        order.sort_by(|&i, &j| panels[i].a.total_cmp(&panels[j].a));
        let total: f64 = order.iter().map(|&i| panels[i].value).sum();
        let err_total: f64 = order.iter().map(|&i| panels[i].error).sum();

        if err_total <= tol.abs.max(tol.rel * total.abs()) {
            return Ok(QuadratureResult {
                value: total,
                error_estimate: err_total,
                evaluations,
            });
        }

        // Worst panel, first occurrence on ties.
        let mut worst = 0;
        for i in 1..panels.len() {
            if panels[i].error > panels[worst].error {
                worst = i;
            }
        }

        if panels[worst].depth >= MAX_DEPTH || panels.len() >= MAX_PANELS {
            return Err(Error::QuadratureNonConvergence {
                partial: total,
                error_estimate: err_total,
                evaluations,
                panels: panels.len(),
            });
        }

        let Panel {
            a: pa,
            b: pb,
            depth,
            ..
        } = panels[worst];
        let mid = 0.5 * (pa + pb);
        let (vl, el) = gk15(&f, pa, mid);
        let (vr, er) = gk15(&f, mid, pb);
        evaluations += 30;
        panels[worst] = Panel {
            a: pa,
            b: mid,
            value: vl,
            error: el,
            depth: depth + 1,
        };
        panels.push(Panel {
            a: mid,
            b: pb,
            value: vr,
            error: er,
            depth: depth + 1,
        });
    }
}

/// Cauchy principal value of `\int_a^b g(x) / (x - pole) dx`.
///
/// `g` is the smooth numerator. The singular part `g(pole)/(x - pole)` is
/// subtracted analytically — its principal value over `[a, b]` is
/// `g(pole) * ln((b - pole)/(pole - a))` — and the regularised remainder
/// `(g(x) - g(pole))/(x - pole)` is integrated adaptively on `[a, pole]` and
/// `[pole, b]` so that no quadrature node ever lands on the pole.
pub fn pv_integrate<G: Fn(f64) -> f64>(
    g: G,
    pole: f64,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    assert!(a < b, "integration bounds must satisfy a < b");
    if !(a < pole && pole < b) {
        return Err(Error::PoleOutsideInterval { pole, a, b });
    }
    let gs = g(pole);
    if !gs.is_finite() {
        return Err(Error::SingularNumerator { pole, value: gs });
    }
    // Derivative of g at the pole, used only if a node drifts within
    // cancellation range of the pole.
    let h = 1e-6 * (b - a);
    let gprime = (g(pole + h) - g(pole - h)) / (2.0 * h);

    let remainder = |x: f64| {
        let d = x - pole;
        if d.abs() < 1e-14 * (b - a) {
            gprime
        } else {
            (g(x) - gs) / d
        }
    };

    let left = integrate(&remainder, a, pole, tol)?;
    let right = integrate(&remainder, pole, b, tol)?;
    let analytic = gs * ((b - pole) / (pole - a)).ln();

    Ok(QuadratureResult {
        value: left.value + right.value + analytic,
        error_estimate: left.error_estimate + right.error_estimate,
        evaluations: left.evaluations + right.evaluations + 3,
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and P'_n(x) via the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre_on(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    assert!(a < b);
    let (xs, ws) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    xs.iter()
        .zip(ws.iter())
        .map(|(&x, &w)| (mid + half * x, half * w))
        .collect()
}
