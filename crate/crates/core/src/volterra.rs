//! Second-kind Volterra equations on uniform grids.
//!
//! All solvers use trapezoidal product integration with the newest node
//! treated implicitly:
//!
//! ```text
//! x_k (1 - dt/2 a_kk) = b_k + dt (a_k0 x_0 / 2 + sum_{0<j<k} a_kj x_j)
//! ```
//!
//! which is second-order accurate for smooth data and costs O(N^2).

use crate::error::{Error, Result};
use crate::series::{ScalarSeries, TimeGrid};

/// Smallest admissible `|1 - dt/2 a(t_k, t_k)|`.
pub const PIVOT_TOL: f64 = 1e-12;

/// Relative size of `C'(0) dt / C(0)` above which a stationarity warning is raised.
pub const STATIONARITY_TOL: f64 = 1e-3;

fn march(grid: &TimeGrid, b: &[f64], a: impl Fn(usize, usize) -> f64) -> Result<ScalarSeries> {
    let n = grid.len();
    let dt = grid.dt();
    let mut x = vec![0.0; n];
    x[0] = b[0];
    for k in 1..n {
        let mut acc = 0.5 * a(k, 0) * x[0];
        for (j, xj) in x.iter().enumerate().take(k).skip(1) {
            acc += a(k, j) * xj;
        }
        let pivot = 1.0 - 0.5 * dt * a(k, k);
        if pivot.abs() < PIVOT_TOL {
            return Err(Error::StepSingularity { node: k, pivot });
        }
        x[k] = (b[k] + dt * acc) / pivot;
    }
    ScalarSeries::new(*grid, x)
}

/// Solves `x(t) = b(t) + int_0^t a(t, s) x(s) ds` on the grid of `b`.
pub fn solve_volterra2(a: impl Fn(f64, f64) -> f64, b: &ScalarSeries) -> Result<ScalarSeries> {
    let grid = *b.grid();
    march(&grid, b.values(), |k, j| a(grid.t(k), grid.t(j)))
}

/// Convolution case `a(t, s) = a(t - s)`, with `a` tabulated on the same grid as `b`.
pub fn solve_volterra2_convolution(a: &ScalarSeries, b: &ScalarSeries) -> Result<ScalarSeries> {
    a.grid().ensure_same(b.grid())?;
    let av = a.values();
    march(b.grid(), b.values(), |k, j| av[k - j])
}

/// Running trapezoid integral `int_0^{t_k} f`.
pub fn cumulative_trapezoid(f: &ScalarSeries) -> ScalarSeries {
    let dt = f.grid().dt();
    let v = f.values();
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in v.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    ScalarSeries::new(*f.grid(), out).expect("integral of a finite series is finite")
}

/// Autocorrelation from a memory kernel.
///
/// Integrates `C' = int_0^t K(s) C(t - s) ds` from `C(0) = c0` through its
/// integrated form `C(t) = c0 + int_0^t A(t - s) C(s) ds` with
/// `A(tau) = int_0^tau K`.
pub fn acf_from_kernel(kernel: &ScalarSeries, c0: f64) -> Result<ScalarSeries> {
    if !c0.is_finite() {
        return Err(Error::NonFinite { what: "C(0)" });
    }
    if c0 == 0.0 {
        log::warn!("acf_from_kernel called with C(0) = 0; the solution is identically zero");
    }
    let integrated = cumulative_trapezoid(kernel);
    let forcing = ScalarSeries::constant(*kernel.grid(), c0)?;
    solve_volterra2_convolution(&integrated, &forcing)
}

/// Autocorrelation data fed to [`kernel_from_acf`].
#[derive(Debug, Clone)]
pub enum AcfInput {
    /// Sampled `C`; derivatives come from [`differentiate_series`].
    Sampled(ScalarSeries),
    /// Exact `C`, `C'`, `C''` on a common grid.
    Analytic { c: ScalarSeries, dc: ScalarSeries, ddc: ScalarSeries },
}

impl AcfInput {
    pub fn analytic(
        grid: TimeGrid,
        c: impl Fn(f64) -> f64,
        dc: impl Fn(f64) -> f64,
        ddc: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        Ok(AcfInput::Analytic {
            c: ScalarSeries::from_fn(grid, c)?,
            dc: ScalarSeries::from_fn(grid, dc)?,
            ddc: ScalarSeries::from_fn(grid, ddc)?,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        match self {
            AcfInput::Sampled(c) => c.grid(),
            AcfInput::Analytic { c, .. } => c.grid(),
        }
    }
}

/// Memory kernel together with any consistency warnings raised on the input.
#[derive(Debug, Clone)]
pub struct KernelExtraction {
    pub kernel: ScalarSeries,
    pub warnings: Vec<String>,
}

/// Memory kernel from an autocorrelation.
///
/// Solves `K(t) C(0) = C''(t) - int_0^t K(s) C'(t - s) ds`.
pub fn kernel_from_acf(input: &AcfInput) -> Result<KernelExtraction> {
    let (c, dc, ddc) = match input {
        AcfInput::Sampled(c) => (c.clone(), differentiate_series(c, 1)?, differentiate_series(c, 2)?),
        AcfInput::Analytic { c, dc, ddc } => {
            c.grid().ensure_same(dc.grid())?;
            c.grid().ensure_same(ddc.grid())?;
            (c.clone(), dc.clone(), ddc.clone())
        }
    };
    let c0 = c[0];
    if c0 == 0.0 {
        return Err(Error::DegenerateAcf);
    }
    let dt = c.grid().dt();
    let mut warnings = Vec::new();
    if dc[0].abs() * dt > STATIONARITY_TOL * c0.abs() {
        let msg = format!(
            "C'(0) = {:.3e} is inconsistent with a stationary autocorrelation (C(0) = {:.3e}, dt = {:.3e})",
            dc[0], c0, dt
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let a = dc.scaled(-1.0 / c0)?;
    let b = ddc.scaled(1.0 / c0)?;
    let kernel = solve_volterra2_convolution(&a, &b)?;
    Ok(KernelExtraction { kernel, warnings })
}

/// Second-order finite-difference derivative of order 1 or 2.
///
/// Central stencils in the interior, one-sided second-order stencils at both ends.
pub fn differentiate_series(c: &ScalarSeries, order: u8) -> Result<ScalarSeries> {
    let n_steps = c.grid().n_steps();
    if n_steps < 4 {
        return Err(Error::SeriesTooShort { needed: 4, found: n_steps });
    }
    let v = c.values();
    let n = v.len();
    let dt = c.grid().dt();
    let out: Vec<f64> = match order {
        1 => (0..n)
            .map(|k| {
                if k == 0 {
                    (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dt)
                } else if k == n - 1 {
                    (3.0 * v[k] - 4.0 * v[k - 1] + v[k - 2]) / (2.0 * dt)
                } else {
                    (v[k + 1] - v[k - 1]) / (2.0 * dt)
                }
            })
            .collect(),
        2 => (0..n)
            .map(|k| {
                let dt2 = dt * dt;
                if k == 0 {
                    (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / dt2
                } else if k == n - 1 {
                    (2.0 * v[k] - 5.0 * v[k - 1] + 4.0 * v[k - 2] - v[k - 3]) / dt2
                } else {
                    (v[k + 1] - 2.0 * v[k] + v[k - 1]) / dt2
                }
            })
            .collect(),
        other => return Err(Error::InvalidArgument(format!("derivative order must be 1 or 2, got {other}"))),
    };
    ScalarSeries::new(*c.grid(), out)
}
