//! Mori projection and the exact finite-dimensional generalized Langevin equation.
//!
//! For a skew generator `L` and an observable `z` the Mori projection
//! `P x = (x, z) / (z, z) z` has finite rank, so `Q L = L - P L` is a bounded
//! perturbation of `L` and the orthogonal dynamics `G(t) = exp(t Q L)` exist.
//! On `Q H` the operator `Q L Q` is itself skew, and `G(t)` is evaluated there
//! through its rotation-plane decomposition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conv::convolve;
use crate::error::{Error, Result};
use crate::hilbert::{expm, Generator, HilbertSpace};
use crate::par::Exec;
use crate::series::{ScalarSeries, TimeGrid};
use crate::volterra::solve_volterra2_convolution;

/// `(x, z) / (z, z) z`.
pub fn mori_project(x: &DVector<f64>, z: &DVector<f64>, space: &HilbertSpace) -> Result<DVector<f64>> {
    let zz = space.inner(z, z)?;
    if zz == 0.0 {
        return Err(Error::DegenerateProjection);
    }
    Ok(z * (space.inner(x, z)? / zz))
}

/// Drift `(L z, z) / (z, z)`; zero for skew generators on real spaces.
pub fn drift_coefficient(l: &Generator, z: &DVector<f64>) -> Result<f64> {
    let zz = l.space().inner(z, z)?;
    if zz == 0.0 {
        return Err(Error::DegenerateProjection);
    }
    Ok(l.space().inner(&l.apply(z)?, z)? / zz)
}

/// The orthogonal dynamics `G(t)` generated by `Q L` for the Mori projection onto `z`.
#[derive(Debug, Clone)]
pub struct OrthogonalDynamics {
    space: HilbertSpace,
    z: DVector<f64>,
    zz: f64,
    projected: DMatrix<f64>,
    restricted: Generator,
}

impl OrthogonalDynamics {
    pub fn new(l: &Generator, z: &DVector<f64>) -> Result<Self> {
        let space = l.space().clone();
        let zz = space.inner(z, z)?;
        if zz == 0.0 {
            return Err(Error::DegenerateProjection);
        }
        let p = space.projector(&[z / zz.sqrt()]);
        let q = DMatrix::identity(space.dim(), space.dim()) - p;
        let projected = &q * l.matrix();
        let restricted = Generator::new_projected(&(&projected * &q), &space)?;
        Ok(Self { space, z: z.clone(), zz, projected, restricted })
    }

    /// Matrix of `Q L`.
    pub fn generator_matrix(&self) -> &DMatrix<f64> {
        &self.projected
    }

    /// `Q L Q` as a skew generator.
    pub fn restricted(&self) -> &Generator {
        &self.restricted
    }

    /// `G(t) x`. The `Q H` component is rotated exactly; the component along
    /// `z` goes through the dense exponential of `t Q L`.
    pub fn apply(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.space.check_dim(x)?;
        let along = self.space.inner_unchecked(x, &self.z) / self.zz;
        let perp = x - &self.z * along;
        let mut out = self.restricted.propagate(t, &perp)?;
        if along != 0.0 {
            out += expm(&(&self.projected * t)) * &self.z * along;
        }
        Ok(out)
    }
}

/// `G(t) x` for the Mori projection onto `z`.
pub fn orthogonal_dynamics(l: &Generator, z: &DVector<f64>, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    OrthogonalDynamics::new(l, z)?.apply(t, x)
}

/// Fluctuating force `eta(t) = G(t) Q L z`.
pub fn fluctuating_force(l: &Generator, z: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    MoriModel::new(l, z)?.eta(t)
}

/// Everything derived from a pair `(L, z)` that does not depend on time.
#[derive(Debug, Clone)]
pub struct MoriModel<'a> {
    generator: &'a Generator,
    z: DVector<f64>,
    zz: f64,
    omega: f64,
    lz: DVector<f64>,
    adjoint_lz: DVector<f64>,
    eta0: DVector<f64>,
    orth: OrthogonalDynamics,
}

impl<'a> MoriModel<'a> {
    pub fn new(generator: &'a Generator, z: &DVector<f64>) -> Result<Self> {
        let space = generator.space();
        space.check_dim(z)?;
        let zz = space.inner_unchecked(z, z);
        if zz == 0.0 {
            return Err(Error::DegenerateProjection);
        }
        let lz = generator.matrix() * z;
        let omega = space.inner_unchecked(&lz, z) / zz;
        let adjoint_lz = space.adjoint(generator.matrix()) * z;
        let eta0 = &lz - z * omega;
        let orth = OrthogonalDynamics::new(generator, z)?;
        Ok(Self { generator, z: z.clone(), zz, omega, lz, adjoint_lz, eta0, orth })
    }

    pub fn generator(&self) -> &Generator {
        self.generator
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    /// `(z, z)`.
    pub fn z_norm_sq(&self) -> f64 {
        self.zz
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn orthogonal(&self) -> &OrthogonalDynamics {
        &self.orth
    }

    /// `eta(t) = G(t) Q L z`.
    pub fn eta(&self, t: f64) -> Result<DVector<f64>> {
        // Q L z lies in Q H, where G(t) is the rotation of Q L Q.
        self.orth.restricted.propagate(t, &self.eta0)
    }

    /// `K(t) = (eta(t), L^dagger z) / (z, z)` at one time.
    pub fn kernel_at(&self, eta: &DVector<f64>) -> f64 {
        self.generator.space().inner_unchecked(eta, &self.adjoint_lz) / self.zz
    }

    pub fn decompose(&self, grid: &TimeGrid, exec: Exec) -> Result<MoriDecomposition> {
        let eta: Vec<DVector<f64>> =
            exec.map(grid.len(), |k| self.eta(grid.t(k))).into_iter().collect::<Result<_>>()?;
        let kernel = ScalarSeries::new(*grid, eta.iter().map(|e| self.kernel_at(e)).collect())?;
        Ok(MoriDecomposition {
            space: self.generator.space().clone(),
            z: self.z.clone(),
            omega: self.omega,
            kernel,
            eta,
            grid: *grid,
        })
    }

    /// Per-node residual norm of the GLE with the memory integral discretized
    /// by the composite trapezoid rule.
    pub fn residual(&self, decomposition: &MoriDecomposition, exec: Exec) -> Result<ScalarSeries> {
        let grid = decomposition.grid;
        let space = self.generator.space();
        let n = grid.len();
        let dim = space.dim();
        let dt = grid.dt();
        let traj: Vec<(DVector<f64>, DVector<f64>)> = exec
            .map(n, |k| -> Result<_> {
                let t = grid.t(k);
                Ok((self.generator.propagate(t, &self.z)?, self.generator.propagate(t, &self.lz)?))
            })
            .into_iter()
            .collect::<Result<_>>()?;

        let kv = decomposition.kernel.values();
        let memory: Vec<Vec<f64>> = exec.map(dim, |i| {
            let u: Vec<f64> = traj.iter().map(|(x, _)| x[i]).collect();
            let full = convolve(kv, &u, n);
            (0..n).map(|k| dt * (full[k] - 0.5 * kv[0] * u[k] - 0.5 * kv[k] * u[0])).collect()
        });

        let values = (0..n)
            .map(|k| {
                let (u, du) = &traj[k];
                let mut r = du - u * self.omega - &decomposition.eta[k];
                for (i, m) in memory.iter().enumerate() {
                    r[i] -= m[k];
                }
                space.norm_unchecked(&r)
            })
            .collect();
        ScalarSeries::new(grid, values)
    }

    /// Kernel `g` from the 2FDT read as an equation:
    /// `g(t) = -(U(t) L z, f0) / (z, z) + int_0^t g(s) (U(t - s) z, f0) / (z, z) ds`
    /// with `f0 = L z`.
    pub fn kernel_via_volterra(&self, grid: &TimeGrid, exec: Exec) -> Result<ScalarSeries> {
        let space = self.generator.space();
        let coeffs: Vec<(f64, f64)> = exec
            .map(grid.len(), |k| -> Result<_> {
                let t = grid.t(k);
                let ulz = self.generator.propagate(t, &self.lz)?;
                let uz = self.generator.propagate(t, &self.z)?;
                Ok((
                    -space.inner_unchecked(&ulz, &self.lz) / self.zz,
                    space.inner_unchecked(&uz, &self.lz) / self.zz,
                ))
            })
            .into_iter()
            .collect::<Result<_>>()?;
        let forcing = ScalarSeries::new(*grid, coeffs.iter().map(|c| c.0).collect())?;
        let kernel = ScalarSeries::new(*grid, coeffs.iter().map(|c| c.1).collect())?;
        solve_volterra2_convolution(&kernel, &forcing)
    }
}

/// Drift, kernel and fluctuating forces of `(L, z)` on a grid.
#[derive(Debug, Clone)]
pub struct MoriDecomposition {
    space: HilbertSpace,
    pub z: DVector<f64>,
    pub omega: f64,
    pub kernel: ScalarSeries,
    pub eta: Vec<DVector<f64>>,
    pub grid: TimeGrid,
}

impl MoriDecomposition {
    fn zz(&self) -> f64 {
        self.space.inner_unchecked(&self.z, &self.z)
    }

    /// Max over nodes of `|(eta_k, z)| / (|eta_k| |z|)`.
    pub fn orthogonality_defect(&self) -> f64 {
        let zn = self.zz().sqrt();
        self.eta
            .iter()
            .map(|e| {
                let en = self.space.norm_unchecked(e);
                if en == 0.0 {
                    0.0
                } else {
                    self.space.inner_unchecked(e, &self.z).abs() / (en * zn)
                }
            })
            .fold(0.0, f64::max)
    }

    /// Max over `j >= k` of `|(eta_j, eta_k) - (eta_{j-k}, eta_0)| / |eta_0|^2`.
    pub fn stationarity_defect(&self, exec: Exec) -> f64 {
        let e0 = &self.eta[0];
        let scale = self.space.inner_unchecked(e0, e0);
        if scale == 0.0 {
            return 0.0;
        }
        let lagged: Vec<f64> = self.eta.iter().map(|e| self.space.inner_unchecked(e, e0)).collect();
        exec.map(self.eta.len(), |j| {
            (0..=j)
                .map(|k| (self.space.inner_unchecked(&self.eta[j], &self.eta[k]) - lagged[j - k]).abs())
                .fold(0.0, f64::max)
        })
        .into_iter()
        .fold(0.0, f64::max)
            / scale
    }

    /// Max over nodes of `|K_k + (eta_k, eta_0) / (z, z)| / |K(0)|`.
    pub fn fdt_defect(&self) -> f64 {
        let zz = self.zz();
        let k0 = self.kernel[0].abs();
        let e0 = &self.eta[0];
        let worst = self
            .eta
            .iter()
            .zip(self.kernel.values())
            .map(|(e, k)| (k + self.space.inner_unchecked(e, e0) / zz).abs())
            .fold(0.0, f64::max);
        if k0 == 0.0 {
            worst
        } else {
            worst / k0
        }
    }

    pub fn eta_norms(&self) -> Vec<f64> {
        self.eta.iter().map(|e| self.space.norm_unchecked(e)).collect()
    }

    pub fn export(&self, residual: Option<&ScalarSeries>) -> MoriExport {
        MoriExport {
            omega: self.omega,
            grid: GridExport { dt: self.grid.dt(), n_steps: self.grid.n_steps() },
            kernel: self.kernel.values().to_vec(),
            eta_norms: self.eta_norms(),
            residual: residual.map(|r| r.values().to_vec()).unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridExport {
    pub dt: f64,
    pub n_steps: usize,
}

/// JSON layout of an exported decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoriExport {
    pub omega: f64,
    pub grid: GridExport,
    pub kernel: Vec<f64>,
    pub eta_norms: Vec<f64>,
    pub residual: Vec<f64>,
}

/// `K(t_k)` from the exact fluctuating forces.
pub fn memory_kernel_exact(l: &Generator, z: &DVector<f64>, grid: &TimeGrid) -> Result<ScalarSeries> {
    Ok(MoriModel::new(l, z)?.decompose(grid, Exec::default())?.kernel)
}

/// GLE residual norms at every grid node.
pub fn gle_residual(l: &Generator, z: &DVector<f64>, grid: &TimeGrid) -> Result<ScalarSeries> {
    let model = MoriModel::new(l, z)?;
    let dec = model.decompose(grid, Exec::default())?;
    model.residual(&dec, Exec::default())
}

/// Kernel from the projection-free Volterra equation.
pub fn kernel_via_2fdt_volterra(l: &Generator, z: &DVector<f64>, grid: &TimeGrid) -> Result<ScalarSeries> {
    MoriModel::new(l, z)?.kernel_via_volterra(grid, Exec::default())
}
