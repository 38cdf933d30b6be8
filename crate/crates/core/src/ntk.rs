//! Tangent kernels of tensor chains.
//!
//! The empirical kernel of a finite chain is the Gram matrix of response
//! gradients with a per-site learning rate `eta_k = (l_k r_k)^{-1/2}`
//! folded into each term:
//!
//! ```text
//! K_ij = sum_k eta_k < d psi(x_i) / d A(k), d psi(x_j) / d A(k) >
//! ```
//!
//! The same rate scales the parameter-space flow in [`crate::flow`], so the
//! kernel measured here is exactly the one that drives response dynamics.
//! Its large-bond-dimension limit is a static matrix built from per-site
//! Mercer kernels,
//!
//! ```text
//! K_ij -> sum_k k(x_k^i, x_k^j) * prod_{l != k} sigma_l^2 k(x_l^i, x_l^j),
//! ```
//!
//! computed by [`analytic_ntk`].

use nalgebra::{DMatrix, SymmetricEigen};

use crate::chain::{ChainSpec, TensorChain};
use crate::csvio;
use crate::dataset::dataset_id;
use crate::error::{Error, Result};
use crate::features::{FeatureMap, SiteKernel};
use crate::flow::Trajectory;
use crate::stats::{median, TrialPlan};

/// Where a kernel matrix came from.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    /// Measured on a concrete chain at training time `time`.
    Empirical { chain_id: String, time: f64 },
    /// The infinite-bond-dimension limit formula.
    AnalyticLimit,
}

/// A symmetric kernel Gram matrix over one dataset.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
    provenance: Provenance,
    dataset_id: String,
}

impl KernelMatrix {
    /// Wrap a matrix, enforcing finiteness and symmetry to `1e-12`
    /// relative to the largest entry.
    pub fn new(values: DMatrix<f64>, provenance: Provenance, dataset_id: String) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::Shape(format!(
                "kernel matrix must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("kernel matrix contains non-finite entries".into()));
        }
        let scale = values.amax().max(1e-300);
        for i in 0..values.nrows() {
            for j in i + 1..values.ncols() {
                if (values[(i, j)] - values[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Numerical(format!(
                        "kernel matrix asymmetric at ({i}, {j}): {} vs {}",
                        values[(i, j)],
                        values[(j, i)]
                    )));
                }
            }
        }
        Ok(Self { values, provenance, dataset_id })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.norm()
    }

    /// `|K - other|_F / |other|_F`.
    pub fn rel_frobenius_distance(&self, other: &KernelMatrix) -> f64 {
        (&self.values - &other.values).norm() / other.values.norm()
    }

    pub(crate) fn with_time(mut self, t: f64) -> Self {
        if let Provenance::Empirical { time, .. } = &mut self.provenance {
            *time = t;
        }
        self
    }

    /// CSV export: header row of sample ids, then the matrix rows at 17
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let m = self.dim();
        let ids: Vec<String> = (0..m).map(|i| format!("p{i}")).collect();
        let header: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
        let rows: Vec<Vec<String>> = (0..m)
            .map(|i| (0..m).map(|j| csvio::fmt_f64(self.values[(i, j)])).collect())
            .collect();
        csvio::render_csv(&header, &rows)
    }
}

/// Empirical tangent kernel of `chain` on `points`; the upper triangle is
/// computed from factored gradient inner products and mirrored.
pub fn empirical_ntk(
    chain: &TensorChain,
    maps: &[FeatureMap],
    points: &[Vec<f64>],
) -> Result<KernelMatrix> {
    if points.is_empty() {
        return Err(Error::Input("empirical kernel needs a nonempty dataset".into()));
    }
    let envs: Vec<_> = points
        .iter()
        .map(|x| chain.environments(maps, x))
        .collect::<Result<_>>()?;
    let etas = chain.learning_rates();
    let m = points.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut acc = 0.0;
            for (site, eta) in etas.iter().enumerate() {
                acc += eta * envs[i].grad(site).dot(envs[j].grad(site));
            }
            k[(i, j)] = acc;
            k[(j, i)] = acc;
        }
    }
    KernelMatrix::new(
        k,
        Provenance::Empirical { chain_id: chain.id(), time: 0.0 },
        dataset_id(points),
    )
}

/// Large-bond-dimension limit kernel from per-site Mercer kernels. Site
/// `k`'s own variance does not multiply its kernel factor; every other
/// site contributes `sigma_l^2 k(x_l^i, x_l^j)`.
pub fn analytic_ntk(
    kernels: &[SiteKernel],
    sigmas: &[f64],
    points: &[Vec<f64>],
) -> Result<KernelMatrix> {
    if points.is_empty() {
        return Err(Error::Input("analytic kernel needs a nonempty dataset".into()));
    }
    let n = kernels.len();
    if sigmas.len() != n {
        return Err(Error::Shape(format!(
            "{} sigmas for {} site kernels",
            sigmas.len(),
            n
        )));
    }
    for p in points {
        if p.len() != n {
            return Err(Error::Shape(format!(
                "point of length {} for {} site kernels",
                p.len(),
                n
            )));
        }
    }
    let m = points.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            // Per-site kernel values once, then the sum over the skipped site.
            let mut vals = Vec::with_capacity(n);
            for (site, kern) in kernels.iter().enumerate() {
                vals.push(kern.eval(points[i][site], points[j][site])?);
            }
            let mut acc = 0.0;
            for skip in 0..n {
                let mut term = vals[skip];
                for l in 0..n {
                    if l != skip {
                        term *= sigmas[l] * sigmas[l] * vals[l];
                    }
                }
                acc += term;
            }
            k[(i, j)] = acc;
            k[(j, i)] = acc;
        }
    }
    KernelMatrix::new(k, Provenance::AnalyticLimit, dataset_id(points))
}

/// One row of a bond-dimension convergence study.
#[derive(Clone, Debug)]
pub struct ConvergencePoint {
    pub bond_dim: usize,
    pub mean_rel_error: f64,
    /// Standard error of the mean; NaN when only one trial ran.
    pub std_error: f64,
    pub median_rel_error: f64,
    pub samples: Vec<f64>,
}

/// Frobenius relative error between empirical and analytic kernels over
/// seeded trials, per bond dimension.
pub fn convergence_curve(
    bond_dims: &[usize],
    trials: usize,
    maps: &[FeatureMap],
    sigmas: &[f64],
    periodic: bool,
    points: &[Vec<f64>],
    base_seed: u64,
) -> Result<Vec<ConvergencePoint>> {
    if trials == 0 {
        return Err(Error::Input("convergence study needs at least one trial".into()));
    }
    let n = maps.len();
    let kernels: Vec<SiteKernel> = maps.iter().map(|m| SiteKernel::Map(m.clone())).collect();
    let analytic = analytic_ntk(&kernels, sigmas, points)?;
    let phys: Vec<usize> = maps.iter().map(|m| m.phys_dim()).collect();
    let plan = TrialPlan::new(base_seed, trials);
    let mut rows = Vec::with_capacity(bond_dims.len());
    for &d in bond_dims {
        let spec = ChainSpec {
            phys_dims: phys.clone(),
            bonds: ChainSpec::uniform(n, 2, d, periodic).bonds,
            periodic,
        };
        let mut errors = Vec::with_capacity(trials);
        for i in 0..trials {
            let chain = TensorChain::init_random(&spec, sigmas, plan.seed(i))?;
            let emp = empirical_ntk(&chain, maps, points)?;
            errors.push(emp.rel_frobenius_distance(&analytic));
        }
        let mean = errors.iter().sum::<f64>() / trials as f64;
        let std_error = if trials > 1 {
            let var =
                errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (trials - 1) as f64;
            (var / trials as f64).sqrt()
        } else {
            f64::NAN
        };
        rows.push(ConvergencePoint {
            bond_dim: d,
            mean_rel_error: mean,
            std_error,
            median_rel_error: median(&errors),
            samples: errors,
        });
    }
    Ok(rows)
}

/// Outcome of a positive-definiteness check.
#[derive(Clone, Copy, Debug)]
pub struct PdReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub positive: bool,
}

/// Smallest eigenvalue of a kernel matrix via a symmetric eigensolve on
/// the explicitly symmetrized matrix; the verdict allows a `1e-10`
/// relative floor so floating-point noise cannot flip it.
pub fn check_positive_definite(k: &KernelMatrix) -> Result<PdReport> {
    let sym = (k.values() + k.values().transpose()) * 0.5;
    let eigen = SymmetricEigen::new(sym);
    let mut lambda_min = f64::INFINITY;
    let mut lambda_max = f64::NEG_INFINITY;
    for &v in eigen.eigenvalues.iter() {
        lambda_min = lambda_min.min(v);
        lambda_max = lambda_max.max(v);
    }
    Ok(PdReport {
        lambda_min,
        lambda_max,
        positive: lambda_min > -1e-10 * lambda_max.abs(),
    })
}

/// Relative Frobenius drift of recorded kernel snapshots from the `t = 0`
/// snapshot.
pub fn ntk_drift(traj: &Trajectory) -> Result<Vec<(f64, f64)>> {
    let snaps = &traj.ntk_snapshots;
    if snaps.is_empty() {
        return Err(Error::Input("trajectory has no kernel snapshots".into()));
    }
    let (t0, k0) = &snaps[0];
    if *t0 != 0.0 {
        return Err(Error::Input("kernel snapshots must start at t = 0".into()));
    }
    let base = k0.frobenius_norm();
    if base == 0.0 {
        return Err(Error::Numerical("initial kernel has zero norm".into()));
    }
    Ok(snaps
        .iter()
        .map(|(t, k)| (*t, (k.values() - k0.values()).norm() / base))
        .collect())
}
