//! Per-site feature maps and the Mercer kernels they induce.
//!
//! A feature map sends one input coordinate to a vector of length equal to
//! the physical dimension of the matching chain site. The full input map is
//! the tensor product of the per-site vectors, so every kernel used here
//! factorizes as a product of per-site kernels `k(x, y) = phi(x) . phi(y)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Tolerance used by [`CustomTable`] when matching tabulated inputs.
const TABLE_TOL: f64 = 1e-9;

/// A per-site feature map `x_i -> phi(x_i)`.
#[derive(Clone, Debug)]
pub enum FeatureMap {
    /// `(1/sqrt(2)) * [x, 1 - x]` on binary inputs. One-hot up to the global
    /// scale, so distinct binary strings give orthogonal product features.
    BornBinary,
    /// `[cos(pi x / 2), sin(pi x / 2)]`; unit norm everywhere.
    TrigPair,
    /// Random Fourier features approximating a Gaussian kernel.
    RandomFourier(RandomFourier),
    /// Tabulated map for hand-built fixtures; exact-match lookup.
    Custom(CustomTable),
}

/// Cos/sin feature pairs with frequencies drawn from `N(0, 1/tau^2)`.
///
/// The self-kernel approximates `exp(-(x - y)^2 / (2 tau^2))` with error
/// `O(width^{-1/2})`; the feature norm is exactly 1 by the cos/sin pairing.
/// The projection seed is stored so a map can be reconstructed bit-exact.
#[derive(Clone, Debug)]
pub struct RandomFourier {
    width: usize,
    tau: f64,
    seed: u64,
    freqs: Vec<f64>,
}

impl RandomFourier {
    pub fn new(width: usize, tau: f64, seed: u64) -> Result<Self> {
        if width < 2 || width % 2 != 0 {
            return Err(Error::Config(format!(
                "random fourier width must be a positive even number, got {width}"
            )));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Config(format!(
                "random fourier bandwidth tau must be positive and finite, got {tau}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / tau).expect("valid std");
        let freqs = (0..width / 2).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self { width, tau, seed, freqs })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Sorted `(input, feature vector)` table; `apply` requires an input within
/// `1e-9` of a tabulated point.
#[derive(Clone, Debug)]
pub struct CustomTable {
    entries: Vec<(f64, Vec<f64>)>,
}

impl CustomTable {
    pub fn new(mut entries: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("custom table needs at least one entry".into()));
        }
        let dim = entries[0].1.len();
        if dim == 0 {
            return Err(Error::Config("custom table features must be non-empty".into()));
        }
        for (x, phi) in &entries {
            if !x.is_finite() || phi.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("custom table entries must be finite".into()));
            }
            if phi.len() != dim {
                return Err(Error::Config(format!(
                    "custom table feature lengths disagree: {} vs {}",
                    phi.len(),
                    dim
                )));
            }
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { entries })
    }

    fn lookup(&self, x: f64) -> Result<&[f64]> {
        let idx = self
            .entries
            .partition_point(|(key, _)| *key < x - TABLE_TOL);
        if idx < self.entries.len() && (self.entries[idx].0 - x).abs() <= TABLE_TOL {
            Ok(&self.entries[idx].1)
        } else {
            Err(Error::Domain(format!("input {x} is not tabulated in custom map")))
        }
    }
}

impl FeatureMap {
    pub fn born() -> Self {
        FeatureMap::BornBinary
    }

    pub fn trig() -> Self {
        FeatureMap::TrigPair
    }

    pub fn random_fourier(width: usize, tau: f64, seed: u64) -> Result<Self> {
        Ok(FeatureMap::RandomFourier(RandomFourier::new(width, tau, seed)?))
    }

    pub fn custom(entries: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        Ok(FeatureMap::Custom(CustomTable::new(entries)?))
    }

    /// Output length of the map; must equal the physical dimension of the
    /// site it feeds.
    pub fn phys_dim(&self) -> usize {
        match self {
            FeatureMap::BornBinary | FeatureMap::TrigPair => 2,
            FeatureMap::RandomFourier(rf) => rf.width,
            FeatureMap::Custom(t) => t.entries[0].1.len(),
        }
    }

    /// Evaluate the map at one coordinate.
    pub fn apply(&self, x: f64) -> Result<Vec<f64>> {
        match self {
            FeatureMap::BornBinary => {
                if x != 0.0 && x != 1.0 {
                    return Err(Error::Domain(format!(
                        "born map requires binary input, got {x}"
                    )));
                }
                let s = std::f64::consts::FRAC_1_SQRT_2;
                Ok(vec![s * x, s * (1.0 - x)])
            }
            FeatureMap::TrigPair => {
                let a = std::f64::consts::FRAC_PI_2 * x;
                Ok(vec![a.cos(), a.sin()])
            }
            FeatureMap::RandomFourier(rf) => {
                let scale = (2.0 / rf.width as f64).sqrt();
                let mut out = Vec::with_capacity(rf.width);
                for &w in &rf.freqs {
                    let wx = w * x;
                    out.push(scale * wx.cos());
                    out.push(scale * wx.sin());
                }
                Ok(out)
            }
            FeatureMap::Custom(table) => table.lookup(x).map(|v| v.to_vec()),
        }
    }

    /// `phi(x) . phi(y)` for this map.
    pub fn kernel(&self, x: f64, y: f64) -> Result<f64> {
        let a = self.apply(x)?;
        let b = self.apply(y)?;
        Ok(a.iter().zip(&b).map(|(u, v)| u * v).sum())
    }
}

/// One factor of a product Mercer kernel: either induced by a concrete
/// feature map or the exact Gaussian closed form. The exact form has no
/// finite feature map and is used where the large-bond-limit formulas call
/// for the kernel value itself.
#[derive(Clone, Debug)]
pub enum SiteKernel {
    Map(FeatureMap),
    GaussianAnalytic { tau: f64 },
}

impl SiteKernel {
    pub fn gaussian(tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Config(format!("gaussian tau must be positive, got {tau}")));
        }
        Ok(SiteKernel::GaussianAnalytic { tau })
    }

    /// `k(x, y)` for this site.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        match self {
            SiteKernel::Map(map) => map.kernel(x, y),
            SiteKernel::GaussianAnalytic { tau } => {
                let d = x - y;
                Ok((-0.5 * d * d / (tau * tau)).exp())
            }
        }
    }
}

/// Per-site kernel evaluated at coordinate `i` of two samples.
pub fn site_kernel(kernel: &SiteKernel, x_i: f64, y_i: f64) -> Result<f64> {
    kernel.eval(x_i, y_i)
}

/// Product kernel `prod_i k^{(i)}(x_i, y_i)` over all sites.
pub fn product_kernel(kernels: &[SiteKernel], x: &[f64], y: &[f64]) -> Result<f64> {
    if kernels.len() != x.len() || kernels.len() != y.len() {
        return Err(Error::Shape(format!(
            "product kernel over {} sites applied to inputs of length {} and {}",
            kernels.len(),
            x.len(),
            y.len()
        )));
    }
    let mut acc = 1.0;
    for (k, (xi, yi)) in kernels.iter().zip(x.iter().zip(y)) {
        acc *= k.eval(*xi, *yi)?;
    }
    Ok(acc)
}

/// Wrap concrete feature maps as site kernels.
pub fn map_kernels(maps: &[FeatureMap]) -> Vec<SiteKernel> {
    maps.iter().map(|m| SiteKernel::Map(m.clone())).collect()
}
