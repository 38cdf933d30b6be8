//! Tensor chains: ordered lists of order-3 site tensors contracted along
//! shared bond indices.
//!
//! A chain of length `n` represents the scalar function
//!
//! ```text
//! psi(x) = sum over {s, alpha} of
//!          A(1)[s_1, a_1, a_2] ... A(n)[s_n, a_n, a_1] * prod_i phi^{s_i}(x_i)
//! ```
//!
//! where each site tensor `A(k)` carries a physical index `s_k` selected by
//! the feature vector `phi(x_k)` and two bond indices shared with its
//! neighbours. The closing contraction traces the last bond back into the
//! first; an open-boundary chain is the special case where both end bonds
//! have dimension 1 and the trace is trivial, so periodic and open chains
//! share every code path.
//!
//! Evaluation folds the per-site transfer matrices
//! `M_k = sum_s phi^s(x_k) A(k)[s]` left to right and takes the trace:
//! `O(n (|s| D^2 + D^3))` instead of exponential index enumeration.
//! Gradients reuse cached prefix/suffix products of the `M_k`, so all `n`
//! site gradients cost `O(n)` matrix products per sample (see
//! [`Environments`]). The gradient with respect to site `k` factorizes as
//! `phi^s(x_k) * C_k` with a single shared core matrix `C_k`, and the
//! factored form is kept because tangent-kernel assembly consumes gradient
//! inner products wholesale.
//!
//! A chain is a plain value: evaluation and differentiation take `&self`
//! and are safe to call concurrently; training updates need `&mut self`,
//! which also invalidates any outstanding [`Environments`] by borrow rules.
//!
//! Storage is site-major with index order `(s, left, right)`; each physical
//! slice is a contiguous matrix so contraction reads whole matrices per
//! physical index. Serialization is a versioned text record (magic header
//! `MPSNTK1`) of dims, sigmas, seed and row-major values.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::features::FeatureMap;

/// Magic header of the chain serialization format.
pub const MAGIC: &str = "MPSNTK1";

/// `dst += coef * src` entrywise, without a temporary.
pub(crate) fn mat_axpy(dst: &mut DMatrix<f64>, coef: f64, src: &DMatrix<f64>) {
    dst.zip_apply(src, |d, s| *d += coef * s);
}

/// One order-3 site tensor, stored as one `left x right` matrix per
/// physical index, plus the base standard deviation used at initialization.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteTensor {
    mats: Vec<DMatrix<f64>>,
    sigma: f64,
}

impl SiteTensor {
    pub fn zeros(phys: usize, left: usize, right: usize, sigma: f64) -> Result<Self> {
        check_dims(phys, left, right)?;
        check_sigma(sigma)?;
        Ok(Self {
            mats: (0..phys).map(|_| DMatrix::zeros(left, right)).collect(),
            sigma,
        })
    }

    /// Build from explicit per-physical-index matrices.
    pub fn from_mats(mats: Vec<DMatrix<f64>>, sigma: f64) -> Result<Self> {
        if mats.is_empty() {
            return Err(Error::Config("site tensor needs at least one physical slice".into()));
        }
        check_sigma(sigma)?;
        let (left, right) = (mats[0].nrows(), mats[0].ncols());
        check_dims(mats.len(), left, right)?;
        for m in &mats {
            if m.nrows() != left || m.ncols() != right {
                return Err(Error::Shape(format!(
                    "inconsistent slice shapes in site tensor: {}x{} vs {}x{}",
                    m.nrows(),
                    m.ncols(),
                    left,
                    right
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("site tensor contains non-finite values".into()));
            }
        }
        Ok(Self { mats, sigma })
    }

    /// Sample entries i.i.d. `N(0, sigma^2 / sqrt(left * right))`.
    fn sample(rng: &mut ChaCha8Rng, phys: usize, left: usize, right: usize, sigma: f64) -> Self {
        let std = sigma / ((left * right) as f64).powf(0.25);
        let normal = Normal::new(0.0, std).expect("positive std");
        let mats = (0..phys)
            .map(|_| {
                let mut m = DMatrix::zeros(left, right);
                // Row-major fill so the draw order matches the storage layout.
                for a in 0..left {
                    for b in 0..right {
                        m[(a, b)] = normal.sample(rng);
                    }
                }
                m
            })
            .collect();
        Self { mats, sigma }
    }

    pub fn phys_dim(&self) -> usize {
        self.mats.len()
    }

    pub fn left_dim(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn right_dim(&self) -> usize {
        self.mats[0].ncols()
    }

    /// Base standard deviation before the bond rescaling.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mat(&self, s: usize) -> &DMatrix<f64> {
        &self.mats[s]
    }

    pub fn mat_mut(&mut self, s: usize) -> &mut DMatrix<f64> {
        &mut self.mats[s]
    }

    pub fn get(&self, s: usize, a: usize, b: usize) -> f64 {
        self.mats[s][(a, b)]
    }

    pub fn set(&mut self, s: usize, a: usize, b: usize, v: f64) {
        self.mats[s][(a, b)] = v;
    }

    pub fn scale(&mut self, c: f64) {
        for m in &mut self.mats {
            *m *= c;
        }
    }

    /// Largest absolute entrywise difference to another site of equal shape.
    pub fn max_abs_diff(&self, other: &SiteTensor) -> f64 {
        self.mats
            .iter()
            .zip(&other.mats)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.mats
            .iter()
            .flat_map(|m| m.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }
}

fn check_dims(phys: usize, left: usize, right: usize) -> Result<()> {
    if phys == 0 || left == 0 || right == 0 {
        return Err(Error::Config(format!(
            "all site dimensions must be >= 1, got phys={phys}, left={left}, right={right}"
        )));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("init sigma must be positive and finite, got {sigma}")));
    }
    Ok(())
}

/// Dimension layout of a chain, used by [`TensorChain::init_random`].
///
/// `bonds` has `n + 1` entries: `bonds[k]` is the dimension between sites
/// `k - 1` and `k`, with `bonds[0]` the left bond of the first site and
/// `bonds[n]` the right bond of the last. Periodic chains close the trace,
/// so `bonds[0] == bonds[n]`; open chains require both end bonds to be 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    pub phys_dims: Vec<usize>,
    pub bonds: Vec<usize>,
    pub periodic: bool,
}

impl ChainSpec {
    /// Uniform spec: every site has physical dimension `phys` and every
    /// internal bond has dimension `bond` (end bonds are 1 when open).
    pub fn uniform(n: usize, phys: usize, bond: usize, periodic: bool) -> Self {
        let bonds = if periodic {
            vec![bond; n + 1]
        } else {
            let mut b = vec![bond; n + 1];
            b[0] = 1;
            b[n] = 1;
            b
        };
        ChainSpec { phys_dims: vec![phys; n], bonds, periodic }
    }

    pub fn len(&self) -> usize {
        self.phys_dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phys_dims.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.phys_dims.len();
        if n == 0 {
            return Err(Error::Config("chain must have at least one site".into()));
        }
        if self.bonds.len() != n + 1 {
            return Err(Error::Config(format!(
                "chain spec needs {} bond dims for {} sites, got {}",
                n + 1,
                n,
                self.bonds.len()
            )));
        }
        for (&p, &b) in self.phys_dims.iter().zip(&self.bonds) {
            if p == 0 || b == 0 {
                return Err(Error::Config("all dimensions must be >= 1".into()));
            }
        }
        if self.bonds[n] == 0 {
            return Err(Error::Config("all dimensions must be >= 1".into()));
        }
        if self.periodic && self.bonds[0] != self.bonds[n] {
            return Err(Error::Config(format!(
                "periodic chain must close: first bond {} != last bond {}",
                self.bonds[0], self.bonds[n]
            )));
        }
        if !self.periodic && (self.bonds[0] != 1 || self.bonds[n] != 1) {
            return Err(Error::Config(format!(
                "open chain needs end bonds of dimension 1, got {} and {}",
                self.bonds[0], self.bonds[n]
            )));
        }
        Ok(())
    }
}

/// An ordered chain of site tensors with a closing convention.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorChain {
    sites: Vec<SiteTensor>,
    periodic: bool,
    init_seed: Option<u64>,
}

impl TensorChain {
    /// Assemble a chain from explicit sites, checking the bond invariants.
    pub fn from_sites(sites: Vec<SiteTensor>, periodic: bool) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Config("chain must have at least one site".into()));
        }
        let n = sites.len();
        for k in 0..n - 1 {
            if sites[k].right_dim() != sites[k + 1].left_dim() {
                return Err(Error::Shape(format!(
                    "bond mismatch between sites {} and {}: {} vs {}",
                    k,
                    k + 1,
                    sites[k].right_dim(),
                    sites[k + 1].left_dim()
                )));
            }
        }
        if periodic {
            if sites[n - 1].right_dim() != sites[0].left_dim() {
                return Err(Error::Shape(format!(
                    "periodic chain must close: last right bond {} != first left bond {}",
                    sites[n - 1].right_dim(),
                    sites[0].left_dim()
                )));
            }
        } else if sites[0].left_dim() != 1 || sites[n - 1].right_dim() != 1 {
            return Err(Error::Shape(format!(
                "open chain needs end bonds of dimension 1, got {} and {}",
                sites[0].left_dim(),
                sites[n - 1].right_dim()
            )));
        }
        Ok(Self { sites, periodic, init_seed: None })
    }

    /// Draw a chain with entries i.i.d. `N(0, sigma_k^2 / sqrt(l_k r_k))`
    /// per site; deterministic given the seed.
    pub fn init_random(spec: &ChainSpec, sigmas: &[f64], seed: u64) -> Result<Self> {
        spec.validate()?;
        let n = spec.len();
        if sigmas.len() != n {
            return Err(Error::Config(format!(
                "need {} sigmas for {} sites, got {}",
                n,
                n,
                sigmas.len()
            )));
        }
        for &s in sigmas {
            check_sigma(s)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sites = (0..n)
            .map(|k| {
                SiteTensor::sample(&mut rng, spec.phys_dims[k], spec.bonds[k], spec.bonds[k + 1], sigmas[k])
            })
            .collect();
        Ok(Self { sites, periodic: spec.periodic, init_seed: Some(seed) })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn init_seed(&self) -> Option<u64> {
        self.init_seed
    }

    pub fn site(&self, k: usize) -> &SiteTensor {
        &self.sites[k]
    }

    pub fn site_mut(&mut self, k: usize) -> &mut SiteTensor {
        &mut self.sites[k]
    }

    pub fn sites(&self) -> &[SiteTensor] {
        &self.sites
    }

    pub fn spec(&self) -> ChainSpec {
        let mut bonds: Vec<usize> = self.sites.iter().map(|s| s.left_dim()).collect();
        bonds.push(self.sites[self.len() - 1].right_dim());
        ChainSpec {
            phys_dims: self.sites.iter().map(|s| s.phys_dim()).collect(),
            bonds,
            periodic: self.periodic,
        }
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.sites.iter().map(|s| s.sigma()).collect()
    }

    /// Per-site learning rates `eta_k = (l_k r_k)^{-1/2}`; the same scaling
    /// enters the tangent kernel and the parameter-space flow.
    pub fn learning_rates(&self) -> Vec<f64> {
        self.sites
            .iter()
            .map(|s| 1.0 / ((s.left_dim() * s.right_dim()) as f64).sqrt())
            .collect()
    }

    /// Short identifier used in kernel provenance records.
    pub fn id(&self) -> String {
        match self.init_seed {
            Some(seed) => format!("mps-seed{seed}"),
            None => "mps-explicit".to_string(),
        }
    }

    pub fn check_maps(&self, maps: &[FeatureMap]) -> Result<()> {
        if maps.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} feature maps for a chain of {} sites",
                maps.len(),
                self.len()
            )));
        }
        for (k, (m, s)) in maps.iter().zip(&self.sites).enumerate() {
            if m.phys_dim() != s.phys_dim() {
                return Err(Error::Shape(format!(
                    "feature map at site {} has length {}, site physical dimension is {}",
                    k,
                    m.phys_dim(),
                    s.phys_dim()
                )));
            }
        }
        Ok(())
    }

    fn check_input(&self, maps: &[FeatureMap], x: &[f64]) -> Result<()> {
        self.check_maps(maps)?;
        if x.len() != self.len() {
            return Err(Error::Shape(format!(
                "input of length {} for a chain of {} sites",
                x.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// Transfer matrix `M_k = sum_s phi[s] * A(k)[s]`.
    pub fn transfer_matrix(&self, k: usize, phi: &[f64]) -> DMatrix<f64> {
        let site = &self.sites[k];
        let mut m = DMatrix::zeros(site.left_dim(), site.right_dim());
        for (s, &w) in phi.iter().enumerate() {
            if w != 0.0 {
                mat_axpy(&mut m, w, site.mat(s));
            }
        }
        m
    }

    /// Contract the chain against per-site features by a left-to-right fold.
    pub fn evaluate(&self, maps: &[FeatureMap], x: &[f64]) -> Result<f64> {
        self.check_input(maps, x)?;
        let mut acc = self.transfer_matrix(0, &maps[0].apply(x[0])?);
        for k in 1..self.len() {
            acc = acc * self.transfer_matrix(k, &maps[k].apply(x[k])?);
        }
        Ok(acc.trace())
    }

    /// Build the full evaluation/differentiation record for one sample.
    pub fn environments(&self, maps: &[FeatureMap], x: &[f64]) -> Result<Environments> {
        self.check_input(maps, x)?;
        let phis: Vec<Vec<f64>> = maps
            .iter()
            .zip(x)
            .map(|(m, &xi)| m.apply(xi))
            .collect::<Result<_>>()?;
        Ok(Environments::build(self, phis))
    }

    /// Dense gradient of the response with respect to site `k`, one matrix
    /// per physical index. Convenience wrapper over [`Self::environments`];
    /// computing several sites this way repeats work the environments
    /// object shares.
    pub fn grad_site(&self, maps: &[FeatureMap], x: &[f64], k: usize) -> Result<Vec<DMatrix<f64>>> {
        if k >= self.len() {
            return Err(Error::Input(format!(
                "site index {} out of range for a chain of {} sites",
                k,
                self.len()
            )));
        }
        Ok(self.environments(maps, x)?.grad(k).dense())
    }

    pub fn scale_site(&mut self, k: usize, c: f64) -> Result<()> {
        if k >= self.len() {
            return Err(Error::Input(format!(
                "site index {} out of range for a chain of {} sites",
                k,
                self.len()
            )));
        }
        self.sites[k].scale(c);
        Ok(())
    }

    /// Sup over sites of the max-abs entrywise difference to another chain.
    pub fn max_param_diff(&self, other: &TensorChain) -> f64 {
        self.sites
            .iter()
            .zip(&other.sites)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub(crate) fn add_scaled_tangent(&mut self, tangent: &ChainTangent, c: f64) {
        for (site, tsite) in self.sites.iter_mut().zip(&tangent.sites) {
            for (s, delta) in tsite.iter().enumerate() {
                mat_axpy(&mut site.mats[s], c, delta);
            }
        }
    }

    /// Write the versioned text record.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "periodic {}", if self.periodic { 1 } else { 0 })?;
        match self.init_seed {
            Some(s) => writeln!(w, "seed {s}")?,
            None => writeln!(w, "seed -")?,
        }
        writeln!(w, "sites {}", self.len())?;
        for site in &self.sites {
            writeln!(
                w,
                "site {} {} {} {}",
                site.phys_dim(),
                site.left_dim(),
                site.right_dim(),
                crate::csvio::fmt_f64(site.sigma())
            )?;
            for s in 0..site.phys_dim() {
                for a in 0..site.left_dim() {
                    for b in 0..site.right_dim() {
                        writeln!(w, "{}", crate::csvio::fmt_f64(site.get(s, a, b)))?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Read a record produced by [`Self::save`].
    pub fn load<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let mut next = || -> Result<String> {
            match lines.next() {
                Some(Ok(l)) => Ok(l),
                Some(Err(e)) => Err(Error::Io(e)),
                None => Err(Error::Format("unexpected end of chain record".into())),
            }
        };
        let header = next()?;
        if header.trim() != MAGIC {
            return Err(Error::Format(format!(
                "bad magic header: expected {MAGIC}, got {:?}",
                header.trim()
            )));
        }
        let periodic = match parse_field(&next()?, "periodic")?.as_str() {
            "1" => true,
            "0" => false,
            other => return Err(Error::Format(format!("bad periodic flag {other:?}"))),
        };
        let seed_str = parse_field(&next()?, "seed")?;
        let init_seed = if seed_str == "-" {
            None
        } else {
            Some(
                seed_str
                    .parse::<u64>()
                    .map_err(|e| Error::Format(format!("bad seed {seed_str:?}: {e}")))?,
            )
        };
        let n: usize = parse_field(&next()?, "sites")?
            .parse()
            .map_err(|e| Error::Format(format!("bad site count: {e}")))?;
        let mut sites = Vec::with_capacity(n);
        for _ in 0..n {
            let line = next()?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 5 || parts[0] != "site" {
                return Err(Error::Format(format!("bad site header {line:?}")));
            }
            let phys: usize = parts[1].parse().map_err(|e| Error::Format(format!("bad phys dim: {e}")))?;
            let left: usize = parts[2].parse().map_err(|e| Error::Format(format!("bad left dim: {e}")))?;
            let right: usize = parts[3].parse().map_err(|e| Error::Format(format!("bad right dim: {e}")))?;
            let sigma: f64 = parts[4].parse().map_err(|e| Error::Format(format!("bad sigma: {e}")))?;
            let mut site = SiteTensor::zeros(phys, left, right, sigma)?;
            for s in 0..phys {
                for a in 0..left {
                    for b in 0..right {
                        let v: f64 = next()?
                            .trim()
                            .parse()
                            .map_err(|e| Error::Format(format!("bad value: {e}")))?;
                        site.set(s, a, b, v);
                    }
                }
            }
            sites.push(site);
        }
        let mut chain = TensorChain::from_sites(sites, periodic)?;
        chain.init_seed = init_seed;
        Ok(chain)
    }

    pub fn save_to_string(&self) -> String {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("record is ASCII")
    }
}

fn parse_field(line: &str, key: &str) -> Result<String> {
    let mut it = line.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(k), Some(v), None) if k == key => Ok(v.to_string()),
        _ => Err(Error::Format(format!("expected `{key} <value>`, got {line:?}"))),
    }
}

/// Per-site tangent direction with the same shape as a chain's parameters.
#[derive(Clone, Debug)]
pub(crate) struct ChainTangent {
    pub(crate) sites: Vec<Vec<DMatrix<f64>>>,
}

impl ChainTangent {
    pub(crate) fn zeros_like(chain: &TensorChain) -> Self {
        ChainTangent {
            sites: chain
                .sites
                .iter()
                .map(|s| (0..s.phys_dim()).map(|_| DMatrix::zeros(s.left_dim(), s.right_dim())).collect())
                .collect(),
        }
    }
}

/// Gradient of the response with respect to one site, in factored form:
/// `d psi / d A[s, a, b] = phi[s] * core[(a, b)]`.
#[derive(Clone, Debug)]
pub struct SiteGrad {
    pub phi: Vec<f64>,
    pub core: DMatrix<f64>,
}

impl SiteGrad {
    /// Materialize the dense per-physical-index gradient matrices.
    pub fn dense(&self) -> Vec<DMatrix<f64>> {
        self.phi.iter().map(|&w| &self.core * w).collect()
    }

    pub fn entry(&self, s: usize, a: usize, b: usize) -> f64 {
        self.phi[s] * self.core[(a, b)]
    }

    /// Full inner product over `(s, a, b)` with another gradient of the
    /// same shape, using the factored form.
    pub fn dot(&self, other: &SiteGrad) -> f64 {
        let phi_dot: f64 = self.phi.iter().zip(&other.phi).map(|(u, v)| u * v).sum();
        if phi_dot == 0.0 {
            return 0.0;
        }
        phi_dot * self.core.dot(&other.core)
    }
}

/// Cached partial contractions of one chain against one sample.
///
/// Holds the response value and all per-site gradients, built from prefix
/// and suffix products of the transfer matrices in `O(n)` matrix products.
/// Borrowing the chain immutably pins it: mutating the chain (a training
/// update) first requires dropping the environments, which is exactly the
/// cache invalidation the contract asks for.
pub struct Environments {
    value: f64,
    grads: Vec<SiteGrad>,
}

impl Environments {
    fn build(chain: &TensorChain, phis: Vec<Vec<f64>>) -> Self {
        let n = chain.len();
        let mats: Vec<DMatrix<f64>> = (0..n).map(|k| chain.transfer_matrix(k, &phis[k])).collect();

        // prefix[k] = M_0 ... M_k, suffix[k] = M_k ... M_{n-1}
        let mut prefix: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        prefix.push(mats[0].clone());
        for k in 1..n {
            let next = &prefix[k - 1] * &mats[k];
            prefix.push(next);
        }
        // suffix[0] is never read (the k = 0 gradient uses suffix[1]); the
        // placeholder avoids one wasted product per sample.
        let mut suffix: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); n];
        suffix[n - 1] = mats[n - 1].clone();
        for k in (1..n.saturating_sub(1)).rev() {
            suffix[k] = &mats[k] * &suffix[k + 1];
        }

        let value = prefix[n - 1].trace();

        // core_k = (R_k L_k)^T with L_k = M_0..M_{k-1}, R_k = M_{k+1}..M_{n-1};
        // missing factors at the ends are identities and are skipped.
        let grads = (0..n)
            .map(|k| {
                let rl = match (k + 1 < n, k > 0) {
                    (true, true) => &suffix[k + 1] * &prefix[k - 1],
                    (true, false) => suffix[k + 1].clone(),
                    (false, true) => prefix[k - 1].clone(),
                    (false, false) => {
                        DMatrix::identity(chain.sites[0].left_dim(), chain.sites[0].left_dim())
                    }
                };
                SiteGrad { phi: phis[k].clone(), core: rl.transpose() }
            })
            .collect();

        Environments { value, grads }
    }

    /// Response value `psi(x)`.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Gradient with respect to site `k` in factored form.
    pub fn grad(&self, k: usize) -> &SiteGrad {
        &self.grads[k]
    }

    pub fn grads(&self) -> &[SiteGrad] {
        &self.grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMap;

    fn trig_maps(n: usize) -> Vec<FeatureMap> {
        (0..n).map(|_| FeatureMap::trig()).collect()
    }

    #[test]
    fn single_site_unit_bond_draws_unit_variance() {
        // 1x1 bonds leave the rescaling factor at 1.
        let spec = ChainSpec::uniform(1, 2, 1, true);
        let chain = TensorChain::init_random(&spec, &[1.0], 5).unwrap();
        let site = chain.site(0);
        assert_eq!(site.phys_dim(), 2);
        assert_eq!((site.left_dim(), site.right_dim()), (1, 1));
        assert!(site.get(0, 0, 0) != site.get(1, 0, 0));
    }

    #[test]
    fn init_variance_follows_bond_rescaling() {
        // Bonds 4x4 everywhere: entry variance sigma^2 / sqrt(16) = 1/4.
        let spec = ChainSpec::uniform(2, 32, 4, true);
        let mut values = Vec::new();
        for seed in 0..10 {
            let chain = TensorChain::init_random(&spec, &[1.0, 1.0], seed).unwrap();
            for site in chain.sites() {
                for s in 0..site.phys_dim() {
                    values.extend(site.mat(s).iter().copied());
                }
            }
        }
        assert!(values.len() >= 10_000);
        let var = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
        assert!((var - 0.25).abs() < 0.025, "sample variance {var}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = ChainSpec::uniform(3, 2, 5, true);
        let a = TensorChain::init_random(&spec, &[1.0, 0.5, 2.0], 123).unwrap();
        let b = TensorChain::init_random(&spec, &[1.0, 0.5, 2.0], 123).unwrap();
        assert_eq!(a, b);
        let c = TensorChain::init_random(&spec, &[1.0, 0.5, 2.0], 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(ChainSpec::uniform(0, 2, 2, true).validate().is_err());
        assert!(ChainSpec { phys_dims: vec![2], bonds: vec![2, 3], periodic: true }
            .validate()
            .is_err());
        assert!(ChainSpec { phys_dims: vec![2], bonds: vec![2, 2], periodic: false }
            .validate()
            .is_err());
        let spec = ChainSpec::uniform(2, 2, 2, true);
        assert!(TensorChain::init_random(&spec, &[1.0], 0).is_err());
        assert!(TensorChain::init_random(&spec, &[1.0, -1.0], 0).is_err());
    }

    #[test]
    fn zero_chain_evaluates_to_zero() {
        let sites = vec![
            SiteTensor::zeros(2, 2, 2, 1.0).unwrap(),
            SiteTensor::zeros(2, 2, 2, 1.0).unwrap(),
        ];
        let chain = TensorChain::from_sites(sites, true).unwrap();
        let maps = trig_maps(2);
        for &x in &[[0.0, 0.0], [0.3, -1.2], [5.0, 2.0]] {
            assert_eq!(chain.evaluate(&maps, &x).unwrap(), 0.0);
        }
    }

    #[test]
    fn identity_slice_chain_contracts_to_trace() {
        // Two sites with A[s=0] = I, A[s=1] = 0 on bond dimension 2:
        // psi(x) = 2 * phi^0(x_1) * phi^0(x_2).
        let eye = DMatrix::identity(2, 2);
        let zero = DMatrix::zeros(2, 2);
        let site = SiteTensor::from_mats(vec![eye, zero], 1.0).unwrap();
        let chain = TensorChain::from_sites(vec![site.clone(), site], true).unwrap();
        let maps = trig_maps(2);
        let x = [0.3, 0.8];
        let expected = 2.0
            * (std::f64::consts::FRAC_PI_2 * x[0]).cos()
            * (std::f64::consts::FRAC_PI_2 * x[1]).cos();
        let got = chain.evaluate(&maps, &x).unwrap();
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let spec = ChainSpec::uniform(3, 2, 2, true);
        let chain = TensorChain::init_random(&spec, &[1.0; 3], 1).unwrap();
        let maps = trig_maps(3);
        assert!(matches!(chain.evaluate(&maps, &[0.1, 0.2]), Err(Error::Shape(_))));
        assert!(matches!(chain.evaluate(&trig_maps(2), &[0.1, 0.2, 0.3]), Err(Error::Shape(_))));
        let born = vec![FeatureMap::born(); 3];
        let spec3 = ChainSpec::uniform(3, 3, 2, true);
        let chain3 = TensorChain::init_random(&spec3, &[1.0; 3], 1).unwrap();
        assert!(chain3.evaluate(&born, &[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn single_site_gradient_is_feature_broadcast() {
        let spec = ChainSpec::uniform(1, 2, 1, true);
        let chain = TensorChain::init_random(&spec, &[1.0], 3).unwrap();
        let maps = trig_maps(1);
        let x = [0.7];
        let phi = maps[0].apply(x[0]).unwrap();
        let grad = chain.grad_site(&maps, &x, 0).unwrap();
        for s in 0..2 {
            assert_eq!(grad[s].nrows(), 1);
            assert!((grad[s][(0, 0)] - phi[s]).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_ignores_the_site_it_differentiates() {
        // Multilinearity: zeroing site k kills the value but not grad(k).
        let spec = ChainSpec::uniform(3, 2, 3, true);
        let chain = TensorChain::init_random(&spec, &[1.0; 3], 8).unwrap();
        let maps = trig_maps(3);
        let x = [0.1, 0.5, 0.9];
        let g_before = chain.environments(&maps, &x).unwrap().grad(1).dense();
        let mut zeroed = chain.clone();
        zeroed.scale_site(1, 0.0).unwrap();
        let env = zeroed.environments(&maps, &x).unwrap();
        assert_eq!(env.value(), 0.0);
        let g_after = env.grad(1).dense();
        for (a, b) in g_before.iter().zip(&g_after) {
            assert!((a - b).amax() < 1e-14);
        }
    }

    #[test]
    fn environments_value_matches_evaluate() {
        for periodic in [true, false] {
            let spec = ChainSpec::uniform(4, 2, 3, periodic);
            let chain = TensorChain::init_random(&spec, &[1.0; 4], 21).unwrap();
            let maps = trig_maps(4);
            let x = [0.2, -0.4, 1.1, 0.6];
            let env = chain.environments(&maps, &x).unwrap();
            let direct = chain.evaluate(&maps, &x).unwrap();
            assert!((env.value() - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn out_of_range_site_index_errors() {
        let spec = ChainSpec::uniform(2, 2, 2, true);
        let chain = TensorChain::init_random(&spec, &[1.0; 2], 0).unwrap();
        assert!(chain.grad_site(&trig_maps(2), &[0.1, 0.2], 2).is_err());
    }

    #[test]
    fn serialization_round_trips_bit_exact() {
        for periodic in [true, false] {
            let spec = ChainSpec::uniform(3, 2, 4, periodic);
            let chain = TensorChain::init_random(&spec, &[1.0, 0.7, 1.3], 99).unwrap();
            let text = chain.save_to_string();
            assert!(text.starts_with(MAGIC));
            let back = TensorChain::load(text.as_bytes()).unwrap();
            assert_eq!(chain, back);
            assert_eq!(back.init_seed(), Some(99));
        }
    }

    #[test]
    fn load_rejects_bad_magic() {
        let err = TensorChain::load("MPSNTK9\n".as_bytes());
        assert!(matches!(err, Err(Error::Format(_))));
    }
}
