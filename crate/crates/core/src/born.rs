//! Born machines over binary strings.
//!
//! A Born machine assigns probability `P(x) = psi(x)^2 / Z` to each string
//! `x` in `{0,1}^n`, with `psi` a tensor chain contracted against the
//! binary feature map `(1/sqrt(2)) [x_i, 1 - x_i]` at every site and
//! `Z = sum_{x} psi(x)^2` the partition function over the whole sample
//! space. Training minimizes the negative log-likelihood
//! `L = -sum_i ln psi(x_i)^2 + m ln Z`.
//!
//! Because the feature map is one-hot up to a global `2^{-n/2}`, the
//! response at a string is a single coefficient of the fully contracted
//! chain: `psi(x) = 2^{-n/2} B[s(x)]` with `s_i = 1 - x_i`, and
//! `Z = 2^{-n} sum_s B[s]^2`. The partition function is implemented both
//! by direct enumeration of the sample space and through this coefficient
//! identity (computed by a split-and-join pass that never materializes the
//! full coefficient tensor); the two routes cross-check each other.
//!
//! The training flow runs in response space over the whole sample space:
//! every string carries the direction `d(x) = 2 (c_x / psi(x) - m psi(x) / Z)`
//! (`c_x` = multiplicity of `x` in the training set, zero off the training
//! set, where the first term disappears and no pole arises), and responses
//! move along the `t = 0` empirical kernel, `d psi / dt = K d`. This is the
//! kernel image of the full likelihood gradient: the `Z`-pressure term acts
//! on every string, which is what keeps `Z(t)` asymptotically flat and the
//! closed-form solution honest. The closed form freezes `Z` and a scalar
//! kernel diagonal `K`:
//!
//! ```text
//! psi(t)^2 = (psi_0^2 - Z/m) exp(-4 m K t / Z) + Z/m,
//! P(t)     = 1/m - (1/m - P(0)) exp(-4 m K t / Z),
//! ```
//!
//! with characteristic time `T = Z / (4 m K)`; the trajectory records live
//! `Z(t)` so the frozen-`Z` idealization can be quantified.

use nalgebra::{DMatrix, DVector};

use crate::chain::TensorChain;
use crate::csvio;
use crate::dataset::mask_to_string;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::flow::Integrator;
use crate::stats::{gamma_cdf, gamma_fit, TrialPlan};

/// Largest chain length whose sample space `{0,1}^n` we enumerate.
pub const OMEGA_GUARD: usize = 22;

/// Largest chain length for the response-space flow, which materializes
/// the kernel over the whole sample space.
pub const FLOW_GUARD: usize = 10;

/// Per-step dt halvings before the integrator gives up on a sign crossing.
const MAX_HALVINGS: usize = 20;

/// A tensor chain read as a distribution over binary strings, plus its
/// training multiset.
#[derive(Clone, Debug)]
pub struct BornModel {
    chain: TensorChain,
    training: Vec<Vec<u8>>,
}

impl BornModel {
    /// Every site must have physical dimension 2; training strings must be
    /// binary and of matching length (duplicates allowed and counted).
    pub fn new(chain: TensorChain, training: Vec<Vec<u8>>) -> Result<Self> {
        let n = chain.len();
        for (k, site) in chain.sites().iter().enumerate() {
            if site.phys_dim() != 2 {
                return Err(Error::Shape(format!(
                    "born machine sites need physical dimension 2, site {k} has {}",
                    site.phys_dim()
                )));
            }
        }
        for s in &training {
            if s.len() != n {
                return Err(Error::Shape(format!(
                    "training string of length {} for a chain of {} sites",
                    s.len(),
                    n
                )));
            }
            if s.iter().any(|&b| b > 1) {
                return Err(Error::Domain("training strings must be binary".into()));
            }
        }
        Ok(Self { chain, training })
    }

    pub fn n(&self) -> usize {
        self.chain.len()
    }

    /// Training-set size counting multiplicity.
    pub fn m(&self) -> usize {
        self.training.len()
    }

    pub fn chain(&self) -> &TensorChain {
        &self.chain
    }

    pub fn training(&self) -> &[Vec<u8>] {
        &self.training
    }

    pub fn maps(&self) -> Vec<FeatureMap> {
        vec![FeatureMap::born(); self.n()]
    }

    fn check_guard(&self) -> Result<()> {
        if self.n() > OMEGA_GUARD {
            return Err(Error::Capacity(format!(
                "sample space enumeration is limited to n <= {OMEGA_GUARD}, got n = {}",
                self.n()
            )));
        }
        Ok(())
    }

    /// `psi(x) = 2^{-n/2} tr prod_k A(k)[1 - x_k]`.
    pub fn amplitude(&self, x: &[u8]) -> Result<f64> {
        if x.len() != self.n() {
            return Err(Error::Shape(format!(
                "string of length {} for a chain of {} sites",
                x.len(),
                self.n()
            )));
        }
        let mut acc = self.chain.site(0).mat(1 - x[0] as usize).clone();
        for k in 1..self.n() {
            acc = acc * self.chain.site(k).mat(1 - x[k] as usize);
        }
        Ok(acc.trace() * 0.5f64.powi(self.n() as i32).sqrt())
    }

    /// Partition function by the coefficient identity
    /// `Z = 2^{-n} sum_s (tr prod_k A(k)[s_k])^2`, evaluated by splitting
    /// the chain in half and joining all half-products through one matrix
    /// product of vectorized halves.
    pub fn partition_function(&self) -> Result<f64> {
        self.check_guard()?;
        Ok(self.coefficient_square_sum() * 0.5f64.powi(self.n() as i32))
    }

    /// Partition function by direct enumeration of the sample space.
    pub fn partition_function_enum(&self) -> Result<f64> {
        self.check_guard()?;
        let n = self.n();
        let mut z = 0.0;
        for mask in 0..(1usize << n) {
            let psi = self.amplitude(&mask_to_string(mask, n))?;
            z += psi * psi;
        }
        Ok(z)
    }

    fn half_products(&self, from: usize, to: usize) -> Vec<DMatrix<f64>> {
        // All 2^(to-from) products A(from)[s] ... A(to-1)[s'] by DFS,
        // reusing prefix products along the recursion.
        let mut out = Vec::with_capacity(1 << (to - from));
        let mut stack: Vec<DMatrix<f64>> = Vec::new();
        self.half_rec(from, to, &mut stack, &mut out);
        out
    }

    fn half_rec(
        &self,
        k: usize,
        to: usize,
        stack: &mut Vec<DMatrix<f64>>,
        out: &mut Vec<DMatrix<f64>>,
    ) {
        if k == to {
            out.push(stack.last().expect("nonempty range").clone());
            return;
        }
        for s in 0..2 {
            let next = match stack.last() {
                Some(prev) => prev * self.chain.site(k).mat(s),
                None => self.chain.site(k).mat(s).clone(),
            };
            stack.push(next);
            self.half_rec(k + 1, to, stack, out);
            stack.pop();
        }
    }

    /// `sum_s (tr prod_k A(k)[s_k])^2` without materializing all 2^n
    /// coefficients at once: `tr(L R) = <vec(L), vec(R^T)>`, so the full
    /// table of traces is one `(2^nl x 2^nr)` matrix product.
    fn coefficient_square_sum(&self) -> f64 {
        let n = self.n();
        if n == 1 {
            let site = self.chain.site(0);
            return (0..2).map(|s| site.mat(s).trace().powi(2)).sum();
        }
        let nl = n / 2;
        let left = self.half_products(0, nl);
        let right = self.half_products(nl, n);
        let (p, q) = (left[0].nrows(), left[0].ncols());
        let mut lmat = DMatrix::zeros(p * q, left.len());
        for (idx, l) in left.iter().enumerate() {
            for i in 0..p {
                for j in 0..q {
                    lmat[(i * q + j, idx)] = l[(i, j)];
                }
            }
        }
        let mut rmat = DMatrix::zeros(p * q, right.len());
        for (idx, r) in right.iter().enumerate() {
            for i in 0..p {
                for j in 0..q {
                    rmat[(i * q + j, idx)] = r[(j, i)];
                }
            }
        }
        let traces = lmat.transpose() * rmat;
        traces.iter().map(|t| t * t).sum()
    }

    pub fn probability(&self, x: &[u8]) -> Result<f64> {
        let z = self.partition_function()?;
        if z <= 0.0 {
            return Err(Error::Singular("partition function is zero".into()));
        }
        let psi = self.amplitude(x)?;
        Ok(psi * psi / z)
    }

    /// Negative log-likelihood `-sum_i ln psi(x_i)^2 + m ln Z`.
    pub fn nll(&self) -> Result<f64> {
        let z = self.partition_function()?;
        if z <= 0.0 {
            return Err(Error::Singular("partition function is zero".into()));
        }
        let mut acc = 0.0;
        for x in &self.training {
            let psi = self.amplitude(x)?;
            if psi == 0.0 {
                return Err(Error::Singular(
                    "training string has zero amplitude: log-likelihood undefined".into(),
                ));
            }
            acc -= (psi * psi).ln();
        }
        Ok(acc + self.m() as f64 * z.ln())
    }

    /// Training direction at training string `j`:
    /// `d_j = 2 (1 / psi_j - m psi_j / Z)`.
    pub fn training_direction(&self, j: usize) -> Result<f64> {
        if j >= self.m() {
            return Err(Error::Input(format!(
                "training index {j} out of range for {} strings",
                self.m()
            )));
        }
        let z = self.partition_function()?;
        let psi = self.amplitude(&self.training[j])?;
        if psi == 0.0 {
            return Err(Error::Singular("training direction has a pole at zero amplitude".into()));
        }
        Ok(2.0 * (1.0 / psi - self.m() as f64 * psi / z))
    }
}

/// Time-indexed record of one Born training run.
#[derive(Clone, Debug)]
pub struct BornTrajectory {
    pub times: Vec<f64>,
    /// Live partition function at each recorded time.
    pub z: Vec<f64>,
    /// Amplitudes at the training strings.
    pub responses: Vec<DVector<f64>>,
    /// `P(x) = psi(x)^2 / Z(t)` at the training strings.
    pub probs: Vec<DVector<f64>>,
    /// Empirical kernel diagonal at each training string at `t = 0`.
    pub kernel_diag: DVector<f64>,
    /// Partition function at `t = 0`.
    pub z0: f64,
}

impl BornTrajectory {
    /// CSV columns: `t, Z, p_0..p_{m-1}`.
    pub fn to_csv(&self) -> String {
        let m = self.probs.first().map_or(0, |p| p.len());
        let mut names: Vec<String> = vec!["t".into(), "Z".into()];
        names.extend((0..m).map(|i| format!("p_{i}")));
        let header: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let rows: Vec<Vec<String>> = (0..self.times.len())
            .map(|i| {
                let mut row = vec![csvio::fmt_f64(self.times[i]), csvio::fmt_f64(self.z[i])];
                row.extend(self.probs[i].iter().map(|v| csvio::fmt_f64(*v)));
                row
            })
            .collect();
        csvio::render_csv(&header, &rows)
    }

    /// Measured characteristic time `Z(0) / (4 m K)` with the mean kernel
    /// diagonal recorded at `t = 0`.
    pub fn characteristic_time_at_init(&self, m: usize) -> Result<f64> {
        characteristic_time(self.z0, m, self.kernel_diag.mean())
    }
}

/// Response-space likelihood flow over the whole sample space with the
/// empirical kernel frozen at `t = 0` and live `Z(t)`. Steps that would
/// push a training amplitude across zero are rejected and retried with a
/// halved dt (the direction has a pole there); `stride` thins the record.
pub fn integrate_born_flow(
    model: &BornModel,
    t_end: f64,
    integrator: Integrator,
    stride: usize,
) -> Result<BornTrajectory> {
    integrator.validate()?;
    if stride == 0 {
        return Err(Error::Config("record stride must be >= 1".into()));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::Config(format!("t_end must be nonnegative, got {t_end}")));
    }
    let n = model.n();
    if n > FLOW_GUARD {
        return Err(Error::Capacity(format!(
            "born flow materializes the kernel over 2^n strings; limited to n <= {FLOW_GUARD}, got {n}"
        )));
    }
    if model.m() == 0 {
        return Err(Error::Input("born flow needs a nonempty training set".into()));
    }
    let size = 1usize << n;
    let maps = model.maps();

    // Gradients and kernel over the whole sample space, frozen at t = 0.
    let envs: Vec<_> = (0..size)
        .map(|mask| {
            let x: Vec<f64> = mask_to_string(mask, n).iter().map(|&b| b as f64).collect();
            model.chain.environments(&maps, &x)
        })
        .collect::<Result<_>>()?;
    let etas = model.chain.learning_rates();
    let mut kernel = DMatrix::zeros(size, size);
    for i in 0..size {
        for j in i..size {
            let mut acc = 0.0;
            for (site, eta) in etas.iter().enumerate() {
                acc += eta * envs[i].grad(site).dot(envs[j].grad(site));
            }
            kernel[(i, j)] = acc;
            kernel[(j, i)] = acc;
        }
    }

    let mut psi = DVector::from_iterator(size, envs.iter().map(|e| e.value()));
    let train_masks: Vec<usize> = model
        .training
        .iter()
        .map(|s| s.iter().enumerate().fold(0usize, |acc, (i, &b)| acc | ((b as usize) << i)))
        .collect();
    let mut counts = vec![0.0f64; size];
    for &mask in &train_masks {
        counts[mask] += 1.0;
    }
    for &mask in &train_masks {
        if psi[mask] == 0.0 {
            return Err(Error::Singular(
                "training string has zero amplitude at initialization".into(),
            ));
        }
    }
    let m = model.m() as f64;

    let z_of = |psi: &DVector<f64>| psi.iter().map(|p| p * p).sum::<f64>();
    let direction = |psi: &DVector<f64>, z: f64| -> DVector<f64> {
        DVector::from_iterator(
            size,
            (0..size).map(|x| {
                let head = if counts[x] > 0.0 { counts[x] / psi[x] } else { 0.0 };
                2.0 * (head - m * psi[x] / z)
            }),
        )
    };
    let rhs = |psi: &DVector<f64>| -> DVector<f64> { &kernel * direction(psi, z_of(psi)) };
    let step = |psi: &DVector<f64>, h: f64| -> DVector<f64> {
        match integrator {
            Integrator::Euler { .. } => psi + rhs(psi) * h,
            Integrator::Rk4 { .. } => {
                let k1 = rhs(psi);
                let k2 = rhs(&(psi + &k1 * (h / 2.0)));
                let k3 = rhs(&(psi + &k2 * (h / 2.0)));
                let k4 = rhs(&(psi + &k3 * h));
                psi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
            }
        }
    };

    let z0 = z_of(&psi);
    let kernel_diag =
        DVector::from_iterator(train_masks.len(), train_masks.iter().map(|&x| kernel[(x, x)]));
    let mut traj = BornTrajectory {
        times: Vec::new(),
        z: Vec::new(),
        responses: Vec::new(),
        probs: Vec::new(),
        kernel_diag,
        z0,
    };
    let mut record = |t: f64, psi: &DVector<f64>| {
        let z = z_of(psi);
        traj.times.push(t);
        traj.z.push(z);
        traj.responses
            .push(DVector::from_iterator(train_masks.len(), train_masks.iter().map(|&x| psi[x])));
        traj.probs.push(DVector::from_iterator(
            train_masks.len(),
            train_masks.iter().map(|&x| psi[x] * psi[x] / z),
        ));
    };

    let dt = integrator.dt();
    let steps = if t_end == 0.0 { 0 } else { (t_end / dt).ceil() as usize };
    let mut t = 0.0;
    record(0.0, &psi);
    for i in 0..steps {
        let target = if i + 1 == steps { t_end - t } else { dt };
        let mut h = target;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = step(&psi, h);
            let crossing = train_masks
                .iter()
                .any(|&x| candidate[x] == 0.0 || candidate[x].signum() != psi[x].signum());
            if !crossing {
                psi = candidate;
                t += h;
                accepted = true;
                break;
            }
            h /= 2.0;
        }
        if !accepted {
            return Err(Error::Numerical(format!(
                "step at t = {t} kept crossing a zero amplitude after {MAX_HALVINGS} dt halvings"
            )));
        }
        if (i + 1) % stride == 0 || i + 1 == steps {
            record(t, &psi);
        }
    }
    Ok(traj)
}

/// Closed-form response and probability at time `t`, with `Z` and the
/// scalar kernel diagonal `K` frozen at initialization.
pub fn closed_form_born(psi0: f64, z: f64, m: usize, k: f64, t: f64) -> Result<(f64, f64)> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("partition function must be positive, got {z}")));
    }
    if !(k > 0.0) {
        return Err(Error::Domain(format!("kernel diagonal must be positive, got {k}")));
    }
    if m == 0 {
        return Err(Error::Domain("training-set size must be positive".into()));
    }
    let m = m as f64;
    let decay = (-4.0 * m * k * t / z).exp();
    let psi_sq = (psi0 * psi0 - z / m) * decay + z / m;
    let psi = psi0.signum() * psi_sq.max(0.0).sqrt();
    let p0 = psi0 * psi0 / z;
    let p = 1.0 / m - (1.0 / m - p0) * decay;
    Ok((psi, p))
}

/// Characteristic time `T = Z / (4 m K)` of the probability dynamics.
pub fn characteristic_time(z: f64, m: usize, k: f64) -> Result<f64> {
    if !(z > 0.0) || !(k > 0.0) || m == 0 {
        return Err(Error::Domain(format!(
            "characteristic time needs Z > 0, K > 0, m > 0; got Z = {z}, K = {k}, m = {m}"
        )));
    }
    Ok(z / (4.0 * m as f64 * k))
}

/// The estimate `T = 2^{n-2} / m`, which substitutes the stated mean of
/// the partition function and the unit kernel diagonal for the measured
/// values; kept for comparison against the self-consistent
/// [`characteristic_time`].
pub fn paper_characteristic_time(n: usize, m: usize) -> f64 {
    2f64.powi(n as i32 - 2) / m as f64
}

/// Distributional study of the partition function at initialization.
#[derive(Clone, Debug)]
pub struct ZDistStudy {
    pub bond_dim: usize,
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub samples: Vec<f64>,
    /// Maximum-likelihood gamma fit of the samples.
    pub shape: f64,
    pub scale: f64,
    /// KS distance against `Gamma(2^{n-1}, scale fitted under that shape)`.
    pub ks: f64,
    /// Reference shape `2^{n-1}` implied by the chi-square structure.
    pub shape_reference: f64,
    /// Scale consistent with the per-string variance `2^{-n} prod sigma^2`.
    pub scale_oracle: f64,
    /// Scale as stated in the source analysis, `2 prod sigma^2`; kept for
    /// comparison (it presumes unit per-string variance).
    pub scale_paper: f64,
}

/// Sample `Z` across seeded chains at one bond dimension and fit a gamma
/// law. Chains are periodic with uniform bond dimension.
pub fn z_distribution_study(
    n: usize,
    sigmas: &[f64],
    bond_dim: usize,
    trials: usize,
    base_seed: u64,
) -> Result<ZDistStudy> {
    if trials < 200 {
        return Err(Error::Input(format!("z study needs at least 200 trials, got {trials}")));
    }
    if n > OMEGA_GUARD {
        return Err(Error::Capacity(format!(
            "sample space enumeration is limited to n <= {OMEGA_GUARD}, got n = {n}"
        )));
    }
    if sigmas.len() != n {
        return Err(Error::Shape(format!("{} sigmas for {} sites", sigmas.len(), n)));
    }
    let spec = crate::chain::ChainSpec::uniform(n, 2, bond_dim, true);
    let plan = TrialPlan::new(base_seed, trials);
    let samples: Vec<f64> = crate::stats::run_trials(&plan, |_, seed| {
        let chain = TensorChain::init_random(&spec, sigmas, seed).expect("validated spec");
        let model = BornModel::new(chain, Vec::new()).expect("phys dims are 2");
        model.partition_function().expect("guarded n")
    });
    let fit = gamma_fit(&samples)?;
    let shape_reference = 2f64.powi(n as i32 - 1);
    // Scale refitted under the reference shape (the mean is the sufficient
    // statistic), then tested by KS distance.
    let scale_ref = crate::stats::mean(&samples) / shape_reference;
    let ks = crate::stats::ks_statistic(&samples, |x| gamma_cdf(shape_reference, scale_ref, x));
    let sigma_prod_sq: f64 = sigmas.iter().map(|s| s * s).product();
    Ok(ZDistStudy {
        bond_dim,
        trials,
        seeds: plan.seeds(),
        samples,
        shape: fit.shape,
        scale: fit.scale,
        ks,
        shape_reference,
        scale_oracle: 2f64.powi(1 - n as i32) * sigma_prod_sq,
        scale_paper: 2.0 * sigma_prod_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainSpec, SiteTensor};

    fn seeded_model(n: usize, d: usize, seed: u64, training: Vec<Vec<u8>>) -> BornModel {
        let spec = ChainSpec::uniform(n, 2, d, true);
        let chain = TensorChain::init_random(&spec, &vec![1.0; n], seed).unwrap();
        BornModel::new(chain, training).unwrap()
    }

    /// Chain with every coefficient equal, so P is uniform over strings.
    fn uniform_model(n: usize, training: Vec<Vec<u8>>) -> BornModel {
        let site = SiteTensor::from_mats(
            vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)],
            1.0,
        )
        .unwrap();
        let chain = TensorChain::from_sites(vec![site; n], true).unwrap();
        BornModel::new(chain, training).unwrap()
    }

    #[test]
    fn zero_chain_has_zero_partition_function() {
        let sites = vec![SiteTensor::zeros(2, 2, 2, 1.0).unwrap(); 3];
        let chain = TensorChain::from_sites(sites, true).unwrap();
        let model = BornModel::new(chain, vec![]).unwrap();
        assert_eq!(model.partition_function().unwrap(), 0.0);
        assert_eq!(model.partition_function_enum().unwrap(), 0.0);
    }

    #[test]
    fn partition_routes_agree() {
        for n in [1usize, 2, 3, 5] {
            let model = seeded_model(n, 3, 42 + n as u64, vec![]);
            let fast = model.partition_function().unwrap();
            let slow = model.partition_function_enum().unwrap();
            assert!(
                (fast - slow).abs() <= 1e-12 * slow.abs().max(1e-30),
                "n = {n}: coefficient {fast} vs enumeration {slow}"
            );
        }
    }

    #[test]
    fn amplitudes_match_feature_map_evaluation() {
        let model = seeded_model(4, 3, 7, vec![]);
        let maps = model.maps();
        for mask in [0usize, 5, 9, 15] {
            let bits = mask_to_string(mask, 4);
            let x: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
            let via_eval = model.chain().evaluate(&maps, &x).unwrap();
            let via_amp = model.amplitude(&bits).unwrap();
            assert!((via_eval - via_amp).abs() < 1e-14);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let model = seeded_model(5, 4, 3, vec![]);
        let mut total = 0.0;
        for mask in 0..32usize {
            total += model.probability(&mask_to_string(mask, 5)).unwrap();
        }
        assert!((total - 1.0).abs() < 1e-10, "sum {total}");
    }

    #[test]
    fn uniform_model_nll_is_m_n_log2() {
        let n = 4;
        let training = vec![mask_to_string(3, n), mask_to_string(9, n), mask_to_string(3, n)];
        let model = uniform_model(n, training);
        let expected = 3.0 * n as f64 * 2f64.ln();
        assert!((model.nll().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn duplicated_training_string_counts_twice() {
        let n = 3;
        let single = seeded_model(n, 2, 5, vec![mask_to_string(2, n)]);
        let double = BornModel::new(
            single.chain().clone(),
            vec![mask_to_string(2, n), mask_to_string(2, n)],
        )
        .unwrap();
        let z = single.partition_function().unwrap();
        let psi = single.amplitude(&mask_to_string(2, n)).unwrap();
        // L_double = -2 ln psi^2 + 2 ln Z = 2 L_single.
        let expected = 2.0 * (-(psi * psi).ln() + z.ln());
        assert!((double.nll().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn concentrated_model_nll_approaches_zero() {
        // All mass on the training string: NLL = -ln P -> 0 as P -> 1.
        let n = 2;
        let target = mask_to_string(0, n); // bits (0, 0) selects slice s = 1 everywhere
        let big = 1000.0f64;
        let site = SiteTensor::from_mats(
            vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, big)],
            1.0,
        )
        .unwrap();
        let chain = TensorChain::from_sites(vec![site; n], true).unwrap();
        let model = BornModel::new(chain, vec![target.clone()]).unwrap();
        let p = model.probability(&target).unwrap();
        let nll = model.nll().unwrap();
        assert!((nll - (-p.ln())).abs() < 1e-12);
        assert!(nll < 1e-5, "nll {nll}");
    }

    #[test]
    fn stationary_direction_at_balanced_amplitude() {
        // psi^2 = Z / m makes the direction vanish.
        let n = 3;
        let model = uniform_model(n, vec![mask_to_string(4, n)]);
        let z = model.partition_function().unwrap();
        let psi = model.amplitude(&mask_to_string(4, n)).unwrap();
        assert!((psi * psi * 8.0 - z).abs() < 1e-12, "uniform model: psi^2 = Z / 2^n");
        // With m = 8 copies the uniform amplitude is exactly stationary.
        let training: Vec<Vec<u8>> = (0..8).map(|mask| mask_to_string(mask, n)).collect();
        let model8 = BornModel::new(model.chain().clone(), training).unwrap();
        for j in 0..8 {
            assert!(model8.training_direction(j).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn direction_matches_response_space_finite_differences() {
        // d_j = -dL/dpsi_j where L is seen as a function of the response
        // vector over the sample space.
        let n = 3;
        let model = seeded_model(n, 3, 19, vec![mask_to_string(5, n), mask_to_string(2, n)]);
        let size = 1 << n;
        let mut psi: Vec<f64> = (0..size)
            .map(|mask| model.amplitude(&mask_to_string(mask, n)).unwrap())
            .collect();
        let m = model.m() as f64;
        let loss = |psi: &[f64]| -> f64 {
            let z: f64 = psi.iter().map(|p| p * p).sum();
            let mut acc = m * z.ln();
            for s in model.training() {
                let mask = s.iter().enumerate().fold(0usize, |a, (i, &b)| a | ((b as usize) << i));
                acc -= (psi[mask] * psi[mask]).ln();
            }
            acc
        };
        for (j, s) in model.training().iter().enumerate() {
            let mask = s.iter().enumerate().fold(0usize, |a, (i, &b)| a | ((b as usize) << i));
            let h = 1e-6;
            let orig = psi[mask];
            psi[mask] = orig + h;
            let up = loss(&psi);
            psi[mask] = orig - h;
            let down = loss(&psi);
            psi[mask] = orig;
            let fd = -(up - down) / (2.0 * h);
            let d = model.training_direction(j).unwrap();
            assert!((d - fd).abs() < 1e-6, "j = {j}: direction {d} vs fd {fd}");
        }
    }

    #[test]
    fn pole_at_vanishing_amplitude() {
        let n = 2;
        let mut model = seeded_model(n, 2, 23, vec![mask_to_string(1, n)]);
        // Direction grows as the training amplitude shrinks.
        let d_before = model.training_direction(0).unwrap().abs();
        for site in 0..n {
            model.chain.site_mut(site).scale(1e-3);
        }
        let d_after = model.training_direction(0).unwrap().abs();
        assert!(d_after > d_before * 100.0, "{d_after} vs {d_before}");
        // Exactly zero amplitude errors out.
        let zero_site = SiteTensor::zeros(2, 1, 1, 1.0).unwrap();
        let chain = TensorChain::from_sites(vec![zero_site; 2], true).unwrap();
        let zero_model = BornModel::new(chain, vec![mask_to_string(0, 2)]).unwrap();
        assert!(matches!(zero_model.training_direction(0), Err(Error::Singular(_))));
    }

    #[test]
    fn flow_at_zero_horizon_records_normalized_probabilities() {
        let n = 4;
        let model = seeded_model(n, 4, 31, vec![mask_to_string(3, n), mask_to_string(12, n)]);
        let traj = integrate_born_flow(&model, 0.0, Integrator::Rk4 { dt: 0.1 }, 1).unwrap();
        assert_eq!(traj.times, vec![0.0]);
        // Recorded probabilities are amplitudes^2 / Z with Z live, so the
        // probability over the whole space sums to one by construction;
        // spot-check against the model's own normalization.
        let p0 = model.probability(&mask_to_string(3, n)).unwrap();
        assert!((traj.probs[0][0] - p0).abs() < 1e-12);
    }

    #[test]
    fn single_training_string_memorizes() {
        let n = 5;
        let model = seeded_model(n, 24, 11, vec![mask_to_string(7, n)]);
        let t_char = characteristic_time(
            model.partition_function().unwrap(),
            1,
            // analytic kernel diagonal for unit sigmas: n 2^{-n}
            n as f64 * 0.5f64.powi(n as i32),
        )
        .unwrap();
        let traj =
            integrate_born_flow(&model, 10.0 * t_char, Integrator::Rk4 { dt: t_char / 50.0 }, 8)
                .unwrap();
        let p_end = traj.probs.last().unwrap()[0];
        assert!((p_end - 1.0).abs() < 0.05, "P -> {p_end}");
        // Sign preservation along the recorded path.
        let s0 = traj.responses[0][0].signum();
        assert!(traj.responses.iter().all(|r| r[0].signum() == s0));
    }

    #[test]
    fn closed_form_born_limits_and_fixed_point() {
        let (psi0, z, m, k) = (0.05f64, 1.0f64, 4usize, 0.1f64);
        let (p_at_0, prob_at_0) = closed_form_born(psi0, z, m, k, 0.0).unwrap();
        assert!((p_at_0 - psi0).abs() < 1e-15 * psi0.abs());
        assert!((prob_at_0 - psi0 * psi0 / z).abs() < 1e-15);
        let (_, p_inf) = closed_form_born(psi0, z, m, k, 1e4).unwrap();
        assert!((p_inf - 0.25).abs() < 1e-12);
        // psi0^2 = Z/m is a fixed point.
        let psi_fp = (z / m as f64).sqrt();
        for &t in &[0.0, 0.3, 2.0] {
            let (psi_t, p_t) = closed_form_born(psi_fp, z, m, k, t).unwrap();
            assert!((psi_t - psi_fp).abs() < 1e-12);
            assert!((p_t - 1.0 / m as f64).abs() < 1e-12);
        }
        // Negative branch keeps its sign.
        let (psi_neg, _) = closed_form_born(-psi0, z, m, k, 0.7).unwrap();
        assert!(psi_neg < 0.0);
        assert!(closed_form_born(psi0, -1.0, m, k, 0.0).is_err());
        assert!(closed_form_born(psi0, z, m, -0.5, 0.0).is_err());
    }

    #[test]
    fn characteristic_time_examples() {
        assert_eq!(paper_characteristic_time(4, 4), 1.0);
        // m = 2^n: constant time 1/4.
        assert_eq!(paper_characteristic_time(6, 64), 0.25);
        assert!(characteristic_time(1.0, 0, 1.0).is_err());
        assert!(characteristic_time(0.0, 1, 1.0).is_err());
    }

    #[test]
    fn single_site_z_is_exactly_gamma_shape_one() {
        // n = 1: Z = (tr A0)^2/2 + (tr A1)^2/2 with independent normal
        // traces, an exponential law = Gamma(shape 1).
        let study = z_distribution_study(1, &[1.0], 8, 1200, 99).unwrap();
        assert!((study.shape - 1.0).abs() < 0.12, "shape {}", study.shape);
        assert_eq!(study.shape_reference, 1.0);
        assert!(study.ks < 0.05, "ks {}", study.ks);
    }

    #[test]
    fn flow_guard_and_enumeration_guard() {
        let model = seeded_model(11, 1, 1, vec![mask_to_string(1, 11)]);
        assert!(matches!(
            integrate_born_flow(&model, 0.1, Integrator::Euler { dt: 0.05 }, 1),
            Err(Error::Capacity(_))
        ));
        assert!(z_distribution_study(23, &vec![1.0; 23], 1, 200, 0).is_err());
    }
}
