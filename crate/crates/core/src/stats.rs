//! Seeded trial orchestration and the statistical machinery behind the
//! Monte Carlo verification studies.
//!
//! Trials derive their RNG seeds from a counter-based permutation of the
//! base seed, so parallel trials never share streams and any report is
//! reproducible from `(base seed, trial count)` alone. Reductions always
//! run in trial order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::{digamma, gamma_lr, ln_gamma};

use crate::chain::{ChainSpec, TensorChain};
use crate::dataset::dataset_id;
use crate::error::{Error, Result};
use crate::features::FeatureMap;

/// splitmix64 finalizer; a bijection on `u64`.
pub fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// A reproducible plan of independent seeded trials.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialPlan {
    base_seed: u64,
    trials: usize,
}

impl TrialPlan {
    pub fn new(base_seed: u64, trials: usize) -> Self {
        Self { base_seed, trials }
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn len(&self) -> usize {
        self.trials
    }

    pub fn is_empty(&self) -> bool {
        self.trials == 0
    }

    /// Derived seed of trial `i`. Injective in `i` for a fixed base seed:
    /// the input offsets are distinct and the mix is a bijection.
    pub fn seed(&self, i: usize) -> u64 {
        splitmix64(self.base_seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9E3779B97F4A7C15)))
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.trials).map(|i| self.seed(i)).collect()
    }
}

/// Run all trials of a plan, in parallel when a thread pool is available,
/// collecting results in trial order so reductions are deterministic.
pub fn run_trials<T, F>(plan: &TrialPlan, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync,
{
    (0..plan.len())
        .into_par_iter()
        .map(|i| f(i, plan.seed(i)))
        .collect()
}

// ---------------------------------------------------------------------------
// basic estimators
// ---------------------------------------------------------------------------

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Linearly interpolated quantile, `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    debug_assert!(!xs.is_empty());
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Least-squares slope of `ys` on `xs`.
pub fn linreg_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Exponential rate of `v(t) -> a`: the negated regression slope of
/// `ln |v - a|` against `t`, using the leading stretch of the series
/// before the residual drops below `1e-3` of its initial size (or into
/// rounding noise). `None` when fewer than two usable points remain.
pub fn fit_decay_rate(times: &[f64], values: &[f64], asymptote: f64) -> Option<f64> {
    fit_decay_rate_with_floor(times, values, asymptote, 1e-3)
}

/// [`fit_decay_rate`] with an explicit residual floor fraction; a larger
/// floor restricts the fit to the early window, where the rate matches
/// the `t = 0` state of a slowly drifting system.
pub fn fit_decay_rate_with_floor(
    times: &[f64],
    values: &[f64],
    asymptote: f64,
    floor_frac: f64,
) -> Option<f64> {
    let initial = (values.first()? - asymptote).abs();
    if initial == 0.0 {
        return None;
    }
    let floor = initial * floor_frac;
    let mut ts = Vec::new();
    let mut ls = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        let r = (v - asymptote).abs();
        if r < floor || r < 1e-14 {
            break;
        }
        ts.push(t);
        ls.push(r.ln());
    }
    if ts.len() < 2 {
        return None;
    }
    Some(-linreg_slope(&ts, &ls))
}

/// Sample mean vector and covariance matrix (unbiased) of vector samples.
pub fn mean_and_cov(samples: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let t = samples.len();
    let dim = samples[0].len();
    let mut mu = DVector::zeros(dim);
    for s in samples {
        mu += s;
    }
    mu /= t as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for s in samples {
        let c = s - &mu;
        cov.syger(1.0, &c, &c, 1.0);
    }
    // syger fills the lower triangle; mirror it.
    for i in 0..dim {
        for j in i + 1..dim {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    cov /= (t - 1) as f64;
    (mu, cov)
}

/// Entrywise asymptotic standard errors of the sample covariance,
/// `SE_ij = sqrt((m4_ij - cov_ij^2) / T)` with `m4_ij` the mixed fourth
/// central moment. No normality assumption.
pub fn cov_std_errors(samples: &[DVector<f64>], mu: &DVector<f64>, cov: &DMatrix<f64>) -> DMatrix<f64> {
    let t = samples.len();
    let dim = mu.len();
    let mut m4 = DMatrix::zeros(dim, dim);
    for s in samples {
        let c = s - mu;
        for i in 0..dim {
            for j in 0..dim {
                m4[(i, j)] += (c[i] * c[j]) * (c[i] * c[j]);
            }
        }
    }
    m4 /= t as f64;
    DMatrix::from_fn(dim, dim, |i, j| {
        ((m4[(i, j)] - cov[(i, j)] * cov[(i, j)]).max(0.0) / t as f64).sqrt()
    })
}

// ---------------------------------------------------------------------------
// gamma fitting and goodness of fit
// ---------------------------------------------------------------------------

/// Maximum-likelihood gamma fit plus a KS test against the fitted law.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GammaFit {
    pub shape: f64,
    pub scale: f64,
    pub ks: f64,
    /// Asymptotic KS p-value; approximate since parameters were fitted.
    pub p_value: f64,
}

/// CDF of the gamma distribution with the shape/scale convention.
pub fn gamma_cdf(shape: f64, scale: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(shape, x / scale)
    }
}

/// Trigamma via the recurrence and the asymptotic Bernoulli series.
pub fn trigamma(x: f64) -> f64 {
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = 1.0 / 6.0
        - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0))));
    acc + inv * (1.0 + inv * (0.5 + inv * tail))
}

/// Fit `Gamma(shape, scale)` by maximum likelihood: Newton iteration on
/// `ln k - psi(k) = ln(mean) - mean(ln x)` to `1e-10`, with a bisection
/// safeguard; the scale is `mean / shape`.
pub fn gamma_fit(samples: &[f64]) -> Result<GammaFit> {
    if samples.len() < 50 {
        return Err(Error::Input(format!(
            "gamma fit needs at least 50 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Input("gamma fit requires strictly positive samples".into()));
    }
    let m = mean(samples);
    let mean_ln = samples.iter().map(|x| x.ln()).sum::<f64>() / samples.len() as f64;
    let s = m.ln() - mean_ln;
    if s <= 0.0 || !s.is_finite() {
        return Err(Error::Input(
            "degenerate variance: samples carry no spread to fit a gamma shape".into(),
        ));
    }

    // Newton on g(k) = ln k - psi(k) - s; g is strictly decreasing in k.
    let mut k = (3.0 - s + ((s - 3.0) * (s - 3.0) + 24.0 * s).sqrt()) / (12.0 * s);
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, f64::MAX);
    for _ in 0..200 {
        let g = k.ln() - digamma(k) - s;
        if g > 0.0 {
            lo = lo.max(k);
        } else {
            hi = hi.min(k);
        }
        let dg = 1.0 / k - trigamma(k);
        let mut next = k - g / dg;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { k * 2.0 };
        }
        if (next - k).abs() <= 1e-10 * k.max(1.0) {
            k = next;
            break;
        }
        k = next;
    }
    let shape = k;
    let scale = m / shape;

    let ks = ks_statistic(samples, |x| gamma_cdf(shape, scale, x));
    Ok(GammaFit { shape, scale, ks, p_value: ks_p_value(samples.len(), ks) })
}

/// Two-sided KS statistic of samples against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Asymptotic Kolmogorov p-value with the small-sample correction.
pub fn ks_p_value(n: usize, ks: f64) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * ks;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Log-density of `Gamma(shape, scale)` at `x > 0`.
pub fn gamma_log_pdf(shape: f64, scale: f64, x: f64) -> f64 {
    (shape - 1.0) * x.ln() - x / scale - shape * scale.ln() - ln_gamma(shape)
}

// ---------------------------------------------------------------------------
// normality
// ---------------------------------------------------------------------------

/// Omnibus normality test combining the skewness and kurtosis transforms;
/// the statistic is chi-square with two degrees of freedom under the null.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NormalityTest {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn dagostino_pearson(samples: &[f64]) -> Result<NormalityTest> {
    let n = samples.len();
    if n < 20 {
        return Err(Error::Input(format!("normality test needs at least 20 samples, got {n}")));
    }
    let nf = n as f64;
    let m = mean(samples);
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &x in samples {
        let c = x - m;
        m2 += c * c;
        m3 += c * c * c;
        m4 += c * c * c * c;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 == 0.0 {
        return Err(Error::Input("degenerate variance: constant sample".into()));
    }

    // Skewness transform (D'Agostino).
    let b1 = m3 / m2.powf(1.5);
    let y = b1 * ((nf + 1.0) * (nf + 3.0) / (6.0 * (nf - 2.0))).sqrt();
    let beta2 = 3.0 * (nf * nf + 27.0 * nf - 70.0) * (nf + 1.0) * (nf + 3.0)
        / ((nf - 2.0) * (nf + 5.0) * (nf + 7.0) * (nf + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / w2.sqrt().ln().sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let z1 = delta * (y / alpha + ((y / alpha) * (y / alpha) + 1.0).sqrt()).ln();

    // Kurtosis transform (Anscombe-Glynn).
    let b2 = m4 / (m2 * m2);
    let eb2 = 3.0 * (nf - 1.0) / (nf + 1.0);
    let vb2 = 24.0 * nf * (nf - 2.0) * (nf - 3.0) / ((nf + 1.0) * (nf + 1.0) * (nf + 3.0) * (nf + 5.0));
    let x = (b2 - eb2) / vb2.sqrt();
    let sqrt_b1 = 6.0 * (nf * nf - 5.0 * nf + 2.0) / ((nf + 7.0) * (nf + 9.0))
        * (6.0 * (nf + 3.0) * (nf + 5.0) / (nf * (nf - 2.0) * (nf - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_b1 * (2.0 / sqrt_b1 + (1.0 + 4.0 / (sqrt_b1 * sqrt_b1)).sqrt());
    let z2 = ((1.0 - 2.0 / (9.0 * a))
        - ((1.0 - 2.0 / a) / (1.0 + x * (2.0 / (a - 4.0)).sqrt())).cbrt())
        / (2.0 / (9.0 * a)).sqrt();

    let k2 = z1 * z1 + z2 * z2;
    Ok(NormalityTest { statistic: k2, p_value: (-k2 / 2.0).exp() })
}

// ---------------------------------------------------------------------------
// bootstrap
// ---------------------------------------------------------------------------

const BOOTSTRAP_RESAMPLES: usize = 2000;

/// Seeded percentile bootstrap interval for the mean of `samples`.
pub fn bootstrap_ci(samples: &[f64], level: f64, seed: u64) -> Result<(f64, f64)> {
    bootstrap_ci_stat(samples, level, seed, mean)
}

/// Seeded percentile bootstrap interval for an arbitrary statistic.
pub fn bootstrap_ci_stat(
    samples: &[f64],
    level: f64,
    seed: u64,
    stat: impl Fn(&[f64]) -> f64,
) -> Result<(f64, f64)> {
    if samples.len() < 20 {
        return Err(Error::Input(format!(
            "bootstrap needs at least 20 samples, got {}",
            samples.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Input(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut resample = vec![0.0; samples.len()];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in resample.iter_mut() {
            *slot = samples[rng.gen_range(0..samples.len())];
        }
        stats.push(stat(&resample));
    }
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile(&stats, alpha), quantile(&stats, 1.0 - alpha)))
}

// ---------------------------------------------------------------------------
// limit-law check for chain responses
// ---------------------------------------------------------------------------

/// Monte Carlo comparison of chain responses at one bond dimension against
/// the limit law: zero mean and covariance
/// `prod_i sigma_i^2 phi(x_i) . phi(x'_i)`.
#[derive(Clone, Debug, Serialize)]
pub struct GpCheckReport {
    pub bond_dim: usize,
    pub trials: usize,
    pub dataset_id: String,
    pub empirical_mean: Vec<f64>,
    pub empirical_cov: Vec<Vec<f64>>,
    pub analytic_cov: Vec<Vec<f64>>,
    pub cov_std_error: Vec<Vec<f64>>,
    /// Largest `|empirical - analytic|` covariance entry.
    pub max_abs_deviation: f64,
    /// Largest deviation in units of the entrywise standard error.
    pub max_se_deviation: f64,
    /// Omnibus normality p-value of the response at each dataset point.
    pub normality_pvalues: Vec<f64>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Run the limit-law check at each bond dimension in `bond_dims`.
pub fn gp_limit_check(
    bond_dims: &[usize],
    maps: &[FeatureMap],
    sigmas: &[f64],
    periodic: bool,
    points: &[Vec<f64>],
    trials: usize,
    base_seed: u64,
) -> Result<Vec<GpCheckReport>> {
    if trials < 500 {
        return Err(Error::Input(format!(
            "limit-law check needs at least 500 trials, got {trials}"
        )));
    }
    let n = maps.len();
    let m = points.len();
    if m == 0 {
        return Err(Error::Input("limit-law check needs a nonempty dataset".into()));
    }

    // Analytic covariance from the per-site kernels.
    let mut analytic = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut acc = 1.0;
            for site in 0..n {
                acc *= sigmas[site] * sigmas[site]
                    * maps[site].kernel(points[i][site], points[j][site])?;
            }
            analytic[(i, j)] = acc;
        }
    }

    let phys: Vec<usize> = maps.iter().map(|mp| mp.phys_dim()).collect();
    let plan = TrialPlan::new(base_seed, trials);
    let mut reports = Vec::with_capacity(bond_dims.len());
    for &d in bond_dims {
        let spec = ChainSpec {
            phys_dims: phys.clone(),
            bonds: ChainSpec::uniform(n, 2, d, periodic).bonds,
            periodic,
        };
        let samples: Vec<DVector<f64>> = run_trials(&plan, |_, seed| {
            let chain = TensorChain::init_random(&spec, sigmas, seed).expect("validated spec");
            DVector::from_iterator(
                m,
                points.iter().map(|x| chain.evaluate(maps, x).expect("validated dims")),
            )
        });
        let (mu, cov) = mean_and_cov(&samples);
        let se = cov_std_errors(&samples, &mu, &cov);
        let dev = &cov - &analytic;
        let max_abs_deviation = dev.amax();
        let mut max_se_deviation: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                if se[(i, j)] > 0.0 {
                    max_se_deviation = max_se_deviation.max(dev[(i, j)].abs() / se[(i, j)]);
                }
            }
        }
        let normality_pvalues = (0..m)
            .map(|i| {
                let series: Vec<f64> = samples.iter().map(|s| s[i]).collect();
                dagostino_pearson(&series).map(|t| t.p_value)
            })
            .collect::<Result<Vec<f64>>>()?;
        reports.push(GpCheckReport {
            bond_dim: d,
            trials,
            dataset_id: dataset_id(points),
            empirical_mean: mu.iter().copied().collect(),
            empirical_cov: to_rows(&cov),
            analytic_cov: to_rows(&analytic),
            cov_std_error: to_rows(&se),
            max_abs_deviation,
            max_se_deviation,
            normality_pvalues,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Gamma as GammaDist, Normal, StandardNormal};

    #[test]
    fn derived_seeds_distinct_and_reproducible() {
        let plan = TrialPlan::new(42, 4096);
        let seeds = plan.seeds();
        let set: std::collections::BTreeSet<_> = seeds.iter().collect();
        assert_eq!(set.len(), seeds.len());
        assert_eq!(seeds, TrialPlan::new(42, 4096).seeds());
        assert_ne!(seeds[0], TrialPlan::new(43, 1).seed(0));
    }

    #[test]
    fn trigamma_matches_reference_values() {
        // psi'(1) = pi^2 / 6, psi'(1/2) = pi^2 / 2, psi'(5) via recurrence.
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        assert!((trigamma(1.0) - pi2 / 6.0).abs() < 1e-12);
        assert!((trigamma(0.5) - pi2 / 2.0).abs() < 1e-12);
        let psi5 = pi2 / 6.0 - (1.0 + 1.0 / 4.0 + 1.0 / 9.0 + 1.0 / 16.0);
        assert!((trigamma(5.0) - psi5).abs() < 1e-12);
    }

    #[test]
    fn gamma_fit_recovers_known_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gen = GammaDist::new(32.0, 2.0).unwrap();
        let samples: Vec<f64> = (0..1000).map(|_| gen.sample(&mut rng)).collect();
        let fit = gamma_fit(&samples).unwrap();
        assert!((fit.shape - 32.0).abs() < 3.2, "shape {}", fit.shape);
        assert!((fit.scale - 2.0).abs() < 0.3, "scale {}", fit.scale);
        assert!(fit.ks < 0.05, "ks {}", fit.ks);
    }

    #[test]
    fn exponential_samples_fit_shape_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let exp = rand_distr::Exp::new(0.5).unwrap();
        let samples: Vec<f64> = (0..2000).map(|_| exp.sample(&mut rng)).collect();
        let fit = gamma_fit(&samples).unwrap();
        assert!((fit.shape - 1.0).abs() < 0.1, "shape {}", fit.shape);
    }

    #[test]
    fn degenerate_samples_are_rejected() {
        let constant = vec![2.0; 100];
        assert!(matches!(gamma_fit(&constant), Err(Error::Input(_))));
        let mut with_zero = vec![1.0; 100];
        with_zero[3] = 0.0;
        assert!(gamma_fit(&with_zero).is_err());
        assert!(gamma_fit(&vec![1.0; 10]).is_err());
    }

    #[test]
    fn ks_statistic_of_exact_cdf_is_small() {
        let n = 500;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let ks = ks_statistic(&samples, |x| x.clamp(0.0, 1.0));
        assert!(ks <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn normality_test_separates_normal_from_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal: Vec<f64> = (0..2000).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
        let t = dagostino_pearson(&normal).unwrap();
        assert!(t.p_value > 1e-3, "normal sample rejected: p = {}", t.p_value);

        let exp = rand_distr::Exp::new(1.0).unwrap();
        let skewed: Vec<f64> = (0..2000).map(|_| exp.sample(&mut rng)).collect();
        let t = dagostino_pearson(&skewed).unwrap();
        assert!(t.p_value < 1e-6, "exponential sample accepted: p = {}", t.p_value);
    }

    #[test]
    fn bootstrap_degenerate_and_domain_cases() {
        let constant = vec![3.0; 30];
        let (lo, hi) = bootstrap_ci(&constant, 0.95, 1).unwrap();
        assert_eq!((lo, hi), (3.0, 3.0));
        assert!(bootstrap_ci(&constant, 1.5, 1).is_err());
        assert!(bootstrap_ci(&constant, 0.0, 1).is_err());
        assert!(bootstrap_ci(&vec![1.0; 10], 0.9, 1).is_err());
    }

    #[test]
    fn bootstrap_ci_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..60).map(|_| rng.gen::<f64>()).collect();
        assert_eq!(
            bootstrap_ci(&samples, 0.9, 77).unwrap(),
            bootstrap_ci(&samples, 0.9, 77).unwrap()
        );
    }

    #[test]
    fn bootstrap_coverage_near_nominal() {
        // 200 meta-trials of N(0,1) samples of size 100; the 95% interval
        // should cover 0 roughly 95% of the time.
        let mut covered = 0;
        let meta = 200;
        for rep in 0..meta {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
            let normal = Normal::new(0.0, 1.0).unwrap();
            let samples: Vec<f64> = (0..100).map(|_| normal.sample(&mut rng)).collect();
            let (lo, hi) = bootstrap_ci(&samples, 0.95, rep).unwrap();
            if lo <= 0.0 && 0.0 <= hi {
                covered += 1;
            }
        }
        let rate = covered as f64 / meta as f64;
        assert!((0.88..=0.99).contains(&rate), "coverage {rate}");
    }

    #[test]
    fn covariance_estimator_matches_synthetic_generator() {
        // Self-calibration on iid Gaussians with a known covariance.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let t = 4000;
        let samples: Vec<DVector<f64>> = (0..t)
            .map(|_| {
                let a: f64 = normal.sample(&mut rng);
                let b: f64 = normal.sample(&mut rng);
                // cov = [[1, 0.6], [0.6, 1.36]]
                DVector::from_vec(vec![a, 0.6 * a + b])
            })
            .collect();
        let (mu, cov) = mean_and_cov(&samples);
        let se = cov_std_errors(&samples, &mu, &cov);
        let truth = [[1.0, 0.6], [0.6, 1.36]];
        for i in 0..2 {
            for j in 0..2 {
                let dev = (cov[(i, j)] - truth[i][j]).abs();
                assert!(dev < 3.0 * se[(i, j)], "entry ({i},{j}): dev {dev}, se {}", se[(i, j)]);
            }
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(median(&xs), 2.5);
    }

    #[test]
    fn decay_rate_recovers_exponential() {
        let times: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
        let values: Vec<f64> = times.iter().map(|t| 2.0 + 0.7 * (-1.3 * t).exp()).collect();
        let rate = fit_decay_rate(&times, &values, 2.0).unwrap();
        assert!((rate - 1.3).abs() < 1e-6, "rate {rate}");
    }
}
