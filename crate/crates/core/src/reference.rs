//! Slow reference implementations used to verify the fast paths.
//!
//! Everything here works by exhaustive index enumeration or finite
//! differences and deliberately shares no contraction code with the rest of
//! the crate. Costs are exponential in the chain length; keep inputs small.

use nalgebra::DMatrix;

use crate::chain::TensorChain;
use crate::error::Result;
use crate::features::FeatureMap;

/// Iterate over all tuples with per-position cardinalities `dims`.
fn odometer(dims: &[usize], mut visit: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; dims.len()];
    loop {
        visit(&idx);
        let mut pos = dims.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < dims[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Response by brute-force summation over every physical and bond index
/// assignment, with the last bond traced back into the first.
pub fn evaluate_enumerate(chain: &TensorChain, maps: &[FeatureMap], x: &[f64]) -> Result<f64> {
    let n = chain.len();
    let phis: Vec<Vec<f64>> = maps
        .iter()
        .zip(x)
        .map(|(m, &xi)| m.apply(xi))
        .collect::<Result<_>>()?;
    let phys_dims: Vec<usize> = (0..n).map(|k| chain.site(k).phys_dim()).collect();
    let bond_dims: Vec<usize> = (0..n).map(|k| chain.site(k).left_dim()).collect();

    let mut total = 0.0;
    odometer(&phys_dims, |s_tuple| {
        let mut weight = 1.0;
        for (k, &s) in s_tuple.iter().enumerate() {
            weight *= phis[k][s];
        }
        if weight == 0.0 {
            return;
        }
        let mut bond_sum = 0.0;
        odometer(&bond_dims, |a_tuple| {
            let mut term = 1.0;
            for k in 0..n {
                let a = a_tuple[k];
                let b = a_tuple[(k + 1) % n];
                term *= chain.site(k).get(s_tuple[k], a, b);
            }
            bond_sum += term;
        });
        total += weight * bond_sum;
    });
    Ok(total)
}

/// All site gradients by the same enumeration, no shared partial products.
pub fn grads_enumerate(
    chain: &TensorChain,
    maps: &[FeatureMap],
    x: &[f64],
) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let n = chain.len();
    let phis: Vec<Vec<f64>> = maps
        .iter()
        .zip(x)
        .map(|(m, &xi)| m.apply(xi))
        .collect::<Result<_>>()?;
    let phys_dims: Vec<usize> = (0..n).map(|k| chain.site(k).phys_dim()).collect();
    let bond_dims: Vec<usize> = (0..n).map(|k| chain.site(k).left_dim()).collect();

    let mut grads: Vec<Vec<DMatrix<f64>>> = (0..n)
        .map(|k| {
            let site = chain.site(k);
            (0..site.phys_dim())
                .map(|_| DMatrix::zeros(site.left_dim(), site.right_dim()))
                .collect()
        })
        .collect();

    odometer(&phys_dims, |s_tuple| {
        let mut weight = 1.0;
        for (k, &s) in s_tuple.iter().enumerate() {
            weight *= phis[k][s];
        }
        if weight == 0.0 {
            return;
        }
        odometer(&bond_dims, |a_tuple| {
            for k in 0..n {
                let mut partial = weight;
                for j in 0..n {
                    if j == k {
                        continue;
                    }
                    partial *= chain.site(j).get(s_tuple[j], a_tuple[j], a_tuple[(j + 1) % n]);
                }
                if partial != 0.0 {
                    grads[k][s_tuple[k]][(a_tuple[k], a_tuple[(k + 1) % n])] += partial;
                }
            }
        });
    });
    Ok(grads)
}

/// Tangent-kernel Gram matrix assembled from enumerated gradients with the
/// per-site rates `eta_k = (l_k r_k)^{-1/2}`.
pub fn empirical_ntk_enumerate(
    chain: &TensorChain,
    maps: &[FeatureMap],
    points: &[Vec<f64>],
) -> Result<DMatrix<f64>> {
    let etas = chain.learning_rates();
    let grads: Vec<Vec<Vec<DMatrix<f64>>>> = points
        .iter()
        .map(|x| grads_enumerate(chain, maps, x))
        .collect::<Result<_>>()?;
    let m = points.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for (site, eta) in etas.iter().enumerate() {
                for (gi, gj) in grads[i][site].iter().zip(&grads[j][site]) {
                    acc += eta * gi.dot(gj);
                }
            }
            k[(i, j)] = acc;
        }
    }
    Ok(k)
}

/// Central finite differences of the response with respect to every entry
/// of site `k`.
pub fn grad_site_fd(
    chain: &TensorChain,
    maps: &[FeatureMap],
    x: &[f64],
    k: usize,
    step: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let site = chain.site(k);
    let (phys, left, right) = (site.phys_dim(), site.left_dim(), site.right_dim());
    let mut out = vec![DMatrix::zeros(left, right); phys];
    for s in 0..phys {
        for a in 0..left {
            for b in 0..right {
                let base = chain.site(k).get(s, a, b);
                let mut plus = chain.clone();
                plus.site_mut(k).set(s, a, b, base + step);
                let mut minus = chain.clone();
                minus.site_mut(k).set(s, a, b, base - step);
                out[s][(a, b)] =
                    (plus.evaluate(maps, x)? - minus.evaluate(maps, x)?) / (2.0 * step);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainSpec;

    fn trig_maps(n: usize) -> Vec<FeatureMap> {
        (0..n).map(|_| FeatureMap::trig()).collect()
    }

    #[test]
    fn enumeration_matches_contraction_on_seeded_chain() {
        // The frozen expected value below comes from this enumeration.
        let spec = ChainSpec::uniform(3, 2, 2, true);
        let chain = TensorChain::init_random(&spec, &[1.0; 3], 42).unwrap();
        let maps = trig_maps(3);
        let x = [0.25, 0.5, 0.75];
        let slow = evaluate_enumerate(&chain, &maps, &x).unwrap();
        let fast = chain.evaluate(&maps, &x).unwrap();
        assert!(
            (slow - fast).abs() <= 1e-12 * slow.abs().max(1.0),
            "enumeration {slow} vs contraction {fast}"
        );
    }

    #[test]
    fn enumerated_gradients_match_environments() {
        let spec = ChainSpec::uniform(3, 2, 2, true);
        let chain = TensorChain::init_random(&spec, &[1.0; 3], 17).unwrap();
        let maps = trig_maps(3);
        let x = [0.1, 0.4, 0.8];
        let slow = grads_enumerate(&chain, &maps, &x).unwrap();
        let env = chain.environments(&maps, &x).unwrap();
        for k in 0..3 {
            let fast = env.grad(k).dense();
            for (a, b) in slow[k].iter().zip(&fast) {
                assert!((a - b).amax() < 1e-13);
            }
        }
    }
}
