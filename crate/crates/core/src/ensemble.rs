//! Expansion of a tensor chain into its equivalent ensemble of linear
//! fully-connected networks.
//!
//! Fixing one physical index per site selects one weight matrix
//! `W^{[i_k]} = A(k)[i_k]` per site; the member network's output is the
//! traced product of those matrices (with identity activations and no
//! biases, the trace equals the sum over all bond-index paths through the
//! cycle, so the matrix-product and scalar-path readings coincide). The
//! chain response is the mixing-weighted sum over all members:
//!
//! ```text
//! psi(x) = sum_i W_i(x) N_i(A),   W_i(x) = prod_k phi^{i_k}(x_k).
//! ```
//!
//! Member count is `prod_k |s_k|`, guarded at `2^16`.

use itertools::Itertools;
use nalgebra::DMatrix;

use crate::chain::TensorChain;
use crate::error::{Error, Result};
use crate::features::FeatureMap;

/// Enumeration guard on the member count.
pub const MEMBER_GUARD: usize = 1 << 16;

/// One member network: its physical index tuple and cached output.
#[derive(Clone, Debug)]
pub struct EnsembleMember {
    pub phys_indices: Vec<usize>,
    /// `N_i(A)`: traced product of the selected weight matrices.
    pub output: f64,
}

/// The full ensemble; keeps the chain so member weights can be extracted
/// without storing every matrix tuple.
#[derive(Clone, Debug)]
pub struct LinearNetEnsemble {
    chain: TensorChain,
    members: Vec<EnsembleMember>,
}

impl LinearNetEnsemble {
    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    /// Weight matrices `W^{[i_k]}` of one member.
    pub fn network_weights(&self, member: &EnsembleMember) -> Vec<DMatrix<f64>> {
        member
            .phys_indices
            .iter()
            .enumerate()
            .map(|(k, &s)| self.chain.site(k).mat(s).clone())
            .collect()
    }

    /// Mixing weight `W_i(x) = prod_k phi^{i_k}(x_k)`.
    pub fn mixing_weight(
        &self,
        maps: &[FeatureMap],
        x: &[f64],
        member: &EnsembleMember,
    ) -> Result<f64> {
        self.chain.check_maps(maps)?;
        if x.len() != self.chain.len() {
            return Err(Error::Shape(format!(
                "input of length {} for a chain of {} sites",
                x.len(),
                self.chain.len()
            )));
        }
        let mut w = 1.0;
        for (k, &s) in member.phys_indices.iter().enumerate() {
            w *= maps[k].apply(x[k])?[s];
        }
        Ok(w)
    }

    /// `sum_i W_i(x) N_i(A)`; agrees with the chain contraction.
    pub fn predict(&self, maps: &[FeatureMap], x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for member in &self.members {
            acc += self.mixing_weight(maps, x, member)? * member.output;
        }
        Ok(acc)
    }
}

/// Enumerate all physical index tuples of the chain.
pub fn expand_ensemble(chain: &TensorChain) -> Result<LinearNetEnsemble> {
    let mut count: usize = 1;
    for site in chain.sites() {
        count = count
            .checked_mul(site.phys_dim())
            .filter(|&c| c <= MEMBER_GUARD)
            .ok_or_else(|| {
                Error::Capacity(format!(
                    "ensemble would exceed the enumeration guard of {MEMBER_GUARD} members"
                ))
            })?;
    }
    let members = chain
        .sites()
        .iter()
        .map(|site| 0..site.phys_dim())
        .multi_cartesian_product()
        .map(|phys_indices| {
            let mut acc = chain.site(0).mat(phys_indices[0]).clone();
            for (k, &s) in phys_indices.iter().enumerate().skip(1) {
                acc = acc * chain.site(k).mat(s);
            }
            EnsembleMember { phys_indices, output: acc.trace() }
        })
        .collect();
    Ok(LinearNetEnsemble { chain: chain.clone(), members })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainSpec, SiteTensor};

    #[test]
    fn three_binary_sites_give_eight_networks() {
        let spec = ChainSpec::uniform(3, 2, 2, true);
        let chain = TensorChain::init_random(&spec, &[1.0; 3], 1).unwrap();
        let ens = expand_ensemble(&chain).unwrap();
        assert_eq!(ens.member_count(), 8);
    }

    #[test]
    fn single_site_members_are_the_scalar_weights() {
        let mats = vec![
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, -1.25),
            DMatrix::from_element(1, 1, 2.0),
        ];
        let site = SiteTensor::from_mats(mats, 1.0).unwrap();
        let chain = TensorChain::from_sites(vec![site], true).unwrap();
        let ens = expand_ensemble(&chain).unwrap();
        assert_eq!(ens.member_count(), 3);
        let outputs: Vec<f64> = ens.members().iter().map(|m| m.output).collect();
        assert_eq!(outputs, vec![0.5, -1.25, 2.0]);
    }

    #[test]
    fn ensemble_reproduces_evaluation_on_seeded_chains() {
        use rand::{Rng, SeedableRng};
        let spec = ChainSpec::uniform(3, 2, 3, true);
        let chain = TensorChain::init_random(&spec, &[1.0; 3], 77).unwrap();
        let maps: Vec<FeatureMap> = (0..3).map(|_| FeatureMap::trig()).collect();
        let ens = expand_ensemble(&chain).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let direct = chain.evaluate(&maps, &x).unwrap();
            let summed = ens.predict(&maps, &x).unwrap();
            assert!(
                (direct - summed).abs() <= 1e-12 * direct.abs().max(1.0),
                "{direct} vs {summed}"
            );
        }
    }

    #[test]
    fn open_boundary_ensemble_matches_too() {
        let spec = ChainSpec::uniform(4, 2, 3, false);
        let chain = TensorChain::init_random(&spec, &[1.0; 4], 13).unwrap();
        let maps: Vec<FeatureMap> = (0..4).map(|_| FeatureMap::trig()).collect();
        let ens = expand_ensemble(&chain).unwrap();
        let x = [0.2, 0.8, -0.3, 0.5];
        let direct = chain.evaluate(&maps, &x).unwrap();
        let summed = ens.predict(&maps, &x).unwrap();
        assert!((direct - summed).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn guard_rejects_oversized_enumeration() {
        let spec = ChainSpec::uniform(17, 2, 1, true);
        let chain = TensorChain::init_random(&spec, &vec![1.0; 17], 0).unwrap();
        assert!(matches!(expand_ensemble(&chain), Err(Error::Capacity(_))));
    }

    #[test]
    fn network_weights_are_site_slices() {
        let spec = ChainSpec::uniform(2, 2, 2, true);
        let chain = TensorChain::init_random(&spec, &[1.0; 2], 4).unwrap();
        let ens = expand_ensemble(&chain).unwrap();
        let member = &ens.members()[3]; // indices (1, 1)
        assert_eq!(member.phys_indices, vec![1, 1]);
        let w = ens.network_weights(member);
        assert_eq!(w[0], *chain.site(0).mat(1));
        assert_eq!(w[1], *chain.site(1).mat(1));
    }
}
