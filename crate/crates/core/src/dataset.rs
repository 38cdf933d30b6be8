//! Dataset generators and identifiers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `m` points on the diagonal of `[lo, hi]^n`: point `j` has every
/// coordinate equal to `lo + j (hi - lo) / (m - 1)`.
pub fn equispaced(m: usize, n: usize, lo: f64, hi: f64) -> Result<Vec<Vec<f64>>> {
    if m == 0 || n == 0 {
        return Err(Error::Config("dataset needs m >= 1 and n >= 1".into()));
    }
    if !(hi > lo) {
        return Err(Error::Config(format!("equispaced range must have hi > lo, got [{lo}, {hi}]")));
    }
    Ok((0..m)
        .map(|j| {
            let t = if m == 1 { lo } else { lo + j as f64 * (hi - lo) / (m - 1) as f64 };
            vec![t; n]
        })
        .collect())
}

/// `m` seeded uniform points in `[lo, hi]^n`.
pub fn random_points(m: usize, n: usize, lo: f64, hi: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if m == 0 || n == 0 {
        return Err(Error::Config("dataset needs m >= 1 and n >= 1".into()));
    }
    if !(hi > lo) {
        return Err(Error::Config(format!("range must have hi > lo, got [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..m).map(|_| (0..n).map(|_| rng.gen_range(lo..hi)).collect()).collect())
}

/// `m` distinct seeded binary strings of length `n`.
pub fn random_binary_strings(m: usize, n: usize, seed: u64) -> Result<Vec<Vec<u8>>> {
    if n == 0 || n >= usize::BITS as usize {
        return Err(Error::Config(format!("string length {n} unsupported")));
    }
    let space = 1usize << n;
    if m == 0 || m > space {
        return Err(Error::Config(format!(
            "cannot draw {m} distinct strings from a space of {space}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < m {
        seen.insert(rng.gen_range(0..space));
    }
    Ok(seen.into_iter().map(|mask| mask_to_string(mask, n)).collect())
}

/// Bit `i` of the mask becomes coordinate `i` of the string.
pub fn mask_to_string(mask: usize, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((mask >> i) & 1) as u8).collect()
}

/// `m` points in `R^n` with all pairwise distances equal to `edge`:
/// scaled standard-basis vectors. Needs `n >= m`.
pub fn simplex(m: usize, n: usize, edge: f64) -> Result<Vec<Vec<f64>>> {
    if m == 0 || n == 0 {
        return Err(Error::Config("dataset needs m >= 1 and n >= 1".into()));
    }
    if n < m {
        return Err(Error::Config(format!(
            "equidistant set of {m} points needs dimension >= {m}, got {n}"
        )));
    }
    if !(edge > 0.0) {
        return Err(Error::Config(format!("edge must be positive, got {edge}")));
    }
    let c = edge / std::f64::consts::SQRT_2;
    Ok((0..m)
        .map(|j| {
            let mut p = vec![0.0; n];
            p[j] = c;
            p
        })
        .collect())
}

/// Deterministic short identifier for a point set (FNV-1a over the bytes).
pub fn dataset_id(points: &[Vec<f64>]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    };
    for p in points {
        for v in p {
            for b in v.to_le_bytes() {
                eat(b);
            }
        }
        eat(b';');
    }
    format!("ds-{h:016x}")
}
