//! Commutative multi-indices and multinomial coefficients.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent vector `(α_1, …, α_n)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    /// The unit index `e_j` (0-based `j`).
    pub fn unit(n: usize, j: usize) -> Self {
        let mut v = vec![0; n];
        v[j] = 1;
        MultiIndex(v)
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// `α − e_j`, or `None` when `α_j = 0`.
    pub fn minus_unit(&self, j: usize) -> Option<MultiIndex> {
        if self.0[j] == 0 {
            return None;
        }
        let mut v = self.0.clone();
        v[j] -= 1;
        Some(MultiIndex(v))
    }

    pub fn plus_unit(&self, j: usize) -> MultiIndex {
        let mut v = self.0.clone();
        v[j] += 1;
        MultiIndex(v)
    }

    /// First coordinate with a positive exponent.
    pub fn first_nonzero(&self) -> Option<usize> {
        self.0.iter().position(|&a| a > 0)
    }

    /// All indices with `|α| = k`, in descending lexicographic order
    /// (`z_1^k` first).
    pub fn all_of_degree(n: usize, k: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; n];
        fill(&mut cur, 0, k as u32, &mut out);
        out
    }

    /// All indices with `|α| ≤ k`, degree by degree.
    pub fn all_up_to(n: usize, k: usize) -> Vec<MultiIndex> {
        (0..=k).flat_map(|j| Self::all_of_degree(n, j)).collect()
    }

    /// Number of indices with `|α| = k`.
    pub fn count_of_degree(n: usize, k: usize) -> usize {
        if n == 0 {
            return usize::from(k == 0);
        }
        binomial((k + n - 1) as u128, (n - 1) as u128).map_or(usize::MAX, |b| b as usize)
    }
}

fn fill(cur: &mut Vec<u32>, pos: usize, left: u32, out: &mut Vec<MultiIndex>) {
    let n = cur.len();
    if n == 0 {
        if left == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = left;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for a in (0..=left).rev() {
        cur[pos] = a;
        fill(cur, pos + 1, left - a, out);
    }
    cur[pos] = 0;
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Exact binomial coefficient, `None` on overflow.
pub fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc·(n−k+i) is divisible by i after the multiplication.
        acc = acc.checked_mul(n - k + i)? / i;
    }
    Some(acc)
}

/// Multinomial coefficient `|α|! / α!`.
pub fn gamma(alpha: &MultiIndex) -> Result<u128> {
    let mut acc: u128 = 1;
    let mut running: u128 = 0;
    for &a in alpha.exponents() {
        running += a as u128;
        let b = binomial(running, a as u128).ok_or(Error::Overflow)?;
        acc = acc.checked_mul(b).ok_or(Error::Overflow)?;
    }
    Ok(acc)
}

/// `γ_{α − e_j}`, zero when `α_j = 0`.
pub fn gamma_shifted(alpha: &MultiIndex, j: usize) -> Result<u128> {
    match alpha.minus_unit(j) {
        Some(b) => gamma(&b),
        None => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma(&MultiIndex::new(vec![2, 1])).unwrap(), 3);
        assert_eq!(gamma(&MultiIndex::zero(4)).unwrap(), 1);
        assert_eq!(gamma(&MultiIndex::new(vec![3, 2, 1])).unwrap(), 60);
        assert_eq!(gamma_shifted(&MultiIndex::new(vec![0, 2]), 0).unwrap(), 0);
        assert_eq!(gamma_shifted(&MultiIndex::new(vec![1, 2]), 0).unwrap(), 1);
    }

    #[test]
    fn gamma_large_and_overflow() {
        let total: u128 = MultiIndex::all_of_degree(3, 48).iter().map(|a| gamma(a).unwrap()).sum();
        assert_eq!(total, 3u128.pow(48));
        assert!(matches!(gamma(&MultiIndex::new(vec![60, 60, 60])), Err(Error::Overflow)));
    }

    #[test]
    fn enumeration_counts_and_order() {
        let band = MultiIndex::all_of_degree(2, 2);
        let raw: Vec<Vec<u32>> = band.iter().map(|a| a.exponents().to_vec()).collect();
        assert_eq!(raw, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        for n in 1..4 {
            for k in 0..6 {
                assert_eq!(MultiIndex::all_of_degree(n, k).len(), MultiIndex::count_of_degree(n, k));
            }
        }
        assert_eq!(MultiIndex::all_up_to(3, 3).len(), 20);
    }

    proptest! {
        #[test]
        fn pascal_identity(v in prop::collection::vec(0u32..7, 1..5)) {
            let a = MultiIndex::new(v);
            prop_assume!(a.total() >= 1);
            let sum: u128 = (0..a.n()).map(|j| gamma_shifted(&a, j).unwrap()).sum();
            prop_assert_eq!(gamma(&a).unwrap(), sum);
        }

        #[test]
        fn gamma_sums_to_power(n in 1usize..4, k in 0usize..8) {
            let total: u128 = MultiIndex::all_of_degree(n, k).iter().map(|a| gamma(a).unwrap()).sum();
            prop_assert_eq!(total, (n as u128).pow(k as u32));
        }
    }
}
