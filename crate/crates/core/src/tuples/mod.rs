//! Operator tuples: validation, defect operators, powers, classification and
//! the coisometric part.

mod multi;

use std::collections::HashMap;

use nalgebra::Schur;
use serde::Serialize;

pub use multi::{binomial, gamma, gamma_shifted, MultiIndex};

use crate::error::{Error, Result};
use crate::opcore::{
    c, hstack, identity, lambda_max, op_norm, psd_sqrt_with_range, range_basis_scaled, zeros, CMatrix, Subspace,
    DEFAULT_TOL,
};

/// `n` square matrices of a common size `d`.
#[derive(Clone, Debug)]
pub struct OperatorTuple {
    mats: Vec<CMatrix>,
    dim: usize,
    tol: f64,
}

impl OperatorTuple {
    pub fn new(mats: Vec<CMatrix>, tol: f64) -> Result<Self> {
        let first = mats.first().ok_or_else(|| Error::InvalidInput("a tuple needs at least one operator".into()))?;
        let dim = first.nrows();
        for (i, m) in mats.iter().enumerate() {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::InvalidInput(format!(
                    "operator {} is {}x{}, expected {dim}x{dim}",
                    i + 1,
                    m.nrows(),
                    m.ncols()
                )));
            }
            if !crate::opcore::is_finite(m) {
                return Err(Error::InvalidInput(format!("operator {} has non-finite entries", i + 1)));
            }
        }
        if !(tol.is_finite() && tol >= 0.0) {
            return Err(Error::InvalidInput(format!("tolerance {tol} is not a nonnegative number")));
        }
        Ok(OperatorTuple { mats, dim, tol })
    }

    pub fn with_default_tol(mats: Vec<CMatrix>) -> Result<Self> {
        Self::new(mats, DEFAULT_TOL)
    }

    pub fn zero(n: usize, d: usize) -> Self {
        OperatorTuple { mats: vec![zeros(d, d); n], dim: d, tol: DEFAULT_TOL }
    }

    pub fn n(&self) -> usize {
        self.mats.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn mats(&self) -> &[CMatrix] {
        &self.mats
    }

    pub fn get(&self, i: usize) -> &CMatrix {
        &self.mats[i]
    }

    /// The row operator `[T_1 … T_n]` of size `d × nd`.
    pub fn row(&self) -> CMatrix {
        let refs: Vec<&CMatrix> = self.mats.iter().collect();
        hstack(&refs)
    }

    /// `(U T_i U*)_i`.
    pub fn conjugate(&self, u: &CMatrix) -> OperatorTuple {
        let mats = self.mats.iter().map(|m| u * m * u.adjoint()).collect();
        OperatorTuple { mats, dim: u.nrows(), tol: self.tol }
    }

    /// `(B* T_i B)_i` for a column-orthonormal `B`.
    pub fn compress(&self, basis: &CMatrix) -> OperatorTuple {
        let mats = self.mats.iter().map(|m| basis.adjoint() * m * basis).collect();
        OperatorTuple { mats, dim: basis.ncols(), tol: self.tol }
    }

    /// `max_{i<j} ‖T_iT_j − T_jT_i‖`.
    pub fn commutator_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                let comm = &self.mats[i] * &self.mats[j] - &self.mats[j] * &self.mats[i];
                worst = worst.max(op_norm(&comm));
            }
        }
        worst
    }

    /// `λ_max(ΣT_iT_i* − I)`; `-1` on the zero-dimensional space.
    pub fn row_contraction_excess(&self) -> f64 {
        if self.dim == 0 {
            return -1.0;
        }
        let row = self.row();
        lambda_max(&(&row * row.adjoint() - identity(self.dim)))
    }

    /// `ΣT_iT_i*`.
    pub fn row_gram(&self) -> CMatrix {
        let row = self.row();
        &row * row.adjoint()
    }
}

/// Outcome of [`validate`].
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Diagnostics {
    pub commutation_residual: f64,
    pub row_contraction_residual: f64,
    pub commuting: bool,
    pub row_contraction: bool,
    pub tol: f64,
}

pub fn validate(t: &OperatorTuple) -> Diagnostics {
    let comm = t.commutator_residual();
    let excess = t.row_contraction_excess();
    Diagnostics {
        commutation_residual: comm,
        row_contraction_residual: excess,
        commuting: comm <= t.tol,
        row_contraction: excess <= t.tol,
        tol: t.tol,
    }
}

pub fn require_row_contraction(t: &OperatorTuple) -> Result<()> {
    let excess = t.row_contraction_excess();
    if excess > t.tol {
        return Err(Error::NotRowContraction { excess });
    }
    Ok(())
}

pub fn require_commuting(t: &OperatorTuple) -> Result<()> {
    require_row_contraction(t)?;
    let residual = t.commutator_residual();
    if residual > t.tol {
        return Err(Error::NotCommuting { residual });
    }
    Ok(())
}

/// Defect operators and their ranges.
#[derive(Clone, Debug)]
pub struct DefectPair {
    /// `(I_{nd} − T*T)^{1/2}`.
    pub d_t: CMatrix,
    /// `(I_d − TT*)^{1/2}`.
    pub d_tstar: CMatrix,
    pub space_t: Subspace,
    pub space_tstar: Subspace,
}

impl DefectPair {
    pub fn rank_t(&self) -> usize {
        self.space_t.dim()
    }

    pub fn rank_tstar(&self) -> usize {
        self.space_tstar.dim()
    }

    /// `‖T D_T − D_{T*} T‖` for the row operator.
    pub fn intertwining_residual(&self, t: &OperatorTuple) -> f64 {
        let row = t.row();
        op_norm(&(&row * &self.d_t - &self.d_tstar * &row))
    }
}

pub fn defects(t: &OperatorTuple) -> Result<DefectPair> {
    require_row_contraction(t)?;
    let row = t.row();
    let nd = t.n() * t.dim;
    let (d_t, space_t) = psd_sqrt_with_range(&(identity(nd) - row.adjoint() * &row), t.tol)?;
    let (d_tstar, space_tstar) = psd_sqrt_with_range(&(identity(t.dim) - &row * row.adjoint()), t.tol)?;
    Ok(DefectPair { d_t, d_tstar, space_t, space_tstar })
}

/// `T^α = T_1^{α_1}⋯T_n^{α_n}`.
pub fn power(t: &OperatorTuple, alpha: &MultiIndex) -> CMatrix {
    let mut acc = identity(t.dim);
    for (i, &a) in alpha.exponents().iter().enumerate() {
        for _ in 0..a {
            acc = &acc * &t.mats[i];
        }
    }
    acc
}

/// `T^{*α} = T_1^{*α_1}⋯T_n^{*α_n}`.
pub fn adjoint_power(t: &OperatorTuple, alpha: &MultiIndex) -> CMatrix {
    let mut acc = identity(t.dim);
    for (i, &a) in alpha.exponents().iter().enumerate() {
        let adj = t.mats[i].adjoint();
        for _ in 0..a {
            acc = &acc * &adj;
        }
    }
    acc
}

/// Memoised powers `T^α` (or `T^{*α}`) for all `|α| ≤ horizon`, built band by
/// band as `T^α = T_i T^{α−e_i}` with `i` the first nonzero coordinate, which
/// reproduces the index-order product exactly.
///
/// Once every power in a band is below the tuple tolerance (Frobenius norm),
/// that band and all later ones are exact zeros: a vanishing band forces all
/// higher powers to vanish, and flushing keeps rounding noise from being
/// amplified by large multinomial weights downstream.
pub struct PowerTable {
    powers: HashMap<MultiIndex, CMatrix>,
    horizon: usize,
    zero_from: Option<usize>,
    zero: CMatrix,
}

impl PowerTable {
    pub fn forward(t: &OperatorTuple, horizon: usize) -> Self {
        Self::build(t.n(), t.dim, t.tol, horizon, |i| t.mats[i].clone())
    }

    /// Forward powers without flushing small bands.
    pub fn forward_unflushed(t: &OperatorTuple, horizon: usize) -> Self {
        Self::build(t.n(), t.dim, -1.0, horizon, |i| t.mats[i].clone())
    }

    pub fn adjoint(t: &OperatorTuple, horizon: usize) -> Self {
        Self::build(t.n(), t.dim, t.tol, horizon, |i| t.mats[i].adjoint())
    }

    fn build(n: usize, d: usize, tol: f64, horizon: usize, factor: impl Fn(usize) -> CMatrix) -> Self {
        let factors: Vec<CMatrix> = (0..n).map(factor).collect();
        let mut powers = HashMap::new();
        powers.insert(MultiIndex::zero(n), identity(d));
        let mut zero_from = None;
        for k in 1..=horizon {
            let band = MultiIndex::all_of_degree(n, k);
            let mut all_small = true;
            for alpha in band.iter() {
                let i = alpha.first_nonzero().expect("positive degree");
                let prev = &powers[&alpha.minus_unit(i).expect("nonzero coordinate")];
                let next = &factors[i] * prev;
                all_small &= crate::opcore::fro_norm(&next) <= tol;
                powers.insert(alpha.clone(), next);
            }
            if all_small {
                for alpha in &band {
                    powers.remove(alpha);
                }
                zero_from = Some(k);
                break;
            }
        }
        PowerTable { powers, horizon, zero_from, zero: zeros(d, d) }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// First degree from which all powers are flushed to zero.
    pub fn zero_from(&self) -> Option<usize> {
        self.zero_from
    }

    pub fn is_zero(&self, alpha: &MultiIndex) -> bool {
        self.zero_from.is_some_and(|k| alpha.total() >= k)
    }

    pub fn get(&self, alpha: &MultiIndex) -> &CMatrix {
        if self.is_zero(alpha) {
            return &self.zero;
        }
        &self.powers[alpha]
    }
}

/// Outcome of [`classify`].
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Classification {
    pub pure: bool,
    /// Spectral radius of `X ↦ ΣT_iXT_i*`.
    pub spectral_radius: f64,
    pub spherical_coisometry: bool,
    pub coisometry_residual: f64,
    pub row_partial_isometry: bool,
    pub partial_isometry_residual: f64,
    pub nilpotent_order: Option<usize>,
}

/// Spectral radius of the completely positive map `X ↦ ΣT_iXT_i*`, realised
/// on column-stacked `d×d` matrices as `Σ conj(T_i) ⊗ T_i`.
pub fn cp_spectral_radius(t: &OperatorTuple) -> f64 {
    let d = t.dim;
    if d == 0 {
        return 0.0;
    }
    let mut phi = zeros(d * d, d * d);
    for m in &t.mats {
        phi += m.map(|z| z.conj()).kronecker(m);
    }
    // Unbounded QR iterations can stall on clustered unimodular spectra.
    match Schur::try_new(phi.clone(), f64::EPSILON, 2000) {
        Some(schur) => {
            let (_, tri) = schur.unpack();
            (0..d * d).map(|k| tri[(k, k)].norm()).fold(0.0, f64::max)
        }
        None => gelfand_radius(phi),
    }
}

/// `lim ‖A^k‖^{1/k}` along `k = 2^j`, with each square renormalised so the
/// exponent is carried in log scale.
fn gelfand_radius(mut a: CMatrix) -> f64 {
    let mut log_norm = 0.0f64;
    let mut weight = 1.0f64;
    for _ in 0..48 {
        let norm = op_norm(&a);
        if norm == 0.0 {
            return 0.0;
        }
        a /= c(norm, 0.0);
        log_norm += weight * norm.ln();
        a = &a * &a;
        weight *= 0.5;
    }
    (log_norm + weight * op_norm(&a).ln()).exp()
}

pub fn classify(t: &OperatorTuple) -> Classification {
    let tol = t.tol;
    let rho = cp_spectral_radius(t);
    let coiso = if t.dim == 0 { 0.0 } else { op_norm(&(t.row_gram() - identity(t.dim))) };
    let row = t.row();
    let gram = row.adjoint() * &row;
    let pi = op_norm(&(&gram * &gram - &gram));
    Classification {
        pure: rho < 1.0 - tol,
        spectral_radius: rho,
        spherical_coisometry: coiso <= tol,
        coisometry_residual: coiso,
        row_partial_isometry: pi <= tol,
        partial_isometry_residual: pi,
        nilpotent_order: nilpotent_order(t),
    }
}

/// Smallest `m` with `T^α = 0` for every `|α| = m`, scanned up to `n·d`.
pub fn nilpotent_order(t: &OperatorTuple) -> Option<usize> {
    let limit = (t.n() * t.dim).max(1);
    let mut band: Vec<(MultiIndex, CMatrix)> = vec![(MultiIndex::zero(t.n()), identity(t.dim))];
    for m in 1..=limit {
        let mut next: HashMap<MultiIndex, CMatrix> = HashMap::new();
        for (alpha, p) in &band {
            // Only extend with letters at or before the first nonzero one so
            // every index is produced once, in index order.
            let stop = alpha.first_nonzero().unwrap_or(t.n() - 1);
            for i in 0..=stop {
                next.insert(alpha.plus_unit(i), &t.mats[i] * p);
            }
        }
        if next.values().all(|p| op_norm(p) <= t.tol) {
            return Some(m);
        }
        band = next.into_iter().collect();
    }
    None
}

/// Orthonormal bases of the bands `span{T^α D_{T*} h : |α| = k}`, computed as
/// `band_{k+1} = span{T_i band_k}`. Re-orthonormalising each band keeps the
/// rank decisions independent of how fast the powers decay.
pub struct DefectOrbit<'a> {
    tuple: &'a OperatorTuple,
    bands: Vec<Subspace>,
}

impl<'a> DefectOrbit<'a> {
    pub fn new(tuple: &'a OperatorTuple, defects: &DefectPair) -> Self {
        DefectOrbit { tuple, bands: vec![defects.space_tstar.clone()] }
    }

    pub fn band(&mut self, k: usize) -> &Subspace {
        while self.bands.len() <= k {
            let last = self.bands.last().expect("band 0 present");
            let images: Vec<CMatrix> = self.tuple.mats.iter().map(|m| m * last.basis()).collect();
            let refs: Vec<&CMatrix> = images.iter().collect();
            let next = if refs.iter().all(|b| b.ncols() == 0) {
                Subspace::zero(self.tuple.dim, self.tuple.tol)
            } else {
                range_basis_scaled(&hstack(&refs), self.tuple.tol, 1.0)
            };
            self.bands.push(next);
        }
        &self.bands[k]
    }

    /// `closed span{T^α D_{T*} h : |α| ≥ m}` with the index of the first band
    /// that added nothing (the stabilization certificate).
    pub fn span_from(&mut self, m: usize) -> (Subspace, usize) {
        let mut acc = self.band(m).clone();
        let mut k = m;
        loop {
            let next = self.band(k + 1).clone();
            let grown = acc.sum(&next).expect("same ambient space");
            if grown.dim() == acc.dim() {
                return (acc, k + 1);
            }
            assert!(k - m <= self.tuple.dim + 1, "span failed to stabilise within the dimension bound");
            acc = grown;
            k += 1;
        }
    }
}

/// `H_c`: the orthogonal complement of `span{T^α D_{T*} h}`.
pub fn coisometric_subspace(t: &OperatorTuple) -> Result<Subspace> {
    let defects = defects(t)?;
    let mut orbit = DefectOrbit::new(t, &defects);
    Ok(orbit.span_from(0).0.complement())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::fro_norm;

    #[test]
    fn gelfand_radius_matches_schur() {
        // Diagonal 0.9 and 0.5 with a large nilpotent part.
        let mut a = zeros(3, 3);
        a[(0, 0)] = c(0.9, 0.0);
        a[(1, 1)] = c(0.5, 0.0);
        a[(0, 1)] = c(40.0, 0.0);
        a[(1, 2)] = c(0.0, 3.0);
        assert!((gelfand_radius(a) - 0.9).abs() < 1e-9);
        let rot = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]);
        assert!((gelfand_radius(rot) - 1.0).abs() < 1e-12);
        assert_eq!(gelfand_radius(zeros(2, 2)), 0.0);
    }

    fn scalar(v: f64) -> CMatrix {
        CMatrix::from_element(1, 1, c(v, 0.0))
    }

    #[test]
    fn validate_examples() {
        let z = OperatorTuple::zero(2, 1);
        let d = validate(&z);
        assert!(d.commuting && d.row_contraction && d.commutation_residual == 0.0);
        let big = OperatorTuple::with_default_tol(vec![scalar(1.0), scalar(1.0)]).unwrap();
        let d = validate(&big);
        assert!(!d.row_contraction);
        assert!((d.row_contraction_residual - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_ragged_input() {
        assert!(OperatorTuple::with_default_tol(vec![zeros(2, 2), zeros(3, 3)]).is_err());
        assert!(OperatorTuple::with_default_tol(vec![]).is_err());
        let mut nan = zeros(1, 1);
        nan[(0, 0)] = c(f64::NAN, 0.0);
        assert!(OperatorTuple::with_default_tol(vec![nan]).is_err());
    }

    #[test]
    fn scalar_zero_defects() {
        let t = OperatorTuple::zero(1, 1);
        let dp = defects(&t).unwrap();
        assert!((dp.d_t[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((dp.d_tstar[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert_eq!((dp.rank_t(), dp.rank_tstar()), (1, 1));
    }

    #[test]
    fn coisometry_has_trivial_star_defect() {
        let s = 1.0 / 2f64.sqrt();
        let t = OperatorTuple::with_default_tol(vec![scalar(s), scalar(s)]).unwrap();
        let dp = defects(&t).unwrap();
        assert_eq!(dp.rank_tstar(), 0);
        assert!(fro_norm(&dp.d_tstar) < 1e-12);
        assert_eq!(dp.rank_t(), 1);
        let cl = classify(&t);
        assert!(cl.spherical_coisometry && !cl.pure && cl.row_partial_isometry);
        assert_eq!(cl.nilpotent_order, None);
        assert_eq!(coisometric_subspace(&t).unwrap().dim(), 1);
    }

    #[test]
    fn zero_tuple_classification() {
        let cl = classify(&OperatorTuple::zero(2, 3));
        assert!(cl.pure && cl.row_partial_isometry && !cl.spherical_coisometry);
        assert_eq!(cl.nilpotent_order, Some(1));
        assert_eq!(coisometric_subspace(&OperatorTuple::zero(2, 3)).unwrap().dim(), 0);
    }

    #[test]
    fn power_table_matches_direct_products() {
        let a = CMatrix::from_fn(3, 3, |i, j| c(0.1 * (i as f64) - 0.05 * j as f64, 0.02 * (i + 2 * j) as f64));
        let b = CMatrix::from_fn(3, 3, |i, j| c(0.03 * (i * j) as f64, -0.04 * i as f64 + 0.01));
        let t = OperatorTuple::with_default_tol(vec![a, b]).unwrap();
        let fwd = PowerTable::forward(&t, 4);
        let adj = PowerTable::adjoint(&t, 4);
        for alpha in MultiIndex::all_up_to(2, 4) {
            assert!(fro_norm(&(fwd.get(&alpha) - power(&t, &alpha))) < 1e-15);
            assert!(fro_norm(&(adj.get(&alpha) - adjoint_power(&t, &alpha))) < 1e-15);
        }
    }

    #[test]
    fn jordan_block_nilpotent_order() {
        let mut j = zeros(3, 3);
        j[(1, 0)] = c(1.0, 0.0);
        j[(2, 1)] = c(1.0, 0.0);
        let t = OperatorTuple::with_default_tol(vec![j]).unwrap();
        assert_eq!(nilpotent_order(&t), Some(3));
        let orbit_t = t.clone();
        let dp = defects(&orbit_t).unwrap();
        let mut orbit = DefectOrbit::new(&orbit_t, &dp);
        let (k, stop) = orbit.span_from(0);
        assert_eq!(k.dim(), 3);
        assert!(stop <= 4);
    }
}
