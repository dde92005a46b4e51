//! The commutative characteristic function: Taylor coefficients, point
//! evaluation through the resolvent, degree detection and the sampled Gleason
//! regularity test.
//!
//! All coefficients are expressed in the defect bases fixed by
//! [`tuples::defects`](crate::tuples::defects): rows in the basis of the range
//! of `D_{T*}`, columns in the basis of the range of `D_T`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::opcore::{c, hstack, identity, op_norm, range_basis_scaled, singular_values, zeros, CMatrix, Subspace, C64};
use crate::tuples::{defects, gamma_shifted, require_commuting, DefectPair, MultiIndex, OperatorTuple, PowerTable};

/// Relative threshold below which a coefficient counts as zero.
pub const DEFAULT_ZERO_THRESH: f64 = 1e-8;

/// Default degree horizon `2·n·d`.
pub fn default_horizon(t: &OperatorTuple) -> usize {
    (2 * t.n() * t.dim()).max(1)
}

/// A validated commuting tuple with its defect data, ready for coefficient
/// extraction and evaluation.
#[derive(Clone, Debug)]
pub struct CharFn {
    tuple: OperatorTuple,
    defects: DefectPair,
    /// `B_{T*}* D_{T*}`.
    left: CMatrix,
    /// Blocks `P_j D_T B_T`.
    right: Vec<CMatrix>,
    /// `−B_{T*}* T B_T`.
    constant: CMatrix,
}

impl CharFn {
    pub fn new(t: &OperatorTuple) -> Result<Self> {
        require_commuting(t)?;
        let defects = defects(t)?;
        Ok(Self::from_parts(t.clone(), defects))
    }

    fn from_parts(tuple: OperatorTuple, defects: DefectPair) -> Self {
        let d = tuple.dim();
        let bt = defects.space_t.basis();
        let bts = defects.space_tstar.basis();
        let left = bts.adjoint() * &defects.d_tstar;
        let db = &defects.d_t * bt;
        let right = (0..tuple.n()).map(|j| db.rows(j * d, d).into_owned()).collect();
        let constant = -(bts.adjoint() * tuple.row() * bt);
        CharFn { tuple, defects, left, right, constant }
    }

    pub fn tuple(&self) -> &OperatorTuple {
        &self.tuple
    }

    pub fn defects(&self) -> &DefectPair {
        &self.defects
    }

    /// Shape `(rank D_{T*}, rank D_T)` of every coefficient.
    pub fn shape(&self) -> (usize, usize) {
        (self.defects.rank_tstar(), self.defects.rank_t())
    }

    /// Coefficient of `z^α`.
    pub fn coeff(&self, alpha: &MultiIndex) -> Result<CMatrix> {
        self.check_index(alpha)?;
        let k = alpha.total();
        if k == 0 {
            return Ok(self.constant.clone());
        }
        let powers = PowerTable::adjoint(&self.tuple, k - 1);
        self.coeff_with(alpha, &powers)
    }

    fn check_index(&self, alpha: &MultiIndex) -> Result<()> {
        if alpha.n() != self.tuple.n() {
            return Err(Error::InvalidInput(format!(
                "multi-index {alpha} has {} entries, the tuple has {} operators",
                alpha.n(),
                self.tuple.n()
            )));
        }
        Ok(())
    }

    fn coeff_with(&self, alpha: &MultiIndex, powers: &PowerTable) -> Result<CMatrix> {
        if alpha.total() == 0 {
            return Ok(self.constant.clone());
        }
        let (rs, r) = self.shape();
        let mut acc = zeros(rs, r);
        for j in 0..self.tuple.n() {
            let Some(beta) = alpha.minus_unit(j) else { continue };
            if powers.is_zero(&beta) {
                continue;
            }
            let g = gamma_shifted(alpha, j)?;
            let term = &self.left * powers.get(&beta) * &self.right[j];
            acc += term * c(g as f64, 0.0);
        }
        Ok(acc)
    }

    /// `θ(z) = −T + D_{T*}(I − Σz_iT_i*)^{-1}(Σz_jP_j)D_T` on the defect bases.
    pub fn eval(&self, z: &[C64]) -> Result<CMatrix> {
        let n = self.tuple.n();
        if z.len() != n {
            return Err(Error::InvalidInput(format!("point has {} coordinates, expected {n}", z.len())));
        }
        let radius = z.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        if radius >= 1.0 {
            return Err(Error::InvalidInput(format!("point of norm {radius} lies outside the open unit ball")));
        }
        let d = self.tuple.dim();
        let (_, r) = self.shape();
        let mut m = identity(d);
        let mut rhs = zeros(d, r);
        for (i, &zi) in z.iter().enumerate() {
            m -= self.tuple.get(i).adjoint() * zi;
            rhs += &self.right[i] * zi;
        }
        if d > 0 {
            let s = singular_values(&m);
            let smin = s.last().copied().unwrap_or(0.0);
            let condition = if smin > 0.0 { s[0] / smin } else { f64::INFINITY };
            if condition * self.tuple.tol() > 1.0 {
                return Err(Error::NearSingularResolvent { condition });
            }
        }
        let x = if d == 0 {
            zeros(0, r)
        } else {
            m.lu().solve(&rhs).ok_or(Error::NearSingularResolvent { condition: f64::INFINITY })?
        };
        Ok(&self.constant + &self.left * x)
    }

    /// Every coefficient with `|α| ≤ horizon`. Coefficients are computed in
    /// parallel from a shared power table, so the result does not depend on
    /// scheduling.
    pub fn taylor(&self, horizon: usize) -> Result<TaylorTable> {
        let n = self.tuple.n();
        let powers = PowerTable::adjoint(&self.tuple, horizon.saturating_sub(1));
        let indices = MultiIndex::all_up_to(n, horizon);
        let computed: Vec<Result<(MultiIndex, CMatrix, f64)>> = indices
            .into_par_iter()
            .map(|alpha| {
                let m = self.coeff_with(&alpha, &powers)?;
                let norm = op_norm(&m);
                Ok((alpha, m, norm))
            })
            .collect();
        let mut coeffs = BTreeMap::new();
        let mut norms = BTreeMap::new();
        for item in computed {
            let (alpha, m, norm) = item?;
            norms.insert(alpha.clone(), norm);
            coeffs.insert(alpha, m);
        }
        let (rank_tstar, rank_t) = self.shape();
        Ok(TaylorTable { n, horizon, rank_t, rank_tstar, coeffs, norms })
    }
}

/// Convenience wrapper around [`CharFn::coeff`].
pub fn coeff(t: &OperatorTuple, alpha: &MultiIndex) -> Result<CMatrix> {
    CharFn::new(t)?.coeff(alpha)
}

/// Convenience wrapper around [`CharFn::eval`].
pub fn eval(t: &OperatorTuple, z: &[C64]) -> Result<CMatrix> {
    CharFn::new(t)?.eval(z)
}

/// Convenience wrapper around [`CharFn::taylor`].
pub fn taylor(t: &OperatorTuple, horizon: usize) -> Result<TaylorTable> {
    CharFn::new(t)?.taylor(horizon)
}

/// `z^α`.
pub fn monomial(z: &[C64], alpha: &MultiIndex) -> C64 {
    let mut acc = c(1.0, 0.0);
    for (w, &a) in z.iter().zip(alpha.exponents()) {
        acc *= w.powu(a);
    }
    acc
}

/// Coefficients of the characteristic function for `|α| ≤ horizon`.
#[derive(Clone, Debug)]
pub struct TaylorTable {
    pub n: usize,
    pub horizon: usize,
    pub rank_t: usize,
    pub rank_tstar: usize,
    pub coeffs: BTreeMap<MultiIndex, CMatrix>,
    pub norms: BTreeMap<MultiIndex, f64>,
}

impl TaylorTable {
    pub fn get(&self, alpha: &MultiIndex) -> Option<&CMatrix> {
        self.coeffs.get(alpha)
    }

    /// `Σ_{|α| ≤ up_to} θ_α z^α`.
    pub fn partial_sum(&self, z: &[C64], up_to: usize) -> CMatrix {
        let mut acc = zeros(self.rank_tstar, self.rank_t);
        for (alpha, m) in &self.coeffs {
            if alpha.total() <= up_to {
                acc += m * monomial(z, alpha);
            }
        }
        acc
    }

    /// Largest coefficient norm in each degree `0..=horizon`.
    pub fn band_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.horizon + 1];
        for (alpha, &v) in &self.norms {
            let k = alpha.total();
            out[k] = out[k].max(v);
        }
        out
    }

    pub fn max_norm(&self) -> f64 {
        self.norms.values().copied().fold(0.0, f64::max)
    }
}

/// Degree of a polynomial characteristic function, or the marker that
/// nonzero coefficients reach the scan horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Degree {
    Exact(usize),
    ExceedsHorizon,
}

impl Degree {
    pub fn exact(self) -> Option<usize> {
        match self {
            Degree::Exact(m) => Some(m),
            Degree::ExceedsHorizon => None,
        }
    }
}

impl std::fmt::Display for Degree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Degree::Exact(m) => write!(f, "{m}"),
            Degree::ExceedsHorizon => write!(f, "exceeds-horizon"),
        }
    }
}

impl Serialize for Degree {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Degree::Exact(m) => s.serialize_u64(*m as u64),
            Degree::ExceedsHorizon => s.serialize_str("exceeds-horizon"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeReport {
    pub degree: Degree,
    pub horizon: usize,
    /// Highest-degree coefficient above the threshold.
    pub witness: Option<MultiIndex>,
    pub witness_norm: f64,
    /// Largest coefficient norm beyond the reported degree (up to the horizon).
    pub max_tail_norm: f64,
    pub threshold: f64,
    /// Largest coefficient norm per degree.
    pub band_norms: Vec<f64>,
}

/// Reads the degree off a table. A coefficient is nonzero when its norm
/// exceeds `zero_thresh·max(1, max norm)`; nonzero coefficients in the top
/// band mean the scan cannot certify a degree.
pub fn degree(table: &TaylorTable, zero_thresh: f64) -> DegreeReport {
    let threshold = zero_thresh * table.max_norm().max(1.0);
    let mut witness: Option<(&MultiIndex, f64)> = None;
    for (alpha, &v) in &table.norms {
        if v > threshold {
            let better = match witness {
                None => true,
                Some((w, wv)) => alpha.total() > w.total() || (alpha.total() == w.total() && v > wv),
            };
            if better {
                witness = Some((alpha, v));
            }
        }
    }
    let top = witness.map_or(0, |(w, _)| w.total());
    let degree = if witness.is_some() && top >= table.horizon && table.horizon > 0 {
        Degree::ExceedsHorizon
    } else {
        Degree::Exact(top)
    };
    let max_tail_norm =
        table.norms.iter().filter(|(a, _)| a.total() > top).map(|(_, &v)| v).fold(0.0, f64::max);
    DegreeReport {
        degree,
        horizon: table.horizon,
        witness: witness.map(|(w, _)| w.clone()),
        witness_norm: witness.map_or(0.0, |(_, v)| v),
        max_tail_norm,
        threshold,
        band_norms: table.band_norms(),
    }
}

/// Degree scan up to `horizon` with the default zero threshold.
pub fn degree_of(t: &OperatorTuple, horizon: usize) -> Result<DegreeReport> {
    Ok(degree(&taylor(t, horizon)?, DEFAULT_ZERO_THRESH))
}

/// One probe point of the Gleason test.
#[derive(Clone, Debug, Serialize)]
pub struct GleasonSample {
    /// Coordinates as `[re, im]` pairs.
    pub point: Vec<[f64; 2]>,
    pub rank: usize,
    pub intersection_dim: usize,
    /// Smallest singular value of `T − Z` that was counted towards the rank.
    pub smallest_retained_singular_value: f64,
    pub regular: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GleasonReport {
    /// `rank T`.
    pub r0: usize,
    /// `dim (H ⊖ ΣT_iH)`.
    pub n0_dim: usize,
    pub epsilon: f64,
    pub regular_at_0: bool,
    pub sampled_regular: bool,
    pub profile: Vec<GleasonSample>,
}

impl GleasonReport {
    pub fn regular(&self) -> bool {
        self.regular_at_0 && self.sampled_regular
    }
}

fn gleason_probe(t: &OperatorTuple, z: &[C64], n0: &Subspace, r0: usize) -> GleasonSample {
    let d = t.dim();
    let shifted: Vec<CMatrix> = t.mats().iter().zip(z).map(|(m, &w)| m - identity(d) * w).collect();
    let refs: Vec<&CMatrix> = shifted.iter().collect();
    let row = hstack(&refs);
    let range = range_basis_scaled(&row, t.tol(), 1.0);
    let rank = range.dim();
    let smallest = {
        let s = singular_values(&row);
        if rank == 0 {
            0.0
        } else {
            s[rank - 1]
        }
    };
    let intersection_dim = range.intersection(n0).expect("same ambient").dim();
    GleasonSample {
        point: z.iter().map(|w| [w.re, w.im]).collect(),
        rank,
        intersection_dim,
        smallest_retained_singular_value: smallest,
        regular: rank == r0 && intersection_dim == 0,
    }
}

/// Sampled regularity test: the direct-sum condition is checked at `z = 0`
/// and at `num_samples` seeded random points on the sphere of radius
/// `epsilon`.
pub fn gleason_regular(t: &OperatorTuple, epsilon: f64, num_samples: usize, seed: u64) -> Result<GleasonReport> {
    require_commuting(t)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidInput(format!("sampling radius {epsilon} must lie in (0, 1)")));
    }
    let n = t.n();
    let ran = range_basis_scaled(&t.row(), t.tol(), 1.0);
    let r0 = ran.dim();
    let n0 = ran.complement();
    let origin = vec![c(0.0, 0.0); n];
    let at0 = gleason_probe(t, &origin, &n0, r0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut profile = vec![at0.clone()];
    for _ in 0..num_samples {
        let raw: Vec<C64> =
            (0..n).map(|_| c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))).collect();
        let norm = raw.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        let z: Vec<C64> = raw.iter().map(|w| w * (epsilon / norm)).collect();
        profile.push(gleason_probe(t, &z, &n0, r0));
    }
    Ok(GleasonReport {
        r0,
        n0_dim: n0.dim(),
        epsilon,
        regular_at_0: at0.regular,
        sampled_regular: profile[1..].iter().all(|s| s.regular),
        profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::fro_norm;

    fn scalar(v: f64) -> CMatrix {
        CMatrix::from_element(1, 1, c(v, 0.0))
    }

    #[test]
    fn scalar_zero_is_identity_function() {
        let t = OperatorTuple::zero(1, 1);
        let f = CharFn::new(&t).unwrap();
        assert!(fro_norm(&f.coeff(&MultiIndex::zero(1)).unwrap()) == 0.0);
        let c1 = f.coeff(&MultiIndex::unit(1, 0)).unwrap();
        assert!((c1[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(fro_norm(&f.coeff(&MultiIndex::new(vec![2])).unwrap()) == 0.0);
        let z = c(0.3, -0.2);
        let v = f.eval(&[z]).unwrap();
        assert!((v[(0, 0)] - z).norm() < 1e-15);
        let rep = degree_of(&t, 2).unwrap();
        assert_eq!(rep.degree, Degree::Exact(1));
    }

    #[test]
    fn zero_pair_gives_coordinate_projections() {
        let t = OperatorTuple::zero(2, 1);
        let f = CharFn::new(&t).unwrap();
        assert_eq!(f.shape(), (1, 2));
        // θ(z) = [z_1 z_2] up to the choice of basis of ℂ²; compare through
        // the basis itself.
        let bt = f.defects().space_t.basis().clone();
        let bts = f.defects().space_tstar.basis().clone();
        for j in 0..2 {
            let got = &bts * f.coeff(&MultiIndex::unit(2, j)).unwrap() * bt.adjoint();
            let mut want = zeros(1, 2);
            want[(0, j)] = c(1.0, 0.0);
            assert!(fro_norm(&(got - want)) < 1e-14);
        }
    }

    #[test]
    fn coisometry_is_constant() {
        let s = 1.0 / 2f64.sqrt();
        let t = OperatorTuple::with_default_tol(vec![scalar(s), scalar(s)]).unwrap();
        let table = taylor(&t, 4).unwrap();
        assert_eq!((table.rank_tstar, table.rank_t), (0, 1));
        assert_eq!(degree(&table, DEFAULT_ZERO_THRESH).degree, Degree::Exact(0));
    }

    #[test]
    fn eval_rejects_points_outside_ball() {
        let t = OperatorTuple::zero(2, 1);
        assert!(eval(&t, &[c(0.8, 0.0), c(0.7, 0.0)]).is_err());
        assert!(eval(&t, &[c(0.1, 0.0)]).is_err());
    }

    #[test]
    fn noncommuting_is_rejected() {
        let a = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let b = a.adjoint();
        let t = OperatorTuple::with_default_tol(vec![a, b]).unwrap();
        assert!(matches!(CharFn::new(&t), Err(Error::NotCommuting { .. })));
    }

    #[test]
    fn degree_threshold_semantics() {
        let mut table = taylor(&OperatorTuple::zero(1, 1), 3).unwrap();
        assert_eq!(degree(&table, DEFAULT_ZERO_THRESH).degree, Degree::Exact(1));
        table.norms.insert(MultiIndex::new(vec![3]), 0.5);
        assert_eq!(degree(&table, DEFAULT_ZERO_THRESH).degree, Degree::ExceedsHorizon);
        for v in table.norms.values_mut() {
            *v = 0.0;
        }
        let rep = degree(&table, DEFAULT_ZERO_THRESH);
        assert_eq!(rep.degree, Degree::Exact(0));
        assert!(rep.witness.is_none());
    }

    #[test]
    fn gleason_zero_scalar_probe() {
        let rep = gleason_regular(&OperatorTuple::zero(2, 1), 0.1, 4, 7).unwrap();
        assert_eq!((rep.r0, rep.n0_dim), (0, 1));
        assert!(rep.regular_at_0);
        assert!(!rep.sampled_regular);
        assert!(rep.profile[1..].iter().all(|s| s.rank == 1 && s.intersection_dim == 1));
    }
}
