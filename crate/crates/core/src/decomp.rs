//! Canonical decomposition `H = M ⊕ H_nil ⊕ H_c` of a commuting row
//! contraction with polynomial characteristic function, the unitary onto a
//! truncated Drury–Arveson space, and the invariant `φ = (p, m, q)`.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::charfn::{default_horizon, degree_of, Degree};
use crate::error::{Error, Result};
use crate::opcore::{
    c, hstack, identity, op_norm, range_basis_scaled, residual_norm, zeros, CMatrix, Subspace,
};
use crate::tuples::{
    defects, gamma, require_commuting, DefectOrbit, DefectPair, MultiIndex, OperatorTuple, PowerTable,
};

/// `closed span{T^α D_{T*} h : |α| ≥ m}`.
pub fn span_m(t: &OperatorTuple, m: usize) -> Result<Subspace> {
    require_commuting(t)?;
    let dp = defects(t)?;
    Ok(DefectOrbit::new(t, &dp).span_from(m).0)
}

/// `span{T^α D_{T*} h : |α| = m}`.
pub fn span_n(t: &OperatorTuple, m: usize) -> Result<Subspace> {
    require_commuting(t)?;
    let dp = defects(t)?;
    Ok(DefectOrbit::new(t, &dp).band(m).clone())
}

/// `closed span{T^α D_{T*} h : α}`.
pub fn span_k(t: &OperatorTuple) -> Result<Subspace> {
    span_m(t, 0)
}

/// Orthonormal bases of the four subspaces, the compressed diagonal blocks
/// and the residuals of every identity checked on the way.
#[derive(Clone, Debug)]
pub struct CanonicalDecomposition {
    pub m_space: Subspace,
    pub n_space: Subspace,
    pub nil_space: Subspace,
    pub c_space: Subspace,
    /// Compression of the tuple to `M`.
    pub m_block: OperatorTuple,
    /// Compression to `H_nil`.
    pub nil_block: OperatorTuple,
    /// Compression to `H_c`.
    pub c_block: OperatorTuple,
    pub degree_used: usize,
    pub residuals: BTreeMap<String, f64>,
}

impl CanonicalDecomposition {
    /// `[B_M | B_nil | B_c]`.
    pub fn basis(&self) -> CMatrix {
        hstack(&[self.m_space.basis(), self.nil_space.basis(), self.c_space.basis()])
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.m_space.dim(), self.nil_space.dim(), self.c_space.dim()]
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.values().copied().fold(0.0, f64::max)
    }
}

/// Decomposition at the degree found by a scan up to `horizon`; refuses when
/// the scan cannot certify a degree.
pub fn canonical(t: &OperatorTuple, horizon: usize) -> Result<CanonicalDecomposition> {
    require_commuting(t)?;
    match degree_of(t, horizon)?.degree {
        Degree::Exact(m) => canonical_with_degree(t, m),
        Degree::ExceedsHorizon => Err(Error::DegreeUndetermined { horizon }),
    }
}

/// Decomposition for a caller-supplied `m`.
pub fn canonical_with_degree(t: &OperatorTuple, m: usize) -> Result<CanonicalDecomposition> {
    require_commuting(t)?;
    let dp = defects(t)?;
    let mut orbit = DefectOrbit::new(t, &dp);
    let m_space = orbit.span_from(m).0;
    let k_space = orbit.span_from(0).0;
    let n_space = orbit.band(m).clone();
    let nil_space = k_space.minus(&m_space)?;
    let c_space = k_space.complement();

    let m_block = t.compress(m_space.basis());
    let nil_block = t.compress(nil_space.basis());
    let c_block = t.compress(c_space.basis());

    let d = t.dim();
    let mut residuals = BTreeMap::new();
    let total = m_space.projector() + nil_space.projector() + c_space.projector();
    residuals.insert("orthogonal_decomposition".to_string(), op_norm(&(total - identity(d))));

    let q = hstack(&[m_space.basis(), nil_space.basis(), c_space.basis()]);
    let [a, b] = [m_space.dim(), m_space.dim() + nil_space.dim()];
    let mut lower = 0.0f64;
    for ti in t.mats() {
        let blocked = q.adjoint() * ti * &q;
        let rows = blocked.nrows();
        if rows > a {
            lower = lower.max(op_norm(&blocked.view((a, 0), (rows - a, a)).into_owned()));
        }
        if rows > b {
            lower = lower.max(op_norm(&blocked.view((b, a), (rows - b, b - a)).into_owned()));
        }
    }
    residuals.insert("upper_triangularity".to_string(), lower);
    residuals.insert("nilpotent_block".to_string(), nilpotency_residual(&nil_block, m));
    let coiso = if c_block.dim() == 0 { 0.0 } else { op_norm(&(c_block.row_gram() - identity(c_block.dim()))) };
    residuals.insert("coisometric_block".to_string(), coiso);
    residuals.insert("wandering_subspace_in_m".to_string(), m_space.leakage(n_space.basis()));

    let mut dec = CanonicalDecomposition {
        m_space,
        n_space,
        nil_space,
        c_space,
        m_block,
        nil_block,
        c_block,
        degree_used: m,
        residuals,
    };
    let pi = partial_isometry_identity(&dec);
    dec.residuals.insert("partial_isometry_identity".to_string(), pi.residual);
    dec.residuals.insert("wandering_subspace".to_string(), pi.wandering_residual);
    Ok(dec)
}

/// `max_{|α| = m} ‖N^α‖`; for `m = 0` this is `‖I‖`, nonzero unless the
/// block is trivial.
fn nilpotency_residual(block: &OperatorTuple, m: usize) -> f64 {
    if block.dim() == 0 {
        return 0.0;
    }
    let powers = PowerTable::forward_unflushed(block, m);
    MultiIndex::all_of_degree(block.n(), m).iter().map(|a| op_norm(powers.get(a))).fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct PartialIsometryCheck {
    /// `‖I_M − ΣM_iM_i* − P_N‖` in the basis of `M`.
    pub residual: f64,
    /// `‖P_N − (P_M − P_{ΣT_iM})‖`.
    pub wandering_residual: f64,
}

pub fn partial_isometry_identity(dec: &CanonicalDecomposition) -> PartialIsometryCheck {
    let bm = dec.m_space.basis();
    let r = bm.ncols();
    if r == 0 {
        return PartialIsometryCheck { residual: 0.0, wandering_residual: op_norm(&dec.n_space.projector()) };
    }
    let p_n = bm.adjoint() * dec.n_space.projector() * bm;
    let residual = op_norm(&(identity(r) - dec.m_block.row_gram() - p_n));
    // Images T_i M expressed in ambient coordinates: B_M M_i.
    let images: Vec<CMatrix> = dec.m_block.mats().iter().map(|mi| bm * mi).collect();
    let refs: Vec<&CMatrix> = images.iter().collect();
    let moved = range_basis_scaled(&hstack(&refs), dec.m_space.tol(), 1.0);
    let wandering = dec.n_space.projector() - (dec.m_space.projector() - moved.projector());
    PartialIsometryCheck { residual, wandering_residual: op_norm(&wandering) }
}

/// Matrix of `f ↦ Σ_α γ_α (P_N M^{*α} f) z^α` into the truncated
/// Drury–Arveson space, with the checks that certify it as a unitary model.
#[derive(Clone, Debug)]
pub struct DaShiftCertificate {
    /// Rows grouped by multi-index (all `|α| ≤ degree_used`, degree by
    /// degree), each group in an orthonormal basis of `N`.
    pub matrix: CMatrix,
    pub wandering_dim: usize,
    /// Highest degree reached by the image.
    pub top_degree: usize,
    pub degree_used: usize,
    pub isometry_residual: f64,
    pub coisometry_residual: f64,
    pub intertwining_residual: f64,
}

/// Builds the model map for a block whose defect `I − ΣM_iM_i*` is a
/// projection. The codomain is truncated at `min(trunc_degree, top)` where
/// `top` is the highest degree the image reaches; the map is certified only
/// when it is unitary onto that truncation and intertwines the block with the
/// truncated coordinate multiplications.
pub fn da_shift_unitary(block: &OperatorTuple, trunc_degree: Option<usize>) -> Result<DaShiftCertificate> {
    require_commuting(block)?;
    let d = block.dim();
    let tol = block.tol();
    let n = block.n();
    let trunc = trunc_degree.unwrap_or(d);
    if d == 0 {
        return Ok(DaShiftCertificate {
            matrix: zeros(0, 0),
            wandering_dim: 0,
            top_degree: 0,
            degree_used: 0,
            isometry_residual: 0.0,
            coisometry_residual: 0.0,
            intertwining_residual: 0.0,
        });
    }
    let p = identity(d) - block.row_gram();
    let idempotency = op_norm(&(&p * &p - &p));
    if idempotency > tol {
        return Err(Error::HypothesisUnmet(format!(
            "I − ΣM_iM_i* is not a projection (residual {idempotency:.3e})"
        )));
    }
    let wandering = range_basis_scaled(&p, tol, 1.0);
    let bn = wandering.basis();
    let r = bn.ncols();
    let powers = PowerTable::adjoint(block, trunc);
    let mut top = 0;
    for alpha in MultiIndex::all_up_to(n, trunc) {
        if op_norm(&(bn.adjoint() * powers.get(&alpha))) > tol {
            top = top.max(alpha.total());
        }
    }
    let k = top.min(trunc);
    let indices = MultiIndex::all_up_to(n, k);
    let pos: std::collections::HashMap<&MultiIndex, usize> = indices.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let weights: Vec<f64> = indices.iter().map(|a| gamma(a).map(|g| g as f64)).collect::<Result<_>>()?;
    let mut u = zeros(indices.len() * r, d);
    for (i, alpha) in indices.iter().enumerate() {
        let rows = bn.adjoint() * powers.get(alpha) * c(weights[i].sqrt(), 0.0);
        u.view_mut((i * r, 0), (r, d)).copy_from(&rows);
    }
    let iso = residual_norm(&(u.adjoint() * &u - identity(d)));
    let coiso = residual_norm(&(&u * u.adjoint() - identity(u.nrows())));
    let mut inter = 0.0f64;
    for (j, mj) in block.mats().iter().enumerate() {
        let lhs = &u * mj;
        let mut rhs = zeros(u.nrows(), d);
        for (i, alpha) in indices.iter().enumerate() {
            if alpha.total() + 1 > k {
                continue;
            }
            let target = alpha.plus_unit(j);
            let w = (weights[i] / weights[pos[&target]]).sqrt();
            let src = u.view((i * r, 0), (r, d)).into_owned() * c(w, 0.0);
            rhs.view_mut((pos[&target] * r, 0), (r, d)).copy_from(&src);
        }
        inter = inter.max(residual_norm(&(lhs - rhs)));
    }
    let cert = DaShiftCertificate {
        matrix: u,
        wandering_dim: r,
        top_degree: top,
        degree_used: k,
        isometry_residual: iso,
        coisometry_residual: coiso,
        intertwining_residual: inter,
    };
    if iso > tol || coiso > tol || inter > tol {
        return Err(Error::NotRegular(format!(
            "model map is not unitary onto the truncated shift space (isometry {iso:.3e}, coisometry {coiso:.3e}, intertwining {inter:.3e})"
        )));
    }
    Ok(cert)
}

/// `φ(T) = (p, m, q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PhiInvariant {
    pub p: usize,
    pub m: Degree,
    pub q: usize,
}

impl fmt::Display for PhiInvariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.p, self.m, self.q)
    }
}

/// With a certified degree `m`, `p = dim D_m − dim D_{m+1}`; when the scan
/// reaches the horizon, `m` carries the marker and `p = rank D_{T*}`.
pub fn phi(t: &OperatorTuple, horizon: usize) -> Result<PhiInvariant> {
    require_commuting(t)?;
    let report = degree_of(t, horizon)?;
    let dp = defects(t)?;
    phi_with(t, &dp, report.degree)
}

pub(crate) fn phi_with(t: &OperatorTuple, dp: &DefectPair, degree: Degree) -> Result<PhiInvariant> {
    let mut orbit = DefectOrbit::new(t, dp);
    let q = orbit.span_from(0).0.complement().dim();
    let p = match degree {
        Degree::Exact(m) => orbit.span_from(m).0.dim() - orbit.span_from(m + 1).0.dim(),
        Degree::ExceedsHorizon => dp.rank_tstar(),
    };
    Ok(PhiInvariant { p, m: degree, q })
}

/// `φ` at the default horizon.
pub fn phi_default(t: &OperatorTuple) -> Result<PhiInvariant> {
    phi(t, default_horizon(t))
}

/// Largest `‖T_i*(T^αD_{T*}) − (α_i/|α|) T^{α−e_i}D_{T*}‖` over
/// `m+1 ≤ |α| ≤ m+extra`.
pub fn lemma_adjoint_action_residual(t: &OperatorTuple, m: usize, extra: usize) -> Result<f64> {
    require_commuting(t)?;
    let dp = defects(t)?;
    let powers = PowerTable::forward_unflushed(t, m + extra);
    let mut worst = 0.0f64;
    for k in m + 1..=m + extra {
        for alpha in MultiIndex::all_of_degree(t.n(), k) {
            let v = powers.get(&alpha) * &dp.d_tstar;
            for i in 0..t.n() {
                let lhs = t.get(i).adjoint() * &v;
                let rhs = match alpha.minus_unit(i) {
                    Some(b) => powers.get(&b) * &dp.d_tstar * c(alpha.get(i) as f64 / k as f64, 0.0),
                    None => zeros(t.dim(), t.dim()),
                };
                worst = worst.max(op_norm(&(lhs - rhs)));
            }
        }
    }
    Ok(worst)
}

/// Largest `‖(T^αD_{T*})*(T^βD_{T*})‖` over distinct `α, β` with
/// `m ≤ |α|, |β| ≤ m+extra`.
pub fn lemma_orthogonality_residual(t: &OperatorTuple, m: usize, extra: usize) -> Result<f64> {
    require_commuting(t)?;
    let dp = defects(t)?;
    let powers = PowerTable::forward_unflushed(t, m + extra);
    let vecs: Vec<CMatrix> = (m..=m + extra)
        .flat_map(|k| MultiIndex::all_of_degree(t.n(), k))
        .map(|a| powers.get(&a) * &dp.d_tstar)
        .collect();
    let mut worst = 0.0f64;
    for i in 0..vecs.len() {
        for j in i + 1..vecs.len() {
            worst = worst.max(op_norm(&(vecs[i].adjoint() * &vecs[j])));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{gen_nilpotent_poly, gen_section7, gen_spherical_coiso};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coisometry_decomposes_trivially() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = gen_spherical_coiso(2, 3, true, &mut rng).unwrap();
        let dec = canonical(&t, 12).unwrap();
        assert_eq!(dec.dims(), [0, 0, 3]);
        assert_eq!(dec.degree_used, 0);
        assert!(dec.max_residual() < 1e-10);
        assert_eq!(phi(&t, 12).unwrap(), PhiInvariant { p: 0, m: Degree::Exact(0), q: 3 });
        assert_eq!(span_m(&t, 0).unwrap().dim(), 0);
    }

    #[test]
    fn scalar_zero_spans() {
        let t = OperatorTuple::zero(2, 1);
        assert_eq!(span_m(&t, 1).unwrap().dim(), 0);
        assert_eq!(span_n(&t, 1).unwrap().dim(), 0);
        assert_eq!(span_k(&t).unwrap().dim(), 1);
        assert_eq!(phi(&t, 4).unwrap(), PhiInvariant { p: 0, m: Degree::Exact(1), q: 0 });
    }

    #[test]
    fn nilpotent_is_all_nil() {
        let t = gen_nilpotent_poly(2, 3).unwrap();
        let dec = canonical(&t, 24).unwrap();
        assert_eq!(dec.degree_used, 3);
        assert_eq!(dec.dims(), [0, 6, 0]);
        assert!(dec.max_residual() < 1e-10, "{:?}", dec.residuals);
    }

    #[test]
    fn section7_with_zero_degree() {
        let t = gen_section7(5).unwrap();
        let dec = canonical_with_degree(&t, 0).unwrap();
        assert_eq!(dec.dims(), [t.dim(), 0, 0]);
        assert_eq!(dec.n_space.dim(), 3);
        let pi = partial_isometry_identity(&dec);
        assert!(pi.residual < 1e-10 && pi.wandering_residual < 1e-10);
        assert!(matches!(canonical(&t, 3), Err(Error::DegreeUndetermined { horizon: 3 })));
    }

    #[test]
    fn truncated_shift_has_unitary_model() {
        let t = gen_nilpotent_poly(2, 4).unwrap();
        let cert = da_shift_unitary(&t, None).unwrap();
        assert_eq!(cert.wandering_dim, 1);
        assert_eq!(cert.degree_used, 3);
        assert!(cert.isometry_residual < 1e-9 && cert.coisometry_residual < 1e-9);
        assert!(cert.intertwining_residual < 1e-9);
    }

    #[test]
    fn section7_model_refuses() {
        let t = gen_section7(6).unwrap();
        assert!(matches!(da_shift_unitary(&t, None), Err(Error::NotRegular(_))));
    }

    #[test]
    fn empty_block_model_is_vacuous() {
        let t = OperatorTuple::zero(2, 0);
        let cert = da_shift_unitary(&t, None).unwrap();
        assert_eq!(cert.matrix.nrows(), 0);
    }

    #[test]
    fn lemma_residuals_small_on_shift() {
        let t = gen_nilpotent_poly(3, 2).unwrap();
        assert!(lemma_adjoint_action_residual(&t, 2, 3).unwrap() < 1e-12);
        assert!(lemma_orthogonality_residual(&t, 2, 3).unwrap() < 1e-12);
    }
}
