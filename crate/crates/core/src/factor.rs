//! Block upper-triangular row contractions and the factorization of their
//! characteristic functions.
//!
//! For `T = [[A, X], [0, B]]` the corner is `X = D_{A*} L D_B` for a unique
//! contraction `L: D_B → D_{A*}`, and
//! `Θ_T = τ_*^{-1} (Θ_B ⊕ I) J_L (Θ_A ⊕ I) τ` with explicit unitaries
//! `τ: D_T → D_A ⊕ D_L`, `τ_*: D_{T*} → D_{B*} ⊕ D_{L*}`. Every identity is
//! checked on symbols over the truncated Fock space, with the connectors
//! built from closed formulas rather than searched for.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::charfn::{degree_of, CharFn, Degree};
use crate::error::{Error, Result};
use crate::fock::{nc_charfn_with, FockTruncation, MultiAnalytic, NcCharFn};
use crate::opcore::{
    block_diag, c, hstack, identity, op_norm, polar_factor, psd_sqrt_with_range, residual_norm, unitary_check,
    vstack, zeros, CMatrix,
};
use crate::tuples::{defects, require_row_contraction, DefectPair, MultiIndex, OperatorTuple};

/// Coincidence residual accepted by [`factorize2`] and [`factorize3`].
pub const COINCIDENCE_TOL: f64 = 1e-8;

/// Contiguous groups of basis indices, after an optional change of basis.
#[derive(Clone, Debug)]
pub struct BlockSplit {
    /// Unitary `U`; the tuple is analysed as `U* T U`.
    pub change_of_basis: Option<CMatrix>,
    pub sizes: Vec<usize>,
}

impl BlockSplit {
    pub fn new(sizes: Vec<usize>) -> Self {
        BlockSplit { change_of_basis: None, sizes }
    }

    /// From interior boundaries, e.g. `[2, 5]` on dimension 7 gives sizes
    /// `[2, 3, 2]`.
    pub fn from_boundaries(dim: usize, boundaries: &[usize]) -> Result<Self> {
        let mut sizes = Vec::new();
        let mut last = 0;
        for &b in boundaries {
            if b < last || b > dim {
                return Err(Error::InvalidInput(format!("split boundaries {boundaries:?} are not increasing within 0..={dim}")));
            }
            sizes.push(b - last);
            last = b;
        }
        sizes.push(dim - last);
        Ok(BlockSplit::new(sizes))
    }

    pub fn with_change_of_basis(mut self, u: CMatrix) -> Self {
        self.change_of_basis = Some(u);
        self
    }

    fn apply(&self, t: &OperatorTuple) -> Result<OperatorTuple> {
        if self.sizes.iter().sum::<usize>() != t.dim() {
            return Err(Error::InvalidInput(format!("split sizes {:?} do not add up to {}", self.sizes, t.dim())));
        }
        match &self.change_of_basis {
            None => Ok(t.clone()),
            Some(u) => {
                let rep = unitary_check(u, t.tol());
                if u.shape() != (t.dim(), t.dim()) || !rep.unitary {
                    return Err(Error::InvalidInput("change of basis is not a unitary of the right size".into()));
                }
                Ok(t.conjugate(&u.adjoint()))
            }
        }
    }
}

/// Diagonal blocks, corner and the corner contraction of a 2-way split.
#[derive(Clone, Debug)]
pub struct BlockAnalysis {
    pub top: OperatorTuple,
    pub bottom: OperatorTuple,
    /// Row `[X_1 … X_n]`, size `d1 × n·d2`.
    pub corner: CMatrix,
    /// `L: D_B → D_{A*}` in the defect bases.
    pub contraction: CMatrix,
    pub top_defects: DefectPair,
    pub bottom_defects: DefectPair,
    pub lower_residual: f64,
    pub reconstruction_residual: f64,
}

fn sub_tuple(t: &OperatorTuple, start: usize, len: usize) -> Result<OperatorTuple> {
    let mats = t.mats().iter().map(|m| m.view((start, start), (len, len)).into_owned()).collect();
    OperatorTuple::new(mats, t.tol())
}

/// Splits `T` after the first `d1` basis vectors and recovers `L` from
/// `X = D_{A*} L D_B` by solving on the defect ranges.
pub fn block_analyze(t: &OperatorTuple, d1: usize) -> Result<BlockAnalysis> {
    let d = t.dim();
    if d1 > d {
        return Err(Error::InvalidInput(format!("split point {d1} beyond dimension {d}")));
    }
    let d2 = d - d1;
    let tol = t.tol();
    let lower = t.mats().iter().map(|m| op_norm(&m.view((d1, 0), (d2, d1)).into_owned())).fold(0.0, f64::max);
    if lower > tol {
        return Err(Error::NotUpperTriangular { residual: lower });
    }
    let top = sub_tuple(t, 0, d1)?;
    let bottom = sub_tuple(t, d1, d2)?;
    let blocks: Vec<CMatrix> = t.mats().iter().map(|m| m.view((0, d1), (d1, d2)).into_owned()).collect();
    let refs: Vec<&CMatrix> = blocks.iter().collect();
    let corner = if d1 == 0 { zeros(0, t.n() * d2) } else { hstack(&refs) };

    let da = defects(&top)?;
    let db = defects(&bottom)?;
    let bas = da.space_tstar.basis();
    let bb = db.space_t.basis();
    let g = bas.adjoint() * &da.d_tstar * bas;
    let h = bb.adjoint() * &db.d_t * bb;
    let rhs = bas.adjoint() * &corner * bb;
    let contraction = if rhs.nrows() == 0 || rhs.ncols() == 0 {
        zeros(rhs.nrows(), rhs.ncols())
    } else {
        let gi = g.clone().try_inverse().ok_or(Error::ReconstructionFailed { residual: f64::INFINITY })?;
        let hi = h.clone().try_inverse().ok_or(Error::ReconstructionFailed { residual: f64::INFINITY })?;
        gi * rhs * hi
    };
    let rebuilt = &da.d_tstar * bas * &contraction * bb.adjoint() * &db.d_t;
    let reconstruction_residual = residual_norm(&(&rebuilt - &corner));
    if reconstruction_residual > tol * op_norm(&corner).max(1.0) {
        return Err(Error::ReconstructionFailed { residual: reconstruction_residual });
    }
    let norm = op_norm(&contraction);
    if norm > 1.0 + tol {
        return Err(Error::NotContraction { norm });
    }
    Ok(BlockAnalysis {
        top,
        bottom,
        corner,
        contraction,
        top_defects: da,
        bottom_defects: db,
        lower_residual: lower,
        reconstruction_residual,
    })
}

/// Julia–Halmos matrix of a contraction `L: ℂ^q → ℂ^p`.
#[derive(Clone, Debug)]
pub struct JuliaHalmos {
    /// `[[L*, D_L], [D_{L*}, −L]]` on `ℂ^p ⊕ ℂ^q → ℂ^q ⊕ ℂ^p`.
    pub full: CMatrix,
    /// Restriction `ℂ^p ⊕ D_L → ℂ^q ⊕ D_{L*}` in the defect bases.
    pub restricted: CMatrix,
    /// Orthonormal basis of the range of `D_L` (in `ℂ^q`).
    pub defect_basis: CMatrix,
    /// Orthonormal basis of the range of `D_{L*}` (in `ℂ^p`).
    pub adjoint_defect_basis: CMatrix,
    pub unitarity_residual: f64,
}

pub fn julia_halmos(l: &CMatrix, tol: f64) -> Result<JuliaHalmos> {
    let (p, q) = l.shape();
    let norm = op_norm(l);
    if norm > 1.0 + tol {
        return Err(Error::NotContraction { norm });
    }
    let (dl, el) = psd_sqrt_with_range(&(identity(q) - l.adjoint() * l), tol)?;
    let (dls, els) = psd_sqrt_with_range(&(identity(p) - l * l.adjoint()), tol)?;
    let full = vstack(&[&hstack(&[&l.adjoint(), &dl]), &hstack(&[&dls, &(-l)])]);
    let (el, els) = (el.basis().clone(), els.basis().clone());
    let top = hstack(&[&l.adjoint(), &(&dl * &el)]);
    let bottom = hstack(&[&(els.adjoint() * &dls), &(-(els.adjoint() * l * &el))]);
    let restricted = vstack(&[&top, &bottom]);
    let rep = unitary_check(&restricted, tol);
    Ok(JuliaHalmos {
        full,
        unitarity_residual: rep.isometry_residual.max(rep.coisometry_residual),
        restricted,
        defect_basis: el,
        adjoint_defect_basis: els,
    })
}

/// A constant unitary used in a factorization.
#[derive(Clone, Debug)]
pub struct Connector {
    pub name: String,
    pub matrix: CMatrix,
    pub unitarity_residual: f64,
    /// `‖Z − τ B* D‖` for connectors obtained as polar factors.
    pub consistency_residual: f64,
}

impl Connector {
    fn new(name: &str, matrix: CMatrix, consistency_residual: f64) -> Self {
        let rep = unitary_check(&matrix, f64::INFINITY);
        Connector {
            name: name.to_string(),
            unitarity_residual: rep.isometry_residual.max(rep.coisometry_residual),
            matrix,
            consistency_residual,
        }
    }
}

/// Permutation `(H1⊕H2)^n → H1^n ⊕ H2^n`.
fn interleave_permutation(n: usize, d1: usize, d2: usize) -> CMatrix {
    let d = d1 + d2;
    let mut p = zeros(n * d, n * d);
    for i in 0..n {
        for k in 0..d {
            let target = if k < d1 { i * d1 + k } else { n * d1 + i * d2 + (k - d1) };
            p[(target, i * d + k)] = c(1.0, 0.0);
        }
    }
    p
}

/// `τ: D_T → D_A ⊕ D_L` and `τ_*: D_{T*} → D_{B*} ⊕ D_{L*}` for a split
/// tuple, in the bases of `whole` (the defects of `T`), of the analysis and
/// of the Julia–Halmos matrix.
fn two_block_connectors(
    t: &OperatorTuple,
    whole: &DefectPair,
    an: &BlockAnalysis,
    jh: &JuliaHalmos,
) -> (Connector, Connector) {
    let n = t.n();
    let (d1, d2) = (an.top.dim(), an.bottom.dim());
    let (da, db) = (&an.top_defects, &an.bottom_defects);
    let l = &an.contraction;
    let ba = da.space_t.basis();
    let bas = da.space_tstar.basis();
    let bb = db.space_t.basis();
    let bbs = db.space_tstar.basis();
    let (el, els) = (&jh.defect_basis, &jh.adjoint_defect_basis);
    let q = l.ncols();
    let p = l.nrows();
    let dl = crate::opcore::psd_sqrt(&(identity(q) - l.adjoint() * l), t.tol()).expect("checked contraction");
    let dls = crate::opcore::psd_sqrt(&(identity(p) - l * l.adjoint()), t.tol()).expect("checked contraction");

    // τ D_T = [[D_A, −A* L D_B], [0, D_L D_B]] Π.
    let to_db = bb.adjoint() * &db.d_t;
    let z11 = ba.adjoint() * &da.d_t;
    let z12 = -(ba.adjoint() * an.top.row().adjoint() * bas * l * &to_db);
    let z21 = zeros(el.ncols(), n * d1);
    let z22 = el.adjoint() * &dl * &to_db;
    let z = vstack(&[&hstack(&[&z11, &z12]), &hstack(&[&z21, &z22])]) * interleave_permutation(n, d1, d2);
    let bt = whole.space_t.basis();
    let (tau, _) = polar_factor(&(&z * bt), t.tol());
    let tau_cons = residual_norm(&(&z - &tau * bt.adjoint() * &whole.d_t));

    // τ_* D_{T*} = [[−B L* D_{A*}, D_{B*}], [D_{L*} D_{A*}, 0]].
    let from_das = bas.adjoint() * &da.d_tstar;
    let y11 = -(bbs.adjoint() * an.bottom.row() * bb * l.adjoint() * &from_das);
    let y12 = bbs.adjoint() * &db.d_tstar;
    let y21 = els.adjoint() * &dls * &from_das;
    let y22 = zeros(els.ncols(), d2);
    let zs = vstack(&[&hstack(&[&y11, &y12]), &hstack(&[&y21, &y22])]);
    let bts = whole.space_tstar.basis();
    let (tau_s, _) = polar_factor(&(&zs * bts), t.tol());
    let taus_cons = residual_norm(&(&zs - &tau_s * bts.adjoint() * &whole.d_tstar));
    (Connector::new("tau", tau, tau_cons), Connector::new("tau_star", tau_s, taus_cons))
}

/// The outcome of a factorization on `Γ_{≤K}`.
#[derive(Clone, Debug)]
pub struct FactorizationCertificate {
    pub order: usize,
    /// Right-to-left factors of the product.
    pub factors: Vec<(String, MultiAnalytic)>,
    pub connectors: Vec<Connector>,
    /// Names of the connectors `(W, W_*)` realizing the coincidence
    /// `(I⊗W_*)Θ_T = M (I⊗W)`.
    pub coincidence_pair: (String, String),
    /// `Θ_T` in its defect bases.
    pub theta: MultiAnalytic,
    /// The product with the outer connectors undone.
    pub product: MultiAnalytic,
    /// Largest coefficient mismatch over words of length `≤ K − 1`.
    pub residual: f64,
    /// The same, band by band.
    pub band_residuals: Vec<f64>,
    /// For commuting tuples: the identity after compression to the
    /// symmetric subspace, checked against the commutative coefficients.
    pub compressed_residual: Option<f64>,
    /// Dimensions of the auxiliary spaces `E`, `E_1`, `E_2` (or `D_L`,
    /// `D_{L*}` for two blocks).
    pub aux_dims: BTreeMap<String, usize>,
    pub notes: Vec<String>,
}

impl FactorizationCertificate {
    pub fn max_connector_residual(&self) -> f64 {
        self.connectors.iter().map(|c| c.unitarity_residual).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> CertificateSummary {
        CertificateSummary {
            order: self.order,
            residual: self.residual,
            band_residuals: self.band_residuals.clone(),
            compressed_residual: self.compressed_residual,
            connectors: self
                .connectors
                .iter()
                .map(|c| ConnectorSummary {
                    name: c.name.clone(),
                    rows: c.matrix.nrows(),
                    cols: c.matrix.ncols(),
                    unitarity_residual: c.unitarity_residual,
                    consistency_residual: c.consistency_residual,
                })
                .collect(),
            factors: self.factors.iter().map(|(n, m)| (n.clone(), m.shape())).collect(),
            coincidence_pair: self.coincidence_pair.clone(),
            aux_dims: self.aux_dims.clone(),
            notes: self.notes.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConnectorSummary {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub unitarity_residual: f64,
    pub consistency_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateSummary {
    pub order: usize,
    pub residual: f64,
    pub band_residuals: Vec<f64>,
    pub compressed_residual: Option<f64>,
    pub connectors: Vec<ConnectorSummary>,
    pub factors: Vec<(String, (usize, usize))>,
    pub coincidence_pair: (String, String),
    pub aux_dims: BTreeMap<String, usize>,
    pub notes: Vec<String>,
}

fn band_residuals(a: &MultiAnalytic, b: &MultiAnalytic) -> Vec<f64> {
    let f = a.fock();
    (0..f.order())
        .map(|k| {
            let off = f.band_offset(k);
            (off..off + f.band_len(k))
                .map(|i| op_norm(&(&a.symbol_coeffs()[i] - &b.symbol_coeffs()[i])))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// `Θ ⊕ I_k`.
fn pad(theta: &MultiAnalytic, k: usize) -> Result<MultiAnalytic> {
    theta.direct_sum(&MultiAnalytic::identity(*theta.fock(), k))
}

fn constant(f: FockTruncation, m: &CMatrix) -> MultiAnalytic {
    MultiAnalytic::constant(f, m.clone())
}

/// Multiplies right-to-left.
fn product(factors: &[(String, MultiAnalytic)]) -> Result<MultiAnalytic> {
    let mut it = factors.iter();
    let mut acc = it.next().expect("at least one factor").1.clone();
    for (_, f) in it {
        acc = f.compose(&acc)?;
    }
    Ok(acc)
}

/// Power-series product `Σ_{β+γ=α} a_β b_γ` for `|α| < order`.
pub fn commutative_product(
    a: &BTreeMap<MultiIndex, CMatrix>,
    b: &BTreeMap<MultiIndex, CMatrix>,
    order: usize,
) -> BTreeMap<MultiIndex, CMatrix> {
    let mut out: BTreeMap<MultiIndex, CMatrix> = BTreeMap::new();
    for (beta, ab) in a {
        for (gam, bg) in b {
            let sum = MultiIndex::new(beta.exponents().iter().zip(gam.exponents()).map(|(x, y)| x + y).collect());
            if sum.total() >= order {
                continue;
            }
            let term = ab * bg;
            out.entry(sum).and_modify(|m| *m += &term).or_insert(term);
        }
    }
    out
}

/// Compares the abelianized factors, multiplied as power series, with the
/// commutative characteristic function of `t`.
fn compressed_identity(
    t: &OperatorTuple,
    factors: &[(String, MultiAnalytic)],
    order: usize,
) -> Result<Option<f64>> {
    if t.commutator_residual() > t.tol() {
        return Ok(None);
    }
    let mut acc = factors[0].1.abelianized();
    for (_, f) in &factors[1..] {
        acc = commutative_product(&f.abelianized(), &acc, order);
    }
    let cf = CharFn::new(t)?;
    let mut worst = 0.0f64;
    for alpha in MultiIndex::all_up_to(t.n(), order.saturating_sub(1)) {
        let expected = cf.coeff(&alpha)?;
        let got = acc.get(&alpha).cloned().unwrap_or_else(|| zeros(expected.nrows(), expected.ncols()));
        worst = worst.max(op_norm(&(got - expected)));
    }
    Ok(Some(worst))
}

fn finish(
    t: &OperatorTuple,
    theta: &NcCharFn,
    mut factors: Vec<(String, MultiAnalytic)>,
    outer: (&Connector, &Connector),
    connectors: Vec<Connector>,
    aux_dims: BTreeMap<String, usize>,
    notes: Vec<String>,
) -> Result<FactorizationCertificate> {
    let f = *theta.fock();
    let (w, ws) = outer;
    factors.insert(0, (w.name.clone(), constant(f, &w.matrix)));
    factors.push((format!("{}^-1", ws.name), constant(f, &ws.matrix.adjoint())));
    let prod = product(&factors)?;
    let band_residuals = band_residuals(theta.symbol(), &prod);
    let residual = band_residuals.iter().copied().fold(0.0, f64::max);
    let compressed_residual = compressed_identity(t, &factors, f.order())?;
    let cert = FactorizationCertificate {
        order: f.order(),
        factors,
        connectors,
        coincidence_pair: (w.name.clone(), ws.name.clone()),
        theta: theta.symbol().clone(),
        product: prod,
        residual,
        band_residuals,
        compressed_residual,
        aux_dims,
        notes,
    };
    let worst_connector = cert.max_connector_residual();
    if cert.residual > COINCIDENCE_TOL || worst_connector > COINCIDENCE_TOL {
        return Err(Error::ConnectorSearchFailed(format!(
            "coincidence residual {:.3e}, connector unitarity {:.3e}",
            cert.residual, worst_connector
        )));
    }
    Ok(cert)
}

/// `Θ_T = τ_*^{-1} (Θ_B ⊕ I) J_L (Θ_A ⊕ I) τ` for a 2-way split.
pub fn factorize2(t: &OperatorTuple, split: &BlockSplit, order: usize) -> Result<FactorizationCertificate> {
    if split.sizes.len() != 2 {
        return Err(Error::InvalidInput(format!("two-block factorization needs 2 groups, got {}", split.sizes.len())));
    }
    let t = split.apply(t)?;
    require_row_contraction(&t)?;
    let an = block_analyze(&t, split.sizes[0])?;
    let whole = defects(&t)?;
    let jh = julia_halmos(&an.contraction, t.tol())?;
    let (tau, tau_s) = two_block_connectors(&t, &whole, &an, &jh);
    let theta_t = nc_charfn_with(&t, whole, order)?;
    let theta_a = nc_charfn_with(&an.top, an.top_defects.clone(), order)?;
    let theta_b = nc_charfn_with(&an.bottom, an.bottom_defects.clone(), order)?;
    let f = *theta_t.fock();
    let (l_dim, ls_dim) = (jh.defect_basis.ncols(), jh.adjoint_defect_basis.ncols());
    let factors = vec![
        ("theta_a+I".to_string(), pad(theta_a.symbol(), l_dim)?),
        ("J_L".to_string(), constant(f, &jh.restricted)),
        ("theta_b+I".to_string(), pad(theta_b.symbol(), ls_dim)?),
    ];
    let jl = Connector::new("J_L", jh.restricted.clone(), 0.0);
    let connectors = vec![tau.clone(), tau_s.clone(), jl];
    let aux = BTreeMap::from([("D_L".to_string(), l_dim), ("D_L*".to_string(), ls_dim)]);
    finish(&t, &theta_t, factors, (&tau, &tau_s), connectors, aux, Vec::new())
}

/// Blocks and connectors of a 3-way split, shared by [`factorize3`] and
/// [`g_form`].
struct ThreeBlock {
    t: OperatorTuple,
    outer: BlockAnalysis,
    inner: BlockAnalysis,
    jx: JuliaHalmos,
    jy: JuliaHalmos,
    u: Connector,
    u_s: Connector,
    sigma: Connector,
    sigma_s: Connector,
    tau1: Connector,
    tau2: Connector,
    v: Connector,
    whole: DefectPair,
}

fn three_block(t: &OperatorTuple, split: &BlockSplit) -> Result<ThreeBlock> {
    if split.sizes.len() != 3 {
        return Err(Error::InvalidInput(format!("three-block factorization needs 3 groups, got {}", split.sizes.len())));
    }
    let t = split.apply(t)?;
    require_row_contraction(&t)?;
    let tol = t.tol();
    let outer = block_analyze(&t, split.sizes[0] + split.sizes[1])?;
    let inner = block_analyze(&outer.top, split.sizes[0])?;
    let whole = defects(&t)?;
    let jy = julia_halmos(&outer.contraction, tol)?;
    let jx = julia_halmos(&inner.contraction, tol)?;
    let (u, u_s) = two_block_connectors(&t, &whole, &outer, &jy);
    let (sigma, sigma_s) = two_block_connectors(&outer.top, &outer.top_defects, &inner, &jx);
    let ly = jy.defect_basis.ncols();
    let eye_ly = identity(ly);
    let tau1 = &jy.restricted * block_diag(&[&sigma_s.matrix.adjoint(), &eye_ly]);
    let tau2 = block_diag(&[&jx.restricted, &eye_ly]);
    let v = block_diag(&[&sigma.matrix, &eye_ly]) * &u.matrix;
    let rename = |c: Connector, name: &str| Connector { name: name.to_string(), ..c };
    Ok(ThreeBlock {
        tau1: Connector::new("tau_1", tau1, 0.0),
        tau2: Connector::new("tau_2", tau2, 0.0),
        v: Connector::new("v", v, u.consistency_residual),
        u: rename(u, "u"),
        u_s: rename(u_s, "u_star"),
        sigma: rename(sigma, "sigma"),
        sigma_s: rename(sigma_s, "sigma_star"),
        t,
        outer,
        inner,
        jx,
        jy,
        whole,
    })
}

impl ThreeBlock {
    fn aux_dims(&self) -> BTreeMap<String, usize> {
        let lx = self.jx.defect_basis.ncols();
        let lxs = self.jx.adjoint_defect_basis.ncols();
        let ly = self.jy.defect_basis.ncols();
        let lys = self.jy.adjoint_defect_basis.ncols();
        BTreeMap::from([
            ("E".to_string(), lxs + ly),
            ("E_1".to_string(), lys),
            ("E_2".to_string(), lx + ly),
            ("D_L_X".to_string(), lx),
            ("D_L_X*".to_string(), lxs),
            ("D_L_Y".to_string(), ly),
            ("D_L_Y*".to_string(), lys),
        ])
    }

    fn connectors(&self) -> Vec<Connector> {
        vec![
            self.u.clone(),
            self.u_s.clone(),
            self.sigma.clone(),
            self.sigma_s.clone(),
            self.tau1.clone(),
            self.tau2.clone(),
            self.v.clone(),
        ]
    }
}

/// `Θ_T = u_*^{-1} (Θ_C ⊕ I_{E_1}) τ_1 (Θ_N ⊕ I_E) τ_2 (Θ_S ⊕ I_{E_2}) v`
/// for `T` upper triangular over `H_1 ⊕ H_0 ⊕ H_{-1}`.
pub fn factorize3(t: &OperatorTuple, split: &BlockSplit, order: usize) -> Result<FactorizationCertificate> {
    let tb = three_block(t, split)?;
    let s = &tb.inner.top;
    let nn = &tb.inner.bottom;
    let cc = &tb.outer.bottom;
    let theta_t = nc_charfn_with(&tb.t, tb.whole.clone(), order)?;
    let theta_s = nc_charfn_with(s, tb.inner.top_defects.clone(), order)?;
    let theta_n = nc_charfn_with(nn, tb.inner.bottom_defects.clone(), order)?;
    let theta_c = nc_charfn_with(cc, tb.outer.bottom_defects.clone(), order)?;
    let f = *theta_t.fock();
    let dims = tb.aux_dims();
    let factors = vec![
        ("theta_s+I".to_string(), pad(theta_s.symbol(), dims["E_2"])?),
        ("tau_2".to_string(), constant(f, &tb.tau2.matrix)),
        ("theta_n+I".to_string(), pad(theta_n.symbol(), dims["E"])?),
        ("tau_1".to_string(), constant(f, &tb.tau1.matrix)),
        ("theta_c+I".to_string(), pad(theta_c.symbol(), dims["E_1"])?),
    ];
    finish(&tb.t, &theta_t, factors, (&tb.v, &tb.u_s), tb.connectors(), dims, Vec::new())
}

/// `Θ_T = G_1 (Θ_N ⊕ I_E) G_2` with `G_1` a coisometry and `G_2` an
/// isometry, when the top block has no defect and the bottom block is a
/// spherical coisometry.
#[derive(Clone, Debug)]
pub struct GForm {
    pub g1: CMatrix,
    pub g2: CMatrix,
    pub center: MultiAnalytic,
    pub certificate: FactorizationCertificate,
    pub g1_coisometry_residual: f64,
    pub g2_isometry_residual: f64,
    /// Dimension of the numerical initial space of `G_2`.
    pub g2_initial_dim: usize,
    pub residual: f64,
    pub center_degree: Option<Degree>,
}

pub fn g_form(t: &OperatorTuple, split: &BlockSplit, order: usize) -> Result<GForm> {
    let tb = three_block(t, split)?;
    let s = &tb.inner.top;
    let cc = &tb.outer.bottom;
    let rank_s = tb.inner.top_defects.rank_t();
    let rank_cs = tb.outer.bottom_defects.rank_tstar();
    if rank_s != 0 {
        return Err(Error::HypothesisUnmet(format!(
            "top block is not a row isometry: rank D_S = {rank_s} on a {}-dimensional block",
            s.dim()
        )));
    }
    if rank_cs != 0 {
        return Err(Error::HypothesisUnmet(format!(
            "bottom block is not a spherical coisometry: rank D_C* = {rank_cs} on a {}-dimensional block",
            cc.dim()
        )));
    }
    let certificate = factorize3(t, split, order)?;
    let dims = tb.aux_dims();
    let (e, e1, e2) = (dims["E"], dims["E_1"], dims["E_2"]);
    let r_c = tb.outer.bottom_defects.rank_t();
    let rs_s = tb.inner.top_defects.rank_tstar();
    // [0_C ⊕ I_{E_1}] and [0_S ⊕ I_{E_2}] are constant.
    let zero_c = hstack(&[&zeros(e1, r_c), &identity(e1)]);
    let zero_s = vstack(&[&zeros(rs_s, e2), &identity(e2)]);
    let g1 = tb.u_s.matrix.adjoint() * zero_c * &tb.tau1.matrix;
    let g2 = &tb.tau2.matrix * zero_s * &tb.v.matrix;
    let theta_n = nc_charfn_with(&tb.inner.bottom, tb.inner.bottom_defects.clone(), order)?;
    let center = pad(theta_n.symbol(), e)?;
    let f = *center.fock();
    let prod = constant(f, &g1).compose(&center)?.compose(&constant(f, &g2))?;
    let residual = certificate.theta.interior_distance(&prod)?;
    let g1_coisometry_residual = residual_norm(&(&g1 * g1.adjoint() - identity(g1.nrows())));
    let g2_isometry_residual = residual_norm(&(g2.adjoint() * &g2 - identity(g2.ncols())));
    let g2_initial_dim = crate::opcore::rank(&(g2.adjoint() * &g2), 0.5, 1.0);
    let nn = &tb.inner.bottom;
    let center_degree = if nn.commutator_residual() <= nn.tol() {
        Some(degree_of(nn, crate::charfn::default_horizon(nn))?.degree)
    } else {
        None
    };
    Ok(GForm {
        g1,
        g2,
        center,
        certificate,
        g1_coisometry_residual,
        g2_isometry_residual,
        g2_initial_dim,
        residual,
        center_degree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{generate, random_contraction, stack_blocks, BlockKind, FixtureSpec};
    use crate::fixtures::{gen_jordan, gen_nilpotent_poly, gen_random_noncommuting, gen_spherical_coiso};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> CMatrix {
        CMatrix::from_element(1, 1, c(v, 0.0))
    }

    #[test]
    fn zero_corner_gives_zero_contraction() {
        let a = gen_jordan(2).unwrap();
        let b = gen_jordan(1).unwrap();
        let l = zeros(defects(&a).unwrap().rank_tstar(), defects(&b).unwrap().rank_t());
        let t = stack_blocks(&a, &b, &l).unwrap();
        let an = block_analyze(&t, 2).unwrap();
        assert!(op_norm(&an.contraction) < 1e-15);
    }

    #[test]
    fn scalar_corner_recovered() {
        let t = OperatorTuple::with_default_tol(vec![CMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(0.6, 0.2), c(0.0, 0.0), c(0.0, 0.0)],
        )])
        .unwrap();
        let an = block_analyze(&t, 1).unwrap();
        let l = an.contraction[(0, 0)];
        let x = an.top_defects.space_tstar.basis()[(0, 0)] * l * an.bottom_defects.space_t.basis()[(0, 0)].conj();
        assert!((x - c(0.6, 0.2)).norm() < 1e-14);
    }

    #[test]
    fn lower_block_rejected() {
        let t = OperatorTuple::with_default_tol(vec![CMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0), c(0.0, 0.0)],
        )])
        .unwrap();
        assert!(matches!(block_analyze(&t, 1), Err(Error::NotUpperTriangular { .. })));
    }

    #[test]
    fn round_trip_recovers_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let a = gen_random_noncommuting(2, 3, &mut rng).unwrap();
            let b = gen_random_noncommuting(2, 2, &mut rng).unwrap();
            let (p, q) = (defects(&a).unwrap().rank_tstar(), defects(&b).unwrap().rank_t());
            let l = random_contraction(p, q, 0.9, &mut rng);
            let t = stack_blocks(&a, &b, &l).unwrap();
            let an = block_analyze(&t, 3).unwrap();
            assert!(op_norm(&(&an.contraction - &l)) < 1e-9);
        }
    }

    #[test]
    fn julia_halmos_examples() {
        let j = julia_halmos(&scalar(0.0), 1e-9).unwrap();
        assert!(op_norm(&(&j.restricted - CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]))) < 1e-15);
        let u = scalar(-1.0);
        let j = julia_halmos(&u, 1e-9).unwrap();
        assert_eq!(j.restricted.shape(), (1, 1));
        assert!(op_norm(&(&j.full - block_diag(&[&u.adjoint(), &(-&u)]))) < 1e-15);
        assert!(matches!(julia_halmos(&scalar(1.5), 1e-9), Err(Error::NotContraction { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn julia_halmos_is_unitary(seed in 0u64..100_000, p in 1usize..5, q in 1usize..5, s in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = random_contraction(p, q, s, &mut rng);
            let j = julia_halmos(&l, 1e-9).unwrap();
            let full = unitary_check(&j.full, 0.0);
            let bound = 10.0 * f64::EPSILON * (p + q) as f64;
            prop_assert!(full.isometry_residual.max(full.coisometry_residual) <= bound, "{full:?}");
            prop_assert!(j.unitarity_residual <= bound);
        }
    }

    #[test]
    fn two_block_noncommuting() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = gen_random_noncommuting(2, 2, &mut rng).unwrap();
        let b = gen_random_noncommuting(2, 2, &mut rng).unwrap();
        let (p, q) = (defects(&a).unwrap().rank_tstar(), defects(&b).unwrap().rank_t());
        let l = random_contraction(p, q, 0.7, &mut rng);
        let t = stack_blocks(&a, &b, &l).unwrap();
        let cert = factorize2(&t, &BlockSplit::new(vec![2, 2]), 3).unwrap();
        assert!(cert.residual < 1e-10, "{}", cert.residual);
        assert!(cert.max_connector_residual() < 1e-10);
        assert!(cert.compressed_residual.is_none());
        assert!(cert.connectors.iter().all(|c| c.consistency_residual < 1e-10));
    }

    #[test]
    fn scalar_zero_corner_swaps() {
        let t = OperatorTuple::zero(1, 2);
        let cert = factorize2(&t, &BlockSplit::new(vec![1, 1]), 3).unwrap();
        assert!(cert.residual < 1e-14);
        assert_eq!(cert.aux_dims["D_L"], 1);
    }

    /// One-variable oracle: multiply the commutative coefficient tables of
    /// the blocks as power series and compare with those of `T`.
    #[test]
    fn one_variable_matches_power_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = gen_random_noncommuting(1, 2, &mut rng).unwrap();
        let b = gen_random_noncommuting(1, 2, &mut rng).unwrap();
        let (p, q) = (defects(&a).unwrap().rank_tstar(), defects(&b).unwrap().rank_t());
        let l = random_contraction(p, q, 0.5, &mut rng);
        let t = stack_blocks(&a, &b, &l).unwrap();
        let order = 6;
        let cert = factorize2(&t, &BlockSplit::new(vec![2, 2]), order).unwrap();
        let table = |x: &OperatorTuple| -> BTreeMap<MultiIndex, CMatrix> {
            let cf = CharFn::new(x).unwrap();
            MultiIndex::all_up_to(1, order - 1).into_iter().map(|a| (a.clone(), cf.coeff(&a).unwrap())).collect()
        };
        let consts = |m: &CMatrix| BTreeMap::from([(MultiIndex::zero(1), m.clone())]);
        let tau = &cert.connectors[0].matrix;
        let tau_s = &cert.connectors[1].matrix;
        let jl = &cert.connectors[2].matrix;
        let pad_table = |tab: BTreeMap<MultiIndex, CMatrix>, k: usize| -> BTreeMap<MultiIndex, CMatrix> {
            tab.into_iter()
                .map(|(a, m)| {
                    let eye = if a.total() == 0 { identity(k) } else { zeros(k, k) };
                    (a, block_diag(&[&m, &eye]))
                })
                .collect()
        };
        let mut acc = consts(tau);
        acc = commutative_product(&pad_table(table(&an_top(&t)), cert.aux_dims["D_L"]), &acc, order);
        acc = commutative_product(&consts(jl), &acc, order);
        acc = commutative_product(&pad_table(table(&an_bottom(&t)), cert.aux_dims["D_L*"]), &acc, order);
        acc = commutative_product(&consts(&tau_s.adjoint()), &acc, order);
        let expected = table(&t);
        for (alpha, m) in expected {
            assert!(op_norm(&(&acc[&alpha] - m)) < 1e-10, "{alpha}");
        }
        assert!(cert.compressed_residual.unwrap() < 1e-10);
    }

    fn an_top(t: &OperatorTuple) -> OperatorTuple {
        block_analyze(t, 2).unwrap().top
    }

    fn an_bottom(t: &OperatorTuple) -> OperatorTuple {
        block_analyze(t, 2).unwrap().bottom
    }

    fn three_block_fixture(seed: u64) -> (OperatorTuple, BlockSplit) {
        let spec = FixtureSpec::BlockComposite {
            n: 2,
            blocks: vec![BlockKind::Nilpotent { m: 2 }, BlockKind::RandomCommuting { d: 2 }, BlockKind::Coisometry { d: 2 }],
            corner_scale: 0.8,
            commuting: true,
            seed,
        };
        let fx = generate(&spec).unwrap();
        (fx.tuple, BlockSplit::new(fx.block_sizes))
    }

    #[test]
    fn three_block_commuting() {
        let (t, split) = three_block_fixture(1);
        let cert = factorize3(&t, &split, 4).unwrap();
        assert!(cert.residual < 1e-10);
        assert!(cert.compressed_residual.unwrap() < 1e-10);
        assert!(cert.max_connector_residual() < 1e-10);
    }

    #[test]
    fn direct_sum_degenerates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = gen_nilpotent_poly(2, 2).unwrap();
        let b = gen_random_noncommuting(2, 2, &mut rng).unwrap();
        let cc = gen_spherical_coiso(2, 2, false, &mut rng).unwrap();
        let zero = |x: &OperatorTuple, y: &OperatorTuple| {
            zeros(defects(x).unwrap().rank_tstar(), defects(y).unwrap().rank_t())
        };
        let ab = stack_blocks(&a, &b, &zero(&a, &b)).unwrap();
        let t = stack_blocks(&ab, &cc, &zero(&ab, &cc)).unwrap();
        let cert = factorize3(&t, &BlockSplit::new(vec![3, 2, 2]), 3).unwrap();
        assert!(cert.residual < 1e-12);
    }

    #[test]
    fn residual_profile_is_stable_in_order() {
        let (t, split) = three_block_fixture(3);
        let profiles: Vec<Vec<f64>> =
            (2..=5).map(|k| factorize3(&t, &split, k).unwrap().band_residuals).collect();
        for pair in profiles.windows(2) {
            assert_eq!(pair[0][..], pair[1][..pair[0].len()]);
        }
    }

    #[test]
    fn g_form_nilpotent_over_coisometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let nn = gen_nilpotent_poly(2, 2).unwrap();
        let cc = gen_spherical_coiso(2, 2, true, &mut rng).unwrap();
        let l = zeros(defects(&nn).unwrap().rank_tstar(), defects(&cc).unwrap().rank_t());
        let t = stack_blocks(&nn, &cc, &l).unwrap();
        let g = g_form(&t, &BlockSplit::new(vec![0, 3, 2]), 4).unwrap();
        assert!(g.residual < 1e-12);
        assert!(g.g1_coisometry_residual < 1e-12 && g.g2_isometry_residual < 1e-12);
        assert_eq!(g.center_degree, Some(Degree::Exact(2)));
    }

    #[test]
    fn g_form_coisometry_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = gen_spherical_coiso(2, 3, true, &mut rng).unwrap();
        let g = g_form(&t, &BlockSplit::new(vec![0, 0, 3]), 3).unwrap();
        assert!(g.residual < 1e-12);
        assert!(g.certificate.theta.is_constant());
    }

    #[test]
    fn g_form_names_failed_hypothesis() {
        let t = gen_nilpotent_poly(2, 2).unwrap();
        match g_form(&t, &BlockSplit::new(vec![0, 1, 2]), 3) {
            Err(Error::HypothesisUnmet(msg)) => assert!(msg.contains("spherical coisometry")),
            other => panic!("{other:?}"),
        }
        match g_form(&t, &BlockSplit::new(vec![1, 2, 0]), 3) {
            Err(Error::HypothesisUnmet(msg)) => assert!(msg.contains("row isometry")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_boundaries() {
        assert_eq!(BlockSplit::from_boundaries(7, &[2, 5]).unwrap().sizes, vec![2, 3, 2]);
        assert!(BlockSplit::from_boundaries(4, &[3, 2]).is_err());
    }
}
