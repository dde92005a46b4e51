//! Dense complex-matrix primitives and subspace arithmetic.
//!
//! Everything downstream works with [`CMatrix`] values and column-orthonormal
//! [`Subspace`] bases. Ranks are decided against a relative singular-value
//! threshold; helpers that know their operands are contractions pass an
//! absolute floor of one so that noise on a near-zero operator is not promoted
//! to rank.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Default rank and residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Matrices whose larger side exceeds this are measured in Frobenius norm
/// by [`residual_norm`] instead of the spectral norm.
const SPECTRAL_NORM_LIMIT: usize = 256;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn zeros(r: usize, c: usize) -> CMatrix {
    CMatrix::zeros(r, c)
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Singular values in descending order; empty for a matrix with a zero side.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    match to_faer(a).singular_values() {
        Ok(s) => s,
        Err(_) => svd(a).s,
    }
}

fn to_faer(a: &CMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| *m.get(i, j))
}

/// Thin singular value decomposition `a = u·diag(s)·v*`, `s` descending.
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

/// Thin SVD. The faer bidiagonal solver is used because nalgebra's complex
/// SVD can silently return an inaccurate factorization on rank-deficient
/// inputs; nalgebra is kept only as a fallback if faer reports
/// nonconvergence.
pub fn svd(a: &CMatrix) -> Svd {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Svd { u: zeros(m, 0), s: Vec::new(), v: zeros(n, 0) };
    }
    if let Ok(f) = to_faer(a).thin_svd() {
        let s = (0..k).map(|i| f.S().column_vector().get(i).re).collect();
        return Svd { u: from_faer(f.U()), s, v: from_faer(f.V()) };
    }
    let f = a.clone().svd(true, true);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| f.singular_values[j].total_cmp(&f.singular_values[i]));
    let u = f.u.expect("u requested");
    let v = f.v_t.expect("v requested").adjoint();
    Svd {
        u: CMatrix::from_fn(m, k, |i, j| u[(i, order[j])]),
        s: order.iter().map(|&i| f.singular_values[i]).collect(),
        v: CMatrix::from_fn(n, k, |i, j| v[(i, order[j])]),
    }
}

/// Spectral norm.
pub fn op_norm(a: &CMatrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

pub fn fro_norm(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Spectral norm for moderate sizes, Frobenius norm (an upper bound) above.
pub fn residual_norm(a: &CMatrix) -> f64 {
    if a.nrows().max(a.ncols()) > SPECTRAL_NORM_LIMIT {
        fro_norm(a)
    } else {
        op_norm(a)
    }
}

/// Eigen-decomposition of the Hermitian part of `h`, eigenvalues descending.
pub fn hermitian_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let d = h.nrows();
    if d == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    let herm = (h + h.adjoint()) * c(0.5, 0.0);
    match to_faer(&herm).self_adjoint_eigen(faer::Side::Lower) {
        Ok(eig) => {
            // faer sorts ascending.
            let vals = (0..d).rev().map(|i| eig.S().column_vector().get(i).re).collect();
            let u = eig.U();
            (vals, CMatrix::from_fn(d, d, |i, j| *u.get(i, d - 1 - j)))
        }
        Err(_) => {
            let eig = nalgebra::SymmetricEigen::new(herm);
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
            let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            (vals, CMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]))
        }
    }
}

/// Largest eigenvalue of the Hermitian part; `-inf` on the empty matrix.
pub fn lambda_max(h: &CMatrix) -> f64 {
    hermitian_eigen(h).0.first().copied().unwrap_or(f64::NEG_INFINITY)
}

fn psd_threshold(p: &CMatrix, tol: f64) -> Result<(Vec<f64>, CMatrix, f64)> {
    let asym = fro_norm(&(p - p.adjoint()));
    let (vals, vecs) = hermitian_eigen(p);
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if asym > tol * scale {
        return Err(Error::NotHermitian { residual: asym });
    }
    if let Some(&min) = vals.last() {
        if min < -tol * scale {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
    }
    Ok((vals, vecs, tol * scale))
}

/// Hermitian positive square root.
///
/// Eigenvalues within `tol·max(1, ‖P‖)` of zero are set to zero before the
/// root is taken, so `‖R² − P‖ ≤ tol·max(1, ‖P‖)` up to rounding.
pub fn psd_sqrt(p: &CMatrix, tol: f64) -> Result<CMatrix> {
    psd_sqrt_with_range(p, tol).map(|(r, _)| r)
}

/// [`psd_sqrt`] together with an orthonormal basis of the range of the root,
/// read off from the same eigenvectors.
pub fn psd_sqrt_with_range(p: &CMatrix, tol: f64) -> Result<(CMatrix, Subspace)> {
    let d = p.nrows();
    if p.ncols() != d {
        return Err(Error::InvalidInput(format!("psd_sqrt of a {}x{} matrix", d, p.ncols())));
    }
    if d == 0 {
        return Ok((zeros(0, 0), Subspace::zero(0, tol)));
    }
    let (vals, vecs, thr) = psd_threshold(p, tol)?;
    let roots: Vec<f64> = vals.iter().map(|&v| if v > thr { v.sqrt() } else { 0.0 }).collect();
    let mut scaled = vecs.clone();
    for (k, r) in roots.iter().enumerate() {
        scaled.column_mut(k).scale_mut(*r);
    }
    let root = &scaled * vecs.adjoint();
    let root = (&root + root.adjoint()) * c(0.5, 0.0);
    let rank = roots.iter().filter(|&&r| r > 0.0).count();
    let basis = vecs.columns(0, rank).into_owned();
    Ok((root, Subspace::from_orthonormal(basis, tol)))
}

/// Orthonormal basis of the column space; rank counts singular values above
/// `tol` times the largest one.
pub fn range_basis(a: &CMatrix, tol: f64) -> Subspace {
    range_basis_scaled(a, tol, 0.0)
}

/// Like [`range_basis`] with threshold `tol·max(σ_max, floor)`.
pub fn range_basis_scaled(a: &CMatrix, tol: f64, floor: f64) -> Subspace {
    let m = a.nrows();
    if m == 0 || a.ncols() == 0 {
        return Subspace::zero(m, tol);
    }
    let f = svd(a);
    let thr = tol * f.s[0].max(floor);
    let r = f.s.iter().take_while(|&&v| v > thr && v > 0.0).count();
    Subspace::from_orthonormal(f.u.columns(0, r).into_owned(), tol)
}

/// Numerical rank with threshold `tol·max(σ_max, floor)`.
pub fn rank(a: &CMatrix, tol: f64, floor: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        None => 0,
        Some(&smax) => {
            let thr = tol * smax.max(floor);
            s.iter().filter(|&&v| v > thr && v > 0.0).count()
        }
    }
}

/// A subspace of `ℂ^ambient` carried by a column-orthonormal basis.
#[derive(Clone, Debug)]
pub struct Subspace {
    ambient: usize,
    basis: CMatrix,
    tol: f64,
}

impl Subspace {
    pub fn zero(ambient: usize, tol: f64) -> Self {
        Subspace { ambient, basis: zeros(ambient, 0), tol }
    }

    pub fn full(ambient: usize, tol: f64) -> Self {
        Subspace { ambient, basis: identity(ambient), tol }
    }

    /// Wraps a basis the caller guarantees to be column-orthonormal.
    pub fn from_orthonormal(basis: CMatrix, tol: f64) -> Self {
        Subspace { ambient: basis.nrows(), basis, tol }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn projector(&self) -> CMatrix {
        &self.basis * self.basis.adjoint()
    }

    /// `‖B*B − I‖`.
    pub fn orthonormality_residual(&self) -> f64 {
        op_norm(&(self.basis.adjoint() * &self.basis - identity(self.dim())))
    }

    fn check(&self, other: &Subspace) -> Result<()> {
        if self.ambient != other.ambient {
            return Err(Error::AmbientMismatch { left: self.ambient, right: other.ambient });
        }
        Ok(())
    }

    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        self.check(other)?;
        let stacked = hstack(&[&self.basis, &other.basis]);
        Ok(range_basis_scaled(&stacked, self.tol, 1.0))
    }

    /// Intersection by principal angles: directions whose angle is below
    /// `sqrt(tol)` are shared.
    pub fn intersection(&self, other: &Subspace) -> Result<Subspace> {
        self.check(other)?;
        if self.dim() == 0 || other.dim() == 0 {
            return Ok(Subspace::zero(self.ambient, self.tol));
        }
        let cross = self.basis.adjoint() * &other.basis;
        let f = svd(&cross);
        let cos_thr = self.tol.sqrt().cos();
        let shared = f.s.iter().take_while(|&&v| v >= cos_thr).count();
        Ok(Subspace::from_orthonormal(&self.basis * f.u.columns(0, shared), self.tol))
    }

    /// Orthogonal complement in the ambient space.
    pub fn complement(&self) -> Subspace {
        let p = identity(self.ambient) - self.projector();
        let (vals, vecs) = hermitian_eigen(&p);
        let r = vals.iter().filter(|&&v| v > 0.5).count();
        Subspace::from_orthonormal(vecs.columns(0, r).into_owned(), self.tol)
    }

    /// `self ⊖ sub`: the part of `self` orthogonal to `sub`.
    pub fn minus(&self, sub: &Subspace) -> Result<Subspace> {
        self.check(sub)?;
        let residual = &self.basis - sub.projector() * &self.basis;
        Ok(range_basis_scaled(&residual, self.tol, 1.0))
    }

    /// Whether `sub ⊆ self`, decided by `dim(self ∩ sub) = dim sub`.
    pub fn contains(&self, sub: &Subspace) -> Result<bool> {
        Ok(self.intersection(sub)?.dim() == sub.dim())
    }

    /// `‖(I − P)v‖`: how far the columns of `v` stick out of the subspace.
    pub fn leakage(&self, v: &CMatrix) -> f64 {
        let inside = &self.basis * (self.basis.adjoint() * v);
        residual_norm(&(v - inside))
    }

    /// Compression `B* A B` of an operator on the ambient space.
    pub fn compress(&self, a: &CMatrix) -> CMatrix {
        self.basis.adjoint() * a * &self.basis
    }
}

/// Isometry and coisometry residuals of a matrix.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct UnitaryReport {
    pub isometry_residual: f64,
    pub coisometry_residual: f64,
    pub isometry: bool,
    pub coisometry: bool,
    pub unitary: bool,
}

pub fn unitary_check(u: &CMatrix, tol: f64) -> UnitaryReport {
    let iso = residual_norm(&(u.adjoint() * u - identity(u.ncols())));
    let coiso = residual_norm(&(u * u.adjoint() - identity(u.nrows())));
    UnitaryReport {
        isometry_residual: iso,
        coisometry_residual: coiso,
        isometry: iso <= tol,
        coisometry: coiso <= tol,
        unitary: iso <= tol && coiso <= tol,
    }
}

/// Horizontal concatenation; all blocks must share a row count.
pub fn hstack(blocks: &[&CMatrix]) -> CMatrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Vertical concatenation; all blocks must share a column count.
pub fn vstack(blocks: &[&CMatrix]) -> CMatrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(*b);
        at += b.nrows();
    }
    out
}

pub fn block_diag(blocks: &[&CMatrix]) -> CMatrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let (mut r, mut k) = (0, 0);
    for b in blocks {
        out.view_mut((r, k), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        k += b.ncols();
    }
    out
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Polar factor `U_r V_r*` of `z` over its numerical range, together with the
/// retained rank. For `z = W·P` with `W` a partial isometry and `P ⪰ 0` this
/// recovers `W` on `ran P`.
pub fn polar_factor(z: &CMatrix, tol: f64) -> (CMatrix, usize) {
    if z.nrows() == 0 || z.ncols() == 0 {
        return (zeros(z.nrows(), z.ncols()), 0);
    }
    let f = svd(z);
    let thr = tol * f.s[0].max(1.0);
    let r = f.s.iter().take_while(|&&v| v > thr).count();
    (f.u.columns(0, r) * f.v.columns(0, r).adjoint(), r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn from_real(rows: usize, cols: usize, v: &[f64]) -> CMatrix {
        CMatrix::from_row_iterator(rows, cols, v.iter().map(|&x| c(x, 0.0)))
    }

    fn arb_matrix(r: usize, k: usize) -> impl Strategy<Value = CMatrix> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), r * k)
            .prop_map(move |v| CMatrix::from_iterator(r, k, v.into_iter().map(|(a, b)| c(a, b))))
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let r = psd_sqrt(&identity(3), DEFAULT_TOL).unwrap();
        assert!(op_norm(&(r - identity(3))) < 1e-14);
        let r = psd_sqrt(&from_real(2, 2, &[4.0, 0.0, 0.0, 1.0]), DEFAULT_TOL).unwrap();
        assert!(op_norm(&(r - from_real(2, 2, &[2.0, 0.0, 0.0, 1.0]))) < 1e-14);
    }

    #[test]
    fn sqrt_rejects_bad_input() {
        let asym = from_real(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(psd_sqrt(&asym, DEFAULT_TOL), Err(Error::NotHermitian { .. })));
        let neg = from_real(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(psd_sqrt(&neg, DEFAULT_TOL), Err(Error::NotPsd { .. })));
        let barely = from_real(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        let r = psd_sqrt(&barely, DEFAULT_TOL).unwrap();
        assert_eq!(r[(1, 1)], c(0.0, 0.0));
    }

    #[test]
    fn range_basis_examples() {
        assert_eq!(range_basis(&zeros(3, 2), DEFAULT_TOL).dim(), 0);
        assert_eq!(range_basis(&identity(4), DEFAULT_TOL).dim(), 4);
        let a = from_real(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        let s = range_basis(&a, DEFAULT_TOL);
        assert_eq!(s.dim(), 1);
        let v = s.basis().column(0);
        let expected = 1.0 / 2f64.sqrt();
        assert!((v[0].norm() - expected).abs() < 1e-14 && (v[1].norm() - expected).abs() < 1e-14);
        assert!((v[0] - v[1]).norm() < 1e-14);
    }

    #[test]
    fn subspace_ops_examples() {
        let e1 = Subspace::from_orthonormal(from_real(3, 1, &[1.0, 0.0, 0.0]), DEFAULT_TOL);
        let s = 1.0 / 2f64.sqrt();
        let e12 = Subspace::from_orthonormal(from_real(3, 1, &[s, s, 0.0]), DEFAULT_TOL);
        assert_eq!(e1.sum(&e12).unwrap().dim(), 2);
        assert_eq!(e1.intersection(&e12).unwrap().dim(), 0);
        let comp = e1.complement();
        assert_eq!(comp.dim(), 2);
        assert_eq!(e1.sum(&comp).unwrap().dim(), 3);
        assert_eq!(e1.intersection(&comp).unwrap().dim(), 0);
        let plane = e1.sum(&e12).unwrap();
        assert!(plane.contains(&e1).unwrap());
        assert!(!e1.contains(&plane).unwrap());
        assert!(matches!(e1.sum(&Subspace::zero(2, DEFAULT_TOL)), Err(Error::AmbientMismatch { .. })));
    }

    #[test]
    fn unitary_check_examples() {
        let r = unitary_check(&identity(2), DEFAULT_TOL);
        assert!(r.unitary && r.isometry_residual == 0.0);
        let col = from_real(2, 1, &[1.0, 0.0]);
        let r = unitary_check(&col, DEFAULT_TOL);
        assert!(r.isometry && !r.coisometry);
    }

    #[test]
    fn empty_matrices_are_handled() {
        assert_eq!(op_norm(&zeros(0, 3)), 0.0);
        assert_eq!(range_basis(&zeros(4, 0), DEFAULT_TOL).dim(), 0);
        assert_eq!(psd_sqrt(&zeros(0, 0), DEFAULT_TOL).unwrap().nrows(), 0);
        assert_eq!(polar_factor(&zeros(2, 0), DEFAULT_TOL).1, 0);
    }

    #[test]
    fn polar_recovers_partial_isometry() {
        let w = from_real(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let p = from_real(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (u, r) = polar_factor(&(&w * &p), DEFAULT_TOL);
        assert_eq!(r, 2);
        assert!(op_norm(&(u - w)) < 1e-13);
    }

    proptest! {
        #[test]
        fn sqrt_squares_back(a in arb_matrix(4, 4)) {
            let p = &a * a.adjoint();
            let r = psd_sqrt(&p, DEFAULT_TOL).unwrap();
            prop_assert!(op_norm(&(&r - r.adjoint())) < 1e-13);
            let scale = op_norm(&p).max(1.0);
            prop_assert!(op_norm(&(&r * &r - &p)) <= 2.0 * DEFAULT_TOL * scale);
        }

        #[test]
        fn range_invariant_under_right_multiplication(a in arb_matrix(5, 3), v in arb_matrix(3, 3)) {
            prop_assume!(singular_values(&v).last().copied().unwrap_or(0.0) > 1e-3);
            let s1 = range_basis(&a, DEFAULT_TOL);
            let s2 = range_basis(&(&a * &v), DEFAULT_TOL);
            prop_assert!(s1.contains(&s2).unwrap() && s2.contains(&s1).unwrap());
            prop_assert!(s1.orthonormality_residual() < DEFAULT_TOL);
        }

        #[test]
        fn dimension_formula(a in arb_matrix(5, 2), b in arb_matrix(5, 2), shared in any::<bool>()) {
            let mut b = b;
            if shared {
                b.set_column(0, &a.column(0));
            }
            let s1 = range_basis(&a, DEFAULT_TOL);
            let s2 = range_basis(&b, DEFAULT_TOL);
            let sum = s1.sum(&s2).unwrap().dim();
            let cap = s1.intersection(&s2).unwrap().dim();
            prop_assert_eq!(sum + cap, s1.dim() + s2.dim());
        }
    }
}
