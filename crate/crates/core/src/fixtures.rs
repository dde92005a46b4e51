//! Seeded fixture generators with known structure.
//!
//! Polynomial-space generators use the orthonormal basis `√γ_α z^α` of the
//! Drury–Arveson norm, listed from the highest degree down so that the
//! coordinate multiplications are upper triangular. All randomness flows
//! through a `ChaCha8Rng` seeded from the spec, so equal specs give
//! bit-identical tuples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opcore::{c, hermitian_eigen, identity, lambda_max, op_norm, zeros, CMatrix, C64, DEFAULT_TOL};
use crate::tuples::{defects, validate, MultiIndex, OperatorTuple};

/// Spacing kept between generated random tuples and the unit sphere.
const MARGIN: f64 = 0.05;

/// One diagonal block of a composite fixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BlockKind {
    /// Truncated polynomial shift of order `m`.
    Nilpotent { m: usize },
    /// Commuting spherical coisometry on `ℂ^d`.
    Coisometry { d: usize },
    /// Zero tuple on `ℂ^d`.
    Zero { d: usize },
    RandomCommuting { d: usize },
    /// Generic noncommuting row contraction.
    RandomContraction { d: usize },
}

/// Parameters of a generated fixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureSpec {
    NilpotentPoly { n: usize, m: usize },
    SphericalCoiso { n: usize, d: usize, commuting: bool, seed: u64 },
    BlockComposite { n: usize, blocks: Vec<BlockKind>, corner_scale: f64, commuting: bool, seed: u64 },
    Section7 { top_degree: usize },
    RandomCommuting { n: usize, d: usize, seed: u64 },
    RandomNoncommuting { n: usize, d: usize, seed: u64 },
    Jordan1d { m: usize },
}

/// Facts about a fixture that hold by construction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub degree: Option<usize>,
    pub nilpotent_order: Option<usize>,
    pub pure: Option<bool>,
    pub partial_isometry: Option<bool>,
    pub spherical_coisometry: Option<bool>,
    pub hc_dim: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub spec: FixtureSpec,
    pub tuple: OperatorTuple,
    /// Sizes of the diagonal blocks, top-left first.
    pub block_sizes: Vec<usize>,
    /// Corner contractions used by composite fixtures, outermost first.
    pub corners: Vec<CMatrix>,
    pub truth: GroundTruth,
}

pub fn generate(spec: &FixtureSpec) -> Result<Fixture> {
    let plain = |tuple: OperatorTuple, truth: GroundTruth| Fixture {
        spec: spec.clone(),
        block_sizes: vec![tuple.dim()],
        corners: Vec::new(),
        tuple,
        truth,
    };
    match *spec {
        FixtureSpec::NilpotentPoly { n, m } => {
            let t = gen_nilpotent_poly(n, m)?;
            let truth = GroundTruth {
                degree: Some(m),
                nilpotent_order: Some(m),
                pure: Some(true),
                partial_isometry: Some(true),
                spherical_coisometry: Some(false),
                hc_dim: Some(0),
            };
            Ok(plain(t, truth))
        }
        FixtureSpec::Jordan1d { m } => {
            let t = gen_jordan(m)?;
            let truth = GroundTruth {
                degree: Some(m),
                nilpotent_order: Some(m),
                pure: Some(true),
                partial_isometry: Some(true),
                spherical_coisometry: Some(false),
                hc_dim: Some(0),
            };
            Ok(plain(t, truth))
        }
        FixtureSpec::SphericalCoiso { n, d, commuting, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = gen_spherical_coiso(n, d, commuting, &mut rng)?;
            let truth = GroundTruth {
                degree: Some(0),
                nilpotent_order: None,
                pure: Some(d == 0),
                partial_isometry: Some(true),
                spherical_coisometry: Some(true),
                hc_dim: Some(d),
            };
            Ok(plain(t, truth))
        }
        FixtureSpec::Section7 { top_degree } => {
            let t = gen_section7(top_degree)?;
            let truth = GroundTruth {
                degree: None,
                nilpotent_order: Some(top_degree - 1),
                pure: Some(true),
                partial_isometry: Some(true),
                spherical_coisometry: Some(false),
                hc_dim: Some(0),
            };
            Ok(plain(t, truth))
        }
        FixtureSpec::RandomCommuting { n, d, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(plain(gen_random_commuting(n, d, &mut rng)?, GroundTruth::default()))
        }
        FixtureSpec::RandomNoncommuting { n, d, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(plain(gen_random_noncommuting(n, d, &mut rng)?, GroundTruth::default()))
        }
        FixtureSpec::BlockComposite { n, ref blocks, corner_scale, commuting, seed } => {
            gen_block_composite(spec, n, blocks, corner_scale, commuting, seed)
        }
    }
}

pub fn complex_gaussian<R: Rng>(rng: &mut R) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(s * re, s * im)
}

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let mut m = zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = complex_gaussian(rng);
        }
    }
    m
}

/// Haar-distributed unitary from the QR factorization of a Gaussian matrix.
pub fn random_unitary<R: Rng>(d: usize, rng: &mut R) -> CMatrix {
    if d == 0 {
        return zeros(0, 0);
    }
    let qr = gaussian_matrix(d, d, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..d {
        let z = r[(k, k)];
        let phase = if z.norm() > 0.0 { z / z.norm() } else { c(1.0, 0.0) };
        let mut col = q.column_mut(k);
        col *= phase;
    }
    q
}

/// Random `rows × cols` matrix of spectral norm `scale`.
pub fn random_contraction<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> CMatrix {
    let g = gaussian_matrix(rows, cols, rng);
    let norm = op_norm(&g);
    if norm == 0.0 {
        return g;
    }
    g * c(scale / norm, 0.0)
}

fn rescale_to_margin(mats: Vec<CMatrix>) -> Result<OperatorTuple> {
    let t = OperatorTuple::with_default_tol(mats)?;
    if t.dim() == 0 {
        return Ok(t);
    }
    let top = lambda_max(&t.row_gram());
    if top <= 0.0 {
        return Ok(t);
    }
    let s = ((1.0 - MARGIN) / top).sqrt();
    OperatorTuple::with_default_tol(t.mats().iter().map(|m| m * c(s, 0.0)).collect())
}

/// Orthonormal monomial basis for the listed degrees, highest degree first.
fn monomial_basis(n: usize, lo: usize, hi: usize) -> Vec<MultiIndex> {
    (lo..=hi).rev().flat_map(|k| MultiIndex::all_of_degree(n, k)).collect()
}

/// Coordinate multiplications on polynomials with degrees in `lo..=hi`,
/// truncated so that the top degree is sent to zero.
fn truncated_shift(n: usize, lo: usize, hi: usize) -> Result<OperatorTuple> {
    let basis = monomial_basis(n, lo, hi);
    let pos: std::collections::HashMap<MultiIndex, usize> =
        basis.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
    let d = basis.len();
    let mut mats = vec![zeros(d, d); n];
    for (col, alpha) in basis.iter().enumerate() {
        let k = alpha.total();
        if k + 1 > hi {
            continue;
        }
        for (i, m) in mats.iter_mut().enumerate() {
            let target = alpha.plus_unit(i);
            let w = ((alpha.get(i) + 1) as f64 / (k + 1) as f64).sqrt();
            m[(pos[&target], col)] = c(w, 0.0);
        }
    }
    OperatorTuple::with_default_tol(mats)
}

/// Multiplication by the coordinates on polynomials of degree `< m` in `n`
/// variables with the Drury–Arveson norm; nilpotent of order exactly `m`.
pub fn gen_nilpotent_poly(n: usize, m: usize) -> Result<OperatorTuple> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("nilpotent_poly needs n ≥ 1 and m ≥ 1".into()));
    }
    truncated_shift(n, 0, m - 1)
}

/// The shift restricted to homogeneous degrees `2..=top_degree` in two
/// variables; the top degree is annihilated.
pub fn gen_section7(top_degree: usize) -> Result<OperatorTuple> {
    if top_degree < 3 {
        return Err(Error::InvalidInput("section7 needs top degree ≥ 3".into()));
    }
    truncated_shift(2, 2, top_degree)
}

/// `m × m` nilpotent Jordan block (one variable).
pub fn gen_jordan(m: usize) -> Result<OperatorTuple> {
    if m == 0 {
        return Err(Error::InvalidInput("jordan block needs m ≥ 1".into()));
    }
    let mut j = zeros(m, m);
    for k in 1..m {
        j[(k - 1, k)] = c(1.0, 0.0);
    }
    OperatorTuple::with_default_tol(vec![j])
}

/// Spherical coisometry: commuting ones are unitarily rotated diagonal tuples
/// whose joint eigenvalues lie on the unit sphere; noncommuting ones are the
/// adjoint of a random isometry `ℂ^d → ℂ^{nd}`.
pub fn gen_spherical_coiso<R: Rng>(n: usize, d: usize, commuting: bool, rng: &mut R) -> Result<OperatorTuple> {
    if n == 0 {
        return Err(Error::InvalidInput("spherical coisometry needs n ≥ 1".into()));
    }
    if !commuting && n * d > 0 {
        let v = random_unitary(n * d, rng).columns(0, d).into_owned();
        let row = v.adjoint();
        let mats = (0..n).map(|i| row.columns(i * d, d).into_owned()).collect();
        return OperatorTuple::with_default_tol(mats);
    }
    let mut diag = vec![zeros(d, d); n];
    for k in 0..d {
        let v: Vec<C64> = (0..n).map(|_| complex_gaussian(rng)).collect();
        let norm = v.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            diag[i][(k, k)] = v[i] / norm;
        }
    }
    let u = random_unitary(d, rng);
    OperatorTuple::with_default_tol(diag).map(|t| t.conjugate(&u))
}

/// Polynomials of degree ≤ 2 in one random matrix, scaled inside the ball.
pub fn gen_random_commuting<R: Rng>(n: usize, d: usize, rng: &mut R) -> Result<OperatorTuple> {
    if n == 0 {
        return Err(Error::InvalidInput("random tuple needs n ≥ 1".into()));
    }
    let s = gaussian_matrix(d, d, rng) * c(1.0 / (d.max(1) as f64).sqrt(), 0.0);
    let s2 = &s * &s;
    let mats = (0..n)
        .map(|_| {
            let (a, b, q) = (complex_gaussian(rng), complex_gaussian(rng), complex_gaussian(rng));
            identity(d) * a + &s * b + &s2 * q
        })
        .collect();
    rescale_to_margin(mats)
}

pub fn gen_random_noncommuting<R: Rng>(n: usize, d: usize, rng: &mut R) -> Result<OperatorTuple> {
    if n == 0 {
        return Err(Error::InvalidInput("random tuple needs n ≥ 1".into()));
    }
    rescale_to_margin((0..n).map(|_| gaussian_matrix(d, d, rng)).collect())
}

fn gen_block<R: Rng>(n: usize, kind: &BlockKind, rng: &mut R) -> Result<OperatorTuple> {
    match *kind {
        BlockKind::Nilpotent { m } => gen_nilpotent_poly(n, m),
        BlockKind::Coisometry { d } => gen_spherical_coiso(n, d, true, rng),
        BlockKind::Zero { d } => Ok(OperatorTuple::zero(n, d)),
        BlockKind::RandomCommuting { d } => gen_random_commuting(n, d, rng),
        BlockKind::RandomContraction { d } => gen_random_noncommuting(n, d, rng),
    }
}

/// `[[A, X], [0, B]]` with `X_row = D_{A*} L D_B` for `L` in defect coordinates.
pub fn stack_blocks(a: &OperatorTuple, b: &OperatorTuple, l: &CMatrix) -> Result<OperatorTuple> {
    let corner = corner_from_contraction(a, b, l)?;
    let (d1, d2) = (a.dim(), b.dim());
    let mats = (0..a.n())
        .map(|i| {
            let mut m = zeros(d1 + d2, d1 + d2);
            m.view_mut((0, 0), (d1, d1)).copy_from(a.get(i));
            m.view_mut((d1, d1), (d2, d2)).copy_from(b.get(i));
            m.view_mut((0, d1), (d1, d2)).copy_from(&corner.columns(i * d2, d2));
            m
        })
        .collect();
    OperatorTuple::with_default_tol(mats)
}

/// The corner row `D_{A*} B_{A*} L B_B* D_B` (size `d1 × n·d2`).
pub fn corner_from_contraction(a: &OperatorTuple, b: &OperatorTuple, l: &CMatrix) -> Result<CMatrix> {
    let da = defects(a)?;
    let db = defects(b)?;
    if l.nrows() != da.rank_tstar() || l.ncols() != db.rank_t() {
        return Err(Error::InvalidInput(format!(
            "corner contraction is {}x{}, defect ranks are {}x{}",
            l.nrows(),
            l.ncols(),
            da.rank_tstar(),
            db.rank_t()
        )));
    }
    Ok(&da.d_tstar * da.space_tstar.basis() * l * db.space_t.basis().adjoint() * &db.d_t)
}

/// Basis of the contractions `L` for which the stacked tuple commutes, as
/// vectorised (column-major) matrices.
pub fn commuting_corner_space(a: &OperatorTuple, b: &OperatorTuple) -> Result<Vec<CMatrix>> {
    let da = defects(a)?;
    let db = defects(b)?;
    let (p, q) = (da.rank_tstar(), db.rank_t());
    let (n, d1, d2) = (a.n(), a.dim(), b.dim());
    let unknowns = p * q;
    if unknowns == 0 {
        return Ok(Vec::new());
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    if pairs.is_empty() {
        // A single operator commutes with itself; every corner works.
        return Ok((0..unknowns)
            .map(|k| {
                let mut e = zeros(p, q);
                e[(k % p, k / p)] = c(1.0, 0.0);
                e
            })
            .collect());
    }
    let eqs = pairs.len() * d1 * d2;
    let mut sys = zeros(eqs.max(unknowns), unknowns);
    for k in 0..unknowns {
        let mut e = zeros(p, q);
        e[(k % p, k / p)] = c(1.0, 0.0);
        let x = &da.d_tstar * da.space_tstar.basis() * e * db.space_t.basis().adjoint() * &db.d_t;
        let xs: Vec<CMatrix> = (0..n).map(|i| x.columns(i * d2, d2).into_owned()).collect();
        for (pi, &(i, j)) in pairs.iter().enumerate() {
            let r = a.get(i) * &xs[j] + &xs[i] * b.get(j) - a.get(j) * &xs[i] - &xs[j] * b.get(i);
            for col in 0..d2 {
                for row in 0..d1 {
                    sys[(pi * d1 * d2 + col * d1 + row, k)] = r[(row, col)];
                }
            }
        }
    }
    let gram = sys.adjoint() * &sys;
    let (vals, vecs) = hermitian_eigen(&gram);
    let scale = vals.first().copied().unwrap_or(0.0).max(1.0);
    let null: Vec<CMatrix> = vals
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= 1e-20 * scale)
        .map(|(k, _)| CMatrix::from_column_slice(p, q, vecs.column(k).as_slice()))
        .collect();
    Ok(null)
}

fn gen_block_composite(
    spec: &FixtureSpec,
    n: usize,
    blocks: &[BlockKind],
    corner_scale: f64,
    commuting: bool,
    seed: u64,
) -> Result<Fixture> {
    if blocks.is_empty() {
        return Err(Error::InvalidInput("a composite needs at least one block".into()));
    }
    if !(0.0..=1.0).contains(&corner_scale) {
        return Err(Error::InvalidInput(format!("corner scale {corner_scale} outside [0, 1]")));
    }
    if commuting && blocks.iter().any(|b| matches!(b, BlockKind::RandomContraction { .. })) {
        return Err(Error::InvalidInput("a commuting composite cannot use noncommuting blocks".into()));
    }
    const RETRIES: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parts: Vec<OperatorTuple> = blocks.iter().map(|b| gen_block(n, b, &mut rng)).collect::<Result<_>>()?;
    let mut acc = parts[0].clone();
    let mut corners = Vec::new();
    for b in &parts[1..] {
        let mut built = None;
        for _ in 0..RETRIES {
            let (p, q) = (defects(&acc)?.rank_tstar(), defects(b)?.rank_t());
            let l = if commuting {
                let space = commuting_corner_space(&acc, b)?;
                let mut l = zeros(p, q);
                for v in &space {
                    l += v * complex_gaussian(&mut rng);
                }
                let norm = op_norm(&l);
                if norm > 0.0 {
                    l * c(corner_scale / norm, 0.0)
                } else {
                    l
                }
            } else {
                random_contraction(p, q, corner_scale, &mut rng)
            };
            let t = stack_blocks(&acc, b, &l)?;
            let diag = validate(&t);
            if diag.row_contraction && (!commuting || diag.commuting) {
                built = Some((t, l));
                break;
            }
        }
        let (t, l) = built.ok_or_else(|| Error::GenerationFailed("no admissible corner within the retry budget".into()))?;
        acc = t;
        corners.push(l);
    }
    let tuple = acc.with_tol(DEFAULT_TOL);
    Ok(Fixture {
        spec: spec.clone(),
        block_sizes: parts.iter().map(|p| p.dim()).collect(),
        corners,
        tuple,
        truth: GroundTruth::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::fro_norm;
    use crate::tuples::classify;

    #[test]
    fn nilpotent_poly_shapes() {
        let t = gen_nilpotent_poly(2, 1).unwrap();
        assert_eq!(t.dim(), 1);
        assert!(t.mats().iter().all(|m| fro_norm(m) == 0.0));
        let t = gen_nilpotent_poly(2, 2).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(classify(&t).nilpotent_order, Some(2));
        let t = gen_nilpotent_poly(3, 3).unwrap();
        assert_eq!(t.dim(), 10);
        let cl = classify(&t);
        assert_eq!(cl.nilpotent_order, Some(3));
        assert!(cl.pure && cl.row_partial_isometry);
    }

    #[test]
    fn section7_structure() {
        for top in 3..=8 {
            let t = gen_section7(top).unwrap();
            assert_eq!(t.dim(), (2..=top).map(|k| k + 1).sum::<usize>());
            let diag = validate(&t);
            assert!(diag.commuting && diag.row_contraction);
            assert!(diag.commutation_residual < 1e-12);
            let dp = defects(&t).unwrap();
            let mut p_h2 = zeros(t.dim(), t.dim());
            let d = t.dim();
            for k in d - 3..d {
                p_h2[(k, k)] = c(1.0, 0.0);
            }
            assert!(op_norm(&(&dp.d_tstar * &dp.d_tstar - p_h2)) < 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = FixtureSpec::RandomCommuting { n: 2, d: 4, seed: 11 };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        for (x, y) in a.tuple.mats().iter().zip(b.tuple.mats()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn random_generators_validate() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = gen_random_commuting(3, 4, &mut rng).unwrap();
            let d = validate(&t);
            assert!(d.commutation_residual < 1e-12 && d.row_contraction_residual <= 0.0);
            let t = gen_random_noncommuting(2, 3, &mut rng).unwrap();
            assert!(validate(&t).row_contraction);
            let t = gen_spherical_coiso(2, 3, true, &mut rng).unwrap();
            assert!(classify(&t).spherical_coisometry && validate(&t).commuting);
            let t = gen_spherical_coiso(2, 3, false, &mut rng).unwrap();
            assert!(classify(&t).spherical_coisometry);
        }
    }

    #[test]
    fn composites_validate() {
        let spec = FixtureSpec::BlockComposite {
            n: 2,
            blocks: vec![BlockKind::Zero { d: 2 }, BlockKind::Zero { d: 1 }],
            corner_scale: 0.9,
            commuting: true,
            seed: 3,
        };
        let f = generate(&spec).unwrap();
        assert!(validate(&f.tuple).commuting);
        assert!(op_norm(&f.corners[0]) > 0.5);
        let spec = FixtureSpec::BlockComposite {
            n: 2,
            blocks: vec![
                BlockKind::RandomContraction { d: 2 },
                BlockKind::RandomContraction { d: 2 },
                BlockKind::RandomContraction { d: 1 },
            ],
            corner_scale: 0.8,
            commuting: false,
            seed: 4,
        };
        let f = generate(&spec).unwrap();
        assert_eq!(f.block_sizes, vec![2, 2, 1]);
        assert!(validate(&f.tuple).row_contraction);
    }

    #[test]
    fn commuting_corner_over_coisometry_is_zero() {
        let spec = FixtureSpec::BlockComposite {
            n: 2,
            blocks: vec![BlockKind::Nilpotent { m: 2 }, BlockKind::Coisometry { d: 2 }],
            corner_scale: 0.7,
            commuting: true,
            seed: 5,
        };
        let f = generate(&spec).unwrap();
        assert!(validate(&f.tuple).commuting);
        assert!(op_norm(&f.corners[0]) < 1e-12);
    }

    #[test]
    fn unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_unitary(5, &mut rng);
        assert!(op_norm(&(u.adjoint() * &u - identity(5))) < 1e-13);
    }
}
