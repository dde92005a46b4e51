//! Full Fock space truncated at word length `K`, multi-analytic operators
//! given by their symbols, the noncommutative characteristic function and its
//! compression to the symmetric (Drury–Arveson) subspace.
//!
//! Words are indexed graded-lexicographically: all words of length `k` occupy
//! a contiguous band starting at `(n^k − 1)/(n − 1)`, ordered as base-`n`
//! numerals. Vectors in `Γ ⊗ E` are stored word-major: the coordinate of
//! `e_w ⊗ f_i` is `index(w)·dim E + i`.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::charfn::CharFn;
use crate::error::{Error, Result};
use crate::opcore::{block_diag, c, op_norm, residual_norm, zeros, CMatrix};
use crate::tuples::{defects, gamma, require_commuting, require_row_contraction, DefectPair, MultiIndex, OperatorTuple};

/// A word over the letters `0..n` (printed 1-based).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn new(letters: Vec<usize>) -> Self {
        Word(letters)
    }

    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn reversed(&self) -> Word {
        Word(self.0.iter().rev().copied().collect())
    }

    /// Number of occurrences of each letter.
    pub fn abelianize(&self, n: usize) -> MultiIndex {
        let mut counts = vec![0u32; n];
        for &l in &self.0 {
            counts[l] += 1;
        }
        MultiIndex::new(counts)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "∅");
        }
        let parts: Vec<String> = self.0.iter().map(|l| (l + 1).to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// `Γ_{≤K}` over `n` letters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FockTruncation {
    n: usize,
    order: usize,
}

impl FockTruncation {
    pub fn new(n: usize, order: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("Fock space needs at least one letter".into()));
        }
        let f = FockTruncation { n, order };
        // Guard the index arithmetic.
        let mut total: usize = 0;
        for k in 0..=order {
            let band = n.checked_pow(k as u32).ok_or(Error::Overflow)?;
            total = total.checked_add(band).ok_or(Error::Overflow)?;
        }
        if total > 1 << 24 {
            return Err(Error::InvalidInput(format!("truncation with {total} words is too large")));
        }
        Ok(f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn band_len(&self, k: usize) -> usize {
        self.n.pow(k as u32)
    }

    pub fn band_offset(&self, k: usize) -> usize {
        if self.n == 1 {
            k
        } else {
            (self.n.pow(k as u32) - 1) / (self.n - 1)
        }
    }

    /// Number of words of length `≤ K`.
    pub fn dim(&self) -> usize {
        self.band_offset(self.order + 1)
    }

    /// Index of the word, if it fits in the truncation.
    pub fn index(&self, w: &Word) -> Option<usize> {
        if w.len() > self.order || w.letters().iter().any(|&l| l >= self.n) {
            return None;
        }
        let within = w.letters().iter().fold(0usize, |acc, &l| acc * self.n + l);
        Some(self.band_offset(w.len()) + within)
    }

    pub fn length_of(&self, idx: usize) -> usize {
        let mut k = 0;
        while self.band_offset(k + 1) <= idx {
            k += 1;
        }
        k
    }

    pub fn word(&self, idx: usize) -> Word {
        let k = self.length_of(idx);
        let mut within = idx - self.band_offset(k);
        let mut letters = vec![0; k];
        for slot in letters.iter_mut().rev() {
            *slot = within % self.n;
            within /= self.n;
        }
        Word(letters)
    }

    /// Index of `w·j`, or `None` past the cut.
    pub fn append(&self, idx: usize, j: usize) -> Option<usize> {
        let k = self.length_of(idx);
        if k + 1 > self.order {
            return None;
        }
        let within = idx - self.band_offset(k);
        Some(self.band_offset(k + 1) + within * self.n + j)
    }

    /// Index of `j·w`, or `None` past the cut.
    pub fn prepend(&self, idx: usize, j: usize) -> Option<usize> {
        let k = self.length_of(idx);
        if k + 1 > self.order {
            return None;
        }
        let within = idx - self.band_offset(k);
        Some(self.band_offset(k + 1) + j * self.band_len(k) + within)
    }

    /// Length of each word, by index.
    pub fn lengths(&self) -> Vec<usize> {
        (0..=self.order).flat_map(|k| std::iter::repeat_n(k, self.band_len(k))).collect()
    }

    /// For every index `v`, the splittings `w = u·v'`: returns pairs
    /// `(prefix, suffix)` of indices with `prefix·suffix = w`.
    fn splittings(&self, idx: usize) -> Vec<(usize, usize)> {
        let w = self.word(idx);
        (0..=w.len())
            .map(|s| {
                let prefix = Word(w.letters()[..s].to_vec());
                let suffix = Word(w.letters()[s..].to_vec());
                (self.index(&prefix).expect("prefix fits"), self.index(&suffix).expect("suffix fits"))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Creation operator `e_w ↦ e_{jw}` (left) or `e_{wj}` (right), zero on the
/// top band.
pub fn creation(f: &FockTruncation, side: Side, j: usize) -> Result<CMatrix> {
    if j >= f.n() {
        return Err(Error::InvalidInput(format!("letter {} out of range 1..={}", j + 1, f.n())));
    }
    let dim = f.dim();
    let mut m = zeros(dim, dim);
    for idx in 0..dim {
        let target = match side {
            Side::Left => f.prepend(idx, j),
            Side::Right => f.append(idx, j),
        };
        if let Some(t) = target {
            m[(t, idx)] = c(1.0, 0.0);
        }
    }
    Ok(m)
}

/// Word reversal `e_{i_1…i_m} ↦ e_{i_m…i_1}`.
pub fn flip(f: &FockTruncation) -> CMatrix {
    let dim = f.dim();
    let mut m = zeros(dim, dim);
    for idx in 0..dim {
        let r = f.index(&f.word(idx).reversed()).expect("reversal keeps length");
        m[(r, idx)] = c(1.0, 0.0);
    }
    m
}

/// A multi-analytic operator `Γ⊗E → Γ⊗E_*` given by its symbol:
/// `M(e_v ⊗ η) = Σ_w e_{vw} ⊗ c_w η`, truncated at length `K`.
#[derive(Clone, Debug)]
pub struct MultiAnalytic {
    fock: FockTruncation,
    rows: usize,
    cols: usize,
    /// `c_w` indexed by the word position of `e_w` in the symbol.
    coeffs: Vec<CMatrix>,
}

impl MultiAnalytic {
    pub fn new(fock: FockTruncation, rows: usize, cols: usize, coeffs: Vec<CMatrix>) -> Result<Self> {
        if coeffs.len() != fock.dim() || coeffs.iter().any(|m| m.shape() != (rows, cols)) {
            return Err(Error::InvalidInput("symbol coefficients do not match the truncation".into()));
        }
        Ok(MultiAnalytic { fock, rows, cols, coeffs })
    }

    /// `I_Γ ⊗ W`.
    pub fn constant(fock: FockTruncation, w: CMatrix) -> Self {
        let (rows, cols) = w.shape();
        let mut coeffs = vec![zeros(rows, cols); fock.dim()];
        coeffs[0] = w;
        MultiAnalytic { fock, rows, cols, coeffs }
    }

    pub fn identity(fock: FockTruncation, dim: usize) -> Self {
        Self::constant(fock, crate::opcore::identity(dim))
    }

    pub fn fock(&self) -> &FockTruncation {
        &self.fock
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Component of the symbol at `e_w`.
    pub fn symbol_coeff(&self, w: &Word) -> Option<&CMatrix> {
        self.fock.index(w).map(|i| &self.coeffs[i])
    }

    pub fn symbol_coeffs(&self) -> &[CMatrix] {
        &self.coeffs
    }

    /// Fourier coefficient `θ_w`, the symbol component at the reversed word.
    pub fn fourier(&self, w: &Word) -> Option<&CMatrix> {
        self.symbol_coeff(&w.reversed())
    }

    /// `self ∘ rhs`: `(ab)_w = Σ_{w = v·u} a_u b_v`.
    pub fn compose(&self, rhs: &MultiAnalytic) -> Result<MultiAnalytic> {
        if self.fock != rhs.fock || self.cols != rhs.rows {
            return Err(Error::InvalidInput(format!(
                "cannot compose {}x{} after {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let coeffs = (0..self.fock.dim())
            .into_par_iter()
            .map(|idx| {
                let mut acc = zeros(self.rows, rhs.cols);
                for (v, u) in self.fock.splittings(idx) {
                    acc += &self.coeffs[u] * &rhs.coeffs[v];
                }
                acc
            })
            .collect();
        Ok(MultiAnalytic { fock: self.fock, rows: self.rows, cols: rhs.cols, coeffs })
    }

    /// Block-diagonal sum acting on `E_1 ⊕ E_2`.
    pub fn direct_sum(&self, other: &MultiAnalytic) -> Result<MultiAnalytic> {
        if self.fock != other.fock {
            return Err(Error::InvalidInput("direct sum across different truncations".into()));
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| block_diag(&[a, b])).collect();
        Ok(MultiAnalytic {
            fock: self.fock,
            rows: self.rows + other.rows,
            cols: self.cols + other.cols,
            coeffs,
        })
    }

    pub fn adjoint_constant(&self) -> Option<CMatrix> {
        self.is_constant().then(|| self.coeffs[0].adjoint())
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs[1..].iter().all(|m| m.iter().all(|z| *z == c(0.0, 0.0)))
    }

    /// Largest coefficient difference over words of length `≤ K − 1`.
    pub fn interior_distance(&self, other: &MultiAnalytic) -> Result<f64> {
        if self.fock != other.fock || self.shape() != other.shape() {
            return Err(Error::InvalidInput("comparing symbols of different shapes".into()));
        }
        let end = self.fock.band_offset(self.fock.order());
        Ok((0..end).map(|i| op_norm(&(&self.coeffs[i] - &other.coeffs[i]))).fold(0.0, f64::max))
    }

    /// Sum of the symbol over each abelianization class: the coefficients of
    /// the compression to the symmetric subspace, for `|α| ≤ K`.
    pub fn abelianized(&self) -> BTreeMap<MultiIndex, CMatrix> {
        let mut out: BTreeMap<MultiIndex, CMatrix> = BTreeMap::new();
        for (idx, m) in self.coeffs.iter().enumerate() {
            let alpha = self.fock.word(idx).abelianize(self.fock.n());
            out.entry(alpha).and_modify(|acc| *acc += m).or_insert_with(|| m.clone());
        }
        out
    }

    /// The operator on `Γ_{≤K}⊗E → Γ_{≤K}⊗E_*` as a dense matrix.
    pub fn to_dense(&self) -> CMatrix {
        let f = &self.fock;
        let dim = f.dim();
        let mut m = zeros(dim * self.rows, dim * self.cols);
        for v in 0..dim {
            let wv = f.word(v);
            for (u, cu) in self.coeffs.iter().enumerate() {
                let wu = f.word(u);
                if wv.len() + wu.len() > f.order() {
                    continue;
                }
                let mut joined = wv.letters().to_vec();
                joined.extend_from_slice(wu.letters());
                let target = f.index(&Word(joined)).expect("length checked");
                m.view_mut((target * self.rows, v * self.cols), (self.rows, self.cols)).copy_from(cu);
            }
        }
        m
    }
}

/// Largest `‖M(L_i⊗I) − (L_i⊗I)M‖` for a dense operator on the truncation.
pub fn multianalyticity_residual(f: &FockTruncation, m: &CMatrix, rows: usize, cols: usize) -> Result<f64> {
    let dim = f.dim();
    if m.shape() != (dim * rows, dim * cols) {
        return Err(Error::InvalidInput("operator does not act on the truncation".into()));
    }
    let mut worst = 0.0f64;
    for i in 0..f.n() {
        // M(L_i⊗I): column block v is M's column block iv.
        let mut lhs = zeros(dim * rows, dim * cols);
        // (L_i⊗I)M: row block iv is M's row block v.
        let mut rhs = zeros(dim * rows, dim * cols);
        for v in 0..dim {
            if let Some(iv) = f.prepend(v, i) {
                lhs.columns_mut(v * cols, cols).copy_from(&m.columns(iv * cols, cols));
                rhs.rows_mut(iv * rows, rows).copy_from(&m.rows(v * rows, rows));
            }
        }
        worst = worst.max(residual_norm(&(lhs - rhs)));
    }
    Ok(worst)
}

/// The noncommutative characteristic function of a row contraction on the
/// truncation, in the defect bases of [`defects`].
#[derive(Clone, Debug)]
pub struct NcCharFn {
    tuple: OperatorTuple,
    defects: DefectPair,
    fock: FockTruncation,
    /// `B_{T*}* D_{T*}`.
    left: CMatrix,
    /// Blocks `P_j D_T B_T`.
    right: Vec<CMatrix>,
    /// `−B_{T*}* T B_T`.
    constant: CMatrix,
    symbol: MultiAnalytic,
}

pub fn nc_charfn(t: &OperatorTuple, order: usize) -> Result<NcCharFn> {
    require_row_contraction(t)?;
    let dp = defects(t)?;
    nc_charfn_with(t, dp, order)
}

/// As [`nc_charfn`] with defect data already computed (so that factor
/// identities are expressed in the same bases as their connectors).
pub fn nc_charfn_with(t: &OperatorTuple, dp: DefectPair, order: usize) -> Result<NcCharFn> {
    let fock = FockTruncation::new(t.n(), order)?;
    let d = t.dim();
    let bt = dp.space_t.basis();
    let bts = dp.space_tstar.basis();
    let left = bts.adjoint() * &dp.d_tstar;
    let db = &dp.d_t * bt;
    let right: Vec<CMatrix> = (0..t.n()).map(|j| db.rows(j * d, d).into_owned()).collect();
    let constant = -(bts.adjoint() * t.row() * bt);
    let (rs, r) = (bts.ncols(), bt.ncols());

    // Symbol column: image of e_∅ ⊗ η. The word w = (w_1, …, w_m) carries
    // D_{T*} T*_{w_m} ⋯ T*_{w_2} P_{w_1} D_T.
    let mut state: Vec<CMatrix> = vec![zeros(d, r); fock.dim()];
    let mut coeffs = vec![zeros(rs, r); fock.dim()];
    coeffs[0] = constant.clone();
    for idx in 1..fock.dim() {
        let w = fock.word(idx);
        let last = *w.letters().last().expect("nonempty");
        state[idx] = if w.len() == 1 {
            right[last].clone()
        } else {
            let parent = fock.index(&Word(w.letters()[..w.len() - 1].to_vec())).expect("prefix fits");
            t.get(last).adjoint() * &state[parent]
        };
        coeffs[idx] = &left * &state[idx];
    }
    let symbol = MultiAnalytic { fock, rows: rs, cols: r, coeffs };
    Ok(NcCharFn { tuple: t.clone(), defects: dp, fock, left, right, constant, symbol })
}

impl NcCharFn {
    pub fn fock(&self) -> &FockTruncation {
        &self.fock
    }

    pub fn tuple(&self) -> &OperatorTuple {
        &self.tuple
    }

    pub fn defects(&self) -> &DefectPair {
        &self.defects
    }

    pub fn symbol(&self) -> &MultiAnalytic {
        &self.symbol
    }

    /// `(rank D_{T*}, rank D_T)`.
    pub fn shape(&self) -> (usize, usize) {
        self.symbol.shape()
    }

    /// `Θ_{T,w}`: the symbol column paired against `e_{w̄} ⊗ ·`. Refused for
    /// words touching the top band.
    pub fn coeff(&self, w: &Word) -> Result<CMatrix> {
        if w.len() >= self.fock.order() {
            return Err(Error::BandCorrupted { length: w.len(), order: self.fock.order() });
        }
        if w.letters().iter().any(|&l| l >= self.fock.n()) {
            return Err(Error::InvalidInput(format!("word {w} uses a letter beyond {}", self.fock.n())));
        }
        Ok(self.symbol.fourier(w).expect("checked length").clone())
    }

    /// `‖P_{e_∅⊗E_*} θ‖`, which must be `< 1` for a purely contractive symbol.
    pub fn constant_norm(&self) -> f64 {
        op_norm(&self.constant)
    }

    /// `−I⊗T + (I⊗D_{T*}) Σ_{k≤K}(R̃T̃*)^k R̃ (I⊗D_T)` as a dense matrix on
    /// `Γ_{≤K} ⊗ D_T → Γ_{≤K} ⊗ D_{T*}`. The Neumann sum terminates because
    /// every factor raises word length.
    pub fn assemble(&self) -> CMatrix {
        let f = &self.fock;
        let dim = f.dim();
        let d = self.tuple.dim();
        let (rs, r) = self.shape();
        let cols = dim * r;
        // Y = R̃(I⊗D_T B): e_v⊗η ↦ Σ_j e_{vj} ⊗ P_j D_T B η.
        let mut cur: Vec<CMatrix> = vec![zeros(d, cols); dim];
        for v in 0..dim {
            for (j, rj) in self.right.iter().enumerate() {
                if let Some(vj) = f.append(v, j) {
                    cur[vj].columns_mut(v * r, r).copy_from(rj);
                }
            }
        }
        let mut acc = cur.clone();
        let adj: Vec<CMatrix> = self.tuple.mats().iter().map(|m| m.adjoint()).collect();
        for _ in 0..f.order() {
            let mut next: Vec<CMatrix> = vec![zeros(d, cols); dim];
            for (u, x) in cur.iter().enumerate() {
                if x.iter().all(|z| *z == c(0.0, 0.0)) {
                    continue;
                }
                for (i, ti) in adj.iter().enumerate() {
                    if let Some(ui) = f.append(u, i) {
                        next[ui] += ti * x;
                    }
                }
            }
            for (a, n) in acc.iter_mut().zip(&next) {
                *a += n;
            }
            cur = next;
        }
        let mut out = zeros(dim * rs, cols);
        for (w, a) in acc.iter().enumerate() {
            out.rows_mut(w * rs, rs).copy_from(&(&self.left * a));
            let block = out.view((w * rs, w * r), (rs, r)).into_owned() + &self.constant;
            out.view_mut((w * rs, w * r), (rs, r)).copy_from(&block);
        }
        out
    }

    /// `Σ_{ab(w)=α} Θ_{T,w}` for every `|α| ≤ K − 1`.
    pub fn abelianized_coeffs(&self) -> Result<BTreeMap<MultiIndex, CMatrix>> {
        let n = self.fock.n();
        let (rs, r) = self.shape();
        let mut out: BTreeMap<MultiIndex, CMatrix> = BTreeMap::new();
        for k in 0..self.fock.order() {
            for alpha in MultiIndex::all_of_degree(n, k) {
                out.insert(alpha, zeros(rs, r));
            }
            let off = self.fock.band_offset(k);
            for idx in off..off + self.fock.band_len(k) {
                let w = self.fock.word(idx);
                let coeff = self.coeff(&w)?;
                *out.get_mut(&w.abelianize(n)).expect("inserted above") += coeff;
            }
        }
        Ok(out)
    }
}

/// Largest `‖Σ_{ab(w)=α} Θ_{T,w} − θ_{T,α}‖` over `|α| ≤ K − 1`, comparing
/// the Fock-space symbol with the commutative Taylor coefficients.
pub fn abelianization_residual(t: &OperatorTuple, order: usize) -> Result<f64> {
    require_commuting(t)?;
    let nc = nc_charfn(t, order)?;
    let cf = CharFn::new(t)?;
    let mut worst = 0.0f64;
    for (alpha, sum) in nc.abelianized_coeffs()? {
        worst = worst.max(op_norm(&(sum - cf.coeff(&alpha)?)));
    }
    Ok(worst)
}

fn permutation_count(k: usize) -> usize {
    (1..=k).product()
}

/// Heap's algorithm, collecting every permutation of `0..k`.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(permutation_count(k));
    let mut p: Vec<usize> = (0..k).collect();
    let mut cnt = vec![0usize; k];
    out.push(p.clone());
    let mut i = 0;
    while i < k {
        if cnt[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(cnt[i], i);
            }
            out.push(p.clone());
            cnt[i] += 1;
            i = 0;
        } else {
            cnt[i] = 0;
            i += 1;
        }
    }
    out
}

fn digits(mut x: usize, n: usize, k: usize) -> Vec<usize> {
    let mut d = vec![0; k];
    for slot in d.iter_mut().rev() {
        *slot = x % n;
        x /= n;
    }
    d
}

fn from_digits(d: &[usize], n: usize) -> usize {
    d.iter().fold(0, |acc, &l| acc * n + l)
}

/// Symmetrizer on `(ℂ^n)^{⊗k}` by averaging all `k!` tensor-slot
/// permutations.
pub fn symmetrizer_by_permutations(n: usize, k: usize) -> CMatrix {
    let dim = n.pow(k as u32);
    let perms = permutations(k);
    let weight = 1.0 / perms.len() as f64;
    let mut m = zeros(dim, dim);
    for x in 0..dim {
        let dx = digits(x, n, k);
        for p in &perms {
            let permuted: Vec<usize> = p.iter().map(|&s| dx[s]).collect();
            m[(from_digits(&permuted, n), x)] += c(weight, 0.0);
        }
    }
    m
}

/// Symmetrizer built as `S_k = (1/k) Σ_j τ_{j,k} (S_{k−1} ⊗ I)`, where
/// `τ_{j,k}` swaps slots `j` and `k`.
pub fn symmetrizer_recursive(n: usize, k: usize) -> CMatrix {
    if k <= 1 {
        return crate::opcore::identity(n.pow(k as u32));
    }
    let prev = symmetrizer_recursive(n, k - 1);
    let lifted = crate::opcore::kron(&prev, &crate::opcore::identity(n));
    let dim = n.pow(k as u32);
    let mut acc = lifted.clone();
    for j in 0..k - 1 {
        // τ_{j,k} as a row permutation of `lifted`.
        let mut swapped = zeros(dim, dim);
        for x in 0..dim {
            let mut dx = digits(x, n, k);
            dx.swap(j, k - 1);
            swapped.row_mut(from_digits(&dx, n)).copy_from(&lifted.row(x));
        }
        acc += swapped;
    }
    acc * c(1.0 / k as f64, 0.0)
}

/// Symmetrizer on band `k`: permutation averaging up to length 6, the
/// recursion above that.
pub fn symmetrizer(n: usize, k: usize) -> CMatrix {
    if k <= 6 {
        symmetrizer_by_permutations(n, k)
    } else {
        symmetrizer_recursive(n, k)
    }
}

/// Orthonormal basis `ŝ_α = γ_α^{-1/2} Σ_{ab(w)=α} e_w` of the symmetric
/// subspace of `Γ_{≤K}`, stored sparsely.
#[derive(Clone, Debug)]
pub struct SymmetricBasis {
    fock: FockTruncation,
    pub indices: Vec<MultiIndex>,
    /// Word indices contributing to each `ŝ_α`.
    pub support: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

impl SymmetricBasis {
    pub fn new(fock: FockTruncation) -> Result<Self> {
        let n = fock.n();
        let indices = MultiIndex::all_up_to(n, fock.order());
        let pos: BTreeMap<MultiIndex, usize> = indices.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
        let mut support = vec![Vec::new(); indices.len()];
        for idx in 0..fock.dim() {
            support[pos[&fock.word(idx).abelianize(n)]].push(idx);
        }
        let weights =
            indices.iter().map(|a| gamma(a).map(|g| 1.0 / (g as f64).sqrt())).collect::<Result<Vec<f64>>>()?;
        Ok(SymmetricBasis { fock, indices, support, weights })
    }

    /// Dense isometry `Γ_sym → Γ_{≤K}`.
    pub fn matrix(&self) -> CMatrix {
        let mut v = zeros(self.fock.dim(), self.indices.len());
        for (a, words) in self.support.iter().enumerate() {
            for &w in words {
                v[(w, a)] = c(self.weights[a], 0.0);
            }
        }
        v
    }

    /// `‖S_k − V_kV_k*‖` on band `k`.
    pub fn projector_residual(&self, k: usize) -> f64 {
        let s = symmetrizer(self.fock.n(), k);
        let off = self.fock.band_offset(k);
        let len = self.fock.band_len(k);
        let v = self.matrix();
        let vk = v.rows(off, len).into_owned();
        residual_norm(&(s - &vk * vk.adjoint()))
    }
}

/// Compression of `Θ_T` to the symmetric subspace, with its coefficients.
#[derive(Clone, Debug)]
pub struct SymmetricCompression {
    /// `(V⊗I)* Θ (V⊗I)`, rows and columns ordered by multi-index then defect
    /// basis.
    pub operator: CMatrix,
    pub indices: Vec<MultiIndex>,
    /// `√γ_α ⟨Θ(ŝ_0⊗η), ŝ_α⊗η_*⟩` for `|α| ≤ K − 1`.
    pub coeffs: BTreeMap<MultiIndex, CMatrix>,
    /// Largest band-projector mismatch over the bands that were checked.
    pub projector_residual: f64,
    /// Deviation of `coeffs` from the commutative characteristic function.
    pub charfn_residual: f64,
}

/// Bands larger than this skip the explicit symmetrizer comparison.
const PROJECTOR_CHECK_LIMIT: usize = 1024;

pub fn symmetric_compression(nc: &NcCharFn) -> Result<SymmetricCompression> {
    require_commuting(nc.tuple())?;
    let f = *nc.fock();
    let basis = SymmetricBasis::new(f)?;
    let dense = nc.assemble();
    let (rs, r) = nc.shape();
    let count = basis.indices.len();
    // Θ(V⊗I): gather column blocks.
    let mut right = zeros(f.dim() * rs, count * r);
    for (a, words) in basis.support.iter().enumerate() {
        let mut block = zeros(f.dim() * rs, r);
        for &w in words {
            block += dense.columns(w * r, r) * c(basis.weights[a], 0.0);
        }
        right.columns_mut(a * r, r).copy_from(&block);
    }
    let mut operator = zeros(count * rs, count * r);
    for (a, words) in basis.support.iter().enumerate() {
        let mut block = zeros(rs, count * r);
        for &w in words {
            block += right.rows(w * rs, rs) * c(basis.weights[a], 0.0);
        }
        operator.rows_mut(a * rs, rs).copy_from(&block);
    }
    let cf = CharFn::new(nc.tuple())?;
    let mut coeffs = BTreeMap::new();
    let mut charfn_residual = 0.0f64;
    for (a, alpha) in basis.indices.iter().enumerate() {
        if alpha.total() >= f.order() {
            continue;
        }
        let scale = 1.0 / basis.weights[a];
        let m = operator.view((a * rs, 0), (rs, r)).into_owned() * c(scale, 0.0);
        charfn_residual = charfn_residual.max(op_norm(&(&m - cf.coeff(alpha)?)));
        coeffs.insert(alpha.clone(), m);
    }
    let projector_residual = (0..=f.order())
        .filter(|&k| f.band_len(k) <= PROJECTOR_CHECK_LIMIT)
        .map(|k| basis.projector_residual(k))
        .fold(0.0, f64::max);
    Ok(SymmetricCompression { operator, indices: basis.indices, coeffs, projector_residual, charfn_residual })
}

/// Summary of the truncation-level identities for one tuple.
#[derive(Clone, Debug, Serialize)]
pub struct FockReport {
    pub order: usize,
    pub multianalyticity: f64,
    pub symbol_consistency: f64,
    pub constant_norm: f64,
}

/// Checks the dense assembly against its own symbol.
pub fn fock_report(nc: &NcCharFn) -> Result<FockReport> {
    let dense = nc.assemble();
    let (rs, r) = nc.shape();
    let multianalyticity = multianalyticity_residual(nc.fock(), &dense, rs, r)?;
    let symbol_consistency = residual_norm(&(&dense - nc.symbol().to_dense()));
    Ok(FockReport { order: nc.fock().order(), multianalyticity, symbol_consistency, constant_norm: nc.constant_norm() })
}
