//! Seeded batteries of numerical identities, grouped into suites. Each check
//! records the residual it measured and the tolerance it was held to.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::charfn::{default_horizon, degree_of, gleason_regular, CharFn, Degree};
use crate::decomp::{canonical_with_degree, lemma_adjoint_action_residual, lemma_orthogonality_residual, phi_default};
use crate::error::Result;
use crate::factor::{factorize3, julia_halmos, BlockSplit};
use crate::fixtures::{generate, random_contraction, random_unitary, BlockKind, Fixture, FixtureSpec};
use crate::fock::{abelianization_residual, fock_report, nc_charfn, symmetric_compression};
use crate::opcore::{c, identity, op_norm, unitary_check, C64};
use crate::tuples::{classify, defects, validate, MultiIndex, OperatorTuple};

/// Tolerances of the batteries.
pub mod tol {
    pub const LEMMA: f64 = 1e-9;
    pub const DECOMPOSITION: f64 = 1e-10;
    pub const COINCIDENCE: f64 = 1e-8;
    pub const CONNECTOR: f64 = 1e-10;
    pub const JULIA_HALMOS: f64 = 1e-12;
    pub const BRIDGE: f64 = 1e-9;
    pub const EVALUATION: f64 = 1e-8;
    pub const PROJECTION: f64 = 1e-12;
    pub const NONVANISHING: f64 = 1e-6;
    pub const SCALAR: f64 = 1e-12;
    pub const TRUNCATION: f64 = 1e-13;
}

/// Fock truncation order used by the suites.
pub const SUITE_ORDER: usize = 4;
/// Number of terms in the Taylor partial sum compared with evaluation.
pub const EVAL_TERMS: usize = 30;
/// Radius bound of the evaluation points.
pub const EVAL_RADIUS: f64 = 0.5;
pub const EVAL_POINTS: usize = 20;
pub const CONJUGATIONS: usize = 50;
pub const SECTION7_TOP: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Passes when the measured value is at most the tolerance.
    AtMost,
    /// Passes when the measured value exceeds the tolerance.
    Exceeds,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub suite: String,
    pub check: String,
    pub fixture: String,
    pub value: f64,
    pub tol: f64,
    pub relation: Relation,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckResult {
    fn new(suite: &str, check: &str, fixture: &str, value: f64, tol: f64, relation: Relation) -> Self {
        let passed = match relation {
            Relation::AtMost => value <= tol,
            Relation::Exceeds => value > tol,
        };
        CheckResult {
            suite: suite.into(),
            check: check.into(),
            fixture: fixture.into(),
            value,
            tol,
            relation,
            passed,
            note: None,
        }
    }

    fn at_most(suite: &str, check: &str, fixture: &str, value: f64, tol: f64) -> Self {
        Self::new(suite, check, fixture, value, tol, Relation::AtMost)
    }

    fn exceeds(suite: &str, check: &str, fixture: &str, value: f64, tol: f64) -> Self {
        Self::new(suite, check, fixture, value, tol, Relation::Exceeds)
    }

    /// A yes/no check: value 0 when it holds, 1 otherwise.
    fn flag(suite: &str, check: &str, fixture: &str, holds: bool, note: String) -> Self {
        let mut r = Self::at_most(suite, check, fixture, if holds { 0.0 } else { 1.0 }, 0.0);
        r.note = Some(note);
        r
    }

    fn error(suite: &str, check: &str, fixture: &str, err: impl fmt::Display) -> Self {
        let mut r = Self::at_most(suite, check, fixture, f64::INFINITY, 0.0);
        r.passed = false;
        r.note = Some(format!("error: {err}"));
        r
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub count: usize,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// Largest value among `AtMost` checks with the given name.
    pub fn max_value(&self, check: &str) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.check == check && c.relation == Relation::AtMost)
            .map(|c| c.value)
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self, check: &str) -> f64 {
        self.checks.iter().filter(|c| c.check == check).map(|c| c.value).fold(f64::INFINITY, f64::min)
    }

    pub fn count_of(&self, check: &str) -> usize {
        self.checks.iter().filter(|c| c.check == check).count()
    }

    pub fn fixtures(&self) -> usize {
        let mut names: Vec<&str> = self.checks.iter().map(|c| c.fixture.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        names.len()
    }

    fn merge(&mut self, other: SuiteReport) {
        self.checks.extend(other.checks);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Lemmas,
    Decomposition,
    Factorizations,
    Bridge,
    Evaluation,
    Section7,
    OneVariable,
    Invariance,
    All,
}

impl Suite {
    pub const EACH: [Suite; 8] = [
        Suite::Lemmas,
        Suite::Decomposition,
        Suite::Factorizations,
        Suite::Bridge,
        Suite::Evaluation,
        Suite::Section7,
        Suite::OneVariable,
        Suite::Invariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemmas => "lemmas",
            Suite::Decomposition => "decomposition",
            Suite::Factorizations => "factorizations",
            Suite::Bridge => "bridge",
            Suite::Evaluation => "evaluation",
            Suite::Section7 => "section7",
            Suite::OneVariable => "one-variable",
            Suite::Invariance => "invariance",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Suite::EACH
            .iter()
            .chain(std::iter::once(&Suite::All))
            .find(|x| x.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown suite '{s}'"))
    }
}

/// Short human-readable name of a fixture spec.
pub fn describe(spec: &FixtureSpec) -> String {
    match spec {
        FixtureSpec::NilpotentPoly { n, m } => format!("nilpotent_poly(n={n},m={m})"),
        FixtureSpec::SphericalCoiso { n, d, commuting, seed } => {
            format!("spherical_coiso(n={n},d={d},commuting={commuting},seed={seed})")
        }
        FixtureSpec::BlockComposite { n, blocks, commuting, seed, .. } => {
            let parts: Vec<String> = blocks
                .iter()
                .map(|b| match b {
                    BlockKind::Nilpotent { m } => format!("nil{m}"),
                    BlockKind::Coisometry { d } => format!("coiso{d}"),
                    BlockKind::Zero { d } => format!("zero{d}"),
                    BlockKind::RandomCommuting { d } => format!("comm{d}"),
                    BlockKind::RandomContraction { d } => format!("rand{d}"),
                })
                .collect();
            format!("block_composite(n={n},[{}],commuting={commuting},seed={seed})", parts.join(","))
        }
        FixtureSpec::Section7 { top_degree } => format!("section7(D={top_degree})"),
        FixtureSpec::RandomCommuting { n, d, seed } => format!("random_commuting(n={n},d={d},seed={seed})"),
        FixtureSpec::RandomNoncommuting { n, d, seed } => format!("random_noncommuting(n={n},d={d},seed={seed})"),
        FixtureSpec::Jordan1d { m } => format!("jordan_1d(m={m})"),
    }
}

/// A fixture with its degree at the default horizon.
#[derive(Clone, Debug)]
pub struct Sample {
    pub label: String,
    pub fixture: Fixture,
    pub degree: Degree,
}

/// Noncommuting fixtures have no commutative degree; they are recorded as
/// exceeding the horizon.
fn sample(spec: FixtureSpec) -> Result<Sample> {
    let fixture = generate(&spec)?;
    let degree = if validate(&fixture.tuple).commuting {
        degree_of(&fixture.tuple, default_horizon(&fixture.tuple))?.degree
    } else {
        Degree::ExceedsHorizon
    };
    Ok(Sample { label: describe(&spec), fixture, degree })
}

fn pick<T: Clone, R: Rng>(rng: &mut R, items: &[T]) -> T {
    items[rng.random_range(0..items.len())].clone()
}

/// Nilpotent polynomial shifts, commuting spherical coisometries and
/// commuting 2-block composites with `n ∈ {2, 3}`, dimension `≤ 8` and a
/// certified degree.
pub fn lemma_family(seed: u64, count: usize) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs = Vec::new();
    let mut i = 0usize;
    let mut seen = std::collections::BTreeSet::new();
    while specs.len() < count * 4 && i < count * 40 {
        let n: usize = pick(&mut rng, &[2, 3]);
        let nil_ms: &[usize] = if n == 2 { &[1, 2, 3] } else { &[1, 2] };
        let spec = match i % 3 {
            0 => FixtureSpec::NilpotentPoly { n, m: pick(&mut rng, nil_ms) },
            1 => FixtureSpec::SphericalCoiso { n, d: rng.random_range(1..=4), commuting: true, seed: rng.random() },
            _ => {
                let m = pick(&mut rng, &[1, 2]);
                let nil_dim = crate::fixtures::gen_nilpotent_poly(n, m)?.dim();
                let other = rng.random_range(1..=(8 - nil_dim).min(3));
                let second = if rng.random_bool(0.5) {
                    BlockKind::Zero { d: other }
                } else {
                    BlockKind::Coisometry { d: other }
                };
                let blocks = if rng.random_bool(0.5) {
                    vec![BlockKind::Nilpotent { m }, second]
                } else {
                    vec![second, BlockKind::Nilpotent { m }]
                };
                FixtureSpec::BlockComposite { n, blocks, corner_scale: 0.8, commuting: true, seed: rng.random() }
            }
        };
        i += 1;
        let key = describe(&spec);
        if seen.insert(key) {
            specs.push(spec);
        }
    }
    let mut out = Vec::new();
    for spec in specs {
        if out.len() == count {
            break;
        }
        let s = sample(spec)?;
        if s.degree.exact().is_some() && s.fixture.tuple.dim() <= 8 {
            out.push(s);
        }
    }
    Ok(out)
}

/// Upper-triangular 3-block fixtures: commuting ones with nonzero corners
/// and noncommuting ones with random corners.
pub fn factor_family(seed: u64, count: usize) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..count {
        let n: usize = pick(&mut rng, &[2, 3]);
        let blocks = match i % 4 {
            0 => vec![BlockKind::Zero { d: rng.random_range(1..=2) }, BlockKind::Nilpotent { m: 2 }, BlockKind::RandomCommuting { d: 2 }],
            1 => vec![BlockKind::RandomCommuting { d: 2 }, BlockKind::Nilpotent { m: 2 }, BlockKind::Zero { d: rng.random_range(1..=2) }],
            2 => vec![
                BlockKind::RandomContraction { d: 2 },
                BlockKind::RandomContraction { d: rng.random_range(1..=2) },
                BlockKind::RandomContraction { d: 2 },
            ],
            _ => vec![BlockKind::RandomContraction { d: 1 }, BlockKind::Nilpotent { m: 2 }, BlockKind::RandomContraction { d: 2 }],
        };
        let commuting = i % 4 < 2;
        let spec = FixtureSpec::BlockComposite { n, blocks, corner_scale: 0.8, commuting, seed: rng.random() };
        let fixture = generate(&spec)?;
        out.push(Sample { label: describe(&spec), fixture, degree: Degree::ExceedsHorizon });
    }
    Ok(out)
}

/// Commuting fixtures of dimension `≤ 5`.
pub fn commuting_family(seed: u64, count: usize) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..count {
        let n: usize = pick(&mut rng, &[2, 3]);
        let spec = match i % 4 {
            0 | 1 => FixtureSpec::RandomCommuting { n, d: rng.random_range(2..=5), seed: rng.random() },
            2 => FixtureSpec::NilpotentPoly { n, m: 2 },
            _ => FixtureSpec::BlockComposite {
                n,
                blocks: vec![BlockKind::Zero { d: 1 }, BlockKind::Nilpotent { m: 2 }],
                corner_scale: 0.8,
                commuting: true,
                seed: rng.random(),
            },
        };
        let fixture = generate(&spec)?;
        // Unseeded specs repeat, so the position keeps labels distinct.
        out.push(Sample { label: format!("#{i} {}", describe(&spec)), fixture, degree: Degree::ExceedsHorizon });
    }
    Ok(out)
}

/// Fixtures whose invariants are compared under unitary conjugation.
pub fn invariance_family(seed: u64, count: usize) -> Result<Vec<Sample>> {
    let mut out = lemma_family(seed, count.saturating_sub(count / 4))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let extra = [
        FixtureSpec::Section7 { top_degree: 4 },
        FixtureSpec::Jordan1d { m: 3 },
        FixtureSpec::RandomCommuting { n: 2, d: 3, seed: rng.random() },
        FixtureSpec::RandomNoncommuting { n: 2, d: 3, seed: rng.random() },
    ];
    for spec in extra.into_iter().cycle().take(count - out.len().min(count)) {
        out.push(sample(spec)?);
    }
    Ok(out)
}

fn lemma_checks(s: &Sample) -> Vec<CheckResult> {
    let suite = "lemmas";
    let t = &s.fixture.tuple;
    let Some(m) = s.degree.exact() else {
        return vec![CheckResult::error(suite, "degree", &s.label, "degree not certified")];
    };
    let mut out = Vec::new();
    match lemma_adjoint_action_residual(t, m, 3) {
        Ok(v) => out.push(CheckResult::at_most(suite, "adjoint_action", &s.label, v, tol::LEMMA)),
        Err(e) => out.push(CheckResult::error(suite, "adjoint_action", &s.label, e)),
    }
    match lemma_orthogonality_residual(t, m, 3) {
        Ok(v) => out.push(CheckResult::at_most(suite, "orthogonality", &s.label, v, tol::LEMMA)),
        Err(e) => out.push(CheckResult::error(suite, "orthogonality", &s.label, e)),
    }
    out
}

/// The checks of the canonical decomposition; `nilpotent_block` is the
/// largest `‖N^α‖` with `|α| = m`.
fn decomposition_checks(s: &Sample) -> Vec<CheckResult> {
    let suite = "decomposition";
    let Some(m) = s.degree.exact() else {
        return vec![CheckResult::error(suite, "degree", &s.label, "degree not certified")];
    };
    match canonical_with_degree(&s.fixture.tuple, m) {
        Ok(dec) => ["orthogonal_decomposition", "partial_isometry_identity", "nilpotent_block", "coisometric_block", "upper_triangularity"]
            .iter()
            .map(|k| {
                CheckResult::at_most(suite, k, &s.label, dec.residuals[*k], tol::DECOMPOSITION)
                    .with_note(format!("dims {:?}, m = {m}", dec.dims()))
            })
            .collect(),
        Err(e) => vec![CheckResult::error(suite, "canonical", &s.label, e)],
    }
}

fn factor_checks(s: &Sample) -> Vec<CheckResult> {
    let suite = "factorizations";
    let split = BlockSplit::new(s.fixture.block_sizes.clone());
    match factorize3(&s.fixture.tuple, &split, SUITE_ORDER) {
        Ok(cert) => {
            let mut out = vec![
                CheckResult::at_most(suite, "coincidence", &s.label, cert.residual, tol::COINCIDENCE),
                CheckResult::at_most(suite, "connector_unitarity", &s.label, cert.max_connector_residual(), tol::CONNECTOR),
            ];
            if let Some(r) = cert.compressed_residual {
                out.push(CheckResult::at_most(suite, "compressed_coincidence", &s.label, r, tol::COINCIDENCE));
            }
            out
        }
        Err(e) => vec![CheckResult::error(suite, "coincidence", &s.label, e)],
    }
}

fn julia_halmos_checks(seed: u64, draws: usize) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..draws {
        let p = rng.random_range(1..=5);
        let q = rng.random_range(1..=5);
        let s: f64 = rng.random_range(0.0..1.0);
        let l = random_contraction(p, q, s, &mut rng);
        match julia_halmos(&l, 1e-9) {
            Ok(j) => {
                let rep = unitary_check(&j.full, 0.0);
                worst = worst.max(rep.isometry_residual.max(rep.coisometry_residual)).max(j.unitarity_residual);
            }
            Err(_) => failures += 1,
        }
    }
    let label = format!("{draws} random contractions");
    let mut r = CheckResult::at_most("factorizations", "julia_halmos_unitarity", &label, worst, tol::JULIA_HALMOS);
    if failures > 0 {
        r.passed = false;
        r.note = Some(format!("{failures} draws rejected"));
    }
    vec![r]
}

fn bridge_checks(s: &Sample) -> Vec<CheckResult> {
    let suite = "bridge";
    let t = &s.fixture.tuple;
    let mut out = Vec::new();
    match abelianization_residual(t, SUITE_ORDER) {
        Ok(v) => out.push(CheckResult::at_most(suite, "abelianization", &s.label, v, tol::BRIDGE)),
        Err(e) => out.push(CheckResult::error(suite, "abelianization", &s.label, e)),
    }
    match nc_charfn(t, SUITE_ORDER).and_then(|nc| symmetric_compression(&nc)) {
        Ok(comp) => {
            out.push(CheckResult::at_most(suite, "symmetric_compression", &s.label, comp.charfn_residual, tol::BRIDGE));
            out.push(CheckResult::at_most(suite, "symmetrizer", &s.label, comp.projector_residual, tol::TRUNCATION));
        }
        Err(e) => out.push(CheckResult::error(suite, "symmetric_compression", &s.label, e)),
    }
    out
}

/// Seeded points with `‖z‖ ≤ radius`.
pub fn ball_points(n: usize, count: usize, radius: f64, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let raw: Vec<C64> = (0..n).map(|_| crate::fixtures::complex_gaussian(&mut rng)).collect();
            let norm = raw.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
            let r = radius * rng.random_range(0.0f64..=1.0);
            raw.iter().map(|w| w * (r / norm.max(f64::MIN_POSITIVE))).collect()
        })
        .collect()
}

fn evaluation_checks(s: &Sample, seed: u64) -> Vec<CheckResult> {
    let suite = "evaluation";
    let t = &s.fixture.tuple;
    let run = || -> Result<f64> {
        let cf = CharFn::new(t)?;
        let table = cf.taylor(EVAL_TERMS)?;
        let mut worst = 0.0f64;
        for z in ball_points(t.n(), EVAL_POINTS, EVAL_RADIUS, seed) {
            worst = worst.max(op_norm(&(cf.eval(&z)? - table.partial_sum(&z, EVAL_TERMS))));
        }
        Ok(worst)
    };
    match run() {
        Ok(v) => vec![CheckResult::at_most(suite, "eval_vs_taylor", &s.label, v, tol::EVALUATION)],
        Err(e) => vec![CheckResult::error(suite, "eval_vs_taylor", &s.label, e)],
    }
}

/// The truncated counterexample: defect projection, flags, nonvanishing
/// coefficients, undetermined degree and failed regularity.
pub fn section7_checks(top: usize, seed: u64) -> Vec<CheckResult> {
    let suite = "section7";
    let spec = FixtureSpec::Section7 { top_degree: top };
    let label = describe(&spec);
    let run = || -> Result<Vec<CheckResult>> {
        let fx = generate(&spec)?;
        let t = &fx.tuple;
        let d = t.dim();
        let mut out = Vec::new();
        // The degree-2 monomials are the last three basis vectors.
        let mut p2 = crate::opcore::zeros(d, d);
        for k in d - 3..d {
            p2[(k, k)] = c(1.0, 0.0);
        }
        let dp = defects(t)?;
        out.push(CheckResult::at_most(suite, "defect_is_projection", &label, op_norm(&(&dp.d_tstar * &dp.d_tstar - p2)), tol::PROJECTION));
        let cl = classify(t);
        out.push(CheckResult::flag(suite, "pure", &label, cl.pure, format!("spectral radius {:.3e}", cl.spectral_radius)));
        out.push(CheckResult::flag(
            suite,
            "row_partial_isometry",
            &label,
            cl.row_partial_isometry,
            format!("residual {:.3e}", cl.partial_isometry_residual),
        ));
        let cf = CharFn::new(t)?;
        for k in 1..=5u32 {
            let v = op_norm(&cf.coeff(&MultiIndex::new(vec![k, 0]))?);
            out.push(CheckResult::exceeds(suite, &format!("coefficient_({k},0)"), &label, v, tol::NONVANISHING));
        }
        let rep = degree_of(t, 6)?;
        out.push(CheckResult::flag(
            suite,
            "degree_exceeds_horizon_6",
            &label,
            rep.degree == Degree::ExceedsHorizon,
            format!("degree {}", rep.degree),
        ));
        let g = gleason_regular(t, 0.1, 8, seed)?;
        out.push(CheckResult::flag(
            suite,
            "not_regular",
            &label,
            !g.regular(),
            format!("rank at 0 = {}, dim N0 = {}", g.r0, g.n0_dim),
        ));
        Ok(out)
    };
    run().unwrap_or_else(|e| vec![CheckResult::error(suite, "section7", &label, e)])
}

/// Jordan blocks of order 1..=3 have degree exactly their order; the scalar
/// zero has `θ(z) = z`.
pub fn one_variable_checks(seed: u64) -> Vec<CheckResult> {
    let suite = "one-variable";
    let mut out = Vec::new();
    for m in 1..=3 {
        let spec = FixtureSpec::Jordan1d { m };
        let label = describe(&spec);
        match generate(&spec).and_then(|fx| degree_of(&fx.tuple, default_horizon(&fx.tuple))) {
            Ok(rep) => out.push(CheckResult::flag(
                suite,
                "degree",
                &label,
                rep.degree == Degree::Exact(m),
                format!("degree {}", rep.degree),
            )),
            Err(e) => out.push(CheckResult::error(suite, "degree", &label, e)),
        }
    }
    let zero = OperatorTuple::zero(1, 1);
    let run = || -> Result<f64> {
        let cf = CharFn::new(&zero)?;
        let mut worst: f64 = 0.0;
        for z in ball_points(1, EVAL_POINTS, 0.9, seed) {
            worst = worst.max(op_norm(&(cf.eval(&z)? - identity(1) * z[0])));
        }
        Ok(worst)
    };
    match run() {
        Ok(v) => out.push(CheckResult::at_most(suite, "zero_is_identity_function", "scalar_zero", v, tol::SCALAR)),
        Err(e) => out.push(CheckResult::error(suite, "zero_is_identity_function", "scalar_zero", e)),
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
struct Invariants {
    phi: Option<String>,
    degree: Option<Degree>,
    pure: bool,
    spherical_coisometry: bool,
    row_partial_isometry: bool,
    nilpotent_order: Option<usize>,
}

fn invariants(t: &OperatorTuple) -> Result<Invariants> {
    let commuting = validate(t).commuting;
    let cl = classify(t);
    Ok(Invariants {
        phi: if commuting { Some(phi_default(t)?.to_string()) } else { None },
        degree: if commuting { Some(degree_of(t, default_horizon(t))?.degree) } else { None },
        pure: cl.pure,
        spherical_coisometry: cl.spherical_coisometry,
        row_partial_isometry: cl.row_partial_isometry,
        nilpotent_order: cl.nilpotent_order,
    })
}

fn invariance_checks(s: &Sample, seed: u64) -> Vec<CheckResult> {
    let suite = "invariance";
    let t = &s.fixture.tuple;
    let run = || -> Result<CheckResult> {
        let base = invariants(t)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mismatches = 0usize;
        let mut first = None;
        for _ in 0..CONJUGATIONS {
            let u = random_unitary(t.dim(), &mut rng);
            let got = invariants(&t.conjugate(&u))?;
            if got != base {
                mismatches += 1;
                first.get_or_insert(format!("{got:?}"));
            }
        }
        let note = match first {
            None => format!("{CONJUGATIONS} conjugations agree with {base:?}"),
            Some(g) => format!("base {base:?}, first mismatch {g}"),
        };
        Ok(CheckResult::at_most(suite, "unitary_invariance", &s.label, mismatches as f64, 0.0).with_note(note))
    };
    vec![run().unwrap_or_else(|e| CheckResult::error(suite, "unitary_invariance", &s.label, e))]
}

fn per_sample<F>(samples: &[Sample], f: F) -> Vec<CheckResult>
where
    F: Fn(usize, &Sample) -> Vec<CheckResult> + Sync,
{
    let nested: Vec<Vec<CheckResult>> = samples.par_iter().enumerate().map(|(i, s)| f(i, s)).collect();
    nested.into_iter().flatten().collect()
}

fn family_error(suite: &str, e: impl fmt::Display) -> Vec<CheckResult> {
    vec![CheckResult::error(suite, "fixture_generation", "family", e)]
}

/// Runs one suite (or all of them) with `count` fixtures per family.
pub fn run_suite(suite: Suite, seed: u64, count: usize) -> SuiteReport {
    let mut report = SuiteReport { suite: suite.name().into(), seed, count, checks: Vec::new() };
    if suite == Suite::All {
        for s in Suite::EACH {
            report.merge(run_suite(s, seed, count));
        }
        return report;
    }
    let derived = |k: u64| seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k);
    report.checks = match suite {
        Suite::Lemmas => match lemma_family(seed, count) {
            Ok(s) => per_sample(&s, |_, x| lemma_checks(x)),
            Err(e) => family_error("lemmas", e),
        },
        Suite::Decomposition => match lemma_family(seed, count) {
            Ok(s) => per_sample(&s, |_, x| decomposition_checks(x)),
            Err(e) => family_error("decomposition", e),
        },
        Suite::Factorizations => {
            let mut out = match factor_family(seed, count) {
                Ok(s) => per_sample(&s, |_, x| factor_checks(x)),
                Err(e) => family_error("factorizations", e),
            };
            out.extend(julia_halmos_checks(derived(1), 50 * count.max(1)));
            out
        }
        Suite::Bridge => match commuting_family(seed, count) {
            Ok(s) => per_sample(&s, |_, x| bridge_checks(x)),
            Err(e) => family_error("bridge", e),
        },
        Suite::Evaluation => match commuting_family(seed, count) {
            Ok(s) => per_sample(&s, |i, x| evaluation_checks(x, derived(100 + i as u64))),
            Err(e) => family_error("evaluation", e),
        },
        Suite::Section7 => section7_checks(SECTION7_TOP, derived(2)),
        Suite::OneVariable => one_variable_checks(derived(3)),
        Suite::Invariance => match invariance_family(seed, count) {
            Ok(s) => per_sample(&s, |i, x| invariance_checks(x, derived(1000 + i as u64))),
            Err(e) => family_error("invariance", e),
        },
        Suite::All => unreachable!(),
    };
    report
}

/// Every applicable battery on a single tuple. Commutativity and the row
/// contraction condition are reported as checks of their own, so a broken
/// fixture fails by name.
pub fn run_on_tuple(t: &OperatorTuple, label: &str, seed: u64) -> SuiteReport {
    let suite = "fixture";
    let mut checks = Vec::new();
    let diag = validate(t);
    checks.push(CheckResult::at_most(suite, "row_contraction", label, diag.row_contraction_residual.max(0.0), t.tol()));
    checks.push(CheckResult::at_most(suite, "commutation", label, diag.commutation_residual, t.tol()));
    if !diag.row_contraction {
        return SuiteReport { suite: suite.into(), seed, count: 1, checks };
    }
    if let Ok(nc) = nc_charfn(t, SUITE_ORDER) {
        match fock_report(&nc) {
            Ok(rep) => {
                checks.push(CheckResult::at_most(suite, "multianalyticity", label, rep.multianalyticity, tol::TRUNCATION));
                checks.push(CheckResult::at_most(suite, "symbol_consistency", label, rep.symbol_consistency, tol::TRUNCATION));
                checks.push(CheckResult::new(suite, "purely_contractive", label, rep.constant_norm, 1.0, Relation::AtMost));
            }
            Err(e) => checks.push(CheckResult::error(suite, "fock", label, e)),
        }
    }
    if diag.commuting {
        match degree_of(t, default_horizon(t)) {
            Ok(rep) => {
                let s = Sample { label: label.into(), fixture: plain_fixture(t), degree: rep.degree };
                if rep.degree.exact().is_some() {
                    checks.extend(lemma_checks(&s));
                    checks.extend(decomposition_checks(&s));
                }
                checks.extend(bridge_checks(&s));
                checks.extend(evaluation_checks(&s, seed));
            }
            Err(e) => checks.push(CheckResult::error(suite, "degree", label, e)),
        }
    }
    SuiteReport { suite: suite.into(), seed, count: 1, checks }
}

fn plain_fixture(t: &OperatorTuple) -> Fixture {
    Fixture {
        spec: FixtureSpec::RandomCommuting { n: t.n(), d: t.dim(), seed: 0 },
        tuple: t.clone(),
        block_sizes: vec![t.dim()],
        corners: Vec::new(),
        truth: Default::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::EACH {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn families_are_deterministic() {
        let a = lemma_family(3, 6).unwrap();
        let b = lemma_family(3, 6).unwrap();
        assert_eq!(a.len(), 6);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.fixture.tuple.mats(), y.fixture.tuple.mats());
        }
    }

    #[test]
    fn small_lemma_suite_passes() {
        let rep = run_suite(Suite::Lemmas, 1, 6);
        assert!(rep.passed(), "{:?}", rep.failures());
    }

    #[test]
    fn broken_commutator_fails_by_name() {
        let t = crate::fixtures::gen_nilpotent_poly(2, 2).unwrap();
        let mut mats = t.mats().to_vec();
        mats[0][(0, 1)] += c(0.05, 0.0);
        let broken = OperatorTuple::with_default_tol(mats).unwrap();
        let rep = run_on_tuple(&broken, "broken", 0);
        assert!(rep.failures().iter().any(|f| f.check == "commutation"));
    }

    #[test]
    fn invariance_family_includes_noncommuting() {
        let fam = invariance_family(1, 20).unwrap();
        assert_eq!(fam.len(), 20);
        assert!(fam.iter().any(|s| !validate(&s.fixture.tuple).commuting));
    }

    #[test]
    fn ball_points_stay_inside() {
        for z in ball_points(3, 50, 0.5, 9) {
            assert!(z.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt() <= 0.5 + 1e-15);
        }
    }
}
