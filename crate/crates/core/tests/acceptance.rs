//! Acceptance criteria. Each test prints one PASS/FAIL line with the measured
//! value and the tolerance it is held to, then asserts.

use std::time::Instant;

use polychar::charfn::{default_horizon, degree_of, Degree};
use polychar::fixtures::{generate, FixtureSpec};
use polychar::verify::{self, run_suite, tol, Suite, SuiteReport};

const SEED: u64 = 20_240_601;

fn line(name: &str, ok: bool, detail: String) {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn failures(rep: &SuiteReport) -> String {
    rep.failures()
        .iter()
        .take(5)
        .map(|f| format!("{} {} {:.3e} {}", f.fixture, f.check, f.value, f.note.clone().unwrap_or_default()))
        .collect::<Vec<_>>()
        .join("; ")
}

#[test]
fn criterion_1_lemma_suite() {
    let start = Instant::now();
    let rep = run_suite(Suite::Lemmas, SEED, 100);
    let secs = start.elapsed().as_secs_f64();
    let fixtures = rep.fixtures();
    let worst = rep.max_value("adjoint_action").max(rep.max_value("orthogonality"));
    let ok = rep.passed() && fixtures == 100 && secs < 60.0;
    line(
        "1 lemma suite",
        ok,
        format!("{fixtures} fixtures, max residual {worst:.3e} (tol {:e}), {secs:.2}s (limit 60s)", tol::LEMMA),
    );
    assert!(ok, "{}", failures(&rep));
}

#[test]
fn criterion_2_decomposition() {
    let rep = run_suite(Suite::Decomposition, SEED, 100);
    let keys = ["orthogonal_decomposition", "partial_isometry_identity", "nilpotent_block", "coisometric_block"];
    let worst = keys.iter().map(|k| rep.max_value(k)).fold(0.0, f64::max);
    let ok = rep.passed() && rep.fixtures() == 100;
    line(
        "2 canonical decomposition",
        ok,
        format!("{} fixtures, max residual {worst:.3e} (tol {:e})", rep.fixtures(), tol::DECOMPOSITION),
    );
    assert!(ok, "{}", failures(&rep));
}

#[test]
fn criterion_3_factorizations() {
    let rep = run_suite(Suite::Factorizations, SEED, 20);
    let coincidence = rep.max_value("coincidence");
    let connectors = rep.max_value("connector_unitarity");
    let jh = rep.max_value("julia_halmos_unitarity");
    let ok = rep.passed() && rep.count_of("coincidence") == 20;
    line(
        "3 factorizations",
        ok,
        format!(
            "{} fixtures, coincidence {coincidence:.3e} (tol {:e}), connectors {connectors:.3e} (tol {:e}), julia-halmos {jh:.3e} over 1000 draws (tol {:e})",
            rep.count_of("coincidence"),
            tol::COINCIDENCE,
            tol::CONNECTOR,
            tol::JULIA_HALMOS
        ),
    );
    assert!(ok, "{}", failures(&rep));
}

#[test]
fn criterion_4_bridge() {
    let rep = run_suite(Suite::Bridge, SEED, 20);
    let abel = rep.max_value("abelianization");
    let comp = rep.max_value("symmetric_compression");
    let ok = rep.passed() && rep.fixtures() == 20;
    line(
        "4 noncommutative to commutative bridge",
        ok,
        format!("{} fixtures, abelianization {abel:.3e}, compression {comp:.3e} (tol {:e})", rep.fixtures(), tol::BRIDGE),
    );
    assert!(ok, "{}", failures(&rep));
}

#[test]
fn criterion_5_truncated_counterexample() {
    let rep = run_suite(Suite::Section7, SEED, 1);
    let coeff_min = rep
        .checks
        .iter()
        .filter(|c| c.check.starts_with("coefficient_"))
        .map(|c| c.value)
        .fold(f64::INFINITY, f64::min);
    let ok = rep.passed() && rep.checks.len() == 10;
    line(
        "5 truncated counterexample D=8",
        ok,
        format!(
            "defect projection {:.3e} (tol {:e}), min coefficient norm {coeff_min:.3e} (> {:e}), {} of {} checks pass",
            rep.max_value("defect_is_projection"),
            tol::PROJECTION,
            tol::NONVANISHING,
            rep.checks.iter().filter(|c| c.passed).count(),
            rep.checks.len()
        ),
    );
    assert!(ok, "{}", failures(&rep));
}

#[test]
fn criterion_6_evaluation_oracle() {
    let rep = run_suite(Suite::Evaluation, SEED, 20);
    let worst = rep.max_value("eval_vs_taylor");
    let ok = rep.passed() && rep.fixtures() == 20;
    line(
        "6 evaluation against Taylor partial sums",
        ok,
        format!(
            "{} fixtures x {} points, max error {worst:.3e} (tol {:e})",
            rep.fixtures(),
            verify::EVAL_POINTS,
            tol::EVALUATION
        ),
    );
    assert!(ok, "{}", failures(&rep));
}

#[test]
fn criterion_7_one_variable() {
    let rep = run_suite(Suite::OneVariable, SEED, 1);
    let mut degrees = Vec::new();
    for m in 1..=3 {
        let t = generate(&FixtureSpec::Jordan1d { m }).unwrap().tuple;
        degrees.push(degree_of(&t, default_horizon(&t)).unwrap().degree);
    }
    let ok = rep.passed() && degrees == [Degree::Exact(1), Degree::Exact(2), Degree::Exact(3)];
    line(
        "7 one variable",
        ok,
        format!(
            "jordan degrees {:?}, |theta(z) - z| for T = 0: {:.3e} (tol {:e})",
            degrees.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
            rep.max_value("zero_is_identity_function"),
            tol::SCALAR
        ),
    );
    assert!(ok, "{}", failures(&rep));
}

#[test]
fn criterion_8_unitary_invariance() {
    let rep = run_suite(Suite::Invariance, SEED, 12);
    let mismatches = rep.max_value("unitary_invariance");
    let ok = rep.passed();
    line(
        "8 unitary invariance",
        ok,
        format!(
            "{} fixtures x {} conjugations, worst mismatch count {mismatches}",
            rep.fixtures(),
            verify::CONJUGATIONS
        ),
    );
    assert!(ok, "{}", failures(&rep));
}
