//! The subcommands. Each returns the `results` section of a report, whether
//! every check passed, and the tolerances it used.

use std::collections::BTreeMap;
use std::path::Path;

use polychar::charfn::{default_horizon, degree_of, Degree};
use polychar::decomp::{canonical, phi};
use polychar::factor::{factorize2, factorize3, g_form, BlockSplit, COINCIDENCE_TOL};
use polychar::fixtures::{generate, BlockKind, FixtureSpec, GroundTruth};
use polychar::fock::{fock_report, nc_charfn};
use polychar::tuples::{classify, validate, OperatorTuple};
use polychar::verify::{run_on_tuple, run_suite, tol, CheckResult, Relation, Suite, SuiteReport};
use serde_json::{json, Value};

use crate::exit::CliError;
use crate::fixture_file::{self, FixtureFile};
use crate::report::Checked;

pub struct Outcome {
    pub results: Value,
    pub passed: bool,
    pub tolerances: BTreeMap<String, f64>,
    /// Raw inputs hashed into the report digest.
    pub inputs: Vec<Vec<u8>>,
    /// Exit code to use even though a report was produced.
    pub code: Option<u8>,
}

fn tolerances(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub struct Loaded {
    pub file: FixtureFile,
    pub bytes: Vec<u8>,
    pub tuple: OperatorTuple,
}

pub fn load(path: &Path, tol: f64) -> Result<Loaded, CliError> {
    let (file, bytes) = fixture_file::read(path)?;
    let tuple = file.to_tuple(tol)?;
    Ok(Loaded { file, bytes, tuple })
}

fn matches<T: PartialEq + serde::Serialize>(expected: &Option<T>, computed: T) -> Option<Value> {
    expected.as_ref().map(|e| json!({ "expected": e, "computed": computed, "match": *e == computed }))
}

/// Compares the embedded annotations with what was computed; `None` entries
/// are not annotated and are skipped.
fn annotations(
    truth: &GroundTruth,
    degree: Option<Degree>,
    cl: &polychar::tuples::Classification,
    hc: Option<usize>,
) -> (Value, bool) {
    let mut map = serde_json::Map::new();
    let mut all = true;
    let mut add = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            all &= v["match"].as_bool().unwrap_or(false);
            map.insert(k.into(), v);
        }
    };
    add("degree", matches(&truth.degree.map(Some), degree.and_then(Degree::exact)));
    add("nilpotent_order", matches(&truth.nilpotent_order.map(Some), cl.nilpotent_order));
    add("pure", matches(&truth.pure, cl.pure));
    add("partial_isometry", matches(&truth.partial_isometry, cl.row_partial_isometry));
    add("spherical_coisometry", matches(&truth.spherical_coisometry, cl.spherical_coisometry));
    if let Some(hc) = hc {
        add("hc_dim", matches(&truth.hc_dim, hc));
    }
    (Value::Object(map), all)
}

pub fn analyze(path: &Path, tol_value: f64, horizon: Option<usize>) -> Result<Outcome, CliError> {
    let Loaded { file, bytes, tuple: t } = load(path, tol_value)?;
    let diag = validate(&t);
    let cl = classify(&t);
    let mut results = json!({
        "n": t.n(),
        "dim": t.dim(),
        "diagnostics": diag,
        "classification": cl,
    });
    let mut tols = tolerances(&[("tol", tol_value)]);
    let inputs = vec![bytes];
    if !diag.row_contraction || !diag.commuting {
        let reason = if diag.row_contraction { "tuple is not commuting" } else { "tuple is not a row contraction" };
        results["error"] = json!(reason);
        if diag.row_contraction {
            // The noncommutative characteristic function is still defined.
            let rep = nc_charfn(&t, 4).and_then(|nc| fock_report(&nc))?;
            results["fock"] = json!(rep);
        }
        return Ok(Outcome { results, passed: false, tolerances: tols, inputs, code: Some(crate::exit::PRECONDITION) });
    }
    let horizon = horizon.unwrap_or_else(|| default_horizon(&t));
    let deg = degree_of(&t, horizon)?;
    let phi = phi(&t, horizon)?;
    tols.insert("degree_threshold".into(), deg.threshold);
    results["horizon"] = json!(horizon);
    results["degree"] = json!(deg.degree);
    results["degree_report"] = json!({
        "witness": deg.witness,
        "witness_norm": deg.witness_norm,
        "max_tail_norm": deg.max_tail_norm,
    });
    results["phi"] = json!({ "p": phi.p, "m": phi.m, "q": phi.q, "display": phi.to_string() });
    results["hc_dim"] = json!(phi.q);
    results["coefficient_norms"] = json!(deg.band_norms);
    let mut passed = true;
    if let Some(truth) = &file.expected {
        let (ann, ok) = annotations(truth, Some(deg.degree), &cl, Some(phi.q));
        results["annotations"] = ann;
        passed = ok;
    }
    Ok(Outcome { results, passed, tolerances: tols, inputs, code: None })
}

pub fn decompose(path: &Path, tol_value: f64, horizon: Option<usize>) -> Result<Outcome, CliError> {
    let Loaded { bytes, tuple: t, .. } = load(path, tol_value)?;
    let horizon = horizon.unwrap_or_else(|| default_horizon(&t));
    let dec = canonical(&t, horizon)?;
    let [m, nil, cdim] = dec.dims();
    let residuals: BTreeMap<&String, Checked> =
        dec.residuals.iter().map(|(k, v)| (k, Checked::at_most(*v, tol::DECOMPOSITION))).collect();
    let passed = residuals.values().all(|c| c.passed);
    let results = json!({
        "horizon": horizon,
        "degree_used": dec.degree_used,
        "dims": { "m": m, "nil": nil, "c": cdim },
        "residuals": residuals,
    });
    Ok(Outcome {
        results,
        passed,
        tolerances: tolerances(&[("tol", tol_value), ("decomposition", tol::DECOMPOSITION)]),
        inputs: vec![bytes],
        code: None,
    })
}

pub fn parse_split(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| CliError::parse(format!("bad split '{s}': {e}"))))
        .collect()
}

pub fn factorize(path: &Path, tol_value: f64, split: Option<&str>, order: usize, gform: bool) -> Result<Outcome, CliError> {
    let Loaded { file, bytes, tuple: t } = load(path, tol_value)?;
    let boundaries = match split {
        Some(s) => parse_split(s)?,
        None => {
            let sizes = file
                .provenance
                .as_ref()
                .map(|p| p.block_sizes.clone())
                .filter(|s| s.len() >= 2)
                .ok_or_else(|| CliError::parse("no --split given and the fixture records no block sizes"))?;
            sizes.iter().scan(0, |acc, s| { *acc += s; Some(*acc) }).take(sizes.len() - 1).collect()
        }
    };
    let split = BlockSplit::from_boundaries(t.dim(), &boundaries).map_err(|e| CliError::parse(e.to_string()))?;
    let cert = match (boundaries.len(), gform) {
        (1, false) => factorize2(&t, &split, order)?,
        (2, false) => factorize3(&t, &split, order)?,
        (2, true) => {
            let g = g_form(&t, &split, order)?;
            let mut results = json!({
                "boundaries": boundaries,
                "g_form": {
                    "residual": Checked::at_most(g.residual, COINCIDENCE_TOL),
                    "g1_coisometry": Checked::at_most(g.g1_coisometry_residual, tol::CONNECTOR),
                    "g2_isometry": Checked::at_most(g.g2_isometry_residual, tol::CONNECTOR),
                    "g2_initial_dim": g.g2_initial_dim,
                    "center_degree": g.center_degree,
                },
            });
            let cert = g.certificate.summary();
            let passed = g.residual <= COINCIDENCE_TOL
                && g.g1_coisometry_residual <= tol::CONNECTOR
                && g.g2_isometry_residual <= tol::CONNECTOR
                && cert.connectors.iter().all(|c| c.unitarity_residual <= tol::CONNECTOR);
            results["certificate"] = json!(cert);
            return Ok(Outcome {
                results,
                passed,
                tolerances: tolerances(&[("tol", tol_value), ("coincidence", COINCIDENCE_TOL), ("connector", tol::CONNECTOR)]),
                inputs: vec![bytes, order.to_le_bytes().to_vec(), boundaries.iter().flat_map(|b| b.to_le_bytes()).collect()],
                code: None,
            });
        }
        (_, true) => return Err(CliError::parse("--g-form needs a split into three blocks")),
        _ => return Err(CliError::parse("--split takes one or two boundaries")),
    };
    let coincidence = Checked::at_most(cert.residual, COINCIDENCE_TOL);
    let connectors = Checked::at_most(cert.max_connector_residual(), tol::CONNECTOR);
    let passed = coincidence.passed && connectors.passed;
    let results = json!({
        "boundaries": boundaries,
        "order": order,
        "coincidence": coincidence,
        "connector_unitarity": connectors,
        "certificate": cert.summary(),
    });
    Ok(Outcome {
        results,
        passed,
        tolerances: tolerances(&[("tol", tol_value), ("coincidence", COINCIDENCE_TOL), ("connector", tol::CONNECTOR)]),
        inputs: vec![bytes, order.to_le_bytes().to_vec(), boundaries.iter().flat_map(|b| b.to_le_bytes()).collect()],
        code: None,
    })
}

/// Worst value per (suite, check), with counts of failures.
fn summarize(rep: &SuiteReport) -> Value {
    let mut groups: BTreeMap<(String, String), Vec<&CheckResult>> = BTreeMap::new();
    for c in &rep.checks {
        // Numbered coefficient checks share one row.
        let name = c.check.split('(').next().unwrap_or(&c.check).trim_end_matches('_').to_string();
        groups.entry((c.suite.clone(), name)).or_default().push(c);
    }
    let rows: Vec<Value> = groups
        .into_iter()
        .map(|((suite, check), cs)| {
            let relation = cs[0].relation;
            let worst = match relation {
                Relation::AtMost => cs.iter().map(|c| c.value).fold(0.0, f64::max),
                Relation::Exceeds => cs.iter().map(|c| c.value).fold(f64::INFINITY, f64::min),
            };
            json!({
                "suite": suite,
                "check": check,
                "count": cs.len(),
                "worst": worst,
                "tol": cs[0].tol,
                "relation": relation,
                "failed": cs.iter().filter(|c| !c.passed).count(),
            })
        })
        .collect();
    Value::Array(rows)
}

pub fn verify(suite: Suite, seed: u64, count: usize, fixture: Option<&Path>, tol_value: f64) -> Result<Outcome, CliError> {
    let (rep, inputs) = match fixture {
        Some(path) => {
            let Loaded { bytes, tuple, .. } = load(path, tol_value)?;
            let label = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (run_on_tuple(&tuple, &label, seed), vec![bytes])
        }
        None => (
            run_suite(suite, seed, count),
            vec![suite.name().as_bytes().to_vec(), seed.to_le_bytes().to_vec(), count.to_le_bytes().to_vec()],
        ),
    };
    let failures: Vec<&CheckResult> = rep.failures();
    let results = json!({
        "suite": rep.suite,
        "seed": seed,
        "count": count,
        "fixtures": rep.fixtures(),
        "checks_run": rep.checks.len(),
        "failed": failures.len(),
        "table": summarize(&rep),
        "failures": failures,
        "checks": rep.checks,
    });
    Ok(Outcome {
        results,
        passed: rep.passed(),
        tolerances: tolerances(&[
            ("lemma", tol::LEMMA),
            ("decomposition", tol::DECOMPOSITION),
            ("coincidence", tol::COINCIDENCE),
            ("connector", tol::CONNECTOR),
            ("julia_halmos", tol::JULIA_HALMOS),
            ("bridge", tol::BRIDGE),
            ("evaluation", tol::EVALUATION),
        ]),
        inputs,
        code: None,
    })
}

/// Parses `nil2,zero1,comm2,coiso2,rand2`.
pub fn parse_blocks(s: &str) -> Result<Vec<BlockKind>, CliError> {
    s.split(',')
        .map(|p| {
            let p = p.trim();
            let split = p.find(|ch: char| ch.is_ascii_digit()).ok_or_else(|| CliError::parse(format!("block '{p}' has no size")))?;
            let (kind, size) = p.split_at(split);
            let k: usize = size.parse().map_err(|e| CliError::parse(format!("block '{p}': {e}")))?;
            Ok(match kind {
                "nil" => BlockKind::Nilpotent { m: k },
                "zero" => BlockKind::Zero { d: k },
                "comm" => BlockKind::RandomCommuting { d: k },
                "coiso" => BlockKind::Coisometry { d: k },
                "rand" => BlockKind::RandomContraction { d: k },
                other => return Err(CliError::parse(format!("unknown block kind '{other}'"))),
            })
        })
        .collect()
}

pub fn example(spec: &FixtureSpec) -> Result<FixtureFile, CliError> {
    let fx = generate(spec).map_err(CliError::generation)?;
    Ok(FixtureFile::from_fixture(&fx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_parse() {
        assert_eq!(
            parse_blocks("nil2, zero1,comm3").unwrap(),
            vec![BlockKind::Nilpotent { m: 2 }, BlockKind::Zero { d: 1 }, BlockKind::RandomCommuting { d: 3 }]
        );
        assert!(parse_blocks("foo2").is_err());
        assert!(parse_blocks("nil").is_err());
    }

    #[test]
    fn split_parses() {
        assert_eq!(parse_split("2, 5").unwrap(), vec![2, 5]);
        assert!(parse_split("2,x").is_err());
    }
}
