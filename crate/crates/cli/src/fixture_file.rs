//! The on-disk fixture format: one tuple per JSON file, entries as decimal
//! `{re, im}` pairs, plus optional annotations and generator provenance.

use std::path::Path;

use polychar::fixtures::{Fixture, FixtureSpec, GroundTruth};
use polychar::opcore::{c, CMatrix};
use polychar::tuples::OperatorTuple;
use serde::{Deserialize, Serialize};

use crate::exit::CliError;

pub const FIXTURE_FORMAT: &str = "polychar-fixture/1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub spec: FixtureSpec,
    /// Diagonal block sizes of composite fixtures, usable as a split.
    pub block_sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureFile {
    pub format: String,
    pub n: usize,
    pub dim: usize,
    /// `n` matrices, each `dim` rows of `dim` entries.
    pub matrices: Vec<Vec<Vec<Entry>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<GroundTruth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl FixtureFile {
    pub fn from_fixture(fx: &Fixture) -> Self {
        let t = &fx.tuple;
        let matrices = t
            .mats()
            .iter()
            .map(|m| {
                (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| Entry { re: m[(i, j)].re, im: m[(i, j)].im }).collect())
                    .collect()
            })
            .collect();
        FixtureFile {
            format: FIXTURE_FORMAT.into(),
            n: t.n(),
            dim: t.dim(),
            matrices,
            expected: Some(fx.truth.clone()),
            provenance: Some(Provenance {
                generator: format!("polychar {}", env!("CARGO_PKG_VERSION")),
                spec: fx.spec.clone(),
                block_sizes: fx.block_sizes.clone(),
            }),
        }
    }

    /// Checks the format tag, shapes and finiteness, then builds the tuple.
    pub fn to_tuple(&self, tol: f64) -> Result<OperatorTuple, CliError> {
        if self.format != FIXTURE_FORMAT {
            return Err(CliError::parse(format!("unsupported fixture format '{}', expected '{FIXTURE_FORMAT}'", self.format)));
        }
        if self.n == 0 {
            return Err(CliError::parse("fixture has n = 0"));
        }
        if self.matrices.len() != self.n {
            return Err(CliError::parse(format!("fixture declares n = {} but lists {} matrices", self.n, self.matrices.len())));
        }
        let mut mats = Vec::with_capacity(self.n);
        for (k, rows) in self.matrices.iter().enumerate() {
            if rows.len() != self.dim || rows.iter().any(|r| r.len() != self.dim) {
                return Err(CliError::parse(format!("matrix {k} is not {0}x{0}", self.dim)));
            }
            if rows.iter().flatten().any(|e| !e.re.is_finite() || !e.im.is_finite()) {
                return Err(CliError::parse(format!("matrix {k} has non-finite entries")));
            }
            mats.push(CMatrix::from_fn(self.dim, self.dim, |i, j| c(rows[i][j].re, rows[i][j].im)));
        }
        OperatorTuple::new(mats, tol).map_err(|e| CliError::parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixture files always serialize")
    }
}

/// Reads and parses a fixture file, returning it with its raw bytes.
pub fn read(path: &Path) -> Result<(FixtureFile, Vec<u8>), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
    let file: FixtureFile =
        serde_json::from_slice(&bytes).map_err(|e| CliError::parse(format!("cannot parse {}: {e}", path.display())))?;
    Ok((file, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use polychar::fixtures::generate;

    #[test]
    fn round_trip_is_bit_exact() {
        let fx = generate(&FixtureSpec::RandomCommuting { n: 2, d: 3, seed: 11 }).unwrap();
        let file = FixtureFile::from_fixture(&fx);
        let back: FixtureFile = serde_json::from_str(&file.to_json()).unwrap();
        assert_eq!(back, file);
        let t = back.to_tuple(1e-9).unwrap();
        assert_eq!(t.mats(), fx.tuple.mats());
    }

    #[test]
    fn shape_errors_are_parse_errors() {
        let fx = generate(&FixtureSpec::NilpotentPoly { n: 2, m: 2 }).unwrap();
        let mut file = FixtureFile::from_fixture(&fx);
        file.matrices[1].pop();
        assert_eq!(file.to_tuple(1e-9).unwrap_err().code, crate::exit::PARSE);
        let mut file = FixtureFile::from_fixture(&fx);
        file.format = "other/2".into();
        assert_eq!(file.to_tuple(1e-9).unwrap_err().code, crate::exit::PARSE);
    }
}
