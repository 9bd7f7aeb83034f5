//! JSON and CSV formats: matrices, systems, operator sequences and result
//! records.

use std::collections::BTreeMap;
use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::SystemSpec;
use crate::operators::{hermitian_eigenvalues, trace_norm_matrix, CMatrix, ManyBodyOperator, C64};
use crate::partitions::ParticleSet;
use crate::random::random_spec;
use crate::star_algebra::OperatorSequence;

fn schema_err(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

/// A matrix as rows of `[re, im]` pairs. `labels` defaults to `1..=n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u32>>,
    pub dim_single: usize,
    pub matrix: Vec<Vec<[f64; 2]>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix, dim_single: usize, labels: Option<&ParticleSet>) -> Self {
        let matrix = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect();
        Self { labels: labels.map(|l| l.labels().to_vec()), dim_single, matrix }
    }

    pub fn from_operator(op: &ManyBodyOperator) -> Self {
        Self::from_matrix(op.matrix(), op.dim_single(), Some(op.labels()))
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let n = self.matrix.len();
        if n == 0 {
            return Err(schema_err("matrix has no rows"));
        }
        if let Some(row) = self.matrix.iter().find(|r| r.len() != n) {
            return Err(schema_err(format!("matrix is not square: row of length {} in {n} rows", row.len())));
        }
        if self.matrix.iter().flatten().flatten().any(|x| !x.is_finite()) {
            return Err(schema_err("matrix entries must be finite"));
        }
        Ok(CMatrix::from_fn(n, n, |i, j| C64::new(self.matrix[i][j][0], self.matrix[i][j][1])))
    }

    pub fn to_operator(&self) -> Result<ManyBodyOperator> {
        let m = self.to_matrix()?;
        let op = match &self.labels {
            Some(l) => ManyBodyOperator::new(ParticleSet::new(l.clone())?, self.dim_single, m),
            None => ManyBodyOperator::canonical(self.dim_single, m),
        };
        op.map_err(|e| schema_err(e.to_string()))
    }
}

/// Explicit system data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSystem {
    pub dim_single: usize,
    #[serde(default = "one")]
    pub hbar: f64,
    pub one_body: MatrixJson,
    /// Symmetric `k`-body potentials keyed by `k`.
    #[serde(default)]
    pub potentials: BTreeMap<String, MatrixJson>,
}

/// A seeded random system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PresetSystem {
    /// Only `"random_hermitian"` is known.
    pub preset: String,
    pub seed: u64,
    pub orders: Vec<usize>,
    #[serde(default = "two")]
    pub dim_single: usize,
    #[serde(default = "one")]
    pub coupling: f64,
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum SystemJson {
    Explicit(ExplicitSystem),
    Preset(PresetSystem),
}

pub const PRESET_RANDOM_HERMITIAN: &str = "random_hermitian";

impl SystemJson {
    /// Builds the system; `seed` replaces a preset's own seed when given.
    pub fn to_spec(&self, seed: Option<u64>) -> Result<SystemSpec> {
        match self {
            SystemJson::Explicit(e) => {
                let pots = e
                    .potentials
                    .iter()
                    .map(|(k, m)| {
                        let k: usize = k.parse().map_err(|_| schema_err(format!("potential key {k:?} is not an integer")))?;
                        Ok((k, m.to_matrix()?))
                    })
                    .collect::<Result<BTreeMap<_, _>>>()?;
                SystemSpec::new(e.dim_single, e.hbar, e.one_body.to_matrix()?, pots).map_err(as_schema)
            }
            SystemJson::Preset(p) => {
                if p.preset != PRESET_RANDOM_HERMITIAN {
                    return Err(schema_err(format!("unknown preset {:?}", p.preset)));
                }
                random_spec(seed.unwrap_or(p.seed), p.dim_single, &p.orders, p.coupling).map_err(as_schema)
            }
        }
    }

    pub fn from_spec(spec: &SystemSpec) -> Self {
        let d = spec.dim_single();
        SystemJson::Explicit(ExplicitSystem {
            dim_single: d,
            hbar: spec.hbar(),
            one_body: MatrixJson::from_matrix(spec.one_body(), d, None),
            potentials: spec
                .potentials()
                .iter()
                .map(|(k, m)| (k.to_string(), MatrixJson::from_matrix(m, d, None)))
                .collect(),
        })
    }
}

/// Validation failures in user input are schema errors; capacity limits stay
/// what they are.
pub fn as_schema(e: Error) -> Error {
    match e {
        Error::Capacity { .. } | Error::Schema(_) => e,
        other => Error::Schema(other.to_string()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Correlation,
    Density,
    Marginal,
    Sequence,
}

/// An operator sequence. For plain sequences `components` lists `f_1..f_n`
/// and `scalar0` holds `f_0`; with a prefix it lists `f_0..f_n` and
/// `scalar0` is ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SequenceJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SequenceKind>,
    pub scalar0: [f64; 2],
    pub n_max: usize,
    #[serde(default)]
    pub prefix: usize,
    pub dim_single: usize,
    pub components: Vec<MatrixJson>,
}

impl SequenceJson {
    pub fn from_sequence(seq: &OperatorSequence, kind: Option<SequenceKind>) -> Self {
        let d = seq.dim_single();
        let start = if seq.prefix() == 0 { 1 } else { 0 };
        let s0 = if seq.prefix() == 0 { seq.scalar0() } else { C64::new(0.0, 0.0) };
        Self {
            kind,
            scalar0: [s0.re, s0.im],
            n_max: seq.n_max(),
            prefix: seq.prefix(),
            dim_single: d,
            components: (start..=seq.n_max()).map(|n| MatrixJson::from_matrix(seq.component(n), d, None)).collect(),
        }
    }

    pub fn to_sequence(&self) -> Result<OperatorSequence> {
        let plain = self.prefix == 0;
        let expected = if plain { self.n_max } else { self.n_max + 1 };
        if self.components.len() != expected {
            return Err(schema_err(format!(
                "n_max = {} with prefix {} needs {expected} components, got {}",
                self.n_max,
                self.prefix,
                self.components.len()
            )));
        }
        if self.components.iter().any(|c| c.dim_single != self.dim_single) {
            return Err(schema_err("component dim_single differs from the sequence"));
        }
        let mut comps = Vec::with_capacity(self.n_max + 1);
        if plain {
            comps.push(CMatrix::from_element(1, 1, C64::new(self.scalar0[0], self.scalar0[1])));
        }
        for c in &self.components {
            comps.push(c.to_matrix()?);
        }
        OperatorSequence::new(self.dim_single, self.prefix, comps).map_err(as_schema)
    }
}

/// One component of a result at one time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ComponentRecord {
    pub s: usize,
    pub t: f64,
    pub matrix: MatrixJson,
    pub trace: [f64; 2],
    pub trace_norm: f64,
    /// Smallest eigenvalue of the Hermitian part.
    pub min_eig: f64,
}

impl ComponentRecord {
    pub fn new(s: usize, t: f64, m: &CMatrix, dim_single: usize) -> Result<Self> {
        let tr = m.trace();
        let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
        let min_eig = hermitian_eigenvalues(&herm).first().copied().unwrap_or(0.0);
        Ok(Self {
            s,
            t,
            matrix: MatrixJson::from_matrix(m, dim_single, None),
            trace: [tr.re, tr.im],
            trace_norm: trace_norm_matrix(m)?,
            min_eig,
        })
    }
}

/// One scalar diagnostic in a long-format time series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SeriesRow {
    pub task: String,
    pub t: f64,
    pub s: usize,
    pub quantity: String,
    pub value: f64,
}

pub fn write_csv(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
    for r in rows {
        w.serialize(r).map_err(std::io::Error::other)?;
    }
    Ok(w.flush()?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, serde_json::to_string_pretty(value)?)
}

/// Single-line JSON, for files dominated by matrix entries.
pub fn write_json_compact<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, serde_json::to_string(value)?)
}

fn write_text(path: &Path, mut text: String) -> Result<()> {
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}
