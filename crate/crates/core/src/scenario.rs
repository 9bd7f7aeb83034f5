//! Scenario files: a system, an initial state, times and tasks. A scenario
//! is validated in full before any task runs, and all results are computed
//! before the first file is written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::bbgky::{
    additive_dispersion, average_particle_number, correlation_from_marginals, marginals_from_density,
    solve_bbgky_cumulant, solve_bbgky_iteration, solve_bbgky_state, MarginalState, QuadratureRule, QuadratureSpec,
};
use crate::error::{capacity, Error, Result};
use crate::evolution::{evolve_density_sequence, Dynamics};
use crate::hamiltonian::SystemSpec;
use crate::hierarchy::{cluster_expand, cluster_invert, solve_chaos, solve_hierarchy, CorrelationState, DensityState};
use crate::io::{as_schema, write_csv, write_json, write_json_compact, ComponentRecord, MatrixJson, SequenceJson, SeriesRow, SystemJson};
use crate::operators::{CMatrix, C64};
use crate::random::{random_density, random_fugacity_sequence, random_hermitian_sequence, rng_from_seed};
use crate::verify::{run_suite, Report, SuiteContext, DEFAULT_SEED, SUITES};

pub const MAX_SCENARIO_N: usize = 4;
pub const MAX_SCENARIO_DIM: usize = 256;
pub const MAX_ABS_TIME: f64 = 10.0;

/// Seeded initial states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct InitialPreset {
    /// `fugacity` (density `z^n ρ_n`, scale = z, default 0.02), `chaos`
    /// (one-particle state of trace `scale`, default 1) or `correlation`
    /// (GUE correlations times `scale`, default 0.5).
    pub name: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Initial {
    Density(SequenceJson),
    Correlation(SequenceJson),
    /// One-particle correlation; all higher correlations vanish.
    Chaos(MatrixJson),
    Preset(InitialPreset),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Multiplies every scalable verify tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Tolerance by check family, e.g. `{"oracle": 1e-8}`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub checks: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub enum OutputFormat {
    #[serde(rename = "json")]
    Json,
    #[default]
    #[serde(rename = "json+csv")]
    JsonCsv,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemJson,
    pub initial: Initial,
    pub times: Vec<f64>,
    /// `evolve`, `hierarchy`, `chaos`, `bbgky`, `iterate`, `observables` or
    /// `verify:<suite>`.
    pub tasks: Vec<String>,
    pub n_max: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
    /// Seed for the verify suites' own samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Quadrature of the `iterate` task; defaults to order 2 with 32
    /// Gauss–Legendre nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSpec>,
    /// One-particle observable for the dispersion in `observables`;
    /// defaults to `diag(0, 1, ..., d-1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<MatrixJson>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Evolve,
    Hierarchy,
    Chaos,
    Bbgky,
    Iterate,
    Observables,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Task {
    Compute(Kind),
    Verify(String),
}

impl Task {
    fn parse(tag: &str) -> Result<Self> {
        let kind = match tag {
            "evolve" => Kind::Evolve,
            "hierarchy" => Kind::Hierarchy,
            "chaos" => Kind::Chaos,
            "bbgky" => Kind::Bbgky,
            "iterate" => Kind::Iterate,
            "observables" => Kind::Observables,
            _ => {
                return match tag.strip_prefix("verify:") {
                    Some(s) if SUITES.contains(&s) => Ok(Task::Verify(s.into())),
                    Some(s) => Err(Error::Schema(format!("unknown verify suite {s:?}"))),
                    None => Err(Error::Schema(format!("unknown task {tag:?}"))),
                };
            }
        };
        Ok(Task::Compute(kind))
    }

    fn file_stem(&self) -> String {
        match self {
            Task::Compute(k) => format!("{k:?}").to_lowercase(),
            Task::Verify(s) => format!("verify-{s}"),
        }
    }
}

/// A validated scenario with its states built.
#[derive(Debug)]
pub struct Prepared {
    pub scenario: Scenario,
    pub spec: SystemSpec,
    pub density: DensityState,
    pub correlation: CorrelationState,
    pub seed: u64,
    pub seed_override: Option<u64>,
    tasks: Vec<Task>,
    quadrature: QuadratureSpec,
    observable: CMatrix,
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

fn check_dim(d: usize, n: usize) -> Result<()> {
    let dim = d.checked_pow(n as u32).unwrap_or(usize::MAX);
    if dim > MAX_SCENARIO_DIM {
        return Err(capacity("scenario dimension d^n_max", dim, MAX_SCENARIO_DIM));
    }
    Ok(())
}

fn default_observable(d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| if i == j { C64::new(i as f64, 0.0) } else { C64::new(0.0, 0.0) })
}

fn initial_states(init: &Initial, spec: &SystemSpec, n_max: usize, seed: Option<u64>) -> Result<(DensityState, CorrelationState)> {
    let d = spec.dim_single();
    let from_seq = |j: &SequenceJson| -> Result<_> {
        if j.dim_single != d {
            return Err(Error::Schema(format!("sequence has d = {}, system has d = {d}", j.dim_single)));
        }
        if j.n_max != n_max {
            return Err(Error::Schema(format!("sequence has n_max = {}, scenario has {n_max}", j.n_max)));
        }
        if j.prefix != 0 {
            return Err(Error::Schema("initial sequences carry no cluster prefix".into()));
        }
        j.to_sequence()
    };
    let from_density = |dens: DensityState| -> Result<_> {
        let g = cluster_invert(&dens)?;
        Ok((dens, g))
    };
    let from_correlation = |g: CorrelationState| -> Result<_> { Ok((cluster_expand(&g)?, g)) };
    match init {
        Initial::Density(j) => from_density(DensityState::physical(from_seq(j)?).map_err(as_schema)?),
        Initial::Correlation(j) => from_correlation(CorrelationState::new(from_seq(j)?).map_err(as_schema)?),
        Initial::Chaos(m) => {
            if m.dim_single != d {
                return Err(Error::Schema(format!("chaos operator has d = {}, system has d = {d}", m.dim_single)));
            }
            let g1 = m.to_matrix()?;
            if g1.nrows() != d {
                return Err(Error::Schema(format!("chaos operator must be {d}x{d}")));
            }
            from_correlation(CorrelationState::chaos(&g1, n_max).map_err(as_schema)?)
        }
        Initial::Preset(p) => {
            let mut rng = rng_from_seed(seed.unwrap_or(p.seed));
            let scale = p.scale.unwrap_or(match p.name.as_str() {
                "fugacity" => 0.02,
                "chaos" => 1.0,
                _ => 0.5,
            });
            if !scale.is_finite() || scale <= 0.0 {
                return Err(Error::Schema(format!("preset scale must be positive, got {scale}")));
            }
            match p.name.as_str() {
                "fugacity" => from_density(DensityState::new(random_fugacity_sequence(&mut rng, d, n_max, scale)?)?),
                "chaos" => from_correlation(CorrelationState::chaos(&random_density(&mut rng, 1, d, scale, false), n_max)?),
                "correlation" => {
                    from_correlation(CorrelationState::new(random_hermitian_sequence(&mut rng, d, n_max, scale)?)?)
                }
                other => Err(Error::Schema(format!("unknown initial preset {other:?}"))),
            }
        }
    }
}

/// Checks every constraint and builds the states. `seed` replaces preset
/// seeds and the verify seed.
pub fn prepare(scenario: Scenario, seed: Option<u64>) -> Result<Prepared> {
    let n_max = scenario.n_max;
    if n_max == 0 {
        return Err(Error::Schema("n_max must be at least 1".into()));
    }
    if n_max > MAX_SCENARIO_N {
        return Err(capacity("scenario n_max", n_max, MAX_SCENARIO_N));
    }
    if scenario.times.is_empty() {
        return Err(Error::Schema("times must not be empty".into()));
    }
    if let Some(t) = scenario.times.iter().find(|t| !t.is_finite() || t.abs() > MAX_ABS_TIME) {
        return Err(Error::Schema(format!("time {t} is not finite or exceeds {MAX_ABS_TIME} in magnitude")));
    }
    if scenario.tasks.is_empty() {
        return Err(Error::Schema("tasks must not be empty".into()));
    }
    let mut tasks = scenario.tasks.iter().map(|t| Task::parse(t)).collect::<Result<Vec<_>>>()?;
    tasks.sort();
    tasks.dedup();
    if let Some(s) = scenario.tolerances.scale.filter(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::Schema(format!("tolerance scale must be positive, got {s}")));
    }
    if let Some((k, v)) = scenario.tolerances.checks.iter().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::Schema(format!("tolerance for {k:?} must be finite and non-negative, got {v}")));
    }

    let spec = scenario.system.to_spec(seed)?;
    let d = spec.dim_single();
    check_dim(d, n_max)?;
    let (density, correlation) = initial_states(&scenario.initial, &spec, n_max, seed)?;

    let quadrature = scenario.quadrature.unwrap_or(QuadratureSpec {
        order: 2,
        nodes_per_dim: 32,
        rule: QuadratureRule::GaussLegendre,
    });
    quadrature.validate().map_err(as_schema)?;
    if tasks.contains(&Task::Compute(Kind::Iterate)) && !spec.is_two_body() {
        return Err(Error::Schema("the iterate task needs a system with two-body potentials only".into()));
    }
    let observable = match &scenario.observable {
        Some(m) => {
            let a = m.to_matrix()?;
            if a.nrows() != d {
                return Err(Error::Schema(format!("observable must be {d}x{d}")));
            }
            a
        }
        None => default_observable(d),
    };
    Ok(Prepared {
        seed: seed.or(scenario.seed).unwrap_or(DEFAULT_SEED),
        seed_override: seed,
        scenario,
        spec,
        density,
        correlation,
        tasks,
        quadrature,
        observable,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct IterationRecord {
    pub s: usize,
    pub error_estimate: f64,
    /// Trace-norm distance to the cumulant solution.
    pub gap_to_cumulant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TimeSlice {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particle_number: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<f64>,
    pub components: Vec<ComponentRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iteration: Vec<IterationRecord>,
}

/// Result of one compute task. `quantity` names what the components hold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TaskResult {
    pub task: String,
    pub quantity: String,
    pub n_max: usize,
    pub slices: Vec<TimeSlice>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: Scenario,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_override: Option<u64>,
    pub tol_scale: f64,
    pub files: Vec<String>,
    pub verify: BTreeMap<String, bool>,
    pub pass: bool,
}

#[derive(Debug)]
pub enum TaskOutput {
    Compute(TaskResult),
    Verify(Report),
}

/// Everything a run produces, ready to be written.
#[derive(Debug)]
pub struct RunOutcome {
    pub outputs: Vec<(String, TaskOutput)>,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn pass(&self) -> bool {
        self.manifest.pass
    }

    pub fn reports(&self) -> impl Iterator<Item = &Report> {
        self.outputs.iter().filter_map(|(_, o)| match o {
            TaskOutput::Verify(r) => Some(r),
            TaskOutput::Compute(_) => None,
        })
    }
}

fn records(seq_components: impl Iterator<Item = (usize, CMatrix)>, t: f64, d: usize) -> Result<Vec<ComponentRecord>> {
    seq_components.map(|(s, m)| ComponentRecord::new(s, t, &m, d)).collect()
}

fn slice(t: f64, components: Vec<ComponentRecord>) -> TimeSlice {
    TimeSlice { t, normalization: None, particle_number: None, dispersion: None, components, iteration: Vec::new() }
}

impl Prepared {
    fn suite_context(&self) -> SuiteContext {
        SuiteContext {
            system: Some(self.spec.clone()),
            correlation: Some(self.correlation.clone()),
            density: Some(self.density.clone()),
            times: Some(self.scenario.times.clone()),
            seed: self.seed,
            tol_scale: self.scenario.tolerances.scale.unwrap_or(1.0),
            overrides: self.scenario.tolerances.checks.clone(),
        }
    }

    fn marginals(&self) -> Result<MarginalState> {
        marginals_from_density(&self.density)
    }

    fn compute(&self, dy: &Dynamics, kind: Kind) -> Result<TaskResult> {
        let n_max = self.scenario.n_max;
        let d = self.spec.dim_single();
        let all = |f: &dyn Fn(usize) -> Result<CMatrix>| -> Result<Vec<(usize, CMatrix)>> {
            (1..=n_max).map(|s| Ok((s, f(s)?))).collect()
        };
        let mut slices = Vec::with_capacity(self.scenario.times.len());
        let quantity = match kind {
            Kind::Evolve => "density",
            Kind::Hierarchy | Kind::Chaos => "correlation",
            Kind::Bbgky | Kind::Iterate => "marginal",
            Kind::Observables => "marginal-correlation",
        };
        for &t in &self.scenario.times {
            let sl = match kind {
                Kind::Evolve => {
                    let dt = evolve_density_sequence(dy, self.density.seq(), t)?;
                    slice(t, records(all(&|s| Ok(dt.component(s).clone()))?.into_iter(), t, d)?)
                }
                Kind::Hierarchy => {
                    let g = solve_hierarchy(dy, &self.correlation, t)?;
                    slice(t, records(all(&|s| Ok(g.component(s).clone()))?.into_iter(), t, d)?)
                }
                Kind::Chaos => {
                    let g1 = self.correlation.component(1);
                    let comps = all(&|s| Ok(solve_chaos(dy, g1, s, t)?.into_matrix()))?;
                    slice(t, records(comps.into_iter(), t, d)?)
                }
                Kind::Bbgky => {
                    let f0 = self.marginals()?;
                    let ft = solve_bbgky_state(dy, &f0, t)?;
                    let mut sl = slice(t, records(all(&|s| Ok(ft.component(s).clone()))?.into_iter(), t, d)?);
                    sl.normalization = Some(ft.normalization());
                    sl.particle_number = Some(average_particle_number(&ft)?.value);
                    sl
                }
                Kind::Iterate => {
                    let f0 = self.marginals()?;
                    let mut comps = Vec::new();
                    let mut iteration = Vec::new();
                    for s in 1..=n_max {
                        let it = solve_bbgky_iteration(dy, &f0, s, t, &self.quadrature)?;
                        let exact = solve_bbgky_cumulant(dy, &f0, s, t)?;
                        let gap = crate::operators::trace_norm_matrix(&(it.value.matrix() - exact.matrix()))?;
                        iteration.push(IterationRecord { s, error_estimate: it.error_estimate, gap_to_cumulant: gap });
                        comps.push((s, it.value.into_matrix()));
                    }
                    let mut sl = slice(t, records(comps.into_iter(), t, d)?);
                    sl.iteration = iteration;
                    sl
                }
                Kind::Observables => {
                    let ft = solve_bbgky_state(dy, &self.marginals()?, t)?;
                    let comps = all(&|s| Ok(correlation_from_marginals(&ft, s)?.into_matrix()))?;
                    let mut sl = slice(t, records(comps.into_iter(), t, d)?);
                    sl.particle_number = Some(average_particle_number(&ft)?.value);
                    if n_max >= 2 {
                        sl.dispersion = Some(additive_dispersion(&self.observable, &ft)?);
                    }
                    sl
                }
            };
            slices.push(sl);
        }
        Ok(TaskResult { task: format!("{kind:?}").to_lowercase(), quantity: quantity.into(), n_max, slices })
    }

    fn run_task(&self, dy: &Dynamics, task: &Task) -> Result<TaskOutput> {
        match task {
            Task::Compute(k) => Ok(TaskOutput::Compute(self.compute(dy, *k)?)),
            Task::Verify(s) => Ok(TaskOutput::Verify(run_suite(s, &self.suite_context())?)),
        }
    }

    /// Runs every task; independent tasks share the current rayon pool.
    pub fn run(&self) -> Result<RunOutcome> {
        let dy = Dynamics::new(self.spec.clone());
        let results: Vec<TaskOutput> = self.tasks.par_iter().map(|t| self.run_task(&dy, t)).collect::<Result<_>>()?;
        let outputs: Vec<(String, TaskOutput)> =
            self.tasks.iter().map(Task::file_stem).zip(results).collect();
        let csv = self.scenario.output.format == OutputFormat::JsonCsv;
        let mut files = Vec::new();
        let mut verify = BTreeMap::new();
        for (stem, out) in &outputs {
            files.push(format!("{stem}.json"));
            match out {
                TaskOutput::Compute(_) if csv => files.push(format!("{stem}.csv")),
                TaskOutput::Compute(_) => {}
                TaskOutput::Verify(r) => {
                    verify.insert(r.suite.clone(), r.pass);
                }
            }
        }
        files.push("manifest.json".into());
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            scenario: self.scenario.clone(),
            seed: self.seed,
            seed_override: self.seed_override,
            tol_scale: self.scenario.tolerances.scale.unwrap_or(1.0),
            files,
            pass: verify.values().all(|&p| p),
            verify,
        };
        Ok(RunOutcome { outputs, manifest })
    }

    /// Output directory: the command-line choice, else the scenario's, else
    /// `out`.
    pub fn output_dir(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| self.scenario.output.path.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Long-format rows: per component trace, trace norm and smallest
/// eigenvalue, plus the per-slice scalars.
pub fn series_rows(r: &TaskResult) -> Vec<SeriesRow> {
    let mut rows = Vec::new();
    let mut push = |t: f64, s: usize, q: &str, v: f64| {
        rows.push(SeriesRow { task: r.task.clone(), t, s, quantity: q.into(), value: v });
    };
    for sl in &r.slices {
        for c in &sl.components {
            push(sl.t, c.s, "trace_re", c.trace[0]);
            push(sl.t, c.s, "trace_im", c.trace[1]);
            push(sl.t, c.s, "trace_norm", c.trace_norm);
            push(sl.t, c.s, "min_eig", c.min_eig);
        }
        for (q, v) in [
            ("normalization", sl.normalization),
            ("particle_number", sl.particle_number),
            ("dispersion", sl.dispersion),
        ] {
            if let Some(v) = v {
                push(sl.t, 0, q, v);
            }
        }
        for it in &sl.iteration {
            push(sl.t, it.s, "error_estimate", it.error_estimate);
            push(sl.t, it.s, "gap_to_cumulant", it.gap_to_cumulant);
        }
    }
    rows
}

/// Writes every result file and the manifest into `dir`.
pub fn write_outcome(outcome: &RunOutcome, dir: &Path, format: OutputFormat) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (stem, out) in &outcome.outputs {
        match out {
            TaskOutput::Compute(r) => {
                write_json_compact(&dir.join(format!("{stem}.json")), r)?;
                if format == OutputFormat::JsonCsv {
                    write_csv(&dir.join(format!("{stem}.csv")), &series_rows(r))?;
                }
            }
            TaskOutput::Verify(r) => write_json(&dir.join(format!("{stem}.json")), r)?,
        }
    }
    write_json(&dir.join("manifest.json"), &outcome.manifest)
}
