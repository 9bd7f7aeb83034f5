//! Reduced statistical operators (marginals), their evolution by cumulants
//! and by the iteration series, correlation operators and observables.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::cumulants::{cumulant_matrix, CumulantOptions};
use crate::error::{Error, Result};
use crate::evolution::Dynamics;
use crate::hamiltonian::{commutator_rhs, potential_sum};
use crate::hierarchy::{solve_chaos, CorrelationState, DensityState};
use crate::operators::{kron_disjoint, trace_last, trace_norm_matrix, CMatrix, ManyBodyOperator, C64};
use crate::partitions::{index_partitions, mobius_for_blocks};
use crate::star_algebra::{annihilation_expand, cluster_shift_map, ClusterShiftMode, OperatorSequence};

pub const MAX_ITERATION_ORDER: usize = 3;
pub const MIN_NODES: usize = 4;
pub const MAX_NODES: usize = 64;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn real(c: C64, what: &str) -> Result<f64> {
    if c.im.abs() > 1e-10 * c.re.abs().max(1.0) {
        return Err(Error::Numerical(format!("{what} has imaginary part {:e}", c.im)));
    }
    Ok(c.re)
}

/// The sequence `(1, F_1, F_2, ...)` of reduced operators together with the
/// partition function of the density sequence it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalState {
    seq: OperatorSequence,
    normalization: f64,
}

impl MarginalState {
    pub fn new(seq: OperatorSequence, normalization: f64) -> Result<Self> {
        if seq.prefix() != 0 || seq.scalar0() != C64::new(1.0, 0.0) {
            return Err(Error::InvalidArgument("marginal sequences are plain with unit scalar".into()));
        }
        if !(normalization.is_finite() && normalization != 0.0) {
            return Err(Error::InvalidArgument(format!("normalization {normalization}")));
        }
        Ok(Self { seq, normalization })
    }

    pub fn seq(&self) -> &OperatorSequence {
        &self.seq
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn n_max(&self) -> usize {
        self.seq.n_max()
    }

    pub fn dim_single(&self) -> usize {
        self.seq.dim_single()
    }

    pub fn component(&self, s: usize) -> &CMatrix {
        self.seq.component(s)
    }

    pub fn component_op(&self, s: usize) -> Result<ManyBodyOperator> {
        self.seq.component_op(s)
    }

    fn check_s(&self, s: usize) -> Result<()> {
        if s == 0 || s > self.n_max() {
            return Err(Error::InvalidArgument(format!("s = {s} outside 1..={}", self.n_max())));
        }
        Ok(())
    }
}

/// `(e^𝔞 D)_0 = Σ_n (1/n!) Tr D_n`.
pub fn partition_function(d: &DensityState) -> Result<f64> {
    let z = real(annihilation_expand(d.seq())?.scalar0(), "partition function")?;
    if z.abs() < 1e-300 {
        return Err(Error::Numerical("partition function vanishes".into()));
    }
    Ok(z)
}

pub fn marginals_from_density(d: &DensityState) -> Result<MarginalState> {
    let z = partition_function(d)?;
    let mut seq = annihilation_expand(d.seq())?.scale(C64::new(1.0 / z, 0.0));
    seq.set_scalar0(C64::new(1.0, 0.0));
    MarginalState::new(seq, z)
}

/// `F_s = Z^{-1} Σ_n (1/n!) Tr_{s+1..s+n} D_{s+n}`.
pub fn reduce_from_density(d: &DensityState, s: usize) -> Result<ManyBodyOperator> {
    let m = marginals_from_density(d)?;
    m.check_s(s)?;
    m.component_op(s)
}

/// `Σ_n (1/n!) Tr_{last n} g^cl_n` for a sequence of correlations between a
/// cluster (the prefix) and further particles.
pub fn reduce_from_cluster_correlations(gcl: &OperatorSequence) -> Result<ManyBodyOperator> {
    if gcl.prefix() == 0 {
        return Err(Error::InvalidArgument("cluster correlations need a prefix".into()));
    }
    ManyBodyOperator::canonical(gcl.dim_single(), annihilation_expand(gcl)?.component(0).clone())
}

/// Marginal `F_s` from plain correlations: the cluster correlations of
/// `{1..s}` with further particles are the connected products of `g`, then
/// reduced. The series is cut where `g` ends.
pub fn reduce_from_correlations(g: &CorrelationState, s: usize) -> Result<ManyBodyOperator> {
    if s == 0 || s > g.n_max() {
        return Err(Error::InvalidArgument(format!("s = {s} outside 1..={}", g.n_max())));
    }
    let gcl = cluster_shift_map(g.seq(), s, ClusterShiftMode::Connected, g.n_max() - s)?;
    reduce_from_cluster_correlations(&gcl)
}

fn cluster_with_singletons(s: usize, n: usize) -> Vec<Vec<usize>> {
    let mut v = vec![(0..s).collect::<Vec<_>>()];
    v.extend((s..s + n).map(|i| vec![i]));
    v
}

/// `F_s(t) = Σ_n (1/n!) Tr_{s+1..s+n} 𝔄_{1+n}(t; {1..s}, s+1, ..., s+n) F_{s+n}(0)`,
/// finite because `F0` ends at its cutoff.
pub fn solve_bbgky_cumulant(
    dynamics: &Dynamics,
    f0: &MarginalState,
    s: usize,
    t: f64,
) -> Result<ManyBodyOperator> {
    f0.check_s(s)?;
    check_dims(dynamics, f0)?;
    let d = f0.dim_single();
    let terms: Vec<CMatrix> = (0..=f0.n_max() - s)
        .into_par_iter()
        .map(|n| {
            let clusters = cluster_with_singletons(s, n);
            let a = cumulant_matrix(dynamics, t, &clusters, f0.component(s + n), CumulantOptions::default())?;
            Ok(trace_last(&a, s + n, n, d) / C64::new(factorial(n), 0.0))
        })
        .collect::<Result<_>>()?;
    let dim = d.pow(s as u32);
    ManyBodyOperator::canonical(d, terms.into_iter().fold(CMatrix::zeros(dim, dim), |a, b| a + b))
}

/// All marginals at time `t`.
pub fn solve_bbgky_state(dynamics: &Dynamics, f0: &MarginalState, t: f64) -> Result<MarginalState> {
    let mut seq = f0.seq.clone();
    for s in 1..=f0.n_max() {
        seq.set_component(s, solve_bbgky_cumulant(dynamics, f0, s, t)?.into_matrix())?;
    }
    MarginalState::new(seq, f0.normalization)
}

fn check_dims(dynamics: &Dynamics, f: &MarginalState) -> Result<()> {
    if f.dim_single() != dynamics.dim_single() {
        return Err(Error::DimensionMismatch("marginals and system differ in d".into()));
    }
    Ok(())
}

/// Potentials meeting the first `s` particles and containing all of the
/// `m` particles after them.
fn collision_potential(dynamics: &Dynamics, s: usize, m: usize) -> Result<CMatrix> {
    let low = (1u64 << s) - 1;
    let high = ((1u64 << (s + m)) - 1) ^ low;
    potential_sum(dynamics.spec(), s + m, |mask| mask & low != 0 && mask & high == high)
}

/// Right-hand side of the marginal evolution equation for `F_s`: the
/// `s`-particle Liouvillian plus the traced couplings to higher marginals.
pub fn bbgky_rhs(dynamics: &Dynamics, f: &MarginalState, s: usize) -> Result<ManyBodyOperator> {
    f.check_s(s)?;
    check_dims(dynamics, f)?;
    let hbar = dynamics.hbar();
    let d = f.dim_single();
    let mut acc = commutator_rhs(f.component(s), &dynamics.hamiltonian(s)?, hbar);
    let max_order = dynamics.spec().orders().into_iter().max().unwrap_or(0);
    for m in 1..max_order.min(f.n_max() - s + 1) {
        let v = collision_potential(dynamics, s, m)?;
        let c = commutator_rhs(f.component(s + m), &v, hbar);
        acc += trace_last(&c, s + m, m, d) / C64::new(factorial(m), 0.0);
    }
    ManyBodyOperator::canonical(d, acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    /// Uniform grid with endpoints, trapezoid weights at every level.
    NestedTrapezoid,
    /// Iterated Gauss–Legendre with variable upper limits.
    #[serde(rename = "gauss-legendre-simplex")]
    GaussLegendre,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub order: usize,
    pub nodes_per_dim: usize,
    pub rule: QuadratureRule,
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order > MAX_ITERATION_ORDER {
            return Err(crate::error::capacity("iteration order", self.order, MAX_ITERATION_ORDER));
        }
        if self.nodes_per_dim < MIN_NODES {
            return Err(Error::InvalidArgument(format!("at least {MIN_NODES} quadrature nodes needed")));
        }
        if self.nodes_per_dim > MAX_NODES {
            return Err(crate::error::capacity("quadrature nodes", self.nodes_per_dim, MAX_NODES));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationResult {
    pub value: ManyBodyOperator,
    /// Trace norm of the change when the node count is halved.
    pub error_estimate: f64,
}

struct Iteration<'a> {
    dynamics: &'a Dynamics,
    f0: &'a MarginalState,
    s: usize,
    depth: usize,
    /// Two-body coupling of the newest particle to the others, per level.
    couplings: Vec<CMatrix>,
}

impl Iteration<'_> {
    fn free(&self, j: usize, tau: f64) -> Result<CMatrix> {
        self.dynamics.evolve(tau, self.s + j, self.f0.component(self.s + j))
    }

    /// `Tr_{last} (i/ħ)[x, Σ_i Φ(i, last)]` for `x` on `s + j + 1` particles.
    fn collision(&self, j: usize, x: &CMatrix) -> CMatrix {
        let n = self.s + j + 1;
        let c = commutator_rhs(x, &self.couplings[j], self.dynamics.hbar());
        trace_last(&c, n, 1, self.dynamics.dim_single())
    }

    fn trapezoid(&self, t: f64, p: usize) -> Result<CMatrix> {
        let h = t / (p - 1) as f64;
        let grid: Vec<f64> = (0..p).map(|k| k as f64 * h).collect();
        let mut level: Vec<CMatrix> = grid.iter().map(|&tau| self.free(self.depth, tau)).collect::<Result<_>>()?;
        for j in (0..self.depth).rev() {
            let n = self.s + j;
            let coll: Vec<CMatrix> = level.iter().map(|x| self.collision(j, x)).collect();
            level = (0..p)
                .into_par_iter()
                .map(|m| {
                    let mut acc = self.free(j, grid[m])?;
                    for (k, c) in coll.iter().enumerate().take(m + 1) {
                        if m == 0 {
                            break;
                        }
                        let w = if k == 0 || k == m { 0.5 * h } else { h };
                        acc += self.dynamics.evolve(grid[m] - grid[k], n, c)? * C64::new(w, 0.0);
                    }
                    Ok(acc)
                })
                .collect::<Result<_>>()?;
        }
        Ok(level.pop().expect("grid has at least two points"))
    }

    fn gauss(&self, rule: &GaussLegendre, j: usize, tau: f64) -> Result<CMatrix> {
        let mut acc = self.free(j, tau)?;
        if j == self.depth {
            return Ok(acc);
        }
        let pairs = rule.as_node_weight_pairs();
        let half = 0.5 * tau;
        let run = |&(x, w): &(f64, f64)| -> Result<CMatrix> {
            let sigma = half * (x + 1.0);
            let inner = self.collision(j, &self.gauss(rule, j + 1, sigma)?);
            Ok(self.dynamics.evolve(tau - sigma, self.s + j, &inner)? * C64::new(half * w, 0.0))
        };
        let parts: Vec<CMatrix> = if j == 0 {
            pairs.par_iter().map(run).collect::<Result<_>>()?
        } else {
            pairs.iter().map(run).collect::<Result<_>>()?
        };
        for p in parts {
            acc += p;
        }
        Ok(acc)
    }

    fn run(&self, t: f64, rule: QuadratureRule, p: usize) -> Result<CMatrix> {
        match rule {
            QuadratureRule::NestedTrapezoid => self.trapezoid(t, p),
            QuadratureRule::GaussLegendre => {
                let nodes = NonZeroUsize::new(p).expect("node count is positive");
                self.gauss(&GaussLegendre::new(nodes), 0, t)
            }
        }
    }
}

/// Truncated iteration series for `F_s(t)` with two-body potentials: nested
/// Duhamel integrals up to `q.order` levels, the deepest level evolved freely
/// from its initial marginal.
pub fn solve_bbgky_iteration(
    dynamics: &Dynamics,
    f0: &MarginalState,
    s: usize,
    t: f64,
    q: &QuadratureSpec,
) -> Result<IterationResult> {
    q.validate()?;
    f0.check_s(s)?;
    check_dims(dynamics, f0)?;
    if !dynamics.spec().is_two_body() {
        return Err(Error::InvalidArgument("the iteration series needs two-body potentials only".into()));
    }
    let depth = q.order.min(f0.n_max() - s);
    let couplings = (0..depth)
        .map(|j| {
            let n = s + j + 1;
            potential_sum(dynamics.spec(), n, |mask| mask & (1 << (n - 1)) != 0)
        })
        .collect::<Result<_>>()?;
    let it = Iteration { dynamics, f0, s, depth, couplings };
    let fine = it.run(t, q.rule, q.nodes_per_dim)?;
    let coarse = it.run(t, q.rule, (q.nodes_per_dim / 2).max(2))?;
    let error_estimate = trace_norm_matrix(&(&fine - coarse))?;
    Ok(IterationResult { value: ManyBodyOperator::canonical(f0.dim_single(), fine)?, error_estimate })
}

/// `G_s = Σ_P (−1)^{|P|−1}(|P|−1)! ∏_{X∈P} F_{|X|}(X)`.
pub fn correlation_from_marginals(f: &MarginalState, s: usize) -> Result<ManyBodyOperator> {
    f.check_s(s)?;
    let d = f.dim_single();
    let dim = d.pow(s as u32);
    let mut acc = CMatrix::zeros(dim, dim);
    for p in index_partitions(s)?.iter() {
        let parts: Vec<(&CMatrix, &[usize])> = p.iter().map(|b| (f.component(b.len()), b.as_slice())).collect();
        acc += kron_disjoint(&parts, s, d) * C64::new(mobius_for_blocks(p.len())? as f64, 0.0);
    }
    ManyBodyOperator::canonical(d, acc)
}

/// `G_s = Σ_n (1/n!) Tr_{s+1..s+n} g_{s+n}`, cut where `g` ends.
pub fn correlation_from_g(g: &CorrelationState, s: usize) -> Result<ManyBodyOperator> {
    if s == 0 || s > g.n_max() {
        return Err(Error::InvalidArgument(format!("s = {s} outside 1..={}", g.n_max())));
    }
    ManyBodyOperator::canonical(g.seq().dim_single(), annihilation_expand(g.seq())?.component(s).clone())
}

/// Correlation operators for chaos data: `Σ_n (1/n!) Tr 𝔄_{s+n}(t) ∏ G_1(0)`,
/// with particle numbers up to `cutoff`.
pub fn chaos_correlation_expansion(
    dynamics: &Dynamics,
    g1_0: &CMatrix,
    s: usize,
    t: f64,
    cutoff: usize,
) -> Result<ManyBodyOperator> {
    if s == 0 || s > cutoff {
        return Err(Error::InvalidArgument(format!("need 1 <= s <= cutoff, got s = {s}")));
    }
    let d = dynamics.dim_single();
    let terms: Vec<CMatrix> = (0..=cutoff - s)
        .into_par_iter()
        .map(|n| {
            let a = solve_chaos(dynamics, g1_0, s + n, t)?;
            Ok(trace_last(a.matrix(), s + n, n, d) / C64::new(factorial(n), 0.0))
        })
        .collect::<Result<_>>()?;
    let dim = d.pow(s as u32);
    ManyBodyOperator::canonical(d, terms.into_iter().fold(CMatrix::zeros(dim, dim), |a, b| a + b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParticleNumber {
    pub value: f64,
    /// Imaginary part of `Tr F_1`, zero up to rounding for Hermitian input.
    pub imag: f64,
}

/// `⟨N⟩ = Tr F_1`.
pub fn average_particle_number(f: &MarginalState) -> Result<ParticleNumber> {
    f.check_s(1)?;
    let tr = f.component(1).trace();
    Ok(ParticleNumber { value: tr.re, imag: tr.im })
}

fn check_one_body(a: &CMatrix, d: usize) -> Result<()> {
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::DimensionMismatch(format!("observable is {}x{}, expected {d}x{d}", a.nrows(), a.ncols())));
    }
    if (a - a.adjoint()).iter().any(|z| z.norm() > crate::operators::TOL_HERM) {
        return Err(Error::InvalidArgument("observable is not Hermitian".into()));
    }
    Ok(())
}

fn dispersion_terms(a: &CMatrix, f: &MarginalState) -> Result<(f64, f64, f64)> {
    let d = f.dim_single();
    check_one_body(a, d)?;
    f.check_s(2)?;
    let f1 = f.component(1);
    let mean = real((a * f1).trace(), "mean")?;
    let square = real((a * a * f1).trace(), "second moment")?;
    let aa = kron_disjoint(&[(a, &[0][..]), (a, &[1][..])], 2, d);
    let g2 = f.component(2) - kron_disjoint(&[(f1, &[0][..]), (f1, &[1][..])], 2, d);
    let pair = real((aa * g2).trace(), "pair term")?;
    Ok((mean, square, pair))
}

/// Variance of `Σ_i a(i)`: `Tr a² F_1 + Tr (a⊗a)(F_2 − F_1⊗F_1)`.
pub fn additive_dispersion(a: &CMatrix, f: &MarginalState) -> Result<f64> {
    let (_, square, pair) = dispersion_terms(a, f)?;
    Ok(square + pair)
}

/// `Tr (a² − ⟨a⟩²) F_1 + Tr (a⊗a)(F_2 − F_1⊗F_1)`, which subtracts the
/// squared mean twice. Agrees with [`additive_dispersion`] only when `⟨a⟩ = 0`.
pub fn additive_dispersion_uncorrected(a: &CMatrix, f: &MarginalState) -> Result<f64> {
    let (mean, square, pair) = dispersion_terms(a, f)?;
    let n = average_particle_number(f)?.value;
    Ok(square - mean * mean * n + pair)
}

/// Variance of `Σ_i a(i)` computed from the full density sequence by
/// building the observable and its square on every particle number.
pub fn dispersion_oracle(a: &CMatrix, d: &DensityState) -> Result<f64> {
    let dim1 = d.seq().dim_single();
    check_one_body(a, dim1)?;
    let z = partition_function(d)?;
    let (mut first, mut second) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for n in 1..=d.n_max() {
        let slots: Vec<[usize; 1]> = (0..n).map(|i| [i]).collect();
        let sum = slots
            .iter()
            .map(|sl| kron_disjoint(&[(a, &sl[..])], n, dim1))
            .fold(CMatrix::zeros(dim1.pow(n as u32), dim1.pow(n as u32)), |acc, m| acc + m);
        let w = C64::new(1.0 / factorial(n), 0.0);
        first += (&sum * d.component(n)).trace() * w;
        second += (&sum * &sum * d.component(n)).trace() * w;
    }
    let mean = real(first, "mean")? / z;
    Ok(real(second, "second moment")? / z - mean * mean)
}
