//! Correlation sequences, their cluster transforms and the solution of the
//! nonlinear hierarchy they obey.

use crate::cumulants::{cumulant_matrix, scattering_cumulant_matrix, CumulantOptions};
use crate::error::{Error, Result};
use crate::evolution::{evolve_density_sequence, Dynamics};
use crate::hamiltonian::{commutator_rhs, potential_sum};
use crate::operators::{kron_disjoint, trace_norm_matrix, CMatrix, ManyBodyOperator, C64};
use crate::partitions::{index_partitions, IndexPartition};
use crate::star_algebra::{star_exp, star_ln, OperatorSequence};

/// Largest cutoff accepted by the hierarchy solvers.
pub const MAX_HIERARCHY_N: usize = 6;
/// Largest particle number for the chaos solutions.
pub const MAX_CHAOS_N: usize = 7;

/// A sequence `(0, g_1, g_2, ...)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationState {
    seq: OperatorSequence,
}

impl CorrelationState {
    pub fn new(seq: OperatorSequence) -> Result<Self> {
        if seq.prefix() != 0 || seq.scalar0() != C64::new(0.0, 0.0) {
            return Err(Error::InvalidArgument(
                "a correlation sequence is plain with zero scalar component".into(),
            ));
        }
        Ok(Self { seq })
    }

    /// Chaos data: only the one-particle component is nonzero.
    pub fn chaos(g1: &CMatrix, n_max: usize) -> Result<Self> {
        let d = g1.nrows();
        let mut seq = OperatorSequence::zeros(d, 0, n_max)?;
        seq.set_component(1, g1.clone())?;
        Self::new(seq)
    }

    pub fn seq(&self) -> &OperatorSequence {
        &self.seq
    }

    pub fn into_seq(self) -> OperatorSequence {
        self.seq
    }

    pub fn n_max(&self) -> usize {
        self.seq.n_max()
    }

    pub fn component(&self, n: usize) -> &CMatrix {
        self.seq.component(n)
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.seq.distance(&other.seq)
    }
}

/// A sequence `(1, D_1, D_2, ...)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    seq: OperatorSequence,
}

impl DensityState {
    pub fn new(seq: OperatorSequence) -> Result<Self> {
        if seq.prefix() != 0 || seq.scalar0() != C64::new(1.0, 0.0) {
            return Err(Error::InvalidArgument(
                "a density sequence is plain with unit scalar component".into(),
            ));
        }
        Ok(Self { seq })
    }

    /// Like [`DensityState::new`], also requiring every component to be a
    /// density operator.
    pub fn physical(seq: OperatorSequence) -> Result<Self> {
        let s = Self::new(seq)?;
        for n in 1..=s.n_max() {
            s.seq.component_op(n)?.check_density()?;
        }
        Ok(s)
    }

    pub fn seq(&self) -> &OperatorSequence {
        &self.seq
    }

    pub fn into_seq(self) -> OperatorSequence {
        self.seq
    }

    pub fn n_max(&self) -> usize {
        self.seq.n_max()
    }

    pub fn component(&self, n: usize) -> &CMatrix {
        self.seq.component(n)
    }
}

pub fn cluster_expand(g: &CorrelationState) -> Result<DensityState> {
    DensityState::new(star_exp(&g.seq)?)
}

pub fn cluster_invert(d: &DensityState) -> Result<CorrelationState> {
    CorrelationState::new(star_ln(&d.seq)?)
}

fn partition_slots(p: &IndexPartition) -> Vec<Vec<usize>> {
    p.clone()
}

/// `∏_X g_{|X|}(X)` for the blocks of `p` on `n` slots.
fn block_product_raw(seq: &OperatorSequence, p: &[Vec<usize>], n: usize) -> CMatrix {
    let parts: Vec<(&CMatrix, &[usize])> =
        p.iter().map(|b| (seq.component(b.len()), b.as_slice())).collect();
    kron_disjoint(&parts, n, seq.dim_single())
}

fn check_cutoff(g: &CorrelationState) -> Result<()> {
    if g.n_max() > MAX_HIERARCHY_N {
        return Err(crate::error::capacity("hierarchy cutoff", g.n_max(), MAX_HIERARCHY_N));
    }
    Ok(())
}

/// Component `n` of the solution: a cumulant over the blocks of every
/// partition, acting on the product of initial correlations.
pub fn solve_component(dynamics: &Dynamics, g0: &CorrelationState, n: usize, t: f64) -> Result<CMatrix> {
    let dim = g0.component(n).nrows();
    let mut acc = CMatrix::zeros(dim, dim);
    for p in index_partitions(n)?.iter() {
        let slots = partition_slots(p);
        let operand = block_product_raw(&g0.seq, &slots, n);
        acc += cumulant_matrix(dynamics, t, &slots, &operand, CumulantOptions::default())?;
    }
    Ok(acc)
}

pub fn solve_hierarchy(dynamics: &Dynamics, g0: &CorrelationState, t: f64) -> Result<CorrelationState> {
    check_cutoff(g0)?;
    if g0.seq.dim_single() != dynamics.dim_single() {
        return Err(Error::DimensionMismatch("state and system differ in d".into()));
    }
    let mut out = g0.seq.clone();
    for n in 1..=g0.n_max() {
        out.set_component(n, solve_component(dynamics, g0, n, t)?)?;
    }
    CorrelationState::new(out)
}

/// Expand to densities, evolve each with its unitary group, invert again.
pub fn oracle_solution(dynamics: &Dynamics, g0: &CorrelationState, t: f64) -> Result<CorrelationState> {
    let d0 = cluster_expand(g0)?;
    let dt = DensityState::new(evolve_density_sequence(dynamics, &d0.seq, t)?)?;
    cluster_invert(&dt)
}

fn kron_power(g1: &CMatrix, n: usize) -> CMatrix {
    let d = g1.nrows();
    let slots: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let parts: Vec<(&CMatrix, &[usize])> = slots.iter().map(|s| (g1, s.as_slice())).collect();
    kron_disjoint(&parts, n, d)
}

fn check_chaos(dynamics: &Dynamics, g1: &CMatrix, n: usize) -> Result<()> {
    if n == 0 || n > MAX_CHAOS_N {
        return Err(crate::error::capacity("chaos particle number", n, MAX_CHAOS_N));
    }
    if g1.nrows() != dynamics.dim_single() || g1.ncols() != dynamics.dim_single() {
        return Err(Error::DimensionMismatch("one-particle operator does not match d".into()));
    }
    Ok(())
}

/// `n`-th order cumulant on the `n`-fold product of the initial one-particle
/// correlation.
pub fn solve_chaos(dynamics: &Dynamics, g1_0: &CMatrix, n: usize, t: f64) -> Result<ManyBodyOperator> {
    check_chaos(dynamics, g1_0, n)?;
    let slots: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let m = cumulant_matrix(dynamics, t, &slots, &kron_power(g1_0, n), CumulantOptions::default())?;
    ManyBodyOperator::canonical(dynamics.dim_single(), m)
}

/// The same correlation written with scattering-operator cumulants acting on
/// the product of the evolved one-particle correlations.
pub fn solve_chaos_scattering_form(
    dynamics: &Dynamics,
    g1_0: &CMatrix,
    n: usize,
    t: f64,
) -> Result<ManyBodyOperator> {
    check_chaos(dynamics, g1_0, n)?;
    let g1_t = dynamics.evolve(t, 1, g1_0)?;
    let slots: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let m = scattering_cumulant_matrix(dynamics, t, &slots, &kron_power(&g1_t, n))?;
    ManyBodyOperator::canonical(dynamics.dim_single(), m)
}

/// Potential coupling every block of `p` (given as slot lists).
fn coupling_potential(dynamics: &Dynamics, p: &[Vec<usize>], n: usize) -> Result<CMatrix> {
    let masks: Vec<u64> = p.iter().map(|b| b.iter().fold(0u64, |m, &i| m | 1 << i)).collect();
    potential_sum(dynamics.spec(), n, |s| masks.iter().all(|&m| s & m != 0))
}

/// Right-hand side of the hierarchy: the Liouvillian on `g_n` plus the
/// interaction between the blocks of every nontrivial partition.
pub fn nonlinear_generator(dynamics: &Dynamics, g: &CorrelationState) -> Result<CorrelationState> {
    check_cutoff(g)?;
    let hbar = dynamics.hbar();
    let mut out = OperatorSequence::zeros(g.seq.dim_single(), 0, g.n_max())?;
    for n in 1..=g.n_max() {
        let h = dynamics.hamiltonian(n)?;
        let mut acc = commutator_rhs(g.component(n), &h, hbar);
        for p in index_partitions(n)?.iter().filter(|p| p.len() > 1) {
            let slots = partition_slots(p);
            let prod = block_product_raw(&g.seq, &slots, n);
            acc += commutator_rhs(&prod, &coupling_potential(dynamics, &slots, n)?, hbar);
        }
        out.set_component(n, acc)?;
    }
    CorrelationState::new(out)
}

/// Largest componentwise trace-norm gap between `𝔄_{t1}(𝔄_{t2} g)`,
/// `𝔄_{t2}(𝔄_{t1} g)` and `𝔄_{t1+t2} g`.
pub fn verify_group_property(dynamics: &Dynamics, g: &CorrelationState, t1: f64, t2: f64) -> Result<f64> {
    let direct = solve_hierarchy(dynamics, g, t1 + t2)?;
    let a = solve_hierarchy(dynamics, &solve_hierarchy(dynamics, g, t2)?, t1)?;
    let b = solve_hierarchy(dynamics, &solve_hierarchy(dynamics, g, t1)?, t2)?;
    Ok(a.distance(&direct)?.max(b.distance(&direct)?))
}

/// Both sides of the growth bound for component `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthBound {
    pub lhs: f64,
    pub rhs: f64,
    /// Largest trace norm among `g_1..g_n`.
    pub c: f64,
}

impl GrowthBound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }

    /// The bound with `c` replaced by `max(c, 1)`, which also covers small
    /// initial data.
    pub fn rhs_clamped(&self, n: usize) -> f64 {
        growth_rhs(n, self.c.max(1.0))
    }
}

fn growth_rhs(n: usize, c: f64) -> f64 {
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    fact * (2.0 * n as f64 + 1.0).exp() * c.powi(n as i32)
}

/// `‖(𝔄_t g)_n‖_1` against `n! e^{2n+1} c^n`, where `c` is the largest trace
/// norm of any block correlation `g_k`, `k ≤ n`.
pub fn verify_growth_bound(dynamics: &Dynamics, g: &CorrelationState, t: f64, n: usize) -> Result<GrowthBound> {
    check_cutoff(g)?;
    if n == 0 || n > g.n_max() {
        return Err(Error::InvalidArgument(format!("component {n} not in 1..={}", g.n_max())));
    }
    let lhs = trace_norm_matrix(&solve_component(dynamics, g, n, t)?)?;
    let c = (1..=n).try_fold(0.0f64, |m, k| Ok::<_, Error>(m.max(trace_norm_matrix(g.component(k))?)))?;
    Ok(GrowthBound { lhs, rhs: growth_rhs(n, c), c })
}

/// Finite-difference check of the weak form: `d/dt Tr(φ g_n(t))` against the
/// adjoint generators acting on `φ`, traced with the solution at `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakSolutionCheck {
    pub derivative: C64,
    pub rhs: C64,
    pub residual: f64,
}

pub fn weak_solution_check(
    dynamics: &Dynamics,
    phi_n: &ManyBodyOperator,
    g0: &CorrelationState,
    t: f64,
    h: f64,
) -> Result<WeakSolutionCheck> {
    let n = phi_n.n_particles();
    if n == 0 || n > g0.n_max() {
        return Err(Error::InvalidArgument(format!("test operator on {n} particles, cutoff {}", g0.n_max())));
    }
    let tr = |g: &CorrelationState| (phi_n.matrix() * g.component(n)).trace();
    let plus = solve_hierarchy(dynamics, g0, t + h)?;
    let minus = solve_hierarchy(dynamics, g0, t - h)?;
    let derivative = (tr(&plus) - tr(&minus)) / C64::new(2.0 * h, 0.0);

    let g = solve_hierarchy(dynamics, g0, t)?;
    let hbar = dynamics.hbar();
    // adjoint of f ↦ (i/ħ)[f, A] is φ ↦ −(i/ħ)[φ, A]
    let adj = |a: &CMatrix| commutator_rhs(phi_n.matrix(), a, hbar) * C64::new(-1.0, 0.0);
    let mut rhs = (adj(&dynamics.hamiltonian(n)?) * g.component(n)).trace();
    for p in index_partitions(n)?.iter().filter(|p| p.len() > 1) {
        let slots = partition_slots(p);
        let prod = block_product_raw(&g.seq, &slots, n);
        rhs += (adj(&coupling_potential(dynamics, &slots, n)?) * prod).trace();
    }
    Ok(WeakSolutionCheck { derivative, rhs, residual: (derivative - rhs).norm() })
}

/// Correlations of the cluster `1..=s`, as one unit, with further particles,
/// evolved with cluster cumulants. `g0` holds the ordinary correlations and
/// `gcl0` (prefix `s`) the cluster ones at time zero.
pub fn solve_cluster_hierarchy(
    dynamics: &Dynamics,
    g0: &CorrelationState,
    gcl0: &OperatorSequence,
    t: f64,
) -> Result<OperatorSequence> {
    let s = gcl0.prefix();
    if s == 0 {
        return Err(Error::InvalidArgument("cluster sequence needs a prefix".into()));
    }
    if gcl0.n_max() > g0.n_max() {
        return Err(Error::InvalidArgument("plain correlations must reach the cluster cutoff".into()));
    }
    let d = dynamics.dim_single();
    let mut out = gcl0.clone();
    for n in 0..=gcl0.n_max() {
        let total = s + n;
        let dim = d.pow(total as u32);
        let mut acc = CMatrix::zeros(dim, dim);
        // unit 0 is the cluster, units 1..=n the free particles
        for p in index_partitions(n + 1)?.iter() {
            let slots: Vec<Vec<usize>> = p
                .iter()
                .map(|b| {
                    let mut v: Vec<usize> = Vec::new();
                    for &u in b {
                        if u == 0 {
                            v.extend(0..s);
                        } else {
                            v.push(s + u - 1);
                        }
                    }
                    v.sort_unstable();
                    v
                })
                .collect();
            let mats: Vec<&CMatrix> = p
                .iter()
                .map(|b| if b[0] == 0 { gcl0.component(b.len() - 1) } else { g0.component(b.len()) })
                .collect();
            let parts: Vec<(&CMatrix, &[usize])> =
                mats.iter().zip(&slots).map(|(m, sl)| (*m, sl.as_slice())).collect();
            let operand = kron_disjoint(&parts, total, d);
            acc += cumulant_matrix(dynamics, t, &slots, &operand, CumulantOptions::default())?;
        }
        out.set_component(n, acc)?;
    }
    Ok(out)
}
