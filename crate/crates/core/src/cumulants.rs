//! Cumulants of the evolution groups over sets of clusters.
//!
//! A cumulant is a signed sum of blockwise conjugations, so it is stored as a
//! list of `(coefficient, blocks)` terms and applied to an operand; the
//! superoperator itself is never materialized.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolution::{cluster_slots, Dynamics};
use crate::operators::{conjugate, kron_disjoint, CMatrix, ManyBodyOperator, C64};
use crate::partitions::{index_partitions, mobius_for_blocks, ClusterSet, ParticleSet};

/// Largest particle number for [`recover_group_from_cumulants`].
pub const MAX_RECOVER_SIZE: usize = 4;

/// One term of a cumulant: coefficient and the slot blocks that evolve
/// independently.
pub type ConjugationTerm = (i64, Vec<Vec<usize>>);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CumulantOptions {
    /// Compensated summation of the partition terms.
    pub compensated: bool,
    /// Return zero at `t = 0` for two or more clusters without evaluating
    /// the (cancelling) partition sum.
    pub zero_time_shortcut: bool,
    /// Evaluate partition terms on the rayon pool.
    pub parallel: bool,
}

impl Default for CumulantOptions {
    fn default() -> Self {
        Self { compensated: false, zero_time_shortcut: true, parallel: true }
    }
}

/// Clusters (as particle sets) and a time.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulantRequest {
    pub clusters: ClusterSet,
    pub t: f64,
}

/// Terms of the cumulant over clusters given as slot lists: one term per
/// partition of the clusters, each block of clusters evolving as a whole.
pub fn cumulant_terms(clusters: &[Vec<usize>]) -> Result<Vec<ConjugationTerm>> {
    let parts = index_partitions(clusters.len())?;
    parts
        .iter()
        .map(|p| {
            let blocks = p
                .iter()
                .map(|b| {
                    let mut s: Vec<usize> = b.iter().flat_map(|&c| clusters[c].iter().copied()).collect();
                    s.sort_unstable();
                    s
                })
                .collect();
            Ok((mobius_for_blocks(p.len())?, blocks))
        })
        .collect()
}

/// Terms of the tensor product of superoperators acting on disjoint slots.
pub fn tensor_terms(factors: &[Vec<ConjugationTerm>]) -> Vec<ConjugationTerm> {
    let mut acc: Vec<ConjugationTerm> = vec![(1, Vec::new())];
    for f in factors {
        let mut next = Vec::with_capacity(acc.len() * f.len());
        for (c, blocks) in &acc {
            for (c2, blocks2) in f {
                let mut b = blocks.clone();
                b.extend(blocks2.iter().cloned());
                next.push((c * c2, b));
            }
        }
        acc = next;
    }
    acc
}

fn kahan_sum(terms: Vec<CMatrix>) -> CMatrix {
    let (r, c) = terms.first().map(|m| m.shape()).unwrap_or((0, 0));
    let mut sum = CMatrix::zeros(r, c);
    let mut comp = CMatrix::zeros(r, c);
    for t in terms {
        for k in 0..sum.len() {
            let y = t[k] - comp[k];
            let s = sum[k] + y;
            comp[k] = (s - sum[k]) - y;
            sum[k] = s;
        }
    }
    sum
}

fn sum_terms(terms: Vec<CMatrix>, compensated: bool, r: usize) -> CMatrix {
    if compensated {
        return kahan_sum(terms);
    }
    let mut acc = CMatrix::zeros(r, r);
    for t in terms {
        acc += t;
    }
    acc
}

/// Applies `Σ c · (⊗_b U_b(t)) f (⊗_b U_b(t))†` in canonical term order.
pub fn apply_terms(
    dynamics: &Dynamics,
    t: f64,
    terms: &[ConjugationTerm],
    f: &CMatrix,
    opts: CumulantOptions,
) -> Result<CMatrix> {
    let eval = |(c, blocks): &ConjugationTerm| -> Result<CMatrix> {
        Ok(dynamics.evolve_blocks(t, blocks, f)? * C64::new(*c as f64, 0.0))
    };
    let parts: Vec<CMatrix> = if opts.parallel && terms.len() >= 8 {
        terms.par_iter().map(eval).collect::<Result<_>>()?
    } else {
        terms.iter().map(eval).collect::<Result<_>>()?
    };
    Ok(sum_terms(parts, opts.compensated, f.nrows()))
}

/// Cumulant over clusters given as slot lists, applied to a raw matrix.
pub fn cumulant_matrix(
    dynamics: &Dynamics,
    t: f64,
    clusters: &[Vec<usize>],
    f: &CMatrix,
    opts: CumulantOptions,
) -> Result<CMatrix> {
    if clusters.len() >= 2 && t == 0.0 && opts.zero_time_shortcut {
        return Ok(CMatrix::zeros(f.nrows(), f.ncols()));
    }
    apply_terms(dynamics, t, &cumulant_terms(clusters)?, f, opts)
}

pub fn cumulant_apply_with(
    dynamics: &Dynamics,
    req: &CumulantRequest,
    f: &ManyBodyOperator,
    opts: CumulantOptions,
) -> Result<ManyBodyOperator> {
    let slots = cluster_slots(&req.clusters, f.labels())?;
    f.with_matrix(cumulant_matrix(dynamics, req.t, &slots, f.matrix(), opts)?)
}

pub fn cumulant_apply(
    dynamics: &Dynamics,
    req: &CumulantRequest,
    f: &ManyBodyOperator,
) -> Result<ManyBodyOperator> {
    cumulant_apply_with(dynamics, req, f, CumulantOptions::default())
}

/// Trace norm of the `n`-th order cumulant of a free system applied to `f`.
pub fn cumulant_vanishes_free(dynamics: &Dynamics, n: usize, f: &ManyBodyOperator, t: f64) -> Result<f64> {
    if !dynamics.spec().is_free() {
        return Err(Error::InvalidArgument("system has nonzero potentials".into()));
    }
    if n < 2 || f.n_particles() != n {
        return Err(Error::InvalidArgument(format!("need n >= 2 particles matching f, got {n}")));
    }
    let req = CumulantRequest { clusters: ClusterSet::singletons(f.labels()), t };
    cumulant_apply(dynamics, &req, f)?.trace_norm()
}

/// Central difference `(𝔄(h) f − 𝔄(−h) f) / 2h`.
pub fn cumulant_generator_fd(
    dynamics: &Dynamics,
    clusters: &ClusterSet,
    f: &ManyBodyOperator,
    h: f64,
) -> Result<ManyBodyOperator> {
    if clusters.len() < 2 {
        return Err(Error::InvalidArgument("generator check needs at least two clusters".into()));
    }
    if !(1e-6..=1e-2).contains(&h) {
        return Err(Error::InvalidArgument(format!("step {h} outside [1e-6, 1e-2]")));
    }
    let slots = cluster_slots(clusters, f.labels())?;
    let opts = CumulantOptions::default();
    let plus = cumulant_matrix(dynamics, h, &slots, f.matrix(), opts)?;
    let minus = cumulant_matrix(dynamics, -h, &slots, f.matrix(), opts)?;
    f.with_matrix((plus - minus) / C64::new(2.0 * h, 0.0))
}

fn singleton_slots(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|i| vec![i]).collect()
}

/// Free particles evolved back by `t`, then the interacting system forward
/// by `t`.
pub fn scattering_matrix(dynamics: &Dynamics, t: f64, n: usize, f: &CMatrix) -> Result<CMatrix> {
    let back = dynamics.evolve_blocks(-t, &singleton_slots(n), f)?;
    dynamics.evolve(t, n, &back)
}

pub fn scattering_operator_apply(
    dynamics: &Dynamics,
    t: f64,
    labels: &ParticleSet,
    f: &ManyBodyOperator,
) -> Result<ManyBodyOperator> {
    if f.labels() != labels || labels.is_empty() {
        return Err(Error::LabelMismatch(format!("operand on {:?}, expected {labels:?}", f.labels())));
    }
    f.with_matrix(scattering_matrix(dynamics, t, labels.len(), f.matrix())?)
}

/// The two factors composed the other way round: interacting first, then
/// free particles back.
pub fn scattering_operator_apply_reversed(
    dynamics: &Dynamics,
    t: f64,
    labels: &ParticleSet,
    f: &ManyBodyOperator,
) -> Result<ManyBodyOperator> {
    if f.labels() != labels || labels.is_empty() {
        return Err(Error::LabelMismatch(format!("operand on {:?}, expected {labels:?}", f.labels())));
    }
    let fwd = dynamics.evolve(t, labels.len(), f.matrix())?;
    f.with_matrix(dynamics.evolve_blocks(-t, &singleton_slots(labels.len()), &fwd)?)
}

/// Cumulant of the scattering operators over clusters: each block of a
/// cluster partition carries its own scattering operator.
pub fn scattering_cumulant_matrix(
    dynamics: &Dynamics,
    t: f64,
    clusters: &[Vec<usize>],
    f: &CMatrix,
) -> Result<CMatrix> {
    let n: usize = clusters.iter().map(Vec::len).sum();
    let d = dynamics.dim_single();
    let u1_back = dynamics.group(1)?.propagator(-t);
    let mut acc = CMatrix::zeros(f.nrows(), f.ncols());
    for (c, blocks) in cumulant_terms(clusters)? {
        let mats: Vec<CMatrix> = blocks
            .iter()
            .map(|b| {
                let m = b.len();
                let singles: Vec<(&CMatrix, Vec<usize>)> = (0..m).map(|i| (&u1_back, vec![i])).collect();
                let refs: Vec<(&CMatrix, &[usize])> = singles.iter().map(|(u, s)| (*u, s.as_slice())).collect();
                Ok(dynamics.group(m)?.propagator(t) * kron_disjoint(&refs, m, d))
            })
            .collect::<Result<_>>()?;
        let parts: Vec<(&CMatrix, &[usize])> = mats.iter().zip(&blocks).map(|(w, b)| (w, b.as_slice())).collect();
        let w = kron_disjoint(&parts, n, d);
        acc += conjugate(&w, f) * C64::new(c as f64, 0.0);
    }
    Ok(acc)
}

/// Rebuilds the full group from products of lower-order cumulants, one per
/// block of each partition of `labels`.
pub fn recover_group_from_cumulants(
    dynamics: &Dynamics,
    t: f64,
    labels: &ParticleSet,
    f: &ManyBodyOperator,
) -> Result<ManyBodyOperator> {
    let n = labels.len();
    if n > MAX_RECOVER_SIZE {
        return Err(crate::error::capacity("group recovery", n, MAX_RECOVER_SIZE));
    }
    if f.labels() != labels {
        return Err(Error::LabelMismatch(format!("operand on {:?}, expected {labels:?}", f.labels())));
    }
    let mut terms = Vec::new();
    for p in index_partitions(n)?.iter() {
        let factors: Vec<Vec<ConjugationTerm>> = p
            .iter()
            .map(|block| cumulant_terms(&block.iter().map(|&i| vec![i]).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        terms.extend(tensor_terms(&factors));
    }
    f.with_matrix(apply_terms(dynamics, t, &terms, f.matrix(), CumulantOptions::default())?)
}
