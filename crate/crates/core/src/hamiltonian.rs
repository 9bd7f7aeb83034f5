//! Many-particle Hamiltonians with k-body potentials and their commutator
//! generators.
//!
//! Every `*_apply` function returns the right-hand side of an evolution
//! equation, i.e. `(i/ħ)(f H − H f)` for the full Liouvillian.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::operators::{
    dim_for, is_permutation_symmetric, kron_disjoint, max_abs, CMatrix, ManyBodyOperator, C64,
    TOL_HERM,
};
use crate::partitions::{ClusterSet, ParticleSet};

/// Single-particle dimension, ħ, the one-body Hamiltonian and the k-body
/// potentials (keyed by k ≥ 2).
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    dim_single: usize,
    hbar: f64,
    one_body: CMatrix,
    potentials: BTreeMap<usize, CMatrix>,
}

fn hermitian_error(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint())) / max_abs(m).max(1.0)
}

impl SystemSpec {
    pub fn new(
        dim_single: usize,
        hbar: f64,
        one_body: CMatrix,
        potentials: BTreeMap<usize, CMatrix>,
    ) -> Result<Self> {
        if dim_single < 2 {
            return Err(Error::InvalidArgument(format!("dim_single must be >= 2, got {dim_single}")));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidArgument(format!("hbar must be positive, got {hbar}")));
        }
        if one_body.nrows() != dim_single || one_body.ncols() != dim_single {
            return Err(Error::DimensionMismatch(format!(
                "one-body matrix must be {dim_single}x{dim_single}"
            )));
        }
        if hermitian_error(&one_body) > TOL_HERM {
            return Err(Error::InvalidArgument("one-body matrix is not Hermitian".into()));
        }
        for (&k, phi) in &potentials {
            if k < 2 {
                return Err(Error::InvalidArgument(format!("potential order {k} must be >= 2")));
            }
            let dim = dim_for(dim_single, k)?;
            if phi.nrows() != dim || phi.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "{k}-body potential must be {dim}x{dim}"
                )));
            }
            if phi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Numerical(format!("{k}-body potential is not finite")));
            }
            if hermitian_error(phi) > TOL_HERM {
                return Err(Error::InvalidArgument(format!("{k}-body potential is not Hermitian")));
            }
            if !is_permutation_symmetric(phi, k, dim_single, TOL_HERM) {
                return Err(Error::InvalidArgument(format!(
                    "{k}-body potential is not symmetric under particle exchange"
                )));
            }
        }
        Ok(Self { dim_single, hbar, one_body, potentials })
    }

    pub fn dim_single(&self) -> usize {
        self.dim_single
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn one_body(&self) -> &CMatrix {
        &self.one_body
    }

    pub fn potentials(&self) -> &BTreeMap<usize, CMatrix> {
        &self.potentials
    }

    pub fn potential(&self, k: usize) -> Option<&CMatrix> {
        self.potentials.get(&k)
    }

    pub fn orders(&self) -> Vec<usize> {
        self.potentials.keys().copied().collect()
    }

    /// Same one-body part, no interaction.
    pub fn without_interaction(&self) -> Self {
        Self { potentials: BTreeMap::new(), ..self.clone() }
    }

    /// True if no potential of order above two is present.
    pub fn is_two_body(&self) -> bool {
        self.potentials.keys().all(|&k| k == 2)
    }

    /// True if every potential is exactly zero.
    pub fn is_free(&self) -> bool {
        self.potentials.values().all(|m| max_abs(m) == 0.0)
    }
}

/// Subsets of `0..n` (as slot lists) of the given size, in bitmask order.
fn slot_subsets(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u64..1 << n)
        .filter(move |m| m.count_ones() as usize == k)
        .map(move |m| (0..n).filter(|&i| m >> i & 1 == 1).collect())
}

/// Interaction terms of an `n`-particle Hamiltonian as (order, slots) pairs.
pub fn interaction_terms(spec: &SystemSpec, n: usize) -> Vec<(usize, Vec<usize>)> {
    let mut terms = Vec::new();
    for &k in spec.potentials.keys().filter(|&&k| k <= n) {
        for slots in slot_subsets(n, k) {
            terms.push((k, slots));
        }
    }
    terms
}

/// Hamiltonian matrix of `n` particles.
pub fn hamiltonian_matrix(spec: &SystemSpec, n: usize) -> Result<CMatrix> {
    let d = spec.dim_single;
    let dim = dim_for(d, n)?;
    let mut h = CMatrix::zeros(dim, dim);
    for i in 0..n {
        h += kron_disjoint(&[(&spec.one_body, &[i])], n, d);
    }
    for (k, slots) in interaction_terms(spec, n) {
        h += kron_disjoint(&[(&spec.potentials[&k], &slots)], n, d);
    }
    Ok(h)
}

pub fn build_hamiltonian(spec: &SystemSpec, labels: &ParticleSet) -> Result<ManyBodyOperator> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("Hamiltonian needs at least one particle".into()));
    }
    ManyBodyOperator::new(labels.clone(), spec.dim_single, hamiltonian_matrix(spec, labels.len())?)
}

/// `(i/ħ)(f a − a f)`.
pub fn commutator_rhs(f: &CMatrix, a: &CMatrix, hbar: f64) -> CMatrix {
    (f * a - a * f) * C64::new(0.0, 1.0 / hbar)
}

/// `(i/ħ)(f H − H f)`, the right-hand side of the von Neumann equation.
pub fn liouvillian_apply(
    h: &ManyBodyOperator,
    f: &ManyBodyOperator,
    hbar: f64,
) -> Result<ManyBodyOperator> {
    if h.labels() != f.labels() || h.dim_single() != f.dim_single() {
        return Err(Error::LabelMismatch(format!(
            "Hamiltonian on {:?}, operand on {:?}",
            h.labels(),
            f.labels()
        )));
    }
    f.with_matrix(commutator_rhs(f.matrix(), h.matrix(), hbar))
}

/// `(i/ħ)[f, Φ]` with the potential placed on `cluster`.
pub fn interaction_liouvillian_apply(
    phi_k: &CMatrix,
    cluster: &ParticleSet,
    f: &ManyBodyOperator,
    hbar: f64,
) -> Result<ManyBodyOperator> {
    let d = f.dim_single();
    if phi_k.nrows() != d.pow(cluster.len() as u32) || phi_k.nrows() != phi_k.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "potential of size {} does not act on {} particles",
            phi_k.nrows(),
            cluster.len()
        )));
    }
    let slots = f.labels().positions_of(cluster)?;
    let v = kron_disjoint(&[(phi_k, &slots)], f.n_particles(), d);
    f.with_matrix(commutator_rhs(f.matrix(), &v, hbar))
}

/// Sum of embedded potentials over all particle subsets of an `n`-particle
/// system selected by `keep` (given as a bitmask over slots).
pub fn potential_sum(spec: &SystemSpec, n: usize, keep: impl Fn(u64) -> bool) -> Result<CMatrix> {
    let d = spec.dim_single;
    let dim = dim_for(d, n)?;
    let mut v = CMatrix::zeros(dim, dim);
    for (k, slots) in interaction_terms(spec, n) {
        let mask = slots.iter().fold(0u64, |m, &i| m | 1 << i);
        if keep(mask) {
            v += kron_disjoint(&[(&spec.potentials[&k], &slots)], n, d);
        }
    }
    Ok(v)
}

/// Slot bitmasks of each cluster inside `labels`.
pub fn cluster_masks(blocks: &ClusterSet, labels: &ParticleSet) -> Result<Vec<u64>> {
    if blocks.union() != *labels {
        return Err(Error::LabelMismatch(format!(
            "clusters cover {:?}, operand has {:?}",
            blocks.union(),
            labels
        )));
    }
    blocks
        .elements()
        .iter()
        .map(|e| Ok(labels.positions_of(e)?.iter().fold(0u64, |m, &i| m | 1 << i)))
        .collect()
}

/// Potential energy that couples every cluster: the sum of potentials over
/// particle subsets meeting each cluster in at least one particle.
pub fn cluster_coupling_potential(
    spec: &SystemSpec,
    blocks: &ClusterSet,
    labels: &ParticleSet,
) -> Result<CMatrix> {
    let masks = cluster_masks(blocks, labels)?;
    potential_sum(spec, labels.len(), |s| masks.iter().all(|&m| s & m != 0))
}

/// Interaction generator between clusters: one nonempty subset from each
/// cluster, acted on by the potential of the combined order.
pub fn cluster_interaction_apply(
    blocks: &ClusterSet,
    f: &ManyBodyOperator,
    spec: &SystemSpec,
) -> Result<ManyBodyOperator> {
    if blocks.len() < 2 {
        return Err(Error::InvalidArgument("cluster interaction needs at least two clusters".into()));
    }
    if f.dim_single() != spec.dim_single {
        return Err(Error::DimensionMismatch("operand and system differ in d".into()));
    }
    let v = cluster_coupling_potential(spec, blocks, f.labels())?;
    f.with_matrix(commutator_rhs(f.matrix(), &v, spec.hbar))
}

/// Sum of all interaction generators of order ≥ 2 on `f`.
pub fn total_interaction_apply(f: &ManyBodyOperator, spec: &SystemSpec) -> Result<ManyBodyOperator> {
    let v = potential_sum(spec, f.n_particles(), |_| true)?;
    f.with_matrix(commutator_rhs(f.matrix(), &v, spec.hbar))
}
