//! Unitary groups `e^{-itH/ħ}` and their conjugation action.
//!
//! `group_apply(ug, t, f)` evolves `f` forward by `t`:
//! `f ↦ e^{-itH/ħ} f e^{itH/ħ}`.

use std::sync::OnceLock;

use nalgebra::{DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::hamiltonian::{build_hamiltonian, hamiltonian_matrix, SystemSpec};
use crate::operators::{conjugate, kron_disjoint, max_abs, CMatrix, ManyBodyOperator, C64};
use crate::partitions::{ClusterSet, ParticleSet};
use crate::star_algebra::OperatorSequence;

/// Spectral data of a Hamiltonian.
#[derive(Clone, Debug)]
pub struct UnitaryGroup {
    labels: ParticleSet,
    eigenvalues: DVector<f64>,
    eigenvectors: CMatrix,
    hbar: f64,
}

impl UnitaryGroup {
    pub fn from_hamiltonian(h: &ManyBodyOperator, hbar: f64) -> Result<Self> {
        if !h.is_hermitian(1e-10) {
            return Err(Error::InvalidArgument("Hamiltonian is not Hermitian".into()));
        }
        let eig = SymmetricEigen::try_new(h.matrix().clone(), 1e-15, 10_000)
            .ok_or_else(|| Error::Numerical("eigendecomposition did not converge".into()))?;
        let recon = &eig.eigenvectors
            * CMatrix::from_diagonal(&eig.eigenvalues.map(|x| C64::new(x, 0.0)))
            * eig.eigenvectors.adjoint();
        let scale = max_abs(h.matrix()).max(1.0);
        if max_abs(&(recon - h.matrix())) > 1e-10 * scale {
            return Err(Error::Numerical("eigendecomposition failed to reconstruct H".into()));
        }
        Ok(Self {
            labels: h.labels().clone(),
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            hbar,
        })
    }

    pub fn labels(&self) -> &ParticleSet {
        &self.labels
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// `e^{-itH/ħ}`.
    pub fn propagator(&self, t: f64) -> CMatrix {
        if t == 0.0 {
            let n = self.eigenvectors.nrows();
            return CMatrix::identity(n, n);
        }
        let phases = self.eigenvalues.map(|l| C64::from_polar(1.0, -l * t / self.hbar));
        let v = &self.eigenvectors;
        let mut vp = v.clone();
        for (j, ph) in phases.iter().enumerate() {
            for i in 0..vp.nrows() {
                vp[(i, j)] *= ph;
            }
        }
        vp * v.adjoint()
    }

    /// Conjugation of a raw matrix by `e^{-itH/ħ}`.
    pub fn evolve(&self, t: f64, f: &CMatrix) -> CMatrix {
        if t == 0.0 {
            return f.clone();
        }
        conjugate(&self.propagator(t), f)
    }
}

pub fn make_unitary_group(spec: &SystemSpec, labels: &ParticleSet) -> Result<UnitaryGroup> {
    UnitaryGroup::from_hamiltonian(&build_hamiltonian(spec, labels)?, spec.hbar())
}

pub fn group_apply(ug: &UnitaryGroup, t: f64, f: &ManyBodyOperator) -> Result<ManyBodyOperator> {
    if f.labels() != ug.labels() {
        return Err(Error::LabelMismatch(format!(
            "group on {:?}, operand on {:?}",
            ug.labels(),
            f.labels()
        )));
    }
    f.with_matrix(ug.evolve(t, f.matrix()))
}

/// Largest particle number the dynamics cache holds.
pub const MAX_GROUP_SIZE: usize = 10;

/// A system together with lazily built unitary groups for each particle
/// number. Potentials are symmetric, so the group of a particle set depends
/// only on its size; one decomposition per size serves every label set.
#[derive(Debug)]
pub struct Dynamics {
    spec: SystemSpec,
    groups: Vec<OnceLock<UnitaryGroup>>,
}

impl Dynamics {
    pub fn new(spec: SystemSpec) -> Self {
        Self { spec, groups: (0..=MAX_GROUP_SIZE).map(|_| OnceLock::new()).collect() }
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn dim_single(&self) -> usize {
        self.spec.dim_single()
    }

    pub fn hbar(&self) -> f64 {
        self.spec.hbar()
    }

    /// Group of `n` particles on labels `1..=n`.
    pub fn group(&self, n: usize) -> Result<&UnitaryGroup> {
        if n == 0 || n > MAX_GROUP_SIZE {
            return Err(crate::error::capacity("unitary group size", n, MAX_GROUP_SIZE));
        }
        if let Some(g) = self.groups[n].get() {
            return Ok(g);
        }
        let g = make_unitary_group(&self.spec, &ParticleSet::range(n))?;
        Ok(self.groups[n].get_or_init(|| g))
    }

    /// Hamiltonian matrix of `n` particles.
    pub fn hamiltonian(&self, n: usize) -> Result<CMatrix> {
        hamiltonian_matrix(&self.spec, n)
    }

    /// `⊗_b e^{-itH_{|b|}/ħ}` with block `b` on the given slots of `n`.
    pub fn block_propagator(&self, t: f64, blocks: &[Vec<usize>], n: usize) -> Result<CMatrix> {
        let props: Vec<CMatrix> =
            blocks.iter().map(|b| Ok(self.group(b.len())?.propagator(t))).collect::<Result<_>>()?;
        let parts: Vec<(&CMatrix, &[usize])> =
            props.iter().zip(blocks).map(|(u, b)| (u, b.as_slice())).collect();
        Ok(kron_disjoint(&parts, n, self.dim_single()))
    }

    /// Evolves a raw `n`-particle matrix with the blocks moving independently.
    pub fn evolve_blocks(&self, t: f64, blocks: &[Vec<usize>], f: &CMatrix) -> Result<CMatrix> {
        let n = blocks.iter().map(Vec::len).sum();
        Ok(conjugate(&self.block_propagator(t, blocks, n)?, f))
    }

    /// Evolves a raw `n`-particle matrix with the full group.
    pub fn evolve(&self, t: f64, n: usize, f: &CMatrix) -> Result<CMatrix> {
        if n == 0 {
            return Ok(f.clone());
        }
        Ok(self.group(n)?.evolve(t, f))
    }
}

/// Slot lists of each cluster inside `labels`.
pub fn cluster_slots(blocks: &ClusterSet, labels: &ParticleSet) -> Result<Vec<Vec<usize>>> {
    if blocks.union() != *labels {
        return Err(Error::LabelMismatch(format!(
            "clusters cover {:?}, operand has {:?}",
            blocks.union(),
            labels
        )));
    }
    blocks.elements().iter().map(|e| labels.positions_of(e)).collect()
}

/// Applies the product of the blockwise groups of each cluster.
pub fn group_apply_on_subsets(
    dynamics: &Dynamics,
    t: f64,
    blocks: &ClusterSet,
    f: &ManyBodyOperator,
) -> Result<ManyBodyOperator> {
    let slots = cluster_slots(blocks, f.labels())?;
    f.with_matrix(dynamics.evolve_blocks(t, &slots, f.matrix())?)
}

/// Evolves every component of a sequence; component 0 of a plain sequence
/// is left alone.
pub fn evolve_density_sequence(
    dynamics: &Dynamics,
    d0: &OperatorSequence,
    t: f64,
) -> Result<OperatorSequence> {
    if d0.dim_single() != dynamics.dim_single() {
        return Err(Error::DimensionMismatch("sequence and system differ in d".into()));
    }
    let p = d0.prefix();
    let comps = d0
        .components()
        .iter()
        .enumerate()
        .map(|(n, c)| dynamics.evolve(t, p + n, c))
        .collect::<Result<_>>()?;
    OperatorSequence::new(d0.dim_single(), p, comps)
}
