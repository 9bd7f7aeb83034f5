//! Seeded generators for test systems and states.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::hamiltonian::SystemSpec;
use crate::operators::{symmetrize, trace_norm_matrix, CMatrix, C64};
use crate::star_algebra::OperatorSequence;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix of independent standard complex Gaussians (unit variance per entry).
pub fn complex_gaussian(rng: &mut Rng, dim: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(s * re, s * im)
    })
}

/// GUE-style Hermitian matrix `(B + B†)/2`.
pub fn random_hermitian(rng: &mut Rng, dim: usize) -> CMatrix {
    let b = complex_gaussian(rng, dim);
    (&b + b.adjoint()) * C64::new(0.5, 0.0)
}

/// Hermitian matrix on `k` particles invariant under relabeling.
pub fn random_symmetric_hermitian(rng: &mut Rng, k: usize, d: usize) -> CMatrix {
    symmetrize(&random_hermitian(rng, d.pow(k as u32)), k, d)
}

/// Positive semidefinite matrix with the given trace. Symmetrized over
/// particle relabelings when `symmetric` is set, which keeps positivity.
pub fn random_density(rng: &mut Rng, n: usize, d: usize, trace: f64, symmetric: bool) -> CMatrix {
    let b = complex_gaussian(rng, d.pow(n as u32));
    let mut m = &b * b.adjoint();
    if symmetric && n > 1 {
        m = symmetrize(&m, n, d);
    }
    let tr = m.trace().re;
    m * C64::new(trace / tr, 0.0)
}

/// Density sequence `(1, z ρ_1, z² ρ_2, ..., z^N ρ_N)` with random symmetric
/// unit-trace `ρ_n`. Small `z` keeps the correlation series short.
pub fn random_fugacity_sequence(rng: &mut Rng, d: usize, n_max: usize, z: f64) -> Result<OperatorSequence> {
    let rest = (1..=n_max).map(|n| random_density(rng, n, d, z.powi(n as i32), true)).collect();
    OperatorSequence::plain(d, C64::new(1.0, 0.0), rest)
}

/// Plain sequence with scalar 0 and GUE components scaled by `scale`.
pub fn random_hermitian_sequence(rng: &mut Rng, d: usize, n_max: usize, scale: f64) -> Result<OperatorSequence> {
    let rest = (1..=n_max).map(|n| random_hermitian(rng, d.pow(n as u32)) * C64::new(scale, 0.0)).collect();
    OperatorSequence::plain(d, C64::new(0.0, 0.0), rest)
}

/// Plain sequence with scalar 0 and complex Gaussian components rescaled to
/// trace norm `norm`.
pub fn random_normalized_sequence(rng: &mut Rng, d: usize, n_max: usize, norm: f64) -> Result<OperatorSequence> {
    let rest = (1..=n_max)
        .map(|n| {
            let m = complex_gaussian(rng, d.pow(n as u32));
            let tn = trace_norm_matrix(&m)?;
            Ok(m * C64::new(norm / tn, 0.0))
        })
        .collect::<Result<_>>()?;
    OperatorSequence::plain(d, C64::new(0.0, 0.0), rest)
}

/// Random system with GUE one-body part and symmetric potentials of the
/// requested orders, each scaled by `coupling`.
pub fn random_spec(seed: u64, d: usize, orders: &[usize], coupling: f64) -> Result<SystemSpec> {
    let mut rng = rng_from_seed(seed);
    let h1 = random_hermitian(&mut rng, d);
    let pots: BTreeMap<usize, CMatrix> = orders
        .iter()
        .map(|&k| (k, random_symmetric_hermitian(&mut rng, k, d) * C64::new(coupling, 0.0)))
        .collect();
    SystemSpec::new(d, 1.0, h1, pots)
}
