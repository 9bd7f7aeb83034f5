//! Labeled operators on `H^{⊗n}` with a finite single-particle space.
//!
//! Index convention: a basis state of `n` particles is the multi-index
//! `(i_1, ..., i_n)` in ascending label order, flattened lexicographically so
//! the lowest label is the most significant digit.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{capacity, Error, Result};
use crate::partitions::{ParticleSet, Partition};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Relative Hermiticity tolerance.
pub const TOL_HERM: f64 = 1e-10;
/// Absolute eigenvalue tolerance for positivity.
pub const TOL_PSD: f64 = 1e-10;
/// Largest matrix dimension any operator may have.
pub const MAX_DIM: usize = 1024;

/// `d^n`, guarded by [`MAX_DIM`].
pub fn dim_for(d: usize, n: usize) -> Result<usize> {
    let mut dim = 1usize;
    for _ in 0..n {
        dim = dim.checked_mul(d).filter(|&x| x <= MAX_DIM).ok_or(capacity(
            "operator dimension",
            n,
            MAX_DIM,
        ))?;
    }
    Ok(dim)
}

fn strides(n: usize, d: usize) -> Vec<usize> {
    let mut s = vec![1usize; n];
    for k in (0..n.saturating_sub(1)).rev() {
        s[k] = s[k + 1] * d;
    }
    s
}

/// Sub-index of global index `i` restricted to `slots`, in the order given.
fn sub_index(i: usize, slots: &[usize], strides: &[usize], d: usize) -> usize {
    slots.iter().fold(0, |acc, &k| acc * d + (i / strides[k]) % d)
}

/// Tensor product of operators acting on disjoint slots of an `n`-particle
/// space, with identity on the uncovered slots.
///
/// Each part is a matrix together with the slot positions it acts on, listed
/// in the order of the matrix's own tensor factors.
pub fn kron_disjoint(parts: &[(&CMatrix, &[usize])], n: usize, d: usize) -> CMatrix {
    let dim = d.pow(n as u32);
    let st = strides(n, d);
    let mut covered = vec![false; n];
    for (m, slots) in parts {
        debug_assert_eq!(m.nrows(), d.pow(slots.len() as u32));
        for &k in slots.iter() {
            debug_assert!(!covered[k], "slot {k} covered twice");
            covered[k] = true;
        }
    }
    let free: Vec<usize> = (0..n).filter(|&k| !covered[k]).collect();
    let subs: Vec<Vec<usize>> = parts
        .iter()
        .map(|(_, slots)| (0..dim).map(|i| sub_index(i, slots, &st, d)).collect())
        .collect();
    let key: Vec<usize> = (0..dim).map(|i| sub_index(i, &free, &st, d)).collect();
    let mut groups = vec![Vec::new(); d.pow(free.len() as u32)];
    for i in 0..dim {
        groups[key[i]].push(i);
    }
    let mut out = CMatrix::zeros(dim, dim);
    for group in &groups {
        for &i in group {
            for &j in group {
                let mut v = C64::new(1.0, 0.0);
                for (p, (m, _)) in parts.iter().enumerate() {
                    v *= m[(subs[p][i], subs[p][j])];
                }
                out[(i, j)] = v;
            }
        }
    }
    out
}

/// Permutes tensor factors: slot `k` of the result holds slot `perm[k]` of
/// the input.
pub fn permute_slots(m: &CMatrix, perm: &[usize], d: usize) -> CMatrix {
    let n = perm.len();
    let dim = m.nrows();
    let st = strides(n, d);
    let map: Vec<usize> = (0..dim)
        .map(|i| {
            // digit k of the result is digit perm[k] of the source index
            (0..n).fold(0, |acc, k| acc + ((i / st[k]) % d) * st[perm[k]])
        })
        .collect();
    CMatrix::from_fn(dim, dim, |i, j| m[(map[i], map[j])])
}

/// Traces out the slots not in `keep` (which must be ascending).
pub fn trace_slots(m: &CMatrix, n: usize, d: usize, keep: &[usize]) -> CMatrix {
    let st = strides(n, d);
    let traced: Vec<usize> = (0..n).filter(|k| !keep.contains(k)).collect();
    let offsets = |slots: &[usize]| -> Vec<usize> {
        let count = d.pow(slots.len() as u32);
        let sub = strides(slots.len(), d);
        (0..count)
            .map(|r| slots.iter().enumerate().map(|(m, &k)| ((r / sub[m]) % d) * st[k]).sum())
            .collect()
    };
    let off_keep = offsets(keep);
    let off_tr = offsets(&traced);
    let kd = off_keep.len();
    CMatrix::from_fn(kd, kd, |a, b| {
        off_tr.iter().map(|&t| m[(off_keep[a] + t, off_keep[b] + t)]).sum()
    })
}

/// Traces out the last `k` of `n` slots.
pub fn trace_last(m: &CMatrix, n: usize, k: usize, d: usize) -> CMatrix {
    if k == 0 {
        return m.clone();
    }
    let inner = d.pow(k as u32);
    let outer = d.pow((n - k) as u32);
    CMatrix::from_fn(outer, outer, |a, b| {
        (0..inner).map(|t| m[(a * inner + t, b * inner + t)]).sum()
    })
}

/// `u f u†`.
pub fn conjugate(u: &CMatrix, f: &CMatrix) -> CMatrix {
    u * f * u.adjoint()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Sum of singular values.
pub fn trace_norm_matrix(m: &CMatrix) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("trace norm of non-finite matrix".into()));
    }
    let sv = m.clone().singular_values();
    Ok(sv.iter().sum())
}

/// Eigenvalues of the Hermitian part, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn is_hermitian_matrix(m: &CMatrix, tol: f64) -> bool {
    let scale = max_abs(m).max(1.0);
    max_abs(&(m - m.adjoint())) <= tol * scale
}

/// An operator on the tensor factors of a labeled set of particles.
#[derive(Clone, Debug, PartialEq)]
pub struct ManyBodyOperator {
    labels: ParticleSet,
    dim_single: usize,
    matrix: CMatrix,
}

impl ManyBodyOperator {
    pub fn new(labels: ParticleSet, dim_single: usize, matrix: CMatrix) -> Result<Self> {
        if dim_single < 1 {
            return Err(Error::InvalidArgument("single-particle dimension must be positive".into()));
        }
        let dim = dim_for(dim_single, labels.len())?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {dim}x{dim} for {} particles with d={dim_single}, got {}x{}",
                labels.len(),
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical("operator has non-finite entries".into()));
        }
        Ok(Self { labels, dim_single, matrix })
    }

    /// Operator on the canonical labels `1..n`.
    pub fn canonical(dim_single: usize, matrix: CMatrix) -> Result<Self> {
        let dim = matrix.nrows();
        let mut n = 0;
        let mut p = 1;
        while p < dim {
            p *= dim_single;
            n += 1;
        }
        if p != dim {
            return Err(Error::DimensionMismatch(format!(
                "{dim} is not a power of {dim_single}"
            )));
        }
        Self::new(ParticleSet::range(n), dim_single, matrix)
    }

    pub fn identity(labels: ParticleSet, dim_single: usize) -> Result<Self> {
        let dim = dim_for(dim_single, labels.len())?;
        Self::new(labels, dim_single, CMatrix::identity(dim, dim))
    }

    pub fn zeros(labels: ParticleSet, dim_single: usize) -> Result<Self> {
        let dim = dim_for(dim_single, labels.len())?;
        Self::new(labels, dim_single, CMatrix::zeros(dim, dim))
    }

    pub fn labels(&self) -> &ParticleSet {
        &self.labels
    }

    pub fn dim_single(&self) -> usize {
        self.dim_single
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn n_particles(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Same matrix on different labels of equal count.
    pub fn relabel(&self, labels: ParticleSet) -> Result<Self> {
        if labels.len() != self.labels.len() {
            return Err(Error::LabelMismatch(format!(
                "cannot relabel {:?} as {:?}",
                self.labels, labels
            )));
        }
        Ok(Self { labels, dim_single: self.dim_single, matrix: self.matrix.clone() })
    }

    pub fn with_matrix(&self, matrix: CMatrix) -> Result<Self> {
        Self::new(self.labels.clone(), self.dim_single, matrix)
    }

    fn check_same_space(&self, other: &Self) -> Result<()> {
        if self.dim_single != other.dim_single {
            return Err(Error::DimensionMismatch(format!(
                "d={} vs d={}",
                self.dim_single, other.dim_single
            )));
        }
        if self.labels != other.labels {
            return Err(Error::LabelMismatch(format!("{:?} vs {:?}", self.labels, other.labels)));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(Self { matrix: &self.matrix + &other.matrix, ..self.clone() })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(Self { matrix: &self.matrix - &other.matrix, ..self.clone() })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(Self { matrix: &self.matrix * &other.matrix, ..self.clone() })
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { matrix: &self.matrix * c, ..self.clone() }
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), ..self.clone() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_space(other)?;
        Ok(max_abs(&(&self.matrix - &other.matrix)))
    }

    pub fn trace_norm(&self) -> Result<f64> {
        trace_norm_matrix(&self.matrix)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        is_hermitian_matrix(&self.matrix, tol)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix)[0]
    }

    /// Hermitian within [`TOL_HERM`] and positive semidefinite within
    /// [`TOL_PSD`].
    pub fn is_density(&self) -> bool {
        self.is_hermitian(TOL_HERM) && self.min_eigenvalue() >= -TOL_PSD
    }

    pub fn check_density(&self) -> Result<()> {
        if !self.is_hermitian(TOL_HERM) {
            return Err(Error::InvalidArgument(format!(
                "operator on {:?} is not Hermitian",
                self.labels
            )));
        }
        let min = self.min_eigenvalue();
        if min < -TOL_PSD {
            return Err(Error::InvalidArgument(format!(
                "operator on {:?} has negative eigenvalue {min:e}",
                self.labels
            )));
        }
        Ok(())
    }
}

/// Embeds `op` into `target`, acting as the identity on the added particles.
pub fn tensor_embed(op: &ManyBodyOperator, target: &ParticleSet) -> Result<ManyBodyOperator> {
    let slots = target.positions_of(op.labels())?;
    let d = op.dim_single();
    dim_for(d, target.len())?;
    let m = kron_disjoint(&[(op.matrix(), &slots)], target.len(), d);
    ManyBodyOperator::new(target.clone(), d, m)
}

/// Product of block operators over a partition, as one operator on the ground set.
pub fn block_product(p: &Partition, block_ops: &[ManyBodyOperator]) -> Result<ManyBodyOperator> {
    let d = block_ops
        .first()
        .map(|o| o.dim_single())
        .ok_or_else(|| Error::InvalidArgument("no block operators given".into()))?;
    let ground = p.ground();
    dim_for(d, ground.len())?;
    let mut parts = Vec::with_capacity(p.len());
    for block in p.blocks() {
        let op = block_ops
            .iter()
            .find(|o| o.labels() == block)
            .ok_or_else(|| Error::LabelMismatch(format!("no operator for block {block:?}")))?;
        if op.dim_single() != d {
            return Err(Error::DimensionMismatch("block operators differ in d".into()));
        }
        parts.push((op.matrix(), ground.positions_of(block)?));
    }
    let refs: Vec<(&CMatrix, &[usize])> = parts.iter().map(|(m, s)| (*m, s.as_slice())).collect();
    ManyBodyOperator::new(ground.clone(), d, kron_disjoint(&refs, ground.len(), d))
}

/// Traces out the particles in `traced`.
pub fn partial_trace(op: &ManyBodyOperator, traced: &ParticleSet) -> Result<ManyBodyOperator> {
    if !traced.is_subset(op.labels()) {
        return Err(Error::LabelMismatch(format!(
            "cannot trace {traced:?} out of {:?}",
            op.labels()
        )));
    }
    let rest = op.labels().difference(traced);
    let keep = op.labels().positions_of(&rest)?;
    let m = trace_slots(op.matrix(), op.n_particles(), op.dim_single(), &keep);
    ManyBodyOperator::new(rest, op.dim_single(), m)
}

pub fn trace_norm(op: &ManyBodyOperator) -> Result<f64> {
    op.trace_norm()
}

/// True iff `op` is invariant under every relabeling of its particles.
/// Adjacent transpositions generate the symmetric group, so only those are
/// checked.
pub fn check_mb_symmetry(op: &ManyBodyOperator, tol: f64) -> bool {
    is_permutation_symmetric(op.matrix(), op.n_particles(), op.dim_single(), tol)
}

pub fn is_permutation_symmetric(m: &CMatrix, n: usize, d: usize, tol: f64) -> bool {
    let scale = max_abs(m).max(1.0);
    (0..n.saturating_sub(1)).all(|k| {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.swap(k, k + 1);
        max_abs(&(permute_slots(m, &perm, d) - m)) <= tol * scale
    })
}

/// Average of `m` over all relabelings of its `n` particles.
pub fn symmetrize(m: &CMatrix, n: usize, d: usize) -> CMatrix {
    let perms = permutations(n);
    let mut acc = CMatrix::zeros(m.nrows(), m.ncols());
    for p in &perms {
        acc += permute_slots(m, p, d);
    }
    acc / C64::new(perms.len() as f64, 0.0)
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::enumerate_partitions;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn mat2(a: [[(f64, f64); 2]; 2]) -> CMatrix {
        CMatrix::from_fn(2, 2, |i, j| c(a[i][j].0, a[i][j].1))
    }

    fn ps(v: &[u32]) -> ParticleSet {
        ParticleSet::new(v.to_vec()).unwrap()
    }

    /// Plain Kronecker product, written out by index arithmetic.
    fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
        let (ra, rb) = (a.nrows(), b.nrows());
        CMatrix::from_fn(ra * rb, ra * rb, |i, j| a[(i / rb, j / rb)] * b[(i % rb, j % rb)])
    }

    fn sample(seed: u64, dim: usize) -> CMatrix {
        // small deterministic pseudo-random matrix, independent of the crate's generators
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        CMatrix::from_fn(dim, dim, |_, _| {
            let mut next = || {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            };
            c(next(), next())
        })
    }

    #[test]
    fn embed_identity_and_kron_structure() {
        let id = ManyBodyOperator::identity(ps(&[1]), 2).unwrap();
        let e = tensor_embed(&id, &ps(&[1, 2])).unwrap();
        assert_eq!(e.matrix(), &CMatrix::identity(4, 4));

        let a = mat2([[(1.0, 0.0), (2.0, 1.0)], [(0.5, -1.0), (3.0, 0.0)]]);
        let op = ManyBodyOperator::new(ps(&[2]), 2, a.clone()).unwrap();
        let e = tensor_embed(&op, &ps(&[1, 2])).unwrap();
        assert!(max_abs(&(e.matrix() - kron(&CMatrix::identity(2, 2), &a))) < 1e-15);
        let op1 = ManyBodyOperator::new(ps(&[1]), 2, a.clone()).unwrap();
        let e1 = tensor_embed(&op1, &ps(&[1, 2])).unwrap();
        assert!(max_abs(&(e1.matrix() - kron(&a, &CMatrix::identity(2, 2)))) < 1e-15);
    }

    #[test]
    fn embed_then_trace_gap_particle() {
        let a = sample(3, 4);
        let op = ManyBodyOperator::new(ps(&[1, 3]), 2, a.clone()).unwrap();
        let e = tensor_embed(&op, &ps(&[1, 2, 3])).unwrap();
        // direct index computation: entry ((i1,i2,i3),(j1,j2,j3)) = a((i1,i3),(j1,j3)) δ(i2,j2)
        for i in 0..8 {
            for j in 0..8 {
                let (i1, i2, i3) = (i / 4, (i / 2) % 2, i % 2);
                let (j1, j2, j3) = (j / 4, (j / 2) % 2, j % 2);
                let want = if i2 == j2 { a[(i1 * 2 + i3, j1 * 2 + j3)] } else { c(0.0, 0.0) };
                assert_eq!(e.matrix()[(i, j)], want);
            }
        }
        let back = partial_trace(&e, &ps(&[2])).unwrap();
        assert_eq!(back.labels(), &ps(&[1, 3]));
        assert!(max_abs(&(back.matrix() - &a * c(2.0, 0.0))) < 1e-14);
    }

    #[test]
    fn block_product_cases() {
        let a = sample(1, 2);
        let b = sample(2, 2);
        let ground = ParticleSet::range(2);
        let parts = enumerate_partitions(&ground).unwrap();
        let single = ManyBodyOperator::new(ground.clone(), 2, sample(9, 4)).unwrap();
        let p0 = block_product(&parts[0], std::slice::from_ref(&single)).unwrap();
        assert_eq!(p0, single);
        let oa = ManyBodyOperator::new(ps(&[1]), 2, a.clone()).unwrap();
        let ob = ManyBodyOperator::new(ps(&[2]), 2, b.clone()).unwrap();
        let p1 = block_product(&parts[1], &[ob.clone(), oa.clone()]).unwrap();
        assert!(max_abs(&(p1.matrix() - kron(&a, &b))) < 1e-15);
        let tr = p1.trace() - a.trace() * b.trace();
        assert!(tr.norm() < 1e-14);
        assert!(block_product(&parts[1], &[oa]).is_err());
    }

    #[test]
    fn partial_trace_cases() {
        let a = sample(4, 2);
        let b = sample(5, 2);
        let ab = ManyBodyOperator::new(ParticleSet::range(2), 2, kron(&a, &b)).unwrap();
        let none = partial_trace(&ab, &ParticleSet::empty()).unwrap();
        assert_eq!(none, ab);
        let t2 = partial_trace(&ab, &ps(&[2])).unwrap();
        assert!(max_abs(&(t2.matrix() - &a * b.trace())) < 1e-14);
        let r = ManyBodyOperator::new(ParticleSet::range(2), 2, sample(6, 4)).unwrap();
        let all = partial_trace(&r, &ParticleSet::range(2)).unwrap();
        let diag: C64 = (0..4).map(|i| r.matrix()[(i, i)]).sum();
        assert_eq!(all.dim(), 1);
        assert!((all.matrix()[(0, 0)] - diag).norm() < 1e-14);
        assert!(partial_trace(&r, &ps(&[3])).is_err());
        let m = sample(7, 8);
        assert!(max_abs(&(trace_last(&m, 3, 2, 2) - trace_slots(&m, 3, 2, &[0]))) < 1e-14);
    }

    #[test]
    fn trace_norm_cases() {
        let id = ManyBodyOperator::identity(ps(&[1]), 2).unwrap();
        assert!((id.trace_norm().unwrap() - 2.0).abs() < 1e-14);
        let v = nalgebra::DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let proj = &v * v.adjoint();
        assert!((trace_norm_matrix(&proj).unwrap() - 1.0).abs() < 1e-14);
        let a = sample(8, 2);
        let b = sample(9, 2);
        let lhs = trace_norm_matrix(&kron(&a, &b)).unwrap();
        let rhs = trace_norm_matrix(&a).unwrap() * trace_norm_matrix(&b).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn symmetry_cases() {
        let id = ManyBodyOperator::identity(ParticleSet::range(3), 2).unwrap();
        assert!(check_mb_symmetry(&id, 1e-12));
        let a = sample(10, 2);
        let b = sample(11, 2);
        let aa = ManyBodyOperator::canonical(2, kron(&a, &a)).unwrap();
        assert!(check_mb_symmetry(&aa, 1e-12));
        let ab = ManyBodyOperator::canonical(2, kron(&a, &b)).unwrap();
        assert!(!check_mb_symmetry(&ab, 1e-12));
        // explicit swap conjugation for the 2-particle case
        let swap = CMatrix::from_fn(4, 4, |i, j| {
            if j == (i % 2) * 2 + i / 2 {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let swapped = &swap * ab.matrix() * &swap;
        assert!(max_abs(&(swapped - kron(&b, &a))) < 1e-15);
        let sym = symmetrize(&kron(&a, &b), 2, 2);
        assert!(is_permutation_symmetric(&sym, 2, 2, 1e-12));
        assert_eq!(permutations(3).len(), 6);
    }

    #[test]
    fn dimension_guards() {
        assert!(ManyBodyOperator::new(ParticleSet::range(2), 2, CMatrix::zeros(3, 3)).is_err());
        assert!(dim_for(2, 11).is_err());
        assert!(ManyBodyOperator::canonical(2, CMatrix::zeros(6, 6)).is_err());
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = c(f64::NAN, 0.0);
        assert!(ManyBodyOperator::new(ps(&[1]), 2, m).is_err());
    }

    fn arb_matrix(dim: usize) -> impl Strategy<Value = CMatrix> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * dim)
            .prop_map(move |v| CMatrix::from_fn(dim, dim, |i, j| c(v[i * dim + j].0, v[i * dim + j].1)))
    }

    proptest! {
        #[test]
        fn embed_repeats_spectrum(a in arb_matrix(2)) {
            let h = (&a + a.adjoint()) * c(0.5, 0.0);
            let op = ManyBodyOperator::new(ps(&[2]), 2, h.clone()).unwrap();
            let e = tensor_embed(&op, &ParticleSet::range(3)).unwrap();
            let small = hermitian_eigenvalues(&h);
            let big = hermitian_eigenvalues(e.matrix());
            let mut want: Vec<f64> = small.iter().flat_map(|&x| std::iter::repeat_n(x, 4)).collect();
            want.sort_by(f64::total_cmp);
            for (x, y) in big.iter().zip(&want) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }

        #[test]
        fn trace_of_embed_over_complement(a in arb_matrix(4)) {
            let op = ManyBodyOperator::new(ps(&[2, 4]), 2, a.clone()).unwrap();
            let target = ParticleSet::range(4);
            let e = tensor_embed(&op, &target).unwrap();
            let back = partial_trace(&e, &ps(&[1, 3])).unwrap();
            prop_assert!(max_abs(&(back.matrix() - &a * c(4.0, 0.0))) < 1e-12);
            prop_assert!((e.trace() - a.trace() * c(4.0, 0.0)).norm() < 1e-12);
        }

        #[test]
        fn block_order_irrelevant(a in arb_matrix(2), b in arb_matrix(4)) {
            let ground = ParticleSet::range(3);
            let p = Partition::new(ground.clone(), vec![ps(&[2]), ps(&[1, 3])]).unwrap();
            let oa = ManyBodyOperator::new(ps(&[2]), 2, a).unwrap();
            let ob = ManyBodyOperator::new(ps(&[1, 3]), 2, b).unwrap();
            let x = block_product(&p, &[oa.clone(), ob.clone()]).unwrap();
            let y = block_product(&p, &[ob.clone(), oa.clone()]).unwrap();
            prop_assert!(x.max_abs_diff(&y).unwrap() <= 1e-13);
            let ea = tensor_embed(&oa, &ground).unwrap();
            let eb = tensor_embed(&ob, &ground).unwrap();
            prop_assert!(ea.mul(&eb).unwrap().max_abs_diff(&x).unwrap() <= 1e-13);
            prop_assert!(eb.mul(&ea).unwrap().max_abs_diff(&x).unwrap() <= 1e-13);
        }

        #[test]
        fn trace_norm_is_a_norm(a in arb_matrix(4), b in arb_matrix(4), s in -3.0f64..3.0) {
            let na = trace_norm_matrix(&a).unwrap();
            let nb = trace_norm_matrix(&b).unwrap();
            let nab = trace_norm_matrix(&(&a + &b)).unwrap();
            prop_assert!(nab <= na + nb + 1e-12);
            let ns = trace_norm_matrix(&(&a * c(s, 0.0))).unwrap();
            prop_assert!((ns - s.abs() * na).abs() < 1e-10);
            prop_assert!(na + 1e-12 >= a.trace().norm());
        }
    }
}
