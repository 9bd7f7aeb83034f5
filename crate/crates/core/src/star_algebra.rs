//! Sequences of many-particle operators and their subset-convolution algebra.
//!
//! A sequence carries a `prefix` size `s`. Component `n` acts on `s + n`
//! particles with canonical labels `1..=s+n`; the first `s` labels form a
//! fixed cluster and only the remaining `n` are free. Plain sequences have
//! `s = 0`, so component 0 is a 1×1 scalar.

use crate::error::{Error, Result};
use crate::operators::{dim_for, kron_disjoint, permutations, permute_slots, trace_last,
    trace_norm_matrix, CMatrix, ManyBodyOperator, C64};
use crate::partitions::{index_partitions, ParticleSet};

/// Largest cutoff a sequence may carry.
pub const MAX_CUTOFF: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSequence {
    dim_single: usize,
    prefix: usize,
    components: Vec<CMatrix>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl OperatorSequence {
    /// Builds a sequence from components `0..=n_max`.
    pub fn new(dim_single: usize, prefix: usize, components: Vec<CMatrix>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("a sequence needs component 0".into()));
        }
        let n_max = components.len() - 1;
        if n_max > MAX_CUTOFF {
            return Err(crate::error::capacity("sequence cutoff", n_max, MAX_CUTOFF));
        }
        for (n, c) in components.iter().enumerate() {
            let dim = dim_for(dim_single, prefix + n)?;
            if c.nrows() != dim || c.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "component {n} must be {dim}x{dim}, got {}x{}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Numerical(format!("component {n} is not finite")));
            }
        }
        Ok(Self { dim_single, prefix, components })
    }

    /// Plain sequence from its scalar and components `1..=n_max`.
    pub fn plain(dim_single: usize, scalar0: C64, rest: Vec<CMatrix>) -> Result<Self> {
        let mut components = vec![CMatrix::from_element(1, 1, scalar0)];
        components.extend(rest);
        Self::new(dim_single, 0, components)
    }

    pub fn zeros(dim_single: usize, prefix: usize, n_max: usize) -> Result<Self> {
        let components = (0..=n_max)
            .map(|n| {
                let dim = dim_for(dim_single, prefix + n)?;
                Ok(CMatrix::zeros(dim, dim))
            })
            .collect::<Result<_>>()?;
        Self::new(dim_single, prefix, components)
    }

    /// The unit sequence `(1, 0, 0, ...)`.
    pub fn unit(dim_single: usize, n_max: usize) -> Result<Self> {
        let mut u = Self::zeros(dim_single, 0, n_max)?;
        u.components[0][(0, 0)] = C64::new(1.0, 0.0);
        Ok(u)
    }

    pub fn dim_single(&self) -> usize {
        self.dim_single
    }

    pub fn prefix(&self) -> usize {
        self.prefix
    }

    pub fn n_max(&self) -> usize {
        self.components.len() - 1
    }

    pub fn components(&self) -> &[CMatrix] {
        &self.components
    }

    /// Component `n`, or `None` past the cutoff.
    pub fn get(&self, n: usize) -> Option<&CMatrix> {
        self.components.get(n)
    }

    pub fn component(&self, n: usize) -> &CMatrix {
        &self.components[n]
    }

    /// Component `n` as a labeled operator on `1..=prefix+n`.
    pub fn component_op(&self, n: usize) -> Result<ManyBodyOperator> {
        let c = self.get(n).ok_or_else(|| {
            Error::InvalidArgument(format!("component {n} beyond cutoff {}", self.n_max()))
        })?;
        ManyBodyOperator::new(ParticleSet::range(self.prefix + n), self.dim_single, c.clone())
    }

    /// The scalar component of a plain sequence.
    pub fn scalar0(&self) -> C64 {
        debug_assert_eq!(self.prefix, 0);
        self.components[0][(0, 0)]
    }

    pub fn set_component(&mut self, n: usize, m: CMatrix) -> Result<()> {
        let dim = dim_for(self.dim_single, self.prefix + n)?;
        if n > self.n_max() || m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch(format!("cannot set component {n}")));
        }
        self.components[n] = m;
        Ok(())
    }

    pub fn set_scalar0(&mut self, c: C64) {
        debug_assert_eq!(self.prefix, 0);
        self.components[0][(0, 0)] = c;
    }

    /// Drops components above `n_max`, or pads with zeros up to it.
    pub fn with_cutoff(&self, n_max: usize) -> Result<Self> {
        let mut comps: Vec<CMatrix> = self.components.iter().take(n_max + 1).cloned().collect();
        for n in comps.len()..=n_max {
            let dim = dim_for(self.dim_single, self.prefix + n)?;
            comps.push(CMatrix::zeros(dim, dim));
        }
        Self::new(self.dim_single, self.prefix, comps)
    }

    pub fn map(&self, f: impl Fn(usize, &CMatrix) -> CMatrix) -> Result<Self> {
        let comps = self.components.iter().enumerate().map(|(n, c)| f(n, c)).collect();
        Self::new(self.dim_single, self.prefix, comps)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim_single != other.dim_single || self.prefix != other.prefix {
            return Err(Error::DimensionMismatch(format!(
                "sequences differ: d {} vs {}, prefix {} vs {}",
                self.dim_single, other.dim_single, self.prefix, other.prefix
            )));
        }
        Ok(())
    }

    /// Componentwise linear combination `a·self + b·other`, cutoff of the longer.
    pub fn combine(&self, a: C64, other: &Self, b: C64) -> Result<Self> {
        self.check_compatible(other)?;
        let n_max = self.n_max().max(other.n_max());
        let x = self.with_cutoff(n_max)?;
        let y = other.with_cutoff(n_max)?;
        x.map(|n, c| c * a + &y.components[n] * b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(C64::new(1.0, 0.0), other, C64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(C64::new(1.0, 0.0), other, C64::new(-1.0, 0.0))
    }

    pub fn scale(&self, a: C64) -> Self {
        Self { components: self.components.iter().map(|c| c * a).collect(), ..self.clone() }
    }

    /// Trace-norm distance of each component, over the common cutoff.
    pub fn component_distances(&self, other: &Self) -> Result<Vec<f64>> {
        self.check_compatible(other)?;
        let n = self.n_max().min(other.n_max());
        (0..=n).map(|k| trace_norm_matrix(&(&self.components[k] - &other.components[k]))).collect()
    }

    /// Largest componentwise trace-norm distance.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.component_distances(other)?.into_iter().fold(0.0, f64::max))
    }

    pub fn trace_norms(&self) -> Result<Vec<f64>> {
        self.components.iter().map(trace_norm_matrix).collect()
    }
}

/// Slot list helpers.
fn slots_from_mask(mask: u64, offset: usize, n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for i in 0..n {
        if mask >> i & 1 == 1 {
            inside.push(offset + i);
        } else {
            outside.push(offset + i);
        }
    }
    (inside, outside)
}

/// `Σ_{Z ⊆ free} a_{|Z|}(A ∪ Z) ⊗ b_{n-|Z|}(B ∪ free∖Z)` on `pa + pb + n`
/// slots, where `A` is the first `pa` slots and `B` the next `pb`.
/// Missing components (`None`) contribute nothing.
fn subset_convolution<'a>(
    a: &dyn Fn(usize) -> Option<&'a CMatrix>,
    pa: usize,
    b: &dyn Fn(usize) -> Option<&'a CMatrix>,
    pb: usize,
    n: usize,
    d: usize,
) -> CMatrix {
    let total = pa + pb + n;
    let dim = d.pow(total as u32);
    let mut acc = CMatrix::zeros(dim, dim);
    let pre_a: Vec<usize> = (0..pa).collect();
    let pre_b: Vec<usize> = (pa..pa + pb).collect();
    for mask in 0u64..1 << n {
        let k = mask.count_ones() as usize;
        let (Some(ma), Some(mb)) = (a(k), b(n - k)) else { continue };
        let (inside, outside) = slots_from_mask(mask, pa + pb, n);
        let sa: Vec<usize> = pre_a.iter().copied().chain(inside).collect();
        let sb: Vec<usize> = pre_b.iter().copied().chain(outside).collect();
        acc += kron_disjoint(&[(ma, &sa), (mb, &sb)], total, d);
    }
    acc
}

/// Subset-convolution product truncated at `cutoff`.
///
/// Prefixes add: the left factor's prefix comes first, then the right one's.
pub fn star_product_truncated(
    f: &OperatorSequence,
    h: &OperatorSequence,
    cutoff: usize,
) -> Result<OperatorSequence> {
    if f.dim_single != h.dim_single {
        return Err(Error::DimensionMismatch("sequences differ in d".into()));
    }
    let d = f.dim_single;
    let (pa, pb) = (f.prefix, h.prefix);
    dim_for(d, pa + pb + cutoff)?;
    let comps = (0..=cutoff)
        .map(|n| subset_convolution(&|k| f.get(k), pa, &|k| h.get(k), pb, n, d))
        .collect();
    OperatorSequence::new(d, pa + pb, comps)
}

/// Full product; the cutoff is the sum of the factors' cutoffs, so nothing
/// is dropped.
pub fn star_product(f: &OperatorSequence, h: &OperatorSequence) -> Result<OperatorSequence> {
    star_product_truncated(f, h, f.n_max() + h.n_max())
}

fn check_plain(f: &OperatorSequence, what: &str) -> Result<()> {
    if f.prefix != 0 {
        return Err(Error::InvalidArgument(format!("{what} needs a plain sequence")));
    }
    Ok(())
}

/// `Σ_{Z ∌ 1} root_{1+|Z|}({1} ∪ Z) ⊗ rest_{n-1-|Z|}(...)`, the expansion
/// over the block that contains the first free particle.
fn rooted_sum<'a>(
    root: &dyn Fn(usize) -> Option<&'a CMatrix>,
    rest: &dyn Fn(usize) -> Option<&'a CMatrix>,
    prefix: usize,
    n: usize,
    d: usize,
) -> CMatrix {
    subset_convolution(root, prefix, rest, 0, n, d)
}

/// Exponential of a sequence with zero scalar, to an explicit cutoff.
/// Components of `f` past its own cutoff count as zero.
pub fn star_exp_to(f: &OperatorSequence, cutoff: usize) -> Result<OperatorSequence> {
    check_plain(f, "star_exp")?;
    if f.scalar0().norm() != 0.0 {
        return Err(Error::InvalidArgument("star_exp needs a zero scalar component".into()));
    }
    let d = f.dim_single;
    dim_for(d, cutoff)?;
    let mut comps: Vec<CMatrix> = vec![CMatrix::from_element(1, 1, C64::new(1.0, 0.0))];
    for n in 1..=cutoff {
        // block of particle 1 is {1} ∪ Z, drawn from f; the rest is Exp f again
        let c = {
            let root = |k: usize| f.get(k + 1);
            let rest = |m: usize| comps.get(m);
            rooted_sum(&root, &rest, 1, n - 1, d)
        };
        comps.push(c);
    }
    OperatorSequence::new(d, 0, comps)
}

/// Exponential in the algebra truncated at the cutoff of `f`.
pub fn star_exp(f: &OperatorSequence) -> Result<OperatorSequence> {
    star_exp_to(f, f.n_max())
}

/// Logarithm of a sequence with unit scalar, to its own cutoff.
pub fn star_ln(g: &OperatorSequence) -> Result<OperatorSequence> {
    check_plain(g, "star_ln")?;
    if (g.scalar0() - C64::new(1.0, 0.0)).norm() != 0.0 {
        return Err(Error::InvalidArgument("star_ln needs scalar component 1".into()));
    }
    let d = g.dim_single;
    let mut comps: Vec<CMatrix> = vec![CMatrix::zeros(1, 1)];
    for n in 1..=g.n_max() {
        let c = {
            // every partition except the one-block one; that block is the unknown
            let root = |k: usize| if k + 1 < n { comps.get(k + 1) } else { None };
            let rest = |m: usize| g.get(m);
            &g.components[n] - rooted_sum(&root, &rest, 1, n - 1, d)
        };
        comps.push(c);
    }
    OperatorSequence::new(d, 0, comps)
}

/// Möbius inversion over the cluster set `{Y, s+1, ..., s+n}` where `Y` is the
/// first `s` particles and `d_seq` is a plain sequence: the correlation of
/// the cluster with `n` further particles, for `n = 0..=cutoff`.
pub fn cluster_mobius(d_seq: &OperatorSequence, s: usize, cutoff: usize) -> Result<OperatorSequence> {
    check_plain(d_seq, "cluster_mobius")?;
    if s == 0 {
        return Err(Error::InvalidArgument("cluster size must be at least 1".into()));
    }
    let d = d_seq.dim_single;
    dim_for(d, s + cutoff)?;
    let zero = |n: usize| CMatrix::zeros(d.pow((s + n) as u32), d.pow((s + n) as u32));
    let mut comps: Vec<CMatrix> = Vec::new();
    for n in 0..=cutoff {
        let top = d_seq.get(s + n).cloned().unwrap_or_else(|| zero(n));
        let c = {
            let root = |k: usize| if k < n { comps.get(k) } else { None };
            let rest = |m: usize| d_seq.get(m);
            top - subset_convolution(&root, s, &rest, 0, n, d)
        };
        comps.push(c);
    }
    OperatorSequence::new(d, s, comps)
}

/// `(𝔡_1 ⋯ 𝔡_s f)_n = f_{s+n}`: the first `s` particles become a prefix.
pub fn shift_map(f: &OperatorSequence, s: usize) -> Result<OperatorSequence> {
    if s == 0 {
        return Err(Error::InvalidArgument("shift needs s >= 1".into()));
    }
    if s > f.n_max() {
        return Err(Error::InvalidArgument(format!(
            "shift by {s} exceeds cutoff {}",
            f.n_max()
        )));
    }
    OperatorSequence::new(f.dim_single, f.prefix + s, f.components[s..].to_vec())
}

/// How a component on plain particles is read with a cluster in its first slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClusterShiftMode {
    /// Component `n` is `f_{s+n}` as is.
    Raw,
    /// `f_{s+n}` averaged over relabelings of the cluster's own particles.
    Symmetrized,
    /// Sum over partitions of `s+n` particles whose blocks all meet the
    /// cluster, of products of `f` over blocks. For `f = Ln D` this is the
    /// correlation of the cluster, taken as one unit, with the other particles.
    Connected,
}

/// Reads `f` with the first `s` particles glued into one cluster. The result
/// has cutoff `cutoff` in the free particles.
pub fn cluster_shift_map(
    f: &OperatorSequence,
    s: usize,
    mode: ClusterShiftMode,
    cutoff: usize,
) -> Result<OperatorSequence> {
    check_plain(f, "cluster_shift_map")?;
    if s == 0 {
        return Err(Error::InvalidArgument("cluster size must be at least 1".into()));
    }
    let d = f.dim_single;
    dim_for(d, s + cutoff)?;
    match mode {
        ClusterShiftMode::Raw => shift_map(&f.with_cutoff(s + cutoff)?, s),
        ClusterShiftMode::Symmetrized => {
            let raw = shift_map(&f.with_cutoff(s + cutoff)?, s)?;
            let perms = permutations(s);
            raw.map(|n, c| {
                let mut acc = CMatrix::zeros(c.nrows(), c.ncols());
                for p in &perms {
                    let full: Vec<usize> = p.iter().copied().chain(s..s + n).collect();
                    acc += permute_slots(c, &full, d);
                }
                acc / C64::new(perms.len() as f64, 0.0)
            })
        }
        ClusterShiftMode::Connected => {
            let comps = (0..=cutoff).map(|n| connected_component(f, s, n)).collect::<Result<_>>()?;
            OperatorSequence::new(d, s, comps)
        }
    }
}

/// Sum over partitions of `s + n` slots with every block meeting `0..s`.
fn connected_component(f: &OperatorSequence, s: usize, n: usize) -> Result<CMatrix> {
    let d = f.dim_single;
    let total = s + n;
    let dim = d.pow(total as u32);
    let mut acc = CMatrix::zeros(dim, dim);
    for q in index_partitions(s)?.iter() {
        let k = q.len();
        // assign each free particle to one of the k prefix blocks
        let count = k.pow(n as u32);
        'assign: for code in 0..count {
            let mut blocks: Vec<Vec<usize>> = q.clone();
            let mut c = code;
            for j in 0..n {
                blocks[c % k].push(s + j);
                c /= k;
            }
            let mut parts = Vec::with_capacity(k);
            for b in &mut blocks {
                b.sort_unstable();
                match f.get(b.len()) {
                    Some(m) => parts.push(m),
                    None => continue 'assign,
                }
            }
            let refs: Vec<(&CMatrix, &[usize])> =
                parts.iter().zip(&blocks).map(|(m, b)| (*m, b.as_slice())).collect();
            acc += kron_disjoint(&refs, total, d);
        }
    }
    Ok(acc)
}

/// `(e^𝔞 f)_k = Σ_n (1/n!) Tr_{last n} f_{k+n}`, summed up to the cutoff of `f`.
pub fn annihilation_expand(f: &OperatorSequence) -> Result<OperatorSequence> {
    let d = f.dim_single;
    let p = f.prefix;
    let comps = (0..=f.n_max())
        .map(|k| {
            let mut acc = CMatrix::zeros(d.pow((p + k) as u32), d.pow((p + k) as u32));
            for n in 0..=f.n_max() - k {
                acc += trace_last(&f.components[k + n], p + k + n, n, d) / C64::new(factorial(n), 0.0);
            }
            acc
        })
        .collect();
    OperatorSequence::new(d, p, comps)
}

/// Size of the last term kept by [`annihilation_expand`] for component `k`;
/// a proxy for the truncation error of an infinite sequence.
pub fn annihilation_tail(f: &OperatorSequence, k: usize) -> Result<f64> {
    let n = f.n_max() - k;
    let last = trace_last(&f.components[f.n_max()], f.prefix + f.n_max(), n, f.dim_single);
    Ok(trace_norm_matrix(&last)? / factorial(n))
}

/// Checks `(e^𝔞(f ⋆ h))_0 = (e^𝔞 f)_0 (e^𝔞 h)_0` on plain sequences, using the
/// full product. Returns the absolute residual.
pub fn efg_residual(f: &OperatorSequence, h: &OperatorSequence) -> Result<f64> {
    check_plain(f, "efg")?;
    check_plain(h, "efg")?;
    let lhs = annihilation_expand(&star_product(f, h)?)?.scalar0();
    let rhs = annihilation_expand(f)?.scalar0() * annihilation_expand(h)?.scalar0();
    Ok((lhs - rhs).norm())
}

/// `𝔡_1(f ⋆ h)` against `𝔡_1 f ⋆ h + f ⋆ 𝔡_1 h`, both exact.
pub fn leibniz_residual(f: &OperatorSequence, h: &OperatorSequence) -> Result<f64> {
    check_plain(f, "Leibniz")?;
    check_plain(h, "Leibniz")?;
    if f.n_max() + h.n_max() == 0 {
        return Err(Error::InvalidArgument("Leibniz check needs a particle component".into()));
    }
    let cutoff = f.n_max() + h.n_max() - 1;
    let lhs = shift_map(&star_product(f, h)?, 1)?;
    let a = star_product_truncated(&shift_map(f, 1)?, h, cutoff)?;
    let b = star_product_truncated(f, &shift_map(h, 1)?, cutoff)?;
    lhs.distance(&a.add(&b)?)
}

/// `𝔡_1 Exp f` against `𝔡_1 f ⋆ Exp f`, with `Exp f` taken up to `cutoff`.
pub fn exp_shift_residual(f: &OperatorSequence, cutoff: usize) -> Result<f64> {
    check_plain(f, "exp shift")?;
    if cutoff == 0 {
        return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
    }
    let e = star_exp_to(f, cutoff)?;
    let lhs = shift_map(&e, 1)?;
    lhs.distance(&star_product_truncated(&shift_map(f, 1)?, &e, cutoff - 1)?)
}

/// `Ln Exp f` against `f`, and `Exp Ln (1 + f)` against `1 + f`; the larger
/// distance.
pub fn round_trip_residual(f: &OperatorSequence) -> Result<f64> {
    check_plain(f, "round trip")?;
    let mut zero = f.clone();
    zero.set_scalar0(C64::new(0.0, 0.0));
    let mut one = f.clone();
    one.set_scalar0(C64::new(1.0, 0.0));
    let a = star_ln(&star_exp(&zero)?)?.distance(&zero)?;
    let b = star_exp(&star_ln(&one)?)?.distance(&one)?;
    Ok(a.max(b))
}

/// Outcome of a truncated series identity check.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesCheck {
    pub residual: f64,
    /// Largest neglected-term proxy among the series that were truncated.
    pub tail: f64,
}

fn inverse_scalar(z: C64) -> Result<C64> {
    if z.norm() < 1e-300 {
        return Err(Error::Numerical("partition function vanishes".into()));
    }
    Ok(C64::new(1.0, 0.0) / z)
}

/// Cluster identity for the correlation of an `s`-cluster: the normalized
/// reduction of `Exp f` with its first `s` particles glued equals the
/// reduction of the connected cluster reading of `f`. Series are summed up
/// to `cutoff` particles.
pub fn verify_lemma2(f: &OperatorSequence, s: usize, cutoff: usize) -> Result<SeriesCheck> {
    check_plain(f, "verify_lemma2")?;
    if s == 0 || s > cutoff {
        return Err(Error::InvalidArgument(format!("need 1 <= s <= cutoff, got s={s}")));
    }
    let e = star_exp_to(f, cutoff)?;
    let ea = annihilation_expand(&e)?;
    let z_inv = inverse_scalar(ea.scalar0())?;
    let shifted = shift_map(&e, s)?;
    let lhs = annihilation_expand(&shifted)?.component(0) * z_inv;
    let conn = cluster_shift_map(f, s, ClusterShiftMode::Connected, cutoff - s)?;
    let rhs = annihilation_expand(&conn)?.component(0).clone();
    let tail = annihilation_tail(&e, 0)?.max(annihilation_tail(&shifted, 0)?);
    Ok(SeriesCheck { residual: trace_norm_matrix(&(lhs - rhs))?, tail })
}

/// Normalized reductions of `Exp f` form the exponential of the reduction of
/// `f` (scalar dropped). Components are compared up to `compare` particles,
/// with series summed up to `cutoff`.
pub fn verify_lemma3(f: &OperatorSequence, compare: usize, cutoff: usize) -> Result<SeriesCheck> {
    check_plain(f, "verify_lemma3")?;
    if compare > cutoff {
        return Err(Error::InvalidArgument("compare must not exceed cutoff".into()));
    }
    let e = star_exp_to(f, cutoff)?;
    let ea = annihilation_expand(&e)?;
    let z_inv = inverse_scalar(ea.scalar0())?;
    let lhs = ea.scale(z_inv).with_cutoff(compare)?;
    let mut af = annihilation_expand(&f.with_cutoff(cutoff)?)?;
    af.set_scalar0(C64::new(0.0, 0.0));
    let rhs = star_exp_to(&af.with_cutoff(compare)?, compare)?;
    let tail = (0..=compare).try_fold(0.0f64, |m, k| Ok::<_, Error>(m.max(annihilation_tail(&e, k)?)))?;
    Ok(SeriesCheck { residual: lhs.distance(&rhs)?, tail })
}
