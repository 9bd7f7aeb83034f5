//! Set partitions, Stirling numbers and the Möbius coefficients of the
//! partition lattice.
//!
//! Everything here is exact integer arithmetic. Enumeration order is the
//! lexicographic order of restricted growth strings, which puts blocks in
//! order of their smallest element and starts with the one-block partition.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{capacity, Error, Result};

/// Largest ground set accepted by [`enumerate_partitions`].
pub const MAX_PARTITION_SIZE: usize = 12;
/// Largest ground set accepted by [`enumerate_nonempty_subsets`].
pub const MAX_SUBSET_SIZE: usize = 16;
/// Largest `n` accepted by [`stirling2`].
pub const MAX_STIRLING_N: usize = 20;

/// Partitions are cached up to this size; larger ones are generated on demand.
const CACHE_LIMIT: usize = 9;

/// An ordered list of distinct positive particle labels.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct ParticleSet(Vec<u32>);

impl ParticleSet {
    /// Builds a set from arbitrary labels, sorting them. Duplicates and the
    /// label 0 are rejected.
    pub fn new(mut labels: Vec<u32>) -> Result<Self> {
        labels.sort_unstable();
        if labels.first() == Some(&0) {
            return Err(Error::InvalidArgument("particle labels must be positive".into()));
        }
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("duplicate particle label in {labels:?}")));
        }
        Ok(Self(labels))
    }

    /// The canonical set `(1, ..., n)`.
    pub fn range(n: usize) -> Self {
        Self((1..=n as u32).collect())
    }

    /// The set `(first, ..., first + n - 1)`.
    pub fn range_from(first: u32, n: usize) -> Self {
        Self((first..first + n as u32).collect())
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn labels(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, label: u32) -> bool {
        self.0.binary_search(&label).is_ok()
    }

    pub fn is_subset(&self, other: &ParticleSet) -> bool {
        self.0.iter().all(|&l| other.contains(l))
    }

    pub fn is_disjoint(&self, other: &ParticleSet) -> bool {
        self.0.iter().all(|&l| !other.contains(l))
    }

    /// Position of `label` inside this set.
    pub fn position(&self, label: u32) -> Option<usize> {
        self.0.binary_search(&label).ok()
    }

    pub fn union(&self, other: &ParticleSet) -> ParticleSet {
        let mut v: Vec<u32> = self.0.iter().chain(other.0.iter()).copied().collect();
        v.sort_unstable();
        v.dedup();
        ParticleSet(v)
    }

    pub fn difference(&self, other: &ParticleSet) -> ParticleSet {
        ParticleSet(self.0.iter().copied().filter(|&l| !other.contains(l)).collect())
    }

    /// Subset selected by the bits of `mask` (bit `i` selects the `i`-th label).
    pub fn select(&self, mask: u64) -> ParticleSet {
        ParticleSet(
            self.0
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &l)| l)
                .collect(),
        )
    }

    /// Positions of the labels of `sub` inside `self`.
    pub fn positions_of(&self, sub: &ParticleSet) -> Result<Vec<usize>> {
        sub.0
            .iter()
            .map(|&l| {
                self.position(l).ok_or_else(|| {
                    Error::LabelMismatch(format!("label {l} of {sub:?} not in {self:?}"))
                })
            })
            .collect()
    }
}

impl TryFrom<Vec<u32>> for ParticleSet {
    type Error = Error;
    fn try_from(v: Vec<u32>) -> Result<Self> {
        ParticleSet::new(v)
    }
}

impl From<ParticleSet> for Vec<u32> {
    fn from(p: ParticleSet) -> Self {
        p.0
    }
}

impl fmt::Debug for ParticleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "}}")
    }
}

/// A division of `ground` into nonempty, pairwise disjoint blocks, stored in
/// canonical form (blocks sorted by their smallest label).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    ground: ParticleSet,
    blocks: Vec<ParticleSet>,
}

impl Partition {
    /// Validates and canonicalizes.
    pub fn new(ground: ParticleSet, blocks: Vec<ParticleSet>) -> Result<Self> {
        if blocks.iter().any(|b| b.is_empty()) {
            return Err(Error::InvalidArgument("partition blocks must be nonempty".into()));
        }
        let total: usize = blocks.iter().map(|b| b.len()).sum();
        let union = blocks.iter().fold(ParticleSet::empty(), |acc, b| acc.union(b));
        if total != union.len() {
            return Err(Error::InvalidArgument("partition blocks overlap".into()));
        }
        if union != ground {
            return Err(Error::LabelMismatch(format!(
                "blocks cover {union:?}, ground is {ground:?}"
            )));
        }
        let mut p = Self { ground, blocks };
        p.canonicalize();
        Ok(p)
    }

    fn canonicalize(&mut self) {
        self.blocks.sort_by_key(|b| b.labels()[0]);
    }

    pub fn ground(&self) -> &ParticleSet {
        &self.ground
    }

    pub fn blocks(&self) -> &[ParticleSet] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Returns a canonicalized copy (idempotent on enumerated partitions).
    pub fn canonical(&self) -> Partition {
        let mut p = self.clone();
        p.canonicalize();
        p
    }
}

/// A set whose elements are disjoint particle sets, each treated as one unit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParticleSet>", into = "Vec<ParticleSet>")]
pub struct ClusterSet(Vec<ParticleSet>);

impl ClusterSet {
    pub fn new(elements: Vec<ParticleSet>) -> Result<Self> {
        if elements.iter().any(|e| e.is_empty()) {
            return Err(Error::InvalidArgument("cluster elements must be nonempty".into()));
        }
        for (i, a) in elements.iter().enumerate() {
            for b in &elements[i + 1..] {
                if !a.is_disjoint(b) {
                    return Err(Error::InvalidArgument(format!(
                        "cluster elements {a:?} and {b:?} overlap"
                    )));
                }
            }
        }
        Ok(Self(elements))
    }

    /// All-singletons cluster set over `labels`.
    pub fn singletons(labels: &ParticleSet) -> Self {
        Self(labels.labels().iter().map(|&l| ParticleSet(vec![l])).collect())
    }

    /// The blocks of a partition, each as one cluster.
    pub fn from_partition(p: &Partition) -> Self {
        Self(p.blocks.clone())
    }

    pub fn elements(&self) -> &[ParticleSet] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn union(&self) -> ParticleSet {
        self.0.iter().fold(ParticleSet::empty(), |acc, e| acc.union(e))
    }

    /// Union of the elements whose indices are listed.
    pub fn union_of(&self, indices: &[usize]) -> ParticleSet {
        indices.iter().fold(ParticleSet::empty(), |acc, &i| acc.union(&self.0[i]))
    }
}

impl TryFrom<Vec<ParticleSet>> for ClusterSet {
    type Error = Error;
    fn try_from(v: Vec<ParticleSet>) -> Result<Self> {
        ClusterSet::new(v)
    }
}

impl From<ClusterSet> for Vec<ParticleSet> {
    fn from(c: ClusterSet) -> Self {
        c.0
    }
}

/// A partition of `{0, ..., n-1}` given as blocks of indices.
pub type IndexPartition = Vec<Vec<usize>>;

/// Visits every restricted growth string of length `n` in lexicographic
/// order. The callback receives the string and its number of blocks.
pub fn for_each_rgs(n: usize, mut visit: impl FnMut(&[usize], usize)) {
    if n == 0 {
        visit(&[], 0);
        return;
    }
    let mut a = vec![0usize; n];
    // m[i] = max(a[0..i]) + 1, i.e. blocks used by the prefix
    let mut m = vec![1usize; n];
    loop {
        visit(&a, m[n - 1].max(a[n - 1] + 1));
        // find rightmost position that can be incremented
        let mut i = n - 1;
        loop {
            if i == 0 {
                return;
            }
            if a[i] < m[i - 1] {
                break;
            }
            i -= 1;
        }
        a[i] += 1;
        let used = m[i - 1].max(a[i] + 1);
        m[i] = used;
        for j in i + 1..n {
            a[j] = 0;
            m[j] = used;
        }
    }
}

fn generate_index_partitions(n: usize) -> Vec<IndexPartition> {
    let mut out = Vec::new();
    for_each_rgs(n, |rgs, k| {
        let mut blocks = vec![Vec::new(); k];
        for (i, &b) in rgs.iter().enumerate() {
            blocks[b].push(i);
        }
        out.push(blocks);
    });
    out
}

/// All partitions of `{0, ..., n-1}` in canonical order. Cached for small `n`.
pub fn index_partitions(n: usize) -> Result<Arc<Vec<IndexPartition>>> {
    if n > MAX_PARTITION_SIZE {
        return Err(capacity("set partitions", n, MAX_PARTITION_SIZE));
    }
    static CACHE: [OnceLock<Arc<Vec<IndexPartition>>>; CACHE_LIMIT + 1] =
        [const { OnceLock::new() }; CACHE_LIMIT + 1];
    if n <= CACHE_LIMIT {
        Ok(CACHE[n].get_or_init(|| Arc::new(generate_index_partitions(n))).clone())
    } else {
        Ok(Arc::new(generate_index_partitions(n)))
    }
}

/// All partitions of `ground`, canonical and in deterministic order.
pub fn enumerate_partitions(ground: &ParticleSet) -> Result<Vec<Partition>> {
    if ground.is_empty() {
        return Err(Error::InvalidArgument("cannot partition the empty set".into()));
    }
    let parts = index_partitions(ground.len())?;
    let labels = ground.labels();
    Ok(parts
        .iter()
        .map(|blocks| Partition {
            ground: ground.clone(),
            blocks: blocks
                .iter()
                .map(|b| ParticleSet(b.iter().map(|&i| labels[i]).collect()))
                .collect(),
        })
        .collect())
}

/// All nonempty subsets of `ground`, ordered by bitmask over label positions.
pub fn enumerate_nonempty_subsets(ground: &ParticleSet) -> Result<Vec<ParticleSet>> {
    let n = ground.len();
    if n > MAX_SUBSET_SIZE {
        return Err(capacity("subsets", n, MAX_SUBSET_SIZE));
    }
    Ok((1u64..1 << n).map(|mask| ground.select(mask)).collect())
}

/// `(-1)^(k-1) (k-1)!` for a partition with `k` blocks.
pub fn mobius_for_blocks(k: usize) -> Result<i64> {
    if k == 0 {
        return Err(Error::InvalidArgument("a partition has at least one block".into()));
    }
    let mut f: i64 = 1;
    for j in 1..k as i64 {
        f = f.checked_mul(j).ok_or(Error::Overflow("mobius coefficient"))?;
    }
    Ok(if k % 2 == 1 { f } else { -f })
}

/// Möbius coefficient `(-1)^(|P|-1) (|P|-1)!` of a partition.
pub fn mobius_coefficient(p: &Partition) -> i64 {
    // |P| <= MAX_PARTITION_SIZE for anything we can build, so 11! fits easily
    mobius_for_blocks(p.len()).expect("partition block count in range")
}

/// Stirling number of the second kind via `s(n,k) = k s(n-1,k) + s(n-1,k-1)`.
pub fn stirling2(n: usize, k: usize) -> Result<u64> {
    if n > MAX_STIRLING_N {
        return Err(capacity("stirling2", n, MAX_STIRLING_N));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("stirling2 needs k <= n, got k={k}, n={n}")));
    }
    let mut row = vec![0u64; n + 1];
    row[0] = 1;
    for m in 1..=n {
        for j in (1..=m).rev() {
            row[j] = (j as u64)
                .checked_mul(row[j])
                .and_then(|x| x.checked_add(row[j - 1]))
                .ok_or(Error::Overflow("stirling2"))?;
        }
        row[0] = 0;
    }
    Ok(row[k])
}

/// Bell number as a sum of Stirling numbers.
pub fn bell(n: usize) -> Result<u64> {
    (0..=n).try_fold(0u64, |acc, k| {
        acc.checked_add(stirling2(n, k)?).ok_or(Error::Overflow("bell"))
    })
}

/// `Σ_P (-1)^(|P|-1) (|P|-1)!` over all partitions of an `n`-set, summed by
/// direct enumeration. Equals 1 for `n = 1` and 0 otherwise.
pub fn partition_alternating_sum(n: usize) -> Result<i64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if n > MAX_PARTITION_SIZE {
        return Err(capacity("partition_alternating_sum", n, MAX_PARTITION_SIZE));
    }
    let coeffs: Vec<i64> = (1..=n).map(mobius_for_blocks).collect::<Result<_>>()?;
    let mut sum: i64 = 0;
    let mut overflow = false;
    for_each_rgs(n, |_, k| match sum.checked_add(coeffs[k - 1]) {
        Some(s) => sum = s,
        None => overflow = true,
    });
    if overflow {
        return Err(Error::Overflow("partition_alternating_sum"));
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Independent enumeration: assign every element a block index in
    /// 0..n and keep assignments whose labels appear in first-use order.
    fn brute_force_count(n: usize) -> (usize, Vec<usize>) {
        let mut count = 0;
        let mut by_blocks = vec![0usize; n + 1];
        let total = n.pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let mut a = Vec::with_capacity(n);
            for _ in 0..n {
                a.push(c % n);
                c /= n;
            }
            let mut next = 0;
            let mut ok = true;
            for &x in &a {
                if x > next {
                    ok = false;
                    break;
                }
                if x == next {
                    next += 1;
                }
            }
            if ok {
                count += 1;
                by_blocks[next] += 1;
            }
        }
        (count, by_blocks)
    }

    #[test]
    fn small_enumerations() {
        let p1 = enumerate_partitions(&ParticleSet::range(1)).unwrap();
        assert_eq!(p1.len(), 1);
        assert_eq!(p1[0].blocks(), &[ParticleSet::range(1)]);

        let p2 = enumerate_partitions(&ParticleSet::range(2)).unwrap();
        assert_eq!(p2.len(), 2);
        assert_eq!(p2[0].blocks(), &[ParticleSet::range(2)]);
        assert_eq!(
            p2[1].blocks(),
            &[ParticleSet::new(vec![1]).unwrap(), ParticleSet::new(vec![2]).unwrap()]
        );

        let p3 = enumerate_partitions(&ParticleSet::range(3)).unwrap();
        assert_eq!(p3.len(), brute_force_count(3).0);
        assert_eq!(p3.len(), 5);
    }

    #[test]
    fn counts_match_brute_force_and_stirling() {
        for n in 1..=7 {
            let (count, by_blocks) = brute_force_count(n);
            let parts = enumerate_partitions(&ParticleSet::range(n)).unwrap();
            assert_eq!(parts.len(), count, "n={n}");
            for (k, &count_k) in by_blocks.iter().enumerate().skip(1).take(n) {
                assert_eq!(stirling2(n, k).unwrap() as usize, count_k, "s({n},{k})");
            }
        }
        for n in 1..=10 {
            let total: u64 = (0..=n).map(|k| stirling2(n, k).unwrap()).sum();
            assert_eq!(total as usize, index_partitions(n).unwrap().len());
        }
    }

    #[test]
    fn stirling_values() {
        assert_eq!(stirling2(3, 2).unwrap(), 3);
        assert_eq!(stirling2(4, 2).unwrap(), 7);
        for n in 0..=20 {
            assert_eq!(stirling2(n, n).unwrap(), 1);
        }
        assert_eq!(stirling2(0, 0).unwrap(), 1);
        assert_eq!(stirling2(5, 0).unwrap(), 0);
        assert!(matches!(stirling2(21, 3), Err(Error::Capacity { .. })));
        assert!(stirling2(3, 4).is_err());
        assert_eq!(bell(12).unwrap(), 4_213_597);
    }

    #[test]
    fn stirling_recurrence() {
        for n in 1..=20 {
            for k in 1..=n {
                let lhs = stirling2(n, k).unwrap();
                let rhs = k as u64 * if k < n { stirling2(n - 1, k).unwrap() } else { 0 }
                    + stirling2(n - 1, k - 1).unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn mobius_values() {
        assert_eq!(mobius_for_blocks(1).unwrap(), 1);
        assert_eq!(mobius_for_blocks(2).unwrap(), -1);
        assert_eq!(mobius_for_blocks(3).unwrap(), 2);
        assert_eq!(mobius_for_blocks(4).unwrap(), -6);
        let parts = enumerate_partitions(&ParticleSet::range(3)).unwrap();
        let coeffs: Vec<i64> = parts.iter().map(mobius_coefficient).collect();
        assert_eq!(coeffs, vec![1, -1, -1, -1, 2]);
    }

    #[test]
    fn alternating_sum_is_kronecker_delta() {
        for n in 1..=12 {
            let expected = i64::from(n == 1);
            assert_eq!(partition_alternating_sum(n).unwrap(), expected, "n={n}");
            // same identity through the Stirling route
            let via_stirling: i64 = (1..=n)
                .map(|k| stirling2(n, k).unwrap() as i64 * mobius_for_blocks(k).unwrap())
                .sum();
            assert_eq!(via_stirling, expected);
        }
        assert!(matches!(partition_alternating_sum(13), Err(Error::Capacity { .. })));
    }

    #[test]
    fn enumeration_is_canonical_and_duplicate_free() {
        let ground = ParticleSet::new(vec![2, 5, 7, 9, 11]).unwrap();
        let parts = enumerate_partitions(&ground).unwrap();
        let set: HashSet<_> = parts.iter().cloned().collect();
        assert_eq!(set.len(), parts.len());
        for p in &parts {
            assert_eq!(&p.canonical(), p);
            let rebuilt = Partition::new(ground.clone(), p.blocks().to_vec()).unwrap();
            assert_eq!(&rebuilt, p);
        }
        assert!(enumerate_partitions(&ParticleSet::range(13)).is_err());
    }

    #[test]
    fn subsets() {
        let s1 = enumerate_nonempty_subsets(&ParticleSet::range(1)).unwrap();
        assert_eq!(s1, vec![ParticleSet::range(1)]);
        let s2 = enumerate_nonempty_subsets(&ParticleSet::range(2)).unwrap();
        assert_eq!(
            s2,
            vec![
                ParticleSet::new(vec![1]).unwrap(),
                ParticleSet::new(vec![2]).unwrap(),
                ParticleSet::range(2)
            ]
        );
        assert_eq!(enumerate_nonempty_subsets(&ParticleSet::range(3)).unwrap().len(), 7);
        assert!(enumerate_nonempty_subsets(&ParticleSet::range(17)).is_err());
    }

    #[test]
    fn particle_set_validation() {
        assert!(ParticleSet::new(vec![1, 1]).is_err());
        assert!(ParticleSet::new(vec![0, 1]).is_err());
        assert_eq!(ParticleSet::new(vec![3, 1, 2]).unwrap(), ParticleSet::range(3));
        assert!(ClusterSet::new(vec![ParticleSet::range(2), ParticleSet::range(1)]).is_err());
        let bad = Partition::new(ParticleSet::range(3), vec![ParticleSet::range(2)]);
        assert!(bad.is_err());
    }
}
