//! Difference sets, the oscillation predicates, the greedy oscillating split,
//! and the tree of splits yielding arbitrarily many pairwise almost
//! oscillating sets.
//!
//! Two sets oscillate when no difference of two distinct elements of one
//! equals a difference of two distinct elements of the other. The greedy
//! split below produces, inside any infinite set, a pair of subsets whose
//! prefixes oscillate at every checked length; iterating it along a binary
//! tree and taking diagonal pseudointersections of its branches produces a
//! family that is pairwise almost oscillating.

use crate::error::Result;
use crate::stream::{pseudointersection, NatStream, Prefix};
use num_bigint::BigUint;
use num_traits::Zero;
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Arc, Mutex};

/// The set of pairwise differences of distinct elements of a prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffSet {
    values: BTreeSet<BigUint>,
    source_horizon: BigUint,
}

impl DiffSet {
    pub fn values(&self) -> &BTreeSet<BigUint> {
        &self.values
    }

    pub fn source_horizon(&self) -> &BigUint {
        &self.source_horizon
    }

    pub fn is_disjoint(&self, other: &DiffSet) -> bool {
        self.values.is_disjoint(&other.values)
    }
}

/// All differences `y - x` over distinct `x < y` in the prefix. Empty when
/// the prefix has fewer than two elements.
pub fn difference_set(p: &Prefix) -> DiffSet {
    let e = p.elements();
    let mut values = BTreeSet::new();
    for i in 0..e.len() {
        for j in (i + 1)..e.len() {
            values.insert(&e[j] - &e[i]);
        }
    }
    DiffSet {
        values,
        source_horizon: p.horizon().clone(),
    }
}

/// Disjointness of the two difference sets. A side with fewer than two
/// elements has an empty difference set and oscillates against anything.
pub fn is_oscillating(p: &Prefix, q: &Prefix) -> bool {
    difference_set(p).is_disjoint(&difference_set(q))
}

/// Least `n` such that the elements `>= n` of both prefixes oscillate.
///
/// The verdict is horizon-stamped: a returned `n` certifies oscillation of
/// the truncations only. Once the truncations oscillate at some cutoff they
/// oscillate at every larger one, so only cutoffs that change a truncation
/// need scanning.
pub fn almost_oscillation_bound(p: &Prefix, q: &Prefix) -> Option<BigUint> {
    scan_bound(p, q, 0)
}

/// Like [`almost_oscillation_bound`] but requiring at least two surviving
/// elements on both sides, so the certificate never rests on a side whose
/// difference set went empty. Used by the obstruction verdicts.
pub fn almost_oscillation_bound_nondegenerate(p: &Prefix, q: &Prefix) -> Option<BigUint> {
    scan_bound(p, q, 2)
}

fn scan_bound(p: &Prefix, q: &Prefix, min_side: usize) -> Option<BigUint> {
    let mut candidates: BTreeSet<BigUint> = BTreeSet::new();
    candidates.insert(BigUint::zero());
    for e in p.elements().iter().chain(q.elements()) {
        candidates.insert(e + 1u32);
    }
    for n in candidates {
        let pp = p.drop_below(&n);
        let qq = q.drop_below(&n);
        if pp.len() < min_side || qq.len() < min_side {
            continue;
        }
        if is_oscillating(&pp, &qq) {
            return Some(n);
        }
    }
    None
}

/// First non-oscillating pair among the prefixes, by (i, j) order.
pub fn find_non_oscillating_pair(prefixes: &[Prefix]) -> Option<(usize, usize)> {
    #[cfg(feature = "parallel")]
    {
        find_non_oscillating_pair_par(prefixes)
    }
    #[cfg(not(feature = "parallel"))]
    {
        find_non_oscillating_pair_seq(prefixes)
    }
}

/// Sequential reference path for the all-pairs sweep.
pub fn find_non_oscillating_pair_seq(prefixes: &[Prefix]) -> Option<(usize, usize)> {
    let diffs: Vec<DiffSet> = prefixes.iter().map(difference_set).collect();
    for i in 0..prefixes.len() {
        for j in (i + 1)..prefixes.len() {
            if !diffs[i].is_disjoint(&diffs[j]) {
                return Some((i, j));
            }
        }
    }
    None
}

#[cfg(feature = "parallel")]
pub fn find_non_oscillating_pair_par(prefixes: &[Prefix]) -> Option<(usize, usize)> {
    use rayon::prelude::*;
    let diffs: Vec<DiffSet> = prefixes.par_iter().map(difference_set).collect();
    let pairs: Vec<(usize, usize)> = (0..prefixes.len())
        .flat_map(|i| ((i + 1)..prefixes.len()).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .find_first(|(i, j)| !diffs[*i].is_disjoint(&diffs[*j]))
        .copied()
}

struct SplitState {
    parent: NatStream,
    a: Vec<BigUint>,
    b: Vec<BigUint>,
    last_used: Option<BigUint>,
}

impl SplitState {
    /// Least element of the parent above both the gap threshold and the last
    /// consumed element. Earlier skipped elements never come back into play
    /// because the thresholds are nondecreasing.
    fn pick(&mut self, threshold: BigUint) -> Result<BigUint> {
        let lo = match &self.last_used {
            Some(last) if *last > threshold => last.clone(),
            _ => threshold,
        };
        let v = self.parent.try_least_above(&lo)?;
        self.last_used = Some(v.clone());
        Ok(v)
    }

    fn extend(&mut self) -> Result<()> {
        if self.a.is_empty() {
            let a0 = self.parent.try_nth(0)?;
            self.last_used = Some(a0.clone());
            let b0 = self.pick(a0.clone())?;
            self.a.push(a0);
            self.b.push(b0);
            return Ok(());
        }
        let an = {
            let t = self.a.last().expect("nonempty") + self.b.last().expect("nonempty")
                - &self.b[0];
            self.pick(t)?
        };
        let bn = {
            let t = self.b.last().expect("nonempty") + &an - &self.a[0];
            self.pick(t)?
        };
        self.a.push(an);
        self.b.push(bn);
        Ok(())
    }

    fn ensure(&mut self, b_half: bool, n: usize) -> Result<BigUint> {
        let len = |s: &Self| if b_half { s.b.len() } else { s.a.len() };
        while len(self) <= n {
            self.extend()?;
        }
        Ok(if b_half {
            self.b[n].clone()
        } else {
            self.a[n].clone()
        })
    }
}

/// Greedy split of an infinite set into two subsets whose prefixes oscillate
/// at every checked length.
///
/// The first two elements of the input seed the halves; thereafter the next
/// element of one half must exceed the previous one by more than the spread
/// of the other half so far. Both outputs share one joint state over the
/// parent, so the interleaved consumption is computed once.
pub fn split_oscillating(x: &NatStream) -> (NatStream, NatStream) {
    let state = Arc::new(Mutex::new(SplitState {
        parent: x.clone(),
        a: Vec::new(),
        b: Vec::new(),
        last_used: None,
    }));
    let st_a = Arc::clone(&state);
    let a = NatStream::from_steps(format!("{}·0", x.label()), move |prefix| {
        st_a.lock().expect("split lock").ensure(false, prefix.len())
    });
    let st_b = Arc::clone(&state);
    let b = NatStream::from_steps(format!("{}·1", x.label()), move |prefix| {
        st_b.lock().expect("split lock").ensure(true, prefix.len())
    });
    (a, b)
}

/// A finite binary word addressing a node of the split tree (and, for the
/// branching trees of the family module, a node of `S_A`). Ordered by level
/// first, then lexicographically within a level.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn empty() -> Self {
        BitString(Vec::new())
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        BitString(bits.to_vec())
    }

    /// The i-th word of the given length, numerically (MSB first).
    pub fn nth_of_length(i: usize, len: usize) -> Self {
        BitString((0..len).map(|k| (i >> (len - 1 - k)) & 1 == 1).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, bit: bool) -> Self {
        let mut v = self.0.clone();
        v.push(bit);
        BitString(v)
    }

    pub fn parent(&self) -> Option<Self> {
        if self.0.is_empty() {
            None
        } else {
            Some(BitString(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn truncate(&self, len: usize) -> Self {
        BitString(self.0[..self.0.len().min(len)].to_vec())
    }

    /// Level-order pairing into the naturals: `2^|s| - 1 + value(s)` where
    /// `value` reads the word as a binary numeral.
    pub fn code(&self) -> BigUint {
        let mut value = BigUint::zero();
        for &bit in &self.0 {
            value = value * 2u32 + u32::from(bit);
        }
        (BigUint::from(1u32) << self.0.len()) - 1u32 + value
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "ε");
        }
        for &bit in &self.0 {
            write!(f, "{}", u8::from(bit))?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl PartialOrd for BitString {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BitString {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

/// Binary tree of iterated splits: the two children of each node are the
/// halves produced by [`split_oscillating`], hence true subsets of the node
/// on every checked prefix.
pub struct SplitTree {
    nodes: Mutex<BTreeMap<BitString, NatStream>>,
}

/// Materializes the node map for all words of length `<= depth`; deeper
/// nodes are produced lazily on demand by [`SplitTree::node`].
pub fn build_split_tree(root: &NatStream, depth: usize) -> SplitTree {
    let tree = SplitTree {
        nodes: Mutex::new(BTreeMap::from([(BitString::empty(), root.clone())])),
    };
    for d in 0..depth {
        for i in 0..(1usize << d) {
            tree.node(&BitString::nth_of_length(i, d + 1));
        }
    }
    tree
}

impl SplitTree {
    pub fn node(&self, s: &BitString) -> NatStream {
        let mut nodes = self.nodes.lock().expect("tree lock");
        if let Some(n) = nodes.get(s) {
            return n.clone();
        }
        // walk down from the deepest materialized ancestor
        let mut len = s.len();
        while nodes.get(&s.truncate(len)).is_none() {
            len -= 1;
        }
        for l in len..s.len() {
            let prefix = s.truncate(l);
            let parent = nodes.get(&prefix).expect("ancestor present").clone();
            let (zero, one) = split_oscillating(&parent);
            nodes.insert(prefix.child(false), zero);
            nodes.insert(prefix.child(true), one);
        }
        nodes.get(s).expect("just inserted").clone()
    }

    /// All materialized nodes at the given level, in word order.
    pub fn level(&self, d: usize) -> Vec<(BitString, NatStream)> {
        self.nodes
            .lock()
            .expect("tree lock")
            .iter()
            .filter(|(k, _)| k.len() == d)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

/// `m` pairwise almost oscillating infinite sets, materialized to
/// `prefix_len` elements each.
///
/// The `m` numerically least branches of depth `d = ceil(log2 m)` are each
/// extended two further levels through child 1, and the output for a branch
/// is the diagonal pseudointersection of its chain of tree nodes (the chain
/// is held constant beyond the extension depth: element sizes square with
/// every further level, so an unbounded descent is unrepresentable, and the
/// pairwise guarantees only need the chain to reach past the deepest meet).
/// For any two outputs, discarding the picks made before their branches
/// separate leaves suffixes inside two oscillating sibling subtrees.
pub fn almost_oscillating_family(m: usize, prefix_len: usize) -> Vec<NatStream> {
    let depth = if m <= 1 { 0 } else { (m - 1).ilog2() as usize + 1 };
    let extension = depth + 2;
    let tree = Arc::new(build_split_tree(&NatStream::omega(), depth));
    let mut family = Vec::with_capacity(m);
    for i in 0..m {
        let branch = BitString::nth_of_length(i, depth);
        let mut extended = branch.clone();
        while extended.len() < extension {
            extended = extended.child(true);
        }
        let tree = Arc::clone(&tree);
        let p = pseudointersection(format!("P_{branch}"), move |n| {
            tree.node(&extended.truncate(n.min(extension)))
        });
        p.take(prefix_len);
        family.push(p);
    }
    family
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nat(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn nats(vs: &[u64]) -> Vec<BigUint> {
        vs.iter().map(|&v| nat(v)).collect()
    }

    fn set(vs: &[u64]) -> BTreeSet<BigUint> {
        vs.iter().map(|&v| nat(v)).collect()
    }

    #[test]
    fn difference_set_examples() {
        let d = difference_set(&Prefix::from_u64s(&[0, 2, 6], 7));
        assert_eq!(d.values(), &set(&[2, 4, 6]));
        let single = difference_set(&Prefix::from_u64s(&[5], 6));
        assert!(single.values().is_empty());
        let d = difference_set(&Prefix::from_u64s(&[0, 1, 3], 4));
        assert_eq!(d.values(), &set(&[1, 2, 3]));
    }

    #[test]
    fn oscillation_examples() {
        assert!(is_oscillating(
            &Prefix::from_u64s(&[0, 1], 2),
            &Prefix::from_u64s(&[0, 2], 3)
        ));
        let p = Prefix::from_u64s(&[0, 3], 4);
        assert!(!is_oscillating(&p, &p));
        assert!(!is_oscillating(
            &Prefix::from_u64s(&[0, 1, 3], 4),
            &Prefix::from_u64s(&[0, 2], 3)
        ));
    }

    #[test]
    fn bound_examples() {
        let b = almost_oscillation_bound(
            &Prefix::from_u64s(&[0, 5, 6], 7),
            &Prefix::from_u64s(&[0, 5, 7], 8),
        );
        assert_eq!(b, Some(nat(1)));

        let b = almost_oscillation_bound(
            &Prefix::from_u64s(&[0, 1], 2),
            &Prefix::from_u64s(&[0, 2], 3),
        );
        assert_eq!(b, Some(nat(0)));

        // shared difference 4 at every cutoff leaving two on both sides;
        // n = 1 leaves a singleton on the left, whose difference set is empty
        let b = almost_oscillation_bound(
            &Prefix::from_u64s(&[0, 4], 5),
            &Prefix::from_u64s(&[1, 5], 6),
        );
        assert_eq!(b, Some(nat(1)));
        let nb = almost_oscillation_bound_nondegenerate(
            &Prefix::from_u64s(&[0, 4], 5),
            &Prefix::from_u64s(&[1, 5], 6),
        );
        assert_eq!(nb, None);
    }

    #[test]
    fn nondegenerate_bound_rejects_identical_prefixes() {
        let p = Prefix::from_u64s(&[2, 4, 8], 9);
        assert_eq!(almost_oscillation_bound_nondegenerate(&p, &p), None);
        // the plain bound still exists by emptying one side
        assert!(almost_oscillation_bound(&p, &p).is_some());
    }

    #[test]
    fn split_omega_golden_prefixes() {
        let (a, b) = split_oscillating(&NatStream::omega());
        assert_eq!(a.take(8), nats(&[0, 2, 6, 17, 46, 122, 321, 842]));
        assert_eq!(b.take(8), nats(&[1, 4, 11, 29, 76, 199, 521, 1364]));

        let da = difference_set(&a.below(&nat(1000)));
        for d in [2u64, 6, 17, 4, 15, 11] {
            assert!(da.values().contains(&nat(d)));
        }
        let db = difference_set(&b.below(&nat(2000)));
        for d in [3u64, 10, 28, 7, 25, 18] {
            assert!(db.values().contains(&nat(d)));
        }
        assert!(da.is_disjoint(&db));
    }

    #[test]
    fn split_evens_golden() {
        let (a, b) = split_oscillating(&NatStream::evens());
        assert_eq!(a.take(5), nats(&[0, 4, 12, 34, 92]));
        assert_eq!(b.take(5), nats(&[2, 8, 22, 58, 152]));
    }

    #[test]
    fn split_outputs_are_disjoint_subsets() {
        let x = NatStream::evens();
        let (a, b) = split_oscillating(&x);
        let pa = a.take(10);
        let pb = b.take(10);
        for v in &pa {
            assert!(x.contains(v));
            assert!(!pb.contains(v));
        }
        for v in &pb {
            assert!(x.contains(v));
        }
    }

    #[test]
    fn bitstring_codes() {
        assert_eq!(BitString::empty().code(), nat(0));
        assert_eq!(BitString::from_bits(&[true]).code(), nat(2));
        assert_eq!(BitString::from_bits(&[true, false]).code(), nat(5));
    }

    #[test]
    fn bitstring_level_order() {
        let mut words = vec![
            BitString::from_bits(&[true]),
            BitString::empty(),
            BitString::from_bits(&[false, true]),
            BitString::from_bits(&[false]),
        ];
        words.sort();
        let shown: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        assert_eq!(shown, ["ε", "0", "1", "01"]);
    }

    #[test]
    fn split_tree_depth_one_matches_split() {
        let tree = build_split_tree(&NatStream::omega(), 1);
        let a0 = tree.node(&BitString::from_bits(&[false]));
        let a1 = tree.node(&BitString::from_bits(&[true]));
        assert_eq!(a0.take(4), nats(&[0, 2, 6, 17]));
        assert_eq!(a1.take(4), nats(&[1, 4, 11, 29]));
    }

    #[test]
    fn split_tree_depth_zero_has_only_root() {
        let tree = build_split_tree(&NatStream::omega(), 0);
        assert_eq!(tree.level(0).len(), 1);
        assert_eq!(tree.level(1).len(), 0);
        // lazy extension past the built depth
        let node = tree.node(&BitString::from_bits(&[true, true]));
        assert!(node.take(3).windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn split_tree_depth_two_leaves_pairwise_oscillating() {
        let tree = build_split_tree(&NatStream::omega(), 2);
        let prefixes: Vec<Prefix> = (0..4)
            .map(|i| {
                let leaf = tree.node(&BitString::nth_of_length(i, 2));
                let elems = leaf.take(8);
                let horizon = elems.last().expect("eight elements") + 1u32;
                Prefix::new(elems, horizon).expect("sorted")
            })
            .collect();
        assert_eq!(find_non_oscillating_pair(&prefixes), None);
    }

    #[test]
    fn family_of_one_is_the_all_ones_pseudointersection() {
        let fam = almost_oscillating_family(1, 6);
        assert_eq!(fam.len(), 1);
        let vals = fam[0].take(6);
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn family_of_two_has_bound_at_sixteen() {
        let fam = almost_oscillating_family(2, 16);
        let p0 = fam[0].take(16);
        let p1 = fam[1].take(16);
        assert_eq!(&p0[..5], &nats(&[0, 2, 17, 842, 39602])[..]);
        assert_eq!(&p1[..5], &nats(&[0, 1, 4, 29, 1364])[..]);
        let h0 = p0.last().expect("16") + 1u32;
        let h1 = p1.last().expect("16") + 1u32;
        let b = almost_oscillation_bound(
            &Prefix::new(p0, h0).expect("sorted"),
            &Prefix::new(p1, h1).expect("sorted"),
        );
        assert_eq!(b, Some(nat(0)));
    }

    #[test]
    fn family_pairs_all_bounded_small() {
        let fam = almost_oscillating_family(4, 16);
        let prefixes: Vec<Prefix> = fam
            .iter()
            .map(|p| {
                let v = p.take(16);
                let h = v.last().expect("16").clone() + 1u32;
                Prefix::new(v, h).expect("sorted")
            })
            .collect();
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!(
                    almost_oscillation_bound(&prefixes[i], &prefixes[j]).is_some(),
                    "pair ({i},{j})"
                );
            }
        }
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_sweep_matches_sequential() {
        let prefixes: Vec<Prefix> = vec![
            Prefix::from_u64s(&[0, 1], 2),
            Prefix::from_u64s(&[0, 2], 3),
            Prefix::from_u64s(&[0, 1, 3], 4),
        ];
        assert_eq!(
            find_non_oscillating_pair_par(&prefixes),
            find_non_oscillating_pair_seq(&prefixes)
        );
    }
}
