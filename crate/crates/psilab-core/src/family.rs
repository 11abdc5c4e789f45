//! Almost disjoint families with intersection certificates, the staged Luzin
//! construction over a partition of the naturals, branch families of binary
//! trees with prescribed branching levels, and intersection spectra.
//!
//! A certificate records the exact cardinality of the full intersection of
//! two members, as established by the construction that produced the family;
//! where the construction also yields the intersection elements cheaply they
//! are carried alongside. Pairs without a certificate are only ever compared
//! by their traces below the family's horizon, and every spectrum built that
//! way is flagged inexact.

use crate::error::{Error, Result};
use crate::oscillation::BitString;
use crate::stream::{NatStream, Prefix};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

/// Piece `n` of the dyadic partition of the naturals:
/// `{2^n (2k + 1) - 1 : k}`. Distinct indices give disjoint sets and the
/// union over all indices is everything.
pub fn dyadic_partition(n: usize) -> NatStream {
    NatStream::from_index_fn_with_member_test(
        format!("dyadic({n})"),
        move |k| ((k * 2u32 + 1u32) << n) - 1u32,
        move |v| (v + 1u32).trailing_zeros() == Some(n as u64),
    )
}

/// Exact knowledge about one pairwise intersection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    /// Cardinality of the full intersection (not merely below a horizon).
    pub size: BigUint,
    /// The intersection itself, when the construction can enumerate it.
    pub elements: Option<Vec<BigUint>>,
}

/// A finite list of member streams with optional per-pair certificates and a
/// horizon for trace-level fallbacks.
#[derive(Clone)]
pub struct ADFamily {
    members: Vec<NatStream>,
    certificates: BTreeMap<(usize, usize), Certificate>,
    horizon: BigUint,
}

impl std::fmt::Debug for ADFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ADFamily")
            .field("members", &self.members)
            .field("certified_pairs", &self.certificates.len())
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl ADFamily {
    pub fn new(members: Vec<NatStream>, horizon: BigUint) -> Self {
        ADFamily {
            members,
            certificates: BTreeMap::new(),
            horizon,
        }
    }

    pub fn with_certificates(
        members: Vec<NatStream>,
        certificates: BTreeMap<(usize, usize), Certificate>,
        horizon: BigUint,
    ) -> Result<Self> {
        for &(i, j) in certificates.keys() {
            if i >= j || j >= members.len() {
                return Err(Error::Precondition(format!(
                    "certificate key ({i},{j}) is not an ordered member pair"
                )));
            }
        }
        Ok(ADFamily {
            members,
            certificates,
            horizon,
        })
    }

    /// Family from explicit traces below the horizon. Each member continues
    /// past the horizon along its own arithmetic tail (stride = member
    /// count), so the tails are pairwise disjoint and the trace intersections
    /// are the full intersections; those are recorded as certificates.
    pub fn from_traces(traces: &[Vec<u64>], horizon: u64) -> Result<Self> {
        let count = traces.len().max(1) as u64;
        let mut members = Vec::with_capacity(traces.len());
        for (idx, trace) in traces.iter().enumerate() {
            let mut sorted = trace.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.last().is_some_and(|&v| v >= horizon) {
                return Err(Error::Precondition(format!(
                    "trace element of member {idx} reaches the horizon {horizon}"
                )));
            }
            let tail_start = horizon + idx as u64;
            let vals: Vec<BigUint> = sorted.iter().map(|&v| BigUint::from(v)).collect();
            let len = BigUint::from(vals.len());
            members.push(NatStream::from_index_fn(
                format!("trace[{idx}]"),
                move |i| {
                    if i < &len {
                        let k: usize = i.try_into().expect("trace index");
                        vals[k].clone()
                    } else {
                        (i - &len) * count + tail_start
                    }
                },
            ));
        }
        let mut certificates = BTreeMap::new();
        for i in 0..traces.len() {
            let a: BTreeSet<u64> = traces[i].iter().copied().collect();
            for j in (i + 1)..traces.len() {
                let inter: Vec<BigUint> = traces[j]
                    .iter()
                    .copied()
                    .collect::<BTreeSet<u64>>()
                    .intersection(&a)
                    .map(|&v| BigUint::from(v))
                    .collect();
                certificates.insert(
                    (i, j),
                    Certificate {
                        size: BigUint::from(inter.len()),
                        elements: Some(inter),
                    },
                );
            }
        }
        ADFamily::with_certificates(members, certificates, BigUint::from(horizon))
    }

    pub fn members(&self) -> &[NatStream] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn horizon(&self) -> &BigUint {
        &self.horizon
    }

    pub fn certificate(&self, i: usize, j: usize) -> Option<&Certificate> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.certificates.get(&key)
    }

    pub fn trace(&self, i: usize) -> Prefix {
        self.members[i].below(&self.horizon)
    }

    /// The intersection of two members as a sorted element list, taken from
    /// the certificate when it carries elements, otherwise from the traces
    /// below the horizon. The flag reports which route was used.
    pub fn pair_intersection(&self, i: usize, j: usize) -> (Vec<BigUint>, bool) {
        if let Some(Certificate {
            elements: Some(e), ..
        }) = self.certificate(i, j)
        {
            return (e.clone(), true);
        }
        let a = self.trace(i);
        let b = self.trace(j);
        let inter = a
            .elements()
            .iter()
            .filter(|v| b.contains(v))
            .cloned()
            .collect();
        (inter, false)
    }

    /// Trace-level consistency of every certificate below the horizon:
    /// element certificates must match the trace intersection exactly, and a
    /// size certificate can never be undercut by what the traces already show.
    pub fn verify_certificates(&self) -> Result<()> {
        for (&(i, j), cert) in &self.certificates {
            let a = self.trace(i);
            let b = self.trace(j);
            let inter: Vec<BigUint> = a
                .elements()
                .iter()
                .filter(|v| b.contains(v))
                .cloned()
                .collect();
            match &cert.elements {
                Some(elements) => {
                    let below: Vec<BigUint> = elements
                        .iter()
                        .filter(|v| **v < self.horizon)
                        .cloned()
                        .collect();
                    if below != inter {
                        return Err(Error::Precondition(format!(
                            "certificate elements of pair ({i},{j}) disagree with traces"
                        )));
                    }
                    if BigUint::from(elements.len()) != cert.size {
                        return Err(Error::Precondition(format!(
                            "certificate size of pair ({i},{j}) disagrees with its elements"
                        )));
                    }
                }
                None => {
                    if BigUint::from(inter.len()) > cert.size {
                        return Err(Error::Precondition(format!(
                            "certificate size of pair ({i},{j}) undercut by traces"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Concatenation of two families. Certificates within each part are
    /// kept; cross pairs stay uncertified and fall back to traces.
    pub fn union(a: &ADFamily, b: &ADFamily) -> ADFamily {
        let offset = a.members.len();
        let mut members = a.members.clone();
        members.extend(b.members.iter().cloned());
        let mut certificates = a.certificates.clone();
        for (&(i, j), cert) in &b.certificates {
            certificates.insert((i + offset, j + offset), cert.clone());
        }
        ADFamily {
            members,
            certificates,
            horizon: a.horizon.clone().min(b.horizon.clone()),
        }
    }

    /// Spectrum of the pairwise intersection sizes over a subset of members.
    pub fn subfamily_spectrum(&self, indices: &[usize]) -> Spectrum {
        let mut values = BTreeSet::new();
        let mut exact = true;
        for (pos, &i) in indices.iter().enumerate() {
            for &j in &indices[pos + 1..] {
                match self.certificate(i, j) {
                    Some(cert) => {
                        values.insert(cert.size.clone());
                    }
                    None => {
                        exact = false;
                        let (inter, _) = self.pair_intersection(i, j);
                        values.insert(BigUint::from(inter.len()));
                    }
                }
            }
        }
        Spectrum {
            values,
            horizon: self.horizon.clone(),
            exact,
        }
    }
}

/// The set of pairwise intersection sizes of a family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spectrum {
    values: BTreeSet<BigUint>,
    horizon: BigUint,
    exact: bool,
}

impl Spectrum {
    pub fn values(&self) -> &BTreeSet<BigUint> {
        &self.values
    }

    pub fn horizon(&self) -> &BigUint {
        &self.horizon
    }

    pub fn exact(&self) -> bool {
        self.exact
    }

    /// View of the spectrum as a prefix, for the oscillation predicates.
    pub fn to_prefix(&self) -> Prefix {
        let elements: Vec<BigUint> = self.values.iter().cloned().collect();
        let horizon = elements
            .last()
            .map(|v| v + 1u32)
            .unwrap_or_else(BigUint::one);
        Prefix::new(elements, horizon).expect("sorted set")
    }
}

/// Pairwise intersection sizes, from certificates when present (`exact`),
/// else from horizon-truncated traces.
pub fn spectrum(family: &ADFamily) -> Spectrum {
    let all: Vec<usize> = (0..family.len()).collect();
    family.subfamily_spectrum(&all)
}

/// Data for the staged construction: the prescribed intersection sizes and
/// the partition supplying fresh material at every stage.
#[derive(Clone)]
pub struct LuzinSpec {
    lengths: NatStream,
    partition: Arc<dyn Fn(usize) -> NatStream + Send + Sync>,
    trace_horizon: BigUint,
}

impl LuzinSpec {
    /// Spec over the dyadic partition with the given length stream.
    pub fn new(lengths: NatStream) -> Self {
        LuzinSpec {
            lengths,
            partition: Arc::new(dyadic_partition),
            trace_horizon: BigUint::one() << 16,
        }
    }

    /// The canonical valid length stream `k_n = k0 * 2^n`; the sum of the
    /// earlier lengths is `k0 (2^n - 1)`, so the growth condition holds with
    /// room to spare.
    pub fn doubling(k0: u64) -> Self {
        assert!(k0 >= 1, "doubling seed must be positive");
        LuzinSpec::new(NatStream::from_index_fn(format!("doubling({k0})"), {
            move |n| {
                let shift: u64 = n.try_into().expect("stage index fits u64");
                BigUint::from(k0) << shift
            }
        }))
    }

    pub fn with_partition(
        mut self,
        partition: impl Fn(usize) -> NatStream + Send + Sync + 'static,
    ) -> Self {
        self.partition = Arc::new(partition);
        self
    }

    pub fn with_trace_horizon(mut self, horizon: BigUint) -> Self {
        self.trace_horizon = horizon;
        self
    }

    pub fn lengths(&self) -> &NatStream {
        &self.lengths
    }

    pub fn partition_member(&self, n: usize) -> NatStream {
        (self.partition)(n)
    }

    /// `k_n` must exceed the sum of all earlier lengths, checked for every
    /// stage up to the bound.
    pub fn validate_lengths_through(&self, stages: usize) -> Result<()> {
        let mut sum = BigUint::zero();
        for n in 0..stages {
            let k = self.lengths.try_nth(n)?;
            if k <= sum {
                return Err(Error::LuzinLength {
                    stage: n,
                    length: k,
                    occupied: sum,
                });
            }
            sum += &k;
        }
        Ok(())
    }
}

/// Predecessor enumeration at stage `j`: the `j` members already built sit
/// at positions 1, 3, ..., 2j-1 in build order; every other position takes
/// the next partition piece in index order.
fn predecessor(spec: &LuzinSpec, prior: &[NatStream], position: usize) -> NatStream {
    let j = prior.len();
    if position % 2 == 1 && (position - 1) / 2 < j {
        prior[(position - 1) / 2].clone()
    } else {
        let priors_before = j.min(position / 2);
        spec.partition_member(position - priors_before)
    }
}

/// Progress of one stage at a partition position beyond the head: the
/// pieces are pairwise disjoint, so these stages never interact and can be
/// advanced lazily to a value window without changing the picked sets.
struct TailStage {
    piece: NatStream,
    scan_idx: usize,
    need: BigUint,
}

struct LuzinState {
    spec: LuzinSpec,
    prior: Vec<NatStream>,
    /// Picks of the completed head stages (every stage up to the last
    /// prior-member position). Head stages follow the sequential definition
    /// exactly; they are the only stages whose picks can occupy a later
    /// predecessor.
    head: Option<BTreeSet<BigUint>>,
    /// Open tail stages, by stage index.
    tail: BTreeMap<usize, TailStage>,
    /// Elements are fully determined below this window.
    window: BigUint,
    elements: BTreeSet<BigUint>,
}

impl LuzinState {
    fn head_stage_count(&self) -> usize {
        2 * self.prior.len()
    }

    /// Run the sequential definition for the head stages: stage `n` picks
    /// the least fresh elements of `B_n` until `B_n` holds exactly `k_n`
    /// elements of the union built so far.
    fn ensure_head(&mut self) -> Result<()> {
        if self.head.is_some() {
            return Ok(());
        }
        let predecessors: Vec<NatStream> = (0..self.head_stage_count())
            .map(|p| predecessor(&self.spec, &self.prior, p))
            .collect();
        let mut union: BTreeSet<BigUint> = BTreeSet::new();
        for (n, b_n) in predecessors.iter().enumerate() {
            let k_n = self.spec.lengths.try_nth(n)?;
            let occupied =
                BigUint::from(union.iter().filter(|v| b_n.contains(v)).count());
            if k_n < occupied {
                return Err(Error::LuzinLength {
                    stage: n,
                    length: k_n,
                    occupied,
                });
            }
            let mut need = k_n - occupied;
            let mut idx = 0usize;
            while need > BigUint::zero() {
                let v = b_n.try_nth(idx)?;
                idx += 1;
                if (0..n).all(|i| !predecessors[i].contains(&v)) {
                    union.insert(v);
                    need -= 1u32;
                }
            }
        }
        self.elements.extend(union.iter().cloned());
        self.head = Some(union);
        Ok(())
    }

    /// Determine every element below `window`. Tail stages sit at partition
    /// positions; their exclusions among the earlier predecessors are the
    /// disjoint earlier pieces (automatic) and the prior members (probed at
    /// candidate values only, so nothing is ever materialized past the
    /// window by more than one element).
    fn extend_to(&mut self, window: &BigUint) -> Result<()> {
        self.ensure_head()?;
        if *window <= self.window {
            return Ok(());
        }
        let j = self.prior.len();
        let mut t = self.head_stage_count();
        loop {
            let piece_index = t - j;
            let piece_min = (BigUint::one() << piece_index) - 1u32;
            if piece_min >= *window {
                break;
            }
            if !self.tail.contains_key(&t) {
                let piece = self.spec.partition_member(piece_index);
                let k_t = self.spec.lengths.try_nth(t)?;
                let head = self.head.as_ref().expect("head complete");
                let occupied = BigUint::from(
                    head.iter().filter(|v| piece.contains(v)).count(),
                );
                if k_t < occupied {
                    return Err(Error::LuzinLength {
                        stage: t,
                        length: k_t,
                        occupied,
                    });
                }
                self.tail.insert(
                    t,
                    TailStage {
                        piece,
                        scan_idx: 0,
                        need: k_t - occupied,
                    },
                );
            }
            let stage = self.tail.get_mut(&t).expect("just opened");
            while stage.need > BigUint::zero() {
                let v = stage.piece.try_nth(stage.scan_idx)?;
                if v >= *window {
                    break;
                }
                stage.scan_idx += 1;
                if self.prior.iter().all(|p| !p.contains(&v)) {
                    self.elements.insert(v);
                    stage.need -= 1u32;
                }
            }
            t += 1;
        }
        self.window = window.clone();
        Ok(())
    }

    fn next_element(&mut self, after: Option<&BigUint>) -> Result<BigUint> {
        let mut window = match after {
            None => BigUint::from(4u32),
            Some(v) => (v + 1u32) * 2u32,
        };
        loop {
            self.extend_to(&window)?;
            let found = match after {
                None => self.elements.first(),
                Some(v) => self.elements.range((
                    std::ops::Bound::Excluded(v.clone()),
                    std::ops::Bound::Unbounded,
                )).next(),
            };
            if let Some(v) = found {
                if *v < self.window {
                    return Ok(v.clone());
                }
            }
            window = &self.window * 2u32;
        }
    }
}

/// The member built at stage `j` on top of the `j` members already
/// constructed, as a lazy sorted enumeration of the union of its stage picks.
pub fn luzin_member(spec: &LuzinSpec, j: usize, prior: &[NatStream]) -> NatStream {
    assert_eq!(prior.len(), j, "prior must hold the j members already built");
    let mut state = LuzinState {
        spec: spec.clone(),
        prior: prior.to_vec(),
        head: None,
        tail: BTreeMap::new(),
        window: BigUint::zero(),
        elements: BTreeSet::new(),
    };
    NatStream::from_steps(format!("luzin[{j}]"), move |prefix| {
        state.next_element(prefix.last())
    })
}

/// The family of `m` constructed members (the partition pieces are
/// scaffolding and are discarded), with exact pairwise size certificates:
/// member `j'` sits at position `2j' + 1` in the enumeration used while
/// building member `j`, so their intersection has exactly `k_{2j'+1}`
/// elements.
pub fn luzin_family(spec: &LuzinSpec, m: usize) -> Result<ADFamily> {
    spec.validate_lengths_through(2 * m)?;
    let mut members: Vec<NatStream> = Vec::with_capacity(m);
    for j in 0..m {
        members.push(luzin_member(spec, j, &members));
    }
    let mut certificates = BTreeMap::new();
    for j in 0..m {
        for jp in 0..j {
            certificates.insert(
                (jp, j),
                Certificate {
                    size: spec.lengths.try_nth(2 * jp + 1)?,
                    elements: None,
                },
            );
        }
    }
    ADFamily::with_certificates(members, certificates, spec.trace_horizon.clone())
}

/// The binary tree branching exactly at the levels listed in `levels`,
/// explored to the working depth.
#[derive(Clone)]
pub struct TreeSpec {
    levels: NatStream,
    depth: usize,
}

impl TreeSpec {
    pub fn new(levels: NatStream, depth: usize) -> Self {
        TreeSpec { levels, depth }
    }

    pub fn levels(&self) -> &NatStream {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn branches_at(&self, level: usize) -> bool {
        self.levels.contains(&BigUint::from(level))
    }
}

/// All nodes of the tree with length up to the working depth. Every node has
/// a child 1; it also has a child 0 exactly when its level branches.
pub fn tree_nodes(spec: &TreeSpec) -> BTreeSet<BitString> {
    let mut nodes = BTreeSet::from([BitString::empty()]);
    let mut level = vec![BitString::empty()];
    for n in 0..spec.depth {
        let branching = spec.branches_at(n);
        let mut next = Vec::with_capacity(level.len() * 2);
        for s in &level {
            if branching {
                next.push(s.child(false));
            }
            next.push(s.child(true));
        }
        nodes.extend(next.iter().cloned());
        level = next;
    }
    nodes
}

/// The branch equal to 1 everywhere except a single 0 at its distinguished
/// level. Always a legal branch: the zero sits at a branching level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedBranch {
    zero_level: BigUint,
}

impl IndexedBranch {
    pub fn zero_level(&self) -> &BigUint {
        &self.zero_level
    }

    pub fn bit(&self, level: &BigUint) -> bool {
        level != &self.zero_level
    }

    pub fn prefix(&self, len: usize) -> BitString {
        BitString::from_bits(
            &(0..len)
                .map(|l| self.bit(&BigUint::from(l)))
                .collect::<Vec<bool>>(),
        )
    }

    /// Code of the length-`len` prefix under the level-order pairing,
    /// in closed form.
    pub fn prefix_code(&self, len: &BigUint) -> BigUint {
        // all-ones value is 2^len - 1; a zero at level z (when len > z)
        // clears the bit worth 2^(len - 1 - z)
        let ones = (BigUint::one() << bits_of(len)) - 1u32;
        let value = if len > &self.zero_level {
            let place = len - 1u32 - &self.zero_level;
            &ones - (BigUint::one() << bits_of(&place))
        } else {
            ones.clone()
        };
        ones + value
    }
}

fn bits_of(v: &BigUint) -> u64 {
    v.try_into()
        .expect("prefix length within shiftable range")
}

/// The branch whose single zero sits at the `i`-th branching level.
/// For `i < j`, branches `i` and `j` first differ at the `i`-th level.
pub fn indexed_branch(spec: &TreeSpec, i: usize) -> IndexedBranch {
    IndexedBranch {
        zero_level: spec.levels.nth(i),
    }
}

/// Family of the node-sets of the first `m` indexed branches, coded into the
/// naturals level-order. The intersection of branches `i < j` is their
/// common prefix set: the `a_i + 1` prefixes up to the `i`-th branching
/// level, all of them all-ones words, with codes `2^(k+1) - 2`.
pub fn branch_family(spec: &TreeSpec, m: usize) -> ADFamily {
    let members: Vec<NatStream> = (0..m)
        .map(|i| {
            let branch = indexed_branch(spec, i);
            NatStream::from_index_fn(format!("branch[{i}]"), move |k| branch.prefix_code(k))
        })
        .collect();
    let mut certificates = BTreeMap::new();
    for i in 0..m {
        let a_i = spec.levels.nth(i);
        for j in (i + 1)..m {
            let elements = if a_i < BigUint::from(spec.depth) {
                let top: u64 = (&a_i).try_into().expect("below working depth");
                Some(
                    (0..=top)
                        .map(|k| (BigUint::one() << (k + 1)) - 2u32)
                        .collect(),
                )
            } else {
                None
            };
            certificates.insert(
                (i, j),
                Certificate {
                    size: &a_i + 1u32,
                    elements,
                },
            );
        }
    }
    let horizon = (BigUint::one() << (spec.depth + 1)) - 1u32;
    ADFamily::with_certificates(members, certificates, horizon)
        .expect("ordered certificate keys")
}
