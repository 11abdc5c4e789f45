//! Finite truncations of the spaces built over an almost disjoint family,
//! the bijection-normal-form homeomorphism criterion, witness searches for
//! the oscillation obstruction, and a brute-force search oracle.
//!
//! Every verdict here is horizon-stamped: the checks decide properties of
//! the truncations only, and the obstruction verdict additionally requires
//! exact (certificate-backed) spectra, since a truncated spectrum could
//! oscillate spuriously.

use crate::error::{Error, Result};
use crate::family::{ADFamily, Spectrum};
use crate::oscillation::almost_oscillation_bound_nondegenerate;
use num_bigint::BigUint;
use std::fmt;

/// The first `n` isolated points of the space together with the family's
/// member points, each member seen through its trace below `n`.
#[derive(Clone)]
pub struct PsiTruncation {
    family: ADFamily,
    n: usize,
    traces: Vec<u64>,
}

impl PsiTruncation {
    /// Truncate at `n` isolated points (`n <= 64`; the search oracle and the
    /// criterion checks work on word-sized point sets).
    pub fn new(family: ADFamily, n: usize) -> Result<Self> {
        if n > 64 {
            return Err(Error::Precondition(format!(
                "truncation horizon {n} exceeds the word-sized point set"
            )));
        }
        let horizon = BigUint::from(n as u64);
        let traces = family
            .members()
            .iter()
            .map(|m| {
                let mut mask = 0u64;
                for v in m.below(&horizon).elements() {
                    let bit: u64 = v.try_into().expect("below horizon");
                    mask |= 1 << bit;
                }
                mask
            })
            .collect();
        Ok(PsiTruncation { family, n, traces })
    }

    pub fn family(&self) -> &ADFamily {
        &self.family
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn member_count(&self) -> usize {
        self.traces.len()
    }

    pub fn trace_mask(&self, i: usize) -> u64 {
        self.traces[i]
    }

    pub fn trace_elements(&self, i: usize) -> Vec<u64> {
        mask_elements(self.traces[i])
    }
}

fn mask_elements(mask: u64) -> Vec<u64> {
    (0..64).filter(|b| mask >> b & 1 == 1).collect()
}

/// A candidate homeomorphism in normal form: a permutation of the isolated
/// points, a bijection of the member points, and per-member finite exception
/// sets (`F` on the domain side, `G` on the image side).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BijectionData {
    pub omega_map: Vec<usize>,
    pub member_map: Vec<usize>,
    pub exceptions_f: Vec<Vec<u64>>,
    pub exceptions_g: Vec<Vec<u64>>,
}

impl BijectionData {
    pub fn identity(truncation: &PsiTruncation) -> Self {
        let k = truncation.member_count();
        BijectionData {
            omega_map: (0..truncation.horizon()).collect(),
            member_map: (0..k).collect(),
            exceptions_f: vec![Vec::new(); k],
            exceptions_g: vec![Vec::new(); k],
        }
    }

    /// Structural validity against a source/target pair: the isolated-point
    /// map is a genuine permutation, the member map a bijection, and each
    /// exception set lies inside the member it refines.
    pub fn validate(&self, source: &PsiTruncation, target: &PsiTruncation) -> Result<()> {
        let n = source.horizon();
        if self.omega_map.len() != n {
            return Err(Error::Precondition(
                "omega map length differs from the horizon".into(),
            ));
        }
        let mut seen = vec![false; n];
        for &v in &self.omega_map {
            if v >= n || seen[v] {
                return Err(Error::Precondition(
                    "omega map is not a permutation of the isolated points".into(),
                ));
            }
            seen[v] = true;
        }
        let k = source.member_count();
        if self.member_map.len() != k || target.member_count() != k {
            return Err(Error::Precondition(
                "member map is not a bijection between the families".into(),
            ));
        }
        let mut seen = vec![false; k];
        for &v in &self.member_map {
            if v >= k || seen[v] {
                return Err(Error::Precondition(
                    "member map is not a bijection between the families".into(),
                ));
            }
            seen[v] = true;
        }
        if self.exceptions_f.len() != k || self.exceptions_g.len() != k {
            return Err(Error::Precondition(
                "exception lists must cover every member".into(),
            ));
        }
        for i in 0..k {
            let x = source.trace_mask(i);
            for &e in &self.exceptions_f[i] {
                if e >= n as u64 || x >> e & 1 == 0 {
                    return Err(Error::Precondition(format!(
                        "F exception {e} of member {i} lies outside the member"
                    )));
                }
            }
            let y = target.trace_mask(self.member_map[i]);
            for &e in &self.exceptions_g[i] {
                if e >= n as u64 || y >> e & 1 == 0 {
                    return Err(Error::Precondition(format!(
                        "G exception {e} of member {i} lies outside the image member"
                    )));
                }
            }
        }
        Ok(())
    }

    fn map_mask(&self, mask: u64) -> u64 {
        let mut out = 0u64;
        for (n, &v) in self.omega_map.iter().enumerate() {
            if mask >> n & 1 == 1 {
                out |= 1 << v;
            }
        }
        out
    }
}

/// Outcome of the homeomorphism criterion at a horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CriterionOutcome {
    PassAtHorizon { certified_to: usize },
    /// The first member whose image sets differ beyond the exception sets,
    /// with the offending isolated point in image coordinates.
    Fail { member: usize, element: u64 },
}

/// The bijective normal-form criterion: the data describes a homeomorphism
/// of the truncations iff for every member, the pointwise image of its trace
/// and the trace of its image member agree up to the exception sets.
pub fn check_homeo_criterion(
    data: &BijectionData,
    source: &PsiTruncation,
    target: &PsiTruncation,
) -> Result<CriterionOutcome> {
    if source.horizon() != target.horizon() {
        return Err(Error::Precondition(
            "source and target truncations must share the horizon".into(),
        ));
    }
    data.validate(source, target)?;
    for i in 0..source.member_count() {
        let image_of_trace = data.map_mask(source.trace_mask(i));
        let image_trace = target.trace_mask(data.member_map[i]);
        let allowed_left = data.map_mask(
            self_mask(&data.exceptions_f[i]),
        );
        let allowed_right = self_mask(&data.exceptions_g[i]);
        let left_violations = image_of_trace & !image_trace & !allowed_left;
        let right_violations = image_trace & !image_of_trace & !allowed_right;
        let violations = left_violations | right_violations;
        if violations != 0 {
            return Ok(CriterionOutcome::Fail {
                member: i,
                element: violations.trailing_zeros() as u64,
            });
        }
    }
    Ok(CriterionOutcome::PassAtHorizon {
        certified_to: source.horizon(),
    })
}

fn self_mask(elements: &[u64]) -> u64 {
    elements.iter().fold(0u64, |m, &e| m | 1 << e)
}

/// Transport a truncation along a permutation of its isolated points: the
/// target family has each trace mapped pointwise, and the data consisting of
/// that permutation with the identity member map and empty exceptions passes
/// the criterion by construction.
pub fn transport_along(source: &PsiTruncation, pi: &[usize]) -> Result<(PsiTruncation, BijectionData)> {
    let n = source.horizon();
    if pi.len() != n {
        return Err(Error::Precondition(
            "permutation length differs from the horizon".into(),
        ));
    }
    let horizon = BigUint::from(n as u64);
    let members: Vec<_> = source
        .family()
        .members()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut mapped: Vec<BigUint> = m
                .below(&horizon)
                .elements()
                .iter()
                .map(|v| {
                    let b: usize = v.try_into().expect("below horizon");
                    BigUint::from(pi[b] as u64)
                })
                .collect();
            mapped.sort();
            let len = BigUint::from(mapped.len());
            let tail = m.clone();
            NatStream::from_index_fn(format!("π[{i}]"), move |k| {
                if k < &len {
                    let idx: usize = k.try_into().expect("trace index");
                    mapped[idx].clone()
                } else {
                    tail.nth(k.try_into().expect("tail index"))
                }
            })
        })
        .collect();
    let family = ADFamily::new(members, horizon);
    let target = PsiTruncation::new(family, n)?;
    let mut data = BijectionData::identity(source);
    data.omega_map = pi.to_vec();
    Ok((target, data))
}

use crate::stream::NatStream;

/// Least isolated point `m` with `n < m < horizon` that at least `t` members
/// contain and at least `t` members omit. Only points lying in some member
/// can qualify, so the scan walks the member traces.
pub fn splitting_level(family: &ADFamily, n: &BigUint, t: usize) -> Option<BigUint> {
    let all: Vec<usize> = (0..family.len()).collect();
    splitting_level_within(family, &all, n, t)
}

/// The same scan restricted to a subfamily.
pub fn splitting_level_within(
    family: &ADFamily,
    indices: &[usize],
    n: &BigUint,
    t: usize,
) -> Option<BigUint> {
    if t == 0 || t > indices.len() {
        return None;
    }
    let traces: Vec<_> = indices.iter().map(|&i| family.trace(i)).collect();
    let mut candidates: std::collections::BTreeSet<BigUint> = std::collections::BTreeSet::new();
    for tr in &traces {
        for e in tr.elements() {
            if e > n && e < family.horizon() {
                candidates.insert(e.clone());
            }
        }
    }
    for m in candidates {
        let containing = traces.iter().filter(|tr| tr.contains(&m)).count();
        if containing >= t && traces.len() - containing >= t {
            return Some(m);
        }
    }
    None
}

/// Iterate the splitting-level scan to select a subfamily sharing a common
/// finite core: each round keeps the members containing the found level.
/// Returns the core and the surviving member indices.
pub fn refine_to_common_core(
    family: &ADFamily,
    t: usize,
    rounds: usize,
) -> (Vec<BigUint>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..family.len()).collect();
    let mut core = Vec::new();
    let mut above = BigUint::from(0u32);
    for _ in 0..rounds {
        let Some(m) = splitting_level_within(family, &indices, &above, t) else {
            break;
        };
        indices.retain(|&i| family.trace(i).contains(&m));
        above = m.clone();
        core.push(m);
    }
    (core, indices)
}

fn pair_table(family: &ADFamily, indices: &[usize]) -> Vec<Vec<Vec<BigUint>>> {
    // one consistent route per family: certificates only if every needed
    // pair carries elements, else traces for all pairs
    let use_certs = indices.iter().enumerate().all(|(p, &i)| {
        indices[p + 1..].iter().all(|&j| {
            matches!(
                family.certificate(i, j),
                Some(crate::family::Certificate {
                    elements: Some(_),
                    ..
                })
            )
        })
    });
    let k = indices.len();
    let mut table = vec![vec![Vec::new(); k]; k];
    for p in 0..k {
        for q in (p + 1)..k {
            let (mut inter, from_cert) =
                family.pair_intersection(indices[p], indices[q]);
            if !use_certs && from_cert {
                // fall back to traces for consistency
                let a = family.trace(indices[p]);
                let b = family.trace(indices[q]);
                inter = a
                    .elements()
                    .iter()
                    .filter(|v| b.contains(v))
                    .cloned()
                    .collect();
            }
            table[p][q] = inter.clone();
            table[q][p] = inter;
        }
    }
    table
}

fn is_proper_subset(a: &[BigUint], b: &[BigUint]) -> bool {
    a.len() < b.len() && a.iter().all(|v| b.binary_search(v).is_ok())
}

/// Witness triple for the two-sided intersection-growth property: distinct
/// members `x, y, z` with `max(x ∩ y) > n` and `x ∩ y ⊊ x ∩ z`, whose images
/// under the member bijection satisfy the same two clauses. Exhaustive over
/// ordered triples; absent if none qualifies at this horizon.
pub fn lemma6_witness(
    source: &ADFamily,
    target: &ADFamily,
    map: &[usize],
    n: &BigUint,
) -> Option<(usize, usize, usize)> {
    let indices: Vec<usize> = (0..source.len()).collect();
    let src = pair_table(source, &indices);
    let tgt_indices: Vec<usize> = (0..target.len()).collect();
    let tgt = pair_table(target, &tgt_indices);
    for &x in &indices {
        for &y in &indices {
            if y == x {
                continue;
            }
            for &z in &indices {
                if z == x || z == y {
                    continue;
                }
                let xy = &src[x][y];
                let xz = &src[x][z];
                if xy.last().is_none_or(|max| max <= n) || !is_proper_subset(xy, xz) {
                    continue;
                }
                let hxy = &tgt[map[x]][map[y]];
                let hxz = &tgt[map[x]][map[z]];
                if hxy.last().is_none_or(|max| max <= n) || !is_proper_subset(hxy, hxz) {
                    continue;
                }
                return Some((x, y, z));
            }
        }
    }
    None
}

/// Witness triple inside the subfamily where the relative intersection sizes
/// disagree with their images: `|x∩z \ x∩y| != |h(x)∩h(z) \ h(x)∩h(y)|`.
pub fn dense_oscillation_witness(
    source: &ADFamily,
    target: &ADFamily,
    map: &[usize],
    subfamily: &[usize],
) -> Option<(usize, usize, usize)> {
    let all: Vec<usize> = (0..source.len()).collect();
    let src = pair_table(source, &all);
    let tgt_all: Vec<usize> = (0..target.len()).collect();
    let tgt = pair_table(target, &tgt_all);
    for &x in subfamily {
        for &y in subfamily {
            if y == x {
                continue;
            }
            for &z in subfamily {
                if z == x || z == y {
                    continue;
                }
                let lhs = diff_count(&src[x][z], &src[x][y]);
                let rhs = diff_count(&tgt[map[x]][map[z]], &tgt[map[x]][map[y]]);
                if lhs != rhs {
                    return Some((x, y, z));
                }
            }
        }
    }
    None
}

fn diff_count(a: &[BigUint], b: &[BigUint]) -> usize {
    a.iter().filter(|v| b.binary_search(v).is_err()).count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prop8Outcome {
    Pass,
    Fail { triple: (usize, usize, usize) },
}

/// The cardinality identity behind the obstruction: for data passing the
/// criterion whose subfamily shares constant exception sets `F` and `G`, and
/// whose relative intersections avoid them, every triple must satisfy
/// `|x∩z \ x∩y| = |H(x)∩H(z) \ H(x)∩H(y)|`. A failure falsifies the data,
/// not the identity.
pub fn prop8_identity_check(
    data: &BijectionData,
    source: &PsiTruncation,
    target: &PsiTruncation,
    subfamily: &[usize],
) -> Result<Prop8Outcome> {
    match check_homeo_criterion(data, source, target)? {
        CriterionOutcome::PassAtHorizon { .. } => {}
        CriterionOutcome::Fail { member, .. } => {
            return Err(Error::Precondition(format!(
                "data fails the homeomorphism criterion at member {member}"
            )));
        }
    }
    let Some(&first) = subfamily.first() else {
        return Ok(Prop8Outcome::Pass);
    };
    let f_mask = self_mask(&data.exceptions_f[first]);
    let g_mask = self_mask(&data.exceptions_g[first]);
    for &i in subfamily {
        if self_mask(&data.exceptions_f[i]) != f_mask {
            return Err(Error::Precondition(
                "subfamily does not share a constant F exception set".into(),
            ));
        }
        if self_mask(&data.exceptions_g[i]) != g_mask {
            return Err(Error::Precondition(
                "subfamily does not share a constant G exception set".into(),
            ));
        }
    }
    let mut verdict = Prop8Outcome::Pass;
    for &x in subfamily {
        for &y in subfamily {
            if y == x {
                continue;
            }
            for &z in subfamily {
                if z == x || z == y {
                    continue;
                }
                let xz_minus_xy = source.trace_mask(x) & source.trace_mask(z)
                    & !(source.trace_mask(x) & source.trace_mask(y));
                if xz_minus_xy & f_mask != 0 {
                    return Err(Error::Precondition(format!(
                        "triple ({x},{y},{z}) meets F inside x∩z \\ x∩y"
                    )));
                }
                let hx = target.trace_mask(data.member_map[x]);
                let hy = target.trace_mask(data.member_map[y]);
                let hz = target.trace_mask(data.member_map[z]);
                let image_diff = hx & hz & !(hx & hy);
                if image_diff & g_mask != 0 {
                    return Err(Error::Precondition(format!(
                        "triple ({x},{y},{z}) meets G inside H(x)∩H(z) \\ H(x)∩H(y)"
                    )));
                }
                if verdict == Prop8Outcome::Pass
                    && xz_minus_xy.count_ones() != image_diff.count_ones()
                {
                    verdict = Prop8Outcome::Fail { triple: (x, y, z) };
                }
            }
        }
    }
    Ok(verdict)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Obstructed,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Obstructed => write!(f, "obstructed"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Spectra of the two families, their almost-oscillation bound, and the
/// verdict. Obstructed only when the bound exists nondegenerately and both
/// spectra are exact; a truncated spectrum could oscillate spuriously.
#[derive(Debug, Clone)]
pub struct ObstructionReport {
    pub spectra: (Spectrum, Spectrum),
    pub oscillation_bound: Option<BigUint>,
    pub verdict: Verdict,
    pub horizon: BigUint,
}

pub fn obstruction_report(f: &ADFamily, g: &ADFamily) -> ObstructionReport {
    let sf = crate::family::spectrum(f);
    let sg = crate::family::spectrum(g);
    let bound = almost_oscillation_bound_nondegenerate(&sf.to_prefix(), &sg.to_prefix());
    let verdict = if bound.is_some() && sf.exact() && sg.exact() {
        Verdict::Obstructed
    } else {
        Verdict::Inconclusive
    };
    let horizon = f.horizon().clone().min(g.horizon().clone());
    ObstructionReport {
        spectra: (sf, sg),
        oscillation_bound: bound,
        verdict,
        horizon,
    }
}

/// How [`self_obstruction`] enumerates candidate bipartitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BipartitionScheme {
    /// Splits into a prefix and a suffix of the member list, in cut order.
    Contiguous,
    /// Every bipartition with both halves of size at least two, member 0
    /// pinned to the left half, in ascending bitmask order.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelfObstructionWitness {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub bound: BigUint,
}

/// First bipartition of the members whose half-spectra are both exact and
/// admit a nondegenerate almost-oscillation bound against each other.
pub fn self_obstruction(
    family: &ADFamily,
    scheme: BipartitionScheme,
) -> Option<SelfObstructionWitness> {
    let m = family.len();
    if m < 4 {
        return None;
    }
    let check = |left: Vec<usize>, right: Vec<usize>| -> Option<SelfObstructionWitness> {
        let sl = family.subfamily_spectrum(&left);
        let sr = family.subfamily_spectrum(&right);
        if !sl.exact() || !sr.exact() {
            return None;
        }
        almost_oscillation_bound_nondegenerate(&sl.to_prefix(), &sr.to_prefix()).map(|bound| {
            SelfObstructionWitness { left, right, bound }
        })
    };
    match scheme {
        BipartitionScheme::Contiguous => {
            for cut in 2..=(m - 2) {
                let left: Vec<usize> = (0..cut).collect();
                let right: Vec<usize> = (cut..m).collect();
                if let Some(w) = check(left, right) {
                    return Some(w);
                }
            }
            None
        }
        BipartitionScheme::Exhaustive => {
            for mask in 0u64..(1 << (m - 1)) {
                let mut left = vec![0usize];
                let mut right = Vec::new();
                for i in 1..m {
                    if mask >> (i - 1) & 1 == 1 {
                        left.push(i);
                    } else {
                        right.push(i);
                    }
                }
                if left.len() < 2 || right.len() < 2 {
                    continue;
                }
                if let Some(w) = check(left, right) {
                    return Some(w);
                }
            }
            None
        }
    }
}

/// Backtracking search for bijection data passing the criterion with all
/// exception sets within the budget.
///
/// Member bijections are tried in lexicographic order, pruned by trace
/// cardinality alone (a passing pair can differ by at most twice the budget);
/// the isolated-point permutation is grown position by position, smallest
/// image first, pruning on running exception counts and a counting
/// feasibility bound. The first datum in this order is returned. The pruning
/// never consults the oscillation machinery this oracle cross-validates.
pub fn brute_force_homeo_search(
    source: &PsiTruncation,
    target: &PsiTruncation,
    budget: usize,
) -> Option<BijectionData> {
    #[cfg(feature = "parallel")]
    {
        search_impl(source, target, budget, true)
    }
    #[cfg(not(feature = "parallel"))]
    {
        search_impl(source, target, budget, false)
    }
}

/// Sequential reference path of the search.
pub fn brute_force_homeo_search_seq(
    source: &PsiTruncation,
    target: &PsiTruncation,
    budget: usize,
) -> Option<BijectionData> {
    search_impl(source, target, budget, false)
}

fn search_impl(
    source: &PsiTruncation,
    target: &PsiTruncation,
    budget: usize,
    parallel: bool,
) -> Option<BijectionData> {
    if source.horizon() != target.horizon()
        || source.member_count() != target.member_count()
    {
        return None;
    }
    let n = source.horizon();
    let k = source.member_count();
    let src: Vec<u64> = (0..k).map(|i| source.trace_mask(i)).collect();

    let mut member_maps: Vec<Vec<usize>> = Vec::new();
    permutations_lex(k, &mut vec![], &mut vec![false; k], &mut member_maps);
    member_maps.retain(|mm| {
        (0..k).all(|i| {
            let a = src[i].count_ones() as i64;
            let b = target.trace_mask(mm[i]).count_ones() as i64;
            (a - b).unsigned_abs() as usize <= 2 * budget
        })
    });

    let run = |mm: &Vec<usize>, first: usize| -> Option<BijectionData> {
        let tgt: Vec<u64> = (0..k).map(|i| target.trace_mask(mm[i])).collect();
        let mut state = SearchState {
            n,
            budget,
            src: &src,
            tgt: &tgt,
            perm: vec![usize::MAX; n],
            used: 0,
            f_cnt: vec![0; k],
            g_cnt: vec![0; k],
        };
        if n == 0 {
            return Some(state.into_data(mm, source, target));
        }
        if !state.assign(0, first) {
            return None;
        }
        if state.feasible(1) && state.dfs(1) {
            return Some(state.into_data(mm, source, target));
        }
        None
    };

    let tasks: Vec<(Vec<usize>, usize)> = if n == 0 {
        member_maps.iter().map(|mm| (mm.clone(), 0)).collect()
    } else {
        member_maps
            .iter()
            .flat_map(|mm| (0..n).map(move |v| (mm.clone(), v)))
            .collect()
    };

    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return tasks
            .par_iter()
            .find_map_first(|(mm, v)| run(mm, *v));
    }
    let _ = parallel;
    tasks.iter().find_map(|(mm, v)| run(mm, *v))
}

fn permutations_lex(
    k: usize,
    acc: &mut Vec<usize>,
    used: &mut Vec<bool>,
    out: &mut Vec<Vec<usize>>,
) {
    if acc.len() == k {
        out.push(acc.clone());
        return;
    }
    for v in 0..k {
        if !used[v] {
            used[v] = true;
            acc.push(v);
            permutations_lex(k, acc, used, out);
            acc.pop();
            used[v] = false;
        }
    }
}

struct SearchState<'a> {
    n: usize,
    budget: usize,
    src: &'a [u64],
    tgt: &'a [u64],
    perm: Vec<usize>,
    used: u64,
    f_cnt: Vec<usize>,
    g_cnt: Vec<usize>,
}

impl SearchState<'_> {
    /// Try `perm[pos] = v`; updates the exception counters and reports
    /// whether every member stays within budget.
    fn assign(&mut self, pos: usize, v: usize) -> bool {
        if self.used >> v & 1 == 1 {
            return false;
        }
        for i in 0..self.src.len() {
            let in_x = self.src[i] >> pos & 1 == 1;
            let in_y = self.tgt[i] >> v & 1 == 1;
            if in_x && !in_y {
                self.f_cnt[i] += 1;
            }
            if in_y && !in_x {
                self.g_cnt[i] += 1;
            }
        }
        self.perm[pos] = v;
        self.used |= 1 << v;
        if self
            .f_cnt
            .iter()
            .chain(self.g_cnt.iter())
            .all(|&c| c <= self.budget)
        {
            true
        } else {
            self.unassign(pos, v);
            false
        }
    }

    fn unassign(&mut self, pos: usize, v: usize) {
        for i in 0..self.src.len() {
            let in_x = self.src[i] >> pos & 1 == 1;
            let in_y = self.tgt[i] >> v & 1 == 1;
            if in_x && !in_y {
                self.f_cnt[i] -= 1;
            }
            if in_y && !in_x {
                self.g_cnt[i] -= 1;
            }
        }
        self.perm[pos] = usize::MAX;
        self.used &= !(1u64 << v);
    }

    /// Counting bound: the unassigned positions of a member must map into
    /// its unassigned image values up to the remaining F slack, and those
    /// values must be consumed up to the remaining G slack.
    fn feasible(&self, pos: usize) -> bool {
        for i in 0..self.src.len() {
            let remaining = (self.src[i] >> pos).count_ones() as i64;
            let available = (self.tgt[i] & !self.used).count_ones() as i64;
            if remaining - available > (self.budget - self.f_cnt[i]) as i64 {
                return false;
            }
            if available - remaining > (self.budget - self.g_cnt[i]) as i64 {
                return false;
            }
        }
        true
    }

    fn dfs(&mut self, pos: usize) -> bool {
        if pos == self.n {
            return true;
        }
        for v in 0..self.n {
            if !self.assign(pos, v) {
                continue;
            }
            if self.feasible(pos + 1) && self.dfs(pos + 1) {
                return true;
            }
            self.unassign(pos, v);
        }
        false
    }

    fn into_data(
        self,
        mm: &[usize],
        source: &PsiTruncation,
        target: &PsiTruncation,
    ) -> BijectionData {
        let k = self.src.len();
        let mut data = BijectionData {
            omega_map: self.perm,
            member_map: mm.to_vec(),
            exceptions_f: vec![Vec::new(); k],
            exceptions_g: vec![Vec::new(); k],
        };
        for i in 0..k {
            let image_of_trace = data.map_mask(source.trace_mask(i));
            let image_trace = target.trace_mask(mm[i]);
            for e in mask_elements(source.trace_mask(i)) {
                if image_trace >> data.omega_map[e as usize] & 1 == 0 {
                    data.exceptions_f[i].push(e);
                }
            }
            for e in mask_elements(image_trace & !image_of_trace) {
                data.exceptions_g[i].push(e);
            }
        }
        data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{branch_family, TreeSpec};
    use crate::stream::NatStream;

    fn nat(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn small_family() -> ADFamily {
        ADFamily::from_traces(
            &[vec![0, 2, 5, 9], vec![1, 2, 6, 10], vec![3, 4, 5, 11]],
            12,
        )
        .expect("valid traces")
    }

    #[test]
    fn identity_data_passes() {
        let t = PsiTruncation::new(small_family(), 12).expect("horizon fits");
        let data = BijectionData::identity(&t);
        assert_eq!(
            check_homeo_criterion(&data, &t, &t).expect("valid data"),
            CriterionOutcome::PassAtHorizon { certified_to: 12 }
        );
    }

    #[test]
    fn finite_overlap_member_map_fails_with_witness() {
        // send member 0 to member 2 (traces overlap only in {5}) with the
        // identity on the isolated points and no exceptions
        let t = PsiTruncation::new(small_family(), 12).expect("horizon fits");
        let mut data = BijectionData::identity(&t);
        data.member_map = vec![2, 1, 0];
        match check_homeo_criterion(&data, &t, &t).expect("valid data") {
            CriterionOutcome::Fail { member: 0, element } => {
                // first violating point of trace 0 outside trace 2
                assert_eq!(element, 0);
            }
            other => panic!("expected a failure, got {other:?}"),
        }
    }

    #[test]
    fn swap_of_points_outside_every_member_passes() {
        let t = PsiTruncation::new(small_family(), 12).expect("horizon fits");
        // 7 and 8 lie outside all three traces
        let mut data = BijectionData::identity(&t);
        data.omega_map.swap(7, 8);
        assert!(matches!(
            check_homeo_criterion(&data, &t, &t).expect("valid data"),
            CriterionOutcome::PassAtHorizon { .. }
        ));
    }

    #[test]
    fn transport_passes_criterion_and_prop8() {
        let t = PsiTruncation::new(small_family(), 12).expect("horizon fits");
        let pi: Vec<usize> = vec![5, 3, 8, 1, 0, 11, 2, 9, 4, 10, 7, 6];
        let (target, data) = transport_along(&t, &pi).expect("valid permutation");
        assert!(matches!(
            check_homeo_criterion(&data, &t, &target).expect("valid data"),
            CriterionOutcome::PassAtHorizon { .. }
        ));
        let all = vec![0, 1, 2];
        assert_eq!(
            prop8_identity_check(&data, &t, &target, &all).expect("preconditions hold"),
            Prop8Outcome::Pass
        );
    }

    #[test]
    fn splitting_level_examples() {
        let evens = NatStream::evens();
        let odds = NatStream::from_index_fn("odds", |i| i * 2u32 + 1u32);
        let f = ADFamily::new(vec![evens, odds], nat(16));
        assert_eq!(splitting_level(&f, &nat(0), 1), Some(nat(1)));
        assert_eq!(splitting_level(&f, &nat(0), 3), None);

        let spec = TreeSpec::new(NatStream::from_literal("A", &[1, 3, 6]), 10);
        let bf = branch_family(&spec, 3);
        assert_eq!(splitting_level(&bf, &nat(0), 1), Some(nat(5)));
    }

    #[test]
    fn lemma6_examples() {
        // two members only: no triple exists
        let f2 = ADFamily::from_traces(&[vec![0, 5], vec![5, 9]], 12).expect("valid");
        assert_eq!(lemma6_witness(&f2, &f2, &[0, 1], &nat(0)), None);

        // x∩y = {5}, x∩z = {5,9}; images x∩y = {6}, x∩z = {6,7}
        let src = ADFamily::from_traces(
            &[vec![0, 5, 9, 11], vec![1, 5, 10], vec![2, 5, 9]],
            12,
        )
        .expect("valid");
        let tgt = ADFamily::from_traces(
            &[vec![0, 6, 7, 11], vec![1, 6, 10], vec![2, 6, 7]],
            12,
        )
        .expect("valid");
        assert_eq!(
            lemma6_witness(&src, &tgt, &[0, 1, 2], &nat(4)),
            Some((0, 1, 2))
        );
        // clause 1 fails for every triple once n reaches max(x∩y)
        assert_eq!(lemma6_witness(&src, &tgt, &[0, 1, 2], &nat(9)), None);
    }

    #[test]
    fn lemma6_witness_monotone_in_n() {
        let src = ADFamily::from_traces(
            &[vec![0, 5, 9, 11], vec![1, 5, 10], vec![2, 5, 9]],
            12,
        )
        .expect("valid");
        let tgt = ADFamily::from_traces(
            &[vec![0, 6, 7, 11], vec![1, 6, 10], vec![2, 6, 7]],
            12,
        )
        .expect("valid");
        for n in 0..4u64 {
            assert!(lemma6_witness(&src, &tgt, &[0, 1, 2], &nat(n)).is_some());
        }
    }

    #[test]
    fn dense_oscillation_examples() {
        // x∩y = {0}, x∩z = {0,5}; images {1} and {1,2,3}: sizes 1 vs 2
        let src = ADFamily::from_traces(
            &[vec![0, 5, 7], vec![0, 8, 9], vec![0, 5, 10]],
            12,
        )
        .expect("valid");
        let tgt = ADFamily::from_traces(
            &[vec![1, 2, 3, 7], vec![1, 8, 9], vec![1, 2, 3, 10]],
            12,
        )
        .expect("valid");
        assert_eq!(
            dense_oscillation_witness(&src, &tgt, &[0, 1, 2], &[0, 1, 2]),
            Some((0, 1, 2))
        );
        // identity bijection never witnesses
        assert_eq!(
            dense_oscillation_witness(&src, &src, &[0, 1, 2], &[0, 1, 2]),
            None
        );
        // subfamilies of size two admit no triple
        assert_eq!(
            dense_oscillation_witness(&src, &tgt, &[0, 1, 2], &[0, 1]),
            None
        );
    }

    #[test]
    fn dense_oscillation_invariant_under_joint_relabeling() {
        let src = ADFamily::from_traces(
            &[vec![0, 5, 7], vec![0, 8, 9], vec![0, 5, 10]],
            12,
        )
        .expect("valid");
        // relabel both sides by the same permutation of [0, 12)
        let pi: [u64; 12] = [3, 0, 7, 1, 9, 2, 11, 4, 10, 5, 8, 6];
        let relabel = |traces: &[Vec<u64>]| -> Vec<Vec<u64>> {
            traces
                .iter()
                .map(|t| {
                    let mut m: Vec<u64> = t.iter().map(|&v| pi[v as usize]).collect();
                    m.sort_unstable();
                    m
                })
                .collect()
        };
        let moved = ADFamily::from_traces(
            &relabel(&[vec![0, 5, 7], vec![0, 8, 9], vec![0, 5, 10]]),
            12,
        )
        .expect("valid");
        assert_eq!(
            dense_oscillation_witness(&src, &src, &[0, 1, 2], &[0, 1, 2]),
            dense_oscillation_witness(&moved, &moved, &[0, 1, 2], &[0, 1, 2]),
        );
    }

    #[test]
    fn prop8_rejects_corrupted_data() {
        let t = PsiTruncation::new(small_family(), 12).expect("horizon fits");
        let pi: Vec<usize> = vec![5, 3, 8, 1, 0, 11, 2, 9, 4, 10, 7, 6];
        let (target, data) = transport_along(&t, &pi).expect("valid permutation");
        // corrupt: claim an exception that the criterion then cannot honor
        let mut broken = data.clone();
        broken.omega_map.swap(0, 2); // 0 and 2 lie in members
        let outcome = check_homeo_criterion(&broken, &t, &target).expect("valid data");
        assert!(matches!(outcome, CriterionOutcome::Fail { .. }));
        assert!(prop8_identity_check(&broken, &t, &target, &[0, 1, 2]).is_err());
    }

    #[test]
    fn obstruction_report_examples() {
        // spectra {2,4} vs {3,9}: difference sets {2} vs {6}
        let f = ADFamily::from_traces(
            &[vec![0, 1, 2, 3], vec![0, 1, 4, 5], vec![0, 1, 2, 6, 7]],
            16,
        )
        .expect("valid");
        // pairwise: |01|=2? traces: {0,1,2,3}∩{0,1,4,5} = {0,1} (2);
        // {0,1,2,3}∩{0,1,2,6,7} = {0,1,2}... sizes {2,3}; build target {3,9} later
        let s = crate::family::spectrum(&f);
        assert!(s.exact());

        let f = ADFamily::from_traces(&[vec![0, 1], vec![0, 1, 2, 3]], 16).expect("valid");
        let g = ADFamily::from_traces(&[vec![0, 1, 2], vec![0, 1, 2, 3, 4, 5, 6, 7, 8]], 16)
            .expect("valid");
        // spectra {2} vs {3}: singletons are degenerate, hence inconclusive
        let r = obstruction_report(&f, &g);
        assert_eq!(r.verdict, Verdict::Inconclusive);

        let spec_a = TreeSpec::new(NatStream::from_literal("A", &[1, 3]), 10);
        let spec_b = TreeSpec::new(NatStream::from_literal("B", &[2, 8]), 10);
        let fa = branch_family(&spec_a, 3); // spectrum {2, 4}
        let fb = branch_family(&spec_b, 3); // spectrum {3, 9}
        let r = obstruction_report(&fa, &fb);
        assert_eq!(r.oscillation_bound, Some(nat(0)));
        assert_eq!(r.verdict, Verdict::Obstructed);

        // identical families: identical spectra never oscillate nondegenerately
        let r = obstruction_report(&fa, &fa);
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert_eq!(r.oscillation_bound, None);
    }

    #[test]
    fn self_obstruction_small_family_absent() {
        let spec = TreeSpec::new(NatStream::from_literal("A", &[1, 3, 6]), 10);
        let bf = branch_family(&spec, 3);
        assert_eq!(self_obstruction(&bf, BipartitionScheme::Exhaustive), None);
    }

    #[test]
    fn search_finds_identity_first() {
        let t = PsiTruncation::new(small_family(), 12).expect("horizon fits");
        let found = brute_force_homeo_search(&t, &t, 0).expect("identity exists");
        assert_eq!(found.member_map, vec![0, 1, 2]);
        assert!(matches!(
            check_homeo_criterion(&found, &t, &t).expect("valid"),
            CriterionOutcome::PassAtHorizon { .. }
        ));
    }

    #[test]
    fn search_finds_transported_target() {
        let t = PsiTruncation::new(small_family(), 12).expect("horizon fits");
        let pi: Vec<usize> = vec![2, 0, 1, 4, 3, 6, 5, 8, 7, 10, 9, 11];
        let (target, _) = transport_along(&t, &pi).expect("valid permutation");
        let found = brute_force_homeo_search(&t, &target, 2).expect("transport exists");
        assert!(matches!(
            check_homeo_criterion(&found, &t, &target).expect("valid"),
            CriterionOutcome::PassAtHorizon { .. }
        ));
    }

    #[test]
    fn search_parallel_matches_sequential() {
        let t = PsiTruncation::new(small_family(), 12).expect("horizon fits");
        let pi: Vec<usize> = vec![2, 0, 1, 4, 3, 6, 5, 8, 7, 10, 9, 11];
        let (target, _) = transport_along(&t, &pi).expect("valid permutation");
        let a = brute_force_homeo_search(&t, &target, 1);
        let b = brute_force_homeo_search_seq(&t, &target, 1);
        assert_eq!(a, b);
    }

    #[test]
    fn refine_to_common_core_keeps_members_containing_levels() {
        let spec = TreeSpec::new(NatStream::from_literal("A", &[1, 3, 6]), 10);
        let bf = branch_family(&spec, 3);
        let (core, indices) = refine_to_common_core(&bf, 1, 2);
        assert!(!core.is_empty());
        for &i in &indices {
            for c in &core {
                assert!(bf.trace(i).contains(c));
            }
        }
    }
}
