//! Lazy exact representation of infinite subsets of the naturals.
//!
//! A [`NatStream`] is a deterministic, strictly increasing, unbounded
//! enumeration given by a rule: either a closed form over an index, or a
//! stateful step function that extends a memoized prefix. Every predicate
//! over such a set is answered from a finite materialized portion, so all
//! claims made downstream are stamped with the horizon they were checked at.

use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use std::fmt;
use std::sync::{Arc, Mutex};

enum Rule {
    /// `element(i) = f(i)`, strictly increasing in the index. Indices are
    /// big integers: dense sets reach astronomically large indices when the
    /// greedy constructions probe them by value. Rules with a cheap
    /// membership predicate carry it to shortcut `contains`.
    Indexed {
        f: Box<dyn Fn(&BigUint) -> BigUint + Send + Sync>,
        member_test: Option<Box<dyn Fn(&BigUint) -> bool + Send + Sync>>,
    },
    /// Stateful extension of a memoized prefix. The step function receives
    /// the prefix produced so far and returns the next element.
    Stepped(Mutex<Stepped>),
}

struct Stepped {
    cache: Vec<BigUint>,
    step: Box<dyn FnMut(&[BigUint]) -> Result<BigUint> + Send>,
}

struct Inner {
    label: String,
    rule: Rule,
}

/// An infinite strictly increasing set of naturals, enumerated on demand.
///
/// Cloning is cheap and shares the memoized prefix. A stream is safe to
/// consult from several threads; cache extension is serialized internally.
#[derive(Clone)]
pub struct NatStream {
    inner: Arc<Inner>,
}

impl fmt::Debug for NatStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NatStream({})", self.inner.label)
    }
}

impl NatStream {
    /// Stream from a closed form `i -> element`, strictly increasing in `i`.
    pub fn from_index_fn(
        label: impl Into<String>,
        f: impl Fn(&BigUint) -> BigUint + Send + Sync + 'static,
    ) -> Self {
        NatStream {
            inner: Arc::new(Inner {
                label: label.into(),
                rule: Rule::Indexed {
                    f: Box::new(f),
                    member_test: None,
                },
            }),
        }
    }

    /// Closed-form stream that also knows how to decide membership directly,
    /// sparing the index search on hot paths.
    pub fn from_index_fn_with_member_test(
        label: impl Into<String>,
        f: impl Fn(&BigUint) -> BigUint + Send + Sync + 'static,
        member_test: impl Fn(&BigUint) -> bool + Send + Sync + 'static,
    ) -> Self {
        NatStream {
            inner: Arc::new(Inner {
                label: label.into(),
                rule: Rule::Indexed {
                    f: Box::new(f),
                    member_test: Some(Box::new(member_test)),
                },
            }),
        }
    }

    /// Stream from a stateful step rule. The rule sees the prefix produced so
    /// far and must return a strictly larger element each time.
    pub fn from_steps(
        label: impl Into<String>,
        step: impl FnMut(&[BigUint]) -> Result<BigUint> + Send + 'static,
    ) -> Self {
        NatStream {
            inner: Arc::new(Inner {
                label: label.into(),
                rule: Rule::Stepped(Mutex::new(Stepped {
                    cache: Vec::new(),
                    step: Box::new(step),
                })),
            }),
        }
    }

    /// All naturals.
    pub fn omega() -> Self {
        Self::from_index_fn_with_member_test("omega", |i| i.clone(), |_| true)
    }

    /// The even naturals.
    pub fn evens() -> Self {
        Self::from_index_fn_with_member_test("evens", |i| i * 2u32, |v| (v % 2u32).is_zero())
    }

    /// Multiples of `m` (m >= 1).
    pub fn multiples_of(m: u64) -> Self {
        Self::from_index_fn_with_member_test(
            format!("multiples({m})"),
            move |i| i * m,
            move |v| (v % m).is_zero(),
        )
    }

    /// The listed elements followed by every natural above the last one.
    /// The tail keeps the enumeration total; callers that only consult the
    /// listed portion never observe it.
    pub fn from_literal(label: impl Into<String>, values: &[u64]) -> Self {
        let mut sorted: Vec<BigUint> = values.iter().map(|&v| BigUint::from(v)).collect();
        sorted.sort();
        sorted.dedup();
        let last = sorted.last().cloned().unwrap_or_else(BigUint::zero);
        let len = BigUint::from(sorted.len());
        Self::from_index_fn(label, move |i| {
            if i < &len {
                let idx: usize = i.try_into().expect("literal index fits usize");
                sorted[idx].clone()
            } else {
                &last + (i - &len) + 1u32
            }
        })
    }

    pub fn label(&self) -> &str {
        &self.inner.label
    }

    /// Two handles to the very same memoized stream?
    pub fn same_instance(a: &NatStream, b: &NatStream) -> bool {
        Arc::ptr_eq(&a.inner, &b.inner)
    }

    /// The `i`-th element (0-based).
    pub fn try_nth(&self, i: usize) -> Result<BigUint> {
        match &self.inner.rule {
            Rule::Indexed { f, .. } => Ok(f(&BigUint::from(i))),
            Rule::Stepped(state) => {
                let mut st = state.lock().expect("stream lock");
                let Stepped { cache, step } = &mut *st;
                while cache.len() <= i {
                    let next = step(cache)?;
                    if let Some(last) = cache.last() {
                        if next <= *last {
                            return Err(Error::NotIncreasing {
                                label: self.inner.label.clone(),
                                position: cache.len(),
                            });
                        }
                    }
                    cache.push(next);
                }
                Ok(cache[i].clone())
            }
        }
    }

    pub fn nth(&self, i: usize) -> BigUint {
        self.try_nth(i).expect("total stream rule")
    }

    /// First `k` elements, in increasing order.
    pub fn try_take(&self, k: usize) -> Result<Vec<BigUint>> {
        (0..k).map(|i| self.try_nth(i)).collect()
    }

    pub fn take(&self, k: usize) -> Vec<BigUint> {
        self.try_take(k).expect("total stream rule")
    }

    /// Least element `>= lo`.
    pub fn try_least_geq(&self, lo: &BigUint) -> Result<BigUint> {
        match &self.inner.rule {
            Rule::Indexed { f, .. } => {
                if &f(&BigUint::zero()) >= lo {
                    return Ok(f(&BigUint::zero()));
                }
                // exponential search on the index, then bisect
                let mut hi = BigUint::one();
                while &f(&hi) < lo {
                    hi *= 2u32;
                }
                let mut a = &hi / 2u32; // f(a) < lo <= f(hi)
                let mut b = hi;
                while &b - &a > BigUint::one() {
                    let mid = (&a + &b) / 2u32;
                    if &f(&mid) < lo {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                Ok(f(&b))
            }
            Rule::Stepped(state) => {
                let mut st = state.lock().expect("stream lock");
                let Stepped { cache, step } = &mut *st;
                while cache.last().is_none_or(|last| last < lo) {
                    let next = step(cache)?;
                    if let Some(last) = cache.last() {
                        if next <= *last {
                            return Err(Error::NotIncreasing {
                                label: self.inner.label.clone(),
                                position: cache.len(),
                            });
                        }
                    }
                    cache.push(next);
                }
                let pos = cache.partition_point(|v| v < lo);
                Ok(cache[pos].clone())
            }
        }
    }

    pub fn least_geq(&self, lo: &BigUint) -> BigUint {
        self.try_least_geq(lo).expect("total stream rule")
    }

    /// Least element strictly above `lo`.
    pub fn try_least_above(&self, lo: &BigUint) -> Result<BigUint> {
        self.try_least_geq(&(lo + 1u32))
    }

    pub fn least_above(&self, lo: &BigUint) -> BigUint {
        self.try_least_above(lo).expect("total stream rule")
    }

    /// Membership, decided exactly.
    pub fn try_contains(&self, v: &BigUint) -> Result<bool> {
        if let Rule::Indexed {
            member_test: Some(test),
            ..
        } = &self.inner.rule
        {
            return Ok(test(v));
        }
        Ok(&self.try_least_geq(v)? == v)
    }

    pub fn contains(&self, v: &BigUint) -> bool {
        self.try_contains(v).expect("total stream rule")
    }

    /// Every element below `horizon`, as a [`Prefix`] certifying full
    /// knowledge of membership on `[0, horizon)`.
    pub fn try_below(&self, horizon: &BigUint) -> Result<Prefix> {
        let mut elements = Vec::new();
        let mut i = 0usize;
        loop {
            let v = self.try_nth(i)?;
            if &v >= horizon {
                break;
            }
            elements.push(v);
            i += 1;
        }
        Ok(Prefix {
            elements,
            horizon: horizon.clone(),
        })
    }

    pub fn below(&self, horizon: &BigUint) -> Prefix {
        self.try_below(horizon).expect("total stream rule")
    }

}

/// A finite truncation of a set: the sorted elements below `horizon`,
/// together with the horizon itself. Membership of every natural below the
/// horizon is fully decided by the listed elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prefix {
    elements: Vec<BigUint>,
    horizon: BigUint,
}

impl Prefix {
    pub fn new(elements: Vec<BigUint>, horizon: BigUint) -> Result<Self> {
        for w in elements.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Precondition(
                    "prefix elements must be strictly increasing".into(),
                ));
            }
        }
        if let Some(last) = elements.last() {
            if *last >= horizon {
                return Err(Error::Precondition(
                    "prefix elements must lie below the horizon".into(),
                ));
            }
        }
        Ok(Prefix { elements, horizon })
    }

    pub fn from_u64s(elements: &[u64], horizon: u64) -> Self {
        Prefix::new(
            elements.iter().map(|&v| BigUint::from(v)).collect(),
            BigUint::from(horizon),
        )
        .expect("valid prefix literals")
    }

    pub fn elements(&self) -> &[BigUint] {
        &self.elements
    }

    pub fn horizon(&self) -> &BigUint {
        &self.horizon
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, v: &BigUint) -> bool {
        self.elements.binary_search(v).is_ok()
    }

    /// The truncation `S \ n`: drop every element below `n`.
    pub fn drop_below(&self, n: &BigUint) -> Prefix {
        let pos = self.elements.partition_point(|v| v < n);
        Prefix {
            elements: self.elements[pos..].to_vec(),
            horizon: self.horizon.clone(),
        }
    }
}

/// Verdict of an almost-containment check at a horizon: the finite exception
/// set `(S \ T) ∩ [0, N)`. The infinite statement `S ⊆* T` is never claimed;
/// the verdict certifies consistency up to `certified_to` only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlmostContained {
    pub exceptions: Vec<BigUint>,
    pub certified_to: BigUint,
}

/// Exceptions of `S` against `T` below the horizon.
pub fn almost_contained(s: &NatStream, t: &NatStream, horizon: &BigUint) -> AlmostContained {
    let sp = s.below(horizon);
    let tp = t.below(horizon);
    let exceptions = sp
        .elements()
        .iter()
        .filter(|v| !tp.contains(v))
        .cloned()
        .collect();
    AlmostContained {
        exceptions,
        certified_to: horizon.clone(),
    }
}

/// Diagonal pseudointersection of a decreasing chain `n -> S_n`.
///
/// Picks `p_0 = min S_0` and `p_k` = least element of `S_k` above `p_{k-1}`,
/// so `P \ S_n` is contained in the first `n` picks. Containment of the chain
/// is checked lazily on every pick: each `p_k` must be an element of
/// `S_{k-1}`, otherwise enumeration of the result signals a chain violation.
pub fn pseudointersection(
    label: impl Into<String>,
    chain: impl Fn(usize) -> NatStream + Send + 'static,
) -> NatStream {
    let mut members: Vec<NatStream> = Vec::new();
    NatStream::from_steps(label, move |prefix| {
        let k = prefix.len();
        while members.len() <= k {
            let next = chain(members.len());
            members.push(next);
        }
        let s = &members[k];
        let pick = match prefix.last() {
            None => s.try_nth(0)?,
            Some(last) => s.try_least_above(last)?,
        };
        if k > 0 {
            let prev = &members[k - 1];
            if !NatStream::same_instance(prev, s) && !prev.try_contains(&pick)? {
                return Err(Error::ChainViolation {
                    level: k,
                    element: pick,
                });
            }
        }
        Ok(pick)
    })
}

/// Superincreasing thinning: keep `q_0` = least element above 0 and then
/// each least element exceeding the sum of everything kept so far.
pub fn thin_superincreasing(s: &NatStream) -> NatStream {
    let source = s.clone();
    let mut sum = BigUint::zero();
    NatStream::from_steps(format!("thin({})", s.label()), move |_prefix| {
        let pick = source.try_least_above(&sum)?;
        sum += &pick;
        Ok(pick)
    })
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

    /// The set {2^n (2k+1) - 1 : k} used across the family constructions.
    fn dyadic(n: u32) -> NatStream {
        NatStream::from_index_fn(format!("dyadic({n})"), move |k| {
            ((k * 2u32 + 1u32) << n) - 1u32
        })
    }

    #[test]
    fn take_closed_forms() {
        assert_eq!(NatStream::evens().take(4), nats(&[0, 2, 4, 6]));
        assert_eq!(NatStream::omega().take(0), nats(&[]));
        assert_eq!(dyadic(2).take(4), nats(&[3, 11, 19, 27]));
    }

    #[test]
    fn below_closed_forms() {
        let p = NatStream::evens().below(&nat(5));
        assert_eq!(p.elements(), &nats(&[0, 2, 4])[..]);
        assert_eq!(p.horizon(), &nat(5));

        let empty = NatStream::omega().below(&nat(0));
        assert!(empty.is_empty());

        let d1 = dyadic(1).below(&nat(12));
        assert_eq!(d1.elements(), &nats(&[1, 5, 9])[..]);
    }

    #[test]
    fn below_agrees_across_horizons() {
        let s = dyadic(1);
        let small = s.below(&nat(12));
        let large = s.below(&nat(40));
        let truncated: Vec<_> = large
            .elements()
            .iter()
            .filter(|v| **v < nat(12))
            .cloned()
            .collect();
        assert_eq!(small.elements(), &truncated[..]);
    }

    #[test]
    fn least_geq_dense_and_sparse() {
        let w = NatStream::omega();
        assert_eq!(w.least_geq(&nat(17)), nat(17));
        assert_eq!(w.least_above(&nat(17)), nat(18));
        let d = dyadic(2);
        assert_eq!(d.least_geq(&nat(4)), nat(11));
        assert!(d.contains(&nat(19)));
        assert!(!d.contains(&nat(20)));
    }

    #[test]
    fn almost_contained_examples() {
        let evens = NatStream::evens();
        let id = almost_contained(&evens, &evens, &nat(10));
        assert!(id.exceptions.is_empty());

        let mult4 = NatStream::multiples_of(4);
        let v = almost_contained(&evens, &mult4, &nat(10));
        assert_eq!(v.exceptions, nats(&[2, 6]));
        assert_eq!(v.certified_to, nat(10));
    }

    #[test]
    fn almost_contained_exceptions_monotone_in_horizon() {
        let evens = NatStream::evens();
        let mult4 = NatStream::multiples_of(4);
        let small = almost_contained(&evens, &mult4, &nat(10));
        let large = almost_contained(&evens, &mult4, &nat(30));
        for e in &small.exceptions {
            assert!(large.exceptions.contains(e));
        }
    }

    #[test]
    fn pseudointersection_dyadic_chain() {
        let p = pseudointersection("P", |n| NatStream::multiples_of(1u64 << n));
        assert_eq!(p.take(5), nats(&[0, 2, 4, 8, 16]));

        // P \ S_2 is within the first two picks
        let s2 = NatStream::multiples_of(4);
        let exceptions: Vec<_> = p
            .take(8)
            .into_iter()
            .filter(|v| !s2.contains(v))
            .collect();
        assert_eq!(exceptions, nats(&[2]));
    }

    #[test]
    fn pseudointersection_constant_chain_is_identity() {
        let s = dyadic(1);
        let chain_member = s.clone();
        let p = pseudointersection("P", move |_| chain_member.clone());
        assert_eq!(p.take(6), s.take(6));
    }

    #[test]
    fn pseudointersection_exception_bound() {
        let p = pseudointersection("P", |n| NatStream::multiples_of(1u64 << n));
        let horizon = nat(1000);
        let pp = p.below(&horizon);
        for n in 0..8u32 {
            let sn = NatStream::multiples_of(1u64 << n);
            let exceptions = pp
                .elements()
                .iter()
                .filter(|v| !sn.contains(v))
                .count();
            assert!(exceptions <= n as usize, "n={n} exceptions={exceptions}");
        }
    }

    #[test]
    fn pseudointersection_signals_chain_violation() {
        // "chain" whose members are not nested: S_0 = multiples of 3,
        // S_1 = evens. The first pick from S_1 (2) is not in S_0.
        let p = pseudointersection("bad", |n| {
            if n == 0 {
                NatStream::multiples_of(3)
            } else {
                NatStream::evens()
            }
        });
        let err = p.try_take(2).unwrap_err();
        assert!(matches!(err, Error::ChainViolation { level: 1, .. }));
    }

    #[test]
    fn literal_continues_past_last_element() {
        let s = NatStream::from_literal("lit", &[1, 3, 6]);
        assert_eq!(s.take(6), nats(&[1, 3, 6, 7, 8, 9]));
        assert!(s.contains(&nat(100)));
        assert!(!s.contains(&nat(4)));
    }

    #[test]
    fn thin_superincreasing_thins() {
        let t = thin_superincreasing(&NatStream::omega());
        // 1 > 0; 2 > 1; 4 > 3; 8 > 7; ...
        assert_eq!(t.take(5), nats(&[1, 2, 4, 8, 16]));
        let vals = t.take(10);
        let mut sum = BigUint::zero();
        for v in &vals {
            assert!(*v > sum);
            sum += v;
        }
    }

    #[test]
    fn stepped_rule_must_increase() {
        let s = NatStream::from_steps("broken", |prefix| {
            Ok(if prefix.len() < 2 {
                BigUint::from(5u32)
            } else {
                BigUint::from(prefix.len())
            })
        });
        assert!(matches!(
            s.try_take(2),
            Err(Error::NotIncreasing { position: 1, .. })
        ));
    }

    #[test]
    fn prefix_drop_below() {
        let p = Prefix::from_u64s(&[0, 5, 6], 10);
        let q = p.drop_below(&nat(1));
        assert_eq!(q.elements(), &nats(&[5, 6])[..]);
        assert_eq!(q.horizon(), &nat(10));
    }
}
