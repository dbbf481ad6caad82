//! Exact integer combinatorics, subset enumeration and exhaustive
//! nearest-neighbour ordering probabilities.

use std::fmt;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Reduced fraction with arbitrary-precision numerator and denominator.
pub type ExactRational = BigRational;

/// Largest number of distinct observations whose distance orderings
/// `kernel_product_probability` is willing to exhaust.
pub const ORDERING_BOUND: usize = 12;

/// Binomial coefficient C(n, k); zero when k > n.
pub fn binom(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

pub fn binom_u64(n: u64, k: u64) -> Option<u64> {
    binom(n, k).to_u64()
}

/// C(n, k) rounded to the nearest double.
pub fn binom_f64(n: u64, k: u64) -> f64 {
    binom(n, k).to_f64().unwrap_or(f64::INFINITY)
}

/// A strictly increasing tuple of 1-based positions into a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexTuple(Vec<usize>);

impl IndexTuple {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        let ok = indices.iter().all(|&i| (1..=n).contains(&i))
            && indices.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "index tuple {indices:?} is not strictly increasing within [1, {n}]"
            )));
        }
        Ok(IndexTuple(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The same positions, 0-based.
    pub fn zero_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i - 1).collect()
    }
}

impl fmt::Display for IndexTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (j, i) in self.0.iter().enumerate() {
            if j > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, ")")
    }
}

/// Lexicographic stream of all size-`s` subsets of `{1, ..., n}`.
#[derive(Debug, Clone)]
pub struct Subsets {
    n: usize,
    current: Vec<usize>,
    done: bool,
}

pub fn subsets(n: usize, s: usize) -> Result<Subsets> {
    if s > n {
        return Err(Error::InvalidOrder { n, s });
    }
    Ok(Subsets {
        n,
        current: first_combination(s),
        done: false,
    })
}

impl Subsets {
    pub fn restart(&mut self) {
        self.current = first_combination(self.current.len());
        self.done = false;
    }
}

impl Iterator for Subsets {
    type Item = IndexTuple;

    fn next(&mut self) -> Option<IndexTuple> {
        if self.done {
            return None;
        }
        let out = IndexTuple(self.current.iter().map(|i| i + 1).collect());
        self.done = !next_combination(&mut self.current, self.n);
        Some(out)
    }
}

/// `[0, 1, ..., s-1]`, the lexicographically first 0-based combination.
pub fn first_combination(s: usize) -> Vec<usize> {
    (0..s).collect()
}

/// Advances a 0-based increasing combination of `{0..n}` in place.
/// Returns false (leaving `c` unspecified) once the last one has been passed.
pub fn next_combination(c: &mut [usize], n: usize) -> bool {
    let s = c.len();
    let mut i = s;
    while i > 0 {
        i -= 1;
        if c[i] < n - s + i {
            c[i] += 1;
            for j in i + 1..s {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// The combination of lexicographic rank `rank` among all size-`s` subsets of
/// `{0..n}`. Requires C(n, s) to fit in u64.
pub fn unrank_combination(n: usize, s: usize, mut rank: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(s);
    let mut lo = 0usize;
    for slot in 0..s {
        let left = s - slot - 1;
        let mut v = lo;
        loop {
            // number of combinations with this slot fixed at v
            let block = binom_u64((n - v - 1) as u64, left as u64).expect("rank space fits in u64");
            if rank < block {
                break;
            }
            rank -= block;
            v += 1;
        }
        out.push(v);
        lo = v + 1;
    }
    out
}

/// Exact check of C(m+n, r) = sum_k C(m, k) C(n, r-k).
pub fn chu_vandermonde_check(m: u64, n: u64, r: u64) -> bool {
    let lhs = binom(m + n, r);
    let rhs = (0..=r).fold(BigUint::zero(), |acc, k| {
        acc + binom(m, k) * binom(n, r - k)
    });
    lhs == rhs
}

/// Which pair of nearest-neighbour indicators is multiplied.
///
/// Two size-`s` samples share their first `c` observations. `SharedShared`
/// takes the same shared observation in both, `SharedNew` a shared one in the
/// first sample and a non-shared one in the second, `NewNew` a non-shared
/// observation in each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelPairing {
    SharedShared,
    SharedNew,
    NewNew,
}

impl KernelPairing {
    pub const ALL: [KernelPairing; 3] = [Self::SharedShared, Self::SharedNew, Self::NewNew];
}

#[derive(Clone, Copy)]
struct Class {
    count: usize,
    in_first: bool,
    in_second: bool,
    first_target: bool,
    second_target: bool,
}

fn pairing_classes(s: usize, c: usize, pairing: KernelPairing) -> Vec<Class> {
    let cls = |count, in_first, in_second, first_target, second_target| Class {
        count,
        in_first,
        in_second,
        first_target,
        second_target,
    };
    match pairing {
        KernelPairing::SharedShared => vec![
            cls(1, true, true, true, true),
            cls(c - 1, true, true, false, false),
            cls(s - c, true, false, false, false),
            cls(s - c, false, true, false, false),
        ],
        KernelPairing::SharedNew => vec![
            cls(1, true, true, true, false),
            cls(c - 1, true, true, false, false),
            cls(s - c, true, false, false, false),
            cls(1, false, true, false, true),
            cls(s - c - 1, false, true, false, false),
        ],
        KernelPairing::NewNew => vec![
            cls(c, true, true, false, false),
            cls(1, true, false, true, false),
            cls(s - c - 1, true, false, false, false),
            cls(1, false, true, false, true),
            cls(s - c - 1, false, true, false, false),
        ],
    }
}

fn multinomial(counts: &[usize]) -> BigUint {
    let mut total = 0u64;
    let mut acc = BigUint::one();
    for &k in counts {
        total += k as u64;
        acc *= binom(total, k as u64);
    }
    acc
}

/// Walks distance orderings from the nearest position outwards. Observations
/// inside a class are exchangeable, so orderings are counted by class label
/// sequence; once both nearest neighbours are fixed the remaining positions
/// are counted in one multinomial step.
fn count_orderings(classes: &[Class], counts: &mut [usize], first: bool, second: bool) -> BigUint {
    if first && second {
        return multinomial(counts);
    }
    let mut total = BigUint::zero();
    for k in 0..classes.len() {
        if counts[k] == 0 {
            continue;
        }
        let cl = classes[k];
        let mut f = first;
        let mut g = second;
        if cl.in_first && !f {
            if !cl.first_target {
                continue;
            }
            f = true;
        }
        if cl.in_second && !g {
            if !cl.second_target {
                continue;
            }
            g = true;
        }
        counts[k] -= 1;
        total += count_orderings(classes, counts, f, g);
        counts[k] += 1;
    }
    total
}

/// Exact probability that both nearest-neighbour indicators of the chosen
/// pairing equal one, over the equally likely distance orderings of the
/// `2s - c` distinct observations.
pub fn kernel_product_probability(
    s: usize,
    c: usize,
    pairing: KernelPairing,
) -> Result<ExactRational> {
    if c == 0 || c > s {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= c <= s, got s = {s}, c = {c}"
        )));
    }
    if pairing != KernelPairing::SharedShared && c == s {
        return Err(Error::InvalidArgument(format!(
            "{pairing:?} needs a non-shared observation (c < s), got c = s = {s}"
        )));
    }
    let m = 2 * s - c;
    if m > ORDERING_BOUND {
        return Err(Error::EnumerationTooLarge {
            what: format!("{m}! orderings"),
            bound: ORDERING_BOUND as u64,
        });
    }
    let classes = pairing_classes(s, c, pairing);
    let mut counts: Vec<usize> = classes.iter().map(|cl| cl.count).collect();
    let all = multinomial(&counts);
    let hit = count_orderings(&classes, &mut counts, false, false);
    Ok(BigRational::new(hit.into(), all.into()))
}

fn ratio(num: BigUint, den: BigUint) -> ExactRational {
    BigRational::new(num.into(), den.into())
}

/// 1 / (2s - c).
pub fn shared_shared_closed_form(s: usize, c: usize) -> ExactRational {
    ratio(BigUint::one(), BigUint::from(2 * s - c))
}

/// (1 / ((2s-c)(2s-c-1))) * sum_{i=0}^{s-c-1} C(s-c-1, i) / C(2s-c-2, i).
pub fn shared_new_closed_form(s: usize, c: usize) -> ExactRational {
    let (s, c) = (s as u64, c as u64);
    let m = 2 * s - c;
    let sum = (0..s - c).fold(BigRational::zero(), |acc, i| {
        acc + ratio(binom(s - c - 1, i), binom(m - 2, i))
    });
    sum * ratio(BigUint::one(), BigUint::from(m * (m - 1)))
}

fn new_new_sum(s: u64, c: u64, top: u64) -> ExactRational {
    let m = 2 * s - c;
    let sum = (0..s - c).fold(BigRational::zero(), |acc, i| {
        acc + ratio(binom(s - c - 1, i), binom(top, s - 1 + i))
    });
    sum * ratio(BigUint::from(2u8), BigUint::from(m * (m - 1)))
}

/// (2 / ((2s-c)(2s-c-1))) * sum_{i=0}^{s-c-1} C(s-c-1, i) / C(2s-c-2, s-1+i),
/// the form obtained by the counting argument.
pub fn new_new_closed_form(s: usize, c: usize) -> ExactRational {
    let (s, c) = (s as u64, c as u64);
    new_new_sum(s, c, 2 * s - c - 2)
}

/// Variant with C(2s-c-1, s-1+i) in the denominator. It disagrees with the
/// exhaustive count (e.g. 1/6 instead of 1/3 at s = 2, c = 1) and is kept
/// only so the disagreement stays checked.
pub fn new_new_alternative_form(s: usize, c: usize) -> ExactRational {
    let (s, c) = (s as u64, c as u64);
    new_new_sum(s, c, 2 * s - c - 1)
}

/// Probability that observation 1 is the nearest of `s` exchangeable
/// observations, by brute-force enumeration of all `s!` permutations.
pub fn nearest_indicator_probability(s: usize) -> Result<ExactRational> {
    if s == 0 {
        return Err(Error::InvalidOrder { n: 0, s });
    }
    if s > 10 {
        return Err(Error::EnumerationTooLarge {
            what: format!("{s}! permutations"),
            bound: 10,
        });
    }
    let mut perm: Vec<usize> = (0..s).collect();
    let mut hits = 0u64;
    let mut total = 0u64;
    for_each_permutation(&mut perm, &mut |p| {
        total += 1;
        if p[0] == 0 {
            hits += 1;
        }
    });
    Ok(BigRational::new(hits.into(), total.into()))
}

/// Heap's algorithm, visiting every permutation of `items` once.
pub fn for_each_permutation<F: FnMut(&[usize])>(items: &mut [usize], visit: &mut F) {
    let n = items.len();
    let mut c = vec![0usize; n];
    visit(items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            visit(items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}
