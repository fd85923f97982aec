//! Odometers ℤ_(q_n): characteristic sequences, valuation profiles and the
//! adding machine.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bratteli::{self, OrderedBratteliDiagram, PathPrefix};
use crate::words::SystemHandle;

pub const DEFAULT_MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OdometerError {
    #[error("characteristic sequence is not in eventually periodic form")]
    NotEventuallyPeriodic,
    #[error("term {0} is smaller than 2")]
    TermTooSmall(u64),
    #[error("cycle is empty")]
    EmptyCycle,
    #[error("valuation profile has no prime with positive valuation")]
    TrivialProfile,
    #[error("point is not coherent: {0}")]
    IncoherentPoint(String),
    #[error("depth {0} exceeds the configured maximum {1}")]
    DepthTooLarge(usize, usize),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("diagram surgery failed: {0}")]
    Diagram(String),
}

/// Limit of the p-valuation of p_n: finite or ∞.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Valuation {
    Finite(u32),
    Infinite,
}

impl Valuation {
    pub fn is_zero(self) -> bool {
        self == Valuation::Finite(0)
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(k) => write!(f, "{k}"),
            Valuation::Infinite => write!(f, "∞"),
        }
    }
}

/// Descriptor of an odometer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CharacteristicSequence {
    /// q = prefix, then cycle repeated forever.
    EventuallyPeriodic { prefix: Vec<u64>, cycle: Vec<u64> },
    /// Valuation limits per listed prime; every unlisted prime has valuation `others`.
    ValuationProfile { valuations: BTreeMap<u64, Valuation>, others: Valuation },
}

impl CharacteristicSequence {
    pub fn eventually_periodic(prefix: Vec<u64>, cycle: Vec<u64>) -> Result<Self, OdometerError> {
        if cycle.is_empty() {
            return Err(OdometerError::EmptyCycle);
        }
        if let Some(&q) = prefix.iter().chain(&cycle).find(|&&q| q < 2) {
            return Err(OdometerError::TermTooSmall(q));
        }
        Ok(CharacteristicSequence::EventuallyPeriodic { prefix, cycle })
    }

    pub fn cycle(cycle: &[u64]) -> Self {
        Self::eventually_periodic(Vec::new(), cycle.to_vec()).expect("valid cycle")
    }

    pub fn with_prefix(prefix: &[u64], cycle: &[u64]) -> Self {
        Self::eventually_periodic(prefix.to_vec(), cycle.to_vec()).expect("valid sequence")
    }

    pub fn profile(valuations: BTreeMap<u64, Valuation>, others: Valuation) -> Result<Self, OdometerError> {
        let valuations: BTreeMap<u64, Valuation> = valuations.into_iter().filter(|(_, v)| !v.is_zero()).collect();
        if valuations.is_empty() && others.is_zero() {
            return Err(OdometerError::TrivialProfile);
        }
        Ok(CharacteristicSequence::ValuationProfile { valuations, others })
    }

    /// The ℤ/p₁⋯p_nℤ odometer over all primes: every prime with valuation 1.
    pub fn all_primes() -> Self {
        CharacteristicSequence::ValuationProfile { valuations: BTreeMap::new(), others: Valuation::Finite(1) }
    }

    /// q_n for n ≥ 1.
    pub fn term(&self, n: usize) -> Result<u64, OdometerError> {
        match self {
            CharacteristicSequence::EventuallyPeriodic { prefix, cycle } => {
                let i = n - 1;
                Ok(if i < prefix.len() { prefix[i] } else { cycle[(i - prefix.len()) % cycle.len()] })
            }
            _ => Err(OdometerError::NotEventuallyPeriodic),
        }
    }

    pub fn terms(&self, depth: usize) -> Result<Vec<u64>, OdometerError> {
        (1..=depth).map(|n| self.term(n)).collect()
    }

    /// Minimal period and shortest prefix describing the same sequence.
    pub fn normalized(&self) -> Self {
        let CharacteristicSequence::EventuallyPeriodic { prefix, cycle } = self else { return self.clone() };
        let mut cycle = cycle.clone();
        let n = cycle.len();
        if let Some(d) = (1..=n).find(|d| n % d == 0 && (0..n).all(|i| cycle[i] == cycle[i % d])) {
            cycle.truncate(d);
        }
        let mut prefix = prefix.clone();
        while let Some(&last) = prefix.last() {
            if last != *cycle.last().expect("non-empty") {
                break;
            }
            prefix.pop();
            cycle.rotate_right(1);
        }
        CharacteristicSequence::EventuallyPeriodic { prefix, cycle }
    }
}

/// Prime factors with multiplicity, ascending.
pub fn factorize(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn is_prime(n: u64) -> bool {
    n >= 2 && factorize(n).len() == 1
}

/// Listed valuations plus the value at every unlisted prime.
fn profile_of(q: &CharacteristicSequence) -> (BTreeMap<u64, Valuation>, Valuation) {
    match q {
        CharacteristicSequence::EventuallyPeriodic { prefix, cycle } => {
            let mut map: BTreeMap<u64, Valuation> = BTreeMap::new();
            for &t in cycle {
                for p in factorize(t) {
                    map.insert(p, Valuation::Infinite);
                }
            }
            for &t in prefix {
                for p in factorize(t) {
                    let e = map.entry(p).or_insert(Valuation::Finite(0));
                    if let Valuation::Finite(k) = e {
                        *k += 1;
                    }
                }
            }
            (map, Valuation::Finite(0))
        }
        CharacteristicSequence::ValuationProfile { valuations, others } => (valuations.clone(), *others),
    }
}

/// lim_n max{k : pᵏ | p_n} for every prime dividing some p_n.
pub fn valuation_profile(q: &CharacteristicSequence) -> Result<BTreeMap<u64, Valuation>, OdometerError> {
    match q {
        CharacteristicSequence::EventuallyPeriodic { .. } => Ok(profile_of(q).0),
        _ => Err(OdometerError::NotEventuallyPeriodic),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SelfInduction {
    Yes { witness_prime: u64 },
    No,
}

/// Self-induced iff some prime has infinite valuation limit.
pub fn is_self_induced(q: &CharacteristicSequence) -> SelfInduction {
    let (map, others) = profile_of(q);
    let listed = map.iter().find(|(_, v)| **v == Valuation::Infinite).map(|(&p, _)| p);
    let unlisted = (others == Valuation::Infinite).then(|| (2..).find(|&p| is_prime(p) && !map.contains_key(&p)).expect("primes are infinite"));
    match (listed, unlisted) {
        (Some(a), Some(b)) => SelfInduction::Yes { witness_prime: a.min(b) },
        (Some(p), None) | (None, Some(p)) => SelfInduction::Yes { witness_prime: p },
        (None, None) => SelfInduction::No,
    }
}

fn compare_profiles(qprime: &CharacteristicSequence, q: &CharacteristicSequence, strict_eq: bool) -> bool {
    let (a, ao) = profile_of(qprime);
    let (b, bo) = profile_of(q);
    let at = |m: &BTreeMap<u64, Valuation>, o: Valuation, p: u64| m.get(&p).copied().unwrap_or(o);
    let primes: Vec<u64> = a.keys().chain(b.keys()).copied().collect();
    let ok = |x: Valuation, y: Valuation| if strict_eq { x == y } else { x <= y };
    primes.iter().all(|&p| ok(at(&a, ao, p), at(&b, bo, p))) && ok(ao, bo)
}

/// (ℤ_(q'), R) is a factor of (ℤ_(q), R): pointwise ≤ of valuation profiles.
pub fn is_factor(qprime: &CharacteristicSequence, q: &CharacteristicSequence) -> bool {
    compare_profiles(qprime, q, false)
}

/// Conjugacy: equal valuation profiles.
pub fn is_conjugate(qprime: &CharacteristicSequence, q: &CharacteristicSequence) -> bool {
    compare_profiles(qprime, q, true)
}

/// Each q_n replaced by its ascending prime factorization.
pub fn canonical_prime_form(q: &CharacteristicSequence) -> Result<CharacteristicSequence, OdometerError> {
    match q {
        CharacteristicSequence::EventuallyPeriodic { prefix, cycle } => {
            let expand = |v: &[u64]| v.iter().flat_map(|&t| factorize(t)).collect::<Vec<_>>();
            Ok(CharacteristicSequence::EventuallyPeriodic { prefix: expand(prefix), cycle: expand(cycle) })
        }
        _ => Err(OdometerError::NotEventuallyPeriodic),
    }
}

/// Point of ℤ_(q_n) truncated at depth n, stored as mixed-radix digits dᵢ ∈ [0, qᵢ).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OdometerPoint {
    radices: Vec<u64>,
    digits: Vec<u64>,
}

impl OdometerPoint {
    pub fn zero(q: &CharacteristicSequence, depth: usize) -> Result<Self, OdometerError> {
        if depth > DEFAULT_MAX_DEPTH {
            return Err(OdometerError::DepthTooLarge(depth, DEFAULT_MAX_DEPTH));
        }
        Ok(OdometerPoint { radices: q.terms(depth)?, digits: vec![0; depth] })
    }

    /// From coordinates xᵢ ∈ ℤ/pᵢℤ with xᵢ ≡ xᵢ₊₁ mod pᵢ.
    pub fn from_residues(residues: &[BigUint], q: &CharacteristicSequence) -> Result<Self, OdometerError> {
        let depth = residues.len();
        if depth > DEFAULT_MAX_DEPTH {
            return Err(OdometerError::DepthTooLarge(depth, DEFAULT_MAX_DEPTH));
        }
        let radices = q.terms(depth)?;
        let mut digits = Vec::with_capacity(depth);
        let mut p = BigUint::one();
        let mut prev = BigUint::zero();
        for (i, x) in residues.iter().enumerate() {
            let next_p = &p * radices[i];
            if x >= &next_p {
                return Err(OdometerError::IncoherentPoint(format!("x_{} = {x} is not reduced mod {next_p}", i + 1)));
            }
            if x % &p != prev {
                return Err(OdometerError::IncoherentPoint(format!("x_{} ≢ x_{} mod {p}", i + 1, i)));
            }
            let d: BigUint = (x - &prev) / &p;
            digits.push(d.try_into().expect("digit below a u64 radix"));
            prev = x.clone();
            p = next_p;
        }
        Ok(OdometerPoint { radices, digits })
    }

    pub fn from_u64_residues(residues: &[u64], q: &CharacteristicSequence) -> Result<Self, OdometerError> {
        let r: Vec<BigUint> = residues.iter().map(|&x| BigUint::from(x)).collect();
        Self::from_residues(&r, q)
    }

    /// Integer in [0, p_n) whose residues are the coordinates.
    pub fn value(&self) -> BigUint {
        let mut v = BigUint::zero();
        let mut p = BigUint::one();
        for (d, q) in self.digits.iter().zip(&self.radices) {
            v += &p * *d;
            p *= *q;
        }
        v
    }

    pub fn from_value(value: &BigUint, q: &CharacteristicSequence, depth: usize) -> Result<Self, OdometerError> {
        let mut pt = Self::zero(q, depth)?;
        let mut v = value.clone();
        for (d, r) in pt.digits.iter_mut().zip(&pt.radices) {
            let (quo, rem) = v.div_rem(&BigUint::from(*r));
            *d = rem.try_into().expect("digit below radix");
            v = quo;
        }
        Ok(pt)
    }

    pub fn residues(&self) -> Vec<BigUint> {
        let mut out = Vec::with_capacity(self.digits.len());
        let mut x = BigUint::zero();
        let mut p = BigUint::one();
        for (d, q) in self.digits.iter().zip(&self.radices) {
            x += &p * *d;
            p *= *q;
            out.push(x.clone());
        }
        out
    }

    pub fn depth(&self) -> usize {
        self.digits.len()
    }

    pub fn digits(&self) -> &[u64] {
        &self.digits
    }

    pub fn radices(&self) -> &[u64] {
        &self.radices
    }

    /// p_n at the point's depth.
    pub fn modulus(&self) -> BigUint {
        self.radices.iter().fold(BigUint::one(), |acc, &q| acc * q)
    }

    /// x ↦ x+1 in place.
    pub fn increment(&mut self) {
        for (d, &q) in self.digits.iter_mut().zip(&self.radices) {
            *d += 1;
            if *d < q {
                return;
            }
            *d = 0;
        }
    }
}

/// x ↦ x + 1 with carry.
pub fn add_one(x: &OdometerPoint, q: &CharacteristicSequence) -> Result<OdometerPoint, OdometerError> {
    let expected = q.terms(x.depth())?;
    if expected != x.radices {
        return Err(OdometerError::IncoherentPoint("point was built for a different sequence".into()));
    }
    let mut y = x.clone();
    y.increment();
    Ok(y)
}

/// One-vertex diagram of q with its stationary tail.
pub fn odometer_diagram(q: &CharacteristicSequence) -> Result<OrderedBratteliDiagram, OdometerError> {
    let CharacteristicSequence::EventuallyPeriodic { prefix, cycle } = q else {
        return Err(OdometerError::NotEventuallyPeriodic);
    };
    let counts: Vec<u64> = prefix.iter().chain(cycle).copied().collect();
    Ok(bratteli::one_vertex_diagram(&counts, cycle.len()))
}

/// Characteristic sequence of a one-vertex eventually periodic diagram; levels
/// with a single edge are merged into their successor.
pub fn sequence_of_diagram(d: &OrderedBratteliDiagram) -> Result<CharacteristicSequence, OdometerError> {
    let (counts, period) = d.one_vertex_counts().ok_or_else(|| OdometerError::Diagram("not a one-vertex diagram".into()))?;
    let split = counts.len() - period;
    let prefix: Vec<u64> = counts[..split].iter().copied().filter(|&c| c > 1).collect();
    let cycle: Vec<u64> = counts[split..].iter().copied().filter(|&c| c > 1).collect();
    CharacteristicSequence::eventually_periodic(prefix, cycle).map(|s| s.normalized())
}

/// Induce on one level-1 edge of the one-vertex diagram and read off (q_{n+1}).
pub fn induce_via_diagram(q: &CharacteristicSequence) -> Result<CharacteristicSequence, OdometerError> {
    let d = odometer_diagram(q)?;
    let p = PathPrefix::new(vec![0]);
    let induced = bratteli::induce_on_paths(&d, &[p]).map_err(|e| OdometerError::Diagram(e.to_string()))?;
    sequence_of_diagram(&induced)
}

/// ℤ_p with x ↦ x+1, U = pℤ_p and φ(x) = px, truncated at `depth` digits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PAdicHandle {
    q: CharacteristicSequence,
    prime: u64,
    depth: usize,
}

impl PAdicHandle {
    pub fn new(prime: u64, depth: usize) -> Result<Self, OdometerError> {
        if prime < 2 || factorize(prime).len() != 1 {
            return Err(OdometerError::NotPrime(prime));
        }
        if depth > DEFAULT_MAX_DEPTH {
            return Err(OdometerError::DepthTooLarge(depth, DEFAULT_MAX_DEPTH));
        }
        let q = CharacteristicSequence::eventually_periodic(vec![], vec![prime])?;
        Ok(PAdicHandle { q, prime, depth })
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn point(&self, value: &BigUint) -> OdometerPoint {
        OdometerPoint::from_value(value, &self.q, self.depth).expect("depth checked")
    }

    fn digit_label(&self, digits: &[u64]) -> String {
        let s: Vec<String> = digits.iter().map(u64::to_string).collect();
        if self.prime <= 10 { s.concat() } else { s.join(",") }
    }
}

impl SystemHandle for PAdicHandle {
    type Point = OdometerPoint;

    fn depth(&self) -> usize {
        self.depth
    }

    fn symbol(&self, p: &OdometerPoint, i: i64) -> String {
        usize::try_from(i).ok().and_then(|i| p.digits().get(i)).map_or_else(String::new, u64::to_string)
    }

    fn forward(&self, p: &OdometerPoint) -> OdometerPoint {
        let mut y = p.clone();
        y.increment();
        y
    }

    fn backward(&self, p: &OdometerPoint) -> OdometerPoint {
        let mut y = p.clone();
        for d in y.digits.iter_mut() {
            if *d > 0 {
                *d -= 1;
                return y;
            }
            *d = self.prime - 1;
        }
        y
    }

    fn in_clopen(&self, p: &OdometerPoint) -> bool {
        p.digits().first().is_none_or(|&d| d == 0)
    }

    fn phi(&self, p: &OdometerPoint) -> Option<OdometerPoint> {
        let mut y = p.clone();
        y.digits.pop();
        y.digits.insert(0, 0);
        Some(y)
    }

    fn in_phi_image(&self, p: &OdometerPoint, k: usize) -> Option<bool> {
        (k <= self.depth).then(|| p.digits()[..k].iter().all(|&d| d == 0))
    }

    fn cell(&self, p: &OdometerPoint, resolution: usize) -> String {
        self.digit_label(&p.digits()[..resolution.min(self.depth)])
    }

    fn cells(&self, resolution: usize) -> Vec<(String, OdometerPoint)> {
        let m = resolution.min(self.depth);
        let count = (self.prime as usize).pow(m as u32);
        (0..count)
            .map(|v| {
                let p = self.point(&BigUint::from(v));
                (self.cell(&p, m), p)
            })
            .collect()
    }

    fn samples(&self, count: usize) -> Vec<OdometerPoint> {
        let step = BigUint::from(0x9E37_79B9_7F4A_7C15u64);
        (0..count).map(|j| self.point(&(&step * (2 * j + 1) + j * j))).collect()
    }
}
