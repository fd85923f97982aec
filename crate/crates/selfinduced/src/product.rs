//! The product of the period-doubling subshift with the 3-adic odometer,
//! T(x, z) = (Sx, z + 1), which is self-induced through φ(x, z) = (σx, 2z).

use std::fmt;

use num_bigint::BigUint;
use serde::Serialize;
use thiserror::Error;

use crate::odometer::{CharacteristicSequence, OdometerPoint, DEFAULT_MAX_DEPTH};
use crate::substitution::{language, SubshiftPoint, Substitution, SubstitutionError, SubstitutionSystem};
use crate::words::{Language, SystemHandle, Word};

/// Iterates used by the witness checks.
pub const WITNESS_ITERATES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProductError {
    #[error("word window has no coordinate left to shift into")]
    WindowExhausted,
    #[error("word window {0} is not in the language")]
    NotInLanguage(String),
    #[error("no witness within horizon {0}")]
    NotFound(usize),
    #[error("distance must be positive")]
    NonPositive,
    #[error(transparent)]
    Substitution(#[from] SubstitutionError),
}

fn ternary() -> CharacteristicSequence {
    CharacteristicSequence::eventually_periodic(vec![], vec![3]).expect("valid")
}

/// z ∈ ℤ₃ truncated at `depth` digits.
pub fn z3(value: u64, depth: usize) -> OdometerPoint {
    OdometerPoint::from_value(&BigUint::from(value), &ternary(), depth.min(DEFAULT_MAX_DEPTH)).expect("depth bounded")
}

/// 2z in truncated ℤ₃ by digitwise doubling with carry.
pub fn double(z: &OdometerPoint) -> OdometerPoint {
    let mut digits = Vec::with_capacity(z.depth());
    let mut carry = 0;
    for &d in z.digits() {
        let t = 2 * d + carry;
        digits.push(t % 3);
        carry = t / 3;
    }
    let value = digits.iter().rev().fold(BigUint::from(0u8), |acc, &d| acc * 3u8 + d);
    OdometerPoint::from_value(&value, &ternary(), z.depth()).expect("same depth")
}

/// d₃(z, z′) = 3^{−(n+1)} for the first differing digit n; 0 when the truncations agree.
pub fn odometer_distance(z: &OdometerPoint, w: &OdometerPoint) -> f64 {
    z.digits().iter().zip(w.digits()).position(|(a, b)| a != b).map_or(0.0, |n| 3f64.powi(-(n as i32 + 1)))
}

/// (x, z) with x known on a window around the origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProductPoint {
    pub past: Word,
    pub future: Word,
    #[serde(serialize_with = "serialize_digits")]
    pub z: OdometerPoint,
}

fn serialize_digits<S: serde::Serializer>(z: &OdometerPoint, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(z.digits())
}

impl ProductPoint {
    /// Checks the window against the period-doubling language.
    pub fn new(past: Word, future: Word, z: OdometerPoint) -> Result<Self, ProductError> {
        let s = Substitution::period_doubling();
        let w: Word = [past.as_slice(), &future].concat();
        let lang = language(&s, w.len().max(1))?;
        if !w.is_empty() && !lang.contains(&w) {
            return Err(ProductError::NotInLanguage(s.render(&w)));
        }
        Ok(ProductPoint { past, future, z })
    }

    /// Coordinate i of the word part, if inside the window.
    pub fn letter(&self, i: i64) -> Option<usize> {
        if i >= 0 {
            self.future.get(i as usize).copied()
        } else {
            self.past.len().checked_sub((-i) as usize).map(|j| self.past[j])
        }
    }
}

impl fmt::Display for ProductPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = Substitution::period_doubling();
        let digits: Vec<String> = self.z.digits().iter().map(u64::to_string).collect();
        write!(f, "({}.{}, {})", s.render(&self.past), s.render(&self.future), digits.concat())
    }
}

/// T(x, z) = (Sx, z + 1).
pub fn product_step(p: &ProductPoint) -> Result<ProductPoint, ProductError> {
    if p.future.len() < 2 {
        return Err(ProductError::WindowExhausted);
    }
    let mut q = p.clone();
    q.past.push(q.future.remove(0));
    q.z.increment();
    Ok(q)
}

/// d_X(x, x′) = 2^{−min |i|} over differing coordinates inside both windows.
pub fn word_distance(p: &ProductPoint, q: &ProductPoint) -> f64 {
    let lo = -(p.past.len().min(q.past.len()) as i64);
    let hi = p.future.len().min(q.future.len()) as i64;
    (lo..hi)
        .filter(|&i| p.letter(i) != q.letter(i))
        .map(|i| i.unsigned_abs())
        .min()
        .map_or(0.0, |n| 0.5f64.powi(n as i32))
}

/// max(d_X, d₃).
pub fn product_distance(p: &ProductPoint, q: &ProductPoint) -> f64 {
    word_distance(p, q).max(odometer_distance(&p.z, &q.z))
}

/// Handle for (X_σ × ℤ₃, T) with U = σ(X_σ) × ℤ₃ and φ(x, z) = (σx, 2z).
pub struct ProductSystem {
    word: SubstitutionSystem,
    depth: usize,
}

impl ProductSystem {
    pub fn new(depth: usize, max_power: usize) -> Result<Self, ProductError> {
        let word = SubstitutionSystem::new(&Substitution::period_doubling(), max_power)?;
        Ok(ProductSystem { word, depth: depth.min(DEFAULT_MAX_DEPTH) })
    }

    pub fn word_system(&self) -> &SubstitutionSystem {
        &self.word
    }

    /// Window [−radius, radius) of the word part together with z.
    pub fn window(&self, p: &(SubshiftPoint, OdometerPoint), radius: usize) -> ProductPoint {
        let r = radius as i64;
        let w = self.word.window(&p.0, -r, r);
        ProductPoint { past: w[..radius].to_vec(), future: w[radius..].to_vec(), z: p.1.clone() }
    }
}

impl SystemHandle for ProductSystem {
    type Point = (SubshiftPoint, OdometerPoint);

    fn depth(&self) -> usize {
        self.depth
    }

    fn symbol(&self, p: &Self::Point, i: i64) -> String {
        self.word.symbol(&p.0, i)
    }

    fn forward(&self, p: &Self::Point) -> Self::Point {
        let mut z = p.1.clone();
        z.increment();
        (self.word.forward(&p.0), z)
    }

    fn backward(&self, p: &Self::Point) -> Self::Point {
        let m = p.1.modulus();
        let target = (p.1.value() + &m - 1u8) % m;
        let z = OdometerPoint::from_value(&target, &ternary(), self.depth).expect("depth bounded");
        (self.word.backward(&p.0), z)
    }

    fn in_clopen(&self, p: &Self::Point) -> bool {
        self.word.in_clopen(&p.0)
    }

    fn phi(&self, p: &Self::Point) -> Option<Self::Point> {
        Some((self.word.phi(&p.0)?, double(&p.1)))
    }

    fn in_phi_image(&self, p: &Self::Point, k: usize) -> Option<bool> {
        self.word.in_phi_image(&p.0, k)
    }

    fn cell(&self, p: &Self::Point, resolution: usize) -> String {
        let digits: Vec<String> = p.1.digits()[..resolution.min(self.depth)].iter().map(u64::to_string).collect();
        format!("{}|{}", self.word.cell(&p.0, resolution), digits.concat())
    }

    fn cells(&self, resolution: usize) -> Vec<(String, Self::Point)> {
        let m = resolution.min(self.depth);
        let mut out = Vec::new();
        for (_, x) in self.word.cells(resolution) {
            for v in 0..3u64.pow(m as u32) {
                let p = (x.clone(), z3(v, self.depth));
                out.push((self.cell(&p, resolution), p));
            }
        }
        out
    }

    fn samples(&self, count: usize) -> Vec<Self::Point> {
        let modulus = 3u64.pow(self.depth.min(39) as u32);
        self.word
            .samples(count)
            .into_iter()
            .enumerate()
            .map(|(j, x)| (x, z3((j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) % modulus, self.depth)))
            .collect()
    }
}

/// Outcome of the exact self-induction identities on sampled points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProductReport {
    pub depth: usize,
    pub samples: usize,
    pub commutation_failures: usize,
    pub odometer_failures: usize,
    pub return_time_failures: usize,
    pub witnesses: Vec<String>,
}

impl ProductReport {
    pub fn passed(&self) -> bool {
        self.commutation_failures == 0 && self.odometer_failures == 0 && self.return_time_failures == 0
    }
}

/// Checks σ∘S = S²∘σ on windows, 2(z+1) = 2z+2 and r_U∘φ ≡ 2 on samples.
pub fn verify_product_selfinduced(depth: usize, samples: usize) -> Result<ProductReport, ProductError> {
    let mut report = ProductReport { depth, samples, commutation_failures: 0, odometer_failures: 0, return_time_failures: 0, witnesses: Vec::new() };
    if depth == 0 {
        return Ok(report);
    }
    let h = ProductSystem::new(depth, 1)?;
    let d = depth as i64;
    for p in h.samples(samples) {
        let x = &p.0;
        let lhs = h.word.window(&h.word.phi(&h.word.forward(x)).expect("φ"), -d, d);
        let sx = h.word.phi(x).expect("φ");
        let rhs = h.word.window(&h.word.forward(&h.word.forward(&sx)), -d, d);
        if lhs != rhs {
            report.commutation_failures += 1;
            report.witnesses.push(format!("σ∘S ≠ S²∘σ at shift {}", x.shift));
        }
        let mut z1 = p.1.clone();
        z1.increment();
        let mut z2 = double(&p.1);
        z2.increment();
        z2.increment();
        if double(&z1) != z2 {
            report.odometer_failures += 1;
            report.witnesses.push(format!("2(z+1) ≠ 2z+2 at z = {}", p.1.value()));
        }
        let y = h.phi(&p).expect("φ");
        if h.return_time(&y, 8) != Some(2) {
            report.return_time_failures += 1;
            report.witnesses.push(format!("return time of φ(x, z) is not 2 at shift {}", x.shift));
        }
    }
    Ok(report)
}

/// Pair with equal word part and close odometer parts whose orbits stay at that distance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonexpansiveWitness {
    pub first: ProductPoint,
    pub second: ProductPoint,
    /// d₃(z, z′), also the supremum of the orbit distances.
    pub bound: f64,
    pub iterates: usize,
}

/// z′ = z + 3^k with 3^{−(k+1)} < ε; the truncation depth grows with k.
pub fn nonexpansive_witness(epsilon: f64) -> Result<NonexpansiveWitness, ProductError> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(ProductError::NonPositive);
    }
    let k = (0..).find(|&k| 3f64.powi(-(k + 1)) < epsilon).expect("ε > 0") as usize;
    let depth = (k + 2).clamp(8, DEFAULT_MAX_DEPTH);
    let h = ProductSystem::new(depth, 1)?;
    let x = h.word.base_point(0);
    let z = z3(0, depth);
    let zp = z3(3u64.pow(k as u32), depth);
    let first = h.window(&(x, z.clone()), depth);
    let second = ProductPoint { z: zp.clone(), ..first.clone() };
    let bound = odometer_distance(&z, &zp);
    let (mut a, mut b) = (z, zp);
    for _ in 0..WITNESS_ITERATES {
        a.increment();
        b.increment();
        assert_eq!(odometer_distance(&a, &b), bound, "translation is an isometry");
    }
    Ok(NonexpansiveWitness { first, second, bound, iterates: WITNESS_ITERATES })
}

/// Pair at distance < δ whose word parts separate under T.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonequicontinuousWitness {
    pub first: ProductPoint,
    pub second: ProductPoint,
    pub initial_distance: f64,
    /// First n with d(Tⁿp, Tⁿp′) ≥ 1, the expansivity gap of the word factor.
    pub separation_time: usize,
}

fn right_special(lang: &Language, n: usize) -> Option<(Word, usize, usize)> {
    let words = lang.words(n + 1).ok()?;
    let mut iter = words.iter();
    let mut prev = iter.next()?;
    for w in iter {
        if w[..n] == prev[..n] {
            return Some((w[..n].to_vec(), prev[n], w[n]));
        }
        prev = w;
    }
    None
}

/// Windows agreeing on [−r, r] with 2^{−(r+1)} < δ and differing at r + 1.
pub fn nonequicontinuous_witness(delta: f64, horizon: usize) -> Result<NonequicontinuousWitness, ProductError> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(ProductError::NonPositive);
    }
    let s = Substitution::period_doubling();
    let agree = if delta >= 1.0 { None } else { Some((0..).find(|&r| 0.5f64.powi(r + 1) < delta).expect("δ > 0") as usize) };
    let split = agree.map_or(0, |r| r + 1);
    if split > horizon {
        return Err(ProductError::NotFound(horizon));
    }
    let z = z3(0, 8);
    let (first, second) = match agree {
        None => (ProductPoint::new(vec![], vec![0, 1], z.clone())?, ProductPoint::new(vec![], vec![1, 0], z.clone())?),
        Some(r) => {
            let lang = language(&s, 2 * r + 2)?;
            let (w, a, b) = right_special(&lang, 2 * r + 1).ok_or(ProductError::NotFound(horizon))?;
            let mk = |c: usize| {
                let mut full = w.clone();
                full.push(c);
                ProductPoint::new(full[..r].to_vec(), full[r..].to_vec(), z.clone())
            };
            (mk(a)?, mk(b)?)
        }
    };
    let initial_distance = product_distance(&first, &second);
    let (mut p, mut q) = (first.clone(), second.clone());
    for n in 0..=horizon {
        if word_distance(&p, &q) >= 1.0 {
            return Ok(NonequicontinuousWitness { first, second, initial_distance, separation_time: n });
        }
        match (product_step(&p), product_step(&q)) {
            (Ok(a), Ok(b)) => (p, q) = (a, b),
            _ => break,
        }
    }
    Err(ProductError::NotFound(horizon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_shifts_and_counts() {
        let p = ProductPoint::new(vec![0], vec![1, 0, 0], z3(0, 4)).unwrap();
        let q = product_step(&p).unwrap();
        assert_eq!(q.to_string(), "(01.00, 1000)");
        let mut z = z3(2, 1);
        z.increment();
        assert_eq!(z.digits(), &[0]);
        let mut p = ProductPoint::new(vec![], vec![0, 1, 0, 0, 0], z3(1, 1)).unwrap();
        for _ in 0..3 {
            p = product_step(&p).unwrap();
        }
        assert_eq!(p.z.digits(), &[1]);
        let end = ProductPoint::new(vec![0], vec![1], z3(0, 2)).unwrap();
        assert_eq!(product_step(&end), Err(ProductError::WindowExhausted));
        assert!(ProductPoint::new(vec![], vec![1, 1], z3(0, 2)).is_err());
    }

    #[test]
    fn doubling_matches_integers() {
        for v in 0..81u64 {
            assert_eq!(double(&z3(v, 4)).value(), BigUint::from(2 * v % 81));
        }
    }

    #[test]
    fn identities_hold() {
        let r = verify_product_selfinduced(12, 200).unwrap();
        assert!(r.passed(), "{:?}", r.witnesses);
        assert!(verify_product_selfinduced(0, 10).unwrap().passed());
    }

    #[test]
    fn backward_inverts_forward() {
        let h = ProductSystem::new(6, 1).unwrap();
        for p in h.samples(20) {
            let q = h.backward(&h.forward(&p));
            assert_eq!(q.1, p.1);
            assert_eq!(q.0.shift, p.0.shift);
        }
    }

    #[test]
    fn nonexpansive_pair() {
        let w = nonexpansive_witness(3f64.powi(-4)).unwrap();
        assert_eq!(w.second.z.value(), BigUint::from(81u32));
        assert_eq!(w.bound, 3f64.powi(-5));
        assert!(w.first.z.depth() >= 5);
        let w = nonexpansive_witness(3f64.powi(-30)).unwrap();
        assert!(w.first.z.depth() >= 31);
        assert!(nonexpansive_witness(1.0).unwrap().bound < 1.0);
    }

    #[test]
    fn nonequicontinuous_pair() {
        let w = nonequicontinuous_witness(0.5f64.powi(5), 16).unwrap();
        assert!(w.initial_distance < 0.5f64.powi(5));
        assert!(w.separation_time <= 6);
        assert_eq!(nonequicontinuous_witness(1.0, 4).unwrap().separation_time, 0);
        assert_eq!(nonequicontinuous_witness(1e-6, 0), Err(ProductError::NotFound(0)));
    }
}
