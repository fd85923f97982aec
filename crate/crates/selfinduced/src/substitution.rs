//! Primitive substitutions on finite alphabets.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, IntMatrix};
use crate::scalar::Scalar;
use crate::words::{
    factor_complexity, factors, Alphabet, ClopenSet, Cylinder, Language, Letter, SystemHandle, Word, WordsError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubstitutionError {
    #[error("empty word")]
    EmptyWord,
    #[error("image of letter {0} is empty")]
    EmptyImage(String),
    #[error("letter index {0} outside the alphabet")]
    LetterOutOfRange(usize),
    #[error("substitution is not primitive: {0}")]
    NotPrimitive(String),
    #[error("subshift has a periodic point of period word {0}")]
    Periodic(String),
    #[error("clopen set is empty")]
    EmptyClopen,
    #[error("return words did not stabilize when doubling horizon {0}")]
    HorizonTooSmall(usize),
    #[error("no recognizability radius up to {0}")]
    RecognizabilityUnknown(usize),
    #[error(transparent)]
    Words(#[from] WordsError),
}

/// A morphism 𝒜 → 𝒜⁺.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    alphabet: Alphabet,
    rules: Vec<Word>,
}

impl Substitution {
    pub fn new(alphabet: Alphabet, rules: Vec<Word>) -> Result<Self, SubstitutionError> {
        if rules.len() != alphabet.len() {
            return Err(SubstitutionError::LetterOutOfRange(rules.len()));
        }
        for (a, img) in rules.iter().enumerate() {
            if img.is_empty() {
                return Err(SubstitutionError::EmptyImage(alphabet.symbol(a).to_string()));
            }
            if let Some(&bad) = img.iter().find(|&&b| b >= alphabet.len()) {
                return Err(SubstitutionError::LetterOutOfRange(bad));
            }
        }
        Ok(Substitution { alphabet, rules })
    }

    /// Builds from symbol strings, e.g. `parse(&["0","1"], &["01","00"])`.
    pub fn parse(symbols: &[&str], images: &[&str]) -> Result<Self, SubstitutionError> {
        let alphabet = Alphabet::new(symbols.iter().copied())?;
        let rules = images.iter().map(|t| alphabet.parse_word(t)).collect::<Result<Vec<_>, _>>()?;
        Substitution::new(alphabet, rules)
    }

    pub fn period_doubling() -> Self {
        Substitution::parse(&["0", "1"], &["01", "00"]).expect("valid")
    }

    pub fn fibonacci() -> Self {
        Substitution::parse(&["0", "1"], &["01", "0"]).expect("valid")
    }

    pub fn thue_morse() -> Self {
        Substitution::parse(&["0", "1"], &["01", "10"]).expect("valid")
    }

    pub fn chacon() -> Self {
        Substitution::parse(&["0", "1"], &["0010", "1"]).expect("valid")
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn rules(&self) -> &[Word] {
        &self.rules
    }

    pub fn image(&self, a: Letter) -> &[Letter] {
        &self.rules[a]
    }

    pub fn apply(&self, w: &[Letter]) -> Word {
        w.iter().flat_map(|&a| self.rules[a].iter().copied()).collect()
    }

    pub fn max_image_len(&self) -> usize {
        self.rules.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn constant_length(&self) -> Option<usize> {
        let l = self.rules[0].len();
        self.rules.iter().all(|r| r.len() == l).then_some(l)
    }

    /// σᵏ as a substitution.
    pub fn power(&self, k: usize) -> Substitution {
        let rules = (0..self.alphabet.len())
            .map(|a| (0..k).fold(vec![a], |w, _| self.apply(&w)))
            .collect();
        Substitution { alphabet: self.alphabet.clone(), rules }
    }

    /// Entry (a, b) counts occurrences of a in σ(b).
    pub fn matrix(&self) -> IntMatrix {
        let n = self.alphabet.len();
        let mut m = vec![vec![0u64; n]; n];
        for (b, img) in self.rules.iter().enumerate() {
            for &a in img {
                m[a][b] += 1;
            }
        }
        m
    }

    pub fn render(&self, w: &[Letter]) -> String {
        self.alphabet.render(w)
    }
}

/// σᵏ(w).
pub fn iterate(s: &Substitution, w: &[Letter], k: usize) -> Result<Word, SubstitutionError> {
    if w.is_empty() {
        return Err(SubstitutionError::EmptyWord);
    }
    Ok((0..k).fold(w.to_vec(), |acc, _| s.apply(&acc)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum PrimitivityReport {
    Primitive { exponent: usize },
    /// `missing` never occurs in any σⁿ(`from`).
    Unreachable { from: Letter, missing: Letter },
    /// Every letter reaches every letter but no power up to the bound is positive.
    Imprimitive { bound: usize },
    /// All images have length one.
    NoGrowth,
}

impl PrimitivityReport {
    pub fn is_primitive(&self) -> bool {
        matches!(self, PrimitivityReport::Primitive { .. })
    }

    fn describe(&self, s: &Substitution) -> String {
        match self {
            PrimitivityReport::Primitive { exponent } => format!("primitive with exponent {exponent}"),
            PrimitivityReport::Unreachable { from, missing } => format!(
                "{} never appears in σⁿ({})",
                s.alphabet.symbol(*missing),
                s.alphabet.symbol(*from)
            ),
            PrimitivityReport::Imprimitive { bound } => format!("no positive power up to {bound}"),
            PrimitivityReport::NoGrowth => "no letter has growing images".into(),
        }
    }
}

pub fn is_primitive(s: &Substitution) -> PrimitivityReport {
    let n = s.alphabet.len();
    for a in 0..n {
        let mut seen = BTreeSet::from([a]);
        let mut stack = vec![a];
        let mut reach = BTreeSet::new();
        while let Some(x) = stack.pop() {
            for &y in s.image(x) {
                reach.insert(y);
                if seen.insert(y) {
                    stack.push(y);
                }
            }
        }
        if let Some(missing) = (0..n).find(|b| !reach.contains(b)) {
            return PrimitivityReport::Unreachable { from: a, missing };
        }
    }
    if s.max_image_len() < 2 {
        return PrimitivityReport::NoGrowth;
    }
    let bound = 2 * n * n;
    match linalg::positivity_exponent(&s.matrix(), bound) {
        Some(exponent) => PrimitivityReport::Primitive { exponent },
        None => PrimitivityReport::Imprimitive { bound },
    }
}

fn require_primitive(s: &Substitution) -> Result<(), SubstitutionError> {
    let r = is_primitive(s);
    if r.is_primitive() {
        Ok(())
    } else {
        Err(SubstitutionError::NotPrimitive(r.describe(s)))
    }
}

/// ℒ₂(X_σ): closure of the 2-factors of images under σ.
fn two_factors(s: &Substitution) -> BTreeSet<Word> {
    let mut set: BTreeSet<Word> = BTreeSet::new();
    for img in &s.rules {
        set.extend(factors(img, 2).map(<[Letter]>::to_vec));
    }
    loop {
        let mut grown = set.clone();
        for w in &set {
            grown.extend(factors(&s.apply(w), 2).map(<[Letter]>::to_vec));
        }
        if grown.len() == set.len() {
            return set;
        }
        set = grown;
    }
}

/// ℒ(X_σ) up to `horizon`, as factors of σᵏ(ab) over ab ∈ ℒ₂ with min |σᵏ| ≥ horizon.
pub fn language(s: &Substitution, horizon: usize) -> Result<Language, SubstitutionError> {
    require_primitive(s)?;
    Ok(language_unchecked(s, horizon))
}

fn language_unchecked(s: &Substitution, horizon: usize) -> Language {
    let n = s.alphabet.len();
    let mut rules: Vec<Word> = (0..n).map(|a| vec![a]).collect();
    let mut rounds = 0;
    while rules.iter().map(Vec::len).min().unwrap_or(0) < horizon.max(1) && rounds < 4096 {
        rules = rules.iter().map(|w| s.apply(w)).collect();
        rounds += 1;
    }
    let sources: Vec<Word> = two_factors(s)
        .iter()
        .map(|w| w.iter().flat_map(|&a| rules[a].iter().copied()).collect())
        .chain(rules.iter().cloned())
        .collect();
    Language::from_sources(s.alphabet.clone(), sources.iter(), horizon)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Periodicity {
    Periodic(Word),
    /// Complexity values p(1..=bound) (strictly increasing) and the period bound searched.
    Aperiodic { period_bound: usize, complexity: Vec<usize> },
}

/// Decides periodicity with P_bound = #𝒜·(max |σ(a)|)².  A minimal subshift is
/// periodic iff its complexity stalls, p(n+1) = p(n); the stall is searched for
/// n < 2·P_bound and the period word is read off a legal word.
pub fn periodicity_check(s: &Substitution) -> Result<Periodicity, SubstitutionError> {
    require_primitive(s)?;
    let bound = s.alphabet.len() * s.max_image_len().pow(2);
    let horizon = 3 * bound + 1;
    let lang = language_unchecked(s, horizon);
    let complexity: Vec<usize> = (1..=2 * bound).map(|n| factor_complexity(&lang, n)).collect::<Result<_, _>>()?;
    if let Some(i) = complexity.windows(2).position(|w| w[0] == w[1]) {
        let n = i + 1;
        let q = complexity[i];
        if let Some(u) = lang.words(n + q)?.iter().find(|u| (0..n).all(|j| u[j] == u[j + q])) {
            return Ok(Periodicity::Periodic(u[..q].to_vec()));
        }
    }
    Ok(Periodicity::Aperiodic { period_bound: bound, complexity })
}

fn require_aperiodic(s: &Substitution) -> Result<(), SubstitutionError> {
    match periodicity_check(s)? {
        Periodicity::Periodic(w) => Err(SubstitutionError::Periodic(s.render(&w))),
        Periodicity::Aperiodic { .. } => Ok(()),
    }
}

/// Normalized Perron eigenvector of the composition matrix.
pub fn frequencies<F: Scalar>(s: &Substitution) -> Result<Vec<F>, SubstitutionError> {
    require_primitive(s)?;
    let (_, v, _) = linalg::float_perron_right::<F>(&s.matrix(), 100_000);
    Ok(v)
}

/// Frequencies as exact rationals when the Perron eigenvalue is an integer.
pub fn exact_frequencies(s: &Substitution) -> Result<Option<Vec<BigRational>>, SubstitutionError> {
    require_primitive(s)?;
    Ok(linalg::exact_perron_right(&s.matrix()).map(|(_, v)| v))
}

/// The substitution induced on k-blocks; letters are the words of ℒ_k.
pub fn block_substitution(s: &Substitution, k: usize) -> Result<(Vec<Word>, Substitution), SubstitutionError> {
    require_primitive(s)?;
    let lang = language_unchecked(s, k + s.max_image_len() * k + 1);
    let blocks: Vec<Word> = lang.words(k)?.iter().cloned().collect();
    let index: BTreeMap<&Word, usize> = blocks.iter().enumerate().map(|(i, b)| (b, i)).collect();
    let names: Vec<String> = (0..blocks.len()).map(|i| format!("b{i}")).collect();
    let mut rules = Vec::with_capacity(blocks.len());
    for b in &blocks {
        let img = s.apply(b);
        let first = s.image(b[0]).len();
        let w: Word = (0..first).map(|i| index[&img[i..i + k].to_vec()]).collect();
        rules.push(w);
    }
    Ok((blocks, Substitution::new(Alphabet::new(names)?, rules)?))
}

/// Exact frequencies of the words of length k, when the eigenvalue is an integer.
pub fn exact_word_frequencies(s: &Substitution, k: usize) -> Result<Option<BTreeMap<Word, BigRational>>, SubstitutionError> {
    let (blocks, bs) = block_substitution(s, k)?;
    Ok(linalg::exact_perron_right(&bs.matrix()).map(|(_, v)| blocks.into_iter().zip(v).collect()))
}

/// Return words to U with their decorations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReturnWordSet {
    pub plain: BTreeSet<Word>,
    pub decorated: BTreeSet<(Word, Word, Word)>,
    /// Length of window scanned; the doubled window gave the same sets.
    pub certified_horizon: usize,
}

impl ReturnWordSet {
    pub fn theta(triple: &(Word, Word, Word)) -> &Word {
        &triple.1
    }
}

/// Two-sided point fixed by σᵖ, seeded by a legal pair b.c.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    power: Substitution,
    p: usize,
    left: Letter,
    right: Letter,
    /// lens[n][a] = |σ^{pn}(a)| (saturating)
    lens: Vec<Vec<u128>>,
}

impl FixedPoint {
    /// First p ≤ 64 and least legal pair (b,c) with σᵖ(b) ending in b, σᵖ(c) starting with c.
    pub fn find(s: &Substitution) -> Result<Self, SubstitutionError> {
        require_primitive(s)?;
        let pairs = two_factors(s);
        for p in 1..=64 {
            let t = s.power(p);
            if t.rules.iter().any(|r| r.len() < 2) {
                continue;
            }
            for w in &pairs {
                let (b, c) = (w[0], w[1]);
                if *t.image(b).last().expect("non-empty") == b && t.image(c)[0] == c {
                    return Ok(FixedPoint::with_seed(t, p, b, c));
                }
            }
        }
        Err(SubstitutionError::NotPrimitive("no periodic seed found".into()))
    }

    fn with_seed(power: Substitution, p: usize, left: Letter, right: Letter) -> Self {
        let n = power.alphabet.len();
        let mut lens = vec![vec![1u128; n]];
        while lens.last().expect("non-empty").iter().min().copied().unwrap_or(0) < u64::MAX as u128 {
            let prev = lens.last().expect("non-empty");
            let next: Vec<u128> =
                (0..n).map(|a| power.image(a).iter().fold(0u128, |acc, &b| acc.saturating_add(prev[b]))).collect();
            lens.push(next);
            if lens.len() > 200 {
                break;
            }
        }
        FixedPoint { power, p, left, right, lens }
    }

    pub fn seed(&self) -> (Letter, Letter) {
        (self.left, self.right)
    }

    pub fn exponent(&self) -> usize {
        self.p
    }

    fn descend(&self, mut a: Letter, mut n: usize, mut j: u128) -> Letter {
        while n > 0 {
            let below = &self.lens[n - 1];
            for &b in self.power.image(a) {
                if j < below[b] {
                    a = b;
                    break;
                }
                j -= below[b];
            }
            n -= 1;
        }
        a
    }

    /// uⱼ for any integer j.
    pub fn letter_at(&self, j: i64) -> Letter {
        if j >= 0 {
            let j = j as u128;
            let n = self.lens.iter().position(|l| l[self.right] > j).expect("index within range");
            self.descend(self.right, n, j)
        } else {
            let back = (-(j as i128)) as u128;
            let n = self.lens.iter().position(|l| l[self.left] >= back).expect("index within range");
            self.descend(self.left, n, self.lens[n][self.left] - back)
        }
    }

    /// u[lo, hi).
    pub fn window(&self, lo: i64, hi: i64) -> Word {
        (lo..hi).map(|j| self.letter_at(j)).collect()
    }
}

fn scan_returns(window: &[Letter], u: &ClopenSet) -> (BTreeSet<Word>, BTreeSet<(Word, Word, Word)>) {
    let occ: Vec<usize> = (u.past_len()..=window.len().saturating_sub(u.future_len()))
        .filter(|&i| u.contains_window(window, i))
        .collect();
    let mut plain = BTreeSet::new();
    let mut decorated = BTreeSet::new();
    for pair in occ.windows(2) {
        let (i, j) = (pair[0], pair[1]);
        let w = window[i..j].to_vec();
        let past = window[i - u.past_len()..i].to_vec();
        let future = window[j..j + u.future_len()].to_vec();
        plain.insert(w.clone());
        decorated.insert((past, w, future));
    }
    (plain, decorated)
}

/// Return words to U found in a window of length `horizon`, certified by doubling.
pub fn return_words(s: &Substitution, u: &ClopenSet, horizon: usize) -> Result<ReturnWordSet, SubstitutionError> {
    require_primitive(s)?;
    require_aperiodic(s)?;
    if u.is_empty() {
        return Err(SubstitutionError::EmptyClopen);
    }
    let fp = FixedPoint::find(s)?;
    let h = horizon as i64;
    let small = scan_returns(&fp.window(-h / 2, h - h / 2), u);
    let large = scan_returns(&fp.window(-h, h), u);
    if small != large || small.0.is_empty() {
        return Err(SubstitutionError::HorizonTooSmall(horizon));
    }
    Ok(ReturnWordSet { plain: large.0, decorated: large.1, certified_horizon: 2 * horizon })
}

/// τ on return words to [a] with θ∘τ = σᵏ∘θ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DerivedSubstitution {
    pub tau: Substitution,
    pub theta: Vec<Word>,
    pub power: usize,
}

impl DerivedSubstitution {
    pub fn theta_word(&self, w: &[Letter]) -> Word {
        w.iter().flat_map(|&a| self.theta[a].iter().copied()).collect()
    }
}

fn derived_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let mut name = String::new();
            let mut k = i;
            loop {
                name.insert(0, (b'A' + (k % 26) as u8) as char);
                if k < 26 {
                    break;
                }
                k = k / 26 - 1;
            }
            name
        })
        .collect()
}

pub fn derive(s: &Substitution, a: Letter) -> Result<DerivedSubstitution, SubstitutionError> {
    require_primitive(s)?;
    require_aperiodic(s)?;
    if a >= s.alphabet.len() {
        return Err(SubstitutionError::LetterOutOfRange(a));
    }
    let n = s.alphabet.len();
    let k = (1..=n * n + 1)
        .find(|&k| iterate(s, &[a], k).map(|w| w[0] == a).unwrap_or(false))
        .ok_or_else(|| SubstitutionError::NotPrimitive("no power of σ maps a to a word starting with a".into()))?;
    let lang = language_unchecked(s, 1);
    let u = ClopenSet::new([Cylinder::new(vec![], vec![a])], &lang)?;
    let mut horizon = 64;
    let rw = loop {
        match return_words(s, &u, horizon) {
            Ok(rw) => break rw,
            Err(SubstitutionError::HorizonTooSmall(_)) if horizon < 1 << 16 => horizon *= 2,
            Err(e) => return Err(e),
        }
    };
    // order by first occurrence in the one-sided point σ^{k∞}(a)
    let sk = s.power(k);
    let mut prefix = vec![a];
    while prefix.len() < 4 * rw.certified_horizon {
        prefix = sk.apply(&prefix);
    }
    let occ: Vec<usize> = (0..prefix.len()).filter(|&i| prefix[i] == a).collect();
    let mut order: Vec<Word> = Vec::new();
    for p in occ.windows(2) {
        let w = prefix[p[0]..p[1]].to_vec();
        if !order.contains(&w) {
            order.push(w);
        }
    }
    for w in &rw.plain {
        if !order.contains(w) {
            order.push(w.clone());
        }
    }
    let index: BTreeMap<&Word, usize> = order.iter().enumerate().map(|(i, w)| (w, i)).collect();
    let mut rules = Vec::new();
    for w in &order {
        let img = sk.apply(w);
        let cuts: Vec<usize> = (0..img.len()).filter(|&i| img[i] == a).chain([img.len()]).collect();
        let mut letter_word = Vec::new();
        for c in cuts.windows(2) {
            let seg = img[c[0]..c[1]].to_vec();
            let idx = index.get(&seg).ok_or(SubstitutionError::HorizonTooSmall(rw.certified_horizon))?;
            letter_word.push(*idx);
        }
        rules.push(letter_word);
    }
    let tau = Substitution::new(Alphabet::new(derived_names(order.len()))?, rules)?;
    let derived = DerivedSubstitution { tau, theta: order, power: k };
    for letter in 0..derived.theta.len() {
        let lhs = derived.theta_word(derived.tau.image(letter));
        let rhs = sk.apply(&derived.theta[letter]);
        assert_eq!(lhs, rhs, "θ∘τ = σᵏ∘θ failed on a derived letter");
    }
    Ok(derived)
}

/// Legal tilings of w by σ-blocks: each is the list of cut positions (0..=|w|) and preimage.
/// A tiling's preimage must be in the language.
fn tilings(s: &Substitution, lang: &Language, w: &[Letter], limit: usize) -> Vec<(Vec<usize>, Word)> {
    let mut out = Vec::new();
    for v0 in 0..s.alphabet.len() {
        let img = s.image(v0);
        for off in 0..img.len() {
            let take = (img.len() - off).min(w.len());
            if img[off..off + take] != w[..take] {
                continue;
            }
            let mut cuts = Vec::new();
            if off == 0 {
                cuts.push(0);
            }
            extend_tiling(s, lang, w, img.len() - off, cuts, vec![v0], &mut out, limit);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn extend_tiling(
    s: &Substitution,
    lang: &Language,
    w: &[Letter],
    pos: usize,
    mut cuts: Vec<usize>,
    pre: Word,
    out: &mut Vec<(Vec<usize>, Word)>,
    limit: usize,
) {
    if out.len() >= limit || !lang.contains(&pre) && pre.len() <= lang.horizon() {
        return;
    }
    if pos >= w.len() {
        if pos == w.len() {
            cuts.push(pos);
        }
        out.push((cuts, pre));
        return;
    }
    cuts.push(pos);
    for v in 0..s.alphabet.len() {
        let img = s.image(v);
        let take = img.len().min(w.len() - pos);
        if img[..take] == w[pos..pos + take] {
            let mut next = pre.clone();
            next.push(v);
            extend_tiling(s, lang, w, pos + img.len(), cuts.clone(), next, out, limit);
        }
    }
}

/// Whether a cut before position `center` is forced, forbidden or ambiguous over all legal tilings.
fn center_cut(s: &Substitution, lang: &Language, w: &[Letter], center: usize) -> Option<bool> {
    let t = tilings(s, lang, w, usize::MAX);
    let mut verdicts = t.iter().map(|(cuts, _)| cuts.contains(&center));
    let first = verdicts.next()?;
    verdicts.all(|v| v == first).then_some(first)
}

/// Smallest R so that every w ∈ ℒ_{2R+1} determines whether a σ-cut sits before its center letter.
pub fn recognizability_radius(s: &Substitution, bound: usize) -> Result<Option<usize>, SubstitutionError> {
    require_primitive(s)?;
    require_aperiodic(s)?;
    recognizability_radius_unchecked(s, bound)
}

fn recognizability_radius_unchecked(s: &Substitution, bound: usize) -> Result<Option<usize>, SubstitutionError> {
    let lang = language_unchecked(s, 2 * bound + 2);
    for r in 0..=bound {
        if lang.words(2 * r + 1)?.iter().all(|w| center_cut(s, &lang, w, r).is_some()) {
            return Ok(Some(r));
        }
    }
    Ok(None)
}

/// σ(X_σ) as radius-R cylinders [w[0,R). w[R,2R]].
pub fn image_clopen(s: &Substitution, radius: usize) -> Result<ClopenSet, SubstitutionError> {
    let lang = language_unchecked(s, 2 * radius + 2);
    let mut cyl = BTreeSet::new();
    for w in lang.words(2 * radius + 1)? {
        if center_cut(s, &lang, w, radius) == Some(true) {
            cyl.insert(Cylinder::new(w[..radius].to_vec(), w[radius..].to_vec()));
        }
    }
    Ok(ClopenSet::from_normalized(cyl))
}

/// Exact measure of σⁿ(X_σ) from word frequencies, for integer Perron eigenvalue.
pub fn image_measure_exact(s: &Substitution, n: usize, bound: usize) -> Result<Option<BigRational>, SubstitutionError> {
    require_primitive(s)?;
    require_aperiodic(s)?;
    let sn = s.power(n);
    let r = recognizability_radius_unchecked(&sn, bound)?.ok_or(SubstitutionError::RecognizabilityUnknown(bound))?;
    let u = image_clopen(&sn, r)?;
    let Some(freq) = exact_word_frequencies(s, 2 * r + 1)? else { return Ok(None) };
    let mut total = BigRational::zero();
    for c in u.cylinders() {
        let mut w = c.past.clone();
        w.extend_from_slice(&c.future);
        total += freq.get(&w).cloned().unwrap_or_else(BigRational::zero);
    }
    Ok(Some(total))
}

/// L⁻ⁿ as a rational.
pub fn inverse_power(l: usize, n: usize) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(l).pow(n as u32))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SelfInducedReport {
    pub radius: usize,
    pub depth: usize,
    pub samples: usize,
    pub return_times: Vec<usize>,
    pub failures: Vec<String>,
}

impl SelfInducedReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks that σ realizes X_σ ≅ σ(X_σ) with return time |σ(x₀)| on sampled points.
pub fn verify_self_induced(s: &Substitution, depth: usize, samples: usize) -> Result<SelfInducedReport, SubstitutionError> {
    require_primitive(s)?;
    require_aperiodic(s)?;
    let bound = 8 * s.max_image_len() + 8;
    let radius = recognizability_radius(s, bound)?.ok_or(SubstitutionError::RecognizabilityUnknown(bound))?;
    let u = image_clopen(s, radius)?;
    let fp = FixedPoint::find(s)?;
    let lmax = s.max_image_len() as i64;
    let margin = (depth as i64) + 2 * radius as i64 + 2 * lmax + 2;
    let mut return_times = Vec::new();
    let mut failures = Vec::new();
    for j in 0..samples as i64 {
        let t = 37 * j - 17 * samples as i64;
        let x = fp.window(t - margin, t + margin + 1);
        let origin = margin as usize;
        // σ(x) with its origin
        let sx = s.apply(&x);
        let sorigin: usize = x[..origin].iter().map(|&a| s.image(a).len()).sum();
        let len0 = s.image(x[origin]).len();
        if !u.contains_window(&sx, sorigin) {
            failures.push(format!("sample {j}: σ(x) ∉ U"));
            continue;
        }
        let rt = (1..=u.past_len() + sx.len()).find(|&k| u.contains_window(&sx, sorigin + k));
        match rt {
            Some(k) if k == len0 => return_times.push(k),
            other => {
                failures.push(format!("sample {j}: return time {other:?} ≠ |σ(x₀)| = {len0}"));
                continue;
            }
        }
        // S^{|σ(x₀)|} σ(x) against σ(Sx), coordinates −depth..=depth
        let sxs: Vec<Letter> = {
            let shifted = &x[1..];
            s.apply(shifted)
        };
        let sxs_origin: usize = x[1..origin + 1].iter().map(|&a| s.image(a).len()).sum();
        let d = depth as i64;
        for i in -d..=d {
            let a = sx.get((sorigin as i64 + len0 as i64 + i) as usize);
            let b = sxs.get((sxs_origin as i64 + i) as usize);
            if a != b {
                failures.push(format!("sample {j}: coordinate {i} differs"));
                break;
            }
        }
    }
    Ok(SelfInducedReport { radius, depth, samples, return_times, failures })
}

/// Point S^t(u) of a σᵖ-fixed two-sided point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubshiftPoint {
    pub seed: (Letter, Letter),
    pub shift: i64,
}

/// The subshift X_σ with φ = σ and U = σ(X_σ), read through recognizability cylinders.
#[derive(Debug, Clone)]
pub struct SubstitutionSystem {
    s: Substitution,
    p: usize,
    base_seed: (Letter, Letter),
    /// images[k] = cylinders of σᵏ(X_σ), k ≥ 1
    images: Vec<ClopenSet>,
    points: BTreeMap<(Letter, Letter), FixedPoint>,
    lang: Language,
}

impl SubstitutionSystem {
    /// Builds the handle with φⁿ-image tests for n ≤ `max_power`.
    pub fn new(s: &Substitution, max_power: usize) -> Result<Self, SubstitutionError> {
        require_primitive(s)?;
        require_aperiodic(s)?;
        let fp = FixedPoint::find(s)?;
        let p = fp.exponent();
        let mut images = Vec::new();
        for k in 1..=max_power.max(1) {
            let sk = s.power(k);
            let bound = 8 * sk.max_image_len() + 8;
            let r = recognizability_radius_unchecked(&sk, bound)?.ok_or(SubstitutionError::RecognizabilityUnknown(bound))?;
            images.push(image_clopen(&sk, r)?);
        }
        let mut points = BTreeMap::new();
        let mut seed = fp.seed();
        loop {
            if points.contains_key(&seed) {
                break;
            }
            points.insert(seed, FixedPoint::with_seed(s.power(p), p, seed.0, seed.1));
            seed = (*s.image(seed.0).last().expect("non-empty"), s.image(seed.1)[0]);
        }
        let lang = language_unchecked(s, 2);
        Ok(SubstitutionSystem { s: s.clone(), p, base_seed: fp.seed(), images, points, lang })
    }

    pub fn substitution(&self) -> &Substitution {
        &self.s
    }

    pub fn fixed_point(&self, seed: (Letter, Letter)) -> &FixedPoint {
        &self.points[&seed]
    }

    pub fn base_point(&self, shift: i64) -> SubshiftPoint {
        SubshiftPoint { seed: self.base_seed, shift }
    }

    pub fn letter(&self, p: &SubshiftPoint, i: i64) -> Letter {
        self.points[&p.seed].letter_at(p.shift + i)
    }

    /// p[lo, hi).
    pub fn window(&self, p: &SubshiftPoint, lo: i64, hi: i64) -> Word {
        self.points[&p.seed].window(p.shift + lo, p.shift + hi)
    }

    fn in_image(&self, p: &SubshiftPoint, k: usize) -> bool {
        let u = &self.images[k - 1];
        let (a, b) = (u.past_len() as i64, u.future_len() as i64);
        u.contains_window(&self.window(p, -a, b), a as usize)
    }

    pub fn language_pairs(&self) -> &Language {
        &self.lang
    }

    pub fn exponent(&self) -> usize {
        self.p
    }
}

impl SystemHandle for SubstitutionSystem {
    type Point = SubshiftPoint;

    fn depth(&self) -> usize {
        usize::MAX
    }

    fn symbol(&self, p: &SubshiftPoint, i: i64) -> String {
        self.s.alphabet.symbol(self.letter(p, i)).to_string()
    }

    fn forward(&self, p: &SubshiftPoint) -> SubshiftPoint {
        SubshiftPoint { seed: p.seed, shift: p.shift + 1 }
    }

    fn backward(&self, p: &SubshiftPoint) -> SubshiftPoint {
        SubshiftPoint { seed: p.seed, shift: p.shift - 1 }
    }

    fn in_clopen(&self, p: &SubshiftPoint) -> bool {
        self.in_image(p, 1)
    }

    fn phi(&self, p: &SubshiftPoint) -> Option<SubshiftPoint> {
        let fp = &self.points[&p.seed];
        let len = |j: i64| self.s.image(fp.letter_at(j)).len() as i64;
        let shift = match self.s.constant_length() {
            Some(l) => l as i64 * p.shift,
            None if p.shift >= 0 => (0..p.shift).map(len).sum(),
            None => -(p.shift..0).map(len).sum::<i64>(),
        };
        let seed = (*self.s.image(p.seed.0).last().expect("non-empty"), self.s.image(p.seed.1)[0]);
        Some(SubshiftPoint { seed, shift })
    }

    fn in_phi_image(&self, p: &SubshiftPoint, k: usize) -> Option<bool> {
        match k {
            0 => Some(true),
            k if k <= self.images.len() => Some(self.in_image(p, k)),
            _ => None,
        }
    }

    fn cell(&self, p: &SubshiftPoint, resolution: usize) -> String {
        let m = resolution as i64;
        let w = self.window(p, -m, m);
        format!("{}.{}", self.s.render(&w[..resolution]), self.s.render(&w[resolution..]))
    }

    fn cells(&self, resolution: usize) -> Vec<(String, SubshiftPoint)> {
        let lang = language_unchecked(&self.s, 2 * resolution);
        let targets = lang.words(2 * resolution).expect("within horizon");
        let mut found: BTreeMap<String, SubshiftPoint> = BTreeMap::new();
        let mut len = 64i64;
        while found.len() < targets.len() {
            let base = self.base_point(0);
            let m = resolution as i64;
            for t in m..len {
                let q = SubshiftPoint { seed: base.seed, shift: t };
                found.entry(self.cell(&q, resolution)).or_insert(q);
            }
            len *= 2;
            assert!(len < 1 << 24, "cells at resolution {resolution} not found in the fixed point");
        }
        found.into_iter().collect()
    }

    fn samples(&self, count: usize) -> Vec<SubshiftPoint> {
        (0..count as i64).map(|j| self.base_point(37 * j - 17 * count as i64)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iterate_period_doubling() {
        let pd = Substitution::period_doubling();
        assert_eq!(pd.render(&iterate(&pd, &[0], 2).unwrap()), "0100");
        assert_eq!(pd.render(&iterate(&pd, &[1], 2).unwrap()), "0101");
        assert_eq!(iterate(&pd, &[1, 0], 0).unwrap(), vec![1, 0]);
        assert_eq!(iterate(&pd, &[], 3), Err(SubstitutionError::EmptyWord));
    }

    #[test]
    fn primitivity() {
        assert_eq!(is_primitive(&Substitution::period_doubling()), PrimitivityReport::Primitive { exponent: 2 });
        assert_eq!(is_primitive(&Substitution::chacon()), PrimitivityReport::Unreachable { from: 1, missing: 0 });
        let id = Substitution::parse(&["0", "1"], &["0", "1"]).unwrap();
        assert!(!is_primitive(&id).is_primitive());
    }

    #[test]
    fn periodic_and_aperiodic() {
        let per = Substitution::parse(&["0", "1"], &["01", "01"]).unwrap();
        assert_eq!(periodicity_check(&per), Ok(Periodicity::Periodic(vec![0, 1])));
        assert!(matches!(periodicity_check(&Substitution::period_doubling()), Ok(Periodicity::Aperiodic { .. })));
        assert!(matches!(periodicity_check(&Substitution::thue_morse()), Ok(Periodicity::Aperiodic { .. })));
    }

    #[test]
    fn fixed_point_letters_agree_with_iteration() {
        let fib = Substitution::fibonacci();
        let fp = FixedPoint::find(&fib).unwrap();
        let (_, c) = fp.seed();
        let t = fib.power(fp.exponent());
        let w = iterate(&t, &[c], 8).unwrap();
        for (j, &a) in w.iter().enumerate().take(200) {
            assert_eq!(fp.letter_at(j as i64), a);
        }
    }

    #[test]
    fn derived_names_roll_over() {
        let names = derived_names(28);
        assert_eq!(names[0], "A");
        assert_eq!(names[25], "Z");
        assert_eq!(names[26], "AA");
        assert_eq!(names[27], "AB");
    }

    #[test]
    fn non_primitive_rejected_everywhere() {
        let ch = Substitution::chacon();
        assert!(matches!(language(&ch, 3), Err(SubstitutionError::NotPrimitive(_))));
        assert!(matches!(verify_self_induced(&ch, 10, 2), Err(SubstitutionError::NotPrimitive(_))));
    }
}
