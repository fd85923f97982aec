//! Alphabets, finite words, languages, cylinders and sliding block codes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a symbol in its alphabet (declaration order).
pub type Letter = usize;

/// A finite word as a sequence of letter indices.
pub type Word = Vec<Letter>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WordsError {
    #[error("alphabet is empty")]
    EmptyAlphabet,
    #[error("duplicate symbol {0:?}")]
    DuplicateSymbol(String),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("length {requested} exceeds language horizon {horizon}")]
    HorizonExceeded { requested: usize, horizon: usize },
    #[error("word of length {len} is shorter than the code window {window}")]
    WordTooShort { len: usize, window: usize },
    #[error("block {0:?} has no entry in the code table")]
    MissingEntry(Word),
    #[error("language invariant violated: {0}")]
    InvalidLanguage(String),
    #[error("cylinders {0} and {1} overlap")]
    OverlappingCylinders(String, String),
}

/// Ordered finite set of symbols.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self, WordsError> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(WordsError::EmptyAlphabet);
        }
        let mut seen = BTreeSet::new();
        for s in &symbols {
            if !seen.insert(s.as_str()) {
                return Err(WordsError::DuplicateSymbol(s.clone()));
            }
        }
        Ok(Alphabet { symbols })
    }

    /// Alphabet `0, 1, …, n-1`.
    pub fn digits(n: usize) -> Self {
        Alphabet::new((0..n).map(|i| i.to_string())).expect("non-empty")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, a: Letter) -> &str {
        &self.symbols[a]
    }

    pub fn index(&self, symbol: &str) -> Result<Letter, WordsError> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .ok_or_else(|| WordsError::UnknownSymbol(symbol.to_string()))
    }

    fn single_char(&self) -> bool {
        self.symbols.iter().all(|s| s.chars().count() == 1)
    }

    /// Parses a word.  Single-character alphabets read one char per letter,
    /// otherwise symbols are separated by whitespace or commas.
    pub fn parse_word(&self, text: &str) -> Result<Word, WordsError> {
        if self.single_char() {
            text.chars()
                .filter(|c| !c.is_whitespace())
                .map(|c| self.index(&c.to_string()))
                .collect()
        } else {
            text.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| self.index(t))
                .collect()
        }
    }

    pub fn render(&self, w: &[Letter]) -> String {
        let sep = if self.single_char() { "" } else { " " };
        w.iter().map(|&a| self.symbol(a)).collect::<Vec<_>>().join(sep)
    }
}

/// All factors of length `n` of `w`.
pub fn factors(w: &[Letter], n: usize) -> impl Iterator<Item = &[Letter]> {
    let count = if w.len() >= n { w.len() - n + 1 } else { 0 };
    (0..count).map(move |i| &w[i..i + n])
}

/// Factor sets ℒ_0, …, ℒ_horizon of a subshift, stored explicitly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Language {
    alphabet: Alphabet,
    words_by_length: Vec<BTreeSet<Word>>,
}

impl Language {
    /// Builds a language from explicit sets and checks both invariants.
    pub fn new(alphabet: Alphabet, words_by_length: Vec<BTreeSet<Word>>) -> Result<Self, WordsError> {
        let lang = Language { alphabet, words_by_length };
        if lang.words_by_length.is_empty() || lang.words_by_length[0] != BTreeSet::from([Vec::new()]) {
            return Err(WordsError::InvalidLanguage("ℒ_0 must be {ε}".into()));
        }
        if let Some(v) = lang.violations().into_iter().next() {
            return Err(WordsError::InvalidLanguage(v));
        }
        Ok(lang)
    }

    /// All factors of length ≤ horizon of the given words.  The caller
    /// is responsible for choosing sources long enough to be extendable.
    pub fn from_sources<'a>(
        alphabet: Alphabet,
        sources: impl IntoIterator<Item = &'a Word>,
        horizon: usize,
    ) -> Self {
        let mut words_by_length = vec![BTreeSet::new(); horizon + 1];
        words_by_length[0].insert(Vec::new());
        for src in sources {
            for n in 1..=horizon.min(src.len()) {
                words_by_length[n].extend(factors(src, n).map(<[Letter]>::to_vec));
            }
        }
        Language { alphabet, words_by_length }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn horizon(&self) -> usize {
        self.words_by_length.len() - 1
    }

    pub fn words(&self, n: usize) -> Result<&BTreeSet<Word>, WordsError> {
        self.words_by_length.get(n).ok_or(WordsError::HorizonExceeded {
            requested: n,
            horizon: self.horizon(),
        })
    }

    pub fn contains(&self, w: &[Letter]) -> bool {
        self.words_by_length.get(w.len()).is_some_and(|s| s.contains(w))
    }

    /// Factor-closure and extendability failures, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let h = self.horizon();
        for n in 1..=h {
            for w in &self.words_by_length[n] {
                if !self.words_by_length[n - 1].contains(&w[1..]) || !self.words_by_length[n - 1].contains(&w[..n - 1]) {
                    out.push(format!("{} has a missing factor", self.alphabet.render(w)));
                }
            }
        }
        for n in 0..h {
            let longer = &self.words_by_length[n + 1];
            let prefixes: BTreeSet<&[Letter]> = longer.iter().map(|w| &w[..n]).collect();
            let suffixes: BTreeSet<&[Letter]> = longer.iter().map(|w| &w[1..]).collect();
            for w in &self.words_by_length[n] {
                if !prefixes.contains(w.as_slice()) || !suffixes.contains(w.as_slice()) {
                    out.push(format!("{} is not extendable", self.alphabet.render(w)));
                }
            }
        }
        out
    }
}

/// #ℒ_n.
pub fn factor_complexity(lang: &Language, n: usize) -> Result<usize, WordsError> {
    lang.words(n).map(BTreeSet::len)
}

/// Two-sided cylinder [past.future].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cylinder {
    pub past: Word,
    pub future: Word,
}

impl Cylinder {
    pub fn new(past: Word, future: Word) -> Self {
        Cylinder { past, future }
    }

    /// Whether the point whose coordinates are `window[i - origin]` lies in
    /// the cylinder.  Coordinates outside the window count as a mismatch.
    pub fn contains_window(&self, window: &[Letter], origin: usize) -> bool {
        if self.past.len() > origin || origin + self.future.len() > window.len() {
            return false;
        }
        window[origin - self.past.len()..origin] == self.past[..] && window[origin..origin + self.future.len()] == self.future[..]
    }

    pub fn render(&self, alphabet: &Alphabet) -> String {
        format!("[{}.{}]", alphabet.render(&self.past), alphabet.render(&self.future))
    }
}

/// Finite disjoint union of cylinders with common past and future lengths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClopenSet {
    cylinders: BTreeSet<Cylinder>,
    past_len: usize,
    future_len: usize,
}

impl ClopenSet {
    /// Normalizes the cylinders to equal lengths inside `lang` and rejects overlaps.
    /// Cylinders whose word is not in the language are empty and are dropped.
    pub fn new(cylinders: impl IntoIterator<Item = Cylinder>, lang: &Language) -> Result<Self, WordsError> {
        let cylinders: Vec<Cylinder> = cylinders.into_iter().collect();
        let past_len = cylinders.iter().map(|c| c.past.len()).max().unwrap_or(0);
        let future_len = cylinders.iter().map(|c| c.future.len()).max().unwrap_or(0);
        let total = past_len + future_len;
        let candidates = lang.words(total)?;
        let mut owner: BTreeMap<Cylinder, usize> = BTreeMap::new();
        for (idx, c) in cylinders.iter().enumerate() {
            let lo = past_len - c.past.len();
            for w in candidates {
                if w[lo..past_len] == c.past[..] && w[past_len..past_len + c.future.len()] == c.future[..] {
                    let n = Cylinder::new(w[..past_len].to_vec(), w[past_len..].to_vec());
                    if let Some(&prev) = owner.get(&n) {
                        if prev != idx {
                            let a = lang.alphabet();
                            return Err(WordsError::OverlappingCylinders(cylinders[prev].render(a), c.render(a)));
                        }
                    }
                    owner.insert(n, idx);
                }
            }
        }
        Ok(ClopenSet { cylinders: owner.into_keys().collect(), past_len, future_len })
    }

    /// Builds the set directly from already-normalized cylinders.
    pub fn from_normalized(cylinders: BTreeSet<Cylinder>) -> Self {
        let past_len = cylinders.iter().next().map_or(0, |c| c.past.len());
        let future_len = cylinders.iter().next().map_or(0, |c| c.future.len());
        debug_assert!(cylinders.iter().all(|c| c.past.len() == past_len && c.future.len() == future_len));
        ClopenSet { cylinders, past_len, future_len }
    }

    pub fn cylinders(&self) -> &BTreeSet<Cylinder> {
        &self.cylinders
    }

    pub fn is_empty(&self) -> bool {
        self.cylinders.is_empty()
    }

    pub fn past_len(&self) -> usize {
        self.past_len
    }

    pub fn future_len(&self) -> usize {
        self.future_len
    }

    pub fn contains_window(&self, window: &[Letter], origin: usize) -> bool {
        if self.past_len > origin || origin + self.future_len > window.len() {
            return false;
        }
        let probe = Cylinder::new(
            window[origin - self.past_len..origin].to_vec(),
            window[origin..origin + self.future_len].to_vec(),
        );
        self.cylinders.contains(&probe)
    }
}

/// Sliding block code reading `window` letters; output position i is aligned
/// with input position i + anchor.  A radius-r code has window 2r+1, anchor r.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockCode {
    window: usize,
    anchor: usize,
    table: BTreeMap<Word, Letter>,
    target: Alphabet,
}

impl BlockCode {
    pub fn new(window: usize, anchor: usize, table: BTreeMap<Word, Letter>, target: Alphabet) -> Self {
        assert!(window >= 1 && anchor < window, "window must contain the anchor");
        BlockCode { window, anchor, table, target }
    }

    pub fn with_radius(radius: usize, table: BTreeMap<Word, Letter>, target: Alphabet) -> Self {
        BlockCode::new(2 * radius + 1, radius, table, target)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn target(&self) -> &Alphabet {
        &self.target
    }

    pub fn table(&self) -> &BTreeMap<Word, Letter> {
        &self.table
    }
}

/// Slides the code over `w`; output length is |w| − window + 1.
pub fn apply_block_code(code: &BlockCode, w: &[Letter]) -> Result<Word, WordsError> {
    if w.len() < code.window {
        return Err(WordsError::WordTooShort { len: w.len(), window: code.window });
    }
    factors(w, code.window)
        .map(|b| code.table.get(b).copied().ok_or_else(|| WordsError::MissingEntry(b.to_vec())))
        .collect()
}

/// Result of recoding a language by its k-blocks.
#[derive(Debug, Clone)]
pub struct KBlockPresentation {
    pub k: usize,
    pub alphabet: Alphabet,
    pub blocks: Vec<Word>,
    pub language: Language,
    pub forward: BlockCode,
    pub backward: BlockCode,
}

/// k-block presentation: the alphabet ℒ_k and the conjugacy codes.
pub fn kblock_present(lang: &Language, k: usize) -> Result<KBlockPresentation, WordsError> {
    if k == 0 || k > lang.horizon() {
        return Err(WordsError::HorizonExceeded { requested: k, horizon: lang.horizon() });
    }
    let base = lang.alphabet();
    let blocks: Vec<Word> = lang.words(k)?.iter().cloned().collect();
    let names: Vec<String> = if base.single_char() {
        blocks.iter().map(|b| base.render(b)).collect()
    } else {
        blocks.iter().map(|b| b.iter().map(|&a| base.symbol(a)).collect::<Vec<_>>().join(",")).collect()
    };
    let alphabet = Alphabet::new(names)?;
    let index: BTreeMap<Word, Letter> = blocks.iter().cloned().enumerate().map(|(i, b)| (b, i)).collect();
    let forward = BlockCode::new(k, 0, index, alphabet.clone());
    let back_table: BTreeMap<Word, Letter> = blocks.iter().enumerate().map(|(i, b)| (vec![i], b[0])).collect();
    let backward = BlockCode::new(1, 0, back_table, base.clone());

    let horizon = lang.horizon() + 1 - k;
    let mut words_by_length = vec![BTreeSet::new(); horizon + 1];
    words_by_length[0].insert(Vec::new());
    for (n, set) in words_by_length.iter_mut().enumerate().skip(1) {
        for w in lang.words(n + k - 1)? {
            let coded = apply_block_code(&forward, w)?;
            debug_assert!(overlaps_consistent(&blocks, &coded));
            set.insert(coded);
        }
    }
    let language = Language { alphabet: alphabet.clone(), words_by_length };
    Ok(KBlockPresentation { k, alphabet, blocks, language, forward, backward })
}

/// w_{i,2}…w_{i,k} = w_{i+1,1}…w_{i+1,k−1} along a recoded word.
pub fn overlaps_consistent(blocks: &[Word], coded: &[Letter]) -> bool {
    coded.windows(2).all(|p| {
        let (a, b) = (&blocks[p[0]], &blocks[p[1]]);
        a[1..] == b[..b.len() - 1]
    })
}

impl KBlockPresentation {
    /// Recovers the full source word of a recoded word (inverse of forward on finite words).
    pub fn decode_word(&self, coded: &[Letter]) -> Option<Word> {
        if coded.is_empty() || !overlaps_consistent(&self.blocks, coded) {
            return None;
        }
        let mut out: Word = coded.iter().map(|&c| self.blocks[c][0]).collect();
        out.extend_from_slice(&self.blocks[*coded.last()?][1..]);
        Some(out)
    }
}

impl fmt::Display for Cylinder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}.{:?}]", self.past, self.future)
    }
}

/// Finite computable view of a dynamical system used by the induction
/// machinery.  Points are opaque; coordinates and cells are read through
/// the handle.
pub trait SystemHandle {
    type Point: Clone + fmt::Debug;

    /// Precision up to which point evaluation is exact.
    fn depth(&self) -> usize;

    /// Symbol at coordinate `i` of a point.
    fn symbol(&self, p: &Self::Point, i: i64) -> String;

    fn forward(&self, p: &Self::Point) -> Self::Point;

    fn backward(&self, p: &Self::Point) -> Self::Point;

    /// Membership in the distinguished clopen set U.
    fn in_clopen(&self, p: &Self::Point) -> bool;

    /// First n ≥ 1 with Tⁿp ∈ U, searching up to `limit`.
    fn return_time(&self, p: &Self::Point, limit: usize) -> Option<usize> {
        let mut q = self.forward(p);
        for n in 1..=limit {
            if self.in_clopen(&q) {
                return Some(n);
            }
            q = self.forward(&q);
        }
        None
    }

    /// The conjugacy φ : X → U, when the handle exposes one.
    fn phi(&self, _p: &Self::Point) -> Option<Self::Point> {
        None
    }

    /// Membership in φᵏ(X), when decidable by the handle.
    fn in_phi_image(&self, p: &Self::Point, k: usize) -> Option<bool> {
        match k {
            0 => Some(true),
            1 => Some(self.in_clopen(p)),
            _ => None,
        }
    }

    /// Label of the partition cell of P_m containing the point.
    fn cell(&self, p: &Self::Point, resolution: usize) -> String;

    /// Every cell of P_m with a representative point.
    fn cells(&self, resolution: usize) -> Vec<(String, Self::Point)>;

    /// Deterministic sample of points.
    fn samples(&self, count: usize) -> Vec<Self::Point>;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pd_word() -> Word {
        // σ^5(0) for 0→01, 1→00, written out by hand
        Alphabet::digits(2).parse_word("01000101010001000100010101000101").unwrap()
    }

    #[test]
    fn alphabet_rejects_duplicates() {
        assert_eq!(Alphabet::new(["a", "a"]), Err(WordsError::DuplicateSymbol("a".into())));
        assert_eq!(Alphabet::new(Vec::<String>::new()), Err(WordsError::EmptyAlphabet));
    }

    #[test]
    fn complexity_of_periodic_word() {
        let w: Word = (0..40).map(|i| i % 2).collect();
        let lang = Language::from_sources(Alphabet::digits(2), [&w], 6);
        assert_eq!(factor_complexity(&lang, 5), Ok(2));
        assert!(lang.violations().is_empty());
        assert!(matches!(factor_complexity(&lang, 7), Err(WordsError::HorizonExceeded { .. })));
    }

    #[test]
    fn two_block_recoding() {
        let lang = Language::from_sources(Alphabet::digits(2), [&pd_word()], 4);
        let kb = kblock_present(&lang, 2).unwrap();
        assert_eq!(kb.alphabet.symbols(), ["00", "01", "10"]);
        let w = Alphabet::digits(2).parse_word("01000").unwrap();
        let coded = apply_block_code(&kb.forward, &w).unwrap();
        let names: Vec<&str> = coded.iter().map(|&c| kb.alphabet.symbol(c)).collect();
        assert_eq!(names, ["01", "10", "00", "00"]);
        assert_eq!(kb.decode_word(&coded), Some(w));
    }

    #[test]
    fn one_block_is_identity() {
        let lang = Language::from_sources(Alphabet::digits(2), [&pd_word()], 4);
        let kb = kblock_present(&lang, 1).unwrap();
        for n in 1..=4 {
            let orig: Vec<&Word> = lang.words(n).unwrap().iter().collect();
            let recoded: Vec<&Word> = kb.language.words(n).unwrap().iter().collect();
            assert_eq!(orig, recoded);
        }
    }

    #[test]
    fn radius_codes() {
        let id = BlockCode::with_radius(0, [(vec![0], 0), (vec![1], 1)].into(), Alphabet::digits(2));
        assert_eq!(apply_block_code(&id, &[0, 1, 0, 0]), Ok(vec![0, 1, 0, 0]));
        let table: BTreeMap<Word, Letter> = (0..8).map(|i| (vec![i >> 2 & 1, i >> 1 & 1, i & 1], i >> 1 & 1)).collect();
        let mid = BlockCode::with_radius(1, table, Alphabet::digits(2));
        assert_eq!(apply_block_code(&mid, &[0, 1, 0]), Ok(vec![1]));
        assert_eq!(apply_block_code(&mid, &[0, 1]), Err(WordsError::WordTooShort { len: 2, window: 3 }));
    }

    #[test]
    fn clopen_normalization_and_overlap() {
        let lang = Language::from_sources(Alphabet::digits(2), [&pd_word()], 4);
        let u = ClopenSet::new([Cylinder::new(vec![], vec![1]), Cylinder::new(vec![0], vec![0, 0])], &lang).unwrap();
        assert_eq!(u.past_len(), 1);
        assert_eq!(u.future_len(), 2);
        // [.1] splits into [0.10]; [1.1] and 11 never occur
        assert!(u.cylinders().contains(&Cylinder::new(vec![0], vec![1, 0])));
        let err = ClopenSet::new([Cylinder::new(vec![], vec![0]), Cylinder::new(vec![0], vec![0])], &lang);
        assert!(matches!(err, Err(WordsError::OverlappingCylinders(..))));
    }
}
