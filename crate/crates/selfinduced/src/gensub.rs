//! Generalized substitutions on compact zero-dimensional alphabets, handled
//! through finite resolution trees of clopen partitions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::substitution::Substitution;
use crate::words::SystemHandle;

pub type CellId = usize;

/// Sequence of cells at one resolution.
pub type CellWord = Vec<CellId>;

/// Longest σʲ(a) expanded by `language` and `is_primitive_at_resolution`.
pub const LENGTH_CAP: usize = 1 << 16;

/// Longest search for a return to U in `from_self_induced`.
pub const RETURN_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenSubError {
    #[error("invalid alphabet space: {0}")]
    InvalidSpace(String),
    #[error("unknown cell {0}")]
    UnknownCell(String),
    #[error("no rule covers cell {0}")]
    MissingRule(String),
    #[error("target {target} is coarser than resolution {resolution}")]
    TargetTooCoarse { target: String, resolution: usize },
    #[error("image of cell {cell} is not determined at resolution {resolution}")]
    Undefined { cell: String, resolution: usize },
    #[error("seed {0} does not occur in the language")]
    SeedNotLegal(String),
    #[error("window did not stabilize within {0} iterations")]
    NoStabilization(usize),
    #[error("U meets T(U): {0}")]
    OverlapViolation(String),
    #[error("handle error: {0}")]
    Handle(String),
}

/// Nested cell description: a leaf label or a labelled node with children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellSpec {
    Leaf(String),
    Node {
        label: String,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        limit: bool,
        #[serde(default)]
        children: Vec<CellSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellNode {
    pub label: String,
    pub depth: usize,
    pub parent: Option<CellId>,
    pub children: Vec<CellId>,
    /// Limit cell, displayed as ∞.
    pub limit: bool,
}

/// Resolution tree: depth-m nodes and shallower leaves form the partition P_m.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphabetSpace {
    nodes: Vec<CellNode>,
    by_label: HashMap<String, CellId>,
}

impl AlphabetSpace {
    /// Tree whose root children are `specs`.
    pub fn from_specs(specs: &[CellSpec]) -> Result<Self, GenSubError> {
        let mut space = AlphabetSpace { nodes: Vec::new(), by_label: HashMap::new() };
        space.push("K".into(), None, false)?;
        for s in specs {
            space.add_spec(s, 0)?;
        }
        let leaves = space.nodes.iter().filter(|n| n.children.is_empty()).count();
        if leaves < 2 {
            return Err(GenSubError::InvalidSpace("fewer than two letters".into()));
        }
        for n in &space.nodes {
            if n.children.len() == 1 {
                return Err(GenSubError::InvalidSpace(format!("cell {} has a single child", n.label)));
            }
        }
        Ok(space)
    }

    fn push(&mut self, label: String, parent: Option<CellId>, limit: bool) -> Result<CellId, GenSubError> {
        if self.by_label.contains_key(&label) {
            return Err(GenSubError::InvalidSpace(format!("duplicate cell label {label}")));
        }
        let id = self.nodes.len();
        let depth = parent.map_or(0, |p| self.nodes[p].depth + 1);
        self.nodes.push(CellNode { label: label.clone(), depth, parent, children: Vec::new(), limit });
        if let Some(p) = parent {
            self.nodes[p].children.push(id);
        }
        self.by_label.insert(label, id);
        Ok(id)
    }

    fn add_spec(&mut self, spec: &CellSpec, parent: CellId) -> Result<(), GenSubError> {
        match spec {
            CellSpec::Leaf(l) => {
                self.push(l.clone(), Some(parent), false)?;
            }
            CellSpec::Node { label, limit, children } => {
                let id = self.push(label.clone(), Some(parent), *limit)?;
                for c in children {
                    self.add_spec(c, id)?;
                }
            }
        }
        Ok(())
    }

    /// Finite discrete alphabet.
    pub fn discrete(symbols: &[String]) -> Result<Self, GenSubError> {
        let specs: Vec<CellSpec> = symbols.iter().cloned().map(CellSpec::Leaf).collect();
        Self::from_specs(&specs)
    }

    /// ℕ ∪ {∞} with P_m = {0},…,{m−1},[m,∞]; the deepest tail is the limit cell ∞.
    pub fn compactified_naturals(depth: usize) -> Self {
        fn tail(m: usize, depth: usize) -> CellSpec {
            if m == depth {
                return CellSpec::Node { label: "∞".into(), limit: true, children: Vec::new() };
            }
            CellSpec::Node {
                label: format!("[{m},∞]"),
                limit: true,
                children: vec![CellSpec::Leaf(m.to_string()), tail(m + 1, depth)],
            }
        }
        assert!(depth >= 1, "at least one level");
        let CellSpec::Node { children, .. } = tail(0, depth) else { unreachable!() };
        Self::from_specs(&children).expect("valid tree")
    }

    pub fn root(&self) -> CellId {
        0
    }

    pub fn node(&self, c: CellId) -> &CellNode {
        &self.nodes[c]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn find(&self, label: &str) -> Result<CellId, GenSubError> {
        self.by_label.get(label).copied().ok_or_else(|| GenSubError::UnknownCell(label.into()))
    }

    pub fn label(&self, c: CellId) -> &str {
        &self.nodes[c].label
    }

    /// Display symbol: ∞ for limit cells, the label otherwise.
    pub fn symbol(&self, c: CellId) -> &str {
        if self.nodes[c].limit { "∞" } else { &self.nodes[c].label }
    }

    pub fn depth(&self, c: CellId) -> usize {
        self.nodes[c].depth
    }

    pub fn is_leaf(&self, c: CellId) -> bool {
        self.nodes[c].children.is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// The partition P_m in tree order.
    pub fn cells_at(&self, m: usize) -> Vec<CellId> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(c) = stack.pop() {
            let n = &self.nodes[c];
            if n.depth == m || n.children.is_empty() {
                out.push(c);
            } else {
                stack.extend(n.children.iter().rev());
            }
        }
        out
    }

    pub fn is_cell_at(&self, c: CellId, m: usize) -> bool {
        let n = &self.nodes[c];
        n.depth == m || (n.depth < m && n.children.is_empty())
    }

    /// Cell of P_m containing c, if c is not coarser than P_m.
    pub fn coarsen(&self, mut c: CellId, m: usize) -> Option<CellId> {
        if self.nodes[c].depth < m && !self.nodes[c].children.is_empty() {
            return None;
        }
        while self.nodes[c].depth > m {
            c = self.nodes[c].parent.expect("non-root");
        }
        Some(c)
    }

    pub fn ancestors(&self, c: CellId) -> impl Iterator<Item = CellId> + '_ {
        std::iter::successors(self.nodes[c].parent, move |&p| self.nodes[p].parent)
    }

    /// Leaves inside the cell.
    pub fn leaves_under(&self, c: CellId) -> Vec<CellId> {
        let mut out = Vec::new();
        let mut stack = vec![c];
        while let Some(x) = stack.pop() {
            if self.nodes[x].children.is_empty() {
                out.push(x);
            } else {
                stack.extend(self.nodes[x].children.iter().rev());
            }
        }
        out
    }

    /// Depth of the deepest common cell; None when a = b.
    pub fn separation_depth(&self, a: CellId, b: CellId) -> Option<usize> {
        if a == b {
            return None;
        }
        let chain = |c: CellId| {
            let mut v: Vec<CellId> = self.ancestors(c).collect();
            v.reverse();
            v.push(c);
            v
        };
        let (ca, cb) = (chain(a), chain(b));
        Some(ca.iter().zip(&cb).take_while(|(x, y)| x == y).count() - 1)
    }

    /// Smallest cell containing every given cell.
    pub fn common_cell(&self, cells: &[CellId]) -> CellId {
        let chain = |c: CellId| {
            let mut v: Vec<CellId> = self.ancestors(c).collect();
            v.reverse();
            v.push(c);
            v
        };
        let mut common = chain(cells[0]);
        for &c in &cells[1..] {
            let other = chain(c);
            let keep = common.iter().zip(&other).take_while(|(x, y)| x == y).count();
            common.truncate(keep);
        }
        *common.last().expect("root is common")
    }

    /// d(a, b) = 2^{−depth of the deepest common cell}.
    pub fn distance(&self, a: CellId, b: CellId) -> f64 {
        self.separation_depth(a, b).map_or(0.0, |d| 0.5f64.powi(d as i32))
    }

    pub fn render(&self, w: &[CellId]) -> String {
        let syms: Vec<&str> = w.iter().map(|&c| self.symbol(c)).collect();
        if syms.iter().all(|s| s.chars().count() == 1) { syms.concat() } else { syms.join(" ") }
    }
}

/// Two-sided cell-word; `future` starts at coordinate 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TwoSidedCellWord {
    pub past: CellWord,
    pub future: CellWord,
}

impl TwoSidedCellWord {
    pub fn new(past: CellWord, future: CellWord) -> Self {
        TwoSidedCellWord { past, future }
    }

    pub fn cells(&self) -> CellWord {
        [self.past.as_slice(), &self.future].concat()
    }

    pub fn render(&self, space: &AlphabetSpace) -> String {
        format!("{}.{}", space.render(&self.past), space.render(&self.future))
    }
}

/// σ : K → K⁺ given by rules on cells of a resolution tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneralizedSubstitution {
    space: AlphabetSpace,
    rules: BTreeMap<CellId, CellWord>,
    resolution: usize,
}

impl GeneralizedSubstitution {
    /// Rules apply to the whole cell they are attached to.
    pub fn new(space: AlphabetSpace, rules: BTreeMap<CellId, CellWord>, resolution: usize) -> Result<Self, GenSubError> {
        for (&c, targets) in &rules {
            if c >= space.len() || targets.iter().any(|&t| t >= space.len()) {
                return Err(GenSubError::UnknownCell(format!("#{c}")));
            }
            if targets.is_empty() {
                return Err(GenSubError::InvalidSpace(format!("empty image for {}", space.label(c))));
            }
        }
        let g = GeneralizedSubstitution { space, rules, resolution };
        for leaf in g.space.leaves_under(0) {
            if g.rule_for(leaf).is_none() {
                return Err(GenSubError::MissingRule(g.space.label(leaf).into()));
            }
        }
        Ok(g)
    }

    pub fn from_labels(space: AlphabetSpace, rules: &BTreeMap<String, Vec<String>>, resolution: usize) -> Result<Self, GenSubError> {
        let mut r = BTreeMap::new();
        for (c, ts) in rules {
            let targets = ts.iter().map(|t| space.find(t)).collect::<Result<Vec<_>, _>>()?;
            r.insert(space.find(c)?, targets);
        }
        Self::new(space, r, resolution)
    }

    /// ξ : j ↦ 0(j+1), ∞ ↦ 0∞, declared at resolution n on a tree of depth n+1.
    pub fn xi(n: usize) -> Self {
        let space = AlphabetSpace::compactified_naturals(n + 1);
        let zero = space.find("0").expect("cell 0");
        let inf = space.find("∞").expect("limit cell");
        let mut rules = BTreeMap::new();
        for j in 0..=n {
            let next = if j < n { space.find(&(j + 1).to_string()).expect("cell") } else { inf };
            rules.insert(space.find(&j.to_string()).expect("cell"), vec![zero, next]);
        }
        rules.insert(inf, vec![zero, inf]);
        Self::new(space, rules, n).expect("valid rules")
    }

    /// A substitution on a finite alphabet viewed as a generalized substitution.
    pub fn from_substitution(s: &Substitution) -> Self {
        let space = AlphabetSpace::discrete(s.alphabet().symbols()).expect("two letters");
        let id = |a: usize| space.find(s.alphabet().symbol(a)).expect("letter cell");
        let rules = (0..s.alphabet().len()).map(|a| (id(a), s.image(a).iter().map(|&b| id(b)).collect())).collect();
        Self::new(space, rules, 1).expect("valid rules")
    }

    pub fn space(&self) -> &AlphabetSpace {
        &self.space
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn rules(&self) -> &BTreeMap<CellId, CellWord> {
        &self.rules
    }

    /// Own rule, or the rule of the nearest ruled ancestor.
    fn rule_for(&self, c: CellId) -> Option<&CellWord> {
        self.rules.get(&c).or_else(|| self.space.ancestors(c).find_map(|a| self.rules.get(&a)))
    }

    fn coarsen_target(&self, t: CellId, m: usize) -> Result<CellId, GenSubError> {
        self.space
            .coarsen(t, m)
            .ok_or_else(|| GenSubError::TargetTooCoarse { target: self.space.label(t).into(), resolution: m })
    }

    /// Cellwise image σ(c) at resolution m.
    pub fn image(&self, c: CellId, m: usize) -> Result<CellWord, GenSubError> {
        if let Some(r) = self.rule_for(c) {
            return r.iter().map(|&t| self.coarsen_target(t, m)).collect();
        }
        let children = &self.space.node(c).children;
        let mut it = children.iter();
        let first = self.image(*it.next().expect("unruled cells have children"), m)?;
        for &ch in it {
            if self.image(ch, m)? != first {
                return Err(GenSubError::Undefined { cell: self.space.label(c).into(), resolution: m });
            }
        }
        Ok(first)
    }

    /// Cellwise image of a word.
    pub fn apply(&self, w: &[CellId], m: usize) -> Result<CellWord, GenSubError> {
        let mut out = Vec::new();
        for &c in w {
            out.extend(self.image(c, m)?);
        }
        Ok(out)
    }

    pub fn iterate(&self, w: &[CellId], k: usize, m: usize) -> Result<CellWord, GenSubError> {
        let mut cur = w.to_vec();
        for _ in 0..k {
            cur = self.apply(&cur, m)?;
        }
        Ok(cur)
    }

    /// σᵏ on the finest cells, declared at the same resolution.
    pub fn power(&self, k: usize) -> Result<Self, GenSubError> {
        let finest = self.space.max_depth();
        let mut rules = BTreeMap::new();
        for leaf in self.space.leaves_under(0) {
            rules.insert(leaf, self.iterate(&[leaf], k, finest)?);
        }
        Self::new(self.space.clone(), rules, self.resolution)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ContinuityViolation {
    LengthNotConstant { cell: String, lengths: Vec<usize> },
    LetterMapInconsistent { cell: String, resolution: usize },
    Undefined(String),
}

impl fmt::Display for ContinuityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContinuityViolation::LengthNotConstant { cell, lengths } => {
                write!(f, "length not constant on cell {cell}: {lengths:?}")
            }
            ContinuityViolation::LetterMapInconsistent { cell, resolution } => {
                write!(f, "letter maps disagree inside cell {cell} at resolution {resolution}")
            }
            ContinuityViolation::Undefined(m) => write!(f, "{m}"),
        }
    }
}

/// Length constancy on the cells of the declared resolution and letter-map consistency one step finer.
pub fn validate_continuity(g: &GeneralizedSubstitution) -> Result<(), ContinuityViolation> {
    let sp = g.space();
    let m = g.resolution;
    let finest = sp.max_depth();
    for c in sp.cells_at(m) {
        let mut lengths = BTreeSet::new();
        for leaf in sp.leaves_under(c) {
            let img = g.image(leaf, finest).map_err(|e| ContinuityViolation::Undefined(e.to_string()))?;
            lengths.insert(img.len());
        }
        if lengths.len() > 1 {
            return Err(ContinuityViolation::LengthNotConstant { cell: sp.label(c).into(), lengths: lengths.into_iter().collect() });
        }
        let coarse = g.image(c, m).map_err(|_| ContinuityViolation::LetterMapInconsistent { cell: sp.label(c).into(), resolution: m })?;
        for &ch in &sp.node(c).children {
            let fine = g.image(ch, m + 1).map_err(|_| ContinuityViolation::LetterMapInconsistent { cell: sp.label(ch).into(), resolution: m + 1 })?;
            let back: Option<Vec<CellId>> = fine.iter().map(|&t| sp.coarsen(t, m)).collect();
            if back.as_ref() != Some(&coarse) {
                return Err(ContinuityViolation::LetterMapInconsistent { cell: sp.label(c).into(), resolution: m + 1 });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Exponent {
    Exact(usize),
    Unknown,
}

/// For each cell V of P_m, the least j such that σᵏ(a) meets V for every letter a and j ≤ k ≤ bound.
pub fn is_primitive_at_resolution(g: &GeneralizedSubstitution, m: usize, bound: usize) -> Result<Vec<(CellId, Exponent)>, GenSubError> {
    let sp = g.space();
    let finest = sp.max_depth();
    let leaves = sp.leaves_under(0);
    let images: HashMap<CellId, BTreeSet<CellId>> =
        leaves.iter().map(|&l| Ok((l, g.image(l, finest)?.into_iter().collect()))).collect::<Result<_, GenSubError>>()?;
    let cells = sp.cells_at(m);
    // hits[k][v]: every letter's σᵏ meets cell v
    let mut meets_all = vec![vec![true; cells.len()]; bound + 1];
    for &a in &leaves {
        let mut set: BTreeSet<CellId> = [a].into();
        for row in meets_all.iter_mut().skip(1) {
            set = set.iter().flat_map(|c| images[c].iter().copied()).collect();
            let coarse: BTreeSet<CellId> = set.iter().filter_map(|&c| sp.coarsen(c, m)).collect();
            for (i, v) in cells.iter().enumerate() {
                row[i] &= coarse.contains(v);
            }
        }
        meets_all[0].iter_mut().enumerate().for_each(|(i, x)| *x &= sp.coarsen(a, m) == Some(cells[i]));
    }
    Ok(cells
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let j = (1..=bound).find(|&j| (j..=bound).all(|k| meets_all[k][i]));
            (v, j.map_or(Exponent::Unknown, Exponent::Exact))
        })
        .collect())
}

/// Words admitted into the language with the iteration range that was expanded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LanguageReport {
    pub words: BTreeSet<CellWord>,
    /// Largest j for which σʲ(a) was expanded.
    pub expanded: usize,
}

/// Length-n cell-words at resolution m that occur in σʲ(a) for a terminal run of at least three j ≤ bound.
pub fn language(g: &GeneralizedSubstitution, a: CellId, n: usize, m: usize, bound: usize) -> Result<LanguageReport, GenSubError> {
    let sp = g.space();
    let start = sp.coarsen(a, m).ok_or_else(|| GenSubError::TargetTooCoarse { target: sp.label(a).into(), resolution: m })?;
    let mut w = vec![start];
    let mut seen: BTreeMap<CellWord, Vec<usize>> = BTreeMap::new();
    let mut expanded = 0;
    for j in 0..=bound {
        if j > 0 {
            let next = g.apply(&w, m)?;
            if next.len() > LENGTH_CAP {
                break;
            }
            w = next;
        }
        expanded = j;
        let factors: BTreeSet<&[CellId]> = if n == 0 { [&w[..0]].into() } else { w.windows(n).collect() };
        for f in factors {
            seen.entry(f.to_vec()).or_default().push(j);
        }
    }
    let words = seen
        .into_iter()
        .filter(|(_, js)| {
            let run = js.iter().rev().zip((0..=expanded).rev()).take_while(|(a, b)| **a == *b).count();
            run >= 3
        })
        .map(|(w, _)| w)
        .collect();
    Ok(LanguageReport { words, expanded })
}

fn occurs_pair(g: &GeneralizedSubstitution, b: CellId, c: CellId, m: usize, bound: usize) -> Result<bool, GenSubError> {
    for a in g.space().cells_at(m) {
        let mut w = vec![a];
        for _ in 0..bound {
            w = g.apply(&w, m)?;
            if w.windows(2).any(|p| p == [b, c]) {
                return Ok(true);
            }
            if w.len() > LENGTH_CAP {
                break;
            }
        }
    }
    Ok(false)
}

/// Stabilized window of the ω-limit point seeded by x₋₁ = b, x₀ = c.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OmegaWindow {
    pub window: TwoSidedCellWord,
    /// Iterations of σ^power until three consecutive windows agreed.
    pub iterations: usize,
    pub power: usize,
}

/// Iterate the two-sided extension from the seed b.c until [−radius, radius) is cell-stable.
pub fn omega_fixed_point(g: &GeneralizedSubstitution, b: CellId, c: CellId, radius: usize, iters: usize) -> Result<OmegaWindow, GenSubError> {
    let sp = g.space();
    let m = g.resolution;
    let coarse = |x: CellId| sp.coarsen(x, m).ok_or_else(|| GenSubError::TargetTooCoarse { target: sp.label(x).into(), resolution: m });
    let (b, c) = (coarse(b)?, coarse(c)?);
    if !occurs_pair(g, b, c, m, 16)? {
        return Err(GenSubError::SeedNotLegal(format!("{}.{}", sp.symbol(b), sp.symbol(c))));
    }
    let mut past = vec![b];
    let mut future = vec![c];
    let mut history: Vec<TwoSidedCellWord> = Vec::new();
    let window = |p: &[CellId], f: &[CellId]| {
        TwoSidedCellWord::new(p[p.len().saturating_sub(radius)..].to_vec(), f[..f.len().min(radius)].to_vec())
    };
    for k in 1..=iters {
        let p = g.apply(&past, m)?;
        past = p[p.len().saturating_sub(radius)..].to_vec();
        let f = g.apply(&future, m)?;
        future = f[..f.len().min(radius)].to_vec();
        history.push(window(&past, &future));
        let full = past.len() == radius && future.len() == radius;
        for power in 1..=2 {
            if full && k > 2 * power && (1..=2).all(|i| history[k - 1] == history[k - 1 - i * power]) {
                return Ok(OmegaWindow { window: history[k - 1].clone(), iterations: k, power });
            }
        }
    }
    Err(GenSubError::NoStabilization(iters))
}

/// Cuts (relative to the origin) and the letter of each full block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Tiling {
    pub cuts: Vec<i64>,
    pub letters: CellWord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Decomposition {
    /// Blocks starting before the origin form the past of the preimage; each letter is
    /// the smallest cell containing all preimages of its block.
    Unique { cuts: Vec<i64>, preimage: TwoSidedCellWord },
    NotUnique { first: Tiling, second: Tiling },
    Inconclusive,
}

/// All decompositions of w into σ-blocks at the declared resolution.
pub fn recognizability_decompose(g: &GeneralizedSubstitution, w: &TwoSidedCellWord) -> Result<Decomposition, GenSubError> {
    let m = g.resolution;
    let sp = g.space();
    let mut blocks: BTreeMap<CellWord, Vec<CellId>> = BTreeMap::new();
    for c in sp.cells_at(m) {
        blocks.entry(g.image(c, m)?).or_default().push(c);
    }
    let cells = w.cells();
    let origin = w.past.len() as i64;
    let n = cells.len();
    let proper_suffix = |seg: &[CellId]| seg.is_empty() || blocks.keys().any(|b| b.len() > seg.len() && b.ends_with(seg));
    let proper_prefix = |seg: &[CellId]| seg.is_empty() || blocks.keys().any(|b| b.len() > seg.len() && b.starts_with(seg));
    // tilings as cut lists with letter options per full block
    let mut found: Vec<(Vec<usize>, Vec<Vec<CellId>>)> = Vec::new();
    let max_block = blocks.keys().map(Vec::len).max().unwrap_or(1);
    for first in 0..max_block.min(n + 1) {
        if !proper_suffix(&cells[..first]) {
            continue;
        }
        let mut stack: Vec<(Vec<usize>, Vec<Vec<CellId>>)> = vec![(vec![first], Vec::new())];
        while let Some((cuts, letters)) = stack.pop() {
            let pos = *cuts.last().expect("non-empty");
            if proper_prefix(&cells[pos..]) {
                found.push((cuts.clone(), letters.clone()));
            }
            for (b, ls) in &blocks {
                if pos + b.len() <= n && cells[pos..pos + b.len()] == b[..] {
                    let mut c2 = cuts.clone();
                    c2.push(pos + b.len());
                    let mut l2 = letters.clone();
                    l2.push(ls.clone());
                    stack.push((c2, l2));
                }
            }
        }
    }
    found.retain(|(_, letters)| !letters.is_empty());
    found.sort();
    found.dedup();
    let to_tiling = |cuts: &[usize], letters: Vec<CellId>| Tiling { cuts: cuts.iter().map(|&c| c as i64 - origin).collect(), letters };
    match found.len() {
        0 => Ok(Decomposition::Inconclusive),
        1 => {
            let (cuts, letters) = &found[0];
            let root = sp.root();
            if let Some(i) = letters.iter().position(|ls| ls.len() > 1 && sp.common_cell(ls) == root) {
                let base: Vec<CellId> = letters.iter().map(|ls| ls[0]).collect();
                let mut alt = base.clone();
                alt[i] = letters[i][1];
                return Ok(Decomposition::NotUnique { first: to_tiling(cuts, base), second: to_tiling(cuts, alt) });
            }
            let cuts_rel: Vec<i64> = cuts.iter().map(|&c| c as i64 - origin).collect();
            let (mut past, mut future) = (Vec::new(), Vec::new());
            for (start, ls) in cuts_rel.iter().zip(letters) {
                let c = sp.common_cell(ls);
                if *start < 0 { past.push(c) } else { future.push(c) }
            }
            Ok(Decomposition::Unique { cuts: cuts_rel, preimage: TwoSidedCellWord::new(past, future) })
        }
        _ => {
            let pick = |i: usize| to_tiling(&found[i].0, found[i].1.iter().map(|ls| ls[0]).collect());
            Ok(Decomposition::NotUnique { first: pick(0), second: pick(1) })
        }
    }
}

/// Generalized substitution σ(x) = φ(x) T(φ(x)) … T^{r−1}(φ(x)) read off a handle at a resolution.
pub fn from_self_induced<H: SystemHandle>(h: &H, resolution: usize) -> Result<GeneralizedSubstitution, GenSubError> {
    let reps = h.cells(resolution);
    let samples = h.samples(64);
    for y in reps.iter().map(|(_, p)| p).chain(&samples) {
        if h.in_clopen(y) && h.in_clopen(&h.forward(y)) {
            return Err(GenSubError::OverlapViolation(format!("cell {} and its successor both lie in U", h.cell(y, resolution))));
        }
    }
    let mut specs_children: BTreeMap<(usize, String), BTreeSet<String>> = BTreeMap::new();
    let mut parent_of: BTreeMap<(usize, String), String> = BTreeMap::new();
    for (_, p) in &reps {
        for j in 1..=resolution {
            let (lab, up) = (h.cell(p, j), h.cell(p, j - 1));
            if let Some(prev) = parent_of.insert((j, lab.clone()), up.clone()) {
                if prev != up {
                    return Err(GenSubError::InvalidSpace(format!("cell {lab} has two parents")));
                }
            }
            specs_children.entry((j - 1, up)).or_default().insert(lab);
        }
    }
    fn build(level: usize, label: &str, children: &BTreeMap<(usize, String), BTreeSet<String>>, top: usize) -> CellSpec {
        let key = (level, label.to_string());
        match children.get(&key) {
            Some(cs) if level < top && cs.len() > 1 => CellSpec::Node {
                label: format!("{level}:{label}"),
                limit: false,
                children: cs.iter().map(|c| build(level + 1, c, children, top)).collect(),
            },
            Some(cs) if level < top => build(level + 1, cs.iter().next().expect("child"), children, top),
            _ => CellSpec::Leaf(format!("{level}:{label}")),
        }
    }
    let root_label = reps.first().map(|(_, p)| h.cell(p, 0)).ok_or_else(|| GenSubError::Handle("no cells".into()))?;
    let specs = match build(0, &root_label, &specs_children, resolution) {
        CellSpec::Node { children, .. } => children,
        leaf => return Err(GenSubError::InvalidSpace(format!("single cell {leaf:?}"))),
    };
    let space = AlphabetSpace::from_specs(&specs)?;
    let leaf_of = |p: &H::Point| -> Result<CellId, GenSubError> {
        for j in (0..=resolution).rev() {
            if let Ok(id) = space.find(&format!("{j}:{}", h.cell(p, j))) {
                if space.is_leaf(id) {
                    return Ok(id);
                }
            }
        }
        Err(GenSubError::UnknownCell(h.cell(p, resolution)))
    };
    let rule_of = |x: &H::Point| -> Result<CellWord, GenSubError> {
        let y = h.phi(x).ok_or_else(|| GenSubError::Handle("handle exposes no conjugacy".into()))?;
        let r = h.return_time(&y, RETURN_LIMIT).ok_or_else(|| GenSubError::Handle("no return to U".into()))?;
        let mut out = Vec::with_capacity(r);
        let mut z = y;
        for _ in 0..r {
            out.push(leaf_of(&z)?);
            z = h.forward(&z);
        }
        Ok(out)
    };
    let mut rules: BTreeMap<CellId, CellWord> = BTreeMap::new();
    for (_, p) in &reps {
        rules.insert(leaf_of(p)?, rule_of(p)?);
    }
    for x in &samples {
        let c = leaf_of(x)?;
        if rules.get(&c) != Some(&rule_of(x)?) {
            return Err(GenSubError::Handle(format!("σ is not constant on cell {} at resolution {resolution}", space.label(c))));
        }
    }
    GeneralizedSubstitution::new(space, rules, resolution)
}

/// Outcome of comparing σᵏ by iteration with the orbit of φᵏ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PowerFormulaReport {
    pub n: usize,
    pub samples: usize,
    /// k ↦ observed return times of φᵏ(x) to φᵏ(X).
    pub return_times: BTreeMap<usize, BTreeSet<usize>>,
    pub failures: Vec<String>,
}

impl PowerFormulaReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Check σᵏ(x) = φᵏ(x) T(φᵏ(x)) … for 1 ≤ k ≤ n, cellwise at `resolution`.
pub fn verify_power_formula<H: SystemHandle>(h: &H, n: usize, samples: usize, resolution: usize) -> Result<PowerFormulaReport, GenSubError> {
    let phi = |x: &H::Point| h.phi(x).ok_or_else(|| GenSubError::Handle("handle exposes no conjugacy".into()));
    let sigma = |x: &H::Point| -> Result<Vec<H::Point>, GenSubError> {
        let y = phi(x)?;
        let r = h.return_time(&y, RETURN_LIMIT).ok_or_else(|| GenSubError::Handle("no return to U".into()))?;
        Ok(std::iter::successors(Some(y), |z| Some(h.forward(z))).take(r).collect())
    };
    let mut report = PowerFormulaReport { n, samples, return_times: BTreeMap::new(), failures: Vec::new() };
    for (si, x) in h.samples(samples).iter().enumerate() {
        let mut word = vec![x.clone()];
        let mut y = x.clone();
        for k in 1..=n {
            let mut next = Vec::new();
            for p in &word {
                next.extend(sigma(p)?);
            }
            word = next;
            y = phi(&y)?;
            let mut orbit = vec![y.clone()];
            let mut z = h.forward(&y);
            loop {
                match h.in_phi_image(&z, k) {
                    Some(true) => break,
                    Some(false) => {}
                    None => return Err(GenSubError::Handle(format!("membership in φ^{k}(X) is not decidable"))),
                }
                if orbit.len() > RETURN_LIMIT {
                    return Err(GenSubError::Handle("no return to φᵏ(X)".into()));
                }
                orbit.push(z.clone());
                z = h.forward(&z);
            }
            report.return_times.entry(k).or_default().insert(orbit.len());
            let lhs: Vec<String> = word.iter().map(|p| h.cell(p, resolution)).collect();
            let rhs: Vec<String> = orbit.iter().map(|p| h.cell(p, resolution)).collect();
            if lhs != rhs {
                report.failures.push(format!("sample {si}, k = {k}: σᵏ(x) has {} letters, orbit has {}", lhs.len(), rhs.len()));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(g: &GeneralizedSubstitution, l: &str) -> CellId {
        g.space().find(l).unwrap()
    }

    #[test]
    fn xi_is_continuous() {
        let g = GeneralizedSubstitution::xi(8);
        assert_eq!(validate_continuity(&g), Ok(()));
        let t = cell(&g, "[8,∞]");
        assert_eq!(g.image(t, 8).unwrap(), vec![cell(&g, "0"), t]);
        assert_eq!(g.image(cell(&g, "7"), 8).unwrap(), vec![cell(&g, "0"), t]);
    }

    #[test]
    fn parity_lengths_are_discontinuous() {
        let n = 8;
        let space = AlphabetSpace::compactified_naturals(n + 1);
        let zero = space.find("0").unwrap();
        let mut rules = BTreeMap::new();
        for j in 0..=n {
            rules.insert(space.find(&j.to_string()).unwrap(), vec![zero; 1 + j % 2]);
        }
        rules.insert(space.find("∞").unwrap(), vec![zero; 1 + (n + 1) % 2]);
        let g = GeneralizedSubstitution::new(space, rules, n).unwrap();
        assert!(matches!(validate_continuity(&g), Err(ContinuityViolation::LengthNotConstant { .. })));
    }

    #[test]
    fn discrete_is_continuous() {
        assert_eq!(validate_continuity(&GeneralizedSubstitution::from_substitution(&Substitution::thue_morse())), Ok(()));
    }

    #[test]
    fn xi_exponents() {
        let g = GeneralizedSubstitution::xi(8);
        let table = is_primitive_at_resolution(&g, 8, 12).unwrap();
        for (c, e) in &table {
            let l = g.space().label(*c);
            match l.parse::<usize>() {
                Ok(m) => assert_eq!(*e, Exponent::Exact(m + 1), "cell {l}"),
                Err(_) => assert_eq!(*e, Exponent::Exact(8)),
            }
        }
        let root = is_primitive_at_resolution(&g, 0, 3).unwrap();
        assert_eq!(root, vec![(0, Exponent::Exact(1))]);
        let sep = Substitution::parse(&["a", "b"], &["aa", "bb"]).unwrap();
        let table = is_primitive_at_resolution(&GeneralizedSubstitution::from_substitution(&sep), 1, 20).unwrap();
        assert!(table.iter().all(|(_, e)| *e == Exponent::Unknown));
    }

    #[test]
    fn xi_language_contains_limit_word() {
        let g = GeneralizedSubstitution::xi(8);
        let lang = language(&g, cell(&g, "0"), 2, 8, 12).unwrap();
        assert!(lang.words.contains(&vec![cell(&g, "[8,∞]"), cell(&g, "0")]));
        let l1 = language(&g, cell(&g, "0"), 1, 8, 12).unwrap();
        assert_eq!(l1.words.len(), g.space().cells_at(8).len());
    }

    #[test]
    fn xi_omega_window() {
        let g = GeneralizedSubstitution::xi(8);
        let w = omega_fixed_point(&g, cell(&g, "0"), cell(&g, "1"), 8, 40).unwrap();
        assert_eq!(w.window.render(g.space()), "0102010∞.01020103");
        let w2 = omega_fixed_point(&g, cell(&g, "0"), cell(&g, "1"), 2, 40).unwrap();
        assert_eq!(w2.window.render(g.space()), "0∞.01");
    }

    #[test]
    fn xi_decomposition() {
        let g = GeneralizedSubstitution::xi(8);
        let c = |l: &str| cell(&g, l);
        let w = TwoSidedCellWord::new(vec![c("0"), c("1"), c("0"), c("2")], vec![c("0"), c("1"), c("0"), c("3")]);
        match recognizability_decompose(&g, &w).unwrap() {
            Decomposition::Unique { cuts, preimage } => {
                assert_eq!(cuts, vec![-4, -2, 0, 2, 4]);
                assert_eq!(g.space().render(&preimage.cells()), "0102");
                assert_eq!(preimage.render(g.space()), "01.02");
            }
            other => panic!("{other:?}"),
        }
        let omega = omega_fixed_point(&g, c("0"), c("1"), 8, 40).unwrap().window;
        match recognizability_decompose(&g, &omega).unwrap() {
            Decomposition::Unique { cuts, preimage } => {
                assert_eq!(cuts, vec![-8, -6, -4, -2, 0, 2, 4, 6, 8]);
                assert_eq!(preimage.past[3], c("[7,∞]"));
            }
            other => panic!("{other:?}"),
        }
        let single = TwoSidedCellWord::new(vec![], vec![c("0")]);
        assert_eq!(recognizability_decompose(&g, &single).unwrap(), Decomposition::Inconclusive);
        let ab = GeneralizedSubstitution::from_substitution(&Substitution::parse(&["a", "b"], &["ab", "ab"]).unwrap());
        let a = ab.space().find("a").unwrap();
        let b = ab.space().find("b").unwrap();
        let win = TwoSidedCellWord::new(vec![a, b], vec![a, b]);
        assert!(matches!(recognizability_decompose(&ab, &win).unwrap(), Decomposition::NotUnique { .. }));
    }
    fn two_adic_label(z: u64, m: usize) -> String {
        (0..m).map(|i| ((z >> i) & 1).to_string()).collect()
    }

    #[test]
    fn two_adic_handle_gives_doubling_rule() {
        let h = crate::odometer::PAdicHandle::new(2, 32).unwrap();
        let m = 3;
        let g = from_self_induced(&h, m).unwrap();
        assert_eq!(validate_continuity(&g), Ok(()));
        let sp = g.space();
        for z in 0..8u64 {
            let c = sp.find(&format!("{m}:{}", two_adic_label(z, m))).unwrap();
            let img: Vec<&str> = g.image(c, m).unwrap().iter().map(|&t| sp.label(t)).collect();
            let want = [format!("{m}:{}", two_adic_label(2 * z % 8, m)), format!("{m}:{}", two_adic_label((2 * z + 1) % 8, m))];
            assert_eq!(img, want.iter().map(String::as_str).collect::<Vec<_>>());
        }
    }

    #[test]
    fn period_doubling_handle_matches_substitution() {
        let s = Substitution::period_doubling();
        let h = crate::substitution::SubstitutionSystem::new(&s, 3).unwrap();
        let m = 2;
        let g = from_self_induced(&h, m).unwrap();
        let sp = g.space();
        for (label, _) in h.cells(m) {
            let cells: Vec<char> = label.chars().filter(|&ch| ch != '.').collect();
            let w: Vec<usize> = cells.iter().map(|ch| s.alphabet().index(&ch.to_string()).unwrap()).collect();
            let img = s.apply(&w);
            let render = |lo: usize| format!("{m}:{}.{}", s.render(&img[lo..lo + m]), s.render(&img[lo + m..lo + 2 * m]));
            let c = sp.find(&format!("{m}:{label}")).unwrap();
            let got: Vec<&str> = g.image(c, m).unwrap().iter().map(|&t| sp.label(t)).collect();
            assert_eq!(got, vec![render(m), render(m + 1)]);
        }
    }

    struct WholeSpace(crate::odometer::PAdicHandle);

    impl SystemHandle for WholeSpace {
        type Point = crate::odometer::OdometerPoint;
        fn depth(&self) -> usize {
            self.0.depth()
        }
        fn symbol(&self, p: &Self::Point, i: i64) -> String {
            self.0.symbol(p, i)
        }
        fn forward(&self, p: &Self::Point) -> Self::Point {
            self.0.forward(p)
        }
        fn backward(&self, p: &Self::Point) -> Self::Point {
            self.0.backward(p)
        }
        fn in_clopen(&self, _p: &Self::Point) -> bool {
            true
        }
        fn phi(&self, p: &Self::Point) -> Option<Self::Point> {
            Some(p.clone())
        }
        fn cell(&self, p: &Self::Point, resolution: usize) -> String {
            self.0.cell(p, resolution)
        }
        fn cells(&self, resolution: usize) -> Vec<(String, Self::Point)> {
            self.0.cells(resolution)
        }
        fn samples(&self, count: usize) -> Vec<Self::Point> {
            self.0.samples(count)
        }
    }

    #[test]
    fn whole_space_overlaps() {
        let h = WholeSpace(crate::odometer::PAdicHandle::new(2, 16).unwrap());
        assert!(matches!(from_self_induced(&h, 2), Err(GenSubError::OverlapViolation(_))));
    }

    #[test]
    fn power_formula_on_handles() {
        let h = crate::odometer::PAdicHandle::new(2, 32).unwrap();
        let r = verify_power_formula(&h, 2, 10, 6).unwrap();
        assert!(r.passed(), "{:?}", r.failures);
        assert_eq!(r.return_times[&2], [4].into());
        let s = Substitution::period_doubling();
        let h = crate::substitution::SubstitutionSystem::new(&s, 3).unwrap();
        let r = verify_power_formula(&h, 3, 10, 3).unwrap();
        assert!(r.passed(), "{:?}", r.failures);
        assert_eq!(r.return_times[&3], [8].into());
    }
}
