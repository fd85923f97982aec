//! Ordered Bratteli diagrams: validation, simplicity, proper orders, the
//! Vershik map, contraction and microscoping, induction on path sets,
//! stationary measures with the Kac identity, and ordered-graph embeddings.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, IntMatrix};
use crate::scalar::{from_usize, Scalar};
use crate::substitution::{is_primitive, Substitution};
use crate::words::Letter;

/// Extra levels tried beyond the working level when embedding into a stationary diagram.
pub const MAX_EMBED_EXTENSION: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BratteliError {
    #[error("invalid diagram: {0}")]
    InvalidDiagram(String),
    #[error("invalid path prefix: {0}")]
    InvalidPrefix(String),
    #[error("cuts out of range: {0}")]
    CutsOutOfRange(String),
    #[error("split does not compose back to level {0}")]
    SplitDoesNotCompose(usize),
    #[error("vertex {0} of the working level is not covered by the path set")]
    CoverageViolation(usize),
    #[error("diagram is not stationary: {0}")]
    NotStationary(String),
    #[error("diagram is not simple within window {0}")]
    NotSimple(usize),
    #[error("substitution is not primitive")]
    NotPrimitive,
    #[error("clopen set has zero mass")]
    ZeroMassClopen,
    #[error("left side of the graph does not match: {0}")]
    LeftSideMismatch(String),
    #[error("working range exhausted: {0}")]
    DepthExhausted(String),
    #[error("invalid ordered bipartite graph: {0}")]
    InvalidGraph(String),
}

/// Edge from V_{k−1} to V_k with its rank among co-terminal edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub rank: usize,
}

impl Edge {
    pub fn new(source: usize, target: usize, rank: usize) -> Self {
        Edge { source, target, rank }
    }

    fn key(&self) -> (usize, usize) {
        (self.target, self.rank)
    }
}

impl From<[usize; 3]> for Edge {
    fn from(a: [usize; 3]) -> Self {
        Edge::new(a[0], a[1], a[2])
    }
}

impl From<Edge> for [usize; 3] {
    fn from(e: Edge) -> Self {
        [e.source, e.target, e.rank]
    }
}

/// Vertex count of V_k and the edges E_k arriving at it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Level {
    pub vertices: usize,
    pub edges: Vec<Edge>,
}

impl Level {
    pub fn new(vertices: usize, mut edges: Vec<Edge>) -> Self {
        edges.sort_by_key(Edge::key);
        Level { vertices, edges }
    }

    /// Edges into `target`, in rank order (edges must be sorted).
    pub fn in_edges(&self, target: usize) -> &[Edge] {
        let lo = self.edges.partition_point(|e| e.target < target);
        let hi = self.edges.partition_point(|e| e.target <= target);
        &self.edges[lo..hi]
    }

    fn in_offset(&self, target: usize) -> usize {
        self.edges.partition_point(|e| e.target < target)
    }

    /// Index of the edge into `target` with the given rank.
    pub fn edge_index(&self, target: usize, rank: usize) -> Option<usize> {
        let start = self.in_offset(target);
        (rank < self.in_edges(target).len()).then_some(start + rank)
    }

    pub fn matrix(&self, sources: usize) -> IntMatrix {
        let mut m = vec![vec![0u64; self.vertices]; sources];
        for e in &self.edges {
            m[e.source][e.target] += 1;
        }
        m
    }

}

/// Ordered Bratteli diagram; when stationary the last `period` levels repeat forever.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedBratteliDiagram {
    pub stationary: bool,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub period: usize,
    pub levels: Vec<Level>,
}

fn one() -> usize {
    1
}

fn is_one(n: &usize) -> bool {
    *n == 1
}

/// Finite path e_1 … e_n from v_0; entries are edge indices in each level's canonical order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathPrefix {
    pub edges: Vec<usize>,
}

impl PathPrefix {
    pub fn new(edges: Vec<usize>) -> Self {
        PathPrefix { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn extended(&self, e: usize) -> Self {
        let mut edges = self.edges.clone();
        edges.push(e);
        PathPrefix { edges }
    }
}

impl fmt::Display for PathPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.edges.iter().map(usize::to_string).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl OrderedBratteliDiagram {
    /// Validated diagram in canonical form.
    pub fn new(levels: Vec<Level>, stationary: bool, period: usize) -> Result<Self, BratteliError> {
        let d = OrderedBratteliDiagram { stationary, period: if stationary { period } else { 1 }, levels };
        d.checked()
    }

    pub fn finite(levels: Vec<Level>) -> Result<Self, BratteliError> {
        Self::new(levels, false, 1)
    }

    /// Validate a deserialized document and bring it into canonical form.
    pub fn checked(self) -> Result<Self, BratteliError> {
        let violations = validate(&self);
        if !violations.is_empty() {
            return Err(BratteliError::InvalidDiagram(violations.join("; ")));
        }
        Ok(self.canonical())
    }

    /// Sorted edges, minimal period and shortest prefix.
    pub fn canonical(mut self) -> Self {
        for l in &mut self.levels {
            l.edges.sort_by_key(Edge::key);
        }
        if !self.stationary {
            self.period = 1;
            return self;
        }
        let p = self.period;
        let s = self.levels.len() - p;
        if let Some(d) = (1..=p).find(|&d| p % d == 0 && (0..p).all(|i| self.levels[s + i] == self.levels[s + i % d])) {
            self.levels.truncate(s + d);
            self.period = d;
        }
        while self.levels.len() > self.period {
            let n = self.levels.len();
            if self.levels[n - 1 - self.period] != self.levels[n - 1] {
                break;
            }
            self.levels.pop();
        }
        self
    }

    /// Level k ≥ 1, or None beyond a finite diagram.
    pub fn level(&self, k: usize) -> Option<&Level> {
        if k == 0 {
            return None;
        }
        let len = self.levels.len();
        if k <= len {
            return Some(&self.levels[k - 1]);
        }
        if !self.stationary {
            return None;
        }
        let s = len - self.period;
        Some(&self.levels[s + (k - 1 - s) % self.period])
    }

    /// #V_k; V_0 is the root.
    pub fn vertices(&self, k: usize) -> Option<usize> {
        if k == 0 {
            Some(1)
        } else {
            self.level(k).map(|l| l.vertices)
        }
    }

    /// Number of levels, or None when stationary.
    pub fn depth(&self) -> Option<usize> {
        (!self.stationary).then_some(self.levels.len())
    }

    pub fn has_level(&self, k: usize) -> bool {
        k == 0 || self.level(k).is_some()
    }

    /// M(k): entry (u, v) counts edges u ∈ V_{k−1} → v ∈ V_k.
    pub fn matrix(&self, k: usize) -> Option<IntMatrix> {
        Some(self.level(k)?.matrix(self.vertices(k - 1)?))
    }

    /// First level of the repeating template (0-based index into `levels`).
    fn cycle_start(&self) -> usize {
        self.levels.len() - self.period
    }

    pub fn one_vertex(counts: &[u64], period: usize) -> Self {
        one_vertex_diagram(counts, period)
    }

    /// Edge counts and the repeating period (0 when finite) of a one-vertex diagram.
    pub fn one_vertex_counts(&self) -> Option<(Vec<u64>, usize)> {
        if self.levels.iter().any(|l| l.vertices != 1) {
            return None;
        }
        let counts = self.levels.iter().map(|l| l.edges.len() as u64).collect();
        Some((counts, if self.stationary { self.period } else { 0 }))
    }

    /// Reassign ranks into `target` at level k: the edge of rank i gets rank order[i].
    /// Inside the repeating template this changes every repetition.
    pub fn permute_ranks(&self, k: usize, target: usize, order: &[usize]) -> Result<Self, BratteliError> {
        let idx = self.level_index(k)?;
        let mut d = self.clone();
        let level = &mut d.levels[idx];
        let mut seen = vec![false; order.len()];
        for &r in order {
            if r >= order.len() || std::mem::replace(&mut seen[r], true) {
                return Err(BratteliError::InvalidDiagram("rank order is not a permutation".into()));
            }
        }
        for e in level.edges.iter_mut().filter(|e| e.target == target) {
            let new = *order.get(e.rank).ok_or_else(|| BratteliError::InvalidDiagram("rank order too short".into()))?;
            e.rank = new;
        }
        d.checked()
    }

    fn level_index(&self, k: usize) -> Result<usize, BratteliError> {
        if k == 0 || self.level(k).is_none() {
            return Err(BratteliError::CutsOutOfRange(format!("level {k} does not exist")));
        }
        let len = self.levels.len();
        if k <= len {
            return Ok(k - 1);
        }
        let s = self.cycle_start();
        Ok(s + (k - 1 - s) % self.period)
    }

    fn edge(&self, k: usize, idx: usize) -> Option<&Edge> {
        self.level(k)?.edges.get(idx)
    }
}

/// One vertex per level with the given edge counts; `period` > 0 makes the last `period` levels repeat.
pub fn one_vertex_diagram(counts: &[u64], period: usize) -> OrderedBratteliDiagram {
    let levels = counts
        .iter()
        .map(|&c| Level::new(1, (0..c as usize).map(|r| Edge::new(0, 0, r)).collect()))
        .collect();
    OrderedBratteliDiagram::new(levels, period > 0, period.max(1)).expect("one-vertex diagrams are valid")
}

/// Structural violations; empty when the diagram is valid.
pub fn validate(d: &OrderedBratteliDiagram) -> Vec<String> {
    let mut out = Vec::new();
    if d.levels.is_empty() {
        out.push("diagram has no levels".into());
        return out;
    }
    if d.stationary && (d.period == 0 || d.period > d.levels.len()) {
        out.push(format!("period {} does not fit {} levels", d.period, d.levels.len()));
        return out;
    }
    let mut prev = 1usize;
    for (i, l) in d.levels.iter().enumerate() {
        let k = i + 1;
        if l.vertices == 0 {
            out.push(format!("level {k}: no vertices"));
        }
        let mut ranks: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut has_out = vec![false; prev];
        for e in &l.edges {
            if e.source >= prev {
                out.push(format!("level {k}: edge source {} out of range", e.source));
                continue;
            }
            if e.target >= l.vertices {
                out.push(format!("level {k}: edge target {} out of range", e.target));
                continue;
            }
            has_out[e.source] = true;
            ranks.entry(e.target).or_default().push(e.rank);
        }
        for v in 0..l.vertices {
            match ranks.get_mut(&v) {
                None => out.push(format!("level {k} vertex {v}: no incoming edge")),
                Some(rs) => {
                    rs.sort_unstable();
                    if rs.windows(2).any(|w| w[0] == w[1]) {
                        out.push(format!("level {k} vertex {v}: order not total (duplicate rank)"));
                    } else if rs.iter().enumerate().any(|(i, &r)| i != r) {
                        out.push(format!("level {k} vertex {v}: ranks are not 0..m-1"));
                    }
                }
            }
        }
        for (u, ok) in has_out.iter().enumerate() {
            if !ok {
                out.push(format!("level {} vertex {u}: no outgoing edge", k - 1));
            }
        }
        prev = l.vertices;
    }
    if d.stationary {
        let s = d.levels.len() - d.period;
        let before = if s == 0 { 1 } else { d.levels[s - 1].vertices };
        if before != prev {
            out.push("stationary template does not close up".into());
        }
    }
    out
}

/// Every product of `window` consecutive level matrices is entrywise positive.
pub fn is_simple(d: &OrderedBratteliDiagram, window: usize) -> Result<bool, BratteliError> {
    let violations = validate(d);
    if !violations.is_empty() || window == 0 {
        return Err(BratteliError::InvalidDiagram(violations.join("; ")));
    }
    let last_start = if d.stationary {
        d.levels.len() + d.period
    } else if d.levels.len() >= window {
        d.levels.len() + 1 - window
    } else {
        return Ok(true);
    };
    for k in 1..=last_start {
        let mut p = d.matrix(k).expect("level exists");
        for j in 1..window {
            p = linalg::mat_mul(&p, &d.matrix(k + j).expect("level exists"));
        }
        if !linalg::is_positive(&p) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Target vertex at the top of a valid prefix (0 for the empty prefix).
pub fn check_prefix(d: &OrderedBratteliDiagram, p: &PathPrefix) -> Result<usize, BratteliError> {
    let mut v = 0;
    for (i, &idx) in p.edges.iter().enumerate() {
        let k = i + 1;
        let e = d.edge(k, idx).ok_or_else(|| BratteliError::InvalidPrefix(format!("no edge {idx} at level {k}")))?;
        if e.source != v {
            return Err(BratteliError::InvalidPrefix(format!("edge {idx} at level {k} does not start at vertex {v}")));
        }
        v = e.target;
    }
    Ok(v)
}

/// Minimal path from v_0 to vertex v at level k.
pub fn min_path_to(d: &OrderedBratteliDiagram, k: usize, v: usize) -> Vec<usize> {
    extremal_path_to(d, k, v, false)
}

/// Maximal path from v_0 to vertex v at level k.
pub fn max_path_to(d: &OrderedBratteliDiagram, k: usize, v: usize) -> Vec<usize> {
    extremal_path_to(d, k, v, true)
}

fn extremal_path_to(d: &OrderedBratteliDiagram, k: usize, mut v: usize, max: bool) -> Vec<usize> {
    let mut edges = vec![0; k];
    for j in (1..=k).rev() {
        let l = d.level(j).expect("level exists");
        let ins = l.in_edges(v);
        let r = if max { ins.len() - 1 } else { 0 };
        edges[j - 1] = l.in_offset(v) + r;
        v = ins[r].source;
    }
    edges
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VershikOutcome {
    Next(PathPrefix),
    /// Every edge of the prefix is maximal.
    NeedsExtension,
}

/// Vershik successor of a cylinder.
pub fn vershik_step(d: &OrderedBratteliDiagram, p: &PathPrefix) -> Result<VershikOutcome, BratteliError> {
    check_prefix(d, p)?;
    Ok(vershik_step_unchecked(d, p))
}

fn vershik_step_unchecked(d: &OrderedBratteliDiagram, p: &PathPrefix) -> VershikOutcome {
    for (i, &idx) in p.edges.iter().enumerate() {
        let k = i + 1;
        let l = d.level(k).expect("validated prefix");
        let e = l.edges[idx];
        if e.rank + 1 < l.in_edges(e.target).len() {
            let succ = idx + 1;
            let mut edges = min_path_to(d, k - 1, l.edges[succ].source);
            edges.push(succ);
            edges.extend_from_slice(&p.edges[k..]);
            return VershikOutcome::Next(PathPrefix::new(edges));
        }
    }
    VershikOutcome::NeedsExtension
}

/// Result of the proper-order analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ProperOrder {
    /// Unique maximal and minimal paths, given to the certified depth.
    Certified { max: PathPrefix, min: PathPrefix },
    /// Two or more maximal (or minimal) infinite paths.
    NotProper { maximal: bool, witnesses: Vec<PathPrefix> },
    Unknown { depth: usize },
}

fn backward(d: &OrderedBratteliDiagram, k: usize, v: usize, max: bool) -> usize {
    let ins = d.level(k).expect("level exists").in_edges(v);
    if max { ins[ins.len() - 1].source } else { ins[0].source }
}

/// Decide whether the order has unique extremal paths.
pub fn proper_order_certificate(d: &OrderedBratteliDiagram, depth: usize) -> Result<ProperOrder, BratteliError> {
    let violations = validate(d);
    if !violations.is_empty() {
        return Err(BratteliError::InvalidDiagram(violations.join("; ")));
    }
    if d.stationary {
        let s = d.cycle_start();
        let len = d.levels.len();
        let n = d.levels[len - 1].vertices;
        let mut paths = Vec::with_capacity(2);
        for max in [true, false] {
            let f = |mut v: usize| {
                for k in (s + 1..=len).rev() {
                    v = backward(d, k, v, max);
                }
                v
            };
            let periodic: Vec<usize> = (0..n)
                .filter(|&v| {
                    let mut w = f(v);
                    for _ in 0..n {
                        if w == v {
                            return true;
                        }
                        w = f(w);
                    }
                    false
                })
                .collect();
            let mut top = s.max(1);
            while top < depth.max(len) || (top - s) % d.period != 0 {
                top += 1;
            }
            let witnesses: Vec<PathPrefix> = periodic
                .iter()
                .map(|&v| {
                    let mut edges = extremal_path_to(d, top, v, max);
                    edges.truncate(depth.max(len));
                    PathPrefix::new(edges)
                })
                .collect();
            if witnesses.len() != 1 {
                return Ok(ProperOrder::NotProper { maximal: max, witnesses });
            }
            let mut p = witnesses.into_iter().next().expect("one witness");
            p.edges.truncate(depth);
            paths.push(p);
        }
        let min = paths.pop().expect("min path");
        let max = paths.pop().expect("max path");
        return Ok(ProperOrder::Certified { max, min });
    }
    let top = depth.min(d.levels.len());
    let mut prefixes = Vec::with_capacity(2);
    for max in [true, false] {
        let mut set: BTreeSet<usize> = (0..d.levels[top.max(1) - 1].vertices).collect();
        let mut collapsed_from = None;
        for k in (1..=top).rev() {
            if set.len() == 1 && collapsed_from.is_none() {
                collapsed_from = Some(k);
            }
            set = set.iter().map(|&v| backward(d, k, v, max)).collect();
        }
        match collapsed_from {
            Some(k) => {
                let v = {
                    let mut set: BTreeSet<usize> = (0..d.levels[top - 1].vertices).collect();
                    for j in (k + 1..=top).rev() {
                        set = set.iter().map(|&v| backward(d, j, v, max)).collect();
                    }
                    *set.iter().next().expect("collapsed")
                };
                prefixes.push(PathPrefix::new(extremal_path_to(d, k, v, max)));
            }
            None => return Ok(ProperOrder::Unknown { depth: top }),
        }
    }
    let min = prefixes.pop().expect("min");
    let max = prefixes.pop().expect("max");
    Ok(ProperOrder::Certified { max, min })
}

/// Compose consecutive levels into one level of paths, ordered from the top edge down.
pub fn compose_levels(levels: &[&Level]) -> Level {
    let first = levels[0];
    let mut lists: Vec<Vec<usize>> = (0..first.vertices).map(|v| first.in_edges(v).iter().map(|e| e.source).collect()).collect();
    for l in &levels[1..] {
        lists = (0..l.vertices)
            .map(|v| l.in_edges(v).iter().flat_map(|e| lists[e.source].iter().copied()).collect())
            .collect();
    }
    let edges = lists
        .iter()
        .enumerate()
        .flat_map(|(t, srcs)| srcs.iter().enumerate().map(move |(r, &s)| Edge::new(s, t, r)))
        .collect();
    Level::new(levels.last().expect("non-empty").vertices, edges)
}

fn block(d: &OrderedBratteliDiagram, a: usize, b: usize) -> Level {
    let ls: Vec<&Level> = (a + 1..=b).map(|k| d.level(k).expect("level exists")).collect();
    compose_levels(&ls)
}

/// Contraction along cuts 0 = m_0 < m_1 < …; stationary diagrams continue with the last gap.
pub fn contract(d: &OrderedBratteliDiagram, cuts: &[usize]) -> Result<OrderedBratteliDiagram, BratteliError> {
    if cuts.len() < 2 || cuts[0] != 0 || cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BratteliError::CutsOutOfRange("cuts must start at 0 and increase strictly".into()));
    }
    let last = *cuts.last().expect("non-empty");
    if !d.has_level(last) {
        return Err(BratteliError::CutsOutOfRange(format!("cut {last} exceeds the depth")));
    }
    let mut out: Vec<Level> = cuts.windows(2).map(|w| block(d, w[0], w[1])).collect();
    if !d.stationary {
        return OrderedBratteliDiagram::finite(out);
    }
    let s = d.cycle_start();
    let g = last - cuts[cuts.len() - 2];
    let mut seen: HashMap<usize, usize> = HashMap::new();
    let mut a = cuts[cuts.len() - 2];
    let mut idx = out.len() - 1;
    loop {
        if a >= s {
            let pos = (a - s) % d.period;
            if let Some(&j) = seen.get(&pos) {
                out.truncate(idx);
                return OrderedBratteliDiagram::new(out, true, idx - j);
            }
            seen.insert(pos, idx);
        }
        a += g;
        idx += 1;
        out.push(block(d, a, a + g));
    }
}

/// Insert an intermediate level by splitting level k into `first` then `second`.
/// Inside the repeating template the split is applied at every repetition.
pub fn microscope(d: &OrderedBratteliDiagram, k: usize, first: &Level, second: &Level) -> Result<OrderedBratteliDiagram, BratteliError> {
    let original = d.level(k).ok_or_else(|| BratteliError::CutsOutOfRange(format!("level {k} does not exist")))?;
    let a = Level::new(first.vertices, first.edges.clone());
    let b = Level::new(second.vertices, second.edges.clone());
    let sources = d.vertices(k - 1).expect("level exists");
    if a.edges.iter().any(|e| e.source >= sources || e.target >= a.vertices)
        || b.edges.iter().any(|e| e.source >= a.vertices || e.target >= b.vertices)
    {
        return Err(BratteliError::SplitDoesNotCompose(k));
    }
    if compose_levels(&[&a, &b]) != *original {
        return Err(BratteliError::SplitDoesNotCompose(k));
    }
    let idx = d.level_index(k)?;
    let mut levels = d.levels.clone();
    levels[idx] = b;
    levels.insert(idx, a);
    let in_cycle = d.stationary && idx >= d.cycle_start();
    let period = if in_cycle { d.period + 1 } else { d.period };
    OrderedBratteliDiagram::new(levels, d.stationary, period)
}

/// Compare two co-terminal paths of equal length in the induced order.
pub fn cmp_paths(d: &OrderedBratteliDiagram, first_level: usize, p: &[usize], q: &[usize]) -> Ordering {
    for i in (0..p.len()).rev() {
        let l = d.level(first_level + i).expect("level exists");
        let (a, b) = (l.edges[p[i]].rank, l.edges[q[i]].rank);
        if a != b || p[i] != q[i] {
            return a.cmp(&b).then(p[i].cmp(&q[i]));
        }
    }
    Ordering::Equal
}

/// Induction on a path set: level 1 becomes the paths of P.
pub fn induce_on_paths(d: &OrderedBratteliDiagram, paths: &[PathPrefix]) -> Result<OrderedBratteliDiagram, BratteliError> {
    let n0 = paths.first().map(PathPrefix::len).ok_or_else(|| BratteliError::InvalidPrefix("empty path set".into()))?;
    if n0 == 0 || paths.iter().any(|p| p.len() != n0) {
        return Err(BratteliError::InvalidPrefix("paths must share a positive length".into()));
    }
    let mut by_target: BTreeMap<usize, Vec<&PathPrefix>> = BTreeMap::new();
    let mut distinct = BTreeSet::new();
    for p in paths {
        let v = check_prefix(d, p)?;
        if distinct.insert(p.clone()) {
            by_target.entry(v).or_default().push(p);
        }
    }
    let vertices = d.vertices(n0).expect("prefix levels exist");
    if let Some(v) = (0..vertices).find(|v| !by_target.contains_key(v)) {
        return Err(BratteliError::CoverageViolation(v));
    }
    let mut edges = Vec::new();
    for (&t, ps) in &mut by_target {
        ps.sort_by(|a, b| cmp_paths(d, 1, &a.edges, &b.edges));
        edges.extend((0..ps.len()).map(|r| Edge::new(0, t, r)));
    }
    let mut levels = vec![Level::new(vertices, edges)];
    let upto = if d.stationary { d.levels.len().max(n0 + d.period) } else { d.levels.len() };
    levels.extend((n0 + 1..=upto).map(|k| d.level(k).expect("level exists").clone()));
    if d.stationary && levels.len() == 1 {
        return Err(BratteliError::InvalidDiagram("induced diagram has no template".into()));
    }
    OrderedBratteliDiagram::new(levels, d.stationary, d.period)
}

/// Every path prefix of length n, in lexicographic order of edge indices.
pub fn all_paths(d: &OrderedBratteliDiagram, n: usize) -> Vec<PathPrefix> {
    let mut out = vec![(PathPrefix::new(Vec::new()), 0usize)];
    for k in 1..=n {
        let Some(l) = d.level(k) else { return Vec::new() };
        out = out
            .into_iter()
            .flat_map(|(p, v)| {
                l.edges.iter().enumerate().filter(move |(_, e)| e.source == v).map(move |(i, e)| (p.extended(i), e.target)).collect::<Vec<_>>()
            })
            .collect();
    }
    out.into_iter().map(|(p, _)| p).collect()
}

/// Number of paths from v_0 to each vertex of level n.
pub fn path_counts(d: &OrderedBratteliDiagram, n: usize) -> Vec<BigUint> {
    let mut h = vec![BigUint::one()];
    for k in 1..=n {
        let l = d.level(k).expect("level exists");
        let mut next = vec![BigUint::zero(); l.vertices];
        for e in &l.edges {
            next[e.target] += &h[e.source];
        }
        h = next;
    }
    h
}

/// Stationary diagram of a primitive substitution; level-1 edges into a are the positions of σ(a).
pub fn from_substitution(s: &Substitution) -> Result<OrderedBratteliDiagram, BratteliError> {
    if !is_primitive(s).is_primitive() {
        return Err(BratteliError::NotPrimitive);
    }
    let n = s.alphabet().len();
    let mut first = Vec::new();
    let mut template = Vec::new();
    for a in 0..n {
        for (r, &b) in s.image(a).iter().enumerate() {
            first.push(Edge::new(0, a, r));
            template.push(Edge::new(b, a, r));
        }
    }
    OrderedBratteliDiagram::new(vec![Level::new(n, first), Level::new(n, template)], true, 1)
}

/// Level-1 edges of `from_substitution(s)` whose coded letter x_0 is `letter`.
pub fn substitution_cylinder(s: &Substitution, letter: Letter) -> Vec<PathPrefix> {
    let mut out = Vec::new();
    let mut offset = 0;
    for a in 0..s.alphabet().len() {
        for (r, &b) in s.image(a).iter().enumerate() {
            if b == letter {
                out.push(PathPrefix::new(vec![offset + r]));
            }
        }
        offset += s.image(a).len();
    }
    out
}

/// Exact cylinder values when the Perron eigenvalue is an integer.
#[derive(Debug, Clone, PartialEq)]
struct ExactData {
    lambda: u64,
    prefix: Vec<Vec<BigRational>>,
}

/// Invariant measure of a stationary diagram, given on cylinders.
#[derive(Debug, Clone)]
pub struct CylinderMeasure<F: Scalar> {
    diagram: OrderedBratteliDiagram,
    lambda: F,
    prefix: Vec<Vec<F>>,
    exact: Option<ExactData>,
}

/// Invariant probability measure from the Perron data of the stationary template.
pub fn stationary_measure<F: Scalar>(d: &OrderedBratteliDiagram) -> Result<CylinderMeasure<F>, BratteliError> {
    if !d.stationary {
        return Err(BratteliError::NotStationary("diagram has no repeating template".into()));
    }
    if d.period != 1 {
        return Err(BratteliError::NotStationary(format!("template period {} > 1", d.period)));
    }
    let s = d.cycle_start();
    let t = d.levels[s].matrix(d.levels[d.levels.len() - 1].vertices);
    let n = t.len();
    if linalg::positivity_exponent(&t, 2 * n * n + 2).is_none() {
        return Err(BratteliError::NotSimple(2 * n * n + 2));
    }
    let back = |top: Vec<BigRational>| -> Vec<Vec<BigRational>> {
        let mut prefix = vec![top];
        for k in (1..=s).rev() {
            let l = &d.levels[k - 1];
            let mut below = vec![BigRational::zero(); d.vertices(k - 1).expect("level")];
            for e in &l.edges {
                below[e.source] += &prefix[0][e.target];
            }
            prefix.insert(0, below);
        }
        prefix
    };
    let exact = linalg::exact_perron_right(&t).map(|(lambda, r)| {
        let raw = back(r.clone());
        let total = raw[0][0].clone();
        let prefix = back(r.into_iter().map(|x| x / &total).collect());
        ExactData { lambda, prefix }
    });
    let (lambda, prefix) = match &exact {
        Some(e) => {
            let to_f = |x: &BigRational| F::from_f64(x.to_f64().expect("finite")).expect("fits");
            (from_usize::<F>(e.lambda as usize), e.prefix.iter().map(|v| v.iter().map(to_f).collect()).collect())
        }
        None => {
            let (lambda, r, _) = linalg::float_perron_right::<F>(&t, 100_000);
            let mut prefix = vec![r];
            for k in (1..=s).rev() {
                let mut below = vec![F::zero(); d.vertices(k - 1).expect("level")];
                for e in &d.levels[k - 1].edges {
                    below[e.source] = below[e.source] + prefix[0][e.target];
                }
                prefix.insert(0, below);
            }
            let total = prefix[0][0];
            (lambda, prefix.into_iter().map(|v| v.into_iter().map(|x| x / total).collect()).collect())
        }
    };
    Ok(CylinderMeasure { diagram: d.clone(), lambda, prefix, exact })
}

impl<F: Scalar> CylinderMeasure<F> {
    pub fn diagram(&self) -> &OrderedBratteliDiagram {
        &self.diagram
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn eigenvalue(&self) -> F {
        self.lambda
    }

    /// Mass of any cylinder ending at vertex v of level n.
    pub fn vertex_mass(&self, n: usize, v: usize) -> F {
        let s = self.prefix.len() - 1;
        if n <= s {
            return self.prefix[n][v];
        }
        self.prefix[s][v] / self.lambda.powi((n - s) as i32)
    }

    pub fn vertex_mass_exact(&self, n: usize, v: usize) -> Option<BigRational> {
        let e = self.exact.as_ref()?;
        let s = e.prefix.len() - 1;
        if n <= s {
            return Some(e.prefix[n][v].clone());
        }
        let denom = num_traits::pow(BigInt::from(e.lambda), n - s);
        Some(&e.prefix[s][v] / BigRational::from_integer(denom))
    }

    pub fn value(&self, p: &PathPrefix) -> Result<F, BratteliError> {
        let v = check_prefix(&self.diagram, p)?;
        Ok(self.vertex_mass(p.len(), v))
    }

    pub fn value_exact(&self, p: &PathPrefix) -> Result<Option<BigRational>, BratteliError> {
        let v = check_prefix(&self.diagram, p)?;
        Ok(self.vertex_mass_exact(p.len(), v))
    }

    /// Total mass of the tower over vertex v at level n.
    pub fn tower_mass(&self, n: usize, v: usize) -> F {
        let h = &path_counts(&self.diagram, n)[v];
        F::from_f64(h.to_f64().expect("finite")).expect("fits") * self.vertex_mass(n, v)
    }

    pub fn tower_mass_exact(&self, n: usize, v: usize) -> Option<BigRational> {
        let h = path_counts(&self.diagram, n)[v].clone();
        Some(self.vertex_mass_exact(n, v)? * BigRational::from_integer(BigInt::from(h)))
    }

    /// |μ(p) − Σ_e μ(p·e)| over the one-edge extensions of p.
    pub fn additivity_defect(&self, p: &PathPrefix) -> Result<F, BratteliError> {
        let v = check_prefix(&self.diagram, p)?;
        let l = self.diagram.level(p.len() + 1).ok_or_else(|| BratteliError::InvalidPrefix("no level above the prefix".into()))?;
        let sum = l.edges.iter().filter(|e| e.source == v).fold(F::zero(), |acc, e| acc + self.vertex_mass(p.len() + 1, e.target));
        Ok((self.vertex_mass(p.len(), v) - sum).abs())
    }
}

/// Clopen union of cylinders, normalized to one common length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathClopen {
    length: usize,
    members: BTreeSet<Vec<usize>>,
}

impl PathClopen {
    pub fn new(d: &OrderedBratteliDiagram, cylinders: &[PathPrefix]) -> Result<Self, BratteliError> {
        let length = cylinders.iter().map(PathPrefix::len).max().unwrap_or(0);
        let mut members = BTreeSet::new();
        for c in cylinders {
            let mut frontier = vec![(c.edges.clone(), check_prefix(d, c)?)];
            for k in c.len() + 1..=length {
                let l = d.level(k).ok_or_else(|| BratteliError::InvalidPrefix("cylinder beyond the depth".into()))?;
                frontier = frontier
                    .into_iter()
                    .flat_map(|(p, v)| {
                        l.edges
                            .iter()
                            .enumerate()
                            .filter(move |(_, e)| e.source == v)
                            .map(move |(i, e)| {
                                let mut q = p.clone();
                                q.push(i);
                                (q, e.target)
                            })
                            .collect::<Vec<_>>()
                    })
                    .collect();
            }
            members.extend(frontier.into_iter().map(|(p, _)| p));
        }
        Ok(PathClopen { length, members })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn members(&self) -> impl Iterator<Item = PathPrefix> + '_ {
        self.members.iter().map(|p| PathPrefix::new(p.clone()))
    }

    /// Whether a cylinder of length ≥ the clopen length lies inside.
    pub fn contains(&self, p: &[usize]) -> bool {
        p.len() >= self.length && self.members.contains(&p[..self.length])
    }
}

/// Normalized restriction ν(B) = μ(B ∩ U)/μ(U).
#[derive(Debug, Clone)]
pub struct InducedMeasure<F: Scalar> {
    mu: CylinderMeasure<F>,
    clopen: PathClopen,
    mass: F,
}

impl<F: Scalar> InducedMeasure<F> {
    pub fn clopen_mass(&self) -> F {
        self.mass
    }

    pub fn clopen(&self) -> &PathClopen {
        &self.clopen
    }

    pub fn value(&self, p: &PathPrefix) -> Result<F, BratteliError> {
        check_prefix(self.mu.diagram(), p)?;
        let inside = if p.len() >= self.clopen.length {
            if self.clopen.contains(&p.edges) { self.mu.value(p)? } else { F::zero() }
        } else {
            let mut acc = F::zero();
            for m in self.clopen.members.iter().filter(|m| m.starts_with(&p.edges)) {
                acc = acc + self.mu.value(&PathPrefix::new(m.clone()))?;
            }
            acc
        };
        Ok(inside / self.mass)
    }
}

/// Distribution of first-return times to a clopen set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KacReport<F: Scalar + Serialize> {
    /// k ↦ μ(U_k).
    pub classes: BTreeMap<usize, F>,
    pub clopen_mass: F,
    /// Σ_k k·μ(U_k).
    pub kac_sum: F,
    /// Mass of cylinders left unresolved at the refinement floor.
    pub unresolved: F,
    pub max_depth: usize,
}

impl<F: Scalar + Serialize> KacReport<F> {
    pub fn expected_return_time(&self) -> F {
        let weighted = self.classes.iter().fold(F::zero(), |a, (&k, &m)| a + from_usize::<F>(k) * m);
        let mass = self.classes.values().fold(F::zero(), |a, &m| a + m);
        weighted / mass
    }
}

/// Induced measure on U together with its Kac report.
pub fn induced_measure<F: Scalar + Serialize>(
    mu: &CylinderMeasure<F>,
    cylinders: &[PathPrefix],
) -> Result<(InducedMeasure<F>, KacReport<F>), BratteliError> {
    let d = mu.diagram();
    let clopen = PathClopen::new(d, cylinders)?;
    let mut mass = F::zero();
    for m in clopen.members() {
        mass = mass + mu.value(&m)?;
    }
    if mass <= F::zero() {
        return Err(BratteliError::ZeroMassClopen);
    }
    let floor = F::target_residual() * F::from_f64(1e-3).expect("fits");
    let mut classes: BTreeMap<usize, F> = BTreeMap::new();
    let mut unresolved = F::zero();
    let mut max_depth = clopen.length;
    let mut stack: Vec<(PathPrefix, PathPrefix, usize)> = clopen.members().map(|c| (c.clone(), c, 0)).collect();
    while let Some((cyl, mut image, mut steps)) = stack.pop() {
        let m = mu.value(&cyl)?;
        loop {
            match vershik_step_unchecked(d, &image) {
                VershikOutcome::Next(next) => {
                    steps += 1;
                    image = next;
                    if clopen.contains(&image.edges) {
                        let e = classes.entry(steps).or_insert_with(F::zero);
                        *e = *e + m;
                        break;
                    }
                }
                VershikOutcome::NeedsExtension => {
                    if m < floor {
                        unresolved = unresolved + m;
                        break;
                    }
                    let n = cyl.len();
                    max_depth = max_depth.max(n + 1);
                    let v = check_prefix(d, &cyl)?;
                    let l = d.level(n + 1).ok_or_else(|| BratteliError::DepthExhausted("finite diagram too shallow for the return map".into()))?;
                    for (i, _) in l.edges.iter().enumerate().filter(|(_, e)| e.source == v) {
                        stack.push((cyl.extended(i), image.extended(i), steps));
                    }
                    break;
                }
            }
        }
    }
    let kac_sum = classes.iter().fold(F::zero(), |a, (&k, &m)| a + from_usize::<F>(k) * m);
    let report = KacReport { classes, clopen_mass: mass, kac_sum, unresolved, max_depth };
    Ok((InducedMeasure { mu: mu.clone(), clopen, mass }, report))
}

/// Bipartite graph V → V′ with an order on co-terminal edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedBipartiteGraph {
    pub left: usize,
    pub right: usize,
    pub edges: Vec<Edge>,
}

impl OrderedBipartiteGraph {
    pub fn validate(&self) -> Result<(), BratteliError> {
        let mut ranks: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for e in &self.edges {
            if e.source >= self.left || e.target >= self.right {
                return Err(BratteliError::InvalidGraph(format!("edge {:?} out of range", [e.source, e.target, e.rank])));
            }
            ranks.entry(e.target).or_default().push(e.rank);
        }
        for y in 0..self.right {
            let mut rs = ranks.remove(&y).ok_or_else(|| BratteliError::InvalidGraph(format!("right vertex {y} has no edge")))?;
            rs.sort_unstable();
            if rs.iter().enumerate().any(|(i, &r)| i != r) {
                return Err(BratteliError::InvalidGraph(format!("ranks into right vertex {y} are not 0..m-1")));
            }
        }
        Ok(())
    }

    /// The bipartite graph of level k of a diagram.
    pub fn from_level(d: &OrderedBratteliDiagram, k: usize) -> Option<Self> {
        let l = d.level(k)?;
        Some(OrderedBipartiteGraph { left: d.vertices(k - 1)?, right: l.vertices, edges: l.edges.clone() })
    }
}

/// Edges of K realized as paths of E_{n0+1, n0+k}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphEmbedding {
    pub n0: usize,
    pub k: usize,
    /// Right vertex of K ↦ vertex of V_{n0+k}.
    pub right_map: Vec<usize>,
    /// Edge i of K ↦ edge indices at levels n0+1 … n0+k.
    pub paths: Vec<Vec<usize>>,
}

fn reach_sets(d: &OrderedBratteliDiagram, a: usize, x: usize, b: usize) -> Vec<Vec<bool>> {
    let mut sets = vec![{
        let mut s = vec![false; d.vertices(a).expect("level")];
        s[x] = true;
        s
    }];
    for k in a + 1..=b {
        let l = d.level(k).expect("level");
        let mut next = vec![false; l.vertices];
        for e in &l.edges {
            if sets[k - a - 1][e.source] {
                next[e.target] = true;
            }
        }
        sets.push(next);
    }
    sets
}

/// Extremal path from x ∈ V_a to y ∈ V_b in the induced order.
fn extremal_between(d: &OrderedBratteliDiagram, a: usize, x: usize, b: usize, y: usize, max: bool) -> Option<Vec<usize>> {
    let sets = reach_sets(d, a, x, b);
    if !sets[b - a][y] {
        return None;
    }
    let mut edges = vec![0; b - a];
    let mut v = y;
    for k in (a + 1..=b).rev() {
        let l = d.level(k).expect("level");
        let offset = l.in_offset(v);
        let ins = l.in_edges(v);
        let pick = |(_, e): &(usize, &Edge)| sets[k - a - 1][e.source];
        let (r, e) = if max { ins.iter().enumerate().rev().find(pick) } else { ins.iter().enumerate().find(pick) }.expect("reachable");
        edges[k - a - 1] = offset + r;
        v = e.source;
    }
    Some(edges)
}

/// Injective assignment of each item to one of its candidates (first-fit augmenting paths).
fn matching(candidates: &[Vec<usize>], targets: usize) -> Option<Vec<usize>> {
    fn augment(i: usize, cands: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
        for &w in &cands[i] {
            if seen[w] {
                continue;
            }
            seen[w] = true;
            if owner[w].is_none_or(|j| augment(j, cands, owner, seen)) {
                owner[w] = Some(i);
                return true;
            }
        }
        false
    }
    let mut owner: Vec<Option<usize>> = vec![None; targets];
    for i in 0..candidates.len() {
        let mut seen = vec![false; targets];
        if !augment(i, candidates, &mut owner, &mut seen) {
            return None;
        }
    }
    let mut out = vec![0; candidates.len()];
    for (w, o) in owner.iter().enumerate() {
        if let Some(i) = o {
            out[*i] = w;
        }
    }
    Some(out)
}

fn level_limit(d: &OrderedBratteliDiagram, n0: usize) -> usize {
    match d.depth() {
        Some(len) => len,
        None => n0 + MAX_EMBED_EXTENSION,
    }
}

/// Embed K on the vertices `left` ⊂ V_{n0} into paths starting at level n0.
pub fn embed_ordered_graph(
    d: &OrderedBratteliDiagram,
    n0: usize,
    left: &[usize],
    k: &OrderedBipartiteGraph,
) -> Result<GraphEmbedding, BratteliError> {
    k.validate()?;
    let vn0 = d.vertices(n0).ok_or_else(|| BratteliError::LeftSideMismatch(format!("level {n0} does not exist")))?;
    if left.len() != k.left {
        return Err(BratteliError::LeftSideMismatch(format!("graph has {} left vertices, {} given", k.left, left.len())));
    }
    if left.iter().any(|&v| v >= vn0) || left.iter().collect::<BTreeSet<_>>().len() != left.len() {
        return Err(BratteliError::LeftSideMismatch(format!("left side is not a subset of V_{n0}")));
    }
    let (levels, right_map, paths) = embed_rec(d, n0, left, k, level_limit(d, n0))?;
    Ok(GraphEmbedding { n0, k: levels, right_map, paths })
}

type Partial = (usize, Vec<usize>, Vec<Vec<usize>>);

fn embed_rec(d: &OrderedBratteliDiagram, n0: usize, left: &[usize], g: &OrderedBipartiteGraph, limit: usize) -> Result<Partial, BratteliError> {
    let mut indeg = vec![0usize; g.right];
    for e in &g.edges {
        indeg[e.target] += 1;
    }
    let Some(y_e) = (0..g.right).find(|&y| indeg[y] >= 2) else {
        let mut single = vec![0usize; g.right];
        for e in &g.edges {
            single[e.target] = e.source;
        }
        for top in n0 + 1..=limit {
            let cands: Vec<Vec<usize>> = single
                .iter()
                .map(|&x| {
                    let reach = reach_sets(d, n0, left[x], top);
                    reach[top - n0].iter().enumerate().filter(|(_, &r)| r).map(|(w, _)| w).collect()
                })
                .collect();
            if let Some(map) = matching(&cands, d.vertices(top).expect("level")) {
                let paths = g
                    .edges
                    .iter()
                    .map(|e| extremal_between(d, n0, left[e.source], top, map[e.target], false).expect("reachable"))
                    .collect();
                return Ok((top - n0, map, paths));
            }
        }
        return Err(BratteliError::DepthExhausted(format!("no injective placement of the right side up to level {limit}")));
    };
    let removed = g.edges.iter().position(|e| e.target == y_e && e.rank == indeg[y_e] - 1).expect("maximal edge");
    let rest: Vec<Edge> = g.edges.iter().enumerate().filter(|&(i, _)| i != removed).map(|(_, e)| *e).collect();
    let sub = OrderedBipartiteGraph { left: g.left, right: g.right, edges: rest };
    let (k1, map1, paths1) = embed_rec(d, n0, left, &sub, limit)?;
    let x_e = g.edges[removed].source;
    let base = n0 + k1;
    for top in base..=limit {
        let map = if top == base {
            map1.clone()
        } else {
            let cands: Vec<Vec<usize>> = map1
                .iter()
                .map(|&w| reach_sets(d, base, w, top)[top - base].iter().enumerate().filter(|(_, &r)| r).map(|(v, _)| v).collect())
                .collect();
            match matching(&cands, d.vertices(top).expect("level")) {
                Some(m) => m,
                None => continue,
            }
        };
        let links: Vec<Vec<usize>> = (0..g.right).map(|y| extremal_between(d, base, map1[y], top, map[y], false).expect("matched")).collect();
        let extended: Vec<Vec<usize>> = sub.edges.iter().zip(&paths1).map(|(e, p)| [p.as_slice(), &links[e.target]].concat()).collect();
        let Some(top_path) = extremal_between(d, n0, left[x_e], top, map[y_e], true) else { continue };
        let dominates = sub
            .edges
            .iter()
            .zip(&extended)
            .filter(|(e, _)| e.target == y_e)
            .all(|(_, p)| cmp_paths(d, n0 + 1, &top_path, p) == Ordering::Greater);
        if dominates {
            let mut paths = Vec::with_capacity(g.edges.len());
            let mut it = extended.into_iter();
            for i in 0..g.edges.len() {
                paths.push(if i == removed { top_path.clone() } else { it.next().expect("path") });
            }
            return Ok((top - n0, map, paths));
        }
    }
    Err(BratteliError::DepthExhausted(format!("maximal path not separated from minimal ones up to level {limit}")))
}

/// Independent check that an embedding is an order-preserving graph isomorphism onto its image.
pub fn verify_embedding(d: &OrderedBratteliDiagram, left: &[usize], g: &OrderedBipartiteGraph, emb: &GraphEmbedding) -> Result<(), String> {
    let top = emb.n0 + emb.k;
    let vtop = d.vertices(top).ok_or("top level missing")?;
    if emb.right_map.len() != g.right || emb.right_map.iter().any(|&w| w >= vtop) {
        return Err("right map has the wrong shape".into());
    }
    if emb.right_map.iter().collect::<BTreeSet<_>>().len() != g.right {
        return Err("right map is not injective".into());
    }
    if emb.paths.len() != g.edges.len() || emb.paths.iter().collect::<BTreeSet<_>>().len() != g.edges.len() {
        return Err("edge map is not injective".into());
    }
    let mut ranks_from_top: Vec<Vec<usize>> = Vec::new();
    for (e, p) in g.edges.iter().zip(&emb.paths) {
        if p.len() != emb.k {
            return Err("path has the wrong length".into());
        }
        let mut v = left[e.source];
        let mut ranks = Vec::new();
        for (i, &idx) in p.iter().enumerate() {
            let l = d.level(emb.n0 + 1 + i).ok_or("level missing")?;
            let f = l.edges.get(idx).ok_or("edge index out of range")?;
            if f.source != v {
                return Err(format!("path for edge {:?} does not compose", [e.source, e.target, e.rank]));
            }
            v = f.target;
            ranks.push(f.rank);
        }
        if v != emb.right_map[e.target] {
            return Err("path does not end at the image of its target".into());
        }
        ranks.reverse();
        ranks_from_top.push(ranks);
    }
    for (i, a) in g.edges.iter().enumerate() {
        for (j, b) in g.edges.iter().enumerate() {
            if i != j && a.target == b.target && (a.rank < b.rank) != (ranks_from_top[i] < ranks_from_top[j]) {
                return Err(format!("order violated between edges {i} and {j}"));
            }
        }
    }
    Ok(())
}

/// Level-wise embeddings of `source` into contractions of `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PoincareCertificate {
    pub cuts: Vec<usize>,
    pub levels: Vec<GraphEmbedding>,
}

/// Embed the first `depth` levels of `source` into `target`, one level at a time.
pub fn poincare_embed(
    target: &OrderedBratteliDiagram,
    source: &OrderedBratteliDiagram,
    depth: usize,
) -> Result<PoincareCertificate, BratteliError> {
    let mut cuts = vec![0];
    let mut left = vec![0];
    let mut levels = Vec::new();
    for n in 1..=depth {
        let g = OrderedBipartiteGraph::from_level(source, n)
            .ok_or_else(|| BratteliError::DepthExhausted(format!("source has no level {n}")))?;
        let n0 = *cuts.last().expect("non-empty");
        let emb = embed_ordered_graph(target, n0, &left, &g).map_err(|e| match e {
            BratteliError::LeftSideMismatch(m) => BratteliError::DepthExhausted(m),
            other => other,
        })?;
        cuts.push(n0 + emb.k);
        left = emb.right_map.clone();
        levels.push(emb);
    }
    Ok(PoincareCertificate { cuts, levels })
}

/// Graphviz drawing of the first `depth` levels.
pub fn to_dot(d: &OrderedBratteliDiagram, depth: usize) -> String {
    let mut out = String::from("digraph bratteli {\n  rankdir=TB;\n  \"0_0\" [label=\"v0\"];\n");
    for k in 1..=depth {
        let Some(l) = d.level(k) else { break };
        for v in 0..l.vertices {
            let _ = writeln!(out, "  \"{k}_{v}\" [label=\"{v}\"];");
        }
        for e in &l.edges {
            let _ = writeln!(out, "  \"{}_{}\" -> \"{k}_{}\" [label=\"{}\"];", k - 1, e.source, e.target, e.rank);
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(b: u64) -> OrderedBratteliDiagram {
        one_vertex_diagram(&[b], 1)
    }

    fn pd() -> OrderedBratteliDiagram {
        from_substitution(&Substitution::period_doubling()).unwrap()
    }

    #[test]
    fn validation_messages() {
        assert!(validate(&base(2)).is_empty());
        let isolated = OrderedBratteliDiagram {
            stationary: false,
            period: 1,
            levels: vec![Level::new(1, vec![Edge::new(0, 0, 0)]), Level::new(2, vec![Edge::new(0, 0, 0)])],
        };
        assert!(validate(&isolated).iter().any(|v| v.contains("no incoming edge")));
        let dup = OrderedBratteliDiagram {
            stationary: false,
            period: 1,
            levels: vec![Level::new(1, vec![Edge::new(0, 0, 0), Edge::new(0, 0, 0)])],
        };
        assert!(validate(&dup).iter().any(|v| v.contains("order not total")));
    }

    #[test]
    fn simplicity() {
        assert!(is_simple(&base(2), 1).unwrap());
        assert!(!is_simple(&pd(), 1).unwrap());
        assert!(is_simple(&pd(), 2).unwrap());
        let swap = Level::new(2, vec![Edge::new(1, 0, 0), Edge::new(0, 1, 0)]);
        let first = Level::new(2, vec![Edge::new(0, 0, 0), Edge::new(0, 1, 0)]);
        let perm = OrderedBratteliDiagram::new(vec![first, swap], true, 1).unwrap();
        for w in 1..6 {
            assert!(!is_simple(&perm, w).unwrap());
        }
    }

    #[test]
    fn vershik_binary() {
        let d = base(2);
        let step = |v: Vec<usize>| vershik_step(&d, &PathPrefix::new(v)).unwrap();
        assert_eq!(step(vec![0, 1]), VershikOutcome::Next(PathPrefix::new(vec![1, 1])));
        assert_eq!(step(vec![1, 0]), VershikOutcome::Next(PathPrefix::new(vec![0, 1])));
        assert_eq!(step(vec![1, 1]), VershikOutcome::NeedsExtension);
    }

    #[test]
    fn contraction_examples() {
        assert_eq!(contract(&base(2), &[0, 2, 4]).unwrap(), base(4));
        assert_eq!(contract(&pd(), &[0, 1, 2]).unwrap(), pd());
        let c = contract(&pd(), &[0, 2, 4]).unwrap();
        assert_eq!(c.matrix(3).unwrap(), vec![vec![3, 2], vec![1, 2]]);
    }

    #[test]
    fn microscope_roundtrip() {
        let b2 = base(2).levels[0].clone();
        let m = microscope(&base(4), 1, &b2, &b2).unwrap();
        assert_eq!(m, base(2));
        assert_eq!(contract(&m, &[0, 2, 4]).unwrap(), base(4));
        let b3 = base(3).levels[0].clone();
        let m6 = microscope(&base(6), 1, &b2, &b3).unwrap();
        assert_eq!(m6.period, 2);
        assert_eq!(contract(&m6, &[0, 2]).unwrap(), base(6));
        let wrong = Level::new(1, vec![Edge::new(0, 0, 0)]);
        assert_eq!(microscope(&base(4), 1, &b2, &wrong), Err(BratteliError::SplitDoesNotCompose(1)));
    }

    #[test]
    fn proper_orders() {
        match proper_order_certificate(&base(2), 3).unwrap() {
            ProperOrder::Certified { max, min } => {
                assert_eq!(max.edges, vec![1, 1, 1]);
                assert_eq!(min.edges, vec![0, 0, 0]);
            }
            other => panic!("{other:?}"),
        }
        match proper_order_certificate(&pd(), 4).unwrap() {
            ProperOrder::NotProper { maximal, witnesses } => {
                assert!(maximal);
                assert_eq!(witnesses.len(), 2);
            }
            other => panic!("{other:?}"),
        }
        let squared = contract(&pd(), &[0, 2, 4]).unwrap();
        let fixed = squared.permute_ranks(2, 1, &[0, 1, 3, 2]).unwrap();
        assert!(matches!(proper_order_certificate(&fixed, 4).unwrap(), ProperOrder::Certified { .. }));
    }

    #[test]
    fn induction_drops_first_level() {
        let d = OrderedBratteliDiagram::finite(one_vertex_diagram(&[2, 3, 4], 0).levels).unwrap();
        let induced = induce_on_paths(&d, &[PathPrefix::new(vec![0])]).unwrap();
        assert_eq!(induced.one_vertex_counts().unwrap().0, vec![1, 3, 4]);
        let all = all_paths(&pd(), 2);
        assert_eq!(induce_on_paths(&pd(), &all).unwrap(), contract(&pd(), &[0, 2, 3]).unwrap());
        let missing = vec![PathPrefix::new(vec![0])];
        assert_eq!(induce_on_paths(&pd(), &missing), Err(BratteliError::CoverageViolation(1)));
    }

    #[test]
    fn substitution_diagrams() {
        let d = pd();
        let t = d.level(2).unwrap();
        assert_eq!(t.in_edges(0), &[Edge::new(0, 0, 0), Edge::new(1, 0, 1)]);
        assert_eq!(t.in_edges(1), &[Edge::new(0, 1, 0), Edge::new(0, 1, 1)]);
        let g = from_substitution(&Substitution::parse(&["0"], &["00"]).unwrap()).unwrap();
        assert_eq!(g, base(2));
        let f = from_substitution(&Substitution::fibonacci()).unwrap();
        assert_eq!(f.matrix(2).unwrap(), vec![vec![1, 1], vec![1, 0]]);
    }

    #[test]
    fn measures() {
        let m = stationary_measure::<f64>(&base(2)).unwrap();
        assert_eq!(m.vertex_mass_exact(5, 0).unwrap(), BigRational::new(1.into(), 32.into()));
        let p = stationary_measure::<f64>(&pd()).unwrap();
        assert_eq!(p.tower_mass_exact(3, 0).unwrap(), BigRational::new(2.into(), 3.into()));
        let b3 = stationary_measure::<f64>(&base(3)).unwrap();
        assert_eq!(b3.value_exact(&PathPrefix::new(vec![2, 1])).unwrap().unwrap(), BigRational::new(1.into(), 9.into()));
    }

    #[test]
    fn kac_examples() {
        let m = stationary_measure::<f64>(&base(2)).unwrap();
        let (nu, rep) = induced_measure(&m, &[PathPrefix::new(vec![0])]).unwrap();
        assert!((nu.value(&PathPrefix::new(vec![0])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rep.classes.keys().copied().collect::<Vec<_>>(), vec![2]);
        assert!((rep.kac_sum - 1.0).abs() < 1e-10);
        let p = stationary_measure::<f64>(&pd()).unwrap();
        let (_, rep) = induced_measure(&p, &substitution_cylinder(&Substitution::period_doubling(), 1)).unwrap();
        assert!((rep.kac_sum - 1.0).abs() < 1e-10);
        assert!((rep.expected_return_time() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn embedding_base2() {
        let d = base(2);
        let two = OrderedBipartiteGraph { left: 1, right: 1, edges: vec![Edge::new(0, 0, 0), Edge::new(0, 0, 1)] };
        let e = embed_ordered_graph(&d, 1, &[0], &two).unwrap();
        assert_eq!(e.k, 1);
        assert_eq!(e.paths, vec![vec![0], vec![1]]);
        verify_embedding(&d, &[0], &two, &e).unwrap();
        let three = OrderedBipartiteGraph { left: 1, right: 1, edges: (0..3).map(|r| Edge::new(0, 0, r)).collect() };
        let e = embed_ordered_graph(&d, 1, &[0], &three).unwrap();
        assert_eq!(e.k, 2);
        verify_embedding(&d, &[0], &three, &e).unwrap();
        assert!(matches!(embed_ordered_graph(&d, 1, &[1], &two), Err(BratteliError::LeftSideMismatch(_))));
    }

    #[test]
    fn poincare_levels() {
        let cert = poincare_embed(&base(6), &base(2), 3).unwrap();
        assert_eq!(cert.cuts, vec![0, 1, 2, 3]);
        assert!(poincare_embed(&base(6), &base(2), 0).unwrap().levels.is_empty());
    }
}
