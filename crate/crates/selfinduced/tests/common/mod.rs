//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use selfinduced::bratteli::{one_vertex_diagram, Edge, Level, OrderedBipartiteGraph, OrderedBratteliDiagram};
use selfinduced::substitution::Substitution;
use selfinduced::words::Word;

pub fn base(b: u64) -> OrderedBratteliDiagram {
    one_vertex_diagram(&[b], 1)
}

/// Finite simple diagram with #V_n = n + 1 and multiplicities 1 + ((u + v + n) mod 2).
pub fn growing_diagram(depth: usize) -> OrderedBratteliDiagram {
    let levels = (1..=depth)
        .map(|n| {
            let sources = n;
            let mut edges = Vec::new();
            for v in 0..=n {
                let mut ins: Vec<(usize, usize)> = Vec::new();
                for u in 0..sources {
                    for copy in 0..1 + (u + v + n) % 2 {
                        ins.push((u, copy));
                    }
                }
                if n % 2 == 1 {
                    ins.reverse();
                }
                edges.extend(ins.iter().enumerate().map(|(r, &(u, _))| Edge::new(u, v, r)));
            }
            Level::new(n + 1, edges)
        })
        .collect();
    OrderedBratteliDiagram::finite(levels).expect("valid diagram")
}

/// Deterministic ordered bipartite graph with at most 6 edges, its base level and left side.
pub fn sample_graph(seed: u64) -> (OrderedBipartiteGraph, usize, Vec<usize>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let n0 = rng.gen_range(1..=4);
    let left = rng.gen_range(1..=3.min(n0 + 1));
    let right = rng.gen_range(1..=3);
    let total = rng.gen_range(right..=6);
    let mut targets: Vec<usize> = (0..right).collect();
    targets.extend((right..total).map(|_| rng.gen_range(0..right)));
    let mut edges = Vec::new();
    for y in 0..right {
        let count = targets.iter().filter(|&&t| t == y).count();
        let mut ranks: Vec<usize> = (0..count).collect();
        ranks.shuffle(&mut rng);
        edges.extend(ranks.into_iter().map(|r| Edge::new(rng.gen_range(0..left), y, r)));
    }
    let mut vertices: Vec<usize> = (0..=n0).collect();
    vertices.shuffle(&mut rng);
    vertices.truncate(left);
    (OrderedBipartiteGraph { left, right, edges }, n0, vertices)
}

/// σ^k(w) by direct letter-by-letter expansion.
pub fn expand(s: &Substitution, w: &[usize], k: usize) -> Word {
    let mut cur = w.to_vec();
    for _ in 0..k {
        let mut next = Vec::new();
        for &a in &cur {
            for &b in s.image(a) {
                next.push(b);
            }
        }
        cur = next;
    }
    cur
}

/// All words of length ≤ n over an alphabet of size q.
pub fn all_words(q: usize, n: usize) -> Vec<Word> {
    let mut out = vec![vec![]];
    let mut layer: Vec<Word> = vec![vec![]];
    for _ in 0..n {
        layer = layer.iter().flat_map(|w| (0..q).map(move |a| [w.as_slice(), &[a]].concat())).collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Empirical return-time law of letter `a`: gap length ↦ share of positions of w.
pub fn gap_scan(w: &[usize], a: usize) -> (f64, std::collections::BTreeMap<usize, f64>) {
    let hits: Vec<usize> = w.iter().enumerate().filter(|(_, &b)| b == a).map(|(i, _)| i).collect();
    let mut law = std::collections::BTreeMap::new();
    for g in hits.windows(2) {
        *law.entry(g[1] - g[0]).or_insert(0.0) += 1.0 / w.len() as f64;
    }
    let mean = (hits[hits.len() - 1] - hits[0]) as f64 / (hits.len() - 1) as f64;
    (mean, law)
}
