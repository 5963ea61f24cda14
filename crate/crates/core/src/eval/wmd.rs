use ndarray::Array2;

use super::topics::{EmbeddingTable, TopicDescription};
use super::{EvalError, Result};

/// Residual capacities at or below this are treated as exhausted.
const CAP_EPS: f64 = 1e-15;
/// Path costs must improve by more than this to relax an edge.
const COST_EPS: f64 = 1e-13;

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

struct Network {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Network {
    fn new(n: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0.0, cost: -cost });
    }

    /// Cheapest residual path from `s` to `t` as a list of edge ids.
    fn shortest_path(&self, s: usize, t: usize) -> Option<Vec<usize>> {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut via = vec![usize::MAX; n];
        dist[s] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u].is_infinite() {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.cap > CAP_EPS && dist[u] + edge.cost < dist[edge.to] - COST_EPS {
                        dist[edge.to] = dist[u] + edge.cost;
                        via[edge.to] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[t].is_infinite() {
            return None;
        }
        let mut path = Vec::new();
        let mut v = t;
        while v != s {
            let e = via[v];
            path.push(e);
            v = self.edges[e ^ 1].to;
        }
        Some(path)
    }
}

/// Optimal transport cost between weight vectors `a` and `b` under the cost
/// matrix `cost` (`a.len() x b.len()`). Both sides are rescaled to unit mass.
/// Solved exactly by successive shortest augmenting paths.
pub fn transport_cost(a: &[f64], b: &[f64], cost: &Array2<f64>) -> Result<f64> {
    let (m, n) = (a.len(), b.len());
    if cost.dim() != (m, n) {
        return Err(EvalError::Dimension(format!("cost matrix {:?} for {m} x {n} weights", cost.dim())));
    }
    let normalize = |w: &[f64]| -> Result<Vec<f64>> {
        if w.is_empty() || w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(EvalError::NotDistribution("transport weights must be nonnegative and finite".into()));
        }
        let s: f64 = w.iter().sum();
        if s <= 0.0 {
            return Err(EvalError::NotDistribution("transport weights have no mass".into()));
        }
        Ok(w.iter().map(|x| x / s).collect())
    };
    let (a, b) = (normalize(a)?, normalize(b)?);
    let (s, t) = (0, m + n + 1);
    let mut net = Network::new(m + n + 2);
    for (u, &w) in a.iter().enumerate() {
        net.add(s, 1 + u, w, 0.0);
    }
    for (v, &w) in b.iter().enumerate() {
        net.add(1 + m + v, t, w, 0.0);
    }
    for u in 0..m {
        for v in 0..n {
            net.add(1 + u, 1 + m + v, a[u].min(b[v]), cost[[u, v]]);
        }
    }
    while let Some(path) = net.shortest_path(s, t) {
        let push = path.iter().map(|&e| net.edges[e].cap).fold(f64::INFINITY, f64::min);
        for &e in &path {
            net.edges[e].cap -= push;
            net.edges[e ^ 1].cap += push;
        }
    }
    let mut total = 0.0;
    for u in 0..m {
        for &e in &net.adj[1 + u] {
            let edge = &net.edges[e];
            if e % 2 == 0 && edge.to > m {
                total += net.edges[e ^ 1].cap * edge.cost;
            }
        }
    }
    Ok(total.max(0.0))
}

fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Word mover's distance between two topic descriptions under Euclidean
/// distances of their word embeddings.
pub fn wmd(a: &TopicDescription, b: &TopicDescription, emb: &EmbeddingTable) -> Result<f64> {
    let va = a.words().iter().map(|(t, _)| emb.get(t)).collect::<Result<Vec<_>>>()?;
    let vb = b.words().iter().map(|(t, _)| emb.get(t)).collect::<Result<Vec<_>>>()?;
    let cost = Array2::from_shape_fn((va.len(), vb.len()), |(i, j)| {
        if a.words()[i].0 == b.words()[j].0 {
            0.0
        } else {
            euclidean(va[i], vb[j])
        }
    });
    let wa: Vec<f64> = a.words().iter().map(|w| w.1).collect();
    let wb: Vec<f64> = b.words().iter().map(|w| w.1).collect();
    transport_cost(&wa, &wb, &cost)
}

/// Sum over node topics of the distance to the closest evaluated topic,
/// together with that sum divided by the number of node topics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amwmd {
    pub sum: f64,
    pub normalized: f64,
}

pub fn amwmd(node_tds: &[TopicDescription], eval_tds: &[TopicDescription], emb: &EmbeddingTable) -> Result<Amwmd> {
    if node_tds.is_empty() || eval_tds.is_empty() {
        return Err(EvalError::Invalid("AMWMD needs topics on both sides".into()));
    }
    let mut sum = 0.0;
    for a in node_tds {
        let mut best = f64::INFINITY;
        for b in eval_tds {
            best = best.min(wmd(a, b, emb)?);
        }
        sum += best;
    }
    Ok(Amwmd {
        sum,
        normalized: sum / node_tds.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn td(id: usize, words: &[(&str, f64)]) -> TopicDescription {
        TopicDescription::new(id, words.iter().map(|(t, w)| (t.to_string(), *w)).collect()).unwrap()
    }

    fn plane() -> EmbeddingTable {
        let mut e = EmbeddingTable::new(2).unwrap();
        e.insert("x", vec![0.0, 0.0]).unwrap();
        e.insert("y", vec![0.0, 2.0]).unwrap();
        e.insert("z", vec![0.0, 1.0]).unwrap();
        e.insert("w", vec![3.0, 4.0]).unwrap();
        e
    }

    /// Minimum over all basic feasible solutions of the transportation
    /// polytope: every spanning tree of `m + n - 1` cells whose unique flow
    /// is nonnegative.
    pub(crate) fn brute_force(a: &[f64], b: &[f64], cost: &Array2<f64>) -> f64 {
        let (m, n) = (a.len(), b.len());
        let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        let k = m + n - 1;
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << cells.len()) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let chosen: Vec<(usize, usize)> = (0..cells.len()).filter(|&c| mask >> c & 1 == 1).map(|c| cells[c]).collect();
            let (mut row, mut col) = (a.to_vec(), b.to_vec());
            let mut flow = vec![None; chosen.len()];
            let mut open = chosen.len();
            let mut progress = true;
            while open > 0 && progress {
                progress = false;
                for i in 0..m {
                    let idx: Vec<usize> = (0..chosen.len()).filter(|&c| flow[c].is_none() && chosen[c].0 == i).collect();
                    if idx.len() == 1 {
                        let c = idx[0];
                        let f = row[i];
                        flow[c] = Some(f);
                        row[i] -= f;
                        col[chosen[c].1] -= f;
                        open -= 1;
                        progress = true;
                    }
                }
                for j in 0..n {
                    let idx: Vec<usize> = (0..chosen.len()).filter(|&c| flow[c].is_none() && chosen[c].1 == j).collect();
                    if idx.len() == 1 {
                        let c = idx[0];
                        let f = col[j];
                        flow[c] = Some(f);
                        col[j] -= f;
                        row[chosen[c].0] -= f;
                        open -= 1;
                        progress = true;
                    }
                }
            }
            if open > 0 {
                continue;
            }
            let flows: Vec<f64> = flow.into_iter().map(Option::unwrap).collect();
            if flows.iter().any(|&f| f < -1e-12) || row.iter().chain(&col).any(|r| r.abs() > 1e-9) {
                continue;
            }
            let c: f64 = chosen.iter().zip(&flows).map(|(&(i, j), f)| f * cost[[i, j]]).sum();
            best = best.min(c);
        }
        best
    }

    #[test]
    fn wmd_examples() {
        let e = plane();
        assert_eq!(wmd(&td(0, &[("x", 1.0)]), &td(1, &[("w", 1.0)]), &e).unwrap(), 5.0);
        let a = td(0, &[("x", 0.5), ("y", 0.5)]);
        let b = td(1, &[("z", 1.0)]);
        let cost = Array2::from_shape_vec((2, 1), vec![1.0, 1.0]).unwrap();
        assert_eq!(brute_force(&[0.5, 0.5], &[1.0], &cost), 1.0);
        assert!((wmd(&a, &b, &e).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(wmd(&a, &a, &e).unwrap(), 0.0);
        let missing = td(2, &[("q", 1.0)]);
        assert!(matches!(wmd(&a, &missing, &e), Err(EvalError::MissingEmbedding(t)) if t == "q"));
    }

    #[test]
    fn solver_matches_brute_force() {
        let mut rng = rng::seeded(77);
        for _ in 0..200 {
            let m = rng.random_range(1..=4);
            let n = rng.random_range(1..=4);
            let mut draw = |k: usize| {
                let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|x| x / s).collect::<Vec<f64>>()
            };
            let (a, b) = (draw(m), draw(n));
            let cost = Array2::from_shape_fn((m, n), |_| rng.random_range(0.0..5.0));
            let exact = transport_cost(&a, &b, &cost).unwrap();
            let oracle = brute_force(&a, &b, &cost);
            assert!((exact - oracle).abs() <= 1e-9, "{exact} vs {oracle}");
        }
    }

    #[test]
    fn amwmd_examples() {
        let e = plane();
        let node = vec![td(0, &[("x", 1.0)]), td(1, &[("y", 0.5), ("z", 0.5)])];
        let same = amwmd(&node, &node, &e).unwrap();
        assert_eq!(same, Amwmd { sum: 0.0, normalized: 0.0 });
        let mut superset = node.clone();
        superset.insert(0, td(5, &[("w", 1.0)]));
        assert_eq!(amwmd(&node, &superset, &e).unwrap().sum, 0.0);
        let single = [td(0, &[("x", 1.0)])];
        let others = [td(1, &[("w", 1.0)]), td(2, &[("z", 1.0)])];
        assert_eq!(amwmd(&single, &others, &e).unwrap().sum, 1.0);
        let far = [td(1, &[("w", 1.0)])];
        let r = amwmd(&node, &far, &e).unwrap();
        assert!((r.normalized - r.sum / 2.0).abs() < 1e-15);
        assert!(amwmd(&[], &far, &e).is_err());
    }

    proptest! {
        #[test]
        fn wmd_symmetric_and_nonnegative(
            wa in proptest::collection::vec(0.05..1.0f64, 1..5),
            wb in proptest::collection::vec(0.05..1.0f64, 1..5),
            seed in any::<u64>(),
        ) {
            let terms: Vec<String> = (0..8).map(|i| format!("t{i}")).collect();
            let emb = EmbeddingTable::random(terms.iter().map(String::as_str), 3, &mut rng::seeded(seed)).unwrap();
            let make = |w: &[f64], offset: usize| {
                let s: f64 = w.iter().sum();
                let words = w.iter().enumerate().map(|(i, x)| (terms[i + offset].clone(), x / s)).collect();
                TopicDescription::new(0, words).unwrap()
            };
            let (a, b) = (make(&wa, 0), make(&wb, 3));
            let ab = wmd(&a, &b, &emb).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - wmd(&b, &a, &emb).unwrap()).abs() < 1e-12);
            prop_assert_eq!(wmd(&a, &a, &emb).unwrap(), 0.0);
        }
    }
}
