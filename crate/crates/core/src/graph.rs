//! Finite simple connected graphs with precomputed closed neighborhoods.
//!
//! Vertices are dense indices `0..n`. The dynamics only ever touches a vertex
//! through its closed neighborhood `A_v = {v} ∪ N(v)`, so those sets are built
//! once at construction and kept sorted; every routine that samples fitness
//! over an `A_v` relies on that ascending order for reproducibility.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;

#[derive(Clone, Debug)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    closed: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from neighbor lists. Rejects self-loops, duplicate
    /// edges, asymmetric lists, out-of-range indices, and disconnected graphs.
    pub fn from_adjacency(adj: Vec<Vec<usize>>) -> Result<Self> {
        let n = adj.len();
        if n == 0 {
            return Err(Error::construction("graph must have at least one vertex"));
        }
        let mut adj = adj;
        for (v, nb) in adj.iter_mut().enumerate() {
            nb.sort_unstable();
            for w in nb.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::construction(format!(
                        "duplicate edge {v}-{}",
                        w[0]
                    )));
                }
            }
            if let Some(&u) = nb.iter().find(|&&u| u >= n) {
                return Err(Error::construction(format!(
                    "neighbor {u} of vertex {v} out of range (n = {n})"
                )));
            }
            if nb.binary_search(&v).is_ok() {
                return Err(Error::construction(format!("self-loop at vertex {v}")));
            }
        }
        for v in 0..n {
            for &u in &adj[v] {
                if adj[u].binary_search(&v).is_err() {
                    return Err(Error::construction(format!(
                        "edge {v}-{u} not symmetric"
                    )));
                }
            }
        }
        let closed: Vec<Vec<usize>> = adj
            .iter()
            .enumerate()
            .map(|(v, nb)| {
                let mut c = Vec::with_capacity(nb.len() + 1);
                c.extend_from_slice(nb);
                let pos = c.partition_point(|&u| u < v);
                c.insert(pos, v);
                c
            })
            .collect();
        let g = Graph { adj, closed };
        if !g.is_connected() {
            return Err(Error::construction("graph is not connected"));
        }
        Ok(g)
    }

    /// Cycle on `n >= 3` vertices, vertex `v` adjacent to `v ± 1 (mod n)`.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::construction(format!("cycle needs n >= 3, got {n}")));
        }
        let adj = (0..n)
            .map(|v| vec![(v + n - 1) % n, (v + 1) % n])
            .collect();
        Self::from_adjacency(adj)
    }

    /// Path on `n >= 2` vertices, `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::construction(format!("path needs n >= 2, got {n}")));
        }
        let adj = (0..n)
            .map(|v| {
                let mut nb = Vec::new();
                if v > 0 {
                    nb.push(v - 1);
                }
                if v + 1 < n {
                    nb.push(v + 1);
                }
                nb
            })
            .collect();
        Self::from_adjacency(adj)
    }

    /// Complete graph on `n >= 2` vertices.
    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::construction(format!(
                "complete graph needs n >= 2, got {n}"
            )));
        }
        let adj = (0..n)
            .map(|v| (0..n).filter(|&u| u != v).collect())
            .collect();
        Self::from_adjacency(adj)
    }

    /// Star with center 0 and `k >= 1` leaves `1..=k`.
    pub fn star(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::construction(format!("star needs k >= 1, got {k}")));
        }
        let mut adj = vec![(1..=k).collect::<Vec<_>>()];
        adj.extend((1..=k).map(|_| vec![0]));
        Self::from_adjacency(adj)
    }

    /// Uniform-ish random simple connected `d`-regular graph via the pairing
    /// model, retrying until the pairing is simple and connected.
    /// Deterministic in `seed`.
    pub fn random_regular(n: usize, d: usize, seed: u64) -> Result<Self> {
        if d == 0 || d >= n {
            return Err(Error::construction(format!(
                "regular graph needs 0 < d < n, got d = {d}, n = {n}"
            )));
        }
        if n * d % 2 != 0 {
            return Err(Error::construction(format!(
                "n * d must be even, got n = {n}, d = {d}"
            )));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat(v).take(d)).collect();
        'attempt: for _ in 0..1000 {
            stubs.shuffle(&mut rng);
            let mut adj = vec![Vec::with_capacity(d); n];
            for pair in stubs.chunks_exact(2) {
                let (a, b) = (pair[0], pair[1]);
                if a == b || adj[a].contains(&b) {
                    continue 'attempt;
                }
                adj[a].push(b);
                adj[b].push(a);
            }
            if let Ok(g) = Self::from_adjacency(adj) {
                return Ok(g);
            }
        }
        Err(Error::construction(format!(
            "no simple connected {d}-regular graph on {n} vertices found in 1000 pairings"
        )))
    }

    /// Parses an edge-list text: one `u v` pair per line, whitespace-separated,
    /// `#` starts a comment. Labels may be arbitrary tokens; they are mapped to
    /// dense indices in sorted order (numeric if every label parses as an
    /// integer, lexicographic otherwise), so vertex numbering does not depend
    /// on edge order.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut edges: Vec<(String, String, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) => {
                    edges.push((a.to_string(), b.to_string(), idx + 1))
                }
                _ => {
                    return Err(Error::construction(format!(
                        "line {}: expected exactly two vertex labels, got {line:?}",
                        idx + 1
                    )))
                }
            }
        }
        if edges.is_empty() {
            return Err(Error::construction("edge list is empty"));
        }
        let mut labels: Vec<&str> = edges
            .iter()
            .flat_map(|(a, b, _)| [a.as_str(), b.as_str()])
            .collect();
        labels.sort_unstable();
        labels.dedup();
        let all_numeric = labels.iter().all(|l| l.parse::<u64>().is_ok());
        if all_numeric {
            labels.sort_by_key(|l| (l.parse::<u64>().unwrap(), l.to_string()));
        }
        let index: std::collections::HashMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, i))
            .collect();
        let n = labels.len();
        let mut adj = vec![Vec::new(); n];
        for (a, b, line) in &edges {
            let (u, v) = (index[a.as_str()], index[b.as_str()]);
            if u == v {
                return Err(Error::construction(format!(
                    "line {line}: self-loop at {a}"
                )));
            }
            if adj[u].contains(&v) {
                return Err(Error::construction(format!(
                    "line {line}: duplicate edge {a} {b}"
                )));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        Self::from_adjacency(adj)
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// Closed neighborhood `A_v`, sorted ascending, always contains `v`.
    pub fn closed_neighborhood(&self, v: usize) -> &[usize] {
        &self.closed[v]
    }

    /// `|A_v| = deg(v) + 1`.
    pub fn closed_size(&self, v: usize) -> usize {
        self.closed[v].len()
    }

    pub fn contains_in_closed(&self, v: usize, u: usize) -> bool {
        self.closed[v].binary_search(&u).is_ok()
    }

    /// Boundary of `A_v`: vertices `z ∈ A_v` whose own closed neighborhood
    /// leaves `A_v`. A walk started outside `A_v` first enters `A_v`'s
    /// "witness set" at one of these.
    pub fn boundary(&self, v: usize) -> Vec<usize> {
        self.closed[v]
            .iter()
            .copied()
            .filter(|&z| {
                self.closed[z]
                    .iter()
                    .any(|&y| self.closed[v].binary_search(&y).is_err())
            })
            .collect()
    }

    /// `Some(d)` when every vertex has degree `d`.
    pub fn constant_degree(&self) -> Option<usize> {
        let d = self.degree(0);
        self.adj.iter().all(|nb| nb.len() == d).then_some(d)
    }

    /// Stationary measure of the vertex process: `μ(v) = |A_v| / Σ_u |A_u|`.
    pub fn vertex_stationary(&self) -> VertexMeasure {
        let sizes: Vec<usize> = (0..self.vertex_count())
            .map(|v| self.closed_size(v))
            .collect();
        let total = sizes.iter().sum();
        VertexMeasure { sizes, total }
    }

    fn is_connected(&self) -> bool {
        let n = self.vertex_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in &self.adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n
    }
}

/// Exact rational vertex measure `|A_v| / S` with `S = Σ_u |A_u|`.
#[derive(Clone, Debug)]
pub struct VertexMeasure {
    sizes: Vec<usize>,
    total: usize,
}

impl VertexMeasure {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Numerator `|A_v|` of the exact weight.
    pub fn numer(&self, v: usize) -> usize {
        self.sizes[v]
    }

    /// Common denominator `S = Σ_u |A_u|`.
    pub fn denom(&self) -> usize {
        self.total
    }

    pub fn weight(&self, v: usize) -> f64 {
        self.sizes[v] as f64 / self.total as f64
    }

    /// Exact integer inversion sampling, no floating-point bias.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut r = rng.random_range(0..self.total);
        for (v, &s) in self.sizes.iter().enumerate() {
            if r < s {
                return v;
            }
            r -= s;
        }
        unreachable!("cumulative weights exhausted");
    }
}
