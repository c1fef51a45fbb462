//! Exact stationary sampling and closed-form stationary marginals.
//!
//! The chain is ergodic and its stationary law can be sampled exactly without
//! burn-in: draw the active vertex `X₀` from the vertex measure
//! `μ(v) = |A_v|/S`, run an auxiliary lazy walk `Z` from `X₀`, and classify
//! every vertex `v` by the first time `τ_v` the walk enters `A_v`. Vertices
//! with `τ_v = 0` (exactly `A_{X₀}`) get fresh i.i.d. `Exp(1)` fitness;
//! vertices first reached at time `i >= 1` get i.i.d. `ExpPlus(|A_{Z_i}|)`.
//! The walk is recorded so each class's parameter is unambiguous.
//!
//! On a `d`-regular graph the class parameter is always `d + 1`, so the
//! partition can be skipped: `X₀` uniform, `Exp(1)` on `A_{X₀}`,
//! `ExpPlus(d+1)` elsewhere.

use crate::dist::Law;
use crate::dynamics::{self, ChainState};
use crate::error::{Error, Result};
use crate::graph::Graph;
use nalgebra::DMatrix;
use rand::Rng;

/// Default cap on auxiliary-walk length; a connected graph's neighborhood
/// cover time is finite a.s., so hitting the cap means a broken RNG.
pub const DEFAULT_WALK_CAP: u64 = 1_000_000_000;

/// The auxiliary walk and the induced first-entry classes.
#[derive(Clone, Debug)]
pub struct HittingPartition {
    pub source: usize,
    /// Walk positions `Z_0 .. Z_L`; `L` is the neighborhood cover time.
    pub walk: Vec<usize>,
    /// `level[v]` = first `t` with `Z_t ∈ A_v`.
    pub level: Vec<usize>,
    /// `classes[i]` = vertices first reached at time `i`, ascending;
    /// `classes[0] == A_source`, classes partition the vertex set.
    pub classes: Vec<Vec<usize>>,
}

pub fn hitting_partition<R: Rng + ?Sized>(
    g: &Graph,
    source: usize,
    rng: &mut R,
    max_steps: u64,
) -> Result<HittingPartition> {
    let n = g.vertex_count();
    if source >= n {
        return Err(Error::input(format!(
            "source vertex {source} out of range (n = {n})"
        )));
    }
    const UNSET: usize = usize::MAX;
    let mut level = vec![UNSET; n];
    let mut remaining = n;
    let mut walk = vec![source];
    for &v in g.closed_neighborhood(source) {
        level[v] = 0;
        remaining -= 1;
    }
    let mut pos = source;
    let mut t = 0usize;
    while remaining > 0 {
        t += 1;
        if t as u64 > max_steps {
            return Err(Error::internal(format!(
                "auxiliary walk failed to cover all neighborhoods within {max_steps} steps"
            )));
        }
        pos = dynamics::random_walk_step(g, pos, rng);
        walk.push(pos);
        for &v in g.closed_neighborhood(pos) {
            if level[v] == UNSET {
                level[v] = t;
                remaining -= 1;
            }
        }
    }
    let mut classes = vec![Vec::new(); walk.len()];
    for v in 0..n {
        classes[level[v]].push(v);
    }
    Ok(HittingPartition {
        source,
        walk,
        level,
        classes,
    })
}

/// Draws one state exactly from the stationary law. Draw order: active vertex,
/// auxiliary walk to cover, then fitness per class in class order (vertices
/// ascending within a class). Colliding values (measure-zero) are redrawn from
/// their own class law.
pub fn sample_stationary<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Result<ChainState> {
    sample_stationary_capped(g, rng, DEFAULT_WALK_CAP)
}

pub fn sample_stationary_capped<R: Rng + ?Sized>(
    g: &Graph,
    rng: &mut R,
    max_steps: u64,
) -> Result<ChainState> {
    let measure = g.vertex_stationary();
    let x0 = measure.sample(rng);
    let part = hitting_partition(g, x0, rng, max_steps)?;
    let n = g.vertex_count();
    let mut fitness = vec![0.0f64; n];
    let mut law_of = vec![Law::Exp1; n];
    for (i, class) in part.classes.iter().enumerate() {
        let law = if i == 0 {
            Law::Exp1
        } else {
            Law::ExpPlus(g.closed_size(part.walk[i]) as u32)
        };
        for &v in class {
            law_of[v] = law;
            fitness[v] = law.sample(rng);
        }
    }
    redraw_collisions(&mut fitness, &law_of, rng)?;
    ChainState::new(g, x0, fitness)
}

/// Constant-degree shortcut with the same output law: uniform active vertex,
/// `Exp(1)` on its closed neighborhood, `ExpPlus(d+1)` elsewhere, drawn in
/// ascending vertex order.
pub fn sample_stationary_regular<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Result<ChainState> {
    let d = g
        .constant_degree()
        .ok_or_else(|| Error::input("regular sampler requires a constant-degree graph"))?;
    let n = g.vertex_count();
    let x0 = rng.random_range(0..n);
    let mut in_a = vec![false; n];
    for &v in g.closed_neighborhood(x0) {
        in_a[v] = true;
    }
    let plus = Law::ExpPlus((d + 1) as u32);
    let mut fitness = vec![0.0f64; n];
    let mut law_of = vec![Law::Exp1; n];
    for v in 0..n {
        let law = if in_a[v] { Law::Exp1 } else { plus };
        law_of[v] = law;
        fitness[v] = law.sample(rng);
    }
    redraw_collisions(&mut fitness, &law_of, rng)?;
    ChainState::new(g, x0, fitness)
}

fn redraw_collisions<R: Rng + ?Sized>(
    fitness: &mut [f64],
    law_of: &[Law],
    rng: &mut R,
) -> Result<()> {
    for _ in 0..100 {
        let mut order: Vec<usize> = (0..fitness.len()).collect();
        order.sort_unstable_by(|&a, &b| fitness[a].partial_cmp(&fitness[b]).unwrap());
        let dup: Vec<usize> = order
            .windows(2)
            .filter(|w| fitness[w[0]] == fitness[w[1]])
            .map(|w| w[1])
            .collect();
        if dup.is_empty() {
            return Ok(());
        }
        for v in dup {
            fitness[v] = law_of[v].sample(rng);
        }
    }
    Err(Error::internal(
        "fitness collisions persisted through 100 redraws; RNG is broken",
    ))
}

/// Where a walk from `u` first enters `A_v`: exact hitting probabilities
/// `P_u(X_σ = z)` for `z` in the boundary of `A_v`, solved as a dense linear
/// system (one harmonic function per boundary vertex, shared LU).
pub fn hitting_distribution(g: &Graph, u: usize, v: usize) -> Result<Vec<(usize, f64)>> {
    let n = g.vertex_count();
    if u >= n || v >= n {
        return Err(Error::input(format!(
            "vertex out of range: u = {u}, v = {v}, n = {n}"
        )));
    }
    if g.contains_in_closed(v, u) {
        return Err(Error::input(format!(
            "u = {u} already inside the closed neighborhood of v = {v}"
        )));
    }
    let sol = solve_hitting_system(g, v)?;
    let row = sol.index_of[u];
    debug_assert!(row != usize::MAX);
    let mut out: Vec<(usize, f64)> = sol
        .boundary
        .iter()
        .enumerate()
        .map(|(zi, &z)| (z, sol.h[(row, zi)]))
        .collect();
    let total: f64 = out.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::internal(format!(
            "hitting probabilities sum to {total}, expected 1"
        )));
    }
    out.sort_unstable_by_key(|&(z, _)| z);
    Ok(out)
}

struct HittingSolution {
    /// Row index per vertex outside `A_v`; `usize::MAX` for vertices in `A_v`.
    index_of: Vec<usize>,
    boundary: Vec<usize>,
    /// `h[(i, zi)]` = P(first entry of `A_v` happens at `boundary[zi]`),
    /// starting from the i-th outside vertex.
    h: DMatrix<f64>,
}

/// Harmonic system for first entry into `A_v`: for every outside vertex `w`,
/// `h_z(w) = Σ_{y ∈ A_w} h_z(y) / |A_w|` with `h_z = δ_z` on `A_v`.
fn solve_hitting_system(g: &Graph, v: usize) -> Result<HittingSolution> {
    let n = g.vertex_count();
    let outside: Vec<usize> = (0..n).filter(|&w| !g.contains_in_closed(v, w)).collect();
    let boundary = g.boundary(v);
    let k = outside.len();
    if k == 0 {
        return Err(Error::input(format!(
            "closed neighborhood of v = {v} already covers the graph"
        )));
    }
    let mut index_of = vec![usize::MAX; n];
    for (i, &w) in outside.iter().enumerate() {
        index_of[w] = i;
    }
    let mut m = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DMatrix::<f64>::zeros(k, boundary.len());
    for (i, &w) in outside.iter().enumerate() {
        let inv = 1.0 / g.closed_size(w) as f64;
        m[(i, i)] = 1.0;
        for &y in g.closed_neighborhood(w) {
            if index_of[y] != usize::MAX {
                m[(i, index_of[y])] -= inv;
            } else {
                // y is in A_v; only boundary vertices are reachable from outside
                let zi = boundary
                    .iter()
                    .position(|&z| z == y)
                    .ok_or_else(|| Error::internal("outside vertex adjacent to non-boundary"))?;
                rhs[(i, zi)] += inv;
            }
        }
    }
    let lu = m.clone().lu();
    let h = lu
        .solve(&rhs)
        .ok_or_else(|| Error::internal("hitting system is singular"))?;
    let residual = (&m * &h - &rhs).abs().max();
    if residual > 1e-10 {
        return Err(Error::internal(format!(
            "hitting solve residual {residual} exceeds 1e-10"
        )));
    }
    Ok(HittingSolution {
        index_of,
        boundary,
        h,
    })
}

/// Mixture of fitness laws with weights summing to 1; components are sorted
/// (`Exp(1)` first, then `ExpPlus(n)` by `n`) and merged.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalMixture {
    components: Vec<(f64, Law)>,
}

impl MarginalMixture {
    fn from_parts(parts: impl IntoIterator<Item = (f64, Law)>) -> Result<Self> {
        let mut merged: std::collections::BTreeMap<Law, f64> = std::collections::BTreeMap::new();
        for (w, law) in parts {
            if w < -1e-15 {
                return Err(Error::internal(format!("negative mixture weight {w}")));
            }
            if w > 0.0 {
                *merged.entry(law).or_insert(0.0) += w;
            }
        }
        let components: Vec<(f64, Law)> = merged.into_iter().map(|(l, w)| (w, l)).collect();
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::internal(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(MarginalMixture { components })
    }

    pub fn components(&self) -> &[(f64, Law)] {
        &self.components
    }

    pub fn weight_of(&self, law: Law) -> f64 {
        self.components
            .iter()
            .find(|&&(_, l)| l == law)
            .map_or(0.0, |&(w, _)| w)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        self.components.iter().map(|(w, l)| w * l.cdf(t)).sum()
    }

    pub fn density(&self, t: f64) -> f64 {
        self.components.iter().map(|(w, l)| w * l.density(t)).sum()
    }
}

impl std::fmt::Display for MarginalMixture {
    /// Weights print rounded to 12 decimals (their numeric contract); the
    /// stored components keep full precision.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, (w, law)) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, "+")?;
            }
            let fixed = format!("{w:.12}");
            let trimmed = fixed.trim_end_matches('0').trim_end_matches('.');
            write!(f, "{trimmed}*{law}")?;
        }
        Ok(())
    }
}

/// Closed-form stationary fitness marginal at `v`:
/// with weight `Σ_{u ∈ A_v} |A_u| / S` the fitness is fresh `Exp(1)`
/// (the active vertex is inside `A_v`); each outside start `u` contributes
/// `|A_u|/S` split over the boundary entry points `z` of `A_v`, landing on
/// `ExpPlus(|A_z|)`.
pub fn stationary_marginal(g: &Graph, v: usize) -> Result<MarginalMixture> {
    let n = g.vertex_count();
    if v >= n {
        return Err(Error::input(format!("vertex {v} out of range (n = {n})")));
    }
    let measure = g.vertex_stationary();
    let s = measure.denom() as f64;
    let inside: usize = g
        .closed_neighborhood(v)
        .iter()
        .map(|&u| g.closed_size(u))
        .sum();
    let mut parts: Vec<(f64, Law)> = vec![(inside as f64 / s, Law::Exp1)];
    let outside: Vec<usize> = (0..n).filter(|&u| !g.contains_in_closed(v, u)).collect();
    if !outside.is_empty() {
        let sol = solve_hitting_system(g, v)?;
        for &u in &outside {
            let coeff = g.closed_size(u) as f64 / s;
            let row = sol.index_of[u];
            for (zi, &z) in sol.boundary.iter().enumerate() {
                parts.push((
                    coeff * sol.h[(row, zi)],
                    Law::ExpPlus(g.closed_size(z) as u32),
                ));
            }
        }
    }
    MarginalMixture::from_parts(parts)
}

/// Stationary fitness marginal of any vertex of a `d`-regular graph on
/// `n` vertices: `(d+1)/n · Exp(1) + (1 - (d+1)/n) · ExpPlus(d+1)`.
pub fn regular_marginal(d: u32, n_vertices: usize) -> Result<MarginalMixture> {
    if d < 1 {
        return Err(Error::input(format!("degree must be >= 1, got {d}")));
    }
    if n_vertices < d as usize + 1 {
        return Err(Error::input(format!(
            "a {d}-regular graph needs at least {} vertices, got {n_vertices}",
            d + 1
        )));
    }
    let q = (d as f64 + 1.0) / n_vertices as f64;
    MarginalMixture::from_parts([(q, Law::Exp1), (1.0 - q, Law::ExpPlus(d + 1))])
}

/// Joint stationary fitness law of two vertices of a `d`-regular graph whose
/// closed neighborhoods are disjoint (requires `n >= 2(d+1)`): a three-part
/// product mixture, two `(d+1)/n` parts where exactly one coordinate is fresh
/// and the remainder where both are conditioned.
#[derive(Clone, Debug, PartialEq)]
pub struct PairJoint {
    components: Vec<(f64, Law, Law)>,
}

impl PairJoint {
    pub fn components(&self) -> &[(f64, Law, Law)] {
        &self.components
    }

    pub fn cdf(&self, s: f64, t: f64) -> f64 {
        self.components
            .iter()
            .map(|(w, a, b)| w * a.cdf(s) * b.cdf(t))
            .sum()
    }
}

pub fn regular_pair_joint(d: u32, n_vertices: usize) -> Result<PairJoint> {
    if d < 1 {
        return Err(Error::input(format!("degree must be >= 1, got {d}")));
    }
    if n_vertices < 2 * (d as usize + 1) {
        return Err(Error::input(format!(
            "joint law requires disjoint closed neighborhoods, so n >= 2(d+1) = {}; got {n_vertices}",
            2 * (d + 1)
        )));
    }
    let q = (d as f64 + 1.0) / n_vertices as f64;
    let plus = Law::ExpPlus(d + 1);
    let mut components = vec![
        (q, Law::Exp1, plus),
        (q, plus, Law::Exp1),
    ];
    if 1.0 - 2.0 * q > 0.0 {
        components.push((1.0 - 2.0 * q, plus, plus));
    }
    Ok(PairJoint { components })
}
