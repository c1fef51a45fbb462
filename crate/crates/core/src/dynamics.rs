//! The chain: an active vertex plus a one-to-one fitness map.
//!
//! One step from state `(x, Γ)`:
//!   1. the new active vertex is `argmin_{u ∈ A_x} Γ(u)`;
//!   2. fitness on the new active vertex's closed neighborhood is replaced by
//!      fresh independent `Exp(1)` draws, everything else is untouched.
//!
//! Because step t replaces all of `A_{X_t}` with fresh i.i.d. values, the
//! argmin at step t+1 is uniform on `A_{X_t}`: the active vertex performs a
//! lazy random walk (uniform on the closed neighborhood, including staying).
//!
//! Determinism contract: replacement draws are made in ascending vertex order
//! of `A_{X_{t+1}}`, one `Exp(1)` per vertex, so a (seed, stream) pair fixes
//! the trajectory bit-for-bit. Argmin ties (a measure-zero event that can
//! only arise from hand-crafted states) resolve to the lowest vertex index
//! and are counted in a diagnostics counter.

use crate::error::{Error, Result};
use crate::graph::Graph;
use rand::Rng;
use rand_distr::Exp1;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    active: usize,
    fitness: Vec<f64>,
    step: u64,
    ties: u64,
}

impl ChainState {
    /// Validates vertex range, length, finiteness, and pairwise-distinct
    /// fitness (the map must be one-to-one).
    pub fn new(g: &Graph, active: usize, fitness: Vec<f64>) -> Result<Self> {
        if active >= g.vertex_count() {
            return Err(Error::input(format!(
                "active vertex {active} out of range (n = {})",
                g.vertex_count()
            )));
        }
        if fitness.len() != g.vertex_count() {
            return Err(Error::input(format!(
                "fitness vector has length {}, graph has {} vertices",
                fitness.len(),
                g.vertex_count()
            )));
        }
        if fitness.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("fitness values must be finite"));
        }
        if !distinct(&fitness) {
            return Err(Error::input("fitness values must be pairwise distinct"));
        }
        Ok(ChainState {
            active,
            fitness,
            step: 0,
            ties: 0,
        })
    }

    /// Test hook: skips the one-to-one validation so tie handling can be
    /// exercised.
    #[cfg(test)]
    pub(crate) fn new_unchecked(active: usize, fitness: Vec<f64>) -> Self {
        ChainState {
            active,
            fitness,
            step: 0,
            ties: 0,
        }
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn fitness(&self) -> &[f64] {
        &self.fitness
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// Number of argmin ties resolved so far (diagnostics; almost surely 0).
    pub fn tie_count(&self) -> u64 {
        self.ties
    }

    pub fn is_one_to_one(&self) -> bool {
        distinct(&self.fitness)
    }
}

fn distinct(xs: &[f64]) -> bool {
    let mut sorted = xs.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.windows(2).all(|w| w[0] < w[1])
}

#[derive(Clone, Debug)]
pub enum InitialCondition {
    /// All fitness near 1.0 with a tiny uniform perturbation (scale 1e-6) to
    /// keep the map one-to-one; active vertex uniform.
    AllEqualPerturbed,
    /// I.i.d. `Exp(1)` fitness; active vertex uniform.
    IidExp,
    /// Caller-specified state; fails on duplicate fitness values.
    Explicit { active: usize, fitness: Vec<f64> },
}

pub fn initial_state<R: Rng + ?Sized>(
    g: &Graph,
    kind: InitialCondition,
    rng: &mut R,
) -> Result<ChainState> {
    let n = g.vertex_count();
    match kind {
        InitialCondition::AllEqualPerturbed => loop {
            let active = rng.random_range(0..n);
            let fitness: Vec<f64> = (0..n).map(|_| 1.0 + 1e-6 * rng.random::<f64>()).collect();
            if distinct(&fitness) {
                return ChainState::new(g, active, fitness);
            }
        },
        InitialCondition::IidExp => loop {
            let active = rng.random_range(0..n);
            let fitness: Vec<f64> = (0..n).map(|_| rng.sample(Exp1)).collect();
            if distinct(&fitness) {
                return ChainState::new(g, active, fitness);
            }
        },
        InitialCondition::Explicit { active, fitness } => ChainState::new(g, active, fitness),
    }
}

/// What one step changed: the new active vertex, the replaced vertices
/// (= its closed neighborhood, ascending), and their fresh values, aligned.
#[derive(Clone, Debug, Default)]
pub struct StepRecord {
    pub new_active: usize,
    pub replaced: Vec<usize>,
    pub new_values: Vec<f64>,
}

/// Argmin of `fitness` over `A_v`; `true` when a tie was broken.
pub(crate) fn argmin_closed(g: &Graph, v: usize, fitness: &[f64]) -> (usize, bool) {
    let mut best = g.closed_neighborhood(v)[0];
    let mut tie = false;
    for &u in &g.closed_neighborhood(v)[1..] {
        if fitness[u] < fitness[best] {
            best = u;
            tie = false;
        } else if fitness[u] == fitness[best] {
            tie = true; // lowest index wins: best is already the smaller one
        }
    }
    (best, tie)
}

/// Advances the chain one step in place, reusing the record's buffers.
pub fn step<R: Rng + ?Sized>(g: &Graph, s: &mut ChainState, rng: &mut R, rec: &mut StepRecord) {
    let (next, tie) = argmin_closed(g, s.active, &s.fitness);
    if tie {
        s.ties += 1;
    }
    s.active = next;
    s.step += 1;
    rec.new_active = next;
    rec.replaced.clear();
    rec.new_values.clear();
    for &u in g.closed_neighborhood(next) {
        let x: f64 = rng.sample(Exp1);
        s.fitness[u] = x;
        rec.replaced.push(u);
        rec.new_values.push(x);
    }
    debug_assert!(s.is_one_to_one(), "fitness map lost injectivity");
}

/// Applies a transition chosen and drawn externally: couplings share or
/// mirror replacement vectors, so the writes arrive as explicit pairs.
pub(crate) fn apply_transition(s: &mut ChainState, next: usize, writes: &[(usize, f64)]) {
    s.active = next;
    s.step += 1;
    for &(v, x) in writes {
        s.fitness[v] = x;
    }
    debug_assert!(s.is_one_to_one(), "fitness map lost injectivity");
}

/// One move of the bare vertex process: uniform on `A_v` (lazy).
pub fn random_walk_step<R: Rng + ?Sized>(g: &Graph, v: usize, rng: &mut R) -> usize {
    let a = g.closed_neighborhood(v);
    a[rng.random_range(0..a.len())]
}

/// Step-by-step hook. Failures abort the run with the step index attached.
pub trait Observer {
    fn observe(
        &mut self,
        g: &Graph,
        state: &ChainState,
        record: &StepRecord,
    ) -> std::result::Result<(), String>;
}

/// Runs `steps` steps, feeding every observer after each step.
pub fn run<R: Rng + ?Sized>(
    g: &Graph,
    s: &mut ChainState,
    steps: u64,
    rng: &mut R,
    observers: &mut [&mut dyn Observer],
) -> Result<()> {
    let mut rec = StepRecord::default();
    for _ in 0..steps {
        step(g, s, rng, &mut rec);
        for obs in observers.iter_mut() {
            obs.observe(g, s, &rec).map_err(|message| Error::Observer {
                step: s.step_index(),
                message,
            })?;
        }
    }
    Ok(())
}
