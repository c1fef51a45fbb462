//! Couplings of two chains and the resulting two-sided bounds on the
//! worst-case total-variation distance `d̄_t` to stationarity.
//!
//! Two constructions share one replacement-vector mechanism `K(t, v)`: when
//! both chains replace the same vertex's closed neighborhood at the same step
//! they receive the same fresh values, otherwise their draws are independent.
//!
//! * Generic coupling (any graph): the two chains evolve independently until
//!   their active vertices meet, after which the shared vectors glue them.
//!   The walk-meeting time `tau_walk` plus the post-meeting
//!   neighborhood-cover time `sigma_bar` dominates the full coalescence time
//!   `tau_chain`.
//! * Reflection coupling (cycles, `N` a multiple of 4): the second chain
//!   mirrors the first through the equator `{N/4, 3N/4}` until the walk hits
//!   the equator. Mirroring yields the lower-bound witness `sigma_bar_b`
//!   (cover time of everything but the opposite equator vertex) with
//!   `tau_chain >= tau_walk + sigma_bar_b` on every path.
//!
//! `d̄_t` itself is never estimated (total variation on a continuous state
//! space); only the computable bounds are produced:
//! `P(sigma_min > t) <= d̄_t <= max over start pairs of
//! P(tau_walk + sigma_max > t)`, and on cycles the sharper sandwich
//! `(1/2)P(tau1 + tau2 > t) <= d̄_t <= P(tau1 + tau3 > t)`.

use crate::dynamics::{self, ChainState};
use crate::error::{Error, Result};
use crate::graph::Graph;
use rand::Rng;
use rand_distr::Exp1;

/// Safety cap for walk simulations that are a.s. finite but unbounded;
/// reaching it signals a broken RNG, not a slow graph.
const WALK_SAFETY_CAP: u64 = 100_000_000;

/// Times recorded from one coupled run. `None` fields were still pending when
/// `max_steps` ran out (`truncated` is set); censored traces feed tail
/// estimates as mass beyond the horizon.
#[derive(Clone, Debug)]
pub struct CouplingTrace {
    /// First `t` with equal active vertices and equal fitness on the shared
    /// closed neighborhood (automatic for meetings at `t >= 1`).
    pub tau_walk: Option<u64>,
    /// Steps after `tau_walk` until the replaced neighborhoods cover `V`.
    pub sigma_bar: Option<u64>,
    /// First `t` with fully identical states.
    pub tau_chain: Option<u64>,
    /// Active vertex at `tau_walk`.
    pub meet_vertex: Option<usize>,
    /// Reflection runs only: steps after `tau_walk` until the replaced
    /// neighborhoods cover `V` minus the opposite equator vertex.
    pub sigma_bar_b: Option<u64>,
    pub truncated: bool,
}

/// Both chains advance one step; the replacement vector is shared exactly
/// when the argmins coincide. Returns the common new active vertex if so.
fn paired_step<R: Rng + ?Sized>(
    g: &Graph,
    a: &mut ChainState,
    b: &mut ChainState,
    rng: &mut R,
    writes: &mut Vec<(usize, f64)>,
) -> bool {
    let (next_a, _) = dynamics::argmin_closed(g, a.active(), a.fitness());
    let (next_b, _) = dynamics::argmin_closed(g, b.active(), b.fitness());
    writes.clear();
    for &u in g.closed_neighborhood(next_a) {
        writes.push((u, rng.sample(Exp1)));
    }
    dynamics::apply_transition(a, next_a, writes);
    if next_b == next_a {
        dynamics::apply_transition(b, next_b, writes);
        true
    } else {
        writes.clear();
        for &u in g.closed_neighborhood(next_b) {
            writes.push((u, rng.sample(Exp1)));
        }
        dynamics::apply_transition(b, next_b, writes);
        false
    }
}

fn disagreement_flags(a: &ChainState, b: &ChainState) -> (Vec<bool>, usize) {
    let flags: Vec<bool> = a
        .fitness()
        .iter()
        .zip(b.fitness())
        .map(|(x, y)| x != y)
        .collect();
    let count = flags.iter().filter(|&&d| d).count();
    (flags, count)
}

/// Tracks `sigma_bar`-style cover times after the walk meeting, plus the
/// number of still-disagreeing fitness values.
struct PostMeetTracker {
    tau_walk: u64,
    covered: Vec<bool>,
    uncovered: usize,
    disagree: Vec<bool>,
    disagree_count: usize,
    sigma_bar: Option<u64>,
    tau_chain: Option<u64>,
}

impl PostMeetTracker {
    fn start(g: &Graph, a: &ChainState, b: &ChainState, t: u64, meet: usize) -> Self {
        let n = g.vertex_count();
        let mut covered = vec![false; n];
        let mut uncovered = n;
        for &u in g.closed_neighborhood(meet) {
            covered[u] = true;
            uncovered -= 1;
        }
        let (disagree, disagree_count) = disagreement_flags(a, b);
        let mut tr = PostMeetTracker {
            tau_walk: t,
            covered,
            uncovered,
            disagree,
            disagree_count,
            sigma_bar: None,
            tau_chain: None,
        };
        tr.settle(t);
        tr
    }

    /// Records a post-meeting shared replacement of `A_next` at time `t`.
    fn shared_step(&mut self, g: &Graph, next: usize, t: u64) {
        for &u in g.closed_neighborhood(next) {
            if !self.covered[u] {
                self.covered[u] = true;
                self.uncovered -= 1;
            }
            if self.disagree[u] {
                self.disagree[u] = false;
                self.disagree_count -= 1;
            }
        }
        self.settle(t);
    }

    fn settle(&mut self, t: u64) {
        if self.sigma_bar.is_none() && self.uncovered == 0 {
            self.sigma_bar = Some(t - self.tau_walk);
        }
        if self.tau_chain.is_none() && self.disagree_count == 0 {
            self.tau_chain = Some(t);
        }
    }

    fn done(&self) -> bool {
        self.sigma_bar.is_some() && self.tau_chain.is_some()
    }
}

/// Runs the generic two-stage coupling from the given pair of states.
///
/// Stage boundaries are implicit in the shared-vector rule: before the walks
/// meet their replacement draws are independent (distinct vertices), at and
/// after the meeting they are identical. The walk meeting at `t = 0` counts
/// only if the fitness maps already agree on the shared closed neighborhood;
/// later meetings agree automatically.
pub fn run_independent_coupling<R: Rng + ?Sized>(
    g: &Graph,
    eta: ChainState,
    eta_prime: ChainState,
    rng: &mut R,
    max_steps: u64,
) -> Result<CouplingTrace> {
    let n = g.vertex_count();
    if eta.fitness().len() != n || eta_prime.fitness().len() != n {
        return Err(Error::input(
            "coupling states were built for a different graph",
        ));
    }
    let mut a = eta;
    let mut b = eta_prime;
    let mut meet: Option<(u64, usize)> = None;
    let mut post: Option<PostMeetTracker> = None;
    if a.active() == b.active() {
        let same_on_a = g
            .closed_neighborhood(a.active())
            .iter()
            .all(|&u| a.fitness()[u] == b.fitness()[u]);
        if same_on_a {
            meet = Some((0, a.active()));
            post = Some(PostMeetTracker::start(g, &a, &b, 0, a.active()));
        }
    }
    let mut writes = Vec::new();
    let mut t = 0u64;
    while t < max_steps && !post.as_ref().is_some_and(|tr| tr.done()) {
        t += 1;
        let shared = paired_step(g, &mut a, &mut b, rng, &mut writes);
        match post.as_mut() {
            None => {
                if shared {
                    meet = Some((t, a.active()));
                    post = Some(PostMeetTracker::start(g, &a, &b, t, a.active()));
                }
            }
            Some(tracker) => {
                debug_assert!(shared, "chains separated after meeting");
                tracker.shared_step(g, a.active(), t);
            }
        }
    }
    let (tau_walk, meet_vertex) = match meet {
        Some((tw, mv)) => (Some(tw), Some(mv)),
        None => (None, None),
    };
    let (sigma_bar, tau_chain) = match post {
        Some(tr) => (tr.sigma_bar, tr.tau_chain),
        None => (None, None),
    };
    if let (Some(tw), Some(sb), Some(tc)) = (tau_walk, sigma_bar, tau_chain) {
        debug_assert!(tc <= tw + sb, "coalescence after full cover");
    }
    Ok(CouplingTrace {
        tau_walk,
        sigma_bar,
        tau_chain,
        meet_vertex,
        sigma_bar_b: None,
        truncated: sigma_bar.is_none() || tau_chain.is_none(),
    })
}

/// Scale separating the two reflection-coupling initial states: the first
/// chain starts above `1/delta`, the second below `delta`. The recorded walk
/// times do not depend on it (the bound is a `delta -> 0` statement).
pub const REFLECTION_DELTA: f64 = 1e-6;

fn mirror(v: usize, n: usize) -> usize {
    (n / 2 + n - v) % n
}

/// The matched antipodal pair the reflection bound prescribes: chain one at
/// vertex 0 with all fitness above `1/delta`, chain two at `N/2` with all
/// fitness below `delta`, mirrored so the two initial argmins reflect.
pub(crate) fn reflection_initial_states<R: Rng + ?Sized>(
    g: &Graph,
    rng: &mut R,
) -> Result<(ChainState, ChainState)> {
    let n = g.vertex_count();
    let base: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let up: Vec<f64> = base.iter().map(|u| (1.0 + u) / REFLECTION_DELTA).collect();
    let mut down = vec![0.0; n];
    for v in 0..n {
        // same order as `up` at mirrored positions, squeezed below delta
        down[mirror(v, n)] = REFLECTION_DELTA * base[v] / 2.0;
    }
    let a = ChainState::new(g, 0, up)?;
    let b = ChainState::new(g, n / 2, down)?;
    Ok((a, b))
}

/// One step of the reflection construction. Pre-meeting (`met` false) the
/// second chain replaces the mirrored neighborhood with the same three draws
/// (`Γ'(v̄) = Γ(v)`); when the first chain's move lands on the equator the
/// replacement is shared at the same vertex and the chains are glued, as
/// they stay for every later step. Returns the updated `met` flag.
fn reflection_step<R: Rng + ?Sized>(
    g: &Graph,
    a: &mut ChainState,
    b: &mut ChainState,
    met: bool,
    rng: &mut R,
    writes: &mut Vec<(usize, f64)>,
) -> bool {
    let n = g.vertex_count();
    let (next_a, _) = dynamics::argmin_closed(g, a.active(), a.fitness());
    let mut values = [0.0f64; 3];
    for v in &mut values {
        *v = rng.sample(Exp1);
    }
    // offsets -1, 0, +1 around the new active vertex
    writes.clear();
    for (e, &x) in values.iter().enumerate() {
        writes.push(((next_a + n + e - 1) % n, x));
    }
    dynamics::apply_transition(a, next_a, writes);
    if met || mirror(next_a, n) == next_a {
        // already glued, or an equator hit glues the chains now; either way
        // the second chain's own argmin coincides with next_a
        debug_assert_eq!(
            dynamics::argmin_closed(g, b.active(), b.fitness()).0,
            next_a,
            "mirror leg argmin diverged from the forced move"
        );
        dynamics::apply_transition(b, next_a, writes);
        true
    } else {
        debug_assert_eq!(
            dynamics::argmin_closed(g, b.active(), b.fitness()).0,
            mirror(next_a, n),
            "mirror leg argmin diverged from the forced move"
        );
        writes.clear();
        for (e, &x) in values.iter().enumerate() {
            writes.push((mirror((next_a + n + e - 1) % n, n), x));
        }
        dynamics::apply_transition(b, mirror(next_a, n), writes);
        false
    }
}

/// Runs the reflection coupling on the `n`-cycle (`n` a positive multiple
/// of 4) from the matched antipodal initial pair.
///
/// `sigma_bar_b` witnesses the lower bound: at the meeting, every vertex
/// except the opposite equator vertex disagrees between the chains (never
/// replaced, or replaced with a draw mirrored to a different vertex), so
/// full coalescence cannot beat `tau_walk + sigma_bar_b`.
pub fn run_reflection_coupling<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
    max_steps: u64,
) -> Result<CouplingTrace> {
    if n < 4 || n % 4 != 0 {
        return Err(Error::input(format!(
            "reflection coupling needs a cycle length divisible by 4, got {n}"
        )));
    }
    let g = Graph::cycle(n)?;
    let (mut a, mut b) = reflection_initial_states(&g, rng)?;
    let mut meet: Option<(u64, usize)> = None;
    let mut post: Option<PostMeetTracker> = None;
    // covers V - {opposite equator vertex}; starts at the meeting
    let mut covered_b: Vec<bool> = Vec::new();
    let mut uncovered_b = 0usize;
    let mut sigma_bar_b = None;
    let mut writes: Vec<(usize, f64)> = Vec::with_capacity(3);
    let mut met = false;
    let mut t = 0u64;
    while t < max_steps
        && !(post.as_ref().is_some_and(|tr| tr.done()) && sigma_bar_b.is_some())
    {
        t += 1;
        let was_met = met;
        met = reflection_step(&g, &mut a, &mut b, met, rng, &mut writes);
        if met && !was_met {
            let u_p = a.active();
            meet = Some((t, u_p));
            post = Some(PostMeetTracker::start(&g, &a, &b, t, u_p));
            let opposite = (n - u_p) % n;
            covered_b = vec![false; n];
            covered_b[opposite] = true;
            uncovered_b = n - 1;
            for &u in g.closed_neighborhood(u_p) {
                if !covered_b[u] {
                    covered_b[u] = true;
                    uncovered_b -= 1;
                }
            }
            if uncovered_b == 0 {
                sigma_bar_b = Some(0);
            }
        } else if met {
            let next = a.active();
            let tracker = post.as_mut().unwrap();
            tracker.shared_step(&g, next, t);
            if sigma_bar_b.is_none() {
                for &u in g.closed_neighborhood(next) {
                    if !covered_b[u] {
                        covered_b[u] = true;
                        uncovered_b -= 1;
                    }
                }
                if uncovered_b == 0 {
                    sigma_bar_b = Some(t - tracker.tau_walk);
                }
            }
        }
    }
    let (tau_walk, meet_vertex) = match meet {
        Some((tw, mv)) => (Some(tw), Some(mv)),
        None => (None, None),
    };
    let (sigma_bar, tau_chain) = match post {
        Some(tr) => (tr.sigma_bar, tr.tau_chain),
        None => (None, None),
    };
    if let (Some(tw), Some(sbb), Some(tc)) = (tau_walk, sigma_bar_b, tau_chain) {
        debug_assert!(tc >= tw + sbb, "coalescence before the witness cover");
    }
    Ok(CouplingTrace {
        tau_walk,
        sigma_bar,
        tau_chain,
        meet_vertex,
        sigma_bar_b,
        truncated: sigma_bar.is_none() || tau_chain.is_none() || sigma_bar_b.is_none(),
    })
}

/// Estimated tail `P(T > t)` for `t` in `0..=horizon`, with binomial
/// standard errors. Samples beyond the horizon (including censored runs)
/// contribute mass to every tail value, which keeps the estimates unbiased.
#[derive(Clone, Debug)]
pub struct TailEstimate {
    horizon: u64,
    tail: Vec<f64>,
    se: Vec<f64>,
    replicas: u64,
    censored: u64,
}

impl TailEstimate {
    /// Builds the tail curve from raw samples; any value larger than
    /// `horizon` counts as censored (mass beyond the grid).
    pub fn from_samples(samples: &[u64], horizon: u64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::input("tail estimate needs at least one sample"));
        }
        let r = samples.len() as f64;
        let mut counts = vec![0u64; horizon as usize + 2];
        let mut censored = 0u64;
        for &s in samples {
            if s > horizon {
                censored += 1;
            } else {
                counts[s as usize] += 1;
            }
        }
        let mut tail = Vec::with_capacity(horizon as usize + 1);
        let mut se = Vec::with_capacity(horizon as usize + 1);
        let mut above = samples.len() as u64;
        for t in 0..=horizon {
            above -= counts[t as usize];
            let p = above as f64 / r;
            tail.push(p);
            se.push((p * (1.0 - p) / r).sqrt());
        }
        Ok(TailEstimate {
            horizon,
            tail,
            se,
            replicas: samples.len() as u64,
            censored,
        })
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// `P(T > t)`; beyond the horizon the last value is returned.
    pub fn tail(&self, t: u64) -> f64 {
        self.tail[t.min(self.horizon) as usize]
    }

    pub fn tails(&self) -> &[f64] {
        &self.tail
    }

    pub fn se(&self, t: u64) -> f64 {
        self.se[t.min(self.horizon) as usize]
    }

    pub fn ses(&self) -> &[f64] {
        &self.se
    }

    pub fn replicas(&self) -> u64 {
        self.replicas
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.replicas as f64
    }

    /// Inverse-transform draw from the stepwise CDF `1 - tail`; mass beyond
    /// the grid returns `horizon + 1`.
    pub fn sample_inverse<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        // cdf(t) = 1 - tail[t] is nondecreasing; find the first t with cdf >= u
        let idx = self.tail.partition_point(|&p| 1.0 - p < u);
        if idx > self.horizon as usize {
            self.horizon + 1
        } else {
            idx as u64
        }
    }

    /// Law of the pointwise-extreme CDF: `max_tails` gives the
    /// stochastically largest variable (CDF = pointwise min over inputs).
    fn pointwise(estimates: &[TailEstimate], take_max: bool) -> Result<TailEstimate> {
        let first = estimates
            .first()
            .ok_or_else(|| Error::input("pointwise tail combination of nothing"))?;
        let horizon = first.horizon;
        if estimates.iter().any(|e| e.horizon != horizon) {
            return Err(Error::input("pointwise tail combination needs one horizon"));
        }
        let mut tail = first.tail.clone();
        let mut se = first.se.clone();
        for e in &estimates[1..] {
            for t in 0..tail.len() {
                let better = if take_max {
                    e.tail[t] > tail[t]
                } else {
                    e.tail[t] < tail[t]
                };
                if better {
                    tail[t] = e.tail[t];
                    se[t] = e.se[t];
                }
            }
        }
        Ok(TailEstimate {
            horizon,
            tail,
            se,
            replicas: estimates.iter().map(|e| e.replicas).min().unwrap(),
            censored: estimates.iter().map(|e| e.censored).max().unwrap(),
        })
    }

    pub fn pointwise_max(estimates: &[TailEstimate]) -> Result<TailEstimate> {
        Self::pointwise(estimates, true)
    }

    pub fn pointwise_min(estimates: &[TailEstimate]) -> Result<TailEstimate> {
        Self::pointwise(estimates, false)
    }
}

/// Neighborhood cover time of one lazy walk from `start`, capped at `cap`
/// (the capped value is reported as `cap` itself).
fn cover_time_from<R: Rng + ?Sized>(g: &Graph, start: usize, rng: &mut R, cap: u64) -> u64 {
    let n = g.vertex_count();
    let mut covered = vec![false; n];
    let mut uncovered = n;
    for &u in g.closed_neighborhood(start) {
        covered[u] = true;
        uncovered -= 1;
    }
    let mut pos = start;
    let mut t = 0u64;
    while uncovered > 0 && t < cap {
        t += 1;
        pos = dynamics::random_walk_step(g, pos, rng);
        for &u in g.closed_neighborhood(pos) {
            if !covered[u] {
                covered[u] = true;
                uncovered -= 1;
            }
        }
    }
    if uncovered > 0 {
        cap
    } else {
        t
    }
}

/// Monte Carlo law of the neighborhood-cover time started at `v`, on the
/// grid `0..=horizon` (runs are stopped one step past the horizon).
pub fn estimate_sigma_tilde<R: Rng + ?Sized>(
    g: &Graph,
    v: usize,
    replicas: u64,
    horizon: u64,
    rng: &mut R,
) -> Result<TailEstimate> {
    if replicas == 0 {
        return Err(Error::input("cover-time estimation needs replicas >= 1"));
    }
    if v >= g.vertex_count() {
        return Err(Error::input(format!(
            "vertex {v} out of range (n = {})",
            g.vertex_count()
        )));
    }
    let samples: Vec<u64> = (0..replicas)
        .map(|_| cover_time_from(g, v, rng, horizon + 1))
        .collect();
    TailEstimate::from_samples(&samples, horizon)
}

/// Meeting time of two independent lazy walks (laziness makes the pair
/// aperiodic, so this is a.s. finite).
fn walk_meeting_time<R: Rng + ?Sized>(g: &Graph, u: usize, v: usize, rng: &mut R) -> Result<u64> {
    let mut x = u;
    let mut y = v;
    let mut t = 0u64;
    while x != y {
        t += 1;
        if t > WALK_SAFETY_CAP {
            return Err(Error::internal(
                "independent walks failed to meet within the safety cap",
            ));
        }
        x = dynamics::random_walk_step(g, x, rng);
        y = dynamics::random_walk_step(g, y, rng);
    }
    Ok(t)
}

/// The two generic bounds on `d̄_t` over `0..=horizon`:
/// `lower(t) = P(sigma_min > t)` (pointwise-min tail over start vertices) and
/// `upper(t) = max over start pairs of P(tau_walk + sigma_max > t)` with
/// `sigma_max` drawn by inverse transform from the pointwise-max tail,
/// independently of the meeting time.
pub fn bounds_general<R: Rng + ?Sized>(
    g: &Graph,
    horizon: u64,
    replicas: u64,
    rng: &mut R,
) -> Result<(TailEstimate, TailEstimate)> {
    let n = g.vertex_count();
    let per_vertex: Vec<TailEstimate> = (0..n)
        .map(|v| estimate_sigma_tilde(g, v, replicas, horizon, rng))
        .collect::<Result<_>>()?;
    let lower = TailEstimate::pointwise_min(&per_vertex)?;
    let sigma_max = TailEstimate::pointwise_max(&per_vertex)?;
    let mut pair_tails: Vec<TailEstimate> = Vec::new();
    let mut sums = Vec::with_capacity(replicas as usize);
    for u in 0..n {
        for v in u..n {
            if u == v && n > 1 {
                continue;
            }
            sums.clear();
            for _ in 0..replicas {
                let tau = walk_meeting_time(g, u, v, rng)?;
                let sigma = sigma_max.sample_inverse(rng);
                sums.push(tau.saturating_add(sigma));
            }
            pair_tails.push(TailEstimate::from_samples(&sums, horizon)?);
        }
    }
    let upper = TailEstimate::pointwise_max(&pair_tails)?;
    Ok((lower, upper))
}

/// One replica of the three walk functionals entering the cycle sandwich.
/// `tau1` comes from its own walk; `tau2` and `tau3` share a second walk, so
/// `tau2 <= tau3` holds pathwise.
#[derive(Clone, Copy, Debug)]
pub struct CycleTimes {
    /// Exit time from the half-open arc around 0 (first equator visit).
    pub tau1: u64,
    /// Neighborhood cover time of all vertices except `N/2`.
    pub tau2: u64,
    /// Full neighborhood cover time.
    pub tau3: u64,
}

/// Samples `(tau1, tau2, tau3)` on the `n`-cycle, walks started at 0.
pub fn cycle_bound_times<R: Rng + ?Sized>(
    n: usize,
    replicas: u64,
    rng: &mut R,
) -> Result<Vec<CycleTimes>> {
    if n < 4 || n % 4 != 0 {
        return Err(Error::input(format!(
            "cycle bounds need a cycle length divisible by 4, got {n}"
        )));
    }
    let g = Graph::cycle(n)?;
    let half = n / 2;
    let quarter = n / 4;
    let mut out = Vec::with_capacity(replicas as usize);
    for _ in 0..replicas {
        // tau1: first time |N/2 - X_t| <= N/4, i.e. the walk reaches the
        // closed arc [N/4, 3N/4]; never satisfied at X_0 = 0
        let mut pos = 0usize;
        let mut tau1 = 0u64;
        loop {
            tau1 += 1;
            if tau1 > WALK_SAFETY_CAP {
                return Err(Error::internal("equator hit exceeded the safety cap"));
            }
            pos = dynamics::random_walk_step(&g, pos, rng);
            if half.abs_diff(pos) <= quarter {
                break;
            }
        }
        // tau2 and tau3 from one fresh walk
        let mut covered = vec![false; n];
        let mut uncovered_except_half = n - 1;
        let mut uncovered = n;
        let mark = |covered: &mut Vec<bool>,
                        uncovered: &mut usize,
                        uncovered_except: &mut usize,
                        u: usize| {
            if !covered[u] {
                covered[u] = true;
                *uncovered -= 1;
                if u != half {
                    *uncovered_except -= 1;
                }
            }
        };
        for &u in g.closed_neighborhood(0) {
            mark(&mut covered, &mut uncovered, &mut uncovered_except_half, u);
        }
        let mut pos = 0usize;
        let mut t = 0u64;
        let mut tau2 = if uncovered_except_half == 0 { Some(0) } else { None };
        while uncovered > 0 {
            t += 1;
            if t > WALK_SAFETY_CAP {
                return Err(Error::internal("cover time exceeded the safety cap"));
            }
            pos = dynamics::random_walk_step(&g, pos, rng);
            for &u in g.closed_neighborhood(pos) {
                mark(&mut covered, &mut uncovered, &mut uncovered_except_half, u);
            }
            if tau2.is_none() && uncovered_except_half == 0 {
                tau2 = Some(t);
            }
        }
        out.push(CycleTimes {
            tau1,
            tau2: tau2.unwrap(),
            tau3: t,
        });
    }
    Ok(out)
}

/// Tails of `tau1 + tau2` and `tau1 + tau3` (same `tau1` per replica, so the
/// recorded sums are pathwise ordered). The mixing bound reads
/// `(1/2) * sum12.tail(t) <= d̄_t <= sum13.tail(t)`.
#[derive(Clone, Debug)]
pub struct CycleSandwich {
    pub sum12: TailEstimate,
    pub sum13: TailEstimate,
}

impl CycleSandwich {
    pub fn lower(&self, t: u64) -> f64 {
        0.5 * self.sum12.tail(t)
    }

    pub fn lower_se(&self, t: u64) -> f64 {
        0.5 * self.sum12.se(t)
    }

    pub fn upper(&self, t: u64) -> f64 {
        self.sum13.tail(t)
    }

    pub fn upper_se(&self, t: u64) -> f64 {
        self.sum13.se(t)
    }
}

pub fn cycle_bounds(samples: &[CycleTimes], horizon: u64) -> Result<CycleSandwich> {
    let s12: Vec<u64> = samples.iter().map(|c| c.tau1 + c.tau2).collect();
    let s13: Vec<u64> = samples.iter().map(|c| c.tau1 + c.tau3).collect();
    Ok(CycleSandwich {
        sum12: TailEstimate::from_samples(&s12, horizon)?,
        sum13: TailEstimate::from_samples(&s13, horizon)?,
    })
}

/// Fits `log tail ~ a + slope * t` over the final decade of positive tail
/// values with at least `min_points` support; geometric tails come out with
/// a clearly negative slope. Returns `(slope, points_used)`.
pub fn log_tail_slope(est: &TailEstimate, min_points: usize) -> Result<(f64, usize)> {
    // only trust points estimated from >= 10 surviving replicas
    let floor = 10.0 / est.replicas as f64;
    let usable: Vec<(f64, f64)> = est
        .tail
        .iter()
        .enumerate()
        .filter(|&(_, &p)| p >= floor)
        .map(|(t, &p)| (t as f64, p.ln()))
        .collect();
    let last = usable
        .last()
        .ok_or_else(|| Error::InsufficientData {
            context: "no tail values clear the support floor".into(),
            horizon: est.horizon,
        })?
        .1;
    let window: Vec<(f64, f64)> = usable
        .iter()
        .copied()
        .filter(|&(_, lp)| lp <= last + std::f64::consts::LN_10)
        .collect();
    if window.len() < min_points {
        return Err(Error::InsufficientData {
            context: format!(
                "final tail decade holds {} points, need {min_points}",
                window.len()
            ),
            horizon: est.horizon,
        });
    }
    let xs: Vec<f64> = window.iter().map(|&(t, _)| t).collect();
    let ys: Vec<f64> = window.iter().map(|&(_, lp)| lp).collect();
    let (slope, _) = crate::stats::fit_affine(&xs, &ys)?;
    Ok((slope, window.len()))
}
