//! Threshold avalanches: segmentation of a trajectory by the times the
//! fraction of fitness values at or above `b` reaches `alpha`, the long-run
//! mean spacing `D(alpha, b)` of those times, its exact binomial sandwich
//! under stationarity, and the critical-threshold classification.
//!
//! On a `d`-regular graph the stationary state has `d+1` fresh `Exp(1)`
//! values and `n-(d+1)` i.i.d. `ExpPlus(d+1)` values, so the probability
//! that the above-`b` count reaches `m` is sandwiched between binomial tails
//! with success probability `p_{d,b}` at levels `m` and `m-(d+1)`. Ergodic
//! counting turns that into `D = 1/pi(A_{alpha,b})`: sub- and supercritical
//! thresholds drive `D` to 1 or to infinity, and at `b = b_c(d, alpha)` the
//! sandwich straddles 1/2 with an `n^{-1/2}` deviation.

use crate::dist::{self, ExpPlus};
use crate::dynamics::{self, ChainState, Observer, StepRecord};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::stationary;
use crate::{rng, stats};
use rand::Rng;

/// Incremental count of vertices with fitness at or above a threshold.
/// Only replaced vertices can change the count, so updates are O(d); a full
/// rescan cross-checks the bookkeeping every 1024 steps under debug.
#[derive(Clone, Debug)]
pub struct ThresholdTracker {
    b: f64,
    above: Vec<bool>,
    count_above: usize,
    updates: u64,
}

impl ThresholdTracker {
    pub fn new(state: &ChainState, b: f64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::input(format!("threshold must be positive, got {b}")));
        }
        let above: Vec<bool> = state.fitness().iter().map(|&x| x >= b).collect();
        let count_above = above.iter().filter(|&&a| a).count();
        Ok(ThresholdTracker {
            b,
            above,
            count_above,
            updates: 0,
        })
    }

    pub fn count_above(&self) -> usize {
        self.count_above
    }

    pub fn n_vertices(&self) -> usize {
        self.above.len()
    }

    /// Fraction of vertices at or above the threshold.
    pub fn psi(&self) -> f64 {
        self.count_above as f64 / self.above.len() as f64
    }

    pub fn rescan(state: &ChainState, b: f64) -> usize {
        state.fitness().iter().filter(|&&x| x >= b).count()
    }

    /// Folds one step's replacements into the count.
    pub fn apply(&mut self, state: &ChainState, record: &StepRecord) {
        for (&v, &x) in record.replaced.iter().zip(&record.new_values) {
            let now = x >= self.b;
            if now != self.above[v] {
                self.above[v] = now;
                if now {
                    self.count_above += 1;
                } else {
                    self.count_above -= 1;
                }
            }
        }
        self.updates += 1;
        if self.updates % 1024 == 0 {
            debug_assert_eq!(
                self.count_above,
                Self::rescan(state, self.b),
                "incremental threshold count drifted from a rescan"
            );
        }
    }
}

/// Start times of threshold avalanches along one trajectory: `T_0 = 0`
/// unconditionally, then every step at which the above-threshold fraction is
/// at least `alpha`.
#[derive(Clone, Debug)]
pub struct AvalancheRecord {
    pub alpha: f64,
    pub b: f64,
    /// Strictly increasing, first element 0.
    pub start_times: Vec<u64>,
    pub horizon: u64,
}

impl AvalancheRecord {
    /// Number of recorded starts beyond the unconditional `T_0`.
    pub fn starts_beyond_origin(&self) -> usize {
        self.start_times.len() - 1
    }
}

/// Smallest count whose fraction of `n` reaches `alpha`: the above-threshold
/// count defining the avalanche event. Equals `alpha * n` whenever that is
/// an integer.
pub fn threshold_count(n: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::input(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    Ok((0..=n)
        .find(|&m| m as f64 / n as f64 >= alpha)
        .expect("alpha <= 1 guarantees m = n qualifies"))
}

struct StartCollector {
    tracker: ThresholdTracker,
    m_star: usize,
    offset: u64,
    starts: Vec<u64>,
}

impl Observer for StartCollector {
    fn observe(
        &mut self,
        _g: &Graph,
        state: &ChainState,
        record: &StepRecord,
    ) -> std::result::Result<(), String> {
        self.tracker.apply(state, record);
        if self.tracker.count_above() >= self.m_star {
            self.starts.push(state.step_index() - self.offset);
        }
        Ok(())
    }
}

/// Runs the chain `steps` steps from `s0` and records every avalanche start.
pub fn track_avalanches<R: Rng + ?Sized>(
    g: &Graph,
    s0: ChainState,
    alpha: f64,
    b: f64,
    steps: u64,
    rng: &mut R,
) -> Result<AvalancheRecord> {
    if steps == 0 {
        return Err(Error::input("avalanche tracking needs steps >= 1"));
    }
    let m_star = threshold_count(g.vertex_count(), alpha)?;
    let mut state = s0;
    let offset = state.step_index();
    let mut collector = StartCollector {
        tracker: ThresholdTracker::new(&state, b)?,
        m_star,
        offset,
        starts: vec![0],
    };
    dynamics::run(g, &mut state, steps, rng, &mut [&mut collector])?;
    Ok(AvalancheRecord {
        alpha,
        b,
        start_times: collector.starts,
        horizon: steps,
    })
}

/// Long-run mean spacing of avalanche starts: the average gap between
/// consecutive starts, discarding the first gap (the approach from the
/// arbitrary initial state), with a batch-means standard error over 20
/// batches (start times are dependent, so an i.i.d. error bar would be
/// anti-conservative).
pub fn estimate_d(record: &AvalancheRecord) -> Result<(f64, f64)> {
    let starts = &record.start_times;
    if starts.len() < 3 {
        return Err(Error::InsufficientData {
            context: format!(
                "need at least 2 avalanche starts beyond the origin, found {}",
                starts.len() - 1
            ),
            horizon: record.horizon,
        });
    }
    let gaps: Vec<f64> = starts
        .windows(2)
        .skip(1)
        .map(|w| (w[1] - w[0]) as f64)
        .collect();
    let estimate = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let batches = gaps.len().min(20);
    if batches < 2 {
        return Ok((estimate, 0.0));
    }
    let size = gaps.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|i| gaps[i * size..(i + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let se = (var / batches as f64).sqrt();
    Ok((estimate, se))
}

/// Exact binomial sandwich for the stationary probability of the avalanche
/// event on a `d`-regular graph with `n` vertices: with `m` the threshold
/// count and `S ~ Bin(n-(d+1), p_{d,b})`,
/// `P(S >= m) <= pi(A_{alpha,b}) <= P(S >= m-(d+1))`.
pub fn binomial_sandwich(n_vertices: usize, d: u32, alpha: f64, b: f64) -> Result<(f64, f64)> {
    if n_vertices <= d as usize + 1 {
        return Err(Error::input(format!(
            "sandwich needs n > d+1 = {}, got {n_vertices}",
            d + 1
        )));
    }
    let p = dist::p_db(d, b)?;
    let m = threshold_count(n_vertices, alpha)? as i64;
    let trials = (n_vertices - (d as usize + 1)) as u64;
    let lower = stats::binom_tail(trials, p, m)?;
    let upper = stats::binom_tail(trials, p, m - (d as i64 + 1))?;
    Ok((lower, upper))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// `b < b_c`: avalanche starts are typical, `D_n -> 1` exponentially.
    Subcritical,
    /// `b = b_c`: the sandwich straddles 1/2, `D_n -> 2` at rate `n^{-1/2}`.
    Critical,
    /// `b > b_c`: starts are exponentially rare, `D_n` blows up.
    Supercritical,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        })
    }
}

/// Compares `b` against the critical threshold `b_c(d, alpha)` with absolute
/// tolerance 1e-9.
pub fn classify_regime(d: u32, alpha: f64, b: f64) -> Result<Regime> {
    if d < 2 {
        return Err(Error::input(format!(
            "regime classification needs degree >= 2, got {d}"
        )));
    }
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::input(format!("threshold must be positive, got {b}")));
    }
    let bc = dist::solve_bc(d, alpha)?;
    Ok(if (b - bc).abs() <= 1e-9 {
        Regime::Critical
    } else if b < bc {
        Regime::Subcritical
    } else {
        Regime::Supercritical
    })
}

/// Monte Carlo estimate (value, standard error) of the stationary
/// probability of the avalanche event, from exact stationary samples.
pub fn stationary_event_probability<R: Rng + ?Sized>(
    g: &Graph,
    alpha: f64,
    b: f64,
    samples: u64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::input("event probability needs samples >= 1"));
    }
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::input(format!("threshold must be positive, got {b}")));
    }
    let m_star = threshold_count(g.vertex_count(), alpha)?;
    let mut hits = 0u64;
    for _ in 0..samples {
        let state = stationary::sample_stationary(g, rng)?;
        let count = state.fitness().iter().filter(|&&x| x >= b).count();
        if count >= m_star {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let se = (p * (1.0 - p) / samples as f64).sqrt();
    Ok((p, se))
}

/// One-sample KS distances of the fixed-vertex stationary fitness against
/// the `n -> infinity` limit `ExpPlus(d+1)`, one per graph. Every graph must
/// be constant-degree; on a growing regular family the distance shrinks at
/// rate `(d+1)/n`.
pub fn limit_marginal_test(graphs: &[Graph], samples: usize, seed: u64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(graphs.len());
    for (gi, g) in graphs.iter().enumerate() {
        let d = g
            .constant_degree()
            .ok_or_else(|| Error::input("limit marginal test requires constant-degree graphs"))?;
        let limit = ExpPlus::new(d as u32 + 1)?;
        let mut rng = rng::replica_rng(rng::derive_seed(seed, gi as u64), 0);
        let mut values = Vec::with_capacity(samples);
        for _ in 0..samples {
            let state = stationary::sample_stationary_regular(g, &mut rng)?;
            values.push(state.fitness()[0]);
        }
        let ks = stats::ks_one_sample(&values, |t| limit.cdf(t))?;
        out.push(ks.statistic);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{initial_state, InitialCondition};
    use crate::rng::replica_rng;
    use approx::assert_relative_eq;

    fn iid_state(g: &Graph, seed: u64) -> ChainState {
        let mut rng = replica_rng(seed, 0);
        initial_state(g, InitialCondition::IidExp, &mut rng).unwrap()
    }

    #[test]
    fn threshold_count_examples() {
        assert_eq!(threshold_count(8, 0.25).unwrap(), 2);
        assert_eq!(threshold_count(8, 0.5).unwrap(), 4);
        assert_eq!(threshold_count(16, 0.6875).unwrap(), 11);
        assert_eq!(threshold_count(8, 1.0).unwrap(), 8);
        assert_eq!(threshold_count(5, 0.5).unwrap(), 3);
        assert_eq!(threshold_count(8, 0.01).unwrap(), 1);
        assert!(threshold_count(8, 0.0).is_err());
        assert!(threshold_count(8, 1.5).is_err());
    }

    #[test]
    fn tracker_matches_rescan_at_checkpoints() {
        let g = Graph::cycle(9).unwrap();
        let mut state = iid_state(&g, 80);
        let mut tracker = ThresholdTracker::new(&state, 0.9).unwrap();
        let mut rng = replica_rng(81, 0);
        let mut rec = StepRecord::default();
        for step in 1..=1000u64 {
            dynamics::step(&g, &mut state, &mut rng, &mut rec);
            tracker.apply(&state, &rec);
            if step % 7 == 0 {
                assert_eq!(
                    tracker.count_above(),
                    ThresholdTracker::rescan(&state, 0.9),
                    "checkpoint at step {step}"
                );
            }
        }
        assert!((0.0..=1.0).contains(&tracker.psi()));
    }

    #[test]
    fn tiny_threshold_makes_every_step_a_start() {
        let g = Graph::cycle(6).unwrap();
        let mut rng = replica_rng(82, 0);
        let record =
            track_avalanches(&g, iid_state(&g, 83), 0.5, 1e-300, 200, &mut rng).unwrap();
        let expected: Vec<u64> = (0..=200).collect();
        assert_eq!(record.start_times, expected);
        let (d, se) = estimate_d(&record).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn huge_threshold_yields_insufficient_data() {
        let g = Graph::cycle(6).unwrap();
        let mut rng = replica_rng(84, 0);
        let record =
            track_avalanches(&g, iid_state(&g, 85), 1.0, 1e6, 500, &mut rng).unwrap();
        assert_eq!(record.start_times, vec![0]);
        match estimate_d(&record) {
            Err(Error::InsufficientData { horizon, .. }) => assert_eq!(horizon, 500),
            other => panic!("expected insufficient data, got {other:?}"),
        }
    }

    #[test]
    fn record_times_are_strictly_increasing_from_zero() {
        let g = Graph::cycle(8).unwrap();
        let mut rng = replica_rng(86, 0);
        let record =
            track_avalanches(&g, iid_state(&g, 87), 0.5, 0.7, 5_000, &mut rng).unwrap();
        assert_eq!(record.start_times[0], 0);
        assert!(record.start_times.windows(2).all(|w| w[0] < w[1]));
        assert!(record.starts_beyond_origin() > 100);
    }

    #[test]
    fn recorded_starts_match_a_full_replay() {
        // drive an identical trajectory by seed and recompute psi by rescan
        let g = Graph::cycle(7).unwrap();
        let (alpha, b, steps) = (0.5, 0.9, 2_000u64);
        let mut rng = replica_rng(88, 0);
        let record =
            track_avalanches(&g, iid_state(&g, 89), alpha, b, steps, &mut rng).unwrap();
        let mut rng = replica_rng(88, 0);
        let mut state = iid_state(&g, 89);
        let mut rec = StepRecord::default();
        let mut expected = vec![0u64];
        for t in 1..=steps {
            dynamics::step(&g, &mut state, &mut rng, &mut rec);
            let count = ThresholdTracker::rescan(&state, b);
            if count as f64 / 7.0 >= alpha {
                expected.push(t);
            }
        }
        assert_eq!(record.start_times, expected);
    }

    #[test]
    fn sandwich_matches_exact_binomial_tails() {
        // Bin(5, 11/16) tails, mpmath 1.3 at 40 digits
        let (lower, upper) = binomial_sandwich(8, 2, 0.5, std::f64::consts::LN_2).unwrap();
        assert_relative_eq!(lower, 0.502658843994140625, max_relative = 1e-13);
        assert_relative_eq!(upper, 0.99701976776123046875, max_relative = 1e-13);
        // Bin(13, 11/16) tails at levels 11 and 8
        let (lower, upper) = binomial_sandwich(16, 2, 0.6875, std::f64::consts::LN_2).unwrap();
        assert_relative_eq!(lower, 0.17649844126715797, max_relative = 1e-12);
        assert_relative_eq!(upper, 0.80779244243556114, max_relative = 1e-12);
        assert!(lower <= upper);
    }

    #[test]
    fn sandwich_edges() {
        // b -> 0: success certain, lower -> 1
        let (lower, upper) = binomial_sandwich(8, 2, 0.5, 1e-12).unwrap();
        assert!(lower > 1.0 - 1e-9);
        assert_eq!(upper, 1.0);
        // level below zero clamps the upper tail to 1
        let (_, upper) = binomial_sandwich(8, 2, 0.25, 0.5).unwrap();
        assert_eq!(upper, 1.0);
        assert!(binomial_sandwich(3, 2, 0.5, 1.0).is_err());
    }

    #[test]
    fn regime_classification_examples() {
        let alpha = 11.0 / 16.0;
        assert_eq!(
            classify_regime(2, alpha, std::f64::consts::LN_2).unwrap(),
            Regime::Critical
        );
        assert_eq!(classify_regime(2, alpha, 0.1).unwrap(), Regime::Subcritical);
        assert_eq!(classify_regime(2, alpha, 3.0).unwrap(), Regime::Supercritical);
        let bc = dist::solve_bc(2, alpha).unwrap();
        assert_eq!(
            classify_regime(2, alpha, bc + 5e-10).unwrap(),
            Regime::Critical
        );
        assert_eq!(
            classify_regime(2, alpha, bc + 1e-8).unwrap(),
            Regime::Supercritical
        );
        assert_eq!(
            classify_regime(2, alpha, bc - 1e-8).unwrap(),
            Regime::Subcritical
        );
        assert_eq!(format!("{}", Regime::Critical), "critical");
    }

    #[test]
    fn estimate_tracks_reciprocal_event_probability() {
        // subcritical point on a small cycle: both sides well resolved
        let g = Graph::cycle(8).unwrap();
        let (alpha, b) = (0.5, 0.5);
        let mut rng = replica_rng(90, 0);
        let record =
            track_avalanches(&g, iid_state(&g, 91), alpha, b, 200_000, &mut rng).unwrap();
        let (d_hat, d_se) = estimate_d(&record).unwrap();
        let mut rng = replica_rng(92, 0);
        let (p_hat, p_se) = stationary_event_probability(&g, alpha, b, 20_000, &mut rng).unwrap();
        let recip = 1.0 / p_hat;
        let recip_se = p_se / (p_hat * p_hat);
        let margin = 3.0 * (d_se * d_se + recip_se * recip_se).sqrt();
        assert!(
            (d_hat - recip).abs() <= margin,
            "D = {d_hat} +- {d_se}, 1/pi = {recip} +- {recip_se}"
        );
    }

    #[test]
    fn estimate_is_start_state_independent() {
        let g = Graph::cycle(8).unwrap();
        let (alpha, b) = (0.5, 0.8);
        let mut rng = replica_rng(93, 0);
        let r1 = track_avalanches(&g, iid_state(&g, 94), alpha, b, 150_000, &mut rng).unwrap();
        let mut rng = replica_rng(95, 0);
        let mut all_equal = replica_rng(96, 0);
        let s0 = initial_state(&g, InitialCondition::AllEqualPerturbed, &mut all_equal).unwrap();
        let r2 = track_avalanches(&g, s0, alpha, b, 150_000, &mut rng).unwrap();
        let (d1, se1) = estimate_d(&r1).unwrap();
        let (d2, se2) = estimate_d(&r2).unwrap();
        let margin = 3.0 * (se1 * se1 + se2 * se2).sqrt();
        assert!((d1 - d2).abs() <= margin, "{d1}±{se1} vs {d2}±{se2}");
    }

    #[test]
    fn estimate_d_monotone_in_threshold() {
        let g = Graph::cycle(8).unwrap();
        let alpha = 0.5;
        let mut estimates = Vec::new();
        for (i, b) in [0.3, 0.8].into_iter().enumerate() {
            let mut rng = replica_rng(97, i as u64);
            let record =
                track_avalanches(&g, iid_state(&g, 98), alpha, b, 100_000, &mut rng).unwrap();
            estimates.push(estimate_d(&record).unwrap());
        }
        let margin = 3.0 * (estimates[0].1.powi(2) + estimates[1].1.powi(2)).sqrt();
        assert!(
            estimates[1].0 + margin >= estimates[0].0,
            "D should not decrease in b: {estimates:?}"
        );
    }

    #[test]
    fn limit_marginal_distance_shrinks() {
        let graphs = vec![Graph::cycle(8).unwrap(), Graph::cycle(64).unwrap()];
        let ds = limit_marginal_test(&graphs, 20_000, 99).unwrap();
        assert!(ds[0] > ds[1], "KS distances {ds:?} should shrink with n");
        assert!(ds[1] < 0.05);
        let irregular = vec![Graph::path(4).unwrap()];
        assert!(limit_marginal_test(&irregular, 100, 1).is_err());
    }
}
