//! Subcommand implementations: merge flags with config-file defaults, run
//! the computation, render one versioned CSV.
//!
//! Determinism contract: replica work is keyed by `replica_rng(derived, i)`
//! where `derived = derive_seed(seed, TAG)` and `i` is the replica index, and
//! parallel results are collected in index order. The bytes produced by a
//! subcommand therefore depend on (config, seed) only, never on `--threads`.

use std::fmt::Write as _;

use clap::ValueEnum as _;
use rayon::prelude::*;

use lbs_core::avalanche::{self, ThresholdTracker};
use lbs_core::coupling::{self, CycleTimes};
use lbs_core::dist;
use lbs_core::dynamics::{self, ChainState, InitialCondition, Observer, StepRecord};
use lbs_core::graph::Graph;
use lbs_core::rng::{derive_seed, replica_rng};
use lbs_core::{stationary, stats};

use crate::config::FileConfig;
use crate::graphspec;
use crate::{Cmd, Failure, InitKind};

// Stream tags keeping the per-purpose RNG streams disjoint under one seed.
const TAG_GRAPH: u64 = 1;
const TAG_SIMULATE: u64 = 2;
const TAG_SAMPLES: u64 = 3;
const TAG_VERIFY_A: u64 = 4;
const TAG_VERIFY_B: u64 = 5;
const TAG_DENSITY: u64 = 6;
const TAG_COUPLING: u64 = 7;
const TAG_CYCLE: u64 = 8;
const TAG_AVALANCHE: u64 = 9;

/// Appends one line to an in-memory CSV buffer.
macro_rules! row {
    ($buf:expr, $($arg:tt)*) => {{
        writeln!($buf, $($arg)*).expect("write to String cannot fail");
    }};
}

/// Finished command output: the CSV text, plus the statistical failure
/// (message and failing test labels) to raise after the text is written.
#[derive(Debug)]
pub(crate) struct Rendered {
    pub text: String,
    pub failure: Option<(String, Vec<String>)>,
}

impl Rendered {
    fn ok(text: String) -> Self {
        Rendered { text, failure: None }
    }
}

pub(crate) fn render(cmd: Cmd, file: &FileConfig, seed: u64) -> Result<Rendered, Failure> {
    match cmd {
        Cmd::Simulate { graph, steps, thin, b, init } => {
            let g = build_graph(graph, file, seed)?;
            let steps = steps.or(file.steps).unwrap_or(1_000);
            let thin = thin.or(file.thin).unwrap_or(1);
            let bs = pick_list(b, &file.b, &[1.0]);
            let init = pick_init(init, file)?;
            simulate(&g, steps, thin, &bs, init, seed)
        }
        Cmd::SampleStationary { graph, samples } => {
            let g = build_graph(graph, file, seed)?;
            let samples = samples.or(file.samples).unwrap_or(1_000);
            sample_stationary(&g, samples, seed)
        }
        Cmd::VerifyStationarity { graph, samples, significance, b, inject_bias } => {
            let g = build_graph(graph, file, seed)?;
            let samples = samples.or(file.samples).unwrap_or(10_000);
            let significance = significance.or(file.significance).unwrap_or(1e-3);
            let bs = pick_list(b, &file.b, &[0.5, 1.0, 2.0]);
            verify_stationarity(&g, samples, significance, &bs, inject_bias, seed)
        }
        Cmd::Density { graph, vertex, samples, grid_max, grid_points } => {
            let g = build_graph(graph, file, seed)?;
            let vertex = vertex.or(file.vertex).unwrap_or(0);
            let samples = samples.or(file.samples).unwrap_or(10_000);
            let grid_max = grid_max.or(file.grid_max).unwrap_or(5.0);
            let grid_points = grid_points.or(file.grid_points).unwrap_or(101);
            density(&g, vertex, samples, grid_max, grid_points, seed)
        }
        Cmd::Coupling { graph, horizon, replicas } => {
            let g = build_graph(graph, file, seed)?;
            let horizon = horizon.or(file.horizon).unwrap_or(200);
            let replicas = replicas.or(file.replicas).unwrap_or(2_000);
            coupling_bounds(&g, horizon, replicas, seed)
        }
        Cmd::CycleBounds { n, horizon, replicas } => {
            let n = n.or(file.n).unwrap_or(8);
            let horizon = horizon.or(file.horizon).unwrap_or(400);
            let replicas = replicas.or(file.replicas).unwrap_or(10_000);
            cycle_bounds(n, horizon, replicas, seed)
        }
        Cmd::Avalanche { graph, alpha, b, steps } => {
            let g = build_graph(graph, file, seed)?;
            let alphas = pick_list(alpha, &file.alpha, &[0.5]);
            let bs = pick_list(b, &file.b, &[1.0]);
            let steps = steps.or(file.steps).unwrap_or(100_000);
            avalanche_scan(&g, &alphas, &bs, steps, seed)
        }
        Cmd::Bc { d, alpha } => {
            let ds = pick_list(d, &file.d, &[2]);
            let alphas = pick_list(alpha, &file.alpha, &[0.5]);
            bc_table(&ds, &alphas)
        }
    }
}

fn build_graph(flag: Option<String>, file: &FileConfig, seed: u64) -> Result<Graph, Failure> {
    let spec = flag.or_else(|| file.graph.clone()).ok_or_else(|| {
        Failure::input("missing graph spec: pass --graph or set \"graph\" in the config file")
    })?;
    graphspec::build(&spec, derive_seed(seed, TAG_GRAPH))
}

fn pick_list<T: Clone>(flag: Vec<T>, file: &Option<Vec<T>>, default: &[T]) -> Vec<T> {
    if !flag.is_empty() {
        flag
    } else {
        file.clone().unwrap_or_else(|| default.to_vec())
    }
}

fn pick_init(flag: Option<InitKind>, file: &FileConfig) -> Result<InitKind, Failure> {
    match (flag, &file.init) {
        (Some(k), _) => Ok(k),
        (None, Some(s)) => InitKind::from_str(s, true)
            .map_err(|e| Failure::input(format!("config init: {e}"))),
        (None, None) => Ok(InitKind::Iid),
    }
}

/// p-values print in plain decimal down to 1e-4 and scientific below, so a
/// hard rejection does not unroll into a hundred zeros.
fn fmt_p(p: f64) -> String {
    if p == 0.0 || p >= 1e-4 {
        format!("{p}")
    } else {
        format!("{p:e}")
    }
}

/// Per-step trajectory rows; thresholds are maintained incrementally.
struct TrajectoryRows<'a> {
    buf: &'a mut String,
    trackers: Vec<ThresholdTracker>,
    thin: u64,
}

impl TrajectoryRows<'_> {
    fn emit(&mut self, state: &ChainState) {
        let f = state.fitness();
        let min = f.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        let mut line = format!("{},{},{min},{mean}", state.step_index(), state.active());
        for tr in &self.trackers {
            let _ = write!(line, ",{},{}", tr.count_above(), tr.psi());
        }
        row!(self.buf, "{line}");
    }
}

impl Observer for TrajectoryRows<'_> {
    fn observe(
        &mut self,
        _g: &Graph,
        state: &ChainState,
        record: &StepRecord,
    ) -> Result<(), String> {
        for tr in &mut self.trackers {
            tr.apply(state, record);
        }
        if state.step_index() % self.thin == 0 {
            self.emit(state);
        }
        Ok(())
    }
}

fn simulate(
    g: &Graph,
    steps: u64,
    thin: u64,
    bs: &[f64],
    init: InitKind,
    seed: u64,
) -> Result<Rendered, Failure> {
    if thin == 0 {
        return Err(Failure::input("thin must be >= 1"));
    }
    let mut rng = replica_rng(derive_seed(seed, TAG_SIMULATE), 0);
    let mut state = match init {
        InitKind::Iid => dynamics::initial_state(g, InitialCondition::IidExp, &mut rng)?,
        InitKind::Equal => {
            dynamics::initial_state(g, InitialCondition::AllEqualPerturbed, &mut rng)?
        }
        InitKind::Stationary => stationary::sample_stationary(g, &mut rng)?,
    };

    let mut buf = String::new();
    row!(buf, "# schema: lbs.simulate.v1");
    let mut header = String::from("t,active,fitness_min,fitness_mean");
    for b in bs {
        let _ = write!(header, ",count@{b},psi@{b}");
    }
    row!(buf, "{header}");

    let trackers: Vec<ThresholdTracker> = bs
        .iter()
        .map(|&b| ThresholdTracker::new(&state, b))
        .collect::<lbs_core::Result<_>>()?;
    let mut rows = TrajectoryRows { buf: &mut buf, trackers, thin };
    rows.emit(&state);
    dynamics::run(g, &mut state, steps, &mut rng, &mut [&mut rows])?;
    Ok(Rendered::ok(buf))
}

fn sample_stationary(g: &Graph, samples: u64, seed: u64) -> Result<Rendered, Failure> {
    if samples == 0 {
        return Err(Failure::input("samples must be >= 1"));
    }
    let stream_seed = derive_seed(seed, TAG_SAMPLES);
    let states: Vec<ChainState> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(stream_seed, i);
            stationary::sample_stationary(g, &mut rng)
        })
        .collect::<lbs_core::Result<_>>()?;

    let n = g.vertex_count();
    let mut buf = String::new();
    row!(buf, "# schema: lbs.samples.v1");
    let mut header = String::from("sample,active");
    for v in 0..n {
        let _ = write!(header, ",f{v}");
    }
    row!(buf, "{header}");
    for (i, s) in states.iter().enumerate() {
        let mut line = format!("{i},{}", s.active());
        for &x in s.fitness() {
            let _ = write!(line, ",{x}");
        }
        row!(buf, "{line}");
    }
    Ok(Rendered::ok(buf))
}

fn verify_stationarity(
    g: &Graph,
    samples: u64,
    significance: f64,
    bs: &[f64],
    inject_bias: Option<f64>,
    seed: u64,
) -> Result<Rendered, Failure> {
    if samples < 2 {
        return Err(Failure::input("verification needs samples >= 2"));
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Failure::input(format!(
            "significance must lie in (0,1), got {significance}"
        )));
    }
    if let Some(delta) = inject_bias {
        if !delta.is_finite() || delta == 0.0 {
            return Err(Failure::input(
                "inject-bias must be a nonzero finite shift",
            ));
        }
    }
    let n = g.vertex_count();

    // Two independent cohorts of exact samples; the second is pushed one
    // dynamics step. Under stationarity both cohorts carry the same law, so
    // every comparison below is a two-sample test between independent draws.
    let cohort = |tag: u64, step: bool| -> lbs_core::Result<Vec<ChainState>> {
        let stream_seed = derive_seed(seed, tag);
        (0..samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = replica_rng(stream_seed, i);
                let mut s = stationary::sample_stationary(g, &mut rng)?;
                if step {
                    let mut rec = StepRecord::default();
                    dynamics::step(g, &mut s, &mut rng, &mut rec);
                }
                Ok(s)
            })
            .collect()
    };
    let before = cohort(TAG_VERIFY_A, false)?;
    let mut after = cohort(TAG_VERIFY_B, true)?;
    if let Some(delta) = inject_bias {
        // negative control: a shifted cohort must be caught
        for s in after.iter_mut() {
            let shifted = s.fitness().iter().map(|x| x + delta).collect();
            *s = ChainState::new(g, s.active(), shifted)?;
        }
    }

    let mut tests: Vec<(&str, String, f64, f64)> = Vec::new();
    for v in 0..n {
        let fa: Vec<f64> = before.iter().map(|s| s.fitness()[v]).collect();
        let fb: Vec<f64> = after.iter().map(|s| s.fitness()[v]).collect();
        let ks = stats::ks_two_sample(&fa, &fb)?;
        tests.push(("vertex", v.to_string(), ks.statistic, ks.p_value));
    }
    for &b in bs {
        let hist = |states: &[ChainState]| {
            let mut h = vec![0u64; n + 1];
            for s in states {
                h[s.fitness().iter().filter(|&&x| x >= b).count()] += 1;
            }
            h
        };
        let chi = stats::chi_square_homogeneity(&hist(&before), &hist(&after))?;
        tests.push(("count", format!("{b}"), chi.statistic, chi.p_value));
    }

    let threshold = significance / tests.len() as f64;
    let mut buf = String::new();
    row!(buf, "# schema: lbs.verify.v1");
    row!(buf, "# bonferroni_threshold: {threshold}");
    row!(buf, "test,target,statistic,p_value,pass");
    let mut failing = Vec::new();
    for (test, target, stat, p) in &tests {
        let pass = *p >= threshold;
        if !pass {
            failing.push(format!("{test}:{target}"));
        }
        row!(buf, "{test},{target},{stat},{},{}", fmt_p(*p), if pass { "yes" } else { "no" });
    }
    let failure = (!failing.is_empty()).then(|| {
        (
            format!(
                "one-step invariance rejected on {} of {} tests",
                failing.len(),
                tests.len()
            ),
            failing,
        )
    });
    Ok(Rendered { text: buf, failure })
}

fn density(
    g: &Graph,
    vertex: usize,
    samples: u64,
    grid_max: f64,
    grid_points: usize,
    seed: u64,
) -> Result<Rendered, Failure> {
    if samples == 0 {
        return Err(Failure::input("samples must be >= 1"));
    }
    if grid_points < 2 {
        return Err(Failure::input("grid needs at least 2 points"));
    }
    if !(grid_max > 0.0) || !grid_max.is_finite() {
        return Err(Failure::input(format!(
            "grid-max must be positive and finite, got {grid_max}"
        )));
    }
    let mix = stationary::stationary_marginal(g, vertex)?;
    let stream_seed = derive_seed(seed, TAG_DENSITY);
    let draws: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(stream_seed, i);
            stationary::sample_stationary(g, &mut rng).map(|s| s.fitness()[vertex])
        })
        .collect::<lbs_core::Result<_>>()?;
    let ecdf = stats::EmpiricalCdf::new(&draws)?;

    let mut buf = String::new();
    row!(buf, "# schema: lbs.density.v1");
    row!(buf, "# mixture: {mix}");
    row!(buf, "t,pdf,cdf,ecdf");
    for i in 0..grid_points {
        let t = grid_max * i as f64 / (grid_points - 1) as f64;
        row!(buf, "{t},{},{},{}", mix.density(t), mix.cdf(t), ecdf.eval(t));
    }
    Ok(Rendered::ok(buf))
}

fn coupling_bounds(g: &Graph, horizon: u64, replicas: u64, seed: u64) -> Result<Rendered, Failure> {
    let mut rng = replica_rng(derive_seed(seed, TAG_COUPLING), 0);
    let (lower, upper) = coupling::bounds_general(g, horizon, replicas, &mut rng)?;
    let mut buf = String::new();
    row!(buf, "# schema: lbs.coupling.v1");
    row!(buf, "# lower_censored: {}", lower.censored_fraction());
    row!(buf, "# upper_censored: {}", upper.censored_fraction());
    row!(buf, "t,lower,lower_se,upper,upper_se");
    for t in 0..=horizon {
        row!(
            buf,
            "{t},{},{},{},{}",
            lower.tail(t),
            lower.se(t),
            upper.tail(t),
            upper.se(t)
        );
    }
    Ok(Rendered::ok(buf))
}

fn cycle_bounds(n: usize, horizon: u64, replicas: u64, seed: u64) -> Result<Rendered, Failure> {
    if replicas == 0 {
        return Err(Failure::input("replicas must be >= 1"));
    }
    let stream_seed = derive_seed(seed, TAG_CYCLE);
    let times: Vec<CycleTimes> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(stream_seed, i);
            coupling::cycle_bound_times(n, 1, &mut rng).map(|v| v[0])
        })
        .collect::<lbs_core::Result<_>>()?;
    let sandwich = coupling::cycle_bounds(&times, horizon)?;

    let mut buf = String::new();
    row!(buf, "# schema: lbs.cycle_bounds.v1");
    row!(buf, "t,lower,lower_se,upper,upper_se");
    for t in 0..=horizon {
        row!(
            buf,
            "{t},{},{},{},{}",
            sandwich.lower(t),
            sandwich.lower_se(t),
            sandwich.upper(t),
            sandwich.upper_se(t)
        );
    }
    Ok(Rendered::ok(buf))
}

fn avalanche_scan(
    g: &Graph,
    alphas: &[f64],
    bs: &[f64],
    steps: u64,
    seed: u64,
) -> Result<Rendered, Failure> {
    let d = g.constant_degree().ok_or_else(|| {
        Failure::input("avalanche scan needs a regular graph (constant degree)")
    })? as u32;
    let n = g.vertex_count();
    let cells: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| bs.iter().map(move |&b| (a, b)))
        .collect();

    struct Cell {
        alpha: f64,
        b: f64,
        regime: avalanche::Regime,
        p_lower: f64,
        p_upper: f64,
        starts: usize,
        spacing: Option<(f64, f64)>,
    }

    let stream_seed = derive_seed(seed, TAG_AVALANCHE);
    let rows: Vec<Cell> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(alpha, b))| -> lbs_core::Result<Cell> {
            let mut rng = replica_rng(stream_seed, i as u64);
            let s0 = stationary::sample_stationary(g, &mut rng)?;
            let record = avalanche::track_avalanches(g, s0, alpha, b, steps, &mut rng)?;
            let starts = record.starts_beyond_origin();
            // A supercritical cell legitimately produces too few starts to
            // estimate a spacing; record the blank rather than failing the scan.
            let spacing = match avalanche::estimate_d(&record) {
                Ok(pair) => Some(pair),
                Err(lbs_core::Error::InsufficientData { .. }) => None,
                Err(e) => return Err(e),
            };
            let (p_lower, p_upper) = avalanche::binomial_sandwich(n, d, alpha, b)?;
            let regime = avalanche::classify_regime(d, alpha, b)?;
            Ok(Cell { alpha, b, regime, p_lower, p_upper, starts, spacing })
        })
        .collect::<lbs_core::Result<_>>()?;

    let mut buf = String::new();
    row!(buf, "# schema: lbs.avalanche.v1");
    row!(buf, "alpha,b,regime,p_lower,p_upper,starts,d_estimate,d_se");
    for c in &rows {
        let (d_est, d_se) = match c.spacing {
            Some((est, se)) => (format!("{est}"), format!("{se}")),
            None => (String::new(), String::new()),
        };
        row!(
            buf,
            "{},{},{},{},{},{},{},{}",
            c.alpha,
            c.b,
            c.regime,
            c.p_lower,
            c.p_upper,
            c.starts,
            d_est,
            d_se
        );
    }
    Ok(Rendered::ok(buf))
}

fn bc_table(ds: &[u32], alphas: &[f64]) -> Result<Rendered, Failure> {
    let mut buf = String::new();
    row!(buf, "# schema: lbs.bc.v1");
    row!(buf, "d,alpha,b_c");
    for &d in ds {
        for &alpha in alphas {
            let bc = dist::solve_bc(d, alpha)?;
            row!(buf, "{d},{alpha},{bc}");
        }
    }
    Ok(Rendered::ok(buf))
}
