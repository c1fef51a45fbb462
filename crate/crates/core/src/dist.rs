//! Fitness laws.
//!
//! `ExpPlus(n)` is a unit-rate exponential conditioned on not being the
//! minimum of `n` independent unit-rate exponentials:
//!
//! ```text
//! density   ρ_n(t) = n/(n-1) · e^{-t} (1 - e^{-(n-1)t})        t >= 0
//! survival  P(T >= b) = n/(n-1) · (e^{-b} - e^{-nb}/n)
//! mean      (n+1)/n
//! ```
//!
//! Replaced vertices carry fresh `Exp(1)` fitness; every other vertex of a
//! stationary state carries an `ExpPlus` with the parameter of the walk
//! position that last refreshed it. The CDF uses the `expm1` form because
//! `1 - survival` cancels catastrophically for small `b`.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::Exp1;

/// Rejection draws this many proposals before declaring the RNG broken.
/// Acceptance probability is (n-1)/n >= 1/2, so the cap is unreachable.
pub const EXP_PLUS_REJECTION_CAP: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExpPlus {
    n: u32,
}

impl ExpPlus {
    /// Conditioning size `n >= 2` (a closed neighborhood always has >= 2
    /// vertices on a connected graph with an edge).
    pub fn new(n: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::input(format!("ExpPlus needs n >= 2, got {n}")));
        }
        Ok(ExpPlus { n })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let m = self.n as f64;
        m / (m - 1.0) * (-t).exp() * -(-(m - 1.0) * t).exp_m1()
    }

    pub fn survival(&self, b: f64) -> f64 {
        if b <= 0.0 {
            return 1.0;
        }
        let m = self.n as f64;
        m / (m - 1.0) * ((-b).exp() - (-m * b).exp() / m)
    }

    pub fn cdf(&self, b: f64) -> f64 {
        if b <= 0.0 {
            return 0.0;
        }
        let m = self.n as f64;
        m / (m - 1.0) * (-(-b).exp_m1() + (-m * b).exp_m1() / m)
    }

    pub fn mean(&self) -> f64 {
        (self.n as f64 + 1.0) / self.n as f64
    }

    /// Rejection sampler: propose `Y ~ Exp(1)`, accept with probability
    /// `1 - e^{-(n-1)Y}`. One uniform per proposal, drawn after the proposal.
    ///
    /// Panics if the rejection cap is exhausted, which is unreachable for a
    /// working RNG (acceptance rate (n-1)/n).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let m = self.n as f64;
        for _ in 0..EXP_PLUS_REJECTION_CAP {
            let y: f64 = rng.sample(Exp1);
            let u: f64 = rng.random();
            if u < -(-(m - 1.0) * y).exp_m1() {
                return y;
            }
        }
        panic!("ExpPlus rejection cap exhausted; RNG is broken");
    }
}

/// Reference construction for tests: draw `n` independent `Exp(1)` values and
/// return a uniformly chosen non-minimum coordinate. Kept deliberately
/// independent of the rejection sampler.
pub fn sample_exp_plus_order_stats<R: Rng + ?Sized>(n: u32, rng: &mut R) -> f64 {
    assert!(n >= 2);
    let draws: Vec<f64> = (0..n).map(|_| rng.sample(Exp1)).collect();
    let argmin = draws
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    let pick = rng.random_range(0..n as usize - 1);
    let idx = if pick < argmin { pick } else { pick + 1 };
    draws[idx]
}

/// `p_{d,b}`: probability that an `ExpPlus(d+1)` fitness is at least `b`.
/// This is the chance that a vertex of degree `d` refreshed by the walk ends
/// up above threshold `b`. `p_{d,0} = 1`.
pub fn p_db(d: u32, b: f64) -> Result<f64> {
    if d < 1 {
        return Err(Error::input(format!("p_db needs degree d >= 1, got {d}")));
    }
    Ok(ExpPlus::new(d + 1)?.survival(b))
}

/// Critical threshold: the unique `b` with `p_{d,b} = alpha`, found by
/// bisection on [0, 50]. `alpha` must be in (0, 1) and above `p_{d,50}`
/// (~2e-22 for small d); the returned root satisfies `|p_{d,b} - alpha| < 1e-12`.
pub fn solve_bc(d: u32, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::input(format!(
            "critical threshold needs alpha in (0, 1), got {alpha}"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 50.0f64);
    if p_db(d, hi)? > alpha {
        return Err(Error::input(format!(
            "alpha = {alpha} below p_(d,50); root lies outside the [0, 50] bracket"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p_db(d, mid)? > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let b = 0.5 * (lo + hi);
    let p = p_db(d, b)?;
    if (p - alpha).abs() >= 1e-12 {
        return Err(Error::internal(format!(
            "bisection failed to pin p_(d,b): residual {}",
            (p - alpha).abs()
        )));
    }
    Ok(b)
}

/// A fitness marginal component: fresh `Exp(1)` or conditioned `ExpPlus(n)`.
/// Ordered so mixture components have a canonical sort (Exp1 first).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Law {
    Exp1,
    ExpPlus(u32),
}

impl Law {
    pub fn cdf(self, t: f64) -> f64 {
        match self {
            Law::Exp1 => {
                if t <= 0.0 {
                    0.0
                } else {
                    -(-t).exp_m1()
                }
            }
            Law::ExpPlus(n) => ExpPlus { n }.cdf(t),
        }
    }

    pub fn survival(self, t: f64) -> f64 {
        match self {
            Law::Exp1 => {
                if t <= 0.0 {
                    1.0
                } else {
                    (-t).exp()
                }
            }
            Law::ExpPlus(n) => ExpPlus { n }.survival(t),
        }
    }

    pub fn density(self, t: f64) -> f64 {
        match self {
            Law::Exp1 => {
                if t < 0.0 {
                    0.0
                } else {
                    (-t).exp()
                }
            }
            Law::ExpPlus(n) => ExpPlus { n }.density(t),
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Law::Exp1 => rng.sample(Exp1),
            Law::ExpPlus(n) => ExpPlus { n }.sample(rng),
        }
    }
}

impl std::fmt::Display for Law {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Law::Exp1 => write!(f, "Exp(1)"),
            Law::ExpPlus(n) => write!(f, "ExpPlus({n})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;
    use crate::stats;
    use approx::assert_relative_eq;

    /// Adaptive Simpson quadrature, independent of the closed forms above.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn rec<F: Fn(f64) -> f64 + Copy>(
            f: F,
            a: f64,
            b: f64,
            fa: f64,
            fb: f64,
            fm: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, fm, flm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, fb, frm, right, tol / 2.0, depth - 1)
            }
        }
        let m = 0.5 * (a + b);
        let (fa, fb, fm) = (f(a), f(b), f(m));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fb, fm, whole, tol, 40)
    }

    #[test]
    fn density_integrates_to_one_and_mean_matches() {
        for n in 2..=12u32 {
            let law = ExpPlus::new(n).unwrap();
            // the density is bounded by n/(n-1) e^{-t}; mass beyond t = 80 is < 1e-34
            let total = simpson(|t| law.density(t), 0.0, 80.0, 1e-13);
            assert!((total - 1.0).abs() < 1e-9, "n = {n}: integral = {total}");
            let mean = simpson(|t| t * law.density(t), 0.0, 80.0, 1e-13);
            assert!(
                (mean - law.mean()).abs() < 1e-9,
                "n = {n}: mean quadrature {mean} vs {}",
                law.mean()
            );
        }
    }

    #[test]
    fn closed_forms_at_ln2() {
        let ln2 = std::f64::consts::LN_2;
        let law = ExpPlus::new(3).unwrap();
        assert_relative_eq!(law.density(ln2), 9.0 / 16.0, max_relative = 1e-14);
        assert_relative_eq!(law.survival(ln2), 11.0 / 16.0, max_relative = 1e-14);
        assert_relative_eq!(law.cdf(ln2), 5.0 / 16.0, max_relative = 1e-13);
        assert_relative_eq!(p_db(2, ln2).unwrap(), 11.0 / 16.0, max_relative = 1e-14);
    }

    #[test]
    fn survival_plus_cdf_is_one_even_for_tiny_b() {
        for n in [2u32, 3, 7] {
            let law = ExpPlus::new(n).unwrap();
            for b in [1e-300, 1e-18, 1e-9, 1e-3, 0.1, 1.0, 5.0, 40.0] {
                let s = law.survival(b) + law.cdf(b);
                assert!((s - 1.0).abs() < 1e-12, "n = {n}, b = {b}: {s}");
            }
            // cdf keeps relative precision for small b: cdf(b) ~ n/2 b^2
            let b = 1e-9;
            let expected = n as f64 / 2.0 * b * b;
            assert_relative_eq!(law.cdf(b), expected, max_relative = 1e-6);
        }
    }

    #[test]
    fn mean_values_exact() {
        assert_eq!(ExpPlus::new(2).unwrap().mean(), 1.5);
        assert_relative_eq!(ExpPlus::new(3).unwrap().mean(), 4.0 / 3.0, max_relative = 1e-15);
        assert!(ExpPlus::new(1).is_err());
        assert!(ExpPlus::new(0).is_err());
    }

    #[test]
    fn exp_plus_dominates_exp1() {
        for n in 2..=8u32 {
            let law = ExpPlus::new(n).unwrap();
            for b in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0] {
                assert!(law.survival(b) >= (-b as f64).exp() - 1e-15);
            }
        }
    }

    #[test]
    fn rejection_sampler_matches_order_statistics_oracle() {
        for n in [2u32, 3, 5, 12] {
            let law = ExpPlus::new(n).unwrap();
            let mut rng = replica_rng(91, n as u64);
            let a: Vec<f64> = (0..40_000).map(|_| law.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..40_000)
                .map(|_| sample_exp_plus_order_stats(n, &mut rng))
                .collect();
            let ks = stats::ks_two_sample(&a, &b).unwrap();
            assert!(ks.p_value > 1e-3, "n = {n}: p = {}", ks.p_value);
            let mean = a.iter().sum::<f64>() / a.len() as f64;
            let se = stats::mc_se(&a).unwrap();
            assert!(
                (mean - law.mean()).abs() < 3.0 * se,
                "n = {n}: mean {mean} vs {} (se {se})",
                law.mean()
            );
        }
    }

    #[test]
    fn sampler_matches_closed_form_cdf() {
        let law = ExpPlus::new(4).unwrap();
        let mut rng = replica_rng(92, 0);
        let xs: Vec<f64> = (0..50_000).map(|_| law.sample(&mut rng)).collect();
        let ks = stats::ks_one_sample(&xs, |t| law.cdf(t)).unwrap();
        assert!(ks.p_value > 1e-3, "p = {}", ks.p_value);
    }

    #[test]
    fn solve_bc_reference_values() {
        // ln 2 solves p_(2,b) = 11/16 exactly
        let b = solve_bc(2, 11.0 / 16.0).unwrap();
        assert!((b - std::f64::consts::LN_2).abs() < 1e-11, "b = {b}");
        // mpmath 1.3 reference roots
        assert!((solve_bc(2, 0.5).unwrap() - 1.0575768135749349).abs() < 1e-11);
        assert!((solve_bc(3, 0.25).unwrap() - 1.6723188963773300).abs() < 1e-11);
        assert!((solve_bc(2, 0.25).unwrap() - 1.7822781486537432).abs() < 1e-11);
        assert!((solve_bc(2, 0.75).unwrap() - 0.5836208967784920).abs() < 1e-11);
    }

    #[test]
    fn solve_bc_round_trip_and_monotonicity() {
        let mut prev = f64::INFINITY;
        for alpha in [0.05, 0.2, 0.4, 0.6, 0.8, 0.95] {
            for d in [1u32, 2, 5] {
                let b = solve_bc(d, alpha).unwrap();
                assert!((p_db(d, b).unwrap() - alpha).abs() < 1e-12);
            }
            let b = solve_bc(2, alpha).unwrap();
            assert!(b < prev, "b_c must decrease in alpha");
            prev = b;
        }
        assert!(solve_bc(2, 0.0).is_err());
        assert!(solve_bc(2, 1.0).is_err());
        assert!(solve_bc(2, 1e-30).is_err()); // outside the [0, 50] bracket
    }

    #[test]
    fn p_db_basics() {
        assert_eq!(p_db(3, 0.0).unwrap(), 1.0);
        assert!(p_db(0, 1.0).is_err());
        let mut prev = 1.0;
        for i in 1..=30 {
            let b = i as f64 * 0.25;
            let p = p_db(2, b).unwrap();
            assert!(p < prev, "p_db must decrease in b");
            prev = p;
        }
        assert!(prev < 1e-3); // -> 0 for large b
    }

    #[test]
    fn law_display_and_consistency() {
        assert_eq!(Law::Exp1.to_string(), "Exp(1)");
        assert_eq!(Law::ExpPlus(3).to_string(), "ExpPlus(3)");
        assert!(Law::Exp1 < Law::ExpPlus(2));
        for t in [0.0, 0.3, 1.7] {
            assert_relative_eq!(
                Law::ExpPlus(3).cdf(t),
                ExpPlus::new(3).unwrap().cdf(t),
                max_relative = 1e-15
            );
            assert!((Law::Exp1.cdf(t) + Law::Exp1.survival(t) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let law = ExpPlus::new(3).unwrap();
        let mut a = replica_rng(5, 7);
        let mut b = replica_rng(5, 7);
        let xs: Vec<f64> = (0..100).map(|_| law.sample(&mut a)).collect();
        let ys: Vec<f64> = (0..100).map(|_| law.sample(&mut b)).collect();
        assert_eq!(xs, ys);
    }
}
