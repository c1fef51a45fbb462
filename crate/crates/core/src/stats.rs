//! Statistical machinery for the verification suites.
//!
//! Everything here is implemented in-tree so the test stack stays auditable:
//! empirical CDFs, one- and two-sample Kolmogorov-Smirnov tests with the
//! asymptotic Kolmogorov p-value, chi-square goodness-of-fit and homogeneity
//! tests, exact log-space binomial tails, and small Monte Carlo helpers.
//! KS p-values are asymptotic; callers are expected to feed n >= 10.

use crate::error::{Error, Result};

/// Right-continuous empirical CDF of a sample.
#[derive(Clone, Debug)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::input("empirical CDF needs at least one sample"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("empirical CDF sample contains non-finite value"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EmpiricalCdf { sorted })
    }

    /// Fraction of the sample `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test of `samples` against the distribution with CDF `cdf`.
/// `cdf` must be a proper nondecreasing CDF on the sample range.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::input(format!(
            "KS test needs at least 10 samples, got {n}"
        )));
    }
    let mut xs = samples.to_vec();
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("KS sample contains non-finite value"));
    }
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::input(format!("cdf({x}) = {f} outside [0, 1]")));
        }
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(nf.sqrt() * d),
    })
}

/// Two-sample KS test. Ties are handled by advancing both samples through the
/// tied value before the gap is measured.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < 10 || b.len() < 10 {
        return Err(Error::input(format!(
            "KS test needs at least 10 samples per side, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::input("KS sample contains non-finite value"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    let (n1, n2) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() || j < ys.len() {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let n_eff = n1 * n2 / (n1 + n2);
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(n_eff.sqrt() * d),
    })
}

/// Asymptotic Kolmogorov survival function
/// `Q(z) = 2 Σ_{k>=1} (-1)^{k-1} exp(-2 k² z²)`, truncated at 1e-10.
pub fn kolmogorov_sf(z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    // below this the alternating series cancels badly; Q is 1 to >= 10 digits
    if z < 0.07 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100_000u64 {
        let term = (-2.0 * (k * k) as f64 * z * z).exp();
        sum += sign * term;
        if term < 1e-10 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Chi-square goodness of fit of observed counts against cell probabilities.
/// Cells with zero probability must have zero observations.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != expected_probs.len() {
        return Err(Error::input(format!(
            "chi-square cell mismatch: {} observed vs {} probabilities",
            observed.len(),
            expected_probs.len()
        )));
    }
    if observed.len() < 2 {
        return Err(Error::input("chi-square needs at least 2 cells"));
    }
    let psum: f64 = expected_probs.iter().sum();
    if (psum - 1.0).abs() > 1e-8 || expected_probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::input(format!(
            "expected probabilities must be in [0, 1] and sum to 1, sum = {psum}"
        )));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::input("chi-square needs at least one observation"));
    }
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        if p == 0.0 {
            if o > 0 {
                return Err(Error::input(format!(
                    "observed {o} events in a zero-probability cell"
                )));
            }
            continue;
        }
        cells += 1;
        let e = p * total as f64;
        stat += (o as f64 - e) * (o as f64 - e) / e;
    }
    if cells < 2 {
        return Err(Error::input("chi-square needs at least 2 supported cells"));
    }
    let dof = cells - 1;
    Ok(ChiSquareResult {
        statistic: stat,
        dof,
        p_value: chi_square_sf(stat, dof),
    })
}

/// Two-sample chi-square homogeneity test on aligned count vectors.
/// Expected cell counts come from the pooled proportions; dof = cells - 1.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<ChiSquareResult> {
    if a.len() != b.len() {
        return Err(Error::input("homogeneity test needs aligned count vectors"));
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(Error::input("homogeneity test needs observations on both sides"));
    }
    let total = (na + nb) as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&oa, &ob) in a.iter().zip(b) {
        let pooled = (oa + ob) as f64;
        if pooled == 0.0 {
            continue;
        }
        cells += 1;
        let ea = pooled * na as f64 / total;
        let eb = pooled * nb as f64 / total;
        stat += (oa as f64 - ea) * (oa as f64 - ea) / ea;
        stat += (ob as f64 - eb) * (ob as f64 - eb) / eb;
    }
    if cells < 2 {
        return Err(Error::input("homogeneity test needs at least 2 supported cells"));
    }
    let dof = cells - 1;
    Ok(ChiSquareResult {
        statistic: stat,
        dof,
        p_value: chi_square_sf(stat, dof),
    })
}

/// Chi-square survival function: regularized upper incomplete gamma
/// `Q(dof/2, x/2)`.
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(dof as f64 / 2.0, x / 2.0)
}

/// Exact upper binomial tail `P(Bin(n, p) >= k)`, summed in log space with
/// compensated summation. `k <= 0` gives 1, `k > n` gives 0.
pub fn binom_tail(n: u64, p: f64, k: i64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::input(format!("binomial p = {p} outside [0, 1]")));
    }
    if k <= 0 {
        return Ok(1.0);
    }
    let k = k as u64;
    if k > n {
        return Ok(0.0);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    // cumulative log-factorials up to n
    let mut lnfact = vec![0.0f64; n as usize + 1];
    for i in 1..=n as usize {
        lnfact[i] = lnfact[i - 1] + (i as f64).ln();
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let mut sum = 0.0;
    let mut comp = 0.0;
    for j in k..=n {
        let ln_term = lnfact[n as usize] - lnfact[j as usize] - lnfact[(n - j) as usize]
            + j as f64 * ln_p
            + (n - j) as f64 * ln_q;
        let t = ln_term.exp();
        let y = t - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    Ok(sum.clamp(0.0, 1.0))
}

/// Monte Carlo standard error: sample standard deviation / sqrt(n).
pub fn mc_se(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::input("standard error needs at least 2 samples"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok((var / n).sqrt())
}

/// Least-squares affine fit `y ≈ slope * x + intercept`.
pub fn fit_affine(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::input("affine fit needs two aligned samples of length >= 2"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::input("affine fit needs non-constant x"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Pearson correlation coefficient.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::input("correlation needs two aligned samples of length >= 2"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::input("correlation undefined for constant sample"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

// Lanczos approximation, g = 7, 9 coefficients. Relative error ~ 1e-14.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return std::f64::consts::PI.ln() - (std::f64::consts::PI * x).sin().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma Q(a, x); series for x < a + 1,
/// continued fraction otherwise.
fn gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_contfrac(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    (sum * (-x + a * x.ln() - ln_gamma(a)).exp()).clamp(0.0, 1.0)
}

fn gamma_q_contfrac(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    ((-x + a * x.ln() - ln_gamma(a)).exp() * h).clamp(0.0, 1.0)
}
