use statrs::distribution::{Beta, ContinuousCDF};

/// Exact (Clopper-Pearson) two-sided interval for a binomial proportion.
///
/// Bounds are beta quantiles: `Beta(x, n-x+1)` at `α/2` and
/// `Beta(x+1, n-x)` at `1-α/2`, with the conventional 0 and 1 at the edges.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    assert!(trials > 0, "no trials");
    assert!(successes <= trials, "more successes than trials");
    assert!(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0, 1)");
    let alpha = 1.0 - confidence;
    let x = successes as f64;
    let n = trials as f64;
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0).expect("positive shapes").inverse_cdf(alpha / 2.0)
    };
    let upper = if successes == trials {
        1.0
    } else {
        Beta::new(x + 1.0, n - x).expect("positive shapes").inverse_cdf(1.0 - alpha / 2.0)
    };
    (lower.clamp(0.0, 1.0), upper.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `P(Bin(n, p) <= x)` by direct summation.
    fn binom_cdf(x: u64, n: u64, p: f64) -> f64 {
        let mut log_c = 0.0f64;
        let mut total = 0.0;
        for j in 0..=x {
            if j > 0 {
                log_c += ((n - j + 1) as f64).ln() - (j as f64).ln();
            }
            total += (log_c + j as f64 * p.ln() + (n - j) as f64 * (1.0 - p).ln()).exp();
        }
        total
    }

    #[test]
    fn zero_successes_closed_form() {
        let (lo, hi) = clopper_pearson(0, 10, 0.95);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(10, 10, 0.95);
        assert_eq!(hi, 1.0);
        assert!((lo - 0.025f64.powf(0.1)).abs() < 1e-9);
    }

    #[test]
    fn bounds_solve_binomial_tail_equations() {
        for &(x, n) in &[(1u64, 20u64), (7, 20), (19, 20), (500, 1000), (3, 100_000)] {
            let (lo, hi) = clopper_pearson(x, n, 0.99);
            // P(Bin(n, hi) <= x) = α/2 and P(Bin(n, lo) >= x) = α/2
            assert!((binom_cdf(x, n, hi) - 0.005).abs() < 1e-7, "x={x} n={n}");
            assert!((1.0 - binom_cdf(x - 1, n, lo) - 0.005).abs() < 1e-7, "x={x} n={n}");
            let p = x as f64 / n as f64;
            assert!(lo <= p && p <= hi);
        }
    }
}
