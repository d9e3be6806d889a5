use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::value_space::{neumaier_sum, DiscreteDistribution, Norm, NormedValue};

/// Mean tolerance for the centring precondition.
pub const MEAN_TOLERANCE: f64 = 1e-9;

/// Default number of grid functionals in dimension > 1.
pub const DEFAULT_KAPPA_GRID: usize = 1024;

/// Value of the anticoncentration functional
/// `inf over x' of (E|x'(Y)|)^2 / E(x'(Y))^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub value: f64,
    /// True in dimension one; otherwise the minimum over a finite set of
    /// functionals, which can only overestimate the infimum.
    pub exact: bool,
    pub functionals: usize,
    /// Minimizing functional, scaled to unit dual norm.
    pub argmin: Vec<f64>,
}

fn ratio(y: &DiscreteDistribution<f64>, direction: &[f64]) -> Option<f64> {
    let proj: Vec<(f64, f64)> = y
        .atoms()
        .iter()
        .map(|a| (a.value.coords().iter().zip(direction).map(|(x, u)| x * u).sum::<f64>(), a.prob))
        .collect();
    let first = neumaier_sum(proj.iter().map(|&(v, p)| p * v.abs()));
    let second = neumaier_sum(proj.iter().map(|&(v, p)| p * v * v));
    if second <= 0.0 {
        return None;
    }
    Some((first * first / second).min(1.0))
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Axis directions followed by `grid` low-discrepancy directions: evenly
/// spaced half-circle angles in the plane, Halton points pushed through the
/// normal quantile function above that.
fn directions(dim: usize, grid: usize) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = (0..dim)
        .map(|a| (0..dim).map(|j| if j == a { 1.0 } else { 0.0 }).collect())
        .collect();
    if dim == 2 {
        for j in 0..grid {
            let theta = std::f64::consts::PI * j as f64 / grid as f64;
            out.push(vec![theta.cos(), theta.sin()]);
        }
    } else if dim > 2 {
        if dim > PRIMES.len() {
            return Err(Error::invalid(format!("kappa grid supports dimension <= {}", PRIMES.len())));
        }
        let normal = Normal::standard();
        for i in 1..=grid as u64 {
            out.push(
                PRIMES[..dim]
                    .iter()
                    .map(|&b| normal.inverse_cdf(radical_inverse(i, b).clamp(1e-12, 1.0 - 1e-12)))
                    .collect(),
            );
        }
    }
    Ok(out)
}

/// Anticoncentration constant of a mean-zero discrete law on `R^d`.
///
/// Exact in dimension one. In higher dimension the infimum runs over the
/// axis functionals and a deterministic grid of `grid` further directions;
/// the ratio is scale invariant, so directions are only normalized (to unit
/// dual norm) for reporting.
pub fn kappa(y: &DiscreteDistribution<f64>, norm: Norm, grid: usize) -> Result<KappaEstimate> {
    let mean = y.mean();
    let drift = Norm::Maximum.eval(&mean);
    if drift > MEAN_TOLERANCE {
        return Err(Error::NonzeroMean(drift));
    }
    if y.atoms().iter().all(|a| a.value.is_zero()) {
        return Err(Error::Degenerate);
    }
    let dim = y.dim();
    let dirs = directions(dim, grid)?;
    let mut best: Option<(f64, &Vec<f64>)> = None;
    for d in &dirs {
        if let Some(r) = ratio(y, d) {
            if best.is_none_or(|(b, _)| r < b) {
                best = Some((r, d));
            }
        }
    }
    let (value, dir) = best.ok_or(Error::Degenerate)?;
    let dual = norm.dual().eval(&NormedValue::new(dir.iter().copied())?);
    Ok(KappaEstimate {
        value,
        exact: dim == 1,
        functionals: dirs.len(),
        argmin: dir.iter().map(|x| x / dual).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_examples() {
        let rad = DiscreteDistribution::rademacher();
        let k = kappa(&rad, Norm::Euclidean, DEFAULT_KAPPA_GRID).unwrap();
        assert_eq!(k.value, 1.0);
        assert!(k.exact);
        let u3 = DiscreteDistribution::uniform(3).unwrap();
        let k = kappa(&u3, Norm::Euclidean, DEFAULT_KAPPA_GRID).unwrap();
        assert!((k.value - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn preconditions() {
        let shifted = DiscreteDistribution::from_scalars(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        assert!(matches!(kappa(&shifted, Norm::Euclidean, 16), Err(Error::NonzeroMean(_))));
        let zero = DiscreteDistribution::from_scalars(&[(0.0, 1.0)]).unwrap();
        assert_eq!(kappa(&zero, Norm::Euclidean, 16), Err(Error::Degenerate));
    }

    fn independent_signs() -> DiscreteDistribution<f64> {
        let mut atoms = Vec::new();
        for a in [-1.0, 1.0] {
            for b in [-1.0, 1.0] {
                atoms.push((NormedValue::from_f64(&[a, b]).unwrap(), 0.25));
            }
        }
        DiscreteDistribution::new(atoms).unwrap()
    }

    #[test]
    fn two_dimensional_signs() {
        let y = independent_signs();
        // along (cos θ, sin θ) the ratio is max(|cos θ|, |sin θ|)^2, minimal (1/2) at 45 degrees
        assert_eq!(ratio(&y, &[1.0, 0.0]), Some(1.0));
        assert_eq!(ratio(&y, &[0.0, 1.0]), Some(1.0));
        let k = kappa(&y, Norm::Euclidean, 1024).unwrap();
        assert!(!k.exact);
        assert!((k.value - 0.5).abs() < 1e-12, "{}", k.value);
        let k_small = kappa(&y, Norm::Euclidean, 6).unwrap();
        assert!(k_small.value >= k.value);
    }

    #[test]
    fn three_dimensional_grid_stays_in_range() {
        let mut atoms = Vec::new();
        for (i, p) in [(0, 0.25), (1, 0.25), (2, 0.5)] {
            let mut c = vec![0.0; 3];
            c[i] = 1.0;
            atoms.push((NormedValue::from_f64(&c).unwrap(), p / 2.0));
            c[i] = -1.0;
            atoms.push((NormedValue::from_f64(&c).unwrap(), p / 2.0));
        }
        let y = DiscreteDistribution::new(atoms).unwrap();
        let k = kappa(&y, Norm::Maximum, 256).unwrap();
        assert!(k.value > 0.0 && k.value <= 1.0);
        assert_eq!(k.functionals, 3 + 256);
        assert!((Norm::AbsoluteSum.eval(&NormedValue::new(k.argmin.iter().copied()).unwrap()) - 1.0).abs() < 1e-12);
    }
}
