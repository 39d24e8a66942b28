//! Goodness-of-fit helpers for the sampling tests.

#![allow(dead_code)]

use pinn_ns::sampling::{DomainSpec, SamplePoint};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const BINS: usize = 20;

/// Area of the part of a disc of radius `r` lying left of the chord at
/// signed offset `s` from its center, up to a constant.
fn disc_strip(s: f64, r: f64) -> f64 {
    let s = s.clamp(-r, r);
    s * (r * r - s * s).max(0.0).sqrt() + r * r * (s / r).asin()
}

/// Exact probability of each of `BINS` equal bins along axis `axis`
/// (0 = x, 1 = y, 2 = t, 3 = ν) for uniform sampling of `domain` with the
/// cylinder removed.
pub fn bin_probabilities(domain: &DomainSpec, axis: usize) -> Vec<f64> {
    let iv = [domain.x, domain.y, domain.t, domain.nu][axis];
    let edges: Vec<f64> = (0..=BINS)
        .map(|k| iv.lo + iv.width() * k as f64 / BINS as f64)
        .collect();
    let cylinder = domain.cylinder.filter(|_| axis < 2);
    let Some(c) = cylinder else {
        return vec![1.0 / BINS as f64; BINS];
    };
    let r = c.radius();
    let (center, span) = if axis == 0 {
        (c.center[0], domain.y.width())
    } else {
        (c.center[1], domain.x.width())
    };
    let total = domain.x.width() * domain.y.width() - std::f64::consts::PI * r * r;
    edges
        .windows(2)
        .map(|w| {
            let removed = disc_strip(w[1] - center, r) - disc_strip(w[0] - center, r);
            ((w[1] - w[0]) * span - removed) / total
        })
        .collect()
}

pub fn histogram(points: &[SamplePoint], domain: &DomainSpec, axis: usize) -> Vec<u64> {
    let iv = [domain.x, domain.y, domain.t, domain.nu][axis];
    let mut counts = vec![0u64; BINS];
    for p in points {
        let v = [p.x, p.y, p.t, p.nu][axis];
        let k = (((v - iv.lo) / iv.width()) * BINS as f64).floor() as usize;
        counts[k.min(BINS - 1)] += 1;
    }
    counts
}

pub fn chi_square(counts: &[u64], probabilities: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probabilities)
        .map(|(&o, &p)| {
            let e = n as f64 * p;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}

/// Upper critical value of the chi-square distribution with `BINS − 1`
/// degrees of freedom at significance `alpha`.
pub fn critical_value(alpha: f64) -> f64 {
    ChiSquared::new((BINS - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha)
}

/// Chi-square statistic of every marginal, in the order x, y, t, ν.
pub fn marginal_statistics(points: &[SamplePoint], domain: &DomainSpec) -> [f64; 4] {
    std::array::from_fn(|axis| chi_square(&histogram(points, domain, axis), &bin_probabilities(domain, axis)))
}
