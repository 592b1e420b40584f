//! Seeded sampling helpers: random and quasi-random points, random
//! polynomial test functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{monomials, Expr, Poly};

pub type SampleRng = ChaCha8Rng;

pub const DEFAULT_SEED: u64 = 42;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Axis-aligned sampling box, the same interval in every coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBox {
    pub lo: f64,
    pub hi: f64,
}

impl Default for SampleBox {
    fn default() -> Self {
        SampleBox { lo: -2.0, hi: 2.0 }
    }
}

impl SampleBox {
    pub fn random_point(&self, rng: &mut SampleRng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(self.lo..self.hi)).collect()
    }

    pub fn random_points(&self, rng: &mut SampleRng, dim: usize, count: usize) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.random_point(rng, dim)).collect()
    }

    /// The first `count` points of the Halton sequence mapped into the box,
    /// skipping the origin-valued first element.
    pub fn halton_points(&self, dim: usize, count: usize) -> Vec<Vec<f64>> {
        let primes = first_primes(dim);
        (1..=count)
            .map(|k| {
                primes
                    .iter()
                    .map(|&p| self.lo + (self.hi - self.lo) * radical_inverse(k as u64, p))
                    .collect()
            })
            .collect()
    }
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut result = 0.0;
    while k > 0 {
        result += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    result
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(count);
    let mut candidate = 2;
    while primes.len() < count {
        if primes.iter().all(|p| candidate % p != 0) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Dense random polynomial in `dim` variables: every monomial of degree at
/// most `max_degree` with a coefficient drawn uniformly from [-1, 1].
pub fn random_polynomial(rng: &mut SampleRng, dim: usize, max_degree: u32) -> Expr {
    let mut p = Poly::zero(dim);
    for exps in monomials(dim, max_degree) {
        let c: f64 = rng.random_range(-1.0..1.0);
        p = &p + &Poly::monomial(exps, c);
    }
    p.to_expr()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_is_deterministic_and_inside_box() {
        let b = SampleBox::default();
        let pts = b.halton_points(3, 50);
        assert_eq!(pts, b.halton_points(3, 50));
        assert!(pts.iter().flatten().all(|v| (-2.0..2.0).contains(v)));
        assert_eq!(pts[0], vec![0.0, 1.0 / 3.0 * 4.0 - 2.0, 0.2 * 4.0 - 2.0]);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let b = SampleBox::default();
        let a = b.random_points(&mut rng(5), 4, 10);
        assert_eq!(a, b.random_points(&mut rng(5), 4, 10));
        let p = random_polynomial(&mut rng(1), 2, 2);
        let q = random_polynomial(&mut rng(1), 2, 2);
        assert_eq!(p.eval(&[0.3, 0.4]), q.eval(&[0.3, 0.4]));
    }
}
