//! Quadrature on the reference triangle `{x, y >= 0, x + y <= 1}` and on
//! the unit interval.

use alloc::vec::Vec;

use super::FemError;
use crate::math;

/// Highest triangle order served by [`triangle`].
pub const MAX_ORDER: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    /// Weights in reference-area measure; they sum to 1/2.
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }
}

/// Rule exact for bivariate polynomials of total degree `order`.
pub fn triangle(order: usize) -> Result<QuadratureRule, FemError> {
    match order {
        0 => Err(FemError::UnsupportedOrder(order)),
        1 => Ok(QuadratureRule {
            points: alloc::vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: alloc::vec![0.5],
            order,
        }),
        2 => {
            let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
            Ok(QuadratureRule {
                points: alloc::vec![[a, a], [b, a], [a, b]],
                weights: alloc::vec![1.0 / 6.0; 3],
                order,
            })
        }
        3..=5 => Ok(radon7(order)),
        o if o <= MAX_ORDER => Ok(collapsed(o)),
        o => Err(FemError::UnsupportedOrder(o)),
    }
}

// Seven-point degree-5 rule.
fn radon7(order: usize) -> QuadratureRule {
    let r = math::sqrt(15.0);
    let a1 = (6.0 - r) / 21.0;
    let a2 = (6.0 + r) / 21.0;
    let w1 = (155.0 - r) / 2400.0;
    let w2 = (155.0 + r) / 2400.0;
    let third = 1.0 / 3.0;
    QuadratureRule {
        points: alloc::vec![
            [third, third],
            [a1, a1],
            [1.0 - 2.0 * a1, a1],
            [a1, 1.0 - 2.0 * a1],
            [a2, a2],
            [1.0 - 2.0 * a2, a2],
            [a2, 1.0 - 2.0 * a2],
        ],
        weights: alloc::vec![9.0 / 80.0, w1, w1, w1, w2, w2, w2],
        order,
    }
}

// Tensor Gauss rule on the square collapsed onto the triangle by
// x = u, y = v (1 - u).
fn collapsed(order: usize) -> QuadratureRule {
    let n = (order + 3) / 2;
    let (nodes, weights) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut w = Vec::with_capacity(n * n);
    for (u, wu) in nodes.iter().zip(&weights) {
        for (v, wv) in nodes.iter().zip(&weights) {
            points.push([*u, v * (1.0 - u)]);
            w.push(wu * wv * (1.0 - u));
        }
    }
    QuadratureRule {
        points,
        weights: w,
        order,
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]` (weights sum to 1).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = math::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        pairs.push((0.5 * (1.0 + z), 1.0 / ((1.0 - z * z) * d * d)));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (z * p - p0) / (z * z - 1.0);
    (p, d)
}

/// Gauss rule on `[0, 1]` exact to polynomial degree `order`.
pub fn interval(order: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_legendre(order / 2 + 1)
}
