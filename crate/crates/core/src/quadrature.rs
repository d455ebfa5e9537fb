//! Gauss-Hermite rules and their tensor products over complex noise.
//!
//! A rule of `k` nodes integrates `e^{-t^2} f(t)` over the real line and is
//! exact for polynomials up to degree `2k - 1`. A circular complex Gaussian
//! with unit variance has density `e^{-(a^2 + b^2)} / pi`, so the product of
//! two rules, scaled by `1/pi`, is an expectation rule for one complex
//! noise component.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::linalg::C64;

/// Largest supported order; beyond it the unscaled recurrence overflows.
pub const MAX_ORDER: usize = 150;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes by Newton iteration on the orthonormal Hermite recurrence.
    pub fn new(order: usize) -> Self {
        assert!((1..=MAX_ORDER).contains(&order), "Gauss-Hermite order must be in 1..={MAX_ORDER}");
        let n = order;
        let pim4 = libm::pow(PI, -0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0_f64;
        for i in 0..m {
            z = match i {
                0 => libm::sqrt(2.0 * nf + 1.0) - 1.85575 * libm::pow(2.0 * nf + 1.0, -1.0 / 6.0),
                1 => z - 1.14 * libm::pow(nf, 0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * libm::sqrt(2.0 / (jf + 1.0)) * p2 - libm::sqrt(jf / (jf + 1.0)) * p3;
                }
                pp = libm::sqrt(2.0 * nf) * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        // ascending order
        nodes.reverse();
        weights.reverse();
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ e^{-t^2} f(t) dt`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }
}

/// Tensor points lighter than this contribute nothing representable and are
/// never evaluated (their far-tail outputs could only trip underflow guards).
pub const NEGLIGIBLE_WEIGHT: f64 = 1e-250;

/// Tensor-product expectation rule for `CN(0, I_dim)` noise.
///
/// Points are enumerated in a fixed lexicographic order over the `2*dim`
/// real coordinates (real part before imaginary part, component 0 most
/// significant), so any partition by leading index is deterministic.
#[derive(Debug, Clone)]
pub struct ComplexNoiseRule {
    rule: GaussHermite,
    dim: usize,
    // weights already divided by sqrt(pi)
    scaled: Vec<f64>,
}

impl ComplexNoiseRule {
    pub fn new(order: usize, dim: usize) -> Self {
        let rule = GaussHermite::new(order);
        let s = 1.0 / libm::sqrt(PI);
        let scaled = rule.weights().iter().map(|w| w * s).collect();
        Self { rule, dim, scaled }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.rule.order()
    }

    /// Number of tensor points, `order^(2 dim)`.
    pub fn len(&self) -> usize {
        self.order().pow(2 * self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points whose leading real coordinate uses node `lead`; `f` receives
    /// the noise vector and its weight. Points with weight below
    /// [`NEGLIGIBLE_WEIGHT`] are skipped.
    pub fn for_each_with_lead<F: FnMut(&[C64], f64)>(&self, lead: usize, mut f: F) {
        let k = self.order();
        let reals = 2 * self.dim;
        if reals == 0 {
            f(&[], 1.0);
            return;
        }
        let mut digits = vec![0usize; reals];
        digits[0] = lead;
        let mut noise = vec![C64::new(0.0, 0.0); self.dim];
        let nodes = self.rule.nodes();
        let rest = k.pow(reals as u32 - 1);
        for _ in 0..rest {
            let mut w = 1.0;
            for (r, &d) in digits.iter().enumerate() {
                w *= self.scaled[d];
                let c = &mut noise[r / 2];
                if r % 2 == 0 {
                    c.re = nodes[d];
                } else {
                    c.im = nodes[d];
                }
            }
            if w >= NEGLIGIBLE_WEIGHT {
                f(&noise, w);
            }
            // odometer over digits[1..]
            for d in digits[1..].iter_mut().rev() {
                *d += 1;
                if *d < k {
                    break;
                }
                *d = 0;
            }
        }
    }
}
