//! One-dimensional quadrature weights and compensated summation.

use crate::C64;

/// Weights of the end-corrected trapezoid rule on `n` uniformly spaced nodes
/// spanning `[a, b]`.
///
/// For `n ≥ 6` the interior weights are exactly the trapezoid weights `h`;
/// the three nodes at each end carry the Gregory corrections
/// `(3/8, 7/6, 23/24)·h`, which makes the rule exact for cubics and fourth
/// order accurate. Fewer nodes fall back to the closed Newton–Cotes rule of
/// matching size.
pub fn corrected_trapezoid(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "quadrature needs at least two nodes");
    let h = (b - a) / (n - 1) as f64;
    let unit: Vec<f64> = match n {
        2 => vec![0.5, 0.5],
        3 => vec![1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0],
        4 => vec![3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0],
        5 => vec![1.0 / 3.0, 4.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0],
        _ => {
            let mut w = vec![1.0; n];
            for (k, c) in [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0].into_iter().enumerate() {
                w[k] = c;
                w[n - 1 - k] = c;
            }
            w
        }
    };
    unit.into_iter().map(|u| u * h).collect()
}

/// Uniform nodes `a + k·h`, `k = 0..n`, with the last node pinned to `b`.
pub fn uniform_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|k| if k + 1 == n { b } else { a + k as f64 * h }).collect()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }

    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.compensation);
    }
}

/// Compensated accumulator for the upper triangle of a 4×4 Hermitian matrix.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct HermitianAccumulator {
    re: [CompensatedSum; 10],
    im: [CompensatedSum; 10],
}

pub(crate) const UPPER: [(usize, usize); 10] =
    [(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3)];

impl HermitianAccumulator {
    /// Add the upper triangle of an (unnormalized) Hermitian matrix.
    pub fn add_upper(&mut self, upper: &[C64; 10]) {
        for k in 0..10 {
            self.re[k].add(upper[k].re);
            self.im[k].add(upper[k].im);
        }
    }

    pub fn upper(&self) -> [C64; 10] {
        std::array::from_fn(|k| C64::new(self.re[k].value(), self.im[k].value()))
    }
}

/// Expand an upper triangle into a full Hermitian matrix.
pub(crate) fn hermitian_from_upper(upper: &[C64; 10]) -> nalgebra::Matrix4<C64> {
    let mut m = nalgebra::Matrix4::zeros();
    for (k, &(i, j)) in UPPER.iter().enumerate() {
        m[(i, j)] = upper[k];
        if i != j {
            m[(j, i)] = upper[k].conj();
        } else {
            m[(i, i)] = C64::new(upper[k].re, 0.0);
        }
    }
    m
}

/// Upper triangle of `w·|a⟩⟨a|`.
#[inline]
pub(crate) fn weighted_outer_upper(a: &[C64; 4], w: f64) -> [C64; 10] {
    std::array::from_fn(|k| {
        let (i, j) = UPPER[k];
        a[i] * a[j].conj() * w
    })
}

/// SplitMix64 finalizer, used to derive independent seeds from a base seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrected_trapezoid_is_exact_for_cubics() {
        for n in [2usize, 3, 4, 5, 6, 7, 11, 40] {
            let xs = uniform_nodes(0.3, 2.1, n);
            let ws = corrected_trapezoid(0.3, 2.1, n);
            let total: f64 = ws.iter().sum();
            assert!((total - 1.8).abs() < 1e-13, "n = {n}");
            if n >= 4 {
                let integral: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x * x * x).sum();
                let exact = (2.1f64.powi(4) - 0.3f64.powi(4)) / 4.0;
                assert!((integral - exact).abs() < 1e-12, "n = {n}: {integral} vs {exact}");
            }
        }
    }

    #[test]
    fn hemisphere_solid_angle_converges_fast() {
        let n = 181;
        let th = uniform_nodes(0.0, std::f64::consts::FRAC_PI_2, n);
        let w = corrected_trapezoid(0.0, std::f64::consts::FRAC_PI_2, n);
        let s: f64 = th.iter().zip(&w).map(|(t, w)| w * t.sin()).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        for _ in 0..1000 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-13).abs() < 1e-20);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
