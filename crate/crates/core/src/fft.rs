//! Multidimensional DFT over `(Z / p^s)^N`, one axis at a time.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

/// Length-`side` DFT `X[n] = sum_m x[m] exp(sign * 2 pi i m n / side)`.
pub struct AxisPlan {
    fft: Arc<dyn Fft<f64>>,
    side: usize,
}

impl AxisPlan {
    pub fn new(side: usize, sign: f64) -> Self {
        let direction = if sign > 0.0 { FftDirection::Inverse } else { FftDirection::Forward };
        AxisPlan { fft: FftPlanner::new().plan_fft(side, direction), side }
    }

    pub fn len(&self) -> usize {
        self.side
    }

    pub fn is_empty(&self) -> bool {
        self.side == 0
    }

    /// Transforms every consecutive run of `len` values in place.
    pub fn process(&self, data: &mut [Complex64]) {
        if self.side > 1 {
            self.fft.process(data);
        }
    }
}

/// Applies the plan along every axis of a row-major `side^dim` array.
pub fn transform_axes(data: &mut [Complex64], dim: usize, plan: &AxisPlan) {
    let side = plan.len();
    if side <= 1 {
        return;
    }
    let mut block = Vec::new();
    for axis in 0..dim {
        let stride = side.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            plan.process(data);
            continue;
        }
        let span = side * stride;
        block.resize(span, Complex64::new(0.0, 0.0));
        for chunk in data.chunks_exact_mut(span) {
            // lines along `axis` become contiguous rows of `block`
            for i in 0..side {
                for inner in 0..stride {
                    block[inner * side + i] = chunk[i * stride + inner];
                }
            }
            plan.process(&mut block);
            for i in 0..side {
                for inner in 0..stride {
                    chunk[i * stride + inner] = block[inner * side + i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive(x: &[Complex64], sign: f64) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(m, v)| {
                        let a = sign * 2.0 * PI * ((m * k) % n) as f64 / n as f64;
                        v * Complex64::new(a.cos(), a.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        for &(p, s) in &[(2usize, 5u32), (3, 4), (5, 2), (7, 2), (3, 1), (2, 0)] {
            let n = p.pow(s);
            let x: Vec<Complex64> = (0..n)
                .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
                .collect();
            for sign in [1.0, -1.0] {
                let plan = AxisPlan::new(n, sign);
                let mut y = x.clone();
                plan.process(&mut y);
                let z = naive(&x, sign);
                let err = y.iter().zip(&z).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                assert!(err < 1e-10, "p={p} s={s} err={err}");
            }
        }
    }

    #[test]
    fn axes_match_naive_2d() {
        let side = 9;
        let x: Vec<Complex64> = (0..side * side).map(|i| Complex64::new((i as f64 * 0.7).cos(), (i as f64 * 0.2).sin())).collect();
        let mut y = x.clone();
        transform_axes(&mut y, 2, &AxisPlan::new(side, 1.0));
        for (k, got) in y.iter().enumerate() {
            let (k0, k1) = (k / side, k % side);
            let want: Complex64 = x
                .iter()
                .enumerate()
                .map(|(m, v)| {
                    let a = 2.0 * PI * (((m / side) * k0 + (m % side) * k1) % side) as f64 / side as f64;
                    v * Complex64::new(a.cos(), a.sin())
                })
                .sum();
            assert!((got - want).norm() < 1e-10);
        }
    }
}
