//! Nadaraya-Watson kernel regression, the alternative first stage.
//!
//! Product kernels only: the d-variate kernel is the product of d copies of
//! a univariate second-order kernel. Higher-order kernels are out of scope;
//! this module is a baseline/oracle next to the spline sieve.

use crate::error::{fmt_point, Error, Result};
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
    Epanechnikov,
}

impl KernelFamily {
    fn univariate(self, u: f64) -> f64 {
        match self {
            KernelFamily::Gaussian => {
                (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
            }
            KernelFamily::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }
}

/// A product-kernel specification with a fixed bandwidth.
#[derive(Debug, Clone, Copy)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
    pub dimension: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64, dimension: usize) -> Result<Self> {
        if bandwidth <= 0.0 || !bandwidth.is_finite() {
            return Err(Error::invalid(format!(
                "bandwidth must be a positive finite number, got {bandwidth}"
            )));
        }
        if dimension == 0 {
            return Err(Error::invalid("kernel dimension must be at least 1"));
        }
        Ok(Self {
            family,
            bandwidth,
            dimension,
        })
    }

    fn product(&self, xi: &[f64], x: &[f64]) -> f64 {
        xi.iter()
            .zip(x)
            .map(|(&a, &b)| self.family.univariate((a - b) / self.bandwidth))
            .product()
    }
}

/// Rate-optimal bandwidth exponent for estimating an integral over an
/// m-dimensional submanifold with a kernel of smoothness order s in
/// dimension d: b = n^(-1/(2s+d-m)).
pub fn rate_optimal_bandwidth(n: usize, s: usize, d: usize, m: usize) -> Result<f64> {
    if n == 0 || s == 0 || d == 0 || m > d {
        return Err(Error::invalid(
            "bandwidth rate needs n >= 1, s >= 1, d >= 1 and m <= d",
        ));
    }
    Ok((n as f64).powf(-1.0 / (2 * s + d - m) as f64))
}

/// The Nadaraya-Watson estimate at `x`: the ratio of the kernel-weighted
/// response sum to the kernel weight sum, both carrying the 1/(n b^d)
/// normalization (which cancels in the ratio and is kept for documentation
/// fidelity).
pub fn nw_estimate(sample: &Sample, spec: &KernelSpec, x: &[f64]) -> Result<f64> {
    if spec.dimension != sample.dim() || x.len() != sample.dim() {
        return Err(Error::invalid(format!(
            "kernel dimension {}, sample dimension {} and point dimension {} must all agree",
            spec.dimension,
            sample.dim(),
            x.len()
        )));
    }
    let n = sample.n() as f64;
    let scale = 1.0 / (n * spec.bandwidth.powi(spec.dimension as i32));
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..sample.n() {
        let w = spec.product(&sample.row(i), x) * scale;
        num += w * sample.y()[i];
        den += w;
    }
    if den <= 0.0 || !den.is_finite() {
        return Err(Error::EmptyNeighborhood {
            point: fmt_point(x),
        });
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BoxDomain;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn box2() -> BoxDomain {
        BoxDomain::cube(-2.0, 2.0, 2).unwrap()
    }

    fn random_sample(n: usize, seed: u64, f: impl Fn(&[f64]) -> f64, noise: f64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let x1: f64 = rng.gen_range(-2.0..2.0);
            let x2: f64 = rng.gen_range(-2.0..2.0);
            xs.extend_from_slice(&[x1, x2]);
            let eps: f64 = rng.sample(StandardNormal);
            ys.push(f(&[x1, x2]) + noise * eps);
        }
        Sample::new(
            DMatrix::from_row_slice(n, 2, &xs),
            DVector::from_vec(ys),
            box2(),
        )
        .unwrap()
    }

    #[test]
    fn constant_response_is_returned_exactly() {
        let sample = random_sample(200, 3, |_| 7.5, 0.0);
        for family in [KernelFamily::Gaussian, KernelFamily::Epanechnikov] {
            let spec = KernelSpec::new(family, 0.8, 2).unwrap();
            let est = nw_estimate(&sample, &spec, &[0.2, -0.4]).unwrap();
            assert_abs_diff_eq!(est, 7.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_observation_at_its_own_location() {
        let sample = Sample::new(
            DMatrix::from_row_slice(1, 2, &[0.5, -0.25]),
            DVector::from_vec(vec![3.25]),
            box2(),
        )
        .unwrap();
        let spec = KernelSpec::new(KernelFamily::Gaussian, 0.3, 2).unwrap();
        assert_abs_diff_eq!(
            nw_estimate(&sample, &spec, &[0.5, -0.25]).unwrap(),
            3.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn estimate_is_a_convex_combination_of_responses() {
        let sample = random_sample(150, 5, |x| x[0] * x[1], 1.0);
        let ymin = sample.y().min();
        let ymax = sample.y().max();
        let spec = KernelSpec::new(KernelFamily::Gaussian, 0.5, 2).unwrap();
        for k in 0..40 {
            let x = [-1.9 + 3.8 * (k as f64 / 39.0), 1.9 - 3.8 * (k as f64 / 39.0)];
            let est = nw_estimate(&sample, &spec, &x).unwrap();
            assert!(est >= ymin - 1e-12 && est <= ymax + 1e-12);
        }
    }

    #[test]
    fn shrinking_bandwidth_interpolates() {
        let sample = random_sample(50, 9, |x| x[0] + x[1], 1.0);
        let spec = KernelSpec::new(KernelFamily::Gaussian, 1e-3, 2).unwrap();
        for i in [0usize, 17, 49] {
            let x = sample.row(i);
            let est = nw_estimate(&sample, &spec, &x).unwrap();
            assert_abs_diff_eq!(est, sample.y()[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn scaling_factor_does_not_change_the_ratio() {
        // oracle: plain weighted average without the 1/(n b^d) factor
        let sample = random_sample(80, 21, |x| x[0].sin(), 0.5);
        let spec = KernelSpec::new(KernelFamily::Gaussian, 0.4, 2).unwrap();
        let x = [0.3, -0.9];
        let est = nw_estimate(&sample, &spec, &x).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..sample.n() {
            let w = spec.product(&sample.row(i), &x);
            num += w * sample.y()[i];
            den += w;
        }
        assert_abs_diff_eq!(est, num / den, epsilon = 1e-12);
    }

    #[test]
    fn empty_neighborhood_is_an_error_naming_the_point() {
        let sample = Sample::new(
            DMatrix::from_row_slice(1, 2, &[-2.0, -2.0]),
            DVector::from_vec(vec![1.0]),
            box2(),
        )
        .unwrap();
        let spec = KernelSpec::new(KernelFamily::Epanechnikov, 0.1, 2).unwrap();
        let err = nw_estimate(&sample, &spec, &[2.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("(2, 2)"), "{err}");
    }

    #[test]
    fn bandwidth_rate_matches_theory() {
        // d = 2, m = 1, s = 2 gives the n^(-1/5) rate
        let b = rate_optimal_bandwidth(8000, 2, 2, 1).unwrap();
        assert_abs_diff_eq!(b, (8000.0f64).powf(-0.2), epsilon = 1e-15);
        assert!(rate_optimal_bandwidth(0, 2, 2, 1).is_err());
    }

    /// Golden regression bound: first simulation design at n = 8000 with the
    /// rate-optimal Gaussian bandwidth; MSE on a 30x30 interior grid.
    #[test]
    fn sim1_mse_golden() {
        let h0 = |x: &[f64]| x[0] * x[0] + 2.0 * x[0].sin() * x[1];
        let sample = random_sample(8000, 42, h0, 1.0);
        let b = rate_optimal_bandwidth(8000, 2, 2, 1).unwrap();
        let spec = KernelSpec::new(KernelFamily::Gaussian, b, 2).unwrap();
        let mut mse = 0.0;
        for i in 0..30 {
            for j in 0..30 {
                let x = [
                    -1.6 + 3.2 * i as f64 / 29.0,
                    -1.6 + 3.2 * j as f64 / 29.0,
                ];
                let e = nw_estimate(&sample, &spec, &x).unwrap() - h0(&x);
                mse += e * e;
            }
        }
        mse /= 900.0;
        // frozen from the first run of this seed (0.00843)
        assert!(mse < 0.011, "interior grid MSE {mse}");
    }
}
