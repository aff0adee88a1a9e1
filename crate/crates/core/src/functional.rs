//! The three functional families and their pathwise derivatives.
//!
//! * linear submanifold integrals Γ(h) = ∫_M h·w dH^m — the derivative is Γ
//!   itself by linearity;
//! * nonlinear transforms Γ(h) = ∫_M φ(h(x), x)·w dH^m — the derivative
//!   integrates v·φ₁(h, x)·w over the manifold;
//! * upper-contour integrals Γ(h) = ∫_{h ≥ 0} w dx — the derivative
//!   concentrates on the zero level set with a 1/‖∇h‖ density, computed
//!   exclusively through the ε-band (the gradient of a fitted first stage is
//!   never evaluated here).

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::quadrature::{
    band_integral, hausdorff_integral_chart, indicator_integral, BandSpec, ChartManifold,
    BAND_EPSILON, BAND_POINTS, CHART_POINTS,
};
use crate::sobol::{scale_to_box, sobol_points};
use crate::spline::TensorSplineBasis;
use nalgebra::DVector;

/// Default node count for evaluating upper-contour (indicator) integrals.
/// Power-of-two Sobol prefixes are balanced digital nets; small non-dyadic
/// counts leave a visible imbalance on sets with curved boundaries.
pub const UPPER_CONTOUR_EVAL_POINTS: usize = 1 << 18;

pub type PointFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type TransformFn = Box<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// A target functional Γ plus the numeric settings used to evaluate it.
pub enum FunctionalSpec {
    /// Γ(h) = ∫_M h(x) w(x) dH^m(x) over a known chart.
    LinearOnChart {
        manifold: ChartManifold,
        weight: PointFn,
        num_points: usize,
    },
    /// Γ(h) = ∫_M φ(h(x), x) w(x) dH^m(x) with known transform φ and its
    /// t-derivative φ₁.
    TransformOnChart {
        manifold: ChartManifold,
        transform: TransformFn,
        transform_dt: TransformFn,
        weight: PointFn,
        num_points: usize,
    },
    /// Γ(h) = ∫_{h(x) ≥ 0} w(x) dx over a box.
    UpperContour {
        weight: PointFn,
        domain: BoxDomain,
        epsilon: f64,
        band_points: usize,
        eval_points: usize,
    },
}

/// A directional-derivative value; `band_empty` is set when an ε-band
/// captured no quadrature nodes (the value is then 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub value: f64,
    pub band_empty: bool,
}

impl FunctionalSpec {
    pub fn linear_on_chart(manifold: ChartManifold, weight: PointFn) -> Self {
        FunctionalSpec::LinearOnChart {
            manifold,
            weight,
            num_points: CHART_POINTS,
        }
    }

    pub fn transform_on_chart(
        manifold: ChartManifold,
        transform: TransformFn,
        transform_dt: TransformFn,
        weight: PointFn,
    ) -> Self {
        FunctionalSpec::TransformOnChart {
            manifold,
            transform,
            transform_dt,
            weight,
            num_points: CHART_POINTS,
        }
    }

    pub fn upper_contour(weight: PointFn, domain: BoxDomain) -> Self {
        FunctionalSpec::UpperContour {
            weight,
            domain,
            epsilon: BAND_EPSILON,
            band_points: BAND_POINTS,
            eval_points: UPPER_CONTOUR_EVAL_POINTS,
        }
    }

    /// Overrides the evaluation node count (chart nodes for the chart
    /// variants, indicator nodes for the upper-contour variant).
    pub fn with_eval_points(mut self, n: usize) -> Self {
        match &mut self {
            FunctionalSpec::LinearOnChart { num_points, .. }
            | FunctionalSpec::TransformOnChart { num_points, .. } => *num_points = n,
            FunctionalSpec::UpperContour { eval_points, .. } => *eval_points = n,
        }
        self
    }

    /// Overrides the band node count (upper-contour variant only).
    pub fn with_band_points(mut self, n: usize) -> Self {
        if let FunctionalSpec::UpperContour { band_points, .. } = &mut self {
            *band_points = n;
        }
        self
    }

    /// Overrides the band half-width (upper-contour variant only).
    pub fn with_epsilon(mut self, eps: f64) -> Self {
        if let FunctionalSpec::UpperContour { epsilon, .. } = &mut self {
            *epsilon = eps;
        }
        self
    }

    /// Γ(h).
    pub fn evaluate<H: Fn(&[f64]) -> f64>(&self, h: H) -> Result<f64> {
        match self {
            FunctionalSpec::LinearOnChart {
                manifold,
                weight,
                num_points,
            } => hausdorff_integral_chart(manifold, |x| h(x) * weight(x), *num_points),
            FunctionalSpec::TransformOnChart {
                manifold,
                transform,
                weight,
                num_points,
                ..
            } => hausdorff_integral_chart(manifold, |x| transform(h(x), x) * weight(x), *num_points),
            FunctionalSpec::UpperContour {
                weight,
                domain,
                eval_points,
                ..
            } => indicator_integral(&h, |x| weight(x), domain, *eval_points),
        }
    }

    /// Pathwise derivative D Γ(h)[v].
    pub fn directional_derivative<H, V>(&self, h: H, v: V) -> Result<Derivative>
    where
        H: Fn(&[f64]) -> f64,
        V: Fn(&[f64]) -> f64,
    {
        match self {
            FunctionalSpec::LinearOnChart {
                manifold,
                weight,
                num_points,
            } => {
                let value =
                    hausdorff_integral_chart(manifold, |x| v(x) * weight(x), *num_points)?;
                Ok(Derivative {
                    value,
                    band_empty: false,
                })
            }
            FunctionalSpec::TransformOnChart {
                manifold,
                transform_dt,
                weight,
                num_points,
                ..
            } => {
                let value = hausdorff_integral_chart(
                    manifold,
                    |x| v(x) * (transform_dt(h(x), x) * weight(x)),
                    *num_points,
                )?;
                Ok(Derivative {
                    value,
                    band_empty: false,
                })
            }
            FunctionalSpec::UpperContour {
                weight,
                domain,
                epsilon,
                band_points,
                ..
            } => {
                let spec = BandSpec::new(*epsilon, domain.clone(), *band_points)?;
                let out = band_integral(&spec, &h, |x| v(x) * weight(x))?;
                Ok(Derivative {
                    value: out.value,
                    band_empty: out.is_empty(),
                })
            }
        }
    }

    /// Verifies that `transform_dt` is the t-derivative of `transform` by
    /// central differences at `checks` deterministic (t, x) pairs drawn from
    /// t_range × the chart image. No-op for the other variants.
    pub fn validate_transform_derivative(&self, t_range: (f64, f64), checks: usize) -> Result<()> {
        let FunctionalSpec::TransformOnChart {
            manifold,
            transform,
            transform_dt,
            ..
        } = self
        else {
            return Ok(());
        };
        let m = manifold.intrinsic_dim();
        let pts = sobol_points(m + 1, checks, 0)?;
        let step = 1e-5 * (t_range.1 - t_range.0).abs().max(1.0);
        for p in pts {
            let t = t_range.0 + p[0] * (t_range.1 - t_range.0);
            let u = scale_to_box(&[p[1..].to_vec()], manifold.parameter_box())?;
            let x = manifold.map(&u[0]);
            let fd = (transform(t + step, &x) - transform(t - step, &x)) / (2.0 * step);
            let dt = transform_dt(t, &x);
            if (fd - dt).abs() > 1e-4 {
                return Err(Error::invalid(format!(
                    "transform_dt disagrees with the transform's finite difference at t = {t}: {dt} vs {fd}"
                )));
            }
        }
        Ok(())
    }

    /// Vector of derivatives in each tensor-basis direction,
    /// (D Γ(h)[ψ_1], …, D Γ(h)[ψ_K]), accumulated over one shared quadrature
    /// node set (every basis function is evaluated per node). The fallible
    /// `h` lets fitted first stages surface domain errors with node context.
    pub(crate) fn basis_derivatives<H>(
        &self,
        h: H,
        basis: &TensorSplineBasis,
    ) -> Result<(DVector<f64>, bool)>
    where
        H: Fn(&[f64]) -> Result<f64>,
    {
        let k = basis.total_count();
        let mut r = DVector::zeros(k);
        match self {
            FunctionalSpec::LinearOnChart {
                manifold,
                weight,
                num_points,
            } => {
                for (x, base_w) in manifold.nodes(*num_points)? {
                    let c = base_w * weight(&x);
                    let windows = basis.windows(&x)?;
                    basis.for_each_entry(&windows, |flat, value| r[flat] += c * value);
                }
                Ok((r, false))
            }
            FunctionalSpec::TransformOnChart {
                manifold,
                transform_dt,
                weight,
                num_points,
                ..
            } => {
                for (x, base_w) in manifold.nodes(*num_points)? {
                    let hx = h(&x)?;
                    let c = base_w * (transform_dt(hx, &x) * weight(&x));
                    let windows = basis.windows(&x)?;
                    basis.for_each_entry(&windows, |flat, value| r[flat] += c * value);
                }
                Ok((r, false))
            }
            FunctionalSpec::UpperContour {
                weight,
                domain,
                epsilon,
                band_points,
                ..
            } => {
                let raw = sobol_points(domain.dim(), *band_points, 0)?;
                let nodes = scale_to_box(&raw, domain)?;
                let scale = domain.volume() / *band_points as f64 / (2.0 * epsilon);
                let mut band_count = 0usize;
                for x in &nodes {
                    let hx = h(x)?;
                    if hx > -*epsilon && hx < *epsilon {
                        band_count += 1;
                        let c = scale * weight(x);
                        let windows = basis.windows(x)?;
                        basis.for_each_entry(&windows, |flat, value| r[flat] += c * value);
                    }
                }
                Ok((r, band_count == 0))
            }
        }
    }
}

impl std::fmt::Debug for FunctionalSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FunctionalSpec::LinearOnChart {
                manifold,
                num_points,
                ..
            } => f
                .debug_struct("LinearOnChart")
                .field("manifold", manifold)
                .field("num_points", num_points)
                .finish(),
            FunctionalSpec::TransformOnChart {
                manifold,
                num_points,
                ..
            } => f
                .debug_struct("TransformOnChart")
                .field("manifold", manifold)
                .field("num_points", num_points)
                .finish(),
            FunctionalSpec::UpperContour {
                domain,
                epsilon,
                band_points,
                eval_points,
                ..
            } => f
                .debug_struct("UpperContour")
                .field("domain", domain)
                .field("epsilon", epsilon)
                .field("band_points", band_points)
                .field("eval_points", eval_points)
                .finish(),
        }
    }
}

/// w ≡ 1.
pub fn unit_weight() -> PointFn {
    Box::new(|_| 1.0)
}
