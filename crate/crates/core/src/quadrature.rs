//! Numerical evaluation of Hausdorff-measure integrals over submanifolds.
//!
//! Two routes, both on deterministic Sobol nodes (skip = 0, fresh per call):
//!
//! * single-chart parametrization — pull the integral back through a chart
//!   map φ with Jacobian weight Jφ = sqrt(det(Dφ'Dφ)) and average over the
//!   parameter box;
//! * ε-band co-area approximation — (1/2ε) times the Lebesgue integral over
//!   the band {−ε < h < ε}, which converges to the level-set integral of the
//!   integrand divided by ‖∇h‖ as ε → 0. The ‖∇h‖ factor is supplied by the
//!   band construction itself; no gradient is ever formed.
//!
//! Node sums are accumulated sequentially in node order, so results are
//! identical no matter how callers parallelize around these functions.

use crate::domain::BoxDomain;
use crate::error::{fmt_point, Error, Result};
use crate::sobol::{scale_to_box, sobol_points};

/// Default node count for chart quadrature.
pub const CHART_POINTS: usize = 5000;
/// Default node count for band quadrature.
pub const BAND_POINTS: usize = 100_000;
/// Default band half-width.
pub const BAND_EPSILON: f64 = 0.001;

type ChartMap = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type ScalarMap = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// An m-dimensional submanifold of R^d given by one parametrization over a
/// box, with its Jacobian weight.
pub struct ChartManifold {
    intrinsic_dim: usize,
    ambient_dim: usize,
    parameter_box: BoxDomain,
    chart_map: Box<ChartMap>,
    jacobian: Box<ScalarMap>,
}

impl ChartManifold {
    pub fn new(
        intrinsic_dim: usize,
        ambient_dim: usize,
        parameter_box: BoxDomain,
        chart_map: Box<ChartMap>,
        jacobian: Box<ScalarMap>,
    ) -> Result<Self> {
        if intrinsic_dim == 0 || intrinsic_dim > ambient_dim {
            return Err(Error::invalid(format!(
                "chart needs 1 <= intrinsic dim <= ambient dim, got {intrinsic_dim} and {ambient_dim}"
            )));
        }
        if parameter_box.dim() != intrinsic_dim {
            return Err(Error::invalid(format!(
                "parameter box dimension {} does not match intrinsic dimension {intrinsic_dim}",
                parameter_box.dim()
            )));
        }
        Ok(Self {
            intrinsic_dim,
            ambient_dim,
            parameter_box,
            chart_map,
            jacobian,
        })
    }

    /// The unit circle in R^2, parametrized by angle: φ(β) = (cos β, sin β)
    /// on [0, 2π), with Jφ ≡ 1.
    pub fn unit_circle() -> Self {
        Self {
            intrinsic_dim: 1,
            ambient_dim: 2,
            parameter_box: BoxDomain::new(vec![0.0], vec![2.0 * std::f64::consts::PI]).unwrap(),
            chart_map: Box::new(|u| vec![u[0].cos(), u[0].sin()]),
            jacobian: Box::new(|_| 1.0),
        }
    }

    /// The full box as a trivial chart with m = d and Jφ ≡ 1, so the
    /// Hausdorff integral coincides with the Lebesgue integral over the box.
    pub fn lebesgue_box(domain: &BoxDomain) -> Self {
        Self {
            intrinsic_dim: domain.dim(),
            ambient_dim: domain.dim(),
            parameter_box: domain.clone(),
            chart_map: Box::new(|u| u.to_vec()),
            jacobian: Box::new(|_| 1.0),
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn parameter_box(&self) -> &BoxDomain {
        &self.parameter_box
    }

    pub fn map(&self, u: &[f64]) -> Vec<f64> {
        (self.chart_map)(u)
    }

    pub fn jacobian(&self, u: &[f64]) -> f64 {
        (self.jacobian)(u)
    }

    /// Quadrature nodes for this chart: Sobol points scaled to the parameter
    /// box, with their ambient images and combined weights vol/N · Jφ.
    pub(crate) fn nodes(&self, num_points: usize) -> Result<Vec<(Vec<f64>, f64)>> {
        let raw = sobol_points(self.intrinsic_dim, num_points, 0)?;
        let params = scale_to_box(&raw, &self.parameter_box)?;
        let scale = self.parameter_box.volume() / num_points as f64;
        Ok(params
            .into_iter()
            .map(|u| {
                let w = scale * self.jacobian(&u);
                (self.map(&u), w)
            })
            .collect())
    }
}

impl std::fmt::Debug for ChartManifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChartManifold")
            .field("intrinsic_dim", &self.intrinsic_dim)
            .field("ambient_dim", &self.ambient_dim)
            .field("parameter_box", &self.parameter_box)
            .finish()
    }
}

/// ∫_M f dH^m by single-chart pullback: vol(U)/N · Σ_j f(φ(u_j)) Jφ(u_j)
/// over Sobol nodes u_j in the parameter box.
pub fn hausdorff_integral_chart<F: Fn(&[f64]) -> f64>(
    manifold: &ChartManifold,
    integrand: F,
    num_points: usize,
) -> Result<f64> {
    let mut acc = 0.0;
    for (x, w) in manifold.nodes(num_points)? {
        let v = integrand(&x);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: format!("chart integrand at node {}", fmt_point(&x)),
            });
        }
        acc += v * w;
    }
    Ok(acc)
}

/// Numeric configuration of an ε-band approximation (level function supplied
/// separately at evaluation time).
#[derive(Debug, Clone)]
pub struct BandSpec {
    pub epsilon: f64,
    pub integration_box: BoxDomain,
    pub num_points: usize,
}

impl BandSpec {
    pub fn new(epsilon: f64, integration_box: BoxDomain, num_points: usize) -> Result<Self> {
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(Error::invalid(format!(
                "band half-width must be positive and finite, got {epsilon}"
            )));
        }
        if num_points == 0 {
            return Err(Error::invalid("band quadrature needs at least one node"));
        }
        Ok(Self {
            epsilon,
            integration_box,
            num_points,
        })
    }
}

/// Result of a band integral; a band that captured no quadrature nodes
/// yields value 0 with the `empty` flag set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandValue {
    pub value: f64,
    pub band_count: usize,
}

impl BandValue {
    pub fn is_empty(&self) -> bool {
        self.band_count == 0
    }
}

/// (1/2ε) · vol(box)/N · Σ_j integrand(x_j) · 1{−ε < level(x_j) < ε} over
/// Sobol nodes in the box. Approximates the level-set integral of
/// integrand/‖∇level‖ (the gradient norm is implicit in the band limit).
/// Band membership uses strict inequalities; ties |level| = ε are excluded.
pub fn band_integral<L, F>(spec: &BandSpec, level: L, integrand: F) -> Result<BandValue>
where
    L: Fn(&[f64]) -> f64,
    F: Fn(&[f64]) -> f64,
{
    let d = spec.integration_box.dim();
    let raw = sobol_points(d, spec.num_points, 0)?;
    let nodes = scale_to_box(&raw, &spec.integration_box)?;
    let mut acc = 0.0;
    let mut band_count = 0usize;
    for x in &nodes {
        let h = level(x);
        if h > -spec.epsilon && h < spec.epsilon {
            let v = integrand(x);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("band integrand at node {}", fmt_point(x)),
                });
            }
            acc += v;
            band_count += 1;
        }
    }
    let value = acc / spec.num_points as f64 * spec.integration_box.volume()
        / (2.0 * spec.epsilon);
    Ok(BandValue { value, band_count })
}

/// QMC Lebesgue integral of `weight` over the upper contour set {h ≥ 0}:
/// vol(box) · mean_j weight(x_j) · 1{h(x_j) ≥ 0}.
pub fn indicator_integral<H, W>(
    h: H,
    weight: W,
    domain: &BoxDomain,
    num_points: usize,
) -> Result<f64>
where
    H: Fn(&[f64]) -> f64,
    W: Fn(&[f64]) -> f64,
{
    let raw = sobol_points(domain.dim(), num_points, 0)?;
    let nodes = scale_to_box(&raw, domain)?;
    let mut acc = 0.0;
    for x in &nodes {
        if h(x) >= 0.0 {
            let v = weight(x);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("indicator weight at node {}", fmt_point(x)),
                });
            }
            acc += v;
        }
    }
    Ok(acc / num_points as f64 * domain.volume())
}
