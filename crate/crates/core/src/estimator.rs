//! Plug-in estimation θ̂ = Γ(ĥ) with sieve-Riesz standard errors.
//!
//! The variance route follows the simulation-section recipe: the derivative
//! of Γ at ĥ in each basis direction (one shared node set for all K
//! entries), sandwiched with the heteroskedasticity-robust covariance of the
//! sieve coefficients, σ̂²_θ = r' Ω̂ r with Ω̂ = (Ψ'Ψ)⁻ (Σ_i u_i² ψ_i ψ_i') (Ψ'Ψ)⁻.

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::functional::FunctionalSpec;
use crate::linalg::{gauss_legendre_cells, lsq_slope, sym_pseudo_inverse};
use crate::spline::{bspline_basis_1d, FittedSieve, TensorSplineBasis};
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

/// Fit diagnostics carried on every estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diagnostics {
    /// An ε-band in the variance computation captured no quadrature nodes.
    pub band_empty: bool,
    /// Numerical rank of the first-stage design.
    pub design_rank: usize,
}

/// Point estimate with standard error and confidence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub theta_hat: f64,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    pub diagnostics: Diagnostics,
}

/// Derivatives of the functional in each basis direction, D Γ(ĥ)[ψ_k].
#[derive(Debug, Clone)]
pub struct RieszVector {
    pub values: DVector<f64>,
    pub band_empty: bool,
}

/// Two-sided normal critical value for a confidence level in (0, 1). The
/// 95% value is pinned to 1.96 exactly.
pub fn z_value(level: f64) -> Result<f64> {
    if level <= 0.0 || level >= 1.0 || level.is_nan() {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    if (level - 0.95).abs() < 1e-12 {
        return Ok(1.96);
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 * (1.0 + level)))
}

/// D Γ(ĥ)[ψ_k] for every tensor-basis function, over one shared quadrature
/// node set (complexity O(nodes · K)).
pub fn riesz_vector(spec: &FunctionalSpec, fit: &FittedSieve) -> Result<RieszVector> {
    let (values, band_empty) =
        spec.basis_derivatives(|x| fit.predict(x), fit.basis())?;
    Ok(RieszVector { values, band_empty })
}

/// Heteroskedasticity-robust sandwich for the sieve coefficient vector:
/// Ω̂ = (Ψ'Ψ)⁻ (Σ_i u_i² ψ_i ψ_i') (Ψ'Ψ)⁻, so that r' Ω̂ r estimates
/// Var(θ̂) directly. Rank deficiency is absorbed by the stored generalized
/// inverse.
pub fn sandwich_covariance(fit: &FittedSieve) -> DMatrix<f64> {
    let k = fit.basis().total_count();
    let mut meat = DMatrix::zeros(k, k);
    for (i, row) in fit.design_rows().iter().enumerate() {
        let u2 = fit.residuals()[i] * fit.residuals()[i];
        for (a, &(ia, va)) in row.iter().enumerate() {
            let lead = u2 * va;
            for &(ib, vb) in &row[a..] {
                meat[(ia as usize, ib as usize)] += lead * vb;
            }
        }
    }
    for a in 0..k {
        for b in (a + 1)..k {
            meat[(b, a)] = meat[(a, b)];
        }
    }
    // gram_inverse is (Ψ'Ψ/n)⁻ = n (Ψ'Ψ)⁻
    let n2 = (fit.n() as f64) * (fit.n() as f64);
    let mut omega = fit.gram_inverse() * meat * fit.gram_inverse();
    omega.scale_mut(1.0 / n2);
    for a in 0..k {
        for b in (a + 1)..k {
            let s = 0.5 * (omega[(a, b)] + omega[(b, a)]);
            omega[(a, b)] = s;
            omega[(b, a)] = s;
        }
    }
    omega
}

/// θ̂ = Γ(ĥ) with standard error sqrt(r' Ω̂ r) and the two-sided normal
/// confidence interval at the given level.
pub fn estimate(spec: &FunctionalSpec, fit: &FittedSieve, level: f64) -> Result<EstimateResult> {
    let z = z_value(level)?;
    let theta_hat = spec.evaluate(|x| fit.predict(x).unwrap_or(f64::NAN))?;
    let riesz = riesz_vector(spec, fit)?;
    let omega = sandwich_covariance(fit);
    let var = (riesz.values.transpose() * &omega * &riesz.values)[(0, 0)];
    let std_error = var.max(0.0).sqrt();
    Ok(EstimateResult {
        theta_hat,
        std_error,
        ci_lower: theta_hat - z * std_error,
        ci_upper: theta_hat + z * std_error,
        level,
        diagnostics: Diagnostics {
            band_empty: riesz.band_empty,
            design_rank: fit.design_rank(),
        },
    })
}

/// Non-fatal sieve-dimension warning: the asymptotic theory wants
/// K log K / n small; callers may surface this when K ln K exceeds n.
pub fn sieve_dimension_warning(k: usize, n: usize) -> bool {
    (k as f64) * (k as f64).ln() > n as f64
}

/// Precomputed quadrature state for estimating the same functional over many
/// fits that share one basis: node coordinates, folded node weights, and the
/// basis windows at every node. Estimates computed through a workspace are
/// bit-identical to [`estimate`]; only repeated basis evaluation is skipped.
pub struct QuadratureWorkspace {
    kind: WorkspaceKind,
}

enum WorkspaceKind {
    Chart {
        nodes: Vec<Vec<f64>>,
        base: Vec<f64>,
        weight: Vec<f64>,
        windows: crate::spline::WindowTable,
    },
    Upper {
        eval_weight: Vec<f64>,
        eval_windows: crate::spline::WindowTable,
        band_weight: Vec<f64>,
        band_windows: crate::spline::WindowTable,
        epsilon: f64,
        band_points: usize,
        volume: f64,
    },
}

impl QuadratureWorkspace {
    pub fn new(spec: &FunctionalSpec, basis: &TensorSplineBasis) -> Result<Self> {
        match spec {
            FunctionalSpec::LinearOnChart {
                manifold,
                weight,
                num_points,
            }
            | FunctionalSpec::TransformOnChart {
                manifold,
                weight,
                num_points,
                ..
            } => {
                let node_weights = manifold.nodes(*num_points)?;
                let mut nodes = Vec::with_capacity(node_weights.len());
                let mut base = Vec::with_capacity(node_weights.len());
                let mut wvals = Vec::with_capacity(node_weights.len());
                for (x, bw) in node_weights {
                    base.push(bw);
                    wvals.push(weight(&x));
                    nodes.push(x);
                }
                let windows = basis.window_table(&nodes)?;
                Ok(Self {
                    kind: WorkspaceKind::Chart {
                        nodes,
                        base,
                        weight: wvals,
                        windows,
                    },
                })
            }
            FunctionalSpec::UpperContour {
                weight,
                domain,
                epsilon,
                band_points,
                eval_points,
            } => {
                let make = |count: usize| -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
                    let raw = crate::sobol::sobol_points(domain.dim(), count, 0)?;
                    let nodes = crate::sobol::scale_to_box(&raw, domain)?;
                    let w = nodes.iter().map(|x| weight(x)).collect();
                    Ok((nodes, w))
                };
                let (eval_nodes, eval_weight) = make(*eval_points)?;
                let (band_nodes, band_weight) = make(*band_points)?;
                Ok(Self {
                    kind: WorkspaceKind::Upper {
                        eval_weight,
                        eval_windows: basis.window_table(&eval_nodes)?,
                        band_weight,
                        band_windows: basis.window_table(&band_nodes)?,
                        epsilon: *epsilon,
                        band_points: *band_points,
                        volume: domain.volume(),
                    },
                })
            }
        }
    }

    fn theta(&self, spec: &FunctionalSpec, fit: &FittedSieve) -> f64 {
        let coef = fit.coefficients();
        match (&self.kind, spec) {
            (
                WorkspaceKind::Chart {
                    base,
                    weight,
                    windows,
                    ..
                },
                FunctionalSpec::LinearOnChart { .. },
            ) => {
                let mut acc = 0.0;
                for j in 0..windows.len() {
                    acc += (windows.dot(j, coef) * weight[j]) * base[j];
                }
                acc
            }
            (
                WorkspaceKind::Chart {
                    nodes,
                    base,
                    weight,
                    windows,
                },
                FunctionalSpec::TransformOnChart { transform, .. },
            ) => {
                let mut acc = 0.0;
                for j in 0..windows.len() {
                    acc += (transform(windows.dot(j, coef), &nodes[j]) * weight[j]) * base[j];
                }
                acc
            }
            (
                WorkspaceKind::Upper {
                    eval_weight,
                    eval_windows,
                    volume,
                    ..
                },
                FunctionalSpec::UpperContour { .. },
            ) => {
                let mut acc = 0.0;
                for (j, &w) in eval_weight.iter().enumerate() {
                    if eval_windows.dot(j, coef) >= 0.0 {
                        acc += w;
                    }
                }
                acc / eval_windows.len() as f64 * volume
            }
            _ => unreachable!("workspace built for a different functional variant"),
        }
    }

    fn riesz(&self, spec: &FunctionalSpec, fit: &FittedSieve) -> RieszVector {
        let coef = fit.coefficients();
        let k = fit.basis().total_count();
        let mut values = DVector::zeros(k);
        match (&self.kind, spec) {
            (
                WorkspaceKind::Chart {
                    base,
                    weight,
                    windows,
                    ..
                },
                FunctionalSpec::LinearOnChart { .. },
            ) => {
                for j in 0..windows.len() {
                    windows.add_scaled(j, base[j] * weight[j], &mut values);
                }
                RieszVector {
                    values,
                    band_empty: false,
                }
            }
            (
                WorkspaceKind::Chart {
                    nodes,
                    base,
                    weight,
                    windows,
                },
                FunctionalSpec::TransformOnChart { transform_dt, .. },
            ) => {
                for j in 0..windows.len() {
                    let hx = windows.dot(j, coef);
                    windows.add_scaled(
                        j,
                        base[j] * (transform_dt(hx, &nodes[j]) * weight[j]),
                        &mut values,
                    );
                }
                RieszVector {
                    values,
                    band_empty: false,
                }
            }
            (
                WorkspaceKind::Upper {
                    band_weight,
                    band_windows,
                    epsilon,
                    band_points,
                    volume,
                    ..
                },
                FunctionalSpec::UpperContour { .. },
            ) => {
                let scale = volume / *band_points as f64 / (2.0 * epsilon);
                let mut in_band = 0usize;
                for (j, &w) in band_weight.iter().enumerate() {
                    let hx = band_windows.dot(j, coef);
                    if hx > -*epsilon && hx < *epsilon {
                        in_band += 1;
                        band_windows.add_scaled(j, scale * w, &mut values);
                    }
                }
                RieszVector {
                    values,
                    band_empty: in_band == 0,
                }
            }
            _ => unreachable!("workspace built for a different functional variant"),
        }
    }
}

/// [`estimate`] through a prebuilt workspace; bit-identical results, without
/// re-evaluating basis windows at the quadrature nodes.
pub fn estimate_with_workspace(
    spec: &FunctionalSpec,
    fit: &FittedSieve,
    level: f64,
    workspace: &QuadratureWorkspace,
) -> Result<EstimateResult> {
    let z = z_value(level)?;
    let theta_hat = workspace.theta(spec, fit);
    let riesz = workspace.riesz(spec, fit);
    let omega = sandwich_covariance(fit);
    let var = (riesz.values.transpose() * &omega * &riesz.values)[(0, 0)];
    let std_error = var.max(0.0).sqrt();
    Ok(EstimateResult {
        theta_hat,
        std_error,
        ci_lower: theta_hat - z * std_error,
        ci_upper: theta_hat + z * std_error,
        level,
        diagnostics: Diagnostics {
            band_empty: riesz.band_empty,
            design_rank: fit.design_rank(),
        },
    })
}

/// Growth diagnostic output: (K, ‖Γ(whitened basis)‖²) pairs and the fitted
/// log-log slope.
#[derive(Debug, Clone)]
pub struct NormGrowth {
    pub points: Vec<(usize, f64)>,
    pub slope: f64,
}

const GROWTH_DEGREE: usize = 3;

/// Uniform-density Gram matrix of the tensor basis on its domain box,
/// computed per dimension by exact Gauss–Legendre integration over the knot
/// cells and combined as a Kronecker product.
fn uniform_gram(basis: &TensorSplineBasis) -> DMatrix<f64> {
    let j = basis.per_dim_count();
    let mut gram = DMatrix::<f64>::identity(1, 1);
    for dim in 0..basis.dimension() {
        let knots = basis.knots(dim);
        let degree = basis.degree();
        let breaks: Vec<f64> = knots[degree..knots.len() - degree].to_vec();
        let length = breaks[breaks.len() - 1] - breaks[0];
        let flat = gauss_legendre_cells(
            &breaks,
            |t| {
                let b = bspline_basis_1d(t, knots, degree).expect("in-domain node");
                let v = DVector::from_vec(b);
                let mut outer = DVector::zeros(j * j);
                for r in 0..j {
                    for c in 0..j {
                        outer[r * j + c] = v[r] * v[c];
                    }
                }
                outer
            },
            j * j,
        );
        let q1 = DMatrix::from_fn(j, j, |r, c| flat[r * j + c] / length);
        gram = gram.kronecker(&q1);
    }
    gram
}

/// Norm-growth diagnostic for an arbitrary linear functional given by its
/// action on the tensor basis. For each K a cubic tensor basis is built on
/// the box, whitened against the analytic uniform-density Gram, and the
/// squared norm Σ_k Γ(b̃_k)² = g' Q⁻¹ g is recorded; the slope is the
/// least-squares fit of log ‖Γ‖² on log K.
pub fn riesz_norm_growth_with<F>(
    gamma_on_basis: F,
    basis_sizes: &[usize],
    domain: &BoxDomain,
) -> Result<NormGrowth>
where
    F: Fn(&TensorSplineBasis) -> Result<DVector<f64>>,
{
    if basis_sizes.len() < 3 {
        return Err(Error::invalid(
            "norm-growth diagnostic needs at least 3 basis sizes",
        ));
    }
    let mut points = Vec::with_capacity(basis_sizes.len());
    for &k in basis_sizes {
        let basis = TensorSplineBasis::with_total_count(GROWTH_DEGREE, k, domain)?;
        let g = gamma_on_basis(&basis)?;
        if g.len() != basis.total_count() {
            return Err(Error::invalid(format!(
                "functional returned {} values for a basis of size {}",
                g.len(),
                basis.total_count()
            )));
        }
        let q = uniform_gram(&basis);
        let (qinv, _) = sym_pseudo_inverse(&q);
        let norm2 = (g.transpose() * &qinv * &g)[(0, 0)];
        if norm2 <= 0.0 || norm2.is_nan() {
            return Err(Error::invalid(format!(
                "whitened norm at K = {k} is not positive ({norm2})"
            )));
        }
        points.push((k, norm2));
    }
    let logk: Vec<f64> = points.iter().map(|(k, _)| (*k as f64).ln()).collect();
    let logn: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let slope = lsq_slope(&logk, &logn)?;
    Ok(NormGrowth { points, slope })
}

/// Norm-growth diagnostic for a linear chart functional (the empirical probe
/// of the representer-norm growth rate K^((d−m)/d)).
pub fn riesz_norm_growth(
    spec: &FunctionalSpec,
    basis_sizes: &[usize],
    domain: &BoxDomain,
) -> Result<NormGrowth> {
    if !matches!(spec, FunctionalSpec::LinearOnChart { .. }) {
        return Err(Error::invalid(
            "the norm-growth diagnostic is defined for linear chart functionals only",
        ));
    }
    riesz_norm_growth_with(
        |basis| {
            spec.basis_derivatives(|_| Ok(0.0), basis)
                .map(|(g, _)| g)
        },
        basis_sizes,
        domain,
    )
}
