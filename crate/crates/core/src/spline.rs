//! First-stage nonparametric regression: least squares on a tensor-product
//! B-spline sieve.
//!
//! Univariate bases use clamped knot vectors evaluated with the Cox–de Boor
//! recursion; the multivariate design is the tensor product across
//! coordinates, flattened row-major (first coordinate slowest, last fastest).
//! Rank-deficient Gram matrices are handled by a generalized inverse, so the
//! fit always returns the minimum-norm least-squares solution.

use crate::domain::BoxDomain;
use crate::error::{fmt_point, Error, Result};
use crate::linalg::sym_pseudo_inverse;
use crate::sample::Sample;
use nalgebra::{DMatrix, DVector};

/// Covariate dimension cap, aligned with the quadrature dimension cap.
const MAX_TENSOR_DIMS: usize = 16;

/// Values of the (degree+1) possibly-nonzero basis functions at `t`: entry
/// `i` is basis function `offset + i`.
#[derive(Debug, Clone)]
pub(crate) struct BasisWindow {
    pub offset: usize,
    pub values: Vec<f64>,
}

fn validate_knots(knots: &[f64], degree: usize) -> Result<usize> {
    if knots.len() < degree + 2 {
        return Err(Error::invalid(format!(
            "knot vector needs at least degree + 2 = {} entries, got {}",
            degree + 2,
            knots.len()
        )));
    }
    if knots.windows(2).any(|w| w[0] > w[1]) || knots.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("knot vector must be finite and non-decreasing"));
    }
    let j = knots.len() - degree - 1;
    if knots[degree] >= knots[j] {
        return Err(Error::invalid("knot vector has an empty domain interval"));
    }
    Ok(j)
}

/// Index of the knot span containing `t`, in `[degree, j-1]`; the final span
/// is closed on the right so the domain's upper edge is evaluable.
fn find_span(knots: &[f64], degree: usize, j: usize, t: f64) -> usize {
    if t >= knots[j] {
        return j - 1;
    }
    let mut lo = degree;
    let mut hi = j - 1;
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if t >= knots[mid] {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Cox–de Boor values of the nonzero basis functions on the span of `t`.
fn basis_window(knots: &[f64], degree: usize, j: usize, t: f64) -> BasisWindow {
    let span = find_span(knots, degree, j, t);
    let mut values = vec![0.0; degree + 1];
    values[0] = 1.0;
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    for r in 1..=degree {
        left[r] = t - knots[span + 1 - r];
        right[r] = knots[span + r] - t;
        let mut saved = 0.0;
        for k in 0..r {
            let denom = right[k + 1] + left[r - k];
            let temp = if denom != 0.0 { values[k] / denom } else { 0.0 };
            values[k] = saved + right[k + 1] * temp;
            saved = left[r - k] * temp;
        }
        values[r] = saved;
    }
    BasisWindow {
        offset: span - degree,
        values,
    }
}

/// First derivatives of the nonzero basis functions on the span of `t`,
/// via the standard derivative recurrence on the degree-1 window.
fn basis_window_derivative(knots: &[f64], degree: usize, j: usize, t: f64) -> BasisWindow {
    assert!(degree >= 1);
    let span = find_span(knots, degree, j, t);
    // degree-1 values on the same span: w[k] = B_{span-degree+1+k, degree-1}(t)
    let mut w = vec![0.0; degree];
    w[0] = 1.0;
    let mut left = vec![0.0; degree];
    let mut right = vec![0.0; degree];
    for r in 1..degree {
        left[r] = t - knots[span + 1 - r];
        right[r] = knots[span + r] - t;
        let mut saved = 0.0;
        for k in 0..r {
            let denom = right[k + 1] + left[r - k];
            let temp = if denom != 0.0 { w[k] / denom } else { 0.0 };
            w[k] = saved + right[k + 1] * temp;
            saved = left[r - k] * temp;
        }
        w[r] = saved;
    }
    let p = degree as f64;
    let mut values = vec![0.0; degree + 1];
    for (jj, slot) in values.iter_mut().enumerate() {
        let i = span - degree + jj;
        let a = if jj > 0 {
            let denom = knots[i + degree] - knots[i];
            if denom != 0.0 {
                w[jj - 1] / denom
            } else {
                0.0
            }
        } else {
            0.0
        };
        let b = if jj < degree {
            let denom = knots[i + degree + 1] - knots[i + 1];
            if denom != 0.0 {
                w[jj] / denom
            } else {
                0.0
            }
        } else {
            0.0
        };
        *slot = p * (a - b);
    }
    BasisWindow {
        offset: span - degree,
        values,
    }
}

/// All J univariate B-spline basis values at `t` (Cox–de Boor recursion,
/// dense output). `t` must lie inside [knots[degree], knots[J]].
pub fn bspline_basis_1d(t: f64, knots: &[f64], degree: usize) -> Result<Vec<f64>> {
    let j = validate_knots(knots, degree)?;
    if t < knots[degree] || t > knots[j] {
        return Err(Error::OutOfDomain {
            point: format!("{t}"),
            domain: format!("[{}, {}]", knots[degree], knots[j]),
        });
    }
    let window = basis_window(knots, degree, j, t);
    let mut out = vec![0.0; j];
    for (i, v) in window.values.iter().enumerate() {
        out[window.offset + i] = *v;
    }
    Ok(out)
}

/// Tensor-product B-spline basis over a box: J basis functions per
/// coordinate, K = J^d in total.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSplineBasis {
    degree: usize,
    per_dim_count: usize,
    dimension: usize,
    knots: Vec<Vec<f64>>,
    domain: BoxDomain,
}

impl TensorSplineBasis {
    /// Uniform clamped knots spanning each edge of the domain box
    /// (equivalently: the uniform clamped vector on [0,1] mapped affinely
    /// onto the edge).
    pub fn uniform_clamped(degree: usize, per_dim_count: usize, domain: &BoxDomain) -> Result<Self> {
        if per_dim_count < degree + 1 {
            return Err(Error::invalid(format!(
                "per-dimension basis count {per_dim_count} must be at least degree + 1 = {}",
                degree + 1
            )));
        }
        if domain.dim() > MAX_TENSOR_DIMS {
            return Err(Error::invalid(format!(
                "tensor bases support at most {MAX_TENSOR_DIMS} dimensions, got {}",
                domain.dim()
            )));
        }
        let cells = per_dim_count - degree;
        let knots = (0..domain.dim())
            .map(|dim| {
                let lo = domain.lower()[dim];
                let hi = domain.upper()[dim];
                let mut t = Vec::with_capacity(per_dim_count + degree + 1);
                t.extend(std::iter::repeat_n(lo, degree));
                for i in 0..=cells {
                    t.push(lo + (hi - lo) * (i as f64 / cells as f64));
                }
                t.extend(std::iter::repeat_n(hi, degree));
                t
            })
            .collect();
        Ok(Self {
            degree,
            per_dim_count,
            dimension: domain.dim(),
            knots,
            domain: domain.clone(),
        })
    }

    /// Basis with a given total count K = J^d; K must be a perfect d-th
    /// power of an admissible per-dimension count.
    pub fn with_total_count(degree: usize, total_count: usize, domain: &BoxDomain) -> Result<Self> {
        let d = domain.dim() as u32;
        let j = (total_count as f64).powf(1.0 / d as f64).round() as usize;
        if j.pow(d) != total_count {
            return Err(Error::invalid(format!(
                "total basis count {total_count} is not a perfect {d}-th power"
            )));
        }
        Self::uniform_clamped(degree, j, domain)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn per_dim_count(&self) -> usize {
        self.per_dim_count
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn total_count(&self) -> usize {
        self.per_dim_count.pow(self.dimension as u32)
    }

    pub fn knots(&self, dim: usize) -> &[f64] {
        &self.knots[dim]
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub(crate) fn windows(&self, x: &[f64]) -> Result<Vec<BasisWindow>> {
        self.domain.check_contains(x)?;
        Ok(x.iter()
            .zip(&self.knots)
            .map(|(&t, knots)| basis_window(knots, self.degree, self.per_dim_count, t))
            .collect())
    }

    /// Visits the nonzero tensor entries as (flat index, value) pairs; the
    /// flat index is row-major over dimensions (last coordinate fastest).
    pub(crate) fn for_each_entry<F: FnMut(usize, f64)>(&self, windows: &[BasisWindow], mut f: F) {
        let width = self.degree + 1;
        let j = self.per_dim_count;
        let d = self.dimension;
        let mut idx = [0usize; MAX_TENSOR_DIMS];
        let idx = &mut idx[..d];
        loop {
            let mut flat = 0usize;
            let mut value = 1.0;
            for (dim, i) in idx.iter().enumerate() {
                flat = flat * j + windows[dim].offset + i;
                value *= windows[dim].values[*i];
            }
            f(flat, value);
            // odometer increment, last dimension fastest
            let mut dim = d;
            loop {
                if dim == 0 {
                    return;
                }
                dim -= 1;
                idx[dim] += 1;
                if idx[dim] < width {
                    break;
                }
                idx[dim] = 0;
            }
        }
    }

    /// The K-vector of tensor basis values at `x`; entries sum to one.
    pub fn tensor_basis(&self, x: &[f64]) -> Result<DVector<f64>> {
        let windows = self.windows(x)?;
        let mut out = DVector::zeros(self.total_count());
        self.for_each_entry(&windows, |flat, value| out[flat] += value);
        Ok(out)
    }

    /// Precomputes the basis windows at a fixed node set, flattened for
    /// repeated evaluation against many coefficient vectors. Entry iteration
    /// replays `for_each_entry` exactly, so table-based sums are bit-equal
    /// to direct evaluation.
    pub(crate) fn window_table(&self, nodes: &[Vec<f64>]) -> Result<WindowTable> {
        let d = self.dimension;
        let width = self.degree + 1;
        let mut offsets = Vec::with_capacity(nodes.len() * d);
        let mut values = Vec::with_capacity(nodes.len() * d * width);
        for x in nodes {
            for w in self.windows(x)? {
                offsets.push(w.offset as u32);
                values.extend_from_slice(&w.values);
            }
        }
        Ok(WindowTable {
            dims: d,
            width,
            per_dim_count: self.per_dim_count,
            offsets,
            values,
        })
    }
}

/// Flattened per-node basis windows over a fixed node set.
#[derive(Debug, Clone)]
pub(crate) struct WindowTable {
    dims: usize,
    width: usize,
    per_dim_count: usize,
    offsets: Vec<u32>,
    values: Vec<f64>,
}

impl WindowTable {
    pub fn len(&self) -> usize {
        self.offsets.len() / self.dims
    }

    fn for_each_entry<F: FnMut(usize, f64)>(&self, node: usize, mut f: F) {
        let j = self.per_dim_count;
        let d = self.dims;
        let width = self.width;
        let off = &self.offsets[node * d..(node + 1) * d];
        let vals = &self.values[node * d * width..(node + 1) * d * width];
        let mut idx = [0usize; MAX_TENSOR_DIMS];
        let idx = &mut idx[..d];
        loop {
            let mut flat = 0usize;
            let mut value = 1.0;
            for (dim, i) in idx.iter().enumerate() {
                flat = flat * j + off[dim] as usize + i;
                value *= vals[dim * width + i];
            }
            f(flat, value);
            let mut dim = d;
            loop {
                if dim == 0 {
                    return;
                }
                dim -= 1;
                idx[dim] += 1;
                if idx[dim] < width {
                    break;
                }
                idx[dim] = 0;
            }
        }
    }

    /// ĥ at the node: same accumulation order as `FittedSieve::predict`.
    pub fn dot(&self, node: usize, coefficients: &DVector<f64>) -> f64 {
        let mut out = 0.0;
        self.for_each_entry(node, |flat, value| out += value * coefficients[flat]);
        out
    }

    /// acc += c · ψ(x_node), matching the direct accumulation order.
    pub fn add_scaled(&self, node: usize, c: f64, acc: &mut DVector<f64>) {
        self.for_each_entry(node, |flat, value| acc[flat] += c * value);
    }
}

/// A fitted sieve regression: coefficients, generalized Gram inverse,
/// residuals, and the design rank.
#[derive(Debug, Clone)]
pub struct FittedSieve {
    basis: TensorSplineBasis,
    coefficients: DVector<f64>,
    gram_inverse: DMatrix<f64>,
    residuals: DVector<f64>,
    design_rank: usize,
    n: usize,
    design: Vec<Vec<(u32, f64)>>,
}

/// Least-squares sieve fit; rank deficiency yields the minimum-norm solution
/// through the generalized inverse, never an error.
pub fn fit_sieve(sample: &Sample, basis: &TensorSplineBasis) -> Result<FittedSieve> {
    if basis.dimension() != sample.dim() {
        return Err(Error::invalid(format!(
            "basis dimension {} does not match sample dimension {}",
            basis.dimension(),
            sample.dim()
        )));
    }
    let n = sample.n();
    let k = basis.total_count();
    let mut gram = DMatrix::zeros(k, k);
    let mut xty = DVector::zeros(k);
    let mut design: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
    let mut row: Vec<(u32, f64)> = Vec::new();

    for i in 0..n {
        let x = sample.row(i);
        let windows = basis.windows(&x)?;
        row.clear();
        basis.for_each_entry(&windows, |flat, value| row.push((flat as u32, value)));
        let y = sample.y()[i];
        for (a, &(ia, va)) in row.iter().enumerate() {
            xty[ia as usize] += va * y;
            for &(ib, vb) in &row[a..] {
                gram[(ia as usize, ib as usize)] += va * vb;
            }
        }
        design.push(row.clone());
    }
    // row entries are sorted by flat index, so only the upper triangle was
    // touched; mirror it
    for a in 0..k {
        for b in (a + 1)..k {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    let nf = n as f64;
    let gram_n = gram.scale(1.0 / nf);
    let (gram_inverse, design_rank) = sym_pseudo_inverse(&gram_n);
    let coefficients = &gram_inverse * xty.scale(1.0 / nf);

    let mut residuals = DVector::zeros(n);
    for i in 0..n {
        let mut pred = 0.0;
        for &(idx, v) in &design[i] {
            pred += v * coefficients[idx as usize];
        }
        residuals[i] = sample.y()[i] - pred;
    }

    Ok(FittedSieve {
        basis: basis.clone(),
        coefficients,
        gram_inverse,
        residuals,
        design_rank,
        n,
        design,
    })
}

impl FittedSieve {
    pub fn basis(&self) -> &TensorSplineBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    /// Generalized inverse of the scaled Gram matrix Ψ'Ψ/n.
    pub fn gram_inverse(&self) -> &DMatrix<f64> {
        &self.gram_inverse
    }

    pub fn residuals(&self) -> &DVector<f64> {
        &self.residuals
    }

    pub fn design_rank(&self) -> usize {
        self.design_rank
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub(crate) fn design_rows(&self) -> &[Vec<(u32, f64)>] {
        &self.design
    }

    /// Copy of this fit with replaced coefficients (test support: finite
    /// differences of functionals in coefficient directions).
    #[cfg(test)]
    pub(crate) fn with_coefficients(&self, coefficients: DVector<f64>) -> FittedSieve {
        let mut fit = self.clone();
        assert_eq!(coefficients.len(), fit.coefficients.len());
        fit.coefficients = coefficients;
        fit
    }

    /// ĥ(x): inner product of the tensor basis at x with the coefficients.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let windows = self.basis.windows(x)?;
        let mut out = 0.0;
        self.basis.for_each_entry(&windows, |flat, value| {
            out += value * self.coefficients[flat];
        });
        Ok(out)
    }

    /// Analytic gradient of the fitted expansion (B-spline derivative
    /// recurrence per coordinate, not finite differences).
    pub fn predict_gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        if self.basis.degree() == 0 {
            return Err(Error::Unsupported(
                "gradient of a degree-0 spline fit is not defined".to_string(),
            ));
        }
        if !self.basis.domain().contains_interior(x) {
            return Err(Error::OutOfDomain {
                point: fmt_point(x),
                domain: format!("interior of {}", self.basis.domain()),
            });
        }
        let value_windows = self.basis.windows(x)?;
        let mut grad = DVector::zeros(self.basis.dimension());
        for dim in 0..self.basis.dimension() {
            let mut windows = value_windows.clone();
            windows[dim] = basis_window_derivative(
                self.basis.knots(dim),
                self.basis.degree(),
                self.basis.per_dim_count(),
                x[dim],
            );
            let mut acc = 0.0;
            self.basis.for_each_entry(&windows, |flat, value| {
                acc += value * self.coefficients[flat];
            });
            grad[dim] = acc;
        }
        Ok(grad)
    }
}
