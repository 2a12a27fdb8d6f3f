//! Polynomial graph filters evaluated by repeated operator products.
//!
//! LightGCN averages the monomials `op^l E` for `l = 0..=L`; the JGCF
//! band-stop filter averages Jacobi polynomials `P_l^{a,b}(op) E` built with
//! the three-term recurrence. Both accept any [`LinearOperator`], so the
//! corrected operator `(Ã₊ − μI)/Δ` plugs in unchanged.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};
use crate::operator::LinearOperator;
use crate::spectral::{DenseSpectrum, SscFactors};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterKind {
    LightGcn,
    Jgcf { a: f64, b: f64 },
}

/// A fixed polynomial filter of degree `num_layers` with uniform layer weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(flatten)]
    pub kind: FilterKind,
    pub num_layers: usize,
}

impl FilterSpec {
    pub fn lightgcn(num_layers: usize) -> Self {
        Self {
            kind: FilterKind::LightGcn,
            num_layers,
        }
    }

    pub fn jgcf(num_layers: usize, a: f64, b: f64) -> Self {
        Self {
            kind: FilterKind::Jgcf { a, b },
            num_layers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let FilterKind::Jgcf { a, b } = self.kind {
            if !(a > -1.0 && b > -1.0) {
                return Err(SscError::InvalidParameter(format!(
                    "Jacobi parameters must exceed -1 (a={a}, b={b})"
                )));
            }
            for l in 2..=self.num_layers {
                jacobi_coefficients(a, b, l)?;
            }
        }
        Ok(())
    }

    /// Layer weights `α_l`; all `1/(L+1)`.
    pub fn layer_weights(&self) -> Vec<f64> {
        vec![1.0 / (self.num_layers + 1) as f64; self.num_layers + 1]
    }

    /// Scalar frequency response `g(λ)`.
    pub fn response(&self, lambda: f64) -> f64 {
        let weight = 1.0 / (self.num_layers + 1) as f64;
        match self.kind {
            FilterKind::LightGcn => (0..=self.num_layers).map(|l| lambda.powi(l as i32)).sum::<f64>() * weight,
            FilterKind::Jgcf { a, b } => {
                jacobi_values(a, b, self.num_layers, lambda).iter().sum::<f64>() * weight
            }
        }
    }

    /// `H = g(op) E`.
    pub fn propagate(&self, op: &impl LinearOperator, embeddings: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self.kind {
            FilterKind::LightGcn => lightgcn_propagate(op, embeddings, self.num_layers),
            FilterKind::Jgcf { a, b } => jgcf_propagate(op, embeddings, self.num_layers, a, b),
        }
    }
}

/// Coefficients of `P_l = (θ_l λ + θ'_l) P_{l−1} − θ''_l P_{l−2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiCoefficients {
    pub theta: f64,
    pub theta_prime: f64,
    pub theta_double_prime: f64,
}

/// Closed-form recurrence coefficients for degree `l ≥ 2`.
pub fn jacobi_coefficients(a: f64, b: f64, l: usize) -> Result<JacobiCoefficients> {
    if l < 2 {
        return Err(SscError::InvalidParameter(format!(
            "recurrence coefficients start at degree 2, got {l}"
        )));
    }
    let lf = l as f64;
    let s = 2.0 * lf + a + b;
    if lf + a + b == 0.0 || s - 2.0 == 0.0 {
        return Err(SscError::DegenerateJacobi { a, b, l });
    }
    let coeffs = JacobiCoefficients {
        theta: s * (s - 1.0) / (2.0 * lf * (lf + a + b)),
        theta_prime: (s - 1.0) * (a * a - b * b) / (2.0 * lf * (lf + a + b) * (s - 2.0)),
        theta_double_prime: (lf + a - 1.0) * (lf + b - 1.0) * s / (lf * (lf + a + b) * (s - 2.0)),
    };
    if ![coeffs.theta, coeffs.theta_prime, coeffs.theta_double_prime]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(SscError::DegenerateJacobi { a, b, l });
    }
    Ok(coeffs)
}

/// Precomputed coefficients for degrees `2..=L`.
#[derive(Debug, Clone)]
pub struct JacobiRecurrence {
    pub a: f64,
    pub b: f64,
    /// Entry `k` holds the coefficients of degree `k + 2`.
    pub coefficients: Vec<JacobiCoefficients>,
}

impl JacobiRecurrence {
    pub fn new(a: f64, b: f64, max_degree: usize) -> Result<Self> {
        if !(a > -1.0 && b > -1.0) {
            return Err(SscError::InvalidParameter(format!(
                "Jacobi parameters must exceed -1 (a={a}, b={b})"
            )));
        }
        let coefficients = (2..=max_degree)
            .map(|l| jacobi_coefficients(a, b, l))
            .collect::<Result<_>>()?;
        Ok(Self { a, b, coefficients })
    }

    pub fn degree(&self, l: usize) -> &JacobiCoefficients {
        &self.coefficients[l - 2]
    }
}

/// `[P_0(λ), …, P_L(λ)]` for scalar `λ`.
pub fn jacobi_values(a: f64, b: f64, max_degree: usize, lambda: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_degree + 1);
    out.push(1.0);
    if max_degree >= 1 {
        out.push((a - b) / 2.0 + (a + b + 2.0) / 2.0 * lambda);
    }
    for l in 2..=max_degree {
        let c = jacobi_coefficients(a, b, l).expect("validated Jacobi parameters");
        let next = (c.theta * lambda + c.theta_prime) * out[l - 1] - c.theta_double_prime * out[l - 2];
        out.push(next);
    }
    out
}

fn check_rows(op: &impl LinearOperator, e: ArrayView2<'_, f64>) -> Result<()> {
    if op.dim() != e.nrows() {
        return Err(SscError::DimensionMismatch(format!(
            "operator of dimension {} applied to {} embedding rows",
            op.dim(),
            e.nrows()
        )));
    }
    Ok(())
}

/// `H = Σ_{l=0}^{L} op^l E / (L+1)` with a running sum.
pub fn lightgcn_propagate(
    op: &impl LinearOperator,
    embeddings: ArrayView2<'_, f64>,
    num_layers: usize,
) -> Result<Array2<f64>> {
    check_rows(op, embeddings)?;
    let weight = 1.0 / (num_layers + 1) as f64;
    let mut layer = embeddings.to_owned();
    let mut sum = layer.clone();
    for _ in 0..num_layers {
        layer = op.apply_block(layer.view());
        sum += &layer;
    }
    sum *= weight;
    Ok(sum)
}

/// `H = Σ_{l=0}^{L} P_l^{a,b}(op) E / (L+1)`.
pub fn jgcf_propagate(
    op: &impl LinearOperator,
    embeddings: ArrayView2<'_, f64>,
    num_layers: usize,
    a: f64,
    b: f64,
) -> Result<Array2<f64>> {
    check_rows(op, embeddings)?;
    let recurrence = JacobiRecurrence::new(a, b, num_layers)?;
    let weight = 1.0 / (num_layers + 1) as f64;

    let mut prev = embeddings.to_owned();
    let mut sum = prev.clone();
    if num_layers == 0 {
        sum *= weight;
        return Ok(sum);
    }
    let mut current = op.apply_block(embeddings);
    let (c0, c1) = ((a - b) / 2.0, (a + b + 2.0) / 2.0);
    Zip::from(&mut current)
        .and(&embeddings)
        .for_each(|x1, &e| *x1 = c0 * e + c1 * *x1);
    sum += &current;

    for l in 2..=num_layers {
        let c = recurrence.degree(l);
        let mut next = op.apply_block(current.view());
        Zip::from(&mut next)
            .and(&current)
            .and(&prev)
            .for_each(|n, &cur, &p| {
                *n = c.theta * *n + c.theta_prime * cur - c.theta_double_prime * p;
            });
        sum += &next;
        prev = current;
        current = next;
    }
    sum *= weight;
    Ok(sum)
}

/// `H = U diag(g(φ(λ_k))) Uᵀ E` from a full eigendecomposition.
pub fn spectral_reference_propagate(
    spectrum: &DenseSpectrum,
    filter: &FilterSpec,
    factors: &SscFactors,
    embeddings: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    let u = &spectrum.eigenvectors;
    if u.nrows() != embeddings.nrows() {
        return Err(SscError::DimensionMismatch(format!(
            "{} eigenvector rows against {} embedding rows",
            u.nrows(),
            embeddings.nrows()
        )));
    }
    filter.validate()?;
    let mut coeffs = u.t().dot(&embeddings);
    for (k, mut row) in coeffs.rows_mut().into_iter().enumerate() {
        row *= filter.response(factors.phi(spectrum.eigenvalues[k]));
    }
    Ok(u.dot(&coeffs))
}
