//! Spectrum estimation and the shift/scale correction operator.
//!
//! [`estimate_factors`] runs plain power iteration on `I − Ã₊` to estimate
//! `λ_min` (the top of the spectrum is pinned at 1 for any sqrt-normalized
//! adjacency) and derives the shifting factor `μ` and scaling factor `Δ`
//! that map `[λ_min, 1]` back onto `[−1, 1]`. [`ShiftedOperator`] applies
//! `(Ã₊ − μI)/Δ` lazily. [`dense_spectrum`] is the desk-scale oracle.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::InteractionDataset;
use crate::error::{Result, SscError};
use crate::graph::{
    build_augmented_adjacency, build_bipartite, sym_normalize, NormalizedAdjacency, SideConfig,
    SideInformation,
};
use crate::operator::{IdentityMinus, LinearOperator};
use crate::sparse::SparseMatrix;

pub const DEFAULT_POWER_ITERATIONS: usize = 100;
pub const DEFAULT_POWER_SEED: u64 = 42;
pub const DEFAULT_DENSE_CAP: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerIterationOptions {
    pub iterations: usize,
    pub seed: u64,
    /// Stop early once successive Rayleigh quotients differ by less than this.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_POWER_ITERATIONS,
            seed: DEFAULT_POWER_SEED,
            tolerance: None,
        }
    }
}

/// Dominant eigenvalue estimate of a symmetric operator.
///
/// Iterates `x ← Mx / ‖Mx‖` from a seeded Gaussian unit vector and returns the
/// final Rayleigh quotient `xᵀMx`, so the sign of the dominant eigenvalue is
/// kept. Returns 0 if the operator annihilates the iterate.
pub fn power_iteration(op: &impl LinearOperator, opts: &PowerIterationOptions) -> f64 {
    let n = op.dim();
    if n == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = l2(&x);
    x.iter_mut().for_each(|v| *v /= norm);

    let mut y = vec![0.0; n];
    let mut previous = f64::NAN;
    for _ in 0..opts.iterations.max(1) {
        op.apply(&x, &mut y);
        let norm = l2(&y);
        if norm == 0.0 {
            return 0.0;
        }
        if let Some(tol) = opts.tolerance {
            let rq = dot(&x, &y);
            if (rq - previous).abs() < tol {
                return rq;
            }
            previous = rq;
        }
        x.iter_mut().zip(&y).for_each(|(xi, &yi)| *xi = yi / norm);
    }
    op.apply(&x, &mut y);
    dot(&x, &y)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Shifting factor `μ`, scaling factor `Δ`, and the spectrum edges behind them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SscFactors {
    pub mu: f64,
    pub delta: f64,
    pub lambda_min_est: f64,
    pub lambda_max: f64,
}

impl SscFactors {
    /// Factors mapping `[lambda_min, 1]` onto `[−1, 1]`.
    pub fn from_lambda_min(lambda_min: f64) -> Self {
        let lambda_max = 1.0;
        Self {
            mu: (lambda_min + lambda_max) / 2.0,
            delta: (lambda_max - lambda_min) / 2.0,
            lambda_min_est: lambda_min,
            lambda_max,
        }
    }

    /// Hand-picked factors; the spectrum edges are the ones they would restore.
    pub fn manual(mu: f64, delta: f64) -> Self {
        Self {
            mu,
            delta,
            lambda_min_est: mu - delta,
            lambda_max: mu + delta,
        }
    }

    /// `μ = 0, Δ = 1`: no correction.
    pub fn identity() -> Self {
        Self::manual(0.0, 1.0)
    }

    pub fn is_identity(&self) -> bool {
        self.mu == 0.0 && self.delta == 1.0
    }

    /// `φ(λ) = (λ − μ)/Δ`.
    pub fn phi(&self, lambda: f64) -> f64 {
        (lambda - self.mu) / self.delta
    }
}

/// Estimates `mu` and `delta` from `lambda_min` after `iterations` power steps on `I − Ã`.
pub fn estimate_factors(adj: &NormalizedAdjacency, iterations: usize, seed: u64) -> SscFactors {
    estimate_factors_with(
        adj,
        &PowerIterationOptions {
            iterations,
            seed,
            tolerance: None,
        },
    )
}

pub fn estimate_factors_with(adj: &impl LinearOperator, opts: &PowerIterationOptions) -> SscFactors {
    let top_of_complement = power_iteration(&IdentityMinus(adj), opts);
    SscFactors::from_lambda_min(1.0 - top_of_complement)
}

/// `φ(M) x = (M x − μ x) / Δ`, never materialized.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedOperator<O> {
    pub base: O,
    pub mu: f64,
    pub delta: f64,
}

impl<O: LinearOperator> ShiftedOperator<O> {
    pub fn new(base: O, mu: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) || !mu.is_finite() {
            return Err(SscError::InvalidParameter(format!(
                "scaling factor must be positive and finite (mu={mu}, delta={delta})"
            )));
        }
        if !(0.0..=1.0).contains(&mu) {
            log::warn!("shifting factor {mu} lies outside [0, 1]");
        }
        Ok(Self { base, mu, delta })
    }

    pub fn from_factors(base: O, factors: &SscFactors) -> Result<Self> {
        Self::new(base, factors.mu, factors.delta)
    }

    fn is_identity(&self) -> bool {
        self.mu == 0.0 && self.delta == 1.0
    }
}

pub fn make_shifted_operator(
    adj: &NormalizedAdjacency,
    mu: f64,
    delta: f64,
) -> Result<ShiftedOperator<&NormalizedAdjacency>> {
    ShiftedOperator::new(adj, mu, delta)
}

impl<O: LinearOperator> LinearOperator for ShiftedOperator<O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.base.apply(x, y);
        if self.is_identity() {
            return;
        }
        let (mu, delta) = (self.mu, self.delta);
        y.iter_mut().zip(x).for_each(|(yi, &xi)| *yi = (*yi - mu * xi) / delta);
    }

    fn apply_block(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = self.base.apply_block(x);
        if self.is_identity() {
            return y;
        }
        let (mu, delta) = (self.mu, self.delta);
        Zip::from(&mut y).and(&x).for_each(|yi, &xi| *yi = (*yi - mu * xi) / delta);
        y
    }
}

/// Full symmetric eigendecomposition with ascending eigenvalues.
/// Column `k` of `eigenvectors` belongs to `eigenvalues[k]`.
#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Array2<f64>,
}

impl DenseSpectrum {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }
}

/// Dense eigendecomposition of a symmetric matrix, refused above `cap` nodes.
pub fn dense_spectrum(matrix: &SparseMatrix, cap: usize) -> Result<DenseSpectrum> {
    let n = matrix.rows();
    if matrix.cols() != n {
        return Err(SscError::DimensionMismatch(format!(
            "spectrum of a non-square {}x{} matrix",
            matrix.rows(),
            matrix.cols()
        )));
    }
    if n > cap {
        return Err(SscError::TooLargeForDense { nodes: n, cap });
    }
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for (r, c, v) in matrix.iter() {
        dense[(r, c)] = v;
    }
    Ok(symmetric_eigen(dense))
}

/// Eigendecomposition of a dense symmetric ndarray matrix.
pub fn dense_spectrum_of(matrix: ArrayView2<'_, f64>) -> DenseSpectrum {
    let n = matrix.nrows();
    symmetric_eigen(DMatrix::from_fn(n, n, |r, c| matrix[[r, c]]))
}

fn symmetric_eigen(dense: DMatrix<f64>) -> DenseSpectrum {
    let n = dense.nrows();
    let eig = dense.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = Array2::from_shape_fn((n, n), |(r, k)| eig.eigenvectors[(r, order[k])]);
    DenseSpectrum {
        eigenvalues,
        eigenvectors,
    }
}

/// `|xᵀBx| / xᵀx` for each column `x` of `vectors`.
pub fn rayleigh_importance(vectors: ArrayView2<'_, f64>, test_graph: &SparseMatrix) -> Result<Vec<f64>> {
    if vectors.nrows() != test_graph.rows() || test_graph.cols() != test_graph.rows() {
        return Err(SscError::DimensionMismatch(format!(
            "{} -dimensional vectors against a {}x{} graph",
            vectors.nrows(),
            test_graph.rows(),
            test_graph.cols()
        )));
    }
    let bx = test_graph.spmm(vectors)?;
    (0..vectors.ncols())
        .map(|k| {
            let x = vectors.column(k);
            let norm2 = x.dot(&x);
            if norm2 == 0.0 {
                return Err(SscError::ZeroVector);
            }
            Ok(x.dot(&bx.column(k)).abs() / norm2)
        })
        .collect()
}

/// The held-out test interactions as a symmetric bipartite graph `B`.
pub fn test_graph(dataset: &InteractionDataset) -> Result<SparseMatrix> {
    build_bipartite(&dataset.test, dataset.num_users, dataset.num_items)
}

/// Eigenvalues of `Ã₊(κ)` and the importance of each eigenvector for the test graph.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub kappa: f64,
    pub eigenvalues: Vec<f64>,
    pub importance: Vec<f64>,
}

impl SpectrumReport {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }
}

/// One report per κ: assemble and normalize `A₊(κ)`, decompose it densely,
/// and score every eigenvector against the test graph.
pub fn spectrum_shift_report(
    dataset: &InteractionDataset,
    side: &SideInformation,
    config: &SideConfig,
    kappas: &[f64],
    cap: usize,
) -> Result<Vec<SpectrumReport>> {
    let b = test_graph(dataset)?;
    kappas
        .iter()
        .map(|&kappa| {
            let plus = build_augmented_adjacency(
                &dataset.train,
                dataset.num_users,
                dataset.num_items,
                side,
                &config.with_kappa(kappa),
            )?;
            let adj = sym_normalize(&plus, dataset.num_users)?;
            let spectrum = dense_spectrum(&adj.matrix, cap)?;
            let importance = rayleigh_importance(spectrum.eigenvectors.view(), &b)?;
            Ok(SpectrumReport {
                kappa,
                eigenvalues: spectrum.eigenvalues,
                importance,
            })
        })
        .collect()
}

/// Writes reports as CSV rows `kappa,index,eigenvalue,importance`.
pub fn write_spectrum_csv(reports: &[SpectrumReport], w: &mut impl std::io::Write) -> Result<()> {
    writeln!(w, "kappa,index,eigenvalue,importance")?;
    for r in reports {
        for (k, (lambda, imp)) in r.eigenvalues.iter().zip(&r.importance).enumerate() {
            writeln!(w, "{},{},{:.17e},{:.17e}", r.kappa, k, lambda, imp)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{DenseOperator, Identity};
    use ndarray::{array, Array1};
    use rand::Rng;

    fn opts(iterations: usize) -> PowerIterationOptions {
        PowerIterationOptions {
            iterations,
            ..Default::default()
        }
    }

    #[test]
    fn power_iteration_on_scaled_identity() {
        let two = ShiftedOperator::new(Identity(5), 0.0, 0.5).unwrap();
        assert!((power_iteration(&two, &opts(1)) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn power_iteration_dominant_diagonal() {
        let m = DenseOperator(Array2::from_diag(&array![3.0, 1.0, -1.0]));
        assert!((power_iteration(&m, &opts(100)) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn power_iteration_keeps_sign() {
        let m = DenseOperator(Array2::from_diag(&array![-3.0, 1.0, 0.5]));
        assert!((power_iteration(&m, &opts(100)) + 3.0).abs() < 1e-9);
    }

    #[test]
    fn power_iteration_annihilated_iterate_returns_zero() {
        let zero = SparseMatrix::zeros(4, 4);
        assert_eq!(power_iteration(&zero, &opts(10)), 0.0);
    }

    #[test]
    fn power_iteration_tolerance_mode_stops_early() {
        let m = DenseOperator(Array2::from_diag(&array![3.0, 1.0, -1.0]));
        let est = power_iteration(
            &m,
            &PowerIterationOptions {
                iterations: 10_000,
                seed: 1,
                tolerance: Some(1e-13),
            },
        );
        assert!((est - 3.0).abs() < 1e-9);
    }

    /// Random symmetric matrix with prescribed spectrum: Q diag(λ) Qᵀ.
    fn with_spectrum(eigs: &[f64], seed: u64) -> Array2<f64> {
        let n = eigs.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
        let q = nalgebra::DMatrix::from_fn(n, n, |r, c| g[[r, c]]).qr().q();
        let q = Array2::from_shape_fn((n, n), |(r, c)| q[(r, c)]);
        q.dot(&Array2::from_diag(&Array1::from(eigs.to_vec()))).dot(&q.t())
    }

    #[test]
    fn power_iteration_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut eigs: Vec<f64> = (0..199).map(|_| rng.gen_range(-0.9..0.9)).collect();
        eigs.push(-1.0);
        let m = with_spectrum(&eigs, 5);
        let oracle = dense_spectrum_of(m.view());
        let dominant = if oracle.lambda_max().abs() > oracle.lambda_min().abs() {
            oracle.lambda_max()
        } else {
            oracle.lambda_min()
        };
        let est = power_iteration(&DenseOperator(m), &opts(100));
        assert!((est - dominant).abs() < 1e-6, "{est} vs {dominant}");
    }

    #[test]
    fn factor_identities() {
        let f = SscFactors::from_lambda_min(-0.6);
        assert!((f.mu - 0.2).abs() < 1e-15 && (f.delta - 0.8).abs() < 1e-15);
        assert_eq!(f.mu + f.delta, 1.0);
        assert!((f.phi(1.0) - 1.0).abs() < 1e-15);
        assert!((f.phi(-0.6) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn bipartite_factors_are_identity_like() {
        let pairs = [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 0), (3, 1)];
        let a = build_bipartite(&pairs, 4, 3).unwrap();
        let adj = sym_normalize(&a, 4).unwrap();
        let f = estimate_factors(&adj, 100, DEFAULT_POWER_SEED);
        assert!((f.lambda_min_est + 1.0).abs() < 1e-6);
        assert!(f.mu.abs() < 1e-6 && (f.delta - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shifted_operator_examples() {
        let adj = sym_normalize(&build_bipartite(&[(0, 0), (1, 0)], 2, 1).unwrap(), 2).unwrap();
        let x = vec![0.3, -0.2, 0.9];
        let mut plain = vec![0.0; 3];
        let mut shifted = vec![0.0; 3];
        adj.apply(&x, &mut plain);
        make_shifted_operator(&adj, 0.0, 1.0).unwrap().apply(&x, &mut shifted);
        assert_eq!(plain, shifted);

        let op = make_shifted_operator(&adj, 0.2, 0.8).unwrap();
        let d = DenseOperator(Array2::from_diag(&array![1.0, -0.6]));
        let on_diag = ShiftedOperator::new(&d, 0.2, 0.8).unwrap();
        let mut y = vec![0.0; 2];
        on_diag.apply(&[1.0, 0.0], &mut y);
        assert!((y[0] - 1.0).abs() < 1e-15);
        on_diag.apply(&[0.0, 1.0], &mut y);
        assert!((y[1] + 1.0).abs() < 1e-15);
        assert!(make_shifted_operator(&adj, 0.2, 0.0).is_err());
        assert!(make_shifted_operator(&adj, 0.2, -1.0).is_err());
        assert_eq!(op.dim(), 3);
    }

    #[test]
    fn shifted_operator_is_exact_formula() {
        let adj = sym_normalize(&build_bipartite(&[(0, 0), (1, 0), (1, 1)], 2, 2).unwrap(), 2).unwrap();
        let op = make_shifted_operator(&adj, 0.15, 0.4).unwrap();
        let x = array![[0.5, -1.0], [0.25, 2.0], [1.0, 0.0], [-0.75, 0.5]];
        let ax = adj.apply_block(x.view());
        let expected = (&ax - &(&x * 0.15)) / 0.4;
        assert_eq!(op.apply_block(x.view()), expected);
    }

    #[test]
    fn dense_spectrum_examples() {
        let m = SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let s = dense_spectrum(&m, 10).unwrap();
        assert!((s.eigenvalues[0] + 1.0).abs() < 1e-14 && (s.eigenvalues[1] - 1.0).abs() < 1e-14);
        let d = SparseMatrix::from_triplets(2, 2, [(0, 0, 0.7), (1, 1, -0.3)]).unwrap();
        let s = dense_spectrum(&d, 10).unwrap();
        assert_eq!(s.eigenvalues, vec![-0.3, 0.7]);
        assert!(matches!(
            dense_spectrum(&SparseMatrix::identity(11), 10),
            Err(SscError::TooLargeForDense { nodes: 11, cap: 10 })
        ));
    }

    #[test]
    fn importance_examples() {
        let b = SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let s = 0.5f64.sqrt();
        let vecs = array![[s, s], [-s, s]];
        let imp = rayleigh_importance(vecs.view(), &b).unwrap();
        assert!((imp[0] - 1.0).abs() < 1e-15 && (imp[1] - 1.0).abs() < 1e-15);
        let zero = SparseMatrix::zeros(2, 2);
        assert_eq!(rayleigh_importance(vecs.view(), &zero).unwrap(), vec![0.0, 0.0]);
        let with_zero = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(matches!(rayleigh_importance(with_zero.view(), &b), Err(SscError::ZeroVector)));
    }

    #[test]
    fn importance_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100;
        let mut trip = Vec::new();
        for _ in 0..300 {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if i != j {
                trip.push((i, j, 1.0));
                trip.push((j, i, 1.0));
            }
        }
        let b = SparseMatrix::from_triplets(n, n, trip).unwrap().map_values(|_, _, _| 1.0);
        let vecs = Array2::from_shape_fn((n, 5), |_| rng.gen_range(-1.0..1.0));
        let imp = rayleigh_importance(vecs.view(), &b).unwrap();
        let bd = b.to_dense();
        for k in 0..5 {
            let x = vecs.column(k);
            let mut num = 0.0;
            for i in 0..n {
                for j in 0..n {
                    num += x[i] * bd[[i, j]] * x[j];
                }
            }
            let expected = num.abs() / x.dot(&x);
            assert!((imp[k] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn spectrum_csv_layout() {
        let reports = vec![SpectrumReport {
            kappa: 0.5,
            eigenvalues: vec![-1.0, 1.0],
            importance: vec![0.25, 0.0],
        }];
        let mut out = Vec::new();
        write_spectrum_csv(&reports, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "kappa,index,eigenvalue,importance");
        assert!(lines[1].starts_with("0.5,0,-1"));
        assert_eq!(lines.len(), 3);
    }
}
