//! Poisson structures on a chart and the operations defined by them.
//!
//! A [`PoissonStructure`] stores the matrix `B^{ij} = {x^i, x^j}` of
//! expressions. See the crate docs for the sign convention.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::Rng;
use thiserror::Error;

use crate::expr::{monomials, simplify, Chart, EvalError, Expr, Poly};
use crate::linalg::{self, RANK_TOL};
use crate::report::CheckReport;
use crate::sampling::{SampleBox, SampleRng};

/// Residual allowed by the single-bracket identity checks.
pub const BRACKET_TOL: f64 = 1e-10;
/// Highest total degree for which Jacobi is proven symbolically.
const SYMBOLIC_JACOBI_DEGREE: u32 = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoissonError {
    #[error("expression references coordinate {index}, but the chart has dimension {dim}")]
    ChartMismatch { index: usize, dim: usize },
    #[error("expected a {expected}x{expected} tensor, got {rows} rows with {cols} columns")]
    Shape { expected: usize, rows: usize, cols: usize },
    #[error("tensor is not antisymmetric: B^{{{i}{j}}} + B^{{{j}{i}}} does not simplify to 0")]
    NotAntisymmetric { i: usize, j: usize },
    #[error("Jacobi identity fails with residual {residual:.3e} at {witness:?}")]
    Jacobi { residual: f64, witness: Vec<f64> },
    #[error("map dimensions {source_dim} -> {target_dim} do not match charts {expected_source} -> {expected_target}")]
    MapMismatch {
        source_dim: usize,
        target_dim: usize,
        expected_source: usize,
        expected_target: usize,
    },
    #[error("no validation sample could be evaluated: {0}")]
    NoValidSamples(EvalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Knobs for the constructor's validation pass.
#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub sample_box: SampleBox,
    /// Number of quasi-random points used for the numeric Jacobi test.
    pub samples: usize,
    /// Tolerance on the Jacobi cyclic sum, relative to `1 + |B| |∂B|`.
    pub jacobi_tol: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            sample_box: SampleBox::default(),
            samples: 50,
            jacobi_tol: 1e-9,
        }
    }
}

/// How the Jacobi identity was established by [`PoissonStructure::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum JacobiEvidence {
    /// Every cyclic sum expands to the zero polynomial.
    Symbolic,
    /// Consistent at the given number of sample points.
    Sampled { points: usize, worst_residual: f64 },
}

#[derive(Debug, Clone)]
pub struct PoissonStructure {
    chart: Arc<Chart>,
    tensor: Vec<Vec<Expr>>,
    /// `derivs[l][i][j] = ∂_l B^{ij}`
    derivs: Vec<Vec<Vec<Expr>>>,
}

impl PoissonStructure {
    /// Builds and validates a structure from its full matrix.
    pub fn from_matrix(
        chart: Arc<Chart>,
        tensor: Vec<Vec<Expr>>,
        opts: &ValidationOptions,
    ) -> Result<Self, PoissonError> {
        let p = Self::new_unchecked(chart, tensor)?;
        p.check_antisymmetry()?;
        p.validate(opts)?;
        Ok(p)
    }

    /// Builds and validates a structure from upper-triangle entries
    /// `(i, j, B^{ij})` with `i < j`; the lower triangle follows by
    /// antisymmetry and missing entries are zero.
    pub fn from_upper(
        chart: Arc<Chart>,
        entries: impl IntoIterator<Item = (usize, usize, Expr)>,
        opts: &ValidationOptions,
    ) -> Result<Self, PoissonError> {
        let p = Self::from_upper_unchecked(chart, entries)?;
        p.validate(opts)?;
        Ok(p)
    }

    pub fn from_upper_unchecked(
        chart: Arc<Chart>,
        entries: impl IntoIterator<Item = (usize, usize, Expr)>,
    ) -> Result<Self, PoissonError> {
        let n = chart.dim();
        let mut tensor = vec![vec![Expr::zero(); n]; n];
        for (i, j, e) in entries {
            if i >= n || j >= n || i == j {
                return Err(PoissonError::ChartMismatch {
                    index: i.max(j),
                    dim: n,
                });
            }
            tensor[j][i] = -e.clone();
            tensor[i][j] = e;
        }
        Self::new_unchecked(chart, tensor)
    }

    /// Builds a structure without antisymmetry or Jacobi validation. Used to
    /// represent candidate tensors whose checks are reported rather than
    /// enforced.
    pub fn new_unchecked(chart: Arc<Chart>, tensor: Vec<Vec<Expr>>) -> Result<Self, PoissonError> {
        let n = chart.dim();
        if tensor.len() != n || tensor.iter().any(|row| row.len() != n) {
            return Err(PoissonError::Shape {
                expected: n,
                rows: tensor.len(),
                cols: tensor.iter().map(Vec::len).max().unwrap_or(0),
            });
        }
        for e in tensor.iter().flatten() {
            check_fits(e, n)?;
        }
        let derivs = (0..n)
            .map(|l| {
                tensor
                    .iter()
                    .map(|row| row.iter().map(|e| e.diff(l)).collect())
                    .collect()
            })
            .collect();
        Ok(PoissonStructure { chart, tensor, derivs })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn entry(&self, i: usize, j: usize) -> &Expr {
        &self.tensor[i][j]
    }

    pub fn tensor(&self) -> &[Vec<Expr>] {
        &self.tensor
    }

    /// Symbolic antisymmetry: `B^{ij} + B^{ji}` simplifies to 0 for all i, j.
    pub fn check_antisymmetry(&self) -> Result<(), PoissonError> {
        let n = self.dim();
        for i in 0..n {
            for j in i..n {
                let sum = &self.tensor[i][j] + &self.tensor[j][i];
                if !simplify(&sum).is_zero() {
                    return Err(PoissonError::NotAntisymmetric { i, j });
                }
            }
        }
        Ok(())
    }

    /// Jacobi validation: symbolic when every entry is a polynomial of
    /// degree at most 4, otherwise numeric at quasi-random points of the
    /// sample box. The numeric test always runs so a witness can be named.
    pub fn validate(&self, opts: &ValidationOptions) -> Result<JacobiEvidence, PoissonError> {
        let points = opts.sample_box.halton_points(self.dim(), opts.samples);
        let mut worst = (0.0, None::<Vec<f64>>);
        let mut evaluated = 0;
        let mut first_error = None;
        for z in &points {
            match self.jacobi_residual_scaled(z) {
                Ok((residual, scale)) => {
                    evaluated += 1;
                    let relative = residual / (1.0 + scale);
                    if worst.1.is_none() || relative > worst.0 {
                        worst = (relative, Some(z.clone()));
                    }
                    if relative > opts.jacobi_tol {
                        return Err(PoissonError::Jacobi {
                            residual,
                            witness: z.clone(),
                        });
                    }
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        if let Some(zero_poly) = self.symbolic_jacobi() {
            return match zero_poly {
                Ok(()) => Ok(JacobiEvidence::Symbolic),
                Err((i, j, k)) => {
                    // The numeric pass missed it; report the worst box point.
                    let witness = worst.1.unwrap_or_else(|| vec![0.0; self.dim()]);
                    let residual = self.cyclic_sum(i, j, k).eval(&witness).unwrap_or(f64::NAN);
                    Err(PoissonError::Jacobi { residual, witness })
                }
            };
        }
        if evaluated == 0 {
            return Err(PoissonError::NoValidSamples(
                first_error.expect("at least one sample attempted"),
            ));
        }
        Ok(JacobiEvidence::Sampled {
            points: evaluated,
            worst_residual: worst.0,
        })
    }

    /// Jacobi test as a report: the worst relative cyclic-sum residual over
    /// quasi-random box points, plus a symbolic verdict when the entries are
    /// low-degree polynomials.
    pub fn jacobi_check(&self, opts: &ValidationOptions) -> CheckReport {
        let mut report = CheckReport::new("jacobi", opts.jacobi_tol);
        for z in opts.sample_box.halton_points(self.dim(), opts.samples) {
            match self.jacobi_residual_scaled(&z) {
                Ok((residual, scale)) => report.observe(residual / (1.0 + scale), &z),
                Err(e) => report.note(format!("skipped a sample: {e}")),
            }
        }
        if report.samples == 0 {
            report.fail("no sample could be evaluated", None);
        }
        match self.symbolic_jacobi() {
            Some(Ok(())) => report.note("cyclic sums vanish as polynomials"),
            Some(Err((i, j, k))) => {
                let names = self.chart.names();
                let note = format!(
                    "cyclic sum ({}, {}, {}) is a nonzero polynomial",
                    names[i], names[j], names[k]
                );
                if report.passed {
                    report.fail(note, None);
                } else {
                    report.note(note);
                }
            }
            None => {}
        }
        report
    }

    /// `Some(Ok)` when all cyclic sums are the zero polynomial, `Some(Err)`
    /// with the offending triple otherwise, `None` when the entries are not
    /// all low-degree polynomials.
    fn symbolic_jacobi(&self) -> Option<Result<(), (usize, usize, usize)>> {
        let n = self.dim();
        for e in self.tensor.iter().flatten() {
            Poly::from_expr(e, n, SYMBOLIC_JACOBI_DEGREE)?;
        }
        for (i, j, k) in triples(n) {
            let sum = Poly::from_expr(&self.cyclic_sum(i, j, k), n, 2 * SYMBOLIC_JACOBI_DEGREE)?;
            if !sum.is_zero() {
                return Some(Err((i, j, k)));
            }
        }
        Some(Ok(()))
    }

    fn cyclic_sum(&self, i: usize, j: usize, k: usize) -> Expr {
        let n = self.dim();
        Expr::sum((0..n).map(|l| {
            &self.tensor[i][l] * &self.derivs[l][j][k]
                + &self.tensor[j][l] * &self.derivs[l][k][i]
                + &self.tensor[k][l] * &self.derivs[l][i][j]
        }))
    }

    /// Numeric matrix `B(z)`.
    pub fn matrix_at(&self, z: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.tensor[i][j].eval(z)?;
            }
        }
        Ok(m)
    }

    /// `{f, g} = Σ_ij B^{ij} ∂_i f ∂_j g`, so `bracket(x^i, x^j) = B^{ij}`.
    pub fn bracket(&self, f: &Expr, g: &Expr) -> Result<Expr, PoissonError> {
        check_fits(f, self.dim())?;
        check_fits(g, self.dim())?;
        let n = self.dim();
        let df = f.gradient(n);
        let dg = g.gradient(n);
        Ok(self.pair_gradients(&df, &dg))
    }

    /// `Σ_ij B^{ij} a_i b_j` for symbolic covectors `a`, `b`.
    pub(crate) fn pair_gradients(&self, a: &[Expr], b: &[Expr]) -> Expr {
        let mut terms = Vec::new();
        for (i, ai) in a.iter().enumerate() {
            if ai.is_zero() {
                continue;
            }
            for (j, bj) in b.iter().enumerate() {
                if bj.is_zero() || self.tensor[i][j].is_zero() {
                    continue;
                }
                terms.push(ai * &self.tensor[i][j] * bj);
            }
        }
        Expr::sum(terms)
    }

    /// Numeric `{f, g}(z)` from gradients evaluated at `z`.
    pub fn bracket_value(&self, f: &Expr, g: &Expr, z: &[f64]) -> Result<f64, PoissonError> {
        let b = self.matrix_at(z)?;
        let df = gradient_at(f, self.dim(), z)?;
        let dg = gradient_at(g, self.dim(), z)?;
        Ok(df.dot(&(&b * dg)))
    }

    /// `X_h` with components `X_h^i = Σ_j B^{ij} ∂_j h`.
    pub fn hamiltonian_vector_field(&self, h: &Expr) -> Result<VectorFieldExpr, PoissonError> {
        check_fits(h, self.dim())?;
        let n = self.dim();
        let dh = h.gradient(n);
        let components = (0..n)
            .map(|i| {
                Expr::sum(
                    (0..n)
                        .filter(|&j| !dh[j].is_zero() && !self.tensor[i][j].is_zero())
                        .map(|j| &self.tensor[i][j] * &dh[j]),
                )
            })
            .collect();
        Ok(VectorFieldExpr { components })
    }

    /// `max_{i<j<k} |Σ_l B^{il} ∂_l B^{jk} + B^{jl} ∂_l B^{ki} + B^{kl} ∂_l B^{ij}|`
    /// evaluated at `z`.
    pub fn jacobi_residual(&self, z: &[f64]) -> Result<f64, EvalError> {
        self.jacobi_residual_scaled(z).map(|(r, _)| r)
    }

    /// Residual plus the scale `max|B| · max|∂B|` it should be compared with.
    fn jacobi_residual_scaled(&self, z: &[f64]) -> Result<(f64, f64), EvalError> {
        let n = self.dim();
        let b = self.matrix_at(z)?;
        let mut db = vec![DMatrix::zeros(n, n); n];
        for (l, m) in db.iter_mut().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = self.derivs[l][i][j].eval(z)?;
                }
            }
        }
        let mut worst: f64 = 0.0;
        for (i, j, k) in triples(n) {
            let mut s = 0.0;
            for (l, dl) in db.iter().enumerate() {
                s += b[(i, l)] * dl[(j, k)] + b[(j, l)] * dl[(k, i)] + b[(k, l)] * dl[(i, j)];
            }
            worst = worst.max(s.abs());
        }
        let scale = linalg::max_abs(&b) * db.iter().map(linalg::max_abs).fold(0.0, f64::max);
        Ok((worst, scale))
    }

    /// Casimir test: `max_i |{x^i, f}(z)| <= 1e-10` at every sample.
    pub fn is_casimir(&self, f: &Expr, samples: &[Vec<f64>]) -> Result<CheckReport, PoissonError> {
        self.is_casimir_with_tol(f, samples, BRACKET_TOL)
    }

    pub fn is_casimir_with_tol(&self, f: &Expr, samples: &[Vec<f64>], tol: f64) -> Result<CheckReport, PoissonError> {
        let field = self.hamiltonian_vector_field(f)?;
        let mut report = CheckReport::new("casimir", tol);
        for z in samples {
            match field.eval(z) {
                Ok(v) => report.observe(v.iter().fold(0.0, |a, x| a.max(x.abs())), z),
                Err(e) => report.fail(format!("evaluation failed: {e}"), Some(z)),
            }
        }
        Ok(report)
    }

    /// Numerical rank of `B(z)`: the dimension of the characteristic
    /// distribution (the symplectic leaf) through `z`.
    pub fn characteristic_rank(&self, z: &[f64]) -> Result<usize, EvalError> {
        self.characteristic_rank_with_tol(z, RANK_TOL)
    }

    pub fn characteristic_rank_with_tol(&self, z: &[f64], rel_tol: f64) -> Result<usize, EvalError> {
        Ok(linalg::rank(&self.matrix_at(z)?, rel_tol))
    }
}

fn triples(n: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).flat_map(move |j| (j + 1..n).map(move |k| (i, j, k))))
}

pub(crate) fn check_fits(e: &Expr, dim: usize) -> Result<(), PoissonError> {
    match e.max_var() {
        Some(index) if index >= dim => Err(PoissonError::ChartMismatch { index, dim }),
        _ => Ok(()),
    }
}

/// Gradient of `f` evaluated at `z`.
pub fn gradient_at(f: &Expr, dim: usize, z: &[f64]) -> Result<DVector<f64>, EvalError> {
    let mut out = DVector::zeros(dim);
    for (i, d) in f.gradient(dim).iter().enumerate() {
        out[i] = d.eval(z)?;
    }
    Ok(out)
}

/// A vector field given by one expression per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldExpr {
    components: Vec<Expr>,
}

impl VectorFieldExpr {
    pub fn new(components: Vec<Expr>) -> Self {
        VectorFieldExpr { components }
    }

    /// Constant coordinate field `∂/∂x^i` on a chart of dimension `dim`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let components = (0..dim)
            .map(|j| if j == i { Expr::one() } else { Expr::zero() })
            .collect();
        VectorFieldExpr { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.components.iter().map(|c| c.eval(z)).collect()
    }

    /// Directional derivative `X[f] = Σ_i X^i ∂_i f`.
    pub fn apply(&self, f: &Expr) -> Expr {
        let df = f.gradient(self.dim());
        Expr::sum(
            self.components
                .iter()
                .zip(df)
                .filter(|(c, d)| !c.is_zero() && !d.is_zero())
                .map(|(c, d)| c * d),
        )
    }
}

/// A smooth map between charts given by its component expressions over the
/// source coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothMap {
    source_dim: usize,
    components: Vec<Expr>,
}

impl SmoothMap {
    pub fn new(source: &Chart, target: &Chart, components: Vec<Expr>) -> Result<Self, PoissonError> {
        if components.len() != target.dim() {
            return Err(PoissonError::MapMismatch {
                source_dim: source.dim(),
                target_dim: components.len(),
                expected_source: source.dim(),
                expected_target: target.dim(),
            });
        }
        for c in &components {
            check_fits(c, source.dim())?;
        }
        Ok(SmoothMap {
            source_dim: source.dim(),
            components,
        })
    }

    pub fn identity(chart: &Chart) -> Self {
        SmoothMap {
            source_dim: chart.dim(),
            components: chart.coordinates(),
        }
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn target_dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    /// `g ∘ φ` for `g` over the target chart.
    pub fn pullback(&self, g: &Expr) -> Expr {
        g.substitute(&self.components)
    }

    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.components.iter().map(|c| c.eval(z)).collect()
    }

    /// Tangent map `Tφ(z)` as a target×source matrix, from exact gradients.
    pub fn jacobian_at(&self, z: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let mut j = DMatrix::zeros(self.target_dim(), self.source_dim);
        for (a, c) in self.components.iter().enumerate() {
            for (i, d) in c.gradient(self.source_dim).iter().enumerate() {
                j[(a, i)] = d.eval(z)?;
            }
        }
        Ok(j)
    }
}

/// Both faces of the Poisson-map test.
#[derive(Debug, Clone)]
pub struct PoissonMapReport {
    /// `{g, h}_2 ∘ φ` against `{g ∘ φ, h ∘ φ}_1`.
    pub bracket: CheckReport,
    /// `Tφ · X_{h∘φ}` against `X_h ∘ φ`.
    pub field: CheckReport,
}

impl PoissonMapReport {
    pub fn passed(&self) -> bool {
        self.bracket.passed && self.field.passed
    }
}

/// Test functions for map checks: every coordinate and every quadratic
/// monomial of the target chart.
fn test_functions(dim: usize) -> Vec<Expr> {
    monomials(dim, 2)
        .into_iter()
        .filter(|e| e.iter().sum::<u32>() > 0)
        .map(|e| Poly::monomial(e, 1.0).to_expr())
        .collect()
}

/// Checks that `φ: (M1, P1) → (M2, P2)` is a Poisson map at the samples.
///
/// The bracket face uses all coordinate pairs plus ten random pairs of
/// monomials of degree at most two; the field face uses the same
/// monomials as Hamiltonians.
pub fn check_poisson_map(
    map: &SmoothMap,
    source: &PoissonStructure,
    target: &PoissonStructure,
    samples: &[Vec<f64>],
    rng: &mut SampleRng,
) -> Result<PoissonMapReport, PoissonError> {
    if map.source_dim() != source.dim() || map.target_dim() != target.dim() {
        return Err(PoissonError::MapMismatch {
            source_dim: map.source_dim(),
            target_dim: map.target_dim(),
            expected_source: source.dim(),
            expected_target: target.dim(),
        });
    }
    let m = target.dim();
    let funcs = test_functions(m);
    let mut pairs: Vec<(Expr, Expr)> = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            pairs.push((Expr::var(a), Expr::var(b)));
        }
    }
    for _ in 0..10 {
        let g = funcs.choose(rng).expect("non-empty chart").clone();
        let h = funcs.choose(rng).expect("non-empty chart").clone();
        pairs.push((g, h));
    }

    let mut bracket = CheckReport::new("poisson map: bracket pullback", BRACKET_TOL);
    for (g, h) in &pairs {
        let pushed = map.pullback(&target.bracket(g, h)?);
        let pulled = source.bracket(&map.pullback(g), &map.pullback(h))?;
        for z in samples {
            match (pushed.eval(z), pulled.eval(z)) {
                (Ok(a), Ok(b)) => bracket.observe(a - b, z),
                (Err(e), _) | (_, Err(e)) => bracket.fail(format!("evaluation failed: {e}"), Some(z)),
            }
        }
    }

    let mut field = CheckReport::new("poisson map: tangent relation", BRACKET_TOL);
    for h in funcs.iter().take(m + 3) {
        let upstairs = source.hamiltonian_vector_field(&map.pullback(h))?;
        let downstairs = target.hamiltonian_vector_field(h)?;
        for z in samples {
            let outcome = (|| -> Result<f64, EvalError> {
                let tphi = map.jacobian_at(z)?;
                let lhs = &tphi * DVector::from_vec(upstairs.eval(z)?);
                let rhs = DVector::from_vec(downstairs.eval(&map.eval(z)?)?);
                Ok((lhs - rhs).amax())
            })();
            match outcome {
                Ok(r) => field.observe(r, z),
                Err(e) => field.fail(format!("evaluation failed: {e}"), Some(z)),
            }
        }
    }
    Ok(PoissonMapReport { bracket, field })
}

/// Runs [`check_poisson_map`] for every group element of a sampled action.
pub fn check_canonical_action(
    maps: &[SmoothMap],
    structure: &PoissonStructure,
    samples: &[Vec<f64>],
    rng: &mut SampleRng,
) -> Result<(bool, Vec<PoissonMapReport>), PoissonError> {
    let reports = maps
        .iter()
        .map(|m| check_poisson_map(m, structure, structure, samples, rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((reports.iter().all(PoissonMapReport::passed), reports))
}

/// Outcome of the pointwise Poisson-distribution test.
#[derive(Debug, Clone)]
pub struct DistributionReport {
    pub check: CheckReport,
    /// Dimension of the space of non-constant polynomials (degree <= 2)
    /// whose differentials annihilate the span at every sample.
    pub annihilating_functions: usize,
    /// Rank of the spanning fields at each sample.
    pub ranks: Vec<usize>,
    /// No non-constant annihilating function exists; the test is vacuous.
    pub vacuous: bool,
}

impl DistributionReport {
    pub fn rank_varies(&self) -> bool {
        self.ranks.windows(2).any(|w| w[0] != w[1])
    }
}

/// Pointwise evidence that `D = span(fields)` is a Poisson distribution:
/// for random `f, g` (degree <= 2) with `df|_D = 0` at the samples,
/// `d{f,g}` annihilates `D` at the samples within `1e-8`.
///
/// The annihilating functions come from the null space of the linear
/// conditions `⟨df(z), X(z)⟩ = 0` on monomial coefficients. A pass is
/// evidence at the samples, not a proof.
pub fn check_poisson_distribution(
    structure: &PoissonStructure,
    fields: &[VectorFieldExpr],
    samples: &[Vec<f64>],
    rng: &mut SampleRng,
) -> Result<DistributionReport, PoissonError> {
    const TOL: f64 = 1e-8;
    let n = structure.dim();
    let basis: Vec<Vec<u32>> = monomials(n, 2)
        .into_iter()
        .filter(|e| e.iter().sum::<u32>() > 0)
        .collect();
    let basis_grads: Vec<Vec<Expr>> = basis
        .iter()
        .map(|e| Poly::monomial(e.clone(), 1.0).to_expr().gradient(n))
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ranks = Vec::new();
    let mut field_values = Vec::new();
    for z in samples {
        let values: Vec<Vec<f64>> = fields.iter().map(|f| f.eval(z)).collect::<Result<_, _>>()?;
        let span = DMatrix::from_fn(n, values.len(), |i, j| values[j][i]);
        ranks.push(linalg::rank(&span, RANK_TOL));
        for x in &values {
            let mut row = Vec::with_capacity(basis.len());
            for grad in &basis_grads {
                let mut s = 0.0;
                for (g, xi) in grad.iter().zip(x) {
                    if !g.is_zero() {
                        s += g.eval(z)? * xi;
                    }
                }
                row.push(s);
            }
            rows.push(row);
        }
        field_values.push(values);
    }
    let conditions = DMatrix::from_fn(rows.len(), basis.len(), |r, c| rows[r][c]);
    let kernel = if rows.is_empty() {
        DMatrix::identity(basis.len(), basis.len())
    } else {
        linalg::null_space(&conditions, 1e-9)
    };

    let mut check = CheckReport::new("poisson distribution", TOL);
    let vacuous = kernel.ncols() == 0;
    if vacuous {
        check.note("only constants annihilate the distribution; vacuously consistent");
    } else {
        let combine = |rng: &mut SampleRng| -> Expr {
            let coeffs: Vec<f64> = (0..kernel.ncols()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut p = Poly::zero(n);
            for (m, exps) in basis.iter().enumerate() {
                let c: f64 = (0..kernel.ncols()).map(|k| kernel[(m, k)] * coeffs[k]).sum();
                p = &p + &Poly::monomial(exps.clone(), c);
            }
            p.to_expr()
        };
        for _ in 0..6 {
            let f = combine(rng);
            let g = combine(rng);
            let fg = structure.bracket(&f, &g)?;
            let grad = fg.gradient(n);
            for (z, values) in samples.iter().zip(&field_values) {
                let d: Vec<f64> = grad.iter().map(|e| e.eval(z)).collect::<Result<_, _>>()?;
                for x in values {
                    let pairing: f64 = d.iter().zip(x).map(|(a, b)| a * b).sum();
                    check.observe(pairing, z);
                }
            }
        }
    }
    let report = DistributionReport {
        check,
        annihilating_functions: kernel.ncols(),
        ranks,
        vacuous,
    };
    let mut report = report;
    if report.rank_varies() {
        report
            .check
            .note("degenerate span: the rank of the fields varies across samples");
    }
    Ok(report)
}
