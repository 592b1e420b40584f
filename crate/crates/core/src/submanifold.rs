//! Regular level sets `S = F^{-1}(0)` of a constraint list and their
//! position relative to the Poisson structure.
//!
//! Everything here is sample based: points of `S` are found by Newton
//! iteration, and classification reports per-sample evidence with witnesses.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr, Poly};
use crate::linalg::{self, RANK_TOL};
use crate::poisson::{check_fits, PoissonError, PoissonStructure, VectorFieldExpr};
use crate::report::CheckReport;
use crate::sampling::{random_polynomial, SampleRng};

/// Constraint residual an accepted surface sample must satisfy.
pub const SURFACE_TOL: f64 = 1e-12;
/// Smallest singular value of the constraint Jacobian, relative to
/// `max(1, largest)`, below which a point counts as non-regular.
pub const REGULARITY_TOL: f64 = 1e-8;
/// Vanishing threshold for constraint brackets.
pub const BRACKET_VANISH_TOL: f64 = 1e-10;
/// `C(s)` with a larger condition number is never called cosymplectic.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubmanifoldError {
    #[error("{k} constraints exceed the ambient dimension {n}")]
    TooManyConstraints { k: usize, n: usize },
    #[error("seed has {got} coordinates, expected {expected}")]
    SeedDimension { expected: usize, got: usize },
    #[error("Newton iteration did not converge from any seed (best residual {best_residual:.3e} at {best_point:?})")]
    NoConvergence { best_residual: f64, best_point: Vec<f64> },
    #[error(
        "constraints are not regular at {point:?}: smallest Jacobian singular value {smallest_singular_value:.3e}"
    )]
    RankDeficient {
        point: Vec<f64>,
        smallest_singular_value: f64,
    },
    #[error("point {point:?} is off the surface (residual {residual:.3e})")]
    OffSurface { point: Vec<f64>, residual: f64 },
    #[error("no surface samples supplied")]
    EmptySamples,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Newton projection settings.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Iteration stops once `max_a |F^a| <= tolerance`.
    pub tolerance: f64,
    /// Half-width of the uniform perturbation applied to seeds.
    pub perturbation: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iterations: 50,
            tolerance: 1e-13,
            perturbation: 0.3,
        }
    }
}

/// An ordered list of constraint functions over a Poisson chart, together
/// with seed points for root finding.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    poisson: Arc<PoissonStructure>,
    constraints: Vec<Expr>,
    gradients: Vec<Vec<Expr>>,
    /// `brackets[i][j] = {F^i, F^j}`
    brackets: Vec<Vec<Expr>>,
    seeds: Vec<Vec<f64>>,
}

/// A point of `S` with its tangent and conormal data.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSample {
    pub point: Vec<f64>,
    /// Orthonormal columns spanning `T_sS` (n × (n-k)).
    pub tangent: DMatrix<f64>,
    /// Rows `dF^a(s)` spanning `(T_sS)°` (k × n).
    pub conormal: DMatrix<f64>,
}

impl ConstraintSet {
    pub fn new(
        poisson: Arc<PoissonStructure>,
        constraints: Vec<Expr>,
        seeds: Vec<Vec<f64>>,
    ) -> Result<Self, SubmanifoldError> {
        let n = poisson.dim();
        let k = constraints.len();
        if k > n {
            return Err(SubmanifoldError::TooManyConstraints { k, n });
        }
        for c in &constraints {
            check_fits(c, n)?;
        }
        for s in &seeds {
            if s.len() != n {
                return Err(SubmanifoldError::SeedDimension {
                    expected: n,
                    got: s.len(),
                });
            }
        }
        let gradients: Vec<Vec<Expr>> = constraints.iter().map(|c| c.gradient(n)).collect();
        let brackets = gradients
            .iter()
            .map(|gi| gradients.iter().map(|gj| poisson.pair_gradients(gi, gj)).collect())
            .collect();
        Ok(ConstraintSet {
            poisson,
            constraints,
            gradients,
            brackets,
            seeds,
        })
    }

    pub fn poisson(&self) -> &Arc<PoissonStructure> {
        &self.poisson
    }

    pub fn constraints(&self) -> &[Expr] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.poisson.dim()
    }

    pub fn seeds(&self) -> &[Vec<f64>] {
        &self.seeds
    }

    /// Symbolic `{F^i, F^j}`.
    pub fn bracket_expr(&self, i: usize, j: usize) -> &Expr {
        &self.brackets[i][j]
    }

    pub fn values(&self, z: &[f64]) -> Result<DVector<f64>, EvalError> {
        let v: Vec<f64> = self.constraints.iter().map(|c| c.eval(z)).collect::<Result<_, _>>()?;
        Ok(DVector::from_vec(v))
    }

    /// `max_a |F^a(z)|`.
    pub fn residual(&self, z: &[f64]) -> Result<f64, EvalError> {
        Ok(self.values(z)?.amax())
    }

    /// Constraint Jacobian (k × n) at `z`.
    pub fn jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let (k, n) = (self.len(), self.dim());
        let mut j = DMatrix::zeros(k, n);
        for a in 0..k {
            for i in 0..n {
                if !self.gradients[a][i].is_zero() {
                    j[(a, i)] = self.gradients[a][i].eval(z)?;
                }
            }
        }
        Ok(j)
    }

    /// Newton iteration with pseudo-inverse steps from `z0`. Returns the
    /// final point and residual whether or not the tolerance was reached.
    pub fn project(&self, z0: &[f64], opts: &NewtonOptions) -> Result<(Vec<f64>, f64), EvalError> {
        let mut z = DVector::from_column_slice(z0);
        let mut f = self.values(z.as_slice())?;
        // Past the tolerance, keep stepping while the residual still shrinks
        // quickly. Regular roots stall at once; degenerate roots converge
        // linearly and drift to where the Jacobian visibly collapses.
        for _ in 0..opts.max_iterations {
            let current = f.amax();
            if current == 0.0 {
                break;
            }
            let j = self.jacobian(z.as_slice())?;
            let step = j
                .svd(true, true)
                .solve(&f, f64::MIN_POSITIVE)
                .expect("both singular bases requested");
            let next = &z - step;
            let f_next = self.values(next.as_slice())?;
            if current <= opts.tolerance && !(f_next.amax() < 0.5 * current) {
                break;
            }
            z = next;
            f = f_next;
        }
        let residual = f.amax();
        Ok((z.as_slice().to_vec(), residual))
    }

    /// Builds the sample data at a point of `S`, checking residual and
    /// regularity.
    pub fn sample_at(&self, point: &[f64]) -> Result<SurfaceSample, SubmanifoldError> {
        let residual = self.residual(point)?;
        if residual > SURFACE_TOL {
            return Err(SubmanifoldError::OffSurface {
                point: point.to_vec(),
                residual,
            });
        }
        let conormal = self.jacobian(point)?;
        let s = linalg::singular_values(&conormal);
        if let (Some(&hi), Some(&lo)) = (s.first(), s.last()) {
            if s.len() < self.len() || lo <= REGULARITY_TOL * hi.max(1.0) {
                return Err(SubmanifoldError::RankDeficient {
                    point: point.to_vec(),
                    smallest_singular_value: if s.len() < self.len() { 0.0 } else { lo },
                });
            }
        }
        let tangent = if self.is_empty() {
            DMatrix::identity(self.dim(), self.dim())
        } else {
            linalg::coordinate_aligned_basis(&linalg::null_space(&conormal, RANK_TOL))
        };
        Ok(SurfaceSample {
            point: point.to_vec(),
            tangent,
            conormal,
        })
    }

    /// Finds `count` regular points of `S` by Newton iteration from
    /// perturbed seeds, cycling through the seeds.
    pub fn sample_surface(&self, count: usize, rng: &mut SampleRng) -> Result<Vec<SurfaceSample>, SubmanifoldError> {
        self.sample_surface_with(count, rng, &NewtonOptions::default())
    }

    pub fn sample_surface_with(
        &self,
        count: usize,
        rng: &mut SampleRng,
        opts: &NewtonOptions,
    ) -> Result<Vec<SurfaceSample>, SubmanifoldError> {
        let n = self.dim();
        let seeds: Vec<Vec<f64>> = if self.seeds.is_empty() {
            vec![vec![0.0; n]]
        } else {
            self.seeds.clone()
        };
        let mut out = Vec::with_capacity(count);
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut deficiency = None;
        let max_attempts = 20 * count.max(1);
        for attempt in 0..max_attempts {
            if out.len() == count {
                break;
            }
            let seed = &seeds[attempt % seeds.len()];
            let start: Vec<f64> = seed
                .iter()
                .map(|v| v + rng.random_range(-opts.perturbation..=opts.perturbation))
                .collect();
            let Ok((z, residual)) = self.project(&start, opts) else {
                continue;
            };
            if best.as_ref().is_none_or(|(r, _)| residual < *r) {
                best = Some((residual, z.clone()));
            }
            if residual > SURFACE_TOL {
                continue;
            }
            match self.sample_at(&z) {
                Ok(s) => out.push(s),
                Err(e @ SubmanifoldError::RankDeficient { .. }) => {
                    deficiency.get_or_insert(e);
                }
                Err(_) => {}
            }
        }
        if out.is_empty() {
            if let Some(e) = deficiency {
                return Err(e);
            }
            let (best_residual, best_point) = best.unwrap_or((f64::INFINITY, Vec::new()));
            return Err(SubmanifoldError::NoConvergence {
                best_residual,
                best_point,
            });
        }
        Ok(out)
    }

    /// `C(s)` with entries `{F^i, F^j}(s)`.
    pub fn constraint_matrix(&self, s: &SurfaceSample) -> Result<DMatrix<f64>, EvalError> {
        self.constraint_matrix_at(&s.point)
    }

    pub fn constraint_matrix_at(&self, z: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let k = self.len();
        let mut c = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                c[(i, j)] = self.brackets[i][j].eval(z)?;
            }
        }
        Ok(c)
    }

    /// True when every constraint bracket expands to the zero polynomial:
    /// the constraints are in involution everywhere, not just at samples.
    pub fn involution_proven(&self) -> bool {
        let n = self.dim();
        self.brackets
            .iter()
            .flatten()
            .all(|b| Poly::from_expr(b, n, 8).is_some_and(|p| p.is_zero()))
    }

    /// Hamiltonian vector fields of the constraints; they span
    /// `B^♯((TS)°)` along `S`.
    pub fn constraint_fields(&self) -> Result<Vec<VectorFieldExpr>, PoissonError> {
        self.constraints
            .iter()
            .map(|c| self.poisson.hamiltonian_vector_field(c))
            .collect()
    }

    /// Classifies `S` from per-sample evidence.
    pub fn classify(&self, samples: &[SurfaceSample]) -> Result<Classification, SubmanifoldError> {
        if samples.is_empty() {
            return Err(SubmanifoldError::EmptySamples);
        }
        let mut evidence = Vec::with_capacity(samples.len());
        let mut warnings = Vec::new();
        for s in samples {
            let e = self.sample_evidence(s)?;
            if e.condition.is_finite() && e.condition > MAX_CONDITION && e.kind == SubmanifoldKind::Mixed {
                warnings.push(format!(
                    "C(s) is invertible but ill-conditioned (condition {:.3e}) at {:?}; classified mixed",
                    e.condition, s.point
                ));
            }
            if e.quasi_poisson && e.kind != SubmanifoldKind::PoissonSubmanifold {
                warnings.push(format!(
                    "sampled Hamiltonian fields are tangent at {:?} but the Poisson-submanifold test fails",
                    s.point
                ));
            }
            evidence.push(e);
        }
        let first = evidence[0].kind;
        let kind = if evidence.iter().all(|e| e.kind == first) {
            first
        } else if evidence.iter().all(|e| {
            matches!(
                e.kind,
                SubmanifoldKind::Coisotropic | SubmanifoldKind::PoissonSubmanifold
            )
        }) {
            SubmanifoldKind::Coisotropic
        } else {
            warnings.push("sample-dependent classification".into());
            SubmanifoldKind::Mixed
        };
        let decomposition = if kind == SubmanifoldKind::Cosymplectic {
            Some(
                samples
                    .iter()
                    .map(|s| self.cosymplectic_checks(s))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        } else {
            None
        };
        Ok(Classification {
            kind,
            involution_proven: kind != SubmanifoldKind::Cosymplectic && self.involution_proven(),
            evidence,
            decomposition,
            warnings,
        })
    }

    fn sample_evidence(&self, s: &SurfaceSample) -> Result<SampleEvidence, SubmanifoldError> {
        let n = self.dim();
        let b = self.poisson.matrix_at(&s.point)?;
        let df = &s.conormal;
        let b_scale = linalg::max_abs(&b);
        let df_scale = df.row_iter().map(|r| r.norm()).fold(0.0, f64::max);

        // Image of B^♯ inside T_sS  <=>  dF · B = 0.
        let poisson_residual = linalg::max_abs(&(df * &b));
        let poisson_ok = poisson_residual <= BRACKET_VANISH_TOL * (df_scale * b_scale).max(1.0);

        let c = self.constraint_matrix(s)?;
        let c_max = linalg::max_abs(&c);
        let coisotropic = c_max <= BRACKET_VANISH_TOL * (df_scale * df_scale * b_scale).max(1.0);
        let c_rank = if coisotropic { 0 } else { linalg::rank(&c, RANK_TOL) };
        let condition = if self.is_empty() {
            1.0
        } else {
            linalg::condition_number(&c)
        };

        let image = linalg::column_space(&b, RANK_TOL);
        let transversality_rank = linalg::rank(&linalg::hstack(&[s.tangent.clone(), image]), RANK_TOL);
        let cosymplectic = !self.is_empty() && !coisotropic && condition <= MAX_CONDITION && transversality_rank == n;

        // Sampled quasi-Poisson surrogate: random covectors df, test B df ∈ T_sS.
        let mut quasi_poisson = true;
        for t in 0..5 {
            let alpha = DVector::from_fn(n, |i, _| ((i * 7 + t * 13) % 11) as f64 / 5.0 - 1.0);
            let v = &b * alpha;
            let leak = (df * v).amax();
            if leak > BRACKET_VANISH_TOL * (df_scale * b_scale).max(1.0) * (n as f64) {
                quasi_poisson = false;
            }
        }

        let kind = if poisson_ok {
            SubmanifoldKind::PoissonSubmanifold
        } else if coisotropic {
            SubmanifoldKind::Coisotropic
        } else if cosymplectic {
            SubmanifoldKind::Cosymplectic
        } else {
            SubmanifoldKind::Mixed
        };
        Ok(SampleEvidence {
            point: s.point.clone(),
            kind,
            c_max_abs: c_max,
            c_rank,
            condition,
            transversality_rank,
            poisson_residual,
            quasi_poisson,
        })
    }

    /// Pointwise checks of the cosymplectic decomposition at `s`.
    pub fn cosymplectic_checks(&self, s: &SurfaceSample) -> Result<CosymplecticChecks, SubmanifoldError> {
        let n = self.dim();
        let b = self.poisson.matrix_at(&s.point)?;
        // Columns B^♯ dF^a spanning B^♯((T_sS)°).
        let image = &b * s.conormal.transpose();
        let sv = linalg::singular_values(&image);
        let scale = linalg::max_abs(&b).max(f64::MIN_POSITIVE)
            * s.conormal
                .row_iter()
                .map(|r| r.norm())
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE);
        let conormal_kernel_gap = sv.last().copied().unwrap_or(0.0) / scale;
        let decomposition_rank = linalg::rank(&linalg::hstack(&[image.clone(), s.tangent.clone()]), RANK_TOL);
        let leaf = linalg::column_space(&b, RANK_TOL);
        let transversality_rank = linalg::rank(&linalg::hstack(&[s.tangent.clone(), leaf]), RANK_TOL);
        Ok(CosymplecticChecks {
            point: s.point.clone(),
            conormal_kernel_gap,
            decomposition_rank,
            transversality_rank,
            dim: n,
        })
    }

    /// Independent tests of the coisotropic characterizations at the
    /// samples. Refuses unless [`classify`](Self::classify) reports a
    /// coisotropic (or Poisson) submanifold.
    pub fn coisotropic_equivalences_test(
        &self,
        samples: &[SurfaceSample],
        rng: &mut SampleRng,
    ) -> Result<CoisotropicReport, SubmanifoldError> {
        const TOL: f64 = 1e-9;
        let class = self.classify(samples)?;
        if !matches!(
            class.kind,
            SubmanifoldKind::Coisotropic | SubmanifoldKind::PoissonSubmanifold
        ) {
            return Err(SubmanifoldError::Precondition(format!(
                "coisotropic equivalences need a coisotropic submanifold, classification is {}",
                class.kind
            )));
        }
        let n = self.dim();
        let mut matrix = CheckReport::new("(i) constraint brackets vanish on S", BRACKET_VANISH_TOL);
        for s in samples {
            matrix.observe(linalg::max_abs(&self.constraint_matrix(s)?), &s.point);
        }

        let vanishing = |rng: &mut SampleRng| -> Expr {
            Expr::sum(self.constraints.iter().map(|f| random_polynomial(rng, n, 2) * f))
        };
        let mut tangency = CheckReport::new("(ii) X_f tangent to S for f vanishing on S", TOL);
        let mut involution = CheckReport::new("(iv) functions vanishing on S are in involution", TOL);
        for _ in 0..5 {
            let f = vanishing(rng);
            let g = vanishing(rng);
            let xf = self.poisson.hamiltonian_vector_field(&f)?;
            let fg = self.poisson.bracket(&f, &g)?;
            for s in samples {
                let v = DVector::from_vec(xf.eval(&s.point)?);
                tangency.observe((&s.conormal * v).amax(), &s.point);
                involution.observe(fg.eval(&s.point)?, &s.point);
            }
        }
        let agree = matrix.passed == tangency.passed && tangency.passed == involution.passed;
        Ok(CoisotropicReport {
            matrix,
            tangency,
            involution,
            agree,
        })
    }

    /// Pointwise reducibility criterion `B^♯(D°) ⊂ TS + D` for a
    /// distribution spanned by `fields`.
    pub fn regular_reducibility_check(
        &self,
        fields: &[VectorFieldExpr],
        samples: &[SurfaceSample],
    ) -> Result<ReducibilityReport, SubmanifoldError> {
        const TOL: f64 = 1e-9;
        let n = self.dim();
        let mut check = CheckReport::new("B#(D°) ⊂ TS + D", TOL);
        let mut ranks = Vec::with_capacity(samples.len());
        let mut members = Vec::with_capacity(samples.len());
        for s in samples {
            let b = self.poisson.matrix_at(&s.point)?;
            let values: Vec<Vec<f64>> = fields.iter().map(|f| f.eval(&s.point)).collect::<Result<_, _>>()?;
            let d = DMatrix::from_fn(n, values.len(), |i, j| values[j][i]);
            ranks.push(linalg::rank(&d, RANK_TOL));
            let annihilator = linalg::null_space(&d.transpose(), RANK_TOL);
            let image = &b * &annihilator;
            let target = linalg::column_space(&linalg::hstack(&[s.tangent.clone(), d]), RANK_TOL);
            let leak = &image - &target * (target.transpose() * &image);
            let residual = linalg::max_abs(&leak) / linalg::max_abs(&b).max(1.0);
            let base_rank = target.ncols();
            let with_image = linalg::rank(&linalg::hstack(&[target, image]), RANK_TOL);
            members.push(with_image == base_rank);
            check.observe(residual, &s.point);
        }
        let rank_varies = ranks.windows(2).any(|w| w[0] != w[1]);
        if rank_varies {
            check.note("distribution rank varies across samples");
        }
        let reducible = check.passed && members.iter().all(|&m| m);
        Ok(ReducibilityReport {
            check,
            reducible,
            ranks,
            rank_varies,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubmanifoldKind {
    Coisotropic,
    Cosymplectic,
    PoissonSubmanifold,
    Mixed,
}

impl fmt::Display for SubmanifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubmanifoldKind::Coisotropic => "coisotropic",
            SubmanifoldKind::Cosymplectic => "cosymplectic",
            SubmanifoldKind::PoissonSubmanifold => "poisson-submanifold",
            SubmanifoldKind::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleEvidence {
    pub point: Vec<f64>,
    pub kind: SubmanifoldKind,
    /// Largest `|C^{ij}(s)|`.
    pub c_max_abs: f64,
    pub c_rank: usize,
    pub condition: f64,
    /// `rank(T_sS + im B^♯(s))`.
    pub transversality_rank: usize,
    /// `max |dF · B(s)|`; zero when the leaf through s lies in S.
    pub poisson_residual: f64,
    /// Sampled Hamiltonian fields were tangent to S. A surrogate for the
    /// quasi-Poisson property, which quantifies over all local functions.
    pub quasi_poisson: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CosymplecticChecks {
    pub point: Vec<f64>,
    /// Smallest singular value of `B(s) dFᵀ`, relative to `|B| |dF|`.
    /// Positive means `(T_sS)° ∩ ker B^♯(s) = {0}`.
    pub conormal_kernel_gap: f64,
    /// `rank[B^♯((T_sS)°) | T_sS]`; equals `dim` for a direct sum.
    pub decomposition_rank: usize,
    /// `rank(T_sS + im B^♯(s))`; equals `dim` for transverse leaves.
    pub transversality_rank: usize,
    pub dim: usize,
}

impl CosymplecticChecks {
    pub fn passed(&self) -> bool {
        self.conormal_kernel_gap > 1e-10 && self.decomposition_rank == self.dim && self.transversality_rank == self.dim
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub kind: SubmanifoldKind,
    /// Constraint brackets vanish identically as polynomials.
    pub involution_proven: bool,
    pub evidence: Vec<SampleEvidence>,
    /// Present for cosymplectic classifications.
    pub decomposition: Option<Vec<CosymplecticChecks>>,
    pub warnings: Vec<String>,
}

impl Classification {
    pub fn worst_condition(&self) -> f64 {
        self.evidence.iter().map(|e| e.condition).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct CoisotropicReport {
    pub matrix: CheckReport,
    pub tangency: CheckReport,
    pub involution: CheckReport,
    /// All three characterizations gave the same verdict.
    pub agree: bool,
}

impl CoisotropicReport {
    pub fn passed(&self) -> bool {
        self.agree && self.matrix.passed
    }
}

#[derive(Debug, Clone)]
pub struct ReducibilityReport {
    pub check: CheckReport,
    pub reducible: bool,
    pub ranks: Vec<usize>,
    pub rank_varies: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::sampling::rng;

    #[test]
    fn linear_constraints_sample_exactly() {
        let c = fixtures::flat_second_class();
        let samples = c.sample_surface(10, &mut rng(1)).unwrap();
        assert_eq!(samples.len(), 10);
        for s in &samples {
            assert!(s.point[1].abs() <= 1e-15 && s.point[3].abs() <= 1e-15);
            assert_eq!(s.tangent.ncols(), 2);
            assert!((&s.conormal * &s.tangent).amax() <= 1e-12);
        }
    }

    #[test]
    fn sphere_samples() {
        let c = fixtures::unit_sphere();
        let samples = c.sample_surface(20, &mut rng(2)).unwrap();
        for s in &samples {
            let r2: f64 = s.point.iter().map(|v| v * v).sum();
            assert!((r2 - 1.0).abs() <= 1e-12);
            assert_eq!(s.tangent.ncols() + s.conormal.nrows(), 3);
            assert!((&s.conormal * &s.tangent).amax() <= 1e-12);
        }
    }

    #[test]
    fn non_regular_constraint_is_rejected() {
        let p = Arc::new(fixtures::canonical(2));
        let c = ConstraintSet::new(p, vec![Expr::var(0).powi(2)], vec![vec![0.0; 4]]).unwrap();
        assert!(matches!(
            c.sample_surface(3, &mut rng(3)),
            Err(SubmanifoldError::RankDeficient { .. })
        ));
    }

    #[test]
    fn unreachable_level_set_reports_best_residual() {
        let p = Arc::new(fixtures::canonical(1));
        let f = Expr::var(0).powi(2) + Expr::var(1).powi(2) + 1.0;
        let c = ConstraintSet::new(p, vec![f], vec![vec![0.5, 0.5]]).unwrap();
        match c.sample_surface(2, &mut rng(3)) {
            Err(SubmanifoldError::NoConvergence { best_residual, .. }) => assert!(best_residual >= 1.0),
            other => panic!("expected no convergence, got {other:?}"),
        }
    }

    #[test]
    fn constraint_matrices() {
        let second = fixtures::flat_second_class();
        let s = second.sample_surface(1, &mut rng(4)).unwrap().remove(0);
        let c = second.constraint_matrix(&s).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        let first = fixtures::involutive_pair();
        let s = first.sample_surface(1, &mut rng(4)).unwrap().remove(0);
        assert_eq!(first.constraint_matrix(&s).unwrap(), DMatrix::zeros(2, 2));
        let hyper = fixtures::hypersurface_q2();
        let s = hyper.sample_surface(1, &mut rng(4)).unwrap().remove(0);
        assert_eq!(hyper.constraint_matrix(&s).unwrap(), DMatrix::zeros(1, 1));
    }

    #[test]
    fn classification_examples() {
        let cases = [
            (fixtures::flat_second_class(), SubmanifoldKind::Cosymplectic),
            (fixtures::involutive_pair(), SubmanifoldKind::Coisotropic),
            (fixtures::hypersurface_q2(), SubmanifoldKind::Coisotropic),
            (fixtures::unit_sphere(), SubmanifoldKind::PoissonSubmanifold),
            (fixtures::curved_second_class(), SubmanifoldKind::Cosymplectic),
        ];
        for (c, expected) in cases {
            let samples = c.sample_surface(20, &mut rng(5)).unwrap();
            let class = c.classify(&samples).unwrap();
            assert_eq!(class.kind, expected, "{:?}", class.warnings);
            if expected == SubmanifoldKind::Cosymplectic {
                assert!(class.decomposition.unwrap().iter().all(CosymplecticChecks::passed));
            }
        }
        assert!(fixtures::involutive_pair().involution_proven());
        assert!(!fixtures::flat_second_class().involution_proven());
        assert!(matches!(
            fixtures::flat_second_class().classify(&[]),
            Err(SubmanifoldError::EmptySamples)
        ));
    }

    #[test]
    fn classification_is_scale_invariant() {
        for (base, factor) in [(fixtures::flat_second_class(), -3.0), (fixtures::unit_sphere(), 1e-3)] {
            let scaled = ConstraintSet::new(
                base.poisson().clone(),
                base.constraints().iter().map(|f| factor * f).collect(),
                base.seeds().to_vec(),
            )
            .unwrap();
            let a = base.classify(&base.sample_surface(10, &mut rng(6)).unwrap()).unwrap();
            let b = scaled
                .classify(&scaled.sample_surface(10, &mut rng(6)).unwrap())
                .unwrap();
            assert_eq!(a.kind, b.kind);
        }
    }

    #[test]
    fn ill_conditioned_brackets_are_mixed() {
        // {q2, ε p2} = ε: invertible but with a condition number of 1/ε
        // against the unit entry coupling q1 and p1.
        let p = Arc::new(fixtures::canonical(2));
        let v = Expr::var;
        let c = ConstraintSet::new(p, vec![v(1), 1e-9 * v(3) + v(0), v(2)], vec![vec![0.0; 4]]).unwrap();
        let samples = c.sample_surface(3, &mut rng(7)).unwrap();
        let class = c.classify(&samples).unwrap();
        assert_eq!(class.kind, SubmanifoldKind::Mixed);
    }

    #[test]
    fn coisotropic_equivalences() {
        for c in [fixtures::hypersurface_q2(), fixtures::involutive_pair()] {
            let samples = c.sample_surface(10, &mut rng(8)).unwrap();
            let rep = c.coisotropic_equivalences_test(&samples, &mut rng(9)).unwrap();
            assert!(rep.passed(), "{}\n{}\n{}", rep.matrix, rep.tangency, rep.involution);
            assert!(rep.tangency.passed && rep.involution.passed);
        }
        let c = fixtures::flat_second_class();
        let samples = c.sample_surface(5, &mut rng(8)).unwrap();
        assert!(matches!(
            c.coisotropic_equivalences_test(&samples, &mut rng(9)),
            Err(SubmanifoldError::Precondition(_))
        ));
    }

    #[test]
    fn reducibility_examples() {
        for c in [
            fixtures::involutive_pair(),
            fixtures::flat_second_class(),
            fixtures::curved_second_class(),
        ] {
            let samples = c.sample_surface(10, &mut rng(10)).unwrap();
            let d = c.constraint_fields().unwrap();
            let rep = c.regular_reducibility_check(&d, &samples).unwrap();
            assert!(rep.reducible, "{}", rep.check);
            assert!(!rep.rank_varies);
        }
        let c = fixtures::hypersurface_q2();
        let samples = c.sample_surface(10, &mut rng(10)).unwrap();
        let d = [VectorFieldExpr::coordinate(4, 0)];
        let rep = c.regular_reducibility_check(&d, &samples).unwrap();
        assert!(!rep.reducible);
        assert!(rep.check.worst_residual > 0.5);
    }
}
