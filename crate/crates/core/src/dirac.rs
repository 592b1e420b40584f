//! Dirac bracket on a cosymplectic level set `S = {ψ = 0}`:
//!
//! ```text
//! {F, G}_S = {F, G} - Σ_ij {F, ψ^i} C_ij {ψ^j, G}
//! X^S_F    = X_F    - Σ_ij {F, ψ^i} C_ij X_{ψ^j}
//! ```
//!
//! where `C_ij` are the entries of `C⁻¹` and `C^{ij} = {ψ^i, ψ^j}`. `F` and
//! `G` are arbitrary ambient extensions. The projected tensor `π_S B π_Sᵀ`
//! is computed independently from the splitting
//! `T_sM = B^♯((T_sS)°) ⊕ T_sS`, which gives a cross-check of the formula.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::expr::{simplify, EvalError, Expr};
use crate::linalg::{self, RANK_TOL};
use crate::poisson::{check_fits, gradient_at, PoissonError, PoissonStructure, VectorFieldExpr};
use crate::report::CheckReport;
use crate::sampling::{random_polynomial, SampleRng};
use crate::submanifold::{Classification, ConstraintSet, SubmanifoldError, SubmanifoldKind, SurfaceSample};

/// Row-scaled determinant of `C(s)` below which `C(s)` counts as singular.
pub const SINGULAR_DET_TOL: f64 = 1e-12;
/// Largest constraint count for the symbolic inverse of `C`.
pub const MAX_SYMBOLIC_CONSTRAINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiracError {
    #[error("constraint set is {0}, not cosymplectic")]
    NotCosymplectic(SubmanifoldKind),
    #[error("odd number of constraints ({0}); C cannot be invertible")]
    OddConstraintCount(usize),
    #[error("C is singular at {point:?} (row-scaled determinant {det:.3e})")]
    SingularConstraintMatrix { point: Vec<f64>, det: f64 },
    #[error("symbolic Dirac brackets are limited to {MAX_SYMBOLIC_CONSTRAINTS} constraints (have {0}); evaluate pointwise instead")]
    TooManyForSymbolic(usize),
    #[error("splitting T_sM = B#((TS)°) + TS is rank deficient at {point:?}")]
    DecompositionRankDeficient { point: Vec<f64> },
    #[error(transparent)]
    Submanifold(#[from] SubmanifoldError),
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A cosymplectic constraint set with its cached Dirac data.
#[derive(Debug, Clone)]
pub struct DiracContext {
    constraints: ConstraintSet,
    classification: Classification,
    /// `{ψ^i, ψ^j}` with the antisymmetry made exact.
    c_entries: Vec<Vec<Expr>>,
    /// `(det C, adj C)` when `k <= 4`.
    symbolic: Option<(Expr, Vec<Vec<Expr>>)>,
    constraint_fields: Vec<VectorFieldExpr>,
}

impl DiracContext {
    /// Validates the cosymplectic premise at `samples` and builds the
    /// symbolic caches.
    pub fn new(constraints: ConstraintSet, samples: &[SurfaceSample]) -> Result<Self, DiracError> {
        let classification = constraints.classify(samples)?;
        if classification.kind != SubmanifoldKind::Cosymplectic {
            return Err(DiracError::NotCosymplectic(classification.kind));
        }
        let k = constraints.len();
        if k % 2 == 1 {
            return Err(DiracError::OddConstraintCount(k));
        }
        let mut c_entries = vec![vec![Expr::zero(); k]; k];
        for i in 0..k {
            for j in i + 1..k {
                let e = constraints.bracket_expr(i, j).clone();
                c_entries[j][i] = -&e;
                c_entries[i][j] = e;
            }
        }
        let symbolic = (k <= MAX_SYMBOLIC_CONSTRAINTS).then(|| {
            let det = simplify(&determinant(&c_entries));
            (det, adjugate(&c_entries))
        });
        let constraint_fields = constraints.constraint_fields()?;
        let ctx = DiracContext {
            constraints,
            classification,
            c_entries,
            symbolic,
            constraint_fields,
        };
        for s in samples {
            ctx.c_inverse_at(&s.point)?;
        }
        Ok(ctx)
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn poisson(&self) -> &Arc<PoissonStructure> {
        self.constraints.poisson()
    }

    pub fn classification(&self) -> &Classification {
        &self.classification
    }

    pub fn has_symbolic_inverse(&self) -> bool {
        self.symbolic.is_some()
    }

    fn dim(&self) -> usize {
        self.constraints.dim()
    }

    /// `C(z)`.
    pub fn c_matrix_at(&self, z: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let k = self.constraints.len();
        let mut c = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i + 1..k {
                let v = self.c_entries[i][j].eval(z)?;
                c[(i, j)] = v;
                c[(j, i)] = -v;
            }
        }
        Ok(c)
    }

    /// `C(z)⁻¹` by LU, refusing near-singular matrices.
    pub fn c_inverse_at(&self, z: &[f64]) -> Result<DMatrix<f64>, DiracError> {
        let c = self.c_matrix_at(z)?;
        let det = linalg::row_scaled_det(&c);
        if !(det.abs() > SINGULAR_DET_TOL) {
            return Err(DiracError::SingularConstraintMatrix { point: z.to_vec(), det });
        }
        linalg::inverse(&c).ok_or(DiracError::SingularConstraintMatrix { point: z.to_vec(), det })
    }

    /// `{F, G}(s) - Σ {F, ψ^i}(s) C_ij(s) {ψ^j, G}(s)`.
    pub fn dirac_bracket_value(&self, f: &Expr, g: &Expr, s: &SurfaceSample) -> Result<f64, DiracError> {
        self.dirac_bracket_at(f, g, &s.point)
    }

    /// As [`dirac_bracket_value`](Self::dirac_bracket_value) at an arbitrary
    /// point where `C` is invertible.
    pub fn dirac_bracket_at(&self, f: &Expr, g: &Expr, z: &[f64]) -> Result<f64, DiracError> {
        let n = self.dim();
        check_fits(f, n)?;
        check_fits(g, n)?;
        let p = self.poisson();
        let cinv = self.c_inverse_at(z)?;
        let psi = self.constraints.constraints();
        let fg = p.bracket_value(f, g, z)?;
        let a = psi
            .iter()
            .map(|c| p.bracket_value(f, c, z))
            .collect::<Result<Vec<_>, _>>()?;
        let b = psi
            .iter()
            .map(|c| p.bracket_value(c, g, z))
            .collect::<Result<Vec<_>, _>>()?;
        let correction = (DVector::from_vec(a).transpose() * cinv * DVector::from_vec(b))[(0, 0)];
        Ok(fg - correction)
    }

    /// Ambient expression whose restriction to `S` is the Dirac bracket,
    /// using `C⁻¹ = adj(C) / det(C)`. Nested calls give iterated brackets.
    pub fn dirac_bracket_expr(&self, f: &Expr, g: &Expr) -> Result<Expr, DiracError> {
        let Some((det, adj)) = &self.symbolic else {
            return Err(DiracError::TooManyForSymbolic(self.constraints.len()));
        };
        let n = self.dim();
        check_fits(f, n)?;
        check_fits(g, n)?;
        let p = self.poisson();
        let psi = self.constraints.constraints();
        let fa: Vec<Expr> = psi.iter().map(|c| p.bracket(f, c)).collect::<Result<_, _>>()?;
        let bg: Vec<Expr> = psi.iter().map(|c| p.bracket(c, g)).collect::<Result<_, _>>()?;
        let k = psi.len();
        let mut terms = Vec::new();
        for i in 0..k {
            for j in 0..k {
                if !fa[i].is_zero() && !bg[j].is_zero() && !adj[i][j].is_zero() {
                    terms.push(&fa[i] * &adj[i][j] * &bg[j]);
                }
            }
        }
        let fg = p.bracket(f, g)?;
        let correction = Expr::sum(terms);
        Ok(if correction.is_zero() {
            fg
        } else if det.as_const() == Some(1.0) {
            fg - correction
        } else {
            fg - correction / det
        })
    }

    /// `M(z) = B - B Ψᵀ C⁻¹ Ψ B`: the Dirac tensor in ambient coordinates,
    /// so that `{F, G}_S = dFᵀ M dG` and `X^S_F = M dF`.
    pub fn dirac_matrix_at(&self, z: &[f64]) -> Result<DMatrix<f64>, DiracError> {
        let b = self.poisson().matrix_at(z)?;
        let psi = self.constraints.jacobian(z)?;
        let cinv = self.c_inverse_at(z)?;
        let bpt = &b * psi.transpose();
        Ok(&b - &bpt * cinv * &psi * &b)
    }

    /// `X_F(s) - Σ {F, ψ^i} C_ij X_{ψ^j}(s)`.
    pub fn dirac_vector_field(&self, f: &Expr, s: &SurfaceSample) -> Result<DVector<f64>, DiracError> {
        self.dirac_vector_field_at(f, &s.point)
    }

    pub fn dirac_vector_field_at(&self, f: &Expr, z: &[f64]) -> Result<DVector<f64>, DiracError> {
        let n = self.dim();
        check_fits(f, n)?;
        let p = self.poisson();
        let cinv = self.c_inverse_at(z)?;
        let xf = DVector::from_vec(p.hamiltonian_vector_field(f)?.eval(z)?);
        let psi = self.constraints.constraints();
        let a = psi
            .iter()
            .map(|c| p.bracket_value(f, c, z))
            .collect::<Result<Vec<_>, _>>()?;
        let weights = cinv.transpose() * DVector::from_vec(a);
        let mut out = xf;
        for (j, field) in self.constraint_fields.iter().enumerate() {
            if weights[j] != 0.0 {
                out -= weights[j] * DVector::from_vec(field.eval(z)?);
            }
        }
        Ok(out)
    }

    /// Projection onto `T_sS` along `B^♯((T_sS)°)`, from the block system
    /// `π [U | T] = [0 | T]` with `U = B Ψᵀ`.
    pub fn projection_pi_s(&self, s: &SurfaceSample) -> Result<DMatrix<f64>, DiracError> {
        let n = self.dim();
        let b = self.poisson().matrix_at(&s.point)?;
        let u = &b * s.conormal.transpose();
        let frame = linalg::hstack(&[u.clone(), s.tangent.clone()]);
        let frame_inv = linalg::inverse(&frame)
            .filter(|_| linalg::rank(&frame, RANK_TOL) == n)
            .ok_or_else(|| DiracError::DecompositionRankDeficient { point: s.point.clone() })?;
        let image = linalg::hstack(&[DMatrix::zeros(n, u.ncols()), s.tangent.clone()]);
        Ok(image * frame_inv)
    }

    /// `π_S B(s) π_Sᵀ` and its representation in the tangent basis.
    pub fn reduced_tensor(&self, s: &SurfaceSample) -> Result<ProjectedTensor, DiracError> {
        let pi = self.projection_pi_s(s)?;
        let b = self.poisson().matrix_at(&s.point)?;
        let ambient = &pi * b * pi.transpose();
        // The image of π is spanned by the orthonormal tangent basis.
        let tangential = s.tangent.transpose() * &ambient * &s.tangent;
        Ok(ProjectedTensor {
            point: s.point.clone(),
            ambient,
            tangential,
            tangent_basis: s.tangent.clone(),
        })
    }

    /// `⟨dF, B_S dG⟩(s)` from the projected tensor.
    pub fn reduced_tensor_pairing(&self, t: &ProjectedTensor, f: &Expr, g: &Expr) -> Result<f64, DiracError> {
        let n = self.dim();
        let df = gradient_at(f, n, &t.point)?;
        let dg = gradient_at(g, n, &t.point)?;
        Ok((df.transpose() * &t.ambient * dg)[(0, 0)])
    }

    /// ω-orthogonality of `U = B^♯((T_sS)°)` and `W = T_sS ∩ im B^♯(s)`
    /// inside the leaf through `s`, and nondegeneracy of ω on `U`.
    pub fn leaf_orthogonality_check(&self, s: &SurfaceSample) -> Result<LeafOrthogonality, DiracError> {
        const TOL: f64 = 1e-10;
        let b = self.poisson().matrix_at(&s.point)?;
        let u = linalg::column_space(&(&b * s.conormal.transpose()), RANK_TOL);
        let image = linalg::column_space(&b, RANK_TOL);
        let w = linalg::intersection(&s.tangent, &image, RANK_TOL);
        let rank_b = image.ncols();
        // ω(Bα, Bβ) = αᵀ B β = αᵀ (Bβ): lift the first argument only.
        let largest = linalg::singular_values(&b).first().copied().unwrap_or(0.0);
        let b_pinv = b
            .clone()
            .pseudo_inverse(RANK_TOL * largest.max(f64::MIN_POSITIVE))
            .map_err(|_| DiracError::DecompositionRankDeficient { point: s.point.clone() })?;
        let lifted_u = &b_pinv * &u;
        let cross = lifted_u.transpose() * &w;
        let omega_u = lifted_u.transpose() * &u;
        let pairing = linalg::max_abs(&cross);
        let u_rank = linalg::rank(&omega_u, RANK_TOL);
        let det = if omega_u.nrows() == 0 {
            1.0
        } else {
            omega_u.determinant()
        };
        let nondegenerate = u_rank == u.ncols() && det.abs() > TOL;
        let dims_ok = u.ncols() + w.ncols() == rank_b;
        Ok(LeafOrthogonality {
            point: s.point.clone(),
            pairing,
            omega_u_det: det,
            dim_u: u.ncols(),
            dim_w: w.ncols(),
            rank_b,
            passed: pairing <= TOL && nondegenerate && dims_ok,
        })
    }

    /// Rank of the reduced tensor at `s`, i.e. the dimension of the leaf of
    /// `S` through `s`.
    pub fn reduced_leaf_dimension(&self, s: &SurfaceSample) -> Result<usize, DiracError> {
        let t = self.reduced_tensor(s)?;
        Ok(linalg::rank(&t.tangential, RANK_TOL))
    }
}

impl DiracContext {
    /// The structural property suite at `samples`, each as a report:
    /// extension independence, constraints as Casimirs, tangency of Dirac
    /// fields, antisymmetry, Leibniz, agreement with the projected tensor,
    /// the vanishing mixed block, leaf orthogonality and (when the symbolic
    /// inverse is available) the nested Jacobi identity.
    pub fn structural_checks(
        &self,
        samples: &[SurfaceSample],
        pairs: usize,
        rng: &mut SampleRng,
    ) -> Result<Vec<CheckReport>, DiracError> {
        const SINGLE: f64 = 1e-10;
        const NESTED: f64 = 1e-8;
        let n = self.dim();
        let psi = self.constraints.constraints();
        let mut extension = CheckReport::new("dirac: extension independence", SINGLE);
        let mut casimir = CheckReport::new("dirac: constraints are Casimirs", SINGLE);
        let mut tangency = CheckReport::new("dirac: Dirac fields are tangent", SINGLE);
        let mut antisymmetry = CheckReport::new("dirac: antisymmetry", SINGLE);
        let mut leibniz = CheckReport::new("dirac: Leibniz rule", SINGLE);
        let mut agreement = CheckReport::new("dirac: projected tensor matches bracket", SINGLE);
        let mut mixed = CheckReport::new("dirac: mixed block of projected tensor vanishes", SINGLE);
        let mut leaf = CheckReport::new("dirac: leaf orthogonality", SINGLE);
        let mut jacobi = CheckReport::new("dirac: nested Jacobi", NESTED);

        let tensors = samples
            .iter()
            .map(|s| self.reduced_tensor(s))
            .collect::<Result<Vec<_>, _>>()?;
        for s in samples {
            let pi = self.projection_pi_s(s)?;
            let b = self.poisson().matrix_at(&s.point)?;
            mixed.observe(
                linalg::max_abs(&(&pi * b * (DMatrix::identity(n, n) - &pi).transpose())),
                &s.point,
            );
            let l = self.leaf_orthogonality_check(s)?;
            leaf.observe(l.pairing, &s.point);
            if !l.passed {
                leaf.fail(
                    format!(
                        "omega on U has det {:.3e}; dim U {} + dim W {} vs rank B {}",
                        l.omega_u_det, l.dim_u, l.dim_w, l.rank_b
                    ),
                    Some(&s.point),
                );
            }
        }
        for _ in 0..pairs {
            let f = random_polynomial(rng, n, 2);
            let g = random_polynomial(rng, n, 2);
            let h = random_polynomial(rng, n, 2);
            let f_ext = &f + Expr::sum(psi.iter().map(|c| random_polynomial(rng, n, 2) * c));
            let fg_h = &f * &g;
            for (s, t) in samples.iter().zip(&tensors) {
                let z = &s.point;
                let fg = self.dirac_bracket_value(&f, &g, s)?;
                extension.observe(fg - self.dirac_bracket_value(&f_ext, &g, s)?, z);
                for c in psi {
                    casimir.observe(self.dirac_bracket_value(c, &g, s)?, z);
                }
                tangency.observe((&s.conormal * self.dirac_vector_field(&f, s)?).amax(), z);
                antisymmetry.observe(fg + self.dirac_bracket_value(&g, &f, s)?, z);
                let lhs = self.dirac_bracket_value(&fg_h, &h, s)?;
                let rhs = f.eval(z)? * self.dirac_bracket_value(&g, &h, s)?
                    + g.eval(z)? * self.dirac_bracket_value(&f, &h, s)?;
                leibniz.observe(lhs - rhs, z);
                agreement.observe(self.reduced_tensor_pairing(t, &f, &g)? - fg, z);
            }
            if self.has_symbolic_inverse() {
                let br = |a: &Expr, b: &Expr| self.dirac_bracket_expr(a, b);
                let (f1, g1, h1) = (
                    random_polynomial(rng, n, 1),
                    random_polynomial(rng, n, 1),
                    random_polynomial(rng, n, 2),
                );
                let sum = br(&br(&f1, &g1)?, &h1)? + br(&br(&g1, &h1)?, &f1)? + br(&br(&h1, &f1)?, &g1)?;
                for s in samples {
                    jacobi.observe(sum.eval(&s.point)?, &s.point);
                }
            }
        }
        let mut out = vec![
            extension,
            casimir,
            tangency,
            antisymmetry,
            leibniz,
            agreement,
            mixed,
            leaf,
        ];
        if self.has_symbolic_inverse() {
            out.push(jacobi);
        }
        Ok(out)
    }
}

/// Laplace expansion; fine for the `k <= 4` matrices used here.
fn determinant(m: &[Vec<Expr>]) -> Expr {
    match m.len() {
        0 => Expr::one(),
        1 => m[0][0].clone(),
        2 => &m[0][0] * &m[1][1] - &m[0][1] * &m[1][0],
        n => Expr::sum((0..n).filter(|&j| !m[0][j].is_zero()).map(|j| {
            let term = &m[0][j] * determinant(&minor(m, 0, j));
            if j % 2 == 0 {
                term
            } else {
                -term
            }
        })),
    }
}

fn minor(m: &[Vec<Expr>], row: usize, col: usize) -> Vec<Vec<Expr>> {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != row)
        .map(|(_, r)| {
            r.iter()
                .enumerate()
                .filter(|(j, _)| *j != col)
                .map(|(_, e)| e.clone())
                .collect()
        })
        .collect()
}

/// `adj[i][j] = (-1)^{i+j} det(minor(j, i))`, so `m · adj = det · I`.
fn adjugate(m: &[Vec<Expr>]) -> Vec<Vec<Expr>> {
    let k = m.len();
    if k == 1 {
        return vec![vec![Expr::one()]];
    }
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    let d = simplify(&determinant(&minor(m, j, i)));
                    if (i + j) % 2 == 0 {
                        d
                    } else {
                        -d
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectedTensor {
    pub point: Vec<f64>,
    /// `π_S B(s) π_Sᵀ` in ambient coordinates.
    #[serde(serialize_with = "serialize_matrix")]
    pub ambient: DMatrix<f64>,
    /// The same tensor in the tangent basis of the sample.
    #[serde(serialize_with = "serialize_matrix")]
    pub tangential: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub tangent_basis: DMatrix<f64>,
}

/// Row-major nested lists.
pub fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in m.row_iter() {
        seq.serialize_element(&r.iter().copied().collect::<Vec<f64>>())?;
    }
    seq.end()
}

#[derive(Debug, Clone, Serialize)]
pub struct LeafOrthogonality {
    pub point: Vec<f64>,
    /// Largest `|ω(u, w)|` over orthonormal bases of U and W.
    pub pairing: f64,
    /// Determinant of ω on the orthonormal basis of U.
    pub omega_u_det: f64,
    pub dim_u: usize,
    pub dim_w: usize,
    pub rank_b: usize,
    pub passed: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::sampling::{random_polynomial, rng};

    fn flat() -> (DiracContext, Vec<SurfaceSample>) {
        let c = fixtures::flat_second_class();
        let samples = c.sample_surface(20, &mut rng(1)).unwrap();
        (DiracContext::new(c, &samples).unwrap(), samples)
    }

    fn curved() -> (DiracContext, Vec<SurfaceSample>) {
        let c = fixtures::curved_second_class();
        let samples = c.sample_surface(20, &mut rng(2)).unwrap();
        (DiracContext::new(c, &samples).unwrap(), samples)
    }

    #[test]
    fn flat_bracket_values() {
        let (d, samples) = flat();
        let v = Expr::var;
        let g = v(0) * v(2) + v(1).powi(3) - v(3);
        for s in &samples {
            assert_eq!(d.dirac_bracket_value(&v(0), &v(2), s).unwrap(), 1.0);
            assert!(d.dirac_bracket_value(&v(1), &g, s).unwrap().abs() <= 1e-14);
            assert_eq!(d.dirac_bracket_value(&g, &g, s).unwrap(), 0.0);
        }
        let e = d.dirac_bracket_expr(&v(0), &v(2)).unwrap();
        assert_eq!(simplify(&e).as_const(), Some(1.0));
    }

    #[test]
    fn flat_vector_field_and_projection() {
        let (d, samples) = flat();
        let v = Expr::var;
        let h = (v(0).powi(2) + v(2).powi(2)) / 2.0;
        for s in &samples {
            let x = d.dirac_vector_field(&h, s).unwrap();
            let expected = [s.point[2], 0.0, -s.point[0], 0.0];
            assert!(x.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-14));
            assert!(d.dirac_vector_field(&v(1), s).unwrap().amax() < 1e-14);
            assert!(d.dirac_vector_field(&Expr::constant(2.0), s).unwrap().amax() == 0.0);

            let pi = d.projection_pi_s(s).unwrap();
            let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]));
            assert!((&pi - diag).amax() < 1e-12);
            assert!((&pi * &pi - &pi).amax() < 1e-12);

            let t = d.reduced_tensor(s).unwrap();
            let canonical = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
            assert!((&t.tangential - canonical).amax() < 1e-12);
            assert!(t.ambient.row(1).amax() < 1e-12 && t.ambient.column(3).amax() < 1e-12);
            assert_eq!(d.reduced_leaf_dimension(s).unwrap(), 2);

            let leaf = d.leaf_orthogonality_check(s).unwrap();
            assert!(leaf.passed, "{leaf:?}");
            assert!((leaf.omega_u_det.abs() - 1.0).abs() < 1e-12);
            assert_eq!((leaf.dim_u, leaf.dim_w, leaf.rank_b), (2, 2, 4));
        }
    }

    #[test]
    fn structural_properties_on_both_fixtures() {
        for (d, samples) in [flat(), curved()] {
            let n = d.constraints().dim();
            let mut r = rng(11);
            let psi = d.constraints().constraints().to_vec();
            for _ in 0..5 {
                let f = random_polynomial(&mut r, n, 2);
                let g = random_polynomial(&mut r, n, 2);
                let f_ext = &f + Expr::sum(psi.iter().map(|c| random_polynomial(&mut r, n, 1) * c));
                for s in &samples {
                    let a = d.dirac_bracket_value(&f, &g, s).unwrap();
                    let b = d.dirac_bracket_value(&f_ext, &g, s).unwrap();
                    assert!((a - b).abs() <= 1e-10, "extension dependence {a} vs {b}");
                    for c in &psi {
                        assert!(d.dirac_bracket_value(c, &g, s).unwrap().abs() <= 1e-10);
                    }
                    let x = d.dirac_vector_field(&f, s).unwrap();
                    assert!((&s.conormal * x).amax() <= 1e-10);
                    let t = d.reduced_tensor(s).unwrap();
                    let via_tensor = d.reduced_tensor_pairing(&t, &f, &g).unwrap();
                    assert!((via_tensor - a).abs() <= 1e-10, "{via_tensor} vs {a}");
                    let pi = d.projection_pi_s(s).unwrap();
                    let b_s = d.poisson().matrix_at(&s.point).unwrap();
                    let mixed = &pi * b_s * (DMatrix::identity(n, n) - &pi).transpose();
                    assert!(mixed.amax() <= 1e-10);
                    assert!(d.leaf_orthogonality_check(s).unwrap().passed);
                }
            }
        }
    }

    #[test]
    fn nested_jacobi() {
        for (d, samples) in [flat(), curved()] {
            let v = Expr::var;
            let (f, g, h) = (v(0), v(3), &v(0) * &v(3) + v(2).powi(2));
            let cyc =
                |a: &Expr, b: &Expr, c: &Expr| d.dirac_bracket_expr(&d.dirac_bracket_expr(a, b).unwrap(), c).unwrap();
            let sum = cyc(&f, &g, &h) + cyc(&g, &h, &f) + cyc(&h, &f, &g);
            for s in &samples {
                assert!(sum.eval(&s.point).unwrap().abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn property_suite_passes_on_both_fixtures() {
        for (d, samples) in [flat(), curved()] {
            for check in d.structural_checks(&samples, 3, &mut rng(12)).unwrap() {
                assert!(check.passed, "{check}");
            }
        }
    }

    #[test]
    fn curved_leaf_dimension_follows_so3_factor() {
        let (d, samples) = curved();
        for s in &samples {
            // rank B = 4 away from x = 0; S ∩ leaf has dimension 2.
            assert_eq!(d.reduced_leaf_dimension(s).unwrap(), 2);
        }
    }

    #[test]
    fn rejects_non_cosymplectic_sets() {
        let c = fixtures::involutive_pair();
        let samples = c.sample_surface(5, &mut rng(3)).unwrap();
        assert!(matches!(
            DiracContext::new(c, &samples),
            Err(DiracError::NotCosymplectic(SubmanifoldKind::Coisotropic))
        ));
    }
}
