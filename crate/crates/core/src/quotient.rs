//! Reduction of a canonical symmetry through invariant generators.
//!
//! The quotient is represented by the invariant map `p = (p_1, ..., p_m)`
//! into a reduced chart `y`. The reduced bracket is given by closure
//! relations `{p_a, p_b} = Λ_ab(p)`, so that
//!
//! ```text
//! {f, g}_red(p(z)) = {f∘p, g∘p}(z)
//! ```
//!
//! The action is a finite family of maps (a one-parameter group is sampled
//! at a few parameter values). Freeness and properness are not checked.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{Chart, EvalError, Expr, Poly};
use crate::flows::{integrate, FlowError, IntegratorConfig};
use crate::poisson::{check_fits, PoissonError, PoissonStructure, SmoothMap};
use crate::report::CheckReport;
use crate::sampling::{random_polynomial, SampleRng};

/// Pointwise tolerance for invariance, closure and descent checks.
pub const QUOTIENT_TOL: f64 = 1e-10;
/// Pass threshold for projected-versus-reduced trajectories.
pub const DYNAMICS_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum QuotientError {
    #[error("{generators} generators for a reduced chart of dimension {chart}")]
    GeneratorCount { generators: usize, chart: usize },
    #[error("action map {index} is not a self-map of the ambient chart")]
    ActionDimension { index: usize },
    #[error("closure entry ({i}, {j}) must satisfy i < j < {dim}")]
    ClosureIndex { i: usize, j: usize, dim: usize },
    #[error("closure entry ({i}, {j}) given twice")]
    DuplicateClosure { i: usize, j: usize },
    #[error("generators are not invariant: {0}")]
    NotInvariant(String),
    #[error("closure fails: {0}")]
    Closure(String),
    #[error("reduced Hamiltonian does not descend (residual {residual:.3e} at {witness:?})")]
    Descent { residual: f64, witness: Vec<f64> },
    #[error("no ambient samples supplied")]
    EmptySamples,
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Flow(#[from] Box<FlowError>),
}

impl From<FlowError> for QuotientError {
    fn from(e: FlowError) -> Self {
        QuotientError::Flow(Box::new(e))
    }
}

#[derive(Debug, Clone)]
pub struct QuotientSpec {
    ambient: Arc<PoissonStructure>,
    actions: Vec<SmoothMap>,
    generators: Vec<Expr>,
    reduced_chart: Arc<Chart>,
    /// Full antisymmetric `Λ` over the reduced chart.
    closure: Vec<Vec<Expr>>,
    relations: Vec<Expr>,
    /// `Λ` as an (unvalidated) Poisson structure on the reduced chart.
    reduced: Arc<PoissonStructure>,
}

impl QuotientSpec {
    /// `closure_upper` lists `(a, b, Λ_ab)` with `a < b`; missing entries
    /// are zero.
    pub fn new(
        ambient: Arc<PoissonStructure>,
        actions: Vec<SmoothMap>,
        generators: Vec<Expr>,
        reduced_chart: Arc<Chart>,
        closure_upper: Vec<(usize, usize, Expr)>,
        relations: Vec<Expr>,
    ) -> Result<Self, QuotientError> {
        let n = ambient.dim();
        let m = reduced_chart.dim();
        if generators.len() != m {
            return Err(QuotientError::GeneratorCount {
                generators: generators.len(),
                chart: m,
            });
        }
        for (index, a) in actions.iter().enumerate() {
            if a.source_dim() != n || a.target_dim() != n {
                return Err(QuotientError::ActionDimension { index });
            }
        }
        for g in &generators {
            check_fits(g, n)?;
        }
        for r in &relations {
            check_fits(r, m)?;
        }
        let mut closure = vec![vec![Expr::zero(); m]; m];
        let mut seen = vec![vec![false; m]; m];
        for (i, j, e) in &closure_upper {
            let (i, j) = (*i, *j);
            if i >= j || j >= m {
                return Err(QuotientError::ClosureIndex { i, j, dim: m });
            }
            if seen[i][j] {
                return Err(QuotientError::DuplicateClosure { i, j });
            }
            seen[i][j] = true;
            check_fits(e, m)?;
            closure[j][i] = -e;
            closure[i][j] = e.clone();
        }
        let reduced = Arc::new(PoissonStructure::from_upper_unchecked(
            reduced_chart.clone(),
            closure_upper,
        )?);
        Ok(QuotientSpec {
            ambient,
            actions,
            generators,
            reduced_chart,
            closure,
            relations,
            reduced,
        })
    }

    pub fn ambient(&self) -> &Arc<PoissonStructure> {
        &self.ambient
    }

    pub fn actions(&self) -> &[SmoothMap] {
        &self.actions
    }

    pub fn generators(&self) -> &[Expr] {
        &self.generators
    }

    pub fn reduced_chart(&self) -> &Arc<Chart> {
        &self.reduced_chart
    }

    pub fn closure(&self, a: usize, b: usize) -> &Expr {
        &self.closure[a][b]
    }

    pub fn relations(&self) -> &[Expr] {
        &self.relations
    }

    /// `Λ` as a Poisson structure on the reduced chart, without validation.
    pub fn reduced_structure(&self) -> &Arc<PoissonStructure> {
        &self.reduced
    }

    /// `p(z)`.
    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.generators.iter().map(|g| g.eval(z)).collect()
    }

    /// `f∘p` for `f` over the reduced chart.
    pub fn pullback(&self, f: &Expr) -> Expr {
        f.substitute(&self.generators)
    }

    /// `max |p_a(Φ(z)) - p_a(z)|` over generators, actions and samples.
    pub fn verify_invariance(&self, samples: &[Vec<f64>]) -> Result<CheckReport, QuotientError> {
        let mut report = CheckReport::new("generators are invariant under the action", QUOTIENT_TOL);
        let mut worst: Option<(usize, usize)> = None;
        for z in samples {
            let base = self.project(z)?;
            for (k, action) in self.actions.iter().enumerate() {
                let moved = self.project(&action.eval(z)?)?;
                for (a, (x, y)) in moved.iter().zip(&base).enumerate() {
                    let r = (x - y).abs();
                    if r > report.worst_residual || worst.is_none() {
                        worst = Some((a, k));
                    }
                    report.observe(r, z);
                }
            }
        }
        if let (false, Some((a, k))) = (report.passed, worst) {
            report.note(format!(
                "worst generator {} under action {k}",
                self.reduced_chart.names()[a]
            ));
        }
        Ok(report)
    }

    /// Closure `{p_a, p_b}(z) = Λ_ab(p(z))` at the samples, plus the Jacobi
    /// residual of `Λ` at the image points.
    pub fn verify_closure(&self, samples: &[Vec<f64>]) -> Result<ClosureReport, QuotientError> {
        let m = self.generators.len();
        let n = self.ambient.dim();
        let mut closure = CheckReport::new("generator brackets close on the reduced chart", QUOTIENT_TOL);
        let mut jacobi = CheckReport::new("reduced bracket satisfies Jacobi on the image", QUOTIENT_TOL);
        let mut worst_pair = None;
        let mut brackets = Vec::with_capacity(m * m.saturating_sub(1) / 2);
        let mut proven = true;
        for a in 0..m {
            for b in a + 1..m {
                let ab = self.ambient.bracket(&self.generators[a], &self.generators[b])?;
                let lam = self.pullback(&self.closure[a][b]);
                proven &= Poly::from_expr(&(&ab - &lam), n, 8).is_some_and(|p| p.is_zero());
                brackets.push((a, b, ab, lam));
            }
        }
        for z in samples {
            let y = self.project(z)?;
            for (a, b, ab, _) in &brackets {
                let r = (ab.eval(z)? - self.closure[*a][*b].eval(&y)?).abs();
                if r > closure.worst_residual || worst_pair.is_none() {
                    worst_pair = Some((*a, *b));
                }
                closure.observe(r, z);
            }
            jacobi.observe(self.reduced.jacobi_residual(&y)?, &y);
        }
        let names = self.reduced_chart.names();
        if let (false, Some((a, b))) = (closure.passed, worst_pair) {
            closure.note(format!("worst pair ({}, {})", names[a], names[b]));
        }
        Ok(ClosureReport {
            closure,
            jacobi,
            proven,
            worst_pair: worst_pair.map(|(a, b)| (names[a].clone(), names[b].clone())),
        })
    }

    /// The reduced Poisson structure, after invariance and closure pass.
    pub fn build_reduced(&self, samples: &[Vec<f64>]) -> Result<Arc<PoissonStructure>, QuotientError> {
        if samples.is_empty() {
            return Err(QuotientError::EmptySamples);
        }
        let inv = self.verify_invariance(samples)?;
        if !inv.passed {
            return Err(QuotientError::NotInvariant(inv.to_string()));
        }
        let cl = self.verify_closure(samples)?;
        if !cl.passed() {
            let failing = if cl.closure.passed { &cl.jacobi } else { &cl.closure };
            return Err(QuotientError::Closure(failing.to_string()));
        }
        Ok(self.reduced.clone())
    }

    /// Checks `h_red(p(z)) = h(z)` and pairs the reduced structure with
    /// `h_red`.
    pub fn reduce_hamiltonian(
        &self,
        h: &Expr,
        h_red: &Expr,
        samples: &[Vec<f64>],
    ) -> Result<ReducedSystem, QuotientError> {
        check_fits(h, self.ambient.dim())?;
        check_fits(h_red, self.reduced_chart.dim())?;
        let structure = self.build_reduced(samples)?;
        let mut descent = CheckReport::new("reduced Hamiltonian descends", QUOTIENT_TOL);
        for z in samples {
            descent.observe((h_red.eval(&self.project(z)?)? - h.eval(z)?).abs(), z);
        }
        if !descent.passed {
            return Err(QuotientError::Descent {
                residual: descent.worst_residual,
                witness: descent.witness.unwrap_or_default(),
            });
        }
        Ok(ReducedSystem {
            structure,
            hamiltonian: h_red.clone(),
            ambient_hamiltonian: h.clone(),
        })
    }

    /// Integrates the ambient and reduced flows and reports
    /// `sup_t |p(z(t)) - y(t)|`.
    pub fn compare_dynamics(
        &self,
        r: &ReducedSystem,
        z0: &[f64],
        t_final: f64,
        dt: f64,
    ) -> Result<DynamicsComparison, QuotientError> {
        let cfg = IntegratorConfig::rk4(dt, t_final);
        let ambient = integrate(&self.ambient, &r.ambient_hamiltonian, z0, &cfg, &[])?;
        let y0 = self.project(z0)?;
        let reduced = integrate(&r.structure, &r.hamiltonian, &y0, &cfg, &[])?;
        let mut check = CheckReport::new("projected ambient flow matches reduced flow", DYNAMICS_TOL);
        let mut deviation = Vec::with_capacity(ambient.len());
        for (z, y) in ambient.states.iter().zip(&reduced.states) {
            let pz = self.project(z)?;
            let d = pz.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            deviation.push(d);
            check.observe(d, z);
        }
        Ok(DynamicsComparison {
            sup_deviation: check.worst_residual,
            check,
            steps: ambient.len().saturating_sub(1),
        })
    }

    /// The defining identity `{f, g}_red(p(z)) = {f∘p, g∘p}(z)` for random
    /// polynomial pairs over the reduced chart.
    pub fn pullback_identity_check(
        &self,
        samples: &[Vec<f64>],
        pairs: usize,
        rng: &mut SampleRng,
    ) -> Result<CheckReport, QuotientError> {
        let m = self.reduced_chart.dim();
        let mut report = CheckReport::new("reduced bracket pulls back to the ambient bracket", QUOTIENT_TOL);
        for _ in 0..pairs {
            let f = random_polynomial(rng, m, 2);
            let g = random_polynomial(rng, m, 2);
            let pulled = self.ambient.bracket(&self.pullback(&f), &self.pullback(&g))?;
            for z in samples {
                let y = self.project(z)?;
                let reduced = self.reduced.bracket_value(&f, &g, &y)?;
                report.observe((reduced - pulled.eval(z)?).abs(), z);
            }
        }
        Ok(report)
    }

    /// For a Casimir `c` of the reduced bracket on the image, checks that
    /// `c∘p` commutes with pulled-back functions.
    pub fn casimir_descent_check(
        &self,
        c: &Expr,
        samples: &[Vec<f64>],
        functions: usize,
        rng: &mut SampleRng,
    ) -> Result<CasimirDescent, QuotientError> {
        let m = self.reduced_chart.dim();
        check_fits(c, m)?;
        let images: Vec<Vec<f64>> = samples.iter().map(|z| self.project(z)).collect::<Result<_, _>>()?;
        let reduced = self.reduced.is_casimir_with_tol(c, &images, QUOTIENT_TOL)?;
        let pulled = self.pullback(c);
        let mut ambient = CheckReport::new("pulled-back Casimir commutes with invariants", QUOTIENT_TOL);
        for _ in 0..functions {
            let g = self.pullback(&random_polynomial(rng, m, 2));
            let b = self.ambient.bracket(&pulled, &g)?;
            for z in samples {
                ambient.observe(b.eval(z)?, z);
            }
        }
        Ok(CasimirDescent { reduced, ambient })
    }
}

#[derive(Debug, Clone)]
pub struct ClosureReport {
    pub closure: CheckReport,
    pub jacobi: CheckReport,
    /// `{p_a, p_b} - Λ_ab∘p` expands to the zero polynomial for every pair.
    pub proven: bool,
    pub worst_pair: Option<(String, String)>,
}

impl ClosureReport {
    pub fn passed(&self) -> bool {
        self.closure.passed && self.jacobi.passed
    }
}

#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub structure: Arc<PoissonStructure>,
    /// `[h]` over the reduced chart.
    pub hamiltonian: Expr,
    pub ambient_hamiltonian: Expr,
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicsComparison {
    pub sup_deviation: f64,
    pub check: CheckReport,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct CasimirDescent {
    pub reduced: CheckReport,
    pub ambient: CheckReport,
}

impl CasimirDescent {
    pub fn passed(&self) -> bool {
        self.reduced.passed && self.ambient.passed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::sampling::{rng, SampleBox};

    fn samples(seed: u64, n: usize) -> Vec<Vec<f64>> {
        SampleBox::default().random_points(&mut rng(seed), n, 100)
    }

    #[test]
    fn resonance_invariance_and_closure() {
        let q = fixtures::resonance_quotient();
        let z = samples(1, 4);
        let inv = q.verify_invariance(&z).unwrap();
        assert!(inv.passed && inv.worst_residual <= 1e-12, "{inv}");
        let cl = q.verify_closure(&z).unwrap();
        assert!(cl.passed() && cl.proven, "{}", cl.closure);
        // the image satisfies the relation
        for p in &z {
            let y = q.project(p).unwrap();
            assert!(q.relations()[0].eval(&y).unwrap().abs() < 1e-12);
        }
        assert!(q.pullback_identity_check(&z, 10, &mut rng(2)).unwrap().passed);
    }

    #[test]
    fn sign_flipped_closure_fails_with_witness() {
        let base = fixtures::resonance_quotient();
        let v = Expr::var;
        let q = QuotientSpec::new(
            base.ambient().clone(),
            base.actions().to_vec(),
            base.generators().to_vec(),
            base.reduced_chart().clone(),
            vec![(0, 1, -2.0 * v(2)), (0, 2, -2.0 * v(1)), (1, 2, 2.0 * v(0))],
            base.relations().to_vec(),
        )
        .unwrap();
        let z = samples(3, 4);
        let cl = q.verify_closure(&z).unwrap();
        assert!(!cl.closure.passed && !cl.proven);
        assert_eq!(cl.worst_pair, Some(("s1".into(), "s2".into())));
        // residual is |4 s3| at the witness
        let w = cl.closure.witness.clone().unwrap();
        let s3 = q.generators()[2].eval(&w).unwrap();
        assert!((cl.closure.worst_residual - 4.0 * s3.abs()).abs() < 1e-9);
        assert!(matches!(q.build_reduced(&z), Err(QuotientError::Closure(_))));
    }

    #[test]
    fn non_invariant_generator_is_reported() {
        let base = fixtures::resonance_quotient();
        let chart = Arc::new(Chart::new(["a", "b"]).unwrap());
        let q = QuotientSpec::new(
            base.ambient().clone(),
            base.actions().to_vec(),
            vec![Expr::var(0), Expr::constant(3.0)],
            chart,
            Vec::new(),
            Vec::new(),
        )
        .unwrap();
        let rep = q.verify_invariance(&samples(4, 4)).unwrap();
        assert!(!rep.passed && rep.witness.is_some());
        assert!(rep.notes.iter().any(|n| n.contains("generator a")));
    }

    #[test]
    fn identity_action_reproduces_ambient() {
        let so3 = Arc::new(fixtures::so3());
        let v = Expr::var;
        let q = QuotientSpec::new(
            so3.clone(),
            vec![SmoothMap::identity(so3.chart())],
            vec![v(0), v(1), v(2)],
            Arc::new(Chart::new(["y1", "y2", "y3"]).unwrap()),
            vec![(0, 1, -v(2)), (0, 2, v(1)), (1, 2, -v(0))],
            Vec::new(),
        )
        .unwrap();
        let z = samples(5, 3);
        let red = q.build_reduced(&z).unwrap();
        for p in &z {
            assert_eq!(red.matrix_at(p).unwrap(), so3.matrix_at(p).unwrap());
        }
        let h = fixtures::rigid_body_hamiltonian(1.0, 2.0, 3.0);
        let sys = q.reduce_hamiltonian(&h, &h, &z).unwrap();
        let cmp = q.compare_dynamics(&sys, &[0.3, 0.2, -0.5], 2.0, 1e-3).unwrap();
        assert_eq!(cmp.sup_deviation, 0.0);
    }

    #[test]
    fn translation_reduction() {
        let q = fixtures::translation_quotient();
        let z = samples(6, 4);
        let red = q.build_reduced(&z).unwrap();
        let v = Expr::var;
        assert_eq!(red.bracket_value(&v(0), &v(1), &[0.1, 0.2, 0.3]).unwrap(), 1.0);
        let cas = q.casimir_descent_check(&v(2), &z, 5, &mut rng(7)).unwrap();
        assert!(cas.passed());
        let h = (v(0).powi(2) + v(2).powi(2)) / 2.0 + v(3).powi(2);
        let h_red = (v(0).powi(2) + v(1).powi(2)) / 2.0 + v(2).powi(2);
        let sys = q.reduce_hamiltonian(&h, &h_red, &z).unwrap();
        let cmp = q.compare_dynamics(&sys, &[0.5, -0.3, 0.8, 0.4], 10.0, 1e-3).unwrap();
        assert!(cmp.check.passed, "{}", cmp.check);
    }

    #[test]
    fn resonance_dynamics_and_descent() {
        let q = fixtures::resonance_quotient();
        let z = samples(8, 4);
        let v = Expr::var;
        let energy = fixtures::hopf_invariants()[3].clone();
        let sys = q.reduce_hamiltonian(&energy, &v(3), &z).unwrap();
        let origin = q.compare_dynamics(&sys, &[0.0; 4], 1.0, 1e-3).unwrap();
        assert_eq!(origin.sup_deviation, 0.0);

        let s = fixtures::hopf_invariants();
        let h = &s[3] + 0.5 * &s[0] + 0.3 * s[1].powi(2);
        let h_red = v(3) + 0.5 * v(0) + 0.3 * v(1).powi(2);
        let sys = q.reduce_hamiltonian(&h, &h_red, &z).unwrap();
        let cmp = q.compare_dynamics(&sys, &[0.7, -0.4, 0.2, 0.9], 10.0, 1e-3).unwrap();
        assert!(cmp.check.passed, "{}", cmp.check);

        assert!(matches!(
            q.reduce_hamiltonian(&v(0), &v(0), &z),
            Err(QuotientError::Descent { .. })
        ));
        let cas = q.casimir_descent_check(&v(3), &z, 5, &mut rng(9)).unwrap();
        assert!(cas.passed());
    }
}
