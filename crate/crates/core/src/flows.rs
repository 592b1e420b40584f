//! Fixed-step RK4 integration of Hamiltonian dynamics `ż = X_h(z)`, on the
//! ambient space, along a cosymplectic constraint surface (Dirac field), and
//! on reduced spaces, with conservation and bracket-preservation diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::dirac::{DiracContext, DiracError};
use crate::expr::{EvalError, Expr};
use crate::linalg;
use crate::poisson::{check_fits, gradient_at, PoissonError, PoissonStructure};
use crate::report::CheckReport;
use crate::submanifold::{NewtonOptions, SURFACE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rk4,
    ProjectedRk4,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub t_final: f64,
    /// Newton tolerance for projected-rk4.
    pub projection_tol: f64,
    pub max_projection_iters: usize,
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, t_final: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4,
            dt,
            t_final,
            projection_tol: 1e-13,
            max_projection_iters: 50,
        }
    }

    pub fn projected(dt: f64, t_final: f64) -> Self {
        IntegratorConfig {
            method: Method::ProjectedRk4,
            ..Self::rk4(dt, t_final)
        }
    }

    /// Number of steps and the uniform step actually used. The step is
    /// shrunk slightly so the grid lands exactly on `t_final`.
    pub fn grid(&self) -> Result<(usize, f64), FlowError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(FlowError::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(FlowError::InvalidConfig(format!(
                "final time must be finite and non-negative, got {}",
                self.t_final
            )));
        }
        if self.t_final == 0.0 {
            return Ok((0, self.dt));
        }
        let steps = (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize;
        Ok((steps, self.t_final / steps as f64))
    }
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("state has {got} coordinates, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("evaluation failed at t = {last_valid_time}: {source}")]
    Eval {
        source: EvalError,
        last_valid_time: f64,
        partial: Box<Trajectory>,
    },
    #[error("initial point is off the constraint surface (residual {residual:.3e})")]
    OffSurface { residual: f64 },
    #[error("projection onto the constraint surface diverged at t = {last_valid_time} (residual {residual:.3e})")]
    ProjectionDiverged {
        residual: f64,
        last_valid_time: f64,
        partial: Box<Trajectory>,
    },
    #[error("Dirac field unavailable at t = {last_valid_time}: {source}")]
    Dirac {
        source: DiracError,
        last_valid_time: f64,
        partial: Box<Trajectory>,
    },
    #[error(transparent)]
    Poisson(#[from] PoissonError),
}

impl FlowError {
    /// The part of the trajectory computed before the failure, if any.
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            FlowError::Eval { partial, .. }
            | FlowError::ProjectionDiverged { partial, .. }
            | FlowError::Dirac { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// Uniform-grid trajectory with per-step diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    /// `tracked[step][q]`
    pub tracked: Vec<Vec<f64>>,
    /// Max constraint residual per step; empty for ambient flows.
    pub constraint_residuals: Vec<f64>,
    /// Max `|⟨dψ, ż⟩|` per step before projection; empty for ambient flows.
    pub tangency: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    pub fn last_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Max over steps of `|tracked[q](t) - tracked[q](0)|`.
    pub fn tracked_drift(&self, q: usize) -> f64 {
        drift(self.tracked.iter().map(|row| row[q]))
    }

    pub fn energy_drift(&self) -> f64 {
        drift(self.energy.iter().copied())
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.constraint_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_tangency(&self) -> f64 {
        self.tangency.iter().copied().fold(0.0, f64::max)
    }
}

fn drift(mut values: impl Iterator<Item = f64>) -> f64 {
    let Some(first) = values.next() else { return 0.0 };
    values.fold(0.0, |acc, v| acc.max((v - first).abs()))
}

fn rk4_step<F>(z: &[f64], h: f64, field: &mut F) -> Result<Vec<f64>, FlowError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, FlowError>,
{
    let axpy = |a: &[f64], s: f64, k: &[f64]| -> Vec<f64> { a.iter().zip(k).map(|(x, v)| x + s * v).collect() };
    let k1 = field(z)?;
    let k2 = field(&axpy(z, h / 2.0, &k1))?;
    let k3 = field(&axpy(z, h / 2.0, &k2))?;
    let k4 = field(&axpy(z, h, &k3))?;
    Ok((0..z.len())
        .map(|i| z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

struct Recorder<'a> {
    h: &'a Expr,
    tracked: &'a [Expr],
    traj: Trajectory,
}

impl Recorder<'_> {
    fn push(&mut self, t: f64, z: Vec<f64>) -> Result<(), EvalError> {
        let e = self.h.eval(&z)?;
        let q = self.tracked.iter().map(|f| f.eval(&z)).collect::<Result<Vec<_>, _>>()?;
        self.traj.times.push(t);
        self.traj.energy.push(e);
        self.traj.tracked.push(q);
        self.traj.states.push(z);
        Ok(())
    }

    fn fail(self, source: EvalError) -> FlowError {
        let last_valid_time = self.traj.last_time();
        FlowError::Eval {
            source,
            last_valid_time,
            partial: Box::new(self.traj),
        }
    }
}

/// Classical RK4 on `ż = X_h(z)`. `cfg.method` must be rk4; projection
/// only makes sense for constrained flows.
pub fn integrate(
    p: &PoissonStructure,
    h: &Expr,
    z0: &[f64],
    cfg: &IntegratorConfig,
    tracked: &[Expr],
) -> Result<Trajectory, FlowError> {
    let n = p.dim();
    if z0.len() != n {
        return Err(FlowError::Dimension {
            expected: n,
            got: z0.len(),
        });
    }
    check_fits(h, n)?;
    for f in tracked {
        check_fits(f, n)?;
    }
    if cfg.method != Method::Rk4 {
        return Err(FlowError::InvalidConfig(
            "projected-rk4 needs a constraint surface; use integrate_constrained".into(),
        ));
    }
    let (steps, dt) = cfg.grid()?;
    let field = p.hamiltonian_vector_field(h)?;
    let mut rec = Recorder {
        h,
        tracked,
        traj: Trajectory::default(),
    };
    if let Err(e) = rec.push(0.0, z0.to_vec()) {
        return Err(rec.fail(e));
    }
    let mut z = z0.to_vec();
    let mut eval_field = |x: &[f64]| {
        field.eval(x).map_err(|source| FlowError::Eval {
            source,
            last_valid_time: 0.0,
            partial: Box::default(),
        })
    };
    for step in 1..=steps {
        let next = match rk4_step(&z, dt, &mut eval_field) {
            Ok(v) => v,
            Err(FlowError::Eval { source, .. }) => return Err(rec.fail(source)),
            Err(e) => return Err(e),
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(rec.fail(EvalError::Domain {
                node: "state".into(),
                reason: "non-finite state".into(),
            }));
        }
        let t = if step == steps { cfg.t_final } else { step as f64 * dt };
        if let Err(e) = rec.push(t, next.clone()) {
            return Err(rec.fail(e));
        }
        z = next;
    }
    Ok(rec.traj)
}

/// RK4 on the Dirac vector field of `h`, optionally projecting each step
/// back onto the constraint surface by Newton iteration.
pub fn integrate_constrained(
    d: &DiracContext,
    h: &Expr,
    s0: &[f64],
    cfg: &IntegratorConfig,
    tracked: &[Expr],
) -> Result<Trajectory, FlowError> {
    let constraints = d.constraints();
    let n = constraints.dim();
    if s0.len() != n {
        return Err(FlowError::Dimension {
            expected: n,
            got: s0.len(),
        });
    }
    check_fits(h, n)?;
    for f in tracked {
        check_fits(f, n)?;
    }
    let residual0 = constraints.residual(s0).map_err(PoissonError::Eval)?;
    if residual0 > SURFACE_TOL {
        return Err(FlowError::OffSurface { residual: residual0 });
    }
    let (steps, dt) = cfg.grid()?;
    let newton = NewtonOptions {
        max_iterations: cfg.max_projection_iters,
        tolerance: cfg.projection_tol,
        perturbation: 0.0,
    };

    let mut rec = Recorder {
        h,
        tracked,
        traj: Trajectory::default(),
    };
    let mut z = s0.to_vec();
    let mut field = |x: &[f64]| -> Result<Vec<f64>, FlowError> {
        let wrap = |source| FlowError::Dirac {
            source,
            last_valid_time: 0.0,
            partial: Box::default(),
        };
        let m = d.dirac_matrix_at(x).map_err(wrap)?;
        let dh = gradient_at(h, n, x).map_err(|e| wrap(DiracError::Eval(e)))?;
        Ok((m * dh).as_slice().to_vec())
    };
    let tangency_at = |x: &[f64], v: &[f64]| -> Result<f64, EvalError> {
        let j = constraints.jacobian(x)?;
        Ok((j * DVector::from_column_slice(v)).amax())
    };
    // Attaches the partial trajectory to errors raised inside the step.
    let attach = |e: FlowError, traj: Trajectory| -> FlowError {
        let last_valid_time = traj.last_time();
        match e {
            FlowError::Dirac { source, .. } => FlowError::Dirac {
                source,
                last_valid_time,
                partial: Box::new(traj),
            },
            FlowError::Eval { source, .. } => FlowError::Eval {
                source,
                last_valid_time,
                partial: Box::new(traj),
            },
            other => other,
        }
    };

    for step in 0..=steps {
        let t = if step == steps { cfg.t_final } else { step as f64 * dt };
        let v = match field(&z) {
            Ok(v) => v,
            Err(e) => return Err(attach(e, rec.traj)),
        };
        let tangency = match tangency_at(&z, &v) {
            Ok(x) => x,
            Err(e) => return Err(rec.fail(e)),
        };
        let residual = match constraints.residual(&z) {
            Ok(x) => x,
            Err(e) => return Err(rec.fail(e)),
        };
        if let Err(e) = rec.push(t, z.clone()) {
            return Err(rec.fail(e));
        }
        rec.traj.tangency.push(tangency);
        rec.traj.constraint_residuals.push(residual);
        if step == steps {
            break;
        }
        let mut next = match rk4_step(&z, dt, &mut field) {
            Ok(v) => v,
            Err(e) => return Err(attach(e, rec.traj)),
        };
        if cfg.method == Method::ProjectedRk4 {
            let (projected, r) = match constraints.project(&next, &newton) {
                Ok(x) => x,
                Err(e) => return Err(rec.fail(e)),
            };
            if !(r <= SURFACE_TOL) {
                let last_valid_time = rec.traj.last_time();
                return Err(FlowError::ProjectionDiverged {
                    residual: r,
                    last_valid_time,
                    partial: Box::new(rec.traj),
                });
            }
            next = projected;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(rec.fail(EvalError::Domain {
                node: "state".into(),
                reason: "non-finite state".into(),
            }));
        }
        z = next;
    }
    Ok(rec.traj)
}

#[derive(Debug, Clone, Serialize)]
pub struct BracketPreservationReport {
    pub check: CheckReport,
    /// Set when the check was not performed.
    pub skipped: Option<String>,
    pub jacobian_norm: f64,
    pub richardson: bool,
}

/// Largest Jacobian norm for which the finite-difference test is trusted.
pub const MAX_FLOW_JACOBIAN_NORM: f64 = 1e6;

/// Finite-difference test that the time-`t` flow map `φ` is a Poisson map:
/// `J B(z0) Jᵀ = B(φ(z0))` entrywise within 1e-5.
pub fn bracket_preservation_check(
    p: &PoissonStructure,
    h: &Expr,
    z0: &[f64],
    t: f64,
    dt: f64,
    probe: f64,
) -> Result<BracketPreservationReport, FlowError> {
    const TOL: f64 = 1e-5;
    let n = p.dim();
    let cfg = IntegratorConfig::rk4(dt, t);
    let flow = |z: &[f64]| -> Result<Vec<f64>, FlowError> {
        let traj = integrate(p, h, z, &cfg, &[])?;
        Ok(traj.last_state().expect("non-empty trajectory").to_vec())
    };
    let jacobian = |delta: f64| -> Result<DMatrix<f64>, FlowError> {
        let mut j = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut plus = z0.to_vec();
            let mut minus = z0.to_vec();
            plus[i] += delta;
            minus[i] -= delta;
            let (fp, fm) = (flow(&plus)?, flow(&minus)?);
            for r in 0..n {
                j[(r, i)] = (fp[r] - fm[r]) / (2.0 * delta);
            }
        }
        Ok(j)
    };
    let end = flow(z0)?;
    let b0 = p.matrix_at(z0).map_err(PoissonError::Eval)?;
    let b1 = p.matrix_at(&end).map_err(PoissonError::Eval)?;
    let residual = |j: &DMatrix<f64>| linalg::max_abs(&(j * &b0 * j.transpose() - &b1));

    let mut check = CheckReport::new(format!("flow map at t = {t} preserves the bracket"), TOL);
    let mut j = jacobian(probe)?;
    let jacobian_norm = j.norm();
    if jacobian_norm > MAX_FLOW_JACOBIAN_NORM {
        let note = format!("flow Jacobian norm {jacobian_norm:.3e} signals chaotic amplification; check skipped");
        check.note(note.clone());
        return Ok(BracketPreservationReport {
            check,
            skipped: Some(note),
            jacobian_norm,
            richardson: false,
        });
    }
    let mut r = residual(&j);
    let mut richardson = false;
    if r > 0.1 * TOL {
        let half = jacobian(probe / 2.0)?;
        let extrapolated = (4.0 * &half - &j) / 3.0;
        let re = residual(&extrapolated);
        if re < r {
            j = extrapolated;
            r = re;
            richardson = true;
            check.note("Richardson-extrapolated Jacobian");
        }
    }
    let _ = j;
    check.observe(r, z0);
    Ok(BracketPreservationReport {
        check,
        skipped: None,
        jacobian_norm,
        richardson,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConservationEntry {
    pub name: String,
    /// `max_t |f(z(t)) - f(z(0))|`
    pub drift: f64,
    /// `|{f, h}(z(0))|`
    pub bracket_with_h: f64,
    /// True when conservation is expected a priori from `{f, h} ≈ 0`.
    pub integral_of_motion: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConservationReport {
    pub entries: Vec<ConservationEntry>,
}

/// Drift of the energy and of each tracked quantity, paired with the
/// a-priori bracket test at the initial point.
pub fn conservation_report(
    p: &PoissonStructure,
    h: &Expr,
    traj: &Trajectory,
    tracked: &[(String, Expr)],
) -> Result<ConservationReport, FlowError> {
    let Some(z0) = traj.states.first() else {
        return Ok(ConservationReport { entries: Vec::new() });
    };
    let mut entries = Vec::with_capacity(tracked.len() + 1);
    entries.push(ConservationEntry {
        name: "energy".into(),
        drift: traj.energy_drift(),
        bracket_with_h: 0.0,
        integral_of_motion: true,
    });
    for (name, f) in tracked {
        let b = p.bracket_value(f, h, z0)?.abs();
        let values = traj
            .states
            .iter()
            .map(|z| f.eval(z))
            .collect::<Result<Vec<_>, _>>()
            .map_err(PoissonError::Eval)?;
        entries.push(ConservationEntry {
            name: name.clone(),
            drift: drift(values.into_iter()),
            bracket_with_h: b,
            integral_of_motion: b <= 1e-12,
        });
    }
    Ok(ConservationReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::f64::consts::TAU;

    #[test]
    fn grid_lands_on_final_time() {
        assert_eq!(IntegratorConfig::rk4(1e-3, 1.0).grid().unwrap().0, 1000);
        let (n, h) = IntegratorConfig::rk4(1e-3, TAU).grid().unwrap();
        assert_eq!(n, 6284);
        assert!((n as f64 * h - TAU).abs() < 1e-12);
        assert_eq!(IntegratorConfig::rk4(1e-3, 0.0).grid().unwrap().0, 0);
        assert!(IntegratorConfig::rk4(0.0, 1.0).grid().is_err());
        assert!(IntegratorConfig::rk4(1e-3, -1.0).grid().is_err());
    }

    #[test]
    fn harmonic_oscillator_returns_after_one_period() {
        let p = fixtures::canonical(1);
        let h = fixtures::harmonic_oscillator();
        let traj = integrate(&p, &h, &[1.0, 0.0], &IntegratorConfig::rk4(1e-3, TAU), &[]).unwrap();
        let end = traj.last_state().unwrap();
        assert!((end[0] - 1.0).abs() <= 1e-10 && end[1].abs() <= 1e-10, "{end:?}");
        // q̇ = p, ṗ = -q: a quarter period later the state is (0, -1).
        let quarter = integrate(&p, &h, &[1.0, 0.0], &IntegratorConfig::rk4(1e-3, TAU / 4.0), &[]).unwrap();
        let z = quarter.last_state().unwrap();
        assert!(z[0].abs() < 1e-10 && (z[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_time_and_constant_hamiltonian() {
        let p = fixtures::canonical(1);
        let traj = integrate(
            &p,
            &Expr::constant(3.0),
            &[0.4, -0.2],
            &IntegratorConfig::rk4(0.1, 1.0),
            &[],
        )
        .unwrap();
        assert!(traj.states.iter().all(|z| z == &vec![0.4, -0.2]));
        let single = integrate(
            &p,
            &fixtures::harmonic_oscillator(),
            &[0.4, -0.2],
            &IntegratorConfig::rk4(0.1, 0.0),
            &[],
        )
        .unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn domain_error_keeps_partial_trajectory() {
        let p = fixtures::canonical(1);
        // q̇ = p > 0 and ṗ = 1/(2 sqrt(1 - q)) > 0 drive q past 1.
        let h = (1.0 - Expr::var(0)).sqrt() + Expr::var(1).powi(2) / 2.0;
        let err = integrate(&p, &h, &[0.0, 1.0], &IntegratorConfig::rk4(0.01, 10.0), &[]).unwrap_err();
        let partial = err.partial().unwrap();
        assert!(!partial.is_empty());
        assert!(partial.last_time() > 0.0 && partial.last_time() < 10.0);
    }

    #[test]
    fn rigid_body_conserves_casimir() {
        let p = fixtures::so3();
        let h = fixtures::rigid_body_hamiltonian(1.0, 2.0, 3.0);
        let c = Expr::var(0).powi(2) + Expr::var(1).powi(2) + Expr::var(2).powi(2);
        let traj = integrate(
            &p,
            &h,
            &[1.0, 0.01, 0.0],
            &IntegratorConfig::rk4(1e-3, 100.0),
            &[c.clone()],
        )
        .unwrap();
        assert!(traj.tracked_drift(0) <= 1e-8, "{}", traj.tracked_drift(0));
        let rep = conservation_report(&p, &h, &traj, &[("casimir".into(), c)]).unwrap();
        assert!(rep.entries[1].integral_of_motion);
        assert!(rep.entries[0].drift <= 1e-8);
    }

    #[test]
    fn reversibility() {
        let p = fixtures::so3();
        let h = fixtures::rigid_body_hamiltonian(1.0, 2.0, 3.0);
        let z0 = [0.3, -0.7, 0.5];
        let cfg = IntegratorConfig::rk4(1e-3, 1.0);
        let fwd = integrate(&p, &h, &z0, &cfg, &[]).unwrap();
        let back = integrate(&p, &(-&h), fwd.last_state().unwrap(), &cfg, &[]).unwrap();
        let end = back.last_state().unwrap();
        assert!(end.iter().zip(&z0).all(|(a, b)| (a - b).abs() <= 1e-8));
    }

    #[test]
    fn bracket_preservation() {
        let osc = bracket_preservation_check(
            &fixtures::canonical(1),
            &fixtures::harmonic_oscillator(),
            &[0.6, -0.2],
            1.0,
            1e-3,
            1e-5,
        )
        .unwrap();
        assert!(osc.check.passed, "{}", osc.check);
        let rb = bracket_preservation_check(
            &fixtures::so3(),
            &fixtures::rigid_body_hamiltonian(1.0, 2.0, 3.0),
            &[0.4, 0.9, -0.3],
            1.0,
            1e-3,
            1e-5,
        )
        .unwrap();
        assert!(rb.check.passed && rb.skipped.is_none(), "{}", rb.check);
        let zero = bracket_preservation_check(
            &fixtures::so3(),
            &fixtures::rigid_body_hamiltonian(1.0, 2.0, 3.0),
            &[0.4, 0.9, -0.3],
            0.0,
            1e-3,
            1e-5,
        )
        .unwrap();
        assert!(zero.check.worst_residual < 1e-9);
    }
}
