//! Subcommand implementations. Each returns a [`RunReport`]; writing output
//! files is part of the command, printing the report is not.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use preduce_core::dirac::{DiracContext, DiracError};
use preduce_core::expr::{simplify, Expr};
use preduce_core::flows::{
    conservation_report, integrate, integrate_constrained, FlowError, IntegratorConfig, Method, Trajectory,
};
use preduce_core::linalg;
use preduce_core::quotient::QuotientError;
use preduce_core::report::{format_point, CheckReport};
use preduce_core::sampling::{rng, SampleRng};
use preduce_core::submanifold::{ConstraintSet, SubmanifoldKind, SurfaceSample};
use serde::Serialize;
use thiserror::Error;

use crate::definition::{BoxDef, FlowDef, InputError, Problem, ProblemDefinition, TensorEntry, Tolerances, Tracked};
use crate::report::RunReport;

/// Samples at which pointwise values are listed in reports.
const LISTED_SAMPLES: usize = 5;
/// Random polynomial pairs used by sampled bracket identities.
const PROBE_PAIRS: usize = 10;
const DEFAULT_DT: f64 = 1e-3;
const DEFAULT_T: f64 = 10.0;
/// Constraint residual allowed along projected flows.
const PROJECTED_RESIDUAL_TOL: f64 = 1e-12;
const TANGENCY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Input(#[from] InputError),
    /// The computation could not proceed (no surface samples, a set that
    /// is not cosymplectic, ...). Reported as a validation failure.
    #[error("{0}")]
    Failed(String),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Input(_) => 2,
            CommandError::Failed(_) | CommandError::Output { .. } => 1,
        }
    }
}

fn failed(e: impl std::fmt::Display) -> CommandError {
    CommandError::Failed(e.to_string())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CommandError> {
    std::fs::write(path, contents).map_err(|source| CommandError::Output {
        path: path.display().to_string(),
        source,
    })
}

fn new_report(command: &str, input: &Path, problem: &Problem, seed: u64) -> RunReport {
    RunReport::new(command, &input.display().to_string(), problem.raw().as_bytes(), seed)
}

fn surface_samples(
    problem: &Problem,
    set: &ConstraintSet,
    rng: &mut SampleRng,
) -> Result<Vec<SurfaceSample>, CommandError> {
    set.sample_surface(problem.settings.surface_samples, rng)
        .map_err(|e| failed(format!("sampling the constraint surface failed: {e}")))
}

pub fn check(input: &Path, problem: &Problem, seed: u64) -> Result<RunReport, CommandError> {
    let mut report = new_report("check", input, problem, seed);
    let p = &problem.structure;
    let s = &problem.settings;
    let mut r = rng(seed);
    let points = s.sample_box.random_points(&mut r, p.dim(), s.samples);
    report.detail("dimension", p.dim());

    let mut anti = CheckReport::new("antisymmetry", 1e-12);
    let mut ranks = Vec::with_capacity(points.len());
    for z in &points {
        match p.matrix_at(z) {
            Ok(b) => {
                anti.observe(linalg::max_abs(&(&b + b.transpose())), z);
                ranks.push(linalg::rank(&b, linalg::RANK_TOL));
            }
            Err(e) => anti.fail(format!("tensor evaluation failed: {e}"), Some(z)),
        }
    }
    if let (Some(lo), Some(hi)) = (ranks.iter().min(), ranks.iter().max()) {
        report.detail("rank range", format!("{lo}..={hi}"));
    }
    report.check(anti);
    report.check(p.jacobi_check(&problem.validation_options()));
    for (name, c) in &problem.casimirs {
        let mut check = match p.is_casimir_with_tol(c, &points, s.casimir) {
            Ok(c) => c,
            Err(e) => {
                let mut c = CheckReport::new("casimir", s.casimir);
                c.fail(e.to_string(), None);
                c
            }
        };
        check.name = format!("casimir {name}");
        report.check(check);
    }
    Ok(report)
}

pub fn classify(
    input: &Path,
    problem: &Problem,
    constraints: Option<&str>,
    seed: u64,
) -> Result<RunReport, CommandError> {
    let mut report = new_report("classify", input, problem, seed);
    let (name, set) = problem.constraint_set(constraints)?;
    let mut r = rng(seed);
    let samples = surface_samples(problem, set, &mut r)?;
    let class = set.classify(&samples).map_err(failed)?;
    report.detail("constraints", name);
    report.detail("surface samples", samples.len());
    report.detail("kind", class.kind);
    report.detail("involution proven", class.involution_proven);
    let conds: Vec<f64> = class.evidence.iter().map(|e| e.condition).collect();
    let lo = conds.iter().copied().fold(f64::INFINITY, f64::min);
    if lo.is_finite() {
        report.detail("cond(C) range", format!("{lo:.3e} .. {:.3e}", class.worst_condition()));
    } else {
        report.detail("cond(C) range", "undefined (C is singular at every sample)");
    }
    let ranks: Vec<usize> = class.evidence.iter().map(|e| e.c_rank).collect();
    report.detail(
        "rank(C) range",
        format!(
            "{}..={}",
            ranks.iter().min().unwrap_or(&0),
            ranks.iter().max().unwrap_or(&0)
        ),
    );
    for w in &class.warnings {
        report.detail("warning", w);
    }

    let mut uniform = CheckReport::new("classification is uniform across samples", 0.0);
    for e in &class.evidence {
        uniform.observe(if e.kind == class.kind { 0.0 } else { 1.0 }, &e.point);
    }
    if class.kind == SubmanifoldKind::Mixed {
        uniform.fail("samples disagree on the type of the submanifold", None);
    }
    report.check(uniform);

    match class.kind {
        SubmanifoldKind::Cosymplectic => {
            let mut gap = CheckReport::new("cosymplectic: (TS)° meets ker B# trivially", 0.0);
            let mut split = CheckReport::new("cosymplectic: TM = TS ⊕ B#((TS)°)", 0.0);
            let mut transverse = CheckReport::new("cosymplectic: TS + im B# = TM", 0.0);
            for c in class.decomposition.iter().flatten() {
                gap.observe(if c.conormal_kernel_gap > 1e-10 { 0.0 } else { 1.0 }, &c.point);
                split.observe((c.dim - c.decomposition_rank) as f64, &c.point);
                transverse.observe((c.dim - c.transversality_rank) as f64, &c.point);
                if !c.passed() {
                    gap.note(format!(
                        "gap {:.3e} at {}",
                        c.conormal_kernel_gap,
                        format_point(&c.point)
                    ));
                }
            }
            report.check(gap);
            report.check(split);
            report.check(transverse);
        }
        SubmanifoldKind::Coisotropic | SubmanifoldKind::PoissonSubmanifold => {
            let eq = set.coisotropic_equivalences_test(&samples, &mut r).map_err(failed)?;
            report.detail("characterizations agree", eq.agree);
            report.check(eq.matrix);
            report.check(eq.tangency);
            report.check(eq.involution);
        }
        SubmanifoldKind::Mixed => {}
    }
    Ok(report)
}

#[derive(Debug, Serialize)]
struct PairValues {
    f: String,
    g: String,
    expression: Option<String>,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct DiracArtifact<'a> {
    constraints: &'a str,
    pairs: Vec<PairValues>,
    tensors: Vec<preduce_core::dirac::ProjectedTensor>,
}

pub fn dirac(
    input: &Path,
    problem: &Problem,
    constraints: Option<&str>,
    pairs: &[String],
    out: Option<&Path>,
    seed: u64,
) -> Result<RunReport, CommandError> {
    let mut report = new_report("dirac", input, problem, seed);
    let (name, set) = problem.constraint_set(constraints)?;
    let parsed: Vec<(String, String, Expr, Expr)> = pairs
        .iter()
        .map(|spec| {
            let (f, g) = spec
                .split_once(',')
                .ok_or_else(|| InputError::Invalid(format!("--pairs expects `f,g`, got `{spec}`")))?;
            Ok((
                f.trim().to_string(),
                g.trim().to_string(),
                problem.parse_expr(f, "--pairs")?,
                problem.parse_expr(g, "--pairs")?,
            ))
        })
        .collect::<Result<_, InputError>>()?;

    let mut r = rng(seed);
    let samples = surface_samples(problem, set, &mut r)?;
    let ctx = DiracContext::new(set.clone(), &samples).map_err(|e| match e {
        DiracError::NotCosymplectic(kind) => failed(format!(
            "constraint set `{name}` is {kind}, not cosymplectic; Dirac brackets need an invertible constraint matrix"
        )),
        e => failed(e),
    })?;
    report.detail("constraints", name);
    report.detail("surface samples", samples.len());
    report.detail("symbolic inverse", ctx.has_symbolic_inverse());
    let listed = &samples[..samples.len().min(LISTED_SAMPLES)];

    let mut artifact = DiracArtifact {
        constraints: name,
        pairs: Vec::new(),
        tensors: Vec::new(),
    };
    for (fs, gs, f, g) in &parsed {
        let expression = if ctx.has_symbolic_inverse() {
            let e = ctx.dirac_bracket_expr(f, g).map_err(failed)?;
            Some(problem.chart.render(&simplify(&e)))
        } else {
            None
        };
        let mut text = String::new();
        if let Some(e) = &expression {
            let _ = writeln!(text, "= {e}");
        }
        let mut values = Vec::with_capacity(listed.len());
        for s in listed {
            let v = ctx.dirac_bracket_value(f, g, s).map_err(failed)?;
            let _ = writeln!(text, "at {}: {v:.12e}", format_point(&s.point));
            values.push(v);
        }
        report.detail(format!("{{{fs}, {gs}}}_D"), text.trim_end());
        artifact.pairs.push(PairValues {
            f: fs.clone(),
            g: gs.clone(),
            expression,
            points: listed.iter().map(|s| s.point.clone()).collect(),
            values,
        });
    }
    for s in listed {
        let t = ctx.reduced_tensor(s).map_err(failed)?;
        if parsed.is_empty() {
            let rows: Vec<String> = t
                .tangential
                .row_iter()
                .map(|row| row.iter().map(|v| format!("{v:+.6e}")).collect::<Vec<_>>().join(" "))
                .collect();
            report.detail(
                format!("tangential tensor at {}", format_point(&s.point)),
                rows.join("\n"),
            );
        }
        artifact.tensors.push(t);
    }

    for c in ctx.structural_checks(&samples, PROBE_PAIRS, &mut r).map_err(failed)? {
        report.check(c);
    }
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&artifact).expect("artifact serializes") + "\n";
        write_file(path, &text)?;
        report.artifacts.push(path.display().to_string());
    }
    Ok(report)
}

/// `<stem>_reduced.json` next to the input.
pub fn default_reduced_path(input: &Path) -> PathBuf {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    input.with_file_name(format!("{stem}_reduced.json"))
}

fn quotient_failure(check: &str, e: QuotientError) -> CheckReport {
    let mut c = CheckReport::new(check, 0.0);
    c.fail(e.to_string(), None);
    c
}

pub fn reduce(input: &Path, problem: &Problem, out: Option<&Path>, seed: u64) -> Result<RunReport, CommandError> {
    let mut report = new_report("reduce", input, problem, seed);
    let q = problem.quotient()?;
    let spec = &q.spec;
    let s = &problem.settings;
    let mut r = rng(seed);
    let points = s.sample_box.random_points(&mut r, problem.chart.dim(), s.samples);
    report.detail("reduced chart", spec.reduced_chart().names().join(", "));
    report.detail("actions", spec.actions().len());

    match spec.verify_invariance(&points) {
        Ok(c) => report.check(c),
        Err(e) => report.check(quotient_failure("generators are invariant under the action", e)),
    }
    match spec.verify_closure(&points) {
        Ok(c) => {
            report.detail("closure proven symbolically", c.proven);
            report.check(c.closure);
            report.check(c.jacobi);
        }
        Err(e) => report.check(quotient_failure("generator brackets close on the reduced chart", e)),
    }
    match spec.pullback_identity_check(&points, PROBE_PAIRS, &mut r) {
        Ok(c) => report.check(c),
        Err(e) => report.check(quotient_failure("reduced bracket pulls back to the ambient bracket", e)),
    }
    for (name, c) in &q.casimirs {
        match spec.casimir_descent_check(c, &points, 3, &mut r) {
            Ok(d) => {
                let mut reduced = d.reduced;
                reduced.name = format!("reduced casimir {name}");
                let mut ambient = d.ambient;
                ambient.name = format!("pulled-back casimir {name} commutes with invariants");
                report.check(reduced);
                report.check(ambient);
            }
            Err(e) => report.check(quotient_failure(&format!("reduced casimir {name}"), e)),
        }
    }

    if let (Some(h), Some(h_red)) = (&problem.hamiltonian, &q.reduced_hamiltonian) {
        match spec.reduce_hamiltonian(h, h_red, &points) {
            Ok(system) => {
                let mut descent =
                    CheckReport::new("reduced Hamiltonian descends", preduce_core::quotient::QUOTIENT_TOL);
                for z in &points {
                    let y = spec.project(z).map_err(failed)?;
                    descent.observe(h_red.eval(&y).map_err(failed)? - h.eval(z).map_err(failed)?, z);
                }
                report.check(descent);
                if let Some(z0) = &problem.def.initial_point {
                    let (dt, t) = flow_grid(problem.def.flow.as_ref(), None, None);
                    match spec.compare_dynamics(&system, z0, t, dt) {
                        Ok(d) => {
                            report.detail("dynamics steps", d.steps);
                            report.check(d.check);
                        }
                        Err(e) => report.check(quotient_failure("projected ambient flow matches reduced flow", e)),
                    }
                }
            }
            Err(QuotientError::Descent { residual, witness }) => {
                let mut c = CheckReport::new("reduced Hamiltonian descends", preduce_core::quotient::QUOTIENT_TOL);
                c.observe(residual, &witness);
                report.check(c);
            }
            Err(e) => report.check(quotient_failure("reduced Hamiltonian descends", e)),
        }
    }

    if !report.passed {
        report.detail("reduced definition", "not written: the reduction failed");
        return Ok(report);
    }
    let reduced = reduced_definition(problem, &q).map_err(failed)?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_reduced_path(input));
    let text = serde_json::to_string_pretty(&reduced).expect("definition serializes") + "\n";
    write_file(&path, &text)?;
    report.artifacts.push(path.display().to_string());
    Ok(report)
}

/// The reduced system as a standalone definition over the reduced chart.
fn reduced_definition(
    problem: &Problem,
    q: &crate::definition::ResolvedQuotient,
) -> Result<ProblemDefinition, preduce_core::EvalError> {
    let qd = problem.def.quotient.as_ref().expect("quotient resolved");
    let chart = q.spec.reduced_chart();
    let initial_point = problem
        .def
        .initial_point
        .as_ref()
        .map(|z0| q.spec.project(z0))
        .transpose()?;
    let relations = qd
        .relations
        .iter()
        .enumerate()
        .map(|(k, r)| Tracked {
            name: format!("relation_{}", k + 1),
            expr: r.clone(),
        })
        .collect();
    let tolerances = problem.def.tolerances.map(|t| Tolerances {
        surface_samples: None,
        ..t
    });
    Ok(ProblemDefinition {
        schema: crate::definition::SCHEMA_VERSION,
        chart: chart.names().to_vec(),
        poisson_tensor: qd
            .closure
            .iter()
            .map(|e| TensorEntry {
                i: e.i.clone(),
                j: e.j.clone(),
                value: e.value.clone(),
            })
            .collect(),
        hamiltonian: qd.reduced_hamiltonian.clone(),
        casimirs: qd.casimirs.clone(),
        constraints: Default::default(),
        sample_box: problem.def.sample_box.map(|b| BoxDef { lo: b.lo, hi: b.hi }),
        tolerances,
        tracked_quantities: relations,
        initial_point,
        flow: problem.def.flow.clone().map(|f| FlowDef {
            method: f.method.filter(|m| m != "projected-rk4"),
            ..f
        }),
        quotient: None,
    })
}

fn flow_grid(def: Option<&FlowDef>, dt: Option<f64>, t: Option<f64>) -> (f64, f64) {
    (
        dt.or(def.and_then(|f| f.dt)).unwrap_or(DEFAULT_DT),
        t.or(def.and_then(|f| f.t_final)).unwrap_or(DEFAULT_T),
    )
}

pub fn parse_method(text: &str) -> Result<Method, InputError> {
    match text {
        "rk4" => Ok(Method::Rk4),
        "projected-rk4" => Ok(Method::ProjectedRk4),
        other => Err(InputError::Invalid(format!(
            "unknown method `{other}` (expected rk4 or projected-rk4)"
        ))),
    }
}

pub fn parse_point(text: &str, dim: usize) -> Result<Vec<f64>, InputError> {
    let z = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| InputError::Invalid(format!("--z0: `{}` is not a number", v.trim())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if z.len() != dim {
        return Err(InputError::Invalid(format!(
            "--z0 has {} coordinates, chart has {dim}",
            z.len()
        )));
    }
    Ok(z)
}

#[derive(Debug, Default, Clone)]
pub struct FlowArgs {
    pub hamiltonian: Option<String>,
    pub z0: Option<String>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub method: Option<String>,
    pub constraints: Option<String>,
}

/// Runs the flow and returns the report with the trajectory as CSV.
pub fn flow(input: &Path, problem: &Problem, args: &FlowArgs, seed: u64) -> Result<(RunReport, String), CommandError> {
    let mut report = new_report("flow", input, problem, seed);
    let h = match &args.hamiltonian {
        Some(text) => problem.parse_expr(text, "--hamiltonian")?,
        None => problem
            .hamiltonian
            .clone()
            .ok_or_else(|| InputError::Invalid("no Hamiltonian: pass --hamiltonian or set `hamiltonian`".into()))?,
    };
    let z0 = match &args.z0 {
        Some(text) => parse_point(text, problem.chart.dim())?,
        None => problem
            .def
            .initial_point
            .clone()
            .ok_or_else(|| InputError::Invalid("no initial point: pass --z0 or set `initial_point`".into()))?,
    };
    let (dt, t) = flow_grid(problem.def.flow.as_ref(), args.dt, args.t_final);
    let constrained = match &args.constraints {
        Some(name) => Some(problem.constraint_set(Some(name))?),
        None => None,
    };
    let method = match args
        .method
        .as_deref()
        .or(problem.def.flow.as_ref().and_then(|f| f.method.as_deref()))
    {
        Some(m) => parse_method(m)?,
        None if constrained.is_some() => Method::ProjectedRk4,
        None => Method::Rk4,
    };
    if method == Method::ProjectedRk4 && constrained.is_none() {
        return Err(InputError::Invalid("projected-rk4 needs --constraints".into()).into());
    }
    let cfg = IntegratorConfig {
        method,
        ..IntegratorConfig::rk4(dt, t)
    };
    cfg.grid().map_err(|e| InputError::Invalid(e.to_string()))?;
    let tracked_exprs: Vec<Expr> = problem.tracked.iter().map(|(_, e)| e.clone()).collect();
    report.detail(
        "method",
        serde_json::to_value(method)
            .expect("method")
            .as_str()
            .unwrap_or_default(),
    );
    report.detail("dt", dt);
    report.detail("T", t);
    report.detail("initial point", format_point(&z0));

    let result = match constrained {
        Some((name, set)) => {
            report.detail("constraints", name);
            let mut r = rng(seed);
            let samples = surface_samples(problem, set, &mut r)?;
            let ctx = DiracContext::new(set.clone(), &samples).map_err(failed)?;
            integrate_constrained(&ctx, &h, &z0, &cfg, &tracked_exprs)
        }
        None => integrate(&problem.structure, &h, &z0, &cfg, &tracked_exprs),
    };
    let traj = match result {
        Ok(traj) => traj,
        Err(e @ FlowError::OffSurface { .. }) => return Err(InputError::Invalid(e.to_string()).into()),
        Err(FlowError::InvalidConfig(m)) => return Err(InputError::Invalid(m).into()),
        Err(e) => {
            let mut c = CheckReport::new("integration completed", 0.0);
            c.fail(e.to_string(), None);
            report.check(c);
            let partial = e.partial().cloned().unwrap_or_default();
            report.detail("last valid time", partial.last_time());
            let csv = trajectory_csv(problem, &partial);
            return Ok((report, csv));
        }
    };
    report.detail("steps", traj.len().saturating_sub(1));
    if let Some(z) = traj.last_state() {
        report.detail("final state", format_point(z));
    }

    let conservation = conservation_report(&problem.structure, &h, &traj, &problem.tracked).map_err(failed)?;
    for e in &conservation.entries {
        if e.integral_of_motion && (constrained.is_none() || e.name == "energy") {
            let mut c = CheckReport::new(format!("{} is conserved", e.name), problem.settings.drift);
            c.observe(e.drift, &z0);
            report.check(c);
        } else {
            report.detail(
                format!("{} drift", e.name),
                format!("{:.3e} (|{{f, h}}(z0)| = {:.3e})", e.drift, e.bracket_with_h),
            );
        }
    }
    if constrained.is_some() {
        let tol = if method == Method::ProjectedRk4 {
            PROJECTED_RESIDUAL_TOL
        } else {
            1e-6
        };
        let mut residual = CheckReport::new("trajectory stays on the constraint surface", tol);
        let mut tangency = CheckReport::new("flow is tangent to the constraint surface", TANGENCY_TOL);
        for ((z, r), v) in traj.states.iter().zip(&traj.constraint_residuals).zip(&traj.tangency) {
            residual.observe(*r, z);
            tangency.observe(*v, z);
        }
        report.check(residual);
        report.check(tangency);
    }
    let csv = trajectory_csv(problem, &traj);
    Ok((report, csv))
}

/// Header `t,<coordinates>,energy,<tracked>`; floats in `{:.16e}`.
pub fn trajectory_csv(problem: &Problem, traj: &Trajectory) -> String {
    let mut out = String::new();
    let mut header: Vec<&str> = vec!["t"];
    header.extend(problem.chart.names().iter().map(String::as_str));
    header.push("energy");
    header.extend(problem.tracked.iter().map(|(n, _)| n.as_str()));
    out.push_str(&header.join(","));
    out.push('\n');
    for (k, (t, z)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut row = vec![format!("{t:.16e}")];
        row.extend(z.iter().map(|v| format!("{v:.16e}")));
        row.push(format!("{:.16e}", traj.energy.get(k).copied().unwrap_or(f64::NAN)));
        if let Some(values) = traj.tracked.get(k) {
            row.extend(values.iter().map(|v| format!("{v:.16e}")));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
