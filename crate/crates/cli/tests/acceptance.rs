//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//! Run with `cargo test -p preduce --test acceptance`.

use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use preduce_core::dirac::DiracContext;
use preduce_core::expr::Expr;
use preduce_core::fixtures;
use preduce_core::flows::{bracket_preservation_check, integrate, integrate_constrained, IntegratorConfig};
use preduce_core::poisson::PoissonStructure;
use preduce_core::sampling::{random_polynomial, rng, SampleBox};
use preduce_core::submanifold::{ConstraintSet, SubmanifoldKind, SurfaceSample};

type Outcome = Result<String, String>;

/// `Ok(summary)` when `cond` holds, `Err(summary)` otherwise.
fn verdict(cond: bool, summary: String) -> Outcome {
    if cond {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Antisymmetry, Leibniz and Jacobi on random polynomial triples.
fn axiom_residuals(p: &PoissonStructure, seed: u64) -> Result<(f64, f64, f64), String> {
    let n = p.dim();
    let mut r = rng(seed);
    let points = SampleBox::default().random_points(&mut r, n, 100);
    let (mut anti, mut leibniz, mut jacobi) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..3 {
        let f = random_polynomial(&mut r, n, 2);
        let g = random_polynomial(&mut r, n, 2);
        let h = random_polynomial(&mut r, n, 2);
        let b = |a: &Expr, c: &Expr| p.bracket(a, c).map_err(err);
        let (fg, gf, gh, fh) = (b(&f, &g)?, b(&g, &f)?, b(&g, &h)?, b(&f, &h)?);
        let fgh = b(&(&f * &g), &h)?;
        let hf = b(&h, &f)?;
        let nested = [b(&fg, &h)?, b(&gh, &f)?, b(&hf, &g)?];
        for z in &points {
            let at = |e: &Expr| e.eval(z).map_err(err);
            anti = anti.max((at(&fg)? + at(&gf)?).abs());
            leibniz = leibniz.max((at(&fgh)? - at(&f)? * at(&gh)? - at(&g)? * at(&fh)?).abs());
            let cyclic: f64 = nested.iter().map(|e| at(e)).sum::<Result<f64, String>>()?;
            jacobi = jacobi.max(cyclic.abs());
            jacobi = jacobi.max(p.jacobi_residual(z).map_err(err)?);
        }
    }
    Ok((anti, leibniz, jacobi))
}

fn criterion_1() -> Outcome {
    let cases = [
        ("canonical R2", fixtures::canonical(1)),
        ("canonical R4", fixtures::canonical(2)),
        ("so(3)*", fixtures::so3()),
        (
            "canonical x trivial R5",
            fixtures::product(&fixtures::canonical(2), &fixtures::trivial(&["t"])),
        ),
    ];
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for (k, (_, p)) in cases.iter().enumerate() {
        let (a, l, j) = axiom_residuals(p, 100 + k as u64)?;
        worst = (worst.0.max(a), worst.1.max(l), worst.2.max(j));
    }
    verdict(
        worst.0 <= 1e-12 && worst.1 <= 1e-12 && worst.2 <= 1e-9,
        format!(
            "Poisson axioms on 4 fixtures: antisymmetry {:.1e}, Leibniz {:.1e}, Jacobi {:.1e}",
            worst.0, worst.1, worst.2
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let so3 = fixtures::so3();
    let pts3 = SampleBox::default().random_points(&mut r, 3, 100);
    let v = Expr::var;
    let norm = v(0).powi(2) + v(1).powi(2) + v(2).powi(2);
    let c = so3.is_casimir_with_tol(&norm, &pts3, 1e-14).map_err(err)?;
    let can = fixtures::canonical(1);
    let pts2 = SampleBox::default().random_points(&mut r, 2, 100);
    let q = can.is_casimir_with_tol(&v(0), &pts2, 1e-14).map_err(err)?;
    verdict(
        c.passed && !q.passed && (q.worst_residual - 1.0).abs() <= 1e-14,
        format!(
            "|x|^2 Casimir residual {:.1e}; q rejected with residual {}",
            c.worst_residual, q.worst_residual
        ),
    )
}

fn criterion_3() -> Outcome {
    let cases: [(&str, ConstraintSet, SubmanifoldKind); 4] = [
        ("(q2,p2)", fixtures::flat_second_class(), SubmanifoldKind::Cosymplectic),
        ("(p1,p2)", fixtures::involutive_pair(), SubmanifoldKind::Coisotropic),
        ("q2=0", fixtures::hypersurface_q2(), SubmanifoldKind::Coisotropic),
        (
            "unit sphere",
            fixtures::unit_sphere(),
            SubmanifoldKind::PoissonSubmanifold,
        ),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, (name, set, expected)) in cases.iter().enumerate() {
        let samples = set.sample_surface(20, &mut rng(30 + k as u64)).map_err(err)?;
        let class = set.classify(&samples).map_err(err)?;
        let mut good = class.kind == *expected && samples.len() >= 20;
        if *expected == SubmanifoldKind::Cosymplectic {
            for s in &samples {
                good &= set.cosymplectic_checks(s).map_err(err)?.passed();
            }
        } else {
            let eq = set.coisotropic_equivalences_test(&samples, &mut rng(40)).map_err(err)?;
            good &= eq.passed() && eq.tangency.passed && eq.involution.passed;
        }
        ok &= good;
        parts.push(format!("{name} -> {}", class.kind));
    }
    verdict(ok, format!("classification at 20 samples each: {}", parts.join(", ")))
}

/// Points `(q1, 0, p1, 0)` spread over the default box.
fn flat_samples(set: &ConstraintSet, count: usize, seed: u64) -> Result<Vec<SurfaceSample>, String> {
    let mut r = rng(seed);
    SampleBox::default()
        .random_points(&mut r, 2, count)
        .into_iter()
        .map(|x| set.sample_at(&[x[0], 0.0, x[1], 0.0]).map_err(err))
        .collect()
}

fn criterion_4() -> Outcome {
    let set = fixtures::flat_second_class();
    let samples = flat_samples(&set, 100, 4)?;
    let d = DiracContext::new(set, &samples).map_err(err)?;
    let plane = fixtures::canonical(1);
    // restriction to S: (q1, q2, p1, p2) -> (q1, 0, p1, 0) in the plane chart (q1, p1)
    let restrict = [Expr::var(0), Expr::zero(), Expr::var(1), Expr::zero()];
    let mut r = rng(44);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let f = random_polynomial(&mut r, 4, 3);
        let g = random_polynomial(&mut r, 4, 3);
        let oracle = plane
            .bracket(&f.substitute(&restrict), &g.substitute(&restrict))
            .map_err(err)?;
        for s in &samples {
            let dirac = d.dirac_bracket_value(&f, &g, s).map_err(err)?;
            let reference = oracle.eval(&[s.point[0], s.point[2]]).map_err(err)?;
            worst = worst.max((dirac - reference).abs());
        }
    }
    verdict(
        worst <= 1e-10,
        format!("Dirac bracket vs canonical R2 bracket, 10 pairs x 100 points: worst {worst:.1e}"),
    )
}

fn dirac_fixtures() -> Result<Vec<(&'static str, DiracContext, Vec<SurfaceSample>)>, String> {
    let flat = fixtures::flat_second_class();
    let flat_samples = flat_samples(&flat, 20, 5)?;
    let curved = fixtures::curved_second_class();
    let curved_samples = curved.sample_surface(20, &mut rng(6)).map_err(err)?;
    Ok(vec![
        (
            "flat",
            DiracContext::new(flat, &flat_samples).map_err(err)?,
            flat_samples,
        ),
        (
            "curved",
            DiracContext::new(curved, &curved_samples).map_err(err)?,
            curved_samples,
        ),
    ])
}

fn criterion_5() -> Outcome {
    let wanted = [
        "dirac: extension independence",
        "dirac: constraints are Casimirs",
        "dirac: Dirac fields are tangent",
        "dirac: nested Jacobi",
        "dirac: projected tensor matches bracket",
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, d, samples) in dirac_fixtures()? {
        let checks = d.structural_checks(&samples, 10, &mut rng(55)).map_err(err)?;
        let mut worst = 0.0f64;
        for w in wanted {
            match checks.iter().find(|c| c.name == w) {
                Some(c) => {
                    ok &= c.passed;
                    worst = worst.max(c.worst_residual);
                }
                None => ok = false,
            }
        }
        ok &= checks.iter().all(|c| c.passed);
        parts.push(format!("{name} worst {worst:.1e}"));
    }
    verdict(ok, format!("Dirac structural properties: {}", parts.join(", ")))
}

fn criterion_6() -> Outcome {
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut min_det = f64::INFINITY;
    for (_, d, samples) in dirac_fixtures()? {
        for s in &samples {
            let l = d.leaf_orthogonality_check(s).map_err(err)?;
            ok &= l.passed && l.pairing <= 1e-10;
            worst = worst.max(l.pairing);
            min_det = min_det.min(l.omega_u_det.abs());
        }
    }
    verdict(
        ok,
        format!("leaf orthogonality on both Dirac fixtures: pairing {worst:.1e}, min |det ω_U| {min_det:.3}"),
    )
}

fn criterion_7() -> Outcome {
    let spec = fixtures::resonance_quotient();
    let mut r = rng(7);
    let points = SampleBox::default().random_points(&mut r, 4, 100);
    let inv = spec.verify_invariance(&points).map_err(err)?;
    let closure = spec.verify_closure(&points).map_err(err)?;
    let master = spec.pullback_identity_check(&points, 10, &mut r).map_err(err)?;
    let s = Expr::var;
    let h_red = s(3) + s(1).powi(2) / 4.0;
    let h = spec.pullback(&h_red);
    let system = spec.reduce_hamiltonian(&h, &h_red, &points).map_err(err)?;
    let dynamics = spec
        .compare_dynamics(&system, &[0.6, 0.2, -0.3, 0.5], 10.0, 1e-3)
        .map_err(err)?;
    verdict(
        inv.worst_residual <= 1e-12
            && closure.passed()
            && closure.closure.worst_residual <= 1e-10
            && master.passed
            && master.samples == 1000
            && dynamics.sup_deviation <= 1e-6,
        format!(
            "1:1 resonance: invariance {:.1e}, closure {:.1e}, pullback identity {:.1e}, dynamics {:.1e}",
            inv.worst_residual, closure.closure.worst_residual, master.worst_residual, dynamics.sup_deviation
        ),
    )
}

fn criterion_8() -> Outcome {
    let can = fixtures::canonical(1);
    let ho = fixtures::harmonic_oscillator();
    let period = integrate(&can, &ho, &[1.0, 0.0], &IntegratorConfig::rk4(1e-3, TAU), &[]).map_err(err)?;
    let z = period.last_state().ok_or("empty trajectory")?;
    let period_err = (z[0] - 1.0).abs().max(z[1].abs());

    let t = 20.0;
    let mut errs = Vec::new();
    for dt in [4e-3, 2e-3, 1e-3, 5e-4] {
        let traj = integrate(&can, &ho, &[1.0, 0.0], &IntegratorConfig::rk4(dt, t), &[]).map_err(err)?;
        let z = traj.last_state().ok_or("empty trajectory")?;
        errs.push((dt, ((z[0] - t.cos()).powi(2) + (z[1] + t.sin()).powi(2)).sqrt()));
    }
    let n = errs.len() as f64;
    let mx = errs.iter().map(|(d, _)| d.ln()).sum::<f64>() / n;
    let my = errs.iter().map(|(_, e)| e.ln()).sum::<f64>() / n;
    let (num, den) = errs.iter().fold((0.0, 0.0), |(a, b), (d, e)| {
        (a + (d.ln() - mx) * (e.ln() - my), b + (d.ln() - mx).powi(2))
    });
    let order = num / den;

    let so3 = fixtures::so3();
    let rb = fixtures::rigid_body_hamiltonian(1.0, 2.0, 3.0);
    let v = Expr::var;
    let casimir = v(0).powi(2) + v(1).powi(2) + v(2).powi(2);
    let traj = integrate(
        &so3,
        &rb,
        &[0.3, 1.0, 0.2],
        &IntegratorConfig::rk4(1e-2, 100.0),
        &[casimir],
    )
    .map_err(err)?;
    let drift = traj.tracked_drift(0);

    let bp_ho = bracket_preservation_check(&can, &ho, &[0.7, -0.4], 1.0, 1e-3, 1e-5).map_err(err)?;
    let bp_rb = bracket_preservation_check(&so3, &rb, &[0.3, 1.0, 0.2], 1.0, 1e-3, 1e-5).map_err(err)?;
    let bp_ok = |b: &preduce_core::flows::BracketPreservationReport| b.check.passed && b.skipped.is_none();
    verdict(
        period_err <= 1e-10 && order >= 3.8 && drift <= 1e-8 && bp_ok(&bp_ho) && bp_ok(&bp_rb),
        format!(
            "period return {period_err:.1e}, RK4 order {order:.2}, rigid-body Casimir drift {drift:.1e}, \
             bracket preservation {:.1e} / {:.1e}",
            bp_ho.check.worst_residual, bp_rb.check.worst_residual
        ),
    )
}

fn criterion_9() -> Outcome {
    let set = fixtures::flat_second_class();
    let samples = set.sample_surface(5, &mut rng(9)).map_err(err)?;
    let d = DiracContext::new(set, &samples).map_err(err)?;
    let v = Expr::var;
    // the (q2, p2) part is stiff on purpose; the Dirac flow must ignore it
    let h = (v(0).powi(2) + v(2).powi(2)) / 2.0 + v(1).powi(2) + v(3).powi(2) * 3.0;
    let traj = integrate_constrained(
        &d,
        &h,
        &[0.8, 0.0, -0.3, 0.0],
        &IntegratorConfig::projected(1e-3, 10.0),
        &[],
    )
    .map_err(err)?;
    let free = integrate(
        &fixtures::canonical(1),
        &fixtures::harmonic_oscillator(),
        &[0.8, -0.3],
        &IntegratorConfig::rk4(1e-3, 10.0),
        &[],
    )
    .map_err(err)?;
    let deviation = traj
        .states
        .iter()
        .zip(&free.states)
        .map(|(a, b)| (a[0] - b[0]).abs().max((a[2] - b[1]).abs()))
        .fold(0.0f64, f64::max);
    let residual = traj.max_constraint_residual();
    verdict(
        residual <= 1e-12 && deviation <= 1e-10 && traj.len() == free.len(),
        format!(
            "projected-rk4 over T = 10: constraint residual {residual:.1e}, deviation from oscillator {deviation:.1e}"
        ),
    )
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<(i32, Vec<u8>, Vec<u8>), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_preduce"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(err)?;
    Ok((out.status.code().unwrap_or(-1), out.stdout, out.stderr))
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for entry in std::fs::read_dir(&corpus).map_err(err)? {
        let path = entry.map_err(err)?.path();
        if path.extension().is_some_and(|e| e == "json") {
            std::fs::copy(&path, dir.path().join(path.file_name().expect("file name"))).map_err(err)?;
        }
    }
    let runs: [&[&str]; 5] = [
        &["check", "so3.json", "--seed", "7"],
        &["classify", "involution.json", "--constraints", "momenta", "--seed", "7"],
        &[
            "dirac",
            "curved.json",
            "--pairs",
            "x1,x3",
            "--out",
            "dirac.json",
            "--seed",
            "7",
        ],
        &["reduce", "resonance.json", "--out", "reduced.json", "--seed", "7"],
        &["flow", "rigid_body.json", "--out", "flow.csv", "--seed", "7"],
    ];
    let artifacts = ["dirac.json", "reduced.json", "flow.csv"];
    let mut outputs = Vec::new();
    for round in 0..2 {
        let mut this = Vec::new();
        for args in runs {
            let (code, stdout, stderr) = run_cli(args, dir.path())?;
            if code != 0 {
                return Err(format!(
                    "`preduce {}` exited {code} in round {round}: {}",
                    args.join(" "),
                    String::from_utf8_lossy(&stderr)
                ));
            }
            this.push(stdout);
        }
        for a in artifacts {
            this.push(std::fs::read(dir.path().join(a)).map_err(err)?);
        }
        outputs.push(this);
    }
    let identical = outputs[0] == outputs[1];
    let (code, _, _) = run_cli(&["check", "reduced.json"], dir.path())?;
    verdict(
        identical && code == 0,
        format!(
            "5 commands x 2 runs byte-identical: {identical} ({} outputs); check on reduced output exits {code}",
            outputs[0].len()
        ),
    )
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let start = Instant::now();
    let mut failures = 0;
    for (n, f) in criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {n}: PASS {msg} [{secs:.1}s]"),
            Err(msg) => {
                failures += 1;
                println!("criterion {n}: FAIL {msg} [{secs:.1}s]");
            }
        }
    }
    println!(
        "acceptance: {}/10 criteria passed in {:.1}s",
        10 - failures,
        start.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
