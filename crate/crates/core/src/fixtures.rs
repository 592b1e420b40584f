//! Standard structures, Hamiltonians and constraint sets used by tests, the
//! acceptance suite and the CLI fixture corpus.

use std::sync::Arc;

use crate::expr::{Chart, Expr};
use crate::poisson::{PoissonStructure, SmoothMap, ValidationOptions};
use crate::quotient::QuotientSpec;
use crate::submanifold::ConstraintSet;

fn build(chart: Chart, entries: Vec<(usize, usize, Expr)>) -> PoissonStructure {
    PoissonStructure::from_upper(Arc::new(chart), entries, &ValidationOptions::default())
        .expect("built-in structure validates")
}

/// Canonical structure on ℝ^{2·dof} with chart `(q1..qn, p1..pn)` and
/// `{q_i, p_j} = δ_ij`.
pub fn canonical(dof: usize) -> PoissonStructure {
    let names: Vec<String> = (1..=dof)
        .map(|i| format!("q{i}"))
        .chain((1..=dof).map(|i| format!("p{i}")))
        .collect();
    let chart = Chart::new(names).expect("valid names");
    build(chart, (0..dof).map(|i| (i, i + dof, Expr::one())).collect())
}

/// Lie-Poisson structure on so(3)*: `B^{ij} = -Σ_k ε_ijk x_k`.
pub fn so3() -> PoissonStructure {
    let chart = Chart::new(["x1", "x2", "x3"]).expect("valid names");
    build(
        chart,
        vec![(0, 1, -Expr::var(2)), (0, 2, Expr::var(1)), (1, 2, -Expr::var(0))],
    )
}

/// so(3)* with `B^{12}` perturbed by `x1 x3`; violates Jacobi.
pub fn so3_perturbed() -> PoissonStructure {
    let chart = Arc::new(Chart::new(["x1", "x2", "x3"]).expect("valid names"));
    PoissonStructure::from_upper_unchecked(
        chart,
        vec![
            (0, 1, -Expr::var(2) + Expr::var(0) * Expr::var(2)),
            (0, 2, Expr::var(1)),
            (1, 2, -Expr::var(0)),
        ],
    )
    .expect("shape is valid")
}

/// Zero structure on the given coordinates.
pub fn trivial(names: &[&str]) -> PoissonStructure {
    build(Chart::new(names.iter().copied()).expect("valid names"), Vec::new())
}

/// Block-diagonal product. Chart names of the factors must be disjoint.
pub fn product(a: &PoissonStructure, b: &PoissonStructure) -> PoissonStructure {
    let (na, nb) = (a.dim(), b.dim());
    let names: Vec<String> = a.chart().names().iter().chain(b.chart().names()).cloned().collect();
    let chart = Chart::new(names).expect("factor charts must have disjoint names");
    let shift: Vec<Expr> = (0..nb).map(|i| Expr::var(na + i)).collect();
    let mut entries = Vec::new();
    for i in 0..na {
        for j in i + 1..na {
            entries.push((i, j, a.entry(i, j).clone()));
        }
    }
    for i in 0..nb {
        for j in i + 1..nb {
            entries.push((na + i, na + j, b.entry(i, j).substitute(&shift)));
        }
    }
    build(chart, entries)
}

/// `(q^2 + p^2)/2` on [`canonical`]`(1)`.
pub fn harmonic_oscillator() -> Expr {
    (Expr::var(0).powi(2) + Expr::var(1).powi(2)) / 2.0
}

/// Free rigid body `(x1²/I1 + x2²/I2 + x3²/I3)/2` on [`so3`].
pub fn rigid_body_hamiltonian(i1: f64, i2: f64, i3: f64) -> Expr {
    (Expr::var(0).powi(2) / i1 + Expr::var(1).powi(2) / i2 + Expr::var(2).powi(2) / i3) / 2.0
}

/// Simultaneous rotation of `(q1, q2)` and `(p1, p2)` by `angle` on
/// [`canonical`]`(2)`: the cotangent lift of a planar rotation.
pub fn configuration_rotation(p: &PoissonStructure, angle: f64) -> SmoothMap {
    let (c, s) = (angle.cos(), angle.sin());
    let v = |i| Expr::var(i);
    let components = vec![
        c * v(0) - s * v(1),
        s * v(0) + c * v(1),
        c * v(2) - s * v(3),
        s * v(2) + c * v(3),
    ];
    SmoothMap::new(p.chart(), p.chart(), components).expect("dimensions match")
}

/// Phase rotation of both oscillators of [`canonical`]`(2)` by `angle`:
/// the 1:1 resonance S¹-action, i.e. the time-`angle` flow of
/// `(q1² + p1² + q2² + p2²)/2`.
pub fn phase_rotation(p: &PoissonStructure, angle: f64) -> SmoothMap {
    let (c, s) = (angle.cos(), angle.sin());
    let v = |i| Expr::var(i);
    let components = vec![
        c * v(0) + s * v(2),
        c * v(1) + s * v(3),
        -s * v(0) + c * v(2),
        -s * v(1) + c * v(3),
    ];
    SmoothMap::new(p.chart(), p.chart(), components).expect("dimensions match")
}

/// Second-class pair `(q2, p2)` on [`canonical`]`(2)`. The reduced space is
/// the `(q1, p1)` plane with its canonical bracket.
pub fn flat_second_class() -> ConstraintSet {
    let p = Arc::new(canonical(2));
    ConstraintSet::new(p, vec![Expr::var(1), Expr::var(3)], vec![vec![0.0; 4]]).expect("valid constraints")
}

/// so(3)* × canonical ℝ² with chart `(x1, x2, x3, q1, p1)` and the
/// second-class pair
///
/// ```text
/// ψ1 = x1 + q1 + x3²/5,   ψ2 = x2 + p1
/// ```
///
/// which couples the factors; `{ψ1, ψ2} = 1 - x3 + 0.4 x1 x3`.
pub fn curved_second_class() -> ConstraintSet {
    let p = Arc::new(product(&so3(), &canonical(1)));
    let v = |i| Expr::var(i);
    let psi1 = v(0) + v(3) + v(2).powi(2) / 5.0;
    let psi2 = v(1) + v(4);
    ConstraintSet::new(
        p,
        vec![psi1, psi2],
        vec![vec![0.3, -0.4, 0.3, -0.3, 0.4], vec![-0.5, 0.2, -0.3, 0.4, -0.2]],
    )
    .expect("valid constraints")
}

/// Involutive pair `(p1, p2)` on [`canonical`]`(2)`.
pub fn involutive_pair() -> ConstraintSet {
    let p = Arc::new(canonical(2));
    ConstraintSet::new(p, vec![Expr::var(2), Expr::var(3)], vec![vec![0.0; 4]]).expect("valid constraints")
}

/// Hypersurface `q2 = 0` in [`canonical`]`(2)`.
pub fn hypersurface_q2() -> ConstraintSet {
    let p = Arc::new(canonical(2));
    ConstraintSet::new(p, vec![Expr::var(1)], vec![vec![0.0; 4]]).expect("valid constraints")
}

/// Unit sphere in so(3)*, a symplectic leaf.
pub fn unit_sphere() -> ConstraintSet {
    let p = Arc::new(so3());
    let v = |i| Expr::var(i);
    let f = v(0).powi(2) + v(1).powi(2) + v(2).powi(2) - 1.0;
    ConstraintSet::new(p, vec![f], vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, -1.0]]).expect("valid constraints")
}

/// Hopf invariants of the 1:1 resonance on [`canonical`]`(2)`, in the
/// order `(s1, s2, s3, s0)`:
///
/// ```text
/// s1 = (q1² + p1² - q2² - p2²)/2     s2 = q1 q2 + p1 p2
/// s3 = q1 p2 - q2 p1                 s0 = (q1² + p1² + q2² + p2²)/2
/// ```
pub fn hopf_invariants() -> Vec<Expr> {
    let v = |i| Expr::var(i);
    let (q1, q2, p1, p2) = (v(0), v(1), v(2), v(3));
    let r1 = q1.powi(2) + p1.powi(2);
    let r2 = q2.powi(2) + p2.powi(2);
    vec![
        (&r1 - &r2) / 2.0,
        &q1 * &q2 + &p1 * &p2,
        &q1 * &p2 - &q2 * &p1,
        (r1 + r2) / 2.0,
    ]
}

/// The 1:1 resonance reduction: phase rotations sampled at 8 angles, the
/// Hopf invariants, closure `{s_i, s_j} = 2 ε_ijk s_k` with `s0` central,
/// and the relation `s1² + s2² + s3² - s0² = 0` cutting the image.
pub fn resonance_quotient() -> QuotientSpec {
    let ambient = Arc::new(canonical(2));
    let reduced = Arc::new(Chart::new(["s1", "s2", "s3", "s0"]).expect("valid names"));
    let v = |i| Expr::var(i);
    let closure = vec![(0, 1, 2.0 * v(2)), (0, 2, -2.0 * v(1)), (1, 2, 2.0 * v(0))];
    let relation = v(0).powi(2) + v(1).powi(2) + v(2).powi(2) - v(3).powi(2);
    let actions = (0..8)
        .map(|k| phase_rotation(&ambient, k as f64 * std::f64::consts::TAU / 8.0))
        .collect();
    QuotientSpec::new(ambient, actions, hopf_invariants(), reduced, closure, vec![relation]).expect("valid quotient")
}

/// Translation in `q2` on [`canonical`]`(2)` with invariants `(q1, p1, p2)`;
/// the reduced structure is canonical in `(q1, p1)` with `p2` a Casimir.
pub fn translation_quotient() -> QuotientSpec {
    let ambient = Arc::new(canonical(2));
    let reduced = Arc::new(Chart::new(["u", "v", "w"]).expect("valid names"));
    let actions = [-1.5, -0.5, 0.5, 1.5]
        .iter()
        .map(|&a| {
            let comps = vec![Expr::var(0), Expr::var(1) + a, Expr::var(2), Expr::var(3)];
            SmoothMap::new(ambient.chart(), ambient.chart(), comps).expect("dimensions match")
        })
        .collect();
    QuotientSpec::new(
        ambient,
        actions,
        vec![Expr::var(0), Expr::var(2), Expr::var(3)],
        reduced,
        vec![(0, 1, Expr::one())],
        Vec::new(),
    )
    .expect("valid quotient")
}
