//! Best-effort simplification: constant folding, `0`/`1` identities and
//! like-term collection. Non-polynomial subtrees (`sin(..)`, `a / b` with a
//! non-constant divisor, fractional powers) are simplified recursively and
//! then treated as opaque atoms of a polynomial, so `sin(x)*y - y*sin(x)`
//! still collapses to `0`. The result is only guaranteed to evaluate the
//! same as the input, not to be canonical.

use std::collections::{BTreeMap, HashMap};

use super::{BinaryOp, Expr, Node, UnaryOp};

/// Expansion gives up (and keeps the factored form) past this many terms.
const MAX_TERMS: usize = 512;
const MAX_EXPANDED_POWER: f64 = 8.0;

type Monomial = Vec<(String, u32)>;

#[derive(Debug, Clone, Copy)]
struct Coef {
    value: f64,
    magnitude: f64,
}

#[derive(Debug, Clone, Default)]
struct AtomPoly {
    terms: BTreeMap<Monomial, Coef>,
}

impl AtomPoly {
    fn constant(c: f64) -> Self {
        let mut p = AtomPoly::default();
        p.push(Vec::new(), c, c.abs());
        p
    }

    fn atom(key: String) -> Self {
        let mut p = AtomPoly::default();
        p.push(vec![(key, 1)], 1.0, 1.0);
        p
    }

    fn push(&mut self, m: Monomial, value: f64, magnitude: f64) {
        let c = self.terms.entry(m).or_insert(Coef {
            value: 0.0,
            magnitude: 0.0,
        });
        c.value += value;
        c.magnitude += magnitude;
    }

    fn as_constant(&self) -> Option<f64> {
        let mut v = 0.0;
        for (m, c) in &self.terms {
            if !m.is_empty() {
                return None;
            }
            v = c.value;
        }
        Some(v)
    }

    fn add(mut self, other: &AtomPoly, sign: f64) -> AtomPoly {
        for (m, c) in &other.terms {
            self.push(m.clone(), sign * c.value, c.magnitude);
        }
        self.clean()
    }

    fn scale(mut self, s: f64) -> AtomPoly {
        for c in self.terms.values_mut() {
            c.value *= s;
            c.magnitude *= s.abs();
        }
        self.clean()
    }

    fn mul(&self, other: &AtomPoly) -> AtomPoly {
        let mut out = AtomPoly::default();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.push(merge(ma, mb), ca.value * cb.value, ca.magnitude * cb.magnitude);
            }
        }
        out.clean()
    }

    fn clean(mut self) -> Self {
        self.terms
            .retain(|_, c| c.value != 0.0 && c.value.abs() > 16.0 * f64::EPSILON * c.magnitude);
        self
    }
}

fn merge(a: &Monomial, b: &Monomial) -> Monomial {
    let mut map: BTreeMap<String, u32> = a.iter().cloned().collect();
    for (k, p) in b {
        *map.entry(k.clone()).or_insert(0) += p;
    }
    map.into_iter().collect()
}

#[derive(Default)]
struct Simplifier {
    atoms: HashMap<String, Expr>,
}

impl Simplifier {
    fn atom(&mut self, e: Expr) -> AtomPoly {
        if let Some(c) = e.as_const() {
            return AtomPoly::constant(c);
        }
        let key = e.to_string();
        self.atoms.entry(key.clone()).or_insert(e);
        AtomPoly::atom(key)
    }

    fn expand(&mut self, e: &Expr) -> AtomPoly {
        match e.node() {
            Node::Const(c) => AtomPoly::constant(*c),
            Node::Var(_) => self.atom(e.clone()),
            Node::Unary(UnaryOp::Neg, a) => self.expand(a).scale(-1.0),
            Node::Unary(op, a) => {
                let inner = self.simplify(a);
                self.atom(Expr::unary(*op, inner))
            }
            Node::Binary(op, a, b) => match op {
                BinaryOp::Add => {
                    let pa = self.expand(a);
                    pa.add(&self.expand(b), 1.0)
                }
                BinaryOp::Sub => {
                    let pa = self.expand(a);
                    pa.add(&self.expand(b), -1.0)
                }
                BinaryOp::Mul => {
                    let pa = self.expand(a);
                    let pb = self.expand(b);
                    if pa.terms.len() * pb.terms.len() > MAX_TERMS {
                        let product = self.rebuild(&pa) * self.rebuild(&pb);
                        self.atom(product)
                    } else {
                        pa.mul(&pb)
                    }
                }
                BinaryOp::Div => {
                    let denominator = self.expand(b);
                    match denominator.as_constant() {
                        Some(c) if c != 0.0 => self.expand(a).scale(1.0 / c),
                        _ => {
                            let numerator = self.simplify(a);
                            let denominator = self.rebuild(&denominator);
                            self.atom(Expr::div(numerator, denominator))
                        }
                    }
                }
            },
            Node::Pow(a, k) => {
                let base = self.expand(a);
                let small_integer = k.fract() == 0.0 && *k > 0.0 && *k <= MAX_EXPANDED_POWER;
                if small_integer && base.terms.len().pow(*k as u32) <= MAX_TERMS {
                    let mut acc = AtomPoly::constant(1.0);
                    for _ in 0..(*k as u32) {
                        acc = acc.mul(&base);
                    }
                    acc
                } else {
                    let base = self.rebuild(&base);
                    self.atom(Expr::pow(base, *k))
                }
            }
        }
    }

    fn simplify(&mut self, e: &Expr) -> Expr {
        let p = self.expand(e);
        self.rebuild(&p)
    }

    fn rebuild(&self, p: &AtomPoly) -> Expr {
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for (m, c) in &p.terms {
            let mut factors = Expr::one();
            for (key, power) in m {
                let atom = self.atoms[key].clone();
                factors = factors * Expr::pow(atom, f64::from(*power));
            }
            if c.value < 0.0 && !m.is_empty() {
                negative.push(Expr::constant(-c.value) * factors);
            } else {
                positive.push(Expr::constant(c.value) * factors);
            }
        }
        let mut out = Expr::sum(positive);
        for term in negative {
            out = out - term;
        }
        out
    }
}

/// Simplifies `e` while preserving its value wherever `e` is defined.
pub fn simplify(e: &Expr) -> Expr {
    Simplifier::default().simplify(e)
}
