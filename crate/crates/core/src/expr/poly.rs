//! Expanded multivariate polynomials: a map from exponent vectors to
//! coefficients. Used wherever an exact zero test is needed (closure
//! relations, symbolic Jacobi for polynomial tensors).

use std::collections::BTreeMap;

use super::{BinaryOp, Expr, Node, UnaryOp};

/// Coefficient together with the sum of magnitudes that produced it, so that
/// cancellation down to rounding noise can be recognized as an exact zero.
#[derive(Debug, Clone, Copy)]
struct Coef {
    value: f64,
    magnitude: f64,
}

impl Coef {
    fn new(value: f64) -> Self {
        Coef {
            value,
            magnitude: value.abs(),
        }
    }

    fn is_noise(&self) -> bool {
        self.value == 0.0 || self.value.abs() <= 16.0 * f64::EPSILON * self.magnitude
    }
}

#[derive(Debug, Clone)]
pub struct Poly {
    dim: usize,
    terms: BTreeMap<Vec<u32>, Coef>,
}

impl PartialEq for Poly {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && (self - other).is_zero()
    }
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Poly {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Poly::zero(dim);
        p.insert(vec![0; dim], Coef::new(c));
        p
    }

    pub fn var(dim: usize, i: usize) -> Self {
        let mut exps = vec![0; dim];
        exps[i] = 1;
        let mut p = Poly::zero(dim);
        p.insert(exps, Coef::new(1.0));
        p
    }

    pub fn monomial(exponents: Vec<u32>, c: f64) -> Self {
        let mut p = Poly::zero(exponents.len());
        p.insert(exponents, Coef::new(c));
        p
    }

    fn insert(&mut self, exps: Vec<u32>, c: Coef) {
        let entry = self.terms.entry(exps).or_insert(Coef {
            value: 0.0,
            magnitude: 0.0,
        });
        entry.value += c.value;
        entry.magnitude += c.magnitude;
    }

    fn cleaned(mut self) -> Self {
        self.terms.retain(|_, c| !c.is_noise());
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(Coef::is_noise)
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|(_, c)| !c.is_noise())
            .map(|(e, _)| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn term_count(&self) -> usize {
        self.terms.values().filter(|c| !c.is_noise()).count()
    }

    /// Nonzero terms as `(exponents, coefficient)`, in lexicographic order.
    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms
            .iter()
            .filter(|(_, c)| !c.is_noise())
            .map(|(e, c)| (e.as_slice(), c.value))
    }

    pub fn scale(&self, s: f64) -> Poly {
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                (
                    e.clone(),
                    Coef {
                        value: c.value * s,
                        magnitude: c.magnitude * s.abs(),
                    },
                )
            })
            .collect();
        Poly { dim: self.dim, terms }.cleaned()
    }

    pub fn pow(&self, k: u32) -> Poly {
        (0..k).fold(Poly::constant(self.dim, 1.0), |acc, _| &acc * self)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms()
            .map(|(e, c)| e.iter().zip(x).fold(c, |acc, (&k, &xi)| acc * xi.powi(k as i32)))
            .sum()
    }

    /// Expands a polynomial expression. Returns `None` when `e` uses a
    /// transcendental function, a non-constant divisor, a non-integer or
    /// negative exponent, or exceeds `max_degree` at any stage.
    pub fn from_expr(e: &Expr, dim: usize, max_degree: u32) -> Option<Poly> {
        let p = match e.node() {
            Node::Const(c) => Poly::constant(dim, *c),
            Node::Var(i) if *i < dim => Poly::var(dim, *i),
            Node::Var(_) => return None,
            Node::Unary(UnaryOp::Neg, a) => Poly::from_expr(a, dim, max_degree)?.scale(-1.0),
            Node::Unary(..) => return None,
            Node::Binary(op, a, b) => {
                let pa = Poly::from_expr(a, dim, max_degree)?;
                match op {
                    BinaryOp::Add => &pa + &Poly::from_expr(b, dim, max_degree)?,
                    BinaryOp::Sub => &pa - &Poly::from_expr(b, dim, max_degree)?,
                    BinaryOp::Mul => {
                        let pb = Poly::from_expr(b, dim, max_degree)?;
                        if pa.degree() + pb.degree() > max_degree {
                            return None;
                        }
                        &pa * &pb
                    }
                    BinaryOp::Div => {
                        let divisor = Poly::from_expr(b, dim, max_degree)?;
                        let c = divisor.as_constant()?;
                        if c == 0.0 {
                            return None;
                        }
                        pa.scale(1.0 / c)
                    }
                }
            }
            Node::Pow(a, k) => {
                if k.fract() != 0.0 || *k < 0.0 {
                    return None;
                }
                let pa = Poly::from_expr(a, dim, max_degree)?;
                let k = *k as u32;
                if pa.degree() * k > max_degree {
                    return None;
                }
                pa.pow(k)
            }
        };
        (p.degree() <= max_degree).then_some(p)
    }

    pub fn as_constant(&self) -> Option<f64> {
        let mut value = 0.0;
        for (e, c) in self.terms() {
            if e.iter().any(|&k| k != 0) {
                return None;
            }
            value = c;
        }
        Some(value)
    }

    pub fn to_expr(&self) -> Expr {
        Expr::sum(self.terms().map(|(e, c)| {
            let mut term = Expr::constant(c);
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    term = term * Expr::pow(Expr::var(i), f64::from(k));
                }
            }
            term
        }))
    }
}

/// All exponent vectors in `dim` variables of total degree at most
/// `max_degree`, ordered by degree and then lexicographically.
pub fn monomials(dim: usize, max_degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for d in 0..=max_degree {
        let mut current = vec![0u32; dim];
        fill(&mut out, &mut current, 0, d);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, i: usize, remaining: u32) {
    if i + 1 == current.len() {
        current[i] = remaining;
        out.push(current.clone());
        return;
    }
    if current.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for k in (0..=remaining).rev() {
        current[i] = k;
        fill(out, current, i + 1, remaining - k);
    }
    current[i] = 0;
}

impl std::ops::Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.insert(e.clone(), *c);
        }
        out.cleaned()
    }
}

impl std::ops::Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &rhs.scale(-1.0)
    }
}

impl std::ops::Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.insert(
                    e,
                    Coef {
                        value: ca.value * cb.value,
                        magnitude: ca.magnitude * cb.magnitude,
                    },
                );
            }
        }
        out.cleaned()
    }
}
