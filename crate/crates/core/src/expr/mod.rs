//! Symbolic scalar expressions over the coordinates of a chart.
//!
//! An [`Expr`] is an immutable, reference-counted tree. Coordinates are
//! referenced by index into a [`Chart`]; the chart itself only supplies names
//! for parsing and printing. Construction goes through smart constructors that
//! fold constants and drop `0`/`1` identities, which keeps derivative and
//! bracket trees from ballooning.

mod parse;
mod poly;
mod simplify;

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

pub use parse::{parse, ParseError};
pub use poly::{monomials, Poly};
pub use simplify::simplify;

/// Built-in functions, also the reserved identifiers of the grammar.
pub const FUNCTION_NAMES: [&str; 5] = ["sin", "cos", "exp", "ln", "sqrt"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            "exp" => Some(UnaryOp::Exp),
            "ln" => Some(UnaryOp::Ln),
            "sqrt" => Some(UnaryOp::Sqrt),
            _ => None,
        }
    }

    /// Applies the operation, or returns a reason when the argument is
    /// outside the domain.
    fn apply(self, x: f64) -> Result<f64, &'static str> {
        match self {
            UnaryOp::Neg => Ok(-x),
            UnaryOp::Sin => Ok(x.sin()),
            UnaryOp::Cos => Ok(x.cos()),
            UnaryOp::Exp => Ok(x.exp()),
            UnaryOp::Ln if x <= 0.0 => Err("logarithm of a non-positive value"),
            UnaryOp::Ln => Ok(x.ln()),
            UnaryOp::Sqrt if x < 0.0 => Err("square root of a negative value"),
            UnaryOp::Sqrt => Ok(x.sqrt()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Expr),
    Binary(BinaryOp, Expr, Expr),
    /// Power with a constant exponent.
    Pow(Expr, f64),
}

/// Immutable symbolic expression. Cloning is cheap.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in `{node}`: {reason}")]
    Domain { node: String, reason: &'static str },
    #[error("coordinate index {index} out of range for a point of dimension {dim}")]
    VarOutOfRange { index: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChartError {
    #[error("a chart needs at least one coordinate")]
    Empty,
    #[error("duplicate coordinate name `{0}`")]
    Duplicate(String),
    #[error("`{0}` is not a valid coordinate name")]
    InvalidName(String),
    #[error("point has {got} components, chart has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Ordered, uniquely named coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chart {
    names: Vec<String>,
}

impl Chart {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, ChartError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(ChartError::Empty);
        }
        for (i, name) in names.iter().enumerate() {
            let mut chars = name.chars();
            let valid_start = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
            if !valid_start
                || !chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
                || FUNCTION_NAMES.contains(&name.as_str())
            {
                return Err(ChartError::InvalidName(name.clone()));
            }
            if names[..i].contains(name) {
                return Err(ChartError::Duplicate(name.clone()));
            }
        }
        Ok(Chart { names })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coordinate(&self, i: usize) -> Expr {
        assert!(
            i < self.dim(),
            "coordinate {i} outside chart of dimension {}",
            self.dim()
        );
        Expr::var(i)
    }

    /// All coordinate functions, in chart order.
    pub fn coordinates(&self) -> Vec<Expr> {
        (0..self.dim()).map(Expr::var).collect()
    }

    pub fn point(&self, coords: Vec<f64>) -> Result<Point, ChartError> {
        if coords.len() != self.dim() {
            return Err(ChartError::DimensionMismatch {
                expected: self.dim(),
                got: coords.len(),
            });
        }
        Ok(Point { coords })
    }

    /// Prints `e` with this chart's coordinate names.
    pub fn render(&self, e: &Expr) -> String {
        e.render(&self.names)
    }
}

/// A point of a chart. Dereferences to its coordinate slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

impl std::ops::Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.coords
    }
}

impl Expr {
    fn from_node(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(c: f64) -> Self {
        Self::from_node(Node::Const(c))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn var(i: usize) -> Self {
        Self::from_node(Node::Var(i))
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    fn ptr_key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        if let Some(c) = a.as_const() {
            if let Ok(v) = op.apply(c) {
                if v.is_finite() {
                    return Expr::constant(v);
                }
            }
        }
        if op == UnaryOp::Neg {
            if let Node::Unary(UnaryOp::Neg, inner) = a.node() {
                return inner.clone();
            }
        }
        Self::from_node(Node::Unary(op, a))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Self::from_node(Node::Binary(BinaryOp::Add, a, b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x - y),
            (Some(x), _) if x == 0.0 => Expr::unary(UnaryOp::Neg, b),
            (_, Some(y)) if y == 0.0 => a,
            _ if Arc::ptr_eq(&a.0, &b.0) => Expr::zero(),
            _ => Self::from_node(Node::Binary(BinaryOp::Sub, a, b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::zero(),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::unary(UnaryOp::Neg, b),
            (_, Some(y)) if y == -1.0 => Expr::unary(UnaryOp::Neg, a),
            (None, Some(_)) => Self::from_node(Node::Binary(BinaryOp::Mul, b, a)),
            _ => Self::from_node(Node::Binary(BinaryOp::Mul, a, b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            // Division by a literal zero is kept so evaluation reports it.
            (_, Some(y)) if y == 0.0 => Self::from_node(Node::Binary(BinaryOp::Div, a, b)),
            (Some(x), Some(y)) => Expr::constant(x / y),
            (Some(x), _) if x == 0.0 => Expr::zero(),
            (_, Some(y)) if y == 1.0 => a,
            _ => Self::from_node(Node::Binary(BinaryOp::Div, a, b)),
        }
    }

    pub fn pow(a: Expr, k: f64) -> Expr {
        if k == 0.0 {
            return Expr::one();
        }
        if k == 1.0 {
            return a;
        }
        if let Some(c) = a.as_const() {
            let v = c.powf(k);
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
        Self::from_node(Node::Pow(a, k))
    }

    pub fn powi(&self, k: i32) -> Expr {
        Expr::pow(self.clone(), f64::from(k))
    }

    pub fn sin(&self) -> Expr {
        Expr::unary(UnaryOp::Sin, self.clone())
    }

    pub fn cos(&self) -> Expr {
        Expr::unary(UnaryOp::Cos, self.clone())
    }

    pub fn exp(&self) -> Expr {
        Expr::unary(UnaryOp::Exp, self.clone())
    }

    pub fn ln(&self) -> Expr {
        Expr::unary(UnaryOp::Ln, self.clone())
    }

    pub fn sqrt(&self) -> Expr {
        Expr::unary(UnaryOp::Sqrt, self.clone())
    }

    /// Sum of an iterator of expressions; `0` when empty.
    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        terms.into_iter().fold(Expr::zero(), Expr::add)
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self.node() {
            Node::Const(_) => None,
            Node::Var(i) => Some(*i),
            Node::Unary(_, a) | Node::Pow(a, _) => a.max_var(),
            Node::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    /// True when every coordinate reference is below `dim`.
    pub fn fits(&self, dim: usize) -> bool {
        self.max_var().is_none_or(|m| m < dim)
    }

    /// Number of nodes in the tree, counting shared subtrees once per use.
    pub fn node_count(&self) -> usize {
        match self.node() {
            Node::Const(_) | Node::Var(_) => 1,
            Node::Unary(_, a) | Node::Pow(a, _) => 1 + a.node_count(),
            Node::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        match self.node() {
            Node::Const(c) => Ok(*c),
            Node::Var(i) => x.get(*i).copied().ok_or(EvalError::VarOutOfRange {
                index: *i,
                dim: x.len(),
            }),
            Node::Unary(op, a) => {
                let v = a.eval(x)?;
                let r = op.apply(v).map_err(|reason| self.domain_error(reason))?;
                self.finite(r)
            }
            Node::Binary(op, a, b) => {
                let u = a.eval(x)?;
                let v = b.eval(x)?;
                let r = match op {
                    BinaryOp::Add => u + v,
                    BinaryOp::Sub => u - v,
                    BinaryOp::Mul => u * v,
                    BinaryOp::Div => {
                        if v == 0.0 {
                            return Err(self.domain_error("division by zero"));
                        }
                        u / v
                    }
                };
                self.finite(r)
            }
            Node::Pow(a, k) => {
                let u = a.eval(x)?;
                if u < 0.0 && k.fract() != 0.0 {
                    return Err(self.domain_error("negative base with a fractional exponent"));
                }
                if u == 0.0 && *k < 0.0 {
                    return Err(self.domain_error("zero raised to a negative power"));
                }
                self.finite(pow_value(u, *k))
            }
        }
    }

    fn finite(&self, v: f64) -> Result<f64, EvalError> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain_error("non-finite result"))
        }
    }

    fn domain_error(&self, reason: &'static str) -> EvalError {
        EvalError::Domain {
            node: self.to_string(),
            reason,
        }
    }

    /// Exact partial derivative with respect to coordinate `i`.
    pub fn diff(&self, i: usize) -> Expr {
        let mut memo = HashMap::new();
        self.diff_memo(i, &mut memo)
    }

    fn diff_memo(&self, i: usize, memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(d) = memo.get(&self.ptr_key()) {
            return d.clone();
        }
        let d = match self.node() {
            Node::Const(_) => Expr::zero(),
            Node::Var(j) => {
                if *j == i {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Unary(op, a) => {
                let da = a.diff_memo(i, memo);
                if da.is_zero() {
                    Expr::zero()
                } else {
                    let outer = match op {
                        UnaryOp::Neg => return cache(memo, self, -da),
                        UnaryOp::Sin => a.cos(),
                        UnaryOp::Cos => -a.sin(),
                        UnaryOp::Exp => self.clone(),
                        UnaryOp::Ln => Expr::div(Expr::one(), a.clone()),
                        UnaryOp::Sqrt => Expr::div(Expr::constant(0.5), self.clone()),
                    };
                    outer * da
                }
            }
            Node::Binary(op, a, b) => {
                let da = a.diff_memo(i, memo);
                let db = b.diff_memo(i, memo);
                match op {
                    BinaryOp::Add => da + db,
                    BinaryOp::Sub => da - db,
                    BinaryOp::Mul => da * b.clone() + a.clone() * db,
                    BinaryOp::Div => {
                        if db.is_zero() {
                            Expr::div(da, b.clone())
                        } else {
                            Expr::div(da * b.clone() - a.clone() * db, b.powi(2))
                        }
                    }
                }
            }
            Node::Pow(a, k) => {
                let da = a.diff_memo(i, memo);
                if da.is_zero() {
                    Expr::zero()
                } else {
                    Expr::constant(*k) * Expr::pow(a.clone(), k - 1.0) * da
                }
            }
        };
        cache(memo, self, d)
    }

    /// All first partial derivatives, in coordinate order.
    pub fn gradient(&self, dim: usize) -> Vec<Expr> {
        let mut memos: Vec<HashMap<usize, Expr>> = vec![HashMap::new(); dim];
        (0..dim).map(|i| self.diff_memo(i, &mut memos[i])).collect()
    }

    /// Replaces coordinate `i` by `values[i]`, composing this expression with
    /// a map whose components are `values`.
    pub fn substitute(&self, values: &[Expr]) -> Expr {
        let mut memo = HashMap::new();
        self.substitute_memo(values, &mut memo)
    }

    fn substitute_memo(&self, values: &[Expr], memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(e) = memo.get(&self.ptr_key()) {
            return e.clone();
        }
        let r = match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(i) => values
                .get(*i)
                .cloned()
                .unwrap_or_else(|| panic!("substitution has no value for coordinate {i}")),
            Node::Unary(op, a) => Expr::unary(*op, a.substitute_memo(values, memo)),
            Node::Pow(a, k) => Expr::pow(a.substitute_memo(values, memo), *k),
            Node::Binary(op, a, b) => {
                let a = a.substitute_memo(values, memo);
                let b = b.substitute_memo(values, memo);
                Expr::binary(*op, a, b)
            }
        };
        cache(memo, self, r)
    }

    pub(crate) fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        match op {
            BinaryOp::Add => Expr::add(a, b),
            BinaryOp::Sub => Expr::sub(a, b),
            BinaryOp::Mul => Expr::mul(a, b),
            BinaryOp::Div => Expr::div(a, b),
        }
    }

    /// Renders with the given coordinate names, in a form `parse` reads back.
    pub fn render(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.write(&mut out, &|i| names[i].clone());
        out
    }

    fn write(&self, out: &mut String, name: &dyn Fn(usize) -> String) {
        match self.node() {
            Node::Const(c) => out.push_str(&format_const(*c)),
            Node::Var(i) => out.push_str(&name(*i)),
            Node::Unary(UnaryOp::Neg, a) => {
                out.push('-');
                a.write_child(out, name, a.precedence() < PREC_NEG);
            }
            Node::Unary(op, a) => {
                out.push_str(op.name());
                out.push('(');
                a.write(out, name);
                out.push(')');
            }
            Node::Binary(op, a, b) => {
                let p = self.precedence();
                a.write_child(out, name, a.precedence() < p);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                b.write_child(out, name, b.precedence() <= p);
            }
            Node::Pow(a, k) => {
                a.write_child(out, name, a.precedence() <= PREC_POW);
                out.push('^');
                if *k < 0.0 {
                    out.push('(');
                    out.push_str(&format_const(*k));
                    out.push(')');
                } else {
                    out.push_str(&format_const(*k));
                }
            }
        }
    }

    fn write_child(&self, out: &mut String, name: &dyn Fn(usize) -> String, parens: bool) {
        if parens {
            out.push('(');
            self.write(out, name);
            out.push(')');
        } else {
            self.write(out, name);
        }
    }

    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => PREC_NEG,
            Node::Const(_) | Node::Var(_) => PREC_ATOM,
            Node::Unary(UnaryOp::Neg, _) => PREC_NEG,
            Node::Unary(..) => PREC_ATOM,
            Node::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => PREC_ADD,
            Node::Binary(..) => PREC_MUL,
            Node::Pow(..) => PREC_POW,
        }
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn cache(memo: &mut HashMap<usize, Expr>, key: &Expr, value: Expr) -> Expr {
    memo.insert(key.ptr_key(), value.clone());
    value
}

fn pow_value(u: f64, k: f64) -> f64 {
    if k.fract() == 0.0 && k.abs() <= 64.0 {
        u.powi(k as i32)
    } else {
        u.powf(k)
    }
}

/// Shortest decimal text that reads back to the same double.
fn format_const(c: f64) -> String {
    let s = format!("{c:?}");
    // `Debug` uses exponent notation for very large/small magnitudes, which
    // the grammar accepts; strip a redundant ".0".
    match s.strip_suffix(".0") {
        Some(stripped) => stripped.to_string(),
        None => s,
    }
}

impl fmt::Display for Expr {
    /// Generic rendering with coordinates shown as `x[i]` (zero-based).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        self.write(&mut out, &|i| format!("x[{i}]"));
        f.write_str(&out)
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $ctor:path) => {
        impl $trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $ctor(self, rhs)
            }
        }
        impl $trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $ctor(self, rhs.clone())
            }
        }
        impl $trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $ctor(self.clone(), rhs)
            }
        }
        impl $trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $ctor(self.clone(), rhs.clone())
            }
        }
        impl $trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $ctor(self, Expr::constant(rhs))
            }
        }
        impl $trait<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $ctor(self.clone(), Expr::constant(rhs))
            }
        }
        impl $trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $ctor(Expr::constant(self), rhs)
            }
        }
        impl $trait<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $ctor(Expr::constant(self), rhs.clone())
            }
        }
    };
}

impl_binop!(Add, add, Expr::add);
impl_binop!(Sub, sub, Expr::sub);
impl_binop!(Mul, mul, Expr::mul);
impl_binop!(Div, div, Expr::div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(UnaryOp::Neg, self)
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(UnaryOp::Neg, self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart(names: &[&str]) -> Chart {
        Chart::new(names.iter().copied()).unwrap()
    }

    fn central_diff(e: &Expr, i: usize, z: &[f64], h: f64) -> f64 {
        let mut plus = z.to_vec();
        let mut minus = z.to_vec();
        plus[i] += h;
        minus[i] -= h;
        (e.eval(&plus).unwrap() - e.eval(&minus).unwrap()) / (2.0 * h)
    }

    #[test]
    fn chart_rejects_bad_names() {
        assert_eq!(Chart::new(Vec::<String>::new()), Err(ChartError::Empty));
        assert_eq!(Chart::new(["q", "q"]), Err(ChartError::Duplicate("q".into())));
        assert_eq!(Chart::new(["sin"]), Err(ChartError::InvalidName("sin".into())));
        assert!(Chart::new(["1x"]).is_err());
        assert!(chart(&["q1", "p1"]).point(vec![1.0]).is_err());
    }

    #[test]
    fn power_rule() {
        let c = chart(&["q1", "q2", "p1", "p2"]);
        let e = parse("q1^2*p1", &c).unwrap();
        let d = simplify(&e.diff(0));
        let z = [0.7, -1.1, 1.3, 0.2];
        assert!((d.eval(&z).unwrap() - 2.0 * 0.7 * 1.3).abs() < 1e-15);
        let absent = parse("q1*p1", &c).unwrap().diff(3);
        assert!(absent.is_zero());
    }

    #[test]
    fn sine_derivative_matches_finite_difference() {
        let c = chart(&["x"]);
        let d = parse("sin(x)", &c).unwrap().diff(0);
        let value = d.eval(&[1.2]).unwrap();
        let fd = central_diff(&parse("sin(x)", &c).unwrap(), 0, &[1.2], 1e-6);
        assert!((value - fd).abs() < 1e-9);
        assert!((value - 0.362_357_754_476_673_6).abs() < 1e-15);
    }

    #[test]
    fn evaluation_examples() {
        let c = chart(&["q1", "q2", "p1", "p2"]);
        assert_eq!(Expr::constant(3.5).eval(&[0.0; 4]).unwrap(), 3.5);
        assert_eq!(parse("q1+p1", &c).unwrap().eval(&[1.0, 0.0, 2.0, 0.0]), Ok(3.0));
        let e = parse("exp(x1)", &chart(&["x1"])).unwrap();
        assert_eq!(e.eval(&[1.0]).unwrap(), 1f64.exp());
    }

    #[test]
    fn domain_errors_name_the_node() {
        let c = chart(&["x1", "x2"]);
        let err = parse("x1/x2", &c).unwrap().eval(&[1.0, 0.0]).unwrap_err();
        match err {
            EvalError::Domain { node, reason } => {
                assert_eq!(node, "x[0] / x[1]");
                assert_eq!(reason, "division by zero");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse("ln(x1)", &c).unwrap().eval(&[-1.0, 0.0]).is_err());
        assert!(parse("sqrt(x1)", &c).unwrap().eval(&[-1.0, 0.0]).is_err());
        assert!(parse("x1^0.5", &c).unwrap().eval(&[-1.0, 0.0]).is_err());
        assert!(parse("x1^(-1)", &c).unwrap().eval(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let c = chart(&["q1", "p1"]);
        let g = parse("q1*p1", &c).unwrap().gradient(2);
        assert_eq!(g[0], Expr::var(1));
        assert_eq!(g[1], Expr::var(0));
        assert!(Expr::constant(4.0).gradient(2).iter().all(Expr::is_zero));
        let c3 = chart(&["x1", "x2", "x3"]);
        let g = parse("x1^2 + x2^2 + x3^2", &c3).unwrap().gradient(3);
        let v: Vec<f64> = g.iter().map(|e| e.eval(&[1.0, 2.0, 3.0]).unwrap()).collect();
        assert_eq!(v, vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn substitution_composes() {
        let c = chart(&["q", "p"]);
        let e = parse("q*p + sin(q)", &c).unwrap();
        let map = [parse("2*q", &c).unwrap(), parse("p/2", &c).unwrap()];
        let composed = e.substitute(&map);
        let z = [0.3, -0.8];
        let direct = e.eval(&[0.6, -0.4]).unwrap();
        assert!((composed.eval(&z).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn smart_constructors_fold() {
        let x = Expr::var(0);
        assert!((Expr::zero() * &x).is_zero());
        assert_eq!(Expr::one() * &x, x);
        assert_eq!(-(-x.clone()), x);
        assert_eq!((Expr::constant(2.0) + 3.0).as_const(), Some(5.0));
        assert!((&x - &x).is_zero());
        // A literal division by zero survives so evaluation can report it.
        assert!(Expr::div(Expr::one(), Expr::zero()).eval(&[]).is_err());
    }

    #[test]
    fn shared_subtrees_differentiate_without_blowup() {
        let mut e = Expr::var(0);
        for _ in 0..60 {
            e = &e * &e + 1.0;
        }
        // 60 levels of sharing; an unmemoized walk would visit 2^60 nodes.
        let d = e.diff(0);
        assert!(matches!(d.node(), Node::Binary(..)));
    }

    #[test]
    fn expressions_are_thread_safe() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Expr>();
        assert_send_sync::<Chart>();
    }
}
