//! Expression trees over a model's variables.

use std::fmt;

use crate::error::{Error, Result};
use crate::interval::{Interval, ScalarFn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tanh,
    Exp,
    Sqr,
}

impl UnaryOp {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tanh" => UnaryOp::Tanh,
            "exp" => UnaryOp::Exp,
            "sqr" => UnaryOp::Sqr,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Exp => "exp",
            UnaryOp::Sqr => "sqr",
        }
    }

    fn scalar(self) -> Option<ScalarFn> {
        Some(match self {
            UnaryOp::Neg => return None,
            UnaryOp::Sin => ScalarFn::Sin,
            UnaryOp::Cos => ScalarFn::Cos,
            UnaryOp::Tanh => ScalarFn::Tanh,
            UnaryOp::Exp => ScalarFn::Exp,
            UnaryOp::Sqr => ScalarFn::Sqr,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }
}

/// Variables are indices into the owning model's variable table.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        match (op, a) {
            (UnaryOp::Neg, Expr::Const(c)) => Expr::Const(-c),
            (UnaryOp::Neg, Expr::Unary(UnaryOp::Neg, inner)) => *inner,
            (op, a) => Expr::Unary(op, Box::new(a)),
        }
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    fn is_const(&self, v: f64) -> bool {
        matches!(self, Expr::Const(c) if *c == v)
    }

    // Constant-folding constructors used by differentiation.
    fn add(a: Expr, b: Expr) -> Expr {
        if a.is_const(0.0) {
            b
        } else if b.is_const(0.0) {
            a
        } else {
            Expr::binary(BinaryOp::Add, a, b)
        }
    }

    fn sub(a: Expr, b: Expr) -> Expr {
        if b.is_const(0.0) {
            a
        } else if a.is_const(0.0) {
            Expr::unary(UnaryOp::Neg, b)
        } else {
            Expr::binary(BinaryOp::Sub, a, b)
        }
    }

    fn mul(a: Expr, b: Expr) -> Expr {
        if a.is_const(0.0) || b.is_const(0.0) {
            Expr::Const(0.0)
        } else if a.is_const(1.0) {
            b
        } else if b.is_const(1.0) {
            a
        } else {
            Expr::binary(BinaryOp::Mul, a, b)
        }
    }

    fn div(a: Expr, b: Expr) -> Expr {
        if a.is_const(0.0) {
            Expr::Const(0.0)
        } else if b.is_const(1.0) {
            a
        } else {
            Expr::binary(BinaryOp::Div, a, b)
        }
    }

    /// Symbolic partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
            Expr::Unary(op, a) => {
                let da = a.derivative(var);
                if da.is_const(0.0) {
                    return Expr::Const(0.0);
                }
                let a = (**a).clone();
                let outer = match op {
                    UnaryOp::Neg => return Expr::unary(UnaryOp::Neg, da),
                    UnaryOp::Sin => Expr::unary(UnaryOp::Cos, a),
                    UnaryOp::Cos => Expr::unary(UnaryOp::Neg, Expr::unary(UnaryOp::Sin, a)),
                    UnaryOp::Tanh => Expr::sub(
                        Expr::Const(1.0),
                        Expr::unary(UnaryOp::Sqr, Expr::unary(UnaryOp::Tanh, a)),
                    ),
                    UnaryOp::Exp => Expr::unary(UnaryOp::Exp, a),
                    UnaryOp::Sqr => Expr::mul(Expr::Const(2.0), a),
                };
                Expr::mul(outer, da)
            }
            Expr::Binary(op, a, b) => {
                let da = a.derivative(var);
                let db = b.derivative(var);
                match op {
                    BinaryOp::Add => Expr::add(da, db),
                    BinaryOp::Sub => Expr::sub(da, db),
                    BinaryOp::Mul => Expr::add(
                        Expr::mul(da, (**b).clone()),
                        Expr::mul((**a).clone(), db),
                    ),
                    BinaryOp::Div => Expr::sub(
                        Expr::div(da, (**b).clone()),
                        Expr::div(
                            Expr::mul((**a).clone(), db),
                            Expr::unary(UnaryOp::Sqr, (**b).clone()),
                        ),
                    ),
                }
            }
        }
    }

    /// Natural interval extension; `env[i]` binds variable `i`.
    pub fn eval_interval(&self, env: &[Interval]) -> Result<Interval> {
        Ok(match self {
            Expr::Const(c) => Interval::point(*c),
            Expr::Var(i) => *env
                .get(*i)
                .ok_or_else(|| Error::UnboundVariable(format!("#{i}")))?,
            Expr::Unary(op, a) => {
                let x = a.eval_interval(env)?;
                match op.scalar() {
                    None => -x,
                    Some(f) => f.eval_interval(&x),
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval_interval(env)?;
                let y = b.eval_interval(env)?;
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => x.checked_div(&y)?,
                }
            }
        })
    }

    /// Point evaluation; panics on an unbound index.
    pub fn eval(&self, env: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => env[*i],
            Expr::Unary(op, a) => {
                let x = a.eval(env);
                match op.scalar() {
                    None => -x,
                    Some(f) => f.eval(x),
                }
            }
            Expr::Binary(op, a, b) => {
                let (x, y) = (a.eval(env), b.eval(env));
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => x / y,
                }
            }
        }
    }

    /// Calls `f` for every variable occurrence.
    pub fn visit_vars(&self, f: &mut impl FnMut(usize)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(i) => f(*i),
            Expr::Unary(_, a) => a.visit_vars(f),
            Expr::Binary(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    pub fn uses_var(&self, pred: impl Fn(usize) -> bool) -> bool {
        let mut hit = false;
        self.visit_vars(&mut |i| hit |= pred(i));
        hit
    }

    /// Renders the expression in the model language, fully parenthesised.
    pub fn display<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        DisplayExpr { expr: self, names }
    }
}

struct DisplayExpr<'a> {
    expr: &'a Expr,
    names: &'a [String],
}

impl fmt::Display for DisplayExpr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |e| DisplayExpr {
            expr: e,
            names: self.names,
        };
        match self.expr {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(i) => match self.names.get(*i) {
                Some(n) => write!(f, "{n}"),
                None => write!(f, "${i}"),
            },
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{})", sub(a)),
            Expr::Unary(op, a) => write!(f, "{}({})", op.name(), sub(a)),
            Expr::Binary(op, a, b) => write!(f, "({} {} {})", sub(a), op.symbol(), sub(b)),
        }
    }
}
