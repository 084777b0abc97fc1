//! Scalar expressions of named real variables.
//!
//! Users write the coefficient functions of a problem (`a(x)`, `V(x)`,
//! `f(q)`, `G(q)`, the arbitrary function, ...) as small formulas. This
//! module parses them into an immutable [`Expression`] tree, evaluates them
//! under a set of [`Bindings`] and differentiates them symbolically.
//!
//! Grammar, lowest to highest precedence:
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := "-" unary | power
//! power := atom ("^" unary)?
//! atom  := number | ident | ident "(" expr ")" | "(" expr ")"
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so
//! `-2^2 == -4`. Identifiers that are not followed by `(` are variables.

mod diff;
mod eval;
mod parse;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

pub use eval::{Bindings, CompiledExpr, EvalError};
pub use parse::ParseError;

/// Binary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// One-argument builtin functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Asin,
    Acos,
    Atan,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 10] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Asin,
        Func::Acos,
        Func::Atan,
        Func::Exp,
        Func::Ln,
        Func::Sqrt,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Asin => "asin",
            Func::Acos => "acos",
            Func::Atan => "atan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// A node of the syntax tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(Arc<str>),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed, immutable scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
}

impl Expression {
    /// Parses `source` according to the module grammar.
    pub fn parse(source: &str) -> Result<Expression, ParseError> {
        parse::parse(source).map(|root| Expression { root })
    }

    pub fn constant(value: f64) -> Expression {
        Expression {
            root: Node::Num(value),
        }
    }

    pub fn from_node(root: Node) -> Expression {
        Expression { root }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Names of all variables referenced by the expression, sorted.
    pub fn variables(&self) -> BTreeSet<String> {
        fn walk(node: &Node, out: &mut BTreeSet<String>) {
            match node {
                Node::Num(_) => {}
                Node::Var(name) => {
                    out.insert(name.to_string());
                }
                Node::Neg(inner) | Node::Call(_, inner) => walk(inner, out),
                Node::Binary(_, lhs, rhs) => {
                    walk(lhs, out);
                    walk(rhs, out);
                }
            }
        }
        let mut out = BTreeSet::new();
        walk(&self.root, &mut out);
        out
    }

    /// True when the tree is the literal `0`.
    pub fn is_zero(&self) -> bool {
        matches!(self.root, Node::Num(v) if v == 0.0)
    }

    /// Evaluates the expression with every variable looked up in `bindings`.
    pub fn evaluate(&self, bindings: &Bindings) -> Result<f64, EvalError> {
        eval::eval_node(&self.root, &|name| bindings.get(name))
    }

    /// Resolves variable names against `vars` once, for repeated evaluation
    /// with positional arguments.
    pub fn compile(&self, vars: &[&str]) -> Result<CompiledExpr, EvalError> {
        CompiledExpr::new(&self.root, vars)
    }

    /// Symbolic partial derivative with respect to `var`.
    pub fn differentiate(&self, var: &str) -> Expression {
        Expression {
            root: diff::derivative(&self.root, var),
        }
    }
}

impl std::str::FromStr for Expression {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expression::parse(s)
    }
}

/// Fully parenthesised serialization; parses back to an equivalent tree.
impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

fn write_node(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
            write!(f, "(-{:?})", -v)
        }
        Node::Num(v) => write!(f, "{v:?}"),
        Node::Var(name) => f.write_str(name),
        Node::Neg(inner) => {
            f.write_str("(-")?;
            write_node(inner, f)?;
            f.write_str(")")
        }
        Node::Binary(op, lhs, rhs) => {
            f.write_str("(")?;
            write_node(lhs, f)?;
            write!(f, " {} ", op.symbol())?;
            write_node(rhs, f)?;
            f.write_str(")")
        }
        Node::Call(func, arg) => {
            write!(f, "{}(", func.name())?;
            write_node(arg, f)?;
            f.write_str(")")
        }
    }
}
