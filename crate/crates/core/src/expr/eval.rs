use std::collections::BTreeMap;

use thiserror::Error;

use super::{BinOp, Func, Node};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("{op} is undefined at {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite intermediate result")]
    NonFinite,
}

/// Variable name to value map; each name is bound at most once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings {
    values: BTreeMap<String, f64>,
}

impl Bindings {
    pub fn new() -> Bindings {
        Bindings::default()
    }

    /// Binds `name`, replacing any earlier value.
    pub fn set(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_owned(), value);
    }

    pub fn with(mut self, name: &str, value: f64) -> Bindings {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

fn apply_func(func: Func, v: f64) -> Result<f64, EvalError> {
    let out = match func {
        Func::Sin => v.sin(),
        Func::Cos => v.cos(),
        Func::Tan => v.tan(),
        Func::Asin | Func::Acos if !(-1.0..=1.0).contains(&v) => {
            return Err(EvalError::Domain {
                op: func.name(),
                arg: v,
            })
        }
        Func::Asin => v.asin(),
        Func::Acos => v.acos(),
        Func::Atan => v.atan(),
        Func::Exp => v.exp(),
        Func::Ln if v <= 0.0 => return Err(EvalError::Domain { op: "ln", arg: v }),
        Func::Ln => v.ln(),
        Func::Sqrt if v < 0.0 => return Err(EvalError::Domain { op: "sqrt", arg: v }),
        Func::Sqrt => v.sqrt(),
        Func::Abs => v.abs(),
    };
    Ok(out)
}

fn apply_binary(op: BinOp, a: f64, b: f64) -> Result<f64, EvalError> {
    match op {
        BinOp::Add => Ok(a + b),
        BinOp::Sub => Ok(a - b),
        BinOp::Mul => Ok(a * b),
        BinOp::Div if b == 0.0 => Err(EvalError::DivisionByZero),
        BinOp::Div => Ok(a / b),
        BinOp::Pow => {
            if a == 0.0 && b < 0.0 {
                Err(EvalError::DivisionByZero)
            } else if a < 0.0 && b.fract() != 0.0 {
                Err(EvalError::Domain { op: "^", arg: a })
            } else {
                Ok(a.powf(b))
            }
        }
    }
}

fn finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

pub(super) fn eval_node(
    node: &Node,
    lookup: &dyn Fn(&str) -> Option<f64>,
) -> Result<f64, EvalError> {
    match node {
        Node::Num(v) => Ok(*v),
        Node::Var(name) => lookup(name).ok_or_else(|| EvalError::UnboundVariable(name.to_string())),
        Node::Neg(inner) => Ok(-eval_node(inner, lookup)?),
        Node::Binary(op, lhs, rhs) => {
            let a = eval_node(lhs, lookup)?;
            let b = eval_node(rhs, lookup)?;
            finite(apply_binary(*op, a, b)?)
        }
        Node::Call(func, arg) => finite(apply_func(*func, eval_node(arg, lookup)?)?),
    }
}

#[derive(Debug, Clone)]
enum Slot {
    Num(f64),
    Arg(usize),
    Neg(Box<Slot>),
    Binary(BinOp, Box<Slot>, Box<Slot>),
    Call(Func, Box<Slot>),
}

/// An expression with variables resolved to argument positions.
///
/// Evaluation is identical, bit for bit, to [`super::Expression::evaluate`]
/// with the same values bound by name.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    root: Slot,
    arity: usize,
}

impl CompiledExpr {
    pub(super) fn new(node: &Node, vars: &[&str]) -> Result<CompiledExpr, EvalError> {
        fn lower(node: &Node, vars: &[&str]) -> Result<Slot, EvalError> {
            Ok(match node {
                Node::Num(v) => Slot::Num(*v),
                Node::Var(name) => Slot::Arg(
                    vars.iter()
                        .position(|v| *v == &**name)
                        .ok_or_else(|| EvalError::UnboundVariable(name.to_string()))?,
                ),
                Node::Neg(inner) => Slot::Neg(Box::new(lower(inner, vars)?)),
                Node::Binary(op, lhs, rhs) => Slot::Binary(
                    *op,
                    Box::new(lower(lhs, vars)?),
                    Box::new(lower(rhs, vars)?),
                ),
                Node::Call(func, arg) => Slot::Call(*func, Box::new(lower(arg, vars)?)),
            })
        }
        Ok(CompiledExpr {
            root: lower(node, vars)?,
            arity: vars.len(),
        })
    }

    /// Evaluates with `args` in the order given to `compile`.
    pub fn eval(&self, args: &[f64]) -> Result<f64, EvalError> {
        debug_assert_eq!(args.len(), self.arity);
        fn go(slot: &Slot, args: &[f64]) -> Result<f64, EvalError> {
            match slot {
                Slot::Num(v) => Ok(*v),
                Slot::Arg(i) => Ok(args[*i]),
                Slot::Neg(inner) => Ok(-go(inner, args)?),
                Slot::Binary(op, lhs, rhs) => {
                    let a = go(lhs, args)?;
                    let b = go(rhs, args)?;
                    finite(apply_binary(*op, a, b)?)
                }
                Slot::Call(func, arg) => finite(apply_func(*func, go(arg, args)?)?),
            }
        }
        go(&self.root, args)
    }

    /// True when the compiled tree is the literal `0`.
    pub fn is_zero(&self) -> bool {
        matches!(self.root, Slot::Num(v) if v == 0.0)
    }
}
