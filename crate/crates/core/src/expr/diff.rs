//! Symbolic differentiation with light constant folding.

use super::{BinOp, Func, Node};

fn depends_on(node: &Node, var: &str) -> bool {
    match node {
        Node::Num(_) => false,
        Node::Var(name) => &**name == var,
        Node::Neg(inner) | Node::Call(_, inner) => depends_on(inner, var),
        Node::Binary(_, lhs, rhs) => depends_on(lhs, var) || depends_on(rhs, var),
    }
}

fn num(v: f64) -> Node {
    Node::Num(v)
}

fn as_num(node: &Node) -> Option<f64> {
    match node {
        Node::Num(v) => Some(*v),
        _ => None,
    }
}

fn is(node: &Node, value: f64) -> bool {
    as_num(node) == Some(value)
}

fn fold(op: BinOp, a: &Node, b: &Node) -> Option<Node> {
    let (a, b) = (as_num(a)?, as_num(b)?);
    let v = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div if b != 0.0 => a / b,
        BinOp::Pow if !(a < 0.0 && b.fract() != 0.0) && !(a == 0.0 && b < 0.0) => a.powf(b),
        _ => return None,
    };
    v.is_finite().then_some(Node::Num(v))
}

fn bin(op: BinOp, a: Node, b: Node) -> Node {
    if let Some(folded) = fold(op, &a, &b) {
        return folded;
    }
    Node::Binary(op, Box::new(a), Box::new(b))
}

fn add(a: Node, b: Node) -> Node {
    if is(&a, 0.0) {
        b
    } else if is(&b, 0.0) {
        a
    } else {
        bin(BinOp::Add, a, b)
    }
}

fn sub(a: Node, b: Node) -> Node {
    if is(&b, 0.0) {
        a
    } else if is(&a, 0.0) {
        neg(b)
    } else {
        bin(BinOp::Sub, a, b)
    }
}

fn mul(a: Node, b: Node) -> Node {
    if is(&a, 0.0) || is(&b, 0.0) {
        num(0.0)
    } else if is(&a, 1.0) {
        b
    } else if is(&b, 1.0) {
        a
    } else {
        bin(BinOp::Mul, a, b)
    }
}

fn div(a: Node, b: Node) -> Node {
    if is(&a, 0.0) {
        num(0.0)
    } else if is(&b, 1.0) {
        a
    } else {
        bin(BinOp::Div, a, b)
    }
}

fn pow(a: Node, b: Node) -> Node {
    if is(&b, 1.0) {
        a
    } else if is(&b, 0.0) {
        num(1.0)
    } else {
        bin(BinOp::Pow, a, b)
    }
}

fn neg(a: Node) -> Node {
    match a {
        Node::Num(v) => num(-v),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn call(func: Func, arg: Node) -> Node {
    Node::Call(func, Box::new(arg))
}

pub(super) fn derivative(node: &Node, var: &str) -> Node {
    if !depends_on(node, var) {
        return num(0.0);
    }
    match node {
        Node::Num(_) => num(0.0),
        Node::Var(_) => num(1.0),
        Node::Neg(inner) => neg(derivative(inner, var)),
        Node::Binary(op, lhs, rhs) => {
            let (u, v) = (lhs.as_ref(), rhs.as_ref());
            let du = derivative(u, var);
            let dv = derivative(v, var);
            match op {
                BinOp::Add => add(du, dv),
                BinOp::Sub => sub(du, dv),
                BinOp::Mul => add(mul(du, v.clone()), mul(u.clone(), dv)),
                BinOp::Div => {
                    if !depends_on(v, var) {
                        div(du, v.clone())
                    } else {
                        // (u'v - uv') / v^2
                        div(
                            sub(mul(du, v.clone()), mul(u.clone(), dv)),
                            pow(v.clone(), num(2.0)),
                        )
                    }
                }
                BinOp::Pow => {
                    if !depends_on(v, var) {
                        // c u^(c-1) u'
                        let reduced = sub(v.clone(), num(1.0));
                        mul(mul(v.clone(), pow(u.clone(), reduced)), du)
                    } else if !depends_on(u, var) {
                        // u^v ln(u) v'
                        mul(mul(node.clone(), call(Func::Ln, u.clone())), dv)
                    } else {
                        // u^v (v' ln u + v u'/u)
                        let inner = add(
                            mul(dv, call(Func::Ln, u.clone())),
                            div(mul(v.clone(), du), u.clone()),
                        );
                        mul(node.clone(), inner)
                    }
                }
            }
        }
        Node::Call(func, arg) => {
            let u = arg.as_ref().clone();
            let du = derivative(arg, var);
            let outer = match func {
                Func::Sin => call(Func::Cos, u),
                Func::Cos => neg(call(Func::Sin, u)),
                Func::Tan => div(num(1.0), pow(call(Func::Cos, u), num(2.0))),
                Func::Asin => div(num(1.0), call(Func::Sqrt, sub(num(1.0), pow(u, num(2.0))))),
                Func::Acos => neg(div(
                    num(1.0),
                    call(Func::Sqrt, sub(num(1.0), pow(u, num(2.0)))),
                )),
                Func::Atan => div(num(1.0), add(num(1.0), pow(u, num(2.0)))),
                Func::Exp => node.clone(),
                Func::Ln => div(num(1.0), u),
                Func::Sqrt => div(num(1.0), mul(num(2.0), node.clone())),
                Func::Abs => div(u, node.clone()),
            };
            mul(outer, du)
        }
    }
}
