//! Mechanisms and the named-mechanism registry used by model files.
//!
//! Registered mechanisms read their parents positionally, in the order the
//! parents are declared on the variable.

use std::fmt;
use std::sync::Arc;

use super::value::{Connective, UnaryOp, Value};

pub type MechanismFn = dyn Fn(&[Value]) -> Result<Value, String> + Send + Sync;

#[derive(Clone)]
enum Kind {
    Input,
    Constant(Value),
    Func { f: Arc<MechanismFn>, null_tolerant: bool },
}

/// The function that assigns a variable its value from its parents.
#[derive(Clone)]
pub struct Mechanism {
    name: Arc<str>,
    kind: Kind,
}

impl fmt::Debug for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Constant(v) => write!(f, "Mechanism(constant {v})"),
            _ => write!(f, "Mechanism({})", self.name),
        }
    }
}

impl Mechanism {
    /// Marker mechanism for input variables: the value comes from the input setting.
    pub fn input() -> Self {
        Self {
            name: "input".into(),
            kind: Kind::Input,
        }
    }

    pub fn constant(value: Value) -> Self {
        Self {
            name: "constant".into(),
            kind: Kind::Constant(value),
        }
    }

    pub fn from_fn<F>(name: &str, f: F) -> Self
    where
        F: Fn(&[Value]) -> Result<Value, String> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            kind: Kind::Func {
                f: Arc::new(f),
                null_tolerant: false,
            },
        }
    }

    /// A mechanism that is allowed to read `∅` parents. Only combined-model
    /// dispatch mechanisms need this.
    pub fn null_tolerant<F>(name: &str, f: F) -> Self
    where
        F: Fn(&[Value]) -> Result<Value, String> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            kind: Kind::Func {
                f: Arc::new(f),
                null_tolerant: true,
            },
        }
    }

    /// Looks a mechanism up in the registry by name.
    pub fn named(name: &str) -> Option<Self> {
        let f: fn(&[Value]) -> Result<Value, String> = match name {
            "project" => project,
            "sum" => sum,
            "apply" => apply,
            "apply2" => apply2,
            "connect" => connect,
            "bool-eval" => bool_eval,
            "bool-inner" => bool_inner,
            "bool-eval-left" => bool_eval_left,
            "bool-eval-right" => bool_eval_right,
            "demorgan-left" => demorgan_left,
            "demorgan-right" => demorgan_right,
            "demorgan-mid" => demorgan_mid,
            _ => return None,
        };
        Some(Self::from_fn(name, f))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_input(&self) -> bool {
        matches!(self.kind, Kind::Input)
    }

    pub fn constant_value(&self) -> Option<Value> {
        match self.kind {
            Kind::Constant(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_null_tolerant(&self) -> bool {
        matches!(
            self.kind,
            Kind::Func {
                null_tolerant: true,
                ..
            }
        )
    }

    /// Evaluates the mechanism on its parent values.
    pub fn evaluate(&self, parents: &[Value]) -> Result<Value, String> {
        match &self.kind {
            Kind::Input => Err("input variables have no mechanism to evaluate".into()),
            Kind::Constant(v) => Ok(*v),
            Kind::Func { f, .. } => f(parents),
        }
    }
}

/// Names accepted by [`Mechanism::named`].
pub const REGISTERED: &[&str] = &[
    "project",
    "sum",
    "apply",
    "apply2",
    "connect",
    "bool-eval",
    "bool-inner",
    "bool-eval-left",
    "bool-eval-right",
    "demorgan-left",
    "demorgan-right",
    "demorgan-mid",
];

fn arity(args: &[Value], n: usize) -> Result<(), String> {
    if args.len() == n {
        Ok(())
    } else {
        Err(format!("expected {n} parents, got {}", args.len()))
    }
}

fn want_op(v: Value) -> Result<UnaryOp, String> {
    match v {
        Value::Op(op) => Ok(op),
        other => Err(format!("expected an operator, got {other}")),
    }
}

fn want_bool(v: Value) -> Result<bool, String> {
    v.as_bool().ok_or_else(|| format!("expected a boolean, got {v}"))
}

fn want_conn(v: Value) -> Result<Connective, String> {
    match v {
        Value::Conn(c) => Ok(c),
        other => Err(format!("expected a connective, got {other}")),
    }
}

/// Applies a unary operator. On a connective, negation yields the De Morgan dual.
pub fn apply_op(op: UnaryOp, v: Value) -> Result<Value, String> {
    match (op, v) {
        (UnaryOp::Id, v @ (Value::Bool(_) | Value::Conn(_))) => Ok(v),
        (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
        (UnaryOp::Not, Value::Conn(c)) => Ok(Value::Conn(c.dual())),
        (_, other) => Err(format!("cannot apply an operator to {other}")),
    }
}

fn op_on(op: Value, v: Value) -> Result<Value, String> {
    apply_op(want_op(op)?, v)
}

fn connect3(a: Value, c: Value, b: Value) -> Result<Value, String> {
    Ok(Value::Bool(want_conn(c)?.eval(want_bool(a)?, want_bool(b)?)))
}

fn project(a: &[Value]) -> Result<Value, String> {
    arity(a, 1)?;
    Ok(a[0])
}

fn sum(a: &[Value]) -> Result<Value, String> {
    let mut total = 0i64;
    for v in a {
        total += v.as_int().ok_or_else(|| format!("expected an integer, got {v}"))?;
    }
    Ok(Value::Int(total))
}

// [op, v] -> op(v)
fn apply(a: &[Value]) -> Result<Value, String> {
    arity(a, 2)?;
    op_on(a[0], a[1])
}

// [outer, inner, v] -> outer(inner(v))
fn apply2(a: &[Value]) -> Result<Value, String> {
    arity(a, 3)?;
    op_on(a[0], op_on(a[1], a[2])?)
}

// [a, conn, b] -> a conn b
fn connect(a: &[Value]) -> Result<Value, String> {
    arity(a, 3)?;
    connect3(a[0], a[1], a[2])
}

// [op1, op2, x, b, op3, y] -> op1(op2(x) b op3(y))
fn bool_eval(a: &[Value]) -> Result<Value, String> {
    arity(a, 6)?;
    let inner = connect3(op_on(a[1], a[2])?, a[3], op_on(a[4], a[5])?)?;
    op_on(a[0], inner)
}

// [op2, x, b, op3, y] -> op2(x) b op3(y)
fn bool_inner(a: &[Value]) -> Result<Value, String> {
    arity(a, 5)?;
    connect3(op_on(a[0], a[1])?, a[2], op_on(a[3], a[4])?)
}

// [op1, p, b, op3, y] -> op1(p b op3(y))
fn bool_eval_left(a: &[Value]) -> Result<Value, String> {
    arity(a, 5)?;
    op_on(a[0], connect3(a[1], a[2], op_on(a[3], a[4])?)?)
}

// [op1, op2, x, b, p] -> op1(op2(x) b p)
fn bool_eval_right(a: &[Value]) -> Result<Value, String> {
    arity(a, 5)?;
    op_on(a[0], connect3(op_on(a[1], a[2])?, a[3], a[4])?)
}

// [op1, p, b, op3, y] -> p op1(b) op1(op3(y))
fn demorgan_left(a: &[Value]) -> Result<Value, String> {
    arity(a, 5)?;
    connect3(a[1], op_on(a[0], a[2])?, op_on(a[0], op_on(a[3], a[4])?)?)
}

// [op1, op2, x, b, p] -> op1(op2(x)) op1(b) p
fn demorgan_right(a: &[Value]) -> Result<Value, String> {
    arity(a, 5)?;
    connect3(op_on(a[0], op_on(a[1], a[2])?)?, op_on(a[0], a[3])?, a[4])
}

// [op1, op2, x, p, op3, y] -> op1(op2(x)) p op1(op3(y))
fn demorgan_mid(a: &[Value]) -> Result<Value, String> {
    arity(a, 6)?;
    connect3(op_on(a[0], op_on(a[1], a[2])?)?, a[3], op_on(a[0], op_on(a[4], a[5])?)?)
}
