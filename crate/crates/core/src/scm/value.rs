use std::fmt;

use serde::{Deserialize, Serialize};

/// Unary boolean operator: negation or identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Not,
    Id,
}

/// Binary boolean connective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connective {
    And,
    Or,
}

impl Connective {
    /// De Morgan dual: `and` <-> `or`.
    pub fn dual(self) -> Self {
        match self {
            Connective::And => Connective::Or,
            Connective::Or => Connective::And,
        }
    }

    pub fn eval(self, a: bool, b: bool) -> bool {
        match self {
            Connective::And => a && b,
            Connective::Or => a || b,
        }
    }
}

/// A discrete value carried by a causal variable.
///
/// `Null` is the distinguished empty value that every domain implicitly
/// contains. It is produced by inactive branches of combined models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Int(i64),
    Bool(bool),
    Op(UnaryOp),
    Conn(Connective),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(v) => Some(*v),
            _ => None,
        }
    }

    /// Parses the textual form produced by `Display`.
    pub fn parse(s: &str) -> Option<Value> {
        let s = s.trim();
        Some(match s {
            "True" | "true" => Value::Bool(true),
            "False" | "false" => Value::Bool(false),
            "not" => Value::Op(UnaryOp::Not),
            "id" => Value::Op(UnaryOp::Id),
            "and" => Value::Conn(Connective::And),
            "or" => Value::Conn(Connective::Or),
            "null" | "∅" => Value::Null,
            _ => Value::Int(s.parse().ok()?),
        })
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("∅"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(true) => f.write_str("True"),
            Value::Bool(false) => f.write_str("False"),
            Value::Op(UnaryOp::Not) => f.write_str("not"),
            Value::Op(UnaryOp::Id) => f.write_str("id"),
            Value::Conn(Connective::And) => f.write_str("and"),
            Value::Conn(Connective::Or) => f.write_str("or"),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<UnaryOp> for Value {
    fn from(v: UnaryOp) -> Self {
        Value::Op(v)
    }
}

impl From<Connective> for Value {
    fn from(v: Connective) -> Self {
        Value::Conn(v)
    }
}

/// Integer domain `lo..=hi`.
pub fn int_domain(lo: i64, hi: i64) -> Vec<Value> {
    (lo..=hi).map(Value::Int).collect()
}

pub fn bool_domain() -> Vec<Value> {
    vec![Value::Bool(true), Value::Bool(false)]
}

pub fn op_domain() -> Vec<Value> {
    vec![Value::Op(UnaryOp::Not), Value::Op(UnaryOp::Id)]
}

pub fn conn_domain() -> Vec<Value> {
    vec![Value::Conn(Connective::And), Value::Conn(Connective::Or)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_parse_round_trip() {
        let all = [
            Value::Null,
            Value::Int(-3),
            Value::Int(17),
            Value::Bool(true),
            Value::Bool(false),
            Value::Op(UnaryOp::Not),
            Value::Op(UnaryOp::Id),
            Value::Conn(Connective::And),
            Value::Conn(Connective::Or),
        ];
        for v in all {
            assert_eq!(Value::parse(&v.to_string()), Some(v));
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(serde_json::from_str::<Value>(&json).unwrap(), v);
        }
    }

    #[test]
    fn dual_is_involution() {
        for c in [Connective::And, Connective::Or] {
            assert_eq!(c.dual().dual(), c);
            assert_ne!(c.dual(), c);
        }
    }
}
