//! The two toy tasks: summing three numbers, and evaluating a small boolean formula.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::{apply_op, bool_domain, conn_domain, int_domain, op_domain, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Arithmetic,
    Boolean,
}

impl TaskKind {
    pub const ALL: [TaskKind; 2] = [TaskKind::Arithmetic, TaskKind::Boolean];

    pub fn input_names(self) -> &'static [&'static str] {
        match self {
            TaskKind::Arithmetic => &["X", "Y", "Z"],
            TaskKind::Boolean => &["OP1", "OP2", "X", "B", "OP3", "Y"],
        }
    }

    /// Column names used in CSV files, aligned with [`Self::input_names`].
    pub fn csv_columns(self) -> &'static [&'static str] {
        match self {
            TaskKind::Arithmetic => &["x", "y", "z"],
            TaskKind::Boolean => &["op1", "op2", "x", "b", "op3", "y"],
        }
    }

    pub fn input_domains(self) -> Vec<Vec<Value>> {
        match self {
            TaskKind::Arithmetic => vec![int_domain(1, 10); 3],
            TaskKind::Boolean => vec![
                op_domain(),
                op_domain(),
                bool_domain(),
                conn_domain(),
                op_domain(),
                bool_domain(),
            ],
        }
    }

    /// Ordered output domain; position in this list is the class index.
    pub fn output_domain(self) -> Vec<Value> {
        match self {
            TaskKind::Arithmetic => int_domain(3, 30),
            TaskKind::Boolean => vec![Value::Bool(false), Value::Bool(true)],
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            TaskKind::Arithmetic => 28,
            TaskKind::Boolean => 2,
        }
    }

    pub fn class_of(self, v: Value) -> Option<usize> {
        match (self, v) {
            (TaskKind::Arithmetic, Value::Int(s)) if (3..=30).contains(&s) => Some((s - 3) as usize),
            (TaskKind::Boolean, Value::Bool(b)) => Some(b as usize),
            _ => None,
        }
    }

    pub fn value_of_class(self, class: usize) -> Option<Value> {
        self.output_domain().get(class).copied()
    }

    /// Direct evaluation of the task on an input.
    pub fn ground_truth(self, input: &[Value]) -> Result<Value> {
        let bad = || Error::OutOfDomain {
            variable: format!("{self} input"),
            value: format!("{input:?}"),
        };
        if input.len() != self.input_names().len() {
            return Err(Error::InputArity {
                expected: self.input_names().len(),
                got: input.len(),
            });
        }
        for (v, dom) in input.iter().zip(self.input_domains()) {
            if !dom.contains(v) {
                return Err(bad());
            }
        }
        match self {
            TaskKind::Arithmetic => Ok(Value::Int(input.iter().filter_map(Value::as_int).sum())),
            TaskKind::Boolean => {
                let op = |v: Value| match v {
                    Value::Op(o) => Ok(o),
                    _ => Err(bad()),
                };
                let x = apply_op(op(input[1])?, input[2]).map_err(|_| bad())?;
                let y = apply_op(op(input[4])?, input[5]).map_err(|_| bad())?;
                let inner = match input[3] {
                    Value::Conn(c) => c.eval(x.as_bool().ok_or_else(bad)?, y.as_bool().ok_or_else(bad)?),
                    _ => return Err(bad()),
                };
                apply_op(op(input[0])?, Value::Bool(inner)).map_err(|_| bad())
            }
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Arithmetic => "arithmetic",
            TaskKind::Boolean => "boolean",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "arithmetic" | "arith" => Ok(TaskKind::Arithmetic),
            "boolean" | "bool" => Ok(TaskKind::Boolean),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}
