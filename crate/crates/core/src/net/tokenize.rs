//! Fixed token tables for both tasks.
//!
//! Arithmetic: `X + Y + Z =`, six tokens. Value `v` is token `v - 1`,
//! `+` is 10 and `=` is 11.
//!
//! Boolean: `<bos> OP1 ( OP2 ( X ) B OP3 ( Y ) ) = <eos>`, fifteen tokens
//! over the vocabulary in [`BOOLEAN_VOCAB`].

use crate::scm::{Connective, UnaryOp, Value};
use crate::task::TaskKind;

pub const ARITHMETIC_PLUS: usize = 10;
pub const ARITHMETIC_EQ: usize = 11;

pub const BOOLEAN_VOCAB: [&str; 11] = [
    "<bos>", "<eos>", "(", ")", "=", "not", "id", "and", "or", "True", "False",
];

const BOS: usize = 0;
const EOS: usize = 1;
const OPEN: usize = 2;
const CLOSE: usize = 3;
const EQ: usize = 4;

pub fn vocab_size(task: TaskKind) -> usize {
    match task {
        TaskKind::Arithmetic => 12,
        TaskKind::Boolean => BOOLEAN_VOCAB.len(),
    }
}

pub fn seq_len(task: TaskKind) -> usize {
    match task {
        TaskKind::Arithmetic => 6,
        TaskKind::Boolean => 15,
    }
}

fn bool_token(v: Value) -> usize {
    match v {
        Value::Op(UnaryOp::Not) => 5,
        Value::Op(UnaryOp::Id) => 6,
        Value::Conn(Connective::And) => 7,
        Value::Conn(Connective::Or) => 8,
        Value::Bool(true) => 9,
        Value::Bool(false) => 10,
        other => panic!("no boolean token for {other}"),
    }
}

/// Token ids for a valid task input.
///
/// # Panics
/// If the input does not belong to the task's input space.
pub fn tokenize(task: TaskKind, input: &[Value]) -> Vec<usize> {
    assert_eq!(input.len(), task.input_names().len(), "input arity");
    match task {
        TaskKind::Arithmetic => {
            let t = |v: Value| match v {
                Value::Int(x @ 1..=10) => (x - 1) as usize,
                other => panic!("no arithmetic token for {other}"),
            };
            vec![
                t(input[0]),
                ARITHMETIC_PLUS,
                t(input[1]),
                ARITHMETIC_PLUS,
                t(input[2]),
                ARITHMETIC_EQ,
            ]
        }
        TaskKind::Boolean => {
            let [op1, op2, x, b, op3, y] = [0, 1, 2, 3, 4, 5].map(|i| bool_token(input[i]));
            vec![
                BOS, op1, OPEN, op2, OPEN, x, CLOSE, b, op3, OPEN, y, CLOSE, CLOSE, EQ, EOS,
            ]
        }
    }
}

/// Human-readable rendering of a token sequence.
pub fn render(task: TaskKind, tokens: &[usize]) -> String {
    tokens
        .iter()
        .map(|&t| match task {
            TaskKind::Arithmetic => match t {
                ARITHMETIC_PLUS => "+".to_string(),
                ARITHMETIC_EQ => "=".to_string(),
                v => (v + 1).to_string(),
            },
            TaskKind::Boolean => BOOLEAN_VOCAB[t].to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}
