//! Input enumeration and factual / counterfactual dataset generation.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scm::{apply_intervention, cartesian, interchange_intervention, CausalModel, Value};
use crate::task::TaskKind;

/// Name of the aligned intermediate variable of every zoo model.
pub const TARGET_VARIABLE: &str = "P";
pub const OUTPUT_VARIABLE: &str = "O";

/// All inputs of a task (or of a restricted range), in lexicographic order,
/// with a bijection to node ids `0..len`.
#[derive(Clone, Debug)]
pub struct InputEnumeration {
    task: TaskKind,
    ranges: Vec<Vec<Value>>,
    inputs: Vec<Vec<Value>>,
    index: HashMap<Vec<Value>, usize>,
}

impl InputEnumeration {
    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<Value>] {
        &self.inputs
    }

    pub fn get(&self, id: usize) -> Option<&[Value]> {
        self.inputs.get(id).map(Vec::as_slice)
    }

    pub fn index_of(&self, input: &[Value]) -> Option<usize> {
        self.index.get(input).copied()
    }

    pub fn ranges(&self) -> &[Vec<Value>] {
        &self.ranges
    }

    /// Hex SHA-256 of the task name and the ordered inputs.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.task.to_string().as_bytes());
        for inp in &self.inputs {
            h.update(b"\n");
            for v in inp {
                h.update(v.to_string().as_bytes());
                h.update(b",");
            }
        }
        hex::encode(h.finalize())
    }
}

/// Enumerates a task's inputs, optionally restricted to per-input value ranges.
///
/// Restricted ranges are reordered to follow the task's domain order, so the
/// enumeration is always lexicographic in that order.
pub fn enumerate_inputs(task: TaskKind, ranges: Option<Vec<Vec<Value>>>) -> Result<InputEnumeration> {
    let full = task.input_domains();
    let ranges = match ranges {
        None => full,
        Some(r) => {
            if r.len() != full.len() {
                return Err(Error::InputArity {
                    expected: full.len(),
                    got: r.len(),
                });
            }
            let mut out = Vec::with_capacity(r.len());
            for ((vals, dom), name) in r.iter().zip(&full).zip(task.input_names()) {
                if vals.is_empty() {
                    return Err(Error::EmptyRange(name.to_string()));
                }
                if let Some(bad) = vals.iter().find(|v| !dom.contains(v)) {
                    return Err(Error::OutOfDomain {
                        variable: name.to_string(),
                        value: bad.to_string(),
                    });
                }
                out.push(dom.iter().filter(|d| vals.contains(d)).copied().collect());
            }
            out
        }
    };
    let doms: Vec<&[Value]> = ranges.iter().map(Vec::as_slice).collect();
    let inputs = cartesian(&doms);
    let index = inputs.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
    Ok(InputEnumeration {
        task,
        ranges,
        inputs,
        index,
    })
}

/// Arithmetic ranges with the same value set for X, Y and Z.
pub fn arithmetic_ranges(values: &[i64]) -> Vec<Vec<Value>> {
    vec![values.iter().map(|&v| Value::Int(v)).collect(); 3]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactualExample {
    pub input: Vec<Value>,
    pub label: Value,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterfactualExample {
    pub base: Vec<Value>,
    pub source: Vec<Value>,
    pub target_variable: String,
    pub expected_output: Value,
}

/// `n` uniform draws with replacement from the full task enumeration.
pub fn gen_factual(task: TaskKind, n: usize, seed: u64) -> Result<Vec<FactualExample>> {
    gen_factual_from(&enumerate_inputs(task, None)?, n, seed)
}

pub fn gen_factual_from(enumeration: &InputEnumeration, n: usize, seed: u64) -> Result<Vec<FactualExample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let input = enumeration.inputs[rng.gen_range(0..enumeration.len())].clone();
            let label = enumeration.task.ground_truth(&input)?;
            Ok(FactualExample { input, label })
        })
        .collect()
}

/// Output of `model` on `base` after fixing `P` to its value on `source`.
pub fn counterfactual_output(model: &CausalModel, base: &[Value], source: &[Value]) -> Result<Value> {
    let iv = interchange_intervention(model, source, &[TARGET_VARIABLE])?;
    let solved = apply_intervention(model, &iv)?.solve(base)?;
    solved
        .get(OUTPUT_VARIABLE)
        .ok_or_else(|| Error::UnknownVariable(OUTPUT_VARIABLE.into()))
}

fn require_target(model: &CausalModel) -> Result<()> {
    if model.intermediate_names().contains(&TARGET_VARIABLE) {
        Ok(())
    } else {
        Err(Error::NoIntermediate(model.name().to_string()))
    }
}

/// `n` uniformly sampled (base, source) pairs labelled by the high-level
/// interchange on `P`. Pairs with base = source are kept.
pub fn gen_counterfactual(
    task: TaskKind,
    high_model: &CausalModel,
    n: usize,
    seed: u64,
) -> Result<Vec<CounterfactualExample>> {
    let enumeration = enumerate_inputs(task, None)?;
    let table = CounterfactualTable::new(high_model, &enumeration)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let b = rng.gen_range(0..enumeration.len());
            let s = rng.gen_range(0..enumeration.len());
            CounterfactualExample {
                base: enumeration.inputs[b].clone(),
                source: enumeration.inputs[s].clone(),
                target_variable: TARGET_VARIABLE.to_string(),
                expected_output: table.expected(b, s),
            }
        })
        .collect())
}

/// Precomputed high-level interchange outputs for every (base, source) pair
/// of an enumeration.
///
/// The output under the interchange depends on the source only through its
/// value of `P`, so the table stores one row per base and distinct `P` value.
#[derive(Clone, Debug)]
pub struct CounterfactualTable {
    p_slot: Vec<usize>,
    outputs: Vec<Vec<Value>>,
}

impl CounterfactualTable {
    pub fn new(model: &CausalModel, enumeration: &InputEnumeration) -> Result<Self> {
        require_target(model)?;
        let mut p_values: Vec<Value> = Vec::new();
        let mut p_slot = Vec::with_capacity(enumeration.len());
        for inp in &enumeration.inputs {
            let p = model
                .solve(inp)?
                .get(TARGET_VARIABLE)
                .ok_or_else(|| Error::NoIntermediate(model.name().to_string()))?;
            let slot = match p_values.iter().position(|&q| q == p) {
                Some(s) => s,
                None => {
                    p_values.push(p);
                    p_values.len() - 1
                }
            };
            p_slot.push(slot);
        }
        let intervened = p_values
            .iter()
            .map(|&p| apply_intervention(model, &crate::scm::HardIntervention::new().with(TARGET_VARIABLE, p)))
            .collect::<Result<Vec<_>>>()?;
        let outputs = enumeration
            .inputs
            .iter()
            .map(|base| {
                intervened
                    .iter()
                    .map(|m| {
                        m.solve(base)?
                            .get(OUTPUT_VARIABLE)
                            .ok_or_else(|| Error::UnknownVariable(OUTPUT_VARIABLE.into()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { p_slot, outputs })
    }

    pub fn expected(&self, base: usize, source: usize) -> Value {
        self.outputs[base][self.p_slot[source]]
    }
}

fn csv_header(task: TaskKind, counterfactual: bool) -> Vec<String> {
    let cols = task.csv_columns();
    let mut h: Vec<String> = cols.iter().map(|c| c.to_string()).collect();
    if counterfactual {
        h.extend(cols.iter().map(|c| format!("src_{c}")));
        h.push("target_var".into());
        h.push("expected".into());
    } else {
        h.push("label".into());
    }
    h
}

pub fn write_factual_csv<W: Write>(task: TaskKind, rows: &[FactualExample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(task, false))?;
    for r in rows {
        let mut rec: Vec<String> = r.input.iter().map(Value::to_string).collect();
        rec.push(r.label.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_counterfactual_csv<W: Write>(task: TaskKind, rows: &[CounterfactualExample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(task, true))?;
    for r in rows {
        let mut rec: Vec<String> = r.base.iter().map(Value::to_string).collect();
        rec.extend(r.source.iter().map(Value::to_string));
        rec.push(r.target_variable.clone());
        rec.push(r.expected_output.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

fn parse_cell(s: &str) -> Result<Value> {
    Value::parse(s).ok_or_else(|| Error::Format(format!("cannot parse value `{s}`")))
}

fn check_header<R: Read>(r: &mut csv::Reader<R>, task: TaskKind, cf: bool) -> Result<()> {
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != csv_header(task, cf) {
        return Err(Error::Format(format!("unexpected CSV header {got:?}")));
    }
    Ok(())
}

pub fn read_factual_csv<R: Read>(task: TaskKind, input: R) -> Result<Vec<FactualExample>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, task, false)?;
    let k = task.input_names().len();
    r.records()
        .map(|rec| {
            let rec = rec?;
            let vals = rec.iter().map(parse_cell).collect::<Result<Vec<_>>>()?;
            Ok(FactualExample {
                input: vals[..k].to_vec(),
                label: vals[k],
            })
        })
        .collect()
}

pub fn read_counterfactual_csv<R: Read>(task: TaskKind, input: R) -> Result<Vec<CounterfactualExample>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, task, true)?;
    let k = task.input_names().len();
    r.records()
        .map(|rec| {
            let rec = rec?;
            let cells: Vec<&str> = rec.iter().collect();
            let vals =
                |range: std::ops::Range<usize>| cells[range].iter().map(|c| parse_cell(c)).collect::<Result<Vec<_>>>();
            Ok(CounterfactualExample {
                base: vals(0..k)?,
                source: vals(k..2 * k)?,
                target_variable: cells[2 * k].to_string(),
                expected_output: parse_cell(cells[2 * k + 1])?,
            })
        })
        .collect()
}
