//! Candidate high-level models for both tasks, combined models and strength.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datagen::InputEnumeration;
use crate::error::{Error, Result};
use crate::scm::{bool_domain, conn_domain, int_domain, op_domain, CausalModel, Mechanism, ModelBuilder, Role, Value};
use crate::task::TaskKind;

/// Identifier of a zoo model. The string form (`M_XY`, `M_OP1`, `M_Xp`, ...)
/// is what the CLI and files use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ZooModelId {
    task: TaskKind,
    slot: usize,
}

const ARITH_IDS: [&str; 7] = ["M_X", "M_Y", "M_Z", "M_XY", "M_YZ", "M_XZ", "M_XYZ"];
const BOOL_IDS: [&str; 13] = [
    "M_X", "M_Y", "M_B", "M_OP1", "M_OP2", "M_OP3", "M_Xp", "M_Yp", "M_Q", "M_V", "M_W", "M_Bp", "M_O",
];

fn ids(task: TaskKind) -> &'static [&'static str] {
    match task {
        TaskKind::Arithmetic => &ARITH_IDS,
        TaskKind::Boolean => &BOOL_IDS,
    }
}

impl ZooModelId {
    pub fn parse(task: TaskKind, s: &str) -> Result<Self> {
        // `M_X'` is accepted as a spelling of `M_Xp`.
        let norm = s.trim().replace('\'', "p");
        ids(task)
            .iter()
            .position(|&id| id == norm)
            .map(|slot| Self { task, slot })
            .ok_or_else(|| Error::UnknownModel {
                task: task.to_string(),
                id: s.to_string(),
            })
    }

    pub fn all(task: TaskKind) -> Vec<Self> {
        (0..ids(task).len()).map(|slot| Self { task, slot }).collect()
    }

    /// The model whose intermediate variable is the whole computation.
    pub fn trivial(task: TaskKind) -> Self {
        Self {
            task,
            slot: ids(task).len() - 1,
        }
    }

    /// Every model except the trivial one.
    pub fn candidates(task: TaskKind) -> Vec<Self> {
        let t = Self::trivial(task);
        Self::all(task).into_iter().filter(|&m| m != t).collect()
    }

    pub fn task(self) -> TaskKind {
        self.task
    }

    pub fn is_trivial(self) -> bool {
        self == Self::trivial(self.task)
    }

    pub fn as_str(self) -> &'static str {
        ids(self.task)[self.slot]
    }
}

impl fmt::Display for ZooModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn mech(name: &str) -> Mechanism {
    Mechanism::named(name).expect("registered mechanism")
}

fn arithmetic_inputs(name: &str) -> ModelBuilder {
    ModelBuilder::new(name)
        .input("X", int_domain(1, 10))
        .input("Y", int_domain(1, 10))
        .input("Z", int_domain(1, 10))
}

fn boolean_inputs(name: &str) -> ModelBuilder {
    ModelBuilder::new(name)
        .input("OP1", op_domain())
        .input("OP2", op_domain())
        .input("X", bool_domain())
        .input("B", conn_domain())
        .input("OP3", op_domain())
        .input("Y", bool_domain())
}

/// Builds a zoo model. Every model has one intermediate `P` and output `O`.
pub fn build_zoo_model(task: TaskKind, id: ZooModelId) -> Result<CausalModel> {
    if id.task != task {
        return Err(Error::UnknownModel {
            task: task.to_string(),
            id: id.to_string(),
        });
    }
    let name = id.as_str();
    let b = match task {
        TaskKind::Arithmetic => {
            let out = int_domain(3, 30);
            let b = arithmetic_inputs(name);
            match name {
                "M_X" | "M_Y" | "M_Z" => {
                    let v = &name[2..];
                    let rest: Vec<&str> = ["X", "Y", "Z"].into_iter().filter(|&x| x != v).collect();
                    b.intermediate("P", int_domain(1, 10), &[v], mech("project")).output(
                        "O",
                        out,
                        &["P", rest[0], rest[1]],
                        mech("sum"),
                    )
                }
                "M_XY" | "M_YZ" | "M_XZ" => {
                    let (a, c) = (&name[2..3], &name[3..4]);
                    let rest = ["X", "Y", "Z"].into_iter().find(|&x| x != a && x != c).unwrap();
                    b.intermediate("P", int_domain(2, 20), &[a, c], mech("sum")).output(
                        "O",
                        out,
                        &["P", rest],
                        mech("sum"),
                    )
                }
                _ => b
                    .intermediate("P", int_domain(3, 30), &["X", "Y", "Z"], mech("sum"))
                    .output("O", out, &["P"], mech("project")),
            }
        }
        TaskKind::Boolean => {
            let out = bool_domain();
            let b = boolean_inputs(name);
            let eval = mech("bool-eval");
            match name {
                "M_X" => b.intermediate("P", bool_domain(), &["X"], mech("project")).output(
                    "O",
                    out,
                    &["OP1", "OP2", "P", "B", "OP3", "Y"],
                    eval,
                ),
                "M_Y" => b.intermediate("P", bool_domain(), &["Y"], mech("project")).output(
                    "O",
                    out,
                    &["OP1", "OP2", "X", "B", "OP3", "P"],
                    eval,
                ),
                "M_B" => b.intermediate("P", conn_domain(), &["B"], mech("project")).output(
                    "O",
                    out,
                    &["OP1", "OP2", "X", "P", "OP3", "Y"],
                    eval,
                ),
                "M_OP1" => b.intermediate("P", op_domain(), &["OP1"], mech("project")).output(
                    "O",
                    out,
                    &["P", "OP2", "X", "B", "OP3", "Y"],
                    eval,
                ),
                "M_OP2" => b.intermediate("P", op_domain(), &["OP2"], mech("project")).output(
                    "O",
                    out,
                    &["OP1", "P", "X", "B", "OP3", "Y"],
                    eval,
                ),
                "M_OP3" => b.intermediate("P", op_domain(), &["OP3"], mech("project")).output(
                    "O",
                    out,
                    &["OP1", "OP2", "X", "B", "P", "Y"],
                    eval,
                ),
                "M_Xp" => b.intermediate("P", bool_domain(), &["OP2", "X"], mech("apply")).output(
                    "O",
                    out,
                    &["OP1", "P", "B", "OP3", "Y"],
                    mech("bool-eval-left"),
                ),
                "M_Yp" => b.intermediate("P", bool_domain(), &["OP3", "Y"], mech("apply")).output(
                    "O",
                    out,
                    &["OP1", "OP2", "X", "B", "P"],
                    mech("bool-eval-right"),
                ),
                "M_Q" => b
                    .intermediate("P", bool_domain(), &["OP2", "X", "B", "OP3", "Y"], mech("bool-inner"))
                    .output("O", out, &["OP1", "P"], mech("apply")),
                "M_V" => b
                    .intermediate("P", bool_domain(), &["OP1", "OP2", "X"], mech("apply2"))
                    .output("O", out, &["OP1", "P", "B", "OP3", "Y"], mech("demorgan-left")),
                "M_W" => b
                    .intermediate("P", bool_domain(), &["OP1", "OP3", "Y"], mech("apply2"))
                    .output("O", out, &["OP1", "OP2", "X", "B", "P"], mech("demorgan-right")),
                "M_Bp" => b.intermediate("P", conn_domain(), &["OP1", "B"], mech("apply")).output(
                    "O",
                    out,
                    &["OP1", "OP2", "X", "P", "OP3", "Y"],
                    mech("demorgan-mid"),
                ),
                _ => b
                    .intermediate("P", bool_domain(), &["OP1", "OP2", "X", "B", "OP3", "Y"], eval)
                    .output("O", out, &["P"], mech("project")),
            }
        }
    };
    b.build()
}

/// Proportion of inputs not assigned to the trivial model, kept as a ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrengthValue {
    pub explained: usize,
    pub total: usize,
}

impl StrengthValue {
    pub fn new(explained: usize, total: usize) -> Self {
        assert!(
            explained <= total && total > 0,
            "strength needs 0 <= explained <= total, total > 0"
        );
        Self { explained, total }
    }

    pub fn value(self) -> f64 {
        self.explained as f64 / self.total as f64
    }
}

/// A member of a combined model with its partition cell.
#[derive(Clone, Debug)]
pub struct Member {
    pub model: CausalModel,
    pub cell: BTreeSet<usize>,
}

/// Piecewise model: on inputs in member `j`'s cell, member `j`'s intermediates
/// are active and every other member's intermediates are `∅`.
#[derive(Clone, Debug)]
pub struct CombinedModel {
    members: Vec<Member>,
    trivial_index: usize,
    total: usize,
    cell_of: Arc<Vec<usize>>,
    model: CausalModel,
}

impl CombinedModel {
    pub fn model(&self) -> &CausalModel {
        &self.model
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn trivial_index(&self) -> usize {
        self.trivial_index
    }

    /// Index of the member whose cell contains node `id`.
    pub fn member_of(&self, id: usize) -> usize {
        self.cell_of[id]
    }

    /// Name of a member's intermediate variable inside the combined model.
    pub fn renamed(&self, member: usize, var: &str) -> String {
        renamed(&self.members[member].model, var)
    }
}

fn renamed(member: &CausalModel, var: &str) -> String {
    let suffix = member.name().strip_prefix("M_").unwrap_or(member.name());
    format!("{var}_{suffix}")
}

/// Combines member models over an input partition given as node-id cells of
/// `enumeration`. Inputs not covered by any cell go to the trivial member.
pub fn combine(
    enumeration: &InputEnumeration,
    members: Vec<CausalModel>,
    cells: Vec<BTreeSet<usize>>,
    trivial_index: usize,
) -> Result<CombinedModel> {
    if members.is_empty() || members.len() != cells.len() || trivial_index >= members.len() {
        return Err(Error::InvalidPartition(format!(
            "{} members, {} cells, trivial index {trivial_index}",
            members.len(),
            cells.len()
        )));
    }
    let first = &members[0];
    let inputs: Vec<String> = first.input_names().iter().map(|s| s.to_string()).collect();
    let outputs: Vec<String> = first.output_names().iter().map(|s| s.to_string()).collect();
    if inputs != enumeration.task().input_names() {
        return Err(Error::MismatchedInputs(format!(
            "members read {inputs:?}, enumeration is over {:?}",
            enumeration.task().input_names()
        )));
    }
    for m in &members[1..] {
        if m.input_names() != first.input_names()
            || m.input_domains() != first.input_domains()
            || m.output_names() != first.output_names()
        {
            return Err(Error::MismatchedInputs(format!(
                "`{}` and `{}` differ in inputs or outputs",
                m.name(),
                first.name()
            )));
        }
    }

    let n = enumeration.len();
    let mut cell_of = vec![usize::MAX; n];
    for (j, cell) in cells.iter().enumerate() {
        for &id in cell {
            if id >= n {
                return Err(Error::InvalidPartition(format!("node {id} is outside the enumeration")));
            }
            if cell_of[id] != usize::MAX {
                return Err(Error::InvalidPartition(format!(
                    "node {id} is in the cells of members {} and {j}",
                    cell_of[id]
                )));
            }
            cell_of[id] = j;
        }
    }
    let mut cells = cells;
    for (id, c) in cell_of.iter_mut().enumerate() {
        if *c == usize::MAX {
            *c = trivial_index;
            cells[trivial_index].insert(id);
        }
    }

    for (id, inp) in enumeration.inputs().iter().enumerate() {
        let mut outs = members.iter().map(|m| m.solve(inp).map(|s| s.project(&["O"])));
        let reference = outs.next().unwrap()??;
        for o in outs {
            if o?? != reference {
                return Err(Error::OutputDisagreement { node: id });
            }
        }
    }

    let cell_of = Arc::new(cell_of);
    let index = Arc::new(enumeration.clone());
    let n_in = inputs.len();
    let mut b = ModelBuilder::new(
        members
            .iter()
            .map(|m| m.name().strip_prefix("M_").unwrap_or(m.name()))
            .collect::<Vec<_>>()
            .join("+"),
    );
    for (name, dom) in inputs.iter().zip(first.input_domains()) {
        b = b.input(name, dom.to_vec());
    }
    let input_refs: Vec<&str> = inputs.iter().map(String::as_str).collect();

    // Parents of every combined mechanism: all inputs first (for dispatch),
    // then all intermediates of all members.
    let mut all_intermediates: Vec<String> = Vec::new();
    for (j, m) in members.iter().enumerate() {
        for var in m.causal_order() {
            let v = m.variable(var).unwrap();
            if v.role != Role::Intermediate {
                continue;
            }
            let new_name = renamed(m, var);
            let slots = parent_slots(m, v, &inputs, j, &members)?;
            let f = v.mechanism.clone();
            let cells = cell_of.clone();
            let idx = index.clone();
            let var_name = var.to_string();
            let mut parents: Vec<String> = inputs.clone();
            parents.extend(all_intermediates.iter().cloned());
            let mech = Mechanism::null_tolerant(&format!("combined:{new_name}"), move |args| {
                let id = idx
                    .index_of(&args[..n_in])
                    .ok_or("input is outside the partitioned enumeration")?;
                if cells[id] != j {
                    return Ok(Value::Null);
                }
                let member_args = gather(args, &slots, &var_name)?;
                f.evaluate(&member_args)
            });
            let parent_refs: Vec<&str> = parents.iter().map(String::as_str).collect();
            b = b.intermediate(&new_name, v.domain.clone(), &parent_refs, mech);
            all_intermediates.push(new_name);
        }
    }

    for out in &outputs {
        let mut branches = Vec::with_capacity(members.len());
        for (j, m) in members.iter().enumerate() {
            let v = m.variable(out).unwrap();
            branches.push((
                v.mechanism.clone(),
                parent_slots_all(m, v, &inputs, &all_intermediates, j, &members)?,
            ));
        }
        let cells = cell_of.clone();
        let idx = index.clone();
        let out_name = out.clone();
        let mech = Mechanism::null_tolerant(&format!("combined:{out}"), move |args| {
            let id = idx
                .index_of(&args[..n_in])
                .ok_or("input is outside the partitioned enumeration")?;
            let (f, slots) = &branches[cells[id]];
            f.evaluate(&gather(args, slots, &out_name)?)
        });
        let mut parents: Vec<&str> = input_refs.clone();
        parents.extend(all_intermediates.iter().map(String::as_str));
        b = b.output(out, first.variable(out).unwrap().domain.clone(), &parents, mech);
    }

    let model = b.build()?;
    Ok(CombinedModel {
        members: members
            .into_iter()
            .zip(cells)
            .map(|(model, cell)| Member { model, cell })
            .collect(),
        trivial_index,
        total: n,
        cell_of,
        model,
    })
}

fn gather(args: &[Value], slots: &[usize], var: &str) -> std::result::Result<Vec<Value>, String> {
    slots
        .iter()
        .map(|&s| {
            let v = args[s];
            if v.is_null() {
                Err(format!("active branch of `{var}` read ∅"))
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// Positions of a member intermediate's parents inside the combined parent
/// list (inputs, then previously declared combined intermediates).
fn parent_slots(
    m: &CausalModel,
    v: &crate::scm::Variable,
    inputs: &[String],
    _j: usize,
    _members: &[CausalModel],
) -> Result<Vec<usize>> {
    v.parents
        .iter()
        .map(|&p| {
            let pv = &m.variables()[p];
            if pv.role == Role::Input {
                Ok(inputs.iter().position(|i| *i == pv.name).unwrap())
            } else {
                Err(Error::InvalidModel(format!(
                    "member `{}`: intermediate `{}` reads intermediate `{}`; only input-fed intermediates can be combined",
                    m.name(),
                    v.name,
                    pv.name
                )))
            }
        })
        .collect()
}

fn parent_slots_all(
    m: &CausalModel,
    v: &crate::scm::Variable,
    inputs: &[String],
    intermediates: &[String],
    _j: usize,
    _members: &[CausalModel],
) -> Result<Vec<usize>> {
    Ok(v.parents
        .iter()
        .map(|&p| {
            let pv = &m.variables()[p];
            if pv.role == Role::Input {
                inputs.iter().position(|i| *i == pv.name).unwrap()
            } else {
                let name = renamed(m, &pv.name);
                inputs.len() + intermediates.iter().position(|i| *i == name).unwrap()
            }
        })
        .collect())
}

/// `1 - |trivial cell| / |input space|`.
pub fn strength(cm: &CombinedModel) -> StrengthValue {
    let trivial = cm.members[cm.trivial_index].cell.len();
    StrengthValue::new(cm.total - trivial, cm.total)
}

/// Serializable description of a combined model: member ids and cells.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinedModelFile {
    pub task: TaskKind,
    pub enumeration_hash: String,
    pub trivial: String,
    pub members: Vec<CombinedMemberFile>,
    pub strength: StrengthValue,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinedMemberFile {
    pub model: String,
    pub cell: Vec<usize>,
}

impl CombinedModelFile {
    pub fn from_combined(cm: &CombinedModel, enumeration: &InputEnumeration) -> Self {
        Self {
            task: enumeration.task(),
            enumeration_hash: enumeration.hash(),
            trivial: cm.members[cm.trivial_index].model.name().to_string(),
            members: cm
                .members
                .iter()
                .map(|m| CombinedMemberFile {
                    model: m.model.name().to_string(),
                    cell: m.cell.iter().copied().collect(),
                })
                .collect(),
            strength: strength(cm),
        }
    }

    /// Rebuilds the combined model from zoo ids.
    pub fn build(&self, enumeration: &InputEnumeration) -> Result<CombinedModel> {
        if enumeration.hash() != self.enumeration_hash {
            return Err(Error::MismatchedInputs("enumeration hash differs".into()));
        }
        let mut models = Vec::new();
        let mut cells = Vec::new();
        for m in &self.members {
            let id = ZooModelId::parse(self.task, &m.model)?;
            models.push(build_zoo_model(self.task, id)?);
            cells.push(m.cell.iter().copied().collect());
        }
        let trivial_index = self
            .members
            .iter()
            .position(|m| m.model == self.trivial)
            .ok_or_else(|| Error::InvalidPartition("trivial member missing".into()))?;
        combine(enumeration, models, cells, trivial_index)
    }
}
