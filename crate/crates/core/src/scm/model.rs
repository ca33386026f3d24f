use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mechanism::Mechanism;
use super::value::Value;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Input,
    Intermediate,
    Output,
}

#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub domain: Vec<Value>,
    pub parents: Vec<usize>,
    pub mechanism: Mechanism,
    pub role: Role,
}

impl Variable {
    /// Domain membership; `∅` is implicitly in every domain.
    pub fn admits(&self, v: &Value) -> bool {
        v.is_null() || self.domain.contains(v)
    }
}

/// A finite, acyclic, deterministic structural causal model.
#[derive(Clone)]
pub struct CausalModel {
    name: String,
    vars: Vec<Variable>,
    names: Arc<[String]>,
    index: HashMap<String, usize>,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    order: Vec<usize>,
    warnings: Vec<String>,
}

impl fmt::Debug for CausalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CausalModel")
            .field("name", &self.name)
            .field("variables", &self.names)
            .finish()
    }
}

/// A value for every variable of a model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TotalSetting {
    names: Arc<[String]>,
    values: Vec<Value>,
}

impl TotalSetting {
    pub fn get(&self, name: &str) -> Option<Value> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Restriction of the setting to `vars`, in the given order.
    pub fn project(&self, vars: &[&str]) -> Result<Vec<Value>> {
        vars.iter()
            .map(|v| self.get(v).ok_or_else(|| Error::UnknownVariable(v.to_string())))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Value)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().copied())
    }
}

struct Decl {
    name: String,
    domain: Vec<Value>,
    parents: Vec<String>,
    mechanism: Mechanism,
    role: Role,
}

/// Incremental constructor for [`CausalModel`].
pub struct ModelBuilder {
    name: String,
    decls: Vec<Decl>,
}

impl ModelBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            decls: Vec::new(),
        }
    }

    pub fn input(mut self, name: &str, domain: Vec<Value>) -> Self {
        self.decls.push(Decl {
            name: name.into(),
            domain,
            parents: Vec::new(),
            mechanism: Mechanism::input(),
            role: Role::Input,
        });
        self
    }

    pub fn intermediate(mut self, name: &str, domain: Vec<Value>, parents: &[&str], mechanism: Mechanism) -> Self {
        self.decls.push(Decl {
            name: name.into(),
            domain,
            parents: parents.iter().map(|p| p.to_string()).collect(),
            mechanism,
            role: Role::Intermediate,
        });
        self
    }

    pub fn output(mut self, name: &str, domain: Vec<Value>, parents: &[&str], mechanism: Mechanism) -> Self {
        self.decls.push(Decl {
            name: name.into(),
            domain,
            parents: parents.iter().map(|p| p.to_string()).collect(),
            mechanism,
            role: Role::Output,
        });
        self
    }

    pub fn build(self) -> Result<CausalModel> {
        let mut index = HashMap::new();
        for (i, d) in self.decls.iter().enumerate() {
            if index.insert(d.name.clone(), i).is_some() {
                return Err(Error::DuplicateVariable(d.name.clone()));
            }
        }
        let mut vars = Vec::with_capacity(self.decls.len());
        for d in self.decls {
            let parents = d
                .parents
                .iter()
                .map(|p| index.get(p).copied().ok_or_else(|| Error::UnknownVariable(p.clone())))
                .collect::<Result<Vec<_>>>()?;
            match d.role {
                Role::Input if !d.mechanism.is_input() || !parents.is_empty() => {
                    return Err(Error::InvalidModel(format!("input `{}` must be parentless", d.name)));
                }
                Role::Intermediate | Role::Output if d.mechanism.is_input() => {
                    return Err(Error::InvalidModel(format!(
                        "`{}` is not an input but has no mechanism",
                        d.name
                    )));
                }
                _ => {}
            }
            if d.domain.is_empty() || d.domain.iter().any(Value::is_null) {
                return Err(Error::InvalidModel(format!(
                    "domain of `{}` must be nonempty and must not list ∅",
                    d.name
                )));
            }
            vars.push(Variable {
                name: d.name,
                domain: d.domain,
                parents,
                mechanism: d.mechanism,
                role: d.role,
            });
        }
        for v in &vars {
            for &p in &v.parents {
                if vars[p].role == Role::Output {
                    return Err(Error::InvalidModel(format!(
                        "output `{}` has child `{}`",
                        vars[p].name, v.name
                    )));
                }
            }
        }
        let mut model = CausalModel::from_parts(self.name, vars)?;
        model.warnings = model.probe_parents();
        for w in &model.warnings {
            log::debug!("{}: {w}", model.name);
        }
        Ok(model)
    }
}

impl CausalModel {
    fn from_parts(name: String, vars: Vec<Variable>) -> Result<Self> {
        let names: Arc<[String]> = vars.iter().map(|v| v.name.clone()).collect();
        let index = vars.iter().enumerate().map(|(i, v)| (v.name.clone(), i)).collect();
        let inputs = (0..vars.len()).filter(|&i| vars[i].role == Role::Input).collect();
        let outputs = (0..vars.len()).filter(|&i| vars[i].role == Role::Output).collect();
        let order = topological_order(&vars)?;
        Ok(Self {
            name,
            vars,
            names,
            index,
            inputs,
            outputs,
            order,
            warnings: Vec::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.index.get(name).map(|&i| &self.vars[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn input_names(&self) -> Vec<&str> {
        self.inputs.iter().map(|&i| self.vars[i].name.as_str()).collect()
    }

    pub fn output_names(&self) -> Vec<&str> {
        self.outputs.iter().map(|&i| self.vars[i].name.as_str()).collect()
    }

    pub fn intermediate_names(&self) -> Vec<&str> {
        self.vars
            .iter()
            .filter(|v| v.role == Role::Intermediate)
            .map(|v| v.name.as_str())
            .collect()
    }

    pub fn input_domains(&self) -> Vec<&[Value]> {
        self.inputs.iter().map(|&i| self.vars[i].domain.as_slice()).collect()
    }

    /// Declared-but-inert parents found when the model was built.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Variables in causal order (ties broken by declaration order).
    pub fn causal_order(&self) -> Vec<&str> {
        self.order.iter().map(|&i| self.vars[i].name.as_str()).collect()
    }

    pub(crate) fn replace_mechanisms(&self, replace: &BTreeMap<usize, Mechanism>) -> Result<CausalModel> {
        let mut vars = self.vars.clone();
        for (&i, m) in replace {
            vars[i].mechanism = m.clone();
            vars[i].parents.clear();
        }
        CausalModel::from_parts(self.name.clone(), vars)
    }

    /// Solves the model on an input, given in the order of [`Self::input_names`].
    pub fn solve(&self, input: &[Value]) -> Result<TotalSetting> {
        self.solve_in_order(input, &self.order)
    }

    /// Solves the model on a named input setting.
    pub fn solve_named(&self, input: &BTreeMap<String, Value>) -> Result<TotalSetting> {
        let ordered = self
            .inputs
            .iter()
            .map(|&i| {
                input
                    .get(&self.vars[i].name)
                    .copied()
                    .ok_or_else(|| Error::MismatchedInputs(format!("missing `{}`", self.vars[i].name)))
            })
            .collect::<Result<Vec<_>>>()?;
        self.solve(&ordered)
    }

    /// Solves using an explicit evaluation order, which must be topological.
    pub fn solve_with_order(&self, input: &[Value], order: &[&str]) -> Result<TotalSetting> {
        let idx = order
            .iter()
            .map(|n| self.index_of(n).ok_or_else(|| Error::UnknownVariable(n.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let mut seen = vec![false; self.vars.len()];
        for &i in &idx {
            if self.vars[i].parents.iter().any(|&p| !seen[p]) || seen[i] {
                return Err(Error::InvalidModel(format!(
                    "`{}` is out of causal order",
                    self.vars[i].name
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidModel("order does not cover every variable".into()));
        }
        self.solve_in_order(input, &idx)
    }

    fn solve_in_order(&self, input: &[Value], order: &[usize]) -> Result<TotalSetting> {
        if input.len() != self.inputs.len() {
            return Err(Error::InputArity {
                expected: self.inputs.len(),
                got: input.len(),
            });
        }
        let mut values = vec![Value::Null; self.vars.len()];
        for (&i, v) in self.inputs.iter().zip(input) {
            let var = &self.vars[i];
            if v.is_null() || !var.domain.contains(v) {
                return Err(Error::OutOfDomain {
                    variable: var.name.clone(),
                    value: v.to_string(),
                });
            }
            values[i] = *v;
        }
        let mut args = Vec::new();
        for &i in order {
            let var = &self.vars[i];
            if var.mechanism.is_input() {
                continue;
            }
            args.clear();
            for &p in &var.parents {
                let pv = values[p];
                if pv.is_null() && !var.mechanism.is_null_tolerant() {
                    return Err(Error::NullRead {
                        variable: var.name.clone(),
                        parent: self.vars[p].name.clone(),
                    });
                }
                args.push(pv);
            }
            let out = var.mechanism.evaluate(&args).map_err(|message| Error::Mechanism {
                variable: var.name.clone(),
                message,
            })?;
            if !var.admits(&out) {
                return Err(Error::OutOfDomain {
                    variable: var.name.clone(),
                    value: out.to_string(),
                });
            }
            values[i] = out;
        }
        Ok(TotalSetting {
            names: self.names.clone(),
            values,
        })
    }

    /// Every input setting, lexicographic in declaration order of inputs and domains.
    pub fn input_space(&self) -> Vec<Vec<Value>> {
        cartesian(&self.input_domains())
    }

    /// Varies each declared parent over its domain in a handful of contexts and
    /// reports parents that never change the mechanism's output.
    fn probe_parents(&self) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut warnings = Vec::new();
        for var in &self.vars {
            if var.mechanism.is_input() || var.parents.is_empty() {
                continue;
            }
            let doms: Vec<&[Value]> = var.parents.iter().map(|&p| self.vars[p].domain.as_slice()).collect();
            let mut contexts: Vec<Vec<Value>> = vec![doms.iter().map(|d| d[0]).collect()];
            for _ in 0..8 {
                contexts.push(doms.iter().map(|d| d[rng.gen_range(0..d.len())]).collect());
            }
            for (slot, &p) in var.parents.iter().enumerate() {
                let live = contexts.iter().any(|ctx| {
                    let mut ctx = ctx.clone();
                    let mut first = None;
                    doms[slot].iter().any(|&v| {
                        ctx[slot] = v;
                        match var.mechanism.evaluate(&ctx) {
                            Ok(out) => match first {
                                None => {
                                    first = Some(out);
                                    false
                                }
                                Some(f) => f != out,
                            },
                            Err(_) => false,
                        }
                    })
                });
                if !live {
                    warnings.push(format!(
                        "declared parent `{}` of `{}` never affected its mechanism",
                        self.vars[p].name, var.name
                    ));
                }
            }
        }
        warnings
    }
}

fn topological_order(vars: &[Variable]) -> Result<Vec<usize>> {
    let n = vars.len();
    let mut indeg: Vec<usize> = vars.iter().map(|v| v.parents.len()).collect();
    let mut children = vec![Vec::new(); n];
    for (i, v) in vars.iter().enumerate() {
        for &p in &v.parents {
            children[p].push(i);
        }
    }
    // Ready set kept sorted so ties resolve by declaration order.
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &children[i] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n).filter(|&i| indeg[i] > 0).map(|i| vars[i].name.clone()).collect();
        return Err(Error::Cycle(stuck));
    }
    Ok(order)
}

pub(crate) fn cartesian(domains: &[&[Value]]) -> Vec<Vec<Value>> {
    let mut out = vec![Vec::with_capacity(domains.len())];
    for dom in domains {
        let mut next = Vec::with_capacity(out.len() * dom.len());
        for prefix in &out {
            for v in dom.iter() {
                let mut p = prefix.clone();
                p.push(*v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::value::int_domain;

    fn adder() -> CausalModel {
        ModelBuilder::new("adder")
            .input("X", int_domain(1, 3))
            .input("Y", int_domain(1, 3))
            .input("Z", int_domain(1, 3))
            .intermediate("P", int_domain(2, 6), &["X", "Y"], Mechanism::named("sum").unwrap())
            .output("O", int_domain(3, 9), &["P", "Z"], Mechanism::named("sum").unwrap())
            .build()
            .unwrap()
    }

    #[test]
    fn solve_follows_mechanisms() {
        let m = adder();
        let s = m.solve(&[Value::Int(1), Value::Int(2), Value::Int(3)]).unwrap();
        assert_eq!(s.get("P"), Some(Value::Int(3)));
        assert_eq!(s.get("O"), Some(Value::Int(6)));
        assert_eq!(m.causal_order(), vec!["X", "Y", "Z", "P", "O"]);
    }

    #[test]
    fn input_errors() {
        let m = adder();
        assert!(matches!(
            m.solve(&[Value::Int(1), Value::Int(2)]),
            Err(Error::InputArity { .. })
        ));
        assert!(matches!(
            m.solve(&[Value::Int(1), Value::Int(9), Value::Int(1)]),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(matches!(
            m.solve(&[Value::Null, Value::Int(1), Value::Int(1)]),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn out_of_domain_mechanism_output_is_an_error() {
        let m = ModelBuilder::new("narrow")
            .input("X", int_domain(1, 3))
            .output("O", int_domain(1, 2), &["X"], Mechanism::named("project").unwrap())
            .build()
            .unwrap();
        assert!(m.solve(&[Value::Int(2)]).is_ok());
        assert!(matches!(m.solve(&[Value::Int(3)]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn cycles_and_bad_declarations_are_rejected() {
        let sum = || Mechanism::named("sum").unwrap();
        let cyc = ModelBuilder::new("cyc")
            .input("X", int_domain(1, 2))
            .intermediate("A", int_domain(0, 9), &["X", "B"], sum())
            .intermediate("B", int_domain(0, 9), &["A"], sum())
            .output("O", int_domain(0, 9), &["B"], sum())
            .build();
        assert!(matches!(cyc, Err(Error::Cycle(_))));

        let dup = ModelBuilder::new("dup")
            .input("X", int_domain(1, 2))
            .input("X", int_domain(1, 2))
            .build();
        assert!(matches!(dup, Err(Error::DuplicateVariable(_))));

        let unknown = ModelBuilder::new("u")
            .input("X", int_domain(1, 2))
            .output("O", int_domain(1, 2), &["Q"], sum())
            .build();
        assert!(matches!(unknown, Err(Error::UnknownVariable(_))));

        let child_of_output = ModelBuilder::new("c")
            .input("X", int_domain(1, 2))
            .output("O", int_domain(1, 2), &["X"], sum())
            .output("O2", int_domain(1, 2), &["O"], sum())
            .build();
        assert!(matches!(child_of_output, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn inert_parent_is_a_warning_not_an_error() {
        let m = ModelBuilder::new("inert")
            .input("X", int_domain(1, 3))
            .input("Y", int_domain(1, 3))
            .output(
                "O",
                int_domain(1, 3),
                &["X", "Y"],
                Mechanism::from_fn("first", |a| Ok(a[0])),
            )
            .build()
            .unwrap();
        assert_eq!(m.warnings().len(), 1);
        assert!(m.warnings()[0].contains("`Y`"));
        assert!(adder().warnings().is_empty());
    }

    #[test]
    fn null_reads_raise_unless_tolerated() {
        let m = ModelBuilder::new("n")
            .input("X", int_domain(1, 2))
            .intermediate(
                "P",
                int_domain(1, 2),
                &["X"],
                Mechanism::from_fn("nul", |_| Ok(Value::Null)),
            )
            .output("O", int_domain(1, 2), &["P"], Mechanism::named("project").unwrap())
            .build()
            .unwrap();
        assert!(matches!(m.solve(&[Value::Int(1)]), Err(Error::NullRead { .. })));
    }

    #[test]
    fn explicit_orders_must_be_topological() {
        let m = adder();
        let inp = [Value::Int(2), Value::Int(2), Value::Int(2)];
        let alt = m.solve_with_order(&inp, &["Z", "Y", "X", "P", "O"]).unwrap();
        assert_eq!(alt, m.solve(&inp).unwrap());
        assert!(m.solve_with_order(&inp, &["X", "P", "Y", "Z", "O"]).is_err());
        assert!(m.solve_with_order(&inp, &["X", "Y", "Z", "P"]).is_err());
    }

    #[test]
    fn input_space_is_lexicographic() {
        let m = adder();
        let space = m.input_space();
        assert_eq!(space.len(), 27);
        assert_eq!(space[0], vec![Value::Int(1); 3]);
        assert_eq!(space[1], vec![Value::Int(1), Value::Int(1), Value::Int(2)]);
        assert_eq!(space[26], vec![Value::Int(3); 3]);
    }
}
