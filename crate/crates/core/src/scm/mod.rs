//! Deterministic structural causal models over discrete values.

mod abstraction;
mod file;
mod intervention;
mod mechanism;
mod model;
mod value;

pub use abstraction::{check_constructive_abstraction, AbstractionReport, Alignment, Counterexample, Projection};
pub use file::{load_model, save_model, DomainSpec, ModelFile, RoleSpec, VariableSpec, MODEL_FORMAT};
pub use intervention::{apply_intervention, interchange_intervention, HardIntervention};
pub use mechanism::{apply_op, Mechanism, MechanismFn, REGISTERED};
pub use model::{CausalModel, ModelBuilder, Role, TotalSetting, Variable};
pub use value::{bool_domain, conn_domain, int_domain, op_domain, Connective, UnaryOp, Value};

pub(crate) use model::cartesian;
