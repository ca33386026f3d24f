//! JSON weight files. Tensors are stored row-major with their dims.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{NetConfig, TinyNet};
use crate::error::{Error, Result};
use crate::task::TaskKind;

pub const NET_FORMAT: &str = "tinynet/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub dims: [usize; 2],
    pub data: Vec<f64>,
}

impl TensorRecord {
    pub fn from_array(name: &str, a: &Array2<f64>) -> Self {
        Self {
            name: name.to_string(),
            dims: [a.nrows(), a.ncols()],
            data: a.iter().copied().collect(),
        }
    }

    pub fn to_array(&self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.dims[0], self.dims[1]), self.data.clone())
            .map_err(|e| Error::Format(format!("tensor `{}` with dims {:?}: {e}", self.name, self.dims)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetFile {
    pub format: String,
    pub task: TaskKind,
    pub config: NetConfig,
    pub tensors: Vec<TensorRecord>,
}

impl NetFile {
    pub fn from_net(net: &TinyNet) -> Self {
        Self {
            format: NET_FORMAT.to_string(),
            task: net.task,
            config: net.config.clone(),
            tensors: net
                .param_names()
                .iter()
                .zip(net.params())
                .map(|(n, p)| TensorRecord::from_array(n, p))
                .collect(),
        }
    }

    pub fn build(&self) -> Result<TinyNet> {
        if self.format != NET_FORMAT {
            return Err(Error::Format(format!(
                "unsupported weight format `{}` (expected `{NET_FORMAT}`)",
                self.format
            )));
        }
        self.config.validate()?;
        // Shapes are checked against a freshly initialized net of the same config.
        let mut net = TinyNet::init(self.task, self.config.clone(), 0)?;
        let names = net.param_names();
        if names.len() != self.tensors.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                names.len(),
                self.tensors.len()
            )));
        }
        for ((slot, name), rec) in net.params_mut().into_iter().zip(&names).zip(&self.tensors) {
            if rec.name != *name || rec.dims != [slot.nrows(), slot.ncols()] {
                return Err(Error::Format(format!(
                    "tensor `{}` {:?} does not match expected `{name}` {:?}",
                    rec.name,
                    rec.dims,
                    [slot.nrows(), slot.ncols()]
                )));
            }
            *slot = rec.to_array()?;
        }
        Ok(net)
    }
}

pub fn save_net(net: &TinyNet, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&NetFile::from_net(net))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_net(path: &Path) -> Result<TinyNet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: NetFile = serde_json::from_str(&text)?;
    file.build()
}
