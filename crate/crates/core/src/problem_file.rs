//! JSON problem files.
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "objectives": [
//!     {"kind": "quadratic", "H": [[1, 1], [1, 2]], "z": [-1, 0]},
//!     {"kind": "builtin", "name": "softplus_quadratic",
//!      "params": {"H": [[1, 1], [1, 2]], "z": [1, 0], "weight": 0.5, "shift": [0, 0]}}
//!   ],
//!   "preference": {"kind": "quadratic", "H": [[1, 0], [0, 1]], "z": [0, 1]},
//!   "constants": {"L0": 1.0}
//! }
//! ```
//!
//! `constants` is optional. `mu`, `L` and `L_H` must be given together and
//! override the values the objectives declare; `L0` overrides the
//! preference's largest curvature.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::{Quadratic, SharedFunction, Smoothness, SoftplusQuadratic};
use crate::linalg::{dmat, dvec};
use crate::problem::{ObjectiveSet, ProblemInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub dimension: usize,
    pub objectives: Vec<FunctionSpec>,
    pub preference: FunctionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Quadratic {
        #[serde(rename = "H")]
        h: Vec<Vec<f64>>,
        z: Vec<f64>,
    },
    Builtin { name: String, params: serde_json::Value },
}

/// Parameters of the `softplus_quadratic` built-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftplusParams {
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub weight: f64,
    pub shift: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(rename = "L_H", default, skip_serializing_if = "Option::is_none")]
    pub l_hess: Option<f64>,
    #[serde(rename = "L0", default, skip_serializing_if = "Option::is_none")]
    pub l0: Option<f64>,
}

pub const SOFTPLUS_QUADRATIC: &str = "softplus_quadratic";

fn field<T>(what: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidArgument(m) | Error::Config(m) => Error::Config(format!("{what}: {m}")),
        other => other,
    })
}

impl FunctionSpec {
    pub fn quadratic(h: Vec<Vec<f64>>, z: Vec<f64>) -> Self {
        Self::Quadratic { h, z }
    }

    pub fn softplus(params: SoftplusParams) -> Self {
        Self::Builtin {
            name: SOFTPLUS_QUADRATIC.into(),
            params: serde_json::to_value(params).expect("plain numbers serialize"),
        }
    }

    /// `what` names the field in error messages, e.g. `objectives[1]`.
    pub fn build(&self, dimension: usize, what: &str) -> Result<SharedFunction> {
        let quad = |h: &[Vec<f64>], z: &[f64], what: &str| -> Result<Quadratic> {
            if z.len() != dimension {
                return Err(Error::Config(format!(
                    "{what}.z has length {} but dimension is {dimension}",
                    z.len()
                )));
            }
            let h = field(&format!("{what}.H"), dmat(h))?;
            field(&format!("{what}.H"), Quadratic::from_hessian(h, dvec(z)))
        };
        match self {
            Self::Quadratic { h, z } => Ok(quad(h, z, what)?.shared()),
            Self::Builtin { name, params } if name == SOFTPLUS_QUADRATIC => {
                let p: SoftplusParams = serde_json::from_value(params.clone())
                    .map_err(|e| Error::Config(format!("{what}.params: {e}")))?;
                let what = format!("{what}.params");
                let q = quad(&p.h, &p.z, &what)?;
                if p.shift.len() != dimension {
                    return Err(Error::Config(format!("{what}.shift has the wrong length")));
                }
                let f = field(&what, SoftplusQuadratic::new(q, p.weight, dvec(&p.shift)))?;
                Ok(Arc::new(f))
            }
            Self::Builtin { name, .. } => Err(Error::Config(format!(
                "{what}.name: unknown builtin {name:?} (known: {SOFTPLUS_QUADRATIC})"
            ))),
        }
    }
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("problem file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain numbers serialize")
    }

    pub fn build(&self) -> Result<ProblemInstance> {
        if self.dimension == 0 {
            return Err(Error::Config("dimension: must be at least 1".into()));
        }
        if self.objectives.is_empty() {
            return Err(Error::Config("objectives: at least one objective is required".into()));
        }
        let objectives = self
            .objectives
            .iter()
            .enumerate()
            .map(|(i, f)| f.build(self.dimension, &format!("objectives[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let preference = self.preference.build(self.dimension, "preference")?;
        let c = self.constants.unwrap_or_default();
        let declared = match (c.mu, c.l, c.l_hess) {
            (None, None, None) => None,
            (Some(mu), Some(l), Some(l_hess)) => Some(Smoothness { mu, l, l_hess }),
            _ => {
                return Err(Error::Config(
                    "constants: mu, L and L_H must be given together".into(),
                ))
            }
        };
        let set = field("constants", ObjectiveSet::new(objectives, declared))?;
        field("constants", ProblemInstance::new(set, preference, c.l0))
    }
}
