//! JSON instance files. Complex scalars are `[re, im]` pairs; `H` is a list of
//! channel columns and constraint 0 must be the sum-power constraint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec};
use crate::model::{ConstraintKind, Instance, LinearConstraint};

/// The four-antenna, three-user example with two forbidden interference directions.
pub const TABLE1_JSON: &str = include_str!("../data/table1.json");

pub fn table1() -> Instance {
    parse_instance(TABLE1_JSON).expect("bundled instance parses")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(rename = "H")]
    pub h: Vec<Vec<[f64; 2]>>,
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    pub constraints: Vec<ConstraintFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintFile {
    pub kind: String,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antennas: Option<Vec<usize>>,
}

fn to_cvec(v: &[[f64; 2]]) -> CVec {
    CVec::from_iterator(v.len(), v.iter().map(|p| c(p[0], p[1])))
}

fn pairs(v: impl Iterator<Item = crate::linalg::C64>) -> Vec<[f64; 2]> {
    v.map(|z| [z.re, z.im]).collect()
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.to_instance()
}

impl InstanceFile {
    pub fn to_instance(&self) -> Result<Instance> {
        let field = |name: String, e: Error| Error::Parse(format!("{name}: {e}"));
        if self.h.is_empty() {
            return Err(Error::Parse("H: no channel columns".into()));
        }
        let m = self.h[0].len();
        if let Some(k) = self.h.iter().position(|col| col.len() != m) {
            return Err(Error::Parse(format!("H[{k}]: expected {m} entries, found {}", self.h[k].len())));
        }
        let cols: Vec<CVec> = self.h.iter().map(|col| to_cvec(col)).collect();
        let h = CMat::from_columns(&cols);
        let mut constraints = Vec::with_capacity(self.constraints.len());
        for (i, cf) in self.constraints.iter().enumerate() {
            let cst = cf.to_constraint(m).map_err(|e| field(format!("constraints[{i}]"), e))?;
            constraints.push(cst);
        }
        if self.w.len() != self.h.len() {
            return Err(Error::Parse(format!("W: expected {} weights, found {}", self.h.len(), self.w.len())));
        }
        Instance::new(h, self.w.clone(), constraints).map_err(|e| field("instance".into(), e))
    }

    pub fn from_instance(instance: &Instance) -> Self {
        let h = instance.channels().column_iter().map(|col| pairs(col.iter().cloned())).collect();
        let constraints = instance
            .constraints()
            .iter()
            .map(|cst| {
                let mut cf = ConstraintFile {
                    kind: kind_name(cst.kind()).into(),
                    gamma: cst.gamma(),
                    phi: None,
                    c: None,
                    antennas: None,
                };
                match cst.kind() {
                    ConstraintKind::SumPower => {}
                    ConstraintKind::InterferenceDirection => {
                        cf.c = cst.direction().map(|d| pairs(d.iter().cloned()));
                    }
                    _ => {
                        cf.phi = Some(cst.phi().row_iter().map(|r| pairs(r.iter().cloned())).collect());
                    }
                }
                cf
            })
            .collect();
        Self { h, w: instance.weights().to_vec(), constraints }
    }
}

pub fn kind_name(kind: ConstraintKind) -> &'static str {
    match kind {
        ConstraintKind::SumPower => "sum-power",
        ConstraintKind::PerAntenna => "per-antenna",
        ConstraintKind::InterferenceDirection => "interference-direction",
        ConstraintKind::General => "general",
    }
}

impl ConstraintFile {
    fn matrix(&self, m: usize) -> Result<CMat> {
        let rows = self.phi.as_ref().ok_or_else(|| Error::Parse("phi: missing".into()))?;
        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
            return Err(Error::Parse(format!("phi: expected a {m}x{m} matrix")));
        }
        Ok(CMat::from_fn(m, m, |i, j| c(rows[i][j][0], rows[i][j][1])))
    }

    fn to_constraint(&self, m: usize) -> Result<LinearConstraint> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Parse(format!("gamma: must be positive, got {}", self.gamma)));
        }
        match self.kind.as_str() {
            "sum-power" => LinearConstraint::sum_power(m, self.gamma),
            "per-antenna" => match (&self.antennas, &self.phi) {
                (Some(a), _) => LinearConstraint::per_antenna(m, a, self.gamma),
                (None, Some(_)) => {
                    let phi = self.matrix(m)?;
                    let idx: Vec<usize> = (0..m).filter(|&i| phi[(i, i)].re > 0.5).collect();
                    LinearConstraint::per_antenna(m, &idx, self.gamma)
                }
                _ => Err(Error::Parse("antennas: missing".into())),
            },
            "interference-direction" | "interference" => {
                let d = self.c.as_ref().ok_or_else(|| Error::Parse("c: missing".into()))?;
                if d.len() != m {
                    return Err(Error::Parse(format!("c: expected {m} entries, found {}", d.len())));
                }
                LinearConstraint::interference(to_cvec(d), self.gamma)
            }
            "general" => LinearConstraint::general(self.matrix(m)?, self.gamma),
            other => Err(Error::Parse(format!("kind: unknown constraint kind `{other}`"))),
        }
    }
}

pub fn instance_to_json(instance: &Instance) -> String {
    serde_json::to_string_pretty(&InstanceFile::from_instance(instance)).expect("serializable")
}
