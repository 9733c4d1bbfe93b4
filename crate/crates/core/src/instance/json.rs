use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FirstStage, Scenario, SecondStage, TwoStageInstance};
use crate::error::{Error, Result};
use crate::io::to_json;
use crate::linalg::Matrix;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FirstStageDoc {
    c: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    perturbed_rows: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SecondStageDoc {
    q: Vec<f64>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    p: f64,
    h: Vec<f64>,
    /// `[row, col, value]` for every entry of T whose bit pattern is not +0.
    #[serde(rename = "T_entries")]
    t_entries: Vec<(usize, usize, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    first_stage: FirstStageDoc,
    second_stage: SecondStageDoc,
    scenarios: Vec<ScenarioDoc>,
}

fn matrix(rows: Vec<Vec<f64>>, what: &str, cols_if_empty: usize) -> Result<Matrix> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, cols_if_empty));
    }
    Matrix::from_rows(&rows).ok_or_else(|| Error::Parse {
        location: what.to_string(),
        message: "ragged matrix rows".into(),
    })
}

pub fn instance_to_json(inst: &TwoStageInstance) -> Result<String> {
    let doc = InstanceDoc {
        first_stage: FirstStageDoc {
            c: inst.first_stage.c.clone(),
            a: inst.first_stage.a.to_rows(),
            b: inst.first_stage.b_nominal.clone(),
            perturbed_rows: inst.perturbed_rows.clone(),
        },
        second_stage: SecondStageDoc { q: inst.second_stage.q.clone(), w: inst.second_stage.w.to_rows() },
        scenarios: inst
            .scenarios
            .iter()
            .map(|s| {
                let mut t_entries = Vec::new();
                for r in 0..s.t.rows() {
                    for c in 0..s.t.cols() {
                        let v = s.t.get(r, c);
                        if v.to_bits() != 0 {
                            t_entries.push((r, c, v));
                        }
                    }
                }
                ScenarioDoc { p: s.probability, h: s.h.clone(), t_entries }
            })
            .collect(),
    };
    to_json(&doc)
}

pub fn instance_from_json(text: &str) -> Result<TwoStageInstance> {
    let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("{}:{}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let dx = doc.first_stage.c.len();
    let a = matrix(doc.first_stage.a, "first_stage.A", dx)?;
    let w = matrix(doc.second_stage.w, "second_stage.W", doc.second_stage.q.len())?;
    let m2 = w.rows();
    let mut scenarios = Vec::with_capacity(doc.scenarios.len());
    for (k, s) in doc.scenarios.into_iter().enumerate() {
        let mut t = Matrix::zeros(m2, dx);
        for (r, c, v) in s.t_entries {
            if r >= m2 || c >= dx {
                return Err(Error::Parse {
                    location: format!("scenarios[{k}].T_entries"),
                    message: format!("entry ({r}, {c}) outside {m2}x{dx}"),
                });
            }
            t.set(r, c, v);
        }
        scenarios.push(Scenario { probability: s.p, h: s.h, t });
    }
    let inst = TwoStageInstance {
        first_stage: FirstStage { c: doc.first_stage.c, a, b_nominal: doc.first_stage.b },
        second_stage: SecondStage { q: doc.second_stage.q, w },
        scenarios,
        perturbed_rows: doc.first_stage.perturbed_rows,
    };
    inst.validate()?;
    Ok(inst)
}

pub fn write_instance(inst: &TwoStageInstance, path: &Path) -> Result<()> {
    std::fs::write(path, instance_to_json(inst)?)?;
    Ok(())
}
