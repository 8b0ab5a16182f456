//! Model JSON serialization.
//!
//! One JSON document holds everything needed to reload and predict:
//! `{p, G, t, u, beta, ensemble_beta, col_means, col_scales, y_mean,
//! y_scale, objective, cv}` with `beta` flattened column-major. Floats are
//! written with 17 significant digits so every finite value round-trips
//! bit-exactly through the decimal representation.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::numerics::Standardization;
use crate::psgd::{Constraints, SplitEnsemble};
use crate::tuning::{CvReport, FittedModel, TuningError};

#[derive(Debug, Serialize, Deserialize)]
struct ModelJson {
    p: usize,
    #[serde(rename = "G")]
    groups: usize,
    t: usize,
    u: Vec<usize>,
    /// p x G coefficients, column-major (model 0 first).
    beta: Vec<f64>,
    ensemble_beta: Vec<f64>,
    col_means: Vec<f64>,
    col_scales: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    objective: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    cv: Option<CvReport>,
}

/// Writes every f64 with 17 significant digits; parsing such a decimal
/// recovers the original bits for all finite doubles.
struct SigFig17Formatter;

impl serde_json::ser::Formatter for SigFig17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes a fitted model to its JSON document (single line, trailing
/// newline).
pub fn model_to_json(model: &FittedModel) -> String {
    let ensemble = &model.ensemble;
    let p = ensemble.p();
    let groups = ensemble.groups();
    let mut beta = Vec::with_capacity(p * groups);
    for g in 0..groups {
        beta.extend(ensemble.beta.column(g).iter().copied());
    }
    let doc = ModelJson {
        p,
        groups,
        t: ensemble.constraints.sparsity(),
        u: ensemble.constraints.diversity().to_vec(),
        beta,
        ensemble_beta: model.ensemble_beta.to_vec(),
        col_means: model.standardization.col_means.to_vec(),
        col_scales: model.standardization.col_scales.to_vec(),
        y_mean: model.standardization.y_mean,
        y_scale: model.standardization.y_scale,
        objective: ensemble.objective,
        cv: model.cv.clone(),
    };
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigFig17Formatter);
    doc.serialize(&mut ser).expect("model serialization");
    out.push(b'\n');
    String::from_utf8(out).expect("JSON is UTF-8")
}

/// Parses a model JSON document back into a fitted model.
pub fn model_from_json(text: &str) -> Result<FittedModel, TuningError> {
    let doc: ModelJson = serde_json::from_str(text).map_err(|e| TuningError::Json(e.to_string()))?;
    if doc.beta.len() != doc.p * doc.groups {
        return Err(TuningError::Json(format!(
            "beta has {} entries, expected p*G = {}",
            doc.beta.len(),
            doc.p * doc.groups
        )));
    }
    for (name, v) in [
        ("u", doc.u.len()),
        ("ensemble_beta", doc.ensemble_beta.len()),
        ("col_means", doc.col_means.len()),
        ("col_scales", doc.col_scales.len()),
    ] {
        if v != doc.p {
            return Err(TuningError::Json(format!(
                "{name} has {v} entries, expected p = {}",
                doc.p
            )));
        }
    }
    let constraints = Constraints::with_per_predictor(doc.groups, doc.t, doc.u)
        .map_err(|e| TuningError::Json(e.to_string()))?;
    let mut beta = Array2::zeros((doc.p, doc.groups));
    for g in 0..doc.groups {
        for j in 0..doc.p {
            beta[[j, g]] = doc.beta[g * doc.p + j];
        }
    }
    let supports: Vec<Vec<usize>> = (0..doc.groups)
        .map(|g| {
            (0..doc.p)
                .filter(|&j| beta[[j, g]] != 0.0)
                .collect::<Vec<usize>>()
        })
        .collect();
    let ensemble = SplitEnsemble {
        beta,
        supports,
        constraints,
        objective: doc.objective,
        trace: Vec::new(),
        inner_trace: Vec::new(),
        iteration_cap_hits: 0,
    };
    Ok(FittedModel {
        ensemble,
        ensemble_beta: Array1::from_vec(doc.ensemble_beta),
        standardization: Standardization {
            col_means: Array1::from_vec(doc.col_means),
            col_scales: Array1::from_vec(doc.col_scales),
            y_mean: doc.y_mean,
            y_scale: doc.y_scale,
        },
        cv: doc.cv,
    })
}
