use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Link;
use crate::data::CovariateSchema;
use crate::error::{Error, Result};
use crate::stacking::{column_name, power_label, HorizonGrid, Term, TimeBasis};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    /// Final `max |Phi| / n`.
    pub equation_norm: f64,
}

/// Estimated coefficients with their sandwich covariance and everything
/// needed to score new profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDocument", into = "ModelDocument")]
pub struct FittedModel {
    pub schema: CovariateSchema,
    pub basis: TimeBasis,
    pub grid: HorizonGrid,
    pub link: Link,
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub n_subjects: usize,
    pub convergence: Convergence,
}

/// On-disk JSON layout; covariance is row-major.
#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    schema: CovariateSchema,
    basis: TimeBasis,
    grid: HorizonGrid,
    link: Link,
    coefficients: Vec<f64>,
    covariance: Vec<f64>,
    n_subjects: usize,
    convergence: Convergence,
}

impl TryFrom<ModelDocument> for FittedModel {
    type Error = Error;

    fn try_from(d: ModelDocument) -> Result<Self> {
        if d.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                d.format_version
            )));
        }
        if d.basis.columns() != d.schema.width() + 1 {
            return Err(Error::InvalidInput("basis does not match the schema width".into()));
        }
        let q = d.basis.dim();
        if d.coefficients.len() != q || d.covariance.len() != q * q {
            return Err(Error::InvalidInput(format!(
                "model has {} coefficients and {} covariance entries; basis needs {q} and {}",
                d.coefficients.len(),
                d.covariance.len(),
                q * q
            )));
        }
        Ok(FittedModel {
            schema: d.schema,
            basis: d.basis,
            grid: d.grid,
            link: d.link,
            coefficients: d.coefficients,
            covariance: DMatrix::from_row_slice(q, q, &d.covariance),
            n_subjects: d.n_subjects,
            convergence: d.convergence,
        })
    }
}

impl From<FittedModel> for ModelDocument {
    fn from(m: FittedModel) -> Self {
        let q = m.coefficients.len();
        let covariance = (0..q).flat_map(|i| (0..q).map(move |j| (i, j))).map(|(i, j)| m.covariance[(i, j)]).collect();
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            schema: m.schema,
            basis: m.basis,
            grid: m.grid,
            link: m.link,
            coefficients: m.coefficients,
            covariance,
            n_subjects: m.n_subjects,
            convergence: m.convergence,
        }
    }
}

impl FittedModel {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn terms(&self) -> Vec<Term> {
        self.basis.active_terms()
    }

    /// `column:power` labels in coefficient order, e.g. `er=positive:l^2`.
    pub fn term_labels(&self) -> Vec<String> {
        self.terms()
            .iter()
            .map(|t| format!("{}:{}", column_name(&self.schema, t.column), power_label(t.power)))
            .collect()
    }

    /// Design column index (0 = intercept) of a covariate name.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        if name == "(Intercept)" || name == "intercept" {
            return Some(0);
        }
        self.schema.design_names().iter().position(|n| n == name).map(|i| i + 1)
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len()).map(|i| self.covariance[(i, i)].max(0.0).sqrt()).collect()
    }
}
