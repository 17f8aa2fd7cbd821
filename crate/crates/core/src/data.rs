//! Subject records, covariate schema and CSV ingestion.
//!
//! Categorical covariates use reference-cell coding: a covariate with `m`
//! levels contributes `m - 1` design columns named `name=level`, and the
//! reference level encodes to all zeros. Numeric covariates map to a single
//! column carrying the covariate name.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed outcome: censored, event of interest, or competing event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum EventCode {
    Censored,
    Cause1,
    Cause2,
}

impl EventCode {
    pub fn code(self) -> u8 {
        match self {
            EventCode::Censored => 0,
            EventCode::Cause1 => 1,
            EventCode::Cause2 => 2,
        }
    }

    pub fn is_event(self) -> bool {
        self != EventCode::Censored
    }
}

impl From<EventCode> for u8 {
    fn from(e: EventCode) -> u8 {
        e.code()
    }
}

impl TryFrom<u8> for EventCode {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(EventCode::Censored),
            1 => Ok(EventCode::Cause1),
            2 => Ok(EventCode::Cause2),
            other => Err(format!("status must be 0, 1 or 2, got {other}")),
        }
    }
}

/// A competing cause, used where only the two event codes make sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cause {
    One,
    Two,
}

impl Cause {
    pub fn event_code(self) -> EventCode {
        match self {
            Cause::One => EventCode::Cause1,
            Cause::Two => EventCode::Cause2,
        }
    }
}

/// One subject: observed time `min(T, C)` in years, event code, encoded covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub time: f64,
    pub status: EventCode,
    pub covariates: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(id: impl Into<String>, time: f64, status: EventCode, covariates: Vec<f64>) -> Result<Self> {
        if !time.is_finite() || time < 0.0 {
            return Err(Error::InvalidInput(format!(
                "observed time must be finite and non-negative, got {time}"
            )));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariates must be finite".into()));
        }
        Ok(Self { id: id.into(), time, status, covariates })
    }
}

/// Kind of a covariate entry in the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CovariateKind {
    Numeric,
    Categorical { levels: Vec<String>, reference: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateEntry {
    pub name: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
}

impl CovariateEntry {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: CovariateKind::Numeric }
    }

    pub fn categorical(name: impl Into<String>, levels: &[&str], reference: &str) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
                reference: reference.to_string(),
            },
        }
    }

    /// Non-reference levels in declared order; empty for numeric entries.
    fn coded_levels(&self) -> Vec<&str> {
        match &self.kind {
            CovariateKind::Numeric => Vec::new(),
            CovariateKind::Categorical { levels, reference } => {
                levels.iter().filter(|l| *l != reference).map(String::as_str).collect()
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaDocument {
    entries: Vec<CovariateEntry>,
}

/// Ordered covariate definitions plus the design-column names they expand to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDocument", into = "SchemaDocument")]
pub struct CovariateSchema {
    entries: Vec<CovariateEntry>,
    design_names: Vec<String>,
}

impl TryFrom<SchemaDocument> for CovariateSchema {
    type Error = Error;

    fn try_from(doc: SchemaDocument) -> Result<Self> {
        CovariateSchema::new(doc.entries)
    }
}

impl From<CovariateSchema> for SchemaDocument {
    fn from(s: CovariateSchema) -> Self {
        SchemaDocument { entries: s.entries }
    }
}

impl CovariateSchema {
    pub fn new(entries: Vec<CovariateEntry>) -> Result<Self> {
        let mut design_names = Vec::new();
        let mut seen_entries = HashSet::new();
        for e in &entries {
            if e.name.is_empty() || e.name == "time" || e.name == "status" || e.name == "id" {
                return Err(Error::Schema(format!("invalid covariate name {:?}", e.name)));
            }
            if !seen_entries.insert(e.name.clone()) {
                return Err(Error::Schema(format!("duplicate covariate {:?}", e.name)));
            }
            match &e.kind {
                CovariateKind::Numeric => design_names.push(e.name.clone()),
                CovariateKind::Categorical { levels, reference } => {
                    if levels.len() < 2 {
                        return Err(Error::Schema(format!(
                            "categorical covariate {:?} needs at least two levels",
                            e.name
                        )));
                    }
                    let distinct: HashSet<_> = levels.iter().collect();
                    if distinct.len() != levels.len() {
                        return Err(Error::Schema(format!("covariate {:?} has duplicate levels", e.name)));
                    }
                    if !levels.contains(reference) {
                        return Err(Error::Schema(format!(
                            "reference level {:?} of {:?} is not among its levels",
                            reference, e.name
                        )));
                    }
                    for level in e.coded_levels() {
                        design_names.push(format!("{}={}", e.name, level));
                    }
                }
            }
        }
        let unique: HashSet<_> = design_names.iter().collect();
        if unique.len() != design_names.len() {
            return Err(Error::Schema("design column names are not unique".into()));
        }
        Ok(Self { entries, design_names })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn entries(&self) -> &[CovariateEntry] {
        &self.entries
    }

    pub fn design_names(&self) -> &[String] {
        &self.design_names
    }

    /// Number of design columns `p` (excluding the intercept).
    pub fn width(&self) -> usize {
        self.design_names.len()
    }

    /// Encode raw values given in entry order.
    pub fn encode(&self, values: &[CovariateValue]) -> std::result::Result<Vec<f64>, FieldError> {
        if values.len() != self.entries.len() {
            return Err(FieldError {
                field: String::new(),
                message: format!("expected {} covariate values, got {}", self.entries.len(), values.len()),
            });
        }
        let mut out = Vec::with_capacity(self.width());
        for (entry, value) in self.entries.iter().zip(values) {
            encode_entry(entry, value, &mut out)?;
        }
        Ok(out)
    }

    /// Encode a named profile. Every schema entry must be present and no extra
    /// keys are accepted.
    pub fn encode_profile(&self, profile: &PatientProfile) -> std::result::Result<Vec<f64>, FieldError> {
        if let Some(extra) = profile.keys().find(|k| !self.entries.iter().any(|e| &e.name == *k)) {
            return Err(FieldError { field: extra.clone(), message: "unknown covariate".into() });
        }
        let mut out = Vec::with_capacity(self.width());
        for entry in &self.entries {
            let value = profile.get(&entry.name).ok_or_else(|| FieldError {
                field: entry.name.clone(),
                message: "missing value".into(),
            })?;
            encode_entry(entry, value, &mut out)?;
        }
        Ok(out)
    }

    /// Inverse of [`encode`](Self::encode) on schema-valid design vectors.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<CovariateValue>> {
        if z.len() != self.width() {
            return Err(Error::InvalidInput("design vector length does not match schema".into()));
        }
        let mut pos = 0;
        let mut out = Vec::with_capacity(self.entries.len());
        for entry in &self.entries {
            match &entry.kind {
                CovariateKind::Numeric => {
                    out.push(CovariateValue::Number(z[pos]));
                    pos += 1;
                }
                CovariateKind::Categorical { reference, .. } => {
                    let coded = entry.coded_levels();
                    let slice = &z[pos..pos + coded.len()];
                    let hot: Vec<usize> = (0..slice.len()).filter(|&i| slice[i] == 1.0).collect();
                    let level = match hot.as_slice() {
                        [] if slice.iter().all(|&v| v == 0.0) => reference.clone(),
                        [i] if slice.iter().filter(|&&v| v != 0.0).count() == 1 => coded[*i].to_string(),
                        _ => {
                            return Err(Error::InvalidInput(format!(
                                "columns of {:?} are not a valid one-hot code",
                                entry.name
                            )))
                        }
                    };
                    out.push(CovariateValue::Level(level));
                    pos += coded.len();
                }
            }
        }
        Ok(out)
    }
}

/// A raw covariate value before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariateValue {
    Number(f64),
    Level(String),
}

impl std::fmt::Display for CovariateValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CovariateValue::Number(v) => write!(f, "{v}"),
            CovariateValue::Level(s) => f.write_str(s),
        }
    }
}

/// Named covariate values for one patient.
pub type PatientProfile = BTreeMap<String, CovariateValue>;

/// Validation failure attributable to one named field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.field.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

fn encode_entry(entry: &CovariateEntry, value: &CovariateValue, out: &mut Vec<f64>) -> std::result::Result<(), FieldError> {
    let err = |message: String| FieldError { field: entry.name.clone(), message };
    match &entry.kind {
        CovariateKind::Numeric => {
            let v = match value {
                CovariateValue::Number(v) => *v,
                CovariateValue::Level(s) if s.trim().is_empty() => return Err(err("missing value".into())),
                CovariateValue::Level(s) => s
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| err(format!("{s:?} is not a number")))?,
            };
            if !v.is_finite() {
                return Err(err(format!("{v} is not finite")));
            }
            out.push(v);
        }
        CovariateKind::Categorical { levels, reference } => {
            let level = match value {
                CovariateValue::Level(s) => s.trim().to_string(),
                CovariateValue::Number(v) => v.to_string(),
            };
            if level.is_empty() {
                return Err(err("missing value".into()));
            }
            if !levels.contains(&level) {
                return Err(err(format!("unknown level {level:?}")));
            }
            for coded in entry.coded_levels() {
                out.push(if coded == level && &level != reference { 1.0 } else { 0.0 });
            }
        }
    }
    Ok(())
}

/// A cohort of competing-risks records sharing one covariate schema.
#[derive(Debug, Clone)]
pub struct CompetingRisksDataset {
    records: Vec<SubjectRecord>,
    schema: CovariateSchema,
}

impl CompetingRisksDataset {
    /// Requires `n >= 1` and a covariate vector of schema width on every record.
    pub fn new(records: Vec<SubjectRecord>, schema: CovariateSchema) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("dataset has no records".into()));
        }
        let p = schema.width();
        if let Some((i, _)) = records.iter().enumerate().find(|(_, r)| r.covariates.len() != p) {
            return Err(Error::Row {
                row: i + 1,
                message: format!("covariate vector length differs from schema width {p}"),
            });
        }
        Ok(Self { records, schema })
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count_status(&self, status: EventCode) -> usize {
        self.records.iter().filter(|r| r.status == status).count()
    }

    /// Observed times of subjects with the event of interest.
    pub fn cause1_times(&self) -> Vec<f64> {
        self.records.iter().filter(|r| r.status == EventCode::Cause1).map(|r| r.time).collect()
    }

    pub fn max_time(&self) -> f64 {
        self.records.iter().map(|r| r.time).fold(0.0, f64::max)
    }

    /// Write in the CSV layout accepted by [`load_dataset`].
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string(), "time".into(), "status".into()];
        header.extend(self.schema.entries.iter().map(|e| e.name.clone()));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.id.clone(), r.time.to_string(), r.status.code().to_string()];
            row.extend(self.schema.decode(&r.covariates)?.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parse a cohort CSV. Requires `time` and `status` columns plus one column
/// per schema entry; an optional `id` column is carried through, otherwise
/// ids are 1-based row numbers. Row numbers in errors count data rows from 1.
pub fn load_dataset<R: Read>(source: R, schema: &CovariateSchema) -> Result<CompetingRisksDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    };
    let time_col = column("time")?;
    let status_col = column("status")?;
    let id_col = headers.iter().position(|h| h == "id");
    let entry_cols = schema
        .entries()
        .iter()
        .map(|e| column(&e.name))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let row_err = |message: String| Error::Row { row: row_no, message };
        let field = |c: usize| row.get(c).unwrap_or("");

        let time: f64 = field(time_col)
            .parse()
            .map_err(|_| row_err(format!("time {:?} is not a number", field(time_col))))?;
        if !time.is_finite() || time < 0.0 {
            return Err(row_err(format!("time must be finite and non-negative, got {time}")));
        }
        let status = field(status_col)
            .parse::<u8>()
            .map_err(|_| ())
            .and_then(|v| EventCode::try_from(v).map_err(|_| ()))
            .map_err(|_| row_err(format!("status must be 0, 1 or 2, got {:?}", field(status_col))))?;
        let raw: Vec<CovariateValue> =
            entry_cols.iter().map(|&c| CovariateValue::Level(field(c).to_string())).collect();
        let covariates = schema.encode(&raw).map_err(|e| row_err(e.to_string()))?;
        let id = id_col.map(|c| field(c).to_string()).unwrap_or_else(|| row_no.to_string());
        records.push(SubjectRecord { id, time, status, covariates });
    }
    let ds = CompetingRisksDataset::new(records, schema.clone())?;
    if ds.count_status(EventCode::Cause1) == 0 {
        return Err(Error::InvalidInput("dataset contains no event of interest (status 1)".into()));
    }
    Ok(ds)
}

/// Parse one or more patient profiles from JSON. Accepts a single profile
/// object, an array of profiles (named `1`, `2`, ...), or an object mapping
/// names to profiles.
pub fn load_profiles(text: &str) -> Result<Vec<(String, PatientProfile)>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let profiles = match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| Ok(((i + 1).to_string(), serde_json::from_value(v)?)))
            .collect::<Result<Vec<_>>>()?,
        serde_json::Value::Object(map) if !map.is_empty() && map.values().all(|v| v.is_object()) => map
            .into_iter()
            .map(|(k, v)| Ok((k, serde_json::from_value(v)?)))
            .collect::<Result<Vec<_>>>()?,
        other => vec![("1".to_string(), serde_json::from_value(other)?)],
    };
    if profiles.is_empty() {
        return Err(Error::InvalidInput("no profiles found".into()));
    }
    Ok(profiles)
}
