//! Columnar datasets with per-column kinds and exposure/outcome/context roles.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Binary,
    Categorical,
    Continuous,
}

impl ColumnKind {
    /// At most two distinct values is binary; integer-valued with at most ten
    /// levels is categorical; anything else is continuous.
    pub fn infer(values: &[f64]) -> ColumnKind {
        let mut levels = BTreeSet::new();
        let mut integral = true;
        for &v in values {
            integral &= v.fract() == 0.0;
            if levels.len() <= 10 {
                levels.insert(v.to_bits());
            }
        }
        if levels.len() <= 2 {
            ColumnKind::Binary
        } else if integral && levels.len() <= 10 {
            ColumnKind::Categorical
        } else {
            ColumnKind::Continuous
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<f64>,
}

/// Designated exposure (binary, 1 = advantaged), outcome and context columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roles {
    pub exposure: String,
    pub outcome: String,
    pub contexts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    index: HashMap<String, usize>,
    n: usize,
    roles: Option<Roles>,
}

impl Dataset {
    /// Builds a dataset from named columns, inferring kinds.
    pub fn new(columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.1.len());
        let mut out = Dataset {
            columns: Vec::with_capacity(columns.len()),
            index: HashMap::new(),
            n,
            roles: None,
        };
        for (name, values) in columns {
            if values.len() != n {
                return Err(Error::Input(format!(
                    "column `{name}` has {} rows, expected {n}",
                    values.len()
                )));
            }
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Input(format!(
                    "column `{name}` row {}: non-finite value",
                    i + 1
                )));
            }
            if out.index.insert(name.clone(), out.columns.len()).is_some() {
                return Err(Error::Input(format!("duplicate column `{name}`")));
            }
            let kind = ColumnKind::infer(&values);
            out.columns.push(Column { name, kind, values });
        }
        Ok(out)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| {
            Error::Input(format!("cannot open `{}`: {e}", path.display()))
        })?;
        Self::from_csv_reader(file)
    }

    /// Reads a CSV with a header row. Every cell must parse as a number.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers.is_empty() || headers.iter().any(String::is_empty) {
            return Err(Error::Input("CSV header has an empty column name".into()));
        }
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            // Header is line 1, so data row k sits on line k + 1.
            let line = row + 2;
            if rec.len() != headers.len() {
                return Err(Error::Input(format!(
                    "line {line}: expected {} fields, found {}",
                    headers.len(),
                    rec.len()
                )));
            }
            for (j, cell) in rec.iter().enumerate() {
                if cell.is_empty() {
                    return Err(Error::Input(format!(
                        "line {line}, column `{}`: missing value",
                        headers[j]
                    )));
                }
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Input(format!(
                        "line {line}, column `{}`: cannot parse `{cell}` as a number",
                        headers[j]
                    ))
                })?;
                cols[j].push(v);
            }
        }
        Self::new(headers.into_iter().zip(cols).collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.names())?;
        for i in 0..self.n {
            w.write_record(self.columns.iter().map(|c| format_value(c.values[i])))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Assigns roles, checking that the exposure is 0/1 with both values
    /// present and that contexts exclude the outcome.
    pub fn with_roles<S: AsRef<str>>(mut self, exposure: &str, outcome: &str, contexts: &[S]) -> Result<Self> {
        let r = self.column(exposure)?;
        if self.n == 0 {
            return Err(Error::SampleSize("dataset has no rows".into()));
        }
        if r.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Input(format!("exposure `{exposure}` must be coded 0/1")));
        }
        if !r.contains(&0.0) || !r.contains(&1.0) {
            return Err(Error::Input(format!(
                "exposure `{exposure}` must contain both groups"
            )));
        }
        self.column(outcome)?;
        if exposure == outcome {
            return Err(Error::Input("exposure and outcome must differ".into()));
        }
        let mut ctx = Vec::new();
        for c in contexts {
            let c = c.as_ref();
            self.column(c)?;
            if c == outcome {
                return Err(Error::Input(format!("context `{c}` is the outcome")));
            }
            if !ctx.iter().any(|x: &String| x == c) {
                ctx.push(c.to_string());
            }
        }
        let i = self.index[exposure];
        self.columns[i].kind = ColumnKind::Binary;
        self.roles = Some(Roles {
            exposure: exposure.to_string(),
            outcome: outcome.to_string(),
            contexts: ctx,
        });
        Ok(self)
    }

    pub fn roles(&self) -> Result<&Roles> {
        self.roles
            .as_ref()
            .ok_or_else(|| Error::Input("dataset roles (exposure/outcome) are not set".into()))
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.index
            .get(name)
            .map(|&i| self.columns[i].values.as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn kind(&self, name: &str) -> Result<ColumnKind> {
        self.index
            .get(name)
            .map(|&i| self.columns[i].kind)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn set_kind(&mut self, name: &str, kind: ColumnKind) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        self.columns[i].kind = kind;
        Ok(())
    }

    /// Covariates: every column except exposure and outcome, in column order.
    pub fn covariates(&self) -> Result<Vec<String>> {
        let roles = self.roles()?;
        Ok(self
            .columns
            .iter()
            .filter(|c| c.name != roles.exposure && c.name != roles.outcome)
            .map(|c| c.name.clone())
            .collect())
    }

    /// Row indices of the exposure groups `(R = 0, R = 1)`.
    pub fn groups(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        let r = self.column(&self.roles()?.exposure)?;
        let mut g0 = Vec::new();
        let mut g1 = Vec::new();
        for (i, &v) in r.iter().enumerate() {
            if v == 1.0 {
                g1.push(i);
            } else {
                g0.push(i);
            }
        }
        Ok((g0, g1))
    }

    /// The rows at `rows` (repeats allowed), keeping kinds and roles.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    kind: c.kind,
                    values: rows.iter().map(|&i| c.values[i]).collect(),
                })
                .collect(),
            index: self.index.clone(),
            n: rows.len(),
            roles: self.roles.clone(),
        }
    }

    /// Numeric design columns for `name`: categorical columns with more than
    /// two levels become one-hot indicators (first level dropped).
    pub fn design_columns(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        let values = self.column(name)?;
        if self.kind(name)? != ColumnKind::Categorical {
            return Ok(vec![values.to_vec()]);
        }
        let levels: BTreeSet<i64> = values.iter().map(|&v| v as i64).collect();
        Ok(levels
            .iter()
            .skip(1)
            .map(|&l| {
                values
                    .iter()
                    .map(|&v| if v as i64 == l { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect())
    }
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
