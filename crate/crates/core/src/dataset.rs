//! Observational data: ingestion, validation, centering, interaction expansion.

use std::collections::{BTreeSet, HashSet};
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Separator used in interaction column names inside reports.
pub const INTERACTION_SEP: &str = "×";
/// Separator used when an interaction name is written as a CSV header.
pub const INTERACTION_SEP_CSV: &str = "_x_";
/// Upper bound on the number of columns an interaction expansion may produce.
pub const MAX_EXPANDED_COLUMNS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub t: DVector<f64>,
    pub y: DVector<f64>,
    pub covariate_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, checking shapes, finiteness and name uniqueness.
    pub fn new(x: DMatrix<f64>, t: DVector<f64>, y: DVector<f64>, covariate_names: Vec<String>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 observations, got {n}")));
        }
        if x.ncols() < 1 {
            return Err(Error::invalid("need at least one covariate"));
        }
        if t.len() != n || y.len() != n {
            return Err(Error::invalid(format!(
                "length mismatch: x has {n} rows, t has {}, y has {}",
                t.len(),
                y.len()
            )));
        }
        if covariate_names.len() != x.ncols() {
            return Err(Error::invalid(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                x.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for name in &covariate_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate covariate name '{name}'")));
            }
        }
        if x.iter().chain(t.iter()).chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("data contain non-finite values"));
        }
        Ok(Dataset {
            x,
            t,
            y,
            covariate_names,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Writes the dataset as CSV with columns `y,t,<covariates>`; interaction
    /// names use the CSV-safe separator.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string(), "t".to_string()];
        header.extend(self.covariate_names.iter().map(|n| csv_column_name(n)));
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![format!("{}", self.y[i]), format!("{}", self.t[i])];
            rec.extend((0..self.p()).map(|j| format!("{}", self.x[(i, j)])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn csv_column_name(name: &str) -> String {
    name.replace(INTERACTION_SEP, INTERACTION_SEP_CSV)
}

/// Which CSV columns play which role.
#[derive(Debug, Clone, Default)]
pub struct Schema {
    pub outcome: String,
    pub treatment: String,
    /// `None` means every column other than outcome and treatment.
    pub covariates: Option<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    /// Rows removed by listwise deletion.
    pub dropped_rows: usize,
    pub file_rows: usize,
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Loaded> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file, schema)
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "NaN" | "nan")
}

enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

/// Reads a header-first, comma-delimited file. Rows with a missing cell in any
/// used column are dropped. Covariates with a non-numeric cell are treated as
/// categorical and one-hot encoded with the first (sorted) level as reference.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let index_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("column '{name}' not found in header")))
    };
    let y_col = index_of(&schema.outcome)?;
    let t_col = index_of(&schema.treatment)?;
    if y_col == t_col {
        return Err(Error::invalid("outcome and treatment must be different columns"));
    }
    let cov_cols: Vec<usize> = match &schema.covariates {
        Some(names) => names.iter().map(|n| index_of(n)).collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&j| j != y_col && j != t_col).collect(),
    };
    if cov_cols.is_empty() {
        return Err(Error::invalid("schema names no covariate columns"));
    }
    if cov_cols.iter().any(|&j| j == y_col || j == t_col) {
        return Err(Error::invalid("a covariate duplicates the outcome or treatment column"));
    }

    let used: Vec<usize> = [y_col, t_col].iter().copied().chain(cov_cols.iter().copied()).collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut file_rows = 0;
    for record in rdr.records() {
        let record = record?;
        file_rows += 1;
        let cells: Vec<String> = used
            .iter()
            .map(|&j| record.get(j).unwrap_or("").trim().to_string())
            .collect();
        if cells.iter().any(|c| is_missing(c)) {
            continue;
        }
        rows.push(cells);
    }
    let dropped_rows = file_rows - rows.len();
    if rows.is_empty() {
        return Err(Error::invalid(format!(
            "no usable rows ({file_rows} rows read, all had missing cells)"
        )));
    }

    let numeric = |k: usize, name: &str| -> Result<Vec<f64>> {
        rows.iter()
            .enumerate()
            .map(|(i, r)| {
                r[k].parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::invalid(format!("non-numeric cell '{}' in column '{name}' (usable row {})", r[k], i + 1))
                    })
            })
            .collect()
    };
    let y = numeric(0, &headers[y_col])?;
    let t = numeric(1, &headers[t_col])?;

    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (k, &j) in cov_cols.iter().enumerate() {
        let name = &headers[j];
        let col = match numeric(k + 2, name) {
            Ok(v) => Column::Numeric(v),
            Err(_) => Column::Categorical(rows.iter().map(|r| r[k + 2].clone()).collect()),
        };
        match col {
            Column::Numeric(v) => {
                names.push(name.clone());
                columns.push(v);
            }
            Column::Categorical(v) => {
                let levels: BTreeSet<&str> = v.iter().map(String::as_str).collect();
                for level in levels.iter().skip(1) {
                    names.push(format!("{name} ({level})"));
                    columns.push(v.iter().map(|c| if c == level { 1.0 } else { 0.0 }).collect());
                }
            }
        }
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    let dataset = Dataset::new(x, DVector::from_vec(t), DVector::from_vec(y), names)?;
    Ok(Loaded {
        dataset,
        dropped_rows,
        file_rows,
    })
}

/// Subtracts column means; returns the centered matrix and the means.
pub fn center_columns(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = m.nrows() as f64;
    let means = DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n));
    let mut centered = m.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    (centered, means)
}

/// Reverses [`center_columns`].
pub fn uncenter_columns(centered: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut m = centered.clone();
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col.add_scalar_mut(means[j]);
    }
    m
}

/// Which covariates are candidate effect modifiers, and whether to add their
/// pairwise products.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignSpec {
    /// Zero-based covariate indices.
    pub effect_modifier_columns: Vec<usize>,
    pub include_interactions: bool,
}

impl DesignSpec {
    pub fn all(p: usize) -> Self {
        DesignSpec {
            effect_modifier_columns: (0..p).collect(),
            include_interactions: false,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.effect_modifier_columns.is_empty() {
            return Err(Error::invalid("no effect-modifier columns selected"));
        }
        if let Some(&j) = self.effect_modifier_columns.iter().find(|&&j| j >= p) {
            return Err(Error::invalid(format!("effect-modifier column {j} out of range (p = {p})")));
        }
        let unique: HashSet<_> = self.effect_modifier_columns.iter().collect();
        if unique.len() != self.effect_modifier_columns.len() {
            return Err(Error::invalid("effect-modifier columns repeated"));
        }
        Ok(())
    }
}

/// Restricts the covariates to the effect modifiers of `spec` and, if
/// requested, appends every pairwise product `a×b` after the main effects.
pub fn expand_interactions(d: &Dataset, spec: &DesignSpec) -> Result<Dataset> {
    spec.validate(d.p())?;
    let cols = &spec.effect_modifier_columns;
    let k = cols.len();
    let total = if spec.include_interactions {
        k.checked_mul(k.saturating_sub(1))
            .map(|v| v / 2 + k)
            .filter(|&v| v <= MAX_EXPANDED_COLUMNS)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "interaction expansion of {k} columns exceeds {MAX_EXPANDED_COLUMNS} columns"
                ))
            })?
    } else {
        k
    };
    let n = d.n();
    let mut x = DMatrix::zeros(n, total);
    let mut names = Vec::with_capacity(total);
    for (out, &j) in cols.iter().enumerate() {
        x.set_column(out, &d.x.column(j));
        names.push(d.covariate_names[j].clone());
    }
    if spec.include_interactions {
        let mut out = k;
        for a in 0..k {
            for b in (a + 1)..k {
                let (ja, jb) = (cols[a], cols[b]);
                let prod = d.x.column(ja).component_mul(&d.x.column(jb));
                x.set_column(out, &prod);
                names.push(format!(
                    "{}{INTERACTION_SEP}{}",
                    d.covariate_names[ja], d.covariate_names[jb]
                ));
                out += 1;
            }
        }
    }
    Dataset::new(x, d.t.clone(), d.y.clone(), names)
}
