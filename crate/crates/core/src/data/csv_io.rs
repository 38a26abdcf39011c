use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{MultiTaskDataset, TaskKind};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Column-role mapping for [`load_dataset`].
///
/// Unset roles are inferred from the header: the first column whose name
/// starts with `y` is the primary response, the remaining `y*` columns are
/// auxiliary responses and every other column is a covariate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schema {
    pub primary: Option<String>,
    pub auxiliary: Option<Vec<String>>,
    pub covariates: Option<Vec<String>>,
    /// Response columns holding 0/1 labels.
    pub binary: Vec<String>,
}

struct ResolvedSchema {
    responses: Vec<String>,
    covariates: Vec<String>,
}

impl Schema {
    /// Explicit mapping reproducing a dataset's own column layout.
    pub fn from_dataset<T: Real>(data: &MultiTaskDataset<T>) -> Self {
        let names = data.response_names();
        Self {
            primary: Some(names[0].clone()),
            auxiliary: Some(names[1..].to_vec()),
            covariates: Some(data.covariate_names().to_vec()),
            binary: names
                .iter()
                .zip(data.task_kinds())
                .filter(|(_, k)| **k == TaskKind::Binary)
                .map(|(n, _)| n.clone())
                .collect(),
        }
    }

    fn resolve(&self, header: &[String]) -> Result<ResolvedSchema> {
        let mut seen = HashSet::new();
        for name in header {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        let is_response_name = |n: &String| n.starts_with('y');
        let primary = match &self.primary {
            Some(p) => p.clone(),
            None => header
                .iter()
                .find(|n| is_response_name(n))
                .cloned()
                .ok_or_else(|| {
                    Error::Schema("no primary response column (none named y*)".into())
                })?,
        };
        let auxiliary = match &self.auxiliary {
            Some(a) => a.clone(),
            None => header
                .iter()
                .filter(|n| is_response_name(n) && **n != primary)
                .cloned()
                .collect(),
        };
        let mut responses = vec![primary];
        responses.extend(auxiliary);
        let covariates = match &self.covariates {
            Some(c) => c.clone(),
            None => header
                .iter()
                .filter(|n| !responses.contains(n))
                .cloned()
                .collect(),
        };
        if covariates.is_empty() {
            return Err(Error::Schema(
                "at least one covariate column is required".into(),
            ));
        }
        let mut used = HashSet::new();
        for name in responses.iter().chain(&covariates) {
            if !header.contains(name) {
                return Err(Error::MissingColumn(name.clone()));
            }
            if !used.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        if let Some(b) = self.binary.iter().find(|b| !responses.contains(b)) {
            return Err(Error::Schema(format!(
                "binary column `{b}` is not a response"
            )));
        }
        Ok(ResolvedSchema {
            responses,
            covariates,
        })
    }
}

/// Reads a headed CSV file. Lines starting with `#` are comments.
pub fn load_dataset<T: Real>(
    path: impl AsRef<Path>,
    schema: &Schema,
) -> Result<MultiTaskDataset<T>> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let resolved = schema.resolve(&header)?;
    let index_of = |name: &String| header.iter().position(|h| h == name).expect("resolved");
    let response_idx: Vec<usize> = resolved.responses.iter().map(index_of).collect();
    let covariate_idx: Vec<usize> = resolved.covariates.iter().map(index_of).collect();

    let mut response_cols: Vec<Vec<T>> = vec![Vec::new(); response_idx.len()];
    let mut covariate_cols: Vec<Vec<T>> = vec![Vec::new(); covariate_idx.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let parse = |col: usize| -> Result<T> {
            let raw = record.get(col).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(T::lit(v)),
                _ => Err(Error::NonNumeric {
                    row: row + 1,
                    column: header[col].clone(),
                    value: raw.to_owned(),
                }),
            }
        };
        for (dst, &col) in response_cols.iter_mut().zip(&response_idx) {
            dst.push(parse(col)?);
        }
        for (dst, &col) in covariate_cols.iter_mut().zip(&covariate_idx) {
            dst.push(parse(col)?);
        }
    }
    let n = covariate_cols[0].len();
    let responses =
        DMatrix::from_iterator(n, response_cols.len(), response_cols.into_iter().flatten());
    let covariates = DMatrix::from_iterator(
        n,
        covariate_cols.len(),
        covariate_cols.into_iter().flatten(),
    );
    let kinds = resolved
        .responses
        .iter()
        .map(|name| {
            if schema.binary.contains(name) {
                TaskKind::Binary
            } else {
                TaskKind::Continuous
            }
        })
        .collect();
    MultiTaskDataset::with_names(
        covariates,
        responses,
        kinds,
        resolved.covariates,
        resolved.responses,
    )
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Shortest decimal that parses back to the same double.
pub fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

/// Writes responses then covariates, one row per observation, at full
/// precision so that [`load_dataset`] with [`Schema::from_dataset`] restores
/// the dataset exactly.
pub fn write_dataset<T: Real>(path: impl AsRef<Path>, data: &MultiTaskDataset<T>) -> Result<()> {
    let path = path.as_ref();
    let mut header: Vec<String> = data.response_names().to_vec();
    header.extend(data.covariate_names().iter().cloned());
    let mut combined = DMatrix::zeros(data.n(), header.len());
    combined
        .columns_mut(0, data.k_aux() + 1)
        .copy_from(data.responses());
    combined
        .columns_mut(data.k_aux() + 1, data.p())
        .copy_from(data.covariates());
    write_matrix_csv(path, None, &header, &combined)
}

/// Numeric table with a header row, optionally preceded by a `# comment` line.
pub fn write_matrix_csv<T: Real>(
    path: impl AsRef<Path>,
    comment: Option<&str>,
    header: &[String],
    m: &DMatrix<T>,
) -> Result<()> {
    let path = path.as_ref();
    if header.len() != m.ncols() {
        return Err(Error::dims(format!(
            "{} header names for {} columns",
            header.len(),
            m.ncols()
        )));
    }
    let mut out = create(path)?;
    if let Some(c) = comment {
        writeln!(out, "# {c}").map_err(io_err(path))?;
    }
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    writer.write_record(header).map_err(csv_err)?;
    for row in m.row_iter() {
        writer
            .write_record(row.iter().map(|v| fmt_num(v.to_f64_lossy())))
            .map_err(csv_err)?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

/// Inverse of [`write_matrix_csv`]: header names and the numeric body.
pub fn read_matrix_csv<T: Real>(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<T>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        for (col, raw) in record.iter().enumerate() {
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(T::lit(v)),
                _ => {
                    return Err(Error::NonNumeric {
                        row: row + 1,
                        column: header.get(col).cloned().unwrap_or_default(),
                        value: raw.to_owned(),
                    })
                }
            }
        }
        rows += 1;
    }
    Ok((
        header.clone(),
        DMatrix::from_row_slice(rows, header.len(), &values),
    ))
}
