use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::MseReport;
use crate::data::csv_fmt_num as fmt_num;
use crate::error::{Error, Result};

fn open(path: &Path, comment: Option<&str>) -> Result<csv::Writer<BufWriter<File>>> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    if let Some(c) = comment {
        writeln!(out, "# {c}").map_err(io)?;
    }
    Ok(csv::Writer::from_writer(out))
}

fn setting_fields(r: &MseReport) -> [String; 5] {
    let c = &r.config;
    [
        c.scenario.to_string(),
        c.n.to_string(),
        c.p.to_string(),
        c.k_aux.to_string(),
        c.d.to_string(),
    ]
}

/// One row per (setting, estimator, replication).
pub fn write_replications_csv(
    path: impl AsRef<Path>,
    comment: Option<&str>,
    reports: &[MseReport],
) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = open(path, comment)?;
    w.write_record([
        "scenario",
        "n",
        "p",
        "k_aux",
        "d",
        "estimator",
        "rep",
        "sq_error",
    ])
    .map_err(csv_err)?;
    for r in reports {
        let setting = setting_fields(r);
        for (label, errors) in r.labels.iter().zip(&r.sq_errors) {
            for (rep, e) in errors.iter().enumerate() {
                let mut row: Vec<String> = setting.to_vec();
                row.extend([label.clone(), rep.to_string(), fmt_num(*e)]);
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Mean and standard deviation per (setting, estimator).
pub fn write_summary_csv(
    path: impl AsRef<Path>,
    comment: Option<&str>,
    reports: &[MseReport],
) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = open(path, comment)?;
    w.write_record([
        "scenario",
        "n",
        "p",
        "k_aux",
        "d",
        "estimator",
        "m_reps",
        "mse",
        "sd",
    ])
    .map_err(csv_err)?;
    for r in reports {
        let setting = setting_fields(r);
        for row in r.summary() {
            let mut fields: Vec<String> = setting.to_vec();
            fields.extend([
                row.label,
                r.config.m_reps.to_string(),
                fmt_num(row.mse),
                fmt_num(row.sd),
            ]);
            w.write_record(&fields).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
