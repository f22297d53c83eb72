use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use super::{ColumnKind, Dataset, Schema, Targets, Task};
use crate::{Error, Result};

const REGION_COLUMN: &str = "region";

fn ingest(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Ingest {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn parse_flag(row: usize, s: &str) -> Result<bool> {
    match s.trim() {
        "1" | "true" | "True" => Ok(true),
        "0" | "false" | "False" => Ok(false),
        other => Err(ingest(row, REGION_COLUMN, format!("expected 0/1, got '{other}'"))),
    }
}

/// Reads a dataset from CSV text. Categorical columns whose schema lists no
/// categories get a sorted vocabulary inferred from the file.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ingest(0, "<header>", e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(ingest(0, "<header>", "empty file"));
    }
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);

    let mut col_pos = Vec::with_capacity(schema.columns.len());
    for c in &schema.columns {
        col_pos.push(find(&c.name).ok_or_else(|| ingest(0, &c.name, "missing column"))?);
    }
    let label_pos = find(&schema.label).ok_or_else(|| ingest(0, &schema.label, "missing label column"))?;
    let region_pos = find(REGION_COLUMN);

    let records: Vec<csv::StringRecord> = rdr
        .records()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| ingest(i + 1, "<record>", e.to_string())))
        .collect::<Result<_>>()?;
    if records.is_empty() {
        return Err(ingest(0, "<header>", "file contains no data rows"));
    }

    let mut schema = schema.clone();
    for (c, &pos) in schema.columns.iter_mut().zip(&col_pos) {
        if let ColumnKind::Categorical { categories } = &mut c.kind {
            if categories.is_empty() {
                let uniq: BTreeSet<String> =
                    records.iter().map(|r| r[pos].trim().to_string()).collect();
                *categories = uniq.into_iter().collect();
            }
        }
    }

    let mut features = Vec::with_capacity(records.len());
    let mut labels = Vec::new();
    let mut reals = Vec::new();
    let mut region = region_pos.map(|_| Vec::with_capacity(records.len()));
    for (i, rec) in records.iter().enumerate() {
        let row_no = i + 1;
        let mut row = Vec::with_capacity(schema.columns.len());
        for (c, &pos) in schema.columns.iter().zip(&col_pos) {
            let cell = rec.get(pos).ok_or_else(|| ingest(row_no, &c.name, "missing cell"))?.trim();
            let v = match &c.kind {
                ColumnKind::Continuous => cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ingest(row_no, &c.name, format!("cannot parse '{cell}' as a number")))?,
                ColumnKind::Categorical { categories } => categories
                    .iter()
                    .position(|k| k == cell)
                    .ok_or_else(|| ingest(row_no, &c.name, format!("unknown category '{cell}'")))?
                    as f64,
            };
            row.push(v);
        }
        features.push(row);
        let cell = rec.get(label_pos).unwrap_or("").trim();
        match schema.task {
            Task::Classification { num_classes } => {
                let l: usize = cell
                    .parse()
                    .map_err(|_| ingest(row_no, &schema.label, format!("cannot parse '{cell}' as a class label")))?;
                if l >= num_classes {
                    return Err(ingest(row_no, &schema.label, format!("label {l} outside [0, {num_classes})")));
                }
                labels.push(l);
            }
            Task::Regression => {
                let y: f64 = cell
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| ingest(row_no, &schema.label, format!("cannot parse '{cell}' as a number")))?;
                reals.push(y);
            }
        }
        if let (Some(mask), Some(pos)) = (region.as_mut(), region_pos) {
            mask.push(parse_flag(row_no, rec.get(pos).unwrap_or(""))?);
        }
    }

    let targets = match schema.task {
        Task::Classification { num_classes } => Targets::Classes { labels, num_classes },
        Task::Regression => Targets::Real(reals),
    };
    Dataset::new(schema, features, targets, region)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

/// Writes the dataset with its schema's column names; categorical cells are
/// written as category strings.
pub fn write_csv_to<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = data.schema.columns.iter().map(|c| c.name.clone()).collect();
    header.push(data.schema.label.clone());
    if data.region.is_some() {
        header.push(REGION_COLUMN.to_string());
    }
    w.write_record(&header)?;
    for (i, row) in data.features.iter().enumerate() {
        let mut rec: Vec<String> = data
            .schema
            .columns
            .iter()
            .zip(row)
            .map(|(c, v)| match &c.kind {
                ColumnKind::Continuous => format!("{v}"),
                ColumnKind::Categorical { categories } => categories[*v as usize].clone(),
            })
            .collect();
        rec.push(match &data.targets {
            Targets::Classes { labels, .. } => labels[i].to_string(),
            Targets::Real(v) => format!("{}", v[i]),
        });
        if let Some(mask) = &data.region {
            rec.push(if mask[i] { "1" } else { "0" }.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv_to(data, std::io::BufWriter::new(file))
}
