//! Delimited text: one record per line, single-character delimiter, no
//! quoting. LF or CRLF line endings.

use std::collections::HashMap;
use std::path::Path;

use super::{ColumnKind, ColumnMeta, DataError, Dataset};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColumnRef {
    Name(String),
    Index(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelimitedSchema {
    pub delimiter: char,
    pub header: bool,
    pub utility_column: ColumnRef,
    pub sensitive_column: ColumnRef,
    /// `None` selects every column other than the two label columns.
    pub feature_columns: Option<Vec<ColumnRef>>,
}

impl DelimitedSchema {
    /// Header-bearing schema with named label columns and all other columns
    /// as features.
    pub fn named(delimiter: char, utility: &str, sensitive: &str) -> Self {
        Self {
            delimiter,
            header: true,
            utility_column: ColumnRef::Name(utility.into()),
            sensitive_column: ColumnRef::Name(sensitive.into()),
            feature_columns: None,
        }
    }
}

pub fn load_delimited(path: &Path, schema: &DelimitedSchema) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_delimited(&text, schema)
}

fn resolve(r: &ColumnRef, header: Option<&[&str]>, width: usize) -> Result<usize, DataError> {
    match r {
        ColumnRef::Index(i) if *i < width => Ok(*i),
        ColumnRef::Index(i) => Err(DataError::Schema(format!(
            "column index {i} out of range for {width} columns"
        ))),
        ColumnRef::Name(name) => {
            let header =
                header.ok_or_else(|| DataError::Schema(format!("column `{name}` named but the file has no header")))?;
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DataError::Schema(format!("unknown column `{name}`")))
        }
    }
}

/// Integer codes in first-appearance order.
fn code_labels(values: &[&str]) -> (Vec<usize>, Vec<String>) {
    let mut levels: Vec<String> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let codes = values
        .iter()
        .map(|&v| {
            *index.entry(v).or_insert_with(|| {
                levels.push(v.to_string());
                levels.len() - 1
            })
        })
        .collect();
    (codes, levels)
}

pub fn parse_delimited(text: &str, schema: &DelimitedSchema) -> Result<Dataset, DataError> {
    let mut lines: Vec<(usize, &str)> = text
        .split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .collect();
    if lines.last().is_some_and(|(_, l)| l.is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(DataError::Empty("delimited file has no lines".into()));
    }

    let d = schema.delimiter;
    let header: Option<Vec<&str>> = schema.header.then(|| lines.remove(0).1.split(d).collect());
    if lines.is_empty() {
        return Err(DataError::Empty("delimited file has no data rows".into()));
    }
    let width = header.as_ref().map_or_else(|| lines[0].1.split(d).count(), Vec::len);

    let mut rows: Vec<Vec<&str>> = Vec::with_capacity(lines.len());
    for &(line, content) in &lines {
        let fields: Vec<&str> = content.split(d).collect();
        if fields.len() != width {
            return Err(DataError::Parse {
                line,
                message: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        rows.push(fields);
    }

    let hdr = header.as_deref();
    let util = resolve(&schema.utility_column, hdr, width)?;
    let sens = resolve(&schema.sensitive_column, hdr, width)?;
    if util == sens {
        return Err(DataError::Schema("utility and sensitive columns coincide".into()));
    }
    let features: Vec<usize> = match &schema.feature_columns {
        Some(refs) => refs.iter().map(|r| resolve(r, hdr, width)).collect::<Result<_, _>>()?,
        None => (0..width).filter(|&c| c != util && c != sens).collect(),
    };
    if features.is_empty() {
        return Err(DataError::Schema("no feature columns selected".into()));
    }
    if let Some(&c) = features.iter().find(|&&c| c == util || c == sens) {
        return Err(DataError::Schema(format!("column {c} is both a feature and a label")));
    }
    let name_of = |c: usize| hdr.map_or_else(|| format!("col{c}"), |h| h[c].to_string());

    let n = rows.len();
    let mut columns: Vec<ColumnMeta> = Vec::new();
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    for &c in &features {
        let raw: Vec<&str> = rows.iter().map(|r| r[c]).collect();
        let parsed: Option<Vec<f64>> = raw
            .iter()
            .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect();
        match parsed {
            Some(values) => {
                let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                columns.push(ColumnMeta {
                    name: name_of(c),
                    kind: ColumnKind::Numeric { min, max },
                });
                blocks.push(values);
            }
            None => {
                let (codes, levels) = code_labels(&raw);
                let source = name_of(c);
                for (li, level) in levels.iter().enumerate() {
                    columns.push(ColumnMeta {
                        name: format!("{source}={level}"),
                        kind: ColumnKind::OneHot {
                            source: source.clone(),
                            level: level.clone(),
                        },
                    });
                    blocks.push(codes.iter().map(|&k| if k == li { 1.0 } else { 0.0 }).collect());
                }
            }
        }
    }
    let d_out = blocks.len();
    let mut data = Vec::with_capacity(n * d_out);
    for i in 0..n {
        data.extend(blocks.iter().map(|b| b[i]));
    }
    let x = Tensor::new(&[n, d_out], data).map_err(|e| DataError::Invalid(e.to_string()))?;

    let util_raw: Vec<&str> = rows.iter().map(|r| r[util]).collect();
    let sens_raw: Vec<&str> = rows.iter().map(|r| r[sens]).collect();
    let (y_util, utility_levels) = code_labels(&util_raw);
    let (s, sensitive_levels) = code_labels(&sens_raw);
    Ok(Dataset {
        x,
        y_util,
        s: Some(s),
        columns,
        utility_name: name_of(util),
        sensitive_name: name_of(sens),
        utility_levels,
        sensitive_levels,
        image_shape: None,
    })
}

/// Writes `dataset` with a header: feature source columns in order (one-hot
/// groups collapsed back to their level text), then the utility and
/// sensitive label columns.
pub fn write_delimited(dataset: &Dataset, delimiter: char) -> Result<String, DataError> {
    dataset.validate()?;
    let s = dataset.sensitive()?;

    enum Out {
        Numeric(usize),
        Group(Vec<(usize, String)>),
    }
    let mut outs: Vec<(String, Out)> = Vec::new();
    for (j, col) in dataset.columns.iter().enumerate() {
        match &col.kind {
            ColumnKind::Numeric { .. } => outs.push((col.name.clone(), Out::Numeric(j))),
            ColumnKind::OneHot { source, level } => {
                match outs.iter_mut().find(|(n, o)| n == source && matches!(o, Out::Group(_))) {
                    Some((_, Out::Group(g))) => g.push((j, level.clone())),
                    _ => outs.push((source.clone(), Out::Group(vec![(j, level.clone())]))),
                }
            }
        }
    }

    let check = |field: &str| -> Result<(), DataError> {
        if field.contains(delimiter) || field.contains('\n') || field.contains('\r') {
            Err(DataError::Schema(format!(
                "field `{field}` contains the delimiter or a line break"
            )))
        } else {
            Ok(())
        }
    };

    let mut header: Vec<&str> = outs.iter().map(|(n, _)| n.as_str()).collect();
    header.push(&dataset.utility_name);
    header.push(&dataset.sensitive_name);
    header.iter().try_for_each(|h| check(h))?;
    let sep = delimiter.to_string();
    let mut text = header.join(&sep);
    text.push('\n');

    for (i, &si) in s.iter().enumerate() {
        let row = dataset.x.row(i);
        let mut fields: Vec<String> = Vec::with_capacity(outs.len() + 2);
        for (name, out) in &outs {
            match out {
                Out::Numeric(j) => fields.push(format!("{}", row[*j])),
                Out::Group(g) => {
                    let level = g
                        .iter()
                        .find(|(j, _)| row[*j] == 1.0)
                        .map(|(_, l)| l.clone())
                        .ok_or_else(|| DataError::Invalid(format!("row {i}: no active level for `{name}`")))?;
                    fields.push(level);
                }
            }
        }
        fields.push(dataset.utility_levels[dataset.y_util[i]].clone());
        fields.push(dataset.sensitive_levels[si].clone());
        fields.iter().try_for_each(|f| check(f))?;
        text.push_str(&fields.join(&sep));
        text.push('\n');
    }
    Ok(text)
}
