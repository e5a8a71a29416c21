//! Structured output: one record per line, each a space-separated sequence
//! of `key=value` fields in a fixed order. Values escape `%`, space, `=`,
//! tab and newline as `%XX`. Absent values are written `na`.

use std::fmt::Write as _;

use crate::error::CliError;

pub const NA: &str = "na";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Record {
    fields: Vec<(String, String)>,
}

fn escape(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for c in v.chars() {
        match c {
            '%' | ' ' | '=' | '\t' | '\n' | '\r' => {
                let _ = write!(out, "%{:02X}", c as u32);
            }
            _ => out.push(c),
        }
    }
    out
}

fn unescape(v: &str) -> Result<String, String> {
    let mut out = String::with_capacity(v.len());
    let mut chars = v.chars();
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        let hex: String = chars.by_ref().take(2).collect();
        let code = u8::from_str_radix(&hex, 16).map_err(|_| format!("bad escape `%{hex}`"))?;
        out.push(code as char);
    }
    Ok(out)
}

/// Shortest text that parses back to the same bits.
pub fn float(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt_float(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), float)
}

impl Record {
    pub fn new(kind: &str) -> Self {
        Self {
            fields: vec![("record".into(), kind.into())],
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.fields.push((key.into(), value.to_string()));
        self
    }

    pub fn kind(&self) -> &str {
        &self.fields[0].1
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|(k, _)| k.as_str())
    }

    pub fn fields(&self) -> &[(String, String)] {
        &self.fields
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::Data(format!("`{}` record lacks field `{key}`", self.kind())))
    }

    pub fn render(&self) -> String {
        self.fields
            .iter()
            .map(|(k, v)| format!("{k}={}", escape(v)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse(line: &str) -> Result<Self, String> {
        let mut fields = Vec::new();
        for token in line.split(' ').filter(|t| !t.is_empty()) {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| format!("field `{token}` has no `=`"))?;
            fields.push((k.to_string(), unescape(v)?));
        }
        match fields.first() {
            Some((k, _)) if k == "record" => Ok(Self { fields }),
            _ => Err("record must start with `record=`".into()),
        }
    }
}

pub fn render_all(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.render());
        out.push('\n');
    }
    out
}

pub fn parse_all(text: &str) -> Result<Vec<Record>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| Record::parse(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}
