//! Mondrian k-anonymity.
//!
//! Partitions are split recursively at the lower median of one
//! quasi-identifier column. Candidate columns are tried widest normalized
//! span first (ties: lowest column index); a split is allowed only if both
//! halves keep at least `k` rows. A partition with no allowed split becomes
//! an equivalence class, and its quasi-identifier values are replaced by the
//! class's `[min, max]` interval (numeric) or value set (categorical).
//! Categorical columns are ordered lexicographically for splitting.

use std::collections::BTreeSet;

use super::BaselineError;

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    Cat(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generalized {
    /// Non-quasi-identifier value, passed through.
    Exact(Value),
    Interval {
        lo: f64,
        hi: f64,
    },
    Set(BTreeSet<String>),
}

impl Generalized {
    /// Numeric stand-in: interval midpoint or the exact number.
    pub fn midpoint(&self) -> Option<f64> {
        match self {
            Generalized::Exact(Value::Num(v)) => Some(*v),
            Generalized::Interval { lo, hi } => Some(0.5 * (lo + hi)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnonymizedTable {
    /// Generalized records, in input order with suppressed rows removed.
    pub rows: Vec<Vec<Generalized>>,
    /// Input row index of each output row.
    pub source_rows: Vec<usize>,
    /// Equivalence classes as sets of input row indices.
    pub classes: Vec<Vec<usize>>,
    pub suppressed_count: usize,
    pub k: usize,
    pub quasi_ids: Vec<usize>,
}

impl AnonymizedTable {
    /// Every output row as numbers (interval midpoints). Fails on
    /// categorical columns.
    pub fn to_numeric(&self) -> Result<Vec<Vec<f64>>, BaselineError> {
        self.rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|g| {
                        g.midpoint()
                            .ok_or_else(|| BaselineError::Config("categorical column has no numeric form".into()))
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Numeric,
    Categorical,
}

fn column_kinds(rows: &[Vec<Value>]) -> Result<Vec<Kind>, BaselineError> {
    let width = rows[0].len();
    let mut kinds = Vec::with_capacity(width);
    for c in 0..width {
        let kind = match &rows[0][c] {
            Value::Num(_) => Kind::Numeric,
            Value::Cat(_) => Kind::Categorical,
        };
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(BaselineError::Shape(format!(
                    "row {i} has {} columns, expected {width}",
                    r.len()
                )));
            }
            let ok = matches!((&r[c], kind), (Value::Num(v), Kind::Numeric) if v.is_finite())
                || matches!((&r[c], kind), (Value::Cat(_), Kind::Categorical));
            if !ok {
                return Err(BaselineError::Shape(format!(
                    "row {i}, column {c}: value does not match the column kind or is not finite"
                )));
            }
        }
        kinds.push(kind);
    }
    Ok(kinds)
}

struct Mondrian<'a> {
    rows: &'a [Vec<Value>],
    kinds: Vec<Kind>,
    quasi_ids: &'a [usize],
    k: usize,
    /// Whole-table span per quasi-identifier (numeric range or distinct count − 1).
    table_span: Vec<f64>,
    /// Lexicographic rank of each categorical value, per quasi-identifier.
    cat_rank: Vec<Vec<f64>>,
}

impl Mondrian<'_> {
    fn key(&self, q: usize, row: usize) -> f64 {
        match self.kinds[self.quasi_ids[q]] {
            Kind::Numeric => match &self.rows[row][self.quasi_ids[q]] {
                Value::Num(v) => *v,
                Value::Cat(_) => unreachable!("kinds validated"),
            },
            Kind::Categorical => self.cat_rank[q][row],
        }
    }

    fn span(&self, q: usize, part: &[usize]) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut distinct = BTreeSet::new();
        for &r in part {
            let v = self.key(q, r);
            lo = lo.min(v);
            hi = hi.max(v);
            distinct.insert(v.to_bits());
        }
        let local = match self.kinds[self.quasi_ids[q]] {
            Kind::Numeric => hi - lo,
            Kind::Categorical => (distinct.len() - 1) as f64,
        };
        if self.table_span[q] > 0.0 {
            local / self.table_span[q]
        } else {
            0.0
        }
    }

    fn split(&self, part: Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let mut order: Vec<(f64, usize)> = (0..self.quasi_ids.len())
            .map(|q| (self.span(q, &part), q))
            .filter(|&(s, _)| s > 0.0)
            .collect();
        // widest first; stable sort keeps the lower column index on ties
        order.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (_, q) in order {
            let mut keys: Vec<f64> = part.iter().map(|&r| self.key(q, r)).collect();
            keys.sort_by(f64::total_cmp);
            let median = keys[(keys.len() - 1) / 2];
            let (left, right): (Vec<usize>, Vec<usize>) = part.iter().partition(|&&r| self.key(q, r) <= median);
            if left.len() >= self.k && right.len() >= self.k {
                self.split(left, out);
                self.split(right, out);
                return;
            }
        }
        out.push(part);
    }
}

/// Mondrian partitioning of `rows` over the `quasi_ids` columns.
pub fn k_anonymize(rows: &[Vec<Value>], quasi_ids: &[usize], k: usize) -> Result<AnonymizedTable, BaselineError> {
    if k < 2 {
        return Err(BaselineError::Config(format!("k must be at least 2, got {k}")));
    }
    if quasi_ids.is_empty() {
        return Err(BaselineError::Config("no quasi-identifier columns given".into()));
    }
    if rows.is_empty() {
        return Err(BaselineError::Config("table has no rows".into()));
    }
    let kinds = column_kinds(rows)?;
    if let Some(&q) = quasi_ids.iter().find(|&&q| q >= kinds.len()) {
        return Err(BaselineError::Config(format!(
            "quasi-identifier column {q} out of range for {} columns",
            kinds.len()
        )));
    }
    let mut sorted_ids = quasi_ids.to_vec();
    sorted_ids.sort_unstable();
    sorted_ids.dedup();
    if sorted_ids.len() != quasi_ids.len() {
        return Err(BaselineError::Config("duplicate quasi-identifier column".into()));
    }

    if rows.len() < k {
        return Ok(AnonymizedTable {
            rows: Vec::new(),
            source_rows: Vec::new(),
            classes: Vec::new(),
            suppressed_count: rows.len(),
            k,
            quasi_ids: quasi_ids.to_vec(),
        });
    }

    let cat_rank: Vec<Vec<f64>> = quasi_ids
        .iter()
        .map(|&c| match kinds[c] {
            Kind::Numeric => Vec::new(),
            Kind::Categorical => {
                let levels: BTreeSet<&str> = rows
                    .iter()
                    .map(|r| match &r[c] {
                        Value::Cat(s) => s.as_str(),
                        Value::Num(_) => unreachable!("kinds validated"),
                    })
                    .collect();
                let levels: Vec<&str> = levels.into_iter().collect();
                rows.iter()
                    .map(|r| match &r[c] {
                        Value::Cat(s) => levels.binary_search(&s.as_str()).expect("present") as f64,
                        Value::Num(_) => unreachable!("kinds validated"),
                    })
                    .collect()
            }
        })
        .collect();
    let mut m = Mondrian {
        rows,
        kinds,
        quasi_ids,
        k,
        table_span: Vec::new(),
        cat_rank,
    };
    let all: Vec<usize> = (0..rows.len()).collect();
    m.table_span = (0..quasi_ids.len())
        .map(|q| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            let mut distinct = BTreeSet::new();
            for &r in &all {
                let v = m.key(q, r);
                lo = lo.min(v);
                hi = hi.max(v);
                distinct.insert(v.to_bits());
            }
            match m.kinds[quasi_ids[q]] {
                Kind::Numeric => hi - lo,
                Kind::Categorical => (distinct.len() - 1) as f64,
            }
        })
        .collect();

    let mut classes = Vec::new();
    m.split(all, &mut classes);
    for c in &mut classes {
        c.sort_unstable();
    }

    let mut generalized: Vec<Option<Vec<Generalized>>> = vec![None; rows.len()];
    for class in &classes {
        let mut summary: Vec<Option<Generalized>> = vec![None; m.kinds.len()];
        for &q in quasi_ids {
            summary[q] = Some(match m.kinds[q] {
                Kind::Numeric => {
                    let vals = class.iter().map(|&r| match &rows[r][q] {
                        Value::Num(v) => *v,
                        Value::Cat(_) => unreachable!(),
                    });
                    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                    Generalized::Interval { lo, hi }
                }
                Kind::Categorical => Generalized::Set(
                    class
                        .iter()
                        .map(|&r| match &rows[r][q] {
                            Value::Cat(s) => s.clone(),
                            Value::Num(_) => unreachable!(),
                        })
                        .collect(),
                ),
            });
        }
        for &r in class {
            let rec = (0..m.kinds.len())
                .map(|c| {
                    summary[c]
                        .clone()
                        .unwrap_or_else(|| Generalized::Exact(rows[r][c].clone()))
                })
                .collect();
            generalized[r] = Some(rec);
        }
    }
    let (source_rows, out_rows): (Vec<usize>, Vec<Vec<Generalized>>) = generalized
        .into_iter()
        .enumerate()
        .filter_map(|(i, g)| g.map(|g| (i, g)))
        .unzip();
    Ok(AnonymizedTable {
        rows: out_rows,
        source_rows,
        classes,
        suppressed_count: 0,
        k,
        quasi_ids: quasi_ids.to_vec(),
    })
}

/// Smallest group of identical generalized quasi-identifier tuples, found by
/// exhaustive pairwise comparison. `None` for an empty table.
pub fn min_class_size(table: &AnonymizedTable) -> Option<usize> {
    let qi = |r: &Vec<Generalized>| -> Vec<Generalized> { table.quasi_ids.iter().map(|&q| r[q].clone()).collect() };
    table
        .rows
        .iter()
        .map(|r| {
            let key = qi(r);
            table.rows.iter().filter(|o| qi(o) == key).count()
        })
        .min()
}
