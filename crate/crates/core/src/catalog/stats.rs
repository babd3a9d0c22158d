use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::TableDef;
use crate::value::{Row, Value};

pub const DEFAULT_HISTOGRAM_BUCKETS: usize = 32;
pub const DEFAULT_MCV_LIMIT: usize = 8;

/// Equi-depth histogram over the non-null, non-MCV population of a numeric
/// column. `bounds` has one more entry than `fractions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bounds: Vec<f64>,
    /// Share of the histogram population falling in each bucket.
    pub fractions: Vec<f64>,
}

impl Histogram {
    fn build(mut values: Vec<f64>, buckets: usize) -> Option<Histogram> {
        if values.is_empty() || buckets == 0 {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let buckets = buckets.min(n);
        let mut bounds = Vec::with_capacity(buckets + 1);
        let mut fractions = Vec::with_capacity(buckets);
        for k in 0..buckets {
            let lo = k * n / buckets;
            let hi = (k + 1) * n / buckets;
            bounds.push(values[lo]);
            fractions.push((hi - lo) as f64 / n as f64);
        }
        bounds.push(values[n - 1]);
        Some(Histogram { bounds, fractions })
    }

    /// Estimated share of the population strictly below `v`, interpolating
    /// linearly inside the containing bucket.
    pub fn fraction_below(&self, v: f64) -> f64 {
        let first = self.bounds[0];
        let last = *self.bounds.last().expect("non-empty bounds");
        if v <= first {
            return 0.0;
        }
        if v > last {
            return 1.0;
        }
        let mut acc = 0.0;
        for (k, share) in self.fractions.iter().enumerate() {
            let (lo, hi) = (self.bounds[k], self.bounds[k + 1]);
            if v > hi {
                acc += share;
                continue;
            }
            let width = hi - lo;
            let part = if width > 0.0 { (v - lo) / width } else { 1.0 };
            acc += share * part.clamp(0.0, 1.0);
            break;
        }
        acc.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub n_distinct: u64,
    pub null_frac: f64,
    pub histogram: Option<Histogram>,
    /// (value, share of all rows), sorted by descending share.
    pub mcv: Vec<(Value, f64)>,
}

impl ColumnStats {
    pub fn mcv_total(&self) -> f64 {
        self.mcv.iter().map(|(_, f)| f).sum()
    }

    pub fn mcv_frequency(&self, v: &Value) -> Option<f64> {
        self.mcv.iter().find(|(m, _)| m == v).map(|(_, f)| *f)
    }

    /// Share of all rows that the histogram describes.
    pub fn histogram_share(&self) -> f64 {
        (1.0 - self.null_frac - self.mcv_total()).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableStats {
    pub row_count: usize,
    pub columns: BTreeMap<String, ColumnStats>,
}

pub(super) fn analyze_table(
    def: &TableDef,
    rows: &[Row],
    buckets: usize,
    mcv_limit: usize,
) -> TableStats {
    let columns = def
        .columns
        .iter()
        .enumerate()
        .map(|(i, col)| {
            let values = rows.iter().map(|r| &r[i]);
            let stats = analyze_column(
                values,
                rows.len(),
                col.kind.is_numeric(),
                buckets,
                mcv_limit,
            );
            (col.name.clone(), stats)
        })
        .collect();
    TableStats {
        row_count: rows.len(),
        columns,
    }
}

fn analyze_column<'a>(
    values: impl Iterator<Item = &'a Value>,
    row_count: usize,
    numeric: bool,
    buckets: usize,
    mcv_limit: usize,
) -> ColumnStats {
    let mut counts: HashMap<&Value, usize> = HashMap::new();
    let mut nulls = 0usize;
    for v in values {
        if v.is_null() {
            nulls += 1;
        } else {
            *counts.entry(v).or_default() += 1;
        }
    }
    let non_null: usize = counts.values().sum();
    let mut by_freq: Vec<(&Value, usize)> = counts.into_iter().collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let distinct = by_freq.len();
    // Every value is "common" when the whole domain fits in the list;
    // otherwise only values clearly above the average frequency qualify.
    let mcv_len = if distinct <= mcv_limit {
        distinct
    } else {
        let avg = non_null as f64 / distinct as f64;
        by_freq
            .iter()
            .take(mcv_limit)
            .take_while(|(_, c)| *c >= 2 && *c as f64 > 1.25 * avg)
            .count()
    };
    let mcv: Vec<(Value, f64)> = by_freq[..mcv_len]
        .iter()
        .map(|(v, c)| ((*v).clone(), *c as f64 / row_count as f64))
        .collect();

    let histogram = if numeric {
        let rest: Vec<f64> = by_freq[mcv_len..]
            .iter()
            .flat_map(|(v, c)| std::iter::repeat_n(v.as_f64().expect("numeric column"), *c))
            .collect();
        Histogram::build(rest, buckets)
    } else {
        None
    };

    ColumnStats {
        n_distinct: distinct.max(1) as u64,
        null_frac: if row_count == 0 {
            0.0
        } else {
            nulls as f64 / row_count as f64
        },
        histogram,
        mcv,
    }
}
