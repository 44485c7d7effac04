//! One-hot encoding of restructured tables and the inverse decoding.

use std::io::Write;
use std::ops::Range;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::records::{csv_err, sort_persons, Person, RestructuredRow, RestructuredTable};
use super::schema::Schema;
use crate::error::{Error, Result};

/// Which part of a row a column group belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupOwner {
    Household,
    /// Zero-based person slot.
    Slot(usize),
}

/// A contiguous block of columns encoding one variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnGroup {
    pub owner: GroupOwner,
    /// Index into `household_vars` or `person_vars` depending on `owner`.
    pub var: usize,
    pub start: usize,
    pub width: usize,
}

impl ColumnGroup {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.width
    }
}

/// Column bookkeeping: household groups first, then each person slot's
/// groups in person-variable order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnLayout {
    pub schema: Schema,
    pub groups: Vec<ColumnGroup>,
    pub width: usize,
}

impl ColumnLayout {
    /// Layout for a schema with a resolved window.
    pub fn new(schema: &Schema) -> Result<Self> {
        let window = schema.window()?;
        let mut groups = Vec::new();
        let mut start = 0;
        for (var, v) in schema.household_vars.iter().enumerate() {
            groups.push(ColumnGroup {
                owner: GroupOwner::Household,
                var,
                start,
                width: v.n_categories(),
            });
            start += v.n_categories();
        }
        for slot in 0..window {
            for (var, v) in schema.person_vars.iter().enumerate() {
                groups.push(ColumnGroup {
                    owner: GroupOwner::Slot(slot),
                    var,
                    start,
                    width: v.n_categories(),
                });
                start += v.n_categories();
            }
        }
        Ok(ColumnLayout {
            schema: schema.clone(),
            groups,
            width: start,
        })
    }

    pub fn n_window(&self) -> usize {
        self.schema.n_window.expect("layout schemas carry a window")
    }

    pub fn household_width(&self) -> usize {
        self.schema.household_vars.iter().map(|v| v.n_categories()).sum()
    }

    pub fn person_width(&self) -> usize {
        self.schema.person_vars.iter().map(|v| v.n_categories()).sum()
    }

    /// Column range of person variable `var` in `slot`.
    pub fn slot_range(&self, slot: usize, var: usize) -> Range<usize> {
        let mut start = self.household_width() + slot * self.person_width();
        for v in &self.schema.person_vars[..var] {
            start += v.n_categories();
        }
        start..start + self.schema.person_vars[var].n_categories()
    }

    pub fn group_ranges(&self) -> Vec<Range<usize>> {
        self.groups.iter().map(ColumnGroup::range).collect()
    }

    pub fn fingerprint(&self) -> String {
        self.schema.fingerprint()
    }
}

/// One-hot (or per-group probability) matrix with its column layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub values: Array2<f64>,
    pub layout: ColumnLayout,
    pub row_ids: Vec<String>,
}

impl EncodedMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    /// Wraps a probability matrix (e.g. decoder output) with generated row ids.
    pub fn from_probabilities(values: Array2<f64>, layout: ColumnLayout) -> Result<Self> {
        if values.ncols() != layout.width {
            return Err(Error::shape(format!(
                "matrix has {} columns, layout needs {}",
                values.ncols(),
                layout.width
            )));
        }
        let row_ids = (1..=values.nrows()).map(|i| i.to_string()).collect();
        Ok(EncodedMatrix {
            values,
            layout,
            row_ids,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let schema = &self.layout.schema;
        let mut header = vec!["household_id".to_string()];
        for g in &self.layout.groups {
            let (prefix, var) = match g.owner {
                GroupOwner::Household => (String::new(), &schema.household_vars[g.var]),
                GroupOwner::Slot(s) => (format!("p{}_", s + 1), &schema.person_vars[g.var]),
            };
            for c in &var.categories {
                header.push(format!("{prefix}{}={c}", var.name));
            }
        }
        w.write_record(&header).map_err(csv_err)?;
        for (id, row) in self.row_ids.iter().zip(self.values.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<encoded>", e))?;
        Ok(())
    }
}

/// Encodes every row; NA slots activate each person variable's NA column.
pub fn encode_onehot(table: &RestructuredTable) -> Result<EncodedMatrix> {
    table.validate()?;
    let layout = ColumnLayout::new(&table.schema)?;
    let mut values = Array2::zeros((table.rows.len(), layout.width));
    for (i, row) in table.rows.iter().enumerate() {
        for g in &layout.groups {
            let c = match g.owner {
                GroupOwner::Household => row.household[g.var],
                GroupOwner::Slot(s) => match row.slot(s) {
                    Some(p) => p[g.var],
                    None => table.schema.na_index(g.var),
                },
            };
            values[[i, g.start + c]] = 1.0;
        }
    }
    Ok(EncodedMatrix {
        values,
        layout,
        row_ids: table.rows.iter().map(|r| r.id.clone()).collect(),
    })
}

/// Encodes each present person as its own row: household groups followed
/// by a single slot. Used for person-level distances.
pub fn encode_person_rows(table: &RestructuredTable) -> Result<EncodedMatrix> {
    let single = table.schema.with_window(1)?;
    let mut rows = Vec::with_capacity(table.n_persons());
    for row in &table.rows {
        for (k, p) in row.persons.iter().enumerate() {
            rows.push(RestructuredRow {
                id: format!("{}#{}", row.id, k + 1),
                household: row.household.clone(),
                persons: vec![p.clone()],
            });
        }
    }
    encode_onehot(&RestructuredTable {
        schema: single,
        rows,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Argmax,
    Sample,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(DecodeMode::Argmax),
            "sample" => Ok(DecodeMode::Sample),
            other => Err(Error::invalid(format!("unknown decode mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DecodeOptions {
    pub mode: DecodeMode,
    pub seed: u64,
    /// Replace NA on non-anchor variables of present persons with the best
    /// non-NA category.
    pub repair_present_na: bool,
}

/// Counters describing how cleanly a probability matrix decoded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeStats {
    /// Absent slots (anchor decoded NA) where some other variable was non-NA.
    pub absent_slot_disagreements: usize,
    /// Present slots where some non-anchor variable decoded NA.
    pub present_slot_na: usize,
    /// Present-slot NA values replaced when repair is enabled.
    pub na_repairs: usize,
}

const SIMPLEX_TOL: f64 = 1e-6;

fn pick(probs: ArrayView1<f64>, mode: DecodeMode, rng: &mut ChaCha8Rng) -> usize {
    match mode {
        DecodeMode::Argmax => {
            let mut best = 0;
            for (k, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = k;
                }
            }
            best
        }
        DecodeMode::Sample => {
            let total: f64 = probs.sum();
            let u: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (k, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            // u landed on the rounding edge; take the last positive entry
            probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
        }
    }
}

/// Decodes with argmax or seeded sampling, without present-slot repair.
pub fn decode_onehot(matrix: &EncodedMatrix, mode: DecodeMode, seed: u64) -> Result<(RestructuredTable, DecodeStats)> {
    decode_onehot_with(
        matrix,
        &DecodeOptions {
            mode,
            seed,
            repair_present_na: false,
        },
    )
}

/// Picks one category per group. A slot is present iff its anchor group
/// decodes to a non-NA category; absent slots are NA for every variable.
/// Present slots are compacted to the front and re-sorted.
pub fn decode_onehot_with(matrix: &EncodedMatrix, opts: &DecodeOptions) -> Result<(RestructuredTable, DecodeStats)> {
    let layout = &matrix.layout;
    let schema = &layout.schema;
    if matrix.values.ncols() != layout.width {
        return Err(Error::shape("matrix width does not match its layout"));
    }
    for (i, row) in matrix.values.rows().into_iter().enumerate() {
        for g in &layout.groups {
            let s: f64 = row.slice(ndarray::s![g.range()]).sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::invalid(format!(
                    "row {i} group at column {} sums to {s}, not 1",
                    g.start
                )));
            }
        }
    }
    let window = layout.n_window();
    let anchor = schema.anchor_index();
    let n_person_vars = schema.person_vars.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut stats = DecodeStats::default();
    let mut rows = Vec::with_capacity(matrix.n_rows());

    for (i, row) in matrix.values.rows().into_iter().enumerate() {
        let mut household = vec![0; schema.household_vars.len()];
        let mut slots: Vec<Vec<usize>> = vec![vec![0; n_person_vars]; window];
        for g in &layout.groups {
            let c = pick(row.slice(ndarray::s![g.range()]), opts.mode, &mut rng);
            match g.owner {
                GroupOwner::Household => household[g.var] = c,
                GroupOwner::Slot(s) => slots[s][g.var] = c,
            }
        }
        let mut persons: Vec<Person> = Vec::new();
        for (s, mut person) in slots.into_iter().enumerate() {
            let present = person[anchor] != schema.na_index(anchor);
            if !present {
                if (0..n_person_vars).any(|v| person[v] != schema.na_index(v)) {
                    stats.absent_slot_disagreements += 1;
                }
                continue;
            }
            let mut had_na = false;
            for v in 0..n_person_vars {
                let na = schema.na_index(v);
                if v == anchor || person[v] != na {
                    continue;
                }
                had_na = true;
                if opts.repair_present_na {
                    let r = layout.slot_range(s, v);
                    let probs = row.slice(ndarray::s![r.start..r.end - 1]);
                    person[v] = if probs.sum() > 0.0 {
                        pick(probs, opts.mode, &mut rng)
                    } else {
                        0
                    };
                    stats.na_repairs += 1;
                }
            }
            if had_na {
                stats.present_slot_na += 1;
            }
            persons.push(person);
        }
        sort_persons(schema, &mut persons);
        rows.push(RestructuredRow {
            id: matrix.row_ids.get(i).cloned().unwrap_or_else(|| (i + 1).to_string()),
            household,
            persons,
        });
    }
    Ok((
        RestructuredTable {
            schema: schema.clone(),
            rows,
        },
        stats,
    ))
}
