//! Household/person microdata tables and the fixed-window restructuring.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use log::warn;

use super::schema::{Schema, Variable, NA};
use crate::error::{Error, Result};

pub const HOUSEHOLD_ID: &str = "household_id";

/// Category indices of one person, in schema person-variable order.
pub type Person = Vec<usize>;

/// One household as read from the microdata, persons in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HouseholdRecord {
    pub id: String,
    pub values: Vec<usize>,
    pub persons: Vec<Person>,
}

/// Households joined with their persons, in household-file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Microdata {
    pub households: Vec<HouseholdRecord>,
}

/// One row per household: household values plus up to `n_window` person
/// slots. Slots past `persons.len()` are NA for every person variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestructuredRow {
    pub id: String,
    pub household: Vec<usize>,
    pub persons: Vec<Person>,
}

impl RestructuredRow {
    /// Person in slot `s`, or `None` for an NA slot.
    pub fn slot(&self, s: usize) -> Option<&Person> {
        self.persons.get(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestructuredTable {
    /// Schema with `n_window` resolved.
    pub schema: Schema,
    pub rows: Vec<RestructuredRow>,
}

pub fn load_microdata(
    household_path: impl AsRef<Path>,
    person_path: impl AsRef<Path>,
    schema: &Schema,
) -> Result<Microdata> {
    let hp = household_path.as_ref();
    let pp = person_path.as_ref();
    let hf = std::fs::File::open(hp).map_err(|e| Error::io(hp, e))?;
    let pf = std::fs::File::open(pp).map_err(|e| Error::io(pp, e))?;
    read_microdata(hf, pf, schema)
}

fn header_positions(
    headers: &csv::StringRecord,
    vars: &[Variable],
) -> Result<(usize, Vec<usize>)> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id = find(HOUSEHOLD_ID)?;
    let cols = vars
        .iter()
        .map(|v| find(&v.name))
        .collect::<Result<Vec<_>>>()?;
    Ok((id, cols))
}

fn lookup(var: &Variable, label: &str) -> Result<usize> {
    var.index_of(label.trim())
        .ok_or_else(|| Error::UnknownCategory {
            var: var.name.clone(),
            label: label.trim().to_string(),
        })
}

/// Reads microdata from two CSV streams joined on `household_id`.
pub fn read_microdata<H: Read, P: Read>(households: H, persons: P, schema: &Schema) -> Result<Microdata> {
    let mut hr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(households);
    let headers = hr.headers().map_err(|e| Error::parse("<households>", e))?.clone();
    let (id_col, cols) = header_positions(&headers, &schema.household_vars)?;

    let mut out = Vec::new();
    let mut index = HashMap::new();
    for rec in hr.records() {
        let rec = rec.map_err(|e| Error::parse("<households>", e))?;
        let id = rec.get(id_col).unwrap_or_default().to_string();
        let values = schema
            .household_vars
            .iter()
            .zip(&cols)
            .map(|(v, &c)| lookup(v, rec.get(c).unwrap_or_default()))
            .collect::<Result<Vec<_>>>()?;
        if index.insert(id.clone(), out.len()).is_some() {
            return Err(Error::invalid(format!("duplicate household id `{id}`")));
        }
        out.push(HouseholdRecord {
            id,
            values,
            persons: Vec::new(),
        });
    }

    let mut pr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(persons);
    let headers = pr.headers().map_err(|e| Error::parse("<persons>", e))?.clone();
    let (pid_col, pcols) = header_positions(&headers, &schema.person_vars)?;
    let anchor = schema.anchor_index();
    let mut n_persons = 0usize;
    for rec in pr.records() {
        let rec = rec.map_err(|e| Error::parse("<persons>", e))?;
        let hid = rec.get(pid_col).unwrap_or_default();
        let &h = index
            .get(hid)
            .ok_or_else(|| Error::OrphanPerson(hid.to_string()))?;
        let person = schema
            .person_vars
            .iter()
            .zip(&pcols)
            .map(|(v, &c)| lookup(v, rec.get(c).unwrap_or_default()))
            .collect::<Result<Vec<_>>>()?;
        if person[anchor] == schema.na_index(anchor) {
            return Err(Error::invalid(format!(
                "person in household `{hid}` has NA for anchor variable {}",
                schema.anchor
            )));
        }
        out[h].persons.push(person);
        n_persons += 1;
    }
    if n_persons == 0 && !out.is_empty() {
        warn!("person table is empty; every household has zero persons");
    }
    Ok(Microdata { households: out })
}

fn compare_persons(keys: &[(usize, bool)], a: &Person, b: &Person) -> Ordering {
    for &(var, desc) in keys {
        let ord = a[var].cmp(&b[var]);
        let ord = if desc { ord.reverse() } else { ord };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

/// Sorts persons in place by the schema's composite key (stable).
pub fn sort_persons(schema: &Schema, persons: &mut [Person]) {
    let keys: Vec<(usize, bool)> = schema
        .sort_keys
        .iter()
        .map(|k| (schema.person_index(&k.var).expect("validated"), k.descending))
        .collect();
    persons.sort_by(|a, b| compare_persons(&keys, a, b));
}

/// One row per household with persons sorted into slots. The window is the
/// schema's pinned `n_window`, or the observed maximum household size.
pub fn restructure(records: &Microdata, schema: &Schema) -> Result<RestructuredTable> {
    let observed = records
        .households
        .iter()
        .map(|h| h.persons.len())
        .max()
        .unwrap_or(0);
    let window = match schema.n_window {
        Some(w) => {
            if let Some(h) = records.households.iter().find(|h| h.persons.len() > w) {
                return Err(Error::WindowExceeded {
                    id: h.id.clone(),
                    size: h.persons.len(),
                    window: w,
                });
            }
            w
        }
        None => observed.max(1),
    };
    let schema = schema.with_window(window)?;
    let rows = records
        .households
        .iter()
        .map(|h| {
            let mut persons = h.persons.clone();
            sort_persons(&schema, &mut persons);
            RestructuredRow {
                id: h.id.clone(),
                household: h.values.clone(),
                persons,
            }
        })
        .collect();
    Ok(RestructuredTable { schema, rows })
}

impl RestructuredTable {
    pub fn n_window(&self) -> usize {
        self.schema.n_window.expect("restructured tables carry a resolved window")
    }

    pub fn n_persons(&self) -> usize {
        self.rows.iter().map(|r| r.persons.len()).sum()
    }

    /// Back to (household id, household values, person) triples.
    pub fn flatten(&self) -> Vec<(String, Vec<usize>, Person)> {
        self.rows
            .iter()
            .flat_map(|r| {
                r.persons
                    .iter()
                    .map(move |p| (r.id.clone(), r.household.clone(), p.clone()))
            })
            .collect()
    }

    /// Checks the structural invariants against the schema.
    pub fn validate(&self) -> Result<()> {
        let window = self.n_window();
        let mut ids = HashSet::new();
        for row in &self.rows {
            if !ids.insert(row.id.as_str()) {
                return Err(Error::invalid(format!("duplicate household id `{}`", row.id)));
            }
            if row.household.len() != self.schema.household_vars.len() {
                return Err(Error::shape(format!("household `{}` value count", row.id)));
            }
            for (v, &c) in self.schema.household_vars.iter().zip(&row.household) {
                if c >= v.n_categories() {
                    return Err(Error::shape(format!("{} index {c} out of range", v.name)));
                }
            }
            if row.persons.len() > window {
                return Err(Error::WindowExceeded {
                    id: row.id.clone(),
                    size: row.persons.len(),
                    window,
                });
            }
            for p in &row.persons {
                if p.len() != self.schema.person_vars.len() {
                    return Err(Error::shape(format!("person in `{}` value count", row.id)));
                }
                for (v, &c) in self.schema.person_vars.iter().zip(p) {
                    if c >= v.n_categories() {
                        return Err(Error::shape(format!("{} index {c} out of range", v.name)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes one line per household with `p{slot}_{VAR}` person columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![HOUSEHOLD_ID.to_string()];
        header.extend(self.schema.household_vars.iter().map(|v| v.name.clone()));
        for s in 0..self.n_window() {
            for v in &self.schema.person_vars {
                header.push(format!("p{}_{}", s + 1, v.name));
            }
        }
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = vec![row.id.clone()];
            for (v, &c) in self.schema.household_vars.iter().zip(&row.household) {
                rec.push(v.categories[c].clone());
            }
            for s in 0..self.n_window() {
                for (i, v) in self.schema.person_vars.iter().enumerate() {
                    rec.push(match row.slot(s) {
                        Some(p) => v.categories[p[i]].clone(),
                        None => NA.to_string(),
                    });
                }
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<restructured>", e))?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::parse("<csv>", e)
}
