use std::io::Write;

use serde::{Deserialize, Serialize};

use super::chisq::chi_square_test;
use super::metrics::{fmt, kl_metric, rmse_metric};
use crate::error::{Error, Result};
use crate::ingest::records::csv_err;
use crate::ingest::{RestructuredTable, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRef {
    Household(usize),
    Person(usize),
}

impl VarRef {
    /// Household variables first, then person variables.
    pub fn all(schema: &Schema) -> Vec<VarRef> {
        (0..schema.household_vars.len())
            .map(VarRef::Household)
            .chain((0..schema.person_vars.len()).map(VarRef::Person))
            .collect()
    }

    fn n_categories(self, schema: &Schema) -> usize {
        match self {
            VarRef::Household(i) => schema.household_vars[i].n_categories(),
            VarRef::Person(i) => schema.person_vars[i].n_categories() - 1,
        }
    }

    fn name(self, schema: &Schema) -> &str {
        match self {
            VarRef::Household(i) => &schema.household_vars[i].name,
            VarRef::Person(i) => &schema.person_vars[i].name,
        }
    }
}

/// Row-major joint count table of two variables. Household pairs count
/// households; any pair involving a person variable counts persons, and
/// persons with NA in a paired variable are skipped.
pub fn joint_counts(table: &RestructuredTable, a: VarRef, b: VarRef) -> Vec<f64> {
    let schema = &table.schema;
    let nb = b.n_categories(schema);
    let mut counts = vec![0.0; a.n_categories(schema) * nb];
    let both_household = matches!((a, b), (VarRef::Household(_), VarRef::Household(_)));
    for row in &table.rows {
        if both_household {
            let (VarRef::Household(i), VarRef::Household(j)) = (a, b) else {
                unreachable!()
            };
            counts[row.household[i] * nb + row.household[j]] += 1.0;
            continue;
        }
        for p in &row.persons {
            let value = |v: VarRef| match v {
                VarRef::Household(i) => Some(row.household[i]),
                VarRef::Person(i) => Some(p[i]).filter(|&c| c != schema.na_index(i)),
            };
            if let (Some(x), Some(y)) = (value(a), value(b)) {
                counts[x * nb + y] += 1.0;
            }
        }
    }
    counts
}

fn proportions(counts: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("joint table is empty"));
    }
    Ok(counts.iter().map(|c| c / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPair {
    pub a: String,
    pub b: String,
    pub rmse: f64,
    pub kl: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPairReport {
    pub variables: Vec<String>,
    /// Pairs `(i, j)` with `i > j`, ordered by `i` then `j`.
    pub pairs: Vec<JointPair>,
}

/// Joint-distribution metrics of `synthetic` against `reference` over every
/// unordered pair of variables.
pub fn joint_pair_metrics(
    synthetic: &RestructuredTable,
    reference: &RestructuredTable,
    epsilon: f64,
) -> Result<JointPairReport> {
    let schema = &synthetic.schema;
    if schema.variable_names() != reference.schema.variable_names() {
        return Err(Error::shape("joint metrics need tables with the same variables"));
    }
    if synthetic.rows.is_empty() || reference.rows.is_empty() {
        return Err(Error::invalid("joint metrics of an empty table"));
    }
    let vars = VarRef::all(schema);
    let mut pairs = Vec::new();
    for i in 1..vars.len() {
        for j in 0..i {
            let (a, b) = (vars[i], vars[j]);
            let s_counts = joint_counts(synthetic, a, b);
            let s = proportions(&s_counts)?;
            let r = proportions(&joint_counts(reference, a, b))?;
            pairs.push(JointPair {
                a: a.name(schema).to_string(),
                b: b.name(schema).to_string(),
                rmse: rmse_metric(&s, &r)?,
                kl: kl_metric(&s, &r, epsilon)?,
                p_value: chi_square_test(&s_counts, &r)?.p_value,
            });
        }
    }
    Ok(JointPairReport {
        variables: schema.variable_names().iter().map(|s| s.to_string()).collect(),
        pairs,
    })
}

impl JointPairReport {
    pub fn get(&self, a: &str, b: &str) -> Option<&JointPair> {
        self.pairs
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
    }

    /// Lower-triangle matrix of one metric; the diagonal and upper triangle
    /// are left blank.
    pub fn write_matrix_csv<W: Write>(&self, out: W, metric: impl Fn(&JointPair) -> f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.variables.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (i, row_var) in self.variables.iter().enumerate() {
            let mut rec = vec![row_var.clone()];
            for (j, col_var) in self.variables.iter().enumerate() {
                rec.push(if j < i {
                    self.get(row_var, col_var).map(|p| fmt(metric(p))).unwrap_or_default()
                } else {
                    String::new()
                });
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<joint>", e))
    }
}
