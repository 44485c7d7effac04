//! Per-variable category proportions: tract targets and empirical summaries.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::records::{csv_err, RestructuredTable};
use super::schema::Schema;
use crate::error::{Error, Result};

pub const N_HOUSEHOLDS_ROW: &str = "__n_households__";
pub const N_PERSONS_ROW: &str = "__n_persons__";

const SUM_TOL: f64 = 1e-9;

/// Category proportions per variable. Person vectors exclude the NA
/// category, so their length is one less than the variable's category count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub household: Vec<Vec<f64>>,
    pub person: Vec<Vec<f64>>,
    pub n_households: usize,
    pub n_persons: Option<usize>,
}

/// Tract-level fitting target.
pub type TargetMarginals = Marginals;

impl Marginals {
    /// Household then person vectors, in schema order.
    pub fn vectors(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.household.iter().chain(&self.person)
    }

    /// All proportions concatenated across variables.
    pub fn flatten(&self) -> Vec<f64> {
        self.vectors().flatten().copied().collect()
    }

    pub fn check_against(&self, schema: &Schema) -> Result<()> {
        if self.household.len() != schema.household_vars.len() || self.person.len() != schema.person_vars.len() {
            return Err(Error::shape("marginals do not cover the schema's variables"));
        }
        for (v, p) in schema.household_vars.iter().zip(&self.household) {
            if p.len() != v.n_categories() {
                return Err(Error::shape(format!("{} has {} proportions", v.name, p.len())));
            }
        }
        for (v, p) in schema.person_vars.iter().zip(&self.person) {
            if p.len() != v.n_categories() - 1 {
                return Err(Error::shape(format!("{} has {} proportions", v.name, p.len())));
            }
        }
        Ok(())
    }

    /// Writes the marginals file format with proportions.
    pub fn write_csv<W: Write>(&self, schema: &Schema, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variable", "category", "count_or_proportion"]).map_err(csv_err)?;
        let vars = schema.household_vars.iter().chain(&schema.person_vars);
        for (v, p) in vars.zip(self.vectors()) {
            for (c, x) in v.categories.iter().zip(p) {
                w.write_record([v.name.as_str(), c.as_str(), &x.to_string()]).map_err(csv_err)?;
            }
        }
        w.write_record([N_HOUSEHOLDS_ROW, "", &self.n_households.to_string()]).map_err(csv_err)?;
        if let Some(n) = self.n_persons {
            w.write_record([N_PERSONS_ROW, "", &n.to_string()]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<marginals>", e))?;
        Ok(())
    }
}

pub fn load_target_marginals(path: impl AsRef<Path>, schema: &Schema) -> Result<TargetMarginals> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_target_marginals(f, schema)
}

fn normalize(name: &str, values: Vec<f64>) -> Result<Vec<f64>> {
    if let Some(x) = values.iter().find(|x| **x < 0.0 || !x.is_finite()) {
        return Err(Error::invalid(format!("{name}: invalid count {x}")));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid(format!("{name}: counts sum to zero")));
    }
    if (total - 1.0).abs() <= SUM_TOL {
        return Ok(values);
    }
    Ok(values.into_iter().map(|x| x / total).collect())
}

/// Parses `variable,category,count_or_proportion` rows. Counts are
/// normalized per variable; vectors already summing to 1 are kept as is.
/// Categories absent from the file count as zero. Person variables must
/// not list NA.
pub fn read_target_marginals<R: Read>(input: R, schema: &Schema) -> Result<TargetMarginals> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers().map_err(|e| Error::parse("<marginals>", e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (vc, cc, xc) = (col("variable")?, col("category")?, col("count_or_proportion")?);

    let mut raw: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    let mut n_households = None;
    let mut n_persons = None;
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse("<marginals>", e))?;
        let var = rec.get(vc).unwrap_or_default();
        let value_text = rec.get(xc).unwrap_or_default();
        let value: f64 = value_text
            .parse()
            .map_err(|_| Error::parse("<marginals>", format!("bad number `{value_text}` for {var}")))?;
        match var {
            N_HOUSEHOLDS_ROW => n_households = Some(value),
            N_PERSONS_ROW => n_persons = Some(value),
            _ => raw
                .entry(var.to_string())
                .or_default()
                .push((rec.get(cc).unwrap_or_default().to_string(), value)),
        }
    }

    let n_households = match n_households {
        None => return Err(Error::MissingVariable(N_HOUSEHOLDS_ROW.into())),
        Some(n) if n <= 0.0 || n.fract() != 0.0 => {
            return Err(Error::invalid(format!("household total must be a positive integer, got {n}")))
        }
        Some(n) => n as usize,
    };
    let n_persons = match n_persons {
        Some(n) if n <= 0.0 || n.fract() != 0.0 => {
            return Err(Error::invalid(format!("person total must be a positive integer, got {n}")))
        }
        other => other.map(|n| n as usize),
    };

    let mut collect = |name: &str, categories: &[String]| -> Result<Vec<f64>> {
        let entries = raw.remove(name).ok_or_else(|| Error::MissingVariable(name.to_string()))?;
        let mut values = vec![0.0; categories.len()];
        for (label, x) in entries {
            let k = categories
                .iter()
                .position(|c| *c == label)
                .ok_or_else(|| Error::UnknownCategory {
                    var: name.to_string(),
                    label: label.clone(),
                })?;
            values[k] += x;
        }
        normalize(name, values)
    };
    let household = schema
        .household_vars
        .iter()
        .map(|v| collect(&v.name, &v.categories))
        .collect::<Result<Vec<_>>>()?;
    let person = schema
        .person_vars
        .iter()
        .map(|v| collect(&v.name, &v.categories[..v.n_categories() - 1]))
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = raw.keys().next() {
        return Err(Error::invalid(format!("unknown variable `{extra}` in marginals")));
    }
    Ok(Marginals {
        household,
        person,
        n_households,
        n_persons,
    })
}

/// Household proportions over households; person proportions over present
/// persons only.
pub fn empirical_marginals(table: &RestructuredTable) -> Result<Marginals> {
    let schema = &table.schema;
    if table.rows.is_empty() {
        return Err(Error::invalid("empty table"));
    }
    let n_persons = table.n_persons();
    if n_persons == 0 {
        return Err(Error::invalid("table has no persons"));
    }
    let mut household: Vec<Vec<f64>> = schema
        .household_vars
        .iter()
        .map(|v| vec![0.0; v.n_categories()])
        .collect();
    let mut person: Vec<Vec<f64>> = schema
        .person_vars
        .iter()
        .map(|v| vec![0.0; v.n_categories() - 1])
        .collect();
    let mut person_totals = vec![0usize; schema.person_vars.len()];
    for row in &table.rows {
        for (v, &c) in row.household.iter().enumerate() {
            household[v][c] += 1.0;
        }
        for p in &row.persons {
            for (v, &c) in p.iter().enumerate() {
                if c < person[v].len() {
                    person[v][c] += 1.0;
                    person_totals[v] += 1;
                }
            }
        }
    }
    let nh = table.rows.len() as f64;
    for h in &mut household {
        h.iter_mut().for_each(|x| *x /= nh);
    }
    for (p, &t) in person.iter_mut().zip(&person_totals) {
        if t > 0 {
            p.iter_mut().for_each(|x| *x /= t as f64);
        }
    }
    Ok(Marginals {
        household,
        person,
        n_households: table.rows.len(),
        n_persons: Some(n_persons),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::records::RestructuredRow;
    use crate::ingest::schema::parse_schema;

    fn schema() -> Schema {
        parse_schema(
            "n_window = 2\n[[household]]\nname = \"TEN\"\ncategories = [\"Owned\", \"Rented\"]\n\
             [[household]]\nname = \"VEH\"\ncategories = [\"0\", \"1\", \"2+\"]\n\
             [[person]]\nname = \"AGEP\"\ncategories = [\"25-29\", \"70-74\"]\n\
             ",
        )
        .unwrap()
    }

    fn tract_file() -> String {
        // 1436 households: hand-summed 862 + 574 = 1436 and 301 + 700 + 435 = 1436
        "variable,category,count_or_proportion\n\
         TEN,Owned,862\nTEN,Rented,574\n\
         VEH,0,301\nVEH,1,700\nVEH,2+,435\n\
         AGEP,25-29,0.25\nAGEP,70-74,0.75\n\
         __n_households__,,1436\n"
            .to_string()
    }

    #[test]
    fn counts_are_normalized() {
        let t = read_target_marginals(tract_file().as_bytes(), &schema()).unwrap();
        assert_eq!(t.n_households, 1436);
        assert!((t.household[0][0] - 862.0 / 1436.0).abs() < 1e-15);
        assert!((t.household[1].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(t.person[0], vec![0.25, 0.75]);
        t.check_against(&schema()).unwrap();
    }

    #[test]
    fn missing_variable_named() {
        let text = tract_file().replace("VEH,0,301\nVEH,1,700\nVEH,2+,435\n", "");
        match read_target_marginals(text.as_bytes(), &schema()) {
            Err(Error::MissingVariable(v)) => assert_eq!(v, "VEH"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_and_zero_totals_rejected() {
        let text = tract_file().replace("TEN,Owned,862", "TEN,Owned,-1");
        assert!(read_target_marginals(text.as_bytes(), &schema()).is_err());
        let text = tract_file().replace("__n_households__,,1436", "__n_households__,,0");
        assert!(read_target_marginals(text.as_bytes(), &schema()).is_err());
    }

    #[test]
    fn write_then_read() {
        let t = read_target_marginals(tract_file().as_bytes(), &schema()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&schema(), &mut buf).unwrap();
        let back = read_target_marginals(buf.as_slice(), &schema()).unwrap();
        for (a, b) in t.flatten().iter().zip(back.flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_over_households_and_present_persons() {
        let s = schema();
        let table = RestructuredTable {
            schema: s.clone(),
            rows: vec![
                RestructuredRow { id: "1".into(), household: vec![0, 0], persons: vec![vec![1], vec![0]] },
                RestructuredRow { id: "2".into(), household: vec![1, 2], persons: vec![] },
            ],
        };
        let m = empirical_marginals(&table).unwrap();
        assert_eq!(m.household[0], vec![0.5, 0.5]);
        assert_eq!(m.person[0], vec![0.5, 0.5]);
        assert_eq!(m.n_persons, Some(2));
    }

    #[test]
    fn no_persons_is_an_error() {
        let table = RestructuredTable {
            schema: schema(),
            rows: vec![RestructuredRow { id: "1".into(), household: vec![0, 0], persons: vec![] }],
        };
        assert!(empirical_marginals(&table).is_err());
    }
}
