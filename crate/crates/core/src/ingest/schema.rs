//! Categorical schema and its TOML config format.
//!
//! ```toml
//! n_window = 15                              # optional; default is the observed maximum
//! anchor = "AGEP"                            # optional; slot-presence variable
//! sort = ["AGEP:desc", "SCHL:desc", "SEX"]   # optional; person ordering within a household
//!
//! [[household]]
//! name = "TEN"
//! categories = ["Owned", "Rented"]
//!
//! [[person]]
//! name = "AGEP"
//! categories = ["Under 5", "5-9", "..."]    # "NA" is appended when absent
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Label of the padding category every person variable carries last.
pub const NA: &str = "NA";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub categories: Vec<String>,
}

impl Variable {
    pub fn new(name: impl Into<String>, categories: &[&str]) -> Self {
        Variable {
            name: name.into(),
            categories: categories.iter().map(|c| c.to_string()).collect(),
        }
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortKey {
    pub var: String,
    pub descending: bool,
}

/// Household and person variables plus the restructuring parameters.
///
/// Person variables always end with the [`NA`] category. `n_window` is
/// `None` until it is pinned by config or resolved from data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub household_vars: Vec<Variable>,
    pub person_vars: Vec<Variable>,
    pub n_window: Option<usize>,
    pub sort_keys: Vec<SortKey>,
    pub anchor: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    n_window: Option<usize>,
    anchor: Option<String>,
    sort: Option<Vec<String>>,
    #[serde(default)]
    household: Vec<VarEntry>,
    #[serde(default)]
    person: Vec<PersonEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VarEntry {
    name: String,
    categories: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonEntry {
    name: String,
    categories: Vec<String>,
    #[serde(default = "default_true")]
    has_na: bool,
}

fn default_true() -> bool {
    true
}

/// Reads and validates a schema config file.
pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_schema(&text).map_err(|e| match e {
        Error::Parse { msg, .. } => Error::parse(path, msg),
        other => other,
    })
}

pub fn parse_schema(text: &str) -> Result<Schema> {
    let file: SchemaFile = toml::from_str(text).map_err(|e| Error::parse("<schema>", e))?;
    let household_vars = file
        .household
        .into_iter()
        .map(|v| Variable {
            name: v.name,
            categories: v.categories,
        })
        .collect();
    let mut person_vars = Vec::with_capacity(file.person.len());
    for p in file.person {
        if !p.has_na {
            return Err(Error::Schema {
                var: p.name,
                msg: "person variables must carry an NA category".into(),
            });
        }
        let mut categories = p.categories;
        if !categories.iter().any(|c| c == NA) {
            categories.push(NA.to_string());
        }
        person_vars.push(Variable {
            name: p.name,
            categories,
        });
    }
    let sort_keys = match file.sort {
        Some(keys) => keys
            .iter()
            .map(|k| parse_sort_key(k))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Schema::new(
        household_vars,
        person_vars,
        file.n_window,
        sort_keys,
        file.anchor,
    )
}

fn parse_sort_key(spec: &str) -> Result<SortKey> {
    let (var, order) = match spec.split_once(':') {
        Some((v, o)) => (v.trim(), o.trim()),
        None => (spec.trim(), "asc"),
    };
    let descending = match order {
        "desc" => true,
        "asc" => false,
        other => {
            return Err(Error::Schema {
                var: var.to_string(),
                msg: format!("sort order must be `asc` or `desc`, got `{other}`"),
            })
        }
    };
    Ok(SortKey {
        var: var.to_string(),
        descending,
    })
}

impl Schema {
    /// Builds and validates a schema. Empty `sort_keys` selects the default
    /// composite key (age descending, education descending, sex); a missing
    /// anchor defaults to `AGEP` or else the first person variable.
    pub fn new(
        household_vars: Vec<Variable>,
        person_vars: Vec<Variable>,
        n_window: Option<usize>,
        sort_keys: Vec<SortKey>,
        anchor: Option<String>,
    ) -> Result<Self> {
        if person_vars.is_empty() {
            return Err(Error::Schema {
                var: "<person>".into(),
                msg: "schema needs at least one person variable".into(),
            });
        }
        let mut names = HashSet::new();
        for var in household_vars.iter().chain(&person_vars) {
            if !names.insert(var.name.as_str()) {
                return Err(Error::Schema {
                    var: var.name.clone(),
                    msg: "duplicate variable name".into(),
                });
            }
            if var.categories.is_empty() {
                return Err(Error::Schema {
                    var: var.name.clone(),
                    msg: "empty category list".into(),
                });
            }
            let mut seen = HashSet::new();
            for c in &var.categories {
                if !seen.insert(c.as_str()) {
                    return Err(Error::Schema {
                        var: var.name.clone(),
                        msg: format!("duplicate category `{c}`"),
                    });
                }
            }
        }
        for var in &household_vars {
            if var.index_of(NA).is_some() {
                return Err(Error::Schema {
                    var: var.name.clone(),
                    msg: "household variables cannot use the NA category".into(),
                });
            }
        }
        for var in &person_vars {
            if var.categories.last().map(String::as_str) != Some(NA) {
                return Err(Error::Schema {
                    var: var.name.clone(),
                    msg: "NA must be the last category".into(),
                });
            }
            if var.categories.len() < 2 {
                return Err(Error::Schema {
                    var: var.name.clone(),
                    msg: "needs at least one category besides NA".into(),
                });
            }
        }
        if n_window == Some(0) {
            return Err(Error::Schema {
                var: "n_window".into(),
                msg: "must be at least 1".into(),
            });
        }
        let has_person = |n: &str| person_vars.iter().any(|v| v.name == n);
        let sort_keys = if sort_keys.is_empty() {
            let defaults = [("AGEP", true), ("SCHL", true), ("SEX", false)];
            let mut keys: Vec<SortKey> = defaults
                .iter()
                .filter(|(n, _)| has_person(n))
                .map(|(n, d)| SortKey {
                    var: n.to_string(),
                    descending: *d,
                })
                .collect();
            if keys.is_empty() {
                keys.push(SortKey {
                    var: person_vars[0].name.clone(),
                    descending: true,
                });
            }
            keys
        } else {
            sort_keys
        };
        for key in &sort_keys {
            if !has_person(&key.var) {
                return Err(Error::Schema {
                    var: key.var.clone(),
                    msg: "sort key is not a person variable".into(),
                });
            }
        }
        let anchor = match anchor {
            Some(a) => a,
            None if has_person("AGEP") => "AGEP".to_string(),
            None => person_vars[0].name.clone(),
        };
        if !has_person(&anchor) {
            return Err(Error::Schema {
                var: anchor,
                msg: "anchor is not a person variable".into(),
            });
        }
        Ok(Schema {
            household_vars,
            person_vars,
            n_window,
            sort_keys,
            anchor,
        })
    }

    /// Same schema with the person window pinned.
    pub fn with_window(&self, n_window: usize) -> Result<Self> {
        if n_window == 0 {
            return Err(Error::invalid("n_window must be at least 1"));
        }
        Ok(Schema {
            n_window: Some(n_window),
            ..self.clone()
        })
    }

    pub fn window(&self) -> Result<usize> {
        self.n_window
            .ok_or_else(|| Error::invalid("schema window is not resolved yet"))
    }

    pub fn household_index(&self, name: &str) -> Option<usize> {
        self.household_vars.iter().position(|v| v.name == name)
    }

    pub fn person_index(&self, name: &str) -> Option<usize> {
        self.person_vars.iter().position(|v| v.name == name)
    }

    pub fn anchor_index(&self) -> usize {
        self.person_index(&self.anchor)
            .expect("anchor validated at construction")
    }

    /// Index of the NA category of person variable `p`.
    pub fn na_index(&self, p: usize) -> usize {
        self.person_vars[p].categories.len() - 1
    }

    pub fn n_variables(&self) -> usize {
        self.household_vars.len() + self.person_vars.len()
    }

    /// Names of all variables, households first.
    pub fn variable_names(&self) -> Vec<&str> {
        self.household_vars
            .iter()
            .chain(&self.person_vars)
            .map(|v| v.name.as_str())
            .collect()
    }

    /// Stable 16-hex-digit digest of everything that shapes the encoding.
    pub fn fingerprint(&self) -> String {
        let mut canon = String::new();
        for v in &self.household_vars {
            let _ = write!(canon, "h:{}={};", v.name, v.categories.join("|"));
        }
        for v in &self.person_vars {
            let _ = write!(canon, "p:{}={};", v.name, v.categories.join("|"));
        }
        let _ = write!(canon, "window={:?};anchor={};", self.n_window, self.anchor);
        for k in &self.sort_keys {
            let _ = write!(canon, "sort={}:{};", k.var, k.descending);
        }
        let digest = Sha256::digest(canon.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Serializes back to the TOML config format.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        if let Some(w) = self.n_window {
            let _ = writeln!(out, "n_window = {w}");
        }
        let _ = writeln!(out, "anchor = {:?}", self.anchor);
        let keys: Vec<String> = self
            .sort_keys
            .iter()
            .map(|k| format!("{:?}", format!("{}:{}", k.var, if k.descending { "desc" } else { "asc" })))
            .collect();
        let _ = writeln!(out, "sort = [{}]", keys.join(", "));
        for v in &self.household_vars {
            let _ = writeln!(out, "\n[[household]]\nname = {:?}", v.name);
            let _ = writeln!(out, "categories = [{}]", quoted(&v.categories));
        }
        for v in &self.person_vars {
            let _ = writeln!(out, "\n[[person]]\nname = {:?}", v.name);
            let _ = writeln!(out, "categories = [{}]", quoted(&v.categories));
        }
        out
    }
}

fn quoted(items: &[String]) -> String {
    items
        .iter()
        .map(|s| format!("{s:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Inclusive age range parsed from a bin label such as `"15-19"`,
/// `"Under 5"` or `"85 and over"`.
pub fn parse_age_bin(label: &str) -> Option<(u32, u32)> {
    let nums: Vec<u32> = label
        .split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .filter_map(|s| s.parse().ok())
        .collect();
    let lower = label.to_ascii_lowercase();
    match nums.as_slice() {
        [n] if lower.contains("under") => Some((0, n.saturating_sub(1))),
        [n] if lower.contains("over") || lower.contains('+') => Some((*n, u32::MAX)),
        [a, b] => Some((*a, *b)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: &str = include_str!("../../data/table1_schema.toml");

    #[test]
    fn table1_schema_has_six_household_and_three_person_vars() {
        let s = parse_schema(TABLE1).unwrap();
        assert_eq!(s.household_vars.len(), 6);
        assert_eq!(s.person_vars.len(), 3);
        assert_eq!(s.anchor, "AGEP");
        assert_eq!(s.sort_keys[0].var, "AGEP");
        assert!(s.sort_keys[0].descending);
    }

    #[test]
    fn zero_person_vars_rejected() {
        let text = "[[household]]\nname = \"TEN\"\ncategories = [\"Owned\", \"Rented\"]\n";
        assert!(matches!(parse_schema(text), Err(Error::Schema { .. })));
    }

    #[test]
    fn duplicate_category_names_variable() {
        let text = "[[household]]\nname = \"TEN\"\ncategories = [\"Owned\", \"Owned\"]\n\
                    [[person]]\nname = \"SEX\"\ncategories = [\"Male\", \"Female\"]\n";
        match parse_schema(text) {
            Err(Error::Schema { var, msg }) => {
                assert_eq!(var, "TEN");
                assert!(msg.contains("Owned"));
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_variable_rejected() {
        let text = "[[household]]\nname = \"SEX\"\ncategories = [\"a\"]\n\
                    [[person]]\nname = \"SEX\"\ncategories = [\"Male\", \"Female\"]\n";
        assert!(parse_schema(text).is_err());
    }

    #[test]
    fn na_not_last_rejected() {
        let text = "[[person]]\nname = \"SCHL\"\ncategories = [\"NA\", \"HS\"]\n";
        assert!(parse_schema(text).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = parse_schema(TABLE1).unwrap().with_window(4).unwrap();
        let back = parse_schema(&s.to_toml()).unwrap();
        assert_eq!(s, back);
        assert_eq!(s.fingerprint(), back.fingerprint());
    }

    #[test]
    fn fingerprint_depends_on_window() {
        let s = parse_schema(TABLE1).unwrap();
        assert_ne!(
            s.with_window(3).unwrap().fingerprint(),
            s.with_window(4).unwrap().fingerprint()
        );
    }

    #[test]
    fn age_bins() {
        assert_eq!(parse_age_bin("Under 5"), Some((0, 4)));
        assert_eq!(parse_age_bin("15-19"), Some((15, 19)));
        assert_eq!(parse_age_bin("85 and over"), Some((85, u32::MAX)));
        assert_eq!(parse_age_bin("NA"), None);
    }
}
