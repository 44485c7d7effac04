//! Household flag vs. member attribute consistency rules.
//!
//! Rules file:
//!
//! ```toml
//! [[rule]]
//! id = "R65"
//! household_var = "R65"
//! flag_category = "Yes"
//! person_var = "AGEP"
//! age_at_least = 65        # or `age_under = 18`, or `categories = [...]`
//! ```
//!
//! A household is consistent when its flag is set exactly when at least one
//! member qualifies.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::records::csv_err;
use crate::ingest::schema::parse_age_bin;
use crate::ingest::{RestructuredTable, Schema};

/// Which member categories satisfy a rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MemberRule {
    Categories(Vec<String>),
    /// Age bins whose lower bound is at least this age.
    AgeAtLeast(u32),
    /// Age bins whose lower bound is below this age.
    AgeUnder(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityRule {
    pub id: String,
    pub household_var: String,
    pub flag_category: String,
    pub person_var: String,
    pub members: MemberRule,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSpec {
    id: String,
    household_var: String,
    flag_category: String,
    person_var: String,
    categories: Option<Vec<String>>,
    age_at_least: Option<u32>,
    age_under: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesFile {
    #[serde(default)]
    rule: Vec<RuleSpec>,
}

pub fn parse_rules(text: &str) -> Result<Vec<SanityRule>> {
    let file: RulesFile = toml::from_str(text).map_err(|e| Error::parse("<rules>", e))?;
    file.rule
        .into_iter()
        .map(|r| {
            let members = match (r.categories, r.age_at_least, r.age_under) {
                (Some(c), None, None) => MemberRule::Categories(c),
                (None, Some(a), None) => MemberRule::AgeAtLeast(a),
                (None, None, Some(a)) => MemberRule::AgeUnder(a),
                _ => {
                    return Err(Error::invalid(format!(
                        "rule `{}` needs exactly one of categories, age_at_least, age_under",
                        r.id
                    )))
                }
            };
            Ok(SanityRule {
                id: r.id,
                household_var: r.household_var,
                flag_category: r.flag_category,
                person_var: r.person_var,
                members,
            })
        })
        .collect()
}

pub fn load_rules(path: impl AsRef<Path>) -> Result<Vec<SanityRule>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rules(&text)
}

/// R65 (a member aged 65 or over) and R18 (a member in a bin starting below
/// 18, so `15-19` counts), restricted to the flags present in `schema`.
pub fn builtin_rules(schema: &Schema) -> Vec<SanityRule> {
    let rule = |id: &str, members| SanityRule {
        id: id.to_string(),
        household_var: id.to_string(),
        flag_category: "Yes".to_string(),
        person_var: "AGEP".to_string(),
        members,
    };
    [rule("R65", MemberRule::AgeAtLeast(65)), rule("R18", MemberRule::AgeUnder(18))]
        .into_iter()
        .filter(|r| schema.household_index(&r.household_var).is_some() && schema.person_index(&r.person_var).is_some())
        .collect()
}

struct Compiled {
    household_var: usize,
    flag: usize,
    person_var: usize,
    qualifies: Vec<bool>,
}

fn compile(rule: &SanityRule, schema: &Schema) -> Result<Compiled> {
    let unknown = |name: &str| Error::Schema {
        var: name.to_string(),
        msg: format!("referenced by sanity rule `{}` but not in the schema", rule.id),
    };
    let household_var = schema
        .household_index(&rule.household_var)
        .ok_or_else(|| unknown(&rule.household_var))?;
    let person_var = schema.person_index(&rule.person_var).ok_or_else(|| unknown(&rule.person_var))?;
    let hv = &schema.household_vars[household_var];
    let flag = hv.index_of(&rule.flag_category).ok_or_else(|| Error::UnknownCategory {
        var: hv.name.clone(),
        label: rule.flag_category.clone(),
    })?;
    let pv = &schema.person_vars[person_var];
    let na = schema.na_index(person_var);
    let mut qualifies = vec![false; pv.n_categories()];
    match &rule.members {
        MemberRule::Categories(labels) => {
            for l in labels {
                let k = pv.index_of(l).ok_or_else(|| Error::UnknownCategory {
                    var: pv.name.clone(),
                    label: l.clone(),
                })?;
                qualifies[k] = true;
            }
        }
        MemberRule::AgeAtLeast(_) | MemberRule::AgeUnder(_) => {
            for (k, label) in pv.categories.iter().enumerate().filter(|(k, _)| *k != na) {
                let (lo, _) = parse_age_bin(label).ok_or_else(|| Error::Schema {
                    var: pv.name.clone(),
                    msg: format!("category `{label}` is not an age bin"),
                })?;
                qualifies[k] = match rule.members {
                    MemberRule::AgeAtLeast(a) => lo >= a,
                    MemberRule::AgeUnder(a) => lo < a,
                    MemberRule::Categories(_) => unreachable!(),
                };
            }
        }
    }
    Ok(Compiled {
        household_var,
        flag,
        person_var,
        qualifies,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Flag set but no qualifying member.
    FlagWithoutMember,
    /// Qualifying member but flag not set.
    MemberWithoutFlag,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::FlagWithoutMember => "flag_without_member",
            ViolationKind::MemberWithoutFlag => "member_without_flag",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub household_id: String,
    pub rule_id: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSummary {
    pub rule_id: String,
    pub count: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityReport {
    pub n_households: usize,
    pub violations: Vec<Violation>,
    pub rules: Vec<RuleSummary>,
    /// Households violating at least one rule.
    pub households_in_violation: usize,
}

impl SanityReport {
    pub fn violating_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.violations.iter().map(|v| v.household_id.as_str()).collect();
        ids.dedup();
        ids
    }

    pub fn overall_rate(&self) -> f64 {
        if self.n_households == 0 {
            0.0
        } else {
            self.households_in_violation as f64 / self.n_households as f64
        }
    }

    pub fn summary_line(&self) -> String {
        let per_rule: Vec<String> = self
            .rules
            .iter()
            .map(|r| format!("{} {} ({:.2}%)", r.rule_id, r.count, 100.0 * r.rate))
            .collect();
        format!(
            "sanity: {} of {} households ({:.2}%) with contradictory attributes; {}",
            self.households_in_violation,
            self.n_households,
            100.0 * self.overall_rate(),
            per_rule.join(", ")
        )
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["household_id", "rule_id", "kind"]).map_err(csv_err)?;
        for v in &self.violations {
            w.write_record([v.household_id.as_str(), v.rule_id.as_str(), v.kind.as_str()])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<sanity>", e))
    }
}

/// Checks every household against every rule, in both directions.
pub fn sanity_check(table: &RestructuredTable, rules: &[SanityRule]) -> Result<SanityReport> {
    let compiled = rules
        .iter()
        .map(|r| compile(r, &table.schema))
        .collect::<Result<Vec<_>>>()?;
    let mut violations = Vec::new();
    let mut counts = vec![0usize; rules.len()];
    let mut households_in_violation = 0;
    for row in &table.rows {
        let mut any = false;
        for (k, (rule, c)) in rules.iter().zip(&compiled).enumerate() {
            let flagged = row.household[c.household_var] == c.flag;
            let member = row.persons.iter().any(|p| c.qualifies[p[c.person_var]]);
            let kind = match (flagged, member) {
                (true, false) => ViolationKind::FlagWithoutMember,
                (false, true) => ViolationKind::MemberWithoutFlag,
                _ => continue,
            };
            violations.push(Violation {
                household_id: row.id.clone(),
                rule_id: rule.id.clone(),
                kind,
            });
            counts[k] += 1;
            any = true;
        }
        households_in_violation += usize::from(any);
    }
    let n = table.rows.len();
    let rate = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    Ok(SanityReport {
        n_households: n,
        rules: rules
            .iter()
            .zip(&counts)
            .map(|(r, &c)| RuleSummary {
                rule_id: r.id.clone(),
                count: c,
                rate: rate(c),
            })
            .collect(),
        violations,
        households_in_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_schema, RestructuredRow};

    fn table1() -> Schema {
        parse_schema(include_str!("../../data/table1_schema.toml"))
            .unwrap()
            .with_window(3)
            .unwrap()
    }

    fn age(s: &Schema, label: &str) -> Vec<usize> {
        let a = s.person_index("AGEP").unwrap();
        let mut p = vec![0; s.person_vars.len()];
        p[a] = s.person_vars[a].index_of(label).unwrap();
        p
    }

    fn row(s: &Schema, id: &str, r18: &str, r65: &str, ages: &[&str]) -> RestructuredRow {
        let mut h = vec![0; s.household_vars.len()];
        h[s.household_index("R18").unwrap()] = s.household_vars[2].index_of(r18).unwrap();
        h[s.household_index("R65").unwrap()] = s.household_vars[3].index_of(r65).unwrap();
        RestructuredRow {
            id: id.into(),
            household: h,
            persons: ages.iter().map(|a| age(s, a)).collect(),
        }
    }

    #[test]
    fn flag_without_senior_is_reported() {
        let s = table1();
        let t = RestructuredTable {
            schema: s.clone(),
            rows: vec![
                row(&s, "a", "No", "Yes", &["40-44", "45-49"]),
                row(&s, "b", "No", "No", &["25-29", "30-34"]),
            ],
        };
        let r = sanity_check(&t, &builtin_rules(&s)).unwrap();
        assert_eq!(r.violating_ids(), vec!["a"]);
        assert_eq!(r.violations[0].kind, ViolationKind::FlagWithoutMember);
        assert_eq!(r.rules[0].count, 1);
        assert!((r.rules[0].rate - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fifteen_to_nineteen_counts_as_minor() {
        let s = table1();
        let t = RestructuredTable {
            schema: s.clone(),
            rows: vec![
                row(&s, "a", "Yes", "No", &["45-49", "15-19"]),
                row(&s, "b", "No", "No", &["45-49", "20-24"]),
                row(&s, "c", "No", "No", &["Under 5", "30-34"]),
            ],
        };
        let r = sanity_check(&t, &builtin_rules(&s)).unwrap();
        assert_eq!(r.violating_ids(), vec!["c"]);
        assert_eq!(r.violations[0].kind, ViolationKind::MemberWithoutFlag);
    }

    #[test]
    fn rules_from_config() {
        let rules = parse_rules(
            "[[rule]]\nid = \"senior\"\nhousehold_var = \"R65\"\nflag_category = \"Yes\"\n\
             person_var = \"AGEP\"\ncategories = [\"65-69\", \"70-74\"]\n",
        )
        .unwrap();
        assert_eq!(rules[0].members, MemberRule::Categories(vec!["65-69".into(), "70-74".into()]));
        let bad = parse_rules("[[rule]]\nid = \"x\"\nhousehold_var = \"R65\"\nflag_category = \"Yes\"\nperson_var = \"AGEP\"\n");
        assert!(bad.is_err());
    }

    #[test]
    fn unknown_variable_rejected() {
        let s = table1();
        let rule = SanityRule {
            id: "x".into(),
            household_var: "NOPE".into(),
            flag_category: "Yes".into(),
            person_var: "AGEP".into(),
            members: MemberRule::AgeAtLeast(65),
        };
        let t = RestructuredTable { schema: s, rows: vec![] };
        assert!(matches!(sanity_check(&t, &[rule]), Err(Error::Schema { .. })));
    }
}
