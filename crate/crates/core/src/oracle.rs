//! Hierarchical ground-truth sampler: household type, then size, then
//! correlated person and household attributes. Used to build self-contained
//! microdata and tract targets with known structure.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::records::{csv_err, HOUSEHOLD_ID};
use crate::ingest::{empirical_marginals, parse_schema, restructure, HouseholdRecord, Marginals, Microdata, Schema};

pub const ORACLE_SCHEMA: &str = "\
n_window = 3
anchor = \"AGEP\"
sort = [\"AGEP:desc\", \"SEX:asc\"]

[[household]]
name = \"TEN\"
categories = [\"Owned\", \"Rented\"]

[[household]]
name = \"VEH\"
categories = [\"0\", \"1\", \"2\", \"3+\"]

[[household]]
name = \"R65\"
categories = [\"Yes\", \"No\"]

[[person]]
name = \"SEX\"
categories = [\"Male\", \"Female\"]

[[person]]
name = \"AGEP\"
categories = [\"0-17\", \"18-34\", \"35-49\", \"50-64\", \"65-79\", \"80 and over\"]
";

pub fn oracle_schema() -> Schema {
    parse_schema(ORACLE_SCHEMA).expect("built-in oracle schema is valid")
}

const N_TYPES: usize = 5;
const YOUNG_SINGLE: usize = 0;
const COUPLE: usize = 1;
const FAMILY: usize = 2;
const SENIOR_SINGLE: usize = 3;
const SENIOR_COUPLE: usize = 4;

const AGE_CHILD: usize = 0;
const AGE_SENIOR: [usize; 2] = [4, 5];

/// Sampler parameters, indexed by household type: young single, couple,
/// family (two adults and a child), senior single, senior couple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub type_weights: [f64; N_TYPES],
    pub owned: [f64; N_TYPES],
    pub vehicles: [[f64; 4]; N_TYPES],
    /// Probability a single householder is female (young, senior).
    pub single_female: [f64; 2],
    /// Probability the second partner has the opposite sex.
    pub mixed_couple: f64,
    /// Adult age bins 18-34, 35-49, 50-64 for couples and family parents.
    pub couple_ages: [f64; 3],
    pub parent_ages: [f64; 3],
    /// Probability a partner shares the householder's age bin.
    pub same_age_bin: f64,
    /// 65-79 vs 80 and over.
    pub senior_ages: [f64; 2],
}

impl OracleParams {
    /// Distribution of the state-level microdata.
    pub fn baseline() -> Self {
        OracleParams {
            type_weights: [0.20, 0.25, 0.30, 0.10, 0.15],
            owned: [0.30, 0.65, 0.75, 0.70, 0.85],
            vehicles: [
                [0.20, 0.60, 0.15, 0.05],
                [0.05, 0.35, 0.45, 0.15],
                [0.03, 0.22, 0.50, 0.25],
                [0.25, 0.60, 0.12, 0.03],
                [0.08, 0.45, 0.40, 0.07],
            ],
            single_female: [0.50, 0.60],
            mixed_couple: 0.9,
            couple_ages: [0.40, 0.35, 0.25],
            parent_ages: [0.30, 0.55, 0.15],
            same_age_bin: 0.7,
            senior_ages: [0.70, 0.30],
        }
    }

    /// A tract that differs from the baseline in type mix, tenure, vehicle
    /// ownership, sex balance and age structure.
    pub fn shifted() -> Self {
        let base = Self::baseline();
        let urban = [0.45, 0.35, 0.15, 0.05];
        let mut vehicles = base.vehicles;
        for row in &mut vehicles {
            for (v, u) in row.iter_mut().zip(urban) {
                *v = 0.5 * *v + 0.5 * u;
            }
        }
        OracleParams {
            type_weights: [0.35, 0.20, 0.15, 0.15, 0.15],
            owned: [0.15, 0.45, 0.60, 0.55, 0.70],
            vehicles,
            single_female: [0.65, 0.80],
            couple_ages: [0.55, 0.30, 0.15],
            senior_ages: [0.55, 0.45],
            ..base
        }
    }
}

fn weighted(w: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(w).expect("oracle weights are positive")
}

fn neighbor_bin(rng: &mut ChaCha8Rng, bin: usize, same: f64) -> usize {
    if rng.random::<f64>() < same {
        return bin;
    }
    // adult bins are 1..=3
    match bin {
        1 => 2,
        3 => 2,
        _ => {
            if rng.random::<bool>() {
                1
            } else {
                3
            }
        }
    }
}

/// Draws `n` households with ids `1..=n`. Person values index the oracle
/// schema's variables (SEX, AGEP); household values are TEN, VEH, R65.
pub fn sample_microdata(params: &OracleParams, n: usize, seed: u64) -> Microdata {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let types = weighted(&params.type_weights);
    let vehicles: Vec<_> = params.vehicles.iter().map(|v| weighted(v)).collect();
    let couple_ages = weighted(&params.couple_ages);
    let parent_ages = weighted(&params.parent_ages);
    let senior_ages = weighted(&params.senior_ages);
    let mut households = Vec::with_capacity(n);
    for id in 1..=n {
        let t = types.sample(&mut rng);
        let sex = |rng: &mut ChaCha8Rng, p_female: f64| usize::from(rng.random::<f64>() < p_female);
        let pair = |rng: &mut ChaCha8Rng, first_age: usize, second_age: usize| {
            let a = sex(rng, 0.5);
            let b = if rng.random::<f64>() < params.mixed_couple { 1 - a } else { a };
            vec![vec![a, first_age], vec![b, second_age]]
        };
        let persons: Vec<Vec<usize>> = match t {
            YOUNG_SINGLE => vec![vec![sex(&mut rng, params.single_female[0]), 1]],
            COUPLE => {
                let a = 1 + couple_ages.sample(&mut rng);
                let b = neighbor_bin(&mut rng, a, params.same_age_bin);
                pair(&mut rng, a, b)
            }
            FAMILY => {
                let a = 1 + parent_ages.sample(&mut rng);
                let b = neighbor_bin(&mut rng, a, params.same_age_bin);
                let mut p = pair(&mut rng, a, b);
                p.push(vec![sex(&mut rng, 0.5), AGE_CHILD]);
                p
            }
            SENIOR_SINGLE => vec![vec![
                sex(&mut rng, params.single_female[1]),
                AGE_SENIOR[senior_ages.sample(&mut rng)],
            ]],
            SENIOR_COUPLE => {
                let a = AGE_SENIOR[senior_ages.sample(&mut rng)];
                let b = AGE_SENIOR[senior_ages.sample(&mut rng)];
                pair(&mut rng, a, b)
            }
            _ => unreachable!(),
        };
        let tenure = usize::from(rng.random::<f64>() >= params.owned[t]);
        let veh = vehicles[t].sample(&mut rng);
        let senior = persons.iter().any(|p| AGE_SENIOR.contains(&p[1]));
        households.push(HouseholdRecord {
            id: id.to_string(),
            values: vec![tenure, veh, usize::from(!senior)],
            persons,
        });
    }
    Microdata { households }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleDataset {
    pub schema: Schema,
    pub microdata: Microdata,
    /// Households drawn from the shifted parameters.
    pub tract: Microdata,
    pub target: Marginals,
}

/// Baseline microdata of `n_households` and a shifted tract of `n_tract`
/// households whose empirical marginals become the target.
pub fn make_oracle(n_households: usize, n_tract: usize, seed: u64) -> Result<OracleDataset> {
    if n_households == 0 || n_tract == 0 {
        return Err(Error::invalid("oracle sizes must be positive"));
    }
    let schema = oracle_schema();
    let microdata = sample_microdata(&OracleParams::baseline(), n_households, seed);
    let tract = sample_microdata(&OracleParams::shifted(), n_tract, seed ^ 0x7ac7_0000_0000_0001);
    let target = empirical_marginals(&restructure(&tract, &schema)?)?;
    Ok(OracleDataset {
        schema,
        microdata,
        tract,
        target,
    })
}

/// Household and person tables in the microdata input format.
pub fn write_microdata<H: Write, P: Write>(md: &Microdata, schema: &Schema, households: H, persons: P) -> Result<()> {
    let mut h = csv::Writer::from_writer(households);
    let mut header = vec![HOUSEHOLD_ID.to_string()];
    header.extend(schema.household_vars.iter().map(|v| v.name.clone()));
    h.write_record(&header).map_err(csv_err)?;
    let mut p = csv::Writer::from_writer(persons);
    let mut header = vec!["person_id".to_string(), HOUSEHOLD_ID.to_string()];
    header.extend(schema.person_vars.iter().map(|v| v.name.clone()));
    p.write_record(&header).map_err(csv_err)?;
    let mut pid = 0usize;
    for rec in &md.households {
        let mut row = vec![rec.id.clone()];
        row.extend(schema.household_vars.iter().zip(&rec.values).map(|(v, &c)| v.categories[c].clone()));
        h.write_record(&row).map_err(csv_err)?;
        for person in &rec.persons {
            pid += 1;
            let mut row = vec![pid.to_string(), rec.id.clone()];
            row.extend(schema.person_vars.iter().zip(person).map(|(v, &c)| v.categories[c].clone()));
            p.write_record(&row).map_err(csv_err)?;
        }
    }
    h.flush().map_err(|e| Error::io("<households>", e))?;
    p.flush().map_err(|e| Error::io("<persons>", e))
}

/// Writes `schema.toml`, `households.csv`, `persons.csv`,
/// `tract_households.csv`, `tract_persons.csv` and `tract_marginals.csv`.
pub fn write_oracle(dataset: &OracleDataset, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| -> Result<(PathBuf, std::io::BufWriter<std::fs::File>)> {
        let path = dir.join(name);
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok((path, std::io::BufWriter::new(f)))
    };
    let (schema_path, mut w) = create("schema.toml")?;
    w.write_all(dataset.schema.to_toml().as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&schema_path, e))?;
    let (hp, hw) = create("households.csv")?;
    let (pp, pw) = create("persons.csv")?;
    write_microdata(&dataset.microdata, &dataset.schema, hw, pw)?;
    let (thp, thw) = create("tract_households.csv")?;
    let (tpp, tpw) = create("tract_persons.csv")?;
    write_microdata(&dataset.tract, &dataset.schema, thw, tpw)?;
    let (mp, mw) = create("tract_marginals.csv")?;
    dataset.target.write_csv(&dataset.schema, mw)?;
    Ok(vec![schema_path, hp, pp, thp, tpp, mp])
}
