use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::records::csv_err;
use crate::ingest::{encode_onehot, encode_person_rows, EncodedMatrix, RestructuredTable};
use crate::losses::dbce::min_bce_rows;
use crate::losses::PROB_FLOOR;
use crate::par::{map_indexed, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DcrLevel {
    Household,
    Person,
}

/// Distance from each synthetic row to its closest microdata row: the
/// minimum per-column-mean BCE with the synthetic row clamped as the
/// prediction.
pub fn dcr(synthetic: &EncodedMatrix, microdata: &EncodedMatrix) -> Result<Vec<f64>> {
    dcr_with(synthetic, microdata, Exec::default())
}

pub fn dcr_with(synthetic: &EncodedMatrix, microdata: &EncodedMatrix, exec: Exec) -> Result<Vec<f64>> {
    if synthetic.layout.schema.fingerprint() != microdata.layout.schema.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: microdata.layout.schema.fingerprint(),
            found: synthetic.layout.schema.fingerprint(),
        });
    }
    if microdata.n_rows() == 0 {
        return Err(Error::invalid("dcr against empty microdata"));
    }
    Ok(min_bce_rows(&synthetic.values, &microdata.values, exec))
}

/// Household level compares full restructured rows; person level compares
/// each present person joined with its household's variables.
pub fn dcr_table(
    synthetic: &RestructuredTable,
    microdata: &RestructuredTable,
    level: DcrLevel,
    exec: Exec,
) -> Result<Vec<f64>> {
    let (s, m) = match level {
        DcrLevel::Household => (encode_onehot(synthetic)?, encode_onehot(microdata)?),
        DcrLevel::Person => (encode_person_rows(synthetic)?, encode_person_rows(microdata)?),
    };
    if s.layout.schema.fingerprint() != m.layout.schema.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: m.layout.schema.fingerprint(),
            found: s.layout.schema.fingerprint(),
        });
    }
    if m.n_rows() == 0 {
        return Err(Error::invalid("dcr against empty microdata"));
    }
    Ok(onehot_dcr(&s, &m, exec))
}

/// Category index per group of a one-hot row.
fn group_codes(x: &EncodedMatrix) -> Vec<Vec<usize>> {
    x.values
        .rows()
        .into_iter()
        .map(|r| {
            x.layout
                .groups
                .iter()
                .map(|g| g.range().position(|c| r[c] == 1.0).unwrap_or(usize::MAX))
                .collect()
        })
        .collect()
}

/// DCR between exact one-hot matrices. The BCE of a clamped one-hot row
/// against another depends only on the number `k` of differing columns,
/// so the distance is evaluated from `k` and equal distances tie exactly.
fn onehot_dcr(synthetic: &EncodedMatrix, microdata: &EncodedMatrix, exec: Exec) -> Vec<f64> {
    let s = group_codes(synthetic);
    let m = group_codes(microdata);
    let d = synthetic.layout.width as f64;
    let miss = -PROB_FLOOR.ln();
    let hit = -(1.0 - PROB_FLOOR).ln();
    map_indexed(s.len(), exec, |i| {
        let best = m
            .iter()
            .map(|row| row.iter().zip(&s[i]).filter(|(a, b)| a != b).count())
            .min()
            .expect("non-empty microdata");
        let k = 2.0 * best as f64;
        (k * miss + (d - k) * hit) / d
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::invalid("k-s test of an empty sample"));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("NaN in k-s sample".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let s: f64 = (0..6).map(|j| y.powi((2 * j + 1) * (2 * j + 1))).sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        let x = (-2.0 * lambda * lambda).exp();
        2.0 * (x - x.powi(4) + x.powi(9) - x.powi(16))
    };
    q.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value,
/// `Q((√n + 0.12 + 0.11/√n)·D)` for effective size `n = n_a·n_b/(n_a+n_b)`.
pub fn ks_test(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] == x {
            i += 1;
        }
        while j < nb && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let en = ne.sqrt();
    let p_value = if d == 0.0 {
        1.0
    } else {
        kolmogorov_q((en + 0.12 + 0.11 / en) * d)
    };
    Ok(KsResult {
        statistic: d,
        p_value,
        n_a: na,
        n_b: nb,
    })
}

/// Equal-width bins over the pooled range of both samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcrHistogram {
    pub edges: Vec<f64>,
    pub counts_a: Vec<usize>,
    pub counts_b: Vec<usize>,
}

impl DcrHistogram {
    pub fn new(a: &[f64], b: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        let (lo, hi) = a
            .iter()
            .chain(b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid("histogram of empty or non-finite samples"));
        }
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
        let bin = |x: f64| (((x - lo) / width) as usize).min(bins - 1);
        let count = |xs: &[f64]| {
            let mut c = vec![0; bins];
            xs.iter().for_each(|&x| c[bin(x)] += 1);
            c
        };
        Ok(DcrHistogram {
            edges,
            counts_a: count(a),
            counts_b: count(b),
        })
    }

    fn bin_index(&self, x: f64) -> usize {
        let bins = self.counts_a.len();
        let (lo, hi) = (self.edges[0], self.edges[bins]);
        let width = (hi - lo) / bins as f64;
        if width <= 0.0 {
            return 0;
        }
        (((x - lo) / width) as usize).min(bins - 1)
    }

    pub fn write_csv<W: Write>(&self, out: W, label_a: &str, label_b: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_start", "bin_end", label_a, label_b]).map_err(csv_err)?;
        for k in 0..self.counts_a.len() {
            w.write_record([
                self.edges[k].to_string(),
                self.edges[k + 1].to_string(),
                self.counts_a[k].to_string(),
                self.counts_b[k].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<histogram>", e))
    }
}

/// K-S test after replacing each value by its bin index.
pub fn ks_test_binned(a: &[f64], b: &[f64], bins: usize) -> Result<KsResult> {
    let h = DcrHistogram::new(a, b, bins)?;
    let idx = |xs: &[f64]| xs.iter().map(|&x| h.bin_index(x) as f64).collect::<Vec<_>>();
    ks_test(&idx(a), &idx(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelComparison {
    pub level: DcrLevel,
    pub distances_a: Vec<f64>,
    pub distances_b: Vec<f64>,
    pub histogram: DcrHistogram,
    pub ks: KsResult,
    pub binned: bool,
}

pub fn compare_dcr(level: DcrLevel, a: Vec<f64>, b: Vec<f64>, bins: usize, binned: bool) -> Result<LevelComparison> {
    let ks = if binned {
        ks_test_binned(&a, &b, bins)?
    } else {
        ks_test(&a, &b)?
    };
    Ok(LevelComparison {
        level,
        histogram: DcrHistogram::new(&a, &b, bins)?,
        distances_a: a,
        distances_b: b,
        ks,
        binned,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcrReport {
    pub label_a: String,
    pub label_b: String,
    pub alpha: f64,
    pub household: LevelComparison,
    pub person: LevelComparison,
}

impl DcrReport {
    /// True when neither level rejects equality at `alpha`.
    pub fn no_significant_difference(&self) -> bool {
        self.household.ks.p_value >= self.alpha && self.person.ks.p_value >= self.alpha
    }

    pub fn write_distances_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["level", "inventory", "record", "dcr"]).map_err(csv_err)?;
        for lc in [&self.household, &self.person] {
            let level = match lc.level {
                DcrLevel::Household => "household",
                DcrLevel::Person => "person",
            };
            for (label, ds) in [(&self.label_a, &lc.distances_a), (&self.label_b, &lc.distances_b)] {
                for (k, d) in ds.iter().enumerate() {
                    w.write_record([level, label.as_str(), &(k + 1).to_string(), &d.to_string()])
                        .map_err(csv_err)?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<dcr>", e))
    }

    pub fn summary_line(&self) -> String {
        format!(
            "dcr k-s ({} vs {}): household D={:.4} p={:.4}, person D={:.4} p={:.4}",
            self.label_a,
            self.label_b,
            self.household.ks.statistic,
            self.household.ks.p_value,
            self.person.ks.statistic,
            self.person.ks.p_value
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_dcr_matches_matrix_dcr() {
        use crate::ingest::restructure;
        use crate::oracle::{oracle_schema, sample_microdata, OracleParams};
        let schema = oracle_schema();
        let micro = restructure(&sample_microdata(&OracleParams::baseline(), 60, 1), &schema).unwrap();
        let syn = restructure(&sample_microdata(&OracleParams::shifted(), 40, 2), &schema).unwrap();
        for level in [DcrLevel::Household, DcrLevel::Person] {
            let fast = dcr_table(&syn, &micro, level, Exec::Sequential).unwrap();
            let (s, m) = match level {
                DcrLevel::Household => (encode_onehot(&syn).unwrap(), encode_onehot(&micro).unwrap()),
                DcrLevel::Person => (encode_person_rows(&syn).unwrap(), encode_person_rows(&micro).unwrap()),
            };
            let slow = dcr(&s, &m).unwrap();
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12 + 1e-9 * b, "{a} vs {b}");
            }
            let own = dcr_table(&micro, &micro, level, Exec::Parallel).unwrap();
            assert!(own.iter().all(|&x| x == own[0] && x <= 1e-5));
        }
    }

    #[test]
    fn self_and_disjoint() {
        let a = [0.3, 0.1, 0.2, 0.2];
        let r = ks_test(&a, &a).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = ks_test(&[1.0, 2.0], &[3.0, 4.0, 5.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(ks_test(&[], &a).is_err());
    }

    #[test]
    fn ties_across_samples() {
        // F_a jumps to 1 at 1.0; F_b is 1/2 there
        let r = ks_test(&[1.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-15);
    }

    #[test]
    fn q_branches_agree_and_bound() {
        let lo = kolmogorov_q(1.18 - 1e-9);
        let hi = kolmogorov_q(1.18 + 1e-9);
        assert!((lo - hi).abs() < 1e-6);
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
        assert_eq!(kolmogorov_q(0.0), 1.0);
        assert!(kolmogorov_q(5.0) < 1e-20);
    }

    #[test]
    fn histogram_counts_everything() {
        let h = DcrHistogram::new(&[0.0, 0.5, 1.0], &[0.25], 4).unwrap();
        assert_eq!(h.counts_a.iter().sum::<usize>(), 3);
        assert_eq!(h.counts_a, vec![1, 0, 1, 1]);
        assert_eq!(h.counts_b, vec![0, 1, 0, 0]);
    }
}
