use std::io::Write;

use serde::{Deserialize, Serialize};

use super::chisq::chi_square_test;
use crate::error::{Error, Result};
use crate::ingest::records::csv_err;
use crate::ingest::{Marginals, Schema};
use crate::losses::smoothed_kl;

pub const METRIC_EPSILON: f64 = 1e-6;

/// Root mean squared componentwise difference.
pub fn rmse_metric(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("rmse: lengths {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::invalid("rmse of empty vectors"));
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((s / a.len() as f64).sqrt())
}

/// `Σ (s+ε) ln((s+ε)/(r+ε))`, synthetic against reference.
pub fn kl_metric(synthetic: &[f64], reference: &[f64], epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("kl epsilon must be positive, got {epsilon}")));
    }
    smoothed_kl(synthetic, reference, epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMetrics {
    pub variable: String,
    pub rmse: f64,
    pub kl: f64,
    pub p_value: f64,
    pub baseline_rmse: Option<f64>,
    pub baseline_kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variables: Vec<VariableMetrics>,
    pub mean_rmse: f64,
    pub mean_kl: f64,
    pub baseline_mean_rmse: Option<f64>,
    pub baseline_mean_kl: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Per-variable RMSE, KL and chi-square p-value of `synthetic` against
/// `reference`. Chi-square counts are the synthetic proportions times the
/// synthetic household (or person) total. `baseline` adds the same RMSE and
/// KL columns for a second distribution, usually the microdata.
pub fn compare_marginals(
    schema: &Schema,
    synthetic: &Marginals,
    reference: &Marginals,
    baseline: Option<&Marginals>,
    epsilon: f64,
) -> Result<MetricsReport> {
    synthetic.check_against(schema)?;
    reference.check_against(schema)?;
    if let Some(b) = baseline {
        b.check_against(schema)?;
    }
    let names = schema.variable_names();
    let n_household = schema.household_vars.len();
    let person_total = synthetic.n_persons.unwrap_or(synthetic.n_households) as f64;
    let baseline_vectors: Option<Vec<&Vec<f64>>> = baseline.map(|b| b.vectors().collect());
    let mut variables = Vec::with_capacity(names.len());
    for (k, ((name, s), r)) in names.iter().zip(synthetic.vectors()).zip(reference.vectors()).enumerate() {
        let total = if k < n_household {
            synthetic.n_households as f64
        } else {
            person_total
        };
        let counts: Vec<f64> = s.iter().map(|p| p * total).collect();
        let (baseline_rmse, baseline_kl) = match &baseline_vectors {
            Some(bv) => (Some(rmse_metric(bv[k], r)?), Some(kl_metric(bv[k], r, epsilon)?)),
            None => (None, None),
        };
        variables.push(VariableMetrics {
            variable: name.to_string(),
            rmse: rmse_metric(s, r)?,
            kl: kl_metric(s, r, epsilon)?,
            p_value: chi_square_test(&counts, r)?.p_value,
            baseline_rmse,
            baseline_kl,
        });
    }
    let baseline_mean_rmse = baseline.map(|_| mean(variables.iter().filter_map(|v| v.baseline_rmse)));
    let baseline_mean_kl = baseline.map(|_| mean(variables.iter().filter_map(|v| v.baseline_kl)));
    Ok(MetricsReport {
        mean_rmse: mean(variables.iter().map(|v| v.rmse)),
        mean_kl: mean(variables.iter().map(|v| v.kl)),
        variables,
        baseline_mean_rmse,
        baseline_mean_kl,
    })
}

impl MetricsReport {
    pub fn get(&self, variable: &str) -> Option<&VariableMetrics> {
        self.variables.iter().find(|v| v.variable == variable)
    }

    /// One row per metric, one column per variable, then the mean.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["metric".to_string()];
        header.extend(self.variables.iter().map(|v| v.variable.clone()));
        header.push("Mean".into());
        w.write_record(&header).map_err(csv_err)?;
        let mut line = |label: &str, values: Vec<Option<f64>>, m: Option<f64>| -> Result<()> {
            let mut rec = vec![label.to_string()];
            rec.extend(values.into_iter().map(|v| v.map(fmt).unwrap_or_default()));
            rec.push(m.map(fmt).unwrap_or_default());
            w.write_record(&rec).map_err(csv_err)
        };
        line("RMSE", self.variables.iter().map(|v| Some(v.rmse)).collect(), Some(self.mean_rmse))?;
        line("KL", self.variables.iter().map(|v| Some(v.kl)).collect(), Some(self.mean_kl))?;
        line("p-value", self.variables.iter().map(|v| Some(v.p_value)).collect(), None)?;
        if self.baseline_mean_rmse.is_some() {
            line(
                "Baseline RMSE",
                self.variables.iter().map(|v| v.baseline_rmse).collect(),
                self.baseline_mean_rmse,
            )?;
            line(
                "Baseline KL",
                self.variables.iter().map(|v| v.baseline_kl).collect(),
                self.baseline_mean_kl,
            )?;
        }
        w.flush().map_err(|e| Error::io("<metrics>", e))
    }
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.6e}")
}
