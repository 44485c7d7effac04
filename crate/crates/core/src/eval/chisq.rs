use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Minimum expected count before a cell is pooled into the tail bucket.
pub const MIN_EXPECTED: f64 = 5.0;
const SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Cells pooled into the tail bucket.
    pub merged_cells: usize,
}

/// Pearson goodness of fit of `observed` counts against `expected`
/// proportions scaled to the observed total.
///
/// Cells that are zero in both inputs are structural and dropped. Zero
/// expected proportions with nonzero observations are smoothed. Cells with
/// expected count below 5 are pooled into one tail bucket.
pub fn chi_square_test(observed: &[f64], expected: &[f64]) -> Result<ChiSquare> {
    if observed.len() != expected.len() {
        return Err(Error::shape(format!(
            "chi-square: {} observed vs {} expected cells",
            observed.len(),
            expected.len()
        )));
    }
    if observed.iter().chain(expected).any(|x| *x < 0.0 || !x.is_finite()) {
        return Err(Error::invalid("chi-square inputs must be finite and non-negative"));
    }
    let total: f64 = observed.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("chi-square: all observations are zero"));
    }
    let cells: Vec<(f64, f64)> = observed
        .iter()
        .zip(expected)
        .filter(|(o, e)| **o > 0.0 || **e > 0.0)
        .map(|(&o, &e)| (o, if e > 0.0 { e } else { SMOOTHING }))
        .collect();
    let mass: f64 = cells.iter().map(|c| c.1).sum();
    let mut kept: Vec<(f64, f64)> = Vec::new();
    let mut tail = (0.0, 0.0);
    let mut merged_cells = 0;
    for &(o, p) in &cells {
        let e = p / mass * total;
        if e < MIN_EXPECTED {
            tail.0 += o;
            tail.1 += e;
            merged_cells += 1;
        } else {
            kept.push((o, e));
        }
    }
    if merged_cells > 0 {
        if tail.1 < MIN_EXPECTED && !kept.is_empty() {
            let smallest = (0..kept.len())
                .min_by(|&a, &b| kept[a].1.total_cmp(&kept[b].1))
                .expect("non-empty");
            kept[smallest].0 += tail.0;
            kept[smallest].1 += tail.1;
            merged_cells += 1;
        } else {
            kept.push(tail);
        }
    }
    let df = kept.len().saturating_sub(1);
    let mut statistic: f64 = kept.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    // rounding in p·total, not a real discrepancy
    if statistic <= 64.0 * f64::EPSILON * total {
        statistic = 0.0;
    }
    let p_value = if df == 0 || statistic == 0.0 {
        1.0
    } else {
        ChiSquared::new(df as f64)
            .map_err(|e| Error::invalid(e.to_string()))?
            .sf(statistic)
    };
    Ok(ChiSquare {
        statistic,
        df,
        p_value,
        merged_cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_gives_one() {
        let obs = [12.0, 30.0, 58.0, 0.0];
        let props: Vec<f64> = obs.iter().map(|o| o / 100.0).collect();
        let r = chi_square_test(&obs, &props).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn hand_evaluated_sixty_four() {
        let r = chi_square_test(&[10.0, 90.0], &[0.5, 0.5]).unwrap();
        assert!((r.statistic - 64.0).abs() < 1e-12);
        assert_eq!(r.df, 1);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn sparse_cells_pooled() {
        let r = chi_square_test(&[50.0, 47.0, 2.0, 1.0], &[0.5, 0.47, 0.02, 0.01]).unwrap();
        assert_eq!(r.merged_cells, 3);
        assert_eq!(r.df, 1);
    }

    #[test]
    fn zero_observations_rejected() {
        assert!(chi_square_test(&[0.0, 0.0], &[0.5, 0.5]).is_err());
        assert!(chi_square_test(&[1.0], &[0.5, 0.5]).is_err());
    }
}
