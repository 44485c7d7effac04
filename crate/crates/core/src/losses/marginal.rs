//! Soft marginals of a decoded batch and the RMSE against tract targets.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ingest::{ColumnLayout, GroupOwner, Marginals};

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalLoss {
    pub value: f64,
    pub grad: Array2<f64>,
    pub soft: Marginals,
}

struct Soft {
    household: Vec<Vec<f64>>,
    /// Per person variable: unnormalized category mass and expected person count.
    person_mass: Vec<Vec<f64>>,
    person_count: Vec<f64>,
}

fn accumulate(probs: &Array2<f64>, layout: &ColumnLayout) -> Result<Soft> {
    if probs.ncols() != layout.width {
        return Err(Error::shape(format!(
            "batch width {} vs layout width {}",
            probs.ncols(),
            layout.width
        )));
    }
    let schema = &layout.schema;
    let n_t = probs.nrows() as f64;
    let mut household: Vec<Vec<f64>> = schema.household_vars.iter().map(|v| vec![0.0; v.n_categories()]).collect();
    let mut person_mass: Vec<Vec<f64>> =
        schema.person_vars.iter().map(|v| vec![0.0; v.n_categories() - 1]).collect();
    let mut person_count = vec![0.0; schema.person_vars.len()];
    for g in &layout.groups {
        for (k, c) in g.range().enumerate() {
            let col_sum: f64 = probs.column(c).sum();
            match g.owner {
                GroupOwner::Household => household[g.var][k] += col_sum / n_t,
                GroupOwner::Slot(_) => {
                    if k + 1 == g.width {
                        person_count[g.var] += probs.nrows() as f64 - col_sum;
                    } else {
                        person_mass[g.var][k] += col_sum;
                    }
                }
            }
        }
    }
    Ok(Soft {
        household,
        person_mass,
        person_count,
    })
}

/// Expected marginals: household proportions averaged over rows; person
/// proportions as expected category mass over expected present persons.
pub fn soft_marginals(probs: &Array2<f64>, layout: &ColumnLayout) -> Result<Marginals> {
    let soft = accumulate(probs, layout)?;
    build(probs.nrows(), soft)
}

fn build(n_rows: usize, soft: Soft) -> Result<Marginals> {
    if let Some(c) = soft.person_count.iter().find(|&&c| c < 1e-6) {
        return Err(Error::invalid(format!("expected person mass {c} is below 1e-6")));
    }
    let person = soft
        .person_mass
        .iter()
        .zip(&soft.person_count)
        .map(|(m, &c)| m.iter().map(|x| x / c).collect())
        .collect();
    Ok(Marginals {
        household: soft.household,
        person,
        n_households: n_rows,
        n_persons: soft.person_count.first().map(|c| c.round() as usize),
    })
}

/// RMSE between the batch's soft marginals and the targets, concatenated
/// over all variables, with its gradient with respect to `probs`.
pub fn marginal_rmse_loss(probs: &Array2<f64>, targets: &Marginals, layout: &ColumnLayout) -> Result<MarginalLoss> {
    targets.check_against(&layout.schema)?;
    let raw = accumulate(probs, layout)?;
    let counts = raw.person_count.clone();
    let masses = raw.person_mass.clone();
    let soft = build(probs.nrows(), raw)?;
    let generated = soft.flatten();
    let target = targets.flatten();
    let k = generated.len() as f64;
    let mse: f64 = generated.iter().zip(&target).map(|(g, t)| (g - t).powi(2)).sum::<f64>() / k;
    let value = mse.sqrt();

    // dL/dg for every marginal entry; zero at the (non-differentiable) optimum
    let scale = if value > 0.0 { 1.0 / (k * value) } else { 0.0 };
    let mut offset = 0;
    let mut d_house = Vec::new();
    for h in &soft.household {
        d_house.push((0..h.len()).map(|c| scale * (generated[offset + c] - target[offset + c])).collect::<Vec<_>>());
        offset += h.len();
    }
    let mut d_person = Vec::new();
    for p in &soft.person {
        d_person.push((0..p.len()).map(|c| scale * (generated[offset + c] - target[offset + c])).collect::<Vec<_>>());
        offset += p.len();
    }

    // column-constant gradient for each encoded column
    let n_t = probs.nrows() as f64;
    let mut col_grad = vec![0.0; layout.width];
    for g in &layout.groups {
        for (k, c) in g.range().enumerate() {
            col_grad[c] = match g.owner {
                GroupOwner::Household => d_house[g.var][k] / n_t,
                GroupOwner::Slot(_) => {
                    let count = counts[g.var];
                    if k + 1 == g.width {
                        // ∂(m_c / count)/∂p_NA = m_c / count²
                        masses[g.var]
                            .iter()
                            .zip(&d_person[g.var])
                            .map(|(m, d)| d * m / (count * count))
                            .sum()
                    } else {
                        d_person[g.var][k] / count
                    }
                }
            };
        }
    }
    let grad = Array2::from_shape_fn(probs.raw_dim(), |(_, c)| col_grad[c]);
    Ok(MarginalLoss { value, grad, soft })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_schema;
    use ndarray::array;

    fn layout() -> ColumnLayout {
        let s = parse_schema(
            "n_window = 2\n[[household]]\nname = \"TEN\"\ncategories = [\"Owned\", \"Rented\"]\n\
             [[person]]\nname = \"SEX\"\ncategories = [\"Male\", \"Female\"]\n",
        )
        .unwrap();
        ColumnLayout::new(&s).unwrap()
    }

    fn targets(ten: [f64; 2], sex: [f64; 2]) -> Marginals {
        Marginals {
            household: vec![ten.to_vec()],
            person: vec![sex.to_vec()],
            n_households: 2,
            n_persons: None,
        }
    }

    #[test]
    fn exact_match_is_zero() {
        let p = array![[1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0], [0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]];
        let l = marginal_rmse_loss(&p, &targets([0.5, 0.5], [0.5, 0.5]), &layout()).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn hand_evaluated_tenth_offset() {
        // TEN and SEX both (0.6, 0.4) against (0.5, 0.5)
        let p = array![[0.6, 0.4, 0.6, 0.4, 0.0, 0.0, 0.0, 1.0]];
        let l = marginal_rmse_loss(&p, &targets([0.5, 0.5], [0.5, 0.5]), &layout()).unwrap();
        assert!((l.value - 0.1).abs() < 1e-15);
    }

    #[test]
    fn row_order_invariant() {
        let p = array![[0.6, 0.4, 0.6, 0.3, 0.1, 0.2, 0.2, 0.6], [0.1, 0.9, 0.3, 0.3, 0.4, 0.5, 0.1, 0.4]];
        let q = array![[0.1, 0.9, 0.3, 0.3, 0.4, 0.5, 0.1, 0.4], [0.6, 0.4, 0.6, 0.3, 0.1, 0.2, 0.2, 0.6]];
        let t = targets([0.3, 0.7], [0.2, 0.8]);
        let a = marginal_rmse_loss(&p, &t, &layout()).unwrap().value;
        let b = marginal_rmse_loss(&q, &t, &layout()).unwrap().value;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn all_na_is_an_error() {
        let p = array![[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]];
        assert!(marginal_rmse_loss(&p, &targets([0.5, 0.5], [0.5, 0.5]), &layout()).is_err());
    }
}
