//! Latent sampling from the encoder's mean and log-scale heads.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the log-scale head enters the latent sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReparamMode {
    /// `z = μ + ε ⊙ logsig`
    #[default]
    PaperLiteral,
    /// `z = μ + ε ⊙ exp(0.5·logsig)`, logsig read as log-variance
    Standard,
}

impl ReparamMode {
    pub fn code(self) -> u8 {
        match self {
            ReparamMode::PaperLiteral => 0,
            ReparamMode::Standard => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ReparamMode::PaperLiteral),
            1 => Some(ReparamMode::Standard),
            _ => None,
        }
    }
}

impl std::str::FromStr for ReparamMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-literal" => Ok(ReparamMode::PaperLiteral),
            "standard" => Ok(ReparamMode::Standard),
            other => Err(Error::invalid(format!("unknown reparameterization `{other}`"))),
        }
    }
}

fn check(mu: &Array2<f64>, logsig: &Array2<f64>, noise: &Array2<f64>) -> Result<()> {
    if mu.dim() != logsig.dim() || mu.dim() != noise.dim() {
        return Err(Error::shape(format!(
            "reparameterize: mu {:?}, logsig {:?}, noise {:?}",
            mu.dim(),
            logsig.dim(),
            noise.dim()
        )));
    }
    Ok(())
}

pub fn reparameterize(
    mu: &Array2<f64>,
    logsig: &Array2<f64>,
    noise: &Array2<f64>,
    mode: ReparamMode,
) -> Result<Array2<f64>> {
    check(mu, logsig, noise)?;
    let mut z = mu.clone();
    Zip::from(&mut z).and(logsig).and(noise).for_each(|z, &s, &e| {
        *z += match mode {
            ReparamMode::PaperLiteral => e * s,
            ReparamMode::Standard => e * (0.5 * s).exp(),
        }
    });
    Ok(z)
}

/// Returns `(dmu, dlogsig)`.
pub fn reparameterize_backward(
    logsig: &Array2<f64>,
    noise: &Array2<f64>,
    mode: ReparamMode,
    dz: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check(dz, logsig, noise)?;
    let mut dlogsig = dz.clone();
    Zip::from(&mut dlogsig).and(logsig).and(noise).for_each(|d, &s, &e| {
        *d *= match mode {
            ReparamMode::PaperLiteral => e,
            ReparamMode::Standard => 0.5 * e * (0.5 * s).exp(),
        }
    });
    Ok((dz.clone(), dlogsig))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_noise_returns_mean() {
        let mu = array![[0.3, -1.0]];
        let s = array![[2.0, 0.5]];
        let e = Array2::zeros((1, 2));
        for mode in [ReparamMode::PaperLiteral, ReparamMode::Standard] {
            assert_eq!(reparameterize(&mu, &s, &e, mode).unwrap(), mu);
        }
    }

    #[test]
    fn literal_and_standard_values() {
        let z = reparameterize(&array![[1.0]], &array![[2.0]], &array![[1.0]], ReparamMode::PaperLiteral).unwrap();
        assert_eq!(z, array![[3.0]]);
        let z = reparameterize(&array![[0.0]], &array![[0.0]], &array![[1.0]], ReparamMode::Standard).unwrap();
        assert_eq!(z, array![[1.0]]);
    }

    #[test]
    fn length_mismatch() {
        let r = reparameterize(&array![[1.0]], &array![[1.0, 2.0]], &array![[1.0]], ReparamMode::Standard);
        assert!(r.is_err());
    }
}
