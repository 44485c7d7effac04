//! Layer primitives with analytic forward and backward passes.

use std::ops::Range;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Fully connected layer, `y = x·Wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    /// `out × in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Affine {
    /// Uniform init in ±sqrt(6/(fan_in+fan_out)), zero bias.
    pub fn init<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound));
        Affine {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::shape(format!(
                "affine expects width {}, got {}",
                self.in_dim(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.weight.t()) + &self.bias)
    }

    /// Returns `(dx, dW, db)`.
    pub fn backward(&self, input: &Array2<f64>, dy: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
        let dx = dy.dot(&self.weight);
        let dw = dy.t().dot(input);
        let db = dy.sum_axis(Axis(0));
        (dx, dw, db)
    }
}

/// Per-feature batch normalization with running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Values saved by a batch-norm forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub x_hat: Array2<f64>,
    pub inv_std: Array1<f64>,
    /// Batch mean and unbiased variance, present in train mode.
    pub batch_stats: Option<(Array1<f64>, Array1<f64>)>,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        BatchNorm {
            scale: Array1::ones(width),
            shift: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn width(&self) -> usize {
        self.scale.len()
    }

    pub fn forward(&self, x: &Array2<f64>, train: bool) -> Result<(Array2<f64>, BatchNormCache)> {
        if x.ncols() != self.width() {
            return Err(Error::shape(format!(
                "batch norm expects width {}, got {}",
                self.width(),
                x.ncols()
            )));
        }
        let (mean, var, batch_stats) = if train {
            let n = x.nrows();
            if n < 2 {
                return Err(Error::invalid("batch norm in train mode needs at least 2 rows"));
            }
            let mean = x.mean_axis(Axis(0)).expect("non-empty");
            let centered = x - &mean;
            let var = (&centered * &centered).mean_axis(Axis(0)).expect("non-empty");
            let unbiased = &var * (n as f64 / (n - 1) as f64);
            (mean.clone(), var, Some((mean, unbiased)))
        } else {
            (self.running_mean.clone(), self.running_var.clone(), None)
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let x_hat = (x - &mean) * &inv_std;
        let y = &x_hat * &self.scale + &self.shift;
        Ok((
            y,
            BatchNormCache {
                x_hat,
                inv_std,
                batch_stats,
            },
        ))
    }

    /// Returns `(dx, dscale, dshift)`.
    pub fn backward(&self, cache: &BatchNormCache, dy: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let dshift = dy.sum_axis(Axis(0));
        let dscale = (dy * &cache.x_hat).sum_axis(Axis(0));
        let g = &self.scale * &cache.inv_std;
        let dx = if cache.batch_stats.is_some() {
            let n = dy.nrows() as f64;
            // dx = g/n · (n·dy − Σdy − x̂·Σ(dy·x̂))
            let mut dx = dy * n - &dshift;
            dx = dx - &cache.x_hat * &dscale;
            dx * &(g / n)
        } else {
            dy * &g
        };
        (dx, dscale, dshift)
    }

    pub fn commit(&mut self, cache: &BatchNormCache) {
        if let Some((mean, var)) = &cache.batch_stats {
            let m = self.momentum;
            Zip::from(&mut self.running_mean)
                .and(mean)
                .for_each(|r, &b| *r = (1.0 - m) * *r + m * b);
            Zip::from(&mut self.running_var)
                .and(var)
                .for_each(|r, &b| *r = (1.0 - m) * *r + m * b);
        }
    }
}

pub fn relu_forward(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn relu_backward(input: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(input).for_each(|d, &x| {
        if x <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

pub fn validate_groups(groups: &[Range<usize>], width: usize) -> Result<()> {
    for g in groups {
        if g.is_empty() {
            return Err(Error::invalid("empty softmax group"));
        }
        if g.end > width {
            return Err(Error::shape(format!("group {g:?} exceeds width {width}")));
        }
    }
    Ok(())
}

/// Softmax applied independently within each column group.
pub fn group_softmax_forward(x: &Array2<f64>, groups: &[Range<usize>]) -> Result<Array2<f64>> {
    validate_groups(groups, x.ncols())?;
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        for g in groups {
            let mut seg = row.slice_mut(ndarray::s![g.clone()]);
            let max = seg.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            seg.mapv_inplace(|v| (v - max).exp());
            let sum = seg.sum();
            seg.mapv_inplace(|v| v / sum);
        }
    }
    Ok(y)
}

/// Jacobian-vector product: `dx = y ⊙ (dy − Σ_group dy·y)`.
pub fn group_softmax_backward(output: &Array2<f64>, dy: &Array2<f64>, groups: &[Range<usize>]) -> Array2<f64> {
    let mut dx = Array2::zeros(dy.raw_dim());
    for ((mut d, y), g_row) in dx.rows_mut().into_iter().zip(output.rows()).zip(dy.rows()) {
        for g in groups {
            let ys = y.slice(ndarray::s![g.clone()]);
            let gs = g_row.slice(ndarray::s![g.clone()]);
            let dot: f64 = ys.iter().zip(gs.iter()).map(|(a, b)| a * b).sum();
            let mut ds = d.slice_mut(ndarray::s![g.clone()]);
            Zip::from(&mut ds).and(&ys).and(&gs).for_each(|o, &yv, &gv| *o = yv * (gv - dot));
        }
    }
    dx
}
