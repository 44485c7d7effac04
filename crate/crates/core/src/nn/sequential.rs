//! Layer stacks, the recorded forward pass and its reverse-order backward.

use std::ops::Range;

use ndarray::Array2;

use super::layers::{
    group_softmax_backward, group_softmax_forward, relu_backward, relu_forward, Affine, BatchNorm,
    BatchNormCache,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Affine(Affine),
    BatchNorm(BatchNorm),
    Relu,
    GroupSoftmax(Vec<Range<usize>>),
}

impl Layer {
    fn n_param_blocks(&self) -> usize {
        match self {
            Layer::Affine(_) | Layer::BatchNorm(_) => 2,
            _ => 0,
        }
    }
}

/// What a primitive saved during forward for its backward.
#[derive(Debug, Clone)]
enum Record {
    Affine { input: Array2<f64> },
    BatchNorm(BatchNormCache),
    Relu { input: Array2<f64> },
    GroupSoftmax { output: Array2<f64> },
}

/// Ordered record of one forward pass through a [`Sequential`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    records: Vec<Record>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Parameter gradients laid out like [`Sequential::param_blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    pub fn forward(&self, x: &Array2<f64>, mode: Mode) -> Result<(Array2<f64>, Tape)> {
        let mut h = x.clone();
        let mut tape = Tape {
            records: Vec::with_capacity(self.layers.len()),
        };
        for layer in &self.layers {
            let (next, record) = match layer {
                Layer::Affine(a) => (a.forward(&h)?, Record::Affine { input: h }),
                Layer::BatchNorm(bn) => {
                    let (y, cache) = bn.forward(&h, mode == Mode::Train)?;
                    (y, Record::BatchNorm(cache))
                }
                Layer::Relu => (relu_forward(&h), Record::Relu { input: h }),
                Layer::GroupSoftmax(groups) => {
                    let y = group_softmax_forward(&h, groups)?;
                    (y.clone(), Record::GroupSoftmax { output: y })
                }
            };
            tape.records.push(record);
            h = next;
        }
        Ok((h, tape))
    }

    /// Forward without keeping a tape.
    pub fn infer(&self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Affine(a) => a.forward(&h)?,
                Layer::BatchNorm(bn) => bn.forward(&h, mode == Mode::Train)?.0,
                Layer::Relu => relu_forward(&h),
                Layer::GroupSoftmax(groups) => group_softmax_forward(&h, groups)?,
            };
        }
        Ok(h)
    }

    /// Walks the tape in reverse, adds parameter gradients into `grads` and
    /// returns the gradient with respect to the input.
    pub fn backward(&self, tape: &Tape, dy: Array2<f64>, grads: &mut Gradients) -> Result<Array2<f64>> {
        if tape.records.len() != self.layers.len() {
            return Err(Error::shape("tape does not belong to this network"));
        }
        if grads.blocks.len() != self.n_param_blocks() {
            return Err(Error::shape("gradient buffer does not belong to this network"));
        }
        let mut block = grads.blocks.len();
        let mut d = dy;
        for (layer, record) in self.layers.iter().zip(&tape.records).rev() {
            d = match (layer, record) {
                (Layer::Affine(a), Record::Affine { input }) => {
                    let (dx, dw, db) = a.backward(input, &d);
                    block -= 2;
                    accumulate(&mut grads.blocks[block], dw.iter());
                    accumulate(&mut grads.blocks[block + 1], db.iter());
                    dx
                }
                (Layer::BatchNorm(bn), Record::BatchNorm(cache)) => {
                    let (dx, dscale, dshift) = bn.backward(cache, &d);
                    block -= 2;
                    accumulate(&mut grads.blocks[block], dscale.iter());
                    accumulate(&mut grads.blocks[block + 1], dshift.iter());
                    dx
                }
                (Layer::Relu, Record::Relu { input }) => relu_backward(input, &d),
                (Layer::GroupSoftmax(groups), Record::GroupSoftmax { output }) => {
                    group_softmax_backward(output, &d, groups)
                }
                _ => return Err(Error::shape("tape record does not match layer")),
            };
        }
        Ok(d)
    }

    /// Folds train-mode batch statistics into the running statistics.
    pub fn commit_running_stats(&mut self, tape: &Tape) {
        for (layer, record) in self.layers.iter_mut().zip(&tape.records) {
            if let (Layer::BatchNorm(bn), Record::BatchNorm(cache)) = (layer, record) {
                bn.commit(cache);
            }
        }
    }

    pub fn n_param_blocks(&self) -> usize {
        self.layers.iter().map(Layer::n_param_blocks).sum()
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            blocks: self.param_blocks().iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Trainable parameters: affine weight (row-major) and bias, batch-norm
    /// scale and shift, in layer order.
    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Affine(a) => {
                    out.push(a.weight.as_slice().expect("standard layout"));
                    out.push(a.bias.as_slice().expect("standard layout"));
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.scale.as_slice().expect("standard layout"));
                    out.push(bn.shift.as_slice().expect("standard layout"));
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Affine(a) => {
                    out.push(a.weight.as_slice_mut().expect("standard layout"));
                    out.push(a.bias.as_slice_mut().expect("standard layout"));
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.scale.as_slice_mut().expect("standard layout"));
                    out.push(bn.shift.as_slice_mut().expect("standard layout"));
                }
                _ => {}
            }
        }
        out
    }

    /// Running batch-norm statistics (mean, variance per layer).
    pub fn stat_blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::BatchNorm(bn) = layer {
                out.push(bn.running_mean.as_slice().expect("standard layout"));
                out.push(bn.running_var.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn stat_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::BatchNorm(bn) = layer {
                out.push(bn.running_mean.as_slice_mut().expect("standard layout"));
                out.push(bn.running_var.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.param_blocks().iter().map(|b| b.len()).sum()
    }

    /// Copies a flat parameter vector into the blocks.
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::shape("flat parameter length"));
        }
        let mut offset = 0;
        for block in self.param_blocks_mut() {
            let n = block.len();
            block.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_blocks().into_iter().flatten().copied().collect()
    }
}

fn accumulate<'a>(dst: &mut [f64], src: impl Iterator<Item = &'a f64>) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gradients_accumulate_additively() {
        let net = Sequential::new(vec![Layer::Affine(Affine {
            weight: array![[1.0, 2.0]],
            bias: array![0.0],
        })]);
        let x = array![[1.0, 1.0]];
        let (_, tape) = net.forward(&x, Mode::Train).unwrap();
        let mut g = net.zero_grads();
        net.backward(&tape, array![[1.0]], &mut g).unwrap();
        net.backward(&tape, array![[1.0]], &mut g).unwrap();
        assert_eq!(g.blocks[0], vec![2.0, 2.0]);
        assert_eq!(g.blocks[1], vec![2.0]);
    }

    #[test]
    fn foreign_tape_rejected() {
        let a = Sequential::new(vec![Layer::Relu]);
        let b = Sequential::new(vec![Layer::Relu, Layer::Relu]);
        let (_, tape) = a.forward(&array![[1.0]], Mode::Eval).unwrap();
        let mut g = b.zero_grads();
        assert!(b.backward(&tape, array![[1.0]], &mut g).is_err());
    }
}
