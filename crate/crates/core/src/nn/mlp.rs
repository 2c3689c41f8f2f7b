//! Dense layers and residual MLP stacks over a flat parameter slice.
//!
//! Networks here only describe *shape*; parameters live in a caller-owned
//! slice so several sub-networks can share one flat vector (and one Adam
//! state). Layer `l` stores its weights row-major `(out_dim, in_dim)` followed
//! by its bias, at `offsets[l]` inside the network's slice.
//!
//! Batched activations are row-major `(batch, dim)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scalar::{matmul, matmul_at, matmul_bt, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::ReLU => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::ReLU => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Identity => T::one(),
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Shape of one dense layer: `y = activation(W x + b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self { in_dim, out_dim, activation }
    }

    pub fn param_count(&self) -> usize {
        self.out_dim * self.in_dim + self.out_dim
    }

    pub fn weights<'a, T>(&self, params: &'a [T]) -> &'a [T] {
        &params[..self.out_dim * self.in_dim]
    }

    pub fn bias<'a, T>(&self, params: &'a [T]) -> &'a [T] {
        &params[self.out_dim * self.in_dim..self.param_count()]
    }
}

/// A stack of dense layers with optional identity skips.
///
/// Layers are grouped into consecutive blocks of `skip_every` layers. A block
/// whose input and output widths agree adds its input to its output. With
/// `skip_every == 0` the stack is a plain MLP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualMlp {
    layers: Vec<DenseLayer>,
    offsets: Vec<usize>,
    skip_every: usize,
    param_count: usize,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct GradTape<T> {
    batch: usize,
    fingerprint: u64,
    /// Input of every layer, `(batch, in_dim)`.
    inputs: Vec<Vec<T>>,
    /// Post-activation output of every layer, before any skip add.
    outputs: Vec<Vec<T>>,
}

impl<T> GradTape<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// FNV-1a over the bit patterns of a parameter slice.
pub fn fingerprint<T: Scalar>(params: &[T]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        h ^= p.bits();
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ params.len() as u64
}

impl ResidualMlp {
    pub fn new(layers: Vec<DenseLayer>, skip_every: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].out_dim,
                    actual: pair[1].in_dim,
                });
            }
        }
        if layers.iter().any(|l| l.in_dim == 0 || l.out_dim == 0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.param_count();
        }
        Ok(Self { layers, offsets, skip_every, param_count: total })
    }

    /// `depth` layers in total: `in → width`, `depth − 2` hidden `width → width`,
    /// and `width → out`. Hidden layers use ReLU, except that the closing layer
    /// of every skip block is linear so the residual stream can move both ways.
    pub fn stack(
        in_dim: usize,
        width: usize,
        depth: usize,
        out_dim: usize,
        output: Activation,
        skip_every: usize,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidConfig("depth must be positive".into()));
        }
        if depth == 1 {
            return Self::new(vec![DenseLayer::new(in_dim, out_dim, output)], skip_every);
        }
        let mut layers = vec![DenseLayer::new(in_dim, width, Activation::ReLU)];
        for _ in 0..depth - 2 {
            layers.push(DenseLayer::new(width, width, Activation::ReLU));
        }
        layers.push(DenseLayer::new(width, out_dim, output));
        let mut net = Self::new(layers, skip_every)?;
        for (_, last) in net.skip_blocks() {
            net.layers[last].activation = Activation::Identity;
        }
        Ok(net)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn skip_every(&self) -> usize {
        self.skip_every
    }

    /// Parameter slice of layer `l` within this network's slice.
    pub fn layer_params<'a, T>(&self, params: &'a [T], l: usize) -> &'a [T] {
        let start = self.offsets[l];
        &params[start..start + self.layers[l].param_count()]
    }

    /// Index ranges `(first, last)` of the blocks carrying an identity skip.
    pub fn skip_blocks(&self) -> Vec<(usize, usize)> {
        if self.skip_every == 0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut first = 0;
        while first < self.layers.len() {
            let last = (first + self.skip_every).min(self.layers.len()) - 1;
            if self.layers[first].in_dim == self.layers[last].out_dim {
                out.push((first, last));
            }
            first = last + 1;
        }
        out
    }

    /// Uniform fan-in initialization, zero biases.
    ///
    /// The closing layer of each residual block is scaled by
    /// `1/sqrt(#blocks)` so the residual stream variance stays bounded.
    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R, params: &mut [T]) {
        assert_eq!(params.len(), self.param_count);
        let blocks = self.skip_blocks();
        let block_scale = if blocks.is_empty() {
            1.0
        } else {
            1.0 / (blocks.len() as f64).sqrt()
        };
        for (l, layer) in self.layers.iter().enumerate() {
            let gain = match layer.activation {
                Activation::ReLU => 6.0,
                _ => 3.0,
            };
            let mut bound = (gain / layer.in_dim as f64).sqrt();
            if blocks.iter().any(|&(_, last)| last == l) {
                bound *= block_scale;
            }
            let start = self.offsets[l];
            let n_w = layer.out_dim * layer.in_dim;
            for p in &mut params[start..start + n_w] {
                *p = T::of(rng.gen_range(-bound..bound));
            }
            for p in &mut params[start + n_w..start + layer.param_count()] {
                *p = T::zero();
            }
        }
    }

    fn check(&self, params_len: usize, x_len: usize, batch: usize) -> Result<()> {
        if params_len != self.param_count {
            return Err(Error::LengthMismatch { left: params_len, right: self.param_count });
        }
        if x_len != batch * self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: batch * self.in_dim(),
                actual: x_len,
            });
        }
        Ok(())
    }

    fn run<T: Scalar>(
        &self,
        params: &[T],
        x: &[T],
        batch: usize,
        mut record: Option<&mut GradTape<T>>,
    ) -> Vec<T> {
        let blocks = self.skip_blocks();
        let mut h = x.to_vec();
        let mut block_input: Option<Vec<T>> = None;
        for (l, layer) in self.layers.iter().enumerate() {
            if blocks.iter().any(|&(first, _)| first == l) {
                block_input = Some(h.clone());
            }
            let p = self.layer_params(params, l);
            let (w, b) = (layer.weights(p), layer.bias(p));
            let mut z = vec![T::zero(); batch * layer.out_dim];
            for row in z.chunks_exact_mut(layer.out_dim) {
                row.copy_from_slice(b);
            }
            matmul_bt(&h, w, &mut z, batch, layer.in_dim, layer.out_dim, true);
            for v in &mut z {
                *v = layer.activation.apply(*v);
            }
            let mut next = z;
            if let Some(tape) = record.as_deref_mut() {
                tape.outputs.push(next.clone());
                tape.inputs.push(std::mem::take(&mut h));
            }
            if blocks.iter().any(|&(_, last)| last == l) {
                let skip = block_input.take().expect("block input recorded");
                for (o, s) in next.iter_mut().zip(&skip) {
                    *o = *o + *s;
                }
            }
            h = next;
        }
        h
    }

    /// Batched forward pass recording a tape for [`ResidualMlp::backward`].
    pub fn forward<T: Scalar>(
        &self,
        params: &[T],
        x: &[T],
        batch: usize,
    ) -> Result<(Vec<T>, GradTape<T>)> {
        self.check(params.len(), x.len(), batch)?;
        let mut tape = GradTape {
            batch,
            fingerprint: fingerprint(params),
            inputs: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let y = self.run(params, x, batch, Some(&mut tape));
        Ok((y, tape))
    }

    /// Batched forward pass without recording.
    pub fn infer<T: Scalar>(&self, params: &[T], x: &[T], batch: usize) -> Result<Vec<T>> {
        self.check(params.len(), x.len(), batch)?;
        Ok(self.run(params, x, batch, None))
    }

    /// Single-sample forward pass.
    pub fn forward_one<T: Scalar>(&self, params: &[T], x: &[T]) -> Result<Vec<T>> {
        self.infer(params, x, 1)
    }

    /// Accumulates `d loss / d params` into `grads` and returns `d loss / d input`.
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        tape: &GradTape<T>,
        dout: &[T],
        grads: &mut [T],
    ) -> Result<Vec<T>> {
        if tape.fingerprint != fingerprint(params) || tape.inputs.len() != self.layers.len() {
            return Err(Error::StaleTape);
        }
        if grads.len() != self.param_count {
            return Err(Error::LengthMismatch { left: grads.len(), right: self.param_count });
        }
        let batch = tape.batch;
        if dout.len() != batch * self.out_dim() {
            return Err(Error::DimensionMismatch {
                expected: batch * self.out_dim(),
                actual: dout.len(),
            });
        }
        let blocks = self.skip_blocks();
        let mut dh = dout.to_vec();
        let mut skip_grad: Option<Vec<T>> = None;
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            if blocks.iter().any(|&(_, last)| last == l) {
                skip_grad = Some(dh.clone());
            }
            let y = &tape.outputs[l];
            let x = &tape.inputs[l];
            let mut dz = dh;
            for (g, &yv) in dz.iter_mut().zip(y) {
                *g = *g * layer.activation.derivative_from_output(yv);
            }
            let start = self.offsets[l];
            let n_w = layer.out_dim * layer.in_dim;
            let (gw, gb) = grads[start..start + layer.param_count()].split_at_mut(n_w);
            // dW (out×in) += dzᵀ (out×batch) · x (batch×in)
            matmul_at(&dz, x, gw, layer.out_dim, batch, layer.in_dim, true);
            for row in dz.chunks_exact(layer.out_dim) {
                for (b, &g) in gb.iter_mut().zip(row) {
                    *b = *b + g;
                }
            }
            let w = layer.weights(self.layer_params(params, l));
            let mut dx = vec![T::zero(); batch * layer.in_dim];
            matmul(&dz, w, &mut dx, batch, layer.out_dim, layer.in_dim, false);
            if blocks.iter().any(|&(first, _)| first == l) {
                let s = skip_grad.take().expect("skip gradient recorded");
                for (d, g) in dx.iter_mut().zip(&s) {
                    *d = *d + *g;
                }
            }
            dh = dx;
        }
        Ok(dh)
    }
}
