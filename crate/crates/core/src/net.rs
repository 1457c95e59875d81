//! Fully-connected classifier with hand-written forward and backward passes.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{AdsError, Result};
use crate::probtransform::Logits;

const CHECKPOINT_MAGIC: &[u8; 8] = b"ADSNET\0\0";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// `N(0, 1/fan_in)`.
    Normal,
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    Uniform,
    /// Every parameter zero.
    Zero,
    /// Hidden layers `Normal`, output layer zero: logits start at exactly 0
    /// but the network can still learn.
    ZeroOutput,
}

impl InitScheme {
    pub fn name(self) -> &'static str {
        match self {
            InitScheme::Normal => "normal",
            InitScheme::Uniform => "uniform",
            InitScheme::Zero => "zero",
            InitScheme::ZeroOutput => "zero_output",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normal" => Some(InitScheme::Normal),
            "uniform" => Some(InitScheme::Uniform),
            "zero" => Some(InitScheme::Zero),
            "zero_output" => Some(InitScheme::ZeroOutput),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    /// Input, hidden..., output widths.
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub init: InitScheme,
}

/// One affine map; `weights` is row-major `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Layer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub dims: Vec<usize>,
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub seed: u64,
}

/// Activations recorded by a forward pass, consumed by [`Net::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `layer_inputs[l]` is the input to layer `l`; the first is `x` itself.
    layer_inputs: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn input(&self) -> &[f64] {
        &self.layer_inputs[0]
    }
}

/// Gradients (or velocities) laid out like the parameters of a [`Net`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Net) -> Self {
        Gradients {
            layers: net.layers.iter().map(|l| Layer::zeros(l.in_dim, l.out_dim)).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += scale * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

/// Builds a network with seeded weights and zero biases.
pub fn init(spec: &NetSpec, seed: u64) -> Result<Net> {
    if spec.dims.len() < 2 || spec.dims.contains(&0) {
        return Err(AdsError::InvalidParameter(format!(
            "layer dims must have at least an input and an output width, all positive: {:?}",
            spec.dims
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_layers = spec.dims.len() - 1;
    let layers = (0..n_layers)
        .map(|l| {
            let (fan_in, fan_out) = (spec.dims[l], spec.dims[l + 1]);
            let mut layer = Layer::zeros(fan_in, fan_out);
            let scale = 1.0 / (fan_in as f64).sqrt();
            let is_output = l + 1 == n_layers;
            match spec.init {
                InitScheme::Zero => {}
                InitScheme::ZeroOutput if is_output => {}
                InitScheme::Normal | InitScheme::ZeroOutput => {
                    let normal = Normal::new(0.0, scale).expect("positive std");
                    layer.weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
                }
                InitScheme::Uniform => {
                    layer
                        .weights
                        .iter_mut()
                        .for_each(|w| *w = rng.random_range(-scale..scale));
                }
            }
            layer
        })
        .collect();
    Ok(Net {
        dims: spec.dims.clone(),
        layers,
        activation: spec.activation,
        seed,
    })
}

impl Net {
    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().expect("validated at construction")
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(AdsError::InvalidInput(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass keeping the intermediate activations.
    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = layer.affine(&h);
            if l != last {
                out.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            layer_inputs.push(std::mem::replace(&mut h, out));
        }
        Ok(ForwardTrace {
            layer_inputs,
            logits: h,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Logits> {
        Logits::new(self.forward_trace(x)?.logits)
    }

    /// Reverse-mode pass from `dL/dlogits` to parameter and input gradients.
    pub fn backward(&self, trace: &ForwardTrace, grad_logits: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        if trace.layer_inputs.len() != self.layers.len()
            || trace
                .layer_inputs
                .iter()
                .zip(&self.layers)
                .any(|(h, l)| h.len() != l.in_dim)
        {
            return Err(AdsError::State("forward trace does not belong to this network".into()));
        }
        if grad_logits.len() != self.num_classes() {
            return Err(AdsError::InvalidInput(format!(
                "upstream gradient has length {}, expected {}",
                grad_logits.len(),
                self.num_classes()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = grad_logits.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.layer_inputs[l];
            let g = &mut grads.layers[l];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] = *d;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (w, x) in row.iter_mut().zip(input) {
                    *w = d * x;
                }
            }
            let mut upstream = vec![0.0; layer.in_dim];
            for (row, d) in layer.weights.chunks_exact(layer.in_dim).zip(&delta) {
                for (u, w) in upstream.iter_mut().zip(row) {
                    *u += w * d;
                }
            }
            if l > 0 {
                for (u, h) in upstream.iter_mut().zip(input) {
                    *u *= self.activation.derivative_from_output(*h);
                }
            }
            delta = upstream;
        }
        Ok((grads, delta))
    }

    /// All parameters in layer order, weights (row-major) before biases.
    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(AdsError::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            layer
                .weights
                .iter_mut()
                .chain(layer.bias.iter_mut())
                .for_each(|p| *p = it.next().expect("length checked"));
        }
        Ok(())
    }

    /// Upper bound on the Lipschitz constant of `x -> logits`: product of the
    /// Frobenius norms of the weight matrices (both activations are
    /// 1-Lipschitz).
    pub fn lipschitz_bound(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>().sqrt())
            .product()
    }

    /// Checkpoint encoding: magic, version, dims, activation, seed, then every
    /// layer's weights (row-major) and biases as little-endian `f64`.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(self.activation.code());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for p in self.params_flat() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Net> {
        let mut reader = ByteReader { bytes, pos: 0 };
        if reader.take(8)? != CHECKPOINT_MAGIC {
            return Err(AdsError::InvalidInput("not a network checkpoint".into()));
        }
        let version = reader.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(AdsError::InvalidInput(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let n_dims = reader.u32()? as usize;
        let dims = (0..n_dims)
            .map(|_| reader.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let activation = Activation::from_code(reader.take(1)?[0])
            .ok_or_else(|| AdsError::InvalidInput("unknown activation code".into()))?;
        let seed = u64::from_le_bytes(reader.take(8)?.try_into().expect("8 bytes"));
        let spec = NetSpec {
            dims,
            activation,
            init: InitScheme::Zero,
        };
        let mut net = init(&spec, seed)?;
        let params = (0..net.param_count())
            .map(|_| {
                reader
                    .take(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            })
            .collect::<Result<Vec<_>>>()?;
        if reader.pos != bytes.len() {
            return Err(AdsError::InvalidInput("trailing bytes after checkpoint".into()));
        }
        net.set_params_flat(&params)?;
        Ok(net)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| AdsError::io(path, e))?;
        f.write_all(&self.to_checkpoint_bytes())
            .map_err(|e| AdsError::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Net> {
        let bytes = std::fs::read(path).map_err(|e| AdsError::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(AdsError::InvalidInput("truncated checkpoint".into()));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Heavy-ball SGD state.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub momentum: f64,
    pub velocity: Gradients,
}

impl OptimizerState {
    pub fn new(net: &Net, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(AdsError::InvalidParameter(format!(
                "learning rate must be >= 0, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(AdsError::InvalidParameter(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(OptimizerState {
            learning_rate,
            momentum,
            velocity: Gradients::zeros_like(net),
        })
    }
}

/// `v = momentum * v + g; theta -= lr * v`.
pub fn sgd_step(net: &mut Net, grads: &Gradients, opt: &mut OptimizerState) -> Result<()> {
    if !grads.is_finite() {
        return Err(AdsError::Numerical("non-finite gradient; aborting update".into()));
    }
    if grads.layers.len() != net.layers.len() {
        return Err(AdsError::InvalidInput("gradient shape does not match network".into()));
    }
    for ((layer, g), v) in net.layers.iter_mut().zip(&grads.layers).zip(&mut opt.velocity.layers) {
        for ((p, gi), vi) in layer
            .weights
            .iter_mut()
            .chain(layer.bias.iter_mut())
            .zip(g.weights.iter().chain(&g.bias))
            .zip(v.weights.iter_mut().chain(v.bias.iter_mut()))
        {
            *vi = opt.momentum * *vi + gi;
            *p -= opt.learning_rate * *vi;
        }
    }
    Ok(())
}
