//! Dense feed-forward networks with exact backpropagation and Adam.
//!
//! Layers compute `act(X·W + b)` with `W` stored as `fan_in × fan_out`, so a
//! batch is a row-per-sample matrix throughout.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Sigmoid),
            other => Err(Error::Parse(format!("unknown activation code {other}"))),
        }
    }

    pub fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Linear => {}
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
        }
    }

    /// Multiplies `grad` in place by the derivative, expressed through the
    /// layer output.
    fn backprop(self, output: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Linear => {}
            Activation::Relu => Zip::from(grad).and(output).for_each(|g, &y| {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Sigmoid => {
                Zip::from(grad).and(output).for_each(|g, &y| *g *= y * (1.0 - y))
            }
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::config("activation", format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if weights.ncols() != bias.len() {
            return Err(Error::shape("dense layer bias", weights.ncols(), bias.len()));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-limit..limit));
        DenseLayer {
            weights,
            bias: Array1::zeros(fan_out),
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights);
        z += &self.bias;
        self.activation.apply(&mut z);
        z
    }
}

/// Gradient (or moment) buffers for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

pub type Gradients = Vec<LayerGradient>;

/// Stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

/// Per-layer outputs kept from a forward pass; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub activations: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().unwrap()
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network", "needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::invalid(
                    "network",
                    format!(
                        "layer {k} outputs {} features but layer {} expects {}",
                        pair[0].fan_out(),
                        k + 1,
                        pair[1].fan_in()
                    ),
                ));
            }
        }
        Ok(Mlp { layers })
    }

    /// Glorot-initialized stack through `dims`; the last layer uses
    /// `output_activation`, all others `hidden_activation`.
    pub fn init<R: Rng>(
        dims: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid("network", format!("bad layer dims {dims:?}")));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k == last { output_activation } else { hidden_activation };
                DenseLayer::glorot(w[0], w[1], act, rng)
            })
            .collect();
        Mlp::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out()
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(DenseLayer::fan_out))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer, weights (row-major) then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::shape("parameter vector", self.parameter_count(), params.len()));
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = *it.next().unwrap());
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape("network input", self.input_dim(), x.ncols()));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h = layer.forward(h.view());
        }
        Ok(h)
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<ForwardTrace> {
        self.check_input(&x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for layer in &self.layers {
            let next = layer.forward(activations.last().unwrap().view());
            activations.push(next);
        }
        Ok(ForwardTrace { activations })
    }

    /// Backpropagates `grad_output` (dLoss/dOutput) through a recorded
    /// forward pass; returns parameter gradients and dLoss/dInput.
    pub fn backward_trace(
        &self,
        trace: &ForwardTrace,
        mut grad_output: Array2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if trace.activations.len() != self.layers.len() + 1 {
            return Err(Error::shape(
                "forward trace",
                self.layers.len() + 1,
                trace.activations.len(),
            ));
        }
        if grad_output.dim() != trace.output().dim() {
            return Err(Error::shape(
                "output gradient",
                format!("{:?}", trace.output().dim()),
                format!("{:?}", grad_output.dim()),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate().rev() {
            layer.activation.backprop(&trace.activations[k + 1], &mut grad_output);
            let input = &trace.activations[k];
            grads.push(LayerGradient {
                weights: input.t().dot(&grad_output),
                bias: grad_output.sum_axis(Axis(0)),
            });
            grad_output = grad_output.dot(&layer.weights.t());
        }
        grads.reverse();
        Ok((grads, grad_output))
    }
}

fn check_same_shape(context: &'static str, a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(
            context,
            format!("{:?}", b.dim()),
            format!("{:?}", a.dim()),
        ));
    }
    Ok(())
}

/// Mean over all entries of the squared difference.
pub fn mse_loss(prediction: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    check_same_shape("mse", &prediction, &target)?;
    if prediction.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = Zip::from(&prediction)
        .and(&target)
        .fold(0.0, |acc, &p, &t| acc + (p - t) * (p - t));
    Ok(sum / prediction.len() as f64)
}

/// MSE value and its gradient with respect to `prediction`.
pub fn mse_loss_grad(
    prediction: ArrayView2<f64>,
    target: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>)> {
    let loss = mse_loss(prediction, target)?;
    let scale = 2.0 / prediction.len().max(1) as f64;
    let grad = Zip::from(&prediction)
        .and(&target)
        .map_collect(|&p, &t| scale * (p - t));
    Ok((loss, grad))
}

/// Loss and exact gradient of `mse_loss(mlp(x), target)`.
pub fn backward(mlp: &Mlp, x: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Gradients)> {
    let trace = mlp.forward_trace(x)?;
    let (loss, grad) = mse_loss_grad(trace.output().view(), target)?;
    let (grads, _) = mlp.backward_trace(&trace, grad)?;
    Ok((loss, grads))
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    timestep: u64,
    first: Gradients,
    second: Gradients,
}

impl AdamState {
    pub fn new(mlp: &Mlp, learning_rate: f64) -> Self {
        let zeros: Gradients = mlp
            .layers
            .iter()
            .map(|l| LayerGradient {
                weights: Array2::zeros(l.weights.raw_dim()),
                bias: Array1::zeros(l.bias.len()),
            })
            .collect();
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            timestep: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    /// One bias-corrected Adam update of `mlp` in place.
    pub fn step(&mut self, mlp: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.len() != mlp.layers.len() || self.first.len() != mlp.layers.len() {
            return Err(Error::shape("adam gradients", mlp.layers.len(), grads.len()));
        }
        for ((layer, g), m) in mlp.layers.iter().zip(grads).zip(&self.first) {
            if g.weights.dim() != layer.weights.dim()
                || g.bias.len() != layer.bias.len()
                || m.weights.dim() != layer.weights.dim()
            {
                return Err(Error::shape(
                    "adam layer",
                    format!("{:?}", layer.weights.dim()),
                    format!("{:?}", g.weights.dim()),
                ));
            }
        }
        self.timestep += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let t = self.timestep as i32;
        let step = self.learning_rate * (1.0 - b2.powi(t)).sqrt() / (1.0 - b1.powi(t));
        let eps_hat = eps * (1.0 - b2.powi(t)).sqrt();
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps_hat);
        };
        for (((layer, g), m), v) in mlp
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(update);
        }
        Ok(())
    }
}

// ---- MVNN binary format ----

pub const MVNN_MAGIC: &[u8; 4] = b"MVNN";
/// Bare single network.
pub const MVNN_VERSION_PLAIN: u32 = 1;
/// JSON header followed by one or more networks.
pub const MVNN_VERSION_CONTAINER: u32 = 2;

fn encode_layers(mlp: &Mlp, buf: &mut Vec<u8>) {
    buf.extend_from_slice(&(mlp.layers.len() as u32).to_le_bytes());
    for l in &mlp.layers {
        buf.extend_from_slice(&(l.fan_in() as u32).to_le_bytes());
        buf.extend_from_slice(&(l.fan_out() as u32).to_le_bytes());
        buf.extend_from_slice(&l.activation.code().to_le_bytes());
        for w in l.weights.iter() {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        for b in l.bias.iter() {
            buf.extend_from_slice(&b.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Parse("truncated MVNN file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Parse("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn layers(&mut self) -> Result<Mlp> {
        let count = self.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let fan_in = self.u32()? as usize;
            let fan_out = self.u32()? as usize;
            let activation = Activation::from_code(self.u32()?)?;
            let weights = Array2::from_shape_vec((fan_in, fan_out), self.f64s(fan_in * fan_out)?)
                .map_err(|e| Error::Parse(e.to_string()))?;
            let bias = Array1::from(self.f64s(fan_out)?);
            layers.push(DenseLayer::new(weights, bias, activation)?);
        }
        Mlp::new(layers)
    }

    fn header(&mut self) -> Result<u32> {
        if self.take(4)? != MVNN_MAGIC {
            return Err(Error::Parse("bad MVNN magic".into()));
        }
        self.u32()
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Parse(format!(
                "{} trailing bytes in MVNN file",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Plain `MVNN` encoding of a single network.
pub fn encode_mlp(mlp: &Mlp) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MVNN_MAGIC);
    buf.extend_from_slice(&MVNN_VERSION_PLAIN.to_le_bytes());
    encode_layers(mlp, &mut buf);
    buf
}

pub fn decode_mlp(bytes: &[u8]) -> Result<Mlp> {
    let mut r = Reader { bytes, pos: 0 };
    let version = r.header()?;
    if version != MVNN_VERSION_PLAIN {
        return Err(Error::Parse(format!(
            "expected plain MVNN (version {MVNN_VERSION_PLAIN}), found version {version}"
        )));
    }
    let mlp = r.layers()?;
    r.finish()?;
    Ok(mlp)
}

/// Container encoding: JSON header text, then each network's layer stack.
pub fn encode_container(header_json: &str, networks: &[&Mlp]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MVNN_MAGIC);
    buf.extend_from_slice(&MVNN_VERSION_CONTAINER.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(header_json.as_bytes());
    buf.extend_from_slice(&(networks.len() as u32).to_le_bytes());
    for net in networks {
        encode_layers(net, &mut buf);
    }
    buf
}

pub fn decode_container(bytes: &[u8]) -> Result<(String, Vec<Mlp>)> {
    let mut r = Reader { bytes, pos: 0 };
    let version = r.header()?;
    if version != MVNN_VERSION_CONTAINER {
        return Err(Error::Parse(format!(
            "expected MVNN container (version {MVNN_VERSION_CONTAINER}), found version {version}"
        )));
    }
    let len = r.u32()? as usize;
    let header = std::str::from_utf8(r.take(len)?)
        .map_err(|e| Error::Parse(format!("MVNN header is not UTF-8: {e}")))?
        .to_owned();
    let count = r.u32()? as usize;
    let networks = (0..count).map(|_| r.layers()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok((header, networks))
}
