//! Fully connected ReLU encoder with exact backpropagation.
//!
//! Hidden layers use ReLU and the output layer is linear, so embeddings are
//! unnormalized. Parameters are `f64` throughout.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod adam;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use train::{
    split_dataset, train, DatasetSplit, EpochLog, LossKind, SamplerConfig, TrainConfig, TrainOutcome,
    ValidationMetric, DEFAULT_PATIENCE,
};

/// Hidden width of the default architecture.
pub const DEFAULT_HIDDEN: usize = 64;

/// One affine layer, weights stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn check(&self) -> Result<()> {
        if self.inputs == 0 || self.outputs == 0 {
            return Err(Error::Shape("layer sizes must be positive".into()));
        }
        if self.weights.len() != self.inputs * self.outputs || self.biases.len() != self.outputs {
            return Err(Error::Shape(format!(
                "{}x{} layer holds {} weights and {} biases",
                self.outputs,
                self.inputs,
                self.weights.len(),
                self.biases.len()
            )));
        }
        if self.weights.iter().chain(&self.biases).any(|v| !v.is_finite()) {
            return Err(Error::Data("layer contains a non-finite parameter".into()));
        }
        Ok(())
    }

    // out[i] = b + W x[i] for a row-major batch.
    fn apply(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n * self.outputs);
        for row in x.chunks_exact(self.inputs) {
            for o in 0..self.outputs {
                let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                out.push(self.biases[o] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        out
    }
}

/// MLP encoder: `layer_sizes[0]` inputs to `layer_sizes.last()` embedding
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    layers: Vec<Dense>,
}

/// Parameter gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Flattened in the order of [`EncoderModel::parameters`].
    pub fn to_vec(&self) -> Vec<f64> {
        self.values().collect()
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }
}

/// Activations kept from a forward pass for [`EncoderModel::backward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    n: usize,
    /// `activations[0]` is the input batch, `activations[l + 1]` the output
    /// of layer `l` (after ReLU for hidden layers).
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Row-major embeddings, `n × output_dim`.
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds the input at least")
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

impl EncoderModel {
    /// Validates that consecutive layers connect and all parameters are finite.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("encoder needs at least one layer".into()));
        }
        for l in &layers {
            l.check()?;
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} values but layer {} takes {}",
                    pair[0].outputs,
                    i + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights and zero biases.
    pub fn initialize(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                let mut layer = Dense::zeros(fan_in, fan_out);
                layer.weights.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
                layer
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn flatten_inputs(&self, observations: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if let Some((i, o)) = observations.iter().enumerate().find(|(_, o)| o.len() != d) {
            return Err(Error::Shape(format!("observation {i} has {} values, encoder expects {d}", o.len())));
        }
        Ok(observations.concat())
    }

    /// Embeds every observation.
    pub fn forward(&self, observations: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let cache = self.forward_cached(observations)?;
        Ok(cache.output().chunks(self.output_dim()).map(<[f64]>::to_vec).collect())
    }

    pub fn forward_cached(&self, observations: &[Vec<f64>]) -> Result<ForwardCache> {
        let n = observations.len();
        let mut activations = vec![self.flatten_inputs(observations)?];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = layer.apply(&activations[l], n);
            if l < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(out);
        }
        Ok(ForwardCache { n, activations })
    }

    /// Parameter gradients given `dL/d(embedding)` for each observation.
    pub fn backward(&self, observations: &[Vec<f64>], upstream: &[Vec<f64>]) -> Result<Gradients> {
        let cache = self.forward_cached(observations)?;
        if upstream.len() != observations.len() || upstream.iter().any(|g| g.len() != self.output_dim()) {
            return Err(Error::Shape("upstream gradient does not match the embeddings".into()));
        }
        self.backward_cached(&cache, &upstream.concat())
    }

    /// Reverse-mode pass over a cached forward pass; `upstream` is row-major
    /// `n × output_dim`.
    pub fn backward_cached(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Gradients> {
        let n = cache.n;
        if upstream.len() != n * self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} values, expected {}",
                upstream.len(),
                n * self.output_dim()
            )));
        }
        let mut grads: Vec<Dense> = self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.activations[l];
            let g = &mut grads[l];
            for i in 0..n {
                let d_row = &delta[i * layer.outputs..(i + 1) * layer.outputs];
                let x_row = &input[i * layer.inputs..(i + 1) * layer.inputs];
                for (o, &d) in d_row.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.biases[o] += d;
                    let gw = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, x) in gw.iter_mut().zip(x_row) {
                        *w += d * x;
                    }
                }
            }
            if l == 0 {
                break;
            }
            // Propagate through W and the previous layer's ReLU.
            let mut prev = vec![0.0; n * layer.inputs];
            for i in 0..n {
                let d_row = &delta[i * layer.outputs..(i + 1) * layer.outputs];
                let p_row = &mut prev[i * layer.inputs..(i + 1) * layer.inputs];
                for (o, &d) in d_row.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, wv) in p_row.iter_mut().zip(w) {
                        *p += d * wv;
                    }
                }
                let a_row = &input[i * layer.inputs..(i + 1) * layer.inputs];
                for (p, &a) in p_row.iter_mut().zip(a_row) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(Gradients { layers: grads })
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    /// All parameters in serialization order (per layer: weights, biases).
    pub fn parameters(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::Shape(format!(
                "{} parameter values for a model with {}",
                values.len(),
                self.parameter_count()
            )));
        }
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
        Ok(())
    }
}

/// Model file format identifier.
pub const MODEL_FORMAT: &str = "fsembed-mlp";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    activation: String,
    layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDocument {
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl EncoderModel {
    /// Versioned JSON document with row-major parameter arrays.
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            layer_sizes: self.layer_sizes(),
            activation: "relu".into(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerDocument { weights: l.weights.clone(), biases: l.biases.clone() })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::Data(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        if doc.activation != "relu" {
            return Err(Error::Data(format!("unsupported activation {:?}", doc.activation)));
        }
        if doc.layer_sizes.len() != doc.layers.len() + 1 {
            return Err(Error::Shape("layer_sizes does not match the layer list".into()));
        }
        let layers = doc
            .layers
            .into_iter()
            .zip(doc.layer_sizes.windows(2))
            .map(|(l, w)| Dense { inputs: w[0], outputs: w[1], weights: l.weights, biases: l.biases })
            .collect();
        Self::from_layers(layers)
    }
}
