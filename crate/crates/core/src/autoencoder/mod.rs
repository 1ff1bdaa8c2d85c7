//! The convolutional autoencoder: a strided Conv1D encoder compressing the
//! `[2, L]` altitude/speed input to a bottleneck, and a Conv1DTranspose
//! decoder reconstructing it.

mod checkpoint;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub(crate) use train::reconstruction_errors;
pub use train::{train, write_train_report, TrainOptions, TrainReport};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{NormStats, CHANNELS, DEFAULT_SERIES_LEN};
use crate::rng;
use crate::tensor::{DropoutMode, Padding, Parameter, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl LayerSpec {
    pub const fn new(filters: usize, kernel: usize, stride: usize) -> Self {
        Self { filters, kernel, stride }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_length: usize,
    pub input_channels: usize,
    pub encoder_layers: Vec<LayerSpec>,
    /// Hidden transposed convolutions; a linear stride-1 projection back to
    /// `input_channels` follows them.
    pub decoder_layers: Vec<LayerSpec>,
    pub output_kernel: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        // Two stride-2 layers of 32 and 16 filters leave a [16, L/4]
        // bottleneck, twice the size of the input; the third layer brings it
        // to [8, L/8].
        let encoder_layers =
            vec![LayerSpec::new(32, 7, 2), LayerSpec::new(16, 7, 2), LayerSpec::new(8, 7, 2)];
        Self {
            input_length: DEFAULT_SERIES_LEN,
            input_channels: CHANNELS,
            decoder_layers: mirrored_decoder(&encoder_layers),
            encoder_layers,
            output_kernel: 7,
            dropout_rate: 0.2,
            seed: 0,
        }
    }
}

/// Decoder stack mirroring `encoder`: same kernels and strides, filters in
/// reverse order.
pub fn mirrored_decoder(encoder: &[LayerSpec]) -> Vec<LayerSpec> {
    encoder.iter().rev().map(|l| LayerSpec::new(l.filters, l.kernel, l.stride)).collect()
}

/// Shapes a valid config produces, per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeSummary {
    pub input: [usize; 2],
    pub bottleneck: [usize; 2],
    pub output: [usize; 2],
}

impl ShapeSummary {
    pub fn compression_ratio(&self) -> f64 {
        (self.bottleneck[0] * self.bottleneck[1]) as f64 / (self.input[0] * self.input[1]) as f64
    }
}

impl ModelConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_input_length(mut self, len: usize) -> Self {
        self.input_length = len;
        self
    }

    /// Checks layer parameters, that the decoder reproduces the input shape,
    /// and that the bottleneck is strictly smaller than the input.
    pub fn validate(&self) -> Result<ShapeSummary> {
        if self.input_length < 2 || self.input_channels == 0 {
            return Err(Error::config(format!(
                "input shape [{}, {}] is degenerate",
                self.input_channels, self.input_length
            )));
        }
        if self.encoder_layers.is_empty() {
            return Err(Error::config("encoder needs at least one layer"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!("dropout_rate {} not in [0, 1)", self.dropout_rate)));
        }
        if self.output_kernel == 0 {
            return Err(Error::config("output_kernel must be at least 1"));
        }
        for (i, l) in self.encoder_layers.iter().chain(&self.decoder_layers).enumerate() {
            if l.filters == 0 || l.kernel == 0 || l.stride == 0 {
                return Err(Error::config(format!("layer {i} has a zero filters/kernel/stride: {l:?}")));
            }
        }
        let mut len = self.input_length;
        for l in &self.encoder_layers {
            len = len.div_ceil(l.stride);
        }
        let bottleneck = [self.encoder_layers.last().unwrap().filters, len];
        for l in &self.decoder_layers {
            len *= l.stride;
        }
        let output = [self.input_channels, len];
        let input = [self.input_channels, self.input_length];
        if output != input {
            return Err(Error::config(format!(
                "decoder output shape {output:?} does not match required input shape {input:?}"
            )));
        }
        let summary = ShapeSummary { input, bottleneck, output };
        if bottleneck[0] * bottleneck[1] >= input[0] * input[1] {
            return Err(Error::config(format!(
                "bottleneck {bottleneck:?} ({} values) is not smaller than input {input:?} ({} values)",
                bottleneck[0] * bottleneck[1],
                input[0] * input[1]
            )));
        }
        Ok(summary)
    }

    /// Parameter names and shapes in canonical order.
    pub fn parameter_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut c_in = self.input_channels;
        for (i, l) in self.encoder_layers.iter().enumerate() {
            out.push((format!("enc{i}.weight"), vec![l.filters, c_in, l.kernel]));
            out.push((format!("enc{i}.bias"), vec![l.filters]));
            c_in = l.filters;
        }
        for (i, l) in self.decoder_layers.iter().enumerate() {
            out.push((format!("dec{i}.weight"), vec![c_in, l.filters, l.kernel]));
            out.push((format!("dec{i}.bias"), vec![l.filters]));
            c_in = l.filters;
        }
        out.push(("out.weight".into(), vec![c_in, self.input_channels, self.output_kernel]));
        out.push(("out.bias".into(), vec![self.input_channels]));
        out
    }
}

/// Names of the first encoder convolution's parameters.
pub const FIRST_LAYER: [&str; 2] = ["enc0.weight", "enc0.bias"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Train { seed: u64 },
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub config: ModelConfig,
    params: Vec<Parameter>,
    pub norm_stats: NormStats,
}

/// Tape handles produced by one forward pass.
pub struct Forward {
    pub params: Vec<Var>,
    pub bottleneck: Var,
    pub output: Var,
}

/// He-uniform weights, zero biases, all drawn from the config seed.
pub fn init_model(config: ModelConfig) -> Result<Autoencoder> {
    config.validate()?;
    let mut params = Vec::new();
    for (i, (name, shape)) in config.parameter_layout().into_iter().enumerate() {
        let value = if name.ends_with(".bias") {
            Tensor::zeros(&shape)
        } else {
            let fan_in = if name.starts_with("enc") {
                shape[1] * shape[2]
            } else {
                // each transposed-conv output sees about kernel/stride taps per input channel
                let stride = layer_stride(&config, &name);
                shape[0] * shape[2].div_ceil(stride)
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut rng = rng::stream(&[config.seed, 0x1417, i as u64]);
            let n = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| rng.random_range(-bound..bound)).collect())?
        };
        params.push(Parameter::new(name, value));
    }
    Ok(Autoencoder { config, params, norm_stats: NormStats::identity() })
}

fn layer_stride(config: &ModelConfig, name: &str) -> usize {
    name.strip_prefix("dec")
        .and_then(|s| s.split('.').next())
        .and_then(|i| i.parse::<usize>().ok())
        .map_or(1, |i| config.decoder_layers[i].stride)
}

impl Autoencoder {
    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn shapes(&self) -> ShapeSummary {
        self.config.validate().expect("model built from a validated config")
    }

    /// Marks exactly the named parameters frozen; all others become trainable.
    pub fn freeze(&mut self, names: &[&str]) -> Result<()> {
        for n in names {
            if self.param(n).is_none() {
                let valid: Vec<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
                return Err(Error::invalid(format!(
                    "unknown parameter `{n}`; valid names: {}",
                    valid.join(", ")
                )));
            }
        }
        for p in &mut self.params {
            p.frozen = names.contains(&p.name.as_str());
        }
        Ok(())
    }

    pub fn frozen_names(&self) -> Vec<&str> {
        self.params.iter().filter(|p| p.frozen).map(|p| p.name.as_str()).collect()
    }

    pub(crate) fn from_parts(config: ModelConfig, params: Vec<Parameter>, norm_stats: NormStats) -> Self {
        Self { config, params, norm_stats }
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let (b, c, l) = x.dims3("autoencoder input")?;
        if c != self.config.input_channels || l != self.config.input_length {
            return Err(Error::invalid(format!(
                "autoencoder input must be [B, {}, {}], got {:?}",
                self.config.input_channels,
                self.config.input_length,
                x.shape()
            )));
        }
        Ok(b)
    }

    fn dropout(&self, tape: &mut Tape, h: Var, mode: Mode, site: u64) -> Result<Var> {
        match mode {
            Mode::Eval => Ok(h),
            Mode::Train { seed } if self.config.dropout_rate > 0.0 => tape.dropout(
                h,
                self.config.dropout_rate,
                DropoutMode::Train { seed: rng::derive_seed(&[seed, site]) },
            ),
            Mode::Train { .. } => Ok(h),
        }
    }

    fn encode_on(&self, tape: &mut Tape, vars: &[Var], x: Var, mode: Mode) -> Result<Var> {
        let mut h = x;
        for (i, l) in self.config.encoder_layers.iter().enumerate() {
            h = tape.conv1d(h, vars[2 * i], vars[2 * i + 1], l.stride, Padding::Same)?;
            h = tape.relu(h);
            if i == 0 {
                h = self.dropout(tape, h, mode, 0)?;
            }
        }
        Ok(h)
    }

    fn decode_on(&self, tape: &mut Tape, vars: &[Var], z: Var, mode: Mode) -> Result<Var> {
        let base = 2 * self.config.encoder_layers.len();
        let mut h = z;
        for (i, l) in self.config.decoder_layers.iter().enumerate() {
            h = tape.conv1d_transpose(h, vars[base + 2 * i], vars[base + 2 * i + 1], l.stride, Padding::Same)?;
            h = tape.relu(h);
            if i == 0 {
                h = self.dropout(tape, h, mode, 1)?;
            }
        }
        let last = vars.len() - 2;
        tape.conv1d_transpose(h, vars[last], vars[last + 1], 1, Padding::Same)
    }

    /// Records a full encode/decode pass of `x` on `tape`.
    pub fn forward(&self, tape: &mut Tape, x: Var, mode: Mode) -> Result<Forward> {
        self.check_input(tape.value(x))?;
        let params: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.value.clone())).collect();
        let bottleneck = self.encode_on(tape, &params, x, mode)?;
        let output = self.decode_on(tape, &params, bottleneck, mode)?;
        Ok(Forward { params, bottleneck, output })
    }

    /// Like [`forward`](Self::forward) but with parameters already on the
    /// tape, one variable per parameter in layout order. Returns the output.
    pub fn forward_with_params(&self, tape: &mut Tape, x: Var, params: &[Var], mode: Mode) -> Result<Var> {
        self.check_input(tape.value(x))?;
        if params.len() != self.params.len() {
            return Err(Error::invalid(format!("expected {} parameter variables, got {}", self.params.len(), params.len())));
        }
        for (p, &v) in self.params.iter().zip(params) {
            if tape.value(v).shape() != p.value.shape() {
                return Err(Error::invalid(format!(
                    "parameter {} must have shape {:?}, got {:?}",
                    p.name,
                    p.value.shape(),
                    tape.value(v).shape()
                )));
            }
        }
        let z = self.encode_on(tape, params, x, mode)?;
        self.decode_on(tape, params, z, mode)
    }

    /// Bottleneck representation of a normalized `[B, 2, L]` batch.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.value.clone())).collect();
        let xv = tape.leaf(x.clone());
        let z = self.encode_on(&mut tape, &params, xv, Mode::Eval)?;
        Ok(tape.value(z).clone())
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        let (_, c, l) = z.dims3("bottleneck")?;
        let want = self.shapes().bottleneck;
        if [c, l] != want {
            return Err(Error::invalid(format!(
                "bottleneck must be [B, {}, {}], got {:?}",
                want[0],
                want[1],
                z.shape()
            )));
        }
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.value.clone())).collect();
        let zv = tape.leaf(z.clone());
        let out = self.decode_on(&mut tape, &params, zv, Mode::Eval)?;
        Ok(tape.value(out).clone())
    }

    /// Eval-mode `decode(encode(x))`.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let fwd = self.forward(&mut tape, xv, Mode::Eval)?;
        Ok(tape.value(fwd.output).clone())
    }

    /// Per-sample reconstruction MAE of a `[B, 2, L]` batch.
    pub fn sample_errors(&self, x: &Tensor) -> Result<Vec<f64>> {
        let rec = self.reconstruct(x)?;
        x.unstack()
            .iter()
            .zip(rec.unstack())
            .map(|(a, b)| crate::tensor::mae(a, &b))
            .collect()
    }
}
