//! Convolutional autoencoder with hand-written backpropagation.
//!
//! Tensors are NCHW. The encoder is a stack of stride-2 "same" convolutions
//! with ReLU; the decoder mirrors it with transposed convolutions that
//! restore each encoder shape exactly, ReLU everywhere but the last layer.
//! The latent tensor of sample `s` becomes column `s` of `Z`, flattened
//! channel-major, then row, then column.

mod checkpoint;
mod conv;
mod train;

use std::fmt;

use conv::{Channels, Geometry};

use crate::affinity::FeatureMatrix;
use crate::numerics::he_normal_values;
use crate::{Error, Matrix, Result, RngSeed};

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use train::{
    fit, loss_and_grads, pretrain, train_joint, FitResult, LossAndGrads, LossComponents, Mode,
    TrainConfig, TrainHistory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// One (transposed) convolution. For decoder layers `in_channels` is the
/// channel count of the smaller grid the layer reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kernel_height: kernel,
            kernel_width: kernel,
            in_channels,
            out_channels,
            stride: 2,
            activation: Activation::Relu,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.kernel_height * self.kernel_width * self.in_channels
    }

    fn kernel_len(&self) -> usize {
        self.kernel_height * self.kernel_width * self.in_channels * self.out_channels
    }
}

/// Architectures from the benchmark table: `(name, input h, input w,
/// encoder (kernel, channels) list)`.
const PRESETS: &[(&str, usize, usize, &[(usize, usize)])] = &[
    ("toy", 32, 32, &[(3, 15)]),
    ("orl", 32, 32, &[(3, 3), (3, 3), (3, 5)]),
    ("coil20", 32, 32, &[(3, 15)]),
    ("coil40", 32, 32, &[(3, 20)]),
    ("coil100", 32, 32, &[(5, 50)]),
    ("eyaleb", 48, 42, &[(5, 10), (3, 20), (3, 30)]),
    ("usps", 16, 16, &[(5, 10), (3, 20), (3, 30)]),
    ("mnist", 28, 28, &[(5, 10), (3, 20), (3, 30)]),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_height: usize,
    pub input_width: usize,
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Single-channel input; the decoder mirrors `encoder` with the same
    /// kernels in reverse order and a linear final layer.
    pub fn mirrored(
        input_height: usize,
        input_width: usize,
        encoder: Vec<LayerSpec>,
    ) -> Result<Self> {
        let last = encoder.len().saturating_sub(1);
        let decoder = encoder
            .iter()
            .rev()
            .enumerate()
            .map(|(j, l)| LayerSpec {
                in_channels: l.out_channels,
                out_channels: l.in_channels,
                activation: if j == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
                ..*l
            })
            .collect();
        let spec = Self {
            input_height,
            input_width,
            encoder,
            decoder,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A stride-2 stack of `(kernel, channels)` convolutions.
    pub fn from_layers(
        input_height: usize,
        input_width: usize,
        layers: &[(usize, usize)],
    ) -> Result<Self> {
        let mut in_channels = 1;
        let encoder = layers
            .iter()
            .map(|&(k, c)| {
                let l = LayerSpec::conv(k, in_channels, c);
                in_channels = c;
                l
            })
            .collect();
        Self::mirrored(input_height, input_width, encoder)
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|p| p.0)
    }

    /// A named architecture at its native input size.
    pub fn preset(name: &str) -> Result<Self> {
        let &(_, h, w, layers) = find_preset(name)?;
        Self::from_layers(h, w, layers)
    }

    /// A named architecture applied to a different input size.
    pub fn preset_with_input(name: &str, height: usize, width: usize) -> Result<Self> {
        let &(_, _, _, layers) = find_preset(name)?;
        Self::from_layers(height, width, layers)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidNetwork(msg));
        if self.input_height == 0 || self.input_width == 0 {
            return bad("input size must be positive".into());
        }
        if self.encoder.is_empty() {
            return bad("at least one encoder layer is required".into());
        }
        if self.decoder.len() != self.encoder.len() {
            return bad(format!(
                "{} encoder layers but {} decoder layers",
                self.encoder.len(),
                self.decoder.len()
            ));
        }
        let mut channels = 1;
        for (i, l) in self.encoder.iter().enumerate() {
            check_layer(l, &format!("encoder layer {i}"))?;
            if l.in_channels != channels {
                return bad(format!(
                    "encoder layer {i} reads {} channels but receives {channels}",
                    l.in_channels
                ));
            }
            channels = l.out_channels;
        }
        for (j, l) in self.decoder.iter().enumerate() {
            check_layer(l, &format!("decoder layer {j}"))?;
            let mirror = &self.encoder[self.encoder.len() - 1 - j];
            if l.in_channels != channels
                || l.out_channels != mirror.in_channels
                || l.stride != mirror.stride
            {
                return bad(format!(
                    "decoder layer {j} does not mirror encoder layer {}",
                    self.encoder.len() - 1 - j
                ));
            }
            channels = l.out_channels;
        }
        Ok(())
    }

    /// Spatial shape entering each encoder layer, followed by the latent
    /// shape.
    pub fn encoder_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.input_height, self.input_width)];
        for l in &self.encoder {
            let &(h, w) = shapes.last().expect("non-empty");
            shapes.push((h.div_ceil(l.stride), w.div_ceil(l.stride)));
        }
        shapes
    }

    /// `(channels, height, width)` of the latent tensor.
    pub fn latent_shape(&self) -> (usize, usize, usize) {
        let (h, w) = *self.encoder_shapes().last().expect("non-empty");
        (self.encoder.last().expect("validated").out_channels, h, w)
    }

    pub fn latent_dim(&self) -> usize {
        let (c, h, w) = self.latent_shape();
        c * h * w
    }

    pub fn input_len(&self) -> usize {
        self.input_height * self.input_width
    }

    fn encoder_geometry(&self) -> Vec<Geometry> {
        let shapes = self.encoder_shapes();
        self.encoder
            .iter()
            .enumerate()
            .map(|(i, l)| Geometry::new(shapes[i], (l.kernel_height, l.kernel_width), l.stride))
            .collect()
    }

    fn decoder_geometry(&self) -> Vec<Geometry> {
        let shapes = self.encoder_shapes();
        let depth = self.decoder.len();
        self.decoder
            .iter()
            .enumerate()
            .map(|(j, l)| {
                Geometry::new(
                    shapes[depth - 1 - j],
                    (l.kernel_height, l.kernel_width),
                    l.stride,
                )
            })
            .collect()
    }
}

fn find_preset(
    name: &str,
) -> Result<&'static (&'static str, usize, usize, &'static [(usize, usize)])> {
    PRESETS
        .iter()
        .find(|p| p.0.eq_ignore_ascii_case(name))
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
            Error::InvalidNetwork(format!(
                "unknown preset {name:?}; known: {}",
                known.join(", ")
            ))
        })
}

fn check_layer(l: &LayerSpec, what: &str) -> Result<()> {
    if l.kernel_height == 0 || l.kernel_width == 0 {
        return Err(Error::InvalidNetwork(format!("{what} has an empty kernel")));
    }
    if l.in_channels == 0 || l.out_channels == 0 {
        return Err(Error::InvalidNetwork(format!("{what} has zero channels")));
    }
    if l.stride == 0 {
        return Err(Error::InvalidNetwork(format!("{what} has stride 0")));
    }
    Ok(())
}

/// Kernel and bias of one layer. Kernels are laid out
/// `[small_channel][large_channel][kh][kw]`: `[out][in]` for a convolution,
/// `[in][out]` for a transposed convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub spec: NetworkSpec,
    pub encoder: Vec<LayerParams>,
    pub decoder: Vec<LayerParams>,
}

impl NetworkParams {
    /// All-zero parameters with the shapes of `spec`.
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layer = |l: &LayerSpec| LayerParams {
            kernel: vec![0.0; l.kernel_len()],
            bias: vec![0.0; l.out_channels],
        };
        Self {
            spec: spec.clone(),
            encoder: spec.encoder.iter().map(layer).collect(),
            decoder: spec.decoder.iter().map(layer).collect(),
        }
    }

    /// Kernel then bias of every layer, encoder first, in spec order.
    pub fn tensors(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| [&l.kernel, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.encoder
            .iter_mut()
            .chain(&mut self.decoder)
            .flat_map(|l| [&mut l.kernel, &mut l.bias])
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().map(Vec::len).sum()
    }

    fn check_shapes(&self) -> Result<()> {
        let expected = Self::zeros(&self.spec);
        let ok = self
            .tensors()
            .zip(expected.tensors())
            .all(|(a, b)| a.len() == b.len())
            && self.encoder.len() == expected.encoder.len()
            && self.decoder.len() == expected.decoder.len();
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(
                "parameters do not match their network spec".into(),
            ))
        }
    }
}

/// He-normal kernels with `fan_in = kh·kw·in_channels`, zero biases. Layer
/// `i` of the encoder draws from stream `i`, decoder layer `j` from stream
/// `depth + j`.
pub fn build_network(spec: &NetworkSpec, seed: RngSeed) -> Result<NetworkParams> {
    spec.validate()?;
    let mut params = NetworkParams::zeros(spec);
    let layers = spec.encoder.iter().chain(&spec.decoder);
    let targets = params.encoder.iter_mut().chain(&mut params.decoder);
    for (i, (l, p)) in layers.zip(targets).enumerate() {
        let mut rng = seed.stream(i as u64);
        p.kernel = he_normal_values(l.kernel_len(), l.fan_in(), &mut rng)?;
    }
    Ok(params)
}

/// A batch of single- or multi-channel images, NCHW.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tensor({}x{}x{}x{})",
            self.batch, self.channels, self.height, self.width
        )
    }
}

impl Tensor {
    pub fn new(
        batch: usize,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != batch * channels * height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {batch}x{channels}x{height}x{width} tensor",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("tensor has non-finite values".into()));
        }
        Ok(Self {
            batch,
            channels,
            height,
            width,
            data,
        })
    }

    /// Single-channel images from a `pixels × n` matrix (one row-major image
    /// per column).
    pub fn from_images(images: &Matrix, height: usize, width: usize) -> Result<Self> {
        if images.rows() != height * width {
            return Err(Error::Dimension(format!(
                "{height}x{width} images need {} rows, got {}",
                height * width,
                images.rows()
            )));
        }
        Ok(Self {
            batch: images.cols(),
            channels: 1,
            height,
            width,
            data: images.transpose().into_vec(),
        })
    }

    pub fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// `sample_len × batch` matrix with one flattened sample per column.
    pub fn to_columns(&self) -> Matrix {
        Matrix::new(self.batch, self.sample_len(), self.data.clone())
            .expect("finite tensor data")
            .transpose()
    }

    /// Inverse of [`Tensor::to_columns`].
    pub fn from_columns(m: &Matrix, channels: usize, height: usize, width: usize) -> Result<Self> {
        if m.rows() != channels * height * width {
            return Err(Error::Dimension(format!(
                "{} rows cannot hold {channels}x{height}x{width} samples",
                m.rows()
            )));
        }
        Ok(Self {
            batch: m.cols(),
            channels,
            height,
            width,
            data: m.transpose().into_vec(),
        })
    }
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct EncoderTrace {
    /// Input followed by each layer's (post-activation) output.
    pub activations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct DecoderTrace {
    /// Decoder input followed by each layer's output.
    pub activations: Vec<Vec<f64>>,
}

fn apply_activation(a: Activation, v: &mut [f64]) {
    if a == Activation::Relu {
        v.iter_mut().for_each(|x| *x = x.max(0.0));
    }
}

/// Zeroes the gradient where a ReLU output was not positive.
fn activation_backward(a: Activation, output: &[f64], grad: &mut [f64]) {
    if a == Activation::Relu {
        for (g, &o) in grad.iter_mut().zip(output) {
            if o <= 0.0 {
                *g = 0.0;
            }
        }
    }
}

pub(crate) fn encoder_forward(params: &NetworkParams, x: &Tensor) -> Result<EncoderTrace> {
    params.check_shapes()?;
    let spec = &params.spec;
    if x.channels != 1 || x.height != spec.input_height || x.width != spec.input_width {
        return Err(Error::Dimension(format!(
            "network expects 1x{}x{} inputs, got {}x{}x{}",
            spec.input_height, spec.input_width, x.channels, x.height, x.width
        )));
    }
    let mut activations = vec![x.data.clone()];
    for ((l, p), g) in spec
        .encoder
        .iter()
        .zip(&params.encoder)
        .zip(spec.encoder_geometry())
    {
        let ch = Channels {
            batch: x.batch,
            small: l.out_channels,
            large: l.in_channels,
        };
        let mut out = conv::conv_forward(
            &g,
            ch,
            activations.last().expect("input"),
            &p.kernel,
            &p.bias,
        );
        apply_activation(l.activation, &mut out);
        activations.push(out);
    }
    Ok(EncoderTrace { activations })
}

pub(crate) fn encoder_backward(
    params: &NetworkParams,
    trace: &EncoderTrace,
    batch: usize,
    d_latent: Vec<f64>,
    grads: &mut NetworkParams,
) {
    let spec = &params.spec;
    let geometry = spec.encoder_geometry();
    let mut upstream = d_latent;
    for i in (0..spec.encoder.len()).rev() {
        let l = &spec.encoder[i];
        activation_backward(l.activation, &trace.activations[i + 1], &mut upstream);
        let ch = Channels {
            batch,
            small: l.out_channels,
            large: l.in_channels,
        };
        let (d_in, d_k, d_b) = conv::conv_backward(
            &geometry[i],
            ch,
            &trace.activations[i],
            &params.encoder[i].kernel,
            &upstream,
        );
        grads.encoder[i].kernel = d_k;
        grads.encoder[i].bias = d_b;
        upstream = d_in;
    }
}

pub(crate) fn decoder_forward(
    params: &NetworkParams,
    latent: Vec<f64>,
    batch: usize,
) -> DecoderTrace {
    let spec = &params.spec;
    let mut activations = vec![latent];
    for ((l, p), g) in spec
        .decoder
        .iter()
        .zip(&params.decoder)
        .zip(spec.decoder_geometry())
    {
        let ch = Channels {
            batch,
            small: l.in_channels,
            large: l.out_channels,
        };
        let mut out = conv::deconv_forward(
            &g,
            ch,
            activations.last().expect("input"),
            &p.kernel,
            &p.bias,
        );
        apply_activation(l.activation, &mut out);
        activations.push(out);
    }
    DecoderTrace { activations }
}

/// Backpropagates `d_output` through the decoder, filling decoder gradients
/// and returning the gradient with respect to the decoder input.
pub(crate) fn decoder_backward(
    params: &NetworkParams,
    trace: &DecoderTrace,
    batch: usize,
    d_output: Vec<f64>,
    grads: &mut NetworkParams,
) -> Vec<f64> {
    let spec = &params.spec;
    let geometry = spec.decoder_geometry();
    let mut upstream = d_output;
    for j in (0..spec.decoder.len()).rev() {
        let l = &spec.decoder[j];
        activation_backward(l.activation, &trace.activations[j + 1], &mut upstream);
        let ch = Channels {
            batch,
            small: l.in_channels,
            large: l.out_channels,
        };
        let (d_in, d_k, d_b) = conv::deconv_backward(
            &geometry[j],
            ch,
            &trace.activations[j],
            &params.decoder[j].kernel,
            &upstream,
        );
        grads.decoder[j].kernel = d_k;
        grads.decoder[j].bias = d_b;
        upstream = d_in;
    }
    upstream
}

/// Output of [`encode`].
#[derive(Debug, Clone)]
pub struct Encoded {
    pub latent: Tensor,
    pub z: Matrix,
}

impl Encoded {
    pub fn features(&self) -> Result<FeatureMatrix> {
        FeatureMatrix::new(self.z.clone())
    }
}

pub fn encode(x: &Tensor, params: &NetworkParams) -> Result<Encoded> {
    let trace = encoder_forward(params, x)?;
    let (c, h, w) = params.spec.latent_shape();
    let latent = Tensor {
        batch: x.batch,
        channels: c,
        height: h,
        width: w,
        data: trace.activations.into_iter().last().expect("input"),
    };
    let z = latent.to_columns();
    Ok(Encoded { latent, z })
}

pub fn decode(latent: &Tensor, params: &NetworkParams) -> Result<Tensor> {
    params.check_shapes()?;
    let (c, h, w) = params.spec.latent_shape();
    if (latent.channels, latent.height, latent.width) != (c, h, w) {
        return Err(Error::Dimension(format!(
            "decoder expects {c}x{h}x{w} latents, got {}x{}x{}",
            latent.channels, latent.height, latent.width
        )));
    }
    let trace = decoder_forward(params, latent.data.clone(), latent.batch);
    Ok(Tensor {
        batch: latent.batch,
        channels: 1,
        height: params.spec.input_height,
        width: params.spec.input_width,
        data: trace.activations.into_iter().last().expect("input"),
    })
}
