use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
}

/// One step of a sequential network. Skip connections use a stack:
/// [`Layer::PushSkip`] saves the current activation and the matching
/// [`Layer::ConcatSkip`] pops it and concatenates `[current, skip]` along
/// channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layer {
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        /// Start this layer at zero under the default scheme.
        zero_init: bool,
    },
    Act(Activation),
    AvgPool2,
    Upsample2,
    PushSkip,
    ConcatSkip,
    /// `[n, c, h, w] → [n, c]`.
    GlobalMean,
    Dense {
        name: String,
        in_features: usize,
        out_features: usize,
        bias: bool,
        zero_init: bool,
    },
    /// Adds the network input (residual output).
    AddInput,
}

impl Layer {
    pub fn describe(&self, index: usize) -> String {
        match self {
            Layer::Conv { name, .. } | Layer::Dense { name, .. } => format!("#{index} `{name}`"),
            other => format!("#{index} {other:?}"),
        }
    }
}

/// Sequential network description with its input contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub in_channels: usize,
    /// Spatial sides must be multiples of this (pooling depth).
    pub side_multiple: usize,
    pub layers: Vec<Layer>,
}

/// Parameter slot: name, shape and whether it starts at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub zero_init: bool,
}

impl NetworkSpec {
    pub fn slots(&self) -> Vec<SlotSpec> {
        let mut out = Vec::new();
        for layer in &self.layers {
            let (name, shape, fan_in, bias, zero_init, bias_len) = match layer {
                Layer::Conv {
                    name,
                    in_channels,
                    out_channels,
                    kernel,
                    bias,
                    zero_init,
                    ..
                } => (
                    name,
                    vec![*out_channels, *in_channels, *kernel, *kernel],
                    in_channels * kernel * kernel,
                    *bias,
                    *zero_init,
                    *out_channels,
                ),
                Layer::Dense {
                    name,
                    in_features,
                    out_features,
                    bias,
                    zero_init,
                } => (
                    name,
                    vec![*in_features, *out_features],
                    *in_features,
                    *bias,
                    *zero_init,
                    *out_features,
                ),
                _ => continue,
            };
            out.push(SlotSpec {
                name: format!("{name}.weight"),
                shape,
                fan_in,
                zero_init,
            });
            if bias {
                out.push(SlotSpec {
                    name: format!("{name}.bias"),
                    shape: vec![bias_len],
                    fan_in,
                    zero_init: true,
                });
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.slots().iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }

    /// Output shape for an `[n, c, h, w]` input, or an error naming the first
    /// layer whose contract is violated.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let fail = |layer: String, detail: String| CoreError::Shape { layer, detail };
        let &[_, c, h, w] = input else {
            return Err(fail("input".into(), format!("expected [n, c, h, w], got {input:?}")));
        };
        if c != self.in_channels {
            return Err(fail("input".into(), format!("{} expects {} channels, got {c}", self.name, self.in_channels)));
        }
        let m = self.side_multiple.max(1);
        if h < m || w < m || h % m != 0 || w % m != 0 {
            return Err(fail(
                "input".into(),
                format!("{} needs sides that are positive multiples of {m}, got {h}x{w}", self.name),
            ));
        }
        let mut shape = input.to_vec();
        let mut skips: Vec<Vec<usize>> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let here = || layer.describe(i);
            shape = match layer {
                Layer::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    pad,
                    ..
                } => {
                    if shape.len() != 4 || shape[1] != *in_channels {
                        return Err(fail(here(), format!("expects {in_channels} input channels, got {shape:?}")));
                    }
                    let size = |s: usize| {
                        let padded = s + 2 * pad;
                        (padded >= *kernel && *stride > 0).then(|| (padded - kernel) / stride + 1)
                    };
                    match (size(shape[2]), size(shape[3])) {
                        (Some(ho), Some(wo)) => vec![shape[0], *out_channels, ho, wo],
                        _ => return Err(fail(here(), format!("kernel {kernel} does not fit {shape:?}"))),
                    }
                }
                Layer::Act(_) => shape,
                Layer::AvgPool2 => {
                    if shape.len() != 4 || shape[2] % 2 != 0 || shape[3] % 2 != 0 {
                        return Err(fail(here(), format!("pooling needs even sides, got {shape:?}")));
                    }
                    vec![shape[0], shape[1], shape[2] / 2, shape[3] / 2]
                }
                Layer::Upsample2 => vec![shape[0], shape[1], shape[2] * 2, shape[3] * 2],
                Layer::PushSkip => {
                    skips.push(shape.clone());
                    shape
                }
                Layer::ConcatSkip => {
                    let skip = skips
                        .pop()
                        .ok_or_else(|| fail(here(), "no saved skip connection".into()))?;
                    if skip[0] != shape[0] || skip[2..] != shape[2..] {
                        return Err(fail(here(), format!("skip {skip:?} does not match {shape:?}")));
                    }
                    vec![shape[0], shape[1] + skip[1], shape[2], shape[3]]
                }
                Layer::GlobalMean => {
                    if shape.len() != 4 {
                        return Err(fail(here(), format!("expects NCHW, got {shape:?}")));
                    }
                    vec![shape[0], shape[1]]
                }
                Layer::Dense {
                    in_features,
                    out_features,
                    ..
                } => {
                    if shape.len() != 2 || shape[1] != *in_features {
                        return Err(fail(here(), format!("expects [n, {in_features}], got {shape:?}")));
                    }
                    vec![shape[0], *out_features]
                }
                Layer::AddInput => {
                    if shape != input {
                        return Err(fail(here(), format!("residual needs {input:?}, got {shape:?}")));
                    }
                    shape
                }
            };
        }
        if !skips.is_empty() {
            return Err(fail("end".into(), format!("{} unconsumed skip connections", skips.len())));
        }
        Ok(shape)
    }
}

fn conv(name: String, in_channels: usize, out_channels: usize, kernel: usize, stride: usize, bias: bool) -> Layer {
    Layer::Conv {
        name,
        in_channels,
        out_channels,
        kernel,
        stride,
        pad: kernel / 2,
        bias,
        zero_init: false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub depth: usize,
    pub base_channels: usize,
    #[serde(default = "yes")]
    pub residual: bool,
    #[serde(default = "default_slope")]
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub depth: usize,
    pub base_channels: usize,
    #[serde(default = "default_slope")]
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptualNetConfig {
    pub layers: usize,
    pub channels: usize,
    pub seed: u64,
}

fn yes() -> bool {
    true
}

fn default_slope() -> f64 {
    0.2
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            base_channels: 32,
            residual: true,
            slope: default_slope(),
        }
    }
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            base_channels: 32,
            slope: default_slope(),
        }
    }
}

impl Default for PerceptualNetConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            channels: 8,
            seed: 0x5eed,
        }
    }
}

fn check_positive(what: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(CoreError::Config(format!("{what} must be >= 1")));
    }
    Ok(())
}

/// UNet: per level a 3×3 conv, activation, skip save and 2× average pool;
/// a bottleneck conv; per level on the way up a 2× nearest upsample, skip
/// concat, 3×3 conv and activation; then a zero-initialized 1×1 projection to
/// one channel, added to the input when `residual`.
pub fn build_generator(config: &GeneratorConfig) -> Result<NetworkSpec> {
    check_positive("generator depth", config.depth)?;
    check_positive("generator base_channels", config.base_channels)?;
    let act = Layer::Act(Activation::LeakyRelu(config.slope));
    let ch = |l: usize| config.base_channels << l;
    let mut layers = Vec::new();
    let mut prev = 1;
    for l in 0..config.depth {
        layers.push(conv(format!("enc{l}"), prev, ch(l), 3, 1, true));
        layers.push(act.clone());
        layers.push(Layer::PushSkip);
        layers.push(Layer::AvgPool2);
        prev = ch(l);
    }
    layers.push(conv("mid".into(), prev, ch(config.depth), 3, 1, true));
    layers.push(act.clone());
    prev = ch(config.depth);
    for l in (0..config.depth).rev() {
        layers.push(Layer::Upsample2);
        layers.push(Layer::ConcatSkip);
        layers.push(conv(format!("dec{l}"), prev + ch(l), ch(l), 3, 1, true));
        layers.push(act.clone());
        prev = ch(l);
    }
    layers.push(Layer::Conv {
        name: "out".into(),
        in_channels: prev,
        out_channels: 1,
        kernel: 1,
        stride: 1,
        pad: 0,
        bias: true,
        zero_init: true,
    });
    if config.residual {
        layers.push(Layer::AddInput);
    }
    Ok(NetworkSpec {
        name: "generator".into(),
        in_channels: 1,
        side_multiple: 1 << config.depth,
        layers,
    })
}

/// Stride-2 3×3 convs with leaky activations, a global spatial mean and a
/// bias-free dense head producing one score per image. No normalization
/// couples batch elements.
pub fn build_critic(config: &CriticConfig) -> Result<NetworkSpec> {
    check_positive("critic depth", config.depth)?;
    check_positive("critic base_channels", config.base_channels)?;
    let mut layers = Vec::new();
    let mut prev = 1;
    for l in 0..config.depth {
        let out = config.base_channels << l;
        layers.push(conv(format!("conv{l}"), prev, out, 3, 2, true));
        layers.push(Layer::Act(Activation::LeakyRelu(config.slope)));
        prev = out;
    }
    layers.push(Layer::GlobalMean);
    layers.push(Layer::Dense {
        name: "head".into(),
        in_features: prev,
        out_features: 1,
        bias: false,
        zero_init: false,
    });
    Ok(NetworkSpec {
        name: "critic".into(),
        in_channels: 1,
        side_multiple: 1 << config.depth,
        layers,
    })
}

/// Bias-free 3×3 conv + ReLU stack used as a frozen feature extractor.
pub fn perceptual_spec(config: &PerceptualNetConfig) -> Result<NetworkSpec> {
    check_positive("perceptual layers", config.layers)?;
    check_positive("perceptual channels", config.channels)?;
    let mut layers = Vec::new();
    let mut prev = 1;
    for l in 0..config.layers {
        layers.push(conv(format!("psi{l}"), prev, config.channels, 3, 1, false));
        layers.push(Layer::Act(Activation::Relu));
        prev = config.channels;
    }
    Ok(NetworkSpec {
        name: "perceptual".into(),
        in_channels: 1,
        side_multiple: 1,
        layers,
    })
}
