//! A small, purpose-built network engine: depthwise-separable convolutions
//! with ELU, input dropout, a dense Gaussian head, the Gaussian negative
//! log-likelihood and Adam. Backward passes are written out by hand and
//! checked against central finite differences in the tests.
//!
//! Everything is generic over [`Scalar`] so production runs use `f32` and
//! gradient checks use `f64` through the same code.

mod adam;
mod checkpoint;
mod layers;
mod loss;
mod network;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::Range;

use num_traits::{Float, FromPrimitive, NumAssign};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_for;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    TrainerSnapshot, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use layers::{
    dense_head_forward, depthwise_forward, depthwise_separable_forward, dropout_forward,
    dropout_mask, elu, elu_backward, elu_forward, elu_grad, pointwise_forward, FeatureMap,
};
pub use loss::{gaussian_nll, gaussian_nll_grad, GaussianParams, SIGMA_MAX, SIGMA_MIN};
pub use network::{
    backward, batch_gradient, combine_pixels, convolve, forward, sample_loss, BatchGradient,
    ForwardCache, Sample,
};

/// Floating-point type the engine runs in.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + Sum + Send + Sync + Debug + Default + 'static
{
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum LayerKind {
    DepthwiseSeparable = 0,
    Elu = 1,
    Dropout = 2,
    DenseHead = 3,
}

impl LayerKind {
    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Self::DepthwiseSeparable),
            1 => Some(Self::Elu),
            2 => Some(Self::Dropout),
            3 => Some(Self::DenseHead),
            _ => None,
        }
    }
}

/// One entry of the serialized layer table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub elu_alpha: f64,
    pub dropout_rate: f64,
}

/// Shape of the network: input dropout, then `channels.len()` blocks of
/// depthwise-separable convolution + ELU, then a dense head emitting
/// `(μ_R, μ_I, log σ_R, log σ_I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub in_channels: usize,
    pub kernel: usize,
    pub channels: Vec<usize>,
    pub elu_alpha: f64,
    pub dropout_rate: f64,
}

pub const HEAD_OUTPUTS: usize = 4;

impl Architecture {
    /// Five 5×5 layers with channels (16, 16, 8, 8, 8); receptive field 21.
    pub fn desk() -> Self {
        Self {
            in_channels: 2,
            kernel: 5,
            channels: vec![16, 16, 8, 8, 8],
            elu_alpha: 1.0,
            dropout_rate: 0.5,
        }
    }

    /// Five 5×5 layers with channels (512, 256, 128, 64, 32).
    pub fn paper() -> Self {
        Self {
            channels: vec![512, 256, 128, 64, 32],
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "paper" => Some(Self::paper()),
            _ => None,
        }
    }

    /// Side of the input window that maps to a single output pixel.
    pub fn receptive_field(&self) -> usize {
        1 + self.channels.len() * (self.kernel - 1)
    }

    /// Pixels lost on each side by the unpadded convolution chain.
    pub fn margin(&self) -> usize {
        self.receptive_field() / 2
    }

    pub fn last_channels(&self) -> usize {
        *self.channels.last().expect("validated architecture")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Shape(m.to_string()));
        if self.channels.is_empty() || self.channels.contains(&0) || self.in_channels == 0 {
            return bad("architecture needs at least one layer and nonzero channel counts");
        }
        if self.kernel % 2 == 0 {
            return bad("convolution kernel must be odd");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout rate must lie in [0, 1)");
        }
        if !(self.elu_alpha > 0.0) {
            return bad("ELU alpha must be positive");
        }
        Ok(())
    }

    /// The full layer table, in execution order.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let base = LayerSpec {
            kind: LayerKind::Dropout,
            kernel: 0,
            in_channels: self.in_channels,
            out_channels: self.in_channels,
            elu_alpha: 0.0,
            dropout_rate: self.dropout_rate,
        };
        let mut specs = vec![base];
        let mut c_in = self.in_channels;
        for &c_out in &self.channels {
            specs.push(LayerSpec {
                kind: LayerKind::DepthwiseSeparable,
                kernel: self.kernel,
                in_channels: c_in,
                out_channels: c_out,
                dropout_rate: 0.0,
                ..base
            });
            specs.push(LayerSpec {
                kind: LayerKind::Elu,
                in_channels: c_out,
                out_channels: c_out,
                elu_alpha: self.elu_alpha,
                dropout_rate: 0.0,
                ..base
            });
            c_in = c_out;
        }
        specs.push(LayerSpec {
            kind: LayerKind::DenseHead,
            in_channels: c_in,
            out_channels: HEAD_OUTPUTS,
            dropout_rate: 0.0,
            ..base
        });
        specs
    }

    /// Inverse of [`Architecture::layer_specs`].
    pub fn from_layer_specs(specs: &[LayerSpec]) -> Result<Self> {
        let err = |m: String| Error::Shape(format!("inconsistent layer table: {m}"));
        let (first, rest) = specs.split_first().ok_or_else(|| err("empty".into()))?;
        if first.kind != LayerKind::Dropout {
            return Err(err("first layer must be the input dropout".into()));
        }
        let (head, body) = rest.split_last().ok_or_else(|| err("missing head".into()))?;
        if head.kind != LayerKind::DenseHead || body.len() % 2 != 0 || body.is_empty() {
            return Err(err("expected conv/ELU pairs followed by a dense head".into()));
        }
        let conv = &body[0];
        let arch = Architecture {
            in_channels: first.in_channels,
            kernel: conv.kernel,
            channels: body.chunks(2).map(|p| p[0].out_channels).collect(),
            elu_alpha: body[1].elu_alpha,
            dropout_rate: first.dropout_rate,
        };
        arch.validate()?;
        if arch.layer_specs() != specs {
            return Err(err("layer chain does not match a supported architecture".into()));
        }
        Ok(arch)
    }

    fn conv_len(&self, c_in: usize, c_out: usize) -> usize {
        c_in * self.kernel * self.kernel + c_out * c_in + c_out
    }

    pub fn param_count(&self) -> usize {
        let mut c_in = self.in_channels;
        let mut n = 0;
        for &c_out in &self.channels {
            n += self.conv_len(c_in, c_out);
            c_in = c_out;
        }
        n + HEAD_OUTPUTS * c_in + HEAD_OUTPUTS
    }

    /// Parameter ranges of conv layer `i`: depthwise `[c_in][k][k]`,
    /// pointwise `[c_out][c_in]`, bias `[c_out]`.
    pub fn conv_ranges(&self, layer: usize) -> ConvRanges {
        let mut start = 0;
        let mut c_in = self.in_channels;
        for &c_out in &self.channels[..layer] {
            start += self.conv_len(c_in, c_out);
            c_in = c_out;
        }
        let c_out = self.channels[layer];
        let kk = self.kernel * self.kernel;
        let dw = start..start + c_in * kk;
        let pw = dw.end..dw.end + c_out * c_in;
        let bias = pw.end..pw.end + c_out;
        ConvRanges {
            c_in,
            c_out,
            depthwise: dw,
            pointwise: pw,
            bias,
        }
    }

    /// Head ranges: weight `[4][c_last]`, bias `[4]`.
    pub fn head_ranges(&self) -> (Range<usize>, Range<usize>) {
        let start = self.param_count() - HEAD_OUTPUTS * self.last_channels() - HEAD_OUTPUTS;
        let w = start..start + HEAD_OUTPUTS * self.last_channels();
        let b = w.end..w.end + HEAD_OUTPUTS;
        (w, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvRanges {
    pub c_in: usize,
    pub c_out: usize,
    pub depthwise: Range<usize>,
    pub pointwise: Range<usize>,
    pub bias: Range<usize>,
}

/// Borrowed view of one conv layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct ConvParams<'a, T> {
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub depthwise: &'a [T],
    pub pointwise: &'a [T],
    pub bias: &'a [T],
}

/// Borrowed view of the dense head.
#[derive(Debug, Clone, Copy)]
pub struct HeadParams<'a, T> {
    pub c_in: usize,
    pub weight: &'a [T],
    pub bias: &'a [T],
}

/// All learnable parameters in one flat buffer, laid out layer by layer in
/// declaration order (see [`Architecture::conv_ranges`]).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights<T> {
    arch: Architecture,
    params: Vec<T>,
}

impl<T: Scalar> NetworkWeights<T> {
    pub fn from_params(arch: Architecture, params: Vec<T>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, found {}",
                arch.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidValue("non-finite network weight".into()));
        }
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        let n = arch.param_count();
        Self::from_params(arch, vec![T::zero(); n])
    }

    /// Zero biases; kernels uniform in ±√(6 / (fan_in + fan_out)).
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut w = Self::zeros(arch)?;
        let mut rng = rng_for(seed, &[0x1417]);
        let k2 = w.arch.kernel * w.arch.kernel;
        for layer in 0..w.arch.channels.len() {
            let r = w.arch.conv_ranges(layer);
            fill_uniform(&mut rng, &mut w.params[r.depthwise], k2, k2);
            fill_uniform(&mut rng, &mut w.params[r.pointwise], r.c_in, r.c_out);
        }
        let (hw, _) = w.arch.head_ranges();
        let c_last = w.arch.last_channels();
        fill_uniform(&mut rng, &mut w.params[hw], c_last, HEAD_OUTPUTS);
        Ok(w)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn conv(&self, layer: usize) -> ConvParams<'_, T> {
        let r = self.arch.conv_ranges(layer);
        ConvParams {
            kernel: self.arch.kernel,
            c_in: r.c_in,
            c_out: r.c_out,
            depthwise: &self.params[r.depthwise],
            pointwise: &self.params[r.pointwise],
            bias: &self.params[r.bias],
        }
    }

    pub fn head(&self) -> HeadParams<'_, T> {
        let (w, b) = self.arch.head_ranges();
        HeadParams {
            c_in: self.arch.last_channels(),
            weight: &self.params[w],
            bias: &self.params[b],
        }
    }

    /// Converts every parameter to another precision.
    pub fn cast<U: Scalar>(&self) -> NetworkWeights<U> {
        NetworkWeights {
            arch: self.arch.clone(),
            params: self.params.iter().map(|&p| U::of(p.f64())).collect(),
        }
    }
}

fn fill_uniform<T: Scalar>(rng: &mut impl Rng, out: &mut [T], fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out {
        *v = T::of(rng.random_range(-limit..limit));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_receptive_field_21() {
        assert_eq!(Architecture::desk().receptive_field(), 21);
        assert_eq!(Architecture::paper().receptive_field(), 21);
        assert_eq!(Architecture::desk().margin(), 10);
        assert_eq!(Architecture::paper().channels, vec![512, 256, 128, 64, 32]);
    }

    #[test]
    fn layout_is_contiguous() {
        let arch = Architecture {
            in_channels: 2,
            kernel: 3,
            channels: vec![4, 3],
            elu_alpha: 1.0,
            dropout_rate: 0.5,
        };
        let r0 = arch.conv_ranges(0);
        assert_eq!(r0.depthwise, 0..18);
        assert_eq!(r0.pointwise, 18..26);
        assert_eq!(r0.bias, 26..30);
        let r1 = arch.conv_ranges(1);
        assert_eq!(r1.depthwise.start, 30);
        assert_eq!(r1.bias.end, 30 + 36 + 12 + 3);
        let (hw, hb) = arch.head_ranges();
        assert_eq!(hw.start, r1.bias.end);
        assert_eq!(hb.end, arch.param_count());
    }

    #[test]
    fn layer_table_roundtrip() {
        let arch = Architecture::desk();
        let specs = arch.layer_specs();
        assert_eq!(specs.len(), 1 + 2 * 5 + 1);
        assert_eq!(specs[0].kind, LayerKind::Dropout);
        assert_eq!(specs[1].kernel, 5);
        assert_eq!(specs.last().unwrap().out_channels, 4);
        assert_eq!(Architecture::from_layer_specs(&specs).unwrap(), arch);

        let mut broken = specs.clone();
        broken[3].in_channels = 7;
        assert!(Architecture::from_layer_specs(&broken).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = NetworkWeights::<f32>::init(Architecture::desk(), 3).unwrap();
        let b = NetworkWeights::<f32>::init(Architecture::desk(), 3).unwrap();
        let c = NetworkWeights::<f32>::init(Architecture::desk(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.conv(0).bias.iter().all(|&v| v == 0.0));
        assert!(a.head().bias.iter().all(|&v| v == 0.0));
        let lim = (6.0f32 / 50.0).sqrt();
        assert!(a.conv(2).depthwise.iter().all(|v| v.abs() <= lim));
        assert!(a.conv(2).depthwise.iter().any(|&v| v != 0.0));
    }
}
