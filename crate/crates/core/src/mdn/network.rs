use rayon::prelude::*;

use super::layers::{
    dense_head_forward, depthwise_forward, dropout_forward, elu_backward, elu_forward,
    pointwise_forward, FeatureMap,
};
use super::loss::{gaussian_nll_grad, GaussianParams};
use super::{NetworkWeights, Scalar, HEAD_OUTPUTS};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct LayerCache<T> {
    input: FeatureMap<T>,
    depthwise: FeatureMap<T>,
    pre: FeatureMap<T>,
}

/// Activations kept from a single-pixel forward pass for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
    features: Vec<T>,
    raw: [T; 4],
}

impl<T: Scalar> ForwardCache<T> {
    pub fn raw(&self) -> [T; 4] {
        self.raw
    }

    pub fn params(&self) -> GaussianParams<T> {
        GaussianParams::from_raw(self.raw)
    }

    /// Last conv block's activated output for the single pixel.
    pub fn features(&self) -> &[T] {
        &self.features
    }
}

/// One training example: a receptive-field-sized input window (center
/// already zeroed by the caller), the target phasor and the seed of its
/// dropout mask.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub input: FeatureMap<T>,
    pub target: (T, T),
    pub dropout_seed: u64,
}

/// Forward pass over a receptive-field-sized window, caching activations.
///
/// `dropout_seed = Some(seed)` applies training-mode input dropout.
pub fn forward<T: Scalar>(
    w: &NetworkWeights<T>,
    input: &FeatureMap<T>,
    dropout_seed: Option<u64>,
) -> Result<ForwardCache<T>> {
    let arch = w.arch();
    let rf = arch.receptive_field();
    if input.height != rf || input.width != rf || input.channels != arch.in_channels {
        return Err(Error::Shape(format!(
            "expected a {rf}x{rf}x{} window, got {}x{}x{}",
            arch.in_channels, input.height, input.width, input.channels
        )));
    }
    let mut current = match dropout_seed {
        Some(seed) => FeatureMap {
            data: dropout_forward(&input.data, arch.dropout_rate, true, seed),
            ..input.clone()
        },
        None => input.clone(),
    };
    let alpha = T::of(arch.elu_alpha);
    let mut layers = Vec::with_capacity(arch.channels.len());
    for layer in 0..arch.channels.len() {
        let p = w.conv(layer);
        let depthwise = depthwise_forward(&current, &p, false)?;
        let pre = pointwise_forward(&depthwise, &p, false)?;
        let act = FeatureMap {
            data: elu_forward(&pre.data, alpha),
            ..pre.clone()
        };
        layers.push(LayerCache {
            input: current,
            depthwise,
            pre,
        });
        current = act;
    }
    let (raw, _) = dense_head_forward(&current.data, &w.head());
    Ok(ForwardCache {
        layers,
        features: current.data,
        raw,
    })
}

/// Loss and gradient of one sample's NLL with respect to every parameter,
/// in the flat parameter layout.
pub fn backward<T: Scalar>(w: &NetworkWeights<T>, cache: &ForwardCache<T>, target: (T, T)) -> (T, Vec<T>) {
    let arch = w.arch();
    let mut grads = vec![T::zero(); arch.param_count()];
    let (loss, d_raw) = gaussian_nll_grad(cache.raw, target);

    let (hw, hb) = arch.head_ranges();
    let head = w.head();
    let c_last = head.c_in;
    let mut d_act = vec![T::zero(); c_last];
    for o in 0..HEAD_OUTPUTS {
        grads[hb.start + o] = d_raw[o];
        for c in 0..c_last {
            grads[hw.start + o * c_last + c] = d_raw[o] * cache.features[c];
            d_act[c] += head.weight[o * c_last + c] * d_raw[o];
        }
    }

    let alpha = T::of(arch.elu_alpha);
    let k = arch.kernel;
    let kk = k * k;
    for layer in (0..arch.channels.len()).rev() {
        let lc = &cache.layers[layer];
        let p = w.conv(layer);
        let r = arch.conv_ranges(layer);
        let (c_in, c_out) = (p.c_in, p.c_out);
        let dz = elu_backward(&d_act, &lc.pre.data, alpha);

        let g = &lc.depthwise;
        let mut dg = vec![T::zero(); g.data.len()];
        for pix in 0..g.height * g.width {
            let gv = &g.data[pix * c_in..(pix + 1) * c_in];
            let dgv = &mut dg[pix * c_in..(pix + 1) * c_in];
            for o in 0..c_out {
                let d = dz[pix * c_out + o];
                grads[r.bias.start + o] += d;
                let pw_row = r.pointwise.start + o * c_in;
                for c in 0..c_in {
                    grads[pw_row + c] += d * gv[c];
                    dgv[c] += p.pointwise[o * c_in + c] * d;
                }
            }
        }

        let input = &lc.input;
        let need_input_grad = layer > 0;
        let mut d_in = if need_input_grad {
            vec![T::zero(); input.data.len()]
        } else {
            Vec::new()
        };
        for row in 0..g.height {
            for col in 0..g.width {
                let dgv = &dg[(row * g.width + col) * c_in..(row * g.width + col + 1) * c_in];
                for i in 0..k {
                    for j in 0..k {
                        let base = ((row + i) * input.width + col + j) * c_in;
                        for m in 0..c_in {
                            let tap = m * kk + i * k + j;
                            grads[r.depthwise.start + tap] += dgv[m] * input.data[base + m];
                            if need_input_grad {
                                d_in[base + m] += dgv[m] * p.depthwise[tap];
                            }
                        }
                    }
                }
            }
        }
        d_act = d_in;
    }
    (loss, grads)
}

/// Loss of a single sample without gradients.
pub fn sample_loss<T: Scalar>(w: &NetworkWeights<T>, sample: &Sample<T>, training: bool) -> Result<T> {
    let cache = forward(w, &sample.input, training.then_some(sample.dropout_seed))?;
    Ok(super::loss::gaussian_nll(&cache.params(), sample.target))
}

/// Batch-mean loss and gradient, accumulated in `f64` in sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
}

pub fn batch_gradient<T: Scalar>(
    w: &NetworkWeights<T>,
    samples: &[Sample<T>],
    training: bool,
) -> Result<BatchGradient> {
    if samples.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let per_sample: Vec<(T, Vec<T>)> = samples
        .par_iter()
        .map(|s| {
            let cache = forward(w, &s.input, training.then_some(s.dropout_seed))?;
            Ok(backward(w, &cache, s.target))
        })
        .collect::<Result<_>>()?;
    let n = w.arch().param_count();
    let mut grad = vec![0.0f64; n];
    let mut loss = 0.0f64;
    for (l, g) in &per_sample {
        loss += l.f64();
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v.f64();
        }
    }
    let scale = 1.0 / samples.len() as f64;
    grad.iter_mut().for_each(|v| *v *= scale);
    Ok(BatchGradient {
        loss: loss * scale,
        grad,
    })
}

/// The convolutional stage over a whole (already padded) image: every conv
/// block with ELU, no dropout. Output shrinks by the receptive-field margin.
pub fn convolve<T: Scalar>(w: &NetworkWeights<T>, image: &FeatureMap<T>) -> Result<FeatureMap<T>> {
    let arch = w.arch();
    if image.channels != arch.in_channels {
        return Err(Error::Shape(format!(
            "expected {} input channels, got {}",
            arch.in_channels, image.channels
        )));
    }
    let alpha = T::of(arch.elu_alpha);
    let mut current = image.clone();
    for layer in 0..arch.channels.len() {
        let p = w.conv(layer);
        let g = depthwise_forward(&current, &p, true)?;
        let mut z = pointwise_forward(&g, &p, true)?;
        z.data.par_iter_mut().for_each(|v| *v = super::layers::elu(*v, alpha));
        current = z;
    }
    Ok(current)
}

/// The dense head applied independently to every pixel, `chunk` pixels per
/// work item. Results do not depend on `chunk`.
pub fn combine_pixels<T: Scalar>(
    w: &NetworkWeights<T>,
    features: &FeatureMap<T>,
    chunk: usize,
) -> Result<Vec<GaussianParams<T>>> {
    let c = w.arch().last_channels();
    if features.channels != c {
        return Err(Error::Shape(format!(
            "combiner expects {c} channels, got {}",
            features.channels
        )));
    }
    let head = w.head();
    Ok(features
        .data
        .par_chunks(chunk.max(1) * c)
        .flat_map_iter(|block| {
            block
                .chunks_exact(c)
                .map(|px| dense_head_forward(px, &head).1)
                .collect::<Vec<_>>()
        })
        .collect())
}
