use rand::Rng;
use rayon::prelude::*;

use super::loss::GaussianParams;
use super::{ConvParams, HeadParams, Scalar};
use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Activations laid out height × width × channels (channels innermost).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![T::zero(); height * width * channels],
        }
    }

    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "feature map data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[T] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, ch: usize) -> T {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Computes depthwise output rows `row0..row0 + out.len()/row_len` into `out`.
///
/// `Ĝ[k,l,m] = Σ_{i,j} K̂[m,i,j] · F[k+i, l+j, m]` (unpadded).
fn depthwise_rows<T: Scalar>(input: &FeatureMap<T>, p: &ConvParams<'_, T>, row0: usize, out: &mut [T]) {
    let k = p.kernel;
    let c = p.c_in;
    let out_w = input.width + 1 - k;
    let row_len = out_w * c;
    for (dr, out_row) in out.chunks_exact_mut(row_len).enumerate() {
        let r = row0 + dr;
        for col in 0..out_w {
            let acc = &mut out_row[col * c..(col + 1) * c];
            acc.iter_mut().for_each(|v| *v = T::zero());
            for i in 0..k {
                for j in 0..k {
                    let src = input.pixel(r + i, col + j);
                    let tap = i * k + j;
                    for m in 0..c {
                        acc[m] += p.depthwise[m * k * k + tap] * src[m];
                    }
                }
            }
        }
    }
}

/// `Z[pix,o] = b[o] + Σ_c P[o,c] · G[pix,c]` for a run of pixels.
fn pointwise_pixels<T: Scalar>(g: &[T], p: &ConvParams<'_, T>, out: &mut [T]) {
    let (c_in, c_out) = (p.c_in, p.c_out);
    for (src, dst) in g.chunks_exact(c_in).zip(out.chunks_exact_mut(c_out)) {
        for o in 0..c_out {
            let w = &p.pointwise[o * c_in..(o + 1) * c_in];
            let mut acc = p.bias[o];
            for ci in 0..c_in {
                acc += w[ci] * src[ci];
            }
            dst[o] = acc;
        }
    }
}

fn check_conv<T: Scalar>(input: &FeatureMap<T>, p: &ConvParams<'_, T>) -> Result<(usize, usize)> {
    if input.channels != p.c_in {
        return Err(Error::Shape(format!(
            "layer expects {} input channels, got {}",
            p.c_in, input.channels
        )));
    }
    if input.height < p.kernel || input.width < p.kernel {
        return Err(Error::Shape(format!(
            "{}x{} input is smaller than the {}x{} kernel",
            input.height, input.width, p.kernel, p.kernel
        )));
    }
    Ok((input.height + 1 - p.kernel, input.width + 1 - p.kernel))
}

/// Unpadded per-channel spatial convolution.
pub fn depthwise_forward<T: Scalar>(
    input: &FeatureMap<T>,
    p: &ConvParams<'_, T>,
    parallel: bool,
) -> Result<FeatureMap<T>> {
    let (oh, ow) = check_conv(input, p)?;
    let mut out = FeatureMap::zeros(oh, ow, p.c_in);
    let row_len = ow * p.c_in;
    if parallel {
        out.data
            .par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(r, row)| depthwise_rows(input, p, r, row));
    } else {
        depthwise_rows(input, p, 0, &mut out.data);
    }
    Ok(out)
}

/// 1×1 channel-mixing convolution plus bias.
pub fn pointwise_forward<T: Scalar>(
    g: &FeatureMap<T>,
    p: &ConvParams<'_, T>,
    parallel: bool,
) -> Result<FeatureMap<T>> {
    if g.channels != p.c_in {
        return Err(Error::Shape("pointwise input channel mismatch".into()));
    }
    let mut out = FeatureMap::zeros(g.height, g.width, p.c_out);
    let (in_row, out_row) = (g.width * p.c_in, g.width * p.c_out);
    if parallel {
        out.data
            .par_chunks_mut(out_row)
            .zip(g.data.par_chunks(in_row))
            .for_each(|(dst, src)| pointwise_pixels(src, p, dst));
    } else {
        pointwise_pixels(&g.data, p, &mut out.data);
    }
    Ok(out)
}

/// Depthwise then pointwise; returns the pre-activation output.
pub fn depthwise_separable_forward<T: Scalar>(
    input: &FeatureMap<T>,
    p: &ConvParams<'_, T>,
) -> Result<FeatureMap<T>> {
    pointwise_forward(&depthwise_forward(input, p, false)?, p, false)
}

#[inline]
pub fn elu<T: Scalar>(x: T, alpha: T) -> T {
    if x >= T::zero() {
        x
    } else {
        alpha * (x.exp() - T::one())
    }
}

/// Derivative of ELU at pre-activation `x`.
#[inline]
pub fn elu_grad<T: Scalar>(x: T, alpha: T) -> T {
    if x >= T::zero() {
        T::one()
    } else {
        alpha * x.exp()
    }
}

pub fn elu_forward<T: Scalar>(x: &[T], alpha: T) -> Vec<T> {
    x.iter().map(|&v| elu(v, alpha)).collect()
}

/// Upstream gradient times the ELU derivative at the cached pre-activation.
pub fn elu_backward<T: Scalar>(upstream: &[T], pre: &[T], alpha: T) -> Vec<T> {
    upstream
        .iter()
        .zip(pre)
        .map(|(&g, &x)| g * elu_grad(x, alpha))
        .collect()
}

/// Keep-mask for inverted dropout; `true` keeps the activation.
pub fn dropout_mask(len: usize, rate: f64, seed: u64) -> Vec<bool> {
    let mut rng = rng_for(seed, &[0xd0]);
    (0..len).map(|_| rng.random::<f64>() >= rate).collect()
}

/// Inverted dropout: in training, zero each activation with probability
/// `rate` and scale survivors by `1/(1-rate)`; identity otherwise.
pub fn dropout_forward<T: Scalar>(x: &[T], rate: f64, training: bool, seed: u64) -> Vec<T> {
    if !training || rate == 0.0 {
        return x.to_vec();
    }
    let scale = T::of(1.0 / (1.0 - rate));
    x.iter()
        .zip(dropout_mask(x.len(), rate, seed))
        .map(|(&v, keep)| if keep { v * scale } else { T::zero() })
        .collect()
}

/// Dense head on one pixel's feature vector: raw `(μ_R, μ_I, s_R, s_I)` and
/// the Gaussian it parameterizes.
pub fn dense_head_forward<T: Scalar>(features: &[T], head: &HeadParams<'_, T>) -> ([T; 4], GaussianParams<T>) {
    debug_assert_eq!(features.len(), head.c_in);
    let mut raw = [T::zero(); 4];
    for (o, r) in raw.iter_mut().enumerate() {
        let w = &head.weight[o * head.c_in..(o + 1) * head.c_in];
        let mut acc = head.bias[o];
        for (wi, fi) in w.iter().zip(features) {
            acc += *wi * *fi;
        }
        *r = acc;
    }
    (raw, GaussianParams::from_raw(raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::{Architecture, NetworkWeights};

    fn single_layer(c_in: usize, c_out: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            vec![0.0; c_in * 25],
            vec![0.0; c_out * c_in],
            vec![0.0; c_out],
        )
    }

    #[test]
    fn delta_kernel_crops() {
        let (mut dw, mut pw, bias) = single_layer(2, 2);
        for m in 0..2 {
            dw[m * 25 + 12] = 1.0;
            pw[m * 2 + m] = 1.0;
        }
        let p = ConvParams {
            kernel: 5,
            c_in: 2,
            c_out: 2,
            depthwise: &dw,
            pointwise: &pw,
            bias: &bias,
        };
        let data: Vec<f64> = (0..9 * 8 * 2).map(|i| (i as f64 * 0.37).sin()).collect();
        let input = FeatureMap::new(9, 8, 2, data).unwrap();
        let out = depthwise_separable_forward(&input, &p).unwrap();
        assert_eq!((out.height, out.width, out.channels), (5, 4, 2));
        for r in 0..5 {
            for c in 0..4 {
                assert_eq!(out.pixel(r, c), input.pixel(r + 2, c + 2));
            }
        }
    }

    #[test]
    fn ones_kernel_sums_window() {
        let (_, pw, bias) = single_layer(1, 1);
        let dw = vec![1.0; 25];
        let p = ConvParams {
            kernel: 5,
            c_in: 1,
            c_out: 1,
            depthwise: &dw,
            pointwise: &pw,
            bias: &bias,
        };
        let input = FeatureMap::new(7, 7, 1, vec![1.0; 49]).unwrap();
        let g = depthwise_forward(&input, &p, false).unwrap();
        assert_eq!((g.height, g.width), (3, 3));
        assert!(g.data.iter().all(|&v| v == 25.0));
    }

    #[test]
    fn random_weights_shape_and_parallel_agreement() {
        let arch = Architecture {
            in_channels: 2,
            kernel: 5,
            channels: vec![3],
            elu_alpha: 1.0,
            dropout_rate: 0.5,
        };
        let w = NetworkWeights::<f32>::init(arch, 1).unwrap();
        let data: Vec<f32> = (0..9 * 9 * 2).map(|i| (i as f32 * 0.11).cos()).collect();
        let input = FeatureMap::new(9, 9, 2, data).unwrap();
        let p = w.conv(0);
        let out = depthwise_separable_forward(&input, &p).unwrap();
        assert_eq!((out.height, out.width, out.channels), (5, 5, 3));
        let par = pointwise_forward(&depthwise_forward(&input, &p, true).unwrap(), &p, true).unwrap();
        assert_eq!(par, out);

        let wrong = FeatureMap::new(9, 9, 1, vec![0.0f32; 81]).unwrap();
        assert!(matches!(
            depthwise_separable_forward(&wrong, &p),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn elu_values() {
        assert_eq!(elu(0.0, 1.0), 0.0);
        assert_eq!(elu(2.5, 1.0), 2.5);
        assert_eq!(elu(-1e3, 1.0), -1.0);
        // e^{-1} − 1
        assert!((elu(-1.0f64, 1.0) + 0.632_120_558_828_557_7).abs() < 1e-15);
        assert_eq!(elu_grad(0.0, 1.0), 1.0);
        assert!((elu_grad(-1.0f64, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(
            elu_backward(&[2.0, 2.0], &[1.0, -1.0], 1.0),
            vec![2.0, 2.0 * (-1.0f64).exp()]
        );
    }

    #[test]
    fn dropout_statistics() {
        let x: Vec<f64> = (0..1_000_000).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        assert_eq!(dropout_forward(&x[..100], 0.5, false, 1), x[..100].to_vec());
        assert_eq!(dropout_forward(&x[..100], 0.0, true, 1), x[..100].to_vec());

        let y = dropout_forward(&x, 0.5, true, 42);
        let zeros = y.iter().filter(|&&v| v == 0.0).count() as f64 / y.len() as f64;
        assert!((0.498..=0.502).contains(&zeros), "zero fraction {zeros}");
        let mean_x = x.iter().sum::<f64>() / x.len() as f64;
        let mean_y = y.iter().sum::<f64>() / y.len() as f64;
        assert!(((mean_y - mean_x) / mean_x).abs() < 0.01);
        assert_eq!(y, dropout_forward(&x, 0.5, true, 42));
    }

    #[test]
    fn dense_head_examples() {
        let arch = Architecture::desk();
        let w = NetworkWeights::<f64>::zeros(arch).unwrap();
        let (_, g) = dense_head_forward(&[0.3; 8], &w.head());
        assert_eq!((g.mu_r, g.mu_i, g.sigma_r, g.sigma_i), (0.0, 0.0, 1.0, 1.0));

        let weight = vec![0.0f64; 4];
        let bias = vec![0.1, -0.2, -3.0, 5.0];
        let head = HeadParams {
            c_in: 1,
            weight: &weight,
            bias: &bias,
        };
        let (raw, g) = dense_head_forward(&[1.0], &head);
        assert_eq!(raw, [0.1, -0.2, -3.0, 5.0]);
        assert!((g.sigma_r - 0.049_787_068_367_863_94).abs() < 1e-15);
        assert_eq!(g.sigma_i, 1.0);
    }
}
