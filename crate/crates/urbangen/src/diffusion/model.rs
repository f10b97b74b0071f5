//! A small conditional noise predictor with explicit backpropagation.
//!
//! Encoder-decoder with two stride-2 downsampling levels and two
//! nearest-neighbor upsampling levels. The timestep enters through a
//! sinusoidal embedding and the conditioning vector through a linear
//! projection; both are added per-channel at the bottleneck. Activations
//! are SiLU, which keeps finite-difference gradient checks clean.
//!
//! Everything is plain `f64` with hand-written forward/backward passes, so
//! every parameter is reachable by index and the whole model can be checked
//! against central differences.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::Pcg32;
use crate::tensor::ImageTensor;

/// Architecture descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub base_channels: usize,
    pub mid_channels: usize,
    pub cond_dim: usize,
    /// Sinusoidal timestep embedding width; must be even.
    pub time_dim: usize,
    /// Convolution kernel size (odd).
    pub kernel: usize,
}

impl ArchSpec {
    /// Desk-scale default: 3x64x64 images, 64-dim conditioning.
    pub fn desk_default() -> ArchSpec {
        ArchSpec {
            channels: 3,
            height: 64,
            width: 64,
            base_channels: 16,
            mid_channels: 32,
            cond_dim: 64,
            time_dim: 16,
            kernel: 3,
        }
    }

    /// Smallest valid model; every parameter can be finite-difference
    /// checked in microseconds.
    pub fn micro() -> ArchSpec {
        ArchSpec {
            channels: 1,
            height: 4,
            width: 4,
            base_channels: 1,
            mid_channels: 1,
            cond_dim: 1,
            time_dim: 2,
            kernel: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height % 4 != 0 || self.width % 4 != 0 {
            return Err(Error::Invalid(format!(
                "height/width must be divisible by 4, got {}x{}",
                self.height, self.width
            )));
        }
        if self.time_dim == 0 || self.time_dim % 2 != 0 {
            return Err(Error::Invalid(format!(
                "time_dim must be even and positive, got {}",
                self.time_dim
            )));
        }
        if self.kernel % 2 == 0 || self.kernel == 0 {
            return Err(Error::Invalid(format!(
                "kernel must be odd, got {}",
                self.kernel
            )));
        }
        if self.channels == 0
            || self.base_channels == 0
            || self.mid_channels == 0
            || self.cond_dim == 0
        {
            return Err(Error::Invalid("zero-sized layer dimension".into()));
        }
        Ok(())
    }
}

/// Sinusoidal timestep embedding of even width `dim`.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut e = vec![0.0; dim];
    for i in 0..half {
        let freq = (10_000.0f64).powf(-(i as f64) / half as f64);
        let arg = t as f64 * freq;
        e[2 * i] = arg.sin();
        e[2 * i + 1] = arg.cos();
    }
    e
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

#[derive(Debug, Clone)]
pub(crate) struct Conv2d {
    in_c: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    pad: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    fn init(in_c: usize, out_c: usize, k: usize, stride: usize, rng: &mut Pcg32) -> Conv2d {
        let fan_in = (in_c * k * k) as f64;
        let scale = (1.0 / fan_in).sqrt();
        let weight = (0..out_c * in_c * k * k)
            .map(|_| rng.next_gaussian() * scale)
            .collect();
        Conv2d {
            in_c,
            out_c,
            k,
            stride,
            pad: k / 2,
            weight,
            bias: vec![0.0; out_c],
        }
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    fn forward(&self, input: &ImageTensor) -> ImageTensor {
        debug_assert_eq!(input.channels, self.in_c);
        let (oh, ow) = self.out_hw(input.height, input.width);
        let mut out = ImageTensor::zeros(self.out_c, oh, ow);
        for oc in 0..self.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = self.bias[oc];
                    for ic in 0..self.in_c {
                        for ky in 0..self.k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= input.height as isize {
                                continue;
                            }
                            for kx in 0..self.k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= input.width as isize {
                                    continue;
                                }
                                let w = self.weight
                                    [((oc * self.in_c + ic) * self.k + ky) * self.k + kx];
                                acc += w * input.at(ic, iy as usize, ix as usize);
                            }
                        }
                    }
                    *out.at_mut(oc, oy, ox) = acc;
                }
            }
        }
        out
    }

    /// Returns `(grad_input, grad_weight, grad_bias)`.
    fn backward(
        &self,
        input: &ImageTensor,
        grad_out: &ImageTensor,
    ) -> (ImageTensor, Vec<f64>, Vec<f64>) {
        let mut grad_in = ImageTensor::zeros(input.channels, input.height, input.width);
        let mut grad_w = vec![0.0; self.weight.len()];
        let mut grad_b = vec![0.0; self.bias.len()];
        for oc in 0..self.out_c {
            for oy in 0..grad_out.height {
                for ox in 0..grad_out.width {
                    let g = grad_out.at(oc, oy, ox);
                    grad_b[oc] += g;
                    for ic in 0..self.in_c {
                        for ky in 0..self.k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= input.height as isize {
                                continue;
                            }
                            for kx in 0..self.k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= input.width as isize {
                                    continue;
                                }
                                let widx =
                                    ((oc * self.in_c + ic) * self.k + ky) * self.k + kx;
                                grad_w[widx] += g * input.at(ic, iy as usize, ix as usize);
                                *grad_in.at_mut(ic, iy as usize, ix as usize) +=
                                    g * self.weight[widx];
                            }
                        }
                    }
                }
            }
        }
        (grad_in, grad_w, grad_b)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Dense {
    in_d: usize,
    out_d: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn init(in_d: usize, out_d: usize, rng: &mut Pcg32) -> Dense {
        let scale = (1.0 / in_d as f64).sqrt();
        Dense {
            in_d,
            out_d,
            weight: (0..out_d * in_d).map(|_| rng.next_gaussian() * scale).collect(),
            bias: vec![0.0; out_d],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_d);
        (0..self.out_d)
            .map(|o| {
                self.bias[o]
                    + (0..self.in_d)
                        .map(|i| self.weight[o * self.in_d + i] * x[i])
                        .sum::<f64>()
            })
            .collect()
    }

    fn backward(&self, x: &[f64], grad_out: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut grad_x = vec![0.0; self.in_d];
        let mut grad_w = vec![0.0; self.weight.len()];
        for o in 0..self.out_d {
            let g = grad_out[o];
            for i in 0..self.in_d {
                grad_w[o * self.in_d + i] += g * x[i];
                grad_x[i] += g * self.weight[o * self.in_d + i];
            }
        }
        (grad_x, grad_w, grad_out.to_vec())
    }
}

fn upsample2(input: &ImageTensor) -> ImageTensor {
    let mut out = ImageTensor::zeros(input.channels, input.height * 2, input.width * 2);
    for c in 0..input.channels {
        for y in 0..out.height {
            for x in 0..out.width {
                *out.at_mut(c, y, x) = input.at(c, y / 2, x / 2);
            }
        }
    }
    out
}

fn upsample2_backward(grad_out: &ImageTensor) -> ImageTensor {
    let mut grad_in =
        ImageTensor::zeros(grad_out.channels, grad_out.height / 2, grad_out.width / 2);
    for c in 0..grad_out.channels {
        for y in 0..grad_out.height {
            for x in 0..grad_out.width {
                *grad_in.at_mut(c, y / 2, x / 2) += grad_out.at(c, y, x);
            }
        }
    }
    grad_in
}

fn silu_map(t: &ImageTensor) -> ImageTensor {
    ImageTensor {
        channels: t.channels,
        height: t.height,
        width: t.width,
        data: t.data.iter().map(|&x| silu(x)).collect(),
    }
}

fn silu_backward(pre: &ImageTensor, grad: &ImageTensor) -> ImageTensor {
    ImageTensor {
        channels: pre.channels,
        height: pre.height,
        width: pre.width,
        data: pre
            .data
            .iter()
            .zip(&grad.data)
            .map(|(&x, &g)| g * silu_grad(x))
            .collect(),
    }
}

/// The denoiser: predicts the noise component of `z_t` given the timestep
/// and a conditioning vector.
#[derive(Debug, Clone)]
pub struct Denoiser {
    arch: ArchSpec,
    pub(crate) conv_in: Conv2d,
    pub(crate) enc1: Conv2d,
    pub(crate) enc2: Conv2d,
    pub(crate) time_proj: Dense,
    pub(crate) cond_proj: Dense,
    pub(crate) mid_conv: Conv2d,
    pub(crate) dec1: Conv2d,
    pub(crate) dec2: Conv2d,
    pub(crate) conv_out: Conv2d,
}

/// Intermediate activations retained for the backward pass.
pub struct ForwardCache {
    x: ImageTensor,
    a0: ImageTensor,
    h0: ImageTensor,
    a1: ImageTensor,
    h1: ImageTensor,
    a2: ImageTensor,
    t_emb: Vec<f64>,
    cond: Vec<f64>,
    b2: ImageTensor,
    a3: ImageTensor,
    u1: ImageTensor,
    a4: ImageTensor,
    u2: ImageTensor,
    a5: ImageTensor,
    h5: ImageTensor,
}

impl Denoiser {
    pub fn init(arch: ArchSpec, seed: u64) -> Result<Denoiser> {
        arch.validate()?;
        let mut rng = Pcg32::with_stream(seed, 0x6d6f64656c);
        Ok(Denoiser {
            arch,
            conv_in: Conv2d::init(arch.channels, arch.base_channels, arch.kernel, 1, &mut rng),
            enc1: Conv2d::init(arch.base_channels, arch.mid_channels, arch.kernel, 2, &mut rng),
            enc2: Conv2d::init(arch.mid_channels, arch.mid_channels, arch.kernel, 2, &mut rng),
            time_proj: Dense::init(arch.time_dim, arch.mid_channels, &mut rng),
            cond_proj: Dense::init(arch.cond_dim, arch.mid_channels, &mut rng),
            mid_conv: Conv2d::init(arch.mid_channels, arch.mid_channels, arch.kernel, 1, &mut rng),
            dec1: Conv2d::init(arch.mid_channels, arch.base_channels, arch.kernel, 1, &mut rng),
            dec2: Conv2d::init(arch.base_channels, arch.base_channels, arch.kernel, 1, &mut rng),
            conv_out: Conv2d::init(arch.base_channels, arch.channels, arch.kernel, 1, &mut rng),
        })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn check_input(&self, x: &ImageTensor, cond: &[f64]) -> Result<()> {
        if x.channels != self.arch.channels
            || x.height != self.arch.height
            || x.width != self.arch.width
        {
            return Err(Error::Invalid(format!(
                "input shape {}x{}x{} does not match model {}x{}x{}",
                x.channels, x.height, x.width,
                self.arch.channels, self.arch.height, self.arch.width
            )));
        }
        if cond.len() != self.arch.cond_dim {
            return Err(Error::Invalid(format!(
                "conditioning dim {} does not match model {}",
                cond.len(),
                self.arch.cond_dim
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &ImageTensor, t: usize, cond: &[f64]) -> Result<ImageTensor> {
        self.check_input(x, cond)?;
        Ok(self.forward_cached(x, t, cond).0)
    }

    pub(crate) fn forward_cached(
        &self,
        x: &ImageTensor,
        t: usize,
        cond: &[f64],
    ) -> (ImageTensor, ForwardCache) {
        let a0 = self.conv_in.forward(x);
        let h0 = silu_map(&a0);
        let a1 = self.enc1.forward(&h0);
        let h1 = silu_map(&a1);
        let a2 = self.enc2.forward(&h1);
        let h2 = silu_map(&a2);

        let t_emb = time_embedding(t, self.arch.time_dim);
        let e_time = self.time_proj.forward(&t_emb);
        let e_cond = self.cond_proj.forward(cond);
        let mut b2 = h2.clone();
        for c in 0..b2.channels {
            let e = e_time[c] + e_cond[c];
            for y in 0..b2.height {
                for xx in 0..b2.width {
                    *b2.at_mut(c, y, xx) += e;
                }
            }
        }

        let a3 = self.mid_conv.forward(&b2);
        let h3 = silu_map(&a3);
        let u1 = upsample2(&h3);
        let a4 = self.dec1.forward(&u1);
        let h4 = silu_map(&a4);
        let u2 = upsample2(&h4);
        let a5 = self.dec2.forward(&u2);
        let h5 = silu_map(&a5);
        let out = self.conv_out.forward(&h5);

        let cache = ForwardCache {
            x: x.clone(),
            a0,
            h0,
            a1,
            h1,
            a2,
            t_emb,
            cond: cond.to_vec(),
            b2,
            a3,
            u1,
            a4,
            u2,
            a5,
            h5,
        };
        (out, cache)
    }

    /// Backpropagates `grad_out`; returns flat parameter gradients (aligned
    /// with [`Denoiser::params_flat`]) and the gradient w.r.t. the input.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &ImageTensor,
    ) -> (Vec<f64>, ImageTensor) {
        let (g_h5, gw_out, gb_out) = self.conv_out.backward(&cache.h5, grad_out);
        let g_a5 = silu_backward(&cache.a5, &g_h5);
        let (g_u2, gw_dec2, gb_dec2) = self.dec2.backward(&cache.u2, &g_a5);
        let g_h4 = upsample2_backward(&g_u2);
        let g_a4 = silu_backward(&cache.a4, &g_h4);
        let (g_u1, gw_dec1, gb_dec1) = self.dec1.backward(&cache.u1, &g_a4);
        let g_h3 = upsample2_backward(&g_u1);
        let g_a3 = silu_backward(&cache.a3, &g_h3);
        let (g_b2, gw_mid, gb_mid) = self.mid_conv.backward(&cache.b2, &g_a3);

        // Broadcast add: embedding gradient is the spatial sum per channel.
        let mut g_e = vec![0.0; self.arch.mid_channels];
        for c in 0..g_b2.channels {
            for y in 0..g_b2.height {
                for x in 0..g_b2.width {
                    g_e[c] += g_b2.at(c, y, x);
                }
            }
        }
        let (_, gw_time, gb_time) = self.time_proj.backward(&cache.t_emb, &g_e);
        let (_, gw_cond, gb_cond) = self.cond_proj.backward(&cache.cond, &g_e);

        let g_h2 = g_b2;
        let g_a2 = silu_backward(&cache.a2, &g_h2);
        let (g_h1, gw_enc2, gb_enc2) = self.enc2.backward(&cache.h1, &g_a2);
        let g_a1 = silu_backward(&cache.a1, &g_h1);
        let (g_h0, gw_enc1, gb_enc1) = self.enc1.backward(&cache.h0, &g_a1);
        let g_a0 = silu_backward(&cache.a0, &g_h0);
        let (g_x, gw_in, gb_in) = self.conv_in.backward(&cache.x, &g_a0);

        let mut grads = Vec::with_capacity(self.param_count());
        for part in [
            &gw_in, &gb_in, &gw_enc1, &gb_enc1, &gw_enc2, &gb_enc2, &gw_time, &gb_time,
            &gw_cond, &gb_cond, &gw_mid, &gb_mid, &gw_dec1, &gb_dec1, &gw_dec2, &gb_dec2,
            &gw_out, &gb_out,
        ] {
            grads.extend_from_slice(part);
        }
        (grads, g_x)
    }

    fn tensor_refs(&self) -> Vec<(&'static str, Vec<usize>, &Vec<f64>)> {
        let a = &self.arch;
        let k = a.kernel;
        vec![
            ("conv_in.weight", vec![a.base_channels, a.channels, k, k], &self.conv_in.weight),
            ("conv_in.bias", vec![a.base_channels], &self.conv_in.bias),
            ("enc1.weight", vec![a.mid_channels, a.base_channels, k, k], &self.enc1.weight),
            ("enc1.bias", vec![a.mid_channels], &self.enc1.bias),
            ("enc2.weight", vec![a.mid_channels, a.mid_channels, k, k], &self.enc2.weight),
            ("enc2.bias", vec![a.mid_channels], &self.enc2.bias),
            ("time_proj.weight", vec![a.mid_channels, a.time_dim], &self.time_proj.weight),
            ("time_proj.bias", vec![a.mid_channels], &self.time_proj.bias),
            ("cond_proj.weight", vec![a.mid_channels, a.cond_dim], &self.cond_proj.weight),
            ("cond_proj.bias", vec![a.mid_channels], &self.cond_proj.bias),
            ("mid_conv.weight", vec![a.mid_channels, a.mid_channels, k, k], &self.mid_conv.weight),
            ("mid_conv.bias", vec![a.mid_channels], &self.mid_conv.bias),
            ("dec1.weight", vec![a.base_channels, a.mid_channels, k, k], &self.dec1.weight),
            ("dec1.bias", vec![a.base_channels], &self.dec1.bias),
            ("dec2.weight", vec![a.base_channels, a.base_channels, k, k], &self.dec2.weight),
            ("dec2.bias", vec![a.base_channels], &self.dec2.bias),
            ("conv_out.weight", vec![a.channels, a.base_channels, k, k], &self.conv_out.weight),
            ("conv_out.bias", vec![a.channels], &self.conv_out.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        vec![
            ("conv_in.weight", &mut self.conv_in.weight),
            ("conv_in.bias", &mut self.conv_in.bias),
            ("enc1.weight", &mut self.enc1.weight),
            ("enc1.bias", &mut self.enc1.bias),
            ("enc2.weight", &mut self.enc2.weight),
            ("enc2.bias", &mut self.enc2.bias),
            ("time_proj.weight", &mut self.time_proj.weight),
            ("time_proj.bias", &mut self.time_proj.bias),
            ("cond_proj.weight", &mut self.cond_proj.weight),
            ("cond_proj.bias", &mut self.cond_proj.bias),
            ("mid_conv.weight", &mut self.mid_conv.weight),
            ("mid_conv.bias", &mut self.mid_conv.bias),
            ("dec1.weight", &mut self.dec1.weight),
            ("dec1.bias", &mut self.dec1.bias),
            ("dec2.weight", &mut self.dec2.weight),
            ("dec2.bias", &mut self.dec2.bias),
            ("conv_out.weight", &mut self.conv_out.weight),
            ("conv_out.bias", &mut self.conv_out.bias),
        ]
    }

    /// Named tensors in checkpoint order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.tensor_refs()
            .into_iter()
            .map(|(n, s, d)| (n.to_string(), s, d.clone()))
            .collect()
    }

    pub fn set_named_tensor(&mut self, name: &str, data: &[f64]) -> Result<()> {
        for (n, t) in self.tensors_mut() {
            if n == name {
                if t.len() != data.len() {
                    return Err(Error::Invalid(format!(
                        "tensor {name} expects {} values, got {}",
                        t.len(),
                        data.len()
                    )));
                }
                t.copy_from_slice(data);
                return Ok(());
            }
        }
        Err(Error::Invalid(format!("unknown tensor {name}")))
    }

    pub fn param_count(&self) -> usize {
        self.tensor_refs().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, _, d) in self.tensor_refs() {
            out.extend_from_slice(d);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&params[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, params.len());
    }

    /// `p -= lr * g` over the flat layout.
    pub fn apply_update(&mut self, grads: &[f64], lr: f64) {
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            for v in t.iter_mut() {
                *v -= lr * grads[offset];
                offset += 1;
            }
        }
        assert_eq!(offset, grads.len());
    }

    /// SHA-256 over the little-endian f64 parameter bytes.
    pub fn param_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (_, _, d) in self.tensor_refs() {
            for v in d {
                hasher.update(v.to_le_bytes());
            }
        }
        format!("{:x}", hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> Denoiser {
        Denoiser::init(ArchSpec::micro(), 77).unwrap()
    }

    fn gaussian_tensor(arch: &ArchSpec, seed: u64) -> ImageTensor {
        let mut rng = Pcg32::new(seed);
        let mut t = ImageTensor::zeros(arch.channels, arch.height, arch.width);
        for v in &mut t.data {
            *v = rng.next_gaussian();
        }
        t
    }

    #[test]
    fn forward_shape_matches_input() {
        let m = micro();
        let x = gaussian_tensor(m.arch(), 1);
        let y = m.forward(&x, 3, &[0.5]).unwrap();
        assert!(x.same_shape(&y));
    }

    #[test]
    fn forward_is_deterministic() {
        let m = micro();
        let x = gaussian_tensor(m.arch(), 2);
        let a = m.forward(&x, 5, &[0.3]).unwrap();
        let b = m.forward(&x, 5, &[0.3]).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = Denoiser::init(ArchSpec::micro(), 9).unwrap();
        let b = Denoiser::init(ArchSpec::micro(), 9).unwrap();
        assert_eq!(a.params_flat(), b.params_flat());
        let c = Denoiser::init(ArchSpec::micro(), 10).unwrap();
        assert_ne!(a.params_flat(), c.params_flat());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = micro();
        let bad = ImageTensor::zeros(1, 8, 8);
        assert!(m.forward(&bad, 1, &[0.0]).is_err());
        let x = gaussian_tensor(m.arch(), 3);
        assert!(m.forward(&x, 1, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn micro_model_is_small() {
        let m = micro();
        assert!(m.param_count() <= 24, "param count {}", m.param_count());
    }

    #[test]
    fn params_round_trip_through_flat_layout() {
        let mut m = micro();
        let p = m.params_flat();
        let mut p2 = p.clone();
        p2[0] += 1.0;
        m.set_params_flat(&p2);
        assert_eq!(m.params_flat(), p2);
        assert_ne!(m.param_hash(), {
            let mut n = micro();
            n.set_params_flat(&p);
            n.param_hash()
        });
    }

    /// Full-model gradient check: analytic vs central differences on the
    /// scalar loss `sum(out * r)` for a fixed random direction `r`.
    #[test]
    fn gradients_match_central_differences() {
        for (arch, seed) in [
            (ArchSpec::micro(), 11u64),
            (
                ArchSpec {
                    channels: 2,
                    height: 8,
                    width: 8,
                    base_channels: 2,
                    mid_channels: 3,
                    cond_dim: 4,
                    time_dim: 4,
                    kernel: 3,
                },
                12,
            ),
        ] {
            let mut m = Denoiser::init(arch, seed).unwrap();
            let x = gaussian_tensor(&arch, 100 + seed);
            let cond: Vec<f64> = {
                let mut rng = Pcg32::new(200 + seed);
                (0..arch.cond_dim).map(|_| rng.next_gaussian()).collect()
            };
            let direction = gaussian_tensor(&arch, 300 + seed);
            let t = 7;

            let loss = |m: &Denoiser| -> f64 {
                let y = m.forward(&x, t, &cond).unwrap();
                y.data.iter().zip(&direction.data).map(|(a, b)| a * b).sum()
            };

            let (_, cache) = m.forward_cached(&x, t, &cond);
            let (analytic, _) = m.backward(&cache, &direction);

            let params = m.params_flat();
            let h = 1e-5;
            let mut checked = 0;
            for i in 0..params.len() {
                let mut p = params.clone();
                p[i] = params[i] + h;
                m.set_params_flat(&p);
                let up = loss(&m);
                p[i] = params[i] - h;
                m.set_params_flat(&p);
                let down = loss(&m);
                let numeric = (up - down) / (2.0 * h);
                let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (analytic[i] - numeric).abs() / denom < 1e-4,
                    "param {i}: analytic {} vs numeric {}",
                    analytic[i],
                    numeric
                );
                checked += 1;
            }
            m.set_params_flat(&params);
            assert_eq!(checked, params.len());
        }
    }

    #[test]
    fn input_gradient_matches_central_differences() {
        let arch = ArchSpec::micro();
        let m = Denoiser::init(arch, 21).unwrap();
        let x = gaussian_tensor(&arch, 22);
        let direction = gaussian_tensor(&arch, 23);
        let cond = [0.7];
        let t = 2;
        let loss = |x: &ImageTensor| -> f64 {
            let y = m.forward(x, t, &cond).unwrap();
            y.data.iter().zip(&direction.data).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = m.forward_cached(&x, t, &cond);
        let (_, g_x) = m.backward(&cache, &direction);
        let h = 1e-5;
        for i in 0..x.data.len() {
            let mut xp = x.clone();
            xp.data[i] += h;
            let up = loss(&xp);
            xp.data[i] = x.data[i] - h;
            let down = loss(&xp);
            let numeric = (up - down) / (2.0 * h);
            let denom = g_x.data[i].abs().max(numeric.abs()).max(1e-6);
            assert!((g_x.data[i] - numeric).abs() / denom < 1e-4);
        }
    }

    #[test]
    fn time_embedding_distinguishes_steps() {
        let a = time_embedding(1, 8);
        let b = time_embedding(2, 8);
        assert_ne!(a, b);
        assert_eq!(a.len(), 8);
    }

    #[test]
    fn conditioning_changes_output() {
        let m = micro();
        let x = gaussian_tensor(m.arch(), 31);
        let a = m.forward(&x, 1, &[0.0]).unwrap();
        let b = m.forward(&x, 1, &[1.0]).unwrap();
        assert_ne!(a.data, b.data);
    }
}
