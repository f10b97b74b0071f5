//! Locked/trainable conditioning: a frozen denoiser plus a trainable copy,
//! joined through two zero-initialized 1x1 convolutions.
//!
//! The controlled forward pass is
//!
//! ```text
//! y_c = F(x; locked) + Zout( F(x + Zin(control); trainable) )
//! ```
//!
//! Both copies receive the same timestep and text conditioning; the control
//! tensor enters only the trainable branch. Because `Zin`/`Zout` start with
//! zero weights *and* zero biases, the added branch contributes exactly
//! nothing at initialization: outputs come verbatim from the locked model,
//! and training moves only the trainable copy and the two projections.

use std::path::Path;

use crate::diffusion::checkpoint::{
    read_checkpoint, write_checkpoint, CheckpointHeader, FORMAT_VERSION,
};
use crate::diffusion::{
    draw_batch, q_sample, sample, Denoiser, EpsPredictor, NoiseSchedule, TrainOptions,
    TrainStats,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Pcg32};
use crate::tensor::ImageTensor;

/// A 1x1 convolution (per-pixel linear map across channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1x1 {
    pub in_c: usize,
    pub out_c: usize,
    /// `[out_c][in_c]`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1x1 {
    pub fn zeros(in_c: usize, out_c: usize) -> Conv1x1 {
        Conv1x1 {
            in_c,
            out_c,
            weight: vec![0.0; in_c * out_c],
            bias: vec![0.0; out_c],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|&v| v == 0.0)
    }

    fn forward(&self, x: &ImageTensor) -> ImageTensor {
        debug_assert_eq!(x.channels, self.in_c);
        let mut out = ImageTensor::zeros(self.out_c, x.height, x.width);
        for oc in 0..self.out_c {
            for y in 0..x.height {
                for xx in 0..x.width {
                    let mut acc = self.bias[oc];
                    for ic in 0..self.in_c {
                        acc += self.weight[oc * self.in_c + ic] * x.at(ic, y, xx);
                    }
                    *out.at_mut(oc, y, xx) = acc;
                }
            }
        }
        out
    }

    fn backward(
        &self,
        x: &ImageTensor,
        grad_out: &ImageTensor,
    ) -> (ImageTensor, Vec<f64>, Vec<f64>) {
        let mut grad_in = ImageTensor::zeros(x.channels, x.height, x.width);
        let mut grad_w = vec![0.0; self.weight.len()];
        let mut grad_b = vec![0.0; self.bias.len()];
        for oc in 0..self.out_c {
            for y in 0..x.height {
                for xx in 0..x.width {
                    let g = grad_out.at(oc, y, xx);
                    grad_b[oc] += g;
                    for ic in 0..self.in_c {
                        grad_w[oc * self.in_c + ic] += g * x.at(ic, y, xx);
                        *grad_in.at_mut(ic, y, xx) += g * self.weight[oc * self.in_c + ic];
                    }
                }
            }
        }
        (grad_in, grad_w, grad_b)
    }
}

/// The locked copy, the trainable copy, and the two zero convolutions.
#[derive(Debug, Clone)]
pub struct ControlNet {
    locked: Denoiser,
    pub trainable: Denoiser,
    pub zin: Conv1x1,
    pub zout: Conv1x1,
}

/// Builds a ControlNet around a frozen model: the trainable copy starts as
/// an exact clone and both projections start at zero.
pub fn init_controlnet(locked: Denoiser, control_channels: usize) -> Result<ControlNet> {
    if control_channels == 0 {
        return Err(Error::Invalid("control_channels must be positive".into()));
    }
    let channels = locked.arch().channels;
    Ok(ControlNet {
        trainable: locked.clone(),
        zin: Conv1x1::zeros(control_channels, channels),
        zout: Conv1x1::zeros(channels, channels),
        locked,
    })
}

impl ControlNet {
    /// Read-only access; nothing mutates the locked copy after construction.
    pub fn locked(&self) -> &Denoiser {
        &self.locked
    }

    pub fn control_channels(&self) -> usize {
        self.zin.in_c
    }

    fn check_control(&self, control: &ImageTensor) -> Result<()> {
        let arch = self.locked.arch();
        if control.channels != self.zin.in_c
            || control.height != arch.height
            || control.width != arch.width
        {
            return Err(Error::Invalid(format!(
                "control shape {}x{}x{} does not match {}x{}x{}",
                control.channels,
                control.height,
                control.width,
                self.zin.in_c,
                arch.height,
                arch.width
            )));
        }
        Ok(())
    }

    /// The controlled forward pass.
    pub fn forward_controlled(
        &self,
        x: &ImageTensor,
        t: usize,
        cond: &[f64],
        control: &ImageTensor,
    ) -> Result<ImageTensor> {
        self.locked.check_input(x, cond)?;
        self.check_control(control)?;
        let base = self.locked.forward(x, t, cond)?;
        let zc = self.zin.forward(control);
        let mut branch_in = x.clone();
        for (b, z) in branch_in.data.iter_mut().zip(&zc.data) {
            *b += z;
        }
        let branch = self.trainable.forward(&branch_in, t, cond)?;
        let tail = self.zout.forward(&branch);
        let mut out = base;
        for (o, v) in out.data.iter_mut().zip(&tail.data) {
            *o += v;
        }
        Ok(out)
    }

    pub fn trainable_param_count(&self) -> usize {
        self.trainable.param_count() + self.zin.weight.len() + self.zin.bias.len()
            + self.zout.weight.len()
            + self.zout.bias.len()
    }

    /// Flat trainable parameters: trainable copy, then zin, then zout.
    pub fn trainable_params_flat(&self) -> Vec<f64> {
        let mut p = self.trainable.params_flat();
        p.extend_from_slice(&self.zin.weight);
        p.extend_from_slice(&self.zin.bias);
        p.extend_from_slice(&self.zout.weight);
        p.extend_from_slice(&self.zout.bias);
        p
    }

    pub fn set_trainable_params_flat(&mut self, params: &[f64]) {
        let n = self.trainable.param_count();
        self.trainable.set_params_flat(&params[..n]);
        let mut o = n;
        for t in [
            &mut self.zin.weight,
            &mut self.zin.bias,
            &mut self.zout.weight,
            &mut self.zout.bias,
        ] {
            let len = t.len();
            t.copy_from_slice(&params[o..o + len]);
            o += len;
        }
        assert_eq!(o, params.len());
    }

    fn apply_update(&mut self, grads: &[f64], lr: f64) {
        let n = self.trainable.param_count();
        self.trainable.apply_update(&grads[..n], lr);
        let mut o = n;
        for t in [
            &mut self.zin.weight,
            &mut self.zin.bias,
            &mut self.zout.weight,
            &mut self.zout.bias,
        ] {
            for v in t.iter_mut() {
                *v -= lr * grads[o];
                o += 1;
            }
        }
        assert_eq!(o, grads.len());
    }

    /// Forward with caches plus backward; returns flat trainable gradients.
    fn grads_for(
        &self,
        x: &ImageTensor,
        t: usize,
        cond: &[f64],
        control: &ImageTensor,
        grad_out: &ImageTensor,
    ) -> (ImageTensor, Vec<f64>) {
        let base = self.locked.forward(x, t, cond).expect("shapes checked");
        let zc = self.zin.forward(control);
        let mut branch_in = x.clone();
        for (b, z) in branch_in.data.iter_mut().zip(&zc.data) {
            *b += z;
        }
        let (branch, cache) = self.trainable.forward_cached(&branch_in, t, cond);
        let tail = self.zout.forward(&branch);
        let mut pred = base;
        for (o, v) in pred.data.iter_mut().zip(&tail.data) {
            *o += v;
        }

        let (g_branch, gw_zout, gb_zout) = self.zout.backward(&branch, grad_out);
        let (g_trainable, g_branch_in) = self.trainable.backward(&cache, &g_branch);
        let (_, gw_zin, gb_zin) = self.zin.backward(control, &g_branch_in);

        let mut grads = g_trainable;
        grads.extend(gw_zin);
        grads.extend(gb_zin);
        grads.extend(gw_zout);
        grads.extend(gb_zout);
        (pred, grads)
    }
}

/// Adapter exposing a ControlNet with a fixed control tensor as a noise
/// predictor, so the generic ancestral sampler drives it with exactly the
/// same noise stream as the base model.
pub struct ControlledPredictor<'a> {
    pub net: &'a ControlNet,
    pub control: &'a ImageTensor,
}

impl EpsPredictor for ControlledPredictor<'_> {
    fn predict(&self, z_t: &ImageTensor, t: usize, cond: &[f64]) -> Result<ImageTensor> {
        self.net.forward_controlled(z_t, t, cond, self.control)
    }
}

/// One control-conditioned training example.
#[derive(Debug, Clone)]
pub struct ControlTrainItem {
    pub z0: ImageTensor,
    pub cond: Vec<f64>,
    pub control: ImageTensor,
}

const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_PATIENCE: usize = 100;

/// Trains the trainable copy and the zero convolutions; the locked copy is
/// bit-identical before and after any number of steps.
pub fn train_controlnet(
    net: &mut ControlNet,
    data: &[ControlTrainItem],
    s: &NoiseSchedule,
    opts: &TrainOptions,
) -> Result<TrainStats> {
    if data.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    for item in data {
        net.locked.check_input(&item.z0, &item.cond)?;
        net.check_control(&item.control)?;
    }
    let mut rng = Pcg32::new(derive_seed(opts.seed, "controlnet-train", 0));
    let batch_size = opts.batch_size.max(1).min(data.len());
    let mut losses = Vec::with_capacity(opts.steps);
    let mut initial = f64::NAN;
    let mut streak = 0usize;

    for step in 0..opts.steps {
        let picked: Vec<&ControlTrainItem> =
            (0..batch_size).map(|_| &data[rng.gen_range(data.len())]).collect();
        let plain: Vec<crate::diffusion::TrainItem> = picked
            .iter()
            .map(|i| crate::diffusion::TrainItem { z0: i.z0.clone(), cond: i.cond.clone() })
            .collect();
        let draws = draw_batch(&plain, s, &mut rng);

        let mut grads = vec![0.0; net.trainable_param_count()];
        let mut loss_total = 0.0;
        for (item, d) in picked.iter().zip(&draws) {
            let z_t = q_sample(&d.z0, d.t, &d.eps, s)?;
            // Two passes keep the code simple: prediction plus gradients.
            let scale = 2.0 / draws.len() as f64;
            let (pred, g) = {
                // grad_out depends on pred; compute pred first.
                let pred = net.forward_controlled(&z_t, d.t, &d.cond, &item.control)?;
                let grad_out = ImageTensor::from_data(
                    pred.channels,
                    pred.height,
                    pred.width,
                    pred.data
                        .iter()
                        .zip(&d.eps.data)
                        .map(|(&p, &e)| scale * (p - e))
                        .collect(),
                );
                let (pred2, g) = net.grads_for(&z_t, d.t, &d.cond, &item.control, &grad_out);
                debug_assert_eq!(pred.data, pred2.data);
                (pred, g)
            };
            if !pred.data.iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite activations at step {step}"
                )));
            }
            loss_total += d
                .eps
                .data
                .iter()
                .zip(&pred.data)
                .map(|(&e, &p)| (e - p) * (e - p))
                .sum::<f64>();
            for (acc, v) in grads.iter_mut().zip(g) {
                *acc += v;
            }
        }
        let loss_val = loss_total / draws.len() as f64;
        if !loss_val.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss at step {step}")));
        }
        if step == 0 {
            initial = loss_val;
        }
        if loss_val > DIVERGENCE_FACTOR * initial {
            streak += 1;
            if streak >= DIVERGENCE_PATIENCE {
                return Err(Error::Divergence { step, loss: loss_val, initial, streak });
            }
        } else {
            streak = 0;
        }
        net.apply_update(&grads, opts.lr);
        losses.push(loss_val);
    }
    Ok(TrainStats { losses })
}

/// Ancestral sampling through the controlled forward pass.
pub fn sample_controlled(
    net: &ControlNet,
    cond: &[f64],
    control: &ImageTensor,
    s: &NoiseSchedule,
    seed: u64,
) -> Result<ImageTensor> {
    net.check_control(control)?;
    let arch = net.locked.arch();
    let predictor = ControlledPredictor { net, control };
    sample(
        &predictor,
        cond,
        s,
        seed,
        (arch.channels, arch.height, arch.width),
    )
}

pub fn save_controlnet(
    path: &Path,
    net: &ControlNet,
    seed: u64,
    config_hash: &str,
) -> Result<()> {
    let mut tensors: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    for (name, shape, data) in net.locked.named_tensors() {
        tensors.push((format!("locked.{name}"), shape, data));
    }
    for (name, shape, data) in net.trainable.named_tensors() {
        tensors.push((format!("trainable.{name}"), shape, data));
    }
    tensors.push((
        "zin.weight".into(),
        vec![net.zin.out_c, net.zin.in_c],
        net.zin.weight.clone(),
    ));
    tensors.push(("zin.bias".into(), vec![net.zin.out_c], net.zin.bias.clone()));
    tensors.push((
        "zout.weight".into(),
        vec![net.zout.out_c, net.zout.in_c],
        net.zout.weight.clone(),
    ));
    tensors.push(("zout.bias".into(), vec![net.zout.out_c], net.zout.bias.clone()));
    let mut header = CheckpointHeader {
        version: FORMAT_VERSION,
        kind: "controlnet".into(),
        arch: *net.locked.arch(),
        control_channels: Some(net.zin.in_c),
        seed,
        config_hash: config_hash.into(),
        tensors: Vec::new(),
    };
    write_checkpoint(path, &mut header, &tensors)
}

pub fn load_controlnet(path: &Path) -> Result<(ControlNet, CheckpointHeader)> {
    let (header, tensors) = read_checkpoint(path)?;
    if header.kind != "controlnet" {
        return Err(Error::parse(
            path,
            format!("expected a controlnet checkpoint, found {:?}", header.kind),
        ));
    }
    let control_channels = header
        .control_channels
        .ok_or_else(|| Error::parse(path, "controlnet header missing control_channels"))?;
    let locked = Denoiser::init(header.arch, 0)?;
    let mut net = init_controlnet(locked, control_channels)?;
    for (name, data) in &tensors {
        if let Some(rest) = name.strip_prefix("locked.") {
            net.locked.set_named_tensor(rest, data)?;
        } else if let Some(rest) = name.strip_prefix("trainable.") {
            net.trainable.set_named_tensor(rest, data)?;
        } else {
            let target = match name.as_str() {
                "zin.weight" => &mut net.zin.weight,
                "zin.bias" => &mut net.zin.bias,
                "zout.weight" => &mut net.zout.weight,
                "zout.bias" => &mut net.zout.bias,
                other => {
                    return Err(Error::parse(path, format!("unknown tensor {other}")))
                }
            };
            if target.len() != data.len() {
                return Err(Error::parse(path, format!("tensor {name} has wrong size")));
            }
            target.copy_from_slice(data);
        }
    }
    Ok((net, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{
        gaussian_like, loss_given, make_schedule, ArchSpec, ScheduleKind,
    };

    fn micro_net() -> ControlNet {
        let locked = Denoiser::init(ArchSpec::micro(), 5).unwrap();
        init_controlnet(locked, 2).unwrap()
    }

    fn rng_tensor(shape: (usize, usize, usize), seed: u64) -> ImageTensor {
        let mut rng = Pcg32::new(seed);
        gaussian_like(shape, &mut rng)
    }

    #[test]
    fn init_invariants_hold() {
        let net = micro_net();
        assert!(net.zin.is_zero());
        assert!(net.zout.is_zero());
        assert_eq!(net.locked.params_flat(), net.trainable.params_flat());
        let net2 = {
            let locked = Denoiser::init(ArchSpec::micro(), 5).unwrap();
            init_controlnet(locked, 2).unwrap()
        };
        assert_eq!(net.trainable_params_flat(), net2.trainable_params_flat());
    }

    #[test]
    fn zero_init_identity_is_exact() {
        let net = micro_net();
        for seed in 0..20u64 {
            let x = rng_tensor((1, 4, 4), 100 + seed);
            let control = rng_tensor((2, 4, 4), 200 + seed);
            let cond = [Pcg32::new(300 + seed).next_gaussian()];
            let t = 1 + (seed as usize % 7);
            let locked_out = net.locked().forward(&x, t, &cond).unwrap();
            let controlled = net.forward_controlled(&x, t, &cond, &control).unwrap();
            assert_eq!(locked_out.data, controlled.data);
        }
    }

    #[test]
    fn outer_zero_conv_annihilates_branch() {
        let mut net = micro_net();
        // zin nonzero, zout still zero.
        for v in net.zin.weight.iter_mut() {
            *v = 0.7;
        }
        let x = rng_tensor((1, 4, 4), 1);
        let control = rng_tensor((2, 4, 4), 2);
        let locked_out = net.locked().forward(&x, 3, &[0.5]).unwrap();
        let controlled = net.forward_controlled(&x, 3, &[0.5], &control).unwrap();
        assert_eq!(locked_out.data, controlled.data);
    }

    #[test]
    fn zero_control_reduces_branch_input_to_x() {
        let mut net = micro_net();
        for (i, v) in net.zin.weight.iter_mut().enumerate() {
            *v = 0.3 + i as f64 * 0.1;
        }
        // zout nonzero so the branch becomes visible.
        for v in net.zout.weight.iter_mut() {
            *v = 1.0;
        }
        let x = rng_tensor((1, 4, 4), 9);
        let zero_control = ImageTensor::zeros(2, 4, 4);
        let got = net.forward_controlled(&x, 2, &[0.1], &zero_control).unwrap();
        // Expected: locked(x) + zout(trainable(x)), branch input exactly x
        // because zin has zero bias.
        let base = net.locked().forward(&x, 2, &[0.1]).unwrap();
        let branch = net.trainable.forward(&x, 2, &[0.1]).unwrap();
        let tail = net.zout.forward(&branch);
        for i in 0..got.data.len() {
            assert_eq!(got.data[i], base.data[i] + tail.data[i]);
        }
    }

    #[test]
    fn sampling_with_fresh_controlnet_matches_base_bitwise() {
        let net = micro_net();
        let s = make_schedule(10, 1e-3, 0.05, ScheduleKind::Linear).unwrap();
        let control = rng_tensor((2, 4, 4), 4);
        let cond = [0.2];
        let base = crate::diffusion::sample(net.locked(), &cond, &s, 11, (1, 4, 4)).unwrap();
        let controlled = sample_controlled(&net, &cond, &control, &s, 11).unwrap();
        let base_bits: Vec<u64> = base.data.iter().map(|v| v.to_bits()).collect();
        let ctrl_bits: Vec<u64> = controlled.data.iter().map(|v| v.to_bits()).collect();
        assert_eq!(base_bits, ctrl_bits);
    }

    #[test]
    fn step_zero_loss_equals_base_loss_on_same_draws() {
        let net = micro_net();
        let s = make_schedule(10, 1e-3, 0.05, ScheduleKind::Linear).unwrap();
        let mut rng = Pcg32::new(21);
        let items = vec![crate::diffusion::TrainItem {
            z0: gaussian_like((1, 4, 4), &mut rng),
            cond: vec![0.4],
        }];
        let draws = draw_batch(&items, &s, &mut rng);
        let control = rng_tensor((2, 4, 4), 5);
        let controlled = ControlledPredictor { net: &net, control: &control };
        let a = loss_given(net.locked(), &draws, &s).unwrap();
        let b = loss_given(&controlled, &draws, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn locked_copy_frozen_through_training() {
        let mut net = micro_net();
        let before = net.locked().param_hash();
        let s = make_schedule(10, 1e-3, 0.05, ScheduleKind::Linear).unwrap();
        let mut rng = Pcg32::new(31);
        let data: Vec<ControlTrainItem> = (0..4)
            .map(|_| ControlTrainItem {
                z0: gaussian_like((1, 4, 4), &mut rng),
                cond: vec![0.4],
                control: gaussian_like((2, 4, 4), &mut rng),
            })
            .collect();
        train_controlnet(
            &mut net,
            &data,
            &s,
            &TrainOptions { steps: 50, lr: 0.005, batch_size: 2, seed: 3 },
        )
        .unwrap();
        assert_eq!(net.locked().param_hash(), before);
        // Training moved the trainable side.
        assert_ne!(net.trainable_params_flat(), {
            let fresh = micro_net();
            fresh.trainable_params_flat()
        });
        assert!(!net.zout.is_zero() || !net.zin.is_zero());
    }

    #[test]
    fn trainable_gradients_match_central_differences() {
        let mut net = micro_net();
        let s = make_schedule(5, 1e-3, 0.05, ScheduleKind::Linear).unwrap();
        // Move off the zero point so zin gradients are visible.
        let mut p = net.trainable_params_flat();
        let mut prng = Pcg32::new(77);
        for v in p.iter_mut() {
            *v += 0.05 * prng.next_gaussian();
        }
        net.set_trainable_params_flat(&p);

        let x = rng_tensor((1, 4, 4), 1);
        let control = rng_tensor((2, 4, 4), 2);
        let cond = [0.3];
        let direction = rng_tensor((1, 4, 4), 3);
        let t = 2;

        let loss = |net: &ControlNet| -> f64 {
            let y = net.forward_controlled(&x, t, &cond, &control).unwrap();
            y.data.iter().zip(&direction.data).map(|(a, b)| a * b).sum()
        };
        let (_, analytic) = net.grads_for(&x, t, &cond, &control, &direction);
        let base = net.trainable_params_flat();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut pp = base.clone();
            pp[i] += h;
            net.set_trainable_params_flat(&pp);
            let up = loss(&net);
            pp[i] = base[i] - h;
            net.set_trainable_params_flat(&pp);
            let down = loss(&net);
            let numeric = (up - down) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            assert!(
                (analytic[i] - numeric).abs() / denom < 1e-4,
                "param {i}: {} vs {}",
                analytic[i],
                numeric
            );
        }
        net.set_trainable_params_flat(&base);
        let _ = s;
    }

    #[test]
    fn checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cn.ckpt");
        let mut net = micro_net();
        net.zin.weight[0] = 0.25;
        net.zout.bias[0] = -0.5;
        save_controlnet(&path, &net, 7, "hash").unwrap();
        let (loaded, header) = load_controlnet(&path).unwrap();
        assert_eq!(header.control_channels, Some(2));
        assert_eq!(loaded.zin.weight[0], 0.25);
        assert_eq!(loaded.zout.bias[0], -0.5);
        for (a, b) in net
            .locked()
            .params_flat()
            .iter()
            .zip(loaded.locked().params_flat())
        {
            assert!((a - b).abs() <= a.abs() * 1e-6 + 1e-9);
        }
    }

    #[test]
    fn mismatched_control_shape_rejected() {
        let net = micro_net();
        let x = rng_tensor((1, 4, 4), 1);
        let bad = rng_tensor((3, 4, 4), 2);
        assert!(net.forward_controlled(&x, 1, &[0.0], &bad).is_err());
    }
}
