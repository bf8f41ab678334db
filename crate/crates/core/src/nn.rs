//! Dense actor-critic networks with hand-written backpropagation.
//!
//! Each network is a stack of fully connected layers with `tanh` hidden
//! activations and a linear output. Parameters live in one flat `f64`
//! buffer (per layer: weights row-major `out × in`, then biases), which is
//! also the unit the optimizer and the checkpoint work on.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by [`Mlp::forward_trace`] for backpropagation.
/// `layers[0]` is the input, the last entry is the (linear) output.
#[derive(Debug, Clone)]
pub struct Trace {
    layers: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("trace has an input layer")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// All-zero network with the given layer widths (input first).
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least an input and an output layer");
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// Orthogonal weights scaled by `hidden_gain` (or `output_gain` for the
    /// last layer), zero biases.
    pub fn orthogonal(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(sizes);
        let last = sizes.len() - 2;
        let mut offset = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let gain = if l == last { output_gain } else { hidden_gain };
            let q = orthonormal(fan_out, fan_in, rng);
            for (dst, src) in net.params[offset..offset + fan_in * fan_out].iter_mut().zip(q) {
                *dst = gain * src;
            }
            offset += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: params.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut trace = self.forward_trace(x);
        trace.layers.pop().unwrap()
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        assert_eq!(x.len(), self.input_dim(), "input width");
        let mut layers = Vec::with_capacity(self.sizes.len());
        layers.push(x.to_vec());
        let last = self.sizes.len() - 2;
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let input = layers.last().unwrap();
            let out: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &weights[o * fan_in..(o + 1) * fan_in];
                    let z = bias[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    if l == last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            layers.push(out);
            offset += fan_in * fan_out + fan_out;
        }
        Trace { layers }
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d output`.
    pub fn backward(&self, trace: &Trace, d_output: &[f64], grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer");
        assert_eq!(d_output.len(), self.output_dim(), "output gradient width");
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        // Gradient w.r.t. the pre-activation of the current layer.
        let mut delta = d_output.to_vec();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &trace.layers[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grads[off + o * fan_in..off + (o + 1) * fan_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grads[off + fan_in * fan_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let weights = &self.params[off..off + fan_in * fan_out];
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                    *p += d * w;
                }
            }
            // Input to layer l is tanh output of layer l-1.
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }

    /// Reverse-mode gradient of a loss defined on the network outputs.
    ///
    /// `loss_fn(i, output)` returns sample `i`'s loss contribution and its
    /// gradient w.r.t. `output`. The total loss is the sum of contributions.
    pub fn gradients<F>(&self, inputs: &[&[f64]], mut loss_fn: F) -> Result<(f64, Vec<f64>)>
    where
        F: FnMut(usize, &[f64]) -> (f64, Vec<f64>),
    {
        let mut grads = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (i, x) in inputs.iter().enumerate() {
            let trace = self.forward_trace(x);
            let (l, d_out) = loss_fn(i, trace.output());
            loss += l;
            self.backward(&trace, &d_out, &mut grads);
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(loss));
        }
        Ok((loss, grads))
    }
}

/// `rows × cols` matrix (row-major) whose rows (if rows ≤ cols) or columns
/// are orthonormal, from Gram-Schmidt on Gaussian vectors.
fn orthonormal(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (count, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut m = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            m[r * cols + c] = if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    m
}

/// Softmax restricted to masked-in entries. Masked-out entries get
/// probability exactly 0 and log-probability `-inf`.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
    if logits.len() != mask.len() {
        return Err(Error::ShapeMismatch {
            expected: logits.len(),
            actual: mask.len(),
        });
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NoFeasibleAction);
    }
    let log_z = max
        + logits
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| (l - max).exp())
            .sum::<f64>()
            .ln();
    let logp: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { l - log_z } else { f64::NEG_INFINITY })
        .collect();
    let probs = logp.iter().map(|lp| lp.exp()).collect();
    Ok((probs, logp))
}

/// Draws from a categorical distribution; returns the index and its
/// log-probability.
pub fn sample(probs: &[f64], rng: &mut impl Rng) -> (usize, f64) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last_positive = i;
        acc += p;
        if u < acc {
            return (i, p.ln());
        }
    }
    (last_positive, probs[last_positive].ln())
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: self.m.len(),
                actual: if params.len() != self.m.len() { params.len() } else { grads.len() },
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Rescales `grads` in place so its L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Actor and critic networks with their optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

impl PolicyParams {
    /// Orthogonal init: hidden gain √2, actor head 0.01 (near-uniform start),
    /// critic head 1.
    pub fn new(
        input: usize,
        hidden: &[usize],
        actions: usize,
        actor_lr: f64,
        critic_lr: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut actor_sizes = vec![input];
        actor_sizes.extend_from_slice(hidden);
        let mut critic_sizes = actor_sizes.clone();
        actor_sizes.push(actions);
        critic_sizes.push(1);
        let actor = Mlp::orthogonal(&actor_sizes, std::f64::consts::SQRT_2, 0.01, rng);
        let critic = Mlp::orthogonal(&critic_sizes, std::f64::consts::SQRT_2, 1.0, rng);
        Self::from_nets(actor, critic, actor_lr, critic_lr)
    }

    pub fn from_nets(actor: Mlp, critic: Mlp, actor_lr: f64, critic_lr: f64) -> Self {
        Self {
            actor_opt: Adam::new(actor.param_count(), actor_lr),
            critic_opt: Adam::new(critic.param_count(), critic_lr),
            actor,
            critic,
        }
    }

    pub fn actor_forward(&self, v: &[f64], mask: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
        if !mask.iter().any(|&m| m) {
            return Err(Error::NoFeasibleAction);
        }
        masked_softmax(&self.actor.forward(v), mask)
    }

    pub fn critic_forward(&self, v: &[f64]) -> f64 {
        self.critic.forward(v)[0]
    }
}

const MAGIC: &[u8; 8] = b"OCSCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized inference state: both networks plus the encoder's download
/// scale.
///
/// Layout (all little-endian): magic `OCSCKPT\0`; `u32` version; `u32` node
/// count; `u32` input width; `u32` hidden layer count followed by one `u32`
/// per hidden width; `u64` layout hash; `f64` download scale; `u64` actor and
/// `u64` critic parameter counts; then the actor and critic parameters as
/// `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub node_count: usize,
    pub hidden: Vec<usize>,
    pub download_scale: f64,
    pub actor: Mlp,
    pub critic: Mlp,
}

pub fn layout_hash(node_count: usize, input: usize, hidden: &[usize]) -> u64 {
    // FNV-1a over the layout words.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let words = [CHECKPOINT_VERSION as u64, node_count as u64, input as u64]
        .into_iter()
        .chain(hidden.iter().map(|&w| w as u64));
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn input_width(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let input = self.input_width();
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.node_count as u32).to_le_bytes());
        b.extend_from_slice(&(input as u32).to_le_bytes());
        b.extend_from_slice(&(self.hidden.len() as u32).to_le_bytes());
        for &w in &self.hidden {
            b.extend_from_slice(&(w as u32).to_le_bytes());
        }
        b.extend_from_slice(&layout_hash(self.node_count, input, &self.hidden).to_le_bytes());
        b.extend_from_slice(&self.download_scale.to_le_bytes());
        b.extend_from_slice(&(self.actor.param_count() as u64).to_le_bytes());
        b.extend_from_slice(&(self.critic.param_count() as u64).to_le_bytes());
        for p in self.actor.params().iter().chain(self.critic.params()) {
            b.extend_from_slice(&p.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let node_count = r.u32()? as usize;
        let input = r.u32()? as usize;
        let n_hidden = r.u32()? as usize;
        if n_hidden > 64 {
            return Err(Error::Checkpoint("implausible layer count".into()));
        }
        let hidden = (0..n_hidden)
            .map(|_| r.u32().map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        let hash = r.u64()?;
        if hash != layout_hash(node_count, input, &hidden) {
            return Err(Error::Checkpoint("layout hash mismatch".into()));
        }
        let download_scale = r.f64()?;
        let actor_n = r.u64()? as usize;
        let critic_n = r.u64()? as usize;
        let mut read_params = |n: usize| -> Result<Vec<f64>> { (0..n).map(|_| r.f64()).collect() };
        let actor_p = read_params(actor_n)?;
        let critic_p = read_params(critic_n)?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let mut sizes = vec![input];
        sizes.extend_from_slice(&hidden);
        let mut actor_sizes = sizes.clone();
        actor_sizes.push(node_count);
        sizes.push(1);
        Ok(Self {
            node_count,
            download_scale,
            actor: Mlp::from_params(&actor_sizes, actor_p)?,
            critic: Mlp::from_params(&sizes, critic_p)?,
            hidden,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn uniform_logits_give_uniform_probs() {
        let (p, _) = masked_softmax(&[0.3; 4], &[true; 4]).unwrap();
        for x in p {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn masked_entries_are_zero() {
        let (p, lp) = masked_softmax(&[0.0, 0.0], &[true, false]).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
        assert_eq!(lp[1], f64::NEG_INFINITY);
        assert!(matches!(masked_softmax(&[0.0, 0.0], &[false, false]), Err(Error::NoFeasibleAction)));
    }

    #[test]
    fn actor_rejects_empty_mask() {
        let p = PolicyParams::new(3, &[4], 2, 1e-3, 1e-3, &mut rng(0));
        assert!(matches!(p.actor_forward(&[0.0; 3], &[false, false]), Err(Error::NoFeasibleAction)));
    }

    #[test]
    fn zero_critic_outputs_zero() {
        let c = Mlp::zeros(&[5, 4, 1]);
        assert_eq!(c.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]), vec![0.0]);
    }

    #[test]
    fn point_mass_sample() {
        let (a, lp) = sample(&[0.0, 1.0, 0.0], &mut rng(3));
        assert_eq!((a, lp), (1, 0.0));
    }

    #[test]
    fn sample_frequencies_and_determinism() {
        let mut r = rng(17);
        let n = 10_000;
        let zeros = (0..n).filter(|_| sample(&[0.5, 0.5], &mut r).0 == 0).count();
        let f = zeros as f64 / n as f64;
        assert!((0.45..=0.55).contains(&f), "{f}");
        let a: Vec<_> = (0..20).map({ let mut r = rng(5); move |_| sample(&[0.2, 0.3, 0.5], &mut r).0 }).collect();
        let b: Vec<_> = (0..20).map({ let mut r = rng(5); move |_| sample(&[0.2, 0.3, 0.5], &mut r).0 }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let net = Mlp::orthogonal(&[3, 5, 2], 1.0, 1.0, &mut rng(1));
        let x = [0.1, 0.2, 0.3];
        let (loss, g) = net.gradients(&[&x], |_, _| (7.0, vec![0.0, 0.0])).unwrap();
        assert_eq!(loss, 7.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_squared_loss_matches_closed_form() {
        // y_hat = w x + b, loss = (y_hat - y)^2: dL/dw = 2 x (w x + b - y).
        let net = Mlp::from_params(&[1, 1], vec![1.5, 0.0]).unwrap();
        let (x, y) = (2.0, 1.0);
        let (_, g) = net
            .gradients(&[&[x]], |_, out| {
                let e = out[0] - y;
                (e * e, vec![2.0 * e])
            })
            .unwrap();
        assert_eq!(g[0], 2.0 * x * (1.5 * x - y));
        assert_eq!(g[1], 2.0 * (1.5 * x - y));
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let net = Mlp::zeros(&[1, 1]);
        let r = net.gradients(&[&[1.0]], |_, _| (f64::NAN, vec![0.0]));
        assert!(matches!(r, Err(Error::NonFiniteLoss(_))));
    }

    #[test]
    fn gradcheck_small_nets() {
        let mut r = rng(99);
        for trial in 0..5 {
            let sizes = [4, 6, 5, 3];
            let net = Mlp::orthogonal(&sizes, 1.2, 0.8, &mut r);
            let x: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
            let target: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let loss = |n: &Mlp| -> f64 {
                n.forward(&x).iter().zip(&target).map(|(o, t)| (o - t).powi(2)).sum()
            };
            let (_, g) = net
                .gradients(&[&x], |_, out| {
                    let d: Vec<f64> = out.iter().zip(&target).map(|(o, t)| 2.0 * (o - t)).collect();
                    (0.0, d)
                })
                .unwrap();
            let h = 1e-6;
            for i in 0..net.param_count() {
                let mut plus = net.clone();
                plus.params_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[i] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
                assert!(rel < 1e-4, "trial {trial} param {i}: fd {fd} analytic {}", g[i]);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut p = vec![0.5, -1.0];
        let mut opt = Adam::new(2, 1e-3);
        opt.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adam_first_step_is_learning_rate() {
        let mut p = vec![0.0];
        let mut opt = Adam::new(1, 1e-4);
        opt.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] + 1e-4).abs() < 1e-12);
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut opt = Adam::new(2, 1e-3);
        let mut p = vec![0.0; 3];
        assert!(matches!(opt.step(&mut p, &[0.0; 3]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn learning_rates_wired_from_hyperparams() {
        let hp = crate::domain::Hyperparams::default();
        let p = PolicyParams::new(13, &hp.hidden, 1, hp.actor_lr, hp.critic_lr, &mut rng(0));
        assert_eq!(p.actor_opt.lr, 1e-4);
        assert_eq!(p.critic_opt.lr, 3e-4);
        assert_eq!(p.actor.sizes(), &[13, 128, 64, 1]);
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let m = orthonormal(4, 9, &mut rng(2));
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..9).map(|c| m[a * 9 + c] * m[b * 9 + c]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let p = PolicyParams::new(21, &[8, 6], 2, 1e-4, 3e-4, &mut rng(4));
        let ck = Checkpoint {
            node_count: 2,
            hidden: vec![8, 6],
            download_scale: 12.5,
            actor: p.actor.clone(),
            critic: p.critic.clone(),
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let x: Vec<f64> = (0..21).map(|i| i as f64 / 21.0).collect();
        let a = ck.actor.forward(&x);
        let b = back.actor.forward(&x);
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let ck = Checkpoint {
            node_count: 1,
            hidden: vec![2],
            download_scale: 1.0,
            actor: Mlp::zeros(&[13, 2, 1]),
            critic: Mlp::zeros(&[13, 2, 1]),
        };
        let mut bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        bytes[12] ^= 0xff;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checkpoint(_))));
        assert!(Checkpoint::from_bytes(b"nonsense").is_err());
    }
}
