//! Dense networks with exact reverse-mode gradients.
//!
//! [`Mlp`] stores every layer in one flat parameter vector: for each layer the
//! row-major `out × in` weight matrix followed by the `out` biases. Hidden
//! layers use tanh, the output layer is linear. [`Cache`] records the
//! activations of a forward pass and the parameter version it ran against,
//! so a backward pass over stale activations is rejected.

use std::f64::consts::{LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Default hidden layer widths for every network.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

pub const DEFAULT_LOG_STD: f64 = -0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    version: u64,
}

/// Activations recorded by [`Mlp::forward`]; `activations[0]` is the input.
#[derive(Clone, Debug)]
pub struct Cache {
    version: u64,
    activations: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
            version: 0,
        })
    }

    /// Scaled uniform fan-in initialization, zero biases.
    ///
    /// Hidden layers draw from U(±1/√fan_in); the output layer's bound is
    /// multiplied by `output_gain`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Result<Self> {
        let mut net = Mlp::zeros(sizes)?;
        let layers = net.layers();
        let mut offset = 0;
        for (l, (fan_in, fan_out)) in layers.iter().copied().enumerate() {
            let gain = if l + 1 == layers.len() { output_gain } else { 1.0 };
            let bound = gain / (fan_in as f64).sqrt();
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = bound * (2.0 * rng.random::<f64>() - 1.0);
            }
            offset += (fan_in + 1) * fan_out;
        }
        Ok(net)
    }

    /// A single linear layer computing the identity map.
    pub fn identity(n: usize) -> Result<Self> {
        let mut net = Mlp::zeros(&[n, n])?;
        for i in 0..n {
            net.params[i * n + i] = 1.0;
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Mlp::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::Dimension {
                expected: net.params.len(),
                got: params.len(),
                context: "mlp parameters",
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("mlp parameters"));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    fn layers(&self) -> Vec<(usize, usize)> {
        self.sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: input.len(),
                context: "mlp input",
            });
        }
        Ok(())
    }

    fn run(&self, input: &[f64], mut record: impl FnMut(Vec<f64>)) -> Vec<f64> {
        let n_layers = self.sizes.len() - 1;
        let mut offset = 0;
        let mut x = input.to_vec();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let biases = &self.params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            let hidden = l + 1 < n_layers;
            let y: Vec<f64> = weights
                .chunks_exact(fan_in)
                .zip(biases)
                .map(|(row, b)| {
                    let z = b + row.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>();
                    if hidden {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            record(std::mem::replace(&mut x, y));
            offset += (fan_in + 1) * fan_out;
        }
        x
    }

    /// Output only, no cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.run(input, |_| {}))
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Cache)> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.sizes.len());
        let out = self.run(input, |a| activations.push(a));
        activations.push(out.clone());
        Ok((
            out,
            Cache {
                version: self.version,
                activations,
            },
        ))
    }

    pub fn backward(&self, cache: &Cache, output_grad: &[f64]) -> Result<Gradients> {
        let mut params = vec![0.0; self.params.len()];
        let input = self.backward_accumulate(cache, output_grad, &mut params)?;
        Ok(Gradients { params, input })
    }

    /// Adds the parameter gradient into `grad_acc` and returns the input gradient.
    pub fn backward_accumulate(
        &self,
        cache: &Cache,
        output_grad: &[f64],
        grad_acc: &mut [f64],
    ) -> Result<Vec<f64>> {
        if cache.version != self.version {
            return Err(Error::StaleCache {
                cache: cache.version,
                net: self.version,
            });
        }
        if cache.activations.len() != self.sizes.len() {
            return Err(Error::Data("cache does not match network depth".into()));
        }
        if output_grad.len() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: output_grad.len(),
                context: "output gradient",
            });
        }
        if grad_acc.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                got: grad_acc.len(),
                context: "gradient buffer",
            });
        }
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 0..n_layers {
            offsets.push(offset);
            offset += (self.sizes[l] + 1) * self.sizes[l + 1];
        }

        let mut delta = output_grad.to_vec();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &cache.activations[l];
            {
                let (gw, gb) = grad_acc[off..off + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
                for (j, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    for (g, xi) in gw[j * fan_in..(j + 1) * fan_in].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                    gb[j] += d;
                }
            }
            let weights = &self.params[off..off + fan_in * fan_out];
            let mut prev = vec![0.0; fan_in];
            for (j, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(&weights[j * fan_in..(j + 1) * fan_in]) {
                    *p += w * d;
                }
            }
            if l > 0 {
                // x is a tanh output here.
                for (p, xi) in prev.iter_mut().zip(x) {
                    *p *= 1.0 - xi * xi;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    pub fn to_record(&self) -> NetworkRecord {
        NetworkRecord {
            sizes: self.sizes.clone(),
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
            params: self.params.clone(),
        }
    }

    pub fn from_record(rec: &NetworkRecord) -> Result<Self> {
        if rec.hidden_activation != Activation::Tanh || rec.output_activation != Activation::Identity {
            return Err(Error::Data("unsupported activation layout".into()));
        }
        Mlp::from_params(&rec.sizes, rec.params.clone())
    }
}

/// Bias-corrected Adam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One descent step: moves `params` against `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension {
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
                context: "adam",
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("adam gradients"));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powf(self.t as f64);
        let bc2 = 1.0 - self.beta2.powf(self.t as f64);
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
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 − tanh(u)²)`, stable for large |u|.
pub fn log_tanh_jacobian(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

/// A sampled squashed action.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySample {
    /// tanh-squashed action in [-1, 1].
    pub action: Vec<f64>,
    /// Gaussian sample before squashing.
    pub pre_squash: Vec<f64>,
    pub logprob: f64,
}

/// Cached forward pass of [`GaussianPolicy::log_prob_forward`].
#[derive(Clone, Debug)]
pub struct LogProbPass {
    pub logprob: f64,
    mean: Vec<f64>,
    cache: Cache,
    pre_squash: Vec<f64>,
}

/// Diagonal Gaussian over pre-squash actions with a learnable log-std vector.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        Ok(GaussianPolicy {
            mean_net: Mlp::init(&sizes, 0.01, rng)?,
            log_std: vec![DEFAULT_LOG_STD; act_dim],
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.mean_net.predict(obs)
    }

    /// The squashed mean action used for deterministic evaluation.
    pub fn deterministic_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mean(obs)?.into_iter().map(f64::tanh).collect())
    }

    fn gaussian_logprob(mean: &[f64], log_std: &[f64], u: &[f64]) -> f64 {
        mean.iter()
            .zip(log_std)
            .zip(u)
            .map(|((m, ls), u)| {
                let z = (u - m) / ls.exp();
                -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    /// Log-density of the squashed action `tanh(u)`, given the pre-squash sample `u`.
    pub fn log_prob(&self, obs: &[f64], pre_squash: &[f64]) -> Result<f64> {
        if pre_squash.len() != self.act_dim() {
            return Err(Error::Dimension {
                expected: self.act_dim(),
                got: pre_squash.len(),
                context: "pre-squash action",
            });
        }
        let mean = self.mean(obs)?;
        Ok(Self::gaussian_logprob(&mean, &self.log_std, pre_squash)
            - pre_squash.iter().map(|&u| log_tanh_jacobian(u)).sum::<f64>())
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<PolicySample> {
        if obs.iter().any(|o| !o.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        let mean = self.mean(obs)?;
        let pre_squash: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + ls.exp() * eps
            })
            .collect();
        let logprob = Self::gaussian_logprob(&mean, &self.log_std, &pre_squash)
            - pre_squash.iter().map(|&u| log_tanh_jacobian(u)).sum::<f64>();
        Ok(PolicySample {
            action: pre_squash.iter().map(|u| u.tanh()).collect(),
            pre_squash,
            logprob,
        })
    }

    /// Samples with a dedicated generator seeded from `seed`.
    pub fn logprob_and_sample(&self, obs: &[f64], seed: u64) -> Result<PolicySample> {
        self.sample(obs, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Forward pass retaining what [`GaussianPolicy::log_prob_backward`] needs.
    pub fn log_prob_forward(&self, obs: &[f64], pre_squash: &[f64]) -> Result<LogProbPass> {
        if pre_squash.len() != self.act_dim() {
            return Err(Error::Dimension {
                expected: self.act_dim(),
                got: pre_squash.len(),
                context: "pre-squash action",
            });
        }
        let (mean, cache) = self.mean_net.forward(obs)?;
        let logprob = Self::gaussian_logprob(&mean, &self.log_std, pre_squash)
            - pre_squash.iter().map(|&u| log_tanh_jacobian(u)).sum::<f64>();
        Ok(LogProbPass {
            logprob,
            mean,
            cache,
            pre_squash: pre_squash.to_vec(),
        })
    }

    /// Accumulates `scale · ∇ logπ` into the mean-network and log-std gradient buffers.
    pub fn log_prob_backward(
        &self,
        pass: &LogProbPass,
        scale: f64,
        mean_grad: &mut [f64],
        log_std_grad: &mut [f64],
    ) -> Result<()> {
        let mut d_mean = vec![0.0; pass.mean.len()];
        for i in 0..pass.mean.len() {
            let var = (2.0 * self.log_std[i]).exp();
            let diff = pass.pre_squash[i] - pass.mean[i];
            d_mean[i] = scale * diff / var;
            log_std_grad[i] += scale * (diff * diff / var - 1.0);
        }
        self.mean_net.backward_accumulate(&pass.cache, &d_mean, mean_grad)?;
        Ok(())
    }

    /// Entropy of the pre-squash Gaussian.
    pub fn gaussian_entropy(&self) -> f64 {
        self.log_std
            .iter()
            .map(|ls| ls + 0.5 * (2.0 * PI * std::f64::consts::E).ln())
            .sum()
    }

    pub fn to_record(&self) -> PolicyRecord {
        PolicyRecord {
            mean_net: self.mean_net.to_record(),
            log_std: self.log_std.clone(),
        }
    }

    pub fn from_record(rec: &PolicyRecord) -> Result<Self> {
        let mean_net = Mlp::from_record(&rec.mean_net)?;
        if rec.log_std.len() != mean_net.output_dim() {
            return Err(Error::Dimension {
                expected: mean_net.output_dim(),
                got: rec.log_std.len(),
                context: "log_std",
            });
        }
        Ok(GaussianPolicy {
            mean_net,
            log_std: rec.log_std.clone(),
        })
    }
}

/// Scores (observation, action) pairs; `D = sigmoid(logit)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub net: Mlp,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim + act_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(Discriminator {
            net: Mlp::init(&sizes, 1.0, rng)?,
        })
    }

    pub fn input(obs: &[f64], action: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(obs.len() + action.len());
        x.extend_from_slice(obs);
        x.extend_from_slice(action);
        x
    }

    pub fn logit(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self.net.predict(&Self::input(obs, action))?[0])
    }

    pub fn prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(obs, action)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub mean_net: NetworkRecord,
    pub log_std: Vec<f64>,
}

/// Versioned parameter checkpoint; `metadata` carries the resolved run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub algo: String,
    pub task: crate::sim::Task,
    pub seed: u64,
    pub policy: PolicyRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<NetworkRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discriminator: Option<NetworkRecord>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                expected: CHECKPOINT_VERSION,
                found: ck.format_version,
            });
        }
        GaussianPolicy::from_record(&ck.policy)?;
        Ok(ck)
    }

    pub fn policy(&self) -> Result<GaussianPolicy> {
        GaussianPolicy::from_record(&self.policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn param_count_formula() {
        let net = Mlp::zeros(&[10, 64, 64, 2]).unwrap();
        assert_eq!(net.param_count(), 11 * 64 + 65 * 64 + 65 * 2);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(net.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let net = Mlp::identity(3).unwrap();
        assert_eq!(net.predict(&[0.5, -1.5, 2.0]).unwrap(), vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::zeros(&[3, 2]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let net = Mlp::init(&[3, 5, 2], 1.0, &mut rng()).unwrap();
        let (_, cache) = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let g = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.params.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_neuron_squared_loss() {
        let w = [0.3, -0.7];
        let x = [1.5, 2.0];
        let y = 0.4;
        let net = Mlp::from_params(&[2, 1], vec![w[0], w[1], 0.0]).unwrap();
        let (out, cache) = net.forward(&x).unwrap();
        let g = net.backward(&cache, &[2.0 * (out[0] - y)]).unwrap();
        let pred = w[0] * x[0] + w[1] * x[1];
        for i in 0..2 {
            assert!((g.params[i] - 2.0 * (pred - y) * x[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn stale_cache_rejected() {
        let mut net = Mlp::init(&[2, 3, 1], 1.0, &mut rng()).unwrap();
        let (_, cache) = net.forward(&[0.1, 0.2]).unwrap();
        net.params_mut()[0] += 0.1;
        assert!(matches!(net.backward(&cache, &[1.0]), Err(Error::StaleCache { .. })));
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = vec![1.0, -2.0];
        let mut adam = AdamState::new(2, 0.1);
        adam.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn adam_first_step_magnitude() {
        for g in [1e-3, 1.0, 1e3] {
            let mut p = vec![0.5];
            let mut adam = AdamState::new(1, 0.01);
            adam.step(&mut p, &[g]).unwrap();
            let moved = 0.5 - p[0];
            assert!(moved > 0.0);
            assert!((moved - 0.01).abs() < 1e-6, "{moved}");
        }
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let mut x = vec![0.0];
        let mut adam = AdamState::new(1, 0.1);
        for _ in 0..100 {
            let g = 2.0 * (x[0] - 3.0);
            adam.step(&mut x, &[g]).unwrap();
        }
        assert!((x[0] - 3.0).abs() < 0.1, "{}", x[0]);
    }

    #[test]
    fn degenerate_policy_is_deterministic() {
        let mut policy = GaussianPolicy::new(3, 2, &[4], &mut rng()).unwrap();
        policy.log_std = vec![-800.0, -800.0];
        let obs = [0.3, -0.2, 0.9];
        let s = policy.logprob_and_sample(&obs, 5).unwrap();
        assert_eq!(s.action, policy.deterministic_action(&obs).unwrap());
    }

    #[test]
    fn logprob_symmetric_in_zero_mean() {
        let policy = GaussianPolicy {
            mean_net: Mlp::zeros(&[2, 3, 2]).unwrap(),
            log_std: vec![-0.3, 0.2],
        };
        let obs = [0.5, 0.5];
        for u in [[0.3, -1.2], [2.5, 0.01], [7.0, -9.0]] {
            let a = policy.log_prob(&obs, &u).unwrap();
            let b = policy.log_prob(&obs, &[-u[0], -u[1]]).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_logprob_matches_log_prob() {
        let policy = GaussianPolicy::new(3, 2, &[8], &mut rng()).unwrap();
        let obs = [0.1, 0.4, -0.7];
        let s = policy.logprob_and_sample(&obs, 9).unwrap();
        assert!((s.logprob - policy.log_prob(&obs, &s.pre_squash).unwrap()).abs() < 1e-12);
        assert_eq!(s, policy.logprob_and_sample(&obs, 9).unwrap());
    }

    #[test]
    fn tanh_jacobian_stable() {
        for u in [-50.0f64, -3.0, 0.0, 0.7, 40.0] {
            let direct = (1.0 - u.tanh().powi(2)).ln();
            let stable = log_tanh_jacobian(u);
            if direct.is_finite() {
                assert!((direct - stable).abs() < 1e-9, "{u}");
            }
            assert!(stable.is_finite());
        }
    }

    #[test]
    fn sigmoid_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(-800.0) >= 0.0);
    }
}
