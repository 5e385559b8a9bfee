//! One-hidden-layer feedforward network (tanh hidden units, logistic
//! output), its backpropagated error gradient, and resilient
//! backpropagation (RPROP) training.
//!
//! The batch error is `E = (1/n) * sum_b 0.5 * (s_b - t_b)^2` where `s_b` is
//! the network output on example `b`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub inputs: usize,
    pub hidden: usize,
}

impl Layout {
    pub fn new(inputs: usize, hidden: usize) -> Self {
        Layout { inputs, hidden }
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.inputs + 2 * self.hidden + 1
    }

    // Offsets into the flat parameter vector: [w1 | b1 | w2 | b2].
    fn b1(&self) -> usize {
        self.hidden * self.inputs
    }
    fn w2(&self) -> usize {
        self.b1() + self.hidden
    }
    fn b2(&self) -> usize {
        self.w2() + self.hidden
    }
}

/// Parameters live in one flat vector laid out as `w1` (hidden x inputs,
/// row-major), `b1`, `w2`, `b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layout: Layout,
    pub params: Vec<f64>,
}

/// Same shape as [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(pub Vec<f64>);

const INIT_RANGE: f64 = 0.5;

/// Parameters drawn uniformly from `[-0.5, 0.5]`.
pub fn netcreate(layout: Layout, seed: u64) -> Result<Network> {
    if layout.inputs == 0 || layout.hidden == 0 {
        return Err(Error::ZeroLayer);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = (0..layout.param_count())
        .map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE))
        .collect();
    Ok(Network { layout, params })
}

/// Logistic function kept strictly inside (0, 1).
fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl Network {
    pub fn zeros(layout: Layout) -> Self {
        Network {
            layout,
            params: vec![0.0; layout.param_count()],
        }
    }

    pub fn output_bias_mut(&mut self) -> &mut f64 {
        let i = self.layout.b2();
        &mut self.params[i]
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.layout.inputs {
            return Err(Error::DimensionMismatch {
                expected: self.layout.inputs,
                found: z.len(),
            });
        }
        Ok(())
    }

    /// Hidden activations and the output score.
    fn activations(&self, z: &[f64], hidden: &mut [f64]) -> f64 {
        let Layout { inputs, .. } = self.layout;
        let p = &self.params;
        let (b1, w2, b2) = (self.layout.b1(), self.layout.w2(), self.layout.b2());
        let mut net_out = p[b2];
        for (h, act) in hidden.iter_mut().enumerate() {
            let row = &p[h * inputs..(h + 1) * inputs];
            let net_h = p[b1 + h] + row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>();
            *act = net_h.tanh();
            net_out += p[w2 + h] * *act;
        }
        sigmoid(net_out)
    }

    pub fn forward(&self, z: &[f64]) -> Result<f64> {
        self.check_input(z)?;
        let mut hidden = vec![0.0; self.layout.hidden];
        Ok(self.activations(z, &mut hidden))
    }

    /// Mean squared batch error without gradients.
    pub fn batch_error(&self, inputs: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
        if inputs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut hidden = vec![0.0; self.layout.hidden];
        let mut e = 0.0;
        for (z, &t) in inputs.iter().zip(targets) {
            self.check_input(z)?;
            let s = self.activations(z, &mut hidden);
            e += 0.5 * (s - t) * (s - t);
        }
        Ok(e / inputs.len() as f64)
    }
}

/// Analytic gradient of the batch error by the chain rule
/// `dE/dw_ij = dE/ds_i * ds_i/dnet_i * dnet_i/dw_ij`, plus the error itself.
pub fn backprop_gradient(net: &Network, inputs: &[Vec<f64>], targets: &[f64]) -> Result<(Gradient, f64)> {
    if inputs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            found: targets.len(),
        });
    }
    let layout = net.layout;
    let (b1, w2, b2) = (layout.b1(), layout.w2(), layout.b2());
    let mut grad = vec![0.0; layout.param_count()];
    let mut hidden = vec![0.0; layout.hidden];
    let mut error = 0.0;

    for (z, &t) in inputs.iter().zip(targets) {
        net.check_input(z)?;
        let s = net.activations(z, &mut hidden);
        let diff = s - t;
        error += 0.5 * diff * diff;
        let delta_out = diff * s * (1.0 - s);
        grad[b2] += delta_out;
        for h in 0..layout.hidden {
            grad[w2 + h] += delta_out * hidden[h];
            let delta_h = delta_out * net.params[w2 + h] * (1.0 - hidden[h] * hidden[h]);
            grad[b1 + h] += delta_h;
            let row = &mut grad[h * layout.inputs..(h + 1) * layout.inputs];
            for (g, x) in row.iter_mut().zip(z) {
                *g += delta_h * x;
            }
        }
    }

    let n = inputs.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    Ok((Gradient(grad), error / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpropConfig {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub delta_max: f64,
    pub delta_min: f64,
    pub delta0: f64,
}

impl Default for RpropConfig {
    fn default() -> Self {
        RpropConfig {
            eta_plus: 1.2,
            eta_minus: 0.5,
            delta_max: 50.0,
            delta_min: 1e-6,
            delta0: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpropState {
    pub config: RpropConfig,
    /// Per-parameter update size.
    pub steps: Vec<f64>,
    /// Gradient remembered from the previous step (zeroed after a sign flip).
    pub prev_grad: Vec<f64>,
}

impl RpropState {
    pub fn new(params: usize, config: RpropConfig) -> Self {
        RpropState {
            config,
            steps: vec![config.delta0; params],
            prev_grad: vec![0.0; params],
        }
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One RPROP update. On a gradient sign flip the step shrinks, the weight
/// stays put and the remembered gradient is cleared; there is no weight
/// backtracking.
pub fn rprop_step(net: &mut Network, state: &mut RpropState, grad: &Gradient) -> Result<()> {
    let n = net.params.len();
    if grad.0.len() != n || state.steps.len() != n || state.prev_grad.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: grad.0.len(),
        });
    }
    let c = state.config;
    for i in 0..n {
        let g = grad.0[i];
        let agreement = g * state.prev_grad[i];
        if agreement > 0.0 {
            state.steps[i] = (state.steps[i] * c.eta_plus).min(c.delta_max);
            net.params[i] -= sgn(g) * state.steps[i];
            state.prev_grad[i] = g;
        } else if agreement < 0.0 {
            state.steps[i] = (state.steps[i] * c.eta_minus).max(c.delta_min);
            state.prev_grad[i] = 0.0;
        } else {
            net.params[i] -= sgn(g) * state.steps[i];
            state.prev_grad[i] = g;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopConfig {
    pub max_epochs: usize,
    pub err_goal: f64,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            max_epochs: 200,
            err_goal: 1e-3,
        }
    }
}

/// Full-batch RPROP until the error reaches `err_goal` or `max_epochs`
/// updates have been applied. Returns the trained network and its error.
pub fn sigtrain(
    net: Network,
    inputs: &[Vec<f64>],
    targets: &[f64],
    stop: StopConfig,
    rprop: RpropConfig,
) -> Result<(Network, f64)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::EmptyBatch);
    }
    let mut net = net;
    let mut state = RpropState::new(net.params.len(), rprop);
    for _ in 0..stop.max_epochs {
        let (grad, error) = backprop_gradient(&net, inputs, targets)?;
        if error <= stop.err_goal {
            return Ok((net, error));
        }
        rprop_step(&mut net, &mut state, &grad)?;
    }
    let error = net.batch_error(inputs, targets)?;
    Ok((net, error))
}
