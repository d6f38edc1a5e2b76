//! Two-stage feedforward Q-network: a contextual encoder compresses the
//! scene features, a state encoder maps the embedding plus normalized link
//! observations to one value per action.

use rand::Rng;

use crate::env::State;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub relu: bool,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize, relu: bool) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            relu,
        }
    }

    /// He-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, relu: bool, rng: &mut R) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            weights,
            ..Self::zeros(inputs, outputs, relu)
        }
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Writes the pre-activation into `pre` and the activation into `out`.
    fn forward_into(&self, x: &[f64], pre: &mut Vec<f64>, out: &mut Vec<f64>) {
        pre.clear();
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
            let z = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            pre.push(z);
            out.push(if self.relu { z.max(0.0) } else { z });
        }
    }
}

/// Layer widths: context encoder `k → context_hidden… → embedding`, state
/// encoder `embedding + 2 → state_hidden… → n_actions`.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub k: usize,
    pub context_hidden: Vec<usize>,
    pub embedding: usize,
    pub state_hidden: Vec<usize>,
    pub n_actions: usize,
    pub phi_scale: f64,
    pub q_scale: f64,
}

impl Architecture {
    pub fn small(k: usize, n_actions: usize) -> Self {
        Self {
            k,
            context_hidden: vec![6],
            embedding: 3,
            state_hidden: vec![5],
            n_actions,
            phi_scale: 30.0,
            q_scale: 68.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub context: Vec<Dense>,
    pub state: Vec<Dense>,
    /// Channel capacity is divided by this, then clipped to 1.
    pub phi_scale: f64,
    /// Queuing delay is divided by this, then clipped to 1. Any delay past
    /// the deadline rules out offloading equally.
    pub q_scale: f64,
}

/// Per-layer inputs and pre-activations of one forward pass.
#[derive(Debug, Default, Clone)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl QNetwork {
    /// Builds a randomly initialized network with ReLU everywhere except the
    /// output layer.
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        let mut context = Vec::new();
        let mut width = arch.k;
        for &h in arch
            .context_hidden
            .iter()
            .chain(std::iter::once(&arch.embedding))
        {
            context.push(Dense::init(width, h, true, rng));
            width = h;
        }
        let mut state = Vec::new();
        width += 2;
        for &h in &arch.state_hidden {
            state.push(Dense::init(width, h, true, rng));
            width = h;
        }
        state.push(Dense::init(width, arch.n_actions, false, rng));
        Self {
            context,
            state,
            phi_scale: arch.phi_scale,
            q_scale: arch.q_scale,
        }
    }

    pub fn from_layers(
        context: Vec<Dense>,
        state: Vec<Dense>,
        phi_scale: f64,
        q_scale: f64,
    ) -> Result<Self> {
        let net = Self {
            context,
            state,
            phi_scale,
            q_scale,
        };
        net.check_shapes()?;
        Ok(net)
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.context.is_empty() || self.state.is_empty() {
            return Err(Error::Checkpoint(
                "both encoders need at least one layer".into(),
            ));
        }
        for l in self.layers() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Checkpoint(format!(
                    "layer {}x{} has {} weights and {} biases",
                    l.outputs,
                    l.inputs,
                    l.weights.len(),
                    l.bias.len()
                )));
            }
        }
        let chain = |layers: &[Dense]| layers.windows(2).all(|w| w[0].outputs == w[1].inputs);
        if !chain(&self.context) || !chain(&self.state) {
            return Err(Error::Checkpoint(
                "consecutive layer widths do not match".into(),
            ));
        }
        let embed = self.context.last().map_or(0, |l| l.outputs);
        if self.state[0].inputs != embed + 2 {
            return Err(Error::Dimension {
                expected: embed + 2,
                got: self.state[0].inputs,
            });
        }
        if !(self.phi_scale > 0.0 && self.q_scale > 0.0) {
            return Err(Error::Checkpoint(
                "normalization scales must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.context[0].inputs
    }

    pub fn n_actions(&self) -> usize {
        self.state.last().map_or(0, |l| l.outputs)
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.context.iter().chain(&self.state)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.context.iter_mut().chain(self.state.iter_mut())
    }

    pub fn n_params(&self) -> usize {
        self.layers().map(Dense::n_params).sum()
    }

    /// All weights and biases, layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in self.layers() {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params(), "parameter vector length");
        let mut rest = params;
        for l in self.layers_mut() {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
    }

    /// `params -= lr · grad`.
    pub fn apply_gradient(&mut self, grad: &[f64], lr: f64) {
        assert_eq!(grad.len(), self.n_params(), "gradient vector length");
        let mut rest = grad;
        for l in self.layers_mut() {
            let (w, r) = rest.split_at(l.weights.len());
            for (p, g) in l.weights.iter_mut().zip(w) {
                *p -= lr * g;
            }
            let (b, r) = r.split_at(l.bias.len());
            for (p, g) in l.bias.iter_mut().zip(b) {
                *p -= lr * g;
            }
            rest = r;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Link observations as the state encoder sees them.
    pub fn link_inputs(&self, state: &State) -> [f64; 2] {
        [
            (state.phi_obs / self.phi_scale).clamp(0.0, 1.0),
            (state.q_obs / self.q_scale).clamp(0.0, 1.0),
        ]
    }

    pub fn forward(&self, state: &State) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::default();
        self.forward_cached(&state.features, self.link_inputs(state), &mut cache)?;
        Ok(cache.output)
    }

    pub fn forward_cached(
        &self,
        features: &[f64],
        link: [f64; 2],
        cache: &mut ForwardCache,
    ) -> Result<()> {
        if features.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: features.len(),
            });
        }
        let n = self.context.len() + self.state.len();
        cache.inputs.resize_with(n, Vec::new);
        cache.pre.resize_with(n, Vec::new);

        let mut x = features.to_vec();
        for (idx, layer) in self.layers().enumerate() {
            if idx == self.context.len() {
                x.extend_from_slice(&link);
            }
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward_into(&x, &mut cache.pre[idx], &mut out);
            cache.inputs[idx] = std::mem::replace(&mut x, out);
        }
        cache.output = x;
        Ok(())
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂output` for the pass
    /// recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64], grad: &mut [f64]) {
        let offsets: Vec<usize> = self
            .layers()
            .scan(0, |acc, l| {
                let start = *acc;
                *acc += l.n_params();
                Some(start)
            })
            .collect();
        let layers: Vec<&Dense> = self.layers().collect();
        let mut upstream = grad_output.to_vec();
        for idx in (0..layers.len()).rev() {
            let layer = layers[idx];
            let x = &cache.inputs[idx];
            let delta: Vec<f64> = upstream
                .iter()
                .zip(&cache.pre[idx])
                .map(|(g, &z)| if layer.relu && z <= 0.0 { 0.0 } else { *g })
                .collect();
            let (gw, gb) = grad[offsets[idx]..offsets[idx] + layer.n_params()]
                .split_at_mut(layer.weights.len());
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, v) in gw[o * layer.inputs..(o + 1) * layer.inputs]
                    .iter_mut()
                    .zip(x)
                {
                    *g += d * v;
                }
            }
            if idx == 0 {
                break;
            }
            let mut down = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (acc, w) in down
                    .iter_mut()
                    .zip(&layer.weights[o * layer.inputs..(o + 1) * layer.inputs])
                {
                    *acc += d * w;
                }
            }
            if idx == self.context.len() {
                // Drop the link inputs; they have no upstream parameters.
                down.truncate(layer.inputs - 2);
            }
            upstream = down;
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(features: Vec<f64>, phi: f64, q: f64) -> State {
        State {
            features,
            phi_obs: phi,
            q_obs: q,
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::from_layers(
            vec![Dense::zeros(3, 4, true), Dense::zeros(4, 2, true)],
            vec![Dense::zeros(4, 5, true), Dense::zeros(5, 3, false)],
            1.0,
            1.0,
        )
        .unwrap();
        let q = net
            .forward(&state(vec![1.0, -2.0, 0.5], 8.0, 15.0))
            .unwrap();
        assert_eq!(q, vec![0.0; 3]);
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = QNetwork::new(&Architecture::small(4, 3), &mut rng);
        let s = state(vec![0.1, 0.2, -0.3, 0.4], 9.0, 12.0);
        assert_eq!(net.forward(&s).unwrap(), net.forward(&s).unwrap());
    }

    #[test]
    fn hand_computed_forward() {
        // context: 2 → 1 (ReLU), state: 1 + 2 → 2 actions (linear).
        let ctx = Dense {
            inputs: 2,
            outputs: 1,
            weights: vec![0.5, -1.0],
            bias: vec![0.25],
            relu: true,
        };
        let head = Dense {
            inputs: 3,
            outputs: 2,
            weights: vec![1.0, 2.0, 0.0, -1.0, 0.0, 4.0],
            bias: vec![0.0, 1.0],
            relu: false,
        };
        let net = QNetwork::from_layers(vec![ctx], vec![head], 10.0, 100.0).unwrap();
        // h = relu(0.5·2 − 1·0.5 + 0.25) = 0.75; φ/10 = 0.8; q/100 = 0.2
        // Q0 = 0.75 + 2·0.8 = 2.35; Q1 = −0.75 + 4·0.2 + 1 = 1.05
        let q = net.forward(&state(vec![2.0, 0.5], 8.0, 20.0)).unwrap();
        assert!((q[0] - 2.35).abs() < 1e-12);
        assert!((q[1] - 1.05).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = QNetwork::new(&Architecture::small(4, 3), &mut rng);
        assert!(net.forward(&state(vec![0.0; 5], 1.0, 1.0)).is_err());
        let bad = QNetwork::from_layers(
            vec![Dense::zeros(3, 4, true)],
            vec![Dense::zeros(5, 2, false)],
            1.0,
            1.0,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn parameter_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = QNetwork::new(&Architecture::small(3, 3), &mut rng);
        let mut other = QNetwork::new(&Architecture::small(3, 3), &mut rng);
        assert_ne!(net, other);
        other.set_parameters(&net.parameters());
        assert_eq!(net, other);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[-1.0, 2.0, 2.0]), 1);
    }
}
