use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{CoadError, Real, Result};

/// Fully connected layer. `weights` is `n_out × n_in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weights: Vec<F>,
    pub bias: Vec<F>,
    pub n_in: usize,
    pub n_out: usize,
}

impl<F: Real> Dense<F> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weights: vec![F::zero(); n_in * n_out],
            bias: vec![F::zero(); n_out],
            n_in,
            n_out,
        }
    }

    /// Uniform in `[-a, a]` with `a = sqrt(6 / (n_in + n_out))`; zero bias.
    pub fn glorot(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (n_in + n_out) as f64).sqrt();
        let weights = (0..n_in * n_out)
            .map(|_| F::from(rng.gen_range(-a..=a)).unwrap())
            .collect();
        Self {
            weights,
            bias: vec![F::zero(); n_out],
            n_in,
            n_out,
        }
    }

    fn apply(&self, x: &[F], out: &mut Vec<F>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let z = row
                .iter()
                .zip(x)
                .fold(self.bias[o], |a, (&w, &v)| a + w * v);
            out.push(z);
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

pub fn sigmoid<F: Real>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// Activations of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace<F> {
    /// `inputs[k]` is the input of layer `k`; the last entry is the input to
    /// the output layer (the penultimate representation).
    pub inputs: Vec<Vec<F>>,
    /// Pre-activations of each hidden layer.
    pub hidden_pre: Vec<Vec<F>>,
    pub logit: F,
    pub prob: F,
}

/// Feed-forward network: ReLU hidden layers, one sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    layers: Vec<Dense<F>>,
    seed: Option<u64>,
}

impl<F: Real> Mlp<F> {
    /// `layer_sizes = [d, h_1, ..., 1]`.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(layer_sizes, &mut rng, Some(seed))
    }

    pub(crate) fn with_rng(
        layer_sizes: &[usize],
        rng: &mut ChaCha8Rng,
        seed: Option<u64>,
    ) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Ok(Self { layers, seed })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Ok(Self {
            layers: layer_sizes
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
            seed: None,
        })
    }

    pub fn from_layers(layers: Vec<Dense<F>>, seed: Option<u64>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(CoadError::Empty("layers"));
        };
        if last.n_out != 1 {
            return Err(CoadError::Precondition(
                "output layer must have one unit".into(),
            ));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return Err(CoadError::Precondition(format!(
                    "layer {k} has inconsistent shapes"
                )));
            }
            if k > 0 && layers[k - 1].n_out != l.n_in {
                return Err(CoadError::DimensionMismatch {
                    expected: layers[k - 1].n_out,
                    got: l.n_in,
                });
            }
        }
        Ok(Self { layers, seed })
    }

    pub fn layers(&self) -> &[Dense<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<F>] {
        &mut self.layers
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.layers[0].n_in];
        v.extend(self.layers.iter().map(|l| l.n_out));
        v
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Flat parameters: for each layer, weights then bias.
    pub fn params(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[F]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(CoadError::DimensionMismatch {
                expected: self.n_params(),
                got: flat.len(),
            });
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    pub fn trace(&self, x: &[F]) -> Result<Trace<F>> {
        if x.len() != self.input_dim() {
            return Err(CoadError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut inputs = vec![x.to_vec()];
        let mut hidden_pre = Vec::with_capacity(self.layers.len() - 1);
        let mut z = Vec::new();
        for l in &self.layers[..self.layers.len() - 1] {
            l.apply(inputs.last().unwrap(), &mut z);
            inputs.push(z.iter().map(|&v| v.max(F::zero())).collect());
            hidden_pre.push(z.clone());
        }
        self.layers
            .last()
            .unwrap()
            .apply(inputs.last().unwrap(), &mut z);
        let logit = z[0];
        Ok(Trace {
            inputs,
            hidden_pre,
            logit,
            prob: sigmoid(logit),
        })
    }

    pub fn logit(&self, x: &[F]) -> Result<F> {
        Ok(self.trace(x)?.logit)
    }

    pub fn forward(&self, x: &[F]) -> Result<F> {
        Ok(self.trace(x)?.prob)
    }

    /// Adds `d_logit · ∂logit/∂θ` into `grad` (flat layout of [`Mlp::params`]).
    pub fn backward(&self, trace: &Trace<F>, d_logit: F, grad: &mut [F]) {
        let offsets = self.offsets();
        let mut delta = vec![d_logit];
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let input = &trace.inputs[k];
            let at = offsets[k];
            for o in 0..l.n_out {
                let d = delta[o];
                if d == F::zero() {
                    continue;
                }
                let g = &mut grad[at + o * l.n_in..at + (o + 1) * l.n_in];
                for (gi, &xi) in g.iter_mut().zip(input) {
                    *gi = *gi + d * xi;
                }
                grad[at + l.weights.len() + o] = grad[at + l.weights.len() + o] + d;
            }
            if k == 0 {
                break;
            }
            let pre = &trace.hidden_pre[k - 1];
            let mut next = vec![F::zero(); l.n_in];
            for o in 0..l.n_out {
                let d = delta[o];
                if d == F::zero() {
                    continue;
                }
                let row = &l.weights[o * l.n_in..(o + 1) * l.n_in];
                for (nx, &w) in next.iter_mut().zip(row) {
                    *nx = *nx + d * w;
                }
            }
            for (nx, &p) in next.iter_mut().zip(pre) {
                if p <= F::zero() {
                    *nx = F::zero();
                }
            }
            delta = next;
        }
    }

    /// Start of each layer's block in the flat parameter vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut at = 0;
        self.layers
            .iter()
            .map(|l| {
                let o = at;
                at += l.n_params();
                o
            })
            .collect()
    }

    pub fn cast<G: Real>(&self) -> Mlp<G> {
        let c = |v: &[F]| v.iter().map(|&x| G::from(x).unwrap()).collect();
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weights: c(&l.weights),
                    bias: c(&l.bias),
                    n_in: l.n_in,
                    n_out: l.n_out,
                })
                .collect(),
            seed: self.seed,
        }
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(CoadError::Precondition(
            "layer sizes need an input and an output entry".into(),
        ));
    }
    if sizes.contains(&0) {
        return Err(CoadError::Precondition(
            "layer sizes must be positive".into(),
        ));
    }
    if *sizes.last().unwrap() != 1 {
        return Err(CoadError::Precondition(
            "output layer must have one unit".into(),
        ));
    }
    Ok(())
}

/// One network per view.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPair<F> {
    pub net_s: Mlp<F>,
    pub net_q: Mlp<F>,
    pub seed: u64,
}

impl<F: Real> MlpPair<F> {
    /// Both nets are initialised from one seeded stream, `s` first.
    pub fn new(sizes_s: &[usize], sizes_q: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            net_s: Mlp::with_rng(sizes_s, &mut rng, Some(seed))?,
            net_q: Mlp::with_rng(sizes_q, &mut rng, Some(seed))?,
            seed,
        })
    }

    /// `[d_s, 8, 8, 1]` and `[d_q, 8, 8, 1]`.
    pub fn default_arch(d_s: usize, d_q: usize, seed: u64) -> Result<Self> {
        Self::new(&[d_s, 8, 8, 1], &[d_q, 8, 8, 1], seed)
    }

    pub fn params(&self) -> (Vec<F>, Vec<F>) {
        (self.net_s.params(), self.net_q.params())
    }

    pub fn set_params(&mut self, s: &[F], q: &[F]) -> Result<()> {
        self.net_s.set_params(s)?;
        self.net_q.set_params(q)
    }

    pub fn cast<G: Real>(&self) -> MlpPair<G> {
        MlpPair {
            net_s: self.net_s.cast(),
            net_q: self.net_q.cast(),
            seed: self.seed,
        }
    }

    pub fn to_saved(&self) -> SavedModel {
        SavedModel {
            net_s: SavedNet::from_mlp(&self.net_s),
            net_q: SavedNet::from_mlp(&self.net_q),
            seed: self.seed,
            config: None,
        }
    }

    pub fn from_saved(saved: &SavedModel) -> Result<Self> {
        Ok(Self {
            net_s: saved.net_s.to_mlp(Some(saved.seed))?,
            net_q: saved.net_q.to_mlp(Some(saved.seed))?,
            seed: saved.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavedLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major, `n_out × n_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavedNet {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<SavedLayer>,
}

impl SavedNet {
    fn from_mlp<F: Real>(net: &Mlp<F>) -> Self {
        let n = net.layers.len();
        let f = |v: &[F]| v.iter().map(|x| x.to_f64().unwrap()).collect();
        Self {
            layer_sizes: net.layer_sizes(),
            layers: net
                .layers
                .iter()
                .enumerate()
                .map(|(k, l)| SavedLayer {
                    n_in: l.n_in,
                    n_out: l.n_out,
                    weights: f(&l.weights),
                    bias: f(&l.bias),
                    activation: if k + 1 == n { "sigmoid" } else { "relu" }.into(),
                })
                .collect(),
        }
    }

    fn to_mlp<F: Real>(&self, seed: Option<u64>) -> Result<Mlp<F>> {
        let n = self.layers.len();
        let mut layers = Vec::with_capacity(n);
        for (k, l) in self.layers.iter().enumerate() {
            let expected = if k + 1 == n { "sigmoid" } else { "relu" };
            if l.activation != expected {
                return Err(CoadError::Precondition(format!(
                    "layer {k}: activation {:?}, expected {expected:?}",
                    l.activation
                )));
            }
            let c = |v: &[f64]| v.iter().map(|&x| F::from(x).unwrap()).collect();
            layers.push(Dense {
                weights: c(&l.weights),
                bias: c(&l.bias),
                n_in: l.n_in,
                n_out: l.n_out,
            });
        }
        let net = Mlp::from_layers(layers, seed)?;
        if net.layer_sizes() != self.layer_sizes {
            return Err(CoadError::Precondition(
                "layer_sizes disagree with the stored layers".into(),
            ));
        }
        Ok(net)
    }
}

/// JSON-ready model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavedModel {
    pub net_s: SavedNet,
    pub net_q: SavedNet,
    pub seed: u64,
    #[serde(default)]
    pub config: Option<super::TrainConfig>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_outputs_half() {
        let net = Mlp::<f64>::zeros(&[3, 4, 1]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 5.0]).unwrap(), 0.5);
    }

    #[test]
    fn single_linear_layer_limits() {
        let net = Mlp::from_layers(
            vec![Dense {
                weights: vec![1.0f64],
                bias: vec![0.0],
                n_in: 1,
                n_out: 1,
            }],
            None,
        )
        .unwrap();
        assert_eq!(net.forward(&[0.0]).unwrap(), 0.5);
        assert!(net.forward(&[40.0]).unwrap() > 1.0 - 1e-15);
        assert!(net.forward(&[-800.0]).unwrap() >= 0.0);
        assert!(net.forward(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn params_round_trip() {
        let mut net = Mlp::<f64>::new(&[2, 3, 1], 4).unwrap();
        let p = net.params();
        assert_eq!(p.len(), 2 * 3 + 3 + 3 + 1);
        let shifted: Vec<f64> = p.iter().map(|v| v + 1.0).collect();
        net.set_params(&shifted).unwrap();
        assert_eq!(net.params(), shifted);
        assert!(net.set_params(&p[1..]).is_err());
    }

    #[test]
    fn glorot_bounds_and_seed() {
        let net = Mlp::<f64>::new(&[5, 7, 1], 9).unwrap();
        let a = (6.0f64 / 12.0).sqrt();
        assert!(net.layers()[0].weights.iter().all(|w| w.abs() <= a));
        assert_eq!(net, Mlp::new(&[5, 7, 1], 9).unwrap());
        assert_ne!(net, Mlp::new(&[5, 7, 1], 10).unwrap());
    }

    #[test]
    fn saved_model_round_trip() {
        let pair = MlpPair::<f64>::default_arch(2, 3, 1).unwrap();
        let back = MlpPair::<f64>::from_saved(&pair.to_saved()).unwrap();
        assert_eq!(back, pair);
        let mut bad = pair.to_saved();
        bad.net_s.layers[0].activation = "tanh".into();
        assert!(MlpPair::<f64>::from_saved(&bad).is_err());
    }
}
