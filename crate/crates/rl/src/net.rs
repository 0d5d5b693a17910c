//! Fully connected Q-network with rectified-linear hidden layers, plain SGD,
//! and hand-derived backprop. Generic over f32/f64: training runs in f32,
//! numerical verification in f64.

use ndarray::{Array1, Array2, Axis, NdFloat};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub trait Scalar: NdFloat + num_traits::FromPrimitive + num_traits::ToPrimitive {
    fn of(x: f64) -> Self {
        num_traits::FromPrimitive::from_f64(x).expect("finite f64 converts")
    }
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork<F> {
    pub dims: Vec<usize>,
    /// Layer weights, `[in, out]` orientation.
    pub weights: Vec<Array2<F>>,
    pub biases: Vec<Array1<F>>,
}

#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub weights: Vec<Array2<F>>,
    pub biases: Vec<Array1<F>>,
}

impl<F: Scalar> QNetwork<F> {
    /// Uniform fan-in initialization: U(-1/sqrt(n_in), 1/sqrt(n_in)).
    /// Weights are drawn as f64 so f32 and f64 nets share a realization.
    pub fn init(dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((n_in, n_out), |_| {
                F::of(rng.gen_range(-bound..bound))
            }));
            biases.push(Array1::zeros(n_out));
        }
        QNetwork { dims: dims.to_vec(), weights, biases }
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    /// Batched forward pass. Hidden layers are rectified; the output layer is
    /// affine.
    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let mut a = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(w) + b;
            if l + 1 < self.layer_count() {
                z.mapv_inplace(|v| v.max(F::zero()));
            }
            a = z;
        }
        a
    }

    /// Action values for a single state.
    pub fn q_values(&self, state: &[F]) -> Vec<F> {
        assert_eq!(state.len(), self.dims[0]);
        assert!(
            self.weights.iter().all(|w| w.iter().all(|v| v.is_finite())),
            "non-finite network parameter"
        );
        let x = Array2::from_shape_vec((1, state.len()), state.to_vec()).expect("shape");
        self.forward(&x).row(0).to_vec()
    }

    /// Forward pass keeping post-activation values per layer for backprop.
    fn forward_cached(&self, x: &Array2<F>) -> Vec<Array2<F>> {
        let mut acts = vec![x.clone()];
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w) + b;
            if l + 1 < self.layer_count() {
                z.mapv_inplace(|v| v.max(F::zero()));
            }
            acts.push(z);
        }
        acts
    }

    /// Mean squared TD error against fixed targets.
    pub fn td_loss(&self, states: &Array2<F>, actions: &[u8], targets: &[F]) -> F {
        let q = self.forward(states);
        let n = F::of(actions.len() as f64);
        let mut sum = F::zero();
        for (i, (a, tgt)) in actions.iter().zip(targets).enumerate() {
            let err = q[(i, *a as usize)] - *tgt;
            sum = sum + err * err;
        }
        sum / n
    }

    /// Gradient of `td_loss` with respect to every parameter, plus the loss.
    pub fn td_gradients(
        &self,
        states: &Array2<F>,
        actions: &[u8],
        targets: &[F],
    ) -> (Gradients<F>, F) {
        let n = actions.len();
        let scale = F::of(2.0 / n as f64);
        let acts = self.forward_cached(states);
        let q = acts.last().expect("output layer");

        let mut loss = F::zero();
        let mut delta: Array2<F> = Array2::zeros(q.raw_dim());
        for (i, (a, tgt)) in actions.iter().zip(targets).enumerate() {
            let err = q[(i, *a as usize)] - *tgt;
            loss = loss + err * err;
            delta[(i, *a as usize)] = scale * err;
        }
        loss = loss / F::of(n as f64);

        let l_count = self.layer_count();
        let mut d_weights = vec![Array2::zeros((0, 0)); l_count];
        let mut d_biases = vec![Array1::zeros(0); l_count];
        for l in (0..l_count).rev() {
            d_weights[l] = acts[l].t().dot(&delta);
            d_biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                // ReLU derivative; zero where the activation was clamped
                back.zip_mut_with(&acts[l], |g, a| {
                    if *a <= F::zero() {
                        *g = F::zero();
                    }
                });
                delta = back;
            }
        }
        (Gradients { weights: d_weights, biases: d_biases }, loss)
    }

    /// In-place SGD step.
    pub fn apply_gradients(&mut self, grads: &Gradients<F>, learning_rate: F) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.zip_mut_with(g, |w, g| *w = *w - learning_rate * *g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.zip_mut_with(g, |b, g| *b = *b - learning_rate * *g);
        }
    }

    pub fn to_f64(&self) -> QNetwork<f64> {
        QNetwork {
            dims: self.dims.clone(),
            weights: self.weights.iter().map(|w| w.mapv(|v| v.as_f64())).collect(),
            biases: self.biases.iter().map(|b| b.mapv(|v| v.as_f64())).collect(),
        }
    }
}

/// Adam moment estimates for one network.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m_w: Vec<Array2<F>>,
    v_w: Vec<Array2<F>>,
    m_b: Vec<Array1<F>>,
    v_b: Vec<Array1<F>>,
    step: i32,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(net: &QNetwork<F>) -> Self {
        AdamState {
            m_w: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            step: 0,
        }
    }

    /// One Adam step (beta1 0.9, beta2 0.999, eps 1e-8).
    pub fn apply(&mut self, net: &mut QNetwork<F>, grads: &Gradients<F>, learning_rate: F) {
        let b1 = F::of(0.9);
        let b2 = F::of(0.999);
        let eps = F::of(1e-8);
        self.step += 1;
        let corr1 = F::one() - F::of(0.9f64.powi(self.step));
        let corr2 = F::one() - F::of(0.999f64.powi(self.step));
        let one = F::one();
        for l in 0..net.weights.len() {
            let (m, v) = (&mut self.m_w[l], &mut self.v_w[l]);
            m.zip_mut_with(&grads.weights[l], |m, g| *m = b1 * *m + (one - b1) * *g);
            v.zip_mut_with(&grads.weights[l], |v, g| *v = b2 * *v + (one - b2) * *g * *g);
            ndarray::Zip::from(&mut net.weights[l]).and(&*m).and(&*v).for_each(|w, m, v| {
                *w = *w - learning_rate * (*m / corr1) / ((*v / corr2).sqrt() + eps);
            });
            let (m, v) = (&mut self.m_b[l], &mut self.v_b[l]);
            m.zip_mut_with(&grads.biases[l], |m, g| *m = b1 * *m + (one - b1) * *g);
            v.zip_mut_with(&grads.biases[l], |v, g| *v = b2 * *v + (one - b2) * *g * *g);
            ndarray::Zip::from(&mut net.biases[l]).and(&*m).and(&*v).for_each(|b, m, v| {
                *b = *b - learning_rate * (*m / corr1) / ((*v / corr2).sqrt() + eps);
            });
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint tensor shape mismatch")]
    Shape,
}

/// Versioned JSON tensor dump with a layer-dims header.
#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

pub fn save_checkpoint<F: Scalar>(net: &QNetwork<F>, path: &Path) -> Result<(), CheckpointError> {
    let file = CheckpointFile {
        version: 1,
        dims: net.dims.clone(),
        weights: net.weights.iter().map(|w| w.iter().map(|v| v.as_f64()).collect()).collect(),
        biases: net.biases.iter().map(|b| b.iter().map(|v| v.as_f64()).collect()).collect(),
    };
    std::fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<QNetwork<F>, CheckpointError> {
    let file: CheckpointFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.version != 1 {
        return Err(CheckpointError::Version(file.version));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (i, w) in file.dims.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let flat = file.weights.get(i).ok_or(CheckpointError::Shape)?;
        if flat.len() != n_in * n_out {
            return Err(CheckpointError::Shape);
        }
        weights.push(
            Array2::from_shape_vec((n_in, n_out), flat.iter().map(|v| F::of(*v)).collect())
                .map_err(|_| CheckpointError::Shape)?,
        );
        let b = file.biases.get(i).ok_or(CheckpointError::Shape)?;
        if b.len() != n_out {
            return Err(CheckpointError::Shape);
        }
        biases.push(Array1::from_vec(b.iter().map(|v| F::of(*v)).collect()));
    }
    Ok(QNetwork { dims: file.dims, weights, biases })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_return_biases() {
        let mut net: QNetwork<f64> = QNetwork::init(&[6, 4, 2], 0);
        for w in &mut net.weights {
            w.fill(0.0);
        }
        net.biases[1][0] = 0.25;
        net.biases[1][1] = -0.5;
        let q = net.q_values(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0]);
        assert_eq!(q, vec![0.25, -0.5]);
    }

    #[test]
    fn forward_is_deterministic() {
        let net: QNetwork<f64> = QNetwork::init(&[6, 8, 2], 7);
        let s = [0.5, 0.25, 0.0, 0.0, 0.4, 0.1];
        assert_eq!(net.q_values(&s), net.q_values(&s));
    }

    #[test]
    fn forward_matches_layer_by_layer_hand_computation() {
        // 2-neuron-wide shrunk net, computed with explicit loops.
        let net: QNetwork<f64> = QNetwork::init(&[6, 2, 2], 21);
        let s = [1.5, -0.25, 0.75, 2.0, -1.0, 0.5];
        let mut hidden = [0.0f64; 2];
        for j in 0..2 {
            let mut z = net.biases[0][j];
            for i in 0..6 {
                z += s[i] * net.weights[0][(i, j)];
            }
            hidden[j] = z.max(0.0);
        }
        let mut out = [0.0f64; 2];
        for j in 0..2 {
            let mut z = net.biases[1][j];
            for i in 0..2 {
                z += hidden[i] * net.weights[1][(i, j)];
            }
            out[j] = z;
        }
        let got = net.q_values(&s);
        // the matmul kernel may accumulate in a different order than the
        // naive loops; anything beyond reassociation noise is a real bug
        for (g, o) in got.iter().zip(&out) {
            assert!((g - o).abs() <= 1e-14 * o.abs().max(1.0), "got {g}, oracle {o}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let net: QNetwork<f32> = QNetwork::init(&[6, 16, 2], 3);
        let dir = std::env::temp_dir().join("buslab-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.json");
        save_checkpoint(&net, &path).unwrap();
        let back: QNetwork<f32> = load_checkpoint(&path).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        // 6-8-8-2 net; relative error under 1e-4 elementwise.
        let net: QNetwork<f64> = QNetwork::init(&[6, 8, 8, 2], 99);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let states = Array2::from_shape_fn((n, 6), |_| rng.gen_range(-1.0..1.0));
        let actions: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (grads, _) = net.td_gradients(&states, &actions, &targets);

        let h = 1e-5;
        let mut checked = 0;
        for layer in 0..net.layer_count() {
            for idx in 0..net.weights[layer].len() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                {
                    let w = plus.weights[layer].as_slice_mut().unwrap();
                    w[idx] += h;
                }
                {
                    let w = minus.weights[layer].as_slice_mut().unwrap();
                    w[idx] -= h;
                }
                let fd = (plus.td_loss(&states, &actions, &targets)
                    - minus.td_loss(&states, &actions, &targets))
                    / (2.0 * h);
                let g = grads.weights[layer].as_slice().unwrap()[idx];
                let denom = g.abs().max(fd.abs()).max(1e-6);
                assert!(
                    ((g - fd) / denom).abs() < 1e-4,
                    "layer {layer} idx {idx}: analytic {g} vs fd {fd}"
                );
                checked += 1;
            }
            for idx in 0..net.biases[layer].len() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                plus.biases[layer][idx] += h;
                minus.biases[layer][idx] -= h;
                let fd = (plus.td_loss(&states, &actions, &targets)
                    - minus.td_loss(&states, &actions, &targets))
                    / (2.0 * h);
                let g = grads.biases[layer][idx];
                let denom = g.abs().max(fd.abs()).max(1e-6);
                assert!(
                    ((g - fd) / denom).abs() < 1e-4,
                    "bias layer {layer} idx {idx}: analytic {g} vs fd {fd}"
                );
                checked += 1;
            }
        }
        assert!(checked > 100);
    }
}
