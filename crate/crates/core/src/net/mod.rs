//! Posterior mapping networks.
//!
//! A mapping network translates per-frame posterior distributions from one
//! model's class space into another's: three fully connected ReLU layers
//! followed by a softmax output. Training minimizes the KL divergence
//! between the target model's posteriors (soft targets) and the mapped
//! output. All arithmetic runs in f64; posteriorgram storage stays f32.

mod io;
mod train;

pub use io::{load_network, read_network, save_network, write_network};
pub use train::{train, EpochRecord, StopReason, TrainError, TrainingConfig, TrainingTrace};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::posterior::Posteriorgram;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("bad magic: expected \"MNW1\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("trailing data after parameter payload")]
    TrailingData,
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One fully connected layer: `weights` is fan_in x fan_out, applied as
/// `z = a @ weights + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Feed-forward posterior mapping network: three hidden ReLU layers, then a
/// softmax output over the target class space.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingNetwork {
    pub source_lang: String,
    pub target_lang: String,
    /// Four layers: hidden x3 (ReLU) then output (softmax).
    pub layers: Vec<Layer>,
}

impl MappingNetwork {
    /// Initializes with uniform weights in ±sqrt(6/(fan_in+fan_out)) and zero
    /// biases, deterministically from `seed`.
    pub fn init(
        source_lang: impl Into<String>,
        target_lang: impl Into<String>,
        source_dim: usize,
        hidden_dims: [usize; 3],
        target_dim: usize,
        seed: u64,
    ) -> Self {
        let dims = [
            source_dim,
            hidden_dims[0],
            hidden_dims[1],
            hidden_dims[2],
            target_dim,
        ];
        assert!(
            dims.iter().all(|&d| d > 0),
            "all layer widths must be positive, got {dims:?}"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_fn((fan_in, fan_out), |_| {
                    rng.random_range(-limit..limit)
                });
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self {
            source_lang: source_lang.into(),
            target_lang: target_lang.into(),
            layers,
        }
    }

    pub fn source_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn target_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.ncols()
    }

    pub fn hidden_dims(&self) -> [usize; 3] {
        [
            self.layers[0].weights.ncols(),
            self.layers[1].weights.ncols(),
            self.layers[2].weights.ncols(),
        ]
    }

    /// All layer widths, input first: `[d_source, h1, h2, h3, d_target]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.source_dim()];
        d.extend(self.layers.iter().map(|l| l.weights.ncols()));
        d
    }

    /// Maps a batch of B source-space rows to B target-space distributions.
    /// A zero-row batch yields a zero-row output.
    pub fn forward(&self, batch: &Array2<f64>) -> Result<Array2<f64>, NetError> {
        Ok(self.forward_cached(batch)?.output)
    }

    fn forward_cached(&self, batch: &Array2<f64>) -> Result<ForwardCache, NetError> {
        if batch.ncols() != self.source_dim() {
            return Err(NetError::DimensionMismatch {
                expected: self.source_dim(),
                found: batch.ncols(),
            });
        }
        let n_layers = self.layers.len();
        let mut activations = Vec::with_capacity(n_layers);
        let mut pre_relu = Vec::with_capacity(n_layers - 1);
        let mut a = batch.clone();
        for layer in &self.layers[..n_layers - 1] {
            let z = a.dot(&layer.weights) + &layer.bias;
            pre_relu.push(z.clone());
            activations.push(a);
            a = z.mapv(|v| v.max(0.0));
        }
        let out_layer = &self.layers[n_layers - 1];
        let z = a.dot(&out_layer.weights) + &out_layer.bias;
        activations.push(a);
        let output = softmax_rows(&z);
        Ok(ForwardCache {
            activations,
            pre_relu,
            output,
        })
    }

    /// Gradient of [`kl_loss`] (the batch sum) with respect to every weight
    /// and bias. The softmax/KL combination gives the output pre-activation
    /// gradient `mapped_row - target_row` directly, so no generic softmax
    /// Jacobian is formed.
    pub fn backward(
        &self,
        batch: &Array2<f64>,
        target_rows: &Array2<f64>,
    ) -> Result<Gradients, NetError> {
        if target_rows.ncols() != self.target_dim() {
            return Err(NetError::DimensionMismatch {
                expected: self.target_dim(),
                found: target_rows.ncols(),
            });
        }
        if target_rows.nrows() != batch.nrows() {
            return Err(NetError::DimensionMismatch {
                expected: batch.nrows(),
                found: target_rows.nrows(),
            });
        }
        let cache = self.forward_cached(batch)?;

        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        // delta = dL/dz for the layer currently being processed.
        let mut delta = &cache.output - target_rows;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let a_in = &cache.activations[l];
            grads.push(LayerGrad {
                weights: a_in.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if l > 0 {
                let upstream = delta.dot(&layer.weights.t());
                delta = upstream * cache.pre_relu[l - 1].mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Maps one posteriorgram into the target class space, preserving the
    /// utterance id and frame count.
    pub fn map_posteriorgram(&self, pg: &Posteriorgram) -> Result<Posteriorgram, NetError> {
        if pg.dim() != self.source_dim() {
            return Err(NetError::DimensionMismatch {
                expected: self.source_dim(),
                found: pg.dim(),
            });
        }
        let x = pg.frames.mapv(f64::from);
        let y = self.forward(&x)?;
        Ok(Posteriorgram {
            utterance_id: pg.utterance_id.clone(),
            lang: self.target_lang.clone(),
            frames: y.mapv(|v| v as f32),
        })
    }

    /// Flattens all parameters in serialization order: per layer, weights
    /// row-major then bias.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            out.extend(layer.weights.iter().copied());
            out.extend(layer.bias.iter().copied());
        }
        out
    }

    /// Inverse of [`flatten_params`]; panics if the length disagrees with the
    /// topology.
    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params(), "parameter count mismatch");
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut() {
                *w = params[offset];
                offset += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = params[offset];
                offset += 1;
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// True iff every parameter is finite.
    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }
}

struct ForwardCache {
    /// Input to each layer: `activations[l]` feeds `layers[l]`.
    activations: Vec<Array2<f64>>,
    /// Pre-ReLU values of the hidden layers.
    pre_relu: Vec<Array2<f64>>,
    /// Softmax rows.
    output: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    /// Same flattening order as [`MappingNetwork::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.weights.iter().copied());
            out.extend(layer.bias.iter().copied());
        }
        out
    }
}

/// Row-wise stable softmax.
fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Batch KL divergence between rows of `target_rows` (the reference) and
/// `mapped_rows` (the network output), summed over rows:
/// `sum_n sum_k t * (ln max(t, eps) - ln max(m, eps))`.
///
/// Nonnegative up to float noise; zero when the rows agree entry-wise.
pub fn kl_loss(
    target_rows: &Array2<f64>,
    mapped_rows: &Array2<f64>,
    epsilon_floor: f64,
) -> Result<f64, NetError> {
    if target_rows.dim() != mapped_rows.dim() {
        return Err(NetError::DimensionMismatch {
            expected: target_rows.ncols(),
            found: mapped_rows.ncols(),
        });
    }
    let mut sum = 0.0f64;
    for (&t, &m) in target_rows.iter().zip(mapped_rows.iter()) {
        // f64::max(NaN, eps) silently yields eps, so reject non-finite input
        // explicitly rather than letting it launder through the clamp.
        if !t.is_finite() || !m.is_finite() {
            return Err(NetError::NonFinite(format!(
                "kl_loss input holds target={t}, mapped={m}"
            )));
        }
        sum += t * (t.max(epsilon_floor).ln() - m.max(epsilon_floor).ln());
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn tiny_net(seed: u64) -> MappingNetwork {
        MappingNetwork::init("src", "tgt", 4, [5, 6, 5], 3, seed)
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = tiny_net(7);
        let b = tiny_net(7);
        let c = tiny_net(8);
        assert_eq!(a.flatten_params(), b.flatten_params());
        assert_ne!(a.flatten_params(), c.flatten_params());
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_respects_glorot_limits() {
        let net = tiny_net(3);
        for layer in &net.layers {
            let limit = (6.0 / (layer.weights.nrows() + layer.weights.ncols()) as f64).sqrt();
            assert!(layer.weights.iter().all(|&w| w.abs() < limit));
        }
    }

    #[test]
    fn forward_rows_are_distributions() {
        let net = tiny_net(1);
        let batch = Array2::from_elem((9, 4), 0.25f64);
        let out = net.forward(&batch).unwrap();
        assert_eq!(out.dim(), (9, 3));
        for row in out.rows() {
            let sum: f64 = row.sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn forward_empty_batch_is_empty() {
        let net = tiny_net(1);
        let out = net.forward(&Array2::zeros((0, 4))).unwrap();
        assert_eq!(out.dim(), (0, 3));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = tiny_net(1);
        assert!(matches!(
            net.forward(&Array2::zeros((2, 5))),
            Err(NetError::DimensionMismatch {
                expected: 4,
                found: 5
            })
        ));
    }

    #[test]
    fn kl_of_identical_rows_is_zero() {
        let p = array![[0.5f64, 0.5], [0.1, 0.9]];
        let kl = kl_loss(&p, &p, 1e-10).unwrap();
        assert!(kl.abs() <= 1e-12);
    }

    #[test]
    fn kl_matches_hand_values() {
        // One-hot target against uniform: ln 2.
        let t = array![[1.0f64, 0.0]];
        let m = array![[0.5f64, 0.5]];
        let kl = kl_loss(&t, &m, 1e-10).unwrap();
        assert_abs_diff_eq!(kl, std::f64::consts::LN_2, epsilon = 1e-9);

        // Two such rows: the batch sum doubles.
        let t2 = array![[1.0f64, 0.0], [1.0, 0.0]];
        let m2 = array![[0.5f64, 0.5], [0.5, 0.5]];
        let kl2 = kl_loss(&t2, &m2, 1e-10).unwrap();
        assert_abs_diff_eq!(kl2, 2.0 * std::f64::consts::LN_2, epsilon = 1e-9);
    }

    #[test]
    fn kl_rejects_non_finite_and_shape_mismatch() {
        let t = array![[f64::NAN, 1.0]];
        let m = array![[0.5f64, 0.5]];
        assert!(matches!(kl_loss(&t, &m, 1e-10), Err(NetError::NonFinite(_))));
        let t3 = array![[0.2f64, 0.3, 0.5]];
        assert!(matches!(
            kl_loss(&t3, &m, 1e-10),
            Err(NetError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn backward_zero_when_output_equals_target() {
        let net = tiny_net(5);
        let batch = Array2::from_elem((3, 4), 0.25f64);
        let out = net.forward(&batch).unwrap();
        let grads = net.backward(&batch, &out).unwrap();
        for g in grads.flatten() {
            assert!(g.abs() < 1e-12, "gradient component {g} should vanish");
        }
    }

    #[test]
    fn batch_gradient_is_sum_of_row_gradients() {
        let net = tiny_net(11);
        let batch = array![[0.7f64, 0.1, 0.1, 0.1], [0.25, 0.25, 0.25, 0.25]];
        let targets = array![[0.2f64, 0.3, 0.5], [1.0, 0.0, 0.0]];
        let full = net.backward(&batch, &targets).unwrap().flatten();
        let r0 = net
            .backward(
                &batch.slice(ndarray::s![0..1, ..]).to_owned(),
                &targets.slice(ndarray::s![0..1, ..]).to_owned(),
            )
            .unwrap()
            .flatten();
        let r1 = net
            .backward(
                &batch.slice(ndarray::s![1..2, ..]).to_owned(),
                &targets.slice(ndarray::s![1..2, ..]).to_owned(),
            )
            .unwrap()
            .flatten();
        for ((f, a), b) in full.iter().zip(r0.iter()).zip(r1.iter()) {
            assert_abs_diff_eq!(*f, a + b, epsilon = 1e-12);
        }
    }

    /// Smallest |pre-activation| over all hidden units for this batch. A
    /// value near zero means a finite-difference probe could cross the ReLU
    /// kink, where central differences stop estimating the derivative.
    fn kink_margin(net: &MappingNetwork, batch: &Array2<f64>) -> f64 {
        let cache = net.forward_cached(batch).unwrap();
        cache
            .pre_relu
            .iter()
            .flat_map(|z| z.iter())
            .fold(f64::INFINITY, |m, &z| m.min(z.abs()))
    }

    /// Central finite differences of the loss surface against the analytic
    /// gradients, on several random small cases. Draws whose hidden
    /// pre-activations sit within 10x the probe step of the ReLU kink are
    /// redrawn: the loss is not differentiable there, so the comparison
    /// would be meaningless.
    #[test]
    fn gradients_match_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(901);
        let step = 1e-4;
        let eps = 1e-10;
        let mut checked = 0usize;
        let mut draw = 0u64;
        while checked < 5 {
            assert!(draw < 100, "too many kink-adjacent draws");
            let d_in = rng.random_range(2..=6);
            let d_out = rng.random_range(2..=6);
            let h = rng.random_range(2..=5);
            let b = rng.random_range(1..=4);
            let mut net = MappingNetwork::init("s", "t", d_in, [h, h, h], d_out, 1000 + draw);
            draw += 1;
            let batch = random_rows(&mut rng, b, d_in);
            let targets = random_rows(&mut rng, b, d_out);
            if kink_margin(&net, &batch) < 10.0 * step {
                continue;
            }
            checked += 1;

            let analytic = net.backward(&batch, &targets).unwrap().flatten();
            let mut params = net.flatten_params();
            for i in 0..params.len() {
                let orig = params[i];
                params[i] = orig + step;
                net.set_params(&params);
                let up = kl_loss(&targets, &net.forward(&batch).unwrap(), eps).unwrap();
                params[i] = orig - step;
                net.set_params(&params);
                let down = kl_loss(&targets, &net.forward(&batch).unwrap(), eps).unwrap();
                params[i] = orig;
                let fd = (up - down) / (2.0 * step);
                let denom = analytic[i].abs().max(fd.abs()).max(1e-8);
                assert!(
                    (analytic[i] - fd).abs() / denom < 1e-4,
                    "draw {}, param {i}: analytic {} vs fd {fd}",
                    draw - 1,
                    analytic[i]
                );
            }
            net.set_params(&params);
        }
    }

    fn random_rows(rng: &mut impl rand::Rng, n: usize, d: usize) -> Array2<f64> {
        let mut m = Array2::zeros((n, d));
        for mut row in m.rows_mut() {
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = rng.random_range(0.01..1.0);
                sum += *v;
            }
            row.mapv_inplace(|v| v / sum);
        }
        m
    }

    #[test]
    fn map_posteriorgram_preserves_shape_and_id() {
        let net = tiny_net(2);
        let pg = Posteriorgram::new("utt7", "src", Array2::from_elem((25, 4), 0.25f32)).unwrap();
        let out = net.map_posteriorgram(&pg).unwrap();
        assert_eq!(out.utterance_id, "utt7");
        assert_eq!(out.lang, "tgt");
        assert_eq!(out.n_frames(), 25);
        assert_eq!(out.dim(), 3);
        out.validate_rows().unwrap();
    }

    #[test]
    fn flatten_set_round_trip() {
        let mut net = tiny_net(9);
        let params = net.flatten_params();
        let mut shifted = params.clone();
        for v in &mut shifted {
            *v += 0.125;
        }
        net.set_params(&shifted);
        assert_eq!(net.flatten_params(), shifted);
        net.set_params(&params);
        assert_eq!(net.flatten_params(), params);
    }
}
