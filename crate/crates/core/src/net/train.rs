//! Mini-batch training of a mapping network.
//!
//! Plain SGD with momentum on the KL objective, frame pairs shuffled per
//! epoch with a seeded generator, early stopping on dev KL, and restoration
//! of the best-dev-KL parameters. Everything is single-threaded and
//! deterministic: the same seed and inputs yield bit-identical traces and
//! parameters.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{kl_loss, MappingNetwork, NetError};
use crate::posterior::{frame_align_check, Posteriorgram};
use crate::seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Frames per gradient step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    /// Number of consecutive epochs without dev-KL improvement tolerated
    /// before stopping. 0 stops on the first non-improving epoch.
    pub patience: usize,
    pub seed: u64,
    /// Probability floor applied before logs.
    pub epsilon_floor: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            learning_rate: 1e-2,
            momentum: 0.9,
            max_epochs: 50,
            patience: 5,
            seed: 42,
            epsilon_floor: 1e-10,
        }
    }
}

/// Per-epoch snapshot; the KL values are per-frame means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train_kl: f64,
    pub dev_kl: f64,
    pub dev_top1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// 1-based epoch whose parameters were returned; 0 when no epoch ran.
    pub best_epoch: usize,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no aligned frames in the training set")]
    NoAlignedFrames,
    #[error("no aligned frames in the dev set")]
    NoDevFrames,
    #[error("utterance {utt}: source and target posteriorgrams are not frame-aligned")]
    AlignMismatch { utt: String },
    #[error("utterance sets are not paired: {0}")]
    PairMismatch(String),
    #[error("training diverged at epoch {epoch}: non-finite loss or parameters")]
    Divergence { epoch: usize, trace: TrainingTrace },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Stacks paired utterance sets into aligned frame matrices (source rows,
/// target rows), pairing by utterance id and requiring the id sets to match.
fn stack_pairs(
    net: &MappingNetwork,
    source_set: &[Posteriorgram],
    target_set: &[Posteriorgram],
) -> Result<(Array2<f64>, Array2<f64>), TrainError> {
    if source_set.len() != target_set.len() {
        return Err(TrainError::PairMismatch(format!(
            "{} source vs {} target utterances",
            source_set.len(),
            target_set.len()
        )));
    }
    let mut by_id: std::collections::BTreeMap<&str, &Posteriorgram> = target_set
        .iter()
        .map(|pg| (pg.utterance_id.as_str(), pg))
        .collect();
    let total: usize = source_set.iter().map(Posteriorgram::n_frames).sum();
    let mut x = Array2::zeros((total, net.source_dim()));
    let mut y = Array2::zeros((total, net.target_dim()));
    let mut row = 0;
    for src in source_set {
        let tgt = by_id.remove(src.utterance_id.as_str()).ok_or_else(|| {
            TrainError::PairMismatch(format!(
                "source utterance {:?} has no target counterpart",
                src.utterance_id
            ))
        })?;
        if !frame_align_check(src, tgt) {
            return Err(TrainError::AlignMismatch {
                utt: src.utterance_id.clone(),
            });
        }
        if src.dim() != net.source_dim() {
            return Err(NetError::DimensionMismatch {
                expected: net.source_dim(),
                found: src.dim(),
            }
            .into());
        }
        if tgt.dim() != net.target_dim() {
            return Err(NetError::DimensionMismatch {
                expected: net.target_dim(),
                found: tgt.dim(),
            }
            .into());
        }
        for t in 0..src.n_frames() {
            for (c, &v) in src.frames.row(t).iter().enumerate() {
                x[(row, c)] = f64::from(v);
            }
            for (c, &v) in tgt.frames.row(t).iter().enumerate() {
                y[(row, c)] = f64::from(v);
            }
            row += 1;
        }
    }
    Ok((x, y))
}

/// Mean dev KL per frame and dev top-1 accuracy.
fn dev_metrics(
    net: &MappingNetwork,
    dev_x: &Array2<f64>,
    dev_y: &Array2<f64>,
    eps: f64,
) -> Result<(f64, f64), NetError> {
    let out = net.forward(dev_x)?;
    let kl = kl_loss(dev_y, &out, eps)? / dev_x.nrows() as f64;
    let mut hits = 0usize;
    for (o, t) in out.rows().into_iter().zip(dev_y.rows()) {
        let oi = crate::metrics::argmax(o.iter().copied());
        let ti = crate::metrics::argmax(t.iter().copied());
        if oi == ti {
            hits += 1;
        }
    }
    Ok((kl, hits as f64 / dev_x.nrows() as f64))
}

/// Trains `net` on paired posteriorgram sets, evaluating on a disjoint dev
/// pair set each epoch. Returns the parameters of the best-dev-KL epoch and
/// the full trace. With `max_epochs == 0` the network is returned as
/// initialized, with an empty trace.
pub fn train(
    mut net: MappingNetwork,
    train_source: &[Posteriorgram],
    train_target: &[Posteriorgram],
    dev_source: &[Posteriorgram],
    dev_target: &[Posteriorgram],
    cfg: &TrainingConfig,
) -> Result<(MappingNetwork, TrainingTrace), TrainError> {
    assert!(cfg.batch_size >= 1, "batch_size must be >= 1");
    assert!(
        cfg.epsilon_floor > 0.0 && cfg.epsilon_floor <= 1e-6,
        "epsilon_floor must lie in (0, 1e-6]"
    );

    let (x, y) = stack_pairs(&net, train_source, train_target)?;
    if x.nrows() == 0 {
        return Err(TrainError::NoAlignedFrames);
    }
    let (dev_x, dev_y) = stack_pairs(&net, dev_source, dev_target)?;
    if dev_x.nrows() == 0 {
        return Err(TrainError::NoDevFrames);
    }

    let n = x.nrows();
    let mut velocity = vec![0.0f64; net.n_params()];
    let mut best_params = net.flatten_params();
    let mut best_dev_kl = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut stall = 0usize;
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    let mut indices: Vec<usize> = (0..n).collect();
    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(cfg.seed, epoch as u64));
        indices.shuffle(&mut rng);

        let mut train_kl_sum = 0.0f64;
        for chunk in indices.chunks(cfg.batch_size) {
            let bx = gather_rows(&x, chunk);
            let by = gather_rows(&y, chunk);
            let out = net.forward(&bx)?;
            // A NaN/inf loss means the parameters have blown up: report that
            // as divergence rather than as a generic numeric error.
            let batch_loss = match kl_loss(&by, &out, cfg.epsilon_floor) {
                Ok(l) => l,
                Err(NetError::NonFinite(_)) => {
                    return Err(diverged(epoch, epochs, best_epoch));
                }
                Err(e) => return Err(e.into()),
            };
            if !batch_loss.is_finite() {
                return Err(diverged(epoch, epochs, best_epoch));
            }
            train_kl_sum += batch_loss;

            let grads = net.backward(&bx, &by)?;
            let flat = grads.flatten();
            let scale = cfg.learning_rate / chunk.len() as f64;
            let mut params = net.flatten_params();
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(flat.iter()) {
                *v = cfg.momentum * *v - scale * g;
                *p += *v;
            }
            net.set_params(&params);
        }
        if !net.params_finite() {
            return Err(diverged(epoch, epochs, best_epoch));
        }

        let (dev_kl, dev_top1) = match dev_metrics(&net, &dev_x, &dev_y, cfg.epsilon_floor) {
            Ok(m) => m,
            Err(NetError::NonFinite(_)) => {
                return Err(diverged(epoch, epochs, best_epoch));
            }
            Err(e) => return Err(e.into()),
        };
        if !dev_kl.is_finite() {
            return Err(diverged(epoch, epochs, best_epoch));
        }
        epochs.push(EpochRecord {
            train_kl: train_kl_sum / n as f64,
            dev_kl,
            dev_top1,
        });

        if dev_kl < best_dev_kl {
            best_dev_kl = dev_kl;
            best_params = net.flatten_params();
            best_epoch = epoch;
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.patience && stall >= 1 {
                stop_reason = StopReason::EarlyStopping;
                break;
            }
        }
    }

    net.set_params(&best_params);
    Ok((
        net,
        TrainingTrace {
            epochs,
            stop_reason,
            best_epoch,
        },
    ))
}

fn diverged(epoch: usize, epochs: Vec<EpochRecord>, best_epoch: usize) -> TrainError {
    TrainError::Divergence {
        epoch,
        trace: TrainingTrace {
            epochs,
            stop_reason: StopReason::Diverged,
            best_epoch,
        },
    }
}

fn gather_rows(m: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), m.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&m.row(r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Random sharply peaked posteriorgrams, each frame concentrated on a
    /// random class, so the identity map is learnable and top-1 is crisp.
    fn peaked_set(n_utts: usize, frames: usize, d: usize, seed: u64) -> Vec<Posteriorgram> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_utts)
            .map(|u| {
                let mut m = Array2::from_elem((frames, d), 0.02f32 / (d - 1) as f32);
                for t in 0..frames {
                    let c = rng.random_range(0..d);
                    m[(t, c)] = 0.98;
                }
                Posteriorgram::new(format!("utt{u:03}"), "x", m).unwrap()
            })
            .collect()
    }

    fn small_cfg(seed: u64) -> TrainingConfig {
        TrainingConfig {
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            max_epochs: 8,
            patience: 3,
            seed,
            epsilon_floor: 1e-10,
        }
    }

    #[test]
    fn zero_epochs_returns_initial_net() {
        let set = peaked_set(2, 30, 5, 1);
        let net = MappingNetwork::init("x", "x", 5, [8, 8, 8], 5, 77);
        let before = net.flatten_params();
        let cfg = TrainingConfig {
            max_epochs: 0,
            ..small_cfg(1)
        };
        let (out, trace) = train(net, &set, &set, &set, &set, &cfg).unwrap();
        assert_eq!(out.flatten_params(), before);
        assert!(trace.epochs.is_empty());
        assert_eq!(trace.stop_reason, StopReason::MaxEpochs);
        assert_eq!(trace.best_epoch, 0);
    }

    #[test]
    fn identity_task_reaches_high_dev_top1() {
        let train_set = peaked_set(4, 400, 6, 10);
        let dev_set = peaked_set(2, 150, 6, 11);
        let net = MappingNetwork::init("x", "x", 6, [16, 16, 16], 6, 5);
        let (_, trace) = train(net, &train_set, &train_set, &dev_set, &dev_set, &small_cfg(3))
            .unwrap();
        let last = trace.epochs.last().unwrap();
        assert!(
            last.dev_top1 >= 0.99,
            "dev top-1 stuck at {}",
            last.dev_top1
        );
        // Best dev KL at the returned epoch does not exceed epoch 1's.
        let best = &trace.epochs[trace.best_epoch - 1];
        assert!(best.dev_kl <= trace.epochs[0].dev_kl + 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let train_set = peaked_set(3, 100, 5, 20);
        let dev_set = peaked_set(1, 60, 5, 21);
        let run = || {
            let net = MappingNetwork::init("x", "x", 5, [8, 8, 8], 5, 9);
            train(net, &train_set, &train_set, &dev_set, &dev_set, &small_cfg(4)).unwrap()
        };
        let (n1, t1) = run();
        let (n2, t2) = run();
        assert_eq!(n1.flatten_params(), n2.flatten_params());
        assert_eq!(t1, t2);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let dev = peaked_set(1, 10, 4, 2);
        let net = MappingNetwork::init("x", "x", 4, [4, 4, 4], 4, 0);
        assert!(matches!(
            train(net, &[], &[], &dev, &dev, &small_cfg(0)),
            Err(TrainError::NoAlignedFrames)
        ));
    }

    #[test]
    fn unpaired_utterances_are_an_error() {
        let a = peaked_set(2, 10, 4, 3);
        let mut b = peaked_set(2, 10, 4, 3);
        b[1].utterance_id = "other".into();
        let net = MappingNetwork::init("x", "x", 4, [4, 4, 4], 4, 0);
        assert!(matches!(
            train(net, &a, &b, &a, &a, &small_cfg(0)),
            Err(TrainError::PairMismatch(_))
        ));
    }

    #[test]
    fn misaligned_frames_are_an_error() {
        let a = peaked_set(1, 10, 4, 3);
        let mut b = peaked_set(1, 11, 4, 4);
        b[0].utterance_id = a[0].utterance_id.clone();
        let net = MappingNetwork::init("x", "x", 4, [4, 4, 4], 4, 0);
        assert!(matches!(
            train(net, &a, &b, &a, &a, &small_cfg(0)),
            Err(TrainError::AlignMismatch { .. })
        ));
    }

    #[test]
    fn absurd_learning_rate_reports_divergence() {
        let set = peaked_set(2, 50, 5, 6);
        let net = MappingNetwork::init("x", "x", 5, [8, 8, 8], 5, 1);
        let cfg = TrainingConfig {
            learning_rate: 1e80,
            max_epochs: 10,
            ..small_cfg(2)
        };
        match train(net, &set, &set, &set, &set, &cfg) {
            Err(TrainError::Divergence { epoch, trace }) => {
                assert!(epoch >= 1);
                assert_eq!(trace.stop_reason, StopReason::Diverged);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn early_stopping_fires_on_plateau() {
        // Learning rate 0 cannot improve dev KL, so epoch 1 sets the best and
        // patience expires immediately after.
        let set = peaked_set(2, 40, 4, 8);
        let net = MappingNetwork::init("x", "x", 4, [4, 4, 4], 4, 2);
        let cfg = TrainingConfig {
            learning_rate: 0.0,
            max_epochs: 30,
            patience: 2,
            ..small_cfg(5)
        };
        let (_, trace) = train(net, &set, &set, &set, &set, &cfg).unwrap();
        assert_eq!(trace.stop_reason, StopReason::EarlyStopping);
        assert_eq!(trace.epochs.len(), 3);
        assert_eq!(trace.best_epoch, 1);
    }
}
