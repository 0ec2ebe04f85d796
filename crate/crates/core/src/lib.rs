//! Cross-lingual acoustic-model posterior fusion.
//!
//! Monolingual acoustic models emit, per speech frame, a posterior
//! distribution over their own tied-state class inventory. Inventories differ
//! per language, so the distributions are not directly comparable. This crate
//! provides the pieces needed to fuse them anyway:
//!
//! - [`posterior`] / [`inventory`] / [`pgm`] — the posteriorgram data model,
//!   class inventories and bit-exact file I/O.
//! - [`net`] — regression mapping networks that translate posteriors from a
//!   source inventory into a target inventory, trained with a KL-divergence
//!   loss.
//! - [`fusion`] — convex weighted fusion of target and mapped posteriors, in
//!   multilingual and cross-lingual modes, with entropy/accuracy based weight
//!   derivation.
//! - [`metrics`] — frame accuracy, top-n accuracy, entropy, a greedy frame
//!   decoder and phoneme error rate.
//! - [`synth`] — seeded synthetic multilingual corpora with known latent
//!   ground truth, plus a Bayes-optimal class-mapping oracle that upper
//!   bounds what any trained mapping network can achieve.

pub mod fusion;
pub mod inventory;
pub mod metrics;
pub mod net;
pub mod pgm;
pub mod posterior;
pub mod seed;
pub mod synth;

pub use fusion::{FusionMode, SimilarityTable, WeightVector};
pub use inventory::ClassInventory;
pub use metrics::EvalReport;
pub use net::{MappingNetwork, TrainingConfig, TrainingTrace};
pub use posterior::{LabelSequence, Posteriorgram};
pub use synth::{SynthConfig, SynthCorpus};
