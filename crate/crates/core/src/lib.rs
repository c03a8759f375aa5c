//! Multimodal fake-news detection at toy scale.
//!
//! Text, image-semantic and image-pattern branches are encoded separately,
//! refined by gated expert networks, adjusted with adaptive instance
//! normalisation driven by each branch's own coarse prediction, fused, and
//! finally decided by a rule-based veto vote that records why it decided.
//!
//! ```
//! use gamed_core::{generate, GamedModel, GenSpec, ModelConfig};
//!
//! let spec = GenSpec { n_train: 4, n_val: 2, n_test: 2, ..Default::default() };
//! let data = generate(&spec).unwrap();
//! let model = GamedModel::<f32>::new(ModelConfig::default(), 7).unwrap();
//! let out = model.predict(&data.test[0]).unwrap();
//! assert_eq!(out.vote.trace.steps.len(), 4);
//! ```

pub mod ablation;
pub mod encoders;
pub mod error;
pub mod jsonl;
pub mod metrics;
pub mod model;
pub mod moe;
pub mod nn;
pub mod record;
pub mod refine;
pub mod synthdata;
pub mod train;
pub mod veto;

pub use ablation::{run_ablation, AblationRow, AblationVariant};
pub use error::{GamedError, Result};
pub use jsonl::{read_jsonl, write_jsonl};
pub use metrics::Metrics;
pub use model::{compute_loss, AblationConfig, ForwardOutputs, FusionInput, GamedModel, ModelConfig};
pub use record::{Image, ModuleId, NewsRecord};
pub use synthdata::{generate, GenSpec, Splits};
pub use train::{evaluate, evaluate_report, train, EvalReport, TrainConfig, TrainLog};
pub use veto::{veto_vote, Rule, Rule3Mode, Thresholds, VoteInput, VoteOutcome, VoteTrace};
