//! Fair link prediction: dyadic-independence graph models trained with a
//! KL regularizer toward their information projection onto a fairness set.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod experiment;
pub mod fairness;
pub mod graph;
pub mod iprojection;
pub mod models;
pub mod numeric;
pub mod optim;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use fairness::{ConstraintSystem, Criterion};
pub use graph::{load_edge_list, split, DataSplit, Dataset, Graph, PairUniverse, SensitivePartition};
pub use models::{DyadicModel, Model, ModelKind};
pub use training::{train, TrainConfig, TrainOutcome};
