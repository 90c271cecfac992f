//! Deep neighborhood learning for WiFi fingerprint indoor positioning.
//!
//! A target scan's `k` nearest fingerprints in Manhattan signal space form a
//! local community. The community becomes a heterogeneous graph of
//! fingerprint and WAP nodes joined by RSS-weighted edges, and a small graph
//! isomorphism network regresses the target position from it. KNN and WKNN
//! baselines, error statistics and a log-distance radio-map generator are
//! included for benchmarking.
//!
//! | module | contents |
//! |---|---|
//! | [`fingerprint`] | datasets, WAP index, RSS vectors, 6:2:2 split |
//! | [`neighborhood`] | Manhattan distance, neighbor selection, KNN/WKNN |
//! | [`graph`] | community graphs and normalization |
//! | [`nn`] | tensors, layers, GIN aggregation, Adam, plateau schedule |
//! | [`model`] | the positioning network, training, checkpoints |
//! | [`eval`] | MAE/RMSE/CDF reports |
//! | [`synth`] | synthetic radio maps and label outliers |
//! | [`pipeline`] | per-floor baseline and model runs over a split |
//! | [`cli`] | the `dnl` command line |

pub mod cli;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod graph;
pub mod model;
pub mod neighborhood;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use eval::{compute_report, ErrorReport};
pub use fingerprint::{DatasetSplit, Fingerprint, Position, WapIndex};
pub use graph::{build_graph, CommunityGraph, NormalizationParams};
pub use model::{DnlModel, TrainingConfig};
pub use neighborhood::{knn_predict, select_neighbors, wknn_predict, LocalCommunity};
