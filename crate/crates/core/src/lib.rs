//! Web usage mining over access logs: sessionization, fuzzy URL/session
//! weighting, and fuzzy c-means clustering of sessions with Xie–Beni based
//! selection of the cluster count.

pub mod artifacts;
pub mod clustering;
pub mod config;
pub mod fixture;
pub mod logparse;
pub mod pipeline;
pub mod sessionize;
pub mod validity;
pub mod weighting;

pub use clustering::{run_fcm, run_hcm, ClusterError, Dataset, DistanceMode, FcmConfig, FcmState, HcmConfig, WeightedPoints};
pub use config::{ConfigError, PipelineConfig};
pub use logparse::{clean, parse_log, CleaningReport, CleaningRules, Dialect, LogEntry};
pub use pipeline::PipelineError;
pub use sessionize::{sessionize, UserId, UserSession, Vocabulary};
pub use validity::{sweep, xie_beni, SweepConfig, SweepResult};
pub use weighting::{assign_weights_and_reduce, build_matrix, ReductionReport, SessionMatrix, WeightConfig};
