//! Inputs shared by the benchmarks.

use sessionlens_core::config::PipelineConfig;
use sessionlens_core::fixture::{generate, FixtureConfig};
use sessionlens_core::pipeline::{self, Weighed};

/// Log text with `profiles` planted navigation profiles of 30 sessions each.
pub fn fixture_log(profiles: usize) -> String {
    generate(&FixtureConfig { profiles, ..FixtureConfig::default() }).log
}

/// Raw and reduced matrices of the fixture log.
pub fn fixture_matrices(profiles: usize) -> Weighed {
    let cfg = PipelineConfig::default();
    let pre = pipeline::preprocess_text(&fixture_log(profiles), &cfg).expect("fixture parses");
    pipeline::weigh(&pre.sessions, &pre.vocabulary, &cfg).expect("fixture survives reduction")
}
