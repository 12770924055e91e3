//! Shared scenario builders for the benchmarks.

use eacc_core::channel::ChannelConfig;
use eacc_core::engine::ScenarioConfig;
use eacc_core::model::NodeId;

/// A stochastic four-device scenario with one receiver and three helpers,
/// sized so that every per-slot code path (sampling, enumeration, all four
/// controllers, queue updates, battery accounting) does real work.
pub fn busy_group(slots: u64) -> ScenarioConfig {
    let mut config = ScenarioConfig::with_defaults(4);
    config.channel = ChannelConfig::uniform(4, 0.8, 2.0, 0.9, 8.0);
    config.work_factor = vec![200.0; 4];
    config.receivers = vec![NodeId(0), NodeId(1)];
    config.slots = slots;
    config.seed = 11;
    config
}
