//! Scenario builders shared by the benchmarks.

use d2dcache::experiments::{Scenario, ScenarioConfig};

/// The preset network with `users` users and `files` files.
pub fn preset(users: usize, files: usize, seed: u64) -> Scenario {
    let mut c = ScenarioConfig {
        num_ue: users,
        ..ScenarioConfig::default()
    };
    c.network.file_count = files;
    c.build(seed).expect("preset scenario")
}

/// Three users, one SBS, four files and two channels.
pub fn tiny(seed: u64) -> Scenario {
    let mut c = ScenarioConfig {
        num_ue: 3,
        num_sbs: 1,
        ..ScenarioConfig::default()
    };
    c.network.file_count = 4;
    c.network.num_channels = 2;
    c.network.mbs_cache_bits = 200.0;
    c.network.cell_radius = 60.0;
    c.network.sbs_radius = 40.0;
    c.build(seed).expect("tiny scenario")
}
