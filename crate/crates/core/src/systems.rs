//! Bundled system definitions.

use crate::system::SlowFastSystem;

pub const DUFFING_JSON: &str = include_str!("../../../systems/duffing.json");

pub fn duffing() -> SlowFastSystem {
    SlowFastSystem::from_json_str(DUFFING_JSON).expect("bundled duffing.json is valid")
}

pub const SEIR_JSON: &str = include_str!("../../../systems/seir_transformed.json");

/// Transformed SEIR system at the measles-like default rates and noise 5e-4.
pub fn seir_transformed() -> SlowFastSystem {
    SlowFastSystem::from_json_str(SEIR_JSON).expect("bundled seir_transformed.json is valid")
}
