//! Shared fixtures for the benchmarks.

use mbes_core::synth::generate_survey;
use mbes_core::{prepare_split, Patch, Preset};

/// First normalized test patch of the desk preset, with the preset itself.
pub fn desk_patch() -> (Patch, Preset) {
    let mut preset = Preset::desk();
    preset.test.sensor.pings = 32;
    let survey = generate_survey(&preset.test).expect("desk survey");
    let split = prepare_split(&survey, None).expect("desk patches");
    (split.normalized[0].clone(), preset)
}
