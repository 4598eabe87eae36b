//! Reference model presets and the particle validator.

pub mod particles;
pub mod presets;

pub use particles::{histogram, l1_distance, simulate_particles, ParticleConfig, ParticleEnsemble};
pub use presets::{make_preset, PresetName};
