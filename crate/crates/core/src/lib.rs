//! Indoor RIS placement and codebook-based hybrid beamforming simulator.

pub mod beamforming;
pub mod channel;
pub mod harness;
pub mod placement;
pub mod protocol;
pub mod scene;
