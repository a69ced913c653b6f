//! Seeded synthetic models of the fingertip's two sensing channels and of
//! the rigs used to exercise them.

mod fingertip;
mod vibration;

pub use fingertip::{
    simulate_indentation, Branch, FingertipModel, IndentStep, Indentation, PlanarForce,
    RigTrajectory,
};
pub use vibration::{
    default_material_profiles, synthesize_cup_slide, synthesize_shaking, synthesize_sliding,
    BoxContent, MaterialProfile, CUP_BURST_GAIN, CUP_BURST_S, MATERIAL_BAND_EDGES_HZ,
    REFERENCE_SLIDE_SPEED, SHAKE_NOISE_FLOOR, Z_LOG_RATE_HZ,
};
