//! Ray geometry of the sound-speed metric g = c⁻²·(dx² + dy²) on the disk.

pub mod flow;
pub mod probe;
pub mod speed;

pub use flow::{boundary_mu, exit_time, flow, trace, Direction, ExitInfo, FlowOptions, GeodesicPath, PhasePoint};
pub use probe::{
    convexity_constant, phase_volume, santalo_fan_integral, simplicity_check, ConjugatePoint,
    SimplicityReport,
};
pub use speed::{curvature, SpeedField, SpeedModel};
