//! Geometric-mechanics gait design for planar limbless robots, including
//! locomotion that pushes off obstacles.

pub mod chain;
pub mod env;
pub mod error;
pub mod fields;
pub mod gait;
pub mod grid;
pub mod optimizer;
pub mod rft;
pub mod se2;
pub mod sim;

pub use chain::{
    basis_functions, link_frames, shape_to_joints, BodyVelocity, DragModel, FrameTag, JointVector, RobotSpec,
    ShapePoint,
};
pub use env::{Environment, Obstacle};
pub use error::{OalError, Result};
pub use gait::GaitSpec;
pub use grid::{ConnectionGrid, FieldGrid, Lattice, ScalarGrid, VectorGrid};
pub use rft::{
    net_wrench, segment_force, solve_connection, solve_connection_free, solve_connection_multi_obstacle,
    solve_connection_single_obstacle, ContactCondition, LocalConnection, ReactionRecord, Side,
};
pub use se2::Pose;
pub use sim::{run_scenario, SimConfig, SimMetrics};
