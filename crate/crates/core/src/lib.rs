//! Safe model predictive control for urban driving: vehicle models, terminal
//! ingredient synthesis, pedestrian reachability, collision constraints, a
//! sparse interior-point QP solver, an SQP real-time-iteration controller and
//! a closed-loop simulator.

pub mod geometry;
pub mod models;
pub mod terminal;
pub mod reference;
pub mod qp;
pub mod pedestrians;
pub mod constraints;
pub mod ocp;
pub mod sim;
