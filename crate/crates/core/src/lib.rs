//! Simulation side of the bridge-construction task: the planar block
//! simulator, the MDP wrapped around it, the width curriculum and the file
//! formats used to replay, render and export episodes.

pub mod blueprint;
pub mod curriculum;
pub mod env;
pub mod physics;
pub mod render;
pub mod replay;
