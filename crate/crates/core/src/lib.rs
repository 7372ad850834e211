//! Multi-sample determinization replanning for ground robots in partially
//! known, noisily sensed terrain.

pub mod bench;
pub mod planner;
pub mod policies;
pub mod sampling;
pub mod sensing;
pub mod simulator;
pub mod world;
