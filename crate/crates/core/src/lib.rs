//! Pressure-driven soft agents: physics, body, sensing, control, tasks and
//! the evolution strategy that trains them.

pub mod api;
pub mod cmaes;
pub mod control;
pub mod experiment;
pub mod gas;
pub mod morphology;
pub mod physics2d;
pub mod sensing;
pub mod tasks;
