//! Post-disaster reconstruction planning.
//!
//! The crate models a damaged city as reconstruction items (buildings and
//! road segments), scores ordered reconstruction plans by the social benefit
//! they deliver over a planning horizon, checks them against budget, time,
//! political-priority and physical-dependency constraints, and searches for
//! good plans with reinforcement-learning agents over successive
//! reconstruction cycles.

pub mod agents;
pub mod bench;
pub mod city;
pub mod constraints;
pub mod instance;
pub mod metrics;
pub mod neural;
pub mod planner;
