//! Core library: geometry, numerics, field evolution, multiplier functionals
//! and scripted experiments for source-free Maxwell fields on the
//! Schwarzschild exterior.

pub mod experiments;
pub mod geometry;
pub mod maxwell;
pub mod multipliers;
pub mod numerics;
pub mod run;
pub mod verification;
