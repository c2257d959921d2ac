//! Pore-scale dispersivity laboratory.
//!
//! Simulates stationary flow and tracer transport in fully periodic 2D pore
//! geometries, volume-averages the fields to extract optimal dispersivity
//! parameters (alpha_L, alpha_T), characterizes geometries with a fixed
//! 21-entry metrics vector, and trains small from-scratch neural regressors
//! that predict dispersivities from images or metrics.

pub mod container;
pub mod flow;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod transport;
pub mod upscaling;
pub mod vec2;

pub use geometry::PoreImage;
pub use vec2::Vec2;
