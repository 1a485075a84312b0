//! Asymptotics of the viscous force and torque on a particle moving near a
//! fixed one, driven by the flow in the thin neck between them.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod jet;
pub mod quad;
pub mod specfun;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{FluidParams, Mode, ModeField, PathAnchor, RigidMotion};
pub use geometry::{GapGeometry, NeckPoint};
