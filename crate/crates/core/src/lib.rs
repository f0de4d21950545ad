//! Lagrangian 2D Euler with bounded vorticity and velocity growing at infinity.

pub mod error;
pub mod fields;
pub mod flow;
pub mod geom;
pub mod growth_bounds;
pub mod kernel;
pub mod quadrature;
pub mod serfati;
pub mod stability;

pub use error::{Error, Result};
pub use geom::Vec2;
pub use growth_bounds::{GrowthBound, Tier};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
