//! Numerical workbench for weighted local potential theory on uniform grids
//! in one and two dimensions.

pub mod capacity;
pub mod choquet;
pub mod error;
pub mod field;
pub mod grid;
pub mod maximal;
pub mod potentials;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
pub use field::{cube_average, cube_mass, DiscreteMeasure, Field, PrefixIntegral, PrefixSum};
pub use grid::{enumerate_cubes, make_grid, CubeLattice, CubePolicy, CubeSpec, Grid, LogTimeGrid};
