//! Homogenized stiffness of periodic triangulated shells.
//!
//! A [`UnitCell`] describes one period of a discrete shell: a 2D lattice, nodes
//! with planar position and elevation, and bars that may wrap into
//! neighbouring copies. From it the crate builds the linearized bar
//! elongation map under a macroscopic membrane/bending strain
//! ([`assembly`]), condenses out the periodic corrections to obtain the 6×6
//! effective tensor ([`effective`]), and studies the kernel of that tensor:
//! the macroscopic isometric deformations of the shell ([`analysis`]).
//!
//! [`optimize`] lowers the trace of the membrane block by moving nodal
//! elevations, and [`oracle`] holds dense reference implementations used to
//! cross-check the main code path.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod assembly;
pub mod cell;
pub mod effective;
mod error;
pub mod optimize;
pub mod oracle;

pub use analysis::{KernelReport, SymplecticJ};
pub use assembly::{assemble, ElongationSystem, MacroStrain};
pub use cell::{Bar, Lattice, Node, UnitCell};
pub use effective::{effective_tensor, EffectiveTensor};
pub use error::{Error, Result};
