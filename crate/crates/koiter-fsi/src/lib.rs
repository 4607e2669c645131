//! Desk-scale simulator and verification library for a 3D incompressible
//! fluid coupled to a nonlinear Koiter shell.
//!
//! The library is organized around the constructive scheme for the coupled
//! problem: the deformed fluid domain is pulled back to a fixed reference
//! box by an ALE map built in tubular coordinates ([`geometry`]), the shell
//! elasticity is the nonlinear Koiter energy with exact closed-form Fréchet
//! derivatives ([`shell`]), boundary data is lifted into the moving domain
//! by a divergence-free extension operator repaired with a discrete
//! Bogovskiĭ solve ([`extension`]), and time stepping is a Lie/Marchuk–
//! Yanenko splitting whose structure sub-step uses Simpson-exact discrete
//! derivatives so that the discrete energy is non-increasing by algebra,
//! not by luck ([`solver`]).
//!
//! The shell/geometry/discrete cores are generic over the scalar type via
//! [`real::Real`] (implemented for `f32` and `f64`); the fluid solver and
//! I/O layers are concrete `f64`. Type aliases for the common `f64`
//! instantiations are exported at the crate root.

pub mod real;
pub mod discrete;
pub mod geometry;
pub mod shell;
pub mod extension;
pub mod solver;
pub mod io;
pub mod validation;

pub use real::Real;

/// `f64` periodic grid over the shell parameter domain ω.
pub type Grid2 = discrete::PeriodicGrid2D<f64>;
/// `f64` scalar field over ω.
pub type Field2 = discrete::ScalarField2D<f64>;
/// `f64` symmetric 2×2 tensor field over ω.
pub type TensorField2 = shell::SymTensor2Field<f64>;
/// `f64` reference surface.
pub type Surface = geometry::ReferenceSurface<f64>;
/// `f64` tubular chart.
pub type Chart = geometry::TubularChart<f64>;
/// `f64` shell model.
pub type Shell = shell::ShellModel<f64>;
