//! Effective dynamics of trapped Bose gases at positive temperature.
//!
//! The crate builds ideal-gas thermal initial data in a power-law trap,
//! propagates the Hartree–Fock–Bogoliubov (HFB), Hartree and free reference
//! dynamics on periodic grids, and measures conservation laws, positivity,
//! diluteness and closeness of the dynamics. A truncated doubled Fock space
//! realizes the Weyl/Bogoliubov operator algebra for exact algebraic checks.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod fock;
pub mod grid;
pub mod hartree;
pub mod heat_kernel;
pub mod hfb;
pub mod interaction;
pub mod scalar;
pub mod spectral;
pub mod thermal;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::{Cplx, Real};

pub type Grid = grid::Grid<f64>;
pub type Field = grid::Field<f64>;
pub type TrapSpec = grid::TrapSpec<f64>;
pub type SpectralData = spectral::SpectralData<f64>;
