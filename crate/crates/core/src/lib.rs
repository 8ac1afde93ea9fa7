//! Joint beamforming, power-splitting and RIS design for multiuser MISO
//! SWIPT downlinks assisted by an active (or passive) reconfigurable
//! intelligent surface.
//!
//! The crate is organised bottom-up:
//!
//! * [`scene`] – scenario constants, geometry, Rician channels, CSI errors.
//! * [`eh`] – the nonlinear energy-harvesting model and its inverse.
//! * [`metrics`] – SINR / harvested power / reflect power evaluation.
//! * [`conic`] – a Hermitian SDP interface backed by a primal-dual
//!   interior-point solver, plus rank-one extraction.
//! * [`bf_stage`] – beamformer and PS-ratio design for a fixed RIS.
//! * [`ris_stage`] – penalty/SCA design of the RIS for fixed beamformers.
//! * [`bcd`] – the alternating driver, benchmark schemes and sweeps.
//! * [`config`] – the TOML scenario file format.

pub mod bcd;
pub mod bf_stage;
pub mod config;
pub mod conic;
pub mod eh;
pub mod metrics;
pub mod ris_stage;
pub mod scene;
pub mod seeds;

pub use num_complex::Complex64;

/// Complex column vector used throughout the crate.
pub type CVector = nalgebra::DVector<Complex64>;
/// Complex dense matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
